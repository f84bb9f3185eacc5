//! Golden render of a context slice from the bundled corpus, plus the
//! prompt assembled on top of it. Pins the exact text reviewers and the
//! scripted backend both key on.

use grev_core::analyzer::{analyze_tree, RuleRegistry};
use grev_core::context::{build_call_graph, extract_context, render_slice, ContextConfig};
use grev_core::prompting::{build_prompt, PromptTemplates};
use std::path::PathBuf;

fn corpus_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus/mini")
}

#[test]
fn goto_slice_renders_to_golden_text() {
    let root = corpus_root();
    let graph = build_call_graph(&root).unwrap();
    let config = ContextConfig { budget_tokens: 400, window_k: 15, max_names: 8 };
    let slice = extract_context(
        &graph,
        &root,
        "legacy.c",
        grev_core::model::LineSpan::new(34, 34),
        &config,
    )
    .unwrap();

    // The fn-pointer call `op()` is honestly reported as a callee; blank
    // source lines keep the trailing space after the gutter pipe.
    let golden = "// file: legacy.c lines 34-34 fn legacy_retry\n\
// callees: op\n\
\u{20}      26 | int legacy_retry(int (*op)(void), int max) {\n\
\u{20}      27 |     int tries = 0;\n\
\u{20}      28 |     int rc;\n\
\u{20}      29 | \n\
\u{20}      30 | again:\n\
\u{20}      31 |     rc = op();\n\
\u{20}      32 |     if (rc != 0 && tries < max) {\n\
\u{20}      33 |         tries = tries + 1;\n\
>>>    34 |         goto again;\n\
\u{20}      35 |     }\n\
\u{20}      36 |     return rc;\n\
\u{20}      37 | }\n";
    assert_eq!(render_slice(&slice), golden);
    assert!(!slice.truncated);
}

#[test]
fn prompt_substitutes_every_section_once() {
    let root = corpus_root();
    let registry = RuleRegistry::builtin();
    let run = analyze_tree(&root, &registry).unwrap();
    let finding = run
        .findings
        .iter()
        .find(|f| f.rule_id == "MC-1")
        .expect("corpus has the goto finding");
    let graph = build_call_graph(&root).unwrap();
    let slice = extract_context(
        &graph,
        &root,
        &finding.file,
        finding.span(),
        &ContextConfig::default(),
    )
    .unwrap();
    let rule = &registry.rules["MC-1"];
    let prompt = build_prompt(&PromptTemplates::builtin(), rule, finding, &slice);

    for heading in ["## Role", "## Rule", "## Finding", "## Snippet", "## Output contract", "## Guardrails"] {
        assert_eq!(
            prompt.text.matches(heading).count(),
            1,
            "heading {heading} not exactly once"
        );
    }
    assert!(!prompt.text.contains("{{"), "unsubstituted placeholder:\n{}", prompt.text);
    assert!(prompt.text.contains("goto statement"));
    assert!(prompt.text.contains("Allowed citation lines: "));
    assert!(prompt.text.contains("Patchable file: legacy.c"));
    assert!(prompt.snippet_lines.contains(&34));
    assert_eq!(prompt.prompt_hash.len(), 64);

    // Same inputs, same bytes, same hash: the serving job identity.
    let again = build_prompt(&PromptTemplates::builtin(), rule, finding, &slice);
    assert_eq!(prompt.prompt_hash, again.prompt_hash);
    assert_eq!(prompt.text, again.text);
}
