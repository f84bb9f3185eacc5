//! Lexical scanner for C-like sources.
//!
//! The rule analyzer and the call-graph builder both work on this token
//! stream rather than an AST: comments and string/char literals can never
//! produce findings, brace matching is enough to bound compound statements
//! and function bodies, and the whole thing stays deterministic and fast.
//!
//! Intentional simplifications, shared by every consumer:
//! - multi-char operators are emitted as single punct tokens (`->` is `-`,
//!   `>`), which none of the rules care about;
//! - preprocessor lines produce tokens flagged `pp`, and only the
//!   banned-call rule looks at them;
//! - a `while` immediately preceded by `}` is treated as a do-while trailer.

/// Token kind. Literal text is kept for identifiers and numbers; string and
/// char literals keep only their delimiters' line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    Ident,
    Number,
    Str,
    CharLit,
    Punct,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    pub text: String,
    /// 1-based source line of the token's first char.
    pub line: u32,
    /// Token appears on a preprocessor line.
    pub pp: bool,
}

impl Token {
    pub fn is_punct(&self, ch: char) -> bool {
        self.kind == TokKind::Punct && self.text.len() == 1 && self.text.starts_with(ch)
    }

    pub fn is_ident(&self, word: &str) -> bool {
        self.kind == TokKind::Ident && self.text == word
    }
}

const KEYWORDS: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let bytes: Vec<char> = text.chars().collect();
    let mut toks = Vec::new();
    let mut i = 0usize;
    let mut line: u32 = 1;
    let mut at_line_start = true;
    let mut pp = false;

    while i < bytes.len() {
        let c = bytes[i];
        match c {
            '\n' => {
                // A preprocessor line extends across backslash-newline.
                let continued = i > 0 && bytes[i - 1] == '\\';
                if !continued {
                    pp = false;
                    at_line_start = true;
                }
                line += 1;
                i += 1;
            }
            ' ' | '\t' | '\r' => {
                i += 1;
            }
            '#' if at_line_start => {
                pp = true;
                at_line_start = false;
                toks.push(Token { kind: TokKind::Punct, text: "#".into(), line, pp });
                i += 1;
            }
            '/' if i + 1 < bytes.len() && bytes[i + 1] == '/' => {
                while i < bytes.len() && bytes[i] != '\n' {
                    i += 1;
                }
            }
            '/' if i + 1 < bytes.len() && bytes[i + 1] == '*' => {
                i += 2;
                while i < bytes.len() {
                    if bytes[i] == '\n' {
                        line += 1;
                    } else if bytes[i] == '*' && i + 1 < bytes.len() && bytes[i + 1] == '/' {
                        i += 2;
                        break;
                    }
                    i += 1;
                }
            }
            '"' | '\'' => {
                let quote = c;
                let start_line = line;
                i += 1;
                while i < bytes.len() {
                    let d = bytes[i];
                    if d == '\\' {
                        i += 2;
                        continue;
                    }
                    if d == '\n' {
                        line += 1; // unterminated literal; keep scanning
                    }
                    i += 1;
                    if d == quote {
                        break;
                    }
                }
                at_line_start = false;
                toks.push(Token {
                    kind: if quote == '"' { TokKind::Str } else { TokKind::CharLit },
                    text: String::new(),
                    line: start_line,
                    pp,
                });
            }
            _ if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit()) => {
                let start = i;
                i += 1;
                while i < bytes.len() {
                    let d = bytes[i];
                    let prev = bytes[i - 1];
                    let exp_sign = (d == '+' || d == '-')
                        && matches!(prev, 'e' | 'E' | 'p' | 'P');
                    if d.is_ascii_alphanumeric() || d == '_' || d == '.' || exp_sign {
                        i += 1;
                    } else {
                        break;
                    }
                }
                at_line_start = false;
                toks.push(Token {
                    kind: TokKind::Number,
                    text: bytes[start..i].iter().collect(),
                    line,
                    pp,
                });
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == '_') {
                    i += 1;
                }
                at_line_start = false;
                toks.push(Token {
                    kind: TokKind::Ident,
                    text: bytes[start..i].iter().collect(),
                    line,
                    pp,
                });
            }
            _ => {
                at_line_start = false;
                toks.push(Token { kind: TokKind::Punct, text: c.to_string(), line, pp });
                i += 1;
            }
        }
    }
    toks
}

/// Index of the token matching an opening delimiter at `open_idx`
/// (e.g. `(` -> `)`), honoring nesting. `None` when unbalanced.
pub fn match_forward(toks: &[Token], open_idx: usize, open: char, close: char) -> Option<usize> {
    let mut depth = 0usize;
    for (k, t) in toks.iter().enumerate().skip(open_idx) {
        if t.is_punct(open) {
            depth += 1;
        } else if t.is_punct(close) {
            depth -= 1;
            if depth == 0 {
                return Some(k);
            }
        }
    }
    None
}

// === per-line classification (for comment elision in context slices) ===

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Blank,
    Comment,
    Code,
}

/// Classify every line: `Comment` when the line carries comment text and no
/// code (lines wholly inside a block comment count, even empty ones),
/// `Blank` for whitespace-only lines, `Code` otherwise.
pub fn classify_lines(text: &str) -> Vec<LineKind> {
    let mut kinds = Vec::new();
    let mut in_block = false;
    for raw in text.split('\n') {
        let chars: Vec<char> = raw.chars().collect();
        let mut saw_code = false;
        let mut saw_comment = in_block;
        let mut j = 0usize;
        let mut in_str: Option<char> = None;
        while j < chars.len() {
            let c = chars[j];
            if in_block {
                if c == '*' && j + 1 < chars.len() && chars[j + 1] == '/' {
                    in_block = false;
                    j += 2;
                    continue;
                }
                j += 1;
                continue;
            }
            if let Some(q) = in_str {
                if c == '\\' {
                    j += 2;
                    continue;
                }
                if c == q {
                    in_str = None;
                }
                j += 1;
                continue;
            }
            match c {
                ' ' | '\t' | '\r' => j += 1,
                '/' if j + 1 < chars.len() && chars[j + 1] == '/' => {
                    saw_comment = true;
                    break;
                }
                '/' if j + 1 < chars.len() && chars[j + 1] == '*' => {
                    saw_comment = true;
                    in_block = true;
                    j += 2;
                }
                '"' | '\'' => {
                    saw_code = true;
                    in_str = Some(c);
                    j += 1;
                }
                _ => {
                    saw_code = true;
                    j += 1;
                }
            }
        }
        kinds.push(if saw_code {
            LineKind::Code
        } else if saw_comment {
            LineKind::Comment
        } else {
            LineKind::Blank
        });
    }
    kinds
}

// === function boundaries ===

/// A function definition located by the brace-matching heuristic:
/// identifier + parameter list + `{` at file scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FnDef {
    pub name: String,
    /// Line of the defining identifier.
    pub sig_line: u32,
    pub open_line: u32,
    pub close_line: u32,
    /// Half-open token index range of the body (between the braces).
    pub body_tokens: (usize, usize),
}

impl FnDef {
    pub fn span(&self) -> crate::model::LineSpan {
        crate::model::LineSpan::new(self.sig_line, self.close_line)
    }

    pub fn line_count(&self) -> u32 {
        self.close_line - self.sig_line + 1
    }
}

/// Scan top-level function definitions. Declarations (`;` after the
/// parameter list), initializers, and nested braces are skipped; trailing
/// attribute-style parenthesized groups between the parameter list and the
/// body are tolerated.
pub fn scan_functions(toks: &[Token]) -> Vec<FnDef> {
    let mut defs = Vec::new();
    let mut depth = 0usize;
    let mut i = 0usize;
    while i < toks.len() {
        let t = &toks[i];
        if t.pp {
            i += 1;
            continue;
        }
        if t.is_punct('{') {
            depth += 1;
            i += 1;
            continue;
        }
        if t.is_punct('}') {
            depth = depth.saturating_sub(1);
            i += 1;
            continue;
        }
        if depth == 0
            && t.kind == TokKind::Ident
            && !is_keyword(&t.text)
            && i + 1 < toks.len()
            && toks[i + 1].is_punct('(')
        {
            if let Some(close_paren) = match_forward(toks, i + 1, '(', ')') {
                // Skip identifiers and attribute groups between `)` and `{`.
                let mut k = close_paren + 1;
                loop {
                    if k >= toks.len() {
                        break;
                    }
                    if toks[k].kind == TokKind::Ident {
                        k += 1;
                    } else if toks[k].is_punct('(') {
                        match match_forward(toks, k, '(', ')') {
                            Some(end) => k = end + 1,
                            None => break,
                        }
                    } else {
                        break;
                    }
                }
                if k < toks.len() && toks[k].is_punct('{') {
                    if let Some(close_brace) = match_forward(toks, k, '{', '}') {
                        defs.push(FnDef {
                            name: t.text.clone(),
                            sig_line: t.line,
                            open_line: toks[k].line,
                            close_line: toks[close_brace].line,
                            body_tokens: (k + 1, close_brace),
                        });
                        i = close_brace + 1;
                        continue;
                    }
                }
            }
        }
        i += 1;
    }
    defs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_strings_produce_no_idents() {
        let toks = tokenize("int a; // goto here\nchar *s = \"goto\"; /* goto */\n");
        assert!(!toks.iter().any(|t| t.is_ident("goto")));
        assert!(toks.iter().any(|t| t.kind == TokKind::Str));
    }

    #[test]
    fn preprocessor_tokens_are_flagged() {
        let toks = tokenize("#define COPY(d) strcpy(d, src)\nint x;\n");
        let strcpy = toks.iter().find(|t| t.is_ident("strcpy")).unwrap();
        assert!(strcpy.pp);
        let x = toks.iter().find(|t| t.is_ident("x")).unwrap();
        assert!(!x.pp);
    }

    #[test]
    fn numbers_keep_their_text() {
        let toks = tokenize("a = 0755; b = 0x1F; c = 1.5e-3;");
        let nums: Vec<&str> = toks
            .iter()
            .filter(|t| t.kind == TokKind::Number)
            .map(|t| t.text.as_str())
            .collect();
        assert_eq!(nums, vec!["0755", "0x1F", "1.5e-3"]);
    }

    #[test]
    fn line_numbers_survive_multiline_comments() {
        let toks = tokenize("/* one\ntwo\nthree */\nint y;\n");
        let y = toks.iter().find(|t| t.is_ident("y")).unwrap();
        assert_eq!(y.line, 4);
    }

    #[test]
    fn classify_lines_table() {
        let text = "int a;\n// note\n\n/* start\n\nend */\nint b; // trailing\n";
        let kinds = classify_lines(text);
        assert_eq!(
            &kinds[..7],
            &[
                LineKind::Code,
                LineKind::Comment,
                LineKind::Blank,
                LineKind::Comment,
                LineKind::Comment,
                LineKind::Comment,
                LineKind::Code,
            ]
        );
    }

    #[test]
    fn scan_finds_definitions_not_declarations() {
        let src = "\
int add(int a, int b);\n\
int add(int a, int b) {\n\
    return a + b;\n\
}\n\
static void helper(void) {\n\
    struct pair { int x; int y; } p = { 0, 0 };\n\
    (void)p;\n\
}\n";
        let defs = scan_functions(&tokenize(src));
        let names: Vec<&str> = defs.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, vec!["add", "helper"]);
        assert_eq!(defs[0].sig_line, 2);
        assert_eq!(defs[0].close_line, 4);
        assert_eq!(defs[1].close_line, 8);
    }

    #[test]
    fn do_while_and_struct_init_do_not_confuse_scan() {
        let src = "\
struct point origin = { 0, 0 };\n\
int spin(int n) {\n\
    do {\n\
        n--;\n\
    } while (n > 0);\n\
    return n;\n\
}\n";
        let defs = scan_functions(&tokenize(src));
        assert_eq!(defs.len(), 1);
        assert_eq!(defs[0].name, "spin");
        assert_eq!(defs[0].line_count(), 6);
    }
}
