//! Small filesystem helpers shared by the analyzer, orchestrator, and bench
//! harness. Traversal order is sorted so every consumer is deterministic.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Relative paths of all regular files under `root`, sorted, skipping hidden
/// entries and common build/VCS directories.
pub fn walk_files(root: &Path) -> io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    walk_into(root, Path::new(""), &mut out)?;
    out.sort();
    Ok(out)
}

fn walk_into(root: &Path, rel: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    let dir = root.join(rel);
    let mut entries: Vec<_> = fs::read_dir(&dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let name = entry.file_name();
        let name_str = name.to_string_lossy();
        if name_str.starts_with('.') || name_str == "target" {
            continue;
        }
        let child = rel.join(&name);
        let ty = entry.file_type()?;
        if ty.is_dir() {
            walk_into(root, &child, out)?;
        } else if ty.is_file() {
            out.push(child);
        }
    }
    Ok(())
}

/// Recursively copy `src` into `dst` (created if absent). Follows the same
/// skip rules as [`walk_files`].
pub fn copy_tree(src: &Path, dst: &Path) -> io::Result<()> {
    fs::create_dir_all(dst)?;
    for rel in walk_files(src)? {
        let to = dst.join(&rel);
        if let Some(parent) = to.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::copy(src.join(&rel), to)?;
    }
    Ok(())
}

/// Write via a sibling temp file and rename, so readers never observe a
/// half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let parent = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(
        ".{}.tmp-{}",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a text file normalizing CRLF to LF.
pub fn read_text_lf(path: &Path) -> io::Result<String> {
    let raw = fs::read(path)?;
    let text = String::from_utf8_lossy(&raw);
    Ok(text.replace("\r\n", "\n"))
}

/// Split file text into lines under the one-trailing-newline convention:
/// exactly one final `\n` is a terminator, not an empty last line, so
/// `"a\n\n"` is the two lines `["a", ""]` and `"\n"` is the one line `[""]`.
/// Every line-indexed component must split this way or their line numbers
/// disagree on files with trailing blanks.
pub fn split_lines(text: &str) -> Vec<&str> {
    if text.is_empty() {
        return Vec::new();
    }
    text.strip_suffix('\n').unwrap_or(text).split('\n').collect()
}
