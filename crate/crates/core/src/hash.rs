//! Content hashing helpers.
//!
//! Everything identity-like in the pipeline is a SHA-256 over canonical
//! bytes: prompt hashes, job ids, hunk ids, and the tree snapshot that
//! stands in for a commit SHA when the reviewed tree is not a git checkout.

use sha2::{Digest, Sha256};
use std::path::Path;

/// Hex SHA-256 of raw bytes (64 chars, lowercase).
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_string(&h.finalize())
}

/// Hex SHA-256 over a sequence of length-delimited parts. Delimiting by
/// length keeps ("ab","c") and ("a","bc") distinct.
pub fn sha256_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex_string(&h.finalize())
}

/// Commit-SHA analog for a plain directory tree: SHA-256 over the sorted
/// (relative path, content hash) manifest, truncated to 40 hex chars so it
/// wears the same shape as a git SHA.
pub fn tree_snapshot_sha(root: &Path) -> std::io::Result<String> {
    let files = crate::fsutil::walk_files(root)?;
    let mut h = Sha256::new();
    for rel in &files {
        let content = std::fs::read(root.join(rel))?;
        let entry = format!("{} {}\n", rel.to_string_lossy(), sha256_hex(&content));
        h.update(entry.as_bytes());
    }
    Ok(hex_string(&h.finalize())[..40].to_string())
}

fn hex_string(digest: &[u8]) -> String {
    let mut s = String::with_capacity(digest.len() * 2);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        // Standard test vector for the empty string.
        assert_eq!(
            sha256_hex(b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn parts_are_length_delimited() {
        assert_ne!(sha256_parts(&[b"ab", b"c"]), sha256_parts(&[b"a", b"bc"]));
    }

    #[test]
    fn tree_sha_is_40_hex_and_content_sensitive() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.c"), "int x;\n").unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("sub/b.c"), "int y;\n").unwrap();
        let first = tree_snapshot_sha(dir.path()).unwrap();
        assert_eq!(first.len(), 40);
        assert!(first.chars().all(|c| c.is_ascii_hexdigit()));
        // Identical content hashes identically.
        assert_eq!(first, tree_snapshot_sha(dir.path()).unwrap());
        // Any content change moves the hash.
        std::fs::write(dir.path().join("sub/b.c"), "int z;\n").unwrap();
        assert_ne!(first, tree_snapshot_sha(dir.path()).unwrap());
    }
}
