//! Canonical serialization and content hashing. All hashes in manifests and
//! datasets go through here so "byte-identical replay" has a single owner.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Canonical JSON: object keys sorted, no insignificant whitespace.
/// `serde_json::Value` maps are ordered, so round-tripping through a value
/// yields the sorted form deterministically.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Hash of the canonical JSONL rendering of a record sequence: one canonical
/// JSON object per line, LF terminated.
pub fn content_hash_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut buf = String::new();
    for record in records {
        buf.push_str(&canonical_json(record)?);
        buf.push('\n');
    }
    Ok(sha256_hex(buf.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn canonical_json_sorts_keys() {
        let v = json!({"zeta": 1, "alpha": {"y": 2, "x": 3}});
        assert_eq!(
            canonical_json(&v).unwrap(),
            r#"{"alpha":{"x":3,"y":2},"zeta":1}"#
        );
    }

    #[test]
    fn sha256_known_vector() {
        // sha256("abc"), standard test vector.
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn jsonl_hash_depends_on_order_and_content() {
        let a = vec![json!({"k": 1}), json!({"k": 2})];
        let b = vec![json!({"k": 2}), json!({"k": 1})];
        assert_ne!(
            content_hash_jsonl(&a).unwrap(),
            content_hash_jsonl(&b).unwrap()
        );
        assert_eq!(
            content_hash_jsonl(&a).unwrap(),
            content_hash_jsonl(&a).unwrap()
        );
    }
}
