//! SHA-256 content digests used for audit payloads, cache keys and
//! determinism checks.

use serde::Serialize;
use sha2::{Digest as _, Sha256};

/// Hex-encoded SHA-256 of raw bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the canonical JSON form of a value.
///
/// All map-like types in this crate are `BTreeMap`s, so `serde_json` output is
/// already key-ordered and stable across runs.
pub fn json_digest<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("in-memory values always serialize");
    sha256_hex(&bytes)
}

/// First `n` hex characters of a digest, for short identifiers.
pub fn short(digest: &str, n: usize) -> &str {
    &digest[..n.min(digest.len())]
}
