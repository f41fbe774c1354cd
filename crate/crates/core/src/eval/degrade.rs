//! Deterministic removal of tool hints.

use sha2::{Digest, Sha256};

/// Uniform value in [0, 1) keyed by (seed, query id, hint).
fn keyed_unit(query_id: &str, hint: &str, seed: u64) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(query_id.as_bytes());
    h.update([0x1f]);
    h.update(hint.as_bytes());
    let d = h.finalize();
    let x = u64::from_le_bytes(d[..8].try_into().expect("eight bytes"));
    (x >> 11) as f64 / (1u64 << 53) as f64
}

/// Hints dropped for `query_id`, in input order. Each hint is dropped
/// independently when its keyed hash falls below `drop_p`.
pub fn degrade_routing<S: AsRef<str>>(query_id: &str, hints: &[S], drop_p: f64, seed: u64) -> Vec<String> {
    let p = drop_p.clamp(0.0, 1.0);
    hints
        .iter()
        .map(AsRef::as_ref)
        .filter(|h| keyed_unit(query_id, h, seed) < p)
        .map(str::to_string)
        .collect()
}
