//! Text embedders. Any map from text to a fixed-dimension unit vector works;
//! the hashed bag-of-tokens embedder here is deterministic and offline.

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedding backend failed: {0}")]
    Backend(String),
    #[error("embedding has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("embedding is zero or not finite")]
    Degenerate,
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
    fn name(&self) -> String;
}

pub fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, EmbedError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(EmbedError::Degenerate);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

/// Dot product; equals cosine similarity for unit vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Lowercased alphanumeric tokens; hyphens and dots inside a token are kept
/// so alloy names like `ti-6al-4v` survive.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '-' || c == '.'))
        .map(|t| t.trim_matches(|c| c == '-' || c == '.').to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIM: usize = 256;

    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    fn bucket(&self, token: &str) -> (usize, f64) {
        let h = Sha256::digest(token.as_bytes());
        let mut idx = [0u8; 8];
        idx.copy_from_slice(&h[..8]);
        let i = (u64::from_le_bytes(idx) % self.dim as u64) as usize;
        let sign = if h[8] & 1 == 0 { 1.0 } else { -1.0 };
        (i, sign)
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new(Self::DEFAULT_DIM)
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        let mut v = vec![0.0; self.dim];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            let (i, s) = self.bucket("\u{0}empty");
            v[i] = s;
        }
        for t in &tokens {
            let (i, s) = self.bucket(t);
            v[i] += s;
        }
        for w in tokens.windows(2) {
            let (i, s) = self.bucket(&format!("{} {}", w[0], w[1]));
            v[i] += 0.5 * s;
        }
        // Opposite-sign collisions can cancel everything out.
        if v.iter().all(|x| *x == 0.0) {
            let (i, s) = self.bucket("\u{0}empty");
            v[i] = s;
        }
        normalize(v)
    }

    fn name(&self) -> String {
        format!("hash-bow-{}", self.dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_and_deterministic() {
        let e = HashEmbedder::default();
        for text in ["", "Ti-6Al-4V has low thermal conductivity", "!!!", "a a a a"] {
            let v = e.embed(text).unwrap();
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12, "{text:?}");
            assert_eq!(v, e.embed(text).unwrap());
        }
    }

    #[test]
    fn related_text_scores_higher() {
        let e = HashEmbedder::default();
        let q = e.embed("tool wear in titanium milling").unwrap();
        let near = e.embed("Tool wear grows quickly when milling titanium").unwrap();
        let far = e.embed("spindle coolant pressure regulation valve").unwrap();
        assert!(cosine(&q, &near) > cosine(&q, &far));
    }

    #[test]
    fn tokenizer_keeps_alloy_names() {
        assert_eq!(tokenize("Ti-6Al-4V, (alpha-beta)."), vec!["ti-6al-4v", "alpha-beta"]);
    }
}
