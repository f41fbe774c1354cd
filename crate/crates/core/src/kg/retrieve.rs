//! Retrieval: combined scoring over a base-similarity pre-pool, an adaptive
//! inclusion floor `tau = mu + z sigma`, bounded selection and bounded
//! neighbourhood expansion.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::embed::{cosine, Embedder};
use super::store::TripleStore;
use super::KgError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    /// Weight of the context-only similarity.
    pub lambda: f64,
    /// Pre-pool fraction of the store.
    pub alpha: f64,
    /// Minimum pre-pool size.
    pub min_pool: usize,
    pub z: f64,
    /// Fallback size when nothing clears the floor.
    pub k0: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub depth: usize,
    pub beam: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { lambda: 0.5, alpha: 0.2, min_pool: 20, z: 0.5, k0: 5, k_min: 3, k_max: 15, depth: 1, beam: 5 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), KgError> {
        let mut bad = Vec::new();
        if !(0.0..=1.0).contains(&self.lambda) {
            bad.push("lambda must lie in [0, 1]");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            bad.push("alpha must lie in (0, 1]");
        }
        if self.min_pool < 1 {
            bad.push("min_pool must be at least 1");
        }
        if !self.z.is_finite() {
            bad.push("z must be finite");
        }
        if self.k_min > self.k_max {
            bad.push("k_min must not exceed k_max");
        }
        if self.beam < 1 {
            bad.push("beam must be at least 1");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(KgError::Config(bad.join("; ")))
        }
    }

    /// `p = min(N, max(m, floor(alpha N)))`.
    pub fn pool_size(&self, n: usize) -> usize {
        let frac = (self.alpha * n as f64).floor() as usize;
        n.min(self.min_pool.max(frac))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub id: String,
    /// `cos(q, v_i)`
    pub base: f64,
    /// `cos(q, v_i) + lambda cos(q, u_i)`
    pub score: f64,
}

/// (score desc, id asc)
fn by_score(a: &Scored, b: &Scored) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

/// Base similarity for every record, in store order.
pub fn base_similarities(query: &[f64], store: &TripleStore) -> Vec<f64> {
    store.records().iter().map(|r| cosine(query, &r.v_embedding)).collect()
}

/// Score the pre-pool: the top `p` records by base similarity.
pub fn score(
    query_text: &str,
    config: &RetrievalConfig,
    embedder: &dyn Embedder,
    store: &TripleStore,
) -> Result<Vec<Scored>, KgError> {
    if store.is_empty() {
        return Err(KgError::EmptyKnowledge);
    }
    let q = embedder.embed(query_text)?;
    Ok(score_embedded(&q, &base_similarities(&q, store), config, store))
}

fn score_embedded(q: &[f64], base: &[f64], config: &RetrievalConfig, store: &TripleStore) -> Vec<Scored> {
    let mut order: Vec<usize> = (0..store.len()).collect();
    let recs = store.records();
    order.sort_by(|&a, &b| base[b].total_cmp(&base[a]).then_with(|| recs[a].id.cmp(&recs[b].id)));
    order.truncate(config.pool_size(store.len()));
    order
        .into_iter()
        .map(|i| Scored {
            id: recs[i].id.clone(),
            base: base[i],
            score: base[i] + config.lambda * cosine(q, &recs[i].u_embedding),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: Vec<Scored>,
    pub tau: f64,
    pub mu: f64,
    pub sigma: f64,
    pub pool_size: usize,
    /// Nothing cleared `tau`; the top-`k0` were used instead.
    pub fallback: bool,
}

/// Apply the inclusion floor and the `[k_min, k_max]` bounds to a scored pool.
/// When the pool is smaller than `k_min`, the whole pool is returned.
pub fn select_candidates(scored: &[Scored], config: &RetrievalConfig) -> Selection {
    let n = scored.len();
    if n == 0 {
        return Selection { selected: vec![], tau: 0.0, mu: 0.0, sigma: 0.0, pool_size: 0, fallback: true };
    }
    let nf = n as f64;
    let mu = scored.iter().map(|s| s.score).sum::<f64>() / nf;
    let sigma = (scored.iter().map(|s| (s.score - mu).powi(2)).sum::<f64>() / nf).sqrt();
    let tau = mu + config.z * sigma;
    // Absorbs rounding in mu and sigma so that equal scores all clear
    // a floor computed from themselves.
    let slack = 1e-12 * (mu.abs() + sigma);

    let mut ranked: Vec<Scored> = scored.to_vec();
    ranked.sort_by(by_score);
    let passing = ranked.iter().take_while(|s| s.score >= tau - slack).count();
    let fallback = passing == 0;
    let mut count = if fallback { config.k0.min(n) } else { passing };
    count = count.min(config.k_max).max(config.k_min.min(n));
    ranked.truncate(count);
    Selection { selected: ranked, tau, mu, sigma, pool_size: n, fallback }
}

/// Breadth-bounded expansion over shared-entity adjacency. Each hop admits
/// at most `beam` unvisited neighbours, ranked by base similarity.
pub fn expand(
    core: &[String],
    config: &RetrievalConfig,
    store: &TripleStore,
    base: &[f64],
) -> Vec<(String, usize)> {
    let mut visited: HashSet<usize> = core.iter().filter_map(|id| store.index_of(id)).collect();
    let mut frontier: Vec<usize> = core.iter().filter_map(|id| store.index_of(id)).collect();
    let recs = store.records();
    let mut out = Vec::new();
    for hop in 1..=config.depth {
        let mut cand: Vec<usize> = frontier
            .iter()
            .flat_map(|&i| store.neighbors(i))
            .filter(|j| !visited.contains(j))
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        cand.sort_by(|&a, &b| base[b].total_cmp(&base[a]).then_with(|| recs[a].id.cmp(&recs[b].id)));
        cand.truncate(config.beam);
        if cand.is_empty() {
            break;
        }
        for &j in &cand {
            visited.insert(j);
            out.push((recs[j].id.clone(), hop));
        }
        frontier = cand;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub selected: Vec<Scored>,
    /// `(id, hop distance)`, ordered by hop then base similarity.
    pub expanded: Vec<(String, usize)>,
    pub tau: f64,
    pub pool_size: usize,
    pub fallback: bool,
}

impl RetrievalResult {
    /// Every id the result makes citable.
    pub fn evidence_ids(&self) -> impl Iterator<Item = &str> {
        self.selected.iter().map(|s| s.id.as_str()).chain(self.expanded.iter().map(|(id, _)| id.as_str()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.evidence_ids().any(|x| x == id)
    }
}

pub fn retrieve(
    query_text: &str,
    config: &RetrievalConfig,
    embedder: &dyn Embedder,
    store: &TripleStore,
) -> Result<RetrievalResult, KgError> {
    config.validate()?;
    if store.is_empty() {
        return Err(KgError::EmptyKnowledge);
    }
    let q = embedder.embed(query_text)?;
    let base = base_similarities(&q, store);
    let pool = score_embedded(&q, &base, config, store);
    let sel = select_candidates(&pool, config);
    let core: Vec<String> = sel.selected.iter().map(|s| s.id.clone()).collect();
    let expanded = expand(&core, config, store, &base);
    Ok(RetrievalResult {
        selected: sel.selected,
        expanded,
        tau: sel.tau,
        pool_size: sel.pool_size,
        fallback: sel.fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::HashEmbedder;

    fn s(id: &str, score: f64) -> Scored {
        Scored { id: id.into(), base: score, score }
    }

    #[test]
    fn pool_size_formula() {
        let c = RetrievalConfig::default();
        assert_eq!(c.pool_size(10), 10);
        assert_eq!(c.pool_size(1000), 200);
        assert_eq!(c.pool_size(50), 20);
    }

    #[test]
    fn hand_evaluated_floor() {
        let cfg = RetrievalConfig { k_min: 1, ..Default::default() };
        let sel = select_candidates(&[s("a", 1.0), s("b", 0.5), s("c", 0.0)], &cfg);
        let expected = 0.5 + 0.5 * (1.0f64 / 6.0).sqrt();
        assert!((sel.tau - expected).abs() < 1e-12);
        assert!((sel.tau - 0.7041).abs() < 1e-4);
        assert_eq!(sel.selected.iter().map(|x| x.id.as_str()).collect::<Vec<_>>(), ["a"]);
        assert!(!sel.fallback);
        let padded = select_candidates(&[s("a", 1.0), s("b", 0.5), s("c", 0.0)], &RetrievalConfig { k_min: 2, ..cfg });
        assert_eq!(padded.selected.iter().map(|x| x.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn equal_scores_all_pass_then_truncate() {
        let pool: Vec<Scored> = (0..20).map(|i| s(&format!("t{i:02}"), 0.3)).collect();
        let sel = select_candidates(&pool, &RetrievalConfig::default());
        assert!(sel.sigma < 1e-15);
        assert_eq!(sel.selected.len(), 15);
        assert_eq!(sel.selected[0].id, "t00");
        assert!(!sel.fallback);
    }

    #[test]
    fn lambda_zero_is_base_similarity() {
        let e = HashEmbedder::new(64);
        let mut store = TripleStore::new();
        store
            .ingest_triples("a\tR\tb\t\"wear grows\"\t\nc\tR\td\t\"heat builds\"\t\n", "d", &e)
            .unwrap();
        let cfg = RetrievalConfig { lambda: 0.0, ..Default::default() };
        for sc in score("wear", &cfg, &e, &store).unwrap() {
            assert_eq!(sc.score, sc.base);
        }
    }

    fn chain_store() -> TripleStore {
        let e = HashEmbedder::new(32);
        let mut st = TripleStore::new();
        st.ingest_triples("A\tR\tB\t\"ab\"\t\nB\tR\tC\t\"bc\"\t\nX\tR\tY\t\"xy\"\t\n", "d", &e).unwrap();
        st
    }

    #[test]
    fn expansion_follows_shared_entities() {
        let st = chain_store();
        let base = vec![0.0; st.len()];
        let ab = st.records()[0].id.clone();
        let bc = st.records()[1].id.clone();
        let cfg = RetrievalConfig { depth: 1, beam: 1, ..Default::default() };
        assert_eq!(expand(std::slice::from_ref(&ab), &cfg, &st, &base), vec![(bc, 1)]);
        let none = RetrievalConfig { depth: 0, ..Default::default() };
        assert!(expand(&[ab], &none, &st, &base).is_empty());
    }

    #[test]
    fn cycles_visit_each_triple_once() {
        let e = HashEmbedder::new(32);
        let mut st = TripleStore::new();
        st.ingest_triples("A\tR\tB\t\"1\"\t\nB\tS\tA\t\"2\"\t\nA\tT\tB\t\"3\"\t\n", "d", &e).unwrap();
        let base = vec![0.0; st.len()];
        let cfg = RetrievalConfig { depth: 3, beam: 5, ..Default::default() };
        let out = expand(&[st.records()[0].id.clone()], &cfg, &st, &base);
        let ids: HashSet<_> = out.iter().map(|(id, _)| id.clone()).collect();
        assert_eq!(ids.len(), out.len());
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn empty_store_signal() {
        let e = HashEmbedder::new(8);
        let err = retrieve("q", &RetrievalConfig::default(), &e, &TripleStore::new()).unwrap_err();
        assert!(matches!(err, KgError::EmptyKnowledge));
    }

    #[test]
    fn config_validation() {
        let bad = RetrievalConfig { k_min: 5, k_max: 2, lambda: 2.0, ..Default::default() };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("lambda") && msg.contains("k_min"));
    }
}
