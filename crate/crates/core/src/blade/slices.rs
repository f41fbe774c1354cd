use serde::{Deserialize, Serialize};

use super::pairs::PairMeasurement;
use super::{PairKey, PartRange};
use crate::digest::json_digest;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceSelector {
    pub parts: Option<PartRange>,
    pub pair_keys: Option<Vec<PairKey>>,
}

impl SliceSelector {
    pub fn matches(&self, m: &PairMeasurement) -> bool {
        self.parts.is_none_or(|r| r.contains(m.part))
            && self.pair_keys.as_ref().is_none_or(|ks| ks.contains(&m.pair_key))
    }

    /// Deterministic cache key: selector with sorted, deduplicated keys.
    pub fn cache_key(&self) -> String {
        let mut norm = self.clone();
        if let Some(ks) = norm.pair_keys.as_mut() {
            ks.sort();
            ks.dedup();
        }
        format!("fetch_inspection_slices:{}", &json_digest(&norm)[..16])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectionSlice {
    pub rows: Vec<PairMeasurement>,
    pub warning: Option<String>,
    pub cache_key: String,
}

/// Selected rows ordered by (pair key, part).
pub fn fetch_inspection_slices(all: &[PairMeasurement], selector: &SliceSelector) -> InspectionSlice {
    let mut rows: Vec<PairMeasurement> = all.iter().filter(|m| selector.matches(m)).cloned().collect();
    rows.sort_by_key(|a| (a.pair_key, a.part));
    let warning = rows
        .is_empty()
        .then(|| "selector matched no inspection rows".to_string());
    InspectionSlice { rows, warning, cache_key: selector.cache_key() }
}
