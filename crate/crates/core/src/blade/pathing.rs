//! Virtual-machining path-tracking error projected onto inspection keys.
//!
//! The export is expected to be pre-projected: one combined deviation `r_k`
//! per pair key. The CAD-frame alignment that produces it happens upstream.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BladeError, PairKey};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathingExport {
    pub combined: BTreeMap<PairKey, f64>,
}

#[derive(Debug, Deserialize, Serialize)]
struct PathingRow {
    pair_key: PairKey,
    r_k: f64,
}

impl PathingExport {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, BladeError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut combined = BTreeMap::new();
        for rec in rdr.deserialize::<PathingRow>() {
            let row = rec.map_err(|e| BladeError::Table(e.to_string()))?;
            combined.insert(row.pair_key, row.r_k);
        }
        Ok(Self { combined })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, BladeError> {
        let file = std::fs::File::open(path.as_ref())
            .map_err(|e| BladeError::Table(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_reader(file)
    }

    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for (&pair_key, &r_k) in &self.combined {
            wtr.serialize(PathingRow { pair_key, r_k }).expect("writing to memory");
        }
        String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathingEntry {
    pub r: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathingField {
    pub entries: BTreeMap<PairKey, PathingEntry>,
}

impl PathingField {
    pub fn p(&self, key: PairKey) -> Option<f64> {
        self.entries.get(&key).map(|e| e.p)
    }
}

/// Per-surface pathing deviation `p_k = r_k / 2` for each requested key.
pub fn rb_compute_pathing_dev(
    export: &PathingExport,
    keys: &[PairKey],
) -> Result<PathingField, BladeError> {
    let mut entries = BTreeMap::new();
    for &key in keys {
        let r = *export.combined.get(&key).ok_or(BladeError::MissingPathingKey(key))?;
        entries.insert(key, PathingEntry { r, p: r / 2.0 });
    }
    Ok(PathingField { entries })
}
