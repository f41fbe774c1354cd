//! Mapping from reported quantities to the tool outputs or triples that
//! produced them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Where a reported quantity came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ProvenanceTarget {
    /// `call-<k>.<field>`
    ToolOutput { call: usize, field: String },
    Triple(String),
}

impl fmt::Display for ProvenanceTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ToolOutput { call, field } => write!(f, "call-{call}.{field}"),
            Self::Triple(id) => f.write_str(id),
        }
    }
}

impl FromStr for ProvenanceTarget {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.is_empty() {
            return Err("empty provenance target".into());
        }
        if let Some(rest) = s.strip_prefix("call-") {
            let (k, field) = rest.split_once('.').ok_or_else(|| format!("{s:?}: missing field"))?;
            let call = k.parse().map_err(|_| format!("{s:?}: bad call index"))?;
            if call == 0 || field.is_empty() {
                return Err(format!("{s:?}: call index is 1-based and field is required"));
            }
            return Ok(Self::ToolOutput { call, field: field.to_string() });
        }
        Ok(Self::Triple(s.to_string()))
    }
}

impl From<ProvenanceTarget> for String {
    fn from(t: ProvenanceTarget) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for ProvenanceTarget {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// `metric[pair-key]`, e.g. `Trc[2+17]`.
pub fn quantity_id(metric: &str, key: impl fmt::Display) -> String {
    format!("{metric}[{key}]")
}

/// Split a quantity id into `(metric, key)`.
pub fn parse_quantity_id(id: &str) -> Option<(&str, &str)> {
    let (metric, rest) = id.split_once('[')?;
    let key = rest.strip_suffix(']')?;
    (!metric.is_empty()).then_some((metric, key))
}

/// Whatever can confirm that a target still exists.
pub trait ProvenanceIndex {
    fn has_output_field(&self, call: usize, field: &str) -> bool;
    fn has_triple(&self, id: &str) -> bool;

    fn contains(&self, target: &ProvenanceTarget) -> bool {
        match target {
            ProvenanceTarget::ToolOutput { call, field } => self.has_output_field(*call, field),
            ProvenanceTarget::Triple(id) => self.has_triple(id),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("dangling provenance for {}", keys.join(", "))]
pub struct IntegrityError {
    pub keys: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceMap {
    pub entries: BTreeMap<String, ProvenanceTarget>,
}

impl ProvenanceMap {
    pub fn insert(&mut self, quantity: impl Into<String>, target: ProvenanceTarget) {
        self.entries.insert(quantity.into(), target);
    }

    pub fn get(&self, quantity: &str) -> Option<&ProvenanceTarget> {
        self.entries.get(quantity)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn extend(&mut self, other: ProvenanceMap) {
        self.entries.extend(other.entries);
    }

    /// Every key whose target is missing from `index`.
    pub fn dangling(&self, index: &dyn ProvenanceIndex) -> Vec<String> {
        self.entries
            .iter()
            .filter(|(_, t)| !index.contains(t))
            .map(|(k, _)| k.clone())
            .collect()
    }

    pub fn verify(&self, index: &dyn ProvenanceIndex) -> Result<(), IntegrityError> {
        let keys = self.dangling(index);
        if keys.is_empty() {
            Ok(())
        } else {
            Err(IntegrityError { keys })
        }
    }
}

/// Look up a quantity. `Ok(None)` means the id is not in the map; a mapped
/// id whose target no longer exists is an integrity error.
pub fn resolve_provenance(
    map: &ProvenanceMap,
    quantity: &str,
    index: &dyn ProvenanceIndex,
) -> Result<Option<ProvenanceTarget>, IntegrityError> {
    match map.get(quantity) {
        None => Ok(None),
        Some(t) if index.contains(t) => Ok(Some(t.clone())),
        Some(_) => Err(IntegrityError { keys: vec![quantity.to_string()] }),
    }
}
