//! Tool-selection scores and the paired critic-value rates.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToolScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub missing: usize,
    /// Set when precision or recall has an empty denominator.
    pub degenerate: bool,
}

/// Set-based precision and recall of `called` against `required`, after
/// removing helper calls from `called`.
pub fn score_tool_selection<S: AsRef<str>>(required: &[S], called: &[S], helpers: &[S]) -> ToolScore {
    let helpers: BTreeSet<&str> = helpers.iter().map(AsRef::as_ref).collect();
    let req: BTreeSet<&str> = required.iter().map(AsRef::as_ref).collect();
    let got: BTreeSet<&str> = called.iter().map(AsRef::as_ref).filter(|t| !helpers.contains(t)).collect();
    let hit = req.intersection(&got).count() as f64;
    let mut degenerate = false;
    let precision = if got.is_empty() {
        degenerate = true;
        if req.is_empty() { 1.0 } else { 0.0 }
    } else {
        hit / got.len() as f64
    };
    let recall = if req.is_empty() {
        degenerate = true;
        if got.is_empty() { 1.0 } else { 0.0 }
    } else {
        hit / req.len() as f64
    };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    ToolScore { precision, recall, f1, missing: req.difference(&got).count(), degenerate }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    Critic,
    NoCritic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedTrial {
    pub query_id: String,
    pub condition: Condition,
    pub dropped_hints: Vec<String>,
    pub called_tools: Vec<String>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub missing_count: usize,
}

impl PairedTrial {
    pub fn new(
        query_id: &str,
        condition: Condition,
        dropped_hints: Vec<String>,
        called_tools: Vec<String>,
        required: &[String],
        helpers: &[String],
    ) -> Self {
        let s = score_tool_selection(required, &called_tools, helpers);
        Self {
            query_id: query_id.to_string(),
            condition,
            dropped_hints,
            called_tools,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            missing_count: s.missing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticValue {
    pub improved_rate: f64,
    pub reduced_missing_rate: f64,
    /// Over degraded pairs only.
    pub full_recovery_rate: f64,
    pub pairs: usize,
    pub degraded: usize,
    pub mean_f1_critic: f64,
    pub mean_f1_no_critic: f64,
}

/// Pair trials by query id and compute the improved-tool, reduced-missing
/// and full-recovery rates. Every query needs exactly one trial per
/// condition.
pub fn critic_value_metrics(trials: &[PairedTrial]) -> Result<CriticValue, EvalError> {
    let mut by_id: BTreeMap<&str, (Option<&PairedTrial>, Option<&PairedTrial>)> = BTreeMap::new();
    for t in trials {
        let slot = by_id.entry(&t.query_id).or_default();
        let place = match t.condition {
            Condition::Critic => &mut slot.0,
            Condition::NoCritic => &mut slot.1,
        };
        if place.replace(t).is_some() {
            return Err(EvalError::Unpaired(format!("{} has two {:?} trials", t.query_id, t.condition)));
        }
    }
    let mut pairs = Vec::new();
    for (id, (c, n)) in by_id {
        match (c, n) {
            (Some(c), Some(n)) => pairs.push((c, n)),
            _ => return Err(EvalError::Unpaired(format!("{id} lacks a trial in one condition"))),
        }
    }
    let total = pairs.len();
    let rate = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let improved = pairs.iter().filter(|(c, n)| c.f1 > n.f1).count();
    let reduced = pairs.iter().filter(|(c, n)| c.missing_count < n.missing_count).count();
    let degraded: Vec<_> = pairs.iter().filter(|(_, n)| !n.dropped_hints.is_empty()).collect();
    let recovered = degraded.iter().filter(|(c, n)| n.missing_count >= 1 && c.missing_count == 0).count();
    let mean = |f: &dyn Fn(&(&PairedTrial, &PairedTrial)) -> f64| {
        if total == 0 { 0.0 } else { pairs.iter().map(f).sum::<f64>() / total as f64 }
    };
    Ok(CriticValue {
        improved_rate: rate(improved, total),
        reduced_missing_rate: rate(reduced, total),
        full_recovery_rate: rate(recovered, degraded.len()),
        pairs: total,
        degraded: degraded.len(),
        mean_f1_critic: mean(&|p| p.0.f1),
        mean_f1_no_critic: mean(&|p| p.1.f1),
    })
}
