//! Paired critic ablation: each query runs with and without the critic
//! after the same seeded hint degradation.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::degrade::degrade_routing;
use super::metrics::{critic_value_metrics, Condition, CriticValue, PairedTrial};
use super::EvalError;
use crate::analysis::{ParamType, ToolRegistry};
use crate::critic::CriticConfig;
use crate::engine::{Engine, EngineConfig, TurnOutcome, TurnStatus};
use crate::gateway::{Backend, Role, ScriptedBackend, ScriptedRule};
use crate::query;
use crate::session::{ResourceKind, SessionState};

pub const DEFAULT_SUITE: &str = include_str!("../../benchmarks/critic/queries.jsonl");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticQuery {
    pub id: String,
    pub prompt: String,
    pub required_tools: Vec<String>,
}

pub fn parse_suite(text: &str) -> Result<Vec<CriticQuery>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Format(format!("suite line {}: {e}", i + 1))))
        .collect()
}

pub fn default_suite() -> Vec<CriticQuery> {
    parse_suite(DEFAULT_SUITE).expect("bundled suite parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticSuiteConfig {
    pub drop_p: f64,
    pub seed: u64,
    pub budget: u32,
}

impl Default for CriticSuiteConfig {
    fn default() -> Self {
        Self { drop_p: 0.3, seed: 20_240_601, budget: 3 }
    }
}

/// Planner backend that proposes exactly the tools named in the
/// instruction's hint block.
pub fn echo_planner() -> ScriptedBackend {
    ScriptedBackend::new(vec![ScriptedRule::new(
        Some(Role::AnalysisPlanner),
        r"\[tools:\s*(?P<tools>[^\]]*)\]",
        "${tools}",
    )
    .expect("static pattern")
    .expanding()])
}

/// `required` plus the producers of their required inputs, in registry
/// order.
pub fn hint_tools(required: &[String], registry: &ToolRegistry) -> Vec<String> {
    let mut out: Vec<String> = required.to_vec();
    let mut i = 0;
    while i < out.len() {
        if let Some(spec) = registry.get(&out[i]) {
            for p in spec.params.iter().filter(|p| p.required) {
                if let ParamType::Ref(kinds) = &p.ty {
                    let have = out.iter().any(|t| registry.get(t).is_some_and(|s| kinds.contains(&s.produces)));
                    if !have {
                        if let Some(prod) = registry.producer_of_kind(kinds[0]) {
                            out.push(prod.name.clone());
                        }
                    }
                }
            }
        }
        i += 1;
    }
    out.sort_by_key(|t| registry.position(t).unwrap_or(usize::MAX));
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub id: String,
    pub dropped: Vec<String>,
    pub critic_status: TurnStatus,
    pub critic_iterations: usize,
    pub critic: PairedTrial,
    pub no_critic: PairedTrial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticSuiteReport {
    pub rows: Vec<SuiteRow>,
    pub value: CriticValue,
}

impl CriticSuiteReport {
    pub fn trials(&self) -> Vec<PairedTrial> {
        self.rows.iter().flat_map(|r| [r.critic.clone(), r.no_critic.clone()]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "query_id,dropped,critic_status,critic_iterations,f1_critic,f1_no_critic,missing_critic,missing_no_critic\n",
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{:.4},{:.4},{},{}\n",
                r.id,
                r.dropped.join(";"),
                serde_json::to_value(r.critic_status).unwrap().as_str().unwrap(),
                r.critic_iterations,
                r.critic.f1,
                r.no_critic.f1,
                r.critic.missing_count,
                r.no_critic.missing_count
            ));
        }
        s.push_str(&format!(
            "# improved_rate={:.4} reduced_missing_rate={:.4} full_recovery_rate={:.4} degraded={}/{}\n",
            self.value.improved_rate, self.value.reduced_missing_rate, self.value.full_recovery_rate, self.value.degraded, self.value.pairs
        ));
        s
    }
}

fn final_tools(out: &TurnOutcome) -> Vec<String> {
    out.iterations
        .last()
        .and_then(|it| it.plan.as_ref())
        .map(|p| p.calls.iter().map(|c| c.tool.clone()).collect())
        .unwrap_or_default()
}

fn fresh_state(id: &str, inspection: &Path, pathing: &Path, engine: &Engine, budget: u32) -> Result<SessionState, EvalError> {
    let mut s = SessionState::new(id, budget);
    for (p, k) in [(inspection, ResourceKind::InspectionCsv), (pathing, ResourceKind::PathingField)] {
        engine
            .load_resource(&mut s, &p.display().to_string(), Some(k), None)
            .map_err(|e| EvalError::Engine(e.to_string()))?;
    }
    Ok(s)
}

/// Run each query twice on isolated sessions with the inspection and
/// pathing files loaded: once through the critic loop, once straight from
/// the first candidate.
pub fn run_critic_suite(
    queries: &[CriticQuery],
    inspection: &Path,
    pathing: &Path,
    backend: Arc<dyn Backend>,
    config: &CriticSuiteConfig,
) -> Result<CriticSuiteReport, EvalError> {
    let registry = ToolRegistry::default();
    let helpers = registry.helpers();
    let mk = |critic_enabled: bool| {
        let cfg = EngineConfig {
            critic: CriticConfig { budget: config.budget, ..CriticConfig::default() },
            critic_enabled,
            ..EngineConfig::default()
        };
        Engine::new(backend.clone(), cfg)
    };
    let (with, without) = (mk(true), mk(false));
    let mut rows = Vec::new();
    for q in queries {
        let dropped = degrade_routing(&q.id, &q.required_tools, config.drop_p, config.seed);
        let hints: Vec<String> = hint_tools(&q.required_tools, &registry).into_iter().filter(|t| !dropped.contains(t)).collect();
        let text = query::with_hints(&q.prompt, &hints);
        let run = |engine: &Engine, cond: Condition| -> Result<(TurnOutcome, PairedTrial), EvalError> {
            let mut s = fresh_state(&q.id, inspection, pathing, engine, config.budget)?;
            let out = engine.run_turn(&mut s, &text).map_err(|e| EvalError::Engine(format!("{}: {e}", q.id)))?;
            let trial = PairedTrial::new(&q.id, cond, dropped.clone(), final_tools(&out), &q.required_tools, &helpers);
            Ok((out, trial))
        };
        let (out_c, critic) = run(&with, Condition::Critic)?;
        let (_, no_critic) = run(&without, Condition::NoCritic)?;
        rows.push(SuiteRow {
            id: q.id.clone(),
            dropped: dropped.clone(),
            critic_status: out_c.status,
            critic_iterations: out_c.iterations.len(),
            critic,
            no_critic,
        });
    }
    let trials: Vec<PairedTrial> = rows.iter().flat_map(|r| [r.critic.clone(), r.no_critic.clone()]).collect();
    let value = critic_value_metrics(&trials)?;
    Ok(CriticSuiteReport { rows, value })
}
