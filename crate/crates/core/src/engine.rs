//! The per-turn loop: preprocess, route, dispatch, critique, and either
//! revise, accept or escalate.

use std::path::{Path, PathBuf};
use std::sync::{Arc, LazyLock};
use std::time::Instant;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{execute_sequence, plan_calls, AnalysisError, ExecEnv, Plan, ToolRegistry};
use crate::blade::LevelLayout;
use crate::critic::{self, CandidateAnswer, CriticConfig, CriticVerdict, EscalationReport};
use crate::gateway::Backend;
use crate::kg::{HashEmbedder, KgContext, KgError, RetrievalConfig, TripleStore};
use crate::kgagent;
use crate::router::{self, RouterError, RoutingDecision};
use crate::session::{
    Actor, AgentId, ApprovalKind, CriticDecision, ResourceHandle, ResourceKind, SessionError, SessionState, StateEvent,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub critic: CriticConfig,
    /// With the critic off the first candidate is returned unverified.
    pub critic_enabled: bool,
    pub layout: LevelLayout,
    /// Relative paths in queries resolve against this directory.
    pub data_dir: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { critic: CriticConfig::default(), critic_enabled: true, layout: LevelLayout::default(), data_dir: None }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("empty query")]
    EmptyQuery,
    #[error("cannot load {path}: {reason}")]
    Load { path: String, reason: String },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnStatus {
    Accepted,
    Escalated,
    /// Critic disabled: the first candidate, unchecked.
    Unverified,
    Reset,
    /// The query only registered resources.
    Loaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    pub agent: AgentId,
    pub instruction: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<Plan>,
    pub candidate: CandidateAnswer,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<CriticVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub query: String,
    pub status: TurnStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub routing: Option<RoutingDecision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate: Option<CandidateAnswer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<CriticVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub escalation: Option<EscalationReport>,
    pub iterations: Vec<Iteration>,
    /// Resources registered by this turn, by name.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loaded: Vec<String>,
    /// Half-open range of audit indices written by this turn.
    pub audit_range: (usize, usize),
    pub elapsed_ms: f64,
}

impl TurnOutcome {
    /// The recommendation table for analysis candidates, if it has one.
    pub fn table(&self) -> Option<String> {
        self.candidate.as_ref().and_then(render_table)
    }
}

static LOAD_ONLY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)^\s*load\s+['"]?([^'"\s]+)['"]?\s*$"#).unwrap());

/// The path of a bare `load <path>` command.
pub fn load_command(text: &str) -> Option<String> {
    LOAD_ONLY.captures(text).map(|c| c[1].to_string())
}

/// Per-pair compensation table in the `Pair Key | Trc | Tlc` layout, six
/// decimals, in pair order.
pub fn render_table(c: &CandidateAnswer) -> Option<String> {
    let mut rows: Vec<(crate::blade::PairKey, Option<f64>, Option<f64>)> = Vec::new();
    for q in &c.quantities {
        let key = q.pair_key;
        let slot = match q.metric.as_str() {
            "Trc" => 1,
            "Tlc" => 2,
            _ => continue,
        };
        let i = match rows.iter().position(|r| r.0 == key) {
            Some(i) => i,
            None => {
                rows.push((key, None, None));
                rows.len() - 1
            }
        };
        if slot == 1 {
            rows[i].1 = Some(q.value);
        } else {
            rows[i].2 = Some(q.value);
        }
    }
    if rows.is_empty() {
        return None;
    }
    rows.sort_by_key(|r| r.0);
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
    let mut out = String::from("| Pair Key | Trc | Tlc |\n|---|---|---|\n");
    for (k, trc, tlc) in rows {
        out.push_str(&format!("| {k} | {} | {} |\n", cell(trc), cell(tlc)));
    }
    Some(out)
}

pub struct Engine {
    pub registry: ToolRegistry,
    pub backend: Arc<dyn Backend>,
    pub kg: Option<KgContext>,
    pub config: EngineConfig,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("backend", &self.backend.describe())
            .field("kg", &self.kg)
            .field("config", &self.config)
            .finish()
    }
}

impl Engine {
    pub fn new(backend: Arc<dyn Backend>, config: EngineConfig) -> Self {
        Self { registry: ToolRegistry::default(), backend, kg: None, config }
    }

    pub fn with_kg(mut self, kg: KgContext) -> Self {
        self.kg = Some(kg);
        self
    }

    fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        match &self.config.data_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Register a file or directory. The kind is inferred from the name when
    /// not given; the resource name defaults to the kind.
    pub fn load_resource(
        &self,
        state: &mut SessionState,
        path: &str,
        kind: Option<ResourceKind>,
        name: Option<&str>,
    ) -> Result<String, EngineError> {
        let full = self.resolve(path);
        let kind = kind.unwrap_or_else(|| ResourceKind::infer(path));
        let handle = ResourceHandle::load(kind, &full)
            .map_err(|e| EngineError::Load { path: full.display().to_string(), reason: e.to_string() })?;
        let name = name.map(str::to_string).unwrap_or_else(|| kind.to_string());
        state.apply_as(Actor::Central, StateEvent::ResourceLoaded { name: name.clone(), handle })?;
        Ok(name)
    }

    /// The knowledge context for a turn: a store loaded into the session
    /// wins over the engine's configured one.
    fn kg_context(&self, state: &SessionState) -> Result<Option<KgContext>, KgError> {
        if let Some(h) = state.resource_of_kind(ResourceKind::KgStore) {
            let store = TripleStore::load(h.path())?;
            let (embedder, config) = match &self.kg {
                Some(k) => (k.embedder.clone(), k.config.clone()),
                None => (Arc::new(HashEmbedder::default()) as _, RetrievalConfig::default()),
            };
            return Ok(Some(KgContext::new(store, embedder, config)));
        }
        Ok(self.kg.clone())
    }

    fn invoke(
        &self,
        agent: AgentId,
        instruction: &str,
        state: &mut SessionState,
        kg: Option<&KgContext>,
    ) -> Result<(Option<Plan>, CandidateAnswer), EngineError> {
        match agent {
            AgentId::Analysis => {
                let plan = plan_calls(instruction, state, self.backend.as_ref(), &self.registry);
                state.apply_as(
                    Actor::Analysis,
                    StateEvent::Annotated { label: "plan".into(), detail: serde_json::to_value(&plan).expect("serializes") },
                )?;
                let env = ExecEnv { registry: &self.registry, kg, layout: self.config.layout, instruction };
                let result = execute_sequence(&plan.calls, state, &env)?;
                let candidate = CandidateAnswer::from_analysis(result, plan.diagnostics.clone());
                Ok((Some(plan), candidate))
            }
            AgentId::Kg => {
                let candidate = match kg.map(|k| kgagent::answer_query(instruction, None, self.backend.as_ref(), k)) {
                    Some(Ok(answer)) => CandidateAnswer::from_kg(answer),
                    Some(Err(e)) => {
                        let mut c = CandidateAnswer::empty(AgentId::Kg);
                        c.narrative = format!("retrieval failed: {e}");
                        c
                    }
                    None => CandidateAnswer::empty(AgentId::Kg),
                };
                Ok((None, candidate))
            }
        }
    }

    /// Run one user turn to a terminal outcome.
    pub fn run_turn(&self, state: &mut SessionState, query: &str) -> Result<TurnOutcome, EngineError> {
        let started = Instant::now();
        let audit_start = state.audit().len();
        let mut out = TurnOutcome {
            query: query.trim().to_string(),
            status: TurnStatus::Escalated,
            routing: None,
            candidate: None,
            verdict: None,
            escalation: None,
            iterations: vec![],
            loaded: vec![],
            audit_range: (audit_start, audit_start),
            elapsed_ms: 0.0,
        };
        let finish = |mut out: TurnOutcome, state: &SessionState| {
            out.audit_range.1 = state.audit().len();
            out.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
            Ok(out)
        };

        let pre = match router::preprocess(query, state) {
            Ok(p) => p,
            Err(_) => return Err(EngineError::EmptyQuery),
        };
        if pre.reset_flag {
            state.apply_as(Actor::Central, StateEvent::Reset)?;
            out.status = TurnStatus::Reset;
            return finish(out, state);
        }
        if let Some(path) = load_command(&pre.raw_text) {
            out.loaded.push(self.load_resource(state, &path, None, None)?);
            out.status = TurnStatus::Loaded;
            return finish(out, state);
        }
        state.apply_as(Actor::Central, StateEvent::QueryReceived { query: pre.raw_text.clone() })?;
        // Paths named in the query are loaded when they exist; missing ones
        // surface later as planner diagnostics.
        for p in &pre.file_paths {
            if !crate::analysis::plan::path_loaded(state, p) && self.resolve(p).exists() {
                out.loaded.push(self.load_resource(state, p, None, None)?);
            }
        }

        let routing = match router::route(&pre, state, self.backend.as_ref(), &self.registry) {
            Ok(r) => r,
            Err(RouterError::EscalationNeeded(reason)) => {
                let report = EscalationReport {
                    query: pre.raw_text.clone(),
                    candidate: CandidateAnswer::empty(AgentId::Analysis),
                    failed_checks: vec![],
                    missing_info: vec![reason, "a task keyword or a loaded resource".into()],
                    budget_exhausted: false,
                };
                state.apply_as(
                    Actor::Central,
                    StateEvent::Annotated {
                        label: "escalation".into(),
                        detail: serde_json::to_value(&report).expect("serializes"),
                    },
                )?;
                out.escalation = Some(report);
                return finish(out, state);
            }
            Err(RouterError::EmptyQuery) => return Err(EngineError::EmptyQuery),
            Err(RouterError::Session(e)) => return Err(e.into()),
        };
        out.routing = Some(routing.clone());

        let kg = self.kg_context(state).ok().flatten();
        let mut agent = routing.agent_id;
        let mut instruction = routing.instruction.clone();
        loop {
            let (plan, candidate) = self.invoke(agent, &instruction, state, kg.as_ref())?;
            if !self.config.critic_enabled {
                out.iterations.push(Iteration { agent, instruction, plan, candidate: candidate.clone(), verdict: None });
                out.status = TurnStatus::Unverified;
                out.candidate = Some(candidate);
                return finish(out, state);
            }
            let verdict =
                critic::decide(&pre.raw_text, &instruction, &candidate, state, &self.config.critic, &self.registry)?;
            out.iterations.push(Iteration {
                agent,
                instruction: instruction.clone(),
                plan,
                candidate: candidate.clone(),
                verdict: Some(verdict.clone()),
            });
            match verdict.decision {
                CriticDecision::Accept => {
                    state.apply_as(
                        Actor::Central,
                        StateEvent::Annotated {
                            label: "recommendation".into(),
                            detail: serde_json::to_value(&candidate).expect("serializes"),
                        },
                    )?;
                    out.status = TurnStatus::Accepted;
                    out.candidate = Some(candidate);
                    out.verdict = Some(verdict);
                    return finish(out, state);
                }
                CriticDecision::Revise => {
                    agent = verdict.next_agent.expect("revise names an agent");
                    instruction = verdict.refinement.clone().expect("revise carries a refinement");
                    state.apply_as(
                        Actor::Critic,
                        StateEvent::AgentInvoked { agent, instruction: instruction.clone() },
                    )?;
                }
                CriticDecision::Escalate => {
                    let report = EscalationReport {
                        query: pre.raw_text.clone(),
                        candidate: candidate.clone(),
                        failed_checks: verdict.failed_checks.clone(),
                        missing_info: verdict.missing_info.clone(),
                        budget_exhausted: verdict.invocation > self.config.critic.budget,
                    };
                    state.apply_as(
                        Actor::Critic,
                        StateEvent::Annotated {
                            label: "escalation-report".into(),
                            detail: serde_json::to_value(&report).expect("serializes"),
                        },
                    )?;
                    out.candidate = Some(candidate);
                    out.verdict = Some(verdict);
                    out.escalation = Some(report);
                    return finish(out, state);
                }
            }
        }
    }

    /// Record a human approval, override or rejection. The verdict in force
    /// is kept alongside the signal.
    pub fn approve(
        &self,
        state: &mut SessionState,
        approval: ApprovalKind,
        turn: Option<u64>,
        note: &str,
        retained_verdict: Option<CriticDecision>,
    ) -> Result<(), EngineError> {
        state.apply_as(
            Actor::Human,
            StateEvent::HumanApproved { approval, turn, note: note.to_string(), retained_verdict },
        )?;
        Ok(())
    }
}

/// Short human-readable rendering of an outcome, as printed by the REPL.
pub fn render_outcome(out: &TurnOutcome) -> String {
    let mut s = String::new();
    match out.status {
        TurnStatus::Reset => s.push_str("Session reset.\n"),
        TurnStatus::Loaded => s.push_str(&format!("Loaded {}.\n", out.loaded.join(", "))),
        TurnStatus::Accepted | TurnStatus::Unverified => {
            if out.status == TurnStatus::Unverified {
                s.push_str("(unverified: critic disabled)\n");
            }
            if let Some(c) = &out.candidate {
                match render_table(c) {
                    Some(t) => s.push_str(&t),
                    None => s.push_str(&c.narrative),
                }
            }
        }
        TurnStatus::Escalated => {
            s.push_str("Escalated for human review.\n");
            if let Some(r) = &out.escalation {
                for f in &r.failed_checks {
                    s.push_str(&format!("  failed {}\n", f.summary()));
                }
                for m in &r.missing_info {
                    s.push_str(&format!("  needs: {m}\n"));
                }
            }
        }
    }
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s.push_str(&format!("({:.1} ms)\n", out.elapsed_ms));
    s
}

/// Audit detail for a verdict, used by the service when echoing a turn.
pub fn verdict_summary(v: &CriticVerdict) -> serde_json::Value {
    json!({
        "decision": v.decision,
        "score": v.score,
        "failed_checks": v.failed_checks.iter().map(|f| f.summary()).collect::<Vec<_>>(),
        "invocation": v.invocation,
    })
}
