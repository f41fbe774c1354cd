//! Critic gate: four check classes, accept/revise/escalate under a revision
//! budget, refinement instructions and escalation reports.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    metric_satisfies, requested_metrics, AnalysisResult, Diagnostic, ExecFailure, ReportedQuantity, ToolOutput,
    ToolRegistry,
};
use crate::blade::{CompensationVector, DEFAULT_TILT_DEG};
use crate::kg::RetrievalResult;
use crate::kgagent::{Claim, KgAnswer};
use crate::query;
use crate::session::{
    Actor, AgentId, CriticDecision, ProvenanceIndex, ProvenanceMap, ProvenanceTarget, SessionError, SessionState,
    StateEvent,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckWeights {
    pub intent: f64,
    pub grounding: f64,
    pub evidence: f64,
    pub safety: f64,
}

impl Default for CheckWeights {
    fn default() -> Self {
        Self { intent: 1.0, grounding: 1.0, evidence: 1.0, safety: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticConfig {
    /// Revision budget L.
    pub budget: u32,
    /// Max |t_r|, inches.
    pub max_trc: f64,
    /// Max |t_l|, inches.
    pub max_tlc: f64,
    pub psi_v_threshold: f64,
    /// Declared tilt convention for the sign check, degrees.
    pub tilt_deg: f64,
    pub weights: CheckWeights,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            budget: 3,
            max_trc: 0.010,
            max_tlc: 0.010,
            psi_v_threshold: 0.5,
            tilt_deg: DEFAULT_TILT_DEG,
            weights: CheckWeights::default(),
        }
    }
}

impl CriticConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.budget < 1 {
            return Err("critic budget must be at least 1".into());
        }
        if !(self.max_trc > 0.0 && self.max_tlc > 0.0) {
            return Err("offset limits must be positive".into());
        }
        if !(self.tilt_deg > 0.0 && self.tilt_deg < 90.0) {
            return Err("tilt must lie in (0, 90) degrees".into());
        }
        let w = self.weights;
        if [w.intent, w.grounding, w.evidence, w.safety].iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err("check weights must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Largest |delta| whose offsets stay inside both limits.
    pub fn delta_limit(&self) -> f64 {
        let t = self.tilt_deg.to_radians();
        (self.max_tlc / t.cos()).min(self.max_trc / t.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckId {
    Intent,
    ToolGrounding,
    Evidence,
    Safety,
}

impl CheckId {
    pub const ORDER: [CheckId; 4] = [Self::Intent, Self::ToolGrounding, Self::Evidence, Self::Safety];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Intent => "intent",
            Self::ToolGrounding => "tool-grounding",
            Self::Evidence => "evidence",
            Self::Safety => "safety",
        }
    }

    fn weight(self, w: &CheckWeights) -> f64 {
        match self {
            Self::Intent => w.intent,
            Self::ToolGrounding => w.grounding,
            Self::Evidence => w.evidence,
            Self::Safety => w.safety,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCheck {
    pub check: CheckId,
    pub detail: String,
    /// False when another agent pass cannot fix it.
    pub repairable: bool,
    /// What a human would have to supply.
    pub missing: Vec<String>,
    /// Metrics absent from the candidate, for intent failures.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_metrics: Vec<String>,
}

impl FailedCheck {
    fn new(check: CheckId, detail: impl Into<String>) -> Self {
        Self { check, detail: detail.into(), repairable: true, missing: vec![], missing_metrics: vec![] }
    }

    fn fatal(mut self) -> Self {
        self.repairable = false;
        self
    }

    fn needs(mut self, what: impl Into<String>) -> Self {
        self.missing.push(what.into());
        self
    }

    pub fn summary(&self) -> String {
        format!("{}: {}", self.check.as_str(), self.detail)
    }
}

pub type CheckOutcome = Result<(), FailedCheck>;

/// What the critic inspects: either agent's result in one shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAnswer {
    pub origin: AgentId,
    pub narrative: String,
    pub quantities: Vec<ReportedQuantity>,
    pub provenance: ProvenanceMap,
    pub outputs: Vec<ToolOutput>,
    pub evidence_ids: Vec<String>,
    pub claims: Vec<Claim>,
    pub retrieval: Option<RetrievalResult>,
    pub proposed_offsets: Option<Vec<CompensationVector>>,
    pub diagnostics: Vec<Diagnostic>,
    pub failure: Option<ExecFailure>,
}

impl CandidateAnswer {
    pub fn empty(origin: AgentId) -> Self {
        Self {
            origin,
            narrative: String::new(),
            quantities: vec![],
            provenance: ProvenanceMap::default(),
            outputs: vec![],
            evidence_ids: vec![],
            claims: vec![],
            retrieval: None,
            proposed_offsets: None,
            diagnostics: vec![],
            failure: None,
        }
    }

    pub fn from_analysis(result: AnalysisResult, diagnostics: Vec<Diagnostic>) -> Self {
        let offsets = (!result.offsets.is_empty()).then(|| result.offsets.clone());
        Self {
            origin: AgentId::Analysis,
            narrative: result.narrative,
            quantities: result.quantities,
            provenance: result.provenance,
            outputs: result.outputs,
            evidence_ids: vec![],
            claims: vec![],
            retrieval: result.retrieval,
            proposed_offsets: offsets,
            diagnostics,
            failure: result.failure,
        }
    }

    pub fn from_kg(answer: KgAnswer) -> Self {
        let mut c = Self::empty(AgentId::Kg);
        c.evidence_ids = answer.cited_ids();
        c.narrative = answer.narrative;
        c.claims = answer.claims;
        c.retrieval = Some(answer.retrieval);
        c
    }

    pub fn is_empty(&self) -> bool {
        self.quantities.is_empty() && self.claims.is_empty()
    }

    pub fn quantity(&self, id: &str) -> Option<&ReportedQuantity> {
        self.quantities.iter().find(|q| q.id == id)
    }
}

impl ProvenanceIndex for CandidateAnswer {
    fn has_output_field(&self, call: usize, field: &str) -> bool {
        self.outputs.iter().any(|o| o.call_index == call && o.fields.contains_key(field))
    }

    fn has_triple(&self, id: &str) -> bool {
        self.retrieval.as_ref().is_some_and(|r| r.contains(id))
    }
}

fn analysis_intent(query_text: &str, c: &CandidateAnswer) -> CheckOutcome {
    let text = query::strip_hints(query_text);
    if c.quantities.is_empty() {
        let mut f = FailedCheck::new(CheckId::Intent, "candidate reports no quantities");
        for d in &c.diagnostics {
            if let Diagnostic::ResourceMissing(r) = d {
                // Another pass cannot load data; only a human can.
                f = f.needs(format!("resource missing: load {r}")).fatal();
            }
        }
        f.missing_metrics = requested_metrics(&text);
        if let Some(e) = &c.failure {
            f.detail.push_str(&format!("; call {} ({}) failed: {}", e.call_index, e.tool, e.error));
        }
        return Err(f);
    }
    let mut problems = Vec::new();
    let missing: Vec<String> = requested_metrics(&text)
        .into_iter()
        .filter(|m| !c.quantities.iter().any(|q| metric_satisfies(m, &q.metric)))
        .collect();
    if !missing.is_empty() {
        problems.push(format!("missing metric category: {}", missing.join(", ")));
    }
    let keys = query::pair_keys(&text);
    let absent: Vec<String> =
        keys.iter().filter(|k| !c.quantities.iter().any(|q| q.pair_key == **k)).map(ToString::to_string).collect();
    if !absent.is_empty() {
        problems.push(format!("no quantities for pair(s) {}", absent.join(", ")));
    }
    if let Some(want) = query::part_range(&text) {
        let wrong: BTreeSet<String> = c
            .quantities
            .iter()
            .filter(|q| q.part_scoped && q.parts != Some(want))
            .map(|q| q.parts.map_or("all parts".to_string(), |r| format!("parts {r}")))
            .collect();
        if !wrong.is_empty() {
            problems.push(format!(
                "requested parts {want} but quantities cover {}",
                wrong.into_iter().collect::<Vec<_>>().join(", ")
            ));
        }
    }
    if problems.is_empty() {
        return Ok(());
    }
    let mut f = FailedCheck::new(CheckId::Intent, problems.join("; "));
    f.missing_metrics = missing;
    if let Some(e) = &c.failure {
        f.detail.push_str(&format!("; call {} ({}) failed: {}", e.call_index, e.tool, e.error));
    }
    Err(f)
}

/// Required entities of the query must appear in the candidate: requested
/// metric categories, pair keys and the part range for analysis answers; at
/// least one claim for graph answers.
pub fn check_intent(query_text: &str, c: &CandidateAnswer) -> CheckOutcome {
    if c.origin == AgentId::Kg && c.retrieval.is_none() {
        return Err(FailedCheck::new(CheckId::Intent, "no knowledge graph available")
            .needs("load a knowledge graph store")
            .fatal());
    }
    if c.is_empty() && c.narrative.trim().is_empty() {
        let mut f = FailedCheck::new(CheckId::Intent, "empty candidate");
        f.missing_metrics = requested_metrics(&query::strip_hints(query_text));
        return Err(f);
    }
    match c.origin {
        AgentId::Analysis => analysis_intent(query_text, c),
        AgentId::Kg if c.claims.is_empty() => {
            Err(FailedCheck::new(CheckId::Intent, "knowledge answer has no claims").needs("knowledge covering the question"))
        }
        AgentId::Kg => Ok(()),
    }
}

static NARRATIVE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([A-Za-z_]+(?:@\d+)?\[\d+\+\d+\])=").unwrap());

/// Every reported quantity, and every quantity id quoted in the narrative,
/// must have a provenance entry that resolves against the call outputs.
pub fn check_tool_grounding(c: &CandidateAnswer) -> CheckOutcome {
    let mut unmapped: Vec<String> =
        c.quantities.iter().filter(|q| c.provenance.get(&q.id).is_none()).map(|q| q.id.clone()).collect();
    for cap in NARRATIVE_ID.captures_iter(&c.narrative) {
        let id = cap[1].to_string();
        if c.provenance.get(&id).is_none() && !unmapped.contains(&id) {
            unmapped.push(id);
        }
    }
    let mut problems = Vec::new();
    if !unmapped.is_empty() {
        problems.push(format!("unmapped quantities: {}", unmapped.join(", ")));
    }
    if let Err(e) = c.provenance.verify(c) {
        problems.push(e.to_string());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(FailedCheck::new(CheckId::ToolGrounding, problems.join("; ")))
    }
}

/// Constraint and best-practice claims need at least one retrieved id, and
/// no claim may cite an id the retrieval did not return.
pub fn check_evidence(c: &CandidateAnswer, retrieval: Option<&RetrievalResult>) -> CheckOutcome {
    let mut problems = Vec::new();
    for (i, claim) in c.claims.iter().enumerate() {
        let retrieved = |id: &String| retrieval.is_some_and(|r| r.contains(id));
        let foreign: Vec<&str> = claim.evidence.iter().filter(|id| !retrieved(id)).map(String::as_str).collect();
        if !foreign.is_empty() {
            problems.push(format!("claim {} cites ids not retrieved: {}", i + 1, foreign.join(", ")));
        } else if claim.tag.needs_evidence() && !claim.evidence.iter().any(retrieved) {
            problems.push(format!("{} claim {} cites no retrieved evidence", claim.tag, i + 1));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(FailedCheck::new(CheckId::Evidence, problems.join("; ")))
    }
}

/// Offset bounds, sign agreement with the declared tilt convention
/// (t_l = delta cos theta and t_r = delta sin theta share delta's sign for
/// 0 < theta < 90), and the variability ratio threshold.
pub fn check_safety(c: &CandidateAnswer, config: &CriticConfig) -> CheckOutcome {
    let mut bound = Vec::new();
    let mut sign = Vec::new();
    for v in c.proposed_offsets.iter().flatten() {
        if v.t_r.abs() > config.max_trc || v.t_l.abs() > config.max_tlc {
            bound.push(format!("{} (t_r {:.6}, t_l {:.6})", v.pair_key, v.t_r, v.t_l));
        }
        let s = |x: f64| if x == 0.0 { 0.0 } else { x.signum() };
        let signs = [s(v.delta), s(v.t_l), s(v.t_r)];
        let nonzero: Vec<f64> = signs.into_iter().filter(|x| *x != 0.0).collect();
        if nonzero.windows(2).any(|w| w[0] != w[1]) || !(v.theta_deg > 0.0 && v.theta_deg < 90.0) {
            sign.push(v.pair_key.to_string());
        }
    }
    let unstable: Vec<String> = c
        .quantities
        .iter()
        .filter(|q| q.metric == "psi_v" && q.value > config.psi_v_threshold)
        .map(|q| format!("{} (psi_v {:.3} > {})", q.pair_key, q.value, config.psi_v_threshold))
        .collect();
    if !sign.is_empty() {
        return Err(FailedCheck::new(CheckId::Safety, format!("offset signs inconsistent with the tilt convention at {}", sign.join(", ")))
            .fatal()
            .needs("review of the offset sign convention"));
    }
    if !unstable.is_empty() {
        let mut f = FailedCheck::new(CheckId::Safety, format!("variability above threshold at {}", unstable.join(", ")))
            .fatal()
            .needs("human judgment on compensating unstable pairs");
        if !bound.is_empty() {
            f.detail.push_str(&format!("; offsets over limit at {}", bound.join(", ")));
        }
        return Err(f);
    }
    if !bound.is_empty() {
        return Err(FailedCheck::new(
            CheckId::Safety,
            format!("offsets over limit (t_r {}, t_l {} in) at {}", config.max_trc, config.max_tlc, bound.join(", ")),
        )
        .needs("approval of a bounded correction"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticVerdict {
    pub decision: CriticDecision,
    pub failed_checks: Vec<FailedCheck>,
    pub next_agent: Option<AgentId>,
    pub refinement: Option<String>,
    /// Weighted fraction of applicable checks that passed.
    pub score: f64,
    pub missing_info: Vec<String>,
    pub checks_run: Vec<CheckId>,
    /// Critic invocations for this query including this one.
    pub invocation: u32,
}

/// Report handed to a human when the critic stops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationReport {
    pub query: String,
    pub candidate: CandidateAnswer,
    pub failed_checks: Vec<FailedCheck>,
    pub missing_info: Vec<String>,
    pub budget_exhausted: bool,
}

/// Run every applicable check in the fixed order.
pub fn run_checks(
    query_text: &str,
    c: &CandidateAnswer,
    config: &CriticConfig,
) -> (Vec<CheckId>, Vec<FailedCheck>) {
    let mut run = vec![CheckId::Intent];
    let mut failed = Vec::new();
    if let Err(f) = check_intent(query_text, c) {
        failed.push(f);
    }
    if c.origin == AgentId::Analysis {
        run.push(CheckId::ToolGrounding);
        if let Err(f) = check_tool_grounding(c) {
            failed.push(f);
        }
    }
    if c.origin == AgentId::Kg {
        run.push(CheckId::Evidence);
        if let Err(f) = check_evidence(c, c.retrieval.as_ref()) {
            failed.push(f);
        }
    }
    if c.proposed_offsets.is_some() || c.quantities.iter().any(|q| q.metric == "psi_v") {
        run.push(CheckId::Safety);
        if let Err(f) = check_safety(c, config) {
            failed.push(f);
        }
    }
    (run, failed)
}

pub fn score(run: &[CheckId], failed: &[FailedCheck], w: &CheckWeights) -> f64 {
    let total: f64 = run.iter().map(|c| c.weight(w)).sum();
    if total <= 0.0 {
        return if failed.is_empty() { 1.0 } else { 0.0 };
    }
    let passed: f64 = run.iter().filter(|c| !failed.iter().any(|f| f.check == **c)).map(|c| c.weight(w)).sum();
    passed / total
}

fn owner(check: &FailedCheck, origin: AgentId) -> AgentId {
    match check.check {
        CheckId::Intent if !check.missing_metrics.is_empty() => AgentId::Analysis,
        CheckId::Intent => origin,
        CheckId::ToolGrounding | CheckId::Safety => AgentId::Analysis,
        CheckId::Evidence => AgentId::Kg,
    }
}

/// Refinement for the first failed check, built on the current
/// instruction. Missing metrics are requested through a tool-hint block
/// naming the remaining hinted tools plus the producer chain of the missing
/// metrics; check details travel in a critic note.
pub fn refinement(instruction: &str, first: &FailedCheck, config: &CriticConfig, registry: &ToolRegistry) -> String {
    let base = query::strip_hints(instruction);
    let hints = query::tool_hints(instruction);
    let keep = |text: String| match &hints {
        Some(h) => query::with_hints(&text, h),
        None => text,
    };
    match first.check {
        CheckId::Intent if !first.missing_metrics.is_empty() => {
            let mut tools: Vec<String> = hints.clone().unwrap_or_default();
            tools.retain(|t| registry.get(t).is_some());
            for t in registry.chain_for_metrics(&first.missing_metrics) {
                if !tools.contains(&t) {
                    tools.push(t);
                }
            }
            tools.sort_by_key(|t| registry.position(t).unwrap_or(usize::MAX));
            query::with_hints(&query::with_note(&base, &first.detail), &tools)
        }
        CheckId::Intent | CheckId::ToolGrounding => keep(query::with_note(&base, &format!("recompute; {}", first.detail))),
        CheckId::Evidence => {
            query::with_note(&base, &format!("cite retrieved triple ids for every constraint and best practice; {}", first.detail))
        }
        CheckId::Safety => {
            // Rounded down so the stated limit never exceeds the bound.
            let limit = (config.delta_limit() * 1e6).floor() / 1e6;
            let tools = hints.clone().unwrap_or_else(|| registry.chain_for_metrics(&requested_metrics(&base)));
            let text = format!("{base} using the bounded-residual strategy with limit {limit:.6} in");
            query::with_hints(&query::with_note(&text, &first.detail), &tools)
        }
    }
}

/// Decide on a candidate and record the decision. Checks run against the
/// user's query; the refinement builds on the instruction the agent last
/// received. Acceptance requires every
/// applicable check to pass. Failures are revised while fewer than L
/// decisions have been made for this query, unless a failure is not
/// repairable; otherwise the candidate is escalated.
pub fn decide(
    query_text: &str,
    instruction: &str,
    candidate: &CandidateAnswer,
    state: &mut SessionState,
    config: &CriticConfig,
    registry: &ToolRegistry,
) -> Result<CriticVerdict, SessionError> {
    let n = state.critic_count();
    let (run, failed) = run_checks(query_text, candidate, config);
    let j = score(&run, &failed, &config.weights);
    let mut verdict = CriticVerdict {
        decision: CriticDecision::Accept,
        failed_checks: failed,
        next_agent: None,
        refinement: None,
        score: j,
        missing_info: vec![],
        checks_run: run,
        invocation: n + 1,
    };
    if let Some(first) = verdict.failed_checks.first().cloned() {
        let fatal = verdict.failed_checks.iter().any(|f| !f.repairable);
        if !fatal && n < config.budget {
            verdict.decision = CriticDecision::Revise;
            verdict.next_agent = Some(owner(&first, candidate.origin));
            verdict.refinement = Some(refinement(instruction, &first, config, registry));
        } else {
            verdict.decision = CriticDecision::Escalate;
            let mut info: Vec<String> = Vec::new();
            for f in &verdict.failed_checks {
                for m in &f.missing {
                    if !info.contains(m) {
                        info.push(m.clone());
                    }
                }
                if !f.missing_metrics.is_empty() {
                    info.push(format!("quantities for {}", f.missing_metrics.join(", ")));
                }
            }
            if n >= config.budget {
                info.push(format!("critic budget L={} exhausted", config.budget));
            }
            if info.is_empty() {
                info.push(format!("resolution of: {}", verdict.failed_checks.iter().map(FailedCheck::summary).collect::<Vec<_>>().join("; ")));
            }
            verdict.missing_info = info;
        }
    }
    state.apply_as(
        Actor::Critic,
        StateEvent::CriticDecided {
            decision: verdict.decision,
            failed_checks: verdict.failed_checks.iter().map(FailedCheck::summary).collect(),
            score: j,
        },
    )?;
    Ok(verdict)
}

/// Re-run every check on an accepted candidate, including direct provenance
/// resolution of each quantity and the offset bounds.
pub fn recheck_accepted(query_text: &str, c: &CandidateAnswer, config: &CriticConfig) -> Result<(), String> {
    let (_, failed) = run_checks(query_text, c, config);
    if let Some(f) = failed.first() {
        return Err(f.summary());
    }
    for q in &c.quantities {
        match c.provenance.get(&q.id) {
            Some(ProvenanceTarget::ToolOutput { call, field }) if c.has_output_field(*call, field) => {}
            Some(ProvenanceTarget::Triple(id)) if c.has_triple(id) => {}
            _ => return Err(format!("{} does not resolve", q.id)),
        }
    }
    for v in c.proposed_offsets.iter().flatten() {
        if v.t_r.abs() > config.max_trc || v.t_l.abs() > config.max_tlc {
            return Err(format!("offset at {} over limit", v.pair_key));
        }
    }
    Ok(())
}
