//! Turning an instruction into a validated call sequence.
//!
//! The backend proposes calls; every proposal is checked against the
//! registry here. Arguments are coerced where a rule applies, otherwise
//! dropped; missing inputs are wired to the latest earlier producer or
//! filled from session resources and the instruction's entities; calls whose
//! required inputs cannot be satisfied are dropped. Every change is
//! recorded as a [`PlanRepair`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::args::{coerce, normalize_path, ArgValue};
use super::intent::requested_metrics;
use super::registry::{ParamType, ToolRegistry, ToolSpec, MAX_CALLS};
use super::AnalysisError;
use crate::blade::{PairKey, PartRange};
use crate::gateway::{Backend, Role};
use crate::query;
use crate::session::{ResourceHandle, ResourceKind, SessionState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    /// 1-based position in the sequence.
    pub index: usize,
    pub tool: String,
    pub args: BTreeMap<String, ArgValue>,
    pub depends_on: Vec<usize>,
}

impl ToolCall {
    pub fn new(index: usize, tool: impl Into<String>, args: BTreeMap<String, ArgValue>) -> Self {
        let mut depends_on: Vec<usize> = args.values().filter_map(ArgValue::as_ref_index).collect();
        depends_on.sort_unstable();
        depends_on.dedup();
        Self { index, tool: tool.into(), args, depends_on }
    }

    pub fn plain_args(&self) -> Map<String, Value> {
        self.args.iter().map(|(k, v)| (k.clone(), v.to_plain())).collect()
    }
}

/// A call as the backend wrote it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedCall {
    pub tool: String,
    #[serde(default)]
    pub args: Map<String, Value>,
}

impl ProposedCall {
    pub fn bare(tool: impl Into<String>) -> Self {
        Self { tool: tool.into(), args: Map::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairAction {
    Coerced,
    DroppedArg,
    Filled,
    Wired,
    DroppedCall,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRepair {
    /// 1-based position in the proposal.
    pub proposal: usize,
    pub tool: String,
    pub action: RepairAction,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum Diagnostic {
    ResourceMissing(String),
    NoViableCalls(String),
    BackendFallback(String),
}

impl Diagnostic {
    pub fn is_resource_missing(&self) -> bool {
        matches!(self, Self::ResourceMissing(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanOrigin {
    Model,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub calls: Vec<ToolCall>,
    pub proposal: Vec<ProposedCall>,
    pub repairs: Vec<PlanRepair>,
    pub diagnostics: Vec<Diagnostic>,
    pub origin: PlanOrigin,
}

/// Entities the planner may use to fill unset arguments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Entities {
    pub part_range: Option<PartRange>,
    pub pair_keys: Vec<PairKey>,
    pub target_part: Option<u32>,
    pub theta: Option<f64>,
    pub strategy: Option<&'static str>,
    pub limit: Option<f64>,
    pub text: String,
}

impl Entities {
    pub fn from_instruction(instruction: &str) -> Self {
        let text = query::strip_hints(instruction);
        Self {
            part_range: query::part_range(&text),
            pair_keys: query::pair_keys(&text),
            target_part: query::target_part(&text),
            theta: query::theta(&text),
            strategy: query::strategy(&text),
            limit: query::limit(&text),
            text,
        }
    }
}

fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let t = t.strip_prefix("```json").or_else(|| t.strip_prefix("```")).unwrap_or(t);
    t.strip_suffix("```").unwrap_or(t).trim()
}

fn proposal_from_value(v: &Value) -> Option<Vec<ProposedCall>> {
    let items = match v {
        Value::Array(a) => a,
        Value::Object(o) => o.get("calls").or_else(|| o.get("plan")).or_else(|| o.get("tools"))?.as_array()?,
        _ => return None,
    };
    items
        .iter()
        .map(|it| match it {
            Value::String(s) => Some(ProposedCall::bare(s.trim())),
            Value::Object(o) => {
                let tool = o.get("tool").or_else(|| o.get("name"))?.as_str()?.trim().to_string();
                let args = o
                    .get("args")
                    .or_else(|| o.get("arguments"))
                    .and_then(Value::as_object)
                    .cloned()
                    .unwrap_or_default();
                Some(ProposedCall { tool, args })
            }
            _ => None,
        })
        .collect()
}

/// Accepts a JSON array of `{"tool", "args"}` objects or names, an object
/// wrapping one under `calls`/`plan`/`tools`, or a plain list of tool
/// identifiers separated by commas or newlines.
pub fn parse_proposal(text: &str) -> Result<Vec<ProposedCall>, String> {
    let body = strip_fences(text);
    if let Ok(v) = serde_json::from_str::<Value>(body) {
        return proposal_from_value(&v).ok_or_else(|| "JSON plan has an unexpected shape".to_string());
    }
    if let (Some(a), Some(b)) = (body.find('['), body.rfind(']')) {
        if let Some(p) = serde_json::from_str::<Value>(&body[a..=b]).ok().and_then(|v| proposal_from_value(&v)) {
            return Ok(p);
        }
    }
    let names: Vec<ProposedCall> = body
        .split([',', '\n', ';'])
        .map(|s| s.trim().trim_matches(|c| c == '-' || c == '*' || c == '`').trim())
        .filter(|s| !s.is_empty() && s.contains('_') && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'))
        .map(ProposedCall::bare)
        .collect();
    if names.is_empty() && !body.is_empty() {
        return Err("no tool names found in planner response".into());
    }
    Ok(names)
}

/// Deterministic plan used when the backend is unavailable: the instruction's
/// tool hints when present, else the producers of the requested metrics.
pub fn fallback_proposal(instruction: &str, registry: &ToolRegistry) -> Vec<ProposedCall> {
    if let Some(h) = query::tool_hints(instruction) {
        return h.into_iter().map(ProposedCall::bare).collect();
    }
    let mut names = registry.chain_for_metrics(&requested_metrics(instruction));
    let lower = instruction.to_lowercase();
    if (lower.contains("slice") || lower.contains("subset")) && names.iter().any(|n| n == "compute_inspection_pairs") {
        let at = names.iter().position(|n| n == "compute_inspection_pairs").unwrap() + 1;
        names.insert(at, "fetch_inspection_slices".into());
    }
    names.into_iter().map(ProposedCall::bare).collect()
}

/// Resource matching `hint` (state name, path or file name), or the
/// session's resource of `kind` when no hint is given.
pub fn find_resource<'a>(
    state: &'a SessionState,
    kind: ResourceKind,
    hint: Option<&str>,
) -> Option<(&'a str, &'a ResourceHandle)> {
    let resources = state.resources();
    match hint {
        None => state
            .resource_of_kind(kind)
            .and_then(|h| resources.iter().find(|(_, r)| *r == h))
            .map(|(n, h)| (n.as_str(), h)),
        Some(hint) => {
            let want = normalize_path(hint);
            let file = want.rsplit('/').next().unwrap_or(&want).to_string();
            resources.iter().filter(|(_, h)| h.kind == kind).map(|(n, h)| (n.as_str(), h)).find(|(n, h)| {
                let uri = normalize_path(&h.uri);
                *n == want || uri == want || uri.ends_with(&format!("/{want}")) || uri.rsplit('/').next() == Some(file.as_str())
            })
        }
    }
}

/// Whether a path mentioned in an instruction is a loaded resource.
pub fn path_loaded(state: &SessionState, path: &str) -> bool {
    ResourceKind::ALL.into_iter().any(|k| find_resource(state, k, Some(path)).is_some())
}

pub fn planner_prompt(instruction: &str, state: &SessionState, registry: &ToolRegistry) -> String {
    let resources: Vec<String> =
        state.resources().iter().map(|(n, h)| format!("{n} ({}) = {}", h.kind, h.uri)).collect();
    format!(
        "Instruction: {instruction}\n\
         Loaded resources: {}\n\
         Tools:\n{}\
         Reply with a JSON array of {{\"tool\": name, \"args\": {{...}}}} objects in execution order. \
         Refer to the output of an earlier call as \"call-<k>\" (1-based). At most {MAX_CALLS} calls.\n",
        if resources.is_empty() { "none".to_string() } else { resources.join("; ") },
        registry.prompt_summary(),
    )
}

/// Ask the backend for a plan, validate and repair it. Backend failures and
/// unparseable responses fall back to [`fallback_proposal`].
pub fn plan_calls(
    instruction: &str,
    state: &SessionState,
    backend: &dyn Backend,
    registry: &ToolRegistry,
) -> Plan {
    let missing: Vec<Diagnostic> = query::file_paths(instruction)
        .into_iter()
        .filter(|p| !path_loaded(state, p))
        .map(Diagnostic::ResourceMissing)
        .collect();
    if !missing.is_empty() {
        return Plan { calls: vec![], proposal: vec![], repairs: vec![], diagnostics: missing, origin: PlanOrigin::Fallback };
    }
    let mut diagnostics = Vec::new();
    let (proposal, origin) = match backend.complete(Role::AnalysisPlanner, &planner_prompt(instruction, state, registry)) {
        Ok(text) => match parse_proposal(&text) {
            Ok(p) => (p, PlanOrigin::Model),
            Err(e) => {
                diagnostics.push(Diagnostic::BackendFallback(e));
                (fallback_proposal(instruction, registry), PlanOrigin::Fallback)
            }
        },
        Err(e) => {
            diagnostics.push(Diagnostic::BackendFallback(e.to_string()));
            (fallback_proposal(instruction, registry), PlanOrigin::Fallback)
        }
    };
    let mut plan = repair_plan(&proposal, instruction, state, registry);
    plan.origin = origin;
    diagnostics.append(&mut plan.diagnostics);
    plan.diagnostics = diagnostics;
    plan
}

/// The deterministic half of [`plan_calls`].
pub fn repair_plan(
    proposal: &[ProposedCall],
    instruction: &str,
    state: &SessionState,
    registry: &ToolRegistry,
) -> Plan {
    let ent = Entities::from_instruction(instruction);
    let mut repairs = Vec::new();
    let mut diagnostics = Vec::new();
    let mut calls: Vec<ToolCall> = Vec::new();
    // Proposal position -> accepted call index.
    let mut remap: Vec<Option<usize>> = Vec::new();

    for (pi, prop) in proposal.iter().enumerate() {
        let pos = pi + 1;
        let mut rep = |action, detail: String| repairs.push(PlanRepair { proposal: pos, tool: prop.tool.clone(), action, detail });
        if calls.len() == MAX_CALLS {
            rep(RepairAction::Truncated, format!("sequence capped at {MAX_CALLS} calls"));
            remap.push(None);
            continue;
        }
        let Some(spec) = registry.get(&prop.tool) else {
            rep(RepairAction::DroppedCall, format!("unknown tool {:?}", prop.tool));
            remap.push(None);
            continue;
        };
        let index = calls.len() + 1;
        let mut args = BTreeMap::new();
        for (name, raw) in &prop.args {
            let Some(param) = spec.param(name) else {
                rep(RepairAction::DroppedArg, format!("{name}: not a parameter of {}", spec.name));
                continue;
            };
            match coerce(param, raw) {
                Ok((ArgValue::Ref(k), note)) => {
                    let target = remap.get(k.wrapping_sub(1)).copied().flatten();
                    match target.filter(|&t| param.ty.accepts(registry.get(&calls[t - 1].tool).unwrap().produces)) {
                        Some(t) => {
                            if let Some(n) = note {
                                rep(RepairAction::Coerced, n);
                            }
                            args.insert(name.clone(), ArgValue::Ref(t));
                        }
                        None => rep(RepairAction::DroppedArg, format!("{name}: call-{k} is not an earlier compatible output")),
                    }
                }
                Ok((ArgValue::Resource(hint), note)) => {
                    let ParamType::Resource(kind) = param.ty else { unreachable!() };
                    match find_resource(state, kind, Some(&hint)) {
                        Some((rname, _)) => {
                            if let Some(n) = note {
                                rep(RepairAction::Coerced, n);
                            }
                            args.insert(name.clone(), ArgValue::Resource(rname.to_string()));
                        }
                        None => rep(RepairAction::DroppedArg, format!("{name}: {hint:?} is not a loaded {kind}")),
                    }
                }
                Ok((v, note)) => {
                    if let Some(n) = note {
                        rep(RepairAction::Coerced, n);
                    }
                    args.insert(name.clone(), v);
                }
                Err(reason) => rep(RepairAction::DroppedArg, reason),
            }
        }

        let mut viable = true;
        for param in &spec.params {
            if args.contains_key(&param.name) {
                continue;
            }
            let filled = match &param.ty {
                ParamType::Ref(kinds) => calls
                    .iter()
                    .rev()
                    .find(|c| kinds.contains(&registry.get(&c.tool).unwrap().produces))
                    .map(|c| (ArgValue::Ref(c.index), RepairAction::Wired)),
                ParamType::Resource(kind) => {
                    find_resource(state, *kind, None).map(|(n, _)| (ArgValue::Resource(n.to_string()), RepairAction::Filled))
                }
                ParamType::PartRange => ent.part_range.map(|r| (ArgValue::Parts(r), RepairAction::Filled)),
                ParamType::PairKeys => {
                    (!ent.pair_keys.is_empty()).then(|| (ArgValue::Keys(ent.pair_keys.clone()), RepairAction::Filled))
                }
                ParamType::Angle => ent.theta.map(|t| (ArgValue::Number(t), RepairAction::Filled)),
                ParamType::Strategy => ent.strategy.map(|s| (ArgValue::Strategy(s.into()), RepairAction::Filled)),
                ParamType::Int if param.name == "target_part" => target_for(spec, &ent, &args)
                    .map(|n| (ArgValue::Int(i64::from(n)), RepairAction::Filled)),
                ParamType::Number if param.name == "limit" => {
                    ent.limit.map(|x| (ArgValue::Number(x), RepairAction::Filled))
                }
                ParamType::Text => {
                    (!ent.text.is_empty()).then(|| (ArgValue::Text(ent.text.clone()), RepairAction::Filled))
                }
                _ => None,
            };
            match filled {
                Some((v, action)) => {
                    // Routine fills from the instruction are not repairs; wiring
                    // and resource substitution are.
                    if matches!(action, RepairAction::Wired) || matches!(param.ty, ParamType::Resource(_)) {
                        rep(action, format!("{} = {v}", param.name));
                    }
                    args.insert(param.name.clone(), v);
                }
                None if param.required => {
                    viable = false;
                    if let ParamType::Resource(kind) = &param.ty {
                        diagnostics.push(Diagnostic::ResourceMissing(kind.to_string()));
                    }
                    rep(RepairAction::DroppedCall, format!("no value for required input {}", param.name));
                    break;
                }
                None => {}
            }
        }
        if !viable {
            remap.push(None);
            continue;
        }
        remap.push(Some(index));
        calls.push(ToolCall::new(index, spec.name.clone(), args));
    }
    if calls.is_empty() {
        diagnostics.push(Diagnostic::NoViableCalls(if proposal.is_empty() {
            "no calls proposed".into()
        } else {
            format!("all {} proposed calls were dropped", proposal.len())
        }));
    }
    diagnostics.dedup();
    Plan { calls, proposal: proposal.to_vec(), repairs, diagnostics, origin: PlanOrigin::Model }
}

fn target_for(spec: &ToolSpec, ent: &Entities, args: &BTreeMap<String, ArgValue>) -> Option<u32> {
    let drift_strategy = matches!(args.get("strategy"), Some(ArgValue::Strategy(s)) if s == "drift-at-target");
    if spec.name == "rb_compute_attribution_fractions" || drift_strategy {
        ent.target_part.or(ent.part_range.map(|r| r.end))
    } else {
        ent.target_part
    }
}

/// Schema check run before any execution.
pub fn validate_calls(calls: &[ToolCall], registry: &ToolRegistry) -> Result<(), AnalysisError> {
    if calls.len() > MAX_CALLS {
        return Err(AnalysisError::Schema { call: MAX_CALLS + 1, reason: format!("more than {MAX_CALLS} calls") });
    }
    for (i, c) in calls.iter().enumerate() {
        let schema = |reason: String| AnalysisError::Schema { call: c.index, reason };
        if c.index != i + 1 {
            return Err(schema(format!("index {} at position {}", c.index, i + 1)));
        }
        let spec = registry.get(&c.tool).ok_or_else(|| AnalysisError::UnknownTool(c.tool.clone()))?;
        if c.depends_on.iter().any(|&d| d >= c.index) {
            return Err(AnalysisError::Circular { call: c.index });
        }
        for (name, v) in &c.args {
            let p = spec.param(name).ok_or_else(|| schema(format!("unknown argument {name}")))?;
            if !v.matches_type(&p.ty) {
                return Err(schema(format!("{name}: {v} is not a {}", p.ty)));
            }
            if let ArgValue::Ref(k) = v {
                if *k >= c.index {
                    return Err(AnalysisError::Circular { call: c.index });
                }
                if *k == 0 || !c.depends_on.contains(k) {
                    return Err(schema(format!("{name}: call-{k} not declared in depends_on")));
                }
                let produced = registry.get(&calls[k - 1].tool).map(|t| t.produces);
                if !produced.is_some_and(|k| p.ty.accepts(k)) {
                    return Err(schema(format!("{name}: call-{k} output has the wrong kind")));
                }
            }
        }
        if let Some(p) = spec.params.iter().find(|p| p.required && !c.args.contains_key(&p.name)) {
            return Err(schema(format!("missing required argument {}", p.name)));
        }
    }
    Ok(())
}
