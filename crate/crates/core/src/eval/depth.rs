//! L1/L2/L3 tool-depth benchmark: reference scripts, the call judge and
//! scripted defect injection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::EvalError;
use crate::analysis::{coerce, parse_proposal, parse_ref, plan_calls, planner_prompt, ArgValue, ParamType, ToolCall, ToolRegistry};
use crate::gateway::{Backend, Role, ScriptedBackend, ScriptedRule};
use crate::session::SessionState;

pub const DEFAULT_QUERIES: &str = include_str!("../../benchmarks/depth/queries.jsonl");
pub const DEFAULT_REFERENCE: &str = include_str!("../../benchmarks/depth/reference.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
    L3,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::L1, Level::L2, Level::L3];
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefCall {
    pub tool: String,
    #[serde(default)]
    pub args: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchQuery {
    pub id: String,
    pub level: Level,
    pub prompt: String,
    /// Reference call sequence; `call-<k>` strings are 1-based references.
    pub script: Vec<RefCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_values: Option<BTreeMap<String, f64>>,
}

/// A required (non-helper) tool with its argument constraints and the
/// required tools whose outputs it consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct RequiredTool {
    pub tool: String,
    pub constraints: BTreeMap<String, ArgValue>,
    pub after: Vec<String>,
}

#[derive(Deserialize)]
struct QueryLine {
    id: String,
    level: Level,
    prompt: String,
}

#[derive(Deserialize)]
struct RefLine {
    id: String,
    script: Vec<RefCall>,
    #[serde(default)]
    reference_values: Option<BTreeMap<String, f64>>,
}

fn jsonl<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<Vec<T>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| EvalError::Format(format!("{what} line {}: {e}", i + 1))))
        .collect()
}

/// Join a query file and a reference file by id.
pub fn parse_bench(queries: &str, reference: &str) -> Result<Vec<BenchQuery>, EvalError> {
    let mut refs: BTreeMap<String, RefLine> =
        jsonl::<RefLine>(reference, "reference")?.into_iter().map(|r| (r.id.clone(), r)).collect();
    let mut out = Vec::new();
    for q in jsonl::<QueryLine>(queries, "queries")? {
        let r = refs.remove(&q.id).ok_or_else(|| EvalError::Format(format!("no reference for {}", q.id)))?;
        out.push(BenchQuery { id: q.id, level: q.level, prompt: q.prompt, script: r.script, reference_values: r.reference_values });
    }
    if let Some(id) = refs.keys().next() {
        return Err(EvalError::Format(format!("reference {id} has no query")));
    }
    Ok(out)
}

pub fn load_bench(queries: &Path, reference: &Path) -> Result<Vec<BenchQuery>, EvalError> {
    parse_bench(&std::fs::read_to_string(queries)?, &std::fs::read_to_string(reference)?)
}

pub fn default_bench() -> Vec<BenchQuery> {
    parse_bench(DEFAULT_QUERIES, DEFAULT_REFERENCE).expect("bundled benchmark parses")
}

fn ref_of(v: &Value) -> Option<usize> {
    v.as_str().and_then(parse_ref)
}

impl BenchQuery {
    /// Required tools in script order. Dependencies are read from the
    /// script's references, following helper calls transitively.
    pub fn required_tools(&self, registry: &ToolRegistry) -> Result<Vec<RequiredTool>, EvalError> {
        let is_helper = |t: &str| registry.get(t).is_some_and(|s| s.helper);
        let mut out = Vec::new();
        for (i, call) in self.script.iter().enumerate() {
            let spec = registry
                .get(&call.tool)
                .ok_or_else(|| EvalError::Format(format!("{}: unknown tool {}", self.id, call.tool)))?;
            if spec.helper {
                continue;
            }
            let mut constraints = BTreeMap::new();
            let mut after = Vec::new();
            for (name, raw) in &call.args {
                let param = spec
                    .param(name)
                    .ok_or_else(|| EvalError::Format(format!("{}: {} has no parameter {name}", self.id, call.tool)))?;
                match &param.ty {
                    ParamType::Ref(_) => {
                        let mut stack: Vec<usize> = ref_of(raw).into_iter().collect();
                        while let Some(k) = stack.pop() {
                            let Some(dep) = self.script.get(k.wrapping_sub(1)).filter(|_| k <= i) else {
                                return Err(EvalError::Format(format!("{}: call {} references call-{k}", self.id, i + 1)));
                            };
                            if is_helper(&dep.tool) {
                                stack.extend(dep.args.values().filter_map(ref_of));
                            } else if !after.contains(&dep.tool) {
                                after.push(dep.tool.clone());
                            }
                        }
                    }
                    ParamType::Resource(_) => {}
                    _ => {
                        let (v, _) = coerce(param, raw).map_err(|e| EvalError::Format(format!("{}: {e}", self.id)))?;
                        constraints.insert(name.clone(), v);
                    }
                }
            }
            out.push(RequiredTool { tool: call.tool.clone(), constraints, after });
        }
        Ok(out)
    }

    /// Level invariants: L1 one tool, L2 exactly two with a dependency, L3
    /// three or more.
    pub fn validate(&self, registry: &ToolRegistry) -> Result<(), EvalError> {
        let req = self.required_tools(registry)?;
        let ok = match self.level {
            Level::L1 => req.len() == 1,
            Level::L2 => req.len() == 2 && req.iter().any(|r| !r.after.is_empty()),
            Level::L3 => req.len() >= 3,
        };
        if ok {
            Ok(())
        } else {
            Err(EvalError::Format(format!("{}: {} required tools do not fit level {}", self.id, req.len(), self.level)))
        }
    }
}

/// A call as observed from either caller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalledTool {
    /// 1-based position in the emitted sequence.
    pub index: usize,
    pub tool: String,
    pub args: Map<String, Value>,
}

pub fn called_from_proposal(text: &str) -> Vec<CalledTool> {
    parse_proposal(text)
        .unwrap_or_default()
        .into_iter()
        .enumerate()
        .map(|(i, p)| CalledTool { index: i + 1, tool: p.tool, args: p.args })
        .collect()
}

pub fn called_from_calls(calls: &[ToolCall]) -> Vec<CalledTool> {
    calls.iter().map(|c| CalledTool { index: c.index, tool: c.tool.clone(), args: c.plain_args() }).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Judgement {
    Pass,
    Missing { tools: Vec<String> },
    /// `after` was called before any call of `before`.
    Ordering { before: String, after: String },
    /// Order is right but the consumer does not read the producer's output.
    Unwired { producer: String, consumer: String },
    InvalidArgs { tool: String, reason: String },
}

impl Judgement {
    pub fn passed(&self) -> bool {
        *self == Self::Pass
    }

    pub fn is_ordering(&self) -> bool {
        matches!(self, Self::Ordering { .. })
    }
}

fn arg_problem(call: &CalledTool, by_index: &BTreeMap<usize, &CalledTool>, registry: &ToolRegistry) -> Option<String> {
    let spec = registry.get(&call.tool)?;
    for (name, raw) in &call.args {
        let Some(param) = spec.param(name) else {
            return Some(format!("unknown parameter {name}"));
        };
        match coerce(param, raw) {
            Err(e) => return Some(e),
            Ok((ArgValue::Ref(k), _)) => {
                let Some(src) = by_index.get(&k).filter(|_| k < call.index) else {
                    return Some(format!("{name} references call-{k}, which is not an earlier call"));
                };
                let ParamType::Ref(kinds) = &param.ty else { unreachable!() };
                let produced = registry.get(&src.tool).map(|s| s.produces);
                if !produced.is_some_and(|p| kinds.contains(&p)) {
                    return Some(format!("{name} cannot consume the output of {}", src.tool));
                }
            }
            Ok(_) => {}
        }
    }
    None
}

fn satisfies(call: &CalledTool, req: &RequiredTool, registry: &ToolRegistry) -> Result<(), String> {
    let spec = registry.get(&call.tool).ok_or("unknown tool")?;
    for (name, want) in &req.constraints {
        let Some(raw) = call.args.get(name) else {
            return Err(format!("{name} missing"));
        };
        let param = spec.param(name).ok_or("unknown parameter")?;
        match coerce(param, raw) {
            Ok((got, _)) if got == *want => {}
            Ok((got, _)) => return Err(format!("{name} = {} (want {})", got.to_plain(), want.to_plain())),
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Calls reachable from `call` through references, passing through helpers.
fn upstream<'a>(call: &CalledTool, by_index: &BTreeMap<usize, &'a CalledTool>, registry: &ToolRegistry) -> Vec<&'a CalledTool> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut stack: Vec<usize> = call.args.values().filter_map(ref_of).collect();
    while let Some(k) = stack.pop() {
        if !seen.insert(k) {
            continue;
        }
        let Some(c) = by_index.get(&k) else { continue };
        out.push(*c);
        if registry.get(&c.tool).is_some_and(|s| s.helper) {
            stack.extend(c.args.values().filter_map(ref_of));
        }
    }
    out
}

/// A query passes iff every required tool is called, producers precede and
/// feed their consumers, and arguments are valid and match the reference.
/// Helper calls never change the verdict.
pub fn judge(query: &BenchQuery, called: &[CalledTool], registry: &ToolRegistry) -> Result<Judgement, EvalError> {
    let required = query.required_tools(registry)?;
    let by_index: BTreeMap<usize, &CalledTool> = called.iter().map(|c| (c.index, c)).collect();
    let missing: Vec<String> =
        required.iter().filter(|r| !called.iter().any(|c| c.tool == r.tool)).map(|r| r.tool.clone()).collect();
    if !missing.is_empty() {
        return Ok(Judgement::Missing { tools: missing });
    }
    let matched: Vec<&CalledTool> = required
        .iter()
        .map(|r| {
            let mut of_tool = called.iter().filter(|c| c.tool == r.tool);
            let first = of_tool.clone().next().expect("presence checked");
            of_tool.find(|c| satisfies(c, r, registry).is_ok()).unwrap_or(first)
        })
        .collect();
    for (r, call) in required.iter().zip(&matched) {
        for dep in &r.after {
            let first_dep = called.iter().filter(|c| c.tool == *dep).map(|c| c.index).min().expect("presence checked");
            if first_dep > call.index {
                return Ok(Judgement::Ordering { before: dep.clone(), after: r.tool.clone() });
            }
        }
    }
    for (r, call) in required.iter().zip(&matched) {
        let up = upstream(call, &by_index, registry);
        for dep in &r.after {
            if !up.iter().any(|c| c.tool == *dep) {
                return Ok(Judgement::Unwired { producer: dep.clone(), consumer: r.tool.clone() });
            }
        }
    }
    for (r, call) in required.iter().zip(&matched) {
        if let Some(reason) = arg_problem(call, &by_index, registry) {
            return Ok(Judgement::InvalidArgs { tool: r.tool.clone(), reason });
        }
        if let Err(reason) = satisfies(call, r, registry) {
            return Ok(Judgement::InvalidArgs { tool: r.tool.clone(), reason });
        }
    }
    Ok(Judgement::Pass)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Defect {
    /// Leave out one required call.
    Omit,
    /// Move a consumer ahead of its producer.
    Swap,
    /// Schema-valid argument that differs from the reference.
    WrongArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthConfig {
    /// Target pass rate per level.
    pub pass_rates: BTreeMap<Level, f64>,
    pub seed: u64,
}

impl Default for DepthConfig {
    fn default() -> Self {
        Self { pass_rates: [(Level::L1, 0.92), (Level::L2, 0.80), (Level::L3, 0.64)].into(), seed: 7 }
    }
}

fn script_value(script: &[RefCall]) -> Value {
    Value::Array(script.iter().map(|c| json!({"tool": c.tool, "args": c.args})).collect())
}

fn remap_refs(args: &mut Map<String, Value>, map: impl Fn(usize) -> Option<usize>) {
    let keys: Vec<String> = args.keys().cloned().collect();
    for k in keys {
        if let Some(r) = ref_of(&args[&k]) {
            match map(r) {
                Some(n) => {
                    args.insert(k, json!(format!("call-{n}")));
                }
                None => {
                    args.remove(&k);
                }
            }
        }
    }
}

fn perturb(name: &str, v: &Value) -> Option<Value> {
    match name {
        "parts" => {
            let r: crate::blade::PartRange = v.as_str()?.parse().ok()?;
            if r.end > r.start {
                Some(json!(format!("{}-{}", r.start, r.end - 1)))
            } else {
                Some(json!(format!("{}-{}", r.start, r.end + 1)))
            }
        }
        "pair_keys" => {
            let k: crate::blade::PairKey = v.as_array()?.first()?.as_str()?.parse().ok()?;
            let p = if k.pressure_point() < 16 { k.pressure_point() + 1 } else { 2 };
            Some(json!([crate::blade::PairKey::new(p).to_string()]))
        }
        "target_part" => Some(json!(v.as_i64()? + 1)),
        "strategy" => Some(json!(if v.as_str()? == "mean-deviation" { "drift-at-target" } else { "mean-deviation" })),
        "theta" => Some(json!(v.as_f64()? + 5.0)),
        "limit" | "epsilon" => Some(json!(v.as_f64()? * 2.0)),
        _ => None,
    }
}

/// Apply a defect to a reference script, or `None` when the script offers
/// no place for it.
pub fn apply_defect(script: &[RefCall], defect: Defect, registry: &ToolRegistry) -> Option<Vec<RefCall>> {
    let required: Vec<usize> =
        (0..script.len()).filter(|&i| registry.get(&script[i].tool).is_some_and(|s| !s.helper)).collect();
    match defect {
        Defect::Omit => {
            let drop = *required.last()? + 1;
            let mut out: Vec<RefCall> = script.to_vec();
            out.remove(drop - 1);
            for c in &mut out {
                remap_refs(&mut c.args, |k| match k.cmp(&drop) {
                    std::cmp::Ordering::Less => Some(k),
                    std::cmp::Ordering::Equal => None,
                    std::cmp::Ordering::Greater => Some(k - 1),
                });
            }
            Some(out)
        }
        Defect::Swap => {
            // Consumer b (0-based) reading required producer a directly.
            let (a, b) = required.iter().rev().find_map(|&b| {
                script[b].args.values().filter_map(ref_of).map(|k| k - 1).find(|a| required.contains(a)).map(|a| (a, b))
            })?;
            let mut order: Vec<usize> = (0..script.len()).filter(|&i| i != b).collect();
            order.insert(a, b);
            let new_pos = |old: usize| order.iter().position(|&o| o == old).expect("permutation") + 1;
            let mut out: Vec<RefCall> = order.iter().map(|&i| script[i].clone()).collect();
            for c in &mut out {
                remap_refs(&mut c.args, |k| Some(new_pos(k - 1)));
            }
            Some(out)
        }
        Defect::WrongArgs => {
            const ORDER: [&str; 7] = ["parts", "pair_keys", "target_part", "strategy", "theta", "limit", "epsilon"];
            let (i, name, v) = required.iter().rev().find_map(|&i| {
                ORDER.iter().find_map(|n| script[i].args.get(*n).and_then(|v| perturb(n, v)).map(|v| (i, *n, v)))
            })?;
            let mut out = script.to_vec();
            out[i].args.insert(name.to_string(), v);
            Some(out)
        }
    }
}

/// Defects assigned so that each level's pass count is exactly
/// `round(rate * n)`. Kinds cycle swap, wrong-args, omit, falling back to
/// omit where a kind does not apply.
pub fn assign_defects(
    queries: &[BenchQuery],
    config: &DepthConfig,
    registry: &ToolRegistry,
) -> Result<BTreeMap<String, Defect>, EvalError> {
    let mut out = BTreeMap::new();
    for level in Level::ALL {
        let ids: Vec<&BenchQuery> = queries.iter().filter(|q| q.level == level).collect();
        let rate = config.pass_rates.get(&level).copied().unwrap_or(1.0);
        if !(0.0..=1.0).contains(&rate) {
            return Err(EvalError::Config(format!("pass rate {rate} for {level} outside [0, 1]")));
        }
        let defects = ids.len() - (rate * ids.len() as f64).round() as usize;
        let mut order: Vec<&BenchQuery> = ids.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ (level as u64 + 1)));
        let cycle = [Defect::Swap, Defect::WrongArgs, Defect::Omit];
        for (j, q) in order.into_iter().take(defects).enumerate() {
            let want = cycle[j % cycle.len()];
            let d = if apply_defect(&q.script, want, registry).is_some() { want } else { Defect::Omit };
            if apply_defect(&q.script, d, registry).is_none() {
                return Err(EvalError::Config(format!("{}: no defect applies", q.id)));
            }
            out.insert(q.id.clone(), d);
        }
    }
    Ok(out)
}

/// Scripted planner that answers each benchmark prompt with its reference
/// script, or the defective script where one is assigned.
pub fn scripted_planner(queries: &[BenchQuery], defects: &BTreeMap<String, Defect>, registry: &ToolRegistry) -> ScriptedBackend {
    let rules = queries
        .iter()
        .map(|q| {
            let script = match defects.get(&q.id) {
                Some(d) => apply_defect(&q.script, *d, registry).expect("assignable defect"),
                None => q.script.clone(),
            };
            let pattern = format!("^Instruction: {}\n", regex::escape(&q.prompt));
            ScriptedRule::new(Some(Role::AnalysisPlanner), &pattern, script_value(&script).to_string()).expect("escaped pattern")
        })
        .collect();
    ScriptedBackend::new(rules)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Caller {
    /// Backend output parsed as-is.
    Raw,
    /// Backend output through the analysis planner's validation and repair.
    Planner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryVerdict {
    pub id: String,
    pub level: Level,
    pub caller: Caller,
    pub defect: Option<Defect>,
    pub judgement: Judgement,
    pub called: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRate {
    pub level: Level,
    pub caller: Caller,
    pub queries: usize,
    pub passes: usize,
    pub pass_rate: f64,
    pub swaps_injected: usize,
    pub ordering_detected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthReport {
    pub verdicts: Vec<QueryVerdict>,
    pub levels: Vec<LevelRate>,
}

impl DepthReport {
    pub fn rate(&self, level: Level, caller: Caller) -> Option<&LevelRate> {
        self.levels.iter().find(|l| l.level == level && l.caller == caller)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("caller,level,queries,passes,pass_rate,swaps_injected,ordering_detected\n");
        for l in &self.levels {
            s.push_str(&format!(
                "{},{},{},{},{:.4},{},{}\n",
                serde_json::to_value(l.caller).unwrap().as_str().unwrap(),
                l.level,
                l.queries,
                l.passes,
                l.pass_rate,
                l.swaps_injected,
                l.ordering_detected
            ));
        }
        s
    }
}

/// Run every query through `callers` and judge the emitted sequences.
/// `state` supplies the resources the planner fills from.
pub fn run_depth_benchmark(
    queries: &[BenchQuery],
    state: &SessionState,
    backend: &dyn Backend,
    registry: &ToolRegistry,
    defects: &BTreeMap<String, Defect>,
    callers: &[Caller],
) -> Result<DepthReport, EvalError> {
    let mut verdicts = Vec::new();
    for &caller in callers {
        for q in queries {
            let called = match caller {
                Caller::Raw => match backend.complete(Role::AnalysisPlanner, &planner_prompt(&q.prompt, state, registry)) {
                    Ok(text) => called_from_proposal(&text),
                    Err(_) => vec![],
                },
                Caller::Planner => called_from_calls(&plan_calls(&q.prompt, state, backend, registry).calls),
            };
            let judgement = judge(q, &called, registry)?;
            verdicts.push(QueryVerdict {
                id: q.id.clone(),
                level: q.level,
                caller,
                defect: defects.get(&q.id).copied(),
                judgement,
                called: called.iter().map(|c| c.tool.clone()).collect(),
            });
        }
    }
    let mut levels = Vec::new();
    for &caller in callers {
        for level in Level::ALL {
            let vs: Vec<&QueryVerdict> = verdicts.iter().filter(|v| v.caller == caller && v.level == level).collect();
            if vs.is_empty() {
                continue;
            }
            let passes = vs.iter().filter(|v| v.judgement.passed()).count();
            let swaps: Vec<_> = vs.iter().filter(|v| v.defect == Some(Defect::Swap)).collect();
            levels.push(LevelRate {
                level,
                caller,
                queries: vs.len(),
                passes,
                pass_rate: passes as f64 / vs.len() as f64,
                swaps_injected: swaps.len(),
                ordering_detected: swaps.iter().filter(|v| v.judgement.is_ordering()).count(),
            });
        }
    }
    Ok(DepthReport { verdicts, levels })
}
