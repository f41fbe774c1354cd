//! Deterministic execution of a validated call sequence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::args::ArgValue;
use super::plan::{validate_calls, ToolCall};
use super::registry::{Category, ToolRegistry, ToolSpec};
use super::AnalysisError;
use crate::blade::{
    self, fetch_inspection_slices, series_from_measurements, AttributionResult, CompensationVector, DeltaStrategy,
    DriftFit, InspectionSlice, InspectionTable, LevelLayout, PairKey, PairMeasurement, PairSeries, PairingReport,
    PartRange, PathingExport, PathingField, SliceSelector, DEFAULT_EPSILON, DEFAULT_TILT_DEG,
};
use crate::digest::json_digest;
use crate::kg::{KgContext, RetrievalResult};
use crate::session::{
    artifact_key, quantity_id, Actor, ProvenanceIndex, ProvenanceMap, ProvenanceTarget, SessionState,
};

/// Default clip for the bounded-residual strategy, inches.
pub const DEFAULT_RESIDUAL_LIMIT: f64 = 0.010;

/// Everything a call can hand to later calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "artifact", rename_all = "kebab-case")]
pub enum Artifact {
    Pairs(PairingReport),
    Slice(InspectionSlice),
    Pathing(PathingField),
    Values { values: BTreeMap<PairKey, Vec<(u32, f64)>> },
    Scalars { field: String, values: BTreeMap<PairKey, f64> },
    Levels { field: String, values: BTreeMap<PairKey, u32> },
    Fits { fits: Vec<DriftFit> },
    Attribution { results: Vec<AttributionResult> },
    Compensation { vectors: Vec<CompensationVector>, strategy: String },
    KgStore { triples: usize },
    Retrieval(RetrievalResult),
}

fn per_key<T: Serialize>(items: impl Iterator<Item = (PairKey, T)>) -> Value {
    Value::Object(items.map(|(k, v)| (k.to_string(), json!(v))).collect())
}

impl Artifact {
    /// Every field this artifact can expose; tools publish a subset.
    fn fields(&self) -> BTreeMap<&'static str, Value> {
        let mut f = BTreeMap::new();
        match self {
            Self::Pairs(r) => {
                f.insert("pair_count", json!(r.pair_keys().len()));
                f.insert("measurement_count", json!(r.measurements.len()));
                f.insert("unmatched_count", json!(r.unmatched.len()));
            }
            Self::Slice(s) => {
                f.insert("rows", json!(s.rows.len()));
                f.insert("cache_key", json!(s.cache_key));
            }
            Self::Pathing(p) => {
                f.insert("r", per_key(p.entries.iter().map(|(k, e)| (*k, e.r))));
                f.insert("p", per_key(p.entries.iter().map(|(k, e)| (*k, e.p))));
            }
            Self::Values { values } => {
                let v = values.iter().map(|(k, xs)| {
                    let m: Map<String, Value> = xs.iter().map(|(n, s)| (n.to_string(), json!(s))).collect();
                    (*k, Value::Object(m))
                });
                f.insert("s", per_key(v));
            }
            Self::Scalars { field, values } => {
                f.insert(static_field(field), per_key(values.iter().map(|(k, v)| (*k, *v))));
            }
            Self::Levels { field, values } => {
                f.insert(static_field(field), per_key(values.iter().map(|(k, v)| (*k, *v))));
            }
            Self::Fits { fits } => {
                f.insert("b", per_key(fits.iter().map(|x| (x.pair_key, x.b))));
                f.insert("c", per_key(fits.iter().map(|x| (x.pair_key, x.c))));
                f.insert("w_d", per_key(fits.iter().map(|x| (x.pair_key, x.w_d))));
                f.insert("w_v", per_key(fits.iter().map(|x| (x.pair_key, x.w_v))));
                f.insert("n", per_key(fits.iter().map(|x| (x.pair_key, x.n()))));
            }
            Self::Attribution { results } => {
                f.insert("phi_p", per_key(results.iter().map(|a| (a.pair_key, a.phi_p))));
                f.insert("phi_c", per_key(results.iter().map(|a| (a.pair_key, a.phi_c))));
                f.insert("phi_d", per_key(results.iter().map(|a| (a.pair_key, a.phi_d))));
                f.insert("psi_v", per_key(results.iter().map(|a| (a.pair_key, a.psi_v))));
                f.insert("s_hat", per_key(results.iter().map(|a| (a.pair_key, a.s_hat))));
            }
            Self::Compensation { vectors, .. } => {
                f.insert("trc", per_key(vectors.iter().map(|v| (v.pair_key, v.t_r))));
                f.insert("tlc", per_key(vectors.iter().map(|v| (v.pair_key, v.t_l))));
                f.insert("delta", per_key(vectors.iter().map(|v| (v.pair_key, v.delta))));
            }
            Self::KgStore { triples } => {
                f.insert("triples", json!(triples));
            }
            Self::Retrieval(r) => {
                f.insert("selected", json!(r.selected.iter().map(|s| &s.id).collect::<Vec<_>>()));
                f.insert("expanded", json!(r.expanded.iter().map(|(id, _)| id).collect::<Vec<_>>()));
                f.insert("tau", json!(r.tau));
                f.insert("pool_size", json!(r.pool_size));
            }
        }
        f
    }
}

fn static_field(name: &str) -> &'static str {
    match name {
        "mean" => "mean",
        "std" => "std",
        "w_v" => "w_v",
        "c" => "c",
        "level" => "level",
        "position" => "position",
        _ => "value",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputField {
    pub unit: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolOutput {
    pub call_index: usize,
    pub tool: String,
    /// Cache key in the session state.
    pub artifact_key: String,
    /// Digest of the artifact this output was read from.
    pub artifact_digest: String,
    /// Digest of `fields`.
    pub digest: String,
    pub fields: BTreeMap<String, OutputField>,
    pub cached: bool,
}

impl ToolOutput {
    pub fn output_id(&self) -> String {
        format!("call-{}", self.call_index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedQuantity {
    pub id: String,
    pub metric: String,
    pub pair_key: PairKey,
    pub value: f64,
    pub unit: String,
    pub source: ProvenanceTarget,
    /// Part selection the value was computed over, if any.
    pub parts: Option<PartRange>,
    /// False for values that do not depend on part selection.
    pub part_scoped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecFailure {
    pub call_index: usize,
    pub tool: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub calls: Vec<ToolCall>,
    pub outputs: Vec<ToolOutput>,
    pub quantities: Vec<ReportedQuantity>,
    pub provenance: ProvenanceMap,
    /// Vectors from the last compensation call.
    pub offsets: Vec<CompensationVector>,
    /// Retrieval from the last `kg_retrieve` call.
    pub retrieval: Option<RetrievalResult>,
    pub narrative: String,
    pub failure: Option<ExecFailure>,
}

impl AnalysisResult {
    pub fn output(&self, call: usize) -> Option<&ToolOutput> {
        self.outputs.iter().find(|o| o.call_index == call)
    }

    /// Digests of every output, in call order.
    pub fn output_digests(&self) -> Vec<String> {
        self.outputs.iter().map(|o| o.digest.clone()).collect()
    }

    pub fn quantity(&self, id: &str) -> Option<&ReportedQuantity> {
        self.quantities.iter().find(|q| q.id == id)
    }
}

impl ProvenanceIndex for AnalysisResult {
    fn has_output_field(&self, call: usize, field: &str) -> bool {
        self.output(call).is_some_and(|o| o.fields.contains_key(field))
    }

    fn has_triple(&self, id: &str) -> bool {
        self.retrieval.as_ref().is_some_and(|r| r.contains(id))
    }
}

/// Shared read-only inputs for execution.
#[derive(Debug, Clone, Copy)]
pub struct ExecEnv<'a> {
    pub registry: &'a ToolRegistry,
    pub kg: Option<&'a KgContext>,
    pub layout: LevelLayout,
    /// Default query text for `kg_retrieve`.
    pub instruction: &'a str,
}

impl<'a> ExecEnv<'a> {
    pub fn new(registry: &'a ToolRegistry) -> Self {
        Self { registry, kg: None, layout: LevelLayout::default(), instruction: "" }
    }
}

struct CallCtx<'c> {
    call: &'c ToolCall,
    prior: &'c [Artifact],
}

impl CallCtx<'_> {
    fn arg(&self, name: &str) -> Option<&ArgValue> {
        self.call.args.get(name)
    }

    fn input(&self, name: &str) -> Result<&Artifact, String> {
        match self.arg(name) {
            Some(ArgValue::Ref(k)) => self.prior.get(k - 1).ok_or_else(|| format!("{name}: call-{k} has no output")),
            _ => Err(format!("{name}: missing input")),
        }
    }

    fn parts(&self) -> Option<PartRange> {
        match self.arg("parts") {
            Some(ArgValue::Parts(r)) => Some(*r),
            _ => None,
        }
    }

    fn keys(&self) -> Option<Vec<PairKey>> {
        match self.arg("pair_keys") {
            Some(ArgValue::Keys(k)) => Some(k.clone()),
            _ => None,
        }
    }

    fn int(&self, name: &str) -> Option<i64> {
        match self.arg(name) {
            Some(ArgValue::Int(i)) => Some(*i),
            _ => None,
        }
    }

    fn number(&self, name: &str) -> Option<f64> {
        match self.arg(name) {
            Some(ArgValue::Number(x)) => Some(*x),
            _ => None,
        }
    }

    fn selector(&self) -> SliceSelector {
        SliceSelector { parts: self.parts(), pair_keys: self.keys() }
    }

    /// Paired rows from a pairs or slice input, filtered by this call's
    /// selection.
    fn series(&self, name: &str) -> Result<BTreeMap<PairKey, PairSeries>, String> {
        let rows: &[PairMeasurement] = match self.input(name)? {
            Artifact::Pairs(r) => &r.measurements,
            Artifact::Slice(s) => &s.rows,
            _ => return Err(format!("{name}: expected paired measurements")),
        };
        let sel = self.selector();
        let picked: Vec<PairMeasurement> = rows.iter().filter(|m| sel.matches(m)).cloned().collect();
        if picked.is_empty() {
            return Err("selection matched no inspection rows".into());
        }
        Ok(series_from_measurements(&picked))
    }

    fn fits(&self, name: &str) -> Result<&[DriftFit], String> {
        match self.input(name)? {
            Artifact::Fits { fits } => Ok(fits),
            _ => Err(format!("{name}: expected drift fits")),
        }
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn scalar_map(
    series: &BTreeMap<PairKey, PairSeries>,
    f: fn(&[f64]) -> Result<f64, blade::BladeError>,
) -> Result<BTreeMap<PairKey, f64>, String> {
    series.iter().map(|(k, s)| f(&s.surface_values()).map(|v| (*k, v)).map_err(err)).collect()
}

fn all_layout_keys(layout: &LevelLayout) -> Vec<PairKey> {
    (layout.first_pressure_point..layout.first_pressure_point + layout.pair_count).map(PairKey::new).collect()
}

fn load_resource<T>(
    state: &SessionState,
    cx: &CallCtx<'_>,
    name: &str,
    read: fn(&std::path::Path) -> Result<T, blade::BladeError>,
) -> Result<T, String> {
    let Some(ArgValue::Resource(r)) = cx.arg(name) else { return Err(format!("{name}: missing resource")) };
    let handle = state.resources().get(r).ok_or_else(|| format!("{name}: resource {r:?} is not loaded"))?;
    if !handle.verify() {
        return Err(format!("{name}: {} changed on disk since it was loaded", handle.uri));
    }
    read(&handle.path()).map_err(err)
}

fn compensation(cx: &CallCtx<'_>) -> Result<Artifact, String> {
    let theta = cx.number("theta").unwrap_or(DEFAULT_TILT_DEG);
    let strategy_name = match cx.arg("strategy") {
        Some(ArgValue::Strategy(s)) => s.as_str(),
        _ => "mean-deviation",
    };
    let source = cx.input("source")?;
    let fits: Vec<DriftFit> = match source {
        Artifact::Fits { fits } => fits.clone(),
        _ if strategy_name == "mean-deviation" => Vec::new(),
        _ => cx.series("source")?.values().map(blade::rb_compute_wear_drift).collect::<Result<_, _>>().map_err(err)?,
    };
    let last_part = fits.iter().flat_map(|f| f.parts.last().copied()).max();
    let strategy = match strategy_name {
        "drift-at-target" => DeltaStrategy::DriftAtTarget {
            target_part: cx
                .int("target_part")
                .map(|n| u32::try_from(n).map_err(|_| "target_part out of range".to_string()))
                .transpose()?
                .or(last_part)
                .ok_or("drift-at-target needs a target part")?,
        },
        "bounded-residual" => DeltaStrategy::BoundedResidual { limit: cx.number("limit").unwrap_or(DEFAULT_RESIDUAL_LIMIT) },
        _ => DeltaStrategy::MeanDeviation,
    };
    let mut vectors = Vec::new();
    match source {
        Artifact::Fits { .. } => {
            let keys = cx.keys();
            for fit in fits.iter().filter(|f| keys.as_ref().is_none_or(|ks| ks.contains(&f.pair_key))) {
                let delta = match strategy {
                    DeltaStrategy::MeanDeviation => fit.s_bar,
                    _ => strategy.delta(&[], Some(fit)).map_err(err)?,
                };
                vectors.push(blade::rb_compute_pair_tool_comp(fit.pair_key, delta, theta).map_err(err)?);
            }
        }
        _ => {
            for (k, s) in cx.series("source")? {
                let fit = fits.iter().find(|f| f.pair_key == k);
                let delta = strategy.delta(&s.surface_values(), fit).map_err(err)?;
                vectors.push(blade::rb_compute_pair_tool_comp(k, delta, theta).map_err(err)?);
            }
        }
    }
    if vectors.is_empty() {
        return Err("no pairs selected".into());
    }
    Ok(Artifact::Compensation { vectors, strategy: strategy.name().to_string() })
}

fn run_tool(
    spec: &ToolSpec,
    cx: &CallCtx<'_>,
    state: &SessionState,
    env: &ExecEnv<'_>,
) -> Result<Artifact, String> {
    match spec.canonical() {
        "compute_inspection_pairs" => {
            let table = load_resource(state, cx, "inspection", |p| InspectionTable::from_path(p))?;
            blade::compute_inspection_pairs(&table).map(Artifact::Pairs).map_err(err)
        }
        "fetch_inspection_slices" => {
            let Artifact::Pairs(r) = cx.input("source")? else { return Err("source: expected pairs".into()) };
            Ok(Artifact::Slice(fetch_inspection_slices(&r.measurements, &cx.selector())))
        }
        "rb_compute_pathing_dev" => {
            let export = load_resource(state, cx, "pathing", |p| PathingExport::from_path(p))?;
            let keys = cx.keys().unwrap_or_else(|| export.combined.keys().copied().collect());
            blade::rb_compute_pathing_dev(&export, &keys).map(Artifact::Pathing).map_err(err)
        }
        "rb_compute_values" => {
            let values = cx.series("source")?.into_iter().map(|(k, s)| (k, s.parts)).collect();
            Ok(Artifact::Values { values })
        }
        "rb_compute_average" => {
            Ok(Artifact::Scalars { field: "mean".into(), values: scalar_map(&cx.series("source")?, blade::stats::rb_compute_average)? })
        }
        "rb_compute_std_dev" => {
            Ok(Artifact::Scalars { field: "std".into(), values: scalar_map(&cx.series("source")?, blade::stats::rb_compute_std_dev)? })
        }
        tool @ ("rb_compute_level" | "rb_compute_position_in_level") => {
            let keys = cx.keys().unwrap_or_else(|| all_layout_keys(&env.layout));
            let mut values = BTreeMap::new();
            for k in keys {
                let v = if tool == "rb_compute_level" {
                    env.layout.rb_compute_level(k)
                } else {
                    env.layout.rb_compute_position_in_level(k)
                };
                values.insert(k, v.map_err(err)?);
            }
            let field = if tool == "rb_compute_level" { "level" } else { "position" };
            Ok(Artifact::Levels { field: field.into(), values })
        }
        "rb_compute_wear_drift" => {
            let pathing = match cx.arg("pathing") {
                Some(_) => match cx.input("pathing")? {
                    Artifact::Pathing(p) => Some(p),
                    _ => return Err("pathing: expected a pathing field".into()),
                },
                None => None,
            };
            let mut fits = Vec::new();
            for (k, s) in cx.series("source")? {
                let s = match pathing {
                    Some(p) => s.with_pathing(p.p(k).ok_or_else(|| err(blade::BladeError::MissingPathingKey(k)))?),
                    None => s,
                };
                fits.push(blade::rb_compute_wear_drift(&s).map_err(err)?);
            }
            Ok(Artifact::Fits { fits })
        }
        "rb_compute_process_variability" => {
            let values = cx
                .fits("fit")?
                .iter()
                .map(|f| blade::rb_compute_process_variability(f).map(|v| (f.pair_key, v)))
                .collect::<Result<_, _>>()
                .map_err(err)?;
            Ok(Artifact::Scalars { field: "w_v".into(), values })
        }
        "rb_compute_residual_systematic" => {
            let values = cx.fits("fit")?.iter().map(|f| (f.pair_key, blade::rb_compute_residual_systematic(f).c)).collect();
            Ok(Artifact::Scalars { field: "c".into(), values })
        }
        "rb_compute_attribution_fractions" => {
            let eps = cx.number("epsilon").unwrap_or(DEFAULT_EPSILON);
            let mut results = Vec::new();
            for f in cx.fits("fit")? {
                let target = match cx.int("target_part") {
                    Some(n) => u32::try_from(n).map_err(|_| "target_part out of range".to_string())?,
                    None => *f.parts.last().ok_or("empty fit")?,
                };
                results.push(blade::rb_compute_attribution_fractions(f.pathing, f, target, eps).map_err(err)?);
            }
            Ok(Artifact::Attribution { results })
        }
        "rb_compute_pair_tool_comp" | "rb_compute_tool_length" | "rb_compute_radius_offset" => compensation(cx),
        "kg_initial" => {
            let kg = env.kg.ok_or("no knowledge graph is configured")?;
            if kg.store.is_empty() {
                return Err(crate::kg::KgError::EmptyKnowledge.to_string());
            }
            Ok(Artifact::KgStore { triples: kg.store.len() })
        }
        "kg_retrieve" => {
            let kg = env.kg.ok_or("no knowledge graph is configured")?;
            let q = match cx.arg("query") {
                Some(ArgValue::Text(t)) => t.as_str(),
                _ => env.instruction,
            };
            kg.retrieve(q).map(Artifact::Retrieval).map_err(err)
        }
        other => Err(format!("no implementation for tool {other}")),
    }
}

/// Canonical argument form for cache keys: references become the digest of
/// the referenced artifact and resources their content checksum.
fn canonical_args(call: &ToolCall, outputs: &[ToolOutput], state: &SessionState) -> Value {
    let m: Map<String, Value> = call
        .args
        .iter()
        .map(|(k, v)| {
            let cv = match v {
                ArgValue::Ref(i) => json!({"ref": outputs.get(i - 1).map(|o| o.artifact_digest.as_str())}),
                ArgValue::Resource(r) => json!({"resource": state.resources().get(r).map(|h| h.checksum.as_str())}),
                other => other.to_plain(),
            };
            (k.clone(), cv)
        })
        .collect();
    Value::Object(m)
}

fn format_value(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-3 {
        format!("{v:.4e}")
    } else {
        format!("{v:.6}")
    }
}

fn narrative(result: &AnalysisResult) -> String {
    let mut out = String::new();
    let calls: Vec<String> = result.outputs.iter().map(|o| format!("{} ({})", o.tool, o.output_id())).collect();
    out.push_str(&format!("Executed {} call(s): {}.\n", result.outputs.len(), calls.join(", ")));
    let mut by_metric: BTreeMap<(usize, &str), Vec<&ReportedQuantity>> = BTreeMap::new();
    for q in &result.quantities {
        let call = match &q.source {
            ProvenanceTarget::ToolOutput { call, .. } => *call,
            ProvenanceTarget::Triple(_) => 0,
        };
        by_metric.entry((call, q.metric.as_str())).or_default().push(q);
    }
    for ((_, metric), qs) in by_metric {
        let scope = qs[0].parts.map(|r| format!(" over parts {r}")).unwrap_or_default();
        let items: Vec<String> = qs
            .iter()
            .map(|q| format!("{}={} {} ({})", q.id, format_value(q.value), q.unit, q.source))
            .collect();
        out.push_str(&format!("{metric}{scope}: {}.\n", items.join("; ")));
    }
    if let Some(f) = &result.failure {
        out.push_str(&format!("Call {} ({}) failed: {}.\n", f.call_index, f.tool, f.error));
    }
    out
}

/// Execute `calls` in order. Schema violations are rejected before anything
/// runs; a failing tool stops the sequence and is reported in
/// `AnalysisResult::failure` with the outputs produced so far.
pub fn execute_sequence(
    calls: &[ToolCall],
    state: &mut SessionState,
    env: &ExecEnv<'_>,
) -> Result<AnalysisResult, AnalysisError> {
    validate_calls(calls, env.registry)?;
    let mut artifacts: Vec<Artifact> = Vec::new();
    let mut result = AnalysisResult {
        calls: calls.to_vec(),
        outputs: vec![],
        quantities: vec![],
        provenance: ProvenanceMap::default(),
        offsets: vec![],
        retrieval: None,
        narrative: String::new(),
        failure: None,
    };
    // Part selection in force for each call, inherited through references.
    let mut scopes: Vec<(Option<PartRange>, bool)> = Vec::new();

    for call in calls {
        let spec = env.registry.get(&call.tool).expect("validated");
        let cacheable = spec.category != Category::KnowledgeRetrieval;
        let key = artifact_key(spec.canonical(), &canonical_args(call, &result.outputs, state));
        let cached = if cacheable {
            state.cached_artifact(&key)?.and_then(|v| serde_json::from_value::<Artifact>(v).ok())
        } else {
            None
        };
        let was_cached = cached.is_some();
        let artifact = match cached {
            Some(a) => a,
            None => match run_tool(spec, &CallCtx { call, prior: &artifacts }, state, env) {
                Ok(a) => a,
                Err(error) => {
                    result.failure = Some(ExecFailure { call_index: call.index, tool: call.tool.clone(), error });
                    break;
                }
            },
        };
        let value = serde_json::to_value(&artifact).expect("artifacts serialize");
        let artifact_digest = json_digest(&value);
        if cacheable && !state.cache().contains_key(&key) {
            state.cache_artifact(Actor::Analysis, key.clone(), format!("call-{}", call.index), &value)?;
        }

        let all = artifact.fields();
        let fields: BTreeMap<String, OutputField> = spec
            .outputs
            .iter()
            .filter_map(|o| {
                all.get(o.name.as_str()).map(|v| (o.name.clone(), OutputField { unit: o.unit.clone(), value: v.clone() }))
            })
            .collect();

        let own = match call.args.get("parts") {
            Some(ArgValue::Parts(r)) => Some(*r),
            _ => None,
        };
        let inherited = call.depends_on.iter().find_map(|&d| scopes.get(d - 1).and_then(|s| s.0));
        let scoped = spec.param("parts").is_some() || call.depends_on.iter().any(|&d| scopes.get(d - 1).is_some_and(|s| s.1));
        let scope = (own.or(inherited), scoped && spec.category != Category::DataLoading);
        scopes.push((own.or(inherited), scoped));

        for (metric, o) in spec.metrics() {
            let Some(Value::Object(per)) = all.get(o.name.as_str()) else { continue };
            for (k, v) in per {
                let Ok(pk) = k.parse::<PairKey>() else { continue };
                let entries: Vec<(String, f64)> = match v {
                    Value::Object(by_part) => {
                        by_part.iter().filter_map(|(n, x)| x.as_f64().map(|x| (format!("{metric}@{n}"), x))).collect()
                    }
                    other => other.as_f64().map(|x| vec![(metric.to_string(), x)]).unwrap_or_default(),
                };
                for (m, x) in entries {
                    let id = quantity_id(&m, pk);
                    let target = ProvenanceTarget::ToolOutput { call: call.index, field: o.name.clone() };
                    result.provenance.insert(id.clone(), target.clone());
                    let q = ReportedQuantity {
                        id: id.clone(),
                        metric: m,
                        pair_key: pk,
                        value: x,
                        unit: o.unit.clone(),
                        source: target,
                        parts: scope.0,
                        part_scoped: scope.1,
                    };
                    match result.quantities.iter_mut().find(|e| e.id == id) {
                        Some(e) => *e = q,
                        None => result.quantities.push(q),
                    }
                }
            }
        }

        match &artifact {
            Artifact::Compensation { vectors, .. } => result.offsets = vectors.clone(),
            Artifact::Retrieval(r) => result.retrieval = Some(r.clone()),
            _ => {}
        }
        result.outputs.push(ToolOutput {
            call_index: call.index,
            tool: call.tool.clone(),
            artifact_key: key,
            artifact_digest,
            digest: json_digest(&fields),
            fields,
            cached: was_cached,
        });
        artifacts.push(artifact);
    }
    result.narrative = narrative(&result);
    Ok(result)
}
