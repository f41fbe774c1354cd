//! Central routing: entity extraction, schema-checked model routing and the
//! keyword fallback.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{requested_metrics, Category, ToolRegistry};
use crate::blade::{PairKey, PartRange};
use crate::gateway::{Backend, Role};
use crate::query;
use crate::session::{Actor, AgentId, ResourceKind, SessionError, SessionState, StateEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessedQuery {
    pub raw_text: String,
    pub part_range: Option<PartRange>,
    pub file_paths: Vec<String>,
    pub reset_flag: bool,
    pub pair_keys: Option<Vec<PairKey>>,
}

#[derive(Debug, thiserror::Error)]
pub enum RouterError {
    #[error("empty query")]
    EmptyQuery,
    /// Neither the backend nor the keyword table produced a decision.
    #[error("escalation needed: {0}")]
    EscalationNeeded(String),
    #[error(transparent)]
    Session(#[from] SessionError),
}

pub fn preprocess(query: &str, _state: &SessionState) -> Result<PreprocessedQuery, RouterError> {
    let raw = query.trim();
    if raw.is_empty() {
        return Err(RouterError::EmptyQuery);
    }
    if query::reset_flag(raw) {
        return Ok(PreprocessedQuery {
            raw_text: raw.to_string(),
            part_range: None,
            file_paths: vec![],
            reset_flag: true,
            pair_keys: None,
        });
    }
    let keys = query::pair_keys(raw);
    Ok(PreprocessedQuery {
        raw_text: raw.to_string(),
        part_range: query::part_range(raw),
        file_paths: query::file_paths(raw),
        reset_flag: false,
        pair_keys: (!keys.is_empty()).then_some(keys),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoutingOrigin {
    Model,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub agent_id: AgentId,
    pub instruction: String,
    pub input_refs: Vec<String>,
    pub tool_categories: Vec<Category>,
    pub origin: RoutingOrigin,
    /// Why the model decision was not used, for fallback decisions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

impl RoutingDecision {
    /// The wire object the backend is asked to produce.
    pub fn to_wire(&self) -> Value {
        json!({
            "agent": self.agent_id.as_str(),
            "instruction": self.instruction,
            "input_refs": self.input_refs,
            "tool_categories": self.tool_categories.iter().map(|c| c.as_str()).collect::<Vec<_>>(),
        })
    }
}

pub const ROUTING_FIELDS: [&str; 4] = ["agent", "instruction", "input_refs", "tool_categories"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldViolation {
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("routing schema violation: {}", .fields.iter().map(|f| format!("{} ({})", f.field, f.reason)).collect::<Vec<_>>().join(", "))]
pub struct SchemaViolation {
    pub fields: Vec<FieldViolation>,
}

impl SchemaViolation {
    pub fn field_names(&self) -> Vec<&str> {
        self.fields.iter().map(|f| f.field.as_str()).collect()
    }
}

/// Check a routing object against the wire schema. Every failing field is
/// reported, not just the first.
pub fn validate_routing(raw: &Value, registry: &ToolRegistry) -> Result<RoutingDecision, SchemaViolation> {
    let mut bad = Vec::new();
    let mut fail = |field: &str, reason: &str| bad.push(FieldViolation { field: field.into(), reason: reason.into() });
    let Some(obj) = raw.as_object() else {
        for f in ROUTING_FIELDS {
            fail(f, "missing");
        }
        return Err(SchemaViolation { fields: bad });
    };

    let agent = match obj.get("agent") {
        None => {
            fail("agent", "missing");
            None
        }
        Some(Value::String(s)) => {
            let a = AgentId::parse(s);
            if a.is_none() {
                fail("agent", "unknown agent");
            }
            a
        }
        Some(_) => {
            fail("agent", "expected a string");
            None
        }
    };
    let instruction = match obj.get("instruction") {
        None => {
            fail("instruction", "missing");
            None
        }
        Some(Value::String(s)) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Some(Value::String(_)) => {
            fail("instruction", "empty");
            None
        }
        Some(_) => {
            fail("instruction", "expected a string");
            None
        }
    };
    let input_refs = match obj.get("input_refs") {
        None => {
            fail("input_refs", "missing");
            None
        }
        Some(Value::Array(a)) if a.iter().all(Value::is_string) => {
            Some(a.iter().filter_map(Value::as_str).map(str::to_string).collect::<Vec<_>>())
        }
        Some(_) => {
            fail("input_refs", "expected an array of strings");
            None
        }
    };
    let known = registry.categories();
    let categories = match obj.get("tool_categories") {
        None => {
            fail("tool_categories", "missing");
            None
        }
        Some(Value::Array(a)) => {
            let parsed: Option<Vec<Category>> =
                a.iter().map(|v| v.as_str().and_then(Category::parse).filter(|c| known.contains(c))).collect();
            if parsed.is_none() {
                fail("tool_categories", "unknown category");
            }
            parsed
        }
        Some(_) => {
            fail("tool_categories", "expected an array of strings");
            None
        }
    };
    match (agent, instruction, input_refs, categories) {
        (Some(agent_id), Some(instruction), Some(input_refs), Some(tool_categories)) if bad.is_empty() => {
            Ok(RoutingDecision {
                agent_id,
                instruction,
                input_refs,
                tool_categories,
                origin: RoutingOrigin::Model,
                fallback_reason: None,
            })
        }
        _ => Err(SchemaViolation { fields: bad }),
    }
}

const ANALYSIS_KEYWORDS: [&str; 7] = ["compensation", "offset", "drift", "wear", "deviation", "average", "std"];
const KG_KEYWORDS: [&str; 6] = ["cause", "why", "explain", "best practice", "recommendation", "constraint"];

fn keyword_matchers(words: &[&str]) -> Vec<Regex> {
    // Leading word boundary only, so "causes" and "offsets" match.
    words.iter().map(|w| Regex::new(&format!(r"(?i)\b{}", regex::escape(w))).unwrap()).collect()
}

static ANALYSIS_RE: LazyLock<Vec<Regex>> = LazyLock::new(|| keyword_matchers(&ANALYSIS_KEYWORDS));
static KG_RE: LazyLock<Vec<Regex>> = LazyLock::new(|| keyword_matchers(&KG_KEYWORDS));

fn hits(res: &[Regex], text: &str) -> usize {
    res.iter().filter(|r| r.is_match(text)).count()
}

fn input_refs(pre: &PreprocessedQuery, state: &SessionState, agent: AgentId) -> Vec<String> {
    let mut refs: Vec<String> = pre.file_paths.clone();
    for (name, h) in state.resources() {
        let relevant = match agent {
            AgentId::Analysis => h.kind != ResourceKind::KgStore,
            AgentId::Kg => h.kind == ResourceKind::KgStore,
        };
        if relevant && !refs.contains(name) {
            refs.push(name.clone());
        }
    }
    if let Some(r) = pre.part_range {
        refs.push(format!("parts:{r}"));
    }
    for k in pre.pair_keys.iter().flatten() {
        refs.push(format!("pair:{k}"));
    }
    if let Some(h) = query::tool_hints(&pre.raw_text) {
        refs.extend(h.into_iter().map(|t| format!("tool:{t}")));
    }
    refs
}

fn categories_for(text: &str, agent: AgentId, registry: &ToolRegistry) -> Vec<Category> {
    if agent == AgentId::Kg {
        return vec![Category::KnowledgeRetrieval];
    }
    let mut names = registry.chain_for_metrics(&requested_metrics(text));
    if let Some(h) = query::tool_hints(text) {
        names.extend(h);
    }
    let set: BTreeSet<Category> = names.iter().filter_map(|n| registry.get(n)).map(|t| t.category).collect();
    set.into_iter().collect()
}

/// The deterministic keyword policy. Scores each agent by distinct keyword
/// hits; ties go to analysis when a data resource is loaded, else to the
/// knowledge graph. No hits and no resources at all is not routable.
pub fn fallback_route(
    pre: &PreprocessedQuery,
    state: &SessionState,
    registry: &ToolRegistry,
) -> Result<RoutingDecision, RouterError> {
    let text = query::strip_hints(&pre.raw_text);
    let (a, k) = (hits(&ANALYSIS_RE, &text), hits(&KG_RE, &text));
    if a == 0 && k == 0 && state.resources().is_empty() && pre.file_paths.is_empty() {
        return Err(RouterError::EscalationNeeded(
            "no routing keyword matched and no resources are loaded".into(),
        ));
    }
    let agent = match a.cmp(&k) {
        std::cmp::Ordering::Greater => AgentId::Analysis,
        std::cmp::Ordering::Less => AgentId::Kg,
        std::cmp::Ordering::Equal if state.has_data_resource() => AgentId::Analysis,
        std::cmp::Ordering::Equal => AgentId::Kg,
    };
    Ok(RoutingDecision {
        agent_id: agent,
        instruction: pre.raw_text.split_whitespace().collect::<Vec<_>>().join(" "),
        input_refs: input_refs(pre, state, agent),
        tool_categories: categories_for(&pre.raw_text, agent, registry),
        origin: RoutingOrigin::Fallback,
        fallback_reason: None,
    })
}

fn router_prompt(pre: &PreprocessedQuery, state: &SessionState, registry: &ToolRegistry) -> String {
    let resources: Vec<String> = state.resources().iter().map(|(n, h)| format!("{n} ({})", h.kind)).collect();
    let cats: Vec<&str> = registry.categories().into_iter().map(Category::as_str).collect();
    format!(
        "Query: {}\nEntities: {}\nLoaded resources: {}\nAgents: analysis, kg\nTool categories: {}\n\
         Reply with {{\"agent\": ..., \"instruction\": ..., \"input_refs\": [...], \"tool_categories\": [...]}}.\n",
        pre.raw_text,
        serde_json::to_string(pre).expect("serializes"),
        if resources.is_empty() { "none".into() } else { resources.join("; ") },
        cats.join("; "),
    )
}

fn parse_object(text: &str) -> Result<Value, String> {
    let t = text.trim();
    if let Ok(v) = serde_json::from_str(t) {
        return Ok(v);
    }
    match (t.find('{'), t.rfind('}')) {
        (Some(a), Some(b)) if a < b => serde_json::from_str(&t[a..=b]).map_err(|e| e.to_string()),
        _ => Err("no JSON object in router response".into()),
    }
}

/// Route a preprocessed query. The model decision is used only when it
/// validates; otherwise the keyword policy decides. The chosen agent is
/// recorded as an agent-invoked event.
pub fn route(
    pre: &PreprocessedQuery,
    state: &mut SessionState,
    backend: &dyn Backend,
    registry: &ToolRegistry,
) -> Result<RoutingDecision, RouterError> {
    let model = backend
        .complete(Role::Router, &router_prompt(pre, state, registry))
        .map_err(|e| e.to_string())
        .and_then(|t| parse_object(&t))
        .and_then(|v| validate_routing(&v, registry).map_err(|e| e.to_string()));
    let decision = match model {
        Ok(d) => d,
        Err(reason) => {
            let mut d = fallback_route(pre, state, registry)?;
            d.fallback_reason = Some(reason);
            d
        }
    };
    state.apply_as(
        Actor::Central,
        StateEvent::AgentInvoked { agent: decision.agent_id, instruction: decision.instruction.clone() },
    )?;
    Ok(decision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Disabled, ScriptedBackend, ScriptedRule};
    use crate::session::{ResourceHandle, StateEvent};

    fn with_inspection() -> (tempfile::TempDir, SessionState) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("Inspection_Aggregated.csv");
        std::fs::write(&p, crate::blade::fixture::SyntheticBlade::generate(1).inspection.to_csv()).unwrap();
        let mut s = SessionState::new("r", 3);
        let handle = ResourceHandle::load(ResourceKind::InspectionCsv, &p).unwrap();
        s.apply(StateEvent::ResourceLoaded { name: "inspection-csv".into(), handle }).unwrap();
        (dir, s)
    }

    #[test]
    fn preprocess_examples() {
        let s = SessionState::new("p", 3);
        let q = preprocess("load './Inspection_Aggregated.csv' and give me compensation for parts 4 to 16", &s).unwrap();
        assert_eq!(q.file_paths, ["./Inspection_Aggregated.csv"]);
        assert_eq!(q.part_range, Some(PartRange::new(4, 16).unwrap()));
        let r = preprocess("reset", &s).unwrap();
        assert!(r.reset_flag && r.part_range.is_none() && r.file_paths.is_empty() && r.pair_keys.is_none());
        let t5 = preprocess("analyze the tool wear percentage ranges for each pair (parts 4 to 20)", &s).unwrap();
        assert_eq!(t5.part_range, Some(PartRange::new(4, 20).unwrap()));
        assert!(matches!(preprocess("   ", &s), Err(RouterError::EmptyQuery)));
    }

    #[test]
    fn fallback_examples() {
        let r = ToolRegistry::default();
        let (_d, mut s) = with_inspection();
        let pre = preprocess("compensation for parts 4 to 16", &s).unwrap();
        let d = route(&pre, &mut s, &Disabled, &r).unwrap();
        assert_eq!((d.agent_id, d.origin), (AgentId::Analysis, RoutingOrigin::Fallback));
        assert!(d.tool_categories.contains(&Category::Compensation));
        assert!(d.input_refs.contains(&"parts:4-16".to_string()));
        assert_eq!(s.invocation_history().len(), 1);

        let pre = preprocess("causes of this deflection for the rotor blade", &s).unwrap();
        assert_eq!(route(&pre, &mut s, &Disabled, &r).unwrap().agent_id, AgentId::Kg);

        // A tie with data loaded goes to analysis; without data, to the graph.
        let pre = preprocess("explain the drift", &s).unwrap();
        assert_eq!(fallback_route(&pre, &s, &r).unwrap().agent_id, AgentId::Analysis);
        let empty = SessionState::new("e", 3);
        assert_eq!(fallback_route(&pre, &empty, &r).unwrap().agent_id, AgentId::Kg);
        let pre = preprocess("hello there", &empty).unwrap();
        assert!(matches!(fallback_route(&pre, &empty, &r), Err(RouterError::EscalationNeeded(_))));
    }

    #[test]
    fn malformed_model_output_falls_back() {
        let r = ToolRegistry::default();
        let (_d, mut s) = with_inspection();
        let b = ScriptedBackend::new(vec![ScriptedRule::new(
            Some(Role::Router),
            "compensation",
            r#"{"instruction": "x", "input_refs": [], "tool_categories": []}"#,
        )
        .unwrap()]);
        let pre = preprocess("compensation for parts 4 to 16", &s).unwrap();
        let d = route(&pre, &mut s, &b, &r).unwrap();
        assert_eq!(d.origin, RoutingOrigin::Fallback);
        assert!(d.fallback_reason.unwrap().contains("agent"));

        let good = ScriptedBackend::new(vec![ScriptedRule::new(
            Some(Role::Router),
            ".",
            r#"{"agent": "kg", "instruction": "why", "input_refs": [], "tool_categories": ["Knowledge retrieval"]}"#,
        )
        .unwrap()]);
        let d = route(&pre, &mut s, &good, &r).unwrap();
        assert_eq!((d.agent_id, d.origin), (AgentId::Kg, RoutingOrigin::Model));
    }

    #[test]
    fn schema_examples() {
        let r = ToolRegistry::default();
        let ok = json!({"agent": "analysis", "instruction": "compute drift", "input_refs": [],
                        "tool_categories": ["Drift and variability proxies"]});
        let d = validate_routing(&ok, &r).unwrap();
        assert_eq!(validate_routing(&d.to_wire(), &r).unwrap(), d);
        let e = validate_routing(&json!({"agent": "planner", "instruction": "x", "input_refs": [], "tool_categories": []}), &r)
            .unwrap_err();
        assert_eq!(e.field_names(), ["agent"]);
        let e = validate_routing(&json!({"agent": "kg"}), &r).unwrap_err();
        assert_eq!(e.field_names(), ["instruction", "input_refs", "tool_categories"]);
        let e = validate_routing(&json!({"agent": "kg", "instruction": "x", "input_refs": [],
                                         "tool_categories": ["Cooking"]}), &r)
        .unwrap_err();
        assert_eq!(e.field_names(), ["tool_categories"]);
    }

    #[test]
    fn omission_sweep() {
        let r = ToolRegistry::default();
        let full = json!({"agent": "kg", "instruction": "x", "input_refs": ["a"], "tool_categories": ["Knowledge retrieval"]});
        for mask in 0u8..16 {
            let mut v = full.clone();
            let mut dropped = Vec::new();
            for (i, f) in ROUTING_FIELDS.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    v.as_object_mut().unwrap().remove(*f);
                    dropped.push(*f);
                }
            }
            match validate_routing(&v, &r) {
                Ok(_) => assert!(dropped.is_empty()),
                Err(e) => assert_eq!(e.field_names(), dropped),
            }
        }
    }
}
