//! Tool registry loaded from a TOML manifest (see `tools.toml`).

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::AnalysisError;
use crate::session::ResourceKind;

/// Manifest compiled into the binary; `--tools` may replace it.
pub const DEFAULT_MANIFEST: &str = include_str!("../../tools.toml");

/// Upper bound on calls per instruction.
pub const MAX_CALLS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    DataLoading,
    StatisticsIndexing,
    PathingProjection,
    DriftVariability,
    Attribution,
    Compensation,
    KnowledgeRetrieval,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Self::DataLoading,
        Self::StatisticsIndexing,
        Self::PathingProjection,
        Self::DriftVariability,
        Self::Attribution,
        Self::Compensation,
        Self::KnowledgeRetrieval,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::DataLoading => "Data loading",
            Self::StatisticsIndexing => "Statistics and indexing",
            Self::PathingProjection => "Pathing projection",
            Self::DriftVariability => "Drift and variability proxies",
            Self::Attribution => "Attribution metrics",
            Self::Compensation => "Compensation geometry",
            Self::KnowledgeRetrieval => "Knowledge retrieval",
        }
    }

    /// Case-insensitive match on the display name.
    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown category {s:?}")))
    }
}

/// What a call leaves behind for later calls to consume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    Pairs,
    Slice,
    Pathing,
    Values,
    Scalars,
    Levels,
    Fits,
    Attribution,
    Compensation,
    KgStore,
    Retrieval,
}

impl ArtifactKind {
    pub fn parse(s: &str) -> Option<Self> {
        serde_json::from_value(serde_json::Value::String(s.trim().to_string())).ok()
    }

    pub fn as_str(self) -> String {
        serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamType {
    Resource(ResourceKind),
    Ref(Vec<ArtifactKind>),
    PartRange,
    PairKeys,
    Int,
    Number,
    Angle,
    Strategy,
    Text,
}

impl ParamType {
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if let Some(kind) = s.strip_prefix("resource:") {
            return ResourceKind::parse(kind).map(Self::Resource);
        }
        if let Some(kinds) = s.strip_prefix("ref:") {
            let parsed: Option<Vec<_>> = kinds.split('|').map(ArtifactKind::parse).collect();
            return parsed.filter(|v| !v.is_empty()).map(Self::Ref);
        }
        Some(match s {
            "part-range" => Self::PartRange,
            "pair-keys" => Self::PairKeys,
            "int" => Self::Int,
            "number" => Self::Number,
            "angle" => Self::Angle,
            "strategy" => Self::Strategy,
            "text" => Self::Text,
            _ => return None,
        })
    }

    pub fn accepts(&self, kind: ArtifactKind) -> bool {
        matches!(self, Self::Ref(ks) if ks.contains(&kind))
    }
}

impl fmt::Display for ParamType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Resource(k) => write!(f, "resource:{k}"),
            Self::Ref(ks) => {
                let names: Vec<String> = ks.iter().map(|k| k.as_str()).collect();
                write!(f, "ref:{}", names.join("|"))
            }
            Self::PartRange => f.write_str("part-range"),
            Self::PairKeys => f.write_str("pair-keys"),
            Self::Int => f.write_str("int"),
            Self::Number => f.write_str("number"),
            Self::Angle => f.write_str("angle"),
            Self::Strategy => f.write_str("strategy"),
            Self::Text => f.write_str("text"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub ty: ParamType,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub name: String,
    pub unit: String,
    /// Reported as `metric[pair-key]` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolSpec {
    pub name: String,
    pub alias_of: Option<String>,
    pub category: Category,
    pub description: String,
    pub produces: ArtifactKind,
    /// Infrastructure-only; excluded from tool-selection scoring.
    pub helper: bool,
    pub params: Vec<ParamSpec>,
    pub outputs: Vec<OutputSpec>,
}

impl ToolSpec {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn output(&self, name: &str) -> Option<&OutputSpec> {
        self.outputs.iter().find(|o| o.name == name)
    }

    pub fn metrics(&self) -> impl Iterator<Item = (&str, &OutputSpec)> {
        self.outputs.iter().filter_map(|o| o.metric.as_deref().map(|m| (m, o)))
    }

    /// Name of the implementation this tool runs.
    pub fn canonical(&self) -> &str {
        self.alias_of.as_deref().unwrap_or(&self.name)
    }

    pub fn signature(&self) -> String {
        let params: Vec<String> = self
            .params
            .iter()
            .map(|p| format!("{}{}: {}", p.name, if p.required { "" } else { "?" }, p.ty))
            .collect();
        let outs: Vec<String> = self.outputs.iter().map(|o| format!("{} [{}]", o.name, o.unit)).collect();
        format!("{}({}) -> {}", self.name, params.join(", "), outs.join(", "))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    #[serde(rename = "tool")]
    tools: Vec<RawTool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTool {
    name: String,
    #[serde(default)]
    alias_of: Option<String>,
    category: Category,
    description: String,
    produces: String,
    #[serde(default)]
    helper: bool,
    #[serde(default)]
    params: Vec<RawParam>,
    #[serde(default)]
    outputs: Vec<OutputSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    #[serde(rename = "type")]
    ty: String,
    #[serde(default)]
    required: bool,
}

#[derive(Debug, Clone)]
pub struct ToolRegistry {
    tools: Vec<ToolSpec>,
    by_name: HashMap<String, usize>,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::from_toml(DEFAULT_MANIFEST).expect("bundled manifest is valid")
    }
}

impl ToolRegistry {
    pub fn from_toml(text: &str) -> Result<Self, AnalysisError> {
        let bad = |m: String| AnalysisError::Registry(m);
        let raw: RawManifest = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        let mut tools = Vec::with_capacity(raw.tools.len());
        let mut by_name = HashMap::new();
        for t in raw.tools {
            let produces = ArtifactKind::parse(&t.produces)
                .ok_or_else(|| bad(format!("{}: unknown artifact kind {:?}", t.name, t.produces)))?;
            let mut params = Vec::new();
            for p in t.params {
                let ty = ParamType::parse(&p.ty)
                    .ok_or_else(|| bad(format!("{}.{}: unknown type {:?}", t.name, p.name, p.ty)))?;
                params.push(ParamSpec { name: p.name, ty, required: p.required });
            }
            if by_name.insert(t.name.clone(), tools.len()).is_some() {
                return Err(bad(format!("duplicate tool {}", t.name)));
            }
            tools.push(ToolSpec {
                name: t.name,
                alias_of: t.alias_of,
                category: t.category,
                description: t.description,
                produces,
                helper: t.helper,
                params,
                outputs: t.outputs,
            });
        }
        for t in &tools {
            if let Some(a) = &t.alias_of {
                if !by_name.contains_key(a) {
                    return Err(bad(format!("{} is an alias of unknown tool {a}", t.name)));
                }
            }
        }
        if tools.is_empty() {
            return Err(bad("manifest declares no tools".into()));
        }
        Ok(Self { tools, by_name })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, AnalysisError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| AnalysisError::Registry(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_toml(&text)
    }

    pub fn tools(&self) -> &[ToolSpec] {
        &self.tools
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.by_name.get(name.trim()).map(|&i| &self.tools[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn categories(&self) -> BTreeSet<Category> {
        self.tools.iter().map(|t| t.category).collect()
    }

    pub fn helpers(&self) -> Vec<String> {
        self.tools.iter().filter(|t| t.helper).map(|t| t.name.clone()).collect()
    }

    /// First non-alias tool reporting `metric`.
    pub fn producer_of_metric(&self, metric: &str) -> Option<&ToolSpec> {
        self.tools
            .iter()
            .filter(|t| t.alias_of.is_none())
            .find(|t| t.metrics().any(|(m, _)| m == metric))
    }

    pub fn producer_of_kind(&self, kind: ArtifactKind) -> Option<&ToolSpec> {
        self.tools.iter().filter(|t| t.alias_of.is_none()).find(|t| t.produces == kind)
    }

    /// Tools needed to report every metric in `metrics`: each producer plus
    /// the producers of its required inputs, in manifest order.
    pub fn chain_for_metrics<S: AsRef<str>>(&self, metrics: &[S]) -> Vec<String> {
        let mut needed = BTreeSet::new();
        let mut stack: Vec<usize> = metrics
            .iter()
            .filter_map(|m| self.producer_of_metric(m.as_ref()))
            .filter_map(|t| self.position(&t.name))
            .collect();
        while let Some(i) = stack.pop() {
            if !needed.insert(i) {
                continue;
            }
            for p in self.tools[i].params.iter().filter(|p| p.required) {
                if let ParamType::Ref(kinds) = &p.ty {
                    if kinds.iter().any(|k| needed.iter().any(|&j| self.tools[j].produces == *k)) {
                        continue;
                    }
                    if let Some(j) = self.producer_of_kind(kinds[0]).and_then(|t| self.position(&t.name)) {
                        stack.push(j);
                    }
                }
            }
        }
        needed.into_iter().map(|i| self.tools[i].name.clone()).collect()
    }

    /// One line per tool, for planner prompts.
    pub fn prompt_summary(&self) -> String {
        self.tools
            .iter()
            .map(|t| format!("- {} [{}]: {}\n", t.signature(), t.category, t.description))
            .collect()
    }
}
