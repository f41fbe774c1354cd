//! Typed call arguments and the coercion rules applied to proposed ones.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::registry::{ParamSpec, ParamType};
use crate::blade::{PairKey, PartRange};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum ArgValue {
    /// Name or path of a loaded resource.
    Resource(String),
    /// 1-based index of an earlier call.
    Ref(usize),
    Parts(PartRange),
    Keys(Vec<PairKey>),
    Int(i64),
    Number(f64),
    Text(String),
    Strategy(String),
}

impl ArgValue {
    /// Plain JSON form used in prompts, reports and benchmark constraints.
    pub fn to_plain(&self) -> Value {
        match self {
            Self::Resource(s) | Self::Text(s) | Self::Strategy(s) => json!(s),
            Self::Ref(k) => json!(format!("call-{k}")),
            Self::Parts(r) => json!(r.to_string()),
            Self::Keys(ks) => json!(ks.iter().map(ToString::to_string).collect::<Vec<_>>()),
            Self::Int(i) => json!(i),
            Self::Number(x) => json!(x),
        }
    }

    pub fn as_ref_index(&self) -> Option<usize> {
        match self {
            Self::Ref(k) => Some(*k),
            _ => None,
        }
    }

    pub fn matches_type(&self, ty: &ParamType) -> bool {
        matches!(
            (self, ty),
            (Self::Resource(_), ParamType::Resource(_))
                | (Self::Ref(_), ParamType::Ref(_))
                | (Self::Parts(_), ParamType::PartRange)
                | (Self::Keys(_), ParamType::PairKeys)
                | (Self::Int(_), ParamType::Int)
                | (Self::Number(_), ParamType::Number | ParamType::Angle)
                | (Self::Text(_), ParamType::Text)
                | (Self::Strategy(_), ParamType::Strategy)
        )
    }
}

impl fmt::Display for ArgValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_plain() {
            Value::String(s) => f.write_str(&s),
            v => write!(f, "{v}"),
        }
    }
}

pub const STRATEGIES: [&str; 3] = ["mean-deviation", "drift-at-target", "bounded-residual"];

/// Strip quotes and whitespace, drop a leading `./`, use forward slashes.
pub fn normalize_path(s: &str) -> String {
    let t = s.trim().trim_matches(|c| c == '\'' || c == '"' || c == '`').trim().replace('\\', "/");
    let mut t = t.as_str();
    while let Some(rest) = t.strip_prefix("./") {
        t = rest;
    }
    t.to_string()
}

pub fn parse_ref(s: &str) -> Option<usize> {
    let t = s.trim();
    let digits = t
        .strip_prefix("call-")
        .or_else(|| t.strip_prefix("call"))
        .or_else(|| t.strip_prefix('$'))
        .or_else(|| t.strip_prefix('#'))
        .unwrap_or(t);
    let digits = digits.split('.').next().unwrap_or(digits);
    digits.trim().parse().ok().filter(|&k| k > 0)
}

fn as_u32(v: &Value) -> Option<u32> {
    match v {
        Value::Number(n) => n.as_u64().and_then(|x| u32::try_from(x).ok()),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Coerce a proposed JSON argument to the parameter's type. Returns the value
/// and, when the input was not already in canonical form, a note describing
/// the repair.
pub fn coerce(param: &ParamSpec, raw: &Value) -> Result<(ArgValue, Option<String>), String> {
    let note = |what: &str| Some(format!("{}: {what}", param.name));
    match &param.ty {
        ParamType::Resource(_) => match raw {
            Value::String(s) if !s.trim().is_empty() => {
                let n = normalize_path(s);
                let changed = n != *s;
                Ok((ArgValue::Resource(n), changed.then(|| note("path normalized")).flatten()))
            }
            _ => Err(format!("{}: expected a resource path", param.name)),
        },
        ParamType::Ref(_) => match raw {
            Value::Number(n) => n
                .as_u64()
                .filter(|&k| k > 0)
                .map(|k| (ArgValue::Ref(k as usize), note("integer reference")))
                .ok_or_else(|| format!("{}: bad call reference {n}", param.name)),
            Value::String(s) => {
                let k = parse_ref(s).ok_or_else(|| format!("{}: bad call reference {s:?}", param.name))?;
                let canonical = s.trim() == format!("call-{k}");
                Ok((ArgValue::Ref(k), (!canonical).then(|| note("reference normalized")).flatten()))
            }
            _ => Err(format!("{}: expected a call reference", param.name)),
        },
        ParamType::PartRange => {
            let (range, coerced) = match raw {
                Value::String(s) => {
                    let t = s.to_lowercase().replace("parts", "").replace("part", "").replace(" to ", "-");
                    (t.parse::<PartRange>().ok(), true)
                }
                Value::Array(a) if a.len() == 2 => {
                    (as_u32(&a[0]).zip(as_u32(&a[1])).and_then(|(x, y)| PartRange::new(x, y).ok()), true)
                }
                Value::Object(o) => (
                    o.get("start").and_then(as_u32).zip(o.get("end").and_then(as_u32)).and_then(|(x, y)| PartRange::new(x, y).ok()),
                    false,
                ),
                Value::Number(_) => (as_u32(raw).and_then(|x| PartRange::new(x, x).ok()), true),
                _ => (None, false),
            };
            let r = range.ok_or_else(|| format!("{}: bad part range {raw}", param.name))?;
            let canonical = matches!(raw, Value::String(s) if *s == r.to_string()) || !coerced;
            Ok((ArgValue::Parts(r), (!canonical).then(|| note("part range coerced")).flatten()))
        }
        ParamType::PairKeys => {
            let items: Vec<String> = match raw {
                Value::Array(a) => a.iter().map(|v| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string())).collect(),
                Value::String(s) => s.split([',', ';', ' ']).filter(|x| !x.trim().is_empty()).map(str::to_string).collect(),
                _ => return Err(format!("{}: expected pair keys", param.name)),
            };
            let mut keys = Vec::new();
            for it in &items {
                keys.push(it.parse::<PairKey>().map_err(|_| format!("{}: bad pair key {it:?}", param.name))?);
            }
            if keys.is_empty() {
                return Err(format!("{}: empty pair-key list", param.name));
            }
            Ok((ArgValue::Keys(keys), raw.is_string().then(|| note("pair keys split from string")).flatten()))
        }
        ParamType::Int => match raw {
            Value::Number(n) if n.as_i64().is_some() => Ok((ArgValue::Int(n.as_i64().unwrap()), None)),
            Value::Number(n) if n.as_f64().is_some_and(|x| x.fract() == 0.0) => {
                Ok((ArgValue::Int(n.as_f64().unwrap() as i64), note("integral float to int")))
            }
            Value::String(s) => s
                .trim()
                .trim_start_matches("part")
                .trim()
                .parse::<i64>()
                .map(|i| (ArgValue::Int(i), note("string to int")))
                .map_err(|_| format!("{}: expected an integer, got {s:?}", param.name)),
            _ => Err(format!("{}: expected an integer", param.name)),
        },
        ParamType::Number | ParamType::Angle => {
            let (x, coerced) = match raw {
                Value::Number(n) => (n.as_f64(), false),
                Value::String(s) => (
                    s.trim().trim_end_matches(['\u{b0}']).trim_end_matches("deg").trim_end_matches("in").trim().parse().ok(),
                    true,
                ),
                _ => (None, false),
            };
            let x = x.filter(|x: &f64| x.is_finite()).ok_or_else(|| format!("{}: expected a number", param.name))?;
            if param.ty == ParamType::Angle && !(x > 0.0 && x < 90.0) {
                return Err(format!("{}: angle {x} outside (0, 90)", param.name));
            }
            Ok((ArgValue::Number(x), coerced.then(|| note("string to number")).flatten()))
        }
        ParamType::Strategy => {
            let s = raw.as_str().ok_or_else(|| format!("{}: expected a strategy name", param.name))?;
            let n = s.trim().to_lowercase().replace(['_', ' '], "-");
            if !STRATEGIES.contains(&n.as_str()) {
                return Err(format!("{}: unknown strategy {s:?}", param.name));
            }
            let changed = n != s;
            Ok((ArgValue::Strategy(n), changed.then(|| note("strategy name normalized")).flatten()))
        }
        ParamType::Text => match raw {
            Value::String(s) => Ok((ArgValue::Text(s.clone()), None)),
            Value::Null => Err(format!("{}: expected text", param.name)),
            v => Ok((ArgValue::Text(v.to_string()), note("value to text"))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::registry::ParamType;

    fn p(ty: &str) -> ParamSpec {
        ParamSpec { name: "x".into(), ty: ParamType::parse(ty).unwrap(), required: false }
    }

    #[test]
    fn coercions() {
        assert_eq!(coerce(&p("int"), &json!("16")).unwrap(), (ArgValue::Int(16), Some("x: string to int".into())));
        assert_eq!(coerce(&p("int"), &json!(16)).unwrap(), (ArgValue::Int(16), None));
        assert!(coerce(&p("int"), &json!("sixteen")).is_err());
        let (v, n) = coerce(&p("part-range"), &json!("4 to 16")).unwrap();
        assert_eq!(v, ArgValue::Parts(PartRange::new(4, 16).unwrap()));
        assert!(n.is_some());
        assert_eq!(coerce(&p("part-range"), &json!("4-16")).unwrap().1, None);
        assert_eq!(coerce(&p("part-range"), &json!([4, 16])).unwrap().0, v);
        assert!(coerce(&p("part-range"), &json!("16-4")).is_err());
        assert_eq!(coerce(&p("ref:pairs"), &json!("call-2")).unwrap(), (ArgValue::Ref(2), None));
        assert_eq!(coerce(&p("ref:pairs"), &json!("$2")).unwrap().0, ArgValue::Ref(2));
        assert!(coerce(&p("ref:pairs"), &json!(0)).is_err());
        assert!(coerce(&p("angle"), &json!(95)).is_err());
        assert_eq!(coerce(&p("angle"), &json!("25deg")).unwrap().0, ArgValue::Number(25.0));
        assert_eq!(coerce(&p("strategy"), &json!("Drift_At_Target")).unwrap().0, ArgValue::Strategy("drift-at-target".into()));
        let (v, _) = coerce(&p("pair-keys"), &json!("2+17, 3+18")).unwrap();
        assert_eq!(v.to_plain(), json!(["2+17", "3+18"]));
        assert!(coerce(&p("pair-keys"), &json!(["2+18"])).is_err());
    }

    #[test]
    fn paths() {
        assert_eq!(normalize_path(" './Inspection_Aggregated.csv' "), "Inspection_Aggregated.csv");
        assert_eq!(normalize_path("data\\x.csv"), "data/x.csv");
        let (v, n) = coerce(&p("resource:inspection-csv"), &json!("./a.csv")).unwrap();
        assert_eq!(v, ArgValue::Resource("a.csv".into()));
        assert!(n.is_some());
    }

    #[test]
    fn plain_forms() {
        assert_eq!(ArgValue::Ref(3).to_plain(), json!("call-3"));
        assert_eq!(ArgValue::Parts(PartRange::new(4, 16).unwrap()).to_string(), "4-16");
        assert!(ArgValue::Number(1.0).matches_type(&ParamType::Angle));
        assert!(!ArgValue::Int(1).matches_type(&ParamType::Number));
    }
}
