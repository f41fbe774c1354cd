//! Deterministic rule-based backend.
//!
//! Rule file (TOML), first match wins:
//!
//! ```toml
//! [[rule]]
//! role = "router"            # optional, any role when absent
//! pattern = "(?i)compensation"
//! response = '{"agent": "analysis", ...}'
//! once = false               # consume after first use
//! expand = false             # substitute $1 / ${name} captures into response
//! ```

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use regex::Regex;
use serde::Deserialize;

use super::{Backend, GatewayError, Role};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    #[serde(default)]
    pub role: Option<Role>,
    pub pattern: String,
    pub response: String,
    #[serde(default)]
    pub once: bool,
    #[serde(default)]
    pub expand: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    #[serde(default, rename = "rule")]
    rules: Vec<RuleSpec>,
}

#[derive(Debug)]
pub struct ScriptedRule {
    pub role: Option<Role>,
    pub matcher: Regex,
    pub response: String,
    pub once: bool,
    pub expand: bool,
    spent: AtomicBool,
}

impl ScriptedRule {
    pub fn new(role: Option<Role>, pattern: &str, response: impl Into<String>) -> Result<Self, GatewayError> {
        Ok(Self {
            role,
            matcher: Regex::new(pattern).map_err(|e| GatewayError::Config(format!("pattern {pattern:?}: {e}")))?,
            response: response.into(),
            once: false,
            expand: false,
            spent: AtomicBool::new(false),
        })
    }

    pub fn once(mut self) -> Self {
        self.once = true;
        self
    }

    pub fn expanding(mut self) -> Self {
        self.expand = true;
        self
    }

    pub fn is_spent(&self) -> bool {
        self.spent.load(Ordering::SeqCst)
    }

    fn try_respond(&self, role: Role, prompt: &str) -> Option<String> {
        if self.role.is_some_and(|r| r != role) || self.is_spent() {
            return None;
        }
        let caps = self.matcher.captures(prompt)?;
        // Only one caller may consume a once-rule.
        if self.once && self.spent.swap(true, Ordering::SeqCst) {
            return None;
        }
        if self.expand {
            let mut out = String::new();
            caps.expand(&self.response, &mut out);
            Some(out)
        } else {
            Some(self.response.clone())
        }
    }
}

#[derive(Debug, Default)]
pub struct ScriptedBackend {
    rules: Vec<ScriptedRule>,
    calls: AtomicUsize,
    label: String,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptedRule>) -> Self {
        Self { rules, calls: AtomicUsize::new(0), label: "scripted".into() }
    }

    pub fn from_toml(text: &str) -> Result<Self, GatewayError> {
        let file: RuleFile = toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        let mut rules = Vec::with_capacity(file.rules.len());
        for spec in file.rules {
            let mut r = ScriptedRule::new(spec.role, &spec.pattern, spec.response)?;
            r.once = spec.once;
            r.expand = spec.expand;
            rules.push(r);
        }
        Ok(Self::new(rules))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let mut b = Self::from_toml(&std::fs::read_to_string(path.as_ref())?)?;
        b.label = format!("scripted:{}", path.as_ref().display());
        Ok(b)
    }

    pub fn push(&mut self, rule: ScriptedRule) {
        self.rules.push(rule);
    }

    pub fn rules(&self) -> &[ScriptedRule] {
        &self.rules
    }

    /// Number of `complete` calls served so far, including failures.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, role: Role, prompt: &str) -> Result<String, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.rules
            .iter()
            .find_map(|r| r.try_respond(role, prompt))
            .ok_or_else(|| GatewayError::NoRule { role, excerpt: prompt.chars().take(80).collect() })
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RULES: &str = r#"
[[rule]]
role = "router"
pattern = "(?i)compensation"
response = '{"agent":"analysis"}'

[[rule]]
pattern = "first"
response = "only once"
once = true

[[rule]]
pattern = "pair (\\d+\\+\\d+)"
response = "got $1"
expand = true
"#;

    #[test]
    fn first_match_and_role_filter() {
        let b = ScriptedBackend::from_toml(RULES).unwrap();
        assert_eq!(b.complete(Role::Router, "Compensation please").unwrap(), "{\"agent\":\"analysis\"}");
        assert!(matches!(
            b.complete(Role::Extractor, "compensation"),
            Err(GatewayError::NoRule { role: Role::Extractor, .. })
        ));
        assert_eq!(b.complete(Role::Extractor, "pair 2+17 now").unwrap(), "got 2+17");
    }

    #[test]
    fn once_rules_are_consumed() {
        let b = ScriptedBackend::from_toml(RULES).unwrap();
        assert_eq!(b.complete(Role::KgSynthesizer, "first").unwrap(), "only once");
        assert!(b.complete(Role::KgSynthesizer, "first").is_err());
        assert!(b.rules()[1].is_spent());
        assert_eq!(b.calls(), 2);
    }

    #[test]
    fn independent_instances_agree() {
        let a = ScriptedBackend::from_toml(RULES).unwrap();
        let b = ScriptedBackend::from_toml(RULES).unwrap();
        for p in ["compensation", "pair 3+18", "first"] {
            assert_eq!(a.complete(Role::Router, p).ok(), b.complete(Role::Router, p).ok());
        }
    }

    #[test]
    fn once_rule_is_served_to_exactly_one_thread() {
        let b = ScriptedBackend::new(vec![ScriptedRule::new(None, "x", "won").unwrap().once()]);
        let wins: usize = std::thread::scope(|s| {
            let hs: Vec<_> = (0..8).map(|_| s.spawn(|| b.complete(Role::Router, "x").is_ok() as usize)).collect();
            hs.into_iter().map(|h| h.join().unwrap()).sum()
        });
        assert_eq!(wins, 1);
    }

    #[test]
    fn bad_pattern_is_a_config_error() {
        assert!(matches!(ScriptedRule::new(None, "(", "x"), Err(GatewayError::Config(_))));
    }
}
