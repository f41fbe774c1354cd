//! Language-model backends. Every model call in the crate goes through
//! [`Backend::complete`] (or [`http::HttpEmbedder`] for embeddings).

use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod http;
pub mod scripted;

pub use http::{HttpBackend, HttpEmbedder};
pub use scripted::{ScriptedBackend, ScriptedRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Router,
    AnalysisPlanner,
    KgSynthesizer,
    Extractor,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Router, Role::AnalysisPlanner, Role::KgSynthesizer, Role::Extractor];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Router => "router",
            Self::AnalysisPlanner => "analysis-planner",
            Self::KgSynthesizer => "kg-synthesizer",
            Self::Extractor => "extractor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.as_str() == s)
    }

    /// System message sent with every HTTP request for this role.
    pub fn system_prompt(self) -> &'static str {
        match self {
            Self::Router => "You route manufacturing queries. Reply with one JSON object with fields agent, instruction, input_refs, tool_categories.",
            Self::AnalysisPlanner => "You plan deterministic tool calls. Reply with a JSON array of {\"tool\": name, \"args\": {...}} objects and nothing else.",
            Self::KgSynthesizer => "You answer machining questions from the supplied evidence triples. Cite triple ids in square brackets.",
            Self::Extractor => "You extract knowledge-graph triples in the requested five-field format.",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend failure after {attempts} attempt(s): {reason}")]
    Failure { attempts: u32, reason: String },
    #[error("no scripted rule matches role {role} for prompt starting {excerpt:?}")]
    NoRule { role: Role, excerpt: String },
    #[error("backend profile: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait Backend: Send + Sync {
    fn complete(&self, role: Role, prompt: &str) -> Result<String, GatewayError>;
    fn describe(&self) -> String;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, role: Role, prompt: &str) -> Result<String, GatewayError> {
        (**self).complete(role, prompt)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// A backend that always fails; stands in for "no model configured".
#[derive(Debug, Default, Clone)]
pub struct Disabled;

impl Backend for Disabled {
    fn complete(&self, _role: Role, _prompt: &str) -> Result<String, GatewayError> {
        Err(GatewayError::Failure { attempts: 0, reason: "backend disabled".into() })
    }
    fn describe(&self) -> String {
        "disabled".into()
    }
}

fn default_timeout() -> f64 {
    30.0
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> u64 {
    250
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendProfile {
    HttpEndpoint {
        url: String,
        model: String,
        #[serde(default = "default_timeout")]
        timeout_secs: f64,
        #[serde(default = "default_retries")]
        retries: u32,
        #[serde(default = "default_backoff")]
        backoff_ms: u64,
        /// Name of an environment variable holding a bearer token.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        temperature: f64,
    },
    Scripted {
        script: PathBuf,
    },
    Disabled,
}

impl BackendProfile {
    pub fn validate(&self) -> Result<(), GatewayError> {
        match self {
            Self::Scripted { script } if !script.is_file() => {
                Err(GatewayError::Config(format!("script {} does not exist", script.display())))
            }
            Self::HttpEndpoint { url, .. } if !(url.starts_with("http://") || url.starts_with("https://")) => {
                Err(GatewayError::Config(format!("url {url:?} is not http(s)")))
            }
            Self::HttpEndpoint { timeout_secs, .. } if *timeout_secs <= 0.0 => {
                Err(GatewayError::Config("timeout_secs must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Backend>, GatewayError> {
        self.validate()?;
        Ok(match self {
            Self::HttpEndpoint { .. } => Arc::new(HttpBackend::from_profile(self)?),
            Self::Scripted { script } => Arc::new(ScriptedBackend::from_file(script)?),
            Self::Disabled => Arc::new(Disabled),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_from_toml() {
        let p: BackendProfile = toml::from_str("kind = \"http-endpoint\"\nurl = \"http://localhost:1234/v1/chat/completions\"\nmodel = \"m\"\n").unwrap();
        match &p {
            BackendProfile::HttpEndpoint { retries, temperature, .. } => {
                assert_eq!(*retries, 2);
                assert_eq!(*temperature, 0.0);
            }
            _ => panic!(),
        }
        p.validate().unwrap();
        let s = BackendProfile::Scripted { script: "/nonexistent/rules.toml".into() };
        assert!(s.validate().is_err());
    }

    #[test]
    fn role_names() {
        for r in Role::ALL {
            assert_eq!(Role::parse(r.as_str()), Some(r));
        }
    }
}
