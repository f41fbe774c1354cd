//! One TOML document for every module's knobs. Every section is optional.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, EngineConfig};
use crate::eval::{CriticSuiteConfig, DepthConfig};
use crate::gateway::{Backend, BackendProfile, Disabled};
use crate::kg::{HashEmbedder, KgContext, KgError, RetrievalConfig, TripleStore};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown backend profile {0:?}")]
    UnknownProfile(String),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error(transparent)]
    Kg(#[from] KgError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KgSection {
    /// Saved store directory.
    pub store: Option<PathBuf>,
    /// Directory of five-field `.tsv` files ingested at startup.
    pub corpus: Option<PathBuf>,
    pub embed_dim: usize,
}

impl Default for KgSection {
    fn default() -> Self {
        Self { store: None, corpus: None, embed_dim: HashEmbedder::DEFAULT_DIM }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSection {
    pub bind: String,
    /// Per-session audit and payload directories go under here.
    pub audit_dir: Option<PathBuf>,
}

impl Default for ServerSection {
    fn default() -> Self {
        Self { bind: "127.0.0.1:8700".into(), audit_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub depth: DepthConfig,
    pub critic: CriticSuiteConfig,
    pub qa_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { depth: DepthConfig::default(), critic: CriticSuiteConfig::default(), qa_seed: 11 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    /// Name of the active entry in `backends`. `disabled` always exists.
    pub backend: String,
    pub backends: BTreeMap<String, BackendProfile>,
    pub engine: EngineConfig,
    pub retrieval: RetrievalConfig,
    pub kg: KgSection,
    pub server: ServerSection,
    pub eval: EvalSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            backend: "disabled".into(),
            backends: BTreeMap::new(),
            engine: EngineConfig::default(),
            retrieval: RetrievalConfig::default(),
            kg: KgSection::default(),
            server: ServerSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn profile(&self, name: &str) -> Result<BackendProfile, ConfigError> {
        match self.backends.get(name) {
            Some(p) => Ok(p.clone()),
            None if name == "disabled" => Ok(BackendProfile::Disabled),
            None => Err(ConfigError::UnknownProfile(name.to_string())),
        }
    }

    /// The backend named by `name`, or the configured default.
    pub fn backend(&self, name: Option<&str>) -> Result<Arc<dyn Backend>, ConfigError> {
        let name = name.unwrap_or(&self.backend);
        match self.profile(name)? {
            BackendProfile::Disabled => Ok(Arc::new(Disabled)),
            p => Ok(p.build()?),
        }
    }

    /// The configured knowledge store, if any: a saved store, then any
    /// corpus files ingested on top.
    pub fn kg_context(&self) -> Result<Option<KgContext>, ConfigError> {
        if self.kg.store.is_none() && self.kg.corpus.is_none() {
            return Ok(None);
        }
        self.retrieval.validate()?;
        let embedder = HashEmbedder::new(self.kg.embed_dim);
        let mut store = match &self.kg.store {
            Some(dir) => TripleStore::load(dir)?,
            None => TripleStore::default(),
        };
        if let Some(dir) = &self.kg.corpus {
            ingest_dir(&mut store, dir, &embedder)?;
        }
        Ok(Some(KgContext::new(store, Arc::new(embedder), self.retrieval.clone())))
    }

    pub fn engine(&self, backend: Option<&str>) -> Result<Engine, ConfigError> {
        let mut e = Engine::new(self.backend(backend)?, self.engine.clone());
        if let Some(k) = self.kg_context()? {
            e = e.with_kg(k);
        }
        Ok(e)
    }
}

/// Ingest every `.tsv` file in `dir`, in name order, with the file stem as
/// the source document.
pub fn ingest_dir(store: &mut TripleStore, dir: &Path, embedder: &HashEmbedder) -> Result<(), ConfigError> {
    let read = |e: std::io::Error| ConfigError::Read { path: dir.display().to_string(), source: e };
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(read)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "tsv"))
        .collect();
    files.sort();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(read)?;
        let doc = f.file_stem().and_then(|s| s.to_str()).unwrap_or("doc").to_string();
        store.ingest_triples(&text, &doc, embedder)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_default_independently() {
        let c = AppConfig::from_toml("[server]\nbind = \"0.0.0.0:9000\"\n[engine.critic]\nbudget = 5\n").unwrap();
        assert_eq!(c.server.bind, "0.0.0.0:9000");
        assert_eq!(c.engine.critic.budget, 5);
        assert_eq!(c.backend, "disabled");
        assert_eq!(c.retrieval, RetrievalConfig::default());
        assert!(AppConfig::from_toml("[server]\nport = 1\n").is_err());
    }

    #[test]
    fn profiles_resolve() {
        let c = AppConfig::from_toml("backend = \"missing\"\n").unwrap();
        assert!(matches!(c.backend(None), Err(ConfigError::UnknownProfile(_))));
        assert!(c.backend(Some("disabled")).is_ok());
    }
}
