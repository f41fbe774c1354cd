//! Knowledge-graph store and retrieval.

use std::sync::Arc;

use thiserror::Error;

pub mod embed;
pub mod retrieve;
pub mod store;
pub mod tsv;

pub use embed::{cosine, EmbedError, Embedder, HashEmbedder};
pub use retrieve::{
    expand, retrieve, score, select_candidates, RetrievalConfig, RetrievalResult, Scored, Selection,
};
pub use store::{entity_key, triple_id, IngestReport, TripleRecord, TripleStore};
pub use tsv::{parse_line, Parsed, Repair, TsvTriple, FORMAT_LINE};

#[derive(Debug, Error)]
pub enum KgError {
    #[error("knowledge store is empty")]
    EmptyKnowledge,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("store was built with {store}, refusing embeddings from {offered}")]
    EmbedderMismatch { store: String, offered: String },
    #[error("retrieval config: {0}")]
    Config(String),
    #[error("store format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A store with the embedder that built it and the retrieval knobs.
#[derive(Clone)]
pub struct KgContext {
    pub store: TripleStore,
    pub embedder: Arc<dyn Embedder>,
    pub config: RetrievalConfig,
}

impl KgContext {
    pub fn new(store: TripleStore, embedder: Arc<dyn Embedder>, config: RetrievalConfig) -> Self {
        Self { store, embedder, config }
    }

    pub fn retrieve(&self, query: &str) -> Result<RetrievalResult, KgError> {
        retrieve(query, &self.config, self.embedder.as_ref(), &self.store)
    }
}

impl std::fmt::Debug for KgContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KgContext")
            .field("triples", &self.store.len())
            .field("embedder", &self.embedder.name())
            .field("config", &self.config)
            .finish()
    }
}
