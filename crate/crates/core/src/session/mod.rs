//! Per-conversation state, the append-only audit trail and provenance maps.
//!
//! Every mutation of [`SessionState`] goes through [`SessionState::apply`],
//! which stores the event payload in a content-addressed store and appends
//! a digest-only record to the audit trail. Replaying the trail against the
//! payload store rebuilds an identical state.

use thiserror::Error;

pub mod audit;
pub mod payload;
pub mod provenance;
pub mod state;

pub use audit::{AuditEvent, AuditTrail};
pub use payload::PayloadStore;
pub use provenance::{
    quantity_id, resolve_provenance, IntegrityError, ProvenanceIndex, ProvenanceMap,
    ProvenanceTarget,
};
pub use state::{
    artifact_key, Actor, AgentId, Approval, ApprovalKind, CacheEntry, CriticDecision, Invocation,
    ResourceHandle, ResourceKind, SessionState, StateEvent,
};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown event kind {0:?}")]
    UnknownEventKind(String),
    #[error("malformed event: {0}")]
    MalformedEvent(String),
    #[error("cache key {key} already holds digest {existing}, refusing {offered}")]
    CacheConflict { key: String, existing: String, offered: String },
    #[error("critic budget exhausted: {count} invocations with budget {budget}")]
    CriticBudget { count: u32, budget: u32 },
    #[error("resource {name}: {reason}")]
    Resource { name: String, reason: String },
    #[error("payload {0} missing from store")]
    MissingPayload(String),
    #[error("payload digest mismatch for {0}")]
    PayloadDigest(String),
    #[error("audit file: {0}")]
    AuditFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
