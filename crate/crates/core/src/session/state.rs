//! Session state and the events that mutate it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::audit::{AuditEvent, AuditTrail};
use super::payload::PayloadStore;
use super::SessionError;
use crate::digest::{json_digest, sha256_hex, short};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Actor {
    Central,
    Analysis,
    Kg,
    Critic,
    Human,
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Central => "central",
            Self::Analysis => "analysis",
            Self::Kg => "kg",
            Self::Critic => "critic",
            Self::Human => "human",
        })
    }
}

/// Agents the router may dispatch to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentId {
    Analysis,
    Kg,
}

impl AgentId {
    pub const ALL: [AgentId; 2] = [AgentId::Analysis, AgentId::Kg];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Analysis => "analysis",
            Self::Kg => "kg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }

    pub fn actor(self) -> Actor {
        match self {
            Self::Analysis => Actor::Analysis,
            Self::Kg => Actor::Kg,
        }
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CriticDecision {
    Accept,
    Revise,
    Escalate,
}

impl fmt::Display for CriticDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Accept => "accept",
            Self::Revise => "revise",
            Self::Escalate => "escalate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResourceKind {
    InspectionCsv,
    PathingField,
    DeflectionField,
    Image,
    KgStore,
}

impl ResourceKind {
    pub const ALL: [ResourceKind; 5] = [
        Self::InspectionCsv,
        Self::PathingField,
        Self::DeflectionField,
        Self::Image,
        Self::KgStore,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::InspectionCsv => "inspection-csv",
            Self::PathingField => "pathing-field",
            Self::DeflectionField => "deflection-field",
            Self::Image => "image",
            Self::KgStore => "kg-store",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Guess a kind from a file name.
    pub fn infer(path: &str) -> Self {
        let lower = path.to_ascii_lowercase();
        let ext = Path::new(&lower).extension().and_then(|e| e.to_str()).unwrap_or("");
        match ext {
            "png" | "jpg" | "jpeg" | "tif" | "tiff" | "bmp" => Self::Image,
            "jsonl" | "tsv" => Self::KgStore,
            _ if lower.contains("pathing") || lower.contains("virtual") => Self::PathingField,
            _ if lower.contains("deflection") => Self::DeflectionField,
            "" if !lower.ends_with(".csv") => Self::KgStore,
            _ => Self::InspectionCsv,
        }
    }
}

impl fmt::Display for ResourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceHandle {
    pub kind: ResourceKind,
    pub uri: String,
    /// SHA-256 of the file content (or of the sorted directory listing and
    /// file digests for directory resources).
    pub checksum: String,
}

impl ResourceHandle {
    pub fn load(kind: ResourceKind, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        Ok(Self {
            kind,
            uri: path.display().to_string(),
            checksum: content_checksum(path)?,
        })
    }

    pub fn path(&self) -> PathBuf {
        PathBuf::from(&self.uri)
    }

    /// True when the content on disk still matches the recorded checksum.
    pub fn verify(&self) -> bool {
        content_checksum(Path::new(&self.uri)).is_ok_and(|c| c == self.checksum)
    }
}

fn content_checksum(path: &Path) -> std::io::Result<String> {
    if path.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.path())
            .collect();
        entries.sort();
        let mut listing = String::new();
        for p in entries {
            let name = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
            listing.push_str(&format!("{name}\t{}\n", sha256_hex(&std::fs::read(&p)?)));
        }
        Ok(sha256_hex(listing.as_bytes()))
    } else {
        Ok(sha256_hex(&std::fs::read(path)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    /// Digest of the cached artifact in the payload store.
    pub digest: String,
    /// Tool output (`call-<k>`) or retrieval identifier that produced it.
    pub produced_by: String,
    pub cached_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invocation {
    pub agent: AgentId,
    pub instruction_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApprovalKind {
    Approve,
    Override,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approval {
    pub ts: String,
    pub kind: ApprovalKind,
    pub turn: Option<u64>,
    pub note_digest: String,
    /// Critic verdict in force when the human signal arrived.
    pub retained_verdict: Option<CriticDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StateEvent {
    /// A new user query; starts a fresh critic budget.
    QueryReceived { query: String },
    ResourceLoaded { name: String, handle: ResourceHandle },
    ArtifactCached { key: String, digest: String, produced_by: String },
    AgentInvoked { agent: AgentId, instruction: String },
    CriticDecided {
        decision: CriticDecision,
        failed_checks: Vec<String>,
        score: f64,
    },
    HumanApproved {
        approval: ApprovalKind,
        turn: Option<u64>,
        note: String,
        retained_verdict: Option<CriticDecision>,
    },
    Reset,
    /// Free-form record (plan repairs, escalation reports); no state change.
    Annotated { label: String, detail: Value },
}

const EVENT_KINDS: [&str; 8] = [
    "query-received",
    "resource-loaded",
    "artifact-cached",
    "agent-invoked",
    "critic-decided",
    "human-approved",
    "reset",
    "annotated",
];

impl StateEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::QueryReceived { .. } => EVENT_KINDS[0],
            Self::ResourceLoaded { .. } => EVENT_KINDS[1],
            Self::ArtifactCached { .. } => EVENT_KINDS[2],
            Self::AgentInvoked { .. } => EVENT_KINDS[3],
            Self::CriticDecided { .. } => EVENT_KINDS[4],
            Self::HumanApproved { .. } => EVENT_KINDS[5],
            Self::Reset => EVENT_KINDS[6],
            Self::Annotated { .. } => EVENT_KINDS[7],
        }
    }

    pub fn default_actor(&self) -> Actor {
        match self {
            Self::ArtifactCached { .. } => Actor::Analysis,
            Self::CriticDecided { .. } => Actor::Critic,
            Self::HumanApproved { .. } => Actor::Human,
            _ => Actor::Central,
        }
    }

    /// Parse an event object, distinguishing unknown kinds from malformed
    /// bodies of known kinds.
    pub fn from_value(v: Value) -> Result<Self, SessionError> {
        let kind = v
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| SessionError::MalformedEvent("missing \"kind\"".into()))?;
        if !EVENT_KINDS.contains(&kind) {
            return Err(SessionError::UnknownEventKind(kind.to_string()));
        }
        serde_json::from_value(v).map_err(|e| SessionError::MalformedEvent(e.to_string()))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("state events serialize")
    }
}

/// Deterministic key for a tool artifact: tool name plus a digest of its
/// canonical arguments.
pub fn artifact_key(tool: &str, canonical_args: &Value) -> String {
    format!("{tool}:{}", short(&json_digest(canonical_args), 16))
}

#[derive(Debug, Clone, Serialize)]
struct Snapshot<'a> {
    session_id: &'a str,
    critic_budget: u32,
    resources: &'a BTreeMap<String, ResourceHandle>,
    cache: &'a BTreeMap<String, CacheEntry>,
    invocation_history: &'a [Invocation],
    critic_count: u32,
    approvals: &'a [Approval],
    audit: &'a [AuditEvent],
}

#[derive(Debug, Clone)]
pub struct SessionState {
    session_id: String,
    critic_budget: u32,
    resources: BTreeMap<String, ResourceHandle>,
    cache: BTreeMap<String, CacheEntry>,
    invocation_history: Vec<Invocation>,
    critic_count: u32,
    approvals: Vec<Approval>,
    audit: AuditTrail,
    payloads: PayloadStore,
    audit_file: Option<PathBuf>,
}

impl SessionState {
    pub fn new(session_id: impl Into<String>, critic_budget: u32) -> Self {
        Self {
            session_id: session_id.into(),
            critic_budget,
            resources: BTreeMap::new(),
            cache: BTreeMap::new(),
            invocation_history: Vec::new(),
            critic_count: 0,
            approvals: Vec::new(),
            audit: AuditTrail::default(),
            payloads: PayloadStore::default(),
            audit_file: None,
        }
    }

    /// Persist payloads under `dir/payloads/` and append audit lines to
    /// `dir/audit.ndjson`.
    pub fn persistent(
        session_id: impl Into<String>,
        critic_budget: u32,
        dir: impl AsRef<Path>,
    ) -> Result<Self, SessionError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut s = Self::new(session_id, critic_budget);
        s.payloads = PayloadStore::directory(dir.join("payloads"))?;
        s.audit_file = Some(dir.join("audit.ndjson"));
        Ok(s)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }
    pub fn critic_budget(&self) -> u32 {
        self.critic_budget
    }
    pub fn resources(&self) -> &BTreeMap<String, ResourceHandle> {
        &self.resources
    }
    pub fn cache(&self) -> &BTreeMap<String, CacheEntry> {
        &self.cache
    }
    pub fn invocation_history(&self) -> &[Invocation] {
        &self.invocation_history
    }
    pub fn critic_count(&self) -> u32 {
        self.critic_count
    }
    pub fn approvals(&self) -> &[Approval] {
        &self.approvals
    }
    pub fn audit(&self) -> &AuditTrail {
        &self.audit
    }
    pub fn payloads(&self) -> &PayloadStore {
        &self.payloads
    }

    /// Resource of the given kind, preferring the one registered under the
    /// kind's own name.
    pub fn resource_of_kind(&self, kind: ResourceKind) -> Option<&ResourceHandle> {
        self.resources
            .get(kind.as_str())
            .filter(|h| h.kind == kind)
            .or_else(|| self.resources.values().find(|h| h.kind == kind))
    }

    pub fn has_data_resource(&self) -> bool {
        self.resources.values().any(|h| h.kind != ResourceKind::KgStore)
    }

    pub fn apply(&mut self, event: StateEvent) -> Result<(), SessionError> {
        let actor = event.default_actor();
        self.apply_as(actor, event)
    }

    pub fn apply_as(&mut self, actor: Actor, event: StateEvent) -> Result<(), SessionError> {
        let ts = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true);
        self.apply_at(ts, actor, event)
    }

    /// Validate, store the payload, append the audit record, then mutate.
    /// A rejected event leaves both state and trail untouched.
    pub fn apply_at(&mut self, ts: String, actor: Actor, event: StateEvent) -> Result<(), SessionError> {
        self.validate(&event)?;
        let digest = self.payloads.put(&event.to_bytes())?;
        let record = AuditEvent { ts: ts.clone(), actor, kind: event.kind().to_string(), digest };
        if let Some(path) = &self.audit_file {
            AuditTrail::append_to_file(path, &record)?;
        }
        self.audit.push(record);
        self.mutate(ts, event);
        Ok(())
    }

    fn validate(&self, event: &StateEvent) -> Result<(), SessionError> {
        match event {
            StateEvent::ArtifactCached { key, digest, .. } => match self.cache.get(key) {
                Some(e) if &e.digest != digest => Err(SessionError::CacheConflict {
                    key: key.clone(),
                    existing: e.digest.clone(),
                    offered: digest.clone(),
                }),
                _ => Ok(()),
            },
            StateEvent::CriticDecided { .. } if self.critic_count > self.critic_budget => {
                Err(SessionError::CriticBudget { count: self.critic_count, budget: self.critic_budget })
            }
            StateEvent::ResourceLoaded { name, .. } if name.trim().is_empty() => Err(SessionError::Resource {
                name: name.clone(),
                reason: "empty resource name".into(),
            }),
            _ => Ok(()),
        }
    }

    fn mutate(&mut self, ts: String, event: StateEvent) {
        match event {
            StateEvent::QueryReceived { .. } => self.critic_count = 0,
            StateEvent::ResourceLoaded { name, handle } => {
                self.resources.insert(name, handle);
            }
            StateEvent::ArtifactCached { key, digest, produced_by } => {
                self.cache
                    .entry(key)
                    .or_insert(CacheEntry { digest, produced_by, cached_at: ts });
            }
            StateEvent::AgentInvoked { agent, instruction } => self.invocation_history.push(Invocation {
                agent,
                instruction_digest: sha256_hex(instruction.as_bytes()),
            }),
            StateEvent::CriticDecided { .. } => self.critic_count += 1,
            StateEvent::HumanApproved { approval, turn, note, retained_verdict } => {
                self.approvals.push(Approval {
                    ts,
                    kind: approval,
                    turn,
                    note_digest: sha256_hex(note.as_bytes()),
                    retained_verdict,
                })
            }
            StateEvent::Reset => {
                self.cache.clear();
                self.resources.clear();
            }
            StateEvent::Annotated { .. } => {}
        }
    }

    /// Store an artifact and record it in the cache under `key`.
    pub fn cache_artifact(
        &mut self,
        actor: Actor,
        key: String,
        produced_by: String,
        artifact: &Value,
    ) -> Result<String, SessionError> {
        let bytes = serde_json::to_vec(artifact).expect("values serialize");
        let digest = self.payloads.put(&bytes)?;
        self.apply_as(actor, StateEvent::ArtifactCached { key, digest: digest.clone(), produced_by })?;
        Ok(digest)
    }

    pub fn cached_artifact(&self, key: &str) -> Result<Option<Value>, SessionError> {
        let Some(entry) = self.cache.get(key) else { return Ok(None) };
        let bytes = self
            .payloads
            .get(&entry.digest)?
            .ok_or_else(|| SessionError::MissingPayload(entry.digest.clone()))?;
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| SessionError::MalformedEvent(e.to_string()))
    }

    /// Load the payload of an audit record.
    pub fn payload_of(&self, record: &AuditEvent) -> Result<StateEvent, SessionError> {
        let bytes = self
            .payloads
            .get(&record.digest)?
            .ok_or_else(|| SessionError::MissingPayload(record.digest.clone()))?;
        let v: Value =
            serde_json::from_slice(&bytes).map_err(|e| SessionError::MalformedEvent(e.to_string()))?;
        StateEvent::from_value(v)
    }

    /// Digest over everything except the storage backends.
    pub fn digest(&self) -> String {
        json_digest(&Snapshot {
            session_id: &self.session_id,
            critic_budget: self.critic_budget,
            resources: &self.resources,
            cache: &self.cache,
            invocation_history: &self.invocation_history,
            critic_count: self.critic_count,
            approvals: &self.approvals,
            audit: self.audit.events(),
        })
    }

    pub fn snapshot_json(&self) -> Value {
        serde_json::to_value(Snapshot {
            session_id: &self.session_id,
            critic_budget: self.critic_budget,
            resources: &self.resources,
            cache: &self.cache,
            invocation_history: &self.invocation_history,
            critic_count: self.critic_count,
            approvals: &self.approvals,
            audit: self.audit.events(),
        })
        .expect("snapshot serializes")
    }

    /// Rebuild a state from an empty one by re-applying every audited event.
    pub fn replay(
        session_id: impl Into<String>,
        critic_budget: u32,
        trail: &AuditTrail,
        payloads: &PayloadStore,
    ) -> Result<Self, SessionError> {
        let mut s = Self::new(session_id, critic_budget);
        s.payloads = payloads.clone();
        for record in trail.events() {
            let event = s.payload_of(record)?;
            if event.kind() != record.kind {
                return Err(SessionError::AuditFormat(format!(
                    "record kind {} does not match payload kind {}",
                    record.kind,
                    event.kind()
                )));
            }
            s.apply_at(record.ts.clone(), record.actor, event)?;
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inspection_handle() -> (tempfile::NamedTempFile, ResourceHandle) {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        std::io::Write::write_all(&mut f, b"part_id,point_id,deviation_in\n1,2,0.001\n").unwrap();
        let h = ResourceHandle::load(ResourceKind::InspectionCsv, f.path()).unwrap();
        (f, h)
    }

    #[test]
    fn resource_loaded_appends_one_event() {
        let (_f, h) = inspection_handle();
        let mut s = SessionState::new("s1", 3);
        s.apply(StateEvent::ResourceLoaded { name: "inspection-csv".into(), handle: h }).unwrap();
        assert_eq!(s.resources().len(), 1);
        assert_eq!(s.audit().len(), 1);
        assert!(s.resource_of_kind(ResourceKind::InspectionCsv).unwrap().verify());
    }

    #[test]
    fn checksum_detects_modification() {
        let (f, h) = inspection_handle();
        std::fs::write(f.path(), "changed").unwrap();
        assert!(!h.verify());
    }

    #[test]
    fn reset_clears_cache_and_resources_only() {
        let (_f, h) = inspection_handle();
        let mut s = SessionState::new("s1", 3);
        s.apply(StateEvent::ResourceLoaded { name: "a".into(), handle: h }).unwrap();
        for i in 0..3 {
            s.cache_artifact(Actor::Analysis, format!("k{i}"), format!("call-{i}"), &Value::from(i))
                .unwrap();
        }
        let before: Vec<_> = s.audit().events().to_vec();
        s.apply(StateEvent::Reset).unwrap();
        assert!(s.cache().is_empty() && s.resources().is_empty());
        assert_eq!(s.audit().len(), before.len() + 1);
        assert_eq!(&s.audit().events()[..before.len()], &before[..]);
    }

    #[test]
    fn cache_conflict_is_rejected_without_append() {
        let mut s = SessionState::new("s1", 3);
        s.cache_artifact(Actor::Analysis, "k".into(), "call-1".into(), &Value::from(1)).unwrap();
        s.cache_artifact(Actor::Analysis, "k".into(), "call-1".into(), &Value::from(1)).unwrap();
        let n = s.audit().len();
        let err = s.cache_artifact(Actor::Analysis, "k".into(), "call-2".into(), &Value::from(2));
        assert!(matches!(err, Err(SessionError::CacheConflict { .. })));
        assert_eq!(s.audit().len(), n);
        assert_eq!(s.cached_artifact("k").unwrap(), Some(Value::from(1)));
    }

    #[test]
    fn unknown_kind_is_rejected_with_diagnostic() {
        let err = StateEvent::from_value(serde_json::json!({"kind": "teleport"})).unwrap_err();
        assert_eq!(err.to_string(), "unknown event kind \"teleport\"");
        let err = StateEvent::from_value(serde_json::json!({"kind": "agent-invoked"})).unwrap_err();
        assert!(matches!(err, SessionError::MalformedEvent(_)));
    }

    #[test]
    fn invocations_then_escalation() {
        let mut s = SessionState::new("s1", 3);
        let events: Vec<StateEvent> = (0..5)
            .map(|i| StateEvent::AgentInvoked { agent: AgentId::Analysis, instruction: format!("step {i}") })
            .chain([StateEvent::CriticDecided {
                decision: CriticDecision::Escalate,
                failed_checks: vec!["safety".into()],
                score: 0.75,
            }])
            .collect();
        for e in events.clone() {
            s.apply(e).unwrap();
        }
        // Oracle: fold the event list by hand.
        let invoked = events.iter().filter(|e| matches!(e, StateEvent::AgentInvoked { .. })).count();
        let last_actor = events.last().unwrap().default_actor();
        assert_eq!(s.invocation_history().len(), invoked);
        assert_eq!(invoked, 5);
        assert_eq!(s.audit().last().unwrap().actor, last_actor);
        assert_eq!(last_actor, Actor::Critic);
    }

    #[test]
    fn critic_budget_guard_and_query_reset() {
        let mut s = SessionState::new("s1", 1);
        let decided = || StateEvent::CriticDecided {
            decision: CriticDecision::Revise,
            failed_checks: vec![],
            score: 0.5,
        };
        s.apply(decided()).unwrap();
        s.apply(decided()).unwrap();
        assert!(matches!(s.apply(decided()), Err(SessionError::CriticBudget { .. })));
        s.apply(StateEvent::QueryReceived { query: "next".into() }).unwrap();
        assert_eq!(s.critic_count(), 0);
    }

    #[test]
    fn replay_reproduces_digest_from_directory_store() {
        let dir = tempfile::tempdir().unwrap();
        let (_f, h) = inspection_handle();
        let mut s = SessionState::persistent("s9", 3, dir.path()).unwrap();
        s.apply(StateEvent::QueryReceived { query: "q".into() }).unwrap();
        s.apply(StateEvent::ResourceLoaded { name: "inspection-csv".into(), handle: h }).unwrap();
        s.cache_artifact(Actor::Analysis, "t:1".into(), "call-1".into(), &serde_json::json!({"x": 1.5}))
            .unwrap();
        s.apply(StateEvent::AgentInvoked { agent: AgentId::Kg, instruction: "why".into() }).unwrap();
        s.apply(StateEvent::CriticDecided {
            decision: CriticDecision::Accept,
            failed_checks: vec![],
            score: 1.0,
        })
        .unwrap();
        s.apply(StateEvent::HumanApproved {
            approval: ApprovalKind::Approve,
            turn: Some(1),
            note: "ok".into(),
            retained_verdict: Some(CriticDecision::Accept),
        })
        .unwrap();
        s.apply(StateEvent::Reset).unwrap();

        let trail = AuditTrail::read_file(dir.path().join("audit.ndjson")).unwrap();
        assert_eq!(&trail, s.audit());
        let store = PayloadStore::directory(dir.path().join("payloads")).unwrap();
        let r = SessionState::replay("s9", 3, &trail, &store).unwrap();
        assert_eq!(r.digest(), s.digest());
    }

    #[test]
    fn kind_inference() {
        assert_eq!(ResourceKind::infer("./Inspection_Aggregated.csv"), ResourceKind::InspectionCsv);
        assert_eq!(ResourceKind::infer("virtual_pathing.csv"), ResourceKind::PathingField);
        assert_eq!(ResourceKind::infer("deflection_field.csv"), ResourceKind::DeflectionField);
        assert_eq!(ResourceKind::infer("blade.png"), ResourceKind::Image);
        assert_eq!(ResourceKind::infer("kg/triples.jsonl"), ResourceKind::KgStore);
    }

    #[test]
    fn artifact_keys_ignore_argument_order() {
        let a = serde_json::json!({"parts": "4-16", "pair": "2+17"});
        let b: Value = serde_json::from_str(r#"{"pair":"2+17","parts":"4-16"}"#).unwrap();
        assert_eq!(artifact_key("rb_compute_average", &a), artifact_key("rb_compute_average", &b));
        assert_ne!(artifact_key("rb_compute_average", &a), artifact_key("rb_compute_std_dev", &a));
    }
}
