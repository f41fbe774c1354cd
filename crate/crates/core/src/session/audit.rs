//! Append-only audit trail, one JSON object per line:
//! `{"ts": ..., "actor": ..., "kind": ..., "digest": ...}`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::state::Actor;
use super::SessionError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub ts: String,
    pub actor: Actor,
    pub kind: String,
    pub digest: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditTrail {
    events: Vec<AuditEvent>,
}

impl AuditTrail {
    pub(crate) fn push(&mut self, event: AuditEvent) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn last(&self) -> Option<&AuditEvent> {
        self.events.last()
    }

    pub fn page(&self, offset: usize, limit: usize) -> &[AuditEvent] {
        let start = offset.min(self.events.len());
        let end = start.saturating_add(limit).min(self.events.len());
        &self.events[start..end]
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("audit events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Self, SessionError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e: AuditEvent = serde_json::from_str(line)
                .map_err(|err| SessionError::AuditFormat(format!("line {}: {err}", i + 1)))?;
            events.push(e);
        }
        Ok(Self { events })
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        Self::from_ndjson(&std::fs::read_to_string(path)?)
    }

    pub(crate) fn append_to_file(path: &Path, event: &AuditEvent) -> Result<(), SessionError> {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        let mut line = serde_json::to_vec(event).expect("audit events serialize");
        line.push(b'\n');
        f.write_all(&line)?;
        f.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(i: usize) -> AuditEvent {
        AuditEvent {
            ts: format!("2026-01-01T00:00:{i:02}Z"),
            actor: Actor::Central,
            kind: "agent-invoked".into(),
            digest: format!("{i:064x}"),
        }
    }

    #[test]
    fn ndjson_round_trip() {
        let mut t = AuditTrail::default();
        for i in 0..4 {
            t.push(ev(i));
        }
        let text = t.to_ndjson();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().next().unwrap().starts_with("{\"ts\":"));
        assert_eq!(AuditTrail::from_ndjson(&text).unwrap(), t);
    }

    #[test]
    fn paging() {
        let mut t = AuditTrail::default();
        for i in 0..5 {
            t.push(ev(i));
        }
        assert_eq!(t.page(3, 10).len(), 2);
        assert_eq!(t.page(10, 1).len(), 0);
    }

    #[test]
    fn bad_line_reports_position() {
        let err = AuditTrail::from_ndjson("{}\n").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }
}
