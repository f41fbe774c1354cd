//! Line-oriented operator loop.

use std::io::{BufRead, Write};

use crate::engine::{render_outcome, Engine, TurnOutcome, TurnStatus};
use crate::session::{ApprovalKind, SessionState};

pub const PROMPT: &str = "Central Agent --- What would you like to do?";

/// Read lines until EOF or `exit`. Besides queries and `load <path>`,
/// `approve [note]`, `override [note]` and `reject [note]` record a human
/// decision on the last turn.
pub fn run(engine: &Engine, state: &mut SessionState, input: impl BufRead, mut out: impl Write) -> std::io::Result<()> {
    let mut last: Option<(u64, TurnOutcome)> = None;
    let mut turns = 0u64;
    writeln!(out, "{PROMPT}")?;
    for line in input.lines() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                writeln!(out, "input error: {e}")?;
                continue;
            }
        };
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if matches!(text, "exit" | "quit") {
            break;
        }
        let (cmd, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let approval = match cmd {
            "approve" => Some(ApprovalKind::Approve),
            "override" => Some(ApprovalKind::Override),
            "reject" => Some(ApprovalKind::Reject),
            _ => None,
        };
        if let Some(kind) = approval {
            match last.take() {
                None => writeln!(out, "no turn to decide on")?,
                Some((_, o)) if kind == ApprovalKind::Approve && o.status == TurnStatus::Escalated => {
                    writeln!(out, "turn was escalated; use override")?;
                    last = Some((turns - 1, o));
                }
                Some((t, o)) => {
                    let retained = o.verdict.as_ref().map(|v| v.decision);
                    match engine.approve(state, kind, Some(t), rest.trim(), retained) {
                        Ok(()) => writeln!(out, "recorded {kind:?} for turn {t}")?,
                        Err(e) => writeln!(out, "error: {e}")?,
                    }
                }
            }
        } else {
            match engine.run_turn(state, text) {
                Ok(o) => {
                    write!(out, "{}", render_outcome(&o))?;
                    last = Some((turns, o));
                    turns += 1;
                }
                Err(e) => writeln!(out, "error: {e}")?,
            }
        }
        writeln!(out, "{PROMPT}")?;
        out.flush()?;
    }
    writeln!(out, "Audit trail: {} event(s).", state.audit().len())?;
    out.flush()
}
