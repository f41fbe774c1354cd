//! C interface. A `CncSession` owns an engine and one session state. Every
//! call returns a `CncStatus`; on failure the message is available from
//! `cnc_session_last_error` until the next call on the same handle.
//! Strings returned through out-parameters are freed with `cnc_string_free`.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cnc_advisor::blade::compensation::rb_compute_pair_tool_comp;
use cnc_advisor::blade::PairKey;
use cnc_advisor::engine::{Engine, TurnOutcome, TurnStatus};
use cnc_advisor::service::api::turn_json;
use cnc_advisor::service::AppConfig;
use cnc_advisor::session::{ApprovalKind, SessionState};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CncStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Load = 4,
    Turn = 5,
    InvalidArgument = 6,
    NoTurn = 7,
    Panic = 8,
}

/// Opaque to C.
pub struct CncSession {
    engine: Engine,
    state: SessionState,
    last: Option<TurnOutcome>,
    turns: usize,
    decided: bool,
    error: Option<CString>,
}

impl CncSession {
    fn fail(&mut self, status: CncStatus, msg: impl ToString) -> CncStatus {
        self.error = CString::new(msg.to_string().replace('\0', " ")).ok();
        status
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, CncStatus> {
    if p.is_null() {
        return Err(CncStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| CncStatus::InvalidUtf8)
}

fn guarded(f: impl FnOnce() -> CncStatus) -> CncStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(CncStatus::Panic)
}

fn give_string(s: String, out: *mut *mut c_char) {
    let c = CString::new(s.replace('\0', " ")).expect("nul bytes replaced");
    unsafe { *out = c.into_raw() };
}

/// Create a session. `config_toml` may be NULL for defaults.
///
/// # Safety
/// `config_toml` is NULL or a valid C string; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cnc_session_new(config_toml: *const c_char, out: *mut *mut CncSession) -> CncStatus {
    guarded(|| {
        if out.is_null() {
            return CncStatus::NullArgument;
        }
        *out = ptr::null_mut();
        let cfg = if config_toml.is_null() {
            AppConfig::default()
        } else {
            match text(config_toml).map(AppConfig::from_toml) {
                Err(s) => return s,
                Ok(Err(_)) => return CncStatus::Config,
                Ok(Ok(c)) => c,
            }
        };
        let Ok(engine) = cfg.engine(None) else { return CncStatus::Config };
        let state = SessionState::new("ffi", engine.config.critic.budget);
        *out = Box::into_raw(Box::new(CncSession { engine, state, last: None, turns: 0, decided: false, error: None }));
        CncStatus::Ok
    })
}

/// # Safety
/// `session` is NULL or a handle from `cnc_session_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cnc_session_free(session: *mut CncSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Load a data file (inspection CSV, pathing CSV) or a knowledge store.
///
/// # Safety
/// `session` is a live handle; `path` is a valid C string.
#[no_mangle]
pub unsafe extern "C" fn cnc_session_load(session: *mut CncSession, path: *const c_char) -> CncStatus {
    guarded(|| {
        let Some(s) = session.as_mut() else { return CncStatus::NullArgument };
        let path = match text(path) {
            Ok(p) => p,
            Err(e) => return s.fail(e, "path is not a valid string"),
        };
        match s.engine.load_resource(&mut s.state, path, None, None) {
            Ok(_) => CncStatus::Ok,
            Err(e) => s.fail(CncStatus::Load, e),
        }
    })
}

/// Run one query. On success `*out_json` holds the structured turn response.
///
/// # Safety
/// `session` is a live handle; `query` is a valid C string; `out_json` is a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cnc_session_turn(session: *mut CncSession, query: *const c_char, out_json: *mut *mut c_char) -> CncStatus {
    guarded(|| {
        let Some(s) = session.as_mut() else { return CncStatus::NullArgument };
        if out_json.is_null() {
            return s.fail(CncStatus::NullArgument, "out_json is NULL");
        }
        *out_json = ptr::null_mut();
        let q = match text(query) {
            Ok(q) => q,
            Err(e) => return s.fail(e, "query is not a valid string"),
        };
        match s.engine.run_turn(&mut s.state, q) {
            Ok(out) => {
                give_string(turn_json(s.state.session_id(), s.turns, &out).to_string(), out_json);
                s.turns += 1;
                s.last = Some(out);
                s.decided = false;
                CncStatus::Ok
            }
            Err(e) => s.fail(CncStatus::Turn, e),
        }
    })
}

/// Record a human decision on the latest turn. `decision` is 0 approve,
/// 1 override, 2 reject. `note` may be NULL.
///
/// # Safety
/// `session` is a live handle; `note` is NULL or a valid C string.
#[no_mangle]
pub unsafe extern "C" fn cnc_session_decide(session: *mut CncSession, decision: u32, note: *const c_char) -> CncStatus {
    guarded(|| {
        let Some(s) = session.as_mut() else { return CncStatus::NullArgument };
        let kind = match decision {
            0 => ApprovalKind::Approve,
            1 => ApprovalKind::Override,
            2 => ApprovalKind::Reject,
            d => return s.fail(CncStatus::InvalidArgument, format!("unknown decision {d}")),
        };
        let note = if note.is_null() {
            ""
        } else {
            match text(note) {
                Ok(n) => n,
                Err(e) => return s.fail(e, "note is not a valid string"),
            }
        };
        let Some(last) = &s.last else { return s.fail(CncStatus::NoTurn, "no turn to decide on") };
        if s.decided {
            return s.fail(CncStatus::NoTurn, "latest turn already decided");
        }
        if kind == ApprovalKind::Approve && !matches!(last.status, TurnStatus::Accepted | TurnStatus::Unverified) {
            return s.fail(CncStatus::InvalidArgument, "turn was escalated; use override");
        }
        let retained = last.verdict.as_ref().map(|v| v.decision);
        let turn = Some(s.turns as u64 - 1);
        match s.engine.approve(&mut s.state, kind, turn, note, retained) {
            Ok(()) => {
                s.decided = true;
                CncStatus::Ok
            }
            Err(e) => s.fail(CncStatus::Turn, e),
        }
    })
}

/// Number of audit events recorded so far, or 0 for a NULL handle.
///
/// # Safety
/// `session` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cnc_session_audit_len(session: *const CncSession) -> usize {
    session.as_ref().map_or(0, |s| s.state.audit().len())
}

/// The audit trail as newline-delimited JSON.
///
/// # Safety
/// `session` is a live handle; `out` is a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cnc_session_audit(session: *const CncSession, out: *mut *mut c_char) -> CncStatus {
    guarded(|| {
        let Some(s) = session.as_ref() else { return CncStatus::NullArgument };
        if out.is_null() {
            return CncStatus::NullArgument;
        }
        give_string(s.state.audit().to_ndjson(), out);
        CncStatus::Ok
    })
}

/// Message for the last failed call on this handle, or NULL. Owned by the
/// handle.
///
/// # Safety
/// `session` is NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cnc_session_last_error(session: *const CncSession) -> *const c_char {
    session.as_ref().and_then(|s| s.error.as_ref()).map_or(ptr::null(), |e| e.as_ptr())
}

/// # Safety
/// `s` is NULL or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cnc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Tool-frame compensation for a pair deviation `delta` (mm) at tilt
/// `theta_deg`: length along the axis, radius across it.
///
/// # Safety
/// `out_length` and `out_radius` are valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cnc_pair_tool_comp(
    pair_index: u32,
    delta: f64,
    theta_deg: f64,
    out_length: *mut f64,
    out_radius: *mut f64,
) -> CncStatus {
    guarded(|| {
        if out_length.is_null() || out_radius.is_null() {
            return CncStatus::NullArgument;
        }
        if pair_index == 0 {
            return CncStatus::InvalidArgument;
        }
        let key = PairKey::new(pair_index);
        match rb_compute_pair_tool_comp(key, delta, theta_deg) {
            Ok(v) => {
                *out_length = v.t_l;
                *out_radius = v.t_r;
                CncStatus::Ok
            }
            Err(_) => CncStatus::InvalidArgument,
        }
    })
}
