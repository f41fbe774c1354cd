use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use cnc_advisor::service::write_fixture;
use cnc_advisor_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut std::ffi::c_char) -> serde_json::Value {
    let v = serde_json::from_str(CStr::from_ptr(p).to_str().unwrap()).unwrap();
    cnc_string_free(p);
    v
}

#[test]
fn session_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let paths = write_fixture(dir.path()).unwrap();
    let cfg = c(&format!("[engine]\ndata_dir = {:?}\n", dir.path().display().to_string()));
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(cnc_session_new(cfg.as_ptr(), &mut s), CncStatus::Ok);
        assert_eq!(cnc_session_decide(s, 0, ptr::null()), CncStatus::NoTurn);
        for p in &paths {
            assert_eq!(cnc_session_load(s, c(&p.display().to_string()).as_ptr()), CncStatus::Ok);
        }
        let mut out = ptr::null_mut();
        let q = c("compensation for parts 4 to 16");
        assert_eq!(cnc_session_turn(s, q.as_ptr(), &mut out), CncStatus::Ok);
        let v = take(out);
        assert_eq!(v["status"], "accepted");
        assert_eq!(v["recommendation"]["table"].as_str().unwrap().lines().count(), 17);

        assert_eq!(cnc_session_decide(s, 9, ptr::null()), CncStatus::InvalidArgument);
        assert!(!cnc_session_last_error(s).is_null());
        assert_eq!(cnc_session_decide(s, 0, c("fine").as_ptr()), CncStatus::Ok);
        assert_eq!(cnc_session_decide(s, 2, ptr::null()), CncStatus::NoTurn);

        let mut audit = ptr::null_mut();
        assert_eq!(cnc_session_audit(s, &mut audit), CncStatus::Ok);
        let text = CStr::from_ptr(audit).to_str().unwrap().to_string();
        cnc_string_free(audit);
        assert_eq!(text.lines().count(), cnc_session_audit_len(s));
        assert!(text.lines().last().unwrap().contains("\"human\""));
        cnc_session_free(s);
    }
}

#[test]
fn escalated_turn_needs_override() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(cnc_session_new(ptr::null(), &mut s), CncStatus::Ok);
        let mut out = ptr::null_mut();
        assert_eq!(cnc_session_turn(s, c("compensation for parts 4 to 16").as_ptr(), &mut out), CncStatus::Ok);
        assert_eq!(take(out)["status"], "escalated");
        assert_eq!(cnc_session_decide(s, 0, ptr::null()), CncStatus::InvalidArgument);
        assert_eq!(cnc_session_decide(s, 1, ptr::null()), CncStatus::Ok);
        cnc_session_free(s);
    }
}

#[test]
fn bad_arguments() {
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(cnc_session_new(c("[nope]\nx = 1\n").as_ptr(), &mut s), CncStatus::Config);
        assert!(s.is_null());
        assert_eq!(cnc_session_new(ptr::null(), ptr::null_mut()), CncStatus::NullArgument);
        assert_eq!(cnc_session_load(ptr::null_mut(), c("x").as_ptr()), CncStatus::NullArgument);
        assert_eq!(cnc_session_audit_len(ptr::null()), 0);
        assert!(cnc_session_last_error(ptr::null()).is_null());
        cnc_session_free(ptr::null_mut());
        cnc_string_free(ptr::null_mut());

        assert_eq!(cnc_session_new(ptr::null(), &mut s), CncStatus::Ok);
        let bad = [0xffu8, 0xfe, 0];
        let mut out = ptr::null_mut();
        assert_eq!(cnc_session_turn(s, bad.as_ptr().cast(), &mut out), CncStatus::InvalidUtf8);
        assert!(out.is_null());
        assert_eq!(cnc_session_turn(s, c("x").as_ptr(), ptr::null_mut()), CncStatus::NullArgument);
        cnc_session_free(s);

        let (mut tl, mut tr) = (0.0, 0.0);
        assert_eq!(cnc_pair_tool_comp(0, 0.01, 25.0, &mut tl, &mut tr), CncStatus::InvalidArgument);
        assert_eq!(cnc_pair_tool_comp(3, 0.01, 25.0, ptr::null_mut(), &mut tr), CncStatus::NullArgument);
        assert_eq!(cnc_pair_tool_comp(3, 0.01, 25.0, &mut tl, &mut tr), CncStatus::Ok);
        let th = 25f64.to_radians();
        assert!((tl - 0.01 * th.cos()).abs() < 1e-15 && (tr - 0.01 * th.sin()).abs() < 1e-15);
    }
}

/// Compile a C program against the generated header and link the shared
/// library. Skipped when no C compiler is on PATH.
#[test]
fn c_program_links() {
    let crate_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler; skipping");
        return;
    };
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().unwrap().parent().unwrap();
    let so = lib_dir.join("libcnc_advisor_ffi.so");
    if !so.exists() {
        eprintln!("{} not built; skipping", so.display());
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let bin = tmp.path().join("smoke");
    let st = Command::new(&cc)
        .arg(crate_dir.join("tests/c_smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg("-L")
        .arg(lib_dir)
        .arg("-lcnc_advisor_ffi")
        .arg(format!("-Wl,-rpath,{}", lib_dir.display()))
        .arg("-Wall")
        .arg("-Werror")
        .arg("-o")
        .arg(&bin)
        .status()
        .unwrap();
    assert!(st.success(), "C compile failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
