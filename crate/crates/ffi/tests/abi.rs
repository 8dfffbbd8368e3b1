use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use regime_kernel_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = rk_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn scenario_path(name: &str) -> CString {
    let p = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(name);
    c(p.to_str().unwrap())
}

unsafe fn take_string(p: *mut c_char) -> String {
    let s = CStr::from_ptr(p).to_string_lossy().into_owned();
    rk_string_free(p);
    s
}

#[test]
fn witness_scenario_runs_to_completion() {
    unsafe {
        let mut scenario = ptr::null_mut();
        assert_eq!(
            rk_scenario_load(scenario_path("witness.toml").as_ptr(), &mut scenario),
            RkStatus::Ok
        );
        let mut report = ptr::null_mut();
        assert_eq!(rk_run(scenario, &mut report), RkStatus::Ok);

        let (mut verdict, mut step) = (RkVerdict::Terminated, 0usize);
        assert_eq!(rk_report_verdict(report, &mut verdict, &mut step), RkStatus::Ok);
        assert_eq!((verdict, step), (RkVerdict::Completed, 40));
        let mut len = 0usize;
        assert_eq!(rk_report_len(report, &mut len), RkStatus::Ok);
        assert_eq!(len, 41);
        let mut w = 0.0;
        assert_eq!(rk_report_w(report, 0, &mut w), RkStatus::Ok);
        assert_eq!(w, 5.0);
        assert_eq!(rk_report_w(report, 41, &mut w), RkStatus::InvalidArgument);

        let mut json = ptr::null_mut();
        assert_eq!(rk_report_serialize(report, false, &mut json), RkStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        assert_eq!(v["verdict"]["status"], "COMPLETED");
        let mut csv = ptr::null_mut();
        assert_eq!(rk_report_serialize(report, true, &mut csv), RkStatus::Ok);
        assert_eq!(take_string(csv).lines().count(), 42);

        rk_report_free(report);
        rk_scenario_free(scenario);
    }
}

#[test]
fn terminated_run_reports_its_step() {
    unsafe {
        let mut scenario = ptr::null_mut();
        assert_eq!(
            rk_scenario_load(scenario_path("retention.toml").as_ptr(), &mut scenario),
            RkStatus::Ok
        );
        let mut report = ptr::null_mut();
        assert_eq!(rk_run(scenario, &mut report), RkStatus::Ok);
        let (mut verdict, mut step) = (RkVerdict::Completed, 0usize);
        assert_eq!(rk_report_verdict(report, &mut verdict, &mut step), RkStatus::Ok);
        assert_eq!((verdict, step), (RkVerdict::Terminated, 1));
        rk_report_free(report);
        rk_scenario_free(scenario);
    }
}

#[test]
fn invalid_inputs_map_to_status_codes() {
    unsafe {
        let mut scenario = ptr::null_mut();
        let rewriting = scenario_path("evaluator_rewriting.toml");
        assert_eq!(
            rk_scenario_load(rewriting.as_ptr(), &mut scenario),
            RkStatus::InvalidScenario
        );
        assert!(last_error().contains("protected core"));
        assert!(scenario.is_null());

        assert_eq!(rk_scenario_parse(ptr::null(), &mut scenario), RkStatus::NullPointer);
        assert_eq!(
            rk_scenario_load(c("/nonexistent.toml").as_ptr(), &mut scenario),
            RkStatus::Io
        );
        let bad_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(
            rk_scenario_parse(bad_utf8.as_ptr().cast(), &mut scenario),
            RkStatus::InvalidUtf8
        );
        assert_eq!(rk_run(ptr::null(), ptr::null_mut()), RkStatus::NullPointer);

        let mut theory = ptr::null_mut();
        assert_eq!(rk_theory_parse(c("p q").as_ptr(), &mut theory), RkStatus::ParseError);
        assert!(last_error().contains("line 1"));
    }
}

#[test]
fn entailment_through_handles() {
    unsafe {
        let mut theory = ptr::null_mut();
        assert_eq!(
            rk_theory_parse(c("-> p\np -> q\nq r -> s\n").as_ptr(), &mut theory),
            RkStatus::Ok
        );
        let mut yes = false;
        assert_eq!(rk_theory_entails(theory, c("p q").as_ptr(), &mut yes), RkStatus::Ok);
        assert!(yes);
        assert_eq!(rk_theory_entails(theory, c("s").as_ptr(), &mut yes), RkStatus::Ok);
        assert!(!yes);
        rk_theory_free(theory);
    }
}

#[test]
fn numeric_entry_points() {
    unsafe {
        let mut out = 0.0;
        let costs = [0.1, 0.1];
        assert_eq!(
            rk_theorem_bound(0.5, 0.0, 1.0, 1.0, costs.as_ptr(), 2, &mut out),
            RkStatus::Ok
        );
        assert!((out - (0.25 + 0.05 + 0.1)).abs() < 1e-12);
        assert_eq!(
            rk_theorem_bound(0.5, 0.0, 1.0, 3.0, ptr::null(), 0, &mut out),
            RkStatus::Ok
        );
        assert_eq!(out, 3.0);
        assert_eq!(
            rk_theorem_bound(0.0, 0.0, 1.0, 1.0, ptr::null(), 0, &mut out),
            RkStatus::InvalidArgument
        );

        let (mut product, mut union) = (0.0, 0.0);
        let deltas = [0.1, 0.2];
        assert_eq!(
            rk_pac_chain_bound(deltas.as_ptr(), 2, &mut product, &mut union),
            RkStatus::Ok
        );
        assert!((product - 0.72).abs() < 1e-12 && (union - 0.7).abs() < 1e-12);
        let bad = [1.5];
        assert_eq!(
            rk_pac_chain_bound(bad.as_ptr(), 1, &mut product, &mut union),
            RkStatus::InvalidArgument
        );

        assert_eq!(rk_covering_bound(2, 1.0, 0.5, 1.0, 0.0, &mut out), RkStatus::Ok);
        assert!((out - 2.0 * 5f64.ln()).abs() < 1e-12);
        assert_eq!(
            rk_covering_bound(2, 1.0, 2.0, 1.0, 0.0, &mut out),
            RkStatus::InvalidArgument
        );

        let (a, b) = ([0.0, 0.0], [1.0, 1.0]);
        assert_eq!(
            rk_transport_overhead(0.5, a.as_ptr(), b.as_ptr(), 2, &mut out),
            RkStatus::Ok
        );
        assert!((out - 6.0).abs() < 1e-12);
        assert_eq!(rk_default_epsilon(0.5, &mut out), RkStatus::Ok);
        assert_eq!(out, 0.5);
        assert_eq!(rk_default_epsilon(1.0, &mut out), RkStatus::Ok);
        assert_eq!(out, 1.0);
        assert_eq!(rk_default_epsilon(1.5, ptr::null_mut()), RkStatus::InvalidArgument);
        assert_eq!(rk_default_epsilon(0.5, ptr::null_mut()), RkStatus::NullPointer);
    }
}

#[test]
fn errors_are_thread_local() {
    let mut out = 0.0;
    assert_eq!(unsafe { rk_default_epsilon(2.0, &mut out) }, RkStatus::InvalidArgument);
    let here = last_error();
    std::thread::spawn(|| assert!(rk_last_error().is_null()))
        .join()
        .unwrap();
    assert_eq!(last_error(), here);
}

#[test]
fn header_compiles_as_c() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = dir.join("include/regime_kernel.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "rk_scenario_parse",
        "rk_run",
        "rk_report_serialize",
        "rk_theory_entails",
        "RK_STATUS_OK",
    ] {
        assert!(text.contains(name), "{name} missing from the header");
    }
    let probe = tempfile_path("probe.c");
    std::fs::write(
        &probe,
        "#include \"regime_kernel.h\"\nint main(void) { RkScenario *s = 0; return rk_scenario_parse(\"\", &s) == RK_STATUS_OK; }\n",
    )
    .unwrap();
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(dir.join("include"))
        .arg(&probe)
        .status()
    else {
        eprintln!("no C compiler found; header syntax not checked");
        return;
    };
    assert!(status.success());
}

fn tempfile_path(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("regime-kernel-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}
