use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use ilbench_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(ilb_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn cliff_expert_return_through_handles() {
    let preset = CString::new("theorem").unwrap();
    let mut mdp = ptr::null_mut();
    let mut expert = ptr::null_mut();
    let mut j = 0.0;
    let mut dims = (0usize, 0usize, 0usize);
    unsafe {
        assert_eq!(ilb_mdp_cliff(preset.as_ptr(), &mut mdp), IlbStatus::Ok);
        assert_eq!(ilb_mdp_dims(mdp, &mut dims.0, &mut dims.1, &mut dims.2), IlbStatus::Ok);
        assert_eq!(ilb_mdp_expert(mdp, &mut expert), IlbStatus::Ok);
        assert_eq!(ilb_exact_return(mdp, expert, &mut j), IlbStatus::Ok);
        ilb_policy_free(expert);
        ilb_mdp_free(mdp);
    }
    assert_eq!(dims, (505, 500, 50));
    assert!((j - 50.0).abs() < 1e-9);
}

#[test]
fn errors_map_to_codes_and_messages() {
    let mut mdp = ptr::null_mut();
    let bad = CString::new("nope").unwrap();
    unsafe {
        assert_eq!(ilb_mdp_cliff(bad.as_ptr(), &mut mdp), IlbStatus::Config);
        assert!(mdp.is_null());
        assert!(last_error().contains("unknown cliff preset"));
        assert_eq!(ilb_mdp_cliff(ptr::null(), &mut mdp), IlbStatus::NullPointer);
        let json = CString::new("{not json").unwrap();
        assert_eq!(ilb_mdp_from_json(json.as_ptr(), &mut mdp), IlbStatus::Json);
        let mut j = 0.0;
        assert_eq!(ilb_exact_return(ptr::null(), ptr::null(), &mut j), IlbStatus::NullPointer);
        ilb_mdp_free(ptr::null_mut());
        ilb_string_free(ptr::null_mut());
    }
}

#[test]
fn json_mdp_and_policy_round_trip() {
    let mdp_json = CString::new(
        r#"{"mdp": {"S": 2, "A": 2, "H": 2, "rho": [1, 0], "homogeneous": true,
            "P": [[[0, 1], [1, 0]], [[0, 1], [0, 1]]], "R": [[0, 1], [1, 0]], "R_max": 2},
            "expert": {"kind": "deterministic", "num_states": 2, "num_actions": 2, "actions": [1, 0]}}"#,
    )
    .unwrap();
    let uniform = CString::new(
        r#"{"kind": "stochastic", "num_states": 2, "num_actions": 2, "probs": [[0.5, 0.5], [0.5, 0.5]]}"#,
    )
    .unwrap();
    let (mut mdp, mut expert, mut pi) = (ptr::null_mut(), ptr::null_mut(), ptr::null_mut());
    let (mut je, mut ju) = (0.0, 0.0);
    unsafe {
        assert_eq!(ilb_mdp_from_json(mdp_json.as_ptr(), &mut mdp), IlbStatus::Ok, "{}", last_error());
        assert_eq!(ilb_mdp_expert(mdp, &mut expert), IlbStatus::Ok);
        assert_eq!(ilb_policy_from_json(uniform.as_ptr(), &mut pi), IlbStatus::Ok, "{}", last_error());
        assert_eq!(ilb_exact_return(mdp, expert, &mut je), IlbStatus::Ok);
        assert_eq!(ilb_exact_return(mdp, pi, &mut ju), IlbStatus::Ok);
        ilb_policy_free(pi);
        ilb_policy_free(expert);
        ilb_mdp_free(mdp);
    }
    // Expert: s0 -a1-> reward 1, moves to s0 (P[0][1] = [1, 0]), then 1 again.
    assert!((je - 2.0).abs() < 1e-12);
    // Uniform: step 0 earns 0.5, then s0 or s1 with prob 0.5 each, earning 0.5 either way.
    assert!((ju - 1.0).abs() < 1e-12);
}

#[test]
fn experiment_csv_is_thread_count_independent() {
    let cfg = CString::new(
        r#"{"env": {"kind": "cliff", "N0": 4, "N1": 8, "H": 10, "A": 3, "beta": 0.2},
            "algorithms": [{"name": "BC", "algorithm": "bc"}, {"name": "WS(10)", "algorithm": "warm_stagger", "offline_pairs": 10}],
            "num_runs": 5, "eval_every_cost": 5, "total_cost": 40, "equal_cost": true, "learner": "memorizing"}"#,
    )
    .unwrap();
    let run = |threads| unsafe {
        let mut exp = ptr::null_mut();
        assert_eq!(ilb_experiment_run(cfg.as_ptr(), threads, &mut exp), IlbStatus::Ok, "{}", last_error());
        let csv = ilb_experiment_results_csv(exp);
        let text = CStr::from_ptr(csv).to_string_lossy().into_owned();
        ilb_string_free(csv);
        let ledger = ilb_experiment_ledger_csv(exp);
        assert!(CStr::from_ptr(ledger).to_bytes().starts_with(b"algorithm,run_group,cost,cost_offline"));
        ilb_string_free(ledger);
        let dir = tempfile::tempdir().unwrap();
        let d = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(ilb_experiment_write(exp, d.as_ptr()), IlbStatus::Ok);
        assert_eq!(std::fs::read_to_string(dir.path().join("results.csv")).unwrap(), text);
        ilb_experiment_free(exp);
        text
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn experiment_validation_failure_is_reported() {
    let cfg = CString::new(
        r#"{"env": {"kind": "cliff"}, "algorithms": [{"name": "S", "algorithm": "stagger"}],
            "num_runs": 1, "learner": "exp_weights"}"#,
    )
    .unwrap();
    let mut exp = ptr::null_mut();
    let status = unsafe { ilb_experiment_run(cfg.as_ptr(), 1, &mut exp) };
    assert_ne!(status, IlbStatus::Ok);
    assert!(exp.is_null());
    assert!(!last_error().is_empty());
}

/// Compiles a small C program against the generated header and static library.
#[test]
fn c_program_links_against_the_header() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header_dir = manifest.join("include");
    let exe = std::env::current_exe().unwrap();
    let lib_dir = exe.parent().and_then(|d| d.parent()).unwrap();
    let lib = lib_dir.join("libilbench_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "ilbench.h"
int main(void) {
    IlbMdp *mdp = NULL;
    IlbPolicy *expert = NULL;
    double j = 0.0;
    if (ilb_mdp_cliff("theorem", &mdp) != ILB_STATUS_OK) return 1;
    if (ilb_mdp_expert(mdp, &expert) != ILB_STATUS_OK) return 2;
    if (ilb_exact_return(mdp, expert, &j) != ILB_STATUS_OK) return 3;
    if (ilb_mdp_cliff("bogus", &mdp) != ILB_STATUS_CONFIG) return 4;
    printf("%.6f %s\n", j, ilb_version());
    ilb_policy_free(expert);
    ilb_mdp_free(mdp);
    return 0;
}
"#,
    )
    .unwrap();
    let bin = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("50.000000 "));
}
