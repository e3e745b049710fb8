use std::ffi::{CStr, CString};
use std::ptr;

use posn_ffi::*;

fn last_error() -> String {
    let p = posn_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn run_round_trip_through_handles() {
    let toml = CString::new("duration_s = 2.0\n[config]\nn_validators = 4\nf_max = 1\n").unwrap();
    let mut cfg = ptr::null_mut();
    unsafe {
        assert_eq!(posn_config_from_toml(toml.as_ptr(), &mut cfg), PosnStatus::Ok);
        assert_eq!(posn_config_set_seed(cfg, 3), PosnStatus::Ok);
        assert_eq!(posn_config_set_protocol(cfg, PosnProtocol::Por), PosnStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(posn_run(cfg, &mut run), PosnStatus::Ok);
        assert_eq!(posn_run_violation_count(run), 0);
        // 2 s of 250 ms PoR slots, empty blocks included.
        assert_eq!(posn_run_finalized_slots(run), 8);

        let mut json = ptr::null_mut();
        assert_eq!(posn_run_summary_json(run, &mut json), PosnStatus::Ok);
        let text = CStr::from_ptr(json).to_str().unwrap().to_owned();
        posn_string_free(json);
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["protocol"], "por");
        assert_eq!(v["seed"], 3);
        assert_eq!(v["finalized_slots"], 8);

        let dir = tempfile::tempdir().unwrap();
        let cdir = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(posn_run_export(run, cdir.as_ptr()), PosnStatus::Ok);
        for f in ["summary.json", "slots.csv", "txs.csv", "decisions.jsonl"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }

        posn_run_free(run);
        posn_config_free(cfg);
    }
}

#[test]
fn errors_are_reported_with_messages() {
    let mut cfg = ptr::null_mut();
    unsafe {
        let bad = CString::new("[config]\nbogus = 1\n").unwrap();
        assert_eq!(posn_config_from_toml(bad.as_ptr(), &mut cfg), PosnStatus::ParseError);
        assert!(last_error().contains("bogus"));
        assert!(cfg.is_null());

        assert_eq!(posn_config_from_toml(ptr::null(), &mut cfg), PosnStatus::NullArgument);
        assert_eq!(posn_config_default(ptr::null_mut()), PosnStatus::NullArgument);

        let invalid = CString::new("[config]\nn_validators = 3\nf_max = 1\n").unwrap();
        assert_eq!(posn_config_from_toml(invalid.as_ptr(), &mut cfg), PosnStatus::Ok);
        let mut run = ptr::null_mut();
        assert_eq!(posn_run(cfg, &mut run), PosnStatus::InvalidScenario);
        assert!(last_error().contains("f_max"), "{}", last_error());
        assert!(run.is_null());
        posn_config_free(cfg);

        assert_eq!(posn_run_violation_count(ptr::null()), u64::MAX);
        posn_run_free(ptr::null_mut());
        posn_string_free(ptr::null_mut());
    }
    // A success clears the message.
    let mut out = 0.0;
    assert_eq!(unsafe { posn_leader_entropy([1u64, 1].as_ptr(), 2, &mut out) }, PosnStatus::Ok);
    assert!(posn_last_error_message().is_null());
}

#[test]
fn scalar_helpers() {
    assert_eq!(posn_quorum_threshold(4), 3);
    assert_eq!(posn_quorum_threshold(7), 5);
    assert_eq!(posn_quorum_threshold(1), 1);

    let mut h = 0.0;
    unsafe {
        assert_eq!(posn_leader_entropy([3u64, 1].as_ptr(), 2, &mut h), PosnStatus::Ok);
        assert!((h - 0.811_278).abs() < 1e-6);
        assert_eq!(posn_leader_entropy(ptr::null(), 0, &mut h), PosnStatus::Ok);
        assert_eq!(h, 0.0);
        assert_eq!(posn_leader_entropy(ptr::null(), 3, &mut h), PosnStatus::NullArgument);

        let (mut v, mut spiked) = (0.5, false);
        assert_eq!(posn_lif_step(&mut v, 0.0, 0.1, 1.0, 1.0, 0.0, &mut spiked), PosnStatus::Ok);
        assert!((v - 0.5 * (-0.1f64).exp()).abs() < 1e-15 && !spiked);
        assert_eq!(posn_lif_step(&mut v, 1.0, 0.1, 1.0, 1.0, 0.0, &mut spiked), PosnStatus::Ok);
        assert!(spiked && v == 0.0);
        assert_eq!(posn_lif_step(&mut v, 0.0, 0.1, 0.0, 1.0, 0.0, &mut spiked), PosnStatus::InvalidArgument);
    }
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/posn.h")).unwrap();
    for f in [
        "posn_config_default",
        "posn_config_from_toml",
        "posn_run(",
        "posn_run_summary_json",
        "posn_run_free",
        "posn_string_free",
        "posn_quorum_threshold",
        "posn_leader_entropy",
        "posn_lif_step",
        "posn_last_error_message",
        "typedef struct PosnRun PosnRun;",
        "POSN_STATUS_OK = 0",
    ] {
        assert!(h.contains(f), "missing {f}");
    }
}
