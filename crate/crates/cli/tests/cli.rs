use std::path::Path;
use std::process::{Command, Output};

use nlqc_cli::config::{schema_errors, REPORT_SCHEMA};
use serde_json::{json, Value};

fn nlqc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlqc"))
        .args(args)
        .current_dir(dir)
        .env_remove(nlqc_cli::OUT_DIR_ENV)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, cfg.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

/// Runs a subcommand with a config, returning the exit code, the report and stderr.
fn run(sub: &str, cfg: &Value, extra: &[&str]) -> (i32, Value, String) {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "cfg.json", cfg);
    let out = dir.path().join("report.json");
    let mut args = vec![sub, "--config", &c, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = nlqc(&args, dir.path());
    let report = std::fs::read_to_string(&out)
        .map(|t| serde_json::from_str(&t).unwrap())
        .unwrap_or(Value::Null);
    (o.status.code().unwrap(), report, String::from_utf8_lossy(&o.stderr).into_owned())
}

fn assert_valid_report(r: &Value) {
    let errors = schema_errors(REPORT_SCHEMA, r);
    assert!(errors.is_empty(), "{errors:?}");
}

#[test]
fn decompose_depth_one_brickwork_verifies() {
    let cfg = json!({
        "subcommand": "decompose",
        "seed": 7,
        "model": { "kind": "brickwork", "n_sites": 8, "depth": 1, "seed": 21 },
        "decompose": { "inputs": 4 }
    });
    let (code, r, err) = run("decompose", &cfg, &[]);
    assert_eq!(code, 0, "{err}");
    assert_valid_report(&r);
    assert_eq!(r["status"], "ok");
    assert!(r["result"]["measured_residual"].as_f64().unwrap() <= 1e-9);
    assert_eq!(r["result"]["manifest"]["order"], json!(["U_N", "U_S", "U_W", "U_E"]));
    assert_eq!(r["seed"], 7);
    assert_eq!(r["config"]["model"]["seed"], 21);
}

#[test]
fn malformed_config_reports_schema_path() {
    let cfg = json!({
        "subcommand": "decompose",
        "model": { "kind": "brickwork", "n_sites": "eight", "depth": 1 }
    });
    let (code, r, err) = run("decompose", &cfg, &[]);
    assert_eq!(code, 1);
    assert!(r.is_null(), "no report on a usage error");
    assert!(err.contains("schema violation at '/model"), "{err}");

    let cfg = json!({ "subcommand": "teleport", "teleport": { "portz": [1] } });
    let (code, _, err) = run("teleport", &cfg, &[]);
    assert_eq!(code, 1);
    assert!(err.contains("'/teleport'"), "{err}");
}

#[test]
fn invalid_json_and_missing_file_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{ not json").unwrap();
    let o = nlqc(&["spread", "--config", p.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = nlqc(&["spread", "--config", "does-not-exist.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn subcommand_must_match_config() {
    let cfg = json!({ "subcommand": "teleport" });
    let (code, _, err) = run("certify", &cfg, &[]);
    assert_eq!(code, 1);
    assert!(err.contains("'teleport'"), "{err}");
}

#[test]
fn unknown_subcommand_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nlqc(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(nlqc(&["spread", "--seed", "minus-one"], dir.path()).status.code(), Some(1));
    assert_eq!(nlqc(&["spread", "--jobs", "0"], dir.path()).status.code(), Some(1));
    assert_eq!(nlqc(&[], dir.path()).status.code(), Some(1));
    assert_eq!(nlqc(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(nlqc(&["--version"], dir.path()).status.code(), Some(0));
}

#[test]
fn protocol_fault_exits_two_with_witness() {
    let cfg = json!({
        "subcommand": "protocol",
        "model": { "kind": "brickwork", "n_sites": 8, "depth": 1 },
        "protocol": { "inputs": 1, "fault": "early_post" }
    });
    let (code, r, err) = run("protocol", &cfg, &[]);
    assert_eq!(code, 2, "{err}");
    assert_valid_report(&r);
    assert_eq!(r["status"], "verification_failure");
    let w = &r["witness"];
    assert!(w["event"].is_u64());
    assert!(!w["witness"].as_str().unwrap().is_empty());
    assert!(err.contains("locality violation"), "{err}");
}

#[test]
fn clean_protocol_matches_pseudo_bulk() {
    let cfg = json!({
        "subcommand": "protocol",
        "model": { "kind": "brickwork", "n_sites": 8, "depth": 1 },
        "protocol": { "inputs": 2 }
    });
    let (code, r, err) = run("protocol", &cfg, &["--seed", "3"]);
    assert_eq!(code, 0, "{err}");
    assert_valid_report(&r);
    assert!(r["result"]["worst"].as_f64().unwrap() <= 1e-9);
    assert_eq!(r["result"]["exchanges"], 1);
}

#[test]
fn holocode_runs_and_catches_faults() {
    let cfg = json!({ "subcommand": "holocode", "holocode": { "blocks": 2, "targets": 2, "target_len": 10 } });
    let (code, r, err) = run("holocode", &cfg, &[]);
    assert_eq!(code, 0, "{err}");
    assert_valid_report(&r);
    assert_eq!(r["result"]["runs"].as_array().unwrap().len(), 2);

    let cfg = json!({ "subcommand": "holocode", "holocode": { "targets": 1, "fault": "overlapping_message" } });
    let (code, r, _) = run("holocode", &cfg, &[]);
    assert_eq!(code, 2);
    assert_valid_report(&r);
    assert!(r["witness"].is_object());
}

#[test]
fn same_config_same_report_modulo_wall_time() {
    let cfg = json!({ "subcommand": "teleport", "seed": 11, "teleport": { "ports": [1, 2], "cascade_ports": [1, 2] } });
    let strip = |mut r: Value| {
        r.as_object_mut().unwrap().remove("wall_time_s");
        serde_json::to_string(&r).unwrap()
    };
    let (c1, r1, _) = run("teleport", &cfg, &["--jobs", "1"]);
    let (c2, r2, _) = run("teleport", &cfg, &["--jobs", "2"]);
    assert_eq!((c1, c2), (0, 0));
    assert_valid_report(&r1);
    assert_eq!(strip(r1.clone()), strip(r2));
    assert_eq!(r1["result"]["pbt"].as_array().unwrap().len(), 2);

    // A different seed changes the hash and the sampled records.
    let (_, r3, _) = run("teleport", &cfg, &["--seed", "12"]);
    assert_ne!(r1["config_hash"], r3["config_hash"]);
    assert_eq!(r3["seed"], 12);
}

#[test]
fn certify_composes_explicit_terms() {
    let cfg = json!({
        "subcommand": "certify",
        "certify": { "compose": {
            "eps_enc": 0.01, "eps_rec": 0.02, "eps_dyn": 0.03, "eps_spread": 0.04,
            "physical": { "g_n": 0.01, "delta": 0.0, "a": 1.0, "b": 2.0, "delta_tau": 0.5 }
        } }
    });
    let (code, r, err) = run("certify", &cfg, &[]);
    assert_eq!(code, 0, "{err}");
    assert_valid_report(&r);
    let c = &r["result"]["certificate"];
    assert!((c["total"].as_f64().unwrap() - 0.1).abs() < 1e-15);
    // √0.01 + 0 + e^{−1}
    let expected = 0.1 + (-1.0f64).exp();
    assert!((c["parametric"].as_f64().unwrap() - expected).abs() < 1e-12);

    let cfg = json!({ "subcommand": "certify", "certify": { "compose": {
        "eps_enc": -1.0, "eps_rec": 0.0, "eps_dyn": 0.0, "eps_spread": 0.0 } } });
    assert_eq!(run("certify", &cfg, &[]).0, 1);
}

#[test]
fn spread_and_check_sim() {
    let cfg = json!({ "subcommand": "spread", "model": { "kind": "brickwork", "n_sites": 6, "depth": 1 } });
    let (code, r, err) = run("spread", &cfg, &[]);
    assert_eq!(code, 0, "{err}");
    assert_valid_report(&r);
    let s = r["result"]["spread"].as_f64().unwrap();
    assert!(s <= r["result"]["light_cone"].as_f64().unwrap() + 1e-9);

    let cfg = json!({ "subcommand": "check-sim", "check-sim": { "n_sites": 4, "probes": [0, 2], "times": [0.0, 0.2] } });
    let (code, r, err) = run("check-sim", &cfg, &[]);
    assert_eq!(code, 0, "{err}");
    assert_valid_report(&r);
    assert!(r["result"]["passed"].as_bool().unwrap());

    let cfg = json!({ "subcommand": "check-sim", "check-sim": { "n_sites": 4, "delta": 0.0 } });
    let (code, r, _) = run("check-sim", &cfg, &[]);
    assert_eq!(code, 2);
    assert_valid_report(&r);
}

#[test]
fn out_dir_override_applies_to_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("reports");
    let c = write_config(dir.path(), "cfg.json", &json!({ "subcommand": "teleport", "teleport": { "ports": [1], "cascade_ports": [] } }));
    let o = Command::new(env!("CARGO_BIN_EXE_nlqc"))
        .args(["teleport", "--config", &c, "--out", "r.json"])
        .current_dir(dir.path())
        .env(nlqc_cli::OUT_DIR_ENV, &target)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(target.join("r.json").exists());
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn stdout_report_when_no_out() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(dir.path(), "cfg.json", &json!({ "subcommand": "teleport", "teleport": { "ports": [1], "cascade_ports": [] } }));
    let o = nlqc(&["teleport", "--config", &c], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_valid_report(&r);
    assert_eq!(r["tool"], "nlqc");
    assert_eq!(r["config"]["teleport"]["otp"], true);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        nlqc_cli::config::parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 5);
}
