use std::path::Path;
use std::process::Command;

use axisym_core::{FieldRole, HalfPlaneGrid, ScalarField};
use axisym_lab::checkpoint::Checkpoint;
use axisym_lab::cli::main_with_args;
use axisym_lab::output::diagnostics_header;

fn small_config(extra: &str) -> String {
    format!(
        r#"{{
  "grid": {{"nr": 24, "nz": 48, "r_max": 3.0, "z_min": -3.0, "z_max": 3.0}},
  "nu": 0.001,
  "tfinal": 0.1,
  "cfl": 0.5,
  "dt_max": 0.05,
  "scheme": "xi_semilagrangian",
  "ic": {{"kind": "gaussian_ring", "r0": 1.0, "z0": -0.5, "sigma": 0.25, "amplitude": 10.0}},
  "output_interval": 0.05{extra}
}}"#
    )
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn lab(args: &[&str]) -> i32 {
    let mut all = vec!["axisym-lab"];
    all.extend_from_slice(args);
    main_with_args(all)
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_key_is_rejected_by_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.json", &small_config(r#", "bogus_key": 1"#));
    let out = Command::new(env!("CARGO_BIN_EXE_axisym-lab"))
        .args(["run", "--config", &cfg, "--out"])
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));
}

#[test]
fn invalid_values_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "neg.json",
        &small_config("").replace("\"nu\": 0.001", "\"nu\": -1.0"),
    );
    let out = tmp.path().join("out");
    assert_eq!(lab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]), 1);
    assert_eq!(
        lab(&[
            "run",
            "--config",
            "/nonexistent/cfg.json",
            "--out",
            out.to_str().unwrap()
        ]),
        1
    );
    assert_eq!(lab(&["no-such-command"]), 1);
}

#[test]
fn zero_final_time_writes_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.json",
        &small_config("").replace("\"tfinal\": 0.1", "\"tfinal\": 0.0"),
    );
    let out = tmp.path().join("out");
    assert_eq!(lab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]), 0);
    let mut rdr = csv::Reader::from_path(out.join("diagnostics.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, diagnostics_header(&[1.0, 1.5, 2.0, 3.0]));
    let rows: Vec<_> = rdr.records().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn diagnostics_header_names_columns() {
    let h = diagnostics_header(&[1.0, 1.5]);
    let expected = [
        "t",
        "nu",
        "lp_1.000",
        "lp_1.500",
        "linf",
        "impulse",
        "energy",
        "enstrophy",
        "grad_u_sq",
        "diss_1.000",
        "diss_1.500",
        "energy_deficit",
    ];
    assert_eq!(h, expected);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = HalfPlaneGrid::new(5, 7, 2.0, -1.5, 1.5).unwrap();
    let values = (0..35).map(|k| (k as f64 * 0.37).sin() * 1e3 + 1e-300).collect();
    let xi = ScalarField::from_values(grid, FieldRole::RelativeVorticity, values).unwrap();
    let ck = Checkpoint { t: 0.375, nu: 1e-3, xi };
    let path = tmp.path().join("a.axf1");
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);
    let bytes = std::fs::read(&path).unwrap();
    let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
    assert!(std::str::from_utf8(&bytes[..nl]).unwrap().contains("\"AXF1\""));
    assert_eq!(bytes.len() - nl - 1, 8 * 35);
}

#[test]
fn truncated_checkpoint_is_a_format_error() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = HalfPlaneGrid::new(4, 4, 1.0, -1.0, 1.0).unwrap();
    let ck = Checkpoint {
        t: 0.0,
        nu: 0.0,
        xi: ScalarField::zeros(grid, FieldRole::RelativeVorticity),
    };
    let path = tmp.path().join("a.axf1");
    ck.save(&path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(Checkpoint::load(&path).is_err());
    assert_eq!(lab(&["diag", "--checkpoint", path.to_str().unwrap()]), 1);
}

#[test]
fn run_then_diag_renorm_and_restart() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = r#", "tracers": {"seeds": [[1.0, -0.5]], "random": {"count": 2, "region": [0.6, 1.4, -1.0, 0.0]}},
  "renorm": {"region": [0.6, 1.4, -1.0, 0.3], "library_size": 8, "beta_scale": 10.0},
  "checkpoint_every": 1"#;
    let cfg = write(tmp.path(), "c.json", &small_config(extra));
    let out = tmp.path().join("out");
    assert_eq!(lab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]), 0);
    for f in [
        "config.json",
        "diagnostics.csv",
        "summary.json",
        "final.axf1",
        "flowmap.csv",
        "checkpoint_00001.axf1",
    ] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["tracers"], 3);
    assert!(summary.get("wall_seconds").is_none());
    for pair in summary["worst_lp_increase"].as_array().unwrap() {
        assert!(pair[1].as_f64().unwrap() <= 1e-8);
    }

    let ck = out.join("final.axf1");
    assert_eq!(lab(&["diag", "--checkpoint", ck.to_str().unwrap()]), 0);
    assert_eq!(
        lab(&["diag", "--checkpoint", ck.to_str().unwrap(), "--kernel-boundary"]),
        0
    );

    assert_eq!(lab(&["renorm-check", "--run", out.to_str().unwrap()]), 0);
    let renorm = read_json(&out.join("renorm.json"));
    assert_eq!(renorm["library_size"], 8);
    assert!(renorm["composition_defect"].as_f64().unwrap().is_finite());
    for b in renorm["betas"].as_array().unwrap() {
        assert!(b["residual"].as_f64().unwrap().is_finite());
    }
    assert_eq!(
        lab(&["renorm-check", "--run", out.to_str().unwrap(), "--beta", "no_such_beta"]),
        1
    );

    // Restart from the checkpoint through a relative path.
    let restart = small_config("").replace(
        r#"{"kind": "gaussian_ring", "r0": 1.0, "z0": -0.5, "sigma": 0.25, "amplitude": 10.0}"#,
        r#"{"kind": "checkpoint", "path": "out/final.axf1"}"#,
    );
    let cfg2 = write(tmp.path(), "restart.json", &restart);
    let out2 = tmp.path().join("out2");
    assert_eq!(lab(&["run", "--config", &cfg2, "--out", out2.to_str().unwrap()]), 0);
}

#[test]
fn opposite_rings_report_moment_ratio() {
    let tmp = tempfile::tempdir().unwrap();
    let ic = r#"{"kind": "superposition", "terms": [
      {"kind": "gaussian_ring", "r0": 1.0, "z0": -0.4, "sigma": 0.25, "amplitude": 10.0},
      {"kind": "gaussian_ring", "r0": 1.0, "z0": 0.4, "sigma": 0.25, "amplitude": -10.0}]}"#;
    let text = small_config("").replace(
        r#"{"kind": "gaussian_ring", "r0": 1.0, "z0": -0.5, "sigma": 0.25, "amplitude": 10.0}"#,
        ic,
    );
    let cfg = write(tmp.path(), "c.json", &text);
    let out = tmp.path().join("out");
    assert_eq!(lab(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]), 0);
    let s = read_json(&out.join("summary.json"));
    let ratio = s["moment_ratio_max"].as_f64().unwrap();
    assert!(ratio.is_finite() && ratio > 0.0);
}

#[test]
fn verify_ineq_writes_a_finite_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    assert_eq!(
        lab(&[
            "verify",
            "ineq",
            "--suite",
            "ap",
            "--p",
            "1.5",
            "--samples",
            "2000",
            "--out",
            out
        ]),
        0
    );
    let r = read_json(&tmp.path().join("ineq_ap_p1.500_seed1.json"));
    let sup = r["empirical_sup"].as_f64().unwrap();
    assert!(sup.is_finite() && sup >= 1.0);
    assert_eq!(r["samples"], 2000);
    assert!(r["argmax_params"].is_object());
    assert_eq!(lab(&["verify", "ineq", "--suite", "ap", "--p", "2.5", "--out", out]), 1);

    assert_eq!(
        lab(&[
            "verify",
            "ineq",
            "--suite",
            "nash",
            "--samples",
            "20",
            "--seed",
            "7",
            "--out",
            out
        ]),
        0
    );
    let r = read_json(&tmp.path().join("ineq_nash_p2.000_seed7.json"));
    assert!(r["empirical_sup"].as_f64().unwrap() > 0.0);
    assert_eq!(r["non_finite"], 0);
}

#[test]
fn sweep_runs_every_member() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = r#", "sweep": {"ball_radius": 2.0, "bound_p": 2.0}"#;
    let text = small_config(extra).replace("\"nr\": 24, \"nz\": 48", "\"nr\": 16, \"nz\": 32");
    let cfg = write(tmp.path(), "c.json", &text);
    let out = tmp.path().join("sw");
    assert_eq!(
        lab(&[
            "sweep",
            "--config",
            &cfg,
            "--nus",
            "0.02,0.01,0.005,0.0025",
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    let s = read_json(&out.join("sweep.json"));
    assert_eq!(s["members"].as_array().unwrap().len(), 4);
    assert_eq!(s["cauchy"].as_array().unwrap().len(), 3);
    for k in 0..4 {
        assert!(out.join(format!("nu_{k}")).join("diagnostics.csv").exists());
    }
    assert_eq!(
        lab(&[
            "sweep",
            "--config",
            &cfg,
            "--nus",
            "0.01,0.02,0.005,0.001",
            "--out",
            out.to_str().unwrap()
        ]),
        1
    );
    assert_eq!(
        lab(&[
            "sweep",
            "--config",
            &cfg,
            "--nus",
            "0.01,0.005",
            "--out",
            out.to_str().unwrap()
        ]),
        1
    );
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let extra = r#", "tracers": {"random": {"count": 4, "region": [0.6, 1.4, -1.0, 0.0]}}, "seed": 11"#;
    let cfg = write(tmp.path(), "c.json", &small_config(extra));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(lab(&["run", "--config", &cfg, "--out", a.to_str().unwrap()]), 0);
    assert_eq!(lab(&["run", "--config", &cfg, "--out", b.to_str().unwrap()]), 0);
    for f in [
        "diagnostics.csv",
        "summary.json",
        "final.axf1",
        "flowmap.csv",
        "config.json",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
}
