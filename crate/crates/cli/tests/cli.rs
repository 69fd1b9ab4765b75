use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn jstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jstab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn run_with(dir: &Path, cmd: &str, config: Option<&Path>, extra: &[&str]) -> (Output, PathBuf) {
    let out_dir = dir.join(format!("out-{cmd}-{}", extra.join("_").replace(['=', '-', '.'], "")));
    let mut args = vec![cmd.to_string(), "--out".into(), out_dir.display().to_string()];
    if let Some(c) = config {
        args.extend(["--config".into(), c.display().to_string()]);
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    (jstab(&argv), out_dir)
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn simulate_harmonic_records_small_drift() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "h.toml", "[system]\nname = \"harmonic\"\n");
    let (out, out_dir) = run_with(dir.path(), "simulate", Some(&cfg), &["--json"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("harmonic/trajectory.json")).unwrap()).unwrap();
    assert!(meta["max_drift"].as_f64().unwrap() < 1e-8);
    let (header, rows) = read_csv(&out_dir.join("harmonic/trajectory.csv"));
    assert_eq!(header, ["t", "q1", "q2", "v1", "v2"]);
    assert_eq!(rows.len(), meta["samples"].as_u64().unwrap() as usize);
    let dat = std::fs::read_to_string(out_dir.join("harmonic/trajectory.dat")).unwrap();
    assert!(dat.starts_with("# t q1 q2 v1 v2 E rel_drift\n"));
    assert_eq!(stdout_json(&out)["command"], "simulate");
}

#[test]
fn simulate_free_flat_motion_is_a_straight_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "line.toml",
        "[system]\nmetric = \"flat\"\nq0 = [1.0, -2.0]\nv0 = [0.5, 0.25]\n[run]\nt_span = [0.0, 3.0]\nstep = 0.01\n",
    );
    let (out, out_dir) = run_with(dir.path(), "simulate", Some(&cfg), &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (_, rows) = read_csv(&out_dir.join("custom/trajectory.csv"));
    for r in rows {
        let t = r[0];
        assert!((r[1] - (1.0 + 0.5 * t)).abs() < 1e-12);
        assert!((r[2] - (-2.0 + 0.25 * t)).abs() < 1e-12);
    }
}

#[test]
fn energy_below_the_potential_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "f.toml",
        "[system]\nmetric = \"flat\"\npotential = \"0.5*(q1^2+q2^2)\"\nq0 = [2.0, 0.0]\ndirection = [0.0, 1.0]\nenergy = 1.0\n",
    );
    let (out, _) = run_with(dir.path(), "simulate", Some(&cfg), &[]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("forbidden region"));
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_syntax = write_config(dir.path(), "a.toml", "[system\nname = 1\n");
    let unknown_key = write_config(dir.path(), "b.toml", "[system]\nname = \"harmonic\"\nspeed = 2\n");
    let unknown_system = write_config(dir.path(), "c.toml", "[system]\nname = \"pendulum-of-doom\"\n");
    let bad_energy = write_config(dir.path(), "d.toml", "[system]\nname = \"harmonic\"\nenergy = 3.0\n");
    let bad_expr = write_config(
        dir.path(),
        "e.toml",
        "[system]\nmetric = \"flat\"\npotential = \"q1 +* 2\"\nq0 = [0.0, 0.0]\nv0 = [1.0, 0.0]\n",
    );
    for cfg in [&bad_syntax, &unknown_key, &unknown_system, &bad_energy, &bad_expr] {
        let (out, _) = run_with(dir.path(), "compare-operators", Some(cfg), &[]);
        assert_eq!(code(&out), 2, "{}: {}", cfg.display(), String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(code(&jstab(&["frobnicate"])), 2);
    assert_eq!(code(&jstab(&["simulate", "--step", "abc"])), 2);
    let (out, _) = run_with(dir.path(), "verify-lemmas", None, &["--tolerance", "bogus=1"]);
    assert_eq!(code(&out), 2);
    let (out, _) = run_with(dir.path(), "verify-lemmas", None, &["--tolerance", "theorem"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&jstab(&["--help"])), 0);
}

#[test]
fn constant_potential_has_no_correction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "free.toml", "[system]\nname = \"hyperbolic-free\"\n[run]\nseeds = [1, 2]\n");
    let (out, out_dir) = run_with(dir.path(), "compare-operators", Some(&cfg), &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    for seed in [1, 2] {
        let (header, rows) = read_csv(&out_dir.join(format!("hyperbolic-free/operators_seed{seed}.csv")));
        let col = header.iter().position(|h| h == "correction").unwrap();
        assert!(rows.iter().all(|r| r[col] < 1e-10));
    }
}

#[test]
fn harmonic_radial_correction_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "radial.toml",
        "[system]\nname = \"harmonic\"\n[run]\nt_span = [0.0, 6.283185307179586]\n[deviation]\nfield = \"radial\"\n",
    );
    let (out, out_dir) = run_with(dir.path(), "compare-operators", Some(&cfg), &["--json"]);
    assert_eq!(code(&out), 0);
    let json = stdout_json(&out);
    let c = &json["comparisons"][0];
    assert_eq!(c["field"], "radial");
    assert!(c["equal_energy"]["correction_sup"].as_f64().unwrap() > 1e-2);
    assert!(c["equal_energy"]["residual"].as_f64().unwrap() < 1e-6);
    let mut r = csv::Reader::from_path(out_dir.join("compare_operators.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(r.records().count(), 1);
    assert_eq!(header[0], "system");
    assert!(header.contains(&"equal_energy_correction_sup".to_string()));
}

fn failing_checks(verdict: &Value) -> Vec<String> {
    verdict["criteria"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|c| c["checks"].as_array().unwrap().iter())
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn injected_fault_fails_only_lemma3() {
    let dir = tempfile::tempdir().unwrap();
    let (clean, _) = run_with(dir.path(), "verify-lemmas", None, &["--json"]);
    assert_eq!(code(&clean), 0);
    assert!(failing_checks(&stdout_json(&clean)).is_empty());
    let (out, out_dir) = run_with(dir.path(), "verify-lemmas", None, &["--inject-fault", "lemma3-sign", "--json"]);
    assert_eq!(code(&out), 1);
    let failed = failing_checks(&stdout_json(&out));
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|n| n.starts_with("lemma3/")), "{failed:?}");
    let written: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("verify_lemmas.json")).unwrap()).unwrap();
    assert_eq!(written["pass"], false);
    assert_eq!(written["fault"], "Lemma3SignFlip");
}

#[test]
fn tiny_tolerance_override_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = run_with(dir.path(), "verify-lemmas", None, &["--tolerance", "lemma_fd=1e-15", "--json"]);
    assert_eq!(code(&out), 1);
    let json = stdout_json(&out);
    assert_eq!(json["tolerances"]["lemma_fd"], 1e-15);
    let failed = failing_checks(&json);
    assert!(!failed.is_empty() && failed.iter().all(|n| n.ends_with("/fd")), "{failed:?}");

    let cfg = write_config(dir.path(), "tol.toml", "[tolerances]\ntheorem = 1e-15\n");
    let (out, out_dir) = run_with(dir.path(), "verify-all", Some(&cfg), &[]);
    assert_eq!(code(&out), 1);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("criterion  5 FAIL"), "{text}");
    assert!(text.contains("criterion  3 PASS"), "{text}");
    let verdict: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("verify_all.json")).unwrap()).unwrap();
    let failed = failing_checks(&verdict);
    assert!(failed.iter().all(|n| n.starts_with("theorem")), "{failed:?}");
    for c in verdict["criteria"][4]["checks"].as_array().unwrap() {
        assert!(c.get("value").is_some() && c.get("tolerance").is_some() && c.get("relation").is_some());
    }
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "det.toml",
        "[system]\nname = \"spherical-pendulum\"\n[run]\nt_span = [0.0, 2.0]\nseeds = [3]\n",
    );
    let files = [
        ("simulate", "spherical-pendulum/trajectory.csv"),
        ("deviation", "spherical-pendulum/deviation.csv"),
        ("compare-operators", "spherical-pendulum/operators_seed3.csv"),
        ("second-variation", "second_variation.csv"),
        ("geodesic", "spherical-pendulum/geodesic.csv"),
    ];
    for (cmd, file) in files {
        let a = dir.path().join(format!("a-{cmd}"));
        let b = dir.path().join(format!("b-{cmd}"));
        for d in [&a, &b] {
            let out = jstab(&[cmd, "--config", cfg.to_str().unwrap(), "--out", d.to_str().unwrap()]);
            assert_eq!(code(&out), 0, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        }
        let (x, y) = (std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{cmd}");
    }
}

#[test]
fn seed_flag_changes_the_variation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", "[system]\nname = \"harmonic\"\n");
    let (a, _) = run_with(dir.path(), "second-variation", Some(&cfg), &["--seed", "4", "--json"]);
    let (b, _) = run_with(dir.path(), "second-variation", Some(&cfg), &["--seed", "5", "--json"]);
    assert_eq!(code(&a), 0);
    assert_eq!(code(&b), 0);
    let (a, b) = (stdout_json(&a), stdout_json(&b));
    assert_eq!(a["results"].as_array().unwrap().len(), 1);
    assert_eq!(a["results"][0]["seed"], 4);
    assert_ne!(a["results"][0]["d2s"], b["results"][0]["d2s"]);
}

#[test]
fn deviation_and_geodesic_report_their_oracles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dev.toml",
        "[system]\nname = \"hyperbolic-well\"\n[deviation]\nv0 = [0.3, -0.2]\ndv0 = [0.1, 0.25]\n",
    );
    let (out, _) = run_with(dir.path(), "deviation", Some(&cfg), &["--json"]);
    assert_eq!(code(&out), 0);
    let run = &stdout_json(&out)["runs"][0];
    assert!(run["oracle_distance"].as_f64().unwrap() < 1e-5);
    assert!(run["growth_factor"].as_f64().unwrap() >= 1.0);
    let (out, out_dir) = run_with(dir.path(), "geodesic", Some(&cfg), &["--json"]);
    assert_eq!(code(&out), 0);
    assert!(stdout_json(&out)["runs"][0]["roundtrip_discrepancy"].as_f64().unwrap() < 1e-6);
    let (header, rows) = read_csv(&out_dir.join("hyperbolic-well/geodesic.csv"));
    assert_eq!(header[..2], ["s", "t"]);
    assert!(rows.len() > 100);
}
