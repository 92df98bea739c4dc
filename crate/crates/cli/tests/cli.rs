use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_visclimit"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(cmd: &str, config: &Path, out: &Path) -> Output {
    bin().args([cmd, "--config"]).arg(config).arg("--out").arg(out).output().unwrap()
}

fn manifest(dir: &Path, cmd: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{cmd}.json"))).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

const SHEAR_21: &str = r#"{"flow": {"name": "shear", "m": 2, "amplitude": 1.0}, "cutoff": 16, "samples": 16, "seed": 7}"#;

#[test]
fn zero_flow_exponent_is_zero() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"flow": {"name": "zero"}, "samples": 8, "horizon": 20}"#);
    let out = tmp.path().join("run");
    let o = run("lyapunov", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out, "lyapunov");
    assert_eq!(m["result"]["mu"].as_f64(), Some(0.0));
    assert!(fs::read_to_string(out.join("lyapunov.json")).unwrap().contains("\"mu\": 0.0"));
}

#[test]
fn shear_exponent_is_small() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"flow": {"name": "shear", "m": 1, "amplitude": 1.0}, "horizon": 200, "samples": 16}"#);
    let out = tmp.path().join("run");
    assert_eq!(code(&run("lyapunov", &cfg, &out)), 0);
    assert!(manifest(&out, "lyapunov")["result"]["mu"].as_f64().unwrap().abs() <= 0.05);
}

#[test]
fn config_errors_exit_2_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    for body in [
        r#"{"flow": {"amplitude": 1.0}}"#,
        r#"{"cutoff": 4}"#,
        r#"{"flow": {"name": "zero"}, "eps_grid": [0.001, 0.01]}"#,
        r#"{"flow": {"name": "zero"}, "unknown": 1}"#,
        "not json",
    ] {
        let cfg = write_config(tmp.path(), "bad.json", body);
        for cmd in ["lyapunov", "branch", "spectrum"] {
            let o = run(cmd, &cfg, &out);
            assert_eq!(code(&o), 2, "{cmd} {body}");
            assert!(!o.stderr.is_empty());
        }
        assert!(!out.exists(), "output written for {body}");
    }
    let o = bin().args(["lyapunov", "--config"]).arg(tmp.path().join("missing.json")).output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn zero_flow_branch_exits_4() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"flow": {"name": "zero"}, "cutoff": 4, "samples": 4, "horizon": 10}"#);
    let o = run("branch", &cfg, &tmp.path().join("run"));
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn cellular_branch_is_empty_above_its_exponent() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"flow": {"name": "cellular", "amplitude": 1.0}, "cutoff": 8, "samples": 16}"#);
    let out = tmp.path().join("run");
    let o = run("branch", &cfg, &out);
    assert_eq!(code(&o), 4);
    let r = &manifest(&out, "branch")["result"];
    assert!(r["mu_hat"].as_f64().unwrap() > 0.0);
    assert_eq!(r["unstable"].as_array().unwrap().len(), 0);
}

#[test]
fn shear_branch_tail_converges() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SHEAR_21);
    let out = tmp.path().join("run");
    let o = run("branch", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("branch.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 6);
    let lambda0: f64 = rows[5][1].parse().unwrap();
    let viscous: Vec<f64> = rows[2..5].iter().map(|r| (r[1].parse::<f64>().unwrap() - lambda0).abs()).collect();
    assert!(viscous.windows(2).all(|w| w[1] <= w[0]), "{viscous:?}");
    // the flagged large-viscosity point stays in the table
    assert!(!rows[0][6].is_empty());
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", SHEAR_21);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        for cmd in ["lyapunov", "spectrum", "branch"] {
            assert_eq!(code(&run(cmd, &cfg, out)), 0);
        }
    }
    for f in ["lyapunov.csv", "lyapunov.json", "spectrum.csv", "spectrum.json", "branch.csv", "branch.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // a different seed changes the hash everywhere
    let o = bin().args(["lyapunov", "--seed", "8", "--config"]).arg(&cfg).arg("--out").arg(tmp.path().join("c")).output().unwrap();
    assert_eq!(code(&o), 0);
    assert_ne!(manifest(&a, "lyapunov")["config_hash"], manifest(&tmp.path().join("c"), "lyapunov")["config_hash"]);
}

#[test]
fn outputs_carry_hash_and_version() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"flow": {"name": "shear", "m": 2, "amplitude": 1.0}, "cutoff": 8, "samples": 8, "horizon": 20, "n_sweep": [4, 6]}"#,
    );
    let out = tmp.path().join("run");
    for cmd in ["lyapunov", "spectrum", "riesz"] {
        assert_eq!(code(&run(cmd, &cfg, &out)), 0, "{cmd}");
    }
    let hash = manifest(&out, "lyapunov")["config_hash"].as_str().unwrap().to_string();
    for entry in fs::read_dir(&out).unwrap() {
        let text = fs::read_to_string(entry.unwrap().path()).unwrap();
        assert!(text.contains(&hash) && text.contains(env!("CARGO_PKG_VERSION")));
    }
    let r = &manifest(&out, "riesz")["result"];
    assert_eq!(r["multiplicity"].as_u64(), Some(2));
}

#[test]
fn report_on_empty_or_corrupt_directory_exits_2() {
    let tmp = TempDir::new().unwrap();
    let o = bin().arg("report").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&o), 2);
    fs::write(tmp.path().join("broken.json"), "{").unwrap();
    let o = bin().arg("report").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("broken.json"));
}

#[test]
fn report_of_single_run_has_one_section() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"flow": {"name": "zero"}, "samples": 4, "horizon": 10}"#);
    let out = tmp.path().join("run");
    assert_eq!(code(&run("lyapunov", &cfg, &out)), 0);
    assert_eq!(code(&bin().arg("report").arg(&out).output().unwrap()), 0);
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["sections"].as_array().unwrap().len(), 1);
    assert!(r["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn report_flags_exponent_mismatch() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let sampled = write_config(tmp.path(), "a.json", SHEAR_21);
    assert_eq!(code(&run("lyapunov", &sampled, &out)), 0);
    assert_eq!(code(&run("branch", &sampled, &out)), 0);
    assert_eq!(code(&bin().arg("report").arg(&out).output().unwrap()), 0);
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["mu_cross_reference"]["consistent"], Value::Bool(true));
    assert!(out.join("plot_branch.csv").exists());

    let pinned = write_config(
        tmp.path(),
        "b.json",
        r#"{"flow": {"name": "shear", "m": 2, "amplitude": 1.0}, "cutoff": 16, "mu_hat": 0.2, "eps_grid": [0.01, 0.001]}"#,
    );
    assert_eq!(code(&run("branch", &pinned, &out)), 0);
    let o = bin().arg("report").arg(&out).output().unwrap();
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["mu_cross_reference"]["consistent"], Value::Bool(false));
    assert_eq!(r["warnings"].as_array().unwrap().len(), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn packet_sweep_writes_fit() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"flow": {"name": "zero"}, "cutoff": 8, "packet": {"inv_deltas": [3, 4], "eps_values": [0.01, 0.001]}}"#,
    );
    let out = tmp.path().join("run");
    let o = run("packet", &cfg, &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out, "packet");
    let rows = m["result"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r["r_decomp"].as_f64().unwrap() < 1e-10));
}

#[test]
fn thread_flag_is_accepted() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{"flow": {"name": "zero"}, "cutoff": 3}"#);
    let o = bin().args(["--threads", "1", "spectrum", "--config"]).arg(&cfg).arg("--out").arg(tmp.path()).output().unwrap();
    assert_eq!(code(&o), 0);
}
