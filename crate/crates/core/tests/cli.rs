use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use criticalflow::experiments::{ExperimentConfig, SWEEP_HEADER};
use criticalflow::rundir::read_manifest;
use criticalflow::snapshot::read_snapshot;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_criticalflow")).args(args).output().expect("binary runs")
}

const RUN: &str = r#"
mu = 1.0
lambda = 48.0
dt = 0.01
t_end = 0.1
save_every = 2

[grid]
dim = 2
n = 16

[init]
kind = "taylor-green"
seed = 3
v_amplitude = 1.0
q_amplitude = 0.2
a_amplitude = 0.01
"#;

fn sweep_toml(out: &Path, nus: &str) -> String {
    format!(
        r#"
dt = 0.01
t_end = 0.1
save_every = 2
nu_values = {nus}
seeds = [1, 2]
output_dir = "{}"

[grid]
dim = 2
n = 16

[init]
kind = "taylor-green"
v_amplitude = 1.0
q_amplitude = 0.3
a_amplitude = 0.1
a_amplitude_over_nu = true
"#,
        out.display()
    )
}

#[test]
fn solve_writes_manifest_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, RUN).unwrap();
    for system in ["ins", "cns"] {
        let out = dir.path().join(system);
        let o = bin(&["solve", "--system", system, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let m = read_manifest(&out).unwrap();
        assert_eq!(m.frames.len(), 6);
        assert!(!m.code_version.is_empty());
        assert!(m.wall_s >= 0.0);
        let snap = read_snapshot(&out.join(&m.frames[5].v), None).unwrap();
        assert!((snap.time - 0.1).abs() < 1e-12);
        assert_eq!(snap.field.components(), 2);
        let text = fs::read_to_string(out.join(&m.frames[0].v)).unwrap();
        assert_eq!(text.lines().next().unwrap(), "dim,n,length,components,time");
        assert_eq!(text.lines().count(), 2 + 16 * 16);
        assert_eq!(m.frames[0].a.is_some(), system == "cns");
    }

    let ins = dir.path().join("ins");
    let cns = dir.path().join("cns");
    let analysis = dir.path().join("analysis");
    let o = bin(&[
        "analyze",
        "--functionals",
        "--cns",
        cns.to_str().unwrap(),
        "--ins",
        ins.to_str().unwrap(),
        "--out",
        analysis.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(analysis.join("functionals.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "T,Xd,Yd,Zd,Wd,Vd,E");
    assert_eq!(csv.lines().count(), 7);
    let cond: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(analysis.join("conditions.json")).unwrap()).unwrap();
    assert_eq!(cond["nu"], 50.0);
    assert!(cond["bound"]["empirical_c"].as_f64().unwrap().is_finite());

    let m = read_manifest(&ins).unwrap();
    let snap = ins.join(&m.frames[0].v);
    let o = bin(&["analyze", "--snapshot", snap.to_str().unwrap(), "--s", "0"]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().next().unwrap(), "j,block_norm,weight_s");
    assert!(table.lines().last().unwrap().starts_with("besov_norm,0,"));
}

#[test]
fn swapped_run_directories_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, RUN).unwrap();
    let ins = dir.path().join("ins");
    assert!(bin(&["solve", "--system", "ins", "--config", cfg.to_str().unwrap(), "--out", ins.to_str().unwrap()]).status.success());
    let o = bin(&["analyze", "--functionals", "--cns", ins.to_str().unwrap(), "--ins", ins.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("not a compressible run"));
}

#[test]
fn bad_config_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "dt = 0.1\n").unwrap();
    let o = bin(&["solve", "--system", "ins", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.toml"));
}

fn strip_wall(csv: &str) -> Vec<String> {
    csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string()).collect()
}

#[test]
fn sweep_is_deterministic_and_resumable() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg_a = dir.path().join("a.toml");
    let cfg_b = dir.path().join("b.toml");
    fs::write(&cfg_a, sweep_toml(&a, "[10.0, 100.0, 1000.0]")).unwrap();
    fs::write(&cfg_b, sweep_toml(&b, "[10.0, 100.0, 1000.0]")).unwrap();
    assert!(ExperimentConfig::load(&cfg_a).is_ok());

    let o = bin(&["sweep", "--config", cfg_a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let full = fs::read_to_string(a.join("sweep.csv")).unwrap();
    assert_eq!(full.lines().next().unwrap(), SWEEP_HEADER);
    assert_eq!(full.lines().count(), 7);
    for name in ["fit.json", "plot.gp", "conditions.json"] {
        assert!(a.join(name).exists(), "{name}");
    }
    let plot = fs::read_to_string(a.join("plot.gp")).unwrap();
    assert!(plot.contains("set logscale xy") && plot.contains("x**(-0.5)"));

    // an interrupted sweep: keep the header and two rows, then resume
    fs::create_dir_all(&b).unwrap();
    let partial: Vec<&str> = full.lines().take(3).collect();
    fs::write(b.join("sweep.csv"), partial.join("\n") + "\n").unwrap();
    let o = bin(&["sweep", "--config", cfg_b.to_str().unwrap()]);
    assert!(o.status.success());
    let resumed = fs::read_to_string(b.join("sweep.csv")).unwrap();
    assert_eq!(strip_wall(&resumed), strip_wall(&full));
    for (kept, orig) in resumed.lines().zip(full.lines()).take(3) {
        assert_eq!(kept, orig);
    }
}

#[test]
fn sweep_with_failed_rows_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let cfg = dir.path().join("s.toml");
    // far above the acoustic step limit
    fs::write(&cfg, sweep_toml(&out, "[10.0]").replace("dt = 0.01", "dt = 0.5").replace("t_end = 0.1", "t_end = 1.0")).unwrap();
    let o = bin(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains("failed: CFL")));
    assert!(!out.join("fit.json").exists());
}

#[test]
fn sweep_rejects_invalid_nu_lists() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(&cfg, sweep_toml(&dir.path().join("s"), "[100.0, 10.0]")).unwrap();
    let o = bin(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("strictly increasing"));
}
