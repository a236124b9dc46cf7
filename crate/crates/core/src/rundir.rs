//! Trajectory directories written by `solve` and read back by `analyze`.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/v_00000.csv  (and a_00000.csv for the compressible system)
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cns::{run_cns_with, CnsConfig, CnsFrame, CnsState, PressureLaw, ViscosityParams};
use crate::error::{FlowError, Result};
use crate::experiments::{generate_initial_data, InitSpec};
use crate::field::SpectralField;
use crate::functionals::{
    check_smallness, check_theorem_bound, BoundCheck, DataNorms, FunctionalAccumulator,
    FunctionalReport, PerturbationFrame, SmallnessCheck,
};
use crate::grid::{Grid, GridSpec};
use crate::ins::{compute_m, run_ins_with, InsConfig, InsFrame, InsState};
use crate::littlewood_paley::DyadicPartition;
use crate::snapshot::{read_snapshot, write_snapshot};
use crate::stepping::Integrator;
use crate::trajectory::{Ramp, Trajectory};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Ins,
    Cns,
}

fn default_mu() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    2.0
}

fn default_save_every() -> usize {
    1
}

fn default_true() -> bool {
    true
}

/// Configuration file of a single `solve` run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: GridSpec,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_save_every")]
    pub save_every: usize,
    #[serde(default = "crate::stepping::stiff_default")]
    pub integrator: Integrator,
    #[serde(default)]
    pub ramp: Option<Ramp>,
    #[serde(default = "default_true")]
    pub implicit_acoustics: bool,
    pub init: InitSpec,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| FlowError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
            .map_err(|e| FlowError::Parse { path: path.to_path_buf(), msg: e.to_string() })
    }

    pub fn ins(&self) -> InsConfig {
        InsConfig {
            grid: self.grid,
            mu: self.mu,
            dt: self.dt,
            t_end: self.t_end,
            save_every: self.save_every,
            integrator: self.integrator,
            ramp: self.ramp,
        }
    }

    pub fn cns(&self) -> CnsConfig {
        CnsConfig {
            grid: self.grid,
            mu: self.mu,
            lambda: self.lambda,
            gamma: self.gamma,
            dt: self.dt,
            t_end: self.t_end,
            save_every: self.save_every,
            integrator: self.integrator,
            ramp: self.ramp,
            implicit_acoustics: self.implicit_acoustics,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub t: f64,
    pub v: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub system: System,
    pub config: RunConfig,
    pub code_version: String,
    pub wall_s: f64,
    pub frames: Vec<FrameEntry>,
}

/// `git describe` of the working tree, or the package version outside a repository.
pub fn code_version() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")))
}

fn frame_name(prefix: &str, index: usize) -> String {
    format!("{prefix}_{index:05}.csv")
}

/// Runs `system` from the configured initial data and writes the trajectory to `out`.
pub fn solve_to_dir(system: System, config: &RunConfig, out: &Path) -> Result<Manifest> {
    let start = Instant::now();
    fs::create_dir_all(out)?;
    let grid = config.grid.build()?;
    let partition = DyadicPartition::new(&grid);
    let (a0, v0) = generate_initial_data(&config.init, &partition)?;
    let mut frames = Vec::new();
    match system {
        System::Ins => run_ins_with(&config.ins(), &v0, |f| {
            let v = frame_name("v", frames.len());
            write_snapshot(&out.join(&v), &f.velocity, f.t)?;
            frames.push(FrameEntry { t: f.t, v, a: None });
            Ok(())
        })?,
        System::Cns => run_cns_with(&config.cns(), &a0, &v0, |f| {
            let (v, a) = (frame_name("v", frames.len()), frame_name("a", frames.len()));
            write_snapshot(&out.join(&v), &f.v, f.t)?;
            write_snapshot(&out.join(&a), &f.a, f.t)?;
            frames.push(FrameEntry { t: f.t, v, a: Some(a) });
            Ok(())
        })?,
    }
    let manifest = Manifest {
        system,
        config: config.clone(),
        code_version: code_version(),
        wall_s: start.elapsed().as_secs_f64(),
        frames,
    };
    fs::write(out.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text).map_err(|e| FlowError::Parse { path, msg: e.to_string() })
}

fn load_field(dir: &Path, name: &str, grid: &Grid) -> Result<SpectralField> {
    Ok(read_snapshot(&dir.join(name), Some(grid))?.field)
}

/// Incompressible frames of a run directory, rates recomputed from the right-hand side.
pub fn load_ins_trajectory(dir: &Path) -> Result<(Manifest, Trajectory<InsFrame>)> {
    let manifest = read_manifest(dir)?;
    if manifest.system != System::Ins {
        return Err(FlowError::Config(format!("{} is not an incompressible run", dir.display())));
    }
    let grid = manifest.config.grid.build()?;
    let mut traj = Trajectory::new();
    for entry in &manifest.frames {
        let v = load_field(dir, &entry.v, &grid)?;
        traj.push(InsFrame::from_state(&InsState::new(entry.t, v, manifest.config.mu)?)?)?;
    }
    Ok((manifest, traj))
}

/// Compressible frames of a run directory, rates recomputed from the right-hand side.
pub fn load_cns_trajectory(dir: &Path) -> Result<(Manifest, Trajectory<CnsFrame>)> {
    let manifest = read_manifest(dir)?;
    if manifest.system != System::Cns {
        return Err(FlowError::Config(format!("{} is not a compressible run", dir.display())));
    }
    let cfg = &manifest.config;
    let grid = cfg.grid.build()?;
    let params = ViscosityParams::new(cfg.mu, cfg.lambda)?;
    let law = PressureLaw::new(cfg.gamma)?;
    let mut traj = Trajectory::new();
    for entry in &manifest.frames {
        let name = entry.a.as_deref().ok_or_else(|| {
            FlowError::Config(format!("frame at t = {} has no density file", entry.t))
        })?;
        let a = load_field(dir, name, &grid)?;
        let v = load_field(dir, &entry.v, &grid)?;
        traj.push(CnsFrame::from_state(&CnsState::new(entry.t, a, v, params, law)?)?)?;
    }
    Ok((manifest, traj))
}

/// Block table `j,block_norm,weight_s` and the summary line `besov_norm,s,value`.
pub fn besov_table(field: &SpectralField, s: f64) -> String {
    let partition = DyadicPartition::new(field.grid());
    let norm = partition.besov_norm(field, s);
    let mut out = String::from("j,block_norm,weight_s\n");
    for (j, weighted) in &norm.per_block {
        let weight = 2f64.powf(*j as f64 * s);
        let _ = writeln!(out, "{j},{:e},{:e}", weighted / weight, weight);
    }
    let _ = writeln!(out, "besov_norm,{s},{:e}", norm.value);
    out
}

pub fn analyze_snapshot(path: &Path, s: f64) -> Result<String> {
    Ok(besov_table(&read_snapshot(path, None)?.field, s))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    pub nu: f64,
    pub mu: f64,
    pub m: f64,
    pub c: f64,
    pub data: DataNorms,
    pub smallness: SmallnessCheck,
    pub bound: BoundCheck,
}

#[derive(Clone, Debug)]
pub struct FunctionalsOutput {
    pub report: FunctionalReport,
    pub conditions: Conditions,
}

/// Functionals of a compressible run against its incompressible reference; both directories
/// must share grid, `μ` and save times.
pub fn analyze_functionals(cns_dir: &Path, ins_dir: &Path, c: f64) -> Result<FunctionalsOutput> {
    let (cm, cns) = load_cns_trajectory(cns_dir)?;
    let (im, ins) = load_ins_trajectory(ins_dir)?;
    if cm.config.grid != im.config.grid {
        return Err(FlowError::GridMismatch);
    }
    if cm.config.mu != im.config.mu {
        return Err(FlowError::Config("the two runs use different mu".into()));
    }
    if cns.len() != ins.len() {
        return Err(FlowError::TimeGridMismatch(format!(
            "{} compressible frames against {} incompressible frames",
            cns.len(),
            ins.len()
        )));
    }
    let grid = cm.config.grid.build()?;
    let partition = DyadicPartition::new(&grid);
    let (mu, nu) = (cm.config.mu, cm.config.lambda + 2.0 * cm.config.mu);
    let mut acc = FunctionalAccumulator::new(&partition, nu, mu);
    for (cf, vf) in cns.frames().iter().zip(ins.frames()) {
        acc.push(&PerturbationFrame::new(cf, vf)?)?;
    }
    let report = acc.finish();
    let first = cns.first()?;
    let data = DataNorms::measure(&first.a, &first.v, &partition)?;
    let m = compute_m(&ins, &partition)?;
    let conditions = Conditions {
        nu,
        mu,
        m,
        c,
        data,
        smallness: check_smallness(&data, m, mu, nu, c),
        bound: check_theorem_bound(&report, &data, m, c),
    };
    Ok(FunctionalsOutput { report, conditions })
}

pub fn functionals_csv(report: &FunctionalReport) -> String {
    let mut out = String::from("T,Xd,Yd,Zd,Wd,Vd,E\n");
    for i in 0..report.times.len() {
        let _ = writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            report.times[i],
            report.x_d[i],
            report.y_d[i],
            report.z_d[i],
            report.w_d[i],
            report.v_d[i],
            report.e[i]
        );
    }
    out
}

/// Writes `functionals.csv` and `conditions.json` into `out`.
pub fn write_functionals(output: &FunctionalsOutput, out: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(out)?;
    let csv = out.join("functionals.csv");
    let json = out.join("conditions.json");
    fs::write(&csv, functionals_csv(&output.report))?;
    fs::write(&json, serde_json::to_string_pretty(&output.conditions)?)?;
    Ok((csv, json))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::InitKind;

    fn config() -> RunConfig {
        RunConfig::from_toml_str(
            r#"
            mu = 1.0
            lambda = 8.0
            dt = 0.01
            t_end = 0.05
            save_every = 1
            [grid]
            dim = 2
            n = 16
            [init]
            kind = "taylor-green"
            v_amplitude = 0.5
            a_amplitude = 0.01
            "#,
        )
        .unwrap()
    }

    #[test]
    fn config_defaults() {
        let cfg = config();
        assert_eq!(cfg.gamma, 2.0);
        assert!(cfg.implicit_acoustics);
        assert_eq!(cfg.integrator, Integrator::ImexBdf2);
        assert_eq!(cfg.init.kind, InitKind::TaylorGreen);
        assert_eq!(cfg.cns().lambda, 8.0);
    }

    #[test]
    fn solve_and_reload_pair() {
        let dir = tempfile::tempdir().unwrap();
        let (cdir, idir) = (dir.path().join("cns"), dir.path().join("ins"));
        let cfg = config();
        let m = solve_to_dir(System::Cns, &cfg, &cdir).unwrap();
        assert_eq!(m.frames.len(), 6);
        solve_to_dir(System::Ins, &cfg, &idir).unwrap();
        let (_, traj) = load_cns_trajectory(&cdir).unwrap();
        assert!((traj.last().unwrap().t - 0.05).abs() < 1e-12);
        assert!(load_ins_trajectory(&cdir).is_err());
        let out = analyze_functionals(&cdir, &idir, 1.0).unwrap();
        assert_eq!(out.report.times.len(), 6);
        assert_eq!(out.conditions.nu, 10.0);
        assert!(out.report.final_e() > 0.0 && out.report.final_e().is_finite());
        let text = functionals_csv(&out.report);
        assert!(text.starts_with("T,Xd,Yd,Zd,Wd,Vd,E\n"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn besov_table_sums_to_norm() {
        let g = Grid::periodic(2, 16).unwrap();
        let f = SpectralField::from_fn(&g, 1, |x, _| x[0].cos() + 0.25 * (3.0 * x[1]).sin());
        let text = besov_table(&f, 1.0);
        let mut total = 0.0;
        let mut reported = 0.0;
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols[0] == "besov_norm" {
                reported = cols[2].parse::<f64>().unwrap();
            } else {
                total += cols[1].parse::<f64>().unwrap() * cols[2].parse::<f64>().unwrap();
            }
        }
        assert!((total - reported).abs() < 1e-12 * reported);
    }
}
