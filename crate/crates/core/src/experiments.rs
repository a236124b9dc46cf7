//! Initial data, the ν-sweep convergence experiment, rate fitting and result files.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cns::{rescale_config, run_cns_with, CnsConfig, MonitorAccumulator};
use crate::error::{FlowError, Result};
use crate::field::{PhysicalField, SpectralField};
use crate::functionals::{
    check_smallness, check_theorem_bound, BoundCheck, DataNorms, FunctionalAccumulator,
    PerturbationFrame, SmallnessCheck,
};
use crate::grid::{Grid, GridSpec};
use crate::helmholtz::{project_p, project_q};
use crate::ins::{run_ins, taylor_green, InsConfig, InsFrame};
use crate::littlewood_paley::DyadicPartition;
use crate::spectral::truncate;
use crate::stepping::Integrator;
use crate::trajectory::{Ramp, Trajectory};

/// Slope fits ignore rows with `E` below this value.
pub const NOISE_FLOOR: f64 = 1e-8;

pub const SWEEP_HEADER: &str = "nu,seed,E,Xd,Yd,Zd,Wd,Vd,flag,wall_s";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    TaylorGreen,
    RandomBand,
    RandomBandPlusDensity,
}

fn default_band() -> [i32; 2] {
    [0, 2]
}

/// Initial data description. Norms are measured at `s = d/2 - 1` for velocities and
/// `s = d/2` for the density perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub kind: InitKind,
    #[serde(default)]
    pub seed: u64,
    /// Target `‖a0‖_{Ḃ^{d/2}}`.
    #[serde(default)]
    pub a_amplitude: f64,
    /// Taylor-Green amplitude, or target `‖v0‖_{Ḃ^{d/2-1}}` for the random kinds.
    #[serde(default)]
    pub v_amplitude: f64,
    /// Target `‖Qv0‖_{Ḃ^{d/2-1}}` of the random potential part added to Taylor-Green.
    #[serde(default)]
    pub q_amplitude: f64,
    /// Inclusive block range `[j_lo, j_hi]` of the random parts.
    #[serde(default = "default_band")]
    pub band: [i32; 2],
    /// Divide `a_amplitude` by `ν` in sweeps.
    #[serde(default)]
    pub a_amplitude_over_nu: bool,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            kind: InitKind::TaylorGreen,
            seed: 0,
            a_amplitude: 0.0,
            v_amplitude: 1.0,
            q_amplitude: 0.0,
            band: default_band(),
            a_amplitude_over_nu: false,
        }
    }
}

/// Gaussian white noise band-passed to blocks `[lo, hi]`, truncated, mean removed.
pub fn random_band_field(
    partition: &DyadicPartition,
    components: usize,
    band: [i32; 2],
    rng: &mut ChaCha8Rng,
) -> Result<SpectralField> {
    let grid = partition.grid();
    let [lo, hi] = band;
    if lo > hi || lo < partition.j_min() || hi > partition.j_max() {
        let j = if lo < partition.j_min() { lo } else { hi };
        return Err(FlowError::BlockOutOfRange { j, j_min: partition.j_min(), j_max: partition.j_max() });
    }
    let samples: Vec<f64> =
        (0..grid.len() * components).map(|_| StandardNormal.sample(rng)).collect();
    let noise = PhysicalField::new(grid, components, samples)?.transform();
    let mut weight = vec![0.0; grid.len()];
    for j in lo..=hi {
        for (w, p) in weight.iter_mut().zip(partition.block_weights(j)?) {
            *w += p;
        }
    }
    Ok(truncate(&noise.apply_multiplier(|i| weight[i])).without_mean())
}

/// Scales `f` so that `‖f‖_{Ḃ^s} = target`.
pub fn rescale_to(
    f: &SpectralField,
    partition: &DyadicPartition,
    s: f64,
    target: f64,
) -> Result<SpectralField> {
    if target == 0.0 {
        return Ok(SpectralField::zeros(f.grid(), f.components()));
    }
    let norm = partition.besov_norm(f, s).value;
    if !(norm > 0.0) {
        return Err(FlowError::UnreachableNorm(format!(
            "cannot reach norm {target} from a field with zero norm"
        )));
    }
    Ok(f.scale(target / norm))
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Density part with unit `Ḃ^{d/2}` norm (zero when the amplitude is zero).
fn unit_density(spec: &InitSpec, partition: &DyadicPartition) -> Result<SpectralField> {
    let s = partition.grid().dim() as f64 / 2.0;
    let raw = random_band_field(partition, 1, spec.band, &mut stream(spec.seed, 1))?;
    rescale_to(&raw, partition, s, 1.0)
}

/// `(a0, v0)` from `spec`; deterministic in `spec.seed`.
pub fn generate_initial_data(
    spec: &InitSpec,
    partition: &DyadicPartition,
) -> Result<(SpectralField, SpectralField)> {
    let grid = partition.grid();
    let dim = grid.dim();
    let s = dim as f64 / 2.0 - 1.0;
    let density = |amp: f64| -> Result<SpectralField> {
        if amp == 0.0 {
            Ok(SpectralField::zeros(grid, 1))
        } else {
            Ok(unit_density(spec, partition)?.scale(amp))
        }
    };
    match spec.kind {
        InitKind::TaylorGreen => {
            let mut v = taylor_green(grid, spec.v_amplitude);
            if spec.q_amplitude != 0.0 {
                let raw = random_band_field(partition, dim, spec.band, &mut stream(spec.seed, 0))?;
                let q = project_q(&raw)?;
                v.axpy(1.0, &rescale_to(&q, partition, s, spec.q_amplitude)?);
            }
            Ok((density(spec.a_amplitude)?, v))
        }
        InitKind::RandomBand | InitKind::RandomBandPlusDensity => {
            let raw = random_band_field(partition, dim, spec.band, &mut stream(spec.seed, 0))?;
            let v = rescale_to(&raw, partition, s, spec.v_amplitude)?;
            let a = if spec.kind == InitKind::RandomBand {
                SpectralField::zeros(grid, 1)
            } else {
                density(spec.a_amplitude)?
            };
            Ok((a, v))
        }
    }
}

fn default_mu() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    2.0
}

fn default_save_every() -> usize {
    10
}

fn default_ceiling() -> f64 {
    1e6
}

/// Sweep description, read from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_save_every")]
    pub save_every: usize,
    #[serde(default = "crate::stepping::stiff_default")]
    pub integrator: Integrator,
    /// Growth factor of the start-up ramp; the first step resolves `1/(ν_max k_max²)`.
    #[serde(default)]
    pub ramp_growth: Option<f64>,
    pub nu_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub init: InitSpec,
    pub output_dir: PathBuf,
    /// Constant used for the reported smallness and bound sides.
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_ceiling")]
    pub monitor_ceiling: f64,
}

fn default_c() -> f64 {
    1.0
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| FlowError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| FlowError::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu_values.is_empty() || self.seeds.is_empty() {
            return Err(FlowError::Config("nu_values and seeds must be non-empty".into()));
        }
        if self.nu_values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(FlowError::Config("nu_values must be strictly increasing".into()));
        }
        if self.nu_values.iter().any(|&nu| nu < self.mu) {
            return Err(FlowError::Config("every nu must satisfy nu >= mu".into()));
        }
        if !(self.mu > 0.0) {
            return Err(FlowError::Config("mu must be positive".into()));
        }
        Ok(())
    }

    /// Equivalent configuration with `μ = 1` and the `ν` values it maps the sweep to.
    fn normalized(&self) -> Result<(Self, Vec<f64>)> {
        let mut cfg = self.clone();
        let (_, _, t_end, length) = rescale_config(self.mu, 0.0, self.t_end, self.grid.length)?;
        cfg.mu = 1.0;
        cfg.t_end = t_end;
        cfg.dt = self.dt / self.mu;
        cfg.grid.length = length;
        let nus = self.nu_values.iter().map(|nu| nu / self.mu).collect();
        Ok((cfg, nus))
    }

    fn ramp(&self, grid: &Grid, nu_max: f64) -> Option<Ramp> {
        self.ramp_growth.map(|growth| {
            let k = grid.max_retained_wavenumber();
            Ramp { dt0: (0.1 / (nu_max * k * k)).min(self.dt), growth }
        })
    }

    pub fn ins_config(&self, grid: &Grid, nu_max: f64) -> InsConfig {
        InsConfig {
            grid: grid.spec(),
            mu: self.mu,
            dt: self.dt,
            t_end: self.t_end,
            save_every: self.save_every,
            integrator: self.integrator,
            ramp: self.ramp(grid, nu_max),
        }
    }

    pub fn cns_config(&self, grid: &Grid, nu: f64, nu_max: f64) -> CnsConfig {
        CnsConfig {
            grid: grid.spec(),
            mu: self.mu,
            lambda: nu - 2.0 * self.mu,
            gamma: self.gamma,
            dt: self.dt,
            t_end: self.t_end,
            save_every: self.save_every,
            integrator: self.integrator,
            ramp: self.ramp(grid, nu_max),
            implicit_acoustics: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub nu: f64,
    pub seed: u64,
    pub e: f64,
    pub xd: f64,
    pub yd: f64,
    pub zd: f64,
    pub wd: f64,
    pub vd: f64,
    /// `ok`, monitor reasons, or `failed: <error>`.
    pub flag: String,
    pub wall_s: f64,
}

impl SweepRow {
    pub fn is_flagged(&self) -> bool {
        self.flag != "ok"
    }

    pub fn failed(&self) -> bool {
        self.flag.starts_with("failed")
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{},{:.3}",
            self.nu,
            self.seed,
            self.e,
            self.xd,
            self.yd,
            self.zd,
            self.wd,
            self.vd,
            self.flag.replace(',', ";"),
            self.wall_s
        )
    }

    fn parse(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 10 {
            return None;
        }
        Some(Self {
            nu: f[0].parse().ok()?,
            seed: f[1].parse().ok()?,
            e: f[2].parse().ok()?,
            xd: f[3].parse().ok()?,
            yd: f[4].parse().ok()?,
            zd: f[5].parse().ok()?,
            wd: f[6].parse().ok()?,
            vd: f[7].parse().ok()?,
            flag: f[8].to_string(),
            wall_s: f[9].parse().ok()?,
        })
    }

    fn key(&self) -> (u64, u64) {
        (self.nu.to_bits(), self.seed)
    }
}

/// Condition diagnostics of one run, kept next to the CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowConditions {
    pub nu: f64,
    pub seed: u64,
    pub m: f64,
    pub data: DataNorms,
    pub smallness: SmallnessCheck,
    pub bound: BoundCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFit {
    pub seed: u64,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// 95% confidence interval of the averaged slope (Student t over seeds).
    pub slope_ci: [f64; 2],
    pub per_seed: Vec<SeedFit>,
}

#[derive(Clone, Debug, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub conditions: Vec<RowConditions>,
    pub fit: Option<RateFit>,
    pub fit_note: Option<String>,
}

impl SweepResult {
    pub fn completed(&self) -> bool {
        self.rows.iter().all(|r| !r.failed())
    }

    fn sort(&mut self) {
        self.rows.sort_by(|a, b| a.nu.total_cmp(&b.nu).then(a.seed.cmp(&b.seed)));
        self.conditions.sort_by(|a, b| a.nu.total_cmp(&b.nu).then(a.seed.cmp(&b.seed)));
    }
}

/// `(slope, intercept, r²)` of least squares on `(x, y)`.
fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Log-log fit of `E` against `ν` per seed, averaged over seeds.
pub fn fit_rate(rows: &[SweepRow]) -> Result<RateFit> {
    let mut by_seed: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    let mut below_floor = 0;
    for r in rows {
        if r.is_flagged() || !r.e.is_finite() {
            continue;
        }
        if r.e < NOISE_FLOOR {
            below_floor += 1;
            continue;
        }
        by_seed.entry(r.seed).or_default().push((r.nu.ln(), r.e.ln()));
    }
    let mut per_seed = Vec::new();
    for (seed, pts) in by_seed {
        let distinct: BTreeSet<u64> = pts.iter().map(|p| p.0.to_bits()).collect();
        if distinct.len() < 2 {
            continue;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        let (slope, intercept, r2) = least_squares(&x, &y);
        per_seed.push(SeedFit { seed, slope, intercept, r2, points: x.len() });
    }
    if per_seed.is_empty() {
        let why = if below_floor > 0 {
            "degenerate: E below noise floor".to_string()
        } else {
            "fewer than two usable nu values per seed".to_string()
        };
        return Err(FlowError::DegenerateFit(why));
    }
    let n = per_seed.len() as f64;
    let slope = per_seed.iter().map(|f| f.slope).sum::<f64>() / n;
    let intercept = per_seed.iter().map(|f| f.intercept).sum::<f64>() / n;
    let r2 = per_seed.iter().map(|f| f.r2).sum::<f64>() / n;
    let slope_ci = if per_seed.len() >= 2 {
        let var = per_seed.iter().map(|f| (f.slope - slope).powi(2)).sum::<f64>() / (n - 1.0);
        let t = StudentsT::new(0.0, 1.0, n - 1.0)
            .map_err(|e| FlowError::DegenerateFit(e.to_string()))?
            .inverse_cdf(0.975);
        let half = t * (var / n).sqrt();
        [slope - half, slope + half]
    } else {
        [slope, slope]
    };
    Ok(RateFit { slope, intercept, r2, slope_ci, per_seed })
}

fn read_existing(dir: &Path) -> Result<(Vec<SweepRow>, Vec<RowConditions>)> {
    let mut rows = Vec::new();
    let csv = dir.join("sweep.csv");
    if csv.exists() {
        for line in BufReader::new(File::open(&csv)?).lines().skip(1) {
            if let Some(r) = SweepRow::parse(&line?) {
                rows.push(r);
            }
        }
    }
    let mut conds = Vec::new();
    let jsonl = dir.join("conditions.jsonl");
    if jsonl.exists() {
        for line in BufReader::new(File::open(&jsonl)?).lines() {
            let line = line?;
            if let Ok(c) = serde_json::from_str::<RowConditions>(&line) {
                conds.push(c);
            }
        }
    }
    Ok((rows, conds))
}

/// Worker pool size: `CRITICALFLOW_THREADS` or the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("CRITICALFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

struct SeedData {
    a_unit: SpectralField,
    v0: SpectralField,
    reference: Arc<Trajectory<InsFrame>>,
    m: f64,
}

fn run_row(
    cfg: &ExperimentConfig,
    grid: &Grid,
    partition: &DyadicPartition,
    nu: f64,
    nu_max: f64,
    seed: u64,
    data: &SeedData,
) -> Result<(SweepRow, RowConditions)> {
    let start = Instant::now();
    let amp = if cfg.init.a_amplitude_over_nu { cfg.init.a_amplitude / nu } else { cfg.init.a_amplitude };
    let a0 = data.a_unit.scale(amp);
    let cns_cfg = cfg.cns_config(grid, nu, nu_max);
    let mut acc = FunctionalAccumulator::new(partition, nu, cfg.mu);
    let mut monitor = MonitorAccumulator::new();
    let frames = data.reference.frames();
    let mut index = 0;
    run_cns_with(&cns_cfg, &a0, &data.v0, |frame| {
        let reference = frames.get(index).ok_or_else(|| {
            FlowError::TimeGridMismatch("compressible run saved more frames than the reference".into())
        })?;
        index += 1;
        monitor.push(&frame, partition)?;
        acc.push(&PerturbationFrame::new(&frame, reference)?)
    })?;
    let report = acc.finish();
    let mon = monitor.finish(cfg.monitor_ceiling)?;
    let data_norms = DataNorms::measure(&truncate(&a0), &truncate(&data.v0), partition)?;
    let row = SweepRow {
        nu,
        seed,
        e: report.final_e(),
        xd: report.final_x(),
        yd: report.final_y(),
        zd: report.final_z(),
        wd: report.final_w(),
        vd: report.final_v(),
        flag: if mon.flagged { mon.reasons.join("; ") } else { "ok".into() },
        wall_s: start.elapsed().as_secs_f64(),
    };
    let conditions = RowConditions {
        nu,
        seed,
        m: data.m,
        data: data_norms,
        smallness: check_smallness(&data_norms, data.m, cfg.mu, nu, cfg.c),
        bound: check_theorem_bound(&report, &data_norms, data.m, cfg.c),
    };
    Ok((row, conditions))
}

fn failed_row(nu: f64, seed: u64, err: &FlowError, wall_s: f64) -> SweepRow {
    SweepRow {
        nu,
        seed,
        e: f64::NAN,
        xd: f64::NAN,
        yd: f64::NAN,
        zd: f64::NAN,
        wd: f64::NAN,
        vd: f64::NAN,
        flag: format!("failed: {err}"),
        wall_s,
    }
}

/// Runs every missing `(ν, seed)` pair, appending rows to `output_dir/sweep.csv` as they finish.
pub fn run_nu_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    let (cfg, nus) = config.normalized()?;
    let grid = cfg.grid.build()?;
    let partition = DyadicPartition::new(&grid);
    let nu_max = *nus.last().expect("validated non-empty");

    let (mut rows, mut conditions) = read_existing(dir)?;
    rows.retain(|r| !r.failed());
    let done: BTreeSet<(u64, u64)> = rows.iter().map(SweepRow::key).collect();
    conditions.retain(|c| done.contains(&(c.nu.to_bits(), c.seed)));
    let mut jobs = Vec::new();
    for &seed in &cfg.seeds {
        for (&nu_orig, &nu) in config.nu_values.iter().zip(&nus) {
            if !done.contains(&(nu_orig.to_bits(), seed)) {
                jobs.push((nu_orig, nu, seed));
            }
        }
    }
    rewrite_rows(dir, &rows, &conditions)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| FlowError::Config(e.to_string()))?;
    let needed: BTreeSet<u64> = jobs.iter().map(|j| j.2).collect();
    let seed_data: BTreeMap<u64, Result<SeedData>> = pool.install(|| {
        needed
            .par_iter()
            .map(|&seed| {
                let build = || -> Result<SeedData> {
                    let mut init = cfg.init.clone();
                    init.seed = seed;
                    init.a_amplitude = 1.0;
                    let (a_unit, v0) = generate_initial_data(&init, &partition)?;
                    let v0 = truncate(&v0);
                    let reference =
                        run_ins(&cfg.ins_config(&grid, nu_max), &project_p(&v0)?)?;
                    let m = crate::ins::compute_m(&reference, &partition)?;
                    Ok(SeedData { a_unit, v0, reference: Arc::new(reference), m })
                };
                (seed, build())
            })
            .collect()
    });

    let (tx, rx) = mpsc::channel::<(SweepRow, Option<RowConditions>)>();
    let csv_path = dir.join("sweep.csv");
    let jsonl_path = dir.join("conditions.jsonl");
    let writer = std::thread::spawn(move || -> Result<Vec<(SweepRow, Option<RowConditions>)>> {
        let mut csv = OpenOptions::new().append(true).open(&csv_path)?;
        let mut jsonl = OpenOptions::new().create(true).append(true).open(&jsonl_path)?;
        let mut received = Vec::new();
        for (row, cond) in rx {
            writeln!(csv, "{}", row.csv_line())?;
            csv.flush()?;
            if let Some(c) = &cond {
                writeln!(jsonl, "{}", serde_json::to_string(c)?)?;
                jsonl.flush()?;
            }
            received.push((row, cond));
        }
        Ok(received)
    });
    pool.install(|| {
        jobs.par_iter().for_each_with(tx, |tx, &(nu_orig, nu, seed)| {
            let start = Instant::now();
            let outcome = match &seed_data[&seed] {
                Ok(data) => run_row(&cfg, &grid, &partition, nu, nu_max, seed, data),
                Err(e) => Err(FlowError::Config(format!("reference run failed: {e}"))),
            };
            let msg = match outcome {
                Ok((mut row, mut cond)) => {
                    row.nu = nu_orig;
                    cond.nu = nu_orig;
                    (row, Some(cond))
                }
                Err(e) => (failed_row(nu_orig, seed, &e, start.elapsed().as_secs_f64()), None),
            };
            let _ = tx.send(msg);
        });
    });
    let received = writer.join().map_err(|_| FlowError::Config("writer thread panicked".into()))??;
    for (row, cond) in received {
        rows.push(row);
        conditions.extend(cond);
    }
    let mut result = SweepResult { rows, conditions, fit: None, fit_note: None };
    result.sort();
    match fit_rate(&result.rows) {
        Ok(fit) => result.fit = Some(fit),
        Err(e) => result.fit_note = Some(e.to_string()),
    }
    emit_outputs(&result, dir)?;
    Ok(result)
}

fn rewrite_rows(dir: &Path, rows: &[SweepRow], conditions: &[RowConditions]) -> Result<()> {
    let tmp = dir.join("sweep.csv.tmp");
    {
        let mut f = File::create(&tmp)?;
        writeln!(f, "{SWEEP_HEADER}")?;
        for r in rows {
            writeln!(f, "{}", r.csv_line())?;
        }
    }
    fs::rename(&tmp, dir.join("sweep.csv"))?;
    let tmp = dir.join("conditions.jsonl.tmp");
    {
        let mut f = File::create(&tmp)?;
        for c in conditions {
            writeln!(f, "{}", serde_json::to_string(c)?)?;
        }
    }
    fs::rename(&tmp, dir.join("conditions.jsonl"))?;
    Ok(())
}

fn plot_script(result: &SweepResult) -> String {
    let usable: Vec<&SweepRow> =
        result.rows.iter().filter(|r| !r.failed() && r.e.is_finite() && r.e > 0.0).collect();
    let anchor = usable
        .iter()
        .map(|r| r.nu)
        .fold(f64::INFINITY, f64::min);
    let anchor_e: Vec<f64> = usable.iter().filter(|r| r.nu == anchor).map(|r| r.e).collect();
    let c0 = if anchor_e.is_empty() {
        1.0
    } else {
        let mean_log = anchor_e.iter().map(|e| e.ln()).sum::<f64>() / anchor_e.len() as f64;
        mean_log.exp() * anchor.sqrt()
    };
    let mut s = String::new();
    s.push_str("# log-log plot of E against nu with a reference line of slope -1/2\n");
    s.push_str("set terminal pngcairo size 800,600\n");
    s.push_str("set output 'sweep.png'\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set logscale xy\n");
    s.push_str("set xlabel 'nu'\n");
    s.push_str("set ylabel 'E'\n");
    s.push_str("set key top right\n");
    s.push_str(&format!("ref(x) = {c0:e} * x**(-0.5)\n"));
    if let Some(fit) = &result.fit {
        s.push_str(&format!("fit_line(x) = exp({:e}) * x**({:e})\n", fit.intercept, fit.slope));
        s.push_str(
            "plot 'sweep.csv' every ::1 using 1:3 with points pt 7 title 'E', \\\n     \
             ref(x) with lines dt 2 title 'slope -1/2', \\\n     \
             fit_line(x) with lines title 'fit'\n",
        );
    } else {
        s.push_str(
            "plot 'sweep.csv' every ::1 using 1:3 with points pt 7 title 'E', \\\n     \
             ref(x) with lines dt 2 title 'slope -1/2'\n",
        );
    }
    s
}

/// Writes `sweep.csv`, `fit.json` (when a fit exists), `conditions.json` and `plot.gp`.
pub fn emit_outputs(result: &SweepResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    rewrite_rows(dir, &result.rows, &result.conditions)?;
    let fit_path = dir.join("fit.json");
    match &result.fit {
        Some(fit) => fs::write(&fit_path, serde_json::to_string_pretty(fit)?)?,
        None => {
            if fit_path.exists() {
                fs::remove_file(&fit_path)?;
            }
        }
    }
    fs::write(dir.join("conditions.json"), serde_json::to_string_pretty(&result.conditions)?)?;
    fs::write(dir.join("plot.gp"), plot_script(result))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(nu: f64, seed: u64, e: f64) -> SweepRow {
        SweepRow {
            nu,
            seed,
            e,
            xd: 0.0,
            yd: 0.0,
            zd: 0.0,
            wd: 0.0,
            vd: 0.0,
            flag: "ok".into(),
            wall_s: 0.0,
        }
    }

    #[test]
    fn exact_power_laws() {
        let rows: Vec<SweepRow> =
            [10.0, 100.0, 1000.0].iter().map(|&nu: &f64| row(nu, 1, nu.powf(-0.5))).collect();
        let fit = fit_rate(&rows).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        let rows: Vec<SweepRow> =
            [10.0, 100.0].iter().map(|&nu: &f64| row(nu, 2, 3.0 / nu)).collect();
        let fit = fit_rate(&rows).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_fits() {
        assert!(fit_rate(&[row(10.0, 1, 0.1)]).is_err());
        let tiny = [row(10.0, 1, 1e-10), row(100.0, 1, 1e-11)];
        match fit_rate(&tiny) {
            Err(FlowError::DegenerateFit(msg)) => assert!(msg.contains("noise floor")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_row_round_trip() {
        let r = row(100.0, 3, 0.25);
        assert_eq!(SweepRow::parse(&r.csv_line()).unwrap(), r);
    }

    #[test]
    fn initial_data_is_deterministic_and_normalized() {
        let g = Grid::periodic(2, 32).unwrap();
        let p = DyadicPartition::new(&g);
        let spec = InitSpec {
            kind: InitKind::RandomBandPlusDensity,
            seed: 7,
            a_amplitude: 0.2,
            v_amplitude: 1.0,
            ..InitSpec::default()
        };
        let (a1, v1) = generate_initial_data(&spec, &p).unwrap();
        let (a2, v2) = generate_initial_data(&spec, &p).unwrap();
        assert_eq!(a1.coeffs(), a2.coeffs());
        assert_eq!(v1.coeffs(), v2.coeffs());
        assert!((p.besov_norm(&v1, 0.0).value - 1.0).abs() < 1e-10);
        assert!((p.besov_norm(&a1, 1.0).value - 0.2).abs() < 1e-10);
        assert!(a1.mean()[0].abs() < 1e-15);
        assert!(project_q(&v1).unwrap().max_coeff() > 0.0);
        assert!(project_p(&v1).unwrap().max_coeff() > 0.0);
        let zero = InitSpec { v_amplitude: 0.0, ..spec };
        let (a, v) = generate_initial_data(&InitSpec { a_amplitude: 0.0, ..zero }, &p).unwrap();
        assert_eq!(a.max_coeff() + v.max_coeff(), 0.0);
    }

    #[test]
    fn config_validation() {
        let text = r#"
            dt = 0.01
            t_end = 0.1
            nu_values = [10.0, 5.0]
            seeds = [1]
            output_dir = "out"
            [grid]
            dim = 2
            n = 16
            [init]
            kind = "taylor-green"
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert!(cfg.validate().is_err());
        assert_eq!(cfg.mu, 1.0);
        assert!((cfg.grid.length - 2.0 * std::f64::consts::PI).abs() < 1e-15);
    }
}
