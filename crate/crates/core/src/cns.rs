//! Barotropic compressible Navier-Stokes in the perturbation variables `a = ϱ - 1` and `v`:
//!
//! ```text
//! a_t + div v = -div(a v)
//! v_t - μΔv - (λ+μ)∇div v + ∇a = -v·∇v - q (μΔv + (λ+μ)∇div v) - (h - 1)∇a
//! ```
//!
//! with `q = a/(1+a)` and `h = P'(1+a)/(1+a) = (1+a)^{γ-2}` for `P(ϱ) = ϱ^γ/γ`.
//! The left-hand side is integrated exactly (Lawson RK4) or implicitly (IMEX-BDF2)
//! mode by mode; the acoustic coupling can be moved to the explicit side.
//!
//! Internally the state is one stacked field with components `[a, v_1, .., v_d]`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::field::{PhysicalField, SpectralField};
use crate::grid::{Grid, GridSpec};
use crate::littlewood_paley::DyadicPartition;
use crate::spectral::{
    advect, dealiased_product, derivative, divergence, gradient, laplacian, truncate,
};
use crate::stepping::{imex_bdf2, lawson_rk4, Bdf2History, Integrator, LinearPart};
use crate::trajectory::{cumulative_trapezoid, Ramp, TimeSchedule, Timed, Trajectory};

/// Density threshold below which the monitor flags a run.
pub const VACUUM_THRESHOLD: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViscosityParams {
    pub mu: f64,
    pub lambda: f64,
}

impl ViscosityParams {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        let p = Self { mu, lambda };
        p.validate()?;
        Ok(p)
    }

    /// Builds the parameters from `μ` and `ν = λ + 2μ`.
    pub fn from_nu(mu: f64, nu: f64) -> Result<Self> {
        Self::new(mu, nu - 2.0 * mu)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.nu() > 0.0) {
            return Err(FlowError::InvalidParameter(format!(
                "need mu > 0 and lambda + 2 mu > 0, got mu = {}, lambda = {}",
                self.mu, self.lambda
            )));
        }
        Ok(())
    }

    pub fn nu(&self) -> f64 {
        self.lambda + 2.0 * self.mu
    }

    /// `μ <= ν`, the regime of the large-volume-viscosity results.
    pub fn in_theorem_regime(&self) -> bool {
        self.mu <= self.nu()
    }
}

/// `P(ϱ) = ϱ^γ/γ`, so that `P'(1) = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureLaw {
    pub gamma: f64,
}

impl Default for PressureLaw {
    fn default() -> Self {
        Self { gamma: 2.0 }
    }
}

impl PressureLaw {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(FlowError::InvalidParameter(format!("gamma must be >= 1, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn pressure(&self, rho: f64) -> f64 {
        rho.powf(self.gamma) / self.gamma
    }

    pub fn dpressure(&self, rho: f64) -> f64 {
        rho.powf(self.gamma - 1.0)
    }

    /// `k(a) = P'(1+a) - P'(1)`.
    pub fn kappa(&self, a: f64) -> f64 {
        self.dpressure(1.0 + a) - 1.0
    }
}

#[derive(Clone, Debug)]
pub struct CnsState {
    pub t: f64,
    pub a: SpectralField,
    pub v: SpectralField,
    pub params: ViscosityParams,
    pub law: PressureLaw,
}

impl CnsState {
    pub fn new(
        t: f64,
        a: SpectralField,
        v: SpectralField,
        params: ViscosityParams,
        law: PressureLaw,
    ) -> Result<Self> {
        a.ensure_same_grid(&v)?;
        if !a.is_scalar() || v.components() != v.grid().dim() {
            return Err(FlowError::ComponentMismatch("need scalar a and vector v".into()));
        }
        params.validate()?;
        Ok(Self { t, a, v, params, law })
    }

    fn stacked(&self) -> SpectralField {
        let mut parts = vec![self.a.clone()];
        parts.extend((0..self.v.components()).map(|c| self.v.extract(c)));
        SpectralField::stack(&parts).expect("same grid by construction")
    }

    fn with_stacked(&self, t: f64, u: &SpectralField) -> Self {
        let (a, v) = unstack(u);
        Self { t, a, v, params: self.params, law: self.law }
    }
}

fn unstack(u: &SpectralField) -> (SpectralField, SpectralField) {
    let a = u.extract(0);
    let parts: Vec<SpectralField> = (1..u.components()).map(|c| u.extract(c)).collect();
    (a, SpectralField::stack(&parts).expect("same grid by construction"))
}

/// Truncated physical density perturbation, with the vacuum check.
fn density_samples(a: &SpectralField) -> Result<PhysicalField> {
    let pa = truncate(a).to_physical();
    let min = pa.min();
    if !(1.0 + min > 0.0) {
        return Err(FlowError::Vacuum { min_density: 1.0 + min });
    }
    Ok(pa)
}

fn pointwise(grid: &Grid, pa: &PhysicalField, f: impl Fn(f64) -> f64) -> Result<SpectralField> {
    let samples = pa.samples().iter().map(|&x| f(x)).collect();
    Ok(truncate(&PhysicalField::new(grid, 1, samples)?.transform()))
}

/// `k(a) = (1+a)^{γ-1} - 1` evaluated on the grid and truncated.
pub fn pressure_kappa(law: &PressureLaw, a: &SpectralField) -> Result<SpectralField> {
    let pa = density_samples(a)?;
    pointwise(a.grid(), &pa, |x| law.kappa(x))
}

/// `μΔv + (λ+μ)∇div v`.
pub fn lame_operator(v: &SpectralField, params: &ViscosityParams) -> Result<SpectralField> {
    let mut out = laplacian(v).scale(params.mu);
    out.axpy(params.lambda + params.mu, &gradient(&divergence(v)?)?);
    Ok(out)
}

/// Explicit part of the right-hand side; `acoustics` adds `(-div v, -∇a)`.
fn nonlinear_terms(
    a: &SpectralField,
    v: &SpectralField,
    params: &ViscosityParams,
    law: &PressureLaw,
    acoustics: bool,
) -> Result<(SpectralField, SpectralField)> {
    let grid = a.grid();
    let pa = density_samples(a)?;
    let mut da = divergence(&dealiased_product(a, v)?)?.scale(-1.0);
    let mut dv = advect(v, v)?.scale(-1.0);
    let q = pointwise(grid, &pa, |x| x / (1.0 + x))?;
    dv.axpy(-1.0, &dealiased_product(&q, &lame_operator(v, params)?)?);
    let grad_a = gradient(a)?;
    if law.gamma != 2.0 {
        let g = law.gamma;
        let hm1 = pointwise(grid, &pa, |x| (1.0 + x).powf(g - 2.0) - 1.0)?;
        dv.axpy(-1.0, &dealiased_product(&hm1, &grad_a)?);
    }
    if acoustics {
        da.axpy(-1.0, &divergence(v)?);
        dv.axpy(-1.0, &grad_a);
    }
    Ok((da, dv))
}

/// `(a_t, v_t)` of the full system.
pub fn cns_rhs(state: &CnsState) -> Result<(SpectralField, SpectralField)> {
    let (da, mut dv) = nonlinear_terms(&state.a, &state.v, &state.params, &state.law, true)?;
    dv.axpy(1.0, &lame_operator(&state.v, &state.params)?);
    Ok((da, dv))
}

/// Stiff linear part per Fourier mode.
///
/// With `ξ̂ = ξ/|ξ|`, `w = ξ̂·v̂` and `ω = -i w`, the pair `(â, ω)` obeys
/// `d/dt (â, ω) = B (â, ω)` with `B = [[0, k], [-k, -νk²]]` (acoustics implicit) or
/// `B = [[0, 0], [0, -νk²]]`, and the solenoidal part of `v̂` decays like `e^{-μk²t}`.
#[derive(Clone, Debug)]
pub struct CnsLinear {
    grid: Grid,
    mu: f64,
    nu: f64,
    acoustics: bool,
}

impl CnsLinear {
    pub fn new(grid: &Grid, params: &ViscosityParams, acoustics: bool) -> Self {
        Self { grid: grid.clone(), mu: params.mu, nu: params.nu(), acoustics }
    }

    fn coupling(&self, k: f64) -> f64 {
        if self.acoustics {
            k
        } else {
            0.0
        }
    }

    /// Applies a per-mode map `(â, ω, shear factor)` to the stacked field.
    fn map_modes(
        &self,
        u: &SpectralField,
        f: impl Fn(f64, Complex64, Complex64) -> (Complex64, Complex64, f64),
    ) -> SpectralField {
        let grid = &self.grid;
        let dim = grid.dim();
        let len = grid.len();
        let k_norm = grid.k_norm();
        let mut out = u.clone();
        let coeffs = out.coeffs_mut();
        let mut unit = [0.0; 3];
        for idx in 1..len {
            let k = k_norm[idx];
            for (axis, e) in unit.iter_mut().enumerate().take(dim) {
                *e = grid.wavenumber(idx, axis) / k;
            }
            let a = coeffs[idx];
            let mut w = Complex64::new(0.0, 0.0);
            for (axis, e) in unit.iter().enumerate().take(dim) {
                w += coeffs[(axis + 1) * len + idx] * e;
            }
            let omega = Complex64::new(0.0, -1.0) * w;
            let (a_new, omega_new, shear) = f(k, a, omega);
            let w_new = Complex64::new(0.0, 1.0) * omega_new;
            coeffs[idx] = a_new;
            for (axis, e) in unit.iter().enumerate().take(dim) {
                let c = &mut coeffs[(axis + 1) * len + idx];
                *c = (*c - w * e) * shear + w_new * e;
            }
        }
        out
    }
}

/// `e^{Bt}` for `B = [[0, b], [-b, -νk²]]`, returned row-major.
pub fn acoustic_exponential(k: f64, b: f64, nu: f64, t: f64) -> [[f64; 2]; 2] {
    let tau = -0.5 * nu * k * k;
    let delta_sq = tau * tau - b * b;
    let arg = delta_sq * t * t;
    // e^{Bt} = c I + s (B - τI) with c = e^{τt} cosh(δt), s = e^{τt} sinh(δt)/δ
    let (c, s) = if arg.abs() < 1e-6 {
        let decay = (tau * t).exp();
        (
            decay * (1.0 + arg / 2.0 + arg * arg / 24.0),
            decay * t * (1.0 + arg / 6.0 + arg * arg / 120.0),
        )
    } else if delta_sq > 0.0 {
        let delta = delta_sq.sqrt();
        let slow = b * b / (tau - delta);
        let fast = tau - delta;
        let (es, ef) = ((slow * t).exp(), (fast * t).exp());
        (0.5 * (es + ef), (es - ef) / (2.0 * delta))
    } else {
        let freq = (-delta_sq).sqrt();
        let decay = (tau * t).exp();
        (decay * (freq * t).cos(), decay * (freq * t).sin() / freq)
    };
    [[c - s * tau, s * b], [-s * b, c + s * (-nu * k * k - tau)]]
}

impl LinearPart for CnsLinear {
    fn propagate(&self, u: &SpectralField, h: f64) -> SpectralField {
        self.map_modes(u, |k, a, omega| {
            let m = acoustic_exponential(k, self.coupling(k), self.nu, h);
            (
                a * m[0][0] + omega * m[0][1],
                a * m[1][0] + omega * m[1][1],
                (-self.mu * k * k * h).exp(),
            )
        })
    }

    fn solve_shifted(&self, r: &SpectralField, alpha: f64, h: f64) -> SpectralField {
        let mut out = self.map_modes(r, |k, a, omega| {
            let b = self.coupling(k);
            let d = alpha + h * self.nu * k * k;
            let det = alpha * d + h * h * b * b;
            // (αI - hB)^{-1} = [[d, hb], [-hb, α]] / det
            (
                (a * d + omega * (h * b)) / det,
                (omega * alpha - a * (h * b)) / det,
                1.0 / (alpha + h * self.mu * k * k),
            )
        });
        for c in 0..out.components() {
            out.component_mut(c)[0] /= alpha;
        }
        out
    }
}

fn default_save_every() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnsConfig {
    pub grid: GridSpec,
    pub mu: f64,
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
}

fn default_gamma() -> f64 {
    2.0
}

impl CnsConfig {
    pub fn params(&self) -> Result<ViscosityParams> {
        ViscosityParams::new(self.mu, self.lambda)
    }

    pub fn law(&self) -> Result<PressureLaw> {
        PressureLaw::new(self.gamma)
    }

    pub fn schedule(&self) -> Result<TimeSchedule> {
        TimeSchedule::new(self.dt, self.t_end, self.save_every, self.ramp)
    }
}

/// Largest stable step: acoustic CFL and the explicit `q ν Δ` bound.
pub fn cns_cfl_limit(state: &CnsState) -> Result<f64> {
    let grid = state.a.grid();
    let pa = density_samples(&state.a)?;
    let vmax = truncate(&state.v).to_physical().magnitude().into_iter().fold(0.0, f64::max);
    let rho_max = 1.0 + pa.max();
    let sound = state.law.dpressure(rho_max).sqrt();
    let mut limit = 0.5 * grid.spacing() / (vmax + sound);
    let qmax = pa.samples().iter().map(|&x| (x / (1.0 + x)).abs()).fold(0.0, f64::max);
    let kmax = grid.max_retained_wavenumber();
    if qmax > 0.0 {
        limit = limit.min(0.5 / (qmax * state.params.nu() * kmax * kmax));
    }
    Ok(limit)
}

#[derive(Clone, Debug)]
pub struct CnsStepper {
    integrator: Integrator,
    linear: CnsLinear,
    history: Option<Bdf2History>,
}

impl CnsStepper {
    pub fn new(grid: &Grid, params: &ViscosityParams, integrator: Integrator, acoustics: bool) -> Self {
        Self { integrator, linear: CnsLinear::new(grid, params, acoustics), history: None }
    }

    /// Advances without the CFL check (used by convergence studies).
    pub fn step_unchecked(&mut self, state: &CnsState, dt: f64) -> Result<CnsState> {
        let explicit_acoustics = !self.linear.acoustics;
        let (params, law) = (state.params, state.law);
        let nl = |u: &SpectralField| -> Result<SpectralField> {
            let (a, v) = unstack(u);
            let (da, dv) = nonlinear_terms(&a, &v, &params, &law, explicit_acoustics)?;
            let mut parts = vec![da];
            parts.extend((0..dv.components()).map(|c| dv.extract(c)));
            SpectralField::stack(&parts)
        };
        let u = state.stacked();
        let next = match self.integrator {
            Integrator::IfRk4 => lawson_rk4(&self.linear, &u, dt, nl)?,
            Integrator::ImexBdf2 => imex_bdf2(&self.linear, &u, dt, &mut self.history, nl)?,
        };
        let out = state.with_stacked(state.t + dt, &next);
        density_samples(&out.a)?;
        Ok(out)
    }

    pub fn step(&mut self, state: &CnsState, dt: f64) -> Result<CnsState> {
        let limit = cns_cfl_limit(state)?;
        if dt > limit {
            return Err(FlowError::Cfl { dt, suggested: limit });
        }
        self.step_unchecked(state, dt)
    }
}

/// One Lawson RK4 step with implicit acoustics, CFL and vacuum checks.
pub fn cns_step(state: &CnsState, dt: f64) -> Result<CnsState> {
    CnsStepper::new(state.a.grid(), &state.params, Integrator::IfRk4, true).step(state, dt)
}

#[derive(Clone, Debug)]
pub struct CnsFrame {
    pub t: f64,
    pub a: SpectralField,
    pub v: SpectralField,
    pub a_t: SpectralField,
    pub v_t: SpectralField,
}

impl Timed for CnsFrame {
    fn time(&self) -> f64 {
        self.t
    }
}

impl CnsFrame {
    pub fn from_state(state: &CnsState) -> Result<Self> {
        let (a_t, v_t) = cns_rhs(state)?;
        Ok(Self { t: state.t, a: state.a.clone(), v: state.v.clone(), a_t, v_t })
    }
}

/// Runs from the truncated `(a0, v0)`, passing every saved frame to `observer`.
pub fn run_cns_with(
    config: &CnsConfig,
    a0: &SpectralField,
    v0: &SpectralField,
    mut observer: impl FnMut(CnsFrame) -> Result<()>,
) -> Result<()> {
    let schedule = config.schedule()?;
    let grid = config.grid.build()?;
    if *a0.grid() != grid {
        return Err(FlowError::GridMismatch);
    }
    let params = config.params()?;
    let mut state = CnsState::new(0.0, truncate(a0), truncate(v0), params, config.law()?)?;
    let mut stepper =
        CnsStepper::new(&grid, &params, config.integrator, config.implicit_acoustics);
    observer(CnsFrame::from_state(&state)?)?;
    for step in schedule.steps() {
        state = stepper.step(&state, step.h)?;
        state.t = step.t0 + step.h;
        if step.save {
            observer(CnsFrame::from_state(&state)?)?;
        }
    }
    Ok(())
}

pub fn run_cns(
    config: &CnsConfig,
    a0: &SpectralField,
    v0: &SpectralField,
) -> Result<Trajectory<CnsFrame>> {
    let mut traj = Trajectory::new();
    run_cns_with(config, a0, v0, |f| traj.push(f))?;
    Ok(traj)
}

/// Normalized configuration `(μ, λ, T, L) -> (1, λ/μ, T/μ, L/μ)` of the change of variables
/// `(ϱ̃, ṽ)(t, x) = (ϱ, v)(μt, μx)`.
pub fn rescale_config(mu: f64, lambda: f64, t_end: f64, length: f64) -> Result<(f64, f64, f64, f64)> {
    if !(mu > 0.0) {
        return Err(FlowError::InvalidParameter(format!("mu must be positive, got {mu}")));
    }
    Ok((1.0, lambda / mu, t_end / mu, length / mu))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorReport {
    /// `∫_0^T ‖∇v‖_{L∞} dt`.
    pub grad_v_integral: f64,
    /// `sup_t ‖a‖_{Ḃ^{d/2}}`.
    pub a_critical_sup: f64,
    /// `inf ϱ` over grid points and saved times.
    pub inf_density: f64,
    pub flagged: bool,
    pub reasons: Vec<String>,
}

/// Pointwise maximum of the Frobenius norm of `∇v`.
pub fn max_velocity_gradient(v: &SpectralField) -> Result<f64> {
    let dim = v.grid().dim();
    let len = v.grid().len();
    let mut sq = vec![0.0; len];
    for c in 0..v.components() {
        let vc = v.extract(c);
        for axis in 0..dim {
            let d = derivative(&vc, axis, 1)?.to_physical();
            sq.iter_mut().zip(d.samples()).for_each(|(s, x)| *s += x * x);
        }
    }
    Ok(sq.into_iter().fold(0.0, f64::max).sqrt())
}

/// Streaming form of [`continuation_monitor`].
#[derive(Clone, Debug, Default)]
pub struct MonitorAccumulator {
    times: Vec<f64>,
    grads: Vec<f64>,
    a_sup: f64,
    inf_density: f64,
}

impl MonitorAccumulator {
    pub fn new() -> Self {
        Self { inf_density: f64::INFINITY, ..Self::default() }
    }

    pub fn push(&mut self, frame: &CnsFrame, partition: &DyadicPartition) -> Result<()> {
        let s = partition.grid().dim() as f64 / 2.0;
        self.times.push(frame.t);
        self.grads.push(max_velocity_gradient(&frame.v)?);
        self.a_sup = self.a_sup.max(partition.besov_norm(&frame.a, s).value);
        self.inf_density = self.inf_density.min(1.0 + frame.a.to_physical().min());
        Ok(())
    }

    pub fn finish(&self, ceiling: f64) -> Result<MonitorReport> {
        if self.times.is_empty() {
            return Err(FlowError::EmptyTrajectory);
        }
        let grad_v_integral =
            cumulative_trapezoid(&self.times, &self.grads).last().copied().unwrap_or(0.0);
        let (a_sup, inf_density) = (self.a_sup, self.inf_density);
        let mut reasons = Vec::new();
        if inf_density <= VACUUM_THRESHOLD {
            reasons.push(format!("inf density {inf_density:.3e} <= {VACUUM_THRESHOLD}"));
        }
        if !(grad_v_integral <= ceiling) {
            reasons.push(format!("gradient integral {grad_v_integral:.3e} above ceiling"));
        }
        if !(a_sup <= ceiling) {
            reasons.push(format!("density norm {a_sup:.3e} above ceiling"));
        }
        Ok(MonitorReport {
            grad_v_integral,
            a_critical_sup: a_sup,
            inf_density,
            flagged: !reasons.is_empty(),
            reasons,
        })
    }
}

/// `∫‖∇v‖_{L∞}`, `sup ‖a‖_{Ḃ^{d/2}}` and `inf ϱ`, flagged when `inf ϱ <= 0.01`
/// or a norm exceeds `ceiling`.
pub fn continuation_monitor(
    traj: &Trajectory<CnsFrame>,
    partition: &DyadicPartition,
    ceiling: f64,
) -> Result<MonitorReport> {
    let mut acc = MonitorAccumulator::new();
    for f in traj.frames() {
        acc.push(f, partition)?;
    }
    acc.finish(ceiling)
}
