//! Incompressible Navier-Stokes, `V_t + P(V·∇V) = μΔV` with `div V = 0`.
//!
//! The pressure never appears: the transport term is projected onto divergence-free
//! fields and the viscous term is handled exactly (Lawson RK4) or implicitly (IMEX-BDF2).

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::field::SpectralField;
use crate::functionals::constant_for_bound;
use crate::grid::{Grid, GridSpec};
use crate::helmholtz::project_p;
use crate::littlewood_paley::DyadicPartition;
use crate::spectral::{advect, laplacian, truncate};
use crate::stepping::{imex_bdf2, lawson_rk4, Bdf2History, Integrator, LinearPart};
use crate::trajectory::{
    cumulative_hermite, cumulative_trapezoid, running_max, Ramp, TimeSchedule, Timed, Trajectory,
};

fn default_save_every() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsConfig {
    pub grid: GridSpec,
    pub mu: f64,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_save_every")]
    pub save_every: usize,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default)]
    pub ramp: Option<Ramp>,
}

impl InsConfig {
    pub fn schedule(&self) -> Result<TimeSchedule> {
        if !(self.mu > 0.0) {
            return Err(FlowError::InvalidParameter(format!("mu must be positive, got {}", self.mu)));
        }
        TimeSchedule::new(self.dt, self.t_end, self.save_every, self.ramp)
    }
}

#[derive(Clone, Debug)]
pub struct InsState {
    pub t: f64,
    pub velocity: SpectralField,
    pub mu: f64,
}

impl InsState {
    pub fn new(t: f64, velocity: SpectralField, mu: f64) -> Result<Self> {
        if velocity.components() != velocity.grid().dim() {
            return Err(FlowError::ComponentMismatch("velocity must be a vector field".into()));
        }
        if !(mu > 0.0) {
            return Err(FlowError::InvalidParameter(format!("mu must be positive, got {mu}")));
        }
        Ok(Self { t, velocity, mu })
    }
}

/// `L = c Δ` applied componentwise.
#[derive(Clone, Debug)]
pub struct Diffusion {
    grid: Grid,
    coeff: f64,
}

impl Diffusion {
    pub fn new(grid: &Grid, coeff: f64) -> Self {
        Self { grid: grid.clone(), coeff }
    }
}

impl LinearPart for Diffusion {
    fn propagate(&self, u: &SpectralField, h: f64) -> SpectralField {
        let k_sq = self.grid.k_sq();
        let c = self.coeff * h;
        u.apply_multiplier(|idx| (-c * k_sq[idx]).exp())
    }

    fn solve_shifted(&self, r: &SpectralField, alpha: f64, h: f64) -> SpectralField {
        let k_sq = self.grid.k_sq();
        let c = self.coeff * h;
        r.apply_multiplier(|idx| 1.0 / (alpha + c * k_sq[idx]))
    }
}

/// `-P(V·∇V)`.
pub fn ins_nonlinear(velocity: &SpectralField) -> Result<SpectralField> {
    Ok(project_p(&advect(velocity, velocity)?)?.scale(-1.0))
}

/// `V_t = P(-V·∇V) + μΔV`.
pub fn ins_rhs(state: &InsState) -> Result<SpectralField> {
    let mut rhs = ins_nonlinear(&state.velocity)?;
    rhs.axpy(state.mu, &laplacian(&state.velocity));
    Ok(rhs)
}

/// Largest step allowed by `dt <= 0.5 (length/n) / max|V|`.
pub fn ins_cfl_limit(velocity: &SpectralField) -> f64 {
    let vmax = velocity.to_physical().magnitude().into_iter().fold(0.0, f64::max);
    if vmax == 0.0 {
        f64::INFINITY
    } else {
        0.5 * velocity.grid().spacing() / vmax
    }
}

fn check_cfl(limit: f64, dt: f64) -> Result<()> {
    if dt > limit {
        return Err(FlowError::Cfl { dt, suggested: limit });
    }
    Ok(())
}

/// Time stepper owning the multistep history.
#[derive(Clone, Debug)]
pub struct InsStepper {
    integrator: Integrator,
    diffusion: Diffusion,
    history: Option<Bdf2History>,
}

impl InsStepper {
    pub fn new(grid: &Grid, mu: f64, integrator: Integrator) -> Self {
        Self { integrator, diffusion: Diffusion::new(grid, mu), history: None }
    }

    pub fn step(&mut self, state: &InsState, dt: f64) -> Result<InsState> {
        check_cfl(ins_cfl_limit(&state.velocity), dt)?;
        let v = &state.velocity;
        let next = match self.integrator {
            Integrator::IfRk4 => lawson_rk4(&self.diffusion, v, dt, ins_nonlinear)?,
            Integrator::ImexBdf2 => {
                imex_bdf2(&self.diffusion, v, dt, &mut self.history, ins_nonlinear)?
            }
        };
        Ok(InsState { t: state.t + dt, velocity: project_p(&next)?, mu: state.mu })
    }
}

/// One Lawson RK4 step with the CFL check.
pub fn ins_step(state: &InsState, dt: f64) -> Result<InsState> {
    InsStepper::new(state.velocity.grid(), state.mu, Integrator::IfRk4).step(state, dt)
}

/// Saved state together with its time derivative from [`ins_rhs`].
#[derive(Clone, Debug)]
pub struct InsFrame {
    pub t: f64,
    pub velocity: SpectralField,
    pub velocity_t: SpectralField,
}

impl Timed for InsFrame {
    fn time(&self) -> f64 {
        self.t
    }
}

impl InsFrame {
    pub fn from_state(state: &InsState) -> Result<Self> {
        Ok(Self { t: state.t, velocity: state.velocity.clone(), velocity_t: ins_rhs(state)? })
    }
}

/// Runs the solver from the projected, truncated `v0`, passing every saved frame to `observer`.
pub fn run_ins_with(
    config: &InsConfig,
    v0: &SpectralField,
    mut observer: impl FnMut(InsFrame) -> Result<()>,
) -> Result<()> {
    let schedule = config.schedule()?;
    let grid = config.grid.build()?;
    if *v0.grid() != grid {
        return Err(FlowError::GridMismatch);
    }
    let mut state = InsState::new(0.0, project_p(&truncate(v0))?, config.mu)?;
    let mut stepper = InsStepper::new(&grid, config.mu, config.integrator);
    observer(InsFrame::from_state(&state)?)?;
    for step in schedule.steps() {
        state = stepper.step(&state, step.h)?;
        state.t = step.t0 + step.h;
        if step.save {
            observer(InsFrame::from_state(&state)?)?;
        }
    }
    Ok(())
}

pub fn run_ins(config: &InsConfig, v0: &SpectralField) -> Result<Trajectory<InsFrame>> {
    let mut traj = Trajectory::new();
    run_ins_with(config, v0, |f| traj.push(f))?;
    Ok(traj)
}

fn gradient_energy(v: &SpectralField) -> f64 {
    let k_sq = v.grid().k_sq();
    let len = v.grid().len();
    v.grid().volume()
        * v.coeffs().iter().enumerate().map(|(i, z)| k_sq[i % len] * z.norm_sqr()).sum::<f64>()
}

fn gradient_inner(v: &SpectralField, w: &SpectralField) -> f64 {
    let k_sq = v.grid().k_sq();
    let len = v.grid().len();
    v.grid().volume()
        * v.coeffs()
            .iter()
            .zip(w.coeffs())
            .enumerate()
            .map(|(i, (a, b))| k_sq[i % len] * (a * b.conj()).re)
            .sum::<f64>()
}

/// `max_t |‖V(t)‖² + 2μ∫‖∇V‖² - ‖V0‖²| / ‖V0‖²`.
///
/// The dissipation integral uses the trapezoid rule with the endpoint-derivative
/// correction, the derivative `2⟨∇V, ∇V_t⟩` coming from the stored rates.
pub fn energy_identity_residual(traj: &Trajectory<InsFrame>, mu: f64) -> Result<f64> {
    let e0 = traj.first()?.velocity.l2_norm_sq();
    if e0 == 0.0 {
        return Ok(0.0);
    }
    let times = traj.times();
    let frames = traj.frames();
    let diss: Vec<f64> = frames.iter().map(|f| gradient_energy(&f.velocity)).collect();
    let ddiss: Vec<f64> =
        frames.iter().map(|f| 2.0 * gradient_inner(&f.velocity, &f.velocity_t)).collect();
    let integral = cumulative_hermite(&times, &diss, &ddiss);
    Ok(frames
        .iter()
        .zip(integral)
        .map(|(f, i)| (f.velocity.l2_norm_sq() + 2.0 * mu * i - e0).abs() / e0)
        .fold(0.0, f64::max))
}

/// `V_d(T) = ‖V‖_{L∞(0,T;Ḃ^s)} + ‖V_t, ∇²V‖_{L1(0,T;Ḃ^s)}` at every saved `T`, `s = d/2 - 1`.
pub fn vd_profile(traj: &Trajectory<InsFrame>, partition: &DyadicPartition) -> Result<Vec<f64>> {
    traj.first()?;
    let s = partition.grid().dim() as f64 / 2.0 - 1.0;
    let sup: Vec<f64> =
        traj.frames().iter().map(|f| partition.besov_norm(&f.velocity, s).value).collect();
    let rate: Vec<f64> = traj
        .frames()
        .iter()
        .map(|f| {
            partition.besov_norm(&f.velocity_t, s).value
                + partition.besov_norm_of_derivative(&f.velocity, s, 2)
        })
        .collect();
    let integral = cumulative_trapezoid(&traj.times(), &rate);
    Ok(running_max(&sup).into_iter().zip(integral).map(|(a, b)| a + b).collect())
}

/// Measured `M = sup_T V_d(T)`.
pub fn compute_m(traj: &Trajectory<InsFrame>, partition: &DyadicPartition) -> Result<f64> {
    Ok(vd_profile(traj, partition)?.last().copied().unwrap_or(0.0))
}

/// `C ‖PV0‖_{Ḃ⁰} exp(C μ^{-4} ‖PV0‖⁴_{L2})`, two dimensions only.
pub fn compute_m_bound(
    v0: &SpectralField,
    mu: f64,
    c: f64,
    partition: &DyadicPartition,
) -> Result<f64> {
    if v0.grid().dim() != 2 {
        return Err(FlowError::InvalidParameter("the explicit bound on M is two-dimensional".into()));
    }
    let pv0 = project_p(v0)?;
    let base = partition.besov_norm(&pv0, 0.0).value;
    let l2 = pv0.without_mean().l2_norm();
    Ok(c * base * (c * l2.powi(4) / mu.powi(4)).exp())
}

/// Smallest `C` with `V_d(T) <= C ‖V0‖_{Ḃ^s} exp(C μ^{-4} ‖V0‖⁴_{L2})`.
pub fn global_bound_constant(
    traj: &Trajectory<InsFrame>,
    partition: &DyadicPartition,
    mu: f64,
) -> Result<f64> {
    let s = partition.grid().dim() as f64 / 2.0 - 1.0;
    let v0 = &traj.first()?.velocity;
    let lhs = compute_m(traj, partition)?;
    let base = partition.besov_norm(v0, s).value;
    let growth = v0.without_mean().l2_norm().powi(4) / mu.powi(4);
    Ok(constant_for_bound(lhs, base, growth))
}

/// `μ^{1/4} ‖V‖_{L4(0,T;Ḃ^{(d-1)/2})} / ‖V0‖_{L2}`, the time integral truncated at `T`.
pub fn interpolation_constant(
    traj: &Trajectory<InsFrame>,
    partition: &DyadicPartition,
    mu: f64,
) -> Result<f64> {
    let s = (partition.grid().dim() as f64 - 1.0) / 2.0;
    let l2 = traj.first()?.velocity.without_mean().l2_norm();
    if l2 == 0.0 {
        return Ok(0.0);
    }
    let fourth: Vec<f64> = traj
        .frames()
        .iter()
        .map(|f| partition.besov_norm(&f.velocity, s).value.powi(4))
        .collect();
    let integral = cumulative_trapezoid(&traj.times(), &fourth).last().copied().unwrap_or(0.0);
    Ok(mu.powf(0.25) * integral.powf(0.25) / l2)
}

/// Taylor-Green vortex `(sin x cos y, -cos x sin y)`, scaled to the grid period, extended by zero in 3D.
pub fn taylor_green(grid: &Grid, amplitude: f64) -> SpectralField {
    let k = grid.base_wavenumber();
    SpectralField::from_fn(grid, grid.dim(), |x, c| match c {
        0 => amplitude * (k * x[0]).sin() * (k * x[1]).cos(),
        1 => -amplitude * (k * x[0]).cos() * (k * x[1]).sin(),
        _ => 0.0,
    })
}
