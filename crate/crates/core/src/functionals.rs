//! Critical-norm functionals of the perturbation `u = v - V`, the localized energy `L_j`
//! and the empirical constants of the smallness condition and of the final bound.
//!
//! Joint norms such as `‖Qu, a, ν∇a‖` are sums of the individual norms. Sup-in-time norms
//! are maxima over saved frames, time integrals use the trapezoid rule.

use serde::{Deserialize, Serialize};

use crate::cns::CnsFrame;
use crate::error::{FlowError, Result};
use crate::field::SpectralField;
use crate::helmholtz::split;
use crate::ins::InsFrame;
use crate::littlewood_paley::{dyadic, DyadicPartition};
use crate::spectral::gradient;
use crate::trajectory::{cumulative_trapezoid, running_max, Timed, Trajectory};

/// Relative tolerance when matching time stamps of two runs.
const TIME_TOL: f64 = 1e-9;

/// One saved instant of the compressible run compared with the incompressible reference.
#[derive(Clone, Debug)]
pub struct PerturbationFrame {
    pub t: f64,
    pub a: SpectralField,
    pub a_t: SpectralField,
    pub u: SpectralField,
    pub u_t: SpectralField,
    pub pu: SpectralField,
    pub qu: SpectralField,
    pub pu_t: SpectralField,
    pub qu_t: SpectralField,
    pub reference: SpectralField,
    pub reference_t: SpectralField,
}

impl Timed for PerturbationFrame {
    fn time(&self) -> f64 {
        self.t
    }
}

impl PerturbationFrame {
    pub fn new(cns: &CnsFrame, ins: &InsFrame) -> Result<Self> {
        if (cns.t - ins.t).abs() > TIME_TOL * cns.t.abs().max(1.0) {
            return Err(FlowError::TimeGridMismatch(format!(
                "compressible frame at t = {} against reference at t = {}",
                cns.t, ins.t
            )));
        }
        let u = &cns.v - &ins.velocity;
        let u_t = &cns.v_t - &ins.velocity_t;
        let (pu, qu) = split(&u)?;
        let (pu_t, qu_t) = split(&u_t)?;
        Ok(Self {
            t: cns.t,
            a: cns.a.clone(),
            a_t: cns.a_t.clone(),
            u,
            u_t,
            pu,
            qu,
            pu_t,
            qu_t,
            reference: ins.velocity.clone(),
            reference_t: ins.velocity_t.clone(),
        })
    }
}

/// Pairs the frames of two runs saved at identical times.
pub fn perturbation_fields(
    cns: &Trajectory<CnsFrame>,
    ins: &Trajectory<InsFrame>,
) -> Result<Trajectory<PerturbationFrame>> {
    if cns.len() != ins.len() {
        return Err(FlowError::TimeGridMismatch(format!(
            "{} compressible frames against {} reference frames",
            cns.len(),
            ins.len()
        )));
    }
    let frames = cns
        .frames()
        .iter()
        .zip(ins.frames())
        .map(|(c, i)| PerturbationFrame::new(c, i))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::from_frames(frames)
}

/// Besov norms of one frame at `s = d/2 - 1`; `∇^m` is the multiplier `|k|^m`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameNorms {
    pub t: f64,
    pub qu: f64,
    pub a: f64,
    pub grad_a: f64,
    pub qu_t: f64,
    pub hess_qu: f64,
    pub hess_a_low: f64,
    pub grad_a_high: f64,
    pub pu: f64,
    pub pu_t: f64,
    pub hess_pu: f64,
    pub reference: f64,
    pub reference_t: f64,
    pub hess_reference: f64,
    /// `L_j` of `(Δ_j a, Δ_j Qu)` for every block.
    pub lj: Vec<f64>,
}

pub fn frame_norms(
    frame: &PerturbationFrame,
    partition: &DyadicPartition,
    nu: f64,
) -> Result<FrameNorms> {
    let s = critical_index(partition);
    let k = partition.grid().k_norm();
    let low = partition.low_multiplier(nu);
    let high = partition.high_multiplier(nu);
    let norm = |f: &SpectralField| partition.besov_norm(f, s).value;
    let hess = |f: &SpectralField| partition.besov_norm_of_derivative(f, s, 2);
    let lj = partition
        .blocks()
        .map(|j| {
            lj_energy(&partition.dyadic_block(&frame.a, j)?, &partition.dyadic_block(&frame.qu, j)?, nu)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameNorms {
        t: frame.t,
        qu: norm(&frame.qu),
        a: norm(&frame.a),
        grad_a: partition.besov_norm_of_derivative(&frame.a, s, 1),
        qu_t: norm(&frame.qu_t),
        hess_qu: hess(&frame.qu),
        hess_a_low: partition.besov_norm_with(&frame.a, s, |i| low[i] * k[i] * k[i]).value,
        grad_a_high: partition.besov_norm_with(&frame.a, s, |i| high[i] * k[i]).value,
        pu: norm(&frame.pu),
        pu_t: norm(&frame.pu_t),
        hess_pu: hess(&frame.pu),
        reference: norm(&frame.reference),
        reference_t: norm(&frame.reference_t),
        hess_reference: hess(&frame.reference),
        lj,
    })
}

/// `s = d/2 - 1`.
pub fn critical_index(partition: &DyadicPartition) -> f64 {
    partition.grid().dim() as f64 / 2.0 - 1.0
}

/// Time profiles of the functionals at every saved `T`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub nu: f64,
    pub mu: f64,
    pub s: f64,
    pub times: Vec<f64>,
    pub x_d: Vec<f64>,
    pub y_d: Vec<f64>,
    pub z_d: Vec<f64>,
    pub w_d: Vec<f64>,
    pub v_d: Vec<f64>,
    /// `‖Pu‖_{L∞(Ḃ^s)} + ‖Pu_t, μ∇²Pu‖_{L1(Ḃ^s)} + ‖a‖_{L∞(Ḃ^{s+1})}`.
    pub e: Vec<f64>,
    /// Left-hand side of the final bound.
    pub bound_lhs: Vec<f64>,
    pub blocks: Vec<i32>,
    pub lj: Vec<Vec<f64>>,
}

fn sum_profiles(parts: &[Vec<f64>]) -> Vec<f64> {
    let n = parts.first().map_or(0, Vec::len);
    (0..n).map(|i| parts.iter().map(|p| p[i]).sum()).collect()
}

fn scaled(v: Vec<f64>, c: f64) -> Vec<f64> {
    v.into_iter().map(|x| c * x).collect()
}

impl FunctionalReport {
    pub fn from_norms(norms: &[FrameNorms], partition: &DyadicPartition, nu: f64, mu: f64) -> Self {
        let times: Vec<f64> = norms.iter().map(|n| n.t).collect();
        let col = |f: &dyn Fn(&FrameNorms) -> f64| norms.iter().map(f).collect::<Vec<f64>>();
        let sup = |f: &dyn Fn(&FrameNorms) -> f64| running_max(&col(f));
        let int = |f: &dyn Fn(&FrameNorms) -> f64| cumulative_trapezoid(&times, &col(f));
        let x_d = sum_profiles(&[sup(&|n| n.qu), sup(&|n| n.a), scaled(sup(&|n| n.grad_a), nu)]);
        let y_d = int(&|n| n.qu_t + nu * n.hess_qu + nu * n.hess_a_low + n.grad_a_high);
        let z_d = sup(&|n| n.pu);
        let w_d = int(&|n| n.pu_t + n.hess_pu);
        let v_d = sum_profiles(&[
            sup(&|n| n.reference),
            int(&|n| n.reference_t + n.hess_reference),
        ]);
        let incompressible_error = sum_profiles(&[sup(&|n| n.pu), int(&|n| n.pu_t + mu * n.hess_pu)]);
        let e = sum_profiles(&[incompressible_error.clone(), sup(&|n| n.grad_a)]);
        let bound_lhs = sum_profiles(&[
            sup(&|n| n.qu),
            int(&|n| n.qu_t + nu * n.hess_qu),
            sup(&|n| n.a),
            scaled(sup(&|n| n.grad_a), nu),
            scaled(incompressible_error, nu.sqrt()),
        ]);
        Self {
            nu,
            mu,
            s: critical_index(partition),
            times,
            x_d,
            y_d,
            z_d,
            w_d,
            v_d,
            e,
            bound_lhs,
            blocks: partition.blocks().collect(),
            lj: norms.iter().map(|n| n.lj.clone()).collect(),
        }
    }

    fn last(v: &[f64]) -> f64 {
        v.last().copied().unwrap_or(0.0)
    }

    pub fn final_x(&self) -> f64 {
        Self::last(&self.x_d)
    }
    pub fn final_y(&self) -> f64 {
        Self::last(&self.y_d)
    }
    pub fn final_z(&self) -> f64 {
        Self::last(&self.z_d)
    }
    pub fn final_w(&self) -> f64 {
        Self::last(&self.w_d)
    }
    pub fn final_v(&self) -> f64 {
        Self::last(&self.v_d)
    }
    pub fn final_e(&self) -> f64 {
        Self::last(&self.e)
    }
    pub fn final_bound_lhs(&self) -> f64 {
        Self::last(&self.bound_lhs)
    }
}

/// Streaming evaluation: frames are reduced to norms as they arrive.
#[derive(Clone, Debug)]
pub struct FunctionalAccumulator<'a> {
    partition: &'a DyadicPartition,
    nu: f64,
    mu: f64,
    norms: Vec<FrameNorms>,
}

impl<'a> FunctionalAccumulator<'a> {
    pub fn new(partition: &'a DyadicPartition, nu: f64, mu: f64) -> Self {
        Self { partition, nu, mu, norms: Vec::new() }
    }

    pub fn push(&mut self, frame: &PerturbationFrame) -> Result<()> {
        self.norms.push(frame_norms(frame, self.partition, self.nu)?);
        Ok(())
    }

    pub fn norms(&self) -> &[FrameNorms] {
        &self.norms
    }

    pub fn finish(self) -> FunctionalReport {
        FunctionalReport::from_norms(&self.norms, self.partition, self.nu, self.mu)
    }
}

pub fn compute_xyzwv(
    pert: &Trajectory<PerturbationFrame>,
    partition: &DyadicPartition,
    nu: f64,
    mu: f64,
) -> Result<FunctionalReport> {
    let mut acc = FunctionalAccumulator::new(partition, nu, mu);
    for f in pert.frames() {
        acc.push(f)?;
    }
    Ok(acc.finish())
}

/// `L_j = (∫ 2a_j² + 2|Qu_j|² + 2ν Qu_j·∇a_j + |ν∇a_j|²)^{1/2}`.
pub fn lj_energy(aj: &SpectralField, quj: &SpectralField, nu: f64) -> Result<f64> {
    let grad = gradient(aj)?;
    let aa = aj.l2_norm_sq();
    let qq = quj.l2_norm_sq();
    let gg = grad.l2_norm_sq();
    let cross = quj.inner(&grad)?;
    let sq = 2.0 * aa + 2.0 * qq + 2.0 * nu * cross + nu * nu * gg;
    let scale = 2.0 * aa + 2.0 * qq + nu * nu * gg;
    if sq < -1e-12 * scale.max(1.0) {
        return Err(FlowError::NegativeEnergy(sq));
    }
    Ok(sq.max(0.0).sqrt())
}

/// `L_j / (‖Qu_j‖ + ‖a_j‖ + ν‖∇a_j‖)`.
pub fn lj_equivalence_ratio(aj: &SpectralField, quj: &SpectralField, nu: f64) -> Result<f64> {
    let denom = quj.l2_norm() + aj.l2_norm() + nu * gradient(aj)?.l2_norm();
    if denom == 0.0 {
        return Err(FlowError::ZeroDenominator("localized energy"));
    }
    Ok(lj_energy(aj, quj, nu)? / denom)
}

/// `min(ν 2^{2j}, 1/ν)`.
pub fn parabolic_split_rate(j: i32, nu: f64) -> f64 {
    (nu * dyadic(2 * j)).min(1.0 / nu)
}

/// Principal branch of `w e^w = x` for `x >= 0`.
fn lambert_w(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut w = if x < 3.0 { (1.0 + x).ln() } else { x.ln() - x.ln().ln().max(0.0) };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let step = f / (ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0));
        w -= step;
        if step.abs() <= 1e-15 * w.abs().max(1e-300) {
            break;
        }
    }
    w
}

/// Smallest `C >= 0` with `C · base · e^{C · growth} >= target`.
pub fn constant_for_bound(target: f64, base: f64, growth: f64) -> f64 {
    if target <= 0.0 {
        0.0
    } else if base <= 0.0 {
        f64::INFINITY
    } else if growth <= 0.0 {
        target / base
    } else {
        lambert_w(target * growth / base) / growth
    }
}

/// Initial-data norms entering the right-hand sides, `s = d/2 - 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataNorms {
    /// `‖a0‖_{Ḃ^s}`.
    pub a0: f64,
    /// `‖a0‖_{Ḃ^{s+1}}`.
    pub a0_critical: f64,
    /// `‖Qu0‖_{Ḃ^s}`.
    pub qu0: f64,
}

impl DataNorms {
    pub fn measure(a0: &SpectralField, v0: &SpectralField, partition: &DyadicPartition) -> Result<Self> {
        let s = critical_index(partition);
        let (_, q) = split(v0)?;
        Ok(Self {
            a0: partition.besov_norm(a0, s).value,
            a0_critical: partition.besov_norm(a0, s + 1.0).value,
            qu0: partition.besov_norm(&q, s).value,
        })
    }

    /// `‖a0‖ + ν‖a0‖ + ‖Qu0‖ + M² + μ²`.
    pub fn data_size(&self, m: f64, mu: f64, nu: f64) -> f64 {
        self.a0 + nu * self.a0_critical + self.qu0 + m * m + mu * mu
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallnessCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub holds: bool,
    /// Largest `C` for which the condition holds.
    pub largest_c: f64,
}

/// `C e^{CM}(‖a0‖ + ν‖a0‖ + ‖Qu0‖ + M² + μ²) <= √ν √μ`.
pub fn check_smallness(data: &DataNorms, m: f64, mu: f64, nu: f64, c: f64) -> SmallnessCheck {
    let size = data.data_size(m, mu, nu);
    let lhs = c * (c * m).exp() * size;
    let rhs = (nu * mu).sqrt();
    SmallnessCheck {
        lhs,
        rhs,
        ratio: lhs / rhs,
        holds: lhs <= rhs,
        largest_c: constant_for_bound(rhs, size, m),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Smallest `C` for which the bound holds.
    pub empirical_c: f64,
}

/// Final bound of the run against `C e^{CM}(‖a0‖ + ν‖a0‖ + ‖Qu0‖ + M² + μ²)`.
pub fn check_theorem_bound(report: &FunctionalReport, data: &DataNorms, m: f64, c: f64) -> BoundCheck {
    let size = data.data_size(m, report.mu, report.nu);
    let lhs = report.final_bound_lhs();
    BoundCheck { lhs, rhs: c * (c * m).exp() * size, empirical_c: constant_for_bound(lhs, size, m) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn lambert_and_constants() {
        for &x in &[1e-8, 0.3, 1.0, 10.0, 1e6] {
            let w = lambert_w(x);
            assert!((w * w.exp() - x).abs() <= 1e-12 * x.max(1.0), "{x}");
        }
        let c = constant_for_bound(5.0, 2.0, 0.7);
        assert!((c * 2.0 * (0.7 * c).exp() - 5.0).abs() < 1e-12);
        assert_eq!(constant_for_bound(0.0, 1.0, 1.0), 0.0);
        assert_eq!(constant_for_bound(3.0, 1.5, 0.0), 2.0);
    }

    #[test]
    fn split_rate_values() {
        assert_eq!(parabolic_split_rate(0, 100.0), 0.01);
        assert_eq!(parabolic_split_rate(3, 1.0), 1.0);
        let nu = 8.0;
        assert!((parabolic_split_rate(-3, nu) - 1.0 / nu).abs() < 1e-15);
    }

    #[test]
    fn smallness_arithmetic() {
        let r = check_smallness(&DataNorms::default(), 0.0, 1.0, 4.0, 1.0);
        assert_eq!((r.lhs, r.rhs), (1.0, 2.0));
        assert!(r.holds);
        assert!((r.largest_c - 2.0).abs() < 1e-15);
        assert!(!check_smallness(&DataNorms::default(), 0.0, 1.0, 0.5, 1.0).holds);
    }

    #[test]
    fn lj_limits() {
        let g = Grid::periodic(2, 16).unwrap();
        let q = SpectralField::from_fn(&g, 2, |x, c| if c == 0 { x[0].sin() } else { 0.0 });
        let zero_a = SpectralField::zeros(&g, 1);
        let l = lj_energy(&zero_a, &q, 3.0).unwrap();
        assert!((l - 2f64.sqrt() * q.l2_norm()).abs() < 1e-12);
        let a = SpectralField::from_fn(&g, 1, |x, _| (2.0 * x[1]).cos());
        let l = lj_energy(&a, &SpectralField::zeros(&g, 2), 3.0).unwrap();
        let expect = (2.0 * a.l2_norm_sq() + 9.0 * gradient(&a).unwrap().l2_norm_sq()).sqrt();
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn lj_extremal_alignment() {
        let g = Grid::periodic(2, 16).unwrap();
        let a = SpectralField::from_fn(&g, 1, |x, _| x[0].cos());
        let nu = 2.0;
        let q = gradient(&a).unwrap().scale(-nu);
        let r = lj_equivalence_ratio(&a, &q, nu).unwrap();
        assert!(r > 0.25 && r < 4.0);
    }
}
