//! Homogeneous Littlewood-Paley decomposition on a periodic grid.
//!
//! The radial profile `χ` equals 1 on `|ξ| <= 3/4`, vanishes on `|ξ| >= 4/3` and is the
//! bump-quotient mollified step in between. Blocks use `φ(ξ) = χ(ξ/2) - χ(ξ)`, so
//! `Δ_j` is the Fourier multiplier `φ(2^{-j} |k|)` with `k = 2πξ/length` the physical
//! wavevector. The block range `[j_min, j_max]` is chosen from the grid so every
//! nonzero resolved mode lies where the truncated sum of `φ(2^{-j}·)` is exactly one.
//!
//! All L2 norms are taken over the periodic cell and evaluated by Parseval.

use std::collections::BTreeMap;

use crate::error::{FlowError, Result};
use crate::field::SpectralField;
use crate::grid::Grid;
use crate::spectral::advect;

const INNER_RADIUS: f64 = 3.0 / 4.0;
const OUTER_RADIUS: f64 = 4.0 / 3.0;
/// Tolerance on the partition of unity used to decide whether a mode is covered.
const COVERAGE_TOL: f64 = 1e-10;

/// Smooth step: 0 for `t <= 0`, 1 for `t >= 1`.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        // e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)}) written as a logistic function
        1.0 / (1.0 + (1.0 / t - 1.0 / (1.0 - t)).exp())
    }
}

/// Radial low-pass profile `χ(r)`.
pub fn chi(r: f64) -> f64 {
    smooth_step((OUTER_RADIUS - r) / (OUTER_RADIUS - INNER_RADIUS))
}

/// Annulus profile `φ(r) = χ(r/2) - χ(r)`, supported in `[3/4, 8/3]`.
pub fn phi(r: f64) -> f64 {
    chi(0.5 * r) - chi(r)
}

/// `2^j` for signed `j`.
pub fn dyadic(j: i32) -> f64 {
    2f64.powi(j)
}

/// Block-wise Besov norm `Σ_j 2^{js} ‖Δ_j f‖_{L2}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BesovNorm {
    pub s: f64,
    pub value: f64,
    /// `j -> 2^{js} ‖Δ_j f‖_{L2}`.
    pub per_block: BTreeMap<i32, f64>,
}

/// Dyadic partition of unity tabulated on a grid.
#[derive(Clone, Debug)]
pub struct DyadicPartition {
    grid: Grid,
    j_min: i32,
    j_max: i32,
    /// `weights[j - j_min][mode] = φ(2^{-j} |k|)`.
    weights: Vec<Vec<f64>>,
    covered: Vec<bool>,
}

impl DyadicPartition {
    pub fn new(grid: &Grid) -> Self {
        let length = grid.length();
        let j_min = ((2.0 * std::f64::consts::PI / length).log2() - 1.0).floor() as i32;
        let j_max =
            ((std::f64::consts::PI * grid.n() as f64 / length).log2() + 1.0).ceil() as i32;
        let k = grid.k_norm();
        let weights: Vec<Vec<f64>> = (j_min..=j_max)
            .map(|j| {
                let scale = dyadic(-j);
                k.iter().map(|&r| phi(scale * r)).collect()
            })
            .collect();
        let covered = (0..grid.len())
            .map(|idx| {
                let total: f64 = weights.iter().map(|w| w[idx]).sum();
                idx != 0 && (total - 1.0).abs() <= COVERAGE_TOL
            })
            .collect();
        Self { grid: grid.clone(), j_min, j_max, weights, covered }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn j_min(&self) -> i32 {
        self.j_min
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn blocks(&self) -> std::ops::RangeInclusive<i32> {
        self.j_min..=self.j_max
    }

    fn check_block(&self, j: i32) -> Result<()> {
        if j < self.j_min || j > self.j_max {
            return Err(FlowError::BlockOutOfRange { j, j_min: self.j_min, j_max: self.j_max });
        }
        Ok(())
    }

    fn check_grid(&self, f: &SpectralField) -> Result<()> {
        if *f.grid() != self.grid {
            return Err(FlowError::GridMismatch);
        }
        Ok(())
    }

    /// Per-mode multiplier `φ(2^{-j}|k|)`.
    pub fn block_weights(&self, j: i32) -> Result<&[f64]> {
        self.check_block(j)?;
        Ok(&self.weights[(j - self.j_min) as usize])
    }

    /// `Σ_j φ(2^{-j}|k|)` at mode `idx`.
    pub fn partition_sum(&self, idx: usize) -> f64 {
        self.weights.iter().map(|w| w[idx]).sum()
    }

    /// Whether the partition sums to one (within 1e-10) at nonzero mode `idx`.
    pub fn is_covered(&self, idx: usize) -> bool {
        self.covered[idx]
    }

    /// Rejects fields with energy on nonzero modes the block range does not resolve.
    pub fn ensure_covered(&self, f: &SpectralField) -> Result<()> {
        self.check_grid(f)?;
        let len = self.grid.len();
        for c in 0..f.components() {
            for (idx, z) in f.component(c).iter().enumerate().skip(1) {
                if !self.covered[idx % len] && z.norm() > 0.0 {
                    return Err(FlowError::BlockOutOfRange {
                        j: self.j_max + 1,
                        j_min: self.j_min,
                        j_max: self.j_max,
                    });
                }
            }
        }
        Ok(())
    }

    /// `Δ_j f`; the zero mode is always annihilated.
    pub fn dyadic_block(&self, f: &SpectralField, j: i32) -> Result<SpectralField> {
        self.check_grid(f)?;
        let w = self.block_weights(j)?;
        Ok(f.apply_multiplier(|idx| w[idx]))
    }

    /// `Ṡ_k f = χ(2^{-k} D) f`, keeping the mean.
    pub fn low_cutoff(&self, f: &SpectralField, k: i32) -> Result<SpectralField> {
        self.check_grid(f)?;
        let scale = dyadic(-k);
        let kn = self.grid.k_norm();
        Ok(f.apply_multiplier(|idx| chi(scale * kn[idx])))
    }

    /// `‖Δ_j (m(D) f)‖²_{L2}` for every block, for a real radial-or-not multiplier `m`.
    fn block_energies(&self, f: &SpectralField, multiplier: impl Fn(usize) -> f64) -> Vec<f64> {
        let len = self.grid.len();
        let mut density = vec![0.0; len];
        for c in 0..f.components() {
            for (d, z) in density.iter_mut().zip(f.component(c)) {
                *d += z.norm_sqr();
            }
        }
        for (idx, d) in density.iter_mut().enumerate() {
            let m = multiplier(idx);
            *d *= m * m;
        }
        let volume = self.grid.volume();
        self.weights
            .iter()
            .map(|w| volume * w.iter().zip(&density).map(|(p, d)| p * p * d).sum::<f64>())
            .collect()
    }

    /// `‖m(D) f‖_{Ḃ^s_{2,1}}` for a Fourier multiplier `m` given per mode index.
    pub fn besov_norm_with(
        &self,
        f: &SpectralField,
        s: f64,
        multiplier: impl Fn(usize) -> f64,
    ) -> BesovNorm {
        let energies = self.block_energies(f, multiplier);
        let per_block: BTreeMap<i32, f64> = self
            .blocks()
            .zip(energies)
            .map(|(j, e)| (j, dyadic(j).powf(s) * e.sqrt()))
            .collect();
        let value = per_block.values().sum();
        BesovNorm { s, value, per_block }
    }

    /// `‖f‖_{Ḃ^s_{2,1}}`; vector fields use the Euclidean norm over components.
    pub fn besov_norm(&self, f: &SpectralField, s: f64) -> BesovNorm {
        self.besov_norm_with(f, s, |_| 1.0)
    }

    /// `‖∇^order f‖_{Ḃ^s_{2,1}}` with the full derivative tensor, i.e. the multiplier `|k|^order`.
    pub fn besov_norm_of_derivative(&self, f: &SpectralField, s: f64, order: i32) -> f64 {
        let k = self.grid.k_norm();
        self.besov_norm_with(f, s, |idx| k[idx].powi(order)).value
    }

    /// Multiplier of the low-frequency part: sum of `φ(2^{-k}·)` over blocks with `2^k ν <= 1`.
    pub fn low_multiplier(&self, nu: f64) -> Vec<f64> {
        let mut m = vec![0.0; self.grid.len()];
        for (j, w) in self.blocks().zip(&self.weights) {
            if dyadic(j) * nu <= 1.0 {
                m.iter_mut().zip(w).for_each(|(a, b)| *a += b);
            }
        }
        m
    }

    /// Multiplier of the high-frequency part: blocks with `2^k ν > 1`.
    pub fn high_multiplier(&self, nu: f64) -> Vec<f64> {
        let mut m = vec![0.0; self.grid.len()];
        for (j, w) in self.blocks().zip(&self.weights) {
            if dyadic(j) * nu > 1.0 {
                m.iter_mut().zip(w).for_each(|(a, b)| *a += b);
            }
        }
        m
    }

    /// `(f^ℓ, f^h)`: blocks with `2^k ν <= 1` and the rest; the mean goes to neither.
    pub fn split_low_high(
        &self,
        f: &SpectralField,
        nu: f64,
    ) -> Result<(SpectralField, SpectralField)> {
        self.check_grid(f)?;
        if !(nu > 0.0) {
            return Err(FlowError::InvalidParameter(format!("nu must be positive, got {nu}")));
        }
        let low = self.low_multiplier(nu);
        let high = self.high_multiplier(nu);
        Ok((f.apply_multiplier(|i| low[i]), f.apply_multiplier(|i| high[i])))
    }

    /// Bernstein ratios `(‖∇Δ_j f‖ / (2^j ‖Δ_j f‖), 2^j ‖Δ_j f‖ / ‖∇Δ_j f‖)`.
    ///
    /// The annulus support of `φ` bounds them by `8/3` and `4/3`.
    pub fn audit_bernstein(&self, f: &SpectralField, j: i32) -> Result<(f64, f64)> {
        self.ensure_covered(f)?;
        let block = self.dyadic_block(f, j)?;
        let plain = block.l2_norm();
        let k = self.grid.k_norm();
        let grad = block.apply_multiplier(|idx| k[idx]).l2_norm();
        if plain == 0.0 || grad == 0.0 {
            return Err(FlowError::ZeroBlock(j));
        }
        let scale = dyadic(j);
        Ok((grad / (scale * plain), plain * scale / grad))
    }

    /// Empirical constant of the product law
    /// `‖gh‖_{Ḃ^{s1+s2-d/2}} <= C ‖g‖_{Ḃ^{s1}} ‖h‖_{Ḃ^{s2}}`, product dealiased.
    pub fn audit_product_law(
        &self,
        g: &SpectralField,
        h: &SpectralField,
        s1: f64,
        s2: f64,
    ) -> Result<f64> {
        let half_dim = self.grid.dim() as f64 / 2.0;
        if s1 > half_dim || s2 > half_dim || s1 + s2 <= 0.0 {
            return Err(FlowError::ExponentPrecondition(format!(
                "need s1, s2 <= d/2 and s1 + s2 > 0, got ({s1}, {s2})"
            )));
        }
        self.ensure_covered(g)?;
        self.ensure_covered(h)?;
        let product = crate::spectral::dealiased_product(g, h)?;
        let numerator = self.besov_norm(&product, s1 + s2 - half_dim).value;
        if numerator == 0.0 {
            return Ok(0.0);
        }
        let denominator = self.besov_norm(g, s1).value * self.besov_norm(h, s2).value;
        if denominator == 0.0 {
            return Err(FlowError::ZeroDenominator("product law"));
        }
        Ok(numerator / denominator)
    }

    /// `Σ_j 2^{js} ‖[w, Δ_j]·∇f‖_{L2}` with `[w, Δ_j]·∇f = w·∇Δ_j f - Δ_j(w·∇f)`.
    pub fn commutator_sum(&self, w: &SpectralField, f: &SpectralField, s: f64) -> Result<f64> {
        let dim = self.grid.dim();
        if w.components() != dim || !f.is_scalar() {
            return Err(FlowError::ComponentMismatch(
                "commutator needs a vector w and a scalar f".into(),
            ));
        }
        let half_dim = dim as f64 / 2.0;
        if !(s <= half_dim && s > -half_dim) {
            return Err(FlowError::ExponentPrecondition(format!(
                "need -d/2 < s <= d/2, got {s}"
            )));
        }
        self.ensure_covered(w)?;
        self.ensure_covered(f)?;
        let transported = advect(w, f)?;
        let mut total = 0.0;
        for j in self.blocks() {
            let inner = advect(w, &self.dyadic_block(f, j)?)?;
            let outer = self.dyadic_block(&transported, j)?;
            total += dyadic(j).powf(s) * (&inner - &outer).l2_norm();
        }
        Ok(total)
    }

    /// Commutator sum divided by `‖∇w‖_{Ḃ^{d/2}} ‖f‖_{Ḃ^s}`.
    pub fn audit_commutator(&self, w: &SpectralField, f: &SpectralField, s: f64) -> Result<f64> {
        let numerator = self.commutator_sum(w, f, s)?;
        let half_dim = self.grid.dim() as f64 / 2.0;
        let denominator =
            self.besov_norm_of_derivative(w, half_dim, 1) * self.besov_norm(f, s).value;
        if denominator == 0.0 {
            return Err(FlowError::ZeroDenominator("commutator"));
        }
        Ok(numerator / denominator)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SpectralField;
    use num_complex::Complex64;

    #[test]
    fn profile_values() {
        assert_eq!(chi(0.5), 1.0);
        assert_eq!(chi(0.75), 1.0);
        assert_eq!(chi(2.0), 0.0);
        assert_eq!(chi(4.0 / 3.0), 0.0);
        assert!(chi(1.0) > 0.0 && chi(1.0) < 1.0);
        assert_eq!(phi(0.7), 0.0);
        assert_eq!(phi(2.7), 0.0);
    }

    #[test]
    fn profile_is_non_increasing() {
        let mut prev = chi(0.0);
        for i in 1..=2000 {
            let c = chi(i as f64 * 1e-3);
            assert!(c <= prev + 1e-15);
            prev = c;
        }
    }

    #[test]
    fn unity_at_unit_frequency() {
        let total: f64 = (-10..=10).map(|j| phi(dyadic(-j))).sum();
        assert!((total - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn block_range_for_standard_grid() {
        let g = Grid::periodic(2, 64).unwrap();
        let p = DyadicPartition::new(&g);
        assert_eq!(p.j_min(), -1);
        assert_eq!(p.j_max(), 6);
        for idx in 1..g.len() {
            assert!(p.is_covered(idx), "mode {:?}", g.mode(idx));
        }
    }

    #[test]
    fn out_of_range_block_rejected() {
        let g = Grid::periodic(2, 16).unwrap();
        let p = DyadicPartition::new(&g);
        let f = SpectralField::zeros(&g, 1);
        assert!(matches!(
            p.dyadic_block(&f, p.j_max() + 1),
            Err(FlowError::BlockOutOfRange { .. })
        ));
    }

    #[test]
    fn single_frequency_block() {
        let g = Grid::periodic(2, 32).unwrap();
        let p = DyadicPartition::new(&g);
        let f = SpectralField::from_fn(&g, 1, |x, _| x[0].cos());
        let b = p.dyadic_block(&f, 0).unwrap();
        assert!(b.max_coeff_diff(&f.scale(1.0 - chi(1.0))) < 1e-15);
    }

    #[test]
    fn low_cutoff_limits_and_telescoping() {
        let g = Grid::periodic(2, 32).unwrap();
        let p = DyadicPartition::new(&g);
        let f = SpectralField::from_fn(&g, 1, |x, _| 0.3 + x[0].sin() * (5.0 * x[1]).cos());
        let top = p.low_cutoff(&f, p.j_max() + 2).unwrap();
        assert!(top.max_coeff_diff(&f) < 1e-15);
        let bottom = p.low_cutoff(&f, p.j_min() - 2).unwrap();
        assert!((bottom.coeffs()[0].re - 0.3).abs() < 1e-15);
        assert!(bottom.coeffs()[1..].iter().all(|z| z.norm() == 0.0));
        for k in p.j_min()..p.j_max() {
            let diff = &p.low_cutoff(&f, k + 1).unwrap() - &p.low_cutoff(&f, k).unwrap();
            assert!(diff.max_coeff_diff(&p.dyadic_block(&f, k).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn split_thresholds() {
        let g = Grid::periodic(2, 32).unwrap();
        let p = DyadicPartition::new(&g);
        let f = SpectralField::from_fn(&g, 1, |x, _| x[0].sin() + (7.0 * x[1]).cos() + 1.0);
        let (lo, hi) = p.split_low_high(&f, dyadic(-p.j_max()) / 3.0).unwrap();
        assert_eq!(hi.max_coeff(), 0.0);
        assert!(lo.max_coeff_diff(&f.without_mean()) < 1e-10);
        let (lo, hi) = p.split_low_high(&f, dyadic(-p.j_min()) * 3.0).unwrap();
        assert_eq!(lo.max_coeff(), 0.0);
        assert!(hi.max_coeff_diff(&f.without_mean()) < 1e-10);
        let (lo, _) = p.split_low_high(&f, 1.0).unwrap();
        let mut expect = SpectralField::zeros(&g, 1);
        for k in p.j_min()..=0 {
            expect.axpy(1.0, &p.dyadic_block(&f, k).unwrap());
        }
        assert!(lo.max_coeff_diff(&expect) < 1e-14);
        assert!(p.split_low_high(&f, 0.0).is_err());
    }

    #[test]
    fn bernstein_single_mode_is_exact() {
        let g = Grid::periodic(2, 32).unwrap();
        let p = DyadicPartition::new(&g);
        for j in 0..4 {
            let m = dyadic(j);
            let f = SpectralField::from_fn(&g, 1, |x, _| (m * x[0]).cos());
            let (direct, reverse) = p.audit_bernstein(&f, j).unwrap();
            assert!((direct - 1.0).abs() < 1e-14);
            assert!((reverse - 1.0).abs() < 1e-14);
        }
        let mut f = SpectralField::zeros(&g, 1);
        f.coeffs_mut()[g.index_of([1, 0, 0]).unwrap()] = Complex64::new(0.5, 0.0);
        assert!(matches!(p.audit_bernstein(&f, 3), Err(FlowError::ZeroBlock(3))));
    }

    #[test]
    fn product_law_zero_and_preconditions() {
        let g = Grid::periodic(2, 32).unwrap();
        let p = DyadicPartition::new(&g);
        let a = SpectralField::from_fn(&g, 1, |x, _| x[0].sin());
        let z = SpectralField::zeros(&g, 1);
        assert_eq!(p.audit_product_law(&a, &z, 0.5, 0.5).unwrap(), 0.0);
        assert!(p.audit_product_law(&a, &a, 1.5, 0.5).is_err());
        assert!(p.audit_product_law(&a, &a, -0.5, 0.5).is_err());
    }

    #[test]
    fn constant_transport_commutes_with_blocks() {
        let g = Grid::periodic(2, 32).unwrap();
        let p = DyadicPartition::new(&g);
        let w = SpectralField::from_fn(&g, 2, |_, c| if c == 0 { 0.7 } else { -1.3 });
        let f = SpectralField::from_fn(&g, 1, |x, _| (3.0 * x[0] + x[1]).sin() + x[1].cos());
        assert!(p.commutator_sum(&w, &f, 0.5).unwrap() < 1e-12);
        assert!(matches!(
            p.audit_commutator(&w, &f, 0.5),
            Err(FlowError::ZeroDenominator(_))
        ));
    }
}
