//! Real fields on a periodic grid, in physical samples or Fourier coefficients.

use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{FlowError, Result};
use crate::grid::Grid;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Physical samples of a scalar (`components == 1`) or vector field.
///
/// Samples are component-major; each component is row-major over the grid
/// (last axis fastest).
#[derive(Clone, Debug)]
pub struct PhysicalField {
    grid: Grid,
    components: usize,
    samples: Vec<f64>,
}

impl PhysicalField {
    pub fn new(grid: &Grid, components: usize, samples: Vec<f64>) -> Result<Self> {
        let expected = grid.len() * components;
        if components == 0 || samples.len() != expected {
            return Err(FlowError::ShapeMismatch { expected, got: samples.len() });
        }
        Ok(Self { grid: grid.clone(), components, samples })
    }

    pub fn zeros(grid: &Grid, components: usize) -> Self {
        Self { grid: grid.clone(), components, samples: vec![0.0; grid.len() * components] }
    }

    /// Samples `f(x, component)` at every grid point.
    pub fn from_fn(grid: &Grid, components: usize, f: impl Fn([f64; 3], usize) -> f64) -> Self {
        let mut samples = Vec::with_capacity(grid.len() * components);
        for c in 0..components {
            samples.extend((0..grid.len()).map(|idx| f(grid.point(idx), c)));
        }
        Self { grid: grid.clone(), components, samples }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let len = self.grid.len();
        &self.samples[c * len..(c + 1) * len]
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Pointwise Euclidean norm over components.
    pub fn magnitude(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| {
                (0..self.components)
                    .map(|c| self.samples[c * self.grid.len() + i].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn transform(&self) -> SpectralField {
        SpectralField::from_physical(self)
    }
}

/// Fourier coefficients of a real scalar or vector field.
///
/// Coefficients are normalised so that a constant field `c` has coefficient `c`
/// at ξ = 0; the full (conjugate-symmetric) coefficient set is stored.
#[derive(Clone, Debug)]
pub struct SpectralField {
    grid: Grid,
    components: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: &Grid, components: usize) -> Self {
        Self { grid: grid.clone(), components, coeffs: vec![ZERO; grid.len() * components] }
    }

    pub fn from_coeffs(grid: &Grid, components: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        let expected = grid.len() * components;
        if components == 0 || coeffs.len() != expected {
            return Err(FlowError::ShapeMismatch { expected, got: coeffs.len() });
        }
        Ok(Self { grid: grid.clone(), components, coeffs })
    }

    pub fn from_physical(field: &PhysicalField) -> Self {
        let grid = field.grid();
        let mut coeffs: Vec<Complex64> =
            field.samples().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        for chunk in coeffs.chunks_mut(grid.len()) {
            grid.forward(chunk);
        }
        Self { grid: grid.clone(), components: field.components(), coeffs }
    }

    /// Transform of physical samples, rejecting arrays that do not match the grid.
    pub fn from_samples(grid: &Grid, components: usize, samples: Vec<f64>) -> Result<Self> {
        Ok(Self::from_physical(&PhysicalField::new(grid, components, samples)?))
    }

    pub fn from_fn(grid: &Grid, components: usize, f: impl Fn([f64; 3], usize) -> f64) -> Self {
        Self::from_physical(&PhysicalField::from_fn(grid, components, f))
    }

    pub fn to_physical(&self) -> PhysicalField {
        let mut samples = Vec::with_capacity(self.coeffs.len());
        let mut buf = vec![ZERO; self.grid.len()];
        for chunk in self.coeffs.chunks(self.grid.len()) {
            buf.copy_from_slice(chunk);
            self.grid.inverse(&mut buf);
            samples.extend(buf.iter().map(|z| z.re));
        }
        PhysicalField { grid: self.grid.clone(), components: self.components, samples }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_scalar(&self) -> bool {
        self.components == 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        let len = self.grid.len();
        &self.coeffs[c * len..(c + 1) * len]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        let len = self.grid.len();
        &mut self.coeffs[c * len..(c + 1) * len]
    }

    /// Single component as a scalar field.
    pub fn extract(&self, c: usize) -> SpectralField {
        SpectralField {
            grid: self.grid.clone(),
            components: 1,
            coeffs: self.component(c).to_vec(),
        }
    }

    /// Stacks scalar fields into a vector field.
    pub fn stack(parts: &[SpectralField]) -> Result<SpectralField> {
        let first = parts
            .first()
            .ok_or_else(|| FlowError::ComponentMismatch("nothing to stack".into()))?;
        let mut coeffs = Vec::with_capacity(first.grid.len() * parts.len());
        for p in parts {
            p.ensure_same_grid(first)?;
            if !p.is_scalar() {
                return Err(FlowError::ComponentMismatch("stack expects scalar fields".into()));
            }
            coeffs.extend_from_slice(&p.coeffs);
        }
        Ok(SpectralField { grid: first.grid.clone(), components: parts.len(), coeffs })
    }

    pub(crate) fn ensure_same_grid(&self, other: &SpectralField) -> Result<()> {
        if self.grid != other.grid {
            return Err(FlowError::GridMismatch);
        }
        Ok(())
    }

    pub(crate) fn ensure_same_shape(&self, other: &SpectralField) -> Result<()> {
        self.ensure_same_grid(other)?;
        if self.components != other.components {
            return Err(FlowError::ComponentMismatch(format!(
                "{} vs {} components",
                self.components, other.components
            )));
        }
        Ok(())
    }

    /// Spatial mean of each component (the real part of the zero mode).
    pub fn mean(&self) -> Vec<f64> {
        (0..self.components).map(|c| self.component(c)[0].re).collect()
    }

    /// Copy with the zero mode removed from every component.
    pub fn without_mean(&self) -> SpectralField {
        let mut out = self.clone();
        for c in 0..self.components {
            out.component_mut(c)[0] = ZERO;
        }
        out
    }

    /// `‖f‖²_{L2}` over the periodic cell, by Parseval.
    pub fn l2_norm_sq(&self) -> f64 {
        self.grid.volume() * self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// `∫ f·g dx` for fields of identical shape.
    pub fn inner(&self, other: &SpectralField) -> Result<f64> {
        self.ensure_same_shape(other)?;
        let s: f64 = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| (a * b.conj()).re).sum();
        Ok(self.grid.volume() * s)
    }

    /// Largest coefficient modulus difference.
    pub fn max_coeff_diff(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Multiplies every coefficient of every component by `weight(mode index)`.
    pub fn apply_multiplier(&self, weight: impl Fn(usize) -> f64) -> SpectralField {
        let mut out = self.clone();
        let len = self.grid.len();
        for (i, z) in out.coeffs.iter_mut().enumerate() {
            *z *= weight(i % len);
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|z| *z *= alpha);
        out
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &SpectralField) {
        assert_same_shape(self, other);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b * alpha;
        }
    }

    /// Zero-pads or truncates the spectrum onto another grid with the same dimension and period.
    pub fn resample(&self, grid: &Grid) -> Result<SpectralField> {
        if grid.dim() != self.grid.dim() || grid.length() != self.grid.length() {
            return Err(FlowError::GridMismatch);
        }
        let mut out = SpectralField::zeros(grid, self.components);
        let src_nyquist = -(self.grid.n() as i32 / 2);
        let dst_nyquist = -(grid.n() as i32 / 2);
        for c in 0..self.components {
            let src = self.component(c);
            let dst = out.component_mut(c);
            for (idx, z) in src.iter().enumerate() {
                let m = self.grid.mode(idx);
                // Nyquist rows have no conjugate partner once the grid changes
                if grid.n() != self.grid.n()
                    && m.iter().any(|&x| x == src_nyquist || x == dst_nyquist)
                {
                    continue;
                }
                if let Some(target) = grid.index_of(m) {
                    dst[target] = *z;
                }
            }
        }
        Ok(out)
    }
}

fn assert_same_shape(a: &SpectralField, b: &SpectralField) {
    assert!(
        a.grid == b.grid && a.components == b.components,
        "field shape mismatch: {:?}x{} vs {:?}x{}",
        a.grid,
        a.components,
        b.grid,
        b.components
    );
}

impl Add for &SpectralField {
    type Output = SpectralField;

    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;

    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;

    fn mul(self, rhs: f64) -> SpectralField {
        self.scale(rhs)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;

    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_maps_to_zero_mode() {
        let g = Grid::periodic(2, 16).unwrap();
        let f = SpectralField::from_fn(&g, 1, |_, _| 1.0);
        assert!((f.coeffs()[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(f.coeffs()[1..].iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn sine_has_two_modes() {
        let g = Grid::periodic(2, 16).unwrap();
        let f = SpectralField::from_fn(&g, 1, |x, _| x[0].sin());
        for (idx, z) in f.coeffs().iter().enumerate() {
            let m = g.mode(idx);
            if m == [1, 0, 0] || m == [-1, 0, 0] {
                assert!((z.norm() - 0.5).abs() < 1e-14);
            } else {
                assert!(z.norm() < 1e-14, "mode {m:?} = {z}");
            }
        }
    }

    #[test]
    fn random_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (dim, n) in [(2, 64), (3, 16)] {
            let g = Grid::periodic(dim, n).unwrap();
            let samples: Vec<f64> = (0..2 * g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = SpectralField::from_samples(&g, 2, samples.clone()).unwrap();
            let back = f.to_physical();
            let max = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let err = back
                .samples()
                .iter()
                .zip(&samples)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err / max <= 1e-12, "round trip error {err}");
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = Grid::periodic(2, 8).unwrap();
        assert!(matches!(
            SpectralField::from_samples(&g, 1, vec![0.0; 10]),
            Err(FlowError::ShapeMismatch { expected: 64, got: 10 })
        ));
    }

    #[test]
    fn parseval_matches_quadrature() {
        let g = Grid::periodic(2, 32).unwrap();
        let p = PhysicalField::from_fn(&g, 1, |x, _| (x[0] + 2.0 * x[1]).cos() + 0.3);
        let direct: f64 = p.samples().iter().map(|v| v * v).sum::<f64>() * g.spacing().powi(2);
        let f = p.transform();
        assert!((f.l2_norm_sq() - direct).abs() < 1e-10 * direct);
    }

    #[test]
    fn resample_preserves_band_limited_content() {
        let g = Grid::periodic(2, 16).unwrap();
        let fine = Grid::periodic(2, 32).unwrap();
        let f = SpectralField::from_fn(&g, 1, |x, _| (3.0 * x[0]).sin() * x[1].cos());
        let up = f.resample(&fine).unwrap();
        let direct = SpectralField::from_fn(&fine, 1, |x, _| (3.0 * x[0]).sin() * x[1].cos());
        assert!(up.max_coeff_diff(&direct) < 1e-14);
        let down = up.resample(&g).unwrap();
        assert!(down.max_coeff_diff(&f) < 1e-14);
    }
}
