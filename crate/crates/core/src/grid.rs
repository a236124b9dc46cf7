//! Periodic grids and the discrete Fourier transforms living on them.
//!
//! A [`Grid`] is the cube `[0, length)^dim` sampled with `n` points per axis.
//! Fourier coefficients are indexed by integer wavevectors `ξ ∈ {-n/2, .., n/2-1}^dim`
//! stored in FFT order; the physical wavenumber is `2π ξ / length`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

fn default_length() -> f64 {
    2.0 * PI
}

/// Serializable grid description.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub n: usize,
    #[serde(default = "default_length")]
    pub length: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, self.n, self.length)
    }
}

/// Periodic `dim`-dimensional grid with precomputed wavevector tables and FFT plans.
///
/// Cloning is cheap: the tables are shared.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

struct GridInner {
    dim: usize,
    n: usize,
    length: f64,
    len: usize,
    /// Integer wavevector per flat index; unused axes are 0.
    modes: Vec<[i32; 3]>,
    k_norm: Vec<f64>,
    k_sq: Vec<f64>,
    retained: Vec<bool>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim())
            .field("n", &self.n())
            .field("length", &self.length())
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner)
            || (self.dim() == other.dim()
                && self.n() == other.n()
                && self.length() == other.length())
    }
}

impl Grid {
    /// Builds a grid; `n` must be a power of two no smaller than 8 and `dim` 2 or 3.
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(FlowError::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(FlowError::InvalidGrid(format!(
                "n must be a power of two >= 8, got {n}"
            )));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(FlowError::InvalidGrid(format!("length must be positive, got {length}")));
        }

        let len = n.pow(dim as u32);
        let k0 = 2.0 * PI / length;
        let wavenumber = |i: usize| -> i32 {
            if i < n / 2 {
                i as i32
            } else {
                i as i32 - n as i32
            }
        };
        let mut modes = Vec::with_capacity(len);
        for flat in 0..len {
            let mut m = [0i32; 3];
            let mut rest = flat;
            for axis in (0..dim).rev() {
                m[axis] = wavenumber(rest % n);
                rest /= n;
            }
            modes.push(m);
        }
        let k_sq: Vec<f64> = modes
            .iter()
            .map(|m| m.iter().map(|&x| (k0 * x as f64).powi(2)).sum())
            .collect();
        let k_norm = k_sq.iter().map(|k| k.sqrt()).collect();
        let retained = modes
            .iter()
            .map(|m| m.iter().all(|&x| 3 * x.unsigned_abs() as usize <= n))
            .collect();

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);

        Ok(Self {
            inner: Arc::new(GridInner {
                dim,
                n,
                length,
                len,
                modes,
                k_norm,
                k_sq,
                retained,
                forward,
                inverse,
            }),
        })
    }

    /// `Grid::new(dim, n, 2π)`.
    pub fn periodic(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, 2.0 * PI)
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn n(&self) -> usize {
        self.inner.n
    }

    pub fn length(&self) -> f64 {
        self.inner.length
    }

    /// Total number of grid points (and of Fourier modes).
    pub fn len(&self) -> usize {
        self.inner.len
    }

    pub fn is_empty(&self) -> bool {
        self.inner.len == 0
    }

    /// Measure of the periodic cell, `length^dim`.
    pub fn volume(&self) -> f64 {
        self.length().powi(self.dim() as i32)
    }

    /// Smallest nonzero physical wavenumber `2π / length`.
    pub fn base_wavenumber(&self) -> f64 {
        2.0 * PI / self.length()
    }

    pub fn spacing(&self) -> f64 {
        self.length() / self.n() as f64
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec { dim: self.dim(), n: self.n(), length: self.length() }
    }

    /// Largest `|k|` among modes kept by the 2/3 rule.
    pub fn max_retained_wavenumber(&self) -> f64 {
        self.k_norm()
            .iter()
            .zip(&self.inner.retained)
            .filter(|(_, &r)| r)
            .fold(0.0, |m, (&k, _)| m.max(k))
    }

    /// Integer wavevector of flat mode index `idx` (unused axes are 0).
    pub fn mode(&self, idx: usize) -> [i32; 3] {
        self.inner.modes[idx]
    }

    pub fn modes(&self) -> &[[i32; 3]] {
        &self.inner.modes
    }

    /// Physical wavenumber component `2π ξ_axis / length`.
    pub fn wavenumber(&self, idx: usize, axis: usize) -> f64 {
        self.base_wavenumber() * self.inner.modes[idx][axis] as f64
    }

    /// `|2π ξ / length|` per mode.
    pub fn k_norm(&self) -> &[f64] {
        &self.inner.k_norm
    }

    /// `|2π ξ / length|²` per mode.
    pub fn k_sq(&self) -> &[f64] {
        &self.inner.k_sq
    }

    /// Whether the mode survives the 2/3 rule (`|ξ_axis| <= n/3` on every axis).
    pub fn retained(&self, idx: usize) -> bool {
        self.inner.retained[idx]
    }

    /// Whether `ξ_axis` is the unpaired Nyquist wavenumber `-n/2`.
    pub fn is_nyquist(&self, idx: usize, axis: usize) -> bool {
        self.inner.modes[idx][axis] == -(self.n() as i32 / 2)
    }

    /// Flat index of integer wavevector `m`, if it is representable.
    pub fn index_of(&self, m: [i32; 3]) -> Option<usize> {
        let n = self.n() as i32;
        let mut flat = 0usize;
        for (axis, &x) in m.iter().enumerate() {
            if axis >= self.dim() {
                if x != 0 {
                    return None;
                }
                continue;
            }
            if x < -n / 2 || x >= n / 2 {
                return None;
            }
            flat = flat * self.n() + x.rem_euclid(n) as usize;
        }
        Some(flat)
    }

    /// Physical coordinates of grid point `idx`.
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let n = self.n();
        let h = self.spacing();
        let mut x = [0.0; 3];
        let mut rest = idx;
        for axis in (0..self.dim()).rev() {
            x[axis] = (rest % n) as f64 * h;
            rest /= n;
        }
        x
    }

    fn fft_axes(&self, data: &mut [Complex64], inverse: bool) {
        debug_assert_eq!(data.len(), self.len());
        let n = self.n();
        let fft = if inverse { &self.inner.inverse } else { &self.inner.forward };
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        // last axis is contiguous: rustfft processes consecutive chunks as a batch
        fft.process_with_scratch(data, &mut scratch);
        if self.dim() == 1 {
            return;
        }
        let mut lines = vec![Complex64::new(0.0, 0.0); data.len()];
        for axis in 0..self.dim() - 1 {
            let stride = n.pow((self.dim() - 1 - axis) as u32);
            let block = n * stride;
            let mut pos = 0;
            for outer in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for k in 0..n {
                        lines[pos + k] = data[base + k * stride];
                    }
                    pos += n;
                }
            }
            fft.process_with_scratch(&mut lines, &mut scratch);
            let mut pos = 0;
            for outer in (0..data.len()).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for k in 0..n {
                        data[base + k * stride] = lines[pos + k];
                    }
                    pos += n;
                }
            }
        }
    }

    /// In-place forward transform normalised so a constant field `c` maps to coefficient `c` at ξ = 0.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.fft_axes(data, false);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    /// In-place inverse of [`Grid::forward`].
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.fft_axes(data, true);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wavevectors_cover_symmetric_range() {
        let g = Grid::periodic(2, 64).unwrap();
        let xs: Vec<i32> = g.modes().iter().map(|m| m[0]).collect();
        assert_eq!(*xs.iter().min().unwrap(), -32);
        assert_eq!(*xs.iter().max().unwrap(), 31);
        assert_eq!(g.len(), 64 * 64);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::periodic(2, 7).is_err());
        assert!(Grid::periodic(2, 4).is_err());
        assert!(Grid::periodic(1, 16).is_err());
        assert!(Grid::periodic(4, 16).is_err());
        assert!(Grid::new(2, 16, -1.0).is_err());
    }

    #[test]
    fn three_dimensional_mode_count() {
        let g = Grid::periodic(3, 32).unwrap();
        assert_eq!(g.len(), 32 * 32 * 32);
        assert_eq!(g.mode(g.index_of([3, -4, 5]).unwrap()), [3, -4, 5]);
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid::periodic(2, 16).unwrap();
        for idx in 0..g.len() {
            assert_eq!(g.index_of(g.mode(idx)), Some(idx));
        }
        assert_eq!(g.index_of([8, 0, 0]), None);
    }

    #[test]
    fn two_thirds_mask() {
        let g = Grid::periodic(2, 64).unwrap();
        assert!(g.retained(g.index_of([21, -21, 0]).unwrap()));
        assert!(!g.retained(g.index_of([22, 0, 0]).unwrap()));
    }
}
