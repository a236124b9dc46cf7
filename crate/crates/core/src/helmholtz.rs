//! Leray/Helmholtz projectors.
//!
//! `Q` keeps the potential part, `(Qv)^(ξ) = ξ ξᵀ/|ξ|² v̂(ξ)`, and `P = Id - Q`.
//! The zero mode belongs to `P`: a constant velocity is divergence free.

use num_complex::Complex64;

use crate::error::{FlowError, Result};
use crate::field::SpectralField;

fn ensure_vector(v: &SpectralField) -> Result<()> {
    let dim = v.grid().dim();
    if v.components() != dim {
        return Err(FlowError::ComponentMismatch(format!(
            "projection needs a {dim}-component vector field, got {}",
            v.components()
        )));
    }
    Ok(())
}

/// Potential (curl-free) part of `v`.
pub fn project_q(v: &SpectralField) -> Result<SpectralField> {
    ensure_vector(v)?;
    let grid = v.grid();
    let dim = grid.dim();
    let k_sq = grid.k_sq();
    let mut out = SpectralField::zeros(grid, dim);
    let mut k = [0.0; 3];
    for idx in 1..grid.len() {
        for (axis, ka) in k.iter_mut().enumerate().take(dim) {
            *ka = grid.wavenumber(idx, axis);
        }
        let mut dot = Complex64::new(0.0, 0.0);
        for (axis, ka) in k.iter().enumerate().take(dim) {
            dot += v.component(axis)[idx] * ka;
        }
        let dot = dot / k_sq[idx];
        for (axis, ka) in k.iter().enumerate().take(dim) {
            out.component_mut(axis)[idx] = dot * ka;
        }
    }
    Ok(out)
}

/// Divergence-free part of `v`, including its mean.
pub fn project_p(v: &SpectralField) -> Result<SpectralField> {
    let q = project_q(v)?;
    Ok(v - &q)
}

/// `(Pv, Qv)` in one pass.
pub fn split(v: &SpectralField) -> Result<(SpectralField, SpectralField)> {
    let q = project_q(v)?;
    Ok((v - &q, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::spectral::{divergence, gradient};

    #[test]
    fn gradients_are_fixed_points_of_q() {
        let g = Grid::periodic(2, 32).unwrap();
        let pot = SpectralField::from_fn(&g, 1, |x, _| x[0].sin() * x[1].sin());
        let v = gradient(&pot).unwrap();
        assert!(project_q(&v).unwrap().max_coeff_diff(&v) < 1e-15);
        assert!(project_p(&v).unwrap().max_coeff() < 1e-15);
    }

    #[test]
    fn shear_is_divergence_free() {
        let g = Grid::periodic(2, 32).unwrap();
        let v = SpectralField::from_fn(&g, 2, |x, c| if c == 0 { -x[1].sin() } else { 0.0 });
        assert!(project_q(&v).unwrap().max_coeff() < 1e-15);
        assert!(project_p(&v).unwrap().max_coeff_diff(&v) < 1e-15);
    }

    #[test]
    fn mean_goes_to_p() {
        let g = Grid::periodic(3, 8).unwrap();
        let v = SpectralField::from_fn(&g, 3, |x, c| 1.0 + c as f64 + x[2].sin());
        let (p, q) = split(&v).unwrap();
        assert_eq!(q.mean(), vec![0.0; 3]);
        assert_eq!(p.mean(), v.mean());
        assert!(divergence(&p).unwrap().max_coeff() < 1e-14);
    }

    #[test]
    fn scalar_rejected() {
        let g = Grid::periodic(2, 8).unwrap();
        assert!(project_q(&SpectralField::zeros(&g, 1)).is_err());
    }
}
