//! Fourier-multiplier calculus: derivatives, inverse Laplacian and 2/3-rule products.

use num_complex::Complex64;

use crate::error::{FlowError, Result};
use crate::field::{PhysicalField, SpectralField};

/// `∂^order f / ∂x_axis^order`, applied to every component.
///
/// For odd orders the unpaired Nyquist coefficient is zeroed so the result stays real.
pub fn derivative(f: &SpectralField, axis: usize, order: u32) -> Result<SpectralField> {
    let grid = f.grid();
    if axis >= grid.dim() {
        return Err(FlowError::InvalidAxis { axis, dim: grid.dim() });
    }
    if order == 0 {
        return Err(FlowError::InvalidOrder);
    }
    let len = grid.len();
    let symbols: Vec<Complex64> = (0..len)
        .map(|idx| {
            if order % 2 == 1 && grid.is_nyquist(idx, axis) {
                return Complex64::new(0.0, 0.0);
            }
            Complex64::new(0.0, grid.wavenumber(idx, axis)).powu(order)
        })
        .collect();
    let mut out = f.clone();
    for c in 0..f.components() {
        for (z, s) in out.component_mut(c).iter_mut().zip(&symbols) {
            *z *= s;
        }
    }
    Ok(out)
}

/// Gradient of a scalar field.
pub fn gradient(f: &SpectralField) -> Result<SpectralField> {
    if !f.is_scalar() {
        return Err(FlowError::ComponentMismatch("gradient expects a scalar field".into()));
    }
    let parts = (0..f.grid().dim())
        .map(|axis| derivative(f, axis, 1))
        .collect::<Result<Vec<_>>>()?;
    SpectralField::stack(&parts)
}

/// Divergence of a vector field.
pub fn divergence(v: &SpectralField) -> Result<SpectralField> {
    let dim = v.grid().dim();
    if v.components() != dim {
        return Err(FlowError::ComponentMismatch(format!(
            "divergence expects {dim} components, got {}",
            v.components()
        )));
    }
    let mut out = SpectralField::zeros(v.grid(), 1);
    for axis in 0..dim {
        let d = derivative(&v.extract(axis), axis, 1)?;
        out.axpy(1.0, &d);
    }
    Ok(out)
}

/// Componentwise Laplacian, `-|k|²` in Fourier space.
pub fn laplacian(f: &SpectralField) -> SpectralField {
    let k_sq = f.grid().k_sq();
    f.apply_multiplier(|idx| -k_sq[idx])
}

/// Inverse Laplacian with the zero mode annihilated.
pub fn inverse_laplacian(f: &SpectralField) -> SpectralField {
    let k_sq = f.grid().k_sq();
    f.apply_multiplier(|idx| if idx == 0 { 0.0 } else { -1.0 / k_sq[idx] })
}

/// 2/3-rule truncation: zeroes every mode with `|ξ_axis| > n/3` on some axis.
pub fn truncate(f: &SpectralField) -> SpectralField {
    let grid = f.grid().clone();
    f.apply_multiplier(|idx| if grid.retained(idx) { 1.0 } else { 0.0 })
}

/// Physical samples of the truncated field.
pub(crate) fn truncated_physical(f: &SpectralField) -> PhysicalField {
    truncate(f).to_physical()
}

/// Transform of physical samples followed by truncation.
pub(crate) fn truncated_spectral(p: &PhysicalField) -> SpectralField {
    truncate(&p.transform())
}

/// Dealiased pointwise product.
///
/// Scalar times scalar, scalar times vector (broadcast) and vector times vector
/// (componentwise, equal component counts) are supported. Both factors are
/// truncated by the 2/3 rule, multiplied on the grid and the result truncated again.
pub fn dealiased_product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    f.ensure_same_grid(g)?;
    let (fc, gc) = (f.components(), g.components());
    let out_components = match (fc, gc) {
        (a, b) if a == b => a,
        (1, b) => b,
        (a, 1) => a,
        _ => {
            return Err(FlowError::ComponentMismatch(format!(
                "cannot multiply {fc}-component by {gc}-component field"
            )))
        }
    };
    let pf = truncated_physical(f);
    let pg = truncated_physical(g);
    let len = f.grid().len();
    let mut samples = Vec::with_capacity(len * out_components);
    for c in 0..out_components {
        let a = pf.component(if fc == 1 { 0 } else { c });
        let b = pg.component(if gc == 1 { 0 } else { c });
        samples.extend(a.iter().zip(b).map(|(x, y)| x * y));
    }
    let prod = PhysicalField::new(f.grid(), out_components, samples)?;
    Ok(truncated_spectral(&prod))
}

/// Dealiased transport term `(w·∇) f` for a vector `w` and scalar or vector `f`.
pub fn advect(w: &SpectralField, f: &SpectralField) -> Result<SpectralField> {
    w.ensure_same_grid(f)?;
    let grid = w.grid();
    let dim = grid.dim();
    if w.components() != dim {
        return Err(FlowError::ComponentMismatch("advecting field must be a vector".into()));
    }
    let pw = truncated_physical(w);
    let len = grid.len();
    let mut samples = vec![0.0; len * f.components()];
    for axis in 0..dim {
        let df = truncated_physical(&derivative(f, axis, 1)?);
        let wa = pw.component(axis);
        for c in 0..f.components() {
            let out = &mut samples[c * len..(c + 1) * len];
            for ((o, x), y) in out.iter_mut().zip(wa).zip(df.component(c)) {
                *o += x * y;
            }
        }
    }
    Ok(truncated_spectral(&PhysicalField::new(grid, f.components(), samples)?))
}
