//! Generic time integrators for `u_t = L u + N(u)` with a stiff linear part `L`
//! that is diagonal or block diagonal in Fourier space.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::field::SpectralField;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Variable-step semi-implicit BDF2, started with one IMEX Euler step.
    ImexBdf2,
    /// Lawson (integrating-factor) fourth-order Runge-Kutta with the exact linear propagator.
    #[default]
    IfRk4,
}

/// Default for systems with stiffly forced modes: L-stable, so quasi-steady states are
/// resolved at steps far above the relaxation time.
pub fn stiff_default() -> Integrator {
    Integrator::ImexBdf2
}

pub trait LinearPart {
    /// `e^{hL} u`.
    fn propagate(&self, u: &SpectralField, h: f64) -> SpectralField;
    /// `(α I - h L)^{-1} r`.
    fn solve_shifted(&self, r: &SpectralField, alpha: f64, h: f64) -> SpectralField;
}

/// One Lawson RK4 step.
pub fn lawson_rk4<L, N>(lin: &L, u: &SpectralField, h: f64, mut nl: N) -> Result<SpectralField>
where
    L: LinearPart + ?Sized,
    N: FnMut(&SpectralField) -> Result<SpectralField>,
{
    let half = 0.5 * h;
    let k1 = nl(u)?;
    let mut s = u.clone();
    s.axpy(half, &k1);
    let k2 = nl(&lin.propagate(&s, half))?;
    let eu = lin.propagate(u, half);
    let mut s = eu.clone();
    s.axpy(half, &k2);
    let k3 = nl(&s)?;
    let mut s = lin.propagate(&eu, half);
    s.axpy(h, &lin.propagate(&k3, half));
    let k4 = nl(&s)?;
    let mut mid = k2;
    mid.axpy(1.0, &k3);
    let mut out = lin.propagate(u, h);
    out.axpy(h / 6.0, &lin.propagate(&k1, h));
    out.axpy(h / 3.0, &lin.propagate(&mid, half));
    out.axpy(h / 6.0, &k4);
    Ok(out)
}

/// Multistep memory of the IMEX-BDF2 scheme.
#[derive(Clone, Debug)]
pub struct Bdf2History {
    prev: SpectralField,
    prev_nl: SpectralField,
    prev_h: f64,
}

/// One IMEX step; IMEX Euler when `history` is empty, variable-step BDF2 otherwise.
/// `history` is updated in place.
pub fn imex_bdf2<L, N>(
    lin: &L,
    u: &SpectralField,
    h: f64,
    history: &mut Option<Bdf2History>,
    mut nl: N,
) -> Result<SpectralField>
where
    L: LinearPart + ?Sized,
    N: FnMut(&SpectralField) -> Result<SpectralField>,
{
    let n_now = nl(u)?;
    let next = match history.as_ref() {
        None => {
            let mut rhs = u.clone();
            rhs.axpy(h, &n_now);
            lin.solve_shifted(&rhs, 1.0, h)
        }
        Some(hist) => {
            let w = h / hist.prev_h;
            let alpha = (1.0 + 2.0 * w) / (1.0 + w);
            let mut rhs = u.scale(1.0 + w);
            rhs.axpy(-w * w / (1.0 + w), &hist.prev);
            rhs.axpy(h * (1.0 + w), &n_now);
            rhs.axpy(-h * w, &hist.prev_nl);
            lin.solve_shifted(&rhs, alpha, h)
        }
    };
    *history = Some(Bdf2History { prev: u.clone(), prev_nl: n_now, prev_h: h });
    Ok(next)
}
