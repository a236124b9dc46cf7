//! Time grids, saved-frame sequences and time quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

/// Geometric start-up ramp: steps grow from `dt0` by `growth` until they reach the base step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub dt0: f64,
    pub growth: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub t0: f64,
    pub h: f64,
    pub save: bool,
}

/// Step sequence covering `[0, t_end]` exactly.
///
/// Ramp steps are always saved; afterwards every `save_every`-th step and the final step.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSchedule {
    steps: Vec<Step>,
    uniform: bool,
}

impl TimeSchedule {
    pub fn new(dt: f64, t_end: f64, save_every: usize, ramp: Option<Ramp>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(FlowError::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(FlowError::InvalidParameter(format!("t_end must be positive, got {t_end}")));
        }
        if save_every == 0 {
            return Err(FlowError::InvalidParameter("save_every must be at least 1".into()));
        }
        let mut steps = Vec::new();
        let mut t = 0.0;
        if let Some(r) = ramp {
            if !(r.dt0 > 0.0) || !(r.growth > 1.0) {
                return Err(FlowError::InvalidParameter(format!(
                    "ramp needs dt0 > 0 and growth > 1, got {r:?}"
                )));
            }
            let mut h = r.dt0;
            while h < dt && t + h < t_end {
                steps.push(Step { t0: t, h, save: true });
                t += h;
                h *= r.growth;
            }
        }
        let uniform = steps.is_empty();
        let rest = t_end - t;
        let count = (rest / dt - 1e-9).ceil().max(1.0) as usize;
        let h = rest / count as f64;
        for i in 0..count {
            let save = (i + 1) % save_every == 0 || i + 1 == count;
            steps.push(Step { t0: t + i as f64 * h, h, save });
        }
        Ok(Self { steps, uniform })
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn t_end(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.t0 + s.h)
    }

    /// Times of the initial frame and of every saved step end.
    pub fn save_times(&self) -> Vec<f64> {
        let mut times = vec![0.0];
        times.extend(self.steps.iter().filter(|s| s.save).map(|s| s.t0 + s.h));
        times
    }
}

pub trait Timed {
    fn time(&self) -> f64;
}

/// Frames ordered by strictly increasing time.
#[derive(Clone, Debug)]
pub struct Trajectory<F> {
    frames: Vec<F>,
}

impl<F> Default for Trajectory<F> {
    fn default() -> Self {
        Self { frames: Vec::new() }
    }
}

impl<F: Timed> Trajectory<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_frames(frames: Vec<F>) -> Result<Self> {
        let mut traj = Self::new();
        for f in frames {
            traj.push(f)?;
        }
        Ok(traj)
    }

    pub fn push(&mut self, frame: F) -> Result<()> {
        if let Some(last) = self.frames.last() {
            if !(frame.time() > last.time()) {
                return Err(FlowError::TimeGridMismatch(format!(
                    "frame at t = {} does not follow t = {}",
                    frame.time(),
                    last.time()
                )));
            }
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn frames(&self) -> &[F] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(Timed::time).collect()
    }

    pub fn first(&self) -> Result<&F> {
        self.frames.first().ok_or(FlowError::EmptyTrajectory)
    }

    pub fn last(&self) -> Result<&F> {
        self.frames.last().ok_or(FlowError::EmptyTrajectory)
    }
}

/// Running trapezoid integral, starting at 0.
pub fn cumulative_trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    assert_eq!(times.len(), values.len());
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        if i > 0 {
            acc += 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
        }
        out.push(acc);
    }
    out
}

pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    cumulative_trapezoid(times, values).last().copied().unwrap_or(0.0)
}

/// Running trapezoid integral with the endpoint-derivative correction `h²/12 (f'_a - f'_b)`.
pub fn cumulative_hermite(times: &[f64], values: &[f64], derivs: &[f64]) -> Vec<f64> {
    assert_eq!(times.len(), values.len());
    assert_eq!(times.len(), derivs.len());
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        if i > 0 {
            let h = times[i] - times[i - 1];
            acc += 0.5 * h * (values[i] + values[i - 1])
                + h * h / 12.0 * (derivs[i - 1] - derivs[i]);
        }
        out.push(acc);
    }
    out
}

pub fn running_max(values: &[f64]) -> Vec<f64> {
    let mut m = f64::NEG_INFINITY;
    values
        .iter()
        .map(|&v| {
            m = m.max(v);
            m
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct At(f64);
    impl Timed for At {
        fn time(&self) -> f64 {
            self.0
        }
    }

    #[test]
    fn uniform_schedule_lands_on_end() {
        let s = TimeSchedule::new(0.3, 1.0, 2, None).unwrap();
        assert_eq!(s.steps().len(), 4);
        assert!((s.t_end() - 1.0).abs() < 1e-15);
        assert_eq!(s.save_times().len(), 3);
        assert!(s.is_uniform());
        let exact = TimeSchedule::new(1e-3, 1.0, 1, None).unwrap();
        assert_eq!(exact.steps().len(), 1000);
    }

    #[test]
    fn ramp_grows_then_settles() {
        let s = TimeSchedule::new(0.01, 1.0, 10, Some(Ramp { dt0: 1e-5, growth: 1.5 })).unwrap();
        assert!(!s.is_uniform());
        let h: Vec<f64> = s.steps().iter().map(|st| st.h).collect();
        assert_eq!(h[0], 1e-5);
        assert!((h[1] - 1.5e-5).abs() < 1e-18 && (h[2] - 2.25e-5).abs() < 1e-18);
        assert!((s.t_end() - 1.0).abs() < 1e-14);
        assert!(h.iter().all(|&x| x <= 0.01 + 1e-15));
    }

    #[test]
    fn bad_schedule_rejected() {
        assert!(TimeSchedule::new(0.0, 1.0, 1, None).is_err());
        assert!(TimeSchedule::new(0.1, -1.0, 1, None).is_err());
        assert!(TimeSchedule::new(0.1, 1.0, 0, None).is_err());
    }

    #[test]
    fn trajectory_requires_increasing_time() {
        let mut t = Trajectory::new();
        t.push(At(0.0)).unwrap();
        t.push(At(0.5)).unwrap();
        assert!(t.push(At(0.5)).is_err());
        assert_eq!(t.times(), vec![0.0, 0.5]);
        assert!(Trajectory::<At>::new().first().is_err());
    }

    #[test]
    fn quadratures() {
        let t: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let lin: Vec<f64> = t.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((trapezoid(&t, &lin) - 2.0).abs() < 1e-14);
        let cube: Vec<f64> = t.iter().map(|x| x * x * x).collect();
        let dcube: Vec<f64> = t.iter().map(|x| 3.0 * x * x).collect();
        let h = cumulative_hermite(&t, &cube, &dcube);
        assert!((h[10] - 0.25).abs() < 1e-14);
        assert_eq!(running_max(&[1.0, 3.0, 2.0]), vec![1.0, 3.0, 3.0]);
    }
}
