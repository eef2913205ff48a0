use crate::{Error, Result};

/// Uniform time grid `t_n = n * dt` for `n = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("time step must be positive and finite"));
        }
        Ok(Self { dt, steps })
    }

    /// Grid covering `[0, t_final]` with the step rounded so that the last
    /// point lands exactly on `t_final`.
    pub fn covering(t_final: f64, dt: f64) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::invalid("final time must be positive"));
        }
        if !(dt.is_finite() && dt > 0.0) || dt > t_final {
            return Err(Error::invalid("time step must satisfy 0 < dt <= t_final"));
        }
        let steps = libm::round(t_final / dt).max(1.0) as usize;
        Self::new(t_final / steps as f64, steps)
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps; there are `steps + 1` grid points.
    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn t(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn t_final(&self) -> f64 {
        self.t(self.steps)
    }

    /// Index of the grid point closest to `t`, if `t` lies on the grid
    /// within a relative tolerance of `1e-9` of the step.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.dt;
        let n = libm::round(x);
        if n < 0.0 || (x - n).abs() > 1e-9 || n as usize > self.steps {
            None
        } else {
            Some(n as usize)
        }
    }

    /// Same grid up to a relative step tolerance of `1e-12`.
    pub fn matches(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps && (self.dt - other.dt).abs() <= 1e-12 * self.dt
    }

    pub fn ensure_matches(&self, other: &TimeGrid) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// The same step with fewer points.
    pub fn truncated(&self, steps: usize) -> TimeGrid {
        TimeGrid { dt: self.dt, steps: steps.min(self.steps) }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |n| self.t(n))
    }
}
