//! Uniform time grids and truncated state/action grids.
//!
//! Continuous state and action axes are replaced by finite uniform grids; a
//! value is mapped onto its grid by nearest-point projection with clamping at
//! the bounds. All tabular objects in this crate index into these grids.

use crate::error::{Error, Result};

/// Uniform time discretization `t_n = n * dt` with `t_0 = 0` and
/// `t_{n_steps} = horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "time horizon must be positive and finite, got {horizon}"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidGrid("time grid needs at least one step".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `N_T`; there are `N_T + 1` grid points.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// The grid point `t_n`. The final point is exactly `horizon`.
    pub fn point(&self, n: usize) -> f64 {
        debug_assert!(n <= self.n_steps);
        if n == self.n_steps {
            self.horizon
        } else {
            n as f64 * self.dt()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n_points()).map(|n| self.point(n)).collect()
    }
}

/// A truncated uniform grid standing in for a continuous axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpace {
    lower: f64,
    upper: f64,
    step: f64,
    len: usize,
}

impl DiscreteSpace {
    /// Builds the grid `{lower, lower + step, ..., upper}`. The span must be
    /// an integer multiple of `step` (within a small relative tolerance).
    pub fn new(lower: f64, upper: f64, step: f64) -> Result<Self> {
        if !step.is_finite() || step <= 0.0 {
            return Err(Error::InvalidGrid(format!("grid step must be positive, got {step}")));
        }
        if !lower.is_finite() || !upper.is_finite() || upper <= lower {
            return Err(Error::InvalidGrid(format!(
                "grid bounds must satisfy lower < upper, got [{lower}, {upper}]"
            )));
        }
        let intervals = (upper - lower) / step;
        let rounded = intervals.round();
        if (intervals - rounded).abs() > 1e-6 * rounded.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "span {} is not a multiple of step {step}",
                upper - lower
            )));
        }
        let len = rounded as usize + 1;
        if len < 2 {
            return Err(Error::InvalidGrid("grid needs at least two points".into()));
        }
        Ok(Self { lower, upper, step, len })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The grid point at index `i`. The last point is exactly `upper`.
    pub fn value(&self, i: usize) -> f64 {
        debug_assert!(i < self.len);
        if i + 1 == self.len {
            self.upper
        } else {
            self.lower + i as f64 * self.step
        }
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.value(i))
    }

    /// Index of the grid point nearest to `v`. Values outside the bounds
    /// clamp; an exact midpoint rounds toward the lower grid point.
    pub fn project_index(&self, v: f64) -> usize {
        if !(v > self.lower) {
            return 0;
        }
        if v >= self.upper {
            return self.len - 1;
        }
        let cell = (((v - self.lower) / self.step).floor() as usize).min(self.len - 2);
        let below = self.value(cell);
        let above = self.value(cell + 1);
        // Strict inequality sends ties to the lower point.
        if above - v < v - below {
            cell + 1
        } else {
            cell
        }
    }

    /// The grid point nearest to `v`; total on all of `f64` (NaN clamps low).
    pub fn project(&self, v: f64) -> f64 {
        self.value(self.project_index(v))
    }
}
