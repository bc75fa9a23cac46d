use crate::error::{Error, Result};
use crate::process::ProcessSpec;

/// Strictly increasing, positive observation times. The origin is implicit:
/// every path starts at `X(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
    /// Common spacing when the grid is `T·(i+1)/m`; lets samplers reuse one
    /// transition pair for every step.
    spacing: Option<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("time grid is empty"));
        }
        if !points.iter().all(|t| t.is_finite()) || points[0] <= 0.0 {
            return Err(Error::invalid("grid points must be finite and positive"));
        }
        if let Some(w) = points.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "grid not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self {
            points,
            spacing: None,
        })
    }

    /// `m` equally spaced points `T/m, 2T/m, …, T`.
    pub fn uniform(horizon: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("grid size must be at least 1"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("grid horizon {horizon} must be positive")));
        }
        let points = (1..=m).map(|i| horizon * i as f64 / m as f64).collect();
        Ok(Self {
            points,
            spacing: Some(horizon / m as f64),
        })
    }

    #[inline]
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Last grid time.
    pub fn horizon(&self) -> f64 {
        *self.points.last().expect("grid is nonempty")
    }

    pub fn spacing(&self) -> Option<f64> {
        self.spacing
    }

    /// Length of the step ending at point `i` (the first step starts at 0).
    pub fn step(&self, i: usize) -> f64 {
        match self.spacing {
            Some(h) => h,
            None if i == 0 => self.points[0],
            None => self.points[i] - self.points[i - 1],
        }
    }

    /// Number of grid points `≤ t`.
    pub fn count_up_to(&self, t: f64) -> usize {
        self.points.partition_point(|&p| p <= t)
    }

    pub(crate) fn check_within(&self, spec: &ProcessSpec) -> Result<()> {
        if self.horizon() > spec.horizon() * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "grid extends to {} beyond horizon T = {}",
                self.horizon(),
                spec.horizon()
            )));
        }
        Ok(())
    }
}
