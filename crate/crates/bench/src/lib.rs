//! Shared fixtures for the criterion benches.

use kolmo_core::{Ensemble, ProcessSpec, TimeGrid};

/// Default experiment grid: 2^12 uniform points on `[0, T]`.
pub const DEFAULT_GRID: usize = 1 << 12;

pub fn uniform(n: usize, horizon: f64, m: usize) -> (ProcessSpec, TimeGrid) {
    (
        ProcessSpec::new(n, horizon).expect("valid spec"),
        TimeGrid::uniform(horizon, m).expect("valid grid"),
    )
}

pub fn ensemble(n: usize, m: usize, samples: usize) -> Ensemble {
    Ensemble::new(ProcessSpec::new(n, 1.0).expect("valid spec"), m, samples, 0).expect("valid ensemble")
}
