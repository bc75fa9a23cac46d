//! Numerical laboratory for the step-n Kolmogorov diffusion
//! `X = (b, ∫b, ∫∫b, …)`: exact Gaussian law, exact grid sampling,
//! small-ball probability estimation and Chung-LIL diagnostics.
//!
//! ```
//! use kolmo_core::{cov_kernel, ProcessSpec};
//!
//! let spec = ProcessSpec::new(2, 1.0).unwrap();
//! // Var(∫₀¹ b) = 1/3
//! assert!((cov_kernel(&spec, 2, 2, 1.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
//! ```

pub mod error;
pub mod grid;
pub mod lil;
pub mod process;
pub mod simulate;
pub mod smallball;
pub mod stats;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use lil::{
    component_sandwich_check, lil_statistic_infinity, lil_statistic_zero, InfinityRecord, LilSeries, Regime,
    ZeroRegimeReport,
};
pub use process::{
    cov_kernel, cov_matrix, propagated_cov_matrix, scaling_check, scaling_check_cross, transition, ProcessSpec,
    TransitionPair, CHUNG_BM, LAMBDA_1, MAX_STEP,
};
pub use simulate::{
    batch_map, path_seed, running_max, simulate, simulate_batch, simulate_cholesky, simulate_transition,
    CholeskySampler, Ensemble, PathSample, RunningMax, SamplerMethod, TransitionSampler,
};
pub use smallball::{
    bm_smallball_exact, domination_check, estimate_smallball, gci_rectangle_check, grid_trace, rate_curve,
    small_deviation_sandwich, splitting_lower_bound, GciReport, ProbabilityEstimate, RatePoint, SandwichPoint,
    SplitConvention, SplitWeights,
};
