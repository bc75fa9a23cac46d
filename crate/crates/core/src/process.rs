//! Exact Gaussian law of the step-n Kolmogorov diffusion.
//!
//! The process is `X = (b, ∫b, ∫∫b, …)` with components indexed `d = 1..=n`.
//! Every component is a linear functional of one Brownian motion,
//!
//! ```text
//! X_d(t) = ∫₀ᵗ (t − u)^(d−1) / (d−1)! db_u,
//! ```
//!
//! so the covariance kernel, the one-step transition maps and the innovation
//! covariance all have closed forms in terms of polynomials in the times.
//! Nothing in this module uses quadrature.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Largest supported diffusion step. Above this the factorial scaling of the
/// higher components leaves double precision.
pub const MAX_STEP: usize = 12;

/// `k!` for `k = 0..=2 * MAX_STEP`.
pub(crate) const FACTORIAL: [f64; 2 * MAX_STEP + 1] = {
    let mut table = [1.0f64; 2 * MAX_STEP + 1];
    let mut k = 1;
    while k < table.len() {
        table[k] = table[k - 1] * k as f64;
        k += 1;
    }
    table
};

/// Lowest Dirichlet eigenvalue of `−½ d²/dx²` on `(−1, 1)`, i.e. `π²/8`.
pub const LAMBDA_1: f64 = std::f64::consts::PI * std::f64::consts::PI / 8.0;

/// Chung's constant for Brownian motion, `π/√8 = √λ₁`.
pub const CHUNG_BM: f64 = std::f64::consts::PI / (2.0 * std::f64::consts::SQRT_2);

/// Which diffusion is under study: the step `n` and the time horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ProcessSpec {
    n: usize,
    horizon: f64,
}

impl ProcessSpec {
    pub fn new(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 || n > MAX_STEP {
            return Err(Error::invalid(format!(
                "step n = {n} outside 1..={MAX_STEP}"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!(
                "horizon T = {horizon} must be positive and finite"
            )));
        }
        Ok(Self { n, horizon })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn check_component(&self, d: usize) -> Result<()> {
        if d == 0 || d > self.n {
            return Err(Error::invalid(format!(
                "component index {d} outside 1..={}",
                self.n
            )));
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.horizon * (1.0 + 1e-12)) {
            return Err(Error::invalid(format!(
                "time {t} outside [0, {}]",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// `Cov(X_j(s), X_k(t))` without argument checks; `j, k` are 1-based.
///
/// With `m = min(s, t)` and the lag `δ = |t − s|` the defining integral becomes
/// a sum of positive terms, so there is no cancellation:
/// for `s ≤ t`, `K = Σᵢ C(k−1, i) δ^(k−1−i) m^(j+i) / (j+i) / ((j−1)!(k−1)!)`.
pub(crate) fn kernel(j: usize, k: usize, s: f64, t: f64) -> f64 {
    // Orient so that `lead` is the component evaluated at the earlier time.
    let (lead, lag, m, delta) = if s <= t {
        (j, k, s, t - s)
    } else {
        (k, j, t, s - t)
    };
    if m <= 0.0 {
        return 0.0;
    }
    let r = lag - 1;
    let mut acc = 0.0;
    let mut binom = 1.0;
    for i in 0..=r {
        let p = lead + i;
        acc += binom * delta.powi((r - i) as i32) * m.powi(p as i32) / p as f64;
        binom = binom * (r - i) as f64 / (i + 1) as f64;
    }
    acc / (FACTORIAL[j - 1] * FACTORIAL[k - 1])
}

/// Covariance `Cov(X_j(s), X_k(t))` of components `j` and `k` (1-based).
pub fn cov_kernel(spec: &ProcessSpec, j: usize, k: usize, s: f64, t: f64) -> Result<f64> {
    spec.check_component(j)?;
    spec.check_component(k)?;
    spec.check_time(s)?;
    spec.check_time(t)?;
    Ok(kernel(j, k, s, t))
}

#[inline]
pub(crate) fn flat_index(n: usize, i: usize, d: usize) -> usize {
    i * n + (d - 1)
}

/// Full covariance of the stacked vector `(X(t_0), X(t_1), …)`, time-major:
/// row `i·n + (j−1)` is component `j` at grid point `t_i`.
pub fn cov_matrix(spec: &ProcessSpec, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    grid.check_within(spec)?;
    let n = spec.n();
    let times = grid.points();
    let dim = n * times.len();
    let mut cov = DMatrix::zeros(dim, dim);
    for (a, &s) in times.iter().enumerate() {
        for (b, &t) in times.iter().enumerate().skip(a) {
            for j in 1..=n {
                for k in 1..=n {
                    let v = kernel(j, k, s, t);
                    let (r, c) = (flat_index(n, a, j), flat_index(n, b, k));
                    cov[(r, c)] = v;
                    cov[(c, r)] = v;
                }
            }
        }
    }
    Ok(cov)
}

/// Exact one-step law: `X(t + h) | X(t) = x  ~  N(A(h)·x, Q(h))`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionPair {
    pub step: f64,
    /// `A(h)`, lower triangular with entries `h^(d−j)/(d−j)!`.
    pub drift_map: DMatrix<f64>,
    /// `Q(h)`, entries `h^(j+k−1) / ((j+k−1)(j−1)!(k−1)!)`.
    pub noise_cov: DMatrix<f64>,
    /// Lower-triangular `L(h)` with `L Lᵀ = Q(h)`.
    pub noise_factor: DMatrix<f64>,
}

pub(crate) fn drift_entry(d: usize, j: usize, h: f64) -> f64 {
    if j > d {
        0.0
    } else {
        h.powi((d - j) as i32) / FACTORIAL[d - j]
    }
}

/// Cholesky factor of the Hilbert matrix `1/(j+k−1)`, entry `(j, k)` with
/// `k ≤ j`. The Hilbert matrix is the Gram matrix of monomials on `[0, 1]`,
/// so its factor holds the coefficients of `u^(j−1)` on the orthonormal
/// shifted Legendre basis:
/// `√(2q+1) (p!)² / ((p−q)! (p+q+1)!)` with `p = j−1`, `q = k−1`.
fn hilbert_factor_entry(j: usize, k: usize) -> f64 {
    if k > j {
        return 0.0;
    }
    let (p, q) = (j - 1, k - 1);
    ((2 * q + 1) as f64).sqrt() * FACTORIAL[p] * FACTORIAL[p] / (FACTORIAL[p - q] * FACTORIAL[p + q + 1])
}

/// `L(h)_{jk} = h^(j−½)/(j−1)! · G_{jk}`, since `Q(h) = D H D` with
/// `D = diag(h^(j−½)/(j−1)!)` and `H` the Hilbert matrix.
pub(crate) fn noise_factor_entry(j: usize, k: usize, h: f64) -> f64 {
    if k > j {
        return 0.0;
    }
    h.powi(j as i32 - 1) * h.sqrt() / FACTORIAL[j - 1] * hilbert_factor_entry(j, k)
}

pub(crate) fn noise_cov_entry(j: usize, k: usize, h: f64) -> f64 {
    let p = j + k - 1;
    h.powi(p as i32) / (p as f64 * FACTORIAL[j - 1] * FACTORIAL[k - 1])
}

pub fn transition(spec: &ProcessSpec, h: f64) -> Result<TransitionPair> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("step h = {h} must be positive")));
    }
    let n = spec.n();
    Ok(TransitionPair {
        step: h,
        drift_map: DMatrix::from_fn(n, n, |r, c| drift_entry(r + 1, c + 1, h)),
        noise_cov: DMatrix::from_fn(n, n, |r, c| noise_cov_entry(r + 1, c + 1, h)),
        noise_factor: DMatrix::from_fn(n, n, |r, c| noise_factor_entry(r + 1, c + 1, h)),
    })
}

/// Same layout as [`cov_matrix`], but assembled only from transition pairs:
/// `Σ₀ = Q(t₀)`, `Σᵢ = A Σᵢ₋₁ Aᵀ + Q`, and cross blocks
/// `Cov(X(tᵢ), X(tᵢ')) = Cov(X(tᵢ), X(tᵢ'₋₁)) A(Δ)ᵀ`.
pub fn propagated_cov_matrix(spec: &ProcessSpec, grid: &TimeGrid) -> Result<DMatrix<f64>> {
    grid.check_within(spec)?;
    let n = spec.n();
    let times = grid.points();
    let m = times.len();
    let mut steps = Vec::with_capacity(m);
    let mut prev = 0.0;
    for &t in times {
        steps.push(transition(spec, t - prev)?);
        prev = t;
    }

    let mut cov = DMatrix::zeros(n * m, n * m);
    let mut marginal = DMatrix::<f64>::zeros(n, n);
    for i in 0..m {
        let pair = &steps[i];
        marginal = &pair.drift_map * &marginal * pair.drift_map.transpose() + &pair.noise_cov;
        cov.view_mut((i * n, i * n), (n, n)).copy_from(&marginal);
        let mut cross = marginal.clone();
        for (l, next) in steps.iter().enumerate().skip(i + 1) {
            cross = &cross * next.drift_map.transpose();
            cov.view_mut((i * n, l * n), (n, n)).copy_from(&cross);
            cov.view_mut((l * n, i * n), (n, n))
                .copy_from(&cross.transpose());
        }
    }
    Ok(cov)
}

/// `(K_dd(εs, εt), ε^(2d−1) K_dd(s, t))`; the two agree because
/// `X_d(ε·)` has the law of `ε^((2d−1)/2) X_d(·)`.
pub fn scaling_check(spec: &ProcessSpec, d: usize, eps: f64, s: f64, t: f64) -> Result<(f64, f64)> {
    scaling_check_cross(spec, d, d, eps, s, t)
}

/// Cross-component version: `(K_jk(εs, εt), ε^(j+k−1) K_jk(s, t))`.
pub fn scaling_check_cross(
    spec: &ProcessSpec,
    j: usize,
    k: usize,
    eps: f64,
    s: f64,
    t: f64,
) -> Result<(f64, f64)> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(format!("scale ε = {eps} must be positive")));
    }
    let scaled = cov_kernel(spec, j, k, eps * s, eps * t)?;
    let base = cov_kernel(spec, j, k, s, t)?;
    Ok((scaled, eps.powi((j + k - 1) as i32) * base))
}
