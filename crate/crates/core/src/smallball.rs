//! Small-ball probabilities `P(X*_T < ε)` and the pieces of the
//! Gaussian-correlation argument that bounds them.
//!
//! All estimators run on an [`Ensemble`], so estimates taken from the same
//! ensemble are computed on the same paths and their indicator events nest
//! pathwise. Running maxima are taken over the grid points only, which biases
//! probabilities upward; [`grid_trace`] measures how much.

use std::ops::ControlFlow;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::{LAMBDA_1, MAX_STEP};
use crate::simulate::{Ensemble, PathSample, TransitionSampler};
use crate::stats::{binomial_se, wilson_interval, zero_hit_upper};

const THETA_TAIL: f64 = 1e-16;

/// Below this value of `π²T/(8ε²)` the theta series converges slowly and the
/// method-of-images series is summed instead.
const THETA_SWITCH: f64 = 0.05;

/// Exact `P(max_{[0,T]} |b| < ε)` for a standard Brownian motion.
///
/// Theta series
/// `(4/π) Σ_{k≥0} (−1)^k/(2k+1) · exp(−(2k+1)² π² T / (8ε²))`, truncated once
/// the next term drops below `1e-16`. For very wide tubes the equivalent
/// reflection series in normal tails is used.
pub fn bm_smallball_exact(horizon: f64, eps: f64) -> Result<f64> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon {horizon} must be positive")));
    }
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("radius ε = {eps} must be positive")));
    }
    if eps.is_infinite() {
        return Ok(1.0);
    }
    let x = LAMBDA_1 * horizon / (eps * eps);
    let p = if x >= THETA_SWITCH {
        theta_series(x)
    } else {
        reflection_series(eps / horizon.sqrt())
    };
    Ok(p.clamp(0.0, 1.0))
}

fn theta_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut k = 0u32;
    loop {
        let odd = (2 * k + 1) as f64;
        let term = (-odd * odd * x).exp() / odd;
        if term < THETA_TAIL && k > 0 {
            break;
        }
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        k += 1;
    }
    4.0 / std::f64::consts::PI * sum
}

fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// `Σ_k (−1)^k [Φ((2k+1)a) − Φ((2k−1)a)]` with `a = ε/√T`.
fn reflection_series(a: f64) -> f64 {
    let mut p = 1.0 - 2.0 * normal_tail(a);
    for k in 1u32.. {
        let term = 2.0 * (normal_tail((2 * k - 1) as f64 * a) - normal_tail((2 * k + 1) as f64 * a));
        if term < THETA_TAIL {
            break;
        }
        if k % 2 == 1 {
            p -= term;
        } else {
            p += term;
        }
    }
    p
}

/// Monte Carlo estimate of a small-ball probability with a 95% Wilson
/// interval. With zero hits the upper end is the exact one-sided bound
/// `1 − 0.05^(1/N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub epsilon: f64,
    pub horizon: f64,
    pub n_samples: u64,
    pub n_hits: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub grid_size: usize,
}

impl ProbabilityEstimate {
    pub fn from_counts(epsilon: f64, horizon: f64, n_hits: u64, n_samples: u64, grid_size: usize) -> Self {
        let (ci_low, ci_high) = if n_hits == 0 {
            (0.0, zero_hit_upper(n_samples))
        } else {
            wilson_interval(n_hits, n_samples)
        };
        Self {
            epsilon,
            horizon,
            n_samples,
            n_hits,
            p_hat: n_hits as f64 / n_samples as f64,
            ci_low,
            ci_high,
            grid_size,
        }
    }

    pub fn se(&self) -> f64 {
        binomial_se(self.n_hits, self.n_samples)
    }
}

/// `−ε² log p̂` with the interval carried over from the probability CI.
/// Censored points (no hits) report the lower bound `−ε² log ci_high` as
/// `rate` and an infinite upper end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub epsilon: f64,
    pub rate: f64,
    pub rate_lo: f64,
    pub rate_hi: f64,
    pub censored: bool,
    pub estimate: ProbabilityEstimate,
}

fn scaled_neg_log(eps: f64, p: f64) -> f64 {
    if p <= 0.0 {
        f64::INFINITY
    } else {
        // `−0.0` would print as "-0" in reports.
        (-(eps * eps) * p.ln()).max(0.0)
    }
}

impl RatePoint {
    pub fn from_estimate(estimate: ProbabilityEstimate) -> Self {
        let eps = estimate.epsilon;
        let censored = estimate.n_hits == 0;
        let rate_lo = scaled_neg_log(eps, estimate.ci_high);
        let rate_hi = scaled_neg_log(eps, estimate.ci_low);
        let rate = if censored { rate_lo } else { scaled_neg_log(eps, estimate.p_hat) };
        Self {
            epsilon: eps,
            rate,
            rate_lo,
            rate_hi,
            censored,
            estimate,
        }
    }

    pub fn ci_width(&self) -> f64 {
        self.rate_hi - self.rate_lo
    }
}

/// How the splitting weights relate to the unit Euclidean ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum SplitConvention {
    /// `Σ x_d = 1`: the ℓ¹ splitting `|X| ≤ Σ|X_d|`; implies `Σ x_d² ≤ 1`.
    #[default]
    SumToOne,
    /// Only `Σ x_d² ≤ 1`, the sharpest condition under which
    /// `{∀d: max|X_d| < x_d ε} ⊆ {X* < ε}`.
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitWeights {
    x: Vec<f64>,
    convention: SplitConvention,
}

impl SplitWeights {
    pub fn new(x: Vec<f64>, convention: SplitConvention) -> Result<Self> {
        if x.is_empty() || x.len() > MAX_STEP {
            return Err(Error::invalid(format!("{} weights given", x.len())));
        }
        if let Some(bad) = x.iter().find(|&&w| !(w > 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!("weight {bad} is not positive")));
        }
        match convention {
            SplitConvention::SumToOne => {
                let s: f64 = x.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!("weights sum to {s}, not 1")));
                }
            }
            SplitConvention::Euclidean => {
                let s: f64 = x.iter().map(|w| w * w).sum();
                if s > 1.0 + 1e-12 {
                    return Err(Error::invalid(format!("squared weights sum to {s} > 1")));
                }
            }
        }
        Ok(Self { x, convention })
    }

    /// `(0.9, 0.1/(n−1), …)`, or `(1)` when `n = 1`.
    pub fn default_for(n: usize) -> Self {
        let x = if n == 1 {
            vec![1.0]
        } else {
            std::iter::once(0.9)
                .chain(std::iter::repeat(0.1 / (n - 1) as f64).take(n - 1))
                .collect()
        };
        Self {
            x,
            convention: SplitConvention::SumToOne,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.x
    }

    pub fn convention(&self) -> SplitConvention {
        self.convention
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Running maxima of `|X|` and each `|X_d|`, walked until every tracked
/// quantity has reached its cap. Values at or beyond a cap are only known
/// to be `≥ cap`, which is all a strict `< threshold ≤ cap` test needs.
#[derive(Debug, Clone, Copy)]
struct CappedMaxima {
    norm: f64,
    comps: [f64; MAX_STEP],
}

fn capped_maxima(sampler: &TransitionSampler, seed: u64, norm_cap: f64, comp_caps: &[f64]) -> CappedMaxima {
    let n = sampler.spec().n();
    let norm_cap_sq = norm_cap * norm_cap;
    let mut norm_sq = 0.0f64;
    let mut comps = [0.0f64; MAX_STEP];
    sampler.walk(seed, |_, x| {
        let mut sq = 0.0;
        let mut open = false;
        for d in 0..n {
            let v = x[d];
            sq += v * v;
            let a = v.abs();
            if a > comps[d] {
                comps[d] = a;
            }
            open |= comps[d] < comp_caps[d];
        }
        if sq > norm_sq {
            norm_sq = sq;
        }
        if open || norm_sq < norm_cap_sq {
            ControlFlow::Continue(())
        } else {
            ControlFlow::Break(())
        }
    });
    CappedMaxima {
        norm: norm_sq.sqrt(),
        comps,
    }
}

fn add_counts(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || eps.is_nan() {
        return Err(Error::invalid(format!("radius ε = {eps} must be positive")));
    }
    Ok(())
}

/// `P(X*_T < ε)` with `X*` the Euclidean running max over the grid.
pub fn estimate_smallball(ensemble: &Ensemble, eps: f64) -> Result<ProbabilityEstimate> {
    Ok(rate_curve(ensemble, &[eps])?[0].estimate)
}

/// One rate point per `ε`, all from the same paths (so `p̂` is monotone in ε).
pub fn rate_curve(ensemble: &Ensemble, eps_list: &[f64]) -> Result<Vec<RatePoint>> {
    if eps_list.is_empty() {
        return Err(Error::invalid("empty ε list"));
    }
    for &e in eps_list {
        check_eps(e)?;
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("ε list must be strictly decreasing"));
    }
    let cap = eps_list[0];
    let no_caps = [0.0; MAX_STEP];
    let counts = ensemble.fold_paths(
        || vec![0u64; eps_list.len()],
        |acc, sampler, seed| {
            let m = capped_maxima(sampler, seed, cap, &no_caps);
            for (c, &e) in acc.iter_mut().zip(eps_list) {
                if m.norm < e {
                    *c += 1;
                }
            }
        },
        add_counts,
    );
    let (t, n, m) = (ensemble.spec().horizon(), ensemble.n_samples() as u64, ensemble.grid().len());
    Ok(eps_list
        .iter()
        .zip(counts)
        .map(|(&e, hits)| RatePoint::from_estimate(ProbabilityEstimate::from_counts(e, t, hits, n, m)))
        .collect())
}

/// The small-deviation sandwich at one ε, all on shared paths:
/// `brownian_reference ≤ rate ≤ splitting_reference` up to Monte Carlo and
/// grid error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SandwichPoint {
    pub epsilon: f64,
    pub rate: RatePoint,
    /// `P̂(max|X_d| < x_d ε)` for each `d`.
    pub marginals: Vec<ProbabilityEstimate>,
    /// `P̂(∀d: max|X_d| < x_d ε)`.
    pub rectangle: ProbabilityEstimate,
    /// `P̂(max|X_1| < ε)`, the Brownian marginal on the same paths.
    pub brownian_marginal: ProbabilityEstimate,
    /// `Π_d P̂(max|X_d| < x_d ε)`.
    pub product_bound: f64,
    /// `−ε² log P(max|b| < ε)` from the theta series.
    pub brownian_reference: f64,
    /// `−ε² Σ_d log P̂(max|X_d| < x_d ε)`.
    pub splitting_reference: f64,
}

pub fn small_deviation_sandwich(
    ensemble: &Ensemble,
    eps_list: &[f64],
    weights: &SplitWeights,
) -> Result<Vec<SandwichPoint>> {
    let n = ensemble.spec().n();
    if weights.len() != n {
        return Err(Error::invalid(format!("{} weights for n = {n}", weights.len())));
    }
    if eps_list.is_empty() {
        return Err(Error::invalid("empty ε list"));
    }
    for &e in eps_list {
        check_eps(e)?;
    }
    let cap = eps_list.iter().copied().fold(0.0, f64::max);
    let mut caps = [0.0; MAX_STEP];
    caps[0] = cap;
    for d in 1..n {
        caps[d] = weights.weights()[d] * cap;
    }
    // Per ε: joint, rectangle, brownian marginal, then n weighted marginals.
    let stride = 3 + n;
    let counts = ensemble.fold_paths(
        || vec![0u64; stride * eps_list.len()],
        |acc, sampler, seed| {
            let m = capped_maxima(sampler, seed, cap, &caps);
            for (e_idx, &e) in eps_list.iter().enumerate() {
                let base = e_idx * stride;
                acc[base] += (m.norm < e) as u64;
                let mut inside = true;
                for d in 0..n {
                    let hit = m.comps[d] < weights.weights()[d] * e;
                    inside &= hit;
                    acc[base + 3 + d] += hit as u64;
                }
                acc[base + 1] += inside as u64;
                acc[base + 2] += (m.comps[0] < e) as u64;
            }
        },
        add_counts,
    );

    let (t, total, grid_size) = (ensemble.spec().horizon(), ensemble.n_samples() as u64, ensemble.grid().len());
    eps_list
        .iter()
        .enumerate()
        .map(|(e_idx, &e)| {
            let c = &counts[e_idx * stride..(e_idx + 1) * stride];
            let est = |hits: u64, radius: f64| ProbabilityEstimate::from_counts(radius, t, hits, total, grid_size);
            let marginals: Vec<_> = (0..n).map(|d| est(c[3 + d], weights.weights()[d] * e)).collect();
            let product_bound = marginals.iter().map(|p| p.p_hat).product();
            let splitting_reference = marginals.iter().map(|p| scaled_neg_log(e, p.p_hat)).sum();
            Ok(SandwichPoint {
                epsilon: e,
                rate: RatePoint::from_estimate(est(c[0], e)),
                marginals,
                rectangle: est(c[1], e),
                brownian_marginal: est(c[2], e),
                product_bound,
                brownian_reference: scaled_neg_log(e, bm_smallball_exact(t, e)?),
                splitting_reference,
            })
        })
        .collect()
}

/// Hits of `max|X_d| < τ_d` for each `d`, then of all of them at once.
fn rectangle_counts(ensemble: &Ensemble, thresholds: &[f64]) -> Result<Vec<u64>> {
    let n = ensemble.spec().n();
    if thresholds.len() != n {
        return Err(Error::invalid(format!("{} thresholds for n = {n}", thresholds.len())));
    }
    for &t in thresholds {
        check_eps(t)?;
    }
    let mut caps = [0.0; MAX_STEP];
    caps[..n].copy_from_slice(thresholds);
    Ok(ensemble.fold_paths(
        || vec![0u64; n + 1],
        |acc, sampler, seed| {
            let m = capped_maxima(sampler, seed, 0.0, &caps);
            let mut inside = true;
            for d in 0..n {
                let hit = m.comps[d] < thresholds[d];
                inside &= hit;
                acc[d] += hit as u64;
            }
            acc[n] += inside as u64;
        },
        add_counts,
    ))
}

/// Joint-versus-product comparison for one rectangle in component-max
/// coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GciReport {
    pub thresholds: Vec<f64>,
    pub marginals: Vec<f64>,
    pub joint: f64,
    pub product: f64,
    pub se_joint: f64,
    pub se_product: f64,
    pub se_combined: f64,
    pub violation: bool,
    pub n_samples: u64,
}

/// Estimate `P(∀d: max|X_d| < τ_d)` and `Π_d P(max|X_d| < τ_d)` on the same
/// paths. The correlation inequality says joint ≥ product; a violation is
/// flagged when `joint < product − 3·se_combined`.
///
/// `se_product` uses the delta method on independent factors, and
/// `se_combined = √(se_joint² + se_product²)`.
pub fn gci_rectangle_check(ensemble: &Ensemble, thresholds: &[f64]) -> Result<GciReport> {
    let n = ensemble.spec().n();
    let counts = rectangle_counts(ensemble, thresholds)?;
    let total = ensemble.n_samples() as u64;
    let marginals: Vec<f64> = counts[..n].iter().map(|&h| h as f64 / total as f64).collect();
    let joint = counts[n] as f64 / total as f64;
    let product: f64 = marginals.iter().product();
    let se_joint = binomial_se(counts[n], total);
    let var_product: f64 = (0..n)
        .map(|d| {
            let others: f64 = (0..n).filter(|&e| e != d).map(|e| marginals[e] * marginals[e]).product();
            binomial_se(counts[d], total).powi(2) * others
        })
        .sum();
    let se_product = var_product.sqrt();
    let se_combined = se_joint.hypot(se_product);
    Ok(GciReport {
        thresholds: thresholds.to_vec(),
        marginals,
        joint,
        product,
        se_joint,
        se_product,
        se_combined,
        violation: joint < product - 3.0 * se_combined,
        n_samples: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitBound {
    /// `Π_d P̂(max|X_d| < x_d ε)`.
    pub value: f64,
    /// Delta-method standard error of `value`.
    pub se: f64,
    pub marginals: Vec<ProbabilityEstimate>,
}

/// The product lower bound obtained by splitting the ε-ball into per-component
/// bands of widths `x_d ε`.
pub fn splitting_lower_bound(ensemble: &Ensemble, eps: f64, weights: &SplitWeights) -> Result<SplitBound> {
    check_eps(eps)?;
    let n = ensemble.spec().n();
    if weights.len() != n {
        return Err(Error::invalid(format!("{} weights for n = {n}", weights.len())));
    }
    let thresholds: Vec<f64> = weights.weights().iter().map(|x| x * eps).collect();
    let counts = rectangle_counts(ensemble, &thresholds)?;
    let (t, total, m) = (ensemble.spec().horizon(), ensemble.n_samples() as u64, ensemble.grid().len());
    let marginals: Vec<ProbabilityEstimate> = thresholds
        .iter()
        .zip(&counts)
        .map(|(&tau, &hits)| ProbabilityEstimate::from_counts(tau, t, hits, total, m))
        .collect();
    let value = marginals.iter().map(|p| p.p_hat).product();
    let var: f64 = (0..n)
        .map(|d| {
            let others: f64 = (0..n).filter(|&e| e != d).map(|e| marginals[e].p_hat.powi(2)).product();
            marginals[d].se().powi(2) * others
        })
        .sum();
    Ok(SplitBound {
        value,
        se: var.sqrt(),
        marginals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominationMargin {
    pub d: usize,
    /// `max_i |X_d(tᵢ)|`.
    pub max_component: f64,
    /// `H^(d−2)/(d−2)! · max_i |X_2(tᵢ)|`, `H` the last grid time.
    pub bound: f64,
    /// `bound − max_component`.
    pub margin: f64,
    pub holds: bool,
}

/// Pathwise `max|X_d| ≤ T^(d−2)/(d−2)! · max|X_2|` for `d = 2..=n`.
/// Violations beyond `1e-9` relative are reported, not raised.
pub fn domination_check(path: &PathSample) -> Result<Vec<DominationMargin>> {
    let n = path.spec.n();
    if n < 2 {
        return Err(Error::invalid("domination check needs n ≥ 2"));
    }
    let maxima: Vec<f64> = (1..=n)
        .map(|d| path.component(d).fold(0.0, |a: f64, v| a.max(v.abs())))
        .collect();
    let horizon = path.grid.horizon();
    Ok((2..=n)
        .map(|d| {
            let factor = horizon.powi(d as i32 - 2) / crate::process::FACTORIAL[d - 2];
            let bound = factor * maxima[1];
            let lhs = maxima[d - 1];
            let margin = bound - lhs;
            DominationMargin {
                d,
                max_component: lhs,
                bound,
                margin,
                holds: margin >= -1e-9 * bound.max(lhs),
            }
        })
        .collect())
}

/// `p̂` for several nested uniform grids computed on shared Brownian
/// increments: every level is a subsample of the finest path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationTrace {
    pub grid_sizes: Vec<usize>,
    /// `estimates[level][eps_index]`.
    pub estimates: Vec<Vec<ProbabilityEstimate>>,
}

impl StabilizationTrace {
    /// `p̂(2m) − p̂(m)` for level `level` (needs a finer level after it).
    pub fn doubling_change(&self, level: usize, eps_index: usize) -> Option<f64> {
        let next = self.estimates.get(level + 1)?;
        Some(next[eps_index].p_hat - self.estimates[level][eps_index].p_hat)
    }

    /// An estimate is stabilized when doubling its grid moves `p̂` by less
    /// than one standard error.
    pub fn is_stabilized(&self, level: usize, eps_index: usize) -> Option<bool> {
        let change = self.doubling_change(level, eps_index)?;
        Some(change.abs() < self.estimates[level][eps_index].se())
    }
}

/// Estimates `P(X* < ε)` on grids `base, 2·base, …, base·2^doublings`, all
/// read off the finest ensemble.
pub fn grid_trace(
    spec: crate::process::ProcessSpec,
    eps_list: &[f64],
    base_grid: usize,
    doublings: u32,
    n_samples: usize,
    seed: u64,
) -> Result<StabilizationTrace> {
    if eps_list.is_empty() {
        return Err(Error::invalid("empty ε list"));
    }
    for &e in eps_list {
        check_eps(e)?;
    }
    let levels = doublings as usize + 1;
    let finest = base_grid
        .checked_shl(doublings)
        .filter(|_| base_grid > 0)
        .ok_or_else(|| Error::invalid("grid sizes out of range"))?;
    let ensemble = Ensemble::new(spec, finest, n_samples, seed)?;
    let cap = eps_list.iter().copied().fold(0.0, f64::max);
    let cap_sq = cap * cap;
    let strides: Vec<usize> = (0..levels).map(|l| 1usize << (doublings as usize - l)).collect();
    let counts = ensemble.fold_paths(
        || vec![0u64; levels * eps_list.len()],
        |acc, sampler, seed| {
            let mut best = vec![0.0f64; levels];
            sampler.walk(seed, |i, x| {
                let sq: f64 = x.iter().map(|v| v * v).sum();
                for (b, &s) in best.iter_mut().zip(&strides) {
                    if (i + 1) % s == 0 && sq > *b {
                        *b = sq;
                    }
                }
                // The coarsest level lags all others.
                if best[0] >= cap_sq {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            });
            for (l, &b) in best.iter().enumerate() {
                for (e_idx, &e) in eps_list.iter().enumerate() {
                    acc[l * eps_list.len() + e_idx] += (b < e * e) as u64;
                }
            }
        },
        add_counts,
    );
    let grid_sizes: Vec<usize> = (0..levels).map(|l| base_grid << l).collect();
    let total = n_samples as u64;
    let estimates = grid_sizes
        .iter()
        .enumerate()
        .map(|(l, &m)| {
            eps_list
                .iter()
                .enumerate()
                .map(|(e_idx, &e)| {
                    ProbabilityEstimate::from_counts(e, spec.horizon(), counts[l * eps_list.len() + e_idx], total, m)
                })
                .collect()
        })
        .collect();
    Ok(StabilizationTrace { grid_sizes, estimates })
}
