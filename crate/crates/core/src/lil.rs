//! Chung-LIL statistics at time zero and at infinity.
//!
//! The liminf constants themselves are not observable from finitely many
//! windows, so this module reports the scaled running maxima and the
//! deterministic bracket/domination relations that drive the limits:
//!
//! * zero regime: `√(log|log t| / t) · max_{s≤t} |X_s|`, bracketed by the
//!   Brownian component alone times `√(1 + Σ_{d≥2} t^(2d−2)/((d−1)!)²)`;
//! * infinity regime: `φ(t)^((2n−1)/2) · max_{s≤t} |X_d(s)|` with
//!   `φ(t) = log log t / t`, where the components `d < n` carry an extra
//!   factor `φ(t)^(n−d) → 0`.

use std::ops::ControlFlow;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::process::FACTORIAL;
use crate::simulate::{running_max, Ensemble, PathSample};

/// Minimum number of grid points at or below every window.
pub const MIN_WINDOW_POINTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Zero,
    Infinity,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Zero => "zero",
            Regime::Infinity => "infinity",
        }
    }
}

/// Scaled running max along a set of windows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LilSeries {
    pub windows: Vec<f64>,
    pub statistic: Vec<f64>,
    pub regime: Regime,
    pub rate_exponent: f64,
}

/// `φ(t) = log log t / t`, defined for `t > e`.
pub fn phi(t: f64) -> f64 {
    t.ln().ln() / t
}

/// `log|log t| / t` for `t < 1/e`, computed as `log(−log t)/t`.
fn phi_zero(t: f64) -> f64 {
    (-t.ln()).ln() / t
}

/// `1 + Σ_{d=2}^{n} t^(2d−2)/((d−1)!)²`.
pub fn bracket_factor(n: usize, t: f64) -> f64 {
    1.0 + (2..=n)
        .map(|d| t.powi(2 * d as i32 - 2) / (FACTORIAL[d - 1] * FACTORIAL[d - 1]))
        .sum::<f64>()
}

fn check_resolution(path_grid: &crate::TimeGrid, windows: &[f64]) -> Result<Vec<usize>> {
    windows
        .iter()
        .map(|&w| {
            if w > path_grid.horizon() * (1.0 + 1e-12) {
                return Err(Error::invalid(format!(
                    "window {w} beyond the simulated horizon {}",
                    path_grid.horizon()
                )));
            }
            let points = path_grid.count_up_to(w);
            if points < MIN_WINDOW_POINTS {
                return Err(Error::Resolution {
                    window: w,
                    points,
                    required: MIN_WINDOW_POINTS,
                });
            }
            Ok(points - 1)
        })
        .collect()
}

fn sorted_windows(windows: &[f64], descending: bool) -> Result<Vec<f64>> {
    if windows.is_empty() {
        return Err(Error::invalid("no windows given"));
    }
    let mut w = windows.to_vec();
    w.sort_by(|a, b| a.total_cmp(b));
    if w.windows(2).any(|p| p[0] == p[1]) {
        return Err(Error::invalid("duplicate window"));
    }
    if descending {
        w.reverse();
    }
    Ok(w)
}

/// Windows valid for the zero regime: `0 < t < 1/e`, so `log|log t| > 0`.
pub fn validate_zero_windows(windows: &[f64]) -> Result<Vec<f64>> {
    let w = sorted_windows(windows, true)?;
    if let Some(bad) = w.iter().find(|&&t| !(t > 0.0 && t < (-1.0f64).exp())) {
        return Err(Error::invalid(format!(
            "zero-regime window t = {bad} must lie in (0, 1/e) so that log|log t| > 0"
        )));
    }
    Ok(w)
}

/// Windows valid for the infinity regime: `t > e`, so `log log t > 0`.
pub fn validate_infinity_windows(windows: &[f64]) -> Result<Vec<f64>> {
    let w = sorted_windows(windows, false)?;
    if let Some(bad) = w.iter().find(|&&t| !(t > std::f64::consts::E && t.is_finite())) {
        return Err(Error::invalid(format!(
            "infinity-regime window t = {bad} must exceed e so that log log t > 0"
        )));
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZeroRegimeReport {
    pub seed: u64,
    /// Full Euclidean norm.
    pub full: LilSeries,
    /// Brownian component alone.
    pub brownian: LilSeries,
    /// `full / brownian` per window (1 where both vanish).
    pub ratio: Vec<f64>,
    /// `bracket_factor(n, t)` per window; `ratio² ≤ bracket` pathwise.
    pub bracket: Vec<f64>,
}

/// `√(log|log t|/t) · max_{s≤t}|X_s|` for windows `t < 1/e`, with the
/// Brownian-only statistic alongside. Windows come back in decreasing order.
pub fn lil_statistic_zero(path: &PathSample, windows: &[f64]) -> Result<ZeroRegimeReport> {
    let windows = validate_zero_windows(windows)?;
    let last = check_resolution(&path.grid, &windows)?;
    let rm = running_max(path);
    let n = path.spec.n();
    let mut full = Vec::with_capacity(windows.len());
    let mut brownian = Vec::with_capacity(windows.len());
    let mut ratio = Vec::with_capacity(windows.len());
    let mut bracket = Vec::with_capacity(windows.len());
    for (&t, &i) in windows.iter().zip(&last) {
        let scale = phi_zero(t).sqrt();
        let (x, b) = (rm.norm[i], rm.components[0][i]);
        full.push(scale * x);
        brownian.push(scale * b);
        ratio.push(if b > 0.0 { x / b } else { 1.0 });
        bracket.push(bracket_factor(n, t));
    }
    let series = |statistic| LilSeries {
        windows: windows.clone(),
        statistic,
        regime: Regime::Zero,
        rate_exponent: 0.5,
    };
    Ok(ZeroRegimeReport {
        seed: path.seed,
        full: series(full),
        brownian: series(brownian),
        ratio,
        bracket,
    })
}

/// Per-path infinity-regime statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfinityRecord {
    pub seed: u64,
    pub n: usize,
    pub windows: Vec<f64>,
    /// `component_max[d−1][w] = max_{s≤t_w} |X_d(s)|`.
    pub component_max: Vec<Vec<f64>>,
    /// `max_{s≤t_w} |X_s|`.
    pub norm_max: Vec<f64>,
}

impl InfinityRecord {
    fn series(&self, maxima: &[f64], exponent: f64) -> LilSeries {
        LilSeries {
            windows: self.windows.clone(),
            statistic: self
                .windows
                .iter()
                .zip(maxima)
                .map(|(&t, &m)| phi(t).powf(exponent) * m)
                .collect(),
            regime: Regime::Infinity,
            rate_exponent: exponent,
        }
    }

    /// `(2n−1)/2`.
    pub fn rate_exponent(&self) -> f64 {
        (2 * self.n - 1) as f64 / 2.0
    }

    /// `φ(t)^((2n−1)/2) · max|X_d|` for component `d` (1-based).
    pub fn component(&self, d: usize) -> LilSeries {
        self.series(&self.component_max[d - 1], self.rate_exponent())
    }

    /// Component `d` scaled with its own exponent `(2d−1)/2`.
    pub fn component_native(&self, d: usize) -> LilSeries {
        self.series(&self.component_max[d - 1], (2 * d - 1) as f64 / 2.0)
    }

    /// `φ(t)^((2n−1)/2) · max|X_s|`.
    pub fn full(&self) -> LilSeries {
        self.series(&self.norm_max, self.rate_exponent())
    }
}

/// Infinity-regime statistics for every path of `ensemble` (whose horizon
/// must reach the largest window). Paths are generated and scanned in one
/// pass; only the maxima at the windows are kept.
pub fn lil_statistic_infinity(ensemble: &Ensemble, windows: &[f64]) -> Result<Vec<InfinityRecord>> {
    let windows = validate_infinity_windows(windows)?;
    let last = check_resolution(ensemble.grid(), &windows)?;
    let n = ensemble.spec().n();
    Ok(ensemble.map_paths(|sampler, seed| {
        let mut component_max = vec![Vec::with_capacity(windows.len()); n];
        let mut norm_max = Vec::with_capacity(windows.len());
        let mut best = vec![0.0f64; n];
        let mut best_sq = 0.0f64;
        let mut next = 0;
        sampler.walk(seed, |i, x| {
            let mut sq = 0.0;
            for (b, v) in best.iter_mut().zip(x) {
                sq += v * v;
                *b = b.max(v.abs());
            }
            best_sq = best_sq.max(sq);
            while next < last.len() && last[next] == i {
                for (c, b) in component_max.iter_mut().zip(&best) {
                    c.push(*b);
                }
                norm_max.push(best_sq.sqrt());
                next += 1;
            }
            if next == last.len() {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        });
        InfinityRecord {
            seed,
            n,
            windows: windows.clone(),
            component_max,
            norm_max,
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentSandwichReport {
    /// `min_i (max|X|² − max|b|²)/scale`; nonnegative when the lower side holds.
    pub worst_lower_margin: f64,
    /// `min_i (bound − max|X|²)/scale`; nonnegative when the upper side holds.
    pub worst_upper_margin: f64,
    pub lower_holds: bool,
    pub upper_holds: bool,
    /// Bracket factor at the first grid point.
    pub initial_bracket: f64,
}

impl ComponentSandwichReport {
    pub fn holds(&self) -> bool {
        self.lower_holds && self.upper_holds
    }
}

/// At every grid time `t`:
/// `max|b|² ≤ max|X|² ≤ max|b|² · (1 + Σ_{d≥2} t^(2d−2)/((d−1)!)²)`,
/// both sides checked with tolerance `1e-9 · scale`, where `scale` is the
/// upper bound at the last grid time.
///
/// The upper side holds for the supremum of `b` over continuous time; the
/// grid maximum can fall short of it, which near `t = 0` shows up as
/// violations of relative size `O(t²)`. Measuring margins against the
/// path's overall scale absorbs that without hiding real failures.
pub fn component_sandwich_check(path: &PathSample) -> ComponentSandwichReport {
    let rm = running_max(path);
    let n = path.spec.n();
    let pts = path.grid.points();
    let last = pts.len() - 1;
    let b_last = rm.components[0][last];
    let scale = (b_last * b_last * bracket_factor(n, pts[last])).max(f64::MIN_POSITIVE);
    let mut worst_lower = f64::INFINITY;
    let mut worst_upper = f64::INFINITY;
    for (i, &t) in pts.iter().enumerate() {
        let x2 = rm.norm[i] * rm.norm[i];
        let b2 = rm.components[0][i] * rm.components[0][i];
        let upper = b2 * bracket_factor(n, t);
        worst_lower = worst_lower.min((x2 - b2) / scale);
        worst_upper = worst_upper.min((upper - x2) / scale);
    }
    ComponentSandwichReport {
        worst_lower_margin: worst_lower,
        worst_upper_margin: worst_upper,
        lower_holds: worst_lower >= -1e-9,
        upper_holds: worst_upper >= -1e-9,
        initial_bracket: bracket_factor(n, pts[0]),
    }
}

/// `t = 2^(−k)` for `k = first..=last`.
pub fn dyadic_windows(first: i32, last: i32) -> Vec<f64> {
    (first..=last).map(|k| 2f64.powi(-k)).collect()
}
