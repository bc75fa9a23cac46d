//! Binomial interval helpers.

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// 95% Wilson score interval for `hits` successes in `trials`.
pub fn wilson_interval(hits: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0 && hits <= trials);
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // Clamp so that the interval always contains p̂ despite rounding.
    let lo = if hits == 0 { 0.0 } else { (centre - half).clamp(0.0, p) };
    let hi = if hits == trials { 1.0 } else { (centre + half).clamp(p, 1.0) };
    (lo, hi)
}

/// Exact one-sided 95% upper bound on `p` after zero successes in `trials`:
/// `1 − 0.05^(1/N)`, roughly `3/N`.
pub fn zero_hit_upper(trials: u64) -> f64 {
    -(0.05f64.ln() / trials as f64).exp_m1()
}

/// Plug-in standard error `√(p̂(1−p̂)/N)`.
pub fn binomial_se(hits: u64, trials: u64) -> f64 {
    let p = hits as f64 / trials as f64;
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        // 10 of 100: Wilson bounds from the textbook formula.
        let (lo, hi) = wilson_interval(10, 100);
        assert!((lo - 0.055_229).abs() < 1e-5, "{lo}");
        assert!((hi - 0.174_366).abs() < 1e-5, "{hi}");
        assert!((zero_hit_upper(1000) - 0.002_991_25).abs() < 1e-7);
        assert_eq!(binomial_se(0, 10), 0.0);
    }

    proptest! {
        #[test]
        fn interval_contains_estimate(trials in 1u64..1_000_000, frac in 0.0f64..=1.0) {
            let hits = ((trials as f64) * frac).floor() as u64;
            let (lo, hi) = wilson_interval(hits, trials);
            let p = hits as f64 / trials as f64;
            prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        }
    }
}
