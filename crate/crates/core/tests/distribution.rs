//! Sampled moments against the closed-form law, and the two samplers
//! against each other.

use std::sync::Arc;

use kolmo_core::{
    batch_map, cov_matrix, path_seed, simulate_batch, Ensemble, ProcessSpec, SamplerMethod, TimeGrid,
    TransitionSampler,
};
use nalgebra::DMatrix;

/// Sample mean vector and covariance matrix (divisor N) of row vectors.
fn moments(rows: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let dim = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = DMatrix::zeros(dim, dim);
    for r in rows {
        for i in 0..dim {
            let di = r[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..dim {
        for j in 0..=i {
            cov[(i, j)] /= n;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    (mean, cov)
}

/// Standard error of a Gaussian sample covariance entry.
fn cov_se(sigma: &DMatrix<f64>, i: usize, j: usize, n: usize) -> f64 {
    ((sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2)) / n as f64).sqrt()
}

fn sample_rows(spec: ProcessSpec, grid: TimeGrid, n_samples: usize, seed: u64) -> Vec<Vec<f64>> {
    Ensemble::with_grid(spec, grid, n_samples, seed)
        .unwrap()
        .map_paths(|s, seed| s.sample(seed).values)
}

/// Means within `k` SE of zero and covariances within `k` SE of the
/// closed form; returns the largest deviation in SE units.
fn check_law(spec: ProcessSpec, grid: TimeGrid, rows: &[Vec<f64>], k: f64) -> f64 {
    let sigma = cov_matrix(&spec, &grid).unwrap();
    let (mean, cov) = moments(rows);
    let n = rows.len();
    let mut worst: f64 = 0.0;
    for i in 0..mean.len() {
        let z = mean[i].abs() / (sigma[(i, i)] / n as f64).sqrt();
        assert!(z < k, "mean {i}: {z:.2} SE");
        worst = worst.max(z);
        for j in 0..=i {
            let z = (cov[(i, j)] - sigma[(i, j)]).abs() / cov_se(&sigma, i, j, n);
            assert!(z < k, "cov ({i},{j}): {} vs {} ({z:.2} SE)", cov[(i, j)], sigma[(i, j)]);
            worst = worst.max(z);
        }
    }
    worst
}

#[test]
fn unit_time_brownian_variance() {
    let rows = sample_rows(ProcessSpec::new(1, 1.0).unwrap(), TimeGrid::new(vec![1.0]).unwrap(), 100_000, 1);
    let (_, cov) = moments(&rows);
    assert!((0.98..=1.02).contains(&cov[(0, 0)]), "{}", cov[(0, 0)]);
}

#[test]
fn unit_time_step_two_covariance() {
    let spec = ProcessSpec::new(2, 1.0).unwrap();
    let rows = sample_rows(spec, TimeGrid::new(vec![1.0]).unwrap(), 100_000, 2);
    // [[1, 1/2], [1/2, 1/3]]
    check_law(spec, TimeGrid::new(vec![1.0]).unwrap(), &rows, 3.0);
}

#[test]
fn transition_sampler_is_exact_on_small_grids() {
    let cases = [
        (4, 1.0, TimeGrid::uniform(1.0, 8).unwrap()),
        (3, 2.0, TimeGrid::new(vec![0.1, 0.35, 0.4, 1.0, 1.7, 2.0]).unwrap()),
        (2, 0.5, TimeGrid::new(vec![1e-3, 0.25, 0.5]).unwrap()),
    ];
    for (i, (n, t, grid)) in cases.into_iter().enumerate() {
        let spec = ProcessSpec::new(n, t).unwrap();
        let rows = sample_rows(spec, grid.clone(), 100_000, 10 + i as u64);
        check_law(spec, grid, &rows, 4.0);
    }
}

fn cholesky_rows(spec: &ProcessSpec, grid: &TimeGrid, n_samples: usize, master: u64) -> Vec<Vec<f64>> {
    let seeds: Vec<u64> = (0..n_samples as u64).map(|i| path_seed(master, i)).collect();
    batch_map(spec, grid, &seeds, SamplerMethod::Cholesky, |p| p.values).unwrap()
}

#[test]
fn cholesky_sampler_covariance() {
    let spec = ProcessSpec::new(2, 1.0).unwrap();
    let grid = TimeGrid::new(vec![0.5, 1.0]).unwrap();
    let rows = cholesky_rows(&spec, &grid, 100_000, 3);
    check_law(spec, grid, &rows, 3.0);
}

#[test]
fn samplers_agree_on_n3_m16() {
    let spec = ProcessSpec::new(3, 1.0).unwrap();
    let grid = TimeGrid::uniform(1.0, 16).unwrap();
    let n = 40_000;
    let a = sample_rows(spec, grid.clone(), n, 4);
    let b = cholesky_rows(&spec, &grid, n, 5);
    let sigma = cov_matrix(&spec, &grid).unwrap();
    let (_, ca) = moments(&a);
    let (_, cb) = moments(&b);
    for i in 0..sigma.nrows() {
        for j in 0..=i {
            // Independent ensembles: the difference has variance 2·SE².
            let se = cov_se(&sigma, i, j, n) * 2f64.sqrt();
            let z = (ca[(i, j)] - cb[(i, j)]).abs() / se;
            assert!(z < 4.0, "({i},{j}): {z:.2} SE");
        }
    }
}

/// Asymptotic two-sample Kolmogorov–Smirnov p-value.
fn ks_p_value(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let q: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    q.clamp(0.0, 1.0)
}

#[test]
fn ks_helper_sanity() {
    let a: Vec<f64> = (0..1000).map(|i| i as f64).collect();
    let shifted: Vec<f64> = a.iter().map(|x| x + 300.0).collect();
    assert!(ks_p_value(a.clone(), a.clone()) > 0.99);
    assert!(ks_p_value(a, shifted) < 1e-6);
}

#[test]
fn samplers_agree_in_law_at_one_point() {
    let spec = ProcessSpec::new(1, 1.0).unwrap();
    let grid = TimeGrid::new(vec![1.0]).unwrap();
    let a: Vec<f64> = sample_rows(spec, grid.clone(), 10_000, 6).into_iter().map(|r| r[0]).collect();
    let b: Vec<f64> = cholesky_rows(&spec, &grid, 10_000, 7).into_iter().map(|r| r[0]).collect();
    let p = ks_p_value(a, b);
    assert!(p > 0.001, "KS p = {p}");
}

#[test]
fn trapezoid_of_each_component_converges_to_the_next() {
    let spec = ProcessSpec::new(3, 1.0).unwrap();
    let fine = 1usize << 16;
    let sampler = TransitionSampler::new(&spec, Arc::new(TimeGrid::uniform(1.0, fine).unwrap())).unwrap();
    for seed in [1u64, 2, 3] {
        let path = sampler.sample(seed);
        for d in 1..=2 {
            let mut errors = Vec::new();
            // Coarse grids use every stride-th point of the same path.
            for stride in [1usize << 8, 1 << 6, 1 << 4, 1 << 2] {
                let h = stride as f64 / fine as f64;
                let (mut integral, mut prev, mut worst) = (0.0, 0.0, 0.0f64);
                for i in (stride - 1..fine).step_by(stride) {
                    let cur = path.value(i, d);
                    integral += 0.5 * h * (prev + cur);
                    prev = cur;
                    worst = worst.max((integral - path.value(i, d + 1)).abs());
                }
                errors.push(worst);
            }
            for w in errors.windows(2) {
                assert!(w[1] <= 0.5 * w[0], "seed {seed}, d = {d}: {errors:?}");
            }
        }
    }
}

#[test]
fn streaming_ten_thousand_paths() {
    let spec = ProcessSpec::new(3, 1.0).unwrap();
    let grid = TimeGrid::uniform(1.0, 1024).unwrap();
    let seeds: Vec<u64> = (0..10_000u64).map(|i| path_seed(99, i)).collect();
    // Only one scalar per path survives the consumer.
    let ends = batch_map(&spec, &grid, &seeds, SamplerMethod::Transition, |p| p.value(1023, 3)).unwrap();
    assert_eq!(ends.len(), 10_000);
    let var = ends.iter().map(|x| x * x).sum::<f64>() / ends.len() as f64;
    // Var X_3(1) = 1/20.
    assert!((var - 0.05).abs() < 4.0 * 0.05 * (2.0f64 / 10_000.0).sqrt(), "{var}");
}

#[test]
fn batch_outputs_match_singles() {
    let spec = ProcessSpec::new(2, 1.0).unwrap();
    let grid = TimeGrid::uniform(1.0, 64).unwrap();
    let batch = simulate_batch(&spec, &grid, &[5, 9, 1], SamplerMethod::Transition).unwrap();
    for p in batch {
        assert_eq!(p, kolmo_core::simulate_transition(&spec, &grid, p.seed).unwrap());
    }
}
