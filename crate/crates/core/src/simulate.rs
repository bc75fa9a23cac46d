//! Exact sampling of the diffusion on a time grid.
//!
//! Two samplers produce the same finite-dimensional law:
//!
//! * [`TransitionSampler`] steps `X(tᵢ₊₁) = A(Δ)X(tᵢ) + L(Δ)ξᵢ` using the
//!   closed-form transition pair. `O(m·n²)` per path and well conditioned on
//!   any grid. This is the default.
//! * [`CholeskySampler`] factors the full `(n·m)×(n·m)` covariance. It only
//!   exists to cross-validate the first one on small grids.
//!
//! Every path is a pure function of `(spec, grid, seed, method)`. Each seed
//! owns its own Xoshiro256++ stream (`rand`'s `SmallRng` on 64-bit targets,
//! pinned by a frozen-output test) and normals come from the ziggurat
//! sampler in `rand_distr`, so batch results never depend on scheduling.

use std::io::{self, Write};
use std::ops::ControlFlow;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::process::{self, ProcessSpec, MAX_STEP};

/// Largest `n·m` the dense sampler will factor.
pub const CHOLESKY_MAX_DIM: usize = 4096;

const JITTER_LADDER: [f64; 5] = [1e-14, 1e-13, 1e-12, 1e-11, 1e-10];

/// Seed of path `index` in an ensemble driven by `master`.
///
/// SplitMix64 evaluated at counter `index + 1`: a bijective mix of
/// `master + (index+1)·γ`, so seeds within one ensemble never collide and
/// any path can be regenerated on its own.
pub fn path_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_for(seed: u64) -> SmallRng {
    SmallRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplerMethod {
    #[default]
    Transition,
    Cholesky,
}

/// One exact realization on a grid; `values` is time-major, `n` entries per
/// grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub spec: ProcessSpec,
    pub grid: Arc<TimeGrid>,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// State `(X_1, …, X_n)` at grid point `i`.
    pub fn state(&self, i: usize) -> &[f64] {
        let n = self.spec.n();
        &self.values[i * n..(i + 1) * n]
    }

    /// `X_d(tᵢ)` with `d` 1-based.
    pub fn value(&self, i: usize, d: usize) -> f64 {
        self.values[process::flat_index(self.spec.n(), i, d)]
    }

    pub fn component(&self, d: usize) -> impl Iterator<Item = f64> + '_ {
        let n = self.spec.n();
        self.values.iter().skip(d - 1).step_by(n).copied()
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.spec.n())
    }

    /// Same path with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> PathSample {
        PathSample {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Plain CSV dump: header `t,x1,…,xn`, one row per grid point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.spec.n();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=n).map(|d| format!("x{d}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, state) in self.grid.points().iter().zip(self.states()) {
            write!(out, "{t}")?;
            for v in state {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Cumulative maxima along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMax {
    /// `max_{s ≤ tᵢ} |X_s|` in the Euclidean norm.
    pub norm: Vec<f64>,
    /// `components[d−1][i] = max_{s ≤ tᵢ} |X_d(s)|`.
    pub components: Vec<Vec<f64>>,
}

pub fn running_max(path: &PathSample) -> RunningMax {
    let n = path.spec.n();
    let m = path.len();
    let mut norm = Vec::with_capacity(m);
    let mut components = vec![Vec::with_capacity(m); n];
    let mut best_sq = 0.0f64;
    let mut best = vec![0.0f64; n];
    for state in path.states() {
        let sq: f64 = state.iter().map(|v| v * v).sum();
        best_sq = best_sq.max(sq);
        norm.push(best_sq.sqrt());
        for (d, v) in state.iter().enumerate() {
            best[d] = best[d].max(v.abs());
            components[d].push(best[d]);
        }
    }
    RunningMax { norm, components }
}

#[derive(Debug, Clone)]
struct StepFactors {
    drift: [f64; MAX_STEP * MAX_STEP],
    noise: [f64; MAX_STEP * MAX_STEP],
}

impl StepFactors {
    fn new(n: usize, h: f64) -> Self {
        let mut drift = [0.0; MAX_STEP * MAX_STEP];
        let mut noise = [0.0; MAX_STEP * MAX_STEP];
        for d in 1..=n {
            for j in 1..=d {
                drift[(d - 1) * n + (j - 1)] = process::drift_entry(d, j, h);
                noise[(d - 1) * n + (j - 1)] = process::noise_factor_entry(d, j, h);
            }
        }
        Self { drift, noise }
    }
}

/// Exact stepping sampler for one `(spec, grid)` pair; reusable across seeds.
#[derive(Debug, Clone)]
pub struct TransitionSampler {
    spec: ProcessSpec,
    grid: Arc<TimeGrid>,
    // One entry for uniform grids, otherwise one per step.
    factors: Vec<StepFactors>,
}

impl TransitionSampler {
    pub fn new(spec: &ProcessSpec, grid: Arc<TimeGrid>) -> Result<Self> {
        grid.check_within(spec)?;
        let n = spec.n();
        let factors = match grid.spacing() {
            Some(h) => vec![StepFactors::new(n, h)],
            None => (0..grid.len()).map(|i| StepFactors::new(n, grid.step(i))).collect(),
        };
        Ok(Self {
            spec: *spec,
            grid,
            factors,
        })
    }

    pub fn spec(&self) -> &ProcessSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    /// Generate the path for `seed` point by point, handing `(i, X(tᵢ))` to
    /// `visit`; stops early when `visit` breaks. The values seen before a
    /// break are identical to those of the full path.
    pub fn walk<F>(&self, seed: u64, visit: F)
    where
        F: FnMut(usize, &[f64]) -> ControlFlow<()>,
    {
        // Fixed sizes let the compiler unroll the hot loop for common steps.
        match self.spec.n() {
            1 => self.walk_sized::<1, F>(seed, visit),
            2 => self.walk_sized::<2, F>(seed, visit),
            3 => self.walk_sized::<3, F>(seed, visit),
            4 => self.walk_sized::<4, F>(seed, visit),
            _ => self.walk_sized::<0, F>(seed, visit),
        }
    }

    /// `N = 0` means "read `n` from the spec".
    #[inline(always)]
    fn walk_sized<const N: usize, F>(&self, seed: u64, mut visit: F)
    where
        F: FnMut(usize, &[f64]) -> ControlFlow<()>,
    {
        let n = if N == 0 { self.spec.n() } else { N };
        let mut rng = rng_for(seed);
        let mut x = [0.0f64; MAX_STEP];
        let mut xi = [0.0f64; MAX_STEP];
        let mut next = [0.0f64; MAX_STEP];
        let uniform = self.factors.len() == 1;
        for i in 0..self.grid.len() {
            let f = if uniform { &self.factors[0] } else { &self.factors[i] };
            for z in xi.iter_mut().take(n) {
                *z = rng.sample(StandardNormal);
            }
            for d in 0..n {
                let row = d * n;
                let mut acc = 0.0;
                for j in 0..=d {
                    acc += f.drift[row + j] * x[j] + f.noise[row + j] * xi[j];
                }
                next[d] = acc;
            }
            x[..n].copy_from_slice(&next[..n]);
            if visit(i, &x[..n]).is_break() {
                break;
            }
        }
    }

    pub fn sample(&self, seed: u64) -> PathSample {
        let mut values = Vec::with_capacity(self.grid.len() * self.spec.n());
        self.walk(seed, |_, x| {
            values.extend_from_slice(x);
            ControlFlow::Continue(())
        });
        PathSample {
            spec: self.spec,
            grid: Arc::clone(&self.grid),
            values,
            seed,
        }
    }
}

/// Dense sampler: `values = L z` with `L Lᵀ = cov_matrix(spec, grid)`.
#[derive(Debug, Clone)]
pub struct CholeskySampler {
    spec: ProcessSpec,
    grid: Arc<TimeGrid>,
    factor: DMatrix<f64>,
    jitter: f64,
}

impl CholeskySampler {
    pub fn new(spec: &ProcessSpec, grid: Arc<TimeGrid>) -> Result<Self> {
        let n = spec.n();
        let m = grid.len();
        if n * m > CHOLESKY_MAX_DIM {
            return Err(Error::invalid(format!(
                "dense sampler limited to n·m ≤ {CHOLESKY_MAX_DIM}, got {n}·{m}"
            )));
        }
        let cov = process::cov_matrix(spec, &grid)?;
        if let Some(ch) = Cholesky::new(cov.clone()) {
            return Ok(Self {
                spec: *spec,
                grid,
                factor: ch.unpack(),
                jitter: 0.0,
            });
        }
        let mean_diag = cov.diagonal().mean();
        for &delta in &JITTER_LADDER {
            let mut bumped = cov.clone();
            for r in 0..bumped.nrows() {
                bumped[(r, r)] += delta * mean_diag;
            }
            if let Some(ch) = Cholesky::new(bumped) {
                return Ok(Self {
                    spec: *spec,
                    grid,
                    factor: ch.unpack(),
                    jitter: delta,
                });
            }
        }
        Err(Error::Factorization {
            n,
            m,
            max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
        })
    }

    /// Relative jitter that was needed for the factorization (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample(&self, seed: u64) -> PathSample {
        let dim = self.factor.nrows();
        let mut rng = rng_for(seed);
        let z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let values = (&self.factor * z).data.into();
        PathSample {
            spec: self.spec,
            grid: Arc::clone(&self.grid),
            values,
            seed,
        }
    }
}

enum Sampler {
    Transition(TransitionSampler),
    Cholesky(CholeskySampler),
}

impl Sampler {
    fn new(spec: &ProcessSpec, grid: Arc<TimeGrid>, method: SamplerMethod) -> Result<Self> {
        Ok(match method {
            SamplerMethod::Transition => Sampler::Transition(TransitionSampler::new(spec, grid)?),
            SamplerMethod::Cholesky => Sampler::Cholesky(CholeskySampler::new(spec, grid)?),
        })
    }

    fn sample(&self, seed: u64) -> PathSample {
        match self {
            Sampler::Transition(s) => s.sample(seed),
            Sampler::Cholesky(s) => s.sample(seed),
        }
    }
}

pub fn simulate_transition(spec: &ProcessSpec, grid: &TimeGrid, seed: u64) -> Result<PathSample> {
    Ok(TransitionSampler::new(spec, Arc::new(grid.clone()))?.sample(seed))
}

pub fn simulate_cholesky(spec: &ProcessSpec, grid: &TimeGrid, seed: u64) -> Result<PathSample> {
    Ok(CholeskySampler::new(spec, Arc::new(grid.clone()))?.sample(seed))
}

pub fn simulate(spec: &ProcessSpec, grid: &TimeGrid, seed: u64, method: SamplerMethod) -> Result<PathSample> {
    match method {
        SamplerMethod::Transition => simulate_transition(spec, grid, seed),
        SamplerMethod::Cholesky => simulate_cholesky(spec, grid, seed),
    }
}

fn check_distinct(seeds: &[u64]) -> Result<()> {
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::invalid(format!("duplicate seed {}", w[0])));
    }
    Ok(())
}

/// Simulate one path per seed, in seed order.
pub fn simulate_batch(
    spec: &ProcessSpec,
    grid: &TimeGrid,
    seeds: &[u64],
    method: SamplerMethod,
) -> Result<Vec<PathSample>> {
    batch_map(spec, grid, seeds, method, |p| p)
}

/// Streaming form of [`simulate_batch`]: each path is handed to `consume`
/// and dropped, so only the per-path results are kept.
pub fn batch_map<R, F>(
    spec: &ProcessSpec,
    grid: &TimeGrid,
    seeds: &[u64],
    method: SamplerMethod,
    consume: F,
) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(PathSample) -> R + Sync,
{
    check_distinct(seeds)?;
    let sampler = Sampler::new(spec, Arc::new(grid.clone()), method)?;
    Ok(seeds.par_iter().map(|&s| consume(sampler.sample(s))).collect())
}

/// A shared-seed collection of paths: `n_samples` transition-sampled paths
/// on one grid, path `i` seeded by [`path_seed`]`(seed, i)`.
///
/// Estimators built on the same ensemble see the same paths, which is what
/// makes their pathwise comparisons meaningful.
#[derive(Debug, Clone)]
pub struct Ensemble {
    sampler: TransitionSampler,
    n_samples: usize,
    seed: u64,
}

impl Ensemble {
    /// Uniform grid of `grid_size` points on `[0, T]`.
    pub fn new(spec: ProcessSpec, grid_size: usize, n_samples: usize, seed: u64) -> Result<Self> {
        let grid = TimeGrid::uniform(spec.horizon(), grid_size)?;
        Self::with_grid(spec, grid, n_samples, seed)
    }

    pub fn with_grid(spec: ProcessSpec, grid: TimeGrid, n_samples: usize, seed: u64) -> Result<Self> {
        if n_samples == 0 {
            return Err(Error::invalid("ensemble needs at least one sample"));
        }
        Ok(Self {
            sampler: TransitionSampler::new(&spec, Arc::new(grid))?,
            n_samples,
            seed,
        })
    }

    pub fn spec(&self) -> &ProcessSpec {
        self.sampler.spec()
    }

    pub fn grid(&self) -> &TimeGrid {
        self.sampler.grid()
    }

    pub fn sampler(&self) -> &TransitionSampler {
        &self.sampler
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_seed(&self, index: usize) -> u64 {
        path_seed(self.seed, index as u64)
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_samples).map(|i| self.path_seed(i)).collect()
    }

    /// Per-path results in path order.
    pub fn map_paths<R, F>(&self, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(&TransitionSampler, u64) -> R + Sync,
    {
        (0..self.n_samples)
            .into_par_iter()
            .map(|i| f(&self.sampler, self.path_seed(i)))
            .collect()
    }

    /// Parallel fold over all paths. `merge` must be associative and
    /// commutative (integer tallies), otherwise results depend on scheduling.
    pub fn fold_paths<A, I, V, M>(&self, init: I, visit: V, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        V: Fn(&mut A, &TransitionSampler, u64) + Sync + Send,
        M: Fn(A, A) -> A + Sync + Send,
    {
        (0..self.n_samples)
            .into_par_iter()
            .fold(&init, |mut acc, i| {
                visit(&mut acc, &self.sampler, self.path_seed(i));
                acc
            })
            .reduce(&init, &merge)
    }
}
