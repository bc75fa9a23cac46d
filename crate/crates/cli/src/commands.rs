//! Subcommand implementations. Each command validates its whole
//! configuration up front, computes, then writes its files sequentially.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use kolmo_core::lil::{dyadic_windows, validate_infinity_windows, validate_zero_windows, MIN_WINDOW_POINTS};
use kolmo_core::{
    batch_map, bm_smallball_exact, cov_kernel, cov_matrix, gci_rectangle_check, lil_statistic_infinity,
    lil_statistic_zero, path_seed, propagated_cov_matrix, scaling_check_cross, small_deviation_sandwich, Ensemble,
    PathSample, ProcessSpec, SamplerMethod, SplitConvention, SplitWeights, TimeGrid, LAMBDA_1, MAX_STEP,
};
use serde_json::{json, Map, Value};

use crate::args::Command;
use crate::config::{Checker, ConfigParseError, ExperimentConfig, OutputFormat, RegimeArg, ValidationError};

/// Largest accepted grid; a single path then holds `n · 2^24` values.
pub const MAX_GRID: usize = 1 << 24;
/// Largest accepted sample count.
pub const MAX_SAMPLES: usize = 1 << 32;
/// Largest accepted number of dumped paths.
pub const MAX_SEEDS: usize = 100_000;
/// `cov-check` assembles dense `(n·m)²` matrices.
pub const MAX_COV_DIM: usize = 4096;

const DEFAULT_OUT: &str = "kolmo-out";

/// What a command did: files written and a one-line summary for stdout.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Reads `--config` (if any) and overlays the flags on it.
pub fn load_config(command: &Command) -> Result<ExperimentConfig> {
    let flags = command.flag_config();
    let base = match &command.common().config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
            ExperimentConfig::from_text(&text).map_err(|e: ConfigParseError| ValidationError {
                violations: vec![(format!("config ({})", path.display()), e.to_string())],
            })?
        }
        None => ExperimentConfig::default(),
    };
    Ok(base.overlay(&flags))
}

pub fn execute(command: &Command) -> Result<Outcome> {
    let cfg = load_config(command)?;
    match command {
        Command::Simulate(_) => cmd_simulate(&cfg),
        Command::Smallball(_) => cmd_smallball(&cfg),
        Command::Gci(_) => cmd_gci(&cfg),
        Command::Lil(_) => cmd_lil(&cfg),
        Command::CovCheck(_) => cmd_cov_check(&cfg),
    }
}

// ---------------------------------------------------------------------------
// Validation

struct Defaults {
    n: usize,
    grid: usize,
    samples: usize,
}

/// Fields shared by every command, after defaults and validation.
struct Base {
    n: usize,
    horizon: f64,
    grid: usize,
    samples: usize,
    seed: u64,
    out: PathBuf,
    format: OutputFormat,
}

impl Base {
    fn read(cfg: &ExperimentConfig, c: &mut Checker, d: Defaults) -> Self {
        let n = cfg.n.map_or(d.n, |v| c.positive_int("n", v));
        c.check(n <= MAX_STEP, "n", || format!("must be at most {MAX_STEP}, got {n}"));
        let horizon = cfg.horizon.unwrap_or(1.0);
        c.check(horizon.is_finite() && horizon > 0.0, "T", || {
            format!("must be positive and finite, got {horizon}")
        });
        let grid = cfg.grid.map_or(d.grid, |v| c.positive_int("grid", v));
        c.check(grid <= MAX_GRID, "grid", || format!("must be at most {MAX_GRID}, got {grid}"));
        let samples = cfg.samples.map_or(d.samples, |v| c.positive_int("samples", v));
        c.check(samples <= MAX_SAMPLES, "samples", || {
            format!("must be at most {MAX_SAMPLES}, got {samples}")
        });
        Base {
            n: n.clamp(1, MAX_STEP),
            horizon: if horizon.is_finite() && horizon > 0.0 { horizon } else { 1.0 },
            grid,
            samples,
            seed: cfg.seed.unwrap_or(0),
            out: cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            format: cfg.format.unwrap_or_default(),
        }
    }

    fn spec(&self) -> Result<ProcessSpec> {
        Ok(ProcessSpec::new(self.n, self.horizon)?)
    }

    /// The effective inputs, minus the output location, which must not leak
    /// into the files so that runs into different directories compare equal.
    fn echo(&self) -> ExperimentConfig {
        ExperimentConfig {
            n: Some(self.n as i64),
            horizon: Some(self.horizon),
            grid: Some(self.grid as i64),
            samples: Some(self.samples as i64),
            seed: Some(self.seed),
            format: Some(self.format),
            ..Default::default()
        }
    }
}

fn check_positive_list(c: &mut Checker, field: &str, values: &[f64]) {
    if values.is_empty() {
        c.fail(field, "must not be empty");
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        c.fail(field, format!("entries must be positive and finite, got {bad}"));
    }
}

// ---------------------------------------------------------------------------
// Output

struct OutDir {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(path);
        Ok(())
    }
}

/// `# key = value` lines heading every CSV file.
fn comment_header(command: &str, echo: &ExperimentConfig) -> String {
    let mut s = format!("# kolmo {command}\n");
    for (k, v) in echo.entries() {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s
}

fn json_document(command: &str, echo: &ExperimentConfig, body: Value) -> Vec<u8> {
    let config: Map<String, Value> = echo.entries().into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect();
    let mut doc = Map::new();
    doc.insert("command".into(), Value::String(command.into()));
    doc.insert("config".into(), Value::Object(config));
    if let Value::Object(fields) = body {
        doc.extend(fields);
    }
    let mut bytes = serde_json::to_vec_pretty(&Value::Object(doc)).expect("JSON values serialize");
    bytes.push(b'\n');
    bytes
}

fn secs(start: Instant) -> String {
    format!("{:.3}s", start.elapsed().as_secs_f64())
}

// ---------------------------------------------------------------------------
// simulate

/// Paths rendered in parallel per chunk, then written in seed order.
const SIMULATE_CHUNK: usize = 64;

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut c = Checker::default();
    let base = Base::read(
        cfg,
        &mut c,
        Defaults {
            n: 2,
            grid: 4096,
            samples: 1,
        },
    );
    let seeds = cfg.seeds.map_or(1, |v| c.positive_int("seeds", v));
    c.check(seeds <= MAX_SEEDS, "seeds", || format!("must be at most {MAX_SEEDS}, got {seeds}"));
    c.finish()?;

    let start = Instant::now();
    let spec = base.spec()?;
    let grid = TimeGrid::uniform(base.horizon, base.grid)?;
    let mut echo = base.echo();
    echo.samples = None;
    echo.seeds = Some(seeds as i64);
    let header = comment_header("simulate", &echo);
    let format = base.format;

    let mut out = OutDir::create(&base.out)?;
    let all: Vec<u64> = (0..seeds as u64).map(|i| path_seed(base.seed, i)).collect();
    for (chunk_idx, chunk) in all.chunks(SIMULATE_CHUNK).enumerate() {
        let rendered = batch_map(&spec, &grid, chunk, SamplerMethod::Transition, |path| {
            render_path(&path, format, &header, &echo)
        })?;
        for (offset, (seed, bytes)) in chunk.iter().zip(rendered).enumerate() {
            let i = chunk_idx * SIMULATE_CHUNK + offset;
            let ext = match format {
                OutputFormat::Csv => "csv",
                OutputFormat::Json => "json",
            };
            out.write(&format!("path_{i:04}_seed_{seed}.{ext}"), &bytes?)?;
        }
    }
    let summary = format!(
        "simulate: n={} T={} m={} seeds={} wall={} -> {}",
        base.n,
        base.horizon,
        base.grid,
        seeds,
        secs(start),
        base.out.display()
    );
    Ok(Outcome {
        files: out.files,
        summary,
    })
}

fn render_path(path: &PathSample, format: OutputFormat, header: &str, echo: &ExperimentConfig) -> Result<Vec<u8>> {
    match format {
        OutputFormat::Csv => {
            let mut bytes = header.as_bytes().to_vec();
            path.write_csv(&mut bytes)?;
            Ok(bytes)
        }
        OutputFormat::Json => {
            let states: Vec<&[f64]> = path.states().collect();
            Ok(json_document(
                "simulate",
                echo,
                json!({ "seed": path.seed, "t": path.grid.points(), "x": states }),
            ))
        }
    }
}

// ---------------------------------------------------------------------------
// smallball

pub fn cmd_smallball(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut c = Checker::default();
    let base = Base::read(
        cfg,
        &mut c,
        Defaults {
            n: 2,
            grid: 4096,
            samples: 10_000,
        },
    );
    let eps = cfg.eps.clone().unwrap_or_else(|| vec![1.0, 0.75, 0.5]);
    check_positive_list(&mut c, "eps", &eps);
    c.check(eps.windows(2).all(|w| w[0] > w[1]), "eps", || {
        "must be strictly decreasing".to_string()
    });
    let weights = match &cfg.weights {
        None => Some(SplitWeights::default_for(base.n)),
        Some(w) => {
            c.check(w.len() == base.n, "weights", || format!("needs {} entries, got {}", base.n, w.len()));
            // Weights summing to one follow the ℓ¹ splitting; anything else
            // must satisfy the Euclidean condition Σx² ≤ 1.
            let sum: f64 = w.iter().sum();
            let convention = if (sum - 1.0).abs() <= 1e-12 {
                SplitConvention::SumToOne
            } else {
                SplitConvention::Euclidean
            };
            match SplitWeights::new(w.clone(), convention) {
                Ok(sw) => Some(sw),
                Err(e) => {
                    c.fail("weights", e.to_string());
                    None
                }
            }
        }
    };
    c.finish()?;
    let weights = weights.expect("validated");

    let start = Instant::now();
    let ensemble = Ensemble::new(base.spec()?, base.grid, base.samples, base.seed)?;
    let points = small_deviation_sandwich(&ensemble, &eps, &weights)?;
    let mut echo = base.echo();
    echo.eps = Some(eps.clone());
    echo.weights = Some(weights.weights().to_vec());

    let with_exact = base.n == 1;
    let mut rows = Vec::with_capacity(points.len());
    let mut csv = comment_header("smallball", &echo);
    csv.push_str("epsilon,p_hat,ci_low,ci_high,rate,rate_lo,rate_hi,censored,grid_size,n_samples");
    csv.push_str(if with_exact { ",p_exact\n" } else { "\n" });
    let mut bracketed = 0;
    for p in &points {
        let r = &p.rate;
        let e = &r.estimate;
        let p_exact = if with_exact {
            Some(bm_smallball_exact(base.horizon, p.epsilon)?)
        } else {
            None
        };
        let _ = write!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            p.epsilon, e.p_hat, e.ci_low, e.ci_high, r.rate, r.rate_lo, r.rate_hi, r.censored, e.grid_size, e.n_samples
        );
        match p_exact {
            Some(x) => {
                let _ = writeln!(csv, ",{x}");
            }
            None => csv.push('\n'),
        }
        let within = r.rate >= p.brownian_reference - r.ci_width() && r.rate <= p.splitting_reference;
        bracketed += within as usize;
        let mut row = json!({
            "epsilon": p.epsilon,
            "p_hat": e.p_hat,
            "ci_low": e.ci_low,
            "ci_high": e.ci_high,
            "n_hits": e.n_hits,
            "rate": r.rate,
            "rate_lo": r.rate_lo,
            "rate_hi": r.rate_hi,
            "ci_width": r.ci_width(),
            "censored": r.censored,
            "lower_reference": p.brownian_reference,
            "upper_reference": p.splitting_reference,
            "product_bound": p.product_bound,
            "rectangle_p_hat": p.rectangle.p_hat,
            "brownian_marginal_p_hat": p.brownian_marginal.p_hat,
            "marginal_p_hat": p.marginals.iter().map(|m| m.p_hat).collect::<Vec<_>>(),
            "bracketed": within,
        });
        if let Some(x) = p_exact {
            row["p_exact"] = json!(x);
        }
        rows.push(row);
    }

    let mut out = OutDir::create(&base.out)?;
    if base.format == OutputFormat::Csv {
        out.write("smallball.csv", csv.as_bytes())?;
    }
    let summary_doc = json_document(
        "smallball",
        &echo,
        json!({
            "n": base.n,
            "T": base.horizon,
            "grid_size": base.grid,
            "n_samples": base.samples,
            "lambda1_T": LAMBDA_1 * base.horizon,
            "points": rows,
        }),
    );
    out.write("smallball.json", &summary_doc)?;
    let summary = format!(
        "smallball: n={} T={} m={} N={} radii={} bracketed={}/{} wall={} -> {}",
        base.n,
        base.horizon,
        base.grid,
        base.samples,
        eps.len(),
        bracketed,
        points.len(),
        secs(start),
        base.out.display()
    );
    Ok(Outcome {
        files: out.files,
        summary,
    })
}

// ---------------------------------------------------------------------------
// gci

pub fn cmd_gci(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut c = Checker::default();
    let base = Base::read(
        cfg,
        &mut c,
        Defaults {
            n: 2,
            grid: 1024,
            samples: 10_000,
        },
    );
    if let Some(t) = &cfg.thresholds {
        check_positive_list(&mut c, "thresholds", t);
        c.check(t.len() == base.n, "thresholds", || {
            format!("needs {} entries, got {}", base.n, t.len())
        });
    }
    c.finish()?;

    let start = Instant::now();
    let spec = base.spec()?;
    // Default rectangle: each side is the standard deviation of X_d(T).
    let thresholds = match &cfg.thresholds {
        Some(t) => t.clone(),
        None => (1..=base.n)
            .map(|d| cov_kernel(&spec, d, d, base.horizon, base.horizon).map(f64::sqrt))
            .collect::<kolmo_core::Result<_>>()?,
    };
    let ensemble = Ensemble::new(spec, base.grid, base.samples, base.seed)?;
    let report = gci_rectangle_check(&ensemble, &thresholds)?;
    let mut echo = base.echo();
    echo.thresholds = Some(thresholds);

    let mut out = OutDir::create(&base.out)?;
    if base.format == OutputFormat::Csv {
        let mut csv = comment_header("gci", &echo);
        csv.push_str("joint,product,se_joint,se_product,se_combined,violation,n_samples\n");
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            report.joint,
            report.product,
            report.se_joint,
            report.se_product,
            report.se_combined,
            report.violation,
            report.n_samples
        );
        out.write("gci.csv", csv.as_bytes())?;
    }
    out.write("gci.json", &json_document("gci", &echo, serde_json::to_value(&report)?))?;
    let summary = format!(
        "gci: n={} N={} joint={:.6} product={:.6} violation={} wall={} -> {}",
        base.n,
        base.samples,
        report.joint,
        report.product,
        report.violation,
        secs(start),
        base.out.display()
    );
    Ok(Outcome {
        files: out.files,
        summary,
    })
}

// ---------------------------------------------------------------------------
// lil

pub fn cmd_lil(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut c = Checker::default();
    let regime = cfg.regime.unwrap_or(RegimeArg::Zero);
    let defaults = match regime {
        RegimeArg::Zero => Defaults {
            n: 2,
            grid: 1 << 18,
            samples: 100,
        },
        RegimeArg::Infinity => Defaults {
            n: 2,
            grid: 1 << 17,
            samples: 200,
        },
    };
    let base = Base::read(cfg, &mut c, defaults);
    let windows = match regime {
        RegimeArg::Zero => cfg.windows.clone().unwrap_or_else(|| dyadic_windows(4, 14)),
        RegimeArg::Infinity => cfg.windows.clone().unwrap_or_else(|| vec![1e2, 1e3, 1e4]),
    };
    let validated = match regime {
        RegimeArg::Zero => validate_zero_windows(&windows),
        RegimeArg::Infinity => validate_infinity_windows(&windows),
    };
    // Paths run on [0, max window]; every window needs enough grid points.
    let mut grid = None;
    match validated {
        Err(e) => c.fail("windows", e.to_string()),
        Ok(w) => {
            let horizon = w.iter().copied().fold(0.0, f64::max);
            if let Ok(g) = TimeGrid::uniform(horizon, base.grid) {
                let smallest = w.iter().copied().fold(f64::INFINITY, f64::min);
                let points = g.count_up_to(smallest);
                if points < MIN_WINDOW_POINTS {
                    c.fail(
                        "grid",
                        format!(
                            "window {smallest} sees only {points} of {} grid points on [0, {horizon}]; \
                             at least {MIN_WINDOW_POINTS} are required",
                            base.grid
                        ),
                    );
                } else {
                    grid = Some(g);
                }
            }
        }
    }
    c.finish()?;
    let grid = grid.expect("validated");

    let start = Instant::now();
    let horizon = grid.horizon();
    let spec = ProcessSpec::new(base.n, horizon)?;
    let mut echo = base.echo();
    echo.horizon = None;
    echo.regime = Some(regime);
    echo.windows = Some(windows.clone());
    let tag = regime.to_string();

    let mut csv = comment_header("lil", &echo);
    csv.push_str("t,statistic,component,regime,seed\n");
    let mut row = |t: f64, s: f64, comp: &str, seed: u64| {
        let _ = writeln!(csv, "{t},{s},{comp},{tag},{seed}");
    };

    let body = match regime {
        RegimeArg::Zero => {
            let seeds: Vec<u64> = (0..base.samples as u64).map(|i| path_seed(base.seed, i)).collect();
            let reports = batch_map(&spec, &grid, &seeds, SamplerMethod::Transition, |p| {
                lil_statistic_zero(&p, &windows)
            })?
            .into_iter()
            .collect::<kolmo_core::Result<Vec<_>>>()?;
            let w = &reports[0].full.windows;
            let mut mean_full = vec![0.0; w.len()];
            let mut mean_brownian = vec![0.0; w.len()];
            let mut mean_ratio = vec![0.0; w.len()];
            let mut bracket_violations = 0usize;
            for r in &reports {
                for (i, &t) in w.iter().enumerate() {
                    row(t, r.full.statistic[i], "norm", r.seed);
                    row(t, r.brownian.statistic[i], "1", r.seed);
                    row(t, r.ratio[i], "ratio", r.seed);
                    mean_full[i] += r.full.statistic[i];
                    mean_brownian[i] += r.brownian.statistic[i];
                    mean_ratio[i] += r.ratio[i];
                    let q = r.ratio[i];
                    if q < 1.0 - 1e-12 || q * q > r.bracket[i] * (1.0 + 1e-9) {
                        bracket_violations += 1;
                    }
                }
            }
            let k = reports.len() as f64;
            for v in [&mut mean_full, &mut mean_brownian, &mut mean_ratio] {
                v.iter_mut().for_each(|x| *x /= k);
            }
            json!({
                "regime": tag,
                "n": base.n,
                "n_paths": reports.len(),
                "horizon": horizon,
                "windows": w,
                "rate_exponent": 0.5,
                "mean_norm": mean_full,
                "mean_brownian": mean_brownian,
                "mean_ratio": mean_ratio,
                "bracket": reports[0].bracket,
                "bracket_violations": bracket_violations,
            })
        }
        RegimeArg::Infinity => {
            let ensemble = Ensemble::with_grid(spec, grid.clone(), base.samples, base.seed)?;
            let records = lil_statistic_infinity(&ensemble, &windows)?;
            let w = &records[0].windows;
            let n = base.n;
            let mut means = vec![vec![0.0; w.len()]; n + 1];
            let mut decreasing = vec![0usize; n];
            for r in &records {
                let full = r.full();
                for (i, &t) in w.iter().enumerate() {
                    row(t, full.statistic[i], "norm", r.seed);
                    means[0][i] += full.statistic[i];
                }
                for d in 1..=n {
                    let s = r.component(d).statistic;
                    for (i, &t) in w.iter().enumerate() {
                        row(t, s[i], &d.to_string(), r.seed);
                        means[d][i] += s[i];
                    }
                    decreasing[d - 1] += s.windows(2).all(|p| p[1] < p[0]) as usize;
                }
            }
            let k = records.len() as f64;
            means.iter_mut().flatten().for_each(|x| *x /= k);
            json!({
                "regime": tag,
                "n": n,
                "n_paths": records.len(),
                "horizon": horizon,
                "windows": w,
                "rate_exponent": records[0].rate_exponent(),
                "mean_norm": means[0],
                "mean_component": &means[1..],
                "decreasing_fraction": decreasing.iter().map(|&c| c as f64 / k).collect::<Vec<_>>(),
            })
        }
    };

    let mut out = OutDir::create(&base.out)?;
    if base.format == OutputFormat::Csv {
        out.write(&format!("lil_{tag}.csv"), csv.as_bytes())?;
    }
    out.write(&format!("lil_{tag}.json"), &json_document("lil", &echo, body))?;
    let summary = format!(
        "lil: regime={tag} n={} paths={} m={} windows={} wall={} -> {}",
        base.n,
        base.samples,
        base.grid,
        windows.len(),
        secs(start),
        base.out.display()
    );
    Ok(Outcome {
        files: out.files,
        summary,
    })
}

// ---------------------------------------------------------------------------
// cov-check

pub fn cmd_cov_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let mut c = Checker::default();
    let base = Base::read(
        cfg,
        &mut c,
        Defaults {
            n: 2,
            grid: 64,
            samples: 1,
        },
    );
    c.check(base.n * base.grid <= MAX_COV_DIM, "grid", || {
        format!("n·grid = {} exceeds {MAX_COV_DIM}", base.n * base.grid)
    });
    c.finish()?;

    let start = Instant::now();
    let spec = base.spec()?;
    let grid = TimeGrid::uniform(base.horizon, base.grid)?;
    let closed = cov_matrix(&spec, &grid)?;
    let propagated = propagated_cov_matrix(&spec, &grid)?;
    let scale = closed.amax();
    let max_abs_diff = (&closed - &propagated).amax();

    // Scaling identity on a fixed set of grid-point pairs and factors.
    let pts = grid.points();
    let picks: Vec<f64> = (0..8).map(|i| pts[i * (pts.len() - 1) / 7]).collect();
    let mut scaling_max_rel_err = 0.0f64;
    let mut cases = 0usize;
    for j in 1..=base.n {
        for k in 1..=base.n {
            for &eps in &[0.125, 0.5, 0.9] {
                for &s in &picks {
                    for &t in &picks {
                        let (lhs, rhs) = scaling_check_cross(&spec, j, k, eps, s, t)?;
                        let denom = lhs.abs().max(rhs.abs());
                        if denom > 0.0 {
                            scaling_max_rel_err = scaling_max_rel_err.max((lhs - rhs).abs() / denom);
                        }
                        cases += 1;
                    }
                }
            }
        }
    }
    let mut echo = base.echo();
    echo.samples = None;
    echo.seed = None;

    let mut out = OutDir::create(&base.out)?;
    if base.format == OutputFormat::Csv {
        let mut csv = comment_header("cov-check", &echo);
        csv.push_str("n,grid_size,max_abs_diff,max_rel_diff,scaling_max_rel_err,scaling_cases\n");
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            base.n,
            base.grid,
            max_abs_diff,
            max_abs_diff / scale,
            scaling_max_rel_err,
            cases
        );
        out.write("cov_check.csv", csv.as_bytes())?;
    }
    out.write(
        "cov_check.json",
        &json_document(
            "cov-check",
            &echo,
            json!({
                "n": base.n,
                "grid_size": base.grid,
                "max_abs_diff": max_abs_diff,
                "max_rel_diff": max_abs_diff / scale,
                "scaling_max_rel_err": scaling_max_rel_err,
                "scaling_cases": cases,
            }),
        ),
    )?;
    let summary = format!(
        "cov-check: n={} m={} max_abs_diff={max_abs_diff:.3e} scaling_max_rel_err={scaling_max_rel_err:.3e} wall={} -> {}",
        base.n,
        base.grid,
        secs(start),
        base.out.display()
    );
    Ok(Outcome {
        files: out.files,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_text(text).unwrap()
    }

    fn violated(r: Result<Outcome>) -> Vec<String> {
        let err = r.expect_err("expected a validation error");
        let v = err.downcast_ref::<ValidationError>().expect("validation error");
        v.fields().into_iter().map(String::from).collect()
    }

    #[test]
    fn simulate_reports_every_bad_field() {
        let fields = violated(cmd_simulate(&cfg("n = 0\nT = -1\ngrid = 0\nseeds = 0")));
        assert_eq!(fields, ["n", "T", "grid", "seeds"]);
        assert_eq!(violated(cmd_simulate(&cfg("n = 13"))), ["n"]);
    }

    #[test]
    fn smallball_validation() {
        assert_eq!(violated(cmd_smallball(&cfg("eps = 0.5,0.7"))), ["eps"]);
        assert_eq!(violated(cmd_smallball(&cfg("eps = 0.5,0.7,-1"))), ["eps", "eps"]);
        assert_eq!(violated(cmd_smallball(&cfg("n = 2\nweights = 0.9,0.9"))), ["weights"]);
        assert_eq!(violated(cmd_smallball(&cfg("n = 3\nweights = 0.5,0.5"))), ["weights"]);
    }

    #[test]
    fn lil_validation() {
        assert_eq!(violated(cmd_lil(&cfg("windows = 1"))), ["windows"]);
        assert_eq!(violated(cmd_lil(&cfg("regime = infinity\nwindows = 2"))), ["windows"]);
        assert_eq!(violated(cmd_lil(&cfg("windows = 0.1,0.0001\ngrid = 64"))), ["grid"]);
    }

    #[test]
    fn gci_and_cov_check_validation() {
        assert_eq!(violated(cmd_gci(&cfg("n = 2\nthresholds = 0.5"))), ["thresholds"]);
        assert_eq!(violated(cmd_cov_check(&cfg("n = 5\ngrid = 1000"))), ["grid"]);
    }

    #[test]
    fn gci_single_component_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg("n = 1\nsamples = 2000\ngrid = 128\nformat = json");
        c.out = Some(dir.path().to_path_buf());
        cmd_gci(&c).unwrap();
        let doc: Value = serde_json::from_slice(&fs::read(dir.path().join("gci.json")).unwrap()).unwrap();
        assert_eq!(doc["joint"], doc["product"]);
        assert_eq!(doc["violation"], Value::Bool(false));
        assert_eq!(doc["config"]["n"], Value::String("1".into()));
    }

    #[test]
    fn cov_check_matches_closed_form() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg("n = 3\ngrid = 32");
        c.out = Some(dir.path().to_path_buf());
        let outcome = cmd_cov_check(&c).unwrap();
        assert_eq!(outcome.files.len(), 2);
        let doc: Value = serde_json::from_slice(&fs::read(dir.path().join("cov_check.json")).unwrap()).unwrap();
        assert!(doc["max_abs_diff"].as_f64().unwrap() < 1e-12);
        assert!(doc["scaling_max_rel_err"].as_f64().unwrap() < 1e-12);
    }

    #[test]
    fn unwritable_output_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let mut c = cfg("grid = 8");
        c.out = Some(blocker.join("sub"));
        let err = cmd_simulate(&c).unwrap_err();
        assert!(format!("{err:#}").contains(&blocker.display().to_string()), "{err:#}");
    }
}
