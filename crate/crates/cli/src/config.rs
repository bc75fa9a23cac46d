//! Experiment configuration: a flat `key = value` text format that mirrors
//! the command-line flags. Flags override values read from a file.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeArg {
    Zero,
    Infinity,
}

impl FromStr for RegimeArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zero" => Ok(Self::Zero),
            "infinity" => Ok(Self::Infinity),
            other => Err(format!("unknown regime {other:?} (expected zero or infinity)")),
        }
    }
}

impl fmt::Display for RegimeArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Zero => "zero",
            Self::Infinity => "infinity",
        })
    }
}

/// Every field is optional; unset fields take per-command defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub n: Option<i64>,
    pub horizon: Option<f64>,
    pub grid: Option<i64>,
    pub samples: Option<i64>,
    pub seed: Option<u64>,
    pub seeds: Option<i64>,
    pub eps: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub thresholds: Option<Vec<f64>>,
    pub regime: Option<RegimeArg>,
    pub windows: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ConfigParseError {}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|item| {
            let item = item.trim();
            item.parse::<f64>().map_err(|_| format!("{item:?} is not a number"))
        })
        .collect()
}

fn join_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_value<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("{v:?}: {e}"))
}

impl ExperimentConfig {
    /// Values set in `other` replace those in `self`.
    pub fn overlay(mut self, other: &ExperimentConfig) -> Self {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f.clone(); } )* };
        }
        take!(n, horizon, grid, samples, seed, seeds, eps, weights, thresholds, regime, windows, out, format);
        self
    }

    /// `(key, value)` pairs of the set fields, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! scalar {
            ($key:literal, $f:expr) => {
                if let Some(v) = &$f {
                    out.push(($key, v.to_string()));
                }
            };
        }
        macro_rules! list {
            ($key:literal, $f:expr) => {
                if let Some(v) = &$f {
                    out.push(($key, join_list(v)));
                }
            };
        }
        scalar!("n", self.n);
        scalar!("T", self.horizon);
        scalar!("grid", self.grid);
        scalar!("samples", self.samples);
        scalar!("seed", self.seed);
        scalar!("seeds", self.seeds);
        list!("eps", self.eps);
        list!("weights", self.weights);
        list!("thresholds", self.thresholds);
        scalar!("regime", self.regime);
        list!("windows", self.windows);
        if let Some(p) = &self.out {
            out.push(("out", p.display().to_string()));
        }
        scalar!("format", self.format);
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigParseError> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| ConfigParseError { line: idx + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let line_no = idx + 1;
            macro_rules! wrap {
                ($e:expr) => {
                    $e.map_err(|m: String| ConfigParseError {
                        line: line_no,
                        message: format!("{key}: {m}"),
                    })
                };
            }
            match key {
                "n" => cfg.n = Some(wrap!(parse_value(value))?),
                "T" => cfg.horizon = Some(wrap!(parse_value(value))?),
                "grid" => cfg.grid = Some(wrap!(parse_value(value))?),
                "samples" => cfg.samples = Some(wrap!(parse_value(value))?),
                "seed" => cfg.seed = Some(wrap!(parse_value(value))?),
                "seeds" => cfg.seeds = Some(wrap!(parse_value(value))?),
                "eps" => cfg.eps = Some(wrap!(parse_list(value))?),
                "weights" => cfg.weights = Some(wrap!(parse_list(value))?),
                "thresholds" => cfg.thresholds = Some(wrap!(parse_list(value))?),
                "regime" => cfg.regime = Some(wrap!(value.parse())?),
                "windows" => cfg.windows = Some(wrap!(parse_list(value))?),
                "out" => cfg.out = Some(PathBuf::from(value)),
                "format" => cfg.format = Some(wrap!(value.parse())?),
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        Ok(cfg)
    }
}

/// All violated fields of a configuration, reported together.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationError {
    pub violations: Vec<(String, String)>,
}

impl ValidationError {
    pub fn fields(&self) -> Vec<&str> {
        self.violations.iter().map(|(f, _)| f.as_str()).collect()
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for (field, msg) in &self.violations {
            writeln!(f, "  {field}: {msg}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationError {}

/// Collects violations while reading fields.
#[derive(Default)]
pub(crate) struct Checker {
    violations: Vec<(String, String)>,
}

impl Checker {
    pub(crate) fn fail(&mut self, field: &str, msg: impl Into<String>) {
        self.violations.push((field.to_string(), msg.into()));
    }

    pub(crate) fn check(&mut self, ok: bool, field: &str, msg: impl FnOnce() -> String) {
        if !ok {
            self.fail(field, msg());
        }
    }

    pub(crate) fn positive_int(&mut self, field: &str, v: i64) -> usize {
        if v < 1 {
            self.fail(field, format!("must be a positive integer, got {v}"));
            1
        } else {
            v as usize
        }
    }

    pub(crate) fn finish(self) -> Result<(), ValidationError> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(ValidationError {
                violations: self.violations,
            })
        }
    }
}
