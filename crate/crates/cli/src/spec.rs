//! Experiment specs: one TOML file per experiment, with command-line flags
//! taking precedence over file values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{usage, CliError, Result};

pub const PROTOCOLS: [&str; 6] = ["fingerprint_eq", "disj_product", "disj_bounded_info", "qdisj", "sparse_low_info", "sparse_logd"];

pub const DISTRIBUTIONS: [&str; 9] = [
    "iid_product",
    "razborov_mu",
    "razborov_nu",
    "razborov_sigma",
    "eq_equal",
    "eq_unequal",
    "sparse_hard",
    "sparse_zero",
    "sparse_one",
];

pub const DEFAULT_TRIALS: u64 = 1000;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    #[serde(default)]
    pub n: Vec<usize>,
    /// Information budgets; defaults to [0].
    #[serde(default)]
    pub k: Vec<f64>,
    /// Error targets; defaults to [0.1].
    #[serde(default)]
    pub eps: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub subcommand: Option<String>,
    pub description: Option<String>,
    /// Acceptance criterion evaluated by this spec, if any.
    pub criterion: Option<u32>,
    /// Verification suite for `verify`.
    pub suite: Option<String>,
    #[serde(default)]
    pub protocols: Vec<String>,
    pub distribution: Option<String>,
    /// "unbounded", "two_round" or "log_star" for disj_bounded_info.
    pub rounds_mode: Option<String>,
    /// Statistic the fitted_exponent column regresses on n: "mean_bits" or "max_bits".
    pub fit: Option<String>,
    #[serde(default)]
    pub grid: Grid,
    /// Numeric protocol and distribution parameters.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    /// Directory of tiny oracle fixtures, relative to the spec file.
    pub fixtures: Option<PathBuf>,
    /// Directory of the spec file; relative paths resolve against it.
    #[serde(skip)]
    pub base: Option<PathBuf>,
}

/// Flag values that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ExperimentSpec {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| CliError::Usage(format!("{origin}: {e}")))?;
        spec.validate().map_err(|e| CliError::Usage(format!("{origin}: {e}")))?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut spec = Self::parse(&text, &path.display().to_string())?;
        spec.base = path.parent().map(Path::to_path_buf);
        Ok(spec)
    }

    /// Resolves a path from the spec against the spec file's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base {
            Some(b) if p.is_relative() => b.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn fixtures_dir(&self) -> PathBuf {
        self.fixtures.as_deref().map_or_else(|| PathBuf::from("fixtures/tiny"), |p| self.resolve(p))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.trials.is_some() {
            self.trials = o.trials;
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
        if o.workers.is_some() {
            self.workers = o.workers;
        }
    }

    pub fn trials(&self) -> u64 {
        self.trials.unwrap_or(DEFAULT_TRIALS)
    }

    pub fn trials_or(&self, default: u64) -> u64 {
        self.trials.unwrap_or(default)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    pub fn ks(&self) -> Vec<f64> {
        if self.grid.k.is_empty() {
            vec![0.0]
        } else {
            self.grid.k.clone()
        }
    }

    pub fn epss(&self) -> Vec<f64> {
        if self.grid.eps.is_empty() {
            vec![0.1]
        } else {
            self.grid.eps.clone()
        }
    }

    /// Grid points in file order: n outermost, then k, then ε.
    pub fn points(&self) -> Vec<(usize, f64, f64)> {
        let mut out = Vec::new();
        for &n in &self.grid.n {
            for &k in &self.ks() {
                for &eps in &self.epss() {
                    out.push((n, k, eps));
                }
            }
        }
        out
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if let Some(s) = &self.subcommand {
            if !["run", "verify"].contains(&s.as_str()) {
                return Err(format!("field `subcommand`: expected \"run\" or \"verify\", got {s:?}"));
            }
        }
        if let Some(c) = self.criterion {
            if !(1..=14).contains(&c) {
                return Err(format!("field `criterion`: {c} is not in 1..=14"));
            }
        }
        if let Some(s) = &self.suite {
            if !["lemmas", "oracles", "equivalence", "all"].contains(&s.as_str()) {
                return Err(format!("field `suite`: unknown suite {s:?}"));
            }
        }
        for p in &self.protocols {
            if !PROTOCOLS.contains(&p.as_str()) {
                return Err(format!("field `protocols`: unknown protocol {p:?}"));
            }
        }
        if let Some(d) = &self.distribution {
            if !DISTRIBUTIONS.contains(&d.as_str()) {
                return Err(format!("field `distribution`: unknown distribution {d:?}"));
            }
        }
        if let Some(m) = &self.rounds_mode {
            if !["unbounded", "two_round", "log_star"].contains(&m.as_str()) {
                return Err(format!("field `rounds_mode`: unknown mode {m:?}"));
            }
        }
        if let Some(f) = &self.fit {
            if !["mean_bits", "max_bits"].contains(&f.as_str()) {
                return Err(format!("field `fit`: expected \"mean_bits\" or \"max_bits\", got {f:?}"));
            }
        }
        if let Some(&n) = self.grid.n.iter().find(|&&n| n == 0) {
            return Err(format!("field `grid.n`: sizes must be positive, got {n}"));
        }
        if let Some(&k) = self.grid.k.iter().find(|&&k| !(k >= 0.0 && k.is_finite())) {
            return Err(format!("field `grid.k`: budgets must be non-negative, got {k}"));
        }
        if let Some(&e) = self.grid.eps.iter().find(|&&e| !(e > 0.0 && e < 1.0)) {
            return Err(format!("field `grid.eps`: error targets must lie in (0,1), got {e}"));
        }
        if self.trials == Some(0) {
            return Err("field `trials`: must be positive".into());
        }
        if self.workers == Some(0) {
            return Err("field `workers`: must be positive".into());
        }
        Ok(())
    }

    /// Sweep specs need protocols and a distribution once the grid is non-empty.
    pub fn require_sweep(&self) -> Result<()> {
        if self.grid.n.is_empty() {
            return Ok(());
        }
        if self.protocols.is_empty() {
            return usage("field `protocols`: a non-empty grid needs at least one protocol");
        }
        if self.distribution.is_none() {
            return usage("field `distribution`: a non-empty grid needs a distribution");
        }
        Ok(())
    }
}
