//! Verification suites: exact property checks with witnesses on failure.

use std::path::PathBuf;

use crate::criteria::{self, Check};
use crate::error::{usage, Result};
use crate::fixtures;
use crate::spec::{ExperimentSpec, Grid};

pub const SUITES: [&str; 4] = ["lemmas", "oracles", "equivalence", "all"];

/// One reported check.
#[derive(Clone, Debug)]
pub struct Finding {
    pub suite: &'static str,
    pub source: String,
    pub check: Check,
}

impl Finding {
    /// Tab-separated: verdict, suite, source, check name, detail.
    pub fn line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            if self.check.pass { "PASS" } else { "FAIL" },
            self.suite,
            self.source,
            self.check.name,
            self.check.detail
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    pub workers: Option<usize>,
    pub fixtures: Option<PathBuf>,
    /// Monte Carlo trials per fixture-protocol pair in the oracle suite.
    pub trials: Option<u64>,
}

fn criterion_spec(id: u32, opts: &VerifyOptions) -> ExperimentSpec {
    let grid = match id {
        4 => Grid { n: vec![15, 31, 63], k: vec![1.0, 2.0, 4.0], eps: vec![] },
        5 => Grid { n: vec![15], k: vec![1.0, 2.0], eps: vec![] },
        6 => Grid { n: vec![], k: vec![], eps: vec![0.25] },
        _ => Grid::default(),
    };
    ExperimentSpec { criterion: Some(id), grid, seed: Some(opts.seed), workers: opts.workers, ..Default::default() }
}

fn run_criteria(suite: &'static str, ids: &[u32], opts: &VerifyOptions, out: &mut Vec<Finding>) -> Result<()> {
    for &id in ids {
        let outcome = criteria::evaluate(&criterion_spec(id, opts))?;
        let source = format!("criterion-{id:02}");
        out.extend(outcome.checks.into_iter().map(|check| Finding { suite, source: source.clone(), check }));
    }
    Ok(())
}

fn run_oracles(opts: &VerifyOptions, out: &mut Vec<Finding>) -> Result<()> {
    let dir = opts.fixtures.clone().unwrap_or_else(|| PathBuf::from("fixtures/tiny"));
    let all = fixtures::load_dir(&dir)?;
    if all.is_empty() {
        return usage(format!("no fixtures in {}", dir.display()));
    }
    let source = dir.display().to_string();
    for check in [
        criteria::fixture_expectations(&all)?,
        criteria::oracle_consistency(&all, opts.trials.unwrap_or(4000), opts.seed)?,
    ] {
        out.push(Finding { suite: "oracles", source: source.clone(), check });
    }
    Ok(())
}

/// Runs a suite and returns every check in order.
pub fn run_suite(suite: &str, opts: &VerifyOptions) -> Result<Vec<Finding>> {
    let mut out = Vec::new();
    let want = |s: &str| suite == s || suite == "all";
    if !SUITES.contains(&suite) {
        return usage(format!("unknown suite {suite:?}; expected one of {}", SUITES.join(", ")));
    }
    if want("lemmas") {
        run_criteria("lemmas", &[6, 7, 8, 13], opts, &mut out)?;
    }
    if want("oracles") {
        run_oracles(opts, &mut out)?;
    }
    if want("equivalence") {
        run_criteria("equivalence", &[4, 5, 14], opts, &mut out)?;
    }
    Ok(out)
}
