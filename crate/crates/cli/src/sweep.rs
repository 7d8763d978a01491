//! Grid sweeps: one Monte Carlo cell per grid point and protocol, written
//! as a versioned CSV with a gnuplot script next to it.

use std::io::Write;
use std::path::{Path, PathBuf};

use cclab::disj::{disj_bounded_info, disj_product_with_cap, fingerprint_equality, RoundsMode, DEFAULT_PRODUCT_CAP};
use cclab::dist::{iid_product, make_razborov, make_sparse_fn, BipartiteDist, RazborovParams, SparseInstance, Variant};
use cclab::engine::mix;
use cclab::qcost::{qdisj, QCostConfig};
use cclab::sparse::{mixed_hard_with_budget, sparse_logd_run, sparse_low_info_run, OneInputs, SparseConstants, ZeroInputs};
use cclab::{fit_exponent, monte_carlo, Cell, CommProblem, InputSource, Protocol, Set};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{usage, CliError, Result};
use crate::spec::ExperimentSpec;

pub const CSV_VERSION_LINE: &str = "# cclab-csv v1";

pub const COLUMNS: [&str; 13] = [
    "n",
    "k",
    "eps",
    "protocol",
    "trials",
    "mean_error",
    "err_ci_lo",
    "err_ci_hi",
    "mean_bits",
    "max_bits",
    "rounds",
    "fitted_exponent",
    "seed",
];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub n: usize,
    pub k: f64,
    pub eps: f64,
    pub protocol: String,
    pub trials: u64,
    pub mean_error: f64,
    pub err_ci_lo: f64,
    pub err_ci_hi: f64,
    pub mean_bits: f64,
    pub max_bits: u64,
    pub rounds: u32,
    pub fitted_exponent: Option<f64>,
    pub seed: u64,
}

impl Row {
    pub fn from_cell(n: usize, k: f64, eps: f64, protocol: &str, cell: &Cell, seed: u64) -> Self {
        Row {
            n,
            k,
            eps,
            protocol: protocol.to_string(),
            trials: cell.trials,
            mean_error: cell.mean_error,
            err_ci_lo: cell.err_ci_lo,
            err_ci_hi: cell.err_ci_hi,
            mean_bits: cell.mean_bits,
            max_bits: cell.max_bits,
            rounds: cell.max_rounds,
            fitted_exponent: None,
            seed,
        }
    }
}

/// Equal pairs (x, x) with x uniform on n bits.
pub struct EqualPairs {
    pub n: usize,
}

/// Uniform pairs with x ≠ y.
pub struct UnequalPairs {
    pub n: usize,
}

fn uniform_set(n: usize, rng: &mut ChaCha8Rng) -> Set {
    let mut s = Set::with_capacity(n);
    for i in 0..n {
        if rng.gen::<bool>() {
            s.insert(i);
        }
    }
    s
}

impl InputSource for EqualPairs {
    fn n(&self) -> usize {
        self.n
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (Set, Set) {
        let x = uniform_set(self.n, rng);
        (x.clone(), x)
    }
}

impl InputSource for UnequalPairs {
    fn n(&self) -> usize {
        self.n
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (Set, Set) {
        loop {
            let (x, y) = (uniform_set(self.n, rng), uniform_set(self.n, rng));
            if x != y {
                return (x, y);
            }
        }
    }
}

/// Inputs for one grid point.
pub enum Inputs {
    Dist(BipartiteDist),
    Source(Box<dyn InputSource>),
}

impl Inputs {
    pub fn source(&self) -> &dyn InputSource {
        match self {
            Inputs::Dist(d) => d,
            Inputs::Source(s) => s.as_ref(),
        }
    }

    pub fn dist(&self, what: &str) -> Result<&BipartiteDist> {
        match self {
            Inputs::Dist(d) => Ok(d),
            Inputs::Source(_) => usage(format!("{what} needs an explicit distribution, not a pair sampler")),
        }
    }
}

/// Everything a sweep needs at one grid point, built once per (n, k, ε).
pub struct Point {
    pub inputs: Inputs,
    pub sparse: Option<SparseInstance>,
}

fn sparse_instance(spec: &ExperimentSpec, n: usize) -> Result<SparseInstance> {
    let seed = spec.param("instance_seed", spec.seed() as f64) as u64;
    Ok(make_sparse_fn(n, spec.param("d", 100.0), seed)?)
}

pub fn build_point(spec: &ExperimentSpec, n: usize, k: f64, eps: f64) -> Result<Point> {
    let Some(dist) = spec.distribution.as_deref() else {
        return usage("field `distribution` is required");
    };
    let razborov = |v| -> Result<Inputs> { Ok(Inputs::Dist(make_razborov(RazborovParams::new(n, k)?, v)?)) };
    let (inputs, sparse) = match dist {
        "iid_product" => {
            let p = spec.param("p_scale", 1.0) / (n as f64).powf(spec.param("p_exp", 0.5));
            (Inputs::Dist(iid_product(n, p.min(1.0))?), None)
        }
        "razborov_mu" => (razborov(Variant::Mu)?, None),
        "razborov_nu" => (razborov(Variant::Nu)?, None),
        "razborov_sigma" => (razborov(Variant::Sigma)?, None),
        "eq_equal" => (Inputs::Source(Box::new(EqualPairs { n })), None),
        "eq_unequal" => (Inputs::Source(Box::new(UnequalPairs { n })), None),
        "sparse_hard" | "sparse_zero" | "sparse_one" => {
            let inst = sparse_instance(spec, n)?;
            let inputs = match dist {
                "sparse_hard" => {
                    let budget = spec.param("budget_scale", 1.0) * eps.powi(3) * n as f64;
                    let rows = spec.param("rows", 256.0) as usize;
                    let cols = spec.param("cols", 256.0) as usize;
                    let (nu, _) = mixed_hard_with_budget(&inst.matrix, rows, cols, budget, spec.seed())?;
                    Inputs::Dist(nu)
                }
                "sparse_zero" => Inputs::Source(Box::new(ZeroInputs { matrix: inst.matrix.clone() })),
                _ => Inputs::Source(Box::new(OneInputs { matrix: inst.matrix.clone() })),
            };
            (inputs, Some(inst))
        }
        other => return usage(format!("unknown distribution {other:?}")),
    };
    Ok(Point { inputs, sparse })
}

fn rounds_mode(spec: &ExperimentSpec) -> RoundsMode {
    match spec.rounds_mode.as_deref() {
        Some("two_round") => RoundsMode::TwoRound,
        Some("log_star") => RoundsMode::LogStar,
        _ => RoundsMode::Unbounded,
    }
}

/// Builds a protocol and the problem it runs on.
pub fn build_protocol(
    spec: &ExperimentSpec,
    name: &str,
    point: &Point,
    n: usize,
    k: f64,
    eps: f64,
) -> Result<(Box<dyn Protocol>, CommProblem)> {
    let sparse = || point.sparse.as_ref().ok_or_else(|| CliError::Usage(format!("{name} needs a sparse_* distribution")));
    Ok(match name {
        "fingerprint_eq" => {
            let bits = spec.param("fp_bits", (1.0 / eps).log2().ceil());
            (Box::new(fingerprint_equality(bits as u32)?), CommProblem::eq(n))
        }
        "disj_product" => {
            let mu = point.inputs.dist(name)?;
            (Box::new(disj_product_with_cap(mu, eps, spec.param("c2", DEFAULT_PRODUCT_CAP))?), CommProblem::disj(n))
        }
        "disj_bounded_info" => {
            let mu = point.inputs.dist(name)?;
            (Box::new(disj_bounded_info(mu, k, eps, rounds_mode(spec))?), CommProblem::disj(n))
        }
        "qdisj" => {
            let mu = point.inputs.dist(name)?;
            (Box::new(qdisj(mu, QCostConfig::new(eps, k)?)?), CommProblem::disj(n))
        }
        "sparse_low_info" => {
            let inst = sparse()?;
            let nu = point.inputs.dist(name)?;
            let d = SparseConstants::default();
            let constants = SparseConstants {
                c_good: spec.param("c_good", d.c_good),
                t: spec.param("t", d.t as f64) as usize,
                theta: spec.param("theta", d.theta),
                fp_bits: spec.param("fp_bits", d.fp_bits as f64) as u32,
            };
            (Box::new(sparse_low_info_run(&inst.problem, nu, eps, constants)?), inst.problem.clone())
        }
        "sparse_logd" => {
            let inst = sparse()?;
            (Box::new(sparse_logd_run(&inst.problem, spec.param("d", 100.0))?), inst.problem.clone())
        }
        other => return usage(format!("unknown protocol {other:?}")),
    })
}

/// Seed of one grid point, derived from the master seed and its coordinates.
pub fn point_seed(master: u64, n: usize, k: f64, eps: f64) -> u64 {
    mix(master, &[n as u64, k.to_bits(), eps.to_bits()])
}

/// Runs every grid point and protocol of the spec.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<Vec<Row>> {
    spec.require_sweep()?;
    let mut rows = Vec::new();
    for (n, k, eps) in spec.points() {
        rows.extend(run_point(spec, n, k, eps)?);
    }
    fill_exponents(&mut rows, spec.fit.as_deref() == Some("max_bits"));
    Ok(rows)
}

/// Runs every protocol of the spec at one grid point.
pub fn run_point(spec: &ExperimentSpec, n: usize, k: f64, eps: f64) -> Result<Vec<Row>> {
    let point = build_point(spec, n, k, eps)?;
    let seed = point_seed(spec.seed(), n, k, eps);
    let mut rows = Vec::new();
    for name in &spec.protocols {
        let (protocol, problem) = build_protocol(spec, name, &point, n, k, eps)?;
        let cell = monte_carlo(protocol.as_ref(), &problem, point.inputs.source(), spec.trials(), seed, spec.workers)?;
        rows.push(Row::from_cell(n, k, eps, name, &cell, spec.seed()));
    }
    Ok(rows)
}

/// Fills `fitted_exponent` for every (protocol, k, ε) group with at least
/// three sizes: the log-log slope of the bit statistic against n.
pub fn fill_exponents(rows: &mut [Row], use_max: bool) {
    let key = |r: &Row| (r.protocol.clone(), r.k.to_bits(), r.eps.to_bits());
    let mut groups: Vec<(String, u64, u64)> = rows.iter().map(key).collect();
    groups.dedup();
    groups.sort();
    groups.dedup();
    for g in groups {
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| key(r) == g)
            .map(|r| (r.n as f64, if use_max { r.max_bits as f64 } else { r.mean_bits }))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        let Ok(fit) = fit_exponent(&pts) else { continue };
        for r in rows.iter_mut().filter(|r| key(r) == g) {
            r.fitted_exponent = Some(fit.slope);
        }
    }
}

/// Writes the CSV: a version comment line, the header, one line per row.
pub fn write_csv(out: &mut impl Write, label: &str, rows: &[Row]) -> Result<()> {
    let io = |e: std::io::Error| CliError::io("<csv>", e);
    writeln!(out, "{CSV_VERSION_LINE} {label}").map_err(io)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COLUMNS).map_err(|e| CliError::io("<csv>", e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::io("<csv>", e.into()))?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn csv_string(label: &str, rows: &[Row]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(&mut buf, label, rows)?;
    Ok(String::from_utf8(buf).expect("csv output is UTF-8"))
}

/// Gnuplot script plotting mean bits against n on log-log axes, one curve
/// per protocol.
pub fn plot_script(csv_path: &Path, protocols: &[String]) -> String {
    let file = csv_path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    let mut s = String::new();
    s.push_str("# gnuplot script generated by cclab\n");
    s.push_str("set datafile separator ','\n");
    s.push_str("set logscale xy\n");
    s.push_str("set xlabel 'n'\nset ylabel 'mean bits'\nset key left top\n");
    let curves: Vec<String> = protocols
        .iter()
        .map(|p| format!("'{file}' skip 2 using 1:(strcol(4) eq '{p}' ? $9 : 1/0) with linespoints title '{p}'"))
        .collect();
    if curves.is_empty() {
        s.push_str(&format!("plot '{file}' skip 2 using 1:9 with points notitle\n"));
    } else {
        s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
    }
    s
}

/// Writes the CSV and its plot script (same stem, `.gp`).
pub fn write_outputs(path: &Path, label: &str, rows: &[Row], protocols: &[String]) -> Result<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, csv_string(label, rows)?).map_err(|e| CliError::io(path, e))?;
    let gp = path.with_extension("gp");
    std::fs::write(&gp, plot_script(path, protocols)).map_err(|e| CliError::io(&gp, e))?;
    Ok(gp)
}

