use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use cclab::dist::{decode, encode_dist, encode_matrix, make_sparse_fn, BipartiteDist, Container};
use cclab::info::divergence_suite;
use cclab::CoreError;
use cclab::oracle::{pareto_frontier, razborov_info_exact};
use cclab_cli::criteria;
use cclab_cli::error::{usage, CliError, Result};
use cclab_cli::fixtures::{self, Fixture};
use cclab_cli::spec::{ExperimentSpec, Grid, Overrides};
use cclab_cli::sweep::{self, build_point};
use cclab_cli::verify::{run_suite, VerifyOptions};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cclab", version, about = "Communication complexity experiments: sweeps, checks and exact oracles")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment spec file (TOML); flags override its values.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Output file; CSV for `run`, binary container for `gen`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a protocol sweep or an acceptance criterion from a spec.
    Run,
    /// Run a verification suite: lemmas, oracles, equivalence or all.
    Verify {
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        fixtures: Option<PathBuf>,
    },
    /// Information measures of a distribution.
    Info {
        #[command(flatten)]
        dist: DistArgs,
        /// Distribution to measure divergence against (same n and k).
        #[arg(long)]
        against: Option<String>,
    },
    /// Exact distributional complexity of tiny fixtures.
    Oracle {
        /// A fixture file or a directory of them.
        #[arg(long, default_value = "fixtures/tiny")]
        fixtures: PathBuf,
    },
    /// Write a sparse matrix or a distribution as a binary container.
    Gen {
        #[command(subcommand)]
        what: GenWhat,
    },
}

#[derive(Args, Clone)]
struct DistArgs {
    /// Distribution family, as in spec files.
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    /// Read the distribution from a binary container instead.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GenWhat {
    /// Random sparse matrix with about d ones per row and column.
    Sparse {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100.0)]
        d: f64,
        /// Print the debug text form instead of writing a container.
        #[arg(long)]
        text: bool,
    },
    /// A named distribution.
    Dist {
        #[command(flatten)]
        dist: DistArgs,
        #[arg(long)]
        text: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("cclab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn overrides(c: &Common) -> Overrides {
    Overrides { seed: c.seed, trials: c.trials, out: c.out.clone(), workers: c.workers }
}

fn load_spec(c: &Common) -> Result<Option<ExperimentSpec>> {
    let Some(path) = &c.spec else { return Ok(None) };
    let mut spec = ExperimentSpec::load(path)?;
    spec.apply(&overrides(c));
    Ok(Some(spec))
}

/// Returns whether every check passed.
fn dispatch(cli: Cli) -> Result<bool> {
    let c = &cli.common;
    match cli.command {
        Command::Run => {
            let Some(spec) = load_spec(c)? else {
                return usage("run needs --spec");
            };
            run(&spec)
        }
        Command::Verify { suite, fixtures } => {
            let spec = load_spec(c)?;
            let suite = suite.or_else(|| spec.as_ref().and_then(|s| s.suite.clone())).unwrap_or_else(|| "all".into());
            let opts = VerifyOptions {
                seed: c.seed.or_else(|| spec.as_ref().and_then(|s| s.seed)).unwrap_or(0),
                workers: c.workers,
                fixtures: fixtures.or_else(|| spec.as_ref().and_then(|s| s.fixtures.as_ref().map(|_| s.fixtures_dir()))),
                trials: c.trials,
            };
            let findings = run_suite(&suite, &opts)?;
            let mut stdout = std::io::stdout().lock();
            for f in &findings {
                writeln!(stdout, "{}", f.line()).map_err(|e| CliError::io("<stdout>", e))?;
            }
            Ok(findings.iter().all(|f| f.check.pass))
        }
        Command::Info { dist, against } => {
            let mu = load_dist(&dist, c)?;
            let sigma = match &against {
                Some(name) => Some(named_dist(name, dist.n.unwrap_or(mu.n()), dist.k, c)?),
                None => None,
            };
            let structured = dist.dist.as_deref() == Some("razborov_mu");
            println!("n = {}", mu.n());
            let r = match divergence_suite(&mu, sigma.as_ref()) {
                Err(CoreError::UnsupportedSize(_)) if structured && against.is_none() => {
                    // Too large to enumerate; the orbit sum is still exact.
                    let exact = razborov_info_exact(mu.n(), dist.k)?;
                    println!("I(X;Y) = {:.9}", exact.i_exact);
                    println!("closed form = {:.9} (m = {})", exact.closed_form, exact.m);
                    return Ok(true);
                }
                r => r?,
            };
            println!("support = {}", mu.support_size());
            println!("I(X;Y) = {:.9}", r.i);
            println!("I_inf(X;Y) = {:.9}", r.i_inf);
            if let Some(name) = &against {
                println!("D(mu||{name}) = {:.9}", r.d);
                println!("D_inf(mu||{name}) = {:.9}", r.d_inf);
                if !r.finite {
                    println!("infinite: {} atoms outside the reference support", r.witnesses.len());
                }
            }
            if structured {
                let exact = razborov_info_exact(mu.n(), dist.k)?;
                println!("closed form = {:.9} (m = {})", exact.closed_form, exact.m);
            }
            Ok(true)
        }
        Command::Oracle { fixtures: path } => {
            let all = if path.is_dir() { fixtures::load_dir(&path)? } else { vec![Fixture::load(&path)?] };
            for fx in &all {
                let frontier = pareto_frontier(&fx.matrix, &fx.mu)?;
                let pts: Vec<String> = frontier.points.iter().map(|(d, e)| format!("D={d}: eps>={e}")).collect();
                println!("{}\t{}", fx.name, pts.join(", "));
            }
            Ok(true)
        }
        Command::Gen { what } => {
            let (bytes, text) = match what {
                GenWhat::Sparse { n, d, text } => {
                    let inst = make_sparse_fn(n, d, c.seed.unwrap_or(0))?;
                    (encode_matrix(&inst.matrix), text.then(|| matrix_text(&inst.matrix)))
                }
                GenWhat::Dist { dist, text } => {
                    let mu = load_dist(&dist, c)?;
                    (encode_dist(&mu)?, text.then(|| mu.to_text()))
                }
            };
            match (text, &c.out) {
                (Some(t), _) => print!("{t}"),
                (None, Some(out)) => std::fs::write(out, bytes).map_err(|e| CliError::io(out, e))?,
                (None, None) => return usage("gen needs --out or --text"),
            }
            Ok(true)
        }
    }
}

fn matrix_text(m: &cclab::SparseMatrix) -> String {
    let mut s = format!("sparse n={} ones={}\n", m.n(), m.ones());
    for (r, c) in m.pairs() {
        s.push_str(&format!("{r} {c}\n"));
    }
    s
}

fn named_dist(name: &str, n: usize, k: f64, c: &Common) -> Result<BipartiteDist> {
    let spec = ExperimentSpec {
        distribution: Some(name.to_string()),
        grid: Grid { n: vec![n], k: vec![k], eps: vec![] },
        seed: c.seed,
        ..Default::default()
    };
    let point = build_point(&spec, n, k, 0.1)?;
    point.inputs.dist(name).cloned()
}

fn load_dist(a: &DistArgs, c: &Common) -> Result<BipartiteDist> {
    if let Some(path) = &a.input {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        return match decode(&bytes)? {
            Container::Dist(d) => Ok(d),
            Container::Matrix(_) => usage(format!("{}: holds a matrix, not a distribution", path.display())),
        };
    }
    let (Some(name), Some(n)) = (&a.dist, a.n) else {
        return usage("give --dist and --n, or --input");
    };
    named_dist(name, n, a.k, c)
}

fn run(spec: &ExperimentSpec) -> Result<bool> {
    let label = spec.description.clone().unwrap_or_default();
    let (rows, pass) = if spec.criterion.is_some() {
        let outcome = criteria::evaluate(spec)?;
        eprintln!("{}", outcome.line());
        let pass = outcome.pass();
        (outcome.rows, pass)
    } else {
        (sweep::run_sweep(spec)?, true)
    };
    match &spec.out {
        Some(out) => {
            sweep::write_outputs(out, &label, &rows, &spec.protocols)?;
        }
        None => print!("{}", sweep::csv_string(&label, &rows)?),
    }
    Ok(pass)
}

