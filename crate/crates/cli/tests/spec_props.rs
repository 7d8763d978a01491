use cclab_cli::fixtures::{load_dir, Family};
use cclab_cli::spec::{ExperimentSpec, Overrides};
use cclab_cli::sweep::{csv_string, fill_exponents, run_sweep, Row};
use proptest::prelude::*;

fn row(n: usize, protocol: &str, bits: f64) -> Row {
    Row {
        n,
        k: 1.0,
        eps: 0.1,
        protocol: protocol.into(),
        trials: 10,
        mean_error: 0.0,
        err_ci_lo: 0.0,
        err_ci_hi: 0.1,
        mean_bits: bits,
        max_bits: bits.ceil() as u64,
        rounds: 1,
        fitted_exponent: None,
        seed: 0,
    }
}

#[test]
fn grid_points_run_n_then_k_then_eps() {
    let s = ExperimentSpec::parse("grid = { n = [10, 20], k = [1, 2], eps = [0.1, 0.2] }", "t").unwrap();
    let pts = s.points();
    assert_eq!(pts.len(), 8);
    assert_eq!(pts[0], (10, 1.0, 0.1));
    assert_eq!(pts[1], (10, 1.0, 0.2));
    assert_eq!(pts[2], (10, 2.0, 0.1));
    assert_eq!(pts[4], (20, 1.0, 0.1));
}

#[test]
fn defaults_fill_missing_axes() {
    let s = ExperimentSpec::parse("grid = { n = [5] }", "t").unwrap();
    assert_eq!(s.points(), vec![(5, 0.0, 0.1)]);
    assert_eq!(s.trials(), 1000);
    assert_eq!(s.seed(), 0);
}

#[test]
fn overrides_replace_only_given_values() {
    let mut s = ExperimentSpec::parse("seed = 3\ntrials = 40\nworkers = 2", "t").unwrap();
    s.apply(&Overrides { seed: Some(8), ..Default::default() });
    assert_eq!((s.seed(), s.trials(), s.workers), (8, 40, Some(2)));
}

#[test]
fn errors_name_the_origin_and_field() {
    let e = ExperimentSpec::parse("workers = 0", "spec.toml").unwrap_err().to_string();
    assert!(e.starts_with("spec.toml:") && e.contains("field `workers`"), "{e}");
    let e = ExperimentSpec::parse("criterion = 15", "spec.toml").unwrap_err().to_string();
    assert!(e.contains("field `criterion`"), "{e}");
}

#[test]
fn every_shipped_spec_parses() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../specs");
    for id in 1..=14 {
        let s = ExperimentSpec::load(&dir.join(format!("criterion-{id:02}.toml"))).unwrap();
        assert_eq!(s.criterion, Some(id));
    }
}

#[test]
fn shipped_fixtures_load() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/tiny");
    let all = load_dir(&dir).unwrap();
    assert!(all.len() >= 6);
    assert!(all.iter().any(|f| f.family == Family::Explicit && !f.is_product()));
    assert!(all.iter().any(|f| !f.uniform && f.is_product()));
    for f in &all {
        assert!(f.n <= 3 && !f.expect.is_empty());
    }
}

#[test]
fn rejected_grid_point_fails_the_sweep() {
    let s = ExperimentSpec::parse(
        "protocols = [\"disj_bounded_info\"]\ndistribution = \"razborov_mu\"\ngrid = { n = [15], k = [4] }",
        "t",
    )
    .unwrap();
    assert!(run_sweep(&s).is_err());
}

#[test]
fn two_sizes_leave_the_exponent_empty() {
    let mut rows = vec![row(16, "a", 4.0), row(64, "a", 8.0)];
    fill_exponents(&mut rows, false);
    assert!(rows.iter().all(|r| r.fitted_exponent.is_none()));
    let csv = csv_string("x", &rows).unwrap();
    assert!(csv.lines().nth(2).unwrap().contains(",,"));
}

proptest! {
    #[test]
    fn exponent_recovers_power_laws(a in 0.1f64..2.0, b in 0.1f64..1.5, c in 0.5f64..50.0) {
        let mut rows: Vec<Row> = [16usize, 32, 64, 128]
            .iter()
            .flat_map(|&n| [row(n, "p", c * (n as f64).powf(a)), row(n, "q", c * (n as f64).powf(b))])
            .collect();
        fill_exponents(&mut rows, false);
        for r in &rows {
            let want = if r.protocol == "p" { a } else { b };
            prop_assert!((r.fitted_exponent.unwrap() - want).abs() < 1e-9);
        }
    }
}
