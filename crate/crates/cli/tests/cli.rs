use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cclab::dist::{decode, Container};
use cclab_cli::sweep::{COLUMNS, CSV_VERSION_LINE};

fn cclab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cclab")).args(args).current_dir(dir).output().expect("binary runs")
}

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_SWEEP: &str = r#"
description = "small product sweep"
protocols = ["disj_product"]
distribution = "iid_product"
trials = 300
seed = 4
grid = { n = [64, 128, 256], eps = [0.1] }
"#;

#[test]
fn empty_grid_writes_header_only() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "empty.toml", "description = \"nothing\"\n");
    let o = cclab(&["run", "--spec", "empty.toml", "--out", "out/empty.csv"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("out/empty.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with(CSV_VERSION_LINE));
    assert_eq!(lines[1], COLUMNS.join(","));
    assert!(tmp.path().join("out/empty.gp").exists());
}

#[test]
fn same_spec_gives_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "s.toml", SMALL_SWEEP);
    for out in ["a.csv", "b.csv"] {
        let o = cclab(&["run", "--spec", "s.toml", "--out", out], tmp.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let a = std::fs::read(tmp.path().join("a.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("b.csv")).unwrap();
    assert_eq!(a, b);

    let text = String::from_utf8(a).unwrap();
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    // Three sizes: the fitted exponent is filled on every row.
    assert!(rows.iter().all(|r| r.split(',').nth(11).is_some_and(|f| !f.is_empty())));

    let gp = std::fs::read_to_string(tmp.path().join("a.gp")).unwrap();
    assert!(gp.contains("'a.csv'") && gp.contains("disj_product"));
}

#[test]
fn flags_override_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "s.toml", SMALL_SWEEP);
    let o = cclab(&["run", "--spec", "s.toml", "--seed", "99", "--trials", "50"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for row in text.lines().skip(2) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[4], "50");
        assert_eq!(f[12], "99");
    }
}

#[test]
fn invalid_specs_exit_with_usage_status() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        ("bad_protocol.toml", "protocols = [\"magic\"]\n", "field `protocols`"),
        ("unknown_field.toml", "trails = 10\n", "trails"),
        ("syntax.toml", "seed = 1\ngrid = { n = [1, }\n", "line 2"),
        ("bad_eps.toml", "grid = { eps = [1.5] }\n", "field `grid.eps`"),
        ("no_dist.toml", "protocols = [\"qdisj\"]\ngrid = { n = [15] }\n", "field `distribution`"),
    ];
    for (name, text, needle) in cases {
        write(tmp.path(), name, text);
        let o = cclab(&["run", "--spec", name], tmp.path());
        assert_eq!(o.status.code(), Some(2), "{name}");
        assert!(stderr(&o).contains(needle), "{name}: {}", stderr(&o));
    }
    let o = cclab(&["run"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = cclab(&["frobnicate"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oversized_requests_are_refused() {
    let tmp = tempfile::tempdir().unwrap();
    write(
        tmp.path(),
        "big.toml",
        "protocols = [\"sparse_logd\"]\ndistribution = \"sparse_zero\"\ngrid = { n = [20] }\n",
    );
    let o = cclab(&["run", "--spec", "big.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("refused"), "{}", stderr(&o));
}

#[test]
fn criterion_spec_runs_through_run() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = repo().join("specs/criterion-04.toml");
    let o = cclab(&["run", "--spec", spec.to_str().unwrap()], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("criterion 04 PASS"));
}

#[test]
fn lemma_suite_passes() {
    let o = cclab(&["verify", "--suite", "lemmas"], &repo());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().count() >= 10);
    assert!(text.lines().all(|l| l.starts_with("PASS\tlemmas\t")));
}

#[test]
fn oracle_suite_passes_on_shipped_fixtures() {
    let o = cclab(&["verify", "--suite", "oracles"], &repo());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn corrupted_fixture_is_reported_with_witness() {
    let tmp = tempfile::tempdir().unwrap();
    let src = std::fs::read_to_string(repo().join("fixtures/tiny/disj2.toml")).unwrap();
    assert!(src.contains("dcc = 3"));
    write(tmp.path(), "disj2.toml", &src.replacen("dcc = 3", "dcc = 2", 1));
    let o = cclab(&["verify", "--suite", "oracles", "--fixtures", tmp.path().to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8(o.stdout).unwrap();
    let fail = text.lines().find(|l| l.starts_with("FAIL")).expect("a failing line");
    assert!(fail.contains("disj2") && fail.contains("fixture says 2"), "{fail}");
}

#[test]
fn unknown_suite_is_a_usage_error() {
    let o = cclab(&["verify", "--suite", "everything"], &repo());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gen_writes_decodable_containers() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cclab(&["gen", "--seed", "3", "--out", "m.cclb", "sparse", "--n", "8", "--d", "10"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    match decode(&std::fs::read(tmp.path().join("m.cclb")).unwrap()).unwrap() {
        Container::Matrix(m) => assert_eq!(m.n(), 8),
        other => panic!("expected a matrix, got {other:?}"),
    }

    let o = cclab(&["gen", "--out", "mu.cclb", "dist", "--dist", "razborov_mu", "--n", "15", "--k", "1"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = cclab(&["info", "--input", "mu.cclb"], tmp.path());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("I(X;Y)"));

    let o = cclab(&["gen", "sparse", "--n", "8"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn info_matches_closed_form() {
    let o = cclab(&["info", "--dist", "razborov_mu", "--n", "15", "--k", "1"], &repo());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        line.split('=').nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap()
    };
    assert!((value("I(X;Y)") - value("closed form")).abs() < 1e-9);
}

#[test]
fn oracle_prints_frontiers() {
    let o = cclab(&["oracle", "--fixtures", "fixtures/tiny/eq1.toml"], &repo());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.trim(), "eq1\tD=0: eps>=1/2, D=2: eps>=0");
}
