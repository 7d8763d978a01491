//! Tiny explicit instances (at most 8×8) with known oracle values.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use cclab::dist::{make_product, Atom, BipartiteDist, Marginal};
use cclab::engine::index_to_set;
use cclab::DenseMatrix;
use num_rational::Rational64;
use serde::Deserialize;

use crate::error::{usage, CliError, Result};

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpect {
    eps: String,
    dcc: u32,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFixture {
    name: String,
    /// "disj", "eq" or "explicit".
    family: String,
    n: usize,
    matrix: Vec<String>,
    /// "uniform" or row-major masses written as fractions.
    mu: toml::Value,
    #[serde(default)]
    expect: Vec<RawExpect>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Disj,
    Eq,
    Explicit,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: String,
    pub path: PathBuf,
    pub family: Family,
    pub n: usize,
    pub matrix: DenseMatrix,
    pub mu: Vec<Rational64>,
    pub uniform: bool,
    /// (ε, expected exact distributional complexity).
    pub expect: Vec<(Rational64, u32)>,
}

fn fraction(s: &str, what: &str) -> Result<Rational64> {
    Rational64::from_str(s.trim()).map_err(|_| CliError::Usage(format!("{what}: {s:?} is not a fraction")))
}

impl Fixture {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let origin = path.display().to_string();
        let raw: RawFixture = toml::from_str(&text).map_err(|e| CliError::Usage(format!("{origin}: {e}")))?;
        let family = match raw.family.as_str() {
            "disj" => Family::Disj,
            "eq" => Family::Eq,
            "explicit" => Family::Explicit,
            f => return usage(format!("{origin}: field `family`: unknown family {f:?}")),
        };
        let side = 1usize << raw.n;
        let matrix = DenseMatrix::parse(&raw.matrix.join("/"))
            .filter(|m| m.rows() == side && m.cols() == side)
            .ok_or_else(|| CliError::Usage(format!("{origin}: field `matrix`: expected {side} rows of {side} bits")))?;
        let (mu, uniform) = match &raw.mu {
            toml::Value::String(s) if s == "uniform" => (vec![Rational64::new(1, (side * side) as i64); side * side], true),
            toml::Value::Array(items) => {
                let mu = items
                    .iter()
                    .map(|v| match v {
                        toml::Value::String(s) => fraction(s, &format!("{origin}: field `mu`")),
                        toml::Value::Integer(i) => Ok(Rational64::from_integer(*i)),
                        _ => usage(format!("{origin}: field `mu`: masses are fraction strings")),
                    })
                    .collect::<Result<Vec<_>>>()?;
                if mu.len() != side * side || mu.iter().sum::<Rational64>() != Rational64::from_integer(1) {
                    return usage(format!("{origin}: field `mu`: need {} masses summing to 1", side * side));
                }
                (mu, false)
            }
            _ => return usage(format!("{origin}: field `mu`: expected \"uniform\" or a list of fractions")),
        };
        let expect = raw
            .expect
            .iter()
            .map(|e| Ok((fraction(&e.eps, &format!("{origin}: field `expect.eps`"))?, e.dcc)))
            .collect::<Result<Vec<_>>>()?;
        let fx = Fixture { name: raw.name, path: path.to_path_buf(), family, n: raw.n, matrix, mu, uniform, expect };
        fx.check_family().map_err(|e| CliError::Usage(format!("{origin}: {e}")))?;
        Ok(fx)
    }

    fn check_family(&self) -> std::result::Result<(), String> {
        let side = 1u64 << self.n;
        for x in 0..side {
            for y in 0..side {
                let (sx, sy) = (index_to_set(x, self.n), index_to_set(y, self.n));
                let want = match self.family {
                    Family::Disj => sx.is_disjoint(&sy),
                    Family::Eq => x == y,
                    Family::Explicit => continue,
                };
                if self.matrix.get(x as usize, y as usize) != want {
                    return Err(format!("entry ({x},{y}) does not match the {:?} family", self.family));
                }
            }
        }
        Ok(())
    }

    /// The fixture's distribution; uniform fixtures become product distributions.
    pub fn dist(&self) -> Result<BipartiteDist> {
        if self.uniform {
            let half = Marginal::bernoulli(vec![0.5; self.n])?;
            return Ok(make_product(self.n, half.clone(), half)?);
        }
        let side = 1u64 << self.n;
        let atoms: Vec<Atom> = (0..side * side)
            .filter(|&k| *self.mu[k as usize].numer() > 0)
            .map(|k| {
                let q = self.mu[k as usize];
                Atom { x: k / side, y: k % side, p: *q.numer() as f64 / *q.denom() as f64 }
            })
            .collect();
        Ok(BipartiteDist::from_weights(self.n, atoms)?)
    }

    /// Row and column marginals as dense weight vectors.
    pub fn marginal_weights(&self) -> (Vec<f64>, Vec<f64>) {
        let side = 1usize << self.n;
        let mut a = vec![0.0; side];
        let mut b = vec![0.0; side];
        for (k, q) in self.mu.iter().enumerate() {
            let p = *q.numer() as f64 / *q.denom() as f64;
            a[k / side] += p;
            b[k % side] += p;
        }
        (a, b)
    }

    pub fn is_product(&self) -> bool {
        if self.uniform {
            return true;
        }
        let side = 1usize << self.n;
        let row: Vec<Rational64> = (0..side).map(|x| (0..side).map(|y| self.mu[x * side + y]).sum()).collect();
        let col: Vec<Rational64> = (0..side).map(|y| (0..side).map(|x| self.mu[x * side + y]).sum()).collect();
        (0..side * side).all(|k| self.mu[k] == row[k / side] * col[k % side])
    }
}

/// Loads every `*.toml` fixture in a directory, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<Fixture>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Fixture::load(p)).collect()
}

