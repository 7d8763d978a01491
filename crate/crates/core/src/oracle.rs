//! Exact oracles for tiny instances: distributional communication
//! complexity by exhaustive protocol-tree search, the colouring bound,
//! the information of the structured set-pair distribution, and sampler
//! comparisons.

use std::collections::HashMap;

use num_integer::Integer;
use num_rational::Rational64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dist::{log2_choose, make_razborov, BipartiteDist, RazborovParams, Variant};
use crate::engine::set_to_index;
use crate::error::{invalid, CoreError, Result};
use crate::info::mutual_information;
use crate::matrix::DenseMatrix;

pub const ORACLE_SIDE: usize = 8;

/// Minimal error reachable at each depth on the full rectangle, pruned to
/// strictly decreasing errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoFrontier {
    pub points: Vec<(u32, Rational64)>,
}

impl ParetoFrontier {
    /// Smallest depth whose error is at most `eps`.
    pub fn depth_for(&self, eps: Rational64) -> u32 {
        self.points.iter().find(|p| p.1 <= eps).map(|p| p.0).expect("frontier ends at error 0")
    }
}

/// Converts masses to integer weights over a common denominator.
fn integer_weights(mu: &[Rational64]) -> Result<(Vec<i128>, i128)> {
    let mut den: i128 = 1;
    for q in mu {
        if *q.numer() < 0 {
            return invalid("negative mass");
        }
        den = den.lcm(&(*q.denom() as i128));
        if den > 1 << 60 {
            return invalid("common denominator too large");
        }
    }
    let w: Vec<i128> = mu.iter().map(|q| *q.numer() as i128 * (den / *q.denom() as i128)).collect();
    if w.iter().sum::<i128>() != den {
        return invalid("masses do not sum to 1");
    }
    Ok((w, den))
}

pub fn pareto_frontier(f: &DenseMatrix, mu: &[Rational64]) -> Result<ParetoFrontier> {
    let (rows, cols) = (f.rows(), f.cols());
    if rows > ORACLE_SIDE || cols > ORACLE_SIDE || rows == 0 || cols == 0 {
        return Err(CoreError::UnsupportedSize(format!("{rows}x{cols} exceeds the 8x8 oracle limit")));
    }
    if mu.len() != rows * cols {
        return invalid("one mass per matrix cell required");
    }
    let (w, den) = integer_weights(mu)?;
    let (nr, nc) = (1usize << rows, 1usize << cols);
    // Weight of ones / zeros of every row restricted to every column mask.
    let mut row_ones = vec![0i128; rows * nc];
    let mut row_zeros = vec![0i128; rows * nc];
    for r in 0..rows {
        for cm in 1..nc {
            let c = cm.trailing_zeros() as usize;
            let prev = cm & (cm - 1);
            let (o, z) = if f.get(r, c) { (w[r * cols + c], 0) } else { (0, w[r * cols + c]) };
            row_ones[r * nc + cm] = row_ones[r * nc + prev] + o;
            row_zeros[r * nc + cm] = row_zeros[r * nc + prev] + z;
        }
    }
    let mut cur = vec![0i128; nr * nc];
    for rm in 1..nr {
        for cm in 1..nc {
            let ones: i128 = (0..rows).filter(|i| rm >> i & 1 == 1).map(|i| row_ones[i * nc + cm]).sum();
            let zeros: i128 = (0..rows).filter(|i| rm >> i & 1 == 1).map(|i| row_zeros[i * nc + cm]).sum();
            cur[rm * nc + cm] = ones.min(zeros);
        }
    }
    let full = (nr - 1) * nc + (nc - 1);
    let mut points = vec![(0u32, Rational64::new(cur[full] as i64, den as i64))];
    let mut depth = 0u32;
    let mut last = cur[full];
    while last > 0 {
        depth += 1;
        let mut next = cur.clone();
        for rm in 1..nr {
            for cm in 1..nc {
                let mut best = cur[rm * nc + cm];
                // Row splits; the part holding the lowest row is enumerated once.
                let low = rm & rm.wrapping_neg();
                let rest = rm & !low;
                let mut sub = rest;
                loop {
                    let a = sub | low;
                    if a != rm {
                        let v = cur[a * nc + cm] + cur[(rm & !a) * nc + cm];
                        best = best.min(v);
                    }
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & rest;
                }
                let low = cm & cm.wrapping_neg();
                let rest = cm & !low;
                let mut sub = rest;
                loop {
                    let a = sub | low;
                    if a != cm {
                        let v = cur[rm * nc + a] + cur[rm * nc + (cm & !a)];
                        best = best.min(v);
                    }
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & rest;
                }
                next[rm * nc + cm] = best;
            }
        }
        cur = next;
        if cur[full] < last {
            last = cur[full];
            points.push((depth, Rational64::new(last as i64, den as i64)));
        }
    }
    Ok(ParetoFrontier { points })
}

/// Minimal worst-case depth of a deterministic protocol tree whose error
/// under `mu` is at most `eps`.
pub fn exact_dcc(f: &DenseMatrix, mu: &[Rational64], eps: Rational64) -> Result<u32> {
    Ok(pareto_frontier(f, mu)?.depth_for(eps))
}

pub fn uniform_masses(rows: usize, cols: usize) -> Vec<Rational64> {
    vec![Rational64::new(1, (rows * cols) as i64); rows * cols]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColouringReport {
    pub heavy_rows: usize,
    pub bound: Rational64,
    pub holds: bool,
}

/// Counts rows with more than r·|Y| ones and compares with (p−r)/(1−r)·|X|.
pub fn colouring_check(colouring: &DenseMatrix, r: Rational64) -> Result<ColouringReport> {
    let (xs, ys) = (colouring.rows() as i64, colouring.cols() as i64);
    if xs == 0 || ys == 0 {
        return invalid("empty colouring");
    }
    let ones = colouring.count_ones() as i64;
    let p = Rational64::new(ones, xs * ys);
    let ry = r * Rational64::from_integer(ys);
    if !ry.is_integer() || r <= Rational64::from_integer(0) || r >= p {
        return Err(CoreError::HypothesisViolation(format!("need r·|Y| integral and 0 < r < p = {p}")));
    }
    let threshold = ry.to_integer() as usize;
    let heavy_rows = (0..colouring.rows())
        .filter(|&x| (0..colouring.cols()).filter(|&y| colouring.get(x, y)).count() > threshold)
        .count();
    let one = Rational64::from_integer(1);
    let bound = (p - r) / (one - r) * Rational64::from_integer(xs);
    Ok(ColouringReport { heavy_rows, holds: Rational64::from_integer(heavy_rows as i64) >= bound, bound })
}

/// Random colouring with an admissible r drawn for it.
pub fn random_admissible_colouring(rng: &mut impl Rng) -> (DenseMatrix, Rational64) {
    loop {
        let (xs, ys) = (rng.gen_range(1..=24), rng.gen_range(2..=24));
        let density: f64 = rng.gen();
        let skew: f64 = rng.gen::<f64>() * 2.0;
        let row_bias: Vec<f64> = (0..xs).map(|_| rng.gen::<f64>().powf(skew)).collect();
        let cells: Vec<bool> = (0..xs * ys).map(|i| rng.gen::<f64>() < density * row_bias[i / ys] * 1.5).collect();
        let m = DenseMatrix::from_fn(xs, ys, |x, y| cells[x * ys + y]);
        let ones = m.count_ones() as i64;
        let p = Rational64::new(ones, (xs * ys) as i64);
        let candidates: Vec<i64> = (1..ys as i64).filter(|&k| Rational64::new(k, ys as i64) < p).collect();
        if candidates.is_empty() {
            continue;
        }
        let k = candidates[rng.gen_range(0..candidates.len())];
        return (m, Rational64::new(k, ys as i64));
    }
}

/// Extremal colouring: `heavy` full rows and every other row at exactly
/// r·|Y| ones.
pub fn extremal_colouring(xs: usize, ys: usize, heavy: usize, r_count: usize) -> DenseMatrix {
    DenseMatrix::from_fn(xs, ys, |x, y| x < heavy || y < r_count)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum InfoMethod {
    Enumeration,
    Orbits,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RazborovInfo {
    pub m: usize,
    pub i_exact: f64,
    pub closed_form: f64,
    pub within_budget: bool,
    pub method: InfoMethod,
}

/// Closed form of I(X:Y) for the 3/4 disjoint, 1/4 single-intersection
/// mixture on m-subsets of [n]: log C(n,m) − H(X|Y).
pub fn razborov_closed_form(n: usize, m: usize) -> f64 {
    let (n, m) = (n as u64, m as u64);
    let h = -(0.25f64 * 0.25f64.log2() + 0.75 * 0.75f64.log2());
    let cond = h + 0.75 * log2_choose(n - m, m) + 0.25 * ((m as f64).log2() + log2_choose(n - m, m - 1));
    log2_choose(n, m) - cond
}

/// Information of μ by summation over the support when it is enumerable,
/// otherwise by summation over the two intersection-size orbits.
pub fn razborov_info_exact(n: usize, k: f64) -> Result<RazborovInfo> {
    let params = RazborovParams::new(n, k)?;
    let dist = make_razborov(params, Variant::Mu)?;
    let closed_form = razborov_closed_form(n, params.m);
    let (i_exact, method) = if dist.is_enumerable() {
        (mutual_information(&dist.support()?), InfoMethod::Enumeration)
    } else {
        // Both marginals are uniform on m-subsets, and the mass of a pair
        // depends only on whether the sets meet.
        let lc = log2_choose(n as u64, params.m as u64);
        let (d, t) = (params.disjoint_pairs().log2(), params.touching_pairs().log2());
        let i = 0.75 * (0.75f64.log2() - d + 2.0 * lc) + 0.25 * (0.25f64.log2() - t + 2.0 * lc);
        (i, InfoMethod::Orbits)
    };
    Ok(RazborovInfo { m: params.m, i_exact, closed_form, within_budget: i_exact <= k, method })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Equivalence {
    /// Largest pointwise mass difference, when both masses are exact.
    pub max_abs_diff: Option<f64>,
    pub p_value: Option<f64>,
    pub points: u64,
}

/// Compares two distributions exactly when both are enumerable, otherwise
/// by a two-sample chi-square test on `samples` draws from each.
pub fn sampler_equivalence(a: &BipartiteDist, b: &BipartiteDist, samples: u64, seed: u64) -> Result<Equivalence> {
    if a.n() != b.n() {
        return invalid("distributions over different spaces");
    }
    if a.is_enumerable() && b.is_enumerable() {
        let mut diff = 0.0f64;
        let mut points = 0;
        for (p, q) in [(a, b), (b, a)] {
            for atom in p.support()? {
                diff = diff.max((atom.p - q.mass_code(atom.x, atom.y)).abs());
                points += 1;
            }
        }
        return Ok(Equivalence { max_abs_diff: Some(diff), p_value: None, points });
    }
    sampler_chi_square(a, b, samples, seed)
}

pub fn sampler_chi_square(a: &BipartiteDist, b: &BipartiteDist, samples: u64, seed: u64) -> Result<Equivalence> {
    if a.n() != b.n() {
        return invalid("distributions over different spaces");
    }
    if a.n() > 64 {
        return Err(CoreError::UnsupportedSize("sample keys use 64-bit masks".into()));
    }
    let mut counts: HashMap<(u64, u64), (u64, u64)> = HashMap::new();
    for (which, d) in [(0, a), (1, b)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ which);
        for _ in 0..samples {
            let (x, y) = d.sample(&mut rng);
            let e = counts.entry((set_to_index(&x), set_to_index(&y))).or_default();
            if which == 0 {
                e.0 += 1;
            } else {
                e.1 += 1;
            }
        }
    }
    let pairs: Vec<(u64, u64)> = counts.into_values().collect();
    let points = pairs.len() as u64;
    Ok(Equivalence { max_abs_diff: None, p_value: Some(chi_square_two_sample(&pairs)), points })
}

/// Homogeneity test for two equal-size samples; sparse cells are pooled.
pub fn chi_square_two_sample(cells: &[(u64, u64)]) -> f64 {
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut pool = (0.0, 0.0);
    for &(x, y) in cells {
        if x + y < 10 {
            pool.0 += x as f64;
            pool.1 += y as f64;
        } else {
            bins.push((x as f64, y as f64));
        }
    }
    if pool.0 + pool.1 > 0.0 {
        bins.push(pool);
    }
    let stat: f64 = bins.iter().map(|(x, y)| (x - y) * (x - y) / (x + y)).sum();
    chi_square_tail(stat, bins.len().saturating_sub(1))
}

/// Goodness of fit of observed counts against exact probabilities; cells
/// with expected count below 5 are pooled.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut bins = 0usize;
    let mut pool = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        let e = p * total as f64;
        if e < 5.0 {
            pool.0 += c as f64;
            pool.1 += e;
        } else {
            stat += (c as f64 - e).powi(2) / e;
            bins += 1;
        }
    }
    if pool.1 > 0.0 {
        stat += (pool.0 - pool.1).powi(2) / pool.1;
        bins += 1;
    }
    chi_square_tail(stat, bins.saturating_sub(1))
}

fn chi_square_tail(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).map(|d| 1.0 - d.cdf(stat)).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_two_by_two() {
        let eq = DenseMatrix::parse("10/01").unwrap();
        let mu = uniform_masses(2, 2);
        assert_eq!(exact_dcc(&eq, &mu, Rational64::from_integer(0)).unwrap(), 2);
        // One bit splits into two rows, each erring on a quarter.
        assert_eq!(exact_dcc(&eq, &mu, Rational64::new(1, 4)).unwrap(), 2);
        assert_eq!(exact_dcc(&eq, &mu, Rational64::new(1, 2)).unwrap(), 0);
        let f = pareto_frontier(&eq, &mu).unwrap();
        assert_eq!(f.points, vec![(0, Rational64::new(1, 2)), (2, Rational64::from_integer(0))]);
    }

    #[test]
    fn constant_matrix_is_free() {
        let m = DenseMatrix::parse("111/111/111").unwrap();
        assert_eq!(exact_dcc(&m, &uniform_masses(3, 3), Rational64::from_integer(0)).unwrap(), 0);
    }

    #[test]
    fn oversized_matrix_rejected() {
        let m = DenseMatrix::zeros(9, 2);
        assert!(matches!(
            exact_dcc(&m, &uniform_masses(9, 2), Rational64::from_integer(0)),
            Err(CoreError::UnsupportedSize(_))
        ));
    }

    #[test]
    fn all_ones_colouring() {
        let m = DenseMatrix::from_fn(5, 4, |_, _| true);
        let rep = colouring_check(&m, Rational64::new(1, 2)).unwrap();
        assert_eq!(rep.heavy_rows, 5);
        assert_eq!(rep.bound, Rational64::from_integer(5));
        assert!(rep.holds);
    }

    #[test]
    fn extremal_colouring_meets_bound() {
        let (xs, ys, r_count) = (20, 10, 3);
        for heavy in 1..xs {
            let m = extremal_colouring(xs, ys, heavy, r_count);
            let rep = colouring_check(&m, Rational64::new(r_count as i64, ys as i64)).unwrap();
            assert_eq!(rep.heavy_rows, heavy);
            let ceil = rep.bound.ceil().to_integer() as usize;
            assert!(rep.holds && heavy.abs_diff(ceil) <= 1);
        }
    }

    #[test]
    fn closed_form_matches_enumeration_at_15() {
        let r = razborov_info_exact(15, 1.0).unwrap();
        assert_eq!(r.method, InfoMethod::Enumeration);
        assert!((r.i_exact - r.closed_form).abs() < 1e-9);
        assert!(r.within_budget);
    }

    #[test]
    fn self_comparison_is_exact() {
        let d = make_razborov(RazborovParams::with_m(11, 1.0, 2).unwrap(), Variant::Mu).unwrap();
        let e = sampler_equivalence(&d, &d, 0, 0).unwrap();
        assert_eq!(e.max_abs_diff, Some(0.0));
    }
}
