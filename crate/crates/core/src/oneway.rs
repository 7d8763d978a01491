//! One-way protocols under product distributions: VC dimension, ε-nets of
//! rows, the net protocol, the PAC-simulation baseline, and the composition
//! that handles distributions with bounded mutual information.
//!
//! Explicit matrices here are at most 64×64, so rows and columns are both
//! handled as 64-bit masks.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{lookup, marginals, Atom, BipartiteDist};
use crate::engine::{mix, set_to_index, Channel, CommProblem, Party, Protocol, Set, Step};
use crate::error::{invalid, CoreError, Result};
use crate::info::mutual_information;
use crate::matrix::DenseMatrix;

const TAG_PAC: u64 = 0x9A;
const TAG_NET: u64 = 0x9E;

/// Sampling constant in c = ⌈a·VC·(1/ε)·log2(1/ε)⌉.
pub const SAMPLE_CONSTANT: f64 = 4.0;
pub const NET_RETRIES: usize = 16;
/// Constant C in the error shrink ε′ = ε·2^{-⌈C·k/ε⌉}.
pub const SHRINK_CONSTANT: f64 = 9.0;

fn small_matrix(problem: &CommProblem) -> Result<&Arc<DenseMatrix>> {
    let m = problem
        .dense_matrix()
        .ok_or_else(|| CoreError::UnsupportedRepresentation("one-way protocols need an explicit dense matrix".into()))?;
    if m.rows() > 64 || m.cols() > 64 {
        return Err(CoreError::UnsupportedSize(format!("{}x{} exceeds 64x64", m.rows(), m.cols())));
    }
    Ok(m)
}

/// Column c as the mask of rows holding a one there.
fn column_masks(m: &DenseMatrix) -> Vec<u64> {
    (0..m.cols())
        .map(|c| (0..m.rows()).filter(|&r| m.get(r, c)).fold(0u64, |acc, r| acc | 1 << r))
        .collect()
}

fn full(k: usize) -> u64 {
    if k >= 64 {
        u64::MAX
    } else {
        (1u64 << k) - 1
    }
}

// ---------------------------------------------------------------- VC dimension

/// Exact VC dimension of the row set of an explicit matrix.
pub fn vc_dimension(problem: &CommProblem) -> Result<usize> {
    Ok(vc_of_matrix(small_matrix(problem)?))
}

/// Searches for shattered column sets size by size. A set is grown only from
/// shattered sets, tracking the partition of rows by their pattern; a column
/// extends it iff it splits every class.
pub fn vc_of_matrix(m: &DenseMatrix) -> usize {
    assert!(m.rows() <= 64 && m.cols() <= 64);
    let cols = column_masks(m);
    let rows = full(m.rows());
    if m.rows() == 0 {
        return 0;
    }
    let ceiling = (usize::BITS - 1 - m.rows().leading_zeros()) as usize;
    let mut d = 0;
    while d < ceiling && shatters_some(&cols, &[rows], 0, d + 1) {
        d += 1;
    }
    d
}

fn shatters_some(cols: &[u64], classes: &[u64], start: usize, need: usize) -> bool {
    if need == 0 {
        return true;
    }
    for c in start..cols.len() {
        if cols.len() - c < need {
            break;
        }
        let col = cols[c];
        if classes.iter().all(|&k| k & col != 0 && k & !col != 0) {
            let next: Vec<u64> = classes.iter().flat_map(|&k| [k & col, k & !col]).collect();
            if shatters_some(cols, &next, c + 1, need - 1) {
                return true;
            }
        }
    }
    false
}

/// Φ(c, d) = Σ_{i ≤ d} C(c, i), the Sauer bound on distinct row patterns.
pub fn sauer_phi(c: u64, d: u64) -> f64 {
    (0..=d.min(c)).map(|i| crate::dist::choose(c, i)).sum()
}

// ---------------------------------------------------------------- families

/// Concept classes of small VC dimension on 64 points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum VcFamily {
    /// Prefixes of a line: VC 1.
    Thresholds,
    /// Intervals of a line: VC 2.
    Intervals,
    /// Unions of two intervals: VC 4.
    TwoIntervals,
    /// Axis-parallel rectangles on an 8×8 grid: VC 4.
    Rectangles,
}

impl VcFamily {
    pub const ALL: [VcFamily; 4] = [VcFamily::Thresholds, VcFamily::Intervals, VcFamily::TwoIntervals, VcFamily::Rectangles];

    pub fn vc_bound(self) -> usize {
        match self {
            VcFamily::Thresholds => 1,
            VcFamily::Intervals => 2,
            VcFamily::TwoIntervals | VcFamily::Rectangles => 4,
        }
    }

    fn concept(self, rng: &mut ChaCha8Rng) -> u64 {
        let span = |rng: &mut ChaCha8Rng, len: u32| {
            let a = rng.gen_range(0..=len);
            let b = rng.gen_range(0..=len);
            (a.min(b), a.max(b))
        };
        let interval = |(a, b): (u32, u32)| full(b as usize) & !full(a as usize);
        match self {
            VcFamily::Thresholds => full(rng.gen_range(0..=64)),
            VcFamily::Intervals => interval(span(rng, 64)),
            VcFamily::TwoIntervals => interval(span(rng, 64)) | interval(span(rng, 64)),
            VcFamily::Rectangles => {
                let (r0, r1) = span(rng, 8);
                let (c0, c1) = span(rng, 8);
                (0..64).filter(|p| (r0..r1).contains(&(p / 8)) && (c0..c1).contains(&(p % 8))).fold(0, |acc, p| acc | 1 << p)
            }
        }
    }
}

/// A 64×64 matrix whose rows are random members of `family`, with the 64
/// points assigned to columns by a random permutation.
pub fn random_family_matrix(family: VcFamily, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let mut perm: Vec<usize> = (0..64).collect();
    perm.shuffle(rng);
    let rows: Vec<u64> = (0..64).map(|_| family.concept(rng)).collect();
    DenseMatrix::from_fn(64, 64, |r, c| rows[r] >> perm[c] & 1 == 1)
}

/// Random positive weights on `k` points, normalised.
pub fn random_weights(k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 0.05).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

// ---------------------------------------------------------------- nets

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetMethod {
    SampleDedupe,
    GreedyCover,
}

/// Rows chosen so that every row lies within `eps` of one of them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsNet {
    pub net: Vec<usize>,
    pub eps: f64,
    pub method: NetMethod,
    pub log_size: f64,
    /// Index into `net` of the closest net row, per row.
    pub assign: Vec<usize>,
    /// Distance of each row to its assigned net row.
    pub row_error: Vec<f64>,
    pub vc: usize,
    /// Columns sampled (sample_dedupe only).
    pub samples: u64,
    pub attempts: usize,
    /// Set when the net consists of all distinct rows.
    pub exact: bool,
}

impl EpsNet {
    pub fn message_bits(&self) -> u32 {
        (self.net.len() as f64).log2().ceil() as u32
    }

    /// Σ_x μ_A(x)·Pr_y[f(x,y) ≠ f(x′,y)].
    pub fn exact_error(&self, mu_a: &[f64]) -> f64 {
        mu_a.iter().zip(&self.row_error).map(|(p, e)| p * e).sum()
    }
}

/// Number of sampled columns for a given VC dimension and ε.
pub fn sample_count(vc: usize, eps: f64, a: f64) -> u64 {
    let log = (1.0 / eps).log2().max(1.0);
    (a * vc as f64 * log / eps).ceil() as u64
}

fn weighted_distance(rows: &[u64], mu_b: &[f64], a: usize, b: usize) -> f64 {
    let mut diff = rows[a] ^ rows[b];
    let mut d = 0.0;
    while diff != 0 {
        d += mu_b[diff.trailing_zeros() as usize];
        diff &= diff - 1;
    }
    d
}

fn distances(rows: &[u64], mu_b: &[f64]) -> Vec<Vec<f64>> {
    (0..rows.len()).map(|a| (0..rows.len()).map(|b| weighted_distance(rows, mu_b, a, b)).collect()).collect()
}

fn row_masks(m: &DenseMatrix) -> Vec<u64> {
    (0..m.rows()).map(|r| m.row_mask(r)).collect()
}

fn check_weights(w: &[f64], k: usize, side: &str) -> Result<()> {
    if w.len() != k {
        return invalid(format!("{side} distribution has {} entries, matrix has {k}", w.len()));
    }
    if w.iter().any(|&p| p < 0.0 || !p.is_finite()) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return invalid(format!("{side} distribution is not normalised"));
    }
    Ok(())
}

/// Assigns each row to its closest net row, lowest net position on ties.
fn finish(
    net: Vec<usize>,
    dist: &[Vec<f64>],
    eps: f64,
    method: NetMethod,
    vc: usize,
    samples: u64,
    attempts: usize,
    exact: bool,
) -> EpsNet {
    let mut assign = Vec::with_capacity(dist.len());
    let mut row_error = Vec::with_capacity(dist.len());
    for d in dist {
        let (j, e) = net.iter().enumerate().fold((0, f64::INFINITY), |best, (j, &r)| if d[r] < best.1 { (j, d[r]) } else { best });
        assign.push(j);
        row_error.push(e);
    }
    let log_size = (net.len() as f64).log2();
    EpsNet { net, eps, method, log_size, assign, row_error, vc, samples, attempts, exact }
}

/// Builds and exactly validates an ε-net for the rows under the column
/// distribution `mu_b`. `seed` fixes the column samples; attempt j draws its
/// columns from the stream (seed, j), so smaller ε extends the same prefix.
pub fn build_eps_net(problem: &CommProblem, mu_b: &[f64], eps: f64, method: NetMethod, seed: u64) -> Result<EpsNet> {
    let m = small_matrix(problem)?;
    check_weights(mu_b, m.cols(), "column")?;
    if !(eps > 0.0 && eps < 1.0) {
        return invalid("eps must lie in (0, 1)");
    }
    net_for_matrix(m, mu_b, eps, method, seed, SAMPLE_CONSTANT)
}

pub fn net_for_matrix(m: &DenseMatrix, mu_b: &[f64], eps: f64, method: NetMethod, seed: u64, a: f64) -> Result<EpsNet> {
    let rows = row_masks(m);
    let dist = distances(&rows, mu_b);
    let vc = vc_of_matrix(m);
    let tol = 1e-12;
    match method {
        NetMethod::GreedyCover => {
            let covers: Vec<u64> =
                dist.iter().map(|d| d.iter().enumerate().filter(|(_, &v)| v <= eps + tol).fold(0u64, |acc, (u, _)| acc | 1 << u)).collect();
            let mut uncovered = full(rows.len());
            let mut net = Vec::new();
            while uncovered != 0 {
                let best = (0..rows.len()).max_by_key(|&r| ((covers[r] & uncovered).count_ones(), std::cmp::Reverse(r))).unwrap();
                net.push(best);
                uncovered &= !covers[best];
            }
            Ok(finish(net, &dist, eps, method, vc, 0, 1, false))
        }
        NetMethod::SampleDedupe => {
            let c = sample_count(vc, eps, a);
            let cumulative: Vec<f64> = mu_b
                .iter()
                .scan(0.0, |acc, &p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            let mut worst = 0.0;
            for attempt in 0..NET_RETRIES {
                let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, &[TAG_NET, attempt as u64]));
                let columns: Vec<usize> = (0..c).map(|_| draw(&cumulative, &mut rng)).collect();
                let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
                let mut net = Vec::new();
                for (r, &mask) in rows.iter().enumerate() {
                    let key = pattern(mask, &columns);
                    seen.entry(key).or_insert_with(|| {
                        net.push(r);
                        r
                    });
                }
                let built = finish(net, &dist, eps, method, vc, c, attempt + 1, false);
                worst = built.row_error.iter().cloned().fold(0.0, f64::max);
                if worst <= eps + tol {
                    return Ok(built);
                }
            }
            Err(CoreError::NetConstruction {
                attempts: NET_RETRIES,
                detail: format!("{c} samples, worst row distance {worst:.4} > {eps}"),
            })
        }
    }
}

/// One representative per distinct row on the support of `mu_b`.
pub fn exact_net(m: &DenseMatrix, mu_b: &[f64]) -> EpsNet {
    let rows = row_masks(m);
    let dist = distances(&rows, mu_b);
    let support = mu_b.iter().enumerate().filter(|(_, &p)| p > 0.0).fold(0u64, |acc, (c, _)| acc | 1 << c);
    let mut seen: HashMap<u64, usize> = HashMap::new();
    let mut net = Vec::new();
    for (r, &mask) in rows.iter().enumerate() {
        seen.entry(mask & support).or_insert_with(|| {
            net.push(r);
            r
        });
    }
    finish(net, &dist, 0.0, NetMethod::SampleDedupe, vc_of_matrix(m), 0, 1, true)
}

fn pattern(mask: u64, columns: &[usize]) -> Vec<u64> {
    let mut key = vec![0u64; columns.len().div_ceil(64)];
    for (i, &c) in columns.iter().enumerate() {
        key[i / 64] |= (mask >> c & 1) << (i % 64);
    }
    key
}

fn draw(cumulative: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen::<f64>() * cumulative.last().copied().unwrap_or(1.0);
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

// ---------------------------------------------------------------- protocols

/// Alice sends the position of her row's closest net row in ⌈log2 |net|⌉ bits;
/// Bob answers with that row's entry.
#[derive(Clone, Debug)]
pub struct OneWayNet {
    matrix: Arc<DenseMatrix>,
    pub net: EpsNet,
}

impl OneWayNet {
    pub fn new(matrix: Arc<DenseMatrix>, net: EpsNet) -> Self {
        OneWayNet { matrix, net }
    }

    /// Exact error under an arbitrary joint distribution of (row, column) indices.
    pub fn error_under(&self, atoms: &[Atom]) -> f64 {
        atoms
            .iter()
            .filter(|a| {
                let x = self.net.net[self.net.assign[a.x as usize]];
                self.matrix.get(a.x as usize, a.y as usize) != self.matrix.get(x, a.y as usize)
            })
            .map(|a| a.p)
            .sum()
    }
}

fn product_weights(mu: &BipartiteDist, rows: usize, cols: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (a, b) = mu
        .product_marginals()
        .ok_or_else(|| CoreError::UnsupportedRepresentation("one-way net protocols need a product distribution".into()))?;
    let wa: Vec<f64> = (0..rows as u64).map(|x| a.mass_code(x)).collect();
    let wb: Vec<f64> = (0..cols as u64).map(|y| b.mass_code(y)).collect();
    check_weights(&wa, rows, "row")?;
    check_weights(&wb, cols, "column")?;
    Ok((wa, wb))
}

/// Net protocol for a product distribution; the net is fixed by `seed`.
pub fn oneway_net_run(problem: &CommProblem, mu: &BipartiteDist, eps: f64, method: NetMethod, seed: u64) -> Result<OneWayNet> {
    let m = small_matrix(problem)?;
    let (_, wb) = product_weights(mu, m.rows(), m.cols())?;
    let net = build_eps_net(problem, &wb, eps, method, seed)?;
    Ok(OneWayNet::new(m.clone(), net))
}

impl Protocol for OneWayNet {
    fn name(&self) -> String {
        format!("oneway_net(|N|={})", self.net.net.len())
    }

    fn accepts(&self, problem: &CommProblem) -> bool {
        problem.dense_matrix().is_some_and(|m| m.rows() == self.matrix.rows() && m.cols() == self.matrix.cols())
    }

    fn execute(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<bool> {
        let j = self.net.assign[set_to_index(x) as usize];
        let j = ch.send_fixed(Party::Alice, j as u64, self.net.message_bits())? as usize;
        Ok(self.matrix.get(self.net.net[j], set_to_index(y) as usize))
    }
}

/// PAC-simulation baseline: public-coin columns drawn from μ_B, Alice labels
/// them, Bob answers with the lowest-index row consistent with the labels.
#[derive(Clone, Debug)]
pub struct OneWayPac {
    matrix: Arc<DenseMatrix>,
    rows: Vec<u64>,
    cumulative: Vec<f64>,
    mu_b: Vec<f64>,
    pub samples: u64,
    pub vc: usize,
}

pub fn oneway_pac_run(problem: &CommProblem, mu: &BipartiteDist, eps: f64) -> Result<OneWayPac> {
    let m = small_matrix(problem)?;
    if !(eps > 0.0 && eps < 1.0) {
        return invalid("eps must lie in (0, 1)");
    }
    let (_, wb) = product_weights(mu, m.rows(), m.cols())?;
    let vc = vc_of_matrix(m);
    let cumulative = wb
        .iter()
        .scan(0.0, |acc, &p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    Ok(OneWayPac { matrix: m.clone(), rows: row_masks(m), cumulative, mu_b: wb, samples: sample_count(vc, eps, SAMPLE_CONSTANT), vc })
}

impl OneWayPac {
    fn columns(&self, coin: &crate::engine::PublicCoin) -> Vec<usize> {
        let mut c = coin.derive(&[TAG_PAC]);
        (0..self.samples)
            .map(|_| {
                let u = c.unit() * self.cumulative.last().copied().unwrap_or(1.0);
                self.cumulative.partition_point(|&v| v <= u).min(self.cumulative.len() - 1)
            })
            .collect()
    }

    fn hypothesis(&self, columns: &[usize], labels: impl Fn(usize) -> bool) -> usize {
        (0..self.rows.len())
            .find(|&r| columns.iter().enumerate().all(|(i, &c)| (self.rows[r] >> c & 1 == 1) == labels(i)))
            .unwrap_or(0)
    }

    /// Mean over `draws` coin seeds of the exact error Σ_x μ_A(x)·d(x, h(x)).
    pub fn exact_error(&self, mu_a: &[f64], draws: u64, seed: u64) -> f64 {
        let mut total = 0.0;
        for d in 0..draws {
            let columns = self.columns(&crate::engine::PublicCoin::new(mix(seed, &[d])));
            for (x, &p) in mu_a.iter().enumerate() {
                if p > 0.0 {
                    let h = self.hypothesis(&columns, |i| self.rows[x] >> columns[i] & 1 == 1);
                    total += p * weighted_distance(&self.rows, &self.mu_b, x, h);
                }
            }
        }
        total / draws as f64
    }
}

impl Protocol for OneWayPac {
    fn name(&self) -> String {
        format!("oneway_pac(c={})", self.samples)
    }

    fn accepts(&self, problem: &CommProblem) -> bool {
        problem.dense_matrix().is_some_and(|m| m.rows() == self.matrix.rows() && m.cols() == self.matrix.cols())
    }

    fn execute(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<bool> {
        let columns = self.columns(&ch.coin);
        let xr = self.rows[set_to_index(x) as usize];
        let labels: Vec<bool> = columns.iter().map(|&c| xr >> c & 1 == 1).collect();
        ch.send(Party::Alice, labels.clone())?;
        let h = self.hypothesis(&columns, |i| labels[i]);
        Ok(self.matrix.get(h, set_to_index(y) as usize))
    }
}

/// The net protocol run against the product of μ's marginals at the shrunk
/// error ε′ = ε·2^{-⌈C·k/ε⌉}, k = I(X:Y).
#[derive(Clone, Debug)]
pub struct BoundedInfoNet {
    pub protocol: OneWayNet,
    pub information: f64,
    pub eps_prime: f64,
}

pub fn oneway_bounded_info_run(
    problem: &CommProblem,
    mu: &BipartiteDist,
    eps: f64,
    shrink_constant: f64,
    method: NetMethod,
    seed: u64,
) -> Result<BoundedInfoNet> {
    let m = small_matrix(problem)?;
    if !(eps > 0.0 && eps < 1.0) {
        return invalid("eps must lie in (0, 1)");
    }
    let atoms = mu.support()?;
    let k = mutual_information(&atoms);
    let (_, mb) = marginals(&atoms);
    let wb: Vec<f64> = (0..m.cols() as u64).map(|y| lookup(&mb, y)).collect();
    let eps_prime = eps * (-(shrink_constant * k / eps).ceil()).exp2();
    // Below the lightest column any valid net must be exact.
    let lightest = wb.iter().copied().filter(|&p| p > 0.0).fold(f64::INFINITY, f64::min);
    let net = if eps_prime < lightest {
        exact_net(m, &wb)
    } else {
        net_for_matrix(m, &wb, eps_prime, method, seed, SAMPLE_CONSTANT)?
    };
    Ok(BoundedInfoNet { protocol: OneWayNet::new(m.clone(), net), information: k, eps_prime })
}

/// Joint distribution on row/column indices of an n-bit explicit problem.
pub fn index_dist(n: usize, mu_a: &[f64], mu_b: &[f64]) -> Result<BipartiteDist> {
    crate::dist::make_product(
        n,
        crate::dist::Marginal::table(mu_a.iter().enumerate().map(|(i, &p)| (i as u64, p)).collect())?,
        crate::dist::Marginal::table(mu_b.iter().enumerate().map(|(i, &p)| (i as u64, p)).collect())?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_vc_one() {
        let m = DenseMatrix::from_fn(8, 8, |r, c| r == c);
        assert_eq!(vc_of_matrix(&m), 1);
    }

    #[test]
    fn full_cube_is_shattered() {
        for k in 1..=6 {
            let m = DenseMatrix::from_fn(1 << k, 64, |r, c| c < k && r >> c & 1 == 1);
            assert_eq!(vc_of_matrix(&m), k);
        }
    }

    #[test]
    fn constant_matrix_net_has_one_row() {
        let p = CommProblem::dense(6, DenseMatrix::zeros(64, 64)).unwrap();
        let w = vec![1.0 / 64.0; 64];
        for method in [NetMethod::SampleDedupe, NetMethod::GreedyCover] {
            let net = build_eps_net(&p, &w, 0.1, method, 1).unwrap();
            assert_eq!(net.net.len(), 1);
            assert_eq!(net.message_bits(), 0);
        }
    }

    #[test]
    fn sauer_values() {
        assert_eq!(sauer_phi(5, 0), 1.0);
        assert_eq!(sauer_phi(5, 2), 16.0);
        assert_eq!(sauer_phi(3, 5), 8.0);
    }
}
