//! Sparse random functions f_{n,d}: goodness audits, the peeling chain,
//! the low-information protocol built on it, the O(log d) fingerprint
//! protocol, and one-sided discrepancy on tiny matrices.

use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::disj::fingerprint_bits;
use crate::dist::{marginals, Atom, BipartiteDist};
use crate::engine::{index_to_set, set_to_index, Channel, CommProblem, Party, Protocol, Set, Step};
use crate::error::{invalid, CoreError, Result};
use crate::info::{substate_truncate, Truncation};
use crate::matrix::{DenseMatrix, SparseMatrix};

const TAG_SPARSE_FP: u64 = 0x5F;
const TAG_LOGD_FP: u64 = 0x5D;

/// Tunable constants of the low-information protocol. The paper's values are
/// in [`SparseConstants::paper`]; the defaults are scaled for n around 12.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseConstants {
    /// Goodness: rectangles with min side ≤ 2^{2n/3} hold ≤ c_good·max side ones.
    pub c_good: f64,
    /// Peeling threshold on 1-entries per row or column.
    pub t: usize,
    /// Marginal threshold 2^{-n/2 - theta·n}.
    pub theta: f64,
    /// Fingerprint length in the final comparison.
    pub fp_bits: u32,
}

impl SparseConstants {
    pub fn paper() -> Self {
        SparseConstants { c_good: 100.0, t: 1000, theta: 0.1, fp_bits: 14 }
    }

    /// Shrink factor t/c_good of the peeling chain on good matrices.
    pub fn shrink_factor(&self) -> f64 {
        self.t as f64 / self.c_good
    }
}

impl Default for SparseConstants {
    fn default() -> Self {
        SparseConstants { c_good: 16.0, t: 80, theta: 0.1, fp_bits: 12 }
    }
}

fn sparse_of(problem: &CommProblem) -> Result<&Arc<SparseMatrix>> {
    problem
        .sparse_matrix()
        .ok_or_else(|| CoreError::UnsupportedRepresentation("expected an explicit sparse matrix".into()))
}

/// Min-side bound ⌊2^{2n/3}⌋ of the goodness definition.
pub fn goodness_bound(n: usize) -> usize {
    (2f64.powf(2.0 * n as f64 / 3.0)).floor() as usize
}

// ---------------------------------------------------------------- goodness

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditMode {
    ExhaustiveTiny,
    Sampled { per_profile: u64, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub rows: Vec<u32>,
    pub cols: Vec<u32>,
    pub ones: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodnessReport {
    pub audited: f64,
    /// Largest ones / (c_good·max side) seen; above 1 is a violation.
    pub max_ratio: f64,
    pub violations: Vec<Rectangle>,
    pub mode: AuditMode,
}

const MAX_WITNESSES: usize = 16;

/// Checks the goodness condition: every rectangle with min side ≤ `bound`
/// holds at most c_good·max{|A|,|B|} ones.
pub fn goodness_audit(problem: &CommProblem, c_good: f64, mode: AuditMode, bound: usize) -> Result<GoodnessReport> {
    let m = sparse_of(problem)?;
    match mode {
        AuditMode::ExhaustiveTiny => {
            if m.n() > 4 {
                return Err(CoreError::UnsupportedSize("exhaustive audits need n ≤ 4".into()));
            }
            Ok(exhaustive_audit(m, c_good, bound))
        }
        AuditMode::Sampled { per_profile, seed } => Ok(sampled_audit(m, c_good, bound, per_profile, seed)),
    }
}

/// For each row set A and each width b, the heaviest B takes the b columns
/// with the most ones inside A, so this covers every rectangle.
fn exhaustive_audit(m: &SparseMatrix, c_good: f64, bound: usize) -> GoodnessReport {
    let side = m.side();
    let mut report = GoodnessReport { audited: 0.0, max_ratio: 0.0, violations: Vec::new(), mode: AuditMode::ExhaustiveTiny };
    for a_mask in 1u32..(1 << side) {
        let a = a_mask.count_ones() as usize;
        let mut counts: Vec<(u64, u32)> = (0..side as u32).map(|c| (0, c)).collect();
        for r in 0..side {
            if a_mask >> r & 1 == 1 {
                for &c in m.row(r) {
                    counts[c as usize].0 += 1;
                }
            }
        }
        counts.sort_by(|p, q| q.0.cmp(&p.0).then(p.1.cmp(&q.1)));
        let mut ones = 0;
        for b in 1..=side {
            ones += counts[b - 1].0;
            if a.min(b) > bound {
                continue;
            }
            report.audited += crate::dist::choose(side as u64, b as u64);
            let ratio = ones as f64 / (c_good * a.max(b) as f64);
            report.max_ratio = report.max_ratio.max(ratio);
            if ratio > 1.0 && report.violations.len() < MAX_WITNESSES {
                report.violations.push(Rectangle {
                    rows: (0..side as u32).filter(|r| a_mask >> r & 1 == 1).collect(),
                    cols: counts[..b].iter().map(|e| e.1).collect(),
                    ones,
                });
            }
        }
    }
    report
}

/// Size profiles are powers of four on each side (plus the full side). Each
/// drawn row set is paired with many random column sets and with the heaviest
/// column set of each profile width.
fn sampled_audit(m: &SparseMatrix, c_good: f64, bound: usize, per_profile: u64, seed: u64) -> GoodnessReport {
    let side = m.side();
    let mut sizes: Vec<usize> = std::iter::successors(Some(1usize), |s| Some(s * 4)).take_while(|&s| s < side).collect();
    sizes.push(side);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GoodnessReport {
        audited: 0.0,
        max_ratio: 0.0,
        violations: Vec::new(),
        mode: AuditMode::Sampled { per_profile, seed },
    };
    let mut counts = vec![0u64; side];
    let note = |report: &mut GoodnessReport, rows: &[u32], cols: &[u32], ones: u64| {
        let ratio = ones as f64 / (c_good * rows.len().max(cols.len()) as f64);
        report.audited += 1.0;
        report.max_ratio = report.max_ratio.max(ratio);
        if ratio > 1.0 && report.violations.len() < MAX_WITNESSES {
            report.violations.push(Rectangle { rows: rows.to_vec(), cols: cols.to_vec(), ones });
        }
    };
    for &a in &sizes {
        for &b in &sizes {
            if a.min(b) > bound {
                continue;
            }
            // Heavier side iterated through its transpose.
            let transpose = a > b;
            let (a, b) = if transpose { (b, a) } else { (a, b) };
            let inner = if b == side { 1 } else { per_profile.clamp(1, 100) };
            let outer = per_profile.div_ceil(per_profile.clamp(1, 100));
            for _ in 0..outer {
                let rows: Vec<u32> = index::sample(&mut rng, side, a).into_iter().map(|r| r as u32).collect();
                counts.iter_mut().for_each(|c| *c = 0);
                for &r in &rows {
                    let line = if transpose { m.col(r as usize) } else { m.row(r as usize) };
                    for &c in line {
                        counts[c as usize] += 1;
                    }
                }
                let total: u64 = counts.iter().sum();
                for _ in 0..inner {
                    let (cols, ones) = if b == side {
                        ((0..side as u32).collect::<Vec<_>>(), total)
                    } else {
                        let cols: Vec<u32> = index::sample(&mut rng, side, b).into_iter().map(|c| c as u32).collect();
                        let ones = cols.iter().map(|&c| counts[c as usize]).sum();
                        (cols, ones)
                    };
                    if transpose {
                        note(&mut report, &cols, &rows, ones);
                    } else {
                        note(&mut report, &rows, &cols, ones);
                    }
                }
                let mut order: Vec<u32> = (0..side as u32).collect();
                order.select_nth_unstable_by(b - 1, |p, q| counts[*q as usize].cmp(&counts[*p as usize]));
                let heavy = &order[..b];
                let ones = heavy.iter().map(|&c| counts[c as usize]).sum();
                if transpose {
                    note(&mut report, heavy, &rows, ones);
                } else {
                    note(&mut report, &rows, heavy, ones);
                }
            }
        }
    }
    report
}

// ---------------------------------------------------------------- peeling

/// Row/column index value for inputs outside the starting rectangle.
pub const OUTSIDE: u32 = 0;
/// Index value for inputs that stay in every set of the chain.
pub const NEVER: u32 = u32::MAX;

/// Nested sets A_0 ⊇ A_1 ⊇ … and B_0 ⊇ B_1 ⊇ …, where A_i keeps the rows of
/// A_{i-1} with at least t ones in B_{i-1}, and symmetrically for B_i.
#[derive(Clone, Debug)]
pub struct PeelChain {
    pub a: Vec<FixedBitSet>,
    pub b: Vec<FixedBitSet>,
    pub t: usize,
    /// i(x): first i with x ∉ A_i.
    pub row_index: Vec<u32>,
    /// j(y): first j with y ∉ B_j.
    pub col_index: Vec<u32>,
}

impl PeelChain {
    /// Number of computed levels after A_0, B_0.
    pub fn len(&self) -> usize {
        self.a.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sizes(&self) -> Vec<(usize, usize)> {
        self.a.iter().zip(&self.b).map(|(a, b)| (a.count_ones(..), b.count_ones(..))).collect()
    }

    /// True when some rows or columns never leave the chain.
    pub fn has_fixed_point(&self) -> bool {
        self.a.last().is_some_and(|s| s.count_ones(..) > 0) || self.b.last().is_some_and(|s| s.count_ones(..) > 0)
    }
}

pub fn peel_chain(problem: &CommProblem, a0: &FixedBitSet, b0: &FixedBitSet, t: usize) -> Result<PeelChain> {
    let m = sparse_of(problem)?;
    if a0.count_ones(..) == 0 || b0.count_ones(..) == 0 {
        return invalid("starting sets must be nonempty");
    }
    Ok(peel(m, a0, b0, t))
}

fn peel(m: &SparseMatrix, a0: &FixedBitSet, b0: &FixedBitSet, t: usize) -> PeelChain {
    let side = m.side();
    let mut a = vec![a0.clone()];
    let mut b = vec![b0.clone()];
    let mut row_index = vec![OUTSIDE; side];
    let mut col_index = vec![OUTSIDE; side];
    loop {
        let (pa, pb) = (a.last().unwrap(), b.last().unwrap());
        let mut na = FixedBitSet::with_capacity(side);
        let mut nb = FixedBitSet::with_capacity(side);
        for x in pa.ones() {
            if m.row(x).iter().filter(|&&c| pb.contains(c as usize)).count() >= t {
                na.insert(x);
            }
        }
        for y in pb.ones() {
            if m.col(y).iter().filter(|&&r| pa.contains(r as usize)).count() >= t {
                nb.insert(y);
            }
        }
        let level = a.len() as u32;
        for x in pa.ones().filter(|&x| !na.contains(x)) {
            row_index[x] = level;
        }
        for y in pb.ones().filter(|&y| !nb.contains(y)) {
            col_index[y] = level;
        }
        let fixed = na == *pa && nb == *pb;
        let empty = na.count_ones(..) == 0 && nb.count_ones(..) == 0;
        if fixed {
            for x in na.ones() {
                row_index[x] = NEVER;
            }
            for y in nb.ones() {
                col_index[y] = NEVER;
            }
            break;
        }
        a.push(na);
        b.push(nb);
        if empty {
            break;
        }
    }
    PeelChain { a, b, t, row_index, col_index }
}

/// A chain step where the shrink bound fails, with the rectangle behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShrinkViolation {
    pub level: usize,
    /// True when B_{level+1} failed against A_level; false for the mirror case.
    pub columns: bool,
    pub before: usize,
    pub after: usize,
    pub rectangle_ones: u64,
    pub rectangle_good: bool,
}

/// Checks |B_{i+1}| ≤ c_good·|A_i|/t and |A_{i+1}| ≤ c_good·|B_i|/t at every
/// level where the rectangle involved has min side ≤ `bound`.
pub fn shrink_check(problem: &CommProblem, chain: &PeelChain, c_good: f64, bound: usize) -> Result<Vec<ShrinkViolation>> {
    let m = sparse_of(problem)?;
    let mut out = Vec::new();
    for i in 0..chain.len() {
        for columns in [true, false] {
            let (fixed, grown) = if columns { (&chain.a[i], &chain.b[i + 1]) } else { (&chain.b[i], &chain.a[i + 1]) };
            let (before, after) = (fixed.count_ones(..), grown.count_ones(..));
            if before.min(after) > bound || after == 0 {
                continue;
            }
            if after as f64 > c_good * before as f64 / chain.t as f64 {
                let ones: u64 = grown
                    .ones()
                    .map(|g| {
                        let line = if columns { m.col(g) } else { m.row(g) };
                        line.iter().filter(|&&v| fixed.contains(v as usize)).count() as u64
                    })
                    .sum();
                out.push(ShrinkViolation {
                    level: i,
                    columns,
                    before,
                    after,
                    rectangle_ones: ones,
                    rectangle_good: ones as f64 <= c_good * before.max(after) as f64,
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------- low-information protocol

/// The low-information protocol for a good sparse matrix.
///
/// Each party announces whether its marginal exceeds 2^{-n/2-θn}; light×light
/// inputs are rejected. Otherwise both parties send their peeling index in
/// the chain of their rectangle, and the party with the larger index sends a
/// fingerprint that the other checks against the ≤ t candidates in its line
/// (ties go to rows, i.e. Bob sends).
#[derive(Clone, Debug)]
pub struct SparseLowInfo {
    matrix: Arc<SparseMatrix>,
    pub constants: SparseConstants,
    pub truncation: Truncation,
    pub heavy_rows: FixedBitSet,
    pub heavy_cols: FixedBitSet,
    /// Chains for rectangles (a, b) = (0,1), (1,0), (1,1), indexed by 2a+b-1.
    pub chains: Vec<Option<PeelChain>>,
    pub index_width: u32,
}

pub fn sparse_low_info_run(problem: &CommProblem, nu: &BipartiteDist, eps: f64, constants: SparseConstants) -> Result<SparseLowInfo> {
    let m = sparse_of(problem)?;
    if nu.n() != m.n() {
        return invalid("distribution and matrix differ in n");
    }
    if !nu.is_enumerable() {
        return Err(CoreError::UnsupportedRepresentation("the low-information protocol needs an enumerable distribution".into()));
    }
    let truncation = substate_truncate(nu, eps / 2.0)?;
    let atoms = truncation.dist.support()?;
    let (ma, mb) = marginals(&atoms);
    let n = m.n();
    let side = m.side();
    let threshold = (-(n as f64 / 2.0 + constants.theta * n as f64)).exp2();
    let heavy = |table: &[(u64, f64)]| {
        let mut s = FixedBitSet::with_capacity(side);
        for &(v, p) in table {
            if p > threshold {
                s.insert(v as usize);
            }
        }
        s
    };
    let (heavy_rows, heavy_cols) = (heavy(&ma), heavy(&mb));
    let complement = |s: &FixedBitSet| {
        let mut c = s.clone();
        c.toggle_range(..);
        c
    };
    let sides = |bit: bool, heavy: &FixedBitSet| if bit { heavy.clone() } else { complement(heavy) };
    let chains = [(false, true), (true, false), (true, true)]
        .iter()
        .map(|&(a, b)| {
            let (a0, b0) = (sides(a, &heavy_rows), sides(b, &heavy_cols));
            (a0.count_ones(..) > 0 && b0.count_ones(..) > 0).then(|| peel(m, &a0, &b0, constants.t))
        })
        .collect::<Vec<_>>();
    let index_width = (n as f64).log2().ceil() as u32;
    let longest = chains.iter().flatten().map(|c| c.len()).max().unwrap_or(0);
    if longest + 1 > 1 << index_width {
        return Err(CoreError::UnsupportedSize(format!("chain of length {longest} does not fit {index_width}-bit indices")));
    }
    Ok(SparseLowInfo { matrix: m.clone(), constants, truncation, heavy_rows, heavy_cols, chains, index_width })
}

impl SparseLowInfo {
    /// Upper bound 2 + 2·⌈log2 n⌉ + fingerprint bits.
    pub fn max_bits(&self) -> u64 {
        2 + 2 * self.index_width as u64 + self.constants.fp_bits as u64
    }

    pub fn chain(&self, a: bool, b: bool) -> Option<&PeelChain> {
        self.chains[2 * a as usize + b as usize - 1].as_ref()
    }

    /// Exact ν-mass of 1-inputs rejected on the light×light rectangle.
    pub fn rejected_one_mass(&self, atoms: &[Atom]) -> f64 {
        atoms
            .iter()
            .filter(|a| !self.heavy_rows.contains(a.x as usize) && !self.heavy_cols.contains(a.y as usize))
            .filter(|a| self.matrix.get(a.x as usize, a.y as usize))
            .map(|a| a.p)
            .sum()
    }

    fn encode(&self, chain: &PeelChain, v: u32) -> u64 {
        if v == NEVER {
            chain.len() as u64
        } else {
            v as u64 - 1
        }
    }
}

impl Protocol for SparseLowInfo {
    fn name(&self) -> String {
        "sparse_low_info".into()
    }

    fn accepts(&self, problem: &CommProblem) -> bool {
        problem.sparse_matrix().is_some_and(|m| Arc::ptr_eq(m, &self.matrix) || m.n() == self.matrix.n())
    }

    fn execute(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<bool> {
        let (xi, yi) = (set_to_index(x) as usize, set_to_index(y) as usize);
        let a = ch.send_bit(Party::Alice, self.heavy_rows.contains(xi))?;
        let b = self.heavy_cols.contains(yi);
        if !a && !b {
            ch.send_bit(Party::Bob, b)?;
            ch.note("sparse:r00");
            return Ok(false);
        }
        let chain = self.chain(a, b).expect("rectangle holds the inputs");
        let mut msg = vec![b];
        let j_code = self.encode(chain, chain.col_index[yi]);
        msg.extend((0..self.index_width).rev().map(|k| j_code >> k & 1 == 1));
        ch.send(Party::Bob, msg)?;
        let i_code = ch.send_fixed(Party::Alice, self.encode(chain, chain.row_index[xi]), self.index_width)?;
        let never = chain.len() as u64;
        let n = self.matrix.n();
        let k = self.constants.fp_bits;
        let fp = |v: usize| fingerprint_bits(&index_to_set(v as u64, n), &ch.coin, TAG_SPARSE_FP, k);
        if i_code == never && j_code == never {
            ch.note("sparse:unpeeled");
            return Ok(false);
        }
        if i_code <= j_code {
            // x left the chain at level i: its row has < t ones in B_{i-1} ∋ y.
            let sent = fp(yi);
            let level = i_code as usize;
            let hit = self.matrix.row(xi).iter().any(|&c| chain.b[level].contains(c as usize) && fp(c as usize) == sent);
            ch.send(Party::Bob, sent)?;
            ch.note("sparse:fingerprint");
            Ok(hit)
        } else {
            let sent = fp(xi);
            let level = j_code as usize;
            let hit = self.matrix.col(yi).iter().any(|&r| chain.a[level].contains(r as usize) && fp(r as usize) == sent);
            ch.send(Party::Alice, sent)?;
            ch.note("sparse:fingerprint");
            Ok(hit)
        }
    }
}

/// Observed error of the low-information protocol split by cause.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    pub trials: u64,
    pub observed: f64,
    /// Errors on inputs the truncation removed (outside the rejected rectangle).
    pub tv_loss: f64,
    /// Exact ν-mass of 1-inputs on the light×light rectangle.
    pub r00_exact: f64,
    pub r00_measured: f64,
    /// False accepts from fingerprint collisions.
    pub fingerprint: f64,
    pub unpeeled: f64,
}

impl ErrorBreakdown {
    pub fn term_sum(&self) -> f64 {
        self.tv_loss + self.r00_exact + self.fingerprint + self.unpeeled
    }

    /// The terms add up to the observed error within 10% plus three standard errors.
    pub fn consistent(&self) -> bool {
        let sigma = (self.observed * (1.0 - self.observed) / self.trials as f64).sqrt();
        (self.term_sum() - self.observed).abs() <= 0.1 * self.observed + 3.0 * sigma + 1e-12
    }
}

/// Runs `trials` inputs from ν, seeded as in `monte_carlo`, and attributes
/// every error to one cause.
pub fn error_breakdown(p: &SparseLowInfo, problem: &CommProblem, nu: &BipartiteDist, trials: u64, seed: u64) -> Result<ErrorBreakdown> {
    let kept: std::collections::HashSet<(u64, u64)> = p.truncation.dist.support()?.iter().map(|a| (a.x, a.y)).collect();
    let atoms = nu.support()?;
    let mut counts = [0u64; 5];
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::engine::trial_seed(seed, t));
        let (x, y) = nu.sample(&mut rng);
        let r = crate::engine::run_protocol(p, problem, &x, &y, rand::RngCore::next_u64(&mut rng))?;
        if !r.error() {
            continue;
        }
        counts[0] += 1;
        let slot = match r.note {
            Some("sparse:r00") => 1,
            _ if !kept.contains(&(set_to_index(&x), set_to_index(&y))) => 2,
            Some("sparse:fingerprint") => 3,
            _ => 4,
        };
        counts[slot] += 1;
    }
    let f = |c: u64| c as f64 / trials as f64;
    Ok(ErrorBreakdown {
        trials,
        observed: f(counts[0]),
        r00_measured: f(counts[1]),
        tv_loss: f(counts[2]),
        fingerprint: f(counts[3]),
        unpeeled: f(counts[4]),
        r00_exact: p.rejected_one_mass(&atoms),
    })
}

// ---------------------------------------------------------------- O(log d) protocol

/// Alice sends ⌈2·log2 d⌉ fingerprint bits of x; Bob accepts iff a 1-entry
/// row of his column has the same fingerprint.
#[derive(Clone, Debug)]
pub struct SparseLogD {
    matrix: Arc<SparseMatrix>,
    pub bits: u32,
}

pub fn sparse_logd_run(problem: &CommProblem, d: f64) -> Result<SparseLogD> {
    let m = sparse_of(problem)?;
    if d < 2.0 {
        return invalid("d must be at least 2");
    }
    Ok(SparseLogD { matrix: m.clone(), bits: (2.0 * d.log2()).ceil() as u32 })
}

impl Protocol for SparseLogD {
    fn name(&self) -> String {
        format!("sparse_logd(k={})", self.bits)
    }

    fn accepts(&self, problem: &CommProblem) -> bool {
        problem.sparse_matrix().is_some_and(|m| Arc::ptr_eq(m, &self.matrix) || m.n() == self.matrix.n())
    }

    fn execute(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<bool> {
        let n = self.matrix.n();
        let sent = fingerprint_bits(x, &ch.coin, TAG_LOGD_FP, self.bits);
        ch.send(Party::Alice, sent.clone())?;
        let col = self.matrix.col(set_to_index(y) as usize);
        Ok(col.iter().any(|&r| fingerprint_bits(&index_to_set(r as u64, n), &ch.coin, TAG_LOGD_FP, self.bits) == sent))
    }
}

// ---------------------------------------------------------------- test distributions

/// A low-information mixture on random row and column sets S, T:
/// (1-λ)·uniform(S)×uniform(T) + λ·uniform over the 1-entries of S×T.
pub fn mixed_hard_dist(m: &SparseMatrix, rows: usize, cols: usize, lambda: f64, seed: u64) -> Result<BipartiteDist> {
    let side = m.side();
    if rows == 0 || cols == 0 || rows > side || cols > side || !(0.0..=1.0).contains(&lambda) {
        return invalid("need 1 ≤ rows, cols ≤ 2^n and λ ∈ [0, 1]");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s: Vec<usize> = index::sample(&mut rng, side, rows).into_vec();
    let t: Vec<usize> = index::sample(&mut rng, side, cols).into_vec();
    let mut in_t = FixedBitSet::with_capacity(side);
    t.iter().for_each(|&c| in_t.insert(c));
    let ones: Vec<(usize, usize)> =
        s.iter().flat_map(|&r| m.row(r).iter().filter(|&&c| in_t.contains(c as usize)).map(move |&c| (r, c as usize))).collect();
    let lambda = if ones.is_empty() { 0.0 } else { lambda };
    let base = (1.0 - lambda) / (rows * cols) as f64;
    let mut atoms = Vec::with_capacity(rows * cols);
    for &r in &s {
        for &c in &t {
            atoms.push(Atom { x: r as u64, y: c as u64, p: base });
        }
    }
    for &(r, c) in &ones {
        atoms.push(Atom { x: r as u64, y: c as u64, p: lambda / ones.len() as f64 });
    }
    BipartiteDist::from_weights(m.n(), atoms)
}

/// Largest λ (by bisection) whose mixture has mutual information ≤ budget.
pub fn mixed_hard_with_budget(m: &SparseMatrix, rows: usize, cols: usize, budget: f64, seed: u64) -> Result<(BipartiteDist, f64)> {
    let info = |lambda: f64| -> Result<(BipartiteDist, f64)> {
        let d = mixed_hard_dist(m, rows, cols, lambda, seed)?;
        let i = crate::info::mutual_information(&d.support()?);
        Ok((d, i))
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut best = info(0.0)?;
    if best.1 > budget {
        return Err(CoreError::HypothesisViolation(format!("information {:.4} exceeds the budget at λ = 0", best.1)));
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let cand = info(mid)?;
        if cand.1 <= budget {
            lo = mid;
            best = cand;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------- discrepancy

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    /// max over rectangles of μ(ones in R) − μ(zeros in R).
    pub value: f64,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// −log2 disc′, the bound before its additive constant.
    pub bound_bits: f64,
    /// Whether μ puts weight 1/2 on the 1-inputs, as the bound requires.
    pub balanced: bool,
}

/// Exact one-sided discrepancy by enumerating all rectangles of a matrix
/// with at most 8 rows and columns; `mu` is row-major.
pub fn one_sided_discrepancy(f: &DenseMatrix, mu: &[f64]) -> Result<Discrepancy> {
    let (r, c) = (f.rows(), f.cols());
    if r > 8 || c > 8 {
        return Err(CoreError::UnsupportedSize(format!("{r}x{c} exceeds 8x8")));
    }
    if mu.len() != r * c || mu.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return invalid("mu must give a non-negative mass per cell");
    }
    let signed: Vec<f64> = (0..r * c).map(|k| if f.get(k / c, k % c) { mu[k] } else { -mu[k] }).collect();
    let mut best = (0.0, 0u32, 0u32);
    for a in 1u32..(1 << r) {
        for b in 1u32..(1 << c) {
            let mut v = 0.0;
            for x in (0..r).filter(|x| a >> x & 1 == 1) {
                for y in (0..c).filter(|y| b >> y & 1 == 1) {
                    v += signed[x * c + y];
                }
            }
            if v > best.0 + 1e-15 {
                best = (v, a, b);
            }
        }
    }
    let ones: f64 = (0..r * c).filter(|&k| f.get(k / c, k % c)).map(|k| mu[k]).sum();
    Ok(Discrepancy {
        value: best.0,
        rows: (0..r).filter(|x| best.1 >> x & 1 == 1).collect(),
        cols: (0..c).filter(|y| best.2 >> y & 1 == 1).collect(),
        bound_bits: -best.0.log2(),
        balanced: (ones - 0.5).abs() < 1e-9,
    })
}

/// Draws uniform inputs (x, y) with f(x, y) = 0.
pub struct ZeroInputs {
    pub matrix: Arc<SparseMatrix>,
}

impl crate::engine::InputSource for ZeroInputs {
    fn n(&self) -> usize {
        self.matrix.n()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (Set, Set) {
        let side = self.matrix.side();
        loop {
            let (x, y) = (rng.gen_range(0..side), rng.gen_range(0..side));
            if !self.matrix.get(x, y) {
                return (index_to_set(x as u64, self.n()), index_to_set(y as u64, self.n()));
            }
        }
    }
}

/// Draws uniform 1-inputs.
pub struct OneInputs {
    pub matrix: Arc<SparseMatrix>,
}

impl crate::engine::InputSource for OneInputs {
    fn n(&self) -> usize {
        self.matrix.n()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (Set, Set) {
        let (x, y) = self.matrix.entry(rng.gen_range(0..self.matrix.ones() as usize));
        (index_to_set(x as u64, self.n()), index_to_set(y as u64, self.n()))
    }
}
