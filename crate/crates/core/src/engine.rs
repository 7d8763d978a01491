//! Protocol runtime: problems, the public coin, transcripts with exact bit
//! accounting, and the Monte Carlo driver.

use std::sync::Arc;

use fixedbitset::FixedBitSet;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoreError, Result};
use crate::matrix::{DenseMatrix, SparseMatrix};

/// A subset of `[n]`, equivalently an n-bit input string.
pub type Set = FixedBitSet;

/// Default cap on `n` for explicit matrices.
pub const EXPLICIT_CAP: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn other(self) -> Party {
        match self {
            Party::Alice => Party::Bob,
            Party::Bob => Party::Alice,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Matrix {
    Dense(Arc<DenseMatrix>),
    Sparse(Arc<SparseMatrix>),
}

#[derive(Clone, Debug)]
pub enum ProblemKind {
    Disj,
    Eq,
    Explicit(Matrix),
}

/// A Boolean predicate f(x, y) on n-bit inputs.
#[derive(Clone, Debug)]
pub struct CommProblem {
    pub n: usize,
    pub kind: ProblemKind,
}

impl CommProblem {
    pub fn disj(n: usize) -> Self {
        CommProblem { n, kind: ProblemKind::Disj }
    }

    pub fn eq(n: usize) -> Self {
        CommProblem { n, kind: ProblemKind::Eq }
    }

    pub fn dense(n: usize, m: DenseMatrix) -> Result<Self> {
        Self::dense_with_cap(n, m, EXPLICIT_CAP)
    }

    pub fn dense_with_cap(n: usize, m: DenseMatrix, cap: usize) -> Result<Self> {
        if n > cap {
            return Err(CoreError::UnsupportedSize(format!("explicit matrix with n={n} exceeds cap {cap}")));
        }
        if m.rows() != 1 << n || m.cols() != 1 << n {
            return invalid(format!("matrix is {}x{}, expected 2^{n} square", m.rows(), m.cols()));
        }
        Ok(CommProblem { n, kind: ProblemKind::Explicit(Matrix::Dense(Arc::new(m))) })
    }

    pub fn sparse(m: SparseMatrix) -> Result<Self> {
        if m.n() > EXPLICIT_CAP {
            return Err(CoreError::UnsupportedSize(format!("explicit matrix with n={} exceeds cap", m.n())));
        }
        Ok(CommProblem { n: m.n(), kind: ProblemKind::Explicit(Matrix::Sparse(Arc::new(m))) })
    }

    pub fn sparse_matrix(&self) -> Option<&Arc<SparseMatrix>> {
        match &self.kind {
            ProblemKind::Explicit(Matrix::Sparse(m)) => Some(m),
            _ => None,
        }
    }

    pub fn dense_matrix(&self) -> Option<&Arc<DenseMatrix>> {
        match &self.kind {
            ProblemKind::Explicit(Matrix::Dense(m)) => Some(m),
            _ => None,
        }
    }

    pub fn eval(&self, x: &Set, y: &Set) -> bool {
        match &self.kind {
            ProblemKind::Disj => x.is_disjoint(y),
            ProblemKind::Eq => x == y,
            ProblemKind::Explicit(m) => {
                let (r, c) = (set_to_index(x) as usize, set_to_index(y) as usize);
                match m {
                    Matrix::Dense(d) => d.get(r, c),
                    Matrix::Sparse(s) => s.get(r, c),
                }
            }
        }
    }
}

/// Reads a set of at most 64 elements as the integer with those bits set.
pub fn set_to_index(s: &Set) -> u64 {
    s.ones().fold(0u64, |acc, i| acc | (1u64 << i))
}

pub fn index_to_set(v: u64, n: usize) -> Set {
    let mut s = Set::with_capacity(n);
    for i in 0..n.min(64) {
        if (v >> i) & 1 == 1 {
            s.insert(i);
        }
    }
    s
}

pub fn set_from(n: usize, elems: &[usize]) -> Set {
    let mut s = Set::with_capacity(n);
    for &e in elems {
        s.insert(e);
    }
    s
}

#[inline]
pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of a seed together with a sequence of words.
#[inline]
pub fn mix(seed: u64, words: &[u64]) -> u64 {
    let mut h = splitmix(seed);
    for &w in words {
        h = splitmix(h ^ splitmix(w.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

/// Seed of trial `t` under a master seed.
pub fn trial_seed(master: u64, t: u64) -> u64 {
    mix(master, &[t])
}

/// Shared random string. Both parties read the same stream; reads are free.
#[derive(Clone, Debug)]
pub struct PublicCoin {
    seed: u64,
    rng: ChaCha8Rng,
    cursor: u64,
}

impl PublicCoin {
    pub fn new(seed: u64) -> Self {
        PublicCoin { seed, rng: ChaCha8Rng::seed_from_u64(seed), cursor: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Bits consumed from the sequential stream.
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    pub fn bit(&mut self) -> bool {
        self.cursor += 1;
        self.rng.next_u32() & 1 == 1
    }

    pub fn next_u64(&mut self) -> u64 {
        self.cursor += 64;
        self.rng.next_u64()
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn unit(&mut self) -> f64 {
        self.cursor += 53;
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.cursor += 64;
        self.rng.gen_range(0..n)
    }

    /// An independent coin labelled by `label`; lets protocols address the
    /// shared string by position instead of by consumption order.
    pub fn derive(&self, label: &[u64]) -> PublicCoin {
        PublicCoin::new(mix(self.seed, label))
    }

    /// Random-access word of the shared string.
    #[inline]
    pub fn word(&self, label: &[u64]) -> u64 {
        mix(self.seed ^ 0xA5A5_5A5A_C3C3_3C3C, label)
    }
}

/// Elias delta code of `value + 1`.
pub fn encode_uint_self_delimiting(value: u64) -> Vec<bool> {
    let v = value as u128 + 1;
    let l = 127 - v.leading_zeros(); // floor(log2 v)
    let lp1 = (l + 1) as u128;
    let ll = 127 - lp1.leading_zeros();
    let mut out = Vec::with_capacity((l + 2 * ll + 1) as usize);
    out.extend(std::iter::repeat_n(false, ll as usize));
    for b in (0..=ll).rev() {
        out.push((lp1 >> b) & 1 == 1);
    }
    for b in (0..l).rev() {
        out.push((v >> b) & 1 == 1);
    }
    out
}

/// Length of the self-delimiting code of `value` without building it.
pub fn self_delimiting_len(value: u64) -> u64 {
    let v = value as u128 + 1;
    let l = (127 - v.leading_zeros()) as u64;
    let ll = (127 - ((l + 1) as u128).leading_zeros()) as u64;
    l + 2 * ll + 1
}

/// Decodes one codeword from the front of `bits`; returns the value and bits consumed.
pub fn decode_uint_self_delimiting(bits: &[bool]) -> Option<(u64, usize)> {
    let ll = bits.iter().take_while(|b| !**b).count();
    if ll > 7 {
        return None;
    }
    let mut pos = ll;
    let mut lp1: u128 = 0;
    for _ in 0..=ll {
        lp1 = (lp1 << 1) | *bits.get(pos)? as u128;
        pos += 1;
    }
    let l = lp1 as usize - 1;
    if l > 64 {
        return None;
    }
    let mut v: u128 = 1;
    for _ in 0..l {
        v = (v << 1) | *bits.get(pos)? as u128;
        pos += 1;
    }
    let value = v - 1;
    (value <= u64::MAX as u128).then_some((value as u64, pos))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub from: Party,
    pub len: u64,
    /// Materialised content; empty for charged (cost-model) messages.
    pub payload: Vec<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Transcript {
    pub messages: Vec<Message>,
}

impl Transcript {
    pub fn total_bits(&self) -> u64 {
        self.messages.iter().map(|m| m.len).sum()
    }

    /// Sender alternations plus one.
    pub fn rounds(&self) -> u32 {
        let mut rounds = 1;
        for w in self.messages.windows(2) {
            if w[0].from != w[1].from {
                rounds += 1;
            }
        }
        rounds
    }
}

/// Why a protocol stopped before producing an output.
#[derive(Debug, Clone, PartialEq)]
pub enum Interrupt {
    /// The hard bit cap was reached.
    Abort,
    Fail(CoreError),
}

impl From<CoreError> for Interrupt {
    fn from(e: CoreError) -> Self {
        Interrupt::Fail(e)
    }
}

pub type Step<T> = std::result::Result<T, Interrupt>;

/// The link between the parties during one run.
pub struct Channel {
    pub coin: PublicCoin,
    transcript: Transcript,
    bits: u64,
    cap: Option<u64>,
    note: Option<&'static str>,
}

impl Channel {
    pub fn new(coin: PublicCoin, cap: Option<u64>) -> Self {
        Channel { coin, transcript: Transcript::default(), bits: 0, cap, note: None }
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    /// Labels the run, e.g. with the branch that produced the output.
    pub fn note(&mut self, tag: &'static str) {
        self.note = Some(tag);
    }

    fn push(&mut self, from: Party, len: u64, payload: Vec<bool>) -> Step<()> {
        if let Some(cap) = self.cap {
            if self.bits + len > cap {
                return Err(Interrupt::Abort);
            }
        }
        self.bits += len;
        self.transcript.messages.push(Message { from, len, payload });
        Ok(())
    }

    pub fn send(&mut self, from: Party, bits: Vec<bool>) -> Step<()> {
        let len = bits.len() as u64;
        self.push(from, len, bits)
    }

    pub fn send_bit(&mut self, from: Party, b: bool) -> Step<bool> {
        self.push(from, 1, vec![b])?;
        Ok(b)
    }

    pub fn send_uint(&mut self, from: Party, v: u64) -> Step<u64> {
        self.send(from, encode_uint_self_delimiting(v))?;
        Ok(v)
    }

    pub fn send_fixed(&mut self, from: Party, v: u64, width: u32) -> Step<u64> {
        let bits = (0..width).rev().map(|b| (v >> b) & 1 == 1).collect();
        self.send(from, bits)?;
        Ok(v)
    }

    /// Charges `len` bits without materialising content.
    pub fn charge(&mut self, from: Party, len: u64) -> Step<()> {
        self.push(from, len, Vec::new())
    }
}

/// A two-party strategy pair. `execute` must let Alice's messages depend only
/// on x, the coin and the transcript so far, and Bob's only on y, the coin and
/// the transcript; the returned value is the common output.
pub trait Protocol: Sync {
    fn name(&self) -> String;

    fn accepts(&self, _problem: &CommProblem) -> bool {
        true
    }

    /// Hard bit cap; exceeding it aborts the run with a coin-flip output.
    fn bit_cap(&self) -> Option<u64> {
        None
    }

    fn execute(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<bool>;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub output: bool,
    pub truth: bool,
    pub bits: u64,
    pub rounds: u32,
    pub aborted: bool,
    pub note: Option<&'static str>,
}

impl RunRecord {
    pub fn error(&self) -> bool {
        self.output != self.truth
    }
}

/// Runs one protocol execution on a fixed input and coin seed.
pub fn run_protocol(protocol: &dyn Protocol, problem: &CommProblem, x: &Set, y: &Set, seed: u64) -> Result<RunRecord> {
    run_protocol_traced(protocol, problem, x, y, seed).map(|(r, _)| r)
}

pub fn run_protocol_traced(
    protocol: &dyn Protocol,
    problem: &CommProblem,
    x: &Set,
    y: &Set,
    seed: u64,
) -> Result<(RunRecord, Transcript)> {
    if !protocol.accepts(problem) {
        return invalid(format!("protocol {} does not accept this problem", protocol.name()));
    }
    if x.ones().any(|i| i >= problem.n) || y.ones().any(|i| i >= problem.n) {
        return invalid("input has elements outside [n]");
    }
    let coin = PublicCoin::new(seed);
    let mut ch = Channel::new(coin, protocol.bit_cap());
    let (output, aborted) = match protocol.execute(x, y, &mut ch) {
        Ok(out) => (out, false),
        Err(Interrupt::Abort) => (PublicCoin::new(seed).derive(&[u64::MAX]).bit(), true),
        Err(Interrupt::Fail(e)) => return Err(e),
    };
    let truth = problem.eval(x, y);
    let record = RunRecord {
        output,
        truth,
        bits: ch.bits,
        rounds: ch.transcript.rounds(),
        aborted,
        note: ch.note,
    };
    Ok((record, ch.transcript))
}

/// Anything that can draw input pairs.
pub trait InputSource: Sync {
    fn n(&self) -> usize;
    fn draw(&self, rng: &mut ChaCha8Rng) -> (Set, Set);
}

/// Aggregated statistics of one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub trials: u64,
    pub errors: u64,
    pub mean_error: f64,
    pub err_ci_lo: f64,
    pub err_ci_hi: f64,
    pub mean_bits: f64,
    pub bits_stderr: f64,
    pub max_bits: u64,
    pub mean_rounds: f64,
    pub max_rounds: u32,
    pub aborts: u64,
    /// Error counts by run note, in first-seen order.
    pub error_notes: Vec<(String, u64)>,
}

/// Wilson score interval at z = 1.96.
pub fn wilson(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.96f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt()) / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Reduces run records in order.
pub fn aggregate(records: &[RunRecord]) -> Cell {
    let trials = records.len() as u64;
    let mut errors = 0;
    let mut sum_bits = 0f64;
    let mut sum_sq = 0f64;
    let mut max_bits = 0;
    let mut sum_rounds = 0f64;
    let mut max_rounds = 0;
    let mut aborts = 0;
    let mut notes: Vec<(String, u64)> = Vec::new();
    for r in records {
        if r.error() {
            errors += 1;
            let tag = r.note.unwrap_or("-");
            match notes.iter_mut().find(|(t, _)| t == tag) {
                Some(e) => e.1 += 1,
                None => notes.push((tag.to_string(), 1)),
            }
        }
        let b = r.bits as f64;
        sum_bits += b;
        sum_sq += b * b;
        max_bits = max_bits.max(r.bits);
        sum_rounds += r.rounds as f64;
        max_rounds = max_rounds.max(r.rounds);
        aborts += r.aborted as u64;
    }
    let n = trials.max(1) as f64;
    let mean_bits = sum_bits / n;
    let var = (sum_sq / n - mean_bits * mean_bits).max(0.0);
    let (lo, hi) = wilson(errors, trials);
    Cell {
        trials,
        errors,
        mean_error: errors as f64 / n,
        err_ci_lo: lo,
        err_ci_hi: hi,
        mean_bits,
        bits_stderr: (var / n).sqrt(),
        max_bits,
        mean_rounds: sum_rounds / n,
        max_rounds,
        aborts,
        error_notes: notes,
    }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| CoreError::InvalidArgument(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs `trials` independent executions. Trial t draws its inputs and coin
/// from a generator seeded by `trial_seed(master_seed, t)`, so the result
/// does not depend on `workers`.
pub fn monte_carlo(
    protocol: &dyn Protocol,
    problem: &CommProblem,
    source: &dyn InputSource,
    trials: u64,
    master_seed: u64,
    workers: Option<usize>,
) -> Result<Cell> {
    if trials == 0 {
        return invalid("trials must be positive");
    }
    if source.n() != problem.n {
        return invalid(format!("distribution has n={}, problem has n={}", source.n(), problem.n));
    }
    let records = with_workers(workers, || {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(master_seed, t));
                let (x, y) = source.draw(&mut rng);
                run_protocol(protocol, problem, &x, &y, rng.next_u64())
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(aggregate(&records))
}

/// Least-squares fit on log-log axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in natural-log units.
    pub residual: f64,
    pub slope_stderr: f64,
}

impl Fit {
    /// 95% normal-approximation interval for the slope.
    pub fn slope_ci(&self) -> (f64, f64) {
        (self.slope - 1.96 * self.slope_stderr, self.slope + 1.96 * self.slope_stderr)
    }
}

pub fn fit_exponent(points: &[(f64, f64)]) -> Result<Fit> {
    if points.len() < 3 {
        return invalid("need at least 3 points");
    }
    if points.iter().any(|&(s, v)| s <= 0.0 || v <= 0.0 || !s.is_finite() || !v.is_finite()) {
        return invalid("scales and statistics must be positive");
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return invalid("scales must be strictly increasing");
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let dof = (k - 2.0).max(1.0);
    Ok(Fit {
        slope,
        intercept,
        residual: (sse / k).sqrt(),
        slope_stderr: (sse / dof / sxx).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(bool);
    impl Protocol for Constant {
        fn name(&self) -> String {
            "constant".into()
        }
        fn execute(&self, _: &Set, _: &Set, _: &mut Channel) -> Step<bool> {
            Ok(self.0)
        }
    }

    #[test]
    fn constant_protocol_is_free() {
        let p = CommProblem::disj(4);
        let r = run_protocol(&Constant(true), &p, &Set::with_capacity(4), &Set::with_capacity(4), 3).unwrap();
        assert_eq!((r.bits, r.rounds, r.truth, r.output), (0, 1, true, true));
    }

    #[test]
    fn delta_code_lengths() {
        assert_eq!(encode_uint_self_delimiting(0), vec![true]);
        assert_eq!(encode_uint_self_delimiting(1000).len(), 16);
        assert!(encode_uint_self_delimiting(1000).len() <= 10 + 2 * 4 + 1);
        for v in [0u64, 1, 2, 7, 255, 1 << 40, u64::MAX] {
            let code = encode_uint_self_delimiting(v);
            assert_eq!(code.len() as u64, self_delimiting_len(v));
            assert_eq!(decode_uint_self_delimiting(&code), Some((v, code.len())));
        }
    }

    #[test]
    fn rounds_count_alternations() {
        let mut ch = Channel::new(PublicCoin::new(1), None);
        ch.send_bit(Party::Alice, true).unwrap();
        ch.send_bit(Party::Alice, false).unwrap();
        ch.send_uint(Party::Bob, 5).unwrap();
        ch.send_bit(Party::Alice, true).unwrap();
        assert_eq!(ch.transcript().rounds(), 3);
        assert_eq!(ch.transcript().total_bits(), ch.bits());
    }

    #[test]
    fn cap_aborts() {
        let mut ch = Channel::new(PublicCoin::new(1), Some(3));
        ch.send_fixed(Party::Alice, 5, 3).unwrap();
        assert_eq!(ch.send_bit(Party::Bob, true), Err(Interrupt::Abort));
    }

    #[test]
    fn exact_power_laws() {
        let f = fit_exponent(&[(64.0, 8.0), (256.0, 16.0), (1024.0, 32.0)]).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12 && f.residual < 1e-12);
        let g = fit_exponent(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).unwrap();
        assert!((g.slope - 1.0).abs() < 1e-12);
        assert!(fit_exponent(&[(1.0, 1.0), (2.0, 0.0), (3.0, 3.0)]).is_err());
    }

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
        assert_eq!(wilson(0, 10).0, 0.0);
    }
}
