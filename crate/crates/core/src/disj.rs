//! Classical protocols: fingerprint equality, rejection-sampling
//! transmission, small-set disjointness, and the two-phase disjointness
//! protocols for product and bounded-information distributions.

use std::collections::HashMap;

use crate::dist::{Atom, BipartiteDist, Marginal, Repr};
use crate::engine::{
    index_to_set, self_delimiting_len, set_to_index, Channel, CommProblem, Party, Protocol, PublicCoin,
    Set, Step,
};
use crate::error::{invalid, CoreError, Result};

const TAG_FP: u64 = 0xF1;
const TAG_BUCKET: u64 = 0xB0;
const TAG_MEMBER: u64 = 0xB1;
const TAG_DRAW: u64 = 0xD0;
const TAG_HJMR: u64 = 0x4A;

// ---------------------------------------------------------------- fingerprints

/// k inner products of the set's indicator with public random strings,
/// packed as the XOR of one random word per element.
pub fn fingerprint_bits(set: &Set, coin: &PublicCoin, label: u64, k: u32) -> Vec<bool> {
    let blocks = k.div_ceil(64) as usize;
    let mut acc = vec![0u64; blocks];
    for e in set.ones() {
        for (b, w) in acc.iter_mut().enumerate() {
            *w ^= coin.word(&[TAG_FP, label, e as u64, b as u64]);
        }
    }
    (0..k as usize).map(|i| acc[i / 64] >> (i % 64) & 1 == 1).collect()
}

/// Parity of the inner product of two bit vectors given as masks.
pub fn inner_product_parity(x: u64, r: u64) -> bool {
    (x & r).count_ones() % 2 == 1
}

/// One-way equality test: Alice sends k fingerprint bits, Bob accepts iff
/// they match his own.
#[derive(Clone, Debug)]
pub struct FingerprintEquality {
    pub k: u32,
}

pub fn fingerprint_equality(k: u32) -> Result<FingerprintEquality> {
    if k == 0 {
        return invalid("k must be positive");
    }
    Ok(FingerprintEquality { k })
}

impl Protocol for FingerprintEquality {
    fn name(&self) -> String {
        format!("fingerprint_eq(k={})", self.k)
    }

    fn accepts(&self, problem: &CommProblem) -> bool {
        matches!(problem.kind, crate::engine::ProblemKind::Eq)
    }

    fn execute(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<bool> {
        let fx = fingerprint_bits(x, &ch.coin, 0, self.k);
        ch.send(Party::Alice, fx.clone())?;
        Ok(fx == fingerprint_bits(y, &ch.coin, 0, self.k))
    }
}

// ---------------------------------------------------------------- rejection sampling

/// Outcome of one transmission: the shared sample, the accepted iteration
/// (0-based) and the bits of its self-delimiting encoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Transmission {
    pub sample: usize,
    pub index: u64,
    pub bits: u64,
}

/// Greedy rejection sampler for a target known to the sender against a
/// shared base distribution.
#[derive(Clone, Debug)]
pub struct Hjmr {
    target: Vec<f64>,
    ratio: Vec<f64>,
    base_cum: Vec<f64>,
    sorted_ratio: Vec<f64>,
    prefix_target: Vec<f64>,
    prefix_base: Vec<f64>,
}

const HJMR_MAX_ITER: u64 = 1 << 40;

impl Hjmr {
    pub fn new(target: &[f64], base: &[f64]) -> Result<Self> {
        if target.len() != base.len() || target.is_empty() {
            return invalid("target and base must share a non-empty finite space");
        }
        let (ts, bs): (f64, f64) = (target.iter().sum(), base.iter().sum());
        if (ts - 1.0).abs() > 1e-9 || (bs - 1.0).abs() > 1e-9 || target.iter().chain(base).any(|p| *p < 0.0) {
            return invalid("target and base must be probability vectors");
        }
        if let Some(i) = (0..target.len()).find(|&i| target[i] > 0.0 && base[i] <= 0.0) {
            return invalid(format!("target puts mass on point {i} outside the base support"));
        }
        let ratio: Vec<f64> = target.iter().zip(base).map(|(&t, &b)| if t > 0.0 { t / b } else { 0.0 }).collect();
        let mut order: Vec<usize> = (0..target.len()).filter(|&i| target[i] > 0.0).collect();
        order.sort_by(|&a, &b| ratio[a].total_cmp(&ratio[b]));
        let mut prefix_target = vec![0.0];
        let mut prefix_base = vec![0.0];
        for &i in &order {
            prefix_target.push(prefix_target.last().unwrap() + target[i]);
            prefix_base.push(prefix_base.last().unwrap() + base[i]);
        }
        let mut acc = 0.0;
        let base_cum = base
            .iter()
            .map(|b| {
                acc += b;
                acc
            })
            .collect();
        Ok(Hjmr {
            target: target.to_vec(),
            sorted_ratio: order.iter().map(|&i| ratio[i]).collect(),
            ratio,
            base_cum,
            prefix_target,
            prefix_base,
        })
    }

    /// Target mass already allocated once the level has reached `level`.
    fn allocated(&self, level: f64) -> f64 {
        let j = self.sorted_ratio.partition_point(|&r| r <= level);
        let total_base = *self.prefix_base.last().unwrap();
        self.prefix_target[j] + level * (total_base - self.prefix_base[j])
    }

    fn draw_base(&self, coin: &mut PublicCoin) -> usize {
        let total = *self.base_cum.last().unwrap();
        let u = coin.unit() * total;
        self.base_cum.partition_point(|&c| c <= u).min(self.base_cum.len() - 1)
    }

    /// Runs the shared candidate stream until the sender accepts.
    pub fn run(&self, coin: &mut PublicCoin) -> Result<(usize, u64)> {
        let mut level = 0.0f64;
        for i in 0..HJMR_MAX_ITER {
            let cand = self.draw_base(coin);
            let u = coin.unit();
            let done = self.allocated(level).min(1.0);
            let slack = 1.0 - done;
            let accept = if slack < 1e-15 {
                self.target[cand] > 0.0
            } else {
                let excess = self.ratio[cand] - level;
                excess > 0.0 && u < (excess / slack).min(1.0)
            };
            if accept {
                return Ok((cand, i));
            }
            level += slack;
        }
        Err(CoreError::InvalidArgument("rejection sampler did not terminate".into()))
    }
}

/// Transmits a sample of `target` using the shared base stream.
pub fn hjmr_transmit(target: &[f64], base: &[f64], coin: &mut PublicCoin) -> Result<Transmission> {
    let (sample, index) = Hjmr::new(target, base)?.run(coin)?;
    Ok(Transmission { sample, index, bits: self_delimiting_len(index) })
}

// ---------------------------------------------------------------- small sets

fn width_for(size: usize) -> u32 {
    if size <= 1 {
        0
    } else {
        usize::BITS - (size - 1).leading_zeros()
    }
}

/// Public subsets used for compression keep each element with probability 2^-SUBSET_DENSITY.
const SUBSET_DENSITY: u32 = 3;

/// Order-k exponential-Golomb code.
pub fn exp_golomb(v: u64, k: u32) -> Vec<bool> {
    let w = v as u128 + (1u128 << k);
    let top = 127 - w.leading_zeros();
    let mut out = vec![false; (top - k) as usize];
    out.extend((0..=top).rev().map(|b| (w >> b) & 1 == 1));
    out
}

fn send_exp_golomb(ch: &mut Channel, from: Party, v: u64, k: u32) -> Step<()> {
    ch.send(from, exp_golomb(v, k))
}

/// Small-set disjointness; returns true iff disjoint.
///
/// The speaker alternates, starting with Alice, whose size is sent relative
/// to the public bound. An empty set ends the run as disjoint. Otherwise the
/// speaker hashes its set into public buckets, one element per bucket on
/// average, and per bucket names the first public random subset covering
/// it; the receiver keeps only covered elements. When both announced sizes
/// have stopped moving, the sets are compared by fingerprint first.
pub fn smallset_core(
    a: &Set,
    b: &Set,
    bound: usize,
    eps: f64,
    ch: &mut Channel,
    label: u64,
) -> Step<bool> {
    let base_k = (2.0 / eps).log2().ceil().max(1.0) as u32;
    let mut sets = [a.clone(), b.clone()];
    let mut announced: [Option<usize>; 2] = [None, None];
    let mut fingerprints = 0u32;
    let coin = ch.coin.derive(&[0x55, label]);
    for step in 0u64.. {
        let sp = (step % 2) as usize;
        let speaker = if sp == 0 { Party::Alice } else { Party::Bob };
        let size = sets[sp].count_ones(..);
        // Sets only shrink, so later sizes go out as a decrease; size 0
        // ends the run.
        match announced[sp] {
            None if sp == 0 => send_exp_golomb(ch, speaker, bound.saturating_sub(size) as u64, 0)?,
            None => send_exp_golomb(ch, speaker, size as u64, 0)?,
            Some(previous) => send_exp_golomb(ch, speaker, (previous - size) as u64, 0)?,
        }
        if size == 0 {
            ch.note("smallset:empty");
            return Ok(true);
        }
        if announced[1 - sp] == Some(size) && announced[sp] == Some(size) {
            fingerprints += 1;
            let k = base_k + fingerprints;
            let fp = fingerprint_bits(&sets[sp], &coin, step, k);
            ch.send(speaker, fp.clone())?;
            let matched = fp == fingerprint_bits(&sets[1 - sp], &coin, step, k);
            ch.send_bit(speaker.other(), matched)?;
            if matched {
                ch.note("smallset:fingerprint");
                return Ok(false);
            }
        }
        announced[sp] = Some(size);
        let t = SUBSET_DENSITY;
        // One element per bucket on average keeps the covering search short.
        let buckets = size as u64;
        let bucket = |e: usize| coin.word(&[TAG_BUCKET, step, e as u64]) % buckets;
        let mask = (1u64 << t) - 1;
        let member = |c: u64, j: u64, e: usize| coin.word(&[TAG_MEMBER, step, c, j, e as u64]) & mask == 0;
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); buckets as usize];
        for e in sets[sp].ones() {
            groups[bucket(e) as usize].push(e);
        }
        // The first covering index is geometric with mean about 2^(group size).
        let order = (t as usize * size / buckets as usize).saturating_sub(1) as u32;
        let mut chosen = Vec::with_capacity(groups.len());
        for (c, g) in groups.iter().enumerate() {
            let j = (0u64..).find(|&j| g.iter().all(|&e| member(c as u64, j, e))).unwrap();
            send_exp_golomb(ch, speaker, j, order)?;
            chosen.push(j);
        }
        let other = &sets[1 - sp];
        let mut kept = Set::with_capacity(other.len());
        for e in other.ones() {
            let c = bucket(e);
            if member(c, chosen[c as usize], e) {
                kept.insert(e);
            }
        }
        sets[1 - sp] = kept;
    }
    unreachable!()
}

#[derive(Clone, Debug)]
pub struct SmallSetDisj {
    pub n: usize,
    pub s: usize,
    pub eps: f64,
}

pub fn smallset_disj(n: usize, s: usize, eps: f64) -> Result<SmallSetDisj> {
    if !(eps > 0.0 && eps < 1.0) {
        return invalid("eps must lie in (0,1)");
    }
    Ok(SmallSetDisj { n, s, eps })
}

impl Protocol for SmallSetDisj {
    fn name(&self) -> String {
        format!("smallset(s={},eps={})", self.s, self.eps)
    }

    fn accepts(&self, problem: &CommProblem) -> bool {
        matches!(problem.kind, crate::engine::ProblemKind::Disj) && problem.n == self.n
    }

    fn execute(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<bool> {
        if x.count_ones(..) > self.s || y.count_ones(..) > self.s {
            return Err(CoreError::InvalidArgument(format!("input set larger than s={}", self.s)).into());
        }
        smallset_core(x, y, self.s, self.eps, ch, 0)
    }
}

// ---------------------------------------------------------------- beliefs about one side

/// Public model of one party's input under a product distribution.
#[derive(Clone, Debug)]
pub enum SideModel {
    Iid(f64),
    Independent(Vec<f64>),
    Table(Vec<(u64, f64)>),
}

impl SideModel {
    pub fn from_marginal(m: &Marginal) -> Self {
        match m {
            Marginal::Bernoulli(p) if p.windows(2).all(|w| w[0] == w[1]) => SideModel::Iid(p.first().copied().unwrap_or(0.0)),
            Marginal::Bernoulli(p) => SideModel::Independent(p.clone()),
            Marginal::Table(t) => SideModel::Table(t.clone()),
        }
    }

    /// Law of the set restricted to the universe, given whether its size
    /// there is at least `s`.
    pub fn belief(&self, universe: &[usize], s: usize, big: bool) -> Belief {
        let u = universe.len();
        match self {
            SideModel::Iid(p) => {
                let range: Vec<usize> = if big { (s..=u).collect() } else { (0..s.min(u + 1)).collect() };
                let mut counts: Vec<(usize, f64)> = range.into_iter().map(|c| (c, binomial_pmf(u, c, *p))).collect();
                let total: f64 = counts.iter().map(|c| c.1).sum();
                if total <= 0.0 {
                    return Belief::Empty;
                }
                counts.retain(|c| c.1 > total * 1e-16);
                counts.iter_mut().for_each(|c| c.1 /= total);
                Belief::Counts { universe: universe.to_vec(), cum: cumulative(counts.iter().map(|c| c.1)), counts }
            }
            SideModel::Independent(probs) => {
                let probs: Vec<f64> = universe.iter().map(|&e| probs[e]).collect();
                let tail = count_tail(&probs, s, big);
                if tail[0][0] <= 0.0 {
                    return Belief::Empty;
                }
                Belief::Independent { universe: universe.to_vec(), probs, s, big, tail }
            }
            SideModel::Table(t) => {
                let mask = universe.iter().fold(0u64, |m, &e| m | 1 << e);
                let mut merged: HashMap<u64, f64> = HashMap::new();
                for &(c, p) in t {
                    let r = c & mask;
                    if ((r.count_ones() as usize) >= s) == big {
                        *merged.entry(r).or_default() += p;
                    }
                }
                let mut items: Vec<(u64, f64)> = merged.into_iter().filter(|e| e.1 > 0.0).collect();
                items.sort_by_key(|e| e.0);
                let total: f64 = items.iter().map(|e| e.1).sum();
                if total <= 0.0 {
                    return Belief::Empty;
                }
                items.iter_mut().for_each(|e| e.1 /= total);
                Belief::Table { cum: cumulative(items.iter().map(|e| e.1)), items }
            }
        }
    }
}

fn binomial_pmf(u: usize, c: usize, p: f64) -> f64 {
    if p <= 0.0 {
        return if c == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if c == u { 1.0 } else { 0.0 };
    }
    let ln = crate::dist::log2_choose(u as u64, c as u64) * std::f64::consts::LN_2
        + c as f64 * p.ln()
        + (u - c) as f64 * (1.0 - p).ln();
    ln.exp()
}

fn cumulative(it: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    it.map(|p| {
        acc += p;
        acc
    })
    .collect()
}

fn pick(cum: &[f64], coin: &mut PublicCoin) -> usize {
    let u = coin.unit() * cum.last().copied().unwrap_or(0.0);
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

/// tail[i][c]: probability that the size condition ends up satisfied given
/// count c (capped at s) after the first i elements.
fn count_tail(probs: &[f64], s: usize, big: bool) -> Vec<Vec<f64>> {
    let u = probs.len();
    let mut tail = vec![vec![0.0; s + 1]; u + 1];
    for c in 0..=s {
        tail[u][c] = if (c >= s) == big { 1.0 } else { 0.0 };
    }
    for i in (0..u).rev() {
        for c in 0..=s {
            let up = (c + 1).min(s);
            tail[i][c] = probs[i] * tail[i + 1][up] + (1.0 - probs[i]) * tail[i + 1][c];
        }
    }
    tail
}

/// Conditional law of one side on the current universe.
#[derive(Clone, Debug)]
pub enum Belief {
    Empty,
    Counts { universe: Vec<usize>, counts: Vec<(usize, f64)>, cum: Vec<f64> },
    Independent { universe: Vec<usize>, probs: Vec<f64>, s: usize, big: bool, tail: Vec<Vec<f64>> },
    Table { items: Vec<(u64, f64)>, cum: Vec<f64> },
}

impl Belief {
    /// Probability that a draw misses `own` (a subset of the universe).
    pub fn disjoint_prob(&self, own: &Set) -> f64 {
        match self {
            Belief::Empty => 0.0,
            Belief::Counts { universe, counts, .. } => {
                let u = universe.len();
                let a = universe.iter().filter(|&&e| own.contains(e)).count();
                // miss(c) = C(u-a, c) / C(u, c), built up along the sorted counts.
                let (mut miss, mut at) = (1.0f64, 0usize);
                let mut total = 0.0;
                for &(c, q) in counts {
                    if c + a > u {
                        break;
                    }
                    while at < c {
                        miss *= (u - a - at) as f64 / (u - at) as f64;
                        at += 1;
                    }
                    total += q * miss;
                }
                total
            }
            Belief::Independent { universe, probs, s, big, tail } => {
                let forced: Vec<f64> =
                    universe.iter().zip(probs).map(|(&e, &p)| if own.contains(e) { 0.0 } else { p }).collect();
                let miss: f64 = universe.iter().zip(probs).filter(|(e, _)| own.contains(**e)).map(|(_, p)| 1.0 - p).product();
                miss * count_tail(&forced, *s, *big)[0][0] / tail[0][0]
            }
            Belief::Table { items, .. } => {
                let own = set_to_index(own);
                items.iter().filter(|e| e.0 & own == 0).map(|e| e.1).sum()
            }
        }
    }

    pub fn draw(&self, n: usize, coin: &mut PublicCoin) -> Set {
        let mut out = Set::with_capacity(n);
        match self {
            Belief::Empty => {}
            Belief::Counts { universe, counts, cum } => {
                let c = counts[pick(cum, coin)].0;
                let mut pool = universe.clone();
                for i in 0..c {
                    let j = i + coin.below((pool.len() - i) as u64) as usize;
                    pool.swap(i, j);
                    out.insert(pool[i]);
                }
            }
            Belief::Independent { universe, probs, s, tail, .. } => {
                let mut c = 0;
                for (i, (&e, &p)) in universe.iter().zip(probs).enumerate() {
                    let up = (c + 1).min(*s);
                    let take = p * tail[i + 1][up] / tail[i][c];
                    if coin.unit() < take {
                        out.insert(e);
                        c = up;
                    }
                }
            }
            Belief::Table { items, cum } => out = index_to_set(items[pick(cum, coin)].0, n),
        }
        out
    }
}

/// Index of the first public candidate missing `own`.
fn first_disjoint(belief: &Belief, own: &Set, n: usize, coin: &mut PublicCoin) -> Step<(u64, Set)> {
    for j in 0..HJMR_MAX_ITER {
        let cand = belief.draw(n, coin);
        if cand.is_disjoint(own) {
            return Ok((j, cand));
        }
    }
    Err(CoreError::InvalidArgument("candidate search did not terminate".into()).into())
}

fn restrict(s: &Set, universe: &Set) -> Set {
    let mut r = s.clone();
    r.intersect_with(universe);
    r
}

fn full_universe(n: usize) -> Set {
    let mut u = Set::with_capacity(n);
    u.insert_range(..);
    u
}

/// Per-run state of the universe-shrinking phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseState {
    pub universe: Set,
    /// Alive rows and columns of the support, when the support is tracked.
    pub rectangle: Option<(Vec<bool>, Vec<bool>)>,
    pub draws: usize,
}

// ---------------------------------------------------------------- product distributions

pub const DEFAULT_PRODUCT_CAP: f64 = 6.0;

/// Two-phase protocol for product distributions.
#[derive(Clone, Debug)]
pub struct DisjProduct {
    pub n: usize,
    pub eps: f64,
    pub s: usize,
    pub cap: u64,
    alice: SideModel,
    bob: SideModel,
}

pub fn disj_product(mu: &BipartiteDist, eps: f64) -> Result<DisjProduct> {
    disj_product_with_cap(mu, eps, DEFAULT_PRODUCT_CAP)
}

/// As [`disj_product`] with the abort threshold c₂·√n·log2(1/ε).
pub fn disj_product_with_cap(mu: &BipartiteDist, eps: f64, c2: f64) -> Result<DisjProduct> {
    if !(eps > 0.0 && eps < 1.0) {
        return invalid("eps must lie in (0,1)");
    }
    let Some((a, b)) = mu.product_marginals() else {
        return invalid("disj_product needs a product distribution");
    };
    let n = mu.n();
    if matches!(a, Marginal::Table(_)) && n > 64 {
        return Err(CoreError::UnsupportedSize("table marginals need n ≤ 64".into()));
    }
    let root = (n as f64).sqrt();
    Ok(DisjProduct {
        n,
        eps,
        s: root.ceil().max(1.0) as usize,
        cap: (c2 * root * (1.0 / eps).log2()).ceil().max(1.0) as u64,
        alice: SideModel::from_marginal(a),
        bob: SideModel::from_marginal(b),
    })
}

impl DisjProduct {
    pub fn run(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<(bool, PhaseState)> {
        let n = self.n;
        let mut state = PhaseState { universe: full_universe(n), rectangle: None, draws: 0 };
        // Alice's public size bound for phase 2.
        let mut bound = n;
        while state.draws <= n / self.s {
            let u = &state.universe;
            let (xu, yu) = (restrict(x, u), restrict(y, u));
            let a_big = ch.send_bit(Party::Alice, xu.count_ones(..) >= self.s)?;
            let b_big = ch.send_bit(Party::Bob, yu.count_ones(..) >= self.s)?;
            bound = if a_big { n } else { self.s };
            if !a_big && !b_big {
                break;
            }
            let ulist: Vec<usize> = u.ones().collect();
            let about_a = self.alice.belief(&ulist, self.s, a_big);
            if ch.send_bit(Party::Bob, about_a.disjoint_prob(&yu) < self.eps)? {
                ch.note("product:reject");
                return Ok((false, state));
            }
            let about_b = self.bob.belief(&ulist, self.s, b_big);
            if ch.send_bit(Party::Alice, about_b.disjoint_prob(&xu) < self.eps)? {
                ch.note("product:reject");
                return Ok((false, state));
            }
            let mut coin = ch.coin.derive(&[TAG_DRAW, state.draws as u64]);
            let (sender, (j, drawn)) = if b_big {
                (Party::Alice, first_disjoint(&about_b, &xu, n, &mut coin)?)
            } else {
                (Party::Bob, first_disjoint(&about_a, &yu, n, &mut coin)?)
            };
            ch.send_uint(sender, j)?;
            state.universe.difference_with(&drawn);
            state.draws += 1;
        }
        let u = &state.universe;
        let out = smallset_core(&restrict(x, u), &restrict(y, u), bound.min(u.count_ones(..)), self.eps, ch, 1)?;
        Ok((out, state))
    }
}

impl Protocol for DisjProduct {
    fn name(&self) -> String {
        format!("disj_product(eps={})", self.eps)
    }

    fn accepts(&self, problem: &CommProblem) -> bool {
        matches!(problem.kind, crate::engine::ProblemKind::Disj) && problem.n == self.n
    }

    fn bit_cap(&self) -> Option<u64> {
        Some(self.cap)
    }

    fn execute(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<bool> {
        self.run(x, y, ch).map(|r| r.0)
    }
}

// ---------------------------------------------------------------- bounded information

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RoundsMode {
    Unbounded,
    TwoRound,
    LogStar,
}

/// Support of an enumerable joint indexed by rows and columns.
#[derive(Clone, Debug)]
pub struct SupportIndex {
    rows: Vec<u64>,
    cols: Vec<u64>,
    by_row: Vec<Vec<(u32, f64)>>,
    by_col: Vec<Vec<(u32, f64)>>,
}

impl SupportIndex {
    pub fn new(atoms: &[Atom]) -> Self {
        let mut rows: Vec<u64> = atoms.iter().map(|a| a.x).collect();
        let mut cols: Vec<u64> = atoms.iter().map(|a| a.y).collect();
        rows.sort_unstable();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        let mut by_row = vec![Vec::new(); rows.len()];
        let mut by_col = vec![Vec::new(); cols.len()];
        for a in atoms {
            let r = rows.binary_search(&a.x).unwrap();
            let c = cols.binary_search(&a.y).unwrap();
            by_row[r].push((c as u32, a.p));
            by_col[c].push((r as u32, a.p));
        }
        SupportIndex { rows, cols, by_row, by_col }
    }

    fn side(&self, row_side: bool) -> (&[u64], &[Vec<(u32, f64)>]) {
        if row_side {
            (&self.rows, &self.by_row)
        } else {
            (&self.cols, &self.by_col)
        }
    }
}

/// Draw request for the support backend: the sampler's own code, and which
/// side it holds.
struct SupportDraw {
    p_disjoint: f64,
    target: Vec<f64>,
    base: Vec<f64>,
    codes: Vec<u64>,
}

/// Conditional law of the opponent's side over the alive rectangle, and
/// the sampler's row restricted to sets missing its own.
fn support_draw(idx: &SupportIndex, own: u64, own_is_row: bool, alive_own: &[bool], alive_other: &[bool]) -> SupportDraw {
    let (own_codes, own_lists) = idx.side(own_is_row);
    let (other_codes, other_lists) = idx.side(!own_is_row);
    let mut codes = Vec::new();
    let mut base = Vec::new();
    let mut slot: HashMap<u32, usize> = HashMap::new();
    for (c, list) in other_lists.iter().enumerate() {
        if !alive_other[c] {
            continue;
        }
        let w: f64 = list.iter().filter(|(r, _)| alive_own[*r as usize]).map(|e| e.1).sum();
        if w > 0.0 {
            slot.insert(c as u32, codes.len());
            codes.push(other_codes[c]);
            base.push(w);
        }
    }
    let mut target = vec![0.0; codes.len()];
    let mut row_mass = 0.0;
    if let Ok(r) = own_codes.binary_search(&own) {
        for &(c, p) in &own_lists[r] {
            if let Some(&i) = slot.get(&c) {
                row_mass += p;
                if other_codes[c as usize] & own == 0 {
                    target[i] += p;
                }
            }
        }
    }
    let hit: f64 = target.iter().sum();
    let bt: f64 = base.iter().sum();
    base.iter_mut().for_each(|b| *b /= bt);
    if hit > 0.0 {
        target.iter_mut().for_each(|t| *t /= hit);
    }
    SupportDraw { p_disjoint: if row_mass > 0.0 { hit / row_mass } else { 0.0 }, target, base, codes }
}

#[derive(Clone, Debug)]
enum Backend {
    Product { alice: SideModel, bob: SideModel },
    Support(std::sync::Arc<SupportIndex>),
    /// Fixed-size set pairs below the size threshold: the shrinking phase
    /// never starts.
    Structured,
}

pub const DEFAULT_MARKOV_CAP: f64 = 4.0;

/// Two-phase protocol for distributions with bounded mutual information.
#[derive(Clone, Debug)]
pub struct DisjBoundedInfo {
    pub n: usize,
    pub k: f64,
    pub eps: f64,
    pub s: usize,
    pub mode: RoundsMode,
    pub cap: u64,
    /// Exact information of the input distribution, when known.
    pub information: Option<f64>,
    backend: Backend,
}

impl DisjBoundedInfo {
    /// True when the distribution's information exceeds the budget k.
    pub fn budget_violation(&self) -> bool {
        self.information.is_some_and(|i| i > self.k + 1e-9)
    }
}

pub fn disj_bounded_info(mu: &BipartiteDist, k: f64, eps: f64, mode: RoundsMode) -> Result<DisjBoundedInfo> {
    disj_bounded_info_with_cap(mu, k, eps, mode, DEFAULT_MARKOV_CAP)
}

/// As [`disj_bounded_info`] with the cutoff c·√(n(k+1))/ε².
pub fn disj_bounded_info_with_cap(
    mu: &BipartiteDist,
    k: f64,
    eps: f64,
    mode: RoundsMode,
    c: f64,
) -> Result<DisjBoundedInfo> {
    if !(eps > 0.0 && eps < 1.0) || k < 0.0 {
        return invalid("need eps in (0,1) and k ≥ 0");
    }
    let n = mu.n();
    let scale = (n as f64 * (k + 1.0)).sqrt();
    let s = scale.ceil().max(1.0) as usize;
    let (backend, information) = if let Some((a, b)) = mu.product_marginals() {
        (Backend::Product { alice: SideModel::from_marginal(a), bob: SideModel::from_marginal(b) }, Some(0.0))
    } else if mu.is_enumerable() {
        let atoms = mu.support()?;
        let i = crate::info::mutual_information(&atoms);
        (Backend::Support(std::sync::Arc::new(SupportIndex::new(&atoms))), Some(i))
    } else {
        match mu.repr() {
            Repr::Razborov(p, crate::dist::Variant::Mu) if p.m < s => {
                (Backend::Structured, Some(crate::oracle::razborov_closed_form(p.n, p.m)))
            }
            _ => {
                return Err(CoreError::UnsupportedRepresentation(
                    "bounded-information protocol needs an enumerable, product or small structured distribution".into(),
                ))
            }
        }
    };
    Ok(DisjBoundedInfo {
        n,
        k,
        eps,
        s,
        mode,
        cap: (c * scale / (eps * eps)).ceil() as u64,
        information,
        backend,
    })
}

/// One draw of the shrinking phase: the sender's message and the drawn set.
enum Drawn {
    Reject,
    Sample { index: u64, set: Set },
}

impl DisjBoundedInfo {
    fn alive_init(&self) -> Option<(Vec<bool>, Vec<bool>)> {
        match &self.backend {
            Backend::Support(idx) => Some((vec![true; idx.rows.len()], vec![true; idx.cols.len()])),
            _ => None,
        }
    }

    /// Keeps rows (or columns) whose announced size bit matches.
    fn filter_alive(&self, state: &mut PhaseState, rows: bool, big: bool) {
        if let (Backend::Support(idx), Some((ar, ac))) = (&self.backend, state.rectangle.as_mut()) {
            let (codes, alive) = if rows { (&idx.rows, ar) } else { (&idx.cols, ac) };
            let umask = set_to_index(&state.universe);
            for (i, &c) in codes.iter().enumerate() {
                if alive[i] && (((c & umask).count_ones() as usize) >= self.s) != big {
                    alive[i] = false;
                }
            }
        }
    }

    /// The sampler (holding `own`, also given restricted to the universe)
    /// checks its disjointness probability and draws a set of the
    /// opponent's law missing `own`.
    fn draw(&self, own: &Set, own_u: &Set, alice: bool, state: &PhaseState, ch: &Channel) -> Step<Option<Drawn>> {
        let threshold = self.eps / 2.0;
        let mut coin = ch.coin.derive(&[TAG_HJMR, state.draws as u64]);
        match &self.backend {
            Backend::Product { alice: ma, bob: mb } => {
                let ulist: Vec<usize> = state.universe.ones().collect();
                let belief = if alice { mb } else { ma }.belief(&ulist, self.s, true);
                if matches!(belief, Belief::Empty) {
                    return Ok(None);
                }
                if belief.disjoint_prob(own_u) < threshold {
                    return Ok(Some(Drawn::Reject));
                }
                let (index, set) = first_disjoint(&belief, own_u, self.n, &mut coin)?;
                Ok(Some(Drawn::Sample { index, set }))
            }
            Backend::Support(idx) => {
                let (ar, ac) = state.rectangle.as_ref().expect("support backend tracks the rectangle");
                let (alive_own, alive_other) = if alice { (ar, ac) } else { (ac, ar) };
                let d = support_draw(idx, set_to_index(own), alice, alive_own, alive_other);
                if d.codes.is_empty() {
                    return Ok(None);
                }
                if d.p_disjoint < threshold {
                    return Ok(Some(Drawn::Reject));
                }
                let (j, index) = Hjmr::new(&d.target, &d.base)?.run(&mut coin)?;
                Ok(Some(Drawn::Sample { index, set: index_to_set(d.codes[j], self.n) }))
            }
            Backend::Structured => Ok(None),
        }
    }

    pub fn run(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<(bool, PhaseState)> {
        match self.mode {
            RoundsMode::TwoRound => self.run_two_round(x, y, ch),
            _ => self.run_interactive(x, y, ch),
        }
    }

    fn run_interactive(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<(bool, PhaseState)> {
        let n = self.n;
        let mut state = PhaseState { universe: full_universe(n), rectangle: self.alive_init(), draws: 0 };
        let mut bound = n;
        while state.draws <= n / self.s {
            let (xu, yu) = (restrict(x, &state.universe), restrict(y, &state.universe));
            let a_big = ch.send_bit(Party::Alice, xu.count_ones(..) >= self.s)?;
            let b_big = ch.send_bit(Party::Bob, yu.count_ones(..) >= self.s)?;
            self.filter_alive(&mut state, true, a_big);
            self.filter_alive(&mut state, false, b_big);
            bound = if a_big { n } else { self.s };
            if !a_big && !b_big {
                break;
            }
            let alice = if a_big && b_big { !(self.mode == RoundsMode::LogStar && state.draws % 2 == 1) } else { b_big };
            let (own, own_u, party) = if alice { (x, &xu, Party::Alice) } else { (y, &yu, Party::Bob) };
            match self.draw(own, own_u, alice, &state, ch)? {
                None => {
                    ch.note("bounded:fallback");
                    break;
                }
                Some(Drawn::Reject) => {
                    ch.send_bit(party, true)?;
                    ch.note("bounded:reject");
                    return Ok((false, state));
                }
                Some(Drawn::Sample { index, set }) => {
                    ch.send_bit(party, false)?;
                    ch.send_uint(party, index)?;
                    state.universe.difference_with(&set);
                    state.draws += 1;
                }
            }
        }
        let u = &state.universe;
        let out = smallset_core(&restrict(x, u), &restrict(y, u), bound.min(u.count_ones(..)), self.eps / 2.0, ch, 2)?;
        Ok((out, state))
    }

    /// Alice draws every sample assuming Bob's set stays large; Bob answers
    /// with the first universe on which his set is small, and that set.
    fn run_two_round(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<(bool, PhaseState)> {
        let n = self.n;
        let mut state = PhaseState { universe: full_universe(n), rectangle: self.alive_init(), draws: 0 };
        let mut universes = vec![state.universe.clone()];
        let mut indices = Vec::new();
        let mut rejected = false;
        while state.draws <= n / self.s && state.universe.count_ones(..) >= self.s {
            self.filter_alive(&mut state, false, true);
            let xu = restrict(x, &state.universe);
            match self.draw(x, &xu, true, &state, ch)? {
                None => break,
                Some(Drawn::Reject) => {
                    rejected = true;
                    break;
                }
                Some(Drawn::Sample { index, set }) => {
                    indices.push(index);
                    state.universe.difference_with(&set);
                    state.draws += 1;
                    universes.push(state.universe.clone());
                }
            }
        }
        ch.send_uint(Party::Alice, indices.len() as u64)?;
        for &i in &indices {
            ch.send_uint(Party::Alice, i)?;
        }
        ch.send_bit(Party::Alice, rejected)?;
        let decisive = universes.iter().position(|u| restrict(y, u).count_ones(..) < self.s);
        if decisive.is_none() && rejected {
            ch.send_bit(Party::Bob, false)?;
            ch.note("two_round:reject");
            return Ok((false, state));
        }
        let i = decisive.unwrap_or(universes.len() - 1);
        let yu = restrict(y, &universes[i]);
        ch.send_bit(Party::Bob, true)?;
        ch.send_uint(Party::Bob, i as u64)?;
        ch.send_uint(Party::Bob, yu.count_ones(..) as u64)?;
        let width = width_for(n);
        for e in yu.ones() {
            ch.send_fixed(Party::Bob, e as u64, width)?;
        }
        state.universe = universes[i].clone();
        ch.note("two_round:set");
        Ok((restrict(x, &state.universe).is_disjoint(&yu), state))
    }
}

impl Protocol for DisjBoundedInfo {
    fn name(&self) -> String {
        format!("disj_bounded_info(k={},eps={},{:?})", self.k, self.eps, self.mode)
    }

    fn accepts(&self, problem: &CommProblem) -> bool {
        matches!(problem.kind, crate::engine::ProblemKind::Disj) && problem.n == self.n
    }

    fn bit_cap(&self) -> Option<u64> {
        Some(self.cap)
    }

    fn execute(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<bool> {
        self.run(x, y, ch).map(|r| r.0)
    }
}

// ---------------------------------------------------------------- live transcripts

/// Labels every support atom by the transcript (optionally its first `cut`
/// messages) the protocol produces on it under the coin `seed`.
pub fn transcript_labels(
    protocol: &dyn Protocol,
    problem: &CommProblem,
    atoms: &[Atom],
    seed: u64,
    cut: Option<usize>,
) -> Result<Vec<u64>> {
    let mut ids: HashMap<Vec<(bool, Vec<bool>)>, u64> = HashMap::new();
    let mut labels = Vec::with_capacity(atoms.len());
    for a in atoms {
        let (x, y) = (index_to_set(a.x, problem.n), index_to_set(a.y, problem.n));
        let (_, t) = crate::engine::run_protocol_traced(protocol, problem, &x, &y, seed)?;
        let take = cut.unwrap_or(usize::MAX).min(t.messages.len());
        let key: Vec<(bool, Vec<bool>)> =
            t.messages[..take].iter().map(|m| (m.from == Party::Alice, m.payload.clone())).collect();
        let next = ids.len() as u64;
        labels.push(*ids.entry(key).or_insert(next));
    }
    Ok(labels)
}

/// Checks I(X:Y | transcript) ≤ I(X:Y) for the partition a protocol
/// induces under each coin seed.
pub fn live_information_check(
    protocol: &dyn Protocol,
    problem: &CommProblem,
    mu: &BipartiteDist,
    seeds: &[u64],
    cut: Option<usize>,
) -> Result<Vec<crate::info::LemmaOutcome>> {
    use crate::info::{lemma_verifier, LemmaCase, LemmaInstance};
    let atoms = mu.support()?;
    seeds
        .iter()
        .map(|&seed| {
            let labels = transcript_labels(protocol, problem, &atoms, seed, cut)?;
            let inst = LemmaInstance::Partition { atoms: atoms.clone(), coins: vec![(1.0, labels)] };
            lemma_verifier(LemmaCase::PartitionMonotone, &inst)
        })
        .collect()
}
