//! Query-cost model of the block-search DISJ protocol for bounded-information
//! distributions.
//!
//! Grover search is an oracle with two-sided error and a charged cost; no
//! quantum state is simulated. Exact position statistics come from a
//! precomputed table over the support, or from closed forms for the
//! structured hard distribution.
//!
//! Positions are 0-based: E_i is the event that x and y are disjoint on the
//! positions before i, and a prefix of length i is the input masked to them.

use std::collections::HashMap;
use std::sync::Arc;

use crate::dist::{Atom, BipartiteDist, Repr, Variant};
use crate::engine::{set_to_index, Channel, CommProblem, Party, Protocol, Set, Step};
use crate::error::{invalid, CoreError, Result};
use crate::info::mutual_information;

const TAG_SEARCH: u64 = 0x6E;

fn low_mask(i: usize) -> u64 {
    if i >= 64 {
        u64::MAX
    } else {
        (1u64 << i) - 1
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Masses under one conditioning context at one position.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Tally {
    /// Mass of the context.
    pub tot: f64,
    /// Mass of the context and E_i.
    pub e: f64,
    pub x1: f64,
    pub y1: f64,
    pub both: f64,
}

impl Tally {
    fn add(&mut self, a: &Atom, i: usize, in_e: bool) {
        self.tot += a.p;
        if in_e {
            let (xi, yi) = (a.x >> i & 1 == 1, a.y >> i & 1 == 1);
            self.e += a.p;
            if xi {
                self.x1 += a.p;
            }
            if yi {
                self.y1 += a.p;
            }
            if xi && yi {
                self.both += a.p;
            }
        }
    }

    /// Conditional probabilities; None when E_i has no mass in the context.
    /// Conditionals on a null event are reported as 0.
    pub fn local(&self) -> Option<Local> {
        (self.e > 0.0).then(|| Local {
            s: ratio(self.e, self.tot),
            p: self.x1 / self.e,
            q: self.y1 / self.e,
            p_prime: ratio(self.both, self.y1),
            q_prime: ratio(self.both, self.x1),
            r: self.both / self.e,
        })
    }
}

/// p = Pr[X_i=1 | E_i, ctx], q = Pr[Y_i=1 | E_i, ctx], primes additionally
/// condition on the opponent's coordinate being 1, r = Pr[X_i=Y_i=1 | E_i,
/// ctx] and s = Pr[E_i | ctx].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Local {
    pub s: f64,
    pub p: f64,
    pub q: f64,
    pub p_prime: f64,
    pub q_prime: f64,
    pub r: f64,
}

impl Local {
    /// max(|r − p·q′|, |r − p′·q|).
    pub fn identity_gap(&self) -> f64 {
        (self.r - self.p * self.q_prime).abs().max((self.r - self.p_prime * self.q).abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Context {
    Unconditioned,
    AliceInput(u64),
    BobInput(u64),
    /// Both inputs, each seen through its prefix before the position.
    Prefixes { x: u64, y: u64 },
    AlicePrefix(u64),
    BobPrefix(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositionStats {
    pub context: Context,
    pub rows: Vec<Option<Local>>,
}

impl PositionStats {
    /// Largest deviation from s_{i+1} = s_i·(1 − r_i) over consecutive
    /// defined rows; only meaningful for position-independent contexts.
    pub fn s_recursion_gap(&self) -> f64 {
        self.rows
            .windows(2)
            .filter_map(|w| match (w[0], w[1]) {
                (Some(a), Some(b)) => Some((b.s - a.s * (1.0 - a.r)).abs()),
                (Some(a), None) => Some((a.s * (1.0 - a.r)).abs()),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    pub fn identity_gap(&self) -> f64 {
        self.rows.iter().flatten().map(Local::identity_gap).fold(0.0, f64::max)
    }
}

/// Exact position statistics of an enumerable distribution.
#[derive(Clone, Debug)]
pub struct PositionTable {
    pub n: usize,
    atoms: Arc<Vec<Atom>>,
    total: Vec<Tally>,
    by_x: HashMap<u64, Vec<Tally>>,
    by_y: HashMap<u64, Vec<Tally>>,
    by_xp: HashMap<(usize, u64), Tally>,
    by_yp: HashMap<(usize, u64), Tally>,
}

fn first_intersection(a: &Atom, n: usize) -> usize {
    let both = a.x & a.y;
    if both == 0 {
        n
    } else {
        both.trailing_zeros() as usize
    }
}

impl PositionTable {
    pub fn new(mu: &BipartiteDist) -> Result<Self> {
        if mu.n() > 63 {
            return Err(CoreError::UnsupportedSize("position tables need n < 64".into()));
        }
        let atoms = mu.support()?;
        Ok(Self::from_atoms(mu.n(), atoms))
    }

    pub fn from_atoms(n: usize, atoms: Vec<Atom>) -> Self {
        let mut total = vec![Tally::default(); n];
        let mut by_x: HashMap<u64, Vec<Tally>> = HashMap::new();
        let mut by_y: HashMap<u64, Vec<Tally>> = HashMap::new();
        let mut by_xp: HashMap<(usize, u64), Tally> = HashMap::new();
        let mut by_yp: HashMap<(usize, u64), Tally> = HashMap::new();
        for a in &atoms {
            let f = first_intersection(a, n);
            let tx = by_x.entry(a.x).or_insert_with(|| vec![Tally::default(); n]);
            for (i, t) in tx.iter_mut().enumerate() {
                t.add(a, i, i <= f);
            }
            let ty = by_y.entry(a.y).or_insert_with(|| vec![Tally::default(); n]);
            for (i, t) in ty.iter_mut().enumerate() {
                t.add(a, i, i <= f);
            }
            for i in 0..n {
                let in_e = i <= f;
                total[i].add(a, i, in_e);
                by_xp.entry((i, a.x & low_mask(i))).or_default().add(a, i, in_e);
                by_yp.entry((i, a.y & low_mask(i))).or_default().add(a, i, in_e);
            }
        }
        PositionTable { n, atoms: Arc::new(atoms), total, by_x, by_y, by_xp, by_yp }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    fn pair_prefix(&self, i: usize, x: u64, y: u64) -> Tally {
        let m = low_mask(i);
        let mut t = Tally::default();
        for a in self.atoms.iter().filter(|a| a.x & m == x & m && a.y & m == y & m) {
            t.add(a, i, i <= first_intersection(a, self.n));
        }
        t
    }

    /// Tally of one context at position i; None when the context has no mass.
    pub fn tally(&self, context: Context, i: usize) -> Option<Tally> {
        let t = match context {
            Context::Unconditioned => Some(self.total[i]),
            Context::AliceInput(x) => self.by_x.get(&x).map(|v| v[i]),
            Context::BobInput(y) => self.by_y.get(&y).map(|v| v[i]),
            Context::AlicePrefix(x) => self.by_xp.get(&(i, x & low_mask(i))).copied(),
            Context::BobPrefix(y) => self.by_yp.get(&(i, y & low_mask(i))).copied(),
            Context::Prefixes { x, y } => Some(self.pair_prefix(i, x, y)),
        };
        t.filter(|t| t.tot > 0.0)
    }

    pub fn local(&self, context: Context, i: usize) -> Option<Local> {
        self.tally(context, i).and_then(|t| t.local())
    }

    /// q_i^x: probability that Bob holds i given Alice's input and E_i.
    pub fn q_alice(&self, x: u64, i: usize) -> f64 {
        self.local(Context::AliceInput(x), i).map_or(0.0, |l| l.q)
    }

    /// p_i^y: probability that Alice holds i given Bob's input and E_i.
    pub fn p_bob(&self, y: u64, i: usize) -> f64 {
        self.local(Context::BobInput(y), i).map_or(0.0, |l| l.p)
    }

    /// Position i is bad for x: x_i = 1 and q_i^x ≤ ε·q′_i under x's prefix.
    pub fn bad_for_x(&self, x: u64, i: usize, eps: f64) -> bool {
        x >> i & 1 == 1
            && self.local(Context::AlicePrefix(x), i).is_some_and(|l| self.q_alice(x, i) <= eps * l.q_prime)
    }

    pub fn bad_for_y(&self, y: u64, i: usize, eps: f64) -> bool {
        y >> i & 1 == 1 && self.local(Context::BobPrefix(y), i).is_some_and(|l| self.p_bob(y, i) <= eps * l.p_prime)
    }
}

/// Statistics of one context at every position.
pub fn position_stats(table: &PositionTable, context: Context) -> Result<PositionStats> {
    if table.tally(context, 0).is_none() {
        return Err(CoreError::EmptyConditioning);
    }
    let rows = (0..table.n).map(|i| table.local(context, i)).collect();
    Ok(PositionStats { context, rows })
}

/// Which threshold halts the protocol on an oversized block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Halting {
    /// log2(1/ε)/τ.
    LogOverTau,
    /// 1/(ε·τ).
    InverseEpsTau,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QCostConfig {
    pub eps: f64,
    /// Information budget used in τ.
    pub k: f64,
    pub grover_constant: f64,
    pub halting: Halting,
}

impl QCostConfig {
    pub fn new(eps: f64, k: f64) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) || k < 0.0 {
            return invalid("need eps in (0,1) and k ≥ 0");
        }
        Ok(QCostConfig { eps, k, grover_constant: 1.0, halting: Halting::LogOverTau })
    }

    pub fn tau(&self, n: usize) -> f64 {
        self.eps.powi(3) / ((self.k + 1.0) * n as f64).sqrt()
    }

    pub fn halting_threshold(&self, n: usize) -> f64 {
        match self.halting {
            Halting::LogOverTau => (1.0 / self.eps).log2() / self.tau(n),
            Halting::InverseEpsTau => 1.0 / (self.eps * self.tau(n)),
        }
    }

    /// Error of each of the two searches; together they stay within ε.
    pub fn search_error(&self) -> f64 {
        self.eps / 2.0
    }

    /// ⌈c_g·√|block|·log2 n·√log2(1/ε_search)⌉, and 0 for an empty block.
    pub fn search_cost(&self, block: usize, n: usize) -> u64 {
        if block == 0 {
            return 0;
        }
        let c = self.grover_constant
            * (block as f64).sqrt()
            * (n.max(2) as f64).log2()
            * (1.0 / self.search_error()).log2().sqrt();
        c.ceil() as u64
    }

    /// ⁴√((k+1)n)·log2 n·(log2(1/ε)/ε)^{3/2}, the shape of the overall bound.
    pub fn reference_cost(&self, n: usize) -> f64 {
        ((self.k + 1.0) * n as f64).powf(0.25)
            * (n.max(2) as f64).log2()
            * ((1.0 / self.eps).log2() / self.eps).powf(1.5)
    }
}

/// Source of the q_i^x and p_i^y values the blocks are built from.
#[derive(Clone, Debug)]
pub enum PositionModel {
    Table(Arc<PositionTable>),
    /// μ_{n,k} with set size m: for i in x, q_i^x = 1/(4m − a) where a is the
    /// number of elements of x before i; symmetrically for Bob.
    Razborov { n: usize, m: usize },
}

impl PositionModel {
    pub fn from_dist(mu: &BipartiteDist) -> Result<Self> {
        if let Repr::Razborov(p, Variant::Mu) = mu.repr() {
            return Ok(PositionModel::Razborov { n: p.n, m: p.m });
        }
        if mu.is_enumerable() {
            return Ok(PositionModel::Table(Arc::new(PositionTable::new(mu)?)));
        }
        Err(CoreError::UnsupportedRepresentation("position statistics need an enumerable distribution".into()))
    }

    pub fn n(&self) -> usize {
        match self {
            PositionModel::Table(t) => t.n,
            PositionModel::Razborov { n, .. } => *n,
        }
    }

    /// q_i^x for every i in x, in increasing order of i.
    fn alice_side(&self, x: &Set) -> Vec<(usize, f64)> {
        match self {
            PositionModel::Table(t) => {
                let code = set_to_index(x);
                x.ones().map(|i| (i, t.q_alice(code, i))).collect()
            }
            PositionModel::Razborov { m, .. } => razborov_side(x, *m),
        }
    }

    fn bob_side(&self, y: &Set) -> Vec<(usize, f64)> {
        match self {
            PositionModel::Table(t) => {
                let code = set_to_index(y);
                y.ones().map(|i| (i, t.p_bob(code, i))).collect()
            }
            PositionModel::Razborov { m, .. } => razborov_side(y, *m),
        }
    }
}

fn razborov_side(own: &Set, m: usize) -> Vec<(usize, f64)> {
    if own.count_ones(..) != m {
        // Off the support: no conditional is defined.
        return own.ones().map(|i| (i, 0.0)).collect();
    }
    own.ones().enumerate().map(|(a, i)| (i, 1.0 / (4 * m - a) as f64)).collect()
}

/// C_A = {i ∈ x : q_i^x ≥ τ} and C_B = {i ∈ y : p_i^y ≥ τ}.
pub fn interesting_blocks(model: &PositionModel, x: &Set, y: &Set, config: &QCostConfig) -> (Vec<usize>, Vec<usize>) {
    let tau = config.tau(model.n());
    let pick = |side: Vec<(usize, f64)>| side.into_iter().filter(|e| e.1 >= tau).map(|e| e.0).collect();
    (pick(model.alice_side(x)), pick(model.bob_side(y)))
}

/// The block-search protocol under the query-cost model.
#[derive(Clone, Debug)]
pub struct QDisj {
    pub model: PositionModel,
    pub config: QCostConfig,
}

pub fn qdisj(mu: &BipartiteDist, config: QCostConfig) -> Result<QDisj> {
    Ok(QDisj { model: PositionModel::from_dist(mu)?, config })
}

impl QDisj {
    /// Idealized search for an element of `block` in `other`; reports the
    /// truth except with probability ε_search.
    fn search(&self, block: &[usize], other: &Set, who: Party, label: u64, ch: &mut Channel) -> Step<bool> {
        if block.is_empty() {
            return Ok(false);
        }
        ch.charge(who, self.config.search_cost(block.len(), self.model.n()))?;
        let truth = block.iter().any(|&i| other.contains(i));
        let mut coin = ch.coin.derive(&[TAG_SEARCH, label]);
        Ok(if coin.unit() < self.config.search_error() { !truth } else { truth })
    }
}

impl Protocol for QDisj {
    fn name(&self) -> String {
        format!("qdisj(eps={},k={},c_g={})", self.config.eps, self.config.k, self.config.grover_constant)
    }

    fn accepts(&self, problem: &CommProblem) -> bool {
        matches!(problem.kind, crate::engine::ProblemKind::Disj) && problem.n == self.model.n()
    }

    fn execute(&self, x: &Set, y: &Set, ch: &mut Channel) -> Step<bool> {
        let (ca, cb) = interesting_blocks(&self.model, x, y, &self.config);
        let limit = self.config.halting_threshold(self.model.n());
        if ca.len() as f64 >= limit || cb.len() as f64 >= limit {
            ch.send_bit(if ca.len() as f64 >= limit { Party::Alice } else { Party::Bob }, true)?;
            ch.note("qdisj:oversize");
            return Ok(false);
        }
        if self.search(&ca, y, Party::Alice, 0, ch)? {
            ch.note("qdisj:found");
            return Ok(false);
        }
        if self.search(&cb, x, Party::Bob, 1, ch)? {
            ch.note("qdisj:found");
            return Ok(false);
        }
        Ok(true)
    }
}

/// Labels of one coordinate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PositionLabel {
    pub bad_x: bool,
    pub bad_y: bool,
    pub lucky: bool,
    pub chosen: bool,
}

/// Exact labels of every coordinate for the input pair (x, y).
pub fn classify_positions(table: &PositionTable, x: &Set, y: &Set, config: &QCostConfig) -> Vec<PositionLabel> {
    let model = PositionModel::Table(Arc::new(table.clone()));
    classify_with(table, &model, x, y, config)
}

/// As [`classify_positions`], reusing a model built from the same table.
pub fn classify_with(
    table: &PositionTable,
    model: &PositionModel,
    x: &Set,
    y: &Set,
    config: &QCostConfig,
) -> Vec<PositionLabel> {
    let (xc, yc) = (set_to_index(x), set_to_index(y));
    let (ca, cb) = interesting_blocks(model, x, y, config);
    let eps = config.eps;
    (0..table.n)
        .map(|i| {
            let px = table.local(Context::AlicePrefix(xc), i);
            let py = table.local(Context::BobPrefix(yc), i);
            let lucky = match (px, py) {
                (Some(a), Some(b)) => a.p <= (config.k + 1.0) * b.p_prime / eps.powi(3),
                _ => false,
            };
            PositionLabel {
                bad_x: table.bad_for_x(xc, i, eps),
                bad_y: table.bad_for_y(yc, i, eps),
                lucky,
                chosen: ca.contains(&i) || cb.contains(&i),
            }
        })
        .collect()
}

/// Exact bad-position accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct BadReport {
    /// Pr[the first intersection is at a position bad for x].
    pub first_bad_x: f64,
    pub first_bad_y: f64,
    /// Largest q̃′ − ε·q′ over all prefix contexts (≤ 0 when the bound holds).
    pub tilde_excess: f64,
}

pub fn bad_report(table: &PositionTable, eps: f64) -> BadReport {
    let n = table.n;
    let mut first_bad_x = 0.0;
    let mut first_bad_y = 0.0;
    let mut tilde_x: HashMap<(usize, u64), f64> = HashMap::new();
    let mut tilde_y: HashMap<(usize, u64), f64> = HashMap::new();
    for a in table.atoms() {
        let f = first_intersection(a, n);
        if f == n {
            continue;
        }
        if table.bad_for_x(a.x, f, eps) {
            first_bad_x += a.p;
            *tilde_x.entry((f, a.x & low_mask(f))).or_default() += a.p;
        }
        if table.bad_for_y(a.y, f, eps) {
            first_bad_y += a.p;
            *tilde_y.entry((f, a.y & low_mask(f))).or_default() += a.p;
        }
    }
    let mut tilde_excess = f64::NEG_INFINITY;
    for ((i, xp), mass) in tilde_x {
        let t = table.by_xp[&(i, xp)];
        tilde_excess = tilde_excess.max(mass / t.x1 - eps * t.both / t.x1);
    }
    for ((i, yp), mass) in tilde_y {
        let t = table.by_yp[&(i, yp)];
        tilde_excess = tilde_excess.max(mass / t.y1 - eps * t.both / t.y1);
    }
    BadReport { first_bad_x, first_bad_y, tilde_excess }
}

/// Sum over positions of the expected p_i^{x⃗}·q_i^{y⃗} under μ_i, with the
/// hypothesis checks and the right-hand side 16k/α + 68/α².
#[derive(Clone, Debug, PartialEq)]
pub struct QinfReport {
    pub lhs: f64,
    pub rhs: f64,
    pub k: f64,
    pub holds: bool,
    /// Largest identity gap r = p·q′ = p′·q over every evaluated context.
    pub identity_gap: f64,
}

pub fn qinf_bound_check(table: &PositionTable, alpha: f64) -> Result<QinfReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return invalid("alpha must lie in (0,1]");
    }
    let n = table.n;
    let atoms = table.atoms();
    check_qinf_hypothesis(table, alpha)?;
    let mut gap = 0.0f64;
    let mut lhs = 0.0;
    for i in 0..n {
        let mut pairs: HashMap<(u64, u64), f64> = HashMap::new();
        let mut mass = 0.0;
        let m = low_mask(i);
        for a in atoms.iter().filter(|a| first_intersection(a, n) >= i) {
            *pairs.entry((a.x & m, a.y & m)).or_default() += a.p;
            mass += a.p;
        }
        if mass <= 0.0 {
            continue;
        }
        for ((xp, yp), w) in pairs {
            let lx = table.local(Context::AlicePrefix(xp), i).expect("prefix in support");
            let ly = table.local(Context::BobPrefix(yp), i).expect("prefix in support");
            gap = gap.max(lx.identity_gap()).max(ly.identity_gap());
            lhs += w / mass * lx.p * ly.q;
        }
    }
    for ctx in table.by_x.keys().map(|&x| Context::AliceInput(x)).chain(table.by_y.keys().map(|&y| Context::BobInput(y))) {
        for i in 0..n {
            if let Some(l) = table.local(ctx, i) {
                gap = gap.max(l.identity_gap());
            }
        }
    }
    for i in 0..n {
        if let Some(l) = table.local(Context::Unconditioned, i) {
            gap = gap.max(l.identity_gap());
        }
    }
    let k = mutual_information(atoms);
    let rhs = 16.0 * k / alpha + 68.0 / (alpha * alpha);
    Ok(QinfReport { lhs, rhs, k, holds: lhs <= rhs + 1e-9, identity_gap: gap })
}

/// Non-intersection probability at least α given either input, and every
/// r-family value at most 1/2.
fn check_qinf_hypothesis(table: &PositionTable, alpha: f64) -> Result<()> {
    let n = table.n;
    // Pr[no intersection | ctx] = s_{n−1}·(1 − r_{n−1}).
    let disjoint = |t: &Tally| t.local().map_or(0.0, |l| l.s * (1.0 - l.r));
    let sides = [(&table.by_x, "x"), (&table.by_y, "y")];
    for (map, side) in sides {
        for (code, tallies) in map.iter() {
            if disjoint(&tallies[n - 1]) < alpha - 1e-12 {
                return Err(CoreError::HypothesisViolation(format!(
                    "non-intersection probability below alpha given {side}={code:#x}"
                )));
            }
            if tallies.iter().filter_map(|t| t.local()).any(|l| l.r > 0.5 + 1e-12) {
                return Err(CoreError::HypothesisViolation(format!("r exceeds 1/2 given {side}={code:#x}")));
            }
        }
    }
    if disjoint(&table.total[n - 1]) < alpha - 1e-12 {
        return Err(CoreError::HypothesisViolation("non-intersection probability below alpha".into()));
    }
    if table.total.iter().filter_map(|t| t.local()).any(|l| l.r > 0.5 + 1e-12) {
        return Err(CoreError::HypothesisViolation("r exceeds 1/2".into()));
    }
    Ok(())
}
