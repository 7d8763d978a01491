//! Input distributions: explicit tables, support lists, product marginals,
//! the structured set-pair distributions with closed-form masses, mixtures,
//! and random sparse functions with their balanced hard distribution.

use std::io::{Cursor, Read};
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::engine::{set_to_index, CommProblem, InputSource, Set};
use crate::error::{invalid, CoreError, Result};
use crate::matrix::SparseMatrix;

/// Largest support we are willing to enumerate.
pub const ENUM_CAP: u64 = 10_000_000;

/// One support point, sides encoded as bitmasks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: u64,
    pub y: u64,
    pub p: f64,
}

/// Binomial coefficient as f64; exact for n ≤ 125.
pub fn choose(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= 125 {
        num_integer::binomial(n as u128, k as u128) as f64
    } else {
        statrs::function::factorial::ln_binomial(n, k).exp()
    }
}

pub fn log2_choose(n: u64, k: u64) -> f64 {
    if n <= 125 {
        choose(n, k).log2()
    } else {
        statrs::function::factorial::ln_binomial(n, k) / std::f64::consts::LN_2
    }
}

/// Places the low bits of `bits` at the positions of the ones of `mask`.
pub fn deposit(mut bits: u64, mut mask: u64) -> u64 {
    let mut out = 0;
    while mask != 0 && bits != 0 {
        let low = mask & mask.wrapping_neg();
        if bits & 1 == 1 {
            out |= low;
        }
        bits >>= 1;
        mask ^= low;
    }
    out
}

/// All subsets of size `k` of the bits of `mask`, in increasing order.
pub fn subsets_of(mask: u64, k: u32) -> impl Iterator<Item = u64> {
    let width = mask.count_ones();
    let mut cur: Option<u64> = if k > width {
        None
    } else if k == 0 {
        Some(0)
    } else {
        Some((1u64 << k) - 1)
    };
    std::iter::from_fn(move || {
        let v = cur?;
        cur = if v == 0 {
            None
        } else {
            let c = v & v.wrapping_neg();
            let r = v + c;
            let next = (((r ^ v) >> 2) / c) | r;
            (width == 64 || next < (1u64 << width)).then_some(next).filter(|_| r != 0)
        };
        Some(deposit(v, mask))
    })
}

fn full_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Parameters of the structured set-pair distributions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RazborovParams {
    pub n: usize,
    pub k: f64,
    pub m: usize,
}

/// Largest universe for the structured μ/ν/σ family. The triple sampler stays at 64.
pub const MAX_STRUCTURED_N: usize = 4096;

impl RazborovParams {
    /// m = ⌊c·√(n(k+1))⌋ with c = 1/log2(e).
    pub fn new(n: usize, k: f64) -> Result<Self> {
        if k < 0.0 || !k.is_finite() {
            return invalid("information budget must be finite and non-negative");
        }
        let m = (std::f64::consts::LN_2 * (n as f64 * (k + 1.0)).sqrt()).floor() as usize;
        Self::with_m(n, k, m)
    }

    pub fn with_m(n: usize, k: f64, m: usize) -> Result<Self> {
        if m < 1 || 3 * m > n {
            return invalid(format!("set size m={m} invalid for n={n} (need 1 ≤ m ≤ n/3)"));
        }
        if n > MAX_STRUCTURED_N {
            return Err(CoreError::UnsupportedSize(format!("structured set pairs limited to n ≤ {MAX_STRUCTURED_N}")));
        }
        Ok(RazborovParams { n, k, m })
    }

    /// l with n = 4l − 1, when it exists.
    pub fn l(&self) -> Option<usize> {
        (self.n + 1).is_multiple_of(4).then_some((self.n + 1) / 4)
    }

    pub fn disjoint_pairs(&self) -> f64 {
        choose(self.n as u64, self.m as u64) * choose((self.n - self.m) as u64, self.m as u64)
    }

    pub fn touching_pairs(&self) -> f64 {
        let (n, m) = (self.n as u64, self.m as u64);
        choose(n, m) * m as f64 * choose(n - m, m - 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Nu,
    Sigma,
    Mu,
    TripleMu,
}

/// Distribution of one side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Marginal {
    /// Sorted (set code, mass) list.
    Table(Vec<(u64, f64)>),
    /// Independent coordinates, element i present with the given probability.
    Bernoulli(Vec<f64>),
}

impl Marginal {
    pub fn table(mut entries: Vec<(u64, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(u64, f64)> = Vec::with_capacity(entries.len());
        for (c, p) in entries {
            if p < 0.0 || !p.is_finite() {
                return invalid("negative or non-finite mass");
            }
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 += p,
                _ => merged.push((c, p)),
            }
        }
        let total: f64 = merged.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("marginal sums to {total}"));
        }
        Ok(Marginal::Table(merged))
    }

    pub fn bernoulli(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return invalid("Bernoulli parameter outside [0,1]");
        }
        Ok(Marginal::Bernoulli(probs))
    }

    pub fn mass(&self, s: &Set) -> f64 {
        match self {
            Marginal::Table(t) => {
                let c = set_to_index(s);
                t.binary_search_by_key(&c, |e| e.0).map(|i| t[i].1).unwrap_or(0.0)
            }
            Marginal::Bernoulli(p) => p
                .iter()
                .enumerate()
                .map(|(i, &q)| if s.contains(i) { q } else { 1.0 - q })
                .product(),
        }
    }

    pub fn mass_code(&self, c: u64) -> f64 {
        match self {
            Marginal::Table(t) => t.binary_search_by_key(&c, |e| e.0).map(|i| t[i].1).unwrap_or(0.0),
            Marginal::Bernoulli(p) => p
                .iter()
                .enumerate()
                .map(|(i, &q)| if (c >> i) & 1 == 1 { q } else { 1.0 - q })
                .product(),
        }
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Set {
        match self {
            Marginal::Table(t) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for &(c, p) in t {
                    acc += p;
                    if u < acc {
                        return crate::engine::index_to_set(c, n);
                    }
                }
                crate::engine::index_to_set(t.last().map(|e| e.0).unwrap_or(0), n)
            }
            Marginal::Bernoulli(p) => {
                let mut s = Set::with_capacity(n);
                for (i, &q) in p.iter().enumerate() {
                    if rng.gen::<f64>() < q {
                        s.insert(i);
                    }
                }
                s
            }
        }
    }

    fn support_size(&self) -> u64 {
        match self {
            Marginal::Table(t) => t.len() as u64,
            Marginal::Bernoulli(p) => {
                if p.len() >= 40 {
                    u64::MAX
                } else {
                    1u64 << p.iter().filter(|&&q| q > 0.0 && q < 1.0).count()
                }
            }
        }
    }

    pub fn entries(&self) -> Vec<(u64, f64)> {
        match self {
            Marginal::Table(t) => t.clone(),
            Marginal::Bernoulli(p) => {
                let free: u64 = p.iter().enumerate().filter(|(_, &q)| q > 0.0 && q < 1.0).map(|(i, _)| 1 << i).sum();
                let forced: u64 = p.iter().enumerate().filter(|(_, &q)| q >= 1.0).map(|(i, _)| 1 << i).sum();
                let free_count = free.count_ones();
                (0..1u64 << free_count)
                    .map(|b| {
                        let c = deposit(b, free) | forced;
                        (c, self.mass_code(c))
                    })
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Repr {
    /// Dense 2^n × 2^n table, row-major by x.
    Table(Arc<Vec<f64>>),
    /// Sorted, merged support list.
    Support(Arc<Vec<Atom>>),
    Razborov(RazborovParams, Variant),
    Product(Marginal, Marginal),
    Mixture(Vec<(f64, BipartiteDist)>),
    /// Half the mass uniform on the one-entries of a sparse matrix, half on its zero-entries.
    SparseHard(Arc<SparseMatrix>),
}

/// Joint distribution on pairs of n-bit inputs.
#[derive(Clone, Debug)]
pub struct BipartiteDist {
    n: usize,
    repr: Repr,
    cumulative: Option<Arc<Vec<f64>>>,
}

fn cumulative_of(ps: impl Iterator<Item = f64>) -> Arc<Vec<f64>> {
    let mut acc = 0.0;
    Arc::new(
        ps.map(|p| {
            acc += p;
            acc
        })
        .collect(),
    )
}

fn draw_index(cum: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cum.last().unwrap_or(&1.0);
    let u = rng.gen::<f64>() * total;
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

fn random_subset(pool: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    index::sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect()
}

impl BipartiteDist {
    pub fn from_atoms(n: usize, mut atoms: Vec<Atom>) -> Result<Self> {
        if n > 64 {
            return Err(CoreError::UnsupportedSize("support lists use 64-bit codes".into()));
        }
        let lim = full_mask(n);
        if atoms.iter().any(|a| a.x & !lim != 0 || a.y & !lim != 0) {
            return invalid("support point outside {0,1}^n");
        }
        if atoms.iter().any(|a| a.p < 0.0 || !a.p.is_finite()) {
            return invalid("negative or non-finite mass");
        }
        atoms.sort_by_key(|a| (a.x, a.y));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(l) if l.x == a.x && l.y == a.y => l.p += a.p,
                _ => merged.push(a),
            }
        }
        merged.retain(|a| a.p > 0.0);
        let total: f64 = merged.iter().map(|a| a.p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("masses sum to {total}"));
        }
        let cumulative = Some(cumulative_of(merged.iter().map(|a| a.p)));
        Ok(BipartiteDist { n, repr: Repr::Support(Arc::new(merged)), cumulative })
    }

    /// Renormalises before building; for constructions that accumulate rounding.
    pub fn from_weights(n: usize, mut atoms: Vec<Atom>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.p).sum();
        if !(total > 0.0) {
            return Err(CoreError::EmptyConditioning);
        }
        for a in &mut atoms {
            a.p /= total;
        }
        Self::from_atoms(n, atoms)
    }

    pub fn from_table(n: usize, table: Vec<f64>) -> Result<Self> {
        if n > 10 {
            return Err(CoreError::UnsupportedSize("dense tables limited to n ≤ 10".into()));
        }
        if table.len() != 1 << (2 * n) {
            return invalid("table must have 4^n entries");
        }
        if table.iter().any(|p| *p < 0.0 || !p.is_finite()) {
            return invalid("negative or non-finite mass");
        }
        let total: f64 = table.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("masses sum to {total}"));
        }
        let cumulative = Some(cumulative_of(table.iter().copied()));
        Ok(BipartiteDist { n, repr: Repr::Table(Arc::new(table)), cumulative })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn repr(&self) -> &Repr {
        &self.repr
    }

    pub fn is_product(&self) -> bool {
        matches!(self.repr, Repr::Product(..))
    }

    pub fn product_marginals(&self) -> Option<(&Marginal, &Marginal)> {
        match &self.repr {
            Repr::Product(a, b) => Some((a, b)),
            _ => None,
        }
    }

    /// Upper bound on the number of support points (saturating).
    pub fn support_size(&self) -> u64 {
        match &self.repr {
            Repr::Table(t) => t.len() as u64,
            Repr::Support(a) => a.len() as u64,
            Repr::Razborov(p, v) => {
                let count = match v {
                    Variant::Nu => p.disjoint_pairs(),
                    Variant::Sigma => p.touching_pairs(),
                    _ => p.disjoint_pairs() + p.touching_pairs(),
                };
                if count > u64::MAX as f64 {
                    u64::MAX
                } else {
                    count as u64
                }
            }
            Repr::Product(a, b) => a.support_size().saturating_mul(b.support_size()),
            Repr::Mixture(parts) => parts.iter().fold(0u64, |acc, (_, d)| acc.saturating_add(d.support_size())),
            Repr::SparseHard(m) => {
                let side = m.side() as u64;
                side.saturating_mul(side)
            }
        }
    }

    pub fn is_enumerable(&self) -> bool {
        !matches!(self.repr, Repr::SparseHard(_)) && self.n <= 64 && self.support_size() <= ENUM_CAP
    }

    /// Exact mass of a pair of sets.
    pub fn mass(&self, x: &Set, y: &Set) -> f64 {
        match &self.repr {
            Repr::Product(a, b) => a.mass(x) * b.mass(y),
            Repr::Mixture(parts) => parts.iter().map(|(w, d)| w * d.mass(x, y)).sum(),
            Repr::Razborov(p, v) if *v != Variant::TripleMu && self.n > 64 => razborov_mass_sets(p, *v, x, y),
            _ => self.mass_code(set_to_index(x), set_to_index(y)),
        }
    }

    /// Exact mass of a pair given as bitmasks (n ≤ 64).
    pub fn mass_code(&self, x: u64, y: u64) -> f64 {
        match &self.repr {
            Repr::Table(t) => {
                let side = 1usize << self.n;
                let (x, y) = (x as usize, y as usize);
                if x >= side || y >= side {
                    0.0
                } else {
                    t[x * side + y]
                }
            }
            Repr::Support(atoms) => atoms
                .binary_search_by(|a| (a.x, a.y).cmp(&(x, y)))
                .map(|i| atoms[i].p)
                .unwrap_or(0.0),
            Repr::Razborov(p, v) => razborov_mass(p, *v, x, y),
            Repr::Product(a, b) => a.mass_code(x) * b.mass_code(y),
            Repr::Mixture(parts) => parts.iter().map(|(w, d)| w * d.mass_code(x, y)).sum(),
            Repr::SparseHard(m) => {
                let ones = m.ones() as f64;
                let zeros = (m.side() as f64).powi(2) - ones;
                if m.get(x as usize, y as usize) {
                    0.5 / ones
                } else {
                    0.5 / zeros
                }
            }
        }
    }

    /// Full support, sorted by (x, y), zero-mass points dropped.
    pub fn support(&self) -> Result<Vec<Atom>> {
        if !self.is_enumerable() {
            return Err(CoreError::UnsupportedSize(format!(
                "support of about {} points is not enumerable",
                self.support_size()
            )));
        }
        let mut atoms = match &self.repr {
            Repr::Table(t) => {
                let side = 1u64 << self.n;
                t.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(i, &p)| Atom { x: i as u64 / side, y: i as u64 % side, p })
                    .collect()
            }
            Repr::Support(a) => return Ok(a.as_ref().clone()),
            Repr::Razborov(p, v) => razborov_support(p, *v),
            Repr::Product(a, b) => {
                let (ea, eb) = (a.entries(), b.entries());
                let mut out = Vec::with_capacity(ea.len() * eb.len());
                for &(x, px) in &ea {
                    for &(y, py) in &eb {
                        if px * py > 0.0 {
                            out.push(Atom { x, y, p: px * py });
                        }
                    }
                }
                out
            }
            Repr::Mixture(parts) => {
                let mut out = Vec::new();
                for (w, d) in parts {
                    out.extend(d.support()?.into_iter().map(|a| Atom { p: a.p * w, ..a }));
                }
                out
            }
            Repr::SparseHard(_) => unreachable!(),
        };
        atoms.sort_by_key(|a| (a.x, a.y));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(l) if l.x == a.x && l.y == a.y => l.p += a.p,
                _ => merged.push(a),
            }
        }
        Ok(merged)
    }

    /// The same distribution as a support list.
    pub fn to_support(&self) -> Result<BipartiteDist> {
        let atoms = self.support()?;
        let cumulative = Some(cumulative_of(atoms.iter().map(|a| a.p)));
        Ok(BipartiteDist { n: self.n, repr: Repr::Support(Arc::new(atoms)), cumulative })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (Set, Set) {
        let n = self.n;
        match &self.repr {
            Repr::Table(_) => {
                let i = draw_index(self.cumulative.as_ref().unwrap(), rng) as u64;
                let side = 1u64 << n;
                (crate::engine::index_to_set(i / side, n), crate::engine::index_to_set(i % side, n))
            }
            Repr::Support(atoms) => {
                let a = atoms[draw_index(self.cumulative.as_ref().unwrap(), rng)];
                (crate::engine::index_to_set(a.x, n), crate::engine::index_to_set(a.y, n))
            }
            Repr::Razborov(p, v) => razborov_sample(p, *v, rng),
            Repr::Product(a, b) => (a.sample(n, rng), b.sample(n, rng)),
            Repr::Mixture(parts) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (w, d) in parts {
                    acc += w;
                    if u < acc {
                        return d.sample(rng);
                    }
                }
                parts.last().unwrap().1.sample(rng)
            }
            Repr::SparseHard(m) => {
                let side = m.side();
                if rng.gen::<bool>() {
                    let (r, c) = m.entry(rng.gen_range(0..m.ones()) as usize);
                    (crate::engine::index_to_set(r as u64, n), crate::engine::index_to_set(c as u64, n))
                } else {
                    loop {
                        let (r, c) = (rng.gen_range(0..side), rng.gen_range(0..side));
                        if !m.get(r, c) {
                            return (
                                crate::engine::index_to_set(r as u64, n),
                                crate::engine::index_to_set(c as u64, n),
                            );
                        }
                    }
                }
            }
        }
    }

    /// Marginal of Alice's side as a sorted (code, mass) list.
    pub fn marginal_a(&self) -> Result<Vec<(u64, f64)>> {
        Ok(marginals(&self.support()?).0)
    }

    pub fn marginal_b(&self) -> Result<Vec<(u64, f64)>> {
        Ok(marginals(&self.support()?).1)
    }

    /// Debug text form.
    pub fn to_text(&self) -> String {
        let head = format!("# bipartite n={} repr={}\n", self.n, repr_name(&self.repr));
        match &self.repr {
            Repr::Razborov(p, v) => format!("{head}m {} k {} variant {:?}\n", p.m, p.k, v),
            Repr::Product(Marginal::Bernoulli(a), Marginal::Bernoulli(b)) => {
                let fmt = |v: &[f64]| v.iter().map(|p| format!("{p:.17}")).collect::<Vec<_>>().join(" ");
                format!("{head}a {}\nb {}\n", fmt(a), fmt(b))
            }
            Repr::SparseHard(m) => format!("{head}ones {}\n", m.ones()),
            _ => match self.support() {
                Ok(atoms) => {
                    let mut s = head;
                    for a in atoms {
                        s.push_str(&format!("{:x} {:x} {:.17e}\n", a.x, a.y, a.p));
                    }
                    s
                }
                Err(_) => head,
            },
        }
    }
}

fn repr_name(r: &Repr) -> &'static str {
    match r {
        Repr::Table(_) => "table",
        Repr::Support(_) => "support",
        Repr::Razborov(..) => "structured",
        Repr::Product(..) => "product",
        Repr::Mixture(_) => "mixture",
        Repr::SparseHard(_) => "sparse-hard",
    }
}

impl InputSource for BipartiteDist {
    fn n(&self) -> usize {
        self.n
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> (Set, Set) {
        self.sample(rng)
    }
}

/// Marginals of a support list, each sorted by code.
pub fn marginals(atoms: &[Atom]) -> (Vec<(u64, f64)>, Vec<(u64, f64)>) {
    let mut a: Vec<(u64, f64)> = Vec::new();
    for at in atoms {
        match a.last_mut() {
            Some(l) if l.0 == at.x => l.1 += at.p,
            _ => a.push((at.x, at.p)),
        }
    }
    let mut by_y: Vec<(u64, f64)> = atoms.iter().map(|at| (at.y, at.p)).collect();
    by_y.sort_by_key(|e| e.0);
    let mut b: Vec<(u64, f64)> = Vec::new();
    for (y, p) in by_y {
        match b.last_mut() {
            Some(l) if l.0 == y => l.1 += p,
            _ => b.push((y, p)),
        }
    }
    (a, b)
}

pub fn lookup(table: &[(u64, f64)], c: u64) -> f64 {
    table.binary_search_by_key(&c, |e| e.0).map(|i| table[i].1).unwrap_or(0.0)
}

fn razborov_mass(p: &RazborovParams, v: Variant, x: u64, y: u64) -> f64 {
    let m = p.m as u32;
    if x.count_ones() != m || y.count_ones() != m || (x | y) & !full_mask(p.n) != 0 {
        return 0.0;
    }
    let inter = (x & y).count_ones();
    let nu = if inter == 0 { 1.0 / p.disjoint_pairs() } else { 0.0 };
    let sigma = if inter == 1 { 1.0 / p.touching_pairs() } else { 0.0 };
    match v {
        Variant::Nu => nu,
        Variant::Sigma => sigma,
        Variant::Mu => 0.75 * nu + 0.25 * sigma,
        Variant::TripleMu => triple_mass(p, x, y),
    }
}

fn razborov_mass_sets(p: &RazborovParams, v: Variant, x: &Set, y: &Set) -> f64 {
    if x.count_ones(..) != p.m || y.count_ones(..) != p.m || x.ones().chain(y.ones()).any(|i| i >= p.n) {
        return 0.0;
    }
    match (v, x.intersection(y).count()) {
        (Variant::Nu, 0) => 1.0 / p.disjoint_pairs(),
        (Variant::Sigma, 1) => 1.0 / p.touching_pairs(),
        (Variant::Mu, 0) => 0.75 / p.disjoint_pairs(),
        (Variant::Mu, 1) => 0.25 / p.touching_pairs(),
        _ => 0.0,
    }
}

/// Mass under the triple process, summed over the position of the split element.
fn triple_mass(p: &RazborovParams, x: u64, y: u64) -> f64 {
    let Some(l) = p.l() else { return 0.0 };
    if (x & y).count_ones() > 1 {
        return 0.0;
    }
    let (n, m, half) = (p.n as u64, p.m as u64, (2 * l - 1) as u64);
    let px_in = 0.5 / choose(half, m - 1);
    let px_out = 0.5 / choose(half, m);
    let triples = n as f64 * choose(n - 1, half);
    let mut total = 0.0;
    for i in 0..p.n {
        let bit = 1u64 << i;
        if x & y & !bit != 0 {
            continue;
        }
        let xr = (x & !bit).count_ones() as u64;
        let yr = (y & !bit).count_ones() as u64;
        if xr > half || yr > half {
            continue;
        }
        let free = n - 1 - xr - yr;
        let count = choose(free, half - xr);
        let fx = if x & bit != 0 { px_in } else { px_out };
        let fy = if y & bit != 0 { px_in } else { px_out };
        total += count * fx * fy;
    }
    total / triples
}

fn razborov_support(p: &RazborovParams, v: Variant) -> Vec<Atom> {
    let full = full_mask(p.n);
    let m = p.m as u32;
    let mut out = Vec::new();
    for x in subsets_of(full, m) {
        let rest = full & !x;
        if v != Variant::Sigma {
            for y in subsets_of(rest, m) {
                out.push(Atom { x, y, p: razborov_mass(p, v, x, y) });
            }
        }
        if v != Variant::Nu {
            for shared in subsets_of(x, 1) {
                for y in subsets_of(rest, m - 1) {
                    let y = y | shared;
                    out.push(Atom { x, y, p: razborov_mass(p, v, x, y) });
                }
            }
        }
    }
    out.retain(|a| a.p > 0.0);
    out
}

fn razborov_sample(p: &RazborovParams, v: Variant, rng: &mut ChaCha8Rng) -> (Set, Set) {
    let (n, m) = (p.n, p.m);
    let mut x = Set::with_capacity(n);
    let mut y = Set::with_capacity(n);
    match v {
        Variant::TripleMu => {
            let l = p.l().expect("checked at construction");
            let perm: Vec<usize> = index::sample(rng, n, n).into_vec();
            let (t1, t2, i) = (&perm[..2 * l - 1], &perm[2 * l - 1..4 * l - 2], perm[4 * l - 2]);
            for (set, part) in [(&mut x, t1), (&mut y, t2)] {
                if rng.gen::<bool>() {
                    set.insert(i);
                    set.extend(random_subset(part, m - 1, rng));
                } else {
                    set.extend(random_subset(part, m, rng));
                }
            }
        }
        _ => {
            let touching = match v {
                Variant::Nu => false,
                Variant::Sigma => true,
                _ => rng.gen::<f64>() < 0.25,
            };
            let all: Vec<usize> = (0..n).collect();
            let xs = random_subset(&all, m, rng);
            x.extend(xs.iter().copied());
            let rest: Vec<usize> = (0..n).filter(|i| !x.contains(*i)).collect();
            if touching {
                y.insert(xs[rng.gen_range(0..m)]);
                y.extend(random_subset(&rest, m - 1, rng));
            } else {
                y.extend(random_subset(&rest, m, rng));
            }
        }
    }
    (x, y)
}

pub fn make_product(n: usize, a: Marginal, b: Marginal) -> Result<BipartiteDist> {
    for m in [&a, &b] {
        match m {
            Marginal::Bernoulli(p) if p.len() != n => return invalid("marginal length differs from n"),
            Marginal::Table(t) if n < 64 && t.iter().any(|e| e.0 >> n != 0) => {
                return invalid("marginal has points outside {0,1}^n")
            }
            _ => {}
        }
    }
    Ok(BipartiteDist { n, repr: Repr::Product(a, b), cumulative: None })
}

/// Product of iid Bernoulli(p) element marginals on both sides.
pub fn iid_product(n: usize, p: f64) -> Result<BipartiteDist> {
    make_product(n, Marginal::bernoulli(vec![p; n])?, Marginal::bernoulli(vec![p; n])?)
}

pub fn make_razborov(params: RazborovParams, variant: Variant) -> Result<BipartiteDist> {
    let params = RazborovParams::with_m(params.n, params.k, params.m)?;
    if variant == Variant::TripleMu {
        let Some(l) = params.l() else {
            return invalid("the triple sampler needs n ≡ 3 (mod 4)");
        };
        if params.m > 2 * l - 1 {
            return invalid("set size exceeds the triple part size");
        }
        if params.n > 64 {
            return Err(CoreError::UnsupportedSize("triple-sampler masses use 64-bit masks".into()));
        }
    }
    Ok(BipartiteDist { n: params.n, repr: Repr::Razborov(params, variant), cumulative: None })
}

/// Mixture (1/2k)·μ + (1 − 1/2k)·ρ.
pub fn make_tau(params: RazborovParams, rho: BipartiteDist) -> Result<BipartiteDist> {
    if params.k < 1.0 {
        return invalid("mixture needs k ≥ 1");
    }
    if !rho.is_product() {
        return invalid("rho must be a product distribution");
    }
    if rho.n() != params.n {
        return invalid("rho has a different n");
    }
    let w = 1.0 / (2.0 * params.k);
    let mu = make_razborov(params, Variant::Mu)?;
    Ok(BipartiteDist { n: params.n, repr: Repr::Mixture(vec![(w, mu), (1.0 - w, rho)]), cumulative: None })
}

/// Events for conditioning.
pub enum Event<'a> {
    All,
    Disjoint,
    Rectangle { rows: &'a [u64], cols: &'a [u64] },
    /// No common element among coordinates below `i`.
    PrefixDisjoint(usize),
    /// Coordinates below `len` of each side fixed to the given masks, when present.
    PrefixFix { len: usize, x: Option<u64>, y: Option<u64> },
    Predicate(Box<dyn Fn(u64, u64) -> bool + 'a>),
}

impl Event<'_> {
    pub fn holds(&self, x: u64, y: u64) -> bool {
        match self {
            Event::All => true,
            Event::Disjoint => x & y == 0,
            Event::Rectangle { rows, cols } => rows.binary_search(&x).is_ok() && cols.binary_search(&y).is_ok(),
            Event::PrefixDisjoint(i) => x & y & full_mask(*i) == 0,
            Event::PrefixFix { len, x: px, y: py } => {
                let m = full_mask(*len);
                px.is_none_or(|v| x & m == v & m) && py.is_none_or(|v| y & m == v & m)
            }
            Event::Predicate(f) => f(x, y),
        }
    }
}

/// Renormalised restriction to an event.
pub fn restrict_condition(dist: &BipartiteDist, event: &Event) -> Result<BipartiteDist> {
    let atoms: Vec<Atom> = dist.support()?.into_iter().filter(|a| event.holds(a.x, a.y)).collect();
    BipartiteDist::from_weights(dist.n(), atoms)
}

/// Zeroes each side independently with probability 1/2.
pub fn zero_pad_transform(dist: &BipartiteDist) -> Result<BipartiteDist> {
    let mut atoms = Vec::new();
    for a in dist.support()? {
        let q = a.p / 4.0;
        atoms.push(Atom { x: a.x, y: a.y, p: q });
        atoms.push(Atom { x: 0, y: a.y, p: q });
        atoms.push(Atom { x: a.x, y: 0, p: q });
        atoms.push(Atom { x: 0, y: 0, p: q });
    }
    BipartiteDist::from_weights(dist.n(), atoms)
}

/// A random sparse function together with its balanced hard distribution.
#[derive(Clone, Debug)]
pub struct SparseInstance {
    pub problem: CommProblem,
    pub matrix: Arc<SparseMatrix>,
    /// None when one side of the balance has no entries.
    pub hard: Option<BipartiteDist>,
    pub degree_ok: bool,
    pub row_range: (usize, usize),
    pub col_range: (usize, usize),
    pub needs_regeneration: bool,
}

/// Each entry is a one independently with probability d/2^n.
pub fn make_sparse_fn(n: usize, d: f64, seed: u64) -> Result<SparseInstance> {
    if n == 0 || n > crate::engine::EXPLICIT_CAP {
        return Err(CoreError::UnsupportedSize(format!("n={n} outside the explicit-matrix range")));
    }
    let side = 1usize << n;
    if !(1.0..=side as f64).contains(&d) {
        return invalid("need 1 ≤ d ≤ 2^n");
    }
    let p = d / side as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let binom = Binomial::new(side as u64, p).map_err(|e| CoreError::InvalidArgument(e.to_string()))?;
    let mut pairs = Vec::new();
    for r in 0..side {
        let k = binom.sample(&mut rng) as usize;
        for c in index::sample(&mut rng, side, k) {
            pairs.push((r as u32, c as u32));
        }
    }
    let matrix = SparseMatrix::from_pairs(n, pairs);
    let rows: Vec<usize> = (0..side).map(|r| matrix.row(r).len()).collect();
    let cols: Vec<usize> = (0..side).map(|c| matrix.col(c).len()).collect();
    let range = |v: &[usize]| (*v.iter().min().unwrap(), *v.iter().max().unwrap());
    let (row_range, col_range) = (range(&rows), range(&cols));
    let lo = d / 2.0;
    let hi = 2.0 * d;
    let within = |(a, b): (usize, usize)| a as f64 >= lo && b as f64 <= hi;
    let degree_ok = within(row_range) && within(col_range);
    let ones = matrix.ones();
    let total = (side as u64) * (side as u64);
    let needs_regeneration = ones == 0 || ones == total;
    let matrix = Arc::new(matrix);
    let problem = CommProblem::sparse(matrix.as_ref().clone())?;
    let hard = (!needs_regeneration)
        .then(|| BipartiteDist { n, repr: Repr::SparseHard(matrix.clone()), cumulative: None });
    Ok(SparseInstance { problem, matrix, hard, degree_ok, row_range, col_range, needs_regeneration })
}

const MAGIC: &[u8; 4] = b"CCLB";
const VERSION: u16 = 1;

/// Contents of a binary container.
#[derive(Clone, Debug)]
pub enum Container {
    Dist(BipartiteDist),
    Matrix(SparseMatrix),
}

fn header(out: &mut Vec<u8>, n: usize, tag: u8) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.push(tag);
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

/// Binary container: magic "CCLB", u16 version, u32 n, u8 tag, payload (little endian).
///
/// Tags: 1 support list, 2 dense table, 3 structured set pairs, 4 Bernoulli product,
/// 5 sparse matrix.
pub fn encode_dist(d: &BipartiteDist) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match &d.repr {
        Repr::Table(t) => {
            header(&mut out, d.n, 2);
            put_f64s(&mut out, t);
        }
        Repr::Razborov(p, v) => {
            header(&mut out, d.n, 3);
            out.extend_from_slice(&p.k.to_le_bytes());
            out.extend_from_slice(&(p.m as u32).to_le_bytes());
            out.push(*v as u8);
        }
        Repr::Product(Marginal::Bernoulli(a), Marginal::Bernoulli(b)) => {
            header(&mut out, d.n, 4);
            put_f64s(&mut out, a);
            put_f64s(&mut out, b);
        }
        Repr::SparseHard(_) => {
            return Err(CoreError::UnsupportedRepresentation("store the sparse matrix instead".into()))
        }
        _ => {
            let atoms = d.support()?;
            header(&mut out, d.n, 1);
            out.extend_from_slice(&(atoms.len() as u64).to_le_bytes());
            for a in atoms {
                out.extend_from_slice(&a.x.to_le_bytes());
                out.extend_from_slice(&a.y.to_le_bytes());
                out.extend_from_slice(&a.p.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn encode_matrix(m: &SparseMatrix) -> Vec<u8> {
    let mut out = Vec::new();
    header(&mut out, m.n(), 5);
    out.extend_from_slice(&m.ones().to_le_bytes());
    for (r, c) in m.pairs() {
        out.extend_from_slice(&r.to_le_bytes());
        out.extend_from_slice(&c.to_le_bytes());
    }
    out
}

fn take<const N: usize>(cur: &mut Cursor<&[u8]>) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    cur.read_exact(&mut buf).map_err(|_| CoreError::Format("truncated payload".into()))?;
    Ok(buf)
}

fn take_u64(cur: &mut Cursor<&[u8]>) -> Result<u64> {
    Ok(u64::from_le_bytes(take::<8>(cur)?))
}

fn take_f64(cur: &mut Cursor<&[u8]>) -> Result<f64> {
    Ok(f64::from_le_bytes(take::<8>(cur)?))
}

fn take_f64s(cur: &mut Cursor<&[u8]>) -> Result<Vec<f64>> {
    let len = take_u64(cur)?;
    if len > 1 << 32 {
        return Err(CoreError::Format("implausible length".into()));
    }
    (0..len).map(|_| take_f64(cur)).collect()
}

pub fn decode(bytes: &[u8]) -> Result<Container> {
    let mut cur = Cursor::new(bytes);
    if &take::<4>(&mut cur)? != MAGIC {
        return Err(CoreError::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes(take::<2>(&mut cur)?);
    if version != VERSION {
        return Err(CoreError::Format(format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(take::<4>(&mut cur)?) as usize;
    let tag = take::<1>(&mut cur)?[0];
    let out = match tag {
        1 => {
            let len = take_u64(&mut cur)?;
            let mut atoms = Vec::with_capacity(len.min(1 << 24) as usize);
            for _ in 0..len {
                let x = take_u64(&mut cur)?;
                let y = take_u64(&mut cur)?;
                let p = take_f64(&mut cur)?;
                atoms.push(Atom { x, y, p });
            }
            Container::Dist(BipartiteDist::from_atoms(n, atoms)?)
        }
        2 => Container::Dist(BipartiteDist::from_table(n, take_f64s(&mut cur)?)?),
        3 => {
            let k = take_f64(&mut cur)?;
            let m = u32::from_le_bytes(take::<4>(&mut cur)?) as usize;
            let v = match take::<1>(&mut cur)?[0] {
                0 => Variant::Nu,
                1 => Variant::Sigma,
                2 => Variant::Mu,
                3 => Variant::TripleMu,
                t => return Err(CoreError::Format(format!("unknown variant {t}"))),
            };
            Container::Dist(make_razborov(RazborovParams::with_m(n, k, m)?, v)?)
        }
        4 => {
            let a = Marginal::bernoulli(take_f64s(&mut cur)?)?;
            let b = Marginal::bernoulli(take_f64s(&mut cur)?)?;
            Container::Dist(make_product(n, a, b)?)
        }
        5 => {
            let len = take_u64(&mut cur)?;
            let side = 1u64 << n.min(32);
            let mut pairs = Vec::with_capacity(len.min(1 << 24) as usize);
            for _ in 0..len {
                let r = u32::from_le_bytes(take::<4>(&mut cur)?);
                let c = u32::from_le_bytes(take::<4>(&mut cur)?);
                if r as u64 >= side || c as u64 >= side {
                    return Err(CoreError::Format("entry outside the matrix".into()));
                }
                pairs.push((r, c));
            }
            Container::Matrix(SparseMatrix::from_pairs(n, pairs))
        }
        t => return Err(CoreError::Format(format!("unknown tag {t}"))),
    };
    if (cur.position() as usize) != bytes.len() {
        return Err(CoreError::Format("trailing bytes".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_enumerate_binomially() {
        assert_eq!(subsets_of(0b1011_0110, 3).count(), 10);
        assert!(subsets_of(0b1011_0110, 3).all(|s| s & !0b1011_0110 == 0 && s.count_ones() == 3));
        assert_eq!(subsets_of(u64::MAX >> 4, 2).count() as f64, choose(60, 2));
        assert_eq!(subsets_of(0b111, 0).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn razborov_mass_of_disjoint_pair() {
        let p = RazborovParams::new(15, 1.0).unwrap();
        assert_eq!(p.m, 3);
        let d = make_razborov(p, Variant::Mu).unwrap();
        let expect = 0.75 / (choose(15, 3) * choose(12, 3));
        assert!((d.mass_code(0b111, 0b111000) - expect).abs() < 1e-18);
        let total: f64 = d.support().unwrap().iter().map(|a| a.p).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_oversized_sets() {
        assert!(RazborovParams::new(15, 4.0).is_err());
        assert!(RazborovParams::with_m(9, 0.0, 4).is_err());
    }

    #[test]
    fn triple_mass_matches_mu() {
        let p = RazborovParams::new(15, 1.0).unwrap();
        let a = make_razborov(p, Variant::Mu).unwrap();
        let b = make_razborov(p, Variant::TripleMu).unwrap();
        for at in a.support().unwrap().iter().step_by(97) {
            assert!((b.mass_code(at.x, at.y) - at.p).abs() < 1e-15);
        }
    }

    #[test]
    fn sparse_all_ones() {
        let s = make_sparse_fn(3, 8.0, 1).unwrap();
        assert_eq!(s.matrix.ones(), 64);
        assert!(s.degree_ok && s.needs_regeneration && s.hard.is_none());
    }

    #[test]
    fn container_round_trip() {
        let d = BipartiteDist::from_atoms(2, vec![Atom { x: 1, y: 2, p: 0.25 }, Atom { x: 3, y: 0, p: 0.75 }]).unwrap();
        let back = match decode(&encode_dist(&d).unwrap()).unwrap() {
            Container::Dist(b) => b,
            _ => panic!(),
        };
        assert_eq!(back.support().unwrap(), d.support().unwrap());
        let mut bad = encode_dist(&d).unwrap();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
    }
}
