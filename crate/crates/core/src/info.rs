//! Information measures on enumerable distributions (all in bits), the
//! substate truncation, and checkers for the supporting inequalities.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{lookup, marginals, Atom, BipartiteDist};
use crate::error::{invalid, CoreError, Result};

/// p·log2(p/q) with 0·log(0/q) = 0 and p·log(p/0) = +∞.
#[inline]
pub fn plogpq(p: f64, q: f64) -> f64 {
    if p <= 0.0 {
        0.0
    } else if q <= 0.0 {
        f64::INFINITY
    } else {
        p * (p / q).log2()
    }
}

/// Relative entropy of aligned mass vectors.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(&a, &b)| plogpq(a, b)).sum()
}

/// Relative max-entropy of aligned mass vectors.
pub fn kl_max(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(a, _)| **a > 0.0)
        .map(|(&a, &b)| if b <= 0.0 { f64::INFINITY } else { (a / b).log2() })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// log2 of μ(x,y)/(μ_A(x)μ_B(y)) for every atom.
pub fn log_ratios(atoms: &[Atom]) -> Vec<f64> {
    let (ma, mb) = marginals(atoms);
    atoms.iter().map(|a| (a.p / (lookup(&ma, a.x) * lookup(&mb, a.y))).log2()).collect()
}

pub fn mutual_information(atoms: &[Atom]) -> f64 {
    atoms.iter().zip(log_ratios(atoms)).map(|(a, l)| a.p * l).sum::<f64>().max(0.0)
}

pub fn max_information(atoms: &[Atom]) -> f64 {
    log_ratios(atoms).into_iter().fold(0.0, f64::max)
}

pub fn total_variation(a: &[Atom], b: &[Atom]) -> f64 {
    let mut diff: HashMap<(u64, u64), f64> = HashMap::new();
    for at in a {
        *diff.entry((at.x, at.y)).or_default() += at.p;
    }
    for at in b {
        *diff.entry((at.x, at.y)).or_default() -= at.p;
    }
    0.5 * diff.values().map(|v| v.abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoReport {
    pub d: f64,
    pub d_inf: f64,
    pub i: f64,
    pub i_inf: f64,
    pub finite: bool,
    /// Support points of mu outside the support of sigma.
    pub witnesses: Vec<(u64, u64)>,
}

pub fn divergence_suite(mu: &BipartiteDist, sigma: Option<&BipartiteDist>) -> Result<InfoReport> {
    let atoms = mu.support()?;
    let i = mutual_information(&atoms);
    let i_inf = max_information(&atoms);
    let (d, d_inf, witnesses) = match sigma {
        None => (i, i_inf, Vec::new()),
        Some(s) => {
            if s.n() != mu.n() {
                return invalid("distributions over different spaces");
            }
            let q: Vec<f64> = atoms.iter().map(|a| s.mass_code(a.x, a.y)).collect();
            let p: Vec<f64> = atoms.iter().map(|a| a.p).collect();
            let w: Vec<(u64, u64)> = atoms.iter().zip(&q).filter(|(_, &q)| q <= 0.0).map(|(a, _)| (a.x, a.y)).collect();
            (kl(&p, &q), kl_max(&p, &q), w)
        }
    };
    Ok(InfoReport { d, d_inf, i, i_inf, finite: witnesses.is_empty(), witnesses })
}

/// Result of the substate truncation.
#[derive(Clone, Debug)]
pub struct Truncation {
    pub dist: BipartiteDist,
    /// Total variation distance to the input, equal to the removed mass.
    pub tv: f64,
    /// Log-ratio threshold (k+1)/ε′ above which points were removed.
    pub threshold: f64,
    pub eps_prime: f64,
    /// Mutual information of the input.
    pub k: f64,
    /// Max-information of the output.
    pub i_inf: f64,
}

/// Removes every point whose log-ratio to the product of marginals exceeds
/// (k+1)/ε′, with ε′ ∈ (0, 1] as large as possible while the removed mass
/// stays within ε, and renormalises.
pub fn substate_truncate(mu: &BipartiteDist, eps: f64) -> Result<Truncation> {
    if !(eps > 0.0 && eps < 1.0) {
        return invalid("eps must lie in (0,1)");
    }
    let atoms = mu.support()?;
    let ratios = log_ratios(&atoms);
    let k = atoms.iter().zip(&ratios).map(|(a, l)| a.p * l).sum::<f64>().max(0.0);
    let floor = k + 1.0;
    let mut order: Vec<usize> = (0..atoms.len()).collect();
    order.sort_by(|&a, &b| ratios[b].total_cmp(&ratios[a]));
    // Smallest threshold t ≥ k+1 such that the mass strictly above t is ≤ eps.
    let mut threshold = floor;
    let mut above = 0.0;
    let mut idx = 0;
    while idx < order.len() && ratios[order[idx]] > floor {
        let level = ratios[order[idx]];
        let mut group = 0.0;
        let mut j = idx;
        while j < order.len() && ratios[order[j]] == level {
            group += atoms[order[j]].p;
            j += 1;
        }
        if above + group > eps {
            threshold = level;
            break;
        }
        above += group;
        idx = j;
    }
    let kept: Vec<Atom> = atoms.iter().zip(&ratios).filter(|(_, &l)| l <= threshold).map(|(a, _)| *a).collect();
    let removed = 1.0 - kept.iter().map(|a| a.p).sum::<f64>();
    let dist = BipartiteDist::from_weights(mu.n(), kept)?;
    let out = dist.support()?;
    Ok(Truncation {
        i_inf: max_information(&out),
        dist,
        tv: removed.max(0.0),
        threshold,
        eps_prime: floor / threshold,
        k,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LemmaCase {
    LogSum,
    Restriction,
    DepressionHalf,
    DepressionProduct,
    PartitionMonotone,
}

impl LemmaCase {
    pub const ALL: [LemmaCase; 5] = [
        LemmaCase::LogSum,
        LemmaCase::Restriction,
        LemmaCase::DepressionHalf,
        LemmaCase::DepressionProduct,
        LemmaCase::PartitionMonotone,
    ];
}

#[derive(Clone, Debug, PartialEq)]
pub enum LemmaInstance {
    /// Two distributions on a common finite space and an event on it.
    Pair { mu: Vec<f64>, sigma: Vec<f64>, event: Vec<bool> },
    /// Joint of two bits as [μ00, μ01, μ10, μ11], with an optional product
    /// reference given by its two marginal probabilities of 1.
    Bits { joint: [f64; 4], sigma: Option<(f64, f64)> },
    /// Support atoms and, per coin value, its weight and the label of the
    /// rectangle containing each atom.
    Partition { atoms: Vec<Atom>, coins: Vec<(f64, Vec<u64>)> },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaOutcome {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

const TOL: f64 = 1e-9;

fn hypothesis(msg: impl Into<String>) -> CoreError {
    CoreError::HypothesisViolation(msg.into())
}

fn check_distribution(v: &[f64]) -> Result<()> {
    let total: f64 = v.iter().sum();
    if v.iter().any(|p| *p < 0.0 || !p.is_finite()) || (total - 1.0).abs() > 1e-9 {
        return Err(hypothesis("not a probability distribution"));
    }
    Ok(())
}

/// Evaluates both sides of one inequality; `holds` means lhs ≥ rhs for the
/// lower-bound cases and lhs ≤ rhs for the restriction case.
pub fn lemma_verifier(case: LemmaCase, instance: &LemmaInstance) -> Result<LemmaOutcome> {
    match (case, instance) {
        (LemmaCase::LogSum, LemmaInstance::Pair { mu, sigma, event }) => {
            check_pair(mu, sigma, event)?;
            let lhs: f64 = (0..mu.len()).filter(|&i| event[i]).map(|i| plogpq(mu[i], sigma[i])).sum();
            let (me, se) = event_masses(mu, sigma, event);
            let rhs = plogpq(me, se).max(-1.0);
            Ok(LemmaOutcome { lhs, rhs, holds: lhs >= rhs - TOL })
        }
        (LemmaCase::Restriction, LemmaInstance::Pair { mu, sigma, event }) => {
            check_pair(mu, sigma, event)?;
            let (alpha, _) = event_masses(mu, sigma, event);
            if alpha <= 0.0 {
                return Err(hypothesis("event has zero mass"));
            }
            let restricted: Vec<f64> = (0..mu.len()).map(|i| if event[i] { mu[i] / alpha } else { 0.0 }).collect();
            let lhs = kl(&restricted, sigma);
            let rhs = (kl(mu, sigma) + 1.0) / alpha - alpha.log2();
            Ok(LemmaOutcome { lhs, rhs, holds: lhs <= rhs + TOL })
        }
        (LemmaCase::DepressionHalf, LemmaInstance::Bits { joint, .. }) => {
            check_distribution(joint)?;
            let (a1, b1) = (joint[2] + joint[3], joint[1] + joint[3]);
            if a1 * b1 < 2.0 * joint[3] {
                return Err(hypothesis("joint mass at (1,1) exceeds half the product of marginals"));
            }
            let lhs = bits_information(joint);
            let rhs = a1 * b1 / 5.0;
            Ok(LemmaOutcome { lhs, rhs, holds: lhs >= rhs - TOL })
        }
        (LemmaCase::DepressionProduct, LemmaInstance::Bits { joint, sigma: Some((sa, sb)) }) => {
            check_distribution(joint)?;
            if !(0.0..=1.0).contains(sa) || !(0.0..=1.0).contains(sb) {
                return Err(hypothesis("reference marginals outside [0,1]"));
            }
            if sa * sb < 4.0 * joint[3] {
                return Err(hypothesis("joint mass at (1,1) exceeds a quarter of the reference"));
            }
            let q = [(1.0 - sa) * (1.0 - sb), (1.0 - sa) * sb, sa * (1.0 - sb), sa * sb];
            let lhs = kl(joint, &q);
            let rhs = sa * sb / 16.0;
            Ok(LemmaOutcome { lhs, rhs, holds: lhs >= rhs - TOL })
        }
        (LemmaCase::PartitionMonotone, LemmaInstance::Partition { atoms, coins }) => {
            let total: f64 = atoms.iter().map(|a| a.p).sum();
            if (total - 1.0).abs() > 1e-9 || coins.is_empty() {
                return Err(hypothesis("not a distribution with at least one coin value"));
            }
            let weight: f64 = coins.iter().map(|c| c.0).sum();
            if (weight - 1.0).abs() > 1e-9 {
                return Err(hypothesis("coin weights do not sum to 1"));
            }
            let mut rhs = 0.0;
            for (w, labels) in coins {
                if labels.len() != atoms.len() {
                    return invalid("one label per atom required");
                }
                check_rectangles(atoms, labels)?;
                rhs += w * conditional_information(atoms, labels);
            }
            let lhs = mutual_information(atoms);
            Ok(LemmaOutcome { lhs, rhs, holds: lhs >= rhs - TOL })
        }
        _ => invalid(format!("instance shape does not match case {case:?}")),
    }
}

fn check_pair(mu: &[f64], sigma: &[f64], event: &[bool]) -> Result<()> {
    if mu.len() != sigma.len() || mu.len() != event.len() {
        return invalid("mismatched lengths");
    }
    check_distribution(mu)?;
    check_distribution(sigma)
}

fn event_masses(mu: &[f64], sigma: &[f64], event: &[bool]) -> (f64, f64) {
    let me = (0..mu.len()).filter(|&i| event[i]).map(|i| mu[i]).sum();
    let se = (0..mu.len()).filter(|&i| event[i]).map(|i| sigma[i]).sum();
    (me, se)
}

fn bits_information(j: &[f64; 4]) -> f64 {
    let atoms: Vec<Atom> = (0..4)
        .filter(|&i| j[i] > 0.0)
        .map(|i| Atom { x: (i >> 1) as u64, y: (i & 1) as u64, p: j[i] })
        .collect();
    mutual_information(&atoms)
}

/// Checks that every label class is a rectangle on the support.
pub fn check_rectangles(atoms: &[Atom], labels: &[u64]) -> Result<()> {
    let mut rows: HashMap<u64, Vec<u64>> = HashMap::new();
    let mut cols: HashMap<u64, std::collections::HashSet<u64>> = HashMap::new();
    for (a, &l) in atoms.iter().zip(labels) {
        rows.entry(a.x).or_default().push(l);
        cols.entry(l).or_default().insert(a.y);
    }
    for v in rows.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    for (a, &l) in atoms.iter().zip(labels) {
        for &other in &rows[&a.x] {
            if other != l && cols[&other].contains(&a.y) {
                return Err(hypothesis(format!(
                    "labels {l} and {other} overlap at ({:#x},{:#x}); not a rectangle partition",
                    a.x, a.y
                )));
            }
        }
    }
    Ok(())
}

/// I(X:Y | R) for a rectangle partition given by labels.
pub fn conditional_information(atoms: &[Atom], labels: &[u64]) -> f64 {
    let mut rect: HashMap<u64, f64> = HashMap::new();
    let mut row: HashMap<(u64, u64), f64> = HashMap::new();
    let mut col: HashMap<(u64, u64), f64> = HashMap::new();
    for (a, &l) in atoms.iter().zip(labels) {
        *rect.entry(l).or_default() += a.p;
        *row.entry((l, a.x)).or_default() += a.p;
        *col.entry((l, a.y)).or_default() += a.p;
    }
    atoms
        .iter()
        .zip(labels)
        .filter(|(a, _)| a.p > 0.0)
        .map(|(a, &l)| a.p * (a.p * rect[&l] / (row[&(l, a.x)] * col[&(l, a.y)])).log2())
        .sum::<f64>()
        .max(0.0)
}

fn random_simplex(rng: &mut impl Rng, len: usize, sparsity: f64) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..len)
            .map(|_| if rng.gen::<f64>() < sparsity { 0.0 } else { -rng.gen::<f64>().max(1e-300).ln() })
            .collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 {
            v.iter_mut().for_each(|p| *p /= s);
            return v;
        }
    }
}

/// Draws a random instance satisfying the hypotheses of `case`.
pub fn random_instance(case: LemmaCase, rng: &mut impl Rng) -> LemmaInstance {
    match case {
        LemmaCase::LogSum | LemmaCase::Restriction => loop {
            let len = rng.gen_range(2..=16);
            let mu = random_simplex(rng, len, 0.2);
            let sigma = random_simplex(rng, len, 0.0);
            let event: Vec<bool> = (0..len).map(|_| rng.gen()).collect();
            if case == LemmaCase::LogSum || mu.iter().zip(&event).any(|(p, e)| *e && *p > 0.0) {
                return LemmaInstance::Pair { mu, sigma, event };
            }
        },
        LemmaCase::DepressionHalf => loop {
            let j = random_simplex(rng, 4, 0.1);
            let joint = [j[0], j[1], j[2], j[3]];
            if (j[2] + j[3]) * (j[1] + j[3]) >= 2.0 * j[3] {
                return LemmaInstance::Bits { joint, sigma: None };
            }
        },
        LemmaCase::DepressionProduct => loop {
            let j = random_simplex(rng, 4, 0.1);
            let (sa, sb): (f64, f64) = (rng.gen(), rng.gen());
            if sa * sb >= 4.0 * j[3] {
                return LemmaInstance::Bits { joint: [j[0], j[1], j[2], j[3]], sigma: Some((sa, sb)) };
            }
        },
        LemmaCase::PartitionMonotone => {
            let side = rng.gen_range(2..=6u64);
            let mut atoms = Vec::new();
            let w = random_simplex(rng, (side * side) as usize, 0.3);
            for x in 0..side {
                for y in 0..side {
                    let p = w[(x * side + y) as usize];
                    if p > 0.0 {
                        atoms.push(Atom { x, y, p });
                    }
                }
            }
            let coins = (0..rng.gen_range(1..=3))
                .map(|_| (1.0, random_protocol_labels(&atoms, side, rng)))
                .collect::<Vec<_>>();
            let c = coins.len() as f64;
            LemmaInstance::Partition { atoms, coins: coins.into_iter().map(|(_, l)| (1.0 / c, l)).collect() }
        }
    }
}

/// Rectangle labels produced by a random protocol tree of random splits.
fn random_protocol_labels(atoms: &[Atom], side: u64, rng: &mut impl Rng) -> Vec<u64> {
    let mut rects: Vec<(u64, u64)> = vec![((1 << side) - 1, (1 << side) - 1)];
    for _ in 0..rng.gen_range(0..6) {
        let i = rng.gen_range(0..rects.len());
        let (r, c) = rects[i];
        let split_rows = rng.gen::<bool>();
        let target = if split_rows { r } else { c };
        let part = target & rng.gen::<u64>();
        if part == 0 || part == target {
            continue;
        }
        if split_rows {
            rects[i] = (part, c);
            rects.push((r & !part, c));
        } else {
            rects[i] = (r, part);
            rects.push((r, c & !part));
        }
    }
    atoms
        .iter()
        .map(|a| rects.iter().position(|&(r, c)| r >> a.x & 1 == 1 && c >> a.y & 1 == 1).unwrap() as u64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{make_product, Marginal};

    fn pair(atoms: Vec<(u64, u64, f64)>, n: usize) -> BipartiteDist {
        BipartiteDist::from_atoms(n, atoms.into_iter().map(|(x, y, p)| Atom { x, y, p }).collect()).unwrap()
    }

    #[test]
    fn correlated_bit_is_one_bit() {
        let d = pair(vec![(0, 0, 0.5), (1, 1, 0.5)], 1);
        let r = divergence_suite(&d, None).unwrap();
        assert!((r.i - 1.0).abs() < 1e-12 && (r.i_inf - 1.0).abs() < 1e-12);
        let t = substate_truncate(&d, 0.5).unwrap();
        assert!(t.tv <= 0.5 && t.i_inf <= 16.0);
    }

    #[test]
    fn product_has_no_information() {
        let a = Marginal::table(vec![(0, 0.3), (1, 0.7)]).unwrap();
        let b = Marginal::table(vec![(0, 0.6), (1, 0.4)]).unwrap();
        let d = make_product(1, a, b).unwrap();
        let r = divergence_suite(&d, None).unwrap();
        assert!(r.i.abs() < 1e-12 && r.i_inf.abs() < 1e-12);
        let t = substate_truncate(&d, 0.25).unwrap();
        assert_eq!(t.tv, 0.0);
    }

    #[test]
    fn support_violation_is_flagged() {
        let mu = pair(vec![(0, 0, 0.5), (1, 1, 0.5)], 1);
        let sigma = pair(vec![(0, 0, 1.0)], 1);
        let r = divergence_suite(&mu, Some(&sigma)).unwrap();
        assert!(!r.finite && r.d.is_infinite());
        assert_eq!(r.witnesses, vec![(1, 1)]);
    }

    #[test]
    fn single_rectangle_is_tight() {
        let atoms = vec![Atom { x: 0, y: 0, p: 0.4 }, Atom { x: 1, y: 1, p: 0.6 }];
        let inst = LemmaInstance::Partition { atoms, coins: vec![(1.0, vec![0, 0])] };
        let o = lemma_verifier(LemmaCase::PartitionMonotone, &inst).unwrap();
        assert!((o.lhs - o.rhs).abs() < 1e-12);
    }

    #[test]
    fn overlapping_labels_are_rejected() {
        let atoms = vec![
            Atom { x: 0, y: 0, p: 0.25 },
            Atom { x: 0, y: 1, p: 0.25 },
            Atom { x: 1, y: 0, p: 0.25 },
            Atom { x: 1, y: 1, p: 0.25 },
        ];
        let inst = LemmaInstance::Partition { atoms, coins: vec![(1.0, vec![0, 1, 1, 0])] };
        assert!(matches!(
            lemma_verifier(LemmaCase::PartitionMonotone, &inst),
            Err(CoreError::HypothesisViolation(_))
        ));
    }

    #[test]
    fn depression_product_example() {
        let inst = LemmaInstance::Bits { joint: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0], sigma: Some((0.5, 0.5)) };
        let o = lemma_verifier(LemmaCase::DepressionProduct, &inst).unwrap();
        assert!(o.holds && o.rhs == 1.0 / 64.0);
    }
}
