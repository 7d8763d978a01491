use std::sync::Arc;

use cclab::dist::make_sparse_fn;
use cclab::sparse::*;
use cclab::{monte_carlo, CommProblem, CoreError, DenseMatrix, SparseMatrix};
use fixedbitset::FixedBitSet;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn full(side: usize) -> FixedBitSet {
    let mut s = FixedBitSet::with_capacity(side);
    s.insert_range(..);
    s
}

fn sparse_problem(n: usize, pairs: Vec<(u32, u32)>) -> CommProblem {
    CommProblem::sparse(SparseMatrix::from_pairs(n, pairs)).unwrap()
}

/// A random matrix with a planted all-ones block on the first `block` rows and columns.
fn planted(n: usize, block: u32, noise: usize, seed: u64) -> CommProblem {
    let side = 1u32 << n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs: Vec<(u32, u32)> = (0..block).flat_map(|r| (0..block).map(move |c| (r, c))).collect();
    for _ in 0..noise {
        pairs.push((rng.gen_range(0..side), rng.gen_range(0..side)));
    }
    sparse_problem(n, pairs)
}

// ---------------------------------------------------------------- goodness

#[test]
fn all_zero_matrix_is_good() {
    let p = sparse_problem(3, vec![]);
    let rep = goodness_audit(&p, 1.0, AuditMode::ExhaustiveTiny, 8).unwrap();
    assert_eq!(rep.max_ratio, 0.0);
    assert!(rep.violations.is_empty());
}

#[test]
fn all_ones_matrix_violates_small_constant() {
    let pairs = (0..8u32).flat_map(|r| (0..8u32).map(move |c| (r, c))).collect();
    let p = sparse_problem(3, pairs);
    let rep = goodness_audit(&p, 1.0, AuditMode::ExhaustiveTiny, 8).unwrap();
    assert!(!rep.violations.is_empty());
    // The full 8x8 rectangle has 64 ones against a budget of 8.
    assert!((rep.max_ratio - 8.0).abs() < 1e-9);
    let ok = goodness_audit(&p, 8.0, AuditMode::ExhaustiveTiny, 8).unwrap();
    assert!(ok.violations.is_empty());
}

#[test]
fn exhaustive_audit_rejects_large_n() {
    let p = sparse_problem(5, vec![(0, 0)]);
    assert!(matches!(goodness_audit(&p, 1.0, AuditMode::ExhaustiveTiny, 4), Err(CoreError::UnsupportedSize(_))));
}

#[test]
fn sampled_audit_finds_planted_block() {
    // Random row sets of size 256 catch about 100 block rows.
    let p = planted(10, 400, 2000, 3);
    let rep = goodness_audit(&p, 16.0, AuditMode::Sampled { per_profile: 50, seed: 1 }, goodness_bound(10)).unwrap();
    assert!(!rep.violations.is_empty(), "max ratio {}", rep.max_ratio);
}

#[test]
fn desk_instances_pass_sampled_audit() {
    let c = SparseConstants::default();
    for seed in 0..2 {
        let inst = make_sparse_fn(12, 100.0, seed).unwrap();
        let rep = goodness_audit(&inst.problem, c.c_good, AuditMode::Sampled { per_profile: 200, seed }, goodness_bound(12)).unwrap();
        assert!(rep.violations.is_empty(), "seed {seed}: ratio {}", rep.max_ratio);
        assert!(rep.max_ratio > 0.0 && rep.audited > 0.0);
    }
}

// ---------------------------------------------------------------- peeling

#[test]
fn light_rows_leave_at_level_one() {
    let p = sparse_problem(4, vec![(0, 0), (0, 1), (1, 1), (2, 3)]);
    let ch = peel_chain(&p, &full(16), &full(16), 3).unwrap();
    assert_eq!(ch.sizes().last(), Some(&(0, 0)));
    assert!(ch.row_index.iter().all(|&i| i == 1));
    assert!(ch.col_index.iter().all(|&j| j == 1));
    assert!(!ch.has_fixed_point());
}

#[test]
fn rows_outside_a0_keep_outside_marker() {
    let p = sparse_problem(3, vec![(0, 0)]);
    let mut a0 = FixedBitSet::with_capacity(8);
    a0.insert(0);
    let ch = peel_chain(&p, &a0, &full(8), 1).unwrap();
    assert_eq!(ch.row_index[1], OUTSIDE);
    assert!(peel_chain(&p, &FixedBitSet::with_capacity(8), &full(8), 1).is_err());
}

#[test]
fn planted_block_is_a_fixed_point() {
    let p = planted(10, 40, 500, 5);
    let ch = peel_chain(&p, &full(1024), &full(1024), 30).unwrap();
    assert!(ch.has_fixed_point());
    for r in 0..40 {
        assert_eq!(ch.row_index[r], NEVER);
        assert_eq!(ch.col_index[r], NEVER);
    }
    let strict = peel_chain(&p, &full(1024), &full(1024), SparseConstants::paper().t).unwrap();
    assert!(!strict.has_fixed_point());
}

#[test]
fn chain_on_desk_instance_shrinks() {
    let c = SparseConstants::default();
    let inst = make_sparse_fn(12, 100.0, 0).unwrap();
    let side = 1 << 12;
    let mut a0 = FixedBitSet::with_capacity(side);
    a0.insert_range(..64);
    let ch = peel_chain(&inst.problem, &a0, &full(side), c.t).unwrap();
    let again = peel_chain(&inst.problem, &a0, &full(side), c.t).unwrap();
    assert_eq!(ch.sizes(), again.sizes());
    assert_eq!(ch.row_index, again.row_index);
    assert!(ch.len() >= 1 && ch.len() <= 12);
    assert!(!ch.has_fixed_point());
    assert!(shrink_check(&inst.problem, &ch, c.c_good, goodness_bound(12)).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chain_is_nested_and_indices_agree(seed in 0u64..1000, t in 1usize..6, ones in 0usize..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pairs = (0..ones).map(|_| (rng.gen_range(0..64u32), rng.gen_range(0..64u32))).collect();
        let p = sparse_problem(6, pairs);
        let ch = peel_chain(&p, &full(64), &full(64), t).unwrap();
        for i in 1..ch.a.len() {
            prop_assert!(ch.a[i].is_subset(&ch.a[i - 1]));
            prop_assert!(ch.b[i].is_subset(&ch.b[i - 1]));
        }
        for x in 0..64 {
            let i = ch.row_index[x];
            if i == NEVER {
                prop_assert!(ch.a.last().unwrap().contains(x));
            } else {
                prop_assert!(i >= 1);
                prop_assert!(ch.a[i as usize - 1].contains(x) && !ch.a[i as usize].contains(x));
            }
        }
    }
}

// ---------------------------------------------------------------- low-information protocol

#[test]
fn light_inputs_are_rejected_in_r00() {
    let inst = make_sparse_fn(12, 100.0, 1).unwrap();
    let nu = mixed_hard_dist(&inst.matrix, 512, 512, 0.0, 4).unwrap();
    let p = sparse_low_info_run(&inst.problem, &nu, 0.1, SparseConstants::default()).unwrap();
    assert_eq!(p.heavy_rows.count_ones(..), 0);
    assert_eq!(p.heavy_cols.count_ones(..), 0);
    let cell = monte_carlo(&p, &inst.problem, &nu, 2000, 7, None).unwrap();
    assert_eq!(cell.max_bits, 2);
    // Every error is a rejected 1-input, about d/2^n of the mass.
    let r00 = p.rejected_one_mass(&nu.support().unwrap());
    assert!(r00 > 0.0 && r00 < 0.05);
    assert!((cell.mean_error - r00).abs() < 0.01);
    assert_eq!(cell.error_notes.iter().map(|(_, c)| c).sum::<u64>(), cell.errors);
}

#[test]
fn desk_instances_meet_error_and_bit_bounds() {
    let c = SparseConstants::default();
    let eps = 0.1;
    let budget = eps * eps * eps * 12.0;
    for (seed, (rows, cols)) in [(0u64, (128usize, 512usize)), (1, (256, 256)), (2, (1024, 1024))] {
        let inst = make_sparse_fn(12, 100.0, seed).unwrap();
        let (nu, info) = mixed_hard_with_budget(&inst.matrix, rows, cols, budget, seed).unwrap();
        assert!(info <= budget + 1e-12);
        let p = sparse_low_info_run(&inst.problem, &nu, eps, c).unwrap();
        let cell = monte_carlo(&p, &inst.problem, &nu, 4000, seed, None).unwrap();
        assert!(cell.mean_error <= eps, "seed {seed}: error {}", cell.mean_error);
        assert!(cell.max_bits <= p.max_bits());
        let bd = error_breakdown(&p, &inst.problem, &nu, 4000, seed).unwrap();
        assert_eq!(bd.observed, cell.mean_error);
        assert!(bd.consistent(), "{bd:?}");
    }
}

#[test]
fn breakdown_matches_on_correlated_inputs() {
    let inst = make_sparse_fn(12, 100.0, 3).unwrap();
    let nu = mixed_hard_dist(&inst.matrix, 256, 256, 0.3, 3).unwrap();
    let p = sparse_low_info_run(&inst.problem, &nu, 0.2, SparseConstants::default()).unwrap();
    let bd = error_breakdown(&p, &inst.problem, &nu, 3000, 11).unwrap();
    assert!(bd.observed > 0.1, "{bd:?}");
    assert!((bd.r00_measured - bd.r00_exact).abs() < 0.04);
    assert!(bd.consistent(), "{bd:?}");
}

#[test]
fn low_info_rejects_mismatched_n() {
    let inst = make_sparse_fn(10, 30.0, 0).unwrap();
    let other = make_sparse_fn(11, 30.0, 0).unwrap();
    let nu = mixed_hard_dist(&other.matrix, 64, 64, 0.0, 0).unwrap();
    assert!(sparse_low_info_run(&inst.problem, &nu, 0.1, SparseConstants::default()).is_err());
}

// ---------------------------------------------------------------- O(log d) protocol

#[test]
fn logd_one_inputs_always_accept() {
    let inst = make_sparse_fn(12, 100.0, 0).unwrap();
    let p = sparse_logd_run(&inst.problem, 100.0).unwrap();
    assert_eq!(p.bits, 14);
    let cell = monte_carlo(&p, &inst.problem, &OneInputs { matrix: inst.matrix.clone() }, 2000, 1, None).unwrap();
    assert_eq!(cell.errors, 0);
    assert_eq!(cell.max_bits, 14);
}

#[test]
fn logd_false_positives_are_rare() {
    let inst = make_sparse_fn(12, 100.0, 0).unwrap();
    let d = 100.0;
    let p = sparse_logd_run(&inst.problem, d).unwrap();
    let trials = 20_000;
    let cell = monte_carlo(&p, &inst.problem, &ZeroInputs { matrix: inst.matrix.clone() }, trials, 2, None).unwrap();
    let bound = 2.0 / d;
    let sigma = (bound * (1.0 - bound) / trials as f64).sqrt();
    assert!(cell.mean_error <= bound + 3.0 * sigma, "{}", cell.mean_error);
}

#[test]
fn logd_empty_column_rejects() {
    let m = Arc::new(SparseMatrix::from_pairs(6, vec![(1, 0), (2, 0), (5, 9)]));
    let p = CommProblem::sparse((*m).clone()).unwrap();
    let proto = sparse_logd_run(&p, 4.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..200 {
        let x = cclab::engine::index_to_set(rng.gen_range(0..64), 6);
        let y = cclab::engine::index_to_set(3, 6);
        let r = cclab::run_protocol(&proto, &p, &x, &y, rng.gen()).unwrap();
        assert!(!r.output);
    }
    assert!(sparse_logd_run(&p, 1.0).is_err());
}

// ---------------------------------------------------------------- discrepancy

#[test]
fn all_ones_discrepancy_is_one() {
    let f = DenseMatrix::from_fn(3, 3, |_, _| true);
    let d = one_sided_discrepancy(&f, &[1.0 / 9.0; 9]).unwrap();
    assert!((d.value - 1.0).abs() < 1e-12);
    assert_eq!(d.rows.len(), 3);
    assert!(!d.balanced);
}

#[test]
fn identity_discrepancy_is_a_quarter() {
    let f = DenseMatrix::from_fn(2, 2, |r, c| r == c);
    let d = one_sided_discrepancy(&f, &[0.25; 4]).unwrap();
    assert!((d.value - 0.25).abs() < 1e-12);
    assert!(d.balanced);
    assert!((d.bound_bits - 2.0).abs() < 1e-12);
}

#[test]
fn discrepancy_rejects_large_matrices() {
    let f = DenseMatrix::zeros(9, 9);
    assert!(matches!(one_sided_discrepancy(&f, &[1.0 / 81.0; 81]), Err(CoreError::UnsupportedSize(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clearing_a_one_never_raises_discrepancy(bits in proptest::collection::vec(any::<bool>(), 16), w in proptest::collection::vec(0.01f64..1.0, 16), k in 0usize..16) {
        let total: f64 = w.iter().sum();
        let mu: Vec<f64> = w.iter().map(|v| v / total).collect();
        let f = DenseMatrix::from_fn(4, 4, |r, c| bits[r * 4 + c]);
        let mut g = f.clone();
        g.set(k / 4, k % 4, false);
        let (df, dg) = (one_sided_discrepancy(&f, &mu).unwrap(), one_sided_discrepancy(&g, &mu).unwrap());
        prop_assert!(dg.value <= df.value + 1e-12);
    }
}
