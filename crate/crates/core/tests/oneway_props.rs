use cclab::dist::{Atom, BipartiteDist};
use cclab::engine::{index_to_set, run_protocol};
use cclab::info::mutual_information;
use cclab::oneway::*;
use cclab::{fit_exponent, monte_carlo, CommProblem, DenseMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(side: usize, density: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let bits: Vec<bool> = (0..side * side).map(|_| rng.gen::<f64>() < density).collect();
    DenseMatrix::from_fn(side, side, |r, c| bits[r * side + c])
}

/// Tries every column subset of each size in turn.
fn naive_vc(m: &DenseMatrix) -> usize {
    let cols = m.cols();
    let mut best = 0;
    for d in 1..=cols {
        if 1usize << d > m.rows() {
            break;
        }
        let mut found = false;
        let mut idx: Vec<usize> = (0..d).collect();
        loop {
            let mut seen = vec![false; 1 << d];
            for r in 0..m.rows() {
                seen[idx.iter().enumerate().map(|(b, &c)| (m.get(r, c) as usize) << b).sum::<usize>()] = true;
            }
            if seen.iter().all(|&v| v) {
                found = true;
                break;
            }
            let Some(i) = (0..d).rev().find(|&i| idx[i] < cols - d + i) else { break };
            idx[i] += 1;
            for j in i + 1..d {
                idx[j] = idx[j - 1] + 1;
            }
        }
        if !found {
            break;
        }
        best = d;
    }
    best
}

fn distance(m: &DenseMatrix, mu_b: &[f64], a: usize, b: usize) -> f64 {
    (0..m.cols()).filter(|&c| m.get(a, c) != m.get(b, c)).map(|c| mu_b[c]).sum()
}

#[test]
fn identity_vc() {
    let p = CommProblem::dense(3, DenseMatrix::from_fn(8, 8, |r, c| r == c)).unwrap();
    assert_eq!(vc_dimension(&p).unwrap(), 1);
    assert!(vc_dimension(&CommProblem::disj(3)).is_err());
}

#[test]
fn vc_agrees_with_naive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let m = random_matrix(16, rng.gen_range(0.1..0.9), &mut rng);
        assert_eq!(vc_of_matrix(&m), naive_vc(&m));
    }
    for _ in 0..200 {
        let m = random_matrix(64, rng.gen_range(0.01..0.04), &mut rng);
        assert_eq!(vc_of_matrix(&m), naive_vc(&m));
    }
}

#[test]
fn families_respect_their_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for family in VcFamily::ALL {
        let vcs: Vec<usize> = (0..20).map(|_| vc_of_matrix(&random_family_matrix(family, &mut rng))).collect();
        assert!(vcs.iter().all(|&v| v <= family.vc_bound()));
        assert!(vcs.contains(&family.vc_bound()));
    }
}

#[test]
fn nets_are_valid_and_within_sauer() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for t in 0..24 {
        let m = random_family_matrix(VcFamily::ALL[t % 4], &mut rng);
        let wb = random_weights(64, &mut rng);
        let p = CommProblem::dense(6, m.clone()).unwrap();
        for eps in [0.25, 0.0625, 1.0 / 128.0] {
            for method in [NetMethod::SampleDedupe, NetMethod::GreedyCover] {
                let net = build_eps_net(&p, &wb, eps, method, t as u64).unwrap();
                for x in 0..64 {
                    let closest = net.net.iter().map(|&r| distance(&m, &wb, x, r)).fold(f64::INFINITY, f64::min);
                    assert!(closest <= eps + 1e-12);
                    assert!((distance(&m, &wb, x, net.net[net.assign[x]]) - closest).abs() < 1e-12);
                }
                if method == NetMethod::SampleDedupe {
                    assert_eq!(net.samples, sample_count(net.vc, eps, SAMPLE_CONSTANT));
                    assert!(net.net.len() as f64 <= sauer_phi(net.samples, net.vc as u64));
                }
            }
        }
    }
}

#[test]
fn greedy_breaks_ties_by_lowest_row() {
    // Rows 0 and 1 are identical; both cover the same rows.
    let m = DenseMatrix::from_fn(4, 4, |r, c| (r >= 2 && c == r) || (r < 2 && c == 0));
    let p = CommProblem::dense(2, m).unwrap();
    let net = build_eps_net(&p, &[0.25; 4], 0.01, NetMethod::GreedyCover, 0).unwrap();
    assert_eq!(net.net, vec![0, 2, 3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn dedupe_nets_grow_as_eps_shrinks(seed in any::<u64>(), fam in 0usize..4, j in 2i32..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_family_matrix(VcFamily::ALL[fam], &mut rng);
        let wb = random_weights(64, &mut rng);
        let p = CommProblem::dense(6, m).unwrap();
        let coarse = build_eps_net(&p, &wb, 0.5f64.powi(j), NetMethod::SampleDedupe, seed).unwrap();
        let fine = build_eps_net(&p, &wb, 0.5f64.powi(j + 1), NetMethod::SampleDedupe, seed).unwrap();
        prop_assume!(coarse.attempts == 1 && fine.attempts == 1);
        prop_assert!(fine.log_size >= coarse.log_size);
    }
}

#[test]
fn net_protocol_sends_one_message() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = random_family_matrix(VcFamily::Intervals, &mut rng);
    let (wa, wb) = (random_weights(64, &mut rng), random_weights(64, &mut rng));
    let mu = index_dist(6, &wa, &wb).unwrap();
    let p = CommProblem::dense(6, m).unwrap();
    let proto = oneway_net_run(&p, &mu, 0.1, NetMethod::GreedyCover, 0).unwrap();
    let bits = proto.net.message_bits() as u64;
    for s in 0..50 {
        let (x, y) = mu.sample(&mut ChaCha8Rng::seed_from_u64(s));
        let r = run_protocol(&proto, &p, &x, &y, s).unwrap();
        assert_eq!(r.bits, bits);
        assert!(r.rounds <= 1);
    }
    let exact = proto.net.exact_error(&wa);
    assert!(exact <= 0.1);
    let cell = monte_carlo(&proto, &p, &mu, 40_000, 5, None).unwrap();
    assert!((cell.mean_error - exact).abs() <= 4.0 * (exact * (1.0 - exact) / 40_000.0).sqrt() + 1e-9);
    assert!((proto.error_under(&mu.support().unwrap()) - exact).abs() < 1e-12);
}

#[test]
fn net_of_one_row_sends_nothing() {
    let p = CommProblem::dense(6, DenseMatrix::from_fn(64, 64, |_, c| c % 3 == 0)).unwrap();
    let w = vec![1.0 / 64.0; 64];
    let mu = index_dist(6, &w, &w).unwrap();
    let proto = oneway_net_run(&p, &mu, 0.25, NetMethod::SampleDedupe, 0).unwrap();
    let r = run_protocol(&proto, &p, &index_to_set(5, 6), &index_to_set(9, 6), 0).unwrap();
    assert_eq!((r.bits, r.output), (0, true));
}

#[test]
fn pac_baseline_costs_its_sample_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = random_family_matrix(VcFamily::Thresholds, &mut rng);
    assert_eq!(vc_of_matrix(&m), 1);
    let (wa, wb) = (random_weights(64, &mut rng), random_weights(64, &mut rng));
    let mu = index_dist(6, &wa, &wb).unwrap();
    let p = CommProblem::dense(6, m).unwrap();
    let pac = oneway_pac_run(&p, &mu, 0.125).unwrap();
    assert_eq!(pac.samples, 96);
    let net = oneway_net_run(&p, &mu, 0.125, NetMethod::GreedyCover, 0).unwrap();
    assert!((net.net.message_bits() as u64) < pac.samples);
    let r = run_protocol(&pac, &p, &index_to_set(3, 6), &index_to_set(40, 6), 7).unwrap();
    assert_eq!(r.bits, 96);
    assert!(pac.exact_error(&wa, 20, 1) <= 0.125);
}

#[test]
fn pac_on_constant_matrix_is_exact() {
    let p = CommProblem::dense(3, DenseMatrix::from_fn(8, 8, |_, _| true)).unwrap();
    let w = vec![0.125; 8];
    let mu = index_dist(3, &w, &w).unwrap();
    let pac = oneway_pac_run(&p, &mu, 0.25).unwrap();
    assert_eq!(pac.samples, 0);
    assert_eq!(pac.exact_error(&w, 5, 0), 0.0);
}

#[test]
fn pac_error_on_families() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for t in 0..8 {
        let m = random_family_matrix(VcFamily::ALL[t % 4], &mut rng);
        let (wa, wb) = (random_weights(64, &mut rng), random_weights(64, &mut rng));
        let mu = index_dist(6, &wa, &wb).unwrap();
        let p = CommProblem::dense(6, m).unwrap();
        for eps in [0.25, 0.0625] {
            assert!(oneway_pac_run(&p, &mu, eps).unwrap().exact_error(&wa, 10, t as u64) <= eps);
        }
    }
}

#[test]
fn pac_bits_follow_the_sample_count() {
    // c ∝ (1/ε)·log2(1/ε): the log factor lifts the slope above 1 on this range.
    let pts: Vec<(f64, f64)> = (2..=7).map(|j| (2f64.powi(j), sample_count(3, 0.5f64.powi(j), SAMPLE_CONSTANT) as f64)).collect();
    let fit = fit_exponent(&pts).unwrap();
    assert!((fit.slope - 1.36).abs() < 0.02, "{fit:?}");
}

fn correlated(n: usize, strength: f64, rng: &mut ChaCha8Rng) -> BipartiteDist {
    let side = 1u64 << n;
    let atoms: Vec<Atom> = (0..side)
        .flat_map(|x| (0..side).map(move |y| (x, y)))
        .map(|(x, y)| Atom { x, y, p: (rng.gen::<f64>() + 0.1) * if x % 4 == y % 4 { strength } else { 1.0 } })
        .collect();
    BipartiteDist::from_weights(n, atoms).unwrap()
}

#[test]
fn bounded_information_composition() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..50 {
        let m = random_matrix(32, 0.5, &mut rng);
        let p = CommProblem::dense(5, m).unwrap();
        let mu = correlated(5, rng.gen_range(1.0..4.0), &mut rng);
        let run = oneway_bounded_info_run(&p, &mu, 0.25, SHRINK_CONSTANT, NetMethod::GreedyCover, seed).unwrap();
        assert!(run.information <= 1.0);
        let atoms = mu.support().unwrap();
        assert!((run.information - mutual_information(&atoms)).abs() < 1e-12);
        assert!(run.protocol.error_under(&atoms) <= 0.25);
    }
}

#[test]
fn product_input_keeps_eps() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let m = random_family_matrix(VcFamily::Rectangles, &mut rng);
    let (wa, wb) = (random_weights(64, &mut rng), random_weights(64, &mut rng));
    let mu = index_dist(6, &wa, &wb).unwrap();
    let p = CommProblem::dense(6, m).unwrap();
    let run = oneway_bounded_info_run(&p, &mu, 0.25, SHRINK_CONSTANT, NetMethod::SampleDedupe, 3).unwrap();
    assert!(run.information < 1e-9);
    assert!((run.eps_prime - 0.25).abs() < 1e-12);
    let direct = oneway_net_run(&p, &mu, 0.25, NetMethod::SampleDedupe, 3).unwrap();
    assert_eq!(run.protocol.net.net, direct.net.net);
}

#[test]
fn tiny_eps_prime_uses_the_exact_net() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = random_matrix(32, 0.5, &mut rng);
    let p = CommProblem::dense(5, m).unwrap();
    let mu = correlated(5, 4.0, &mut rng);
    let run = oneway_bounded_info_run(&p, &mu, 0.1, SHRINK_CONSTANT, NetMethod::SampleDedupe, 0).unwrap();
    assert!(run.protocol.net.exact);
    assert_eq!(run.protocol.error_under(&mu.support().unwrap()), 0.0);
}
