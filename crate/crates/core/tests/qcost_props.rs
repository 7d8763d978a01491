use cclab::dist::{
    make_product, make_razborov, zero_pad_transform, Atom, BipartiteDist, Marginal, RazborovParams, Variant,
};
use cclab::engine::{index_to_set, run_protocol, set_from, set_to_index, Set};
use cclab::qcost::*;
use cclab::{fit_exponent, monte_carlo, CommProblem, CoreError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::{Arc, OnceLock};

fn mu_15_1() -> BipartiteDist {
    make_razborov(RazborovParams::new(15, 1.0).unwrap(), Variant::Mu).unwrap()
}

fn table_15_1() -> &'static PositionTable {
    static T: OnceLock<PositionTable> = OnceLock::new();
    T.get_or_init(|| PositionTable::new(&mu_15_1()).unwrap())
}

fn random_joint(n: usize, rng: &mut ChaCha8Rng) -> BipartiteDist {
    let side = 1u64 << n;
    let atoms: Vec<Atom> = (0..3 * side)
        .map(|_| {
            let x = rng.gen_range(0..side);
            let y = if rng.gen::<f64>() < 0.4 { x & rng.gen_range(0..side) } else { rng.gen_range(0..side) };
            Atom { x, y, p: rng.gen::<f64>() + 0.01 }
        })
        .collect();
    BipartiteDist::from_weights(n, atoms).unwrap()
}

#[test]
fn product_first_position_matches_the_marginal() {
    let a = Marginal::table(vec![(0b0011, 0.5), (0b0101, 0.3), (0b1000, 0.2)]).unwrap();
    let b = Marginal::table(vec![(0b0001, 0.25), (0b0110, 0.75)]).unwrap();
    let mu = make_product(4, a, b).unwrap();
    let table = PositionTable::new(&mu).unwrap();
    for x in [0b0011u64, 0b0101, 0b1000] {
        assert!((table.q_alice(x, 0) - 0.25).abs() < 1e-12);
    }
    let labels = classify_positions(&table, &index_to_set(0b0011, 4), &index_to_set(0b0001, 4), &QCostConfig::new(0.5, 0.0).unwrap());
    assert!(!labels[0].bad_x);
}

#[test]
fn disjoint_support_has_no_intersection_mass() {
    let nu = make_razborov(RazborovParams::new(15, 1.0).unwrap(), Variant::Nu).unwrap();
    let table = PositionTable::new(&nu).unwrap();
    let stats = position_stats(&table, Context::Unconditioned).unwrap();
    assert!(stats.rows.iter().flatten().all(|l| l.r == 0.0));
}

#[test]
fn unconditioned_families_on_mu_15_1() {
    let table = table_15_1();
    let stats = position_stats(table, Context::Unconditioned).unwrap();
    let sum: f64 = stats.rows.iter().flatten().map(|l| l.r * l.s).sum();
    assert!(sum <= 1.0 + 1e-12);
    // Σ r_i·s_i is the intersection probability.
    assert!((sum - 0.25).abs() < 1e-9, "{sum}");
    assert!(stats.s_recursion_gap() < 1e-9);
    assert!(stats.identity_gap() < 1e-9);
    assert!((stats.rows[0].unwrap().s - 1.0).abs() < 1e-12);
}

#[test]
fn input_contexts_satisfy_the_identities() {
    let table = table_15_1();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let atoms = table.atoms();
    for _ in 0..50 {
        let a = atoms[rng.gen_range(0..atoms.len())];
        for ctx in [Context::AliceInput(a.x), Context::BobInput(a.y)] {
            let stats = position_stats(table, ctx).unwrap();
            assert!(stats.s_recursion_gap() < 1e-9);
            assert!(stats.identity_gap() < 1e-9);
        }
        for ctx in [Context::AlicePrefix(a.x), Context::BobPrefix(a.y), Context::Prefixes { x: a.x, y: a.y }] {
            let stats = position_stats(table, ctx).unwrap();
            assert!(stats.identity_gap() < 1e-9);
            assert!(stats.rows.iter().flatten().all(|l| [l.s, l.p, l.q, l.p_prime, l.q_prime, l.r]
                .iter()
                .all(|v| (0.0..=1.0 + 1e-12).contains(v))));
        }
    }
}

#[test]
fn zero_mass_context_is_an_error() {
    assert!(matches!(position_stats(table_15_1(), Context::AliceInput(0b1)), Err(CoreError::EmptyConditioning)));
}

#[test]
fn closed_form_matches_the_table() {
    for k in [1.0, 2.0] {
        let params = RazborovParams::new(15, k).unwrap();
        let mu = make_razborov(params, Variant::Mu).unwrap();
        let table = PositionTable::new(&mu).unwrap();
        let PositionModel::Razborov { m, .. } = PositionModel::from_dist(&mu).unwrap() else { panic!() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let atoms = table.atoms();
        for _ in 0..40 {
            let a = atoms[rng.gen_range(0..atoms.len())];
            let x = index_to_set(a.x, 15);
            for (rank, i) in x.ones().enumerate() {
                let want = 1.0 / (4 * m - rank) as f64;
                assert!((table.q_alice(a.x, i) - want).abs() < 1e-12);
            }
            let y = index_to_set(a.y, 15);
            for (rank, i) in y.ones().enumerate() {
                assert!((table.p_bob(a.y, i) - 1.0 / (4 * m - rank) as f64).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn blocks_on_simple_inputs() {
    let mu = mu_15_1();
    let model = PositionModel::from_dist(&mu).unwrap();
    let config = QCostConfig::new(0.25, 1.0).unwrap();
    let empty = Set::with_capacity(15);
    let (ca, _) = interesting_blocks(&model, &empty, &set_from(15, &[0, 1, 2]), &config);
    assert!(ca.is_empty());
    // A threshold above every q leaves nothing to search.
    let loose = QCostConfig::new(0.99, 0.0).unwrap();
    assert!(loose.tau(15) > 1.0 / 12.0);
    let x = set_from(15, &[0, 4, 9]);
    let y = set_from(15, &[4, 5, 6]);
    let (ca, cb) = interesting_blocks(&model, &x, &y, &loose);
    assert!(ca.is_empty() && cb.is_empty());
    let p = qdisj(&mu, loose).unwrap();
    let r = run_protocol(&p, &CommProblem::disj(15), &x, &y, 0).unwrap();
    assert_eq!((r.output, r.bits), (true, 0));
}

#[test]
fn intersection_lies_in_the_blocks() {
    let mu = mu_15_1();
    let model = PositionModel::from_dist(&mu).unwrap();
    let config = QCostConfig::new(0.25, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut hits, mut pairs) = (0, 0);
    while pairs < 2000 {
        let (x, y) = mu.sample(&mut rng);
        let Some(i) = x.intersection(&y).next() else { continue };
        pairs += 1;
        let (ca, cb) = interesting_blocks(&model, &x, &y, &config);
        hits += (ca.contains(&i) || cb.contains(&i)) as u32;
    }
    assert!(hits as f64 / pairs as f64 >= 0.9);
}

#[test]
fn empty_inputs_cost_nothing() {
    let p = qdisj(&mu_15_1(), QCostConfig::new(0.25, 1.0).unwrap()).unwrap();
    let e = Set::with_capacity(15);
    let r = run_protocol(&p, &CommProblem::disj(15), &e, &e, 3).unwrap();
    assert_eq!((r.output, r.bits), (true, 0));
}

#[test]
fn witnesses_in_the_blocks_are_found() {
    let p = qdisj(&mu_15_1(), QCostConfig::new(0.25, 1.0).unwrap()).unwrap();
    let x = set_from(15, &[1, 6, 11]);
    let y = set_from(15, &[2, 6, 13]);
    let found: u32 = (0..10_000).map(|s| !run_protocol(&p, &CommProblem::disj(15), &x, &y, s).unwrap().output as u32).sum();
    assert!(found as f64 / 10_000.0 >= 1.0 - 2.0 * 0.25);
}

#[test]
fn false_intersections_come_only_from_search_error() {
    let eps = 0.25;
    let p = qdisj(&mu_15_1(), QCostConfig::new(eps, 1.0).unwrap()).unwrap();
    let x = set_from(15, &[1, 6, 11]);
    let y = set_from(15, &[2, 7, 13]);
    let trials = 20_000.0;
    let wrong: f64 = (0..20_000).map(|s| !run_protocol(&p, &CommProblem::disj(15), &x, &y, s).unwrap().output as u32 as f64).sum();
    let rate = wrong / trials;
    let sigma = (rate * (1.0 - rate) / trials).sqrt();
    assert!(rate <= 2.0 * eps + 3.0 * sigma);
}

#[test]
fn measured_error_under_mu() {
    let mu = mu_15_1();
    let p = qdisj(&mu, QCostConfig::new(0.25, 1.0).unwrap()).unwrap();
    let cell = monte_carlo(&p, &CommProblem::disj(15), &mu, 10_000, 1, None).unwrap();
    assert!(cell.mean_error <= 0.35, "{}", cell.mean_error);
}

#[test]
fn halting_thresholds() {
    let mut c = QCostConfig::new(0.25, 1.0).unwrap();
    let tau = c.tau(15);
    assert!((tau - 0.25f64.powi(3) / 30f64.sqrt()).abs() < 1e-15);
    assert!((c.halting_threshold(15) - 2.0 / tau).abs() < 1e-9);
    c.halting = Halting::InverseEpsTau;
    assert!((c.halting_threshold(15) - 4.0 / tau).abs() < 1e-9);
}

proptest! {
    #[test]
    fn search_cost_is_monotone(block in 1usize..500, n in 2usize..4096, e1 in 0.01f64..0.9, e2 in 0.01f64..0.9) {
        let c1 = QCostConfig::new(e1.max(e2), 1.0).unwrap();
        let c2 = QCostConfig::new(e1.min(e2), 1.0).unwrap();
        prop_assert!(c1.search_cost(block, n) <= c1.search_cost(block + 1, n));
        prop_assert!(c1.search_cost(block, n) <= c2.search_cost(block, n));
    }
}

#[test]
fn first_intersection_rarely_bad() {
    let table = table_15_1();
    let mu = mu_15_1();
    let eps = 0.25;
    let config = QCostConfig::new(eps, 1.0).unwrap();
    let model = PositionModel::Table(Arc::new(table.clone()));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let trials = 10_000;
    let mut bad = 0;
    for _ in 0..trials {
        let (x, y) = mu.sample(&mut rng);
        if let Some(i) = x.intersection(&y).next() {
            let labels = classify_with(table, &model, &x, &y, &config);
            bad += (labels[i].bad_x || labels[i].bad_y) as u32;
        }
    }
    let rate = bad as f64 / trials as f64;
    let sigma = (rate * (1.0 - rate) / trials as f64).sqrt();
    assert!(rate <= 2.0 * eps + 3.0 * sigma);
    let report = bad_report(table, eps);
    assert!(report.first_bad_x <= eps && report.first_bad_y <= eps);
    assert!(report.tilde_excess <= 1e-12);
}

#[test]
fn classify_labels_chosen_blocks() {
    let table = table_15_1();
    let config = QCostConfig::new(0.25, 1.0).unwrap();
    let x = set_from(15, &[1, 6, 11]);
    let y = set_from(15, &[2, 6, 13]);
    let labels = classify_positions(table, &x, &y, &config);
    for i in 0..15 {
        assert_eq!(labels[i].chosen, x.contains(i) || y.contains(i));
        assert!(!labels[i].bad_x || x.contains(i));
    }
}

#[test]
fn tilde_bound_on_random_joints() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..30 {
        let mu = random_joint(5, &mut rng);
        let table = PositionTable::new(&mu).unwrap();
        for eps in [0.1, 0.25, 0.5] {
            assert!(bad_report(&table, eps).tilde_excess <= 1e-12);
        }
    }
}

#[test]
fn qinf_bound_on_padded_product() {
    let a = Marginal::bernoulli(vec![0.3, 0.5, 0.2, 0.6]).unwrap();
    let b = Marginal::bernoulli(vec![0.4, 0.1, 0.7, 0.5]).unwrap();
    let mu = zero_pad_transform(&make_product(4, a, b).unwrap()).unwrap();
    let report = qinf_bound_check(&PositionTable::new(&mu).unwrap(), 0.25).unwrap();
    assert!(report.k.abs() < 1e-9);
    assert!(report.holds && report.lhs <= 68.0 / 0.0625);
    assert!(report.identity_gap < 1e-9);
}

#[test]
fn qinf_bound_on_padded_random_joints() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for t in 0..50 {
        let n = 3 + t % 6;
        let mu = zero_pad_transform(&random_joint(n, &mut rng)).unwrap();
        let report = qinf_bound_check(&PositionTable::new(&mu).unwrap(), 0.25).unwrap();
        assert!(report.holds, "lhs {} rhs {}", report.lhs, report.rhs);
        assert!(report.identity_gap < 1e-9);
    }
}

#[test]
fn qinf_hypothesis_is_checked() {
    let atoms: Vec<Atom> = (1..8u64).map(|x| Atom { x, y: x, p: 1.0 }).collect();
    let mu = BipartiteDist::from_weights(3, atoms).unwrap();
    let table = PositionTable::new(&mu).unwrap();
    assert!(matches!(qinf_bound_check(&table, 0.25), Err(CoreError::HypothesisViolation(_))));
}

#[test]
fn blocks_agree_between_models() {
    let mu = mu_15_1();
    let closed = PositionModel::from_dist(&mu).unwrap();
    let exact = PositionModel::Table(Arc::new(table_15_1().clone()));
    let config = QCostConfig::new(0.5, 8.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let (x, y) = mu.sample(&mut rng);
        assert_eq!(interesting_blocks(&closed, &x, &y, &config), interesting_blocks(&exact, &x, &y, &config));
        assert_eq!(set_to_index(&x).count_ones(), 3);
    }
}

#[test]
fn cost_grows_as_fourth_root_times_log() {
    let mut raw = vec![];
    let mut scaled = vec![];
    for n in [15usize, 31, 63, 127] {
        let mu = make_razborov(RazborovParams::new(n, 1.0).unwrap(), Variant::Mu).unwrap();
        let p = qdisj(&mu, QCostConfig::new(0.25, 1.0).unwrap()).unwrap();
        let cell = monte_carlo(&p, &CommProblem::disj(n), &mu, 3000, 5, None).unwrap();
        assert!(cell.mean_error <= 0.35, "n={n} err={}", cell.mean_error);
        raw.push((n as f64, cell.mean_bits));
        scaled.push((n as f64, cell.mean_bits / (n as f64).log2()));
    }
    let fit = fit_exponent(&scaled).unwrap();
    assert!((fit.slope - 0.25).abs() <= 0.1, "{fit:?}");
    assert!(fit_exponent(&raw).unwrap().slope > fit.slope);
}

#[test]
fn structured_mu_beyond_64_bits() {
    let mu = make_razborov(RazborovParams::new(127, 1.0).unwrap(), Variant::Mu).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (x, y) = mu.sample(&mut rng);
        assert!(mu.mass(&x, &y) > 0.0);
    }
}
