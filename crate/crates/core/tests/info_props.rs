use cclab::dist::{Atom, BipartiteDist};
use cclab::info::{lemma_verifier, random_instance, substate_truncate, total_variation, LemmaCase};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_joint(rng: &mut ChaCha8Rng) -> BipartiteDist {
    // Mix of a diagonal-heavy and a random part so information varies widely.
    let lean: f64 = rng.gen();
    let mut atoms = Vec::new();
    for x in 0..8u64 {
        for y in 0..8u64 {
            let base: f64 = if rng.gen::<f64>() < 0.3 { 0.0 } else { rng.gen() };
            let diag = if x == y { 8.0 * lean } else { 0.0 };
            let p = base + diag;
            if p > 0.0 {
                atoms.push(Atom { x, y, p });
            }
        }
    }
    BipartiteDist::from_weights(3, atoms).unwrap()
}

#[test]
fn substate_bounds_on_random_joints() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let eps = 0.25;
    for _ in 0..1000 {
        let mu = random_joint(&mut rng);
        let t = substate_truncate(&mu, eps).unwrap();
        let tv = total_variation(&mu.support().unwrap(), &t.dist.support().unwrap());
        assert!(tv <= eps + 1e-12, "tv {tv}");
        assert!((tv - t.tv).abs() < 1e-9);
        assert!(t.i_inf <= 4.0 * (t.k + 1.0) / eps + 1e-9, "i_inf {} k {}", t.i_inf, t.k);
    }
}

#[test]
fn random_lemma_instances_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for case in LemmaCase::ALL {
        for _ in 0..2000 {
            let inst = random_instance(case, &mut rng);
            let o = lemma_verifier(case, &inst).unwrap();
            assert!(o.holds, "{case:?} {inst:?} {o:?}");
        }
    }
}

proptest! {
    #[test]
    fn truncation_never_increases_support(seed in any::<u64>(), eps in 0.05f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mu = random_joint(&mut rng);
        let t = substate_truncate(&mu, eps).unwrap();
        prop_assert!(t.dist.support_size() <= mu.support_size());
        prop_assert!(t.eps_prime > 0.0 && t.eps_prime <= 1.0);
        prop_assert!(t.tv <= eps + 1e-12);
    }
}
