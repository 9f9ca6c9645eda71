mod common;

use common::*;
use conformal_jets::fixtures::{random_field, random_vector};
use conformal_jets::{FlatConformalField, MetricSpace};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn space_for(n: usize, p: usize) -> MetricSpace {
    MetricSpace::diagonal(p.min(n), n - p.min(n)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conformal_killing_identity(seed in any::<u64>(), n in 3usize..=6, p in 0usize..=6) {
        let space = space_for(n, p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(&space, &mut rng);
        let x = random_vector(n, 1.0, &mut rng);
        let jet = f.jet_at(&x);
        prop_assert!(jet.killing_defect(&space) < 1e-9);
        prop_assert!((jet.phi - 2.0 * jet.j.trace() / n as f64).abs() < 1e-12 * (1.0 + jet.phi.abs()));
    }

    #[test]
    fn closed_form_jet_matches_finite_differences(seed in any::<u64>(), n in 3usize..=5, p in 0usize..=5) {
        let space = space_for(n, p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(&space, &mut rng);
        let x = random_vector(n, 1.0, &mut rng);
        let jet = f.jet_at(&x);
        prop_assert!(rel_err_mat(&jet.j, &fd_jacobian(&f, &x, FD_STEP)) < 1e-7);
        prop_assert!((jet.phi - fd_phi(&f, &x)).abs() / jet.phi.abs().max(1.0) < 1e-7);
        prop_assert!(rel_err_vec(&jet.dphi, &fd_dphi(&f, &x)) < 1e-7);
    }

    #[test]
    fn second_order_identity(seed in any::<u64>(), n in 3usize..=5, p in 0usize..=5) {
        let space = space_for(n, p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_field(&space, &mut rng);
        let x = random_vector(n, 1.0, &mut rng);
        let z = random_vector(n, 1.0, &mut rng);
        let jet = f.jet_at(&x);
        let closed = jet.jacobian_derivative(&space, &z);
        let fd = fd_jacobian_derivative(&f, &x, &z);
        prop_assert!(rel_err_mat(&closed, &fd) < 1e-6);
        // φ is affine: dφ does not depend on the point
        let y = random_vector(n, 1.0, &mut rng);
        prop_assert!(rel_err_vec(&fd_dphi(&f, &y), &fd_dphi(&f, &x)) < 1e-7);
    }

    #[test]
    fn bracket_stays_in_family(seed in any::<u64>(), n in 3usize..=5, p in 0usize..=5) {
        let space = space_for(n, p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f1 = random_field(&space, &mut rng);
        let f2 = random_field(&space, &mut rng);
        let br = f1.bracket(&f2);
        prop_assert!(br.is_ok(), "{:?}", br.err());
        let br = br.unwrap();
        let back = f2.bracket(&f1).unwrap();
        prop_assert!((br.w() + back.w()).amax() < 1e-9 * br.w().amax().max(1.0));
    }
}

#[test]
fn killing_jacobian_parallel_along_zero_line() {
    // Killing field with a 1-dimensional axis in R^5 built from two blocks
    let f = conformal_jets::fixtures::double_rotation(5).unwrap();
    let axis = conformal_jets::fixtures::unit(5, 4);
    let j0 = f.jacobian(&DVector::zeros(5));
    for t in [-1.0, -0.3, 0.7, 2.0] {
        let x = &axis * t;
        assert!(f.evaluate(&x).amax() < 1e-15);
        assert!((f.jacobian(&x) - &j0).amax() < 1e-15);
    }
    assert!(f.is_killing());
    let _: &FlatConformalField = &f;
}
