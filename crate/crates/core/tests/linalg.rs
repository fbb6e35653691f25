use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qotlab_core::linalg::{
    apply_unitary, partial_trace, random_state, random_unitary, schmidt_decompose, tensor, trace_distance, Operator,
    StateVector,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn unitaries_conserve_norm(seed in any::<u64>(), dim in 1usize..=16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(dim, &mut rng);
        let u = random_unitary(dim, &mut rng);
        let out = apply_unitary(&u, &s).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partial_trace_of_product_recovers_factors(seed in any::<u64>(), da in 1usize..=4, db in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_state(da, &mut rng).projector();
        let b = random_state(db, &mut rng).projector();
        let rho = tensor(&a, &b);
        prop_assert!(partial_trace(&rho, &[da, db], &[0]).unwrap().sub(&a).max_abs() < 1e-12);
        prop_assert!(partial_trace(&rho, &[da, db], &[1]).unwrap().sub(&b).max_abs() < 1e-12);
    }

    #[test]
    fn trace_distance_is_a_bounded_metric(seed in any::<u64>(), dim in 2usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_state(dim, &mut rng).projector();
        let q = random_state(dim, &mut rng).projector();
        let d = trace_distance(&p, &q).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&d));
        prop_assert!(trace_distance(&p, &p).unwrap() < 1e-12);
        prop_assert!((d - trace_distance(&q, &p).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn schmidt_reconstructs_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let shapes: Vec<(usize, usize)> =
        (1..=8).flat_map(|a| (1..=8).map(move |b| (a, b))).filter(|&(a, b)| a * b <= 64).collect();
    for k in 0..1000 {
        let (a, b) = shapes[k % shapes.len()];
        let s = random_state(a * b, &mut rng);
        let sch = schmidt_decompose(&s, a, b).unwrap();
        assert!(s.max_distance(&sch.reconstruct()) < 1e-10, "shape {a}x{b}");
        let total: f64 = sch.coefficients.iter().map(|c| c * c).sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert!(sch.coefficients.windows(2).all(|w| w[0] >= w[1]));
        assert!(sch.rank(1e-12) <= a.min(b));
    }
}

#[test]
fn product_states_have_schmidt_rank_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let s = tensor(&random_state(3, &mut rng), &random_state(5, &mut rng));
    assert_eq!(schmidt_decompose(&s, 3, 5).unwrap().rank(1e-10), 1);
    assert!(schmidt_decompose(&s, 4, 4).is_err());
}

#[test]
fn kronecker_convention_is_left_major() {
    let k = tensor(&StateVector::basis(2, 1), &StateVector::basis(3, 2));
    assert_eq!(k.max_distance(&StateVector::basis(6, 5)), 0.0);
    let xi = tensor(&Operator::pauli_x(), &Operator::identity(2));
    let out = xi.apply(&StateVector::basis(4, 1));
    assert_eq!(out.max_distance(&StateVector::basis(4, 3)), 0.0);
}
