use eaclab_core::attention::{hardmax_row, softmax_row};
use eaclab_core::autodiff::gradient_circuit;
use eaclab_core::circuit::{evaluate_with, parse, serialize};
use eaclab_core::gen;
use eaclab_core::reductions::{brute_force_kov, split_unbalanced, MatMulBatch, OvInstance};
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rat() -> impl Strategy<Value = BigRational> {
    (-500i64..500, 1i64..40).prop_map(|(n, d)| BigRational::new(BigInt::from(n), BigInt::from(d)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_size_within_bound(seed in any::<u64>(), arity in 1usize..6, ops in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ge = gen::random_eac(&mut rng, arity, ops);
        let g = gradient_circuit(&ge.circuit).unwrap();
        prop_assert!(g.size() <= g.bound());
        prop_assert_eq!(g.circuit.outputs.len(), arity + 1);
    }

    #[test]
    fn circuit_text_round_trip(seed in any::<u64>(), arity in 1usize..6, ops in 1usize..120) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ge = gen::random_eac(&mut rng, arity, ops);
        let c = ge.circuit.circuit();
        let back = parse(&serialize(c)).unwrap();
        prop_assert_eq!(&back, c);
    }

    #[test]
    fn gradient_value_output_matches_source(seed in any::<u64>(), ops in 1usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ge = gen::random_eac(&mut rng, 3, ops);
        let x: Vec<f64> = ge.point.iter().map(eaclab_core::literal::rational_to_f64).collect();
        let g = gradient_circuit(&ge.circuit).unwrap().circuit.validate().unwrap();
        let f = evaluate_with(&ge.circuit, &x, ()).unwrap().outputs[0];
        let fg = evaluate_with(&g, &x, ()).unwrap().outputs[0];
        prop_assert!((f - fg).abs() <= 1e-12 * f.abs().max(1.0));
    }

    #[test]
    fn hardmax_shift_invariant(v in prop::collection::vec(rat(), 1..12), s in rat()) {
        let shifted: Vec<BigRational> = v.iter().map(|x| x + &s).collect();
        prop_assert_eq!(hardmax_row(&v, ()).unwrap(), hardmax_row(&shifted, ()).unwrap());
    }

    #[test]
    fn hardmax_is_distribution(v in prop::collection::vec(rat(), 1..12)) {
        let w = hardmax_row(&v, ()).unwrap();
        let total: BigRational = w.iter().sum();
        prop_assert_eq!(total, BigRational::from_integer(1.into()));
    }

    #[test]
    fn softmax_rows_sum_to_one(v in prop::collection::vec(-700.0f64..700.0, 1..40)) {
        let w = softmax_row(&v, ()).unwrap();
        let total: f64 = w.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn softmax_shift_invariant(v in prop::collection::vec(-50.0f64..50.0, 1..20), s in -50.0f64..50.0) {
        let a = softmax_row(&v, ()).unwrap();
        let shifted: Vec<f64> = v.iter().map(|x| x + s).collect();
        let b = softmax_row(&shifted, ()).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn split_preserves_answer(
        seed in any::<u64>(),
        k in 2usize..4,
        n in 1usize..7,
        d in 1usize..12,
        density in 0.2f64..0.8,
        e in prop::collection::vec(0.3f64..=1.0, 3),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = OvInstance::random(&vec![n; k], d, density, &mut rng);
        let parts = split_unbalanced(&inst, &e[..k]).unwrap();
        let any = parts.iter().any(brute_force_kov);
        prop_assert_eq!(any, brute_force_kov(&inst));
    }

    #[test]
    fn kov_text_round_trip(seed in any::<u64>(), k in 2usize..5, n in 1usize..6, d in 1usize..90) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = OvInstance::random(&vec![n; k], d, 0.5, &mut rng);
        prop_assert_eq!(OvInstance::from_text(&inst.to_text()).unwrap(), inst);
    }

    #[test]
    fn batch_text_round_trip(seed in any::<u64>(), lh in 1usize..4, n in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = MatMulBatch::random(lh, n, &mut rng);
        prop_assert_eq!(MatMulBatch::from_text(&b.to_text()).unwrap(), b);
    }
}
