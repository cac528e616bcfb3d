use cwc_core::loss::ternary_magnitude;
use cwc_core::theory::{
    perturbation_test, random_start, random_ternary, sweep_perturbations, verify_theory, Descent,
    DescentStatus, PerturbationSpec, CONVERGED_SQRT_N_GAP,
};
use cwc_core::{compressibility_loss, TheoryError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ternary_with_zero() -> impl Strategy<Value = (Vec<f64>, u64)> {
    (2usize..32, any::<u64>(), 1e-2f64..1e2).prop_flat_map(|(d, seed, c)| {
        (1..d).prop_map(move |n| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (random_ternary(d, n, c, &mut rng), seed)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perturbations_touching_zeros_increase_loss(
        (x, _) in ternary_with_zero(),
        pattern_seed in any::<u64>(),
        eps_frac in 1e-6f64..=1e-3,
    ) {
        let c = ternary_magnitude(&x).unwrap();
        let frac = sweep_perturbations(&x, c * eps_frac, 50, pattern_seed).unwrap();
        prop_assert_eq!(frac, 1.0);
    }

    #[test]
    fn descent_losses_never_increase(seed in any::<u64>(), d in 2usize..24) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = random_start(d, 1e-3, &mut rng);
        let trace = Descent { max_steps: 20_000, ..Descent::default() }.run(&x0).unwrap();
        for w in trace.iterates.windows(2) {
            prop_assert!(w[1].loss_value <= w[0].loss_value, "{} -> {}", w[0].loss_value, w[1].loss_value);
        }
        if trace.converged() {
            prop_assert!(trace.final_report.sqrt_n_gap < CONVERGED_SQRT_N_GAP);
        }
    }
}

#[test]
fn support_only_perturbation_can_decrease() {
    // Moving only on the support away from ternary can lower L when n > 1
    // (a saddle); touching a zero never can.
    let x = [1.0, -1.0, 0.0, 0.0];
    let spec = PerturbationSpec::for_point(&x, 1e-4, vec![1, 1, 0, 0]).unwrap();
    assert_eq!(spec.zero_support_hits, 0);
    let out = perturbation_test(&x, &spec).unwrap();
    assert!(out.loss_after < out.loss_before);

    let spec = PerturbationSpec::for_point(&x, 1e-4, vec![1, 1, 1, 0]).unwrap();
    assert!(perturbation_test(&x, &spec).unwrap().increased);
}

#[test]
fn perturbation_preconditions() {
    let x = [2.0, 0.0, -2.0];
    let spec = |eps: f64, p: Vec<i8>| PerturbationSpec::for_point(&x, eps, p).unwrap();
    assert!(matches!(
        perturbation_test(&x, &spec(1.0, vec![0, 1, 0])),
        Err(TheoryError::Argument(_))
    ));
    assert!(matches!(
        perturbation_test(&x, &spec(1e-4, vec![0, 0, 0])),
        Err(TheoryError::Argument(_))
    ));
    assert!(matches!(
        perturbation_test(
            &[1.0, 0.5],
            &PerturbationSpec::for_point(&[1.0, 0.5], 1e-4, vec![1, 0]).unwrap()
        ),
        Err(TheoryError::Precondition(_))
    ));
    assert!(matches!(
        sweep_perturbations(&[1.0, -1.0], 1e-4, 5, 0),
        Err(TheoryError::Precondition(_))
    ));
}

#[test]
fn one_hot_is_global_minimum_endpoint() {
    // A start dominated by one entry descends to the one-hot minimum L = 1.
    let trace = Descent::default().run(&[0.05, 1.0, -0.03, 0.02]).unwrap();
    assert!(trace.converged());
    assert_eq!(trace.final_report.nonzero_count_n, 1);
    assert!((compressibility_loss(&trace.final_x).unwrap() - 1.0).abs() < 1e-12);
    assert_ne!(trace.status, DescentStatus::Diverged);
}

#[test]
fn verification_suite_small() {
    let s = verify_theory(8, 20, 1).unwrap();
    assert!(s.passed(), "{s:?}");
    assert!(matches!(
        verify_theory(1, 5, 0),
        Err(TheoryError::Argument(_))
    ));
    assert!(matches!(
        verify_theory(4, 0, 0),
        Err(TheoryError::Argument(_))
    ));
}
