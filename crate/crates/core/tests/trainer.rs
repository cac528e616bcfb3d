use cwc_core::nn::train::write_log;
use cwc_core::nn::{
    combined_gradient, combined_loss, desk, flatten_weights, linearly_separable, load_checkpoint,
    save_checkpoint, train, Activation, CompressibilityPenalty, Concatenated, Dataset,
    LambdaSchedule, Layer, LossMode, ModelParams, PenaltyOptions, PenaltyRegistry, PerLayer,
    TrainConfig,
};
use cwc_core::{compressibility_loss, TrainError};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_model() -> ModelParams {
    ModelParams::new(
        vec![
            Layer {
                in_dim: 2,
                out_dim: 2,
                weights: vec![0.5, -1.0, 1.5, 0.25],
                bias: Some(vec![0.1, -0.2]),
            },
            Layer {
                in_dim: 2,
                out_dim: 2,
                weights: vec![1.0, -2.0, 0.5, 0.75],
                bias: Some(vec![0.3, 0.0]),
            },
        ],
        Activation::Tanh,
    )
    .unwrap()
}

#[test]
fn tiny_network_total_matches_hand_computation() {
    let m = tiny_model();
    let batch = Dataset::new(2, vec![1.0, -1.0], vec![1]).unwrap();
    let lambda = 0.1;
    let got = combined_loss(
        &m,
        &batch,
        lambda,
        &Concatenated {
            include_biases: true,
        },
    )
    .unwrap();

    // hidden pre-activations: [0.5 + 1.0 + 0.1, 1.5 - 0.25 - 0.2]
    let h = [1.6f64.tanh(), 1.05f64.tanh()];
    let z = [h[0] - 2.0 * h[1] + 0.3, 0.5 * h[0] + 0.75 * h[1]];
    let task = (z[0].exp() + z[1].exp()).ln() - z[1];
    // all twelve parameters, |.| summed over root of squares summed
    let p = [
        0.5, -1.0, 1.5, 0.25, 0.1, -0.2, 1.0, -2.0, 0.5, 0.75, 0.3, 0.0,
    ];
    let l1: f64 = p.iter().map(|v: &f64| v.abs()).sum();
    let l2: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
    let expected = task + lambda * l1 / l2;

    assert!((got.task - task).abs() < 1e-14, "{} vs {task}", got.task);
    assert!(
        (got.total - expected).abs() < 1e-14,
        "{} vs {expected}",
        got.total
    );
}

#[test]
fn lambda_zero_and_linearity() {
    let m = ModelParams::init(&[2, 5, 2], true, Activation::Tanh, 3).unwrap();
    let d = linearly_separable(40, 0.05, 2).unwrap();
    let p = Concatenated {
        include_biases: true,
    };
    let zero = combined_loss(&m, &d, 0.0, &p).unwrap();
    assert_eq!(zero.total, zero.task);
    let a = combined_loss(&m, &d, 0.01, &p).unwrap();
    let b = combined_loss(&m, &d, 0.02, &p).unwrap();
    assert_eq!(a.comp, b.comp);
    assert_eq!(a.task, b.task);
    let l = compressibility_loss(&flatten_weights(&m)).unwrap();
    assert!(((b.total - a.total) - 0.01 * l).abs() < 1e-15);
}

#[test]
fn all_zero_weights_are_a_domain_error() {
    let m = ModelParams::init(&[2, 2], false, Activation::Tanh, 0).unwrap();
    let zero = m.unflatten(&[0.0; 4]).unwrap();
    let d = linearly_separable(4, 0.1, 0).unwrap();
    assert!(matches!(
        combined_loss(
            &zero,
            &d,
            0.1,
            &Concatenated {
                include_biases: true
            }
        ),
        Err(TrainError::Loss(_))
    ));
}

fn total_at(
    m: &ModelParams,
    flat: &[f64],
    d: &Dataset,
    lambda: f64,
    p: &dyn CompressibilityPenalty,
) -> f64 {
    combined_loss(&m.unflatten(flat).unwrap(), d, lambda, p)
        .unwrap()
        .total
}

fn fd_check(
    m: &ModelParams,
    d: &Dataset,
    lambda: f64,
    p: &dyn CompressibilityPenalty,
    probes: usize,
    seed: u64,
) {
    let all: Vec<usize> = (0..d.len()).collect();
    let (_, grad) = combined_gradient(m, d, &all, lambda, p).unwrap();
    let g = grad.flatten();
    let w = m.flatten();
    let scale = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    for _ in 0..probes {
        let i = rng.random_range(0..w.len());
        let mut flat = w.to_vec();
        flat[i] = w[i] + h;
        let up = total_at(m, &flat, d, lambda, p);
        flat[i] = w[i] - h;
        let down = total_at(m, &flat, d, lambda, p);
        let fd = (up - down) / (2.0 * h);
        let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-4 * scale);
        assert!(rel < 1e-4, "param {i}: analytic {} fd {fd} rel {rel}", g[i]);
    }
}

/// A model with every parameter drawn away from zero, so no entry sits on the sign kink.
fn random_model(dims: &[usize], seed: u64) -> ModelParams {
    let m = ModelParams::init(dims, true, Activation::Tanh, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let flat: Vec<f64> = (0..m.param_count())
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                -v
            } else {
                v
            }
        })
        .collect();
    m.unflatten(&flat).unwrap()
}

#[test]
fn backprop_matches_finite_differences() {
    let d = linearly_separable(30, 0.05, 4).unwrap();
    let m = random_model(&[2, 6, 5, 2], 9);
    fd_check(
        &m,
        &d,
        0.05,
        &Concatenated {
            include_biases: true,
        },
        10,
        1,
    );
    fd_check(
        &m,
        &d,
        0.05,
        &Concatenated {
            include_biases: false,
        },
        10,
        2,
    );
    fd_check(
        &m,
        &d,
        0.0,
        &PerLayer {
            lambdas: vec![0.01, 0.03, 0.2],
            include_biases: true,
        },
        10,
        3,
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flatten_unflatten_is_a_bijection(
        dims in prop::collection::vec(1usize..6, 2..5),
        bias in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let m = ModelParams::init(&dims, bias, Activation::Relu, seed).unwrap();
        let flat = flatten_weights(&m);
        prop_assert_eq!(flat.len(), m.param_count());
        prop_assert_eq!(m.unflatten(&flat).unwrap(), m.clone());
        let shifted: Vec<f64> = flat.iter().map(|v| v + 1.0).collect();
        prop_assert_eq!(flatten_weights(&m.unflatten(&shifted).unwrap()).into_inner(), shifted);
    }
}

fn separable_split() -> (Dataset, Dataset) {
    linearly_separable(200, 0.05, 11)
        .unwrap()
        .split(0.25, 1)
        .unwrap()
}

fn separable_config(schedule: LambdaSchedule, epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        learning_rate: 0.1,
        seed: 4,
        schedule,
        ..TrainConfig::default()
    }
}

/// Plain logistic regression by batch gradient descent, as an independent
/// check that the set is learnable to the claimed accuracy.
fn logistic_regression_accuracy(train: &Dataset, eval: &Dataset) -> f64 {
    let mut w = [0.0f64; 3];
    for _ in 0..2000 {
        let mut g = [0.0f64; 3];
        for i in 0..train.len() {
            let x = train.sample(i);
            let z = w[0] * x[0] + w[1] * x[1] + w[2];
            let err = 1.0 / (1.0 + (-z).exp()) - train.labels[i] as f64;
            g[0] += err * x[0];
            g[1] += err * x[1];
            g[2] += err;
        }
        for (wi, gi) in w.iter_mut().zip(g) {
            *wi -= 0.5 * gi / train.len() as f64;
        }
    }
    let correct = (0..eval.len())
        .filter(|&i| {
            let x = eval.sample(i);
            usize::from(w[0] * x[0] + w[1] * x[1] + w[2] > 0.0) == eval.labels[i]
        })
        .count();
    correct as f64 / eval.len() as f64
}

#[test]
fn separable_set_is_learned() {
    let (tr, ev) = separable_split();
    assert!(logistic_regression_accuracy(&tr, &ev) >= 0.95);
    let m = ModelParams::init(&[2, 16, 16, 2], true, Activation::Tanh, 1).unwrap();
    let out = train(
        m,
        &tr,
        &ev,
        &separable_config(LambdaSchedule::constant(0.0), 50),
    )
    .unwrap();
    let last = out.log.last().unwrap();
    assert!(last.eval_acc >= 0.95, "eval accuracy {}", last.eval_acc);
    assert_eq!(out.log.len(), 50);
    assert!(out
        .log
        .iter()
        .all(|r| r.lambda == 0.0 && r.total == r.task_loss));
}

#[test]
fn ramp_lowers_compressibility_loss() {
    let (tr, ev) = separable_split();
    let run = |s| {
        let m = ModelParams::init(&[2, 16, 16, 2], true, Activation::Tanh, 1).unwrap();
        train(m, &tr, &ev, &separable_config(s, 100)).unwrap()
    };
    let base = run(LambdaSchedule::constant(0.0));
    let ramp = run(LambdaSchedule::default_ramp());
    for (e, r) in ramp.log.iter().enumerate() {
        assert!((r.lambda - 0.007 * e as f64).abs() < 1e-12);
    }
    let lb = compressibility_loss(&base.model.flatten()).unwrap();
    let lr = compressibility_loss(&ramp.model.flatten()).unwrap();
    assert!(lr < lb, "ramped L {lr} vs baseline L {lb}");
}

#[test]
fn compressibility_loss_non_increasing_over_lambda_grid() {
    let (tr, ev) = desk::data(3).unwrap();
    let mut prev = f64::INFINITY;
    for lambda in [0.005, 0.01, 0.02, 0.03, 0.045] {
        let out = train(
            desk::model(3).unwrap(),
            &tr,
            &ev,
            &desk::config(LambdaSchedule::constant(lambda), 3),
        )
        .unwrap();
        let l = compressibility_loss(&out.model.flatten()).unwrap();
        assert!(l <= prev, "L({lambda}) = {l} > previous {prev}");
        prev = l;
    }
}

#[test]
fn training_is_deterministic() {
    let (tr, ev) = separable_split();
    let run = || {
        let m = ModelParams::init(&[2, 8, 2], true, Activation::Tanh, 7).unwrap();
        let out = train(
            m,
            &tr,
            &ev,
            &separable_config(LambdaSchedule::default_ramp(), 10),
        )
        .unwrap();
        let mut log = Vec::new();
        write_log(&mut log, &out.log).unwrap();
        (log, out.model)
    };
    let (a, ma) = run();
    let (b, mb) = run();
    assert_eq!(a, b);
    assert_eq!(ma, mb);
}

#[test]
fn per_layer_mode_trains_and_validates() {
    let (tr, ev) = separable_split();
    let m = ModelParams::init(&[2, 8, 2], true, Activation::Tanh, 7).unwrap();
    let cfg = TrainConfig {
        loss_mode: LossMode::PerLayer(vec![0.01, 0.02]),
        ..separable_config(LambdaSchedule::constant(0.0), 5)
    };
    let out = train(m.clone(), &tr, &ev, &cfg).unwrap();
    assert!(out.log.iter().all(|r| r.total > r.task_loss));
    let bad = TrainConfig {
        loss_mode: LossMode::PerLayer(vec![0.01]),
        ..cfg
    };
    assert!(matches!(
        train(m, &tr, &ev, &bad),
        Err(TrainError::Config(_))
    ));

    let reg = PenaltyRegistry::with_builtin();
    assert_eq!(reg.names(), vec!["concatenated", "per_layer"]);
    let opts = PenaltyOptions {
        include_biases: true,
        layer_lambdas: vec![],
        layer_count: 2,
    };
    assert!(matches!(
        reg.build("nope", &opts),
        Err(TrainError::UnknownPenalty(_))
    ));
}

#[test]
fn shape_mismatch_is_rejected() {
    let (tr, ev) = separable_split();
    let m = ModelParams::init(&[3, 4, 2], true, Activation::Tanh, 0).unwrap();
    assert!(matches!(
        train(
            m,
            &tr,
            &ev,
            &separable_config(LambdaSchedule::constant(0.0), 1)
        ),
        Err(TrainError::Shape(_))
    ));
}

#[test]
fn checkpoint_and_dataset_files_round_trip() {
    let dir = tempdir();
    let m = ModelParams::init(&[3, 4, 2], true, Activation::Tanh, 5).unwrap();
    let path = dir.join("model.cwt");
    save_checkpoint(&path, &m).unwrap();
    assert_eq!(load_checkpoint(&path).unwrap(), m);

    let d = linearly_separable(20, 0.1, 1).unwrap();
    for name in ["d.csv", "d.cwt"] {
        let p = dir.join(name);
        d.save(&p).unwrap();
        assert_eq!(Dataset::load(&p).unwrap(), d, "{name}");
    }
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempdir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("cwc-trainer-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
