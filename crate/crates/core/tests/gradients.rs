use ndarray::Array2;
use p3s::cluster::{
    reinforce_logit_gradient, reinforce_update, sample_assignment, RewardState, SampleMode,
};
use p3s::neural::{cross_entropy_loss, mse_loss, onehot, Activation, DenseNet, Gradients};
use p3s::PolicyNet;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
enum Objective {
    Mse,
    CrossEntropy,
    Reinforce,
}

/// Loss value and its gradient at the network output (logits for softmax heads).
fn objective(
    kind: Objective,
    out: &Array2<f64>,
    target: &Array2<f64>,
    labels: &[usize],
    advantage: f64,
) -> (f64, Array2<f64>) {
    match kind {
        Objective::Mse => mse_loss(out, target).unwrap(),
        Objective::CrossEntropy => cross_entropy_loss(out, target).unwrap(),
        Objective::Reinforce => {
            let logp: f64 = labels
                .iter()
                .enumerate()
                .map(|(r, &c)| out[[r, c]].ln())
                .sum();
            (
                -advantage * logp,
                reinforce_logit_gradient(out, labels, advantage),
            )
        }
    }
}

/// Largest relative gap between backprop and central differences.
#[allow(clippy::needless_range_loop)]
fn max_relative_error(kind: Objective, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..5);
    let dims: Vec<usize> = (0..rng.random_range(2..5))
        .map(|_| rng.random_range(1..5))
        .collect();
    let out_dim = if matches!(kind, Objective::Mse) {
        *dims.last().unwrap()
    } else {
        dims.last().unwrap() + 1
    };
    let mut widths = dims.clone();
    *widths.last_mut().unwrap() = out_dim;
    let head = if matches!(kind, Objective::Mse) {
        Activation::Identity
    } else {
        Activation::SoftmaxOutput
    };
    let mut net = DenseNet::new(&widths, Activation::Rectifier, head, seed);
    for layer in &mut net.layers {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    let x = Array2::from_shape_fn((n, widths[0]), |_| rng.random_range(-2.0..2.0));
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..out_dim)).collect();
    let target = match kind {
        Objective::Mse => Array2::from_shape_fn((n, out_dim), |_| rng.random_range(-1.0..1.0)),
        _ => onehot(&labels, out_dim),
    };
    let advantage = rng.random_range(-1.0..1.0);

    let loss_at = |net: &DenseNet| {
        let out = net.predict(&x).unwrap();
        objective(kind, &out, &target, &labels, advantage).0
    };
    let acts = net.forward(&x).unwrap();
    let (_, g) = objective(kind, acts.output(), &target, &labels, advantage);
    let grads: Gradients = net.backward(&acts, &g).unwrap();

    let mut worst = 0.0f64;
    let mut compare = |analytic: f64, numeric: f64| {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    };
    for l in 0..net.layers.len() {
        let (rows, cols) = net.layers[l].weights.dim();
        for i in 0..rows {
            for j in 0..cols {
                let mut plus = net.clone();
                plus.layers[l].weights[[i, j]] += STEP;
                let mut minus = net.clone();
                minus.layers[l].weights[[i, j]] -= STEP;
                compare(
                    grads[l].weights[[i, j]],
                    (loss_at(&plus) - loss_at(&minus)) / (2.0 * STEP),
                );
            }
            let mut plus = net.clone();
            plus.layers[l].bias[i] += STEP;
            let mut minus = net.clone();
            minus.layers[l].bias[i] -= STEP;
            compare(
                grads[l].bias[i],
                (loss_at(&plus) - loss_at(&minus)) / (2.0 * STEP),
            );
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]
    #[test]
    fn mse_backprop_matches_differences(seed in any::<u64>()) {
        prop_assert!(max_relative_error(Objective::Mse, seed) < 1e-4);
    }

    #[test]
    fn cross_entropy_backprop_matches_differences(seed in any::<u64>()) {
        prop_assert!(max_relative_error(Objective::CrossEntropy, seed) < 1e-4);
    }

    #[test]
    fn reinforce_backprop_matches_differences(seed in any::<u64>()) {
        prop_assert!(max_relative_error(Objective::Reinforce, seed) < 1e-4);
    }
}

#[test]
fn two_armed_bandit_is_learned() {
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embedding = Array2::from_shape_fn((1, 8), |_| rng.random_range(-1.0..1.0));
        let mut policy = PolicyNet::with_hidden(8, 16, 2, seed, 0.01);
        let mut rewards = RewardState::default();
        for _ in 0..200 {
            let a = sample_assignment(&policy, &embedding, &mut rng, SampleMode::Sampled).unwrap();
            let r = if a.labels[0] == 0 { 1.0 } else { 0.0 };
            reinforce_update(&mut policy, &embedding, &a, &mut rewards, r).unwrap();
        }
        let p = policy.probabilities(&embedding).unwrap()[[0, 0]];
        assert!(p > 0.9, "seed {seed}: p = {p}");
    }
}
