//! Exponential-loss boosting: descent, stage-0 optimality and separable data.

use fxcast::gboost::{exp_loss, fit_initial_score, predict_label, predict_margin, train, EarlyStop, GbcConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noisy_dataset(seed: u64, n: usize, width: usize) -> (Vec<Vec<f64>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..width).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let y = x
        .iter()
        .map(|r| {
            let score = r[0] - 0.5 * r[1] * r[2] + 0.3 * rng.random_range(-1.0..1.0);
            u8::from(score > 0.0)
        })
        .collect();
    (x, y)
}

fn no_early_stop(n_estimators: usize, learning_rate: f64) -> GbcConfig {
    GbcConfig {
        n_estimators,
        learning_rate,
        early_stop: EarlyStop {
            patience: n_estimators + 1,
            ..EarlyStop::default()
        },
        ..GbcConfig::default()
    }
}

#[test]
fn training_loss_never_increases() {
    for seed in 0..10 {
        let (x, y) = noisy_dataset(seed, 300, 4);
        for lr in [0.01, 0.1, 1.0] {
            let model = train(&x, &y, &no_early_stop(150, lr)).unwrap();
            let losses = &model.history.train_loss;
            assert_eq!(losses.len(), model.n_stages_used + 1);
            for (k, pair) in losses.windows(2).enumerate() {
                assert!(
                    pair[1] <= pair[0] + 1e-12,
                    "seed {seed} lr {lr} stage {}: {} -> {}",
                    k + 1,
                    pair[0],
                    pair[1]
                );
            }
        }
    }
}

/// Feature = label plus a small deterministic offset, classes interleaved in
/// time so the validation tail holds both.
fn separable_toy() -> (Vec<Vec<f64>>, Vec<u8>) {
    let y: Vec<u8> = (0..60).map(|i| u8::from(i % 3 != 0)).collect();
    let x = y
        .iter()
        .enumerate()
        .map(|(i, &l)| vec![f64::from(l) + 0.05 * (i % 7) as f64])
        .collect();
    (x, y)
}

#[test]
fn separable_toy_is_fit_within_ten_stages() {
    let (x, y) = separable_toy();
    let model = train(&x, &y, &no_early_stop(10, 0.5)).unwrap();
    assert!(model.n_stages_used <= 10);
    let first_perfect = (1..=model.trees.len()).find(|&k| {
        let partial = fxcast::gboost::GbcModel {
            trees: model.trees[..k].to_vec(),
            n_stages_used: k,
            ..model.clone()
        };
        predict_label(&partial, &x, Some(1)).unwrap() == y
    });
    assert!(first_perfect.is_some_and(|k| k <= 10), "{first_perfect:?}");
}

#[test]
fn separable_toy_min_margin_grows() {
    let (x, y) = separable_toy();
    let model = train(&x, &y, &no_early_stop(10, 0.5)).unwrap();
    let signed: Vec<f64> = y.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
    let mut previous = f64::NEG_INFINITY;
    for k in 1..=model.trees.len() {
        let partial = fxcast::gboost::GbcModel {
            trees: model.trees[..k].to_vec(),
            n_stages_used: k,
            ..model.clone()
        };
        let margins = predict_margin(&partial, &x, Some(1)).unwrap();
        let min = margins.iter().zip(&signed).map(|(m, s)| m * s).fold(f64::INFINITY, f64::min);
        assert!(min >= previous - 1e-12, "stage {k}: {min} < {previous}");
        previous = min;
    }
}

#[test]
fn initial_score_beats_every_constant_on_a_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let n = rng.random_range(5..200);
        let mut y: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let f0 = fit_initial_score(&y).unwrap();
        let best = exp_loss(&vec![f0; n], &y).unwrap();
        for k in 0..=10_000 {
            let c = -5.0 + k as f64 * 1e-3;
            let loss = exp_loss(&vec![c; n], &y).unwrap();
            assert!(best <= loss, "f0 {f0} loss {best} beaten by {c} with {loss}");
        }
    }
}

#[test]
fn patience_one_with_infinite_tol_stops_after_one_stage() {
    let (x, y) = noisy_dataset(1, 100, 3);
    let cfg = GbcConfig {
        early_stop: EarlyStop {
            patience: 1,
            tol: f64::INFINITY,
            ..EarlyStop::default()
        },
        ..GbcConfig::default()
    };
    assert_eq!(train(&x, &y, &cfg).unwrap().n_stages_used, 1);
}

#[test]
fn vanishing_learning_rate_predicts_the_majority() {
    let (x, mut y) = noisy_dataset(2, 120, 3);
    for l in y.iter_mut().take(90) {
        *l = 1;
    }
    let model = train(&x, &y, &no_early_stop(5, 1e-12)).unwrap();
    let margins = predict_margin(&model, &x, Some(3)).unwrap();
    assert!(margins.iter().all(|m| (m - model.f0).abs() < 1e-9));
    assert!(predict_label(&model, &x, Some(3)).unwrap().iter().all(|&l| l == 1));
}

#[test]
fn identical_inputs_give_identical_model_bytes() {
    let (x, y) = noisy_dataset(3, 200, 4);
    let cfg = no_early_stop(40, 0.1);
    let a = train(&x, &y, &cfg).unwrap().to_json().unwrap();
    let b = train(&x, &y, &cfg).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}
