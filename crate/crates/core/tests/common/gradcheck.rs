//! Finite-difference gradient checking for the LSTM.

use fxcast::lstm::{backward, cell_step, forward, init_params, CellActivation, LstmConfig, LstmParams, LstmState};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const REL_TOL: f64 = 1e-4;
const ABS_TOL: f64 = 1e-7;
/// Finite differences straddling a ReLU kink are meaningless; configurations
/// with any pre-activation this close to zero are redrawn.
const KINK_MARGIN: f64 = 1e-3;

pub struct Case {
    pub params: LstmParams,
    pub config: LstmConfig,
    pub windows: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

pub fn config(hidden: usize, window: usize, activation: CellActivation) -> LstmConfig {
    LstmConfig {
        hidden_units: hidden,
        window_len: window,
        cell_activation: activation,
        ..LstmConfig::default()
    }
}

fn batch_loss(case: &Case) -> f64 {
    let n = case.windows.len() as f64;
    case.windows
        .iter()
        .zip(&case.targets)
        .map(|(w, y)| {
            let p = forward(&case.params, w, &case.config).unwrap();
            (p - y) * (p - y)
        })
        .sum::<f64>()
        / n
}

/// Smallest |pre-activation| fed to the cell activation over the batch,
/// recomputed here from the public parameters.
fn min_kink_distance(case: &Case) -> f64 {
    let p = &case.params;
    let hidden = p.hidden();
    let mut closest = f64::INFINITY;
    for w in &case.windows {
        let mut state = LstmState::zeros(hidden);
        for &x in w {
            for j in 0..hidden {
                let mut pre = p.w_c.get(j, 0) * x + p.b_c[j];
                for k in 0..hidden {
                    pre += p.u_c.get(j, k) * state.h[k];
                }
                closest = closest.min(pre.abs());
            }
            state = cell_step(p, &[x], &state, case.config.cell_activation).unwrap();
            for c in &state.c {
                closest = closest.min(c.abs());
            }
        }
    }
    closest
}

pub fn random_case(rng: &mut ChaCha8Rng, activation: CellActivation) -> Case {
    loop {
        let hidden = rng.random_range(1..=4);
        let window = rng.random_range(1..=6);
        let batch = rng.random_range(1..=3);
        let config = config(hidden, window, activation);
        let mut params = init_params(&config, rng.random());
        // Non-zero biases so every parameter's gradient is exercised.
        for t in params.tensors_mut() {
            for x in t.iter_mut() {
                *x += rng.random_range(-0.3..0.3);
            }
        }
        let windows = (0..batch)
            .map(|_| (0..window).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let targets = (0..batch).map(|_| rng.random_range(-1.0..1.0)).collect();
        let case = Case {
            params,
            config,
            windows,
            targets,
        };
        if activation == CellActivation::Tanh || min_kink_distance(&case) > KINK_MARGIN {
            return case;
        }
    }
}

/// Returns the worst violation ratio: error / allowed error (≤ 1 passes).
pub fn check_case(case: &mut Case) -> f64 {
    let (grads, loss) = backward(&case.params, &case.windows, &case.targets, case.config.cell_activation).unwrap();
    assert!((loss - batch_loss(case)).abs() <= 1e-12 * loss.max(1.0));
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let mut worst: f64 = 0.0;
    for (ti, tensor) in analytic.iter().enumerate() {
        for (k, &a) in tensor.iter().enumerate() {
            let orig = case.params.tensors()[ti][k];
            case.params.tensors_mut()[ti][k] = orig + EPS;
            let up = batch_loss(case);
            case.params.tensors_mut()[ti][k] = orig - EPS;
            let down = batch_loss(case);
            case.params.tensors_mut()[ti][k] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            let allowed = ABS_TOL.max(REL_TOL * a.abs().max(numeric.abs()));
            worst = worst.max((a - numeric).abs() / allowed);
        }
    }
    worst
}

