//! Independent data generators and reference computations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// `n` points of a unit sine with the given period, mapped onto [0, 1].
pub fn sine01(n: usize, period: f64) -> Vec<f64> {
    (0..n)
        .map(|t| 0.5 + 0.5 * (2.0 * std::f64::consts::PI * t as f64 / period).sin())
        .collect()
}

pub fn white_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n).map(|_| normal.sample(&mut rng)).collect()
}

/// Linear trend with unit slope plus Gaussian noise of deviation `sigma`.
pub fn ramp_plus_noise(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    white_noise(n, seed)
        .into_iter()
        .enumerate()
        .map(|(t, e)| t as f64 + sigma * e)
        .collect()
}

/// Squared errors `u_t^2` against `(u_t + 0.5)^2` for standard normal `u`.
pub fn shifted_losses(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let u = white_noise(n, seed);
    let a = u.iter().map(|x| x * x).collect();
    let b = u.iter().map(|x| (x + 0.5) * (x + 0.5)).collect();
    (a, b)
}

/// Levels of an ARIMA(1,1,1) process without drift: the differences follow
/// `w_t = phi w_{t-1} + e_t + theta e_{t-1}`. A burn-in is discarded.
pub fn simulate_arima111(phi: f64, theta: f64, n: usize, seed: u64) -> Vec<f64> {
    const BURN_IN: usize = 500;
    let e = white_noise(n + BURN_IN, seed);
    let mut w = vec![0.0; n + BURN_IN];
    for t in 1..w.len() {
        w[t] = phi * w[t - 1] + e[t] + theta * e[t - 1];
    }
    let mut level = 100.0;
    let mut out = Vec::with_capacity(n + 1);
    out.push(level);
    for &d in &w[BURN_IN..] {
        level += d;
        out.push(level);
    }
    out
}

/// Horizon-one Diebold-Mariano statistic computed directly: the mean loss
/// differential over its standard error with divisor n.
pub fn dm_statistic_reference(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    mean / (var / n).sqrt()
}
