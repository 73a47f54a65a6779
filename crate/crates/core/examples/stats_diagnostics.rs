//! Hurst exponents and a Diebold-Mariano comparison on synthetic data.

use fxcast::stats::{diebold_mariano, hurst_exponent};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> fxcast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let noise: Vec<f64> = (0..4000).map(|_| normal.sample(&mut rng)).collect();
    let walk: Vec<f64> = noise
        .iter()
        .scan(0.0, |acc, e| {
            *acc += e;
            Some(*acc)
        })
        .collect();

    for (name, series) in [("white noise", &noise), ("random walk", &walk)] {
        let h = hurst_exponent(series)?;
        println!(
            "{name:<12} H {:.3}  (uncorrected slope {:.3}, R² {:.3}, {} window sizes)",
            h.h,
            h.h_classical,
            h.r_squared,
            h.log_sizes.len()
        );
    }

    // Forecast A is unbiased, forecast B is off by half a unit.
    let loss_a: Vec<f64> = noise[..500].iter().map(|u| u * u).collect();
    let loss_b: Vec<f64> = noise[..500].iter().map(|u| (u + 0.5).powi(2)).collect();
    let dm = diebold_mariano(&loss_a, &loss_b, 1)?;
    println!("\nDiebold-Mariano A vs B: statistic {:.3}, p-value {:.2e}", dm.statistic, dm.p_value);
    Ok(())
}
