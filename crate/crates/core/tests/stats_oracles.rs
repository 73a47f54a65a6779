//! Hurst and Diebold-Mariano behaviour against known-answer inputs.

mod common;

use common::oracles::{dm_statistic_reference, ramp_plus_noise, shifted_losses, white_noise};
use fxcast::stats::{diebold_mariano, hurst_exponent};

#[test]
fn white_noise_hurst_is_near_one_half() {
    for seed in 0..10 {
        let h = hurst_exponent(&white_noise(4000, seed)).unwrap().h;
        eprintln!("seed {seed}: H = {h:.4}");
        assert!((0.43..=0.57).contains(&h), "seed {seed}: H = {h}");
    }
}

#[test]
fn trending_series_is_persistent() {
    for seed in 0..5 {
        let h = hurst_exponent(&ramp_plus_noise(4000, 0.01, seed)).unwrap().h;
        assert!(h > 0.85, "seed {seed}: H = {h}");
    }
}

#[test]
fn hurst_reports_regression_points() {
    let r = hurst_exponent(&white_noise(1000, 1)).unwrap();
    assert_eq!(r.log_sizes.len(), r.log_rs.len());
    assert!(r.log_sizes.len() >= 4);
    assert!(r.log_sizes.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn shifted_losses_are_significant() {
    let (a, b) = shifted_losses(42, 500);
    let r = diebold_mariano(&a, &b, 1).unwrap();
    assert!(r.p_value < 0.01, "p = {}", r.p_value);
    assert!(r.statistic < 0.0);
    let reference = dm_statistic_reference(&a, &b);
    assert!((r.statistic - reference).abs() <= 1e-12 * reference.abs());
    assert_eq!(r.n, 500);
}

#[test]
fn identical_losses_and_antisymmetry() {
    let (a, b) = shifted_losses(7, 100);
    let same = diebold_mariano(&a, &a, 1).unwrap();
    assert_eq!(same.statistic, 0.0);
    assert_eq!(same.p_value, 1.0);
    for h in 1..4 {
        let ab = diebold_mariano(&a, &b, h).unwrap();
        let ba = diebold_mariano(&b, &a, h).unwrap();
        assert_eq!(ab.statistic, -ba.statistic);
        assert_eq!(ab.p_value, ba.p_value);
    }
}
