//! Forecast accuracy metrics and series diagnostics.

use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Argument(format!(
            "need equal nonzero lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn rmse(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(preds, targets)?;
    let sse: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / preds.len() as f64).sqrt())
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    check_pair(preds, targets)?;
    let sae: f64 = preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).sum();
    Ok(sae / preds.len() as f64)
}

/// Fraction of steps where the forecast moves the same way as the actual
/// series, both measured from the previous actual value. A zero change
/// matches only a zero change.
pub fn directional_accuracy(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(Error::Argument(format!(
            "{} predictions but {} actuals",
            pred.len(),
            actual.len()
        )));
    }
    if actual.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: actual.len(),
        });
    }
    let sign = |x: f64| {
        if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            0
        }
    };
    let hits = (1..actual.len())
        .filter(|&t| sign(pred[t] - actual[t - 1]) == sign(actual[t] - actual[t - 1]))
        .count();
    Ok(hits as f64 / (actual.len() - 1) as f64)
}

/// Fraction of equal entries, for classifiers that predict direction directly.
pub fn label_accuracy(pred: &[u8], actual: &[u8]) -> Result<f64> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(Error::Argument(format!(
            "need equal nonzero lengths, got {} and {}",
            pred.len(),
            actual.len()
        )));
    }
    let hits = pred.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(hits as f64 / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    pub directional_accuracy: f64,
    pub n: usize,
}

impl MetricsReport {
    /// Metrics for a level forecast aligned with `actual`.
    pub fn for_forecast(pred: &[f64], actual: &[f64]) -> Result<Self> {
        Ok(Self {
            rmse: rmse(pred, actual)?,
            mae: mae(pred, actual)?,
            directional_accuracy: directional_accuracy(pred, actual)?,
            n: pred.len(),
        })
    }

    /// `model,rmse,mae,dir_acc,n` row, no trailing newline.
    pub fn csv_row(&self, model: &str) -> String {
        format!(
            "{model},{},{},{},{}",
            self.rmse, self.mae, self.directional_accuracy, self.n
        )
    }
}

pub const METRICS_CSV_HEADER: &str = "model,rmse,mae,dir_acc,n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    pub p_value: f64,
    pub horizon: usize,
    pub n: usize,
    /// Set when the loss differential has zero variance but nonzero mean.
    pub degenerate_variance: bool,
}

/// Two-sided p-value of a standard normal statistic.
fn normal_two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Diebold-Mariano test on per-step losses of two forecasts.
///
/// The long-run variance sums autocovariances of `d = a - b` up to lag
/// `horizon - 1` with rectangular weights; at horizon 1 it is the sample
/// variance (divisor n).
pub fn diebold_mariano(losses_a: &[f64], losses_b: &[f64], horizon: usize) -> Result<DmResult> {
    if losses_a.len() != losses_b.len() {
        return Err(Error::Argument(format!(
            "{} losses against {}",
            losses_a.len(),
            losses_b.len()
        )));
    }
    let n = losses_a.len();
    if n < 10 {
        return Err(Error::InsufficientData { needed: 10, got: n });
    }
    if horizon == 0 || horizon >= n {
        return Err(Error::Argument(format!("horizon {horizon} invalid for n = {n}")));
    }
    let d: Vec<f64> = losses_a.iter().zip(losses_b).map(|(a, b)| a - b).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let autocov = |lag: usize| {
        (lag..n)
            .map(|t| (d[t] - mean) * (d[t - lag] - mean))
            .sum::<f64>()
            / nf
    };
    let lrv = autocov(0) + 2.0 * (1..horizon).map(autocov).sum::<f64>();
    let scale = d.iter().map(|x| x * x).sum::<f64>() / nf;

    let result = |statistic: f64, p_value: f64, degenerate_variance| DmResult {
        statistic,
        p_value,
        horizon,
        n,
        degenerate_variance,
    };
    if lrv <= 1e-24 * scale || lrv <= 0.0 {
        return Ok(if mean == 0.0 || scale == 0.0 {
            result(0.0, 1.0, false)
        } else {
            result(mean.signum() * f64::INFINITY, 0.0, true)
        });
    }
    let statistic = mean / (lrv / nf).sqrt();
    Ok(result(statistic, normal_two_sided_p(statistic), false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HurstResult {
    /// Small-sample corrected exponent: 0.5 plus the slope of
    /// `log_rs - log_expected_rs` against `log_sizes`.
    #[serde(rename = "H")]
    pub h: f64,
    /// Uncorrected slope of `log_rs` against `log_sizes`.
    #[serde(rename = "H_classical")]
    pub h_classical: f64,
    pub log_sizes: Vec<f64>,
    pub log_rs: Vec<f64>,
    /// Log of the expected R/S of white noise at each size.
    pub log_expected_rs: Vec<f64>,
    /// Fit quality of the corrected regression.
    pub r_squared: f64,
}

/// Window sizes geometrically spaced from 10 to n/2, ratio about 2, at
/// least four of them.
pub fn hurst_window_sizes(n: usize) -> Vec<usize> {
    const SMALLEST: f64 = 10.0;
    let largest = (n / 2) as f64;
    if largest < SMALLEST {
        return Vec::new();
    }
    let ratio = largest / SMALLEST;
    let count = ((ratio.log2().floor() as usize) + 1).max(4);
    let mut sizes: Vec<usize> = (0..count)
        .map(|j| (SMALLEST * ratio.powf(j as f64 / (count - 1) as f64)).round() as usize)
        .collect();
    sizes.dedup();
    sizes
}

/// Mean rescaled range over the non-overlapping blocks of length `w`, or
/// `None` when every block has zero deviation.
fn mean_rescaled_range(series: &[f64], w: usize) -> Option<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for block in series.chunks_exact(w) {
        let mean = block.iter().sum::<f64>() / w as f64;
        let sd = (block.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / w as f64).sqrt();
        if !(sd > 0.0) {
            continue;
        }
        let (mut cum, mut lo, mut hi) = (0.0f64, 0.0f64, 0.0f64);
        for x in block {
            cum += x - mean;
            lo = lo.min(cum);
            hi = hi.max(cum);
        }
        total += (hi - lo) / sd;
        used += 1;
    }
    (used > 0).then(|| total / used as f64)
}

/// Expected R/S of `n` i.i.d. Gaussian draws (Anis-Lloyd with Peters'
/// `(n - 0.5)/n` factor); the gamma ratio switches to its asymptote past 340.
pub fn expected_rescaled_range(n: usize) -> f64 {
    let nf = n as f64;
    let sum: f64 = (1..n).map(|i| ((nf - i as f64) / i as f64).sqrt()).sum();
    let gamma_ratio = if n <= 340 {
        (libm::lgamma((nf - 1.0) / 2.0) - libm::lgamma(nf / 2.0)).exp() / std::f64::consts::PI.sqrt()
    } else {
        1.0 / (nf * std::f64::consts::FRAC_PI_2).sqrt()
    };
    (nf - 0.5) / nf * gamma_ratio * sum
}

/// Rescaled-range Hurst exponent. Mean R/S is computed over non-overlapping
/// blocks at each window size; subtracting the white-noise expectation
/// removes the upward bias the classical slope has at small windows.
pub fn hurst_exponent(series: &[f64]) -> Result<HurstResult> {
    if series.len() < 100 {
        return Err(Error::InsufficientData {
            needed: 100,
            got: series.len(),
        });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument("series contains non-finite values".into()));
    }
    let sizes = hurst_window_sizes(series.len());
    let mut used = Vec::new();
    let mut log_sizes = Vec::new();
    let mut log_rs = Vec::new();
    for &w in &sizes {
        if let Some(rs) = mean_rescaled_range(series, w) {
            if rs > 0.0 {
                used.push(w);
                log_sizes.push((w as f64).ln());
                log_rs.push(rs.ln());
            }
        }
    }
    if log_sizes.is_empty() {
        return Err(Error::DegenerateSeries);
    }
    if log_sizes.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: log_sizes.len(),
        });
    }
    let log_expected_rs: Vec<f64> = used.iter().map(|&w| expected_rescaled_range(w).ln()).collect();
    let excess: Vec<f64> = log_rs.iter().zip(&log_expected_rs).map(|(a, b)| a - b).collect();
    let (slope, r_squared) = least_squares_slope(&log_sizes, &excess);
    let (h_classical, _) = least_squares_slope(&log_sizes, &log_rs);
    Ok(HurstResult {
        h: 0.5 + slope,
        h_classical,
        log_sizes,
        log_rs,
        log_expected_rs,
        r_squared,
    })
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, r2)
}
