//! Returns, direction labels, Min-Max scaling, sliding windows and
//! chronological splits.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simple returns `(x[t] - x[t-1]) / x[t-1]`; element `t-1` holds the return at `t`.
pub fn daily_returns(values: &[f64]) -> Result<Vec<f64>> {
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Argument(format!("rate {bad} is not positive")));
    }
    Ok(values.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect())
}

/// Label `t` is 1 when `returns[t + 1] > 0`. A zero return is labelled 0.
pub fn make_labels(returns: &[f64]) -> Result<Vec<u8>> {
    if returns.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: returns.len(),
        });
    }
    Ok(returns[1..].iter().map(|&r| u8::from(r > 0.0)).collect())
}

/// Min-Max scaler parameters. `max > min` always holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    min: f64,
    max: f64,
}

impl ScalerParams {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::Argument(format!("scaler bounds {min}, {max} not finite")));
        }
        if max <= min {
            return Err(Error::DegenerateScale(min));
        }
        Ok(Self { min, max })
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, s: f64) -> f64 {
        s * (self.max - self.min) + self.min
    }
}

/// Fits the scaler on training values only.
pub fn minmax_fit(train_values: &[f64]) -> Result<ScalerParams> {
    if train_values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: train_values.len(),
        });
    }
    let min = train_values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = train_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ScalerParams::new(min, max)
}

/// Maps `x -> (x - min) / (max - min)`. Out-of-range values are not clipped.
pub fn minmax_transform(params: &ScalerParams, values: &[f64]) -> Vec<f64> {
    values.iter().map(|&x| params.scale(x)).collect()
}

pub fn minmax_inverse(params: &ScalerParams, scaled: &[f64]) -> Vec<f64> {
    scaled.iter().map(|&s| params.unscale(s)).collect()
}

/// Fixed-length input windows with the value that follows each one.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub window_len: usize,
    /// Index in the source series of each sample's target.
    pub origin_indices: Vec<usize>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Copy of the samples in `range`, origin indices preserved.
    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            inputs: self.inputs[range.clone()].to_vec(),
            targets: self.targets[range.clone()].to_vec(),
            window_len: self.window_len,
            origin_indices: self.origin_indices[range].to_vec(),
        }
    }

    /// CSV with columns `idx,target,x0..x{w-1}`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("idx,target");
        for j in 0..self.window_len {
            out.push_str(&format!(",x{j}"));
        }
        out.push('\n');
        for ((idx, target), row) in self.origin_indices.iter().zip(&self.targets).zip(&self.inputs) {
            out.push_str(&format!("{idx},{target}"));
            for x in row {
                out.push_str(&format!(",{x}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Windows `values[i..i+w]` paired with target `values[i+w]`.
pub fn sliding_windows(values: &[f64], window_len: usize) -> Result<WindowedDataset> {
    if window_len == 0 {
        return Err(Error::Argument("window length must be positive".into()));
    }
    if values.len() <= window_len {
        return Err(Error::InsufficientData {
            needed: window_len + 1,
            got: values.len(),
        });
    }
    let n = values.len() - window_len;
    Ok(WindowedDataset {
        inputs: (0..n).map(|i| values[i..i + window_len].to_vec()).collect(),
        targets: values[window_len..].to_vec(),
        window_len,
        origin_indices: (window_len..values.len()).collect(),
    })
}

/// Windows of past returns labelled by the sign of the return that follows.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    /// Index into the returns vector of the return each label describes.
    pub origin_indices: Vec<usize>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            features: self.features[range.clone()].to_vec(),
            labels: self.labels[range.clone()].to_vec(),
            origin_indices: self.origin_indices[range].to_vec(),
        }
    }
}

/// Direction dataset: features are `returns[i..i+w]`, the label is
/// `returns[i+w] > 0`.
pub fn labeled_windows(returns: &[f64], window_len: usize) -> Result<LabeledDataset> {
    let windows = sliding_windows(returns, window_len)?;
    Ok(LabeledDataset {
        labels: windows.targets.iter().map(|&r| u8::from(r > 0.0)).collect(),
        features: windows.inputs,
        origin_indices: windows.origin_indices,
    })
}

/// Contiguous, chronologically ordered train/test ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub test: Range<usize>,
}

/// First `floor(n * train_fraction)` samples train, the rest test.
pub fn chrono_split(n_samples: usize, train_fraction: f64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n_train = (n_samples as f64 * train_fraction).floor() as usize;
    if n_train == 0 || n_train >= n_samples {
        return Err(Error::Split(format!(
            "{n_samples} samples at fraction {train_fraction} leave an empty side"
        )));
    }
    Ok(Split {
        train: 0..n_train,
        test: n_train..n_samples,
    })
}
