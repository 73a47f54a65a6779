//! Gradient-boosted regression trees on exponential loss.
//!
//! Labels in {0, 1} are mapped to signed labels y ∈ {-1, +1}. The model
//! margin is `f(x) = f0 + lr · Σ_k tree_k(x)` and training minimises
//! `Σ_i exp(-y_i f(x_i))`. Each stage fits a least-squares tree to the
//! pseudo-residuals `r_i = y_i exp(-y_i f(x_i))`, then replaces each leaf value
//! with the Newton step `Σ r / Σ |r|` over the samples in that leaf.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub validation_fraction: f64,
    pub patience: usize,
    pub tol: f64,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            validation_fraction: 0.1,
            patience: 50,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbcConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub early_stop: EarlyStop,
    pub seed: u64,
}

impl Default for GbcConfig {
    fn default() -> Self {
        Self {
            n_estimators: 10_000,
            learning_rate: 0.01,
            max_depth: 3,
            min_samples_leaf: 5,
            early_stop: EarlyStop::default(),
            seed: 0,
        }
    }
}

impl GbcConfig {
    pub fn validate(&self) -> Result<()> {
        let vf = self.early_stop.validation_fraction;
        if !(vf > 0.0 && vf < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction {vf} outside (0, 1)"
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.min_samples_leaf == 0 || self.early_stop.patience == 0 {
            return Err(Error::Config(
                "min_samples_leaf and patience must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn check_signed(labels_pm: &[f64]) -> Result<()> {
    match labels_pm.iter().find(|&&y| y != 1.0 && y != -1.0) {
        Some(y) => Err(Error::Argument(format!("label {y} is not -1 or +1"))),
        None => Ok(()),
    }
}

/// `Σ exp(-y f)`, a sum rather than a mean.
pub fn exp_loss(margins: &[f64], labels_pm: &[f64]) -> Result<f64> {
    if margins.len() != labels_pm.len() || margins.is_empty() {
        return Err(Error::Argument(format!(
            "exp_loss needs equal nonzero lengths, got {} and {}",
            margins.len(),
            labels_pm.len()
        )));
    }
    check_signed(labels_pm)?;
    Ok(margins
        .iter()
        .zip(labels_pm)
        .map(|(f, y)| (-y * f).exp())
        .sum())
}

/// `½ ln(n_pos / n_neg)`, the constant minimising exponential loss.
pub fn fit_initial_score(labels_pm: &[f64]) -> Result<f64> {
    check_signed(labels_pm)?;
    let n_pos = labels_pm.iter().filter(|&&y| y > 0.0).count();
    let n_neg = labels_pm.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateClass);
    }
    Ok(0.5 * (n_pos as f64 / n_neg as f64).ln())
}

/// Negative gradient of the loss: `y exp(-y f)`.
pub fn pseudo_residuals(labels_pm: &[f64], margins: &[f64]) -> Result<Vec<f64>> {
    if margins.len() != labels_pm.len() {
        return Err(Error::Argument(format!(
            "{} labels but {} margins",
            labels_pm.len(),
            margins.len()
        )));
    }
    check_signed(labels_pm)?;
    Ok(labels_pm
        .iter()
        .zip(margins)
        .map(|(y, f)| y * (-y * f).exp())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Binary tree stored as a node arena; node 0 is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match self.nodes[idx] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => idx = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], idx: usize) -> usize {
            match nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

/// Newton value for exponential loss over the samples in a leaf.
fn newton_value(residuals: &[f64], rows: &[usize]) -> f64 {
    let (num, den) = rows.iter().fold((0.0, 0.0), |(n, d), &i| {
        (n + residuals[i], d + residuals[i].abs())
    });
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Best least-squares split over all features. Candidates are midpoints of
/// consecutive distinct sorted values; ties keep the lowest feature index,
/// then the lowest threshold.
fn best_split(
    features: &[Vec<f64>],
    residuals: &[f64],
    rows: &[usize],
    min_leaf: usize,
) -> Option<SplitChoice> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let total: f64 = rows.iter().map(|&i| residuals[i]).sum();
    let parent = total * total / n as f64;
    let n_features = features[rows[0]].len();
    let mut best: Option<SplitChoice> = None;
    let mut order: Vec<usize> = rows.to_vec();
    // `feature` indexes columns of row-major data, not `features` itself.
    #[allow(clippy::needless_range_loop)]
    for feature in 0..n_features {
        order.sort_by(|&a, &b| features[a][feature].total_cmp(&features[b][feature]));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += residuals[order[k]];
            let n_left = k + 1;
            let lo = features[order[k]][feature];
            let hi = features[order[k + 1]][feature];
            if lo == hi || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / n_left as f64
                + right_sum * right_sum / (n - n_left) as f64
                - parent;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature,
                    threshold: lo + (hi - lo) / 2.0,
                    gain,
                });
            }
        }
    }
    best.filter(|b| b.gain > 1e-12 * (1.0 + parent.abs()))
}

/// Greedy CART fit of `residuals` with exponential-loss Newton leaves.
/// Too few samples to split yields a single leaf.
pub fn fit_tree(features: &[Vec<f64>], residuals: &[f64], config: &GbcConfig) -> Result<RegressionTree> {
    if features.len() != residuals.len() || features.is_empty() {
        return Err(Error::Argument(format!(
            "{} feature rows but {} residuals",
            features.len(),
            residuals.len()
        )));
    }
    let width = features[0].len();
    if let Some(row) = features.iter().find(|r| r.len() != width) {
        return Err(Error::Dimension {
            expected: width,
            got: row.len(),
        });
    }
    let mut tree = RegressionTree { nodes: Vec::new() };
    let rows: Vec<usize> = (0..features.len()).collect();
    grow(&mut tree, features, residuals, rows, 0, config);
    Ok(tree)
}

fn grow(
    tree: &mut RegressionTree,
    features: &[Vec<f64>],
    residuals: &[f64],
    rows: Vec<usize>,
    depth: usize,
    config: &GbcConfig,
) -> usize {
    let idx = tree.nodes.len();
    tree.nodes.push(Node::Leaf {
        value: newton_value(residuals, &rows),
    });
    if depth >= config.max_depth {
        return idx;
    }
    let Some(split) = best_split(features, residuals, &rows, config.min_samples_leaf) else {
        return idx;
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
        .into_iter()
        .partition(|&i| features[i][split.feature] <= split.threshold);
    let left = grow(tree, features, residuals, left_rows, depth + 1, config);
    let right = grow(tree, features, residuals, right_rows, depth + 1, config);
    tree.nodes[idx] = Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    idx
}

/// A trained ensemble. Serializes to `{f0, learning_rate, trees, n_stages_used}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbcModel {
    pub f0: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    pub n_stages_used: usize,
    #[serde(skip)]
    pub history: StageHistory,
}

/// Per-stage losses recorded during training (not serialized).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageHistory {
    /// Training-portion exponential loss (sum), index 0 is the constant model.
    pub train_loss: Vec<f64>,
    /// Mean validation exponential loss, index 0 is the constant model.
    pub val_loss: Vec<f64>,
}

impl GbcModel {
    fn n_features(&self) -> Option<usize> {
        self.trees.iter().flat_map(|t| &t.nodes).find_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature + 1),
            Node::Leaf { .. } => None,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn to_signed(labels01: &[u8]) -> Result<Vec<f64>> {
    labels01
        .iter()
        .map(|&l| match l {
            0 => Ok(-1.0),
            1 => Ok(1.0),
            other => Err(Error::Argument(format!("label {other} is not 0 or 1"))),
        })
        .collect()
}

/// Trains with a chronological validation holdout (the last
/// `validation_fraction` of rows) for early stopping.
pub fn train(features: &[Vec<f64>], labels01: &[u8], config: &GbcConfig) -> Result<GbcModel> {
    config.validate()?;
    if features.len() != labels01.len() {
        return Err(Error::Argument(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels01.len()
        )));
    }
    let n = features.len();
    let n_fit = (n as f64 * (1.0 - config.early_stop.validation_fraction)).floor() as usize;
    if n_fit == 0 || n_fit >= n {
        return Err(Error::Config(format!(
            "validation split of {n} rows at fraction {} leaves an empty side",
            config.early_stop.validation_fraction
        )));
    }
    let y = to_signed(labels01)?;
    let (fit_x, val_x) = features.split_at(n_fit);
    let (fit_y, val_y) = y.split_at(n_fit);

    let f0 = fit_initial_score(fit_y)?;
    let lr = config.learning_rate;
    let mut fit_margin = vec![f0; n_fit];
    let mut val_margin = vec![f0; n - n_fit];
    let mut history = StageHistory {
        train_loss: vec![exp_loss(&fit_margin, fit_y)?],
        val_loss: vec![exp_loss(&val_margin, val_y)? / val_y.len() as f64],
    };
    let mut best = history.val_loss[0];
    let mut stale = 0;
    let mut trees = Vec::new();

    for stage in 0..config.n_estimators {
        let residuals = pseudo_residuals(fit_y, &fit_margin)?;
        let tree = fit_tree(fit_x, &residuals, config)?;
        for (m, x) in fit_margin.iter_mut().zip(fit_x) {
            *m += lr * tree.predict(x);
        }
        for (m, x) in val_margin.iter_mut().zip(val_x) {
            *m += lr * tree.predict(x);
        }
        trees.push(tree);
        history.train_loss.push(exp_loss(&fit_margin, fit_y)?);
        let val = exp_loss(&val_margin, val_y)? / val_y.len() as f64;
        history.val_loss.push(val);
        if val < best - config.early_stop.tol {
            best = val;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop.patience {
                log::debug!("gbc early stop after stage {}", stage + 1);
                break;
            }
        }
    }
    Ok(GbcModel {
        f0,
        learning_rate: lr,
        n_stages_used: trees.len(),
        trees,
        history,
    })
}

fn check_width(model: &GbcModel, features: &[Vec<f64>], width: Option<usize>) -> Result<()> {
    let Some(first) = features.first() else {
        return Ok(());
    };
    let w = first.len();
    if let Some(row) = features.iter().find(|r| r.len() != w) {
        return Err(Error::Dimension {
            expected: w,
            got: row.len(),
        });
    }
    let needed = width.or_else(|| model.n_features()).unwrap_or(0);
    if w < needed || width.is_some_and(|expected| expected != w) {
        return Err(Error::Dimension {
            expected: needed,
            got: w,
        });
    }
    Ok(())
}

/// `f0 + lr · Σ tree(x)` for each row. `width`, when given, is the feature
/// count the model was trained with.
pub fn predict_margin(model: &GbcModel, features: &[Vec<f64>], width: Option<usize>) -> Result<Vec<f64>> {
    check_width(model, features, width)?;
    Ok(features
        .iter()
        .map(|x| model.f0 + model.learning_rate * model.trees.iter().map(|t| t.predict(x)).sum::<f64>())
        .collect())
}

/// 1 when the margin is strictly positive.
pub fn predict_label(model: &GbcModel, features: &[Vec<f64>], width: Option<usize>) -> Result<Vec<u8>> {
    Ok(predict_margin(model, features, width)?
        .into_iter()
        .map(label_from_margin)
        .collect())
}

pub fn label_from_margin(margin: f64) -> u8 {
    u8::from(margin > 0.0)
}

/// Logistic view of a margin under exponential loss: `1 / (1 + exp(-2m))`.
pub fn probability(margin: f64) -> f64 {
    1.0 / (1.0 + (-2.0 * margin).exp())
}

/// `idx,margin,prob,label` CSV.
pub fn predictions_csv(indices: &[usize], margins: &[f64]) -> String {
    let mut out = String::from("idx,margin,prob,label\n");
    for (i, m) in indices.iter().zip(margins) {
        out.push_str(&format!("{i},{m},{},{}\n", probability(*m), label_from_margin(*m)));
    }
    out
}
