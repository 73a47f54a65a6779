//! Single-layer LSTM regressor with a dense linear head.
//!
//! Gates use the logistic sigmoid. The candidate and cell-output
//! nonlinearity is configurable ([`CellActivation`]), ReLU by default:
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
//! o = σ(W_o x + U_o h + b_o)      g = act(W_c x + U_c h + b_c)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ act(c')
//! ŷ = w_dense · h_T + b_dense
//! ```
//!
//! Training is stateless per window: every sample starts from zero state.
//! Gradients come from backpropagation-through-time over the whole window
//! and parameters are updated with Adam after optional global-norm clipping.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{minmax_inverse, ScalerParams, WindowedDataset};

/// The model is univariate: one scalar per time step.
pub const INPUT_DIM: usize = 1;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellActivation {
    Relu,
    Tanh,
}

impl CellActivation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            CellActivation::Relu => z.max(0.0),
            CellActivation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation `z` and the output `a = act(z)`.
    /// The ReLU subgradient at zero is zero.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            CellActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            CellActivation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub hidden_units: usize,
    pub window_len: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub cell_activation: CellActivation,
    pub grad_clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_units: 50,
            window_len: 50,
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            cell_activation: CellActivation::Relu,
            grad_clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden_units == 0 || self.window_len == 0 || self.batch_size == 0 {
            return bad("hidden_units, window_len and batch_size must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.adam_beta1 > 0.0 && self.adam_beta1 < 1.0) {
            return bad("adam_beta1 must lie in (0, 1)");
        }
        if !(self.adam_beta2 > 0.0 && self.adam_beta2 < 1.0) {
            return bad("adam_beta2 must lie in (0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if matches!(self.grad_clip_norm, Some(c) if !(c > 0.0)) {
            return bad("grad_clip_norm must be positive");
        }
        Ok(())
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// `out += self · v`
    #[inline]
    fn mul_vec_add(&self, v: &[f64], out: &mut [f64]) {
        for (row, o) in self.data.chunks_exact(self.cols).zip(out.iter_mut()) {
            *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `out += selfᵀ · v`
    #[inline]
    fn mul_t_vec_add(&self, v: &[f64], out: &mut [f64]) {
        for (row, &s) in self.data.chunks_exact(self.cols).zip(v) {
            if s != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += a * s;
                }
            }
        }
    }

    /// `self += a ⊗ b`
    #[inline]
    fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        for (row, &s) in self.data.chunks_exact_mut(self.cols).zip(a) {
            if s != 0.0 {
                for (r, x) in row.iter_mut().zip(b) {
                    *r += s * x;
                }
            }
        }
    }
}

/// All trainable tensors. Gradients and Adam moments use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_i: Matrix,
    pub w_f: Matrix,
    pub w_o: Matrix,
    pub w_c: Matrix,
    pub u_i: Matrix,
    pub u_f: Matrix,
    pub u_o: Matrix,
    pub u_c: Matrix,
    pub b_i: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_o: Vec<f64>,
    pub b_c: Vec<f64>,
    pub w_dense: Vec<f64>,
    pub b_dense: f64,
}

/// Tensor names in serialization and iteration order.
pub const TENSOR_NAMES: [&str; 14] = [
    "W_i", "W_f", "W_o", "W_c", "U_i", "U_f", "U_o", "U_c", "b_i", "b_f", "b_o", "b_c", "w_dense",
    "b_dense",
];

impl LstmParams {
    pub fn zeros(hidden: usize, input_dim: usize) -> Self {
        Self {
            w_i: Matrix::zeros(hidden, input_dim),
            w_f: Matrix::zeros(hidden, input_dim),
            w_o: Matrix::zeros(hidden, input_dim),
            w_c: Matrix::zeros(hidden, input_dim),
            u_i: Matrix::zeros(hidden, hidden),
            u_f: Matrix::zeros(hidden, hidden),
            u_o: Matrix::zeros(hidden, hidden),
            u_c: Matrix::zeros(hidden, hidden),
            b_i: vec![0.0; hidden],
            b_f: vec![0.0; hidden],
            b_o: vec![0.0; hidden],
            b_c: vec![0.0; hidden],
            w_dense: vec![0.0; hidden],
            b_dense: 0.0,
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_i.len()
    }

    pub fn input_dim(&self) -> usize {
        self.w_i.cols
    }

    /// Declared shape of each tensor, in [`TENSOR_NAMES`] order.
    pub fn shapes(&self) -> [Vec<usize>; 14] {
        let h = self.hidden();
        let d = self.input_dim();
        [
            vec![h, d],
            vec![h, d],
            vec![h, d],
            vec![h, d],
            vec![h, h],
            vec![h, h],
            vec![h, h],
            vec![h, h],
            vec![h],
            vec![h],
            vec![h],
            vec![h],
            vec![h],
            vec![],
        ]
    }

    pub fn tensors(&self) -> [&[f64]; 14] {
        [
            &self.w_i.data,
            &self.w_f.data,
            &self.w_o.data,
            &self.w_c.data,
            &self.u_i.data,
            &self.u_f.data,
            &self.u_o.data,
            &self.u_c.data,
            &self.b_i,
            &self.b_f,
            &self.b_o,
            &self.b_c,
            &self.w_dense,
            std::slice::from_ref(&self.b_dense),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 14] {
        [
            &mut self.w_i.data,
            &mut self.w_f.data,
            &mut self.w_o.data,
            &mut self.w_c.data,
            &mut self.u_i.data,
            &mut self.u_f.data,
            &mut self.u_o.data,
            &mut self.u_c.data,
            &mut self.b_i,
            &mut self.b_f,
            &mut self.b_o,
            &mut self.b_c,
            &mut self.w_dense,
            std::slice::from_mut(&mut self.b_dense),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    fn gate_weights(&self) -> [(&Matrix, &Matrix, &[f64]); 4] {
        [
            (&self.w_i, &self.u_i, &self.b_i),
            (&self.w_f, &self.u_f, &self.b_f),
            (&self.w_o, &self.u_o, &self.b_o),
            (&self.w_c, &self.u_c, &self.b_c),
        ]
    }
}

/// Glorot-uniform weights from a seeded ChaCha stream; biases zero except the
/// forget gate, which starts at 1.0.
pub fn init_params(config: &LstmConfig, seed: u64) -> LstmParams {
    let hidden = config.hidden_units;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = LstmParams::zeros(hidden, INPUT_DIM);
    let mut fill = |m: &mut Matrix, fan_in: usize, fan_out: usize| {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for x in m.data.iter_mut() {
            *x = rng.random_range(-bound..bound);
        }
    };
    for w in [&mut p.w_i, &mut p.w_f, &mut p.w_o, &mut p.w_c] {
        fill(w, INPUT_DIM, hidden);
    }
    for u in [&mut p.u_i, &mut p.u_f, &mut p.u_o, &mut p.u_c] {
        fill(u, hidden, hidden);
    }
    let mut dense = Matrix::zeros(1, hidden);
    fill(&mut dense, hidden, 1);
    p.w_dense = dense.data;
    p.b_f.iter_mut().for_each(|b| *b = 1.0);
    p
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Everything one time step needs to retain for the backward pass.
struct StepCache {
    i: Vec<f64>,
    f: Vec<f64>,
    o: Vec<f64>,
    g: Vec<f64>,
    z_g: Vec<f64>,
    c: Vec<f64>,
    c_act: Vec<f64>,
}

fn step(
    params: &LstmParams,
    x: &[f64],
    h: &[f64],
    c: &[f64],
    act: CellActivation,
) -> StepCache {
    let hidden = params.hidden();
    let mut z = [
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
    ];
    for ((w, u, b), zk) in params.gate_weights().into_iter().zip(z.iter_mut()) {
        zk.copy_from_slice(b);
        w.mul_vec_add(x, zk);
        u.mul_vec_add(h, zk);
    }
    let [z_i, z_f, z_o, z_g] = z;
    let i: Vec<f64> = z_i.iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z_f.iter().map(|&v| sigmoid(v)).collect();
    let o: Vec<f64> = z_o.iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z_g.iter().map(|&v| act.apply(v)).collect();
    let c_new: Vec<f64> = (0..hidden).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
    let c_act: Vec<f64> = c_new.iter().map(|&v| act.apply(v)).collect();
    StepCache {
        i,
        f,
        o,
        g,
        z_g,
        c: c_new,
        c_act,
    }
}

fn check_params(params: &LstmParams) -> Result<()> {
    let h = params.hidden();
    let shapes_ok = params
        .gate_weights()
        .iter()
        .all(|(w, u, b)| w.rows == h && u.shape() == (h, h) && b.len() == h)
        && params.w_dense.len() == h
        && [&params.w_f, &params.w_o, &params.w_c]
            .iter()
            .all(|w| w.cols == params.w_i.cols);
    if shapes_ok {
        Ok(())
    } else {
        Err(Error::Argument("inconsistent LSTM parameter shapes".into()))
    }
}

/// One LSTM step from `state` on input `x`.
pub fn cell_step(
    params: &LstmParams,
    x: &[f64],
    state: &LstmState,
    activation: CellActivation,
) -> Result<LstmState> {
    check_params(params)?;
    if x.len() != params.input_dim() {
        return Err(Error::Dimension {
            expected: params.input_dim(),
            got: x.len(),
        });
    }
    if state.h.len() != params.hidden() || state.c.len() != params.hidden() {
        return Err(Error::Dimension {
            expected: params.hidden(),
            got: state.h.len().max(state.c.len()),
        });
    }
    let cache = step(params, x, &state.h, &state.c, activation);
    let h = cache.o.iter().zip(&cache.c_act).map(|(o, a)| o * a).collect();
    Ok(LstmState { h, c: cache.c })
}

fn forward_cached(
    params: &LstmParams,
    window: &[f64],
    act: CellActivation,
) -> (f64, Vec<StepCache>, Vec<Vec<f64>>) {
    let hidden = params.hidden();
    let mut caches = Vec::with_capacity(window.len());
    // hs[t] is the hidden state entering step t; hs[T] is the final state.
    let mut hs = Vec::with_capacity(window.len() + 1);
    hs.push(vec![0.0; hidden]);
    let mut c = vec![0.0; hidden];
    for x in window {
        let cache = step(params, std::slice::from_ref(x), &hs[hs.len() - 1], &c, act);
        let h: Vec<f64> = cache.o.iter().zip(&cache.c_act).map(|(o, a)| o * a).collect();
        c.clone_from(&cache.c);
        hs.push(h);
        caches.push(cache);
    }
    let h_last = &hs[hs.len() - 1];
    let pred = params
        .w_dense
        .iter()
        .zip(h_last)
        .map(|(w, h)| w * h)
        .sum::<f64>()
        + params.b_dense;
    (pred, caches, hs)
}

/// Runs the window from zero state and applies the dense head.
pub fn forward(
    params: &LstmParams,
    window: &[f64],
    config: &LstmConfig,
) -> Result<f64> {
    check_params(params)?;
    if window.len() != config.window_len {
        return Err(Error::Dimension {
            expected: config.window_len,
            got: window.len(),
        });
    }
    if params.input_dim() != INPUT_DIM {
        return Err(Error::Dimension {
            expected: INPUT_DIM,
            got: params.input_dim(),
        });
    }
    Ok(forward_cached(params, window, config.cell_activation).0)
}

pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::Argument(format!(
            "mse needs equal nonzero lengths, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predictions.len() as f64)
}

/// Adds the gradient of `scale · (ŷ - y)²` for one window into `grads`.
/// Returns the prediction.
fn backprop_sample(
    params: &LstmParams,
    window: &[f64],
    target: f64,
    scale: f64,
    act: CellActivation,
    grads: &mut LstmParams,
) -> f64 {
    let hidden = params.hidden();
    let (pred, caches, hs) = forward_cached(params, window, act);
    let dy = 2.0 * (pred - target) * scale;

    let h_last = &hs[hs.len() - 1];
    for (gw, h) in grads.w_dense.iter_mut().zip(h_last) {
        *gw += dy * h;
    }
    grads.b_dense += dy;

    let mut dh: Vec<f64> = params.w_dense.iter().map(|w| w * dy).collect();
    let mut dc = vec![0.0; hidden];
    let zero = vec![0.0; hidden];
    let mut dz = [
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
    ];

    for t in (0..caches.len()).rev() {
        let s = &caches[t];
        let c_prev = if t == 0 { &zero } else { &caches[t - 1].c };
        let h_prev = &hs[t];
        let x = std::slice::from_ref(&window[t]);
        for k in 0..hidden {
            let d_o = dh[k] * s.c_act[k];
            let dck = dc[k] + dh[k] * s.o[k] * act.derivative(s.c[k], s.c_act[k]);
            let d_i = dck * s.g[k];
            let d_g = dck * s.i[k];
            let d_f = dck * c_prev[k];
            dz[0][k] = d_i * s.i[k] * (1.0 - s.i[k]);
            dz[1][k] = d_f * s.f[k] * (1.0 - s.f[k]);
            dz[2][k] = d_o * s.o[k] * (1.0 - s.o[k]);
            dz[3][k] = d_g * act.derivative(s.z_g[k], s.g[k]);
            dc[k] = dck * s.f[k];
        }
        let mut dh_prev = vec![0.0; hidden];
        {
            let LstmParams {
                w_i,
                w_f,
                w_o,
                w_c,
                u_i,
                u_f,
                u_o,
                u_c,
                b_i,
                b_f,
                b_o,
                b_c,
                ..
            } = grads;
            let gw = [w_i, w_f, w_o, w_c];
            let gu = [u_i, u_f, u_o, u_c];
            let gb = [b_i, b_f, b_o, b_c];
            for (gate, ((w, u), b)) in gw.into_iter().zip(gu).zip(gb).enumerate() {
                w.add_outer(&dz[gate], x);
                u.add_outer(&dz[gate], h_prev);
                b.iter_mut().zip(&dz[gate]).for_each(|(g, d)| *g += d);
            }
        }
        for (gate, (_, u, _)) in params.gate_weights().into_iter().enumerate() {
            u.mul_t_vec_add(&dz[gate], &mut dh_prev);
        }
        dh = dh_prev;
    }
    pred
}

/// Gradient of the batch-mean squared error with respect to every parameter,
/// plus the batch loss.
///
/// Samples are processed in parallel but reduced in index order, so the
/// result does not depend on the thread count.
pub fn backward(
    params: &LstmParams,
    windows: &[Vec<f64>],
    targets: &[f64],
    activation: CellActivation,
) -> Result<(LstmParams, f64)> {
    check_params(params)?;
    if windows.is_empty() || windows.len() != targets.len() {
        return Err(Error::Argument(format!(
            "batch needs equal nonzero lengths, got {} windows and {} targets",
            windows.len(),
            targets.len()
        )));
    }
    let scale = 1.0 / windows.len() as f64;
    let per_sample: Vec<(LstmParams, f64)> = windows
        .par_iter()
        .zip(targets.par_iter())
        .map(|(w, &y)| {
            let mut g = LstmParams::zeros(params.hidden(), params.input_dim());
            let pred = backprop_sample(params, w, y, scale, activation, &mut g);
            (g, (pred - y) * (pred - y))
        })
        .collect();
    let mut grads = LstmParams::zeros(params.hidden(), params.input_dim());
    let mut loss = 0.0;
    for (g, l) in &per_sample {
        grads.add_assign(g);
        loss += l;
    }
    Ok((grads, loss * scale))
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut LstmParams, max_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: LstmParams,
    pub v: LstmParams,
}

impl AdamState {
    pub fn new(like: &LstmParams) -> Self {
        let zeros = LstmParams::zeros(like.hidden(), like.input_dim());
        Self {
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One bias-corrected Adam update at step `t` (1-based). Gradients are
/// clipped first when the config asks for it.
pub fn adam_step(
    params: &mut LstmParams,
    grads: &LstmParams,
    state: &mut AdamState,
    t: u64,
    config: &LstmConfig,
) {
    debug_assert!(t >= 1);
    let mut g = grads.clone();
    if let Some(max_norm) = config.grad_clip_norm {
        clip_global_norm(&mut g, max_norm);
    }
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let bc1 = 1.0 - b1.powf(t as f64);
    let bc2 = 1.0 - b2.powf(t as f64);
    let lr = config.learning_rate;
    let eps = config.adam_epsilon;
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(g.tensors())
        .zip(state.m.tensors_mut())
        .zip(state.v.tensors_mut())
    {
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean squared error over each epoch's batches, measured before each update.
    pub epoch_loss: Vec<f64>,
    pub epoch_time: Vec<Duration>,
}

impl TrainHistory {
    /// `epoch,loss,seconds` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,seconds\n");
        for (e, (l, t)) in self.epoch_loss.iter().zip(&self.epoch_time).enumerate() {
            out.push_str(&format!("{},{},{:.6}\n", e + 1, l, t.as_secs_f64()));
        }
        out
    }
}

/// Trains from `init_params(config, config.seed)` over contiguous,
/// unshuffled mini-batches.
pub fn train(dataset: &WindowedDataset, config: &LstmConfig) -> Result<(LstmParams, TrainHistory)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if dataset.window_len != config.window_len {
        return Err(Error::Dimension {
            expected: config.window_len,
            got: dataset.window_len,
        });
    }
    let mut params = init_params(config, config.seed);
    let mut adam = AdamState::new(&params);
    let mut history = TrainHistory::default();
    let mut t = 0u64;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut weighted = 0.0;
        for (batch, range) in batch_ranges(dataset.len(), config.batch_size).enumerate() {
            let (grads, loss) = backward(
                &params,
                &dataset.inputs[range.clone()],
                &dataset.targets[range.clone()],
                config.cell_activation,
            )?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NumericOverflow { epoch, batch });
            }
            weighted += loss * range.len() as f64;
            t += 1;
            adam_step(&mut params, &grads, &mut adam, t, config);
            if !params.is_finite() {
                return Err(Error::NumericOverflow { epoch, batch });
            }
        }
        let epoch_loss = weighted / dataset.len() as f64;
        log::debug!("lstm epoch {} loss {epoch_loss:.6e}", epoch + 1);
        history.epoch_loss.push(epoch_loss);
        history.epoch_time.push(started.elapsed());
    }
    Ok((params, history))
}

fn batch_ranges(n: usize, batch_size: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n)
        .step_by(batch_size)
        .map(move |start| start..(start + batch_size).min(n))
}

/// Scaled-space predictions for every window.
pub fn predict_scaled(
    params: &LstmParams,
    dataset: &WindowedDataset,
    config: &LstmConfig,
) -> Result<Vec<f64>> {
    check_params(params)?;
    if dataset.window_len != config.window_len {
        return Err(Error::Dimension {
            expected: config.window_len,
            got: dataset.window_len,
        });
    }
    Ok(dataset
        .inputs
        .par_iter()
        .map(|w| forward_cached(params, w, config.cell_activation).0)
        .collect())
}

/// Predictions mapped back to the original scale, aligned with
/// `dataset.origin_indices`. The windows must have been scaled by `scaler`.
pub fn predict_series(
    params: &LstmParams,
    scaler: &ScalerParams,
    dataset: &WindowedDataset,
    config: &LstmConfig,
) -> Result<Vec<f64>> {
    Ok(minmax_inverse(scaler, &predict_scaled(params, dataset, config)?))
}

/// One named tensor in a serialized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// On-disk LSTM model: config, tensors and the scaler the inputs were
/// prepared with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub format_version: u32,
    pub config: LstmConfig,
    pub scaler: Option<ScalerParams>,
    pub params: Vec<NamedArray>,
}

impl LstmModel {
    pub fn new(config: LstmConfig, scaler: Option<ScalerParams>, params: &LstmParams) -> Self {
        let arrays = TENSOR_NAMES
            .iter()
            .zip(params.shapes())
            .zip(params.tensors())
            .map(|((name, shape), data)| NamedArray {
                name: name.to_string(),
                shape,
                data: data.to_vec(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            config,
            scaler,
            params: arrays,
        }
    }

    pub fn to_params(&self) -> Result<LstmParams> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported LSTM model format version {}",
                self.format_version
            )));
        }
        let hidden = self.config.hidden_units;
        let mut params = LstmParams::zeros(hidden, INPUT_DIM);
        let shapes = params.shapes();
        if self.params.len() != TENSOR_NAMES.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                TENSOR_NAMES.len(),
                self.params.len()
            )));
        }
        for (((slot, name), shape), array) in params
            .tensors_mut()
            .into_iter()
            .zip(TENSOR_NAMES)
            .zip(shapes)
            .zip(&self.params)
        {
            if array.name != name || array.shape != shape || array.data.len() != slot.len() {
                return Err(Error::Format(format!(
                    "tensor {} has shape {:?}, expected {name} with shape {shape:?}",
                    array.name, array.shape
                )));
            }
            slot.copy_from_slice(&array.data);
        }
        if !params.is_finite() {
            return Err(Error::Format("non-finite parameter in model file".into()));
        }
        Ok(params)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(hidden: usize, window: usize, act: CellActivation) -> LstmConfig {
        LstmConfig {
            hidden_units: hidden,
            window_len: window,
            cell_activation: act,
            ..LstmConfig::default()
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = LstmConfig::default();
        let a = init_params(&cfg, 42);
        let b = init_params(&cfg, 42);
        assert_eq!(a, b);
        assert_ne!(a, init_params(&cfg, 43));
    }

    #[test]
    fn init_forget_bias_and_shapes() {
        let p = init_params(&LstmConfig::default(), 1);
        assert!(p.b_f.iter().all(|&b| b == 1.0));
        assert!(p.b_i.iter().chain(&p.b_o).chain(&p.b_c).all(|&b| b == 0.0));
        assert_eq!(p.w_i.shape(), (50, 1));
        assert_eq!(p.u_c.shape(), (50, 50));
        let bound = (6.0f64 / 51.0).sqrt();
        assert!(p.w_c.as_slice().iter().all(|x| x.abs() <= bound));
        assert_eq!(p.b_dense, 0.0);
    }

    #[test]
    fn zero_params_are_a_fixed_point() {
        for act in [CellActivation::Tanh, CellActivation::Relu] {
            let p = LstmParams::zeros(3, 1);
            let s = cell_step(&p, &[0.7], &LstmState::zeros(3), act).unwrap();
            assert_eq!(s.h, vec![0.0; 3]);
            assert_eq!(s.c, vec![0.0; 3]);
        }
        let mut p = LstmParams::zeros(4, 1);
        p.b_dense = 0.25;
        let cfg = tiny_config(4, 5, CellActivation::Relu);
        assert_eq!(forward(&p, &[1.0, -2.0, 3.0, 0.5, 9.0], &cfg).unwrap(), 0.25);
    }

    /// Hand evaluation of the gate equations for one unit, W_c = 1, tanh.
    fn scalar_step(x: f64, h: f64, c: f64) -> (f64, f64) {
        let (i, f, o) = (0.5, 0.5, 0.5);
        let g = (1.0 * x + 0.0 * h).tanh();
        let c2 = f * c + i * g;
        (o * c2.tanh(), c2)
    }

    #[test]
    fn single_unit_hand_example() {
        let mut p = LstmParams::zeros(1, 1);
        p.w_c = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let s = cell_step(&p, &[1.0], &LstmState::zeros(1), CellActivation::Tanh).unwrap();
        assert!((s.c[0] - 0.380797).abs() < 1e-6);
        assert!((s.h[0] - 0.181700).abs() < 1e-6);
        let (h1, c1) = scalar_step(1.0, 0.0, 0.0);
        assert!((s.h[0] - h1).abs() < 1e-15 && (s.c[0] - c1).abs() < 1e-15);

        // Two steps, then the dense head.
        p.w_dense = vec![2.0];
        p.b_dense = 0.1;
        let (h2, _) = scalar_step(0.5, h1, c1);
        let cfg = tiny_config(1, 2, CellActivation::Tanh);
        let y = forward(&p, &[1.0, 0.5], &cfg).unwrap();
        assert!((y - (2.0 * h2 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        let p = LstmParams::zeros(3, 1);
        let cfg = tiny_config(3, 4, CellActivation::Relu);
        assert!(matches!(
            forward(&p, &[1.0, 2.0], &cfg),
            Err(Error::Dimension { expected: 4, got: 2 })
        ));
        assert!(cell_step(&p, &[1.0, 2.0], &LstmState::zeros(3), CellActivation::Relu).is_err());
        assert!(cell_step(&p, &[1.0], &LstmState::zeros(2), CellActivation::Relu).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 2.5);
        assert_eq!(mse_loss(&[4.0], &[1.0]).unwrap(), 9.0);
        assert!(mse_loss(&[], &[]).is_err());
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn dense_bias_gradient_at_zero_params() {
        let p = LstmParams::zeros(3, 1);
        let windows = vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]];
        let targets = [1.0, 2.0, 4.5];
        let (g, loss) = backward(&p, &windows, &targets, CellActivation::Relu).unwrap();
        let mean = targets.iter().sum::<f64>() / 3.0;
        assert!((g.b_dense - (-2.0 * mean)).abs() < 1e-12);
        assert!((loss - (1.0 + 4.0 + 20.25) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let cfg = tiny_config(3, 4, CellActivation::Tanh);
        let p = init_params(&cfg, 5);
        let windows = vec![vec![0.1, -0.2, 0.3, 0.4], vec![0.5, 0.1, -0.3, 0.2]];
        let targets: Vec<f64> = windows.iter().map(|w| forward(&p, w, &cfg).unwrap()).collect();
        let (g, loss) = backward(&p, &windows, &targets, CellActivation::Tanh).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let cfg = tiny_config(3, 4, CellActivation::Relu);
        let mut p = init_params(&cfg, 9);
        let before = p.clone();
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &LstmParams::zeros(3, 1), &mut st, 1, &cfg);
        assert_eq!(p, before);
    }

    #[test]
    fn adam_first_step_by_hand() {
        // t = 1: m = 0.1, v = 0.001, so m̂ = v̂ = 1 and the step is lr / (1 + eps).
        let cfg = LstmConfig {
            grad_clip_norm: None,
            ..tiny_config(1, 1, CellActivation::Relu)
        };
        let mut p = LstmParams::zeros(1, 1);
        let mut g = LstmParams::zeros(1, 1);
        g.b_dense = 1.0;
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, 1, &cfg);
        assert!((st.m.b_dense - 0.1).abs() < 1e-15);
        assert!((st.v.b_dense - 0.001).abs() < 1e-15);
        let expected = -1e-3 / (1.0 + 1e-8);
        assert!((p.b_dense - expected).abs() < 1e-18, "{}", p.b_dense);
        assert_eq!(p.w_i.as_slice(), &[0.0]);
    }

    #[test]
    fn clipping_halves_norm_ten_gradient() {
        let mut g = LstmParams::zeros(1, 1);
        g.b_dense = 6.0;
        g.w_dense = vec![8.0];
        let norm = clip_global_norm(&mut g, 5.0);
        assert_eq!(norm, 10.0);
        assert!((g.b_dense - 3.0).abs() < 1e-15 && (g.w_dense[0] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn zero_epochs_returns_init() {
        let cfg = LstmConfig {
            epochs: 0,
            ..tiny_config(3, 2, CellActivation::Relu)
        };
        let ds = crate::preprocess::sliding_windows(&[0.1, 0.2, 0.3, 0.4], 2).unwrap();
        let (p, h) = train(&ds, &cfg).unwrap();
        assert_eq!(p, init_params(&cfg, cfg.seed));
        assert!(h.epoch_loss.is_empty());
    }

    #[test]
    fn model_json_round_trip_is_exact() {
        let cfg = tiny_config(4, 3, CellActivation::Tanh);
        let p = init_params(&cfg, 77);
        let model = LstmModel::new(cfg, Some(ScalerParams::new(0.009, 0.012).unwrap()), &p);
        let back = LstmModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_params().unwrap(), p);
    }

    #[test]
    fn model_rejects_bad_shapes() {
        let cfg = tiny_config(4, 3, CellActivation::Tanh);
        let mut model = LstmModel::new(cfg, None, &init_params(&cfg_clone(4), 1));
        model.params[4].shape = vec![4, 3];
        assert!(model.to_params().is_err());
    }

    fn cfg_clone(h: usize) -> LstmConfig {
        tiny_config(h, 3, CellActivation::Tanh)
    }
}
