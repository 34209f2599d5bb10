//! Minimal double-precision layers with explicit backward passes.
//!
//! Every layer exposes `forward` returning its output plus whatever the
//! backward pass needs, and `backward` accumulating parameter gradients into a
//! same-shaped gradient instance of the layer.

mod attention;
mod encoder;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng as _;
use rand_chacha::ChaCha8Rng;

pub use attention::{AttentionCache, MultiHeadAttention};
pub use encoder::{Encoder, EncoderCache, EncoderConfig, EncoderLayer};

pub type Matrix = Array2<f64>;
pub type Rng = ChaCha8Rng;

/// Anything that owns named parameter tensors.
///
/// Both visitors must enumerate tensors in the same order; optimizers and
/// checkpoints rely on it.
pub trait Module {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_owned()
    } else {
        format!("{prefix}.{name}")
    }
}

pub fn named_params<M: Module + ?Sized>(module: &M) -> Vec<(String, &Matrix)> {
    let mut out = Vec::new();
    module.visit("", &mut |name, m| out.push((name, m)));
    out
}

pub fn param_count<M: Module + ?Sized>(module: &M) -> usize {
    named_params(module).iter().map(|(_, m)| m.len()).sum()
}

/// A copy of `module` with every parameter set to zero, used as a gradient buffer.
pub fn zeros_like<M: Module + Clone>(module: &M) -> M {
    let mut g = module.clone();
    g.visit_mut("", &mut |_, m| m.fill(0.0));
    g
}

/// `acc += other`, parameter by parameter.
pub fn add_assign<M: Module>(acc: &mut M, other: &M) {
    let sources: Vec<&Matrix> = named_params(other).into_iter().map(|(_, m)| m).collect();
    let mut i = 0;
    acc.visit_mut("", &mut |_, m| {
        *m += sources[i];
        i += 1;
    });
}

pub fn scale<M: Module>(module: &mut M, factor: f64) {
    module.visit_mut("", &mut |_, m| m.mapv_inplace(|v| v * factor));
}

pub(crate) fn uniform(rng: &mut Rng, rows: usize, cols: usize, bound: f64) -> Matrix {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound))
}

#[derive(Debug, Clone)]
pub struct Linear {
    /// `in × out`
    pub weight: Matrix,
    /// `1 × out`
    pub bias: Matrix,
}

impl Linear {
    pub fn new(rng: &mut Rng, input: usize, output: usize) -> Self {
        let bound = (6.0 / (input + output) as f64).sqrt();
        Linear {
            weight: uniform(rng, input, output, bound),
            bias: Array2::zeros((1, output)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &ArrayView2<f64>) -> Matrix {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulates into `grad` and returns the input gradient.
    pub fn backward(&self, x: &ArrayView2<f64>, dy: &Matrix, grad: &mut Linear) -> Matrix {
        ndarray::linalg::general_mat_mul(1.0, &x.t(), dy, 1.0, &mut grad.weight);
        grad.bias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.weight.t())
    }
}

impl Module for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Matrix,
    pub beta: Matrix,
}

pub struct LayerNormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
}

const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Array2::ones((1, dim)),
            beta: Array2::zeros((1, dim)),
        }
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, LayerNormCache) {
        let d = x.ncols() as f64;
        let mut normalized = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in normalized.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
            let is = 1.0 / (var + LN_EPS).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        let out = &normalized * &self.gamma + &self.beta;
        (out, LayerNormCache { normalized, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Matrix, grad: &mut LayerNorm) -> Matrix {
        grad.gamma += &(dy * &cache.normalized).sum_axis(Axis(0)).insert_axis(Axis(0));
        grad.beta += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let dxhat = dy * &self.gamma;
        let d = dy.ncols() as f64;
        let mut dx = Array2::zeros(dy.raw_dim());
        for (i, mut row) in dx.rows_mut().into_iter().enumerate() {
            let g = dxhat.row(i);
            let xh = cache.normalized.row(i);
            let sum_g = g.sum();
            let sum_gx = g.dot(&xh);
            let is = cache.inv_std[i];
            for j in 0..row.len() {
                row[j] = is / d * (d * g[j] - sum_g - xh[j] * sum_gx);
            }
        }
        dx
    }
}

impl Module for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(join(prefix, "gamma"), &self.gamma);
        f(join(prefix, "beta"), &self.beta);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(join(prefix, "gamma"), &mut self.gamma);
        f(join(prefix, "beta"), &mut self.beta);
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub fn gelu(x: &Matrix) -> Matrix {
    x.mapv(|v| 0.5 * v * (1.0 + (GELU_C * (v + 0.044715 * v * v * v)).tanh()))
}

pub fn gelu_backward(x: &Matrix, dy: &Matrix) -> Matrix {
    let mut dx = dy.clone();
    ndarray::Zip::from(&mut dx).and(x).for_each(|d, &v| {
        let t = (GELU_C * (v + 0.044715 * v * v * v)).tanh();
        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * v * v);
        *d *= 0.5 * (1.0 + t) + 0.5 * v * dt;
    });
    dx
}

/// Inverted dropout. Returns the scaled mask when active.
pub fn dropout(x: Matrix, rate: f64, rng: Option<&mut Rng>) -> (Matrix, Option<Matrix>) {
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            });
            (x * &mask, Some(mask))
        }
        _ => (x, None),
    }
}

pub fn dropout_backward(dy: Matrix, mask: &Option<Matrix>) -> Matrix {
    match mask {
        Some(mask) => dy * mask,
        None => dy,
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Row-wise log-softmax.
pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub fn gather_rows(table: &Matrix, ids: &[u32]) -> Matrix {
    let mut out = Array2::zeros((ids.len(), table.ncols()));
    for (i, &id) in ids.iter().enumerate() {
        out.row_mut(i).assign(&table.row(id as usize));
    }
    out
}

pub fn scatter_add_rows(grad: &mut Matrix, ids: &[u32], dy: &Matrix) {
    for (i, &id) in ids.iter().enumerate() {
        let mut row = grad.row_mut(id as usize);
        row += &dy.row(i);
    }
}

pub fn hconcat(parts: &[&Matrix]) -> Matrix {
    let views: Vec<ArrayView2<f64>> = parts.iter().map(|m| m.view()).collect();
    concatenate(Axis(1), &views).expect("row counts agree")
}

pub fn column_block(m: &Matrix, start: usize, width: usize) -> ArrayView2<'_, f64> {
    m.slice(s![.., start..start + width])
}
