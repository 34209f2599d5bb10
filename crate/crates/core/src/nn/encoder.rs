use serde::{Deserialize, Serialize};

use super::{
    dropout, dropout_backward, gelu, gelu_backward, join, uniform, AttentionCache, LayerNorm,
    LayerNormCache, Linear, Matrix, Module, MultiHeadAttention, Rng,
};

/// Shape of the from-scratch transformer encoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub dropout: f64,
    /// Rows in the learned position table.
    pub max_len: usize,
}

/// Post-LN transformer block (BERT layout).
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attention: MultiHeadAttention,
    pub attention_norm: LayerNorm,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub ff_norm: LayerNorm,
}

pub struct LayerCache {
    attention: AttentionCache,
    attention_mask: Option<Matrix>,
    attention_norm: LayerNormCache,
    normed: Matrix,
    ff_pre: Matrix,
    ff_act: Matrix,
    ff_mask: Option<Matrix>,
    ff_norm: LayerNormCache,
}

impl EncoderLayer {
    fn new(rng: &mut Rng, config: &EncoderConfig) -> Self {
        EncoderLayer {
            attention: MultiHeadAttention::new(rng, config.width, config.heads),
            attention_norm: LayerNorm::new(config.width),
            ff_in: Linear::new(rng, config.width, config.ff_width),
            ff_out: Linear::new(rng, config.ff_width, config.width),
            ff_norm: LayerNorm::new(config.width),
        }
    }

    fn forward(&self, x: &Matrix, rate: f64, mut rng: Option<&mut Rng>) -> (Matrix, LayerCache) {
        let (attended, attention) = self.attention.forward(x);
        let (attended, attention_mask) = dropout(attended, rate, rng.as_deref_mut());
        let (normed, attention_norm) = self.attention_norm.forward(&(x + &attended));
        let ff_pre = self.ff_in.forward(&normed.view());
        let ff_act = gelu(&ff_pre);
        let ff = self.ff_out.forward(&ff_act.view());
        let (ff, ff_mask) = dropout(ff, rate, rng);
        let (out, ff_norm) = self.ff_norm.forward(&(&normed + &ff));
        let cache = LayerCache {
            attention,
            attention_mask,
            attention_norm,
            normed,
            ff_pre,
            ff_act,
            ff_mask,
            ff_norm,
        };
        (out, cache)
    }

    fn backward(&self, cache: &LayerCache, dy: &Matrix, grad: &mut EncoderLayer) -> Matrix {
        let dsum = self.ff_norm.backward(&cache.ff_norm, dy, &mut grad.ff_norm);
        let dff = dropout_backward(dsum.clone(), &cache.ff_mask);
        let dact = self.ff_out.backward(&cache.ff_act.view(), &dff, &mut grad.ff_out);
        let dpre = gelu_backward(&cache.ff_pre, &dact);
        let mut dnormed = self.ff_in.backward(&cache.normed.view(), &dpre, &mut grad.ff_in);
        dnormed += &dsum;
        let dsum = self
            .attention_norm
            .backward(&cache.attention_norm, &dnormed, &mut grad.attention_norm);
        let datt = dropout_backward(dsum.clone(), &cache.attention_mask);
        let mut dx = self.attention.backward(&cache.attention, &datt, &mut grad.attention);
        dx += &dsum;
        dx
    }
}

impl Module for EncoderLayer {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.attention.visit(&join(prefix, "attention"), f);
        self.attention_norm.visit(&join(prefix, "attention_norm"), f);
        self.ff_in.visit(&join(prefix, "ff_in"), f);
        self.ff_out.visit(&join(prefix, "ff_out"), f);
        self.ff_norm.visit(&join(prefix, "ff_norm"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.attention.visit_mut(&join(prefix, "attention"), f);
        self.attention_norm.visit_mut(&join(prefix, "attention_norm"), f);
        self.ff_in.visit_mut(&join(prefix, "ff_in"), f);
        self.ff_out.visit_mut(&join(prefix, "ff_out"), f);
        self.ff_norm.visit_mut(&join(prefix, "ff_norm"), f);
    }
}

/// Learned positions, embedding norm, and a stack of [`EncoderLayer`]s.
///
/// Token embeddings are summed by the caller and passed in, so the same
/// encoder serves plain character input and character + label input.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub positions: Matrix,
    pub embedding_norm: LayerNorm,
    pub layers: Vec<EncoderLayer>,
}

pub struct EncoderCache {
    embedding_norm: LayerNormCache,
    embedding_mask: Option<Matrix>,
    layers: Vec<LayerCache>,
}

impl Encoder {
    pub fn new(rng: &mut Rng, config: EncoderConfig) -> Self {
        let positions = uniform(rng, config.max_len, config.width, 0.1);
        let layers = (0..config.layers).map(|_| EncoderLayer::new(rng, &config)).collect();
        Encoder {
            config,
            positions,
            embedding_norm: LayerNorm::new(config.width),
            layers,
        }
    }

    /// Encodes `tokens` (`n × width`). Dropout is active iff `rng` is given.
    pub fn forward(&self, tokens: &Matrix, mut rng: Option<&mut Rng>) -> (Matrix, EncoderCache) {
        let n = tokens.nrows();
        assert!(n <= self.config.max_len, "sequence longer than position table");
        let summed = tokens + &self.positions.slice(ndarray::s![..n, ..]);
        let (normed, embedding_norm) = self.embedding_norm.forward(&summed);
        let (mut x, embedding_mask) = dropout(normed, self.config.dropout, rng.as_deref_mut());
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = layer.forward(&x, self.config.dropout, rng.as_deref_mut());
            layers.push(cache);
            x = out;
        }
        let cache = EncoderCache {
            embedding_norm,
            embedding_mask,
            layers,
        };
        (x, cache)
    }

    /// Returns the gradient with respect to the token embeddings.
    pub fn backward(&self, cache: &EncoderCache, dy: &Matrix, grad: &mut Encoder) -> Matrix {
        let mut d = dy.clone();
        for ((layer, lcache), lgrad) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grad.layers.iter_mut())
            .rev()
        {
            d = layer.backward(lcache, &d, lgrad);
        }
        let d = dropout_backward(d, &cache.embedding_mask);
        let dsum = self
            .embedding_norm
            .backward(&cache.embedding_norm, &d, &mut grad.embedding_norm);
        let n = dsum.nrows();
        let mut pos = grad.positions.slice_mut(ndarray::s![..n, ..]);
        pos += &dsum;
        dsum
    }
}

impl Module for Encoder {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(join(prefix, "positions"), &self.positions);
        self.embedding_norm.visit(&join(prefix, "embedding_norm"), f);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&join(prefix, &format!("layer{i}")), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(join(prefix, "positions"), &mut self.positions);
        self.embedding_norm.visit_mut(&join(prefix, "embedding_norm"), f);
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit_mut(&join(prefix, &format!("layer{i}")), f);
        }
    }
}
