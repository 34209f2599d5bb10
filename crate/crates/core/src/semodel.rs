//! Bigram-enhanced character tagger.
//!
//! Characters are encoded by a transformer, each hidden row is paired with its
//! left and right neighbours through two independent linear bigram layers, the
//! three blocks are concatenated and linearly fused, and a softmax head gives
//! a distribution over joint tags for every character.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    self, column_block, dropout, dropout_backward, gather_rows, hconcat, log_softmax_rows,
    scatter_add_rows, softmax_rows, uniform, Encoder, EncoderCache, EncoderConfig, Linear, Matrix,
    Module, Rng,
};
use crate::tagset::TagSet;
use crate::uncertainty::UncertainComponent;
use crate::vocab::Vocab;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Encoder width.
    pub hidden_width: usize,
    /// Width of each bigram feature vector.
    pub bigram_width: usize,
    /// Width of the fused representation.
    pub fusion_width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub dropout: f64,
    pub max_seq_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_width: 64,
            bigram_width: 32,
            fusion_width: 64,
            layers: 2,
            heads: 4,
            ff_width: 128,
            dropout: 0.1,
            max_seq_len: 128,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("hidden_width", self.hidden_width),
            ("bigram_width", self.bigram_width),
            ("fusion_width", self.fusion_width),
            ("heads", self.heads),
            ("ff_width", self.ff_width),
            ("max_seq_len", self.max_seq_len),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.hidden_width.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden_width {} is not divisible by {} heads",
                self.hidden_width, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub(crate) fn encoder(&self, max_len: usize) -> EncoderConfig {
        EncoderConfig {
            width: self.hidden_width,
            layers: self.layers,
            heads: self.heads,
            ff_width: self.ff_width,
            dropout: self.dropout,
            max_len,
        }
    }
}

/// Per-character probability distributions over joint tags (`n × d_t`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionMatrix(Matrix);

impl EmissionMatrix {
    pub const TOLERANCE: f64 = 1e-6;

    /// Wraps `probs`, checking every row is a distribution.
    pub fn new(probs: Matrix) -> Result<Self> {
        for (i, row) in probs.rows().into_iter().enumerate() {
            let sum = row.sum();
            if (sum - 1.0).abs() > Self::TOLERANCE || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument(format!(
                    "row {i} is not a probability distribution (sum {sum})"
                )));
            }
        }
        Ok(EmissionMatrix(probs))
    }

    pub fn from_logits(logits: &Matrix) -> Self {
        EmissionMatrix(softmax_rows(logits))
    }

    pub fn probs(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn num_tags(&self) -> usize {
        self.0.ncols()
    }

    /// Element-wise mean of equally shaped matrices.
    pub fn mean(items: &[EmissionMatrix]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot average an empty list".into()))?;
        let mut sum = Array2::zeros(first.0.raw_dim());
        for item in items {
            if item.0.dim() != first.0.dim() {
                return Err(Error::LengthMismatch(format!(
                    "emission shapes {:?} and {:?}",
                    first.0.dim(),
                    item.0.dim()
                )));
            }
            sum += &item.0;
        }
        sum /= items.len() as f64;
        Ok(EmissionMatrix(sum))
    }
}

/// Two independent linear layers over `h[i-1] ⊕ h[i]` and `h[i] ⊕ h[i+1]`.
///
/// Sentence edges use learned boundary vectors in place of the missing
/// neighbour.
#[derive(Debug, Clone)]
pub struct BigramLayer {
    pub left: Linear,
    pub right: Linear,
    /// Stands in for `h[-1]`.
    pub start: Matrix,
    /// Stands in for `h[n]`.
    pub end: Matrix,
}

pub struct BigramCache {
    left_in: Matrix,
    right_in: Matrix,
}

impl BigramLayer {
    pub fn new(rng: &mut Rng, hidden: usize, width: usize) -> Self {
        BigramLayer {
            left: Linear::new(rng, 2 * hidden, width),
            right: Linear::new(rng, 2 * hidden, width),
            start: uniform(rng, 1, hidden, 0.1),
            end: uniform(rng, 1, hidden, 0.1),
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.start.ncols()
    }

    pub fn forward(&self, h: &Matrix) -> (Matrix, Matrix, BigramCache) {
        let (n, d) = h.dim();
        let mut left_in = Array2::zeros((n, 2 * d));
        let mut right_in = Array2::zeros((n, 2 * d));
        for i in 0..n {
            let prev = if i == 0 { self.start.row(0) } else { h.row(i - 1) };
            let next = if i + 1 == n { self.end.row(0) } else { h.row(i + 1) };
            left_in.slice_mut(s![i, ..d]).assign(&prev);
            left_in.slice_mut(s![i, d..]).assign(&h.row(i));
            right_in.slice_mut(s![i, ..d]).assign(&h.row(i));
            right_in.slice_mut(s![i, d..]).assign(&next);
        }
        let b1 = self.left.forward(&left_in.view());
        let b2 = self.right.forward(&right_in.view());
        (b1, b2, BigramCache { left_in, right_in })
    }

    pub fn backward(&self, cache: &BigramCache, db1: &Matrix, db2: &Matrix, grad: &mut BigramLayer) -> Matrix {
        let dleft = self.left.backward(&cache.left_in.view(), db1, &mut grad.left);
        let dright = self.right.backward(&cache.right_in.view(), db2, &mut grad.right);
        let (n, two_d) = dleft.dim();
        let d = two_d / 2;
        let mut dh = Array2::zeros((n, d));
        for i in 0..n {
            let mut row = dh.row_mut(i);
            row += &dleft.slice(s![i, d..]);
            row += &dright.slice(s![i, ..d]);
            if i == 0 {
                let mut start = grad.start.row_mut(0);
                start += &dleft.slice(s![i, ..d]);
            } else {
                let mut prev = dh.row_mut(i - 1);
                prev += &dleft.slice(s![i, ..d]);
            }
            if i + 1 == n {
                let mut end = grad.end.row_mut(0);
                end += &dright.slice(s![i, d..]);
            } else {
                let mut next = dh.row_mut(i + 1);
                next += &dright.slice(s![i, d..]);
            }
        }
        dh
    }
}

impl Module for BigramLayer {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.left.visit(&nn::join(prefix, "left"), f);
        self.right.visit(&nn::join(prefix, "right"), f);
        f(nn::join(prefix, "start"), &self.start);
        f(nn::join(prefix, "end"), &self.end);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.left.visit_mut(&nn::join(prefix, "left"), f);
        self.right.visit_mut(&nn::join(prefix, "right"), f);
        f(nn::join(prefix, "start"), &mut self.start);
        f(nn::join(prefix, "end"), &mut self.end);
    }
}

/// All trainable tensors of the tagger. Also serves as its gradient buffer.
#[derive(Debug, Clone)]
pub struct SeNetwork {
    pub char_embeddings: Matrix,
    pub encoder: Encoder,
    pub bigram: BigramLayer,
    pub fusion: Linear,
    pub head: Linear,
}

impl Module for SeNetwork {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(nn::join(prefix, "char_embeddings"), &self.char_embeddings);
        self.encoder.visit(&nn::join(prefix, "encoder"), f);
        self.bigram.visit(&nn::join(prefix, "bigram"), f);
        self.fusion.visit(&nn::join(prefix, "fusion"), f);
        self.head.visit(&nn::join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(nn::join(prefix, "char_embeddings"), &mut self.char_embeddings);
        self.encoder.visit_mut(&nn::join(prefix, "encoder"), f);
        self.bigram.visit_mut(&nn::join(prefix, "bigram"), f);
        self.fusion.visit_mut(&nn::join(prefix, "fusion"), f);
        self.head.visit_mut(&nn::join(prefix, "head"), f);
    }
}

#[derive(Debug, Clone)]
pub struct SeModel {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub tagset: TagSet,
    pub net: SeNetwork,
}

/// Intermediate values kept for the backward pass.
pub struct SeCache {
    chars: Vec<u32>,
    encoder: EncoderCache,
    hidden_mask: Option<Matrix>,
    bigram: BigramCache,
    composite: Matrix,
    fused: Matrix,
}

impl SeModel {
    pub fn new(config: ModelConfig, vocab: Vocab, tagset: TagSet, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let net = SeNetwork {
            char_embeddings: uniform(rng, vocab.len(), config.hidden_width, 0.1),
            encoder: Encoder::new(rng, config.encoder(config.max_seq_len)),
            bigram: BigramLayer::new(rng, config.hidden_width, config.bigram_width),
            fusion: Linear::new(rng, config.hidden_width + 2 * config.bigram_width, config.fusion_width),
            head: Linear::new(rng, config.fusion_width, tagset.len()),
        };
        Ok(SeModel {
            config,
            vocab,
            tagset,
            net,
        })
    }

    pub fn num_tags(&self) -> usize {
        self.tagset.len()
    }

    /// Changes the dropout rate used in MC mode and training.
    pub fn set_dropout(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout {rate} outside [0, 1)")));
        }
        self.config.dropout = rate;
        self.net.encoder.config.dropout = rate;
        Ok(())
    }

    fn check_len(&self, n: usize) -> Result<()> {
        if n > self.config.max_seq_len {
            return Err(Error::SequenceTooLong {
                required: self.config.max_seq_len,
                actual: n,
            });
        }
        Ok(())
    }

    /// Character ids to hidden rows (`n × d_h`).
    pub fn encode(&self, chars: &[u32], rng: Option<&mut Rng>) -> Result<Matrix> {
        self.check_len(chars.len())?;
        let tokens = gather_rows(&self.net.char_embeddings, chars);
        Ok(self.net.encoder.forward(&tokens, rng).0)
    }

    pub fn bigram_features(&self, h: &Matrix) -> Result<(Matrix, Matrix)> {
        expect_width("bigram input", self.config.hidden_width, h.ncols())?;
        let (b1, b2, _) = self.net.bigram.forward(h);
        Ok((b1, b2))
    }

    /// Concatenates `h ⊕ b1 ⊕ b2` row-wise and applies the fusion layer.
    pub fn fuse(&self, h: &Matrix, b1: &Matrix, b2: &Matrix) -> Result<Matrix> {
        expect_width("fusion hidden block", self.config.hidden_width, h.ncols())?;
        expect_width("fusion left bigram block", self.config.bigram_width, b1.ncols())?;
        expect_width("fusion right bigram block", self.config.bigram_width, b2.ncols())?;
        if b1.nrows() != h.nrows() || b2.nrows() != h.nrows() {
            return Err(Error::DimensionMismatch {
                context: "fusion rows",
                expected: h.nrows(),
                actual: b1.nrows().min(b2.nrows()),
            });
        }
        Ok(self.net.fusion.forward(&hconcat(&[h, b1, b2]).view()))
    }

    pub fn emit(&self, fused: &Matrix) -> Result<EmissionMatrix> {
        expect_width("head input", self.config.fusion_width, fused.ncols())?;
        Ok(EmissionMatrix::from_logits(&self.net.head.forward(&fused.view())))
    }

    /// Full forward pass. Dropout (training or MC sampling) is on iff `rng` is given.
    pub fn emissions(&self, chars: &[u32], rng: Option<&mut Rng>) -> Result<EmissionMatrix> {
        let (logits, _) = self.forward(chars, rng)?;
        Ok(EmissionMatrix::from_logits(&logits))
    }

    pub fn emissions_for_text(&self, text: &str, rng: Option<&mut Rng>) -> Result<EmissionMatrix> {
        self.emissions(&self.vocab.encode(text), rng)
    }

    /// Logits plus the cache needed by [`SeModel::backward`].
    pub fn forward(&self, chars: &[u32], mut rng: Option<&mut Rng>) -> Result<(Matrix, SeCache)> {
        self.check_len(chars.len())?;
        let tokens = gather_rows(&self.net.char_embeddings, chars);
        let (h, encoder) = self.net.encoder.forward(&tokens, rng.as_deref_mut());
        let (hidden, hidden_mask) = dropout(h, self.config.dropout, rng);
        let (b1, b2, bigram) = self.net.bigram.forward(&hidden);
        let composite = hconcat(&[&hidden, &b1, &b2]);
        let fused = self.net.fusion.forward(&composite.view());
        let logits = self.net.head.forward(&fused.view());
        let cache = SeCache {
            chars: chars.to_vec(),
            encoder,
            hidden_mask,
            bigram,
            composite,
            fused,
        };
        Ok((logits, cache))
    }

    pub fn backward(&self, cache: &SeCache, dlogits: &Matrix, grad: &mut SeNetwork) {
        let net = &self.net;
        let dfused = net.head.backward(&cache.fused.view(), dlogits, &mut grad.head);
        let dcomposite = net.fusion.backward(&cache.composite.view(), &dfused, &mut grad.fusion);
        let (dh_w, db_w) = (self.config.hidden_width, self.config.bigram_width);
        let mut dhidden = column_block(&dcomposite, 0, dh_w).to_owned();
        let db1 = column_block(&dcomposite, dh_w, db_w).to_owned();
        let db2 = column_block(&dcomposite, dh_w + db_w, db_w).to_owned();
        dhidden += &net.bigram.backward(&cache.bigram, &db1, &db2, &mut grad.bigram);
        let dh = dropout_backward(dhidden, &cache.hidden_mask);
        let dtokens = net.encoder.backward(&cache.encoder, &dh, &mut grad.encoder);
        scatter_add_rows(&mut grad.char_embeddings, &cache.chars, &dtokens);
    }
}

fn expect_width(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Per-position loss weights: 1 inside any component, `alpha` elsewhere.
pub fn position_weights(n: usize, components: &[UncertainComponent], alpha: f64) -> Vec<f64> {
    let mut weights = vec![alpha; n];
    for c in components {
        for w in &mut weights[c.start.min(n)..c.end.min(n)] {
            *w = 1.0;
        }
    }
    weights
}

/// `Σ ω_i · CE_i / Σ ω_i` over the rows of `probs`.
///
/// `gold` holds joint-tag indices. `probs` only ever covers the original
/// sentence, so appended knowledge never contributes.
pub fn weighted_loss(
    probs: &EmissionMatrix,
    gold: &[usize],
    components: &[UncertainComponent],
    alpha: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
    }
    if gold.len() != probs.len() {
        return Err(Error::LengthMismatch(format!(
            "{} gold labels for {} positions",
            gold.len(),
            probs.len()
        )));
    }
    let weights = position_weights(gold.len(), components, alpha);
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Err(Error::ZeroWeight);
    }
    let p = probs.probs();
    let sum: f64 = gold
        .iter()
        .zip(&weights)
        .enumerate()
        .map(|(i, (&g, &w))| -w * p[[i, g]].max(f64::MIN_POSITIVE).ln())
        .sum();
    Ok(sum / total)
}

/// Unnormalised weighted cross-entropy over the first `gold.len()` logit rows.
///
/// Returns `(Σ ω·CE, Σ ω, dlogits)` where `dlogits` is the gradient of
/// `Σ ω·CE`; rows past `gold.len()` have exactly zero gradient. Dividing both
/// by a batch-wide `Σ ω` yields the normalised loss.
pub fn weighted_cross_entropy(logits: &Matrix, gold: &[usize], weights: &[f64]) -> (f64, f64, Matrix) {
    let n = gold.len();
    assert!(n <= logits.nrows() && weights.len() == n);
    let log_probs = log_softmax_rows(&logits.slice(s![..n, ..]).to_owned());
    let mut dlogits = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for i in 0..n {
        let w = weights[i];
        loss -= w * log_probs[[i, gold[i]]];
        if w != 0.0 {
            let mut row = dlogits.row_mut(i);
            row.assign(&log_probs.row(i).mapv(|v| w * v.exp()));
            row[gold[i]] -= w;
        }
    }
    (loss, weights.iter().sum(), dlogits)
}
