//! Second-stage model that re-predicts a sentence from its characters, the
//! first-stage labels with the uncertain span masked, and retrieved knowledge
//! appended after a separator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    self, gather_rows, scatter_add_rows, uniform, Encoder, EncoderCache, EncoderConfig, Linear, Matrix,
    Module, Rng,
};
use crate::semodel::{EmissionMatrix, ModelConfig};
use crate::tagset::TagSet;
use crate::uncertainty::UncertainComponent;
use crate::vocab::Vocab;

/// Distribution over joint tags for the original sentence positions only.
pub type FusionDistribution = EmissionMatrix;

/// One position of the auxiliary label channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuxLabel {
    /// Provisional joint-tag index.
    Tag(usize),
    Mask,
    Pad,
}

impl AuxLabel {
    /// Row in the label embedding table; `Mask` and `Pad` follow the joint tags.
    pub fn id(self, num_tags: usize) -> u32 {
        match self {
            AuxLabel::Tag(t) => t as u32,
            AuxLabel::Mask => num_tags as u32,
            AuxLabel::Pad => num_tags as u32 + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KfInput {
    /// Sentence, `[SEP]`, then knowledge characters.
    pub chars_ext: Vec<u32>,
    pub aux_labels: Vec<AuxLabel>,
    /// Original sentence length.
    pub n: usize,
    pub component: UncertainComponent,
}

/// Builds the knowledge-enhanced input for one component.
///
/// Positions inside the component are masked, the rest of the sentence carries
/// its provisional label, and `[SEP]` plus knowledge positions are padded.
/// Knowledge is cut from the right to fit `max_len`; the sentence never is.
pub fn build_kf_input(
    sentence: &[u32],
    provisional: &[usize],
    component: UncertainComponent,
    knowledge: &[u32],
    max_len: usize,
) -> Result<KfInput> {
    let n = sentence.len();
    if provisional.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{} provisional labels for {n} characters",
            provisional.len()
        )));
    }
    if component.is_empty() || component.end > n {
        return Err(Error::InvalidArgument(format!(
            "component [{}, {}) outside a sentence of length {n}",
            component.start, component.end
        )));
    }
    if n + 1 > max_len {
        return Err(Error::SequenceTooLong {
            required: max_len,
            actual: n + 1,
        });
    }
    let keep = knowledge.len().min(max_len - n - 1);
    let mut chars_ext = Vec::with_capacity(n + 1 + keep);
    chars_ext.extend_from_slice(sentence);
    chars_ext.push(Vocab::SEP);
    chars_ext.extend_from_slice(&knowledge[..keep]);
    let mut aux_labels: Vec<AuxLabel> = provisional
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if component.contains(i) {
                AuxLabel::Mask
            } else {
                AuxLabel::Tag(t)
            }
        })
        .collect();
    aux_labels.resize(chars_ext.len(), AuxLabel::Pad);
    Ok(KfInput {
        chars_ext,
        aux_labels,
        n,
        component,
    })
}

/// Element-wise mean of the distributions obtained for each component.
pub fn fuse_components(distributions: &[FusionDistribution]) -> Result<FusionDistribution> {
    EmissionMatrix::mean(distributions)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KfConfig {
    /// Shared width of the character embeddings, label embeddings, and encoder.
    pub hidden_width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_width: usize,
    pub dropout: f64,
    /// Longest sentence + `[SEP]` + knowledge sequence.
    pub max_seq_len: usize,
}

impl Default for KfConfig {
    fn default() -> Self {
        KfConfig::mirroring(&ModelConfig::default())
    }
}

impl KfConfig {
    /// Same encoder shape as the first-stage tagger.
    pub fn mirroring(se: &ModelConfig) -> Self {
        KfConfig {
            hidden_width: se.hidden_width,
            layers: se.layers,
            heads: se.heads,
            ff_width: se.ff_width,
            dropout: se.dropout,
            max_seq_len: se.max_seq_len,
        }
    }

    fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            width: self.hidden_width,
            layers: self.layers,
            heads: self.heads,
            ff_width: self.ff_width,
            dropout: self.dropout,
            max_len: self.max_seq_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 || self.heads == 0 || self.ff_width == 0 || self.max_seq_len < 2 {
            return Err(Error::Config("knowledge-fusion dimensions must be positive".into()));
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
}

#[derive(Debug, Clone)]
pub struct KfNetwork {
    pub char_embeddings: Matrix,
    pub label_embeddings: Matrix,
    pub encoder: Encoder,
    pub head: Linear,
}

impl Module for KfNetwork {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(nn::join(prefix, "char_embeddings"), &self.char_embeddings);
        f(nn::join(prefix, "label_embeddings"), &self.label_embeddings);
        self.encoder.visit(&nn::join(prefix, "encoder"), f);
        self.head.visit(&nn::join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(nn::join(prefix, "char_embeddings"), &mut self.char_embeddings);
        f(nn::join(prefix, "label_embeddings"), &mut self.label_embeddings);
        self.encoder.visit_mut(&nn::join(prefix, "encoder"), f);
        self.head.visit_mut(&nn::join(prefix, "head"), f);
    }
}

#[derive(Debug, Clone)]
pub struct KfModel {
    pub config: KfConfig,
    pub vocab: Vocab,
    pub tagset: TagSet,
    pub net: KfNetwork,
}

pub struct KfCache {
    chars: Vec<u32>,
    labels: Vec<u32>,
    encoder: EncoderCache,
    hidden: Matrix,
}

impl KfModel {
    pub fn new(config: KfConfig, vocab: Vocab, tagset: TagSet, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_width;
        let net = KfNetwork {
            char_embeddings: uniform(rng, vocab.len(), d, 0.1),
            label_embeddings: uniform(rng, tagset.len() + 2, d, 0.1),
            encoder: Encoder::new(rng, config.encoder()),
            head: Linear::new(rng, d, tagset.len()),
        };
        Ok(KfModel {
            config,
            vocab,
            tagset,
            net,
        })
    }

    pub fn num_tags(&self) -> usize {
        self.tagset.len()
    }

    fn check(&self, input: &KfInput) -> Result<()> {
        let len = input.chars_ext.len();
        if input.aux_labels.len() != len || input.n >= len {
            return Err(Error::LengthMismatch(format!(
                "{len} characters, {} labels, sentence length {}",
                input.aux_labels.len(),
                input.n
            )));
        }
        if len > self.config.max_seq_len {
            return Err(Error::SequenceTooLong {
                required: self.config.max_seq_len,
                actual: len,
            });
        }
        if input.aux_labels.iter().any(|l| matches!(l, AuxLabel::Tag(t) if *t >= self.num_tags())) {
            return Err(Error::InvalidArgument("auxiliary label outside the tagset".into()));
        }
        Ok(())
    }

    /// Logits for every position of `X′` plus the backward cache. Only the
    /// first `n` rows are ever read.
    pub fn forward(&self, input: &KfInput, rng: Option<&mut Rng>) -> Result<(Matrix, KfCache)> {
        self.check(input)?;
        let labels: Vec<u32> = input.aux_labels.iter().map(|l| l.id(self.num_tags())).collect();
        let tokens = gather_rows(&self.net.char_embeddings, &input.chars_ext)
            + gather_rows(&self.net.label_embeddings, &labels);
        let (hidden, encoder) = self.net.encoder.forward(&tokens, rng);
        let logits = self.net.head.forward(&hidden.view());
        let cache = KfCache {
            chars: input.chars_ext.clone(),
            labels,
            encoder,
            hidden,
        };
        Ok((logits, cache))
    }

    pub fn backward(&self, cache: &KfCache, dlogits: &Matrix, grad: &mut KfNetwork) {
        let dhidden = self.net.head.backward(&cache.hidden.view(), dlogits, &mut grad.head);
        let dtokens = self.net.encoder.backward(&cache.encoder, &dhidden, &mut grad.encoder);
        scatter_add_rows(&mut grad.char_embeddings, &cache.chars, &dtokens);
        scatter_add_rows(&mut grad.label_embeddings, &cache.labels, &dtokens);
    }

    /// Dropout-off distribution over the original sentence positions.
    pub fn kf_forward(&self, input: &KfInput) -> Result<FusionDistribution> {
        let (logits, _) = self.forward(input, None)?;
        let rows = logits.slice(ndarray::s![..input.n, ..]).to_owned();
        Ok(EmissionMatrix::from_logits(&rows))
    }
}
