//! Mini-batch training of the tagger and the knowledge-fusion model.

use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::config::TrainConfig;
use crate::corpus::AnnotatedCorpus;
use crate::decode::TransitionMask;
use crate::error::{Error, Result};
use crate::kfusion::{build_kf_input, KfConfig, KfInput, KfModel, KfNetwork};
use crate::nn::{scale, zeros_like, Module, Rng};
use crate::optim::{AdamW, LinearSchedule};
use crate::retrieval::{knowledge_text, KnowledgeCorpus};
use crate::semodel::{position_weights, weighted_cross_entropy, ModelConfig, SeModel, SeNetwork};
use crate::tagset::TagSet;
use crate::uncertainty::{sample_candidates, sentence_seed};
use crate::vocab::Vocab;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Weighted mean loss of each completed epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// A model whose parameters live in one [`Module`].
pub trait Trainable {
    type Net: Module + Clone;
    fn net(&self) -> &Self::Net;
    fn net_mut(&mut self) -> &mut Self::Net;
}

impl Trainable for SeModel {
    type Net = SeNetwork;
    fn net(&self) -> &SeNetwork {
        &self.net
    }
    fn net_mut(&mut self) -> &mut SeNetwork {
        &mut self.net
    }
}

impl Trainable for KfModel {
    type Net = KfNetwork;
    fn net(&self) -> &KfNetwork {
        &self.net
    }
    fn net_mut(&mut self) -> &mut KfNetwork {
        &mut self.net
    }
}

/// Runs AdamW over `count` examples.
///
/// `example(model, i, rng, grad)` adds the gradient of example `i`'s summed
/// weighted loss into `grad` and returns `(Σ ω·loss, Σ ω)`. Each batch is
/// normalised by its total weight. `on_epoch(epoch, loss, model)` returning
/// `false` stops training early.
pub fn fit<M: Trainable>(
    model: &mut M,
    count: usize,
    config: &TrainConfig,
    seed: u64,
    mut example: impl FnMut(&M, usize, &mut Rng, &mut M::Net) -> Result<(f64, f64)>,
    mut on_epoch: impl FnMut(usize, f64, &M) -> bool,
) -> Result<TrainLog> {
    config.validate()?;
    let mut log = TrainLog::default();
    if count == 0 {
        return Ok(log);
    }
    let batches = count.div_ceil(config.batch_size);
    let schedule = LinearSchedule::new(config.learning_rate, batches * config.epochs, config.warmup_ratio);
    let mut optimizer = AdamW::new(model.net(), config.weight_decay);
    let mut rng = Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..count).collect();
    let mut grad = zeros_like(model.net());
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_weight) = (0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            scale(&mut grad, 0.0);
            let (mut loss, mut weight) = (0.0, 0.0);
            for &i in batch {
                let (l, w) = example(model, i, &mut rng, &mut grad)?;
                loss += l;
                weight += w;
            }
            if weight == 0.0 {
                continue;
            }
            scale(&mut grad, 1.0 / weight);
            optimizer.step(model.net_mut(), &grad, schedule.rate(log.steps));
            log.steps += 1;
            epoch_loss += loss;
            epoch_weight += weight;
        }
        let mean = if epoch_weight > 0.0 { epoch_loss / epoch_weight } else { 0.0 };
        if !mean.is_finite() {
            return Err(Error::InvalidArgument(format!("training diverged at epoch {}", epoch + 1)));
        }
        log.epoch_losses.push(mean);
        if !on_epoch(epoch + 1, mean, model) {
            break;
        }
    }
    Ok(log)
}

/// Trains a tagger from scratch with plain mean cross-entropy.
pub fn train_se(
    corpus: &AnnotatedCorpus,
    tagset: &TagSet,
    config: &ModelConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<(SeModel, TrainLog)> {
    train_se_with(corpus, tagset, config, train, seed, |_, _, _| true)
}

pub fn train_se_with(
    corpus: &AnnotatedCorpus,
    tagset: &TagSet,
    config: &ModelConfig,
    train: &TrainConfig,
    seed: u64,
    on_epoch: impl FnMut(usize, f64, &SeModel) -> bool,
) -> Result<(SeModel, TrainLog)> {
    train_se_vocab(corpus, Vocab::build(corpus.texts()), tagset, config, train, seed, on_epoch)
}

/// Like [`train_se_with`] with a fixed vocabulary, so that models trained on
/// different folds can be ensembled.
pub fn train_se_vocab(
    corpus: &AnnotatedCorpus,
    vocab: Vocab,
    tagset: &TagSet,
    config: &ModelConfig,
    train: &TrainConfig,
    seed: u64,
    on_epoch: impl FnMut(usize, f64, &SeModel) -> bool,
) -> Result<(SeModel, TrainLog)> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("training corpus is empty".into()));
    }
    let mut model = SeModel::new(*config, vocab, tagset.clone(), &mut Rng::seed_from_u64(seed))?;
    let data: Vec<(Vec<u32>, Vec<usize>)> = corpus
        .sentences
        .iter()
        .map(|s| (model.vocab.encode(&s.text), s.label_indices(tagset)))
        .collect();
    let log = fit(
        &mut model,
        data.len(),
        train,
        seed.wrapping_add(1),
        |m, i, rng, grad| {
            let (chars, gold) = &data[i];
            let (logits, cache) = m.forward(chars, Some(rng))?;
            let (loss, weight, dlogits) = weighted_cross_entropy(&logits, gold, &vec![1.0; gold.len()]);
            m.backward(&cache, &dlogits, grad);
            Ok((loss, weight))
        },
        on_epoch,
    )?;
    Ok((model, log))
}

/// One supervised knowledge-fusion example.
#[derive(Debug, Clone, PartialEq)]
pub struct KfInstance {
    pub input: KfInput,
    pub gold: Vec<usize>,
    pub weights: Vec<f64>,
    /// Whether retrieval returned anything for this component.
    pub retrieved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KfDataOptions {
    pub samples: usize,
    pub top_m: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KfDataStats {
    pub sentences: usize,
    /// Sentences without any uncertain component.
    pub skipped: usize,
    pub instances: usize,
    /// Components whose input would not fit the encoder.
    pub too_long: usize,
}

/// Runs the first stage over `corpus` and builds one instance per uncertain
/// component. Characters are encoded with `vocab`.
pub fn kf_instances(
    se: &SeModel,
    vocab: &Vocab,
    max_len: usize,
    corpus: &AnnotatedCorpus,
    knowledge: &KnowledgeCorpus,
    options: &KfDataOptions,
) -> Result<(Vec<KfInstance>, KfDataStats)> {
    if !(0.0..=1.0).contains(&options.alpha) {
        return Err(Error::InvalidArgument(format!("alpha {} outside [0, 1]", options.alpha)));
    }
    let mask = TransitionMask::new(&se.tagset);
    let mut stats = KfDataStats {
        sentences: corpus.len(),
        ..KfDataStats::default()
    };
    let mut instances = Vec::new();
    for (idx, sentence) in corpus.sentences.iter().enumerate() {
        let se_chars = se.vocab.encode(&sentence.text);
        let report = sample_candidates(se, &mask, &se_chars, options.samples, sentence_seed(options.seed, idx))?;
        if report.components.is_empty() {
            stats.skipped += 1;
            continue;
        }
        let provisional: Vec<usize> = report.provisional.iter().map(|&t| se.tagset.index(t)).collect();
        let gold = sentence.label_indices(&se.tagset);
        let chars = vocab.encode(&sentence.text);
        for &component in &report.components {
            let hits = knowledge.retrieve(&sentence.text, component, options.top_m)?;
            let k = vocab.encode(&knowledge_text(&hits));
            let input = match build_kf_input(&chars, &provisional, component, &k, max_len) {
                Ok(input) => input,
                Err(Error::SequenceTooLong { .. }) => {
                    stats.too_long += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            instances.push(KfInstance {
                weights: position_weights(input.n, &[component], options.alpha),
                input,
                gold: gold.clone(),
                retrieved: !hits.is_empty(),
            });
        }
    }
    stats.instances = instances.len();
    Ok((instances, stats))
}

/// Trains the second stage on instances generated by `se` over `corpus`.
///
/// The character vocabulary covers both the corpus and the knowledge
/// sentences, since retrieved text is fed through the same embeddings.
pub fn train_kf(
    se: &SeModel,
    corpus: &AnnotatedCorpus,
    knowledge: &KnowledgeCorpus,
    config: &KfConfig,
    train: &TrainConfig,
    options: &KfDataOptions,
) -> Result<(KfModel, TrainLog, KfDataStats)> {
    let mut vocab = Vocab::build(corpus.texts());
    for s in knowledge.sentences() {
        vocab.extend(s);
    }
    let mut model = KfModel::new(
        *config,
        vocab,
        se.tagset.clone(),
        &mut Rng::seed_from_u64(options.seed.wrapping_add(2)),
    )?;
    let (instances, stats) = kf_instances(se, &model.vocab, config.max_seq_len, corpus, knowledge, options)?;
    if instances.is_empty() {
        return Err(Error::InvalidArgument(
            "the first stage found no uncertain components to train on".into(),
        ));
    }
    let log = train_kf_on(&mut model, &instances, train, options.seed.wrapping_add(3), |_, _, _| true)?;
    Ok((model, log, stats))
}

/// Fits `model` to prepared instances.
pub fn train_kf_on(
    model: &mut KfModel,
    instances: &[KfInstance],
    train: &TrainConfig,
    seed: u64,
    on_epoch: impl FnMut(usize, f64, &KfModel) -> bool,
) -> Result<TrainLog> {
    fit(
        model,
        instances.len(),
        train,
        seed,
        |m, i, rng, grad| {
            let inst = &instances[i];
            let (logits, cache) = m.forward(&inst.input, Some(rng))?;
            let (loss, weight, dlogits) = weighted_cross_entropy(&logits, &inst.gold, &inst.weights);
            m.backward(&cache, &dlogits, grad);
            Ok((loss, weight))
        },
        on_epoch,
    )
}
