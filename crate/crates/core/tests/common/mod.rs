#![allow(dead_code)]

use jointseg::config::TrainConfig;
use jointseg::evaluation::EvalCounts;
use jointseg::kfusion::KfConfig;
use jointseg::nn::{named_params, Matrix, Module};
use jointseg::pipeline::{predict_se, Pipeline, PipelineOptions};
use jointseg::synthetic::{LanguageSpec, SyntheticLanguage, SyntheticSplit};
use jointseg::train::{train_kf, train_se, KfDataOptions, KfDataStats};
use jointseg::{KfModel, KnowledgeCorpus, ModelConfig, SeModel};

/// Small encoder used by the desk-scale experiments.
pub fn desk_model() -> ModelConfig {
    ModelConfig {
        hidden_width: 32,
        bigram_width: 16,
        fusion_width: 32,
        layers: 1,
        heads: 2,
        ff_width: 64,
        dropout: 0.1,
        max_seq_len: 64,
    }
}

pub fn desk_training(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 16,
        learning_rate: 2e-3,
        ..TrainConfig::default()
    }
}

/// Tagger split, fusion split, test split and the shared knowledge corpus.
pub struct Benchmark {
    pub lang: SyntheticLanguage,
    pub se_split: SyntheticSplit,
    pub kf_split: SyntheticSplit,
    pub test: SyntheticSplit,
    pub knowledge: KnowledgeCorpus,
}

pub fn benchmark(seed: u64, train: usize, test: usize) -> Benchmark {
    let lang = SyntheticLanguage::new(LanguageSpec::default(), seed);
    let se_split = lang.split(train, seed * 3 + 1);
    let kf_split = lang.split(train, seed * 3 + 2);
    let test = lang.split(test, seed * 3 + 3);
    let all = [&se_split, &kf_split, &test]
        .into_iter()
        .flat_map(|s| s.knowledge.iter().cloned())
        .collect::<Vec<_>>();
    let knowledge = KnowledgeCorpus::build(all, 4).unwrap();
    Benchmark {
        lang,
        se_split,
        kf_split,
        test,
        knowledge,
    }
}

pub fn train_tagger(b: &Benchmark, seed: u64) -> SeModel {
    train_se(&b.se_split.corpus, b.lang.tagset(), &desk_model(), &desk_training(15), seed)
        .unwrap()
        .0
}

pub fn train_fusion(b: &Benchmark, se: &SeModel, alpha: f64, seed: u64) -> (KfModel, KfDataStats) {
    let config = KfConfig {
        max_seq_len: 128,
        ..KfConfig::mirroring(&desk_model())
    };
    let options = KfDataOptions {
        samples: 8,
        top_m: 1,
        alpha,
        seed,
    };
    let (kf, _, stats) = train_kf(se, &b.kf_split.corpus, &b.knowledge, &config, &desk_training(30), &options).unwrap();
    (kf, stats)
}

/// Test-split POS/CWS counts of the tagger alone and of the full pipeline.
pub fn compare(b: &Benchmark, se: &SeModel, kf: &KfModel, seed: u64) -> (EvalCounts, EvalCounts) {
    let pipeline = Pipeline::new(
        se,
        kf,
        &b.knowledge,
        PipelineOptions {
            samples: 8,
            top_m: 1,
            seed,
        },
    )
    .unwrap();
    let (mut alone, mut full) = (EvalCounts::default(), EvalCounts::default());
    for (i, s) in b.test.corpus.sentences.iter().enumerate() {
        alone += jointseg::evaluation::count(&s.words, &predict_se(se, &s.text).unwrap()).unwrap();
        full += jointseg::evaluation::count(&s.words, &pipeline.predict(&s.text, i).unwrap().words).unwrap();
    }
    (alone, full)
}

/// `|a - b| / max(|a|, |b|)`, or the absolute difference when both are
/// below `floor`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < floor {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

pub const STEP: f64 = 1e-5;

/// Worst error between `analytic` and central differences of `loss` over
/// every parameter of `module`.
pub fn fd_params<M: Module + Clone>(module: &M, analytic: &M, loss: impl Fn(&M) -> f64) -> f64 {
    let grads: Vec<Matrix> = named_params(analytic).into_iter().map(|(_, m)| m.clone()).collect();
    let mut worst: f64 = 0.0;
    for (p, g) in grads.iter().enumerate() {
        for ((r, c), &a) in g.indexed_iter() {
            let nudged = |delta: f64| {
                let mut m = module.clone();
                let mut k = 0;
                m.visit_mut("", &mut |_, t| {
                    if k == p {
                        t[[r, c]] += delta;
                    }
                    k += 1;
                });
                loss(&m)
            };
            let numeric = (nudged(STEP) - nudged(-STEP)) / (2.0 * STEP);
            worst = worst.max(rel_err(numeric, a, 1e-6));
        }
    }
    worst
}

pub fn fd_input(x: &Matrix, analytic: &Matrix, loss: impl Fn(&Matrix) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (idx, &a) in analytic.indexed_iter() {
        let mut plus = x.clone();
        plus[idx] += STEP;
        let mut minus = x.clone();
        minus[idx] -= STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
        worst = worst.max(rel_err(numeric, a, 1e-6));
    }
    worst
}
