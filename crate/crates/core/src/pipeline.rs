//! The two-stage predictor: tagger, uncertainty sampling, retrieval and
//! knowledge fusion, then a final constrained decode.

use crate::corpus::split_text;
use crate::decode::{viterbi, TransitionMask};
use crate::error::{Error, Result};
use crate::kfusion::{build_kf_input, fuse_components, KfModel};
use crate::retrieval::{knowledge_text, KnowledgeCorpus};
use crate::semodel::SeModel;
use crate::tagset::{decode_labels, WordSpan};
use crate::uncertainty::{sample_candidates, sentence_seed, UncertainComponent};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineOptions {
    pub samples: usize,
    pub top_m: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Prediction {
    pub words: Vec<WordSpan>,
    /// First-stage result.
    pub provisional: Vec<WordSpan>,
    pub components: Vec<UncertainComponent>,
    /// Knowledge-fusion forward passes run.
    pub kf_forwards: usize,
}

pub struct Pipeline<'a> {
    se: &'a SeModel,
    kf: &'a KfModel,
    knowledge: &'a KnowledgeCorpus,
    mask: TransitionMask,
    options: PipelineOptions,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        se: &'a SeModel,
        kf: &'a KfModel,
        knowledge: &'a KnowledgeCorpus,
        options: PipelineOptions,
    ) -> Result<Self> {
        if se.tagset != kf.tagset {
            return Err(Error::Incompatible("tagger and fusion model use different tagsets".into()));
        }
        if options.samples == 0 || options.top_m == 0 {
            return Err(Error::InvalidArgument("samples and top_m must be positive".into()));
        }
        Ok(Pipeline {
            se,
            kf,
            knowledge,
            mask: TransitionMask::new(&se.tagset),
            options,
        })
    }

    /// Predicts sentence `index` of a run. Sentences longer than the tagger's
    /// limit are split at punctuation and rejoined.
    pub fn predict(&self, text: &str, index: usize) -> Result<Prediction> {
        let chars: Vec<char> = text.chars().collect();
        let seed = sentence_seed(self.options.seed, index);
        let pieces = split_text(&chars, self.se.config.max_seq_len);
        if pieces.len() == 1 {
            return self.predict_piece(&chars, seed);
        }
        let mut out = Prediction::default();
        for (i, (offset, piece)) in pieces.into_iter().enumerate() {
            let p = self.predict_piece(piece, sentence_seed(seed, i))?;
            let shift = |w: WordSpan| WordSpan::new(w.start + offset, w.end + offset, w.pos);
            out.words.extend(p.words.into_iter().map(shift));
            out.provisional.extend(p.provisional.into_iter().map(shift));
            out.components.extend(
                p.components
                    .into_iter()
                    .map(|c| UncertainComponent::new(c.start + offset, c.end + offset)),
            );
            out.kf_forwards += p.kf_forwards;
        }
        Ok(out)
    }

    fn predict_piece(&self, chars: &[char], seed: u64) -> Result<Prediction> {
        let se_ids = self.se.vocab.encode_chars(chars);
        let report = sample_candidates(self.se, &self.mask, &se_ids, self.options.samples, seed)?;
        let provisional = decode_labels(&report.provisional);
        if report.components.is_empty() {
            return Ok(Prediction {
                words: provisional.clone(),
                provisional,
                components: Vec::new(),
                kf_forwards: 0,
            });
        }
        let text: String = chars.iter().collect();
        let tags: Vec<usize> = report.provisional.iter().map(|&t| self.se.tagset.index(t)).collect();
        let kf_ids = self.kf.vocab.encode_chars(chars);
        let mut distributions = Vec::with_capacity(report.components.len());
        let mut kf_forwards = 0;
        for &component in &report.components {
            let hits = self.knowledge.retrieve(&text, component, self.options.top_m)?;
            // A retrieval miss, or a sentence the fusion encoder cannot hold,
            // keeps the first-stage distribution for this component.
            let fallback = || report.provisional_emissions.clone();
            if hits.is_empty() {
                distributions.push(fallback());
                continue;
            }
            let k = self.kf.vocab.encode(&knowledge_text(&hits));
            match build_kf_input(&kf_ids, &tags, component, &k, self.kf.config.max_seq_len) {
                Ok(input) => {
                    distributions.push(self.kf.kf_forward(&input)?);
                    kf_forwards += 1;
                }
                Err(Error::SequenceTooLong { .. }) => distributions.push(fallback()),
                Err(e) => return Err(e),
            }
        }
        let fused = fuse_components(&distributions)?;
        Ok(Prediction {
            words: decode_labels(&viterbi(&fused, &self.mask)),
            provisional,
            components: report.components,
            kf_forwards,
        })
    }
}

/// One-shot convenience over [`Pipeline::predict`] for sentence 0.
pub fn run_pipeline(
    se: &SeModel,
    kf: &KfModel,
    knowledge: &KnowledgeCorpus,
    text: &str,
    options: PipelineOptions,
) -> Result<Vec<WordSpan>> {
    Ok(Pipeline::new(se, kf, knowledge, options)?.predict(text, 0)?.words)
}

/// First-stage prediction only: dropout-off emissions and Viterbi, with the
/// same long-sentence handling as the pipeline.
pub fn predict_se(se: &SeModel, text: &str) -> Result<Vec<WordSpan>> {
    let mask = TransitionMask::new(&se.tagset);
    let chars: Vec<char> = text.chars().collect();
    let mut words = Vec::new();
    for (offset, piece) in split_text(&chars, se.config.max_seq_len) {
        let p = se.emissions(&se.vocab.encode_chars(piece), None)?;
        words.extend(
            decode_labels(&viterbi(&p, &mask))
                .into_iter()
                .map(|w| WordSpan::new(w.start + offset, w.end + offset, w.pos)),
        );
    }
    Ok(words)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kfusion::KfConfig;
    use crate::nn::Rng;
    use crate::semodel::ModelConfig;
    use crate::tagset::{check_tiling, TagSet};
    use crate::vocab::Vocab;
    use rand::SeedableRng;

    fn models(dropout: f64, max_len: usize) -> (SeModel, KfModel) {
        let config = ModelConfig {
            hidden_width: 8,
            bigram_width: 4,
            fusion_width: 8,
            layers: 1,
            heads: 2,
            ff_width: 8,
            dropout,
            max_seq_len: max_len,
        };
        let tagset = TagSet::new(["n", "v"]).unwrap();
        let vocab = Vocab::build(["天下定人来"]);
        let se = SeModel::new(config, vocab.clone(), tagset.clone(), &mut Rng::seed_from_u64(1)).unwrap();
        let kf = KfModel::new(KfConfig::mirroring(&config), vocab, tagset, &mut Rng::seed_from_u64(2)).unwrap();
        (se, kf)
    }

    fn options() -> PipelineOptions {
        PipelineOptions {
            samples: 8,
            top_m: 1,
            seed: 5,
        }
    }

    #[test]
    fn no_dropout_reduces_to_the_tagger() {
        let (se, kf) = models(0.0, 16);
        let kc = KnowledgeCorpus::build(["天下定人来天"], 4).unwrap();
        let p = Pipeline::new(&se, &kf, &kc, options()).unwrap();
        let out = p.predict("天下定人来", 0).unwrap();
        assert!(out.components.is_empty());
        assert_eq!(out.kf_forwards, 0);
        assert_eq!(out.words, predict_se(&se, "天下定人来").unwrap());
    }

    #[test]
    fn long_input_is_split_and_still_tiles() {
        let (se, kf) = models(0.5, 4);
        let kc = KnowledgeCorpus::build(["天下定", "人来"], 4).unwrap();
        let p = Pipeline::new(&se, &kf, &kc, options()).unwrap();
        let text = "天下定人来天下定人来天";
        let out = p.predict(text, 3).unwrap();
        check_tiling(&out.words, 11).unwrap();
        assert_eq!(out, p.predict(text, 3).unwrap());
        check_tiling(&predict_se(&se, text).unwrap(), 11).unwrap();
    }

    #[test]
    fn one_fusion_forward_per_retrieved_component() {
        let (se, kf) = models(0.5, 16);
        let text = "天下定人来天下定";
        let covering = KnowledgeCorpus::build([format!("{text}来")], 4).unwrap();
        let unrelated = KnowledgeCorpus::build(["人人人"], 4).unwrap();
        let mut seen = 0;
        for index in 0..40 {
            let out = Pipeline::new(&se, &kf, &covering, options()).unwrap().predict(text, index).unwrap();
            if out.components.len() < 2 {
                continue;
            }
            seen += 1;
            assert_eq!(out.kf_forwards, out.components.len());
            check_tiling(&out.words, 8).unwrap();

            // With nothing retrieved every component keeps the first stage.
            let miss = Pipeline::new(&se, &kf, &unrelated, options()).unwrap().predict(text, index).unwrap();
            assert_eq!(miss.kf_forwards, 0);
            assert_eq!(miss.words, miss.provisional);
        }
        assert!(seen > 0, "no sentence with two components");
    }

    #[test]
    fn mismatched_tagsets_rejected() {
        let (se, mut kf) = models(0.1, 16);
        kf.tagset = TagSet::new(["n", "a"]).unwrap();
        let kc = KnowledgeCorpus::build(["天"], 4).unwrap();
        assert!(matches!(Pipeline::new(&se, &kf, &kc, options()), Err(Error::Incompatible(_))));
    }
}
