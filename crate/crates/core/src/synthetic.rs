//! Synthetic annotated language for desk-scale experiments.
//!
//! Every lexicon word owns its characters, so segmentation is learnable from
//! characters alone. With ambiguity on, each sentence also contains one
//! homograph: a single-character word whose POS (`n` or `v`) is drawn at
//! random per sentence and cannot be inferred from the sentence itself. The
//! matching knowledge sentence repeats the sentence followed by a cue
//! character that reveals the homograph's POS.

use rand::seq::IndexedRandom;
use rand::{Rng as _, SeedableRng};

use crate::corpus::{AnnotatedCorpus, Sentence};
use crate::nn::Rng;
use crate::tagset::{PosId, TagSet, WordSpan};

pub const POS_TAGS: [&str; 5] = ["n", "v", "a", "d", "w"];
const NOUN: PosId = PosId(0);
const VERB: PosId = PosId(1);
const PUNCT: PosId = PosId(4);
const FULL_STOP: char = '。';

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LanguageSpec {
    pub lexicon_size: usize,
    pub homographs: usize,
    pub min_words: usize,
    pub max_words: usize,
    pub ambiguity: bool,
}

impl Default for LanguageSpec {
    fn default() -> Self {
        LanguageSpec {
            lexicon_size: 30,
            homographs: 2,
            min_words: 4,
            max_words: 8,
            ambiguity: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticLanguage {
    spec: LanguageSpec,
    tagset: TagSet,
    lexicon: Vec<(String, PosId)>,
    homographs: Vec<char>,
    /// Cue characters for noun and verb readings.
    cues: [char; 2],
}

/// Annotated sentences with their knowledge counterparts, index-aligned.
#[derive(Debug, Clone)]
pub struct SyntheticSplit {
    pub corpus: AnnotatedCorpus,
    pub knowledge: Vec<String>,
}

impl SyntheticLanguage {
    pub fn new(spec: LanguageSpec, seed: u64) -> Self {
        assert!(spec.min_words >= 1 && spec.min_words <= spec.max_words);
        let mut rng = Rng::seed_from_u64(seed);
        let mut next = 0x4E00u32;
        let mut fresh = || {
            let c = char::from_u32(next).expect("CJK block");
            next += 1;
            c
        };
        let lexicon = (0..spec.lexicon_size)
            .map(|_| {
                let len = *[1usize, 2, 2, 3].choose(&mut rng).expect("non-empty");
                let word: String = (0..len).map(|_| fresh()).collect();
                (word, PosId(rng.random_range(0..4)))
            })
            .collect();
        let homographs = (0..spec.homographs).map(|_| fresh()).collect();
        let cues = [fresh(), fresh()];
        SyntheticLanguage {
            spec,
            tagset: TagSet::new(POS_TAGS).expect("valid tagset"),
            lexicon,
            homographs,
            cues,
        }
    }

    pub fn tagset(&self) -> &TagSet {
        &self.tagset
    }

    pub fn is_homograph(&self, c: char) -> bool {
        self.homographs.contains(&c)
    }

    pub fn sentence(&self, rng: &mut Rng) -> (Sentence, String) {
        let count = rng.random_range(self.spec.min_words..=self.spec.max_words);
        let mut words: Vec<(String, PosId)> = (0..count)
            .map(|_| self.lexicon.choose(rng).expect("non-empty lexicon").clone())
            .collect();
        let mut cue = None;
        if self.spec.ambiguity && !self.homographs.is_empty() {
            let h = *self.homographs.choose(rng).expect("non-empty");
            let noun = rng.random_bool(0.5);
            cue = Some(self.cues[usize::from(!noun)]);
            let at = rng.random_range(0..=words.len());
            words.insert(at, (h.to_string(), if noun { NOUN } else { VERB }));
        }
        words.push((FULL_STOP.to_string(), PUNCT));
        let mut text = String::new();
        let mut spans = Vec::with_capacity(words.len());
        let mut start = 0;
        for (w, pos) in &words {
            let len = w.chars().count();
            spans.push(WordSpan::new(start, start + len, *pos));
            text.push_str(w);
            start += len;
        }
        let mut knowledge = text.clone();
        knowledge.extend(cue);
        let sentence = Sentence::new(text, spans).expect("generated spans tile");
        (sentence, knowledge)
    }

    pub fn split(&self, count: usize, seed: u64) -> SyntheticSplit {
        let mut rng = Rng::seed_from_u64(seed);
        let (sentences, knowledge) = (0..count).map(|_| self.sentence(&mut rng)).unzip();
        SyntheticSplit {
            corpus: AnnotatedCorpus {
                sentences,
                source: None,
            },
            knowledge,
        }
    }
}
