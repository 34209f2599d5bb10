//! Knowledge corpus, character n-gram inverted index, and similarity-ranked
//! retrieval of sentences for uncertain components.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::container::{Reader, Writer};
use crate::error::{Error, Result};
use crate::uncertainty::UncertainComponent;

pub const DEFAULT_MAX_NGRAM: usize = 4;
pub const DEFAULT_TOP_M: usize = 1;

const MAGIC: &[u8; 8] = b"JSEGIDX\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeCandidate {
    pub sentence_id: usize,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeCorpus {
    sentences: Vec<String>,
    lengths: Vec<usize>,
    max_ngram: usize,
    /// n-gram → ascending sentence ids
    index: BTreeMap<String, Vec<u32>>,
}

/// `|P ∩ Q| / (|P| + |Q|)` with the intersection taken as a multiset of
/// characters, each matched pair counted once. Identical sentences score 0.5.
pub fn similarity(p: &str, q: &str) -> Result<f64> {
    let (shared, total) = overlap(p, q)?;
    Ok(shared as f64 / total as f64)
}

/// `(shared, |P| + |Q|)`, the exact numerator and denominator of [`similarity`].
pub fn overlap(p: &str, q: &str) -> Result<(usize, usize)> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::InvalidArgument("similarity of an empty sentence".into()));
    }
    let mut counts: HashMap<char, usize> = HashMap::new();
    let mut p_len = 0;
    for c in p.chars() {
        *counts.entry(c).or_default() += 1;
        p_len += 1;
    }
    let mut shared = 0;
    let mut q_len = 0;
    for c in q.chars() {
        q_len += 1;
        if let Some(k) = counts.get_mut(&c) {
            if *k > 0 {
                *k -= 1;
                shared += 1;
            }
        }
    }
    Ok((shared, p_len + q_len))
}

impl KnowledgeCorpus {
    pub fn build<S: Into<String>>(sentences: impl IntoIterator<Item = S>, max_ngram: usize) -> Result<Self> {
        if max_ngram < 2 {
            return Err(Error::InvalidArgument("max_ngram must be at least 2".into()));
        }
        let sentences: Vec<String> = sentences.into_iter().map(Into::into).collect();
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut index: BTreeMap<String, Vec<u32>> = BTreeMap::new();
        let mut lengths = Vec::with_capacity(sentences.len());
        for (id, sentence) in sentences.iter().enumerate() {
            let chars: Vec<char> = sentence.chars().collect();
            lengths.push(chars.len());
            let mut seen = BTreeSet::new();
            for len in 1..=max_ngram {
                for window in chars.windows(len) {
                    seen.insert(window.iter().collect::<String>());
                }
            }
            for gram in seen {
                index.entry(gram).or_default().push(id as u32);
            }
        }
        Ok(KnowledgeCorpus {
            sentences,
            lengths,
            max_ngram,
            index,
        })
    }

    /// Reads one sentence per line, skipping blank lines.
    pub fn from_text(text: &str, max_ngram: usize) -> Result<Self> {
        KnowledgeCorpus::build(
            text.lines().map(str::trim).filter(|l| !l.is_empty()),
            max_ngram,
        )
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn max_ngram(&self) -> usize {
        self.max_ngram
    }

    pub fn sentence(&self, id: usize) -> &str {
        &self.sentences[id]
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn num_keys(&self) -> usize {
        self.index.len()
    }

    pub fn postings(&self, gram: &str) -> &[u32] {
        self.index.get(gram).map_or(&[], Vec::as_slice)
    }

    /// Ids of all sentences containing `text`, ascending.
    pub fn containing(&self, text: &str) -> Vec<u32> {
        let chars: Vec<char> = text.chars().collect();
        if chars.is_empty() {
            return Vec::new();
        }
        if chars.len() <= self.max_ngram {
            return self.postings(text).to_vec();
        }
        let mut lists: Vec<&[u32]> = chars
            .windows(self.max_ngram)
            .map(|w| self.postings(&w.iter().collect::<String>()))
            .collect();
        lists.sort_by_key(|l| l.len());
        let mut hits: Vec<u32> = lists[0].to_vec();
        for list in &lists[1..] {
            hits.retain(|id| list.binary_search(id).is_ok());
        }
        hits.retain(|&id| self.sentences[id as usize].contains(text));
        hits
    }

    /// The query units for a component of `sentence`.
    ///
    /// A multi-character component is queried as itself. A single character
    /// is expanded into the bigrams it forms with its left and right
    /// neighbours (only those that exist).
    pub fn query_units(sentence: &[char], component: UncertainComponent) -> Vec<String> {
        if component.len() >= 2 {
            return vec![sentence[component.start..component.end].iter().collect()];
        }
        let i = component.start;
        let mut units = Vec::new();
        if i > 0 {
            units.push(sentence[i - 1..=i].iter().collect());
        }
        if i + 1 < sentence.len() {
            units.push(sentence[i..=i + 1].iter().collect());
        }
        units
    }

    /// The `top_m` corpus sentences most similar to `sentence` among those
    /// matching the component's query units. Ties go to the lower id; copies
    /// of `sentence` itself are skipped.
    pub fn retrieve(
        &self,
        sentence: &str,
        component: UncertainComponent,
        top_m: usize,
    ) -> Result<Vec<KnowledgeCandidate>> {
        let chars: Vec<char> = sentence.chars().collect();
        if component.is_empty() || component.end > chars.len() {
            return Err(Error::InvalidArgument(format!(
                "component [{}, {}) outside a sentence of length {}",
                component.start,
                component.end,
                chars.len()
            )));
        }
        let mut hits = BTreeSet::new();
        for unit in Self::query_units(&chars, component) {
            hits.extend(self.containing(&unit));
        }
        let n = chars.len();
        let mut scored: Vec<(u32, usize, usize)> = hits
            .into_iter()
            .filter(|&id| self.sentences[id as usize] != sentence)
            .map(|id| {
                let (shared, _) = overlap(sentence, &self.sentences[id as usize]).expect("non-empty");
                (id, shared, n + self.lengths[id as usize])
            })
            .collect();
        // Exact rational comparison of shared / total.
        scored.sort_by(|a, b| {
            let lhs = a.1 as u64 * b.2 as u64;
            let rhs = b.1 as u64 * a.2 as u64;
            rhs.cmp(&lhs).then(a.0.cmp(&b.0))
        });
        Ok(scored
            .into_iter()
            .take(top_m)
            .map(|(id, shared, total)| KnowledgeCandidate {
                sentence_id: id as usize,
                text: self.sentences[id as usize].clone(),
                score: shared as f64 / total as f64,
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(MAGIC, VERSION);
        w.len(self.max_ngram);
        w.len(self.sentences.len());
        for s in &self.sentences {
            w.str(s);
        }
        w.len(self.index.len());
        for (gram, ids) in &self.index {
            w.str(gram);
            w.len(ids.len());
            for &id in ids {
                w.u32(id);
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, version) = Reader::new(bytes, MAGIC)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported index version {version}")));
        }
        let max_ngram = r.len()?;
        let count = r.len()?;
        let mut sentences = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            sentences.push(r.str()?.to_owned());
        }
        let keys = r.len()?;
        let mut index = BTreeMap::new();
        for _ in 0..keys {
            let gram = r.str()?.to_owned();
            let n = r.len()?;
            let mut ids = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let id = r.u32()?;
                if id as usize >= sentences.len() || ids.last().is_some_and(|&last| last >= id) {
                    return Err(Error::Format(format!("bad posting list for `{gram}`")));
                }
                ids.push(id);
            }
            index.insert(gram, ids);
        }
        r.expect_end()?;
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let lengths = sentences.iter().map(|s| s.chars().count()).collect();
        Ok(KnowledgeCorpus {
            sentences,
            lengths,
            max_ngram,
            index,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        KnowledgeCorpus::from_bytes(&std::fs::read(path)?)
    }
}

/// Concatenation of the retrieved sentences, in rank order.
pub fn knowledge_text(candidates: &[KnowledgeCandidate]) -> String {
    candidates.iter().map(|c| c.text.as_str()).collect()
}
