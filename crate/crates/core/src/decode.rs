//! Legality-constrained Viterbi over an [`EmissionMatrix`].
//!
//! Transitions carry no weight: a pair is either allowed (0) or forbidden
//! (−∞). Ties resolve to the lowest tag index at every decision.

use std::cmp::Ordering;

use crate::semodel::EmissionMatrix;
use crate::tagset::{is_legal, JointTag, LabelSequence, TagSet};

/// Emission probabilities are clamped to this floor before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct TransitionMask {
    tags: Vec<JointTag>,
    allowed: Vec<bool>,
    start: Vec<bool>,
    end: Vec<bool>,
}

impl TransitionMask {
    pub fn new(tagset: &TagSet) -> Self {
        let tags: Vec<JointTag> = tagset.joint_tags().collect();
        let d = tags.len();
        let mut allowed = vec![false; d * d];
        for (i, &a) in tags.iter().enumerate() {
            for (j, &b) in tags.iter().enumerate() {
                allowed[i * d + j] = is_legal(Some(a), Some(b));
            }
        }
        let start = tags.iter().map(|&t| is_legal(None, Some(t))).collect();
        let end = tags.iter().map(|&t| is_legal(Some(t), None)).collect();
        TransitionMask {
            tags,
            allowed,
            start,
            end,
        }
    }

    pub fn num_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn allowed(&self, from: usize, to: usize) -> bool {
        self.allowed[from * self.tags.len() + to]
    }

    pub fn can_start(&self, tag: usize) -> bool {
        self.start[tag]
    }

    pub fn can_end(&self, tag: usize) -> bool {
        self.end[tag]
    }

    pub fn tag(&self, index: usize) -> JointTag {
        self.tags[index]
    }

    pub fn to_labels(&self, indices: &[usize]) -> LabelSequence {
        indices.iter().map(|&i| self.tags[i]).collect()
    }

    /// Whether an index sequence is legal including both sentinels.
    pub fn is_legal_path(&self, path: &[usize]) -> bool {
        match (path.first(), path.last()) {
            (None, _) => true,
            (Some(&first), Some(&last)) => {
                self.start[first]
                    && self.end[last]
                    && path.windows(2).all(|w| self.allowed(w[0], w[1]))
            }
            _ => unreachable!(),
        }
    }
}

fn log_emissions(p: &EmissionMatrix) -> Vec<Vec<f64>> {
    p.probs()
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|&v| v.max(PROB_FLOOR).ln()).collect())
        .collect()
}

/// Σ log P[i, y_i] for a path.
pub fn path_score(p: &EmissionMatrix, path: &[usize]) -> f64 {
    path.iter()
        .enumerate()
        .map(|(i, &t)| p.probs()[[i, t]].max(PROB_FLOOR).ln())
        .sum()
}

/// Best legal tag-index path.
pub fn viterbi_indices(p: &EmissionMatrix, mask: &TransitionMask) -> Vec<usize> {
    let n = p.len();
    if n == 0 {
        return Vec::new();
    }
    let d = mask.num_tags();
    assert_eq!(p.num_tags(), d, "emission width does not match the tagset");
    let emit = log_emissions(p);
    let mut score: Vec<f64> = (0..d)
        .map(|j| if mask.can_start(j) { emit[0][j] } else { f64::NEG_INFINITY })
        .collect();
    let mut back = vec![vec![0usize; d]; n];
    for i in 1..n {
        let mut next = vec![f64::NEG_INFINITY; d];
        for j in 0..d {
            let mut best = f64::NEG_INFINITY;
            let mut arg = usize::MAX;
            for (k, &s) in score.iter().enumerate() {
                if s > best && mask.allowed(k, j) {
                    best = s;
                    arg = k;
                }
            }
            if arg != usize::MAX {
                next[j] = best + emit[i][j];
                back[i][j] = arg;
            }
        }
        score = next;
    }
    let mut last = usize::MAX;
    let mut best = f64::NEG_INFINITY;
    for (j, &s) in score.iter().enumerate() {
        if mask.can_end(j) && s > best {
            best = s;
            last = j;
        }
    }
    assert!(last != usize::MAX, "no legal path");
    let mut path = vec![last; n];
    for i in (1..n).rev() {
        path[i - 1] = back[i][path[i]];
    }
    path
}

pub fn viterbi(p: &EmissionMatrix, mask: &TransitionMask) -> LabelSequence {
    mask.to_labels(&viterbi_indices(p, mask))
}

#[derive(Clone, Copy)]
struct Entry {
    score: f64,
    prev: usize,
    rank: usize,
}

fn by_score(a: &Entry, b: &Entry) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.prev.cmp(&b.prev))
        .then(a.rank.cmp(&b.rank))
}

/// The `k` best legal paths by score, best first. Returns fewer when fewer exist.
pub fn viterbi_k_paths_indices(p: &EmissionMatrix, mask: &TransitionMask, k: usize) -> Vec<Vec<usize>> {
    let n = p.len();
    if k == 0 {
        return Vec::new();
    }
    if n == 0 {
        return vec![Vec::new()];
    }
    let d = mask.num_tags();
    let emit = log_emissions(p);
    // lattice[i][j] holds up to k entries sorted best first
    let mut lattice: Vec<Vec<Vec<Entry>>> = Vec::with_capacity(n);
    lattice.push(
        (0..d)
            .map(|j| {
                if mask.can_start(j) {
                    vec![Entry {
                        score: emit[0][j],
                        prev: usize::MAX,
                        rank: 0,
                    }]
                } else {
                    Vec::new()
                }
            })
            .collect(),
    );
    for i in 1..n {
        let prev = &lattice[i - 1];
        let column = (0..d)
            .map(|j| {
                let e_ij = emit[i][j];
                let mut cands: Vec<Entry> = (0..d)
                    .filter(|&s| mask.allowed(s, j))
                    .flat_map(|s| {
                        prev[s].iter().enumerate().map(move |(r, e)| Entry {
                            score: e.score + e_ij,
                            prev: s,
                            rank: r,
                        })
                    })
                    .collect();
                cands.sort_by(by_score);
                cands.truncate(k);
                cands
            })
            .collect();
        lattice.push(column);
    }
    let mut finals: Vec<Entry> = (0..d)
        .filter(|&j| mask.can_end(j))
        .flat_map(|j| {
            lattice[n - 1][j].iter().enumerate().map(move |(r, e)| Entry {
                score: e.score,
                prev: j,
                rank: r,
            })
        })
        .collect();
    finals.sort_by(by_score);
    finals.truncate(k);
    finals
        .iter()
        .map(|f| {
            let mut path = vec![0; n];
            let (mut state, mut rank) = (f.prev, f.rank);
            for i in (0..n).rev() {
                path[i] = state;
                let e = lattice[i][state][rank];
                state = e.prev;
                rank = e.rank;
            }
            path
        })
        .collect()
}

pub fn viterbi_k_paths(p: &EmissionMatrix, mask: &TransitionMask, k: usize) -> Vec<LabelSequence> {
    viterbi_k_paths_indices(p, mask, k)
        .iter()
        .map(|path| mask.to_labels(path))
        .collect()
}
