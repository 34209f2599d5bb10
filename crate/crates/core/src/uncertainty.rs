//! MC-dropout candidate sampling and uncertain-span extraction.
//!
//! The provisional prediction is decoded with dropout off. Each of `k`
//! candidates is decoded with dropout on, using its own random stream. Words a
//! candidate predicts that the provisional result does not contain are
//! uncertain; overlapping uncertain words merge into components.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::SeedableRng;

use crate::decode::{viterbi, TransitionMask};
use crate::error::{Error, Result};
use crate::evaluation::{count, EvalCounts};
use crate::nn::Rng;
use crate::semodel::{EmissionMatrix, SeModel};
use crate::tagset::{check_tiling, decode_labels, spans_to_labels, LabelSequence, WordSpan};

/// Default number of MC-dropout candidates.
pub const DEFAULT_SAMPLES: usize = 8;

/// Half-open character interval flagged as unreliable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UncertainComponent {
    pub start: usize,
    pub end: usize,
}

impl UncertainComponent {
    pub fn new(start: usize, end: usize) -> Self {
        UncertainComponent { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, i: usize) -> bool {
        self.start <= i && i < self.end
    }
}

#[derive(Debug, Clone)]
pub struct SamplingReport {
    pub provisional: LabelSequence,
    /// Dropout-off emissions behind `provisional`.
    pub provisional_emissions: EmissionMatrix,
    pub candidates: Vec<LabelSequence>,
    pub components: Vec<UncertainComponent>,
}

impl SamplingReport {
    /// Per candidate, the number of its words absent from the provisional result.
    pub fn disagreements(&self) -> Vec<usize> {
        let provisional: HashSet<WordSpan> = decode_labels(&self.provisional).into_iter().collect();
        self.candidates
            .iter()
            .map(|c| decode_labels(c).iter().filter(|w| !provisional.contains(w)).count())
            .collect()
    }
}

/// Random stream for candidate `index` under `seed`.
pub fn candidate_rng(seed: u64, index: usize) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Sampling seed for sentence `index` of a corpus run under `seed`.
pub fn sentence_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn sample_candidates(
    model: &SeModel,
    mask: &TransitionMask,
    chars: &[u32],
    k: usize,
    seed: u64,
) -> Result<SamplingReport> {
    if k == 0 {
        return Err(Error::InvalidArgument("at least one candidate is required".into()));
    }
    let provisional_emissions = model.emissions(chars, None)?;
    let provisional = viterbi(&provisional_emissions, mask);
    let candidates = (0..k)
        .map(|j| {
            let mut rng = candidate_rng(seed, j);
            Ok(viterbi(&model.emissions(chars, Some(&mut rng))?, mask))
        })
        .collect::<Result<Vec<_>>>()?;
    let candidate_words: Vec<Vec<WordSpan>> = candidates.iter().map(|c| decode_labels(c)).collect();
    let components = extract_components_n(chars.len(), &decode_labels(&provisional), &candidate_words)?;
    Ok(SamplingReport {
        provisional,
        provisional_emissions,
        candidates,
        components,
    })
}

/// Uncertain components from word-set differences.
///
/// Word identity is `(start, end, pos)`. Words merge only when they share a
/// character; touching words stay separate.
pub fn extract_components(
    provisional: &[WordSpan],
    candidates: &[Vec<WordSpan>],
) -> Result<Vec<UncertainComponent>> {
    let n = provisional.iter().map(|w| w.end).max().unwrap_or(0);
    extract_components_n(n, provisional, candidates)
}

fn extract_components_n(
    n: usize,
    provisional: &[WordSpan],
    candidates: &[Vec<WordSpan>],
) -> Result<Vec<UncertainComponent>> {
    check_tiling(provisional, n)?;
    let known: HashSet<&WordSpan> = provisional.iter().collect();
    let mut uncertain: Vec<(usize, usize)> = Vec::new();
    for candidate in candidates {
        check_tiling(candidate, n)?;
        uncertain.extend(
            candidate
                .iter()
                .filter(|w| !known.contains(w))
                .map(|w| (w.start, w.end)),
        );
    }
    uncertain.sort_unstable();
    let mut merged: Vec<UncertainComponent> = Vec::new();
    for (start, end) in uncertain {
        match merged.last_mut() {
            Some(last) if start < last.end => last.end = last.end.max(end),
            _ => merged.push(UncertainComponent::new(start, end)),
        }
    }
    Ok(merged)
}

pub fn in_components(components: &[UncertainComponent], i: usize) -> bool {
    components.iter().any(|c| c.contains(i))
}

/// Diagnostic statistics of the uncertain components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyStats {
    pub f1_cws: f64,
    pub f1_pos: f64,
    pub oracle_f1_cws: f64,
    pub oracle_f1_pos: f64,
    /// Label accuracy inside components; `None` without any component character.
    pub acc_uncertain: Option<f64>,
    /// Label accuracy outside components; `None` when everything is uncertain.
    pub acc_certain: Option<f64>,
}

impl UncertaintyStats {
    pub fn metrics(&self) -> [(&'static str, Option<f64>); 6] {
        [
            ("cws_f1", Some(self.f1_cws)),
            ("cws_oracle_f1", Some(self.oracle_f1_cws)),
            ("pos_f1", Some(self.f1_pos)),
            ("pos_oracle_f1", Some(self.oracle_f1_pos)),
            ("acc_uncertain", self.acc_uncertain),
            ("acc_certain", self.acc_certain),
        ]
    }
}

/// Corpus-level accumulator for [`UncertaintyStats`].
#[derive(Debug, Clone, Default)]
pub struct UncertaintyTally {
    plain: EvalCounts,
    oracle: EvalCounts,
    uncertain_total: usize,
    uncertain_correct: usize,
    certain_total: usize,
    certain_correct: usize,
}

impl UncertaintyTally {
    pub fn add(
        &mut self,
        gold: &[WordSpan],
        provisional: &[WordSpan],
        components: &[UncertainComponent],
    ) -> Result<()> {
        let n = gold.iter().map(|w| w.end).max().unwrap_or(0);
        let gold_labels = spans_to_labels(gold, n)?;
        let pred_labels = spans_to_labels(provisional, n)?;
        let mut corrected = pred_labels.clone();
        for i in 0..n {
            let correct = gold_labels[i] == pred_labels[i];
            if in_components(components, i) {
                self.uncertain_total += 1;
                self.uncertain_correct += usize::from(correct);
                corrected[i] = gold_labels[i];
            } else {
                self.certain_total += 1;
                self.certain_correct += usize::from(correct);
            }
        }
        self.plain += count(gold, provisional)?;
        self.oracle += count(gold, &decode_labels(&corrected))?;
        Ok(())
    }

    pub fn finish(&self) -> UncertaintyStats {
        let ratio = |c: usize, t: usize| (t > 0).then(|| c as f64 / t as f64);
        UncertaintyStats {
            f1_cws: self.plain.cws_f1(),
            f1_pos: self.plain.pos_f1(),
            oracle_f1_cws: self.oracle.cws_f1(),
            oracle_f1_pos: self.oracle.pos_f1(),
            acc_uncertain: ratio(self.uncertain_correct, self.uncertain_total),
            acc_certain: ratio(self.certain_correct, self.certain_total),
        }
    }
}

pub fn uncertainty_stats(
    gold: &[WordSpan],
    provisional: &[WordSpan],
    components: &[UncertainComponent],
) -> Result<UncertaintyStats> {
    let mut tally = UncertaintyTally::default();
    tally.add(gold, provisional, components)?;
    Ok(tally.finish())
}

/// One line per sentence: id, length, components as `start-end`, and the
/// per-candidate disagreement counts.
pub fn format_report_line(id: usize, report: &SamplingReport) -> String {
    let mut line = format!("{id}\t{}\t", report.provisional.len());
    if report.components.is_empty() {
        line.push('-');
    }
    for (i, c) in report.components.iter().enumerate() {
        if i > 0 {
            line.push(',');
        }
        let _ = write!(line, "{}-{}", c.start, c.end);
    }
    line.push('\t');
    let counts: Vec<String> = report.disagreements().iter().map(usize::to_string).collect();
    line.push_str(&counts.join(" "));
    line
}

pub const REPORT_HEADER: &str = "#id\tlength\tcomponents\tdisagreements";
