//! Word-level F1 scoring and K-model ensembling.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::ops::AddAssign;

use crate::error::{Error, Result};
use crate::semodel::{EmissionMatrix, SeModel};
use crate::tagset::{check_tiling, WordSpan};
use crate::uncertainty::UncertaintyStats;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub gold: usize,
    pub predicted: usize,
    /// Predicted words whose boundaries match a gold word.
    pub correct_cws: usize,
    /// Predicted words whose boundaries and POS match a gold word.
    pub correct_pos: usize,
}

impl AddAssign for EvalCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.gold += rhs.gold;
        self.predicted += rhs.predicted;
        self.correct_cws += rhs.correct_cws;
        self.correct_pos += rhs.correct_pos;
    }
}

pub fn f1(correct: usize, gold: usize, predicted: usize) -> f64 {
    let p = if predicted == 0 { 0.0 } else { correct as f64 / predicted as f64 };
    let r = if gold == 0 { 0.0 } else { correct as f64 / gold as f64 };
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl EvalCounts {
    pub fn cws_f1(&self) -> f64 {
        f1(self.correct_cws, self.gold, self.predicted)
    }

    pub fn pos_f1(&self) -> f64 {
        f1(self.correct_pos, self.gold, self.predicted)
    }

    pub fn report(self) -> EvalReport {
        EvalReport {
            cws_f1: self.cws_f1(),
            pos_f1: self.pos_f1(),
            counts: self,
            uncertainty: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cws_f1: f64,
    pub pos_f1: f64,
    pub counts: EvalCounts,
    pub uncertainty: Option<UncertaintyStats>,
}

fn sentence_len(spans: &[WordSpan]) -> usize {
    spans.iter().map(|s| s.end).max().unwrap_or(0)
}

/// Match counts for one sentence. Both lists must tile the same `[0, n)`.
pub fn count(gold: &[WordSpan], pred: &[WordSpan]) -> Result<EvalCounts> {
    let mut gold_sorted = gold.to_vec();
    gold_sorted.sort();
    let mut pred_sorted = pred.to_vec();
    pred_sorted.sort();
    let n = sentence_len(&gold_sorted);
    check_tiling(&gold_sorted, n)?;
    check_tiling(&pred_sorted, n)?;
    let boundaries: HashSet<(usize, usize)> = gold.iter().map(|s| (s.start, s.end)).collect();
    let words: HashSet<&WordSpan> = gold.iter().collect();
    Ok(EvalCounts {
        gold: gold.len(),
        predicted: pred.len(),
        correct_cws: pred.iter().filter(|s| boundaries.contains(&(s.start, s.end))).count(),
        correct_pos: pred.iter().filter(|s| words.contains(s)).count(),
    })
}

pub fn score(gold: &[WordSpan], pred: &[WordSpan]) -> Result<EvalReport> {
    Ok(count(gold, pred)?.report())
}

/// Micro-averaged scores over aligned sentence lists.
pub fn score_corpus<'a>(
    pairs: impl IntoIterator<Item = (&'a [WordSpan], &'a [WordSpan])>,
) -> Result<EvalReport> {
    let mut total = EvalCounts::default();
    for (gold, pred) in pairs {
        total += count(gold, pred)?;
    }
    Ok(total.report())
}

/// Element-wise mean of the emission matrices of several models.
pub fn ensemble_predict(models: &[SeModel], text: &str) -> Result<EmissionMatrix> {
    let first = models
        .first()
        .ok_or_else(|| Error::InvalidArgument("ensemble needs at least one model".into()))?;
    for m in &models[1..] {
        if m.tagset != first.tagset {
            return Err(Error::Incompatible("ensemble members use different tagsets".into()));
        }
        if m.vocab != first.vocab {
            return Err(Error::Incompatible("ensemble members use different vocabularies".into()));
        }
    }
    let chars = first.vocab.encode(text);
    let all = models
        .iter()
        .map(|m| m.emissions(&chars, None))
        .collect::<Result<Vec<_>>>()?;
    EmissionMatrix::mean(&all)
}

fn pct(v: f64) -> String {
    format!("{:.3}", v * 100.0)
}

impl EvalReport {
    /// `metric<TAB>value` lines; F1 and accuracy values are percentages.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let c = &self.counts;
        let _ = writeln!(out, "cws_f1\t{}", pct(self.cws_f1));
        let _ = writeln!(out, "pos_f1\t{}", pct(self.pos_f1));
        let _ = writeln!(out, "gold_words\t{}", c.gold);
        let _ = writeln!(out, "pred_words\t{}", c.predicted);
        let _ = writeln!(out, "correct_cws\t{}", c.correct_cws);
        let _ = writeln!(out, "correct_pos\t{}", c.correct_pos);
        if let Some(u) = &self.uncertainty {
            for (key, value) in u.metrics().into_iter().filter(|(k, _)| !matches!(*k, "cws_f1" | "pos_f1")) {
                let _ = writeln!(out, "{key}\t{}", value.map_or_else(|| "NA".to_owned(), pct));
            }
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("CWS F1 (%)".into(), pct(self.cws_f1)),
            ("POS F1 (%)".into(), pct(self.pos_f1)),
            ("Gold words".into(), self.counts.gold.to_string()),
            ("Predicted words".into(), self.counts.predicted.to_string()),
        ];
        if let Some(u) = &self.uncertainty {
            for (key, value) in u.metrics().into_iter().filter(|(k, _)| !matches!(*k, "cws_f1" | "pos_f1")) {
                rows.push((key.to_owned(), value.map_or_else(|| "n/a".to_owned(), pct)));
            }
        }
        let width = rows.iter().map(|(k, _)| k.chars().count()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>10}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tagset::PosId;
    use proptest::prelude::*;

    fn w(start: usize, end: usize, pos: u16) -> WordSpan {
        WordSpan::new(start, end, PosId(pos))
    }

    #[test]
    fn perfect_prediction() {
        let gold = [w(0, 2, 0), w(2, 3, 1)];
        let r = score(&gold, &gold).unwrap();
        assert_eq!((r.cws_f1, r.pos_f1), (1.0, 1.0));
    }

    #[test]
    fn shifted_boundaries() {
        // gold AB|C|DE, pred AB|CD|E
        let gold = [w(0, 2, 0), w(2, 3, 0), w(3, 5, 0)];
        let pred = [w(0, 2, 0), w(2, 4, 0), w(4, 5, 0)];
        let r = score(&gold, &pred).unwrap();
        assert_eq!(r.counts.correct_cws, 1);
        assert!((r.cws_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn one_wrong_pos() {
        let gold = [w(0, 1, 0), w(1, 3, 1), w(3, 4, 2)];
        let pred = [w(0, 1, 0), w(1, 3, 2), w(3, 4, 2)];
        let r = score(&gold, &pred).unwrap();
        assert_eq!(r.cws_f1, 1.0);
        assert!((r.pos_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_tiling() {
        let gold = [w(0, 2, 0)];
        assert!(score(&gold, &[w(0, 1, 0)]).is_err());
        assert!(score(&[w(1, 2, 0)], &[w(1, 2, 0)]).is_err());
    }

    #[test]
    fn key_value_format() {
        let gold = [w(0, 2, 0)];
        let kv = score(&gold, &gold).unwrap().to_key_values();
        assert!(kv.starts_with("cws_f1\t100.000\npos_f1\t100.000\n"));
    }

    fn tiling(n: usize, cuts: &[bool], pos: &[u16]) -> Vec<WordSpan> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=n {
            if i == n || cuts[i - 1] {
                out.push(w(start, i, pos[start] % 3));
                start = i;
            }
        }
        out
    }

    proptest! {
        #[test]
        fn f1_properties(
            n in 1usize..20,
            a in prop::collection::vec(any::<bool>(), 20),
            b in prop::collection::vec(any::<bool>(), 20),
            pa in prop::collection::vec(0u16..3, 20),
            pb in prop::collection::vec(0u16..3, 20),
        ) {
            let gold = tiling(n, &a, &pa);
            let pred = tiling(n, &b, &pb);
            let r = score(&gold, &pred).unwrap();
            let swapped = score(&pred, &gold).unwrap();
            prop_assert!((r.cws_f1 - swapped.cws_f1).abs() < 1e-12);
            prop_assert!((r.pos_f1 - swapped.pos_f1).abs() < 1e-12);
            prop_assert!(r.pos_f1 <= r.cws_f1);
            prop_assert!(r.counts.correct_cws <= r.counts.gold.min(r.counts.predicted));
            let mut shuffled = pred.clone();
            shuffled.reverse();
            prop_assert_eq!(score(&gold, &shuffled).unwrap(), r);
        }
    }
}
