//! Span exact-match evaluation: a predicted span is correct only when its
//! character offsets equal a gold span's exactly. Scores are micro-averaged
//! over all sentences; each gold span can be matched at most once.

use serde::{Deserialize, Serialize};

use crate::corpus::{bio_to_spans, Dataset, Span};
use crate::error::Result;
use crate::model::DeCnn;
use crate::scalar::Scalar;

/// Precision/recall/F1 with the underlying micro counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl SpanScore {
    fn from_counts(matched: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted > 0 {
            matched as f64 / predicted as f64
        } else {
            0.0
        };
        let recall = if gold > 0 {
            matched as f64 / gold as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        SpanScore {
            precision,
            recall,
            f1,
            matched,
            predicted,
            gold,
        }
    }
}

/// Micro-averaged exact-match score over `(gold, predicted)` span lists,
/// one pair per sentence. Within a sentence, each gold span matches at most
/// one predicted span (and vice versa), by multiset intersection.
pub fn score_spans(pairs: &[(Vec<Span>, Vec<Span>)]) -> SpanScore {
    let mut matched = 0usize;
    let mut predicted = 0usize;
    let mut gold = 0usize;
    for (gold_spans, pred_spans) in pairs {
        gold += gold_spans.len();
        predicted += pred_spans.len();
        let mut remaining = gold_spans.clone();
        for p in pred_spans {
            if let Some(pos) = remaining.iter().position(|g| g == p) {
                remaining.swap_remove(pos);
                matched += 1;
            }
        }
    }
    SpanScore::from_counts(matched, predicted, gold)
}

/// Runs the model over a dataset split and scores predicted spans against
/// gold spans.
pub fn evaluate<S: Scalar>(model: &DeCnn<S>, data: &Dataset) -> Result<SpanScore> {
    let mut pairs = Vec::with_capacity(data.len());
    for sentence in &data.sentences {
        let pred_spans = if sentence.tokens.is_empty() {
            Vec::new()
        } else {
            let labels = model.predict_labels(&sentence.token_surfaces())?;
            bio_to_spans(&sentence.tokens, &labels)
        };
        pairs.push((sentence.spans.clone(), pred_spans));
    }
    Ok(score_spans(&pairs))
}

/// Scores of one or more evaluation runs plus their mean F1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: Vec<SpanScore>,
    pub mean_f1: f64,
}

impl EvalReport {
    pub fn from_runs(runs: Vec<SpanScore>) -> Self {
        let mean_f1 = if runs.is_empty() {
            0.0
        } else {
            runs.iter().map(|r| r.f1).sum::<f64>() / runs.len() as f64
        };
        EvalReport { runs, mean_f1 }
    }

    /// Structured text rendering with every field.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("runs: {}\n", self.runs.len()));
        out.push_str(&format!("mean_f1: {:.6}\n", self.mean_f1));
        for (i, r) in self.runs.iter().enumerate() {
            out.push_str(&format!(
                "run {}: precision={:.6} recall={:.6} f1={:.6} matched={} predicted={} gold={}\n",
                i + 1,
                r.precision,
                r.recall,
                r.f1,
                r.matched,
                r.predicted,
                r.gold
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_predictions_score_one() {
        let pairs = vec![
            (vec![(0, 5), (10, 15)], vec![(0, 5), (10, 15)]),
            (vec![(3, 4)], vec![(3, 4)]),
        ];
        let s = score_spans(&pairs);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        assert_eq!(s.matched, 3);
    }

    // gold {[0,5],[10,15]}, predicted {[0,5],[20,25]} -> P=R=F1=0.5.
    #[test]
    fn half_right_scores_half() {
        let pairs = vec![(vec![(0, 5), (10, 15)], vec![(0, 5), (20, 25)])];
        let s = score_spans(&pairs);
        assert_eq!(s.precision, 0.5);
        assert_eq!(s.recall, 0.5);
        assert_eq!(s.f1, 0.5);
    }

    #[test]
    fn no_predictions_scores_zero() {
        let pairs = vec![(vec![(0, 5)], vec![])];
        let s = score_spans(&pairs);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn gold_matched_at_most_once() {
        // Two identical predictions can only consume the single gold once.
        let pairs = vec![(vec![(0, 5)], vec![(0, 5), (0, 5)])];
        let s = score_spans(&pairs);
        assert_eq!(s.matched, 1);
        assert_eq!(s.predicted, 2);
        assert_eq!(s.precision, 0.5);
        assert_eq!(s.recall, 1.0);
    }

    #[test]
    fn partial_overlap_does_not_count() {
        let pairs = vec![(vec![(0, 5)], vec![(0, 4)])];
        let s = score_spans(&pairs);
        assert_eq!(s.matched, 0);
    }

    #[test]
    fn spans_do_not_match_across_sentences() {
        let pairs = vec![(vec![(0, 5)], vec![]), (vec![], vec![(0, 5)])];
        let s = score_spans(&pairs);
        assert_eq!(s.matched, 0);
        assert_eq!(s.predicted, 1);
        assert_eq!(s.gold, 1);
    }

    #[test]
    fn report_mean_is_arithmetic_mean() {
        let runs = vec![
            SpanScore::from_counts(1, 2, 2),
            SpanScore::from_counts(2, 2, 2),
            SpanScore::from_counts(0, 1, 2),
        ];
        let f1s: Vec<f64> = runs.iter().map(|r| r.f1).collect();
        let report = EvalReport::from_runs(runs);
        let mean = f1s.iter().sum::<f64>() / 3.0;
        assert!((report.mean_f1 - mean).abs() < 1e-9);
        let text = report.render_text();
        assert!(text.contains("runs: 3"));
        assert!(text.contains("run 3:"));
    }
}
