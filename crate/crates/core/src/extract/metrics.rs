use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::records::GoldAnnotation;
use super::DataReference;
use crate::docparse::SentenceRef;
use crate::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Same start and end.
    ExactSpan,
    /// Any shared character; each span is used at most once.
    Overlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mode: MatchMode,
}

impl Metrics {
    /// With nothing predicted precision is 1 if nothing was expected, else 0;
    /// recall is symmetric. F1 is 0 when both are 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, mode: MatchMode) -> Self {
        let ratio = |num: usize, den: usize, other_empty: bool| {
            if den == 0 {
                if other_empty { 1.0 } else { 0.0 }
            } else {
                num as f64 / den as f64
            }
        };
        let precision = ratio(tp, tp + fp, tp + fn_ == 0);
        let recall = ratio(tp, tp + fn_, tp + fp == 0);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Metrics { tp, fp, fn_, precision, recall, f1, mode }
    }
}

/// Share of gold sentences with at least one span that received at least
/// one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecall {
    pub hit: usize,
    pub total: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Metrics,
    pub sentence_recall: SentenceRecall,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("prediction for sentence {0:?} which has no gold annotation")]
    DanglingSentence(SentenceRef),
    #[error("sentence {0:?} appears twice in gold")]
    DuplicateGold(SentenceRef),
}

fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

fn match_sentence(pred: &[(usize, usize)], gold: &[(usize, usize)], mode: MatchMode) -> usize {
    let mut used = vec![false; pred.len()];
    let mut tp = 0;
    for g in gold {
        let found = pred.iter().enumerate().find(|(i, p)| {
            !used[*i]
                && match mode {
                    MatchMode::ExactSpan => *p == g,
                    MatchMode::Overlap => overlaps(**p, *g),
                }
        });
        if let Some((i, _)) = found {
            used[i] = true;
            tp += 1;
        }
    }
    tp
}

/// Scores predicted spans against gold. Every predicted sentence must be in
/// `gold`; gold sentences with no spans act as negatives.
pub fn evaluate_spans(
    predictions: &[(SentenceRef, (usize, usize))],
    gold: &[GoldAnnotation],
    mode: MatchMode,
    exec: Execution,
) -> Result<EvalReport, EvalError> {
    let mut index: HashMap<&SentenceRef, usize> = HashMap::with_capacity(gold.len());
    for (i, g) in gold.iter().enumerate() {
        if index.insert(&g.sentence, i).is_some() {
            return Err(EvalError::DuplicateGold(g.sentence.clone()));
        }
    }
    let mut per_sentence: Vec<Vec<(usize, usize)>> = vec![Vec::new(); gold.len()];
    for (s, span) in predictions {
        let i = *index.get(s).ok_or_else(|| EvalError::DanglingSentence(s.clone()))?;
        per_sentence[i].push(*span);
    }
    for p in &mut per_sentence {
        p.sort_unstable();
    }
    let items: Vec<usize> = (0..gold.len()).collect();
    // (tp, predicted, gold, gold sentences, gold sentences hit)
    let (tp, np, ng, gs, gh) = exec.map_reduce(
        &items,
        (0, 0, 0, 0, 0),
        |&i| {
            let (p, g) = (&per_sentence[i], &gold[i].spans);
            let has_gold = !g.is_empty();
            (match_sentence(p, g, mode), p.len(), g.len(), has_gold as usize, (has_gold && !p.is_empty()) as usize)
        },
        |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3, a.4 + b.4),
    );
    let metrics = Metrics::from_counts(tp, np - tp, ng - tp, mode);
    let recall = if gs == 0 { 1.0 } else { gh as f64 / gs as f64 };
    Ok(EvalReport { metrics, sentence_recall: SentenceRecall { hit: gh, total: gs, recall } })
}

pub fn evaluate(predictions: &[DataReference], gold: &[GoldAnnotation], mode: MatchMode) -> Result<EvalReport, EvalError> {
    let spans: Vec<(SentenceRef, (usize, usize))> = predictions.iter().map(|r| (r.sentence.clone(), r.span())).collect();
    evaluate_spans(&spans, gold, mode, Execution::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sref(i: usize) -> SentenceRef {
        SentenceRef { doc_id: "d".into(), section_index: 0, sentence_index: i }
    }

    fn run(pred: &[(usize, (usize, usize))], gold: &[(usize, &[(usize, usize)])], mode: MatchMode) -> Metrics {
        let gold: Vec<GoldAnnotation> =
            gold.iter().map(|(i, s)| GoldAnnotation { sentence: sref(*i), spans: s.to_vec() }).collect();
        let pred: Vec<_> = pred.iter().map(|(i, s)| (sref(*i), *s)).collect();
        evaluate_spans(&pred, &gold, mode, Execution::Sequential).unwrap().metrics
    }

    #[test]
    fn exact_versus_overlap() {
        let gold: &[(usize, &[(usize, usize)])] = &[(0, &[(0, 10), (20, 25)]), (1, &[])];
        let pred = [(0, (0, 10)), (0, (21, 25)), (1, (3, 4))];
        let e = run(&pred, gold, MatchMode::ExactSpan);
        assert_eq!((e.tp, e.fp, e.fn_), (1, 2, 1));
        let o = run(&pred, gold, MatchMode::Overlap);
        assert_eq!((o.tp, o.fp, o.fn_), (2, 1, 0));
        assert!((o.precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(o.recall, 1.0);
    }

    #[test]
    fn empty_conventions() {
        let m = run(&[], &[(0, &[])], MatchMode::ExactSpan);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = run(&[], &[(0, &[(0, 1)])], MatchMode::ExactSpan);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        let m = run(&[(0, (0, 1))], &[(0, &[])], MatchMode::ExactSpan);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn one_prediction_matches_one_gold() {
        let m = run(&[(0, (0, 30))], &[(0, &[(0, 5), (10, 15)])], MatchMode::Overlap);
        assert_eq!((m.tp, m.fp, m.fn_), (1, 0, 1));
    }

    #[test]
    fn dangling_and_duplicate() {
        let gold = vec![GoldAnnotation { sentence: sref(0), spans: vec![] }];
        let err = evaluate_spans(&[(sref(5), (0, 1))], &gold, MatchMode::ExactSpan, Execution::Sequential).unwrap_err();
        assert_eq!(err, EvalError::DanglingSentence(sref(5)));
        let dup = vec![gold[0].clone(), gold[0].clone()];
        assert!(matches!(evaluate_spans(&[], &dup, MatchMode::Overlap, Execution::Sequential), Err(EvalError::DuplicateGold(_))));
    }

    #[test]
    fn sentence_recall_counts_gold_bearing_sentences() {
        let gold = vec![
            GoldAnnotation { sentence: sref(0), spans: vec![(0, 4)] },
            GoldAnnotation { sentence: sref(1), spans: vec![(2, 6)] },
            GoldAnnotation { sentence: sref(2), spans: vec![] },
        ];
        let r = evaluate_spans(&[(sref(0), (9, 12)), (sref(2), (0, 1))], &gold, MatchMode::ExactSpan, Execution::Sequential)
            .unwrap();
        assert_eq!((r.sentence_recall.hit, r.sentence_recall.total), (1, 2));
    }

    proptest! {
        #[test]
        fn f1_is_harmonic_mean_and_bounded(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50) {
            let m = Metrics::from_counts(tp, fp, fn_, MatchMode::ExactSpan);
            for v in [m.precision, m.recall, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if m.precision + m.recall > 0.0 {
                let hm = 2.0 * m.precision * m.recall / (m.precision + m.recall);
                prop_assert!((m.f1 - hm).abs() < 1e-12);
            }
            prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
            prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-12);
        }
    }
}
