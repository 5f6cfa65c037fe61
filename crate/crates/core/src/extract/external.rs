use serde::{Deserialize, Serialize};

use super::records::{SpanRecord, DATASET_LABEL};
use super::{DataReference, Detector};
use crate::docparse::Corpus;
use crate::jsonl;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedPrediction {
    pub line: usize,
    pub reason: String,
}

/// Reads span predictions from an external model. Lines that do not parse,
/// point at unknown sentences, fall outside the sentence, or carry another
/// label are rejected individually. Overlapping predictions in a sentence are
/// resolved by keeping the more confident one.
pub fn load_external_predictions(text: &str, corpus: &Corpus) -> (Vec<DataReference>, Vec<RejectedPrediction>) {
    let (records, errors) = jsonl::parse_lines::<SpanRecord>(text);
    let mut rejected: Vec<RejectedPrediction> =
        errors.into_iter().map(|e| RejectedPrediction { line: e.line, reason: e.reason }).collect();
    let mut refs = Vec::new();
    for (line, r) in records {
        let mut reject = |reason: String| rejected.push(RejectedPrediction { line, reason });
        let key = r.sentence();
        let Some(sentence) = corpus.sentence(&key) else {
            reject(format!("unknown sentence {}/{}/{}", key.doc_id, key.section_index, key.sentence_index));
            continue;
        };
        if let Some(label) = r.label.as_deref().filter(|l| *l != DATASET_LABEL) {
            reject(format!("label {label:?} is not {DATASET_LABEL}"));
            continue;
        }
        let (Some(start), Some(end)) = (r.start, r.end) else {
            reject("missing start/end".into());
            continue;
        };
        let Some(surface) = crate::text::char_slice(&sentence.text, start, end).filter(|_| start < end) else {
            reject(format!("span {start}..{end} outside sentence of {} chars", sentence.text.chars().count()));
            continue;
        };
        let confidence = r.confidence.unwrap_or(1.0);
        if !(0.0..=1.0).contains(&confidence) {
            reject(format!("confidence {confidence} outside [0, 1]"));
            continue;
        }
        refs.push(DataReference {
            sentence: key,
            start,
            end,
            surface: surface.to_string(),
            source: Detector::ExternalModel,
            confidence,
        });
    }
    rejected.sort_by_key(|r| r.line);
    (resolve_overlaps(refs), rejected)
}

/// Greedy by confidence, then earlier start; survivors in sentence/offset order.
fn resolve_overlaps(mut refs: Vec<DataReference>) -> Vec<DataReference> {
    refs.sort_by(|a, b| {
        a.sentence
            .cmp(&b.sentence)
            .then(b.confidence.total_cmp(&a.confidence))
            .then(a.start.cmp(&b.start))
            .then(a.end.cmp(&b.end))
    });
    let mut kept: Vec<DataReference> = Vec::with_capacity(refs.len());
    let mut group_start = 0;
    for r in refs {
        if kept.get(group_start).is_some_and(|g| g.sentence != r.sentence) {
            group_start = kept.len();
        }
        if kept[group_start..].iter().all(|k| r.end <= k.start || k.end <= r.start) {
            kept.push(r);
        }
    }
    kept.sort_by(|a, b| a.sentence.cmp(&b.sentence).then(a.start.cmp(&b.start)));
    kept
}
