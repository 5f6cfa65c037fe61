use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::docparse::{Corpus, SentenceRef};

pub const DATASET_LABEL: &str = "DATASET";

/// One line of a span file. A record without offsets marks a sentence that
/// contains no dataset reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanRecord {
    pub doc_id: String,
    pub section_index: usize,
    pub sentence_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl SpanRecord {
    pub fn sentence(&self) -> SentenceRef {
        SentenceRef { doc_id: self.doc_id.clone(), section_index: self.section_index, sentence_index: self.sentence_index }
    }

    pub fn negative(sentence: &SentenceRef) -> Self {
        SpanRecord {
            doc_id: sentence.doc_id.clone(),
            section_index: sentence.section_index,
            sentence_index: sentence.sentence_index,
            start: None,
            end: None,
            label: None,
            confidence: None,
        }
    }

    pub fn span(sentence: &SentenceRef, start: usize, end: usize) -> Self {
        SpanRecord { start: Some(start), end: Some(end), label: Some(DATASET_LABEL.into()), ..Self::negative(sentence) }
    }
}

/// Gold labels for one sentence; `spans` sorted, non-overlapping, possibly empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub sentence: SentenceRef,
    pub spans: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GoldSchemaError {
    #[error("record {index}: only one of start/end is set")]
    HalfSpan { index: usize },
    #[error("record {index}: empty or inverted span {start}..{end}")]
    BadSpan { index: usize, start: usize, end: usize },
    #[error("record {index}: label {label:?} is not {DATASET_LABEL}")]
    Label { index: usize, label: String },
    #[error("record {index}: sentence {sentence:?} not in corpus")]
    UnknownSentence { index: usize, sentence: SentenceRef },
    #[error("record {index}: span {start}..{end} exceeds sentence length {len}")]
    OutOfBounds { index: usize, start: usize, end: usize, len: usize },
    #[error("{sentence:?}: spans {a:?} and {b:?} overlap")]
    Overlap { sentence: SentenceRef, a: (usize, usize), b: (usize, usize) },
}

/// Groups span records into per-sentence gold, in first-seen sentence order.
/// With a corpus, sentences and offsets are checked against it.
pub fn gold_from_records(records: &[SpanRecord], corpus: Option<&Corpus>) -> Result<Vec<GoldAnnotation>, GoldSchemaError> {
    let mut order: Vec<SentenceRef> = Vec::new();
    let mut spans: BTreeMap<SentenceRef, Vec<(usize, usize)>> = BTreeMap::new();
    for (index, r) in records.iter().enumerate() {
        let key = r.sentence();
        if let Some(corpus) = corpus {
            if corpus.sentence(&key).is_none() {
                return Err(GoldSchemaError::UnknownSentence { index, sentence: key });
            }
        }
        if !spans.contains_key(&key) {
            order.push(key.clone());
            spans.insert(key.clone(), Vec::new());
        }
        let span = match (r.start, r.end) {
            (None, None) => continue,
            (Some(start), Some(end)) => (start, end),
            _ => return Err(GoldSchemaError::HalfSpan { index }),
        };
        if span.0 >= span.1 {
            return Err(GoldSchemaError::BadSpan { index, start: span.0, end: span.1 });
        }
        if let Some(label) = &r.label {
            if label != DATASET_LABEL {
                return Err(GoldSchemaError::Label { index, label: label.clone() });
            }
        }
        if let Some(s) = corpus.and_then(|c| c.sentence(&key)) {
            let len = s.text.chars().count();
            if span.1 > len {
                return Err(GoldSchemaError::OutOfBounds { index, start: span.0, end: span.1, len });
            }
        }
        spans.get_mut(&key).expect("inserted above").push(span);
    }
    let mut out = Vec::with_capacity(order.len());
    for sentence in order {
        let mut s = spans.remove(&sentence).unwrap_or_default();
        s.sort_unstable();
        s.dedup();
        if let Some(w) = s.windows(2).find(|w| w[1].0 < w[0].1) {
            return Err(GoldSchemaError::Overlap { sentence, a: w[0], b: w[1] });
        }
        out.push(GoldAnnotation { sentence, spans: s });
    }
    Ok(out)
}

/// One record per span, or one negative record for an empty sentence.
pub fn gold_to_records(gold: &[GoldAnnotation]) -> Vec<SpanRecord> {
    let mut out = Vec::new();
    for g in gold {
        if g.spans.is_empty() {
            out.push(SpanRecord::negative(&g.sentence));
        }
        out.extend(g.spans.iter().map(|&(s, e)| SpanRecord::span(&g.sentence, s, e)));
    }
    out
}
