//! Candidate extraction, dataset-reference detection, and evaluation.

mod external;
mod gazetteer;
mod metrics;
mod patterns;
mod records;
mod split;

use serde::{Deserialize, Serialize};

use crate::docparse::SentenceRef;

pub use external::{load_external_predictions, RejectedPrediction};
pub use gazetteer::{detect_rule, is_acronym, DetectorOptions, EntryKind, Gazetteer, GazetteerEntry, GENERIC_TRAILING_WORDS};
pub use metrics::{evaluate, evaluate_spans, EvalError, EvalReport, MatchMode, Metrics, SentenceRecall};
pub use patterns::{extract_candidates, sentence_likelihood, CandidatePattern, CandidatePatterns};
pub use records::{gold_from_records, gold_to_records, GoldAnnotation, GoldSchemaError, SpanRecord, DATASET_LABEL};
pub use split::split_train_eval;

/// Likelihood that a candidate marks a dataset reference. Ordered `Low < Medium < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    Low,
    Medium,
    High,
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "high" => Ok(Level::High),
            "medium" => Ok(Level::Medium),
            "low" => Ok(Level::Low),
            other => Err(format!("unknown level {other:?}")),
        }
    }
}

/// A pattern match inside one sentence. Offsets are chars into the sentence text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidateSpan {
    #[serde(flatten)]
    pub sentence: SentenceRef,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub level: Level,
    pub pattern_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Detector {
    RuleDetector,
    ExternalModel,
}

/// A detected dataset mention. Offsets are chars into the sentence text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataReference {
    #[serde(flatten)]
    pub sentence: SentenceRef,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub source: Detector,
    pub confidence: f64,
}

impl DataReference {
    pub fn span(&self) -> (usize, usize) {
        (self.start, self.end)
    }
}
