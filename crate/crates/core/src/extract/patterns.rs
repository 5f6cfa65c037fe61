use std::path::Path;

use once_cell::sync::Lazy;
use regex::Regex;

use super::{CandidateSpan, Level};
use crate::docparse::Sentence;
use crate::text::ByteToChar;

const DEFAULT_PATTERNS: &str = include_str!("../../data/candidate_patterns.tsv");

#[derive(Debug, Clone)]
pub struct CandidatePattern {
    pub level: Level,
    pub id: String,
    pub regex: Regex,
}

/// The three-level pattern set. The default ships in `data/candidate_patterns.tsv`.
#[derive(Debug, Clone)]
pub struct CandidatePatterns {
    patterns: Vec<CandidatePattern>,
}

impl Default for CandidatePatterns {
    fn default() -> Self {
        CandidatePatterns::parse(DEFAULT_PATTERNS).expect("bundled patterns are valid")
    }
}

impl CandidatePatterns {
    /// `level<TAB>pattern_id<TAB>regex` per line; `#` comments.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut patterns = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            let (Some(level), Some(id), Some(re)) = (cols.next(), cols.next(), cols.next()) else {
                return Err(format!("line {}: expected level, id and regex", i + 1));
            };
            let level: Level = level.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
            let regex = Regex::new(re).map_err(|e| format!("line {}: {e}", i + 1))?;
            patterns.push(CandidatePattern { level, id: id.trim().to_string(), regex });
        }
        Ok(CandidatePatterns { patterns })
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn patterns(&self) -> &[CandidatePattern] {
        &self.patterns
    }

    /// All matches at all levels. Within one level a span strictly inside
    /// another match of that level is dropped; across levels everything is kept.
    pub fn extract(&self, sentence: &Sentence) -> Vec<CandidateSpan> {
        let text = &sentence.text;
        let map = ByteToChar::new(text);
        let mut spans: Vec<CandidateSpan> = Vec::new();
        for p in &self.patterns {
            for m in p.regex.find_iter(text) {
                if m.start() == m.end() {
                    continue;
                }
                spans.push(CandidateSpan {
                    sentence: sentence.key(),
                    start: map.get(m.start()),
                    end: map.get(m.end()),
                    surface: m.as_str().to_string(),
                    level: p.level,
                    pattern_id: p.id.clone(),
                });
            }
        }
        let contained = |s: &CandidateSpan| {
            spans.iter().any(|o| {
                o.level == s.level && o.start <= s.start && s.end <= o.end && (o.end - o.start) > (s.end - s.start)
            })
        };
        let keep: Vec<bool> = spans.iter().map(|s| !contained(s)).collect();
        let mut out: Vec<CandidateSpan> = spans.iter().zip(keep).filter(|(_, k)| *k).map(|(s, _)| s.clone()).collect();
        out.sort_by_key(|c| (c.start, c.end, std::cmp::Reverse(c.level)));
        out.dedup_by(|a, b| a.start == b.start && a.end == b.end && a.level == b.level);
        out
    }
}

/// Candidates from the bundled pattern set.
pub fn extract_candidates(sentence: &Sentence) -> Vec<CandidateSpan> {
    static DEFAULT: Lazy<CandidatePatterns> = Lazy::new(CandidatePatterns::default);
    DEFAULT.extract(sentence)
}

/// Highest level present; `None` when there are no candidates.
pub fn sentence_likelihood(candidates: &[CandidateSpan]) -> Option<Level> {
    candidates.iter().map(|c| c.level).max()
}
