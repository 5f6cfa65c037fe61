//! Catalog gazetteer and the rule-based detector.
//!
//! Matching is leftmost-longest over word tokens. Lowercase letters in an
//! entry match either case in the text; uppercase letters must match
//! exactly, so the entry `LEMAS` does not fire on `lemas`. Each raw match is
//! then adjusted to the labeling conventions:
//!
//! - a 4-digit year directly before the name is included (`2013 LEMAS`);
//! - a parenthesized acronym directly after the name is included, keeping
//!   the contiguous span intact;
//! - generic words after the name (study, survey, data) are not included
//!   unless they belong to the entry;
//! - every occurrence is emitted, repeats included;
//! - an acronym-only hit used generically ("a 1994 HUD survey") is dropped.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CandidateSpan, DataReference, Detector, Level};
use crate::catalog::{Catalog, StudyId};
use crate::docparse::Sentence;

pub const GENERIC_TRAILING_WORDS: &[&str] = &["study", "studies", "survey", "surveys", "data", "dataset", "datasets"];

const INDEFINITE_ARTICLES: &[&str] = &["a", "an"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EntryKind {
    Name,
    Acronym,
    /// Initials of a name; only matched where the sentence has a Medium candidate.
    DerivedAcronym,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub surface: String,
    pub study_id: StudyId,
    pub kind: EntryKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorOptions {
    /// Register initials of multi-word names as acronyms. Off by default:
    /// initials collide with ordinary noun-phrase acronyms.
    pub derive_acronyms: bool,
}

/// `ANES`, `ECLS-K`, `NHANES2`: no spaces, at least two capitals, only
/// capitals, digits, `-` and `&`.
pub fn is_acronym(s: &str) -> bool {
    let s = s.trim();
    s.chars().filter(|c| c.is_uppercase()).count() >= 2
        && s.chars().all(|c| c.is_uppercase() || c.is_ascii_digit() || c == '-' || c == '&')
}

fn initials(name: &str) -> Option<String> {
    let caps: String = name
        .split_whitespace()
        .filter_map(|w| w.chars().next())
        .filter(|c| c.is_uppercase())
        .collect();
    (caps.chars().count() >= 3).then_some(caps)
}

#[derive(Debug, Clone)]
struct Token {
    start: usize,
    end: usize,
    text: String,
    key: String,
}

/// Word tokens: runs of alphanumerics, or single other non-space chars.
fn tokens(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut cur: Option<(usize, String)> = None;
    for (i, c) in text.chars().enumerate() {
        if c.is_alphanumeric() {
            match &mut cur {
                Some((_, s)) => s.push(c),
                None => cur = Some((i, c.to_string())),
            }
            continue;
        }
        if let Some((s, t)) = cur.take() {
            out.push(Token { start: s, end: i, key: t.to_lowercase(), text: t });
        }
        if !c.is_whitespace() {
            out.push(Token { start: i, end: i + 1, key: c.to_lowercase().collect(), text: c.to_string() });
        }
    }
    if let Some((s, t)) = cur {
        let end = s + t.chars().count();
        out.push(Token { start: s, end, key: t.to_lowercase(), text: t });
    }
    out
}

fn case_compatible(entry: &str, text: &str) -> bool {
    let (mut e, mut t) = (entry.chars(), text.chars());
    loop {
        match (e.next(), t.next()) {
            (None, None) => return true,
            (Some(ec), Some(tc)) => {
                let ok = if ec.is_uppercase() { ec == tc } else { ec.to_lowercase().eq(tc.to_lowercase()) };
                if !ok {
                    return false;
                }
            }
            _ => return entry.to_lowercase() == text.to_lowercase(),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: HashMap<String, usize>,
    terminals: Vec<usize>,
}

/// Name lookup built once from the catalog, then shared read-only.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    entry_tokens: Vec<Vec<String>>,
    nodes: Vec<TrieNode>,
}

impl Gazetteer {
    pub fn new(entries: Vec<GazetteerEntry>) -> Self {
        let mut g = Gazetteer { entries: Vec::new(), entry_tokens: Vec::new(), nodes: vec![TrieNode::default()] };
        for e in entries {
            g.insert(e);
        }
        g
    }

    /// Canonical names and variants; variants shaped like acronyms are
    /// registered as acronyms.
    pub fn from_catalog(catalog: &Catalog, options: DetectorOptions) -> Self {
        let mut entries = Vec::new();
        for s in catalog.iter() {
            for (i, name) in s.names().enumerate() {
                let kind = if i > 0 && is_acronym(name) { EntryKind::Acronym } else { EntryKind::Name };
                entries.push(GazetteerEntry { surface: name.to_string(), study_id: s.study_id, kind });
            }
            if options.derive_acronyms {
                if let Some(acr) = initials(&s.canonical_name) {
                    if !s.names().any(|n| n == acr) {
                        entries.push(GazetteerEntry { surface: acr, study_id: s.study_id, kind: EntryKind::DerivedAcronym });
                    }
                }
            }
        }
        Gazetteer::new(entries)
    }

    fn insert(&mut self, entry: GazetteerEntry) {
        let toks: Vec<Token> = tokens(&entry.surface);
        if toks.is_empty() {
            return;
        }
        let mut node = 0;
        for t in &toks {
            node = match self.nodes[node].children.get(&t.key) {
                Some(&n) => n,
                None => {
                    self.nodes.push(TrieNode::default());
                    let n = self.nodes.len() - 1;
                    self.nodes[node].children.insert(t.key.clone(), n);
                    n
                }
            };
        }
        self.nodes[node].terminals.push(self.entries.len());
        self.entry_tokens.push(toks.into_iter().map(|t| t.text).collect());
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest entry starting at token `at`: (end token exclusive, entry index).
    fn longest_at(&self, toks: &[Token], at: usize, medium_spans: &[(usize, usize)]) -> Option<(usize, usize)> {
        let mut node = 0;
        let mut best = None;
        for (j, tok) in toks.iter().enumerate().skip(at) {
            let Some(&next) = self.nodes[node].children.get(&tok.key) else {
                break;
            };
            node = next;
            let span = (toks[at].start, toks[j].end);
            let accepted = self.nodes[node].terminals.iter().copied().find(|&e| {
                let cased = self.entry_tokens[e].iter().zip(&toks[at..=j]).all(|(et, tt)| case_compatible(et, &tt.text));
                let gated = self.entries[e].kind != EntryKind::DerivedAcronym || medium_spans.contains(&span);
                cased && gated
            });
            if let Some(e) = accepted {
                best = Some((j + 1, e));
            }
        }
        best
    }
}

fn is_year(tok: &Token) -> bool {
    tok.text.len() == 4 && tok.text.chars().all(|c| c.is_ascii_digit())
}

fn only_space_between(text: &[char], a: usize, b: usize) -> bool {
    a < b && text[a..b].iter().all(|c| c.is_whitespace())
}

/// Gazetteer matches in one sentence, adjusted to the labeling conventions.
/// `candidates` are the sentence's pattern matches; derived acronyms only
/// fire where a Medium candidate covers exactly the same span.
pub fn detect_rule(sentence: &Sentence, gazetteer: &Gazetteer, candidates: &[CandidateSpan]) -> Vec<DataReference> {
    let toks = tokens(&sentence.text);
    let chars: Vec<char> = sentence.text.chars().collect();
    let medium: Vec<(usize, usize)> =
        candidates.iter().filter(|c| c.level == Level::Medium).map(|c| (c.start, c.end)).collect();

    let mut refs: Vec<DataReference> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        let Some((end_tok, entry)) = gazetteer.longest_at(&toks, i, &medium) else {
            i += 1;
            continue;
        };
        let kind = gazetteer.entries[entry].kind;
        let mut first = i;
        let mut last = end_tok; // exclusive

        // year prefix
        let prev_end = refs.last().map_or(0, |r| r.end);
        if first > 0 && is_year(&toks[first - 1]) && toks[first - 1].start >= prev_end
            && only_space_between(&chars, toks[first - 1].end, toks[first].start)
        {
            first -= 1;
        }
        // parenthesized acronym suffix
        if toks.get(last).is_some_and(|t| t.text == "(")
            && toks.get(last + 1).is_some_and(|t| is_acronym(&t.text))
            && toks.get(last + 2).is_some_and(|t| t.text == ")")
            && (toks[last].start == toks[last - 1].end || only_space_between(&chars, toks[last - 1].end, toks[last].start))
        {
            last += 3;
        }

        let generic_use = kind != EntryKind::Name
            && first > 0
            && INDEFINITE_ARTICLES.contains(&toks[first - 1].key.as_str())
            && toks.get(end_tok).is_some_and(|t| GENERIC_TRAILING_WORDS.contains(&t.key.as_str()) || t.key == "report");
        if !generic_use {
            let (start, end) = (toks[first].start, toks[last - 1].end);
            refs.push(DataReference {
                sentence: sentence.key(),
                start,
                end,
                surface: chars[start..end].iter().collect(),
                source: Detector::RuleDetector,
                confidence: if kind == EntryKind::Name { 1.0 } else { 0.8 },
            });
        }
        i = last.max(end_tok);
    }
    refs
}
