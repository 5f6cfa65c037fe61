//! Positional inverted index over document full text with exact phrase
//! search, catalog-wide search tallies, and deduplication against an
//! existing bibliography.
//!
//! Tokens are lowercase runs of alphanumerics. `.`, `/` and `-` are kept
//! when they sit between two alphanumerics, so `10.3886/ICPSR06635` and
//! `ECLS-K` are single tokens while `(ICPSR 6635)` is `icpsr`, `6635`.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{QueryKind, SearchQuery};
use crate::docparse::{self, DocParseError, SectionSynonyms, SourceFormat};
use crate::par::Execution;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate doc_id {0:?}")]
    DuplicateDocId(String),
    #[error("cannot read corpus manifest {path}: {source}")]
    Manifest {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("document {doc_id}: {source}")]
    Document {
        doc_id: String,
        #[source]
        source: DocParseError,
    },
}

pub fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if matches!(c, '.' | '/' | '-')
            && !cur.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            cur.push(c);
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// A document handed to [`build_index`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexDoc {
    pub doc_id: String,
    pub doi: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocMeta {
    pub doc_id: String,
    pub doi: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Posting {
    doc: u32,
    positions: Vec<u32>,
}

/// Immutable once built; queries are read-only.
#[derive(Debug, Clone, Default)]
pub struct PositionalIndex {
    docs: Vec<DocMeta>,
    postings: HashMap<String, Vec<Posting>>,
}

impl PositionalIndex {
    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn docs(&self) -> &[DocMeta] {
        &self.docs
    }

    pub fn vocabulary_size(&self) -> usize {
        self.postings.len()
    }

    /// Positions of `token` in document ordinal `doc`, if any.
    fn positions(&self, token: &str, doc: u32) -> Option<&[u32]> {
        let list = self.postings.get(token)?;
        list.binary_search_by_key(&doc, |p| p.doc).ok().map(|i| list[i].positions.as_slice())
    }
}

pub fn build_index(corpus: &[IndexDoc], exec: Execution) -> Result<PositionalIndex, IndexError> {
    let mut seen = HashSet::new();
    for d in corpus {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(IndexError::DuplicateDocId(d.doc_id.clone()));
        }
    }
    // per-document shards, merged in document order
    let shards: Vec<HashMap<String, Vec<u32>>> = exec.map(corpus, |d| {
        let mut local: HashMap<String, Vec<u32>> = HashMap::new();
        for (pos, tok) in tokenize(&d.text).into_iter().enumerate() {
            local.entry(tok).or_default().push(pos as u32);
        }
        local
    });
    let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
    for (doc, shard) in shards.into_iter().enumerate() {
        for (tok, positions) in shard {
            postings.entry(tok).or_default().push(Posting { doc: doc as u32, positions });
        }
    }
    let docs = corpus.iter().map(|d| DocMeta { doc_id: d.doc_id.clone(), doi: d.doi.clone() }).collect();
    Ok(PositionalIndex { docs, postings })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub query: SearchQuery,
    pub occurrence_count: usize,
    pub first_position: usize,
}

/// Documents containing the query phrase as a contiguous token sequence,
/// in index order. Overlapping occurrences each count.
pub fn search_phrase(index: &PositionalIndex, query: &SearchQuery) -> Vec<Hit> {
    let tokens = tokenize(&query.phrase);
    let Some(first) = tokens.first() else {
        return Vec::new();
    };
    let Some(lead) = index.postings.get(first) else {
        return Vec::new();
    };
    let mut hits = Vec::new();
    'docs: for posting in lead {
        let mut rest = Vec::with_capacity(tokens.len() - 1);
        for t in &tokens[1..] {
            match index.positions(t, posting.doc) {
                Some(p) => rest.push(p),
                None => continue 'docs,
            }
        }
        let mut count = 0;
        let mut first_pos = None;
        for &p in &posting.positions {
            let matched = rest
                .iter()
                .enumerate()
                .all(|(i, positions)| positions.binary_search(&(p + i as u32 + 1)).is_ok());
            if matched {
                count += 1;
                first_pos.get_or_insert(p);
            }
        }
        if let Some(fp) = first_pos {
            hits.push(Hit {
                doc_id: index.docs[posting.doc as usize].doc_id.clone(),
                query: query.clone(),
                occurrence_count: count,
                first_position: fp as usize,
            });
        }
    }
    hits
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateDoc {
    pub doc_id: String,
    pub doi: Option<String>,
    pub matched_queries: Vec<Hit>,
    /// Set by deduplication when the document has no DOI to compare.
    #[serde(default)]
    pub flagged_no_doi: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyRow {
    pub kind: QueryKind,
    pub hits: usize,
    pub percent: u32,
}

/// Hit counts per query kind. A document matching several kinds counts
/// once under each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyByKind {
    pub rows: Vec<TallyRow>,
    pub total_hits: usize,
    pub documents: usize,
}

impl TallyByKind {
    pub fn from_counts(counts: [usize; 3], documents: usize) -> Self {
        let total: usize = counts.iter().sum();
        let percents = largest_remainder_percent(&counts);
        let rows = QueryKind::ALL
            .iter()
            .zip(counts)
            .zip(percents)
            .map(|((&kind, hits), percent)| TallyRow { kind, hits, percent })
            .collect();
        TallyByKind { rows, total_hits: total, documents }
    }

    pub fn hits(&self, kind: QueryKind) -> usize {
        self.rows.iter().find(|r| r.kind == kind).map_or(0, |r| r.hits)
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<14} {:>8} {:>8}\n", "Search method", "Hits", "Percent");
        for r in &self.rows {
            out.push_str(&format!("{:<14} {:>8} {:>7}%\n", r.kind.label(), r.hits, r.percent));
        }
        out.push_str(&format!("{:<14} {:>8}\n", "Total", self.total_hits));
        out
    }
}

/// Integer percentages that sum to exactly 100 (Hamilton apportionment);
/// all zeros when the total is zero.
pub fn largest_remainder_percent(counts: &[usize]) -> Vec<u32> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let mut out: Vec<u32> = counts.iter().map(|&c| (c * 100 / total) as u32).collect();
    let assigned: u32 = out.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    // remainder numerators compare exactly as integers
    order.sort_by(|&a, &b| ((counts[b] * 100) % total).cmp(&((counts[a] * 100) % total)).then(a.cmp(&b)));
    for &i in order.iter().take((100 - assigned) as usize) {
        out[i] += 1;
    }
    out
}

pub fn search_catalog(
    index: &PositionalIndex,
    queries: &[SearchQuery],
    exec: Execution,
) -> (Vec<CandidateDoc>, TallyByKind) {
    let per_query = exec.map(queries, |q| search_phrase(index, q));
    let ordinal: HashMap<&str, usize> = index.docs.iter().enumerate().map(|(i, d)| (d.doc_id.as_str(), i)).collect();
    let mut counts = [0usize; 3];
    let mut grouped: Vec<Vec<Hit>> = vec![Vec::new(); index.docs.len()];
    for hits in per_query {
        for h in hits {
            counts[QueryKind::ALL.iter().position(|k| *k == h.query.kind).unwrap()] += 1;
            grouped[ordinal[h.doc_id.as_str()]].push(h);
        }
    }
    let candidates: Vec<CandidateDoc> = grouped
        .into_iter()
        .enumerate()
        .filter(|(_, hits)| !hits.is_empty())
        .map(|(i, hits)| CandidateDoc {
            doc_id: index.docs[i].doc_id.clone(),
            doi: index.docs[i].doi.clone(),
            matched_queries: hits,
            flagged_no_doi: false,
        })
        .collect();
    let tally = TallyByKind::from_counts(counts, candidates.len());
    (candidates, tally)
}

pub fn normalize_doi(doi: &str) -> String {
    let d = doi.trim();
    let lower = d.to_lowercase();
    for prefix in ["https://doi.org/", "http://doi.org/", "https://dx.doi.org/", "http://dx.doi.org/", "doi:"] {
        if let Some(rest) = lower.strip_prefix(prefix) {
            return rest.trim().to_string();
        }
    }
    lower
}

/// Drop candidates whose DOI is already in the bibliography. Candidates
/// without a DOI are kept and flagged.
pub fn dedup_against_bibliography(candidates: &[CandidateDoc], bibliography: &HashSet<String>) -> Vec<CandidateDoc> {
    candidates
        .iter()
        .filter(|c| c.doi.as_deref().is_none_or(|d| !bibliography.contains(&normalize_doi(d))))
        .map(|c| CandidateDoc { flagged_no_doi: c.doi.is_none(), ..c.clone() })
        .collect()
}

/// One line of a corpus manifest; `path` is relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub doc_id: String,
    #[serde(default)]
    pub doi: Option<String>,
    pub path: PathBuf,
    pub format: SourceFormat,
}

pub const MANIFEST_NAME: &str = "manifest.jsonl";

pub fn read_corpus_manifest(dir: &Path) -> Result<Vec<CorpusEntry>, IndexError> {
    let path = dir.join(MANIFEST_NAME);
    crate::jsonl::read(&path).map_err(|source| IndexError::Manifest { path: path.display().to_string(), source })
}

/// Parse every manifest entry into indexable full text.
pub fn load_corpus(dir: &Path, table: &SectionSynonyms, exec: Execution) -> Result<Vec<IndexDoc>, IndexError> {
    let entries = read_corpus_manifest(dir)?;
    let mut seen = HashSet::new();
    for e in &entries {
        if !seen.insert(e.doc_id.as_str()) {
            return Err(IndexError::DuplicateDocId(e.doc_id.clone()));
        }
    }
    exec.map(&entries, |e| {
        let doc = docparse::parse_file(&e.doc_id, &dir.join(&e.path), e.format, table)
            .map_err(|source| IndexError::Document { doc_id: e.doc_id.clone(), source })?;
        Ok(IndexDoc { doc_id: e.doc_id.clone(), doi: e.doi.clone().or(doc.doi.clone()), text: doc.full_text() })
    })
    .into_iter()
    .collect()
}
