//! Review queue and verdict log.
//!
//! State is derived entirely from the item universe plus an append-only
//! verdict log; replaying any prefix of the log reproduces the state at that
//! point. The last verdict for an item wins.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::StudyId;
use crate::docparse::{Corpus, SectionLabel, SentenceRef};
use crate::extract::{sentence_likelihood, CandidateSpan, DataReference, Level, SpanRecord};
use crate::linkage::{LinkResult, Partition};

/// Stable id for a span: 16 hex chars of SHA-256 over its coordinates.
pub fn item_id(sentence: &SentenceRef, start: usize, end: usize) -> String {
    let key = format!(
        "{}\u{1f}{}\u{1f}{}\u{1f}{start}\u{1f}{end}",
        sentence.doc_id, sentence.section_index, sentence.sentence_index
    );
    let digest = Sha256::digest(key.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study_id: Option<StudyId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_name: Option<String>,
    pub similarity: f64,
    pub centered_score: f64,
    pub partition: Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemContext {
    pub sentence: String,
    pub section_label: SectionLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_doi: Option<String>,
    /// Pattern matches in the sentence, for explaining the prediction.
    pub candidates: Vec<CandidateSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
}

/// Sort key: catalog before external before non-dataset, then higher
/// candidate level, then higher similarity, then document order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priority {
    pub partition: Partition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    pub similarity: f64,
    /// (document position, section, sentence, start)
    pub position: (usize, usize, usize, usize),
}

impl Priority {
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        self.partition
            .cmp(&other.partition)
            .then(Reverse(self.level).cmp(&Reverse(other.level)))
            .then(other.similarity.total_cmp(&self.similarity))
            .then(self.position.cmp(&other.position))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub reference: DataReference,
    pub link: LinkInfo,
    pub context: ItemContext,
    pub priority: Priority,
}

impl ReviewItem {
    pub fn sentence_len(&self) -> usize {
        self.context.sentence.chars().count()
    }
}

/// Items for every link whose sentence is in the corpus, in priority order.
/// `candidates` are the pattern matches for the same corpus.
pub fn build_queue(links: &[LinkResult], corpus: &Corpus, candidates: &[CandidateSpan]) -> Vec<ReviewItem> {
    let mut by_sentence: HashMap<&SentenceRef, Vec<&CandidateSpan>> = HashMap::new();
    for c in candidates {
        by_sentence.entry(&c.sentence).or_default().push(c);
    }
    let mut seen = std::collections::HashSet::new();
    let mut items = Vec::new();
    for l in links {
        let r = &l.reference;
        let (Some(sentence), Some(section), Some(doc_pos)) = (
            corpus.sentence(&r.sentence),
            corpus.section(&r.sentence.doc_id, r.sentence.section_index),
            corpus.doc_position(&r.sentence.doc_id),
        ) else {
            log::warn!("link for {:?} has no sentence in the corpus, skipped", r.sentence);
            continue;
        };
        let id = item_id(&r.sentence, r.start, r.end);
        if !seen.insert(id.clone()) {
            continue;
        }
        let cands: Vec<CandidateSpan> =
            by_sentence.get(&r.sentence).map(|v| v.iter().map(|c| (*c).clone()).collect()).unwrap_or_default();
        let level = cands
            .iter()
            .filter(|c| c.start < r.end && r.start < c.end)
            .map(|c| c.level)
            .max()
            .or_else(|| sentence_likelihood(&cands));
        items.push(ReviewItem {
            item_id: id,
            reference: r.clone(),
            link: LinkInfo {
                study_id: l.best_study,
                matched_name: l.matched_name.clone(),
                similarity: l.similarity,
                centered_score: l.centered_score,
                partition: l.partition,
            },
            context: ItemContext {
                sentence: sentence.text.clone(),
                section_label: section.label,
                doc_doi: corpus.docs()[doc_pos].doi.clone(),
                candidates: cands,
                level,
            },
            priority: Priority {
                partition: l.partition,
                level,
                similarity: l.similarity,
                position: (doc_pos, r.sentence.section_index, r.sentence.sentence_index, r.start),
            },
        });
    }
    items.sort_by(|a, b| a.priority.cmp_key(&b.priority));
    items
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    AcceptUse,
    AcceptMention,
    Reject,
    AdjustSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// What a reviewer submits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictRequest {
    pub item_id: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjusted: Option<Span>,
    pub reviewer: String,
}

impl VerdictRequest {
    pub fn at(self, timestamp: DateTime<Utc>) -> Verdict {
        Verdict { item_id: self.item_id, decision: self.decision, adjusted: self.adjusted, reviewer: self.reviewer, timestamp }
    }
}

/// One line of the verdict log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub item_id: String,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjusted: Option<Span>,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown item {0}")]
    NotFound(String),
    #[error("invalid span for item {item_id}: {reason}")]
    InvalidSpan { item_id: String, reason: String },
    #[error("verdict log line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("verdict log {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Queue state at some prefix of the verdict log.
#[derive(Debug, Clone, Default)]
pub struct ReviewState {
    items: Vec<ReviewItem>,
    index: HashMap<String, usize>,
    final_verdicts: HashMap<String, Verdict>,
    applied: usize,
}

impl ReviewState {
    /// `items` in priority order, as from [`build_queue`].
    pub fn new(items: Vec<ReviewItem>) -> Self {
        let index = items.iter().enumerate().map(|(i, it)| (it.item_id.clone(), i)).collect();
        ReviewState { items, index, final_verdicts: HashMap::new(), applied: 0 }
    }

    pub fn replay(items: Vec<ReviewItem>, log: &[Verdict]) -> Result<Self, ReviewError> {
        let mut s = ReviewState::new(items);
        for v in log {
            s.apply(v.clone())?;
        }
        Ok(s)
    }

    pub fn check(&self, item_id: &str, decision: Decision, adjusted: Option<Span>) -> Result<(), ReviewError> {
        let item = self.item(item_id).ok_or_else(|| ReviewError::NotFound(item_id.to_string()))?;
        let invalid = |reason: String| Err(ReviewError::InvalidSpan { item_id: item_id.to_string(), reason });
        match (decision, adjusted) {
            (Decision::AdjustSpan, None) => invalid("AdjustSpan needs an adjusted span".into()),
            (Decision::AdjustSpan, Some(s)) if s.end <= s.start => invalid(format!("end {} <= start {}", s.end, s.start)),
            (Decision::AdjustSpan, Some(s)) if s.end > item.sentence_len() => {
                invalid(format!("end {} beyond sentence length {}", s.end, item.sentence_len()))
            }
            (Decision::AdjustSpan, Some(_)) => Ok(()),
            (_, Some(_)) => invalid("adjusted span only allowed with AdjustSpan".into()),
            (_, None) => Ok(()),
        }
    }

    pub fn apply(&mut self, v: Verdict) -> Result<(), ReviewError> {
        self.check(&v.item_id, v.decision, v.adjusted)?;
        self.applied += 1;
        self.final_verdicts.insert(v.item_id.clone(), v);
        Ok(())
    }

    /// Verdicts applied so far.
    pub fn log_len(&self) -> usize {
        self.applied
    }

    pub fn items(&self) -> &[ReviewItem] {
        &self.items
    }

    pub fn item(&self, item_id: &str) -> Option<&ReviewItem> {
        self.index.get(item_id).map(|&i| &self.items[i])
    }

    pub fn verdict(&self, item_id: &str) -> Option<&Verdict> {
        self.final_verdicts.get(item_id)
    }

    /// Unreviewed items in priority order.
    pub fn queue(&self, limit: Option<usize>) -> Vec<&ReviewItem> {
        self.items
            .iter()
            .filter(|i| !self.final_verdicts.contains_key(&i.item_id))
            .take(limit.unwrap_or(usize::MAX))
            .collect()
    }

    fn decided(&self) -> impl Iterator<Item = (&ReviewItem, &Verdict)> {
        self.items.iter().filter_map(|i| self.final_verdicts.get(&i.item_id).map(|v| (i, v)))
    }

    /// One entry per (document, study) with a final AcceptUse verdict.
    pub fn export_bibliography(&self) -> Vec<BibliographyExport> {
        let mut grouped: BTreeMap<(String, StudyId), BibliographyExport> = BTreeMap::new();
        for (item, v) in self.decided().filter(|(_, v)| v.decision == Decision::AcceptUse) {
            let Some(study) = item.link.study_id else { continue };
            let doc = item.reference.sentence.doc_id.clone();
            let e = grouped.entry((doc.clone(), study)).or_insert_with(|| BibliographyExport {
                doc_id: doc,
                doc_doi: item.context.doc_doi.clone(),
                study_id: study,
                provenance: Vec::new(),
            });
            e.provenance.push(Provenance { item_id: item.item_id.clone(), reviewer: v.reviewer.clone(), timestamp: v.timestamp });
        }
        let mut out: Vec<BibliographyExport> = grouped.into_values().collect();
        for e in &mut out {
            e.provenance.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        }
        out
    }

    /// Items whose final verdict is AcceptMention.
    pub fn export_mentions(&self) -> Vec<MentionExport> {
        let mut out: Vec<MentionExport> = self
            .decided()
            .filter(|(_, v)| v.decision == Decision::AcceptMention)
            .map(|(i, v)| MentionExport {
                item_id: i.item_id.clone(),
                doc_id: i.reference.sentence.doc_id.clone(),
                study_id: i.link.study_id,
                surface: i.reference.surface.clone(),
                reviewer: v.reviewer.clone(),
                timestamp: v.timestamp,
            })
            .collect();
        out.sort_by(|a, b| (&a.doc_id, &a.item_id).cmp(&(&b.doc_id, &b.item_id)));
        out
    }

    /// Gold span records from final verdicts: accepts give their span
    /// (the adjusted one for AdjustSpan), rejects give a sentence with no
    /// span. Within a sentence, a span overlapping an earlier kept span is
    /// dropped so the output is always valid gold.
    pub fn export_training(&self) -> Vec<SpanRecord> {
        let mut per_sentence: BTreeMap<SentenceRef, Vec<(usize, usize)>> = BTreeMap::new();
        for (item, v) in self.decided() {
            let spans = per_sentence.entry(item.reference.sentence.clone()).or_default();
            match v.decision {
                Decision::Reject => {}
                Decision::AcceptUse | Decision::AcceptMention => spans.push(item.reference.span()),
                Decision::AdjustSpan => {
                    let s = v.adjusted.expect("validated on apply");
                    spans.push((s.start, s.end));
                }
            }
        }
        let mut out = Vec::new();
        for (sentence, mut spans) in per_sentence {
            spans.sort_by_key(|&(s, e)| (s, Reverse(e)));
            let mut kept: Vec<(usize, usize)> = Vec::new();
            for sp in spans {
                if kept.last().is_none_or(|k| k.1 <= sp.0) {
                    kept.push(sp);
                }
            }
            if kept.is_empty() {
                out.push(SpanRecord::negative(&sentence));
            }
            out.extend(kept.into_iter().map(|(s, e)| SpanRecord::span(&sentence, s, e)));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub item_id: String,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibliographyExport {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_doi: Option<String>,
    pub study_id: StudyId,
    pub provenance: Vec<Provenance>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionExport {
    pub item_id: String,
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study_id: Option<StudyId>,
    pub surface: String,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

/// Append-only verdict file. Each append is flushed and synced before it
/// returns.
pub struct VerdictLog {
    path: PathBuf,
    file: File,
}

impl VerdictLog {
    /// Opens (creating if needed) and reads back existing verdicts. A final
    /// line without a newline is a torn write and is dropped.
    pub fn open(path: &Path) -> Result<(Self, Vec<Verdict>), ReviewError> {
        let io_err = |source| ReviewError::Io { path: path.to_path_buf(), source };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(e)),
        };
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        if complete.len() < text.len() {
            log::warn!("{}: dropping incomplete final line", path.display());
        }
        let (ok, bad) = crate::jsonl::parse_lines::<Verdict>(complete);
        if let Some(b) = bad.into_iter().next() {
            return Err(ReviewError::CorruptLog { line: b.line, reason: b.reason });
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err)?;
        if complete.len() < text.len() {
            file.set_len(complete.len() as u64).map_err(io_err)?;
            file = OpenOptions::new().append(true).open(path).map_err(io_err)?;
        }
        Ok((VerdictLog { path: path.to_path_buf(), file }, ok.into_iter().map(|(_, v)| v).collect()))
    }

    pub fn append(&mut self, v: &Verdict) -> Result<(), ReviewError> {
        let mut line = serde_json::to_string(v).expect("verdicts serialize");
        line.push('\n');
        let io_err = |source| ReviewError::Io { path: self.path.clone(), source };
        self.file.write_all(line.as_bytes()).map_err(io_err)?;
        self.file.sync_data().map_err(|source| ReviewError::Io { path: self.path.clone(), source })
    }
}

/// Shared service: many readers, one serialized writer. A verdict is in the
/// log before it is visible to readers.
pub struct ReviewService {
    state: RwLock<ReviewState>,
    log: Mutex<Option<VerdictLog>>,
}

impl ReviewService {
    pub fn open(items: Vec<ReviewItem>, log_path: &Path) -> Result<Self, ReviewError> {
        let (log, verdicts) = VerdictLog::open(log_path)?;
        let state = ReviewState::replay(items, &verdicts)?;
        Ok(ReviewService { state: RwLock::new(state), log: Mutex::new(Some(log)) })
    }

    /// No persistence; for tests and dry runs.
    pub fn in_memory(items: Vec<ReviewItem>) -> Self {
        ReviewService { state: RwLock::new(ReviewState::new(items)), log: Mutex::new(None) }
    }

    pub fn read<R>(&self, f: impl FnOnce(&ReviewState) -> R) -> R {
        f(&self.state.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn submit(&self, req: VerdictRequest, now: DateTime<Utc>) -> Result<Verdict, ReviewError> {
        let mut log = self.log.lock().unwrap_or_else(|e| e.into_inner());
        self.read(|s| s.check(&req.item_id, req.decision, req.adjusted))?;
        let v = req.at(now);
        if let Some(log) = log.as_mut() {
            log.append(&v)?;
        }
        self.state.write().unwrap_or_else(|e| e.into_inner()).apply(v.clone())?;
        Ok(v)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::docparse::parse_plaintext;
    use crate::extract::{evaluate, extract_candidates, gold_from_records, Detector, MatchMode};
    use chrono::TimeZone;

    pub(crate) fn ts(sec: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + sec, 0).unwrap()
    }

    fn corpus() -> Corpus {
        let mut a = parse_plaintext("a", "We use the GSS data. The ANES and PSID panels were merged. Nothing here.");
        a.doi = Some("10.1/a".into());
        a.segment();
        let mut b = parse_plaintext("b", "Results from GSS samples. Youth Panel too.");
        b.segment();
        Corpus::new(vec![a, b])
    }

    #[allow(clippy::too_many_arguments)]
    fn link(doc: &str, sent: usize, start: usize, end: usize, p: Partition, sim: f64, study: Option<u64>, c: &Corpus) -> LinkResult {
        let sentence = SentenceRef { doc_id: doc.into(), section_index: 0, sentence_index: sent };
        let surface = crate::text::char_slice(&c.sentence(&sentence).unwrap().text, start, end).unwrap().to_string();
        LinkResult {
            reference: DataReference { sentence, start, end, surface, source: Detector::RuleDetector, confidence: 1.0 },
            best_study: study.map(StudyId),
            matched_name: None,
            similarity: sim,
            centered_score: sim - 0.75,
            partition: p,
        }
    }

    pub(crate) fn fixture() -> (Corpus, Vec<LinkResult>, Vec<CandidateSpan>) {
        let c = corpus();
        use Partition::*;
        let links = vec![
            link("a", 0, 11, 14, CatalogDataset, 1.0, Some(1), &c),  // GSS
            link("a", 1, 4, 8, CatalogDataset, 0.9, Some(2), &c),    // ANES
            link("a", 1, 13, 17, CatalogDataset, 0.9, Some(3), &c),  // PSID
            link("b", 0, 13, 16, CatalogDataset, 1.0, Some(1), &c),  // GSS
            link("b", 1, 0, 11, ExternalDataset, 0.5, None, &c),     // Youth Panel
        ];
        let cands: Vec<CandidateSpan> = c.sentences().flat_map(extract_candidates).collect();
        (c, links, cands)
    }

    fn req(id: &str, d: Decision, adjusted: Option<Span>) -> VerdictRequest {
        VerdictRequest { item_id: id.into(), decision: d, adjusted, reviewer: "lib".into() }
    }

    #[test]
    fn ids_are_stable() {
        let s = SentenceRef { doc_id: "a".into(), section_index: 0, sentence_index: 1 };
        assert_eq!(item_id(&s, 4, 8), item_id(&s, 4, 8));
        assert_ne!(item_id(&s, 4, 8), item_id(&s, 4, 9));
        assert_eq!(item_id(&s, 4, 8).len(), 16);
    }

    #[test]
    fn queue_order_matches_key() {
        let (c, links, cands) = fixture();
        let q = build_queue(&links, &c, &cands);
        let surfaces: Vec<&str> = q.iter().map(|i| i.reference.surface.as_str()).collect();
        // all catalog items sit on Medium acronyms, so similarity then position decide
        assert_eq!(surfaces, vec!["GSS", "GSS", "ANES", "PSID", "Youth Panel"]);
        assert_eq!(q[0].reference.sentence.doc_id, "a");
        assert_eq!(q[0].context.doc_doi.as_deref(), Some("10.1/a"));
        assert!(build_queue(&[], &c, &cands).is_empty());
    }

    #[test]
    fn high_level_before_low_in_same_partition() {
        let mk = |level| Priority { partition: Partition::CatalogDataset, level, similarity: 0.5, position: (0, 0, 0, 0) };
        assert_eq!(mk(Some(Level::High)).cmp_key(&mk(Some(Level::Low))), Ordering::Less);
        assert_eq!(mk(Some(Level::Low)).cmp_key(&mk(None)), Ordering::Less);
    }

    #[test]
    fn verdict_flow() {
        let (c, links, cands) = fixture();
        let items = build_queue(&links, &c, &cands);
        let svc = ReviewService::in_memory(items.clone());
        let first = items[0].item_id.clone();
        assert!(matches!(svc.submit(req("nope", Decision::Reject, None), ts(0)), Err(ReviewError::NotFound(_))));
        assert!(matches!(
            svc.submit(req(&first, Decision::AdjustSpan, Some(Span { start: 5, end: 5 })), ts(0)),
            Err(ReviewError::InvalidSpan { .. })
        ));
        assert!(matches!(svc.submit(req(&first, Decision::AdjustSpan, None), ts(0)), Err(ReviewError::InvalidSpan { .. })));
        svc.submit(req(&first, Decision::Reject, None), ts(1)).unwrap();
        assert_eq!(svc.read(|s| s.queue(None).len()), 4);
        svc.submit(req(&first, Decision::AcceptUse, None), ts(2)).unwrap();
        let (bib, state_decision) = svc.read(|s| (s.export_bibliography(), s.verdict(&first).unwrap().decision));
        assert_eq!(state_decision, Decision::AcceptUse);
        assert_eq!(bib.len(), 1);
    }

    #[test]
    fn bibliography_dedups_by_doc_and_study() {
        let (c, mut links, cands) = fixture();
        // every mention in doc a linked to the same study
        links[1] = link("a", 1, 4, 8, Partition::CatalogDataset, 0.9, Some(1), &c);
        links[2] = link("a", 1, 13, 17, Partition::CatalogDataset, 0.9, Some(1), &c);
        let items = build_queue(&links, &c, &cands);
        let mut s = ReviewState::new(items.clone());
        for it in items.iter().filter(|i| i.reference.sentence.doc_id == "a") {
            s.apply(req(&it.item_id, Decision::AcceptUse, None).at(ts(3))).unwrap();
        }
        let bib = s.export_bibliography();
        let gss = bib.iter().find(|e| e.study_id == StudyId(1) && e.doc_id == "a").unwrap();
        assert_eq!(gss.provenance.len(), 3);
    }

    #[test]
    fn routing_by_decision() {
        let (c, links, cands) = fixture();
        let items = build_queue(&links, &c, &cands);
        let mut s = ReviewState::new(items.clone());
        for it in &items {
            s.apply(req(&it.item_id, Decision::Reject, None).at(ts(0))).unwrap();
        }
        assert!(s.export_bibliography().is_empty());
        s.apply(req(&items[1].item_id, Decision::AcceptMention, None).at(ts(1))).unwrap();
        assert!(s.export_bibliography().is_empty());
        assert_eq!(s.export_mentions().len(), 1);
    }

    #[test]
    fn training_export_hand_computed() {
        let (c, links, cands) = fixture();
        let items = build_queue(&links, &c, &cands);
        let find = |surface: &str, doc: &str| {
            items.iter().find(|i| i.reference.surface == surface && i.reference.sentence.doc_id == doc).unwrap().item_id.clone()
        };
        let mut s = ReviewState::new(items.clone());
        let log = vec![
            req(&find("GSS", "a"), Decision::AcceptUse, None).at(ts(1)),
            req(&find("ANES", "a"), Decision::AcceptMention, None).at(ts(2)),
            req(&find("PSID", "a"), Decision::Reject, None).at(ts(3)),
            req(&find("GSS", "b"), Decision::AdjustSpan, Some(Span { start: 13, end: 24 })).at(ts(4)),
            req(&find("Youth Panel", "b"), Decision::Reject, None).at(ts(5)),
            req(&find("PSID", "a"), Decision::Reject, None).at(ts(6)),
        ];
        for v in &log {
            s.apply(v.clone()).unwrap();
        }
        let records = s.export_training();
        let gold = gold_from_records(&records, Some(&c)).unwrap();
        let preds: Vec<DataReference> = links.iter().map(|l| l.reference.clone()).collect();
        let m = evaluate(&preds, &gold, MatchMode::ExactSpan).unwrap().metrics;
        // gold spans: GSS(a), ANES(a), adjusted "GSS samples"(b) -> 3
        // predictions: 5, exact matches: GSS(a), ANES(a) -> tp 2, fp 3, fn 1
        assert_eq!((m.tp, m.fp, m.fn_), (2, 3, 1));
        assert!((m.precision - 0.4).abs() < 1e-12);
        assert!((m.recall - 2.0 / 3.0).abs() < 1e-12);
        let back = crate::extract::gold_to_records(&gold);
        assert_eq!(gold_from_records(&back, Some(&c)).unwrap(), gold);
    }

    #[test]
    fn log_survives_reopen_and_torn_line() {
        let (c, links, cands) = fixture();
        let items = build_queue(&links, &c, &cands);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("verdicts.jsonl");
        {
            let svc = ReviewService::open(items.clone(), &path).unwrap();
            svc.submit(req(&items[0].item_id, Decision::AcceptUse, None), ts(1)).unwrap();
            svc.submit(req(&items[1].item_id, Decision::Reject, None), ts(2)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"item_id\":\"trunc").unwrap();
        drop(f);
        let svc = ReviewService::open(items.clone(), &path).unwrap();
        assert_eq!(svc.read(|s| (s.log_len(), s.queue(None).len())), (2, 3));
        svc.submit(req(&items[2].item_id, Decision::Reject, None), ts(3)).unwrap();
        let (_, replayed) = VerdictLog::open(&path).unwrap();
        assert_eq!(replayed.len(), 3);
    }
}
