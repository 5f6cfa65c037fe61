//! Corpus-level summaries over linked references: where catalog datasets are
//! mentioned, how references co-occur, and how a bibliography covers the
//! catalog. Each report has a JSON form and an aligned text table.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, StudyId};
use crate::docparse::{Corpus, SectionLabel};
use crate::linkage::{normalize_name, LinkResult, Partition};
use crate::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionExample {
    pub doc_id: String,
    pub sentence: String,
    pub surface: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionBucket {
    pub label: SectionLabel,
    pub count: usize,
    pub example: SectionExample,
}

/// Catalog-dataset references per section label, most frequent first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionHistogram {
    pub buckets: Vec<SectionBucket>,
    /// Catalog-dataset references whose sentence is not in the corpus.
    pub unresolved: usize,
}

impl SectionHistogram {
    pub fn total(&self) -> usize {
        self.buckets.iter().map(|b| b.count).sum()
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<18} {:>6}  example\n", "section", "refs");
        for b in &self.buckets {
            out.push_str(&format!("{:<18} {:>6}  {}\n", b.label.as_str(), b.count, b.example.sentence));
        }
        if self.unresolved > 0 {
            out.push_str(&format!("{:<18} {:>6}\n", "(unresolved)", self.unresolved));
        }
        out
    }
}

/// Similarity, document position and the example itself.
type Candidate = (f64, (usize, usize, usize, usize), SectionExample);

/// The example for a label is its highest-similarity reference, earliest in
/// document order on ties.
pub fn section_histogram(links: &[LinkResult], corpus: &Corpus) -> SectionHistogram {
    let mut buckets: BTreeMap<SectionLabel, (usize, Option<Candidate>)> = BTreeMap::new();
    let mut unresolved = 0;
    for l in links.iter().filter(|l| l.partition == Partition::CatalogDataset) {
        let r = &l.reference;
        let (Some(doc_pos), Some(section), Some(sentence)) = (
            corpus.doc_position(&r.sentence.doc_id),
            corpus.section(&r.sentence.doc_id, r.sentence.section_index),
            corpus.sentence(&r.sentence),
        ) else {
            unresolved += 1;
            continue;
        };
        let order = (doc_pos, r.sentence.section_index, r.sentence.sentence_index, r.start);
        let entry = buckets.entry(section.label).or_insert((0, None));
        entry.0 += 1;
        let better = match &entry.1 {
            None => true,
            Some((sim, ord, _)) => l.similarity > *sim || (l.similarity == *sim && order < *ord),
        };
        if better {
            let ex = SectionExample {
                doc_id: r.sentence.doc_id.clone(),
                sentence: sentence.text.clone(),
                surface: r.surface.clone(),
                similarity: l.similarity,
            };
            entry.1 = Some((l.similarity, order, ex));
        }
    }
    let mut out: Vec<SectionBucket> = buckets
        .into_iter()
        .map(|(label, (count, ex))| SectionBucket { label, count, example: ex.expect("bucket has a reference").2 })
        .collect();
    out.sort_by(|a, b| b.count.cmp(&a.count).then(a.label.cmp(&b.label)));
    SectionHistogram { buckets: out, unresolved }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fraction {
    pub count: usize,
    pub total: usize,
    pub fraction: f64,
}

impl Fraction {
    pub fn new(count: usize, total: usize) -> Self {
        Fraction { count, total, fraction: if total == 0 { 0.0 } else { count as f64 / total as f64 } }
    }

    fn render(&self) -> String {
        format!("{:>5.1}% ({}/{})", self.fraction * 100.0, self.count, self.total)
    }
}

/// What counts as one dataset when measuring co-reference.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetIdentity {
    /// Normalized surface string.
    #[default]
    Surface,
    /// Linked study where there is one, otherwise the normalized surface.
    LinkedStudy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreferenceStats {
    pub identity: DatasetIdentity,
    /// Documents with at least one dataset reference.
    pub pubs_with_any_reference: Fraction,
    /// Reference-bearing documents with both catalog and external datasets.
    pub pubs_mixing_types: Fraction,
    /// Distinct datasets that share a document with a different dataset.
    pub datasets_coreferenced: Fraction,
    /// Sentences with at least one dataset reference.
    pub sentences_with_entity: Fraction,
}

impl CoreferenceStats {
    pub fn render(&self) -> String {
        [
            ("publications with a dataset reference", &self.pubs_with_any_reference),
            ("publications mixing catalog and external", &self.pubs_mixing_types),
            ("datasets co-referenced", &self.datasets_coreferenced),
            ("sentences with a dataset reference", &self.sentences_with_entity),
        ]
        .iter()
        .map(|(k, v)| format!("{k:<42} {}\n", v.render()))
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum DatasetKey {
    Study(StudyId),
    Surface(String),
}

#[derive(Debug, Clone, Default)]
struct DocTally {
    catalog: bool,
    external: bool,
    datasets: BTreeSet<DatasetKey>,
    sentences: BTreeSet<(usize, usize)>,
}

/// Co-reference statistics over catalog and external dataset references;
/// non-dataset links are ignored.
pub fn coreference_stats(links: &[LinkResult], corpus: &Corpus, identity: DatasetIdentity, exec: Execution) -> CoreferenceStats {
    let mut by_doc: BTreeMap<&str, Vec<&LinkResult>> = BTreeMap::new();
    for l in links.iter().filter(|l| l.partition != Partition::NonDataset) {
        by_doc.entry(l.reference.sentence.doc_id.as_str()).or_default().push(l);
    }
    let groups: Vec<Vec<&LinkResult>> = by_doc.into_values().collect();
    let tallies: Vec<DocTally> = exec.map(&groups, |group| {
        let mut t = DocTally::default();
        for l in group {
            t.catalog |= l.partition == Partition::CatalogDataset;
            t.external |= l.partition == Partition::ExternalDataset;
            let key = match (identity, l.best_study) {
                (DatasetIdentity::LinkedStudy, Some(s)) => DatasetKey::Study(s),
                _ => DatasetKey::Surface(normalize_name(&l.reference.surface)),
            };
            t.datasets.insert(key);
            t.sentences.insert((l.reference.sentence.section_index, l.reference.sentence.sentence_index));
        }
        t
    });

    let bearing = tallies.len();
    let mixing = tallies.iter().filter(|t| t.catalog && t.external).count();
    let mut all: BTreeSet<&DatasetKey> = BTreeSet::new();
    let mut co: BTreeSet<&DatasetKey> = BTreeSet::new();
    for t in &tallies {
        all.extend(&t.datasets);
        if t.datasets.len() > 1 {
            co.extend(&t.datasets);
        }
    }
    let sentences: usize = tallies.iter().map(|t| t.sentences.len()).sum();
    CoreferenceStats {
        identity,
        pubs_with_any_reference: Fraction::new(bearing, corpus.docs().len()),
        pubs_mixing_types: Fraction::new(mixing, bearing),
        datasets_coreferenced: Fraction::new(co.len(), all.len()),
        sentences_with_entity: Fraction::new(sentences, corpus.sentence_count()),
    }
}

/// One bibliography line: a publication and the studies it cites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibliographyEntry {
    pub doi: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default)]
    pub study_ids: Vec<StudyId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecadeRow {
    /// First year of the decade; `None` for entries without a year.
    pub decade: Option<i32>,
    pub publications: usize,
}

impl DecadeRow {
    pub fn label(&self) -> String {
        self.decade.map_or_else(|| "Unknown".to_string(), |d| format!("{d}s"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveRow {
    pub archive: String,
    /// Studies the catalog lists for the archive.
    pub studies: usize,
    pub citations: usize,
    pub ratio: f64,
}

impl ArchiveRow {
    pub fn ratio_display(&self) -> String {
        format!("{:.1}", self.ratio)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub decades: Vec<DecadeRow>,
    pub archives: Vec<ArchiveRow>,
    /// Citations to study ids the catalog does not know.
    pub unmatched_citations: usize,
}

impl CoverageReport {
    pub fn render(&self) -> String {
        let mut out = format!("{:<10} {:>12}\n", "decade", "publications");
        for d in &self.decades {
            out.push_str(&format!("{:<10} {:>12}\n", d.label(), d.publications));
        }
        out.push_str(&format!("\n{:<24} {:>8} {:>10} {:>10}\n", "archive", "studies", "citations", "per study"));
        for a in &self.archives {
            out.push_str(&format!("{:<24} {:>8} {:>10} {:>10}\n", a.archive, a.studies, a.citations, a.ratio_display()));
        }
        out
    }
}

/// Publications per decade and citations per study for each archive that
/// is cited at least once.
pub fn coverage_report(bibliography: &[BibliographyEntry], catalog: &Catalog) -> CoverageReport {
    if bibliography.is_empty() {
        return CoverageReport::default();
    }
    let mut decades: BTreeMap<Option<i32>, usize> = BTreeMap::new();
    for e in bibliography {
        *decades.entry(e.year.map(|y| y.div_euclid(10) * 10)).or_default() += 1;
    }
    let mut studies_per_archive: HashMap<&str, usize> = HashMap::new();
    for s in catalog.iter() {
        *studies_per_archive.entry(s.archive.as_str()).or_default() += 1;
    }
    let mut citations: BTreeMap<&str, usize> = BTreeMap::new();
    let mut unmatched = 0;
    for e in bibliography {
        for id in &e.study_ids {
            match catalog.get(*id) {
                Some(s) => *citations.entry(s.archive.as_str()).or_default() += 1,
                None => unmatched += 1,
            }
        }
    }
    let mut decade_rows: Vec<DecadeRow> =
        decades.into_iter().map(|(decade, publications)| DecadeRow { decade, publications }).collect();
    // Unknown sorts first in the map; list it last
    let unknown = decade_rows.iter().take_while(|d| d.decade.is_none()).count();
    decade_rows.rotate_left(unknown);
    let archives = citations
        .into_iter()
        .map(|(archive, c)| {
            let studies = studies_per_archive[archive];
            ArchiveRow { archive: archive.to_string(), studies, citations: c, ratio: c as f64 / studies as f64 }
        })
        .collect();
    CoverageReport { decades: decade_rows, archives, unmatched_citations: unmatched }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Similarity distribution in equal-width bins over [0, 1], for choosing the
/// catalog threshold.
pub fn score_histogram(links: &[LinkResult], bins: usize) -> Vec<ScoreBin> {
    let bins = bins.max(1);
    let mut counts = vec![0usize; bins];
    for l in links {
        let i = ((l.similarity * bins as f64) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| ScoreBin { lo: i as f64 / bins as f64, hi: (i + 1) as f64 / bins as f64, count })
        .collect()
}

pub fn render_score_histogram(bins: &[ScoreBin], theta: f64) -> String {
    let mut out = format!("{:<13} {:>6}\n", "similarity", "links");
    for b in bins {
        let mark = if b.lo <= theta && theta < b.hi { "  <- theta" } else { "" };
        out.push_str(&format!("[{:.2}, {:.2}) {:>6}{mark}\n", b.lo, b.hi, b.count));
    }
    out
}

/// Every report for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub partitions: crate::linkage::PartitionSummary,
    pub sections: SectionHistogram,
    pub coreference: CoreferenceStats,
    pub coverage: CoverageReport,
    pub theta: f64,
    pub scores: Vec<ScoreBin>,
}

impl CorpusReport {
    pub fn build(
        links: &[LinkResult],
        corpus: &Corpus,
        bibliography: &[BibliographyEntry],
        catalog: &Catalog,
        theta: f64,
        exec: Execution,
    ) -> Self {
        CorpusReport {
            partitions: crate::linkage::partition_summary(links),
            sections: section_histogram(links, corpus),
            coreference: coreference_stats(links, corpus, DatasetIdentity::Surface, exec),
            coverage: coverage_report(bibliography, catalog),
            theta,
            scores: score_histogram(links, 20),
        }
    }

    pub fn render(&self) -> String {
        [
            ("Partitions", self.partitions.render()),
            ("Sections with catalog datasets", self.sections.render()),
            ("Co-reference", self.coreference.render()),
            ("Bibliography coverage", self.coverage.render()),
            ("Similarity distribution", render_score_histogram(&self.scores, self.theta)),
        ]
        .iter()
        .map(|(title, body)| format!("{title}\n{}\n{body}\n", "-".repeat(title.len())))
        .collect()
    }

    /// `report.json` and `report.txt` in `dir`.
    pub fn write_to(&self, dir: &std::path::Path) -> std::io::Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let json = dir.join("report.json");
        let mut body = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        body.push('\n');
        crate::jsonl::write_atomic(&json, body.as_bytes())?;
        let txt = dir.join("report.txt");
        crate::jsonl::write_atomic(&txt, self.render().as_bytes())?;
        Ok(vec![json, txt])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::tests::study;
    use crate::docparse::{parse_plaintext, Document, Section, SectionSynonyms, SentenceRef};
    use crate::extract::{DataReference, Detector};

    fn link(doc: &str, section: usize, sentence: usize, surface: &str, p: Partition, sim: f64, study: Option<u64>) -> LinkResult {
        LinkResult {
            reference: DataReference {
                sentence: SentenceRef { doc_id: doc.into(), section_index: section, sentence_index: sentence },
                start: 0,
                end: surface.chars().count(),
                surface: surface.into(),
                source: Detector::RuleDetector,
                confidence: 1.0,
            },
            best_study: study.map(StudyId),
            matched_name: None,
            similarity: sim,
            centered_score: sim - 0.75,
            partition: p,
        }
    }

    fn sectioned_doc(id: &str) -> Document {
        let t = SectionSynonyms::default();
        let mut d = Document {
            doc_id: id.into(),
            doi: None,
            title: String::new(),
            year: None,
            sections: vec![
                Section::new("Introduction", "Intro one. Intro two. Intro three.", &t),
                Section::new("Data", "Data one. Data two.", &t),
                Section::new("Conclusion", "End one.", &t),
            ],
        };
        d.segment();
        d
    }

    #[test]
    fn histogram_orders_and_conserves() {
        let corpus = Corpus::new(vec![sectioned_doc("a"), sectioned_doc("b")]);
        use Partition::*;
        let links = vec![
            link("a", 0, 0, "GSS", CatalogDataset, 0.8, Some(1)),
            link("a", 0, 1, "GSS", CatalogDataset, 0.9, Some(1)),
            link("b", 0, 2, "GSS", CatalogDataset, 0.9, Some(1)),
            link("a", 1, 0, "ANES", CatalogDataset, 1.0, Some(2)),
            link("b", 1, 1, "ANES", CatalogDataset, 1.0, Some(2)),
            link("b", 2, 0, "PSID", CatalogDataset, 0.8, Some(3)),
            link("b", 2, 0, "Youth Panel", ExternalDataset, 0.5, None),
            link("zz", 0, 0, "GSS", CatalogDataset, 0.8, Some(1)),
        ];
        let h = section_histogram(&links, &corpus);
        let order: Vec<(SectionLabel, usize)> = h.buckets.iter().map(|b| (b.label, b.count)).collect();
        assert_eq!(order, vec![(SectionLabel::Introduction, 3), (SectionLabel::Data, 2), (SectionLabel::Conclusions, 1)]);
        assert_eq!(h.total() + h.unresolved, 7);
        assert_eq!(h.unresolved, 1);
        // tie at 0.9 broken by document order
        assert_eq!(h.buckets[0].example.sentence, "Intro two.");
        assert_eq!(h.buckets[0].example.doc_id, "a");
        assert!(section_histogram(&[], &corpus).buckets.is_empty());
    }

    #[test]
    fn coreference_fixture_scale() {
        let mut docs = Vec::new();
        let mut links = Vec::new();
        for i in 0..50 {
            let id = format!("d{i:02}");
            let mut d = parse_plaintext(&id, "One sentence here. Another one here.");
            d.segment();
            docs.push(d);
            if i < 42 {
                links.push(link(&id, 0, 0, "GSS", Partition::CatalogDataset, 1.0, Some(1)));
            }
            if i < 10 {
                links.push(link(&id, 0, 1, "Youth Panel", Partition::ExternalDataset, 0.5, None));
            }
            links.push(link(&id, 0, 1, "data", Partition::NonDataset, 0.1, None));
        }
        links.push(link("d45", 0, 0, "City Register", Partition::ExternalDataset, 0.4, None));
        let corpus = Corpus::new(docs);
        let s = coreference_stats(&links, &corpus, DatasetIdentity::Surface, Execution::default());
        assert_eq!(s.pubs_with_any_reference.count, 43);
        assert_eq!((s.pubs_mixing_types.count, s.pubs_mixing_types.total), (10, 43));
        assert_eq!((s.datasets_coreferenced.count, s.datasets_coreferenced.total), (2, 3));
        assert_eq!((s.sentences_with_entity.count, s.sentences_with_entity.total), (53, 100));
        assert_eq!(s, coreference_stats(&links, &corpus, DatasetIdentity::Surface, Execution::Sequential));

        let single = coreference_stats(&links[..1], &corpus, DatasetIdentity::LinkedStudy, Execution::default());
        assert_eq!(single.pubs_mixing_types.fraction, 0.0);
    }

    #[test]
    fn coverage_ratios() {
        let mut studies = Vec::new();
        for i in 0..61 {
            let mut s = study(i + 1, &format!("Alpha {i}"));
            s.archive = "Alpha".into();
            studies.push(s);
            let mut s = study(i + 101, &format!("Beta {i}"));
            s.archive = "Beta".into();
            studies.push(s);
        }
        let catalog = Catalog::new(studies);
        let mut bib = Vec::new();
        for k in 0..15_029u64 {
            bib.push(BibliographyEntry {
                doi: format!("10.1/a{k}"),
                year: Some(1960 + (k % 60) as i32),
                study_ids: vec![StudyId(k % 61 + 1)],
                title: None,
            });
        }
        for k in 0..2_069u64 {
            bib.push(BibliographyEntry { doi: format!("10.1/b{k}"), year: None, study_ids: vec![StudyId(k % 61 + 101)], title: None });
        }
        let r = coverage_report(&bib, &catalog);
        let rows: Vec<(&str, usize, usize, String)> =
            r.archives.iter().map(|a| (a.archive.as_str(), a.studies, a.citations, a.ratio_display())).collect();
        assert_eq!(rows, vec![("Alpha", 61, 15_029, "246.4".into()), ("Beta", 61, 2_069, "33.9".into())]);
        assert_eq!(r.decades.last().unwrap().label(), "Unknown");
        assert_eq!(r.decades.iter().map(|d| d.publications).sum::<usize>(), bib.len());
        assert_eq!(coverage_report(&[], &catalog), CoverageReport::default());
    }

    #[test]
    fn score_bins_conserve() {
        let links: Vec<LinkResult> =
            (0..=20).map(|i| link("a", 0, 0, "x", Partition::NonDataset, i as f64 / 20.0, None)).collect();
        let bins = score_histogram(&links, 10);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 21);
        assert_eq!(bins[9].count, 3);
    }
}
