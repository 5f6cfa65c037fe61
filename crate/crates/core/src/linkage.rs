//! Fuzzy matching of detected surfaces to catalog names and the three-way
//! partition into catalog datasets, external datasets and non-datasets.
//!
//! Similarity is `0.7 * weighted token Dice + 0.3 * character-trigram Dice`
//! over normalized strings. Token weights are `1 / ln(e + df)` where `df` is
//! the number of catalog names containing the token, so rare tokens dominate.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, StudyId};
use crate::extract::DataReference;
use crate::Execution;

pub const TOKEN_WEIGHT: f64 = 0.7;
pub const TRIGRAM_WEIGHT: f64 = 0.3;
pub const DEFAULT_THETA: f64 = 0.75;
pub const DEFAULT_FLOOR: f64 = 0.30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Partition {
    CatalogDataset,
    ExternalDataset,
    NonDataset,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::CatalogDataset, Partition::ExternalDataset, Partition::NonDataset];

    pub fn as_str(self) -> &'static str {
        match self {
            Partition::CatalogDataset => "CatalogDataset",
            Partition::ExternalDataset => "ExternalDataset",
            Partition::NonDataset => "NonDataset",
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("thresholds must satisfy 0 <= floor < theta <= 1 (floor {floor}, theta {theta})")]
pub struct ThresholdError {
    pub theta: f64,
    pub floor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta: f64,
    pub floor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { theta: DEFAULT_THETA, floor: DEFAULT_FLOOR }
    }
}

impl Thresholds {
    pub fn new(theta: f64, floor: f64) -> Result<Self, ThresholdError> {
        if 0.0 <= floor && floor < theta && theta <= 1.0 {
            Ok(Thresholds { theta, floor })
        } else {
            Err(ThresholdError { theta, floor })
        }
    }

    pub fn partition(&self, similarity: f64) -> Partition {
        if similarity >= self.theta {
            Partition::CatalogDataset
        } else if similarity >= self.floor {
            Partition::ExternalDataset
        } else {
            Partition::NonDataset
        }
    }
}

/// Lowercase, punctuation other than hyphens to spaces, standalone 4-digit
/// years dropped, whitespace collapsed.
pub fn normalize_name(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' { c.to_lowercase().next().unwrap_or(c) } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|w| !(w.len() == 4 && w.bytes().all(|b| b.is_ascii_digit())))
        .collect::<Vec<_>>()
        .join(" ")
}

fn trigrams(normalized: &str) -> HashSet<[char; 3]> {
    let padded: Vec<char> = std::iter::once(' ').chain(normalized.chars()).chain(std::iter::once(' ')).collect();
    padded.windows(3).map(|w| [w[0], w[1], w[2]]).collect()
}

fn dice<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    2.0 * a.intersection(b).count() as f64 / (a.len() + b.len()) as f64
}

/// Token document frequencies over a name list.
#[derive(Debug, Clone, Default)]
pub struct TokenWeights {
    df: HashMap<String, usize>,
}

impl TokenWeights {
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        for n in names {
            let norm = normalize_name(n);
            let uniq: HashSet<&str> = norm.split(' ').filter(|t| !t.is_empty()).collect();
            for t in uniq {
                *df.entry(t.to_string()).or_default() += 1;
            }
        }
        TokenWeights { df }
    }

    pub fn weight(&self, token: &str) -> f64 {
        let df = self.df.get(token).copied().unwrap_or(0) as f64;
        1.0 / (std::f64::consts::E + df).ln()
    }
}

#[derive(Debug, Clone)]
struct Prepared {
    normalized: String,
    /// Ordered so that float sums over it are reproducible.
    tokens: BTreeSet<String>,
    token_mass: f64,
    trigrams: HashSet<[char; 3]>,
}

impl Prepared {
    fn new(s: &str, weights: &TokenWeights) -> Self {
        let normalized = normalize_name(s);
        let tokens: BTreeSet<String> = normalized.split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect();
        let token_mass = tokens.iter().map(|t| weights.weight(t)).sum();
        let trigrams = if normalized.is_empty() { HashSet::new() } else { trigrams(&normalized) };
        Prepared { normalized, tokens, token_mass, trigrams }
    }

    fn score(&self, other: &Prepared, weights: &TokenWeights) -> f64 {
        if self.normalized.is_empty() || other.normalized.is_empty() {
            return 0.0;
        }
        if self.normalized == other.normalized {
            return 1.0;
        }
        let shared: f64 = self.tokens.intersection(&other.tokens).map(|t| weights.weight(t)).sum();
        let token = 2.0 * shared / (self.token_mass + other.token_mass);
        let s = TOKEN_WEIGHT * token + TRIGRAM_WEIGHT * dice(&self.trigrams, &other.trigrams);
        s.clamp(0.0, 1.0)
    }
}

/// Similarity of two strings under the given token weights.
pub fn similarity_with(a: &str, b: &str, weights: &TokenWeights) -> f64 {
    let (pa, pb) = (Prepared::new(a, weights), Prepared::new(b, weights));
    if pa.normalized.is_empty() || pb.normalized.is_empty() {
        log::warn!("similarity of {a:?} and {b:?}: empty after normalization, scoring 0");
    }
    pa.score(&pb, weights)
}

/// Similarity with uniform token weights.
pub fn similarity(a: &str, b: &str) -> f64 {
    similarity_with(a, b, &TokenWeights::default())
}

#[derive(Debug, Clone)]
struct NameEntry {
    study_id: StudyId,
    name: String,
    canonical: bool,
    prepared: Prepared,
}

/// A scored catalog name.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub study_id: StudyId,
    pub canonical: bool,
    pub score: f64,
}

/// Highest score; ties go to the lowest study id, then the canonical name.
pub fn select_best(scored: &[Scored]) -> Option<usize> {
    (0..scored.len()).min_by(|&i, &j| {
        let (a, b) = (&scored[i], &scored[j]);
        b.score
            .total_cmp(&a.score)
            .then(a.study_id.cmp(&b.study_id))
            .then(b.canonical.cmp(&a.canonical))
            .then(i.cmp(&j))
    })
}

/// Catalog names with precomputed weights; read-only after construction.
#[derive(Debug, Clone)]
pub struct NameMatcher {
    weights: TokenWeights,
    names: Vec<NameEntry>,
}

/// Best catalog name for one surface.
#[derive(Debug, Clone, PartialEq)]
pub struct BestMatch {
    pub study_id: Option<StudyId>,
    pub name: Option<String>,
    pub similarity: f64,
}

impl NameMatcher {
    pub fn new(catalog: &Catalog) -> Self {
        let weights = TokenWeights::from_names(catalog.iter().flat_map(|s| s.names()));
        let mut names = Vec::new();
        for s in catalog.iter() {
            for (i, n) in s.names().enumerate() {
                names.push(NameEntry {
                    study_id: s.study_id,
                    name: n.to_string(),
                    canonical: i == 0,
                    prepared: Prepared::new(n, &weights),
                });
            }
        }
        NameMatcher { weights, names }
    }

    pub fn weights(&self) -> &TokenWeights {
        &self.weights
    }

    /// Every catalog name with its score against `surface`, in catalog order.
    pub fn score_all(&self, surface: &str) -> Vec<Scored> {
        let p = Prepared::new(surface, &self.weights);
        self.names
            .iter()
            .map(|n| Scored { study_id: n.study_id, canonical: n.canonical, score: p.score(&n.prepared, &self.weights) })
            .collect()
    }

    pub fn best(&self, surface: &str) -> BestMatch {
        if normalize_name(surface).is_empty() {
            log::warn!("surface {surface:?} is empty after normalization, scoring 0");
        }
        let scored = self.score_all(surface);
        match select_best(&scored) {
            Some(i) => BestMatch { study_id: Some(scored[i].study_id), name: Some(self.names[i].name.clone()), similarity: scored[i].score },
            None => BestMatch { study_id: None, name: None, similarity: 0.0 },
        }
    }
}

/// A reference with its linkage decision. Serialized flat, one per line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkResult {
    #[serde(flatten)]
    pub reference: DataReference,
    #[serde(rename = "study_id", default, skip_serializing_if = "Option::is_none")]
    pub best_study: Option<StudyId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_name: Option<String>,
    pub similarity: f64,
    pub centered_score: f64,
    pub partition: Partition,
}

pub fn link_entity(reference: &DataReference, matcher: &NameMatcher, thresholds: &Thresholds) -> LinkResult {
    let best = matcher.best(&reference.surface);
    let partition = thresholds.partition(best.similarity);
    let catalog = partition == Partition::CatalogDataset;
    LinkResult {
        reference: reference.clone(),
        best_study: best.study_id.filter(|_| catalog),
        matched_name: best.name.filter(|_| catalog),
        similarity: best.similarity,
        centered_score: best.similarity - thresholds.theta,
        partition,
    }
}

pub fn link_all(refs: &[DataReference], matcher: &NameMatcher, thresholds: &Thresholds, exec: Execution) -> Vec<LinkResult> {
    exec.map(refs, |r| link_entity(r, matcher, thresholds))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionRow {
    pub partition: Partition,
    pub references: usize,
    pub publications: usize,
}

/// Per-partition counts plus the two routing lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub rows: Vec<PartitionRow>,
    /// Catalog matches to check against the bibliography, one per (doc, study).
    pub bibliography_review: Vec<(String, StudyId)>,
    /// Distinct surfaces of non-catalog datasets, for acquisitions.
    pub acquisitions: Vec<String>,
}

impl PartitionSummary {
    pub fn row(&self, p: Partition) -> &PartitionRow {
        self.rows.iter().find(|r| r.partition == p).expect("all partitions present")
    }

    pub fn render(&self) -> String {
        let mut out = format!("{:<16} {:>10} {:>12}\n", "partition", "references", "publications");
        for r in &self.rows {
            out.push_str(&format!("{:<16} {:>10} {:>12}\n", r.partition.as_str(), r.references, r.publications));
        }
        out
    }
}

pub fn partition_summary(links: &[LinkResult]) -> PartitionSummary {
    let mut refs: BTreeMap<Partition, usize> = BTreeMap::new();
    let mut pubs: BTreeMap<Partition, BTreeSet<&str>> = BTreeMap::new();
    let mut review: BTreeSet<(String, StudyId)> = BTreeSet::new();
    let mut acquisitions: BTreeSet<String> = BTreeSet::new();
    for l in links {
        *refs.entry(l.partition).or_default() += 1;
        pubs.entry(l.partition).or_default().insert(&l.reference.sentence.doc_id);
        match l.partition {
            Partition::CatalogDataset => {
                if let Some(s) = l.best_study {
                    review.insert((l.reference.sentence.doc_id.clone(), s));
                }
            }
            Partition::ExternalDataset => {
                acquisitions.insert(l.reference.surface.clone());
            }
            Partition::NonDataset => {}
        }
    }
    let rows = Partition::ALL
        .iter()
        .map(|&p| PartitionRow {
            partition: p,
            references: refs.get(&p).copied().unwrap_or(0),
            publications: pubs.get(&p).map_or(0, BTreeSet::len),
        })
        .collect();
    PartitionSummary { rows, bibliography_review: review.into_iter().collect(), acquisitions: acquisitions.into_iter().collect() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::tests::study;
    use crate::docparse::SentenceRef;
    use crate::extract::Detector;
    use proptest::prelude::*;

    fn reference(doc: &str, surface: &str) -> DataReference {
        DataReference {
            sentence: SentenceRef { doc_id: doc.into(), section_index: 0, sentence_index: 0 },
            start: 0,
            end: surface.chars().count(),
            surface: surface.into(),
            source: Detector::RuleDetector,
            confidence: 1.0,
        }
    }

    const FIXTURE_NAMES: [&str; 20] = [
        "American National Election Study (ANES) Time Series",
        "American National Election Study Pilot Study",
        "General Social Survey",
        "Panel Study of Income Dynamics",
        "National Longitudinal Study of Adolescent to Adult Health",
        "Detroit Area Study, 1995",
        "Current Population Survey",
        "American Citizen Participation Study",
        "National Survey on Drug Use and Health",
        "Law Enforcement Management and Administrative Statistics",
        "Early Childhood Longitudinal Study, Kindergarten Class",
        "National Crime Victimization Survey",
        "Health and Retirement Study",
        "National Intimate Partner and Sexual Violence Survey",
        "Monitoring the Future: A Continuing Study of American Youth",
        "Survey of Consumer Finances",
        "National Election Pool Exit Polls",
        "Time Series Cross-Section Data on Elections",
        "Uniform Crime Reporting Program Data",
        "American Time Use Survey",
    ];

    fn fixture_catalog() -> Catalog {
        Catalog::new(FIXTURE_NAMES.iter().enumerate().map(|(i, n)| study(i as u64 + 1, n)).collect())
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_name("ANES, 1984 (Pre-Election)"), "anes pre-election");
        assert_eq!(normalize_name("  Detroit   Area Study, 1995 "), "detroit area study");
        assert_eq!(normalize_name("1984"), "");
    }

    #[test]
    fn identity_and_disjoint() {
        assert_eq!(similarity("American National Election Survey", "American National Election Survey"), 1.0);
        assert_eq!(similarity("xyzzy", "Detroit Area Study, 1995"), 0.0);
        assert_eq!(similarity("", "anything"), 0.0);
        assert_eq!(similarity("ANES 1984", "anes"), 1.0);
    }

    #[test]
    fn argmax_matches_exhaustive_oracle() {
        let catalog = fixture_catalog();
        let m = NameMatcher::new(&catalog);
        let best = m.best("ANES Time Series");
        assert_eq!(best.study_id, Some(StudyId(1)));
        // oracle: score every name independently, the winner is strictly ahead
        let scores: Vec<f64> = FIXTURE_NAMES.iter().map(|n| similarity_with("ANES Time Series", n, m.weights())).collect();
        let top = scores[0];
        assert!((top - best.similarity).abs() < 1e-12);
        assert!(scores[1..].iter().all(|&s| s < top), "{scores:?}");
    }

    #[test]
    fn rare_tokens_weigh_more() {
        let w = TokenWeights::from_names(FIXTURE_NAMES);
        assert!(w.weight("dynamics") > w.weight("survey"));
        assert_eq!(w.weight("unseen"), 1.0);
    }

    #[test]
    fn exact_name_is_catalog_dataset() {
        let m = NameMatcher::new(&fixture_catalog());
        let l = link_entity(&reference("d", "General Social Survey"), &m, &Thresholds::default());
        assert_eq!(l.partition, Partition::CatalogDataset);
        assert!((l.centered_score - 0.25).abs() < 1e-12);
        assert_eq!(l.best_study, Some(StudyId(3)));
        let far = link_entity(&reference("d", "qqq"), &m, &Thresholds::default());
        assert_eq!(far.partition, Partition::NonDataset);
        assert_eq!(far.best_study, None);
    }

    #[test]
    fn duplicate_names_break_ties_by_id_then_canonical() {
        let mut a = study(9, "Youth Survey");
        a.name_variants = vec!["Civic Panel".into()];
        let b = study(4, "Civic Panel");
        let m = NameMatcher::new(&Catalog::new(vec![a, b]));
        for _ in 0..5 {
            assert_eq!(m.best("Civic Panel").study_id, Some(StudyId(4)));
        }
        let scored = vec![
            Scored { study_id: StudyId(2), canonical: false, score: 0.5 },
            Scored { study_id: StudyId(2), canonical: true, score: 0.5 },
        ];
        assert_eq!(select_best(&scored), Some(1));
    }

    #[test]
    fn empty_catalog() {
        let m = NameMatcher::new(&Catalog::new(vec![]));
        let l = link_entity(&reference("d", "General Social Survey"), &m, &Thresholds::default());
        assert_eq!((l.similarity, l.partition, l.best_study), (0.0, Partition::NonDataset, None));
    }

    #[test]
    fn threshold_validation() {
        assert!(Thresholds::new(0.75, 0.30).is_ok());
        assert!(Thresholds::new(0.3, 0.3).is_err());
        assert!(Thresholds::new(1.2, 0.3).is_err());
        assert!(Thresholds::new(0.5, -0.1).is_err());
    }

    #[test]
    fn summary_hand_tally() {
        let mk = |doc: &str, p: Partition, study: Option<u64>, s: &str| LinkResult {
            reference: reference(doc, s),
            best_study: study.map(StudyId),
            matched_name: None,
            similarity: 0.0,
            centered_score: 0.0,
            partition: p,
        };
        use Partition::*;
        let links = vec![
            mk("a", CatalogDataset, Some(1), "GSS"),
            mk("a", CatalogDataset, Some(1), "GSS"),
            mk("b", CatalogDataset, Some(2), "PSID"),
            mk("a", ExternalDataset, None, "Youth Panel"),
            mk("c", ExternalDataset, None, "Youth Panel"),
            mk("c", ExternalDataset, None, "City Register"),
            mk("a", NonDataset, None, "data"),
            mk("b", NonDataset, None, "samples"),
            mk("c", NonDataset, None, "studies"),
            mk("d", NonDataset, None, "Studies"),
        ];
        let s = partition_summary(&links);
        assert_eq!((s.row(CatalogDataset).references, s.row(CatalogDataset).publications), (3, 2));
        assert_eq!((s.row(ExternalDataset).references, s.row(ExternalDataset).publications), (3, 2));
        assert_eq!((s.row(NonDataset).references, s.row(NonDataset).publications), (4, 4));
        assert_eq!(s.bibliography_review, vec![("a".to_string(), StudyId(1)), ("b".to_string(), StudyId(2))]);
        assert_eq!(s.acquisitions, vec!["City Register", "Youth Panel"]);
        let empty = partition_summary(&[]);
        assert!(empty.rows.iter().all(|r| r.references == 0 && r.publications == 0));
    }

    proptest! {
        #[test]
        fn score_bounds_and_reflexive(a in "[A-Za-z ]{0,30}", b in "[A-Za-z ]{0,30}") {
            let s = similarity(&a, &b);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert!((s - similarity(&b, &a)).abs() < 1e-12);
            if !normalize_name(&a).is_empty() {
                prop_assert_eq!(similarity(&a, &a), 1.0);
            }
        }

        #[test]
        fn centered_sign_is_partition(surface in "[A-Za-z ]{1,40}", theta in 0.05f64..1.0, frac in 0.0f64..1.0) {
            let t = Thresholds::new(theta, theta * frac).unwrap();
            let m = NameMatcher::new(&fixture_catalog());
            let l = link_entity(&reference("d", &surface), &m, &t);
            prop_assert_eq!(l.centered_score >= 0.0, l.partition == Partition::CatalogDataset);
            prop_assert_eq!(l.similarity < t.floor, l.partition == Partition::NonDataset);
            prop_assert_eq!(l.best_study.is_some(), l.partition == Partition::CatalogDataset);
        }

        #[test]
        fn argmax_invariant_under_monotone_transform(scores in proptest::collection::vec((0u64..5, any::<bool>(), 0.0f64..1.0), 1..20)) {
            let scored: Vec<Scored> = scores.iter().map(|&(id, c, s)| Scored { study_id: StudyId(id), canonical: c, score: s }).collect();
            let warped: Vec<Scored> = scored.iter().map(|s| Scored { score: s.score.powi(3) * 0.5 + 0.1, ..s.clone() }).collect();
            prop_assert_eq!(select_best(&scored), select_best(&warped));
        }
    }
}
