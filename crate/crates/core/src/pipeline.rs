//! Six-stage run over files: search, acquire, parse, extract, link, report.
//!
//! Every stage reads its inputs from disk and writes its outputs to the run
//! directory before the next stage starts. `manifest.json` records, per
//! stage, a digest of its inputs and of each output; a later run skips any
//! stage whose input digest and outputs are unchanged.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acquire::{self, AcquisitionResult, AcquisitionSummary, FixtureResolver, Resolver};
use crate::catalog::{self, Catalog, EligibilityPolicy};
use crate::corpus_index::{self, CandidateDoc, TallyByKind};
use crate::docparse::{self, Corpus, Document, SectionSynonyms, SourceFormat};
use crate::extract::{self, CandidateSpan, DataReference, DetectorOptions, Gazetteer};
use crate::jsonl;
use crate::linkage::{self, LinkResult, NameMatcher, Partition, Thresholds};
use crate::report::{BibliographyEntry, CorpusReport};
use crate::Execution;

pub const ENV_PREFIX: &str = "DATAREF_";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FUNNEL_FILE: &str = "funnel.txt";

const CONFIG_KEYS: [&str; 10] =
    ["catalog", "corpus", "bibliography", "resolver", "out_dir", "theta", "floor", "detector", "predictions", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Search,
    Acquire,
    Parse,
    Extract,
    Link,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::Search, Stage::Acquire, Stage::Parse, Stage::Extract, Stage::Link, Stage::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Search => "search",
            Stage::Acquire => "acquire",
            Stage::Parse => "parse",
            Stage::Extract => "extract",
            Stage::Link => "link",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL.into_iter().find(|st| st.as_str() == s).ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: Stage, message: String },
}

impl PipelineError {
    /// 1 for configuration problems, 2 for a failed stage.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 1,
            PipelineError::Stage { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Rule,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolverSpec {
    Directory(PathBuf),
    Http(String),
}

impl ResolverSpec {
    pub fn parse(value: &str, base: &Path) -> Self {
        if value.starts_with("http://") || value.starts_with("https://") {
            ResolverSpec::Http(value.to_string())
        } else {
            ResolverSpec::Directory(base.join(value))
        }
    }

    pub fn build(&self) -> Result<Box<dyn Resolver>, String> {
        match self {
            ResolverSpec::Directory(d) => Ok(Box::new(FixtureResolver::new(d))),
            #[cfg(feature = "http")]
            ResolverSpec::Http(url) => Ok(Box::new(acquire::HttpResolver::new(
                url,
                std::time::Duration::from_millis(1000),
                std::time::Duration::from_secs(30),
            ))),
            #[cfg(not(feature = "http"))]
            ResolverSpec::Http(url) => Err(format!("resolver {url}: built without the `http` feature")),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    catalog: Option<String>,
    corpus: Option<String>,
    bibliography: Option<String>,
    resolver: Option<String>,
    out_dir: Option<String>,
    theta: Option<f64>,
    floor: Option<f64>,
    detector: Option<DetectorKind>,
    predictions: Option<String>,
    seed: Option<u64>,
}

/// Resolved run configuration; relative paths are taken from the config
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub catalog: PathBuf,
    pub corpus: PathBuf,
    pub bibliography: Option<PathBuf>,
    pub resolver: ResolverSpec,
    pub out_dir: PathBuf,
    pub thresholds: Thresholds,
    pub detector: DetectorKind,
    pub predictions: Option<PathBuf>,
    /// Recorded with the run; every stage is deterministic without it.
    pub seed: u64,
}

impl Config {
    /// Reads a TOML config, applying `DATAREF_<KEY>` overrides from `env`.
    pub fn load(path: &Path, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, env)
    }

    pub fn from_toml(
        text: &str,
        base: &Path,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, PipelineError> {
        let invalid = |m: String| PipelineError::Validation(m);
        let mut table: toml::Table = text.parse().map_err(|e| invalid(format!("{e}")))?;
        for (k, v) in env {
            let Some(key) = k.strip_prefix(ENV_PREFIX) else { continue };
            let key = key.to_ascii_lowercase();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                continue;
            }
            let value = match key.as_str() {
                "theta" | "floor" => {
                    toml::Value::Float(v.parse().map_err(|_| invalid(format!("{k}={v:?} is not a number")))?)
                }
                "seed" => toml::Value::Integer(v.parse().map_err(|_| invalid(format!("{k}={v:?} is not an integer")))?),
                _ => toml::Value::String(v),
            };
            table.insert(key, value);
        }
        let raw: RawConfig = table.try_into().map_err(|e| invalid(format!("{e}")))?;
        let require = |v: Option<String>, key: &str| v.ok_or_else(|| invalid(format!("missing key `{key}`")));
        let thresholds = Thresholds::new(
            raw.theta.unwrap_or(linkage::DEFAULT_THETA),
            raw.floor.unwrap_or(linkage::DEFAULT_FLOOR),
        )
        .map_err(|e| invalid(e.to_string()))?;
        let cfg = Config {
            catalog: base.join(require(raw.catalog, "catalog")?),
            corpus: base.join(require(raw.corpus, "corpus")?),
            bibliography: raw.bibliography.map(|b| base.join(b)),
            resolver: ResolverSpec::parse(&require(raw.resolver, "resolver")?, base),
            out_dir: base.join(require(raw.out_dir, "out_dir")?),
            thresholds,
            detector: raw.detector.unwrap_or(DetectorKind::Rule),
            predictions: raw.predictions.map(|p| base.join(p)),
            seed: raw.seed.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Validation(m));
        if !self.catalog.is_file() {
            return fail(format!("catalog {} does not exist", self.catalog.display()));
        }
        if !self.corpus.join(corpus_index::MANIFEST_NAME).is_file() {
            return fail(format!("corpus {} has no {}", self.corpus.display(), corpus_index::MANIFEST_NAME));
        }
        if let Some(b) = self.bibliography.as_ref().filter(|b| !b.is_file()) {
            return fail(format!("bibliography {} does not exist", b.display()));
        }
        if let ResolverSpec::Directory(d) = &self.resolver {
            if !d.is_dir() {
                return fail(format!("resolver directory {} does not exist", d.display()));
            }
        }
        Thresholds::new(self.thresholds.theta, self.thresholds.floor).map_err(|e| PipelineError::Validation(e.to_string()))?;
        match (self.detector, &self.predictions) {
            (DetectorKind::External, None) => fail("detector `external` needs `predictions`".into()),
            (DetectorKind::External, Some(p)) if !p.is_file() => fail(format!("predictions {} does not exist", p.display())),
            _ => Ok(()),
        }
    }

    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageStatus {
    Pending,
    Complete,
    Resumed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: Stage,
    pub status: StageStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_digest: Option<String>,
    /// Input label to content digest.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// Output path, relative to the run directory, to content digest.
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub counts: BTreeMap<String, u64>,
    #[serde(default)]
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl StageRecord {
    fn pending(name: Stage) -> Self {
        StageRecord {
            name,
            status: StageStatus::Pending,
            input_digest: None,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            counts: BTreeMap::new(),
            wall_ms: 0,
            diagnostic: None,
        }
    }

    fn done(&self) -> bool {
        matches!(self.status, StageStatus::Complete | StageStatus::Resumed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_digest: String,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn stage(&self, s: Stage) -> &StageRecord {
        self.stages.iter().find(|r| r.name == s).expect("every stage has a record")
    }

    pub fn count(&self, s: Stage, key: &str) -> u64 {
        self.stage(s).counts.get(key).copied().unwrap_or(0)
    }

    pub fn load(out_dir: &Path) -> Option<RunManifest> {
        let text = std::fs::read_to_string(out_dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn save(&self, out_dir: &Path) -> std::io::Result<()> {
        let mut body = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        body.push('\n');
        jsonl::write_atomic(&out_dir.join(MANIFEST_FILE), body.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub exec: Execution,
    /// Stop cleanly after this stage, leaving later stages Pending.
    pub stop_after: Option<Stage>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Content digest of a file, or of a directory's relative paths and file
/// contents in sorted order.
pub fn digest_path(path: &Path) -> std::io::Result<String> {
    if path.is_file() {
        return Ok(sha256_hex(&std::fs::read(path)?));
    }
    let mut files = Vec::new();
    collect_files(path, path, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for rel in files {
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(sha256_hex(&std::fs::read(path.join(&rel))?).as_bytes());
        h.update(b"\n");
    }
    Ok(format!("{:x}", h.finalize()))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            out.push(p.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

/// Eligible studies for searching, detection and linkage.
pub fn load_eligible_catalog(path: &Path) -> Result<(Catalog, Catalog), String> {
    let load = catalog::load_catalog(path).map_err(|e| e.to_string())?;
    let eligible = catalog::filter_eligible(&load.catalog, &EligibilityPolicy::default());
    Ok((load.catalog, eligible))
}

pub fn load_bibliography(path: Option<&Path>) -> Result<Vec<BibliographyEntry>, String> {
    match path {
        Some(p) => jsonl::read(p).map_err(|e| format!("{}: {e}", p.display())),
        None => Ok(Vec::new()),
    }
}

pub struct SearchOutput {
    pub queries: usize,
    pub hits: Vec<CandidateDoc>,
    pub tally: TallyByKind,
    pub new_candidates: Vec<CandidateDoc>,
}

/// Index the corpus, search every eligible study, and drop documents the
/// bibliography already lists.
pub fn search(
    catalog: &Catalog,
    corpus_dir: &Path,
    bibliography: &[BibliographyEntry],
    exec: Execution,
) -> Result<SearchOutput, String> {
    let docs = corpus_index::load_corpus(corpus_dir, &SectionSynonyms::default(), exec).map_err(|e| e.to_string())?;
    let index = corpus_index::build_index(&docs, exec).map_err(|e| e.to_string())?;
    let queries = catalog::expand_all(catalog);
    let (hits, tally) = corpus_index::search_catalog(&index, &queries, exec);
    let known: HashSet<String> = bibliography.iter().map(|b| corpus_index::normalize_doi(&b.doi)).collect();
    let new_candidates = corpus_index::dedup_against_bibliography(&hits, &known);
    Ok(SearchOutput { queries: queries.len(), hits, tally, new_candidates })
}

/// Parse fetched payloads into segmented documents, named after the
/// candidate that carried the DOI. Unparseable payloads are skipped.
pub fn parse_fetched(
    acquisitions: &[AcquisitionResult],
    candidates: &[CandidateDoc],
    fulltext_dir: &Path,
    exec: Execution,
) -> (Vec<Document>, usize) {
    let by_doi: HashMap<String, &str> = candidates
        .iter()
        .filter_map(|c| c.doi.as_ref().map(|d| (corpus_index::normalize_doi(d), c.doc_id.as_str())))
        .collect();
    let mut seen = HashSet::new();
    let todo: Vec<(&AcquisitionResult, String)> = acquisitions
        .iter()
        .filter(|a| a.outcome.is_fetched() && seen.insert(corpus_index::normalize_doi(&a.doc_doi)))
        .map(|a| {
            let key = corpus_index::normalize_doi(&a.doc_doi);
            let id = by_doi.get(&key).map_or_else(|| acquire::sanitize_doi(&a.doc_doi), |s| s.to_string());
            (a, id)
        })
        .collect();
    let table = SectionSynonyms::default();
    let parsed = exec.map(&todo, |(a, id)| {
        let path = fulltext_dir.join(a.payload_path.as_ref().expect("fetched has payload"));
        match docparse::parse_file(id, &path, SourceFormat::from_path(&path).unwrap_or(SourceFormat::Tei), &table) {
            Ok(mut d) => {
                d.doi.get_or_insert_with(|| a.doc_doi.clone());
                d.segment();
                Some(d)
            }
            Err(e) => {
                log::warn!("{}: {e}", path.display());
                None
            }
        }
    });
    let failures = parsed.iter().filter(|d| d.is_none()).count();
    (parsed.into_iter().flatten().collect(), failures)
}

/// Pattern candidates for every sentence, in corpus order.
pub fn candidates_for(corpus: &Corpus, exec: Execution) -> Vec<CandidateSpan> {
    exec.map(corpus.docs(), |d| d.sentences().flat_map(extract::extract_candidates).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect()
}

/// Rule-detector references for every sentence, in corpus order.
pub fn detect_all(corpus: &Corpus, gazetteer: &Gazetteer, exec: Execution) -> Vec<DataReference> {
    exec.map(corpus.docs(), |d| {
        d.sentences()
            .flat_map(|s| extract::detect_rule(s, gazetteer, &extract::extract_candidates(s)))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

type Counts = BTreeMap<String, u64>;

fn counts<const N: usize>(pairs: [(&str, usize); N]) -> Counts {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v as u64)).collect()
}

struct StagePlan {
    inputs: Vec<(String, String)>,
    outputs: Vec<&'static str>,
}

const HITS: &str = "hits.jsonl";
const NEW_CANDIDATES: &str = "new_candidates.jsonl";
const TALLY: &str = "tally.json";
const ACQUISITIONS: &str = "acquisitions.jsonl";
const FULLTEXT: &str = "fulltext";
const DOCS: &str = "docs.jsonl";
const CANDIDATES: &str = "candidates.jsonl";
const REFS: &str = "refs.jsonl";
const REJECTED: &str = "rejected_predictions.jsonl";
const LINKS: &str = "links.jsonl";
const PARTITIONS: &str = "partitions.json";
const REPORT_DIR: &str = "report";

struct Runner<'a> {
    cfg: &'a Config,
    exec: Execution,
}

impl Runner<'_> {
    fn out(&self, rel: &str) -> PathBuf {
        self.cfg.out_dir.join(rel)
    }

    fn digest(&self, label: &str, path: &Path) -> Result<(String, String), String> {
        digest_path(path).map(|d| (label.to_string(), d)).map_err(|e| format!("{}: {e}", path.display()))
    }

    fn param(label: &str, value: impl fmt::Debug) -> (String, String) {
        (label.to_string(), sha256_hex(format!("{value:?}").as_bytes()))
    }

    fn plan(&self, stage: Stage) -> Result<StagePlan, String> {
        let cfg = self.cfg;
        let bib = || match &cfg.bibliography {
            Some(b) => self.digest("bibliography", b),
            None => Ok(Self::param("bibliography", "none")),
        };
        let (inputs, outputs) = match stage {
            Stage::Search => (
                vec![self.digest("catalog", &cfg.catalog)?, self.digest("corpus", &cfg.corpus)?, bib()?],
                vec![HITS, NEW_CANDIDATES, TALLY],
            ),
            Stage::Acquire => {
                let resolver = match &cfg.resolver {
                    ResolverSpec::Directory(d) => self.digest("resolver", d)?,
                    ResolverSpec::Http(url) => Self::param("resolver", url),
                };
                (vec![self.digest(NEW_CANDIDATES, &self.out(NEW_CANDIDATES))?, resolver], vec![ACQUISITIONS, FULLTEXT])
            }
            Stage::Parse => (
                vec![
                    self.digest(NEW_CANDIDATES, &self.out(NEW_CANDIDATES))?,
                    self.digest(ACQUISITIONS, &self.out(ACQUISITIONS))?,
                    self.digest(FULLTEXT, &self.out(FULLTEXT))?,
                ],
                vec![DOCS],
            ),
            Stage::Extract => {
                let mut inputs = vec![
                    self.digest(DOCS, &self.out(DOCS))?,
                    self.digest("catalog", &cfg.catalog)?,
                    Self::param("detector", cfg.detector),
                ];
                let mut outputs = vec![CANDIDATES, REFS];
                if let (DetectorKind::External, Some(p)) = (cfg.detector, &cfg.predictions) {
                    inputs.push(self.digest("predictions", p)?);
                    outputs.push(REJECTED);
                }
                (inputs, outputs)
            }
            Stage::Link => (
                vec![
                    self.digest(REFS, &self.out(REFS))?,
                    self.digest("catalog", &cfg.catalog)?,
                    Self::param("thresholds", (cfg.thresholds.theta.to_bits(), cfg.thresholds.floor.to_bits())),
                ],
                vec![LINKS, PARTITIONS],
            ),
            Stage::Report => (
                vec![
                    self.digest(LINKS, &self.out(LINKS))?,
                    self.digest(DOCS, &self.out(DOCS))?,
                    self.digest("catalog", &cfg.catalog)?,
                    bib()?,
                ],
                vec![REPORT_DIR],
            ),
        };
        Ok(StagePlan { inputs, outputs })
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), String> {
        let mut body = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
        body.push('\n');
        jsonl::write_atomic(&self.out(rel), body.as_bytes()).map_err(|e| format!("{rel}: {e}"))
    }

    fn write_lines<T: Serialize>(&self, rel: &str, records: &[T]) -> Result<(), String> {
        jsonl::write(&self.out(rel), records).map_err(|e| format!("{rel}: {e}"))
    }

    fn read_lines<T: serde::de::DeserializeOwned>(&self, rel: &str) -> Result<Vec<T>, String> {
        jsonl::read(&self.out(rel)).map_err(|e| format!("{rel}: {e}"))
    }

    fn execute(&self, stage: Stage) -> Result<Counts, String> {
        let cfg = self.cfg;
        let exec = self.exec;
        match stage {
            Stage::Search => {
                let (_, eligible) = load_eligible_catalog(&cfg.catalog)?;
                let bib = load_bibliography(cfg.bibliography.as_deref())?;
                let s = search(&eligible, &cfg.corpus, &bib, exec)?;
                self.write_lines(HITS, &s.hits)?;
                self.write_lines(NEW_CANDIDATES, &s.new_candidates)?;
                self.write_json(TALLY, &s.tally)?;
                Ok(counts([
                    ("queries", s.queries),
                    ("hits", s.tally.total_hits),
                    ("documents_hit", s.hits.len()),
                    ("new_candidates", s.new_candidates.len()),
                    ("without_doi", s.new_candidates.iter().filter(|c| c.flagged_no_doi).count()),
                ]))
            }
            Stage::Acquire => {
                let candidates: Vec<CandidateDoc> = self.read_lines(NEW_CANDIDATES)?;
                let dois: Vec<String> = candidates.iter().filter_map(|c| c.doi.clone()).collect();
                let resolver = cfg.resolver.build()?;
                let dir = self.out(FULLTEXT);
                if dir.exists() {
                    std::fs::remove_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
                }
                let results = acquire::acquire_fulltext(&dois, resolver.as_ref(), &dir, exec).map_err(|e| e.to_string())?;
                self.write_lines(ACQUISITIONS, &results)?;
                let s = AcquisitionSummary::from_results(&results);
                Ok(counts([
                    ("requested", dois.len()),
                    ("skipped_without_doi", candidates.len() - dois.len()),
                    ("fetched", s.fetched()),
                    ("fetched_tei", s.fetched_tei),
                    ("fetched_plaintext", s.fetched_plaintext),
                    ("no_full_text", s.no_full_text),
                    ("license_blocked", s.license_blocked),
                    ("errors", s.error),
                ]))
            }
            Stage::Parse => {
                let candidates: Vec<CandidateDoc> = self.read_lines(NEW_CANDIDATES)?;
                let acquisitions: Vec<AcquisitionResult> = self.read_lines(ACQUISITIONS)?;
                let (docs, failures) = parse_fetched(&acquisitions, &candidates, &self.out(FULLTEXT), exec);
                self.write_lines(DOCS, &docs)?;
                Ok(counts([
                    ("parsed", docs.len()),
                    ("parse_failures", failures),
                    ("sections", docs.iter().map(|d| d.sections.len()).sum()),
                    ("sentences", docs.iter().map(Document::sentence_count).sum()),
                ]))
            }
            Stage::Extract => {
                let corpus = Corpus::new(self.read_lines(DOCS)?);
                let cands = candidates_for(&corpus, exec);
                let (refs, rejected) = match cfg.detector {
                    DetectorKind::Rule => {
                        let (_, eligible) = load_eligible_catalog(&cfg.catalog)?;
                        let gaz = Gazetteer::from_catalog(&eligible, DetectorOptions::default());
                        (detect_all(&corpus, &gaz, exec), None)
                    }
                    DetectorKind::External => {
                        let p = cfg.predictions.as_ref().expect("validated");
                        let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                        let (refs, rejected) = extract::load_external_predictions(&text, &corpus);
                        (refs, Some(rejected))
                    }
                };
                self.write_lines(CANDIDATES, &cands)?;
                self.write_lines(REFS, &refs)?;
                if let Some(r) = &rejected {
                    self.write_lines(REJECTED, r)?;
                }
                let cand_sentences: HashSet<_> = cands.iter().map(|c| &c.sentence).collect();
                Ok(counts([
                    ("sentences", corpus.sentence_count()),
                    ("candidate_spans", cands.len()),
                    ("candidate_sentences", cand_sentences.len()),
                    ("references", refs.len()),
                    ("rejected_predictions", rejected.map_or(0, |r| r.len())),
                ]))
            }
            Stage::Link => {
                let refs: Vec<DataReference> = self.read_lines(REFS)?;
                let (_, eligible) = load_eligible_catalog(&cfg.catalog)?;
                let matcher = NameMatcher::new(&eligible);
                let links = linkage::link_all(&refs, &matcher, &cfg.thresholds, exec);
                let summary = linkage::partition_summary(&links);
                self.write_lines(LINKS, &links)?;
                self.write_json(PARTITIONS, &summary)?;
                let n = |p| summary.row(p).references;
                Ok(counts([
                    ("links", links.len()),
                    ("catalog_dataset", n(Partition::CatalogDataset)),
                    ("external_dataset", n(Partition::ExternalDataset)),
                    ("non_dataset", n(Partition::NonDataset)),
                ]))
            }
            Stage::Report => {
                let links: Vec<LinkResult> = self.read_lines(LINKS)?;
                let corpus = Corpus::new(self.read_lines(DOCS)?);
                let (full, _) = load_eligible_catalog(&cfg.catalog)?;
                let bib = load_bibliography(cfg.bibliography.as_deref())?;
                let report = CorpusReport::build(&links, &corpus, &bib, &full, cfg.thresholds.theta, exec);
                report.write_to(&self.out(REPORT_DIR)).map_err(|e| e.to_string())?;
                Ok(counts([
                    ("section_buckets", report.sections.buckets.len()),
                    ("section_references", report.sections.total()),
                    ("bibliography_entries", bib.len()),
                ]))
            }
        }
    }
}

/// Runs (or resumes) every stage in order and returns the final manifest.
pub fn run_pipeline(cfg: &Config, opts: &RunOptions) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| PipelineError::Validation(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    let config_digest = cfg.digest();
    let previous = RunManifest::load(&cfg.out_dir);
    let mut manifest = RunManifest {
        run_id: config_digest[..12].to_string(),
        config_digest,
        stages: Stage::ALL.iter().map(|&s| StageRecord::pending(s)).collect(),
    };
    let runner = Runner { cfg, exec: opts.exec };
    let save = |m: &RunManifest, stage: Stage| {
        m.save(&cfg.out_dir).map_err(|e| PipelineError::Stage { stage, message: format!("writing manifest: {e}") })
    };

    for (i, stage) in Stage::ALL.into_iter().enumerate() {
        let fail = |m: &mut RunManifest, message: String| {
            m.stages[i].status = StageStatus::Failed;
            m.stages[i].diagnostic = Some(message.clone());
            save(m, stage)?;
            Err(PipelineError::Stage { stage, message })
        };
        let plan = match runner.plan(stage) {
            Ok(p) => p,
            Err(e) => return fail(&mut manifest, e),
        };
        let mut h = Sha256::new();
        for (k, v) in &plan.inputs {
            h.update(format!("{k}={v}\n").as_bytes());
        }
        let input_digest = format!("{:x}", h.finalize());

        let reusable = previous.as_ref().map(|p| p.stage(stage)).filter(|prev| {
            prev.done()
                && prev.input_digest.as_deref() == Some(input_digest.as_str())
                && prev.outputs.len() == plan.outputs.len()
                && prev.outputs.iter().all(|(rel, d)| digest_path(&cfg.out_dir.join(rel)).is_ok_and(|now| &now == d))
        });
        let record = if let Some(prev) = reusable {
            log::info!("{stage}: inputs unchanged, reusing outputs");
            StageRecord { status: StageStatus::Resumed, wall_ms: 0, ..prev.clone() }
        } else {
            log::info!("{stage}: running");
            let started = Instant::now();
            let counts = match runner.execute(stage) {
                Ok(c) => c,
                Err(e) => return fail(&mut manifest, e),
            };
            let mut outputs = BTreeMap::new();
            for rel in &plan.outputs {
                match digest_path(&cfg.out_dir.join(rel)) {
                    Ok(d) => outputs.insert(rel.to_string(), d),
                    Err(e) => return fail(&mut manifest, format!("{rel}: {e}")),
                };
            }
            StageRecord {
                name: stage,
                status: StageStatus::Complete,
                input_digest: Some(input_digest),
                inputs: plan.inputs.into_iter().collect(),
                outputs,
                counts,
                wall_ms: started.elapsed().as_millis() as u64,
                diagnostic: None,
            }
        };
        manifest.stages[i] = record;
        save(&manifest, stage)?;
        if opts.stop_after == Some(stage) {
            return Ok(manifest);
        }
    }
    let funnel = Funnel::from_manifest(&manifest).render();
    jsonl::write_atomic(&cfg.out_dir.join(FUNNEL_FILE), funnel.as_bytes())
        .map_err(|e| PipelineError::Stage { stage: Stage::Report, message: format!("{FUNNEL_FILE}: {e}") })?;
    Ok(manifest)
}

/// Counts at each stage boundary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Funnel {
    pub queries: u64,
    pub hits: u64,
    pub documents_hit: u64,
    pub new_candidates: u64,
    pub fetched: u64,
    pub parsed: u64,
    pub sentences: u64,
    pub candidate_spans: u64,
    pub references: u64,
    pub catalog_links: u64,
    pub external_links: u64,
    pub non_dataset_links: u64,
}

impl Funnel {
    pub fn from_manifest(m: &RunManifest) -> Self {
        Funnel {
            queries: m.count(Stage::Search, "queries"),
            hits: m.count(Stage::Search, "hits"),
            documents_hit: m.count(Stage::Search, "documents_hit"),
            new_candidates: m.count(Stage::Search, "new_candidates"),
            fetched: m.count(Stage::Acquire, "fetched"),
            parsed: m.count(Stage::Parse, "parsed"),
            sentences: m.count(Stage::Parse, "sentences"),
            candidate_spans: m.count(Stage::Extract, "candidate_spans"),
            references: m.count(Stage::Extract, "references"),
            catalog_links: m.count(Stage::Link, "catalog_dataset"),
            external_links: m.count(Stage::Link, "external_dataset"),
            non_dataset_links: m.count(Stage::Link, "non_dataset"),
        }
    }

    pub fn rows(&self) -> [(&'static str, u64); 12] {
        [
            ("queries issued", self.queries),
            ("hits", self.hits),
            ("documents hit", self.documents_hit),
            ("new candidates", self.new_candidates),
            ("fetched", self.fetched),
            ("parsed", self.parsed),
            ("sentences", self.sentences),
            ("candidate spans", self.candidate_spans),
            ("references", self.references),
            ("catalog links", self.catalog_links),
            ("external links", self.external_links),
            ("non-dataset links", self.non_dataset_links),
        ]
    }

    pub fn render(&self) -> String {
        self.rows().iter().map(|(k, v)| format!("{k:<18} {v:>8}\n")).collect()
    }
}

/// The funnel table for a manifest.
pub fn stage_counts(manifest: &RunManifest) -> String {
    Funnel::from_manifest(manifest).render()
}
