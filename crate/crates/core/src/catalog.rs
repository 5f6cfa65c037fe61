//! The data catalog: study records, eligibility filtering, and expansion of
//! each study into exact full-text search queries.
//!
//! The on-disk format is one JSON object per line:
//!
//! ```text
//! {"study_id":6635,"canonical_name":"American Citizen Participation Study 1990",
//!  "name_variants":[],"doi":"10.3886/ICPSR06635","archive":"ICPSR",
//!  "status":"active","access":"public","self_deposited":false}
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl;

pub const DOI_PREFIX: &str = "10.3886/ICPSR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StudyId(pub u64);

impl fmt::Display for StudyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl StudyId {
    /// DOI the archive mints for this study: the number zero-padded to at
    /// least five digits.
    pub fn doi(self) -> String {
        format!("{DOI_PREFIX}{:05}", self.0)
    }

    /// Inverse of [`StudyId::doi`].
    pub fn from_doi(doi: &str) -> Option<StudyId> {
        let prefix = doi.get(..DOI_PREFIX.len())?;
        if !prefix.eq_ignore_ascii_case(DOI_PREFIX) {
            return None;
        }
        let digits = &doi[DOI_PREFIX.len()..];
        if digits.len() < 5 || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let id: u64 = digits.parse().ok()?;
        (id > 0 && StudyId(id).doi().eq_ignore_ascii_case(doi)).then_some(StudyId(id))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyStatus {
    Active,
    Deaccessioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Public,
    Restricted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogStudy {
    pub study_id: StudyId,
    pub canonical_name: String,
    #[serde(default)]
    pub name_variants: Vec<String>,
    #[serde(default)]
    pub doi: Option<String>,
    #[serde(default)]
    pub archive: String,
    pub status: StudyStatus,
    pub access: Access,
    #[serde(default)]
    pub self_deposited: bool,
}

impl CatalogStudy {
    /// Canonical name followed by variants, in catalog order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.canonical_name.as_str()).chain(self.name_variants.iter().map(String::as_str))
    }

    /// Checks the per-record invariants.
    pub fn validate(&self) -> Result<(), RejectReason> {
        if self.study_id.0 == 0 {
            return Err(RejectReason::NonPositiveId);
        }
        if self.canonical_name.trim().is_empty() {
            return Err(RejectReason::EmptyName);
        }
        for v in &self.name_variants {
            if v.trim().is_empty() {
                return Err(RejectReason::EmptyVariant);
            }
            if v.trim() == self.canonical_name.trim() {
                return Err(RejectReason::VariantEqualsCanonical(v.clone()));
            }
        }
        if let Some(doi) = &self.doi {
            let expected = self.study_id.doi();
            if !doi.trim().eq_ignore_ascii_case(&expected) {
                return Err(RejectReason::DoiMismatch { found: doi.clone(), expected });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RejectReason {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("study_id must be positive")]
    NonPositiveId,
    #[error("empty name")]
    EmptyName,
    #[error("empty name variant")]
    EmptyVariant,
    #[error("name variant {0:?} equals the canonical name")]
    VariantEqualsCanonical(String),
    #[error("doi {found:?} does not match expected {expected:?}")]
    DoiMismatch { found: String, expected: String },
    #[error("duplicate study_id {0}")]
    DuplicateId(StudyId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedRecord {
    pub line: usize,
    pub study_id: Option<StudyId>,
    pub reason: RejectReason,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Immutable after load; share by reference across threads.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    studies: Vec<CatalogStudy>,
    by_id: HashMap<StudyId, usize>,
}

#[derive(Debug, Clone, Default)]
pub struct CatalogLoad {
    pub catalog: Catalog,
    pub rejected: Vec<RejectedRecord>,
}

impl Catalog {
    /// Builds a catalog from already-validated studies. Panics on duplicate ids.
    pub fn new(studies: Vec<CatalogStudy>) -> Self {
        let mut by_id = HashMap::with_capacity(studies.len());
        for (i, s) in studies.iter().enumerate() {
            assert!(by_id.insert(s.study_id, i).is_none(), "duplicate study_id {}", s.study_id);
        }
        Catalog { studies, by_id }
    }

    pub fn studies(&self) -> &[CatalogStudy] {
        &self.studies
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }

    pub fn get(&self, id: StudyId) -> Option<&CatalogStudy> {
        self.by_id.get(&id).map(|&i| &self.studies[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, CatalogStudy> {
        self.studies.iter()
    }
}

/// Parse catalog text. Invalid records are rejected individually.
pub fn parse_catalog(text: &str) -> CatalogLoad {
    let (records, bad) = jsonl::parse_lines::<CatalogStudy>(text);
    let mut rejected: Vec<RejectedRecord> = bad
        .into_iter()
        .map(|e| RejectedRecord { line: e.line, study_id: None, reason: RejectReason::Malformed(e.reason) })
        .collect();
    let mut seen = HashSet::new();
    let mut studies = Vec::new();
    for (line, mut study) in records {
        study.canonical_name = study.canonical_name.trim().to_string();
        for v in &mut study.name_variants {
            *v = v.trim().to_string();
        }
        if let Some(doi) = &mut study.doi {
            *doi = doi.trim().to_string();
        }
        if let Err(reason) = study.validate() {
            rejected.push(RejectedRecord { line, study_id: Some(study.study_id), reason });
            continue;
        }
        if !seen.insert(study.study_id) {
            rejected.push(RejectedRecord {
                line,
                study_id: Some(study.study_id),
                reason: RejectReason::DuplicateId(study.study_id),
            });
            continue;
        }
        studies.push(study);
    }
    rejected.sort_by_key(|r| r.line);
    CatalogLoad { catalog: Catalog::new(studies), rejected }
}

pub fn load_catalog(path: &Path) -> Result<CatalogLoad, CatalogError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CatalogError::Unreadable { path: path.display().to_string(), source })?;
    let load = parse_catalog(&text);
    for r in &load.rejected {
        log::warn!("{}:{}: rejected catalog record: {}", path.display(), r.line, r.reason);
    }
    Ok(load)
}

/// Which studies are searched. Each rule can be toggled independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityPolicy {
    pub exclude_self_deposited: bool,
    pub include_restricted: bool,
    pub include_deaccessioned: bool,
}

impl Default for EligibilityPolicy {
    fn default() -> Self {
        EligibilityPolicy { exclude_self_deposited: true, include_restricted: true, include_deaccessioned: true }
    }
}

impl EligibilityPolicy {
    pub fn admits(&self, s: &CatalogStudy) -> bool {
        if self.exclude_self_deposited && s.self_deposited {
            return false;
        }
        if !self.include_restricted && s.access == Access::Restricted {
            return false;
        }
        if !self.include_deaccessioned && s.status == StudyStatus::Deaccessioned {
            return false;
        }
        true
    }
}

pub fn filter_eligible(catalog: &Catalog, policy: &EligibilityPolicy) -> Catalog {
    Catalog::new(catalog.studies.iter().filter(|s| policy.admits(s)).cloned().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    StudyName,
    StudyDoi,
    StudyNumber,
}

impl QueryKind {
    pub const ALL: [QueryKind; 3] = [QueryKind::StudyName, QueryKind::StudyDoi, QueryKind::StudyNumber];

    pub fn label(self) -> &'static str {
        match self {
            QueryKind::StudyName => "Study Name",
            QueryKind::StudyDoi => "Study DOI",
            QueryKind::StudyNumber => "Study Number",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SearchQuery {
    pub study_id: StudyId,
    pub kind: QueryKind,
    pub phrase: String,
}

/// Names in catalog order, then the DOI if present, then "ICPSR <number>".
pub fn expand_queries(study: &CatalogStudy) -> Vec<SearchQuery> {
    let mut out: Vec<SearchQuery> = study
        .names()
        .map(|n| SearchQuery { study_id: study.study_id, kind: QueryKind::StudyName, phrase: n.trim().to_string() })
        .collect();
    if let Some(doi) = &study.doi {
        out.push(SearchQuery { study_id: study.study_id, kind: QueryKind::StudyDoi, phrase: doi.trim().to_string() });
    }
    out.push(SearchQuery {
        study_id: study.study_id,
        kind: QueryKind::StudyNumber,
        phrase: format!("ICPSR {}", study.study_id.0),
    });
    out
}

pub fn expand_all(catalog: &Catalog) -> Vec<SearchQuery> {
    catalog.iter().flat_map(expand_queries).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub fn study(id: u64, name: &str) -> CatalogStudy {
        CatalogStudy {
            study_id: StudyId(id),
            canonical_name: name.to_string(),
            name_variants: vec![],
            doi: Some(StudyId(id).doi()),
            archive: "ICPSR".into(),
            status: StudyStatus::Active,
            access: Access::Public,
            self_deposited: false,
        }
    }

    #[test]
    fn accepts_paper_study() {
        let line = r#"{"study_id":6635,"canonical_name":"American Citizen Participation Study 1990","name_variants":[],"doi":"10.3886/ICPSR06635","archive":"ICPSR","status":"active","access":"public","self_deposited":false}"#;
        let load = parse_catalog(line);
        assert!(load.rejected.is_empty());
        assert_eq!(load.catalog.len(), 1);
    }

    #[test]
    fn rejects_empty_name_and_continues() {
        let text = concat!(
            r#"{"study_id":1,"canonical_name":"  ","doi":null,"archive":"x","status":"active","access":"public"}"#,
            "\n",
            r#"{"study_id":7,"canonical_name":"Seven","doi":"10.3886/ICPSR00007","archive":"x","status":"active","access":"public"}"#,
            "\nnot json\n",
            r#"{"study_id":7,"canonical_name":"Again","archive":"x","status":"active","access":"public"}"#,
        );
        let load = parse_catalog(text);
        assert_eq!(load.catalog.len(), 1);
        assert_eq!(load.catalog.studies()[0].study_id, StudyId(7));
        let reasons: Vec<String> = load.rejected.iter().map(|r| r.reason.to_string()).collect();
        assert_eq!(reasons[0], "empty name");
        assert!(reasons[1].starts_with("malformed record"));
        assert_eq!(load.rejected[2].reason, RejectReason::DuplicateId(StudyId(7)));
    }

    #[test]
    fn rejects_doi_and_variant_violations() {
        let mut s = study(7, "Seven");
        s.doi = Some("10.3886/ICPSR7".into());
        assert!(matches!(s.validate(), Err(RejectReason::DoiMismatch { .. })));
        let mut s = study(7, "Seven");
        s.name_variants = vec!["Seven".into()];
        assert!(matches!(s.validate(), Err(RejectReason::VariantEqualsCanonical(_))));
    }

    #[test]
    fn doi_padding() {
        assert_eq!(StudyId(7).doi(), "10.3886/ICPSR00007");
        assert_eq!(StudyId(6635).doi(), "10.3886/ICPSR06635");
        assert_eq!(StudyId(123456).doi(), "10.3886/ICPSR123456");
        assert_eq!(StudyId::from_doi("10.3886/icpsr06635"), Some(StudyId(6635)));
        assert_eq!(StudyId::from_doi("10.3886/ICPSR6635"), None);
    }

    #[test]
    fn eligibility_rules() {
        let mut selfdep = study(1, "A");
        selfdep.self_deposited = true;
        let mut deacc = study(2, "B");
        deacc.status = StudyStatus::Deaccessioned;
        let mut restricted = study(3, "C");
        restricted.access = Access::Restricted;
        let cat = Catalog::new(vec![selfdep, deacc, restricted]);
        let kept = filter_eligible(&cat, &EligibilityPolicy::default());
        let ids: Vec<u64> = kept.iter().map(|s| s.study_id.0).collect();
        assert_eq!(ids, vec![2, 3]);

        let strict = EligibilityPolicy { exclude_self_deposited: true, include_restricted: false, include_deaccessioned: false };
        assert!(filter_eligible(&cat, &strict).is_empty());
        let lax = EligibilityPolicy { exclude_self_deposited: false, ..Default::default() };
        assert_eq!(filter_eligible(&cat, &lax).len(), 3);
        assert!(filter_eligible(&Catalog::default(), &EligibilityPolicy::default()).is_empty());
    }

    #[test]
    fn expands_table_two_queries() {
        let s = study(6635, "American Citizen Participation Study 1990");
        let q = expand_queries(&s);
        let got: Vec<(QueryKind, &str)> = q.iter().map(|q| (q.kind, q.phrase.as_str())).collect();
        assert_eq!(
            got,
            vec![
                (QueryKind::StudyName, "American Citizen Participation Study 1990"),
                (QueryKind::StudyDoi, "10.3886/ICPSR06635"),
                (QueryKind::StudyNumber, "ICPSR 6635"),
            ]
        );
    }

    #[test]
    fn expansion_without_doi_and_with_variants() {
        let mut s = study(9, "Nine");
        s.doi = None;
        assert_eq!(expand_queries(&s).len(), 2);
        s.doi = Some(StudyId(9).doi());
        s.name_variants = vec!["Nine A".into(), "Nine B".into()];
        let q = expand_queries(&s);
        assert_eq!(q.len(), 5);
        assert_eq!(q.iter().filter(|q| q.kind == QueryKind::StudyName).count(), 3);
    }

    fn arb_study() -> impl Strategy<Value = CatalogStudy> {
        (1u64..200_000, proptest::collection::vec("[A-Z][a-z]{2,8}", 0..4), any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>())
            .prop_map(|(id, variants, doi, selfdep, deacc, restr)| {
                let mut s = study(id, "Canonical Name");
                s.name_variants = variants;
                if !doi {
                    s.doi = None;
                }
                s.self_deposited = selfdep;
                if deacc {
                    s.status = StudyStatus::Deaccessioned;
                }
                if restr {
                    s.access = Access::Restricted;
                }
                s
            })
    }

    proptest! {
        #[test]
        fn expansion_count(s in arb_study()) {
            let n = expand_queries(&s).len();
            prop_assert_eq!(n, 1 + s.name_variants.len() + usize::from(s.doi.is_some()) + 1);
            for q in expand_queries(&s) {
                prop_assert_eq!(q.phrase.trim(), q.phrase.as_str());
                prop_assert!(!q.phrase.is_empty());
            }
        }

        #[test]
        fn doi_round_trip(id in 1u64..100_000) {
            let doi = StudyId(id).doi();
            prop_assert_eq!(doi.len() - DOI_PREFIX.len(), 5);
            let stripped = doi[DOI_PREFIX.len()..].trim_start_matches('0');
            prop_assert_eq!(stripped.parse::<u64>().unwrap(), id);
            prop_assert_eq!(StudyId::from_doi(&doi), Some(StudyId(id)));
        }

        #[test]
        fn filter_idempotent(studies in proptest::collection::vec(arb_study(), 0..20), a: bool, b: bool, c: bool) {
            let mut seen = HashSet::new();
            let studies: Vec<_> = studies.into_iter().filter(|s| seen.insert(s.study_id)).collect();
            let cat = Catalog::new(studies);
            let p = EligibilityPolicy { exclude_self_deposited: a, include_restricted: b, include_deaccessioned: c };
            let once = filter_eligible(&cat, &p);
            prop_assert_eq!(filter_eligible(&once, &p), once);
        }
    }
}
