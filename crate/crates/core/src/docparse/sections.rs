use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

const DEFAULT_TABLE: &str = include_str!("../../data/section_synonyms.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SectionLabel {
    Introduction,
    Data,
    Methods,
    Results,
    Discussion,
    Conclusions,
    Acknowledgements,
    References,
    Abstract,
    Other,
}

impl SectionLabel {
    pub const ALL: [SectionLabel; 10] = [
        SectionLabel::Introduction,
        SectionLabel::Data,
        SectionLabel::Methods,
        SectionLabel::Results,
        SectionLabel::Discussion,
        SectionLabel::Conclusions,
        SectionLabel::Acknowledgements,
        SectionLabel::References,
        SectionLabel::Abstract,
        SectionLabel::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SectionLabel::Introduction => "Introduction",
            SectionLabel::Data => "Data",
            SectionLabel::Methods => "Methods",
            SectionLabel::Results => "Results",
            SectionLabel::Discussion => "Discussion",
            SectionLabel::Conclusions => "Conclusions",
            SectionLabel::Acknowledgements => "Acknowledgements",
            SectionLabel::References => "References",
            SectionLabel::Abstract => "Abstract",
            SectionLabel::Other => "Other",
        }
    }
}

impl fmt::Display for SectionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SectionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SectionLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown section label {s:?}"))
    }
}

/// Heading synonym table. The default ships in `data/section_synonyms.tsv`.
#[derive(Debug, Clone)]
pub struct SectionSynonyms {
    map: HashMap<String, SectionLabel>,
}

impl Default for SectionSynonyms {
    fn default() -> Self {
        SectionSynonyms::parse(DEFAULT_TABLE).expect("bundled synonym table is valid")
    }
}

impl SectionSynonyms {
    /// Two tab-separated columns: heading, label. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected two tab-separated columns", i + 1))?;
            let label: SectionLabel = v.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
            map.insert(clean_heading(k), label);
        }
        // canonical names always map to themselves
        for l in SectionLabel::ALL {
            map.entry(l.as_str().to_lowercase()).or_insert(l);
        }
        Ok(SectionSynonyms { map })
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    pub fn normalize(&self, raw_heading: &str) -> SectionLabel {
        self.map.get(&clean_heading(raw_heading)).copied().unwrap_or(SectionLabel::Other)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, SectionLabel)> {
        self.map.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

static NUMBER_PREFIX: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"^(?:(?:\d+(?:\.\d+)*[.)]?|[IVXLC]+[.)]|[A-H][.)])\s+|\d+(?:\.\d+)*[.)]?$)").unwrap()
});
static SPACES: Lazy<Regex> = Lazy::new(|| Regex::new(r"\s+").unwrap());

fn clean_heading(raw: &str) -> String {
    let trimmed = raw.trim();
    let stripped = NUMBER_PREFIX.replace(trimmed, "");
    let stripped = stripped.trim().trim_end_matches([':', '.', ';']).trim();
    let stripped = stripped.replace('&', "and");
    SPACES.replace_all(&stripped.to_lowercase(), " ").into_owned()
}

/// Normalize a heading with the bundled synonym table.
pub fn normalize_section(raw_heading: &str) -> SectionLabel {
    static TABLE: Lazy<SectionSynonyms> = Lazy::new(SectionSynonyms::default);
    TABLE.normalize(raw_heading)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methodology_becomes_methods() {
        assert_eq!(normalize_section("Methodology"), SectionLabel::Methods);
        assert_eq!(normalize_section("Methods"), SectionLabel::Methods);
        assert_eq!(normalize_section("METHODS"), SectionLabel::Methods);
        assert_eq!(normalize_section("Materials & Methods"), SectionLabel::Methods);
    }

    #[test]
    fn numbered_prefixes() {
        assert_eq!(normalize_section("4.2 Data and Measures"), SectionLabel::Data);
        assert_eq!(normalize_section("3. Methods"), SectionLabel::Methods);
        assert_eq!(normalize_section("II. Background"), SectionLabel::Introduction);
        assert_eq!(normalize_section("5) Conclusion:"), SectionLabel::Conclusions);
        assert_eq!(normalize_section("Concluding   remarks"), SectionLabel::Conclusions);
    }

    #[test]
    fn unknown_is_other() {
        assert_eq!(normalize_section("Appendix Z: Robustness"), SectionLabel::Other);
        assert_eq!(normalize_section(""), SectionLabel::Other);
        assert_eq!(normalize_section("12"), SectionLabel::Other);
    }

    #[test]
    fn idempotent_on_canonical_labels() {
        for l in SectionLabel::ALL {
            assert_eq!(normalize_section(l.as_str()), l);
        }
    }

    #[test]
    fn custom_table() {
        let t = SectionSynonyms::parse("# comment\nempirics\tResults\n").unwrap();
        assert_eq!(t.normalize("1 Empirics"), SectionLabel::Results);
        assert_eq!(t.normalize("Data"), SectionLabel::Data);
        assert!(SectionSynonyms::parse("bad line").is_err());
        assert!(SectionSynonyms::parse("x\tNotALabel").is_err());
    }
}
