//! Structured documents: TEI / plaintext parsing, section-label
//! normalization, and sentence segmentation.

mod sbd;
mod sections;
mod tei;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Execution;

pub use sbd::{is_abbreviation, segment_text, ABBREVIATIONS};
pub use sections::{normalize_section, SectionLabel, SectionSynonyms};
pub use tei::parse_tei;

#[derive(Debug, Error)]
pub enum DocParseError {
    #[error("malformed XML at {line}:{column}: {message}")]
    Xml { line: u32, column: u32, message: String },
    #[error("empty doc_id")]
    EmptyDocId,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default)]
    pub doi: Option<String>,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub year: Option<i32>,
    pub sections: Vec<Section>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub raw_heading: String,
    pub label: SectionLabel,
    pub body: String,
    #[serde(default)]
    pub footnotes: Vec<String>,
    #[serde(default)]
    pub captions: Vec<String>,
    /// Filled by [`Document::segment`].
    #[serde(default)]
    pub sentences: Vec<Sentence>,
}

impl Section {
    pub fn new(raw_heading: impl Into<String>, body: impl Into<String>, table: &SectionSynonyms) -> Self {
        let raw_heading = raw_heading.into();
        Section {
            label: table.normalize(&raw_heading),
            raw_heading,
            body: body.into(),
            footnotes: Vec::new(),
            captions: Vec::new(),
            sentences: Vec::new(),
        }
    }

    /// The text a sentence with this field designation was cut from.
    pub fn field_text(&self, field: TextField) -> Option<&str> {
        match field {
            TextField::Body => Some(&self.body),
            TextField::Footnote(i) => self.footnotes.get(i).map(String::as_str),
            TextField::Caption(i) => self.captions.get(i).map(String::as_str),
        }
    }
}

/// Which text field of a section a sentence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "lowercase")]
pub enum TextField {
    Body,
    Footnote(usize),
    Caption(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub section_index: usize,
    pub sentence_index: usize,
    pub field: TextField,
    pub text: String,
    /// Char offsets into the field text.
    pub start: usize,
    pub end: usize,
}

impl Sentence {
    pub fn key(&self) -> SentenceRef {
        SentenceRef {
            doc_id: self.doc_id.clone(),
            section_index: self.section_index,
            sentence_index: self.sentence_index,
        }
    }
}

/// Stable address of one sentence in a corpus.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SentenceRef {
    pub doc_id: String,
    pub section_index: usize,
    pub sentence_index: usize,
}

impl Document {
    pub fn validate(&self) -> Result<(), DocParseError> {
        if self.doc_id.trim().is_empty() {
            return Err(DocParseError::EmptyDocId);
        }
        Ok(())
    }

    /// Segment every text field of every section, replacing any previous
    /// sentences. Sentence indices run across body, then footnotes, then
    /// captions within a section.
    pub fn segment(&mut self) {
        for (si, section) in self.sections.iter_mut().enumerate() {
            section.sentences = segment_section(&self.doc_id, si, section);
        }
    }

    pub fn sentence_count(&self) -> usize {
        self.sections.iter().map(|s| s.sentences.len()).sum()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.sections.iter().flat_map(|s| s.sentences.iter())
    }

    /// All text, in document order, used for full-text indexing.
    pub fn full_text(&self) -> String {
        let mut parts: Vec<&str> = Vec::new();
        if !self.title.is_empty() {
            parts.push(&self.title);
        }
        for s in &self.sections {
            if !s.raw_heading.is_empty() {
                parts.push(&s.raw_heading);
            }
            parts.push(&s.body);
            parts.extend(s.footnotes.iter().map(String::as_str));
            parts.extend(s.captions.iter().map(String::as_str));
        }
        parts.join("\n")
    }
}

/// Split one section into sentences with offsets relative to each field.
pub fn segment_sentences(doc_id: &str, section_index: usize, section: &Section) -> Vec<Sentence> {
    segment_section(doc_id, section_index, section)
}

fn segment_section(doc_id: &str, section_index: usize, section: &Section) -> Vec<Sentence> {
    let fields = std::iter::once((TextField::Body, section.body.as_str()))
        .chain(section.footnotes.iter().enumerate().map(|(i, t)| (TextField::Footnote(i), t.as_str())))
        .chain(section.captions.iter().enumerate().map(|(i, t)| (TextField::Caption(i), t.as_str())));
    let mut out = Vec::new();
    for (field, text) in fields {
        let chars: Vec<char> = text.chars().collect();
        for (start, end) in segment_text(text) {
            out.push(Sentence {
                doc_id: doc_id.to_string(),
                section_index,
                sentence_index: out.len(),
                field,
                text: chars[start..end].iter().collect(),
                start,
                end,
            });
        }
    }
    out
}

/// A single `Other` section holding the whole input.
pub fn parse_plaintext(doc_id: &str, source: &str) -> Document {
    Document {
        doc_id: doc_id.to_string(),
        doi: None,
        title: String::new(),
        year: None,
        sections: vec![Section {
            raw_heading: String::new(),
            label: SectionLabel::Other,
            body: source.to_string(),
            footnotes: Vec::new(),
            captions: Vec::new(),
            sentences: Vec::new(),
        }],
    }
}

/// Input formats accepted in a corpus manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Tei,
    Txt,
    /// A single structured-document record as produced by `parse`.
    Structured,
}

impl SourceFormat {
    pub fn from_path(path: &Path) -> Option<SourceFormat> {
        let name = path.file_name()?.to_str()?.to_ascii_lowercase();
        if name.ends_with(".xml") {
            Some(SourceFormat::Tei)
        } else if name.ends_with(".txt") {
            Some(SourceFormat::Txt)
        } else if name.ends_with(".json") || name.ends_with(".jsonl") {
            Some(SourceFormat::Structured)
        } else {
            None
        }
    }
}

/// Parse one source file of the given format. The document is not segmented.
pub fn parse_file(
    doc_id: &str,
    path: &Path,
    format: SourceFormat,
    table: &SectionSynonyms,
) -> Result<Document, DocParseError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DocParseError::Io { path: path.display().to_string(), source })?;
    let mut doc = match format {
        SourceFormat::Tei => parse_tei(doc_id, &text, table)?,
        SourceFormat::Txt => parse_plaintext(doc_id, &text),
        SourceFormat::Structured => {
            let mut d: Document = serde_json::from_str(text.trim()).map_err(|e| DocParseError::Io {
                path: path.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })?;
            d.doc_id = doc_id.to_string();
            d
        }
    };
    doc.validate()?;
    for s in &mut doc.sections {
        s.sentences.clear();
    }
    Ok(doc)
}

/// Segment a batch of documents.
pub fn segment_all(docs: &mut [Document], exec: Execution) {
    let segmented = exec.map(docs, |d| {
        let mut d = d.clone();
        d.segment();
        d
    });
    for (slot, d) in docs.iter_mut().zip(segmented) {
        *slot = d;
    }
}

/// Parsed, segmented documents with lookup by sentence address.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Self {
        let by_id = docs.iter().enumerate().map(|(i, d)| (d.doc_id.clone(), i)).collect();
        Corpus { docs, by_id }
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Ok(Corpus::new(crate::jsonl::read(path)?))
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn doc(&self, doc_id: &str) -> Option<&Document> {
        self.by_id.get(doc_id).map(|&i| &self.docs[i])
    }

    /// Position of the document in corpus order.
    pub fn doc_position(&self, doc_id: &str) -> Option<usize> {
        self.by_id.get(doc_id).copied()
    }

    pub fn sentence(&self, r: &SentenceRef) -> Option<&Sentence> {
        self.doc(&r.doc_id)?.sections.get(r.section_index)?.sentences.get(r.sentence_index)
    }

    pub fn section(&self, doc_id: &str, section_index: usize) -> Option<&Section> {
        self.doc(doc_id)?.sections.get(section_index)
    }

    pub fn sentence_count(&self) -> usize {
        self.docs.iter().map(Document::sentence_count).sum()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.docs.iter().flat_map(Document::sentences)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::char_slice;

    #[test]
    fn plaintext_identity() {
        let d = parse_plaintext("d", "");
        assert_eq!(d.sections.len(), 1);
        assert_eq!(d.sections[0].label, SectionLabel::Other);
        let mut d2 = d.clone();
        d2.segment();
        assert_eq!(d2.sentence_count(), 0);

        let src = "line one\r\nline two\n\n  indented\n";
        assert_eq!(parse_plaintext("d", src).sections[0].body, src);
    }

    #[test]
    fn plaintext_large_is_not_truncated() {
        let src = "The survey data were collected in 1990. ".repeat(26_000);
        assert!(src.len() > 1_000_000);
        let mut d = parse_plaintext("big", &src);
        assert_eq!(d.sections[0].body.len(), src.len());
        d.segment();
        assert_eq!(d.sentence_count(), 26_000);
    }

    #[test]
    fn sentences_cover_all_fields() {
        let table = SectionSynonyms::default();
        let mut s = Section::new("Data", "First one. Second one.", &table);
        s.footnotes.push("A note. Another note.".into());
        s.captions.push("Figure 1. Shares by year.".into());
        let mut d = Document { doc_id: "x".into(), doi: None, title: String::new(), year: None, sections: vec![s] };
        d.segment();
        let sents = &d.sections[0].sentences;
        let fields: Vec<TextField> = sents.iter().map(|s| s.field).collect();
        assert_eq!(
            fields,
            vec![
                TextField::Body,
                TextField::Body,
                TextField::Footnote(0),
                TextField::Footnote(0),
                TextField::Caption(0),
                TextField::Caption(0)
            ]
        );
        for (i, s) in sents.iter().enumerate() {
            assert_eq!(s.sentence_index, i);
            let src = d.sections[0].field_text(s.field).unwrap();
            assert_eq!(char_slice(src, s.start, s.end).unwrap(), s.text);
        }
    }
}
