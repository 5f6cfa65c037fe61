//! TEI subset reader: header title/DOI/date, abstract, `div` sections with
//! `head`, `p`, `note`, `figure` (caption + table text) and `listBibl`.
//! Unrecognised elements are flattened into body text.

use roxmltree::{Node, NodeType};

use super::{DocParseError, Document, Section, SectionLabel, SectionSynonyms};

pub fn parse_tei(doc_id: &str, source: &str, table: &SectionSynonyms) -> Result<Document, DocParseError> {
    let xml = roxmltree::Document::parse(source).map_err(|e| {
        let pos = e.pos();
        DocParseError::Xml { line: pos.row, column: pos.col, message: e.to_string() }
    })?;
    let root = xml.root_element();

    let header = child_elements(root).find(|n| local(n) == "teiHeader");
    let title = header
        .and_then(|h| h.descendants().find(|n| local(n) == "titleStmt"))
        .and_then(|ts| child_elements(ts).find(|n| local(n) == "title"))
        .map(text_of)
        .unwrap_or_default();
    let doi = header
        .and_then(|h| {
            h.descendants().find(|n| {
                local(n) == "idno" && n.attribute("type").is_some_and(|t| t.eq_ignore_ascii_case("doi"))
            })
        })
        .map(text_of)
        .filter(|d| !d.is_empty());
    let year = header.and_then(find_year);

    let mut sections = Vec::new();
    if let Some(abs) = header.and_then(|h| h.descendants().find(|n| local(n) == "abstract")) {
        let mut s = SectionBuilder::new("Abstract".into());
        s.absorb_children(abs, table, &mut Vec::new());
        if !s.is_empty() {
            sections.push(s.finish(table));
        }
    }

    let text = root.descendants().find(|n| local(n) == "text");
    let mut loose: Option<(usize, SectionBuilder)> = None;
    if let Some(text) = text {
        for part in child_elements(text) {
            match local(&part) {
                "front" | "body" | "back" => {}
                _ => {
                    log::warn!("{doc_id}: unexpected <{}> under <text>, keeping as body text", local(&part));
                }
            }
            for child in child_elements(part) {
                if local(&child) == "div" {
                    let mut nested = Vec::new();
                    let built = build_div(child, table, &mut nested);
                    sections.push(built);
                    sections.extend(nested);
                } else {
                    let (_, builder) = loose.get_or_insert_with(|| (sections.len(), SectionBuilder::new(String::new())));
                    let mut nested = Vec::new();
                    builder.absorb(child, table, &mut nested);
                    sections.extend(nested);
                }
            }
        }
    } else {
        log::warn!("{doc_id}: no <text> element");
    }
    if let Some((pos, builder)) = loose {
        if !builder.is_empty() || sections.is_empty() {
            sections.insert(pos, builder.finish(table));
        }
    }
    if sections.is_empty() {
        sections.push(Section {
            raw_heading: String::new(),
            label: SectionLabel::Other,
            body: String::new(),
            footnotes: Vec::new(),
            captions: Vec::new(),
            sentences: Vec::new(),
        });
    }

    Ok(Document { doc_id: doc_id.to_string(), doi, title, year, sections })
}

fn local<'a>(n: &Node<'a, '_>) -> &'a str {
    n.tag_name().name()
}

fn child_elements<'a, 'i>(n: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    n.children().filter(Node::is_element)
}

/// Descendant text with whitespace collapsed.
fn text_of(n: Node) -> String {
    let mut raw = String::new();
    for d in n.descendants() {
        if d.node_type() == NodeType::Text {
            raw.push_str(d.text().unwrap_or(""));
            raw.push(' ');
        }
    }
    collapse(&raw)
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn find_year(header: Node) -> Option<i32> {
    let dates = header.descendants().filter(|n| local(n) == "date");
    for d in dates {
        let candidate = d.attribute("when").map(str::to_string).unwrap_or_else(|| text_of(d));
        let digits: String = candidate.chars().take_while(char::is_ascii_digit).collect();
        if digits.len() >= 4 {
            if let Ok(y) = digits[..4].parse() {
                return Some(y);
            }
        }
        // a year anywhere in free-text dates ("March 2016")
        if let Some(y) = candidate
            .split(|c: char| !c.is_ascii_digit())
            .find(|w| w.len() == 4)
            .and_then(|w| w.parse().ok())
        {
            return Some(y);
        }
    }
    None
}

fn build_div(div: Node, table: &SectionSynonyms, nested: &mut Vec<Section>) -> Section {
    let heading = child_elements(div)
        .find(|n| local(n) == "head")
        .map(text_of)
        .or_else(|| div.attribute("type").map(str::to_string))
        .unwrap_or_default();
    let mut b = SectionBuilder::new(heading);
    b.skip_first_head = child_elements(div).any(|n| local(&n) == "head");
    b.absorb_children(div, table, nested);
    b.finish(table)
}

struct SectionBuilder {
    heading: String,
    skip_first_head: bool,
    paragraphs: Vec<String>,
    footnotes: Vec<String>,
    captions: Vec<String>,
}

impl SectionBuilder {
    fn new(heading: String) -> Self {
        SectionBuilder { heading, skip_first_head: false, paragraphs: Vec::new(), footnotes: Vec::new(), captions: Vec::new() }
    }

    fn is_empty(&self) -> bool {
        self.paragraphs.is_empty() && self.footnotes.is_empty() && self.captions.is_empty()
    }

    fn absorb_children(&mut self, parent: Node, table: &SectionSynonyms, nested: &mut Vec<Section>) {
        for child in parent.children() {
            if child.is_text() {
                let t = collapse(child.text().unwrap_or(""));
                if !t.is_empty() {
                    self.paragraphs.push(t);
                }
            } else if child.is_element() {
                self.absorb(child, table, nested);
            }
        }
    }

    fn absorb(&mut self, node: Node, table: &SectionSynonyms, nested: &mut Vec<Section>) {
        match local(&node) {
            // the first head is the heading; later heads are text
            "head" if self.skip_first_head => self.skip_first_head = false,
            "p" | "ab" | "head" | "quote" | "formula" | "item" => self.push_paragraph(text_of(node)),
            "note" => {
                let t = text_of(node);
                if !t.is_empty() {
                    self.footnotes.push(t);
                }
            }
            "figure" => {
                let t = caption_of(node);
                if !t.is_empty() {
                    self.captions.push(t);
                }
            }
            "div" => {
                let mut deeper = Vec::new();
                let section = build_div(node, table, &mut deeper);
                nested.push(section);
                nested.extend(deeper);
            }
            "list" | "listBibl" => {
                for item in child_elements(node) {
                    self.push_paragraph(text_of(item));
                }
            }
            "lb" | "pb" | "cb" => {}
            other => {
                log::warn!("unrecognised TEI element <{other}>, keeping its text as body");
                self.push_paragraph(text_of(node));
            }
        }
    }

    fn push_paragraph(&mut self, t: String) {
        if !t.is_empty() {
            self.paragraphs.push(t);
        }
    }

    fn finish(self, table: &SectionSynonyms) -> Section {
        Section {
            label: table.normalize(&self.heading),
            raw_heading: self.heading,
            body: self.paragraphs.join("\n\n"),
            footnotes: self.footnotes,
            captions: self.captions,
            sentences: Vec::new(),
        }
    }
}

/// Figure/table caption: head and figDesc, then any table cell text.
fn caption_of(fig: Node) -> String {
    let mut parts = Vec::new();
    for c in child_elements(fig) {
        match local(&c) {
            "head" | "figDesc" => parts.push(text_of(c)),
            "table" => parts.push(
                c.descendants().filter(|n| local(n) == "cell").map(text_of).collect::<Vec<_>>().join(" | "),
            ),
            _ => {}
        }
    }
    if parts.iter().all(String::is_empty) {
        if let Some(label) = child_elements(fig).find(|n| local(n) == "label") {
            parts.push(text_of(label));
        }
    }
    parts.retain(|p| !p.is_empty());
    parts.join(" ")
}
