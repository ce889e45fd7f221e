//! Report ingestion: normalized JSON, plain text and DNK-style HTML, plus
//! the textual clean-up applied before featurization.
//!
//! External layout parsers (PDF, OCR) are expected to emit the normalized
//! JSON format:
//!
//! ```text
//! {"doc_id": "...", "language": "de",
//!  "segments": [{"id": "s1", "kind": "paragraph", "text": "...", "page": 3, "order": 0}]}
//! ```
//!
//! `order` in the input is ignored; file order is reading order.

use std::collections::{BTreeSet, HashMap};
use std::str::FromStr;

use scraper::{ElementRef, Html, Node};
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationSet, Document, RequirementCatalog, Segment, SegmentKind, SourceFormat};
use crate::error::{Error, Result};

/// Input formats accepted on the command line and by the service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    Json,
    DnkHtml,
    Text,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(InputFormat::Json),
            "dnk-html" | "dnk_html" | "html" => Ok(InputFormat::DnkHtml),
            "text" | "txt" => Ok(InputFormat::Text),
            other => Err(Error::InvalidInput(format!(
                "unknown format {other:?}; expected json, dnk-html or text"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub considered_kinds: BTreeSet<SegmentKind>,
    pub dehyphenate: bool,
    pub min_chars: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            considered_kinds: SegmentKind::CONTENT.into_iter().collect(),
            dehyphenate: true,
            min_chars: 1,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.considered_kinds.is_empty() {
            return Err(Error::InvalidInput("considered_kinds must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawDocument {
    doc_id: String,
    #[serde(default)]
    language: Option<String>,
    segments: Vec<RawSegment>,
}

#[derive(Deserialize)]
struct RawSegment {
    id: String,
    kind: SegmentKind,
    text: String,
    #[serde(default)]
    page: Option<u32>,
}

/// Parses one document in the normalized JSON format.
pub fn parse_normalized_json(bytes: &[u8]) -> Result<Document> {
    let raw: RawDocument = serde_json::from_slice(bytes).map_err(|e| Error::from_json(e, bytes))?;
    let segments = raw
        .segments
        .into_iter()
        .map(|s| Segment {
            id: s.id,
            kind: s.kind,
            text: s.text,
            page: s.page,
            order: 0,
        })
        .collect();
    Document::new(
        raw.doc_id,
        raw.language.unwrap_or_else(|| "de".into()),
        SourceFormat::Json,
        segments,
    )
}

/// Parses newline-delimited normalized JSON, one document per line.
pub fn parse_normalized_jsonl(bytes: &[u8]) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut offset = 0;
    for line in bytes.split(|b| *b == b'\n') {
        let start = offset;
        offset += line.len() + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        docs.push(parse_normalized_json(line).map_err(|e| match e {
            Error::Parse { offset, message } => Error::Parse {
                offset: start + offset,
                message,
            },
            other => other,
        })?);
    }
    Ok(docs)
}

/// One paragraph segment per blank-line separated block.
pub fn parse_plain_text(bytes: &[u8], doc_id: &str) -> Result<Document> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        offset: e.valid_up_to(),
        message: "input is not valid UTF-8".into(),
    })?;
    let text = text.replace("\r\n", "\n");
    let mut segments = Vec::new();
    let mut block: Vec<&str> = Vec::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !block.is_empty() {
                let id = format!("p{}", segments.len());
                segments.push(Segment::new(id, SegmentKind::Paragraph, block.join("\n")));
                block.clear();
            }
        } else {
            block.push(line);
        }
    }
    Document::new(doc_id, "de", SourceFormat::PlainText, segments)
}

/// Maps whitespace-normalized section headings to requirement ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HeadingMap {
    entries: HashMap<String, String>,
}

fn normalize_heading(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl HeadingMap {
    /// Each requirement is reachable by its title and by its description.
    pub fn from_catalog(catalog: &RequirementCatalog) -> Self {
        let mut entries = HashMap::new();
        for req in catalog.requirements() {
            for text in [&req.title, &req.description] {
                let key = normalize_heading(text);
                if !key.is_empty() {
                    entries.entry(key).or_insert_with(|| req.req_id.clone());
                }
            }
        }
        HeadingMap { entries }
    }

    /// Adds or replaces entries from a JSON object `{heading: req_id}`.
    pub fn with_overrides(mut self, overrides_json: &[u8], catalog: &RequirementCatalog) -> Result<Self> {
        let overrides: HashMap<String, String> =
            serde_json::from_slice(overrides_json).map_err(|e| Error::from_json(e, overrides_json))?;
        for (heading, req_id) in overrides {
            if !catalog.contains(&req_id) {
                return Err(Error::UnknownRequirement(req_id));
            }
            self.entries.insert(normalize_heading(&heading), req_id);
        }
        Ok(self)
    }

    pub fn insert(&mut self, heading: &str, req_id: impl Into<String>) {
        self.entries.insert(normalize_heading(heading), req_id.into());
    }

    pub fn lookup(&self, heading: &str) -> Option<&str> {
        self.entries.get(&normalize_heading(heading)).map(String::as_str)
    }
}

/// Result of parsing a DNK-style report.
#[derive(Debug, Clone, PartialEq)]
pub struct DnkParse {
    pub document: Document,
    pub annotations: AnnotationSet,
    /// Headings that matched no requirement. Their sections were skipped.
    pub unknown_headings: Vec<String>,
}

enum Section {
    None,
    Skipped,
    Active(String),
}

struct DnkWalker<'a> {
    headings: &'a HeadingMap,
    section: Section,
    segments: Vec<Segment>,
    links: Vec<(String, String)>,
    unknown: Vec<String>,
    inline: String,
}

impl DnkWalker<'_> {
    fn emit(&mut self, kind: SegmentKind, text: String) {
        let Section::Active(req) = &self.section else { return };
        let text = text.trim();
        if text.is_empty() {
            return;
        }
        let id = format!("s{}", self.segments.len());
        self.links.push((id.clone(), req.clone()));
        self.segments.push(Segment::new(id, kind, text));
    }

    fn flush_inline(&mut self) {
        let text = normalize_heading(&std::mem::take(&mut self.inline));
        self.emit(SegmentKind::Paragraph, text);
    }

    fn walk(&mut self, element: ElementRef<'_>) {
        for child in element.children() {
            match child.value() {
                Node::Text(t) => self.inline.push_str(t),
                Node::Element(_) => {
                    let el = ElementRef::wrap(child).expect("element node");
                    self.visit(el);
                }
                _ => {}
            }
        }
    }

    fn visit(&mut self, el: ElementRef<'_>) {
        let name = el.value().name();
        match name {
            "script" | "style" | "noscript" | "head" | "template" | "nav" => {}
            "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => {
                self.flush_inline();
                let heading = normalize_heading(&element_text(el));
                self.section = match self.headings.lookup(&heading) {
                    Some(req) => Section::Active(req.to_string()),
                    None => {
                        if !heading.is_empty() {
                            self.unknown.push(heading);
                        }
                        Section::Skipped
                    }
                };
            }
            "p" | "blockquote" | "pre" => {
                self.flush_inline();
                self.emit(SegmentKind::Paragraph, normalize_heading(&element_text(el)));
            }
            "ul" | "ol" | "dl" => {
                self.flush_inline();
                let items: Vec<String> = el
                    .children()
                    .filter_map(ElementRef::wrap)
                    .map(|li| normalize_heading(&element_text(li)))
                    .filter(|t| !t.is_empty())
                    .collect();
                self.emit(SegmentKind::Enumeration, items.join("\n"));
            }
            "table" => {
                self.flush_inline();
                self.emit(SegmentKind::Table, table_text(el));
            }
            "figure" | "img" => {
                self.flush_inline();
                let mut text = normalize_heading(&element_text(el));
                if text.is_empty() {
                    text = el.value().attr("alt").unwrap_or_default().to_string();
                    for img in el.descendants().filter_map(ElementRef::wrap) {
                        if let Some(alt) = img.value().attr("alt") {
                            text.push(' ');
                            text.push_str(alt);
                        }
                    }
                }
                self.emit(SegmentKind::Diagram, text);
            }
            "br" => self.inline.push('\n'),
            "span" | "a" | "strong" | "b" | "em" | "i" | "u" | "sup" | "sub" | "small" | "abbr" | "mark" => {
                self.inline.push_str(&element_text(el));
            }
            _ => {
                self.flush_inline();
                self.walk(el);
                self.flush_inline();
            }
        }
    }
}

fn element_text(el: ElementRef<'_>) -> String {
    el.text().collect::<Vec<_>>().join(" ")
}

fn table_text(table: ElementRef<'_>) -> String {
    let mut rows = Vec::new();
    for row in table.descendants().filter_map(ElementRef::wrap) {
        if row.value().name() != "tr" {
            continue;
        }
        let cells: Vec<String> = row
            .children()
            .filter_map(ElementRef::wrap)
            .filter(|c| matches!(c.value().name(), "td" | "th"))
            .map(|c| normalize_heading(&element_text(c)))
            .collect();
        if cells.iter().any(|c| !c.is_empty()) {
            rows.push(cells.join(" | "));
        }
    }
    rows.join("\n")
}

/// Parses a DNK-style HTML report.
///
/// Every text block following a recognized heading becomes a segment linked
/// to that heading's requirement. Sections under unrecognized headings are
/// skipped and their headings returned in [`DnkParse::unknown_headings`].
pub fn parse_dnk_html(bytes: &[u8], doc_id: &str, headings: &HeadingMap) -> Result<DnkParse> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        offset: e.valid_up_to(),
        message: "input is not valid UTF-8".into(),
    })?;
    let html = Html::parse_document(text);
    let mut walker = DnkWalker {
        headings,
        section: Section::None,
        segments: Vec::new(),
        links: Vec::new(),
        unknown: Vec::new(),
        inline: String::new(),
    };
    walker.walk(html.root_element());
    walker.flush_inline();

    let document = Document::new(doc_id, "de", SourceFormat::DnkHtml, walker.segments)?;
    let mut annotations = AnnotationSet::new(doc_id);
    for (seg, req) in walker.links {
        annotations.insert(seg, req);
    }
    Ok(DnkParse {
        document,
        annotations,
        unknown_headings: walker.unknown,
    })
}

/// Parsed input plus any annotations recovered from the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub document: Document,
    pub annotations: Option<AnnotationSet>,
    pub unknown_headings: Vec<String>,
}

/// Dispatches on `format`. `doc_id` names documents whose format carries no id.
pub fn parse_input(bytes: &[u8], format: InputFormat, doc_id: &str, headings: &HeadingMap) -> Result<Ingested> {
    match format {
        InputFormat::Json => Ok(Ingested {
            document: parse_normalized_json(bytes)?,
            annotations: None,
            unknown_headings: Vec::new(),
        }),
        InputFormat::Text => Ok(Ingested {
            document: parse_plain_text(bytes, doc_id)?,
            annotations: None,
            unknown_headings: Vec::new(),
        }),
        InputFormat::DnkHtml => {
            let parsed = parse_dnk_html(bytes, doc_id, headings)?;
            Ok(Ingested {
                document: parsed.document,
                annotations: Some(parsed.annotations),
                unknown_headings: parsed.unknown_headings,
            })
        }
    }
}

/// Joins words broken across lines by a hyphen.
///
/// `letter-\nletter` is joined without the hyphen; when either neighbour is
/// not a letter (`CO2-\nBilanz`) the hyphen stays and only the line break
/// goes.
pub fn dehyphenate(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '-' {
            if let Some(next) = line_break_end(&chars, i + 1) {
                let prev = out.chars().next_back();
                let after = chars.get(next).copied();
                if let (Some(p), Some(a)) = (prev, after) {
                    if !p.is_whitespace() && !a.is_whitespace() {
                        if !(p.is_alphabetic() && a.is_alphabetic()) {
                            out.push('-');
                        }
                        i = next;
                        continue;
                    }
                }
            }
        }
        out.push(c);
        i += 1;
    }
    out
}

/// If `chars[start..]` begins with `[ \t]*\r?\n[ \t]*`, returns the index
/// just past it.
fn line_break_end(chars: &[char], start: usize) -> Option<usize> {
    let mut i = start;
    while matches!(chars.get(i), Some(' ' | '\t')) {
        i += 1;
    }
    if chars.get(i) == Some(&'\r') {
        i += 1;
    }
    if chars.get(i) != Some(&'\n') {
        return None;
    }
    i += 1;
    while matches!(chars.get(i), Some(' ' | '\t')) {
        i += 1;
    }
    Some(i)
}

/// Drops non-content segment kinds, repairs hyphenation, trims text and
/// drops segments shorter than `min_chars`. Surviving segments keep their
/// relative order and are re-indexed.
///
/// The result may have no segments if nothing survives filtering.
pub fn preprocess(doc: &Document, cfg: &IngestConfig) -> Document {
    let segments = doc
        .segments
        .iter()
        .filter(|s| cfg.considered_kinds.contains(&s.kind))
        .filter_map(|s| {
            let text = if cfg.dehyphenate { dehyphenate(&s.text) } else { s.text.clone() };
            let text = text.trim().to_string();
            (text.chars().count() >= cfg.min_chars.max(1)).then(|| Segment { text, ..s.clone() })
        })
        .collect();
    Document {
        doc_id: doc.doc_id.clone(),
        language: doc.language.clone(),
        source_format: doc.source_format,
        segments,
    }
    .reindexed()
}
