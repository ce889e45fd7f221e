//! Annotated collections of documents and their train/valid/test partitions.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{make_split, AnnotationSet, DatasetSplit, Document, RequirementCatalog, SplitRatios};
use crate::error::{Error, Result};
use crate::ingest::{parse_normalized_jsonl, preprocess, IngestConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDocument {
    pub document: Document,
    pub annotations: AnnotationSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub catalog: RequirementCatalog,
    pub docs: Vec<LabeledDocument>,
}

impl Dataset {
    /// Pairs documents with their annotation sets by `doc_id`. Documents
    /// without annotations get an empty set.
    pub fn new(catalog: RequirementCatalog, documents: Vec<Document>, annotations: Vec<AnnotationSet>) -> Result<Self> {
        let mut seen = HashSet::new();
        for d in &documents {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(Error::Schema(format!("duplicate document id {:?}", d.doc_id)));
            }
        }
        let mut by_doc: HashMap<String, AnnotationSet> = HashMap::new();
        for a in annotations {
            if !seen.contains(a.doc_id.as_str()) {
                return Err(Error::Schema(format!("annotations for unknown document {:?}", a.doc_id)));
            }
            let entry = by_doc.entry(a.doc_id.clone()).or_insert_with(|| AnnotationSet::new(a.doc_id.clone()));
            entry.links.extend(a.links);
        }
        let docs = documents
            .into_iter()
            .map(|document| {
                let annotations = by_doc
                    .remove(&document.doc_id)
                    .unwrap_or_else(|| AnnotationSet::new(document.doc_id.clone()));
                annotations.validate(&document, &catalog)?;
                Ok(LabeledDocument { document, annotations })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { catalog, docs })
    }

    /// Reads a catalog (JSON), documents (JSON lines) and annotations (JSON lines).
    pub fn from_bytes(catalog: &[u8], documents: &[u8], annotations: &[u8]) -> Result<Self> {
        let catalog = RequirementCatalog::from_json(catalog)?;
        let documents = parse_normalized_jsonl(documents)?;
        let annotations = parse_annotations_jsonl(annotations)?;
        Dataset::new(catalog, documents, annotations)
    }

    /// Applies [`preprocess`] to every document. Links to dropped segments are
    /// removed, as are documents left without segments.
    pub fn preprocess(&self, cfg: &IngestConfig) -> Dataset {
        let docs = self
            .docs
            .iter()
            .filter_map(|ld| {
                let document = preprocess(&ld.document, cfg);
                if document.is_empty() {
                    return None;
                }
                let mut annotations = AnnotationSet::new(document.doc_id.clone());
                annotations.links = ld
                    .annotations
                    .links
                    .iter()
                    .filter(|(seg, _)| document.segment(seg).is_some())
                    .cloned()
                    .collect();
                Some(LabeledDocument { document, annotations })
            })
            .collect();
        Dataset {
            catalog: self.catalog.clone(),
            docs,
        }
    }

    pub fn doc_ids(&self) -> Vec<String> {
        self.docs.iter().map(|d| d.document.doc_id.clone()).collect()
    }

    pub fn split(&self, ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
        make_split(&self.doc_ids(), ratios, seed)
    }

    /// Documents with the given ids, in the order of `ids`.
    pub fn select(&self, ids: &[String]) -> Result<Vec<&LabeledDocument>> {
        let index: HashMap<&str, &LabeledDocument> =
            self.docs.iter().map(|d| (d.document.doc_id.as_str(), d)).collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::NotFound(format!("document {id:?}")))
            })
            .collect()
    }

    pub fn segment_count(&self) -> usize {
        self.docs.iter().map(|d| d.document.len()).sum()
    }

    /// Fraction of segments linked to at least one requirement.
    pub fn positive_rate(&self) -> f64 {
        let total = self.segment_count();
        if total == 0 {
            return 0.0;
        }
        let positive: usize = self
            .docs
            .iter()
            .map(|d| {
                d.document
                    .segments
                    .iter()
                    .filter(|s| d.annotations.links.iter().any(|(seg, _)| seg == &s.id))
                    .count()
            })
            .sum();
        positive as f64 / total as f64
    }
}

/// One [`AnnotationSet`] per line: `{"doc_id": ..., "links": [[segment_id, req_id], ...]}`.
pub fn parse_annotations_jsonl(bytes: &[u8]) -> Result<Vec<AnnotationSet>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in bytes.split(|&b| b == b'\n') {
        let start = offset;
        offset += line.len() + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let set: AnnotationSet = serde_json::from_slice(line).map_err(|e| match Error::from_json(e, line) {
            Error::Parse { offset, message } => Error::Parse {
                offset: start + offset,
                message,
            },
            other => other,
        })?;
        out.push(set);
    }
    Ok(out)
}

pub fn annotations_to_jsonl<'a>(sets: impl IntoIterator<Item = &'a AnnotationSet>) -> String {
    let mut out = String::new();
    for s in sets {
        out.push_str(&serde_json::to_string(s).expect("annotations serialize"));
        out.push('\n');
    }
    out
}
