//! Documents, requirement catalogs, annotations and dataset splits.
//!
//! All types here are plain immutable data once constructed. A [`Document`]
//! is an ordered list of typed text segments; a [`RequirementCatalog`] fixes
//! the column order of every label vector and score matrix in the crate.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Title,
    Paragraph,
    Enumeration,
    Table,
    Diagram,
    Footer,
    Header,
    Toc,
    Pagination,
    Other,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 10] = [
        SegmentKind::Title,
        SegmentKind::Paragraph,
        SegmentKind::Enumeration,
        SegmentKind::Table,
        SegmentKind::Diagram,
        SegmentKind::Footer,
        SegmentKind::Header,
        SegmentKind::Toc,
        SegmentKind::Pagination,
        SegmentKind::Other,
    ];

    /// Kinds that carry report content and are kept by default.
    pub const CONTENT: [SegmentKind; 5] = [
        SegmentKind::Title,
        SegmentKind::Paragraph,
        SegmentKind::Enumeration,
        SegmentKind::Table,
        SegmentKind::Diagram,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub kind: SegmentKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<u32>,
    #[serde(default)]
    pub order: usize,
}

impl Segment {
    pub fn new(id: impl Into<String>, kind: SegmentKind, text: impl Into<String>) -> Self {
        Segment {
            id: id.into(),
            kind,
            text: text.into(),
            page: None,
            order: 0,
        }
    }

    pub fn with_page(mut self, page: u32) -> Self {
        self.page = Some(page);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceFormat {
    #[default]
    Json,
    DnkHtml,
    PlainText,
}

/// A parsed report: segments in reading order.
///
/// `order` of every segment equals its index in `segments`; constructors
/// re-index to keep that true.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default = "default_language")]
    pub language: String,
    #[serde(default)]
    pub source_format: SourceFormat,
    pub segments: Vec<Segment>,
}

fn default_language() -> String {
    "de".to_string()
}

impl Document {
    /// Builds a document, assigning `order` from list position.
    ///
    /// Fails on an empty segment list or duplicate segment ids.
    pub fn new(
        doc_id: impl Into<String>,
        language: impl Into<String>,
        source_format: SourceFormat,
        segments: Vec<Segment>,
    ) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Schema("document has no segments".into()));
        }
        let doc = Document {
            doc_id: doc_id.into(),
            language: language.into(),
            source_format,
            segments,
        };
        doc.check_unique_ids()?;
        Ok(doc.reindexed())
    }

    pub(crate) fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.segments.len());
        for seg in &self.segments {
            if !seen.insert(seg.id.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate segment id {:?} in document {:?}",
                    seg.id, self.doc_id
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn reindexed(mut self) -> Self {
        for (i, seg) in self.segments.iter_mut().enumerate() {
            seg.order = i;
        }
        self
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn segment(&self, id: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.id == id)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub req_id: String,
    #[serde(default)]
    pub category: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub description: String,
}

impl Requirement {
    pub fn new(req_id: impl Into<String>, category: impl Into<String>, title: impl Into<String>) -> Self {
        Requirement {
            req_id: req_id.into(),
            category: category.into(),
            title: title.into(),
            description: String::new(),
        }
    }
}

/// The static requirement checklist. Its order defines label columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequirementCatalog {
    name: String,
    requirements: Vec<Requirement>,
    index: HashMap<String, usize>,
}

impl RequirementCatalog {
    pub fn new(name: impl Into<String>, requirements: Vec<Requirement>) -> Result<Self> {
        if requirements.is_empty() {
            return Err(Error::Schema("requirement catalog is empty".into()));
        }
        let mut index = HashMap::with_capacity(requirements.len());
        for (i, req) in requirements.iter().enumerate() {
            if index.insert(req.req_id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate requirement id {:?}", req.req_id)));
            }
        }
        Ok(RequirementCatalog {
            name: name.into(),
            requirements,
            index,
        })
    }

    /// Parses either a bare JSON array of requirements or `{name, requirements}`.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            List(Vec<Requirement>),
            Named { name: String, requirements: Vec<Requirement> },
        }
        match serde_json::from_slice::<Repr>(bytes).map_err(|e| Error::from_json(e, bytes))? {
            Repr::List(reqs) => RequirementCatalog::new("catalog", reqs),
            Repr::Named { name, requirements } => RequirementCatalog::new(name, requirements),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.requirements).expect("requirements serialize")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn requirements(&self) -> &[Requirement] {
        &self.requirements
    }

    pub fn len(&self) -> usize {
        self.requirements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requirements.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Requirement> {
        self.requirements.get(index)
    }

    pub fn index_of(&self, req_id: &str) -> Option<usize> {
        self.index.get(req_id).copied()
    }

    pub fn contains(&self, req_id: &str) -> bool {
        self.index.contains_key(req_id)
    }

    /// Requirements grouped by category, categories in first-seen order.
    pub fn by_category(&self) -> Vec<(&str, Vec<&Requirement>)> {
        let mut groups: Vec<(&str, Vec<&Requirement>)> = Vec::new();
        for req in &self.requirements {
            match groups.iter_mut().find(|(c, _)| *c == req.category) {
                Some((_, list)) => list.push(req),
                None => groups.push((req.category.as_str(), vec![req])),
            }
        }
        groups
    }

    /// Hash of the ordered requirement ids. Two catalogs with the same
    /// fingerprint produce aligned label vectors.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for req in &self.requirements {
            hasher.update(req.req_id.as_bytes());
            hasher.update([0u8]);
        }
        hex::encode(&hasher.finalize()[..16])
    }
}

impl Serialize for RequirementCatalog {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Named<'a> {
            name: &'a str,
            requirements: &'a [Requirement],
        }
        Named {
            name: &self.name,
            requirements: &self.requirements,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RequirementCatalog {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Named {
            name: String,
            requirements: Vec<Requirement>,
        }
        let named = Named::deserialize(deserializer)?;
        RequirementCatalog::new(named.name, named.requirements).map_err(serde::de::Error::custom)
    }
}

/// Ground-truth links between segments of one document and requirements.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub doc_id: String,
    pub links: BTreeSet<(String, String)>,
}

impl AnnotationSet {
    pub fn new(doc_id: impl Into<String>) -> Self {
        AnnotationSet {
            doc_id: doc_id.into(),
            links: BTreeSet::new(),
        }
    }

    pub fn insert(&mut self, segment_id: impl Into<String>, req_id: impl Into<String>) -> bool {
        self.links.insert((segment_id.into(), req_id.into()))
    }

    pub fn contains(&self, segment_id: &str, req_id: &str) -> bool {
        // BTreeSet<(String, String)> cannot be probed with borrowed tuples.
        self.links.iter().any(|(s, r)| s == segment_id && r == req_id)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Checks that every link resolves against `doc` and `catalog`.
    pub fn validate(&self, doc: &Document, catalog: &RequirementCatalog) -> Result<()> {
        if self.doc_id != doc.doc_id {
            return Err(Error::Schema(format!(
                "annotations for {:?} applied to document {:?}",
                self.doc_id, doc.doc_id
            )));
        }
        let ids: HashSet<&str> = doc.segments.iter().map(|s| s.id.as_str()).collect();
        for (seg, req) in &self.links {
            if !ids.contains(seg.as_str()) {
                return Err(Error::Schema(format!("annotation references unknown segment {seg:?}")));
            }
            if !catalog.contains(req) {
                return Err(Error::Schema(format!("annotation references unknown requirement {req:?}")));
            }
        }
        Ok(())
    }

    /// Dense N×M label matrix, rows in segment order, columns in catalog order.
    /// Links to unknown segments or requirements are ignored.
    pub fn label_matrix(&self, doc: &Document, catalog: &RequirementCatalog) -> Vec<Vec<u8>> {
        let mut rows = vec![vec![0u8; catalog.len()]; doc.len()];
        let positions: HashMap<&str, usize> = doc
            .segments
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        for (seg, req) in &self.links {
            if let (Some(&row), Some(col)) = (positions.get(seg.as_str()), catalog.index_of(req)) {
                rows[row][col] = 1;
            }
        }
        rows
    }

    /// Inverse of [`label_matrix`](Self::label_matrix).
    pub fn from_label_matrix(doc: &Document, catalog: &RequirementCatalog, rows: &[Vec<u8>]) -> Self {
        let mut set = AnnotationSet::new(doc.doc_id.clone());
        for (seg, row) in doc.segments.iter().zip(rows) {
            for (j, &v) in row.iter().enumerate() {
                if v != 0 {
                    set.insert(seg.id.clone(), catalog.requirements[j].req_id.clone());
                }
            }
        }
        set
    }
}

/// Binary relevance vector of one segment over the catalog.
pub fn label_vector(
    doc: &Document,
    seg_id: &str,
    ann: &AnnotationSet,
    catalog: &RequirementCatalog,
) -> Result<Vec<u8>> {
    if doc.segment(seg_id).is_none() {
        return Err(Error::NotFound(format!("segment {seg_id:?} in document {:?}", doc.doc_id)));
    }
    Ok(catalog
        .requirements()
        .iter()
        .map(|r| u8::from(ann.contains(seg_id, &r.req_id)))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const fn new(train: f64, valid: f64, test: f64) -> Self {
        SplitRatios { train, valid, test }
    }

    fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return Err(Error::InvalidInput(format!("split ratios must be positive, got {self}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("split ratios must sum to 1, got {self}")));
        }
        Ok(())
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios::new(0.65, 0.15, 0.20)
    }
}

impl fmt::Display for SplitRatios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.train, self.valid, self.test)
    }
}

/// Document-level train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.valid.len(), self.test.len())
    }
}

/// Shuffles `doc_ids` with `seed` and cuts them into three subsets.
///
/// Validation and test sizes are `floor(n * ratio)`; the remainder goes to
/// train.
pub fn make_split(doc_ids: &[String], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    ratios.validate()?;
    if doc_ids.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 documents to split, got {}",
            doc_ids.len()
        )));
    }
    let unique: HashSet<&String> = doc_ids.iter().collect();
    if unique.len() != doc_ids.len() {
        return Err(Error::InvalidInput("duplicate document ids".into()));
    }

    let n = doc_ids.len();
    // The epsilon keeps 100 * 0.15 from flooring to 14 on unlucky roundings.
    let n_valid = (n as f64 * ratios.valid + 1e-9).floor() as usize;
    let n_test = (n as f64 * ratios.test + 1e-9).floor() as usize;
    let n_train = n - n_valid - n_test;

    let mut shuffled = doc_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let test = shuffled.split_off(n_train + n_valid);
    let valid = shuffled.split_off(n_train);
    Ok(DatasetSplit {
        train: shuffled,
        valid,
        test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(n: usize) -> Document {
        let segs = (0..n)
            .map(|i| Segment::new(format!("s{i}"), SegmentKind::Paragraph, format!("text {i}")))
            .collect();
        Document::new("d", "de", SourceFormat::Json, segs).unwrap()
    }

    fn catalog(m: usize) -> RequirementCatalog {
        let reqs = (1..=m).map(|j| Requirement::new(format!("r{j}"), "environment", format!("req {j}"))).collect();
        RequirementCatalog::new("test", reqs).unwrap()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("doc{i}")).collect()
    }

    #[test]
    fn unannotated_segment_has_zero_labels() {
        let d = doc(3);
        let ann = AnnotationSet::new("d");
        assert_eq!(label_vector(&d, "s0", &ann, &catalog(4)).unwrap(), vec![0; 4]);
    }

    #[test]
    fn label_vector_length_follows_catalog() {
        let d = doc(1);
        let v = label_vector(&d, "s0", &AnnotationSet::new("d"), &catalog(89)).unwrap();
        assert_eq!(v.len(), 89);
    }

    #[test]
    fn label_vector_marks_linked_columns() {
        let d = doc(2);
        let mut ann = AnnotationSet::new("d");
        ann.insert("s1", "r2");
        ann.insert("s1", "r5");
        // Columns are r1..r6 in catalog order, so r2 -> 1 and r5 -> 4.
        let mut expected = vec![0u8; 6];
        for (j, req) in catalog(6).requirements().iter().enumerate() {
            if ann.links.contains(&("s1".to_string(), req.req_id.clone())) {
                expected[j] = 1;
            }
        }
        let got = label_vector(&d, "s1", &ann, &catalog(6)).unwrap();
        assert_eq!(got, expected);
        assert_eq!(got, vec![0, 1, 0, 0, 1, 0]);
    }

    #[test]
    fn label_vector_unknown_segment() {
        let err = label_vector(&doc(1), "nope", &AnnotationSet::new("d"), &catalog(2)).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
    }

    #[test]
    fn document_rejects_duplicates_and_empty() {
        let segs = vec![
            Segment::new("s1", SegmentKind::Paragraph, "a"),
            Segment::new("s1", SegmentKind::Paragraph, "b"),
        ];
        assert!(matches!(Document::new("d", "de", SourceFormat::Json, segs), Err(Error::Schema(_))));
        assert!(Document::new("d", "de", SourceFormat::Json, vec![]).is_err());
    }

    #[test]
    fn catalog_rejects_duplicate_ids() {
        let reqs = vec![Requirement::new("a", "x", "t"), Requirement::new("a", "y", "u")];
        assert!(RequirementCatalog::new("c", reqs).is_err());
    }

    #[test]
    fn catalog_json_forms() {
        let list = br#"[{"req_id":"GRI-305-1","category":"environment","title":"Direct emissions"}]"#;
        let cat = RequirementCatalog::from_json(list).unwrap();
        assert_eq!(cat.len(), 1);
        let named = serde_json::to_vec(&cat).unwrap();
        let back: RequirementCatalog = serde_json::from_slice(&named).unwrap();
        assert_eq!(back, cat);
        assert_eq!(back.fingerprint(), cat.fingerprint());
    }

    #[test]
    fn fingerprint_depends_on_order() {
        let a = catalog(3);
        let mut reqs = a.requirements().to_vec();
        reqs.swap(0, 1);
        let b = RequirementCatalog::new("test", reqs).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn split_sizes_65_15_20() {
        let s = make_split(&ids(100), SplitRatios::new(0.65, 0.15, 0.20), 42).unwrap();
        assert_eq!(s.sizes(), (65, 15, 20));
    }

    #[test]
    fn split_minimal() {
        let third = 1.0 / 3.0;
        let s = make_split(&ids(3), SplitRatios::new(third, third, third), 1).unwrap();
        assert_eq!(s.sizes(), (1, 1, 1));
    }

    #[test]
    fn split_is_deterministic() {
        let a = make_split(&ids(50), SplitRatios::new(0.7, 0.15, 0.15), 42).unwrap();
        let b = make_split(&ids(50), SplitRatios::new(0.7, 0.15, 0.15), 42).unwrap();
        assert_eq!(a, b);
        let c = make_split(&ids(50), SplitRatios::new(0.7, 0.15, 0.15), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_errors() {
        assert!(matches!(make_split(&ids(2), SplitRatios::default(), 0), Err(Error::InvalidInput(_))));
        assert!(make_split(&ids(10), SplitRatios::new(0.5, 0.5, 0.5), 0).is_err());
        assert!(make_split(&ids(10), SplitRatios::new(1.0, 0.0, 0.0), 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn split_is_partition(n in 3usize..200, a in 1u32..100, b in 1u32..100, c in 1u32..100, seed: u64) {
            let total = f64::from(a + b + c);
            let ratios = SplitRatios::new(f64::from(a) / total, f64::from(b) / total, 1.0 - f64::from(a + b) / total);
            prop_assume!(ratios.test > 0.0);
            let all = ids(n);
            let s = make_split(&all, ratios, seed).unwrap();
            let mut seen: Vec<&String> = s.train.iter().chain(&s.valid).chain(&s.test).collect();
            prop_assert_eq!(seen.len(), n);
            seen.sort();
            seen.dedup();
            prop_assert_eq!(seen.len(), n);
            prop_assert!((s.valid.len() as f64 - n as f64 * ratios.valid).abs() <= 1.0);
            prop_assert!((s.test.len() as f64 - n as f64 * ratios.test).abs() <= 1.0);
        }

        #[test]
        fn label_matrix_round_trips(n in 1usize..12, m in 1usize..8, bits in proptest::collection::vec(any::<bool>(), 96)) {
            let d = doc(n);
            let cat = catalog(m);
            let mut ann = AnnotationSet::new("d");
            for i in 0..n {
                for j in 0..m {
                    if bits[i * 8 + j] {
                        ann.insert(format!("s{i}"), format!("r{}", j + 1));
                    }
                }
            }
            let rows: Vec<Vec<u8>> = d.segments.iter()
                .map(|s| label_vector(&d, &s.id, &ann, &cat).unwrap())
                .collect();
            prop_assert_eq!(&rows, &ann.label_matrix(&d, &cat));
            prop_assert_eq!(AnnotationSet::from_label_matrix(&d, &cat, &rows), ann);
        }
    }
}
