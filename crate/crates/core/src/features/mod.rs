//! Segment featurization: Tf-Idf over normalized tokens, or dense vectors
//! from an [`EmbeddingProvider`].

mod embedding;
mod normalize;
mod tfidf;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use embedding::{write_embeddings, EmbeddingProvider, EMBEDDING_MAGIC};
pub use normalize::{Stemmer, TextNormalizer};
pub use tfidf::{fit_tfidf, TfidfModel, DEFAULT_TFIDF_DIM};

use crate::corpus::Document;
use crate::error::{Error, Result};

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    dim: usize,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseVector {
    pub fn new(dim: usize, indices: Vec<u32>, values: Vec<f64>) -> Self {
        assert_eq!(indices.len(), values.len(), "index/value length mismatch");
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.last().map_or(true, |&i| (i as usize) < dim));
        SparseVector { dim, indices, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            out[i as usize] = v;
        }
        out
    }
}

/// Model input for one segment.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureVector {
    Sparse(SparseVector),
    Dense(Vec<f64>),
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        match self {
            FeatureVector::Sparse(s) => s.dim,
            FeatureVector::Dense(d) => d.len(),
        }
    }

    /// Calls `f(index, value)` for every stored entry. Dense vectors skip zeros.
    pub fn for_each_nonzero(&self, mut f: impl FnMut(usize, f64)) {
        match self {
            FeatureVector::Sparse(s) => {
                for (&i, &v) in s.indices.iter().zip(&s.values) {
                    f(i as usize, v);
                }
            }
            FeatureVector::Dense(d) => {
                for (i, &v) in d.iter().enumerate() {
                    if v != 0.0 {
                        f(i, v);
                    }
                }
            }
        }
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.for_each_nonzero(|i, v| acc += weights[i] * v);
        acc
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            FeatureVector::Sparse(s) => s.to_dense(),
            FeatureVector::Dense(d) => d.clone(),
        }
    }
}

impl From<SparseVector> for FeatureVector {
    fn from(v: SparseVector) -> Self {
        FeatureVector::Sparse(v)
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        FeatureVector::Dense(v)
    }
}

/// Persistable featurizer. Embedding providers are referenced by path and
/// must be [`attach`](Featurizer::attach)ed after deserialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Featurizer {
    Tfidf {
        normalizer: TextNormalizer,
        model: TfidfModel,
    },
    Embedding {
        normalizer: TextNormalizer,
        dim: usize,
        /// `None` means hashing fallback only.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        path: Option<PathBuf>,
        #[serde(skip)]
        provider: Option<Arc<EmbeddingProvider>>,
    },
}

impl Featurizer {
    /// Normalizes and fits Tf-Idf on the given training documents.
    pub fn fit_tfidf<'a>(
        docs: impl IntoIterator<Item = &'a Document>,
        normalizer: TextNormalizer,
        dim: usize,
    ) -> Result<Self> {
        let corpus: Vec<Vec<String>> = docs
            .into_iter()
            .flat_map(|d| d.segments.iter().map(|s| normalizer.normalize(&s.text)))
            .collect();
        Ok(Featurizer::Tfidf {
            normalizer,
            model: fit_tfidf(&corpus, dim)?,
        })
    }

    pub fn embedding(provider: EmbeddingProvider, path: Option<PathBuf>, normalizer: TextNormalizer) -> Self {
        Featurizer::Embedding {
            normalizer,
            dim: provider.dim(),
            path,
            provider: Some(Arc::new(provider)),
        }
    }

    /// Loads the embedding file (relative paths resolve against `base`).
    pub fn attach(&mut self, base: &Path) -> Result<()> {
        if let Featurizer::Embedding {
            normalizer,
            dim,
            path,
            provider,
        } = self
        {
            let loaded = match path {
                Some(p) => {
                    let full = if p.is_absolute() { p.clone() } else { base.join(&p) };
                    EmbeddingProvider::load(&full, *normalizer)?
                }
                None => EmbeddingProvider::hashing_only(*dim, *normalizer)?,
            };
            if loaded.dim() != *dim {
                return Err(Error::Storage(format!(
                    "embedding file has dimension {}, checkpoint expects {dim}",
                    loaded.dim()
                )));
            }
            *provider = Some(Arc::new(loaded));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Featurizer::Tfidf { model, .. } => model.dim,
            Featurizer::Embedding { dim, .. } => *dim,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Featurizer::Tfidf { .. } => "tfidf",
            Featurizer::Embedding { .. } => "embedding",
        }
    }

    /// One feature vector per segment, in segment order.
    pub fn featurize(&self, doc: &Document) -> Result<Vec<FeatureVector>> {
        match self {
            Featurizer::Tfidf { normalizer, model } => Ok(doc
                .segments
                .par_iter()
                .map(|s| model.transform(&normalizer.normalize(&s.text)).into())
                .collect()),
            Featurizer::Embedding { provider, .. } => {
                let provider = provider
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInput("embedding provider not attached".into()))?;
                Ok(doc
                    .segments
                    .par_iter()
                    .map(|s| provider.embed(&doc.doc_id, s).into())
                    .collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Segment, SegmentKind, SourceFormat};

    fn doc() -> Document {
        Document::new(
            "d",
            "de",
            SourceFormat::Json,
            vec![
                Segment::new("a", SegmentKind::Paragraph, "Wasser Wasser Energie"),
                Segment::new("b", SegmentKind::Paragraph, "Energie 2020"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn sparse_and_dense_agree() {
        let s = SparseVector::new(4, vec![1, 3], vec![2.0, -1.0]);
        let d = FeatureVector::Dense(s.to_dense());
        let s = FeatureVector::Sparse(s);
        let w = [1.0, 10.0, 100.0, 1000.0];
        assert_eq!(s.dot(&w), d.dot(&w));
        assert_eq!(s.dot(&w), -980.0);
    }

    #[test]
    fn tfidf_featurizer() {
        let d = doc();
        let f = Featurizer::fit_tfidf([&d], TextNormalizer::default(), 16).unwrap();
        let rows = f.featurize(&d).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.dim() == 16));
        let json = serde_json::to_string(&f).unwrap();
        let back: Featurizer = serde_json::from_str(&json).unwrap();
        assert_eq!(back.featurize(&d).unwrap(), rows);
    }

    #[test]
    fn embedding_featurizer_needs_attach() {
        let provider = EmbeddingProvider::hashing_only(8, TextNormalizer::default()).unwrap();
        let f = Featurizer::embedding(provider, None, TextNormalizer::default());
        let rows = f.featurize(&doc()).unwrap();
        let json = serde_json::to_string(&f).unwrap();
        let mut back: Featurizer = serde_json::from_str(&json).unwrap();
        assert!(back.featurize(&doc()).is_err());
        back.attach(Path::new(".")).unwrap();
        assert_eq!(back.featurize(&doc()).unwrap(), rows);
    }

    #[test]
    fn attach_loads_relative_path() {
        let dir = tempfile::tempdir().unwrap();
        let mut buf = Vec::new();
        write_embeddings(&mut buf, 2, &[("d/a".into(), vec![1.0, 0.0])]).unwrap();
        std::fs::write(dir.path().join("emb.bin"), buf).unwrap();
        let mut f = Featurizer::Embedding {
            normalizer: TextNormalizer::default(),
            dim: 2,
            path: Some("emb.bin".into()),
            provider: None,
        };
        f.attach(dir.path()).unwrap();
        let rows = f.featurize(&doc()).unwrap();
        assert_eq!(rows[0].to_dense(), vec![1.0, 0.0]);

        let mut wrong = Featurizer::Embedding {
            normalizer: TextNormalizer::default(),
            dim: 3,
            path: Some("emb.bin".into()),
            provider: None,
        };
        assert!(matches!(wrong.attach(dir.path()), Err(Error::Storage(_))));
    }
}
