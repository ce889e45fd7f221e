use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::SparseVector;
use crate::error::{Error, Result};

pub const DEFAULT_TFIDF_DIM: usize = 8000;

/// Fitted Tf-Idf vocabulary and inverse document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub dim: usize,
    pub vocab: BTreeMap<String, usize>,
    pub idf: Vec<f64>,
    pub doc_count: usize,
}

/// Fits a vocabulary of at most `dim` terms.
///
/// Terms are ranked by collection frequency, ties broken lexicographically.
/// `idf(t) = ln((1 + D) / (1 + df(t))) + 1`.
pub fn fit_tfidf<S: AsRef<str>>(corpus: &[Vec<S>], dim: usize) -> Result<TfidfModel> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("cannot fit Tf-Idf on an empty corpus".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidInput("Tf-Idf dimension must be positive".into()));
    }
    let mut collection: HashMap<&str, usize> = HashMap::new();
    let mut document: HashMap<&str, usize> = HashMap::new();
    for tokens in corpus {
        let mut seen = HashSet::new();
        for t in tokens {
            let t = t.as_ref();
            *collection.entry(t).or_default() += 1;
            if seen.insert(t) {
                *document.entry(t).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = collection.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(dim);

    let total = corpus.len() as f64;
    let mut vocab = BTreeMap::new();
    let mut idf = Vec::with_capacity(ranked.len());
    for (column, (term, _)) in ranked.into_iter().enumerate() {
        let df = document[term] as f64;
        idf.push(((1.0 + total) / (1.0 + df)).ln() + 1.0);
        vocab.insert(term.to_string(), column);
    }
    Ok(TfidfModel {
        dim,
        vocab,
        idf,
        doc_count: corpus.len(),
    })
}

impl TfidfModel {
    /// Raw-count tf times idf, L2-normalized. All out-of-vocabulary input
    /// gives the zero vector.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(&col) = self.vocab.get(t.as_ref()) {
                *counts.entry(col).or_default() += 1.0;
            }
        }
        let mut indices = Vec::with_capacity(counts.len());
        let mut values = Vec::with_capacity(counts.len());
        for (col, tf) in counts {
            indices.push(col as u32);
            values.push(tf * self.idf[col]);
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        SparseVector::new(self.dim, indices, values)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("tfidf model serializes")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let model: TfidfModel = serde_json::from_slice(bytes).map_err(|e| Error::from_json(e, bytes))?;
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.vocab.len() > self.dim || self.idf.len() != self.vocab.len() {
            return Err(Error::Schema("Tf-Idf vocabulary and idf sizes disagree".into()));
        }
        let mut seen = vec![false; self.vocab.len()];
        for &col in self.vocab.values() {
            match seen.get_mut(col) {
                Some(slot) if !*slot => *slot = true,
                _ => return Err(Error::Schema(format!("Tf-Idf column {col} out of range or repeated"))),
            }
        }
        if self.idf.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Schema("Tf-Idf idf values must be positive".into()));
        }
        Ok(())
    }
}
