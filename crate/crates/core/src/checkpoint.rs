//! Trained pipeline: catalog, featurizer and classifier, persisted as a
//! self-describing binary container.
//!
//! ```text
//! magic        b"RRCK"
//! format       u32 LE (currently 1)
//! header_len   u64 LE
//! header       JSON: {version, architecture, catalog, catalog_fingerprint,
//!                     ingest, featurizer, classifier, param_count}
//! params       param_count × f64 LE
//! ```

use std::io::Read;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, RequirementCatalog};
use crate::error::{Error, Result};
use crate::features::Featurizer;
use crate::ingest::IngestConfig;
use crate::models::Classifier;
use crate::ranking::ScoreMatrix;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RRCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub catalog: RequirementCatalog,
    pub ingest: IngestConfig,
    pub featurizer: Featurizer,
    pub classifier: Classifier,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    architecture: String,
    catalog: RequirementCatalog,
    catalog_fingerprint: String,
    ingest: IngestConfig,
    featurizer: Featurizer,
    classifier: Classifier,
    param_count: u64,
}

impl Checkpoint {
    pub fn new(
        catalog: RequirementCatalog,
        ingest: IngestConfig,
        featurizer: Featurizer,
        classifier: Classifier,
    ) -> Result<Self> {
        if classifier.output_dim() != catalog.len() {
            return Err(Error::Shape {
                expected: catalog.len(),
                actual: classifier.output_dim(),
            });
        }
        if classifier.input_dim() != featurizer.dim() {
            return Err(Error::Shape {
                expected: featurizer.dim(),
                actual: classifier.input_dim(),
            });
        }
        Ok(Checkpoint {
            catalog,
            ingest,
            featurizer,
            classifier,
        })
    }

    pub fn architecture(&self) -> String {
        format!("{}+{}", self.featurizer.kind(), self.classifier.architecture())
    }

    pub fn fingerprint(&self) -> String {
        self.catalog.fingerprint()
    }

    /// Fails unless `catalog` has the same ordered requirement ids.
    pub fn check_catalog(&self, catalog: &RequirementCatalog) -> Result<()> {
        let (ours, theirs) = (self.fingerprint(), catalog.fingerprint());
        if ours != theirs {
            return Err(Error::FingerprintMismatch {
                checkpoint: ours,
                catalog: theirs,
            });
        }
        Ok(())
    }

    /// Relevance scores for every segment of an already preprocessed document.
    pub fn score(&self, doc: &Document) -> Result<ScoreMatrix> {
        let features = self.featurizer.featurize(doc)?;
        let rows: Vec<Vec<f64>> = features
            .par_iter()
            .map(|x| self.classifier.predict(x))
            .collect::<Result<_>>()?;
        ScoreMatrix::new(
            doc.doc_id.clone(),
            doc.segments.iter().map(|s| s.id.clone()).collect(),
            self.catalog.requirements().iter().map(|r| r.req_id.clone()).collect(),
            rows,
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            architecture: self.architecture(),
            catalog: self.catalog.clone(),
            catalog_fingerprint: self.fingerprint(),
            ingest: self.ingest.clone(),
            featurizer: self.featurizer.clone(),
            classifier: self.classifier.clone(),
            param_count: self.classifier.param_count() as u64,
        };
        let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
        let params = self.classifier.params();
        let mut out = Vec::with_capacity(16 + json.len() + 8 * params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    /// Decodes a checkpoint. Embedding featurizers are left detached; see
    /// [`Checkpoint::load`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Storage(format!("invalid checkpoint: {msg}"));
        let mut cursor = bytes;
        let mut magic = [0u8; 4];
        let mut word = [0u8; 4];
        let mut long = [0u8; 8];
        cursor.read_exact(&mut magic).map_err(|_| bad("truncated"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        cursor.read_exact(&mut word).map_err(|_| bad("truncated"))?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        cursor.read_exact(&mut long).map_err(|_| bad("truncated"))?;
        let header_len = u64::from_le_bytes(long) as usize;
        if header_len > cursor.len() {
            return Err(bad("header length exceeds file"));
        }
        let (json, rest) = cursor.split_at(header_len);
        let header: Header =
            serde_json::from_slice(json).map_err(|e| bad(&format!("header: {e}")))?;
        if header.catalog.fingerprint() != header.catalog_fingerprint {
            return Err(bad("catalog fingerprint does not match stored catalog"));
        }
        let expected = header.param_count as usize;
        if rest.len() != expected * 8 {
            return Err(bad(&format!("expected {expected} parameters, found {} bytes", rest.len())));
        }
        let params: Vec<f64> = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut classifier = header.classifier;
        classifier.set_params(params)?;
        Checkpoint::new(header.catalog, header.ingest, header.featurizer, classifier)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())
            .map_err(|e| Error::Storage(format!("cannot write checkpoint {}: {e}", path.display())))
    }

    /// Reads a checkpoint and attaches embedding files relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Storage(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let mut ckpt = Checkpoint::from_bytes(&bytes)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        ckpt.featurizer.attach(base)?;
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Requirement, Segment, SegmentKind, SourceFormat};
    use crate::features::TextNormalizer;
    use crate::models::{LogisticEnsemble, MlpClassifier};

    fn catalog() -> RequirementCatalog {
        RequirementCatalog::new(
            "c",
            vec![Requirement::new("r1", "env", "Wasser"), Requirement::new("r2", "soc", "Arbeit")],
        )
        .unwrap()
    }

    fn doc() -> Document {
        Document::new(
            "d",
            "de",
            SourceFormat::Json,
            vec![
                Segment::new("a", SegmentKind::Paragraph, "Wasserverbrauch sinkt"),
                Segment::new("b", SegmentKind::Paragraph, "Arbeitssicherheit steigt"),
            ],
        )
        .unwrap()
    }

    fn mlp_checkpoint() -> Checkpoint {
        let f = Featurizer::fit_tfidf([&doc()], TextNormalizer::default(), 32).unwrap();
        let mlp = MlpClassifier::new(32, Some(7), 2, 0.3, 5).unwrap();
        Checkpoint::new(catalog(), IngestConfig::default(), f, Classifier::Mlp(mlp)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let ckpt = mlp_checkpoint();
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        assert_eq!(back, ckpt);
        let a = ckpt.score(&doc()).unwrap();
        let b = back.score(&doc()).unwrap();
        for r in 0..a.n_segments() {
            for (x, y) in a.row(r).iter().zip(b.row(r)) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn save_and_load_logistic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let f = Featurizer::fit_tfidf([&doc()], TextNormalizer::default(), 32).unwrap();
        let lr = LogisticEnsemble::new(32, 2, 0.1).unwrap();
        let ckpt = Checkpoint::new(catalog(), IngestConfig::default(), f, Classifier::Logistic(lr)).unwrap();
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
    }

    #[test]
    fn header_is_self_describing() {
        let bytes = mlp_checkpoint().to_bytes();
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
        assert_eq!(header["version"], 1);
        assert_eq!(header["architecture"], "tfidf+mlp(hidden=7, dropout=0.3)");
        assert_eq!(header["classifier"]["hidden_dim"], 7);
        assert_eq!(header["catalog_fingerprint"], catalog().fingerprint());
    }

    #[test]
    fn corrupt_checkpoints() {
        let bytes = mlp_checkpoint().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]).is_err());
        assert!(Checkpoint::from_bytes(b"RRCK").is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version).is_err());
    }

    #[test]
    fn catalog_mismatch_detected() {
        let ckpt = mlp_checkpoint();
        ckpt.check_catalog(&catalog()).unwrap();
        let other = RequirementCatalog::new(
            "c",
            vec![Requirement::new("r2", "soc", "Arbeit"), Requirement::new("r1", "env", "Wasser")],
        )
        .unwrap();
        assert!(matches!(ckpt.check_catalog(&other), Err(Error::FingerprintMismatch { .. })));
    }

    #[test]
    fn shape_validation() {
        let f = Featurizer::fit_tfidf([&doc()], TextNormalizer::default(), 32).unwrap();
        let mlp = MlpClassifier::new(32, None, 3, 0.0, 0).unwrap();
        assert!(Checkpoint::new(catalog(), IngestConfig::default(), f, Classifier::Mlp(mlp)).is_err());
    }
}
