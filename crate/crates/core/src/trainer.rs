//! Training runs with validation-based early stopping, and grid search.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::corpus::{AnnotationSet, RequirementCatalog};
use crate::dataset::LabeledDocument;
use crate::error::{Error, Result};
use crate::features::{EmbeddingProvider, FeatureVector, Featurizer, TextNormalizer, DEFAULT_TFIDF_DIM};
use crate::ingest::IngestConfig;
use crate::metrics::{evaluate, MetricsReport};
use crate::models::{
    adamw_step, bce_loss, lr_at, train_logistic, AdamState, Classifier, LogisticEnsemble, MlpClassifier,
    OptimizerConfig, DEFAULT_MAX_ITER,
};
use crate::ranking::ScoreMatrix;
use crate::sampler::{compute_weights, sample_epoch, SamplerConfig};

/// Model selection uses MAP and MS at this cutoff.
pub const SELECTION_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub sampler: SamplerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 15,
            patience: 3,
            seed: 42,
            sampler: SamplerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.patience >= self.max_epochs {
            return Err(Error::InvalidInput(format!(
                "need 0 < patience < max_epochs, got patience {} and max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }

    fn sampler_seed(&self) -> u64 {
        self.sampler.seed.unwrap_or(self.seed)
    }
}

/// How segments are turned into vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    Tfidf {
        #[serde(default = "default_tfidf_dim")]
        dim: usize,
        /// Defaults to the language of the first training document.
        #[serde(default)]
        normalizer: Option<TextNormalizer>,
    },
    Embedding {
        /// Without a file every segment uses the hashing fallback.
        #[serde(default)]
        path: Option<PathBuf>,
        dim: usize,
        #[serde(default)]
        normalizer: Option<TextNormalizer>,
    },
}

fn default_tfidf_dim() -> usize {
    DEFAULT_TFIDF_DIM
}

impl Default for FeatureSpec {
    fn default() -> Self {
        FeatureSpec::Tfidf {
            dim: DEFAULT_TFIDF_DIM,
            normalizer: None,
        }
    }
}

impl FeatureSpec {
    /// Fits (Tf-Idf) or loads (embeddings) a featurizer on training documents.
    pub fn build(&self, train: &[&LabeledDocument]) -> Result<Featurizer> {
        let language = train.first().map(|d| d.document.language.as_str()).unwrap_or("de");
        let pick = |n: &Option<TextNormalizer>| n.unwrap_or_else(|| TextNormalizer::for_language(language));
        match self {
            FeatureSpec::Tfidf { dim, normalizer } => {
                Featurizer::fit_tfidf(train.iter().map(|d| &d.document), pick(normalizer), *dim)
            }
            FeatureSpec::Embedding { path, dim, normalizer } => {
                let normalizer = pick(normalizer);
                let provider = match path {
                    Some(p) => EmbeddingProvider::load(p, normalizer)?,
                    None => EmbeddingProvider::hashing_only(*dim, normalizer)?,
                };
                if provider.dim() != *dim {
                    return Err(Error::Shape {
                        expected: *dim,
                        actual: provider.dim(),
                    });
                }
                Ok(Featurizer::embedding(provider, path.clone(), normalizer))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    Mlp {
        hidden_dim: Option<usize>,
        dropout: f64,
        #[serde(default)]
        optimizer: OptimizerConfig,
    },
    /// One-vs-rest logistic regression; `c` is the inverse regularization strength.
    Logistic {
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "default_max_iter")]
        max_iter: usize,
    },
}

fn default_c() -> f64 {
    1.0
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

impl Default for ModelSpec {
    /// The best configuration of the reference hyperparameter grid.
    fn default() -> Self {
        ModelSpec::Mlp {
            hidden_dim: Some(1024),
            dropout: 0.3,
            optimizer: OptimizerConfig::default(),
        }
    }
}

/// Validation document with precomputed features.
#[derive(Debug, Clone)]
pub struct EvalDocument {
    pub doc_id: String,
    pub segment_ids: Vec<String>,
    pub features: Vec<FeatureVector>,
    pub annotations: AnnotationSet,
}

/// Featurized training and validation data shared by every run.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub catalog: RequirementCatalog,
    pub ingest: IngestConfig,
    pub featurizer: Featurizer,
    pub train_x: Vec<FeatureVector>,
    pub train_y: Vec<Vec<u8>>,
    pub valid: Vec<EvalDocument>,
}

impl TrainData {
    /// Featurizes already preprocessed documents.
    pub fn prepare(
        catalog: &RequirementCatalog,
        ingest: &IngestConfig,
        featurizer: Featurizer,
        train: &[&LabeledDocument],
        valid: &[&LabeledDocument],
    ) -> Result<Self> {
        if train.is_empty() || valid.is_empty() {
            return Err(Error::InvalidInput("training and validation splits must be non-empty".into()));
        }
        let mut train_x = Vec::new();
        let mut train_y = Vec::new();
        for d in train {
            train_x.extend(featurizer.featurize(&d.document)?);
            train_y.extend(d.annotations.label_matrix(&d.document, catalog));
        }
        let valid = valid
            .iter()
            .map(|d| {
                Ok(EvalDocument {
                    doc_id: d.document.doc_id.clone(),
                    segment_ids: d.document.segments.iter().map(|s| s.id.clone()).collect(),
                    features: featurizer.featurize(&d.document)?,
                    annotations: d.annotations.clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(TrainData {
            catalog: catalog.clone(),
            ingest: ingest.clone(),
            featurizer,
            train_x,
            train_y,
            valid,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.featurizer.dim()
    }

    /// Validation MS/MAP at the selection cutoff.
    pub fn validate(&self, classifier: &Classifier) -> Result<MetricsReport> {
        let req_ids: Vec<String> = self.catalog.requirements().iter().map(|r| r.req_id.clone()).collect();
        let matrices: Vec<ScoreMatrix> = self
            .valid
            .iter()
            .map(|d| {
                let rows = d.features.iter().map(|x| classifier.predict(x)).collect::<Result<_>>()?;
                ScoreMatrix::new(d.doc_id.clone(), d.segment_ids.clone(), req_ids.clone(), rows)
            })
            .collect::<Result<_>>()?;
        evaluate(matrices.iter().zip(self.valid.iter().map(|d| &d.annotations)), &[SELECTION_K])
    }
}

/// Tracks the best epoch and how long the metric has stalled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    /// Records an epoch's metric; true when it strictly improves on the best.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> bool {
        match self.best {
            Some((_, best)) if metric <= best => {
                self.stale += 1;
                false
            }
            _ => {
                self.best = Some((epoch, metric));
                self.stale = 0;
                true
            }
        }
    }

    pub fn should_stop(&self) -> bool {
        self.stale >= self.patience
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }
}

/// Replays a metric sequence: (epochs run, best epoch), both 1-based.
pub fn early_stopping_trace(metrics: &[f64], patience: usize, max_epochs: usize) -> (usize, usize) {
    let mut stopper = EarlyStopping::new(patience);
    let mut ran = 0;
    for (i, &m) in metrics.iter().take(max_epochs).enumerate() {
        ran = i + 1;
        stopper.observe(ran, m);
        if stopper.should_stop() {
            break;
        }
    }
    (ran, stopper.best_epoch().unwrap_or(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_map: f64,
    pub valid_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Position in the grid; 0 for stand-alone runs.
    pub run_index: usize,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub architecture: String,
    pub param_count: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_valid_map: f64,
    pub best_valid_ms: f64,
    pub stopped_early: bool,
    pub wall_time_secs: f64,
}

impl RunRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("run record serializes")
    }

    /// Copy with the wall time zeroed, for comparing runs.
    pub fn untimed(&self) -> RunRecord {
        RunRecord {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }

    /// First epoch whose validation MAP reaches `threshold`.
    pub fn epochs_to_reach(&self, threshold: f64) -> Option<usize> {
        self.epochs.iter().find(|e| e.valid_map >= threshold).map(|e| e.epoch)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub record: RunRecord,
}

/// Trains one model and returns the checkpoint of its best validation epoch.
pub fn train_run(spec: &ModelSpec, data: &TrainData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_indexed(0, spec, data, cfg)
}

fn train_indexed(run_index: usize, spec: &ModelSpec, data: &TrainData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.train_x.is_empty() {
        return Err(Error::InvalidInput("no training segments".into()));
    }
    let started = Instant::now();
    let (best, last, epochs, best_epoch, stopped_early) = match spec {
        ModelSpec::Mlp {
            hidden_dim,
            dropout,
            optimizer,
        } => train_mlp(*hidden_dim, *dropout, optimizer, data, cfg)?,
        ModelSpec::Logistic { c, max_iter } => {
            let (clf, epoch) = train_lr(*c, *max_iter, data)?;
            (clf.clone(), clf, vec![epoch], 1, false)
        }
    };
    let best_rec = &epochs[best_epoch - 1];
    let record = RunRecord {
        run_index,
        model: spec.clone(),
        train: cfg.clone(),
        architecture: format!("{}+{}", data.featurizer.kind(), best.architecture()),
        param_count: best.param_count(),
        best_valid_map: best_rec.valid_map,
        best_valid_ms: best_rec.valid_ms,
        epochs,
        best_epoch,
        stopped_early,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let wrap = |c: Classifier| Checkpoint::new(data.catalog.clone(), data.ingest.clone(), data.featurizer.clone(), c);
    Ok(TrainOutcome {
        best: wrap(best)?,
        last: wrap(last)?,
        record,
    })
}

type MlpResult = (Classifier, Classifier, Vec<EpochRecord>, usize, bool);

fn train_mlp(
    hidden_dim: Option<usize>,
    dropout: f64,
    opt: &OptimizerConfig,
    data: &TrainData,
    cfg: &TrainConfig,
) -> Result<MlpResult> {
    opt.validate()?;
    let n = data.train_x.len();
    let m = data.catalog.len();
    let mut model = MlpClassifier::new(data.input_dim(), hidden_dim, m, dropout, cfg.seed)?;
    let mut adam = AdamState::new(model.param_count());
    let mut grads = vec![0.0; model.param_count()];
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d50f);

    let targets: Vec<Vec<f64>> = data
        .train_y
        .iter()
        .map(|row| row.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let weights = if cfg.sampler.enabled {
        let relevant: Vec<bool> = data.train_y.iter().map(|row| row.iter().any(|&v| v != 0)).collect();
        Some(compute_weights(&relevant)?)
    } else {
        None
    };

    let steps_per_epoch = n.div_ceil(opt.batch_size);
    let total_steps = steps_per_epoch * cfg.max_epochs;
    let mut step = 0usize;
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = model.params().to_vec();
    let mut epochs = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let epoch_seed = cfg.sampler_seed().wrapping_add(epoch as u64);
        let order = match &weights {
            Some(w) => sample_epoch(w, n, epoch_seed)?,
            None => {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
                order
            }
        };
        let mut loss_sum = 0.0;
        for batch in order.chunks(opt.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                loss_sum += model.accumulate_gradient(
                    &data.train_x[i],
                    &targets[i],
                    scale,
                    Some(&mut dropout_rng),
                    &mut grads,
                )?;
            }
            step += 1;
            let lr = lr_at(step, total_steps, opt)?;
            adamw_step(model.params_mut(), &grads, &mut adam, lr, opt)
                .map_err(|e| with_context(e, epoch, step))?;
        }
        let train_loss = loss_sum / n as f64;
        if !train_loss.is_finite() {
            return Err(Error::Numerical(format!("epoch {epoch}: training loss is {train_loss}")));
        }
        let report = data.validate(&Classifier::Mlp(model.clone()))?;
        let rec = EpochRecord {
            epoch,
            train_loss,
            valid_map: report.map(SELECTION_K).unwrap_or(0.0),
            valid_ms: report.ms(SELECTION_K).unwrap_or(0.0),
        };
        if stopper.observe(epoch, rec.valid_map) {
            best_params.copy_from_slice(model.params());
        }
        epochs.push(rec);
        if stopper.should_stop() {
            break;
        }
    }

    let stopped_early = epochs.len() < cfg.max_epochs;
    let best_epoch = stopper.best_epoch().expect("at least one epoch ran");
    let mut best = model.clone();
    best.set_params(best_params)?;
    Ok((Classifier::Mlp(best), Classifier::Mlp(model), epochs, best_epoch, stopped_early))
}

fn with_context(err: Error, epoch: usize, step: usize) -> Error {
    match err {
        Error::Numerical(msg) => Error::Numerical(format!("epoch {epoch}, step {step}: {msg}")),
        other => other,
    }
}

fn train_lr(c: f64, max_iter: usize, data: &TrainData) -> Result<(Classifier, EpochRecord)> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("inverse regularization c must be positive, got {c}")));
    }
    let n = data.train_x.len();
    let mut ensemble = LogisticEnsemble::new(data.input_dim(), data.catalog.len(), 1.0 / (n as f64 * c))?;
    train_logistic(&mut ensemble, &data.train_x, &data.train_y, max_iter)?;
    let clf = Classifier::Logistic(ensemble);
    let mut loss_sum = 0.0;
    for (x, y) in data.train_x.iter().zip(&data.train_y) {
        let target: Vec<f64> = y.iter().map(|&v| f64::from(v)).collect();
        loss_sum += bce_loss(&clf.predict(x)?, &target)?;
    }
    let report = data.validate(&clf)?;
    let rec = EpochRecord {
        epoch: 1,
        train_loss: loss_sum / n as f64,
        valid_map: report.map(SELECTION_K).unwrap_or(0.0),
        valid_ms: report.ms(SELECTION_K).unwrap_or(0.0),
    };
    Ok((clf, rec))
}

/// Lists of values per MLP hyperparameter; runs cover their cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub hidden_dims: Vec<Option<usize>>,
    pub dropouts: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
}

impl Grid {
    /// The reference search space: 4 · 4 · 4 · 3 configurations.
    pub fn reference() -> Self {
        Grid {
            hidden_dims: vec![None, Some(512), Some(1024), Some(2048)],
            dropouts: vec![0.0, 0.1, 0.3, 0.5],
            batch_sizes: vec![2, 4, 8, 16],
            learning_rates: vec![1e-4, 1e-5, 1e-6],
        }
    }

    pub fn len(&self) -> usize {
        self.hidden_dims.len() * self.dropouts.len() * self.batch_sizes.len() * self.learning_rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Model specs in grid order (hidden dimension varies slowest).
    pub fn specs(&self, base: &OptimizerConfig) -> Vec<ModelSpec> {
        let mut out = Vec::with_capacity(self.len());
        for &hidden_dim in &self.hidden_dims {
            for &dropout in &self.dropouts {
                for &batch_size in &self.batch_sizes {
                    for &peak_lr in &self.learning_rates {
                        out.push(ModelSpec::Mlp {
                            hidden_dim,
                            dropout,
                            optimizer: OptimizerConfig {
                                batch_size,
                                peak_lr,
                                ..*base
                            },
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFailure {
    pub run_index: usize,
    pub model: ModelSpec,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct GridSearchReport {
    /// Best first.
    pub ranked: Vec<RunRecord>,
    pub failures: Vec<GridFailure>,
    pub best: Option<Checkpoint>,
}

/// Ordering for selection: higher MAP, then fewer parameters, then grid order.
fn selection_order(a: &RunRecord, b: &RunRecord) -> std::cmp::Ordering {
    b.best_valid_map
        .total_cmp(&a.best_valid_map)
        .then(a.param_count.cmp(&b.param_count))
        .then(a.run_index.cmp(&b.run_index))
}

/// Trains every grid configuration in parallel. Failed runs are reported,
/// not fatal.
pub fn grid_search(grid: &Grid, base: &OptimizerConfig, data: &TrainData, cfg: &TrainConfig) -> Result<GridSearchReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("grid has no configurations".into()));
    }
    cfg.validate()?;
    let specs = grid.specs(base);

    #[derive(Default)]
    struct Acc {
        ranked: Vec<RunRecord>,
        failures: Vec<GridFailure>,
        best: Option<(RunRecord, Checkpoint)>,
    }
    fn keep_best(a: Option<(RunRecord, Checkpoint)>, b: Option<(RunRecord, Checkpoint)>) -> Option<(RunRecord, Checkpoint)> {
        match (a, b) {
            (Some(x), Some(y)) => Some(if selection_order(&x.0, &y.0).is_le() { x } else { y }),
            (x, None) => x,
            (None, y) => y,
        }
    }

    let acc = specs
        .par_iter()
        .enumerate()
        .fold(Acc::default, |mut acc, (i, spec)| {
            match train_indexed(i, spec, data, cfg) {
                Ok(outcome) => {
                    acc.ranked.push(outcome.record.clone());
                    acc.best = keep_best(acc.best.take(), Some((outcome.record, outcome.best)));
                }
                Err(e) => acc.failures.push(GridFailure {
                    run_index: i,
                    model: spec.clone(),
                    error: e.to_string(),
                }),
            }
            acc
        })
        .reduce(Acc::default, |mut a, b| {
            a.ranked.extend(b.ranked);
            a.failures.extend(b.failures);
            a.best = keep_best(a.best.take(), b.best);
            a
        });

    let mut ranked = acc.ranked;
    ranked.sort_by(selection_order);
    let mut failures = acc.failures;
    failures.sort_by_key(|f| f.run_index);
    Ok(GridSearchReport {
        ranked,
        failures,
        best: acc.best.map(|(_, c)| c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Requirement, Segment, SegmentKind, SourceFormat};

    #[test]
    fn patience_trace_from_plateau() {
        assert_eq!(early_stopping_trace(&[0.2, 0.3, 0.3, 0.3, 0.3], 3, 15), (5, 2));
    }

    #[test]
    fn improving_run_uses_all_epochs() {
        let metrics: Vec<f64> = (1..=20).map(|e| e as f64 / 20.0).collect();
        assert_eq!(early_stopping_trace(&metrics, 3, 15), (15, 15));
    }

    #[test]
    fn best_epoch_is_earliest_on_ties() {
        assert_eq!(early_stopping_trace(&[0.5, 0.4, 0.5, 0.5], 3, 15), (4, 1));
    }

    #[test]
    fn config_invariants() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig {
            patience: 15,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn reference_grid_has_192_runs() {
        let grid = Grid::reference();
        assert_eq!(grid.len(), 192);
        let specs = grid.specs(&OptimizerConfig::default());
        assert_eq!(specs.len(), 192);
        assert_eq!(
            specs[0],
            ModelSpec::Mlp {
                hidden_dim: None,
                dropout: 0.0,
                optimizer: OptimizerConfig {
                    batch_size: 2,
                    peak_lr: 1e-4,
                    ..OptimizerConfig::default()
                }
            }
        );
    }

    fn toy_data() -> TrainData {
        let catalog = RequirementCatalog::new(
            "toy",
            vec![Requirement::new("w", "env", "Wasser"), Requirement::new("a", "soc", "Arbeit")],
        )
        .unwrap();
        let texts = [
            ("wasser verbrauch", Some("w")),
            ("arbeit schutz", Some("a")),
            ("allgemein bericht", None),
            ("vorwort leitung", None),
        ];
        let docs: Vec<LabeledDocument> = (0..6)
            .map(|d| {
                let id = format!("d{d}");
                let segments = texts
                    .iter()
                    .enumerate()
                    .map(|(i, (t, _))| Segment::new(format!("s{i}"), SegmentKind::Paragraph, *t))
                    .collect();
                let document = Document::new(id.clone(), "de", SourceFormat::Json, segments).unwrap();
                let mut annotations = AnnotationSet::new(id);
                for (i, (_, r)) in texts.iter().enumerate() {
                    if let Some(r) = r {
                        annotations.insert(format!("s{i}"), *r);
                    }
                }
                LabeledDocument { document, annotations }
            })
            .collect();
        let refs: Vec<&LabeledDocument> = docs.iter().collect();
        let featurizer = FeatureSpec::Tfidf {
            dim: 16,
            normalizer: Some(TextNormalizer::default()),
        }
        .build(&refs[..4])
        .unwrap();
        TrainData::prepare(&catalog, &IngestConfig::default(), featurizer, &refs[..4], &refs[4..]).unwrap()
    }

    fn small_mlp(lr: f64) -> ModelSpec {
        ModelSpec::Mlp {
            hidden_dim: Some(8),
            dropout: 0.0,
            optimizer: OptimizerConfig {
                peak_lr: lr,
                batch_size: 4,
                ..OptimizerConfig::default()
            },
        }
    }

    #[test]
    fn mlp_learns_toy_task() {
        let data = toy_data();
        let cfg = TrainConfig {
            max_epochs: 12,
            ..TrainConfig::default()
        };
        let out = train_run(&small_mlp(5e-2), &data, &cfg).unwrap();
        assert_eq!(out.record.best_valid_map, 1.0);
        let best = out.record.best_epoch;
        assert!(out.record.epochs[..best - 1].iter().all(|e| e.valid_map < 1.0));
        assert_eq!(data.validate(&out.best.classifier).unwrap().map(3), Some(1.0));
    }

    #[test]
    fn runs_are_deterministic() {
        let data = toy_data();
        let cfg = TrainConfig {
            max_epochs: 4,
            sampler: SamplerConfig {
                enabled: true,
                seed: None,
            },
            ..TrainConfig::default()
        };
        let a = train_run(&small_mlp(1e-2), &data, &cfg).unwrap();
        let b = train_run(&small_mlp(1e-2), &data, &cfg).unwrap();
        assert_eq!(a.record.untimed(), b.record.untimed());
        assert_eq!(a.best.to_bytes(), b.best.to_bytes());
    }

    #[test]
    fn logistic_single_pass() {
        let data = toy_data();
        let out = train_run(&ModelSpec::Logistic { c: 1.0, max_iter: 100 }, &data, &TrainConfig::default()).unwrap();
        assert_eq!(out.record.epochs.len(), 1);
        assert_eq!(out.record.best_epoch, 1);
        assert_eq!(out.record.best_valid_map, 1.0);
    }

    #[test]
    fn grid_ranks_and_records_failures() {
        let data = toy_data();
        let grid = Grid {
            hidden_dims: vec![Some(4), Some(0)],
            dropouts: vec![0.0],
            batch_sizes: vec![4],
            learning_rates: vec![5e-2],
        };
        let cfg = TrainConfig {
            max_epochs: 4,
            ..TrainConfig::default()
        };
        let report = grid_search(&grid, &OptimizerConfig::default(), &data, &cfg).unwrap();
        assert_eq!(report.ranked.len() + report.failures.len(), grid.len());
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].run_index, 1);
        assert!(report.best.is_some());
    }

    #[test]
    fn singleton_grid_runs_once() {
        let data = toy_data();
        let grid = Grid {
            hidden_dims: vec![None],
            dropouts: vec![0.0],
            batch_sizes: vec![2],
            learning_rates: vec![1e-2],
        };
        let cfg = TrainConfig {
            max_epochs: 2,
            patience: 1,
            ..TrainConfig::default()
        };
        let report = grid_search(&grid, &OptimizerConfig::default(), &data, &cfg).unwrap();
        assert_eq!(report.ranked.len(), 1);
    }

    #[test]
    fn selection_prefers_fewer_params_on_ties() {
        let data = toy_data();
        let cfg = TrainConfig {
            max_epochs: 2,
            patience: 1,
            ..TrainConfig::default()
        };
        let base = train_run(&small_mlp(1e-2), &data, &cfg).unwrap().record;
        let big = RunRecord {
            run_index: 0,
            param_count: 100,
            ..base.clone()
        };
        let small = RunRecord {
            run_index: 1,
            param_count: 10,
            ..base
        };
        let mut v = vec![big, small];
        v.sort_by(selection_order);
        assert_eq!(v[0].run_index, 1);
    }
}
