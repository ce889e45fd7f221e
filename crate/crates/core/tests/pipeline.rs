use reportrank_core::checkpoint::Checkpoint;
use reportrank_core::corpus::SplitRatios;
use reportrank_core::dataset::{annotations_to_jsonl, Dataset};
use reportrank_core::ingest::IngestConfig;
use reportrank_core::metrics::evaluate;
use reportrank_core::models::OptimizerConfig;
use reportrank_core::synthetic::{keyword_corpus, KeywordCorpusConfig};
use reportrank_core::trainer::{train_run, FeatureSpec, ModelSpec, TrainConfig, TrainData};
use reportrank_core::ErrorCategory;

fn corpus() -> Dataset {
    keyword_corpus(&KeywordCorpusConfig {
        documents: 60,
        requirements: 5,
        segments_per_document: 15,
        positive_rate: 0.2,
        ..KeywordCorpusConfig::default()
    })
    .unwrap()
}

#[test]
fn jsonl_round_trip_preserves_dataset() {
    let ds = corpus();
    let docs: String = ds
        .docs
        .iter()
        .map(|d| serde_json::to_string(&d.document).unwrap() + "\n")
        .collect();
    let anns: Vec<_> = ds.docs.iter().map(|d| d.annotations.clone()).collect();
    let back = Dataset::from_bytes(
        ds.catalog.to_json().as_bytes(),
        docs.as_bytes(),
        annotations_to_jsonl(&anns).as_bytes(),
    )
    .unwrap();
    assert_eq!(back.catalog.requirements(), ds.catalog.requirements());
    assert_eq!(back.docs, ds.docs);
}

fn train(ds: &Dataset, features: FeatureSpec) -> (Checkpoint, Vec<String>) {
    let ingest = IngestConfig::default();
    let ds = ds.preprocess(&ingest);
    let split = ds.split(SplitRatios::new(0.7, 0.15, 0.15), 5).unwrap();
    let train = ds.select(&split.train).unwrap();
    let valid = ds.select(&split.valid).unwrap();
    let featurizer = features.build(&train).unwrap();
    let data = TrainData::prepare(&ds.catalog, &ingest, featurizer, &train, &valid).unwrap();
    let spec = ModelSpec::Mlp {
        hidden_dim: Some(32),
        dropout: 0.1,
        optimizer: OptimizerConfig {
            peak_lr: 1e-3,
            batch_size: 8,
            ..OptimizerConfig::default()
        },
    };
    let cfg = TrainConfig {
        max_epochs: 4,
        patience: 2,
        ..TrainConfig::default()
    };
    (train_run(&spec, &data, &cfg).unwrap().best, split.test)
}

#[test]
fn checkpoint_survives_disk_and_scores_identically() {
    let ds = corpus();
    let (model, test) = train(&ds, FeatureSpec::Tfidf { dim: 800, normalizer: None });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    model.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.architecture(), model.architecture());
    assert_eq!(loaded.fingerprint(), model.fingerprint());

    let test_docs = ds.select(&test).unwrap();
    let before: Vec<_> = test_docs.iter().map(|d| model.score(&d.document).unwrap()).collect();
    let after: Vec<_> = test_docs.iter().map(|d| loaded.score(&d.document).unwrap()).collect();
    assert_eq!(before, after);

    let report = evaluate(before.iter().zip(test_docs.iter().map(|d| &d.annotations)), &[1, 3, 5]).unwrap();
    let again = evaluate(after.iter().zip(test_docs.iter().map(|d| &d.annotations)), &[1, 3, 5]).unwrap();
    assert_eq!(report.to_json(), again.to_json());
    assert!(report.evaluated > 0);
}

#[test]
fn hashing_embeddings_train_and_reload() {
    let ds = corpus();
    let (model, _) = train(&ds, FeatureSpec::Embedding { path: None, dim: 64, normalizer: None });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("emb.ckpt");
    model.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let doc = &ds.docs[0].document;
    assert_eq!(model.score(doc).unwrap(), loaded.score(doc).unwrap());
}

#[test]
fn corrupt_checkpoint_is_a_storage_error() {
    let ds = corpus();
    let (model, _) = train(&ds, FeatureSpec::Tfidf { dim: 200, normalizer: None });
    let mut bytes = model.to_bytes();
    bytes.truncate(bytes.len() - 3);
    let err = Checkpoint::from_bytes(&bytes).unwrap_err();
    assert_eq!(err.category(), ErrorCategory::Io);
    let other = corpus().catalog;
    assert!(model.check_catalog(&other).is_ok());
}
