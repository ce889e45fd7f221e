use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use reportrank_core::checkpoint::Checkpoint;
use reportrank_core::corpus::{Document, DatasetSplit, RequirementCatalog};
use reportrank_core::dataset::{annotations_to_jsonl, Dataset, LabeledDocument};
use reportrank_core::features::{write_embeddings, Featurizer, TextNormalizer};
use reportrank_core::ingest::{parse_input, parse_normalized_jsonl, preprocess, HeadingMap, InputFormat};
use reportrank_core::metrics::{evaluate as evaluate_metrics, render_table};
use reportrank_core::models::OptimizerConfig;
use reportrank_core::ranking::rank;
use reportrank_core::trainer::{grid_search, train_run, Grid, ModelSpec, RunRecord, TrainData};
use reportrank_core::Error;
use reportrank_service::ServiceConfig;
use serde::Deserialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::{CliResult, Common, CorpusArgs};

const DEFAULT_EVAL_KS: [usize; 2] = [3, 5];
const DEFAULT_RECOMMEND_K: usize = 3;

fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    if path == Path::new("-") {
        let mut buf = Vec::new();
        io::stdin().read_to_end(&mut buf)?;
        return Ok(buf);
    }
    std::fs::read(path).map_err(|e| Error::Storage(format!("cannot read {}: {e}", path.display())).into())
}

fn write_output(path: &Path, contents: &[u8]) -> CliResult {
    std::fs::write(path, contents).map_err(|e| Error::Storage(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

/// Document id for formats that carry none: the file stem.
fn doc_id_for(path: &Path) -> String {
    if path == Path::new("-") {
        return "stdin".into();
    }
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "document".into())
}

fn run_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn input_format(common: &Common) -> CliResult<InputFormat> {
    Ok(InputFormat::from_str(&common.format)?)
}

fn load_catalog(path: &Path) -> CliResult<RequirementCatalog> {
    Ok(RequirementCatalog::from_json(&read_input(path)?)?)
}

fn load_dataset(args: &CorpusArgs, cfg: &RunConfig) -> CliResult<Dataset> {
    let ds = Dataset::from_bytes(
        &read_input(&args.catalog)?,
        &read_input(&args.documents)?,
        &read_input(&args.annotations)?,
    )?;
    let before = ds.docs.len();
    let ds = ds.preprocess(&cfg.ingest);
    if ds.docs.len() < before {
        tracing::warn!(dropped = before - ds.docs.len(), "documents without content segments dropped");
    }
    Ok(ds)
}

fn split_for(ds: &Dataset, cfg: &RunConfig, file: Option<&Path>) -> CliResult<DatasetSplit> {
    match file {
        Some(path) => {
            let bytes = read_input(path)?;
            serde_json::from_slice(&bytes).map_err(|e| {
                Error::Parse {
                    offset: 0,
                    message: format!("split file {}: {e}", path.display()),
                }
                .into()
            })
        }
        None => Ok(ds.split(cfg.split, cfg.train.seed)?),
    }
}

fn stdout_lines<I: IntoIterator<Item = String>>(lines: I) -> CliResult {
    let mut out = BufWriter::new(io::stdout().lock());
    for line in lines {
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn headings_for(catalog: Option<&RequirementCatalog>, overrides: Option<&Path>) -> CliResult<HeadingMap> {
    let Some(catalog) = catalog else {
        if overrides.is_some() {
            return Err(Error::InvalidInput("--headings needs --catalog".into()).into());
        }
        return Ok(HeadingMap::default());
    };
    let map = HeadingMap::from_catalog(catalog);
    Ok(match overrides {
        Some(path) => map.with_overrides(&read_input(path)?, catalog)?,
        None => map,
    })
}

pub fn ingest(
    common: &Common,
    inputs: &[PathBuf],
    catalog: Option<PathBuf>,
    headings: Option<PathBuf>,
    annotations_out: Option<PathBuf>,
    raw: bool,
) -> CliResult {
    let format = input_format(common)?;
    let cfg = run_config(common)?;
    let catalog = catalog.as_deref().map(load_catalog).transpose()?;
    let headings = headings_for(catalog.as_ref(), headings.as_deref())?;

    let mut docs = Vec::new();
    let mut annotations = Vec::new();
    for path in inputs {
        let bytes = read_input(path)?;
        let is_jsonl = path.extension().is_some_and(|e| e == "jsonl");
        let parsed: Vec<(Document, Option<_>)> = if format == InputFormat::Json && is_jsonl {
            parse_normalized_jsonl(&bytes)?.into_iter().map(|d| (d, None)).collect()
        } else {
            let ingested = parse_input(&bytes, format, &doc_id_for(path), &headings)?;
            for h in &ingested.unknown_headings {
                tracing::warn!(file = %path.display(), heading = %h, "heading matches no requirement");
            }
            vec![(ingested.document, ingested.annotations)]
        };
        for (doc, ann) in parsed {
            let doc = if raw { doc } else { preprocess(&doc, &cfg.ingest) };
            if doc.is_empty() {
                tracing::warn!(doc_id = %doc.doc_id, "no segments left after preprocessing; skipped");
                continue;
            }
            if let Some(mut ann) = ann {
                ann.links.retain(|(seg, _)| doc.segment(seg).is_some());
                annotations.push(ann);
            }
            docs.push(doc);
        }
    }
    if let Some(path) = annotations_out {
        write_output(&path, annotations_to_jsonl(&annotations).as_bytes())?;
    }
    tracing::info!(documents = docs.len(), "ingested");
    stdout_lines(docs.iter().map(|d| serde_json::to_string(d).expect("document serializes")))
}

pub fn fit_tfidf(documents: &Path, dim: usize, language: Option<String>, out: Option<PathBuf>) -> CliResult {
    let docs = parse_normalized_jsonl(&read_input(documents)?)?;
    let language = language
        .or_else(|| docs.first().map(|d| d.language.clone()))
        .unwrap_or_else(|| "de".into());
    let featurizer = Featurizer::fit_tfidf(&docs, TextNormalizer::for_language(&language), dim)?;
    let text = serde_json::to_string(&featurizer).expect("featurizer serializes");
    match out {
        Some(path) => {
            write_output(&path, text.as_bytes())?;
            stdout_lines([json!({"kind": featurizer.kind(), "dim": featurizer.dim(), "documents": docs.len()}).to_string()])
        }
        None => stdout_lines([text]),
    }
}

fn log_run(record: &RunRecord) {
    for e in &record.epochs {
        tracing::info!(
            run = record.run_index,
            epoch = e.epoch,
            train_loss = e.train_loss,
            valid_map = e.valid_map,
            "epoch"
        );
    }
}

struct Prepared {
    ds: Dataset,
    split: DatasetSplit,
}

impl Prepared {
    fn new(args: &CorpusArgs, cfg: &RunConfig, split_out: Option<&Path>) -> CliResult<Self> {
        let ds = load_dataset(args, cfg)?;
        let split = split_for(&ds, cfg, None)?;
        if let Some(path) = split_out {
            write_output(path, serde_json::to_string_pretty(&split).expect("split serializes").as_bytes())?;
        }
        let (train, valid, test) = split.sizes();
        tracing::info!(train, valid, test, "document split");
        Ok(Prepared { ds, split })
    }

    fn parts(&self) -> CliResult<(Vec<&LabeledDocument>, Vec<&LabeledDocument>)> {
        Ok((self.ds.select(&self.split.train)?, self.ds.select(&self.split.valid)?))
    }
}

pub fn train(
    common: &Common,
    args: &CorpusArgs,
    out: &Path,
    featurizer: Option<PathBuf>,
    split_out: Option<PathBuf>,
) -> CliResult {
    let cfg = run_config(common)?;
    let prepared = Prepared::new(args, &cfg, split_out.as_deref())?;
    let (train, valid) = prepared.parts()?;
    let featurizer = match featurizer {
        Some(path) => {
            let bytes = read_input(&path)?;
            let mut f: Featurizer = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
                offset: 0,
                message: format!("featurizer {}: {e}", path.display()),
            })?;
            f.attach(path.parent().unwrap_or_else(|| Path::new(".")))?;
            f
        }
        None => cfg.features.build(&train)?,
    };
    let data = TrainData::prepare(&prepared.ds.catalog, &cfg.ingest, featurizer, &train, &valid)?;
    let outcome = train_run(&cfg.model, &data, &cfg.train)?;
    log_run(&outcome.record);
    outcome.best.save(out)?;
    tracing::info!(path = %out.display(), best_epoch = outcome.record.best_epoch, "checkpoint saved");
    stdout_lines([outcome.record.to_json_line()])
}

pub fn gridsearch(
    common: &Common,
    args: &CorpusArgs,
    out: &Path,
    workers: Option<usize>,
    split_out: Option<PathBuf>,
) -> CliResult {
    let cfg = run_config(common)?;
    let prepared = Prepared::new(args, &cfg, split_out.as_deref())?;
    let (train, valid) = prepared.parts()?;
    let featurizer = cfg.features.build(&train)?;
    let data = TrainData::prepare(&prepared.ds.catalog, &cfg.ingest, featurizer, &train, &valid)?;
    let grid = cfg.grid.clone().unwrap_or_else(Grid::reference);
    let base = match &cfg.model {
        ModelSpec::Mlp { optimizer, .. } => *optimizer,
        ModelSpec::Logistic { .. } => OptimizerConfig::default(),
    };
    tracing::info!(runs = grid.len(), "grid search");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start workers: {e}")))?;
    let report = pool.install(|| grid_search(&grid, &base, &data, &cfg.train))?;

    for f in &report.failures {
        tracing::warn!(run = f.run_index, error = %f.error, "run failed");
    }
    let best = report
        .best
        .ok_or_else(|| Error::Numerical(format!("all {} grid runs failed", report.failures.len())))?;
    best.save(out)?;
    tracing::info!(path = %out.display(), architecture = %best.architecture(), "best checkpoint saved");
    stdout_lines(report.ranked.iter().map(RunRecord::to_json_line))
}

pub fn evaluate(
    common: &Common,
    args: &CorpusArgs,
    checkpoint: &Path,
    split: Option<PathBuf>,
    out: Option<PathBuf>,
    name: Option<String>,
) -> CliResult {
    let cfg = run_config(common)?;
    let model = Checkpoint::load(checkpoint)?;
    let ds = load_dataset(args, &cfg)?;
    model.check_catalog(&ds.catalog)?;
    let split = split_for(&ds, &cfg, split.as_deref())?;
    let test = ds.select(&split.test)?;
    let ks = if common.k.is_empty() { DEFAULT_EVAL_KS.to_vec() } else { common.k.clone() };

    let scores = test
        .iter()
        .map(|d| model.score(&d.document))
        .collect::<Result<Vec<_>, _>>()?;
    let report = evaluate_metrics(scores.iter().zip(test.iter().map(|d| &d.annotations)), &ks)?;
    match out {
        Some(path) => {
            write_output(&path, report.to_json().as_bytes())?;
            let label = name.unwrap_or_else(|| model.architecture());
            print!("{}", render_table(&[(label.as_str(), &report)]));
            Ok(())
        }
        None => stdout_lines([report.to_json()]),
    }
}

pub fn recommend(common: &Common, checkpoint: &Path, input: &Path, req_id: &str) -> CliResult {
    let k = match common.k.as_slice() {
        [] => DEFAULT_RECOMMEND_K,
        [k] => *k,
        _ => return Err(Error::InvalidInput("recommend takes a single --k".into()).into()),
    };
    let format = input_format(common)?;
    let model = Checkpoint::load(checkpoint)?;
    let col = model
        .catalog
        .index_of(req_id)
        .ok_or_else(|| Error::UnknownRequirement(req_id.to_string()))?;
    let headings = HeadingMap::from_catalog(&model.catalog);
    let parsed = parse_input(&read_input(input)?, format, &doc_id_for(input), &headings)?;
    let doc = preprocess(&parsed.document, &model.ingest);
    if doc.is_empty() {
        return Err(Error::InvalidInput(format!("document {:?} has no content segments", doc.doc_id)).into());
    }
    let scores = model.score(&doc)?;
    let list = rank(&scores, col, k)?;
    stdout_lines([serde_json::to_string(&list).expect("list serializes")])
}

pub fn serve(overrides: &[(&str, Option<String>)]) -> CliResult {
    let cfg = ServiceConfig::from_lookup(|key| {
        overrides
            .iter()
            .find(|(k, _)| *k == key)
            .and_then(|(_, v)| v.clone())
            .or_else(|| std::env::var(key).ok())
    })?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(reportrank_service::serve(cfg))?;
    Ok(())
}

pub fn export_embeddings_template(documents: &Path) -> CliResult {
    let docs = parse_normalized_jsonl(&read_input(documents)?)?;
    stdout_lines(docs.iter().flat_map(|d| {
        d.segments.iter().map(move |s| {
            json!({"id": format!("{}/{}", d.doc_id, s.id), "text": s.text}).to_string()
        })
    }))
}

#[derive(Deserialize)]
struct FilledLine {
    id: String,
    vector: Vec<f32>,
}

pub fn pack_embeddings(input: &Path, out: &Path) -> CliResult {
    let bytes = read_input(input)?;
    let mut records = Vec::new();
    let mut offset = 0;
    for line in bytes.split_inclusive(|&b| b == b'\n') {
        let start = offset;
        offset += line.len();
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let rec: FilledLine = serde_json::from_slice(line).map_err(|e| Error::Parse {
            offset: start + e.column().saturating_sub(1),
            message: e.to_string(),
        })?;
        records.push((rec.id, rec.vector));
    }
    let dim = records.first().map(|(_, v)| v.len()).unwrap_or(0);
    if dim == 0 {
        return Err(Error::InvalidInput("no vectors to pack".into()).into());
    }
    if let Some((id, v)) = records.iter().find(|(_, v)| v.len() != dim) {
        tracing::error!(id = %id, "vector length differs from the first record");
        return Err(Error::Shape { expected: dim, actual: v.len() }.into());
    }
    let mut buf = Vec::new();
    write_embeddings(&mut buf, dim, &records)?;
    write_output(out, &buf)?;
    stdout_lines([json!({"vectors": records.len(), "dim": dim}).to_string()])
}
