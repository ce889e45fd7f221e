//! `reportrank`: batch entry points. Data goes to stdout, logs to stderr.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reportrank_core::{Error, ErrorCategory};
use reportrank_service::ServiceError;
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "reportrank", version, about = "Rank report segments against disclosure requirements")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags accepted by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Run configuration (TOML or JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Input format: json, dnk-html or text.
    #[arg(long, global = true, default_value = "json")]
    pub format: String,
    /// Cutoffs; comma separated for `evaluate`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub k: Vec<usize>,
}

/// Labeled corpus files.
#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// Requirement catalog JSON.
    #[arg(long)]
    pub catalog: PathBuf,
    /// Normalized documents, one JSON object per line.
    #[arg(long)]
    pub documents: PathBuf,
    /// Annotation sets, one JSON object per line.
    #[arg(long)]
    pub annotations: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse reports and print normalized documents as JSON lines.
    Ingest {
        /// Input files; `-` reads stdin.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Catalog used to map section headings (dnk-html).
        #[arg(long)]
        catalog: Option<PathBuf>,
        /// Extra heading to requirement mappings (JSON object).
        #[arg(long)]
        headings: Option<PathBuf>,
        /// Where to write annotations recovered from section headings.
        #[arg(long)]
        annotations_out: Option<PathBuf>,
        /// Skip the segment filter and dehyphenation.
        #[arg(long)]
        raw: bool,
    },
    /// Fit a Tf-Idf featurizer and write it as JSON.
    FitTfidf {
        #[arg(long)]
        documents: PathBuf,
        #[arg(long, default_value_t = reportrank_core::features::DEFAULT_TFIDF_DIM)]
        dim: usize,
        /// Normalizer language; defaults to the first document's.
        #[arg(long)]
        language: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one model and save the best checkpoint. Prints the run record.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        /// Reuse a featurizer written by `fit-tfidf`.
        #[arg(long)]
        featurizer: Option<PathBuf>,
        /// Write the document split used for training.
        #[arg(long)]
        split_out: Option<PathBuf>,
    },
    /// Train every grid configuration; prints run records, best first.
    Gridsearch {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        split_out: Option<PathBuf>,
    },
    /// Score the test split and print MS/MAP per cutoff.
    Evaluate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Explicit split file; otherwise the split is recomputed from config and seed.
        #[arg(long)]
        split: Option<PathBuf>,
        /// Write the JSON report here and print a table instead.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Row label in the table.
        #[arg(long)]
        name: Option<String>,
    },
    /// Print the top-k segments of a document for one requirement.
    Recommend {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Report file; `-` reads stdin.
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "req")]
        req_id: String,
    },
    /// Run the HTTP service. Unset flags fall back to REPORTRANK_* variables.
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        max_upload_bytes: Option<usize>,
        #[arg(long)]
        headings: Option<PathBuf>,
    },
    /// List segment ids and texts for an external encoder, as JSON lines.
    ExportEmbeddingsTemplate {
        #[arg(long)]
        documents: PathBuf,
    },
    /// Convert filled template lines (`id`, `vector`) into an embedding file.
    PackEmbeddings {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Service(ServiceError),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Core(e) => CliError::Core(e),
            other => CliError::Service(other),
        }
    }
}

impl CliError {
    fn category(&self) -> ErrorCategory {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Service(ServiceError::Io(_)) => ErrorCategory::Io,
            CliError::Service(_) => ErrorCategory::Usage,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Core(e) => e.to_string(),
            CliError::Service(e) => e.to_string(),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("REPORTRANK_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            let body = json!({"error": {"category": category.as_str(), "message": e.message()}});
            eprintln!("{body}");
            ExitCode::from(category.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    let common = cli.common;
    match cli.command {
        Command::Ingest {
            inputs,
            catalog,
            headings,
            annotations_out,
            raw,
        } => commands::ingest(&common, &inputs, catalog, headings, annotations_out, raw),
        Command::FitTfidf {
            documents,
            dim,
            language,
            out,
        } => commands::fit_tfidf(&documents, dim, language, out),
        Command::Train {
            corpus,
            out,
            featurizer,
            split_out,
        } => commands::train(&common, &corpus, &out, featurizer, split_out),
        Command::Gridsearch {
            corpus,
            out,
            workers,
            split_out,
        } => commands::gridsearch(&common, &corpus, &out, workers, split_out),
        Command::Evaluate {
            corpus,
            checkpoint,
            split,
            out,
            name,
        } => commands::evaluate(&common, &corpus, &checkpoint, split, out, name),
        Command::Recommend {
            checkpoint,
            input,
            req_id,
        } => commands::recommend(&common, &checkpoint, &input, &req_id),
        Command::Serve {
            checkpoint,
            data_dir,
            listen,
            workers,
            max_upload_bytes,
            headings,
        } => {
            let overrides = [
                ("REPORTRANK_CHECKPOINT", checkpoint.map(|p| p.display().to_string())),
                ("REPORTRANK_DATA_DIR", data_dir.map(|p| p.display().to_string())),
                ("REPORTRANK_LISTEN", listen),
                ("REPORTRANK_WORKERS", workers.map(|w| w.to_string())),
                ("REPORTRANK_MAX_UPLOAD_BYTES", max_upload_bytes.map(|b| b.to_string())),
                ("REPORTRANK_HEADINGS", headings.map(|p| p.display().to_string())),
            ];
            commands::serve(&overrides)
        }
        Command::ExportEmbeddingsTemplate { documents } => commands::export_embeddings_template(&documents),
        Command::PackEmbeddings { input, out } => commands::pack_embeddings(&input, &out),
    }
}
