use std::net::SocketAddr;
use std::path::PathBuf;

use crate::error::ServiceError;

pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 20 * 1024 * 1024;

/// Runtime settings. [`ServiceConfig::from_env`] reads them from
/// `REPORTRANK_*` environment variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub max_upload_bytes: usize,
    /// Concurrent scoring jobs.
    pub workers: usize,
    /// Optional JSON object mapping extra section headings to requirement ids.
    pub headings: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(checkpoint: PathBuf, data_dir: PathBuf) -> Self {
        ServiceConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir,
            checkpoint,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
            workers: 2,
            headings: None,
        }
    }

    pub fn from_env() -> Result<Self, ServiceError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Same as [`from_env`](Self::from_env) with an injectable lookup.
    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ServiceError> {
        let checkpoint = get("REPORTRANK_CHECKPOINT")
            .ok_or_else(|| ServiceError::Config("REPORTRANK_CHECKPOINT is not set".into()))?;
        let data_dir = get("REPORTRANK_DATA_DIR").unwrap_or_else(|| "reportrank-data".into());
        let mut cfg = ServiceConfig::new(checkpoint.into(), data_dir.into());
        if let Some(v) = get("REPORTRANK_LISTEN") {
            cfg.listen = v
                .parse()
                .map_err(|e| ServiceError::Config(format!("REPORTRANK_LISTEN={v:?}: {e}")))?;
        }
        if let Some(v) = get("REPORTRANK_MAX_UPLOAD_BYTES") {
            cfg.max_upload_bytes = parse_positive("REPORTRANK_MAX_UPLOAD_BYTES", &v)?;
        }
        if let Some(v) = get("REPORTRANK_WORKERS") {
            cfg.workers = parse_positive("REPORTRANK_WORKERS", &v)?;
        }
        cfg.headings = get("REPORTRANK_HEADINGS").map(PathBuf::from);
        Ok(cfg)
    }
}

fn parse_positive(name: &str, v: &str) -> Result<usize, ServiceError> {
    match v.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(ServiceError::Config(format!("{name}={v:?} must be a positive integer"))),
    }
}
