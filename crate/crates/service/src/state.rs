use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use reportrank_core::checkpoint::Checkpoint;
use reportrank_core::ingest::HeadingMap;
use reportrank_core::ranking::ScoreMatrix;
use tokio::sync::Semaphore;

use crate::error::ServiceError;
use crate::store::{FeedbackEvent, ReportLogEntry, ReportRecord, ReportStatus, Store};

/// Everything handlers share. Reads take short-lived locks; every write
/// also appends to the store, which serializes disk access.
#[derive(Debug)]
pub struct AppState {
    pub(crate) model: Arc<Checkpoint>,
    pub(crate) headings: HeadingMap,
    pub(crate) store: Store,
    pub(crate) reports: RwLock<HashMap<String, ReportRecord>>,
    pub(crate) scores: RwLock<HashMap<String, Arc<ScoreMatrix>>>,
    pub(crate) feedback: Mutex<Vec<FeedbackEvent>>,
    jobs: Arc<Semaphore>,
    pub(crate) max_upload_bytes: usize,
}

impl AppState {
    /// Opens the data directory and replays its logs. Call [`resume`](Self::resume)
    /// from within a runtime to rescore stored reports.
    pub fn open(
        model: Checkpoint,
        headings: HeadingMap,
        data_dir: &Path,
        max_upload_bytes: usize,
        workers: usize,
    ) -> Result<Arc<Self>, ServiceError> {
        let (store, replayed) = Store::open(data_dir)?;
        if replayed.skipped_lines > 0 {
            tracing::warn!(lines = replayed.skipped_lines, "skipped undecodable log lines");
        }
        Ok(Arc::new(AppState {
            model: Arc::new(model),
            headings,
            store,
            reports: RwLock::new(replayed.reports),
            scores: RwLock::new(HashMap::new()),
            feedback: Mutex::new(replayed.feedback),
            jobs: Arc::new(Semaphore::new(workers.max(1))),
            max_upload_bytes,
        }))
    }

    /// Queues every stored report that is not failed for scoring.
    pub fn resume(self: &Arc<Self>) {
        let pending: Vec<String> = {
            let mut reports = self.reports.write().unwrap_or_else(|e| e.into_inner());
            reports
                .values_mut()
                .filter(|r| r.status != ReportStatus::Failed)
                .map(|r| {
                    r.status = ReportStatus::Parsing;
                    r.doc_id.clone()
                })
                .collect()
        };
        for doc_id in pending {
            self.schedule(doc_id);
        }
    }

    pub fn model(&self) -> &Checkpoint {
        &self.model
    }

    pub(crate) fn report(&self, doc_id: &str) -> Option<ReportRecord> {
        self.reports.read().unwrap_or_else(|e| e.into_inner()).get(doc_id).cloned()
    }

    pub(crate) fn scores(&self, doc_id: &str) -> Option<Arc<ScoreMatrix>> {
        self.scores.read().unwrap_or_else(|e| e.into_inner()).get(doc_id).cloned()
    }

    /// Scores a report on the bounded worker pool.
    pub(crate) fn schedule(self: &Arc<Self>, doc_id: String) {
        let state = Arc::clone(self);
        tokio::spawn(async move {
            let Ok(_permit) = Arc::clone(&state.jobs).acquire_owned().await else {
                return;
            };
            let worker = Arc::clone(&state);
            let id = doc_id.clone();
            let joined = tokio::task::spawn_blocking(move || {
                let doc = worker.report(&id).map(|r| r.document);
                let result = match doc {
                    Some(doc) => worker.model.score(&doc).map_err(|e| e.to_string()),
                    None => return,
                };
                worker.finish(&id, result);
            })
            .await;
            if let Err(e) = joined {
                state.finish(&doc_id, Err(format!("scoring task failed: {e}")));
            }
        });
    }

    fn finish(&self, doc_id: &str, result: Result<ScoreMatrix, String>) {
        let (status, error) = match result {
            Ok(matrix) => {
                self.scores
                    .write()
                    .unwrap_or_else(|e| e.into_inner())
                    .insert(doc_id.to_string(), Arc::new(matrix));
                (ReportStatus::Scored, None)
            }
            Err(msg) => {
                tracing::warn!(doc_id, error = %msg, "scoring failed");
                (ReportStatus::Failed, Some(msg))
            }
        };
        if let Some(rec) = self.reports.write().unwrap_or_else(|e| e.into_inner()).get_mut(doc_id) {
            rec.status = status;
            rec.error.clone_from(&error);
        }
        let entry = ReportLogEntry::Status {
            doc_id: doc_id.to_string(),
            status,
            error,
        };
        if let Err(e) = self.store.append_report(&entry) {
            tracing::error!(doc_id, error = %e, "cannot persist report status");
        }
    }
}
