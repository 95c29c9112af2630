//! Job history: an append-only JSON-lines log plus one artifact directory
//! per finished job.
//!
//! Layout under the data directory:
//!
//! ```text
//! jobs.log              one event per line: submitted, started, done, failed
//! jobs/<id>/            density.json, preview.png, model.stl, metrics.json
//! ```
//!
//! Artifacts are written to `jobs/<id>.tmp/` and renamed into place before
//! the `done` event is logged, so a `done` job always has a complete
//! directory. On open, jobs whose last event is `submitted` or `started`
//! were interrupted by a restart and are marked failed.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use topostudio::{BackendKind, DensityField, GenerationResult, ProblemSpec};

use crate::artifacts::Artifact;

pub const LOG_FILE: &str = "jobs.log";
const JOBS_DIR: &str = "jobs";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("job store I/O: {0}")]
    Io(#[from] io::Error),
    #[error("job store encoding: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown job {0}")]
    UnknownJob(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

/// The scalar part of a generation result; the field itself is the
/// `density.json` artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultSummary {
    pub compliance: f64,
    pub achieved_volfrac: f64,
    pub iterations: usize,
    pub seed: u64,
    pub converged: bool,
}

impl From<&GenerationResult> for ResultSummary {
    fn from(r: &GenerationResult) -> Self {
        Self {
            compliance: r.compliance,
            achieved_volfrac: r.achieved_volfrac,
            iterations: r.iterations,
            seed: r.seed,
            converged: r.converged,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Job {
    pub id: String,
    pub state: JobState,
    pub spec: Arc<ProblemSpec>,
    pub backend: BackendKind,
    pub parent_id: Option<String>,
    pub result: Option<ResultSummary>,
    pub error: Option<String>,
    /// Unix milliseconds.
    pub created_at: u64,
    pub finished_at: Option<u64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Record {
    Submitted {
        id: String,
        spec: ProblemSpec,
        backend: BackendKind,
        parent_id: Option<String>,
        created_at: u64,
    },
    Started {
        id: String,
    },
    Done {
        id: String,
        result: ResultSummary,
        finished_at: u64,
    },
    Failed {
        id: String,
        error: String,
        finished_at: u64,
    },
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

struct Inner {
    jobs: HashMap<String, Job>,
    order: Vec<String>,
    log: File,
}

impl Inner {
    fn append(&mut self, record: &Record) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(record)?;
        line.push(b'\n');
        self.log.write_all(&line)?;
        self.log.sync_data()?;
        Ok(())
    }

    fn apply(&mut self, record: Record) {
        match record {
            Record::Submitted {
                id,
                spec,
                backend,
                parent_id,
                created_at,
            } => {
                if !self.jobs.contains_key(&id) {
                    self.order.push(id.clone());
                }
                self.jobs.insert(
                    id.clone(),
                    Job {
                        id,
                        state: JobState::Queued,
                        spec: Arc::new(spec),
                        backend,
                        parent_id,
                        result: None,
                        error: None,
                        created_at,
                        finished_at: None,
                    },
                );
            }
            Record::Started { id } => {
                if let Some(job) = self.jobs.get_mut(&id) {
                    job.state = JobState::Running;
                }
            }
            Record::Done {
                id,
                result,
                finished_at,
            } => {
                if let Some(job) = self.jobs.get_mut(&id) {
                    job.state = JobState::Done;
                    job.result = Some(result);
                    job.finished_at = Some(finished_at);
                }
            }
            Record::Failed {
                id,
                error,
                finished_at,
            } => {
                if let Some(job) = self.jobs.get_mut(&id) {
                    job.state = JobState::Failed;
                    job.error = Some(error);
                    job.finished_at = Some(finished_at);
                }
            }
        }
    }
}

pub struct JobStore {
    dir: PathBuf,
    inner: Mutex<Inner>,
}

impl JobStore {
    /// Opens (or creates) the store in `dir` and replays its log.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(dir.join(JOBS_DIR))?;
        let log_path = dir.join(LOG_FILE);
        let records = match File::open(&log_path) {
            Ok(f) => read_log(f)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        let mut inner = Inner {
            jobs: HashMap::new(),
            order: Vec::new(),
            log,
        };
        for record in records {
            inner.apply(record);
        }

        let store_dir = dir.join(JOBS_DIR);
        let mut repairs = Vec::new();
        for id in &inner.order {
            let job = &inner.jobs[id];
            let reason = match job.state {
                JobState::Queued | JobState::Running => Some("interrupted by service restart"),
                JobState::Done if !store_dir.join(id).is_dir() => Some("artifacts missing"),
                _ => None,
            };
            if let Some(reason) = reason {
                repairs.push(Record::Failed {
                    id: id.clone(),
                    error: reason.to_string(),
                    finished_at: now_ms(),
                });
            }
        }
        for record in repairs {
            inner.append(&record)?;
            inner.apply(record);
        }
        remove_partial_dirs(&store_dir)?;

        Ok(Self {
            dir,
            inner: Mutex::new(inner),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        // a panic while holding the lock cannot leave the map half-updated
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Records a new queued job and returns it.
    pub fn submit(
        &self,
        spec: ProblemSpec,
        backend: BackendKind,
        parent_id: Option<String>,
    ) -> Result<Job, StoreError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let record = Record::Submitted {
            id: id.clone(),
            spec,
            backend,
            parent_id,
            created_at: now_ms(),
        };
        let mut inner = self.lock();
        inner.append(&record)?;
        inner.apply(record);
        Ok(inner.jobs[&id].clone())
    }

    pub fn start(&self, id: &str) -> Result<(), StoreError> {
        self.record(id, Record::Started { id: id.to_string() })
    }

    /// Publishes the artifacts and marks the job done.
    pub fn finish(
        &self,
        id: &str,
        result: &GenerationResult,
        artifacts: &[Artifact],
    ) -> Result<(), StoreError> {
        let final_dir = self.job_dir(id);
        let tmp_dir = self.dir.join(JOBS_DIR).join(format!("{id}.tmp"));
        if tmp_dir.exists() {
            fs::remove_dir_all(&tmp_dir)?;
        }
        fs::create_dir_all(&tmp_dir)?;
        for a in artifacts {
            fs::write(tmp_dir.join(a.name), &a.bytes)?;
        }
        fs::rename(&tmp_dir, &final_dir)?;
        self.record(
            id,
            Record::Done {
                id: id.to_string(),
                result: result.into(),
                finished_at: now_ms(),
            },
        )
    }

    pub fn fail(&self, id: &str, error: impl Into<String>) -> Result<(), StoreError> {
        self.record(
            id,
            Record::Failed {
                id: id.to_string(),
                error: error.into(),
                finished_at: now_ms(),
            },
        )
    }

    fn record(&self, id: &str, record: Record) -> Result<(), StoreError> {
        let mut inner = self.lock();
        if !inner.jobs.contains_key(id) {
            return Err(StoreError::UnknownJob(id.to_string()));
        }
        inner.append(&record)?;
        inner.apply(record);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<Job> {
        self.lock().jobs.get(id).cloned()
    }

    /// All jobs in submission order.
    pub fn list(&self) -> Vec<Job> {
        let inner = self.lock();
        inner.order.iter().map(|id| inner.jobs[id].clone()).collect()
    }

    fn job_dir(&self, id: &str) -> PathBuf {
        self.dir.join(JOBS_DIR).join(id)
    }

    /// Stored artifact bytes. Only call with ids known to the store.
    pub fn read_artifact(&self, id: &str, name: &str) -> Result<Vec<u8>, StoreError> {
        if self.get(id).is_none() {
            return Err(StoreError::UnknownJob(id.to_string()));
        }
        Ok(fs::read(self.job_dir(id).join(name))?)
    }

    /// The density field of a finished job.
    pub fn load_density(&self, id: &str) -> Result<DensityField, StoreError> {
        let bytes = self.read_artifact(id, crate::artifacts::DENSITY)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

fn read_log(file: File) -> Result<Vec<Record>, StoreError> {
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => records.push(r),
            // typically a line torn by a crash mid-write
            Err(e) => tracing::warn!("skipping unreadable job log line {}: {e}", n + 1),
        }
    }
    Ok(records)
}

fn remove_partial_dirs(dir: &Path) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "tmp") {
            fs::remove_dir_all(&path)?;
        }
    }
    Ok(())
}
