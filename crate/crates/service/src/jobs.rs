//! Job table: queued runs, their progress and their results.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use stocklink::runs::{self, Manifest, RunError, RunReport};
use stocklink::search::{Monitor, Progress};
use tokio::sync::{watch, Semaphore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Archive,
    Match,
    Tradeoff,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobState {
    fn rank(self) -> u8 {
        match self {
            JobState::Queued => 0,
            JobState::Running => 1,
            _ => 2,
        }
    }

    pub fn is_terminal(self) -> bool {
        self.rank() == 2
    }
}

/// Everything the API reports about a job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobSnapshot {
    pub id: u64,
    pub kind: JobKind,
    pub state: JobState,
    pub evaluations: usize,
    pub budget: usize,
    pub best_f_kin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pareto: Option<Vec<(f64, f64)>>,
    pub result: Option<RunReport>,
    pub error: Option<String>,
}

impl JobSnapshot {
    /// Moves forward only; returns false for a refused transition.
    fn advance(&mut self, next: JobState) -> bool {
        if self.state.is_terminal() || next.rank() <= self.state.rank() {
            return false;
        }
        self.state = next;
        true
    }

    fn record(&mut self, p: &Progress) {
        self.evaluations = p.evaluations.min(p.budget);
        self.budget = p.budget;
        if p.best_f_kin.is_finite() {
            self.best_f_kin = Some(self.best_f_kin.map_or(p.best_f_kin, |b| b.min(p.best_f_kin)));
        }
        self.pareto = p.pareto.clone();
    }
}

struct Entry {
    tx: watch::Sender<JobSnapshot>,
    cancel: Arc<AtomicBool>,
}

/// Forwards solver progress into the job's channel.
struct JobMonitor {
    tx: watch::Sender<JobSnapshot>,
    cancel: Arc<AtomicBool>,
}

impl Monitor for JobMonitor {
    fn on_progress(&self, p: &Progress) {
        self.tx.send_modify(|s| s.record(p));
    }

    fn is_cancelled(&self) -> bool {
        self.cancel.load(Ordering::Relaxed)
    }
}

#[derive(Debug, PartialEq, Eq)]
pub struct OverCapacity;

pub struct JobTable {
    jobs: Mutex<BTreeMap<u64, Entry>>,
    next_id: Mutex<u64>,
    permits: Arc<Semaphore>,
    max_active: usize,
    workdir: PathBuf,
}

impl JobTable {
    /// `max_parallel` jobs run at once; at most `max_active` are queued or running.
    pub fn new(workdir: PathBuf, max_parallel: usize, max_active: usize) -> Self {
        Self {
            jobs: Mutex::new(BTreeMap::new()),
            next_id: Mutex::new(1),
            permits: Arc::new(Semaphore::new(max_parallel.max(1))),
            max_active: max_active.max(1),
            workdir,
        }
    }

    pub fn job_dir(&self, id: u64) -> PathBuf {
        self.workdir.join("jobs").join(id.to_string())
    }

    pub fn snapshot(&self, id: u64) -> Option<JobSnapshot> {
        self.jobs.lock().expect("job table").get(&id).map(|e| e.tx.borrow().clone())
    }

    pub fn subscribe(&self, id: u64) -> Option<watch::Receiver<JobSnapshot>> {
        self.jobs.lock().expect("job table").get(&id).map(|e| e.tx.subscribe())
    }

    /// Requests cooperative cancellation; a queued job is cancelled at once.
    pub fn cancel(&self, id: u64) -> Option<JobSnapshot> {
        let jobs = self.jobs.lock().expect("job table");
        let entry = jobs.get(&id)?;
        entry.cancel.store(true, Ordering::Relaxed);
        entry.tx.send_modify(|s| {
            if s.state == JobState::Queued {
                s.advance(JobState::Cancelled);
            }
        });
        let snapshot = entry.tx.borrow().clone();
        Some(snapshot)
    }

    /// Queues a run and starts it when a slot frees up.
    pub fn submit(self: &Arc<Self>, kind: JobKind, manifest: Manifest, budget: usize) -> Result<u64, OverCapacity> {
        let (id, tx, cancel) = {
            let mut jobs = self.jobs.lock().expect("job table");
            let active = jobs.values().filter(|e| !e.tx.borrow().state.is_terminal()).count();
            if active >= self.max_active {
                return Err(OverCapacity);
            }
            let mut next = self.next_id.lock().expect("job ids");
            let id = *next;
            *next += 1;
            let (tx, _) = watch::channel(JobSnapshot {
                id,
                kind,
                state: JobState::Queued,
                evaluations: 0,
                budget,
                best_f_kin: None,
                pareto: None,
                result: None,
                error: None,
            });
            let cancel = Arc::new(AtomicBool::new(false));
            jobs.insert(id, Entry { tx: tx.clone(), cancel: cancel.clone() });
            (id, tx, cancel)
        };
        let permits = self.permits.clone();
        let out = self.job_dir(id);
        tokio::spawn(async move {
            let _permit = permits.acquire_owned().await.expect("semaphore is never closed");
            if cancel.load(Ordering::Relaxed) {
                tx.send_modify(|s| {
                    s.advance(JobState::Cancelled);
                });
                return;
            }
            tx.send_modify(|s| {
                s.advance(JobState::Running);
            });
            let monitor = JobMonitor { tx: tx.clone(), cancel: cancel.clone() };
            let outcome = tokio::task::spawn_blocking(move || runs::execute(&manifest, &out, &monitor)).await;
            tx.send_modify(|s| match outcome {
                Ok(Ok(report)) => {
                    if let Some(best) = ["min", "best_f_kin"].iter().find_map(|k| report.summary.get(*k)?.as_f64()) {
                        s.best_f_kin = Some(best);
                    }
                    if s.kind == JobKind::Archive {
                        s.evaluations = s.budget;
                    }
                    s.result = Some(report);
                    s.advance(JobState::Done);
                }
                Ok(Err(RunError::Cancelled)) => {
                    s.advance(JobState::Cancelled);
                }
                Ok(Err(e)) => {
                    s.error = Some(e.to_string());
                    s.advance(JobState::Failed);
                }
                Err(join) => {
                    s.error = Some(format!("job panicked: {join}"));
                    s.advance(JobState::Failed);
                }
            });
        });
        Ok(id)
    }
}
