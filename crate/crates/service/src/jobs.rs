use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobView {
    pub id: String,
    pub state: JobState,
    pub progress: f64,
    /// Where the finished result is served.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
struct Status {
    state: JobState,
    progress: f64,
    error: Option<(u16, String)>,
}

/// A background computation with a monotone lifecycle.
#[derive(Debug)]
pub struct Job {
    pub id: String,
    pub result_ref: String,
    status: Mutex<Status>,
}

impl Job {
    fn new(id: String, result_ref: String) -> Self {
        Self { id, result_ref, status: Mutex::new(Status { state: JobState::Queued, progress: 0.0, error: None }) }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Status> {
        self.status.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn state(&self) -> JobState {
        self.lock().state
    }

    pub fn start(&self) {
        let mut s = self.lock();
        if s.state == JobState::Queued {
            s.state = JobState::Running;
        }
    }

    /// Raises progress; values never decrease and stay below 1 until done.
    pub fn advance(&self, progress: f64) {
        let mut s = self.lock();
        if s.state == JobState::Running {
            s.progress = s.progress.max(progress.clamp(0.0, 0.99));
        }
    }

    pub fn finish(&self) {
        let mut s = self.lock();
        if matches!(s.state, JobState::Queued | JobState::Running) {
            s.state = JobState::Done;
            s.progress = 1.0;
        }
    }

    pub fn fail(&self, status: u16, message: String) {
        let mut s = self.lock();
        if matches!(s.state, JobState::Queued | JobState::Running) {
            s.state = JobState::Failed;
            s.error = Some((status, message));
        }
    }

    /// HTTP status and message of a failed job.
    pub fn failure(&self) -> Option<(u16, String)> {
        self.lock().error.clone()
    }

    pub fn view(&self) -> JobView {
        let s = self.lock();
        JobView {
            id: self.id.clone(),
            state: s.state,
            progress: s.progress,
            result: (s.state == JobState::Done).then(|| self.result_ref.clone()),
            error: s.error.as_ref().map(|e| e.1.clone()),
        }
    }
}

#[derive(Debug, Default)]
pub struct Jobs {
    map: Mutex<HashMap<String, Arc<Job>>>,
}

impl Jobs {
    pub fn get(&self, id: &str) -> Option<Arc<Job>> {
        self.map.lock().unwrap_or_else(|p| p.into_inner()).get(id).cloned()
    }

    /// The job registered under `id`, creating it if absent; the flag is true on creation.
    pub fn get_or_create(&self, id: &str, result_ref: impl FnOnce() -> String) -> (Arc<Job>, bool) {
        let mut map = self.map.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(j) = map.get(id) {
            return (j.clone(), false);
        }
        let job = Arc::new(Job::new(id.to_string(), result_ref()));
        map.insert(id.to_string(), job.clone());
        (job, true)
    }
}
