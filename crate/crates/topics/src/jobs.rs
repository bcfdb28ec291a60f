//! Background topic-model runs.
//!
//! Each topic has a FIFO of requested runs and at most one running job.
//! Jobs execute on their own threads; callers poll status or wait on a run.
//! Finished runs are immutable and, when a directory is configured, saved
//! as `runs/<id>.json` together with the corpus they were fitted on.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, SubsecRound, Utc};
use colloquy_core::domain::TopicId;
use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};

use crate::cluster::run_cluster_topics;
use crate::coherence::umass_coherence;
use crate::corpus::{Corpus, ModelError};
use crate::lda::{run_lda, LdaConfig};
use crate::result::{Method, TopicModelResult, TOP_WORDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunId(pub u64);

impl fmt::Display for RunId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Queued,
    Running,
    Finished,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Finished | RunStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRequest {
    pub method: Method,
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    /// LDA only.
    #[serde(default)]
    pub iterations: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
}

impl RunRequest {
    pub fn lda_config(&self) -> LdaConfig {
        let defaults = LdaConfig::default();
        LdaConfig {
            alpha: self.alpha,
            beta: self.beta.unwrap_or(defaults.beta),
            iterations: self.iterations.unwrap_or(defaults.iterations),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.k < 2 {
            return Err(ModelError::InvalidConfig("a run needs at least 2 topics".into()));
        }
        if self.method == Method::Lda {
            self.lda_config().validate(self.k)?;
        }
        Ok(())
    }

    /// Fits the requested model.
    pub fn fit(&self, corpus: &Corpus) -> Result<TopicModelResult, ModelError> {
        match self.method {
            Method::Lda => run_lda(corpus, self.k, &self.lda_config()),
            Method::Cluster => run_cluster_topics(corpus, self.k, self.seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModelRun {
    pub id: RunId,
    pub topic_id: TopicId,
    pub request: RunRequest,
    pub status: RunStatus,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<DateTime<Utc>>,
    /// Set once the run finished or failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_seconds: Option<f64>,
    /// Mean UMass coherence of the top words; set only for finished runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coherence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub documents: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum JobError {
    #[error("unknown topic-model run {0}")]
    UnknownRun(RunId),
    #[error("run {0} has not finished")]
    NotFinished(RunId),
    #[error("run has no topic {0}")]
    UnknownTopic(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cannot save run: {0}")]
    Io(String),
}

/// A finished run's model with the corpus it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinishedRun {
    pub result: TopicModelResult,
    pub corpus: Corpus,
}

#[derive(Serialize, Deserialize)]
struct RunFile {
    run: TopicModelRun,
    #[serde(default)]
    output: Option<FinishedRun>,
}

/// Produces the corpus for a topic when one of its jobs starts.
pub type CorpusSource = Arc<dyn Fn(TopicId) -> Corpus + Send + Sync>;

#[derive(Default)]
struct State {
    runs: BTreeMap<RunId, TopicModelRun>,
    outputs: HashMap<RunId, Arc<FinishedRun>>,
    pending: HashMap<TopicId, VecDeque<RunId>>,
    running: HashSet<TopicId>,
    next_id: u64,
}

struct Inner {
    state: Mutex<State>,
    changed: Condvar,
    source: CorpusSource,
    dir: Option<PathBuf>,
}

#[derive(Clone)]
pub struct RunQueue {
    inner: Arc<Inner>,
}

impl fmt::Debug for RunQueue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RunQueue").field("dir", &self.inner.dir).finish_non_exhaustive()
    }
}

fn now() -> DateTime<Utc> {
    Utc::now().trunc_subsecs(3)
}

impl RunQueue {
    pub fn new(source: CorpusSource) -> Self {
        RunQueue {
            inner: Arc::new(Inner {
                state: Mutex::new(State { next_id: 1, ..State::default() }),
                changed: Condvar::new(),
                source,
                dir: None,
            }),
        }
    }

    /// A queue that saves runs under `dir/runs`. Runs that were still
    /// queued or running when the process stopped are marked failed.
    pub fn open(dir: impl Into<PathBuf>, source: CorpusSource) -> Result<Self, JobError> {
        let dir = dir.into().join("runs");
        std::fs::create_dir_all(&dir).map_err(|e| JobError::Io(e.to_string()))?;
        let mut state = State { next_id: 1, ..State::default() };
        let mut interrupted = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| JobError::Io(e.to_string()))? {
            let path = entry.map_err(|e| JobError::Io(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| JobError::Io(e.to_string()))?;
            let mut file: RunFile =
                serde_json::from_str(&text).map_err(|e| JobError::Io(format!("{}: {e}", path.display())))?;
            if !file.run.status.is_terminal() {
                file.run.status = RunStatus::Failed;
                file.run.error = Some("interrupted by a restart".into());
                file.run.duration_seconds = Some(0.0);
                interrupted.push(file.run.clone());
            }
            state.next_id = state.next_id.max(file.run.id.0 + 1);
            if let Some(output) = file.output {
                state.outputs.insert(file.run.id, Arc::new(output));
            }
            state.runs.insert(file.run.id, file.run);
        }
        let queue = RunQueue {
            inner: Arc::new(Inner { state: Mutex::new(state), changed: Condvar::new(), source, dir: Some(dir) }),
        };
        for run in interrupted {
            queue.inner.save(&run, None)?;
        }
        Ok(queue)
    }

    /// Validates and queues a run; it starts as soon as no other run of
    /// the same topic is running.
    pub fn enqueue(&self, topic_id: TopicId, request: RunRequest) -> Result<TopicModelRun, JobError> {
        request.validate()?;
        let mut state = self.inner.state.lock();
        let id = RunId(state.next_id);
        state.next_id += 1;
        let run = TopicModelRun {
            id,
            topic_id,
            request,
            status: RunStatus::Queued,
            created_at: now(),
            started_at: None,
            duration_seconds: None,
            coherence: None,
            documents: None,
            error: None,
        };
        self.inner.save(&run, None)?;
        state.runs.insert(id, run.clone());
        state.pending.entry(topic_id).or_default().push_back(id);
        Inner::start_next(&self.inner, &mut state, topic_id);
        Ok(run)
    }

    pub fn status(&self, id: RunId) -> Result<TopicModelRun, JobError> {
        self.inner.state.lock().runs.get(&id).cloned().ok_or(JobError::UnknownRun(id))
    }

    /// Run history of a topic, oldest first.
    pub fn list(&self, topic_id: TopicId) -> Vec<TopicModelRun> {
        self.inner.state.lock().runs.values().filter(|r| r.topic_id == topic_id).cloned().collect()
    }

    pub fn output(&self, id: RunId) -> Result<Arc<FinishedRun>, JobError> {
        let state = self.inner.state.lock();
        let run = state.runs.get(&id).ok_or(JobError::UnknownRun(id))?;
        if run.status != RunStatus::Finished {
            return Err(JobError::NotFinished(id));
        }
        state.outputs.get(&id).cloned().ok_or(JobError::NotFinished(id))
    }

    /// Blocks until the run is finished or failed, or the timeout passes.
    pub fn wait(&self, id: RunId, timeout: Duration) -> Result<TopicModelRun, JobError> {
        let deadline = Instant::now() + timeout;
        let mut state = self.inner.state.lock();
        loop {
            let run = state.runs.get(&id).ok_or(JobError::UnknownRun(id))?;
            if run.status.is_terminal() || Instant::now() >= deadline {
                return Ok(run.clone());
            }
            self.inner.changed.wait_until(&mut state, deadline);
        }
    }
}

impl Inner {
    fn save(&self, run: &TopicModelRun, output: Option<&FinishedRun>) -> Result<(), JobError> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let file = RunFile { run: run.clone(), output: output.cloned() };
        let bytes = serde_json::to_vec(&file).map_err(|e| JobError::Io(e.to_string()))?;
        let path = dir.join(format!("{}.json", run.id));
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, bytes).map_err(|e| JobError::Io(e.to_string()))?;
        std::fs::rename(&tmp, &path).map_err(|e| JobError::Io(e.to_string()))
    }

    fn start_next(self: &Arc<Self>, state: &mut State, topic_id: TopicId) {
        if state.running.contains(&topic_id) {
            return;
        }
        let Some(id) = state.pending.get_mut(&topic_id).and_then(VecDeque::pop_front) else { return };
        let run = state.runs.get_mut(&id).expect("queued runs are recorded");
        run.status = RunStatus::Running;
        run.started_at = Some(now());
        let request = run.request.clone();
        state.running.insert(topic_id);
        self.changed.notify_all();
        let inner = Arc::clone(self);
        std::thread::Builder::new()
            .name(format!("topic-model-{id}"))
            .spawn(move || inner.execute(id, topic_id, request))
            .expect("spawn topic-model worker");
    }

    fn execute(self: Arc<Self>, id: RunId, topic_id: TopicId, request: RunRequest) {
        let clock = Instant::now();
        let work = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            let corpus = (self.source)(topic_id);
            let result = request.fit(&corpus)?;
            let coherence = umass_coherence(&result.top_words, &corpus, TOP_WORDS);
            Ok::<_, ModelError>((FinishedRun { result, corpus }, coherence))
        }));
        let elapsed = clock.elapsed().as_secs_f64();

        let mut state = self.state.lock();
        let run = state.runs.get_mut(&id).expect("running runs are recorded");
        run.duration_seconds = Some(elapsed);
        let output = match work {
            Ok(Ok((output, coherence))) => {
                run.status = RunStatus::Finished;
                run.coherence = Some(coherence);
                run.documents = Some(output.corpus.len());
                Some(output)
            }
            Ok(Err(e)) => {
                run.status = RunStatus::Failed;
                run.error = Some(e.to_string());
                None
            }
            Err(_) => {
                run.status = RunStatus::Failed;
                run.error = Some("the model crashed".into());
                None
            }
        };
        let snapshot = run.clone();
        if let Err(e) = self.save(&snapshot, output.as_ref()) {
            let run = state.runs.get_mut(&id).expect("present");
            run.error = Some(e.to_string());
        }
        if let Some(output) = output {
            state.outputs.insert(id, Arc::new(output));
        }
        state.running.remove(&topic_id);
        self.changed.notify_all();
        self.start_next(&mut state, topic_id);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source(docs: usize) -> CorpusSource {
        Arc::new(move |_| {
            Corpus::from_tokens((0..docs).map(|i| {
                if i % 2 == 0 {
                    vec!["apple".to_string(), "banana".into(), "cherry".into()]
                } else {
                    vec!["river".to_string(), "stone".into(), "valley".into()]
                }
            }))
        })
    }

    fn request(method: Method, k: usize) -> RunRequest {
        RunRequest { method, k, seed: 3, iterations: Some(50), alpha: None, beta: None }
    }

    #[test]
    fn lifecycle() {
        let q = RunQueue::new(source(20));
        let run = q.enqueue(TopicId(1), request(Method::Lda, 2)).unwrap();
        assert!(matches!(run.status, RunStatus::Queued | RunStatus::Running));
        let done = q.wait(run.id, Duration::from_secs(30)).unwrap();
        assert_eq!(done.status, RunStatus::Finished);
        assert!(done.coherence.is_some() && done.duration_seconds.is_some());
        assert_eq!(done.documents, Some(20));
        assert_eq!(q.output(run.id).unwrap().result.k, 2);
        let second = q.enqueue(TopicId(1), request(Method::Cluster, 2)).unwrap();
        q.wait(second.id, Duration::from_secs(30)).unwrap();
        let rows = q.list(TopicId(1));
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.coherence.is_some()));
        assert!(q.list(TopicId(2)).is_empty());
    }

    #[test]
    fn small_corpus_fails_with_message() {
        let q = RunQueue::new(source(3));
        let run = q.enqueue(TopicId(1), request(Method::Lda, 5)).unwrap();
        let done = q.wait(run.id, Duration::from_secs(30)).unwrap();
        assert_eq!(done.status, RunStatus::Failed);
        assert!(done.error.unwrap().contains("corpus too small"));
        assert!(done.coherence.is_none());
        assert!(done.duration_seconds.is_some());
        assert_eq!(q.output(run.id), Err(JobError::NotFinished(run.id)));
    }

    #[test]
    fn invalid_requests_rejected_up_front() {
        let q = RunQueue::new(source(10));
        assert!(q.enqueue(TopicId(1), request(Method::Lda, 1)).is_err());
        assert!(matches!(q.status(RunId(99)), Err(JobError::UnknownRun(_))));
    }

    #[test]
    fn one_running_job_per_topic() {
        let gate = Arc::new((Mutex::new(0usize), Condvar::new()));
        let active = Arc::new(Mutex::new((0usize, 0usize)));
        let a = Arc::clone(&active);
        let src: CorpusSource = Arc::new(move |_| {
            {
                let mut g = a.lock();
                g.0 += 1;
                g.1 = g.1.max(g.0);
            }
            std::thread::sleep(Duration::from_millis(20));
            a.lock().0 -= 1;
            source(6)(TopicId(0))
        });
        let _ = gate;
        let q = RunQueue::new(src);
        let ids: Vec<_> = (0..4).map(|_| q.enqueue(TopicId(1), request(Method::Cluster, 2)).unwrap().id).collect();
        for id in &ids {
            assert_eq!(q.wait(*id, Duration::from_secs(30)).unwrap().status, RunStatus::Finished);
        }
        assert_eq!(active.lock().1, 1);
        let started: Vec<_> = ids.iter().map(|id| q.status(*id).unwrap().started_at.unwrap()).collect();
        assert!(started.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn persisted_runs_reload() {
        let dir = tempfile::tempdir().unwrap();
        let id = {
            let q = RunQueue::open(dir.path(), source(10)).unwrap();
            let run = q.enqueue(TopicId(4), request(Method::Cluster, 2)).unwrap();
            q.wait(run.id, Duration::from_secs(30)).unwrap();
            run.id
        };
        let q = RunQueue::open(dir.path(), source(10)).unwrap();
        assert_eq!(q.status(id).unwrap().status, RunStatus::Finished);
        assert_eq!(q.output(id).unwrap().corpus.len(), 10);
        let next = q.enqueue(TopicId(4), request(Method::Cluster, 2)).unwrap();
        assert!(next.id > id);
    }
}
