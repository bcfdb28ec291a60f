use std::ops::Deref;
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use colloquy_core::dialogue::{ConversationSession, DialogueConfig, DialogueEngine, GenericReflectionPicker};
use colloquy_core::store::now_millis;
use colloquy_core::{Catalog, Store, StoreError, ValenceLexicon};
use colloquy_topics::jobs::{CorpusSource, JobError};
use colloquy_topics::{build_corpus, RunQueue};

use crate::error::ApiError;

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

/// Idle time after which a participant session stops accepting requests.
pub const DEFAULT_SESSION_TTL_HOURS: i64 = 24;

pub struct ServerConfig {
    pub admin_token: String,
    /// Offsets the generic-reflection rotation.
    pub seed: u64,
    /// Where the catalog, sessions and topic-model runs are kept; `None`
    /// keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    pub session_ttl: Duration,
    pub clock: Clock,
    pub dialogue: DialogueConfig,
}

impl ServerConfig {
    pub fn new(admin_token: impl Into<String>) -> Self {
        ServerConfig {
            admin_token: admin_token.into(),
            seed: 0,
            data_dir: None,
            session_ttl: Duration::hours(DEFAULT_SESSION_TTL_HOURS),
            clock: Arc::new(now_millis),
            dialogue: DialogueConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("the admin token must not be empty")]
    EmptyToken,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Runs(#[from] JobError),
}

pub struct Shared {
    pub store: Arc<Store>,
    pub runs: RunQueue,
    pub picker: GenericReflectionPicker,
    pub dialogue: DialogueConfig,
    pub session_ttl: Duration,
    admin_token: String,
    clock: Clock,
}

#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl Deref for AppState {
    type Target = Shared;

    fn deref(&self) -> &Shared {
        &self.0
    }
}

impl AppState {
    pub fn new(config: ServerConfig) -> Result<Self, StartupError> {
        if config.admin_token.trim().is_empty() {
            return Err(StartupError::EmptyToken);
        }
        let store = Arc::new(match &config.data_dir {
            Some(dir) => Store::open(dir)?,
            None => Store::in_memory(),
        });
        let sessions = Arc::clone(&store);
        let source: CorpusSource = Arc::new(move |topic| build_corpus(&sessions.sessions_for_topic(topic)));
        let runs = match &config.data_dir {
            Some(dir) => RunQueue::open(dir, source)?,
            None => RunQueue::new(source),
        };
        Ok(AppState(Arc::new(Shared {
            store,
            runs,
            picker: GenericReflectionPicker::new(config.seed),
            dialogue: config.dialogue,
            session_ttl: config.session_ttl,
            admin_token: config.admin_token,
            clock: config.clock,
        })))
    }
}

impl Shared {
    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    /// Compares in time independent of where the first mismatch is.
    pub fn token_matches(&self, given: &str) -> bool {
        let (a, b) = (self.admin_token.as_bytes(), given.as_bytes());
        a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
    }

    pub fn expires_at(&self, session: &ConversationSession) -> DateTime<Utc> {
        session.last_activity + self.session_ttl
    }

    pub fn ensure_live(&self, session: &ConversationSession) -> Result<(), ApiError> {
        if self.now() > self.expires_at(session) {
            return Err(ApiError::session_expired());
        }
        Ok(())
    }

    /// The dialogue engine for the interview a session was started on.
    pub fn engine<'a>(
        &'a self,
        catalog: &'a Catalog,
        session: &ConversationSession,
    ) -> Result<DialogueEngine<'a>, ApiError> {
        let topic = catalog.topic(session.topic_id)?;
        let interview = catalog.interview(session.interview_id)?;
        Ok(DialogueEngine::new(
            topic,
            interview,
            catalog.assigned_categories(topic.id),
            ValenceLexicon::bundled(),
            &catalog.generic_reflections,
            &self.picker,
            &self.dialogue,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_comparison() {
        let state = AppState::new(ServerConfig::new("s3cret")).unwrap();
        assert!(state.token_matches("s3cret"));
        assert!(!state.token_matches("s3cre"));
        assert!(!state.token_matches("s3creT"));
        assert!(matches!(AppState::new(ServerConfig::new("  ")), Err(StartupError::EmptyToken)));
    }
}
