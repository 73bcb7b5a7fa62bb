use super::{
    PendingQuery, PosteriorExport, Session, SessionConfig, SessionReport, SessionState,
    SessionSummary,
};
use crate::abc::SimulationCache;
use crate::error::{invalid, Error, Result};
use crate::feedback::FeedbackSource;
use crate::simulators::ParameterVector;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

/// Cache rows stored next to a session so a reload need not re-simulate.
#[derive(Serialize, Deserialize)]
struct CacheFile {
    params: Vec<ParameterVector>,
    stats: Vec<Vec<f64>>,
}

/// Sessions on disk under one directory, each guarded by its own lock so
/// mutations of a session are serialized while different sessions proceed
/// concurrently.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .ok_or_else(|| invalid("session path has no directory"))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
        return Err(Error::SessionNotFound(id.to_string()));
    }
    Ok(())
}

fn now() -> Option<u64> {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn state_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn cache_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.cache.json"))
    }

    fn persister(&self) -> impl FnMut(&SessionState) -> Result<()> + '_ {
        move |state: &SessionState| {
            write_atomic(
                &self.state_path(&state.id),
                &serde_json::to_vec_pretty(state)?,
            )
        }
    }

    fn insert(&self, session: Session) -> Arc<Mutex<Session>> {
        let id = session.state().id.clone();
        let handle = Arc::new(Mutex::new(session));
        self.sessions
            .lock()
            .expect("store lock")
            .insert(id, handle.clone());
        handle
    }

    /// Creates a session, persisting it before returning.
    pub fn create(&self, config: SessionConfig) -> Result<SessionSummary> {
        config.validate()?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let cache = config.build_cache()?;
        let file = CacheFile {
            params: cache.params().to_vec(),
            stats: cache.stats().to_vec(),
        };
        write_atomic(&self.cache_path(&id), &serde_json::to_vec(&file)?)?;
        let session = Session::start(id, config, cache, &mut self.persister())?;
        let summary = session.summary();
        self.insert(session);
        Ok(summary)
    }

    fn load(&self, id: &str) -> Result<Session> {
        let path = self.state_path(id);
        if !path.exists() {
            return Err(Error::SessionNotFound(id.to_string()));
        }
        let state: SessionState = serde_json::from_slice(&fs::read(&path)?)?;
        let cache = fs::read(self.cache_path(id))
            .ok()
            .and_then(|bytes| serde_json::from_slice::<CacheFile>(&bytes).ok())
            .and_then(|f| {
                SimulationCache::from_parts(state.config.model.kind(), f.params, f.stats).ok()
            })
            .map(|mut c| {
                c.stream = Some(state.config.root().child("cache", 0));
                c
            });
        let mut session = Session::resume(state, cache)?;
        // Finish a transition a crash interrupted.
        session.advance(&mut self.persister())?;
        Ok(session)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        check_id(id)?;
        if let Some(s) = self.sessions.lock().expect("store lock").get(id) {
            return Ok(s.clone());
        }
        let session = self.load(id)?;
        let mut map = self.sessions.lock().expect("store lock");
        Ok(map
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(session)))
            .clone())
    }

    fn with<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T>) -> Result<T> {
        let handle = self.session(id)?;
        let mut session = handle
            .lock()
            .map_err(|_| invalid("session lock poisoned"))?;
        f(&mut session)
    }

    pub fn state(&self, id: &str) -> Result<SessionState> {
        self.with(id, |s| Ok(s.state().clone()))
    }

    pub fn summary(&self, id: &str) -> Result<SessionSummary> {
        self.with(id, |s| Ok(s.summary()))
    }

    pub fn query_view(&self, id: &str) -> Result<(SessionSummary, PendingQuery)> {
        self.with(id, |s| Ok((s.summary(), s.query_view()?.clone())))
    }

    /// Records human feedback and computes the next query.
    pub fn post_feedback(
        &self,
        id: &str,
        iteration: usize,
        statistic: usize,
        feedback: bool,
    ) -> Result<SessionSummary> {
        self.with(id, |s| {
            s.post_feedback(
                iteration,
                statistic,
                feedback,
                FeedbackSource::Human,
                now(),
                &mut self.persister(),
            )?;
            Ok(s.summary())
        })
    }

    pub fn report(&self, id: &str) -> Result<SessionReport> {
        self.with(id, |s| Ok(s.report()))
    }

    pub fn export(&self, id: &str) -> Result<PosteriorExport> {
        self.with(id, |s| s.export())
    }

    /// Drops in-memory copies so the next access reloads from disk.
    pub fn evict(&self, id: &str) {
        self.sessions.lock().expect("store lock").remove(id);
    }
}
