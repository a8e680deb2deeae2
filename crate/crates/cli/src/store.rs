use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use ftg_core::CheckpointF64;
use serde::Serialize;

use crate::error::{ErrorKind, ServiceError};

pub const CHECKPOINT_EXTENSION: &str = "ftgc";
pub const CHECKPOINT_DIR_ENV: &str = "FTG_CHECKPOINT_DIR";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckpointInfo {
    pub id: String,
    pub loaded: bool,
    pub current: bool,
}

#[derive(Default)]
struct State {
    current: Option<String>,
    loaded: HashMap<String, Arc<CheckpointF64>>,
}

/// Checkpoints by id. An id names `<dir>/<id>.ftgc`; loaded checkpoints are
/// shared read-only between requests and loading takes the write lock.
pub struct CheckpointStore {
    dir: Option<PathBuf>,
    state: RwLock<State>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && !id.starts_with('.')
}

impl CheckpointStore {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir, state: RwLock::new(State::default()) }
    }

    pub fn from_env() -> Self {
        Self::new(std::env::var_os(CHECKPOINT_DIR_ENV).map(PathBuf::from))
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers an in-memory checkpoint and makes it current.
    pub fn insert(&self, id: impl Into<String>, checkpoint: CheckpointF64) {
        let id = id.into();
        let mut state = self.write();
        state.loaded.insert(id.clone(), Arc::new(checkpoint));
        state.current = Some(id);
    }

    pub fn current(&self) -> Option<(String, Arc<CheckpointF64>)> {
        let state = self.read();
        let id = state.current.clone()?;
        let ck = state.loaded.get(&id).cloned()?;
        Some((id, ck))
    }

    /// Ids on disk plus any registered in memory, sorted.
    pub fn list(&self) -> Result<Vec<CheckpointInfo>, ServiceError> {
        let mut ids: Vec<String> = Vec::new();
        if let Some(dir) = &self.dir {
            if dir.is_dir() {
                for entry in std::fs::read_dir(dir)? {
                    let path = entry?.path();
                    if path.extension().is_some_and(|e| e == CHECKPOINT_EXTENSION) {
                        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                            ids.push(stem.to_string());
                        }
                    }
                }
            }
        }
        let state = self.read();
        ids.extend(state.loaded.keys().cloned());
        ids.sort();
        ids.dedup();
        Ok(ids
            .into_iter()
            .map(|id| CheckpointInfo {
                loaded: state.loaded.contains_key(&id),
                current: state.current.as_deref() == Some(id.as_str()),
                id,
            })
            .collect())
    }

    fn read_file(&self, id: &str) -> Result<CheckpointF64, ServiceError> {
        let missing = || ServiceError::not_found(format!("unknown checkpoint {id:?}"));
        if !valid_id(id) {
            return Err(missing());
        }
        let path = self.dir.as_ref().ok_or_else(missing)?.join(format!("{id}.{CHECKPOINT_EXTENSION}"));
        if !path.is_file() {
            return Err(missing());
        }
        CheckpointF64::load(&path).map_err(|e| ServiceError::new(ErrorKind::BadRequest, format!("checkpoint {id:?}: {e}")))
    }

    /// Loads `id` from disk (or reuses it) and makes it current.
    pub fn load(&self, id: &str) -> Result<Arc<CheckpointF64>, ServiceError> {
        let mut state = self.write();
        let ck = match state.loaded.get(id) {
            Some(ck) => ck.clone(),
            None => {
                let ck = Arc::new(self.read_file(id)?);
                state.loaded.insert(id.to_string(), ck.clone());
                ck
            }
        };
        state.current = Some(id.to_string());
        Ok(ck)
    }

    /// The named checkpoint, loading it without changing the current one, or
    /// the current checkpoint when `id` is `None`.
    pub fn resolve(&self, id: Option<&str>) -> Result<(String, Arc<CheckpointF64>), ServiceError> {
        match id {
            None => self
                .current()
                .ok_or_else(|| ServiceError::new(ErrorKind::NoCheckpoint, "no checkpoint loaded")),
            Some(id) => {
                if let Some(ck) = self.read().loaded.get(id) {
                    return Ok((id.to_string(), ck.clone()));
                }
                let mut state = self.write();
                let ck = match state.loaded.get(id) {
                    Some(ck) => ck.clone(),
                    None => {
                        let ck = Arc::new(self.read_file(id)?);
                        state.loaded.insert(id.to_string(), ck.clone());
                        ck
                    }
                };
                Ok((id.to_string(), ck))
            }
        }
    }
}
