//! On-disk project: an append-only `events.jsonl` plus a periodic `snapshot.json`.
//!
//! Every submission is validated against the live state, appended and flushed to the
//! log, and only then applied, so the state is always a fold of what is on disk.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crel_core::eval::DatasetStats;
use crel_core::io::write_annotations;

use crate::model::{Event, Hit};
use crate::report::{self, ProjectStats};
use crate::workflow::{ProjectState, WorkflowError};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const EXPORT_FILE: &str = "gold.json";
/// Events between snapshots.
pub const SNAPSHOT_EVERY: u64 = 200;

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Core(#[from] crel_core::Error),
}

impl ProjectError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        ProjectError::Io { path: path.to_path_buf(), source }
    }

    pub fn is_io(&self) -> bool {
        match self {
            ProjectError::Io { .. } => true,
            ProjectError::Core(e) => e.is_io(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, ProjectError>;

pub struct Project {
    dir: PathBuf,
    state: ProjectState,
    log: File,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl Project {
    pub fn exists(dir: &Path) -> bool {
        dir.join(EVENTS_FILE).exists()
    }

    /// Creates a project in `dir` (created if missing) from its `init` event.
    pub fn create(dir: &Path, init: Event) -> Result<Self> {
        if !matches!(init, Event::Init { .. }) {
            return Err(WorkflowError::NotInitialized.into());
        }
        if Project::exists(dir) {
            return Err(WorkflowError::AlreadyInitialized.into());
        }
        fs::create_dir_all(dir).map_err(|e| ProjectError::io(dir, e))?;
        let path = dir.join(EVENTS_FILE);
        let log = OpenOptions::new().create_new(true).append(true).open(&path).map_err(|e| ProjectError::io(&path, e))?;
        let mut project = Project { dir: dir.to_path_buf(), state: ProjectState::default(), log };
        project.append(init)?;
        Ok(project)
    }

    /// Loads the snapshot (if any) and replays the rest of the log.
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(EVENTS_FILE);
        let file = File::open(&path).map_err(|e| ProjectError::io(&path, e))?;
        let mut state = match fs::read_to_string(dir.join(SNAPSHOT_FILE)) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| ProjectError::Corrupt {
                path: dir.join(SNAPSHOT_FILE),
                line: e.line(),
                message: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => ProjectState::default(),
            Err(e) => return Err(ProjectError::io(&dir.join(SNAPSHOT_FILE), e)),
        };
        let mut count = 0u64;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ProjectError::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            count += 1;
            if count <= state.seq {
                continue;
            }
            let corrupt = |message: String| ProjectError::Corrupt { path: path.clone(), line: i + 1, message };
            let event: Event = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            state.apply(&event).map_err(|e| corrupt(e.to_string()))?;
        }
        if count < state.seq {
            return Err(ProjectError::Corrupt {
                path,
                line: count as usize,
                message: format!("snapshot is at event {} but the log has {count}", state.seq),
            });
        }
        let log = OpenOptions::new().append(true).open(&path).map_err(|e| ProjectError::io(&path, e))?;
        Ok(Project { dir: dir.to_path_buf(), state, log })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn state(&self) -> &ProjectState {
        &self.state
    }

    fn append(&mut self, event: Event) -> Result<()> {
        self.state.validate(&event)?;
        let mut line = serde_json::to_string(&event).expect("events serialize");
        line.push('\n');
        let path = self.dir.join(EVENTS_FILE);
        self.log.write_all(line.as_bytes()).map_err(|e| ProjectError::io(&path, e))?;
        self.log.sync_data().map_err(|e| ProjectError::io(&path, e))?;
        self.state.apply(&event).expect("validated event applies");
        if self.state.seq.is_multiple_of(SNAPSHOT_EVERY) {
            self.snapshot()?;
        }
        Ok(())
    }

    pub fn submit(&mut self, hit: &str, annotator: &str, selection: Vec<String>) -> Result<&Hit> {
        self.submit_at(hit, annotator, selection, now_ms())
    }

    pub fn submit_at(&mut self, hit: &str, annotator: &str, selection: Vec<String>, at_ms: u64) -> Result<&Hit> {
        self.append(Event::Submit { hit: hit.to_string(), annotator: annotator.to_string(), selection, at_ms })?;
        Ok(self.state.hit(hit).expect("submitted HIT exists"))
    }

    /// Writes the current state atomically to `snapshot.json`.
    pub fn snapshot(&self) -> Result<()> {
        let path = self.dir.join(SNAPSHOT_FILE);
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let text = serde_json::to_string(&self.state).expect("state serializes");
        fs::write(&tmp, text).map_err(|e| ProjectError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| ProjectError::io(&path, e))
    }

    pub fn stats(&self) -> Result<ProjectStats> {
        Ok(report::stats(&self.state)?)
    }

    /// Writes finished conversations as gold annotations to `gold.json` in the project dir.
    pub fn export(&self) -> Result<(PathBuf, DatasetStats)> {
        let anns = report::export(&self.state);
        let path = self.dir.join(EXPORT_FILE);
        write_annotations(&path, &anns)?;
        Ok((path, DatasetStats::of(&anns)?))
    }
}
