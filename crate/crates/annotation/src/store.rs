//! Append-only JSON Lines event log and the in-memory index rebuilt from it.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dialogq_core::dialog::Dialog;

use crate::error::{Result, ServiceError};
use crate::model::{AnnotationRecord, AnnotationTask, TaskStatus};

/// One line of the store file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    BatchCreated {
        dialogs: Vec<Dialog>,
        tasks: Vec<AnnotationTask>,
    },
    TaskClaimed {
        task_id: String,
        annotator_id: String,
    },
    AnnotationSubmitted {
        record: AnnotationRecord,
    },
}

/// Current state. Tasks keep creation order, which is the claim order.
#[derive(Debug, Default, Clone)]
pub struct State {
    pub dialogs: HashMap<String, Dialog>,
    pub tasks: Vec<AnnotationTask>,
    task_index: HashMap<String, usize>,
    /// Task positions per dialog.
    dialog_tasks: HashMap<String, Vec<usize>>,
    pub records: Vec<AnnotationRecord>,
}

impl State {
    pub fn task(&self, task_id: &str) -> Option<&AnnotationTask> {
        self.task_index.get(task_id).map(|&i| &self.tasks[i])
    }

    pub fn tasks_for(&self, dialog_id: &str) -> impl Iterator<Item = &AnnotationTask> {
        self.dialog_tasks
            .get(dialog_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.tasks[i])
    }

    /// Checks that `event` is legal in the current state without applying it.
    pub fn check(&self, event: &Event) -> Result<()> {
        match event {
            Event::BatchCreated { dialogs, tasks } => {
                for d in dialogs {
                    if self.dialogs.contains_key(&d.dialog_id) {
                        return Err(ServiceError::DuplicateDialog(d.dialog_id.clone()));
                    }
                }
                for t in tasks {
                    if self.task_index.contains_key(&t.task_id) {
                        return Err(ServiceError::InvalidRequest(format!("task {:?} exists", t.task_id)));
                    }
                    if !dialogs.iter().any(|d| d.dialog_id == t.dialog_id) {
                        return Err(ServiceError::NotFound {
                            what: "dialog",
                            id: t.dialog_id.clone(),
                        });
                    }
                }
                Ok(())
            }
            Event::TaskClaimed { task_id, annotator_id } => {
                let task = self.task(task_id).ok_or_else(|| ServiceError::NotFound {
                    what: "task",
                    id: task_id.clone(),
                })?;
                if task.status != TaskStatus::Pending {
                    return Err(ServiceError::InvalidRequest(format!("task {task_id:?} is not pending")));
                }
                if self
                    .tasks_for(&task.dialog_id)
                    .any(|t| t.annotator_id.as_deref() == Some(annotator_id))
                {
                    return Err(ServiceError::InvalidRequest(format!(
                        "{annotator_id:?} already holds a copy of dialog {:?}",
                        task.dialog_id
                    )));
                }
                Ok(())
            }
            Event::AnnotationSubmitted { record } => {
                let task = self.task(&record.task_id).ok_or_else(|| ServiceError::NotFound {
                    what: "task",
                    id: record.task_id.clone(),
                })?;
                match task.status {
                    TaskStatus::Pending => Err(ServiceError::NotClaimed(record.task_id.clone())),
                    TaskStatus::Submitted => Err(ServiceError::AlreadySubmitted(record.task_id.clone())),
                    TaskStatus::Claimed if task.annotator_id.as_deref() != Some(&record.annotator_id) => {
                        Err(ServiceError::InvalidRequest("record annotator differs from claimant".into()))
                    }
                    TaskStatus::Claimed => Ok(()),
                }
            }
        }
    }

    /// Applies a checked event.
    pub fn apply(&mut self, event: Event) -> Result<()> {
        self.check(&event)?;
        match event {
            Event::BatchCreated { dialogs, tasks } => {
                for d in dialogs {
                    self.dialogs.insert(d.dialog_id.clone(), d);
                }
                for t in tasks {
                    let i = self.tasks.len();
                    self.task_index.insert(t.task_id.clone(), i);
                    self.dialog_tasks.entry(t.dialog_id.clone()).or_default().push(i);
                    self.tasks.push(t);
                }
            }
            Event::TaskClaimed { task_id, annotator_id } => {
                let task = &mut self.tasks[self.task_index[&task_id]];
                task.status = TaskStatus::Claimed;
                task.annotator_id = Some(annotator_id);
            }
            Event::AnnotationSubmitted { record } => {
                self.tasks[self.task_index[&record.task_id]].status = TaskStatus::Submitted;
                self.records.push(record);
            }
        }
        Ok(())
    }
}

/// Event log plus state. `path = None` keeps everything in memory.
#[derive(Debug)]
pub struct Store {
    path: Option<PathBuf>,
    file: Option<File>,
    state: State,
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: None,
            state: State::default(),
        }
    }

    /// Opens (creating if absent) a store file and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let state = if path.exists() {
            replay(BufReader::new(File::open(&path)?))?
        } else {
            State::default()
        };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path: Some(path),
            file: Some(file),
            state,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    /// Validates, persists, then applies. Nothing is written for a rejected
    /// event, and the state never runs ahead of the file.
    pub fn append(&mut self, event: Event) -> Result<()> {
        self.state.check(&event)?;
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_vec(&event)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.flush()?;
        }
        self.state.apply(event)
    }
}

/// Rebuilds state from a log.
pub fn replay<R: BufRead>(reader: R) -> Result<State> {
    let mut state = State::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| ServiceError::CorruptStore { line: i + 1, message };
        let event: Event = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        state.apply(event).map_err(|e| corrupt(e.to_string()))?;
    }
    Ok(state)
}
