//! The annotation workflow: batches with dual annotation, FIFO claiming,
//! validated submission, training export and agreement.
//!
//! All mutations go through one write lock, so a claim and a submission
//! never interleave; reads share a read lock.

use std::collections::{BTreeMap, HashMap};

use parking_lot::RwLock;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use dialogq_core::dataset::LabeledDialog;
use dialogq_core::dialog::{validate_dialog, Dialog};
use dialogq_core::metrics::agreement_within_one;
use dialogq_core::questionnaire::DialogAnnotation;

use crate::error::{Result, ServiceError};
use crate::model::{AnnotationRecord, AnnotationTask, QuestionnaireDraft, TaskStatus};
use crate::store::{Event, Store};

pub const DEFAULT_DUAL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorCounts {
    pub submitted: usize,
    /// Submissions on dialogs with two completed annotations.
    pub dual_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub overall_within_one: f64,
    pub n_pairs: usize,
    pub per_annotator: BTreeMap<String, AnnotatorCounts>,
}

#[derive(Debug)]
pub struct AnnotationService {
    store: RwLock<Store>,
    clock: fn() -> String,
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl AnnotationService {
    pub fn new(store: Store) -> Self {
        Self {
            store: RwLock::new(store),
            clock: now_rfc3339,
        }
    }

    /// Replaces the timestamp source used for `submitted_at`.
    pub fn with_clock(mut self, clock: fn() -> String) -> Self {
        self.clock = clock;
        self
    }

    /// Adds dialogs with one task each; `round(dual_fraction * n)` of them,
    /// chosen under `seed`, get a second task. Task order is shuffled under
    /// the same seed.
    pub fn create_batch(&self, dialogs: Vec<Dialog>, dual_fraction: f64, seed: u64) -> Result<Vec<AnnotationTask>> {
        if !(0.0..=1.0).contains(&dual_fraction) {
            return Err(ServiceError::InvalidRequest(format!(
                "dual_fraction {dual_fraction} outside [0, 1]"
            )));
        }
        if dialogs.is_empty() {
            return Ok(Vec::new());
        }
        for d in &dialogs {
            validate_dialog(d).map_err(|e| ServiceError::InvalidRequest(e.to_string()))?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_dual = (dual_fraction * dialogs.len() as f64).round() as usize;
        let mut order: Vec<usize> = (0..dialogs.len()).collect();
        order.shuffle(&mut rng);
        let mut dual = vec![false; dialogs.len()];
        for &i in &order[..n_dual] {
            dual[i] = true;
        }
        let mut tasks = Vec::with_capacity(dialogs.len() + n_dual);
        for (d, &is_dual) in dialogs.iter().zip(&dual) {
            tasks.push(AnnotationTask::new(&d.dialog_id, 0, is_dual));
            if is_dual {
                tasks.push(AnnotationTask::new(&d.dialog_id, 1, true));
            }
        }
        tasks.shuffle(&mut rng);
        self.store.write().append(Event::BatchCreated {
            dialogs,
            tasks: tasks.clone(),
        })?;
        Ok(tasks)
    }

    /// Oldest pending task the annotator may take. An annotator with an open
    /// claim gets that claim back instead of a new task.
    pub fn claim_next_task(&self, annotator_id: &str) -> Result<Option<AnnotationTask>> {
        if annotator_id.trim().is_empty() {
            return Err(ServiceError::InvalidRequest("annotator id is empty".into()));
        }
        let mut store = self.store.write();
        let state = store.state();
        let open = state
            .tasks
            .iter()
            .find(|t| t.status == TaskStatus::Claimed && t.annotator_id.as_deref() == Some(annotator_id));
        if let Some(t) = open {
            return Ok(Some(t.clone()));
        }
        let next = state.tasks.iter().find(|t| {
            t.status == TaskStatus::Pending
                && !state
                    .tasks_for(&t.dialog_id)
                    .any(|other| other.annotator_id.as_deref() == Some(annotator_id))
        });
        let Some(task_id) = next.map(|t| t.task_id.clone()) else {
            return Ok(None);
        };
        store.append(Event::TaskClaimed {
            task_id: task_id.clone(),
            annotator_id: annotator_id.to_string(),
        })?;
        Ok(store.state().task(&task_id).cloned())
    }

    pub fn submit_annotation(&self, task_id: &str, draft: QuestionnaireDraft) -> Result<AnnotationRecord> {
        let mut store = self.store.write();
        let state = store.state();
        let task = state.task(task_id).ok_or_else(|| ServiceError::NotFound {
            what: "task",
            id: task_id.to_string(),
        })?;
        let annotator_id = match (task.status, &task.annotator_id) {
            (TaskStatus::Submitted, _) => return Err(ServiceError::AlreadySubmitted(task_id.to_string())),
            (TaskStatus::Claimed, Some(a)) => a.clone(),
            _ => return Err(ServiceError::NotClaimed(task_id.to_string())),
        };
        let turns = state.dialogs[&task.dialog_id].len();
        let record = AnnotationRecord {
            task_id: task_id.to_string(),
            dialog_id: task.dialog_id.clone(),
            annotator_id,
            questionnaire: draft.complete(turns)?,
            submitted_at: (self.clock)(),
        };
        store.append(Event::AnnotationSubmitted { record: record.clone() })?;
        Ok(record)
    }

    pub fn dialog(&self, dialog_id: &str) -> Result<Dialog> {
        self.store
            .read()
            .state()
            .dialogs
            .get(dialog_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound {
                what: "dialog",
                id: dialog_id.to_string(),
            })
    }

    pub fn tasks(&self) -> Vec<AnnotationTask> {
        self.store.read().state().tasks.clone()
    }

    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.store.read().state().records.clone()
    }

    pub fn annotations(&self) -> Vec<DialogAnnotation> {
        self.records()
            .into_iter()
            .map(|r| DialogAnnotation {
                dialog_id: r.dialog_id,
                annotator_id: r.annotator_id,
                questionnaire: r.questionnaire,
            })
            .collect()
    }

    /// One row per annotated dialog, ordered by first submission, labeled
    /// with the lowest `user_satisfaction` among its annotations.
    pub fn export_training_set(&self) -> Result<Vec<LabeledDialog>> {
        let store = self.store.read();
        let state = store.state();
        let mut order: Vec<&str> = Vec::new();
        let mut rating: HashMap<&str, u8> = HashMap::new();
        for r in &state.records {
            let s = r.questionnaire.user_satisfaction;
            rating
                .entry(&r.dialog_id)
                .and_modify(|m| *m = (*m).min(s))
                .or_insert_with(|| {
                    order.push(&r.dialog_id);
                    s
                });
        }
        order
            .into_iter()
            .map(|id| {
                LabeledDialog::from_rating(state.dialogs[id].clone(), rating[id])
                    .map_err(|e| ServiceError::InvalidQuestionnaire(e.to_string()))
            })
            .collect()
    }

    /// Within-one agreement on `user_satisfaction` over dialogs with two
    /// submitted annotations.
    pub fn agreement_report(&self) -> Result<AgreementReport> {
        let store = self.store.read();
        let state = store.state();
        let mut by_dialog: BTreeMap<&str, Vec<&AnnotationRecord>> = BTreeMap::new();
        let mut per_annotator: BTreeMap<String, AnnotatorCounts> = BTreeMap::new();
        for r in &state.records {
            by_dialog.entry(&r.dialog_id).or_default().push(r);
            per_annotator.entry(r.annotator_id.clone()).or_default().submitted += 1;
        }
        let mut pairs = Vec::new();
        for records in by_dialog.values().filter(|v| v.len() == 2) {
            pairs.push((
                records[0].questionnaire.user_satisfaction,
                records[1].questionnaire.user_satisfaction,
            ));
            for r in records {
                per_annotator.entry(r.annotator_id.clone()).or_default().dual_pairs += 1;
            }
        }
        if pairs.is_empty() {
            return Err(ServiceError::NoDualPairs);
        }
        Ok(AgreementReport {
            overall_within_one: agreement_within_one(&pairs).map_err(|e| ServiceError::InvalidRequest(e.to_string()))?,
            n_pairs: pairs.len(),
            per_annotator,
        })
    }
}
