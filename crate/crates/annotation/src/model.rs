//! Task, record and questionnaire-draft types.

use serde::{Deserialize, Serialize};

use dialogq_core::questionnaire::{
    Coherence, DqaQuestionnaire, GoalCompletion, GoalCount, GoalFriction, GoalProgression, Sentiment,
};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Claimed,
    Submitted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    /// `<dialog_id>:<copy>`; copy 1 exists only for dual dialogs.
    pub task_id: String,
    pub dialog_id: String,
    pub annotator_id: Option<String>,
    pub status: TaskStatus,
    pub is_dual_copy: bool,
}

impl AnnotationTask {
    pub fn new(dialog_id: &str, copy: usize, dual: bool) -> Self {
        Self {
            task_id: format!("{dialog_id}:{copy}"),
            dialog_id: dialog_id.to_string(),
            annotator_id: None,
            status: TaskStatus::Pending,
            is_dual_copy: dual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub task_id: String,
    pub dialog_id: String,
    pub annotator_id: String,
    pub questionnaire: DqaQuestionnaire,
    /// RFC 3339, UTC.
    pub submitted_at: String,
}

/// A submitted questionnaire before completeness checks; every field may be
/// absent so the service can name all the missing ones at once.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionnaireDraft {
    pub turn_ratings: Option<Vec<u8>>,
    pub user_satisfaction: Option<u8>,
    pub goal_count: Option<GoalCount>,
    pub goal_progression: Option<GoalProgression>,
    pub goal_completion: Option<GoalCompletion>,
    pub goal_friction: Option<GoalFriction>,
    pub coherence: Option<Coherence>,
    pub sentiment: Option<Sentiment>,
}

impl From<DqaQuestionnaire> for QuestionnaireDraft {
    fn from(q: DqaQuestionnaire) -> Self {
        Self {
            turn_ratings: Some(q.turn_ratings),
            user_satisfaction: Some(q.user_satisfaction),
            goal_count: Some(q.goal_count),
            goal_progression: Some(q.goal_progression),
            goal_completion: Some(q.goal_completion),
            goal_friction: Some(q.goal_friction),
            coherence: Some(q.coherence),
            sentiment: Some(q.sentiment),
        }
    }
}

impl QuestionnaireDraft {
    pub fn missing(&self) -> Vec<&'static str> {
        let mut missing = Vec::new();
        let mut check = |present: bool, name| {
            if !present {
                missing.push(name);
            }
        };
        check(self.turn_ratings.is_some(), "turn_ratings");
        check(self.user_satisfaction.is_some(), "user_satisfaction");
        check(self.goal_count.is_some(), "goal_count");
        check(self.goal_progression.is_some(), "goal_progression");
        check(self.goal_completion.is_some(), "goal_completion");
        check(self.goal_friction.is_some(), "goal_friction");
        check(self.coherence.is_some(), "coherence");
        check(self.sentiment.is_some(), "sentiment");
        missing
    }

    /// Completes and validates the draft against a dialog of `turn_count`.
    pub fn complete(self, turn_count: usize) -> Result<DqaQuestionnaire> {
        let missing = self.missing();
        let q = match self {
            QuestionnaireDraft {
                turn_ratings: Some(turn_ratings),
                user_satisfaction: Some(user_satisfaction),
                goal_count: Some(goal_count),
                goal_progression: Some(goal_progression),
                goal_completion: Some(goal_completion),
                goal_friction: Some(goal_friction),
                coherence: Some(coherence),
                sentiment: Some(sentiment),
            } => DqaQuestionnaire {
                turn_ratings,
                user_satisfaction,
                goal_count,
                goal_progression,
                goal_completion,
                goal_friction,
                coherence,
                sentiment,
            },
            _ => return Err(ServiceError::Incomplete(missing)),
        };
        q.validate(turn_count)
            .map_err(|e| ServiceError::InvalidQuestionnaire(e.to_string()))?;
        Ok(q)
    }
}
