//! Dialog quality annotation answers: per-turn ratings plus the seven
//! dialog-level questions. Option order of every enum is the order the
//! annotator sees, and doubles as its ordinal encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! ordinal_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            /// Position in the annotator-facing option list (0-based).
            pub fn ordinal(self) -> u8 {
                self as u8
            }

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }
    };
}

ordinal_enum!(GoalCount { Zero => "Zero", One => "One", Many => "Many" });
ordinal_enum!(GoalProgression {
    NoProgress => "No Progress",
    SomeProgress => "Some Progress",
    FullProgress => "Full Progress",
});
ordinal_enum!(GoalCompletion {
    NoneCompleted => "None Completed",
    SomeCompleted => "Some Completed",
    AllCompleted => "All Completed",
});
ordinal_enum!(GoalFriction {
    LotsOfFriction => "Lots of Friction",
    SomeFriction => "Some Friction",
    NoFriction => "No Friction",
});
ordinal_enum!(Coherence {
    NeverMadeSense => "Never Made Sense",
    SomeMadeSense => "Some Made Sense",
    AllMadeSense => "All Made Sense",
});
ordinal_enum!(Sentiment { Negative => "Negative", Neutral => "Neutral", Positive => "Positive" });

pub const TURN_RATING_LABELS: [&str; 5] = ["1-Terrible", "2-Bad", "3-Ok", "4-Good", "5-Excellent"];
pub const SATISFACTION_LABELS: [&str; 5] = [
    "1-Very Dissatisfied",
    "2-Dissatisfied",
    "3-Normal",
    "4-Satisfied",
    "5-Very Satisfied",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DqaQuestionnaire {
    pub turn_ratings: Vec<u8>,
    pub user_satisfaction: u8,
    pub goal_count: GoalCount,
    pub goal_progression: GoalProgression,
    pub goal_completion: GoalCompletion,
    pub goal_friction: GoalFriction,
    pub coherence: Coherence,
    pub sentiment: Sentiment,
}

impl DqaQuestionnaire {
    /// Checks rating ranges and that there is one turn rating per turn.
    pub fn validate(&self, turn_count: usize) -> Result<&Self> {
        if self.turn_ratings.len() != turn_count {
            return Err(Error::InvalidParameter(format!(
                "expected {turn_count} turn ratings, got {}",
                self.turn_ratings.len()
            )));
        }
        if let Some(&r) = self.turn_ratings.iter().find(|r| !(1..=5).contains(*r)) {
            return Err(Error::RatingOutOfRange(i64::from(r)));
        }
        if !(1..=5).contains(&self.user_satisfaction) {
            return Err(Error::RatingOutOfRange(i64::from(self.user_satisfaction)));
        }
        Ok(self)
    }
}

/// One annotator's completed questionnaire for one dialog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogAnnotation {
    pub dialog_id: String,
    pub annotator_id: String,
    pub questionnaire: DqaQuestionnaire,
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample(turns: usize) -> DqaQuestionnaire {
        DqaQuestionnaire {
            turn_ratings: vec![4; turns],
            user_satisfaction: 4,
            goal_count: GoalCount::One,
            goal_progression: GoalProgression::FullProgress,
            goal_completion: GoalCompletion::AllCompleted,
            goal_friction: GoalFriction::NoFriction,
            coherence: Coherence::AllMadeSense,
            sentiment: Sentiment::Positive,
        }
    }

    #[test]
    fn ordinals_follow_option_order() {
        assert_eq!(GoalFriction::LotsOfFriction.ordinal(), 0);
        assert_eq!(GoalFriction::NoFriction.ordinal(), 2);
        assert_eq!(Sentiment::ALL.len(), 3);
        assert_eq!(Coherence::SomeMadeSense.label(), "Some Made Sense");
    }

    #[test]
    fn json_uses_snake_case() {
        let json = serde_json::to_value(sample(2)).unwrap();
        assert_eq!(json["goal_friction"], "no_friction");
        assert_eq!(json["coherence"], "all_made_sense");
        let back: DqaQuestionnaire = serde_json::from_value(json).unwrap();
        assert_eq!(back, sample(2));
    }

    #[test]
    fn validation() {
        assert!(sample(3).validate(3).is_ok());
        assert!(sample(2).validate(3).is_err());
        let mut q = sample(1);
        q.user_satisfaction = 6;
        assert!(matches!(q.validate(1), Err(Error::RatingOutOfRange(6))));
        let mut q = sample(1);
        q.turn_ratings[0] = 0;
        assert!(q.validate(1).is_err());
    }
}
