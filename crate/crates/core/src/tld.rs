//! Turn-level defect (TLD) scores: loading precomputed `tld-scores v1` files
//! and a deterministic phrase/rephrase heuristic scorer.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dialog::{read_jsonl, Dialog, Turn};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-turn defect probabilities keyed by `turn_id`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TldScoreMap<T> {
    entries: BTreeMap<String, T>,
}

impl<T: Scalar> TldScoreMap<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, turn_id: impl Into<String>, score: T) -> Result<()> {
        let turn_id = turn_id.into();
        if !score.in_unit_interval() {
            return Err(Error::ScoreOutOfRange {
                turn_id,
                score: score.as_f64(),
            });
        }
        self.entries.insert(turn_id, score);
        Ok(())
    }

    pub fn get(&self, turn_id: &str) -> Option<T> {
        self.entries.get(turn_id).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Same scores at another precision.
    pub fn cast<U: Scalar>(&self) -> TldScoreMap<U> {
        TldScoreMap {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), U::lit(v.as_f64()).clamp_unit()))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, T)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Scores of a dialog's turns in turn order.
    pub fn dialog_scores(&self, dialog: &Dialog) -> Result<Vec<T>> {
        self.ensure_covers(std::slice::from_ref(dialog))?;
        Ok(dialog
            .turns
            .iter()
            .map(|t| self.entries[t.turn_id()])
            .collect())
    }

    pub fn ensure_covers(&self, dialogs: &[Dialog]) -> Result<()> {
        let missing: Vec<String> = dialogs
            .iter()
            .flat_map(|d| d.turns.iter())
            .filter(|t| !self.entries.contains_key(t.turn_id()))
            .map(|t| t.turn_id().to_string())
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingScores { turn_ids: missing })
        }
    }

    /// Keeps only entries for turns of `dialogs`.
    pub fn restricted_to(&self, dialogs: &[Dialog]) -> Self {
        let wanted: HashSet<&str> = dialogs
            .iter()
            .flat_map(|d| d.turns.iter().map(Turn::turn_id))
            .collect();
        Self {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| wanted.contains(k.as_str()))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ScoreLine {
    turn_id: String,
    score: f64,
}

/// Reads a `tld-scores v1` stream and checks that it covers every turn of
/// `dialogs`. Lines for turns outside `dialogs` are dropped.
pub fn load_scores<T: Scalar, R: BufRead>(reader: R, dialogs: &[Dialog]) -> Result<TldScoreMap<T>> {
    let lines = read_jsonl(reader, |_, l: ScoreLine| Ok(l))?;
    let mut map = TldScoreMap::new();
    for line in lines {
        if !(0.0..=1.0).contains(&line.score) {
            return Err(Error::ScoreOutOfRange {
                turn_id: line.turn_id,
                score: line.score,
            });
        }
        map.insert(line.turn_id, T::lit(line.score))?;
    }
    map.ensure_covers(dialogs)?;
    Ok(map.restricted_to(dialogs))
}

pub fn write_scores<T: Scalar, W: Write>(mut w: W, scores: &TldScoreMap<T>) -> Result<()> {
    for (turn_id, score) in scores.iter() {
        serde_json::to_writer(
            &mut w,
            &ScoreLine {
                turn_id: turn_id.to_string(),
                score: score.as_f64(),
            },
        )?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailurePhrase {
    pub phrase: String,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicRuleTable {
    pub failure_phrases: Vec<FailurePhrase>,
    pub rephrase_similarity_threshold: f64,
    pub rephrase_penalty: f64,
    pub base_score: f64,
}

impl Default for HeuristicRuleTable {
    fn default() -> Self {
        let phrase = |p: &str| FailurePhrase {
            phrase: p.to_string(),
            contribution: 0.9,
        };
        Self {
            failure_phrases: vec![
                phrase("sorry, i don't have an answer"),
                phrase("i am having trouble"),
                phrase("try again later"),
            ],
            rephrase_similarity_threshold: 0.6,
            rephrase_penalty: 0.4,
            base_score: 0.05,
        }
    }
}

impl HeuristicRuleTable {
    pub fn validate(&self) -> Result<&Self> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("base_score", self.base_score)?;
        unit("rephrase_penalty", self.rephrase_penalty)?;
        unit("rephrase_similarity_threshold", self.rephrase_similarity_threshold)?;
        for p in &self.failure_phrases {
            unit(&format!("contribution of {:?}", p.phrase), p.contribution)?;
            if p.phrase.is_empty() || p.phrase != normalize_quotes(&p.phrase.to_lowercase()) {
                return Err(Error::InvalidParameter(format!(
                    "failure phrase {:?} must be non-empty lowercase",
                    p.phrase
                )));
            }
        }
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: Self = serde_json::from_str(text)?;
        table.validate()?;
        Ok(table)
    }
}

fn normalize_quotes(s: &str) -> String {
    s.replace(['\u{2019}', '\u{2018}'], "'")
}

fn tokens(s: &str) -> BTreeSet<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

/// Jaccard similarity of lowercase whitespace token sets; two empty strings
/// are identical (1.0).
pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokens(a), tokens(b));
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    let inter = ta.intersection(&tb).count();
    let union = ta.len() + tb.len() - inter;
    inter as f64 / union as f64
}

/// Heuristic defect score for one turn: base score, plus every failure
/// phrase found in the lowercased system response, plus the rephrase
/// penalty when the user repeats the previous request; clamped to [0, 1].
pub fn heuristic_tld<T: Scalar>(turn: &Turn, previous_user_text: Option<&str>, rules: &HeuristicRuleTable) -> T {
    let response = normalize_quotes(&turn.system_text().to_lowercase());
    let mut score = rules.base_score;
    for p in &rules.failure_phrases {
        if response.contains(&p.phrase) {
            score += p.contribution;
        }
    }
    if let Some(prev) = previous_user_text {
        if token_jaccard(prev, turn.user_text()) >= rules.rephrase_similarity_threshold {
            score += rules.rephrase_penalty;
        }
    }
    T::lit(score).clamp_unit()
}

/// Anything that yields one score in [0, 1] per turn.
pub trait TldScorer<T: Scalar> {
    fn score_dialog(&self, dialog: &Dialog) -> Result<Vec<T>>;

    fn score_all(&self, dialogs: &[Dialog]) -> Result<TldScoreMap<T>> {
        let mut map = TldScoreMap::new();
        for d in dialogs {
            for (turn, s) in d.turns.iter().zip(self.score_dialog(d)?) {
                map.insert(turn.turn_id(), s)?;
            }
        }
        Ok(map)
    }
}

impl<T: Scalar> TldScorer<T> for TldScoreMap<T> {
    fn score_dialog(&self, dialog: &Dialog) -> Result<Vec<T>> {
        self.dialog_scores(dialog)
    }
}

#[derive(Debug, Clone, Default)]
pub struct HeuristicScorer {
    pub rules: HeuristicRuleTable,
}

impl<T: Scalar> TldScorer<T> for HeuristicScorer {
    fn score_dialog(&self, dialog: &Dialog) -> Result<Vec<T>> {
        Ok(dialog
            .turns
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let prev = i.checked_sub(1).map(|p| dialog.turns[p].user_text());
                heuristic_tld(t, prev, &self.rules)
            })
            .collect())
    }
}
