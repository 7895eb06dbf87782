//! Dialog data model, `dialog-log v1` ingestion and inactivity-based session
//! segmentation.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result, Violation};

/// Default inactivity gap (seconds) separating two sessions of one user.
pub const DEFAULT_GAP_SECONDS: i64 = 180;

/// Tag used when a log record carries no `use_case`.
pub const DEFAULT_USE_CASE: &str = "default";

/// One user request and the system response to it, as logged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawUtteranceEvent {
    pub user_id: String,
    pub timestamp: i64,
    pub user_text: String,
    pub system_text: String,
    pub turn_id: String,
    pub use_case: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialog_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    /// 1-based position within the dialog.
    pub index: usize,
    #[serde(flatten)]
    pub event: RawUtteranceEvent,
}

impl Turn {
    pub fn turn_id(&self) -> &str {
        &self.event.turn_id
    }

    pub fn user_text(&self) -> &str {
        &self.event.user_text
    }

    pub fn system_text(&self) -> &str {
        &self.event.system_text
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialog {
    pub dialog_id: String,
    pub user_id: String,
    pub use_case: String,
    pub turns: Vec<Turn>,
}

impl Dialog {
    /// Builds a dialog from events in order, numbering turns from 1.
    pub fn from_events(dialog_id: impl Into<String>, events: Vec<RawUtteranceEvent>) -> Result<Self> {
        let first = events.first().ok_or(Error::Empty("dialog events"))?;
        let user_id = first.user_id.clone();
        let use_case = first.use_case.clone();
        let turns = events
            .into_iter()
            .enumerate()
            .map(|(i, event)| Turn { index: i + 1, event })
            .collect();
        Ok(Dialog {
            dialog_id: dialog_id.into(),
            user_id,
            use_case,
            turns,
        })
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// All user and system text joined by single spaces, in turn order.
    pub fn full_text(&self) -> String {
        let mut parts = Vec::with_capacity(self.turns.len() * 2);
        for t in &self.turns {
            parts.push(t.event.user_text.as_str());
            parts.push(t.event.system_text.as_str());
        }
        parts.join(" ")
    }

    pub fn events(&self) -> impl Iterator<Item = &RawUtteranceEvent> {
        self.turns.iter().map(|t| &t.event)
    }
}

fn required_str(obj: &Map<String, Value>, line: usize, field: &str) -> Result<String> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(Error::parse(line, field, "missing required field")),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(Error::parse(line, field, format!("expected string, got {other}"))),
    }
}

fn optional_str(obj: &Map<String, Value>, line: usize, field: &str) -> Result<Option<String>> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(other) => Err(Error::parse(line, field, format!("expected string, got {other}"))),
    }
}

fn parse_event(line_no: usize, text: &str) -> Result<RawUtteranceEvent> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::parse(line_no, "<record>", format!("invalid JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(Error::parse(line_no, "<record>", "expected a JSON object"));
    };

    let user_id = required_str(&obj, line_no, "user_id")?;
    let timestamp = match obj.get("timestamp") {
        None | Some(Value::Null) => {
            return Err(Error::parse(line_no, "timestamp", "missing required field"))
        }
        Some(Value::Number(n)) => n
            .as_i64()
            .ok_or_else(|| Error::parse(line_no, "timestamp", format!("expected integer seconds, got {n}")))?,
        Some(other) => {
            return Err(Error::parse(line_no, "timestamp", format!("expected integer, got {other}")))
        }
    };
    if timestamp < 0 {
        return Err(Error::parse(line_no, "timestamp", "must be >= 0"));
    }
    let turn_id = required_str(&obj, line_no, "turn_id")?;
    if turn_id.is_empty() {
        return Err(Error::parse(line_no, "turn_id", "must be non-empty"));
    }
    let user_text = required_str(&obj, line_no, "user_text")?;
    if user_text.trim().is_empty() {
        return Err(Error::parse(line_no, "user_text", "must be non-empty after trimming"));
    }
    let system_text = required_str(&obj, line_no, "system_text")?;
    let use_case = optional_str(&obj, line_no, "use_case")?.unwrap_or_else(|| DEFAULT_USE_CASE.to_string());
    let dialog_id = optional_str(&obj, line_no, "dialog_id")?;

    Ok(RawUtteranceEvent {
        user_id,
        timestamp,
        user_text,
        system_text,
        turn_id,
        use_case,
        dialog_id,
    })
}

/// Parses a `dialog-log v1` stream. Blank lines are skipped but still count
/// toward line numbers in error messages.
pub fn parse_dialog_log<R: BufRead>(reader: R) -> Result<Vec<RawUtteranceEvent>> {
    let mut events = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = parse_event(line_no, &line)?;
        if !seen.insert(event.turn_id.clone()) {
            return Err(Error::DuplicateTurnId {
                line: line_no,
                turn_id: event.turn_id,
            });
        }
        events.push(event);
    }
    Ok(events)
}

pub fn dialog_id_for(user_id: &str, first_timestamp: i64) -> String {
    format!("{user_id}-{first_timestamp}")
}

/// Splits each user's event stream into sessions. A new dialog starts when
/// the start-to-start gap to the user's previous event exceeds `gap_seconds`;
/// a gap of exactly `gap_seconds` stays in the session.
pub fn segment_sessions(events: &[RawUtteranceEvent], gap_seconds: i64) -> Result<Vec<Dialog>> {
    if gap_seconds <= 0 {
        return Err(Error::InvalidParameter(format!(
            "gap_seconds must be > 0, got {gap_seconds}"
        )));
    }
    for (i, pair) in events.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if (a.user_id.as_str(), a.timestamp) > (b.user_id.as_str(), b.timestamp) {
            return Err(Error::Unsorted { position: i + 1 });
        }
    }

    let mut dialogs = Vec::new();
    let mut current: Vec<RawUtteranceEvent> = Vec::new();
    for event in events {
        let split = match current.last() {
            Some(prev) => prev.user_id != event.user_id || event.timestamp - prev.timestamp > gap_seconds,
            None => false,
        };
        if split {
            dialogs.push(close_session(std::mem::take(&mut current))?);
        }
        current.push(event.clone());
    }
    if !current.is_empty() {
        dialogs.push(close_session(current)?);
    }
    Ok(dialogs)
}

fn close_session(events: Vec<RawUtteranceEvent>) -> Result<Dialog> {
    let id = dialog_id_for(&events[0].user_id, events[0].timestamp);
    Dialog::from_events(id, events)
}

/// Groups pre-sessionized events by their `dialog_id`, keeping file order
/// both across dialogs (first appearance) and within each dialog.
pub fn group_by_dialog_id(events: &[RawUtteranceEvent]) -> Result<Vec<Dialog>> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<RawUtteranceEvent>> = BTreeMap::new();
    for (i, e) in events.iter().enumerate() {
        let id = e
            .dialog_id
            .clone()
            .ok_or_else(|| Error::parse(i + 1, "dialog_id", "missing in a pre-sessionized log"))?;
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id.clone());
                Vec::new()
            })
            .push(e.clone());
    }
    order
        .into_iter()
        .map(|id| {
            let evs = groups.remove(&id).unwrap_or_default();
            Dialog::from_events(id, evs)
        })
        .collect()
}

/// Pre-sessionized logs (every record carries `dialog_id`) bypass
/// segmentation; logs without any `dialog_id` are segmented after a stable
/// sort by `(user_id, timestamp)`. Mixed logs are rejected.
pub fn sessionize(mut events: Vec<RawUtteranceEvent>, gap_seconds: i64) -> Result<Vec<Dialog>> {
    let with_id = events.iter().filter(|e| e.dialog_id.is_some()).count();
    if with_id == events.len() && !events.is_empty() {
        let dialogs = group_by_dialog_id(&events)?;
        for d in &dialogs {
            validate_dialog(d)?;
        }
        return Ok(dialogs);
    }
    if with_id > 0 {
        let pos = events.iter().position(|e| e.dialog_id.is_none()).unwrap_or(0);
        return Err(Error::parse(
            pos + 1,
            "dialog_id",
            "log mixes pre-sessionized and raw records",
        ));
    }
    events.sort_by(|a, b| (a.user_id.as_str(), a.timestamp).cmp(&(b.user_id.as_str(), b.timestamp)));
    segment_sessions(&events, gap_seconds)
}

/// Checks every structural dialog invariant, reporting all violations.
pub fn validate_dialog(d: &Dialog) -> Result<&Dialog> {
    let mut violations = Vec::new();
    if d.turns.is_empty() {
        violations.push(Violation {
            turn_index: None,
            message: "dialog has no turns".into(),
        });
    }
    for (pos, turn) in d.turns.iter().enumerate() {
        let at = Some(turn.index);
        if turn.index != pos + 1 {
            violations.push(Violation {
                turn_index: at,
                message: format!("index {} at position {}; expected {}", turn.index, pos + 1, pos + 1),
            });
        }
        if turn.event.user_id != d.user_id {
            violations.push(Violation {
                turn_index: at,
                message: format!(
                    "user_id {:?} differs from dialog user_id {:?}",
                    turn.event.user_id, d.user_id
                ),
            });
        }
        if turn.event.timestamp < 0 {
            violations.push(Violation {
                turn_index: at,
                message: "negative timestamp".into(),
            });
        }
        if turn.event.turn_id.is_empty() {
            violations.push(Violation {
                turn_index: at,
                message: "empty turn_id".into(),
            });
        }
        if turn.event.user_text.trim().is_empty() {
            violations.push(Violation {
                turn_index: at,
                message: "empty user_text".into(),
            });
        }
        if pos > 0 && turn.event.timestamp < d.turns[pos - 1].event.timestamp {
            violations.push(Violation {
                turn_index: at,
                message: format!(
                    "timestamp {} decreases from {}",
                    turn.event.timestamp,
                    d.turns[pos - 1].event.timestamp
                ),
            });
        }
    }
    if violations.is_empty() {
        Ok(d)
    } else {
        Err(Error::InvalidDialog {
            dialog_id: d.dialog_id.clone(),
            violations,
        })
    }
}

/// [`validate_dialog`] plus the intra-session gap bound that holds for
/// dialogs produced by [`segment_sessions`].
pub fn validate_segmented(d: &Dialog, gap_seconds: i64) -> Result<&Dialog> {
    validate_dialog(d)?;
    let violations: Vec<_> = d
        .turns
        .windows(2)
        .filter(|w| w[1].event.timestamp - w[0].event.timestamp > gap_seconds)
        .map(|w| Violation {
            turn_index: Some(w[1].index),
            message: format!(
                "gap {} s exceeds {gap_seconds} s",
                w[1].event.timestamp - w[0].event.timestamp
            ),
        })
        .collect();
    if violations.is_empty() {
        Ok(d)
    } else {
        Err(Error::InvalidDialog {
            dialog_id: d.dialog_id.clone(),
            violations,
        })
    }
}

/// Writes dialogs as `dialog v1` JSON Lines.
pub fn write_dialogs<W: Write>(mut w: W, dialogs: &[Dialog]) -> Result<()> {
    for d in dialogs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads `dialog v1` JSON Lines and validates each dialog.
pub fn read_dialogs<R: BufRead>(reader: R) -> Result<Vec<Dialog>> {
    read_jsonl(reader, |line_no, d: Dialog| {
        validate_dialog(&d).map_err(|e| Error::parse(line_no, "<dialog>", e.to_string()))?;
        Ok(d)
    })
}

/// Reads a JSON Lines stream, mapping each decoded record through `check`.
pub(crate) fn read_jsonl<R, T, U, F>(reader: R, mut check: F) -> Result<Vec<U>>
where
    R: BufRead,
    T: serde::de::DeserializeOwned,
    F: FnMut(usize, T) -> Result<U>,
{
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, "<record>", e.to_string()))?;
        out.push(check(i + 1, record)?);
    }
    Ok(out)
}
