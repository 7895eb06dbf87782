//! Labeled dialogs (`labeled-dialog v1`), train/test splitting and training
//! data fingerprints.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dialog::{read_jsonl, validate_dialog, Dialog};
use crate::error::{Error, Result};
use crate::features::binarize_rating;
use crate::scalar::Scalar;
use crate::tld::TldScoreMap;

/// A dialog with its human rating and binarized label (`defect`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDialog {
    #[serde(flatten)]
    pub dialog: Dialog,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rating: Option<u8>,
    pub defect: bool,
    /// Generator pattern for synthetic corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
}

impl LabeledDialog {
    pub fn from_rating(dialog: Dialog, rating: u8) -> Result<Self> {
        Ok(Self {
            dialog,
            rating: Some(rating),
            defect: binarize_rating(i64::from(rating))?,
            pattern: None,
        })
    }
}

pub fn write_labeled<W: Write>(mut w: W, rows: &[LabeledDialog]) -> Result<()> {
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads `labeled-dialog v1`, checking each dialog and that `defect`
/// agrees with `rating` when both are present.
pub fn read_labeled<R: BufRead>(reader: R) -> Result<Vec<LabeledDialog>> {
    read_jsonl(reader, |line, r: LabeledDialog| {
        validate_dialog(&r.dialog).map_err(|e| Error::parse(line, "<dialog>", e.to_string()))?;
        if let Some(rating) = r.rating {
            let expected = binarize_rating(i64::from(rating)).map_err(|e| Error::parse(line, "rating", e.to_string()))?;
            if expected != r.defect {
                return Err(Error::parse(line, "defect", format!("rating {rating} implies defect = {expected}")));
            }
        }
        Ok(r)
    })
}

/// Splits rows so each `use_case` contributes `round(test_fraction * n)` of
/// its dialogs to the test side.
pub fn split_by_use_case(rows: &[LabeledDialog], test_fraction: f64, seed: u64) -> Result<(Vec<LabeledDialog>, Vec<LabeledDialog>)> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::InvalidParameter(format!(
            "test_fraction {test_fraction} outside [0, 1]"
        )));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        groups.entry(r.dialog.use_case.as_str()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut is_test = vec![false; rows.len()];
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        let take = (test_fraction * members.len() as f64).round() as usize;
        for &i in &members[..take] {
            is_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = rows
        .iter()
        .cloned()
        .zip(is_test)
        .partition(|(_, t)| *t);
    Ok((
        train.into_iter().map(|(r, _)| r).collect(),
        test.into_iter().map(|(r, _)| r).collect(),
    ))
}

/// SHA-256 over the dialogs, their labels and their turn scores, in order.
pub fn training_fingerprint<T: Scalar>(rows: &[LabeledDialog], scores: &TldScoreMap<T>) -> Result<String> {
    let mut hasher = Sha256::new();
    for r in rows {
        hasher.update(serde_json::to_vec(&r.dialog)?);
        hasher.update([u8::from(r.defect)]);
        for s in scores.dialog_scores(&r.dialog)? {
            hasher.update(s.as_f64().to_le_bytes());
        }
    }
    Ok(hex::encode(hasher.finalize()))
}
