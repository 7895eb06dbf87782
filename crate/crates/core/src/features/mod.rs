//! Dialog-level feature vectors: max-pooled turn encodings concatenated with
//! TF-IDF over the dialog text.

pub mod encoder;
pub mod text;
pub mod tfidf;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use encoder::{EncoderConfig, HashedEncoder, PrecomputedEncoder, TurnEncoder, TurnEncoding};
pub use tfidf::{fit_tfidf, TfidfModel};

use crate::dialog::Dialog;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tld::TldScoreMap;

pub const DEFAULT_VOCAB_MAX: usize = 2000;

/// Which blocks of the full representation a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureToggles {
    pub include_tld: bool,
    pub include_tfidf: bool,
}

impl Default for FeatureToggles {
    fn default() -> Self {
        Self {
            include_tld: true,
            include_tfidf: true,
        }
    }
}

impl FeatureToggles {
    /// Column indexes kept from a full `(text_dim + 1) + vocab` vector.
    pub fn columns(&self, text_dim: usize, vocab: usize) -> Vec<usize> {
        let mut cols: Vec<usize> = (0..text_dim).collect();
        if self.include_tld {
            cols.push(text_dim);
        }
        if self.include_tfidf {
            cols.extend(text_dim + 1..text_dim + 1 + vocab);
        }
        cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DialogFeatureVector<T> {
    pub values: Vec<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
}

/// Elementwise maximum over turn encodings.
pub fn max_pool<T: Scalar>(encodings: &[TurnEncoding<T>]) -> Result<Vec<T>> {
    let (first, rest) = encodings.split_first().ok_or(Error::Empty("turn encodings"))?;
    let mut pooled = first.values.clone();
    for e in rest {
        if e.values.len() != pooled.len() {
            return Err(Error::DimensionMismatch {
                expected: pooled.len(),
                found: e.values.len(),
            });
        }
        for (p, &v) in pooled.iter_mut().zip(&e.values) {
            *p = p.max(v);
        }
    }
    Ok(pooled)
}

/// 1-3 is a defect, 4-5 is not.
pub fn binarize_rating(rating: i64) -> Result<bool> {
    match rating {
        1..=3 => Ok(true),
        4 | 5 => Ok(false),
        other => Err(Error::RatingOutOfRange(other)),
    }
}

/// Full (untoggled) representation: `maxpool(encodings) ++ tfidf(full text)`.
pub fn build_dialog_features<T: Scalar, E: TurnEncoder<T> + ?Sized>(
    dialog: &Dialog,
    scores: &TldScoreMap<T>,
    tfidf: &TfidfModel<T>,
    encoder: &E,
) -> Result<DialogFeatureVector<T>> {
    let turn_scores = scores.dialog_scores(dialog)?;
    let encodings = dialog
        .turns
        .iter()
        .zip(turn_scores)
        .map(|(t, s)| encoder.encode(t, s))
        .collect::<Result<Vec<_>>>()?;
    let mut values = max_pool(&encodings)?;
    values.extend(tfidf.transform(&dialog.full_text()));
    Ok(DialogFeatureVector { values, label: None })
}

/// A fitted TF-IDF model plus the turn encoder it is paired with.
pub struct FeatureExtractor<T: Scalar> {
    pub encoder: Box<dyn TurnEncoder<T> + Send + Sync>,
    pub tfidf: TfidfModel<T>,
    pub toggles: FeatureToggles,
}

impl<T: Scalar> FeatureExtractor<T> {
    pub fn full_dim(&self) -> usize {
        self.encoder.text_dim() + 1 + self.tfidf.len()
    }

    pub fn columns(&self) -> Vec<usize> {
        self.toggles.columns(self.encoder.text_dim(), self.tfidf.len())
    }

    pub fn dim(&self) -> usize {
        self.columns().len()
    }

    pub fn full(&self, dialog: &Dialog, scores: &TldScoreMap<T>) -> Result<DialogFeatureVector<T>> {
        build_dialog_features(dialog, scores, &self.tfidf, self.encoder.as_ref())
    }

    /// Representation after applying the feature toggles.
    pub fn extract(&self, dialog: &Dialog, scores: &TldScoreMap<T>) -> Result<DialogFeatureVector<T>> {
        let full = self.full(dialog, scores)?;
        Ok(DialogFeatureVector {
            values: project(&full.values, &self.columns()),
            label: full.label,
        })
    }
}

pub fn project<T: Copy>(values: &[T], columns: &[usize]) -> Vec<T> {
    columns.iter().map(|&c| values[c]).collect()
}

#[derive(Serialize)]
#[serde(bound = "T: Scalar")]
struct FeatureLine<'a, T> {
    dialog_id: &'a str,
    #[serde(flatten)]
    features: &'a DialogFeatureVector<T>,
}

/// Writes `features v1` JSON Lines: `{"dialog_id", "values", "label"?}`.
pub fn write_features<T: Scalar, W: Write>(mut w: W, rows: &[(String, DialogFeatureVector<T>)]) -> Result<()> {
    for (dialog_id, features) in rows {
        serde_json::to_writer(&mut w, &FeatureLine { dialog_id, features })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
