//! Turn-score aggregation baselines and threshold binarization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Decision threshold applied to every dialog-level score.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mean,
    LastTurn,
    Union,
    RisingLinear,
    Dqm,
}

impl Method {
    pub const BASELINES: [Method; 4] = [Method::Mean, Method::LastTurn, Method::Union, Method::RisingLinear];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mean => "mean",
            Method::LastTurn => "last_turn",
            Method::Union => "union",
            Method::RisingLinear => "rising_linear",
            Method::Dqm => "dqm",
        }
    }

    /// Table label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Method::Mean => "Mean TLD",
            Method::LastTurn => "Last-turn TLD",
            Method::Union => "TLD-U",
            Method::RisingLinear => "Rising linear",
            Method::Dqm => "DQM",
        }
    }

    /// Applies a baseline aggregator. `Dqm` is not a turn-score aggregate.
    pub fn aggregate<T: Scalar>(self, scores: &[T]) -> Result<T> {
        match self {
            Method::Mean => mean_tld(scores),
            Method::LastTurn => last_turn_tld(scores),
            Method::Union => union_tld(scores),
            Method::RisingLinear => rising_linear_tld(scores),
            Method::Dqm => Err(Error::InvalidParameter("dqm scores come from a trained model".into())),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Method::Mean),
            "last" | "last_turn" => Ok(Method::LastTurn),
            "union" => Ok(Method::Union),
            "rising" | "rising_linear" => Ok(Method::RisingLinear),
            "dqm" => Ok(Method::Dqm),
            other => Err(Error::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }
}

/// One `dialog-score v1` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DialogScore<T> {
    pub dialog_id: String,
    pub method: Method,
    pub score: T,
    pub predicted_defect: bool,
}

impl<T: Scalar> DialogScore<T> {
    pub fn new(dialog_id: impl Into<String>, method: Method, score: T, threshold: T) -> Self {
        Self {
            dialog_id: dialog_id.into(),
            method,
            score,
            predicted_defect: binarize_score(score, threshold),
        }
    }
}

fn non_empty<T>(scores: &[T]) -> Result<&[T]> {
    if scores.is_empty() {
        Err(Error::Empty("turn scores"))
    } else {
        Ok(scores)
    }
}

pub fn mean_tld<T: Scalar>(scores: &[T]) -> Result<T> {
    let s = non_empty(scores)?;
    Ok(s.iter().copied().sum::<T>() / T::from_usize_lossy(s.len()))
}

pub fn last_turn_tld<T: Scalar>(scores: &[T]) -> Result<T> {
    Ok(*non_empty(scores)?.last().expect("non-empty"))
}

/// `max(mean, last)`: at any threshold, binarizing this is the same as
/// flagging a dialog when either the mean or the last-turn score does.
pub fn union_tld<T: Scalar>(scores: &[T]) -> Result<T> {
    Ok(mean_tld(scores)?.max(last_turn_tld(scores)?))
}

/// Mean weighted by 1-based turn index, normalized by the weight sum.
pub fn rising_linear_tld<T: Scalar>(scores: &[T]) -> Result<T> {
    let s = non_empty(scores)?;
    let weighted: T = s
        .iter()
        .enumerate()
        .map(|(i, &x)| T::from_usize_lossy(i + 1) * x)
        .sum();
    let n = s.len();
    Ok(weighted / T::from_usize_lossy(n * (n + 1) / 2))
}

/// Scores at or above the threshold are defective.
pub fn binarize_score<T: Scalar>(score: T, threshold: T) -> bool {
    score >= threshold
}
