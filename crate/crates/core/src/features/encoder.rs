use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::text::{fnv1a, normalize_tokens};
use super::tfidf::l2_normalize;
use crate::dialog::{read_jsonl, Turn};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_TEXT_DIM: usize = 256;
pub const MIN_TEXT_DIM: usize = 16;

/// A turn's dense text representation with its TLD score appended last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TurnEncoding<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> TurnEncoding<T> {
    pub fn tld(&self) -> T {
        *self.values.last().expect("encoding has a tld component")
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub trait TurnEncoder<T: Scalar> {
    /// Width of the text part; encodings have `text_dim() + 1` components.
    fn text_dim(&self) -> usize;

    fn encode_text(&self, turn: &Turn) -> Result<Vec<T>>;

    fn encode(&self, turn: &Turn, tld_score: T) -> Result<TurnEncoding<T>> {
        if !tld_score.in_unit_interval() {
            return Err(Error::ScoreOutOfRange {
                turn_id: turn.turn_id().to_string(),
                score: tld_score.as_f64(),
            });
        }
        let mut values = self.encode_text(turn)?;
        if values.len() != self.text_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.text_dim(),
                found: values.len(),
            });
        }
        values.push(tld_score);
        Ok(TurnEncoding { values })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderConfig {
    Hashed { dim: usize },
    Precomputed { dim: usize },
}

impl EncoderConfig {
    pub fn text_dim(&self) -> usize {
        match *self {
            EncoderConfig::Hashed { dim } | EncoderConfig::Precomputed { dim } => dim,
        }
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::Hashed { dim: DEFAULT_TEXT_DIM }
    }
}

/// Signed feature hashing of lowercase unigrams and bigrams over the user
/// text followed by the system text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedEncoder {
    dim: usize,
}

impl HashedEncoder {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < MIN_TEXT_DIM {
            return Err(Error::InvalidParameter(format!(
                "hashed encoder dimension must be >= {MIN_TEXT_DIM}, got {dim}"
            )));
        }
        Ok(Self { dim })
    }

    fn add<T: Scalar>(&self, v: &mut [T], feature: &str) {
        let h = fnv1a(feature.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        let sign = if h >> 63 == 1 { -T::one() } else { T::one() };
        v[bucket] = v[bucket] + sign;
    }
}

impl<T: Scalar> TurnEncoder<T> for HashedEncoder {
    fn text_dim(&self) -> usize {
        self.dim
    }

    fn encode_text(&self, turn: &Turn) -> Result<Vec<T>> {
        let mut tokens = normalize_tokens(turn.user_text());
        tokens.extend(normalize_tokens(turn.system_text()));
        let mut v = vec![T::zero(); self.dim];
        for tok in &tokens {
            self.add(&mut v, tok);
        }
        for pair in tokens.windows(2) {
            self.add(&mut v, &format!("{} {}", pair[0], pair[1]));
        }
        l2_normalize(&mut v);
        Ok(v)
    }
}

/// Dense turn vectors produced elsewhere, keyed by `turn_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecomputedEncoder<T> {
    dim: usize,
    vectors: HashMap<String, Vec<T>>,
}

#[derive(Deserialize)]
struct VectorLine {
    turn_id: String,
    vector: Vec<f64>,
}

impl<T: Scalar> PrecomputedEncoder<T> {
    pub fn new(dim: usize, vectors: HashMap<String, Vec<T>>) -> Result<Self> {
        if let Some(bad) = vectors.values().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Ok(Self { dim, vectors })
    }

    /// Reads JSON Lines of `{"turn_id": .., "vector": [..]}`; the first
    /// vector fixes the dimension.
    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let lines = read_jsonl(reader, |_, l: VectorLine| Ok(l))?;
        let dim = lines.first().map(|l| l.vector.len()).ok_or(Error::Empty("turn vectors"))?;
        let vectors = lines
            .into_iter()
            .map(|l| (l.turn_id, l.vector.into_iter().map(T::lit).collect()))
            .collect();
        Self::new(dim, vectors)
    }
}

impl<T: Scalar> TurnEncoder<T> for PrecomputedEncoder<T> {
    fn text_dim(&self) -> usize {
        self.dim
    }

    fn encode_text(&self, turn: &Turn) -> Result<Vec<T>> {
        self.vectors
            .get(turn.turn_id())
            .cloned()
            .ok_or_else(|| Error::MissingScores {
                turn_ids: vec![turn.turn_id().to_string()],
            })
    }
}
