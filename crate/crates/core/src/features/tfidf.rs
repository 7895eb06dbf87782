use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::text::normalize_tokens;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Unigram TF-IDF with smoothed idf `ln((1 + N) / (1 + df)) + 1`.
///
/// Columns are the selected tokens in lexicographic order, so a fitted model
/// depends only on the multiset of training documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TfidfModel<T> {
    vocabulary: Vec<String>,
    idf: Vec<T>,
    n_documents: usize,
}

impl<T: Scalar> TfidfModel<T> {
    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn idf(&self) -> &[T] {
        &self.idf
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.vocabulary.binary_search_by(|t| t.as_str().cmp(token)).ok()
    }

    pub fn idf_of(&self, token: &str) -> Option<T> {
        self.column(token).map(|c| self.idf[c])
    }

    /// Raw counts times idf, L2-normalized; out-of-vocabulary tokens ignored.
    pub fn transform(&self, text: &str) -> Vec<T> {
        let mut v = vec![T::zero(); self.vocabulary.len()];
        for tok in normalize_tokens(text) {
            if let Some(c) = self.column(&tok) {
                v[c] = v[c] + self.idf[c];
            }
        }
        l2_normalize(&mut v);
        v
    }

    /// Checks structural consistency after deserialization.
    pub fn validate(&self) -> Result<&Self> {
        if self.vocabulary.len() != self.idf.len() {
            return Err(Error::DimensionMismatch {
                expected: self.vocabulary.len(),
                found: self.idf.len(),
            });
        }
        if self.vocabulary.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("tfidf vocabulary must be strictly sorted".into()));
        }
        Ok(self)
    }
}

pub(crate) fn l2_normalize<T: Scalar>(v: &mut [T]) {
    let norm = v.iter().map(|&x| x * x).sum::<T>().sqrt();
    if norm > T::zero() {
        for x in v.iter_mut() {
            *x = *x / norm;
        }
    }
}

/// Fits a vocabulary of the `vocab_max` unigrams with highest document
/// frequency (ties broken lexicographically).
pub fn fit_tfidf<T: Scalar, S: AsRef<str>>(documents: &[S], vocab_max: usize) -> Result<TfidfModel<T>> {
    if documents.is_empty() {
        return Err(Error::Empty("tfidf corpus"));
    }
    if vocab_max == 0 {
        return Err(Error::InvalidParameter("vocab_max must be >= 1".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in documents {
        let unique: BTreeSet<String> = normalize_tokens(doc.as_ref()).into_iter().collect();
        for tok in unique {
            *df.entry(tok).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(vocab_max);
    ranked.sort_by(|a, b| a.0.cmp(&b.0));

    let n = documents.len();
    let idf = ranked
        .iter()
        .map(|(_, d)| T::lit(((1 + n) as f64 / (1 + d) as f64).ln() + 1.0))
        .collect();
    Ok(TfidfModel {
        vocabulary: ranked.into_iter().map(|(t, _)| t).collect(),
        idf,
        n_documents: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // idf oracle: direct evaluation of ln((1+N)/(1+df)) + 1.
    fn idf_oracle(n: f64, df: f64) -> f64 {
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    #[test]
    fn two_document_idf() {
        let m: TfidfModel<f64> = fit_tfidf(&["a b", "a c"], 10).unwrap();
        assert_eq!(m.vocabulary(), ["a", "b", "c"]);
        assert!((m.idf_of("a").unwrap() - 1.0).abs() < 1e-12);
        assert!((m.idf_of("b").unwrap() - idf_oracle(2.0, 1.0)).abs() < 1e-12);
        assert!((m.idf_of("b").unwrap() - 1.405_465_108_108_164_4).abs() < 1e-12);
        assert!(m.idf_of("z").is_none());
    }

    #[test]
    fn transform_normalizes() {
        let m: TfidfModel<f64> = fit_tfidf(&["a b", "a c"], 10).unwrap();
        let v = m.transform("a b");
        let (a, b) = (1.0, idf_oracle(2.0, 1.0));
        let norm = (a * a + b * b).sqrt();
        assert!((v[0] - a / norm).abs() < 1e-12);
        assert!((v[1] - b / norm).abs() < 1e-12);
        assert!((v[0] - 0.5797).abs() < 1e-4 && (v[1] - 0.8148).abs() < 1e-4);
        assert_eq!(v[2], 0.0);
        assert_eq!(m.transform("zzz qqq"), vec![0.0; 3]);
    }

    #[test]
    fn vocabulary_cap_prefers_frequent_then_lexicographic() {
        let m: TfidfModel<f32> = fit_tfidf(&["x b a", "x c", "x d"], 2).unwrap();
        assert_eq!(m.vocabulary(), ["a", "x"]);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(fit_tfidf::<f64, &str>(&[], 5), Err(Error::Empty(_))));
        assert!(fit_tfidf::<f64, _>(&["a"], 0).is_err());
    }

    proptest! {
        #[test]
        fn fit_is_order_independent(docs in prop::collection::vec("[a-e]( [a-e]){0,5}", 1..8), cap in 1usize..6, seed in any::<u64>()) {
            let mut shuffled = docs.clone();
            let k = shuffled.len();
            shuffled.rotate_left((seed % k as u64) as usize);
            shuffled.reverse();
            let a: TfidfModel<f64> = fit_tfidf(&docs, cap).unwrap();
            let b: TfidfModel<f64> = fit_tfidf(&shuffled, cap).unwrap();
            prop_assert_eq!(&a, &b);
            for d in &docs {
                let v = a.transform(d);
                let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-9);
            }
        }
    }
}
