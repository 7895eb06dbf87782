//! Side-by-side evaluation of the baselines and the DQM on a labeled test
//! set: defect-class precision/recall/F1, ROC-AUC and AUC by length bucket.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aggregate::Method;
use crate::dataset::LabeledDialog;
use crate::error::{Error, Result};
use crate::metrics::{classification_report, roc_auc, stratified_auc, BucketAuc, ClassificationReport, LengthBucket};
use crate::scalar::Scalar;
use crate::tld::TldScoreMap;

pub const EVAL_FORMAT: &str = "eval-report v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MethodEvaluation<T> {
    pub method: Method,
    pub report: ClassificationReport<T>,
    pub auc: T,
    pub buckets: Vec<BucketAuc<T>>,
}

impl<T: Scalar> MethodEvaluation<T> {
    pub fn bucket_auc(&self, bucket: LengthBucket) -> Option<T> {
        self.buckets.iter().find(|b| b.bucket == bucket).and_then(|b| b.auc)
    }

    /// True when every bucket has an AUC and successive buckets never drop.
    pub fn buckets_non_decreasing(&self) -> bool {
        self.bucket_series().is_some_and(|s| s.windows(2).all(|w| w[0] <= w[1]))
    }

    pub fn buckets_non_increasing(&self) -> bool {
        self.bucket_series().is_some_and(|s| s.windows(2).all(|w| w[0] >= w[1]))
    }

    fn bucket_series(&self) -> Option<Vec<T>> {
        LengthBucket::ALL.iter().map(|&b| self.bucket_auc(b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvalReport<T> {
    pub format: String,
    pub n_test: usize,
    pub n_defect: usize,
    pub threshold: T,
    pub methods: Vec<MethodEvaluation<T>>,
    /// Baseline with the highest F1 (earliest in table order on ties).
    pub best_baseline: Method,
}

impl<T: Scalar> EvalReport<T> {
    pub fn get(&self, method: Method) -> Option<&MethodEvaluation<T>> {
        self.methods.iter().find(|m| m.method == method)
    }

    pub fn best_baseline(&self) -> &MethodEvaluation<T> {
        self.get(self.best_baseline).expect("best baseline is always evaluated")
    }

    /// Fixed-width text table: one row per method.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>9} {:>7} {:>6} {:>6}   {:>6} {:>6} {:>6}",
            "method", "precision", "recall", "f1", "auc", "short", "medium", "long"
        );
        for m in &self.methods {
            let cell = |b| match m.bucket_auc(b) {
                Some(v) => format!("{:.3}", v.as_f64()),
                None => "-".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<14} {:>9.3} {:>7.3} {:>6.3} {:>6.3}   {:>6} {:>6} {:>6}",
                m.method.label(),
                m.report.precision.as_f64(),
                m.report.recall.as_f64(),
                m.report.f1.as_f64(),
                m.auc.as_f64(),
                cell(LengthBucket::Short),
                cell(LengthBucket::Medium),
                cell(LengthBucket::Long),
            );
        }
        let _ = writeln!(
            out,
            "n_test={} n_defect={} best_baseline={}",
            self.n_test, self.n_defect, self.best_baseline
        );
        out
    }
}

fn evaluate_scores<T: Scalar>(method: Method, scores: &[T], actual: &[bool], lengths: &[usize], threshold: T) -> Result<MethodEvaluation<T>> {
    let predicted: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    Ok(MethodEvaluation {
        method,
        report: classification_report(&predicted, actual)?,
        auc: roc_auc(scores, actual)?,
        buckets: stratified_auc(scores, actual, lengths)?,
    })
}

/// Evaluates the four baselines and, if given, DQM probabilities (one per
/// test row, in order).
pub fn evaluate<T: Scalar>(test: &[LabeledDialog], scores: &TldScoreMap<T>, dqm: Option<&[T]>, threshold: T) -> Result<EvalReport<T>> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let actual: Vec<bool> = test.iter().map(|r| r.defect).collect();
    let lengths: Vec<usize> = test.iter().map(|r| r.dialog.len()).collect();
    let turn_scores = test
        .iter()
        .map(|r| scores.dialog_scores(&r.dialog))
        .collect::<Result<Vec<_>>>()?;

    let mut methods = Vec::new();
    for method in Method::BASELINES {
        let s = turn_scores
            .iter()
            .map(|t| method.aggregate(t))
            .collect::<Result<Vec<T>>>()?;
        methods.push(evaluate_scores(method, &s, &actual, &lengths, threshold)?);
    }
    let mut best = 0;
    for (i, m) in methods.iter().enumerate() {
        if m.report.f1 > methods[best].report.f1 {
            best = i;
        }
    }
    let best_baseline = methods[best].method;
    if let Some(p) = dqm {
        if p.len() != test.len() {
            return Err(Error::DimensionMismatch {
                expected: test.len(),
                found: p.len(),
            });
        }
        methods.push(evaluate_scores(Method::Dqm, p, &actual, &lengths, threshold)?);
    }
    Ok(EvalReport {
        format: EVAL_FORMAT.to_string(),
        n_test: test.len(),
        n_defect: actual.iter().filter(|&&d| d).count(),
        threshold,
        methods,
        best_baseline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, PatternMix, SynthSpec};

    #[test]
    fn baselines_only_and_with_dqm() {
        let c = generate(&SynthSpec::new(80, PatternMix::uniform(), 4)).unwrap();
        let r = evaluate(&c.dialogs, &c.scores, None, 0.5).unwrap();
        assert_eq!(r.methods.len(), 4);
        assert_eq!(r.n_defect, 40);
        let best = r.best_baseline().report.f1;
        assert!(r.methods.iter().all(|m| m.report.f1 <= best));

        let oracle: Vec<f64> = c.dialogs.iter().map(|d| if d.defect { 0.9 } else { 0.1 }).collect();
        let r = evaluate(&c.dialogs, &c.scores, Some(&oracle), 0.5).unwrap();
        let dqm = r.get(Method::Dqm).unwrap();
        assert_eq!(dqm.report.f1, 1.0);
        assert_eq!(dqm.auc, 1.0);
        assert!(dqm.buckets_non_decreasing() && dqm.buckets_non_increasing());
        assert!(r.to_table().contains("DQM"));
        assert!(evaluate(&c.dialogs, &c.scores, Some(&oracle[1..]), 0.5).is_err());
    }
}
