//! Evaluation mathematics. Defect is the positive class everywhere.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::questionnaire::DialogAnnotation;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ClassificationReport<T> {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    /// Set when precision or recall had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

impl<T: Scalar> ClassificationReport<T> {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                (T::zero(), true)
            } else {
                (T::from_usize_lossy(num) / T::from_usize_lossy(den), false)
            }
        };
        let (precision, zp) = ratio(tp, tp + fp);
        let (recall, zr) = ratio(tp, tp + fn_);
        let f1 = if precision + recall > T::zero() {
            T::lit(2.0) * precision * recall / (precision + recall)
        } else {
            T::zero()
        };
        Self {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f1,
            zero_division: zp || zr,
        }
    }

    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> T {
        T::from_usize_lossy(self.tp + self.tn) / T::from_usize_lossy(self.n().max(1))
    }
}

pub fn classification_report<T: Scalar>(predicted: &[bool], actual: &[bool]) -> Result<ClassificationReport<T>> {
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            found: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::Empty("labels"));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &a) in predicted.iter().zip(actual) {
        match (p, a) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(ClassificationReport::from_counts(tp, fp, tn, fn_))
}

fn cmp_scalar<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).expect("scores must not be NaN")
}

fn check_finite<T: Scalar>(values: &[T], what: &'static str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{what} must be finite")));
    }
    Ok(())
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Pair counts are accumulated exactly in integers.
pub fn roc_auc<T: Scalar>(scores: &[T], actual: &[bool]) -> Result<T> {
    if scores.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            found: scores.len(),
        });
    }
    check_finite(scores, "scores")?;
    let positives = actual.iter().filter(|&&a| a).count() as u128;
    let negatives = actual.len() as u128 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| cmp_scalar(&scores[a], &scores[b]));

    // twice the Mann-Whitney U statistic
    let mut doubled: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let (pos, neg) = order[i..j].iter().fold((0u128, 0u128), |(p, n), &k| {
            if actual[k] {
                (p + 1, n)
            } else {
                (p, n + 1)
            }
        });
        doubled += pos * (2 * negatives_below + neg);
        negatives_below += neg;
        i = j;
    }
    Ok(T::lit(doubled as f64) / T::lit((2 * positives * negatives) as f64))
}

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks<T: Scalar>(values: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| cmp_scalar(&values[a], &values[b]));
    let mut ranks = vec![T::zero(); values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j averaged
        let avg = T::from_usize_lossy(i + 1 + j) / T::lit(2.0);
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

fn pearson<T: Scalar>(x: &[T], y: &[T]) -> Result<T> {
    let n = T::from_usize_lossy(x.len());
    let mx = x.iter().copied().sum::<T>() / n;
    let my = y.iter().copied().sum::<T>() / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(Error::Undefined("an input has zero rank variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one()))
}

/// Spearman's rho with a two-sided p-value from the t approximation on
/// `n - 2` degrees of freedom.
pub fn spearman_rho<T: Scalar>(x: &[T], y: &[T]) -> Result<(T, T)> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "spearman needs n >= 3, got {}",
            x.len()
        )));
    }
    check_finite(x, "x")?;
    check_finite(y, "y")?;
    let rho = pearson(&average_ranks(x), &average_ranks(y))?;
    Ok((rho, T::lit(t_test_p_value(rho.as_f64(), x.len()))))
}

fn t_test_p_value(rho: f64, n: usize) -> f64 {
    if rho.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = rho * (df / (1.0 - rho * rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthBucket {
    /// 1-3 turns.
    Short,
    /// 4-6 turns.
    Medium,
    /// 7 or more turns.
    Long,
}

impl LengthBucket {
    pub const ALL: [LengthBucket; 3] = [LengthBucket::Short, LengthBucket::Medium, LengthBucket::Long];

    pub fn of(turns: usize) -> Self {
        match turns {
            0..=3 => LengthBucket::Short,
            4..=6 => LengthBucket::Medium,
            _ => LengthBucket::Long,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LengthBucket::Short => "Short (<=3 turns)",
            LengthBucket::Medium => "Medium (4-6 turns)",
            LengthBucket::Long => "Long (>=7 turns)",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BucketAuc<T> {
    pub bucket: LengthBucket,
    pub n: usize,
    pub n_defect: usize,
    /// `None` when the bucket lacks one of the classes.
    pub auc: Option<T>,
}

/// ROC-AUC within each dialog-length bucket.
pub fn stratified_auc<T: Scalar>(scores: &[T], actual: &[bool], lengths: &[usize]) -> Result<Vec<BucketAuc<T>>> {
    if scores.len() != actual.len() || lengths.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            found: scores.len().min(lengths.len()),
        });
    }
    LengthBucket::ALL
        .iter()
        .map(|&bucket| {
            let idx: Vec<usize> = (0..scores.len())
                .filter(|&i| LengthBucket::of(lengths[i]) == bucket)
                .collect();
            let s: Vec<T> = idx.iter().map(|&i| scores[i]).collect();
            let a: Vec<bool> = idx.iter().map(|&i| actual[i]).collect();
            let n_defect = a.iter().filter(|&&x| x).count();
            let auc = match roc_auc(&s, &a) {
                Ok(v) => Some(v),
                Err(Error::SingleClass) => None,
                Err(e) => return Err(e),
            };
            Ok(BucketAuc {
                bucket,
                n: idx.len(),
                n_defect,
                auc,
            })
        })
        .collect()
}

/// Fraction of rating pairs differing by at most one scale point.
pub fn agreement_within_one(pairs: &[(u8, u8)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("rating pairs"));
    }
    if let Some(&(a, b)) = pairs.iter().find(|(a, b)| !(1..=5).contains(a) || !(1..=5).contains(b)) {
        let bad = if (1..=5).contains(&a) { b } else { a };
        return Err(Error::RatingOutOfRange(i64::from(bad)));
    }
    let agree = pairs.iter().filter(|(a, b)| a.abs_diff(*b) <= 1).count();
    Ok(agree as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    GoalCompletion,
    ResponseCoherence,
    GoalFriction,
    UserSentiment,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [
        Attribute::GoalCompletion,
        Attribute::ResponseCoherence,
        Attribute::GoalFriction,
        Attribute::UserSentiment,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Attribute::GoalCompletion => "Goal completion",
            Attribute::ResponseCoherence => "Response coherence",
            Attribute::GoalFriction => "Goal friction",
            Attribute::UserSentiment => "User sentiment",
        }
    }

    pub fn ordinal(self, a: &DialogAnnotation) -> u8 {
        let q = &a.questionnaire;
        match self {
            Attribute::GoalCompletion => q.goal_completion.ordinal(),
            Attribute::ResponseCoherence => q.coherence.ordinal(),
            Attribute::GoalFriction => q.goal_friction.ordinal(),
            Attribute::UserSentiment => q.sentiment.ordinal(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AttributeCorrelation<T> {
    pub attribute: Attribute,
    pub n: usize,
    pub rho: Option<T>,
    pub p_value: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub undefined_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CorrelationReport<T> {
    /// Ordinals in option order (friction: lots=0 .. none=2).
    pub attributes: Vec<AttributeCorrelation<T>>,
    /// Friction re-encoded lots-high (lots=2 .. none=0), so that more
    /// friction with lower ratings shows as a negative rho.
    pub friction_lots_high: AttributeCorrelation<T>,
}

impl<T: Scalar> CorrelationReport<T> {
    pub fn get(&self, attribute: Attribute) -> Option<&AttributeCorrelation<T>> {
        self.attributes.iter().find(|a| a.attribute == attribute)
    }

    /// Attribute, n, rho and p-value per line; friction is repeated under
    /// the lots-high encoding.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<T>| v.map_or_else(|| "-".to_string(), |v| format!("{:.3}", v.as_f64()));
        let mut out = format!("{:<28} {:>5} {:>8} {:>9}\n", "attribute", "n", "rho", "p");
        for a in &self.attributes {
            out.push_str(&format!("{:<28} {:>5} {:>8} {:>9}\n", a.attribute.label(), a.n, fmt(a.rho), fmt(a.p_value)));
        }
        let f = &self.friction_lots_high;
        out.push_str(&format!("{:<28} {:>5} {:>8} {:>9}\n", "Goal friction (lots high)", f.n, fmt(f.rho), fmt(f.p_value)));
        out
    }
}

fn correlate<T: Scalar>(attribute: Attribute, x: &[T], ratings: &[T]) -> AttributeCorrelation<T> {
    match spearman_rho(x, ratings) {
        Ok((rho, p)) => AttributeCorrelation {
            attribute,
            n: x.len(),
            rho: Some(rho),
            p_value: Some(p),
            undefined_reason: None,
        },
        Err(e) => AttributeCorrelation {
            attribute,
            n: x.len(),
            rho: None,
            p_value: None,
            undefined_reason: Some(e.to_string()),
        },
    }
}

/// Spearman correlation of each attribute ordinal against the 1-5 user
/// satisfaction rating. Attributes that cannot be correlated (n < 3, zero
/// variance) get an undefined entry rather than failing the report.
pub fn attribute_correlations<T: Scalar>(annotations: &[DialogAnnotation]) -> CorrelationReport<T> {
    let ratings: Vec<T> = annotations
        .iter()
        .map(|a| T::lit(f64::from(a.questionnaire.user_satisfaction)))
        .collect();
    let column = |attr: Attribute| -> Vec<T> {
        annotations
            .iter()
            .map(|a| T::lit(f64::from(attr.ordinal(a))))
            .collect()
    };
    let attributes = Attribute::ALL
        .iter()
        .map(|&attr| correlate(attr, &column(attr), &ratings))
        .collect();
    let lots_high: Vec<T> = column(Attribute::GoalFriction)
        .into_iter()
        .map(|v| T::lit(2.0) - v)
        .collect();
    CorrelationReport {
        attributes,
        friction_lots_high: correlate(Attribute::GoalFriction, &lots_high, &ratings),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::questionnaire::*;
    use proptest::prelude::*;

    fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    total += if si > sj {
                        1.0
                    } else if si == sj {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        total / pairs
    }

    #[test]
    fn report_examples() {
        let perfect = classification_report::<f64>(&[true, false, true], &[true, false, true]).unwrap();
        assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));

        // tp=2, fp=1, fn=1, tn=1
        let r = classification_report::<f64>(
            &[true, true, true, false, false],
            &[true, true, false, true, false],
        )
        .unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (2, 1, 1, 1));
        for v in [r.precision, r.recall, r.f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }

        let none = classification_report::<f64>(&[false, false], &[true, false]).unwrap();
        assert_eq!((none.precision, none.recall, none.f1), (0.0, 0.0, 0.0));
        assert!(none.zero_division);
        assert!(classification_report::<f64>(&[true], &[true, false]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.4, 0.6], &[true, false, true]).unwrap(), 1.0);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::SingleClass)));
    }

    #[test]
    fn spearman_examples() {
        let (r, p) = spearman_rho::<f64>(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 8.0, 9.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(p, 0.0);
        let (r, _) = spearman_rho::<f64>(&[1.0, 2.0, 3.0, 4.0], &[9.0, 7.0, 3.0, 1.0]).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
        assert!(spearman_rho(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(spearman_rho(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn spearman_with_ties_matches_hand_computation() {
        // ranks x = [1, 2.5, 2.5, 4], y = [1, 3, 2, 4]; both mean 2.5
        // dx = [-1.5, 0, 0, 1.5], dy = [-1.5, 0.5, -0.5, 1.5]
        // sxy = 4.5, sxx = 4.5, syy = 5.0
        let expected = 4.5 / (4.5f64.sqrt() * 5.0f64.sqrt());
        assert!((expected - 0.948_683_298_050_513_8).abs() < 1e-15);
        let (r, p) = spearman_rho(&[1.0, 2.0, 2.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - expected).abs() < 1e-12);
        assert!(p > 0.0 && p < 0.1);
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn p_value_matches_reference() {
        // n = 10, rho = 0.6: t = 0.6 * sqrt(8 / 0.64) = 2.1213; two-sided p ~= 0.0667
        let p = t_test_p_value(0.6, 10);
        assert!((p - 0.066_688).abs() < 1e-4, "{p}");
    }

    #[test]
    fn buckets() {
        assert_eq!(LengthBucket::of(1), LengthBucket::Short);
        assert_eq!(LengthBucket::of(3), LengthBucket::Short);
        assert_eq!(LengthBucket::of(4), LengthBucket::Medium);
        assert_eq!(LengthBucket::of(6), LengthBucket::Medium);
        assert_eq!(LengthBucket::of(7), LengthBucket::Long);
        let r = stratified_auc(&[0.9, 0.1, 0.8], &[true, false, true], &[2, 2, 2]).unwrap();
        assert!(r[0].auc.is_some());
        assert!(r[1].auc.is_none() && r[2].auc.is_none());
        assert_eq!(r[1].n, 0);
    }

    #[test]
    fn agreement() {
        assert_eq!(agreement_within_one(&[(5, 4)]).unwrap(), 1.0);
        assert_eq!(agreement_within_one(&[(5, 3)]).unwrap(), 0.0);
        assert!((agreement_within_one(&[(5, 4), (5, 3), (2, 2)]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(agreement_within_one(&[]).is_err());
        assert!(agreement_within_one(&[(0, 1)]).is_err());
    }

    fn annotation(rating: u8, completion: GoalCompletion, friction: GoalFriction) -> DialogAnnotation {
        DialogAnnotation {
            dialog_id: format!("d{rating}"),
            annotator_id: "a".into(),
            questionnaire: DqaQuestionnaire {
                turn_ratings: vec![rating],
                user_satisfaction: rating,
                goal_count: GoalCount::One,
                goal_progression: GoalProgression::SomeProgress,
                goal_completion: completion,
                goal_friction: friction,
                coherence: Coherence::AllMadeSense,
                sentiment: Sentiment::Neutral,
            },
        }
    }

    #[test]
    fn attribute_correlation_signs() {
        use GoalCompletion::*;
        use GoalFriction::*;
        let set = vec![
            annotation(1, NoneCompleted, LotsOfFriction),
            annotation(3, SomeCompleted, SomeFriction),
            annotation(5, AllCompleted, NoFriction),
        ];
        let report = attribute_correlations::<f64>(&set);
        assert_eq!(report.get(Attribute::GoalCompletion).unwrap().rho, Some(1.0));
        assert!(report.friction_lots_high.rho.unwrap() < 0.0);
        let coherence = report.get(Attribute::ResponseCoherence).unwrap();
        assert!(coherence.rho.is_none() && coherence.undefined_reason.is_some());
    }

    proptest! {
        #[test]
        fn auc_matches_brute_force(data in prop::collection::vec((0u8..20, any::<bool>()), 2..80)) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 20.0).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let auc = roc_auc(&scores, &labels).unwrap();
            prop_assert!((auc - brute_auc(&scores, &labels)).abs() < 1e-12);
            let shifted: Vec<f64> = scores.iter().map(|s| (s * 3.0).exp()).collect();
            prop_assert!((roc_auc(&shifted, &labels).unwrap() - auc).abs() < 1e-12);
        }

        #[test]
        fn auc_negation_complements(data in prop::collection::hash_map(0u32..10_000, any::<bool>(), 2..60)) {
            let scores: Vec<f64> = data.keys().map(|&k| f64::from(k)).collect();
            let labels: Vec<bool> = data.values().copied().collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let total = roc_auc(&scores, &labels).unwrap() + roc_auc(&neg, &labels).unwrap();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn spearman_invariances(pairs in prop::collection::vec((0u8..8, 0u8..8), 3..40)) {
            let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
            let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
            if let Ok((r, p)) = spearman_rho(&x, &y) {
                prop_assert!((-1.0..=1.0).contains(&r));
                prop_assert!((0.0..=1.0).contains(&p));
                let tx: Vec<f64> = x.iter().map(|v| v.powi(3) + 2.0).collect();
                prop_assert!((spearman_rho(&tx, &y).unwrap().0 - r).abs() < 1e-12);
                let rev: Vec<f64> = y.iter().map(|v| -v).collect();
                prop_assert!((spearman_rho(&x, &rev).unwrap().0 + r).abs() < 1e-12);
            }
        }

        #[test]
        fn report_counts_sum(data in prop::collection::vec((any::<bool>(), any::<bool>()), 1..100)) {
            let (p, a): (Vec<bool>, Vec<bool>) = data.into_iter().unzip();
            let r = classification_report::<f64>(&p, &a).unwrap();
            prop_assert_eq!(r.n(), p.len());
            prop_assert!(r.f1 <= 1.0 && r.f1 >= 0.0);
        }
    }
}
