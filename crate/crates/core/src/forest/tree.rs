//! CART classification trees with Gini impurity.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ForestParams, LabeledRow};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Arena node; children are indexes into [`Tree::nodes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
#[serde(rename_all = "snake_case")]
pub enum TreeNode<T> {
    /// Rows with `x[feature] <= threshold` go left.
    Internal {
        feature: usize,
        threshold: T,
        left: usize,
        right: usize,
    },
    Leaf {
        defect_fraction: T,
        sample_count: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Tree<T> {
    /// Root at index 0.
    pub nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn leaf_for(&self, x: &[T]) -> (T, usize) {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf {
                    defect_fraction,
                    sample_count,
                } => return (*defect_fraction, *sample_count),
            }
        }
    }

    pub fn predict_proba(&self, x: &[T]) -> T {
        self.leaf_for(x).0
    }

    pub fn depth(&self) -> usize {
        fn walk<T>(nodes: &[TreeNode<T>], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Internal { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

/// Weighted Gini impurity of a two-way split, from class counts.
pub fn weighted_gini(left_pos: usize, left_n: usize, right_pos: usize, right_n: usize) -> f64 {
    let n = (left_n + right_n) as f64;
    let part = |pos: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            (pos * (total - pos)) as f64 / total as f64
        }
    };
    2.0 * (part(left_pos, left_n) + part(right_pos, right_n)) / n
}

pub fn gini(pos: usize, n: usize) -> f64 {
    weighted_gini(pos, n, 0, 0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Split<T> {
    pub feature: usize,
    pub threshold: T,
    pub impurity: f64,
}

/// Best threshold on one feature: midpoints between consecutive distinct
/// sorted values, both sides holding at least `min_leaf` rows. Returns
/// `None` when the feature is constant over the rows.
pub(crate) fn best_split_on_feature<T: Scalar>(
    rows: &[LabeledRow<T>],
    indices: &[usize],
    feature: usize,
    min_leaf: usize,
) -> Option<Option<Split<T>>> {
    let mut column: Vec<(T, bool)> = indices
        .iter()
        .map(|&i| (rows[i].features[feature], rows[i].defect))
        .collect();
    column.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
    if column.first()?.0 == column.last()?.0 {
        return None;
    }
    let n = column.len();
    let total_pos = column.iter().filter(|c| c.1).count();
    let mut left_pos = 0;
    let mut best: Option<Split<T>> = None;
    for i in 1..n {
        if column[i - 1].1 {
            left_pos += 1;
        }
        let (lo, hi) = (column[i - 1].0, column[i].0);
        if lo == hi || i < min_leaf || n - i < min_leaf {
            continue;
        }
        let impurity = weighted_gini(left_pos, i, total_pos - left_pos, n - i);
        if best.is_none_or(|b| impurity < b.impurity) {
            let mid = lo + (hi - lo) / T::lit(2.0);
            // adjacent floats: the midpoint can round up to `hi`
            let threshold = if mid < hi { mid } else { lo };
            best = Some(Split {
                feature,
                threshold,
                impurity,
            });
        }
    }
    Some(best)
}

struct Builder<'a, T, R> {
    rows: &'a [LabeledRow<T>],
    params: &'a ForestParams,
    features_per_split: usize,
    dim: usize,
    rng: &'a mut R,
    nodes: Vec<TreeNode<T>>,
}

impl<T: Scalar, R: Rng> Builder<'_, T, R> {
    fn leaf(&mut self, indices: &[usize]) -> usize {
        let pos = indices.iter().filter(|&&i| self.rows[i].defect).count();
        self.nodes.push(TreeNode::Leaf {
            defect_fraction: T::from_usize_lossy(pos) / T::from_usize_lossy(indices.len()),
            sample_count: indices.len(),
        });
        self.nodes.len() - 1
    }

    /// Samples features in random order until `features_per_split`
    /// non-constant ones have been evaluated.
    fn find_split(&mut self, indices: &[usize]) -> Option<Split<T>> {
        let mut order: Vec<usize> = (0..self.dim).collect();
        let mut evaluated = 0;
        let mut best: Option<Split<T>> = None;
        for k in 0..self.dim {
            if evaluated == self.features_per_split {
                break;
            }
            let j = self.rng.gen_range(k..self.dim);
            order.swap(k, j);
            let feature = order[k];
            let Some(candidate) = best_split_on_feature(self.rows, indices, feature, self.params.min_samples_leaf) else {
                continue;
            };
            evaluated += 1;
            if let Some(c) = candidate {
                if best.is_none_or(|b| c.impurity < b.impurity) {
                    best = Some(c);
                }
            }
        }
        best
    }

    fn build(&mut self, indices: &mut [usize], depth: usize) -> usize {
        let n = indices.len();
        let pos = indices.iter().filter(|&&i| self.rows[i].defect).count();
        let at_limit = self.params.max_depth.is_some_and(|d| depth >= d);
        if pos == 0 || pos == n || at_limit || n < 2 * self.params.min_samples_leaf {
            return self.leaf(indices);
        }
        let parent = gini(pos, n);
        let split = match self.find_split(indices) {
            Some(s) if s.impurity < parent => s,
            _ => return self.leaf(indices),
        };

        let mut cut = 0;
        for i in 0..n {
            if self.rows[indices[i]].features[split.feature] <= split.threshold {
                indices.swap(i, cut);
                cut += 1;
            }
        }
        let slot = self.nodes.len();
        self.nodes.push(TreeNode::Leaf {
            defect_fraction: T::zero(),
            sample_count: 0,
        });
        let (left_idx, right_idx) = indices.split_at_mut(cut);
        let left = self.build(left_idx, depth + 1);
        let right = self.build(right_idx, depth + 1);
        self.nodes[slot] = TreeNode::Internal {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        slot
    }
}

pub(crate) fn check_rows<T: Scalar>(rows: &[LabeledRow<T>]) -> Result<usize> {
    let first = rows.first().ok_or(Error::Empty("training rows"))?;
    let dim = first.features.len();
    if dim == 0 {
        return Err(Error::InvalidParameter("feature dimension must be >= 1".into()));
    }
    for r in rows {
        if r.features.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.features.len(),
            });
        }
        if r.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("features must be finite".into()));
        }
    }
    Ok(dim)
}

/// Grows one tree on the rows selected by `indices` (repeats allowed).
pub(crate) fn grow<T: Scalar, R: Rng>(
    rows: &[LabeledRow<T>],
    indices: &mut [usize],
    params: &ForestParams,
    dim: usize,
    rng: &mut R,
) -> Result<Tree<T>> {
    let features_per_split = params.features_per_split(dim)?;
    let mut builder = Builder {
        rows,
        params,
        features_per_split,
        dim,
        rng,
        nodes: Vec::new(),
    };
    builder.build(indices, 0);
    Ok(Tree { nodes: builder.nodes })
}

/// Grows a tree on all rows, with feature subsampling driven by `rng`.
pub fn train_tree<T: Scalar, R: Rng>(rows: &[LabeledRow<T>], params: &ForestParams, rng: &mut R) -> Result<Tree<T>> {
    let dim = check_rows(rows)?;
    params.validate(dim)?;
    let mut indices: Vec<usize> = (0..rows.len()).collect();
    grow(rows, &mut indices, params, dim, rng)
}

/// Draws `n` row indexes with replacement.
pub(crate) fn bootstrap<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row(x: Vec<f64>, defect: bool) -> LabeledRow<f64> {
        LabeledRow { features: x, defect }
    }

    fn params() -> ForestParams {
        ForestParams {
            n_trees: 1,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
            seed: 0,
        }
    }

    #[test]
    fn single_row_is_pure_leaf() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = train_tree(&[row(vec![0.3], true)], &params(), &mut rng).unwrap();
        assert_eq!(t.nodes, vec![TreeNode::Leaf { defect_fraction: 1.0, sample_count: 1 }]);
    }

    #[test]
    fn pure_data_gives_root_leaf() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<_> = (0..10).map(|i| row(vec![i as f64, 1.0], false)).collect();
        let t = train_tree(&rows, &params(), &mut rng).unwrap();
        assert_eq!(t.depth(), 0);
        assert_eq!(t.predict_proba(&[3.0, 1.0]), 0.0);
    }

    #[test]
    fn separable_one_dimensional_data_splits_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = vec![row(vec![0.0], false), row(vec![1.0], true)];
        let t = train_tree(&rows, &params(), &mut rng).unwrap();
        assert_eq!(t.nodes.len(), 3);
        match t.nodes[0] {
            TreeNode::Internal { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 0.5);
            }
            _ => panic!("expected split"),
        }
        assert_eq!(t.predict_proba(&[0.0]), 0.0);
        assert_eq!(t.predict_proba(&[1.0]), 1.0);
    }

    #[test]
    fn depth_and_leaf_limits_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<_> = (0..64)
            .map(|i| row(vec![(i % 8) as f64, (i / 8) as f64], (i % 8 + i / 8) % 2 == 0))
            .collect();
        let p = ForestParams {
            max_depth: Some(2),
            min_samples_leaf: 5,
            features_per_split: Some(2),
            ..params()
        };
        let t = train_tree(&rows, &p, &mut rng).unwrap();
        assert!(t.depth() <= 2);
        for n in &t.nodes {
            if let TreeNode::Leaf { sample_count, .. } = n {
                assert!(*sample_count >= 5);
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rows = vec![row(vec![0.0], false), row(vec![1.0, 2.0], true)];
        assert!(matches!(
            train_tree(&rows, &params(), &mut rng),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(0, 4), 0.0);
        assert_eq!(gini(2, 4), 0.5);
        assert!((weighted_gini(1, 2, 2, 2) - 0.25).abs() < 1e-15);
    }

    fn brute_gini(rows: &[LabeledRow<f64>], feature: usize, threshold: f64) -> f64 {
        let (left, right): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r.features[feature] <= threshold);
        let g = |side: &[&LabeledRow<f64>]| {
            if side.is_empty() {
                return 0.0;
            }
            let p = side.iter().filter(|r| r.defect).count() as f64 / side.len() as f64;
            1.0 - p * p - (1.0 - p) * (1.0 - p)
        };
        let n = rows.len() as f64;
        left.len() as f64 / n * g(&left) + right.len() as f64 / n * g(&right)
    }

    proptest! {
        #[test]
        fn split_impurity_matches_recount(data in prop::collection::vec((0u8..6, 0u8..6, any::<bool>()), 2..30), min_leaf in 1usize..4) {
            let rows: Vec<_> = data.iter().map(|&(a, b, l)| row(vec![f64::from(a), f64::from(b)], l)).collect();
            let idx: Vec<usize> = (0..rows.len()).collect();
            for f in 0..2 {
                if let Some(Some(s)) = best_split_on_feature(&rows, &idx, f, min_leaf) {
                    prop_assert!((s.impurity - brute_gini(&rows, f, s.threshold)).abs() < 1e-12);
                    let left = rows.iter().filter(|r| r.features[f] <= s.threshold).count();
                    prop_assert!(left >= min_leaf && rows.len() - left >= min_leaf);
                    let mut thresholds: Vec<f64> = rows.iter().map(|r| r.features[f]).collect();
                    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    thresholds.dedup();
                    for w in thresholds.windows(2) {
                        let t = (w[0] + w[1]) / 2.0;
                        let l = rows.iter().filter(|r| r.features[f] <= t).count();
                        if l >= min_leaf && rows.len() - l >= min_leaf {
                            prop_assert!(s.impurity <= brute_gini(&rows, f, t) + 1e-12);
                        }
                    }
                }
            }
        }
    }
}
