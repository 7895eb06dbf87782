//! Bagged CART ensemble for binary defect classification.
//!
//! Every tree draws its bootstrap sample and feature subsets from a ChaCha
//! stream keyed by `(seed, tree_index)`, so a forest is identical whether
//! its trees are grown serially or in parallel, and growing more trees
//! never changes the earlier ones.

pub mod cv;
pub mod tree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cv::{cross_validate, cross_validate_with, stratified_folds, CvOutcome};
pub use tree::{train_tree, Tree, TreeNode};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A feature vector with its binary label (`true` = defect).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct LabeledRow<T> {
    pub features: Vec<T>,
    pub defect: bool,
}

impl<T> LabeledRow<T> {
    pub fn new(features: Vec<T>, defect: bool) -> Self {
        Self { features, defect }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` means `ceil(sqrt(dim))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
            seed: 7,
        }
    }
}

impl ForestParams {
    pub fn features_per_split(&self, dim: usize) -> Result<usize> {
        let m = self
            .features_per_split
            .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize);
        if m == 0 || m > dim {
            return Err(Error::InvalidParameter(format!(
                "features_per_split {m} outside 1..={dim}"
            )));
        }
        Ok(m)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidParameter("max_depth must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidParameter("min_samples_leaf must be >= 1".into()));
        }
        self.features_per_split(dim).map(|_| ())
    }

    fn tree_rng(&self, tree_index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(tree_index as u64);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Forest<T> {
    pub trees: Vec<Tree<T>>,
    pub params: ForestParams,
    pub feature_dimension: usize,
}

impl<T: Scalar> Forest<T> {
    /// Mean leaf defect fraction across trees.
    pub fn predict_proba(&self, x: &[T]) -> Result<T> {
        if x.len() != self.feature_dimension {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dimension,
                found: x.len(),
            });
        }
        let total: T = self.trees.iter().map(|t| t.predict_proba(x)).sum();
        Ok(total / T::from_usize_lossy(self.trees.len()))
    }

    pub fn predict(&self, x: &[T], threshold: T) -> Result<bool> {
        Ok(self.predict_proba(x)? >= threshold)
    }
}

fn prepare<T: Scalar>(rows: &[LabeledRow<T>], params: &ForestParams) -> Result<usize> {
    let dim = tree::check_rows(rows)?;
    params.validate(dim)?;
    let pos = rows.iter().filter(|r| r.defect).count();
    if pos == 0 || pos == rows.len() {
        return Err(Error::SingleClass);
    }
    Ok(dim)
}

fn grow_one<T: Scalar>(rows: &[LabeledRow<T>], params: &ForestParams, dim: usize, index: usize) -> Result<Tree<T>> {
    let mut rng = params.tree_rng(index);
    let mut sample = tree::bootstrap(rows.len(), &mut rng);
    tree::grow(rows, &mut sample, params, dim, &mut rng)
}

/// Trains `params.n_trees` trees in parallel.
pub fn train_forest<T: Scalar>(rows: &[LabeledRow<T>], params: &ForestParams) -> Result<Forest<T>> {
    let dim = prepare(rows, params)?;
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| grow_one(rows, params, dim, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        trees,
        params: params.clone(),
        feature_dimension: dim,
    })
}

/// Single-threaded equivalent of [`train_forest`].
pub fn train_forest_serial<T: Scalar>(rows: &[LabeledRow<T>], params: &ForestParams) -> Result<Forest<T>> {
    let dim = prepare(rows, params)?;
    let trees = (0..params.n_trees)
        .map(|i| grow_one(rows, params, dim, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        trees,
        params: params.clone(),
        feature_dimension: dim,
    })
}
