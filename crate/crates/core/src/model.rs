//! The dialog quality model (DQM): feature extraction plus random forest,
//! grid selection by cross-validation, and the on-disk model bundle.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{training_fingerprint, LabeledDialog};
use crate::dialog::Dialog;
use crate::error::{Error, Result};
use crate::features::{
    fit_tfidf, project, EncoderConfig, FeatureToggles, HashedEncoder, TfidfModel, TurnEncoder, DEFAULT_VOCAB_MAX,
};
use crate::forest::{cross_validate_with, train_forest, CvOutcome, Forest, ForestParams, LabeledRow};
use crate::scalar::Scalar;
use crate::tld::TldScoreMap;

pub const BUNDLE_FORMAT: &str = "dqm-bundle v1";
pub const DEFAULT_FOLDS: usize = 5;

/// Feature-extraction settings fixed before grid search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSettings {
    pub encoder: EncoderConfig,
    pub vocab_max: usize,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            vocab_max: DEFAULT_VOCAB_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridPoint {
    pub forest: ForestParams,
    pub toggles: FeatureToggles,
}

/// Cartesian grid description, as read from a `--grid` JSON file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_leaf: Vec<usize>,
    #[serde(default = "default_split_features")]
    pub features_per_split: Vec<Option<usize>>,
    #[serde(default = "default_true")]
    pub include_tld: Vec<bool>,
    #[serde(default = "default_true")]
    pub include_tfidf: Vec<bool>,
}

fn default_true() -> Vec<bool> {
    vec![true]
}

fn default_split_features() -> Vec<Option<usize>> {
    vec![None]
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_trees: vec![100, 300],
            max_depth: vec![Some(8), Some(16), None],
            min_samples_leaf: vec![1, 5],
            features_per_split: default_split_features(),
            include_tld: default_true(),
            include_tfidf: default_true(),
        }
    }
}

impl GridSpec {
    /// Expands to grid points in a fixed nesting order (toggles outermost,
    /// tree count innermost); every point shares `seed`.
    pub fn expand(&self, seed: u64) -> Vec<GridPoint> {
        let mut points = Vec::new();
        for &include_tld in &self.include_tld {
            for &include_tfidf in &self.include_tfidf {
                for &max_depth in &self.max_depth {
                    for &min_samples_leaf in &self.min_samples_leaf {
                        for &features_per_split in &self.features_per_split {
                            for &n_trees in &self.n_trees {
                                points.push(GridPoint {
                                    forest: ForestParams {
                                        n_trees,
                                        max_depth,
                                        min_samples_leaf,
                                        features_per_split,
                                        seed,
                                    },
                                    toggles: FeatureToggles {
                                        include_tld,
                                        include_tfidf,
                                    },
                                });
                            }
                        }
                    }
                }
            }
        }
        points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DqmModel<T> {
    pub settings: FeatureSettings,
    pub toggles: FeatureToggles,
    pub tfidf: TfidfModel<T>,
    pub forest: Forest<T>,
}

fn hashed_encoder(settings: &FeatureSettings) -> Result<HashedEncoder> {
    match settings.encoder {
        EncoderConfig::Hashed { dim } => HashedEncoder::new(dim),
        EncoderConfig::Precomputed { .. } => Err(Error::InvalidParameter(
            "precomputed encoders must be supplied explicitly".into(),
        )),
    }
}

/// Full-width features for a set of dialogs.
fn full_rows<T: Scalar>(
    rows: &[LabeledDialog],
    scores: &TldScoreMap<T>,
    tfidf: &TfidfModel<T>,
    encoder: &dyn TurnEncoder<T>,
) -> Result<Vec<LabeledRow<T>>> {
    rows.iter()
        .map(|r| {
            let f = crate::features::build_dialog_features(&r.dialog, scores, tfidf, encoder)?;
            Ok(LabeledRow::new(f.values, r.defect))
        })
        .collect()
}

fn project_rows<T: Scalar>(rows: &[LabeledRow<T>], columns: &[usize]) -> Vec<LabeledRow<T>> {
    rows.iter()
        .map(|r| LabeledRow::new(project(&r.features, columns), r.defect))
        .collect()
}

/// Result of [`select_and_train`].
#[derive(Debug, Clone)]
pub struct Selection<T: Scalar> {
    pub model: DqmModel<T>,
    pub cv: CvOutcome<GridPoint>,
    pub training_fingerprint: String,
}

impl<T: Scalar> DqmModel<T> {
    /// Fits TF-IDF on the training dialogs and a forest on their features.
    pub fn train(
        rows: &[LabeledDialog],
        scores: &TldScoreMap<T>,
        settings: FeatureSettings,
        point: &GridPoint,
    ) -> Result<Self> {
        let encoder = hashed_encoder(&settings)?;
        Self::train_with_encoder(rows, scores, settings, point, &encoder)
    }

    pub fn train_with_encoder(
        rows: &[LabeledDialog],
        scores: &TldScoreMap<T>,
        settings: FeatureSettings,
        point: &GridPoint,
        encoder: &dyn TurnEncoder<T>,
    ) -> Result<Self> {
        if encoder.text_dim() != settings.encoder.text_dim() {
            return Err(Error::DimensionMismatch {
                expected: settings.encoder.text_dim(),
                found: encoder.text_dim(),
            });
        }
        let texts: Vec<String> = rows.iter().map(|r| r.dialog.full_text()).collect();
        let tfidf = fit_tfidf(&texts, settings.vocab_max)?;
        let full = full_rows(rows, scores, &tfidf, encoder)?;
        let columns = point.toggles.columns(encoder.text_dim(), tfidf.len());
        let forest = train_forest(&project_rows(&full, &columns), &point.forest)?;
        Ok(Self {
            settings,
            toggles: point.toggles,
            tfidf,
            forest,
        })
    }

    pub fn columns(&self) -> Vec<usize> {
        self.toggles.columns(self.settings.encoder.text_dim(), self.tfidf.len())
    }

    pub fn predict_proba_with(&self, dialog: &Dialog, scores: &TldScoreMap<T>, encoder: &dyn TurnEncoder<T>) -> Result<T> {
        let full = crate::features::build_dialog_features(dialog, scores, &self.tfidf, encoder)?;
        self.forest.predict_proba(&project(&full.values, &self.columns()))
    }

    /// Defect probability using the bundled hashed encoder.
    pub fn predict_proba(&self, dialog: &Dialog, scores: &TldScoreMap<T>) -> Result<T> {
        let encoder = hashed_encoder(&self.settings)?;
        self.predict_proba_with(dialog, scores, &encoder)
    }

    pub fn predict_many(&self, dialogs: &[Dialog], scores: &TldScoreMap<T>) -> Result<Vec<T>> {
        let encoder = hashed_encoder(&self.settings)?;
        dialogs
            .iter()
            .map(|d| self.predict_proba_with(d, scores, &encoder))
            .collect()
    }

    /// Writes the bundle directory: one JSON file per component plus a
    /// manifest carrying the training fingerprint and component digests.
    pub fn save(&self, dir: &Path, manifest: &BundleManifest) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut digests = Vec::new();
        let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
            fs::write(dir.join(name), &bytes)?;
            digests.push((name.to_string(), hex::encode(Sha256::digest(&bytes))));
            Ok(())
        };
        put("forest.json", serde_json::to_vec(&self.forest)?)?;
        put("tfidf.json", serde_json::to_vec_pretty(&self.tfidf)?)?;
        put("encoder.json", serde_json::to_vec_pretty(&self.settings.encoder)?)?;
        put(
            "params.json",
            serde_json::to_vec_pretty(&BundleParams {
                vocab_max: self.settings.vocab_max,
                toggles: self.toggles,
                forest: self.forest.params.clone(),
            })?,
        )?;
        let mut manifest = manifest.clone();
        manifest.files = digests;
        manifest.feature_dimension = self.forest.feature_dimension;
        fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, BundleManifest)> {
        let read = |name: &str| fs::read(dir.join(name));
        let manifest: BundleManifest = serde_json::from_slice(&read("manifest.json")?)?;
        if manifest.format != BUNDLE_FORMAT {
            return Err(Error::InvalidParameter(format!(
                "unsupported bundle format {:?}",
                manifest.format
            )));
        }
        for (name, digest) in &manifest.files {
            if hex::encode(Sha256::digest(read(name)?)) != *digest {
                return Err(Error::InvalidParameter(format!("bundle file {name} does not match manifest")));
            }
        }
        let forest: Forest<T> = serde_json::from_slice(&read("forest.json")?)?;
        let tfidf: TfidfModel<T> = serde_json::from_slice(&read("tfidf.json")?)?;
        tfidf.validate()?;
        let encoder: EncoderConfig = serde_json::from_slice(&read("encoder.json")?)?;
        let params: BundleParams = serde_json::from_slice(&read("params.json")?)?;
        let model = Self {
            settings: FeatureSettings {
                encoder,
                vocab_max: params.vocab_max,
            },
            toggles: params.toggles,
            tfidf,
            forest,
        };
        if model.columns().len() != model.forest.feature_dimension {
            return Err(Error::DimensionMismatch {
                expected: model.columns().len(),
                found: model.forest.feature_dimension,
            });
        }
        Ok((model, manifest))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BundleParams {
    vocab_max: usize,
    toggles: FeatureToggles,
    forest: ForestParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: String,
    pub training_fingerprint: String,
    pub n_training_rows: usize,
    pub feature_dimension: usize,
    pub selected: Option<GridPoint>,
    pub cv_mean_f1: Vec<f64>,
    /// `(file name, sha256)` for every component file.
    pub files: Vec<(String, String)>,
}

impl BundleManifest {
    pub fn new(training_fingerprint: String, n_training_rows: usize) -> Self {
        Self {
            format: BUNDLE_FORMAT.to_string(),
            training_fingerprint,
            n_training_rows,
            feature_dimension: 0,
            selected: None,
            cv_mean_f1: Vec::new(),
            files: Vec::new(),
        }
    }
}

/// Cross-validates `grid` on the training rows and refits the best point
/// on all of them. Only `rows` is ever read; held-out data stays out.
pub fn select_and_train<T: Scalar>(
    rows: &[LabeledDialog],
    scores: &TldScoreMap<T>,
    settings: FeatureSettings,
    grid: &[GridPoint],
    folds: usize,
    seed: u64,
) -> Result<Selection<T>> {
    let encoder = hashed_encoder(&settings)?;
    let texts: Vec<String> = rows.iter().map(|r| r.dialog.full_text()).collect();
    let tfidf = fit_tfidf(&texts, settings.vocab_max)?;
    let full = full_rows(rows, scores, &tfidf, &encoder)?;
    let text_dim = settings.encoder.text_dim();
    let threshold = T::lit(crate::aggregate::DEFAULT_THRESHOLD);

    let cv = cross_validate_with(&full, grid, folds, seed, |point: &GridPoint, train, held| {
        let columns = point.toggles.columns(text_dim, tfidf.len());
        let forest = train_forest(&project_rows(train, &columns), &point.forest)?;
        held.iter()
            .map(|x| forest.predict(&project(x, &columns), threshold))
            .collect()
    })?;
    let columns = cv.best.toggles.columns(text_dim, tfidf.len());
    let forest = train_forest(&project_rows(&full, &columns), &cv.best.forest)?;
    Ok(Selection {
        model: DqmModel {
            settings,
            toggles: cv.best.toggles,
            tfidf,
            forest,
        },
        training_fingerprint: training_fingerprint(rows, scores)?,
        cv,
    })
}
