//! Dialog-level quality estimation for task-oriented dialogs.
//!
//! Turn-level defect (TLD) scores are aggregated by four fixed baselines or
//! fed, together with turn encodings and TF-IDF features, to a random-forest
//! dialog quality model (DQM). The numeric modules are generic over
//! [`Scalar`]; the `*F64` / `*F32` aliases below pin the common choices.

pub mod aggregate;
pub mod dataset;
pub mod dialog;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod forest;
pub mod metrics;
pub mod model;
pub mod questionnaire;
pub mod scalar;
pub mod synth;
pub mod tld;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type TldScoreMapF64 = tld::TldScoreMap<f64>;
pub type TldScoreMapF32 = tld::TldScoreMap<f32>;
pub type DialogScoreF64 = aggregate::DialogScore<f64>;
pub type TfidfModelF64 = features::TfidfModel<f64>;
pub type TfidfModelF32 = features::TfidfModel<f32>;
pub type DialogFeatureVectorF64 = features::DialogFeatureVector<f64>;
pub type LabeledRowF64 = forest::LabeledRow<f64>;
pub type ForestF64 = forest::Forest<f64>;
pub type ForestF32 = forest::Forest<f32>;
pub type ClassificationReportF64 = metrics::ClassificationReport<f64>;
pub type CorrelationReportF64 = metrics::CorrelationReport<f64>;
pub type DqmModelF64 = model::DqmModel<f64>;
pub type DqmModelF32 = model::DqmModel<f32>;
