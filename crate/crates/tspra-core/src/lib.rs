//! TSPRA: an HDP-based regression model of online reviews that jointly
//! infers product aspects (topics), per-word sentiment and per-user aspect
//! preference from review text and star ratings.
//!
//! The crate covers the full pipeline:
//!
//! - [`corpus`]: ingestion of raw JSON-Lines reviews, text normalization,
//!   vocabulary construction and author-stratified train/test splitting
//! - [`model`]: hyperparameters, latent state, count tables and parameter
//!   estimation
//! - [`trainer`]: collapsed Gibbs sampling over the Chinese Restaurant
//!   Franchise representation
//! - [`predictor`]: held-out rating prediction with frozen parameters
//! - [`generator`]: synthetic corpora with known ground truth
//! - [`analysis`]: word polarity, aspect preference/sentiment and critical
//!   aspect detection
//! - [`evaluation`]: error metrics and parameter sweeps

pub mod analysis;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod generator;
pub mod model;
pub mod predictor;
pub mod sampling;
pub mod trainer;

pub use analysis::{AnalysisReport, AspectSummary, PolarityTable};
pub use corpus::{Corpus, RawReview, Review, SplitParams, Vocabulary};
pub use error::Error;
pub use evaluation::MetricReport;
pub use generator::{GenSpec, SyntheticCorpus};
pub use model::{
    Assignments, CountTables, HyperParams, ModelState, Preference, Sentiment, TrainedModel,
};
pub use predictor::{PredictConfig, Prediction};
pub use trainer::TrainConfig;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
