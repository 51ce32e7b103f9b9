//! Risk profiling of arriving passengers for biosecurity non-compliance.
//!
//! The crate covers the whole comparison pipeline: ingest and encoding
//! ([`schema`]), synthetic data with a known risk surface ([`synth`]), tree
//! ensembles ([`trees`]), penalized additive logistic regression and a small
//! neural network ([`smooth`]), Bayesian shrinkage regressions sampled by
//! HMC ([`bayes`]), repeated cross-validation with targeted-screening
//! efficiency ([`eval`]) and model interpretation ([`interpret`]).

pub mod bayes;
pub mod error;
pub mod eval;
pub mod interpret;
pub mod math;
pub mod models;
pub mod optim;
pub mod rng;
pub mod schema;
pub mod smooth;
pub mod synth;
pub mod trees;

pub use error::{Error, Result};
pub use synth::{default_study_config, generate, GeneratorConfig, TruthManifest};
pub use schema::{Dataset, DesignMatrix, Encoder, FeatureStage, PassengerRecord, PassengerTrait};
pub use models::{fit_model, FittedModel, Hyper, ModelId, ModelSettings};
pub use eval::{EfficiencyCurve, FoldOutcome, StudyConfig, TaskKey};
pub use interpret::{ImportanceTable, PdMethod, PdpGrid};
