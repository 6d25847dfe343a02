//! Quantitative judges: generalized linear models that map a frozen LLM
//! judge's rationale embedding and score to calibrated predictions of human
//! scores.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`, which the file formats and the CLI use.

pub mod dataset;
pub mod error;
pub mod judges;
pub mod metrics;
pub mod pipeline;
pub mod scalar;
pub mod seed;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use judges::ModelKind;
pub use scalar::Scalar;

pub type Dataset = dataset::Dataset<f64>;
pub type DatasetHeader = dataset::DatasetHeader<f64>;
pub type AbsoluteExample = dataset::AbsoluteExample<f64>;
pub type PairwiseExample = dataset::PairwiseExample<f64>;
pub type RankingExample = dataset::RankingExample<f64>;
pub type JudgeModel = judges::JudgeModel<f64>;
pub type Design = judges::Design<f64>;
pub type ProbClamp = judges::ProbClamp<f64>;
pub type SgdConfig = training::SgdConfig<f64>;
pub type TrainOptions = pipeline::TrainOptions<f64>;
pub type EvalOptions = pipeline::EvalOptions<f64>;

pub type Dataset32 = dataset::Dataset<f32>;
pub type JudgeModel32 = judges::JudgeModel<f32>;
