//! Confidence estimation and calibration evaluation for LLM answers to
//! questions with one or several correct answers.

pub mod clustering;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod judge;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod pipeline;
pub mod simulator;

pub use error::ModelError;
pub use judge::{Judge, JudgeError, JudgeSource, JudgeVerdict, RuleJudge};
pub use model::*;
