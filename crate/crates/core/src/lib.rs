//! Fairness auditing: scaled bias metrics, their max ensemble, an
//! unsupervised bias-vector estimator, re-weighting mitigation and the
//! guidelines that compare the two estimators.

pub mod benn;
pub mod config;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod evaluation;
pub mod metrics;
pub mod mitigation;
pub mod model;
pub mod pipeline;

pub use benn::{BennEstimate, GeneratorNet, LossConfig, TrainConfig};
pub use config::RunConfig;
pub use dataset::{Dataset, DatasetSchema, FoldPlan};
pub use ensemble::EnsembleEstimate;
pub use error::{Error, Result};
pub use evaluation::{BiasReport, GuidelineConfig, GuidelineReport};
pub use metrics::{Convention, MetricEstimate, MetricId, MetricOptions};
pub use mitigation::{MitigationConfig, MitigationLog};
pub use model::{DecisionTree, Predictor};
