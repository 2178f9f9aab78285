//! Fraud-detection toolkit: robust preprocessing, SMOTE and VAE-GAN
//! oversampling, a prototype-attention classifier that can shape a latent
//! space, baseline heads, and evaluation utilities.

pub mod cpac;
pub mod data;
pub mod error;
pub mod gradsuite;
pub mod heads;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod smote;
pub mod vaegan;

pub use cpac::{CpacConfig, CpacParams, CpacTrainConfig, Explanation};
pub use data::{Dataset, NormalizationParams, SplitIndices, SyntheticSpec};
pub use error::{Error, Result};
pub use heads::{Classifier, ClassifierKind, LatentHead, LogRegParams, MlpHead, MlpVariant};
pub use metrics::{Confusion, MetricsReport, ThresholdAgent};
pub use nn::{Checkpoint, ClassLoss, FocalConfig, Matrix};
pub use pipeline::{ExperimentConfig, Method, RunReport};
pub use smote::SmoteConfig;
pub use vaegan::{GenerativeScope, JointConfig, VaeGan, VaeGanConfig};
