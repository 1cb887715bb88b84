//! Tri-factorization `Y ≈ X Θ A` with a known covariate matrix `A`.
//!
//! Used two ways: as a regression model where `Y` holds observed curves and
//! `A` encodes groups, and as a classifier where `Y` is a label matrix and
//! `A` is built from sample features (directly or through a Gaussian
//! kernel). The basis `X` is column-stochastic, so column-normalized
//! coefficients `Θ A` read as class-membership probabilities.

pub mod classify;
pub mod dataset;
pub mod error;
pub mod kernel;
pub mod kmeans;
pub mod matrix;
pub mod model_file;
pub mod modelsel;
pub mod trinmf;

pub use classify::{ConfusionMatrix, LabelEncoding, ProbPrediction};
pub use dataset::{Dataset, LoadOptions, ScalingPair};
pub use error::{Error, Result};
pub use kernel::{KernelDesign, KernelKind};
pub use matrix::NonNegMatrix;
pub use model_file::{ModelFile, Mode};
pub use modelsel::{CvCriterion, CvResult, DesignCandidate, SplitSpec};
pub use trinmf::{FitReport, InitMode, TriNmfConfig, TriNmfModel};
