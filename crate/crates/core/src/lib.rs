//! Regularized sparse optimal discriminant clustering.
//!
//! Clusters subjects by jointly learning a sparse projection `B` of the
//! variables and an orthonormal, mean-zero scoring matrix `Y`, with a fusion
//! penalty that pulls the scores of neighbouring subjects together. Clusters
//! are read off `Xc B` with k-means.

pub mod datagen;
pub mod error;
pub mod fusion;
pub mod group_lasso;
pub mod kmeans;
pub mod linalg;
pub mod metrics;
pub mod problem;
pub mod scoring;
pub mod seed;
pub mod selection;
pub mod solver;

pub use error::{Error, Result};
pub use fusion::{compute_weights, FusionGraph};
pub use linalg::{Matrix, Vector};
pub use metrics::Partition;
pub use problem::{BInit, Params, ProblemInstance, VMode};
pub use solver::{fit, fit_rsodc, fit_sodc, FitResult, FitStatus, Method};
