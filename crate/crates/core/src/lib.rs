//! Structured sparse linear classifiers for grid-structured functional
//! connectomes.
//!
//! The crate trains margin-based linear classifiers regularized by the
//! fused Lasso or GraphNet penalty over the 6-D "connectome space" (pairs of
//! lattice nodes), plus Lasso / Elastic-net baselines. All four are solved by
//! ADMM with closed-form inner updates:
//!
//! * the `w` step uses the matrix inversion lemma so only an `n x n` system is
//!   ever factored ([`solver::InversionLemma`]);
//! * the loss and `l1` steps are scalar proximal maps ([`prox`]);
//! * the difference-variable step is a diagonal (masked) shrinkage;
//! * the augmented-weight step inverts a block-circulant Laplacian with a 6-D
//!   FFT ([`spectral`]), made possible by zero-padding the connectome onto the
//!   full lattice ([`connectome::AugmentationMap`]).
//!
//! [`simulate`] generates synthetic control/patient cohorts with a planted
//! anomalous edge cluster and [`eval`] provides cross-validated grid search,
//! edge-recovery ROC and the usual summaries.

pub mod cli;
pub mod connectome;
pub mod error;
pub mod eval;
pub mod prox;
pub mod simulate;
pub mod solver;
pub mod spectral;

pub use connectome::{AugmentationMap, ConnectomeVector, GridParcellation};
pub use error::{Error, Result};
pub use prox::LossKind;
pub use solver::{Model, Regularizer, SolverConfig, TrainingSet};
pub use spectral::SpectralKernel;
