//! Deterministic generalization bounds.
//!
//! A model fit on an in-sample `S_in` is judged on an out-sample `S_out`
//! through quantities that depend only on the geometry of the two samples:
//!
//! - [`interpolation`]: minimum-norm kernel interpolation, the
//!   dissimilarity `D^2(S_in, S_out)` and the bounds it certifies.
//! - [`maxmargin`]: the hard-margin SVM dual, strong duality, the duality
//!   sandwich, the batch margin bound and the leave-one-out bound.
//! - [`parametric`]: quadratic growth, metric regularity and localization
//!   for finite-dimensional least-squares evaluations.
//! - [`experiments`]: seeded Monte Carlo runs and batch sweeps over random
//!   instances, with JSON and CSV reports.
//!
//! [`data`], [`kernel`] and [`numerics`] hold the shared datasets, kernels
//! and dense linear algebra.

pub mod data;
pub mod error;
pub mod experiments;
pub mod interpolation;
pub mod kernel;
pub mod maxmargin;
pub mod numerics;
pub mod parametric;

pub use data::{load_csv, read_csv, split_by_indices, write_csv, Dataset, LabeledExample, Point, SplitPair, Task};
pub use error::{Error, Result};
pub use kernel::{gram, gram_matrix, kernel_eval, GramMatrix, KernelSpec};
