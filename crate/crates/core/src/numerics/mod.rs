//! Dense symmetric linear algebra, the ball-constrained quadratic solver,
//! and seeded randomness.
//!
//! Symmetric eigendecompositions come from `nalgebra` and singular-value
//! decompositions from `faer`. The Cholesky factorization, numerical-rank
//! cut, whitening and the trust-region solver are implemented here so that
//! their failure modes (pivot index, floored eigenvalue) stay explicit.

pub mod linalg;
pub mod rng;
pub mod trust_region;

pub use linalg::{
    inv_sqrt_psd, inv_sqrt_psd_default, lambda_max, lstsq_min_norm, nnls, nullspace, singular_values, solve_spd,
    sym_eig, Cholesky, NullspaceBasis, SymEig, DEFAULT_INV_SQRT_FLOOR, DEFAULT_RANK_TOL,
};
pub use rng::{RngStream, Seed};
pub use trust_region::{trust_region_max, TrustRegionMax};
