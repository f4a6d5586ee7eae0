//! Minimum-norm interpolation in a reproducing kernel Hilbert space and the
//! dissimilarity `D(S_in, S_out)` that controls its out-of-sample loss.
//!
//! With anchors `z_1..z_N`, a model is `f = sum_j xi_j phi_{z_j}` and
//! `|f|^2 = xi' K xi`. The minimum-norm interpolant of a sample solves
//! `K alpha = y`. For a split `S = S_in + S_out` with combined Gram `K`,
//! in-rows `T_in` and out-rows `T_out`,
//!
//! ```text
//! D^2 = max { |T_out xi|^2 / m : xi' K xi = 1, T_in xi = 0 }
//! ```
//!
//! and the substitution `xi = K^{-1/2} eta` turns this into the top
//! eigenvalue of `H = Psi' K^{-1/2} T_out' T_out K^{-1/2} Psi` where the
//! columns of `Psi` span `ker(T_in K^{-1/2})`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Point, SplitPair, Task};
use crate::error::{Error, Result};
use crate::kernel::{cross_vector, gram_matrix, KernelSpec};
use crate::numerics::linalg::{
    inv_sqrt_from_eig, nullspace, sym_eig, Cholesky, DEFAULT_INV_SQRT_FLOOR, DEFAULT_RANK_TOL,
};

/// Absolute slack used by [`theorem1_report`] when the caller has none.
pub const DEFAULT_BOUND_TOL: f64 = 1e-7;

/// Interpolation tolerance for a sample: `1e-7 * (1 + max |y|)`.
pub fn interp_tol(s: &Dataset) -> f64 {
    let ymax = s.examples().iter().map(|e| e.y.abs()).fold(0.0, f64::max);
    1e-7 * (1.0 + ymax)
}

/// A kernel expansion `f = sum_j coeffs_j phi_{anchors_j}`.
#[derive(Clone, Debug)]
pub struct Interpolator {
    pub anchors: Vec<Point>,
    pub coeffs: DVector<f64>,
    pub kernel: KernelSpec,
    /// `coeffs' K coeffs`.
    pub norm_sq: f64,
    /// Diagonal shift used when fitting; nonzero models are not exact
    /// interpolants.
    pub jitter: f64,
}

impl Interpolator {
    pub fn from_coefficients(anchors: Vec<Point>, coeffs: DVector<f64>, kernel: KernelSpec) -> Result<Self> {
        if anchors.len() != coeffs.len() {
            return Err(Error::DimensionMismatch {
                expected: anchors.len(),
                found: coeffs.len(),
            });
        }
        let k = gram_matrix(&kernel, &anchors, &anchors)?;
        let norm_sq = quad_form(&k, &coeffs).max(0.0);
        Ok(Interpolator {
            anchors,
            coeffs,
            kernel,
            norm_sq,
            jitter: 0.0,
        })
    }

    pub fn predict(&self, x: &Point) -> Result<f64> {
        Ok(cross_vector(&self.kernel, &self.anchors, x)?.dot(&self.coeffs))
    }

    pub fn predict_many(&self, xs: &[Point]) -> Result<DVector<f64>> {
        let t = gram_matrix(&self.kernel, xs, &self.anchors)?;
        Ok(t * &self.coeffs)
    }

    /// True when no jitter was used, so the model may enter equality checks.
    pub fn is_exact(&self) -> bool {
        self.jitter == 0.0
    }

    pub fn recompute_norm_sq(&self) -> Result<f64> {
        let k = gram_matrix(&self.kernel, &self.anchors, &self.anchors)?;
        Ok(quad_form(&k, &self.coeffs).max(0.0))
    }

    /// Coefficients of the same function over a larger anchor list that
    /// starts with this model's anchors.
    fn padded_coeffs(&self, total: usize) -> DVector<f64> {
        let mut c = DVector::zeros(total);
        c.rows_mut(0, self.coeffs.len()).copy_from(&self.coeffs);
        c
    }
}

fn quad_form(k: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (k * v).dot(v)
}

fn near_singular(k: &DMatrix<f64>) -> Error {
    match sym_eig(k) {
        Ok(eig) => Error::NearSingularKernel {
            eigenvalue: eig.min(),
            floor: DEFAULT_INV_SQRT_FLOOR * eig.max().max(f64::MIN_POSITIVE),
        },
        Err(e) => e,
    }
}

/// Minimum-norm interpolant of a regression sample.
///
/// A Gram matrix that does not factor, or an exact (`jitter = 0`) solve that
/// misses the labels by more than [`interp_tol`], is reported as
/// [`Error::NearSingularKernel`].
pub fn fit_min_norm(s: &Dataset, k: &KernelSpec, jitter: f64) -> Result<Interpolator> {
    if s.task() != Task::Regression {
        return Err(Error::invalid("minimum-norm interpolation needs a regression dataset"));
    }
    k.validate()?;
    let anchors = s.points();
    let y = s.labels();
    let gram = gram_matrix(k, &anchors, &anchors)?;
    let chol = match Cholesky::new(&gram, jitter) {
        Ok(c) => c,
        Err(Error::SingularMatrix { .. }) => return Err(near_singular(&gram)),
        Err(e) => return Err(e),
    };
    let alpha = chol.solve(&y);
    let fitted = &gram * &alpha;
    if jitter == 0.0 {
        let worst = (&fitted - &y).amax();
        if !(worst <= interp_tol(s)) {
            return Err(near_singular(&gram));
        }
    }
    let norm_sq = fitted.dot(&alpha).max(0.0);
    Ok(Interpolator {
        anchors,
        coeffs: alpha,
        kernel: *k,
        norm_sq,
        jitter,
    })
}

/// Mean squared residual `(1/n) sum (y_i - f(x_i))^2`.
pub fn evaluate_loss(s: &Dataset, f: &Interpolator) -> Result<f64> {
    let pred = f.predict_many(&s.points())?;
    let r = s.labels() - pred;
    Ok(r.norm_squared() / s.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DissimilarityMethod {
    Eigen,
    SingletonClosedForm,
    CrudeRadius,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DissimilarityResult {
    pub d_sq: f64,
    pub method: DissimilarityMethod,
    /// Maximizing coefficients over `s_in` points followed by `s_out`
    /// points, normalized so that `xi' K xi = 1`.
    pub witness: Option<Vec<f64>>,
    /// Dimension of the feasible subspace.
    pub r_dim: usize,
}

impl DissimilarityResult {
    pub fn witness_vector(&self) -> Option<DVector<f64>> {
        self.witness.as_ref().map(|w| DVector::from_column_slice(w))
    }
}

fn combined_points(s_in: &Dataset, s_out: &Dataset) -> Result<Vec<Point>> {
    if s_in.dim() != s_out.dim() {
        return Err(Error::DimensionMismatch {
            expected: s_in.dim(),
            found: s_out.dim(),
        });
    }
    let mut pts = s_in.points();
    pts.extend(s_out.points());
    Ok(pts)
}

/// `D^2(S_in, S_out)` as the top eigenvalue of the whitened out-sample
/// operator restricted to the feasible subspace. Labels are ignored.
pub fn dissimilarity_eig(s_in: &Dataset, s_out: &Dataset, k: &KernelSpec) -> Result<DissimilarityResult> {
    k.validate()?;
    let pts = combined_points(s_in, s_out)?;
    let (n, m) = (s_in.len(), s_out.len());
    let gram = gram_matrix(k, &pts, &pts)?;
    let eig = sym_eig(&gram)?;
    let floor = DEFAULT_INV_SQRT_FLOOR * eig.max().max(f64::MIN_POSITIVE);
    let k_inv_sqrt = inv_sqrt_from_eig(&eig, floor)?;

    let t_in = gram.rows(0, n).into_owned();
    let t_out = gram.rows(n, m).into_owned();
    let psi = nullspace(&(&t_in * &k_inv_sqrt), DEFAULT_RANK_TOL)?;
    let r_dim = psi.dim();
    if r_dim == 0 {
        return Ok(DissimilarityResult {
            d_sq: 0.0,
            method: DissimilarityMethod::Eigen,
            witness: None,
            r_dim,
        });
    }
    let whitened = &k_inv_sqrt * &psi.basis;
    let c = &t_out * &whitened;
    let h = c.transpose() * &c;
    let h_eig = sym_eig(&((&h + h.transpose()) * 0.5))?;
    let d_sq = (h_eig.max() / m as f64).max(0.0);

    let mut xi = &whitened * h_eig.eigenvectors.column(0);
    let scale = quad_form(&gram, &xi).sqrt();
    if scale > 0.0 {
        xi /= scale;
    }
    Ok(DissimilarityResult {
        d_sq,
        method: DissimilarityMethod::Eigen,
        witness: Some(xi.as_slice().to_vec()),
        r_dim,
    })
}

/// Squared power function `K(x,x) - k_x' K_in^{-1} k_x`: the singleton
/// `D^2(S_in, {x})`.
pub fn dissimilarity_singleton(s_in: &Dataset, x_out: &Point, k: &KernelSpec) -> Result<DissimilarityResult> {
    k.validate()?;
    if x_out.dim() != s_in.dim() {
        return Err(Error::DimensionMismatch {
            expected: s_in.dim(),
            found: x_out.dim(),
        });
    }
    let pts = s_in.points();
    let gram = gram_matrix(k, &pts, &pts)?;
    let chol = match Cholesky::new(&gram, 0.0) {
        Ok(c) => c,
        Err(Error::SingularMatrix { .. }) => return Err(near_singular(&gram)),
        Err(e) => return Err(e),
    };
    let kx = cross_vector(k, &pts, x_out)?;
    let proj = chol.solve(&kx).dot(&kx);
    let d_sq = (k.apply(x_out, x_out) - proj).max(0.0);
    Ok(DissimilarityResult {
        d_sq,
        method: DissimilarityMethod::SingletonClosedForm,
        witness: None,
        r_dim: 1,
    })
}

/// Upper bound `D^2 <= R^2 = max_{x in S_out} K(x,x)`.
pub fn dissimilarity_crude(s_out: &Dataset, k: &KernelSpec) -> Result<DissimilarityResult> {
    k.validate()?;
    let d_sq = s_out
        .examples()
        .iter()
        .map(|e| k.apply(&e.x, &e.x))
        .fold(0.0, f64::max);
    Ok(DissimilarityResult {
        d_sq,
        method: DissimilarityMethod::CrudeRadius,
        witness: None,
        r_dim: s_out.len(),
    })
}

/// Both interpolation bounds for one split:
///
/// ```text
/// L(S_out, f_in) <= D^2 |f_S - f_in|^2        (slack_6)
/// L(S_out, f_in) <= D^2 (|f_S|^2 - |f_in|^2)  (slack_7)
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterpBoundReport {
    pub lhs: f64,
    pub d_sq: f64,
    pub norm_sq_in: f64,
    pub norm_sq_full: f64,
    pub diff_norm_sq: f64,
    pub rhs_diff_norm: f64,
    pub rhs_norm_gap: f64,
    pub slack_6: f64,
    pub slack_7: f64,
    pub tol: f64,
    pub pass: bool,
}

struct SplitFits {
    f_in: Interpolator,
    f_full: Interpolator,
    gram: DMatrix<f64>,
    dissim: DissimilarityResult,
}

fn fit_split(pair: &SplitPair, k: &KernelSpec) -> Result<SplitFits> {
    let f_in = fit_min_norm(&pair.s_in, k, 0.0)?;
    let full = pair.combined();
    let f_full = fit_min_norm(&full, k, 0.0)?;
    let dissim = dissimilarity_eig(&pair.s_in, &pair.s_out, k)?;
    let pts = full.points();
    let gram = gram_matrix(k, &pts, &pts)?;
    Ok(SplitFits {
        f_in,
        f_full,
        gram,
        dissim,
    })
}

pub fn theorem1_report(pair: &SplitPair, k: &KernelSpec, tol: f64) -> Result<InterpBoundReport> {
    let fits = fit_split(pair, k)?;
    let n_total = fits.gram.nrows();
    let diff = &fits.f_full.coeffs - fits.f_in.padded_coeffs(n_total);
    let diff_norm_sq = quad_form(&fits.gram, &diff).max(0.0);
    let lhs = evaluate_loss(&pair.s_out, &fits.f_in)?;
    let d_sq = fits.dissim.d_sq;
    let rhs_diff_norm = d_sq * diff_norm_sq;
    let rhs_norm_gap = d_sq * (fits.f_full.norm_sq - fits.f_in.norm_sq);
    let slack_6 = rhs_diff_norm - lhs;
    let slack_7 = rhs_norm_gap - lhs;
    Ok(InterpBoundReport {
        lhs,
        d_sq,
        norm_sq_in: fits.f_in.norm_sq,
        norm_sq_full: fits.f_full.norm_sq,
        diff_norm_sq,
        rhs_diff_norm,
        rhs_norm_gap,
        slack_6,
        slack_7,
        tol,
        pass: slack_6 >= -tol && slack_7 >= -tol,
    })
}

/// A model that interpolates `S_in`, has norm `r`, and whose out-sample
/// loss is at least `D^2 |f_tilde - f_in|^2`.
#[derive(Clone, Debug)]
pub struct SharpnessWitness {
    /// Expansion over `s_in` points followed by `s_out` points.
    pub f_tilde: Interpolator,
    /// `L(S_out, f_tilde)`.
    pub achieved: f64,
    /// `D^2 |f_tilde - f_in|^2`.
    pub certified_rhs: f64,
    /// `L(S_in, f_tilde)`.
    pub in_loss: f64,
    pub d_sq: f64,
}

/// Builds `f_tilde = f_in + c g` with `c^2 = r^2 - |f_in|^2` and `g` the
/// unit-norm maximizing direction of `D`, signed so that `c g` does not
/// cancel the residual of `f_in` on `S_out`. Since `g` vanishes on `S_in` it
/// is orthogonal to `f_in`, so `|f_tilde| = r` and
/// `L(S_out, f_tilde) >= L(S_out, f_in) + c^2 D^2`. The exact eigenvector
/// makes the bound hold without the `eps` slack, which is kept only as the
/// advertised margin.
pub fn sharpness_witness(pair: &SplitPair, k: &KernelSpec, r: f64, eps: f64) -> Result<SharpnessWitness> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("eps {eps} must be > 0")));
    }
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::invalid(format!("radius {r} must be finite and >= 0")));
    }
    let f_in = fit_min_norm(&pair.s_in, k, 0.0)?;
    let norm_in = f_in.norm_sq.sqrt();
    if r < norm_in * (1.0 - 1e-12) {
        return Err(Error::invalid(format!(
            "radius {r} is below the in-sample interpolant norm {norm_in}"
        )));
    }
    let c = (r * r - f_in.norm_sq).max(0.0).sqrt();
    let dissim = dissimilarity_eig(&pair.s_in, &pair.s_out, k)?;
    let anchors = combined_points(&pair.s_in, &pair.s_out)?;
    let n_total = anchors.len();
    let base = f_in.padded_coeffs(n_total);

    let coeffs = match dissim.witness_vector() {
        Some(xi) if c > 0.0 && dissim.d_sq > 0.0 => {
            let out_pts = pair.s_out.points();
            let residual = pair.s_out.labels() - f_in.predict_many(&out_pts)?;
            let t_out = gram_matrix(k, &out_pts, &anchors)?;
            let g_out = &t_out * &xi;
            let sign = if residual.dot(&g_out) > 0.0 { -1.0 } else { 1.0 };
            base + xi * (sign * c)
        }
        _ => base,
    };
    let gram = gram_matrix(k, &anchors, &anchors)?;
    let diff = &coeffs - f_in.padded_coeffs(n_total);
    let diff_norm_sq = quad_form(&gram, &diff).max(0.0);
    let norm_sq = quad_form(&gram, &coeffs).max(0.0);
    let f_tilde = Interpolator {
        anchors,
        coeffs,
        kernel: *k,
        norm_sq,
        jitter: 0.0,
    };
    Ok(SharpnessWitness {
        achieved: evaluate_loss(&pair.s_out, &f_tilde)?,
        in_loss: evaluate_loss(&pair.s_in, &f_tilde)?,
        certified_rhs: dissim.d_sq * diff_norm_sq,
        d_sq: dissim.d_sq,
        f_tilde,
    })
}
