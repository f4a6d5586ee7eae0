//! Hard-margin support vector machines without intercept, trained in the
//! dual, and the margin bounds that follow from weak and strong duality.
//!
//! The primal is `min |f|^2 / 2` subject to `y_i f(x_i) >= 1`. With
//! `Q_ij = y_i y_j K(x_i, x_j)` the dual is
//!
//! ```text
//! max  sum(alpha) - alpha' Q alpha / 2   over alpha >= 0
//! ```
//!
//! and at the optimum `f_S = sum_i alpha_i y_i phi_{x_i}` with
//! `sum(alpha) = |f_S|^2`. Data that needs an offset must carry a constant
//! feature.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Point, SplitPair, Task};
use crate::error::{Error, Result};
use crate::kernel::{cross_vector, gram_matrix, KernelSpec};
use crate::numerics::linalg::{lambda_max, nnls, sym_eig, Cholesky};

pub const DEFAULT_KKT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100_000;
/// `sum(alpha)` beyond which the dual is declared unbounded.
pub const DEFAULT_ALPHA_CAP: f64 = 1e8;
/// Slack for the certified margin inequalities.
pub const DEFAULT_MARGIN_TOL: f64 = 1e-6;

const POLISH_EVERY: usize = 25;
/// Sweeps before falling back to the least-distance solve.
const LDP_AFTER: usize = 500;
/// Relative cut on the eigenvalues of `Q` when factoring it as `A'A`.
const LDP_EIG_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Largest admissible KKT violation.
    pub tol: f64,
    /// Maximum number of full coordinate sweeps.
    pub max_iter: usize,
    pub alpha_cap: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: DEFAULT_KKT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            alpha_cap: DEFAULT_ALPHA_CAP,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SvmModel {
    pub anchors: Vec<Point>,
    pub labels: DVector<f64>,
    pub alpha: DVector<f64>,
    pub kernel: KernelSpec,
    /// `alpha' Q alpha = |f_S|^2`.
    pub norm_sq: f64,
    /// Dual objective.
    pub objective: f64,
    pub converged: bool,
    /// Coordinate sweeps used.
    pub iterations: usize,
    pub kkt_violation: f64,
}

impl SvmModel {
    pub fn decision(&self, x: &Point) -> Result<f64> {
        let kx = cross_vector(&self.kernel, &self.anchors, x)?;
        Ok(kx.iter().zip(self.alpha.iter().zip(self.labels.iter())).map(|(k, (a, y))| k * a * y).sum())
    }

    pub fn decision_many(&self, xs: &[Point]) -> Result<DVector<f64>> {
        let t = gram_matrix(&self.kernel, xs, &self.anchors)?;
        Ok(t * self.alpha.component_mul(&self.labels))
    }

    /// `y_i f(x_i)` over a dataset.
    pub fn margins(&self, s: &Dataset) -> Result<DVector<f64>> {
        Ok(self.decision_many(&s.points())?.component_mul(&s.labels()))
    }

    pub fn dual_sum(&self) -> f64 {
        self.alpha.sum()
    }
}

struct DualSolution {
    alpha: DVector<f64>,
    iterations: usize,
    kkt: f64,
}

/// Largest of the margin violations `max(g_i, 0)` and, on the support,
/// `|g_i| max(1, alpha_i)`, where `g = 1 - Q alpha`. Below `tol` this
/// bounds both stationarity and complementary slackness `alpha_i |g_i|`.
fn kkt_violation(alpha: &DVector<f64>, grad: &DVector<f64>) -> f64 {
    alpha
        .iter()
        .zip(grad.iter())
        .map(|(&a, &g)| if a > 0.0 { g.abs() * a.max(1.0) } else { g.max(0.0) })
        .fold(0.0, f64::max)
}

fn gradient(q: &DMatrix<f64>, alpha: &DVector<f64>) -> DVector<f64> {
    DVector::from_element(alpha.len(), 1.0) - q * alpha
}

/// Solves `Q_AA z = 1` on the current support; `None` unless the result is
/// strictly positive.
fn polish(q: &DMatrix<f64>, alpha: &DVector<f64>) -> Option<DVector<f64>> {
    let active: Vec<usize> = (0..alpha.len()).filter(|&i| alpha[i] > 0.0).collect();
    if active.is_empty() {
        return None;
    }
    let qaa = q.select_rows(&active).select_columns(&active);
    let z = Cholesky::new(&qaa, 0.0).ok()?.solve(&DVector::from_element(active.len(), 1.0));
    if z.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let mut out = DVector::zeros(alpha.len());
    for (k, &i) in active.iter().enumerate() {
        out[i] = z[k];
    }
    Some(out)
}

/// The dual through its least-distance form. With `Q = A'A`, the primal is
/// `min |w|^2 / 2` subject to `A'w >= 1`, and for `u` solving
/// `min |[A; 1'] u - e_last|` over `u >= 0` the multipliers are
/// `u / (1 - sum u)`.
fn least_distance_dual(q: &DMatrix<f64>) -> Option<DVector<f64>> {
    let eig = sym_eig(q).ok()?;
    let floor = LDP_EIG_FLOOR * eig.max();
    let keep: Vec<usize> = (0..q.nrows()).filter(|&k| eig.eigenvalues[k] > floor).collect();
    let r = keep.len();
    let n = q.nrows();
    let mut e = DMatrix::zeros(r + 1, n);
    for (row, &k) in keep.iter().enumerate() {
        let scale = eig.eigenvalues[k].sqrt();
        for j in 0..n {
            e[(row, j)] = scale * eig.eigenvectors[(j, k)];
        }
    }
    e.row_mut(r).fill(1.0);
    let mut f = DVector::zeros(r + 1);
    f[r] = 1.0;
    let u = nnls(&e, &f).ok()?;
    let denom = 1.0 - u.sum();
    if !(denom > 0.0) {
        return None;
    }
    Some(u / denom)
}

/// Keeps whichever of `alpha` and `candidate` has the smaller violation.
fn keep_better(q: &DMatrix<f64>, state: &mut (DVector<f64>, DVector<f64>, f64), candidate: DVector<f64>) {
    let grad = gradient(q, &candidate);
    let kkt = kkt_violation(&candidate, &grad);
    if kkt < state.2 {
        *state = (candidate, grad, kkt);
    }
}

/// Cyclic coordinate ascent with exact clipped 1-D steps, followed after
/// every sweep by the exact step along `alpha` itself (which enforces
/// `sum(alpha) = alpha' Q alpha`) and periodically by a Newton step on the
/// current support. A converged point gets one more Newton step. When the
/// sweeps stall, the least-distance form is solved by nonnegative least
/// squares and its solution replaces the iterate if it is better.
fn solve_dual(q: &DMatrix<f64>, warm: Option<DVector<f64>>, opts: &SolverOptions) -> Result<DualSolution> {
    let n = q.nrows();
    if (0..n).any(|i| !(q[(i, i)] > 0.0)) {
        // K(x_i, x_i) = 0 forces f(x_i) = 0, so no unit margin exists.
        return Err(Error::InfeasiblePrimal { cap: opts.alpha_cap });
    }
    let mut alpha = warm.unwrap_or_else(|| DVector::zeros(n));
    alpha.apply(|a| *a = a.max(0.0));
    let grad = gradient(q, &alpha);
    let kkt = kkt_violation(&alpha, &grad);
    let mut state = (alpha, grad, kkt);
    let done = |state: (DVector<f64>, DVector<f64>, f64), iterations: usize| -> Result<DualSolution> {
        let mut state = state;
        if let Some(candidate) = polish(q, &state.0) {
            keep_better(q, &mut state, candidate);
        }
        Ok(DualSolution {
            alpha: state.0,
            iterations,
            kkt: state.2,
        })
    };
    for sweep in 1..=opts.max_iter {
        if state.2 <= opts.tol {
            return done(state, sweep - 1);
        }
        let (alpha, grad, _) = &mut state;
        for i in 0..n {
            let next = (alpha[i] + grad[i] / q[(i, i)]).max(0.0);
            let step = next - alpha[i];
            if step != 0.0 {
                alpha[i] = next;
                grad.axpy(-step, &q.column(i), 1.0);
            }
        }
        let total = alpha.sum();
        let curvature = (q * &*alpha).dot(alpha);
        if total > 0.0 {
            if !(curvature > 0.0) {
                return Err(Error::InfeasiblePrimal { cap: opts.alpha_cap });
            }
            *alpha *= total / curvature;
        }
        if alpha.sum() > opts.alpha_cap || !alpha.sum().is_finite() {
            return Err(Error::InfeasiblePrimal { cap: opts.alpha_cap });
        }
        *grad = gradient(q, alpha);
        state.2 = kkt_violation(&state.0, &state.1);
        if sweep % POLISH_EVERY == 0 && state.2 > opts.tol {
            if let Some(candidate) = polish(q, &state.0) {
                keep_better(q, &mut state, candidate);
            }
        }
        if sweep == LDP_AFTER && state.2 > opts.tol {
            if let Some(candidate) = least_distance_dual(q) {
                keep_better(q, &mut state, candidate);
            }
        }
    }
    if state.2 <= opts.tol {
        return done(state, opts.max_iter);
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        kkt_violation: state.2,
    })
}

fn signed_gram(k: &DMatrix<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| y[i] * y[j] * k[(i, j)])
}

fn check_classification(s: &Dataset) -> Result<()> {
    if s.task() != Task::Classification {
        return Err(Error::invalid("hard-margin training needs a classification dataset"));
    }
    Ok(())
}

fn model_from(s: &Dataset, k: &KernelSpec, q: &DMatrix<f64>, sol: DualSolution) -> SvmModel {
    let total = sol.alpha.sum();
    let norm_sq = (q * &sol.alpha).dot(&sol.alpha).max(0.0);
    SvmModel {
        anchors: s.points(),
        labels: s.labels(),
        objective: total - 0.5 * norm_sq,
        alpha: sol.alpha,
        kernel: *k,
        norm_sq,
        converged: true,
        iterations: sol.iterations,
        kkt_violation: sol.kkt,
    }
}

pub fn solve_hard_margin(s: &Dataset, k: &KernelSpec, tol: f64, max_iter: usize) -> Result<SvmModel> {
    solve_hard_margin_with(
        s,
        k,
        &SolverOptions {
            tol,
            max_iter,
            ..SolverOptions::default()
        },
    )
}

pub fn solve_hard_margin_with(s: &Dataset, k: &KernelSpec, opts: &SolverOptions) -> Result<SvmModel> {
    check_classification(s)?;
    k.validate()?;
    if !(opts.tol > 0.0) {
        return Err(Error::invalid(format!("tolerance {} must be > 0", opts.tol)));
    }
    let pts = s.points();
    let q = signed_gram(&gram_matrix(k, &pts, &pts)?, &s.labels());
    let sol = solve_dual(&q, None, opts)?;
    Ok(model_from(s, k, &q, sol))
}

/// The three members of the duality sandwich for one split:
///
/// ```text
/// |sum_out beta_i y_i phi_i|^2 / 2  >=  (|f_S|^2 - |f_in|^2) / 2
///     >=  -|sum_out gamma_i y_i phi_i|^2 / 2 + sum_out gamma_i (1 - y_i f_in(x_i))
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SandwichReport {
    pub lhs: f64,
    pub middle: f64,
    pub rhs: f64,
    pub upper_gap: f64,
    pub lower_gap: f64,
    pub gamma: Vec<f64>,
    pub tol: f64,
    pub pass: bool,
}

/// Solved full and in-sample problems for a split, reusable across many
/// multiplier choices.
#[derive(Clone, Debug)]
pub struct SplitSolution {
    pub full: SvmModel,
    pub inner: SvmModel,
    /// Signed out-sample Gram `y_i y_j K(x_i, x_j)`.
    pub q_out: DMatrix<f64>,
    /// `1 - y_i f_in(x_i)` on the out-sample.
    pub out_deficit: DVector<f64>,
    pub lambda_max_out: f64,
    n_in: usize,
}

impl SplitSolution {
    pub fn new(pair: &SplitPair, k: &KernelSpec, opts: &SolverOptions) -> Result<Self> {
        let full = solve_hard_margin_with(&pair.combined(), k, opts)?;
        let inner = solve_hard_margin_with(&pair.s_in, k, opts)?;
        let out_pts = pair.s_out.points();
        let k_out = gram_matrix(k, &out_pts, &out_pts)?;
        let q_out = signed_gram(&k_out, &pair.s_out.labels());
        let out_deficit = inner.margins(&pair.s_out)?.map(|m| 1.0 - m);
        Ok(SplitSolution {
            lambda_max_out: lambda_max(&k_out)?,
            full,
            inner,
            q_out,
            out_deficit,
            n_in: pair.s_in.len(),
        })
    }

    /// Full-problem multipliers at the out-sample indices.
    pub fn beta_out(&self) -> DVector<f64> {
        self.full.alpha.rows(self.n_in, self.q_out.nrows()).into_owned()
    }

    /// Multipliers `gamma_i = 2 max(1 - y_i f_in(x_i), 0) / lambda_max(K_out)`.
    pub fn prescribed_gamma(&self) -> DVector<f64> {
        self.out_deficit.map(|h| 2.0 * h.max(0.0) / self.lambda_max_out)
    }

    /// The multipliers that turn the lower bound into the batch margin
    /// bound: `max(1 - y_i f_in(x_i), 0) / lambda_max(K_out)`.
    pub fn batch_gamma(&self) -> DVector<f64> {
        self.out_deficit.map(|h| h.max(0.0) / self.lambda_max_out)
    }

    pub fn sandwich(&self, gamma: &DVector<f64>, tol: f64) -> Result<SandwichReport> {
        if gamma.len() != self.q_out.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.q_out.nrows(),
                found: gamma.len(),
            });
        }
        if gamma.iter().any(|&g| !(g >= 0.0)) {
            return Err(Error::invalid("multipliers must be nonnegative"));
        }
        let beta = self.beta_out();
        let lhs = 0.5 * (&self.q_out * &beta).dot(&beta);
        let middle = 0.5 * (self.full.norm_sq - self.inner.norm_sq);
        let rhs = -0.5 * (&self.q_out * gamma).dot(gamma) + gamma.dot(&self.out_deficit);
        let upper_gap = lhs - middle;
        let lower_gap = middle - rhs;
        Ok(SandwichReport {
            lhs,
            middle,
            rhs,
            upper_gap,
            lower_gap,
            gamma: gamma.as_slice().to_vec(),
            tol,
            pass: upper_gap >= -tol && lower_gap >= -tol,
        })
    }
}

/// Sandwich with the prescribed multipliers.
pub fn sandwich_report(pair: &SplitPair, k: &KernelSpec, tol: f64) -> Result<SandwichReport> {
    let sol = SplitSolution::new(pair, k, &SolverOptions::default())?;
    sol.sandwich(&sol.prescribed_gamma(), tol)
}

/// Sandwich with caller-chosen nonnegative multipliers over `s_out`.
pub fn sandwich_report_with_gamma(pair: &SplitPair, k: &KernelSpec, gamma: &[f64], tol: f64) -> Result<SandwichReport> {
    let sol = SplitSolution::new(pair, k, &SolverOptions::default())?;
    sol.sandwich(&DVector::from_column_slice(gamma), tol)
}

/// `(1/m) sum_out max(1 - y_i f_in(x_i), 0)^2 <= (lambda_max(K_out)/m) (|f_ref|^2 - |f_in|^2)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarginBoundReport {
    pub lhs: f64,
    pub rhs: f64,
    pub lambda_max_out: f64,
    pub norm_sq_in: f64,
    pub reference_norm_sq: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn batch_bound_report(
    pair: &SplitPair,
    k: &KernelSpec,
    reference: Option<&SvmModel>,
    tol: f64,
) -> Result<MarginBoundReport> {
    let sol = SplitSolution::new(pair, k, &SolverOptions::default())?;
    batch_bound_from(&sol, pair, reference, tol)
}

pub fn batch_bound_from(
    sol: &SplitSolution,
    pair: &SplitPair,
    reference: Option<&SvmModel>,
    tol: f64,
) -> Result<MarginBoundReport> {
    let reference = reference.unwrap_or(&sol.full);
    let min_margin = reference.margins(&pair.combined())?.min();
    if !(min_margin >= 1.0 - tol) {
        return Err(Error::InvalidReference { min_margin });
    }
    let m = sol.q_out.nrows() as f64;
    let lhs = sol.out_deficit.iter().map(|h| h.max(0.0).powi(2)).sum::<f64>() / m;
    let rhs = sol.lambda_max_out / m * (reference.norm_sq - sol.inner.norm_sq);
    Ok(MarginBoundReport {
        lhs,
        rhs,
        lambda_max_out: sol.lambda_max_out,
        norm_sq_in: sol.inner.norm_sq,
        reference_norm_sq: reference.norm_sq,
        tol,
        pass: lhs <= rhs + tol,
    })
}

/// Leave-one-out hinge losses against `R^2 |f_S|^2 / n`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LooReport {
    pub per_index_hinge: Vec<f64>,
    pub mean_hinge: f64,
    pub bound: f64,
    pub r_sq: f64,
    pub norm_sq: f64,
    pub tol: f64,
    pub pass: bool,
}

pub fn loo_report(s: &Dataset, k: &KernelSpec, tol: f64) -> Result<LooReport> {
    loo_report_with(s, k, &SolverOptions::default(), tol)
}

/// Leave-one-out subproblems are warm-started from the full solution with
/// the held-out multiplier dropped, and run in parallel.
pub fn loo_report_with(s: &Dataset, k: &KernelSpec, opts: &SolverOptions, tol: f64) -> Result<LooReport> {
    check_classification(s)?;
    k.validate()?;
    let n = s.len();
    if n < 2 {
        return Err(Error::invalid("leave-one-out needs at least two examples"));
    }
    let pts = s.points();
    let y = s.labels();
    let gram = gram_matrix(k, &pts, &pts)?;
    let q = signed_gram(&gram, &y);
    let full = solve_dual(&q, None, opts)?;
    let norm_sq = (&q * &full.alpha).dot(&full.alpha).max(0.0);
    let r_sq = (0..n).map(|i| gram[(i, i)]).fold(0.0, f64::max);

    let per_index_hinge = (0..n)
        .into_par_iter()
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let q_sub = q.select_rows(&keep).select_columns(&keep);
            let warm = full.alpha.select_rows(&keep);
            let sol = solve_dual(&q_sub, Some(warm), opts).map_err(|e| Error::LooSubproblem {
                index: i,
                source: Box::new(e),
            })?;
            // y_i f_{S\i}(x_i) = sum_j alpha_j Q_ij
            let margin: f64 = keep.iter().zip(sol.alpha.iter()).map(|(&j, &a)| a * q[(i, j)]).sum();
            Ok((1.0 - margin).max(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean_hinge = per_index_hinge.iter().sum::<f64>() / n as f64;
    let bound = r_sq * norm_sq / n as f64;
    Ok(LooReport {
        per_index_hinge,
        mean_hinge,
        bound,
        r_sq,
        norm_sq,
        tol,
        pass: mean_hinge <= bound + tol,
    })
}
