//! Quadratic evaluations `L(S, f) = |y - X f|^2 / n` on `R^d` and the
//! variational bounds that compare their minimizers.
//!
//! Constants, for a design `X` with `n` rows and `A = X'X / n`:
//!
//! | quantity                         | value                         |
//! |----------------------------------|-------------------------------|
//! | Hessian of `L`                   | `2 A`                         |
//! | growth constant `c`              | `lambda_min+(A)`              |
//! | derivative `DL(f)`               | `(2/n) X'(X f - y)`           |
//! | Lipschitz constant `M` of `DL`   | `2 lambda_max(A)`             |
//! | metric regularity `alpha`        | `2 lambda_min+(A)`            |
//!
//! `lambda_min+` is the smallest eigenvalue on the row space of `X`, with
//! the numerical rank taken at `1e-9 * sigma_max(X)`. Norms are Euclidean.
//! With `L - L_min = (f - p)' A (f - p)` for the projection `p` of `f` onto
//! the minimizer set, growth holds globally with this `c`.
//!
//! The gap `m(f) = L(S_out, f) - L(S_in, f) = f'Bf + g'f + const` has
//!
//! ```text
//! B = X_o'X_o / n_o - X_i'X_i / n_i
//! g = -2 (X_o'y_o / n_o - X_i'y_i / n_i)
//! const = |y_o|^2 / n_o - |y_i|^2 / n_i
//! ```
//!
//! The neighbourhood `W(S_in)` is the set of points within `rho` of the
//! minimizer set whose projection lies within `rho` of the minimum-norm
//! minimizer (a ball when the minimizer is unique).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::numerics::linalg::{lstsq_min_norm, nullspace, singular_values, DEFAULT_RANK_TOL};
use crate::numerics::rng::{RngStream, Seed};
use crate::numerics::trust_region::trust_region_max;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticEvaluation {
    design: DMatrix<f64>,
    targets: DVector<f64>,
}

impl QuadraticEvaluation {
    pub fn new(design: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::invalid("design must have at least one row and one column"));
        }
        if design.nrows() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: design.nrows(),
                found: targets.len(),
            });
        }
        if design.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("design and targets must be finite"));
        }
        Ok(QuadraticEvaluation { design, targets })
    }

    /// Rows are the points of `s`, targets its labels.
    pub fn from_dataset(s: &Dataset) -> Result<Self> {
        let d = s.dim();
        let design = DMatrix::from_fn(s.len(), d, |i, j| s.examples()[i].x.coords()[j]);
        QuadraticEvaluation::new(design, s.labels())
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn n(&self) -> usize {
        self.design.nrows()
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    pub fn loss(&self, f: &DVector<f64>) -> f64 {
        (&self.targets - &self.design * f).norm_squared() / self.n() as f64
    }

    /// `(2/n) X'(X f - y)`.
    pub fn derivative(&self, f: &DVector<f64>) -> DVector<f64> {
        self.design.transpose() * (&self.design * f - &self.targets) * (2.0 / self.n() as f64)
    }

    /// `X'X / n`.
    pub fn normalized_gram(&self) -> DMatrix<f64> {
        self.design.transpose() * &self.design / self.n() as f64
    }

    fn singular_values(&self) -> Result<DVector<f64>> {
        singular_values(&self.design)
    }

    /// Smallest nonzero eigenvalue of `X'X / n`.
    pub fn growth_constant(&self) -> Result<f64> {
        let s = self.singular_values()?;
        let cut = DEFAULT_RANK_TOL * s[0];
        let smallest = s
            .iter()
            .copied()
            .filter(|&v| v > cut)
            .fold(f64::INFINITY, f64::min);
        if !smallest.is_finite() {
            return Err(Error::invalid("design has numerical rank zero"));
        }
        Ok(smallest * smallest / self.n() as f64)
    }

    /// Lipschitz constant `2 lambda_max(X'X / n)` of the derivative.
    pub fn derivative_lipschitz(&self) -> Result<f64> {
        let s = self.singular_values()?;
        Ok(2.0 * s[0] * s[0] / self.n() as f64)
    }

    /// Metric-regularity constant `2 lambda_min+(X'X / n)`.
    pub fn metric_regularity(&self) -> Result<f64> {
        Ok(2.0 * self.growth_constant()?)
    }
}

fn check_dims(q_in: &QuadraticEvaluation, q_out: &QuadraticEvaluation) -> Result<()> {
    if q_in.dim() != q_out.dim() {
        return Err(Error::DimensionMismatch {
            expected: q_in.dim(),
            found: q_out.dim(),
        });
    }
    Ok(())
}

/// The exact minimizers `particular + span(null_basis)`.
#[derive(Clone, Debug)]
pub struct MinimizerSet {
    pub particular: DVector<f64>,
    pub null_basis: DMatrix<f64>,
    pub unique: bool,
    pub min_value: f64,
}

impl MinimizerSet {
    /// Nearest minimizer to `f`.
    pub fn project(&self, f: &DVector<f64>) -> DVector<f64> {
        let diff = f - &self.particular;
        let along = &self.null_basis * (self.null_basis.transpose() * &diff);
        &self.particular + along
    }

    pub fn dist(&self, f: &DVector<f64>) -> f64 {
        (f - self.project(f)).norm()
    }

    pub fn null_dim(&self) -> usize {
        self.null_basis.ncols()
    }

    /// Membership in `W`: within `rho` of the set, with the projection
    /// within `rho` of `particular`.
    pub fn in_region(&self, f: &DVector<f64>, rho: f64) -> bool {
        let p = self.project(f);
        (f - &p).norm() <= rho && (&p - &self.particular).norm() <= rho
    }
}

pub fn minimize(q: &QuadraticEvaluation) -> Result<MinimizerSet> {
    let particular = lstsq_min_norm(&q.design, &q.targets, DEFAULT_RANK_TOL)?;
    let null = nullspace(&q.design, DEFAULT_RANK_TOL)?;
    let min_value = q.loss(&particular);
    Ok(MinimizerSet {
        unique: null.dim() == 0,
        null_basis: null.basis,
        particular,
        min_value,
    })
}

/// `f_0 + t * direction` with `L(f) - L_min = eps`, where `f_0` is the
/// minimum-norm minimizer: `t = sqrt(eps n / |X direction|^2)`.
pub fn epsilon_minimizer(q: &QuadraticEvaluation, eps: f64, direction: &DVector<f64>) -> Result<DVector<f64>> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("eps {eps} must be finite and >= 0")));
    }
    if direction.len() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: q.dim(),
            found: direction.len(),
        });
    }
    if (direction.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::invalid("direction must be a unit vector"));
    }
    let f0 = minimize(q)?.particular;
    if eps == 0.0 {
        return Ok(f0);
    }
    let reach = (&q.design * direction).norm_squared();
    let sigma_max = q.singular_values()?[0];
    if !(reach.sqrt() > DEFAULT_RANK_TOL * sigma_max) {
        return Err(Error::UnreachableLevel { eps });
    }
    let t = (eps * q.n() as f64 / reach).sqrt();
    Ok(f0 + direction * t)
}

/// `m(f) = f'Bf + g'f + constant`.
#[derive(Clone, Debug)]
pub struct GapQuadratic {
    pub b: DMatrix<f64>,
    pub g: DVector<f64>,
    pub constant: f64,
}

impl GapQuadratic {
    pub fn new(q_in: &QuadraticEvaluation, q_out: &QuadraticEvaluation) -> Result<Self> {
        check_dims(q_in, q_out)?;
        let (ni, no) = (q_in.n() as f64, q_out.n() as f64);
        let b = q_out.normalized_gram() - q_in.normalized_gram();
        let g = (q_out.design.transpose() * &q_out.targets / no - q_in.design.transpose() * &q_in.targets / ni) * -2.0;
        let constant = q_out.targets.norm_squared() / no - q_in.targets.norm_squared() / ni;
        Ok(GapQuadratic {
            b: (&b + b.transpose()) * 0.5,
            g,
            constant,
        })
    }

    pub fn eval(&self, f: &DVector<f64>) -> f64 {
        (&self.b * f).dot(f) + self.g.dot(f) + self.constant
    }

    pub fn gradient(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.b * f * 2.0 + &self.g
    }
}

/// Growth constant with the neighbourhood it is certified on.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GrowthCertificate {
    pub c: f64,
    pub region_radius: f64,
}

pub fn growth_certificate(q: &QuadraticEvaluation, rho: f64) -> Result<GrowthCertificate> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("radius {rho} must be > 0")));
    }
    Ok(GrowthCertificate {
        c: q.growth_constant()?,
        region_radius: rho,
    })
}

/// `10 * max(diameter of all design rows, |f_out - f_in|, 1)` over the
/// minimum-norm minimizers.
pub fn default_rho(q_in: &QuadraticEvaluation, q_out: &QuadraticEvaluation) -> Result<f64> {
    check_dims(q_in, q_out)?;
    let rows: Vec<DVector<f64>> = q_in
        .design
        .row_iter()
        .chain(q_out.design.row_iter())
        .map(|r| r.transpose())
        .collect();
    let mut diameter = 0.0f64;
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            diameter = diameter.max((a - b).norm());
        }
    }
    let shift = (minimize(q_out)?.particular - minimize(q_in)?.particular).norm();
    Ok(10.0 * diameter.max(shift).max(1.0))
}

/// Supremum of `|grad m|` over `W(S_in)`; this dominates the difference
/// quotients of `m` between a minimizer and any point of `W`. For an affine
/// minimizer set the supremum is taken over the ball of radius
/// `sqrt(2) rho` around the minimum-norm minimizer, which contains `W`.
pub fn kappa_exact(q_in: &QuadraticEvaluation, q_out: &QuadraticEvaluation, rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::invalid(format!("radius {rho} must be > 0")));
    }
    let gap = GapQuadratic::new(q_in, q_out)?;
    let m_in = minimize(q_in)?;
    let radius = if m_in.unique { rho } else { std::f64::consts::SQRT_2 * rho };
    // |a + 2B d|^2 = d'(4B^2)d + (4Ba)'d + |a|^2
    let a = gap.gradient(&m_in.particular);
    let b2 = &gap.b * &gap.b * 4.0;
    let lin = &gap.b * &a * 4.0;
    let tr = trust_region_max(&((&b2 + b2.transpose()) * 0.5), &lin, radius)?;
    Ok((tr.value + a.norm_squared()).max(0.0).sqrt())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarQgReport {
    pub c: f64,
    pub kappa: f64,
    pub eps: f64,
    pub rho: f64,
    /// `kappa / c + sqrt(eps / c)`.
    pub bound: f64,
    pub max_dist: f64,
    /// Largest `dist / bound` over the accepted trials.
    pub max_ratio: f64,
    pub trials: usize,
    pub skipped: usize,
    pub tol: f64,
    pub pass: bool,
}

/// Draws `eps`-minimizers of `q_out` along random directions (shifted
/// along the minimizer set of `q_out` when it is not a point) and checks
/// their distance to the minimizers of `q_in`. Points outside `W(S_in)` or
/// at unreachable levels are counted as skipped.
pub fn check_var_qg(
    q_in: &QuadraticEvaluation,
    q_out: &QuadraticEvaluation,
    eps: f64,
    rho: f64,
    trial_dirs: usize,
    seed: Seed,
) -> Result<VarQgReport> {
    check_dims(q_in, q_out)?;
    let cert = growth_certificate(q_in, rho)?;
    let kappa = kappa_exact(q_in, q_out, rho)?;
    let bound = kappa / cert.c + (eps / cert.c).sqrt();
    let tol = 1e-8 * (1.0 + bound);
    let m_in = minimize(q_in)?;
    let m_out = minimize(q_out)?;
    let mut rng = RngStream::new(seed);
    let (mut max_dist, mut max_ratio) = (0.0f64, 0.0f64);
    let (mut trials, mut skipped) = (0, 0);
    let mut pass = true;
    for _ in 0..trial_dirs {
        let dir = rng.unit_vector(q_in.dim());
        let shift = if m_out.unique {
            DVector::zeros(q_in.dim())
        } else {
            let v = rng.in_ball(m_out.null_dim(), 0.5 * rho);
            &m_out.null_basis * v
        };
        let f = match epsilon_minimizer(q_out, eps, &dir) {
            Ok(f) => f + shift,
            Err(Error::UnreachableLevel { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if !m_in.in_region(&f, rho) {
            skipped += 1;
            continue;
        }
        trials += 1;
        let dist = m_in.dist(&f);
        max_dist = max_dist.max(dist);
        if bound > 0.0 {
            max_ratio = max_ratio.max(dist / bound);
        }
        pass &= dist <= bound + tol;
    }
    Ok(VarQgReport {
        c: cert.c,
        kappa,
        eps,
        rho,
        bound,
        max_dist,
        max_ratio,
        trials,
        skipped,
        tol,
        pass,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricRegularityReport {
    /// `L(S_out, f_in) - min L(S_out, .)`.
    pub lhs: f64,
    /// `M / (2 alpha^2) |DL(S_in, f_out) - DL(S_out, f_out)|^2`.
    pub rhs: f64,
    pub lipschitz: f64,
    pub alpha: f64,
    pub derivative_gap: f64,
    /// `|f_out - f_in|`.
    pub dist: f64,
    pub tol: f64,
    pub pass: bool,
}

/// `f_out` is the minimum-norm minimizer of `q_out` and `f_in` its
/// projection onto the minimizers of `q_in`. The left side is evaluated as
/// `|X_out (f_in - f_out)|^2 / n_out`, the exact loss gap above a minimizer.
pub fn check_metric_regularity(q_in: &QuadraticEvaluation, q_out: &QuadraticEvaluation) -> Result<MetricRegularityReport> {
    check_dims(q_in, q_out)?;
    let m_in = minimize(q_in)?;
    let f_out = minimize(q_out)?.particular;
    let f_in = m_in.project(&f_out);
    let lhs = (&q_out.design * (&f_in - &f_out)).norm_squared() / q_out.n() as f64;
    let lipschitz = q_out.derivative_lipschitz()?;
    let alpha = q_in.metric_regularity()?;
    let derivative_gap = (q_in.derivative(&f_out) - q_out.derivative(&f_out)).norm();
    let rhs = lipschitz / (2.0 * alpha * alpha) * derivative_gap * derivative_gap;
    let tol = 1e-8;
    Ok(MetricRegularityReport {
        lhs,
        rhs,
        lipschitz,
        alpha,
        derivative_gap,
        dist: (&f_out - &f_in).norm(),
        tol,
        pass: lhs <= rhs + tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpacing {
    Linear,
    Log,
}

/// An increasing positive grid of radii.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub spacing: GridSpacing,
}

impl Default for DeltaGrid {
    fn default() -> Self {
        DeltaGrid {
            start: 1e-7,
            stop: 1e4,
            count: 221,
            spacing: GridSpacing::Log,
        }
    }
}

impl DeltaGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.start > 0.0 && self.stop > self.start && self.stop.is_finite() && self.count >= 2) {
            return Err(Error::invalid(format!(
                "grid needs 0 < start < stop and count >= 2 (got {}, {}, {})",
                self.start, self.stop, self.count
            )));
        }
        let last = (self.count - 1) as f64;
        Ok((0..self.count)
            .map(|i| {
                let t = i as f64 / last;
                match self.spacing {
                    GridSpacing::Linear => self.start + t * (self.stop - self.start),
                    GridSpacing::Log => self.start * (self.stop / self.start).powf(t),
                }
            })
            .collect())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizationCurve {
    pub deltas: Vec<f64>,
    pub h_vals: Vec<f64>,
    pub k_vals: Vec<f64>,
    /// Smallest radius with `K < h`, or `f64::INFINITY` when the grid has
    /// none.
    pub delta_star: f64,
}

impl LocalizationCurve {
    pub fn is_vacuous(&self) -> bool {
        self.delta_star.is_infinite()
    }
}

/// `h` and `K` at the unique in-sample minimizer.
#[derive(Clone, Debug)]
pub struct Localization {
    lambda_min: f64,
    b: DMatrix<f64>,
    /// Linear term of `m(f_in + d) - m(f_in)`.
    lin: DVector<f64>,
    pub f_in: DVector<f64>,
}

impl Localization {
    pub fn new(q_in: &QuadraticEvaluation, q_out: &QuadraticEvaluation) -> Result<Self> {
        check_dims(q_in, q_out)?;
        let m_in = minimize(q_in)?;
        if !m_in.unique {
            return Err(Error::NonUniqueMinimizer {
                null_dim: m_in.null_dim(),
            });
        }
        let gap = GapQuadratic::new(q_in, q_out)?;
        let lin = gap.gradient(&m_in.particular);
        Ok(Localization {
            lambda_min: q_in.growth_constant()?,
            b: gap.b,
            lin,
            f_in: m_in.particular,
        })
    }

    /// `inf { L(S_in, f) - L_min : |f - f_in| = delta } = lambda_min delta^2`.
    pub fn h(&self, delta: f64) -> f64 {
        self.lambda_min * delta * delta
    }

    /// `sup { |m(f) - m(f_in)| : |f - f_in| <= delta }`.
    pub fn k(&self, delta: f64) -> Result<f64> {
        let up = trust_region_max(&self.b, &self.lin, delta)?.value;
        let down = trust_region_max(&(-&self.b), &(-&self.lin), delta)?.value;
        Ok(up.max(down).max(0.0))
    }

    fn crosses(&self, delta: f64) -> Result<bool> {
        Ok(self.k(delta)? < self.h(delta))
    }
}

const BISECTION_REL_TOL: f64 = 1e-12;

pub fn localization_curve(
    q_in: &QuadraticEvaluation,
    q_out: &QuadraticEvaluation,
    grid: &DeltaGrid,
) -> Result<LocalizationCurve> {
    let loc = Localization::new(q_in, q_out)?;
    let deltas = grid.values()?;
    let h_vals: Vec<f64> = deltas.iter().map(|&d| loc.h(d)).collect();
    let k_vals = deltas.iter().map(|&d| loc.k(d)).collect::<Result<Vec<f64>>>()?;
    let first = (0..deltas.len()).find(|&i| k_vals[i] < h_vals[i]);
    let delta_star = match first {
        None => f64::INFINITY,
        Some(0) => deltas[0],
        Some(i) => {
            let (mut lo, mut hi) = (deltas[i - 1], deltas[i]);
            while hi - lo > BISECTION_REL_TOL * hi {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if loc.crosses(mid)? {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        }
    };
    Ok(LocalizationCurve {
        deltas,
        h_vals,
        k_vals,
        delta_star,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarCvxReport {
    /// `|f_in - f_out|`.
    pub distance: f64,
    pub delta_star: f64,
    pub vacuous: bool,
    pub tol: f64,
    pub pass: bool,
}

pub fn check_var_cvx(q_in: &QuadraticEvaluation, q_out: &QuadraticEvaluation, grid: &DeltaGrid) -> Result<VarCvxReport> {
    let m_out = minimize(q_out)?;
    if !m_out.unique {
        return Err(Error::NonUniqueMinimizer {
            null_dim: m_out.null_dim(),
        });
    }
    let curve = localization_curve(q_in, q_out, grid)?;
    let f_in = minimize(q_in)?.particular;
    let distance = (&f_in - &m_out.particular).norm();
    let vacuous = curve.is_vacuous();
    let tol = 1e-9 * (1.0 + distance);
    Ok(VarCvxReport {
        distance,
        delta_star: curve.delta_star,
        vacuous,
        tol,
        pass: vacuous || distance <= curve.delta_star + tol,
    })
}
