//! Random instance families shared by the sweeps and the acceptance suite.
//!
//! Every generator takes an [`RngStream`] and draws everything it needs
//! from it, so an instance is a pure function of its seed.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Point, SplitPair, Task};
use crate::error::{Error, Result};
use crate::interpolation::Interpolator;
use crate::kernel::{gram_matrix, KernelSpec};
use crate::numerics::linalg::sym_eig;
use crate::numerics::rng::RngStream;
use crate::parametric::QuadraticEvaluation;

/// Smallest admissible `lambda_min / lambda_max` of an interpolation Gram.
pub const GRAM_CONDITION_FLOOR: f64 = 1e-7;

const MAX_ATTEMPTS: usize = 1000;

/// Uniform draws from the ball of radius `radius` in R^d.
pub fn ball_points(rng: &mut RngStream, count: usize, d: usize, radius: f64) -> Vec<Point> {
    (0..count)
        .map(|_| Point::new(rng.in_ball(d, radius).as_slice().to_vec()).expect("ball samples are finite"))
        .collect()
}

/// `sup K(x, x)` over the ball of radius `radius`.
pub fn feature_radius_sq(k: &KernelSpec, radius: f64) -> f64 {
    match *k {
        KernelSpec::Linear => radius * radius,
        KernelSpec::Polynomial { degree, offset } => (radius * radius + offset).powi(degree as i32),
        KernelSpec::Gaussian { .. } => 1.0,
    }
}

/// A kernel expansion on `anchors` points drawn from the input ball, with
/// gaussian coefficients rescaled to RKHS norm exactly `norm`.
pub fn synthesize_teacher(
    rng: &mut RngStream,
    k: &KernelSpec,
    d: usize,
    anchors: usize,
    radius: f64,
    norm: f64,
) -> Result<Interpolator> {
    if anchors == 0 {
        return Err(Error::invalid("teacher needs at least one anchor"));
    }
    for _ in 0..MAX_ATTEMPTS {
        let pts = ball_points(rng, anchors, d, radius);
        let coeffs = rng.gaussian_vector(anchors);
        if norm == 0.0 {
            return Interpolator::from_coefficients(pts, coeffs * 0.0, *k);
        }
        let raw = Interpolator::from_coefficients(pts, coeffs, *k)?;
        if raw.norm_sq > 1e-8 {
            let scale = norm / raw.norm_sq.sqrt();
            let teacher = Interpolator::from_coefficients(raw.anchors, raw.coeffs * scale, *k)?;
            let realized = teacher.recompute_norm_sq()?.sqrt();
            if (realized - norm).abs() > 1e-8 {
                return Err(Error::Construction(format!("teacher norm {realized} differs from {norm}")));
            }
            return Ok(teacher);
        }
    }
    Err(Error::Construction("could not draw a teacher with nonzero norm".into()))
}

/// Upper limits for [`rkhs_instance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RkhsLimits {
    pub max_dim: usize,
    pub max_in: usize,
    pub max_out: usize,
}

impl Default for RkhsLimits {
    fn default() -> Self {
        RkhsLimits {
            max_dim: 5,
            max_in: 20,
            max_out: 10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RkhsInstance {
    pub pair: SplitPair,
    pub kernel: KernelSpec,
}

/// Number of points a kernel can interpolate in general position in R^d.
fn capacity(k: &KernelSpec, d: usize) -> usize {
    match *k {
        KernelSpec::Linear => d,
        KernelSpec::Polynomial { degree, .. } => {
            let mut c: u128 = 1;
            for i in 1..=degree as u128 {
                c = c * (d as u128 + i) / i;
            }
            c.min(usize::MAX as u128) as usize
        }
        KernelSpec::Gaussian { .. } => usize::MAX,
    }
}

/// Linear, polynomial or gaussian with equal probability. The gaussian
/// width scales with the typical spacing of `points` points in the unit
/// ball of R^d.
fn random_family(rng: &mut RngStream, d: usize, points: usize) -> KernelSpec {
    match rng.int_range(0, 2) {
        0 => KernelSpec::Linear,
        1 => KernelSpec::Polynomial {
            degree: rng.int_range(2, 3) as u32,
            offset: rng.uniform_range(0.5, 1.5),
        },
        _ => KernelSpec::Gaussian {
            gamma: rng.uniform_range(0.5, 2.0) * (points as f64).powf(2.0 / d as f64),
        },
    }
}

fn well_conditioned(k: &KernelSpec, pts: &[Point]) -> Result<bool> {
    let eig = sym_eig(&gram_matrix(k, pts, pts)?)?;
    Ok(eig.min() >= GRAM_CONDITION_FLOOR * eig.max())
}

fn min_pair_dist_sq(pts: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in 0..i {
            best = best.min(pts[i].dist_sq(&pts[j]));
        }
    }
    best
}

/// A regression split with gaussian labels on distinct points of the unit
/// ball. The kernel family is drawn uniformly; linear and polynomial sizes
/// stay within the feature dimension, and the Gram matrix of the whole
/// sample must have condition number at most `1 / GRAM_CONDITION_FLOOR`.
pub fn rkhs_instance(rng: &mut RngStream, limits: &RkhsLimits) -> Result<RkhsInstance> {
    if limits.max_dim == 0 || limits.max_in == 0 || limits.max_out == 0 {
        return Err(Error::invalid("instance limits must be positive"));
    }
    for _ in 0..MAX_ATTEMPTS {
        let d = rng.int_range(1, limits.max_dim);
        let kernel = random_family(rng, d, limits.max_in + limits.max_out);
        let cap = capacity(&kernel, d);
        if cap < 2 {
            continue;
        }
        let n_in = rng.int_range(1, limits.max_in.min(cap - 1));
        let m = rng.int_range(1, limits.max_out.min(cap - n_in));
        let kernel = match kernel {
            KernelSpec::Gaussian { gamma } => KernelSpec::Gaussian {
                gamma: gamma * ((n_in + m) as f64 / (limits.max_in + limits.max_out) as f64).powf(2.0 / d as f64),
            },
            other => other,
        };
        let pts = ball_points(rng, n_in + m, d, 1.0);
        if min_pair_dist_sq(&pts) < 1e-6 || !well_conditioned(&kernel, &pts)? {
            continue;
        }
        let labels: Vec<f64> = (0..n_in + m).map(|_| rng.gaussian()).collect();
        let (pin, pout) = pts.split_at(n_in);
        let s_in = points_dataset(pin, &labels[..n_in], Task::Regression)?;
        let s_out = points_dataset(pout, &labels[n_in..], Task::Regression)?;
        return Ok(RkhsInstance {
            pair: SplitPair::new(s_in, s_out)?,
            kernel,
        });
    }
    Err(Error::Construction("no well-conditioned interpolation instance found".into()))
}

fn points_dataset(pts: &[Point], labels: &[f64], task: Task) -> Result<Dataset> {
    Dataset::from_parts(pts.iter().map(|p| p.coords().to_vec()).collect(), labels.to_vec(), task)
}

/// Upper limits for [`svm_instance`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmLimits {
    pub max_dim: usize,
    pub max_n: usize,
}

impl Default for SvmLimits {
    fn default() -> Self {
        SvmLimits { max_dim: 5, max_n: 30 }
    }
}

#[derive(Clone, Debug)]
pub struct SvmInstance {
    pub data: Dataset,
    pub kernel: KernelSpec,
    /// The first `n_in` examples of `data` against the rest.
    pub split: SplitPair,
}

/// A separable classification sample: labels are the signs of a random
/// kernel expansion of the chosen family, and points whose teacher value is
/// within a tenth of the median magnitude of zero are redrawn.
pub fn svm_instance(rng: &mut RngStream, limits: &SvmLimits) -> Result<SvmInstance> {
    if limits.max_dim == 0 || limits.max_n < 2 {
        return Err(Error::invalid("need max_dim >= 1 and max_n >= 2"));
    }
    let d = rng.int_range(1, limits.max_dim);
    let n = rng.int_range(2, limits.max_n);
    let kernel = random_family(rng, d, n);
    let teacher = synthesize_teacher(rng, &kernel, d, 5, 1.0, 1.0)?;
    let probe = ball_points(rng, 200, d, 1.0);
    let mut mags: Vec<f64> = teacher.predict_many(&probe)?.iter().map(|v| v.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let threshold = 0.1 * mags[mags.len() / 2];
    let mut pts = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut attempts = 0;
    while pts.len() < n {
        attempts += 1;
        if attempts > 1000 * n {
            return Err(Error::Construction("teacher margin region is too small".into()));
        }
        let x = ball_points(rng, 1, d, 1.0).remove(0);
        let v = teacher.predict(&x)?;
        if v.abs() > threshold && pts.iter().all(|p: &Point| p.dist_sq(&x) > 1e-12) {
            labels.push(v.signum());
            pts.push(x);
        }
    }
    let n_in = rng.int_range(1, n - 1);
    let data = points_dataset(&pts, &labels, Task::Classification)?;
    let split = SplitPair::new(
        points_dataset(&pts[..n_in], &labels[..n_in], Task::Classification)?,
        points_dataset(&pts[n_in..], &labels[n_in..], Task::Classification)?,
    )?;
    Ok(SvmInstance { data, kernel, split })
}

/// Upper limits for [`quadratic_pair`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticLimits {
    pub max_dim: usize,
    pub max_n: usize,
}

impl Default for QuadraticLimits {
    fn default() -> Self {
        QuadraticLimits { max_dim: 10, max_n: 50 }
    }
}

#[derive(Clone, Debug)]
pub struct QuadraticPair {
    pub q_in: QuadraticEvaluation,
    pub q_out: QuadraticEvaluation,
    /// Both designs have full column rank.
    pub full_rank: bool,
}

/// In- and out-sample least-squares evaluations on a common teacher
/// `y = X theta + sigma noise`. With `full_rank` both designs are gaussian
/// with at least `d` rows; otherwise each design is a gaussian product of
/// random rank.
pub fn quadratic_pair(rng: &mut RngStream, limits: &QuadraticLimits, full_rank: bool) -> Result<QuadraticPair> {
    if limits.max_dim == 0 || limits.max_n == 0 {
        return Err(Error::invalid("instance limits must be positive"));
    }
    if full_rank && limits.max_n < limits.max_dim.min(limits.max_n) {
        return Err(Error::invalid("full-rank designs need max_n >= dimension"));
    }
    let d = rng.int_range(1, if full_rank { limits.max_dim.min(limits.max_n) } else { limits.max_dim });
    let theta = rng.gaussian_vector(d);
    let sigma = rng.uniform_range(0.0, 1.0);
    let draw = |rng: &mut RngStream| -> Result<QuadraticEvaluation> {
        let lo = if full_rank { d } else { 1 };
        let n = rng.int_range(lo, limits.max_n);
        let x = if full_rank {
            DMatrix::from_fn(n, d, |_, _| rng.gaussian())
        } else {
            let rank = rng.int_range(1, n.min(d));
            let a = DMatrix::from_fn(n, rank, |_, _| rng.gaussian());
            let b = DMatrix::from_fn(rank, d, |_, _| rng.gaussian());
            a * b
        };
        let noise = DVector::from_fn(n, |_, _| rng.gaussian());
        let y = &x * &theta + noise * sigma;
        QuadraticEvaluation::new(x, y)
    };
    let q_in = draw(rng)?;
    let q_out = draw(rng)?;
    Ok(QuadraticPair { q_in, q_out, full_rank })
}
