//! Reference computations written against nalgebra and the raw instance
//! data only. None of these call into the library's solvers.

use detgen::numerics::RngStream;
use detgen::{Dataset, KernelSpec, Point};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn kernel(k: &KernelSpec, a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    match *k {
        KernelSpec::Linear => dot,
        KernelSpec::Polynomial { degree, offset } => (dot + offset).powi(degree as i32),
        KernelSpec::Gaussian { gamma } => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            (-gamma * d2).exp()
        }
    }
}

pub fn gram(k: &KernelSpec, rows: &[Point], cols: &[Point]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| kernel(k, rows[i].coords(), cols[j].coords()))
}

pub fn spd_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().cholesky().expect("oracle gram is positive definite").inverse()
}

pub fn eig(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new((m + m.transpose()) * 0.5)
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    eig(m).eigenvalues.max()
}

/// Smallest eigenvalue above `1e-12 * lambda_max`.
pub fn lambda_min_positive(m: &DMatrix<f64>) -> f64 {
    let e = eig(m).eigenvalues;
    let cut = 1e-12 * e.max().max(0.0);
    e.iter().copied().filter(|&v| v > cut).fold(f64::INFINITY, f64::min)
}

/// Exact quantities of the in/out interpolation split.
pub struct SplitTruth {
    pub k_full: DMatrix<f64>,
    /// Coefficients of the in-sample interpolant over the in-sample points.
    pub c_in: DVector<f64>,
    pub norm_sq_in: f64,
    pub norm_sq_full: f64,
    /// `L(S_out, f_in)`.
    pub lhs: f64,
    /// `lambda_max(K_oo - K_oi K_ii^-1 K_io) / m`.
    pub d_sq: f64,
}

pub fn split_truth(s_in: &Dataset, s_out: &Dataset, k: &KernelSpec) -> SplitTruth {
    let (pin, pout) = (s_in.points(), s_out.points());
    let all: Vec<Point> = pin.iter().chain(pout.iter()).cloned().collect();
    let k_full = gram(k, &all, &all);
    let (n, m) = (pin.len(), pout.len());
    let k_ii = k_full.view((0, 0), (n, n)).into_owned();
    let k_oi = k_full.view((n, 0), (m, n)).into_owned();
    let k_oo = k_full.view((n, n), (m, m)).into_owned();
    let k_ii_inv = spd_inverse(&k_ii);
    let y_in = s_in.labels();
    let y_out = s_out.labels();
    let y: DVector<f64> = DVector::from_iterator(n + m, y_in.iter().chain(y_out.iter()).copied());
    let c_in = &k_ii_inv * &y_in;
    let norm_sq_in = y_in.dot(&c_in);
    let norm_sq_full = y.dot(&(spd_inverse(&k_full) * &y));
    let resid = &y_out - &k_oi * &c_in;
    let lhs = resid.norm_squared() / m as f64;
    let schur = &k_oo - &k_oi * &k_ii_inv * k_oi.transpose();
    SplitTruth {
        k_full,
        c_in,
        norm_sq_in,
        norm_sq_full,
        lhs,
        d_sq: lambda_max(&schur) / m as f64,
    }
}

/// The sup of `|T_out f|^2 / m` over unit-norm `f` vanishing on `S_in`, by
/// random search. With `w = K^{1/2} c` the RKHS norm is Euclidean and the
/// constraint is linear, so samples are drawn uniformly on the unit sphere
/// of an orthonormal basis of that constraint's nullspace.
pub fn dissimilarity_search(t: &SplitTruth, n_in: usize, samples: usize, rng: &mut RngStream) -> f64 {
    let n = t.k_full.nrows();
    let m = n - n_in;
    let e = eig(&t.k_full);
    let sqrt_k = &e.eigenvectors
        * DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()))
        * e.eigenvectors.transpose();
    let a_in = sqrt_k.rows(0, n_in).into_owned();
    let a_out = sqrt_k.rows(n_in, m).into_owned();
    let proj = DMatrix::identity(n, n) - a_in.transpose() * spd_inverse(&(&a_in * a_in.transpose())) * &a_in;
    let pe = eig(&proj);
    let cols: Vec<usize> = (0..n).filter(|&i| pe.eigenvalues[i] > 0.5).collect();
    assert_eq!(cols.len(), m, "nullspace dimension");
    let basis = pe.eigenvectors.select_columns(&cols);
    let reduced = &a_out * &basis;
    let mut best = 0.0f64;
    for _ in 0..samples {
        let u = rng.gaussian_vector(m);
        let nu = u.norm();
        if nu == 0.0 {
            continue;
        }
        best = best.max((&reduced * u).norm_squared() / (nu * nu));
    }
    best / m as f64
}

pub fn signed_gram(k: &KernelSpec, s: &Dataset) -> DMatrix<f64> {
    let pts = s.points();
    let y = s.labels();
    let g = gram(k, &pts, &pts);
    DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| y[i] * y[j] * g[(i, j)])
}

/// `y_i f(x_i)` for `f = sum_j alpha_j y_j phi_j` over `train`, evaluated on
/// `eval`.
pub fn svm_margins(k: &KernelSpec, train: &Dataset, alpha: &DVector<f64>, eval: &Dataset) -> DVector<f64> {
    let yt = train.labels();
    let g = gram(k, &eval.points(), &train.points());
    let ye = eval.labels();
    DVector::from_fn(eval.len(), |i, _| {
        ye[i] * (0..train.len()).map(|j| alpha[j] * yt[j] * g[(i, j)]).sum::<f64>()
    })
}

/// Least-squares pieces of one quadratic evaluation.
pub struct LeastSquares {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl LeastSquares {
    pub fn n(&self) -> f64 {
        self.x.nrows() as f64
    }

    pub fn gram(&self) -> DMatrix<f64> {
        self.x.transpose() * &self.x / self.n()
    }

    pub fn derivative(&self, f: &DVector<f64>) -> DVector<f64> {
        self.x.transpose() * (&self.x * f - &self.y) * (2.0 / self.n())
    }

    /// Orthogonal projector onto the row space of `X` and the minimum-norm
    /// minimizer, both from the eigendecomposition of `X'X`.
    pub fn min_norm(&self) -> (DVector<f64>, DMatrix<f64>) {
        let e = eig(&(self.x.transpose() * &self.x));
        let cut = 1e-12 * e.eigenvalues.max().max(0.0);
        let d = self.x.ncols();
        let mut pinv = DMatrix::zeros(d, d);
        let mut range = DMatrix::zeros(d, d);
        for i in 0..d {
            let lam = e.eigenvalues[i];
            if lam > cut {
                let v = e.eigenvectors.column(i);
                pinv += v * v.transpose() / lam;
                range += v * v.transpose();
            }
        }
        (pinv * self.x.transpose() * &self.y, range)
    }

    /// The minimizer of a full-rank evaluation, refined by three Newton
    /// steps on the normal equations.
    pub fn refined_minimizer(&self) -> DVector<f64> {
        let chol = self.gram().cholesky().expect("full-rank design");
        let mut f = self.min_norm().0;
        for _ in 0..3 {
            f -= chol.solve(&self.derivative(&f)) * 0.5;
        }
        f
    }

    /// `L(f + d) - L(f)` without cancellation against `L(f)`.
    pub fn increment(&self, f: &DVector<f64>, d: &DVector<f64>) -> f64 {
        let r = &self.x * f - &self.y;
        let xd = &self.x * d;
        (xd.norm_squared() + 2.0 * r.dot(&xd)) / self.n()
    }
}

/// Points on the unit sphere of R^dim (dim <= 3) by angle.
fn sphere_point(dim: usize, a: &[f64]) -> DVector<f64> {
    match dim {
        1 => DVector::from_element(1, if a[0].cos() >= 0.0 { 1.0 } else { -1.0 }),
        2 => DVector::from_vec(vec![a[0].cos(), a[0].sin()]),
        3 => DVector::from_vec(vec![a[0].sin() * a[1].cos(), a[0].sin() * a[1].sin(), a[0].cos()]),
        _ => panic!("sphere search supports dim <= 3"),
    }
}

/// Maximum of `f` over the unit sphere of R^dim, dim <= 3: an angle grid
/// of spacing `step` followed by a compass search from the best grid
/// points down to 1e-10 radians.
pub fn sphere_max(dim: usize, step: f64, f: &dyn Fn(&DVector<f64>) -> f64) -> f64 {
    if dim == 1 {
        return f(&DVector::from_element(1, 1.0)).max(f(&DVector::from_element(1, -1.0)));
    }
    let tau = std::f64::consts::TAU;
    let mut starts: Vec<(f64, Vec<f64>)> = Vec::new();
    if dim == 2 {
        let count = (tau / step).ceil() as usize;
        for i in 0..count {
            let a = vec![i as f64 * step];
            starts.push((f(&sphere_point(2, &a)), a));
        }
    } else {
        let rows = (std::f64::consts::PI / step).ceil() as usize;
        for i in 0..=rows {
            let theta = (i as f64 * step).min(std::f64::consts::PI);
            let ring = ((tau * theta.sin() / step).ceil() as usize).max(1);
            for j in 0..ring {
                let a = vec![theta, j as f64 * tau / ring as f64];
                starts.push((f(&sphere_point(3, &a)), a));
            }
        }
    }
    starts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = starts[0].0;
    for (v0, a0) in starts.into_iter().take(8) {
        let (mut v, mut a) = (v0, a0);
        let mut h = step;
        while h > 1e-10 {
            let mut moved = false;
            for k in 0..a.len() {
                for s in [-1.0, 1.0] {
                    let mut b = a.clone();
                    b[k] += s * h;
                    let w = f(&sphere_point(dim, &b));
                    if w > v {
                        v = w;
                        a = b;
                        moved = true;
                    }
                }
            }
            if !moved {
                h *= 0.5;
            }
        }
        best = best.max(v);
    }
    best
}
