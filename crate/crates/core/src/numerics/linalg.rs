use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative numerical-rank cut used when the caller has no better value:
/// singular values at or below `1e-9 * sigma_max` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Relative eigenvalue floor for [`inv_sqrt_psd_default`].
pub const DEFAULT_INV_SQRT_FLOOR: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-10;
const EIG_MAX_ITER: usize = 10_000;
const DECOMP_EPS: f64 = 5.0 * f64::EPSILON;

/// Lower-triangular Cholesky factor of `A + jitter * I`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factors `a + jitter * I`. A pivot that is not safely positive fails
    /// with [`Error::SingularMatrix`] naming the 0-based pivot index.
    pub fn new(a: &DMatrix<f64>, jitter: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::invalid(format!(
                "expected a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        if !(jitter >= 0.0) {
            return Err(Error::invalid(format!("jitter {jitter} must be >= 0")));
        }
        let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max) + jitter;
        let cut = n.max(1) as f64 * f64::EPSILON * scale;
        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)] + jitter;
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > cut) {
                return Err(Error::SingularMatrix { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n, "right-hand side length");
        let mut z = b.clone();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[(i, k)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }
}

/// Solves `(A + jitter * I) x = b` for symmetric positive definite `A`.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, jitter: f64) -> Result<DVector<f64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.len(),
        });
    }
    Ok(Cholesky::new(a, jitter)?.solve(b))
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub eigenvalues: DVector<f64>,
    /// Column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SymEig {
    pub fn max(&self) -> f64 {
        self.eigenvalues.get(0).copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.iter().last().copied().unwrap_or(0.0)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        v * DMatrix::from_diagonal(&self.eigenvalues) * v.transpose()
    }
}

pub fn sym_eig(a: &DMatrix<f64>) -> Result<SymEig> {
    check_symmetric(a)?;
    let n = a.nrows();
    if n == 0 {
        return Ok(SymEig {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
        });
    }
    // Symmetrize so rounding-level asymmetry does not leak into the solver.
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, DECOMP_EPS, EIG_MAX_ITER)
        .ok_or(Error::EigenNonConvergence)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::invalid(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let scale = a.amax().max(1.0);
    let asym = (a - a.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    Ok(())
}

/// Orthonormal basis of the numerical kernel of an operator.
#[derive(Clone, Debug)]
pub struct NullspaceBasis {
    /// `cols(T) x r` with orthonormal columns; `r` may be zero.
    pub basis: DMatrix<f64>,
    /// Relative cut: singular values `<= rank_tol * sigma_max` are zero.
    pub rank_tol: f64,
    pub rank: usize,
    pub sigma_max: f64,
}

impl NullspaceBasis {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

fn to_faer(x: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)])
}

/// Singular values and all `cols(t)` right singular vectors of `t`, with
/// zeros appended to the values when `t` is wide.
fn full_right_svd(t: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let cols = t.ncols();
    let svd = to_faer(t).svd().map_err(|_| Error::EigenNonConvergence)?;
    let s = svd.S().column_vector();
    let sigma = DVector::from_fn(cols, |i, _| if i < s.nrows() { s[i] } else { 0.0 });
    let v = svd.V();
    Ok((sigma, DMatrix::from_fn(cols, cols, |i, j| v[(i, j)])))
}

pub fn nullspace(t: &DMatrix<f64>, rank_tol: f64) -> Result<NullspaceBasis> {
    if !(rank_tol > 0.0) {
        return Err(Error::invalid(format!("rank_tol {rank_tol} must be > 0")));
    }
    let cols = t.ncols();
    if cols == 0 {
        return Err(Error::invalid("operator has no columns"));
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("operator has non-finite entries"));
    }
    let (sigma, v) = full_right_svd(t)?;
    let sigma_max = sigma.iter().copied().fold(0.0, f64::max);
    let cut = rank_tol * sigma_max;
    let null: Vec<usize> = (0..cols).filter(|&i| !(sigma[i] > cut)).collect();
    let mut basis = DMatrix::zeros(cols, null.len());
    for (dst, &src) in null.iter().enumerate() {
        basis.set_column(dst, &v.column(src));
    }
    Ok(NullspaceBasis {
        basis,
        rank_tol,
        rank: cols - null.len(),
        sigma_max,
    })
}

/// Singular values of `x`, descending.
pub fn singular_values(x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let mut s = to_faer(x).singular_values().map_err(|_| Error::EigenNonConvergence)?;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(DVector::from_vec(s))
}

/// Minimum-norm least-squares solution of `x f = y` via the pseudoinverse,
/// discarding singular values at or below `rank_tol * sigma_max`.
pub fn lstsq_min_norm(x: &DMatrix<f64>, y: &DVector<f64>, rank_tol: f64) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            found: y.len(),
        });
    }
    let svd = to_faer(x).thin_svd().map_err(|_| Error::EigenNonConvergence)?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let sigma_max = (0..s.nrows()).map(|k| s[k]).fold(0.0, f64::max);
    let cut = rank_tol * sigma_max;
    let mut f = DVector::zeros(x.ncols());
    for k in 0..s.nrows() {
        if s[k] > cut {
            let coef = (0..x.nrows()).map(|i| u[(i, k)] * y[i]).sum::<f64>() / s[k];
            for j in 0..x.ncols() {
                f[j] += v[(j, k)] * coef;
            }
        }
    }
    Ok(f)
}

/// `A^{-1/2}` for symmetric PSD `A`. Any eigenvalue below the absolute
/// `floor` is reported as [`Error::NearSingularKernel`] instead of being
/// regularized.
pub fn inv_sqrt_psd(a: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    if !(floor > 0.0) {
        return Err(Error::invalid(format!("floor {floor} must be > 0")));
    }
    let eig = sym_eig(a)?;
    inv_sqrt_from_eig(&eig, floor)
}

/// [`inv_sqrt_psd`] with the floor set to `1e-12 * lambda_max`.
pub fn inv_sqrt_psd_default(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = sym_eig(a)?;
    let floor = DEFAULT_INV_SQRT_FLOOR * eig.max().max(f64::MIN_POSITIVE);
    inv_sqrt_from_eig(&eig, floor)
}

pub(crate) fn inv_sqrt_from_eig(eig: &SymEig, floor: f64) -> Result<DMatrix<f64>> {
    let lmax = eig.max();
    let lmin = eig.min();
    if lmin < -1e-10 * lmax.abs() {
        return Err(Error::invalid(format!(
            "matrix is not positive semidefinite (eigenvalue {lmin:e})"
        )));
    }
    if lmin < floor {
        return Err(Error::NearSingularKernel {
            eigenvalue: lmin,
            floor,
        });
    }
    let scaled = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()),
    );
    let v = &eig.eigenvectors;
    let b = v * DMatrix::from_diagonal(&scaled) * v.transpose();
    Ok((&b + b.transpose()) * 0.5)
}

/// Largest eigenvalue of a symmetric matrix (0 for an empty one).
pub fn lambda_max(a: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eig(a)?.max())
}

/// Nonnegative least squares `min |E u - f|` over `u >= 0` by the
/// Lawson-Hanson active-set method. Passive-set subproblems are solved with
/// [`lstsq_min_norm`], so rank-deficient `E` is allowed.
pub fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> Result<DVector<f64>> {
    let (m, n) = e.shape();
    if f.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: f.len() });
    }
    let tol = 10.0 * f64::EPSILON * e.norm().max(f64::MIN_POSITIVE) * (m.max(n) as f64);
    let mut u = DVector::zeros(n);
    let mut passive = vec![false; n];
    let solve_passive = |passive: &[bool]| -> Result<DVector<f64>> {
        let cols: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = lstsq_min_norm(&e.select_columns(&cols), f, DEFAULT_RANK_TOL)?;
        let mut z = DVector::zeros(n);
        for (k, &j) in cols.iter().enumerate() {
            z[j] = sub[k];
        }
        Ok(z)
    };
    // Columns whose entry would immediately leave again; cleared when `u`
    // moves.
    let mut blocked = vec![false; n];
    for _ in 0..30 * n.max(1) {
        let w = e.transpose() * (f - e * &u);
        let entering = (0..n)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(t) = entering else {
            return Ok(u);
        };
        passive[t] = true;
        let mut z = solve_passive(&passive)?;
        if z[t] <= tol {
            passive[t] = false;
            blocked[t] = true;
            continue;
        }
        while (0..n).any(|j| passive[j] && z[j] <= tol) {
            let step = (0..n)
                .filter(|&j| passive[j] && z[j] <= tol)
                .map(|j| u[j] / (u[j] - z[j]))
                .fold(f64::INFINITY, f64::min);
            u += (&z - &u) * step;
            for j in 0..n {
                if passive[j] && u[j] <= tol {
                    passive[j] = false;
                    u[j] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                z = DVector::zeros(n);
                break;
            }
            z = solve_passive(&passive)?;
        }
        u = z;
        blocked.iter_mut().for_each(|b| *b = false);
    }
    Err(Error::EigenNonConvergence)
}
