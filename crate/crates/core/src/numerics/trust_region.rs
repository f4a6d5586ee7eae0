//! Exact maximization of a quadratic over a Euclidean ball.
//!
//! Solves `max { d'Bd + g'd : |d| <= delta }` for symmetric `B` of any
//! inertia. With `B = V diag(mu) V'` and `h = V'g`, a global maximizer
//! satisfies
//!
//! ```text
//! d = (nu I - B)^{-1} g / 2,   nu >= max(mu_max, 0),   nu (delta - |d|) = 0
//! ```
//!
//! so the work reduces to a scalar root of `|d(nu)| = delta` on
//! `(max(mu_max, 0), inf)`, plus the interior case (`B` negative definite
//! with an unconstrained maximizer inside the ball) and the hard case (`g`
//! orthogonal to the top eigenspace).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::linalg::sym_eig;

#[derive(Clone, Debug)]
pub struct TrustRegionMax {
    pub value: f64,
    pub argmax: DVector<f64>,
}

const SECULAR_MAX_ITER: usize = 200;

pub fn trust_region_max(b: &DMatrix<f64>, g: &DVector<f64>, delta: f64) -> Result<TrustRegionMax> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("trust radius {delta} must be > 0")));
    }
    if b.nrows() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: b.nrows(),
            found: g.len(),
        });
    }
    let n = g.len();
    if n == 0 {
        return Ok(TrustRegionMax {
            value: 0.0,
            argmax: DVector::zeros(0),
        });
    }
    let eig = sym_eig(b)?;
    let mu = &eig.eigenvalues;
    let h = eig.eigenvectors.transpose() * g;
    let mu_max = mu[0];
    let mu_scale = mu.amax();
    let g_norm = g.norm();

    let gap_tol = 1e-12 * mu_scale.max(f64::MIN_POSITIVE);
    let g_tol = 1e-13 * (g_norm + mu_scale * delta).max(f64::MIN_POSITIVE);
    let nu_lo = mu_max.max(0.0);

    // Try nu = nu_lo: the interior solution or the hard case.
    let at_lo = |i: usize| nu_lo - mu[i] > gap_tol;
    let singular_ok = (0..n).all(|i| at_lo(i) || h[i].abs() <= g_tol);
    if singular_ok {
        let mut step = DVector::zeros(n);
        for i in 0..n {
            if at_lo(i) {
                step[i] = h[i] / (2.0 * (nu_lo - mu[i]));
            }
        }
        let len = step.norm();
        if len <= delta {
            if nu_lo > 0.0 || mu_max >= -gap_tol {
                // Hard case (or semidefinite top): fill the remaining radius
                // along the top eigenvector; this keeps nu (delta - |d|) = 0.
                let fill = (delta * delta - len * len).max(0.0).sqrt();
                let top = (0..n).find(|&i| !at_lo(i)).unwrap_or(0);
                step[top] += fill;
            }
            return Ok(finish(&eig.eigenvectors, mu, &h, step));
        }
    }

    // Boundary solution: |d(nu)| = delta for nu in (nu_lo, nu_hi].
    let step_len = |nu: f64| -> f64 {
        (0..n)
            .map(|i| {
                let s = h[i] / (2.0 * (nu - mu[i]));
                s * s
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut lo = nu_lo;
    let mut hi = mu_max.max(0.0) + g_norm / (2.0 * delta) + f64::MIN_POSITIVE;
    while step_len(hi) > delta {
        hi = nu_lo + 2.0 * (hi - nu_lo);
    }
    // Newton on psi(nu) = 1/|d(nu)| - 1/delta, which is increasing and close
    // to linear in nu, safeguarded by bisection on [lo, hi].
    let mut nu = hi;
    for _ in 0..SECULAR_MAX_ITER {
        let (mut s2, mut ds2) = (0.0, 0.0);
        for i in 0..n {
            let denom = nu - mu[i];
            let s = h[i] / (2.0 * denom);
            s2 += s * s;
            ds2 += -2.0 * s * s / denom;
        }
        let len = s2.sqrt();
        let psi = 1.0 / len - 1.0 / delta;
        if psi > 0.0 {
            hi = nu;
        } else {
            lo = nu;
        }
        if psi.abs() <= 1e-15 / delta || hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(1e-300) {
            break;
        }
        // d psi / d nu = -(1/2) |d|^{-3} d(|d|^2)/d nu
        let dpsi = -0.5 * ds2 / (len * len * len);
        let newton = nu - psi / dpsi;
        nu = if newton > lo && newton < hi && dpsi.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let mut step = DVector::from_fn(n, |i, _| h[i] / (2.0 * (nu - mu[i])));
    let len = step.norm();
    if len > 0.0 {
        step *= delta / len;
    }
    Ok(finish(&eig.eigenvectors, mu, &h, step))
}

fn finish(v: &DMatrix<f64>, mu: &DVector<f64>, h: &DVector<f64>, step: DVector<f64>) -> TrustRegionMax {
    let value = (0..step.len())
        .map(|i| mu[i] * step[i] * step[i] + h[i] * step[i])
        .sum();
    TrustRegionMax {
        value,
        argmax: v * step,
    }
}
