//! Reproducing kernels and Gram matrices.
//!
//! `K(x, y) = <phi_x, phi_y>` for the embedding `x -> phi_x` of the kernel's
//! Hilbert space. All three kinds are positive semidefinite, and the
//! gaussian kernel is strictly positive definite on distinct points.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::Point;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `<a, b>`
    Linear,
    /// `(<a, b> + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
    /// `exp(-gamma |a - b|^2)`
    Gaussian { gamma: f64 },
}

impl KernelSpec {
    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        let k = KernelSpec::Polynomial { degree, offset };
        k.validate()?;
        Ok(k)
    }

    pub fn gaussian(gamma: f64) -> Result<Self> {
        let k = KernelSpec::Gaussian { gamma };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Polynomial { degree, offset } => {
                if degree < 1 {
                    Err(Error::invalid("polynomial degree must be at least 1"))
                } else if !(offset >= 0.0 && offset.is_finite()) {
                    Err(Error::invalid(format!("polynomial offset {offset} must be >= 0")))
                } else {
                    Ok(())
                }
            }
            KernelSpec::Gaussian { gamma } => {
                if gamma > 0.0 && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("gaussian gamma {gamma} must be > 0")))
                }
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "polynomial",
            KernelSpec::Gaussian { .. } => "gaussian",
        }
    }

    /// Kernel value without the dimension check.
    pub(crate) fn apply(&self, a: &Point, b: &Point) -> f64 {
        match *self {
            KernelSpec::Linear => a.dot(b),
            KernelSpec::Polynomial { degree, offset } => (a.dot(b) + offset).powi(degree as i32),
            KernelSpec::Gaussian { gamma } => (-gamma * a.dist_sq(b)).exp(),
        }
    }
}

pub fn kernel_eval(k: &KernelSpec, a: &Point, b: &Point) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(k.apply(a, b))
}

/// Kernel matrix between two point lists, keeping the generating points.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    pub entries: DMatrix<f64>,
    pub row_points: Vec<Point>,
    pub col_points: Vec<Point>,
}

impl GramMatrix {
    pub fn nrows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.entries.ncols()
    }
}

pub fn gram(k: &KernelSpec, rows: &[Point], cols: &[Point]) -> Result<GramMatrix> {
    Ok(GramMatrix {
        entries: gram_matrix(k, rows, cols)?,
        row_points: rows.to_vec(),
        col_points: cols.to_vec(),
    })
}

/// Entries of [`gram`] only. Self-Grams are filled symmetrically so that
/// transposition is exact.
pub fn gram_matrix(k: &KernelSpec, rows: &[Point], cols: &[Point]) -> Result<DMatrix<f64>> {
    let dim = rows.first().or(cols.first()).map(Point::dim).unwrap_or(0);
    if let Some(p) = rows.iter().chain(cols).find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: p.dim(),
        });
    }
    let same = rows.len() == cols.len() && rows.iter().zip(cols).all(|(a, b)| a == b);
    let mut m = DMatrix::zeros(rows.len(), cols.len());
    if same {
        for i in 0..rows.len() {
            for j in 0..=i {
                let v = k.apply(&rows[i], &rows[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    } else {
        for (i, a) in rows.iter().enumerate() {
            for (j, b) in cols.iter().enumerate() {
                m[(i, j)] = k.apply(a, b);
            }
        }
    }
    Ok(m)
}

/// Kernel values `K(x, p)` for every anchor `p`.
pub fn cross_vector(k: &KernelSpec, anchors: &[Point], x: &Point) -> Result<DVector<f64>> {
    if let Some(p) = anchors.iter().find(|p| p.dim() != x.dim()) {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: p.dim(),
        });
    }
    Ok(DVector::from_iterator(
        anchors.len(),
        anchors.iter().map(|p| k.apply(p, x)),
    ))
}
