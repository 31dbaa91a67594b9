//! Dense linear algebra around the Gram matrix `FF^T`.
//!
//! `F` is always `n x m`: one row per neuron, one column per signal
//! dimension. Every factorization goes through a symmetric
//! eigendecomposition, so results are deterministic for a given input.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnnError};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigenvalues below `TOL_RANK * lambda_max` are treated as zero.
pub const TOL_RANK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralData {
    /// Smallest nonzero eigenvalue of `FF^T`.
    pub lambda_min_nz: f64,
    pub lambda_max: f64,
    /// `lambda_max / lambda_min_nz`.
    pub kappa: f64,
    pub rank: usize,
}

pub(crate) fn check_len(what: &'static str, v: &Vector, expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(SnnError::DimensionMismatch {
            what,
            expected,
            found: v.len(),
        });
    }
    Ok(())
}

/// Cached spectral factorization of `FF^T` (and `F^T F` for row-space work).
///
/// Everything the engine probes every step (`(FF^T)^+` norms, row-space
/// projection) reuses this instead of refactoring.
#[derive(Debug, Clone)]
pub struct GramFactor {
    f: Matrix,
    gram: Matrix,
    /// Eigenpairs of `FF^T` that survive the rank threshold.
    range_vecs: Matrix,
    range_vals: Vector,
    /// Orthonormal basis of the row space of `F` (columns, `m x rank`).
    row_basis: Matrix,
    lambda_max: f64,
}

fn sorted_eigen(sym: Matrix) -> (Vector, Matrix) {
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = Vector::from_iterator(order.len(), order.iter().map(|&i| eig.eigenvalues[i]));
    let vecs = Matrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (vals, vecs)
}

impl GramFactor {
    pub fn new(f: &Matrix) -> Self {
        let gram = f * f.transpose();
        let (vals, vecs) = sorted_eigen(gram.clone());
        let lambda_max = vals.iter().copied().fold(0.0, f64::max);
        let cut = TOL_RANK * lambda_max;
        let keep: Vec<usize> = (0..vals.len())
            .filter(|&i| lambda_max > 0.0 && vals[i] > cut)
            .collect();
        let range_vals = Vector::from_iterator(keep.len(), keep.iter().map(|&i| vals[i]));
        let range_vecs = select_columns(&vecs, &keep, f.nrows());

        let (cvals, cvecs) = sorted_eigen(f.transpose() * f);
        let ckeep: Vec<usize> = (0..cvals.len())
            .filter(|&i| lambda_max > 0.0 && cvals[i] > cut)
            .collect();
        let row_basis = select_columns(&cvecs, &ckeep, f.ncols());

        Self {
            f: f.clone(),
            gram,
            range_vecs,
            range_vals,
            row_basis,
            lambda_max,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.f
    }

    /// `FF^T`.
    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn rank(&self) -> usize {
        self.range_vals.len()
    }

    pub fn spectral(&self) -> Result<SpectralData> {
        if self.range_vals.is_empty() || self.lambda_max <= 0.0 {
            return Err(SnnError::AllZeroMatrix);
        }
        let lambda_min_nz = self.range_vals[self.range_vals.len() - 1];
        Ok(SpectralData {
            lambda_min_nz,
            lambda_max: self.lambda_max,
            kappa: self.lambda_max / lambda_min_nz,
            rank: self.rank(),
        })
    }

    /// Moore-Penrose pseudo-inverse of `FF^T`.
    pub fn pinv(&self) -> Matrix {
        let n = self.f.nrows();
        let mut p = Matrix::zeros(n, n);
        for (k, &lam) in self.range_vals.iter().enumerate() {
            let q = self.range_vecs.column(k);
            p += (q * q.transpose()) / lam;
        }
        p
    }

    /// `||F^T r||_2`, evaluated through the quadratic form `r^T FF^T r`.
    pub fn gram_norm(&self, r: &Vector) -> Result<f64> {
        check_len("r", r, self.f.nrows())?;
        Ok(r.dot(&(&self.gram * r)).max(0.0).sqrt())
    }

    /// `sqrt(w^T (FF^T)^+ w)`.
    pub fn pinv_gram_norm(&self, w: &Vector) -> Result<f64> {
        check_len("w", w, self.f.nrows())?;
        let coords = self.range_vecs.transpose() * w;
        Ok(coords
            .iter()
            .zip(self.range_vals.iter())
            .map(|(c, lam)| c * c / lam)
            .sum::<f64>()
            .sqrt())
    }

    /// Orthogonal projection of `x` onto the row space of `F`.
    pub fn project_rowspace(&self, x: &Vector) -> Result<Vector> {
        check_len("x", x, self.f.ncols())?;
        Ok(&self.row_basis * (self.row_basis.transpose() * x))
    }
}

fn select_columns(vecs: &Matrix, keep: &[usize], rows: usize) -> Matrix {
    if keep.is_empty() {
        return Matrix::zeros(rows, 0);
    }
    Matrix::from_columns(
        &keep
            .iter()
            .map(|&i| vecs.column(i).into_owned())
            .collect::<Vec<_>>(),
    )
}

pub fn spectral(f: &Matrix) -> Result<SpectralData> {
    GramFactor::new(f).spectral()
}

pub fn project_rowspace(f: &Matrix, x: &Vector) -> Result<Vector> {
    GramFactor::new(f).project_rowspace(x)
}

pub fn gram_norm(f: &Matrix, r: &Vector) -> Result<f64> {
    GramFactor::new(f).gram_norm(r)
}

pub fn pinv_gram_norm(f: &Matrix, w: &Vector) -> Result<f64> {
    GramFactor::new(f).pinv_gram_norm(w)
}

/// `||x - F^T r||_2`.
pub fn residual_l2(f: &Matrix, x: &Vector, r: &Vector) -> Result<f64> {
    check_len("x", x, f.ncols())?;
    check_len("r", r, f.nrows())?;
    Ok((x - f.transpose() * r).norm())
}

/// Smallest singular value, used as the degeneracy test for square and
/// tall subsystems.
pub(crate) fn min_singular_value(a: &Matrix) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Least-squares solve of `a c = b` through the SVD.
pub(crate) fn lstsq(a: &Matrix, b: &Vector) -> Vector {
    if a.ncols() == 0 {
        return Vector::zeros(0);
    }
    a.clone()
        .svd(true, true)
        .solve(b, 1e-14)
        .unwrap_or_else(|_| Vector::zeros(a.ncols()))
}

/// Matrix whose rows are the given rows of `f`.
pub(crate) fn rows_of(f: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), f.ncols(), |i, j| f[(rows[i], j)])
}

pub fn l1_norm(v: &Vector) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}
