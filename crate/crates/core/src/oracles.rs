//! Reference solvers used to check the network's firing rates.
//!
//! Each returns an [`OracleResult`] carrying the solution, its objective,
//! and a certificate: a dual point and/or a KKT residual.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::engine::SpikeMode;
use crate::error::{Result, SnnError};
use crate::geometry::{binomial, enumerate_vertices_capped, ENUMERATION_CAP, TOL_SINGULAR};
use crate::linalg::{l1_norm, lstsq, min_singular_value, GramFactor, Matrix, Vector};
use crate::problems::Instance;

pub const ITERATION_CAP: u64 = 10_000_000;
/// Slack for non-negativity of enumerated candidates.
const TOL_CANDIDATE_SIGN: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    ProjectedGradient,
    SupportEnumeration,
    CoordinateDescent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub r_star: Vec<f64>,
    /// Residual norm for NNLS, `||r||_1` for l1, the penalized objective
    /// for Lasso.
    pub opt_value: f64,
    /// `||x - F^T r*||`.
    pub residual: f64,
    pub dual_point: Option<Vec<f64>>,
    /// Optimality residual of the returned point, or for l1 the gap
    /// between `opt_value` and the dual certificate.
    pub kkt_residual: Option<f64>,
    pub tolerance: f64,
    pub method: OracleMethod,
    pub iterations: u64,
}

impl OracleResult {
    pub fn r(&self) -> Vector {
        Vector::from_column_slice(&self.r_star)
    }
}

fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Norm of the projected gradient of `0.5 ||x - F^T r||^2` over `r >= 0`.
fn projected_gradient_norm(r: &Vector, g: &Vector) -> f64 {
    r.iter()
        .zip(g.iter())
        .map(|(&ri, &gi)| if ri > 0.0 { gi } else { gi.min(0.0) })
        .map(|p| p * p)
        .sum::<f64>()
        .sqrt()
}

/// Non-negative least squares by projected gradient descent with step
/// `1 / lambda_max`, started at zero.
pub fn nnls_oracle(inst: &Instance, tol: f64) -> Result<OracleResult> {
    nnls_oracle_capped(inst, tol, ITERATION_CAP)
}

pub fn nnls_oracle_capped(inst: &Instance, tol: f64, cap: u64) -> Result<OracleResult> {
    if !(tol > 0.0) {
        return Err(SnnError::InvalidParams(format!("tol must be > 0, got {tol}")));
    }
    let factor = GramFactor::new(inst.f());
    let n = inst.n();
    let fx = inst.f() * inst.x();
    let mut r = Vector::zeros(n);
    let mut iterations = 0;
    let mut pg;
    match factor.spectral() {
        Err(SnnError::AllZeroMatrix) => pg = 0.0,
        Err(e) => return Err(e),
        Ok(spec) => {
            let gram = factor.gram();
            let step = 1.0 / spec.lambda_max;
            loop {
                let g = gram * &r - &fx;
                pg = projected_gradient_norm(&r, &g);
                if pg <= tol {
                    break;
                }
                if iterations >= cap {
                    return Err(SnnError::IterationCapExceeded(cap));
                }
                r.axpy(-step, &g, 1.0);
                r.apply(|v| *v = v.max(0.0));
                iterations += 1;
            }
        }
    }
    let residual = inst.residual(&r)?.norm();
    Ok(OracleResult {
        r_star: to_vec(&r),
        opt_value: residual,
        residual,
        dual_point: None,
        kkt_residual: Some(pg),
        tolerance: tol,
        method: OracleMethod::ProjectedGradient,
        iterations,
    })
}

/// Minimum l1 norm solution of `F^T r = x` (with `r >= 0` in non-negative
/// mode), by enumerating every support of size at most `m`.
///
/// Equal norms go to the lexicographically smallest support. The dual
/// certificate is the best feasible point among the enumerated vertices of
/// the unit polytope; it is omitted when `F` has rank below `m`.
pub fn l1min_oracle(inst: &Instance, mode: SpikeMode) -> Result<OracleResult> {
    l1min_oracle_capped(inst, mode, ENUMERATION_CAP)
}

pub fn l1min_oracle_capped(inst: &Instance, mode: SpikeMode, cap: u128) -> Result<OracleResult> {
    let (n, m) = (inst.n(), inst.m());
    let f = inst.f();
    let x = inst.x();
    let xnorm = x.norm();
    let factor = GramFactor::new(f);
    let outside = (x - factor.project_rowspace(x)?).norm();
    if outside > 1e-8 * (1.0 + xnorm) {
        return Err(SnnError::Infeasible(outside));
    }
    let required = binomial(n, m).saturating_mul(1u128 << m.min(100));
    if required > cap {
        return Err(SnnError::EnumerationCapExceeded { required, cap });
    }

    let mut best: Option<(f64, Vec<usize>, Vector)> = None;
    if xnorm == 0.0 {
        best = Some((0.0, Vec::new(), Vector::zeros(n)));
    }
    for k in 1..=m.min(n) {
        for support in (0..n).combinations(k) {
            let a = Matrix::from_fn(m, k, |i, j| f[(support[j], i)]);
            if min_singular_value(&a) < TOL_SINGULAR {
                continue;
            }
            let sol = lstsq(&a, x);
            if (x - &a * &sol).norm() > 1e-9 * (1.0 + xnorm) {
                continue;
            }
            if mode == SpikeMode::Nonneg && sol.iter().any(|&s| s < -TOL_CANDIDATE_SIGN) {
                continue;
            }
            let sol = match mode {
                SpikeMode::Nonneg => sol.map(|s| s.max(0.0)),
                SpikeMode::Signed => sol,
            };
            let norm = l1_norm(&sol);
            let better = match &best {
                None => true,
                Some((b, s, _)) => {
                    let tie = 1e-12 * (1.0 + b);
                    norm < b - tie || (norm <= b + tie && support < *s)
                }
            };
            if better {
                let mut r = Vector::zeros(n);
                for (j, &i) in support.iter().enumerate() {
                    r[i] = sol[j];
                }
                best = Some((norm, support, r));
            }
        }
    }
    let Some((opt, _, r)) = best else {
        return Err(SnnError::Infeasible(outside));
    };

    let mut dual_point = None;
    let mut gap = None;
    if factor.rank() == m {
        let verts = enumerate_vertices_capped(f, 1.0, cap)?;
        let feasible = |v: &Vector| {
            let fv = f * v;
            match mode {
                SpikeMode::Nonneg => fv.max() <= 1.0 + 1e-9,
                SpikeMode::Signed => fv.amax() <= 1.0 + 1e-9,
            }
        };
        let cert = verts
            .vertices
            .iter()
            .filter(|v| feasible(v))
            .map(|v| (x.dot(v), v))
            .fold(None::<(f64, &Vector)>, |acc, c| match acc {
                Some(a) if a.0 >= c.0 => Some(a),
                _ => Some(c),
            });
        if let Some((value, v)) = cert {
            dual_point = Some(to_vec(v));
            gap = Some((opt - value).abs());
        }
    }
    Ok(OracleResult {
        residual: inst.residual(&r)?.norm(),
        r_star: to_vec(&r),
        opt_value: opt,
        dual_point,
        kkt_residual: gap,
        tolerance: 1e-8 * (1.0 + opt),
        method: OracleMethod::SupportEnumeration,
        iterations: 0,
    })
}

/// KKT residual of `0.5 ||x - F^T r||^2 + beta ||r||_1` over `r >= 0`.
pub fn lasso_kkt_residual(inst: &Instance, beta: f64, r: &Vector) -> Result<f64> {
    let res = inst.residual(r)?;
    let g = (inst.f() * res).map(|c| beta - c);
    Ok(r.iter()
        .zip(g.iter())
        .map(|(&ri, &gi)| if ri > 0.0 { gi.abs() } else { (-gi).max(0.0) })
        .fold(0.0, f64::max))
}

/// Non-negative Lasso by cyclic coordinate descent, started at zero, until
/// no coordinate moves by more than `tol` in a sweep.
pub fn lasso_oracle(inst: &Instance, beta: f64, tol: f64) -> Result<OracleResult> {
    lasso_oracle_capped(inst, beta, tol, ITERATION_CAP)
}

pub fn lasso_oracle_capped(inst: &Instance, beta: f64, tol: f64, cap: u64) -> Result<OracleResult> {
    if !(beta > 0.0) {
        return Err(SnnError::InvalidParams(format!("beta must be > 0, got {beta}")));
    }
    if !(tol > 0.0) {
        return Err(SnnError::InvalidParams(format!("tol must be > 0, got {tol}")));
    }
    let f = inst.f();
    let n = inst.n();
    let sq: Vec<f64> = f.row_iter().map(|row| row.norm_squared()).collect();
    let mut r = Vector::zeros(n);
    let mut res = inst.x().clone();
    let mut sweeps = 0;
    loop {
        if sweeps >= cap {
            return Err(SnnError::IterationCapExceeded(cap));
        }
        sweeps += 1;
        let mut moved: f64 = 0.0;
        for i in 0..n {
            if sq[i] == 0.0 {
                continue;
            }
            let row = f.row(i).transpose();
            let next = (r[i] + (row.dot(&res) - beta) / sq[i]).max(0.0);
            let delta = next - r[i];
            if delta != 0.0 {
                res.axpy(-delta, &row, 1.0);
                r[i] = next;
                moved = moved.max(delta.abs());
            }
        }
        if moved <= tol {
            break;
        }
    }
    let res = inst.residual(&r)?;
    let opt = 0.5 * res.norm_squared() + beta * l1_norm(&r);
    Ok(OracleResult {
        r_star: to_vec(&r),
        opt_value: opt,
        residual: res.norm(),
        dual_point: Some(to_vec(&(&res / beta))),
        kkt_residual: Some(lasso_kkt_residual(inst, beta, &r)?),
        tolerance: tol,
        method: OracleMethod::CoordinateDescent,
        iterations: sweeps,
    })
}

/// `(FF^T)^+ F x`: the minimum-norm least-squares rate, with
/// `F^T r = x_F`.
pub fn least_squares_min_norm(inst: &Instance) -> Vector {
    let factor = GramFactor::new(inst.f());
    factor.pinv() * (inst.f() * inst.x())
}
