//! The three convex programs the network solves, their duals, and
//! evaluators for objectives, feasibility and duality gaps.
//!
//! Primal programs over `r in R^n`:
//!
//! * NNLS: `min 1/2 ||x - F^T r||^2` s.t. `r >= 0`
//! * l1 minimization: `min ||r||_1` s.t. `F^T r = x` (optionally `r >= 0`)
//! * non-negative Lasso: `min 1/2 ||x - F^T r||^2 + beta ||r||_1` s.t. `r >= 0`
//!
//! The l1 and Lasso duals share the polytope `{u : F u <= 1}` (two-sided for
//! the signed l1 variant). Dual points produced by a network with threshold
//! `eta` are evaluated at `u / eta`.

use serde::{Deserialize, Serialize};

use crate::engine::SpikeMode;
use crate::error::{Result, SnnError};
use crate::linalg::{check_len, l1_norm, Matrix, Vector};

/// Entries above `-NEG_TOL` count as non-negative (and are clamped to 0).
pub const NEG_TOL: f64 = 1e-12;
/// Slack accepted on dual feasibility.
pub const TOL_FEAS: f64 = 1e-8;

/// The pair `(F, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    f: Matrix,
    x: Vector,
}

impl Instance {
    pub fn new(f: Matrix, x: Vector) -> Result<Self> {
        if f.nrows() == 0 || f.ncols() == 0 {
            return Err(SnnError::Empty);
        }
        check_len("x", &x, f.ncols())?;
        if f.iter().any(|v| !v.is_finite()) {
            return Err(SnnError::NonFinite("F"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SnnError::NonFinite("x"));
        }
        Ok(Self { f, x })
    }

    pub fn from_rows(rows: &[Vec<f64>], x: &[f64]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(SnnError::Empty);
        }
        let m = rows[0].len();
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(SnnError::DimensionMismatch {
                what: "row of F",
                expected: m,
                found: bad.len(),
            });
        }
        let f = Matrix::from_row_iterator(n, m, rows.iter().flatten().copied());
        Self::new(f, Vector::from_column_slice(x))
    }

    pub fn f(&self) -> &Matrix {
        &self.f
    }

    pub fn x(&self) -> &Vector {
        &self.x
    }

    /// Number of neurons (rows of `F`).
    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    /// Signal dimension (columns of `F`).
    pub fn m(&self) -> usize {
        self.f.ncols()
    }

    /// `x - F^T r`.
    pub fn residual(&self, r: &Vector) -> Result<Vector> {
        check_len("r", r, self.n())?;
        Ok(&self.x - self.f.transpose() * r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    Nnls,
    L1MinNonneg,
    L1MinSigned,
    LassoNonneg { beta: f64 },
}

impl ProblemKind {
    pub fn lasso(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(SnnError::InvalidParams(format!("beta must be > 0, got {beta}")));
        }
        Ok(Self::LassoNonneg { beta })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Nnls => "nnls",
            Self::L1MinNonneg => "l1",
            Self::L1MinSigned => "l1signed",
            Self::LassoNonneg { .. } => "lasso",
        }
    }

    pub fn is_nonneg(&self) -> bool {
        !matches!(self, Self::L1MinSigned)
    }

    pub fn is_l1(&self) -> bool {
        matches!(self, Self::L1MinNonneg | Self::L1MinSigned)
    }

    /// Spike mode whose walls match this program's dual polytope.
    pub fn spike_mode(&self) -> SpikeMode {
        match self {
            Self::L1MinSigned => SpikeMode::Signed,
            _ => SpikeMode::Nonneg,
        }
    }
}

fn clamp_nonneg(kind: ProblemKind, r: &Vector) -> Result<Vector> {
    if !kind.is_nonneg() {
        return Ok(r.clone());
    }
    if let Some((index, &value)) = r.iter().enumerate().find(|(_, &v)| v < -NEG_TOL) {
        return Err(SnnError::NegativeEntry { index, value });
    }
    Ok(r.map(|v| v.max(0.0)))
}

/// Primal objective. l1 kinds return `||r||_1` only; feasibility of
/// `F^T r = x` is checked by [`duality_gap`].
pub fn objective(kind: ProblemKind, inst: &Instance, r: &Vector) -> Result<f64> {
    check_len("r", r, inst.n())?;
    let r = clamp_nonneg(kind, r)?;
    let half_sq = || -> Result<f64> { Ok(0.5 * inst.residual(&r)?.norm_squared()) };
    match kind {
        ProblemKind::Nnls => half_sq(),
        ProblemKind::L1MinNonneg | ProblemKind::L1MinSigned => Ok(l1_norm(&r)),
        ProblemKind::LassoNonneg { beta } => Ok(half_sq()? + beta * l1_norm(&r)),
    }
}

/// `E(r) = r^T FF^T r - 2 r^T F x`, which equals `||x - F^T r||^2 - ||x||^2`.
pub fn energy(inst: &Instance, r: &Vector) -> Result<f64> {
    check_len("r", r, inst.n())?;
    let ftr = inst.f().transpose() * r;
    Ok(ftr.norm_squared() - 2.0 * ftr.dot(inst.x()))
}

/// Dual objective at a point `u` of the unit polytope.
pub fn dual_objective(kind: ProblemKind, inst: &Instance, u: &Vector) -> Result<f64> {
    check_len("u", u, inst.m())?;
    let x = inst.x();
    match kind {
        ProblemKind::Nnls => Err(SnnError::UnsupportedKind("nnls")),
        ProblemKind::L1MinNonneg | ProblemKind::L1MinSigned => Ok(x.dot(u)),
        ProblemKind::LassoNonneg { beta } => {
            Ok(0.5 * x.norm_squared() - 0.5 * (x - u * beta).norm_squared())
        }
    }
}

/// How far `u` sits outside the polytope `{F u <= eta}` (or `{|F u| <= eta}`).
pub fn dual_feasibility_violation(
    inst: &Instance,
    u: &Vector,
    eta: f64,
    mode: SpikeMode,
) -> Result<f64> {
    check_len("u", u, inst.m())?;
    let fu = inst.f() * u;
    let worst = match mode {
        SpikeMode::Nonneg => fu.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        SpikeMode::Signed => fu.iter().fold(f64::NEG_INFINITY, |a, v| a.max(v.abs())),
    };
    Ok((worst - eta).max(0.0))
}

/// `objective(r) - dual_objective(u / eta)`; weak duality makes this
/// non-negative for feasible pairs.
pub fn duality_gap(
    kind: ProblemKind,
    inst: &Instance,
    r: &Vector,
    u: &Vector,
    eta: f64,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(SnnError::InvalidParams("eta must be > 0".into()));
    }
    let violation = dual_feasibility_violation(inst, u, eta, kind.spike_mode())?;
    if violation > TOL_FEAS {
        return Err(SnnError::InfeasibleDualPoint { violation });
    }
    if kind.is_nonneg() {
        if let Some((i, v)) = r.iter().enumerate().find(|(_, &v)| v < -NEG_TOL) {
            return Err(SnnError::InfeasiblePrimalPoint(format!("r[{i}] = {v:e} < 0")));
        }
    }
    if kind.is_l1() {
        let res = inst.residual(r)?.norm();
        if res > TOL_FEAS * (1.0 + inst.x().norm()) {
            return Err(SnnError::InfeasiblePrimalPoint(format!(
                "||x - F^T r|| = {res:e}"
            )));
        }
    }
    let primal = objective(kind, inst, r)?;
    let dual = dual_objective(kind, inst, &(u / eta))?;
    Ok(primal - dual)
}

/// A candidate solution together with its evaluated quality measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub r: Vec<f64>,
    pub residual: f64,
    pub l1_norm: f64,
    /// `None` when `r` is outside the program's domain (negative entries
    /// for a non-negative kind).
    pub objective: Option<f64>,
    pub dual_point: Option<Vec<f64>>,
    pub duality_gap: Option<f64>,
}

impl SolveResult {
    pub fn evaluate(
        kind: ProblemKind,
        inst: &Instance,
        r: &Vector,
        dual: Option<(&Vector, f64)>,
    ) -> Result<Self> {
        let residual = inst.residual(r)?.norm();
        let objective = match objective(kind, inst, r) {
            Ok(v) => Some(v),
            Err(SnnError::NegativeEntry { .. }) => None,
            Err(e) => return Err(e),
        };
        let (dual_point, duality_gap) = match dual {
            Some((u, eta)) if kind != ProblemKind::Nnls => (
                Some((u / eta).iter().copied().collect()),
                duality_gap(kind, inst, r, u, eta).ok(),
            ),
            _ => (None, None),
        };
        Ok(Self {
            r: r.iter().copied().collect(),
            residual,
            l1_norm: l1_norm(r),
            objective,
            dual_point,
            duality_gap,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ident(x: &[f64]) -> Instance {
        Instance::new(Matrix::identity(2, 2), Vector::from_column_slice(x)).unwrap()
    }

    fn three_neuron() -> Instance {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Instance::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![h, h]], &[1.0, 2.0]).unwrap()
    }

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn instance_validation() {
        assert!(matches!(
            Instance::new(Matrix::zeros(0, 2), Vector::zeros(2)),
            Err(SnnError::Empty)
        ));
        assert!(matches!(
            Instance::new(Matrix::identity(2, 2), Vector::zeros(3)),
            Err(SnnError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            Instance::new(Matrix::identity(2, 2), v(&[f64::NAN, 0.0])),
            Err(SnnError::NonFinite("x"))
        ));
    }

    #[test]
    fn objective_examples() {
        let inst = ident(&[1.0, 2.0]);
        assert_eq!(objective(ProblemKind::Nnls, &inst, &Vector::zeros(2)).unwrap(), 2.5);
        let lasso = ProblemKind::lasso(0.5).unwrap();
        let got = objective(lasso, &inst, &v(&[0.5, 1.5])).unwrap();
        assert!((got - 1.25).abs() < 1e-15);
        let s2 = 2f64.sqrt();
        let got = objective(ProblemKind::L1MinNonneg, &three_neuron(), &v(&[0.0, 1.0, s2])).unwrap();
        assert!((got - (1.0 + s2)).abs() < 1e-15);
    }

    #[test]
    fn objective_rejects_negative_entries() {
        let inst = ident(&[1.0, 2.0]);
        assert!(matches!(
            objective(ProblemKind::Nnls, &inst, &v(&[-1e-6, 0.0])),
            Err(SnnError::NegativeEntry { index: 0, .. })
        ));
        // within tolerance: clamped
        assert_eq!(objective(ProblemKind::L1MinNonneg, &inst, &v(&[-1e-13, 1.0])).unwrap(), 1.0);
        // signed kind accepts negatives
        assert_eq!(objective(ProblemKind::L1MinSigned, &inst, &v(&[-1.0, 1.0])).unwrap(), 2.0);
        assert!(ProblemKind::lasso(0.0).is_err());
    }

    #[test]
    fn energy_examples() {
        let inst = ident(&[1.0, 2.0]);
        assert_eq!(energy(&inst, &Vector::zeros(2)).unwrap(), 0.0);
        assert!((energy(&inst, &v(&[1.0, 2.0])).unwrap() + 5.0).abs() < 1e-14);
        let s2 = 2f64.sqrt();
        let e = energy(&three_neuron(), &v(&[0.0, 1.0, s2])).unwrap();
        assert!((e + 5.0).abs() < 1e-12);
    }

    #[test]
    fn dual_objective_examples() {
        let inst = ident(&[1.0, 2.0]);
        assert_eq!(dual_objective(ProblemKind::L1MinNonneg, &inst, &Vector::zeros(2)).unwrap(), 0.0);
        let lasso = ProblemKind::lasso(0.5).unwrap();
        let u = inst.x() / 0.5;
        assert!((dual_objective(lasso, &inst, &u).unwrap() - 2.5).abs() < 1e-14);
        assert_eq!(dual_objective(ProblemKind::L1MinNonneg, &inst, &v(&[1.0, 1.0])).unwrap(), 3.0);
        assert!(matches!(
            dual_objective(ProblemKind::Nnls, &inst, &v(&[1.0, 1.0])),
            Err(SnnError::UnsupportedKind(_))
        ));
    }

    #[test]
    fn feasibility_examples() {
        let inst = ident(&[1.0, 2.0]);
        let viol = |u: &[f64], mode| dual_feasibility_violation(&inst, &v(u), 1.0, mode).unwrap();
        assert_eq!(viol(&[0.0, 0.0], SpikeMode::Signed), 0.0);
        assert!((viol(&[1.5, 0.2], SpikeMode::Nonneg) - 0.5).abs() < 1e-15);
        assert!((viol(&[-1.5, 0.2], SpikeMode::Signed) - 0.5).abs() < 1e-15);
        assert_eq!(viol(&[-1.5, 0.2], SpikeMode::Nonneg), 0.0);
    }

    #[test]
    fn duality_gap_examples() {
        let inst = ident(&[1.0, 2.0]);
        let gap = duality_gap(ProblemKind::L1MinNonneg, &inst, &v(&[1.0, 2.0]), &v(&[1.0, 1.0]), 1.0);
        assert_eq!(gap.unwrap(), 0.0);
        let gap = duality_gap(ProblemKind::L1MinNonneg, &inst, &v(&[1.0, 2.0]), &Vector::zeros(2), 1.0);
        assert_eq!(gap.unwrap(), 3.0);
        assert!(matches!(
            duality_gap(ProblemKind::L1MinNonneg, &inst, &v(&[1.0, 2.0]), &v(&[2.0, 0.0]), 1.0),
            Err(SnnError::InfeasibleDualPoint { .. })
        ));
        assert!(matches!(
            duality_gap(ProblemKind::L1MinNonneg, &inst, &v(&[1.0, 1.0]), &v(&[0.0, 0.0]), 1.0),
            Err(SnnError::InfeasiblePrimalPoint(_))
        ));
        // eta scaling: u = (2, 2) at eta = 2 is the same dual point as (1, 1).
        let gap = duality_gap(ProblemKind::L1MinNonneg, &inst, &v(&[1.0, 2.0]), &v(&[2.0, 2.0]), 2.0);
        assert_eq!(gap.unwrap(), 0.0);
    }

    fn small_instance() -> impl Strategy<Value = (Instance, Vec<f64>, Vec<f64>)> {
        (1usize..6, 1usize..4).prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec(-2.0f64..2.0, n * m),
                proptest::collection::vec(-2.0f64..2.0, m),
                proptest::collection::vec(0.0f64..2.0, n),
                proptest::collection::vec(-2.0f64..2.0, m),
            )
                .prop_map(move |(fe, x, r, u)| {
                    let inst = Instance::new(Matrix::from_row_slice(n, m, &fe), Vector::from_vec(x)).unwrap();
                    (inst, r, u)
                })
        })
    }

    proptest! {
        #[test]
        fn energy_is_shifted_squared_residual((inst, r, _) in small_instance()) {
            let r = Vector::from_vec(r);
            let e = energy(&inst, &r).unwrap();
            let alt = inst.residual(&r).unwrap().norm_squared() - inst.x().norm_squared();
            prop_assert!((e - alt).abs() <= 1e-10 * (1.0 + e.abs().max(alt.abs())));
        }

        #[test]
        fn weak_duality_on_random_feasible_pairs((inst, r, u) in small_instance(), beta in 0.01f64..2.0) {
            let r = Vector::from_vec(r);
            let mut u = Vector::from_vec(u);
            // scale u into the two-sided polytope, which is inside both polytopes
            let worst = (inst.f() * &u).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if worst > 1.0 { u /= worst; }
            // l1: make r primal-feasible by construction
            let l1_inst = Instance::new(inst.f().clone(), inst.f().transpose() * &r).unwrap();
            for kind in [ProblemKind::L1MinNonneg, ProblemKind::L1MinSigned, ProblemKind::lasso(beta).unwrap()] {
                let target = if kind.is_l1() { &l1_inst } else { &inst };
                let gap = duality_gap(kind, target, &r, &u, 1.0).unwrap();
                let obj = objective(kind, target, &r).unwrap();
                prop_assert!(gap >= -1e-8 * (1.0 + obj.abs()), "{kind:?}: gap {gap}");
            }
        }

        #[test]
        fn lasso_with_vanishing_beta_is_nnls((inst, r, _) in small_instance()) {
            let r = Vector::from_vec(r);
            let a = objective(ProblemKind::lasso(1e-12).unwrap(), &inst, &r).unwrap();
            let b = objective(ProblemKind::Nnls, &inst, &r).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }
}
