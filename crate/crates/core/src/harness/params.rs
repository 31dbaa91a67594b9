use serde::{Deserialize, Serialize};

use crate::engine::{Cascade, SnnParams, SpikeMode};
use crate::error::{Result, SnnError};
use crate::geometry::{niceness, NicenessReport};
use crate::linalg::{GramFactor, SpectralData};
use crate::oracles::l1min_oracle;
use crate::problems::{Instance, ProblemKind};

/// Parameters chosen by [`auto_params_detailed`] together with the
/// quantities they were derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoParams {
    pub params: SnnParams,
    pub spectral: SpectralData,
    /// `||x_F||`.
    pub x_f_norm: f64,
    /// `sqrt(lambda_min) / (24 sqrt(n) ||x_F||)`.
    pub dt_bound: f64,
    pub niceness: Option<NicenessReport>,
    pub tau_cpl: Option<f64>,
    /// Minimum l1 norm, for l1 kinds.
    pub opt: Option<f64>,
    /// Planned run length in time units; `params.t_max` is this over `dt`.
    pub horizon: f64,
}

/// Continuous-time horizon for a kind.
///
/// * NNLS: the time at which `2 sqrt(kappa eta n) / t` reaches `0.05`.
/// * l1: `m^2 n ||x||^2 / (eps^2 lambda_min OPT)` with `eps = 0.1`.
/// * Lasso: `100 / beta`.
pub fn horizon_time(
    kind: ProblemKind,
    inst: &Instance,
    spectral: &SpectralData,
    eta: f64,
    opt: Option<f64>,
) -> Result<f64> {
    let (n, m) = (inst.n() as f64, inst.m() as f64);
    match kind {
        ProblemKind::Nnls => Ok(40.0 * (spectral.kappa * eta * n).sqrt()),
        ProblemKind::L1MinNonneg | ProblemKind::L1MinSigned => {
            let opt = opt.ok_or_else(|| SnnError::InvalidParams("l1 horizon needs OPT".into()))?;
            if !(opt > 0.0) {
                return Err(SnnError::ZeroSignal);
            }
            let eps = 0.1;
            Ok(m * m * n * inst.x().norm_squared() / (eps * eps * spectral.lambda_min_nz * opt))
        }
        ProblemKind::LassoNonneg { beta } => Ok(100.0 / beta),
    }
}

fn steps_for(horizon: f64, dt: f64) -> u64 {
    // Saturating float-to-int conversion.
    ((horizon / dt).ceil() as u64).max(1)
}

/// Parameters satisfying the convergence preconditions for the kind.
pub fn auto_params(inst: &Instance, kind: ProblemKind) -> Result<SnnParams> {
    Ok(auto_params_detailed(inst, kind)?.params)
}

pub fn auto_params_detailed(inst: &Instance, kind: ProblemKind) -> Result<AutoParams> {
    let factor = GramFactor::new(inst.f());
    let spectral = factor.spectral()?;
    let x_f_norm = factor.project_rowspace(inst.x())?.norm();
    if x_f_norm == 0.0 {
        return Err(SnnError::ZeroSignal);
    }
    let n = inst.n() as f64;
    let m = inst.m() as f64;
    let dt = spectral.lambda_min_nz.sqrt() / (24.0 * n.sqrt() * x_f_norm);

    let (params, nice, tau_cpl, opt) = match kind {
        ProblemKind::Nnls => {
            let p = SnnParams {
                tau: 0.0,
                alpha: 1.0,
                eta: spectral.lambda_max,
                dt,
                mode: SpikeMode::Signed,
                cascade: Cascade::Exhaustive,
                t_max: 1,
            };
            (p, None, None, None)
        }
        ProblemKind::L1MinNonneg | ProblemKind::L1MinSigned | ProblemKind::LassoNonneg { .. } => {
            let rep = niceness(inst.f())?;
            if !rep.is_nice() {
                return Err(SnnError::GammaZero);
            }
            let g = rep.gamma;
            let tau_cpl = g / (10.0 * n * n * spectral.lambda_max.powi(2));
            let alpha = (tau_cpl / m).min(tau_cpl * tau_cpl * g.powi(3)) / 2.0;
            let tau = match kind {
                ProblemKind::LassoNonneg { beta } => beta,
                _ => 0.0,
            };
            let opt = if kind.is_l1() {
                Some(l1min_oracle(inst, kind.spike_mode())?.opt_value)
            } else {
                None
            };
            let p = SnnParams {
                tau,
                alpha,
                eta: 1.0,
                dt,
                mode: kind.spike_mode(),
                cascade: Cascade::Exhaustive,
                t_max: 1,
            };
            (p, Some(rep), Some(tau_cpl), opt)
        }
    };
    let horizon = horizon_time(kind, inst, &spectral, params.eta, opt)?;
    let params = SnnParams { t_max: steps_for(horizon, dt), ..params };
    Ok(AutoParams {
        params,
        spectral,
        x_f_norm,
        dt_bound: dt,
        niceness: nice,
        tau_cpl,
        opt,
        horizon,
    })
}
