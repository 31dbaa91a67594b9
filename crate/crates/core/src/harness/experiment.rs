use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{Cascade, Network, SnnParams, SpikeMode};
use crate::error::{Result, SnnError};
use crate::io::{read_instance, write_instance, Provenance};
use crate::linalg::{project_rowspace, Vector};
use crate::oracles::{l1min_oracle, lasso_oracle, nnls_oracle, OracleMethod, OracleResult};
use crate::problems::{Instance, ProblemKind};
use crate::trace::Trace;

use super::params::{auto_params_detailed, AutoParams};
use super::rsm::{gen_instance, XMode};
use super::verify::{verify, VerificationReport};

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    File(PathBuf),
    Rsm { n: usize, m: usize, seed: u64, x_mode: XMode },
    Given(Instance),
}

/// Individual parameters that replace the automatic or explicit choice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamOverrides {
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub dt: Option<f64>,
    pub mode: Option<SpikeMode>,
    pub cascade: Option<Cascade>,
    pub t_max: Option<u64>,
}

impl ParamOverrides {
    pub fn apply(&self, p: SnnParams) -> SnnParams {
        SnnParams {
            tau: self.tau.unwrap_or(p.tau),
            alpha: self.alpha.unwrap_or(p.alpha),
            eta: self.eta.unwrap_or(p.eta),
            dt: self.dt.unwrap_or(p.dt),
            mode: self.mode.unwrap_or(p.mode),
            cascade: self.cascade.unwrap_or(p.cascade),
            t_max: self.t_max.unwrap_or(p.t_max),
        }
    }

    /// Parameters made only of overrides, if all the required ones are set.
    pub fn complete(&self, kind: ProblemKind) -> Result<SnnParams> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| SnnError::InvalidParams(format!("{name} is required without auto params")))
        };
        Ok(SnnParams {
            tau: self.tau.unwrap_or(match kind {
                ProblemKind::LassoNonneg { beta } => beta,
                _ => 0.0,
            }),
            alpha: need(self.alpha, "alpha")?,
            eta: need(self.eta, "eta")?,
            dt: need(self.dt, "dt")?,
            mode: self.mode.unwrap_or(kind.spike_mode()),
            cascade: self.cascade.unwrap_or(Cascade::Exhaustive),
            t_max: self
                .t_max
                .ok_or_else(|| SnnError::InvalidParams("t_max is required without auto params".into()))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: InstanceSource,
    pub kind: ProblemKind,
    /// Derive parameters from the instance; otherwise `overrides` must
    /// name every parameter.
    pub auto_params: bool,
    pub overrides: ParamOverrides,
    pub probe_every: u64,
    /// Where `trace.csv`, `summary.json`, `instance.json` and
    /// `timing.json` go; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    pub run_oracle: bool,
    pub verify: bool,
}

impl ExperimentConfig {
    pub fn new(source: InstanceSource, kind: ProblemKind) -> Self {
        Self {
            source,
            kind,
            auto_params: true,
            overrides: ParamOverrides::default(),
            probe_every: 1,
            out_dir: None,
            run_oracle: true,
            verify: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSummary {
    pub method: OracleMethod,
    pub opt_value: f64,
    pub residual: f64,
    pub r_star: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleGaps {
    /// Network residual minus oracle residual.
    pub nnls_residual_gap: Option<f64>,
    /// `| ||r||_1 - OPT |`.
    pub l1_gap: Option<f64>,
    /// `|| F^T r - F^T r_lasso ||`.
    pub lasso_distance: Option<f64>,
}

/// State at the last probed step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalState {
    pub step: u64,
    pub time: f64,
    pub residual: f64,
    /// `|| x_F - F^T r ||`.
    pub residual_rowspace: f64,
    pub l1_norm: f64,
    pub cum_spikes: u64,
    pub rate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kind: ProblemKind,
    pub n: usize,
    pub m: usize,
    pub provenance: Option<Provenance>,
    pub params: Option<SnnParams>,
    pub auto: Option<AutoParams>,
    pub probe_every: u64,
    pub x_norm: f64,
    pub x_f_norm: f64,
    pub rows: usize,
    #[serde(rename = "final")]
    pub last: Option<FinalState>,
    pub oracle: Option<OracleSummary>,
    pub oracle_gaps: OracleGaps,
    pub verification: Option<VerificationReport>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub instance: Instance,
    pub params: SnnParams,
    pub trace: Trace,
    pub summary: Summary,
}

fn load(source: &InstanceSource) -> Result<(Instance, Option<Provenance>)> {
    match source {
        InstanceSource::File(path) => read_instance(path),
        InstanceSource::Rsm { n, m, seed, x_mode } => {
            let (inst, prov) = gen_instance(*n, *m, *seed, *x_mode)?;
            Ok((inst, Some(prov)))
        }
        InstanceSource::Given(inst) => Ok((inst.clone(), None)),
    }
}

fn run_oracle(kind: ProblemKind, inst: &Instance) -> Result<OracleResult> {
    match kind {
        ProblemKind::Nnls => nnls_oracle(inst, 1e-10),
        ProblemKind::L1MinNonneg => l1min_oracle(inst, SpikeMode::Nonneg),
        ProblemKind::L1MinSigned => l1min_oracle(inst, SpikeMode::Signed),
        ProblemKind::LassoNonneg { beta } => lasso_oracle(inst, beta, 1e-10),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_outputs(dir: &Path, trace: &Trace, summary: &Summary, seconds: f64) -> Result<()> {
    trace.save_csv(&dir.join("trace.csv"))?;
    write_json(&dir.join("summary.json"), summary)?;
    write_json(&dir.join("timing.json"), &serde_json::json!({ "wall_clock_seconds": seconds }))
}

/// Runs one experiment and, with an output directory, writes its files.
///
/// On failure the partial trace and a summary carrying the error are still
/// written before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let start = Instant::now();
    let (inst, provenance) = load(&cfg.source)?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        write_instance(&dir.join("instance.json"), &inst, provenance.as_ref())?;
    }
    let x_f = project_rowspace(inst.f(), inst.x())?;
    let mut summary = Summary {
        kind: cfg.kind,
        n: inst.n(),
        m: inst.m(),
        provenance,
        params: None,
        auto: None,
        probe_every: cfg.probe_every,
        x_norm: inst.x().norm(),
        x_f_norm: x_f.norm(),
        rows: 0,
        last: None,
        oracle: None,
        oracle_gaps: OracleGaps::default(),
        verification: None,
        error: None,
    };
    let fail = |summary: &mut Summary, trace: &Trace, error: SnnError| -> SnnError {
        summary.error = Some(error.to_string());
        summary.rows = trace.rows.len();
        if let Some(dir) = &cfg.out_dir {
            if let Err(e) = write_outputs(dir, trace, summary, start.elapsed().as_secs_f64()) {
                return e;
            }
        }
        error
    };

    let params = if cfg.auto_params {
        match auto_params_detailed(&inst, cfg.kind) {
            Ok(a) => {
                let p = cfg.overrides.apply(a.params);
                summary.auto = Some(a);
                p
            }
            Err(e) => return Err(fail(&mut summary, &Trace::default(), e)),
        }
    } else {
        match cfg.overrides.complete(cfg.kind) {
            Ok(p) => p,
            Err(e) => return Err(fail(&mut summary, &Trace::default(), e)),
        }
    };
    summary.params = Some(params);

    let net = match Network::new(&inst, params) {
        Ok(net) => net,
        Err(e) => return Err(fail(&mut summary, &Trace::default(), e)),
    };
    let trace = match net.run(cfg.probe_every) {
        Ok(t) => t,
        Err(failure) => return Err(fail(&mut summary, &failure.partial, failure.error)),
    };
    summary.rows = trace.rows.len();
    if let (Some(row), Some(diag), Some(rate)) =
        (trace.rows.last(), trace.diagnostics.last(), trace.last_rate.as_ref())
    {
        summary.last = Some(FinalState {
            step: row.step,
            time: row.time,
            residual: row.residual_l2,
            residual_rowspace: diag.residual_rowspace,
            l1_norm: row.l1_rate,
            cum_spikes: row.cum_spikes,
            rate: rate.iter().copied().collect(),
        });
    }

    if cfg.run_oracle {
        match run_oracle(cfg.kind, &inst) {
            Ok(o) => {
                if let Some(last) = &summary.last {
                    let gaps = &mut summary.oracle_gaps;
                    match cfg.kind {
                        ProblemKind::Nnls => gaps.nnls_residual_gap = Some(last.residual - o.residual),
                        ProblemKind::L1MinNonneg | ProblemKind::L1MinSigned => {
                            gaps.l1_gap = Some((last.l1_norm - o.opt_value).abs())
                        }
                        ProblemKind::LassoNonneg { .. } => {
                            let ft = inst.f().transpose();
                            let r = Vector::from_column_slice(&last.rate);
                            gaps.lasso_distance = Some((&ft * r - ft * o.r()).norm());
                        }
                    }
                }
                summary.oracle = Some(OracleSummary {
                    method: o.method,
                    opt_value: o.opt_value,
                    residual: o.residual,
                    r_star: o.r_star,
                });
            }
            Err(e) => return Err(fail(&mut summary, &trace, e)),
        }
    }
    if cfg.verify && !trace.rows.is_empty() {
        match verify(&trace, &inst, &params, Some(cfg.kind)) {
            Ok(rep) => summary.verification = Some(rep),
            Err(e) => return Err(fail(&mut summary, &trace, e)),
        }
    }
    if let Some(dir) = &cfg.out_dir {
        write_outputs(dir, &trace, &summary, start.elapsed().as_secs_f64())?;
    }
    Ok(ExperimentOutcome { instance: inst, params, trace, summary })
}

/// Runs independent experiments in parallel; results keep the input order.
pub fn run_batch(configs: &[ExperimentConfig]) -> Vec<Result<ExperimentOutcome>> {
    configs.par_iter().map(run_experiment).collect()
}
