use std::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{Network, SnnParams, SpikeMode};
use crate::error::{Result, SnnError};
use crate::linalg::{inf_norm, GramFactor, Vector};
use crate::oracles::{l1min_oracle, lasso_oracle, nnls_oracle};
use crate::problems::{Instance, ProblemKind};
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    /// Worst value seen over the trace.
    pub observed: Option<f64>,
    /// The check passes when `observed <= tolerance`.
    pub tolerance: Option<f64>,
    pub note: String,
}

impl Check {
    fn measured(name: &str, observed: f64, tolerance: f64, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: if observed <= tolerance { CheckStatus::Pass } else { CheckStatus::Fail },
            observed: Some(observed),
            tolerance: Some(tolerance),
            note: note.into(),
        }
    }

    fn skipped(name: &str, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::NotApplicable,
            observed: None,
            tolerance: None,
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn status(&self, name: &str) -> Option<CheckStatus> {
        self.get(name).map(|c| c.status)
    }

    /// No check failed.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::NotApplicable => "n/a ",
            };
            write!(f, "{status}  {:<24}", c.name)?;
            if let (Some(o), Some(t)) = (c.observed, c.tolerance) {
                write!(f, " observed {o:.6e}  tolerance {t:.6e}")?;
            }
            if !c.note.is_empty() {
                write!(f, "  ({})", c.note)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Re-runs the network up to the last row of `trace` and checks that every
/// row matches bit for bit.
fn replay(trace: &Trace, inst: &Instance, params: &SnnParams) -> Result<Trace> {
    let incompatible = |msg: String| Err(SnnError::IncompatibleTrace(msg));
    let (Some(first), Some(last)) = (trace.rows.first(), trace.rows.last()) else {
        return incompatible("trace has no rows".into());
    };
    let probe_every = first.step;
    if probe_every == 0 {
        return incompatible("first row is at step 0".into());
    }
    if last.step > params.t_max {
        return incompatible(format!("trace reaches step {} past t_max {}", last.step, params.t_max));
    }
    let net = Network::new(inst, SnnParams { t_max: last.step, ..*params })
        .map_err(|e| SnnError::IncompatibleTrace(e.to_string()))?;
    let again = net
        .run(probe_every)
        .map_err(|e| SnnError::IncompatibleTrace(format!("replay failed: {e}")))?;
    if again.rows.len() != trace.rows.len() {
        return incompatible(format!(
            "replay has {} rows, trace has {}",
            again.rows.len(),
            trace.rows.len()
        ));
    }
    if let Some((a, _)) = trace.rows.iter().zip(&again.rows).find(|(a, b)| a != b) {
        return incompatible(format!("row at step {} differs from the replay", a.step));
    }
    Ok(again)
}

fn max_of(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::NEG_INFINITY, f64::max)
}

/// Checks every applicable invariant of a run against its tolerance.
///
/// Traces without in-memory diagnostics (for example ones read from CSV)
/// are replayed first; a replay that disagrees with the trace is an
/// [`SnnError::IncompatibleTrace`].
pub fn verify(
    trace: &Trace,
    inst: &Instance,
    params: &SnnParams,
    kind: Option<ProblemKind>,
) -> Result<VerificationReport> {
    let replayed;
    let full = if trace.has_diagnostics() && trace.last_rate.is_some() {
        trace
    } else {
        replayed = replay(trace, inst, params)?;
        &replayed
    };
    let rows = &full.rows;
    let diags = &full.diagnostics;
    let factor = GramFactor::new(inst.f());
    let spec = factor.spectral()?;
    let x_f_norm = factor.project_rowspace(inst.x())?.norm();
    let n = inst.n() as f64;
    let mut checks = Vec::new();

    if params.is_leaky() {
        checks.push(Check::skipped("conservation", "leaky network"));
    } else {
        let tol = 1e-8 * (1.0 + inf_norm(&(inst.f() * inst.x())));
        let worst = max_of(rows.iter().filter_map(|r| r.conservation_defect));
        checks.push(Check::measured("conservation", worst, tol, ""));
    }

    checks.push(Check::measured(
        "coupling",
        max_of(diags.iter().map(|d| d.coupling_defect)),
        1e-9,
        "",
    ));

    let dt_bound = if x_f_norm > 0.0 {
        spec.lambda_min_nz.sqrt() / (24.0 * n.sqrt() * x_f_norm)
    } else {
        f64::INFINITY
    };
    let mut unmet = Vec::new();
    if params.is_leaky() {
        unmet.push("tau > 0");
    }
    if params.eta < spec.lambda_max {
        unmet.push("eta < lambda_max");
    }
    if params.alpha != 1.0 {
        unmet.push("alpha != 1");
    }
    if params.mode != SpikeMode::Signed {
        unmet.push("non-negative spikes");
    }
    if params.dt > dt_bound {
        unmet.push("dt above its bound");
    }
    let bound = 2.0 * (spec.kappa * params.eta * n).sqrt();
    if unmet.is_empty() {
        checks.push(Check::measured(
            "potential_bound",
            max_of(rows.iter().map(|r| r.pinv_norm_v)),
            bound,
            "",
        ));
        let ratio = rows
            .iter()
            .zip(diags)
            .map(|(r, d)| d.residual_rowspace / (bound * x_f_norm / r.time))
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::measured(
            "theorem_residual_bound",
            ratio,
            1.0,
            "worst ratio of residual to its bound",
        ));
    } else {
        let why = format!("precondition unmet: {}", unmet.join(", "));
        checks.push(Check::skipped("potential_bound", why.clone()));
        checks.push(Check::skipped("theorem_residual_bound", why));
    }

    let last = rows.last().expect("replay guarantees rows");
    let rate: &Vector = full.last_rate.as_ref().expect("replay guarantees a rate");
    let l1_opt = match kind {
        Some(k) if k.is_l1() => Some(l1min_oracle(inst, k.spike_mode())),
        _ => None,
    };
    match &l1_opt {
        Some(Ok(o)) => {
            let opt = o.opt_value;
            checks.push(Check::measured(
                "weak_duality",
                max_of(diags.iter().map(|d| d.dual_value)),
                opt + 1e-6 * (1.0 + opt),
                format!("OPT = {opt:.6e}"),
            ));
        }
        Some(Err(e)) => checks.push(Check::skipped("weak_duality", format!("no oracle: {e}"))),
        None => checks.push(Check::skipped("weak_duality", "not an l1 run")),
    }

    match kind {
        Some(ProblemKind::Nnls) => match nnls_oracle(inst, 1e-10) {
            Ok(o) => checks.push(Check::measured(
                "nnls_residual_gap",
                last.residual_l2 - o.residual,
                0.05 * x_f_norm,
                "",
            )),
            Err(e) => checks.push(Check::skipped("nnls_residual_gap", format!("no oracle: {e}"))),
        },
        Some(ProblemKind::L1MinNonneg | ProblemKind::L1MinSigned) => match &l1_opt {
            Some(Ok(o)) => checks.push(Check::measured(
                "l1_gap",
                (last.l1_rate - o.opt_value).abs(),
                0.10 * o.opt_value,
                "",
            )),
            Some(Err(e)) => checks.push(Check::skipped("l1_gap", format!("no oracle: {e}"))),
            None => unreachable!("l1 kinds always query the oracle"),
        },
        Some(ProblemKind::LassoNonneg { beta }) => match lasso_oracle(inst, beta, 1e-10) {
            Ok(o) => {
                let ft = inst.f().transpose();
                let d = (&ft * rate - ft * o.r()).norm();
                checks.push(Check::measured("lasso_distance", d, 0.10 * inst.x().norm(), ""));
            }
            Err(e) => checks.push(Check::skipped("lasso_distance", format!("no oracle: {e}"))),
        },
        None => checks.push(Check::skipped("oracle_gap", "problem kind unknown")),
    }

    Ok(VerificationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Cascade;
    use crate::harness::auto_params;

    fn three_neuron() -> Instance {
        let h = 0.5f64.sqrt();
        Instance::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![h, h]], &[1.0, 2.0]).unwrap()
    }

    fn run(inst: &Instance, p: SnnParams, every: u64) -> Trace {
        Network::new(inst, p).unwrap().run(every).unwrap()
    }

    #[test]
    fn theorem_regime_passes() {
        let inst = three_neuron();
        let mut p = auto_params(&inst, ProblemKind::Nnls).unwrap();
        p.t_max = 2000;
        let trace = run(&inst, p, 1);
        let rep = verify(&trace, &inst, &p, Some(ProblemKind::Nnls)).unwrap();
        for name in ["conservation", "coupling", "potential_bound", "theorem_residual_bound"] {
            assert_eq!(rep.status(name), Some(CheckStatus::Pass), "{name}\n{rep}");
        }
        assert_eq!(rep.status("weak_duality"), Some(CheckStatus::NotApplicable));
    }

    #[test]
    fn low_threshold_gates_the_bounds() {
        let inst = three_neuron();
        let mut p = auto_params(&inst, ProblemKind::Nnls).unwrap();
        p.eta = 1.0;
        p.t_max = 500;
        let trace = run(&inst, p, 5);
        let rep = verify(&trace, &inst, &p, None).unwrap();
        assert_eq!(rep.status("potential_bound"), Some(CheckStatus::NotApplicable));
        assert_eq!(rep.status("theorem_residual_bound"), Some(CheckStatus::NotApplicable));
        assert_eq!(rep.status("conservation"), Some(CheckStatus::Pass));
        assert_eq!(rep.status("coupling"), Some(CheckStatus::Pass));
    }

    #[test]
    fn leaky_run_skips_conservation() {
        let inst = three_neuron();
        let p = SnnParams {
            tau: 0.1,
            alpha: 0.1,
            eta: 1.0,
            dt: 0.01,
            mode: SpikeMode::Nonneg,
            cascade: Cascade::Exhaustive,
            t_max: 300,
        };
        let trace = run(&inst, p, 10);
        let rep = verify(&trace, &inst, &p, None).unwrap();
        assert_eq!(rep.status("conservation"), Some(CheckStatus::NotApplicable));
        assert_eq!(rep.status("coupling"), Some(CheckStatus::Pass));
    }

    #[test]
    fn replay_detects_tampering() {
        let inst = three_neuron();
        let mut p = auto_params(&inst, ProblemKind::Nnls).unwrap();
        p.t_max = 200;
        let full = run(&inst, p, 4);
        let mut bare = Trace { rows: full.rows.clone(), ..Default::default() };
        let a = verify(&full, &inst, &p, Some(ProblemKind::Nnls)).unwrap();
        let b = verify(&bare, &inst, &p, Some(ProblemKind::Nnls)).unwrap();
        assert_eq!(a, b);

        bare.rows[10].l1_rate += 1e-15;
        assert!(matches!(
            verify(&bare, &inst, &p, None),
            Err(SnnError::IncompatibleTrace(_))
        ));
        let mut q = p;
        q.dt *= 1.5;
        assert!(matches!(
            verify(&Trace { rows: full.rows.clone(), ..Default::default() }, &inst, &q, None),
            Err(SnnError::IncompatibleTrace(_))
        ));
        assert!(verify(&Trace::default(), &inst, &p, None).is_err());
    }

    #[test]
    fn failing_margin_is_reported_unclamped() {
        let inst = three_neuron();
        let mut p = auto_params(&inst, ProblemKind::Nnls).unwrap();
        p.t_max = 20;
        let trace = run(&inst, p, 1);
        let rep = verify(&trace, &inst, &p, Some(ProblemKind::Nnls)).unwrap();
        // Far too short to reach the oracle's residual.
        let gap = rep.get("nnls_residual_gap").unwrap();
        assert_eq!(gap.status, CheckStatus::Fail);
        assert!(gap.observed.unwrap() > gap.tolerance.unwrap());
        assert!(!rep.passed());
        let text = rep.to_string();
        assert!(text.contains("FAIL  nnls_residual_gap"));
    }
}
