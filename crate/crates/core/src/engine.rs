//! Discrete-time optimally balanced integrate-and-fire network.
//!
//! One step applies, in order:
//!
//! 1. input: `v += F x dt`, `u += x dt`
//! 2. leak: `v *= 1 - tau dt`, `u *= 1 - tau dt`
//! 3. spike cascade: `s = spike_vector(v)`, `v -= alpha FF^T s`,
//!    `u -= alpha F^T s`, repeated until no neuron is above threshold
//!    (or applied once, with [`Cascade::Once`]).
//!
//! Every update of `v` is `F` times the matching update of `u`, so the
//! coupling `v = F u` holds up to rounding for the whole run. Both are
//! accumulated with compensated summation, which keeps that rounding from
//! growing with the number of steps.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SnnError};
use crate::linalg::{inf_norm, l1_norm, GramFactor, Matrix, Vector};
use crate::problems::{dual_feasibility_violation, Instance};
use crate::trace::{RowDiagnostics, Trace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpikeMode {
    /// Neuron `i` fires `sign(v_i)` when `|v_i| > eta`.
    Signed,
    /// Neuron `i` fires when `v_i > eta`.
    Nonneg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cascade {
    Once,
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnnParams {
    /// Leak rate per unit time.
    pub tau: f64,
    /// Spike strength.
    pub alpha: f64,
    /// Firing threshold.
    pub eta: f64,
    pub dt: f64,
    pub mode: SpikeMode,
    pub cascade: Cascade,
    pub t_max: u64,
}

impl SnnParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SnnError::InvalidParams(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be > 0, got {}", self.eta));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be >= 0, got {}", self.tau));
        }
        if self.t_max < 1 {
            return bad("t_max must be >= 1".into());
        }
        Ok(())
    }

    pub fn is_leaky(&self) -> bool {
        self.tau > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnnState {
    /// Membrane potentials, length `n`.
    pub v: Vector,
    /// Dual iterate, length `m`.
    pub u: Vector,
    /// Signed spike counts per neuron.
    pub cum_spikes: Vector,
    /// Number of spike events so far (sum of `|s_i|` over all rounds).
    pub total_spikes: u64,
    pub step: u64,
    /// Running compensation terms for `v` and `u`.
    pub(crate) v_carry: Vector,
    pub(crate) u_carry: Vector,
}

/// `sum += scale * delta` with Kahan compensation held in `carry`.
fn compensated_axpy<'a>(
    sum: &mut Vector,
    carry: &mut Vector,
    scale: f64,
    delta: impl IntoIterator<Item = &'a f64>,
) {
    for ((s, c), d) in sum.iter_mut().zip(carry.iter_mut()).zip(delta) {
        let y = scale * d - *c;
        let t = *s + y;
        *c = (t - *s) - y;
        *s = t;
    }
}

/// Spikes emitted during one step; one vector per cascade round, entries
/// in `{-1, 0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEvent {
    pub rounds: Vec<Vector>,
}

impl StepEvent {
    pub fn cascade_rounds(&self) -> usize {
        self.rounds.len()
    }

    /// Net spikes per neuron over all rounds.
    pub fn net(&self, n: usize) -> Vector {
        self.rounds.iter().fold(Vector::zeros(n), |acc, s| acc + s)
    }
}

/// Strict-threshold spike rule.
pub fn spike_vector(v: &Vector, eta: f64, mode: SpikeMode) -> Vector {
    v.map(|vi| match mode {
        SpikeMode::Signed if vi.abs() > eta => vi.signum(),
        SpikeMode::Nonneg if vi > eta => 1.0,
        _ => 0.0,
    })
}

/// Failed run: the error plus every row probed before it.
#[derive(Debug)]
pub struct RunFailure {
    pub error: SnnError,
    pub partial: Trace,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} probed rows)", self.error, self.partial.rows.len())
    }
}

impl std::error::Error for RunFailure {}

/// A network bound to an instance and parameters, with the factorizations
/// every step and probe needs.
#[derive(Debug, Clone)]
pub struct Network {
    inst: Instance,
    params: SnnParams,
    factor: GramFactor,
    /// `F x dt`.
    drive: Vector,
    /// `x dt`.
    dual_drive: Vector,
    fx: Vector,
    x_f: Vector,
}

impl Network {
    pub fn new(inst: &Instance, params: SnnParams) -> Result<Self> {
        params.validate()?;
        let factor = GramFactor::new(inst.f());
        let fx = inst.f() * inst.x();
        let x_f = factor.project_rowspace(inst.x())?;
        Ok(Self {
            drive: &fx * params.dt,
            dual_drive: inst.x() * params.dt,
            fx,
            x_f,
            factor,
            inst: inst.clone(),
            params,
        })
    }

    pub fn instance(&self) -> &Instance {
        &self.inst
    }

    pub fn params(&self) -> &SnnParams {
        &self.params
    }

    pub fn factor(&self) -> &GramFactor {
        &self.factor
    }

    /// Projection of `x` onto the row space of `F`.
    pub fn x_f(&self) -> &Vector {
        &self.x_f
    }

    /// All-zero potentials and dual iterate.
    pub fn init(&self) -> SnnState {
        SnnState {
            v: Vector::zeros(self.inst.n()),
            u: Vector::zeros(self.inst.m()),
            cum_spikes: Vector::zeros(self.inst.n()),
            total_spikes: 0,
            step: 0,
            v_carry: Vector::zeros(self.inst.n()),
            u_carry: Vector::zeros(self.inst.m()),
        }
    }

    fn cascade_cap(&self) -> usize {
        10 * self.inst.n()
    }

    fn fire(&self, state: &mut SnnState, s: &Vector) {
        let alpha = self.params.alpha;
        let gram = self.factor.gram();
        let f = self.inst.f();
        for (i, &si) in s.iter().enumerate() {
            if si == 0.0 {
                continue;
            }
            compensated_axpy(&mut state.v, &mut state.v_carry, -alpha * si, gram.column(i).iter());
            compensated_axpy(&mut state.u, &mut state.u_carry, -alpha * si, f.row(i).iter());
            state.cum_spikes[i] += si;
            state.total_spikes += 1;
        }
    }

    pub fn step(&self, state: &mut SnnState) -> Result<StepEvent> {
        let p = &self.params;
        if state.step >= p.t_max {
            return Err(SnnError::StepLimitExceeded(p.t_max));
        }
        compensated_axpy(&mut state.v, &mut state.v_carry, 1.0, self.drive.iter());
        compensated_axpy(&mut state.u, &mut state.u_carry, 1.0, self.dual_drive.iter());
        if p.is_leaky() {
            let keep = 1.0 - p.tau * p.dt;
            state.v *= keep;
            state.u *= keep;
            state.v_carry *= keep;
            state.u_carry *= keep;
        }
        let mut rounds = Vec::new();
        loop {
            let s = spike_vector(&state.v, p.eta, p.mode);
            if s.iter().all(|&si| si == 0.0) {
                break;
            }
            if p.cascade == Cascade::Exhaustive && rounds.len() == self.cascade_cap() {
                return Err(SnnError::CascadeDivergence {
                    step: state.step + 1,
                    rounds: rounds.len(),
                });
            }
            self.fire(state, &s);
            rounds.push(s);
            if p.cascade == Cascade::Once {
                break;
            }
        }
        state.step += 1;
        Ok(StepEvent { rounds })
    }

    /// `r(t) = alpha * cum_spikes / (t dt)`.
    pub fn firing_rate(&self, state: &SnnState) -> Result<Vector> {
        if state.step == 0 {
            return Err(SnnError::ZeroSteps);
        }
        let scale = self.params.alpha / (state.step as f64 * self.params.dt);
        Ok(&state.cum_spikes * scale)
    }

    /// `|| v(t) / (t dt) - (F x - FF^T r(t)) ||_inf` for a run started at
    /// `v(0) = 0`.
    pub fn conservation_defect(&self, state: &SnnState) -> Result<f64> {
        if self.params.is_leaky() {
            return Err(SnnError::LeakyNotSupported);
        }
        let r = self.firing_rate(state)?;
        let lhs = &state.v / (state.step as f64 * self.params.dt);
        let rhs = &self.fx - self.factor.gram() * r;
        Ok(inf_norm(&(lhs - rhs)))
    }

    /// `|| v - F u ||_inf`.
    pub fn coupling_defect(&self, state: &SnnState) -> f64 {
        inf_norm(&(&state.v - self.inst.f() * &state.u))
    }

    /// Evaluates one trace row at the current state (requires `step >= 1`).
    pub fn probe(&self, state: &SnnState) -> Result<(TraceRow, RowDiagnostics)> {
        let r = self.firing_rate(state)?;
        let ftr = self.inst.f().transpose() * &r;
        let row = TraceRow {
            step: state.step,
            time: state.step as f64 * self.params.dt,
            residual_l2: (self.inst.x() - &ftr).norm(),
            l1_rate: l1_norm(&r),
            cum_spikes: state.total_spikes,
            pinv_norm_v: self.factor.pinv_gram_norm(&state.v)?,
            dual_violation: dual_feasibility_violation(
                &self.inst,
                &state.u,
                self.params.eta,
                self.params.mode,
            )?,
            conservation_defect: if self.params.is_leaky() {
                None
            } else {
                Some(self.conservation_defect(state)?)
            },
        };
        let diag = RowDiagnostics {
            coupling_defect: self.coupling_defect(state),
            residual_rowspace: (&self.x_f - &ftr).norm(),
            dual_value: self.inst.x().dot(&state.u) / self.params.eta,
        };
        Ok((row, diag))
    }

    /// Steps until `t_max`, probing every `probe_every` steps.
    pub fn run(&self, probe_every: u64) -> Result<Trace, RunFailure> {
        self.run_with(probe_every, |_, _| {})
    }

    /// Like [`Network::run`], calling `observe` on the post-step state at
    /// every probed step.
    pub fn run_with(
        &self,
        probe_every: u64,
        mut observe: impl FnMut(&SnnState, &TraceRow),
    ) -> Result<Trace, RunFailure> {
        let mut trace = Trace::default();
        if probe_every == 0 {
            return Err(RunFailure {
                error: SnnError::InvalidParams("probe_every must be >= 1".into()),
                partial: trace,
            });
        }
        let mut state = self.init();
        while state.step < self.params.t_max {
            if let Err(error) = self.step(&mut state) {
                return Err(RunFailure { error, partial: trace });
            }
            if state.step.is_multiple_of(probe_every) {
                match self.probe(&state) {
                    Ok((row, diag)) => {
                        observe(&state, &row);
                        trace.push(row, diag);
                        trace.last_rate = self.firing_rate(&state).ok();
                    }
                    Err(error) => return Err(RunFailure { error, partial: trace }),
                }
            }
        }
        Ok(trace)
    }
}

/// Convenience wrapper: build the network and run it.
pub fn run(inst: &Instance, params: SnnParams, probe_every: u64) -> Result<Trace, RunFailure> {
    let net = Network::new(inst, params).map_err(|error| RunFailure {
        error,
        partial: Trace::default(),
    })?;
    net.run(probe_every)
}

/// `F^T r` for a rate vector, as used by the Lasso comparisons.
pub fn decode(f: &Matrix, r: &Vector) -> Vector {
    f.transpose() * r
}
