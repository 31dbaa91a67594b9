//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. Exits
//! non-zero if any criterion fails.

use std::cell::RefCell;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use snn_core::geometry::{active_walls, ideal_coupling, niceness, Wall};
use snn_core::harness::{auto_params, auto_params_detailed, gen_instance, gen_rsm, XMode};
use snn_core::linalg::{gram_norm, pinv_gram_norm, project_rowspace, spectral};
use snn_core::oracles::{l1min_oracle, lasso_oracle, nnls_oracle};
use snn_core::{Cascade, Instance, Matrix, Network, ProblemKind, SnnParams, SpikeMode, Trace, Vector};

/// Seeds for the generated instances.
const SEED_LSQ: u64 = 2024;
const SEED_L1: u64 = 13;
const SEED_LASSO: u64 = 1;
const SEED_COUPLING: u64 = 9;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

thread_local! {
    /// Largest `||v - F u||_inf` of every run, by run name.
    static COUPLING: RefCell<Vec<(String, f64)>> = const { RefCell::new(Vec::new()) };
    /// Largest `x^T u / eta` and OPT of every l1 run, by run name.
    static DUALITY: RefCell<Vec<(String, usize, f64, f64)>> = const { RefCell::new(Vec::new()) };
}

fn record_coupling(name: &str, trace: &Trace) {
    let worst = trace.diagnostics.iter().map(|d| d.coupling_defect).fold(0.0, f64::max);
    COUPLING.with(|c| c.borrow_mut().push((name.into(), worst)));
}

fn record_duality(name: &str, trace: &Trace, opt: f64) {
    let worst = trace
        .diagnostics
        .iter()
        .map(|d| d.dual_value)
        .fold(f64::NEG_INFINITY, f64::max);
    DUALITY.with(|d| d.borrow_mut().push((name.into(), trace.rows.len(), worst, opt)));
}

fn lsq_instance() -> Instance {
    gen_instance(20, 5, SEED_LSQ, XMode::Gaussian).unwrap().0
}

fn three_neuron() -> Instance {
    let h = 0.5f64.sqrt();
    Instance::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![h, h]], &[1.0, 2.0]).unwrap()
}

fn l1_instance() -> Instance {
    gen_instance(6, 3, SEED_L1, XMode::Sparse { nonzeros: 2 }).unwrap().0
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t0 = Instant::now();
    let out = f();
    (out, t0.elapsed())
}

fn conservation() -> Verdict {
    let inst = lsq_instance();
    let mut p = auto_params(&inst, ProblemKind::Nnls).unwrap();
    p.t_max = 10_000;
    assert_eq!(p.alpha, 1.0);
    assert_eq!(p.tau, 0.0);
    let (trace, elapsed) = timed(|| Network::new(&inst, p).unwrap().run(1).unwrap());
    record_coupling("conservation run", &trace);
    let tol = 1e-8 * (1.0 + (inst.f() * inst.x()).amax());
    let worst = trace
        .rows
        .iter()
        .map(|r| r.conservation_defect.unwrap())
        .fold(0.0, f64::max);
    let pass = trace.rows.len() == 10_000 && worst <= tol && elapsed < Duration::from_secs(5);
    verdict(pass, format!("max defect {worst:.3e} <= {tol:.3e}, {} rows, {elapsed:.2?} (< 5 s)", trace.rows.len()))
}

fn least_squares_theorem() -> Verdict {
    let inst = lsq_instance();
    let a = auto_params_detailed(&inst, ProblemKind::Nnls).unwrap();
    let p = a.params;
    let n = inst.n() as f64;
    let c = 2.0 * (a.spectral.kappa * p.eta * n).sqrt();
    let x_f = a.x_f_norm;
    let (trace, elapsed) = timed(|| Network::new(&inst, p).unwrap().run(1).unwrap());
    record_coupling("least-squares run", &trace);

    let worst_v = trace.rows.iter().map(|r| r.pinv_norm_v).fold(0.0, f64::max);
    let pass_a = worst_v <= c;
    let mut pass_b = true;
    let mut first_hit = None;
    for (row, diag) in trace.rows.iter().zip(&trace.diagnostics) {
        let bound = c * x_f / row.time;
        if diag.residual_rowspace > bound {
            pass_b = false;
        }
        if first_hit.is_none() && bound <= 0.05 * x_f {
            first_hit = Some((row.step, diag.residual_rowspace));
        }
    }
    let (pass_c, c_detail) = match first_hit {
        Some((step, res)) => (res <= 0.05 * x_f, format!("at step {step} residual/||x_F|| = {:.3e}", res / x_f)),
        None => (false, "bound never reached 0.05 ||x_F||".into()),
    };
    let pass = pass_a && pass_b && pass_c && elapsed < Duration::from_secs(60);
    verdict(
        pass,
        format!(
            "(a) max ||v||_pinv {worst_v:.3} <= {c:.3}: {pass_a}; (b) residual under bound at all {} steps: {pass_b}; (c) {c_detail}; {elapsed:.2?} (< 60 s)",
            trace.rows.len()
        ),
    )
}

fn worked_example() -> Verdict {
    let inst = three_neuron();
    let mut p = auto_params(&inst, ProblemKind::Nnls).unwrap();
    p.t_max = 50_000;
    let trace = Network::new(&inst, p).unwrap().run(100).unwrap();
    record_coupling("three-neuron run", &trace);
    let last = trace.last().unwrap();
    let xnorm = inst.x().norm();
    let oracle = nnls_oracle(&inst, 1e-12).unwrap();
    let rate = trace.last_rate.as_ref().unwrap();
    let pass = last.residual_l2 <= 0.01 * xnorm && oracle.residual <= 1e-10;
    verdict(
        pass,
        format!(
            "residual {:.3e} <= {:.3e} after {} steps, rate ({:.4}, {:.4}, {:.4}), oracle residual {:.1e}",
            last.residual_l2,
            0.01 * xnorm,
            last.step,
            rate[0],
            rate[1],
            rate[2],
            oracle.residual
        ),
    )
}

fn l1_convergence() -> Verdict {
    let inst = l1_instance();
    let rep = niceness(inst.f()).unwrap();
    if !rep.is_nice() {
        return verdict(false, "instance is not nice");
    }
    let a = auto_params_detailed(&inst, ProblemKind::L1MinNonneg).unwrap();
    let opt = a.opt.unwrap();
    let p = a.params;
    let xnorm = inst.x().norm();
    let net = Network::new(&inst, p).unwrap();
    let (outcome, elapsed) = timed(|| net.run(10));
    let head = format!(
        "gamma {:.4}, alpha {:.2e}, dt {:.4e}, horizon {} steps, OPT {:.6}",
        rep.gamma, p.alpha, p.dt, p.t_max, opt
    );
    match outcome {
        Ok(trace) => {
            record_coupling("l1 auto run", &trace);
            record_duality("l1 auto run", &trace, opt);
            let last = trace.last().unwrap();
            let res_ok = last.residual_l2 <= 0.01 * xnorm;
            let gap = (last.l1_rate - opt).abs();
            let gap_ok = gap <= 0.10 * opt;
            let pass = res_ok && gap_ok && elapsed < Duration::from_secs(600);
            verdict(
                pass,
                format!(
                    "{head}; residual {:.3e} (<= {:.3e}), l1 gap {gap:.3e} (<= {:.3e}), {elapsed:.2?}",
                    last.residual_l2,
                    0.01 * xnorm,
                    0.10 * opt
                ),
            )
        }
        Err(failure) => {
            record_coupling("l1 auto run (partial)", &failure.partial);
            record_duality("l1 auto run (partial)", &failure.partial, opt);
            let spikes = opt * a.horizon / p.alpha;
            verdict(
                false,
                format!(
                    "{head}; run stopped: {}; reaching OPT needs about {spikes:.1e} unit spikes",
                    failure.error
                ),
            )
        }
    }
}

/// l1 runs with a practical spike strength. Not an acceptance criterion;
/// they feed the coupling and weak duality checks and show the dynamics do
/// converge once alpha is not vanishingly small.
fn l1_practical() -> Verdict {
    let inst = l1_instance();
    let mut lines = Vec::new();
    let mut pass = true;
    for kind in [ProblemKind::L1MinNonneg, ProblemKind::L1MinSigned] {
        let opt = l1min_oracle(&inst, kind.spike_mode()).unwrap().opt_value;
        let p = SnnParams {
            tau: 0.0,
            alpha: 0.01,
            eta: 1.0,
            dt: 1e-3,
            mode: kind.spike_mode(),
            cascade: Cascade::Exhaustive,
            t_max: 500_000,
        };
        let trace = Network::new(&inst, p).unwrap().run(10).unwrap();
        let name = format!("l1 {} run, alpha 0.01", kind.name());
        record_coupling(&name, &trace);
        record_duality(&name, &trace, opt);
        let last = trace.last().unwrap();
        let gap = (last.l1_rate - opt).abs() / opt;
        let res = last.residual_l2 / inst.x().norm();
        pass &= gap <= 0.10 && res <= 0.01;
        lines.push(format!("{}: l1 gap/OPT {gap:.2e}, residual/||x|| {res:.2e}", kind.name()));
    }
    verdict(pass, lines.join("; "))
}

fn lasso_correspondence() -> Verdict {
    let inst = gen_instance(8, 3, SEED_LASSO, XMode::Gaussian).unwrap().0;
    let beta = 0.05;
    let p = SnnParams {
        tau: beta,
        alpha: 0.01,
        eta: 1.0,
        dt: 0.01,
        mode: SpikeMode::Nonneg,
        cascade: Cascade::Exhaustive,
        t_max: 200_000,
    };
    let trace = Network::new(&inst, p).unwrap().run(100).unwrap();
    record_coupling("lasso run", &trace);
    let oracle = lasso_oracle(&inst, beta, 1e-12).unwrap();
    let ft = inst.f().transpose();
    let d = (&ft * trace.last_rate.as_ref().unwrap() - &ft * oracle.r()).norm();
    let tol = 0.10 * inst.x().norm();
    verdict(
        d <= tol,
        format!("tau = beta = {beta}, eta 1, alpha 0.01, dt 0.01, t = 2000: distance {d:.3e} <= {tol:.3e}"),
    )
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * b.abs().max(f64::MIN_POSITIVE)
}

fn norm_identities() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let mut failures = 0;
    for k in 0..100 {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=5);
        let mut f = Matrix::from_fn(n, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        if k % 4 == 0 && n > 1 {
            // Rank-deficient cases: repeat a row.
            let row = f.row(0).clone_owned();
            f.set_row(n - 1, &row);
        }
        let r = Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = Vector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let ftr = (f.transpose() * &r).norm();
        let gram = &f * f.transpose();
        let ok1 = rel_close(gram_norm(&f, &r).unwrap(), ftr)
            && rel_close(pinv_gram_norm(&f, &(gram * &r)).unwrap(), ftr);
        let x_f = project_rowspace(&f, &x).unwrap().norm();
        let ok2 = rel_close(pinv_gram_norm(&f, &(&f * &x)).unwrap(), x_f);
        if !(ok1 && ok2) {
            failures += 1;
        }
    }
    let f = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let example = pinv_gram_norm(&f, &Vector::from_vec(vec![3.0, 4.0])).unwrap();
    verdict(
        failures == 0 && rel_close(example, 3.0),
        format!("{failures} of 100 random triples off by more than 1e-9 relative; example gives {example}"),
    )
}

fn dual_coupling() -> Verdict {
    let runs = COUPLING.with(|c| c.borrow().clone());
    let worst = runs.iter().map(|r| r.1).fold(0.0, f64::max);
    let bad: Vec<&String> = runs.iter().filter(|r| r.1 > 1e-9).map(|r| &r.0).collect();
    verdict(
        !runs.is_empty() && bad.is_empty(),
        format!("{} runs, worst ||v - Fu||_inf {worst:.3e} <= 1e-9; over: {bad:?}", runs.len()),
    )
}

fn niceness_criterion() -> Verdict {
    let id = niceness(&Matrix::identity(2, 2)).unwrap().gamma;
    let three = niceness(three_neuron().f()).unwrap().gamma;
    let nice = (0..100u64)
        .filter(|&s| niceness(&gen_rsm(6, 3, s).unwrap()).unwrap().gamma > 0.0)
        .count();
    verdict(
        id == 1.0 && three == 0.0 && nice >= 95,
        format!("gamma(I2) = {id}, gamma(three-neuron) = {three}, {nice}/100 RSM(6,3) nice"),
    )
}

fn coupling_invariance() -> Verdict {
    let f = gen_rsm(4, 2, SEED_COUPLING).unwrap();
    let g = niceness(&f).unwrap().gamma;
    if g <= 0.0 {
        return verdict(false, "instance is not nice");
    }
    let n = f.nrows() as f64;
    let m = f.ncols() as f64;
    let lmax = spectral(&f).unwrap().lambda_max;
    let tau_cpl = g / (10.0 * n * n * lmax * lmax);
    let alpha = (tau_cpl / m).min(tau_cpl * tau_cpl * g.powi(3)) / 2.0;
    let eta = 1.0;
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let (mut points, mut spikes, mut changed, mut errors) = (0, 0, 0, 0);
    let mut worst: f64 = 0.0;
    while points < 200 {
        let d = Vector::from_fn(2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = &d * (eta / (&f * &d).amax());
        points += 1;
        let Ok(base) = ideal_coupling(&f, &u, eta, tau_cpl, SpikeMode::Signed) else {
            errors += 1;
            continue;
        };
        let tight = active_walls(&f, &u, eta, SpikeMode::Signed, 1e-9).unwrap();
        for &w in tight.walls() {
            let w: Wall = w;
            let moved = &u - w.normal(&f) * alpha;
            spikes += 1;
            match ideal_coupling(&f, &moved, eta, tau_cpl, SpikeMode::Signed) {
                Ok(c) => {
                    let diff = (c.u_ideal() - base.u_ideal()).amax();
                    worst = worst.max(diff);
                    if diff > 1e-8 || c.gamma_set != base.gamma_set {
                        changed += 1;
                    }
                }
                Err(_) => errors += 1,
            }
        }
    }
    verdict(
        changed == 0 && errors == 0 && spikes >= points,
        format!(
            "gamma {g:.4}, tau_cpl {tau_cpl:.3e}, alpha {alpha:.3e}: {points} boundary points, {spikes} spikes, {changed} changed cells, {errors} errors, max shift {worst:.1e}"
        ),
    )
}

fn weak_duality() -> Verdict {
    let runs = DUALITY.with(|d| d.borrow().clone());
    let mut lines = Vec::new();
    let mut pass = !runs.is_empty();
    for (name, rows, worst, opt) in &runs {
        let tol = opt + 1e-6 * (1.0 + opt);
        pass &= *rows > 0 && *worst <= tol;
        lines.push(format!("{name}: max x^T u/eta {worst:.6} <= {tol:.6} over {rows} probes"));
    }
    verdict(pass, lines.join("; "))
}

type Criterion = (&'static str, &'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 11] = [
        ("1", "conservation identity", conservation),
        ("2", "least-squares theorem", least_squares_theorem),
        ("3", "worked three-neuron example", worked_example),
        ("4", "l1 convergence (auto params)", l1_convergence),
        ("-", "l1 with practical alpha (info only)", l1_practical),
        ("5", "Lasso correspondence", lasso_correspondence),
        ("6", "matrix-norm identities", norm_identities),
        ("8", "niceness", niceness_criterion),
        ("9", "ideal-coupling invariance", coupling_invariance),
        ("7", "dual coupling on every run", dual_coupling),
        ("10", "weak duality on l1 runs", weak_duality),
    ];
    let mut results = Vec::new();
    for (id, name, run) in criteria {
        let t0 = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                verdict(false, format!("panicked: {msg}"))
            });
        let tag = match (id, v.pass) {
            ("-", true) => "INFO",
            ("-", false) => "INFO (not converged)",
            (_, true) => "PASS",
            (_, false) => "FAIL",
        };
        println!("[{tag}] criterion {id:>2} {name}: {} [{:.2?}]", v.detail, t0.elapsed());
        if id != "-" {
            results.push((id, v.pass));
        }
    }
    let passed = results.iter().filter(|r| r.1).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        let failed: Vec<&str> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
