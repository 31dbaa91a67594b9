use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use snn_core::harness::{
    auto_params_detailed, gen_instance, run_experiment, verify, ExperimentConfig, InstanceSource, ParamOverrides,
    Summary, XMode,
};
use snn_core::io::{instance_to_json, read_instance, write_instance};
use snn_core::oracles::{l1min_oracle, lasso_oracle, nnls_oracle};
use snn_core::{geometry, Cascade, Instance, ProblemKind, SnnError, SpikeMode, Trace};

#[derive(Parser)]
#[command(name = "snnsolve", version, about = "Spiking-network solvers for NNLS, l1 minimization and Lasso")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random-sphere instance file.
    Gen {
        #[command(flatten)]
        rsm: RsmArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the automatically chosen parameters.
    Params {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        kind: KindArgs,
    },
    /// Run the network and write trace.csv, summary.json, instance.json.
    Run(RunArgs),
    /// Run the reference solver for a problem kind.
    Oracle {
        #[command(flatten)]
        source: SourceArgs,
        #[command(flatten)]
        kind: KindArgs,
    },
    /// Niceness report of the instance matrix.
    Niceness {
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Check the invariants of a finished run directory.
    Verify {
        /// Directory written by `run --out`.
        dir: PathBuf,
    },
}

#[derive(Args)]
struct RsmArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `gaussian` or `sparse:K`.
    #[arg(long, default_value = "gaussian", value_parser = parse_x_mode)]
    x_mode: XMode,
}

#[derive(Args)]
struct SourceArgs {
    /// Instance file; otherwise generate from --n, --m, --seed.
    #[arg(long, conflicts_with_all = ["n", "m", "seed", "x_mode"])]
    instance: Option<PathBuf>,
    #[arg(long, requires = "m")]
    n: Option<usize>,
    #[arg(long, requires = "n")]
    m: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_x_mode)]
    x_mode: Option<XMode>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Nnls,
    L1,
    L1signed,
    Lasso,
}

#[derive(Args)]
struct KindArgs {
    #[arg(long, value_enum, default_value = "nnls")]
    kind: KindArg,
    /// Lasso penalty.
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Signed,
    Nonneg,
}

#[derive(Clone, Copy, ValueEnum)]
enum CascadeArg {
    Exhaustive,
    Once,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    kind: KindArgs,
    /// Derive parameters from the instance. Without it --alpha, --eta,
    /// --dt and --tmax are required.
    #[arg(long)]
    auto_params: bool,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    cascade: Option<CascadeArg>,
    #[arg(long)]
    tmax: Option<u64>,
    #[arg(long, default_value_t = 1)]
    probe_every: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip the reference solver and the comparisons that need it.
    #[arg(long)]
    no_oracle: bool,
}

fn parse_x_mode(s: &str) -> Result<XMode, String> {
    XMode::parse(s).map_err(|e| e.to_string())
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

impl SourceArgs {
    fn source(&self) -> CliResult<InstanceSource> {
        match (&self.instance, self.n, self.m) {
            (Some(path), _, _) => Ok(InstanceSource::File(path.clone())),
            (None, Some(n), Some(m)) => Ok(InstanceSource::Rsm {
                n,
                m,
                seed: self.seed.unwrap_or(0),
                x_mode: self.x_mode.unwrap_or(XMode::Gaussian),
            }),
            _ => Err("give --instance PATH or --n and --m".into()),
        }
    }

    fn load(&self) -> CliResult<Instance> {
        Ok(match self.source()? {
            InstanceSource::File(path) => read_instance(&path)?.0,
            InstanceSource::Rsm { n, m, seed, x_mode } => gen_instance(n, m, seed, x_mode)?.0,
            InstanceSource::Given(inst) => inst,
        })
    }
}

impl KindArgs {
    fn kind(&self) -> CliResult<ProblemKind> {
        Ok(match self.kind {
            KindArg::Nnls => ProblemKind::Nnls,
            KindArg::L1 => ProblemKind::L1MinNonneg,
            KindArg::L1signed => ProblemKind::L1MinSigned,
            KindArg::Lasso => ProblemKind::lasso(self.beta.ok_or("--kind lasso needs --beta")?)?,
        })
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn gen(rsm: &RsmArgs, out: Option<&Path>) -> CliResult<()> {
    let (inst, prov) = gen_instance(rsm.n, rsm.m, rsm.seed, rsm.x_mode)?;
    match out {
        Some(path) => write_instance(path, &inst, Some(&prov))?,
        None => println!("{}", instance_to_json(&inst, Some(&prov))),
    }
    Ok(())
}

fn oracle(inst: &Instance, kind: ProblemKind) -> CliResult<()> {
    let res = match kind {
        ProblemKind::Nnls => nnls_oracle(inst, 1e-10)?,
        ProblemKind::L1MinNonneg => l1min_oracle(inst, SpikeMode::Nonneg)?,
        ProblemKind::L1MinSigned => l1min_oracle(inst, SpikeMode::Signed)?,
        ProblemKind::LassoNonneg { beta } => lasso_oracle(inst, beta, 1e-10)?,
    };
    print_json(&res)
}

fn run(args: &RunArgs) -> CliResult<bool> {
    let mut cfg = ExperimentConfig::new(args.source.source()?, args.kind.kind()?);
    cfg.auto_params = args.auto_params;
    cfg.overrides = ParamOverrides {
        tau: args.tau,
        alpha: args.alpha,
        eta: args.eta,
        dt: args.dt,
        mode: args.mode.map(|m| match m {
            ModeArg::Signed => SpikeMode::Signed,
            ModeArg::Nonneg => SpikeMode::Nonneg,
        }),
        cascade: args.cascade.map(|c| match c {
            CascadeArg::Exhaustive => Cascade::Exhaustive,
            CascadeArg::Once => Cascade::Once,
        }),
        t_max: args.tmax,
    };
    cfg.probe_every = args.probe_every;
    cfg.out_dir = args.out.clone();
    cfg.run_oracle = !args.no_oracle;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let out = run_experiment(&cfg)?;
    let s = &out.summary;
    if let Some(last) = &s.last {
        println!(
            "{} n={} m={}: step {} t={:.6} residual {:.6e} |r|_1 {:.6e} spikes {}",
            s.kind.name(),
            s.n,
            s.m,
            last.step,
            last.time,
            last.residual,
            last.l1_norm,
            last.cum_spikes
        );
    }
    match &s.verification {
        Some(rep) => {
            print!("{rep}");
            Ok(rep.passed())
        }
        None => Ok(true),
    }
}

fn verify_dir(dir: &Path) -> CliResult<bool> {
    let trace = Trace::load_csv(&dir.join("trace.csv"))?;
    let summary: Summary = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json"))?)?;
    let (inst, _) = read_instance(&dir.join("instance.json"))?;
    let params = summary
        .params
        .ok_or_else(|| SnnError::InvalidParams("summary has no parameters".into()))?;
    let rep = verify(&trace, &inst, &params, Some(summary.kind))?;
    print!("{rep}");
    Ok(rep.passed())
}

fn dispatch(cli: Cli) -> CliResult<bool> {
    match cli.command {
        Command::Gen { rsm, out } => gen(&rsm, out.as_deref())?,
        Command::Params { source, kind } => print_json(&auto_params_detailed(&source.load()?, kind.kind()?)?)?,
        Command::Run(args) => return run(&args),
        Command::Oracle { source, kind } => oracle(&source.load()?, kind.kind()?)?,
        Command::Niceness { source } => print_json(&geometry::niceness(source.load()?.f())?)?,
        Command::Verify { dir } => return verify_dir(&dir),
    }
    Ok(true)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
