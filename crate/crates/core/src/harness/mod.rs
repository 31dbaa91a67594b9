//! Instance generation, parameter selection, experiment runs and their
//! verification.

mod experiment;
mod params;
mod rsm;
mod verify;

pub use experiment::{
    run_batch, run_experiment, ExperimentConfig, ExperimentOutcome, FinalState, InstanceSource,
    OracleGaps, OracleSummary, ParamOverrides, Summary,
};
pub use params::{auto_params, auto_params_detailed, horizon_time, AutoParams};
pub use rsm::{gen_instance, gen_rsm, XMode, PRNG_NAME};
pub use verify::{verify, Check, CheckStatus, VerificationReport};
