//! Spiking-network solvers for non-negative least squares, l1 minimization
//! and Lasso, with the geometry and reference oracles needed to check them.

pub mod engine;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod oracles;
pub mod problems;
pub mod trace;

pub use engine::{Cascade, Network, RunFailure, SnnParams, SnnState, SpikeMode, StepEvent};
pub use error::{Result, SnnError};
pub use linalg::{GramFactor, Matrix, SpectralData, Vector};
pub use problems::{Instance, ProblemKind, SolveResult};
pub use trace::{RowDiagnostics, Trace, TraceRow};
