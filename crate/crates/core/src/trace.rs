//! Probed trajectory of a run and its CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Result, SnnError};
use crate::io::{fmt17, parse_f64};
use crate::linalg::Vector;

pub const CSV_HEADER: [&str; 8] = [
    "step",
    "time",
    "residual_l2",
    "l1_rate",
    "cum_spikes",
    "pinv_norm_v",
    "dual_violation",
    "conservation_defect",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub time: f64,
    /// `|| x - F^T r ||`.
    pub residual_l2: f64,
    /// `|| r ||_1`.
    pub l1_rate: f64,
    /// Total spike events so far.
    pub cum_spikes: u64,
    /// `|| v ||_{(FF^T)^+}`.
    pub pinv_norm_v: f64,
    /// Violation of the `eta`-scaled dual constraints at `u`.
    pub dual_violation: f64,
    /// `None` for leaky runs.
    pub conservation_defect: Option<f64>,
}

/// Quantities kept alongside each row but not written to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RowDiagnostics {
    /// `|| v - F u ||_inf`.
    pub coupling_defect: f64,
    /// `|| x_F - F^T r ||`.
    pub residual_rowspace: f64,
    /// `x^T u / eta`.
    pub dual_value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    /// Parallel to `rows`; empty for traces read back from CSV.
    pub diagnostics: Vec<RowDiagnostics>,
    /// Firing rate at the last probed step.
    pub last_rate: Option<Vector>,
}

impl Trace {
    pub fn push(&mut self, row: TraceRow, diag: RowDiagnostics) {
        self.rows.push(row);
        self.diagnostics.push(diag);
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn has_diagnostics(&self) -> bool {
        !self.rows.is_empty() && self.diagnostics.len() == self.rows.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.step.to_string(),
                fmt17(r.time),
                fmt17(r.residual_l2),
                fmt17(r.l1_rate),
                r.cum_spikes.to_string(),
                fmt17(r.pinv_norm_v),
                fmt17(r.dual_violation),
                r.conservation_defect.map(fmt17).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
        if header != CSV_HEADER {
            return Err(SnnError::Parse(format!("unexpected trace header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let int = |k: usize| {
                rec[k]
                    .parse::<u64>()
                    .map_err(|e| SnnError::Parse(format!("{:?}: {e}", &rec[k])))
            };
            rows.push(TraceRow {
                step: int(0)?,
                time: parse_f64(&rec[1])?,
                residual_l2: parse_f64(&rec[2])?,
                l1_rate: parse_f64(&rec[3])?,
                cum_spikes: int(4)?,
                pinv_norm_v: parse_f64(&rec[5])?,
                dual_violation: parse_f64(&rec[6])?,
                conservation_defect: match rec[7].trim() {
                    "" => None,
                    s => Some(parse_f64(s)?),
                },
            });
        }
        Ok(Self { rows, diagnostics: Vec::new(), last_rate: None })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
