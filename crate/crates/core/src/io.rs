//! Text formats: instance documents (JSON) and number formatting.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SnnError};
use crate::linalg::{Matrix, Vector};
use crate::problems::Instance;

/// 17 significant digits, scientific notation. Round-trips every `f64`.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_vec(out: &mut String, v: impl Iterator<Item = f64>) {
    out.push('[');
    for (i, x) in v.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(&fmt17(x));
    }
    out.push(']');
}

/// How a generated instance was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    pub prng: String,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub x_mode: String,
}

#[derive(Deserialize)]
struct InstanceDoc {
    #[serde(rename = "F")]
    f: Vec<Vec<f64>>,
    x: Vec<f64>,
    #[serde(default)]
    provenance: Option<Provenance>,
}

/// Renders an instance as a JSON document with fields `F` (rows) and `x`.
pub fn instance_to_json(inst: &Instance, provenance: Option<&Provenance>) -> String {
    let f = inst.f();
    let mut out = String::from("{\n  \"F\": [\n");
    for i in 0..f.nrows() {
        out.push_str("    ");
        write_vec(&mut out, f.row(i).iter().copied());
        out.push_str(if i + 1 < f.nrows() { ",\n" } else { "\n" });
    }
    out.push_str("  ],\n  \"x\": ");
    write_vec(&mut out, inst.x().iter().copied());
    if let Some(p) = provenance {
        let _ = write!(
            out,
            ",\n  \"provenance\": {}",
            serde_json::to_string(p).expect("provenance serializes")
        );
    }
    out.push_str("\n}\n");
    out
}

pub fn instance_from_json(text: &str) -> Result<(Instance, Option<Provenance>)> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    let n = doc.f.len();
    if n == 0 {
        return Err(SnnError::Empty);
    }
    let m = doc.f[0].len();
    for row in &doc.f {
        if row.len() != m {
            return Err(SnnError::DimensionMismatch {
                what: "row of F",
                expected: m,
                found: row.len(),
            });
        }
    }
    let f = Matrix::from_row_iterator(n, m, doc.f.into_iter().flatten());
    let inst = Instance::new(f, Vector::from_vec(doc.x))?;
    Ok((inst, doc.provenance))
}

pub fn read_instance(path: &Path) -> Result<(Instance, Option<Provenance>)> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_instance(path: &Path, inst: &Instance, provenance: Option<&Provenance>) -> Result<()> {
    std::fs::write(path, instance_to_json(inst, provenance))?;
    Ok(())
}

pub fn parse_f64(field: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| SnnError::Parse(format!("{field:?}: {e}")))
}
