use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnnError};
use crate::io::Provenance;
use crate::linalg::{Matrix, Vector};
use crate::problems::Instance;

/// Generator behind every seeded instance.
pub const PRNG_NAME: &str = "ChaCha20Rng";

/// How the target `x` of a generated instance is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum XMode {
    /// `x = F^T r0` with `r0 >= 0` supported on `nonzeros` random rows,
    /// entries uniform in `[0.5, 1.5)`.
    Sparse { nonzeros: usize },
    /// Independent standard normal entries.
    Gaussian,
}

impl XMode {
    pub fn label(&self) -> String {
        match self {
            XMode::Sparse { nonzeros } => format!("sparse:{nonzeros}"),
            XMode::Gaussian => "gaussian".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "gaussian" => Ok(XMode::Gaussian),
            None if s == "sparse" => Err(SnnError::Parse("sparse mode needs a count, e.g. sparse:2".into())),
            Some(("sparse", k)) => k
                .parse()
                .map(|nonzeros| XMode::Sparse { nonzeros })
                .map_err(|e| SnnError::Parse(format!("sparse count {k:?}: {e}"))),
            _ => Err(SnnError::Parse(format!("unknown x mode {s:?}"))),
        }
    }
}

fn unit_gaussian_row(rng: &mut ChaCha20Rng, m: usize) -> Vec<f64> {
    loop {
        let row: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            return row.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn check_shape(n: usize, m: usize) -> Result<()> {
    if m < 1 || n < m {
        return Err(SnnError::InvalidParams(format!("need n >= m >= 1, got n={n}, m={m}")));
    }
    Ok(())
}

fn draw_matrix(rng: &mut ChaCha20Rng, n: usize, m: usize) -> Matrix {
    let rows: Vec<f64> = (0..n).flat_map(|_| unit_gaussian_row(rng, m)).collect();
    Matrix::from_row_slice(n, m, &rows)
}

/// `n x m` matrix whose rows are independent uniform points on the unit
/// sphere.
pub fn gen_rsm(n: usize, m: usize, seed: u64) -> Result<Matrix> {
    check_shape(n, m)?;
    Ok(draw_matrix(&mut ChaCha20Rng::seed_from_u64(seed), n, m))
}

/// A random instance: `F` as in [`gen_rsm`], then `x` from the same stream.
pub fn gen_instance(n: usize, m: usize, seed: u64, x_mode: XMode) -> Result<(Instance, Provenance)> {
    check_shape(n, m)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let f = draw_matrix(&mut rng, n, m);
    let x = match x_mode {
        XMode::Gaussian => Vector::from_fn(m, |_, _| rng.sample(StandardNormal)),
        XMode::Sparse { nonzeros } => {
            if nonzeros < 1 || nonzeros > n {
                return Err(SnnError::InvalidParams(format!(
                    "sparse x needs 1 <= nonzeros <= n, got {nonzeros}"
                )));
            }
            let mut support = sample(&mut rng, n, nonzeros).into_vec();
            support.sort_unstable();
            let mut r0 = Vector::zeros(n);
            for i in support {
                r0[i] = rng.random_range(0.5..1.5);
            }
            f.transpose() * r0
        }
    };
    let provenance = Provenance {
        generator: "rsm".into(),
        prng: PRNG_NAME.into(),
        seed,
        n,
        m,
        x_mode: x_mode.label(),
    };
    Ok((Instance::new(f, x)?, provenance))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_unit() {
        let f = gen_rsm(20, 5, 1).unwrap();
        for row in f.row_iter() {
            assert!((row.norm() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn same_seed_same_bits() {
        assert_eq!(gen_rsm(6, 3, 42).unwrap(), gen_rsm(6, 3, 42).unwrap());
        assert_ne!(gen_rsm(6, 3, 42).unwrap(), gen_rsm(6, 3, 43).unwrap());
        let a = gen_instance(6, 3, 9, XMode::Sparse { nonzeros: 2 }).unwrap();
        let b = gen_instance(6, 3, 9, XMode::Sparse { nonzeros: 2 }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn instance_shares_the_matrix_stream() {
        let (inst, prov) = gen_instance(5, 2, 7, XMode::Gaussian).unwrap();
        assert_eq!(inst.f(), &gen_rsm(5, 2, 7).unwrap());
        assert_eq!(prov.prng, "ChaCha20Rng");
        assert_eq!(prov.x_mode, "gaussian");
    }

    #[test]
    fn sparse_targets_are_in_the_cone() {
        let (inst, _) = gen_instance(8, 3, 5, XMode::Sparse { nonzeros: 2 }).unwrap();
        let out = crate::oracles::l1min_oracle(&inst, crate::engine::SpikeMode::Nonneg).unwrap();
        assert!(out.residual < 1e-9);
    }

    #[test]
    fn shape_checks() {
        assert!(gen_rsm(2, 3, 0).is_err());
        assert!(gen_rsm(2, 0, 0).is_err());
        assert!(gen_instance(4, 2, 0, XMode::Sparse { nonzeros: 5 }).is_err());
    }

    #[test]
    fn x_mode_labels_parse_back() {
        for mode in [XMode::Gaussian, XMode::Sparse { nonzeros: 3 }] {
            assert_eq!(XMode::parse(&mode.label()).unwrap(), mode);
        }
        assert!(XMode::parse("uniform").is_err());
    }
}
