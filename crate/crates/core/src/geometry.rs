//! Geometry of the dual polytope `{u : F u <= eta}` (two-sided in signed
//! mode): walls, active sets, vertices, the niceness parameter, and the
//! ideal coupling / ideal solution diagnostics.
//!
//! Everything here enumerates subsets and is exponential in `m`. A cap on
//! the number of enumerated subsets guards the runtime.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::engine::SpikeMode;
use crate::error::{Result, SnnError};
use crate::linalg::{check_len, lstsq, min_singular_value, rows_of, Matrix, Vector};

pub const ENUMERATION_CAP: u128 = 1_000_000;
/// Subsystems with a smaller singular value count as singular.
pub const TOL_SINGULAR: f64 = 1e-10;
/// Tightness tolerance for wall membership in the ideal coupling.
pub const TOL_TIGHT: f64 = 1e-9;
const TOL_MERGE: f64 = 1e-9;
const TOL_UNIT: f64 = 1e-9;

/// The hyperplane `sign * F_row . u = eta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Wall {
    pub row: usize,
    pub sign: i8,
}

impl Wall {
    pub fn pos(row: usize) -> Self {
        Self { row, sign: 1 }
    }

    pub fn neg(row: usize) -> Self {
        Self { row, sign: -1 }
    }

    /// One-based signed label: `+(row+1)` or `-(row+1)`.
    pub fn label(&self) -> i64 {
        self.sign as i64 * (self.row as i64 + 1)
    }

    pub fn normal(&self, f: &Matrix) -> Vector {
        f.row(self.row).transpose() * self.sign as f64
    }
}

/// All walls of the polytope for a spike mode.
pub fn walls(n: usize, mode: SpikeMode) -> Vec<Wall> {
    match mode {
        SpikeMode::Nonneg => (0..n).map(Wall::pos).collect(),
        SpikeMode::Signed => (0..n).flat_map(|i| [Wall::pos(i), Wall::neg(i)]).collect(),
    }
}

/// Sorted set of walls.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSet {
    walls: Vec<Wall>,
}

impl ActiveSet {
    pub fn new(mut walls: Vec<Wall>) -> Self {
        walls.sort();
        walls.dedup();
        Self { walls }
    }

    /// Non-negative walls on the given rows.
    pub fn from_rows(rows: &[usize]) -> Self {
        Self::new(rows.iter().copied().map(Wall::pos).collect())
    }

    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    pub fn labels(&self) -> Vec<i64> {
        self.walls.iter().map(Wall::label).collect()
    }

    pub fn len(&self) -> usize {
        self.walls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walls.is_empty()
    }

    pub fn contains(&self, w: Wall) -> bool {
        self.walls.binary_search(&w).is_ok()
    }
}

/// Walls with `|sign * F_i . u - eta| <= tol`.
pub fn active_walls(f: &Matrix, u: &Vector, eta: f64, mode: SpikeMode, tol: f64) -> Result<ActiveSet> {
    check_len("u", u, f.ncols())?;
    if !(tol > 0.0) {
        return Err(SnnError::InvalidParams(format!("tol must be > 0, got {tol}")));
    }
    let fu = f * u;
    let tight = walls(f.nrows(), mode)
        .into_iter()
        .filter(|w| (w.sign as f64 * fu[w.row] - eta).abs() <= tol)
        .collect();
    Ok(ActiveSet::new(tight))
}

/// `C(n, k)`, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| {
        acc.saturating_mul((n - i) as u128) / (i as u128 + 1)
    })
}

fn check_cap(required: u128, cap: u128) -> Result<()> {
    if required > cap {
        return Err(SnnError::EnumerationCapExceeded { required, cap });
    }
    Ok(())
}

fn vertex_cost(n: usize, m: usize) -> u128 {
    binomial(n, m).saturating_mul(1u128.checked_shl(m as u32).unwrap_or(u128::MAX))
}

/// Every `x` in `{-1, 1}^m`, in lexicographic order with `-1 < 1`.
fn sign_vectors(m: usize) -> impl Iterator<Item = Vector> {
    (0..1u64 << m).map(move |bits| {
        Vector::from_fn(m, |j, _| if bits >> (m - 1 - j) & 1 == 1 { 1.0 } else { -1.0 })
    })
}

/// Where an enumerated vertex came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexOrigin {
    pub subset: Vec<usize>,
    pub signs: Vec<i8>,
}

impl VertexOrigin {
    fn new(subset: &[usize], x: &Vector) -> Self {
        Self {
            subset: subset.to_vec(),
            signs: x.iter().map(|&s| s as i8).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VertexEnumeration {
    /// Distinct vertices, first occurrence in enumeration order.
    pub vertices: Vec<Vector>,
    pub origins: Vec<VertexOrigin>,
    /// Number of solved systems before merging duplicates.
    pub raw: usize,
    /// Row subsets skipped as singular.
    pub singular_subsets: usize,
    pub enumerated_subsets: usize,
}

/// Solutions of `F_S v = eta x` over row subsets `S` of size `m` with
/// invertible `F_S` and sign vectors `x`.
pub fn enumerate_vertices(f: &Matrix, eta: f64) -> Result<VertexEnumeration> {
    enumerate_vertices_capped(f, eta, ENUMERATION_CAP)
}

pub fn enumerate_vertices_capped(f: &Matrix, eta: f64, cap: u128) -> Result<VertexEnumeration> {
    let (n, m) = f.shape();
    check_cap(vertex_cost(n, m), cap)?;
    let mut out = VertexEnumeration {
        vertices: Vec::new(),
        origins: Vec::new(),
        raw: 0,
        singular_subsets: 0,
        enumerated_subsets: 0,
    };
    for subset in (0..n).combinations(m) {
        out.enumerated_subsets += 1;
        let fs = rows_of(f, &subset);
        if min_singular_value(&fs) < TOL_SINGULAR {
            out.singular_subsets += 1;
            continue;
        }
        let lu = fs.lu();
        for x in sign_vectors(m) {
            let v = lu.solve(&(&x * eta)).expect("nonsingular subset");
            out.raw += 1;
            if !out.vertices.iter().any(|w| (w - &v).amax() <= TOL_MERGE) {
                out.vertices.push(v);
                out.origins.push(VertexOrigin::new(&subset, &x));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NondegenWitness {
    pub subset: Vec<usize>,
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexWitness {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub first_origin: VertexOrigin,
    pub second_origin: VertexOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoeffWitness {
    pub subset: Vec<usize>,
    pub signs: Vec<i8>,
    /// Row of `F` whose coefficient is smallest.
    pub row: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NicenessReport {
    /// Smallest distance from a row to the span of the other rows of an
    /// `m`-subset.
    pub gamma_nondegen: f64,
    /// Smallest distance between two distinct vertices (`eta = 1`).
    pub gamma_vertex: f64,
    /// Smallest `|z_i|` over `sum_i z_i F_i = x`, `x` a sign vector.
    pub gamma_coeff: f64,
    pub gamma: f64,
    pub enumerated_subsets: usize,
    pub singular_subsets: usize,
    pub nondegen_witness: Option<NondegenWitness>,
    pub vertex_witness: Option<VertexWitness>,
    pub coeff_witness: Option<CoeffWitness>,
}

impl NicenessReport {
    pub fn is_nice(&self) -> bool {
        self.gamma > 0.0
    }
}

fn check_unit_rows(f: &Matrix) -> Result<()> {
    for (row, r) in f.row_iter().enumerate() {
        let norm = r.norm();
        if (norm - 1.0).abs() > TOL_UNIT {
            return Err(SnnError::RowsNotNormalized { row, norm });
        }
    }
    Ok(())
}

/// Distance from row `k` of `fs` to the span of its other rows.
fn distance_to_others(fs: &Matrix, k: usize) -> f64 {
    let target = fs.row(k).transpose();
    if fs.nrows() == 1 {
        return target.norm();
    }
    let others: Vec<usize> = (0..fs.nrows()).filter(|&i| i != k).collect();
    let basis = rows_of(fs, &others).transpose();
    let coef = lstsq(&basis, &target);
    (target - basis * coef).norm()
}

/// The niceness parameter of a matrix with unit rows.
///
/// With `n < m` no row subset spans the space and the result is zero.
pub fn niceness(f: &Matrix) -> Result<NicenessReport> {
    niceness_capped(f, ENUMERATION_CAP)
}

pub fn niceness_capped(f: &Matrix, cap: u128) -> Result<NicenessReport> {
    check_unit_rows(f)?;
    let (n, m) = f.shape();
    let mut report = NicenessReport {
        gamma_nondegen: f64::INFINITY,
        gamma_vertex: f64::INFINITY,
        gamma_coeff: f64::INFINITY,
        gamma: 0.0,
        enumerated_subsets: 0,
        singular_subsets: 0,
        nondegen_witness: None,
        vertex_witness: None,
        coeff_witness: None,
    };
    if n < m {
        report.gamma_nondegen = 0.0;
        report.gamma_vertex = 0.0;
        report.gamma_coeff = 0.0;
        return Ok(report);
    }
    check_cap(vertex_cost(n, m), cap)?;

    for subset in (0..n).combinations(m) {
        report.enumerated_subsets += 1;
        let fs = rows_of(f, &subset);
        if min_singular_value(&fs) < TOL_SINGULAR {
            report.singular_subsets += 1;
            if report.gamma_nondegen > 0.0 {
                report.gamma_nondegen = 0.0;
                report.nondegen_witness = Some(NondegenWitness { subset: subset.clone(), row: subset[0] });
            }
            if report.gamma_coeff > 0.0 {
                report.gamma_coeff = 0.0;
                report.coeff_witness = Some(CoeffWitness {
                    subset: subset.clone(),
                    signs: vec![1; m],
                    row: subset[0],
                });
            }
            continue;
        }
        for (k, &row) in subset.iter().enumerate() {
            let d = distance_to_others(&fs, k);
            if d < report.gamma_nondegen {
                report.gamma_nondegen = d;
                report.nondegen_witness = Some(NondegenWitness { subset: subset.clone(), row });
            }
        }
        // sum_i z_i F_i = x  <=>  F_S^T z = x
        let lu = fs.transpose().lu();
        for x in sign_vectors(m) {
            let z = lu.solve(&x).expect("nonsingular subset");
            let (k, zmin) = z.iter().map(|v| v.abs()).enumerate().fold(
                (0, f64::INFINITY),
                |best, (k, a)| if a < best.1 { (k, a) } else { best },
            );
            if zmin < report.gamma_coeff {
                report.gamma_coeff = zmin;
                report.coeff_witness = Some(CoeffWitness {
                    subset: subset.clone(),
                    signs: x.iter().map(|&s| s as i8).collect(),
                    row: subset[k],
                });
            }
        }
    }

    let verts = enumerate_vertices_capped(f, 1.0, cap)?;
    for (a, b) in (0..verts.vertices.len()).tuple_combinations() {
        let d = (&verts.vertices[a] - &verts.vertices[b]).norm();
        if d < report.gamma_vertex {
            report.gamma_vertex = d;
            report.vertex_witness = Some(VertexWitness {
                first: verts.vertices[a].iter().copied().collect(),
                second: verts.vertices[b].iter().copied().collect(),
                first_origin: verts.origins[a].clone(),
                second_origin: verts.origins[b].clone(),
            });
        }
    }
    if verts.vertices.len() < 2 {
        report.gamma_vertex = 0.0;
    }
    // Components at round-off level are exact degeneracies.
    for g in [&mut report.gamma_nondegen, &mut report.gamma_vertex, &mut report.gamma_coeff] {
        if *g < TOL_SINGULAR {
            *g = 0.0;
        }
    }
    report.gamma = report
        .gamma_nondegen
        .min(report.gamma_vertex)
        .min(report.gamma_coeff)
        .max(0.0);
    Ok(report)
}

/// Largest violation `max_w (a_w . u - level)` over the walls, or `-level`
/// when there are none.
pub fn polytope_violation(f: &Matrix, u: &Vector, level: f64, mode: SpikeMode) -> f64 {
    let fu = f * u;
    let worst = match mode {
        SpikeMode::Signed => fu.amax(),
        SpikeMode::Nonneg => fu.max(),
    };
    worst - level
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealCoupling {
    pub u_ideal: Vec<f64>,
    pub gamma_set: ActiveSet,
    /// Coefficients over `gamma_set`, in its order.
    pub z: Vec<f64>,
    pub tau_cpl: f64,
}

impl IdealCoupling {
    pub fn u_ideal(&self) -> Vector {
        Vector::from_column_slice(&self.u_ideal)
    }
}

/// Decomposes `u = u_ideal + sum_{w in G} z_w a_w` with `z >= 0`, where
/// `u_ideal` lies in the `(1 - tau_cpl) eta` polytope and `G` is exactly
/// the set of walls tight at `u_ideal`.
pub fn ideal_coupling(
    f: &Matrix,
    u: &Vector,
    eta: f64,
    tau_cpl: f64,
    mode: SpikeMode,
) -> Result<IdealCoupling> {
    ideal_coupling_capped(f, u, eta, tau_cpl, mode, ENUMERATION_CAP)
}

pub fn ideal_coupling_capped(
    f: &Matrix,
    u: &Vector,
    eta: f64,
    tau_cpl: f64,
    mode: SpikeMode,
    cap: u128,
) -> Result<IdealCoupling> {
    let (n, m) = f.shape();
    check_len("u", u, m)?;
    if !(tau_cpl > 0.0 && tau_cpl < 1.0) {
        return Err(SnnError::InvalidParams(format!("tau_cpl must lie in (0, 1), got {tau_cpl}")));
    }
    let outside = polytope_violation(f, u, eta, mode);
    if outside > TOL_TIGHT {
        return Err(SnnError::PointOutsidePolytope(outside));
    }
    let all = walls(n, mode);
    // Walls sharing a hyperplane are enumerated once; the copies join the
    // active set with a zero coefficient.
    let mut distinct: Vec<Wall> = Vec::new();
    let mut aliases: Vec<(Wall, Wall)> = Vec::new();
    for &w in &all {
        let nw = w.normal(f);
        match distinct.iter().find(|d| (d.normal(f) - &nw).amax() <= 1e-12) {
            Some(&d) => aliases.push((w, d)),
            None => distinct.push(w),
        }
    }
    let required = (0..=m.min(distinct.len())).map(|k| binomial(distinct.len(), k)).sum();
    check_cap(required, cap)?;

    let level = (1.0 - tau_cpl) * eta;
    let fu = f * u;
    let mut found: Vec<IdealCoupling> = Vec::new();
    for k in 0..=m.min(distinct.len()) {
        for gamma in distinct.iter().copied().combinations(k) {
            if gamma.iter().tuple_windows().any(|(a, b)| a.row == b.row) {
                continue;
            }
            let a = Matrix::from_fn(k, m, |i, j| gamma[i].sign as f64 * f[(gamma[i].row, j)]);
            let z = if k == 0 {
                Vector::zeros(0)
            } else {
                let aat = &a * a.transpose();
                if min_singular_value(&aat) < TOL_SINGULAR {
                    continue;
                }
                let rhs = Vector::from_fn(k, |i, _| gamma[i].sign as f64 * fu[gamma[i].row] - level);
                match aat.lu().solve(&rhs) {
                    Some(z) => z,
                    None => continue,
                }
            };
            if z.iter().any(|&zi| zi < -1e-10) {
                continue;
            }
            let u_ideal = u - a.transpose() * &z;
            let fv = f * &u_ideal;
            let consistent = distinct.iter().all(|w| {
                let gap = w.sign as f64 * fv[w.row] - level;
                let tight = gap.abs() <= TOL_TIGHT;
                gap <= TOL_TIGHT && tight == gamma.contains(w)
            });
            if consistent {
                let mut pairs: Vec<(Wall, f64)> = gamma.iter().copied().zip(z.iter().copied()).collect();
                for &(w, d) in &aliases {
                    if gamma.contains(&d) {
                        pairs.push((w, 0.0));
                    }
                }
                pairs.sort_by_key(|p| p.0);
                found.push(IdealCoupling {
                    u_ideal: u_ideal.iter().copied().collect(),
                    gamma_set: ActiveSet::new(pairs.iter().map(|p| p.0).collect()),
                    z: pairs.iter().map(|p| p.1).collect(),
                    tau_cpl,
                });
            }
        }
    }
    match found.len() {
        0 => Err(SnnError::NoCellFound),
        1 => Ok(found.pop().expect("one cell")),
        k => Err(SnnError::MultipleCells(k)),
    }
}

/// Minimizes `||b - A c||` over `c >= 0` by the Lawson-Hanson active-set
/// method. Returns the minimizer and the final KKT residual
/// `max(0, max_j (A^T (b - A c))_j)` over inactive `j`.
pub fn nnls_active_set(a: &Matrix, b: &Vector, tol: f64) -> (Vector, f64) {
    let k = a.ncols();
    let mut c = Vector::zeros(k);
    let mut passive = vec![false; k];
    let mut blocked = vec![false; k];
    let max_outer = 3 * k + 10;

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &c);
        let pick = (0..k)
            .filter(|&j| !passive[j] && !blocked[j] && w[j] > tol)
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = pick else { break };
        passive[j] = true;
        blocked.iter_mut().for_each(|b| *b = false);

        loop {
            let idx: Vec<usize> = (0..k).filter(|&i| passive[i]).collect();
            let sub = Matrix::from_fn(a.nrows(), idx.len(), |r, s| a[(r, idx[s])]);
            let sol = lstsq(&sub, b);
            let mut s = Vector::zeros(k);
            for (p, &i) in idx.iter().enumerate() {
                s[i] = sol[p];
            }
            if idx.iter().all(|&i| s[i] > 0.0) {
                c = s;
                break;
            }
            // Step towards s until the first passive coefficient hits zero.
            let (hit, step) = idx
                .iter()
                .filter(|&&i| s[i] <= 0.0)
                .map(|&i| (i, c[i] / (c[i] - s[i])))
                .fold((j, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            if hit == j && step == 0.0 {
                // The entering column cannot become positive: exclude it
                // until the passive set changes.
                passive[j] = false;
                blocked[j] = true;
                break;
            }
            c += (&s - &c) * step;
            c[hit] = 0.0;
            passive[hit] = false;
            for &i in &idx {
                if c[i] <= 0.0 {
                    c[i] = 0.0;
                    passive[i] = false;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    let w = a.transpose() * (b - a * &c);
    let kkt = (0..k)
        .map(|j| if c[j] > 0.0 { w[j].abs() } else { w[j].max(0.0) })
        .fold(0.0, f64::max);
    (c, kkt)
}

/// Conic projection of `x` onto the cone spanned by the wall normals in
/// `gamma_set`: the minimizer of `||x - F^T r||` with `r` supported on the
/// rows of `gamma_set` and `sign_w r_row >= 0` for each wall.
pub fn ideal_solution(f: &Matrix, x: &Vector, gamma_set: &ActiveSet) -> Result<Vector> {
    let (n, m) = f.shape();
    check_len("x", x, m)?;
    if let Some(w) = gamma_set.walls().iter().find(|w| w.row >= n) {
        return Err(SnnError::DimensionMismatch { what: "wall row", expected: n, found: w.row });
    }
    let mut r = Vector::zeros(n);
    if gamma_set.is_empty() {
        return Ok(r);
    }
    let ws = gamma_set.walls();
    let a = Matrix::from_fn(m, ws.len(), |i, j| ws[j].sign as f64 * f[(ws[j].row, i)]);
    let scale = 1.0 + (a.transpose() * x).amax();
    let (c, _) = nnls_active_set(&a, x, 1e-10 * scale);
    for (w, cj) in ws.iter().zip(c.iter()) {
        r[w.row] += w.sign as f64 * cj;
    }
    Ok(r)
}
