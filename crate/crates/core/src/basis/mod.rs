//! Divergence-free slip bases on the torus and the slab.
//!
//! A [`BasisSet`] holds L²-orthonormal modes ordered by their gradient energy
//! together with tabulated values and gradients on an oversampled quadrature
//! grid. The tables drive the physical-space transforms used by the operators.

mod certify;
mod io;
mod mode;
mod slab;

pub use certify::{verify_basis, verify_basis_on, verify_basis_with, CertificationReport, CertificationTolerances};
pub use io::{export_basis, import_basis, read_basis, write_basis, BASIS_FORMAT_VERSION};
pub use mode::{BasisMode, ModeSample, ModeShape, Trig};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::domain::{DomainSpec, GridResolution, QuadratureGrid};
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::legendre::legendre_with_derivatives;
use slab::{solve_family, Family, VerticalSetup};

/// Coefficient vector `g` of a Galerkin field `Σ g_i w_i`.
pub type Coeffs = DVector<f64>;

/// Relative tolerance under which two mode energies are treated as equal.
const ENERGY_TIE_RTOL: f64 = 1e-9;

/// Mode values and gradients on the nodes of a grid.
#[derive(Debug, Clone)]
pub(crate) struct NodalTable {
    pub nodes: usize,
    /// `[mode][node][component]`.
    pub values: Vec<f64>,
    /// `[mode][node][3 * r + c]` holding `∂_c w_r`.
    pub grads: Vec<f64>,
    /// `[mode][wall][horizontal node][component]`.
    pub wall_values: Vec<f64>,
}

impl NodalTable {
    pub fn mode_values(&self, i: usize) -> &[f64] {
        &self.values[i * 3 * self.nodes..(i + 1) * 3 * self.nodes]
    }

    pub fn mode_grads(&self, i: usize) -> &[f64] {
        &self.grads[i * 9 * self.nodes..(i + 1) * 9 * self.nodes]
    }
}

/// Velocity and velocity gradient of a Galerkin field at every grid node.
#[derive(Debug, Clone)]
pub struct FieldSamples {
    /// `[node][component]`.
    pub values: Vec<f64>,
    /// `[node][3 * r + c]` holding `∂_c u_r`; empty when gradients were not requested.
    pub grads: Vec<f64>,
}

/// An ordered, certified-by-construction orthonormal basis.
#[derive(Debug, Clone)]
pub struct BasisSet {
    domain: DomainSpec,
    modes: Vec<BasisMode>,
    grid: QuadratureGrid,
    resolution: GridResolution,
    vertical_degree: usize,
    table: NodalTable,
    weights: Vec<f64>,
    h1_gram: DMatrix<f64>,
    boundary_gram: DMatrix<f64>,
    hash: String,
}

impl BasisSet {
    /// Build the `m` lowest-energy modes of `domain`.
    pub fn build(domain: DomainSpec, m: usize, resolution: GridResolution) -> Result<Self> {
        domain.validate()?;
        if m == 0 {
            return Err(Error::InvalidParameter {
                name: "m",
                reason: "at least one mode is required".into(),
            });
        }
        check_oversampling(resolution.oversampling)?;
        let (modes, degree) = match domain {
            DomainSpec::Torus { periods } => (torus_modes(periods, m), 0),
            DomainSpec::Slab { .. } => slab_modes(&domain, m)?,
        };
        Self::assemble(domain, modes, degree, resolution)
    }

    /// Rebuild a basis from previously constructed modes (import, fault injection).
    pub fn from_parts(domain: DomainSpec, modes: Vec<BasisMode>, resolution: GridResolution) -> Result<Self> {
        domain.validate()?;
        check_oversampling(resolution.oversampling)?;
        if modes.is_empty() {
            return Err(Error::InvalidParameter {
                name: "modes",
                reason: "empty mode list".into(),
            });
        }
        let degree = modes
            .iter()
            .filter_map(|m| m.profile().map(|p| p.len().saturating_sub(1)))
            .max()
            .unwrap_or(0);
        Self::assemble(domain, modes, degree, resolution)
    }

    fn assemble(
        domain: DomainSpec,
        mut modes: Vec<BasisMode>,
        vertical_degree: usize,
        resolution: GridResolution,
    ) -> Result<Self> {
        for (i, m) in modes.iter_mut().enumerate() {
            m.index = i;
        }
        let shape = grid_shape(&domain, &modes, vertical_degree, &resolution)?;
        let grid = QuadratureGrid::for_domain(&domain, shape, resolution.oversampling);
        let table = tabulate(&domain, &modes, &grid, vertical_degree);
        let weights = grid.weights();
        let h1_gram = weighted_gram(&table.grads, 9, &weights, modes.len());
        let boundary_gram = wall_gram(&domain, &grid, &table, modes.len());
        let hash = basis_hash(&domain, &modes, &grid);
        Ok(BasisSet {
            domain,
            modes,
            grid,
            resolution,
            vertical_degree,
            table,
            weights,
            h1_gram,
            boundary_gram,
            hash,
        })
    }

    pub fn m(&self) -> usize {
        self.modes.len()
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn modes(&self) -> &[BasisMode] {
        &self.modes
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn resolution(&self) -> GridResolution {
        self.resolution
    }

    /// Legendre degree of the slab profiles (zero on the torus).
    pub fn vertical_degree(&self) -> usize {
        self.vertical_degree
    }

    /// Content hash over domain, modes and grid.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub(crate) fn node_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Gram matrix of `((w_i, w_j))`.
    pub fn h1_gram(&self) -> &DMatrix<f64> {
        &self.h1_gram
    }

    /// Gram matrix of `∫ α (w_i·τ)(w_j·τ) dS`.
    pub fn boundary_gram(&self) -> &DMatrix<f64> {
        &self.boundary_gram
    }

    /// Gram matrix of the L² inner product, by quadrature.
    pub fn l2_gram(&self) -> DMatrix<f64> {
        weighted_gram(&self.table.values, 3, &self.weights, self.m())
    }

    pub fn check_len(&self, v: &Coeffs) -> Result<()> {
        if v.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn inner_l2(&self, a: &Coeffs, b: &Coeffs) -> Result<f64> {
        self.check_len(a)?;
        self.check_len(b)?;
        Ok(a.dot(b))
    }

    pub fn inner_h1(&self, a: &Coeffs, b: &Coeffs) -> Result<f64> {
        self.check_len(a)?;
        self.check_len(b)?;
        Ok(a.dot(&(&self.h1_gram * b)))
    }

    pub fn inner_boundary(&self, a: &Coeffs, b: &Coeffs) -> Result<f64> {
        self.check_len(a)?;
        self.check_len(b)?;
        Ok(a.dot(&(&self.boundary_gram * b)))
    }

    /// Pointwise velocity `Σ g_i w_i` on the nodes of `grid`.
    pub fn evaluate_field(&self, coeffs: &Coeffs, grid: &QuadratureGrid) -> Result<VelocityField> {
        self.check_len(coeffs)?;
        if grid.fingerprint() == self.grid.fingerprint() {
            let s = self.synthesize(coeffs, false);
            let values = s.values.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
            return VelocityField::from_values(grid, values);
        }
        let values = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let p = grid.node(idx);
                let mut u = [0.0; 3];
                for (g, mode) in coeffs.iter().zip(&self.modes) {
                    if *g == 0.0 {
                        continue;
                    }
                    let s = mode.sample(&self.domain, p);
                    for r in 0..3 {
                        u[r] += g * s.value[r];
                    }
                }
                u
            })
            .collect();
        VelocityField::from_values(grid, values)
    }

    /// L² inner products `(field, w_j)` by quadrature on the basis grid.
    pub fn project_field(&self, field: &VelocityField) -> Result<Coeffs> {
        field.check_grid(&self.grid)?;
        let weighted: Vec<f64> = field
            .values()
            .iter()
            .zip(&self.weights)
            .flat_map(|(v, w)| [w * v[0], w * v[1], w * v[2]])
            .collect();
        Ok(self.analyze(&weighted))
    }

    /// Values (and optionally gradients) of `Σ g_i w_i` on the basis grid.
    pub fn synthesize(&self, coeffs: &Coeffs, with_grads: bool) -> FieldSamples {
        let n = self.table.nodes;
        let values = synthesize_table(&self.table.values, 3, n, coeffs.as_slice());
        let grads = if with_grads {
            synthesize_table(&self.table.grads, 9, n, coeffs.as_slice())
        } else {
            Vec::new()
        };
        FieldSamples { values, grads }
    }

    /// `out_j = Σ_x F(x)·w_j(x)` for a node field already multiplied by the
    /// quadrature weights.
    pub fn analyze(&self, weighted: &[f64]) -> Coeffs {
        let out: Vec<f64> = (0..self.m())
            .into_par_iter()
            .map(|j| self.table.mode_values(j).iter().zip(weighted).map(|(a, b)| a * b).sum())
            .collect();
        Coeffs::from_vec(out)
    }

    /// Wall-layer tangential velocity of `Σ g_i w_i`: `[wall][hnode][component]`.
    pub fn wall_values(&self, coeffs: &Coeffs) -> Vec<f64> {
        let len = self.table.wall_values.len() / self.m().max(1);
        let mut out = vec![0.0; len];
        for (i, g) in coeffs.iter().enumerate() {
            let src = &self.table.wall_values[i * len..(i + 1) * len];
            for (o, s) in out.iter_mut().zip(src) {
                *o += g * s;
            }
        }
        out
    }

    /// Node counts the automatic sizing rule gives at oversampling `os`.
    pub fn auto_grid_shape(&self, os: f64) -> [usize; 3] {
        grid_shape(
            &self.domain,
            &self.modes,
            self.vertical_degree,
            &GridResolution::with_oversampling(os),
        )
        .unwrap_or(self.grid.shape)
    }

    /// Whether the grid integrates products of three modes exactly, which makes
    /// the convection projection alias-free.
    pub fn resolves_cubic_products(&self) -> bool {
        let shape = self.grid.shape;
        let mut kmax = [0usize; 3];
        for m in &self.modes {
            for d in 0..3 {
                kmax[d] = kmax[d].max(m.wavevector[d].unsigned_abs() as usize);
            }
        }
        let periodic = if self.domain.is_torus() { 3 } else { 2 };
        let horizontal = (0..periodic).all(|d| shape[d] > 3 * kmax[d]);
        // Gauss–Legendre with n nodes is exact to degree 2n - 1
        let vertical = self.domain.is_torus() || 2 * shape[2] > 3 * self.vertical_degree;
        horizontal && vertical
    }

    /// Smallest positive eigenvalue of the gradient Gram matrix; the squared
    /// inverse of the span-restricted Poincaré constant.
    pub fn min_h1_eigenvalue(&self) -> f64 {
        let eig = self.h1_gram.clone().symmetric_eigen();
        eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `C_Ω` with `‖u‖_{L²} ≤ C_Ω ‖u‖_{H¹}` on the span.
    pub fn poincare_constant(&self) -> f64 {
        1.0 / self.min_h1_eigenvalue().sqrt()
    }
}

fn check_oversampling(os: f64) -> Result<()> {
    if !(os.is_finite() && os >= 1.0) {
        return Err(Error::InvalidParameter {
            name: "oversampling",
            reason: format!("must be >= 1, got {os}"),
        });
    }
    Ok(())
}

/// Per-node sum `Σ_i g_i table_i`, chunked over nodes. Each output entry is
/// accumulated over modes in index order, so the result does not depend on the
/// number of threads.
fn synthesize_table(table: &[f64], width: usize, nodes: usize, g: &[f64]) -> Vec<f64> {
    let len = width * nodes;
    let mut out = vec![0.0; len];
    const CHUNK: usize = 4096;
    out.par_chunks_mut(CHUNK).enumerate().for_each(|(c, dst)| {
        let start = c * CHUNK;
        for (i, gi) in g.iter().enumerate() {
            if *gi == 0.0 {
                continue;
            }
            let src = &table[i * len + start..i * len + start + dst.len()];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += gi * s;
            }
        }
    });
    out
}

fn weighted_gram(table: &[f64], width: usize, weights: &[f64], m: usize) -> DMatrix<f64> {
    let nodes = weights.len();
    let len = width * nodes;
    let weighted: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            table[i * len..(i + 1) * len]
                .iter()
                .enumerate()
                .map(|(k, v)| v * weights[k / width])
                .collect()
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..=i)
                .map(|j| {
                    weighted[i]
                        .iter()
                        .zip(&table[j * len..(j + 1) * len])
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect()
        })
        .collect();
    let mut g = DMatrix::zeros(m, m);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            g[(i, j)] = *v;
            g[(j, i)] = *v;
        }
    }
    g
}

fn wall_gram(domain: &DomainSpec, grid: &QuadratureGrid, table: &NodalTable, m: usize) -> DMatrix<f64> {
    let alpha = domain.friction();
    let mut g = DMatrix::zeros(m, m);
    if grid.walls.is_empty() || alpha == 0.0 {
        return g;
    }
    let len = table.wall_values.len() / m;
    let w = alpha * grid.cell_area;
    for i in 0..m {
        let a = &table.wall_values[i * len..(i + 1) * len];
        for j in 0..=i {
            let b = &table.wall_values[j * len..(j + 1) * len];
            let mut s = 0.0;
            for (pa, pb) in a.chunks_exact(3).zip(b.chunks_exact(3)) {
                // tangential components only; the normal trace vanishes
                s += pa[0] * pb[0] + pa[1] * pb[1];
            }
            g[(i, j)] = w * s;
            g[(j, i)] = w * s;
        }
    }
    g
}

/// Tabulate values, gradients and wall traces of every mode on `grid`.
pub(crate) fn tabulate(domain: &DomainSpec, modes: &[BasisMode], grid: &QuadratureGrid, degree: usize) -> NodalTable {
    let nodes = grid.len();
    let hnodes = grid.horizontal_len();
    let nwalls = grid.walls.len();
    let h = match domain {
        DomainSpec::Slab { half_height, .. } => *half_height,
        DomainSpec::Torus { .. } => 1.0,
    };
    // Legendre values at the vertical nodes and at the walls.
    let leg = |z: f64| legendre_with_derivatives(degree, z / h);
    let vertical: Vec<_> = if domain.is_torus() {
        Vec::new()
    } else {
        grid.z.iter().map(|&z| leg(z)).collect()
    };
    let wall_leg: Vec<_> = grid.walls.iter().map(|w| leg(w.z)).collect();
    let profile_at = |c: &[f64], l: &(Vec<f64>, Vec<f64>, Vec<f64>)| {
        let mut out = [0.0; 3];
        for (n, cn) in c.iter().enumerate() {
            out[0] += cn * l.0[n];
            out[1] += cn * l.1[n];
            out[2] += cn * l.2[n];
        }
        [out[0], out[1] / h, out[2] / (h * h)]
    };

    let per_mode: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = modes
        .par_iter()
        .map(|mode| {
            let k = mode.physical_wavevector(domain);
            let profiles: Vec<[f64; 3]> = match mode.profile() {
                Some(c) => vertical.iter().map(|l| profile_at(c, l)).collect(),
                None => Vec::new(),
            };
            let mut values = vec![0.0; 3 * nodes];
            let mut grads = vec![0.0; 9 * nodes];
            for idx in 0..nodes {
                let p = grid.node(idx);
                let theta = k[0] * p[0] + k[1] * p[1] + k[2] * p[2];
                let prof = if profiles.is_empty() {
                    [0.0; 3]
                } else {
                    profiles[idx / hnodes]
                };
                let s = mode.sample_parts(k, theta, prof);
                values[3 * idx..3 * idx + 3].copy_from_slice(&s.value);
                for r in 0..3 {
                    grads[9 * idx + 3 * r..9 * idx + 3 * r + 3].copy_from_slice(&s.grad[r]);
                }
            }
            let mut wall = vec![0.0; 3 * nwalls * hnodes];
            for (wi, l) in wall_leg.iter().enumerate() {
                let prof = match mode.profile() {
                    Some(c) => profile_at(c, l),
                    None => [0.0; 3],
                };
                for hi in 0..hnodes {
                    let xy = grid.horizontal_node(hi);
                    let theta = k[0] * xy[0] + k[1] * xy[1];
                    let s = mode.sample_parts(k, theta, prof);
                    let o = 3 * (wi * hnodes + hi);
                    wall[o..o + 3].copy_from_slice(&s.value);
                }
            }
            (values, grads, wall)
        })
        .collect();

    let mut table = NodalTable {
        nodes,
        values: Vec::with_capacity(3 * nodes * modes.len()),
        grads: Vec::with_capacity(9 * nodes * modes.len()),
        wall_values: Vec::with_capacity(3 * nwalls * hnodes * modes.len()),
    };
    for (v, g, w) in per_mode {
        table.values.extend(v);
        table.grads.extend(g);
        table.wall_values.extend(w);
    }
    table
}

/// Node counts for the grid, derived from the modes or checked against them.
fn grid_shape(domain: &DomainSpec, modes: &[BasisMode], degree: usize, res: &GridResolution) -> Result<[usize; 3]> {
    let mut kmax = [0usize; 3];
    for m in modes {
        for d in 0..3 {
            kmax[d] = kmax[d].max(m.wavevector[d].unsigned_abs() as usize);
        }
    }
    let os = res.oversampling;
    let periodic_required = |k: usize| ((2.0 * k as f64 * os).floor() as usize + 1).max(1);
    let periodic_auto = |k: usize| {
        let n = (os * (2 * k + 1) as f64).ceil() as usize;
        (n + n % 2).max(4)
    };
    let mut required = [0usize; 3];
    let mut auto = [0usize; 3];
    for d in 0..2 {
        required[d] = periodic_required(kmax[d]);
        auto[d] = periodic_auto(kmax[d]);
    }
    if domain.is_torus() {
        required[2] = periodic_required(kmax[2]);
        auto[2] = periodic_auto(kmax[2]);
    } else {
        required[2] = degree + 1;
        auto[2] = ((os * (degree + 1) as f64).ceil() as usize).max(degree + 1);
    }
    match res.nodes {
        None => Ok(auto),
        Some(given) => {
            for d in 0..3 {
                if given[d] < required[d] {
                    return Err(Error::GridTooCoarse {
                        direction: d,
                        required: required[d],
                        given: given[d],
                    });
                }
            }
            Ok(given)
        }
    }
}

fn basis_hash(domain: &DomainSpec, modes: &[BasisMode], grid: &QuadratureGrid) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(domain).unwrap_or_default());
    for m in modes {
        for n in m.wavevector {
            h.update(n.to_le_bytes());
        }
        h.update((m.vertical_index as u64).to_le_bytes());
        h.update((m.polarization_index as u64).to_le_bytes());
        match &m.shape {
            ModeShape::Fourier {
                polarization,
                amplitude,
            } => {
                for v in polarization.iter().chain(std::iter::once(amplitude)) {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
            other => {
                let tag: u8 = match other {
                    ModeShape::SlabMean { direction, .. } => *direction as u8,
                    ModeShape::SlabToroidal { .. } => 10,
                    _ => 11,
                };
                h.update([tag]);
                for v in m.profile().unwrap_or(&[]) {
                    h.update(v.to_bits().to_le_bytes());
                }
            }
        }
    }
    h.update(grid.fingerprint().as_bytes());
    hex::encode(&h.finalize()[..16])
}

/// Sort candidates by energy, treating near-equal energies as ties broken by
/// `(k1, k2, k3, vertical index, polarization index)`.
fn order_modes(mut modes: Vec<BasisMode>) -> Vec<BasisMode> {
    modes.sort_by(|a, b| {
        a.h1_energy
            .total_cmp(&b.h1_energy)
            .then_with(|| a.order_key().cmp(&b.order_key()))
    });
    let mut out = Vec::with_capacity(modes.len());
    let mut group: Vec<BasisMode> = Vec::new();
    let mut group_energy = f64::NAN;
    for mode in modes {
        if group.is_empty() || (mode.h1_energy - group_energy).abs() <= ENERGY_TIE_RTOL * group_energy.abs().max(1.0) {
            if group.is_empty() {
                group_energy = mode.h1_energy;
            }
            group.push(mode);
        } else {
            group.sort_by_key(|m| m.order_key());
            out.append(&mut group);
            group_energy = mode.h1_energy;
            group.push(mode);
        }
    }
    group.sort_by_key(|m| m.order_key());
    out.append(&mut group);
    for (i, m) in out.iter_mut().enumerate() {
        m.index = i;
    }
    out
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Two unit vectors orthogonal to `k` and to each other.
fn polarizations(k: [f64; 3]) -> [[f64; 3]; 2] {
    let mut axis = 0;
    for d in 1..3 {
        if k[d].abs() < k[axis].abs() {
            axis = d;
        }
    }
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let p1 = normalize(cross(k, e));
    let p2 = normalize(cross(normalize(k), p1));
    [p1, p2]
}

fn torus_modes(periods: [f64; 3], m: usize) -> Vec<BasisMode> {
    let volume: f64 = periods.iter().product();
    let amplitude = (2.0 / volume).sqrt();
    let kphys = |n: [i64; 3]| {
        [
            2.0 * PI * n[0] as f64 / periods[0],
            2.0 * PI * n[1] as f64 / periods[1],
            2.0 * PI * n[2] as f64 / periods[2],
        ]
    };
    let mut r: i64 = 1;
    loop {
        let mut cands = Vec::new();
        for n1 in -r..=r {
            for n2 in -r..=r {
                for n3 in -r..=r {
                    let n = [n1, n2, n3];
                    if n == [0, 0, 0] {
                        continue;
                    }
                    // polarizations come from the canonical representative so
                    // that ±n share them
                    let canon = if Trig::for_wavevector(n) == Trig::Cos {
                        n
                    } else {
                        [-n1, -n2, -n3]
                    };
                    let kc = kphys(canon);
                    let k2 = kc.iter().map(|v| v * v).sum::<f64>();
                    for (pi, p) in polarizations(kc).into_iter().enumerate() {
                        cands.push(BasisMode {
                            index: 0,
                            wavevector: n,
                            vertical_index: 0,
                            polarization_index: pi,
                            shape: ModeShape::Fourier {
                                polarization: p,
                                amplitude,
                            },
                            h1_energy: k2,
                            boundary_energy: 0.0,
                            eigenvalue: k2,
                        });
                    }
                }
            }
        }
        let ordered = order_modes(cands);
        let next_shell = (0..3)
            .map(|d| (2.0 * PI * (r + 1) as f64 / periods[d]).powi(2))
            .fold(f64::INFINITY, f64::min);
        if ordered.len() >= m && ordered[m - 1].h1_energy < next_shell {
            let mut out = ordered;
            out.truncate(m);
            return out;
        }
        r += 1;
    }
}

/// Slab modes and the Legendre degree of their profiles.
fn slab_modes(domain: &DomainSpec, m: usize) -> Result<(Vec<BasisMode>, usize)> {
    let DomainSpec::Slab {
        periods,
        half_height,
        friction,
    } = *domain
    else {
        unreachable!("slab_modes called on a torus");
    };
    let area = periods[0] * periods[1];
    let mut kbox: [i64; 2] = [1, 1];
    let mut vertical = 2usize;
    loop {
        // Legendre degree: twice the vertical mode count, with a floor that
        // keeps the lowest modes resolved to roundoff.
        let degree = (2 * vertical).max(vertical + 16);
        let setup = VerticalSetup {
            half_height,
            friction,
            degree,
        };
        let mut wavevectors = Vec::new();
        for n1 in -kbox[0]..=kbox[0] {
            for n2 in -kbox[1]..=kbox[1] {
                wavevectors.push([n1, n2]);
            }
        }
        let k2_of =
            |n: [i64; 2]| (2.0 * PI * n[0] as f64 / periods[0]).powi(2) + (2.0 * PI * n[1] as f64 / periods[1]).powi(2);
        // The vertical problems depend on |k|² only.
        let mut distinct: BTreeMap<u64, f64> = BTreeMap::new();
        for &n in &wavevectors {
            let k2 = k2_of(n);
            distinct.insert(k2.to_bits(), k2);
        }
        let solved: Vec<(u64, _, _)> = distinct
            .par_iter()
            .map(|(&bits, &k2)| {
                let zero = k2 == 0.0;
                let h_area = if zero { area } else { area / 2.0 };
                let tor = solve_family(Family::Toroidal, k2, h_area, &setup, vertical);
                let pol = if zero {
                    None
                } else {
                    solve_family(Family::Poloidal, k2, h_area, &setup, vertical)
                };
                (bits, tor, pol)
            })
            .collect();
        let mut families = BTreeMap::new();
        for (bits, tor, pol) in solved {
            let k2 = distinct[&bits];
            let n = wavevectors
                .iter()
                .copied()
                .find(|&n| k2_of(n).to_bits() == bits)
                .unwrap_or([0, 0]);
            let tor = tor.ok_or(Error::EigenFailure {
                n1: n[0],
                n2: n[1],
                family: Family::Toroidal.name(),
            })?;
            if k2 != 0.0 && pol.is_none() {
                return Err(Error::EigenFailure {
                    n1: n[0],
                    n2: n[1],
                    family: Family::Poloidal.name(),
                });
            }
            families.insert(bits, (tor, pol));
        }

        let mut cands = Vec::new();
        let mut max_mean_eigenvalue = 0.0_f64;
        for &n in &wavevectors {
            let k2 = k2_of(n);
            let (tor, pol) = &families[&k2.to_bits()];
            let wv = [n[0], n[1], 0];
            if n == [0, 0] {
                max_mean_eigenvalue = tor.eigenvalues.last().copied().unwrap_or(0.0);
                for direction in 0..2 {
                    for j in 0..tor.profiles.len() {
                        // the uniform translation has no gradient energy and is
                        // excluded, as the mean mode is on the torus
                        if tor.eigenvalues[j] <= 1e-12 {
                            continue;
                        }
                        cands.push(BasisMode {
                            index: 0,
                            wavevector: wv,
                            vertical_index: j,
                            polarization_index: direction,
                            shape: ModeShape::SlabMean {
                                direction,
                                profile: tor.profiles[j].clone(),
                            },
                            h1_energy: tor.h1[j],
                            boundary_energy: tor.boundary[j],
                            eigenvalue: tor.eigenvalues[j],
                        });
                    }
                }
                continue;
            }
            for j in 0..tor.profiles.len() {
                cands.push(BasisMode {
                    index: 0,
                    wavevector: wv,
                    vertical_index: j,
                    polarization_index: 0,
                    shape: ModeShape::SlabToroidal {
                        profile: tor.profiles[j].clone(),
                    },
                    h1_energy: tor.h1[j],
                    boundary_energy: tor.boundary[j],
                    eigenvalue: tor.eigenvalues[j],
                });
            }
            if let Some(pol) = pol {
                for j in 0..pol.profiles.len() {
                    cands.push(BasisMode {
                        index: 0,
                        wavevector: wv,
                        vertical_index: j,
                        polarization_index: 1,
                        shape: ModeShape::SlabPoloidal {
                            profile: pol.profiles[j].clone(),
                        },
                        h1_energy: pol.h1[j],
                        boundary_energy: pol.boundary[j],
                        eigenvalue: pol.eigenvalues[j],
                    });
                }
            }
        }
        let ordered = order_modes(cands);
        if ordered.len() >= m {
            let e_m = ordered[m - 1].h1_energy;
            let next_shell = (0..2)
                .map(|d| (2.0 * PI * (kbox[d] + 1) as f64 / periods[d]).powi(2))
                .fold(f64::INFINITY, f64::min);
            let horizontal_ok = e_m < next_shell;
            let vertical_ok = max_mean_eigenvalue > 2.0 * e_m;
            if horizontal_ok && vertical_ok {
                let mut out = ordered;
                out.truncate(m);
                return Ok((out, degree));
            }
            if !horizontal_ok {
                kbox = [kbox[0] + 1, kbox[1] + 1];
            }
            if !vertical_ok {
                vertical += 2;
            }
        } else {
            kbox = [kbox[0] + 1, kbox[1] + 1];
            vertical += 2;
        }
    }
}
