//! Galerkin realizations of the viscous/friction form, convection, nonlinear
//! damping and forcing.

use nalgebra::DMatrix;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::basis::{tabulate, BasisSet, Coeffs};
use crate::domain::QuadratureGrid;
use crate::error::{Error, Result};
use crate::random::random_coeffs;

/// Largest basis for which the dense convection tensor is built.
pub const TENSOR_MODE_LIMIT: usize = 512;

/// Agreement expected between the two convection paths on resolved fields.
pub const CONVECTION_AGREEMENT_TOL: f64 = 1e-9;

/// Viscosity `μ`, damping coefficient `ϑ` and damping exponent `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicsParams {
    pub viscosity: f64,
    pub damping_coefficient: f64,
    pub damping_exponent: f64,
}

impl PhysicsParams {
    pub fn new(viscosity: f64, damping_coefficient: f64, damping_exponent: f64) -> Result<Self> {
        let p = PhysicsParams {
            viscosity,
            damping_coefficient,
            damping_exponent,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.viscosity.is_finite() && self.viscosity > 0.0) {
            return Err(Error::InvalidParameter {
                name: "viscosity",
                reason: format!("μ > 0 required, got {}", self.viscosity),
            });
        }
        if !(self.damping_coefficient.is_finite() && self.damping_coefficient >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "damping_coefficient",
                reason: format!("ϑ ≥ 0 required, got {}", self.damping_coefficient),
            });
        }
        if !(self.damping_exponent.is_finite() && self.damping_exponent >= 1.0) {
            return Err(Error::InvalidParameter {
                name: "damping_exponent",
                reason: format!("β ≥ 1 required, got {}", self.damping_exponent),
            });
        }
        Ok(())
    }
}

/// Which evaluator supplies the convection term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvectionPath {
    Transform,
    Tensor,
}

/// `A_ij = 2((w_i, w_j)) + ∫ α (w_i·τ)(w_j·τ) dS`.
pub fn assemble_stiffness(basis: &BasisSet) -> DMatrix<f64> {
    let a = basis.h1_gram() * 2.0 + basis.boundary_gram();
    (&a + a.transpose()) * 0.5
}

/// `∫ (a·∇b)·c` for the fields with coefficients `a`, `b`, `c`.
pub fn trilinear_form(basis: &BasisSet, a: &Coeffs, b: &Coeffs, c: &Coeffs) -> Result<f64> {
    basis.check_len(a)?;
    basis.check_len(b)?;
    basis.check_len(c)?;
    let ua = basis.synthesize(a, false).values;
    let gb = basis.synthesize(b, true).grads;
    let uc = basis.synthesize(c, false).values;
    let w = basis.node_weights();
    let total = (0..w.len())
        .into_par_iter()
        .with_min_len(1024)
        .map(|n| {
            let u = &ua[3 * n..3 * n + 3];
            let g = &gb[9 * n..9 * n + 9];
            let v = &uc[3 * n..3 * n + 3];
            let mut s = 0.0;
            for r in 0..3 {
                s += (u[0] * g[3 * r] + u[1] * g[3 * r + 1] + u[2] * g[3 * r + 2]) * v[r];
            }
            w[n] * s
        })
        .collect::<Vec<_>>();
    Ok(total.iter().sum())
}

fn warn_if_aliased(basis: &BasisSet) {
    if !basis.resolves_cubic_products() {
        log::warn!(
            "quadrature grid {:?} does not resolve the quadratic convection term; results are aliased",
            basis.grid().shape
        );
    }
}

/// `b(u, u, w_j)` by the transform path: synthesize `u` and `∇u` on the grid,
/// form `(u·∇)u` pointwise and project.
pub fn convection_rhs(basis: &BasisSet, u: &Coeffs) -> Result<Coeffs> {
    basis.check_len(u)?;
    warn_if_aliased(basis);
    let s = basis.synthesize(u, true);
    let w = basis.node_weights();
    let mut f = vec![0.0; 3 * w.len()];
    f.par_chunks_mut(3).enumerate().for_each(|(n, out)| {
        convect_node(&s.values[3 * n..3 * n + 3], &s.grads[9 * n..9 * n + 9], w[n], out);
    });
    Ok(basis.analyze(&f))
}

#[inline]
fn convect_node(u: &[f64], g: &[f64], weight: f64, out: &mut [f64]) {
    for r in 0..3 {
        out[r] += weight * (u[0] * g[3 * r] + u[1] * g[3 * r + 1] + u[2] * g[3 * r + 2]);
    }
}

#[inline]
fn damp_node(u: &[f64], weight: f64, theta: f64, beta: f64, out: &mut [f64]) {
    let n2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    if n2 == 0.0 {
        return;
    }
    let factor = weight * theta * damping_factor(n2, beta);
    for r in 0..3 {
        out[r] += factor * u[r];
    }
}

/// `|u|^(β-1)` from `|u|²`, exact for the common integer exponents.
#[inline]
pub(crate) fn damping_factor(n2: f64, beta: f64) -> f64 {
    if beta == 1.0 {
        1.0
    } else if beta == 3.0 {
        n2
    } else if beta == 2.0 {
        n2.sqrt()
    } else if beta == 5.0 {
        n2 * n2
    } else {
        n2.powf((beta - 1.0) / 2.0)
    }
}

/// `ϑ ∫ |u|^(β-1) u · w_j` on the basis grid; zero at nodes where `u = 0`.
pub fn damping_rhs(basis: &BasisSet, u: &Coeffs, params: &PhysicsParams) -> Result<Coeffs> {
    basis.check_len(u)?;
    if params.damping_coefficient == 0.0 {
        return Ok(Coeffs::zeros(basis.m()));
    }
    let s = basis.synthesize(u, false);
    let w = basis.node_weights();
    let mut f = vec![0.0; 3 * w.len()];
    f.par_chunks_mut(3).enumerate().for_each(|(n, out)| {
        damp_node(
            &s.values[3 * n..3 * n + 3],
            w[n],
            params.damping_coefficient,
            params.damping_exponent,
            out,
        );
    });
    Ok(basis.analyze(&f))
}

/// Dense `T_ilj = b(w_i, w_l, w_j)`, stored with `j` fastest.
#[derive(Debug, Clone)]
pub struct ConvectionTensor {
    m: usize,
    data: Vec<f64>,
}

impl ConvectionTensor {
    /// Build the tensor on its own grid with twice the modal resolution, where
    /// the triple products are integrated exactly whatever the basis grid is.
    pub fn build(basis: &BasisSet) -> Result<Self> {
        let m = basis.m();
        if m > TENSOR_MODE_LIMIT {
            return Err(Error::TensorUnavailable {
                m,
                limit: TENSOR_MODE_LIMIT,
            });
        }
        let os = basis.resolution().oversampling.max(2.0);
        let shape = basis.auto_grid_shape(os);
        let grid = QuadratureGrid::for_domain(basis.domain(), shape, os);
        let table = tabulate(basis.domain(), basis.modes(), &grid, basis.vertical_degree());
        let weights = grid.weights();
        let nodes = weights.len();
        let weighted: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|j| {
                table
                    .mode_values(j)
                    .iter()
                    .enumerate()
                    .map(|(k, v)| v * weights[k / 3])
                    .collect()
            })
            .collect();
        let rows: Vec<Vec<f64>> = (0..m * m)
            .into_par_iter()
            .map(|il| {
                let (i, l) = (il / m, il % m);
                let u = table.mode_values(i);
                let g = table.mode_grads(l);
                let mut field = vec![0.0; 3 * nodes];
                for n in 0..nodes {
                    convect_node(
                        &u[3 * n..3 * n + 3],
                        &g[9 * n..9 * n + 9],
                        1.0,
                        &mut field[3 * n..3 * n + 3],
                    );
                }
                weighted
                    .iter()
                    .map(|wj| wj.iter().zip(&field).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect();
        Ok(ConvectionTensor { m, data: rows.concat() })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, l: usize, j: usize) -> f64 {
        self.data[(i * self.m + l) * self.m + j]
    }

    /// `Σ_il T_ilj g_i g_l`.
    pub fn contract(&self, g: &Coeffs) -> Result<Coeffs> {
        if g.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: g.len(),
            });
        }
        let m = self.m;
        let out: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|j| {
                let mut s = 0.0;
                for i in 0..m {
                    if g[i] == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for l in 0..m {
                        inner += self.data[(i * m + l) * m + j] * g[l];
                    }
                    s += g[i] * inner;
                }
                s
            })
            .collect();
        Ok(Coeffs::from_vec(out))
    }

    /// Write in the binary operator layout.
    pub fn export(&self, path: &Path) -> Result<()> {
        write_operator(path, &[self.m as u64; 3], &self.data)
    }
}

/// Maximum entrywise difference between the tensor and transform paths.
pub fn cross_check_convection(basis: &BasisSet, tensor: &ConvectionTensor, u: &Coeffs) -> Result<f64> {
    let a = tensor.contract(u)?;
    let b = convection_rhs(basis, u)?;
    let dev = (a - b).amax();
    if dev > CONVECTION_AGREEMENT_TOL {
        log::warn!("convection paths disagree by {dev:e}; the field is not resolved by the basis grid");
    }
    Ok(dev)
}

/// Assembled operators for one basis.
#[derive(Debug, Clone)]
pub struct OperatorSet {
    basis_hash: String,
    stiffness: DMatrix<f64>,
    tensor: Option<ConvectionTensor>,
    path: ConvectionPath,
    convection: bool,
}

impl OperatorSet {
    /// Stiffness plus the transform convection path.
    pub fn assemble(basis: &BasisSet) -> Self {
        OperatorSet {
            basis_hash: basis.hash().to_string(),
            stiffness: assemble_stiffness(basis),
            tensor: None,
            path: ConvectionPath::Transform,
            convection: true,
        }
    }

    /// Build the dense tensor as well and use it for convection.
    pub fn with_tensor(mut self, basis: &BasisSet) -> Result<Self> {
        self.check_basis(basis)?;
        self.tensor = Some(ConvectionTensor::build(basis)?);
        self.path = ConvectionPath::Tensor;
        Ok(self)
    }

    /// Drop the convection term from [`OperatorSet::nonlinear`] (linear studies).
    pub fn without_convection(mut self) -> Self {
        self.convection = false;
        self
    }

    pub fn convection_enabled(&self) -> bool {
        self.convection
    }

    pub fn path(&self) -> ConvectionPath {
        self.path
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    pub fn tensor(&self) -> Option<&ConvectionTensor> {
        self.tensor.as_ref()
    }

    pub fn basis_hash(&self) -> &str {
        &self.basis_hash
    }

    pub fn check_basis(&self, basis: &BasisSet) -> Result<()> {
        if basis.hash() != self.basis_hash {
            return Err(Error::BasisMismatch {
                expected: self.basis_hash.clone(),
                got: basis.hash().to_string(),
            });
        }
        Ok(())
    }

    /// Convection on the selected path (zero when disabled).
    pub fn convection(&self, basis: &BasisSet, u: &Coeffs) -> Result<Coeffs> {
        self.check_basis(basis)?;
        if !self.convection {
            basis.check_len(u)?;
            return Ok(Coeffs::zeros(basis.m()));
        }
        match &self.tensor {
            Some(t) if self.path == ConvectionPath::Tensor => t.contract(u),
            _ => convection_rhs(basis, u),
        }
    }

    /// `N(u)`: convection plus damping, sharing one synthesis on the transform path.
    pub fn nonlinear(&self, basis: &BasisSet, u: &Coeffs, params: &PhysicsParams) -> Result<Coeffs> {
        self.check_basis(basis)?;
        basis.check_len(u)?;
        let transform_conv = self.convection && self.path == ConvectionPath::Transform;
        let damp = params.damping_coefficient != 0.0;
        let mut out = if transform_conv || damp {
            if transform_conv {
                warn_if_aliased(basis);
            }
            let s = basis.synthesize(u, transform_conv);
            let w = basis.node_weights();
            let mut f = vec![0.0; 3 * w.len()];
            f.par_chunks_mut(3).enumerate().for_each(|(n, out)| {
                let un = &s.values[3 * n..3 * n + 3];
                if transform_conv {
                    convect_node(un, &s.grads[9 * n..9 * n + 9], w[n], out);
                }
                if damp {
                    damp_node(un, w[n], params.damping_coefficient, params.damping_exponent, out);
                }
            });
            basis.analyze(&f)
        } else {
            Coeffs::zeros(basis.m())
        };
        if self.convection && !transform_conv {
            if let Some(t) = &self.tensor {
                out += t.contract(u)?;
            }
        }
        Ok(out)
    }

    /// `sqrt(bᵀ A⁻¹ b)`, the discrete dual norm of a coefficient functional.
    pub fn dual_norm(&self, b: &Coeffs) -> Result<f64> {
        let chol = self
            .stiffness
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter {
                name: "stiffness",
                reason: "not positive definite".into(),
            })?;
        Ok(b.dot(&chol.solve(b)).max(0.0).sqrt())
    }

    /// Write the stiffness matrix in the binary operator layout.
    pub fn export_stiffness(&self, path: &Path) -> Result<()> {
        let m = self.stiffness.nrows();
        let data: Vec<f64> = (0..m * m).map(|k| self.stiffness[(k / m, k % m)]).collect();
        write_operator(path, &[m as u64, m as u64], &data)
    }
}

/// Largest observed `‖B u‖_{A⁻¹} / ‖u‖²_{H¹}` over seeded random fields.
pub fn fit_convection_constant(
    basis: &BasisSet,
    ops: &OperatorSet,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let u = random_coeffs(rng, basis, 1.0, 1.0);
        let h1 = basis.inner_h1(&u, &u)?;
        if h1 == 0.0 {
            continue;
        }
        let b = convection_rhs(basis, &u)?;
        worst = worst.max(ops.dual_norm(&b)? / h1);
    }
    Ok(worst)
}

/// Magic bytes of the binary operator layout.
pub const OPERATOR_MAGIC: &[u8; 4] = b"NSOP";
pub const OPERATOR_FORMAT_VERSION: u32 = 1;

/// `NSOP`, u32 version, u32 rank, u64 dimensions, then row-major
/// little-endian f64 data.
pub fn write_operator(path: &Path, dims: &[u64], data: &[f64]) -> Result<()> {
    let expected: u64 = dims.iter().product();
    if expected as usize != data.len() {
        return Err(Error::DimensionMismatch {
            expected: expected as usize,
            got: data.len(),
        });
    }
    let mut buf = Vec::with_capacity(16 + 8 * dims.len() + 8 * data.len());
    buf.extend_from_slice(OPERATOR_MAGIC);
    buf.extend_from_slice(&OPERATOR_FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Read a file written by [`write_operator`]; returns dimensions and data.
pub fn read_operator(path: &Path) -> Result<(Vec<u64>, Vec<f64>)> {
    let bytes = std::fs::read(path)?;
    let bad = || Error::Format("truncated operator file".into());
    if bytes.len() < 12 || &bytes[0..4] != OPERATOR_MAGIC {
        return Err(Error::Format("missing NSOP header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != OPERATOR_FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported operator version {version}")));
    }
    let rank = u32_at(8) as usize;
    let mut off = 12;
    let mut dims = Vec::with_capacity(rank);
    for _ in 0..rank {
        let chunk = bytes.get(off..off + 8).ok_or_else(bad)?;
        dims.push(u64::from_le_bytes(chunk.try_into().unwrap()));
        off += 8;
    }
    let count: u64 = dims.iter().product();
    let body = bytes.get(off..).ok_or_else(bad)?;
    if body.len() != 8 * count as usize {
        return Err(bad());
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((dims, data))
}

/// Grid with `factor` times the basis oversampling, for quadrature oracles.
pub fn oracle_grid(basis: &BasisSet, factor: f64) -> QuadratureGrid {
    let os = basis.resolution().oversampling * factor;
    let shape = basis.auto_grid_shape(os);
    QuadratureGrid::for_domain(basis.domain(), shape, os)
}

/// Damping projection recomputed on an arbitrary grid from analytic mode
/// samples; used as a refinement oracle.
pub fn damping_rhs_on(basis: &BasisSet, u: &Coeffs, params: &PhysicsParams, grid: &QuadratureGrid) -> Result<Coeffs> {
    basis.check_len(u)?;
    let table = tabulate(basis.domain(), basis.modes(), grid, basis.vertical_degree());
    let weights = grid.weights();
    let n = weights.len();
    let mut vals = vec![0.0; 3 * n];
    for (i, gi) in u.iter().enumerate() {
        for (v, t) in vals.iter_mut().zip(table.mode_values(i)) {
            *v += gi * t;
        }
    }
    let mut f = vec![0.0; 3 * n];
    for k in 0..n {
        damp_node(
            &vals[3 * k..3 * k + 3],
            weights[k],
            params.damping_coefficient,
            params.damping_exponent,
            &mut f[3 * k..3 * k + 3],
        );
    }
    Ok(Coeffs::from_iterator(
        basis.m(),
        (0..basis.m()).map(|j| table.mode_values(j).iter().zip(&f).map(|(a, b)| a * b).sum()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DomainSpec, GridResolution};
    use crate::random::{random_coeffs, seeded_rng};
    use std::f64::consts::PI;

    fn torus(m: usize) -> BasisSet {
        BasisSet::build(DomainSpec::unit_torus(), m, GridResolution::default()).unwrap()
    }

    fn slab(alpha: f64, m: usize) -> BasisSet {
        let d = DomainSpec::slab(2.0 * PI, 2.0 * PI, 1.0, alpha).unwrap();
        BasisSet::build(d, m, GridResolution::default()).unwrap()
    }

    fn unit(m: usize, i: usize) -> Coeffs {
        let mut e = Coeffs::zeros(m);
        e[i] = 1.0;
        e
    }

    /// `b(w_i, w_l, w_j)` by brute force on a finer grid.
    fn trilinear_oracle(basis: &BasisSet, i: usize, l: usize, j: usize) -> f64 {
        let grid = oracle_grid(basis, 4.0);
        let table = tabulate(basis.domain(), basis.modes(), &grid, basis.vertical_degree());
        let (a, g, c) = (table.mode_values(i), table.mode_grads(l), table.mode_values(j));
        (0..grid.len())
            .map(|n| {
                let mut s = 0.0;
                for r in 0..3 {
                    for k in 0..3 {
                        s += a[3 * n + k] * g[9 * n + 3 * r + k] * c[3 * n + r];
                    }
                }
                grid.weight(n) * s
            })
            .sum()
    }

    #[test]
    fn physics_params_validation() {
        assert!(PhysicsParams::new(0.1, 1.0, 3.0).is_ok());
        let msg = |r: Result<PhysicsParams>| r.unwrap_err().to_string();
        assert!(msg(PhysicsParams::new(0.0, 1.0, 3.0)).contains("μ > 0"));
        assert!(msg(PhysicsParams::new(0.1, -1.0, 3.0)).contains("ϑ ≥ 0"));
        assert!(msg(PhysicsParams::new(0.1, 1.0, 0.5)).contains("β ≥ 1"));
    }

    #[test]
    fn torus_stiffness_is_twice_identity_on_unit_shell() {
        let b = torus(6);
        let a = assemble_stiffness(&b);
        assert!((a - DMatrix::<f64>::identity(6, 6) * 2.0).amax() < 1e-12);
    }

    #[test]
    fn stiffness_symmetric_positive_and_friction_adds_psd_part() {
        let s0 = slab(0.0, 16);
        let a0 = assemble_stiffness(&s0);
        assert_eq!(a0, a0.transpose());
        assert!(a0.clone().cholesky().is_some());
        // same modes, friction switched on
        let d1 = DomainSpec::slab(2.0 * PI, 2.0 * PI, 1.0, 1.0).unwrap();
        let s1 = BasisSet::from_parts(d1, s0.modes().to_vec(), s0.resolution()).unwrap();
        let diff = assemble_stiffness(&s1) - a0;
        let eig = diff.symmetric_eigenvalues();
        assert!(eig.min() > -1e-12, "{eig}");
        assert!(eig.max() > 0.0);
    }

    #[test]
    fn trilinear_matches_fine_grid_oracle() {
        for b in [torus(20), slab(1.0, 12)] {
            let m = b.m();
            for (i, l, j) in [(0, 1, 2), (3, 5, 7), (1, 1, m - 1), (m - 1, m - 2, 4)] {
                let fast = trilinear_form(&b, &unit(m, i), &unit(m, l), &unit(m, j)).unwrap();
                let oracle = trilinear_oracle(&b, i, l, j);
                assert!((fast - oracle).abs() < 1e-10, "({i},{l},{j}): {fast} vs {oracle}");
            }
        }
    }

    #[test]
    fn trilinear_zero_and_skew() {
        let b = slab(1.0, 16);
        let mut rng = seeded_rng(1);
        let u = random_coeffs(&mut rng, &b, 0.0, 1.0);
        let v = random_coeffs(&mut rng, &b, 0.0, 1.0);
        let z = Coeffs::zeros(16);
        assert_eq!(trilinear_form(&b, &z, &u, &v).unwrap(), 0.0);
        let buu = trilinear_form(&b, &u, &v, &v).unwrap();
        assert!(buu.abs() < 1e-12, "{buu}");
        let c = convection_rhs(&b, &u).unwrap();
        assert!(c.dot(&u).abs() < 1e-12);
        assert_eq!(convection_rhs(&b, &z).unwrap(), z);
    }

    #[test]
    fn damping_limits_and_homogeneity() {
        let b = torus(20);
        let mut rng = seeded_rng(2);
        let u = random_coeffs(&mut rng, &b, 0.0, 1.0);
        let off = PhysicsParams::new(1.0, 0.0, 3.0).unwrap();
        assert_eq!(damping_rhs(&b, &u, &off).unwrap(), Coeffs::zeros(20));
        let linear = PhysicsParams::new(1.0, 0.7, 1.0).unwrap();
        assert!((damping_rhs(&b, &u, &linear).unwrap() - &u * 0.7).amax() < 1e-12);

        let cubic = PhysicsParams::new(1.0, 1.0, 3.0).unwrap();
        let d1 = damping_rhs(&b, &u, &cubic).unwrap();
        let d2 = damping_rhs(&b, &(&u * 2.0), &cubic).unwrap();
        assert!((d2 - &d1 * 8.0).amax() < 1e-11);
        assert_eq!(damping_rhs(&b, &Coeffs::zeros(20), &cubic).unwrap(), Coeffs::zeros(20));
    }

    #[test]
    fn damping_converged_against_refined_grid() {
        let b = torus(16);
        let p = PhysicsParams::new(1.0, 1.0, 3.0).unwrap();
        let g = unit(16, 0);
        let coarse = damping_rhs(&b, &g, &p).unwrap();
        let fine = damping_rhs_on(&b, &g, &p, &oracle_grid(&b, 4.0)).unwrap();
        assert!((coarse - fine).amax() < 1e-9);
        // single sine mode: ∫ a³ sin⁴ = (3/4)(a³/V) · ... = 3/(2V) · ... projected on itself
        let expected = 3.0 / (2.0 * (2.0 * PI).powi(3));
        let d = damping_rhs(&b, &g, &p).unwrap();
        assert!((d[0] - expected).abs() < 1e-12, "{} vs {expected}", d[0]);
    }

    #[test]
    fn tensor_and_transform_agree_when_resolved() {
        let b = torus(16);
        let t = ConvectionTensor::build(&b).unwrap();
        let mut rng = seeded_rng(3);
        let u = random_coeffs(&mut rng, &b, 0.0, 1.0);
        assert!(cross_check_convection(&b, &t, &u).unwrap() <= CONVECTION_AGREEMENT_TOL);
        assert_eq!(cross_check_convection(&b, &t, &Coeffs::zeros(16)).unwrap(), 0.0);
        // T_ilj is antisymmetric in (l, j)
        assert!((t.get(2, 3, 5) + t.get(2, 5, 3)).abs() < 1e-14);
    }

    #[test]
    fn aliased_grid_is_detected() {
        // |n|² = 5 wavevectors such as (2, 1, 0) interact through the triple
        // products; five nodes per direction alias them
        let b = BasisSet::build(DomainSpec::unit_torus(), 100, GridResolution::explicit([5, 5, 5])).unwrap();
        assert!(!b.resolves_cubic_products());
        let t = ConvectionTensor::build(&b).unwrap();
        let mut rng = seeded_rng(5);
        let u = random_coeffs(&mut rng, &b, 0.0, 1.0);
        let dev = cross_check_convection(&b, &t, &u).unwrap();
        assert!(dev > CONVECTION_AGREEMENT_TOL, "{dev:e} {:?}", b.grid().shape);
    }

    #[test]
    fn tensor_refuses_large_bases() {
        let b = torus(TENSOR_MODE_LIMIT + 1);
        assert!(matches!(
            ConvectionTensor::build(&b),
            Err(Error::TensorUnavailable { .. })
        ));
    }

    #[test]
    fn operator_set_paths() {
        let b = torus(12);
        let p = PhysicsParams::new(0.1, 1.0, 3.0).unwrap();
        let mut rng = seeded_rng(6);
        let u = random_coeffs(&mut rng, &b, 0.0, 1.0);
        let transform = OperatorSet::assemble(&b);
        let tensor = OperatorSet::assemble(&b).with_tensor(&b).unwrap();
        assert_eq!(tensor.path(), ConvectionPath::Tensor);
        let n1 = transform.nonlinear(&b, &u, &p).unwrap();
        let n2 = tensor.nonlinear(&b, &u, &p).unwrap();
        assert!((&n1 - &n2).amax() < 1e-10);
        let split = convection_rhs(&b, &u).unwrap() + damping_rhs(&b, &u, &p).unwrap();
        assert!((n1 - split).amax() < 1e-13);

        let linear = OperatorSet::assemble(&b).without_convection();
        assert_eq!(linear.convection(&b, &u).unwrap(), Coeffs::zeros(12));
        let other = torus(13);
        assert!(matches!(
            transform.convection(&other, &Coeffs::zeros(13)),
            Err(Error::BasisMismatch { .. })
        ));
    }

    #[test]
    fn convection_constant_stable_under_refinement() {
        let mut c = Vec::new();
        for m in [16, 32] {
            let b = torus(m);
            let ops = OperatorSet::assemble(&b);
            let mut rng = seeded_rng(7);
            c.push(fit_convection_constant(&b, &ops, 20, &mut rng).unwrap());
        }
        assert!(c[0] > 0.0);
        assert!(c[1] <= 2.0 * c[0] && c[0] <= 2.0 * c[1], "{c:?}");
    }

    #[test]
    fn dual_norm_of_stiffness_row() {
        let b = torus(6);
        let ops = OperatorSet::assemble(&b);
        // A = 2I, so ‖A e₀‖_{A⁻¹} = sqrt(2)
        let v = ops.stiffness() * unit(6, 0);
        assert!((ops.dual_norm(&v).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn binary_layout_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let b = slab(1.0, 8);
        let ops = OperatorSet::assemble(&b);
        let path = dir.path().join("a.bin");
        ops.export_stiffness(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], OPERATOR_MAGIC);
        let (dims, data) = read_operator(&path).unwrap();
        assert_eq!(dims, vec![8, 8]);
        for (k, v) in data.iter().enumerate() {
            assert_eq!(v.to_bits(), ops.stiffness()[(k / 8, k % 8)].to_bits());
        }
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_operator(&path), Err(Error::Format(_))));
        assert!(write_operator(&path, &[2, 2], &[1.0]).is_err());
    }
}
