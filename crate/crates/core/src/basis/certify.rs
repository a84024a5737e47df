use serde::{Deserialize, Serialize};

use super::{tabulate, BasisSet};
use crate::domain::{GridResolution, QuadratureGrid};

/// Per-check thresholds used by [`verify_basis_on`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificationTolerances {
    pub divergence: f64,
    pub normal_trace: f64,
    pub slip: f64,
    pub gram: f64,
}

impl CertificationTolerances {
    pub fn uniform(tol: f64) -> Self {
        CertificationTolerances {
            divergence: tol,
            normal_trace: tol,
            slip: tol,
            gram: tol,
        }
    }
}

/// Residuals of the structural properties every mode must satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub m: usize,
    pub grid_shape: [usize; 3],
    pub max_divergence: f64,
    pub max_normal_trace: f64,
    pub max_slip: f64,
    pub max_gram_deviation: f64,
    /// Mode with the largest combined residual.
    pub worst_mode: usize,
    /// Modes with at least one residual above its tolerance.
    pub failing_modes: Vec<usize>,
    pub tolerances: CertificationTolerances,
    pub pass: bool,
}

/// Certify `basis` on an independent grid with 1.5 times its oversampling,
/// using `tol` for every check.
pub fn verify_basis(basis: &BasisSet, tol: f64) -> CertificationReport {
    verify_basis_with(basis, CertificationTolerances::uniform(tol))
}

/// [`verify_basis`] with separate tolerances per check.
pub fn verify_basis_with(basis: &BasisSet, tol: CertificationTolerances) -> CertificationReport {
    let os = basis.resolution().oversampling * 1.5;
    let grid = certification_grid(basis, os);
    verify_basis_on(basis, tol, &grid)
}

fn certification_grid(basis: &BasisSet, os: f64) -> QuadratureGrid {
    let shape = super::grid_shape(
        basis.domain(),
        basis.modes(),
        basis.vertical_degree(),
        &GridResolution::with_oversampling(os),
    )
    .unwrap_or(basis.grid().shape);
    // an odd vertical count keeps the certification nodes distinct from the
    // basis nodes
    let shape = [shape[0] + 1, shape[1] + 1, shape[2] + 1];
    QuadratureGrid::for_domain(basis.domain(), shape, os)
}

/// Certify `basis` on `grid` with separate tolerances per check.
pub fn verify_basis_on(basis: &BasisSet, tol: CertificationTolerances, grid: &QuadratureGrid) -> CertificationReport {
    let m = basis.m();
    let domain = basis.domain();
    let alpha = domain.friction();
    let table = tabulate(domain, basis.modes(), grid, basis.vertical_degree());
    let n = table.nodes;

    let mut div = vec![0.0_f64; m];
    let mut normal = vec![0.0_f64; m];
    let mut slip = vec![0.0_f64; m];
    for i in 0..m {
        let g = table.mode_grads(i);
        for node in 0..n {
            let d = g[9 * node] + g[9 * node + 4] + g[9 * node + 8];
            div[i] = div[i].max(d.abs());
        }
    }

    // Wall residuals need gradients at the wall layers.
    if !grid.walls.is_empty() {
        let hn = grid.horizontal_len();
        for (i, mode) in basis.modes().iter().enumerate() {
            let k = mode.physical_wavevector(domain);
            for wall in &grid.walls {
                for h in 0..hn {
                    let xy = grid.horizontal_node(h);
                    let s = mode.sample(domain, [xy[0], xy[1], wall.z]);
                    normal[i] = normal[i].max(s.value[2].abs());
                    for r in 0..2 {
                        // 2 D(w)ν·τ with ν = ±e_z and τ = e_r
                        let stress = wall.normal_sign * (s.grad[r][2] + s.grad[2][r]);
                        slip[i] = slip[i].max((stress + alpha * s.value[r]).abs());
                    }
                    let _ = k;
                }
            }
        }
    }

    let weights = grid.weights();
    let gram = super::weighted_gram(&table.values, 3, &weights, m);
    let mut gram_dev = vec![0.0_f64; m];
    for i in 0..m {
        for j in 0..m {
            let target = if i == j { 1.0 } else { 0.0 };
            gram_dev[i] = gram_dev[i].max((gram[(i, j)] - target).abs());
        }
    }

    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let mut failing = Vec::new();
    let mut worst = 0;
    let mut worst_score = -1.0;
    for i in 0..m {
        let scores = [
            div[i] / tol.divergence,
            normal[i] / tol.normal_trace,
            slip[i] / tol.slip,
            gram_dev[i] / tol.gram,
        ];
        let score = scores.iter().copied().fold(0.0, f64::max);
        // the diagonal entry singles out the perturbed mode among Gram rows
        let own = (gram[(i, i)] - 1.0).abs() / tol.gram;
        let rank = score + own;
        if score > 1.0 || score.is_nan() {
            failing.push(i);
        }
        if rank > worst_score || rank.is_nan() {
            worst_score = rank;
            worst = i;
        }
    }
    let report = CertificationReport {
        m,
        grid_shape: grid.shape,
        max_divergence: max(&div),
        max_normal_trace: max(&normal),
        max_slip: max(&slip),
        max_gram_deviation: max(&gram_dev),
        worst_mode: worst,
        failing_modes: failing,
        tolerances: tol,
        pass: false,
    };
    let pass = report.max_divergence <= tol.divergence
        && report.max_normal_trace <= tol.normal_trace
        && report.max_slip <= tol.slip
        && report.max_gram_deviation <= tol.gram;
    CertificationReport { pass, ..report }
}
