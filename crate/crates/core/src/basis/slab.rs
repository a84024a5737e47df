//! Vertical Robin–Stokes eigenproblems for the slab.
//!
//! For each horizontal wavenumber the divergence-free slip modes split into a
//! toroidal family (horizontal velocity `ψ(z) k̂⊥`) and a poloidal family
//! (`w_z = φ(z)`). Profiles are Legendre series on `[-h, h]` restricted to the
//! subspace that satisfies the wall conditions exactly; the eigenproblem is the
//! symmetric pencil (gradient form + wall friction form, L² form).

use nalgebra::{DMatrix, DVector};

use crate::legendre::{gauss_legendre, legendre_with_derivatives};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Family {
    Toroidal,
    Poloidal,
}

impl Family {
    pub(crate) fn name(self) -> &'static str {
        match self {
            Family::Toroidal => "toroidal",
            Family::Poloidal => "poloidal",
        }
    }
}

/// Inputs shared by every vertical problem of a slab.
#[derive(Debug, Clone, Copy)]
pub(crate) struct VerticalSetup {
    pub half_height: f64,
    pub friction: f64,
    /// Legendre degree of the profiles.
    pub degree: usize,
}

/// Solved vertical family, ascending by eigenvalue.
#[derive(Debug, Clone)]
pub(crate) struct VerticalModes {
    pub eigenvalues: Vec<f64>,
    pub profiles: Vec<Vec<f64>>,
    pub h1: Vec<f64>,
    pub boundary: Vec<f64>,
}

/// Bilinear forms of one family in Legendre coefficient space.
pub(crate) struct Forms {
    pub mass: DMatrix<f64>,
    pub gradient: DMatrix<f64>,
    pub wall: DMatrix<f64>,
    pub constraints: DMatrix<f64>,
}

/// Assemble the L², gradient and wall-friction forms for a family at squared
/// horizontal wavenumber `k2` with horizontal area factor `area`.
pub(crate) fn forms(family: Family, k2: f64, area: f64, setup: &VerticalSetup) -> Forms {
    let n = setup.degree + 1;
    let h = setup.half_height;
    let alpha = setup.friction;
    let (zeta, w) = gauss_legendre(setup.degree + 3);
    let mut mass = DMatrix::zeros(n, n);
    let mut gradient = DMatrix::zeros(n, n);
    for (q, &x) in zeta.iter().enumerate() {
        let (p, dp, d2p) = legendre_with_derivatives(setup.degree, x);
        let wq = w[q] * h * area;
        for a in 0..n {
            for b in 0..=a {
                let (m, g) = match family {
                    Family::Toroidal => (p[a] * p[b], k2 * p[a] * p[b] + dp[a] * dp[b] / (h * h)),
                    Family::Poloidal => (
                        p[a] * p[b] + dp[a] * dp[b] / (h * h * k2),
                        k2 * p[a] * p[b] + 2.0 * dp[a] * dp[b] / (h * h) + d2p[a] * d2p[b] / (h.powi(4) * k2),
                    ),
                };
                mass[(a, b)] += wq * m;
                gradient[(a, b)] += wq * g;
            }
        }
    }
    let (pt, dpt, d2pt) = legendre_with_derivatives(setup.degree, 1.0);
    let (pb, dpb, d2pb) = legendre_with_derivatives(setup.degree, -1.0);
    let mut wall = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..=a {
            wall[(a, b)] = match family {
                Family::Toroidal => alpha * area * (pt[a] * pt[b] + pb[a] * pb[b]),
                Family::Poloidal => alpha * area * (dpt[a] * dpt[b] + dpb[a] * dpb[b]) / (h * h * k2),
            };
        }
    }
    for a in 0..n {
        for b in 0..a {
            mass[(b, a)] = mass[(a, b)];
            gradient[(b, a)] = gradient[(a, b)];
            wall[(b, a)] = wall[(a, b)];
        }
    }
    // Wall conditions. Top wall has outward normal +e_z, bottom -e_z; the slip
    // condition reads ±∂_z u_τ + α u_τ = 0 and the normal velocity vanishes.
    let rows: Vec<Vec<f64>> = match family {
        Family::Toroidal => vec![
            (0..n).map(|j| dpt[j] / h + alpha * pt[j]).collect(),
            (0..n).map(|j| -dpb[j] / h + alpha * pb[j]).collect(),
        ],
        Family::Poloidal => vec![
            pt.clone(),
            pb.clone(),
            (0..n).map(|j| d2pt[j] / (h * h) + alpha * dpt[j] / h).collect(),
            (0..n).map(|j| -d2pb[j] / (h * h) + alpha * dpb[j] / h).collect(),
        ],
    };
    let mut constraints = DMatrix::zeros(rows.len(), n);
    for (i, row) in rows.iter().enumerate() {
        let scale = row.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for j in 0..n {
            constraints[(i, j)] = row[j] / scale;
        }
    }
    Forms {
        mass,
        gradient,
        wall,
        constraints,
    }
}

/// Orthonormal basis of the null space of `constraints`, eliminating the last
/// `r` coefficients.
fn null_space(constraints: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let r = constraints.nrows();
    let n = constraints.ncols();
    if n <= r {
        return None;
    }
    let free = n - r;
    let dep = constraints.columns(free, r).clone_owned();
    let lu = dep.lu();
    let rhs = -constraints.columns(0, free).clone_owned();
    let solved = lu.solve(&rhs)?;
    let mut z = DMatrix::zeros(n, free);
    for j in 0..free {
        z[(j, j)] = 1.0;
        for i in 0..r {
            z[(free + i, j)] = solved[(i, j)];
        }
    }
    Some(z.qr().q())
}

/// Solve one vertical family and return its lowest `count` modes, normalized in
/// the full three-dimensional L² inner product.
pub(crate) fn solve_family(
    family: Family,
    k2: f64,
    area: f64,
    setup: &VerticalSetup,
    count: usize,
) -> Option<VerticalModes> {
    let f = forms(family, k2, area, setup);
    let z = null_space(&f.constraints)?;
    let stiff = &f.gradient + &f.wall;
    let kr = z.transpose() * &stiff * &z;
    let mr = z.transpose() * &f.mass * &z;
    let chol = mr.clone().cholesky()?;
    let l = chol.l();
    let linv = l.clone().try_inverse()?;
    let mut s = &linv * &kr * linv.transpose();
    s = (&s + s.transpose()) * 0.5;
    let eig = s.try_symmetric_eigen(1e-15, 10_000)?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let count = count.min(order.len());

    let lt_inv = linv.transpose();
    let mut vecs: Vec<DVector<f64>> = order
        .iter()
        .take(count)
        .map(|&i| &z * (&lt_inv * eig.eigenvectors.column(i)))
        .collect();

    // Modified Gram–Schmidt in the L² form, two passes.
    for _ in 0..2 {
        for i in 0..vecs.len() {
            for j in 0..i {
                let proj = vecs[i].dot(&(&f.mass * &vecs[j]));
                let vj = vecs[j].clone();
                vecs[i].axpy(-proj, &vj, 1.0);
            }
            let norm = vecs[i].dot(&(&f.mass * &vecs[i])).sqrt();
            if !(norm.is_finite() && norm > 0.0) {
                return None;
            }
            vecs[i] /= norm;
        }
    }

    let mut out = VerticalModes {
        eigenvalues: Vec::with_capacity(count),
        profiles: Vec::with_capacity(count),
        h1: Vec::with_capacity(count),
        boundary: Vec::with_capacity(count),
    };
    for mut v in vecs {
        // Deterministic sign: the largest coefficient is positive.
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        let g = v.dot(&(&f.gradient * &v));
        let b = v.dot(&(&f.wall * &v));
        out.eigenvalues.push(g + b);
        out.h1.push(g);
        out.boundary.push(b);
        out.profiles.push(v.iter().copied().collect());
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::series_with_derivatives;
    use std::f64::consts::PI;

    #[test]
    fn free_slip_toroidal_eigenvalues_are_cosine_wavenumbers() {
        let setup = VerticalSetup {
            half_height: 1.0,
            friction: 0.0,
            degree: 30,
        };
        let modes = solve_family(Family::Toroidal, 0.0, 1.0, &setup, 6).unwrap();
        for (j, lam) in modes.eigenvalues.iter().enumerate() {
            let s = j as f64 * PI / 2.0;
            assert!((lam - s * s).abs() < 1e-10, "j={j}: {lam} vs {}", s * s);
        }
    }

    #[test]
    fn free_slip_poloidal_eigenvalues_are_sine_wavenumbers() {
        let setup = VerticalSetup {
            half_height: 1.0,
            friction: 0.0,
            degree: 30,
        };
        let k2 = 2.0;
        let modes = solve_family(Family::Poloidal, k2, 1.0, &setup, 5).unwrap();
        for (j, lam) in modes.eigenvalues.iter().enumerate() {
            let s = (j + 1) as f64 * PI / 2.0;
            assert!((lam - (k2 + s * s)).abs() < 1e-9, "j={j}: {lam}");
        }
    }

    #[test]
    fn profiles_satisfy_wall_conditions() {
        let setup = VerticalSetup {
            half_height: 0.7,
            friction: 2.5,
            degree: 24,
        };
        let h = setup.half_height;
        let a = setup.friction;
        let tor = solve_family(Family::Toroidal, 1.3, 2.0, &setup, 8).unwrap();
        for p in &tor.profiles {
            let top = series_with_derivatives(p, 1.0);
            let bot = series_with_derivatives(p, -1.0);
            assert!((top[1] / h + a * top[0]).abs() < 1e-10);
            assert!((-bot[1] / h + a * bot[0]).abs() < 1e-10);
        }
        let pol = solve_family(Family::Poloidal, 1.3, 2.0, &setup, 8).unwrap();
        for p in &pol.profiles {
            let top = series_with_derivatives(p, 1.0);
            let bot = series_with_derivatives(p, -1.0);
            assert!(top[0].abs() < 1e-12 && bot[0].abs() < 1e-12);
            assert!((top[2] / (h * h) + a * top[1] / h).abs() < 1e-9);
            assert!((-bot[2] / (h * h) + a * bot[1] / h).abs() < 1e-9);
        }
    }

    #[test]
    fn eigenvalues_split_into_gradient_and_wall_parts() {
        let setup = VerticalSetup {
            half_height: 1.0,
            friction: 1.0,
            degree: 20,
        };
        let m = solve_family(Family::Poloidal, 1.0, 1.0, &setup, 4).unwrap();
        for i in 0..4 {
            assert!((m.eigenvalues[i] - m.h1[i] - m.boundary[i]).abs() < 1e-12);
            assert!(m.boundary[i] >= 0.0);
        }
        assert!(m.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }
}
