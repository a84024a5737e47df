//! Computational geometries and the quadrature grids that realize volume and
//! wall integrals on them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::legendre::gauss_legendre;

/// Geometry of the flow domain.
///
/// `Torus` is triply periodic and has no boundary. `Slab` is periodic in x and y
/// and bounded by flat walls at `z = ±half_height`, where the Navier slip
/// condition holds with a constant friction coefficient on both walls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "geometry", rename_all = "snake_case")]
pub enum DomainSpec {
    Torus {
        periods: [f64; 3],
    },
    Slab {
        periods: [f64; 2],
        half_height: f64,
        friction: f64,
    },
}

impl DomainSpec {
    pub fn torus(l1: f64, l2: f64, l3: f64) -> Result<Self> {
        let d = DomainSpec::Torus { periods: [l1, l2, l3] };
        d.validate()?;
        Ok(d)
    }

    pub fn slab(l1: f64, l2: f64, half_height: f64, friction: f64) -> Result<Self> {
        let d = DomainSpec::Slab {
            periods: [l1, l2],
            half_height,
            friction,
        };
        d.validate()?;
        Ok(d)
    }

    /// The (2π)³ torus.
    pub fn unit_torus() -> Self {
        DomainSpec::Torus { periods: [2.0 * PI; 3] }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidDomain(format!("{what} must be positive, got {v}")))
            }
        };
        match *self {
            DomainSpec::Torus { periods } => {
                for (i, l) in periods.iter().enumerate() {
                    positive(*l, &format!("period L{}", i + 1))?;
                }
            }
            DomainSpec::Slab {
                periods,
                half_height,
                friction,
            } => {
                positive(periods[0], "period L1")?;
                positive(periods[1], "period L2")?;
                positive(half_height, "half-height")?;
                if !(friction.is_finite() && friction >= 0.0) {
                    return Err(Error::InvalidDomain(format!(
                        "friction coefficient must be >= 0, got {friction}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        match *self {
            DomainSpec::Torus { periods } => periods.iter().product(),
            DomainSpec::Slab {
                periods, half_height, ..
            } => periods[0] * periods[1] * 2.0 * half_height,
        }
    }

    pub fn horizontal_periods(&self) -> [f64; 2] {
        match *self {
            DomainSpec::Torus { periods } => [periods[0], periods[1]],
            DomainSpec::Slab { periods, .. } => periods,
        }
    }

    /// Friction coefficient on the walls; zero for the torus.
    pub fn friction(&self) -> f64 {
        match *self {
            DomainSpec::Torus { .. } => 0.0,
            DomainSpec::Slab { friction, .. } => friction,
        }
    }

    pub fn has_boundary(&self) -> bool {
        matches!(self, DomainSpec::Slab { .. })
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, DomainSpec::Torus { .. })
    }
}

/// Requested resolution for a quadrature grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridResolution {
    /// Oversampling relative to the highest resolved mode, at least 1.
    pub oversampling: f64,
    /// Explicit node counts `[N1, N2, N3]`; derived from the modes when absent.
    pub nodes: Option<[usize; 3]>,
}

impl Default for GridResolution {
    fn default() -> Self {
        GridResolution {
            oversampling: 2.0,
            nodes: None,
        }
    }
}

impl GridResolution {
    pub fn with_oversampling(oversampling: f64) -> Self {
        GridResolution {
            oversampling,
            nodes: None,
        }
    }

    pub fn explicit(nodes: [usize; 3]) -> Self {
        GridResolution {
            oversampling: 1.0,
            nodes: Some(nodes),
        }
    }
}

/// One wall of a slab: the horizontal node layer at `z` with outward normal
/// `normal_sign * e_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wall {
    pub z: f64,
    pub normal_sign: f64,
}

/// Tensor-product quadrature on the domain.
///
/// Horizontal directions are periodic and use the uniform trapezoid rule. The
/// vertical direction is uniform on the torus and Gauss–Legendre on the slab.
/// Nodes are enumerated with x fastest: `index = (iz * n2 + iy) * n1 + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    pub shape: [usize; 3],
    pub oversampling: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// Vertical weights; the node weight is `cell_area * z_weights[iz]`.
    pub z_weights: Vec<f64>,
    /// Horizontal trapezoid cell area `dx * dy`.
    pub cell_area: f64,
    /// Walls of the slab; empty for the torus.
    pub walls: Vec<Wall>,
    fingerprint: String,
}

impl QuadratureGrid {
    /// Uniform grid on the torus.
    pub fn torus(periods: [f64; 3], shape: [usize; 3], oversampling: f64) -> Self {
        let axis = |l: f64, n: usize| (0..n).map(|i| l * i as f64 / n as f64).collect::<Vec<_>>();
        let dz = periods[2] / shape[2] as f64;
        Self::assemble(
            shape,
            oversampling,
            axis(periods[0], shape[0]),
            axis(periods[1], shape[1]),
            axis(periods[2], shape[2]),
            vec![dz; shape[2]],
            periods[0] / shape[0] as f64 * periods[1] / shape[1] as f64,
            Vec::new(),
        )
    }

    /// Uniform horizontal grid with Gauss–Legendre nodes across `[-h, h]`.
    pub fn slab(periods: [f64; 2], half_height: f64, shape: [usize; 3], oversampling: f64) -> Self {
        let axis = |l: f64, n: usize| (0..n).map(|i| l * i as f64 / n as f64).collect::<Vec<_>>();
        let (zeta, w) = gauss_legendre(shape[2]);
        let z = zeta.iter().map(|s| s * half_height).collect();
        let zw = w.iter().map(|w| w * half_height).collect();
        Self::assemble(
            shape,
            oversampling,
            axis(periods[0], shape[0]),
            axis(periods[1], shape[1]),
            z,
            zw,
            periods[0] / shape[0] as f64 * periods[1] / shape[1] as f64,
            vec![
                Wall {
                    z: -half_height,
                    normal_sign: -1.0,
                },
                Wall {
                    z: half_height,
                    normal_sign: 1.0,
                },
            ],
        )
    }

    pub fn for_domain(domain: &DomainSpec, shape: [usize; 3], oversampling: f64) -> Self {
        match *domain {
            DomainSpec::Torus { periods } => Self::torus(periods, shape, oversampling),
            DomainSpec::Slab {
                periods, half_height, ..
            } => Self::slab(periods, half_height, shape, oversampling),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        shape: [usize; 3],
        oversampling: f64,
        x: Vec<f64>,
        y: Vec<f64>,
        z: Vec<f64>,
        z_weights: Vec<f64>,
        cell_area: f64,
        walls: Vec<Wall>,
    ) -> Self {
        let mut hasher = Sha256::new();
        for n in shape {
            hasher.update((n as u64).to_le_bytes());
        }
        for v in x.iter().chain(&y).chain(&z).chain(&z_weights) {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hasher.update(cell_area.to_bits().to_le_bytes());
        for w in &walls {
            hasher.update(w.z.to_bits().to_le_bytes());
        }
        let fingerprint = hex::encode(&hasher.finalize()[..8]);
        QuadratureGrid {
            shape,
            oversampling,
            x,
            y,
            z,
            z_weights,
            cell_area,
            walls,
            fingerprint,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn horizontal_len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    /// Short stable identifier derived from the node coordinates and weights.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.shape[1] + iy) * self.shape[0] + ix
    }

    #[inline]
    pub fn node(&self, idx: usize) -> [f64; 3] {
        let n1 = self.shape[0];
        let n2 = self.shape[1];
        [self.x[idx % n1], self.y[(idx / n1) % n2], self.z[idx / (n1 * n2)]]
    }

    #[inline]
    pub fn weight(&self, idx: usize) -> f64 {
        self.cell_area * self.z_weights[idx / self.horizontal_len()]
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.weight(i)).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.cell_area * self.shape[0] as f64 * self.shape[1] as f64 * self.z_weights.iter().sum::<f64>()
    }

    /// Horizontal node `(x, y)` for a wall-layer index `ix + n1 * iy`.
    #[inline]
    pub fn horizontal_node(&self, idx: usize) -> [f64; 2] {
        [self.x[idx % self.shape[0]], self.y[idx / self.shape[0]]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_lengths_and_negative_friction() {
        assert!(DomainSpec::torus(1.0, 0.0, 1.0).is_err());
        assert!(DomainSpec::slab(1.0, 1.0, -1.0, 0.0).is_err());
        assert!(DomainSpec::slab(1.0, 1.0, 1.0, -0.5).is_err());
        assert!(DomainSpec::slab(1.0, 1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn weights_sum_to_volume() {
        let t = DomainSpec::torus(1.0, 2.0, 3.5).unwrap();
        let g = QuadratureGrid::for_domain(&t, [6, 8, 10], 2.0);
        assert!((g.total_weight() / t.volume() - 1.0).abs() < 1e-12);
        let sum: f64 = g.weights().iter().sum();
        assert!((sum / t.volume() - 1.0).abs() < 1e-12);

        let s = DomainSpec::slab(2.0 * PI, PI, 0.7, 1.0).unwrap();
        let g = QuadratureGrid::for_domain(&s, [6, 4, 17], 2.0);
        let sum: f64 = g.weights().iter().sum();
        assert!((sum / s.volume() - 1.0).abs() < 1e-12);
        assert!(g.z_weights.iter().all(|&w| w > 0.0));
        assert_eq!(g.walls.len(), 2);
    }

    #[test]
    fn torus_weights_equal_and_slab_nodes_clustered() {
        let g = QuadratureGrid::torus([1.0; 3], [4, 4, 4], 1.0);
        let w0 = g.weight(0);
        assert!((0..g.len()).all(|i| g.weight(i) == w0));

        let g = QuadratureGrid::slab([1.0, 1.0], 1.0, [2, 2, 20], 1.0);
        let gaps: Vec<f64> = g.z.windows(2).map(|p| p[1] - p[0]).collect();
        // spacing near the walls is finer than in the middle
        assert!(gaps[0] < 0.5 * gaps[gaps.len() / 2]);
    }

    #[test]
    fn node_indexing_roundtrips() {
        let g = QuadratureGrid::torus([1.0, 2.0, 3.0], [3, 4, 5], 1.0);
        let idx = g.index(2, 3, 4);
        assert_eq!(g.node(idx), [g.x[2], g.y[3], g.z[4]]);
    }
}
