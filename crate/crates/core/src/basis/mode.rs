use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::domain::DomainSpec;
use crate::legendre::series_with_derivatives;

/// Horizontal/periodic dependence of a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Trig {
    Cos,
    Sin,
}

impl Trig {
    /// `cos` for wavevectors whose first nonzero component is positive (and for
    /// the zero wavevector), `sin` otherwise.
    pub fn for_wavevector(n: [i64; 3]) -> Trig {
        match n.iter().find(|&&c| c != 0) {
            Some(&c) if c < 0 => Trig::Sin,
            _ => Trig::Cos,
        }
    }

    /// `(T(θ), T'(θ))`.
    #[inline]
    pub fn eval(self, theta: f64) -> (f64, f64) {
        let (s, c) = theta.sin_cos();
        match self {
            Trig::Cos => (c, -s),
            Trig::Sin => (s, c),
        }
    }
}

/// Spatial structure of a basis mode.
///
/// Slab profiles are Legendre coefficients in `ζ = z / h` and already carry the
/// L² normalization of the full three-dimensional mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeShape {
    /// `amplitude * T(κ·x) * polarization` on the torus.
    Fourier { polarization: [f64; 3], amplitude: f64 },
    /// Horizontally uniform slab flow `ψ(z) e_direction`, direction 0 (x) or 1 (y).
    SlabMean { direction: usize, profile: Vec<f64> },
    /// Horizontal slab flow `ψ(z) T(k·x) k̂⊥` with zero vertical velocity.
    SlabToroidal { profile: Vec<f64> },
    /// Slab flow with `w_z = φ(z) T(k·x)` and `w_h = k φ'(z) T'(k·x) / |k|²`.
    SlabPoloidal { profile: Vec<f64> },
}

/// One divergence-free, boundary-condition-satisfying, L²-normalized mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisMode {
    pub index: usize,
    /// Integer wavevector; physical components are `2π n_i / L_i`. The third
    /// entry is always zero on the slab.
    pub wavevector: [i64; 3],
    /// Eigen-index within the vertical family (slab); zero on the torus.
    pub vertical_index: usize,
    pub polarization_index: usize,
    pub shape: ModeShape,
    /// `((w, w))`, the squared gradient norm.
    pub h1_energy: f64,
    /// `∫ α (w·τ)² dS` over the walls.
    pub boundary_energy: f64,
    /// Eigenvalue of the vertical Robin–Stokes problem, `|κ|²` on the torus.
    pub eigenvalue: f64,
}

/// Value and gradient of a mode at a point; `grad[r][c] = ∂_c w_r`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeSample {
    pub value: [f64; 3],
    pub grad: [[f64; 3]; 3],
}

impl ModeSample {
    pub fn divergence(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1] + self.grad[2][2]
    }
}

impl BasisMode {
    pub fn trig(&self) -> Trig {
        Trig::for_wavevector(self.wavevector)
    }

    /// Physical wavevector `κ`.
    pub fn physical_wavevector(&self, domain: &DomainSpec) -> [f64; 3] {
        let n = self.wavevector;
        match *domain {
            DomainSpec::Torus { periods } => [
                2.0 * PI * n[0] as f64 / periods[0],
                2.0 * PI * n[1] as f64 / periods[1],
                2.0 * PI * n[2] as f64 / periods[2],
            ],
            DomainSpec::Slab { periods, .. } => [
                2.0 * PI * n[0] as f64 / periods[0],
                2.0 * PI * n[1] as f64 / periods[1],
                0.0,
            ],
        }
    }

    pub fn wavenumber_squared(&self, domain: &DomainSpec) -> f64 {
        let k = self.physical_wavevector(domain);
        k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
    }

    /// Vertical profile coefficients, if any.
    pub fn profile(&self) -> Option<&[f64]> {
        match &self.shape {
            ModeShape::Fourier { .. } => None,
            ModeShape::SlabMean { profile, .. }
            | ModeShape::SlabToroidal { profile }
            | ModeShape::SlabPoloidal { profile } => Some(profile),
        }
    }

    pub fn profile_mut(&mut self) -> Option<&mut Vec<f64>> {
        match &mut self.shape {
            ModeShape::Fourier { .. } => None,
            ModeShape::SlabMean { profile, .. }
            | ModeShape::SlabToroidal { profile }
            | ModeShape::SlabPoloidal { profile } => Some(profile),
        }
    }

    /// Evaluate the mode at a point of the domain.
    pub fn sample(&self, domain: &DomainSpec, p: [f64; 3]) -> ModeSample {
        let k = self.physical_wavevector(domain);
        let theta = k[0] * p[0] + k[1] * p[1] + k[2] * p[2];
        let prof = match (domain, self.profile()) {
            (DomainSpec::Slab { half_height, .. }, Some(c)) => {
                let v = series_with_derivatives(c, p[2] / half_height);
                [v[0], v[1] / half_height, v[2] / (half_height * half_height)]
            }
            _ => [0.0; 3],
        };
        self.sample_parts(k, theta, prof)
    }

    /// Evaluate from a precomputed phase `θ = κ·x` and vertical profile values
    /// `[ψ, ψ', ψ'']` in physical units.
    #[inline]
    pub fn sample_parts(&self, k: [f64; 3], theta: f64, prof: [f64; 3]) -> ModeSample {
        let (t, dt) = self.trig().eval(theta);
        let mut s = ModeSample::default();
        match &self.shape {
            ModeShape::Fourier {
                polarization,
                amplitude,
            } => {
                for r in 0..3 {
                    s.value[r] = amplitude * t * polarization[r];
                    for c in 0..3 {
                        s.grad[r][c] = amplitude * dt * k[c] * polarization[r];
                    }
                }
            }
            ModeShape::SlabMean { direction, .. } => {
                s.value[*direction] = prof[0];
                s.grad[*direction][2] = prof[1];
            }
            ModeShape::SlabToroidal { .. } => {
                let kk = (k[0] * k[0] + k[1] * k[1]).sqrt();
                let perp = [-k[1] / kk, k[0] / kk];
                for r in 0..2 {
                    s.value[r] = prof[0] * t * perp[r];
                    s.grad[r][0] = prof[0] * dt * k[0] * perp[r];
                    s.grad[r][1] = prof[0] * dt * k[1] * perp[r];
                    s.grad[r][2] = prof[1] * t * perp[r];
                }
            }
            ModeShape::SlabPoloidal { .. } => {
                let k2 = k[0] * k[0] + k[1] * k[1];
                s.value[2] = prof[0] * t;
                s.grad[2][0] = prof[0] * dt * k[0];
                s.grad[2][1] = prof[0] * dt * k[1];
                s.grad[2][2] = prof[1] * t;
                for r in 0..2 {
                    let a = k[r] / k2;
                    s.value[r] = a * prof[1] * dt;
                    s.grad[r][0] = -a * k[0] * prof[1] * t;
                    s.grad[r][1] = -a * k[1] * prof[1] * t;
                    s.grad[r][2] = a * prof[2] * dt;
                }
            }
        }
        s
    }

    /// Tie-breaking key used after grouping by energy.
    pub(crate) fn order_key(&self) -> (i64, i64, i64, usize, usize) {
        let n = self.wavevector;
        (n[0], n[1], n[2], self.vertical_index, self.polarization_index)
    }
}
