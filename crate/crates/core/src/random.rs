//! Seeded random coefficient vectors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::basis::{BasisSet, Coeffs};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian coefficients with variance `(1 + h1_energy)^(-decay)` per mode,
/// rescaled to L² norm `amplitude`. A zero draw is returned unscaled.
pub fn random_coeffs(rng: &mut ChaCha8Rng, basis: &BasisSet, decay: f64, amplitude: f64) -> Coeffs {
    let mut g = Coeffs::from_iterator(
        basis.m(),
        basis.modes().iter().map(|mode| {
            let z: f64 = StandardNormal.sample(rng);
            z * (1.0 + mode.h1_energy).powf(-decay / 2.0)
        }),
    );
    let n = g.norm();
    if n > 0.0 {
        g *= amplitude / n;
    }
    g
}

/// Unit-norm Gaussian direction in coefficient space.
pub fn random_direction(rng: &mut ChaCha8Rng, m: usize) -> Coeffs {
    let mut g = Coeffs::from_iterator(m, (0..m).map(|_| StandardNormal.sample(rng)));
    let n = g.norm();
    if n > 0.0 {
        g /= n;
    }
    g
}
