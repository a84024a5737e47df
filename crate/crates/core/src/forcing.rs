//! Body forces and their projection onto the basis.

use std::fmt;
use std::sync::Arc;

use crate::basis::{BasisSet, Coeffs};
use crate::error::Result;
use crate::field::VelocityField;

type CoeffFn = Arc<dyn Fn(f64) -> Coeffs + Send + Sync>;
type FieldFn = Arc<dyn Fn(f64, [f64; 3]) -> [f64; 3] + Send + Sync>;

/// A time-dependent body force `f(t)`.
#[derive(Clone, Default)]
pub enum Forcing {
    #[default]
    Zero,
    /// Constant force given by its basis coefficients.
    Static(Coeffs),
    /// Coefficients as a function of time (manufactured forcing).
    Coefficients(CoeffFn),
    /// A physical field sampled on the basis grid and projected.
    Field(FieldFn),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Forcing::Zero"),
            Forcing::Static(c) => write!(f, "Forcing::Static({} coefficients)", c.len()),
            Forcing::Coefficients(_) => write!(f, "Forcing::Coefficients(..)"),
            Forcing::Field(_) => write!(f, "Forcing::Field(..)"),
        }
    }
}

impl Forcing {
    pub fn coefficients(f: impl Fn(f64) -> Coeffs + Send + Sync + 'static) -> Self {
        Forcing::Coefficients(Arc::new(f))
    }

    pub fn field(f: impl Fn(f64, [f64; 3]) -> [f64; 3] + Send + Sync + 'static) -> Self {
        Forcing::Field(Arc::new(f))
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Forcing::Zero)
    }

    /// `‖f(t)‖²` in L². Coefficient forms lie in the span, so this is the sum of
    /// squares; physical fields use grid quadrature.
    pub fn l2_norm_squared(&self, basis: &BasisSet, t: f64) -> Result<f64> {
        match self {
            Forcing::Zero => Ok(0.0),
            Forcing::Static(c) => Ok(c.norm_squared()),
            Forcing::Coefficients(f) => Ok(f(t).norm_squared()),
            Forcing::Field(f) => {
                let grid = basis.grid();
                VelocityField::from_fn(grid, |p| f(t, p)).l2_norm_squared(grid)
            }
        }
    }
}

/// `(f(t), w_j)` for every mode.
pub fn forcing_rhs(basis: &BasisSet, f: &Forcing, t: f64) -> Result<Coeffs> {
    match f {
        Forcing::Zero => Ok(Coeffs::zeros(basis.m())),
        Forcing::Static(c) => {
            basis.check_len(c)?;
            Ok(c.clone())
        }
        Forcing::Coefficients(func) => {
            let c = func(t);
            basis.check_len(&c)?;
            Ok(c)
        }
        Forcing::Field(func) => {
            let field = VelocityField::from_fn(basis.grid(), |p| func(t, p));
            basis.project_field(&field)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DomainSpec, GridResolution};

    #[test]
    fn projections() {
        let b = BasisSet::build(DomainSpec::unit_torus(), 12, GridResolution::default()).unwrap();
        assert_eq!(forcing_rhs(&b, &Forcing::Zero, 0.0).unwrap(), Coeffs::zeros(12));
        let mut e = Coeffs::zeros(12);
        e[1] = 1.0;
        assert_eq!(forcing_rhs(&b, &Forcing::Static(e.clone()), 3.0).unwrap(), e);
        assert!(forcing_rhs(&b, &Forcing::Static(Coeffs::zeros(2)), 0.0).is_err());

        // the physical field of mode 1 times t projects back onto e₁
        let mode = b.modes()[1].clone();
        let d = *b.domain();
        let f = Forcing::field(move |t, p| {
            let v = mode.sample(&d, p).value;
            [t * v[0], t * v[1], t * v[2]]
        });
        let c = forcing_rhs(&b, &f, 2.0).unwrap();
        assert!((c - &e * 2.0).amax() < 1e-12);
        assert!((f.l2_norm_squared(&b, 2.0).unwrap() - 4.0).abs() < 1e-12);
    }
}
