use crate::domain::QuadratureGrid;
use crate::error::{Error, Result};

/// Velocity samples at the nodes of a quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    grid: String,
    values: Vec<[f64; 3]>,
}

impl VelocityField {
    pub fn zeros(grid: &QuadratureGrid) -> Self {
        VelocityField {
            grid: grid.fingerprint().to_string(),
            values: vec![[0.0; 3]; grid.len()],
        }
    }

    /// Sample `f` at every node of `grid`.
    pub fn from_fn(grid: &QuadratureGrid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        VelocityField {
            grid: grid.fingerprint().to_string(),
            values: (0..grid.len()).map(|i| f(grid.node(i))).collect(),
        }
    }

    pub fn from_values(grid: &QuadratureGrid, values: Vec<[f64; 3]>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(VelocityField {
            grid: grid.fingerprint().to_string(),
            values,
        })
    }

    pub fn grid_fingerprint(&self) -> &str {
        &self.grid
    }

    pub fn values(&self) -> &[[f64; 3]] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `∫ |u|²` by quadrature on `grid`.
    pub fn l2_norm_squared(&self, grid: &QuadratureGrid) -> Result<f64> {
        self.check_grid(grid)?;
        Ok(self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| grid.weight(i) * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))
            .sum())
    }

    pub(crate) fn check_grid(&self, grid: &QuadratureGrid) -> Result<()> {
        if self.grid != grid.fingerprint() {
            return Err(Error::GridMismatch {
                expected: grid.fingerprint().to_string(),
                got: self.grid.clone(),
            });
        }
        Ok(())
    }
}
