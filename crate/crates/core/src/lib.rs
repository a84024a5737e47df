//! Spectral Galerkin solver for the damped incompressible Navier–Stokes
//! equations on a periodic box or a periodic slab with Navier slip walls,
//! together with the diagnostics used to verify its energy and stability
//! estimates.
//!
//! The building blocks, bottom up:
//! - [`basis`]: divergence-free slip bases and their quadrature tables
//! - [`operators`]: stiffness, convection, damping and forcing projections
//! - [`timestepper`]: IMEX Crank–Nicolson and RK4 integration
//! - [`diagnostics`]: energy ledgers and estimate checks
//! - [`harness`]: manufactured solutions and refinement studies

#![allow(clippy::needless_range_loop)]

pub mod basis;
pub mod diagnostics;
pub mod domain;
pub mod error;
pub mod field;
pub mod forcing;
pub mod harness;
pub mod legendre;
pub mod operators;
pub mod random;
pub mod timestepper;

pub use basis::{BasisMode, BasisSet, CertificationReport, Coeffs};
pub use diagnostics::{EnergyLedger, EstimateReport};
pub use domain::{DomainSpec, GridResolution, QuadratureGrid};
pub use error::{Error, Result};
pub use field::VelocityField;
pub use forcing::Forcing;
pub use harness::{MmsCase, StudyReport};
pub use operators::{OperatorSet, PhysicsParams};
pub use timestepper::{GalerkinState, Scheme, SolverConfig, Trajectory};
