//! Time integration of the Galerkin system
//! `g' + μ A g + N(g) = F(t)` with `N` the projected convection and damping.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::basis::{BasisSet, Coeffs};
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::forcing::{forcing_rhs, Forcing};
use crate::operators::{OperatorSet, PhysicsParams};

/// Factor on the a-priori bound beyond which a run is declared unstable.
pub const BLOWUP_FACTOR: f64 = 1e6;

/// Extent of the RK4 stability region on the negative real axis.
const RK4_REAL_STABILITY: f64 = 2.785;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Crank–Nicolson on `μA` with the nonlinear term at the midpoint, found by
    /// Picard iteration.
    ImexCn,
    /// Classical four-stage Runge–Kutta on the full right-hand side.
    Rk4Explicit,
}

impl Scheme {
    /// Formal order of accuracy.
    pub fn order(self) -> f64 {
        match self {
            Scheme::ImexCn => 2.0,
            Scheme::Rk4Explicit => 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub final_time: f64,
    pub scheme: Scheme,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub params: PhysicsParams,
    pub record_every: usize,
}

impl SolverConfig {
    /// Configuration with the default Picard settings and every step recorded.
    pub fn new(dt: f64, final_time: f64, scheme: Scheme, params: PhysicsParams) -> Self {
        SolverConfig {
            dt,
            final_time,
            scheme,
            picard_tol: 1e-10,
            picard_max_iter: 50,
            params,
            record_every: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.final_time.is_finite() && self.final_time > 0.0) {
            return bad("final_time", format!("T > 0 required, got {}", self.final_time));
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt < self.final_time) {
            return bad("dt", format!("0 < dt < T required, got {}", self.dt));
        }
        if !(self.picard_tol.is_finite() && self.picard_tol > 0.0) {
            return bad("picard_tol", format!("must be positive, got {}", self.picard_tol));
        }
        if self.picard_max_iter == 0 {
            return bad("picard_max_iter", "must be at least 1".into());
        }
        if self.record_every == 0 {
            return bad("record_every", "must be at least 1".into());
        }
        Ok(())
    }

    /// Number of uniform steps covering `[0, T]` with step at most `dt`.
    pub fn step_count(&self) -> usize {
        ((self.final_time / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    /// The uniform step actually taken, `T / step_count`.
    pub fn effective_dt(&self) -> f64 {
        self.final_time / self.step_count() as f64
    }
}

/// Coefficients `g(t)` of the Galerkin solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinState {
    pub t: f64,
    pub g: Coeffs,
}

impl GalerkinState {
    pub fn is_finite(&self) -> bool {
        self.g.iter().all(|v| v.is_finite())
    }
}

/// Work done by one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub picard_iterations: usize,
    pub picard_residual: f64,
}

/// Recorded states of a run together with the settings that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<GalerkinState>,
    pub config: SolverConfig,
    /// Step actually taken.
    pub dt: f64,
    pub steps: usize,
    pub basis_hash: String,
    /// Picard iterations per step (empty for explicit runs).
    pub picard_iterations: Vec<usize>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn final_state(&self) -> &GalerkinState {
        self.states
            .last()
            .expect("a trajectory holds at least the initial state")
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

    /// CSV with columns `t, g1, …, gm`.
    pub fn to_csv(&self) -> String {
        let m = self.states.first().map_or(0, |s| s.g.len());
        let mut out = String::from("t");
        for i in 1..=m {
            let _ = write!(out, ",g{i}");
        }
        out.push('\n');
        for s in &self.states {
            let _ = write!(out, "{:.16e}", s.t);
            for v in s.g.iter() {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// State at `t = 0` from a physical field sampled on the basis grid.
pub fn initial_projection(basis: &BasisSet, u0: &VelocityField) -> Result<GalerkinState> {
    Ok(GalerkinState {
        t: 0.0,
        g: basis.project_field(u0)?,
    })
}

/// State at `t = 0` from coefficients already in the span.
pub fn initial_state(basis: &BasisSet, g0: &Coeffs) -> Result<GalerkinState> {
    basis.check_len(g0)?;
    Ok(GalerkinState { t: 0.0, g: g0.clone() })
}

/// A time stepper with the Crank–Nicolson matrices factored once.
pub struct Stepper<'a> {
    basis: &'a BasisSet,
    ops: &'a OperatorSet,
    config: SolverConfig,
    dt: f64,
    mu_a: DMatrix<f64>,
    lhs: Option<Cholesky<f64, Dyn>>,
    rhs: DMatrix<f64>,
}

impl<'a> Stepper<'a> {
    /// Stepper with step `config.effective_dt()`.
    pub fn new(basis: &'a BasisSet, ops: &'a OperatorSet, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        Self::with_dt(basis, ops, config, config.effective_dt())
    }

    fn with_dt(basis: &'a BasisSet, ops: &'a OperatorSet, config: &SolverConfig, dt: f64) -> Result<Self> {
        ops.check_basis(basis)?;
        let m = basis.m();
        let mu_a = ops.stiffness() * config.params.viscosity;
        let (lhs, rhs) = match config.scheme {
            Scheme::ImexCn => {
                let id = DMatrix::<f64>::identity(m, m);
                let l = &id + &mu_a * (dt / 2.0);
                let chol = l.cholesky().ok_or_else(|| Error::InvalidParameter {
                    name: "stiffness",
                    reason: "Crank–Nicolson matrix is not positive definite".into(),
                })?;
                (Some(chol), &id - &mu_a * (dt / 2.0))
            }
            Scheme::Rk4Explicit => (None, DMatrix::zeros(0, 0)),
        };
        Ok(Stepper {
            basis,
            ops,
            config: *config,
            dt,
            mu_a,
            lhs,
            rhs,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `-μ A g - N(g) + F(t)`.
    pub fn rate(&self, t: f64, g: &Coeffs, forcing: &Forcing) -> Result<Coeffs> {
        let n = self.ops.nonlinear(self.basis, g, &self.config.params)?;
        let f = forcing_rhs(self.basis, forcing, t)?;
        Ok(f - &self.mu_a * g - n)
    }

    /// Advance one step from `state`.
    pub fn step(&self, state: &GalerkinState, forcing: &Forcing) -> Result<(GalerkinState, StepStats)> {
        self.basis.check_len(&state.g)?;
        let dt = self.dt;
        let t = state.t;
        let (g, stats) = match self.config.scheme {
            Scheme::Rk4Explicit => {
                let k1 = self.rate(t, &state.g, forcing)?;
                let k2 = self.rate(t + dt / 2.0, &(&state.g + &k1 * (dt / 2.0)), forcing)?;
                let k3 = self.rate(t + dt / 2.0, &(&state.g + &k2 * (dt / 2.0)), forcing)?;
                let k4 = self.rate(t + dt, &(&state.g + &k3 * dt), forcing)?;
                let g = &state.g + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
                (g, StepStats::default())
            }
            Scheme::ImexCn => self.imex_step(state, forcing)?,
        };
        Ok((GalerkinState { t: t + dt, g }, stats))
    }

    fn imex_step(&self, state: &GalerkinState, forcing: &Forcing) -> Result<(Coeffs, StepStats)> {
        let dt = self.dt;
        let lhs = self.lhs.as_ref().expect("IMEX stepper is factored");
        let f_half = forcing_rhs(self.basis, forcing, state.t + dt / 2.0)?;
        let base = &self.rhs * &state.g + f_half * dt;
        let mut half = state.g.clone();
        let mut residual = f64::INFINITY;
        for it in 1..=self.config.picard_max_iter {
            let n = self.ops.nonlinear(self.basis, &half, &self.config.params)?;
            let next = lhs.solve(&(&base - n * dt));
            let new_half = (&state.g + &next) * 0.5;
            residual = (&new_half - &half).norm();
            let scale = new_half.norm().max(1.0);
            half = new_half;
            if !residual.is_finite() {
                break;
            }
            if residual <= self.config.picard_tol * scale {
                return Ok((
                    next,
                    StepStats {
                        picard_iterations: it,
                        picard_residual: residual,
                    },
                ));
            }
        }
        Err(Error::PicardNotConverged {
            t: state.t,
            iterations: self.config.picard_max_iter,
            residual,
        })
    }
}

/// One step with freshly factored matrices; prefer [`Stepper`] in loops.
pub fn step(
    basis: &BasisSet,
    ops: &OperatorSet,
    config: &SolverConfig,
    state: &GalerkinState,
    forcing: &Forcing,
) -> Result<GalerkinState> {
    let stepper = Stepper::new(basis, ops, config)?;
    Ok(stepper.step(state, forcing)?.0)
}

/// Integrate from `initial` to `config.final_time` with uniform steps.
pub fn solve(
    basis: &BasisSet,
    ops: &OperatorSet,
    config: &SolverConfig,
    initial: &GalerkinState,
    forcing: &Forcing,
) -> Result<Trajectory> {
    let stepper = Stepper::new(basis, ops, config)?;
    let n = config.step_count();
    let dt = stepper.dt();
    let mu = config.params.viscosity;
    let e0 = initial.g.norm_squared();
    // squared Poincaré constant, only needed with a force
    let c2 = if forcing.is_zero() {
        0.0
    } else {
        1.0 / basis.min_h1_eigenvalue()
    };
    let mut i_f = 0.0;
    let mut f_prev = forcing.l2_norm_squared(basis, initial.t)?;

    let mut states = vec![initial.clone()];
    let mut picard = Vec::new();
    let mut state = initial.clone();
    for k in 1..=n {
        let (mut next, stats) = stepper.step(&state, forcing)?;
        // time from the step index, so that runs with equal settings share
        // their time grid exactly
        next.t = initial.t + k as f64 * dt;
        if config.scheme == Scheme::ImexCn {
            picard.push(stats.picard_iterations);
        }
        if !forcing.is_zero() {
            let f_next = forcing.l2_norm_squared(basis, next.t)?;
            i_f += 0.5 * dt * (f_prev + f_next);
            f_prev = f_next;
        }
        let bound = (e0 + 2.0 / mu * c2 * i_f).sqrt();
        let threshold = BLOWUP_FACTOR * bound.max(f64::MIN_POSITIVE);
        let norm = next.g.norm();
        if !next.is_finite() || norm > threshold {
            return Err(Error::NonFiniteState {
                t: next.t,
                norm,
                threshold,
            });
        }
        if k % config.record_every == 0 || k == n {
            states.push(next.clone());
        }
        state = next;
    }
    Ok(Trajectory {
        states,
        config: *config,
        dt,
        steps: n,
        basis_hash: basis.hash().to_string(),
        picard_iterations: picard,
    })
}

/// Default step: a quarter of the RK4 stability limit on the stiffest mode
/// for explicit runs; for IMEX, the largest `T / 2^k` whose first step
/// converges within ten Picard iterations.
pub fn auto_dt(
    basis: &BasisSet,
    ops: &OperatorSet,
    config: &SolverConfig,
    initial: &GalerkinState,
    forcing: &Forcing,
) -> Result<f64> {
    let t_final = config.final_time;
    match config.scheme {
        Scheme::Rk4Explicit => {
            let lmax = ops
                .stiffness()
                .clone()
                .symmetric_eigen()
                .eigenvalues
                .iter()
                .copied()
                .fold(0.0, f64::max);
            let limit = RK4_REAL_STABILITY / (config.params.viscosity * lmax);
            Ok((0.25 * limit).min(t_final / 10.0))
        }
        Scheme::ImexCn => {
            let mut dt = t_final / 10.0;
            for _ in 0..40 {
                let trial = SolverConfig { dt, ..*config };
                let stepper = Stepper::with_dt(basis, ops, &trial, dt)?;
                if let Ok((_, stats)) = stepper.step(initial, forcing) {
                    if stats.picard_iterations <= 10 {
                        return Ok(dt);
                    }
                }
                dt /= 2.0;
            }
            Err(Error::InvalidParameter {
                name: "dt",
                reason: "no step size down to T/2^40 gives a converging first step".into(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DomainSpec, GridResolution};
    use crate::random::{random_coeffs, seeded_rng};

    fn torus(m: usize) -> BasisSet {
        BasisSet::build(DomainSpec::unit_torus(), m, GridResolution::default()).unwrap()
    }

    fn params(mu: f64, theta: f64) -> PhysicsParams {
        PhysicsParams::new(mu, theta, 3.0).unwrap()
    }

    #[test]
    fn config_validation_and_step_count() {
        let p = params(0.1, 1.0);
        assert!(SolverConfig::new(0.1, 1.0, Scheme::ImexCn, p).validate().is_ok());
        assert!(SolverConfig::new(1.0, 1.0, Scheme::ImexCn, p).validate().is_err());
        assert!(SolverConfig::new(-0.1, 1.0, Scheme::ImexCn, p).validate().is_err());
        let c = SolverConfig::new(0.3, 1.0, Scheme::ImexCn, p);
        assert_eq!(c.step_count(), 4);
        assert_eq!(c.effective_dt(), 0.25);
        assert_eq!(SolverConfig::new(0.1, 1.0, Scheme::ImexCn, p).step_count(), 10);
    }

    #[test]
    fn zero_is_an_equilibrium() {
        let b = torus(20);
        let ops = OperatorSet::assemble(&b);
        for scheme in [Scheme::ImexCn, Scheme::Rk4Explicit] {
            let c = SolverConfig::new(0.05, 1.0, scheme, params(0.1, 1.0));
            let s0 = initial_state(&b, &Coeffs::zeros(20)).unwrap();
            let traj = solve(&b, &ops, &c, &s0, &Forcing::Zero).unwrap();
            assert!(traj.states.iter().all(|s| s.g.amax() == 0.0));
            assert_eq!(traj.states.len(), 21);
        }
    }

    #[test]
    fn crank_nicolson_amplification_factor() {
        // single unit-shell mode, no nonlinearity: λ = 2
        let b = torus(6);
        let ops = OperatorSet::assemble(&b).without_convection();
        let (mu, dt) = (0.3, 0.1);
        let c = SolverConfig::new(dt, 1.0, Scheme::ImexCn, params(mu, 0.0));
        let mut g = Coeffs::zeros(6);
        g[0] = 1.0;
        let s0 = initial_state(&b, &g).unwrap();
        let s1 = step(&b, &ops, &c, &s0, &Forcing::Zero).unwrap();
        let z = mu * 2.0 * dt;
        let factor = (1.0 - z / 2.0) / (1.0 + z / 2.0);
        assert!((s1.g[0] - factor).abs() < 1e-14);
        assert!((s1.t - dt).abs() < 1e-15);
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let b = torus(6);
        let ops = OperatorSet::assemble(&b).without_convection();
        let c = SolverConfig::new(0.01, 1.0, Scheme::Rk4Explicit, params(0.5, 0.0));
        let mut g = Coeffs::zeros(6);
        g[2] = 1.0;
        let traj = solve(&b, &ops, &c, &initial_state(&b, &g).unwrap(), &Forcing::Zero).unwrap();
        let exact = (-0.5f64 * 2.0).exp();
        assert!((traj.final_state().g[2] - exact).abs() < 1e-10);
    }

    #[test]
    fn imex_and_rk4_agree_to_second_order() {
        let b = torus(20);
        let ops = OperatorSet::assemble(&b);
        let mut rng = seeded_rng(11);
        let g0 = random_coeffs(&mut rng, &b, 0.0, 1.0);
        let s0 = initial_state(&b, &g0).unwrap();
        let p = params(0.1, 1.0);
        let reference = solve(
            &b,
            &ops,
            &SolverConfig::new(1e-3, 0.5, Scheme::Rk4Explicit, p),
            &s0,
            &Forcing::Zero,
        )
        .unwrap()
        .final_state()
        .g
        .clone();
        let err = |dt: f64| {
            let traj = solve(
                &b,
                &ops,
                &SolverConfig::new(dt, 0.5, Scheme::ImexCn, p),
                &s0,
                &Forcing::Zero,
            )
            .unwrap();
            (&traj.final_state().g - &reference).norm()
        };
        let (e1, e2) = (err(0.05), err(0.025));
        assert!(e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn picard_failure_is_reported() {
        let b = torus(20);
        let ops = OperatorSet::assemble(&b);
        let mut rng = seeded_rng(12);
        let g0 = random_coeffs(&mut rng, &b, 0.0, 50.0);
        let mut c = SolverConfig::new(0.5, 1.0, Scheme::ImexCn, params(0.1, 1.0));
        c.picard_max_iter = 2;
        let err = solve(&b, &ops, &c, &initial_state(&b, &g0).unwrap(), &Forcing::Zero).unwrap_err();
        assert!(matches!(err, Error::PicardNotConverged { .. }), "{err}");
    }

    #[test]
    fn explicit_instability_is_caught() {
        let b = torus(60);
        let ops = OperatorSet::assemble(&b);
        let mut rng = seeded_rng(13);
        let g0 = random_coeffs(&mut rng, &b, 0.0, 1.0);
        let c = SolverConfig::new(0.9, 100.0, Scheme::Rk4Explicit, params(1.0, 0.0));
        let err = solve(&b, &ops, &c, &initial_state(&b, &g0).unwrap(), &Forcing::Zero).unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { .. }), "{err}");
    }

    #[test]
    fn unforced_energy_does_not_grow() {
        let b = torus(40);
        let ops = OperatorSet::assemble(&b);
        let mut rng = seeded_rng(14);
        let g0 = random_coeffs(&mut rng, &b, 1.0, 2.0);
        let c = SolverConfig::new(0.01, 1.0, Scheme::ImexCn, params(0.1, 1.0));
        let traj = solve(&b, &ops, &c, &initial_state(&b, &g0).unwrap(), &Forcing::Zero).unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1].g.norm() <= w[0].g.norm() * (1.0 + 1e-12));
        }
        assert_eq!(traj.picard_iterations.len(), 100);
    }

    #[test]
    fn recording_stride_and_times() {
        let b = torus(6);
        let ops = OperatorSet::assemble(&b);
        let mut c = SolverConfig::new(0.1, 1.0, Scheme::ImexCn, params(0.1, 0.0));
        c.record_every = 3;
        let traj = solve(
            &b,
            &ops,
            &c,
            &initial_state(&b, &Coeffs::zeros(6)).unwrap(),
            &Forcing::Zero,
        )
        .unwrap();
        let times = traj.times();
        assert_eq!(times.len(), 5); // 0, 3, 6, 9, 10
        assert_eq!(*times.last().unwrap(), 1.0);
        let csv = traj.to_csv();
        assert!(csv.starts_with("t,g1,g2,g3,g4,g5,g6\n"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn initial_projection_splits_shells() {
        let b = torus(40);
        // one field per shell: |n|² = 1 and |n|² = 2
        let f = VelocityField::from_fn(b.grid(), |p| [0.0, p[0].sin(), (p[0] + p[1]).cos()]);
        let s = initial_projection(&b, &f).unwrap();
        let shell = |e: f64| -> f64 {
            b.modes()
                .iter()
                .zip(s.g.iter())
                .filter(|(m, _)| (m.h1_energy - e).abs() < 1e-9)
                .map(|(_, g)| g * g)
                .sum()
        };
        let v = b.domain().volume();
        assert!((shell(1.0) - v / 2.0).abs() < 1e-10);
        assert!((shell(2.0) - v / 2.0).abs() < 1e-10);
        assert_eq!(s.t, 0.0);
    }

    #[test]
    fn auto_step_sizes() {
        let b = torus(20);
        let ops = OperatorSet::assemble(&b);
        let s0 = initial_state(&b, &Coeffs::zeros(20)).unwrap();
        let p = params(0.1, 1.0);
        let rk = auto_dt(
            &b,
            &ops,
            &SolverConfig::new(0.1, 100.0, Scheme::Rk4Explicit, p),
            &s0,
            &Forcing::Zero,
        )
        .unwrap();
        // A = 2G has λ_max = 4 on the |n|² = 2 shell
        assert!((rk - 0.25 * RK4_REAL_STABILITY / (0.1 * 4.0)).abs() < 1e-12);
        let capped = auto_dt(
            &b,
            &ops,
            &SolverConfig::new(0.1, 1.0, Scheme::Rk4Explicit, p),
            &s0,
            &Forcing::Zero,
        )
        .unwrap();
        assert_eq!(capped, 0.1);
        let imex = auto_dt(
            &b,
            &ops,
            &SolverConfig::new(0.1, 10.0, Scheme::ImexCn, p),
            &s0,
            &Forcing::Zero,
        )
        .unwrap();
        assert_eq!(imex, 1.0);
    }

    #[test]
    fn basis_mismatch_is_rejected() {
        let b = torus(6);
        let other = torus(8);
        let ops = OperatorSet::assemble(&other);
        let c = SolverConfig::new(0.1, 1.0, Scheme::ImexCn, params(0.1, 0.0));
        assert!(matches!(Stepper::new(&b, &ops, &c), Err(Error::BasisMismatch { .. })));
    }
}
