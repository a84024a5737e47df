//! Energy ledgers, a-priori estimate checks and structural identities on
//! discrete trajectories.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::basis::{BasisSet, Coeffs};
use crate::error::{Error, Result};
use crate::forcing::{forcing_rhs, Forcing};
use crate::operators::{damping_factor, trilinear_form, OperatorSet, PhysicsParams};
use crate::random::{random_coeffs, seeded_rng};
use crate::timestepper::{Stepper, Trajectory};

/// Norms and running integrals at every recorded time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    /// `‖u‖²_{L²}` from the coefficients.
    pub e_l2: Vec<f64>,
    /// `‖u‖²_{L²}` by grid quadrature, kept as a cross-check.
    pub e_l2_quadrature: Vec<f64>,
    pub e_h1: Vec<f64>,
    /// `‖u‖^{β+1}_{L^{β+1}}`.
    pub e_damp: Vec<f64>,
    pub e_bdry: Vec<f64>,
    pub i_h1: Vec<f64>,
    pub i_damp: Vec<f64>,
    pub i_f: Vec<f64>,
    /// `(f(t), u(t))`.
    pub power: Vec<f64>,
    pub damping_exponent: f64,
}

impl EnergyLedger {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest gap between the coefficient and quadrature L² energies.
    pub fn max_l2_crosscheck(&self) -> f64 {
        self.e_l2
            .iter()
            .zip(&self.e_l2_quadrature)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with columns `t, E_l2, E_h1, E_damp, E_bdry, I_h1, I_damp, I_f`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,E_l2,E_h1,E_damp,E_bdry,I_h1,I_damp,I_f\n");
        for k in 0..self.len() {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.times[k],
                self.e_l2[k],
                self.e_h1[k],
                self.e_damp[k],
                self.e_bdry[k],
                self.i_h1[k],
                self.i_damp[k],
                self.i_f[k]
            );
        }
        out
    }
}

fn cumulative_trapezoid(t: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    let mut acc = 0.0;
    for k in 0..y.len() {
        if k > 0 {
            acc += 0.5 * (t[k] - t[k - 1]) * (y[k] + y[k - 1]);
        }
        out.push(acc);
    }
    out
}

/// `(Σ w |u|², Σ w |u|^(β+1))` for the field with coefficients `g`.
pub(crate) fn quadrature_energies(basis: &BasisSet, g: &Coeffs, beta: f64) -> (f64, f64) {
    let s = basis.synthesize(g, false);
    let w = basis.node_weights();
    let mut l2 = 0.0;
    let mut damp = 0.0;
    for (n, wn) in w.iter().enumerate() {
        let u = &s.values[3 * n..3 * n + 3];
        let n2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
        l2 += wn * n2;
        if n2 > 0.0 {
            damp += wn * n2 * damping_factor(n2, beta);
        }
    }
    (l2, damp)
}

/// Norms of every recorded state and their running time integrals.
pub fn energy_ledger(
    traj: &Trajectory,
    basis: &BasisSet,
    params: &PhysicsParams,
    forcing: &Forcing,
) -> Result<EnergyLedger> {
    traj.check_basis(basis)?;
    let beta = params.damping_exponent;
    let rows: Vec<Result<[f64; 7]>> = traj
        .states
        .par_iter()
        .map(|s| {
            let (l2q, damp) = quadrature_energies(basis, &s.g, beta);
            let (fnorm, power) = if forcing.is_zero() {
                (0.0, 0.0)
            } else {
                let f = forcing_rhs(basis, forcing, s.t)?;
                (forcing.l2_norm_squared(basis, s.t)?, f.dot(&s.g))
            };
            Ok([
                s.g.norm_squared(),
                l2q,
                basis.inner_h1(&s.g, &s.g)?,
                damp,
                basis.inner_boundary(&s.g, &s.g)?,
                fnorm,
                power,
            ])
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<_>>();
    let times = traj.times();
    let e_h1 = col(2);
    let e_damp = col(3);
    let f_sq = col(5);
    Ok(EnergyLedger {
        i_h1: cumulative_trapezoid(&times, &e_h1),
        i_damp: cumulative_trapezoid(&times, &e_damp),
        i_f: cumulative_trapezoid(&times, &f_sq),
        e_l2: col(0),
        e_l2_quadrature: col(1),
        e_h1,
        e_damp,
        e_bdry: col(4),
        power: col(6),
        times,
        damping_exponent: beta,
    })
}

/// Outcome of one inequality check; `pass ⇔ margin ≥ -tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub identity: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    /// Time at which the margin is smallest.
    pub time: f64,
    pub poincare_constant: f64,
    /// The bound read with `sup E` and the integrals over the whole interval
    /// taken separately. Informational: it exceeds the initial energy by the
    /// dissipated amount on any damped run.
    pub separate_sup_lhs: f64,
    pub separate_sup_margin: f64,
}

/// Check `E(t) + 2μ I_h1(t) + 2ϑ I_damp(t) ≤ ‖u₀‖² + (2/μ) C_Ω² I_f(t)` at
/// every recorded time. `rel_tol` scales with `1 + RHS`.
pub fn check_energy_inequality(
    ledger: &EnergyLedger,
    u0_norm_sq: f64,
    params: &PhysicsParams,
    poincare_constant: f64,
    rel_tol: f64,
) -> EstimateReport {
    let mu = params.viscosity;
    let theta = params.damping_coefficient;
    let c2 = poincare_constant * poincare_constant;
    let mut worst = (f64::INFINITY, 0.0, 0.0, 0.0, 0.0);
    for k in 0..ledger.len() {
        let lhs = ledger.e_l2[k] + 2.0 * mu * ledger.i_h1[k] + 2.0 * theta * ledger.i_damp[k];
        let rhs = u0_norm_sq + 2.0 / mu * c2 * ledger.i_f[k];
        let tol = rel_tol * (1.0 + rhs);
        // compare margins relative to their tolerance
        let scaled = (rhs - lhs) / tol;
        if scaled < worst.0 {
            worst = (scaled, lhs, rhs, tol, ledger.times[k]);
        }
    }
    let (_, lhs, rhs, tolerance, time) = if ledger.is_empty() {
        (0.0, 0.0, u0_norm_sq, rel_tol * (1.0 + u0_norm_sq), 0.0)
    } else {
        worst
    };
    let last = ledger.len().saturating_sub(1);
    let sup_e = ledger.e_l2.iter().copied().fold(0.0, f64::max);
    let (sep_lhs, sep_rhs) = if ledger.is_empty() {
        (0.0, u0_norm_sq)
    } else {
        (
            sup_e + 2.0 * mu * ledger.i_h1[last] + 2.0 * theta * ledger.i_damp[last],
            u0_norm_sq + 2.0 / mu * c2 * ledger.i_f[last],
        )
    };
    let margin = rhs - lhs;
    EstimateReport {
        identity: "max_t [ ‖u(t)‖²_L2 + 2μ ∫₀ᵗ‖u‖²_H1 + 2ϑ ∫₀ᵗ‖u‖^(β+1)_L(β+1) ] ≤ ‖u₀‖²_L2 + (2/μ) C_Ω² ∫₀ᵗ‖f‖²_L2"
            .to_string(),
        lhs,
        rhs,
        margin,
        tolerance,
        pass: margin >= -tolerance,
        time,
        poincare_constant,
        separate_sup_lhs: sep_lhs,
        separate_sup_margin: sep_rhs - sep_lhs,
    }
}

/// Per-step residual of the energy balance
/// `ΔE/2 + Δt · avg(2μ E_h1 + ϑ E_damp + μ E_bdry - (f, u))`
/// between consecutive records (trapezoid average of the endpoints).
pub fn energy_identity_residuals(ledger: &EnergyLedger, params: &PhysicsParams) -> Vec<f64> {
    let mu = params.viscosity;
    let theta = params.damping_coefficient;
    let rate =
        |k: usize| 2.0 * mu * ledger.e_h1[k] + theta * ledger.e_damp[k] + mu * ledger.e_bdry[k] - ledger.power[k];
    (1..ledger.len())
        .map(|k| {
            let dt = ledger.times[k] - ledger.times[k - 1];
            (0.5 * (ledger.e_l2[k] - ledger.e_l2[k - 1]) + dt * 0.5 * (rate(k) + rate(k - 1))).abs()
        })
        .collect()
}

/// Index of the first record whose L² energy exceeds its predecessor by more
/// than `rel_tol`, if any.
pub fn first_energy_increase(ledger: &EnergyLedger, rel_tol: f64) -> Option<usize> {
    (1..ledger.len()).find(|&k| ledger.e_l2[k] > ledger.e_l2[k - 1] * (1.0 + rel_tol))
}

/// Largest `|b(u, v, v)| / (‖u‖_{L²} ‖v‖²_{H¹})` over seeded random pairs.
pub fn check_skew_symmetry(basis: &BasisSet, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let u = random_coeffs(&mut rng, basis, 1.0, 1.0);
        let v = random_coeffs(&mut rng, basis, 1.0, 1.0);
        let scale = u.norm() * basis.inner_h1(&v, &v)?;
        if scale == 0.0 {
            continue;
        }
        worst = worst.max(trilinear_form(basis, &u, &v, &v)?.abs() / scale);
    }
    Ok(worst)
}

/// Largest `|b(u, v, w)| / (‖u‖_{H¹} ‖v‖_{H¹} ‖w‖_{H¹})` over seeded random
/// triples; an empirical trilinear constant.
pub fn fit_trilinear_constant(basis: &BasisSet, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded_rng(seed);
    let mut worst: f64 = 0.0;
    let h1 = |c: &Coeffs| basis.inner_h1(c, c).map(f64::sqrt);
    for _ in 0..samples {
        let u = random_coeffs(&mut rng, basis, 1.0, 1.0);
        let v = random_coeffs(&mut rng, basis, 1.0, 1.0);
        let w = random_coeffs(&mut rng, basis, 1.0, 1.0);
        let scale = h1(&u)? * h1(&v)? * h1(&w)?;
        if scale == 0.0 {
            continue;
        }
        worst = worst.max(trilinear_form(basis, &u, &v, &w)?.abs() / scale);
    }
    Ok(worst)
}

/// `∫ (ϑ|u₁|^(β-1)u₁ - ϑ|u₂|^(β-1)u₂)·(u₁ - u₂)` by quadrature on the basis grid.
pub fn damping_monotonicity(basis: &BasisSet, u1: &Coeffs, u2: &Coeffs, beta: f64, theta: f64) -> Result<f64> {
    basis.check_len(u1)?;
    basis.check_len(u2)?;
    let a = basis.synthesize(u1, false).values;
    let b = basis.synthesize(u2, false).values;
    Ok(monotonicity_sum(&a, &b, basis.node_weights(), beta, theta))
}

/// [`damping_monotonicity`] on an arbitrary grid (refinement oracle).
pub fn damping_monotonicity_on(
    basis: &BasisSet,
    u1: &Coeffs,
    u2: &Coeffs,
    beta: f64,
    theta: f64,
    grid: &crate::domain::QuadratureGrid,
) -> Result<f64> {
    let flat = |c: &Coeffs| -> Result<Vec<f64>> {
        Ok(basis
            .evaluate_field(c, grid)?
            .values()
            .iter()
            .flat_map(|v| *v)
            .collect())
    };
    Ok(monotonicity_sum(&flat(u1)?, &flat(u2)?, &grid.weights(), beta, theta))
}

fn monotonicity_sum(a: &[f64], b: &[f64], w: &[f64], beta: f64, theta: f64) -> f64 {
    let mut total = 0.0;
    for (n, wn) in w.iter().enumerate() {
        let ua = &a[3 * n..3 * n + 3];
        let ub = &b[3 * n..3 * n + 3];
        let na = ua.iter().map(|v| v * v).sum::<f64>();
        let nb = ub.iter().map(|v| v * v).sum::<f64>();
        let fa = if na > 0.0 { damping_factor(na, beta) } else { 0.0 };
        let fb = if nb > 0.0 { damping_factor(nb, beta) } else { 0.0 };
        let mut s = 0.0;
        for r in 0..3 {
            s += (fa * ua[r] - fb * ub[r]) * (ua[r] - ub[r]);
        }
        total += wn * s;
    }
    theta * total
}

/// `ϑ (‖u₁‖_{L^{β+1}} + ‖u₂‖_{L^{β+1}})^{β+1}`, the natural size of the
/// monotonicity integral.
pub fn monotonicity_scale(basis: &BasisSet, u1: &Coeffs, u2: &Coeffs, beta: f64, theta: f64) -> f64 {
    let norm = |g: &Coeffs| quadrature_energies(basis, g, beta).1.powf(1.0 / (beta + 1.0));
    theta * (norm(u1) + norm(u2)).powf(beta + 1.0)
}

/// Time-derivative norms of a trajectory and the fitted regularity margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub records: usize,
    /// `sup_t ‖u'‖_{L²}` from central differences of the records.
    pub sup_dt_l2: f64,
    pub sup_time: f64,
    /// `∫ ‖u'‖²_{H¹}` by the trapezoid rule.
    pub int_dt_h1_sq: f64,
    /// `sup_t ‖u'‖_{L²}` from the right-hand side evaluated at each record.
    pub sup_dt_l2_rhs: f64,
    /// Fitted trilinear constant `ĉ₃`.
    pub c3_hat: f64,
    /// `min_t (2μ - ĉ₃ ‖u(t)‖_{H¹})`.
    pub regime_margin: f64,
    pub in_regime: bool,
}

/// Finite-difference derivative bounds of a uniformly recorded trajectory.
pub fn derivative_bounds(
    traj: &Trajectory,
    basis: &BasisSet,
    ops: &OperatorSet,
    forcing: &Forcing,
) -> Result<DerivativeReport> {
    traj.check_basis(basis)?;
    let n = traj.states.len();
    if n < 3 {
        return Err(Error::TooFewRecords { required: 3, got: n });
    }
    let times = traj.times();
    let h = times[1] - times[0];
    for k in 1..n {
        let hk = times[k] - times[k - 1];
        if (hk - h).abs() > 1e-9 * h {
            return Err(Error::TimeGridMismatch(format!(
                "records are not uniformly spaced ({hk} vs {h} at index {k})"
            )));
        }
    }
    let g = |k: usize| &traj.states[k].g;
    let deriv: Vec<Coeffs> = (0..n)
        .map(|k| {
            if k == 0 {
                (g(0) * -3.0 + g(1) * 4.0 - g(2)) / (2.0 * h)
            } else if k == n - 1 {
                (g(n - 1) * 3.0 - g(n - 2) * 4.0 + g(n - 3)) / (2.0 * h)
            } else {
                (g(k + 1) - g(k - 1)) / (2.0 * h)
            }
        })
        .collect();
    let l2: Vec<f64> = deriv.iter().map(|d| d.norm()).collect();
    let h1: Vec<f64> = deriv.iter().map(|d| basis.inner_h1(d, d)).collect::<Result<_>>()?;
    let (sup_idx, sup) = l2
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let int_h1 = *cumulative_trapezoid(&times, &h1).last().unwrap_or(&0.0);

    let stepper = Stepper::new(basis, ops, &traj.config)?;
    let mut sup_rhs: f64 = 0.0;
    for s in &traj.states {
        sup_rhs = sup_rhs.max(stepper.rate(s.t, &s.g, forcing)?.norm());
    }

    let c3 = fit_trilinear_constant(basis, 32, 0)?;
    let mu = traj.config.params.viscosity;
    let mut margin = f64::INFINITY;
    for s in &traj.states {
        margin = margin.min(2.0 * mu - c3 * basis.inner_h1(&s.g, &s.g)?.sqrt());
    }
    Ok(DerivativeReport {
        records: n,
        sup_dt_l2: sup,
        sup_time: times[sup_idx],
        int_dt_h1_sq: int_h1,
        sup_dt_l2_rhs: sup_rhs,
        c3_hat: c3,
        regime_margin: margin,
        in_regime: margin > 0.0,
    })
}

/// Squared gap between two runs and the Gronwall exponent of the second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSeries {
    pub times: Vec<f64>,
    /// `‖u₁(t) - u₂(t)‖²_{L²}`.
    pub gap: Vec<f64>,
    /// `∫₀ᵗ ‖u₂‖⁸_{L⁴}`.
    pub exponent: Vec<f64>,
}

pub fn stability_gap(a: &Trajectory, b: &Trajectory, basis: &BasisSet) -> Result<GapSeries> {
    a.check_basis(basis)?;
    b.check_basis(basis)?;
    let times = a.times();
    if times != b.times() {
        return Err(Error::TimeGridMismatch(format!(
            "{} records vs {} records with differing times",
            a.states.len(),
            b.states.len()
        )));
    }
    let gap = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| (&x.g - &y.g).norm_squared())
        .collect();
    let l4_8: Vec<f64> = b
        .states
        .par_iter()
        .map(|s| {
            let v = basis.synthesize(&s.g, false).values;
            let q: f64 = basis
                .node_weights()
                .iter()
                .enumerate()
                .map(|(n, w)| {
                    let n2 = v[3 * n] * v[3 * n] + v[3 * n + 1] * v[3 * n + 1] + v[3 * n + 2] * v[3 * n + 2];
                    w * n2 * n2
                })
                .sum();
            q * q
        })
        .collect();
    let exponent = cumulative_trapezoid(&times, &l4_8);
    Ok(GapSeries { times, gap, exponent })
}
