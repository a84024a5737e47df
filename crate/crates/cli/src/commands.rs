//! Subcommand implementations. Each one writes its artifacts into an
//! [`Artifacts`] directory and reports which checks failed.

use std::f64::consts::PI;

use navslip_core::basis::{export_basis, verify_basis_with};
use navslip_core::diagnostics::{
    check_energy_inequality, energy_identity_residuals, energy_ledger, first_energy_increase,
};
use navslip_core::harness::{
    mms_forcing_fn, mms_residual, rough_torus_field, smooth_torus_field, spatial_convergence_study,
    temporal_convergence_study, twin_run, SpatialStudy,
};
use navslip_core::operators::ConvectionPath;
use navslip_core::random::{random_coeffs, seeded_rng};
use navslip_core::timestepper::{auto_dt, initial_projection, initial_state, solve};
use navslip_core::{
    BasisSet, Coeffs, DomainSpec, Forcing, GalerkinState, MmsCase, OperatorSet, Scheme, SolverConfig, StudyReport,
    VelocityField,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifacts::Artifacts;
use crate::config::{AnalyticField, ForcingSpec, InitialSpec, MmsCaseId, RunConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    VerifyBasis,
    EnergyReport,
    Mms,
    ConvergeTime,
    ConvergeSpace,
    Twin,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::VerifyBasis => "verify-basis",
            Command::EnergyReport => "energy-report",
            Command::Mms => "mms",
            Command::ConvergeTime => "converge-time",
            Command::ConvergeSpace => "converge-space",
            Command::Twin => "twin",
        }
    }
}

/// What a subcommand produced besides its files.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Names of checks that did not pass.
    pub failed: Vec<String>,
    /// Extra manifest entries (basis hashes, effective step, seeds).
    pub manifest: serde_json::Map<String, Value>,
}

impl Outcome {
    fn check(&mut self, name: &str, pass: bool) {
        if !pass {
            self.failed.push(name.to_string());
        }
    }

    fn note(&mut self, key: &str, value: impl Serialize) {
        self.manifest.insert(key.to_string(), json!(value));
    }
}

pub fn execute(cmd: Command, cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    match cmd {
        Command::Simulate => simulate(cfg, out, false),
        Command::EnergyReport => simulate(cfg, out, true),
        Command::VerifyBasis => verify(cfg, out),
        Command::Mms => mms(cfg, out),
        Command::ConvergeTime => converge_time(cfg, out),
        Command::ConvergeSpace => converge_space(cfg, out),
        Command::Twin => twin(cfg, out),
    }
}

fn build(cfg: &RunConfig, m: usize) -> Result<(BasisSet, OperatorSet), CliError> {
    let basis = BasisSet::build(cfg.domain, m, cfg.resolution)?;
    let mut ops = OperatorSet::assemble(&basis);
    if cfg.convection == ConvectionPath::Tensor {
        ops = ops.with_tensor(&basis)?;
    }
    Ok((basis, ops))
}

/// The analytic initial fields are 2π-periodic; stretch them to the box. Each
/// component ignores its own coordinate, so the result stays divergence-free.
fn analytic_field(kind: &InitialSpec, domain: &DomainSpec) -> impl Fn([f64; 3]) -> [f64; 3] + Sync {
    let periods = match domain {
        DomainSpec::Torus { periods } => *periods,
        DomainSpec::Slab { .. } => [2.0 * PI; 3],
    };
    let f = if matches!(kind, InitialSpec::Rough) {
        rough_torus_field
    } else {
        smooth_torus_field
    };
    move |p: [f64; 3]| f([0, 1, 2].map(|d| p[d] * 2.0 * PI / periods[d]))
}

fn initial(cfg: &RunConfig, basis: &BasisSet) -> Result<GalerkinState, CliError> {
    let m = basis.m();
    let state = match &cfg.initial {
        InitialSpec::Zero => initial_state(basis, &Coeffs::zeros(m))?,
        InitialSpec::Modes { modes, values } => {
            let mut g = Coeffs::zeros(m);
            for (i, v) in modes.iter().zip(values) {
                g[*i] += v;
            }
            initial_state(basis, &g)?
        }
        InitialSpec::Random { seed, decay, amplitude } => {
            let mut rng = seeded_rng(*seed);
            initial_state(basis, &random_coeffs(&mut rng, basis, *decay, *amplitude))?
        }
        kind @ (InitialSpec::Smooth | InitialSpec::Rough) => {
            let f = analytic_field(kind, basis.domain());
            initial_projection(basis, &VelocityField::from_fn(basis.grid(), f))?
        }
    };
    Ok(state)
}

fn mms_case(cfg: &RunConfig) -> MmsCase {
    match cfg.forcing {
        ForcingSpec::Mms {
            case: MmsCaseId::SingleDecay,
            rate,
        } => MmsCase::single_decay(cfg.params, rate),
        _ => MmsCase::harmonic_pair(cfg.params),
    }
}

fn forcing(cfg: &RunConfig, basis: &BasisSet, ops: &OperatorSet) -> Result<Forcing, CliError> {
    Ok(match cfg.forcing {
        ForcingSpec::None => Forcing::Zero,
        ForcingSpec::StaticMode { mode, amplitude } => {
            let mut c = Coeffs::zeros(basis.m());
            c[mode] = amplitude;
            Forcing::Static(c)
        }
        ForcingSpec::Mms { .. } => mms_forcing_fn(&mms_case(cfg), basis, ops)?,
    })
}

fn solver_config(
    cfg: &RunConfig,
    basis: &BasisSet,
    ops: &OperatorSet,
    init: &GalerkinState,
    f: &Forcing,
) -> Result<SolverConfig, CliError> {
    let t = &cfg.time;
    let mut c = SolverConfig::new(t.dt.unwrap_or(t.final_time / 10.0), t.final_time, t.scheme, cfg.params);
    c.picard_tol = t.picard_tol;
    c.picard_max_iter = t.picard_max_iter;
    c.record_every = cfg.output.record_every;
    if t.dt.is_none() {
        c.dt = auto_dt(basis, ops, &c, init, f)?;
    }
    Ok(c)
}

fn simulate(cfg: &RunConfig, out: &mut Artifacts, report: bool) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let (basis, ops) = build(cfg, cfg.modes)?;
    let init = initial(cfg, &basis)?;
    let f = forcing(cfg, &basis, &ops)?;
    let config = solver_config(cfg, &basis, &ops, &init, &f)?;
    let traj = solve(&basis, &ops, &config, &init, &f)?;
    let ledger = energy_ledger(&traj, &basis, &cfg.params, &f)?;
    o.note("basis_hash", basis.hash());
    o.note("grid_shape", basis.grid().shape);
    o.note("dt", traj.dt);
    o.note("steps", traj.steps);

    out.csv("trajectory.csv", &traj.to_csv())?;
    out.csv("ledger.csv", &ledger.to_csv())?;
    out.json("final_state.json", traj.final_state())?;
    if !report {
        return Ok(o);
    }

    let u0 = init.g.norm_squared();
    let estimate = check_energy_inequality(
        &ledger,
        u0,
        &cfg.params,
        basis.poincare_constant(),
        cfg.verification.energy_rel_tol,
    );
    let residuals = energy_identity_residuals(&ledger, &cfg.params);
    let (worst_k, worst) = residuals
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (k, r)| if r > acc.1 { (k, r) } else { acc });
    let unforced = f.is_zero();
    let increase = first_energy_increase(&ledger, cfg.verification.monotone_rel_tol);
    let decay_ok = !unforced || increase.is_none();
    o.check("energy_inequality", estimate.pass);
    o.check("monotone_decay", decay_ok);
    let pass = estimate.pass && decay_ok;
    out.json(
        "report.json",
        &json!({
            "kind": "energy_report",
            "estimate": estimate,
            "identity": {
                "max_residual": worst,
                "time": ledger.times.get(worst_k + 1),
                "record_spacing": traj.dt * cfg.output.record_every as f64,
            },
            "monotone_decay": {
                "checked": unforced,
                "rel_tol": cfg.verification.monotone_rel_tol,
                "first_increase_time": increase.map(|k| ledger.times[k]),
                "pass": decay_ok,
            },
            "l2_quadrature_crosscheck": ledger.max_l2_crosscheck(),
            "pass": pass,
        }),
    )?;
    Ok(o)
}

fn verify(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let basis = BasisSet::build(cfg.domain, cfg.modes, cfg.resolution)?;
    let report = verify_basis_with(&basis, cfg.verification.certification);
    o.note("basis_hash", basis.hash());
    o.check("basis_certification", report.pass);
    out.json("report.json", &report)?;
    if cfg.output.json {
        let text = export_basis(&basis)?;
        out.json(
            "basis.json",
            &serde_json::from_str::<Value>(&text).map_err(navslip_core::Error::from)?,
        )?;
    }
    Ok(o)
}

fn mms(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let (basis, ops) = build(cfg, cfg.modes)?;
    let case = mms_case(cfg);
    let m = basis.m();
    let f = mms_forcing_fn(&case, &basis, &ops)?;
    let init = initial_state(&basis, &case.exact(m, 0.0)?)?;
    let config = solver_config(cfg, &basis, &ops, &init, &f)?;
    let traj = solve(&basis, &ops, &config, &init, &f)?;
    let residual = mms_residual(&case, &basis, &ops, &f, 0.0)?;

    let mut csv = String::from("t,error\n");
    let mut worst: f64 = 0.0;
    for s in &traj.states {
        let e = (&s.g - case.exact(m, s.t)?).norm();
        worst = worst.max(e);
        csv.push_str(&format!("{:.16e},{e:.16e}\n", s.t));
    }
    let pass = residual <= 1e-10;
    o.check("mms_residual_t0", pass);
    o.note("basis_hash", basis.hash());
    o.note("dt", traj.dt);
    out.csv("trajectory.csv", &traj.to_csv())?;
    out.csv("mms_error.csv", &csv)?;
    out.json(
        "report.json",
        &json!({
            "kind": "mms",
            "case": case,
            "scheme": config.scheme,
            "dt": traj.dt,
            "final_time": config.final_time,
            "max_error": worst,
            "mms_residual_t0": residual,
            "pass": pass,
        }),
    )?;
    Ok(o)
}

fn study_passes(r: &StudyReport) -> bool {
    r.pass != Some(false)
}

fn converge_time(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let (basis, ops) = build(cfg, cfg.modes)?;
    let case = mms_case(cfg);
    let mut reports = Vec::new();
    for &scheme in &cfg.study.schemes {
        let dts = match scheme {
            Scheme::ImexCn => &cfg.study.dts,
            Scheme::Rk4Explicit => &cfg.study.rk4_dts,
        };
        let r = temporal_convergence_study(&case, &basis, &ops, scheme, dts, cfg.time.final_time)?;
        let name = match scheme {
            Scheme::ImexCn => "temporal_order_imex_cn",
            Scheme::Rk4Explicit => "temporal_order_rk4_explicit",
        };
        o.check(name, study_passes(&r));
        reports.push(r);
    }
    o.note("basis_hash", basis.hash());
    let pass = reports.iter().all(study_passes);
    out.json(
        "report.json",
        &json!({ "kind": "converge_time", "studies": reports, "pass": pass }),
    )?;
    Ok(o)
}

fn converge_space(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    if !cfg.domain.is_torus() {
        return Err(CliError::Unsupported(
            "converge-space uses analytic initial fields defined on the torus only".into(),
        ));
    }
    let mut o = Outcome::default();
    let t = &cfg.time;
    let dt = t.dt.unwrap_or(t.final_time / 100.0);
    let mut config = SolverConfig::new(dt, t.final_time, t.scheme, cfg.params);
    config.picard_tol = t.picard_tol;
    config.picard_max_iter = t.picard_max_iter;
    let study = SpatialStudy {
        domain: cfg.domain,
        resolution: cfg.resolution,
        mode_counts: cfg.study.mode_counts.clone(),
        config,
        smooth: cfg.study.field == AnalyticField::Smooth,
    };
    let kind = match cfg.study.field {
        AnalyticField::Smooth => InitialSpec::Smooth,
        AnalyticField::Rough => InitialSpec::Rough,
    };
    let f = analytic_field(&kind, &cfg.domain);
    let r = spatial_convergence_study(&study, &f)?;
    o.check("spatial_convergence", study_passes(&r));
    o.note("basis_hashes", &r.manifest["basis_hashes"]);
    out.json("report.json", &r)?;
    Ok(o)
}

fn twin(cfg: &RunConfig, out: &mut Artifacts) -> Result<Outcome, CliError> {
    let mut o = Outcome::default();
    let (basis, ops) = build(cfg, cfg.modes)?;
    let init = initial(cfg, &basis)?;
    let f = forcing(cfg, &basis, &ops)?;
    let config = solver_config(cfg, &basis, &ops, &init, &f)?;
    let r = twin_run(&basis, &ops, &config, &init.g, &cfg.study.epsilons, cfg.study.seed, &f)?;
    o.check("twin_gap_scaling", study_passes(&r));
    o.note("basis_hash", basis.hash());
    o.note("dt", config.effective_dt());
    out.json("report.json", &r)?;
    Ok(o)
}
