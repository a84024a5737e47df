//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs without the libtest harness so that every line is printed even when
//! all criteria pass.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use navslip_core::basis::verify_basis_with;
use navslip_core::basis::CertificationTolerances;
use navslip_core::diagnostics::{
    check_energy_inequality, check_skew_symmetry, damping_monotonicity, derivative_bounds, energy_identity_residuals,
    energy_ledger, first_energy_increase, monotonicity_scale,
};
use navslip_core::harness::{
    smooth_torus_field, spatial_convergence_study, temporal_convergence_study, twin_run, SpatialStudy,
};
use navslip_core::operators::{cross_check_convection, ConvectionTensor};
use navslip_core::random::{random_coeffs, seeded_rng};
use navslip_core::timestepper::{initial_projection, initial_state, solve};
use navslip_core::{
    BasisSet, DomainSpec, Forcing, GridResolution, MmsCase, OperatorSet, PhysicsParams, Result, Scheme, SolverConfig,
    VelocityField,
};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn torus(m: usize) -> BasisSet {
    BasisSet::build(DomainSpec::unit_torus(), m, GridResolution::default()).unwrap()
}

fn slab(m: usize, alpha: f64) -> BasisSet {
    let d = DomainSpec::slab(2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI, 1.0, alpha).unwrap();
    BasisSet::build(d, m, GridResolution::default()).unwrap()
}

fn params(mu: f64, theta: f64, beta: f64) -> PhysicsParams {
    PhysicsParams::new(mu, theta, beta).unwrap()
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn skew_symmetry() -> Result<Outcome> {
    let t = skew_check(&torus(32))?;
    let s = skew_check(&slab(32, 1.0))?;
    Ok(Outcome {
        pass: t <= 1e-10 && s <= 1e-8,
        detail: format!("torus {t:.2e} (≤ 1e-10), slab {s:.2e} (≤ 1e-8)"),
    })
}

fn skew_check(basis: &BasisSet) -> Result<f64> {
    check_skew_symmetry(basis, 100, 2024)
}

fn certification() -> Result<Outcome> {
    let basis = slab(16, 1.0);
    let r = verify_basis_with(
        &basis,
        CertificationTolerances {
            divergence: 1e-8,
            normal_trace: 1e-8,
            slip: 1e-6,
            gram: 1e-10,
        },
    );
    Ok(Outcome {
        pass: r.pass,
        detail: format!(
            "div {:.2e}, normal {:.2e}, slip {:.2e}, gram {:.2e}",
            r.max_divergence, r.max_normal_trace, r.max_slip, r.max_gram_deviation
        ),
    })
}

fn energy_inequality() -> Result<Outcome> {
    let basis = torus(100);
    let ops = OperatorSet::assemble(&basis);
    let p = params(0.1, 1.0, 3.0);
    let g0 = random_coeffs(&mut seeded_rng(7), &basis, 1.0, 1.0);
    let config = SolverConfig::new(1e-3, 1.0, Scheme::ImexCn, p);
    let traj = solve(&basis, &ops, &config, &initial_state(&basis, &g0)?, &Forcing::Zero)?;
    let ledger = energy_ledger(&traj, &basis, &p, &Forcing::Zero)?;
    let r = check_energy_inequality(&ledger, g0.norm_squared(), &p, basis.poincare_constant(), 1e-8);
    let increase = first_energy_increase(&ledger, 1e-12);
    Ok(Outcome {
        pass: r.pass && increase.is_none(),
        detail: format!(
            "m={}, margin {:.3e} (tolerance {:.1e}), first energy increase {:?}",
            basis.m(),
            r.margin,
            r.tolerance,
            increase
        ),
    })
}

fn energy_identity() -> Result<Outcome> {
    let basis = slab(32, 1.0);
    let ops = OperatorSet::assemble(&basis);
    let p = params(0.1, 1.0, 3.0);
    let g0 = random_coeffs(&mut seeded_rng(3), &basis, 1.0, 1.0);
    let forcing = Forcing::coefficients({
        let f = random_coeffs(&mut seeded_rng(4), &basis, 2.0, 0.5);
        move |t| &f * t.cos()
    });
    let dts = [2e-3, 1e-3, 5e-4];
    let mut constants = Vec::new();
    for dt in dts {
        let mut config = SolverConfig::new(dt, 0.2, Scheme::ImexCn, p);
        config.picard_tol = 1e-13;
        config.picard_max_iter = 100;
        let traj = solve(&basis, &ops, &config, &initial_state(&basis, &g0)?, &forcing)?;
        let ledger = energy_ledger(&traj, &basis, &p, &forcing)?;
        let worst = energy_identity_residuals(&ledger, &p).into_iter().fold(0.0, f64::max);
        constants.push(worst / dt.powi(3));
    }
    let ratios: Vec<f64> = constants.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(Outcome {
        pass: ratios.iter().all(|r| (0.5..=2.0).contains(r)),
        detail: format!("C per dt {dts:?}: {}, ratios {ratios:.3?}", sci(&constants)),
    })
}

fn damping_monotone() -> Result<Outcome> {
    let bases = [torus(32), slab(32, 1.0)];
    let mut worst = f64::INFINITY;
    let mut counts = BTreeMap::new();
    for beta in [1.0f64, 2.0, 3.0, 3.5, 5.0] {
        for basis in &bases {
            let mut rng = seeded_rng(beta.to_bits());
            for _ in 0..100 {
                let a = 10f64.powf(rng.random_range(-2.0..1.0));
                let b = 10f64.powf(rng.random_range(-2.0..1.0));
                let u1 = random_coeffs(&mut rng, basis, 1.0, a);
                let u2 = random_coeffs(&mut rng, basis, 1.0, b);
                let value = damping_monotonicity(basis, &u1, &u2, beta, 1.0)?;
                let scale = monotonicity_scale(basis, &u1, &u2, beta, 1.0);
                let rel = value / scale;
                worst = worst.min(rel);
                if value < -1e-12 * scale {
                    *counts.entry(beta.to_string()).or_insert(0) += 1;
                }
            }
        }
    }
    Ok(Outcome {
        pass: counts.is_empty(),
        detail: format!("smallest scaled value {worst:.3e}, violations {counts:?}"),
    })
}

fn temporal_order() -> Result<Outcome> {
    let basis = torus(16);
    let ops = OperatorSet::assemble(&basis);
    let case = MmsCase::harmonic_pair(params(0.1, 1.0, 3.0));
    let imex = temporal_convergence_study(&case, &basis, &ops, Scheme::ImexCn, &[0.04, 0.02, 0.01, 0.005], 1.0)?;
    let rk4 = temporal_convergence_study(&case, &basis, &ops, Scheme::Rk4Explicit, &[0.2, 0.1, 0.05, 0.025], 1.0)?;
    let p1 = imex.order.unwrap_or(f64::NAN);
    let p2 = rk4.order.unwrap_or(f64::NAN);
    Ok(Outcome {
        pass: (1.9..=2.1).contains(&p1) && (3.8..=4.2).contains(&p2),
        detail: format!("IMEX-CN order {p1:.4}, RK4 order {p2:.4}"),
    })
}

fn spatial_order() -> Result<Outcome> {
    let study = SpatialStudy {
        domain: DomainSpec::unit_torus(),
        resolution: GridResolution::default(),
        mode_counts: vec![16, 32, 64],
        config: SolverConfig::new(1e-2, 1.0, Scheme::ImexCn, params(0.1, 1.0, 3.0)),
        smooth: true,
    };
    let r = spatial_convergence_study(&study, &smooth_torus_field)?;
    Ok(Outcome {
        pass: r.pass == Some(true),
        detail: format!("errors {}, ratios {:.3?}", sci(&r.errors), r.ratios),
    })
}

fn twin_stability() -> Result<Outcome> {
    let basis = torus(32);
    let ops = OperatorSet::assemble(&basis);
    let config = SolverConfig::new(1e-2, 1.0, Scheme::ImexCn, params(0.1, 1.0, 3.0));
    let g0 = random_coeffs(&mut seeded_rng(11), &basis, 1.0, 1.0);
    let r = twin_run(&basis, &ops, &config, &g0, &[1e-3, 5e-4, 2.5e-4], 5, &Forcing::Zero)?;
    let identical = r.params["identical_gap_max"].as_f64().unwrap_or(f64::NAN);
    Ok(Outcome {
        pass: r.pass == Some(true),
        detail: format!("ratios {:.4?}, identical-data gap {identical:.1e}", r.ratios),
    })
}

fn regularity() -> Result<Outcome> {
    let p = params(1.0, 1.0, 3.0);
    let config = SolverConfig::new(1e-3, 1.0, Scheme::ImexCn, p);
    let run = |m: usize| -> Result<(f64, f64)> {
        let basis = torus(m);
        let ops = OperatorSet::assemble(&basis);
        let field = VelocityField::from_fn(basis.grid(), smooth_torus_field);
        let traj = solve(
            &basis,
            &ops,
            &config,
            &initial_projection(&basis, &field)?,
            &Forcing::Zero,
        )?;
        let r = derivative_bounds(&traj, &basis, &ops, &Forcing::Zero)?;
        Ok((r.sup_dt_l2, r.int_dt_h1_sq))
    };
    let (s1, i1) = run(64)?;
    let (s2, i2) = run(128)?;
    let (gs, gi) = (s2 / s1, i2 / i1);
    Ok(Outcome {
        pass: gs <= 1.1 && gi <= 1.1,
        detail: format!("m 64 → 128: sup‖u'‖ growth {gs:.4}, ∫‖u'‖²_H1 growth {gi:.4}"),
    })
}

fn convection_paths() -> Result<Outcome> {
    let mut worst: f64 = 0.0;
    for basis in [torus(16), slab(16, 1.0)] {
        let tensor = ConvectionTensor::build(&basis)?;
        let mut rng = seeded_rng(99);
        for _ in 0..10 {
            let g = random_coeffs(&mut rng, &basis, 0.0, 1.0);
            worst = worst.max(cross_check_convection(&basis, &tensor, &g)?);
        }
    }
    Ok(Outcome {
        pass: worst <= 1e-9,
        detail: format!("max deviation {worst:.2e} over torus and slab"),
    })
}

fn run_cli(config: &Path, out: &Path) -> std::io::Result<bool> {
    let status = Command::new(env!("CARGO_BIN_EXE_navslip"))
        .args(["energy-report", "--serial", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .stderr(std::process::Stdio::null())
        .stdout(std::process::Stdio::null())
        .status()?;
    Ok(status.success())
}

fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.file_name().is_some_and(|n| n != "timing.json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn reproducibility() -> Result<Outcome> {
    let configs = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().map_err(|e| navslip_core::Error::Io(e.to_string()))?;
    let mut pass = true;
    let mut detail = Vec::new();
    for name in ["torus_default", "slab_default"] {
        let cfg = configs.join(format!("{name}.toml"));
        let (a, b) = (
            tmp.path().join(format!("{name}_a")),
            tmp.path().join(format!("{name}_b")),
        );
        let ran = run_cli(&cfg, &a).unwrap_or(false) && run_cli(&cfg, &b).unwrap_or(false);
        let (fa, fb) = (artifacts(&a), artifacts(&b));
        let same = ran && !fa.is_empty() && fa == fb;
        pass &= same;
        detail.push(format!(
            "{name}: {} files {}",
            fa.len(),
            if same { "identical" } else { "differ" }
        ));
    }
    Ok(Outcome {
        pass,
        detail: detail.join(", "),
    })
}

fn main() {
    type Check = fn() -> Result<Outcome>;
    let criteria: [(&str, Option<f64>, Check); 11] = [
        ("skew symmetry of the trilinear form", Some(10.0), skew_symmetry),
        ("slab basis certification", Some(30.0), certification),
        ("energy inequality and monotone decay", Some(120.0), energy_inequality),
        ("discrete energy identity residual", None, energy_identity),
        ("damping monotonicity", None, damping_monotone),
        ("temporal order of IMEX-CN and RK4", Some(300.0), temporal_order),
        ("spatial self-convergence", None, spatial_order),
        ("twin-run stability", None, twin_stability),
        ("derivative bounds under refinement", None, regularity),
        ("tensor and transform convection agree", None, convection_paths),
        ("bitwise reproducible serial runs", None, reproducibility),
    ];
    let mut failed = 0;
    println!();
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let (mut pass, mut detail) = match outcome {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if let Some(limit) = budget {
            if secs > *limit {
                pass = false;
                detail.push_str(&format!("; over the {limit} s budget"));
            }
        }
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2}: {name}: {detail} [{secs:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            k + 1
        );
    }
    println!("\n{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
