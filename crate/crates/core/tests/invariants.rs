//! Property checks over random coefficient vectors.

use std::f64::consts::PI;
use std::sync::OnceLock;

use navslip_core::diagnostics::damping_monotonicity;
use navslip_core::operators::{convection_rhs, damping_rhs, trilinear_form};
use navslip_core::{BasisSet, Coeffs, DomainSpec, GridResolution, PhysicsParams};
use proptest::prelude::*;

fn slab() -> &'static BasisSet {
    static B: OnceLock<BasisSet> = OnceLock::new();
    B.get_or_init(|| {
        let d = DomainSpec::slab(2.0 * PI, 2.0 * PI, 1.0, 0.7).unwrap();
        BasisSet::build(d, 16, GridResolution::default()).unwrap()
    })
}

fn torus() -> &'static BasisSet {
    static B: OnceLock<BasisSet> = OnceLock::new();
    B.get_or_init(|| BasisSet::build(DomainSpec::unit_torus(), 24, GridResolution::default()).unwrap())
}

fn coeffs(m: usize) -> impl Strategy<Value = Coeffs> {
    prop::collection::vec(-2.0f64..2.0, m).prop_map(Coeffs::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn h1_and_boundary_forms_are_nonnegative(g in coeffs(16)) {
        let b = slab();
        prop_assert!(b.inner_h1(&g, &g).unwrap() >= -1e-14);
        prop_assert!(b.inner_boundary(&g, &g).unwrap() >= -1e-14);
    }

    #[test]
    fn evaluation_is_linear(a in coeffs(16), c in coeffs(16), s in -3.0f64..3.0) {
        let b = slab();
        let fa = b.evaluate_field(&a, b.grid()).unwrap();
        let fc = b.evaluate_field(&c, b.grid()).unwrap();
        let fs = b.evaluate_field(&(&a * s + &c), b.grid()).unwrap();
        for ((x, y), z) in fa.values().iter().zip(fc.values()).zip(fs.values()) {
            for r in 0..3 {
                prop_assert!((s * x[r] + y[r] - z[r]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn projection_inverts_evaluation(g in coeffs(24)) {
        let b = torus();
        let f = b.evaluate_field(&g, b.grid()).unwrap();
        prop_assert!((b.project_field(&f).unwrap() - &g).amax() < 1e-11);
    }

    #[test]
    fn convection_is_energy_neutral(u in coeffs(16), v in coeffs(16)) {
        let b = slab();
        let scale = 1.0 + u.norm() * v.norm().powi(2);
        prop_assert!(trilinear_form(b, &u, &v, &v).unwrap().abs() < 1e-12 * scale);
        let c = convection_rhs(b, &u).unwrap();
        prop_assert!(c.dot(&u).abs() < 1e-12 * (1.0 + u.norm().powi(3)));
    }

    #[test]
    fn damping_is_dissipative_and_monotone(u1 in coeffs(24), u2 in coeffs(24), beta in 1.0f64..5.0) {
        let b = torus();
        let p = PhysicsParams::new(1.0, 1.0, beta).unwrap();
        prop_assert!(damping_rhs(b, &u1, &p).unwrap().dot(&u1) >= 0.0);
        prop_assert!(damping_monotonicity(b, &u1, &u2, beta, 1.0).unwrap() >= -1e-12);
    }
}
