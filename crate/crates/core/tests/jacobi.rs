use std::f64::consts::TAU;

use nalgebra::DVector;
use proptest::prelude::*;

use jacobi_stability::dynamics::{integrate_newton, DeviationField};
use jacobi_stability::jacobi::{
    integrate_geodesic, jacobi_metric, jacobi_operator_via_g, maupertuis_roundtrip, operator_identity_residual,
    s_of_t, GeodesicRecord,
};
use jacobi_stability::systems::{all_builtin_systems, builtin_system};
use jacobi_stability::Error;

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

#[test]
fn roundtrip_on_curved_systems() {
    for name in ["spherical-pendulum", "hyperbolic-well"] {
        let b = builtin_system(name).unwrap();
        let rep = maupertuis_roundtrip(&b.system, b.energy(), &b.q0, &b.v0, b.jacobi_span, 1e-3).unwrap();
        assert!(rep.discrepancy.sup_norm < 1e-6, "{name}: {rep:?}");
        assert!(rep.unit_speed_drift < 1e-8, "{name}: {rep:?}");
        assert!(rep.newton_residual < 1e-5, "{name}: {rep:?}");
    }
}

#[test]
fn roundtrip_energy_mismatch() {
    let b = builtin_system("harmonic").unwrap();
    let r = maupertuis_roundtrip(&b.system, 1.5, &b.q0, &b.v0, (0.0, TAU), 1e-3);
    assert!(matches!(r, Err(Error::EnergyMismatch { .. })), "{r:?}");
}

#[test]
fn geodesic_stops_at_forbidden_region() {
    // gravity reaches E = U at t = 1, where s = 1/3
    let b = builtin_system("gravity").unwrap();
    let jm = jacobi_metric(&b.system, b.energy());
    let geo = integrate_geodesic(&jm, &b.q0, &b.v0, (0.0, 0.5), 1e-3).unwrap();
    assert!(geo.truncated);
    assert!(*geo.s.last().unwrap() < 1.0 / 3.0);
}

#[test]
fn gravity_arclength() {
    // E − U = (1 − t)²/2, so f = (1 − t)² and s = (1 − (1 − t)³)/3
    let b = builtin_system("gravity").unwrap();
    let jm = jacobi_metric(&b.system, b.energy());
    let tr = integrate_newton(&b.system, &b.q0, &b.v0, (0.0, 0.9), 1e-3).unwrap();
    let s = s_of_t(&jm, &tr).unwrap();
    for (t, s) in tr.times.iter().zip(&s) {
        let exact = (1.0 - (1.0 - t).powi(3)) / 3.0;
        assert!((s - exact).abs() < 1e-12, "{t}");
    }
}

#[test]
fn operator_identity_near_turning_point() {
    // on [0, 0.6] the factor drops to 0.16 and |Δ^J V| grows like f⁻⁴;
    // the identity still holds to ~1e-9 relative to the operator's size
    let b = builtin_system("gravity").unwrap();
    let jm = jacobi_metric(&b.system, b.energy());
    let tr = integrate_newton(&b.system, &b.q0, &b.v0, (0.0, 0.6), 1e-3).unwrap();
    for seed in 0..5 {
        let dev = DeviationField::random_smooth(&b.system, &tr, seed, 3).unwrap();
        let size = jacobi_operator_via_g(&jm, &tr, &dev)
            .unwrap()
            .value
            .iter()
            .map(|v| v.amax())
            .fold(0.0, f64::max);
        let res = operator_identity_residual(&jm, &tr, &dev).unwrap();
        assert!(res < 1e-8 * size, "seed {seed}: {res:e} vs {size:e}");
    }
}

#[test]
fn records_from_every_builtin_trajectory_are_unit_speed() {
    for b in all_builtin_systems() {
        let jm = jacobi_metric(&b.system, b.energy());
        let tr = integrate_newton(&b.system, &b.q0, &b.v0, b.jacobi_span, 1e-3).unwrap();
        let geo = GeodesicRecord::from_trajectory(&jm, &tr).unwrap();
        assert!(geo.unit_speed_drift(&jm).unwrap() < 1e-8, "{}", b.name());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn identity_for_random_fields_on_the_pendulum(seed in any::<u64>()) {
        let b = builtin_system("spherical-pendulum").unwrap();
        let jm = jacobi_metric(&b.system, b.energy());
        let tr = integrate_newton(&b.system, &b.q0, &b.v0, (0.0, 3.0), 1e-3).unwrap();
        let dev = DeviationField::random_smooth(&b.system, &tr, seed, 2).unwrap();
        prop_assert!(operator_identity_residual(&jm, &tr, &dev).unwrap() < 1e-6);
    }

    #[test]
    fn zero_energy_gap_is_rejected(x in 1.5f64..3.0) {
        let b = builtin_system("harmonic").unwrap();
        let jm = jacobi_metric(&b.system, b.energy());
        let r = jm.factor_at(&v2(x, 0.5));
        prop_assert!(matches!(r, Err(Error::ForbiddenRegion { .. })), "{:?}", r);
    }
}
