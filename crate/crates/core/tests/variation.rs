use nalgebra::DVector;
use proptest::prelude::*;
use rayon::prelude::*;

use jacobi_stability::dynamics::{integrate_newton, DeviationField};
use jacobi_stability::jacobi::jacobi_metric;
use jacobi_stability::systems::{all_builtin_systems, builtin_system};
use jacobi_stability::variation::{
    evaluate_functionals, make_proper_variation, orthogonal_identity_residual, theorem1_residual,
    theorem2_residual, FunctionalReport, VariationSpec,
};
use jacobi_stability::Error;

#[test]
fn one_sided_implication_on_every_case() {
    let reports: Vec<FunctionalReport> = all_builtin_systems()
        .par_iter()
        .flat_map_iter(|b| {
            let jm = jacobi_metric(&b.system, b.energy());
            let tr = integrate_newton(&b.system, &b.q0, &b.v0, b.jacobi_span, 1e-3).unwrap();
            (20..25u64)
                .map(|seed| evaluate_functionals(&jm, &tr, &VariationSpec::seeded(seed, 2, 2), Some(seed)).unwrap())
                .collect::<Vec<_>>()
        })
        .collect();
    for r in &reports {
        assert!(r.d2s - r.d2lj >= -1e-8, "{r:?}");
        assert!(r.thm2_correction >= 0.0, "{r:?}");
        if r.d2lj > 0.0 {
            assert!(r.d2s > 0.0, "{r:?}");
        }
    }
}

fn residuals_at(name: &str, step: f64) -> (f64, f64) {
    let b = builtin_system(name).unwrap();
    let jm = jacobi_metric(&b.system, b.energy());
    let tr = integrate_newton(&b.system, &b.q0, &b.v0, b.jacobi_span, step).unwrap();
    let var = make_proper_variation(&b.system, &tr, &VariationSpec::seeded(8, 3, 2)).unwrap();
    let t1 = theorem1_residual(&jm, &tr, &var.field).unwrap().residual;
    let t2 = theorem2_residual(&jm, &tr, &var.field).unwrap().residual;
    (t1, t2)
}

#[test]
fn identity_residuals_converge() {
    // asymptotic regime, above the ~1e-10 rounding floor
    for name in ["flat-free", "spherical-pendulum", "hyperbolic-well"] {
        let coarse = residuals_at(name, 0.01);
        let fine = residuals_at(name, 0.005);
        assert!(coarse.0 >= 4.0 * fine.0, "{name}: {coarse:?} {fine:?}");
        assert!(coarse.1 >= 4.0 * fine.1, "{name}: {coarse:?} {fine:?}");
    }
}

#[test]
fn equal_energy_variation_has_vanishing_theorem2_integrand() {
    // for equal-energy V the bracket reduces to ⟨γ̇,∇V⟩ + ⟨grad U,V⟩ = 0
    let b = builtin_system("harmonic").unwrap();
    let jm = jacobi_metric(&b.system, b.energy());
    let tr = integrate_newton(&b.system, &b.q0, &b.v0, (0.0, 3.0), 1e-3).unwrap();
    let spec = VariationSpec::seeded(4, 2, 2).equal_energy();
    let var = make_proper_variation(&b.system, &tr, &spec).unwrap();
    let check = theorem2_residual(&jm, &tr, &var.field);
    // not proper at the far end, so only the correction is meaningful here
    let correction = check.map(|c| c.correction).unwrap();
    assert!(correction.abs() < 1e-12, "{correction}");
}

#[test]
fn non_orthogonal_input_is_rejected() {
    let b = builtin_system("gravity").unwrap();
    let jm = jacobi_metric(&b.system, b.energy());
    let tr = integrate_newton(&b.system, &b.q0, &b.v0, b.jacobi_span, 1e-3).unwrap();
    let var = make_proper_variation(&b.system, &tr, &VariationSpec::seeded(1, 2, 2)).unwrap();
    assert!(matches!(
        orthogonal_identity_residual(&jm, &tr, &var.field),
        Err(Error::NotOrthogonal { .. })
    ));
    let zero = DeviationField::zeros(&tr);
    let r = orthogonal_identity_residual(&jm, &tr, &zero).unwrap();
    assert_eq!(r.identity.lhs, 0.0);
    assert_eq!(r.identity.rhs, 0.0);
}

#[test]
fn report_serialisation() {
    let b = builtin_system("sphere-free").unwrap();
    let jm = jacobi_metric(&b.system, b.energy());
    let tr = integrate_newton(&b.system, &b.q0, &b.v0, (0.0, 2.0), 1e-3).unwrap();
    let rep = evaluate_functionals(&jm, &tr, &VariationSpec::seeded(2, 2, 2), Some(2)).unwrap();
    let json = serde_json::to_string(&rep).unwrap();
    assert!(json.contains("\"E\":0.5"));
    let back: FunctionalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rep);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(FunctionalReport::CSV_HEADER).unwrap();
    w.write_record(rep.csv_row()).unwrap();
    let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
    assert!(text.starts_with("system,E,seed,d2S,d2S0J,d2LJ,thm1_residual,thm2_residual,orth_residual\n"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn theorems_for_random_variations(seed in any::<u64>(), modes in 1u32..4) {
        let b = builtin_system("spherical-pendulum").unwrap();
        let jm = jacobi_metric(&b.system, b.energy());
        let tr = integrate_newton(&b.system, &b.q0, &b.v0, (0.0, 2.5), 1e-3).unwrap();
        let rep = evaluate_functionals(&jm, &tr, &VariationSpec::seeded(seed, modes, 2), Some(seed)).unwrap();
        prop_assert!(rep.thm1_residual < 1e-6, "{:?}", rep);
        prop_assert!(rep.thm2_residual < 1e-6, "{:?}", rep);
        prop_assert!(rep.orth_residual < 1e-6 && rep.orth_cross_path < 1e-6, "{:?}", rep);
        prop_assert!(rep.thm2_integrand_min >= -1e-12);
    }

    #[test]
    fn proper_variations_vanish_at_endpoints(seed in any::<u64>(), orthogonal in any::<bool>()) {
        let b = builtin_system("hyperbolic-free").unwrap();
        let tr = integrate_newton(&b.system, &b.q0, &b.v0, (0.0, 1.0), 1e-2).unwrap();
        let mut spec = VariationSpec::seeded(seed, 3, 2);
        spec.orthogonal = orthogonal;
        let var = make_proper_variation(&b.system, &tr, &spec).unwrap();
        let zero = DVector::zeros(2);
        prop_assert_eq!(&var.field.v[0], &zero);
        prop_assert_eq!(var.field.v.last().unwrap(), &zero);
        if orthogonal {
            for (k, v) in var.field.v.iter().enumerate() {
                let ip = b.system.metric.inner(&tr.points[k], v, &tr.velocities[k]).unwrap();
                prop_assert!(ip.abs() < 1e-10);
            }
        }
    }
}
