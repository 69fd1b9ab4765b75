//! The verification suite: ten criteria, each a list of named checks with
//! explicit tolerances.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use jacobi_stability::conformal::{lemma_residuals, ConformalFactor, InjectedFault, LemmaOptions, LemmaReport};
use jacobi_stability::dynamics::{
    brute_force_deviation, deviation_distance, integrate_deviation, integrate_newton, DeviationField,
    MechanicalSystem, Trajectory,
};
use jacobi_stability::geometry::{flat, hyperbolic, sphere, LocalGeometry, ScalarField};
use jacobi_stability::jacobi::{
    energy_constraint, equal_energy_projection, first_conjugate_point, integrate_geodesic, integrate_jacobi_field,
    jacobi_metric, maupertuis_roundtrip, operator_identity_residual, relation_equal_energy,
};
use jacobi_stability::systems::{all_builtin_systems, builtin_system, BuiltinSystem};
use jacobi_stability::variation::{
    action_second_difference, evaluate_functionals, make_proper_variation, second_variation_lj, second_variation_s,
    FunctionalReport, Mode, VariationSpec,
};
use jacobi_stability::Result;

use crate::CliError;

type Outcome = Result<(Vec<Check>, String)>;

/// Default tolerances by name. Runtime budgets are in seconds.
pub const DEFAULT_TOLERANCES: [(&str, f64); 18] = [
    ("lemma_analytic", 1e-7),
    ("lemma_fd", 1e-4),
    ("lemma_runtime", 10.0),
    ("roundtrip", 1e-6),
    ("roundtrip_runtime", 5.0),
    ("operator", 1e-6),
    ("constraint", 1e-8),
    ("equal_energy", 1e-6),
    ("min_correction", 1e-2),
    ("theorem", 1e-6),
    ("integrand_floor", -1e-12),
    ("orthogonal", 1e-6),
    ("conjugate", 1e-3),
    ("length_variation", 1e-4),
    ("deviation", 1e-5),
    ("drift", 1e-8),
    ("action", 1e-5),
    ("constant_correction", 1e-10),
];

pub const OPERATOR_FIELDS: u64 = 20;
pub const THEOREM_SEEDS: u64 = 10;
pub const VARIATION_MODES: u32 = 3;
pub const DEVIATION_ALPHA: f64 = 1e-4;
pub const ACTION_XI: f64 = 1e-3;
pub const LEMMA_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances(BTreeMap<String, f64>);

impl Default for Tolerances {
    fn default() -> Self {
        Self(DEFAULT_TOLERANCES.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }
}

impl Tolerances {
    pub fn get(&self, name: &str) -> f64 {
        self.0[name]
    }

    pub fn set(&mut self, name: &str, value: f64) -> std::result::Result<(), CliError> {
        match self.0.get_mut(name) {
            Some(slot) if value.is_finite() => {
                *slot = value;
                Ok(())
            }
            Some(_) => Err(CliError::Config(format!("tolerance {name} = {value} is not finite"))),
            None => Err(CliError::Config(format!(
                "unknown tolerance `{name}`; known: {}",
                self.0.keys().cloned().collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">")]
    Above,
    #[serde(rename = ">=")]
    AtLeast,
}

/// One named comparison of a measured value against a tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, relation: Relation, tolerance: f64) -> Self {
        let pass = match relation {
            Relation::Below => value < tolerance,
            Relation::Above => value > tolerance,
            Relation::AtLeast => value >= tolerance,
        };
        Self {
            name: name.into(),
            value,
            relation,
            tolerance,
            pass,
            note: None,
        }
    }

    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self::new(name, value, Relation::Below, tolerance)
    }

    fn noted(mut self, note: String) -> Self {
        self.note = Some(note);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: String,
    pub pass: bool,
    pub summary: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub checks: Vec<Check>,
}

impl CriterionResult {
    fn from_outcome(id: u32, name: &str, outcome: Outcome) -> Self {
        match outcome {
            Ok((checks, summary)) => Self {
                id,
                name: name.into(),
                pass: !checks.is_empty() && checks.iter().all(|c| c.pass),
                summary,
                error: None,
                checks,
            },
            Err(e) => Self {
                id,
                name: name.into(),
                pass: false,
                summary: format!("error: {e}"),
                error: Some(e.to_string()),
                checks: Vec::new(),
            },
        }
    }

    pub fn line(&self) -> String {
        format!(
            "criterion {:2} {:4} {}: {}",
            self.id,
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.summary
        )
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOptions {
    pub tolerances: Tolerances,
    pub step: f64,
    pub lemma_seed: u64,
    /// First of the [`THEOREM_SEEDS`] consecutive variation seeds.
    pub variation_seed: u64,
    pub fault: Option<InjectedFault>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            step: 1e-3,
            lemma_seed: LEMMA_SEED,
            variation_seed: 0,
            fault: None,
        }
    }
}

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

fn lemma_check(r: &LemmaReport, path: &str, tol: f64) -> Check {
    let name = format!("{}/{}/{}/{}", r.lemma, r.metric, r.factor, path);
    let mut c = Check::below(name, r.max_residual, tol);
    if r.failed_samples > 0 {
        c.pass = false;
        c = c.noted(format!("{} of {} samples failed to evaluate", r.failed_samples, r.samples));
    }
    c
}

/// Lemma residuals on {flat, sphere, hyperbolic} × {e^{2x}, 2(E − U)} along
/// both the analytic and the finite-difference path.
pub fn lemma_checks(opts: &SuiteOptions) -> (Vec<Check>, f64) {
    let tol = &opts.tolerances;
    let start = Instant::now();
    let lemma_opts = LemmaOptions {
        seed: opts.lemma_seed,
        fault: opts.fault,
        ..LemmaOptions::default()
    };
    let factors = [
        ConformalFactor::exp_2x(2),
        ConformalFactor::jacobi(&ScalarField::half_square_norm(2), 10.0),
    ];
    let mut checks = Vec::new();
    for g in [flat(2), sphere(), hyperbolic()] {
        for cf in &factors {
            for r in lemma_residuals(&g, cf, &lemma_opts) {
                checks.push(lemma_check(&r, "analytic", tol.get("lemma_analytic")));
            }
            let (g, cf) = (g.clone().finite_difference_only(), cf.clone().finite_difference_only());
            for r in lemma_residuals(&g, &cf, &lemma_opts) {
                checks.push(lemma_check(&r, "fd", tol.get("lemma_fd")));
            }
        }
    }
    (checks, start.elapsed().as_secs_f64())
}

fn worst<'a>(checks: impl IntoIterator<Item = &'a Check>, suffix: &str) -> f64 {
    checks
        .into_iter()
        .filter(|c| c.name.ends_with(suffix))
        .map(|c| c.value)
        .fold(0.0, f64::max)
}

fn criterion1(opts: &SuiteOptions) -> Outcome {
    let (mut checks, elapsed) = lemma_checks(opts);
    let summary = format!(
        "analytic max {:.2e}, fd max {:.2e}, {:.2}s",
        worst(&checks, "/analytic"),
        worst(&checks, "/fd"),
        elapsed
    );
    checks.push(Check::below("runtime", elapsed, opts.tolerances.get("lemma_runtime")));
    Ok((checks, summary))
}

fn criterion2(opts: &SuiteOptions) -> Outcome {
    let start = Instant::now();
    let mut checks = Vec::new();
    for (name, span) in [("harmonic", (0.0, TAU)), ("gravity", (0.0, 0.9))] {
        let b = builtin_system(name)?;
        let rep = maupertuis_roundtrip(&b.system, b.energy(), &b.q0, &b.v0, span, opts.step)?;
        checks.push(Check::below(
            format!("roundtrip/{name}"),
            rep.discrepancy.sup_norm,
            opts.tolerances.get("roundtrip"),
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let summary = format!("max discrepancy {:.2e}, {elapsed:.2}s", worst(&checks, ""));
    checks.push(Check::below("runtime", elapsed, opts.tolerances.get("roundtrip_runtime")));
    Ok((checks, summary))
}

fn jacobi_trajectory(b: &BuiltinSystem, step: f64) -> Result<Trajectory> {
    integrate_newton(&b.system, &b.q0, &b.v0, b.jacobi_span, step)
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn criterion3(opts: &SuiteOptions) -> Outcome {
    let checks: Vec<Check> = all_builtin_systems()
        .par_iter()
        .map(|b| {
            let jm = jacobi_metric(&b.system, b.energy());
            let tr = jacobi_trajectory(b, opts.step)?;
            let residuals = (0..OPERATOR_FIELDS)
                .map(|seed| {
                    let dev = DeviationField::random_smooth(&b.system, &tr, seed, 3)?;
                    operator_identity_residual(&jm, &tr, &dev)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Check::below(
                format!("operator/{}", b.name()),
                max_of(residuals),
                opts.tolerances.get("operator"),
            ))
        })
        .collect::<Result<_>>()?;
    let summary = format!(
        "max residual {:.2e} over {} systems x {OPERATOR_FIELDS} fields",
        worst(&checks, ""),
        checks.len()
    );
    Ok((checks, summary))
}

/// `V = sin t (cos t, sin t)` along the unit circular orbit of the harmonic
/// oscillator, orthogonal to the velocity.
pub fn harmonic_radial_field(sys: &MechanicalSystem, traj: &Trajectory) -> Result<DeviationField> {
    DeviationField::from_fn(sys, traj, |t| {
        (v2(t.sin() * t.cos(), t.sin() * t.sin()), v2((2.0 * t).cos(), (2.0 * t).sin()))
    })
}

fn criterion4(opts: &SuiteOptions) -> Outcome {
    let tol = &opts.tolerances;
    let b = builtin_system("harmonic")?;
    let jm = jacobi_metric(&b.system, b.energy());
    let tr = integrate_newton(&b.system, &b.q0, &b.v0, (0.0, TAU), opts.step)?;
    let vperp = harmonic_radial_field(&b.system, &tr)?;
    let v = equal_energy_projection(&b.system, &tr, &vperp)?;
    let constraint = max_of(energy_constraint(&b.system, &tr, &v)?.into_iter().map(f64::abs));
    let rep = relation_equal_energy(&jm, &tr, &v)?;
    let checks = vec![
        Check::below("constraint", constraint, tol.get("constraint")),
        Check::below("identity", rep.residual, tol.get("equal_energy")),
        Check::new("correction_sup", rep.correction_sup, Relation::Above, tol.get("min_correction")),
    ];
    let summary = format!(
        "constraint {constraint:.2e}, residual {:.2e}, correction sup {:.3}",
        rep.residual, rep.correction_sup
    );
    Ok((checks, summary))
}

/// [`evaluate_functionals`] over every built-in system and `seeds`.
pub fn theorem_sweep(step: f64, seeds: &[u64], modes: u32) -> Result<Vec<FunctionalReport>> {
    let cases: Vec<(BuiltinSystem, u64)> = all_builtin_systems()
        .into_iter()
        .flat_map(|b| seeds.iter().map(move |&s| (b.clone(), s)))
        .collect();
    cases
        .par_iter()
        .map(|(b, seed)| {
            let jm = jacobi_metric(&b.system, b.energy());
            let tr = jacobi_trajectory(b, step)?;
            evaluate_functionals(&jm, &tr, &VariationSpec::seeded(*seed, modes, 2), Some(*seed))
        })
        .collect()
}

fn per_system(reports: &[FunctionalReport], field: impl Fn(&FunctionalReport) -> f64) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for r in reports {
        match out.iter_mut().find(|(n, _)| n == &r.system) {
            Some((_, m)) => *m = m.max(field(r)),
            None => out.push((r.system.clone(), field(r))),
        }
    }
    out
}

fn per_system_min(reports: &[FunctionalReport], field: impl Fn(&FunctionalReport) -> f64) -> Vec<(String, f64)> {
    per_system(reports, |r| -field(r))
        .into_iter()
        .map(|(n, v)| (n, -v))
        .collect()
}

fn criterion5(opts: &SuiteOptions, reports: &[FunctionalReport]) -> Outcome {
    let tol = &opts.tolerances;
    let mut checks = Vec::new();
    for (name, v) in per_system(reports, |r| r.thm1_residual) {
        checks.push(Check::below(format!("theorem1/{name}"), v, tol.get("theorem")));
    }
    for (name, v) in per_system(reports, |r| r.thm2_residual) {
        checks.push(Check::below(format!("theorem2/{name}"), v, tol.get("theorem")));
    }
    for (name, v) in per_system_min(reports, |r| r.thm2_integrand_min) {
        checks.push(Check::new(
            format!("integrand_min/{name}"),
            v,
            Relation::AtLeast,
            tol.get("integrand_floor"),
        ));
    }
    let floor = reports.iter().map(|r| r.thm2_integrand_min).fold(f64::INFINITY, f64::min);
    let summary = format!(
        "thm1 max {:.2e}, thm2 max {:.2e}, integrand min {floor:.2e} over {} cases",
        max_of(reports.iter().map(|r| r.thm1_residual)),
        max_of(reports.iter().map(|r| r.thm2_residual)),
        reports.len()
    );
    Ok((checks, summary))
}

fn criterion6(opts: &SuiteOptions, reports: &[FunctionalReport]) -> Outcome {
    let tol = opts.tolerances.get("orthogonal");
    let mut checks = Vec::new();
    for (name, v) in per_system(reports, |r| r.orth_residual) {
        checks.push(Check::below(format!("identity/{name}"), v, tol));
    }
    for (name, v) in per_system(reports, |r| r.orth_cross_path) {
        checks.push(Check::below(format!("cross_path/{name}"), v, tol));
    }
    let summary = format!(
        "identity max {:.2e}, cross-path max {:.2e}",
        max_of(reports.iter().map(|r| r.orth_residual)),
        max_of(reports.iter().map(|r| r.orth_cross_path))
    );
    Ok((checks, summary))
}

fn criterion7(opts: &SuiteOptions) -> Outcome {
    let tol = &opts.tolerances;
    let sys = MechanicalSystem::new("sphere-free", sphere(), ScalarField::constant(0.0, 2));
    let jm = jacobi_metric(&sys, 0.5);
    let q0 = v2(FRAC_PI_2, 0.0);
    let geo = integrate_geodesic(&jm, &q0, &v2(0.0, 1.0), (0.0, 4.0), opts.step)?;
    let field = integrate_jacobi_field(&jm, &geo, &v2(0.0, 0.0), &v2(1.0, 0.0))?;
    let zero = first_conjugate_point(&jm, &geo, &field)?;
    let tr = integrate_newton(&sys, &q0, &v2(0.0, 1.0), (0.0, PI), opts.step)?;
    let spec = VariationSpec::from_modes(vec![Mode { k: 1, coord: 0, coeff: 1.0 }]);
    let var = make_proper_variation(&sys, &tr, &spec)?;
    let d2l = second_variation_lj(&jm, &tr, &var.field)?;
    let first = match zero {
        Some(s) => Check::below("first_zero", (s - PI).abs(), tol.get("conjugate")),
        None => {
            let mut c = Check::below("first_zero", f64::MAX, tol.get("conjugate"));
            c.pass = false;
            c.noted("no zero found on [0, 4]".into())
        }
    };
    let checks = vec![first, Check::below("length_variation", d2l.abs(), tol.get("length_variation"))];
    let summary = match zero {
        Some(s) => format!("first zero at {s:.13}, d2LJ {d2l:.2e}"),
        None => format!("no zero found, d2LJ {d2l:.2e}"),
    };
    Ok((checks, summary))
}

/// Linearised vs. central-difference deviation from `(dq, dv)`, where `dv`
/// perturbs the coordinate velocity.
#[allow(clippy::too_many_arguments)]
pub fn linearisation_gap(
    sys: &MechanicalSystem,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    dq: &DVector<f64>,
    dv: &DVector<f64>,
    span: (f64, f64),
    step: f64,
    alpha: f64,
) -> Result<(Trajectory, DeviationField, f64)> {
    let tr = integrate_newton(sys, q0, v0, span, step)?;
    let local = LocalGeometry::at(&sys.metric, q0)?;
    let dv_cov = dv + local.gamma_xy(v0, dq);
    let lin = integrate_deviation(sys, &tr, dq, &dv_cov)?;
    let brute = brute_force_deviation(sys, q0, v0, dq, dv, alpha, span, step)?;
    let gap = deviation_distance(&lin, &brute)?;
    Ok((tr, lin, gap))
}

fn criterion8(opts: &SuiteOptions) -> Outcome {
    let checks: Vec<Check> = all_builtin_systems()
        .par_iter()
        .map(|b| {
            let (_, _, gap) = linearisation_gap(
                &b.system,
                &b.q0,
                &b.v0,
                &v2(0.3, -0.2),
                &v2(0.1, 0.25),
                b.span,
                opts.step,
                DEVIATION_ALPHA,
            )?;
            Ok(Check::below(format!("deviation/{}", b.name()), gap, opts.tolerances.get("deviation")))
        })
        .collect::<Result<_>>()?;
    let summary = format!("max distance {:.2e}", worst(&checks, ""));
    Ok((checks, summary))
}

fn criterion9(opts: &SuiteOptions) -> Outcome {
    let steps = (1.0 / opts.step).round();
    let checks = all_builtin_systems()
        .iter()
        .map(|b| {
            let tr = integrate_newton(&b.system, &b.q0, &b.v0, (0.0, 1.0), opts.step)?;
            Ok(Check::below(format!("drift/{}", b.name()), tr.max_drift, opts.tolerances.get("drift")))
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = format!("max relative drift {:.2e} over {steps} steps", worst(&checks, ""));
    Ok((checks, summary))
}

fn criterion10(opts: &SuiteOptions) -> Outcome {
    let checks: Vec<Check> = all_builtin_systems()
        .par_iter()
        .map(|b| {
            let tr = jacobi_trajectory(b, opts.step)?;
            let var = make_proper_variation(&b.system, &tr, &VariationSpec::seeded(3, VARIATION_MODES, 2))?;
            let quad = second_variation_s(&b.system, &tr, &var.field)?;
            let brute = action_second_difference(&b.system, &tr, &var, ACTION_XI)?;
            Ok(Check::below(
                format!("action/{}", b.name()),
                (quad - brute).abs(),
                opts.tolerances.get("action"),
            ))
        })
        .collect::<Result<_>>()?;
    let summary = format!("max |quadrature - second difference| {:.2e}", worst(&checks, ""));
    Ok((checks, summary))
}

pub const CRITERIA: [&str; 10] = [
    "conformal lemmas",
    "maupertuis round trip",
    "jacobi operator identity",
    "equal-energy identity",
    "theorems 1 and 2",
    "orthogonal identity",
    "conjugate point",
    "linearisation oracle",
    "energy conservation",
    "action second difference",
];

/// Runs criterion 1 alone.
pub fn run_lemmas(opts: &SuiteOptions) -> CriterionResult {
    CriterionResult::from_outcome(1, CRITERIA[0], criterion1(opts))
}

/// Runs all ten criteria.
pub fn run_suite(opts: &SuiteOptions) -> Vec<CriterionResult> {
    let seeds: Vec<u64> = (opts.variation_seed..opts.variation_seed + THEOREM_SEEDS).collect();
    let sweep = theorem_sweep(opts.step, &seeds, VARIATION_MODES);
    let from_sweep = |f: fn(&SuiteOptions, &[FunctionalReport]) -> Outcome| match &sweep {
        Ok(r) => f(opts, r),
        Err(e) => Err(e.clone()),
    };
    let outcomes: [Outcome; 10] = [
        criterion1(opts),
        criterion2(opts),
        criterion3(opts),
        criterion4(opts),
        from_sweep(criterion5),
        from_sweep(criterion6),
        criterion7(opts),
        criterion8(opts),
        criterion9(opts),
        criterion10(opts),
    ];
    outcomes
        .into_iter()
        .enumerate()
        .map(|(i, o)| CriterionResult::from_outcome(i as u32 + 1, CRITERIA[i], o))
        .collect()
}

/// Whether any criterion stopped on a numerical error rather than a failed
/// comparison.
pub fn numerical_error(results: &[CriterionResult]) -> Option<&str> {
    results.iter().find_map(|r| r.error.as_deref())
}
