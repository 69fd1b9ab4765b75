//! Subcommand implementations. Each returns a [`Report`]; files go to the
//! output directory.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use jacobi_stability::dynamics::{energy_of, growth_factor, integrate_newton, DeviationField, Trajectory};
use jacobi_stability::geometry::LocalGeometry;
use jacobi_stability::jacobi::{
    equal_energy_projection, integrate_geodesic, jacobi_metric, jacobi_operator_direct, jacobi_operator_via_g,
    maupertuis_roundtrip, orthogonal_part, relation_equal_energy, s_of_t, EqualEnergyReport, GeodesicRecord,
    JacobiMetric,
};
use jacobi_stability::variation::{action_second_difference, evaluate_functionals, make_proper_variation, FunctionalReport};
use jacobi_stability::Result;

use crate::config::{self, FieldKind, Setup};
use crate::output::{num, table, OutDir};
use crate::suite::{self, Check, CriterionResult, Relation, SuiteOptions};
use crate::{CliError, Context};

/// Outcome of one subcommand: a human summary, a JSON document and the checks
/// that decide the exit status.
#[derive(Debug, Default)]
pub struct Report {
    pub text: String,
    pub json: Value,
    pub checks: Vec<Check>,
    /// Set when a suite criterion stopped on a numerical error.
    pub error: Option<String>,
}

impl Report {
    fn new(text: String, json: Value, checks: Vec<Check>) -> Self {
        Self {
            text,
            json,
            checks,
            error: None,
        }
    }

    pub fn pass(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.pass)
    }
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn setups(ctx: &Context) -> std::result::Result<Vec<Setup>, CliError> {
    config::setups(&ctx.config, ctx.step)
}

fn sup(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

fn failed_checks(checks: &[Check]) -> String {
    let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        String::new()
    } else {
        format!("failed checks: {}\n", failed.join(", "))
    }
}

pub fn simulate(ctx: &Context, out: &mut OutDir) -> std::result::Result<Report, CliError> {
    let runs: Vec<(Setup, Trajectory)> = setups(ctx)?
        .into_par_iter()
        .map(|s| {
            let tr = integrate_newton(&s.system, &s.q0, &s.v0, s.t_span, s.step)?;
            Ok((s, tr))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut meta = Vec::new();
    let mut checks = Vec::new();
    for (s, tr) in &runs {
        let name = &s.system.name;
        let mut csv = Vec::new();
        tr.write_csv(&mut csv, None)?;
        out.write_bytes(&format!("{name}/trajectory.csv"), &csv)?;
        let n = tr.dim();
        let mut header: Vec<String> = vec!["t".into()];
        header.extend((1..=n).map(|i| format!("q{i}")));
        header.extend((1..=n).map(|i| format!("v{i}")));
        header.extend(["E".into(), "rel_drift".into()]);
        let scale = tr.energy.abs().max(1.0);
        let dat = (0..tr.len())
            .map(|k| {
                let e = energy_of(&s.system, &tr.points[k], &tr.velocities[k])?;
                let mut row = vec![tr.times[k]];
                row.extend(tr.points[k].iter());
                row.extend(tr.velocities[k].iter());
                row.extend([e, (e - tr.energy).abs() / scale]);
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        out.write_dat(&format!("{name}/trajectory.dat"), &header, &dat)?;
        let m = json!({
            "system": name,
            "E": tr.energy,
            "q0": vec_of(&s.q0),
            "v0": vec_of(&s.v0),
            "t_span": [s.t_span.0, s.t_span.1],
            "step": tr.step,
            "samples": tr.len(),
            "max_drift": tr.max_drift,
            "final_point": vec_of(tr.points.last().expect("non-empty trajectory")),
        });
        out.write_json(&format!("{name}/trajectory.json"), &m)?;
        meta.push(m);
        checks.push(Check::below(format!("drift/{name}"), tr.max_drift, ctx.tolerances.get("drift")));
        rows.push(vec![
            name.clone(),
            format!("{:.6}", tr.energy),
            tr.len().to_string(),
            format!("{:.3e}", tr.max_drift),
        ]);
    }
    let text = table(&["system", "E", "samples", "max_drift"], &rows) + &failed_checks(&checks);
    let json = json!({ "command": "simulate", "runs": meta, "checks": checks });
    Ok(Report::new(text, json, checks))
}

struct GeodesicRun {
    setup: Setup,
    record: GeodesicRecord,
    s_span: (f64, f64),
    discrepancy: f64,
    newton_residual: f64,
}

pub fn geodesic(ctx: &Context, out: &mut OutDir) -> std::result::Result<Report, CliError> {
    let runs: Vec<GeodesicRun> = setups(ctx)?
        .into_par_iter()
        .map(|s| {
            let jm = jacobi_metric(&s.system, s.energy);
            let s_span = match s.s_span {
                Some(span) => span,
                None => {
                    let tr = integrate_newton(&s.system, &s.q0, &s.v0, s.jacobi_span, s.step)?;
                    (0.0, *s_of_t(&jm, &tr)?.last().expect("non-empty trajectory"))
                }
            };
            let record = integrate_geodesic(&jm, &s.q0, &s.v0, s_span, s.step)?;
            let rt = maupertuis_roundtrip(&s.system, s.energy, &s.q0, &s.v0, s.jacobi_span, s.step)?;
            Ok(GeodesicRun {
                setup: s,
                record,
                s_span,
                discrepancy: rt.discrepancy.sup_norm,
                newton_residual: rt.newton_residual,
            })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut meta = Vec::new();
    let mut checks = Vec::new();
    for r in &runs {
        let name = &r.setup.system.name;
        let geo = &r.record;
        let n = r.setup.system.dim();
        let mut header: Vec<String> = vec!["s".into(), "t".into()];
        header.extend((1..=n).map(|i| format!("q{i}")));
        header.extend((1..=n).map(|i| format!("dq{i}")));
        let data: Vec<Vec<f64>> = (0..geo.len())
            .map(|k| {
                let mut row = vec![geo.s[k], geo.t[k]];
                row.extend(geo.points[k].iter());
                row.extend(geo.tangents[k].iter());
                row
            })
            .collect();
        let csv_rows: Vec<Vec<String>> = data.iter().map(|r| r.iter().map(|x| num(*x)).collect()).collect();
        out.write_csv(&format!("{name}/geodesic.csv"), &header, &csv_rows)?;
        out.write_dat(&format!("{name}/geodesic.dat"), &header, &data)?;
        let check = Check::below(format!("roundtrip/{name}"), r.discrepancy, ctx.tolerances.get("roundtrip"));
        let m = json!({
            "system": name,
            "E": r.setup.energy,
            "s_span": [r.s_span.0, r.s_span.1],
            "step": r.setup.step,
            "samples": geo.len(),
            "truncated": geo.truncated,
            "roundtrip_t_span": [r.setup.jacobi_span.0, r.setup.jacobi_span.1],
            "roundtrip_discrepancy": r.discrepancy,
            "newton_residual": r.newton_residual,
        });
        out.write_json(&format!("{name}/geodesic.json"), &m)?;
        meta.push(m);
        rows.push(vec![
            name.clone(),
            format!("{:.6}", geo.s.last().copied().unwrap_or(0.0)),
            geo.truncated.to_string(),
            format!("{:.3e}", r.discrepancy),
        ]);
        checks.push(check);
    }
    let text = table(&["system", "s_end", "truncated", "roundtrip"], &rows) + &failed_checks(&checks);
    let json = json!({ "command": "geodesic", "runs": meta, "checks": checks });
    Ok(Report::new(text, json, checks))
}

fn initial_deviation(ctx: &Context, n: usize) -> std::result::Result<(DVector<f64>, DVector<f64>), CliError> {
    let dc = &ctx.config.deviation;
    let pick = |v: &Option<Vec<f64>>, key: &str, default: DVector<f64>| match v {
        None => Ok(default),
        Some(x) if x.len() == n => Ok(DVector::from_column_slice(x)),
        Some(x) => Err(CliError::Config(format!("{key} has {} components, the chart has {n}", x.len()))),
    };
    let mut e1 = DVector::zeros(n);
    e1[0] = 1.0;
    Ok((
        pick(&dc.v0, "deviation.v0", e1)?,
        pick(&dc.dv0, "deviation.dv0", DVector::zeros(n))?,
    ))
}

pub fn deviation(ctx: &Context, out: &mut OutDir) -> std::result::Result<Report, CliError> {
    let alpha = ctx.config.deviation.alpha;
    if !(alpha > 0.0) {
        return Err(CliError::Config(format!("deviation.alpha = {alpha} must be positive")));
    }
    let setups = setups(ctx)?;
    let inputs = setups
        .iter()
        .map(|s| initial_deviation(ctx, s.system.dim()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let runs: Vec<(Trajectory, DeviationField, f64, f64)> = setups
        .par_iter()
        .zip(&inputs)
        .map(|(s, (dq, dv))| {
            let (tr, lin, gap) = suite::linearisation_gap(&s.system, &s.q0, &s.v0, dq, dv, s.t_span, s.step, alpha)?;
            let growth = growth_factor(&s.system, &tr, &lin)?;
            Ok((tr, lin, gap, growth))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut meta = Vec::new();
    let mut checks = Vec::new();
    for ((s, (dq, dv)), (tr, lin, gap, growth)) in setups.iter().zip(&inputs).zip(&runs) {
        let name = &s.system.name;
        let mut csv = Vec::new();
        tr.write_csv(&mut csv, Some(lin))?;
        out.write_bytes(&format!("{name}/deviation.csv"), &csv)?;
        let norms = (0..tr.len())
            .map(|k| {
                let local = LocalGeometry::at(&s.system.metric, &tr.points[k])?;
                Ok(vec![
                    tr.times[k],
                    local.inner(&lin.v[k], &lin.v[k]).sqrt(),
                    local.inner(&lin.dv[k], &lin.dv[k]).sqrt(),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        out.write_dat(&format!("{name}/deviation.dat"), &["t", "|V|", "|DV|"], &norms)?;
        let check = Check::below(format!("deviation/{name}"), *gap, ctx.tolerances.get("deviation"));
        let m = json!({
            "system": name,
            "E": s.energy,
            "t_span": [s.t_span.0, s.t_span.1],
            "step": s.step,
            "dq": vec_of(dq),
            "dv": vec_of(dv),
            "alpha": alpha,
            "growth_factor": growth,
            "oracle_distance": gap,
        });
        out.write_json(&format!("{name}/deviation.json"), &m)?;
        meta.push(m);
        rows.push(vec![name.clone(), format!("{growth:.4}"), format!("{gap:.3e}")]);
        checks.push(check);
    }
    let text = table(&["system", "growth", "oracle_distance"], &rows) + &failed_checks(&checks);
    let json = json!({ "command": "deviation", "runs": meta, "checks": checks });
    Ok(Report::new(text, json, checks))
}

/// `V = sin(t − t0) q(t)`, read in coordinates.
pub fn radial_field(setup: &Setup, traj: &Trajectory) -> Result<DeviationField> {
    let t0 = traj.times[0];
    let mut field = DeviationField::zeros(traj);
    for k in 0..traj.len() {
        let (sn, cs) = (traj.times[k] - t0).sin_cos();
        let q = &traj.points[k];
        let c = &traj.velocities[k];
        let v = q * sn;
        let rate = q * cs + c * sn;
        let local = LocalGeometry::at(&setup.system.metric, q)?;
        field.dv[k] = rate + local.gamma_xy(c, &v);
        field.v[k] = v;
    }
    Ok(field)
}

/// Headline row of `compare-operators`.
#[derive(Debug, Clone, Serialize)]
pub struct OperatorComparison {
    pub system: String,
    #[serde(rename = "E")]
    pub energy: f64,
    pub seed: u64,
    pub field: FieldKind,
    /// Sup of `|Δ^J V (from g) − Δ^J V (from h)|`.
    pub operator_residual: f64,
    /// Sup of `|Δ^J V − ΔV/f²|` for the raw field.
    pub correction_sup: f64,
    pub potential_is_constant: bool,
    /// The restricted relation on the equal-energy projection of `V⊥`.
    pub equal_energy: EqualEnergyReport,
    #[serde(skip)]
    per_t: Vec<Vec<f64>>,
}

fn compare_one(setup: &Setup, jm: &JacobiMetric, tr: &Trajectory, kind: FieldKind, seed: u64, modes: usize) -> Result<OperatorComparison> {
    let dev = match kind {
        FieldKind::Random => DeviationField::random_smooth(&setup.system, tr, seed, modes)?,
        FieldKind::Radial => radial_field(setup, tr)?,
    };
    let via = jacobi_operator_via_g(jm, tr, &dev)?;
    let geo = GeodesicRecord::from_trajectory(jm, tr)?;
    let direct = jacobi_operator_direct(jm, &geo, &dev.v)?;
    let per_t: Vec<Vec<f64>> = (0..tr.len())
        .map(|k| {
            let correction = (&via.time_term[k] + &via.energy_term[k]).amax();
            vec![
                tr.times[k],
                geo.s[k],
                (&via.value[k] - &direct[k]).amax(),
                correction,
                via.base[k].amax(),
                via.value[k].amax(),
            ]
        })
        .collect();
    let grad_sup = sup(tr.points.iter().map(|q| setup.system.grad_potential(q).map(|g| g.amax()).unwrap_or(f64::INFINITY)));
    let perp = orthogonal_part(&setup.system, tr, &dev)?;
    let projected = equal_energy_projection(&setup.system, tr, &perp)?;
    let equal_energy = relation_equal_energy(jm, tr, &projected)?;
    Ok(OperatorComparison {
        system: setup.system.name.clone(),
        energy: setup.energy,
        seed,
        field: kind,
        operator_residual: sup(per_t.iter().map(|r| r[2])),
        correction_sup: sup(per_t.iter().map(|r| r[3])),
        potential_is_constant: grad_sup == 0.0,
        equal_energy,
        per_t,
    })
}

/// Runs the operator comparison for every configured system and seed.
pub fn operator_comparisons(ctx: &Context) -> std::result::Result<Vec<OperatorComparison>, CliError> {
    let kind = ctx.config.deviation.field;
    let modes = ctx.config.deviation.field_modes;
    if modes == 0 {
        return Err(CliError::Config("deviation.field_modes must be positive".into()));
    }
    let seeds = match kind {
        FieldKind::Random => config::seeds(&ctx.config, ctx.seed, &[0]),
        FieldKind::Radial => vec![0],
    };
    let cases: Vec<(Setup, u64)> = setups(ctx)?
        .into_iter()
        .flat_map(|s| seeds.iter().map(move |&k| (s.clone(), k)))
        .collect();
    Ok(cases
        .par_iter()
        .map(|(s, seed)| {
            let jm = jacobi_metric(&s.system, s.energy);
            let tr = integrate_newton(&s.system, &s.q0, &s.v0, s.jacobi_span, s.step)?;
            compare_one(s, &jm, &tr, kind, *seed, modes)
        })
        .collect::<Result<_>>()?)
}

fn operator_checks(ctx: &Context, c: &OperatorComparison) -> Vec<Check> {
    let tol = &ctx.tolerances;
    let tag = format!("{}/seed{}", c.system, c.seed);
    let mut checks = vec![
        Check::below(format!("operator/{tag}"), c.operator_residual, tol.get("operator")),
        Check::below(format!("equal_energy/{tag}"), c.equal_energy.residual, tol.get("equal_energy")),
        Check::below(format!("constraint/{tag}"), c.equal_energy.constraint_residual, tol.get("constraint")),
    ];
    if c.potential_is_constant {
        checks.push(Check::below(
            format!("constant_correction/{tag}"),
            c.correction_sup,
            tol.get("constant_correction"),
        ));
    }
    checks
}

const HEADLINE: [&str; 8] = [
    "system",
    "E",
    "seed",
    "field",
    "operator_residual",
    "correction_sup",
    "equal_energy_residual",
    "equal_energy_correction_sup",
];

fn headline_row(c: &OperatorComparison) -> Vec<String> {
    vec![
        c.system.clone(),
        num(c.energy),
        c.seed.to_string(),
        serde_json::to_value(c.field).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        num(c.operator_residual),
        num(c.correction_sup),
        num(c.equal_energy.residual),
        num(c.equal_energy.correction_sup),
    ]
}

pub fn compare_operators(ctx: &Context, out: &mut OutDir) -> std::result::Result<Report, CliError> {
    let comparisons = operator_comparisons(ctx)?;
    write_comparisons(ctx, out, &comparisons)
}

fn write_comparisons(ctx: &Context, out: &mut OutDir, comparisons: &[OperatorComparison]) -> std::result::Result<Report, CliError> {
    let header = ["t", "s", "operator_residual", "correction", "base", "jacobi_operator"];
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for c in comparisons {
        let stem = format!("{}/operators_seed{}", c.system, c.seed);
        let csv_rows: Vec<Vec<String>> = c.per_t.iter().map(|r| r.iter().map(|x| num(*x)).collect()).collect();
        out.write_csv(&format!("{stem}.csv"), &header, &csv_rows)?;
        out.write_dat(&format!("{stem}.dat"), &header, &c.per_t)?;
        checks.extend(operator_checks(ctx, c));
        rows.push(headline_row(c));
    }
    out.write_csv("compare_operators.csv", &HEADLINE, &rows)?;
    let short: Vec<Vec<String>> = comparisons
        .iter()
        .map(|c| {
            vec![
                c.system.clone(),
                c.seed.to_string(),
                format!("{:.3e}", c.operator_residual),
                format!("{:.3e}", c.correction_sup),
                format!("{:.3e}", c.equal_energy.residual),
                format!("{:.3e}", c.equal_energy.correction_sup),
            ]
        })
        .collect();
    let text = table(
        &["system", "seed", "operator_res", "correction", "ee_residual", "ee_correction"],
        &short,
    ) + &failed_checks(&checks);
    let json = json!({ "command": "compare-operators", "comparisons": comparisons, "checks": checks });
    out.write_json("compare_operators.json", &json)?;
    Ok(Report::new(text, json, checks))
}

/// A functional report together with the action-oracle value of `δ²S`.
#[derive(Debug, Clone, Serialize)]
pub struct SecondVariation {
    #[serde(flatten)]
    pub report: FunctionalReport,
    pub d2s_oracle: f64,
}

pub fn second_variations(ctx: &Context) -> std::result::Result<Vec<SecondVariation>, CliError> {
    let seeds = config::seeds(&ctx.config, ctx.seed, &[0, 1, 2]);
    let vc = &ctx.config.variation;
    if !(vc.xi > 0.0) {
        return Err(CliError::Config(format!("variation.xi = {} must be positive", vc.xi)));
    }
    let cases: Vec<(Setup, u64)> = setups(ctx)?
        .into_iter()
        .flat_map(|s| seeds.iter().map(move |&k| (s.clone(), k)))
        .collect();
    let specs = cases
        .iter()
        .map(|(s, seed)| config::variation_spec(vc, *seed, s.system.dim()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(cases
        .par_iter()
        .zip(&specs)
        .map(|((s, seed), spec)| {
            let jm = jacobi_metric(&s.system, s.energy);
            let tr = integrate_newton(&s.system, &s.q0, &s.v0, s.jacobi_span, s.step)?;
            let report = evaluate_functionals(&jm, &tr, spec, Some(*seed))?;
            let var = make_proper_variation(&s.system, &tr, spec)?;
            let d2s_oracle = action_second_difference(&s.system, &tr, &var, vc.xi)?;
            Ok(SecondVariation { report, d2s_oracle })
        })
        .collect::<Result<_>>()?)
}

fn variation_checks(ctx: &Context, v: &SecondVariation) -> Vec<Check> {
    let tol = &ctx.tolerances;
    let r = &v.report;
    let tag = format!("{}/seed{}", r.system, r.seed.unwrap_or_default());
    vec![
        Check::below(format!("theorem1/{tag}"), r.thm1_residual, tol.get("theorem")),
        Check::below(format!("theorem2/{tag}"), r.thm2_residual, tol.get("theorem")),
        Check::new(
            format!("integrand_min/{tag}"),
            r.thm2_integrand_min,
            Relation::AtLeast,
            tol.get("integrand_floor"),
        ),
        Check::below(format!("orthogonal/{tag}"), r.orth_residual, tol.get("orthogonal")),
        Check::below(format!("orthogonal_cross_path/{tag}"), r.orth_cross_path, tol.get("orthogonal")),
        Check::below(format!("action/{tag}"), (r.d2s - v.d2s_oracle).abs(), tol.get("action")),
    ]
}

pub fn second_variation(ctx: &Context, out: &mut OutDir) -> std::result::Result<Report, CliError> {
    let results = second_variations(ctx)?;
    write_variations(ctx, out, &results)
}

fn write_variations(ctx: &Context, out: &mut OutDir, results: &[SecondVariation]) -> std::result::Result<Report, CliError> {
    let mut header: Vec<&str> = FunctionalReport::CSV_HEADER.to_vec();
    header.push("d2S_oracle");
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|v| {
            let mut row = v.report.csv_row();
            row.push(num(v.d2s_oracle));
            row
        })
        .collect();
    out.write_csv("second_variation.csv", &header, &rows)?;
    let checks: Vec<Check> = results.iter().flat_map(|v| variation_checks(ctx, v)).collect();
    let short: Vec<Vec<String>> = results
        .iter()
        .map(|v| {
            let r = &v.report;
            vec![
                r.system.clone(),
                r.seed.unwrap_or_default().to_string(),
                format!("{:+.6e}", r.d2s),
                format!("{:+.6e}", r.d2s0j),
                format!("{:+.6e}", r.d2lj),
                format!("{:.2e}", r.thm1_residual.max(r.thm2_residual)),
            ]
        })
        .collect();
    let text = table(&["system", "seed", "d2S", "d2S0J", "d2LJ", "thm_residual"], &short) + &failed_checks(&checks);
    let json = json!({ "command": "second-variation", "results": results, "checks": checks });
    out.write_json("second_variation.json", &json)?;
    Ok(Report::new(text, json, checks))
}

fn suite_options(ctx: &Context) -> SuiteOptions {
    let mut opts = SuiteOptions {
        tolerances: ctx.tolerances.clone(),
        fault: ctx.fault,
        ..SuiteOptions::default()
    };
    if let Some(step) = ctx.step.or(ctx.config.run.step) {
        opts.step = step;
    }
    if let Some(seed) = ctx.seed {
        opts.lemma_seed = seed;
        opts.variation_seed = seed;
    }
    opts
}

fn verdict(ctx: &Context, out: &mut OutDir, command: &str, file: &str, results: Vec<CriterionResult>) -> std::result::Result<Report, CliError> {
    let opts = suite_options(ctx);
    let pass = results.iter().all(|r| r.pass);
    let tolerances: serde_json::Map<String, Value> = opts.tolerances.iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
    let json = json!({
        "command": command,
        "pass": pass,
        "step": opts.step,
        "lemma_seed": opts.lemma_seed,
        "variation_seed": opts.variation_seed,
        "fault": opts.fault,
        "tolerances": tolerances,
        "criteria": results,
    });
    out.write_json(file, &json)?;
    let mut text: String = results.iter().map(|r| r.line() + "\n").collect();
    let passed = results.iter().filter(|r| r.pass).count();
    text.push_str(&format!("{passed}/{} criteria passed\n", results.len()));
    for r in &results {
        text.push_str(&failed_checks(&r.checks));
    }
    let checks: Vec<Check> = results.iter().flat_map(|r| r.checks.iter().cloned()).collect();
    let mut report = Report::new(text, json, checks);
    report.error = suite::numerical_error(&results).map(String::from);
    Ok(report)
}

pub fn verify_lemmas(ctx: &Context, out: &mut OutDir) -> std::result::Result<Report, CliError> {
    let result = suite::run_lemmas(&suite_options(ctx));
    verdict(ctx, out, "verify-lemmas", "verify_lemmas.json", vec![result])
}

pub fn verify_all(ctx: &Context, out: &mut OutDir) -> std::result::Result<Report, CliError> {
    let results = suite::run_suite(&suite_options(ctx));
    verdict(ctx, out, "verify-all", "verify_all.json", results)
}

/// Operator comparison and second variations in one pass, with a combined
/// plain-text summary.
pub fn report(ctx: &Context, out: &mut OutDir) -> std::result::Result<Report, CliError> {
    let ops = write_comparisons(ctx, out, &operator_comparisons(ctx)?)?;
    let vars = write_variations(ctx, out, &second_variations(ctx)?)?;
    let mut checks = ops.checks;
    checks.extend(vars.checks);
    let passed = checks.iter().filter(|c| c.pass).count();
    let text = format!(
        "operators\n{}\nsecond variations\n{}\n{passed}/{} checks passed\n",
        ops.text,
        vars.text,
        checks.len()
    );
    out.write_bytes("report.txt", text.as_bytes())?;
    let json = json!({
        "command": "report",
        "compare_operators": ops.json,
        "second_variation": vars.json,
        "pass": passed == checks.len(),
    });
    out.write_json("report.json", &json)?;
    Ok(Report::new(text, json, checks))
}
