//! Experiment configuration: a TOML file with flat keys in dotted sections.
//!
//! ```toml
//! [system]
//! name = "harmonic"            # a built-in system, or the three keys below
//! # metric = "sphere"          # built-in metric name
//! # metric_entries = [["1", "0"], ["0", "sin(q1)^2"]]
//! # potential = "cos(q1)"
//! q0 = [1.0, 0.0]
//! v0 = [0.0, 1.0]              # or `direction` together with `energy`
//! energy = 1.0
//!
//! [run]
//! t_span = [0.0, 6.283185307179586]
//! step = 1e-3
//! seeds = [0, 1, 2]
//!
//! [tolerances]
//! theorem = 1e-6
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use jacobi_stability::dynamics::{energy_of, MechanicalSystem};
use jacobi_stability::expr::Expr;
use jacobi_stability::geometry::{metric_by_name, ChartMetric, ScalarField};
use jacobi_stability::jacobi::ENERGY_MATCH_TOL;
use jacobi_stability::systems::{builtin_system, BuiltinSystem};
use jacobi_stability::variation::VariationSpec;
use jacobi_stability::Error;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub variation: VariationConfig,
    #[serde(default)]
    pub deviation: DeviationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: Option<String>,
    pub metric: Option<String>,
    pub metric_entries: Option<Vec<Vec<String>>>,
    pub potential: Option<String>,
    pub energy: Option<f64>,
    pub q0: Option<Vec<f64>>,
    pub v0: Option<Vec<f64>>,
    pub direction: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t_span: Option<[f64; 2]>,
    pub s_span: Option<[f64; 2]>,
    pub step: Option<f64>,
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariationConfig {
    pub modes: u32,
    pub orthogonal: bool,
    pub equal_energy: bool,
    pub xi: f64,
}

impl Default for VariationConfig {
    fn default() -> Self {
        Self {
            modes: 3,
            orthogonal: false,
            equal_energy: false,
            xi: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// Seeded sums of sinusoids.
    #[default]
    Random,
    /// `V = sin(t − t0) q(t)` in coordinates.
    Radial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviationConfig {
    pub v0: Option<Vec<f64>>,
    pub dv0: Option<Vec<f64>>,
    pub alpha: f64,
    pub field: FieldKind,
    pub field_modes: usize,
}

impl Default for DeviationConfig {
    fn default() -> Self {
        Self {
            v0: None,
            dv0: None,
            alpha: 1e-4,
            field: FieldKind::Random,
            field_modes: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Whether the file names a system at all (otherwise sweeps run over the
    /// built-in catalogue).
    pub fn has_system(&self) -> bool {
        let s = &self.system;
        s.name.is_some() || s.metric.is_some() || s.metric_entries.is_some() || s.potential.is_some()
    }
}

/// A fully resolved system with initial data and run parameters.
#[derive(Debug, Clone)]
pub struct Setup {
    pub system: MechanicalSystem,
    pub energy: f64,
    pub q0: DVector<f64>,
    pub v0: DVector<f64>,
    pub t_span: (f64, f64),
    /// Interval used for Jacobi-metric computations.
    pub jacobi_span: (f64, f64),
    pub s_span: Option<(f64, f64)>,
    pub step: f64,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn span(v: [f64; 2], key: &str) -> Result<(f64, f64), CliError> {
    if v[0].is_finite() && v[1].is_finite() && v[1] > v[0] {
        Ok((v[0], v[1]))
    } else {
        Err(config_err(format!("{key} = {v:?} is not an increasing interval")))
    }
}

fn custom_metric(cfg: &SystemConfig) -> Result<ChartMetric, CliError> {
    match (&cfg.metric, &cfg.metric_entries) {
        (Some(_), Some(_)) => Err(config_err("system.metric and system.metric_entries are exclusive")),
        (Some(name), None) => metric_by_name(name).map_err(|e| config_err(e.to_string())),
        (None, Some(rows)) => {
            let n = rows.len();
            if n == 0 || rows.iter().any(|r| r.len() != n) {
                return Err(config_err("system.metric_entries must be a square matrix"));
            }
            let mut entries = Vec::with_capacity(n * n);
            for (i, row) in rows.iter().enumerate() {
                for (j, src) in row.iter().enumerate() {
                    if j < i && src != &rows[j][i] {
                        return Err(config_err(format!("metric entry ({},{}) differs from ({},{})", i + 1, j + 1, j + 1, i + 1)));
                    }
                    entries.push(Expr::parse_in(src, n).map_err(|e| config_err(e.to_string()))?);
                }
            }
            Ok(ChartMetric::new("custom", n, move |p| {
                DMatrix::from_fn(n, n, |i, j| entries[i * n + j].eval(p.as_slice()))
            }))
        }
        (None, None) => Err(config_err("system needs `name`, `metric` or `metric_entries`")),
    }
}

fn vector(v: &Option<Vec<f64>>, key: &str, n: usize) -> Result<Option<DVector<f64>>, CliError> {
    match v {
        None => Ok(None),
        Some(x) if x.len() == n => Ok(Some(DVector::from_column_slice(x))),
        Some(x) => Err(config_err(format!("{key} has {} components, the chart has {n}", x.len()))),
    }
}

/// Resolves a system from the config, falling back to `builtin` when the file
/// names none.
pub fn resolve(cfg: &ExperimentConfig, step_override: Option<f64>) -> Result<Setup, CliError> {
    let sc = &cfg.system;
    let base: Option<BuiltinSystem> = match &sc.name {
        Some(name) => {
            if sc.metric.is_some() || sc.metric_entries.is_some() || sc.potential.is_some() {
                return Err(config_err("system.name cannot be combined with metric or potential keys"));
            }
            Some(builtin_system(name).map_err(|e| config_err(e.to_string()))?)
        }
        None => None,
    };
    let system = match &base {
        Some(b) => b.system.clone(),
        None => {
            let metric = custom_metric(sc)?;
            let n = metric.dim();
            let potential = match &sc.potential {
                Some(src) => ScalarField::from_expr(Expr::parse_in(src, n).map_err(|e| config_err(e.to_string()))?),
                None => ScalarField::constant(0.0, n),
            };
            MechanicalSystem::new("custom", metric, potential)
        }
    };
    let n = system.dim();
    let q0 = match (vector(&sc.q0, "system.q0", n)?, &base) {
        (Some(q), _) => q,
        (None, Some(b)) => b.q0.clone(),
        (None, None) => return Err(config_err("system.q0 is required for a custom system")),
    };
    system.metric.check_point(&q0).map_err(|e| config_err(e.to_string()))?;
    let given_v0 = vector(&sc.v0, "system.v0", n)?;
    let direction = vector(&sc.direction, "system.direction", n)?;
    let v0 = match (given_v0, direction) {
        (Some(_), Some(_)) => return Err(config_err("system.v0 and system.direction are exclusive")),
        (Some(v), None) => v,
        (None, Some(d)) => {
            let energy = sc.energy.ok_or_else(|| config_err("system.direction requires system.energy"))?;
            let gap = energy - system.potential_at(&q0);
            if !(gap > 0.0) {
                return Err(CliError::Numerical(Error::ForbiddenRegion {
                    point: q0.iter().copied().collect(),
                    margin: gap,
                }));
            }
            let norm = system.metric.norm(&q0, &d)?;
            if !(norm > 0.0) {
                return Err(config_err("system.direction must be non-zero"));
            }
            d * ((2.0 * gap).sqrt() / norm)
        }
        (None, None) => match &base {
            Some(b) if sc.q0.is_none() => b.v0.clone(),
            _ => return Err(config_err("system.v0 or system.direction is required")),
        },
    };
    let e0 = energy_of(&system, &q0, &v0)?;
    let energy = match sc.energy {
        Some(e) if (e - e0).abs() > ENERGY_MATCH_TOL * e.abs().max(1.0) => {
            return Err(config_err(format!(
                "system.energy = {e} but the initial conditions have E = {e0}"
            )))
        }
        _ => e0,
    };
    let t_span = match (cfg.run.t_span, &base) {
        (Some(s), _) => span(s, "run.t_span")?,
        (None, Some(b)) => b.span,
        (None, None) => (0.0, 1.0),
    };
    let jacobi_span = match (cfg.run.t_span, &base) {
        (None, Some(b)) => b.jacobi_span,
        _ => t_span,
    };
    let s_span = cfg.run.s_span.map(|s| span(s, "run.s_span")).transpose()?;
    let step = step_override.or(cfg.run.step).unwrap_or(1e-3);
    if !(step > 0.0 && step.is_finite()) {
        return Err(config_err(format!("step {step} must be positive")));
    }
    Ok(Setup {
        system,
        energy,
        q0,
        v0,
        t_span,
        jacobi_span,
        s_span,
        step,
    })
}

/// All built-in systems with their reference data, at `step`.
pub fn builtin_setups(step: f64) -> Vec<Setup> {
    jacobi_stability::systems::all_builtin_systems()
        .into_iter()
        .map(|b| Setup {
            energy: b.energy(),
            system: b.system,
            q0: b.q0,
            v0: b.v0,
            t_span: b.span,
            jacobi_span: b.jacobi_span,
            s_span: None,
            step,
        })
        .collect()
}

/// The configured system, or every built-in one when the file names none.
pub fn setups(cfg: &ExperimentConfig, step_override: Option<f64>) -> Result<Vec<Setup>, CliError> {
    if cfg.has_system() {
        Ok(vec![resolve(cfg, step_override)?])
    } else {
        let step = step_override.or(cfg.run.step).unwrap_or(1e-3);
        if !(step > 0.0 && step.is_finite()) {
            return Err(config_err(format!("step {step} must be positive")));
        }
        Ok(builtin_setups(step))
    }
}

pub fn seeds(cfg: &ExperimentConfig, seed_override: Option<u64>, default: &[u64]) -> Vec<u64> {
    match (seed_override, &cfg.run.seeds) {
        (Some(s), _) => vec![s],
        (None, Some(s)) if !s.is_empty() => s.clone(),
        _ => default.to_vec(),
    }
}

pub fn variation_spec(cfg: &VariationConfig, seed: u64, dim: usize) -> Result<VariationSpec, CliError> {
    if cfg.modes == 0 {
        return Err(config_err("variation.modes must be positive"));
    }
    let mut spec = VariationSpec::seeded(seed, cfg.modes, dim);
    spec.orthogonal = cfg.orthogonal;
    spec.equal_energy = cfg.equal_energy;
    Ok(spec)
}
