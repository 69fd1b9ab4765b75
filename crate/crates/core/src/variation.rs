//! Second-variation functionals of the action `S`, of the free action `S₀^J`
//! and of the length `L^J` of the Jacobi metric, for proper variations along
//! a Newton trajectory, and the identities relating them.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{action, hessian_operator, DeviationField, MechanicalSystem, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::LocalGeometry;
use crate::jacobi::{equal_energy_projection, jacobi_operator_direct, orthogonal_part, GeodesicRecord, JacobiMetric};
use crate::numerics::simpson;

/// Minimum number of grid nodes for a functional quadrature.
pub const MIN_NODES: usize = 9;

/// One sine bump `coeff · sin(k π (t − t0)/(t1 − t0))` on coordinate `coord`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: u32,
    pub coord: usize,
    pub coeff: f64,
}

/// How to build a proper variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationSpec {
    pub modes: Vec<Mode>,
    /// Project out the component along `γ̇`.
    pub orthogonal: bool,
    /// Add the `λ γ̇` term restoring first-order energy conservation (implies
    /// `orthogonal`). The result need not vanish at the final time.
    pub equal_energy: bool,
}

impl VariationSpec {
    pub fn from_modes(modes: Vec<Mode>) -> Self {
        Self {
            modes,
            orthogonal: false,
            equal_energy: false,
        }
    }

    /// Modes `k = 1..=count` on every coordinate with coefficients drawn
    /// uniformly from `[-1, 1]`.
    pub fn seeded(seed: u64, count: u32, dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes = (1..=count)
            .flat_map(|k| (0..dim).map(move |coord| (k, coord)))
            .map(|(k, coord)| Mode {
                k,
                coord,
                coeff: rng.gen_range(-1.0..1.0),
            })
            .collect();
        Self::from_modes(modes)
    }

    pub fn orthogonal(mut self) -> Self {
        self.orthogonal = true;
        self
    }

    pub fn equal_energy(mut self) -> Self {
        self.equal_energy = true;
        self
    }
}

/// A variation field along a trajectory built from sine bumps.
#[derive(Debug, Clone, PartialEq)]
pub struct ProperVariation {
    pub spec: VariationSpec,
    pub field: DeviationField,
    /// Coordinate derivative `dV/dt` at each sample.
    pub rate: Vec<DVector<f64>>,
}

pub fn make_proper_variation(
    sys: &MechanicalSystem,
    traj: &Trajectory,
    spec: &VariationSpec,
) -> Result<ProperVariation> {
    if spec.modes.is_empty() {
        return Err(Error::EmptySpec);
    }
    if traj.len() < MIN_NODES {
        return Err(Error::GridTooCoarse {
            needed: MIN_NODES,
            got: traj.len(),
        });
    }
    let n = traj.dim();
    if let Some(m) = spec.modes.iter().find(|m| m.coord >= n || m.k == 0) {
        return Err(Error::InvalidArgument(format!("invalid mode {m:?}")));
    }
    let (t0, t1) = traj.t_span();
    let len = t1 - t0;
    let last = traj.len() - 1;
    let mut field = DeviationField::from_fn(sys, traj, |t| {
        let mut val = DVector::zeros(n);
        let mut der = DVector::zeros(n);
        for m in &spec.modes {
            let w = m.k as f64 * std::f64::consts::PI / len;
            val[m.coord] += m.coeff * (w * (t - t0)).sin();
            der[m.coord] += m.coeff * w * (w * (t - t0)).cos();
        }
        (val, der)
    })?;
    for k in [0, last] {
        field.v[k].fill(0.0);
    }
    if spec.orthogonal || spec.equal_energy {
        field = orthogonal_part(sys, traj, &field)?;
    }
    if spec.equal_energy {
        field = equal_energy_projection(sys, traj, &field)?;
    }
    let rate = (0..traj.len())
        .map(|k| {
            let local = LocalGeometry::at(&sys.metric, &traj.points[k])?;
            Ok(&field.dv[k] - local.gamma_xy(&traj.velocities[k], &field.v[k]))
        })
        .collect::<Result<_>>()?;
    Ok(ProperVariation {
        spec: spec.clone(),
        field,
        rate,
    })
}

fn check_grid(traj: &Trajectory) -> Result<()> {
    if traj.len() < MIN_NODES {
        return Err(Error::GridTooCoarse {
            needed: MIN_NODES,
            got: traj.len(),
        });
    }
    Ok(())
}

/// `δ²S = −∫ ⟨ΔV, V⟩ dt`.
pub fn second_variation_s(sys: &MechanicalSystem, traj: &Trajectory, v: &DeviationField) -> Result<f64> {
    check_grid(traj)?;
    let delta = hessian_operator(sys, traj, v)?;
    let integrand = (0..traj.len())
        .map(|k| Ok(-sys.metric.inner(&traj.points[k], &delta[k], &v.v[k])?))
        .collect::<Result<Vec<f64>>>()?;
    simpson(&traj.times, &integrand)
}

/// `δ²S₀^J = −∫ ⟨Δ^J V, V⟩^J ds`, entirely in `h` and arc length.
pub fn second_variation_s0j(jm: &JacobiMetric, traj: &Trajectory, v: &DeviationField) -> Result<f64> {
    check_grid(traj)?;
    v.check_attached(traj)?;
    let geo = GeodesicRecord::from_trajectory(jm, traj)?;
    h_quadratic_form(jm, &geo, &v.v)
}

fn h_quadratic_form(jm: &JacobiMetric, geo: &GeodesicRecord, v: &[DVector<f64>]) -> Result<f64> {
    let delta = jacobi_operator_direct(jm, geo, v)?;
    let integrand = (0..geo.len())
        .map(|k| Ok(-jm.metric().inner(&geo.points[k], &delta[k], &v[k])?))
        .collect::<Result<Vec<f64>>>()?;
    simpson(&geo.s, &integrand)
}

/// `V⊥ = V − ⟨γ', V⟩^J γ'` on the arc-length record.
pub fn h_orthogonal_part(jm: &JacobiMetric, geo: &GeodesicRecord, v: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    (0..geo.len())
        .map(|k| {
            let c = &geo.tangents[k];
            Ok(&v[k] - c * jm.metric().inner(&geo.points[k], c, &v[k])?)
        })
        .collect()
}

/// `δ²L^J = −∫ ⟨Δ^J V⊥, V⊥⟩^J ds`.
pub fn second_variation_lj(jm: &JacobiMetric, traj: &Trajectory, v: &DeviationField) -> Result<f64> {
    check_grid(traj)?;
    v.check_attached(traj)?;
    let geo = GeodesicRecord::from_trajectory(jm, traj)?;
    let perp = h_orthogonal_part(jm, &geo, &v.v)?;
    h_quadratic_form(jm, &geo, &perp)
}

/// Both sides of an identity and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub correction: f64,
    pub residual: f64,
}

/// Pointwise `g`-side data along the trajectory.
struct Along {
    /// `E − U`.
    gap: Vec<f64>,
    /// `⟨γ̇, ∇_γ̇V⟩`.
    c_dv: Vec<f64>,
    /// `⟨grad U, V⟩`.
    g_v: Vec<f64>,
    /// `⟨grad ln f, V⟩`.
    f_v: Vec<f64>,
}

fn along(jm: &JacobiMetric, traj: &Trajectory, v: &DeviationField) -> Result<Along> {
    let sys = jm.system();
    let mut out = Along {
        gap: vec![],
        c_dv: vec![],
        g_v: vec![],
        f_v: vec![],
    };
    for k in 0..traj.len() {
        let q = &traj.points[k];
        let f = jm.factor_at(q)?;
        let local = LocalGeometry::at(&sys.metric, q)?;
        let grad = sys.grad_potential_local(&local);
        let big_f = jm.factor().log_gradient_local(&local)?;
        out.gap.push(0.5 * f);
        out.c_dv.push(local.inner(&traj.velocities[k], &v.dv[k]));
        out.g_v.push(local.inner(&grad, &v.v[k]));
        out.f_v.push(local.inner(&big_f, &v.v[k]));
    }
    Ok(out)
}

/// `δ²S₀^J = δ²S + ∫ 2⟨γ̇,∇_γ̇V⟩⟨F,V⟩ dt`, `F = grad ln(2(E − U))`.
pub fn theorem1_residual(jm: &JacobiMetric, traj: &Trajectory, v: &DeviationField) -> Result<IdentityCheck> {
    let lhs = second_variation_s0j(jm, traj, v)?;
    let d2s = second_variation_s(jm.system(), traj, v)?;
    let a = along(jm, traj, v)?;
    let integrand: Vec<f64> = (0..traj.len()).map(|k| 2.0 * a.c_dv[k] * a.f_v[k]).collect();
    let correction = simpson(&traj.times, &integrand)?;
    let rhs = d2s + correction;
    Ok(IdentityCheck {
        lhs,
        rhs,
        correction,
        residual: (lhs - rhs).abs(),
    })
}

/// Integrand `[⟨γ̇,∇_γ̇V⟩ − ⟨∇_γ̇γ̇,V⟩]² / (2(E − U))` with `∇_γ̇γ̇ = −grad U`.
pub fn theorem2_integrand(jm: &JacobiMetric, traj: &Trajectory, v: &DeviationField) -> Result<Vec<f64>> {
    let a = along(jm, traj, v)?;
    Ok((0..traj.len())
        .map(|k| {
            let b = a.c_dv[k] + a.g_v[k];
            b * b / (2.0 * a.gap[k])
        })
        .collect())
}

/// `δ²L^J = δ²S − ∫ [⟨γ̇,∇_γ̇V⟩ − ⟨∇_γ̇γ̇,V⟩]² / (2(E − U)) dt`.
pub fn theorem2_residual(jm: &JacobiMetric, traj: &Trajectory, v: &DeviationField) -> Result<IdentityCheck> {
    let lhs = second_variation_lj(jm, traj, v)?;
    let d2s = second_variation_s(jm.system(), traj, v)?;
    let correction = simpson(&traj.times, &theorem2_integrand(jm, traj, v)?)?;
    let rhs = d2s - correction;
    Ok(IdentityCheck {
        lhs,
        rhs,
        correction,
        residual: (lhs - rhs).abs(),
    })
}

/// Orthogonal-variation identity `δ²S = δ²L^J + ∫ (⟨F^J, V⊥⟩^J)² ds` with
/// `F^J` the `h`-gradient of `ln(2(E − U))`, so `⟨F^J, V⟩^J = ⟨F, V⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalCheck {
    pub identity: IdentityCheck,
    /// The same correction obtained through [`theorem2_integrand`].
    pub theorem2_correction: f64,
    /// `|correction − theorem2_correction|`.
    pub cross_path: f64,
}

pub fn orthogonal_identity_residual(
    jm: &JacobiMetric,
    traj: &Trajectory,
    vperp: &DeviationField,
) -> Result<OrthogonalCheck> {
    let sys = jm.system();
    for k in 0..traj.len() {
        let local = LocalGeometry::at(&sys.metric, &traj.points[k])?;
        let c = &traj.velocities[k];
        let along = local.inner(c, &vperp.v[k]);
        let scale = (local.inner(c, c) * local.inner(&vperp.v[k], &vperp.v[k])).sqrt();
        if along.abs() > 1e-8 * scale.max(1.0) {
            return Err(Error::NotOrthogonal {
                t: traj.times[k],
                residual: along,
            });
        }
    }
    let lhs = second_variation_s(sys, traj, vperp)?;
    let d2l = second_variation_lj(jm, traj, vperp)?;
    let a = along(jm, traj, vperp)?;
    let s = crate::jacobi::s_of_t(jm, traj)?;
    let integrand: Vec<f64> = a.f_v.iter().map(|x| x * x).collect();
    let correction = simpson(&s, &integrand)?;
    let theorem2_correction = simpson(&traj.times, &theorem2_integrand(jm, traj, vperp)?)?;
    let rhs = d2l + correction;
    Ok(OrthogonalCheck {
        identity: IdentityCheck {
            lhs,
            rhs,
            correction,
            residual: (lhs - rhs).abs(),
        },
        theorem2_correction,
        cross_path: (correction - theorem2_correction).abs(),
    })
}

/// Central second difference of the action along `γ + ξV`, five-point
/// stencil: `(−S(2ξ) + 16S(ξ) − 30S(0) + 16S(−ξ) − S(−2ξ)) / (12ξ²)`,
/// `O(ξ⁴)`.
pub fn action_second_difference(
    sys: &MechanicalSystem,
    traj: &Trajectory,
    var: &ProperVariation,
    xi: f64,
) -> Result<f64> {
    let shifted = |sign: f64| -> Result<f64> {
        let pts: Vec<_> = traj
            .points
            .iter()
            .zip(&var.field.v)
            .map(|(q, v)| q + v * (sign * xi))
            .collect();
        let vel: Vec<_> = traj
            .velocities
            .iter()
            .zip(&var.rate)
            .map(|(c, r)| c + r * (sign * xi))
            .collect();
        action(sys, &traj.times, &pts, &vel)
    };
    five_point(shifted, xi)
}

fn five_point(mut at: impl FnMut(f64) -> Result<f64>, xi: f64) -> Result<f64> {
    let (p2, p1, z, m1, m2) = (at(2.0)?, at(1.0)?, at(0.0)?, at(-1.0)?, at(-2.0)?);
    Ok((-p2 + 16.0 * p1 - 30.0 * z + 16.0 * m1 - m2) / (12.0 * xi * xi))
}

/// Five-point central second difference of the free action `½∫ h(q', q') ds` of `h`
/// along `γ + ξV`, with `V` carried to arc length (`dV/ds = (dV/dt)/f`).
pub fn free_action_second_difference(
    jm: &JacobiMetric,
    traj: &Trajectory,
    var: &ProperVariation,
    xi: f64,
) -> Result<f64> {
    let geo = GeodesicRecord::from_trajectory(jm, traj)?;
    let f: Vec<f64> = traj.points.iter().map(|q| jm.factor_at(q)).collect::<Result<_>>()?;
    let value = |sign: f64| -> Result<f64> {
        let integrand = (0..geo.len())
            .map(|k| {
                let q = &geo.points[k] + &var.field.v[k] * (sign * xi);
                let d = &geo.tangents[k] + &var.rate[k] * (sign * xi / f[k]);
                Ok(0.5 * jm.metric().inner(&q, &d, &d)?)
            })
            .collect::<Result<Vec<f64>>>()?;
        simpson(&geo.s, &integrand)
    };
    five_point(value, xi)
}

/// All functionals and identity residuals for one (system, variation) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub system: String,
    #[serde(rename = "E")]
    pub energy: f64,
    pub seed: Option<u64>,
    pub grid_size: usize,
    pub step: f64,
    pub d2s: f64,
    pub d2s0j: f64,
    pub d2lj: f64,
    pub thm1_correction: f64,
    pub thm2_correction: f64,
    pub thm1_residual: f64,
    pub thm2_residual: f64,
    /// Smallest sample of the Theorem 2 integrand.
    pub thm2_integrand_min: f64,
    /// Orthogonal identity on the `g`-orthogonal part of the variation.
    pub orth_residual: f64,
    pub orth_cross_path: f64,
}

impl FunctionalReport {
    pub const CSV_HEADER: [&'static str; 9] = [
        "system",
        "E",
        "seed",
        "d2S",
        "d2S0J",
        "d2LJ",
        "thm1_residual",
        "thm2_residual",
        "orth_residual",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.system.clone(),
            format!("{:.17e}", self.energy),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            format!("{:.17e}", self.d2s),
            format!("{:.17e}", self.d2s0j),
            format!("{:.17e}", self.d2lj),
            format!("{:.6e}", self.thm1_residual),
            format!("{:.6e}", self.thm2_residual),
            format!("{:.6e}", self.orth_residual),
        ]
    }
}

/// Evaluates every functional and identity for the variation built from
/// `spec` (and for its orthogonal part).
pub fn evaluate_functionals(
    jm: &JacobiMetric,
    traj: &Trajectory,
    spec: &VariationSpec,
    seed: Option<u64>,
) -> Result<FunctionalReport> {
    let sys = jm.system();
    let var = make_proper_variation(sys, traj, spec)?;
    let t1 = theorem1_residual(jm, traj, &var.field)?;
    let t2 = theorem2_residual(jm, traj, &var.field)?;
    let integrand_min = theorem2_integrand(jm, traj, &var.field)?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let perp = make_proper_variation(sys, traj, &spec.clone().orthogonal())?;
    let orth = orthogonal_identity_residual(jm, traj, &perp.field)?;
    Ok(FunctionalReport {
        system: sys.name.clone(),
        energy: jm.energy(),
        seed,
        grid_size: traj.len(),
        step: traj.step,
        d2s: t1.rhs - t1.correction,
        d2s0j: t1.lhs,
        d2lj: t2.lhs,
        thm1_correction: t1.correction,
        thm2_correction: t2.correction,
        thm1_residual: t1.residual,
        thm2_residual: t2.residual,
        thm2_integrand_min: integrand_min,
        orth_residual: orth.identity.residual,
        orth_cross_path: orth.cross_path,
    })
}
