//! The Jacobi metric `h = 2(E − U) g` of a mechanical system at energy `E`:
//! geodesics in arc length, the time/arc-length map `ds = 2(E − U) dt`, the
//! geodesic-deviation operator `Δ^J` computed directly in `h` and through
//! `g`-quantities, equal-energy variations and the Maupertuis round trip.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::conformal::{conformal_metric, ConformalFactor};
use crate::dynamics::{
    energy_of, hessian_operator, integrate_linearised, integrate_newton, DeviationField,
    MechanicalSystem, Trajectory,
};
use crate::error::{Error, Result};
use crate::geometry::{cov_derivative_along_with, ChartMetric, LocalGeometry, Point, SampledCurve};
use crate::numerics::{
    bracket, cumulative_cubic, differentiate, differentiate_scalar, hermite, interp_cubic, rk4_step, second_derivative,
    uniform_grid, FdOrder,
};

/// Relative energy tolerance when pairing a trajectory with a Jacobi metric.
pub const ENERGY_MATCH_TOL: f64 = 1e-10;

/// `h = 2(E − U) g`, valid where `E − U > margin`.
#[derive(Debug, Clone)]
pub struct JacobiMetric {
    system: MechanicalSystem,
    energy: f64,
    margin: f64,
    factor: ConformalFactor,
    h: ChartMetric,
}

/// Jacobi metric with the default margin `1e-6 |E|`.
pub fn jacobi_metric(sys: &MechanicalSystem, energy: f64) -> JacobiMetric {
    let margin = if energy == 0.0 { 1e-12 } else { 1e-6 * energy.abs() };
    jacobi_metric_with_margin(sys, energy, margin)
}

pub fn jacobi_metric_with_margin(sys: &MechanicalSystem, energy: f64, margin: f64) -> JacobiMetric {
    let factor = ConformalFactor::jacobi(&sys.potential, energy);
    let g = sys.metric.clone();
    let u = sys.potential.clone();
    let h = conformal_metric(&sys.metric, &factor)
        .with_domain(move |p| g.contains(p) && energy - u.value(p) > margin)
        .renamed(format!("jacobi[{}, E={energy}]", sys.name));
    JacobiMetric {
        system: sys.clone(),
        energy,
        margin,
        factor,
        h,
    }
}

impl JacobiMetric {
    pub fn system(&self) -> &MechanicalSystem {
        &self.system
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn factor(&self) -> &ConformalFactor {
        &self.factor
    }

    /// The metric `h` itself.
    pub fn metric(&self) -> &ChartMetric {
        &self.h
    }

    /// `E − U(q)`.
    pub fn gap(&self, q: &Point) -> f64 {
        self.energy - self.system.potential_at(q)
    }

    /// `2(E − U(q))`, rejecting points of the forbidden region.
    pub fn factor_at(&self, q: &Point) -> Result<f64> {
        self.system.metric.check_point(q)?;
        let gap = self.gap(q);
        if !(gap > self.margin) {
            return Err(Error::ForbiddenRegion {
                point: q.iter().copied().collect(),
                margin: self.margin,
            });
        }
        Ok(2.0 * gap)
    }

    fn check_energy(&self, traj: &Trajectory) -> Result<()> {
        if (traj.energy - self.energy).abs() > ENERGY_MATCH_TOL * self.energy.abs().max(1.0) {
            return Err(Error::EnergyMismatch {
                trajectory: traj.energy,
                expected: self.energy,
            });
        }
        Ok(())
    }
}

/// A geodesic of `h` sampled in arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicRecord {
    pub s: Vec<f64>,
    pub points: Vec<Point>,
    /// `γ'(s)`, unit length in `h`.
    pub tangents: Vec<DVector<f64>>,
    /// Dynamical time paired with each `s`.
    pub t: Vec<f64>,
    /// Set when integration stopped at the forbidden region before `s_span.1`.
    pub truncated: bool,
}

impl GeodesicRecord {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn as_curve(&self) -> SampledCurve {
        SampledCurve {
            params: self.s.clone(),
            points: self.points.clone(),
            tangents: self.tangents.clone(),
        }
    }

    /// The trajectory read as an `h`-geodesic: same points, `s` from
    /// [`s_of_t`], tangents `γ̇ / f`.
    pub fn from_trajectory(jm: &JacobiMetric, traj: &Trajectory) -> Result<Self> {
        let s = s_of_t(jm, traj)?;
        let tangents = traj
            .points
            .iter()
            .zip(&traj.velocities)
            .map(|(q, v)| Ok(v / jm.factor_at(q)?))
            .collect::<Result<_>>()?;
        Ok(Self {
            s,
            points: traj.points.clone(),
            tangents,
            t: traj.times.clone(),
            truncated: false,
        })
    }

    /// Largest `| ‖γ'‖_h − 1 |` over the samples.
    pub fn unit_speed_drift(&self, jm: &JacobiMetric) -> Result<f64> {
        self.points
            .iter()
            .zip(&self.tangents)
            .map(|(q, c)| Ok((jm.h.norm(q, c)? - 1.0).abs()))
            .try_fold(0.0, |m: f64, r: Result<f64>| Ok(m.max(r?)))
    }
}

fn is_domain_error(e: &Error) -> bool {
    matches!(
        e,
        Error::ForbiddenRegion { .. } | Error::ChartDomain { .. } | Error::LeftDomain { .. }
    )
}

/// Integrates `q'' + Γ̃(q', q') = 0` in arc length by RK4 from the `h`-unit
/// direction of `dir0`, accumulating `dt/ds = 1 / (2(E − U))` (with `t = 0`
/// at the start). Reaching the forbidden region truncates the record.
pub fn integrate_geodesic(
    jm: &JacobiMetric,
    q0: &Point,
    dir0: &DVector<f64>,
    s_span: (f64, f64),
    step: f64,
) -> Result<GeodesicRecord> {
    let n = jm.h.dim();
    jm.factor_at(q0)?;
    let len = jm.h.norm(q0, dir0)?;
    if !(len > 0.0) {
        return Err(Error::InvalidArgument("geodesic direction must be nonzero".into()));
    }
    let (grid, _) = uniform_grid(s_span.0, s_span.1, step)?;
    let rhs = |_s: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let q = y.rows(0, n).into_owned();
        let c = y.rows(n, n).into_owned();
        let f = jm.factor_at(&q)?;
        let local = LocalGeometry::at(&jm.h, &q)?;
        let mut out = DVector::zeros(2 * n + 1);
        out.rows_mut(0, n).copy_from(&c);
        out.rows_mut(n, n).copy_from(&(-local.gamma_xy(&c, &c)));
        out[2 * n] = 1.0 / f;
        Ok(out)
    };
    let mut y = DVector::zeros(2 * n + 1);
    y.rows_mut(0, n).copy_from(q0);
    y.rows_mut(n, n).copy_from(&(dir0 / len));
    let mut rec = GeodesicRecord {
        s: vec![grid[0]],
        points: vec![q0.clone()],
        tangents: vec![dir0 / len],
        t: vec![0.0],
        truncated: false,
    };
    for w in grid.windows(2) {
        let next = match rk4_step(rhs, w[0], &y, w[1] - w[0]) {
            Ok(v) => v,
            Err(e) if is_domain_error(&e) => {
                rec.truncated = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let q = next.rows(0, n).into_owned();
        if !jm.h.contains(&q) {
            rec.truncated = true;
            break;
        }
        y = next;
        rec.s.push(w[1]);
        rec.points.push(q);
        rec.tangents.push(y.rows(n, n).into_owned());
        rec.t.push(y[2 * n]);
    }
    Ok(rec)
}

/// `s(t) = ∫ 2(E − U(γ)) dt` on the trajectory grid, with the piecewise
/// cubic rule of [`cumulative_cubic`].
pub fn s_of_t(jm: &JacobiMetric, traj: &Trajectory) -> Result<Vec<f64>> {
    jm.check_energy(traj)?;
    let f = factors_along(jm, &traj.points)?;
    cumulative_cubic(&traj.times, &f)
}

fn factors_along(jm: &JacobiMetric, points: &[Point]) -> Result<Vec<f64>> {
    points.iter().map(|q| jm.factor_at(q)).collect()
}

/// `Δ^J V = ∇^J_{γ'}∇^J_{γ'}V + R^J(γ', V)γ'` from `h` alone, with
/// sixth-order differences in `s`. `∇∇V` is expanded in coordinates so that
/// `V′′` comes from second-derivative weights rather than two passes.
pub fn jacobi_operator_direct(
    jm: &JacobiMetric,
    geo: &GeodesicRecord,
    v: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    jacobi_operator_direct_with(jm, geo, v, FdOrder::Sixth)
}

pub fn jacobi_operator_direct_with(
    jm: &JacobiMetric,
    geo: &GeodesicRecord,
    v: &[DVector<f64>],
    order: FdOrder,
) -> Result<Vec<DVector<f64>>> {
    if v.len() != geo.len() {
        return Err(Error::GridMismatch(format!(
            "field has {} samples, geodesic has {}",
            v.len(),
            geo.len()
        )));
    }
    let vp = differentiate(&geo.s, v, order)?;
    let vpp = second_derivative(&geo.s, v, order)?;
    let cp = differentiate(&geo.s, &geo.tangents, order)?;
    (0..geo.len())
        .map(|k| {
            let local = LocalGeometry::with_curvature(&jm.h, &geo.points[k])?;
            let c = &geo.tangents[k];
            // ∇∇V = V'' + (∂_c Γ)(c, V) + Γ(c', V) + 2Γ(c, V') + Γ(c, Γ(c, V))
            let inner = local.gamma_xy(c, &v[k]);
            let ddv = &vpp[k]
                + local.dgamma_xyz(c, c, &v[k])
                + local.gamma_xy(&cp[k], &v[k])
                + local.gamma_xy(c, &vp[k]) * 2.0
                + local.gamma_xy(c, &inner);
            Ok(ddv + local.curvature(c, &v[k], c))
        })
        .collect()
}

/// `Δ^J V` assembled from `g`-quantities along a Newton trajectory,
/// `e = E − U`, `f = 2e`, `G = grad U`:
/// `(1/f²)[ΔV − d/dt(⟨V,G⟩/e) γ̇ + ((⟨G,V⟩ + ⟨γ̇,∇_γ̇V⟩)/e) G]`.
#[derive(Debug, Clone)]
pub struct ViaG {
    pub value: Vec<DVector<f64>>,
    /// `ΔV / f²`.
    pub base: Vec<DVector<f64>>,
    /// `−(1/f²) d/dt(⟨V,G⟩/e) γ̇`.
    pub time_term: Vec<DVector<f64>>,
    /// `(1/f²)((⟨G,V⟩ + ⟨γ̇,∇_γ̇V⟩)/e) G`; vanishes for equal-energy variations.
    pub energy_term: Vec<DVector<f64>>,
}

pub fn jacobi_operator_via_g(jm: &JacobiMetric, traj: &Trajectory, dev: &DeviationField) -> Result<ViaG> {
    jm.check_energy(traj)?;
    let sys = &jm.system;
    let delta = hessian_operator(sys, traj, dev)?;
    let n = traj.len();
    let mut gaps = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut inner_cdv = Vec::with_capacity(n);
    let mut inner_gv = Vec::with_capacity(n);
    for k in 0..n {
        let q = &traj.points[k];
        let f = jm.factor_at(q)?;
        let local = LocalGeometry::at(&sys.metric, q)?;
        let grad = sys.grad_potential_local(&local);
        let e = 0.5 * f;
        let gv = local.inner(&grad, &dev.v[k]);
        sigma.push(gv / e);
        inner_gv.push(gv);
        inner_cdv.push(local.inner(&traj.velocities[k], &dev.dv[k]));
        gaps.push(e);
        grads.push(grad);
    }
    let dsigma = differentiate_scalar(&traj.times, &sigma, FdOrder::Sixth)?;
    let mut out = ViaG {
        value: Vec::with_capacity(n),
        base: Vec::with_capacity(n),
        time_term: Vec::with_capacity(n),
        energy_term: Vec::with_capacity(n),
    };
    for k in 0..n {
        let f2 = 4.0 * gaps[k] * gaps[k];
        let base = &delta[k] / f2;
        let time = &traj.velocities[k] * (-dsigma[k] / f2);
        let energy = &grads[k] * ((inner_gv[k] + inner_cdv[k]) / gaps[k] / f2);
        out.value.push(&base + &time + &energy);
        out.base.push(base);
        out.time_term.push(time);
        out.energy_term.push(energy);
    }
    Ok(out)
}

/// Sup-norm of `jacobi_operator_via_g − jacobi_operator_direct` on the
/// trajectory's own samples (the geodesic is the trajectory read in `s`).
pub fn operator_identity_residual(jm: &JacobiMetric, traj: &Trajectory, dev: &DeviationField) -> Result<f64> {
    let via = jacobi_operator_via_g(jm, traj, dev)?;
    let geo = GeodesicRecord::from_trajectory(jm, traj)?;
    let direct = jacobi_operator_direct(jm, &geo, &dev.v)?;
    Ok(sup_diff(&via.value, &direct))
}

fn sup_diff(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

fn sup(a: &[DVector<f64>]) -> f64 {
    a.iter().map(|x| x.amax()).fold(0.0, f64::max)
}

/// `⟨γ̇, ∇_γ̇V⟩ + ⟨grad U, V⟩` at every sample (zero for equal-energy variations).
pub fn energy_constraint(sys: &MechanicalSystem, traj: &Trajectory, dev: &DeviationField) -> Result<Vec<f64>> {
    dev.check_attached(traj)?;
    (0..traj.len())
        .map(|k| {
            let local = LocalGeometry::at(&sys.metric, &traj.points[k])?;
            let grad = sys.grad_potential_local(&local);
            Ok(local.inner(&traj.velocities[k], &dev.dv[k]) + local.inner(&grad, &dev.v[k]))
        })
        .collect()
}

/// `V⊥ = V − μγ̇` with `μ = ⟨V, γ̇⟩/|γ̇|²`; `∇_γ̇V⊥` follows from the
/// product rule with `∇_γ̇γ̇ = −grad U`.
pub fn orthogonal_part(sys: &MechanicalSystem, traj: &Trajectory, dev: &DeviationField) -> Result<DeviationField> {
    dev.check_attached(traj)?;
    let mut out = DeviationField {
        times: traj.times.clone(),
        v: Vec::with_capacity(traj.len()),
        dv: Vec::with_capacity(traj.len()),
    };
    for k in 0..traj.len() {
        let local = LocalGeometry::at(&sys.metric, &traj.points[k])?;
        let c = &traj.velocities[k];
        let c2 = local.inner(c, c);
        if !(c2 > 1e-12) {
            return Err(Error::TurningPoint {
                t: traj.times[k],
                speed2: c2,
            });
        }
        let grad = sys.grad_potential_local(&local);
        let (v, dv) = (&dev.v[k], &dev.dv[k]);
        let mu = local.inner(v, c) / c2;
        let mu_dot = (local.inner(dv, c) - local.inner(v, &grad) + 2.0 * mu * local.inner(c, &grad)) / c2;
        out.v.push(v - c * mu);
        out.dv.push(dv - c * mu_dot + &grad * mu);
    }
    Ok(out)
}

/// Adds `λ(t) γ̇` to an orthogonal field so that the result keeps the energy to
/// first order; `λ(t0) = 0` and
/// `λ̇ = −(⟨γ̇, ∇_γ̇V⊥⟩ + ⟨grad U, V⊥⟩) / |γ̇|²`, integrated on the sample grid
/// with [`cumulative_cubic`].
pub fn equal_energy_projection(
    sys: &MechanicalSystem,
    traj: &Trajectory,
    vperp: &DeviationField,
) -> Result<DeviationField> {
    vperp.check_attached(traj)?;
    let n = traj.len();
    let mut rate = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    for k in 0..n {
        let local = LocalGeometry::at(&sys.metric, &traj.points[k])?;
        let c = &traj.velocities[k];
        let c2 = local.inner(c, c);
        if !(c2 > 1e-12) {
            return Err(Error::TurningPoint {
                t: traj.times[k],
                speed2: c2,
            });
        }
        let along = local.inner(c, &vperp.v[k]);
        let scale = c2.sqrt() * local.inner(&vperp.v[k], &vperp.v[k]).sqrt();
        if along.abs() > 1e-8 * scale.max(1.0) {
            return Err(Error::NotOrthogonal {
                t: traj.times[k],
                residual: along,
            });
        }
        let grad = sys.grad_potential_local(&local);
        rate.push(-(local.inner(c, &vperp.dv[k]) + local.inner(&grad, &vperp.v[k])) / c2);
        grads.push(grad);
    }
    let lambda = cumulative_cubic(&traj.times, &rate)?;
    let mut out = DeviationField {
        times: traj.times.clone(),
        v: Vec::with_capacity(n),
        dv: Vec::with_capacity(n),
    };
    for k in 0..n {
        let c = &traj.velocities[k];
        out.v.push(&vperp.v[k] + c * lambda[k]);
        // ∇_γ̇ γ̇ = −grad U on shell
        out.dv.push(&vperp.dv[k] + c * rate[k] - &grads[k] * lambda[k]);
    }
    Ok(out)
}

/// Residuals of the restricted relation
/// `Δ^J V = (1/f²)[ΔV − d/dt(⟨V,G⟩/e) γ̇]` for an equal-energy field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EqualEnergyReport {
    /// Sup-norm of the difference between the two sides.
    pub residual: f64,
    /// Sup-norm of `(1/f²) d/dt(⟨V,G⟩/e) γ̇`, the part of `Δ^J V` not
    /// accounted for by `ΔV / f²`.
    pub correction_sup: f64,
    /// Sup of `|⟨γ̇,∇_γ̇V⟩ + ⟨grad U,V⟩|` over the samples.
    pub constraint_residual: f64,
}

pub fn relation_equal_energy(
    jm: &JacobiMetric,
    traj: &Trajectory,
    dev: &DeviationField,
) -> Result<EqualEnergyReport> {
    let constraint = energy_constraint(&jm.system, traj, dev)?
        .into_iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()));
    if !(constraint <= 1e-6) {
        return Err(Error::ConstraintViolated { residual: constraint });
    }
    let via = jacobi_operator_via_g(jm, traj, dev)?;
    let rhs: Vec<DVector<f64>> = via
        .base
        .iter()
        .zip(&via.time_term)
        .map(|(b, t)| b + t)
        .collect();
    let geo = GeodesicRecord::from_trajectory(jm, traj)?;
    let lhs = jacobi_operator_direct(jm, &geo, &dev.v)?;
    Ok(EqualEnergyReport {
        residual: sup_diff(&lhs, &rhs),
        correction_sup: sup(&via.time_term),
        constraint_residual: constraint,
    })
}

/// Generic residual record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub system: String,
    #[serde(rename = "E")]
    pub energy: f64,
    pub t_span: (f64, f64),
    pub step: f64,
    pub quantity: String,
    pub sup_norm: f64,
    pub grid_size: usize,
    pub seed: Option<u64>,
}

/// Outcome of comparing a Newton trajectory with the reparametrised geodesic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripReport {
    pub discrepancy: ResidualReport,
    /// Sup of `|∇_γ̇γ̇ + grad U|` along the geodesic read in `t`.
    pub newton_residual: f64,
    pub unit_speed_drift: f64,
    pub geodesic_samples: usize,
}

/// Integrates the Newton trajectory and, independently, the `h`-geodesic
/// through `q0` in direction `v0`; maps the geodesic to dynamical time and
/// reports the sup-norm position discrepancy at the trajectory samples.
pub fn maupertuis_roundtrip(
    sys: &MechanicalSystem,
    energy: f64,
    q0: &Point,
    v0: &DVector<f64>,
    t_span: (f64, f64),
    step: f64,
) -> Result<RoundTripReport> {
    let e0 = energy_of(sys, q0, v0)?;
    if (e0 - energy).abs() > ENERGY_MATCH_TOL * energy.abs().max(1.0) {
        return Err(Error::EnergyMismatch {
            trajectory: e0,
            expected: energy,
        });
    }
    let jm = jacobi_metric(sys, energy);
    let traj = integrate_newton(sys, q0, v0, t_span, step)?;
    let f = factors_along(&jm, &traj.points)?;
    let s_end = *s_of_t(&jm, &traj)?.last().expect("non-empty");
    let f_min = f.iter().copied().fold(f64::INFINITY, f64::min);
    let ds = step * f_min;
    let geo = integrate_geodesic(&jm, q0, v0, (0.0, s_end + 2.0 * ds), ds)?;
    let geo_times: Vec<f64> = geo.t.iter().map(|t| t + t_span.0).collect();
    let geo_rates: Vec<DVector<f64>> = geo
        .points
        .iter()
        .zip(&geo.tangents)
        .map(|(q, c)| Ok(c * jm.factor_at(q)?))
        .collect::<Result<_>>()?;
    let t_last = *geo_times.last().expect("non-empty");
    let mut worst: f64 = 0.0;
    for (t, q) in traj.times.iter().zip(&traj.points) {
        if *t > t_last + 1e-12 {
            return Err(Error::ForbiddenRegion {
                point: q.iter().copied().collect(),
                margin: jm.margin,
            });
        }
        let k = bracket(&geo_times, *t);
        let (p, _) = hermite(
            geo_times[k],
            geo_times[k + 1],
            &geo.points[k],
            &geo.points[k + 1],
            &geo_rates[k],
            &geo_rates[k + 1],
            *t,
        );
        worst = worst.max((p - q).amax());
    }
    Ok(RoundTripReport {
        discrepancy: ResidualReport {
            system: sys.name.clone(),
            energy,
            t_span,
            step,
            quantity: "maupertuis_position".into(),
            sup_norm: worst,
            grid_size: traj.len(),
            seed: None,
        },
        newton_residual: newton_residual_along_geodesic(&jm, &geo)?,
        unit_speed_drift: geo.unit_speed_drift(&jm)?,
        geodesic_samples: geo.len(),
    })
}

/// Reads an `h`-geodesic in dynamical time and evaluates
/// `f² ∇^J_{γ'}γ'` through the conformal and reparametrisation formulas,
/// which on a unit-speed geodesic reduces to `∇_γ̇γ̇ + grad U`; returns its
/// sup-norm.
pub fn newton_residual_along_geodesic(jm: &JacobiMetric, geo: &GeodesicRecord) -> Result<f64> {
    let g = &jm.system.metric;
    let f = factors_along(jm, &geo.points)?;
    let rates: Vec<DVector<f64>> = geo.tangents.iter().zip(&f).map(|(c, f)| c * *f).collect();
    let t_curve = SampledCurve::new(geo.t.clone(), geo.points.clone(), rates.clone())?;
    let acc = cov_derivative_along_with(g, &t_curve, &rates, FdOrder::Fourth)?;
    let mut worst: f64 = 0.0;
    for k in 0..geo.len() {
        let local = LocalGeometry::at(g, &geo.points[k])?;
        let big_f = jm.factor.log_gradient_local(&local)?;
        let c = &rates[k];
        let phi = local.inner(&big_f, c);
        // reparametrisation, then the conformal change of the connection
        let gp = c / f[k];
        let nabla = (&acc[k] - c * phi) / (f[k] * f[k]);
        let tilde = nabla + &gp * local.inner(&big_f, &gp) - &big_f * (0.5 * local.inner(&gp, &gp));
        let grad = jm.system.grad_potential_local(&local);
        // f² ∇̃γ'γ' = ∇γ̇γ̇ − ½|γ̇|² F and ½|γ̇|² F = −grad U on a unit-speed curve
        let newton = &acc[k] + grad;
        worst = worst.max(newton.amax()).max((tilde * (f[k] * f[k])).amax());
    }
    Ok(worst)
}

/// A Jacobi field along an `h`-geodesic, in arc length.
#[derive(Debug, Clone)]
pub struct JacobiField {
    pub s: Vec<f64>,
    pub v: Vec<DVector<f64>>,
    pub dv: Vec<DVector<f64>>,
}

/// Solves `Δ^J V = 0` along a geodesic record from `V(s0)`, `∇V(s0)`.
pub fn integrate_jacobi_field(
    jm: &JacobiMetric,
    geo: &GeodesicRecord,
    v0: &DVector<f64>,
    dv0: &DVector<f64>,
) -> Result<JacobiField> {
    let (v, dv) = integrate_linearised(&jm.h, None, &geo.s, &geo.points, &geo.tangents, v0, dv0)?;
    Ok(JacobiField {
        s: geo.s.clone(),
        v,
        dv,
    })
}

/// First `s > s0` where the field vanishes again: the first local minimum of
/// `‖V‖_h` that is small relative to the field's size, refined by one Newton
/// step on `‖V‖²`.
pub fn first_conjugate_point(jm: &JacobiMetric, geo: &GeodesicRecord, field: &JacobiField) -> Result<Option<f64>> {
    let norms: Vec<f64> = geo
        .points
        .iter()
        .zip(&field.v)
        .map(|(q, v)| jm.h.norm(q, v))
        .collect::<Result<_>>()?;
    let mut peak: f64 = 0.0;
    for k in 1..norms.len().saturating_sub(1) {
        peak = peak.max(norms[k]);
        if norms[k] <= norms[k - 1] && norms[k] <= norms[k + 1] && norms[k] < 1e-3 * peak {
            let q = &geo.points[k];
            let (v, dv) = (&field.v[k], &field.dv[k]);
            let num = jm.h.inner(q, v, dv)?;
            let den = jm.h.inner(q, dv, dv)?;
            let shift = if den > 0.0 { num / den } else { 0.0 };
            return Ok(Some(field.s[k] - shift));
        }
    }
    Ok(None)
}

/// Cubic transport of component samples from one parameter grid to another
/// (coordinates are shared, only the parameter changes).
pub fn transport_cubic(src: &[f64], values: &[DVector<f64>], dst: &[f64]) -> Vec<DVector<f64>> {
    dst.iter().map(|x| interp_cubic(src, values, *x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{flat, sphere, ScalarField};
    use crate::systems::builtin_system;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    fn pt(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn free() -> MechanicalSystem {
        MechanicalSystem::new("free", flat(2), ScalarField::constant(0.0, 2))
    }

    #[test]
    fn metric_examples() {
        let jm = jacobi_metric(&free(), 0.5);
        let p = pt(&[0.3, -1.0]);
        assert_eq!(jm.metric().eval(&p).unwrap(), flat(2).eval(&p).unwrap());
        let h = builtin_system("harmonic").unwrap();
        let jm = jacobi_metric(&h.system, 1.0);
        assert_eq!(jm.factor_at(&pt(&[1.0, 0.0])).unwrap(), 1.0);
        assert!(matches!(jm.factor_at(&pt(&[2.0, 0.0])), Err(Error::ForbiddenRegion { .. })));
        assert!(jm.metric().eval(&pt(&[2.0, 0.0])).is_err());
    }

    #[test]
    fn geodesic_examples() {
        let jm = jacobi_metric(&free(), 0.5);
        let geo = integrate_geodesic(&jm, &pt(&[0.0, 0.0]), &pt(&[3.0, 4.0]), (0.0, 2.0), 1e-2).unwrap();
        for (s, q) in geo.s.iter().zip(&geo.points) {
            assert!((q - pt(&[0.6 * s, 0.8 * s])).amax() < 1e-13);
        }
        assert!(!geo.truncated);
        let h = builtin_system("harmonic").unwrap();
        let jm = jacobi_metric(&h.system, 1.0);
        let geo = integrate_geodesic(&jm, &h.q0, &h.v0, (0.0, TAU), 1e-3).unwrap();
        for ((s, t), q) in geo.s.iter().zip(&geo.t).zip(&geo.points) {
            assert!((s - t).abs() < 1e-9);
            assert!((q - pt(&[s.cos(), s.sin()])).amax() < 1e-8);
        }
        assert!(geo.unit_speed_drift(&jm).unwrap() < 1e-8);
        let sp = MechanicalSystem::new("s", sphere(), ScalarField::constant(0.0, 2));
        let jm = jacobi_metric(&sp, 0.5);
        let geo = integrate_geodesic(&jm, &pt(&[FRAC_PI_2, 0.0]), &pt(&[0.6, 0.8]), (0.0, 10.0), 1e-3).unwrap();
        assert!(geo.unit_speed_drift(&jm).unwrap() < 1e-8);
        // great circle through (π/2, 0): back on the equator after 2π with φ advanced by 2π
        let back = geo.s.iter().position(|s| (s - TAU).abs() <= 5e-4).unwrap();
        assert!((&geo.points[back] - pt(&[FRAC_PI_2, TAU])).amax() < 1e-3);
    }

    #[test]
    fn geodesic_truncates_at_forbidden_region() {
        let g = builtin_system("gravity").unwrap();
        let jm = jacobi_metric(&g.system, 0.5);
        let geo = integrate_geodesic(&jm, &g.q0, &g.v0, (0.0, 1.0), 1e-3).unwrap();
        assert!(geo.truncated);
        assert!(*geo.s.last().unwrap() < 1.0 / 3.0);
    }

    #[test]
    fn arc_length_examples() {
        let sys = free();
        let jm = jacobi_metric(&sys, 0.5);
        let tr = integrate_newton(&sys, &pt(&[0.0, 0.0]), &pt(&[1.0, 0.0]), (0.0, 1.0), 1e-3).unwrap();
        let s = s_of_t(&jm, &tr).unwrap();
        assert!(s.iter().zip(&tr.times).all(|(s, t)| (s - t).abs() < 1e-12));
        let g = builtin_system("gravity").unwrap();
        let jm = jacobi_metric(&g.system, 0.5);
        let tr = integrate_newton(&g.system, &g.q0, &g.v0, (0.0, 0.9), 1e-3).unwrap();
        let s = s_of_t(&jm, &tr).unwrap();
        for (s, t) in s.iter().zip(&tr.times) {
            assert!((s - (t - t * t + t * t * t / 3.0)).abs() < 1e-12);
        }
        let tr = integrate_newton(&g.system, &g.q0, &g.v0, (0.0, 1.0), 1e-3).unwrap();
        assert!(matches!(s_of_t(&jm, &tr), Err(Error::ForbiddenRegion { .. })));
        let other = jacobi_metric(&g.system, 0.6);
        assert!(matches!(s_of_t(&other, &tr), Err(Error::EnergyMismatch { .. })));
    }

    #[test]
    fn direct_operator_examples() {
        let sys = free();
        let jm = jacobi_metric(&sys, 0.5);
        let geo = integrate_geodesic(&jm, &pt(&[0.0, 0.0]), &pt(&[1.0, 0.0]), (0.0, 3.0), 1e-3).unwrap();
        let v: Vec<_> = geo.s.iter().map(|s| pt(&[0.0, s.sin()])).collect();
        let d = jacobi_operator_direct(&jm, &geo, &v).unwrap();
        for (s, x) in geo.s.iter().zip(&d) {
            assert!((x - pt(&[0.0, -s.sin()])).amax() < 1e-7);
        }
        let par: Vec<_> = geo.s.iter().map(|_| pt(&[0.2, 0.4])).collect();
        assert!(sup(&jacobi_operator_direct(&jm, &geo, &par).unwrap()) < 1e-6);
        let sp = MechanicalSystem::new("s", sphere(), ScalarField::constant(0.0, 2));
        let jm = jacobi_metric(&sp, 0.5);
        let geo = integrate_geodesic(&jm, &pt(&[FRAC_PI_2, 0.0]), &pt(&[0.0, 1.0]), (0.0, 3.0), 1e-3).unwrap();
        let v: Vec<_> = geo.s.iter().map(|s| pt(&[s * s, 0.0])).collect();
        let d = jacobi_operator_direct(&jm, &geo, &v).unwrap();
        for (s, x) in geo.s.iter().zip(&d) {
            assert!((x - pt(&[2.0 + s * s, 0.0])).amax() < 1e-6);
        }
        assert!(matches!(
            jacobi_operator_direct(&jm, &geo, &v[1..]),
            Err(Error::GridMismatch(_))
        ));
    }

    fn radial(sys: &MechanicalSystem, tr: &Trajectory) -> DeviationField {
        DeviationField::from_fn(sys, tr, |t| {
            (
                pt(&[t.sin() * t.cos(), t.sin() * t.sin()]),
                pt(&[(2.0 * t).cos(), (2.0 * t).sin()]),
            )
        })
        .unwrap()
    }

    #[test]
    fn via_g_examples() {
        let h = builtin_system("harmonic").unwrap();
        let jm = jacobi_metric(&h.system, 1.0);
        let tr = integrate_newton(&h.system, &h.q0, &h.v0, (0.0, TAU), 1e-3).unwrap();
        let dev = radial(&h.system, &tr);
        assert!(operator_identity_residual(&jm, &tr, &dev).unwrap() < 1e-6);
        let zero = DeviationField::zeros(&tr);
        assert!(sup(&jacobi_operator_via_g(&jm, &tr, &zero).unwrap().value) == 0.0);
        // constant potential: only ΔV / f² survives
        let sys = MechanicalSystem::new("c", flat(2), ScalarField::constant(0.25, 2));
        let jm = jacobi_metric(&sys, 1.0);
        let tr = integrate_newton(&sys, &pt(&[0.0, 0.0]), &pt(&[1.5f64.sqrt(), 0.0]), (0.0, 1.0), 1e-3).unwrap();
        let dev = DeviationField::random_smooth(&sys, &tr, 3, 2).unwrap();
        let via = jacobi_operator_via_g(&jm, &tr, &dev).unwrap();
        assert!(sup(&via.time_term) == 0.0 && sup(&via.energy_term) == 0.0);
        let delta = hessian_operator(&sys, &tr, &dev).unwrap();
        for (a, b) in via.value.iter().zip(&delta) {
            assert!((a - b / 2.25).amax() < 1e-15);
        }
    }

    #[test]
    fn equal_energy_examples() {
        let sys = free();
        let tr = integrate_newton(&sys, &pt(&[0.0, 0.0]), &pt(&[1.0, 0.0]), (0.0, 1.0), 1e-3).unwrap();
        let vperp = DeviationField::from_fn(&sys, &tr, |t| (pt(&[0.0, t.sin()]), pt(&[0.0, t.cos()]))).unwrap();
        let v = equal_energy_projection(&sys, &tr, &vperp).unwrap();
        assert_eq!(v, vperp);
        let zero = DeviationField::zeros(&tr);
        assert_eq!(equal_energy_projection(&sys, &tr, &zero).unwrap(), zero);
        let bad = DeviationField::from_fn(&sys, &tr, |_| (pt(&[1.0, 0.0]), pt(&[0.0, 0.0]))).unwrap();
        assert!(matches!(
            equal_energy_projection(&sys, &tr, &bad),
            Err(Error::NotOrthogonal { .. })
        ));

        let h = builtin_system("harmonic").unwrap();
        let jm = jacobi_metric(&h.system, 1.0);
        let tr = integrate_newton(&h.system, &h.q0, &h.v0, (0.0, TAU), 1e-3).unwrap();
        let vperp = radial(&h.system, &tr);
        let v = equal_energy_projection(&h.system, &tr, &vperp).unwrap();
        let c = energy_constraint(&h.system, &tr, &v).unwrap();
        assert!(c.iter().all(|x| x.abs() < 1e-8));
        let rep = relation_equal_energy(&jm, &tr, &v).unwrap();
        assert!(rep.residual < 1e-6, "{rep:?}");
        assert!(rep.correction_sup > 1e-2);
        assert!(matches!(
            relation_equal_energy(&jm, &tr, &vperp),
            Err(Error::ConstraintViolated { .. })
        ));
        // constant potential: both sides ΔV/f², no correction
        let sys = MechanicalSystem::new("c", flat(2), ScalarField::constant(0.25, 2));
        let jm = jacobi_metric(&sys, 1.0);
        let tr = integrate_newton(&sys, &pt(&[0.0, 0.0]), &pt(&[1.5f64.sqrt(), 0.0]), (0.0, 1.0), 1e-3).unwrap();
        let vperp = DeviationField::from_fn(&sys, &tr, |t| (pt(&[0.0, t.sin()]), pt(&[0.0, t.cos()]))).unwrap();
        let rep = relation_equal_energy(&jm, &tr, &vperp).unwrap();
        assert!(rep.residual < 1e-8 && rep.correction_sup == 0.0, "{rep:?}");
    }

    #[test]
    fn roundtrip_examples() {
        let sys = free();
        let r = maupertuis_roundtrip(&sys, 0.5, &pt(&[0.0, 0.0]), &pt(&[1.0, 0.0]), (0.0, 2.0), 1e-3).unwrap();
        assert!(r.discrepancy.sup_norm < 1e-8);
        let sp = MechanicalSystem::new("s", sphere(), ScalarField::constant(0.0, 2));
        let r = maupertuis_roundtrip(&sp, 0.5, &pt(&[1.0, 0.0]), &pt(&[0.6, 0.8 / 1f64.sin()]), (0.0, 3.0), 1e-3).unwrap();
        assert!(r.discrepancy.sup_norm < 1e-8, "{r:?}");
        let bad = maupertuis_roundtrip(&sys, 0.7, &pt(&[0.0, 0.0]), &pt(&[1.0, 0.0]), (0.0, 2.0), 1e-3);
        assert!(matches!(bad, Err(Error::EnergyMismatch { .. })));
    }

    #[test]
    fn conjugate_point_on_sphere() {
        let sp = MechanicalSystem::new("s", sphere(), ScalarField::constant(0.0, 2));
        let jm = jacobi_metric(&sp, 0.5);
        let geo = integrate_geodesic(&jm, &pt(&[FRAC_PI_2, 0.0]), &pt(&[0.0, 1.0]), (0.0, 4.0), 1e-3).unwrap();
        let field = integrate_jacobi_field(&jm, &geo, &pt(&[0.0, 0.0]), &pt(&[1.0, 0.0])).unwrap();
        let s = first_conjugate_point(&jm, &geo, &field).unwrap().unwrap();
        assert!((s - PI).abs() < 1e-6, "{s}");
    }

    #[test]
    fn cubic_transport_is_exact_on_cubics() {
        let src: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let vals: Vec<_> = src.iter().map(|x| pt(&[x * x * x, 1.0 - x])).collect();
        let dst = vec![0.05, 0.77, 1.83];
        for (x, v) in dst.iter().zip(transport_cubic(&src, &vals, &dst)) {
            assert!((v - pt(&[x * x * x, 1.0 - x])).amax() < 1e-12);
        }
    }
}
