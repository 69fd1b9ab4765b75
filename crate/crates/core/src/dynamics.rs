//! Newtonian dynamics of a natural mechanical system `(M, g, U)`: trajectory
//! integration, the energy first integral, the Hessian (stability) operator
//! `ΔV = ∇_γ̇∇_γ̇V + K_γ̇(V) + ∇_V grad U` and its deviation equation `ΔV = 0`.

use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    hessian_form_local, ChartMetric, LocalGeometry, Point, SampledCurve, ScalarField,
};
use crate::numerics::{cumulative_simpson, differentiate, hermite, rk4_step, uniform_grid, FdOrder};

/// Default bound on the relative energy drift of a trajectory.
pub const DEFAULT_DRIFT_BOUND: f64 = 1e-6;

/// Metric plus potential energy.
#[derive(Debug, Clone)]
pub struct MechanicalSystem {
    pub name: String,
    pub metric: ChartMetric,
    pub potential: ScalarField,
}

impl MechanicalSystem {
    pub fn new(name: impl Into<String>, metric: ChartMetric, potential: ScalarField) -> Self {
        Self {
            name: name.into(),
            metric,
            potential,
        }
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn potential_at(&self, q: &Point) -> f64 {
        self.potential.value(q)
    }

    /// `grad U = g^{-1} dU`.
    pub fn grad_potential(&self, q: &Point) -> Result<DVector<f64>> {
        let ginv = self.metric.inverse(q)?;
        Ok(ginv * self.potential.partials(q))
    }

    pub(crate) fn grad_potential_local(&self, local: &LocalGeometry) -> DVector<f64> {
        local.raise(&self.potential.partials(&local.point))
    }

    /// Coordinate acceleration `q̈ = −Γ(q̇, q̇) − grad U`.
    pub fn acceleration(&self, q: &Point, v: &DVector<f64>) -> Result<DVector<f64>> {
        let local = LocalGeometry::at(&self.metric, q)?;
        Ok(self.acceleration_local(&local, v))
    }

    pub(crate) fn acceleration_local(&self, local: &LocalGeometry, v: &DVector<f64>) -> DVector<f64> {
        -local.gamma_xy(v, v) - self.grad_potential_local(local)
    }

    /// `(∇_V grad U)` as a linear map: `g^{-1} ∇dU`.
    pub(crate) fn hessian_map_local(&self, local: &LocalGeometry) -> nalgebra::DMatrix<f64> {
        &local.ginv * hessian_form_local(local, &self.potential)
    }
}

/// `½ g(v, v) + U(q)`.
pub fn energy_of(sys: &MechanicalSystem, q: &Point, v: &DVector<f64>) -> Result<f64> {
    Ok(0.5 * sys.metric.inner(q, v, v)? + sys.potential_at(q))
}

/// A time-sampled Newtonian trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub velocities: Vec<DVector<f64>>,
    /// Energy of the initial data.
    pub energy: f64,
    pub step: f64,
    /// Largest relative energy drift observed over the samples.
    pub max_drift: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn t_span(&self) -> (f64, f64) {
        (self.times[0], self.times[self.times.len() - 1])
    }

    pub fn as_curve(&self) -> SampledCurve {
        SampledCurve {
            params: self.times.clone(),
            points: self.points.clone(),
            tangents: self.velocities.clone(),
        }
    }

    /// Position and velocity at an arbitrary time inside the span (cubic
    /// Hermite on positions, accelerations from the equations of motion).
    pub fn state_at(&self, sys: &MechanicalSystem, t: f64) -> Result<(Point, DVector<f64>)> {
        let k = crate::numerics::bracket(&self.times, t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let (q, _) = hermite(
            t0,
            t1,
            &self.points[k],
            &self.points[k + 1],
            &self.velocities[k],
            &self.velocities[k + 1],
            t,
        );
        let a0 = sys.acceleration(&self.points[k], &self.velocities[k])?;
        let a1 = sys.acceleration(&self.points[k + 1], &self.velocities[k + 1])?;
        let (v, _) = hermite(t0, t1, &self.velocities[k], &self.velocities[k + 1], &a0, &a1, t);
        Ok((q, v))
    }

    /// Writes `t, q1..qn, v1..vn` (and `V1..Vn, DV1..DVn` when a deviation
    /// field is supplied) as CSV.
    pub fn write_csv<W: Write>(&self, out: W, dev: Option<&DeviationField>) -> Result<()> {
        let n = self.dim();
        if let Some(d) = dev {
            d.check_attached(self)?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("q{i}")));
        header.extend((1..=n).map(|i| format!("v{i}")));
        if dev.is_some() {
            header.extend((1..=n).map(|i| format!("V{i}")));
            header.extend((1..=n).map(|i| format!("DV{i}")));
        }
        w.write_record(&header).map_err(io_err)?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k]];
            row.extend(self.points[k].iter());
            row.extend(self.velocities[k].iter());
            if let Some(d) = dev {
                row.extend(d.v[k].iter());
                row.extend(d.dv[k].iter());
            }
            w.write_record(row.iter().map(|x| format!("{x:.17e}")))
                .map_err(io_err)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(())
    }

    pub fn to_record(&self) -> TrajectoryRecord {
        TrajectoryRecord {
            times: self.times.clone(),
            points: self.points.iter().map(|p| p.iter().copied().collect()).collect(),
            velocities: self
                .velocities
                .iter()
                .map(|p| p.iter().copied().collect())
                .collect(),
            energy: self.energy,
            step: self.step,
            max_drift: self.max_drift,
        }
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

/// Plain serialisable form of a [`Trajectory`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub energy: f64,
    pub step: f64,
    pub max_drift: f64,
}

impl From<TrajectoryRecord> for Trajectory {
    fn from(r: TrajectoryRecord) -> Self {
        Self {
            times: r.times,
            points: r.points.into_iter().map(DVector::from_vec).collect(),
            velocities: r.velocities.into_iter().map(DVector::from_vec).collect(),
            energy: r.energy,
            step: r.step,
            max_drift: r.max_drift,
        }
    }
}

/// Options for [`integrate_newton_with`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Bound on `|E(t) − E(t0)| / max(1, |E(t0)|)`.
    pub drift_bound: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            drift_bound: DEFAULT_DRIFT_BOUND,
        }
    }
}

/// Integrates `q̈ + Γ(q̇, q̇) = −grad U` with classical RK4 at a fixed step.
pub fn integrate_newton(
    sys: &MechanicalSystem,
    q0: &Point,
    v0: &DVector<f64>,
    t_span: (f64, f64),
    step: f64,
) -> Result<Trajectory> {
    integrate_newton_with(sys, q0, v0, t_span, step, &NewtonOptions::default())
}

pub fn integrate_newton_with(
    sys: &MechanicalSystem,
    q0: &Point,
    v0: &DVector<f64>,
    t_span: (f64, f64),
    step: f64,
    opts: &NewtonOptions,
) -> Result<Trajectory> {
    let n = sys.dim();
    if v0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v0.len(),
        });
    }
    sys.metric.check_point(q0)?;
    let (grid, h) = uniform_grid(t_span.0, t_span.1, step)?;
    let energy = energy_of(sys, q0, v0)?;
    let scale = energy.abs().max(1.0);
    let rhs = |t: f64, y: &DVector<f64>| -> Result<DVector<f64>> {
        let q = y.rows(0, n).into_owned();
        let v = y.rows(n, n).into_owned();
        if !sys.metric.contains(&q) {
            return Err(Error::LeftDomain { t });
        }
        let a = sys.acceleration(&q, &v)?;
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&v);
        out.rows_mut(n, n).copy_from(&a);
        Ok(out)
    };
    let mut y = DVector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(q0);
    y.rows_mut(n, n).copy_from(v0);
    let mut points = Vec::with_capacity(grid.len());
    let mut velocities = Vec::with_capacity(grid.len());
    points.push(q0.clone());
    velocities.push(v0.clone());
    let mut max_drift: f64 = 0.0;
    for w in grid.windows(2) {
        y = rk4_step(rhs, w[0], &y, w[1] - w[0])?;
        let q = y.rows(0, n).into_owned();
        let v = y.rows(n, n).into_owned();
        if !sys.metric.contains(&q) || y.iter().any(|x| !x.is_finite()) {
            return Err(Error::LeftDomain { t: w[1] });
        }
        let drift = (energy_of(sys, &q, &v)? - energy).abs() / scale;
        max_drift = max_drift.max(drift);
        if drift > opts.drift_bound {
            return Err(Error::EnergyDrift {
                t: w[1],
                drift,
                bound: opts.drift_bound,
            });
        }
        points.push(q);
        velocities.push(v);
    }
    Ok(Trajectory {
        times: grid,
        points,
        velocities,
        energy,
        step: h,
        max_drift,
    })
}

/// A vector field along a trajectory: samples of `V` and of `∇_γ̇ V`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationField {
    pub times: Vec<f64>,
    pub v: Vec<DVector<f64>>,
    pub dv: Vec<DVector<f64>>,
}

impl DeviationField {
    pub fn check_attached(&self, traj: &Trajectory) -> Result<()> {
        if self.times.len() != traj.len() || self.v.len() != traj.len() || self.dv.len() != traj.len()
        {
            return Err(Error::GridMismatch(format!(
                "deviation field has {} samples, trajectory has {}",
                self.v.len(),
                traj.len()
            )));
        }
        if self
            .times
            .iter()
            .zip(&traj.times)
            .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs()))
        {
            return Err(Error::GridMismatch(
                "deviation field and trajectory sample different times".into(),
            ));
        }
        Ok(())
    }

    pub fn zeros(traj: &Trajectory) -> Self {
        let z = DVector::zeros(traj.dim());
        Self {
            times: traj.times.clone(),
            v: vec![z.clone(); traj.len()],
            dv: vec![z; traj.len()],
        }
    }

    /// Field from a closed form `t ↦ (V, dV/dt)` in coordinates; the covariant
    /// derivative is `dV/dt + Γ(γ̇, V)`.
    pub fn from_fn(
        sys: &MechanicalSystem,
        traj: &Trajectory,
        f: impl Fn(f64) -> (DVector<f64>, DVector<f64>),
    ) -> Result<Self> {
        let mut v = Vec::with_capacity(traj.len());
        let mut dv = Vec::with_capacity(traj.len());
        for k in 0..traj.len() {
            let (val, rate) = f(traj.times[k]);
            let local = LocalGeometry::at(&sys.metric, &traj.points[k])?;
            dv.push(rate + local.gamma_xy(&traj.velocities[k], &val));
            v.push(val);
        }
        Ok(Self {
            times: traj.times.clone(),
            v,
            dv,
        })
    }

    /// A smooth random field: each component is a sum of `modes` sinusoids
    /// with amplitudes in `[-1, 1]`, angular frequencies in `[0.5, 3]` and
    /// random phases.
    pub fn random_smooth(
        sys: &MechanicalSystem,
        traj: &Trajectory,
        seed: u64,
        modes: usize,
    ) -> Result<Self> {
        let n = traj.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t0 = traj.times[0];
        let terms: Vec<(usize, f64, f64, f64)> = (0..n)
            .flat_map(|i| (0..modes).map(move |_| i))
            .map(|i| {
                (
                    i,
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.5..3.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        Self::from_fn(sys, traj, |t| {
            let mut v = DVector::zeros(n);
            let mut d = DVector::zeros(n);
            for &(i, a, w, phase) in &terms {
                v[i] += a * (w * (t - t0) + phase).sin();
                d[i] += a * w * (w * (t - t0) + phase).cos();
            }
            (v, d)
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.v.iter().map(|x| x.amax()).fold(0.0, f64::max)
    }
}

/// `ΔV` at every sample, with `∇_γ̇(∇_γ̇V)` from sixth-order differences of
/// the `DV` samples.
pub fn hessian_operator(
    sys: &MechanicalSystem,
    traj: &Trajectory,
    dev: &DeviationField,
) -> Result<Vec<DVector<f64>>> {
    hessian_operator_with(sys, traj, dev, FdOrder::Sixth)
}

pub fn hessian_operator_with(
    sys: &MechanicalSystem,
    traj: &Trajectory,
    dev: &DeviationField,
    order: FdOrder,
) -> Result<Vec<DVector<f64>>> {
    dev.check_attached(traj)?;
    let d_dv = differentiate(&traj.times, &dev.dv, order)?;
    (0..traj.len())
        .map(|k| {
            let local = LocalGeometry::with_curvature(&sys.metric, &traj.points[k])?;
            let c = &traj.velocities[k];
            let v = &dev.v[k];
            let second = &d_dv[k] + local.gamma_xy(c, &dev.dv[k]);
            Ok(second + local.curvature(c, v, c) + sys.hessian_map_local(&local) * v)
        })
        .collect()
}

/// Geometry of a base curve needed by the coordinate form of the deviation
/// equation at one parameter value.
struct BaseState {
    local: LocalGeometry,
    hess: nalgebra::DMatrix<f64>,
    c: DVector<f64>,
    a: DVector<f64>,
}

impl BaseState {
    fn new(metric: &ChartMetric, pot: Option<&MechanicalSystem>, q: &Point, c: &DVector<f64>) -> Result<Self> {
        let local = LocalGeometry::with_curvature(metric, q)?;
        let (a, hess) = match pot {
            Some(sys) => (sys.acceleration_local(&local, c), sys.hessian_map_local(&local)),
            None => (
                -local.gamma_xy(c, c),
                nalgebra::DMatrix::zeros(q.len(), q.len()),
            ),
        };
        Ok(Self {
            local,
            hess,
            c: c.clone(),
            a,
        })
    }

    /// `V̈` from `∇∇V + R(c,V)c + H V = 0` written in coordinates, `W = V̇`.
    fn rhs(&self, y: &DVector<f64>) -> DVector<f64> {
        let n = self.c.len();
        let v = y.rows(0, n).into_owned();
        let w = y.rows(n, n).into_owned();
        let l = &self.local;
        let c = &self.c;
        let gcv = l.gamma_xy(c, &v);
        let acc = -(l.dgamma_xyz(c, c, &v)
            + l.gamma_xy(&self.a, &v)
            + l.gamma_xy(c, &w) * 2.0
            + l.gamma_xy(c, &gcv)
            + l.curvature(c, &v, c)
            + &self.hess * &v);
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&w);
        out.rows_mut(n, n).copy_from(&acc);
        out
    }
}

/// Samples of `V` and of `∇V`.
pub(crate) type FieldSamples = (Vec<DVector<f64>>, Vec<DVector<f64>>);

/// RK4 for the linearised equation along sampled base data (`params`,
/// `points`, `tangents`), base geometry at half steps from cubic Hermite
/// interpolation. Returns `(V, ∇V)` samples.
pub(crate) fn integrate_linearised(
    metric: &ChartMetric,
    pot: Option<&MechanicalSystem>,
    params: &[f64],
    points: &[Point],
    tangents: &[DVector<f64>],
    v0: &DVector<f64>,
    dv0: &DVector<f64>,
) -> Result<FieldSamples> {
    let n = v0.len();
    let len = params.len();
    let states: Vec<BaseState> = (0..len)
        .map(|k| BaseState::new(metric, pot, &points[k], &tangents[k]))
        .collect::<Result<_>>()?;
    let w0 = dv0 - states[0].local.gamma_xy(&tangents[0], v0);
    let mut y = DVector::zeros(2 * n);
    y.rows_mut(0, n).copy_from(v0);
    y.rows_mut(n, n).copy_from(&w0);
    let mut vs = vec![v0.clone()];
    let mut dvs = vec![dv0.clone()];
    for k in 0..len - 1 {
        let (t0, t1) = (params[k], params[k + 1]);
        let h = t1 - t0;
        let tm = 0.5 * (t0 + t1);
        let (s0, s1) = (&states[k], &states[k + 1]);
        let (qm, _) = hermite(t0, t1, &points[k], &points[k + 1], &tangents[k], &tangents[k + 1], tm);
        let (cm, _) = hermite(t0, t1, &tangents[k], &tangents[k + 1], &s0.a, &s1.a, tm);
        if !metric.contains(&qm) {
            return Err(Error::LeftDomain { t: tm });
        }
        let mid = BaseState::new(metric, pot, &qm, &cm)?;
        let k1 = s0.rhs(&y);
        let k2 = mid.rhs(&(&y + &k1 * (0.5 * h)));
        let k3 = mid.rhs(&(&y + &k2 * (0.5 * h)));
        let k4 = s1.rhs(&(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if y.iter().any(|x| !x.is_finite()) {
            return Err(Error::LeftDomain { t: t1 });
        }
        let v = y.rows(0, n).into_owned();
        let w = y.rows(n, n).into_owned();
        dvs.push(w + s1.local.gamma_xy(&tangents[k + 1], &v));
        vs.push(v);
    }
    Ok((vs, dvs))
}

/// Solves `ΔV = 0` along a stored trajectory from `V(t0) = v0`,
/// `∇_γ̇V(t0) = dv0`, on the trajectory's own grid.
pub fn integrate_deviation(
    sys: &MechanicalSystem,
    traj: &Trajectory,
    v0: &DVector<f64>,
    dv0: &DVector<f64>,
) -> Result<DeviationField> {
    if v0.len() != traj.dim() || dv0.len() != traj.dim() {
        return Err(Error::DimensionMismatch {
            expected: traj.dim(),
            got: v0.len().min(dv0.len()),
        });
    }
    if traj.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: traj.len(),
        });
    }
    let (v, dv) = integrate_linearised(
        &sys.metric,
        Some(sys),
        &traj.times,
        &traj.points,
        &traj.velocities,
        v0,
        dv0,
    )?;
    Ok(DeviationField {
        times: traj.times.clone(),
        v,
        dv,
    })
}

/// Central-difference oracle for the deviation field: integrates the
/// nonlinear flow from `(q0 ± α dq, v0 ± α dv)` and differences the results.
#[allow(clippy::too_many_arguments)]
pub fn brute_force_deviation(
    sys: &MechanicalSystem,
    q0: &Point,
    v0: &DVector<f64>,
    dq: &DVector<f64>,
    dv: &DVector<f64>,
    alpha: f64,
    t_span: (f64, f64),
    step: f64,
) -> Result<DeviationField> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("perturbation size {alpha} must be positive")));
    }
    let loose = NewtonOptions { drift_bound: 1e-3 };
    let base = integrate_newton_with(sys, q0, v0, t_span, step, &loose)?;
    let plus = integrate_newton_with(sys, &(q0 + dq * alpha), &(v0 + dv * alpha), t_span, step, &loose)?;
    let minus = integrate_newton_with(sys, &(q0 - dq * alpha), &(v0 - dv * alpha), t_span, step, &loose)?;
    let scale = 0.5 / alpha;
    let mut v = Vec::with_capacity(base.len());
    let mut d = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        let vk = (&plus.points[k] - &minus.points[k]) * scale;
        let rate = (&plus.velocities[k] - &minus.velocities[k]) * scale;
        let local = LocalGeometry::at(&sys.metric, &base.points[k])?;
        d.push(rate + local.gamma_xy(&base.velocities[k], &vk));
        v.push(vk);
    }
    Ok(DeviationField {
        times: base.times,
        v,
        dv: d,
    })
}

/// Sup-norm distance between two deviation fields on the same grid.
pub fn deviation_distance(a: &DeviationField, b: &DeviationField) -> Result<f64> {
    if a.v.len() != b.v.len() {
        return Err(Error::GridMismatch(format!(
            "{} vs {} samples",
            a.v.len(),
            b.v.len()
        )));
    }
    Ok(a.v
        .iter()
        .zip(&b.v)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max))
}

/// Ratio of the largest to the initial norm of the field (a growth factor).
pub fn growth_factor(sys: &MechanicalSystem, traj: &Trajectory, dev: &DeviationField) -> Result<f64> {
    let norms: Vec<f64> = (0..traj.len())
        .map(|k| {
            let local_g = sys.metric.eval(&traj.points[k])?;
            let x = dev.v[k].clone();
            let y = dev.dv[k].clone();
            Ok((x.dot(&(&local_g * &x)) + y.dot(&(&local_g * &y))).sqrt())
        })
        .collect::<Result<_>>()?;
    let first = norms[0];
    if first == 0.0 {
        return Err(Error::InvalidArgument("deviation starts from zero data".into()));
    }
    Ok(norms.iter().copied().fold(0.0, f64::max) / first)
}

/// The action `∫ (½ g(q̇, q̇) − U(q)) dt` of a sampled curve (Simpson).
pub fn action(sys: &MechanicalSystem, times: &[f64], points: &[Point], velocities: &[DVector<f64>]) -> Result<f64> {
    let lag: Vec<f64> = points
        .iter()
        .zip(velocities)
        .map(|(q, v)| Ok(0.5 * sys.metric.inner(q, v, v)? - sys.potential_at(q)))
        .collect::<Result<_>>()?;
    Ok(*cumulative_simpson(times, &lag)?.last().expect("non-empty grid"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{flat, sphere};
    use std::f64::consts::{FRAC_PI_2, PI};

    fn pt(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    fn free_flat() -> MechanicalSystem {
        MechanicalSystem::new("free", flat(2), ScalarField::constant(0.0, 2))
    }

    fn harmonic() -> MechanicalSystem {
        MechanicalSystem::new("harmonic", flat(2), ScalarField::half_square_norm(2))
    }

    fn sphere_free() -> MechanicalSystem {
        MechanicalSystem::new("sphere", sphere(), ScalarField::constant(0.0, 2))
    }

    #[test]
    fn newton_examples() {
        let tr = integrate_newton(&free_flat(), &pt(&[0.0, 0.0]), &pt(&[1.0, 0.0]), (0.0, 1.0), 1e-3).unwrap();
        for (t, q) in tr.times.iter().zip(&tr.points) {
            assert!((q - pt(&[*t, 0.0])).amax() < 1e-13);
        }
        let tr = integrate_newton(&harmonic(), &pt(&[1.0, 0.0]), &pt(&[0.0, 1.0]), (0.0, 2.0 * PI), 1e-3).unwrap();
        assert!((tr.energy - 1.0).abs() < 1e-15);
        for (t, q) in tr.times.iter().zip(&tr.points) {
            assert!((q - pt(&[t.cos(), t.sin()])).amax() < 1e-10);
        }
        assert!(tr.max_drift < 1e-8);
        let tr = integrate_newton(&sphere_free(), &pt(&[FRAC_PI_2, 0.0]), &pt(&[0.0, 1.0]), (0.0, 3.0), 1e-3).unwrap();
        assert!(tr.points.iter().all(|q| (q[0] - FRAC_PI_2).abs() < 1e-14));
    }

    #[test]
    fn newton_errors() {
        // hits the pole θ = 0 at t = π/2
        let r = integrate_newton(&sphere_free(), &pt(&[FRAC_PI_2, 0.0]), &pt(&[-1.0, 0.0]), (0.0, 3.0), 1e-2);
        assert!(matches!(r, Err(Error::LeftDomain { .. })), "{r:?}");
        let opts = NewtonOptions { drift_bound: 1e-18 };
        let r = integrate_newton_with(&harmonic(), &pt(&[1.0, 0.0]), &pt(&[0.0, 1.0]), (0.0, 1.0), 0.1, &opts);
        assert!(matches!(r, Err(Error::EnergyDrift { .. })));
        assert!(integrate_newton(&harmonic(), &pt(&[1.0, 0.0]), &pt(&[0.0, 1.0]), (0.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn energy_examples() {
        assert_eq!(energy_of(&free_flat(), &pt(&[0.0, 0.0]), &pt(&[1.0, 0.0])).unwrap(), 0.5);
        assert_eq!(energy_of(&harmonic(), &pt(&[1.0, 0.0]), &pt(&[0.0, 1.0])).unwrap(), 1.0);
        let pend = MechanicalSystem::new(
            "pendulum",
            sphere(),
            ScalarField::new(|p| p[0].cos()),
        );
        let e = energy_of(&pend, &pt(&[FRAC_PI_2, 0.0]), &pt(&[0.0, 1.0])).unwrap();
        assert!((e - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hessian_operator_examples() {
        let sys = free_flat();
        let tr = integrate_newton(&sys, &pt(&[0.0, 0.0]), &pt(&[1.0, 0.0]), (0.0, 2.0), 1e-3).unwrap();
        let dev = DeviationField::from_fn(&sys, &tr, |t| (pt(&[0.0, t.sin()]), pt(&[0.0, t.cos()]))).unwrap();
        let d = hessian_operator(&sys, &tr, &dev).unwrap();
        for (t, v) in tr.times.iter().zip(&d) {
            assert!((v - pt(&[0.0, -t.sin()])).amax() < 1e-9);
        }
        let sys = harmonic();
        let tr = integrate_newton(&sys, &pt(&[1.0, 0.0]), &pt(&[0.0, 1.0]), (0.0, 2.0), 1e-3).unwrap();
        let dev = DeviationField::from_fn(&sys, &tr, |t| (pt(&[t * t, 1.0]), pt(&[2.0 * t, 0.0]))).unwrap();
        let d = hessian_operator(&sys, &tr, &dev).unwrap();
        for (t, v) in tr.times.iter().zip(&d) {
            assert!((v - pt(&[2.0 + t * t, 1.0])).amax() < 1e-8);
        }
        let sys = sphere_free();
        let tr = integrate_newton(&sys, &pt(&[FRAC_PI_2, 0.0]), &pt(&[0.0, 1.0]), (0.0, 2.0), 1e-3).unwrap();
        let dev = DeviationField::from_fn(&sys, &tr, |t| (pt(&[t * t * t, 0.0]), pt(&[3.0 * t * t, 0.0]))).unwrap();
        let d = hessian_operator(&sys, &tr, &dev).unwrap();
        for (t, v) in tr.times.iter().zip(&d) {
            assert!((v - pt(&[6.0 * t + t * t * t, 0.0])).amax() < 1e-8);
        }
        let mut short = dev.clone();
        short.v.pop();
        assert!(matches!(hessian_operator(&sys, &tr, &short), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn deviation_examples() {
        let sys = free_flat();
        let tr = integrate_newton(&sys, &pt(&[0.0, 0.0]), &pt(&[1.0, 0.0]), (0.0, 1.0), 1e-3).unwrap();
        let e = pt(&[0.3, -0.7]);
        let dev = integrate_deviation(&sys, &tr, &pt(&[0.0, 0.0]), &e).unwrap();
        for (t, v) in tr.times.iter().zip(&dev.v) {
            assert!((v - &e * *t).amax() < 1e-13);
        }
        let sys = harmonic();
        let tr = integrate_newton(&sys, &pt(&[1.0, 0.0]), &pt(&[0.0, 1.0]), (0.0, 2.0 * PI), 1e-3).unwrap();
        let dev = integrate_deviation(&sys, &tr, &e, &pt(&[0.0, 0.0])).unwrap();
        for (t, v) in tr.times.iter().zip(&dev.v) {
            assert!((v - &e * t.cos()).amax() < 1e-11);
        }
        let sys = sphere_free();
        let tr = integrate_newton(&sys, &pt(&[FRAC_PI_2, 0.0]), &pt(&[0.0, 1.0]), (0.0, 4.0), 1e-3).unwrap();
        let dev = integrate_deviation(&sys, &tr, &pt(&[0.0, 0.0]), &pt(&[1.0, 0.0])).unwrap();
        for (t, v) in tr.times.iter().zip(&dev.v) {
            assert!((v - pt(&[t.sin(), 0.0])).amax() < 1e-11);
        }
        let residual = hessian_operator(&sys, &tr, &dev).unwrap();
        assert!(residual.iter().all(|r| r.amax() < 1e-6));
    }

    #[test]
    fn brute_force_examples() {
        let sys = free_flat();
        let (q0, v0) = (pt(&[0.0, 0.0]), pt(&[1.0, 0.0]));
        let e = pt(&[0.0, 1.0]);
        let dev = brute_force_deviation(&sys, &q0, &v0, &pt(&[0.0, 0.0]), &e, 1e-4, (0.0, 1.0), 1e-3).unwrap();
        for (t, v) in dev.times.iter().zip(&dev.v) {
            assert!((v - &e * *t).amax() < 1e-10);
        }
        let sys = harmonic();
        let dev = brute_force_deviation(&sys, &pt(&[1.0, 0.0]), &pt(&[0.0, 1.0]), &e, &pt(&[0.0, 0.0]), 1e-4, (0.0, 3.0), 1e-3).unwrap();
        for (t, v) in dev.times.iter().zip(&dev.v) {
            assert!((v - &e * t.cos()).amax() < 1e-10);
        }
    }

    #[test]
    fn csv_and_record_roundtrip() {
        let sys = harmonic();
        let tr = integrate_newton(&sys, &pt(&[1.0, 0.0]), &pt(&[0.0, 1.0]), (0.0, 0.01), 1e-3).unwrap();
        let dev = DeviationField::zeros(&tr);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, Some(&dev)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,q1,q2,v1,v2,V1,V2,DV1,DV2\n"));
        assert_eq!(text.lines().count(), tr.len() + 1);
        let rec = tr.to_record();
        let json = serde_json::to_string(&rec).unwrap();
        let back: Trajectory = serde_json::from_str::<TrajectoryRecord>(&json).unwrap().into();
        assert_eq!(back, tr);
    }
}
