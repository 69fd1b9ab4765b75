//! Chart-based Riemannian geometry: Christoffel symbols, curvature, gradients,
//! Hessians and covariant derivatives along sampled curves.
//!
//! Curvature follows the operator convention
//! `R(X,Y)Z = -∇_X∇_Y Z + ∇_Y∇_X Z + ∇_[X,Y] Z`, the negative of the usual
//! textbook sign. With it `K_X(Y) = R(X,Y)X` enters the deviation equations
//! with a plus sign and `⟨R(X,Y)X, Y⟩` is the sectional curvature for
//! orthonormal `X, Y`.

mod builtin;
mod fields;
mod metric;
mod tensor;

use nalgebra::{DMatrix, DVector};

pub use builtin::{conformal_flat, flat, hyperbolic, metric_by_name, sphere, BUILTIN_METRICS};
pub use fields::{SampledCurve, ScalarField, TangentVector, VectorField};
pub use metric::{invert_spd, ChartMetric, FdSteps, Point};
pub use tensor::{Tensor3, Tensor4};

use crate::error::{Error, Result};
use crate::numerics::{differentiate, FdOrder};

/// Metric data at one point: components, inverse, first derivatives and
/// Christoffel symbols, plus curvature when requested.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    pub point: Point,
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    pub dg: Tensor3,
    /// `gamma[(i, j, k)] = Γ^i_{jk}`.
    pub gamma: Tensor3,
    /// `dgamma[(m, i, j, k)] = ∂_m Γ^i_{jk}`.
    pub dgamma: Option<Tensor4>,
    /// `riemann[(i, a, b, c)]` = i-th component of `R(∂_a, ∂_b) ∂_c`.
    pub riemann: Option<Tensor4>,
}

impl LocalGeometry {
    /// Connection data only.
    pub fn at(metric: &ChartMetric, p: &Point) -> Result<Self> {
        let (g, ginv) = metric.eval_with_inverse(p)?;
        let dg = metric.first_derivatives(p)?;
        let n = metric.dim();
        // first-kind symbols Γ_{l,jk} = ½(∂_j g_lk + ∂_k g_lj - ∂_l g_jk)
        let first_kind =
            Tensor3::from_fn(n, |l, j, k| 0.5 * (dg[(j, l, k)] + dg[(k, l, j)] - dg[(l, j, k)]));
        let gamma = Tensor3::from_fn(n, |i, j, k| {
            (0..n).map(|l| ginv[(i, l)] * first_kind[(l, j, k)]).sum()
        });
        Ok(Self {
            point: p.clone(),
            g,
            ginv,
            dg,
            gamma,
            dgamma: None,
            riemann: None,
        })
    }

    /// Connection plus `∂Γ` and the curvature array.
    pub fn with_curvature(metric: &ChartMetric, p: &Point) -> Result<Self> {
        let mut local = Self::at(metric, p)?;
        let d2g = metric.second_derivatives(p)?;
        let n = metric.dim();
        let (ginv, dg, gamma) = (&local.ginv, &local.dg, &local.gamma);
        // ∂_m Γ^i_jk = g^il (∂_m Γ_{l,jk} - ∂_m g_lb Γ^b_jk)
        let mut dgamma = Tensor4::zeros(n);
        for m in 0..n {
            for l in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let d_first = 0.5
                            * (d2g[(m, j, l, k)] + d2g[(m, k, l, j)] - d2g[(m, l, j, k)]);
                        let corr: f64 = (0..n).map(|b| dg[(m, l, b)] * gamma[(b, j, k)]).sum();
                        let val = d_first - corr;
                        if val == 0.0 {
                            continue;
                        }
                        for i in 0..n {
                            dgamma[(m, i, j, k)] += ginv[(i, l)] * val;
                        }
                    }
                }
            }
        }
        // textbook R^i_{cab} = ∂_a Γ^i_bc - ∂_b Γ^i_ac + Γ^i_am Γ^m_bc - Γ^i_bm Γ^m_ac;
        // the operator convention used here is its negative.
        let mut riemann = Tensor4::zeros(n);
        for i in 0..n {
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let mut v = dgamma[(a, i, b, c)] - dgamma[(b, i, a, c)];
                        for m in 0..n {
                            v += gamma[(i, a, m)] * gamma[(m, b, c)]
                                - gamma[(i, b, m)] * gamma[(m, a, c)];
                        }
                        riemann[(i, a, b, c)] = -v;
                    }
                }
            }
        }
        local.dgamma = Some(dgamma);
        local.riemann = Some(riemann);
        Ok(local)
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn inner(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.g * y))
    }

    /// `Γ(x, y)^i = Γ^i_jk x^j y^k`.
    pub fn gamma_xy(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.gamma.contract(x, y)
    }

    /// `(x^m ∂_m Γ)(y, z)`.
    pub fn dgamma_xyz(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        let dg = self
            .dgamma
            .as_ref()
            .expect("LocalGeometry built without curvature data");
        let n = self.dim();
        DVector::from_fn(n, |i, _| {
            let mut s = 0.0;
            for m in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        s += dg[(m, i, j, k)] * x[m] * y[j] * z[k];
                    }
                }
            }
            s
        })
    }

    /// `R(x, y) z`.
    pub fn curvature(&self, x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        self.riemann
            .as_ref()
            .expect("LocalGeometry built without curvature data")
            .apply(x, y, z)
    }

    /// Raises a covector: `g^{ij} w_j`.
    pub fn raise(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.ginv * w
    }
}

/// Christoffel symbols `Γ^i_{jk}` at `p`, indexed `[(i, j, k)]`.
pub fn christoffel(metric: &ChartMetric, p: &Point) -> Result<Tensor3> {
    Ok(LocalGeometry::at(metric, p)?.gamma)
}

/// `∂_m Γ^i_{jk}` at `p`, indexed `[(m, i, j, k)]`.
pub fn christoffel_derivative(metric: &ChartMetric, p: &Point) -> Result<Tensor4> {
    Ok(LocalGeometry::with_curvature(metric, p)?
        .dgamma
        .expect("curvature data"))
}

/// Curvature components: `[(i, a, b, c)]` is the i-th component of `R(∂_a, ∂_b) ∂_c`.
pub fn riemann(metric: &ChartMetric, p: &Point) -> Result<Tensor4> {
    Ok(LocalGeometry::with_curvature(metric, p)?
        .riemann
        .expect("curvature data"))
}

/// `K_X(Y) = R(X, Y) X`.
pub fn sectional_tensor(
    metric: &ChartMetric,
    x: &TangentVector,
    y: &TangentVector,
) -> Result<TangentVector> {
    x.same_base(y)?;
    let local = LocalGeometry::with_curvature(metric, &x.base)?;
    Ok(TangentVector::new(
        x.base.clone(),
        local.curvature(&x.components, &y.components, &x.components),
    ))
}

/// Riemannian gradient `g^{ij} ∂_j f`.
pub fn grad_scalar(metric: &ChartMetric, f: &ScalarField, p: &Point) -> Result<TangentVector> {
    let ginv = metric.inverse(p)?;
    Ok(TangentVector::new(p.clone(), ginv * f.partials(p)))
}

/// Covariant Hessian `∇df`: components `∂_j∂_l f - ∂_k f Γ^k_{jl}`.
pub fn hessian_form(metric: &ChartMetric, f: &ScalarField, p: &Point) -> Result<DMatrix<f64>> {
    let local = LocalGeometry::at(metric, p)?;
    Ok(hessian_form_local(&local, f))
}

pub(crate) fn hessian_form_local(local: &LocalGeometry, f: &ScalarField) -> DMatrix<f64> {
    let p = &local.point;
    let n = local.dim();
    let d1 = f.partials(p);
    let d2 = f.second_partials(p);
    let h = DMatrix::from_fn(n, n, |j, l| {
        d2[(j, l)] - (0..n).map(|k| d1[k] * local.gamma[(k, j, l)]).sum::<f64>()
    });
    (&h + h.transpose()) * 0.5
}

/// `∇_X Y` at the base point of `x` for a vector field `y`.
pub fn cov_derivative(metric: &ChartMetric, x: &TangentVector, y: &VectorField) -> Result<DVector<f64>> {
    let local = LocalGeometry::at(metric, &x.base)?;
    Ok(cov_derivative_local(&local, &x.components, y))
}

pub(crate) fn cov_derivative_local(
    local: &LocalGeometry,
    x: &DVector<f64>,
    y: &VectorField,
) -> DVector<f64> {
    let p = &local.point;
    y.jacobian(p) * x + local.gamma_xy(x, &y.value(p))
}

/// Covariant differential of a vector field as a matrix: column `m` is `∇_{∂_m} Y`.
pub fn cov_differential(metric: &ChartMetric, y: &VectorField, p: &Point) -> Result<DMatrix<f64>> {
    let local = LocalGeometry::at(metric, p)?;
    Ok(cov_differential_local(&local, y))
}

pub(crate) fn cov_differential_local(local: &LocalGeometry, y: &VectorField) -> DMatrix<f64> {
    let p = &local.point;
    let n = local.dim();
    let yv = y.value(p);
    let jac = y.jacobian(p);
    DMatrix::from_fn(n, n, |i, m| {
        jac[(i, m)] + (0..n).map(|k| local.gamma[(i, m, k)] * yv[k]).sum::<f64>()
    })
}

/// `∇_X (∇_Y Z)` at the base point of `x`; needs first derivatives of `Y` and
/// second derivatives of `Z` (analytic or numerical).
pub fn second_cov_derivative(
    metric: &ChartMetric,
    x: &TangentVector,
    y: &VectorField,
    z: &VectorField,
) -> Result<DVector<f64>> {
    let local = LocalGeometry::with_curvature(metric, &x.base)?;
    Ok(second_cov_derivative_local(&local, &x.components, y, z))
}

pub(crate) fn second_cov_derivative_local(
    local: &LocalGeometry,
    x: &DVector<f64>,
    y: &VectorField,
    z: &VectorField,
) -> DVector<f64> {
    let p = &local.point;
    let n = local.dim();
    let (yv, zv) = (y.value(p), z.value(p));
    let (jy, jz) = (y.jacobian(p), z.jacobian(p));
    let hz = z.hessian(p);
    // W = ∇_Y Z, then x^m ∂_m W + Γ(x, W)
    let w = &jz * &yv + local.gamma_xy(&yv, &zv);
    let dy_x = &jy * x;
    let dz_x = &jz * x;
    let mut dw_x = &jz * &dy_x;
    for i in 0..n {
        dw_x[i] += (x.transpose() * &hz[i] * &yv)[(0, 0)];
    }
    dw_x += local.dgamma_xyz(x, &yv, &zv);
    dw_x += local.gamma_xy(&dy_x, &zv) + local.gamma_xy(&yv, &dz_x);
    dw_x + local.gamma_xy(x, &w)
}

/// Covariant derivative of a field along a sampled curve:
/// `dV^i/dparam + Γ^i_jk γ̇^j V^k`, central O(step²) differences in the
/// interior and one-sided differences at the ends.
pub fn cov_derivative_along(
    metric: &ChartMetric,
    curve: &SampledCurve,
    field: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    cov_derivative_along_with(metric, curve, field, FdOrder::Second)
}

/// [`cov_derivative_along`] with a selectable stencil order.
pub fn cov_derivative_along_with(
    metric: &ChartMetric,
    curve: &SampledCurve,
    field: &[DVector<f64>],
    order: FdOrder,
) -> Result<Vec<DVector<f64>>> {
    if curve.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: curve.len(),
        });
    }
    if field.len() != curve.len() {
        return Err(Error::GridMismatch(format!(
            "field has {} samples, curve has {}",
            field.len(),
            curve.len()
        )));
    }
    let deriv = differentiate(&curve.params, field, order)?;
    curve
        .points
        .iter()
        .zip(&curve.tangents)
        .zip(field.iter().zip(deriv))
        .map(|((p, c), (v, dv))| {
            let gamma = christoffel(metric, p)?;
            Ok(dv + gamma.contract(c, v))
        })
        .collect()
}
