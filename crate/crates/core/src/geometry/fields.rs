use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::metric::{ChartMetric, FdSteps, Point};
use crate::error::{Error, Result};
use crate::expr::Expr;

type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&Point) -> DVector<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;
type MatricesFn = Arc<dyn Fn(&Point) -> Vec<DMatrix<f64>> + Send + Sync>;

/// A scalar field on the chart with optional analytic partial derivatives.
#[derive(Clone)]
pub struct ScalarField {
    value: ScalarFn,
    grad: Option<VectorFn>,
    hess: Option<MatrixFn>,
    steps: FdSteps,
    label: String,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({})", self.label)
    }
}

impl ScalarField {
    pub fn new(value: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            grad: None,
            hess: None,
            steps: FdSteps::default(),
            label: "custom".into(),
        }
    }

    pub fn with_gradient(
        mut self,
        grad: impl Fn(&Point) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn with_hessian(
        mut self,
        hess: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hess = Some(Arc::new(hess));
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_fd_steps(mut self, steps: FdSteps) -> Self {
        self.steps = steps;
        self
    }

    pub fn finite_difference_only(mut self) -> Self {
        self.grad = None;
        self.hess = None;
        self
    }

    pub fn constant(c: f64, dim: usize) -> Self {
        Self::new(move |_| c)
            .with_gradient(move |_| DVector::zeros(dim))
            .with_hessian(move |_| DMatrix::zeros(dim, dim))
            .with_label(format!("{c}"))
    }

    /// `c_0 + Σ c_i q^i`.
    pub fn linear(offset: f64, coeffs: DVector<f64>) -> Self {
        let n = coeffs.len();
        let (c1, c2) = (coeffs.clone(), coeffs.clone());
        Self::new(move |p| offset + c1.dot(p))
            .with_gradient(move |_| c2.clone())
            .with_hessian(move |_| DMatrix::zeros(n, n))
            .with_label("linear")
    }

    /// `½ Σ (q^i)²`.
    pub fn half_square_norm(dim: usize) -> Self {
        Self::new(|p| 0.5 * p.norm_squared())
            .with_gradient(|p| p.clone())
            .with_hessian(move |_| DMatrix::identity(dim, dim))
            .with_label("½|q|²")
    }

    /// An expression in `q1..qn`; derivatives by finite differences.
    pub fn from_expr(expr: Expr) -> Self {
        let label = expr.source().to_string();
        Self::new(move |p| expr.eval(p.as_slice())).with_label(label)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_analytic_gradient(&self) -> bool {
        self.grad.is_some()
    }

    pub fn has_analytic_hessian(&self) -> bool {
        self.hess.is_some()
    }

    pub fn value(&self, p: &Point) -> f64 {
        (self.value)(p)
    }

    /// Partial derivatives `∂_j f`.
    pub fn partials(&self, p: &Point) -> DVector<f64> {
        if let Some(g) = &self.grad {
            return g(p);
        }
        let h = self.steps.first;
        DVector::from_fn(p.len(), |k, _| {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[k] += h;
            pm[k] -= h;
            ((self.value)(&pp) - (self.value)(&pm)) / (2.0 * h)
        })
    }

    /// Second partials `∂_j ∂_l f` (symmetrised when obtained numerically).
    pub fn second_partials(&self, p: &Point) -> DMatrix<f64> {
        if let Some(hs) = &self.hess {
            return hs(p);
        }
        let n = p.len();
        if let Some(g) = &self.grad {
            let h = self.steps.first;
            let mut m = DMatrix::zeros(n, n);
            for l in 0..n {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[l] += h;
                pm[l] -= h;
                let d = (g(&pp) - g(&pm)) / (2.0 * h);
                m.set_column(l, &d);
            }
            return (&m + m.transpose()) * 0.5;
        }
        let h = self.steps.second;
        let f = |dk: (usize, f64), dl: (usize, f64)| {
            let mut q = p.clone();
            q[dk.0] += dk.1 * h;
            q[dl.0] += dl.1 * h;
            (self.value)(&q)
        };
        let f0 = (self.value)(p);
        DMatrix::from_fn(n, n, |k, l| {
            if k == l {
                (f((k, 1.0), (k, 0.0)) - 2.0 * f0 + f((k, -1.0), (k, 0.0))) / (h * h)
            } else {
                (f((k, 1.0), (l, 1.0)) - f((k, 1.0), (l, -1.0)) - f((k, -1.0), (l, 1.0))
                    + f((k, -1.0), (l, -1.0)))
                    / (4.0 * h * h)
            }
        })
    }
}

/// A vector field on the chart (contravariant components) with optional
/// analytic first and second partial derivatives.
///
/// `jacobian(p)[(i, m)] = ∂_m V^i` and `hessian(p)[i][(m, n)] = ∂_m ∂_n V^i`.
#[derive(Clone)]
pub struct VectorField {
    value: VectorFn,
    jac: Option<MatrixFn>,
    hess: Option<MatricesFn>,
    steps: FdSteps,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("analytic_jacobian", &self.jac.is_some())
            .finish()
    }
}

impl VectorField {
    pub fn new(value: impl Fn(&Point) -> DVector<f64> + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            jac: None,
            hess: None,
            steps: FdSteps::default(),
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jac = Some(Arc::new(jac));
        self
    }

    pub fn with_hessian(
        mut self,
        hess: impl Fn(&Point) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.hess = Some(Arc::new(hess));
        self
    }

    /// Field with constant components (e.g. a coordinate field `∂_k`).
    pub fn constant(v: DVector<f64>) -> Self {
        let n = v.len();
        Self::new(move |_| v.clone())
            .with_jacobian(move |_| DMatrix::zeros(n, n))
            .with_hessian(move |_| vec![DMatrix::zeros(n, n); n])
    }

    pub fn coordinate(k: usize, dim: usize) -> Self {
        let mut v = DVector::zeros(dim);
        v[k] = 1.0;
        Self::constant(v)
    }

    /// `V(q) = v0 + A (q - p0)`.
    pub fn affine(v0: DVector<f64>, a: DMatrix<f64>, p0: Point) -> Self {
        let n = v0.len();
        let a2 = a.clone();
        Self::new(move |q| &v0 + &a * (q - &p0))
            .with_jacobian(move |_| a2.clone())
            .with_hessian(move |_| vec![DMatrix::zeros(n, n); n])
    }

    pub fn value(&self, p: &Point) -> DVector<f64> {
        (self.value)(p)
    }

    pub fn jacobian(&self, p: &Point) -> DMatrix<f64> {
        if let Some(j) = &self.jac {
            return j(p);
        }
        let h = self.steps.first;
        let n = p.len();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[k] += h;
            pm[k] -= h;
            m.set_column(k, &(((self.value)(&pp) - (self.value)(&pm)) / (2.0 * h)));
        }
        m
    }

    pub fn hessian(&self, p: &Point) -> Vec<DMatrix<f64>> {
        if let Some(hs) = &self.hess {
            return hs(p);
        }
        let n = p.len();
        let h = self.steps.second;
        let mut out = vec![DMatrix::zeros(n, n); n];
        for l in 0..n {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[l] += h;
            pm[l] -= h;
            let d = (self.jacobian(&pp) - self.jacobian(&pm)) / (2.0 * h);
            for (i, hi) in out.iter_mut().enumerate() {
                for m in 0..n {
                    hi[(m, l)] = d[(i, m)];
                }
            }
        }
        for hi in out.iter_mut() {
            *hi = (&*hi + hi.transpose()) * 0.5;
        }
        out
    }
}

/// A tangent vector: contravariant components attached to a chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    pub base: Point,
    pub components: DVector<f64>,
}

impl TangentVector {
    pub fn new(base: Point, components: DVector<f64>) -> Self {
        Self { base, components }
    }

    pub fn from_slices(base: &[f64], components: &[f64]) -> Self {
        Self::new(
            DVector::from_column_slice(base),
            DVector::from_column_slice(components),
        )
    }

    pub fn same_base(&self, other: &TangentVector) -> Result<()> {
        if self.base.len() != other.base.len()
            || (&self.base - &other.base).amax() > 1e-14 * (1.0 + self.base.amax())
        {
            return Err(Error::BasePointMismatch {
                left: self.base.iter().copied().collect(),
                right: other.base.iter().copied().collect(),
            });
        }
        Ok(())
    }
}

/// A curve sampled at increasing parameter values, with its tangent at each sample.
#[derive(Debug, Clone)]
pub struct SampledCurve {
    pub params: Vec<f64>,
    pub points: Vec<Point>,
    pub tangents: Vec<DVector<f64>>,
}

impl SampledCurve {
    pub fn new(params: Vec<f64>, points: Vec<Point>, tangents: Vec<DVector<f64>>) -> Result<Self> {
        let c = Self {
            params,
            points,
            tangents,
        };
        c.check_shape()?;
        Ok(c)
    }

    fn check_shape(&self) -> Result<()> {
        let n = self.params.len();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: n });
        }
        if self.points.len() != n || self.tangents.len() != n {
            return Err(Error::GridMismatch(format!(
                "{} params, {} points, {} tangents",
                n,
                self.points.len(),
                self.tangents.len()
            )));
        }
        if self.params.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "curve parameters must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Samples a parametrised curve `param ↦ (point, tangent)`.
    pub fn from_fn(
        params: Vec<f64>,
        f: impl Fn(f64) -> (DVector<f64>, DVector<f64>),
    ) -> Result<Self> {
        let (points, tangents) = params.iter().map(|&t| f(t)).unzip();
        Self::new(params, points, tangents)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn validate(&self, metric: &ChartMetric) -> Result<()> {
        self.check_shape()?;
        for p in &self.points {
            metric.check_point(p)?;
        }
        Ok(())
    }
}
