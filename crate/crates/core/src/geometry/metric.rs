use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::tensor::{Tensor3, Tensor4};
use crate::error::{Error, Result};

pub type Point = DVector<f64>;

pub(crate) type MatrixFn = Arc<dyn Fn(&Point) -> DMatrix<f64> + Send + Sync>;
pub(crate) type Tensor3Fn = Arc<dyn Fn(&Point) -> Tensor3 + Send + Sync>;
pub(crate) type Tensor4Fn = Arc<dyn Fn(&Point) -> Tensor4 + Send + Sync>;
pub(crate) type GuardFn = Arc<dyn Fn(&Point) -> bool + Send + Sync>;

/// Finite-difference steps used when analytic derivatives are missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdSteps {
    pub first: f64,
    pub second: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        Self {
            first: 1e-5,
            second: 1e-4,
        }
    }
}

/// A Riemannian metric on a single coordinate chart.
///
/// `first_derivatives` is laid out as `[k][i][j] = ∂_k g_ij` and
/// `second_derivatives` as `[k][l][i][j] = ∂_k ∂_l g_ij`.
#[derive(Clone)]
pub struct ChartMetric {
    name: String,
    dim: usize,
    g: MatrixFn,
    dg: Option<Tensor3Fn>,
    d2g: Option<Tensor4Fn>,
    guard: GuardFn,
    steps: FdSteps,
    sample_box: (Vec<f64>, Vec<f64>),
}

impl fmt::Debug for ChartMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartMetric")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("analytic_dg", &self.dg.is_some())
            .field("analytic_d2g", &self.d2g.is_some())
            .finish()
    }
}

impl ChartMetric {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        g: impl Fn(&Point) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            g: Arc::new(g),
            dg: None,
            d2g: None,
            guard: Arc::new(|p: &Point| p.iter().all(|v| v.is_finite())),
            steps: FdSteps::default(),
            sample_box: (vec![-1.0; dim], vec![1.0; dim]),
        }
    }

    pub fn with_first_derivatives(
        mut self,
        dg: impl Fn(&Point) -> Tensor3 + Send + Sync + 'static,
    ) -> Self {
        self.dg = Some(Arc::new(dg));
        self
    }

    pub fn with_second_derivatives(
        mut self,
        d2g: impl Fn(&Point) -> Tensor4 + Send + Sync + 'static,
    ) -> Self {
        self.d2g = Some(Arc::new(d2g));
        self
    }

    pub fn with_domain(mut self, guard: impl Fn(&Point) -> bool + Send + Sync + 'static) -> Self {
        self.guard = Arc::new(guard);
        self
    }

    pub fn with_fd_steps(mut self, steps: FdSteps) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_sample_box(mut self, lo: Vec<f64>, hi: Vec<f64>) -> Self {
        self.sample_box = (lo, hi);
        self
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Drops analytic derivative evaluators so every derivative goes through
    /// finite differences.
    pub fn finite_difference_only(mut self) -> Self {
        self.dg = None;
        self.d2g = None;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fd_steps(&self) -> FdSteps {
        self.steps
    }

    pub fn sample_box(&self) -> (&[f64], &[f64]) {
        (&self.sample_box.0, &self.sample_box.1)
    }

    pub fn has_analytic_first(&self) -> bool {
        self.dg.is_some()
    }

    pub fn has_analytic_second(&self) -> bool {
        self.d2g.is_some()
    }

    pub(crate) fn parts(&self) -> (MatrixFn, Option<Tensor3Fn>, Option<Tensor4Fn>, GuardFn) {
        (
            self.g.clone(),
            self.dg.clone(),
            self.d2g.clone(),
            self.guard.clone(),
        )
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.len() == self.dim && (self.guard)(p)
    }

    pub fn check_point(&self, p: &Point) -> Result<()> {
        if p.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: p.len(),
            });
        }
        if !(self.guard)(p) {
            return Err(Error::ChartDomain {
                point: p.iter().copied().collect(),
            });
        }
        Ok(())
    }

    /// Metric components `g_ij(p)`.
    pub fn eval(&self, p: &Point) -> Result<DMatrix<f64>> {
        self.check_point(p)?;
        Ok((self.g)(p))
    }

    /// Components without the domain check (finite-difference stencils may
    /// poke just outside the guard).
    pub(crate) fn eval_unchecked(&self, p: &Point) -> DMatrix<f64> {
        (self.g)(p)
    }

    /// Metric and its inverse; fails on a non positive-definite metric.
    pub fn eval_with_inverse(&self, p: &Point) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let g = self.eval(p)?;
        let inv = invert_spd(&g).ok_or_else(|| Error::DegenerateMetric {
            point: p.iter().copied().collect(),
        })?;
        Ok((g, inv))
    }

    pub fn inverse(&self, p: &Point) -> Result<DMatrix<f64>> {
        Ok(self.eval_with_inverse(p)?.1)
    }

    pub fn inner(&self, p: &Point, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
        Ok(x.dot(&(self.eval(p)? * y)))
    }

    pub fn norm(&self, p: &Point, x: &DVector<f64>) -> Result<f64> {
        Ok(self.inner(p, x, x)?.max(0.0).sqrt())
    }

    /// `∂_k g_ij`, analytic when available, otherwise central differences.
    pub fn first_derivatives(&self, p: &Point) -> Result<Tensor3> {
        self.check_point(p)?;
        Ok(self.first_derivatives_unchecked(p))
    }

    pub(crate) fn first_derivatives_unchecked(&self, p: &Point) -> Tensor3 {
        if let Some(dg) = &self.dg {
            return dg(p);
        }
        let n = self.dim;
        let h = self.steps.first;
        let mut out = Tensor3::zeros(n);
        for k in 0..n {
            let mut pp = p.clone();
            let mut pm = p.clone();
            pp[k] += h;
            pm[k] -= h;
            let d = ((self.g)(&pp) - (self.g)(&pm)) / (2.0 * h);
            for i in 0..n {
                for j in 0..n {
                    out[(k, i, j)] = d[(i, j)];
                }
            }
        }
        out
    }

    /// `∂_k ∂_l g_ij`. Falls back to central differences of the analytic first
    /// derivatives, or to second differences of `g` itself.
    pub fn second_derivatives(&self, p: &Point) -> Result<Tensor4> {
        self.check_point(p)?;
        if let Some(d2g) = &self.d2g {
            return Ok(d2g(p));
        }
        let n = self.dim;
        let mut out = Tensor4::zeros(n);
        if self.dg.is_some() {
            let h = self.steps.first;
            for l in 0..n {
                let mut pp = p.clone();
                let mut pm = p.clone();
                pp[l] += h;
                pm[l] -= h;
                let (a, b) = (
                    self.first_derivatives_unchecked(&pp),
                    self.first_derivatives_unchecked(&pm),
                );
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            out[(k, l, i, j)] = (a[(k, i, j)] - b[(k, i, j)]) / (2.0 * h);
                        }
                    }
                }
            }
            return Ok(out);
        }
        let h = self.steps.second;
        let g0 = (self.g)(p);
        let shifted = |k: usize, sk: f64, l: usize, sl: f64| {
            let mut q = p.clone();
            q[k] += sk * h;
            q[l] += sl * h;
            (self.g)(&q)
        };
        for k in 0..n {
            for l in k..n {
                let d = if k == l {
                    let mut pp = p.clone();
                    let mut pm = p.clone();
                    pp[k] += h;
                    pm[k] -= h;
                    ((self.g)(&pp) - &g0 * 2.0 + (self.g)(&pm)) / (h * h)
                } else {
                    (shifted(k, 1.0, l, 1.0) - shifted(k, 1.0, l, -1.0) - shifted(k, -1.0, l, 1.0)
                        + shifted(k, -1.0, l, -1.0))
                        / (4.0 * h * h)
                };
                for i in 0..n {
                    for j in 0..n {
                        out[(k, l, i, j)] = d[(i, j)];
                        out[(l, k, i, j)] = d[(i, j)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Checks the metric invariants at `p`: symmetry (< 1e-12) and positive
    /// definiteness.
    pub fn validate_at(&self, p: &Point) -> Result<()> {
        let g = self.eval(p)?;
        let asym = (&g - g.transpose()).amax();
        if asym >= 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "metric '{}' asymmetric by {asym:e} at {:?}",
                self.name,
                p.as_slice()
            )));
        }
        let eig = g.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::DegenerateMetric {
                point: p.iter().copied().collect(),
            });
        }
        Ok(())
    }
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn invert_spd(g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if g.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let chol = g.clone().cholesky()?;
    let inv = chol.inverse();
    if inv.iter().all(|v| v.is_finite()) {
        Some(inv)
    } else {
        None
    }
}
