use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::metric::ChartMetric;
use super::tensor::{Tensor3, Tensor4};
use crate::error::{Error, Result};

/// Names accepted by [`metric_by_name`].
pub const BUILTIN_METRICS: [&str; 4] = ["flat", "sphere", "hyperbolic", "conformal-flat"];

fn diag2(a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![a, b]))
}

/// Euclidean metric on ℝⁿ.
pub fn flat(n: usize) -> ChartMetric {
    ChartMetric::new("flat", n, move |_| DMatrix::identity(n, n))
        .with_first_derivatives(move |_| Tensor3::zeros(n))
        .with_second_derivatives(move |_| Tensor4::zeros(n))
}

/// Unit 2-sphere in the chart `(θ, φ)`, `g = diag(1, sin²θ)`, `θ ∈ (0, π)`.
pub fn sphere() -> ChartMetric {
    ChartMetric::new("sphere", 2, |p| diag2(1.0, p[0].sin().powi(2)))
        .with_first_derivatives(|p| {
            let mut t = Tensor3::zeros(2);
            t[(0, 1, 1)] = (2.0 * p[0]).sin();
            t
        })
        .with_second_derivatives(|p| {
            let mut t = Tensor4::zeros(2);
            t[(0, 0, 1, 1)] = 2.0 * (2.0 * p[0]).cos();
            t
        })
        .with_domain(|p| p[0] > 0.0 && p[0] < PI && p[1].is_finite())
        .with_sample_box(vec![0.3, -PI], vec![PI - 0.3, PI])
}

/// Upper half-plane `g = diag(1/y², 1/y²)`, `y > 0`, constant curvature −1.
pub fn hyperbolic() -> ChartMetric {
    ChartMetric::new("hyperbolic", 2, |p| {
        let w = 1.0 / (p[1] * p[1]);
        diag2(w, w)
    })
    .with_first_derivatives(|p| {
        let mut t = Tensor3::zeros(2);
        let d = -2.0 / p[1].powi(3);
        t[(1, 0, 0)] = d;
        t[(1, 1, 1)] = d;
        t
    })
    .with_second_derivatives(|p| {
        let mut t = Tensor4::zeros(2);
        let d = 6.0 / p[1].powi(4);
        t[(1, 1, 0, 0)] = d;
        t[(1, 1, 1, 1)] = d;
        t
    })
    .with_domain(|p| p[1] > 0.0 && p[0].is_finite())
    .with_sample_box(vec![-1.0, 0.5], vec![1.0, 2.0])
}

/// Conformally flat plane `g = e^{2σ} δ` with `σ = q1`.
pub fn conformal_flat() -> ChartMetric {
    ChartMetric::new("conformal-flat", 2, |p| {
        let w = (2.0 * p[0]).exp();
        diag2(w, w)
    })
    .with_first_derivatives(|p| {
        let mut t = Tensor3::zeros(2);
        let w = 2.0 * (2.0 * p[0]).exp();
        t[(0, 0, 0)] = w;
        t[(0, 1, 1)] = w;
        t
    })
    .with_second_derivatives(|p| {
        let mut t = Tensor4::zeros(2);
        let w = 4.0 * (2.0 * p[0]).exp();
        t[(0, 0, 0, 0)] = w;
        t[(0, 0, 1, 1)] = w;
        t
    })
}

/// Looks up a built-in two-dimensional metric by name.
pub fn metric_by_name(name: &str) -> Result<ChartMetric> {
    match name {
        "flat" => Ok(flat(2)),
        "sphere" => Ok(sphere()),
        "hyperbolic" => Ok(hyperbolic()),
        "conformal-flat" => Ok(conformal_flat()),
        other => Err(Error::InvalidArgument(format!(
            "unknown metric '{other}' (expected one of {BUILTIN_METRICS:?})"
        ))),
    }
}
