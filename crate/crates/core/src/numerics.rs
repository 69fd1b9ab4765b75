//! Small numerical kernels shared by the geometric and dynamical modules:
//! finite-difference weights on arbitrary grids, composite Simpson quadrature,
//! piecewise-cubic interpolation and a classical Runge-Kutta step.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accuracy of the finite-difference stencils used to differentiate sampled data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FdOrder {
    /// Three-point stencils, O(step²).
    #[default]
    Second,
    /// Five-point stencils, O(step⁴).
    Fourth,
    /// Seven-point stencils, O(step⁶).
    Sixth,
}

impl FdOrder {
    fn width(self) -> usize {
        match self {
            FdOrder::Second => 3,
            FdOrder::Fourth => 5,
            FdOrder::Sixth => 7,
        }
    }
}

/// Fornberg's recursion for finite-difference weights.
///
/// Returns `w[k][j]`, the weight of node `j` in the `k`-th derivative at `z`,
/// for `k = 0..=max_deriv`.
pub fn fornberg_weights(z: f64, nodes: &[f64], max_deriv: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_deriv + 1];
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - z;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

fn stencil_start(i: usize, n: usize, width: usize) -> usize {
    let half = width / 2;
    if i < half {
        0
    } else if i + half >= n {
        n - width
    } else {
        i - half
    }
}

fn check_grid(params: &[f64], len: usize, width: usize) -> Result<()> {
    if params.len() != len {
        return Err(Error::GridMismatch(format!(
            "{} parameters for {} samples",
            params.len(),
            len
        )));
    }
    if len < width {
        return Err(Error::InsufficientSamples {
            needed: width,
            got: len,
        });
    }
    if params.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "parameters must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// First derivative of vector samples on a (possibly non-uniform) grid.
///
/// Interior nodes use centred stencils; the first and last nodes fall back to
/// one-sided stencils of the same order.
pub fn differentiate(
    params: &[f64],
    values: &[DVector<f64>],
    order: FdOrder,
) -> Result<Vec<DVector<f64>>> {
    let width = order.width();
    check_grid(params, values.len(), width)?;
    let n = values.len();
    let dim = values[0].len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let start = stencil_start(i, n, width);
        let w = fornberg_weights(params[i], &params[start..start + width], 1);
        let mut d = DVector::zeros(dim);
        for (j, wj) in w[1].iter().enumerate() {
            d.axpy(*wj, &values[start + j], 1.0);
        }
        out.push(d);
    }
    Ok(out)
}

/// Second derivative of vector samples on a (possibly non-uniform) grid,
/// from second-derivative weights directly rather than by differentiating
/// twice. Boundary nodes use one extra node so the one-sided stencils keep
/// the interior order.
pub fn second_derivative(
    params: &[f64],
    values: &[DVector<f64>],
    order: FdOrder,
) -> Result<Vec<DVector<f64>>> {
    let width = order.width();
    check_grid(params, values.len(), width + 1)?;
    let n = values.len();
    let dim = values[0].len();
    let half = width / 2;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (start, w) = if i < half {
            (0, width + 1)
        } else if i + half >= n {
            (n - width - 1, width + 1)
        } else {
            (i - half, width)
        };
        let weights = fornberg_weights(params[i], &params[start..start + w], 2);
        let mut d = DVector::zeros(dim);
        for (j, wj) in weights[2].iter().enumerate() {
            d.axpy(*wj, &values[start + j], 1.0);
        }
        out.push(d);
    }
    Ok(out)
}

/// First derivative of scalar samples; see [`differentiate`].
pub fn differentiate_scalar(params: &[f64], values: &[f64], order: FdOrder) -> Result<Vec<f64>> {
    let width = order.width();
    check_grid(params, values.len(), width)?;
    let n = values.len();
    Ok((0..n)
        .map(|i| {
            let start = stencil_start(i, n, width);
            let w = fornberg_weights(params[i], &params[start..start + width], 1);
            w[1].iter()
                .enumerate()
                .map(|(j, wj)| wj * values[start + j])
                .sum()
        })
        .collect())
}

// Quadratic-interpolant integrals over one or two intervals of a non-uniform grid.

fn simpson_pair(h0: f64, h1: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let hs = h0 + h1;
    hs / 6.0 * ((2.0 - h1 / h0) * f0 + hs * hs / (h0 * h1) * f1 + (2.0 - h0 / h1) * f2)
}

fn first_interval(h0: f64, h1: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let hs = h0 + h1;
    (2.0 * h0 * h0 + 3.0 * h0 * h1) / (6.0 * hs) * f0 + (h0 * h0 + 3.0 * h0 * h1) / (6.0 * h1) * f1
        - h0 * h0 * h0 / (6.0 * h1 * hs) * f2
}

fn last_interval(h0: f64, h1: f64, f0: f64, f1: f64, f2: f64) -> f64 {
    let hs = h0 + h1;
    -h1 * h1 * h1 / (6.0 * h0 * hs) * f0
        + (h1 * h1 + 3.0 * h1 * h0) / (6.0 * h0) * f1
        + (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * hs) * f2
}

/// Running integral `∫_{x_0}^{x_k} f` at every node, composite Simpson on pairs
/// of intervals (non-uniform spacing allowed). Odd nodes are completed with the
/// quadratic through their neighbours, so every entry is O(h⁴) accurate.
pub fn cumulative_simpson(xs: &[f64], fs: &[f64]) -> Result<Vec<f64>> {
    check_grid(xs, fs.len(), 3)?;
    let n = xs.len();
    let mut out = vec![0.0; n];
    for k in 1..n {
        if k % 2 == 0 {
            let (h0, h1) = (xs[k - 1] - xs[k - 2], xs[k] - xs[k - 1]);
            out[k] = out[k - 2] + simpson_pair(h0, h1, fs[k - 2], fs[k - 1], fs[k]);
        } else if k + 1 < n {
            let (h0, h1) = (xs[k] - xs[k - 1], xs[k + 1] - xs[k]);
            out[k] = out[k - 1] + first_interval(h0, h1, fs[k - 1], fs[k], fs[k + 1]);
        } else {
            let (h0, h1) = (xs[k - 1] - xs[k - 2], xs[k] - xs[k - 1]);
            out[k] = out[k - 1] + last_interval(h0, h1, fs[k - 2], fs[k - 1], fs[k]);
        }
    }
    Ok(out)
}

/// Running integral where each interval `[x_k, x_{k+1}]` integrates the cubic
/// through the four surrounding nodes. Same order as Simpson, but the local
/// error varies smoothly from node to node, so the result can be
/// differentiated numerically without odd/even ripple.
pub fn cumulative_cubic(xs: &[f64], fs: &[f64]) -> Result<Vec<f64>> {
    check_grid(xs, fs.len(), 4)?;
    let n = xs.len();
    let mut out = vec![0.0; n];
    for k in 0..n - 1 {
        let start = k.saturating_sub(1).min(n - 4);
        let (a, h) = (xs[k], xs[k + 1] - xs[k]);
        // weights w_j with Σ w_j ((x_j - a)/h)^m = ∫_0^1 u^m du
        let vander = DMatrix::from_fn(4, 4, |m, j| ((xs[start + j] - a) / h).powi(m as i32));
        let moments = DVector::from_fn(4, |m, _| 1.0 / (m as f64 + 1.0));
        let w = vander.lu().solve(&moments).ok_or(Error::NonUniformGrid)?;
        let incr: f64 = (0..4).map(|j| w[j] * fs[start + j]).sum();
        out[k + 1] = out[k] + incr * h;
    }
    Ok(out)
}

/// Composite Simpson integral over the whole grid.
pub fn simpson(xs: &[f64], fs: &[f64]) -> Result<f64> {
    Ok(*cumulative_simpson(xs, fs)?.last().unwrap_or(&0.0))
}

/// Index `i` with `xs[i] <= x < xs[i+1]`, clamped to the valid interval range.
pub fn bracket(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    match xs.partition_point(|&v| v <= x) {
        0 => 0,
        p if p >= n => n - 2,
        p => p - 1,
    }
}

/// Four-point Lagrange interpolation of vector samples on a sorted grid.
pub fn interp_cubic(xs: &[f64], ys: &[DVector<f64>], x: f64) -> DVector<f64> {
    let n = xs.len();
    if n < 4 {
        // Linear fallback for very short series.
        let i = bracket(xs, x);
        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        return &ys[i] * (1.0 - t) + &ys[i + 1] * t;
    }
    let i = bracket(xs, x);
    let start = i.saturating_sub(1).min(n - 4);
    let w = fornberg_weights(x, &xs[start..start + 4], 0);
    let mut out = DVector::zeros(ys[0].len());
    for (j, wj) in w[0].iter().enumerate() {
        out.axpy(*wj, &ys[start + j], 1.0);
    }
    out
}

/// Scalar counterpart of [`interp_cubic`].
pub fn interp_cubic_scalar(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let i = bracket(xs, x);
    if n < 4 {
        let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
        return ys[i] * (1.0 - t) + ys[i + 1] * t;
    }
    let start = i.saturating_sub(1).min(n - 4);
    let w = fornberg_weights(x, &xs[start..start + 4], 0);
    w[0].iter().enumerate().map(|(j, wj)| wj * ys[start + j]).sum()
}

/// Cubic Hermite interpolation on `[x0, x1]` from values and derivatives.
pub fn hermite(
    x0: f64,
    x1: f64,
    y0: &DVector<f64>,
    y1: &DVector<f64>,
    d0: &DVector<f64>,
    d1: &DVector<f64>,
    x: f64,
) -> (DVector<f64>, DVector<f64>) {
    let h = x1 - x0;
    let t = (x - x0) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let value = y0 * h00 + d0 * (h10 * h) + y1 * h01 + d1 * (h11 * h);
    let dh00 = (6.0 * t2 - 6.0 * t) / h;
    let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
    let dh01 = (-6.0 * t2 + 6.0 * t) / h;
    let dh11 = 3.0 * t2 - 2.0 * t;
    let deriv = y0 * dh00 + d0 * dh10 + y1 * dh01 + d1 * dh11;
    (value, deriv)
}

/// One classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(rhs: F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = rhs(t, y)?;
    let k2 = rhs(t + 0.5 * h, &(y + &k1 * (0.5 * h)))?;
    let k3 = rhs(t + 0.5 * h, &(y + &k2 * (0.5 * h)))?;
    let k4 = rhs(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Uniform grid `t0, t0+h, …, t1` with the step adjusted so the last node hits `t1`.
pub fn uniform_grid(t0: f64, t1: f64, step: f64) -> Result<(Vec<f64>, f64)> {
    if !(step > 0.0) || !(t1 > t0) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "invalid span [{t0}, {t1}] with step {step}"
        )));
    }
    let n = ((t1 - t0) / step - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / n as f64;
    let grid = (0..=n)
        .map(|k| if k == n { t1 } else { t0 + k as f64 * h })
        .collect();
    Ok((grid, h))
}
