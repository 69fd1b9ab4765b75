use thiserror::Error;

/// Errors raised by the geometric and dynamical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate metric at {point:?}")]
    DegenerateMetric { point: Vec<f64> },

    #[error("point {point:?} lies outside the chart domain")]
    ChartDomain { point: Vec<f64> },

    #[error("base point mismatch: {left:?} vs {right:?}")]
    BasePointMismatch { left: Vec<f64>, right: Vec<f64> },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("sampling grids do not match: {0}")]
    GridMismatch(String),

    #[error("grid too coarse: need at least {needed} nodes, got {got}")]
    GridTooCoarse { needed: usize, got: usize },

    #[error("non-uniform grid where a uniform one is required")]
    NonUniformGrid,

    #[error("forbidden region: E - U = {margin:e} at {point:?}")]
    ForbiddenRegion { point: Vec<f64>, margin: f64 },

    #[error("degenerate reparametrization: factor vanishes at sample {index}")]
    DegenerateReparametrization { index: usize },

    #[error("non-positive conformal factor {value:e} at {point:?}")]
    NonPositiveFactor { point: Vec<f64>, value: f64 },

    #[error("left chart domain at t={t}")]
    LeftDomain { t: f64 },

    #[error("energy drift exceeded bound at t={t}: relative drift {drift:e} > {bound:e}")]
    EnergyDrift { t: f64, drift: f64, bound: f64 },

    #[error("energy mismatch: trajectory has E={trajectory}, expected {expected}")]
    EnergyMismatch { trajectory: f64, expected: f64 },

    #[error("turning point: |velocity|^2 = {speed2:e} at t={t}")]
    TurningPoint { t: f64, speed2: f64 },

    #[error("equal-energy constraint violated: residual {residual:e}")]
    ConstraintViolated { residual: f64 },

    #[error("field is not orthogonal to the velocity: |<v,V>| = {residual:e} at t={t}")]
    NotOrthogonal { t: f64, residual: f64 },

    #[error("empty variation spec")]
    EmptySpec,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("expression error: {0}")]
    Expression(String),
}

pub type Result<T> = std::result::Result<T, Error>;
