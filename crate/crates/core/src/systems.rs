//! Catalogue of built-in mechanical systems with reference initial data.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{energy_of, MechanicalSystem};
use crate::error::{Error, Result};
use crate::geometry::{flat, hyperbolic, sphere, Point, ScalarField};

/// A mechanical system together with one reference trajectory's data.
#[derive(Debug, Clone)]
pub struct BuiltinSystem {
    pub system: MechanicalSystem,
    pub q0: Point,
    pub v0: DVector<f64>,
    /// One characteristic period (or time scale) of the reference motion.
    pub span: (f64, f64),
    /// Interval kept clear of turning points, for Jacobi-metric computations.
    pub jacobi_span: (f64, f64),
}

impl BuiltinSystem {
    pub fn name(&self) -> &str {
        &self.system.name
    }

    pub fn energy(&self) -> f64 {
        energy_of(&self.system, &self.q0, &self.v0).expect("built-in initial data lie in the chart")
    }
}

pub const BUILTIN_SYSTEMS: [&str; 7] = [
    "flat-free",
    "harmonic",
    "gravity",
    "sphere-free",
    "spherical-pendulum",
    "hyperbolic-free",
    "hyperbolic-well",
];

fn v2(a: f64, b: f64) -> DVector<f64> {
    DVector::from_vec(vec![a, b])
}

/// `U = cos θ` on the sphere chart.
pub fn cos_theta_potential() -> ScalarField {
    ScalarField::new(|p| p[0].cos())
        .with_gradient(|p| v2(-p[0].sin(), 0.0))
        .with_hessian(|p| DMatrix::from_diagonal(&v2(-p[0].cos(), 0.0)))
        .with_label("cos(q1)")
}

/// `U = ½ (q1)²`.
pub fn half_x_squared() -> ScalarField {
    ScalarField::new(|p| 0.5 * p[0] * p[0])
        .with_gradient(|p| v2(p[0], 0.0))
        .with_hessian(|_| DMatrix::from_diagonal(&v2(1.0, 0.0)))
        .with_label("0.5*q1^2")
}

pub fn builtin_system(name: &str) -> Result<BuiltinSystem> {
    let zero = || ScalarField::constant(0.0, 2);
    let b = |system: MechanicalSystem, q0: [f64; 2], v0: [f64; 2], span: (f64, f64), jspan: (f64, f64)| {
        BuiltinSystem {
            system,
            q0: v2(q0[0], q0[1]),
            v0: v2(v0[0], v0[1]),
            span,
            jacobi_span: jspan,
        }
    };
    Ok(match name {
        "flat-free" => b(MechanicalSystem::new(name, flat(2), zero()), [0.0, 0.0], [1.0, 0.0], (0.0, 1.0), (0.0, 1.0)),
        "harmonic" => b(
            MechanicalSystem::new(name, flat(2), ScalarField::half_square_norm(2)),
            [1.0, 0.0],
            [0.0, 1.0],
            (0.0, TAU),
            (0.0, TAU),
        ),
        "gravity" => b(
            MechanicalSystem::new(name, flat(2), ScalarField::linear(0.0, v2(1.0, 0.0)).with_label("q1")),
            [0.0, 0.0],
            [1.0, 0.0],
            (0.0, 0.9),
            (0.0, 0.5),
        ),
        "sphere-free" => b(
            MechanicalSystem::new(name, sphere(), zero()),
            [FRAC_PI_2, 0.0],
            [0.0, 1.0],
            (0.0, TAU),
            (0.0, TAU),
        ),
        "spherical-pendulum" => b(
            MechanicalSystem::new(name, sphere(), cos_theta_potential()),
            [FRAC_PI_2, 0.0],
            [1.0, 3f64.sqrt()],
            (0.0, TAU),
            (0.0, TAU),
        ),
        "hyperbolic-free" => b(
            MechanicalSystem::new(name, hyperbolic(), zero()),
            [0.0, 1.0],
            [1.0, 0.0],
            (0.0, 2.0),
            (0.0, 2.0),
        ),
        "hyperbolic-well" => b(
            MechanicalSystem::new(name, hyperbolic(), half_x_squared()),
            [0.0, 1.0],
            [1.0, 0.5],
            (0.0, PI),
            (0.0, PI),
        ),
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown system '{other}' (expected one of {BUILTIN_SYSTEMS:?})"
            )))
        }
    })
}

pub fn all_builtin_systems() -> Vec<BuiltinSystem> {
    BUILTIN_SYSTEMS
        .iter()
        .map(|n| builtin_system(n).expect("catalogue names resolve"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate_newton;

    #[test]
    fn catalogue_energies_and_clearance() {
        for b in all_builtin_systems() {
            let tr = integrate_newton(&b.system, &b.q0, &b.v0, b.jacobi_span, 1e-3).unwrap();
            let min_gap = tr
                .points
                .iter()
                .map(|q| b.energy() - b.system.potential_at(q))
                .fold(f64::INFINITY, f64::min);
            assert!(min_gap > 0.05, "{}: min E-U = {min_gap}", b.name());
        }
        assert_eq!(builtin_system("harmonic").unwrap().energy(), 1.0);
        assert_eq!(builtin_system("gravity").unwrap().energy(), 0.5);
        assert!((builtin_system("spherical-pendulum").unwrap().energy() - 2.0).abs() < 1e-15);
        assert!(builtin_system("kepler").is_err());
    }
}
