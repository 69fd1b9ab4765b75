//! Side-by-side numerical treatment of the dynamical stability operator of a
//! natural mechanical system and the geodesic-deviation operator of its
//! Jacobi metric `h = 2(E - U) g`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod conformal;
pub mod dynamics;
pub mod expr;
pub mod geometry;
pub mod jacobi;
pub mod numerics;
pub mod systems;
pub mod variation;

pub use error::{Error, Result};
