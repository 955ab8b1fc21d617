//! Homogeneous Lie groups, explicit fundamental solutions of constant
//! coefficient Kolmogorov operators, and Monte-Carlo checks of mean value
//! formulas on their superlevel sets.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod integrate;
pub mod group;
pub mod kolmo;
pub mod mvf;
pub mod poly;
pub mod quadrature;
pub mod ratmat;
pub mod reach;

pub use error::{Error, Result};
pub use group::{GroupSpec, Point};
pub use kolmo::{Diffusion, Fundamental, KolmogorovSpec, OperatorSpec};
