//! Numerical laboratory for boundary-layer bubbles of supercritical
//! Lane–Emden systems on the critical hyperbola.

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod cli;
pub mod domain_green;
pub mod energy_constants;
pub mod error;
pub mod exponents;
pub mod ground_state;
pub mod linearization;
pub mod ode;
pub mod projection;
pub mod quadrature;
pub mod reduced_energy;

pub use error::{LabError, Result};
