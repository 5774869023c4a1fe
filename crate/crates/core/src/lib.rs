//! Simulation and equilibrium-analysis toolkit for a probabilistic
//! group-formation model: `K` groups compete for sequentially arriving
//! entrants through mutual-attraction scores modulated by an inverse-size
//! bias.
//!
//! Modules:
//! - [`model`]: pure evaluation of the model formulas and their closed-form
//!   derivatives.
//! - [`sim`]: the seeded entrant Markov process, the redistribution variant,
//!   ensembles, and drift estimation.
//! - [`meanfield`]: the limiting ODE, fixed-point solving, and the
//!   first-order equilibrium expansion.
//! - [`spectral`]: Jacobians, eigendecomposition of `J - I`, stability
//!   classification, and the Hessian degeneracy survey.
//! - [`experiments`]: canned reproducible scenarios with summary tables.

// Guards of the form `!(x > 0.0)` deliberately reject NaN along with the
// out-of-range values; the positive comparison spells the accepted domain.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod meanfield;
pub mod model;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
