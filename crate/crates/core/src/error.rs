//! Error type shared by all analysis and simulation modules.

use thiserror::Error;

/// Errors produced by model evaluation, simulation, and analysis.
#[derive(Debug, Error)]
pub enum Error {
    /// Proportions requested for a population with no members.
    #[error("empty population: total member count is zero")]
    EmptyPopulation,

    /// The choice-probability denominator vanished (all potentials and
    /// biases zero).
    #[error("degenerate attraction: sum of potentials and biases is zero")]
    DegenerateAttraction,

    /// An input fell outside the domain of a closed-form expression.
    #[error("domain error in {what}: {detail}")]
    Domain { what: &'static str, detail: String },

    /// Truncated-normal sampling with sigma = 0 and mu < 0 has empty support.
    #[error("empty support: sigma = 0 with mu = {mu} < 0 leaves no mass on [0, inf)")]
    EmptySupport { mu: f64 },

    /// Configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An ODE trajectory left the admissible bounds.
    #[error("integration instability at t = {t}: component {index} = {value}")]
    Instability { t: f64, index: usize, value: f64 },

    /// A finite-difference stencil would cross the simplex boundary.
    #[error("state too close to simplex boundary: pi[{index}] = {value} < {required}")]
    BoundaryProximity {
        index: usize,
        value: f64,
        required: f64,
    },

    /// Eigendecomposition iteration failed to meet the residual contract.
    #[error("eigendecomposition did not converge after {iterations} iterations{}", detail.as_deref().map(|d| format!(": {d}")).unwrap_or_default())]
    EigenNoConvergence {
        iterations: usize,
        detail: Option<String>,
    },

    /// Eigenvector matrix is too ill-conditioned for modal superposition.
    #[error("ill-conditioned eigenvector matrix (cond = {cond:.3e}); matrix is near-defective, a direct matrix-exponential fallback is required")]
    IllConditionedDecomposition { cond: f64 },

    /// The first-order expansion denominator vanished.
    #[error("degenerate expansion: theta*(1+beta)*K^(beta+1) + K*eps = {denominator}")]
    DegenerateExpansion { denominator: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
