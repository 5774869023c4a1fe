//! Core model formulas: proportions, mutual attraction, cumulative
//! attraction, attraction potentials, and entrant choice probabilities.
//!
//! The model tracks `K` groups with member counts `n_k` and proportions
//! `pi_k = n_k / N`. Pairwise mutual attraction between groups `i` and `j`
//! is
//!
//! ```text
//! M_ij = (pi_i^2 + pi_j^2 - pi_i*pi_j) / (max(pi_i, pi_j) + smoothing)
//! ```
//!
//! with a small `smoothing > 0` in the denominator so that two empty groups
//! yield `M = 0` without a case split. Cumulative attraction is the row sum
//! `theta_k = sum_j M_kj` (self term included), the attraction potential is
//! `a_k = theta_k * pi_k^(-beta)`, and an entrant picks group `k` with
//! probability `p_k = (a_k + eps_k) / sum_j (a_j + eps_j)`.
//!
//! `beta > 0` favors small groups, `beta < 0` favors large ones. The
//! "reduced" variant replaces the state-dependent `theta_k` with a constant
//! scalar; it is the analytically tractable form used by the mean-field and
//! spectral modules.
//!
//! All functions here are pure and allocation-light; nothing is cached.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for simplex membership checks.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Default denominator smoothing for the mutual-attraction formula.
pub const DEFAULT_SMOOTHING: f64 = 1e-12;

/// Default floor applied to proportions before raising to `-beta`.
pub const DEFAULT_FLOOR: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Integer member counts per group; the raw stochastic state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCounts {
    counts: Vec<u64>,
    total: u64,
}

impl GroupCounts {
    /// Requires `K >= 2` and at least one member in total.
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 groups, got {}",
                counts.len()
            )));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::EmptyPopulation);
        }
        Ok(Self { counts, total })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn k_groups(&self) -> usize {
        self.counts.len()
    }

    /// Adds one member to group `k`.
    pub fn add_member(&mut self, k: usize) {
        self.counts[k] += 1;
        self.total += 1;
    }
}

/// Proportion vector on the (K-1)-simplex; the analytical state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexState {
    pub pi: Vec<f64>,
}

impl SimplexState {
    /// Validates simplex membership: entries nonnegative, sum within
    /// [`SIMPLEX_TOL`] of one.
    pub fn new(pi: Vec<f64>) -> Result<Self> {
        let state = Self { pi };
        state.validate()?;
        Ok(state)
    }

    /// Uniform state `pi_k = 1/K`.
    pub fn uniform(k_groups: usize) -> Self {
        Self {
            pi: vec![1.0 / k_groups as f64; k_groups],
        }
    }

    pub fn k_groups(&self) -> usize {
        self.pi.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.pi.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 groups, got {}",
                self.pi.len()
            )));
        }
        if let Some((i, &v)) = self.pi.iter().enumerate().find(|(_, &v)| v < 0.0) {
            return Err(Error::Domain {
                what: "SimplexState",
                detail: format!("pi[{i}] = {v} is negative"),
            });
        }
        let sum: f64 = self.pi.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain {
                what: "SimplexState",
                detail: format!("sum(pi) = {sum} deviates from 1 by more than {SIMPLEX_TOL}"),
            });
        }
        Ok(())
    }
}

/// How the per-group bias terms `eps_k` are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    /// Sample once per run and hold fixed.
    Frozen,
    /// Resample every time step.
    PerStep,
}

/// Specification of the additive bias terms `eps_k >= 0`.
///
/// Unless `explicit` values are given, each `eps_k` is drawn from
/// `N(mu, sigma^2)` truncated to `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec {
    pub mode: BiasMode,
    pub mu: f64,
    pub sigma: f64,
    pub explicit: Option<Vec<f64>>,
}

impl BiasSpec {
    pub fn frozen(mu: f64, sigma: f64) -> Self {
        Self {
            mode: BiasMode::Frozen,
            mu,
            sigma,
            explicit: None,
        }
    }

    pub fn explicit(values: Vec<f64>) -> Self {
        Self {
            mode: BiasMode::Frozen,
            mu: 0.0,
            sigma: 0.0,
            explicit: Some(values),
        }
    }

    /// Symmetric constant bias `eps_k = value` for all groups.
    pub fn symmetric(value: f64, k_groups: usize) -> Self {
        Self::explicit(vec![value; k_groups])
    }

    pub fn validate(&self, k_groups: usize) -> Result<()> {
        if self.sigma < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "bias sigma = {} must be >= 0",
                self.sigma
            )));
        }
        if let Some(eps) = &self.explicit {
            if eps.len() != k_groups {
                return Err(Error::InvalidConfig(format!(
                    "explicit bias has {} entries, expected {k_groups}",
                    eps.len()
                )));
            }
            if let Some((i, &v)) = eps.iter().enumerate().find(|(_, &v)| v < 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "explicit bias[{i}] = {v} is negative"
                )));
            }
        }
        Ok(())
    }

    /// The bias vector used by the deterministic analysis modules: explicit
    /// values when given, otherwise the constant `mu` (sigma ignored).
    pub fn deterministic_eps(&self, k_groups: usize) -> Result<Vec<f64>> {
        self.validate(k_groups)?;
        match &self.explicit {
            Some(eps) => Ok(eps.clone()),
            None => {
                if self.mu < 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "deterministic bias mu = {} must be >= 0",
                        self.mu
                    )));
                }
                Ok(vec![self.mu; k_groups])
            }
        }
    }
}

/// Whether the attraction potential uses the state-dependent cumulative
/// attraction (`Full`) or a constant scalar theta (`Reduced`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttractionMode {
    Full,
    Reduced,
}

/// Model parameters shared by every module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Size-bias exponent; may be negative.
    pub beta: f64,
    pub attraction_mode: AttractionMode,
    /// Constant theta, used only in `Reduced` mode.
    pub theta_scalar: f64,
    pub bias: BiasSpec,
    /// Denominator smoothing of the mutual-attraction formula.
    pub smoothing: f64,
    /// Floor applied to proportions before raising to `-beta`.
    pub floor: f64,
}

impl ModelParams {
    /// Full-mode parameters with the default smoothing constants.
    pub fn full(beta: f64, bias: BiasSpec) -> Self {
        Self {
            beta,
            attraction_mode: AttractionMode::Full,
            theta_scalar: 1.0,
            bias,
            smoothing: DEFAULT_SMOOTHING,
            floor: DEFAULT_FLOOR,
        }
    }

    /// Reduced-mode parameters with constant `theta`.
    pub fn reduced(theta: f64, beta: f64, bias: BiasSpec) -> Self {
        Self {
            beta,
            attraction_mode: AttractionMode::Reduced,
            theta_scalar: theta,
            bias,
            smoothing: DEFAULT_SMOOTHING,
            floor: DEFAULT_FLOOR,
        }
    }

    pub fn validate(&self, k_groups: usize) -> Result<()> {
        if k_groups < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 groups, got {k_groups}"
            )));
        }
        if !(self.smoothing > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "smoothing = {} must be > 0",
                self.smoothing
            )));
        }
        if !(self.floor > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "floor = {} must be > 0",
                self.floor
            )));
        }
        if self.attraction_mode == AttractionMode::Reduced && !(self.theta_scalar > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "theta_scalar = {} must be > 0 in reduced mode",
                self.theta_scalar
            )));
        }
        self.bias.validate(k_groups)
    }
}

/// Symmetric K x K matrix of pairwise mutual attractions.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractionMatrix {
    dim: usize,
    m: Vec<f64>,
}

impl AttractionMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.dim + j]
    }

    /// Row `k` as a slice.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.m[k * self.dim..(k + 1) * self.dim]
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// `pi_k = n_k / N`.
pub fn proportions(counts: &GroupCounts) -> SimplexState {
    let total = counts.total() as f64;
    SimplexState {
        pi: counts.counts().iter().map(|&n| n as f64 / total).collect(),
    }
}

/// Proportions of real-valued group sizes (redistribution process).
pub fn proportions_real(sizes: &[f64]) -> Result<SimplexState> {
    let total: f64 = sizes.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyPopulation);
    }
    Ok(SimplexState {
        pi: sizes.iter().map(|&n| n / total).collect(),
    })
}

/// Smoothed mutual attraction `(x^2 + y^2 - xy) / (max(x, y) + smoothing)`.
///
/// As `smoothing -> 0` this recovers the case-split form: `0` when both
/// arguments are zero, and `y` when `x = 0` (an empty group still feels a
/// populated one).
pub fn mutual_attraction(x: f64, y: f64, smoothing: f64) -> f64 {
    (x * x + y * y - x * y) / (x.max(y) + smoothing)
}

/// Pairwise mutual attractions for every group pair, including `M_kk = pi_k`
/// (up to smoothing).
pub fn attraction_matrix(state: &SimplexState, smoothing: f64) -> AttractionMatrix {
    attraction_matrix_raw(&state.pi, smoothing)
}

/// [`attraction_matrix`] on a raw proportion slice; used when evaluating the
/// choice map slightly off the simplex (finite-difference stencils).
pub fn attraction_matrix_raw(pi: &[f64], smoothing: f64) -> AttractionMatrix {
    let dim = pi.len();
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = mutual_attraction(pi[i], pi[i], smoothing);
        for j in (i + 1)..dim {
            let v = mutual_attraction(pi[i], pi[j], smoothing);
            m[i * dim + j] = v;
            m[j * dim + i] = v;
        }
    }
    AttractionMatrix { dim, m }
}

/// Row sums `theta_k = sum_j M_kj`, self term included.
pub fn cumulative_attraction(m: &AttractionMatrix) -> Vec<f64> {
    (0..m.dim()).map(|k| m.row(k).iter().sum()).collect()
}

/// `a_k = theta_k * max(pi_k, floor)^(-beta)`.
///
/// The floor keeps the power finite at `pi_k = 0` for `beta > 0`; negative
/// `beta` needs no guard but goes through the same expression.
pub fn attraction_potential(theta: &[f64], state: &SimplexState, beta: f64, floor: f64) -> Vec<f64> {
    attraction_potential_raw(theta, &state.pi, beta, floor)
}

pub fn attraction_potential_raw(theta: &[f64], pi: &[f64], beta: f64, floor: f64) -> Vec<f64> {
    debug_assert_eq!(theta.len(), pi.len());
    theta
        .iter()
        .zip(pi)
        .map(|(&t, &p)| t * p.max(floor).powf(-beta))
        .collect()
}

/// `p_k = (a_k + eps_k) / sum_j (a_j + eps_j)`.
pub fn choice_probabilities(a: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), eps.len());
    let denom: f64 = a.iter().zip(eps).map(|(&ak, &ek)| ak + ek).sum();
    if !(denom > 0.0) {
        return Err(Error::DegenerateAttraction);
    }
    Ok(a.iter().zip(eps).map(|(&ak, &ek)| (ak + ek) / denom).collect())
}

/// Choice probabilities of the reduced model with constant scalar theta:
/// `p_k = (theta * max(pi_k, floor)^(-beta) + eps_k) / sum_j (...)`.
pub fn reduced_choice_probabilities(
    state: &SimplexState,
    theta: f64,
    beta: f64,
    eps: &[f64],
    floor: f64,
) -> Result<Vec<f64>> {
    let theta_vec = vec![theta; state.k_groups()];
    let a = attraction_potential_raw(&theta_vec, &state.pi, beta, floor);
    choice_probabilities(&a, eps)
}

/// Everything the choice pipeline produces for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoicePipeline {
    /// Cumulative attractions (constant `theta_scalar` in reduced mode).
    pub theta: Vec<f64>,
    /// Attraction potentials `a_k`.
    pub potential: Vec<f64>,
    /// Choice probabilities `p_k`.
    pub probs: Vec<f64>,
}

/// Runs the full pipeline for the configured attraction mode.
pub fn choice_pipeline(params: &ModelParams, state: &SimplexState, eps: &[f64]) -> Result<ChoicePipeline> {
    choice_pipeline_raw(params, &state.pi, eps)
}

/// [`choice_pipeline`] on a raw proportion slice (no simplex requirement).
pub fn choice_pipeline_raw(params: &ModelParams, pi: &[f64], eps: &[f64]) -> Result<ChoicePipeline> {
    let theta = match params.attraction_mode {
        AttractionMode::Full => {
            let m = attraction_matrix_raw(pi, params.smoothing);
            cumulative_attraction(&m)
        }
        AttractionMode::Reduced => vec![params.theta_scalar; pi.len()],
    };
    let potential = attraction_potential_raw(&theta, pi, params.beta, params.floor);
    let probs = choice_probabilities(&potential, eps)?;
    Ok(ChoicePipeline {
        theta,
        potential,
        probs,
    })
}

// ---------------------------------------------------------------------------
// Closed-form derivatives of the reduced attraction surface
// M(x, y) = x^2/y - x + y on 0 < x <= y
// ---------------------------------------------------------------------------

fn check_ordered_domain(what: &'static str, x: f64, y: f64) -> Result<()> {
    if y <= 0.0 {
        return Err(Error::Domain {
            what,
            detail: format!("y = {y} must be > 0"),
        });
    }
    if !(x > 0.0 && x <= y && y <= 1.0) {
        return Err(Error::Domain {
            what,
            detail: format!("expected 0 < x <= y <= 1, got x = {x}, y = {y}"),
        });
    }
    Ok(())
}

/// Gradient `(2x/y - 1, 1 - x^2/y^2)` of `M(x, y) = x^2/y - x + y`.
pub fn gradient_of_m(x: f64, y: f64) -> Result<[f64; 2]> {
    check_ordered_domain("gradient_of_m", x, y)?;
    Ok([2.0 * x / y - 1.0, 1.0 - (x * x) / (y * y)])
}

/// Hessian `[[2/y, -2x/y^2], [-2x/y^2, 2x^2/y^3]]` of `M(x, y)`.
///
/// Equal to `(2/y^3) * (y, -x)(y, -x)^T`: positive semidefinite of rank one,
/// with flat direction `(x, y)`.
pub fn hessian_of_m(x: f64, y: f64) -> Result<[[f64; 2]; 2]> {
    check_ordered_domain("hessian_of_m", x, y)?;
    let off = -2.0 * x / (y * y);
    Ok([[2.0 / y, off], [off, 2.0 * x * x / (y * y * y)]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn assert_simplex(p: &[f64], tol: f64) {
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() <= tol, "sum = {sum}");
        for &v in p {
            assert!((0.0..=1.0 + tol).contains(&v), "entry {v} out of [0,1]");
        }
    }

    #[test]
    fn proportions_direct_ratio() {
        let c = GroupCounts::new(vec![6, 5]).unwrap();
        let s = proportions(&c);
        assert_abs_diff_eq!(s.pi[0], 6.0 / 11.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.pi[1], 5.0 / 11.0, epsilon = 1e-15);
        s.validate().unwrap();
    }

    #[test]
    fn proportions_symmetric() {
        let c = GroupCounts::new(vec![10; 5]).unwrap();
        let s = proportions(&c);
        for &v in &s.pi {
            assert_abs_diff_eq!(v, 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn proportions_heterogeneous_subtotal() {
        // First five groups of a K=5 slice with subtotal 31.
        let c = GroupCounts::new(vec![7, 4, 8, 5, 7]).unwrap();
        assert_eq!(c.total(), 31);
        let s = proportions(&c);
        let expected = [7.0 / 31.0, 4.0 / 31.0, 8.0 / 31.0, 5.0 / 31.0, 7.0 / 31.0];
        for (got, want) in s.pi.iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn empty_population_rejected() {
        assert!(matches!(
            GroupCounts::new(vec![0, 0]),
            Err(Error::EmptyPopulation)
        ));
    }

    #[test]
    fn single_group_rejected() {
        assert!(GroupCounts::new(vec![5]).is_err());
    }

    #[test]
    fn mutual_attraction_limit_values() {
        let s = 1e-12;
        // M(x, x) = x.
        assert_abs_diff_eq!(mutual_attraction(0.5, 0.5, s), 0.5, epsilon = 10.0 * s);
        // One empty group feels the other: M(0, y) = y.
        assert_abs_diff_eq!(mutual_attraction(0.0, 0.3, s), 0.3, epsilon = 10.0 * s);
        // Direct evaluation: (0.04 + 0.16 - 0.08) / 0.4.
        assert_abs_diff_eq!(mutual_attraction(0.2, 0.4, s), 0.3, epsilon = 10.0 * s);
        // Two empty groups exert no attraction.
        assert_eq!(mutual_attraction(0.0, 0.0, s), 0.0);
    }

    #[test]
    fn attraction_matrix_two_groups() {
        let s = SimplexState::new(vec![0.75, 0.25]).unwrap();
        let m = attraction_matrix(&s, 1e-12);
        assert_abs_diff_eq!(m.get(0, 0), 0.75, epsilon = 1e-11);
        assert_abs_diff_eq!(m.get(1, 1), 0.25, epsilon = 1e-11);
        let m12 = (0.75f64.powi(2) + 0.25f64.powi(2) - 0.75 * 0.25) / 0.75;
        assert_abs_diff_eq!(m.get(0, 1), m12, epsilon = 1e-11);
        assert_abs_diff_eq!(m12, 0.58333, epsilon = 1e-5);
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn attraction_matrix_uniform_entries() {
        for k in [2usize, 5, 9] {
            let s = SimplexState::uniform(k);
            let m = attraction_matrix(&s, 1e-12);
            for i in 0..k {
                for j in 0..k {
                    assert_abs_diff_eq!(m.get(i, j), 1.0 / k as f64, epsilon = 1e-11);
                }
            }
        }
    }

    #[test]
    fn attraction_matrix_empty_group_rule() {
        let s = SimplexState::new(vec![1.0, 0.0]).unwrap();
        let m = attraction_matrix(&s, 1e-12);
        assert_abs_diff_eq!(m.get(0, 0), 1.0, epsilon = 1e-11);
        assert_abs_diff_eq!(m.get(0, 1), 1.0, epsilon = 1e-11);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn cumulative_attraction_examples() {
        let uniform = SimplexState::uniform(5);
        let theta = cumulative_attraction(&attraction_matrix(&uniform, 1e-12));
        for t in &theta {
            assert_abs_diff_eq!(*t, 1.0, epsilon = 1e-10);
        }

        let s = SimplexState::new(vec![0.75, 0.25]).unwrap();
        let theta = cumulative_attraction(&attraction_matrix(&s, 1e-12));
        assert_abs_diff_eq!(theta[0], 4.0 / 3.0, epsilon = 1e-5);
        assert_abs_diff_eq!(theta[1], 5.0 / 6.0, epsilon = 1e-5);

        let s = SimplexState::new(vec![1.0, 0.0]).unwrap();
        let theta = cumulative_attraction(&attraction_matrix(&s, 1e-12));
        assert_abs_diff_eq!(theta[0], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(theta[1], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn attraction_potential_examples() {
        let uniform = SimplexState::uniform(4);
        let a = attraction_potential(&[1.0; 4], &uniform, 1.0, 1e-9);
        for v in &a {
            assert_abs_diff_eq!(*v, 4.0, epsilon = 1e-12);
        }

        // beta = 0 returns theta unchanged, exactly.
        let theta = [1.7, 0.2, 3.0];
        let s = SimplexState::new(vec![0.2, 0.3, 0.5]).unwrap();
        let a = attraction_potential(&theta, &s, 0.0, 1e-9);
        assert_eq!(a, theta.to_vec());

        let s = SimplexState::new(vec![0.75, 0.25]).unwrap();
        let a = attraction_potential(&[4.0 / 3.0, 5.0 / 6.0], &s, 1.0, 1e-9);
        assert_abs_diff_eq!(a[0], 16.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], 10.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn choice_probabilities_examples() {
        let p = choice_probabilities(&[4.0; 4], &[0.1; 4]).unwrap();
        for v in &p {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
        }

        let p = choice_probabilities(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert_abs_diff_eq!(p[0], 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 2.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[2], 3.0 / 6.0, epsilon = 1e-15);

        // Continuation of the pi = (0.75, 0.25), beta = 1 pipeline.
        let p = choice_probabilities(&[16.0 / 9.0, 10.0 / 3.0], &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], 0.34783, epsilon = 1e-5);
        assert_abs_diff_eq!(p[1], 0.65217, epsilon = 1e-5);
    }

    #[test]
    fn choice_probabilities_zero_denominator() {
        assert!(matches!(
            choice_probabilities(&[0.0, 0.0], &[0.0, 0.0]),
            Err(Error::DegenerateAttraction)
        ));
    }

    #[test]
    fn reduced_choice_examples() {
        let s = SimplexState::uniform(7);
        let p = reduced_choice_probabilities(&s, 1.0, 0.7, &[0.4; 7], 1e-9).unwrap();
        for v in &p {
            assert_abs_diff_eq!(*v, 1.0 / 7.0, epsilon = 1e-14);
        }

        let s = SimplexState::new(vec![0.5, 0.5]).unwrap();
        let p = reduced_choice_probabilities(&s, 1.0, 1.0, &[1.0, 1.0], 1e-9).unwrap();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-15);

        let s = SimplexState::new(vec![0.8, 0.2]).unwrap();
        let p = reduced_choice_probabilities(&s, 1.0, 1.0, &[1.0, 1.0], 1e-9).unwrap();
        assert_abs_diff_eq!(p[0], 2.25 / 8.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 6.0 / 8.25, epsilon = 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let g = gradient_of_m(0.25, 0.5).unwrap();
        assert_abs_diff_eq!(g[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.75, epsilon = 1e-15);

        let g = gradient_of_m(0.5, 0.5).unwrap();
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-15);

        let g = gradient_of_m(0.1, 0.4).unwrap();
        assert_abs_diff_eq!(g[0], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.9375, epsilon = 1e-15);

        assert!(gradient_of_m(0.1, 0.0).is_err());
        assert!(gradient_of_m(0.5, 0.4).is_err());
    }

    #[test]
    fn hessian_examples() {
        let h = hessian_of_m(0.25, 0.5).unwrap();
        assert_eq!(h, [[4.0, -2.0], [-2.0, 1.0]]);
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        assert_abs_diff_eq!(det, 0.0, epsilon = 1e-14);

        let h = hessian_of_m(0.5, 0.5).unwrap();
        assert_eq!(h, [[4.0, -4.0], [-4.0, 4.0]]);
    }

    #[test]
    fn hessian_flat_direction() {
        // v = (x, y) gives v^T H v = (2/y^3)(xy - yx)^2 = 0.
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..200 {
            let y: f64 = rng.random_range(0.05..1.0);
            let x: f64 = rng.random_range(0.01..=y);
            let h = hessian_of_m(x, y).unwrap();
            let q = x * (h[0][0] * x + h[0][1] * y) + y * (h[1][0] * x + h[1][1] * y);
            let scale = h[0][0].abs().max(h[1][1].abs());
            assert!(q.abs() <= 1e-12 * scale.max(1.0), "q = {q}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = |x: f64, y: f64| x * x / y - x + y;
        let step = 1e-5;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        for _ in 0..200 {
            let y: f64 = rng.random_range(0.1..0.99);
            let x: f64 = rng.random_range(0.05..=y.min(0.98));
            let g = gradient_of_m(x, y).unwrap();
            let gx = (m(x + step, y) - m(x - step, y)) / (2.0 * step);
            let gy = (m(x, y + step) - m(x, y - step)) / (2.0 * step);
            assert_abs_diff_eq!(g[0], gx, epsilon = 1e-6);
            assert_abs_diff_eq!(g[1], gy, epsilon = 1e-6);
        }
    }

    #[test]
    fn hessian_psd_on_grid() {
        // 99 x 99 interior grid, ordered so x <= y; the Hessian must be PSD
        // with |det| below 1e-9 * |H|^2 and 100 random quadratic forms
        // nonnegative at each point.
        let n = 99;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let dirs: Vec<[f64; 2]> = (0..100)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        for i in 1..=n {
            for j in i..=n {
                let x = i as f64 / (n + 1) as f64;
                let y = j as f64 / (n + 1) as f64;
                let h = hessian_of_m(x, y).unwrap();
                let norm2 = h.iter().flatten().map(|v| v * v).sum::<f64>();
                let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
                assert!(det.abs() < 1e-9 * norm2, "det = {det} at ({x}, {y})");
                for v in &dirs {
                    let q = v[0] * (h[0][0] * v[0] + h[0][1] * v[1])
                        + v[1] * (h[1][0] * v[0] + h[1][1] * v[1]);
                    assert!(q >= -1e-12, "v^T H v = {q} at ({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn pipeline_full_matches_manual_composition() {
        let params = ModelParams::full(0.8, BiasSpec::symmetric(0.3, 3));
        let s = SimplexState::new(vec![0.5, 0.3, 0.2]).unwrap();
        let out = choice_pipeline(&params, &s, &[0.3; 3]).unwrap();
        let m = attraction_matrix(&s, params.smoothing);
        let theta = cumulative_attraction(&m);
        let a = attraction_potential(&theta, &s, params.beta, params.floor);
        let p = choice_probabilities(&a, &[0.3; 3]).unwrap();
        assert_eq!(out.theta, theta);
        assert_eq!(out.potential, a);
        assert_eq!(out.probs, p);
    }

    #[test]
    fn choice_probabilities_simplex_1000_random_inputs() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let k = rng.random_range(2..12);
            let a: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..10.0)).collect();
            let eps: Vec<f64> = (0..k).map(|_| rng.random_range(0.001..1.0)).collect();
            let p = choice_probabilities(&a, &eps).unwrap();
            assert_simplex(&p, 1e-12);
            assert!(p.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn attraction_matrix_symmetry_random_states() {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(5);
        for _ in 0..200 {
            let k = rng.random_range(2..10);
            let mut pi: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
            let sum: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|v| *v /= sum);
            let m = attraction_matrix_raw(&pi, 1e-12);
            for i in 0..k {
                for j in 0..k {
                    assert!((m.get(i, j) - m.get(j, i)).abs() <= 1e-14);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn mutual_attraction_commutes(x in 0.0..1.0f64, y in 0.0..1.0f64, s in 1e-13..1e-6f64) {
            prop_assert_eq!(mutual_attraction(x, y, s), mutual_attraction(y, x, s));
        }

        #[test]
        fn mutual_attraction_homogeneous(
            x in 0.01..1.0f64,
            y in 0.01..1.0f64,
            c in 0.1..1.0f64,
        ) {
            // Degree-one homogeneity in the smoothing -> 0 limit.
            let lhs = mutual_attraction(c * x, c * y, 0.0);
            let rhs = c * mutual_attraction(x, y, 0.0);
            prop_assert!((lhs - rhs).abs() <= 1e-12);
        }

        #[test]
        fn potential_beta_zero_is_identity(
            theta in proptest::collection::vec(0.0..5.0f64, 2..8),
        ) {
            let k = theta.len();
            let s = SimplexState::uniform(k);
            let a = attraction_potential(&theta, &s, 0.0, 1e-9);
            prop_assert_eq!(a, theta);
        }
    }
}
