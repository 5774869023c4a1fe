//! Deterministic analysis of the limiting dynamics `dpi/dt = p(pi) - pi`:
//! fixed-step RK4 integration, damped fixed-point solving, and the
//! first-order expansion of equilibria under small bias asymmetries.
//!
//! The bias vector used here is deterministic: explicit values when the
//! [`BiasSpec`](crate::model::BiasSpec) carries them, otherwise the constant
//! `mu` (sampling noise is a simulation concern, not an analysis one).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{choice_pipeline_raw, ModelParams, SimplexState};
use crate::sim::Trajectory;

/// Outcome of the damped fixed-point iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub pi_star: SimplexState,
    /// `max_k |p_k(pi*) - pi_k*|` at the returned iterate.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Inputs to the first-order equilibrium expansion around the uniform state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationInput {
    pub theta: f64,
    pub beta: f64,
    /// Symmetric base bias `eps`.
    pub eps_base: f64,
    /// Zero-sum bias perturbations `eta_k` (so `eps_k = eps_base + eta_k`).
    pub eta_perturb: Vec<f64>,
    pub k_groups: usize,
}

/// Proportions clamped to `[0, inf)` for pipeline evaluation slightly off
/// the simplex (RK4 stage states).
fn clamped_probs(params: &ModelParams, pi: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    let clamped: Vec<f64> = pi.iter().map(|&v| v.max(0.0)).collect();
    Ok(choice_pipeline_raw(params, &clamped, eps)?.probs)
}

/// Drift `f_k = p_k(pi) - pi_k` of the limiting ODE. The components sum to
/// zero on the simplex since both `p` and `pi` sum to one.
pub fn drift(state: &SimplexState, params: &ModelParams) -> Result<Vec<f64>> {
    state.validate()?;
    let eps = params.bias.deterministic_eps(state.k_groups())?;
    let p = clamped_probs(params, &state.pi, &eps)?;
    Ok(p.iter().zip(&state.pi).map(|(&pk, &k)| pk - k).collect())
}

fn drift_raw(params: &ModelParams, pi: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    let p = clamped_probs(params, pi, eps)?;
    Ok(p.iter().zip(pi).map(|(&pk, &k)| pk - k).collect())
}

/// Clamps negatives to zero and rescales onto the simplex; returns the
/// infinity-norm of the applied correction.
fn renormalize(pi: &mut [f64]) -> f64 {
    let mut clamped = false;
    for v in pi.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
            clamped = true;
        }
    }
    let sum: f64 = pi.iter().sum();
    let mut correction: f64 = if clamped { f64::MIN_POSITIVE } else { 0.0 };
    if sum > 0.0 && sum != 1.0 {
        for v in pi.iter_mut() {
            let new = *v / sum;
            correction = correction.max((new - *v).abs());
            *v = new;
        }
    }
    correction
}

/// Classical fixed-step RK4 on `dpi/dt = p(pi) - pi`, renormalizing onto the
/// simplex after every step (the applied correction is tracked on the
/// returned trajectory). Integrates `ceil(t_end / dt)` steps.
pub fn integrate_ode(
    state0: &SimplexState,
    params: &ModelParams,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidConfig(format!("dt = {dt} must be > 0")));
    }
    if t_end < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "t_end = {t_end} must be >= 0"
        )));
    }
    state0.validate()?;
    params.validate(state0.k_groups())?;
    let eps = params.bias.deterministic_eps(state0.k_groups())?;

    let n_steps = (t_end / dt - 1e-9).ceil().max(0.0) as u64;
    let lo = -10.0 * dt;
    let hi = 1.0 + 10.0 * dt;

    let mut traj = Trajectory::new();
    let mut pi = state0.pi.clone();

    let record = |traj: &mut Trajectory, pi: &[f64], t: f64| -> Result<()> {
        let pipeline = choice_pipeline_raw(params, pi, &eps)?;
        traj.push(t, None, pi, &pipeline, None);
        Ok(())
    };
    record(&mut traj, &pi, 0.0)?;

    let k = pi.len();
    for step in 1..=n_steps {
        let k1 = drift_raw(params, &pi, &eps)?;
        let mut y = vec![0.0; k];
        for i in 0..k {
            y[i] = pi[i] + 0.5 * dt * k1[i];
        }
        let k2 = drift_raw(params, &y, &eps)?;
        for i in 0..k {
            y[i] = pi[i] + 0.5 * dt * k2[i];
        }
        let k3 = drift_raw(params, &y, &eps)?;
        for i in 0..k {
            y[i] = pi[i] + dt * k3[i];
        }
        let k4 = drift_raw(params, &y, &eps)?;
        for i in 0..k {
            pi[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }

        let t = step as f64 * dt;
        if let Some((i, &v)) = pi.iter().enumerate().find(|(_, &v)| v < lo || v > hi) {
            return Err(Error::Instability { t, index: i, value: v });
        }
        let correction = renormalize(&mut pi);
        traj.max_renorm_correction = traj.max_renorm_correction.max(correction);
        record(&mut traj, &pi, t)?;
    }
    Ok(traj)
}

/// Damped self-map iteration `pi <- normalize((1 - relax) pi + relax p(pi))`
/// until `max_k |p_k - pi_k| <= tol` or `max_iter` is reached. On
/// non-convergence the best iterate seen is returned with
/// `converged = false`; it is never silently retried.
pub fn solve_fixed_point(
    params: &ModelParams,
    initial: &SimplexState,
    relax: f64,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointResult> {
    if !(relax > 0.0 && relax <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "relax = {relax} must be in (0, 1]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidConfig(format!("tol = {tol} must be > 0")));
    }
    initial.validate()?;
    params.validate(initial.k_groups())?;
    let eps = params.bias.deterministic_eps(initial.k_groups())?;

    let mut pi = initial.pi.clone();
    let mut best_pi = pi.clone();
    let mut best_residual = f64::INFINITY;

    for iter in 0..max_iter {
        let p = clamped_probs(params, &pi, &eps)?;
        let residual = p
            .iter()
            .zip(&pi)
            .map(|(&a, &b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual < best_residual {
            best_residual = residual;
            best_pi.copy_from_slice(&pi);
        }
        if residual <= tol {
            return Ok(FixedPointResult {
                pi_star: SimplexState { pi: best_pi },
                residual_norm: best_residual,
                iterations: iter,
                converged: true,
            });
        }
        for (v, &pk) in pi.iter_mut().zip(&p) {
            *v = (1.0 - relax) * *v + relax * pk;
        }
        renormalize(&mut pi);
    }

    Ok(FixedPointResult {
        pi_star: SimplexState { pi: best_pi },
        residual_norm: best_residual,
        iterations: max_iter,
        converged: false,
    })
}

/// Convenience wrapper with the default iteration settings
/// (`relax = 0.5`, `tol = 1e-12`, `max_iter = 10^5`).
pub fn solve_fixed_point_default(
    params: &ModelParams,
    initial: &SimplexState,
) -> Result<FixedPointResult> {
    solve_fixed_point(params, initial, 0.5, 1e-12, 100_000)
}

/// First-order equilibrium under a zero-sum bias perturbation:
///
/// ```text
/// pi_k* = 1/K + eta_k / (theta K^(beta+1) (1 + beta) + K eps)
/// ```
pub fn first_order_equilibrium(input: &PerturbationInput) -> Result<SimplexState> {
    let k = input.k_groups;
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 groups, got {k}"
        )));
    }
    if input.eta_perturb.len() != k {
        return Err(Error::InvalidConfig(format!(
            "eta has {} entries, expected {k}",
            input.eta_perturb.len()
        )));
    }
    let eta_sum: f64 = input.eta_perturb.iter().sum();
    if eta_sum.abs() > 1e-12 {
        return Err(Error::InvalidConfig(format!(
            "eta must sum to zero, got {eta_sum}"
        )));
    }
    let kf = k as f64;
    let denominator =
        input.theta * kf.powf(input.beta + 1.0) * (1.0 + input.beta) + kf * input.eps_base;
    if !(denominator > 0.0) {
        return Err(Error::DegenerateExpansion { denominator });
    }
    Ok(SimplexState {
        pi: input
            .eta_perturb
            .iter()
            .map(|&eta| 1.0 / kf + eta / denominator)
            .collect(),
    })
}
