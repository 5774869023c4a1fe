//! Sequential-entrant Markov process and the deterministic
//! redistribution variant, with seeded reproducible randomness.
//!
//! Entrant mode adds one member per step: the entrant sees the current
//! proportions, the choice pipeline turns them into probabilities, and a
//! single uniform draw picks the group by inverse CDF. The implied
//! proportion update is
//!
//! ```text
//! pi_k(t+1) = (N(t) * pi_k(t) + 1{chosen = k}) / (N(t) + 1)
//! ```
//!
//! a stochastic-approximation step with decreasing gain `1/(N(t)+1)`.
//!
//! Redistribution mode grows the population by a fraction `eta` per step and
//! lets existing members flow toward the target mix `N * p` under a damping
//! factor; with a frozen bias vector it is fully deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{concentration_stats, ConcentrationStats};
use crate::model::{
    choice_pipeline_raw, proportions, proportions_real, BiasMode, ChoicePipeline, GroupCounts,
    ModelParams,
};

/// Identifier of the pseudo-random generator, recorded in output metadata so
/// trajectories can be reproduced.
pub const RNG_ALGORITHM: &str = "chacha12:seed_from_u64";

/// Initial group sizes: explicit counts or a uniform integer range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    Counts(Vec<u64>),
    /// Each group size drawn uniformly from `lo..=hi` (requires `lo >= 1`).
    Range { lo: u64, hi: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Entrant,
    Redistribution,
}

/// Configuration of a single simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub k_groups: usize,
    pub t_steps: u64,
    pub params: ModelParams,
    pub init: InitSpec,
    pub seed: u64,
    pub process: ProcessKind,
    /// Entrant fraction per redistribution step.
    pub eta_frac: f64,
    /// Damping of the switching flow per redistribution step.
    pub damping: f64,
    /// Trajectory sampling stride; `None` picks 1 for runs up to 10^4 steps
    /// and `ceil(T / 10^4)` beyond that.
    pub record_every: Option<u64>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate(self.k_groups)?;
        match &self.init {
            InitSpec::Counts(c) => {
                if c.len() != self.k_groups {
                    return Err(Error::InvalidConfig(format!(
                        "init has {} groups, expected {}",
                        c.len(),
                        self.k_groups
                    )));
                }
                if c.iter().sum::<u64>() == 0 {
                    return Err(Error::InvalidConfig(
                        "initial population must be >= 1".into(),
                    ));
                }
            }
            InitSpec::Range { lo, hi } => {
                if *lo < 1 {
                    return Err(Error::InvalidConfig(format!(
                        "init range lo = {lo} must be >= 1"
                    )));
                }
                if lo > hi {
                    return Err(Error::InvalidConfig(format!(
                        "init range lo = {lo} exceeds hi = {hi}"
                    )));
                }
            }
        }
        if self.process == ProcessKind::Redistribution {
            if !(self.eta_frac > 0.0 && self.eta_frac < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "eta_frac = {} must be in (0, 1)",
                    self.eta_frac
                )));
            }
            if !(self.damping > 0.0 && self.damping <= 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "damping = {} must be in (0, 1]",
                    self.damping
                )));
            }
        }
        if self.record_every == Some(0) {
            return Err(Error::InvalidConfig("record_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn resolved_record_every(&self) -> u64 {
        match self.record_every {
            Some(r) => r,
            None => {
                if self.t_steps <= 10_000 {
                    1
                } else {
                    self.t_steps.div_ceil(10_000)
                }
            }
        }
    }

    fn draw_init(&self, rng: &mut ChaCha12Rng) -> Vec<u64> {
        match &self.init {
            InitSpec::Counts(c) => c.clone(),
            InitSpec::Range { lo, hi } => (0..self.k_groups)
                .map(|_| rng.random_range(*lo..=*hi))
                .collect(),
        }
    }
}

/// Time-indexed record of a run: states plus the pipeline quantities
/// evaluated at each recorded state.
///
/// `counts` holds integer member counts in entrant mode (stored as `f64`),
/// real-valued sizes in redistribution mode, and is empty for ODE
/// trajectories. `chosen` is the entrant's choice at that step (`None` at
/// `t = 0` and outside entrant mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub counts: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub potential: Vec<Vec<f64>>,
    pub probs: Vec<Vec<f64>>,
    pub chosen: Vec<Option<usize>>,
    /// Largest simplex renormalization applied (ODE mode; 0 elsewhere).
    pub max_renorm_correction: f64,
}

impl Trajectory {
    pub fn new() -> Self {
        Self {
            times: Vec::new(),
            counts: Vec::new(),
            pi: Vec::new(),
            theta: Vec::new(),
            potential: Vec::new(),
            probs: Vec::new(),
            chosen: Vec::new(),
            max_renorm_correction: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(
        &mut self,
        t: f64,
        counts: Option<&[f64]>,
        pi: &[f64],
        pipeline: &ChoicePipeline,
        chosen: Option<usize>,
    ) {
        self.times.push(t);
        if let Some(c) = counts {
            self.counts.push(c.to_vec());
        }
        self.pi.push(pi.to_vec());
        self.theta.push(pipeline.theta.clone());
        self.potential.push(pipeline.potential.clone());
        self.probs.push(pipeline.probs.clone());
        self.chosen.push(chosen);
    }

    pub fn final_pi(&self) -> &[f64] {
        self.pi.last().expect("trajectory has at least one record")
    }

    pub fn final_counts(&self) -> Option<&[f64]> {
        self.counts.last().map(|v| v.as_slice())
    }
}

impl Default for Trajectory {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------------
// Truncated-normal bias sampling
// ---------------------------------------------------------------------------

/// One draw from `N(mu, sigma^2)` conditioned on `[0, inf)`.
///
/// Uses plain rejection against the untruncated normal while the
/// acceptance region keeps reasonable mass (`mu >= -2 sigma`) and Robert's
/// translated-exponential rejection for the far tail.
pub fn sample_truncated_normal(mu: f64, sigma: f64, rng: &mut ChaCha12Rng) -> Result<f64> {
    if sigma < 0.0 {
        return Err(Error::InvalidConfig(format!("sigma = {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        if mu >= 0.0 {
            return Ok(mu);
        }
        return Err(Error::EmptySupport { mu });
    }
    // Left truncation point in standard units.
    let alpha = -mu / sigma;
    if alpha <= 2.0 {
        let normal = Normal::new(mu, sigma).expect("finite parameters");
        loop {
            let x = normal.sample(rng);
            if x >= 0.0 {
                return Ok(x);
            }
        }
    } else {
        // Robert (1995): exponential proposal with rate
        // lambda = (alpha + sqrt(alpha^2 + 4)) / 2.
        let lambda = (alpha + (alpha * alpha + 4.0).sqrt()) / 2.0;
        loop {
            let u1: f64 = rng.random();
            let z = alpha - (1.0 - u1).ln() / lambda;
            let rho = (-(z - lambda) * (z - lambda) / 2.0).exp();
            let u2: f64 = rng.random();
            if u2 <= rho {
                return Ok(mu + sigma * z);
            }
        }
    }
}

fn sample_bias(params: &ModelParams, k_groups: usize, rng: &mut ChaCha12Rng) -> Result<Vec<f64>> {
    match &params.bias.explicit {
        Some(eps) => Ok(eps.clone()),
        None => (0..k_groups)
            .map(|_| sample_truncated_normal(params.bias.mu, params.bias.sigma, rng))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Entrant process
// ---------------------------------------------------------------------------

/// Inverse-CDF categorical draw: the smallest index `k` with
/// `u < p_0 + ... + p_k`, scanning groups in ascending order.
pub fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return k;
        }
    }
    probs.len() - 1
}

/// One entrant step: evaluates the pipeline at the current proportions,
/// draws the chosen group, and returns the incremented counts together with
/// the choice and the probabilities the entrant used.
///
/// `eps_frozen` supplies the run's frozen bias vector; without it the bias
/// is resolved from `params` (explicit values, or a fresh truncated-normal
/// draw).
pub fn step_entrant(
    counts: &GroupCounts,
    params: &ModelParams,
    eps_frozen: Option<&[f64]>,
    rng: &mut ChaCha12Rng,
) -> Result<(GroupCounts, usize, Vec<f64>)> {
    let state = proportions(counts);
    let eps = match eps_frozen {
        Some(e) => e.to_vec(),
        None => sample_bias(params, counts.k_groups(), rng)?,
    };
    let pipeline = choice_pipeline_raw(params, &state.pi, &eps)?;
    let u: f64 = rng.random();
    let chosen = sample_categorical(&pipeline.probs, u);
    let mut next = counts.clone();
    next.add_member(chosen);
    Ok((next, chosen, pipeline.probs))
}

/// A running entrant process whose RNG and state can be stepped
/// incrementally (the trajectory of a split run matches a continuous one).
#[derive(Debug, Clone)]
pub struct EntrantSim {
    params: ModelParams,
    counts: GroupCounts,
    /// Bias held fixed for the whole run; `None` in per-step mode.
    eps_frozen: Option<Vec<f64>>,
    /// Bias used by the most recent step (equals `eps_frozen` when frozen).
    eps_current: Vec<f64>,
    rng: ChaCha12Rng,
}

impl EntrantSim {
    pub fn from_config(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        if config.process != ProcessKind::Entrant {
            return Err(Error::InvalidConfig(
                "EntrantSim requires process = entrant".into(),
            ));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
        let counts = GroupCounts::new(config.draw_init(&mut rng))?;
        // An initial bias draw exists in both modes so the t = 0 record has
        // well-defined probabilities; frozen mode then reuses it for every
        // step, per-step mode redraws inside each step.
        let eps0 = sample_bias(&config.params, config.k_groups, &mut rng)?;
        let eps_frozen = match config.params.bias.mode {
            BiasMode::Frozen => Some(eps0.clone()),
            BiasMode::PerStep => None,
        };
        Ok(Self {
            params: config.params.clone(),
            counts,
            eps_frozen,
            eps_current: eps0,
            rng,
        })
    }

    pub fn counts(&self) -> &GroupCounts {
        &self.counts
    }

    pub fn bias(&self) -> &[f64] {
        &self.eps_current
    }

    /// Advances one entrant; returns the chosen group.
    pub fn step(&mut self) -> Result<usize> {
        if self.eps_frozen.is_none() {
            self.eps_current = sample_bias(&self.params, self.counts.k_groups(), &mut self.rng)?;
        }
        let (next, chosen, _probs) = step_entrant(
            &self.counts,
            &self.params,
            Some(&self.eps_current),
            &mut self.rng,
        )?;
        self.counts = next;
        Ok(chosen)
    }

    /// Pipeline quantities at the current state under the current bias.
    pub fn pipeline(&self) -> Result<ChoicePipeline> {
        let state = proportions(&self.counts);
        choice_pipeline_raw(&self.params, &state.pi, &self.eps_current)
    }
}

/// Runs the sequential-entrant Markov process for `t_steps` entrants.
///
/// Identical seed and config produce a bit-identical trajectory. Recorded
/// rows hold the state after `t` steps, the pipeline evaluated at that state
/// (under the bias the step used), and the group chosen at step `t`.
pub fn run_entry_process(config: &SimConfig) -> Result<Trajectory> {
    let mut sim = EntrantSim::from_config(config)?;
    let stride = config.resolved_record_every();
    let mut traj = Trajectory::new();

    let record =
        |traj: &mut Trajectory, sim: &EntrantSim, t: u64, chosen: Option<usize>| -> Result<()> {
            let counts_f: Vec<f64> = sim.counts().counts().iter().map(|&n| n as f64).collect();
            let state = proportions(sim.counts());
            let pipeline = sim.pipeline()?;
            traj.push(t as f64, Some(&counts_f), &state.pi, &pipeline, chosen);
            Ok(())
        };

    record(&mut traj, &sim, 0, None)?;
    for t in 1..=config.t_steps {
        let chosen = sim.step()?;
        if t % stride == 0 || t == config.t_steps {
            record(&mut traj, &sim, t, Some(chosen))?;
        }
    }
    Ok(traj)
}

// ---------------------------------------------------------------------------
// Redistribution process
// ---------------------------------------------------------------------------

/// One redistribution step on real-valued sizes. With `N = sum n_k` and
/// choice probabilities `p` from the pipeline:
///
/// ```text
/// entrants  E     = eta * N, allocated as E * p_k
/// switching delta = damping * (N * p_k - n_k)
/// n_k'            = n_k + E * p_k + delta_k
/// ```
///
/// The total grows to `(1 + eta) * N`; all sizes stay nonnegative for
/// `damping <= 1`.
pub fn step_redistribution(
    sizes: &[f64],
    params: &ModelParams,
    eps: &[f64],
    eta_frac: f64,
    damping: f64,
) -> Result<Vec<f64>> {
    let total: f64 = sizes.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyPopulation);
    }
    let state = proportions_real(sizes)?;
    let pipeline = choice_pipeline_raw(params, &state.pi, eps)?;
    let entrants = eta_frac * total;
    let mut next = Vec::with_capacity(sizes.len());
    for (k, &n) in sizes.iter().enumerate() {
        let p = pipeline.probs[k];
        let flow = damping * (total * p - n);
        let v = n + entrants * p + flow;
        if v < 0.0 {
            return Err(Error::Domain {
                what: "step_redistribution",
                detail: format!("group {k} size became negative: {v}"),
            });
        }
        next.push(v);
    }
    Ok(next)
}

/// Runs the redistribution process; with a frozen bias the whole run is
/// deterministic.
pub fn run_redistribution(config: &SimConfig) -> Result<Trajectory> {
    config.validate()?;
    if config.process != ProcessKind::Redistribution {
        return Err(Error::InvalidConfig(
            "run_redistribution requires process = redistribution".into(),
        ));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut sizes: Vec<f64> = config
        .draw_init(&mut rng)
        .into_iter()
        .map(|n| n as f64)
        .collect();
    let mut eps = sample_bias(&config.params, config.k_groups, &mut rng)?;
    let per_step = config.params.bias.mode == BiasMode::PerStep;
    let stride = config.resolved_record_every();
    let mut traj = Trajectory::new();

    let record = |traj: &mut Trajectory, sizes: &[f64], eps: &[f64], t: u64| -> Result<()> {
        let state = proportions_real(sizes)?;
        let pipeline = choice_pipeline_raw(&config.params, &state.pi, eps)?;
        traj.push(t as f64, Some(sizes), &state.pi, &pipeline, None);
        Ok(())
    };

    record(&mut traj, &sizes, &eps, 0)?;
    for t in 1..=config.t_steps {
        if per_step {
            eps = sample_bias(&config.params, config.k_groups, &mut rng)?;
        }
        sizes = step_redistribution(
            &sizes,
            &config.params,
            &eps,
            config.eta_frac,
            config.damping,
        )?;
        if t % stride == 0 || t == config.t_steps {
            record(&mut traj, &sizes, &eps, t)?;
        }
    }
    Ok(traj)
}

/// Dispatches on `config.process`.
pub fn run_process(config: &SimConfig) -> Result<Trajectory> {
    match config.process {
        ProcessKind::Entrant => run_entry_process(config),
        ProcessKind::Redistribution => run_redistribution(config),
    }
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

/// Final states of `n_runs` independent replicas plus cross-seed aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub seeds: Vec<u64>,
    pub final_counts: Vec<Vec<f64>>,
    pub final_pi: Vec<Vec<f64>>,
    pub mean_final_pi: Vec<f64>,
    pub std_final_pi: Vec<f64>,
    pub concentration: Vec<ConcentrationStats>,
}

/// Runs replicas with seeds `base_seed .. base_seed + n_runs`, concurrently;
/// results are merged in ascending seed order, so the summary matches a
/// serial execution.
pub fn run_ensemble(config: &SimConfig, n_runs: usize, base_seed: u64) -> Result<EnsembleSummary> {
    if n_runs == 0 {
        return Err(Error::InvalidConfig("n_runs must be >= 1".into()));
    }
    config.validate()?;
    let seeds: Vec<u64> = (0..n_runs as u64).map(|i| base_seed + i).collect();
    let runs: Result<Vec<Trajectory>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            run_process(&c)
        })
        .collect();
    let runs = runs?;

    let k = config.k_groups;
    let mut final_counts = Vec::with_capacity(n_runs);
    let mut final_pi = Vec::with_capacity(n_runs);
    let mut concentration = Vec::with_capacity(n_runs);
    for traj in &runs {
        let counts = traj
            .final_counts()
            .expect("simulation trajectories always record counts")
            .to_vec();
        concentration.push(concentration_stats(&counts)?);
        final_counts.push(counts);
        final_pi.push(traj.final_pi().to_vec());
    }

    let mut mean_final_pi = vec![0.0; k];
    for pi in &final_pi {
        for (m, &v) in mean_final_pi.iter_mut().zip(pi) {
            *m += v;
        }
    }
    mean_final_pi.iter_mut().for_each(|m| *m /= n_runs as f64);
    let mut std_final_pi = vec![0.0; k];
    if n_runs > 1 {
        for pi in &final_pi {
            for (s, (&v, &m)) in std_final_pi.iter_mut().zip(pi.iter().zip(&mean_final_pi)) {
                *s += (v - m) * (v - m);
            }
        }
        std_final_pi
            .iter_mut()
            .for_each(|s| *s = (*s / (n_runs as f64 - 1.0)).sqrt());
    }

    Ok(EnsembleSummary {
        seeds,
        final_counts,
        final_pi,
        mean_final_pi,
        std_final_pi,
        concentration,
    })
}

// ---------------------------------------------------------------------------
// Drift estimation
// ---------------------------------------------------------------------------

/// Monte-Carlo estimate of `E[pi(t+1) - pi(t)]` over `n_samples` independent
/// single entrant steps from the same state; the analytical value is
/// `(p(pi) - pi) / (N + 1)`.
pub fn drift_estimate(
    counts: &GroupCounts,
    params: &ModelParams,
    n_samples: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
    }
    let k = counts.k_groups();
    let state = proportions(counts);
    let eps_run = match params.bias.mode {
        BiasMode::Frozen => Some(sample_bias(params, k, rng)?),
        BiasMode::PerStep => None,
    };
    let frozen_probs = match &eps_run {
        Some(eps) => Some(choice_pipeline_raw(params, &state.pi, eps)?.probs),
        None => None,
    };

    let mut chosen_counts = vec![0u64; k];
    for _ in 0..n_samples {
        let probs = match &frozen_probs {
            Some(p) => p.clone(),
            None => {
                let eps = sample_bias(params, k, rng)?;
                choice_pipeline_raw(params, &state.pi, &eps)?.probs
            }
        };
        let u: f64 = rng.random();
        chosen_counts[sample_categorical(&probs, u)] += 1;
    }

    let n = counts.total() as f64;
    let samples = n_samples as f64;
    Ok((0..k)
        .map(|j| {
            let mean_chi = chosen_counts[j] as f64 / samples;
            (counts.counts()[j] as f64 + mean_chi) / (n + 1.0) - state.pi[j]
        })
        .collect())
}
