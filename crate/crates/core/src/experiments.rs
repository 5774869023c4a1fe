//! Canned, reproducible experiment scenarios with summary statistics.
//!
//! Each scenario pins a group count, horizon, initial-size range, and a grid
//! of size-bias exponents; every `(beta, seed)` cell is an independent run
//! and the cells execute concurrently. Output tables carry per-group rows,
//! per-cell concentration statistics, and per-beta cross-seed aggregates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BiasSpec, ModelParams};
use crate::sim::{run_process, InitSpec, ProcessKind, SimConfig};

/// Default bias noise for scenarios that sample it. Kept small relative to
/// the attraction potentials so the negative-beta regimes can concentrate;
/// larger noise acts as a diversifying floor that masks them.
pub const DEFAULT_BIAS_MU: f64 = 0.02;
pub const DEFAULT_BIAS_SIGMA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// K = 5, T = 1000, beta swept from 0.0 to 2.0 in steps of 0.25.
    BetaSweep,
    /// K = 15, T = 10000, initial sizes 1..=20, beta in {-1, 0, 1}.
    Heterogeneous,
    /// K = 10, T = 3000, beta in {-0.5, 0.1, 0.5}, 20 seeds.
    TableRepro,
    /// Redistribution process demo (heuristic growth/switching variant).
    RedistributionDemo,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::BetaSweep => "beta_sweep",
            Scenario::Heterogeneous => "heterogeneous",
            Scenario::TableRepro => "table_repro",
            Scenario::RedistributionDemo => "redistribution_demo",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "beta_sweep" => Some(Scenario::BetaSweep),
            "heterogeneous" => Some(Scenario::Heterogeneous),
            "table_repro" => Some(Scenario::TableRepro),
            "redistribution_demo" => Some(Scenario::RedistributionDemo),
            _ => None,
        }
    }
}

/// A scenario, its per-cell run template, the beta grid, and the seed list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    /// Template config; `beta` and `seed` are overwritten per cell.
    pub config: SimConfig,
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    /// Canonical defaults for a scenario.
    pub fn defaults(scenario: Scenario) -> Self {
        let bias = BiasSpec::frozen(DEFAULT_BIAS_MU, DEFAULT_BIAS_SIGMA);
        let template = |k: usize, t: u64, init_hi: u64, process: ProcessKind| SimConfig {
            k_groups: k,
            t_steps: t,
            params: ModelParams::full(0.0, bias.clone()),
            init: InitSpec::Range { lo: 1, hi: init_hi },
            seed: 0,
            process,
            eta_frac: 0.05,
            damping: 0.1,
            record_every: None,
        };
        match scenario {
            Scenario::BetaSweep => Self {
                scenario,
                config: template(5, 1000, 10, ProcessKind::Entrant),
                betas: (0..=8).map(|i| i as f64 * 0.25).collect(),
                seeds: (0..8).collect(),
            },
            Scenario::Heterogeneous => Self {
                scenario,
                config: template(15, 10_000, 20, ProcessKind::Entrant),
                betas: vec![-1.0, 0.0, 1.0],
                seeds: (0..5).collect(),
            },
            Scenario::TableRepro => Self {
                scenario,
                config: template(10, 3000, 10, ProcessKind::Entrant),
                betas: vec![-0.5, 0.1, 0.5],
                seeds: (0..20).collect(),
            },
            Scenario::RedistributionDemo => Self {
                scenario,
                config: template(5, 500, 10, ProcessKind::Redistribution),
                betas: vec![0.5],
                seeds: (0..3).collect(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::InvalidConfig("beta grid is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seed list is empty".into()));
        }
        self.config.validate()
    }
}

/// Inequality summary of a final-size vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationStats {
    /// `max / max(min, 1)`.
    pub ratio: f64,
    /// Largest share of the total.
    pub max_share: f64,
    /// Mean absolute difference over twice the mean.
    pub gini: f64,
}

/// Concentration statistics of a nonnegative size vector with positive total.
pub fn concentration_stats(final_counts: &[f64]) -> Result<ConcentrationStats> {
    if final_counts.is_empty() {
        return Err(Error::InvalidConfig("empty size vector".into()));
    }
    if let Some(&v) = final_counts.iter().find(|&&v| v < 0.0) {
        return Err(Error::InvalidConfig(format!("negative size {v}")));
    }
    let total: f64 = final_counts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyPopulation);
    }
    let n = final_counts.len() as f64;
    let max = final_counts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = final_counts.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = total / n;
    let mut abs_diff_sum = 0.0;
    for &a in final_counts {
        for &b in final_counts {
            abs_diff_sum += (a - b).abs();
        }
    }
    let mean_abs_diff = abs_diff_sum / (n * n);
    Ok(ConcentrationStats {
        ratio: max / min.max(1.0),
        max_share: max / total,
        gini: mean_abs_diff / (2.0 * mean),
    })
}

/// One `(beta, seed, group)` observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub beta: f64,
    pub seed: u64,
    pub group: usize,
    pub initial_size: f64,
    pub final_size: f64,
    pub final_pi: f64,
    pub final_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub beta: f64,
    pub seed: u64,
    pub stats: ConcentrationStats,
}

/// Cross-seed aggregate for one beta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaAggregate {
    pub beta: f64,
    pub mean_gini: f64,
    pub std_gini: f64,
    pub mean_ratio: f64,
    pub mean_max_share: f64,
}

/// Experiment output: long-format rows plus concentration statistics, in
/// `(beta, seed, group)` order regardless of execution schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub scenario: Scenario,
    pub k_groups: usize,
    pub t_steps: u64,
    pub betas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub rows: Vec<SummaryRow>,
    pub concentration: Vec<ConcentrationRow>,
    pub aggregates: Vec<BetaAggregate>,
}

impl SummaryTable {
    /// Rows of one `(beta, seed)` cell.
    pub fn cell(&self, beta: f64, seed: u64) -> Vec<&SummaryRow> {
        self.rows
            .iter()
            .filter(|r| r.beta == beta && r.seed == seed)
            .collect()
    }

    pub fn aggregate_for(&self, beta: f64) -> Option<&BetaAggregate> {
        self.aggregates.iter().find(|a| a.beta == beta)
    }
}

struct CellOutcome {
    beta: f64,
    seed: u64,
    initial: Vec<f64>,
    final_sizes: Vec<f64>,
    final_pi: Vec<f64>,
    final_p: Vec<f64>,
}

fn run_cell(template: &SimConfig, beta: f64, seed: u64) -> Result<CellOutcome> {
    let mut config = template.clone();
    config.params.beta = beta;
    config.seed = seed;
    let traj = run_process(&config)?;
    let initial = traj.counts.first().expect("run records counts").clone();
    let final_sizes = traj.final_counts().expect("run records counts").to_vec();
    Ok(CellOutcome {
        beta,
        seed,
        initial,
        final_sizes,
        final_pi: traj.final_pi().to_vec(),
        final_p: traj.probs.last().expect("nonempty trajectory").clone(),
    })
}

/// Runs every `(beta, seed)` cell of the spec and assembles the table.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SummaryTable> {
    spec.validate()?;
    let cells: Vec<(f64, u64)> = spec
        .betas
        .iter()
        .flat_map(|&b| spec.seeds.iter().map(move |&s| (b, s)))
        .collect();
    let outcomes: Result<Vec<CellOutcome>> = cells
        .par_iter()
        .map(|&(beta, seed)| run_cell(&spec.config, beta, seed))
        .collect();
    let outcomes = outcomes?;

    let mut rows = Vec::with_capacity(outcomes.len() * spec.config.k_groups);
    let mut concentration = Vec::with_capacity(outcomes.len());
    for cell in &outcomes {
        if spec.config.process == ProcessKind::Entrant {
            let initial: f64 = cell.initial.iter().sum();
            let fin: f64 = cell.final_sizes.iter().sum();
            debug_assert_eq!(fin, initial + spec.config.t_steps as f64);
        }
        for g in 0..spec.config.k_groups {
            rows.push(SummaryRow {
                beta: cell.beta,
                seed: cell.seed,
                group: g,
                initial_size: cell.initial[g],
                final_size: cell.final_sizes[g],
                final_pi: cell.final_pi[g],
                final_p: cell.final_p[g],
            });
        }
        concentration.push(ConcentrationRow {
            beta: cell.beta,
            seed: cell.seed,
            stats: concentration_stats(&cell.final_sizes)?,
        });
    }

    let aggregates = spec
        .betas
        .iter()
        .map(|&beta| {
            let cells: Vec<&ConcentrationStats> = concentration
                .iter()
                .filter(|c| c.beta == beta)
                .map(|c| &c.stats)
                .collect();
            let n = cells.len() as f64;
            let mean_gini = cells.iter().map(|s| s.gini).sum::<f64>() / n;
            let var_gini = cells
                .iter()
                .map(|s| (s.gini - mean_gini) * (s.gini - mean_gini))
                .sum::<f64>()
                / (n - 1.0).max(1.0);
            BetaAggregate {
                beta,
                mean_gini,
                std_gini: var_gini.sqrt(),
                mean_ratio: cells.iter().map(|s| s.ratio).sum::<f64>() / n,
                mean_max_share: cells.iter().map(|s| s.max_share).sum::<f64>() / n,
            }
        })
        .collect();

    Ok(SummaryTable {
        scenario: spec.scenario,
        k_groups: spec.config.k_groups,
        t_steps: spec.config.t_steps,
        betas: spec.betas.clone(),
        seeds: spec.seeds.clone(),
        rows,
        concentration,
        aggregates,
    })
}

fn expect_scenario(spec: &ExperimentSpec, scenario: Scenario) -> Result<()> {
    if spec.scenario != scenario {
        return Err(Error::InvalidConfig(format!(
            "spec is for scenario {}, expected {}",
            spec.scenario.name(),
            scenario.name()
        )));
    }
    Ok(())
}

pub fn run_beta_sweep(spec: &ExperimentSpec) -> Result<SummaryTable> {
    expect_scenario(spec, Scenario::BetaSweep)?;
    run_experiment(spec)
}

pub fn run_heterogeneous(spec: &ExperimentSpec) -> Result<SummaryTable> {
    expect_scenario(spec, Scenario::Heterogeneous)?;
    run_experiment(spec)
}

pub fn run_table_reproduction(spec: &ExperimentSpec) -> Result<SummaryTable> {
    expect_scenario(spec, Scenario::TableRepro)?;
    run_experiment(spec)
}

pub fn run_redistribution_demo(spec: &ExperimentSpec) -> Result<SummaryTable> {
    expect_scenario(spec, Scenario::RedistributionDemo)?;
    run_experiment(spec)
}
