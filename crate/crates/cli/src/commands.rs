//! Subcommand implementations. Every command resolves a full config,
//! produces its data files inside the configured output directory, and
//! emits a metadata document sufficient to reproduce the run bit-exactly.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use groupdyn_core::experiments::{run_experiment, ExperimentSpec, Scenario};
use groupdyn_core::meanfield::{
    first_order_equilibrium, integrate_ode, solve_fixed_point, PerturbationInput,
};
use groupdyn_core::model::SimplexState;
use groupdyn_core::sim::{run_ensemble, run_process};
use groupdyn_core::spectral::{hessian_degeneracy_report, spectral_report, DEFAULT_FD_STEP};

use crate::config::{load_config, OutputSection, RunConfigFile};
use crate::output::{
    ensemble_csv, ensemble_json, fixed_point_json, json_doc, metadata, spectral_report_json,
    summary_rows_csv, summary_table_csv, summary_table_json, trajectory_csv, Metadata, OutputDir,
};
use crate::AppError;

#[derive(Debug, Parser)]
#[command(
    name = "groupdyn",
    version,
    about = "Simulator and equilibrium-analysis toolkit for group-formation dynamics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one entrant or redistribution simulation and write the trajectory
    Simulate(ConfigArgs),
    /// Run independent replicas and aggregate the final states
    Ensemble(EnsembleArgs),
    /// Solve for the equilibrium proportions
    Fixedpoint(FixedpointArgs),
    /// Integrate the mean-field dynamics dpi/dt = p(pi) - pi
    Ode(OdeArgs),
    /// Jacobian, spectrum of J - I, and stability classification
    Stability(StabilityArgs),
    /// Degeneracy survey of the pairwise attraction surface
    Hessian(HessianArgs),
    /// First-order equilibrium approximation vs. the numeric fixed point
    Approx(ApproxArgs),
    /// Canned reproducible experiment scenarios
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args, Clone)]
pub struct ConfigArgs {
    /// TOML run config; absent sections take built-in defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key, e.g. --set model.beta=1.5 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<(RunConfigFile, Vec<String>), AppError> {
        let config = load_config(self.config.as_deref(), &self.set)?;
        let mut overrides = Vec::new();
        if let Some(path) = &self.config {
            overrides.push(format!("config_file={}", path.display()));
        }
        overrides.extend(self.set.iter().cloned());
        Ok((config, overrides))
    }
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Number of replicas
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    /// First seed; replica i uses base_seed + i (default: process.seed)
    #[arg(long)]
    pub base_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FixedpointArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Damping of the self-map iteration
    #[arg(long, default_value_t = 0.5)]
    pub relax: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    /// Starting proportions as a comma list (default: uniform)
    #[arg(long)]
    pub start: Option<String>,
}

#[derive(Debug, Args)]
pub struct OdeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 50.0)]
    pub t_end: f64,
    /// Starting proportions as a comma list (default: uniform)
    #[arg(long)]
    pub start: Option<String>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Evaluation point as a comma list; default: the solved fixed point
    #[arg(long)]
    pub at: Option<String>,
    /// Central-difference step
    #[arg(long, default_value_t = DEFAULT_FD_STEP)]
    pub fd_step: f64,
}

#[derive(Debug, Args)]
pub struct HessianArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Interior grid resolution per axis
    #[arg(long, default_value_t = 99)]
    pub grid: usize,
}

#[derive(Debug, Args)]
pub struct ApproxArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Zero-sum bias perturbations, comma list of length K
    /// (default: +0.05 on the first group, -0.05 on the last)
    #[arg(long)]
    pub eta: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// beta_sweep | heterogeneous | table_repro | redistribution_demo
    pub scenario: String,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Number of seeds (default: scenario-specific)
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub base_seed: u64,
    /// Override the beta grid, comma list
    #[arg(long)]
    pub betas: Option<String>,
}

pub fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Ensemble(args) => ensemble(args),
        Command::Fixedpoint(args) => fixedpoint(args),
        Command::Ode(args) => ode(args),
        Command::Stability(args) => stability(args),
        Command::Hessian(args) => hessian(args),
        Command::Approx(args) => approx(args),
        Command::Experiment(args) => experiment(args),
    }
}

fn parse_f64_list(raw: &str) -> Result<Vec<f64>, AppError> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| AppError::Config(format!("invalid number '{s}': {e}")))
        })
        .collect()
}

fn parse_state(raw: Option<&str>, k: usize) -> Result<SimplexState, AppError> {
    match raw {
        None => Ok(SimplexState::uniform(k)),
        Some(text) => {
            let pi = parse_f64_list(text)?;
            if pi.len() != k {
                return Err(AppError::Config(format!(
                    "state has {} entries, model.k_groups is {k}",
                    pi.len()
                )));
            }
            // A malformed state is a usage error, not a numerical one.
            SimplexState::new(pi).map_err(|e| AppError::Config(e.to_string()))
        }
    }
}

fn open_output(config: &RunConfigFile) -> Result<OutputDir, AppError> {
    OutputDir::create(&config.output.directory).map_err(AppError::Io)
}

fn write_common(
    out: &OutputDir,
    meta: &Metadata,
    config: &RunConfigFile,
) -> Result<(), AppError> {
    out.write(
        "metadata.json",
        &(serde_json::to_string_pretty(&json!({ "metadata": meta })).expect("serializable") + "\n"),
    )?;
    out.write("resolved_config.toml", &config.to_toml_string())?;
    Ok(())
}

fn simulate(args: ConfigArgs) -> Result<(), AppError> {
    let (config, overrides) = args.load()?;
    let traj = run_process(&config.sim_config())?;
    let out = open_output(&config)?;
    let meta = metadata("simulate", &config, &overrides);
    if config.wants_csv() {
        let path = out.write("trajectory.csv", &trajectory_csv(&traj))?;
        println!("wrote {}", path.display());
    }
    write_common(&out, &meta, &config)?;
    println!(
        "simulate: {} recorded steps, final pi = {:?}",
        traj.len(),
        traj.final_pi()
    );
    Ok(())
}

fn ensemble(args: EnsembleArgs) -> Result<(), AppError> {
    let (config, mut overrides) = args.config.load()?;
    let base_seed = args.base_seed.unwrap_or(config.process.seed);
    overrides.push(format!("runs={}", args.runs));
    overrides.push(format!("base_seed={base_seed}"));
    let summary = run_ensemble(&config.sim_config(), args.runs, base_seed)?;
    let out = open_output(&config)?;
    let meta = metadata("ensemble", &config, &overrides);
    if config.wants_csv() {
        out.write("ensemble.csv", &ensemble_csv(&summary))?;
    }
    if config.wants_json() {
        out.write(
            "ensemble.json",
            &json_doc(&meta, "ensemble", ensemble_json(&summary)),
        )?;
    }
    write_common(&out, &meta, &config)?;
    println!(
        "ensemble: {} runs, mean final pi = {:?}",
        args.runs, summary.mean_final_pi
    );
    Ok(())
}

fn fixedpoint(args: FixedpointArgs) -> Result<(), AppError> {
    let (config, mut overrides) = args.config.load()?;
    let k = config.model.k_groups;
    let start = parse_state(args.start.as_deref(), k)?;
    overrides.push(format!("relax={}", args.relax));
    overrides.push(format!("tol={}", args.tol));
    let result = solve_fixed_point(
        &config.model_params(),
        &start,
        args.relax,
        args.tol,
        args.max_iter,
    )?;
    let out = open_output(&config)?;
    let meta = metadata("fixedpoint", &config, &overrides);
    if config.wants_json() {
        out.write(
            "fixedpoint.json",
            &json_doc(&meta, "fixed_point", fixed_point_json(&result)),
        )?;
    }
    write_common(&out, &meta, &config)?;
    println!(
        "fixedpoint: converged = {}, residual = {:e}, pi* = {:?}",
        result.converged, result.residual_norm, result.pi_star.pi
    );
    Ok(())
}

fn ode(args: OdeArgs) -> Result<(), AppError> {
    let (config, mut overrides) = args.config.load()?;
    let k = config.model.k_groups;
    let start = parse_state(args.start.as_deref(), k)?;
    overrides.push(format!("dt={}", args.dt));
    overrides.push(format!("t_end={}", args.t_end));
    let traj = integrate_ode(&start, &config.model_params(), args.dt, args.t_end)?;
    let out = open_output(&config)?;
    let meta = metadata("ode", &config, &overrides);
    if config.wants_csv() {
        out.write("trajectory.csv", &trajectory_csv(&traj))?;
    }
    write_common(&out, &meta, &config)?;
    if traj.max_renorm_correction > 1e-6 {
        println!(
            "warning: simplex renormalization reached {:e}",
            traj.max_renorm_correction
        );
    }
    println!(
        "ode: {} steps, final pi = {:?}",
        traj.len() - 1,
        traj.final_pi()
    );
    Ok(())
}

fn stability(args: StabilityArgs) -> Result<(), AppError> {
    let (config, mut overrides) = args.config.load()?;
    let k = config.model.k_groups;
    let params = config.model_params();
    let state = match &args.at {
        Some(raw) => parse_state(Some(raw), k)?,
        None => {
            let solved = solve_fixed_point(&params, &SimplexState::uniform(k), 0.5, 1e-12, 100_000)?;
            if !solved.converged {
                return Err(AppError::Numerical(groupdyn_core::Error::InvalidConfig(
                    format!(
                        "fixed point did not converge (residual {:e}); pass --at to evaluate elsewhere",
                        solved.residual_norm
                    ),
                )));
            }
            solved.pi_star
        }
    };
    overrides.push(format!("fd_step={}", args.fd_step));
    let report = spectral_report(&params, &state, args.fd_step)?;
    let out = open_output(&config)?;
    let meta = metadata("stability", &config, &overrides);
    let payload = json!({
        "evaluated_at": state.pi,
        "report": spectral_report_json(&report),
    });
    if config.wants_json() {
        out.write("stability.json", &json_doc(&meta, "stability", payload))?;
    }
    write_common(&out, &meta, &config)?;
    println!(
        "stability: {} (tangent eigenvalues {:?})",
        report.classification,
        report
            .tangent_eigenvalues
            .iter()
            .map(|l| (l.re, l.im))
            .collect::<Vec<_>>()
    );
    Ok(())
}

fn hessian(args: HessianArgs) -> Result<(), AppError> {
    let (config, mut overrides) = args.config.load()?;
    if !(2..=1000).contains(&args.grid) {
        return Err(AppError::Config("--grid must be in 2..=1000".into()));
    }
    overrides.push(format!("grid={}", args.grid));
    let report = hessian_degeneracy_report(args.grid);
    let out = open_output(&config)?;
    let meta = metadata("hessian", &config, &overrides);
    if config.wants_json() {
        out.write(
            "hessian.json",
            &json_doc(
                &meta,
                "hessian",
                serde_json::to_value(&report).expect("serializable report"),
            ),
        )?;
    }
    write_common(&out, &meta, &config)?;
    println!(
        "hessian: grid {}x{}, max |det|/|H|^2 = {:e}, min eigenvalue = {:e}, rank-one = {}",
        args.grid,
        args.grid,
        report.max_det_ratio,
        report.min_eigenvalue,
        report.is_degenerate_rank_one()
    );
    Ok(())
}

fn approx(args: ApproxArgs) -> Result<(), AppError> {
    let (config, mut overrides) = args.config.load()?;
    let k = config.model.k_groups;
    let eta = match &args.eta {
        Some(raw) => {
            let eta = parse_f64_list(raw)?;
            if eta.len() != k {
                return Err(AppError::Config(format!(
                    "--eta has {} entries, model.k_groups is {k}",
                    eta.len()
                )));
            }
            eta
        }
        None => {
            let mut eta = vec![0.0; k];
            eta[0] = 0.05;
            eta[k - 1] = -0.05;
            eta
        }
    };
    overrides.push(format!(
        "eta={}",
        eta.iter()
            .map(|e| e.to_string())
            .collect::<Vec<_>>()
            .join(",")
    ));

    let eps_base = config.model.bias.mu;
    let input = PerturbationInput {
        theta: config.model.theta_scalar,
        beta: config.model.beta,
        eps_base,
        eta_perturb: eta.clone(),
        k_groups: k,
    };
    let approx_state = first_order_equilibrium(&input)?;

    // Numeric reference: the reduced model with the perturbed explicit bias.
    let mut params = config.model_params();
    params.attraction_mode = groupdyn_core::model::AttractionMode::Reduced;
    params.bias.explicit = Some(eta.iter().map(|e| eps_base + e).collect());
    let numeric = solve_fixed_point(&params, &SimplexState::uniform(k), 0.5, 1e-12, 100_000)?;

    let errors: Vec<f64> = approx_state
        .pi
        .iter()
        .zip(&numeric.pi_star.pi)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let max_error = errors.iter().cloned().fold(0.0, f64::max);

    let out = open_output(&config)?;
    let meta = metadata("approx", &config, &overrides);
    let payload = json!({
        "input": {
            "theta": input.theta,
            "beta": input.beta,
            "eps_base": input.eps_base,
            "eta": input.eta_perturb,
            "k_groups": input.k_groups,
        },
        "approx_pi": approx_state.pi,
        "numeric": fixed_point_json(&numeric),
        "per_coordinate_error": errors,
        "max_abs_error": max_error,
    });
    if config.wants_json() {
        out.write("approx.json", &json_doc(&meta, "approx", payload))?;
    }
    write_common(&out, &meta, &config)?;
    println!(
        "approx: max |pi_approx - pi_numeric| = {max_error:e} (numeric converged = {})",
        numeric.converged
    );
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<(), AppError> {
    let scenario = Scenario::parse(&args.scenario)
        .ok_or_else(|| AppError::Config(format!("unknown scenario '{}'", args.scenario)))?;
    let mut spec = ExperimentSpec::defaults(scenario);

    // Scenario defaults materialize into a full config document, then the
    // usual file + --set overrides apply on top of it; K or T changes are
    // therefore visible in the echoed resolved config and override list.
    let defaults = RunConfigFile::default();
    let mut scenario_config = sim_to_runconfig(&spec.config, defaults.output.clone());
    let mut overrides = Vec::new();
    if args.config.config.is_some() || !args.config.set.is_empty() {
        let tree_default = toml::Value::try_from(&scenario_config).expect("serializable");
        let mut tree = tree_default;
        if let Some(path) = &args.config.config {
            let text = std::fs::read_to_string(path).map_err(AppError::Io)?;
            let file_tree: toml::Value = toml::from_str(&text)
                .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
            crate::config::merge(&mut tree, &file_tree);
            overrides.push(format!("config_file={}", path.display()));
        }
        for entry in &args.config.set {
            crate::config::apply_set(&mut tree, entry)?;
            overrides.push(entry.clone());
        }
        scenario_config = tree
            .try_into()
            .map_err(|e: toml::de::Error| AppError::Config(e.to_string()))?;
        scenario_config.validate()?;
        spec.config = scenario_config.sim_config();
    }
    if let Some(n) = args.seeds {
        if n == 0 {
            return Err(AppError::Config("--seeds must be >= 1".into()));
        }
        spec.seeds = (0..n as u64).map(|i| args.base_seed + i).collect();
        overrides.push(format!("seeds={n}"));
        overrides.push(format!("base_seed={}", args.base_seed));
    } else if args.base_seed != 0 {
        spec.seeds = spec
            .seeds
            .iter()
            .map(|&s| s + args.base_seed)
            .collect();
        overrides.push(format!("base_seed={}", args.base_seed));
    }
    if let Some(raw) = &args.betas {
        spec.betas = parse_f64_list(raw)?;
        overrides.push(format!("betas={raw}"));
    }

    let table = run_experiment(&spec)?;
    let out = open_output(&scenario_config)?;
    let meta = metadata(
        &format!("experiment {}", scenario.name()),
        &scenario_config,
        &overrides,
    );
    let payload = json!({
        "scenario": scenario.name(),
        // The redistribution update rule is a documented heuristic, not an
        // analytical result; flag its outputs as such.
        "heuristic": scenario == Scenario::RedistributionDemo,
        "betas": spec.betas,
        "seeds": spec.seeds,
        "table": summary_table_json(&table),
    });
    if scenario_config.wants_csv() {
        out.write("table.csv", &summary_table_csv(&table))?;
        out.write("rows.csv", &summary_rows_csv(&table))?;
        // One representative time series per beta (first seed), for plots.
        for &beta in &spec.betas {
            let mut cell = spec.config.clone();
            cell.params.beta = beta;
            cell.seed = spec.seeds[0];
            let traj = run_process(&cell)?;
            out.write(
                &format!("trajectory_beta_{}.csv", crate::output::fmt_f64(beta)),
                &trajectory_csv(&traj),
            )?;
        }
    }
    if scenario_config.wants_json() {
        out.write("experiment.json", &json_doc(&meta, "experiment", payload))?;
    }
    write_common(&out, &meta, &scenario_config)?;
    for agg in &table.aggregates {
        println!(
            "experiment {}: beta = {}, mean gini = {:.4}, mean max/min ratio = {:.3}",
            scenario.name(),
            agg.beta,
            agg.mean_gini,
            agg.mean_ratio
        );
    }
    Ok(())
}

/// Rebuilds a full config document from a simulation config (used to echo
/// experiment templates through the standard metadata path).
fn sim_to_runconfig(
    sim: &groupdyn_core::sim::SimConfig,
    output: OutputSection,
) -> RunConfigFile {
    use crate::config::{BiasSection, ModelSection, ProcessSection};
    RunConfigFile {
        model: ModelSection {
            k_groups: sim.k_groups,
            beta: sim.params.beta,
            attraction_mode: sim.params.attraction_mode,
            theta_scalar: sim.params.theta_scalar,
            bias: BiasSection {
                mode: sim.params.bias.mode,
                mu: sim.params.bias.mu,
                sigma: sim.params.bias.sigma,
                explicit: sim.params.bias.explicit.clone(),
            },
            smoothing: sim.params.smoothing,
            floor: sim.params.floor,
        },
        process: ProcessSection {
            kind: sim.process,
            t_steps: sim.t_steps,
            init: sim.init.clone(),
            seed: sim.seed,
            eta_frac: sim.eta_frac,
            damping: sim.damping,
            record_every: sim.record_every,
        },
        output,
    }
}
