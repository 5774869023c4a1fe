//! Bit-stable serialization: CSV tables, structured JSON documents, and the
//! metadata block that makes every output reproducible.
//!
//! Floating-point values are rendered as the shortest decimal that
//! round-trips to the same bits (Rust's `Display` / serde_json's ryu), so
//! identical runs produce byte-identical files.

use std::io;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use groupdyn_core::experiments::SummaryTable;
use groupdyn_core::meanfield::FixedPointResult;
use groupdyn_core::sim::{EnsembleSummary, Trajectory, RNG_ALGORITHM};
use groupdyn_core::spectral::SpectralReport;

use crate::config::RunConfigFile;

/// Shortest round-trip decimal rendering.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Reproducibility header carried by every structured output document.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub format_version: u32,
    pub rng_algorithm: &'static str,
    pub command: String,
    /// Config keys the caller overrode (file sections and `--set` entries).
    pub overrides_applied: Vec<String>,
    pub config: RunConfigFile,
}

pub fn metadata(command: &str, config: &RunConfigFile, overrides: &[String]) -> Metadata {
    Metadata {
        tool: "groupdyn",
        tool_version: env!("CARGO_PKG_VERSION"),
        format_version: 1,
        rng_algorithm: RNG_ALGORITHM,
        command: command.to_string(),
        overrides_applied: overrides.to_vec(),
        config: config.clone(),
    }
}

/// All file output funnels through this type, which confines writes to the
/// configured output directory.
#[derive(Debug, Clone)]
pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&self, name: &str, content: &str) -> io::Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, content)?;
        Ok(path)
    }
}

/// Self-describing JSON document: metadata plus one named payload.
pub fn json_doc(meta: &Metadata, kind: &str, payload: serde_json::Value) -> String {
    let doc = json!({
        "metadata": meta,
        kind: payload,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable document");
    text.push('\n');
    text
}

// ---------------------------------------------------------------------------
// CSV tables
// ---------------------------------------------------------------------------

/// Trajectory rows: `t,group,n,pi,theta,a,p,chosen`, one row per recorded
/// step and group. `n` is empty for ODE trajectories and `chosen` outside
/// entrant mode; group ids are 1-based.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,group,n,pi,theta,a,p,chosen\n");
    let has_counts = !traj.counts.is_empty();
    for (row, &t) in traj.times.iter().enumerate() {
        let k = traj.pi[row].len();
        for g in 0..k {
            let n = if has_counts {
                fmt_f64(traj.counts[row][g])
            } else {
                String::new()
            };
            let chosen = match traj.chosen[row] {
                Some(c) => (c + 1).to_string(),
                None => String::new(),
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                fmt_f64(t),
                g + 1,
                n,
                fmt_f64(traj.pi[row][g]),
                fmt_f64(traj.theta[row][g]),
                fmt_f64(traj.potential[row][g]),
                fmt_f64(traj.probs[row][g]),
                chosen,
            ));
        }
    }
    out
}

pub fn write_trajectory_csv(traj: &Trajectory, path: &Path) -> io::Result<()> {
    std::fs::write(path, trajectory_csv(traj))
}

/// Per-seed finals followed by the cross-seed aggregate block.
pub fn ensemble_csv(summary: &EnsembleSummary) -> String {
    let mut out = String::from("seed,group,final_count,final_pi\n");
    for (i, &seed) in summary.seeds.iter().enumerate() {
        for g in 0..summary.final_pi[i].len() {
            out.push_str(&format!(
                "{seed},{},{},{}\n",
                g + 1,
                fmt_f64(summary.final_counts[i][g]),
                fmt_f64(summary.final_pi[i][g]),
            ));
        }
    }
    out.push('\n');
    out.push_str("group,mean_final_pi,std_final_pi\n");
    for g in 0..summary.mean_final_pi.len() {
        out.push_str(&format!(
            "{},{},{}\n",
            g + 1,
            fmt_f64(summary.mean_final_pi[g]),
            fmt_f64(summary.std_final_pi[g]),
        ));
    }
    out
}

/// Wide comparison table: one row per group, Initial/Final columns per beta
/// (first seed's realization), followed by the cross-seed statistics block.
pub fn summary_table_csv(table: &SummaryTable) -> String {
    let first_seed = table.seeds[0];
    let mut out = String::from("group");
    for &beta in &table.betas {
        out.push_str(&format!(
            ",initial[beta={0}],final[beta={0}]",
            fmt_f64(beta)
        ));
    }
    out.push('\n');
    for g in 0..table.k_groups {
        out.push_str(&(g + 1).to_string());
        for &beta in &table.betas {
            let row = table
                .rows
                .iter()
                .find(|r| r.beta == beta && r.seed == first_seed && r.group == g)
                .expect("complete table");
            out.push_str(&format!(
                ",{},{}",
                fmt_f64(row.initial_size),
                fmt_f64(row.final_size)
            ));
        }
        out.push('\n');
    }
    out.push('\n');
    out.push_str("beta,mean_gini,std_gini,mean_ratio,mean_max_share\n");
    for agg in &table.aggregates {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(agg.beta),
            fmt_f64(agg.mean_gini),
            fmt_f64(agg.std_gini),
            fmt_f64(agg.mean_ratio),
            fmt_f64(agg.mean_max_share),
        ));
    }
    out
}

/// Long-format rows: every `(beta, seed, group)` observation.
pub fn summary_rows_csv(table: &SummaryTable) -> String {
    let mut out = String::from("beta,seed,group,initial_size,final_size,final_pi,final_p\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt_f64(r.beta),
            r.seed,
            r.group + 1,
            fmt_f64(r.initial_size),
            fmt_f64(r.final_size),
            fmt_f64(r.final_pi),
            fmt_f64(r.final_p),
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// JSON payloads
// ---------------------------------------------------------------------------

/// Complex values serialize as `(re, im)` pairs.
pub fn complex_json(c: Complex64) -> serde_json::Value {
    json!({ "re": c.re, "im": c.im })
}

pub fn fixed_point_json(result: &FixedPointResult) -> serde_json::Value {
    json!({
        "pi_star": result.pi_star.pi,
        "residual_norm": result.residual_norm,
        "iterations": result.iterations,
        "converged": result.converged,
    })
}

pub fn spectral_report_json(report: &SpectralReport) -> serde_json::Value {
    json!({
        "k_groups": report.k_groups,
        "jacobian": report.jacobian,
        "eigenvalues": report.eigenvalues.iter().map(|&l| complex_json(l)).collect::<Vec<_>>(),
        "eigenvectors": report
            .eigenvectors
            .iter()
            .map(|v| v.iter().map(|&c| complex_json(c)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "residuals": report.residuals,
        "tangent_eigenvalues": report
            .tangent_eigenvalues
            .iter()
            .map(|&l| complex_json(l))
            .collect::<Vec<_>>(),
        "classification": report.classification.to_string(),
    })
}

pub fn ensemble_json(summary: &EnsembleSummary) -> serde_json::Value {
    serde_json::to_value(summary).expect("serializable summary")
}

pub fn summary_table_json(table: &SummaryTable) -> serde_json::Value {
    serde_json::to_value(table).expect("serializable table")
}
