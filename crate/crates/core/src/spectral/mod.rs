//! Linear stability machinery: finite-difference Jacobians of the choice
//! map, eigendecomposition of `J - I`, stability classification, linearized
//! trajectories, and the degeneracy survey of the attraction surface.
//!
//! The dynamics live on the simplex, so the stability label is computed from
//! the spectrum of `J - I` restricted to simplex-tangent directions
//! (components summing to zero); the full matrix always carries one extra
//! eigenvalue for the normal direction, which is reported but never
//! classified.

pub mod eigen;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{choice_pipeline_raw, gradient_of_m, hessian_of_m, ModelParams, SimplexState};

pub use eigen::{eigen_decompose, EigenDecomposition, MAX_DIM, RESIDUAL_TOL};

/// Real parts within this margin of zero are treated as marginal.
pub const TOL_MARGINAL: f64 = 1e-6;

/// Imaginary parts below this are numerical dust, not oscillation.
pub const TOL_IMAG: f64 = 1e-8;

/// Default finite-difference step for [`jacobian`].
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Eigenvector-matrix condition numbers beyond this are reported as
/// near-defective.
pub const MAX_EIGENVECTOR_COND: f64 = 1e8;

// ---------------------------------------------------------------------------
// Jacobian
// ---------------------------------------------------------------------------

/// Central-difference Jacobian `J_ij = dp_i / dpi_j` of the raw choice map.
///
/// Perturbed states are deliberately not renormalized: the derivative is of
/// the map as written, and since `sum_i p_i = 1` for any input the columns
/// of `J` sum to zero, so `J` maps tangent vectors to tangent vectors.
pub fn jacobian(params: &ModelParams, state: &SimplexState, h: f64) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("step h = {h} must be > 0")));
    }
    state.validate()?;
    let k = state.k_groups();
    params.validate(k)?;
    let required = 10.0 * h;
    if let Some((i, &v)) = state.pi.iter().enumerate().find(|(_, &v)| v < required) {
        return Err(Error::BoundaryProximity {
            index: i,
            value: v,
            required,
        });
    }
    let eps = params.bias.deterministic_eps(k)?;

    let mut j = DMatrix::zeros(k, k);
    let mut plus = state.pi.clone();
    let mut minus = state.pi.clone();
    for col in 0..k {
        plus[col] += h;
        minus[col] -= h;
        let p_plus = choice_pipeline_raw(params, &plus, &eps)?.probs;
        let p_minus = choice_pipeline_raw(params, &minus, &eps)?.probs;
        for row in 0..k {
            j[(row, col)] = (p_plus[row] - p_minus[row]) / (2.0 * h);
        }
        plus[col] = state.pi[col];
        minus[col] = state.pi[col];
    }
    Ok(j)
}

/// Orthonormal basis of the simplex-tangent subspace `{v : sum v = 0}` as a
/// `K x (K-1)` matrix (Helmert construction).
pub fn simplex_tangent_basis(k: usize) -> DMatrix<f64> {
    let mut basis = DMatrix::zeros(k, k - 1);
    for j in 1..k {
        let norm = (j as f64 * (j + 1) as f64).sqrt();
        for i in 0..j {
            basis[(i, j - 1)] = 1.0 / norm;
        }
        basis[(j, j - 1)] = -(j as f64) / norm;
    }
    basis
}

/// Restriction of a matrix to the simplex-tangent subspace:
/// `B^T m B` with `B` the tangent basis.
pub fn tangent_restriction(m: &DMatrix<f64>) -> DMatrix<f64> {
    let basis = simplex_tangent_basis(m.nrows());
    basis.transpose() * m * basis
}

// ---------------------------------------------------------------------------
// Stability classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityClass {
    StableNode,
    UnstableNode,
    StableSpiral,
    UnstableSpiral,
    Marginal,
}

impl std::fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let label = match self {
            StabilityClass::StableNode => "stable-node",
            StabilityClass::UnstableNode => "unstable-node",
            StabilityClass::StableSpiral => "stable-spiral",
            StabilityClass::UnstableSpiral => "unstable-spiral",
            StabilityClass::Marginal => "marginal",
        };
        f.write_str(label)
    }
}

/// Node/spiral x stable/unstable labeling of a spectrum (intended for the
/// simplex-tangent modes).
pub fn classify_equilibrium(eigenvalues: &[Complex64]) -> StabilityClass {
    assert!(!eigenvalues.is_empty(), "empty spectrum");
    let oscillatory = eigenvalues.iter().any(|l| l.im.abs() > TOL_IMAG);
    if eigenvalues.iter().all(|l| l.re < -TOL_MARGINAL) {
        if oscillatory {
            StabilityClass::StableSpiral
        } else {
            StabilityClass::StableNode
        }
    } else if eigenvalues.iter().any(|l| l.re > TOL_MARGINAL) {
        if oscillatory {
            StabilityClass::UnstableSpiral
        } else {
            StabilityClass::UnstableNode
        }
    } else {
        StabilityClass::Marginal
    }
}

// ---------------------------------------------------------------------------
// Linearized trajectories
// ---------------------------------------------------------------------------

/// Modal solution `y(t) = sum_i c_i v^(i) exp(lambda_i t)` of
/// `dy/dt = m y`, with the coefficients solved from `V c = y0`.
///
/// Requires `m` to be diagonalizable in the numerical sense: an
/// eigenvector-matrix condition number above [`MAX_EIGENVECTOR_COND`] is
/// reported as an error rather than regularized.
pub fn linearized_trajectory(
    m: &DMatrix<f64>,
    y0: &[f64],
    times: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = m.nrows();
    if y0.len() != n {
        return Err(Error::InvalidConfig(format!(
            "y0 has {} entries, expected {n}",
            y0.len()
        )));
    }
    let eig = eigen_decompose(m)?;

    let v_mat = DMatrix::from_fn(n, n, |i, j| eig.vectors[j][i]);
    let singular = v_mat.clone().svd(false, false).singular_values;
    let smin = singular.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = singular.iter().cloned().fold(0.0, f64::max);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > MAX_EIGENVECTOR_COND {
        return Err(Error::IllConditionedDecomposition { cond });
    }

    // Solve V c = y0 in complex arithmetic.
    let mut flat = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            flat[i * n + j] = v_mat[(i, j)];
        }
    }
    let lu = eigen::ComplexLu::factor(flat, n, 0.0);
    let mut coeffs: Vec<Complex64> = y0.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    lu.solve(&mut coeffs);

    let states = times
        .iter()
        .map(|&t| {
            (0..n)
                .map(|k| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for ((c, v), l) in coeffs.iter().zip(&eig.vectors).zip(&eig.values) {
                        acc += c * v[k] * (l * t).exp();
                    }
                    // Real input and matrix: conjugate modes cancel the
                    // imaginary parts up to roundoff.
                    acc.re
                })
                .collect()
        })
        .collect();
    Ok(states)
}

// ---------------------------------------------------------------------------
// Spectral report
// ---------------------------------------------------------------------------

/// Jacobian, spectrum of `J - I`, and the stability label of the tangent
/// modes at one evaluation point.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub k_groups: usize,
    /// Row-major `J` at the evaluation point.
    pub jacobian: Vec<Vec<f64>>,
    /// Full spectrum of `J - I`, descending real part.
    pub eigenvalues: Vec<Complex64>,
    /// Unit right eigenvectors matching `eigenvalues`.
    pub eigenvectors: Vec<Vec<Complex64>>,
    /// Per-pair residuals `|(J - I) v - lambda v|`.
    pub residuals: Vec<f64>,
    /// Spectrum of `J - I` restricted to simplex-tangent directions; the
    /// one omitted eigenvalue belongs to the simplex-normal direction.
    pub tangent_eigenvalues: Vec<Complex64>,
    /// Classification of the tangent spectrum.
    pub classification: StabilityClass,
}

/// Evaluates the Jacobian at `state`, decomposes `J - I`, and classifies the
/// tangent modes.
pub fn spectral_report(params: &ModelParams, state: &SimplexState, h: f64) -> Result<SpectralReport> {
    let k = state.k_groups();
    let j = jacobian(params, state, h)?;
    let m = &j - DMatrix::identity(k, k);

    let full = eigen_decompose(&m)?;
    let tangent = eigen_decompose(&tangent_restriction(&m))?;
    let classification = classify_equilibrium(&tangent.values);

    Ok(SpectralReport {
        k_groups: k,
        jacobian: (0..k)
            .map(|r| (0..k).map(|c| j[(r, c)]).collect())
            .collect(),
        eigenvalues: full.values,
        eigenvectors: full.vectors,
        residuals: full.residuals,
        tangent_eigenvalues: tangent.values,
        classification,
    })
}

// ---------------------------------------------------------------------------
// Hessian degeneracy survey
// ---------------------------------------------------------------------------

/// Grid survey of the attraction-surface Hessian on the interior triangle
/// `0 < x <= y < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianReport {
    pub grid_n: usize,
    /// Largest `|det H|` seen.
    pub max_abs_det: f64,
    /// Largest `|det H| / |H|_F^2`; rank-one degeneracy keeps this at
    /// roundoff level.
    pub max_det_ratio: f64,
    /// Smallest eigenvalue over the grid (positive semidefiniteness).
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Largest `|H (x, y)| / |H|_F`: the flat direction through each point.
    pub max_flat_residual_ratio: f64,
    /// Largest relative gap between the top eigenvalue and the trace; zero
    /// determinant forces them equal.
    pub max_trace_gap: f64,
    /// Smallest gradient norm over the grid; bounded away from zero because
    /// the surface has no interior critical point.
    pub min_gradient_norm: f64,
}

impl HessianReport {
    /// The rank-one degeneracy criteria at their standard thresholds.
    pub fn is_degenerate_rank_one(&self) -> bool {
        self.max_det_ratio < 1e-9
            && self.min_eigenvalue >= -1e-12
            && self.max_flat_residual_ratio <= 1e-9
    }
}

/// Evaluates the closed-form Hessian on a `grid_n x grid_n` interior grid
/// (points folded onto `x <= y`) and aggregates the degeneracy diagnostics.
pub fn hessian_degeneracy_report(grid_n: usize) -> HessianReport {
    assert!(grid_n >= 2, "grid_n must be >= 2");
    let step = 1.0 / (grid_n + 1) as f64;
    let cells: Vec<(usize, usize)> = (1..=grid_n)
        .flat_map(|i| (1..=grid_n).map(move |j| (i, j)))
        .collect();

    struct Acc {
        max_abs_det: f64,
        max_det_ratio: f64,
        min_eig: f64,
        max_eig: f64,
        max_flat: f64,
        max_trace_gap: f64,
        min_grad: f64,
    }

    let per_cell: Vec<Acc> = cells
        .par_iter()
        .map(|&(i, j)| {
            let (x, y) = {
                let a = i as f64 * step;
                let b = j as f64 * step;
                (a.min(b), a.max(b))
            };
            let h = hessian_of_m(x, y).expect("interior point");
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let norm2 = h.iter().flatten().map(|v| v * v).sum::<f64>();
            let norm = norm2.sqrt();
            let trace = h[0][0] + h[1][1];
            // Symmetric 2x2 eigenvalues.
            let disc = (0.25 * (h[0][0] - h[1][1]) * (h[0][0] - h[1][1])
                + h[0][1] * h[0][1])
                .max(0.0)
                .sqrt();
            let eig_hi = 0.5 * trace + disc;
            let eig_lo = 0.5 * trace - disc;
            let flat = {
                let r0 = h[0][0] * x + h[0][1] * y;
                let r1 = h[1][0] * x + h[1][1] * y;
                (r0 * r0 + r1 * r1).sqrt() / norm
            };
            let grad = gradient_of_m(x, y).expect("interior point");
            Acc {
                max_abs_det: det.abs(),
                max_det_ratio: det.abs() / norm2,
                min_eig: eig_lo,
                max_eig: eig_hi,
                max_flat: flat,
                max_trace_gap: (eig_hi - trace).abs() / trace,
                min_grad: (grad[0] * grad[0] + grad[1] * grad[1]).sqrt(),
            }
        })
        .collect();

    let mut report = HessianReport {
        grid_n,
        max_abs_det: 0.0,
        max_det_ratio: 0.0,
        min_eigenvalue: f64::INFINITY,
        max_eigenvalue: f64::NEG_INFINITY,
        max_flat_residual_ratio: 0.0,
        max_trace_gap: 0.0,
        min_gradient_norm: f64::INFINITY,
    };
    for acc in per_cell {
        report.max_abs_det = report.max_abs_det.max(acc.max_abs_det);
        report.max_det_ratio = report.max_det_ratio.max(acc.max_det_ratio);
        report.min_eigenvalue = report.min_eigenvalue.min(acc.min_eig);
        report.max_eigenvalue = report.max_eigenvalue.max(acc.max_eig);
        report.max_flat_residual_ratio = report.max_flat_residual_ratio.max(acc.max_flat);
        report.max_trace_gap = report.max_trace_gap.max(acc.max_trace_gap);
        report.min_gradient_norm = report.min_gradient_norm.min(acc.min_grad);
    }
    report
}
