//! Dense nonsymmetric eigendecomposition for small matrices.
//!
//! Eigenvalues come from the real Schur form (balanced Hessenberg + shifted
//! QR, via nalgebra); right eigenvectors are recovered by inverse iteration
//! with complex shifts on the original matrix. Correctness is defined by the
//! residual contract `|m v - lambda v| <= 1e-8 |m|`, not by the algorithm:
//! every returned pair is checked against it.
//!
//! Repeated eigenvalues with a full eigenspace are handled by
//! orthogonalizing iterates within an eigenvalue cluster; a defective
//! (Jordan-block) matrix still satisfies the per-pair residual contract but
//! yields linearly dependent vectors, which downstream consumers detect via
//! the eigenvector-matrix condition number.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Residual acceptance threshold, relative to the Frobenius norm.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Largest supported dimension.
pub const MAX_DIM: usize = 128;

const QR_MAX_ITER: usize = 4000;
const INVERSE_ITERATIONS: usize = 6;
const RESTARTS: usize = 4;

/// Eigenvalues (descending real part, conjugate pairs adjacent) with unit
/// right eigenvectors and the per-pair residuals `|m v - lambda v|`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<Complex64>,
    pub vectors: Vec<Vec<Complex64>>,
    pub residuals: Vec<f64>,
}

/// Full complex spectrum with residual-checked right eigenvectors.
pub fn eigen_decompose(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::InvalidConfig(format!(
            "eigendecomposition needs a square nonempty matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if n > MAX_DIM {
        return Err(Error::InvalidConfig(format!(
            "matrix dimension {n} exceeds the supported maximum {MAX_DIM}"
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(
            "matrix contains non-finite entries".into(),
        ));
    }
    let scale = m.norm().max(f64::MIN_POSITIVE);

    let mut values = schur_eigenvalues(m)?;
    // Descending real part; ties broken by descending imaginary part, which
    // keeps conjugate pairs adjacent with the +i member first.
    values.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });

    let cluster_tol = 1e-8 * scale;
    let mut vectors: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);

    for (i, &lambda) in values.iter().enumerate() {
        let cluster: Vec<usize> = (0..i)
            .filter(|&j| (values[j] - lambda).norm() <= cluster_tol)
            .collect();
        let mut best: Option<(Vec<Complex64>, f64)> = None;
        'search: for orthogonalize in [true, false] {
            if orthogonalize && cluster.is_empty() {
                continue;
            }
            for restart in 0..RESTARTS {
                let seed = (i as u64) << 8 | restart as u64;
                let ortho: Vec<&[Complex64]> = if orthogonalize {
                    cluster.iter().map(|&j| vectors[j].as_slice()).collect()
                } else {
                    Vec::new()
                };
                let (v, r) = inverse_iteration(m, lambda, scale, seed, &ortho);
                if best.as_ref().is_none_or(|(_, br)| r < *br) {
                    best = Some((v, r));
                }
                if best.as_ref().unwrap().1 <= RESIDUAL_TOL * scale * 1e-2 {
                    break 'search;
                }
            }
        }
        let (mut v, r) = best.expect("at least one restart ran");
        if r > RESIDUAL_TOL * scale {
            return Err(Error::EigenNoConvergence {
                iterations: RESTARTS * INVERSE_ITERATIONS,
                detail: Some(format!(
                    "eigenvector residual {r:.3e} exceeds {:.3e} for lambda = {lambda}",
                    RESIDUAL_TOL * scale
                )),
            });
        }
        normalize_phase(&mut v);
        vectors.push(v);
        residuals.push(r);
    }

    Ok(EigenDecomposition {
        values,
        vectors,
        residuals,
    })
}

/// Eigenvalues from the quasi-triangular factor of the real Schur form.
fn schur_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let n = m.nrows();
    if n == 1 {
        return Ok(vec![Complex64::new(m[(0, 0)], 0.0)]);
    }
    // The QR deflation threshold is laddered: near-scalar matrices (all
    // eigenvalues equal up to noise, as finite-difference Jacobians at
    // symmetric points are) stall at machine epsilon. Eigenvalue accuracy
    // is still enforced by the downstream residual check.
    let schur = [f64::EPSILON, 1e-14, 1e-12, 1e-10, 1e-9]
        .into_iter()
        .find_map(|eps| nalgebra::linalg::Schur::try_new(m.clone(), eps, QR_MAX_ITER))
        .ok_or(Error::EigenNoConvergence {
            iterations: QR_MAX_ITER,
            detail: Some("QR iteration did not reduce the matrix to Schur form".into()),
        })?;
    let (_, t) = schur.unpack();

    let mut values = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let sub = if i + 1 < n { t[(i + 1, i)] } else { 0.0 };
        if i + 1 < n && sub != 0.0 {
            // 2x2 block: eigenvalues of [[a, b], [c, d]].
            let a = t[(i, i)];
            let b = t[(i, i + 1)];
            let c = t[(i + 1, i)];
            let d = t[(i + 1, i + 1)];
            let mean = 0.5 * (a + d);
            let disc = 0.25 * (a - d) * (a - d) + b * c;
            if disc < 0.0 {
                let im = (-disc).sqrt();
                values.push(Complex64::new(mean, im));
                values.push(Complex64::new(mean, -im));
            } else {
                let s = disc.sqrt();
                values.push(Complex64::new(mean + s, 0.0));
                values.push(Complex64::new(mean - s, 0.0));
            }
            i += 2;
        } else {
            values.push(Complex64::new(t[(i, i)], 0.0));
            i += 1;
        }
    }
    Ok(values)
}

/// One inverse-iteration run; returns the best iterate and its residual.
fn inverse_iteration(
    m: &DMatrix<f64>,
    lambda: Complex64,
    scale: f64,
    seed: u64,
    ortho: &[&[Complex64]],
) -> (Vec<Complex64>, f64) {
    let n = m.nrows();
    // Shifted matrix m - lambda I; near-singular by construction. Tiny
    // pivots are replaced during factorization, which is exactly what makes
    // the solve blow up along the wanted eigenvector.
    let mut shifted = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            shifted[i * n + j] = Complex64::new(m[(i, j)], 0.0);
        }
        shifted[i * n + i] -= lambda;
    }
    let pivot_floor = f64::EPSILON * scale * n as f64;
    let lu = ComplexLu::factor(shifted, n, pivot_floor);

    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(0xD1B54A32D192ED03);
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(unit_draw(&mut state), unit_draw(&mut state)))
        .collect();
    normalize(&mut v);

    // Only post-solve iterates are candidates: the raw start may already
    // meet the residual bound (degenerate shifted matrix) without having
    // been orthogonalized against its eigenvalue cluster.
    let mut best_v = v.clone();
    let mut best_r = f64::INFINITY;
    for _ in 0..INVERSE_ITERATIONS {
        let mut w = v.clone();
        lu.solve(&mut w);
        for basis in ortho {
            let proj: Complex64 = basis
                .iter()
                .zip(&w)
                .map(|(&b, &x)| b.conj() * x)
                .sum();
            for (wi, &bi) in w.iter_mut().zip(*basis) {
                *wi -= proj * bi;
            }
        }
        let norm = l2_norm(&w);
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        for wi in w.iter_mut() {
            *wi /= norm;
        }
        let r = residual(m, lambda, &w);
        if r < best_r {
            best_r = r;
            best_v = w.clone();
        }
        if best_r <= f64::EPSILON * scale {
            break;
        }
        v = w;
    }
    (best_v, best_r)
}

fn residual(m: &DMatrix<f64>, lambda: Complex64, v: &[Complex64]) -> f64 {
    let n = m.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..n {
            acc += m[(i, j)] * v[j];
        }
        acc -= lambda * v[i];
        sum += acc.norm_sqr();
    }
    sum.sqrt()
}

fn l2_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(v: &mut [Complex64]) {
    let norm = l2_norm(v);
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
}

/// Rotates the phase so the largest component is real and positive; output
/// is deterministic up to that convention.
fn normalize_phase(v: &mut [Complex64]) {
    let (idx, _) = v
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.norm_sqr().partial_cmp(&b.norm_sqr()).unwrap())
        .expect("nonempty vector");
    let pivot = v[idx];
    if pivot.norm() > 0.0 {
        let phase = pivot.conj() / pivot.norm();
        for x in v.iter_mut() {
            *x *= phase;
        }
    }
    normalize(v);
}

/// SplitMix64 step mapped to [-1, 1); deterministic start vectors without
/// dragging an RNG dependency into the solver.
fn unit_draw(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 52) as f64 * 2.0 - 1.0
}

/// LU factorization with partial pivoting in complex arithmetic; tiny pivots
/// are replaced by `pivot_floor` so shifted near-singular systems remain
/// solvable (the standard inverse-iteration device).
pub(crate) struct ComplexLu {
    n: usize,
    a: Vec<Complex64>,
    piv: Vec<usize>,
}

impl ComplexLu {
    pub(crate) fn factor(mut a: Vec<Complex64>, n: usize, pivot_floor: f64) -> Self {
        let mut piv: Vec<usize> = (0..n).collect();
        for col in 0..n {
            let mut pivot_row = col;
            let mut pivot_mag = a[col * n + col].norm_sqr();
            for row in (col + 1)..n {
                let mag = a[row * n + col].norm_sqr();
                if mag > pivot_mag {
                    pivot_mag = mag;
                    pivot_row = row;
                }
            }
            if pivot_row != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot_row * n + j);
                }
                piv.swap(col, pivot_row);
            }
            if a[col * n + col].norm() < pivot_floor {
                a[col * n + col] = Complex64::new(pivot_floor.max(f64::MIN_POSITIVE), 0.0);
            }
            let inv_pivot = Complex64::new(1.0, 0.0) / a[col * n + col];
            for row in (col + 1)..n {
                let factor = a[row * n + col] * inv_pivot;
                a[row * n + col] = factor;
                for j in (col + 1)..n {
                    let sub = factor * a[col * n + j];
                    a[row * n + j] -= sub;
                }
            }
        }
        Self { n, a, piv }
    }

    /// Solves in place: `b` is permuted, forward- and back-substituted.
    pub(crate) fn solve(&self, b: &mut [Complex64]) {
        let n = self.n;
        let permuted: Vec<Complex64> = self.piv.iter().map(|&p| b[p]).collect();
        b.copy_from_slice(&permuted);
        for i in 1..n {
            for j in 0..i {
                let sub = self.a[i * n + j] * b[j];
                b[i] -= sub;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let sub = self.a[i * n + j] * b[j];
                b[i] -= sub;
            }
            b[i] /= self.a[i * n + i];
        }
    }
}
