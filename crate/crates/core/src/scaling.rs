//! Doubly stochastic scaling by Sinkhorn balancing.
//!
//! Every positive matrix `X` factors uniquely as `x_ij = y_ij λ_i μ_j` with `Y`
//! doubly stochastic. The multipliers are tracked in natural log, and the scaling
//! functional is `σ(X) = Π λ_i μ_i`, so `ln σ = Σ ln λ_i + Σ ln μ_j`.
//! `σ` is log-concave on the simplex and peaks at `n^{-n}` on the uniform matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, SimplexMatrix};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Output of [`sinkhorn_scale`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    /// The doubly stochastic scaling `Y`.
    pub y: Matrix,
    /// `ln λ_i`.
    pub log_row_factors: Vec<f64>,
    /// `ln μ_j`.
    pub log_col_factors: Vec<f64>,
    /// `ln σ(X)`.
    pub log_sigma: f64,
    pub iterations: usize,
    /// Max deviation of any row or column sum of `Y` from 1.
    pub residual: f64,
}

/// Balances a point of the simplex.
pub fn sinkhorn_scale(x: &SimplexMatrix, tol: f64, max_iter: usize) -> Result<ScalingResult> {
    balance(x.matrix(), tol, max_iter, |_| {})
}

/// Balances an arbitrary positive matrix without projecting it onto the simplex.
///
/// `σ` is homogeneous of degree `n`, so the result's `log_sigma` equals
/// `n ln(total) + log_sigma(projection)`.
pub fn sinkhorn_scale_positive(a: &Matrix, tol: f64, max_iter: usize) -> Result<ScalingResult> {
    check_positive(a)?;
    balance(a, tol, max_iter, |_| {})
}

/// Like [`sinkhorn_scale_positive`] but calls `observer` with the iterate after
/// every row pass and every column pass.
pub fn sinkhorn_scale_observed(
    a: &Matrix,
    tol: f64,
    max_iter: usize,
    observer: impl FnMut(&Matrix),
) -> Result<ScalingResult> {
    check_positive(a)?;
    balance(a, tol, max_iter, observer)
}

fn check_positive(a: &Matrix) -> Result<()> {
    if a.n() == 0 {
        return Err(Error::invalid("matrix must be at least 1×1"));
    }
    if a.as_slice().iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("scaling requires a strictly positive finite matrix"));
    }
    Ok(())
}

fn balance(
    a: &Matrix,
    tol: f64,
    max_iter: usize,
    observer: impl FnMut(&Matrix),
) -> Result<ScalingResult> {
    let r = iterate(a, tol, max_iter, observer)?;
    if r.residual <= tol {
        Ok(r)
    } else {
        Err(Error::NoConvergence { iterations: max_iter, residual: r.residual })
    }
}

/// Sinkhorn passes until `residual ≤ tol` or `max_iter`; returns the last iterate either way.
fn iterate(a: &Matrix, tol: f64, max_iter: usize, mut observer: impl FnMut(&Matrix)) -> Result<ScalingResult> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be at least 1"));
    }
    let n = a.n();
    let mut y = a.clone();
    let mut log_r = vec![0.0; n];
    let mut log_c = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    for iter in 1..=max_iter {
        iterations = iter;
        let data = y.as_mut_slice();
        for (i, row) in data.chunks_exact_mut(n).enumerate() {
            let s: f64 = row.iter().sum();
            let inv = 1.0 / s;
            row.iter_mut().for_each(|v| *v *= inv);
            log_r[i] += s.ln();
        }
        observer(&y);

        let data = y.as_mut_slice();
        col.iter_mut().for_each(|c| *c = 0.0);
        for row in data.chunks_exact(n) {
            for (c, v) in col.iter_mut().zip(row) {
                *c += v;
            }
        }
        for (lc, c) in log_c.iter_mut().zip(&mut col) {
            *lc += c.ln();
            *c = 1.0 / *c;
        }
        for row in data.chunks_exact_mut(n) {
            for (v, c) in row.iter_mut().zip(&col) {
                *v *= c;
            }
        }
        observer(&y);

        residual = y.doubly_stochastic_residual();
        if residual <= tol {
            break;
        }
    }
    let log_sigma = log_r.iter().sum::<f64>() + log_c.iter().sum::<f64>();
    Ok(ScalingResult { y, log_row_factors: log_r, log_col_factors: log_c, log_sigma, iterations, residual })
}

/// Sinkhorn passes before [`scale_robust`] switches to Newton steps.
pub const SINKHORN_WARM_ITER: usize = 100;

/// Scales a positive matrix to tolerance `tol`, finishing with Newton steps on
/// the dual problem when Sinkhorn stalls.
///
/// Near the boundary of the simplex the Sinkhorn contraction rate approaches 1
/// (an entry of size `ε` costs on the order of `ε^{-1/2}` passes), so after
/// [`SINKHORN_WARM_ITER`] passes the current iterate is balanced exactly by
/// minimizing `ln Σ y_ij e^{u_i + v_j}`.
pub fn scale_robust(a: &Matrix, tol: f64) -> Result<ScalingResult> {
    check_positive(a)?;
    let warm = iterate(a, tol, SINKHORN_WARM_ITER, |_| {})?;
    if warm.residual <= tol {
        return Ok(warm);
    }
    let n = a.n();
    let y = &warm.y;
    let nf = n as f64;
    let (z, g) = minimize_dual(y, tol / (4.0 * nf))?;
    let (u, v) = expand(n, &z);
    let mut out = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = nf * (y[(i, j)].ln() + u[i] + v[j] - g).exp();
        }
    }
    let residual = out.doubly_stochastic_residual();
    if !(residual <= tol) {
        return Err(Error::NoConvergence { iterations: warm.iterations, residual });
    }
    let shift = g - nf.ln();
    let log_row_factors: Vec<f64> =
        warm.log_row_factors.iter().zip(&u).map(|(l, ui)| l - ui + shift).collect();
    let log_col_factors: Vec<f64> = warm.log_col_factors.iter().zip(&v).map(|(l, vj)| l - vj).collect();
    Ok(ScalingResult {
        y: out,
        log_sigma: warm.log_sigma + nf * shift,
        log_row_factors,
        log_col_factors,
        iterations: warm.iterations,
        residual,
    })
}

/// `ln σ(X)` with default tolerances.
pub fn log_sigma(x: &SimplexMatrix) -> Result<f64> {
    scale_robust(x.matrix(), DEFAULT_TOL).map(|r| r.log_sigma)
}

/// `ln σ(A)` for a positive matrix off the simplex (the cone extension).
pub fn log_sigma_positive(a: &Matrix) -> Result<f64> {
    scale_robust(a, DEFAULT_TOL).map(|r| r.log_sigma)
}

/// `ln σ(X)` from the variational representation
/// `n^n σ(X) = (min Σ x_ij ξ_i η_j)^n` over `ξ, η > 0` with `Π ξ_i = Π η_j = 1`.
///
/// Minimizes `g(u, v) = ln Σ x_ij e^{u_i + v_j}` over `Σu = Σv = 0` by damped
/// Newton steps; `g` is convex and strictly convex on that subspace. Independent of
/// the Sinkhorn path and used to cross-check it.
pub fn sigma_via_minimization(x: &SimplexMatrix, tol: f64) -> Result<f64> {
    let n = x.n();
    if n == 1 {
        return Ok(x[(0, 0)].ln());
    }
    let (_, g) = minimize_dual(x.matrix(), tol)?;
    Ok(n as f64 * g - n as f64 * (n as f64).ln())
}

/// Minimizer `z` (reduced coordinates) and minimum of `g` to gradient norm `tol`.
fn minimize_dual(x: &Matrix, tol: f64) -> Result<(Vec<f64>, f64)> {
    let n = x.n();
    let m = 2 * n - 2;
    let mut z = vec![0.0; m];
    let mut g = objective(x, &z);
    let max_iter = 500;
    let mut grad_norm = f64::INFINITY;

    for _ in 0..max_iter {
        let (grad, hess) = reduced_derivatives(x, &z);
        grad_norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
        if grad_norm <= tol {
            return Ok((z, g));
        }
        let step = solve(hess, grad.iter().map(|v| -v).collect())
            .ok_or_else(|| Error::Numeric("singular Newton system".into()))?;
        let slope: f64 = step.iter().zip(&grad).map(|(s, d)| s * d).sum();
        // near the optimum the decrease drops below the rounding of g
        let slack = 8.0 * f64::EPSILON * g.abs().max(1.0);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = z.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
            let gt = objective(x, &trial);
            if gt <= g + 1e-4 * alpha * slope + slack || alpha < 1e-12 {
                z = trial;
                g = gt;
                break;
            }
            alpha *= 0.5;
        }
    }
    Err(Error::OptimizerFailed { iterations: max_iter, grad_norm })
}

/// Full `(u, v)` from the reduced coordinates; the last entry of each block is
/// minus the sum of the others.
fn expand(n: usize, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut u: Vec<f64> = z[..n - 1].to_vec();
    u.push(-u.iter().sum::<f64>());
    let mut v: Vec<f64> = z[n - 1..].to_vec();
    v.push(-v.iter().sum::<f64>());
    (u, v)
}

fn objective(x: &Matrix, z: &[f64]) -> f64 {
    let n = x.n();
    let (u, v) = expand(n, z);
    let terms: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| x[(i, j)].ln() + u[i] + v[j])
        .collect();
    crate::numeric::log_sum_exp(&terms)
}

fn reduced_derivatives(x: &Matrix, z: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = x.n();
    let (u, v) = expand(n, z);
    let g = objective(x, z);
    let mut p = Matrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = (x[(i, j)].ln() + u[i] + v[j] - g).exp();
        }
    }
    let r = p.row_sums();
    let c = p.col_sums();
    // full gradient/Hessian over (u_0..u_{n-1}, v_0..v_{n-1})
    let dim = 2 * n;
    let mut grad_full = vec![0.0; dim];
    grad_full[..n].copy_from_slice(&r);
    grad_full[n..].copy_from_slice(&c);
    let mut h = vec![vec![0.0; dim]; dim];
    for a in 0..dim {
        for b in 0..dim {
            let second = match (a < n, b < n) {
                (true, true) => if a == b { r[a] } else { 0.0 },
                (false, false) => if a == b { c[a - n] } else { 0.0 },
                (true, false) => p[(a, b - n)],
                (false, true) => p[(b, a - n)],
            };
            h[a][b] = second - grad_full[a] * grad_full[b];
        }
    }
    // chain rule through the elimination map: d full / d z
    let m = 2 * n - 2;
    let jac = |full: usize, red: usize| -> f64 {
        let (block, idx) = if full < n { (0, full) } else { (1, full - n) };
        let (rblock, ridx) = if red < n - 1 { (0, red) } else { (1, red - (n - 1)) };
        if block != rblock {
            0.0
        } else if idx == n - 1 {
            -1.0
        } else if idx == ridx {
            1.0
        } else {
            0.0
        }
    };
    let mut grad = vec![0.0; m];
    for (k, gk) in grad.iter_mut().enumerate() {
        *gk = (0..dim).map(|a| jac(a, k) * grad_full[a]).sum();
    }
    let mut hess = vec![vec![0.0; m]; m];
    for k in 0..m {
        for l in 0..m {
            let mut s = 0.0;
            for a in 0..dim {
                let ja = jac(a, k);
                if ja == 0.0 {
                    continue;
                }
                for b in 0..dim {
                    let jb = jac(b, l);
                    if jb != 0.0 {
                        s += ja * h[a][b] * jb;
                    }
                }
            }
            hess[k][l] = s;
        }
    }
    (grad, hess)
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let m = b.len();
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..m {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..m {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; m];
    for row in (0..m).rev() {
        let s: f64 = (row + 1..m).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Upper bound on `ln b_kl` for the doubly stochastic scaling `B` of a positive
/// `n × n` matrix `A`, `n ≥ 3`:
///
/// `ln a_kl − (1/(n−2)) Σ_{j≠l} ln a_kj − (1/(n−2)) Σ_{i≠k} ln a_il
///  + (n/(n−2)) ln((1/n) Σ a_ij) − ((2n−2)/(n−2)) ln(n−1)`.
///
/// Invariant under `A → τA`.
pub fn scaling_entry_bound(a: &Matrix, k: usize, l: usize) -> Result<f64> {
    let n = a.n();
    if n < 3 {
        return Err(Error::invalid(format!("entry bound needs n ≥ 3, got {n}")));
    }
    if k >= n || l >= n {
        return Err(Error::invalid(format!("index ({k}, {l}) out of range for n = {n}")));
    }
    check_positive(a)?;
    let nf = n as f64;
    let d = nf - 2.0;
    let row: f64 = (0..n).filter(|&j| j != l).map(|j| a[(k, j)].ln()).sum();
    let col: f64 = (0..n).filter(|&i| i != k).map(|i| a[(i, l)].ln()).sum();
    Ok(a[(k, l)].ln() - row / d - col / d + nf / d * (a.total() / nf).ln()
        - (2.0 * nf - 2.0) / d * (nf - 1.0).ln())
}
