//! The integrand `f = p φ` over the simplex.
//!
//! * `φ(X) = C(n, t) σ^t(X)` with
//!   `C = (N+n²−1)! N! t^N / ((n²−1)! (t!)^{2n} N^N)`, log-concave;
//! * `p(X) = N^N / N! · per(Y ⊗ J_t)` with `Y` the doubly stochastic scaling of `X`;
//!   van der Waerden gives `p ≥ 1`;
//! * `ψ_s = σ^s`, the annealing family used by the telescoping estimator.
//!
//! All factorials go through log-gamma.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, SimplexMatrix};
use crate::numeric::ln_factorial;
use crate::permanent::{exact_permanent, kron_with_jt, MAX_EXACT_N};
use crate::scaling::{log_sigma, scale_robust, DEFAULT_TOL};

/// Default threshold exponent β in `ln T = β (ln N)²`.
pub const DEFAULT_THRESHOLD_BETA: f64 = 2.0;

/// Magic squares of side `n` with line sum `t`; `N = n t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: usize,
    pub t: usize,
}

impl ProblemSpec {
    pub fn new(n: usize, t: usize) -> Result<Self> {
        if n == 0 || t == 0 {
            return Err(Error::invalid(format!("n and t must be positive, got n = {n}, t = {t}")));
        }
        n.checked_mul(t).ok_or_else(|| Error::invalid("n·t overflows"))?;
        Ok(ProblemSpec { n, t })
    }

    /// Total of every table, `N = n t`.
    pub fn total(&self) -> usize {
        self.n * self.t
    }
}

/// Log-values of the factors at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityValue {
    pub log_phi: f64,
    pub log_p: Option<f64>,
    pub log_f: Option<f64>,
}

impl DensityValue {
    pub fn with_p(log_phi: f64, log_p: f64) -> Self {
        DensityValue { log_phi, log_p: Some(log_p), log_f: Some(log_p + log_phi) }
    }
}

/// `ln C(n, t)` for the constant in front of `σ^t` in `φ`.
pub fn log_phi_const(spec: ProblemSpec) -> f64 {
    let n = spec.n as u64;
    let t = spec.t as u64;
    let big_n = n * t;
    let nn = (big_n as f64).ln();
    ln_factorial(big_n + n * n - 1) + ln_factorial(big_n) + big_n as f64 * (t as f64).ln()
        - ln_factorial(n * n - 1)
        - 2.0 * n as f64 * ln_factorial(t)
        - big_n as f64 * nn
}

/// `ln φ(X)`.
pub fn log_phi(x: &SimplexMatrix, spec: ProblemSpec) -> Result<f64> {
    check_side(x, spec)?;
    Ok(log_phi_const(spec) + spec.t as f64 * log_sigma(x)?)
}

/// `ln φ` extended to the positive cone by homogeneity of degree `N`:
/// `φ(Z) = λ^N φ(Z/λ)` with `λ` the total of `Z`.
pub fn log_phi_cone(z: &Matrix, spec: ProblemSpec) -> Result<f64> {
    let x = SimplexMatrix::project(z)?;
    Ok(spec.total() as f64 * z.total().ln() + log_phi(&x, spec)?)
}

/// `ln ψ_s(X) = s ln σ(X)`; `s` need not be an integer.
pub fn log_psi(x: &SimplexMatrix, s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid(format!("exponent s must be positive, got {s}")));
    }
    Ok(s * log_sigma(x)?)
}

/// `ln p(X) = N ln N − ln N! + ln per(Y ⊗ J_t)`, exact for `N ≤ 24`.
pub fn log_p_exact(x: &SimplexMatrix, spec: ProblemSpec) -> Result<f64> {
    check_side(x, spec)?;
    let big_n = spec.total();
    if big_n > MAX_EXACT_N {
        return Err(Error::SizeCap { what: "N = n·t for exact p", value: big_n as u64, cap: MAX_EXACT_N as u64 });
    }
    if spec.n == 1 {
        return Ok(0.0);
    }
    let scaled = scale_robust(x.matrix(), DEFAULT_TOL)?;
    let y = snap_doubly_stochastic(scaled.y);
    let kron = kron_with_jt(&y, spec.t)?;
    let per = exact_permanent(&kron)?;
    let nf = big_n as f64;
    Ok(nf * nf.ln() - ln_factorial(big_n as u64) + per.ln())
}

/// Column sums of a Sinkhorn output are exact to rounding and rows sit within the
/// tolerance; one more row pass tightens rows so the result passes strict checks.
fn snap_doubly_stochastic(mut y: Matrix) -> Matrix {
    let n = y.n();
    for i in 0..n {
        let s: f64 = y.row(i).iter().sum();
        for j in 0..n {
            y[(i, j)] /= s;
        }
    }
    y
}

/// Every factor at once; `p` only when `N ≤ 24`.
pub fn evaluate(x: &SimplexMatrix, spec: ProblemSpec) -> Result<DensityValue> {
    let log_phi = log_phi(x, spec)?;
    if spec.total() <= MAX_EXACT_N {
        Ok(DensityValue::with_p(log_phi, log_p_exact(x, spec)?))
    } else {
        Ok(DensityValue { log_phi, log_p: None, log_f: None })
    }
}

/// `ln p̄ = min(ln p, ln T)`.
pub fn clip_log_p(log_p: f64, log_t: f64) -> f64 {
    assert!(!log_t.is_nan(), "threshold must not be NaN");
    log_p.min(log_t)
}

/// `ln T = β (ln N)²`, i.e. `T = N^{β ln N}`.
pub fn log_threshold(spec: ProblemSpec, beta: f64) -> f64 {
    let l = (spec.total() as f64).ln();
    beta * l * l
}

/// The Lipschitz constant `N/δ` of `ln φ` in the max-norm on the `δ`-interior.
pub fn lipschitz_log_phi_bound(spec: ProblemSpec, delta: f64) -> Result<f64> {
    let limit = 1.0 / (spec.n * spec.n) as f64;
    if !(delta > 0.0 && delta < limit) {
        return Err(Error::invalid(format!("delta must lie in (0, {limit}), got {delta}")));
    }
    Ok(spec.total() as f64 / delta)
}

/// Upper bound on `ln p`: `n ln t! + N ln N − N ln t − ln N!`.
pub fn log_p_upper_bound(spec: ProblemSpec) -> f64 {
    let n = spec.n as f64;
    let big_n = spec.total() as f64;
    n * ln_factorial(spec.t as u64) + big_n * big_n.ln() - big_n * (spec.t as f64).ln()
        - ln_factorial(spec.total() as u64)
}

fn check_side(x: &SimplexMatrix, spec: ProblemSpec) -> Result<()> {
    if x.n() != spec.n {
        return Err(Error::invalid(format!("matrix side {} does not match n = {}", x.n(), spec.n)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, t: usize) -> ProblemSpec {
        ProblemSpec::new(n, t).unwrap()
    }

    #[test]
    fn constant_small_cases() {
        assert!(log_phi_const(spec(1, 1)).abs() < 1e-14);
        assert!((log_phi_const(spec(2, 1)) - 10f64.ln()).abs() < 1e-12);
        assert!(log_phi_const(spec(5, 10)).is_finite());
    }

    #[test]
    fn phi_at_uniform() {
        let v = log_phi(&SimplexMatrix::uniform(2), spec(2, 1)).unwrap();
        assert!((v - 2.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn psi_identities() {
        let x = SimplexMatrix::uniform(3);
        assert!((log_psi(&x, 1.0).unwrap() + 3.0 * 3f64.ln()).abs() < 1e-12);
        let y = SimplexMatrix::project(&Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 0.5]]).unwrap()).unwrap();
        let (a, b) = (0.7, 2.3);
        let lhs = log_psi(&y, a + b).unwrap();
        let rhs = log_psi(&y, a).unwrap() + log_psi(&y, b).unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        let s = spec(2, 3);
        assert!((log_psi(&y, 3.0).unwrap() - (log_phi(&y, s).unwrap() - log_phi_const(s))).abs() < 1e-10);
        assert!(log_psi(&y, 0.0).is_err());
    }

    #[test]
    fn p_is_one_for_single_cell() {
        for t in [1, 2, 7, 24] {
            let v = log_p_exact(&SimplexMatrix::uniform(1), spec(1, t)).unwrap();
            assert!(v.abs() < 1e-9, "t = {t}: {v}");
        }
    }

    #[test]
    fn p_two_by_two_single_layer() {
        let x = SimplexMatrix::project(&Matrix::from_rows(&[vec![1.0, 4.0], vec![2.0, 0.3]]).unwrap()).unwrap();
        let r = crate::scaling::sinkhorn_scale(&x, DEFAULT_TOL, crate::scaling::DEFAULT_MAX_ITER).unwrap();
        let per = r.y[(0, 0)] * r.y[(1, 1)] + r.y[(0, 1)] * r.y[(1, 0)];
        let lp = log_p_exact(&x, spec(2, 1)).unwrap();
        assert!((lp - (2.0 * per).ln()).abs() < 1e-9);
        assert!(lp >= -1e-9);
        let at_centre = log_p_exact(&SimplexMatrix::uniform(2), spec(2, 1)).unwrap();
        assert!(at_centre.abs() < 1e-12);
    }

    #[test]
    fn size_cap_on_p() {
        let e = log_p_exact(&SimplexMatrix::uniform(5), spec(5, 5)).unwrap_err();
        assert!(matches!(e, Error::SizeCap { .. }));
        let v = evaluate(&SimplexMatrix::uniform(5), spec(5, 5)).unwrap();
        assert!(v.log_p.is_none());
    }

    #[test]
    fn clipping() {
        assert_eq!(clip_log_p(0.0, 5.0), 0.0);
        assert_eq!(clip_log_p(9.0, 5.0), 5.0);
        let s = spec(3, 3);
        assert!(log_threshold(s, 1.0) < log_threshold(s, 2.0));
        assert_eq!(clip_log_p(1.0, f64::INFINITY), 1.0);
    }

    #[test]
    fn lipschitz_constant() {
        assert!((lipschitz_log_phi_bound(spec(2, 1), 0.1).unwrap() - 20.0).abs() < 1e-12);
        assert!(lipschitz_log_phi_bound(spec(2, 1), 0.25).is_err());
        assert!(lipschitz_log_phi_bound(spec(2, 1), 0.0).is_err());
    }

    #[test]
    fn cone_homogeneity() {
        let s = spec(3, 2);
        let z = Matrix::from_rows(&[vec![1.0, 2.0, 0.5], vec![0.2, 1.0, 1.0], vec![3.0, 0.1, 1.0]]).unwrap();
        let base = log_phi_cone(&z, s).unwrap();
        for lambda in [0.1, 2.0, 17.0] {
            let scaled = log_phi_cone(&z.scaled(lambda), s).unwrap();
            assert!((scaled - base - s.total() as f64 * f64::ln(lambda)).abs() < 1e-9);
        }
    }

    #[test]
    fn density_value_consistency() {
        let v = evaluate(&SimplexMatrix::uniform(2), spec(2, 2)).unwrap();
        assert!((v.log_f.unwrap() - v.log_p.unwrap() - v.log_phi).abs() < 1e-15);
    }
}
