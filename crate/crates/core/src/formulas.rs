//! Closed-form reference values for table counts.

use serde::{Deserialize, Serialize};

use crate::density::ProblemSpec;
use crate::error::{Error, Result};
use crate::exact::Margins;
use crate::numeric::{ln_binomial, ln_factorial, ln_gamma};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Formula {
    /// Diaconis–Efron large-margin heuristic.
    De,
    /// Békéssy–Békéssy–Komlós small-margin asymptotic.
    Bbk,
    BoundLower,
    BoundUpper,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FormulaInputs {
    Margins { rows: Vec<u64>, cols: Vec<u64> },
    Magic { n: usize, t: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FormulaResult {
    pub log_value: f64,
    pub formula: Formula,
    pub inputs: FormulaInputs,
}

impl FormulaResult {
    fn new(log_value: f64, formula: Formula, inputs: FormulaInputs) -> Result<Self> {
        if !log_value.is_finite() {
            return Err(Error::Numeric(format!("{formula:?} produced non-finite log value {log_value}")));
        }
        Ok(FormulaResult { log_value, formula, inputs })
    }
}

fn margin_inputs(m: &Margins) -> FormulaInputs {
    FormulaInputs::Margins { rows: m.rows().to_vec(), cols: m.cols().to_vec() }
}

/// The Diaconis–Efron heuristic, evaluated term by term as
///
/// `((2N+mn)/2)^{(m−1)(n−1)} (Π r̄_i)^{n−1} (Π c̄_j)^{k−1} Γ(nk) / (Γ^m(n) Γ^n(k))`
///
/// with `w = 1/(1 + mn/2N)`, `r̄_i = (1−w)/m + w r_i/N`, `c̄_j = (1−w)/n + w c_j/N`
/// and `k = (n+1)/(n Σ r̄_i²) − 1/n`.
pub fn de_heuristic(margins: &Margins) -> Result<FormulaResult> {
    let (rows, cols) = (margins.rows(), margins.cols());
    let (m, n) = (rows.len(), cols.len());
    if m < 2 || n < 2 {
        return Err(Error::invalid(format!("heuristic needs at least 2×2 tables, got {m}×{n}")));
    }
    if rows.iter().chain(cols).any(|v| *v == 0) {
        return Err(Error::invalid("heuristic needs positive margins"));
    }
    let (mf, nf) = (m as f64, n as f64);
    let total = margins.total() as f64;
    let w = 1.0 / (1.0 + mf * nf / (2.0 * total));
    let r_bar: Vec<f64> = rows.iter().map(|&r| (1.0 - w) / mf + w * r as f64 / total).collect();
    let c_bar: Vec<f64> = cols.iter().map(|&c| (1.0 - w) / nf + w * c as f64 / total).collect();
    let k = (nf + 1.0) / (nf * r_bar.iter().map(|r| r * r).sum::<f64>()) - 1.0 / nf;
    if !(k > 0.0) {
        return Err(Error::Numeric(format!("degenerate margins give k = {k}")));
    }
    let log = (mf - 1.0) * (nf - 1.0) * ((2.0 * total + mf * nf) / 2.0).ln()
        + (nf - 1.0) * r_bar.iter().map(|r| r.ln()).sum::<f64>()
        + (k - 1.0) * c_bar.iter().map(|c| c.ln()).sum::<f64>()
        + ln_gamma(nf * k)
        - mf * ln_gamma(nf)
        - nf * ln_gamma(k);
    FormulaResult::new(log, Formula::De, margin_inputs(margins))
}

/// `N!/(Π r_i! Π c_j!) · exp{(2/N²) Σ_{i,j} C(r_i,2) C(c_j,2)}`.
pub fn bbk_asymptotic(margins: &Margins) -> Result<FormulaResult> {
    let (rows, cols) = (margins.rows(), margins.cols());
    if rows.iter().chain(cols).any(|v| *v == 0) {
        return Err(Error::invalid("asymptotic formula needs positive margins"));
    }
    let total = margins.total();
    let pairs = |v: &[u64]| v.iter().map(|&x| (x * x.saturating_sub(1)) as f64 / 2.0).sum::<f64>();
    let nf = total as f64;
    let log = ln_factorial(total)
        - rows.iter().map(|&r| ln_factorial(r)).sum::<f64>()
        - cols.iter().map(|&c| ln_factorial(c)).sum::<f64>()
        + 2.0 / (nf * nf) * pairs(rows) * pairs(cols);
    FormulaResult::new(log, Formula::Bbk, margin_inputs(margins))
}

/// `C(N+n−1, n−1)^{−2} C(N+n²−1, n²−1) ≤ |Σ(n,t)| ≤ C(N+n²−1, n²−1)`.
pub fn count_bounds(spec: ProblemSpec) -> (FormulaResult, FormulaResult) {
    let n = spec.n as u64;
    let big_n = spec.total() as u64;
    let upper = ln_binomial(big_n + n * n - 1, n * n - 1);
    let lower = upper - 2.0 * ln_binomial(big_n + n - 1, n - 1);
    let inputs = FormulaInputs::Magic { n: spec.n, t: spec.t };
    (
        FormulaResult { log_value: lower, formula: Formula::BoundLower, inputs: inputs.clone() },
        FormulaResult { log_value: upper, formula: Formula::BoundUpper, inputs },
    )
}

/// The cruder lower bound `(N+n)^{−2n} C(N+n²−1, n²−1)`.
pub fn crude_count_lower_bound(spec: ProblemSpec) -> f64 {
    let n = spec.n as u64;
    let big_n = spec.total() as u64;
    ln_binomial(big_n + n * n - 1, n * n - 1) - 2.0 * n as f64 * ((big_n + n) as f64).ln()
}
