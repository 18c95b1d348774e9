//! Log-space arithmetic shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// `ln(k!)`.
pub fn ln_factorial(k: u64) -> f64 {
    statrs::function::factorial::ln_factorial(k)
}

/// `ln C(a, b)`; `-inf` when `b > a`.
pub fn ln_binomial(a: u64, b: u64) -> f64 {
    if b > a {
        return f64::NEG_INFINITY;
    }
    ln_factorial(a) - ln_factorial(b) - ln_factorial(a - b)
}

/// `ln Σ exp(v)`. Empty input or all `-inf` gives `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// `ln((1/k) Σ exp(v))`, the log of an arithmetic mean.
pub fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values) - (values.len() as f64).ln()
}

/// `ln(a + b)` given `ln a` and `ln b`.
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln((e^d - 1) / d)`, continuous through `d = 0`.
pub fn log_exprel(d: f64) -> f64 {
    if d.abs() < 1e-8 {
        d / 2.0
    } else if d > 0.0 {
        d + (-(-d).exp_m1()).ln() - d.ln()
    } else {
        (-d.exp_m1()).ln() - (-d).ln()
    }
}

/// Leave-one-out log-means of `ln w_k`, computed in O(k) with prefix/suffix sums.
pub fn leave_one_out_log_means(values: &[f64]) -> Vec<f64> {
    let k = values.len();
    if k < 2 {
        return vec![f64::NAN; k];
    }
    let mut prefix = vec![f64::NEG_INFINITY; k + 1];
    for i in 0..k {
        prefix[i + 1] = log_add(prefix[i], values[i]);
    }
    let mut suffix = vec![f64::NEG_INFINITY; k + 1];
    for i in (0..k).rev() {
        suffix[i] = log_add(suffix[i + 1], values[i]);
    }
    let denom = ((k - 1) as f64).ln();
    (0..k)
        .map(|i| log_add(prefix[i], suffix[i + 1]) - denom)
        .collect()
}

/// Jackknife standard error from leave-one-out replicates.
pub fn jackknife_std_err(replicates: &[f64]) -> f64 {
    let k = replicates.len();
    if k < 2 {
        return f64::NAN;
    }
    let mean = replicates.iter().sum::<f64>() / k as f64;
    let ss: f64 = replicates.iter().map(|r| (r - mean).powi(2)).sum();
    ((k - 1) as f64 / k as f64 * ss).sqrt()
}

/// Sample variance (denominator `k - 1`); zero for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    let k = values.len();
    if k < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64
}

/// A non-negative quantity stored as its natural logarithm. Zero is `-inf`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LogValue(pub f64);

impl LogValue {
    pub const ZERO: LogValue = LogValue(f64::NEG_INFINITY);
    pub const ONE: LogValue = LogValue(0.0);

    pub fn from_value(v: f64) -> Self {
        if v > 0.0 {
            LogValue(v.ln())
        } else {
            LogValue::ZERO
        }
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn log10(self) -> f64 {
        self.0 / std::f64::consts::LN_10
    }

    /// Linear value; overflows to `inf` above ~1e308.
    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// Decimal mantissa in `[1, 10)` and exponent.
    pub fn decimal(self) -> (f64, i64) {
        if !self.0.is_finite() {
            return (if self.is_zero() { 0.0 } else { f64::NAN }, 0);
        }
        let l10 = self.log10();
        let mut exp = l10.floor() as i64;
        let mut mant = 10f64.powf(l10 - exp as f64);
        if mant >= 9.995 {
            // rounds up to 10.00 when printed with two decimals
            mant /= 10.0;
            exp += 1;
        }
        (mant, exp)
    }
}

impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let (m, e) = self.decimal();
        write!(f, "{m:.2} × 10^{e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exprel_is_continuous_at_zero() {
        for d in [-1e-6f64, -1e-9, 0.0, 1e-9, 1e-6] {
            let exact = if d == 0.0 { 0.0 } else { (d.exp_m1() / d).ln() };
            assert!((log_exprel(d) - exact).abs() < 1e-12, "d = {d}");
        }
        assert!((log_exprel(2.0) - ((2f64.exp() - 1.0) / 2.0).ln()).abs() < 1e-14);
        assert!((log_exprel(-3.0) - ((1.0 - (-3f64).exp()) / 3.0).ln()).abs() < 1e-14);
        // no overflow for huge slopes
        assert!((log_exprel(1000.0) - (1000.0 - 1000f64.ln())).abs() < 1e-10);
        assert!(log_exprel(-1000.0).is_finite());
    }

    #[test]
    fn leave_one_out_matches_direct() {
        let v = [0.1, -2.0, 3.5, 1.0, 0.0];
        let loo = leave_one_out_log_means(&v);
        for i in 0..v.len() {
            let rest: Vec<f64> = v.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| *x).collect();
            assert!((loo[i] - log_mean_exp(&rest)).abs() < 1e-12);
        }
    }

    #[test]
    fn decimal_formatting() {
        let v = LogValue((2.21e7f64).ln());
        assert_eq!(v.to_string(), "2.21 × 10^7");
        let (m, e) = LogValue((9.9999e3f64).ln()).decimal();
        assert_eq!(e, 4);
        assert!((m - 0.99999).abs() < 1e-9);
        assert_eq!(LogValue::ZERO.to_string(), "0");
    }

    #[test]
    fn binomials() {
        assert!((ln_binomial(5, 3) - 10f64.ln()).abs() < 1e-12);
        assert_eq!(ln_binomial(2, 3), f64::NEG_INFINITY);
    }
}
