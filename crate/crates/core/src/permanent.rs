//! Permanents of small non-negative matrices and bounds on permanents of
//! doubly stochastic matrices.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numeric::{ln_factorial, ln_gamma, LogValue};

/// Largest side accepted by [`exact_permanent`].
pub const MAX_EXACT_N: usize = 24;
/// Largest side accepted by [`naive_permanent`].
pub const MAX_NAIVE_N: usize = 8;
/// Largest side produced by [`kron_with_jt`].
pub const MAX_KRON_N: usize = 4096;

/// Subsets per Gray-code block. Fixed so the reduction order never depends on
/// the number of workers.
const BLOCK_BITS: usize = 12;

const DS_TOL: f64 = 1e-9;

/// `ln(lower) ≤ ln per B ≤ ln(upper)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSandwich {
    pub log_lower: f64,
    pub log_upper: f64,
}

impl BoundSandwich {
    pub fn contains(&self, log_value: f64, slack: f64) -> bool {
        log_value >= self.log_lower - slack && log_value <= self.log_upper + slack
    }
}

fn check_nonnegative(m: &Matrix) -> Result<()> {
    if m.n() == 0 {
        return Err(Error::invalid("permanent needs N ≥ 1"));
    }
    if m.as_slice().iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::invalid("permanent input must be non-negative and finite"));
    }
    Ok(())
}

fn check_doubly_stochastic(b: &Matrix) -> Result<()> {
    check_nonnegative(b)?;
    let r = b.doubly_stochastic_residual();
    if r > DS_TOL {
        return Err(Error::invalid(format!("matrix is not doubly stochastic (residual {r:e})")));
    }
    Ok(())
}

/// Whether the bipartite support graph of `m` has a perfect matching.
fn has_perfect_matching(m: &Matrix) -> bool {
    let n = m.n();
    let mut match_col: Vec<Option<usize>> = vec![None; n];
    fn augment(m: &Matrix, i: usize, seen: &mut [bool], match_col: &mut [Option<usize>]) -> bool {
        for j in 0..m.n() {
            if m[(i, j)] > 0.0 && !seen[j] {
                seen[j] = true;
                if match_col[j].map_or(true, |k| augment(m, k, seen, match_col)) {
                    match_col[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    (0..n).all(|i| augment(m, i, &mut vec![false; n], &mut match_col))
}

/// Error-free `a + b` as `(sum, rounding error)`.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bp = s - a;
    let e = (a - (s - bp)) + (b - bp);
    (s, e)
}

/// Double-double accumulator.
#[derive(Clone, Copy, Default)]
struct Acc {
    hi: f64,
    lo: f64,
}

impl Acc {
    #[inline]
    fn add(&mut self, v: f64) {
        let (s, e) = two_sum(self.hi, v);
        let (hi, lo) = two_sum(s, self.lo + e);
        self.hi = hi;
        self.lo = lo;
    }

    fn merge(&mut self, other: Acc) {
        self.add(other.hi);
        self.add(other.lo);
    }
}

/// Exact permanent by Glynn's formula,
/// `per A = 2^{1−N} Σ_δ (Π_k δ_k) Π_i Σ_j δ_j a_ij` over `δ ∈ {±1}^N` with `δ_{N−1} = 1`.
///
/// Rows are first rescaled to unit sums (the scale is carried in log), and the
/// `2^{N−1}` sign vectors are walked in fixed blocks of Gray-code order with
/// double-double accumulation. Blocks run on the current rayon pool and are
/// reduced in block order, so the result is bit-stable for any worker count.
/// On doubly stochastic input the terms cancel far less than in Ryser's
/// subset formula (about `(e/2)^N` against `e^N/N`).
pub fn exact_permanent(m: &Matrix) -> Result<LogValue> {
    check_nonnegative(m)?;
    let n = m.n();
    if n > MAX_EXACT_N {
        return Err(Error::SizeCap { what: "permanent side N", value: n as u64, cap: MAX_EXACT_N as u64 });
    }
    if !has_perfect_matching(m) {
        return Ok(LogValue::ZERO);
    }
    let mut b = m.clone();
    let mut log_scale = 0.0;
    for i in 0..n {
        let s: f64 = b.row(i).iter().sum();
        log_scale += s.ln();
        for j in 0..n {
            b[(i, j)] /= s;
        }
    }
    if n == 1 {
        return Ok(LogValue(log_scale));
    }
    // column-major copy so a sign flip touches contiguous memory
    let bt = b.transpose();

    let free = n - 1;
    let low_bits = free.min(BLOCK_BITS);
    let high_bits = free - low_bits;
    let blocks: Vec<Acc> = (0..1usize << high_bits)
        .into_par_iter()
        .map(|block| glynn_block(&bt, n, low_bits, block))
        .collect();
    let mut total = Acc::default();
    for acc in blocks {
        total.merge(acc);
    }
    let value = total.hi + total.lo;
    if !(value > 0.0) {
        return Err(Error::Numeric(format!(
            "permanent evaluated to {value:e} despite a perfect matching; cancellation exceeded f64 range"
        )));
    }
    Ok(LogValue(value.ln() - free as f64 * std::f64::consts::LN_2 + log_scale))
}

/// Sum over the sign vectors whose bits `low_bits..N−1` are fixed by `block`
/// (a set bit means `δ_j = −1`).
fn glynn_block(bt: &Matrix, n: usize, low_bits: usize, block: usize) -> Acc {
    let high_set = block << low_bits;
    let mut sums = vec![0.0; n];
    for j in 0..n {
        let sign = if high_set >> j & 1 == 1 { -1.0 } else { 1.0 };
        for (s, v) in sums.iter_mut().zip(bt.row(j)) {
            *s += sign * v;
        }
    }
    let mut minus = high_set.count_ones() as usize;
    let mut acc = Acc::default();
    let mut gray = 0usize;
    let term = |sums: &[f64], minus: usize| -> f64 {
        let p: f64 = sums.iter().product();
        if minus % 2 == 1 { -p } else { p }
    };
    acc.add(term(&sums, minus));
    for k in 1..1usize << low_bits {
        let bit = k.trailing_zeros() as usize;
        gray ^= 1 << bit;
        let col = bt.row(bit);
        if gray >> bit & 1 == 1 {
            sums.iter_mut().zip(col).for_each(|(s, v)| *s -= 2.0 * v);
            minus += 1;
        } else {
            sums.iter_mut().zip(col).for_each(|(s, v)| *s += 2.0 * v);
            minus -= 1;
        }
        acc.add(term(&sums, minus));
    }
    acc
}

/// Permanent by summing over all `N!` permutations. Oracle for small `N`.
pub fn naive_permanent(m: &Matrix) -> Result<LogValue> {
    check_nonnegative(m)?;
    let n = m.n();
    if n > MAX_NAIVE_N {
        return Err(Error::SizeCap { what: "naive permanent side N", value: n as u64, cap: MAX_NAIVE_N as u64 });
    }
    fn rec(m: &Matrix, row: usize, used: u32, prod: f64) -> f64 {
        if row == m.n() {
            return prod;
        }
        (0..m.n())
            .filter(|j| used >> j & 1 == 0)
            .map(|j| rec(m, row + 1, used | 1 << j, prod * m[(row, j)]))
            .sum()
    }
    Ok(LogValue::from_value(rec(m, 0, 0, 1.0)))
}

/// Block matrix whose `(i, j)` block is the `t × t` constant matrix `x_ij / t`.
/// Works for any square `x`; see [`kron_with_jt`] for the checked doubly
/// stochastic variant.
pub fn block_expand(x: &Matrix, t: usize) -> Result<Matrix> {
    if t == 0 {
        return Err(Error::invalid("block size t must be positive"));
    }
    let n = x.n();
    let big = n.checked_mul(t).filter(|&v| v <= MAX_KRON_N).ok_or(Error::SizeCap {
        what: "block matrix side n·t",
        value: (n as u64).saturating_mul(t as u64),
        cap: MAX_KRON_N as u64,
    })?;
    let mut out = Matrix::zeros(big);
    let tf = t as f64;
    for r in 0..big {
        for c in 0..big {
            out[(r, c)] = x[(r / t, c / t)] / tf;
        }
    }
    Ok(out)
}

/// `Y ⊗ J_t` for doubly stochastic `Y`; the result is doubly stochastic.
pub fn kron_with_jt(y: &Matrix, t: usize) -> Result<Matrix> {
    check_doubly_stochastic(y)?;
    block_expand(y, t)
}

/// Van der Waerden: `per B ≥ N!/N^N` for doubly stochastic `B`.
pub fn vdw_lower_bound(n: usize) -> LogValue {
    assert!(n >= 1, "van der Waerden bound needs N ≥ 1");
    LogValue(ln_factorial(n as u64) - n as f64 * (n as f64).ln())
}

/// Soules' bound `per B ≤ Π s_i Γ^{s_i}((1+s_i)/s_i)` with `s_i = max_j b_ij`,
/// for non-negative `B` with row sums at most 1.
pub fn soules_upper_bound(b: &Matrix) -> Result<LogValue> {
    check_nonnegative(b)?;
    let mut total = 0.0;
    for i in 0..b.n() {
        let row = b.row(i);
        let sum: f64 = row.iter().sum();
        if sum > 1.0 + DS_TOL {
            return Err(Error::invalid(format!("row {i} sums to {sum} > 1")));
        }
        let s = row.iter().copied().fold(0.0, f64::max);
        if s <= 0.0 {
            return Err(Error::invalid(format!("row {i} is identically zero")));
        }
        total += s.ln() + s * ln_gamma((1.0 + s) / s);
    }
    Ok(LogValue(total))
}

/// Two-sided bound for doubly stochastic `B` with `γ = Σ_i max_j b_ij`:
/// `N!/N^N ≤ per B ≤ (γ/N)^N Γ^γ(1 + N/γ)`.
pub fn cor43_bounds(b: &Matrix) -> Result<BoundSandwich> {
    check_doubly_stochastic(b)?;
    let n = b.n();
    let nf = n as f64;
    let gamma: f64 = (0..n).map(|i| b.row(i).iter().copied().fold(0.0, f64::max)).sum();
    if gamma < 1.0 - DS_TOL {
        return Err(Error::invalid(format!("γ = {gamma} < 1")));
    }
    let gamma = gamma.max(1.0);
    Ok(BoundSandwich {
        log_lower: vdw_lower_bound(n).ln(),
        log_upper: nf * (gamma / nf).ln() + gamma * ln_gamma(1.0 + nf / gamma),
    })
}
