//! Exact counts of contingency tables with fixed margins.

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on live dynamic-programming states per layer.
pub const DEFAULT_STATE_BUDGET: u64 = 100_000_000;

/// Row and column sums of a table with a common total.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Margins {
    rows: Vec<u64>,
    cols: Vec<u64>,
}

impl Margins {
    pub fn new(rows: Vec<u64>, cols: Vec<u64>) -> Result<Self> {
        if rows.is_empty() || cols.is_empty() {
            return Err(Error::invalid("margins need at least one row and one column"));
        }
        let (r, c): (u64, u64) = (rows.iter().sum(), cols.iter().sum());
        if r != c {
            return Err(Error::invalid(format!("row sums total {r} but column sums total {c}")));
        }
        Ok(Margins { rows, cols })
    }

    /// `n × n` with every line summing to `t`.
    pub fn magic(n: usize, t: u64) -> Self {
        Margins { rows: vec![t; n], cols: vec![t; n] }
    }

    pub fn rows(&self) -> &[u64] {
        &self.rows
    }

    pub fn cols(&self) -> &[u64] {
        &self.cols
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().sum()
    }

    pub fn transposed(&self) -> Self {
        Margins { rows: self.cols.clone(), cols: self.rows.clone() }
    }

    /// Parses two whitespace-separated lines of integers: row sums, then column sums.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut line = |what: &str| -> Result<Vec<u64>> {
            let l = lines.next().ok_or_else(|| Error::invalid(format!("margins file is missing the {what} line")))?;
            l.split_whitespace()
                .map(|tok| tok.parse::<u64>().map_err(|e| Error::invalid(format!("bad {what} entry {tok:?}: {e}"))))
                .collect()
        };
        let rows = line("row sums")?;
        let cols = line("column sums")?;
        Margins::new(rows, cols)
    }
}

/// An exact non-negative integer count.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BigCount(pub BigUint);

impl BigCount {
    pub fn zero() -> Self {
        BigCount(BigUint::zero())
    }

    pub fn from_u64(v: u64) -> Self {
        BigCount(BigUint::from(v))
    }

    /// Natural log; `-inf` for zero.
    pub fn ln(&self) -> f64 {
        if self.0.is_zero() {
            return f64::NEG_INFINITY;
        }
        let bits = self.0.bits();
        if bits <= 1000 {
            return self.0.to_f64().expect("fits in f64").ln();
        }
        let shift = bits - 64;
        let top = (&self.0 >> shift).to_f64().expect("64 bits fit");
        top.ln() + shift as f64 * std::f64::consts::LN_2
    }

    pub fn to_u64(&self) -> Option<u64> {
        self.0.to_u64()
    }
}

impl fmt::Display for BigCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for BigCount {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.to_string())
    }
}

impl<'de> Deserialize<'de> for BigCount {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse::<BigUint>().map(BigCount).map_err(serde::de::Error::custom)
    }
}

/// Counts tables by dynamic programming over rows.
///
/// The state after a prefix of rows is the vector of residual column sums. The
/// number of completions depends only on the multiset of residuals, so states are
/// kept sorted. Within a row the last column takes whatever is left, and the
/// final row is forced entirely. Fails with [`Error::BudgetExceeded`] as soon as
/// a layer holds more than `budget` states.
pub fn exact_count(margins: &Margins, budget: u64) -> Result<BigCount> {
    let rows = margins.rows();
    let mut start: Vec<u64> = margins.cols().to_vec();
    start.sort_unstable();
    let mut layer: HashMap<Vec<u64>, BigUint> = HashMap::from([(start, BigUint::one())]);

    for &r in &rows[..rows.len() - 1] {
        let mut next: HashMap<Vec<u64>, BigUint> = HashMap::with_capacity(layer.len() * 4);
        let mut buf = Vec::new();
        for (state, count) in &layer {
            distribute(state, r, &mut buf, &mut |residual| {
                let mut key = residual.to_vec();
                key.sort_unstable();
                next.entry(key)
                    .and_modify(|c| *c += count)
                    .or_insert_with(|| count.clone());
            });
            if next.len() as u64 > budget {
                return Err(Error::BudgetExceeded { states: next.len() as u64, budget });
            }
        }
        layer = next;
        if layer.is_empty() {
            return Ok(BigCount::zero());
        }
    }
    // every surviving state sums to the last row, which must take it all
    Ok(BigCount(layer.into_values().sum()))
}

/// Calls `emit` with `cap − d` for every `d ≤ cap` entrywise with `Σ d = amount`.
fn distribute(cap: &[u64], amount: u64, buf: &mut Vec<u64>, emit: &mut impl FnMut(&[u64])) {
    buf.clear();
    buf.extend_from_slice(cap);
    // suffix capacity lets us prune branches that cannot place the remainder
    let mut suffix = vec![0u64; cap.len() + 1];
    for j in (0..cap.len()).rev() {
        suffix[j] = suffix[j + 1] + cap[j];
    }
    if suffix[0] < amount {
        return;
    }
    fn rec(j: usize, left: u64, cap: &[u64], suffix: &[u64], buf: &mut Vec<u64>, emit: &mut impl FnMut(&[u64])) {
        let last = cap.len() - 1;
        if j == last {
            if left <= cap[j] {
                buf[j] = cap[j] - left;
                emit(buf);
                buf[j] = cap[j];
            }
            return;
        }
        let lo = left.saturating_sub(suffix[j + 1]);
        let hi = left.min(cap[j]);
        for d in lo..=hi {
            buf[j] = cap[j] - d;
            rec(j + 1, left - d, cap, suffix, buf, emit);
        }
        buf[j] = cap[j];
    }
    rec(0, amount, cap, &suffix, buf, emit);
}

/// Largest total accepted by [`enumerate_count`].
pub const MAX_ENUMERATE_TOTAL: u64 = 12;
/// Largest row or column count accepted by [`enumerate_count`].
pub const MAX_ENUMERATE_SIDE: usize = 4;

/// Counts tables by visiting every one of them, cell by cell. Oracle for small cases.
pub fn enumerate_count(margins: &Margins) -> Result<BigCount> {
    let (m, n) = (margins.rows().len(), margins.cols().len());
    if margins.total() > MAX_ENUMERATE_TOTAL {
        return Err(Error::SizeCap { what: "enumeration total N", value: margins.total(), cap: MAX_ENUMERATE_TOTAL });
    }
    if m.max(n) > MAX_ENUMERATE_SIDE {
        return Err(Error::SizeCap {
            what: "enumeration dimension",
            value: m.max(n) as u64,
            cap: MAX_ENUMERATE_SIDE as u64,
        });
    }
    let mut rows = margins.rows().to_vec();
    let mut cols = margins.cols().to_vec();
    fn cell(i: usize, j: usize, rows: &mut [u64], cols: &mut [u64]) -> u64 {
        let (m, n) = (rows.len(), cols.len());
        if i == m {
            return u64::from(cols.iter().all(|c| *c == 0));
        }
        let (ni, nj) = if j + 1 == n { (i + 1, 0) } else { (i, j + 1) };
        if j + 1 == n {
            let v = rows[i];
            if v > cols[j] {
                return 0;
            }
            rows[i] = 0;
            cols[j] -= v;
            let c = cell(ni, nj, rows, cols);
            cols[j] += v;
            rows[i] = v;
            return c;
        }
        let mut total = 0;
        for v in 0..=rows[i].min(cols[j]) {
            rows[i] -= v;
            cols[j] -= v;
            total += cell(ni, nj, rows, cols);
            rows[i] += v;
            cols[j] += v;
        }
        total
    }
    Ok(BigCount::from_u64(cell(0, 0, &mut rows, &mut cols)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(m: &Margins) -> u64 {
        exact_count(m, DEFAULT_STATE_BUDGET).unwrap().to_u64().unwrap()
    }

    #[test]
    fn two_by_two_magic() {
        for t in 0..20 {
            assert_eq!(count(&Margins::magic(2, t)), t + 1);
        }
    }

    #[test]
    fn small_magic_values() {
        assert_eq!(count(&Margins::magic(3, 1)), 6);
        assert_eq!(count(&Margins::magic(3, 2)), 21);
        assert_eq!(count(&Margins::magic(3, 3)), 55);
        assert_eq!(count(&Margins::magic(4, 4)), 10147);
        assert_eq!(enumerate_count(&Margins::magic(3, 1)).unwrap().to_u64(), Some(6));
        assert_eq!(enumerate_count(&Margins::magic(3, 3)).unwrap().to_u64(), Some(55));
    }

    #[test]
    fn forced_table() {
        let m = Margins::new(vec![1, 1], vec![2, 0]).unwrap();
        assert_eq!(count(&m), 1);
        assert_eq!(enumerate_count(&m).unwrap().to_u64(), Some(1));
        let m = Margins::new(vec![3], vec![1, 2]).unwrap();
        assert_eq!(count(&m), 1);
        let m = Margins::new(vec![0, 0], vec![0, 0]).unwrap();
        assert_eq!(count(&m), 1);
    }

    #[test]
    fn invalid_margins() {
        assert!(Margins::new(vec![1, 2], vec![4]).is_err());
        assert!(Margins::new(vec![], vec![]).is_err());
        assert!(enumerate_count(&Margins::magic(5, 1)).is_err());
        assert!(enumerate_count(&Margins::magic(3, 5)).is_err());
    }

    #[test]
    fn budget_is_enforced() {
        let e = exact_count(&Margins::magic(6, 6), 10).unwrap_err();
        assert!(matches!(e, Error::BudgetExceeded { budget: 10, .. }));
    }

    #[test]
    fn parse_margins_file() {
        let m = Margins::parse("220 215 93 64\n108 286 71 127\n").unwrap();
        assert_eq!(m.rows(), &[220, 215, 93, 64]);
        assert_eq!(m.total(), 592);
        assert!(Margins::parse("1 2\n").is_err());
        assert!(Margins::parse("1 x\n1 2").is_err());
    }

    #[test]
    fn big_count_log() {
        let big = BigCount("1".parse::<BigUint>().unwrap() << 2000usize);
        assert!((big.ln() - 2000.0 * std::f64::consts::LN_2).abs() < 1e-9);
        assert_eq!(BigCount::zero().ln(), f64::NEG_INFINITY);
        assert!((BigCount::from_u64(55).ln() - 55f64.ln()).abs() < 1e-15);
        let s = serde_json::to_string(&big).unwrap();
        assert_eq!(serde_json::from_str::<BigCount>(&s).unwrap(), big);
    }
}
