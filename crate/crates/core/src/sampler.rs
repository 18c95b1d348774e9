//! Uniform sampling on the simplex and a hit-and-run chain targeting `ψ_s = σ^s`.
//!
//! A step draws a centred Gaussian direction `L`, finds the chord of the simplex
//! through the current point along `L`, evaluates `ln ψ_s` at equally spaced knots
//! on the chord, and samples from the density whose log is the piecewise-linear
//! interpolant of those values. On each piece that density is a truncated
//! exponential, so sampling is exact inverse-CDF.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, SimplexMatrix};
use crate::numeric::log_exprel;
use crate::scaling::log_sigma;

/// Generator used by every chain.
pub type ChainRng = ChaCha8Rng;

pub const DEFAULT_KNOTS: usize = 32;
pub const DEFAULT_POSITIVITY_MARGIN: f64 = 1e-12;
pub const DEFAULT_BURN_IN_PER_SIDE: usize = 50;

/// Mixes `(master, stage, chain)` into a stream seed with splitmix64 rounds, so
/// a chain's randomness depends only on its coordinates.
pub fn derive_seed(master: u64, stage: u64, chain: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(mix(master) ^ stage) ^ chain.rotate_left(32))
}

pub fn chain_rng(seed: u64) -> ChainRng {
    ChainRng::seed_from_u64(seed)
}

/// A centred direction in the tangent space of the simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    entries: Matrix,
    norm: f64,
}

impl Direction {
    /// Centres `m` and records its Frobenius norm.
    pub fn new(mut m: Matrix) -> Result<Self> {
        let mean = m.total() / m.as_slice().len() as f64;
        m.as_mut_slice().iter_mut().for_each(|v| *v -= mean);
        let norm = m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::invalid("direction must be non-zero after centring"));
        }
        Ok(Direction { entries: m, norm })
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn negated(&self) -> Direction {
        Direction { entries: self.entries.scaled(-1.0), norm: self.norm }
    }
}

/// Per-chain settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub burn_in_steps: usize,
    pub knots: usize,
    pub rng_seed: u64,
    /// Points of a chord stay above `positivity_margin / n²` entrywise.
    pub positivity_margin: f64,
    /// Correct the piecewise-linear interpolant with a Metropolis accept/reject
    /// against the exact `ψ_s`. Off by default.
    #[serde(default)]
    pub metropolis: bool,
}

impl ChainConfig {
    pub fn for_side(n: usize) -> Self {
        ChainConfig {
            burn_in_steps: DEFAULT_BURN_IN_PER_SIDE * n.max(1),
            knots: DEFAULT_KNOTS,
            rng_seed: 0,
            positivity_margin: DEFAULT_POSITIVITY_MARGIN,
            metropolis: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in_steps < 1 {
            return Err(Error::invalid("burn-in must be at least one step"));
        }
        if self.knots < 4 {
            return Err(Error::invalid(format!("need at least 4 knots, got {}", self.knots)));
        }
        if !(self.positivity_margin > 0.0 && self.positivity_margin < 1e-6) {
            return Err(Error::invalid(format!(
                "positivity margin must lie in (0, 1e-6), got {}",
                self.positivity_margin
            )));
        }
        Ok(())
    }
}

/// A uniform point of the simplex: i.i.d. standard exponentials, normalized.
pub fn sample_uniform_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> SimplexMatrix {
    assert!(n >= 1, "simplex side must be positive");
    loop {
        let draws: Vec<f64> = (0..n * n).map(|_| Exp1.sample(rng)).collect();
        let m = Matrix::from_vec(n, draws).expect("n² draws");
        if let Ok(x) = SimplexMatrix::project(&m) {
            return x;
        }
    }
}

/// I.i.d. standard normal matrix, centred to zero sum.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<Direction> {
    if n < 2 {
        return Err(Error::invalid("directions need n ≥ 2"));
    }
    loop {
        let draws: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(rng)).collect();
        if let Ok(d) = Direction::new(Matrix::from_vec(n, draws)?) {
            return Ok(d);
        }
    }
}

/// Maximal open interval of `τ` with every entry of `X + τL` above
/// `margin / n²`. Always brackets zero for an interior `X`.
pub fn segment_in_simplex(x: &SimplexMatrix, l: &Direction, margin: f64) -> Result<(f64, f64)> {
    let n = x.n();
    if l.entries.n() != n {
        return Err(Error::invalid("direction and point have different sides"));
    }
    let floor = margin / (n * n) as f64;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (xv, lv) in x.as_slice().iter().zip(l.entries.as_slice()) {
        let bound = (floor - xv) / lv;
        if *lv > 0.0 {
            lo = lo.max(bound);
        } else if *lv < 0.0 {
            hi = hi.min(bound);
        }
    }
    if !(lo < 0.0 && hi > 0.0 && lo.is_finite() && hi.is_finite()) {
        return Err(Error::Numeric(format!("empty or unbounded chord ({lo}, {hi}) through the current point")));
    }
    Ok((lo, hi))
}

/// `X + τL`, re-projected so the unit total does not drift over many steps.
pub fn point_on_line(x: &SimplexMatrix, l: &Direction, tau: f64) -> Result<SimplexMatrix> {
    let data: Vec<f64> = x
        .as_slice()
        .iter()
        .zip(l.entries.as_slice())
        .map(|(a, b)| a + tau * b)
        .collect();
    SimplexMatrix::project(&Matrix::from_vec(x.n(), data)?)
}

/// `knots` equally spaced points on `[lo, hi]`, endpoints included.
pub fn knot_positions(lo: f64, hi: f64, knots: usize) -> Vec<f64> {
    let last = (knots - 1) as f64;
    (0..knots)
        .map(|k| if k + 1 == knots { hi } else { lo + (hi - lo) * k as f64 / last })
        .collect()
}

/// Log-mass of each piece of the piecewise-exponential density.
fn piece_log_masses(taus: &[f64], log_dens: &[f64]) -> Vec<f64> {
    taus.windows(2)
        .zip(log_dens.windows(2))
        .map(|(t, l)| {
            if l[0] == f64::NEG_INFINITY || l[1] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                (t[1] - t[0]).ln() + l[0] + log_exprel(l[1] - l[0])
            }
        })
        .collect()
}

/// Draws `τ` from the density proportional to `exp(g(τ))`, where `g` linearly
/// interpolates `log_dens` between consecutive `taus`.
pub fn sample_piecewise_exponential<R: Rng + ?Sized>(
    taus: &[f64],
    log_dens: &[f64],
    rng: &mut R,
) -> Result<f64> {
    if taus.len() < 2 || taus.len() != log_dens.len() {
        return Err(Error::invalid("need at least two knots with one log-density each"));
    }
    if log_dens.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Numeric("log-density is NaN or +inf at a knot".into()));
    }
    let masses = piece_log_masses(taus, log_dens);
    let max = masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::Numeric("log-density is -inf on every piece".into()));
    }
    let weights: Vec<f64> = masses.iter().map(|m| (m - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut target = rng.random::<f64>() * total;
    let mut piece = weights.len() - 1;
    for (k, w) in weights.iter().enumerate() {
        if target < *w {
            piece = k;
            break;
        }
        target -= w;
    }
    while weights[piece] == 0.0 {
        piece -= 1;
    }
    let slope = log_dens[piece + 1] - log_dens[piece];
    let u: f64 = rng.random();
    let frac = truncated_exponential_fraction(slope, u);
    Ok(taus[piece] + frac * (taus[piece + 1] - taus[piece]))
}

/// Inverse CDF on `[0, 1]` of the density proportional to `exp(slope · v)`.
fn truncated_exponential_fraction(slope: f64, u: f64) -> f64 {
    if slope.abs() < 1e-12 {
        return u;
    }
    // sample with a non-positive slope and reflect, so expm1 never overflows
    let d = -slope.abs();
    let u = if slope > 0.0 { 1.0 - u } else { u };
    let v = ((u * d.exp_m1()).ln_1p() / d).clamp(0.0, 1.0);
    if slope > 0.0 { 1.0 - v } else { v }
}

/// Linear interpolation of `log_dens` at `tau`.
fn interpolate(taus: &[f64], log_dens: &[f64], tau: f64) -> f64 {
    let k = taus.partition_point(|t| *t <= tau).clamp(1, taus.len() - 1) - 1;
    let w = (tau - taus[k]) / (taus[k + 1] - taus[k]);
    log_dens[k] + w * (log_dens[k + 1] - log_dens[k])
}

/// One draw from the line `X + τL` with density proportional to the
/// interpolated `ψ_s`.
pub fn sample_on_segment<R: Rng + ?Sized>(
    x: &SimplexMatrix,
    l: &Direction,
    s: f64,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<SimplexMatrix> {
    let current = if cfg.metropolis { Some(s * log_sigma(x)?) } else { None };
    segment_step(x, l, s, cfg, current, rng).map(|(p, _)| p)
}

/// Returns the next point and its exact `ln ψ_s` when it is known.
fn segment_step<R: Rng + ?Sized>(
    x: &SimplexMatrix,
    l: &Direction,
    s: f64,
    cfg: &ChainConfig,
    current_log_psi: Option<f64>,
    rng: &mut R,
) -> Result<(SimplexMatrix, Option<f64>)> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::invalid(format!("exponent s must be positive, got {s}")));
    }
    let (lo, hi) = segment_in_simplex(x, l, cfg.positivity_margin)?;
    let taus = knot_positions(lo, hi, cfg.knots);
    let log_dens = taus
        .iter()
        .map(|&tau| Ok(s * log_sigma(&point_on_line(x, l, tau)?)?))
        .collect::<Result<Vec<f64>>>()?;
    let tau = sample_piecewise_exponential(&taus, &log_dens, rng)?;
    let proposal = point_on_line(x, l, tau)?;

    let Some(current) = current_log_psi.filter(|_| cfg.metropolis) else {
        return Ok((proposal, None));
    };
    let exact = s * log_sigma(&proposal)?;
    let log_accept = (exact - interpolate(&taus, &log_dens, tau)) - (current - interpolate(&taus, &log_dens, 0.0));
    let u: f64 = rng.random();
    if u.ln() < log_accept {
        Ok((proposal, Some(exact)))
    } else {
        Ok((x.clone(), Some(current)))
    }
}

/// A hit-and-run chain on the simplex targeting `ψ_s`. Owns its generator.
pub struct Chain {
    state: SimplexMatrix,
    s: f64,
    cfg: ChainConfig,
    rng: ChainRng,
    log_psi: Option<f64>,
    steps: u64,
}

impl Chain {
    pub fn new(start: SimplexMatrix, s: f64, cfg: ChainConfig, rng: ChainRng) -> Result<Self> {
        cfg.validate()?;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid(format!("exponent s must be positive, got {s}")));
        }
        let log_psi = if cfg.metropolis { Some(s * log_sigma(&start)?) } else { None };
        Ok(Chain { state: start, s, cfg, rng, log_psi, steps: 0 })
    }

    /// Starts from a uniform point drawn with the chain's own generator.
    pub fn from_uniform_start(n: usize, s: f64, cfg: ChainConfig, mut rng: ChainRng) -> Result<Self> {
        let start = sample_uniform_simplex(&mut rng, n);
        Chain::new(start, s, cfg, rng)
    }

    pub fn step(&mut self) -> Result<()> {
        self.steps += 1;
        if self.state.n() == 1 {
            return Ok(());
        }
        let l = random_direction(&mut self.rng, self.state.n())?;
        let (next, log_psi) = segment_step(&self.state, &l, self.s, &self.cfg, self.log_psi, &mut self.rng)?;
        self.state = next;
        self.log_psi = log_psi;
        Ok(())
    }

    pub fn advance(&mut self, steps: usize) -> Result<&SimplexMatrix> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(&self.state)
    }

    pub fn state(&self) -> &SimplexMatrix {
        &self.state
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    pub fn rng_mut(&mut self) -> &mut ChainRng {
        &mut self.rng
    }
}

/// Runs `cfg.burn_in_steps` kernel applications from `x0` and returns the final state.
pub fn hit_and_run_chain<R: Rng + ?Sized>(
    x0: SimplexMatrix,
    s: f64,
    cfg: &ChainConfig,
    rng: &mut R,
) -> Result<SimplexMatrix> {
    cfg.validate()?;
    let n = x0.n();
    if n == 1 {
        return Ok(x0);
    }
    let mut x = x0;
    let mut log_psi = if cfg.metropolis { Some(s * log_sigma(&x)?) } else { None };
    for _ in 0..cfg.burn_in_steps {
        let l = random_direction(rng, n)?;
        let (next, lp) = segment_step(&x, &l, s, cfg, log_psi, rng)?;
        x = next;
        log_psi = lp;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_single_cell() {
        let mut rng = chain_rng(1);
        let x = sample_uniform_simplex(&mut rng, 1);
        assert_eq!(x.as_slice(), &[1.0]);
    }

    #[test]
    fn direction_is_centred() {
        let mut rng = chain_rng(2);
        for n in 2..7 {
            let d = random_direction(&mut rng, n).unwrap();
            assert!(d.entries().total().abs() < 1e-12);
            assert!(d.norm() > 0.0);
        }
        assert!(random_direction(&mut rng, 1).is_err());
        assert!(Direction::new(Matrix::filled(3, 2.0)).is_err());
    }

    #[test]
    fn segment_uniform_two_by_two() {
        let x = SimplexMatrix::uniform(2);
        let l = Direction::new(Matrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap()).unwrap();
        let (lo, hi) = segment_in_simplex(&x, &l, 0.0).unwrap();
        assert!((lo + 0.25).abs() < 1e-15 && (hi - 0.25).abs() < 1e-15);
        let (lo2, hi2) = segment_in_simplex(&x, &l, 1e-12).unwrap();
        assert!(lo2 > lo && hi2 < hi);
    }

    #[test]
    fn segment_single_pair() {
        // a ±1 pair, centring leaves it unchanged
        let n = 3;
        let x = SimplexMatrix::uniform(n);
        let mut m = Matrix::zeros(n);
        m[(0, 1)] = 1.0;
        m[(2, 2)] = -1.0;
        let l = Direction::new(m).unwrap();
        let (lo, hi) = segment_in_simplex(&x, &l, 0.0).unwrap();
        assert!((lo + 1.0 / 9.0).abs() < 1e-15 && (hi - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn chord_endpoints_stay_in_simplex() {
        let mut rng = chain_rng(3);
        for _ in 0..200 {
            let x = sample_uniform_simplex(&mut rng, 4);
            let l = random_direction(&mut rng, 4).unwrap();
            let (lo, hi) = segment_in_simplex(&x, &l, DEFAULT_POSITIVITY_MARGIN).unwrap();
            for tau in [lo, hi, lo * (1.0 - 1e-9), hi * (1.0 - 1e-9)] {
                let p = point_on_line(&x, &l, tau).unwrap();
                assert!(p.as_slice().iter().all(|v| *v > 0.0));
                assert!((p.total() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fraction_inverse_cdf() {
        for slope in [-50.0, -1.0, 0.0, 1e-14, 2.0, 800.0] {
            for u in [0.0, 0.25, 0.5, 0.99] {
                let v = truncated_exponential_fraction(slope, u);
                assert!((0.0..=1.0).contains(&v));
                let cdf = if slope.abs() < 1e-12 { v } else { (slope * v).exp_m1() / slope.exp_m1() };
                if slope.abs() < 100.0 {
                    assert!((cdf - u).abs() < 1e-9, "slope {slope} u {u}");
                }
            }
        }
    }

    #[test]
    fn piecewise_rejects_degenerate() {
        let mut rng = chain_rng(4);
        let inf = f64::NEG_INFINITY;
        assert!(sample_piecewise_exponential(&[0.0, 1.0], &[inf, inf], &mut rng).is_err());
        assert!(sample_piecewise_exponential(&[0.0], &[0.0], &mut rng).is_err());
        let t = sample_piecewise_exponential(&[0.0, 1.0, 2.0], &[inf, 0.0, 0.0], &mut rng).unwrap();
        assert!((1.0..=2.0).contains(&t));
    }

    #[test]
    fn chain_config_validation() {
        let mut cfg = ChainConfig::for_side(3);
        assert_eq!(cfg.burn_in_steps, 150);
        assert!(cfg.validate().is_ok());
        cfg.knots = 3;
        assert!(cfg.validate().is_err());
        cfg.knots = 8;
        cfg.positivity_margin = 1e-3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fixed_seed_fixed_trajectory() {
        let cfg = ChainConfig { burn_in_steps: 20, ..ChainConfig::for_side(3) };
        let run = || {
            let mut rng = chain_rng(99);
            let x0 = sample_uniform_simplex(&mut rng, 3);
            hit_and_run_chain(x0, 2.0, &cfg, &mut rng).unwrap()
        };
        assert_eq!(run().as_slice(), run().as_slice());
    }

    #[test]
    fn seeds_differ_by_coordinate() {
        let a = derive_seed(7, 0, 0);
        assert_ne!(a, derive_seed(7, 0, 1));
        assert_ne!(a, derive_seed(7, 1, 0));
        assert_ne!(a, derive_seed(8, 0, 0));
        assert_eq!(a, derive_seed(7, 0, 0));
    }
}
