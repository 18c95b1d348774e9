//! Telescoping estimation of `∫ φ dμ` and the clipped full estimator.
//!
//! With `ψ_i = σ^{t_i}` and `S_i = ∫ ψ_i dμ` for a schedule `t_1 < … < t_m = t`,
//!
//! ```text
//! ∫ φ dμ = C(n, t) · S_1 · Π_i S_{i+1}/S_i,    S_{i+1}/S_i = E_{ν_i}[σ^{t_{i+1} − t_i}]
//! ```
//!
//! where `ν_i ∝ ψ_i`. `S_1` is a plain Monte Carlo mean over uniform points, each
//! ratio is a mean over hit-and-run samples. The full estimator multiplies by the
//! mean of `p̄ = min(p, T)` over `ν ∝ φ`.
//!
//! Randomness: stage `k` chain `c` draws from `derive_seed(master, k, c)`; `S_1` is
//! stage 0, ratio `i` (1-based) is stage `i`, and the `p̄` samples use
//! [`PBAR_STAGE`]. Chains of one stage run in parallel and are reduced in chain
//! order, so reports do not depend on scheduling or worker count.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{clip_log_p, log_p_exact, log_phi_const, ProblemSpec};
use crate::error::{Error, Result};
use crate::numeric::{jackknife_std_err, leave_one_out_log_means, log_mean_exp, log_sum_exp, sample_variance};
use crate::permanent::MAX_EXACT_N;
use crate::report::{
    load_state, save_state, EstimateMode, EstimateReport, PbarSummary, SamplingParams, StageEstimate,
    STATE_VERSION,
};
use crate::sampler::{chain_rng, derive_seed, sample_uniform_simplex, Chain, ChainConfig};
use crate::scaling::log_sigma;

/// Seed stage index for the final-stage `p̄` samples.
pub const PBAR_STAGE: u64 = 1 << 40;

/// Strictly increasing annealing exponents ending at `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    exponents: Vec<f64>,
    step: f64,
}

impl Schedule {
    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn first(&self) -> f64 {
        self.exponents[0]
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn is_prefix_of(&self, other: &Schedule) -> bool {
        other.exponents.len() >= self.exponents.len()
            && self.exponents.iter().zip(&other.exponents).all(|(a, b)| a == b)
    }
}

/// `(step, 2·step, …)` cut off so the last exponent is exactly `t`.
pub fn build_schedule(t: usize, step: f64) -> Result<Schedule> {
    let tf = t as f64;
    if t == 0 {
        return Err(Error::invalid("t must be positive"));
    }
    if !(step > 0.0 && step <= tf) || !step.is_finite() {
        return Err(Error::invalid(format!("schedule step must lie in (0, {t}], got {step}")));
    }
    let mut exponents = Vec::new();
    for k in 1.. {
        let e = k as f64 * step;
        if e >= tf * (1.0 - 1e-12) {
            break;
        }
        exponents.push(e);
    }
    exponents.push(tf);
    Ok(Schedule { exponents, step })
}

/// `ln S_1 = ln mean(σ^{t1}(X))` over `samples` uniform points, with the
/// jackknife standard error of that log.
pub fn estimate_s1<R: Rng + ?Sized>(n: usize, t1: f64, samples: usize, rng: &mut R) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::invalid("S1 needs at least 2 samples"));
    }
    if !(t1 > 0.0) {
        return Err(Error::invalid(format!("t1 must be positive, got {t1}")));
    }
    let logs = (0..samples)
        .map(|_| Ok(t1 * log_sigma(&sample_uniform_simplex(rng, n))?))
        .collect::<Result<Vec<f64>>>()?;
    let err = jackknife_std_err(&leave_one_out_log_means(&logs));
    Ok((log_mean_exp(&logs), err))
}

fn chain_config(params: &SamplingParams, stage: u64, chain: u64) -> (ChainConfig, u64) {
    let seed = derive_seed(params.master_seed, stage, chain);
    (ChainConfig { rng_seed: seed, ..params.chain.clone() }, seed)
}

/// Split `total` samples over `chains` as evenly as possible.
fn per_chain(total: usize, chains: usize, c: usize) -> usize {
    total / chains + usize::from(c < total % chains)
}

/// Draws `total` points from `ν ∝ σ^s` with `chains` independent chains and maps
/// each through `f`. Results are grouped by chain, in chain order.
fn sample_stage<T: Send>(
    n: usize,
    s: f64,
    total: usize,
    stage: u64,
    params: &SamplingParams,
    f: impl Fn(&crate::matrix::SimplexMatrix) -> Result<T> + Sync,
) -> Result<Vec<Vec<T>>> {
    let thin = params.thin_steps();
    (0..params.chains)
        .into_par_iter()
        .map(|c| {
            let (cfg, seed) = chain_config(params, stage, c as u64);
            let burn_in = cfg.burn_in_steps;
            let mut chain = Chain::from_uniform_start(n, s, cfg, chain_rng(seed))?;
            chain.advance(burn_in)?;
            let k = per_chain(total, params.chains, c);
            let mut out = Vec::with_capacity(k);
            for j in 0..k {
                if j > 0 {
                    chain.advance(thin)?;
                }
                out.push(f(chain.state())?);
            }
            Ok(out)
        })
        .collect()
}

/// Estimates `ln(S_{to}/S_{from})` as the log of the arithmetic mean of
/// `σ^{to − from}` over `ν_{from}`.
pub fn estimate_ratio(
    n: usize,
    t_from: f64,
    t_to: f64,
    stage_index: usize,
    params: &SamplingParams,
) -> Result<StageEstimate> {
    params.validate()?;
    if !(t_to >= t_from) {
        return Err(Error::invalid(format!("ratio needs t_to ≥ t_from, got {t_from} → {t_to}")));
    }
    let delta = t_to - t_from;
    let per_chain_logs = sample_stage(n, t_from, params.samples_per_stage, stage_index as u64, params, |x| {
        if delta == 0.0 {
            Ok(0.0)
        } else {
            Ok(delta * log_sigma(x)?)
        }
    })?;
    Ok(summarize_stage(stage_index, t_from, t_to, &per_chain_logs))
}

fn summarize_stage(stage_index: usize, t_from: f64, t_to: f64, per_chain: &[Vec<f64>]) -> StageEstimate {
    let all: Vec<f64> = per_chain.iter().flatten().copied().collect();
    let mean = log_mean_exp(&all);
    let ess = {
        let doubled: Vec<f64> = all.iter().map(|v| 2.0 * v).collect();
        (2.0 * log_sum_exp(&all) - log_sum_exp(&doubled)).exp()
    };
    let std_err = chain_jackknife(per_chain);
    StageEstimate {
        stage_index,
        t_from,
        t_to,
        log_ratio_mean: mean,
        sample_count: all.len(),
        variance_of_log_samples: sample_variance(&all),
        effective_sample_size: ess.min(all.len() as f64),
        std_err,
        completed_at_ms: now_ms(),
    }
}

/// Leave-one-chain-out jackknife of the log-mean; falls back to per-sample
/// replicates with a single chain.
fn chain_jackknife(per_chain: &[Vec<f64>]) -> f64 {
    if per_chain.len() < 2 {
        let all: Vec<f64> = per_chain.iter().flatten().copied().collect();
        return finite_or_zero(jackknife_std_err(&leave_one_out_log_means(&all)));
    }
    let replicates: Vec<f64> = (0..per_chain.len())
        .map(|drop| {
            let rest: Vec<f64> = per_chain
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != drop)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            log_mean_exp(&rest)
        })
        .collect();
    finite_or_zero(jackknife_std_err(&replicates))
}

fn finite_or_zero(v: f64) -> f64 {
    if v.is_finite() { v } else { 0.0 }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Settings for the `p̄` factor of the full estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct FullParams {
    /// Final-stage samples of `p̄`.
    pub samples: usize,
    /// `ln T`; `f64::INFINITY` disables clipping.
    pub log_threshold: f64,
}

/// Where and whether to persist progress.
#[derive(Clone, Debug, Default)]
pub struct RunOptions<'a> {
    /// Written after `S_1` and after every completed stage.
    pub state_path: Option<&'a Path>,
    /// Reuse completed stages from an existing state file at `state_path`.
    pub resume: bool,
}

/// Telescoping estimate of `∫ φ dμ`, a lower estimate of `|Σ(n,t)|`.
pub fn estimate_count_simplified(
    spec: ProblemSpec,
    schedule: &Schedule,
    params: &SamplingParams,
) -> Result<EstimateReport> {
    run(spec, schedule, params, None, &RunOptions::default())
}

/// `∫ φ dμ · mean(p̄)` over `ν ∝ φ`; needs `N = nt ≤ 24` for exact `p`.
pub fn estimate_count_full(
    spec: ProblemSpec,
    schedule: &Schedule,
    params: &SamplingParams,
    full: &FullParams,
) -> Result<EstimateReport> {
    run(spec, schedule, params, Some(full), &RunOptions::default())
}

/// General entry point with optional persistence and resume.
pub fn run(
    spec: ProblemSpec,
    schedule: &Schedule,
    params: &SamplingParams,
    full: Option<&FullParams>,
    opts: &RunOptions<'_>,
) -> Result<EstimateReport> {
    params.validate()?;
    check_schedule(spec, schedule)?;
    if let Some(f) = full {
        if spec.total() > MAX_EXACT_N {
            return Err(Error::SizeCap { what: "N = n·t for the full estimator", value: spec.total() as u64, cap: MAX_EXACT_N as u64 });
        }
        if f.samples < 2 {
            return Err(Error::invalid("full estimator needs at least 2 p samples"));
        }
        if f.log_threshold.is_nan() {
            return Err(Error::invalid("threshold must not be NaN"));
        }
    }
    let started = Instant::now();
    let prior = match (opts.resume, opts.state_path) {
        (true, Some(path)) if path.exists() => Some(load_state(path)?),
        _ => None,
    };
    let mut report = match prior {
        Some(prev) => {
            check_resumable(&prev, spec, schedule, params, opts.state_path.unwrap())?;
            prev
        }
        None => {
            let (log_s1, err) = s1_stage(spec.n, schedule.first(), params)?;
            let mut r = EstimateReport {
                version: STATE_VERSION.to_string(),
                mode: if full.is_some() { EstimateMode::Full } else { EstimateMode::Simplified },
                n: spec.n,
                t: spec.t,
                step: schedule.step(),
                schedule: schedule.exponents().to_vec(),
                log_s1,
                log_s1_std_err: err,
                stages: Vec::new(),
                log_phi_const: log_phi_const(spec),
                log_integral_phi: 0.0,
                log_pbar_mean: None,
                pbar: None,
                log_count_estimate: 0.0,
                log_std_err: 0.0,
                complete: false,
                master_seed: params.master_seed,
                params: params.clone(),
                wall_clock_secs: 0.0,
            };
            r.refresh_totals();
            persist(&r, opts)?;
            r
        }
    };
    let base_secs = report.wall_clock_secs;

    // a resumed simplified run may be upgraded to full
    if full.is_some() {
        report.mode = EstimateMode::Full;
    }
    extend_stages(&mut report, schedule, params, opts, started, base_secs)?;

    if let Some(f) = full {
        if report.log_pbar_mean.is_none() {
            let (mean, summary) = pbar_stage(spec, params, f)?;
            report.log_pbar_mean = Some(mean);
            report.pbar = Some(summary);
        }
    }
    report.wall_clock_secs = base_secs + started.elapsed().as_secs_f64();
    report.refresh_totals();
    persist(&report, opts)?;
    Ok(report)
}

fn check_schedule(spec: ProblemSpec, schedule: &Schedule) -> Result<()> {
    let e = schedule.exponents();
    if e.is_empty() || e.windows(2).any(|w| !(w[1] > w[0])) || !(e[0] > 0.0) {
        return Err(Error::invalid("schedule must be positive and strictly increasing"));
    }
    if *e.last().unwrap() != spec.t as f64 {
        return Err(Error::invalid(format!("schedule ends at {} but t = {}", e.last().unwrap(), spec.t)));
    }
    Ok(())
}

fn check_resumable(
    prev: &EstimateReport,
    spec: ProblemSpec,
    schedule: &Schedule,
    params: &SamplingParams,
    path: &Path,
) -> Result<()> {
    let bad = |reason: String| Error::State { path: path.to_path_buf(), reason };
    if prev.n != spec.n {
        return Err(bad(format!("state is for n = {}, requested n = {}", prev.n, spec.n)));
    }
    let prev_schedule = Schedule { exponents: prev.schedule.clone(), step: prev.step };
    if !prev_schedule.is_prefix_of(schedule) && !schedule.is_prefix_of(&prev_schedule) {
        return Err(bad("stored schedule is not compatible with the requested one".into()));
    }
    if prev.stages.len() + 1 > schedule.len() {
        return Err(bad("state holds more stages than the requested schedule".into()));
    }
    if prev.params.master_seed != params.master_seed
        || prev.params.chain != params.chain
        || prev.params.samples_per_stage != params.samples_per_stage
        || prev.params.chains != params.chains
        || prev.params.thin_steps() != params.thin_steps()
        || prev.params.s1_samples != params.s1_samples
    {
        return Err(bad("stored sampling parameters differ from the requested ones".into()));
    }
    Ok(())
}

fn persist(report: &EstimateReport, opts: &RunOptions<'_>) -> Result<()> {
    match opts.state_path {
        Some(p) => save_state(report, p),
        None => Ok(()),
    }
}

fn s1_stage(n: usize, t1: f64, params: &SamplingParams) -> Result<(f64, f64)> {
    with_pool(params.workers, || {
        let mut rng = chain_rng(derive_seed(params.master_seed, 0, 0));
        estimate_s1(n, t1, params.s1_samples, &mut rng)
    })?
}

/// Runs the ratios of `schedule` that `report` does not hold yet.
fn extend_stages(
    report: &mut EstimateReport,
    schedule: &Schedule,
    params: &SamplingParams,
    opts: &RunOptions<'_>,
    started: Instant,
    base_secs: f64,
) -> Result<()> {
    report.schedule = schedule.exponents().to_vec();
    report.step = schedule.step();
    report.t = *schedule.exponents().last().unwrap() as usize;
    report.log_phi_const = log_phi_const(ProblemSpec::new(report.n, report.t)?);
    let e = schedule.exponents();
    for i in report.stages.len() + 1..e.len() {
        let stage = with_pool(params.workers, || estimate_ratio(report.n, e[i - 1], e[i], i, params))??;
        report.stages.push(stage);
        report.wall_clock_secs = base_secs + started.elapsed().as_secs_f64();
        report.refresh_totals();
        persist(report, opts)?;
    }
    report.refresh_totals();
    Ok(())
}

fn pbar_stage(spec: ProblemSpec, params: &SamplingParams, full: &FullParams) -> Result<(f64, PbarSummary)> {
    let logs = with_pool(params.workers, || {
        sample_stage(spec.n, spec.t as f64, full.samples, PBAR_STAGE, params, |x| log_p_exact(x, spec))
    })??;
    let raw: Vec<f64> = logs.iter().flatten().copied().collect();
    let clipped: Vec<Vec<f64>> =
        logs.iter().map(|c| c.iter().map(|&l| clip_log_p(l, full.log_threshold)).collect()).collect();
    let flat: Vec<f64> = clipped.iter().flatten().copied().collect();
    let clipped_count = raw.iter().filter(|&&l| l > full.log_threshold).count();
    let summary = PbarSummary {
        samples: flat.len(),
        log_threshold: full.log_threshold.is_finite().then_some(full.log_threshold),
        clipped_fraction: clipped_count as f64 / flat.len() as f64,
        std_err: chain_jackknife(&clipped),
        max_log_p: raw.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    };
    Ok((log_mean_exp(&flat), summary))
}

/// Reloads a state file and extends it to line sum `new_t`, running only the
/// stages past the stored ones with the stored sampling parameters.
pub fn load_and_extend(path: &Path, new_t: usize) -> Result<EstimateReport> {
    let prev = load_state(path)?;
    if !prev.complete && prev.mode == EstimateMode::Full {
        return Err(Error::State { path: path.to_path_buf(), reason: "cannot extend an unfinished full run".into() });
    }
    if new_t < prev.t {
        return Err(Error::State {
            path: path.to_path_buf(),
            reason: format!("new t = {new_t} is below the stored t = {}", prev.t),
        });
    }
    if new_t == prev.t && prev.complete {
        return Ok(prev);
    }
    let schedule = build_schedule(new_t, prev.step)?;
    let spec = ProblemSpec::new(prev.n, new_t)?;
    let mut params = prev.params.clone();
    params.master_seed = prev.master_seed;
    let mut report = prev;
    // the p̄ factor belongs to the old t
    report.mode = EstimateMode::Simplified;
    report.log_pbar_mean = None;
    report.pbar = None;
    let opts = RunOptions { state_path: None, resume: false };
    check_resumable(&report, spec, &schedule, &params, path)?;
    let started = Instant::now();
    let base = report.wall_clock_secs;
    extend_stages(&mut report, &schedule, &params, &opts, started, base)?;
    report.wall_clock_secs = base + started.elapsed().as_secs_f64();
    report.refresh_totals();
    Ok(report)
}
