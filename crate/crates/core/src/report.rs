//! Estimate reports and their on-disk state file.
//!
//! The state file is a single JSON document. Field names are stable:
//! `n`, `t`, `schedule`, `logS1`, `stages[{i, logRatioMean, var, ess, samples}]`,
//! `logPhiConst`, `logIntegralPhi`, `logPbarMean`, `logCountEstimate`,
//! `masterSeed`, plus diagnostics and a config echo.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::ChainConfig;

pub const STATE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Sampling effort for one estimation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SamplingParams {
    /// Uniform draws for the first integral `S_1`.
    pub s1_samples: usize,
    /// Chain samples per telescoping ratio, split across `chains`.
    pub samples_per_stage: usize,
    pub chains: usize,
    /// Steps between consecutive samples of one chain; `None` means the burn-in length.
    pub thin: Option<usize>,
    /// Burn-in, knots, margin and the Metropolis flag. The seed field is
    /// overwritten per chain from `master_seed`.
    pub chain: ChainConfig,
    pub master_seed: u64,
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
}

impl SamplingParams {
    pub fn for_side(n: usize) -> Self {
        SamplingParams {
            s1_samples: 10_000,
            samples_per_stage: 200,
            chains: 4,
            thin: None,
            chain: ChainConfig::for_side(n),
            master_seed: 0,
            workers: 0,
        }
    }

    pub fn thin_steps(&self) -> usize {
        self.thin.unwrap_or(self.chain.burn_in_steps).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.validate()?;
        if self.s1_samples < 2 || self.samples_per_stage < 2 {
            return Err(Error::invalid("need at least 2 samples for S1 and for every ratio"));
        }
        if self.chains < 1 || self.chains > self.samples_per_stage {
            return Err(Error::invalid(format!(
                "chains must lie in 1..={}, got {}",
                self.samples_per_stage, self.chains
            )));
        }
        Ok(())
    }
}

/// One telescoping ratio `S_{i+1}/S_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StageEstimate {
    #[serde(rename = "i")]
    pub stage_index: usize,
    pub t_from: f64,
    pub t_to: f64,
    pub log_ratio_mean: f64,
    #[serde(rename = "samples")]
    pub sample_count: usize,
    /// Variance of the per-sample log-ratios.
    #[serde(rename = "var")]
    pub variance_of_log_samples: f64,
    #[serde(rename = "ess")]
    pub effective_sample_size: f64,
    /// Jackknife (over chains) standard error of `log_ratio_mean`.
    pub std_err: f64,
    /// Milliseconds since the Unix epoch when the stage finished.
    pub completed_at_ms: u64,
}

/// Mean of the clipped `p`-factor over the final-stage measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PbarSummary {
    pub samples: usize,
    /// `ln T`; `None` means no clipping.
    pub log_threshold: Option<f64>,
    pub clipped_fraction: f64,
    pub std_err: f64,
    pub max_log_p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMode {
    Simplified,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EstimateReport {
    pub version: String,
    pub mode: EstimateMode,
    pub n: usize,
    pub t: usize,
    pub step: f64,
    pub schedule: Vec<f64>,
    #[serde(rename = "logS1")]
    pub log_s1: f64,
    #[serde(rename = "logS1StdErr")]
    pub log_s1_std_err: f64,
    pub stages: Vec<StageEstimate>,
    pub log_phi_const: f64,
    /// `log_phi_const + logS1 + Σ logRatioMean` over the stages present.
    pub log_integral_phi: f64,
    pub log_pbar_mean: Option<f64>,
    pub pbar: Option<PbarSummary>,
    pub log_count_estimate: f64,
    /// Root-sum-square of the stage errors.
    pub log_std_err: f64,
    /// Every ratio of the schedule is present (and `p̄` in full mode).
    pub complete: bool,
    pub master_seed: u64,
    pub params: SamplingParams,
    pub wall_clock_secs: f64,
}

impl EstimateReport {
    /// Recomputes the derived totals from `log_s1`, `stages` and `log_pbar_mean`.
    pub fn refresh_totals(&mut self) {
        self.log_integral_phi =
            self.log_phi_const + self.log_s1 + self.stages.iter().map(|s| s.log_ratio_mean).sum::<f64>();
        self.log_count_estimate = self.log_integral_phi + self.log_pbar_mean.unwrap_or(0.0);
        let mut var = self.log_s1_std_err.powi(2) + self.stages.iter().map(|s| s.std_err.powi(2)).sum::<f64>();
        if let Some(p) = &self.pbar {
            var += p.std_err.powi(2);
        }
        self.log_std_err = var.sqrt();
        let ratios_done = self.stages.len() + 1 == self.schedule.len();
        self.complete = ratios_done && (self.mode == EstimateMode::Simplified || self.log_pbar_mean.is_some());
    }

    /// The same report with timing fields zeroed, for replay comparisons.
    pub fn without_timing(&self) -> EstimateReport {
        let mut r = self.clone();
        r.wall_clock_secs = 0.0;
        r.stages.iter_mut().for_each(|s| s.completed_at_ms = 0);
        r
    }
}

/// Writes `report` as JSON, atomically replacing `path`.
pub fn save_state(report: &EstimateReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::State {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_state(path: &Path) -> Result<EstimateReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::State { path: path.to_path_buf(), reason: e.to_string() })
}
