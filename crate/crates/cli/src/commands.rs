use std::fs;
use std::io::{ErrorKind, Write};
use std::path::Path;
use std::process::ExitCode;

use magicount_core::density::{log_threshold, ProblemSpec};
use magicount_core::estimator::{build_schedule, load_and_extend, run as run_estimate, FullParams, RunOptions};
use magicount_core::exact::{exact_count, Margins};
use magicount_core::formulas::{bbk_asymptotic, count_bounds, de_heuristic};
use magicount_core::report::{save_state, EstimateReport, SamplingParams};
use magicount_core::{Error, LogValue};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error as ThisError;

use crate::args::{Cli, Command, Output, Problem, ProblemOrMargins, Sampling};
use crate::validate;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Usage(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Usage(_) | CliError::Core(Error::Invalid(_)) => 2,
        CliError::Core(Error::SizeCap { .. } | Error::BudgetExceeded { .. }) => 3,
        CliError::Core(Error::NoConvergence { .. } | Error::OptimizerFailed { .. } | Error::Numeric(_)) => 4,
        _ => 1,
    }
}

/// A count as natural log plus decimal mantissa and exponent.
#[derive(Serialize)]
struct Count {
    ln: f64,
    mantissa: f64,
    exponent: i64,
}

impl Count {
    fn new(ln: f64) -> Self {
        let (mantissa, exponent) = LogValue(ln).decimal();
        Count { ln, mantissa, exponent }
    }
}

fn fmt_log(ln: f64) -> String {
    LogValue(ln).to_string()
}

pub fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Estimate { problem, sampling, out, state, resume } => {
            let report = estimate(&problem, &sampling, None, state.as_deref(), resume)?;
            emit_estimate("estimate", &report, &out)
        }
        Command::EstimateFull { problem, sampling, out, pbar_samples, beta, state, resume } => {
            let spec = ProblemSpec::new(problem.n, problem.t)?;
            let log_t = match beta {
                Some(b) if !(b > 0.0) => return Err(CliError::Usage(format!("--beta must be positive, got {b}"))),
                Some(b) => log_threshold(spec, b),
                None => f64::INFINITY,
            };
            let full = FullParams { samples: pbar_samples, log_threshold: log_t };
            let report = estimate(&problem, &sampling, Some(&full), state.as_deref(), resume)?;
            emit_estimate("estimate-full", &report, &out)
        }
        Command::Extend { state, t, out } => {
            let report = load_and_extend(&state, t)?;
            save_state(&report, &state)?;
            emit_estimate("extend", &report, &out)
        }
        Command::Exact { problem, budget, out } => {
            let margins = margins_of(&problem)?;
            let count = exact_count(&margins, budget)?;
            let doc = json!({
                "command": "exact",
                "rows": margins.rows(),
                "cols": margins.cols(),
                "count": count.to_string(),
                "ln": count.ln(),
            });
            emit(&doc, &out, &count.to_string())
        }
        Command::Heuristic { problem, out } => {
            let margins = margins_of(&problem)?;
            let de = de_heuristic(&margins)?;
            let bbk = bbk_asymptotic(&margins)?;
            let summary = format!("DE ≈ {}\nBBK ≈ {}", fmt_log(de.log_value), fmt_log(bbk.log_value));
            let doc = json!({ "command": "heuristic", "de": de, "bbk": bbk });
            emit(&doc, &out, &summary)
        }
        Command::Bounds { problem, out } => {
            let spec = ProblemSpec::new(problem.n, problem.t)?;
            let (lo, hi) = count_bounds(spec);
            let summary = format!("{} ≤ count ≤ {}", fmt_log(lo.log_value), fmt_log(hi.log_value));
            let doc = json!({ "command": "bounds", "lower": lo, "upper": hi });
            emit(&doc, &out, &summary)
        }
        Command::Compare { problem, sampling, budget, out } => compare(&problem, &sampling, budget, &out),
        Command::Validate => {
            let results = validate::run_all();
            let mut failed = 0;
            for (name, outcome) in &results {
                match outcome {
                    Ok(()) => println!("ok    {name}"),
                    Err(why) => {
                        failed += 1;
                        println!("FAIL  {name}: {why}");
                    }
                }
            }
            println!("{} checks, {} failed", results.len(), failed);
            Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn margins_of(p: &ProblemOrMargins) -> Result<Margins, CliError> {
    match (&p.margins, p.n, p.t) {
        (Some(path), _, _) => Ok(Margins::parse(&fs::read_to_string(path)?)?),
        (None, Some(n), Some(t)) => {
            ProblemSpec::new(n, t)?;
            Ok(Margins::magic(n, t as u64))
        }
        _ => Err(CliError::Usage("give --n and --t, or --margins".into())),
    }
}

fn sampling_params(n: usize, s: &Sampling) -> SamplingParams {
    let mut p = SamplingParams::for_side(n);
    if let Some(v) = s.samples {
        p.samples_per_stage = v;
    }
    if let Some(v) = s.s1_samples {
        p.s1_samples = v;
    }
    if let Some(v) = s.chains {
        p.chains = v;
    }
    if let Some(v) = s.burn_in {
        p.chain.burn_in_steps = v;
    }
    if let Some(v) = s.knots {
        p.chain.knots = v;
    }
    p.thin = s.thin;
    p.chain.metropolis = s.metropolis;
    p.master_seed = s.seed;
    p.workers = s.workers;
    p
}

fn estimate(
    problem: &Problem,
    sampling: &Sampling,
    full: Option<&FullParams>,
    state: Option<&Path>,
    resume: bool,
) -> Result<EstimateReport, CliError> {
    let spec = ProblemSpec::new(problem.n, problem.t)?;
    let schedule = build_schedule(problem.t, sampling.step)?;
    let params = sampling_params(problem.n, sampling);
    let opts = RunOptions { state_path: state, resume };
    Ok(run_estimate(spec, &schedule, &params, full, &opts)?)
}

fn emit_estimate(command: &str, report: &EstimateReport, out: &Output) -> Result<ExitCode, CliError> {
    let summary = format!(
        "estimate ≈ {} (ln {:.4} ± {:.4})",
        fmt_log(report.log_count_estimate),
        report.log_count_estimate,
        report.log_std_err
    );
    let doc = json!({
        "command": command,
        "count": Count::new(report.log_count_estimate),
        "report": report,
    });
    emit(&doc, out, &summary)
}

fn emit(doc: &Value, out: &Output, summary: &str) -> Result<ExitCode, CliError> {
    let text = serde_json::to_string_pretty(doc)?;
    if let Some(path) = &out.output {
        fs::write(path, format!("{text}\n"))?;
    }
    let shown = if out.json { &text } else { summary };
    match writeln!(std::io::stdout(), "{shown}") {
        // a closed pipe (`| head`) is not an error for us
        Err(e) if e.kind() != ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(ExitCode::SUCCESS),
    }
}

fn compare(problem: &Problem, sampling: &Sampling, budget: u64, out: &Output) -> Result<ExitCode, CliError> {
    let spec = ProblemSpec::new(problem.n, problem.t)?;
    let margins = Margins::magic(problem.n, problem.t as u64);
    let report = estimate(problem, sampling, None, None, false)?;
    let exact = match exact_count(&margins, budget) {
        Ok(c) => Some(c),
        Err(Error::BudgetExceeded { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    // the heuristic needs at least a 2×2 table
    let de = de_heuristic(&margins).ok();
    let bbk = bbk_asymptotic(&margins)?;
    let (lo, hi) = count_bounds(spec);

    let mut lines = vec![format!("n = {}, t = {}", problem.n, problem.t)];
    let mut row = |name: &str, value: String| lines.push(format!("{name:<10}{value}"));
    row("estimate", fmt_log(report.log_count_estimate));
    row(
        "exact",
        exact.as_ref().map_or("-".into(), |c| format!("{} ({})", c, fmt_log(c.ln()))),
    );
    row("DE", de.as_ref().map_or("-".into(), |d| fmt_log(d.log_value)));
    row("BBK", fmt_log(bbk.log_value));
    row("bounds", format!("[{}, {}]", fmt_log(lo.log_value), fmt_log(hi.log_value)));

    let doc = json!({
        "command": "compare",
        "n": problem.n,
        "t": problem.t,
        "estimate": Count::new(report.log_count_estimate),
        "exact": exact.as_ref().map(|c| json!({ "count": c.to_string(), "ln": c.ln() })),
        "de": de.as_ref().map(|d| Count::new(d.log_value)),
        "bbk": Count::new(bbk.log_value),
        "boundLower": Count::new(lo.log_value),
        "boundUpper": Count::new(hi.log_value),
        "report": report,
    });
    emit(&doc, out, &lines.join("\n"))
}
