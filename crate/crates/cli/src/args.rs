use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "magicount", version, about = "Count magic squares and contingency tables")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Telescoping estimate of the count (a lower estimate).
    Estimate {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        out: Output,
        /// Checkpoint file, rewritten after every stage.
        #[arg(long)]
        state: Option<PathBuf>,
        /// Continue from the checkpoint at --state.
        #[arg(long, requires = "state")]
        resume: bool,
    },
    /// Estimate including the clipped permanent factor (needs n·t ≤ 24).
    EstimateFull {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        out: Output,
        /// Final-stage samples of the permanent factor.
        #[arg(long, default_value_t = 10_000)]
        pbar_samples: usize,
        /// Clip at ln T = β (ln N)²; omit to disable clipping.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, requires = "state")]
        resume: bool,
    },
    /// Extends a saved estimate to a larger line sum.
    Extend {
        /// State file of a finished run.
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        t: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Exact count by dynamic programming.
    Exact {
        #[command(flatten)]
        problem: ProblemOrMargins,
        /// Maximum live states per row.
        #[arg(long, default_value_t = magicount_core::exact::DEFAULT_STATE_BUDGET)]
        budget: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Diaconis–Efron and Békéssy–Békéssy–Komlós approximations.
    Heuristic {
        #[command(flatten)]
        problem: ProblemOrMargins,
        #[command(flatten)]
        out: Output,
    },
    /// Binomial lower and upper bounds for magic squares.
    Bounds {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        out: Output,
    },
    /// Side-by-side estimate, exact count, formulas and bounds.
    Compare {
        #[command(flatten)]
        problem: Problem,
        #[command(flatten)]
        sampling: Sampling,
        /// Maximum live states for the exact column; larger cases show "-".
        #[arg(long, default_value_t = 2_000_000)]
        budget: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Fast self-checks of scaling, permanents, counts and formulas.
    Validate,
}

#[derive(Args, Debug, Clone)]
pub struct Problem {
    /// Side of the square.
    #[arg(long)]
    pub n: usize,
    /// Common line sum.
    #[arg(long)]
    pub t: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ProblemOrMargins {
    #[arg(long, required_unless_present = "margins", requires = "t")]
    pub n: Option<usize>,
    #[arg(long, required_unless_present = "margins", requires = "n")]
    pub t: Option<usize>,
    /// File with row sums on the first line and column sums on the second.
    #[arg(long, conflicts_with_all = ["n", "t"])]
    pub margins: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct Sampling {
    /// Spacing of the annealing exponents.
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Samples per telescoping ratio.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Uniform samples for the first integral.
    #[arg(long)]
    pub s1_samples: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Hit-and-run steps before the first sample (default 50·n).
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Steps between samples of one chain (default: the burn-in).
    #[arg(long)]
    pub thin: Option<usize>,
    /// Knots per chord.
    #[arg(long)]
    pub knots: Option<usize>,
    /// Correct the interpolated line density with a Metropolis step.
    #[arg(long)]
    pub metropolis: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0: all cores).
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Write the JSON report here.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Print the JSON report on stdout instead of the summary.
    #[arg(long)]
    pub json: bool,
}
