//! `ca2i` — drive the chaotic analog-to-information converter from the
//! command line: draw sparse signals, measure them through the forced
//! Lorenz system, analyze identifiability, reconstruct, and tabulate
//! sweeps. Artifacts are UTF-8 CSV (with header row) and JSON (stable key
//! order); identical config and seed reproduce identical bytes.
//!
//! Exit codes: 0 success, 1 usage error, 2 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use ca2i_cli::artifacts::read_json;
use ca2i_cli::config::ExperimentConfig;
use ca2i_cli::runs::{
    cmd_bandwidth, cmd_generate, cmd_identify, cmd_measure, cmd_pipeline, cmd_reconstruct,
};
use ca2i_cli::sweeps::{cmd_sweep_mu, cmd_sweep_recon};
use ca2i_cli::RunResult;

use chaotic_a2i::signals::{AmplitudeLaw, SparseSignal};

#[derive(Parser, Debug)]
#[command(
    name = "ca2i",
    version,
    about = "Chaotic analog-to-information conversion experiments",
    after_help = "Values resolve as: command-line flags > --config file > defaults.\n\
                  Single-run commands use the first entry of each list-valued field."
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LawArg {
    /// Standard normal amplitudes.
    Gaussian,
    /// Unit-magnitude random-sign amplitudes.
    Bernoulli,
}

impl From<LawArg> for AmplitudeLaw {
    fn from(law: LawArg) -> Self {
        match law {
            LawArg::Gaussian => AmplitudeLaw::Gaussian,
            LawArg::Bernoulli => AmplitudeLaw::Bernoulli,
        }
    }
}

/// Flag mirror of the config file; every field can be overridden here.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON config file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed for every random draw.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Window length T_cs in seconds; repeat to sweep several.
    #[arg(long, global = true, value_name = "F", action = ArgAction::Append)]
    tcs: Vec<f64>,
    /// Sparsity level W; repeat to sweep several.
    #[arg(long, global = true, value_name = "N", action = ArgAction::Append)]
    sparsity: Vec<usize>,
    /// Penalty weight; repeat to sweep several (the solver uses the first).
    #[arg(long, global = true, value_name = "F", action = ArgAction::Append)]
    lambda: Vec<f64>,
    /// Lorenz time scale; also pins the bandwidth grid to this one value.
    #[arg(long, global = true, value_name = "F")]
    tau: Option<f64>,
    /// Thread budget for sweeps; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Full-scale trial counts (10^3 for mu-bar sweeps, 10^2 for error sweeps).
    #[arg(long, global = true)]
    full_scale: bool,
    /// Dictionary size B (even).
    #[arg(long, global = true, value_name = "N")]
    basis: Option<usize>,
    /// Amplitude law for sparse draws.
    #[arg(long, global = true, value_name = "LAW")]
    law: Option<LawArg>,
    /// Lorenz parameter a.
    #[arg(long, global = true, value_name = "F")]
    lorenz_a: Option<f64>,
    /// Lorenz parameter b.
    #[arg(long, global = true, value_name = "F")]
    lorenz_b: Option<f64>,
    /// Lorenz parameter c.
    #[arg(long, global = true, value_name = "F")]
    lorenz_c: Option<f64>,
    /// Input coupling gain.
    #[arg(long, global = true, value_name = "F")]
    mu: Option<f64>,
    /// Trials per sweep cell.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<usize>,
    /// Solver restarts per reconstruction.
    #[arg(long, global = true, value_name = "N")]
    realizations: Option<usize>,
    /// Attractor states per mu-bar average and restart node pool.
    #[arg(long, global = true, value_name = "N")]
    initial_states: Option<usize>,
    /// Integrator step h; must tile every window length.
    #[arg(long, global = true, value_name = "F")]
    step: Option<f64>,
    /// Bandwidth-table time scale; repeat for a custom grid.
    #[arg(long, global = true, value_name = "F", action = ArgAction::Append)]
    tau_grid: Vec<f64>,
    /// Records averaged per time scale in the bandwidth table.
    #[arg(long, global = true, value_name = "N")]
    bandwidth_runs: Option<usize>,
    /// Autonomous record length in seconds.
    #[arg(long, global = true, value_name = "F")]
    bandwidth_duration: Option<f64>,
    /// Shooting segments (default: one per five windows).
    #[arg(long, global = true, value_name = "N")]
    subintervals: Option<usize>,
    /// Smoothing floor of the reweighting.
    #[arg(long, global = true, value_name = "F")]
    epsilon: Option<f64>,
    /// Gauss-Newton steps per reweighting round.
    #[arg(long, global = true, value_name = "N")]
    max_inner: Option<usize>,
    /// Relative-change stopping tolerance of the solver.
    #[arg(long, global = true, value_name = "F")]
    err: Option<f64>,
    /// Reweighting rounds.
    #[arg(long, global = true, value_name = "N")]
    max_outer: Option<usize>,
    /// Step-shrink factor in (0, 1]; exactly one takes full steps.
    #[arg(long, global = true, value_name = "F")]
    damping: Option<f64>,
    /// Join-mismatch bound for a run to count as converged.
    #[arg(long, global = true, value_name = "F")]
    join_tol: Option<f64>,
    /// Stop restarts early once the best score reaches this level.
    #[arg(long, global = true, value_name = "F")]
    early_stop: Option<f64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if !self.tcs.is_empty() {
            cfg.t_cs = self.tcs.clone();
        }
        if !self.sparsity.is_empty() {
            cfg.w = self.sparsity.clone();
        }
        if !self.lambda.is_empty() {
            cfg.lambda = self.lambda.clone();
        }
        if let Some(t) = self.tau {
            cfg.lorenz.tau = t;
            cfg.tau_grid = vec![t];
        }
        if !self.tau_grid.is_empty() {
            cfg.tau_grid = self.tau_grid.clone();
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if self.full_scale {
            cfg.full_scale = true;
        }
        if let Some(v) = self.basis {
            cfg.b = v;
        }
        if let Some(v) = self.law {
            cfg.law = v.into();
        }
        if let Some(v) = self.lorenz_a {
            cfg.lorenz.a = v;
        }
        if let Some(v) = self.lorenz_b {
            cfg.lorenz.b = v;
        }
        if let Some(v) = self.lorenz_c {
            cfg.lorenz.c = v;
        }
        if let Some(v) = self.mu {
            cfg.lorenz.mu = v;
        }
        if let Some(v) = self.trials {
            cfg.n_trials = v;
        }
        if let Some(v) = self.realizations {
            cfg.n_realizations = v;
        }
        if let Some(v) = self.initial_states {
            cfg.n_initial_states = v;
        }
        if let Some(v) = self.step {
            cfg.h = v;
        }
        if let Some(v) = self.bandwidth_runs {
            cfg.bandwidth_runs = v;
        }
        if let Some(v) = self.bandwidth_duration {
            cfg.bandwidth_duration = v;
        }
        if let Some(v) = self.subintervals {
            cfg.solver.subintervals = Some(v);
        }
        if let Some(v) = self.epsilon {
            cfg.solver.epsilon = v;
        }
        if let Some(v) = self.max_inner {
            cfg.solver.max_inner = v;
        }
        if let Some(v) = self.err {
            cfg.solver.err = v;
        }
        if let Some(v) = self.max_outer {
            cfg.solver.max_outer = v;
        }
        if let Some(v) = self.damping {
            cfg.solver.damping = v;
        }
        if let Some(v) = self.join_tol {
            cfg.solver.join_tol = v;
        }
        if let Some(v) = self.early_stop {
            cfg.solver.early_stop = Some(v);
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a corpus of sparse signals.
    Generate,
    /// Push a signal through the converter and dump the window integrals.
    Measure {
        /// Signal JSON ({"B": .., "alpha": [..]}) instead of a seeded draw.
        #[arg(long, value_name = "PATH")]
        signal: Option<PathBuf>,
    },
    /// Recover the driving signal from its dump sequence.
    Reconstruct {
        /// Signal JSON ({"B": .., "alpha": [..]}) instead of a seeded draw.
        #[arg(long, value_name = "PATH")]
        signal: Option<PathBuf>,
    },
    /// Correlation analysis of one configuration over attractor states.
    Identify,
    /// 99%-energy bandwidth of the autonomous response per time scale.
    Bandwidth,
    /// Tabulate the mu-bar statistic over the (T_cs, W, lambda) grid.
    SweepMu,
    /// Tabulate best-of-restarts reconstruction errors over the grid.
    SweepRecon,
    /// End-to-end demo: signal, measurements, analysis, recovery, waveforms.
    Pipeline {
        /// Signal JSON ({"B": .., "alpha": [..]}) instead of a seeded draw.
        #[arg(long, value_name = "PATH")]
        signal: Option<PathBuf>,
    },
}

fn load_signal(path: &Option<PathBuf>) -> RunResult<Option<SparseSignal<f64>>> {
    match path {
        Some(p) => Ok(Some(read_json(p)?)),
        None => Ok(None),
    }
}

fn run(cli: Cli) -> RunResult<()> {
    let mut cfg = match &cli.overrides.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;
    match &cli.command {
        Command::Generate => cmd_generate(&cfg),
        Command::Measure { signal } => cmd_measure(&cfg, load_signal(signal)?),
        Command::Reconstruct { signal } => cmd_reconstruct(&cfg, load_signal(signal)?),
        Command::Identify => cmd_identify(&cfg),
        Command::Bandwidth => cmd_bandwidth(&cfg),
        Command::SweepMu => cmd_sweep_mu(&cfg),
        Command::SweepRecon => cmd_sweep_recon(&cfg),
        Command::Pipeline { signal } => cmd_pipeline(&cfg, load_signal(signal)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version print to stdout and succeed; genuine
            // parse problems are usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}
