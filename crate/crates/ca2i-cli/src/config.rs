//! The experiment grid and how it is resolved.
//!
//! A run is described by one [`ExperimentConfig`]. Values come from three
//! layers with fixed precedence: command-line flags override config-file
//! fields, which override the desk-scale defaults. The config file is a
//! single JSON document with exactly these fields; unknown keys are
//! rejected so typos cannot silently fall back to defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use chaotic_a2i::dynamics::LorenzConfig;
use chaotic_a2i::measurement::MeasurementPlan;
use chaotic_a2i::reconstruct::MsIrnlsConfig;
use chaotic_a2i::rng::Prng;
use chaotic_a2i::signals::{AmplitudeLaw, FourierBasis};

use crate::{usage, RunResult};

/// Tags that split the master seed into independent streams, so every
/// draw (signals, start states, solver restarts) is a pure function of
/// `(seed, purpose, index)` and never of execution order.
pub mod streams {
    pub const CELL: u64 = 0x4345_4c4c;
    pub const SIGNAL: u64 = 0x5349_474e;
    pub const X0: u64 = 0x5853_5452;
    pub const STATES: u64 = 0x5354_4154;
    pub const SOLVER: u64 = 0x534f_4c56;
    pub const BANDWIDTH: u64 = 0x4241_4e44;
    pub const TRIAL: u64 = 0x5452_4c53;
}

/// One 64-bit value from substream `(tag, index)` of `seed`.
pub fn subseed(seed: u64, tag: u64, index: u64) -> u64 {
    Prng::substream(seed, tag, index).next_u64()
}

/// Solver knobs minus the penalty weight and the seed, which the
/// experiment grid supplies (`lambda` list, master seed).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverKnobs {
    pub subintervals: Option<usize>,
    pub epsilon: f64,
    pub max_inner: usize,
    pub err: f64,
    pub max_outer: usize,
    pub damping: f64,
    pub join_tol: f64,
    pub early_stop: Option<f64>,
}

impl Default for SolverKnobs {
    fn default() -> Self {
        let d = MsIrnlsConfig::<f64>::default();
        SolverKnobs {
            subintervals: d.subintervals,
            epsilon: d.epsilon,
            max_inner: d.max_inner,
            err: d.err,
            max_outer: d.max_outer,
            damping: d.damping,
            join_tol: d.join_tol,
            early_stop: d.early_stop,
        }
    }
}

impl SolverKnobs {
    /// Assemble the full solver configuration for one run.
    pub fn to_solver(&self, lambda: f64, seed: u64) -> MsIrnlsConfig<f64> {
        MsIrnlsConfig {
            subintervals: self.subintervals,
            lambda,
            epsilon: self.epsilon,
            max_inner: self.max_inner,
            err: self.err,
            max_outer: self.max_outer,
            damping: self.damping,
            join_tol: self.join_tol,
            early_stop: self.early_stop,
            seed,
        }
    }

    fn validate(&self) -> RunResult<()> {
        if let Some(l) = self.subintervals {
            require(l >= 1, "solver.subintervals: need at least one segment")?;
        }
        require(
            self.epsilon.is_finite() && self.epsilon > 0.0,
            "solver.epsilon: must be finite and positive",
        )?;
        require(self.max_inner >= 1, "solver.max_inner: need at least one step")?;
        require(
            self.err.is_finite() && self.err > 0.0,
            "solver.err: must be finite and positive",
        )?;
        require(self.max_outer >= 1, "solver.max_outer: need at least one round")?;
        require(
            self.damping > 0.0 && self.damping <= 1.0,
            "solver.damping: must lie in (0, 1]",
        )?;
        require(
            self.join_tol.is_finite() && self.join_tol > 0.0,
            "solver.join_tol: must be finite and positive",
        )?;
        if let Some(s) = self.early_stop {
            require(s.is_finite() && s >= 0.0, "solver.early_stop: must be finite and non-negative")?;
        }
        Ok(())
    }
}

/// The experiment grid plus execution knobs. List-valued fields are sweep
/// axes; the single-run commands use each list's first entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dictionary size (even, at least two).
    #[serde(rename = "B")]
    pub b: usize,
    pub lorenz: LorenzConfig<f64>,
    /// Window lengths, in seconds.
    #[serde(rename = "T_cs")]
    pub t_cs: Vec<f64>,
    /// Sparsity levels.
    #[serde(rename = "W")]
    pub w: Vec<usize>,
    pub law: AmplitudeLaw,
    /// Penalty weights; the reconstruction solver uses the first entry.
    pub lambda: Vec<f64>,
    pub n_trials: usize,
    pub n_realizations: usize,
    pub n_initial_states: usize,
    pub seed: u64,
    /// Integrator step; must tile every listed window length.
    pub h: f64,
    pub out: PathBuf,
    /// Thread budget for sweeps; results do not depend on it.
    pub workers: usize,
    /// Full-scale trial counts: 10^3 for the μ̄ sweeps, 10^2 for the
    /// error sweeps. Desk scale keeps `n_trials` for both.
    pub full_scale: bool,
    /// Time scales for the bandwidth table.
    pub tau_grid: Vec<f64>,
    /// Records averaged per time scale.
    pub bandwidth_runs: usize,
    /// Length of each autonomous record, in seconds.
    pub bandwidth_duration: f64,
    pub solver: SolverKnobs,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            b: 100,
            lorenz: LorenzConfig::default(),
            t_cs: vec![0.02],
            w: vec![5],
            law: AmplitudeLaw::Gaussian,
            lambda: vec![2e-3],
            n_trials: 30,
            n_realizations: 20,
            n_initial_states: 20,
            seed: 0,
            h: 2e-4,
            out: PathBuf::from("ca2i-out"),
            workers: 1,
            full_scale: false,
            tau_grid: vec![5.0, 10.0, 15.0, 20.0],
            bandwidth_runs: 5,
            bandwidth_duration: 10.0,
            solver: SolverKnobs::default(),
        }
    }
}

fn require(ok: bool, msg: &str) -> RunResult<()> {
    if ok {
        Ok(())
    } else {
        Err(usage(anyhow::anyhow!("{msg}")))
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> RunResult<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(usage)?;
        serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))
            .map_err(usage)
    }

    /// Reject grids the commands cannot honor, before any numerics run.
    pub fn validate(&self) -> RunResult<()> {
        FourierBasis::new(self.b).map_err(usage)?;
        require(!self.t_cs.is_empty(), "T_cs: need at least one window length")?;
        require(!self.w.is_empty(), "W: need at least one sparsity level")?;
        require(!self.lambda.is_empty(), "lambda: need at least one penalty weight")?;
        require(!self.tau_grid.is_empty(), "tau_grid: need at least one time scale")?;
        require(self.h.is_finite() && self.h > 0.0, "h: must be finite and positive")?;
        for &t in &self.t_cs {
            let plan = MeasurementPlan::new(t).map_err(usage)?;
            plan.steps_per_window(self.h)
                .with_context(|| format!("T_cs={t} with h={}", self.h))
                .map_err(usage)?;
        }
        for &w in &self.w {
            require(
                w <= self.b,
                &format!("W={w}: sparsity cannot exceed the dictionary size {}", self.b),
            )?;
        }
        for &l in &self.lambda {
            require(l.is_finite() && l >= 0.0, "lambda: entries must be finite and non-negative")?;
        }
        for &t in &self.tau_grid {
            require(t.is_finite() && t > 0.0, "tau_grid: entries must be finite and positive")?;
        }
        let lz = &self.lorenz;
        require(
            [lz.a, lz.b, lz.c, lz.mu].iter().all(|v| v.is_finite()),
            "lorenz: parameters must be finite",
        )?;
        require(lz.tau.is_finite() && lz.tau > 0.0, "lorenz.tau: must be finite and positive")?;
        require(self.n_trials >= 1, "n_trials: need at least one trial")?;
        require(self.n_realizations >= 1, "n_realizations: need at least one realization")?;
        require(self.n_initial_states >= 1, "n_initial_states: need at least one state")?;
        require(self.workers >= 1, "workers: need at least one thread")?;
        require(self.bandwidth_runs >= 1, "bandwidth_runs: need at least one record")?;
        require(
            self.bandwidth_duration.is_finite() && self.bandwidth_duration > 0.0,
            "bandwidth_duration: must be finite and positive",
        )?;
        self.solver.validate()
    }

    /// Trials per μ̄ sweep cell.
    pub fn mu_trials(&self) -> usize {
        if self.full_scale {
            1000
        } else {
            self.n_trials
        }
    }

    /// Trials per reconstruction sweep cell.
    pub fn recon_trials(&self) -> usize {
        if self.full_scale {
            100
        } else {
            self.n_trials
        }
    }
}
