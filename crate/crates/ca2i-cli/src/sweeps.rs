//! Grid sweeps: the μ̄ statistic and the best-of-restarts reconstruction
//! error over the (T_cs, W, λ) grid.
//!
//! Every trial derives its own seeds from `(master seed, cell, trial)`,
//! so a trial's outcome never depends on scheduling; cells and trials run
//! on a local thread pool bounded by the worker knob, and records are
//! emitted in canonical order (grid order, then trial index, then the
//! aggregate row) regardless of execution order. A failed trial is logged
//! and skipped, so one diverging draw cannot sink a table; the sweep only
//! errors out when every trial failed.

use anyhow::anyhow;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use chaotic_a2i::dynamics::sample_attractor_initial_states;
use chaotic_a2i::identifiability::averaged_mu_multi;
use chaotic_a2i::measurement::{measure, MeasurementPlan};
use chaotic_a2i::reconstruct::multi_start_reconstruct;
use chaotic_a2i::signals::{generate_sparse, FourierBasis, SparseSignal, SparsitySpec};

use crate::artifacts::{ensure_out_dir, write_csv, write_json};
use crate::config::{streams, subseed, ExperimentConfig};
use crate::{numerical, usage, RunResult};

/// One sweep-table row: a named statistic at one grid point. Per-trial
/// rows carry their trial index; aggregate rows leave it empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub experiment: String,
    pub t_cs: f64,
    pub w: usize,
    pub lambda: f64,
    pub statistic: String,
    pub value: f64,
    pub seed: u64,
    pub trial: Option<usize>,
}

/// A finished sweep: canonical records plus the diagnostics of skipped
/// trials.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub failures: Vec<String>,
}

struct Cell {
    index: usize,
    t_cs: f64,
    w: usize,
}

fn grid(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &t_cs in &cfg.t_cs {
        for &w in &cfg.w {
            cells.push(Cell { index: cells.len(), t_cs, w });
        }
    }
    cells
}

/// Run `job` for every (cell, trial) pair on a pool of `workers` threads
/// and hand back results in item order.
fn run_trials<T: Send>(
    cells: &[Cell],
    trials: usize,
    workers: usize,
    job: impl Fn(&Cell, usize) -> Result<T, String> + Sync,
) -> RunResult<Vec<Result<T, String>>> {
    let items: Vec<(&Cell, usize)> = cells
        .iter()
        .flat_map(|c| (0..trials).map(move |t| (c, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| usage(anyhow!("building the worker pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(|(c, t)| job(c, *t)).collect()))
}

fn finite_or_err(value: f64, what: &str) -> Result<f64, String> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("{what} is not finite ({value})"))
    }
}

/// The μ̄ table: for every (T_cs, W) cell and trial, draw a signal and a
/// set of converter start states, average the correlation statistic over
/// the states, and report one value per configured λ plus the per-λ mean
/// over trials.
pub fn sweep_mu(cfg: &ExperimentConfig) -> RunResult<SweepOutput> {
    let basis = FourierBasis::new(cfg.b).map_err(usage)?;
    let cells = grid(cfg);
    let trials = cfg.mu_trials();
    let results = run_trials(&cells, trials, cfg.workers, |cell, trial| {
        let cell_seed = subseed(cfg.seed, streams::CELL, cell.index as u64);
        let signal: SparseSignal<f64> = generate_sparse(
            basis,
            &SparsitySpec {
                w: cell.w,
                law: cfg.law,
                seed: subseed(cell_seed, streams::SIGNAL, trial as u64),
            },
        )
        .map_err(|e| e.to_string())?;
        let states = sample_attractor_initial_states(
            &cfg.lorenz,
            cfg.n_initial_states,
            subseed(cell_seed, streams::STATES, trial as u64),
        )
        .map_err(|e| e.to_string())?;
        let plan = MeasurementPlan::new(cell.t_cs).map_err(|e| e.to_string())?;
        let averages = averaged_mu_multi(
            &cfg.lorenz,
            &signal,
            &states,
            &plan,
            cfg.h,
            &cfg.lambda,
            cfg.solver.epsilon,
        )
        .map_err(|e| e.to_string())?;
        averages
            .into_iter()
            .map(|a| finite_or_err(a.mu_bar, "mu_bar"))
            .collect::<Result<Vec<f64>, String>>()
    })?;

    let mut out = SweepOutput { records: Vec::new(), failures: Vec::new() };
    for cell in &cells {
        for (li, &lambda) in cfg.lambda.iter().enumerate() {
            let mut values = Vec::new();
            for trial in 0..trials {
                match &results[cell.index * trials + trial] {
                    Ok(mus) => {
                        out.records.push(SweepRecord {
                            experiment: "sweep-mu".into(),
                            t_cs: cell.t_cs,
                            w: cell.w,
                            lambda,
                            statistic: "mu_bar".into(),
                            value: mus[li],
                            seed: cfg.seed,
                            trial: Some(trial),
                        });
                        values.push(mus[li]);
                    }
                    Err(msg) => {
                        // One diagnostic per trial, not one per lambda.
                        if li == 0 {
                            out.failures.push(format!(
                                "sweep-mu T_cs={} W={} trial {trial}: {msg}",
                                cell.t_cs, cell.w
                            ));
                        }
                    }
                }
            }
            if !values.is_empty() {
                out.records.push(SweepRecord {
                    experiment: "sweep-mu".into(),
                    t_cs: cell.t_cs,
                    w: cell.w,
                    lambda,
                    statistic: "mu_bar_mean".into(),
                    value: values.iter().sum::<f64>() / values.len() as f64,
                    seed: cfg.seed,
                    trial: None,
                });
            }
        }
    }
    all_failed_check(out, "sweep-mu")
}

/// The error table: for every (T_cs, W) cell and trial, draw a signal,
/// measure it, reconstruct with multi-start, and record the smallest
/// squared relative error over the realizations plus the per-cell mean.
/// Cells with W = 0 are skipped — the error is undefined against a zero
/// reference.
pub fn sweep_reconstruction(cfg: &ExperimentConfig) -> RunResult<SweepOutput> {
    let basis = FourierBasis::new(cfg.b).map_err(usage)?;
    let lambda = cfg.lambda[0];
    let all_cells = grid(cfg);
    let mut skipped = Vec::new();
    let cells: Vec<Cell> = all_cells
        .into_iter()
        .filter(|c| {
            if c.w == 0 {
                skipped.push(format!(
                    "sweep-recon T_cs={} W=0: relative error undefined for the zero signal; cell skipped",
                    c.t_cs
                ));
                false
            } else {
                true
            }
        })
        .collect();
    let trials = cfg.recon_trials();
    let results = run_trials(&cells, trials, cfg.workers, |cell, trial| {
        let cell_seed = subseed(cfg.seed, streams::CELL, cell.index as u64);
        let signal: SparseSignal<f64> = generate_sparse(
            basis,
            &SparsitySpec {
                w: cell.w,
                law: cfg.law,
                seed: subseed(cell_seed, streams::SIGNAL, trial as u64),
            },
        )
        .map_err(|e| e.to_string())?;
        let x0 = sample_attractor_initial_states(
            &cfg.lorenz,
            1,
            subseed(cell_seed, streams::X0, trial as u64),
        )
        .map_err(|e| e.to_string())?
        .remove(0);
        let plan = MeasurementPlan::new(cell.t_cs).map_err(|e| e.to_string())?;
        let y = measure(&cfg.lorenz, &signal, &x0, &plan, cfg.h).map_err(|e| e.to_string())?;
        let pool = sample_attractor_initial_states(
            &cfg.lorenz,
            cfg.n_initial_states,
            subseed(cell_seed, streams::STATES, trial as u64),
        )
        .map_err(|e| e.to_string())?;
        let solver = cfg
            .solver
            .to_solver(lambda, subseed(cell_seed, streams::SOLVER, trial as u64));
        let result = multi_start_reconstruct(
            &y,
            &cfg.lorenz,
            basis,
            &x0,
            &plan,
            cfg.h,
            &solver,
            cfg.n_realizations,
            &pool,
            Some(signal.alpha()),
        )
        .map_err(|e| e.to_string())?;
        finite_or_err(result.err_rel.expect("truth supplied"), "err_rel")
    })?;

    let mut out = SweepOutput { records: Vec::new(), failures: skipped };
    for (ci, cell) in cells.iter().enumerate() {
        let mut values = Vec::new();
        for trial in 0..trials {
            match &results[ci * trials + trial] {
                Ok(err) => {
                    out.records.push(SweepRecord {
                        experiment: "sweep-recon".into(),
                        t_cs: cell.t_cs,
                        w: cell.w,
                        lambda,
                        statistic: "err_min".into(),
                        value: *err,
                        seed: cfg.seed,
                        trial: Some(trial),
                    });
                    values.push(*err);
                }
                Err(msg) => out.failures.push(format!(
                    "sweep-recon T_cs={} W={} trial {trial}: {msg}",
                    cell.t_cs, cell.w
                )),
            }
        }
        if !values.is_empty() {
            out.records.push(SweepRecord {
                experiment: "sweep-recon".into(),
                t_cs: cell.t_cs,
                w: cell.w,
                lambda,
                statistic: "err_mean".into(),
                value: values.iter().sum::<f64>() / values.len() as f64,
                seed: cfg.seed,
                trial: None,
            });
        }
    }
    all_failed_check(out, "sweep-recon")
}

fn all_failed_check(out: SweepOutput, what: &str) -> RunResult<SweepOutput> {
    if out.records.is_empty() && !out.failures.is_empty() {
        return Err(numerical(anyhow!(
            "{what}: every trial failed; first: {}",
            out.failures[0]
        )));
    }
    Ok(out)
}

fn write_sweep(cfg: &ExperimentConfig, name: &str, out: &SweepOutput) -> RunResult<()> {
    ensure_out_dir(&cfg.out)?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    write_csv(&cfg.out.join(format!("{name}.csv")), &out.records)?;
    for f in &out.failures {
        eprintln!("warning: {f}");
    }
    println!(
        "{name}: {} records, {} skipped trials",
        out.records.len(),
        out.failures.len()
    );
    Ok(())
}

pub fn cmd_sweep_mu(cfg: &ExperimentConfig) -> RunResult<()> {
    let out = sweep_mu(cfg)?;
    write_sweep(cfg, "sweep_mu", &out)
}

pub fn cmd_sweep_recon(cfg: &ExperimentConfig) -> RunResult<()> {
    let out = sweep_reconstruction(cfg)?;
    write_sweep(cfg, "sweep_recon", &out)
}
