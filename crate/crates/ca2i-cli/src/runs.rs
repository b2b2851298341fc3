//! Single-shot commands: corpus generation, measurement, reconstruction,
//! identifiability analysis, bandwidth tables, and the end-to-end
//! pipeline. Each command resolves everything it needs from the config
//! and master seed, writes its artifacts into the output directory, and
//! prints a one-line summary; list-valued grid fields contribute their
//! first entry.

use anyhow::anyhow;
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use chaotic_a2i::dynamics::{integrate, sample_attractor_initial_states, LorenzConfig};
use chaotic_a2i::identifiability::averaged_mu_multi;
use chaotic_a2i::measurement::{measure, MeasurementPlan, MeasurementVector};
use chaotic_a2i::reconstruct::{multi_start_reconstruct, ReconstructionResult};
use chaotic_a2i::signals::{generate_sparse, FourierBasis, SparseSignal, SparsitySpec};
use chaotic_a2i::spectrum::estimate_bandwidth;

use crate::artifacts::{ensure_out_dir, write_csv, write_json};
use crate::config::{streams, subseed, ExperimentConfig};
use crate::{classify, usage, RunResult};

/// Ingredients shared by the single-run commands, all derived
/// deterministically from the configuration: dictionary, converter,
/// measurement plan, driving signal, and the converter's start state.
pub struct RunSetup {
    pub basis: FourierBasis,
    pub system: LorenzConfig<f64>,
    pub plan: MeasurementPlan<f64>,
    pub signal: SparseSignal<f64>,
    pub x0: Array1<f64>,
    pub lambda: f64,
}

pub fn run_setup(
    cfg: &ExperimentConfig,
    explicit: Option<SparseSignal<f64>>,
) -> RunResult<RunSetup> {
    let basis = FourierBasis::new(cfg.b).map_err(usage)?;
    let plan = MeasurementPlan::new(cfg.t_cs[0]).map_err(usage)?;
    let signal = match explicit {
        Some(s) => {
            if s.basis().size() != cfg.b {
                return Err(usage(anyhow!(
                    "--signal has B = {} but the config says B = {}; pass --basis {}",
                    s.basis().size(),
                    cfg.b,
                    s.basis().size()
                )));
            }
            s
        }
        None => generate_sparse(
            basis,
            &SparsitySpec {
                w: cfg.w[0],
                law: cfg.law,
                seed: subseed(cfg.seed, streams::SIGNAL, 0),
            },
        )
        .map_err(usage)?,
    };
    let x0 = sample_attractor_initial_states(&cfg.lorenz, 1, subseed(cfg.seed, streams::X0, 0))
        .map_err(classify)?
        .remove(0);
    Ok(RunSetup {
        basis,
        system: cfg.lorenz,
        plan,
        signal,
        x0,
        lambda: cfg.lambda[0],
    })
}

/// One corpus signal with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSignal {
    pub w: usize,
    pub trial: usize,
    pub seed: u64,
    pub signal: SparseSignal<f64>,
}

/// Plot-ready corpus row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub w: usize,
    pub trial: usize,
    pub seed: u64,
    pub nnz: usize,
    pub l2_norm: f64,
}

pub fn cmd_generate(cfg: &ExperimentConfig) -> RunResult<()> {
    let basis = FourierBasis::new(cfg.b).map_err(usage)?;
    let mut signals = Vec::new();
    let mut entries = Vec::new();
    for (wi, &w) in cfg.w.iter().enumerate() {
        let cell = subseed(cfg.seed, streams::CELL, wi as u64);
        for trial in 0..cfg.n_trials {
            let seed = subseed(cell, streams::SIGNAL, trial as u64);
            let signal =
                generate_sparse::<f64>(basis, &SparsitySpec { w, law: cfg.law, seed })
                    .map_err(usage)?;
            let alpha = signal.alpha();
            entries.push(CorpusEntry {
                w,
                trial,
                seed,
                nnz: signal.sparsity(),
                l2_norm: alpha.dot(alpha).sqrt(),
            });
            signals.push(CorpusSignal { w, trial, seed, signal });
        }
    }
    ensure_out_dir(&cfg.out)?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    write_json(&cfg.out.join("corpus.json"), &signals)?;
    write_csv(&cfg.out.join("corpus.csv"), &entries)?;
    println!(
        "generate: {} signals over {} sparsity levels (B = {})",
        signals.len(),
        cfg.w.len(),
        cfg.b
    );
    Ok(())
}

pub fn cmd_measure(cfg: &ExperimentConfig, explicit: Option<SparseSignal<f64>>) -> RunResult<()> {
    let setup = run_setup(cfg, explicit)?;
    let y = measure(&setup.system, &setup.signal, &setup.x0, &setup.plan, cfg.h)
        .map_err(|e| classify(e).stage("measurement"))?;
    ensure_out_dir(&cfg.out)?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    write_json(&cfg.out.join("signal.json"), &setup.signal)?;
    write_measurements(cfg, &y)?;
    let norm = y.y.dot(&y.y).sqrt();
    println!(
        "measure: {} windows at T_cs = {}: ||y||_2 = {:.6e}",
        y.len(),
        setup.plan.t_cs(),
        norm
    );
    Ok(())
}

fn write_measurements(cfg: &ExperimentConfig, y: &MeasurementVector<f64>) -> RunResult<()> {
    write_json(&cfg.out.join("measurements.json"), y)?;
    let path = cfg.out.join("measurements.csv");
    let file = std::fs::File::create(&path)
        .map_err(|e| usage(anyhow!("creating {}: {e}", path.display())))?;
    y.write_csv(std::io::BufWriter::new(file))
        .map_err(|e| usage(anyhow!("writing {}: {e}", path.display())))
}

/// Recovered-versus-true coefficient row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub k: usize,
    pub alpha_true: f64,
    pub alpha_hat: f64,
}

fn coefficient_rows(truth: &Array1<f64>, est: &Array1<f64>) -> Vec<CoefficientRow> {
    truth
        .iter()
        .zip(est.iter())
        .enumerate()
        .map(|(k, (&alpha_true, &alpha_hat))| CoefficientRow { k, alpha_true, alpha_hat })
        .collect()
}

/// Solve one reconstruction exactly as the command does, without touching
/// the filesystem.
pub fn reconstruct_once(
    cfg: &ExperimentConfig,
    setup: &RunSetup,
    y: &MeasurementVector<f64>,
) -> RunResult<ReconstructionResult<f64>> {
    let pool = sample_attractor_initial_states(
        &cfg.lorenz,
        cfg.n_initial_states,
        subseed(cfg.seed, streams::STATES, 0),
    )
    .map_err(classify)?;
    let solver = cfg
        .solver
        .to_solver(setup.lambda, subseed(cfg.seed, streams::SOLVER, 0));
    multi_start_reconstruct(
        y,
        &setup.system,
        setup.basis,
        &setup.x0,
        &setup.plan,
        cfg.h,
        &solver,
        cfg.n_realizations,
        &pool,
        Some(setup.signal.alpha()),
    )
    .map_err(classify)
}

pub fn cmd_reconstruct(
    cfg: &ExperimentConfig,
    explicit: Option<SparseSignal<f64>>,
) -> RunResult<()> {
    let setup = run_setup(cfg, explicit)?;
    let y = measure(&setup.system, &setup.signal, &setup.x0, &setup.plan, cfg.h)
        .map_err(|e| classify(e).stage("measurement"))?;
    let result = reconstruct_once(cfg, &setup, &y).map_err(|e| e.stage("reconstruction"))?;
    ensure_out_dir(&cfg.out)?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    write_json(&cfg.out.join("signal.json"), &setup.signal)?;
    write_measurements(cfg, &y)?;
    write_json(&cfg.out.join("reconstruction.json"), &result)?;
    write_csv(
        &cfg.out.join("recovered.csv"),
        &coefficient_rows(setup.signal.alpha(), &result.alpha_hat),
    )?;
    println!(
        "reconstruct: best of {} realizations: Err = {:.6e}, converged = {}, iterations = {}",
        cfg.n_realizations,
        result.err_rel.unwrap_or(f64::NAN),
        result.converged,
        result.iterations
    );
    Ok(())
}

/// Correlation analysis for one penalty weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyLambda {
    pub lambda: f64,
    pub mu_bar: f64,
    /// States on which the forced system diverged and was skipped.
    pub skipped: usize,
    /// Fraction of usable states whose statistic stays below one.
    pub reconstructable_fraction: f64,
    pub per_state: Vec<Option<f64>>,
}

/// The identifiability report: the μ̄ statistic of one configuration over
/// a set of converter start states, for every listed penalty weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyReport {
    #[serde(rename = "B")]
    pub b: usize,
    /// Nonzero count of the analyzed signal.
    #[serde(rename = "W")]
    pub w: usize,
    #[serde(rename = "T_cs")]
    pub t_cs: f64,
    pub windows: usize,
    pub epsilon: f64,
    pub n_states: usize,
    pub entries: Vec<IdentifyLambda>,
}

/// Run the correlation analysis over `states` for every configured λ.
pub fn identify_report(
    cfg: &ExperimentConfig,
    setup: &RunSetup,
    states: &[Array1<f64>],
) -> RunResult<IdentifyReport> {
    let averages = averaged_mu_multi(
        &setup.system,
        &setup.signal,
        states,
        &setup.plan,
        cfg.h,
        &cfg.lambda,
        cfg.solver.epsilon,
    )
    .map_err(classify)?;
    let entries = cfg
        .lambda
        .iter()
        .zip(averages)
        .map(|(&lambda, avg)| {
            let used: Vec<f64> = avg.per_state.iter().flatten().copied().collect();
            let below_one = used.iter().filter(|&&m| m < 1.0).count();
            IdentifyLambda {
                lambda,
                mu_bar: avg.mu_bar,
                skipped: avg.skipped,
                reconstructable_fraction: below_one as f64 / used.len() as f64,
                per_state: avg.per_state,
            }
        })
        .collect();
    Ok(IdentifyReport {
        b: cfg.b,
        w: setup.signal.sparsity(),
        t_cs: setup.plan.t_cs(),
        windows: setup.plan.windows(),
        epsilon: cfg.solver.epsilon,
        n_states: states.len(),
        entries,
    })
}

pub fn cmd_identify(cfg: &ExperimentConfig) -> RunResult<()> {
    let setup = run_setup(cfg, None)?;
    let states = sample_attractor_initial_states(
        &cfg.lorenz,
        cfg.n_initial_states,
        subseed(cfg.seed, streams::STATES, 0),
    )
    .map_err(classify)?;
    let report = identify_report(cfg, &setup, &states)?;
    ensure_out_dir(&cfg.out)?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    write_json(&cfg.out.join("signal.json"), &setup.signal)?;
    write_json(&cfg.out.join("identify.json"), &report)?;
    let first = &report.entries[0];
    println!(
        "identify: mu_bar = {:.6} at lambda = {} over {} states ({} skipped), fraction below one = {:.2}",
        first.mu_bar, first.lambda, report.n_states, first.skipped, first.reconstructable_fraction
    );
    Ok(())
}

/// One autonomous bandwidth record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthRow {
    pub tau: f64,
    pub run: usize,
    pub seed: u64,
    pub bandwidth_hz: f64,
}

/// Per-τ average of [`BandwidthRow`] records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSummary {
    pub tau: f64,
    pub runs: usize,
    pub mean_hz: f64,
}

/// 99%-energy bandwidth of the autonomous second coordinate for every
/// time scale in the grid, each averaged over seeded attractor starts.
pub fn bandwidth_table(
    cfg: &ExperimentConfig,
) -> RunResult<(Vec<BandwidthRow>, Vec<BandwidthSummary>)> {
    let silent = SparseSignal::<f64>::zero(FourierBasis::new(2).map_err(usage)?);
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (ti, &tau) in cfg.tau_grid.iter().enumerate() {
        let system = LorenzConfig { tau, ..cfg.lorenz };
        let stream = subseed(cfg.seed, streams::BANDWIDTH, ti as u64);
        let mut mean = 0.0;
        for run in 0..cfg.bandwidth_runs {
            let seed = subseed(stream, streams::TRIAL, run as u64);
            let x0 = sample_attractor_initial_states(&system, 1, seed)
                .map_err(classify)?
                .remove(0);
            let traj = integrate(&system, &silent, &x0, 0.0, cfg.bandwidth_duration, cfg.h)
                .map_err(classify)?;
            let bandwidth_hz = estimate_bandwidth(&traj, 1).map_err(classify)?;
            mean += bandwidth_hz;
            rows.push(BandwidthRow { tau, run, seed, bandwidth_hz });
        }
        summaries.push(BandwidthSummary {
            tau,
            runs: cfg.bandwidth_runs,
            mean_hz: mean / cfg.bandwidth_runs as f64,
        });
    }
    Ok((rows, summaries))
}

pub fn cmd_bandwidth(cfg: &ExperimentConfig) -> RunResult<()> {
    let (rows, summaries) = bandwidth_table(cfg)?;
    ensure_out_dir(&cfg.out)?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    write_csv(&cfg.out.join("bandwidth.csv"), &rows)?;
    write_json(&cfg.out.join("bandwidth.json"), &summaries)?;
    for s in &summaries {
        println!(
            "bandwidth: tau = {}: mean {:.2} Hz over {} records",
            s.tau, s.mean_hz, s.runs
        );
    }
    Ok(())
}

/// True and recovered waveform samples on a fixed 1 kHz grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformRow {
    pub t: f64,
    pub s_true: f64,
    pub s_hat: f64,
}

fn waveform_rows(truth: &SparseSignal<f64>, est: &SparseSignal<f64>) -> Vec<WaveformRow> {
    (0..=1000)
        .map(|i| {
            let t = i as f64 / 1000.0;
            WaveformRow { t, s_true: truth.evaluate(t), s_hat: est.evaluate(t) }
        })
        .collect()
}

pub fn cmd_pipeline(cfg: &ExperimentConfig, explicit: Option<SparseSignal<f64>>) -> RunResult<()> {
    let setup = run_setup(cfg, explicit).map_err(|e| e.stage("signal"))?;
    let y = measure(&setup.system, &setup.signal, &setup.x0, &setup.plan, cfg.h)
        .map_err(|e| classify(e).stage("measurement"))?;
    let states = sample_attractor_initial_states(
        &cfg.lorenz,
        cfg.n_initial_states,
        subseed(cfg.seed, streams::STATES, 0),
    )
    .map_err(|e| classify(e).stage("identifiability"))?;
    let report =
        identify_report(cfg, &setup, &states).map_err(|e| e.stage("identifiability"))?;
    let result = reconstruct_once(cfg, &setup, &y).map_err(|e| e.stage("reconstruction"))?;
    let recovered = SparseSignal::new(setup.basis, result.alpha_hat.clone())
        .map_err(|e| classify(e).stage("reconstruction"))?;

    ensure_out_dir(&cfg.out).map_err(|e| e.stage("artifacts"))?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    write_json(&cfg.out.join("signal.json"), &setup.signal)?;
    write_measurements(cfg, &y)?;
    write_json(&cfg.out.join("identify.json"), &report)?;
    write_json(&cfg.out.join("reconstruction.json"), &result)?;
    write_csv(
        &cfg.out.join("recovered.csv"),
        &coefficient_rows(setup.signal.alpha(), &result.alpha_hat),
    )?;
    write_csv(
        &cfg.out.join("waveform.csv"),
        &waveform_rows(&setup.signal, &recovered),
    )?;

    let first = &report.entries[0];
    println!(
        "pipeline: W = {}, M = {}: mu_bar = {:.6} at lambda = {}; Err = {:.6e} over {} realizations (converged = {})",
        setup.signal.sparsity(),
        setup.plan.windows(),
        first.mu_bar,
        first.lambda,
        result.err_rel.unwrap_or(f64::NAN),
        cfg.n_realizations,
        result.converged
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(out: &std::path::Path) -> ExperimentConfig {
        ExperimentConfig {
            b: 12,
            t_cs: vec![0.05],
            w: vec![2],
            lambda: vec![2e-3],
            n_trials: 2,
            n_realizations: 2,
            n_initial_states: 3,
            seed: 5,
            h: 1e-3,
            out: out.to_path_buf(),
            bandwidth_duration: 2.0,
            bandwidth_runs: 2,
            tau_grid: vec![15.0],
            solver: crate::config::SolverKnobs {
                max_inner: 3,
                max_outer: 3,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn setup_is_deterministic_in_the_seed() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let a = run_setup(&cfg, None).unwrap();
        let b = run_setup(&cfg, None).unwrap();
        assert_eq!(a.signal.alpha(), b.signal.alpha());
        assert_eq!(a.x0, b.x0);

        let other = ExperimentConfig { seed: 6, ..cfg };
        let c = run_setup(&other, None).unwrap();
        assert_ne!(a.signal.alpha(), c.signal.alpha());
    }

    #[test]
    fn explicit_signal_must_match_the_dictionary() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let wrong = SparseSignal::zero(FourierBasis::new(8).unwrap());
        let err = match run_setup(&cfg, Some(wrong)) {
            Ok(_) => panic!("mismatched dictionary accepted"),
            Err(e) => e,
        };
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn pipeline_writes_the_full_artifact_set() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        cmd_pipeline(&cfg, None).unwrap();
        for name in [
            "config.json",
            "signal.json",
            "measurements.json",
            "measurements.csv",
            "identify.json",
            "reconstruction.json",
            "recovered.csv",
            "waveform.csv",
        ] {
            assert!(dir.path().join(name).exists(), "missing artifact {name}");
        }
        let truth: SparseSignal<f64> =
            crate::artifacts::read_json(&dir.path().join("signal.json")).unwrap();
        let rows: Vec<WaveformRow> =
            crate::artifacts::read_csv(&dir.path().join("waveform.csv")).unwrap();
        assert_eq!(rows.len(), 1001);
        assert_eq!(rows[0].t, 0.0);
        assert_eq!(rows[1000].t, 1.0);
        let mid = &rows[500];
        assert_eq!(mid.s_true, truth.evaluate(mid.t));
    }

    #[test]
    fn bandwidth_rows_cover_the_grid_and_average_consistently() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config(dir.path());
        cfg.tau_grid = vec![10.0, 15.0];
        let (rows, summaries) = bandwidth_table(&cfg).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(summaries.len(), 2);
        for s in &summaries {
            let mean = rows
                .iter()
                .filter(|r| r.tau == s.tau)
                .map(|r| r.bandwidth_hz)
                .sum::<f64>()
                / s.runs as f64;
            assert!((mean - s.mean_hz).abs() < 1e-12);
        }
    }
}
