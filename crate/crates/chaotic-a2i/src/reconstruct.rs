//! Sparse signal recovery from dump sequences.
//!
//! The estimator solves
//!
//! ```text
//! min_alpha  sum_m (y_m - yhat_m(alpha, x0))^2 + lambda * ||alpha||_0
//! ```
//!
//! by iteratively reweighted nonlinear least squares on a multiple-shooting
//! transcription. The horizon is split into segments, each with its own
//! start state; continuity enters as join residuals. An outer loop refreshes
//! the reweighting (the smoothed stand-in for the counting norm), an inner
//! loop takes damped Gauss-Newton steps. Each step condenses the segment
//! start states out of the linearized system with the recursion
//!
//! ```text
//! P_0 = 0,  p_0 = 0,
//! P_{l+1} = A_l + B_l P_l,   p_{l+1} = c_l + B_l p_l,
//! ```
//!
//! where `A_l`, `B_l` are the end-state Jacobians of segment `l` with
//! respect to the coefficients and its own start state, and `c_l` its join
//! residual; node corrections then follow the coefficient step as
//! `dx_l = P_l da + p_l`, which enforces linearized continuity exactly and
//! leaves a dense least-squares problem in the coefficients alone.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ChaoticSystem, DEFAULT_BLOWUP};
use crate::error::{Error, Result};
use crate::linalg::{lstsq_qr, solve_spd};
use crate::measurement::{MeasurementPlan, MeasurementVector};
use crate::num::Scalar;
use crate::rng::Prng;
use crate::signals::{relative_error, FourierBasis};
use crate::variational::{propagate_plain_windows, propagate_var_windows, SegmentOutput};

/// Substream tag under which [`multi_start_reconstruct`] derives its
/// per-realization randomness from the configured seed.
pub const MULTI_START_STREAM: u64 = 0x4d53_5f49_524e_4c53;

/// Knobs of the solver. `Default` reproduces the reference setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsIrnlsConfig<T: Scalar> {
    /// Number of shooting segments; `None` picks one segment per five
    /// windows, clamped to `[1, M]`.
    pub subintervals: Option<usize>,
    /// Sparsity weight in the objective.
    pub lambda: T,
    /// Smoothing floor of the reweighting.
    pub epsilon: T,
    /// Gauss-Newton steps per reweighting.
    pub max_inner: usize,
    /// Relative-change tolerance, used by both loops.
    pub err: T,
    /// Reweighting rounds.
    pub max_outer: usize,
    /// Step-shrink factor in (0, 1]; exactly one disables the merit check
    /// and always takes the full step.
    pub damping: T,
    /// Largest tolerated join mismatch for a run to count as converged.
    pub join_tol: T,
    /// Stop multi-start early once the best score drops to this level
    /// (relative error when the truth is supplied, smoothed objective
    /// otherwise). `None` always runs every realization.
    pub early_stop: Option<T>,
    /// Seed for multi-start draws.
    pub seed: u64,
}

impl<T: Scalar> Default for MsIrnlsConfig<T> {
    fn default() -> Self {
        MsIrnlsConfig {
            subintervals: None,
            lambda: T::lit(2e-3),
            epsilon: T::lit(1e-3),
            max_inner: 50,
            err: T::lit(1e-3),
            max_outer: 20,
            damping: T::lit(0.5),
            join_tol: T::lit(1e-6),
            early_stop: None,
            seed: 0,
        }
    }
}

/// Coefficients plus per-segment start states; the first node is the known
/// initial state and is never adjusted.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingState<T: Scalar> {
    pub alpha: Array1<T>,
    pub nodes: Vec<Array1<T>>,
}

/// What one solver run (or the best of several) produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult<T: Scalar> {
    /// Recovered coefficients.
    pub alpha_hat: Array1<T>,
    /// Squared relative error against the supplied truth, when known.
    pub err_rel: Option<T>,
    /// Exact objective (data term plus `lambda` times the nonzero count)
    /// at the start and after every accepted step.
    pub cost_trace: Vec<T>,
    /// Whether the reweighting reached its fixed point with joined
    /// segments.
    pub converged: bool,
    /// Accepted Gauss-Newton steps.
    pub iterations: usize,
    /// Final smoothed objective: data term, join term, and the reweighted
    /// penalty evaluated at the returned coefficients.
    pub smoothed_cost: T,
    /// Largest join residual entry at the returned point.
    pub max_join_mismatch: T,
    /// Index of the winning realization (0 for single runs).
    pub realization: usize,
}

/// Exact objective: squared data misfit of a single shoot from `x0` plus
/// `lambda` times the number of nonzero coefficients.
#[allow(clippy::too_many_arguments)]
pub fn cost<T: Scalar, S: ChaoticSystem<T>>(
    y: &MeasurementVector<T>,
    system: &S,
    basis: FourierBasis,
    alpha: &Array1<T>,
    x0: &Array1<T>,
    plan: &MeasurementPlan<T>,
    lambda: T,
    h: T,
) -> Result<T> {
    check_measurements(y, plan)?;
    let yhat = crate::measurement::predict_measurements(system, basis, alpha, x0, plan, h)?;
    let data: T = y
        .y
        .iter()
        .zip(yhat.y.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let nnz = alpha.iter().filter(|v| **v != T::zero()).count();
    Ok(data + lambda * T::of_usize(nnz))
}

/// The reweighted stand-in for `lambda * ||alpha||_0`, with the weights
/// evaluated at `alpha` itself:
/// `lambda * sum_i alpha_i^2 / ((|alpha_i| + eps) sqrt(alpha_i^2 + eps))`.
/// It approaches `lambda` times the nonzero count as `eps` shrinks.
pub fn smoothed_penalty<T: Scalar>(alpha: &Array1<T>, lambda: T, epsilon: T) -> T {
    let sum: T = alpha
        .iter()
        .map(|&a| a * a / ((a.abs() + epsilon) * (a * a + epsilon).sqrt()))
        .sum();
    lambda * sum
}

fn check_measurements<T: Scalar>(y: &MeasurementVector<T>, plan: &MeasurementPlan<T>) -> Result<()> {
    if y.len() != plan.windows() {
        return Err(Error::PlanMismatch {
            reason: format!(
                "measurement vector has {} entries but the plan has {} windows",
                y.len(),
                plan.windows()
            ),
        });
    }
    Ok(())
}

fn check_config<T: Scalar>(cfg: &MsIrnlsConfig<T>, m: usize) -> Result<usize> {
    if !(cfg.lambda >= T::zero()) {
        return Err(Error::invalid("lambda", "must be non-negative"));
    }
    if !(cfg.epsilon > T::zero()) {
        return Err(Error::invalid("epsilon", "smoothing must be positive"));
    }
    if !(cfg.err > T::zero()) {
        return Err(Error::invalid("err", "tolerance must be positive"));
    }
    if !(cfg.damping > T::zero() && cfg.damping <= T::one()) {
        return Err(Error::invalid("damping", "shrink factor must lie in (0, 1]"));
    }
    if cfg.max_inner == 0 || cfg.max_outer == 0 {
        return Err(Error::invalid("max_inner/max_outer", "iteration caps must be positive"));
    }
    if !(cfg.join_tol > T::zero()) {
        return Err(Error::invalid("join_tol", "tolerance must be positive"));
    }
    let l = match cfg.subintervals {
        Some(l) => {
            if l == 0 || l > m {
                return Err(Error::invalid(
                    "subintervals",
                    "segment count must lie between 1 and the window count",
                ));
            }
            l
        }
        None => (m / 5).clamp(1, m),
    };
    Ok(l)
}

/// Contiguous window ranges of the shooting segments: the first `M mod L`
/// segments get one extra window.
fn split_windows(m: usize, l: usize) -> Vec<(usize, usize)> {
    let base = m / l;
    let extra = m % l;
    let mut out = Vec::with_capacity(l);
    let mut start = 0;
    for i in 0..l {
        let len = base + usize::from(i < extra);
        out.push((start, len));
        start += len;
    }
    out
}

struct PlainPass<T: Scalar> {
    data_sq: T,
    joins_sq: T,
    max_join: T,
}

#[allow(clippy::too_many_arguments)]
fn plain_pass<T: Scalar, S: ChaoticSystem<T>>(
    system: &S,
    basis: FourierBasis,
    state: &ShootingState<T>,
    y: &Array1<T>,
    segments: &[(usize, usize)],
    spw: usize,
    plan: &MeasurementPlan<T>,
    h: T,
) -> Result<PlainPass<T>> {
    let mut data_sq = T::zero();
    let mut joins_sq = T::zero();
    let mut max_join = T::zero();
    for (l, &(w0, wins)) in segments.iter().enumerate() {
        let (meas, end) = propagate_plain_windows(
            system,
            basis,
            state.alpha.as_slice().expect("owned coefficients"),
            state.nodes[l].as_slice().expect("owned node"),
            plan.observe(),
            w0 * spw,
            wins,
            spw,
            h,
            T::lit(DEFAULT_BLOWUP),
        )?;
        for (k, &v) in meas.iter().enumerate() {
            let r = y[w0 + k] - v;
            data_sq += r * r;
        }
        if l + 1 < segments.len() {
            for (&e, &n) in end.iter().zip(state.nodes[l + 1].iter()) {
                let c = e - n;
                joins_sq += c * c;
                max_join = max_join.max(c.abs());
            }
        }
    }
    Ok(PlainPass { data_sq, joins_sq, max_join })
}

/// One run of the solver from a given starting point.
///
/// `alpha_init` seeds the coefficients. `node_init`, when present, supplies
/// the start states of segments `1..L` (the first segment always starts at
/// the known `x0`); otherwise the nodes come from a forward simulation at
/// `alpha_init`, which starts the run with exactly joined segments.
#[allow(clippy::too_many_arguments)]
pub fn ms_irnls<T: Scalar, S: ChaoticSystem<T>>(
    y: &MeasurementVector<T>,
    system: &S,
    basis: FourierBasis,
    x0: &Array1<T>,
    plan: &MeasurementPlan<T>,
    h: T,
    cfg: &MsIrnlsConfig<T>,
    alpha_init: &Array1<T>,
    node_init: Option<&[Array1<T>]>,
) -> Result<ReconstructionResult<T>> {
    check_measurements(y, plan)?;
    let m = plan.windows();
    let b = basis.size();
    let d = system.dim();
    let n_seg = check_config(cfg, m)?;
    if alpha_init.len() != b {
        return Err(Error::DimensionMismatch {
            what: "initial coefficients",
            expected: b,
            actual: alpha_init.len(),
        });
    }
    if x0.len() != d {
        return Err(Error::DimensionMismatch { what: "initial state", expected: d, actual: x0.len() });
    }
    let spw = plan.steps_per_window(h)?;
    let segments = split_windows(m, n_seg);

    // Starting point: given nodes, or a forward shoot at the initial
    // coefficients so all joins start at zero.
    let mut state = ShootingState { alpha: alpha_init.to_owned(), nodes: Vec::with_capacity(n_seg) };
    state.nodes.push(x0.to_owned());
    match node_init {
        Some(nodes) => {
            if nodes.len() != n_seg - 1 {
                return Err(Error::DimensionMismatch {
                    what: "segment start states",
                    expected: n_seg - 1,
                    actual: nodes.len(),
                });
            }
            for n in nodes {
                if n.len() != d {
                    return Err(Error::DimensionMismatch {
                        what: "segment start state",
                        expected: d,
                        actual: n.len(),
                    });
                }
                state.nodes.push(n.clone());
            }
        }
        None => {
            let mut cur = x0.to_owned();
            for &(w0, wins) in &segments[..n_seg - 1] {
                let (_, end) = propagate_plain_windows(
                    system,
                    basis,
                    state.alpha.as_slice().expect("owned coefficients"),
                    cur.as_slice().expect("owned node"),
                    plan.observe(),
                    w0 * spw,
                    wins,
                    spw,
                    h,
                    T::lit(DEFAULT_BLOWUP),
                )?;
                cur = Array1::from_vec(end);
                state.nodes.push(cur.clone());
            }
        }
    }

    let strict = cfg.damping == T::one();
    let tiny = T::lit(1e-30);
    let mut cost_trace = Vec::new();
    let mut iterations = 0usize;
    let mut converged_outer = false;

    {
        let pass = plain_pass(system, basis, &state, &y.y, &segments, spw, plan, h)?;
        cost_trace.push(pass.data_sq + cfg.lambda * nnz_cost(&state.alpha));
    }

    'outer: for _ in 0..cfg.max_outer {
        let alpha_outer = state.alpha.clone();
        // Outer weights are frozen for this reweighting round.
        let omega_outer: Array1<T> =
            alpha_outer.mapv(|a| T::one() / (a.abs() + cfg.epsilon));

        for _ in 0..cfg.max_inner {
            // Inner weights track the current iterate; together they form
            // the diagonal of the penalty block.
            let dvec: Array1<T> = state
                .alpha
                .iter()
                .zip(omega_outer.iter())
                .map(|(&a, &wo)| (wo / (a * a + cfg.epsilon).sqrt()).sqrt())
                .collect();

            // Variational pass per segment; condense node unknowns.
            let mut jt = Array2::zeros((m + b, b));
            let mut rhs = Array1::zeros(m + b);
            let mut p_mat = Array2::<T>::zeros((d, b));
            let mut p_vec = Array1::<T>::zeros(d);
            let mut data_sq = T::zero();
            let mut joins_sq = T::zero();
            let mut cond_p: Vec<(Array2<T>, Array1<T>)> = Vec::with_capacity(n_seg);
            for (l, &(w0, wins)) in segments.iter().enumerate() {
                let seg: SegmentOutput<T> = propagate_var_windows(
                    system,
                    basis,
                    state.alpha.as_slice().expect("owned coefficients"),
                    state.nodes[l].as_slice().expect("owned node"),
                    plan.observe(),
                    w0 * spw,
                    wins,
                    spw,
                    h,
                    T::lit(DEFAULT_BLOWUP),
                )?;
                cond_p.push((p_mat.clone(), p_vec.clone()));
                // Condensed measurement rows: J = dY/da + dY/dx0 * P_l,
                // and the residual absorbs dY/dx0 * p_l.
                let shift = seg.meas_dx0.dot(&p_vec);
                let jrows = &seg.meas_dalpha + &seg.meas_dx0.dot(&p_mat);
                for k in 0..wins {
                    let r = y.y[w0 + k] - seg.meas[k] - shift[k];
                    rhs[w0 + k] = r;
                    let raw = y.y[w0 + k] - seg.meas[k];
                    data_sq += raw * raw;
                    jt.row_mut(w0 + k).assign(&jrows.row(k));
                }
                if l + 1 < n_seg {
                    let join: Array1<T> =
                        Array1::from_iter(seg.end_x.iter().zip(state.nodes[l + 1].iter()).map(|(&e, &n)| e - n));
                    joins_sq += join.dot(&join);
                    // Advance the condensing recursion to the next node.
                    p_mat = &seg.end_dalpha + &seg.end_dx0.dot(&p_mat);
                    p_vec = &join + &seg.end_dx0.dot(&p_vec);
                }
            }

            let penalty = |alpha: &Array1<T>| -> T {
                let s: T = alpha
                    .iter()
                    .zip(dvec.iter())
                    .map(|(&a, &di)| di * di * a * a)
                    .sum();
                cfg.lambda * s
            };
            let merit_here = data_sq + joins_sq + penalty(&state.alpha);

            // Penalty rows of the stacked system.
            let sqrt_lambda = cfg.lambda.sqrt();
            for i in 0..b {
                jt[[m + i, i]] = sqrt_lambda * dvec[i];
                rhs[m + i] = -sqrt_lambda * dvec[i] * state.alpha[i];
            }

            let delta_alpha = {
                let mut a = jt.clone();
                let mut r = rhs.clone();
                match lstsq_qr(&mut a, &mut r) {
                    Ok(sol) => sol,
                    Err(Error::SingularSystem) => {
                        // Normal equations with a trace-scaled ridge.
                        let mut n = jt.t().dot(&jt);
                        let mut tr = T::zero();
                        for i in 0..b {
                            tr += n[[i, i]];
                        }
                        let nu = T::lit(1e-10) * tr;
                        for i in 0..b {
                            n[[i, i]] += nu;
                        }
                        let g = jt.t().dot(&rhs);
                        solve_spd(&mut n, &g)?
                    }
                    Err(e) => return Err(e),
                }
            };

            // Node corrections follow the coefficient step.
            let deltas: Vec<Array1<T>> = cond_p
                .iter()
                .skip(1)
                .map(|(pm, pv)| pm.dot(&delta_alpha) + pv)
                .collect();

            // Damped update with a simple backtracking merit check; the
            // weights stay frozen along the search direction.
            let mut gamma = T::one();
            let mut accepted: Option<(ShootingState<T>, PlainPass<T>)> = None;
            for _ in 0..20 {
                let mut trial = state.clone();
                trial
                    .alpha
                    .iter_mut()
                    .zip(delta_alpha.iter())
                    .for_each(|(a, &da)| *a += gamma * da);
                for (node, delta) in trial.nodes.iter_mut().skip(1).zip(deltas.iter()) {
                    node.iter_mut().zip(delta.iter()).for_each(|(x, &dx)| *x += gamma * dx);
                }
                match plain_pass(system, basis, &trial, &y.y, &segments, spw, plan, h) {
                    Ok(pass) => {
                        let merit_trial = pass.data_sq + pass.joins_sq + penalty(&trial.alpha);
                        if strict || merit_trial <= merit_here {
                            accepted = Some((trial, pass));
                            break;
                        }
                    }
                    Err(Error::Diverged { .. }) if !strict => {}
                    Err(e) => return Err(e),
                }
                gamma *= cfg.damping;
            }
            let Some((next, pass)) = accepted else {
                // Stalled: no acceptable step at these weights.
                break;
            };
            let step_norm = delta_alpha.dot(&delta_alpha).sqrt() * gamma;
            let base_norm = state.alpha.dot(&state.alpha).sqrt().max(tiny);
            state = next;
            iterations += 1;
            cost_trace.push(pass.data_sq + cfg.lambda * nnz_cost(&state.alpha));
            if step_norm / base_norm <= cfg.err {
                break;
            }
        }

        // Fixed point of the reweighting?
        let diff: T = state
            .alpha
            .iter()
            .zip(alpha_outer.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        let base = alpha_outer.dot(&alpha_outer).max(tiny * tiny);
        if (diff / base).sqrt() <= cfg.err {
            converged_outer = true;
            break 'outer;
        }
    }

    let final_pass = plain_pass(system, basis, &state, &y.y, &segments, spw, plan, h)?;
    let smoothed = final_pass.data_sq
        + final_pass.joins_sq
        + smoothed_penalty(&state.alpha, cfg.lambda, cfg.epsilon);
    let converged = converged_outer && final_pass.max_join <= cfg.join_tol;
    Ok(ReconstructionResult {
        alpha_hat: state.alpha,
        err_rel: None,
        cost_trace,
        converged,
        iterations,
        smoothed_cost: smoothed,
        max_join_mismatch: final_pass.max_join,
        realization: 0,
    })
}

fn nnz_cost<T: Scalar>(alpha: &Array1<T>) -> T {
    T::of_usize(alpha.iter().filter(|v| **v != T::zero()).count())
}

/// Run the solver from several random starting points and keep the best.
///
/// Realization `r` draws its coefficients uniformly from `[-1, 1]^B` and
/// its segment start states from `node_pool` (attractor samples), all from
/// substream `r` of the configured seed — results are independent of
/// whether earlier realizations were skipped. Runs are ranked by squared
/// relative error against `truth` when given, otherwise by the smoothed
/// objective; ties break toward the earlier realization. Individual
/// failures are tolerated unless every realization fails.
#[allow(clippy::too_many_arguments)]
pub fn multi_start_reconstruct<T: Scalar, S: ChaoticSystem<T>>(
    y: &MeasurementVector<T>,
    system: &S,
    basis: FourierBasis,
    x0: &Array1<T>,
    plan: &MeasurementPlan<T>,
    h: T,
    cfg: &MsIrnlsConfig<T>,
    n_realizations: usize,
    node_pool: &[Array1<T>],
    truth: Option<&Array1<T>>,
) -> Result<ReconstructionResult<T>> {
    if n_realizations == 0 {
        return Err(Error::invalid("n_realizations", "need at least one realization"));
    }
    let n_seg = check_config(cfg, plan.windows())?;
    if n_seg > 1 && node_pool.is_empty() {
        return Err(Error::invalid(
            "node_pool",
            "segmented runs need candidate start states to draw from",
        ));
    }
    let b = basis.size();
    let mut best: Option<(T, ReconstructionResult<T>)> = None;
    let mut first_failure: Option<String> = None;
    let mut failures = 0usize;
    for r in 0..n_realizations {
        let mut rng = Prng::substream(cfg.seed, MULTI_START_STREAM, r as u64);
        let alpha_init: Array1<T> =
            Array1::from_iter((0..b).map(|_| rng.uniform_in(T::lit(-1.0), T::lit(1.0))));
        let nodes: Vec<Array1<T>> = (0..n_seg - 1)
            .map(|_| node_pool[rng.pick(node_pool.len())].clone())
            .collect();
        let node_init = if n_seg > 1 { Some(nodes.as_slice()) } else { None };
        match ms_irnls(y, system, basis, x0, plan, h, cfg, &alpha_init, node_init) {
            Ok(mut result) => {
                result.realization = r;
                let score = match truth {
                    Some(alpha_true) => {
                        let e = relative_error(&result.alpha_hat, alpha_true)?;
                        result.err_rel = Some(e);
                        e
                    }
                    None => result.smoothed_cost,
                };
                let better = match &best {
                    Some((s, _)) => score < *s,
                    None => true,
                };
                if better {
                    best = Some((score, result));
                }
                if let Some(stop) = cfg.early_stop {
                    if best.as_ref().map(|(s, _)| *s <= stop).unwrap_or(false) {
                        break;
                    }
                }
            }
            Err(e) => {
                failures += 1;
                if first_failure.is_none() {
                    first_failure = Some(e.to_string());
                }
            }
        }
    }
    match best {
        Some((_, result)) => Ok(result),
        None => Err(Error::AllRealizationsFailed {
            count: failures,
            first: first_failure.unwrap_or_else(|| "no realizations attempted".into()),
        }),
    }
}
