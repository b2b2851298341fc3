//! Local identifiability analysis of the converter.
//!
//! The sensitivity matrix S holds the derivatives of the window dumps with
//! respect to the signal coefficients. Reweighted sparse recovery sees that
//! matrix through two modifications: a diagonal weight block
//! `w_i = 1 / (alpha_i^2 + eps)` appended as `sqrt(lambda W)` rows, and
//! Pearson correlation of the stacked columns. A coefficient vector is
//! locally reconstructable when the largest off-diagonal correlation
//! magnitude stays strictly below one; that statistic averaged over
//! attractor states summarizes a converter configuration.
//!
//! Both correlation paths (stack-then-correlate and the closed form that
//! never builds the stacked matrix) share one kernel, so they agree to
//! roundoff by construction.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ChaoticSystem, DEFAULT_BLOWUP};
use crate::error::{Error, Result};
use crate::measurement::{predict_measurements, MeasurementPlan};
use crate::num::Scalar;
use crate::signals::SparseSignal;
use crate::variational::propagate_var_windows;

/// Diagonal reweighting block `w_i = 1 / (alpha_i^2 + eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix<T: Scalar> {
    diag: Array1<T>,
}

impl<T: Scalar> WeightMatrix<T> {
    pub fn from_alpha(alpha: &Array1<T>, epsilon: T) -> Result<Self> {
        if !(epsilon > T::zero()) {
            return Err(Error::invalid("epsilon", "smoothing must be positive"));
        }
        let diag = alpha.mapv(|a| T::one() / (a * a + epsilon));
        Ok(WeightMatrix { diag })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &Array1<T> {
        &self.diag
    }
}

/// Derivatives of the window dumps with respect to the coefficients, an
/// `M x B` matrix computed by forward variational integration.
pub fn sensitivity_matrix<T: Scalar, S: ChaoticSystem<T>>(
    system: &S,
    signal: &SparseSignal<T>,
    x0: &Array1<T>,
    plan: &MeasurementPlan<T>,
    h: T,
) -> Result<Array2<T>> {
    if x0.len() != system.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: system.dim(),
            actual: x0.len(),
        });
    }
    let spw = plan.steps_per_window(h)?;
    let x0v = x0.to_vec();
    let seg = propagate_var_windows(
        system,
        signal.basis(),
        signal.alpha().as_slice().expect("owned coefficients"),
        &x0v,
        plan.observe(),
        0,
        plan.windows(),
        spw,
        h,
        T::lit(DEFAULT_BLOWUP),
    )?;
    Ok(seg.meas_dalpha)
}

/// Central-difference estimate of [`sensitivity_matrix`], for
/// cross-checking the variational path against plain measurement.
pub fn fd_sensitivity_matrix<T: Scalar, S: ChaoticSystem<T>>(
    system: &S,
    signal: &SparseSignal<T>,
    x0: &Array1<T>,
    plan: &MeasurementPlan<T>,
    h: T,
    delta: T,
) -> Result<Array2<T>> {
    if !(delta > T::zero()) {
        return Err(Error::invalid("delta", "step must be positive"));
    }
    let b = signal.basis().size();
    let mut s = Array2::zeros((plan.windows(), b));
    let two = T::lit(2.0);
    for k in 0..b {
        let mut up = signal.alpha().to_owned();
        let mut dn = up.clone();
        up[k] += delta;
        dn[k] -= delta;
        let yp = predict_measurements(system, signal.basis(), &up, x0, plan, h)?;
        let ym = predict_measurements(system, signal.basis(), &dn, x0, plan, h)?;
        for m in 0..plan.windows() {
            s[[m, k]] = (yp.y[m] - ym.y[m]) / (two * delta);
        }
    }
    Ok(s)
}

/// Shared Pearson kernel on precomputed column statistics.
///
/// `gram` is the uncentered Gram matrix of the columns, `colsum` their
/// sums, `n_rows` the row count. Off-diagonal entries within `8 eps` of
/// unit magnitude are snapped to exactly +/-1 so that duplicated columns
/// test as perfectly correlated; everything is clamped into [-1, 1] and
/// the diagonal is exactly one.
fn correlation_core<T: Scalar>(
    gram: &Array2<T>,
    colsum: &Array1<T>,
    n_rows: usize,
) -> Result<Array2<T>> {
    let b = gram.nrows();
    let n = T::of_usize(n_rows);
    let tol = T::lit(1e-14);
    let mut mean = Array1::zeros(b);
    let mut std = Array1::zeros(b);
    for i in 0..b {
        mean[i] = colsum[i] / n;
        let var = gram[[i, i]] - n * mean[i] * mean[i];
        if var <= tol * tol * gram[[i, i]] {
            return Err(Error::DegenerateColumn { index: i });
        }
        std[i] = var.sqrt();
    }
    let snap = T::lit(8.0) * T::epsilon();
    let one = T::one();
    let mut g = Array2::zeros((b, b));
    for i in 0..b {
        g[[i, i]] = one;
        for j in i + 1..b {
            let mut v = (gram[[i, j]] - n * mean[i] * mean[j]) / (std[i] * std[j]);
            if (v.abs() - one).abs() <= snap {
                v = v.signum();
            }
            v = v.max(-one).min(one);
            g[[i, j]] = v;
            g[[j, i]] = v;
        }
    }
    Ok(g)
}

/// Pearson correlation of the columns of `s`. Fails with
/// [`Error::DegenerateColumn`] if a column has (numerically) no variance.
pub fn correlation_matrix<T: Scalar>(s: &Array2<T>) -> Result<Array2<T>> {
    if s.nrows() < 2 {
        return Err(Error::invalid("s", "need at least two rows to correlate"));
    }
    let gram = s.t().dot(s);
    let colsum = s.sum_axis(Axis(0));
    correlation_core(&gram, &colsum, s.nrows())
}

/// Largest off-diagonal magnitude of a square correlation matrix.
pub fn mu_statistic<T: Scalar>(g: &Array2<T>) -> Result<T> {
    if g.nrows() != g.ncols() {
        return Err(Error::DimensionMismatch {
            what: "correlation matrix",
            expected: g.nrows(),
            actual: g.ncols(),
        });
    }
    if g.ncols() < 2 {
        return Err(Error::TooFewColumns { got: g.ncols() });
    }
    let mut mu = T::zero();
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            if i != j {
                mu = mu.max(g[[i, j]].abs());
            }
        }
    }
    Ok(mu)
}

/// Stack `sqrt(lambda) W^(1/2)` under `s`: the `(M + B) x B` matrix whose
/// correlation structure governs reweighted recovery.
pub fn regularized_sensitivity<T: Scalar>(
    s: &Array2<T>,
    weights: &WeightMatrix<T>,
    lambda: T,
) -> Result<Array2<T>> {
    check_lambda(s, weights, lambda)?;
    let (m, b) = s.dim();
    let mut out = Array2::zeros((m + b, b));
    out.slice_mut(ndarray::s![..m, ..]).assign(s);
    for i in 0..b {
        out[[m + i, i]] = (lambda * weights.diag()[i]).sqrt();
    }
    Ok(out)
}

/// Correlation of the stacked matrix, computed without forming it: the
/// weight block only shifts the Gram diagonal by `lambda w_i` and each
/// column sum by `sqrt(lambda w_i)`.
pub fn regularized_correlation<T: Scalar>(
    s: &Array2<T>,
    weights: &WeightMatrix<T>,
    lambda: T,
) -> Result<Array2<T>> {
    check_lambda(s, weights, lambda)?;
    let (m, b) = s.dim();
    let mut gram = s.t().dot(s);
    let mut colsum = s.sum_axis(Axis(0));
    for i in 0..b {
        gram[[i, i]] += lambda * weights.diag()[i];
        colsum[i] += (lambda * weights.diag()[i]).sqrt();
    }
    correlation_core(&gram, &colsum, m + b)
}

fn check_lambda<T: Scalar>(
    s: &Array2<T>,
    weights: &WeightMatrix<T>,
    lambda: T,
) -> Result<()> {
    if weights.len() != s.ncols() {
        return Err(Error::DimensionMismatch {
            what: "weight diagonal",
            expected: s.ncols(),
            actual: weights.len(),
        });
    }
    if lambda < T::zero() || !lambda.is_finite() {
        return Err(Error::invalid("lambda", "must be finite and non-negative"));
    }
    Ok(())
}

/// Everything the correlation analysis produces for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport<T: Scalar> {
    /// Plain sensitivity matrix, `M x B`.
    pub s: Array2<T>,
    /// Stacked matrix `[S; sqrt(lambda) W^(1/2)]`.
    pub s_lambda: Array2<T>,
    /// Correlation of the stacked columns.
    pub g_lambda: Array2<T>,
    /// Largest off-diagonal correlation magnitude.
    pub mu: T,
    pub lambda: T,
    pub epsilon: T,
}

/// Run the variational pass and the full correlation analysis once.
pub fn sensitivity_report<T: Scalar, S: ChaoticSystem<T>>(
    system: &S,
    signal: &SparseSignal<T>,
    x0: &Array1<T>,
    plan: &MeasurementPlan<T>,
    h: T,
    lambda: T,
    epsilon: T,
) -> Result<SensitivityReport<T>> {
    let s = sensitivity_matrix(system, signal, x0, plan, h)?;
    let weights = WeightMatrix::from_alpha(signal.alpha(), epsilon)?;
    let s_lambda = regularized_sensitivity(&s, &weights, lambda)?;
    let g_lambda = regularized_correlation(&s, &weights, lambda)?;
    let mu = mu_statistic(&g_lambda)?;
    Ok(SensitivityReport { s, s_lambda, g_lambda, mu, lambda, epsilon })
}

/// Outcome of the local reconstructability check: the configuration passes
/// iff the correlation statistic stays strictly below one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrcDecision<T: Scalar> {
    pub reconstructable: bool,
    pub mu: T,
}

pub fn crc_check<T: Scalar, S: ChaoticSystem<T>>(
    system: &S,
    signal: &SparseSignal<T>,
    x0: &Array1<T>,
    plan: &MeasurementPlan<T>,
    h: T,
    lambda: T,
    epsilon: T,
) -> Result<CrcDecision<T>> {
    let report = sensitivity_report(system, signal, x0, plan, h, lambda, epsilon)?;
    Ok(CrcDecision { reconstructable: report.mu < T::one(), mu: report.mu })
}

/// Correlation statistic averaged over a set of initial states. States on
/// which the forced system diverges are skipped (recorded as `None`);
/// every other failure aborts the average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedMu<T: Scalar> {
    pub mu_bar: T,
    pub per_state: Vec<Option<T>>,
    pub skipped: usize,
}

pub fn averaged_mu<T: Scalar, S: ChaoticSystem<T>>(
    system: &S,
    signal: &SparseSignal<T>,
    states: &[Array1<T>],
    plan: &MeasurementPlan<T>,
    h: T,
    lambda: T,
    epsilon: T,
) -> Result<AveragedMu<T>> {
    let mut all = averaged_mu_multi(system, signal, states, plan, h, &[lambda], epsilon)?;
    Ok(all.pop().expect("one lambda in, one average out"))
}

/// [`averaged_mu`] for several regularization strengths at once; the
/// expensive variational pass per state is shared across all of them.
pub fn averaged_mu_multi<T: Scalar, S: ChaoticSystem<T>>(
    system: &S,
    signal: &SparseSignal<T>,
    states: &[Array1<T>],
    plan: &MeasurementPlan<T>,
    h: T,
    lambdas: &[T],
    epsilon: T,
) -> Result<Vec<AveragedMu<T>>> {
    if states.is_empty() {
        return Err(Error::NoUsableStates { reason: "no initial states supplied".into() });
    }
    if lambdas.is_empty() {
        return Err(Error::invalid("lambdas", "need at least one value"));
    }
    let weights = WeightMatrix::from_alpha(signal.alpha(), epsilon)?;
    let mut per_state: Vec<Vec<Option<T>>> = vec![Vec::with_capacity(states.len()); lambdas.len()];
    let mut skipped = 0usize;
    for x0 in states {
        match sensitivity_matrix(system, signal, x0, plan, h) {
            Ok(s) => {
                for (k, &lambda) in lambdas.iter().enumerate() {
                    let g = regularized_correlation(&s, &weights, lambda)?;
                    per_state[k].push(Some(mu_statistic(&g)?));
                }
            }
            Err(Error::Diverged { .. }) => {
                skipped += 1;
                for slot in per_state.iter_mut() {
                    slot.push(None);
                }
            }
            Err(e) => return Err(e),
        }
    }
    per_state
        .into_iter()
        .map(|mus| {
            let used: Vec<T> = mus.iter().flatten().copied().collect();
            if used.is_empty() {
                return Err(Error::NoUsableStates {
                    reason: "the forced system diverged from every supplied state".into(),
                });
            }
            let sum: T = used.iter().copied().sum();
            Ok(AveragedMu { mu_bar: sum / T::of_usize(used.len()), per_state: mus, skipped })
        })
        .collect()
}

/// Largest off-diagonal magnitude of the uncentered normalized Gram — the
/// classic dictionary coherence of the columns of `s`.
pub fn coherence<T: Scalar>(s: &Array2<T>) -> Result<T> {
    if s.ncols() < 2 {
        return Err(Error::TooFewColumns { got: s.ncols() });
    }
    let gram = s.t().dot(s);
    let mut norms = Array1::zeros(s.ncols());
    for i in 0..s.ncols() {
        let n2: T = gram[[i, i]];
        if !(n2 > T::zero()) {
            return Err(Error::ZeroColumn { index: i });
        }
        norms[i] = n2.sqrt();
    }
    let mut best = T::zero();
    for i in 0..s.ncols() {
        for j in i + 1..s.ncols() {
            let v = (gram[[i, j]] / (norms[i] * norms[j])).abs();
            best = best.max(v.min(T::one()));
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{sample_attractor_initial_states, LorenzConfig};
    use crate::measurement::{MeasurementPlan, Observe};
    use crate::signals::{generate_sparse, AmplitudeLaw, FourierBasis, SparsitySpec};
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn signal(b: usize, w: usize, seed: u64) -> SparseSignal<f64> {
        generate_sparse(
            FourierBasis::new(b).unwrap(),
            &SparsitySpec { w, law: AmplitudeLaw::Gaussian, seed },
        )
        .unwrap()
    }

    #[test]
    fn pearson_matches_hand_computation() {
        let s = array![[1.0, 2.0], [2.0, 4.0], [3.0, 5.0]];
        let g = correlation_matrix(&s).unwrap();
        let expected = 9.0 / (2.0 * 21.0_f64.sqrt());
        assert_relative_eq!(g[[0, 1]], expected, max_relative = 1e-12);
        assert_relative_eq!(g[[1, 0]], expected, max_relative = 1e-12);
        assert_eq!(g[[0, 0]], 1.0);
        assert_eq!(g[[1, 1]], 1.0);
        assert_relative_eq!(mu_statistic(&g).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn proportional_columns_snap_to_exactly_one() {
        let s = array![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        let g = correlation_matrix(&s).unwrap();
        assert_eq!(g[[0, 1]], 1.0);
        assert_eq!(mu_statistic(&g).unwrap(), 1.0);

        let flipped = array![[1.0, -2.0], [2.0, -4.0], [3.0, -6.0]];
        let g = correlation_matrix(&flipped).unwrap();
        assert_eq!(g[[0, 1]], -1.0);
        assert_eq!(mu_statistic(&g).unwrap(), 1.0);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let s = array![[2.0, 1.0], [2.0, 2.0], [2.0, 3.0]];
        match correlation_matrix(&s) {
            Err(Error::DegenerateColumn { index }) => assert_eq!(index, 0),
            other => panic!("expected degenerate column, got {other:?}"),
        }
    }

    #[test]
    fn zero_coupling_kills_all_sensitivities() {
        let sys = LorenzConfig::<f64> { mu: 0.0, ..LorenzConfig::default() };
        let plan = MeasurementPlan::with_windows(0.02, 4).unwrap();
        let s = sensitivity_matrix(&sys, &signal(8, 2, 1), &array![1.0, 1.0, 1.0], &plan, 1e-4)
            .unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn variational_sensitivities_match_finite_differences() {
        let sys = LorenzConfig::<f64>::default();
        let sig = signal(8, 2, 17);
        let x0 = array![1.0, 1.0, 1.0];
        let plan = MeasurementPlan::with_windows(0.02, 3).unwrap();
        let s = sensitivity_matrix(&sys, &sig, &x0, &plan, 1e-4).unwrap();
        let fd = fd_sensitivity_matrix(&sys, &sig, &x0, &plan, 1e-4, 1e-6).unwrap();
        let diff = (&s - &fd).mapv(|v| v * v).sum().sqrt();
        let scale = fd.mapv(|v| v * v).sum().sqrt();
        assert!(diff / scale < 1e-6, "relative deviation {}", diff / scale);
    }

    #[test]
    fn constant_observable_has_zero_sensitivity() {
        let sys = LorenzConfig::<f64>::default();
        let plan = MeasurementPlan::with_windows(0.02, 3)
            .unwrap()
            .observing(Observe::Constant);
        let s = sensitivity_matrix(&sys, &signal(8, 2, 3), &array![1.0, 1.0, 1.0], &plan, 1e-4)
            .unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weight_block_lands_in_the_bottom_rows() {
        let s = Array2::<f64>::from_shape_fn((4, 3), |(m, b)| (m as f64) - 0.5 * (b as f64));
        let alpha = array![0.5, 0.0, -2.0];
        let w = WeightMatrix::from_alpha(&alpha, 1e-3).unwrap();
        assert_relative_eq!(w.diag()[0], 1.0 / 0.2510, max_relative = 1e-12);
        assert_relative_eq!(w.diag()[1], 1000.0, max_relative = 1e-12);

        let lambda = 2e-3;
        let stacked = regularized_sensitivity(&s, &w, lambda).unwrap();
        assert_eq!(stacked.dim(), (7, 3));
        for m in 0..4 {
            for b in 0..3 {
                assert_eq!(stacked[[m, b]], s[[m, b]]);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { (lambda * w.diag()[i]).sqrt() } else { 0.0 };
                assert_eq!(stacked[[4 + i, j]], expect);
            }
        }

        let plain = regularized_sensitivity(&s, &w, 0.0).unwrap();
        assert!(plain.slice(ndarray::s![4.., ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn closed_form_matches_the_stacked_correlation() {
        let s = Array2::<f64>::from_shape_fn((6, 4), |(m, b)| {
            ((m * 7 + b * 3) as f64 * 0.37).sin() + 0.2 * (b as f64)
        });
        let alpha = array![0.8, 0.0, -1.3, 0.05];
        for &lambda in &[0.0, 1e-6, 1e-3, 0.5] {
            let w = WeightMatrix::from_alpha(&alpha, 1e-3).unwrap();
            let direct = correlation_matrix(&regularized_sensitivity(&s, &w, lambda).unwrap())
                .unwrap();
            let closed = regularized_correlation(&s, &w, lambda).unwrap();
            for (a, b) in direct.iter().zip(closed.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn report_is_internally_consistent() {
        let sys = LorenzConfig::<f64>::default();
        let sig = signal(20, 3, 1);
        let x0 = array![1.0, 1.0, 1.0];
        let plan = MeasurementPlan::with_windows(0.02, 20).unwrap();
        let report = sensitivity_report(&sys, &sig, &x0, &plan, 1e-4, 2e-3, 1e-3).unwrap();
        assert_eq!(report.s.dim(), (20, 20));
        assert_eq!(report.s_lambda.dim(), (40, 20));
        assert_eq!(report.g_lambda.dim(), (20, 20));
        assert_eq!(report.mu, mu_statistic(&report.g_lambda).unwrap());
        assert!(report.mu > 0.0 && report.mu < 1.0);

        let crc = crc_check(&sys, &sig, &x0, &plan, 1e-4, 2e-3, 1e-3).unwrap();
        assert!(crc.reconstructable);
        assert_eq!(crc.mu, report.mu);
    }

    #[test]
    fn lorenz_correlation_statistic_is_reproducible() {
        let sys = LorenzConfig::<f64>::default();
        let sig = signal(20, 3, 1);
        let plan = MeasurementPlan::with_windows(0.02, 20).unwrap();
        let report =
            sensitivity_report(&sys, &sig, &array![1.0, 1.0, 1.0], &plan, 1e-4, 2e-3, 1e-3)
                .unwrap();
        // Frozen from a trusted run; guards the whole variational +
        // correlation pipeline against silent numerical drift.
        let frozen = 0.03520191495319069;
        assert_relative_eq!(report.mu, frozen, max_relative = 1e-6);
    }

    #[test]
    fn stronger_regularization_lowers_the_average_statistic() {
        let sys = LorenzConfig::<f64>::default();
        let sig = signal(20, 4, 5);
        let states = sample_attractor_initial_states(&sys, 5, 11).unwrap();
        let plan = MeasurementPlan::with_windows(0.02, 20).unwrap();
        let out =
            averaged_mu_multi(&sys, &sig, &states, &plan, 1e-4, &[0.0, 1e-2], 1e-3).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].skipped, 0);
        assert!(
            out[1].mu_bar < out[0].mu_bar,
            "lambda=1e-2 gave {} vs {} at lambda=0",
            out[1].mu_bar,
            out[0].mu_bar
        );

        // The single-lambda entry point must agree with the shared pass.
        let single = averaged_mu(&sys, &sig, &states, &plan, 1e-4, 0.0, 1e-3).unwrap();
        assert_eq!(single.mu_bar.to_bits(), out[0].mu_bar.to_bits());
    }

    #[test]
    fn coherence_matches_hand_value() {
        let s = array![[1.0, 1.0], [0.0, 1.0]];
        assert_relative_eq!(
            coherence(&s).unwrap(),
            1.0 / 2.0_f64.sqrt(),
            max_relative = 1e-14
        );
        let zero = array![[0.0, 1.0], [0.0, 1.0]];
        assert!(matches!(coherence(&zero), Err(Error::ZeroColumn { index: 0 })));
        let one = array![[1.0], [0.0]];
        assert!(matches!(coherence(&one), Err(Error::TooFewColumns { got: 1 })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        /// Any correlation matrix this module produces is symmetric, has a
        /// unit diagonal, and stays inside [-1, 1].
        #[test]
        fn correlation_is_symmetric_bounded_unit_diagonal(
            rows in 2usize..7,
            cols in 2usize..6,
            seed in 0u64..1000,
        ) {
            let mut rng = crate::rng::Prng::seed_from(seed);
            let s = Array2::<f64>::from_shape_fn((rows, cols), |_| rng.uniform_in(-2.0, 2.0));
            if let Ok(g) = correlation_matrix(&s) {
                for i in 0..cols {
                    prop_assert_eq!(g[[i, i]], 1.0);
                    for j in 0..cols {
                        prop_assert_eq!(g[[i, j]], g[[j, i]]);
                        prop_assert!(g[[i, j]].abs() <= 1.0);
                    }
                }
            }
        }
    }
}
