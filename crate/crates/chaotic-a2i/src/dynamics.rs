//! Forced chaotic dynamics: the system trait, a Lorenz implementation, and
//! fixed-step RK4 integration with and without forward sensitivities.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::rng::Prng;
use crate::signals::{FourierBasis, SparseSignal};
use crate::variational::{aligned_steps, propagate_plain_grid, propagate_var_grid};

/// Divergence guard: integration aborts once any state component exceeds
/// this magnitude (or stops being finite). Sensitivity components are not
/// checked; they may legitimately grow very large.
pub const DEFAULT_BLOWUP: f64 = 1e6;

/// A continuous-time system `x' = F(x, t) + mu * s(t) * e_c` driven by a
/// scalar input on one channel.
///
/// `field` and `jacobian` write into caller-provided slices (`dim` and
/// `dim * dim` row-major, respectively) so integration loops stay
/// allocation-free.
pub trait ChaoticSystem<T: Scalar> {
    /// State dimension `d`.
    fn dim(&self) -> usize;

    /// Autonomous vector field `F(x, t)`, written to `out[..dim]`.
    fn field(&self, x: &[T], t: T, out: &mut [T]);

    /// Jacobian `dF/dx` at `(x, t)`, written row-major to `out[..dim*dim]`.
    fn jacobian(&self, x: &[T], t: T, out: &mut [T]);

    /// Index of the state component that receives the scalar input.
    fn excitation_channel(&self) -> usize;

    /// Input gain `mu`.
    fn coupling(&self) -> T;

    /// Full right-hand side with the input value `drive = s(t)` applied.
    fn forced_field(&self, x: &[T], t: T, drive: T, out: &mut [T]) {
        self.field(x, t, out);
        out[self.excitation_channel()] += self.coupling() * drive;
    }
}

/// Lorenz system on an accelerated clock:
///
/// ```text
/// x1' = tau * a * (x2 - x1)
/// x2' = tau * (b * x1 - x2 - x1 * x3) + mu * s(t)
/// x3' = tau * (x1 * x2 - c * x3)
/// ```
///
/// `tau` rescales the autonomous dynamics only; the input enters the second
/// component outside the time scaling, with gain `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorenzConfig<T: Scalar> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub tau: T,
    pub mu: T,
}

impl<T: Scalar> Default for LorenzConfig<T> {
    fn default() -> Self {
        LorenzConfig {
            a: T::lit(10.0),
            b: T::lit(28.0),
            c: T::lit(2.66),
            tau: T::lit(15.0),
            mu: T::lit(20.0),
        }
    }
}

impl<T: Scalar> ChaoticSystem<T> for LorenzConfig<T> {
    fn dim(&self) -> usize {
        3
    }

    fn field(&self, x: &[T], _t: T, out: &mut [T]) {
        out[0] = self.tau * self.a * (x[1] - x[0]);
        out[1] = self.tau * (self.b * x[0] - x[1] - x[0] * x[2]);
        out[2] = self.tau * (x[0] * x[1] - self.c * x[2]);
    }

    fn jacobian(&self, x: &[T], _t: T, out: &mut [T]) {
        let tau = self.tau;
        out[0] = -tau * self.a;
        out[1] = tau * self.a;
        out[2] = T::zero();
        out[3] = tau * (self.b - x[2]);
        out[4] = -tau;
        out[5] = -tau * x[0];
        out[6] = tau * x[1];
        out[7] = tau * x[0];
        out[8] = -tau * self.c;
    }

    fn excitation_channel(&self) -> usize {
        1
    }

    fn coupling(&self) -> T {
        self.mu
    }
}

/// States sampled on a uniform time grid `t_i = t0 + i h`, one row per node
/// (the initial state included).
#[derive(Debug, Clone)]
pub struct TrajectoryGrid<T: Scalar> {
    t0: T,
    h: T,
    states: Array2<T>,
}

impl<T: Scalar> TrajectoryGrid<T> {
    /// Number of grid nodes.
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn step(&self) -> T {
        self.h
    }

    pub fn times(&self) -> Array1<T> {
        Array1::from_iter((0..self.len()).map(|i| self.t0 + self.h * T::of_usize(i)))
    }

    pub fn states(&self) -> ArrayView2<'_, T> {
        self.states.view()
    }

    pub fn state(&self, i: usize) -> ArrayView1<'_, T> {
        self.states.row(i)
    }

    /// One state component over the whole grid.
    pub fn channel(&self, c: usize) -> ArrayView1<'_, T> {
        self.states.column(c)
    }

    /// Write `t,x1,..,xd` rows with full round-trip precision.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t")?;
        for c in 0..self.states.ncols() {
            write!(w, ",x{}", c + 1)?;
        }
        writeln!(w)?;
        for (i, row) in self.states.rows().into_iter().enumerate() {
            let t = self.t0 + self.h * T::of_usize(i);
            write!(w, "{:.16e}", t.to_f64_lossy())?;
            for v in row.iter() {
                write!(w, ",{:.16e}", v.to_f64_lossy())?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// A trajectory together with forward sensitivities of the state with
/// respect to the signal coefficients and the initial state. Leading axis
/// is the grid node.
#[derive(Debug, Clone)]
pub struct SensitivityTrajectory<T: Scalar> {
    t0: T,
    h: T,
    pub states: Array2<T>,
    pub dx_dalpha: Array3<T>,
    pub dx_dx0: Array3<T>,
}

/// Views of one node of a [`SensitivityTrajectory`].
#[derive(Debug, Clone, Copy)]
pub struct SensitivityState<'a, T: Scalar> {
    pub t: T,
    pub x: ArrayView1<'a, T>,
    pub dx_dalpha: ArrayView2<'a, T>,
    pub dx_dx0: ArrayView2<'a, T>,
}

impl<T: Scalar> SensitivityTrajectory<T> {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.nrows() == 0
    }

    pub fn at(&self, i: usize) -> SensitivityState<'_, T> {
        SensitivityState {
            t: self.t0 + self.h * T::of_usize(i),
            x: self.states.row(i),
            dx_dalpha: self.dx_dalpha.index_axis(Axis(0), i),
            dx_dx0: self.dx_dx0.index_axis(Axis(0), i),
        }
    }
}

/// Integrate the forced system over `[t0, t1]` with the default divergence
/// bound. `t1 - t0` must be a whole number of steps (relative tolerance
/// 1e-9).
pub fn integrate<T: Scalar, S: ChaoticSystem<T>>(
    system: &S,
    signal: &SparseSignal<T>,
    x0: &Array1<T>,
    t0: T,
    t1: T,
    h: T,
) -> Result<TrajectoryGrid<T>> {
    integrate_with_bound(system, signal, x0, t0, t1, h, T::lit(DEFAULT_BLOWUP))
}

pub fn integrate_with_bound<T: Scalar, S: ChaoticSystem<T>>(
    system: &S,
    signal: &SparseSignal<T>,
    x0: &Array1<T>,
    t0: T,
    t1: T,
    h: T,
    blowup: T,
) -> Result<TrajectoryGrid<T>> {
    check_x0(system, x0)?;
    let steps = aligned_steps(t1 - t0, h)?;
    let x0v = x0.to_vec();
    let states = propagate_plain_grid(
        system,
        signal.basis(),
        signal.alpha().as_slice().expect("owned coefficients"),
        &x0v,
        t0,
        steps,
        h,
        blowup,
    )?;
    Ok(TrajectoryGrid { t0, h, states })
}

/// Integrate state and forward sensitivities over `[t0, t1]`, starting from
/// `dx/dalpha = 0`, `dx/dx0 = I`.
pub fn integrate_with_sensitivities<T: Scalar, S: ChaoticSystem<T>>(
    system: &S,
    signal: &SparseSignal<T>,
    x0: &Array1<T>,
    t0: T,
    t1: T,
    h: T,
) -> Result<SensitivityTrajectory<T>> {
    check_x0(system, x0)?;
    let steps = aligned_steps(t1 - t0, h)?;
    let x0v = x0.to_vec();
    let (states, dx_dalpha, dx_dx0) = propagate_var_grid(
        system,
        signal.basis(),
        signal.alpha().as_slice().expect("owned coefficients"),
        &x0v,
        t0,
        steps,
        h,
        T::lit(DEFAULT_BLOWUP),
    )?;
    Ok(SensitivityTrajectory { t0, h, states, dx_dalpha, dx_dx0 })
}

fn check_x0<T: Scalar, S: ChaoticSystem<T>>(system: &S, x0: &Array1<T>) -> Result<()> {
    if x0.len() != system.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: system.dim(),
            actual: x0.len(),
        });
    }
    Ok(())
}

/// Draw `n` states from the unforced attractor.
///
/// The autonomous system is integrated from `(1, 1, 1)` with step 1e-4; the
/// first 10 scaled time units (`10 / tau` seconds) are discarded as
/// transient and states are then picked uniformly at random from the next
/// 40 scaled units. Deterministic in `seed`.
pub fn sample_attractor_initial_states<T: Scalar>(
    config: &LorenzConfig<T>,
    n: usize,
    seed: u64,
) -> Result<Vec<Array1<T>>> {
    if !(config.tau > T::zero()) {
        return Err(Error::invalid("tau", "time scale must be positive"));
    }
    if n == 0 {
        return Err(Error::invalid("n", "must draw at least one state"));
    }
    let h = T::lit(1e-4);
    let tau_h = (config.tau * h).to_f64_lossy();
    let transient_steps = (10.0 / tau_h).ceil() as usize;
    let window_steps = (40.0 / tau_h).ceil() as usize;
    let silent = SparseSignal::zero(FourierBasis::new(2)?);
    let x0 = vec![T::one(); 3];
    let states = propagate_plain_grid(
        config,
        silent.basis(),
        silent.alpha().as_slice().expect("owned coefficients"),
        &x0,
        T::zero(),
        transient_steps + window_steps,
        h,
        T::lit(DEFAULT_BLOWUP),
    )?;
    let mut rng = Prng::seed_from(seed);
    let mut picks = Vec::with_capacity(n);
    for _ in 0..n {
        let i = transient_steps + rng.pick(window_steps + 1);
        picks.push(states.row(i).to_owned());
    }
    Ok(picks)
}
