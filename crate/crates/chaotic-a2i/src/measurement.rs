//! Integrate-and-dump measurement of one observed coordinate.
//!
//! The observable is integrated continuously alongside the state; at every
//! window boundary the accumulator is read out and reset, so window `m`
//! stores the integral of the observed coordinate over
//! `[m T_cs, (m + 1) T_cs)`. Windows are laid on an exact step grid, which
//! keeps split and whole-interval propagation bit-identical.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ChaoticSystem, DEFAULT_BLOWUP};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::signals::{FourierBasis, SparseSignal};
use crate::variational::{aligned_steps, propagate_plain_windows};

/// Which scalar the dump accumulator integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observe {
    /// One state component by index.
    Coordinate(usize),
    /// The constant 1 — each window then integrates to exactly its length,
    /// which makes quadrature plumbing testable in isolation.
    Constant,
}

/// Window layout of the converter: window length, window count, and the
/// observed quantity. The default observable is the second state component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPlan<T: Scalar> {
    t_cs: T,
    m: usize,
    observe: Observe,
}

impl<T: Scalar> MeasurementPlan<T> {
    /// As many windows as fit into the unit signal interval:
    /// `m = floor(1 / t_cs)`, evaluated with a small tolerance so window
    /// lengths like 0.01 yield exactly 100 windows.
    pub fn new(t_cs: T) -> Result<Self> {
        if !(t_cs > T::zero()) {
            return Err(Error::invalid("t_cs", "window length must be positive"));
        }
        let m = (1.0 / t_cs.to_f64_lossy() + 1e-9).floor() as usize;
        if m == 0 {
            return Err(Error::invalid("t_cs", "window length exceeds the signal interval"));
        }
        Ok(MeasurementPlan { t_cs, m, observe: Observe::Coordinate(1) })
    }

    /// Explicit window count; the horizon `m * t_cs` must not exceed the
    /// unit signal interval.
    pub fn with_windows(t_cs: T, m: usize) -> Result<Self> {
        if !(t_cs > T::zero()) {
            return Err(Error::invalid("t_cs", "window length must be positive"));
        }
        if m == 0 {
            return Err(Error::invalid("m", "need at least one window"));
        }
        if m as f64 * t_cs.to_f64_lossy() > 1.0 + 1e-9 {
            return Err(Error::invalid("m", "windows extend past the signal interval"));
        }
        Ok(MeasurementPlan { t_cs, m, observe: Observe::Coordinate(1) })
    }

    pub fn observing(mut self, observe: Observe) -> Self {
        self.observe = observe;
        self
    }

    pub fn t_cs(&self) -> T {
        self.t_cs
    }

    pub fn windows(&self) -> usize {
        self.m
    }

    pub fn observe(&self) -> Observe {
        self.observe
    }

    /// Total measured time `m * t_cs`.
    pub fn horizon(&self) -> T {
        self.t_cs * T::of_usize(self.m)
    }

    /// Measurements per signal degree of freedom: `t_cs * B`. Values below
    /// one mean the converter samples below the signal's dimension.
    pub fn compression_ratio(&self, basis: FourierBasis) -> T {
        self.t_cs * T::of_usize(basis.size())
    }

    /// Integration steps per window for step size `h`; fails unless `h`
    /// tiles the window exactly (relative tolerance 1e-9).
    pub fn steps_per_window(&self, h: T) -> Result<usize> {
        aligned_steps(self.t_cs, h)
    }
}

/// The dump sequence `y` produced by a [`MeasurementPlan`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementVector<T: Scalar> {
    #[serde(rename = "T_cs")]
    pub t_cs: T,
    pub y: Array1<T>,
}

impl<T: Scalar> MeasurementVector<T> {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Write `m,y` rows with full round-trip precision.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "m,y")?;
        for (m, v) in self.y.iter().enumerate() {
            writeln!(w, "{},{:.16e}", m, v.to_f64_lossy())?;
        }
        Ok(())
    }
}

/// Measure a signal through the converter.
pub fn measure<T: Scalar, S: ChaoticSystem<T>>(
    system: &S,
    signal: &SparseSignal<T>,
    x0: &Array1<T>,
    plan: &MeasurementPlan<T>,
    h: T,
) -> Result<MeasurementVector<T>> {
    predict_measurements(system, signal.basis(), signal.alpha(), x0, plan, h)
}

/// Measurements for an arbitrary coefficient vector over the plan's
/// windows. [`measure`] delegates here, so measuring a signal and
/// predicting from its coefficients agree bit for bit.
pub fn predict_measurements<T: Scalar, S: ChaoticSystem<T>>(
    system: &S,
    basis: FourierBasis,
    alpha: &Array1<T>,
    x0: &Array1<T>,
    plan: &MeasurementPlan<T>,
    h: T,
) -> Result<MeasurementVector<T>> {
    if alpha.len() != basis.size() {
        return Err(Error::DimensionMismatch {
            what: "coefficient vector",
            expected: basis.size(),
            actual: alpha.len(),
        });
    }
    if x0.len() != system.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: system.dim(),
            actual: x0.len(),
        });
    }
    let spw = plan.steps_per_window(h)?;
    let x0v = x0.to_vec();
    let (y, _) = propagate_plain_windows(
        system,
        basis,
        alpha.as_slice().expect("owned coefficients"),
        &x0v,
        plan.observe(),
        0,
        plan.windows(),
        spw,
        h,
        T::lit(DEFAULT_BLOWUP),
    )?;
    Ok(MeasurementVector { t_cs: plan.t_cs(), y })
}
