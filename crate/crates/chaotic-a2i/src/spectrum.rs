//! Periodogram-based bandwidth estimates.
//!
//! The converter's usable rate is set by how fast the chaotic response
//! moves, so trajectories are summarized by the frequency below which 99%
//! of the (demeaned, one-sided) spectral energy lies. The transform always
//! runs in `f64`; estimator resolution is limited by record length, not
//! float width.

use ndarray::Array1;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::dynamics::TrajectoryGrid;
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Minimum record length accepted by the estimator.
pub const MIN_NODES: usize = 1 << 10;

/// Energy fraction that defines the bandwidth cutoff.
pub const ENERGY_FRACTION: f64 = 0.99;

/// One-sided periodogram of a uniformly sampled record (rectangular
/// window, mean removed). `power[k]` is `|X_k|^2` at `freqs[k] = k fs / n`.
#[derive(Debug, Clone)]
pub struct Periodogram<T: Scalar> {
    pub freqs: Array1<T>,
    pub power: Array1<T>,
}

pub fn periodogram<T: Scalar>(samples: &[T], sample_rate: T) -> Result<Periodogram<T>> {
    if samples.len() < MIN_NODES {
        return Err(Error::TrajectoryTooShort { len: samples.len(), min: MIN_NODES });
    }
    if !(sample_rate > T::zero()) {
        return Err(Error::invalid("sample_rate", "must be positive"));
    }
    let n = samples.len();
    let mean = samples.iter().map(|v| v.to_f64_lossy()).sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = samples
        .iter()
        .map(|v| Complex::new(v.to_f64_lossy() - mean, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let fs = sample_rate.to_f64_lossy();
    let bins = n / 2 + 1;
    let freqs = Array1::from_iter((0..bins).map(|k| T::lit(k as f64 * fs / n as f64)));
    let power = Array1::from_iter(buf[..bins].iter().map(|c| T::lit(c.norm_sqr())));
    Ok(Periodogram { freqs, power })
}

/// Smallest frequency below which [`ENERGY_FRACTION`] of the one-sided
/// energy of the record lies.
pub fn bandwidth_from_samples<T: Scalar>(samples: &[T], sample_rate: T) -> Result<T> {
    let p = periodogram(samples, sample_rate)?;
    let total: T = p.power.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::invalid("samples", "record has no spectral content"));
    }
    let threshold = T::lit(ENERGY_FRACTION) * total;
    let mut cum = T::zero();
    for (k, &pw) in p.power.iter().enumerate() {
        cum += pw;
        if cum >= threshold {
            return Ok(p.freqs[k]);
        }
    }
    Ok(p.freqs[p.freqs.len() - 1])
}

/// Bandwidth of one state component of a trajectory; the sample rate is
/// the inverse integration step.
pub fn estimate_bandwidth<T: Scalar>(traj: &TrajectoryGrid<T>, channel: usize) -> Result<T> {
    let samples: Vec<T> = traj.channel(channel).to_vec();
    bandwidth_from_samples(&samples, T::one() / traj.step())
}
