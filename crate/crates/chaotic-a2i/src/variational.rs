//! Fixed-step RK4 propagation kernels.
//!
//! Two kernels share one stepping scheme: a plain kernel advancing the state
//! plus one integrate-and-dump accumulator, and a variational kernel that
//! additionally carries first-order sensitivities of the state and of the
//! accumulator with respect to the signal coefficients and the initial state.
//! The forward sensitivities obey
//!
//!   d/dt (dx/dtheta) = J_F(x, t) * (dx/dtheta) + dF_forcing/dtheta,
//!
//! where the forcing derivative is mu * psi_k(t) in the excitation row for
//! theta = alpha_k and zero for theta = x0. Everything runs on flat slices;
//! time at step i is always computed as t0 + i * h from the global step
//! index, so splitting an interval into segments reproduces the single-run
//! arithmetic bit for bit.

use ndarray::{Array1, Array2, Array3};

use crate::dynamics::ChaoticSystem;
use crate::error::{Error, Result};
use crate::measurement::Observe;
use crate::num::Scalar;
use crate::signals::FourierBasis;

/// Validate that `h` tiles `span` and return the step count.
pub(crate) fn aligned_steps<T: Scalar>(span: T, h: T) -> Result<usize> {
    if !(h > T::zero()) {
        return Err(Error::invalid("h", "step must be positive"));
    }
    if !(span > T::zero()) {
        return Err(Error::invalid("span", "integration span must be positive"));
    }
    let ratio = (span / h).to_f64_lossy();
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * n.max(1.0) {
        return Err(Error::MisalignedStep {
            interval: span.to_f64_lossy(),
            h: h.to_f64_lossy(),
        });
    }
    Ok(n as usize)
}

fn check_state<T: Scalar>(x: &[T], t: T, bound: T) -> Result<()> {
    for (i, &v) in x.iter().enumerate() {
        if !(v.abs() <= bound) {
            return Err(Error::Diverged {
                t: t.to_f64_lossy(),
                component: i,
                value: v.to_f64_lossy(),
                bound: bound.to_f64_lossy(),
            });
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Plain kernel: y = [x(0..d), q].

fn plain_rhs<T: Scalar, S: ChaoticSystem<T>>(
    sys: &S,
    alpha: &[T],
    obs: Observe,
    psi: &[T],
    t: T,
    y: &[T],
    out: &mut [T],
) {
    let d = sys.dim();
    let x = &y[..d];
    sys.field(x, t, &mut out[..d]);
    let mut drive = T::zero();
    for (p, a) in psi.iter().zip(alpha.iter()) {
        drive += *p * *a;
    }
    out[sys.excitation_channel()] += sys.coupling() * drive;
    out[d] = match obs {
        Observe::Coordinate(c) => x[c],
        Observe::Constant => T::one(),
    };
}

pub(crate) struct PlainPropagator<'a, T: Scalar, S: ChaoticSystem<T>> {
    sys: &'a S,
    basis: FourierBasis,
    alpha: &'a [T],
    obs: Observe,
    t0: T,
    h: T,
    blowup: T,
    d: usize,
    y: Vec<T>,
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
    psi_a: Vec<T>,
    psi_m: Vec<T>,
    psi_e: Vec<T>,
}

impl<'a, T: Scalar, S: ChaoticSystem<T>> PlainPropagator<'a, T, S> {
    pub fn new(
        sys: &'a S,
        basis: FourierBasis,
        alpha: &'a [T],
        obs: Observe,
        t0: T,
        h: T,
        blowup: T,
    ) -> Self {
        let d = sys.dim();
        let len = d + 1;
        let b = basis.size();
        PlainPropagator {
            sys,
            basis,
            alpha,
            obs,
            t0,
            h,
            blowup,
            d,
            y: vec![T::zero(); len],
            k1: vec![T::zero(); len],
            k2: vec![T::zero(); len],
            k3: vec![T::zero(); len],
            k4: vec![T::zero(); len],
            tmp: vec![T::zero(); len],
            psi_a: vec![T::zero(); b],
            psi_m: vec![T::zero(); b],
            psi_e: vec![T::zero(); b],
        }
    }

    pub fn reset(&mut self, x0: &[T]) {
        self.y[..self.d].copy_from_slice(x0);
        self.y[self.d] = T::zero();
    }

    pub fn x(&self) -> &[T] {
        &self.y[..self.d]
    }

    pub fn q(&self) -> T {
        self.y[self.d]
    }

    pub fn reset_q(&mut self) {
        self.y[self.d] = T::zero();
    }

    /// Advance one step; `i` is the global step index (t = t0 + i h).
    pub fn step(&mut self, i: usize) -> Result<()> {
        let h = self.h;
        let t = self.t0 + h * T::of_usize(i);
        let half = T::lit(0.5);
        let tm = t + half * h;
        let te = t + h;
        self.basis.eval_row(t, &mut self.psi_a);
        self.basis.eval_row(tm, &mut self.psi_m);
        self.basis.eval_row(te, &mut self.psi_e);

        plain_rhs(self.sys, self.alpha, self.obs, &self.psi_a, t, &self.y, &mut self.k1);
        let h2 = half * h;
        for ((w, &yv), &k) in self.tmp.iter_mut().zip(&self.y).zip(&self.k1) {
            *w = yv + h2 * k;
        }
        plain_rhs(self.sys, self.alpha, self.obs, &self.psi_m, tm, &self.tmp, &mut self.k2);
        for ((w, &yv), &k) in self.tmp.iter_mut().zip(&self.y).zip(&self.k2) {
            *w = yv + h2 * k;
        }
        plain_rhs(self.sys, self.alpha, self.obs, &self.psi_m, tm, &self.tmp, &mut self.k3);
        for ((w, &yv), &k) in self.tmp.iter_mut().zip(&self.y).zip(&self.k3) {
            *w = yv + h * k;
        }
        plain_rhs(self.sys, self.alpha, self.obs, &self.psi_e, te, &self.tmp, &mut self.k4);
        let h6 = h / T::lit(6.0);
        let two = T::lit(2.0);
        for i in 0..self.y.len() {
            self.y[i] += h6 * (self.k1[i] + two * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        check_state(&self.y[..self.d], te, self.blowup)
    }
}

// ---------------------------------------------------------------------------
// Variational kernel:
// y = [x(d), q, dx/dalpha (d*b row-major), dx/dx0 (d*d), dq/dalpha (b), dq/dx0 (d)].

#[derive(Clone, Copy)]
struct VarLayout {
    d: usize,
    b: usize,
    xa: usize,
    x0: usize,
    qa: usize,
    q0: usize,
    len: usize,
}

impl VarLayout {
    fn new(d: usize, b: usize) -> Self {
        let xa = d + 1;
        let x0 = xa + d * b;
        let qa = x0 + d * d;
        let q0 = qa + b;
        VarLayout { d, b, xa, x0, qa, q0, len: q0 + d }
    }
}

#[allow(clippy::too_many_arguments)]
fn var_rhs<T: Scalar, S: ChaoticSystem<T>>(
    sys: &S,
    alpha: &[T],
    obs: Observe,
    lay: VarLayout,
    psi: &[T],
    jac: &mut [T],
    t: T,
    y: &[T],
    out: &mut [T],
) {
    let (d, b) = (lay.d, lay.b);
    let x = &y[..d];
    let e = sys.excitation_channel();
    let mu = sys.coupling();

    sys.field(x, t, &mut out[..d]);
    let mut drive = T::zero();
    for (p, a) in psi.iter().zip(alpha.iter()) {
        drive += *p * *a;
    }
    out[e] += mu * drive;
    out[d] = match obs {
        Observe::Coordinate(c) => x[c],
        Observe::Constant => T::one(),
    };

    sys.jacobian(x, t, jac);

    // d/dt dx/dalpha = J * dx/dalpha + mu * psi in the excitation row.
    for r in 0..d {
        let row_out = &mut out[lay.xa + r * b..lay.xa + (r + 1) * b];
        row_out.fill(T::zero());
        for s in 0..d {
            let a = jac[r * d + s];
            if a == T::zero() {
                continue;
            }
            let src = &y[lay.xa + s * b..lay.xa + (s + 1) * b];
            for (o, &v) in row_out.iter_mut().zip(src) {
                *o += a * v;
            }
        }
    }
    {
        let row_e = &mut out[lay.xa + e * b..lay.xa + (e + 1) * b];
        for (o, &p) in row_e.iter_mut().zip(psi) {
            *o += mu * p;
        }
    }

    // d/dt dx/dx0 = J * dx/dx0.
    for r in 0..d {
        let row_out = &mut out[lay.x0 + r * d..lay.x0 + (r + 1) * d];
        row_out.fill(T::zero());
        for s in 0..d {
            let a = jac[r * d + s];
            if a == T::zero() {
                continue;
            }
            let src = &y[lay.x0 + s * d..lay.x0 + (s + 1) * d];
            for (o, &v) in row_out.iter_mut().zip(src) {
                *o += a * v;
            }
        }
    }

    // Accumulator sensitivities follow the observed coordinate's rows.
    match obs {
        Observe::Coordinate(c) => {
            out[lay.qa..lay.qa + b].copy_from_slice(&y[lay.xa + c * b..lay.xa + (c + 1) * b]);
            out[lay.q0..lay.q0 + d].copy_from_slice(&y[lay.x0 + c * d..lay.x0 + (c + 1) * d]);
        }
        Observe::Constant => {
            out[lay.qa..lay.qa + b].fill(T::zero());
            out[lay.q0..lay.q0 + d].fill(T::zero());
        }
    }
}

pub(crate) struct VarPropagator<'a, T: Scalar, S: ChaoticSystem<T>> {
    sys: &'a S,
    basis: FourierBasis,
    alpha: &'a [T],
    obs: Observe,
    t0: T,
    h: T,
    blowup: T,
    lay: VarLayout,
    y: Vec<T>,
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
    jac: Vec<T>,
    psi_a: Vec<T>,
    psi_m: Vec<T>,
    psi_e: Vec<T>,
}

impl<'a, T: Scalar, S: ChaoticSystem<T>> VarPropagator<'a, T, S> {
    pub fn new(
        sys: &'a S,
        basis: FourierBasis,
        alpha: &'a [T],
        obs: Observe,
        t0: T,
        h: T,
        blowup: T,
    ) -> Self {
        let d = sys.dim();
        let b = basis.size();
        assert_eq!(alpha.len(), b, "coefficient vector must match basis size");
        let lay = VarLayout::new(d, b);
        VarPropagator {
            sys,
            basis,
            alpha,
            obs,
            t0,
            h,
            blowup,
            lay,
            y: vec![T::zero(); lay.len],
            k1: vec![T::zero(); lay.len],
            k2: vec![T::zero(); lay.len],
            k3: vec![T::zero(); lay.len],
            k4: vec![T::zero(); lay.len],
            tmp: vec![T::zero(); lay.len],
            jac: vec![T::zero(); d * d],
            psi_a: vec![T::zero(); b],
            psi_m: vec![T::zero(); b],
            psi_e: vec![T::zero(); b],
        }
    }

    /// Start a segment: state x0, identity dx/dx0, all other blocks zero.
    pub fn reset(&mut self, x0: &[T]) {
        let lay = self.lay;
        self.y.fill(T::zero());
        self.y[..lay.d].copy_from_slice(x0);
        for r in 0..lay.d {
            self.y[lay.x0 + r * lay.d + r] = T::one();
        }
    }

    pub fn x(&self) -> &[T] {
        &self.y[..self.lay.d]
    }

    pub fn q(&self) -> T {
        self.y[self.lay.d]
    }

    pub fn dx_dalpha(&self) -> &[T] {
        &self.y[self.lay.xa..self.lay.xa + self.lay.d * self.lay.b]
    }

    pub fn dx_dx0(&self) -> &[T] {
        &self.y[self.lay.x0..self.lay.x0 + self.lay.d * self.lay.d]
    }

    pub fn dq_dalpha(&self) -> &[T] {
        &self.y[self.lay.qa..self.lay.qa + self.lay.b]
    }

    pub fn dq_dx0(&self) -> &[T] {
        &self.y[self.lay.q0..self.lay.q0 + self.lay.d]
    }

    pub fn reset_q(&mut self) {
        let lay = self.lay;
        self.y[lay.d] = T::zero();
        self.y[lay.qa..lay.qa + lay.b].fill(T::zero());
        self.y[lay.q0..lay.q0 + lay.d].fill(T::zero());
    }

    pub fn step(&mut self, i: usize) -> Result<()> {
        let h = self.h;
        let t = self.t0 + h * T::of_usize(i);
        let half = T::lit(0.5);
        let tm = t + half * h;
        let te = t + h;
        self.basis.eval_row(t, &mut self.psi_a);
        self.basis.eval_row(tm, &mut self.psi_m);
        self.basis.eval_row(te, &mut self.psi_e);

        var_rhs(self.sys, self.alpha, self.obs, self.lay, &self.psi_a, &mut self.jac, t, &self.y, &mut self.k1);
        let h2 = half * h;
        for ((w, &yv), &k) in self.tmp.iter_mut().zip(&self.y).zip(&self.k1) {
            *w = yv + h2 * k;
        }
        var_rhs(self.sys, self.alpha, self.obs, self.lay, &self.psi_m, &mut self.jac, tm, &self.tmp, &mut self.k2);
        for ((w, &yv), &k) in self.tmp.iter_mut().zip(&self.y).zip(&self.k2) {
            *w = yv + h2 * k;
        }
        var_rhs(self.sys, self.alpha, self.obs, self.lay, &self.psi_m, &mut self.jac, tm, &self.tmp, &mut self.k3);
        for ((w, &yv), &k) in self.tmp.iter_mut().zip(&self.y).zip(&self.k3) {
            *w = yv + h * k;
        }
        var_rhs(self.sys, self.alpha, self.obs, self.lay, &self.psi_e, &mut self.jac, te, &self.tmp, &mut self.k4);
        let h6 = h / T::lit(6.0);
        let two = T::lit(2.0);
        for j in 0..self.y.len() {
            self.y[j] += h6 * (self.k1[j] + two * (self.k2[j] + self.k3[j]) + self.k4[j]);
        }
        check_state(&self.y[..self.lay.d], te, self.blowup)
    }
}

// ---------------------------------------------------------------------------
// Window and grid drivers.

/// Everything a shooting segment contributes: window integrals, their
/// Jacobian blocks, and the end state with its Jacobian blocks.
pub(crate) struct SegmentOutput<T> {
    pub meas: Array1<T>,
    pub meas_dalpha: Array2<T>,
    pub meas_dx0: Array2<T>,
    pub end_x: Vec<T>,
    pub end_dalpha: Array2<T>,
    pub end_dx0: Array2<T>,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn propagate_var_windows<T: Scalar, S: ChaoticSystem<T>>(
    sys: &S,
    basis: FourierBasis,
    alpha: &[T],
    x0: &[T],
    obs: Observe,
    start_step: usize,
    n_windows: usize,
    steps_per_window: usize,
    h: T,
    blowup: T,
) -> Result<SegmentOutput<T>> {
    let d = sys.dim();
    let b = basis.size();
    let mut prop = VarPropagator::new(sys, basis, alpha, obs, T::zero(), h, blowup);
    prop.reset(x0);
    let mut meas = Array1::zeros(n_windows);
    let mut meas_dalpha = Array2::zeros((n_windows, b));
    let mut meas_dx0 = Array2::zeros((n_windows, d));
    let mut step = start_step;
    for w in 0..n_windows {
        prop.reset_q();
        for _ in 0..steps_per_window {
            prop.step(step)?;
            step += 1;
        }
        meas[w] = prop.q();
        meas_dalpha
            .row_mut(w)
            .iter_mut()
            .zip(prop.dq_dalpha())
            .for_each(|(o, &v)| *o = v);
        meas_dx0
            .row_mut(w)
            .iter_mut()
            .zip(prop.dq_dx0())
            .for_each(|(o, &v)| *o = v);
    }
    let end_x = prop.x().to_vec();
    let end_dalpha = Array2::from_shape_vec((d, b), prop.dx_dalpha().to_vec()).expect("layout");
    let end_dx0 = Array2::from_shape_vec((d, d), prop.dx_dx0().to_vec()).expect("layout");
    Ok(SegmentOutput { meas, meas_dalpha, meas_dx0, end_x, end_dalpha, end_dx0 })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn propagate_plain_windows<T: Scalar, S: ChaoticSystem<T>>(
    sys: &S,
    basis: FourierBasis,
    alpha: &[T],
    x0: &[T],
    obs: Observe,
    start_step: usize,
    n_windows: usize,
    steps_per_window: usize,
    h: T,
    blowup: T,
) -> Result<(Array1<T>, Vec<T>)> {
    let mut prop = PlainPropagator::new(sys, basis, alpha, obs, T::zero(), h, blowup);
    prop.reset(x0);
    let mut meas = Array1::zeros(n_windows);
    let mut step = start_step;
    for w in 0..n_windows {
        prop.reset_q();
        for _ in 0..steps_per_window {
            prop.step(step)?;
            step += 1;
        }
        meas[w] = prop.q();
    }
    Ok((meas, prop.x().to_vec()))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn propagate_plain_grid<T: Scalar, S: ChaoticSystem<T>>(
    sys: &S,
    basis: FourierBasis,
    alpha: &[T],
    x0: &[T],
    t0: T,
    steps: usize,
    h: T,
    blowup: T,
) -> Result<Array2<T>> {
    let d = sys.dim();
    let mut prop = PlainPropagator::new(sys, basis, alpha, Observe::Constant, t0, h, blowup);
    prop.reset(x0);
    let mut states = Array2::zeros((steps + 1, d));
    states.row_mut(0).iter_mut().zip(x0).for_each(|(o, &v)| *o = v);
    for i in 0..steps {
        prop.step(i)?;
        states
            .row_mut(i + 1)
            .iter_mut()
            .zip(prop.x())
            .for_each(|(o, &v)| *o = v);
    }
    Ok(states)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn propagate_var_grid<T: Scalar, S: ChaoticSystem<T>>(
    sys: &S,
    basis: FourierBasis,
    alpha: &[T],
    x0: &[T],
    t0: T,
    steps: usize,
    h: T,
    blowup: T,
) -> Result<(Array2<T>, Array3<T>, Array3<T>)> {
    let d = sys.dim();
    let b = basis.size();
    let mut prop = VarPropagator::new(sys, basis, alpha, Observe::Constant, t0, h, blowup);
    prop.reset(x0);
    let mut states = Array2::zeros((steps + 1, d));
    let mut dx_dalpha = Array3::zeros((steps + 1, d, b));
    let mut dx_dx0 = Array3::zeros((steps + 1, d, d));
    let record = |i: usize,
                  prop: &VarPropagator<T, S>,
                  states: &mut Array2<T>,
                  da: &mut Array3<T>,
                  d0: &mut Array3<T>| {
        states.row_mut(i).iter_mut().zip(prop.x()).for_each(|(o, &v)| *o = v);
        da.index_axis_mut(ndarray::Axis(0), i)
            .iter_mut()
            .zip(prop.dx_dalpha())
            .for_each(|(o, &v)| *o = v);
        d0.index_axis_mut(ndarray::Axis(0), i)
            .iter_mut()
            .zip(prop.dx_dx0())
            .for_each(|(o, &v)| *o = v);
    };
    record(0, &prop, &mut states, &mut dx_dalpha, &mut dx_dx0);
    for i in 0..steps {
        prop.step(i)?;
        record(i + 1, &prop, &mut states, &mut dx_dalpha, &mut dx_dx0);
    }
    Ok((states, dx_dalpha, dx_dx0))
}
