//! Adaptive Dormand–Prince 5(4) integrator for complex state vectors with
//! continuous (dense) output of order 4.

use crate::error::{Error, Result};
use crate::C64;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const MAX_STEPS: usize = 10_000_000;

/// Error-control settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size (s).
    pub h_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-6, atol: 1e-9, h_max: f64::INFINITY }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.h_max > 0.0) {
            return Err(crate::error::invalid("integrator tolerances must be positive"));
        }
        Ok(())
    }
}

/// Continuous extension of the last accepted step.
///
/// `y(t0 + θh) = r1 + θ(r2 + (1−θ)(r3 + θ(r4 + (1−θ)r5)))`.
#[derive(Debug, Clone)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    pub rcont: [Vec<C64>; 5],
}

impl DenseStep {
    fn new(dim: usize) -> Self {
        Self {
            t0: 0.0,
            h: 0.0,
            rcont: std::array::from_fn(|_| vec![C64::new(0.0, 0.0); dim]),
        }
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn theta(&self, t: f64) -> f64 {
        ((t - self.t0) / self.h).clamp(0.0, 1.0)
    }

    /// Interpolated state at `t0 + θh`.
    pub fn eval(&self, theta: f64, out: &mut [C64]) {
        let [r1, r2, r3, r4, r5] = &self.rcont;
        let t1 = 1.0 - theta;
        for (i, o) in out.iter_mut().enumerate() {
            *o = r1[i] + (r2[i] + (r3[i] + (r4[i] + r5[i] * t1) * theta) * t1) * theta;
        }
    }

    /// Applies a linear functional to each coefficient vector, giving the
    /// coefficients of the interpolant of that functional.
    pub fn project(&self, f: impl Fn(&[C64]) -> C64) -> [C64; 5] {
        std::array::from_fn(|i| f(&self.rcont[i]))
    }
}

/// Evaluates an interpolant given in projected coefficients.
pub fn eval_projected(c: &[C64; 5], theta: f64) -> C64 {
    let t1 = 1.0 - theta;
    c[0] + (c[1] + (c[2] + (c[3] + c[4] * t1) * theta) * t1) * theta
}

/// Step statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
}

/// Stepper state. The right-hand side is passed to every call so the caller
/// keeps ownership of the model.
pub struct Dopri5 {
    tol: Tolerances,
    min_step: f64,
    t: f64,
    y: Vec<C64>,
    k: [Vec<C64>; 7],
    ystage: Vec<C64>,
    ynew: Vec<C64>,
    h: f64,
    facold: f64,
    dense: DenseStep,
    pub stats: IntegrationStats,
}

impl Dopri5 {
    /// `span` is the length of the full integration interval; steps shorter
    /// than `1e-12·span` are reported as an integration failure.
    pub fn new<F>(f: &mut F, t: f64, y: &[C64], span: f64, tol: Tolerances) -> Self
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let dim = y.len();
        let zeros = || vec![C64::new(0.0, 0.0); dim];
        let mut s = Self {
            tol,
            min_step: 1e-12 * span.abs().max(f64::MIN_POSITIVE),
            t,
            y: y.to_vec(),
            k: std::array::from_fn(|_| zeros()),
            ystage: zeros(),
            ynew: zeros(),
            h: 0.0,
            facold: 1e-4,
            dense: DenseStep::new(dim),
            stats: IntegrationStats::default(),
        };
        s.reset(f, t, y);
        s
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[C64] {
        &self.y
    }

    /// Derivative at the current point (first stage of the next step).
    pub fn dy(&self) -> &[C64] {
        &self.k[0]
    }

    pub fn dense(&self) -> &DenseStep {
        &self.dense
    }

    /// Restarts from a new state, e.g. after a quantum jump.
    pub fn reset<F>(&mut self, f: &mut F, t: f64, y: &[C64])
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        self.t = t;
        self.y.copy_from_slice(y);
        f(t, &self.y, &mut self.k[0]);
        self.stats.rhs_evaluations += 1;
        self.h = 0.0;
        self.facold = 1e-4;
    }

    fn rms(&self, v: &[C64], y: &[C64]) -> f64 {
        if v.is_empty() {
            return 0.0;
        }
        let s: f64 = v
            .iter()
            .zip(y)
            .map(|(vi, yi)| (vi.norm() / (self.tol.atol + self.tol.rtol * yi.norm())).powi(2))
            .sum();
        (s / v.len() as f64).sqrt()
    }

    fn initial_step<F>(&mut self, f: &mut F, t_end: f64) -> f64
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let span = (t_end - self.t).abs();
        let d0 = self.rms(&self.y, &self.y);
        let d1 = self.rms(&self.k[0], &self.y);
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.tol.h_max).min(span);
        for i in 0..self.y.len() {
            self.ystage[i] = self.y[i] + self.k[0][i] * h0;
        }
        f(self.t + h0, &self.ystage, &mut self.k[1]);
        self.stats.rhs_evaluations += 1;
        for i in 0..self.y.len() {
            self.ynew[i] = self.k[1][i] - self.k[0][i];
        }
        let d2 = self.rms(&self.ynew, &self.y) / h0;
        let dm = d1.max(d2);
        let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6 * span) } else { (0.01 / dm).powf(0.2) };
        (100.0 * h0).min(h1).min(self.tol.h_max).min(span)
    }

    /// Advances by one accepted step without passing `t_end`. The continuous
    /// extension of the step is available from [`Dopri5::dense`] afterwards.
    pub fn step<F>(&mut self, f: &mut F, t_end: f64) -> Result<()>
    where
        F: FnMut(f64, &[C64], &mut [C64]),
    {
        let n = self.y.len();
        if self.h <= 0.0 {
            self.h = self.initial_step(f, t_end);
        }
        let mut attempts = 0usize;
        loop {
            attempts += 1;
            if attempts > MAX_STEPS {
                return Err(Error::IntegrationFailure {
                    time: self.t,
                    reason: "too many rejected steps".into(),
                });
            }
            let remaining = t_end - self.t;
            let mut h = self.h.min(self.tol.h_max);
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h < self.min_step && !last {
                return Err(Error::IntegrationFailure {
                    time: self.t,
                    reason: format!("step size underflow (h = {h:e} s)"),
                });
            }
            let t = self.t;
            let y = &self.y;
            let (k1, rest) = self.k.split_at_mut(1);
            let k1 = &k1[0];
            let [k2, k3, k4, k5, k6, k7] = rest else { unreachable!() };
            let ys = &mut self.ystage;

            for i in 0..n {
                ys[i] = y[i] + k1[i] * (h * A21);
            }
            f(t + C2 * h, ys, k2);
            for i in 0..n {
                ys[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
            }
            f(t + C3 * h, ys, k3);
            for i in 0..n {
                ys[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
            }
            f(t + C4 * h, ys, k4);
            for i in 0..n {
                ys[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
            }
            f(t + C5 * h, ys, k5);
            for i in 0..n {
                ys[i] = y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
            }
            f(t + h, ys, k6);
            let yn = &mut self.ynew;
            for i in 0..n {
                yn[i] = y[i] + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
            }
            f(t + h, yn, k7);
            self.stats.rhs_evaluations += 6;

            let mut err = 0.0;
            for i in 0..n {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
                let sc = self.tol.atol + self.tol.rtol * y[i].norm().max(yn[i].norm());
                err += (e.norm() / sc).powi(2);
            }
            let err = if n > 0 { (err / n as f64).sqrt() } else { 0.0 };
            if !err.is_finite() {
                self.stats.rejected += 1;
                self.h = h * MIN_FACTOR;
                continue;
            }

            let fac11 = err.powf(0.2 - 0.75 * BETA);
            if err <= 1.0 {
                let fac = (fac11 / self.facold.powf(BETA) / SAFETY).clamp(1.0 / MAX_FACTOR, 1.0 / MIN_FACTOR);
                self.facold = err.max(1e-4);
                let [r1, r2, r3, r4, r5] = &mut self.dense.rcont;
                for i in 0..n {
                    let ydiff = yn[i] - y[i];
                    let bspl = k1[i] * h - ydiff;
                    r1[i] = y[i];
                    r2[i] = ydiff;
                    r3[i] = bspl;
                    r4[i] = ydiff - k7[i] * h - bspl;
                    r5[i] = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h;
                }
                self.dense.t0 = t;
                self.dense.h = h;
                self.t = if last { t_end } else { t + h };
                std::mem::swap(&mut self.y, &mut self.ynew);
                self.k.swap(0, 6);
                self.h = h / fac;
                self.stats.accepted += 1;
                return Ok(());
            }
            self.stats.rejected += 1;
            self.h = h / (fac11 / SAFETY).min(1.0 / MIN_FACTOR);
        }
    }
}
