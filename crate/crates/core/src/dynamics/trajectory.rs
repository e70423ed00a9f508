//! Trajectory driver: adaptive integration, jump detection and field readout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::integrator::{Dopri5, IntegrationStats, Tolerances};
use super::{
    Dynamics, JumpChannel, JumpMode, Model, Observation, Populations, PropagatorKind, SchemeConfig, TrajectoryState,
};
use crate::error::{invalid, Result};
use crate::geometry::AtomArray;
use crate::kernel::CouplingKernel;
use crate::modes::ProbePulse;
use crate::observables::FieldRecord;
use crate::C64;

/// Default output density in samples per excited-state lifetime 1/Γ_e.
pub const DEFAULT_SAMPLES_PER_LIFETIME: f64 = 40.0;

/// Uniform output grid `t_i = start + i·step`, `i = 0..points`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: f64,
    pub step: f64,
    pub points: usize,
}

impl TimeGrid {
    pub fn new(start: f64, end: f64, points: usize) -> Result<Self> {
        if points < 2 || !(end > start) || !start.is_finite() || !end.is_finite() {
            return Err(invalid("time grid needs at least two points and end > start"));
        }
        Ok(Self { start, step: (end - start) / (points - 1) as f64, points })
    }

    /// Covers the default pulse window with at least `per_lifetime` samples per 1/Γ_e.
    pub fn for_pulse(pulse: &ProbePulse, gamma_e: f64, per_lifetime: f64) -> Result<Self> {
        let (t0, t1) = pulse.window();
        let intervals = ((t1 - t0) * gamma_e * per_lifetime).ceil().max(1.0) as usize;
        Self::new(t0, t1, intervals + 1)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.time(self.points - 1)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.time(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Integrator tolerances. An infinite `h_max` is replaced by τ/8.
    pub tolerances: Tolerances,
    /// Jump-time resolution in units of 1/Γ_e.
    pub jump_time_tolerance: f64,
    /// Times at which the normalized atom-basis state is recorded.
    pub snapshot_times: Vec<f64>,
    /// Records `(t, ‖Ψ‖²)` at every accepted step end.
    pub record_norm: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            jump_time_tolerance: 1e-3,
            snapshot_times: Vec::new(),
            record_norm: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: JumpChannel,
}

#[derive(Debug, Clone)]
pub struct TrajectoryOutcome {
    /// Normalized state at the end of the window.
    pub final_state: TrajectoryState,
    pub record: FieldRecord,
    pub jumps: Vec<JumpEvent>,
    /// Largest normalized single-excitation population seen at a step end.
    pub peak_single: f64,
    /// Same for the doubles sector.
    pub peak_double: f64,
    /// `(t, ‖Ψ‖²)` at accepted step ends; empty unless requested.
    pub norm_trace: Vec<(f64, f64)>,
    /// Normalized states at the requested snapshot times.
    pub snapshots: Vec<TrajectoryState>,
    pub stats: IntegrationStats,
}

/// Convenience wrapper building the dynamics for a single trajectory.
pub fn evolve_trajectory(
    initial: &TrajectoryState,
    scheme: &SchemeConfig,
    array: &AtomArray,
    kernel: &CouplingKernel,
    grid: &TimeGrid,
    mode: JumpMode,
    rng: &mut ChaCha8Rng,
) -> Result<TrajectoryOutcome> {
    let dynamics = Dynamics::new(array, kernel, scheme, PropagatorKind::Auto)?;
    dynamics.evolve(initial, &scheme.probe, grid, mode, rng, &EvolveOptions::default())
}

struct Recorder {
    record: FieldRecord,
    next: usize,
}

impl Recorder {
    fn push(&mut self, pulse: &ProbePulse, t: f64, obs: Observation) {
        let alpha = pulse.envelope(t);
        let inv = if obs.norm_sqr > 0.0 { 1.0 / obs.norm_sqr } else { 0.0 };
        self.record.times.push(t);
        self.record.alpha_p.push(alpha);
        self.record.alpha_t.push(alpha + C64::i() * obs.forward * inv);
        self.record.alpha_r.push(C64::i() * obs.backward * inv);
        self.next += 1;
    }
}

fn track(peaks: &mut (f64, f64), p: Populations) {
    peaks.0 = peaks.0.max(p.single);
    peaks.1 = peaks.1.max(p.double);
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run<M: Model>(
    model: &M,
    gamma_e: f64,
    initial: &TrajectoryState,
    pulse: &ProbePulse,
    grid: &TimeGrid,
    mode: JumpMode,
    rng: &mut ChaCha8Rng,
    opts: &EvolveOptions,
) -> Result<TrajectoryOutcome> {
    let norm0 = initial.compute_norm_sqr();
    if (norm0 - 1.0).abs() > 1e-8 {
        return Err(invalid(format!("initial state must be normalized (‖Ψ‖² = {norm0})")));
    }
    let mut tol = opts.tolerances;
    tol.validate()?;
    if !tol.h_max.is_finite() {
        tol.h_max = pulse.duration / 8.0;
    }
    let t_start = grid.start;
    let t_end = grid.end();
    let time_tol = opts.jump_time_tolerance / gamma_e;

    let mut f = |t: f64, y: &[C64], dy: &mut [C64]| model.rhs(pulse, t, y, dy);
    let y0 = model.from_state(initial);
    let mut stepper = Dopri5::new(&mut f, t_start, &y0, t_end - t_start, tol);
    let mut work = model.new_work();
    model.restart(stepper.y(), stepper.dy(), &mut work);

    let mut rec = Recorder { record: FieldRecord::with_capacity(grid.points), next: 0 };
    let first = model.observe_state(&y0, &mut work);
    rec.push(pulse, t_start, first);

    let mut snapshot_times = opts.snapshot_times.clone();
    snapshot_times.sort_by(f64::total_cmp);
    let mut snapshots = Vec::with_capacity(snapshot_times.len());
    let mut next_snapshot = 0;
    while next_snapshot < snapshot_times.len() && snapshot_times[next_snapshot] <= t_start {
        snapshots.push(initial.normalized());
        next_snapshot += 1;
    }

    let start_pops = model.to_state(&y0, t_start);
    let mut peaks = (0.0, 0.0);
    {
        let n2 = start_pops.compute_norm_sqr();
        let single = start_pops.b.iter().map(|x| x.norm_sqr()).sum::<f64>() / n2;
        let double = start_pops.b2.as_ref().map_or(0.0, |v| 0.5 * v.iter().map(|x| x.norm_sqr()).sum::<f64>()) / n2;
        track(&mut peaks, Populations { single, double, ..Default::default() });
    }

    let draw = |rng: &mut ChaCha8Rng| match mode {
        JumpMode::Stochastic => rng.gen::<f64>(),
        JumpMode::NoJump => f64::NEG_INFINITY,
    };
    let mut threshold = draw(rng);
    let mut jumps = Vec::new();
    let mut norm_trace = Vec::new();
    if opts.record_norm {
        norm_trace.push((t_start, norm0));
    }
    let mut scratch = vec![C64::new(0.0, 0.0); model.dim()];

    while stepper.t() < t_end {
        stepper.step(&mut f, t_end)?;
        let step = stepper.dense();
        let end_norm = model.end_step(step, stepper.y(), stepper.dy(), &mut work);

        let jump_theta = if end_norm <= threshold {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            while (hi - lo) * step.h > time_tol {
                let mid = 0.5 * (lo + hi);
                if model.norm_at(step, mid, &mut work) <= threshold {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Some(hi)
        } else {
            None
        };
        let t_cut = match jump_theta {
            Some(theta) if theta < 1.0 => step.t0 + theta * step.h,
            _ => step.t1(),
        };

        while rec.next < grid.points && grid.time(rec.next) <= t_cut {
            let t = grid.time(rec.next);
            let obs = model.observe_at(step, step.theta(t), &mut work);
            rec.push(pulse, t, obs);
        }
        while next_snapshot < snapshot_times.len() && snapshot_times[next_snapshot] <= t_cut {
            step.eval(step.theta(snapshot_times[next_snapshot]), &mut scratch);
            let mut s = model.to_state(&scratch, snapshot_times[next_snapshot]).normalized();
            s.jump_count = jumps.len();
            snapshots.push(s);
            next_snapshot += 1;
        }

        match jump_theta {
            Some(theta) => {
                step.eval(theta, &mut scratch);
                let channel = model.jump(&mut scratch, rng)?;
                jumps.push(JumpEvent { time: t_cut, channel });
                stepper.reset(&mut f, t_cut, &scratch);
                model.restart(stepper.y(), stepper.dy(), &mut work);
                threshold = draw(rng);
                if opts.record_norm {
                    norm_trace.push((t_cut, 1.0));
                }
            }
            None => {
                track(&mut peaks, model.end_populations(&work));
                model.commit(&mut work);
                if opts.record_norm {
                    norm_trace.push((stepper.t(), end_norm));
                }
            }
        }
    }

    let mut final_state = model.to_state(stepper.y(), t_end).normalized();
    final_state.jump_count = jumps.len();
    Ok(TrajectoryOutcome {
        final_state,
        record: rec.record,
        jumps,
        peak_single: peaks.0,
        peak_double: peaks.1,
        norm_trace,
        snapshots,
        stats: stepper.stats,
    })
}
