//! Ensemble sweeps over probe detuning or position disorder.
//!
//! Trajectory `m` of a run owns the key `key_m`, the first output of a
//! ChaCha8 stream `m` seeded with the run seed. The key seeds the disorder
//! draw of realization `m` and, through stream `1 + p`, the jump generator at
//! detuning point `p`. Results are therefore independent of the thread count.

pub mod config;
pub mod output;
pub mod presets;

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Dynamics, EvolveOptions, JumpMode, LevelScheme, TimeGrid};
use crate::error::{Error, Result};
use crate::geometry::{apply_disorder, build_square_lattice, AtomArray};
use crate::kernel::build_coupling_matrices;
use crate::observables::{
    integrate_probabilities, reduce_ensemble, RunMetadata, SpectrumPoint, SpectrumResult, TrajectorySummary,
};

pub use config::{DisorderAxis, RunConfig, SweepKind};

/// Key of trajectory `m` derived from the run seed.
pub fn trajectory_key(seed: u64, m: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(m as u64);
    rng.next_u64()
}

/// Jump generator of trajectory key `key` at detuning point `point`.
pub fn jump_rng(key: u64, point: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(1 + point as u64);
    rng
}

/// Ordered lattice of the configuration; `nx = ny = 0` gives an empty array.
pub fn ordered_array(config: &RunConfig) -> Result<AtomArray> {
    let species = config.species()?;
    let spacing = config.lattice_spacing()?;
    if config.array.nx == 0 {
        return Ok(AtomArray::empty(species, spacing));
    }
    build_square_lattice(config.array.nx, config.array.ny, spacing, species)
}

/// Disordered realization for key `key`; the ordered array when both widths vanish.
pub fn realization(ordered: &AtomArray, sigma_xy: f64, sigma_z: f64, key: u64) -> Result<AtomArray> {
    if ordered.is_empty() || (sigma_xy == 0.0 && sigma_z == 0.0) {
        return Ok(ordered.clone());
    }
    apply_disorder(ordered, sigma_xy, sigma_z, key)
}

fn build_dynamics(config: &RunConfig, array: &AtomArray) -> Result<Dynamics> {
    let kernel = build_coupling_matrices(array)?;
    let scheme = config.scheme_config(0.0)?;
    Dynamics::new(array, &kernel, &scheme, config.mc.propagator)
}

/// Runs `f` on a pool with `threads` workers (0 = all cores).
pub fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    faer::set_global_parallelism(faer::Par::Seq);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Monte Carlo ensemble at the given detunings (rad/s) for fixed disorder widths (m).
///
/// Runs on the current rayon pool.
fn ensemble(config: &RunConfig, detunings: &[f64], sigma_xy: f64, sigma_z: f64) -> Result<Vec<SpectrumPoint>> {
    let ordered = ordered_array(config)?;
    let seed = config.mc.seed;
    let disordered = !ordered.is_empty() && (sigma_xy > 0.0 || sigma_z > 0.0);
    let shared = if !disordered {
        Some(Arc::new(build_dynamics(config, &ordered)?))
    } else if config.array.frozen_disorder {
        let array = realization(&ordered, sigma_xy, sigma_z, trajectory_key(seed, 0))?;
        Some(Arc::new(build_dynamics(config, &array)?))
    } else {
        None
    };
    let base = config.scheme_config(0.0)?;
    let gamma_e = ordered.species.gamma_e;
    let opts = EvolveOptions {
        tolerances: config.tolerances()?,
        jump_time_tolerance: config.integrator.jump_time_tolerance,
        ..EvolveOptions::default()
    };
    let samples = config.integrator.samples_per_lifetime;
    let mode = config.mc.jump_mode;

    let per_trajectory: Vec<Vec<TrajectorySummary>> = (0..config.mc.trajectories)
        .into_par_iter()
        .map(|m| -> Result<Vec<TrajectorySummary>> {
            let key = trajectory_key(seed, m);
            let dynamics = match &shared {
                Some(d) => Arc::clone(d),
                None => Arc::new(build_dynamics(config, &realization(&ordered, sigma_xy, sigma_z, key)?)?),
            };
            let ground = dynamics.ground_state();
            detunings
                .iter()
                .enumerate()
                .map(|(p, &delta)| {
                    let pulse = base.probe.with_detuning(delta);
                    let grid = TimeGrid::for_pulse(&pulse, gamma_e, samples)?;
                    let mut rng = jump_rng(key, p);
                    let out = dynamics.evolve(&ground, &pulse, &grid, mode, &mut rng, &opts)?;
                    Ok(TrajectorySummary {
                        probabilities: integrate_probabilities(&out.record)?,
                        jumps: out.jumps.len(),
                        peak_single: out.peak_single,
                        peak_double: out.peak_double,
                    })
                })
                .enumerate()
                .map(|(p, r)| r.map_err(|e| Error::Point { index: p, source: Box::new(e) }))
                .collect()
        })
        .collect::<Result<_>>()?;

    detunings
        .iter()
        .enumerate()
        .map(|(p, &delta)| {
            let column: Vec<TrajectorySummary> = per_trajectory.iter().map(|row| row[p]).collect();
            reduce_ensemble(delta, &column)
        })
        .collect()
}

pub fn metadata(config: &RunConfig, sigma_xy: f64, sigma_z: f64) -> Result<RunMetadata> {
    let sp = config.species()?;
    Ok(RunMetadata {
        atoms: config.array.nx * config.array.ny,
        shape: (config.array.nx, config.array.ny),
        lattice_spacing: config.lattice_spacing()?,
        sigma_xy,
        sigma_z,
        scheme: config.scheme_label(),
        trajectories: config.mc.trajectories,
        seed: config.mc.seed,
        jump_mode: match config.mc.jump_mode {
            JumpMode::Stochastic => "stochastic".into(),
            JumpMode::NoJump => "no-jump".into(),
        },
        frozen_disorder: config.array.frozen_disorder,
        gamma_e: sp.gamma_e,
        config_hash: config.hash(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

/// Spectrum over `detunings` (rad/s) with the array disorder of `config`.
pub fn sweep_detuning(config: &RunConfig, detunings: &[f64]) -> Result<SpectrumResult> {
    if detunings.is_empty() {
        return Err(Error::Config("no detunings to sweep".into()));
    }
    let (sxy, sz) = config.sigmas()?;
    let points = with_pool(config.mc.threads, || ensemble(config, detunings, sxy, sz))??;
    Ok(SpectrumResult { metadata: metadata(config, sxy, sz)?, points })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderPoint {
    pub sigma_xy: f64,
    pub sigma_z: f64,
    pub point: SpectrumPoint,
}

/// Probabilities at a fixed detuning versus disorder width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisorderSweep {
    pub metadata: RunMetadata,
    pub axis: DisorderAxis,
    /// Swept width (m) per point.
    pub sigmas: Vec<f64>,
    pub points: Vec<DisorderPoint>,
}

impl DisorderSweep {
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "sigma_nm,sigma_over_spacing,p_t,err_t,p_r,err_r,p_s,err_s")?;
        for (s, p) in self.sigmas.iter().zip(&self.points) {
            let q = &p.point;
            writeln!(
                out,
                "{:.3},{:.6},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                s * 1e9,
                s / self.metadata.lattice_spacing,
                q.p_t.mean,
                q.p_t.stderr,
                q.p_r.mean,
                q.p_r.stderr,
                q.p_s.mean,
                q.p_s.stderr
            )?;
        }
        Ok(())
    }
}

/// Sweeps the disorder width (m) along `axis` at the configured sweep detuning.
pub fn sweep_disorder(config: &RunConfig, sigmas: &[f64], axis: DisorderAxis) -> Result<DisorderSweep> {
    if sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
        return Err(Error::Config("disorder widths must be non-negative".into()));
    }
    let sp = config.species()?;
    let delta = config.sweep.detuning.rad_per_s(sp.gamma_e);
    let (sxy0, sz0) = config.sigmas()?;
    let widths: Vec<(f64, f64)> = sigmas
        .iter()
        .map(|&s| match axis {
            DisorderAxis::Xy => (s, sz0),
            DisorderAxis::Z => (sxy0, s),
            DisorderAxis::Xyz => (s, s),
        })
        .collect();
    let points = with_pool(config.mc.threads, || {
        widths
            .iter()
            .enumerate()
            .map(|(i, &(sxy, sz))| {
                let point = ensemble(config, &[delta], sxy, sz)
                    .map_err(|e| Error::Point { index: i, source: Box::new(e) })?
                    .remove(0);
                Ok(DisorderPoint { sigma_xy: sxy, sigma_z: sz, point })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(DisorderSweep { metadata: metadata(config, sxy0, sz0)?, axis, sigmas: sigmas.to_vec(), points })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutput {
    Spectrum(SpectrumResult),
    Disorder(DisorderSweep),
}

/// Runs the sweep selected by `config.sweep.kind`.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    config.validate()?;
    match config.sweep.kind {
        SweepKind::Detuning => Ok(RunOutput::Spectrum(sweep_detuning(config, &config.detunings()?)?)),
        SweepKind::Disorder => {
            let sigmas: Vec<f64> = config.sweep.sigmas_nm.iter().map(|s| s * 1e-9).collect();
            Ok(RunOutput::Disorder(sweep_disorder(config, &sigmas, config.sweep.disorder_axis)?))
        }
    }
}

/// Spectral width of the probe, 2π/τ (rad/s).
pub fn probe_bandwidth(config: &RunConfig) -> f64 {
    2.0 * PI / config.probe.duration.seconds()
}

/// Width (rad/s) of the switching feature of a four-level configuration.
///
/// Near-resonant drives (|Δ_d| < Γ_e) open a transparency window of width
/// |Ω|²/Γ_e set by the weaker of drive and cavity field. Far-detuned drives
/// switch through the two-photon coupling Ω_cΩ_d/Δ_d, limited by the mirror
/// linewidth. Without a cavity photon the mirror linewidth alone applies.
pub fn switch_bandwidth(config: &RunConfig) -> Result<Option<f64>> {
    let scheme = config.scheme_config(0.0)?;
    let LevelScheme::FourLevel(p) = scheme.variant else {
        return Ok(None);
    };
    let g = config.species()?.gamma_e;
    let omega_d = p.drive.rabi.norm();
    let omega_c = p.cavity.rabi();
    let resonant = p.drive.detuning.abs() < g;
    let width = match (resonant, omega_c > 0.0) {
        (true, true) => omega_d.min(omega_c).powi(2) / g,
        (true, false) => omega_d.powi(2) / g,
        (false, true) => g.min((omega_c * omega_d / p.drive.detuning).powi(2) / g),
        (false, false) => g,
    };
    Ok(Some(width))
}

/// Human-readable warnings about configurations outside the switch's working range.
pub fn bandwidth_warnings(config: &RunConfig) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    if let Some(width) = switch_bandwidth(config)? {
        let probe = probe_bandwidth(config);
        if probe > width {
            warnings.push(format!(
                "probe bandwidth 2π/τ = {:.3e} rad/s exceeds the switching bandwidth {:.3e} rad/s; \
                 lengthen the pulse for clean switching",
                probe, width
            ));
        }
    }
    Ok(warnings)
}
