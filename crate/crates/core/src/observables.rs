//! Transmitted and reflected fields, photon probabilities and ensemble statistics.
//!
//! With `Ω_j = C·g(r_j)·α_p` the input-output relations reduce to
//!
//! ```text
//! α_T(t) = α_p(t) + i Σ_j (C·g(r_j))*  ⟨σ̃_ge^j⟩(t)
//! α_R(t) =          i Σ_j (C·g*(r_j))* ⟨σ̃_ge^j⟩(t)
//! ```
//!
//! which stays finite after the pulse has passed, when the array still radiates.

use std::io::Write;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{Dyn, Owned, OMatrix, OVector, U4};
use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryState;
use crate::error::{invalid, Result};
use crate::modes::ModeOverlaps;
use crate::C64;

/// Fraction of the integrated flux allowed in the window edges before a warning.
pub const EDGE_FLUX_WARNING: f64 = 1e-4;

/// Field amplitudes sampled on a uniform output grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub times: Vec<f64>,
    /// Incident flux amplitude α_p (s^(−1/2)).
    pub alpha_p: Vec<C64>,
    pub alpha_t: Vec<C64>,
    pub alpha_r: Vec<C64>,
}

impl FieldRecord {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            alpha_p: Vec::with_capacity(n),
            alpha_t: Vec::with_capacity(n),
            alpha_r: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `t,|alpha_p|^2,|alpha_t|^2,|alpha_r|^2` per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,flux_p,flux_t,flux_r")?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{:.12e},{:.12e},{:.12e},{:.12e}",
                self.times[i],
                self.alpha_p[i].norm_sqr(),
                self.alpha_t[i].norm_sqr(),
                self.alpha_r[i].norm_sqr()
            )?;
        }
        Ok(())
    }
}

/// ⟨σ̃_ge^j⟩ = (a*b_j + Σ_i b_i*B_ij)/‖Ψ‖².
pub fn polarization(state: &TrajectoryState) -> Vec<C64> {
    let n2 = state.compute_norm_sqr();
    let n = state.len();
    if n2 <= 0.0 {
        return vec![C64::new(0.0, 0.0); n];
    }
    let ac = state.a.conj();
    (0..n)
        .map(|j| {
            let mut p = ac * state.b[j];
            if let Some(b2) = &state.b2 {
                p += (0..n).map(|i| state.b[i].conj() * b2[i + n * j]).sum::<C64>();
            }
            p / n2
        })
        .collect()
}

/// `(α_T, α_R)` for the given polarizations and incident amplitude.
pub fn project_fields(polarizations: &[C64], overlaps: &ModeOverlaps, alpha_p: C64) -> (C64, C64) {
    let fwd: C64 = overlaps.forward.iter().zip(polarizations).map(|(u, p)| u.conj() * p).sum();
    let bwd: C64 = overlaps.backward.iter().zip(polarizations).map(|(u, p)| u.conj() * p).sum();
    (alpha_p + C64::i() * fwd, C64::i() * bwd)
}

/// Transmission, reflection and scattering probabilities of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probabilities {
    pub p_t: f64,
    pub p_r: f64,
    pub p_s: f64,
}

fn trapezoid(times: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    (1..times.len()).map(|i| 0.5 * (times[i] - times[i - 1]) * (f(i) + f(i - 1))).sum()
}

/// Integrates the transmitted and reflected photon numbers over the record
/// and divides by the incident photon number integrated on the same grid, so
/// the quadrature error of the incident pulse cancels.
pub fn integrate_probabilities(record: &FieldRecord) -> Result<Probabilities> {
    let n = record.len();
    if n < 2 || record.alpha_p.len() != n || record.alpha_t.len() != n || record.alpha_r.len() != n {
        return Err(invalid("field record needs at least two consistent samples"));
    }
    let t = &record.times;
    let incident = trapezoid(t, |i| record.alpha_p[i].norm_sqr());
    if !(incident > 0.0) {
        return Err(invalid("incident pulse carries no photons"));
    }
    let trans = trapezoid(t, |i| record.alpha_t[i].norm_sqr());
    let refl = trapezoid(t, |i| record.alpha_r[i].norm_sqr());
    let dt = t[n - 1] - t[0];
    let edge = [0, n - 1]
        .iter()
        .map(|&i| record.alpha_t[i].norm_sqr().max(record.alpha_p[i].norm_sqr()) + record.alpha_r[i].norm_sqr())
        .fold(0.0, f64::max);
    if edge * dt > EDGE_FLUX_WARNING * (trans + refl) {
        log::warn!(
            "integration window may be too short: edge flux {:.3e} of total",
            edge * dt / (trans + refl)
        );
    }
    let p_t = trans / incident;
    let p_r = refl / incident;
    Ok(Probabilities { p_t, p_r, p_s: 1.0 - p_t - p_r })
}

/// Per-trajectory figures reduced over the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub probabilities: Probabilities,
    pub jumps: usize,
    pub peak_single: f64,
    pub peak_double: f64,
}

/// Mean and standard error of one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Sample mean and standard error, summed in the given order. A single
    /// sample has zero standard error.
    pub fn from_samples(xs: &[f64]) -> Self {
        let m = xs.len();
        if m == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN };
        }
        if xs.iter().all(|&x| x == xs[0]) {
            return Self { mean: xs[0], stderr: 0.0 };
        }
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        Self { mean, stderr: (var / m as f64).sqrt() }
    }
}

/// Ensemble statistics at one probe detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    /// Δ_p (rad/s).
    pub detuning: f64,
    pub p_t: Estimate,
    pub p_r: Estimate,
    pub p_s: Estimate,
    pub mean_jumps: f64,
    pub peak_single: f64,
    pub peak_double: f64,
    pub trajectories: usize,
}

/// Reduces per-trajectory results in their given order.
pub fn reduce_ensemble(detuning: f64, samples: &[TrajectorySummary]) -> Result<SpectrumPoint> {
    if samples.is_empty() {
        return Err(invalid("cannot reduce an empty ensemble"));
    }
    let pick = |f: fn(&Probabilities) -> f64| samples.iter().map(|s| f(&s.probabilities)).collect::<Vec<_>>();
    let m = samples.len() as f64;
    Ok(SpectrumPoint {
        detuning,
        p_t: Estimate::from_samples(&pick(|p| p.p_t)),
        p_r: Estimate::from_samples(&pick(|p| p.p_r)),
        p_s: Estimate::from_samples(&pick(|p| p.p_s)),
        mean_jumps: samples.iter().map(|s| s.jumps as f64).sum::<f64>() / m,
        peak_single: samples.iter().map(|s| s.peak_single).sum::<f64>() / m,
        peak_double: samples.iter().map(|s| s.peak_double).sum::<f64>() / m,
        trajectories: samples.len(),
    })
}

/// Run description embedded in every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub atoms: usize,
    pub shape: (usize, usize),
    pub lattice_spacing: f64,
    pub sigma_xy: f64,
    pub sigma_z: f64,
    pub scheme: String,
    pub trajectories: usize,
    pub seed: u64,
    pub jump_mode: String,
    pub frozen_disorder: bool,
    pub gamma_e: f64,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub metadata: RunMetadata,
    pub points: Vec<SpectrumPoint>,
}

impl SpectrumResult {
    /// One row per detuning: Δ_p/Γ_e, p_T, err_T, p_R, err_R, p_S, err_S.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "detuning_over_gamma_e,p_t,err_t,p_r,err_r,p_s,err_s")?;
        for p in &self.points {
            writeln!(
                out,
                "{:.6},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                p.detuning / self.metadata.gamma_e,
                p.p_t.mean,
                p.p_t.stderr,
                p.p_r.mean,
                p.p_r.stderr,
                p.p_s.mean,
                p.p_s.stderr
            )?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    /// Index of the point with the largest mean reflection.
    pub fn reflection_peak(&self) -> Option<usize> {
        (0..self.points.len()).max_by(|&a, &b| self.points[a].p_r.mean.total_cmp(&self.points[b].p_r.mean))
    }
}

/// `y = offset + amplitude / (1 + ((x − center)/(fwhm/2))²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub fwhm: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub rms_residual: f64,
}

impl LorentzianFit {
    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.center) / (0.5 * self.fwhm);
        self.offset + self.amplitude / (1.0 + u * u)
    }
}

struct LorentzProblem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    /// center, half width, amplitude, offset
    p: OVector<f64, U4>,
}

impl LeastSquaresProblem<f64, Dyn, U4> for LorentzProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, p: &OVector<f64, U4>) {
        self.p.copy_from(p);
    }

    fn params(&self) -> OVector<f64, U4> {
        self.p
    }

    fn residuals(&self) -> Option<OVector<f64, Dyn>> {
        let (c, hw, a, o) = (self.p[0], self.p[1], self.p[2], self.p[3]);
        Some(OVector::<f64, Dyn>::from_iterator(
            self.x.len(),
            self.x.iter().zip(self.y).map(|(x, y)| {
                let u = (x - c) / hw;
                o + a / (1.0 + u * u) - y
            }),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U4>> {
        let (c, hw, a, _) = (self.p[0], self.p[1], self.p[2], self.p[3]);
        let mut j = OMatrix::<f64, Dyn, U4>::zeros(self.x.len());
        for (row, x) in self.x.iter().enumerate() {
            let u = (x - c) / hw;
            let den = 1.0 + u * u;
            let l = 1.0 / den;
            let dl_du = -2.0 * u / (den * den);
            j[(row, 0)] = a * dl_du * (-1.0 / hw);
            j[(row, 1)] = a * dl_du * (-u / hw);
            j[(row, 2)] = l;
            j[(row, 3)] = 1.0;
        }
        Some(j)
    }
}

/// Least-squares Lorentzian fit, seeded from the largest sample.
pub fn fit_lorentzian(x: &[f64], y: &[f64]) -> Result<LorentzianFit> {
    if x.len() != y.len() || x.len() < 5 {
        return Err(invalid("Lorentzian fit needs at least five (x, y) pairs"));
    }
    let imax = (0..y.len()).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap_or(0);
    let ymin = y.iter().copied().fold(f64::INFINITY, f64::min);
    let half = 0.5 * (y[imax] + ymin);
    let above: Vec<f64> = x.iter().zip(y).filter(|(_, v)| **v >= half).map(|(x, _)| *x).collect();
    let span = above.iter().copied().fold(f64::NEG_INFINITY, f64::max) - above.iter().copied().fold(f64::INFINITY, f64::min);
    let xr = x.iter().copied().fold(f64::NEG_INFINITY, f64::max) - x.iter().copied().fold(f64::INFINITY, f64::min);
    let hw0 = (0.5 * span).max(xr / (4.0 * x.len() as f64));
    let problem = LorentzProblem {
        x,
        y,
        p: OVector::<f64, U4>::new(x[imax], hw0, y[imax] - ymin, ymin),
    };
    let (fitted, report) = LevenbergMarquardt::new().minimize(problem);
    if !report.termination.was_successful() {
        return Err(invalid(format!("Lorentzian fit did not converge: {:?}", report.termination)));
    }
    let p = fitted.p;
    let rms = (2.0 * report.objective_function / x.len() as f64).sqrt();
    Ok(LorentzianFit { center: p[0], fwhm: 2.0 * p[1].abs(), amplitude: p[2], offset: p[3], rms_residual: rms })
}
