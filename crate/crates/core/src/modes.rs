//! Probe, drive and cavity field profiles.
//!
//! Everything is expressed through the photon flux `|α(t)|²` (photons/s) of
//! the probe, so no quantization volume appears. A single constant
//! `C = sqrt(3λ_e²Γ_e / (8πA))` with `A = πw0²/2` converts flux amplitude and
//! mode profile into a Rabi frequency: `Ω_p(r, t) = C·g(r)·α_p(t)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{AtomArray, AtomSpecies, Vec3};
use crate::C64;

/// Default pulse center in units of the pulse duration.
pub const DEFAULT_CENTER: f64 = 5.0;
/// Default simulation window in units of the pulse duration.
pub const DEFAULT_WINDOW: f64 = 10.0;

/// Focused Gaussian beam, waist at the origin, propagating along `+z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    pub waist: f64,
    pub wavenumber: f64,
}

impl BeamGeometry {
    pub fn new(waist: f64, wavenumber: f64) -> Result<Self> {
        if !(waist > 0.0 && waist.is_finite()) {
            return Err(invalid(format!("beam waist must be positive, got {waist}")));
        }
        if !(wavenumber > 0.0 && wavenumber.is_finite()) {
            return Err(invalid(format!("wavenumber must be positive, got {wavenumber}")));
        }
        Ok(Self { waist, wavenumber })
    }

    /// Rayleigh length ζ = k·w0²/2.
    pub fn rayleigh_length(&self) -> f64 {
        0.5 * self.wavenumber * self.waist * self.waist
    }

    /// Effective mode area A = πw0²/2.
    pub fn area(&self) -> f64 {
        0.5 * PI * self.waist * self.waist
    }
}

/// Gaussian probe pulse carrying `mean_photons` on average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbePulse {
    /// τ (s).
    pub duration: f64,
    /// n̄_p.
    pub mean_photons: f64,
    /// Δ_p = ω_p − ω_e (rad/s).
    pub detuning: f64,
    /// t₀ (s).
    pub center: f64,
    /// Global optical phase of the envelope (rad).
    pub phase: f64,
}

impl ProbePulse {
    /// Pulse centered at `5τ` with zero phase.
    pub fn new(duration: f64, mean_photons: f64, detuning: f64) -> Result<Self> {
        let p = Self {
            duration,
            mean_photons,
            detuning,
            center: DEFAULT_CENTER * duration,
            phase: 0.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid(format!("pulse duration must be positive, got {}", self.duration)));
        }
        if !(self.mean_photons >= 0.0 && self.mean_photons.is_finite()) {
            return Err(invalid(format!(
                "mean photon number must be non-negative, got {}",
                self.mean_photons
            )));
        }
        if !self.detuning.is_finite() || !self.center.is_finite() || !self.phase.is_finite() {
            return Err(invalid("pulse detuning, center and phase must be finite"));
        }
        Ok(())
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    /// Default integration window `[0, 10τ]`.
    pub fn window(&self) -> (f64, f64) {
        (0.0, DEFAULT_WINDOW * self.duration)
    }

    /// α_p(t) in s^(−1/2). The duration is assumed valid.
    pub fn envelope(&self, t: f64) -> C64 {
        let norm = (self.mean_photons / ((2.0 * PI).sqrt() * self.duration)).sqrt();
        let x = (t - self.center) / (2.0 * self.duration);
        C64::from_polar(norm * (-x * x).exp(), self.phase)
    }
}

/// α_p(t) = √n̄·(√(2π)τ)^(−1/2)·exp[−((t − t₀)/(2τ))²]·e^{iφ}.
pub fn pulse_envelope(t: f64, pulse: &ProbePulse) -> Result<C64> {
    pulse.validate()?;
    Ok(pulse.envelope(t))
}

/// Dimensionless forward mode g(r) = (ζ/q*)·exp[ik(z + ρ²/(2q*))], q = z + iζ.
pub fn gaussian_mode(r: &Vec3, beam: &BeamGeometry) -> C64 {
    let zeta = beam.rayleigh_length();
    let q_conj = C64::new(r.z, -zeta);
    let rho2 = r.x * r.x + r.y * r.y;
    let exponent = C64::i() * beam.wavenumber * (C64::from(r.z) + rho2 / (2.0 * q_conj));
    zeta / q_conj * exponent.exp()
}

/// Flux-to-Rabi constant C with C² = 3λ_e²Γ_e/(8πA), in s^(−1/2).
pub fn flux_to_rabi(species: &AtomSpecies, beam: &BeamGeometry) -> f64 {
    (3.0 * species.lambda_e.powi(2) * species.gamma_e / (8.0 * PI * beam.area())).sqrt()
}

/// Ω_p(r, t) = C·g(r)·α_p(t) for the forward-propagating probe.
pub fn probe_rabi(r: &Vec3, t: f64, pulse: &ProbePulse, beam: &BeamGeometry, species: &AtomSpecies) -> C64 {
    flux_to_rabi(species, beam) * gaussian_mode(r, beam) * pulse.envelope(t)
}

/// Same as [`probe_rabi`] for the backward mode, whose profile is g*(r).
pub fn probe_rabi_backward(
    r: &Vec3,
    t: f64,
    pulse: &ProbePulse,
    beam: &BeamGeometry,
    species: &AtomSpecies,
) -> C64 {
    flux_to_rabi(species, beam) * gaussian_mode(r, beam).conj() * pulse.envelope(t)
}

/// Classical drive on the |e⟩ → |s⟩ transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveField {
    /// Ω_d (rad/s).
    pub rabi: C64,
    /// Δ_d (rad/s).
    pub detuning: f64,
    /// k_d (rad/m).
    pub wavevector: Vec3,
}

impl DriveField {
    /// Normal-incidence drive with wavevector magnitude `wavenumber`.
    pub fn normal(rabi: C64, detuning: f64, wavenumber: f64) -> Self {
        Self { rabi, detuning, wavevector: Vec3::new(0.0, 0.0, wavenumber) }
    }

    pub fn phase_at(&self, r: &Vec3) -> C64 {
        C64::from_polar(1.0, self.wavevector.dot(r))
    }
}

/// Microwave cavity mode on the |s⟩ → |r⟩ transition with a fixed photon number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityCoupling {
    /// η (rad/s).
    pub strength: f64,
    /// Δ_c (rad/s).
    pub detuning: f64,
    pub photon_number: u32,
}

impl CavityCoupling {
    /// Ω_c = η√n_c.
    pub fn rabi(&self) -> f64 {
        self.strength * (self.photon_number as f64).sqrt()
    }
}

/// Per-atom probe couplings `C·g(r_j)` (forward) and `C·g*(r_j)` (backward).
#[derive(Debug, Clone)]
pub struct ModeOverlaps {
    pub forward: Vec<C64>,
    pub backward: Vec<C64>,
}

impl ModeOverlaps {
    pub fn new(array: &AtomArray, beam: &BeamGeometry) -> Self {
        let c = flux_to_rabi(&array.species, beam);
        let forward: Vec<C64> = array.positions.iter().map(|r| c * gaussian_mode(r, beam)).collect();
        let backward = forward.iter().map(|f| f.conj()).collect();
        Self { forward, backward }
    }

    /// Exchanges the roles of the incident and reflected modes.
    pub fn swapped(&self) -> Self {
        Self { forward: self.backward.clone(), backward: self.forward.clone() }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_square_lattice;

    fn beam() -> BeamGeometry {
        let sp = AtomSpecies::rubidium87();
        BeamGeometry::new(3.0 * sp.lambda_e, sp.wavenumber()).unwrap()
    }

    #[test]
    fn mode_at_focus() {
        let g = gaussian_mode(&Vec3::zeros(), &beam());
        assert!((g - C64::i()).norm() < 1e-15);
    }

    #[test]
    fn mode_at_waist_radius() {
        let b = beam();
        let g = gaussian_mode(&Vec3::new(b.waist, 0.0, 0.0), &b);
        assert!((g.norm() - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn mode_at_rayleigh_length() {
        let b = beam();
        let g = gaussian_mode(&Vec3::new(0.0, 0.0, b.rayleigh_length()), &b);
        assert!((g.norm() - 0.5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn mode_bounded() {
        let b = beam();
        for &(x, z) in &[(0.3, 0.0), (1.0, 0.5), (2.0, -3.0), (0.0, 10.0)] {
            let r = Vec3::new(x * b.waist, 0.0, z * b.rayleigh_length());
            assert!(gaussian_mode(&r, &b).norm() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn beam_validation() {
        assert!(BeamGeometry::new(0.0, 1.0).is_err());
        assert!(BeamGeometry::new(1.0, -1.0).is_err());
        let b = beam();
        assert_eq!(b.rayleigh_length(), 0.5 * b.wavenumber * b.waist * b.waist);
    }

    #[test]
    fn envelope_peak_values() {
        let p = ProbePulse::new(2e-6, 1.0, 0.0).unwrap();
        let peak = p.envelope(p.center);
        assert!((peak.re - ((2.0 * PI).sqrt() * 2e-6).powf(-0.5)).abs() < 1e-9);
        assert!((peak.norm_sqr() / 1.994711e5 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn envelope_normalization_and_scaling() {
        for tau in [0.5e-6, 2e-6, 4e-6] {
            let p = ProbePulse::new(tau, 1.0, 0.0).unwrap();
            let (t0, t1) = p.window();
            let n = 20_000;
            let dt = (t1 - t0) / n as f64;
            let mut sum = 0.0;
            for i in 0..=n {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                sum += w * p.envelope(t0 + i as f64 * dt).norm_sqr();
            }
            assert!((sum * dt - 1.0).abs() < 1e-6, "tau {tau}: {}", sum * dt);
        }
        let p1 = ProbePulse::new(1e-6, 1.0, 0.0).unwrap();
        let p2 = ProbePulse::new(2e-6, 1.0, 0.0).unwrap();
        let r = p1.envelope(p1.center).norm_sqr() / p2.envelope(p2.center).norm_sqr();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn envelope_rejects_bad_duration() {
        let mut p = ProbePulse::new(1e-6, 1.0, 0.0).unwrap();
        p.duration = 0.0;
        assert!(pulse_envelope(0.0, &p).is_err());
        assert!(ProbePulse::new(-1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn rabi_profiles() {
        let sp = AtomSpecies::rubidium87();
        let b = beam();
        let p = ProbePulse::new(2e-6, 0.0, 0.0).unwrap();
        assert_eq!(probe_rabi(&Vec3::zeros(), 1e-5, &p, &b, &sp), C64::new(0.0, 0.0));
        let p = ProbePulse::new(2e-6, 1.0, 0.0).unwrap();
        let r = Vec3::new(0.7e-6, -0.3e-6, 0.0);
        let f = probe_rabi(&r, 1e-5, &p, &b, &sp);
        let bw = probe_rabi_backward(&r, 1e-5, &p, &b, &sp);
        assert!((f.norm() - bw.norm()).abs() < 1e-12 * f.norm());
    }

    #[test]
    fn cavity_rabi() {
        let c = CavityCoupling { strength: 3.0, detuning: 0.0, photon_number: 0 };
        assert_eq!(c.rabi(), 0.0);
        let c = CavityCoupling { photon_number: 4, ..c };
        assert_eq!(c.rabi(), 6.0);
    }

    #[test]
    fn overlaps_conjugate_in_plane() {
        let sp = AtomSpecies::rubidium87();
        let arr = build_square_lattice(6, 6, 532e-9, sp).unwrap();
        let ov = ModeOverlaps::new(&arr, &beam());
        for (f, b) in ov.forward.iter().zip(&ov.backward) {
            assert_eq!(*b, f.conj());
        }
    }

    #[test]
    fn discrete_mode_norm() {
        let sp = AtomSpecies::rubidium87();
        let s = 532e-9;
        let arr = build_square_lattice(24, 24, s, sp.clone()).unwrap();
        let b = beam();
        let sum: f64 = arr.positions.iter().map(|r| gaussian_mode(r, &b).norm_sqr()).sum();
        assert!((sum * s * s / b.area() - 1.0).abs() < 0.05);
    }
}
