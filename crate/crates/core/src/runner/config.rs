//! TOML run configuration.
//!
//! Physical quantities carry their unit as a single-key table, for example
//! `spacing = { nm = 532.0 }`, `drive_rabi = { mhz = 2.0 }` (meaning 2π×2 MHz)
//! or `drive_detuning = { gamma = -0.172 }`. Unknown keys are rejected.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{FourLevelParams, JumpMode, LevelScheme, PropagatorKind, SchemeConfig, Tolerances};
use crate::error::{Error, Result};
use crate::geometry::{sigma_minus, sigma_plus, AtomSpecies, Vec3};
use crate::modes::{BeamGeometry, CavityCoupling, DriveField, ProbePulse};
use crate::{C64, MHZ};

/// Angular frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    /// Multiples of Γ_e.
    Gamma(f64),
    /// 2π × MHz.
    Mhz(f64),
    RadPerS(f64),
}

impl Frequency {
    pub fn rad_per_s(&self, gamma_e: f64) -> f64 {
        match *self {
            Self::Gamma(x) => x * gamma_e,
            Self::Mhz(x) => x * MHZ,
            Self::RadPerS(x) => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Length {
    Nm(f64),
    Um(f64),
    M(f64),
    /// Multiples of the probe wavelength λ_e.
    Lambda(f64),
}

impl Length {
    pub fn meters(&self, lambda_e: f64) -> f64 {
        match *self {
            Self::Nm(x) => x * 1e-9,
            Self::Um(x) => x * 1e-6,
            Self::M(x) => x,
            Self::Lambda(x) => x * lambda_e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Duration {
    Ns(f64),
    Us(f64),
    S(f64),
}

impl Duration {
    pub fn seconds(&self) -> f64 {
        match *self {
            Self::Ns(x) => x * 1e-9,
            Self::Us(x) => x * 1e-6,
            Self::S(x) => x,
        }
    }
}

/// Probe detunings in units of Γ_e.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detunings {
    List(Vec<f64>),
    Range { start: f64, stop: f64, points: usize },
}

impl Detunings {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::List(v) => v.clone(),
            Self::Range { start, stop, points } => match points {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|i| start + (stop - start) * i as f64 / (*n - 1) as f64).collect(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dipole {
    SigmaPlus,
    SigmaMinus,
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    pub nx: usize,
    pub ny: usize,
    pub spacing: Length,
    pub sigma_xy: Length,
    pub sigma_z: Length,
    /// One disorder realization shared by all trajectories.
    pub frozen_disorder: bool,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            nx: 16,
            ny: 16,
            spacing: Length::Nm(532.0),
            sigma_xy: Length::Nm(0.0),
            sigma_z: Length::Nm(0.0),
            frozen_disorder: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeciesConfig {
    pub wavelength: Length,
    /// Γ_e; `gamma` units are not allowed here.
    pub linewidth: Frequency,
    pub dipole: Dipole,
}

impl Default for SpeciesConfig {
    fn default() -> Self {
        Self { wavelength: Length::Nm(780.0), linewidth: Frequency::Mhz(6.0), dipole: Dipole::SigmaPlus }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub duration: Duration,
    pub mean_photons: f64,
    pub waist: Length,
    pub detunings: Detunings,
    /// Global phase of the probe envelope (rad).
    pub phase: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            duration: Duration::Us(2.0),
            mean_photons: 1.0,
            waist: Length::Lambda(3.0),
            detunings: Detunings::Range { start: -1.0, stop: 1.0, points: 41 },
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    TwoLevel,
    #[serde(alias = "scheme-a", alias = "scheme-b")]
    FourLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeBlock {
    pub kind: SchemeKind,
    /// Two-level only: keep the doubly-excited sector.
    pub include_doubles: bool,
    pub drive_rabi: Frequency,
    pub drive_detuning: Frequency,
    /// Propagation direction of the drive; normalized internally.
    pub drive_direction: [f64; 3],
    pub drive_wavelength: Length,
    pub cavity_coupling: Frequency,
    pub cavity_detuning: Frequency,
    pub photon_number: u32,
    pub gamma_s: Frequency,
    pub gamma_r: Frequency,
}

impl Default for SchemeBlock {
    fn default() -> Self {
        Self {
            kind: SchemeKind::TwoLevel,
            include_doubles: false,
            drive_rabi: Frequency::Mhz(0.0),
            drive_detuning: Frequency::Mhz(0.0),
            drive_direction: [0.0, 0.0, 1.0],
            drive_wavelength: Length::Nm(480.0),
            cavity_coupling: Frequency::Mhz(0.0),
            cavity_detuning: Frequency::Mhz(0.0),
            photon_number: 0,
            gamma_s: Frequency::Gamma(1e-3),
            gamma_r: Frequency::Gamma(1e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub trajectories: usize,
    pub seed: u64,
    pub jump_mode: JumpMode,
    pub propagator: PropagatorKind,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            trajectories: 200,
            seed: 1,
            jump_mode: JumpMode::Stochastic,
            propagator: PropagatorKind::Auto,
            threads: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step; defaults to τ/8.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_step: Option<Duration>,
    /// Output samples per 1/Γ_e.
    pub samples_per_lifetime: f64,
    /// Jump-time resolution in units of 1/Γ_e.
    pub jump_time_tolerance: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rtol: 1e-6, atol: 1e-9, max_step: None, samples_per_lifetime: 40.0, jump_time_tolerance: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Detuning,
    Disorder,
}

/// Which coordinates a disorder sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DisorderAxis {
    /// σ_x = σ_y swept, σ_z held at the array value.
    Xy,
    /// σ_z swept, σ_xy held at the array value.
    Z,
    /// All three swept together.
    Xyz,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub disorder_axis: DisorderAxis,
    /// Disorder standard deviations in nm.
    pub sigmas_nm: Vec<f64>,
    /// Fixed probe detuning of a disorder sweep.
    pub detuning: Frequency,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            kind: SweepKind::Detuning,
            disorder_axis: DisorderAxis::Xy,
            sigmas_nm: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
            detuning: Frequency::Gamma(0.172),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
    /// Also write the ordered lattice positions and the collective decay rates.
    pub diagnostics: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json], diagnostics: false }
    }
}

/// Complete run description. Every field has a default; the defaults describe
/// the ordered 16×16 two-level array probed by a single-photon 2 µs pulse.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Base preset the rest of the file is layered on.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub array: ArrayConfig,
    pub species: SpeciesConfig,
    pub probe: ProbeConfig,
    pub scheme: SchemeBlock,
    pub mc: McConfig,
    pub integrator: IntegratorConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    // Unit-tagged quantities are replaced wholesale so that
                    // `{ mhz = 2 }` can override `{ gamma = 0.1 }`.
                    Some(slot) if slot.is_table() && v.is_table() && !is_tagged(slot) => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

const UNIT_KEYS: [&str; 12] = ["gamma", "mhz", "rad_per_s", "nm", "um", "m", "lambda", "ns", "us", "s", "list", "range"];

fn is_tagged(v: &toml::Value) -> bool {
    v.as_table().is_some_and(|t| t.len() == 1 && t.keys().all(|k| UNIT_KEYS.contains(&k.as_str())))
}

impl RunConfig {
    /// Parses a TOML document. A `preset` (from `preset_override` or the
    /// document itself) supplies the base values.
    pub fn from_toml_str(text: &str, preset_override: Option<&str>) -> Result<Self> {
        let doc: toml::Value = text.parse::<toml::Table>().map(toml::Value::Table).map_err(|e| Error::Config(e.to_string()))?;
        let file_preset = doc.get("preset").and_then(|v| v.as_str()).map(str::to_owned);
        let name = preset_override.map(str::to_owned).or(file_preset);
        let mut base = match &name {
            Some(n) => toml::Value::try_from(super::presets::preset(n)?).map_err(|e| Error::Config(e.to_string()))?,
            None => toml::Value::Table(toml::Table::new()),
        };
        merge(&mut base, doc);
        let mut cfg: RunConfig = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.preset = name;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path, preset_override: Option<&str>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, preset_override)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if (self.array.nx == 0) != (self.array.ny == 0) {
            return bad("array dimensions must both be zero (no atoms) or both positive".into());
        }
        if matches!(self.species.linewidth, Frequency::Gamma(_)) {
            return bad("species.linewidth cannot be given in units of itself".into());
        }
        if self.mc.trajectories == 0 {
            return bad("mc.trajectories must be at least 1".into());
        }
        if self.probe.detunings.values().is_empty() {
            return bad("probe.detunings must not be empty".into());
        }
        if self.scheme.include_doubles && self.scheme.kind == SchemeKind::FourLevel {
            return bad("the doubles sector is only available for two-level atoms".into());
        }
        if !(self.integrator.samples_per_lifetime > 0.0) || !(self.integrator.jump_time_tolerance > 0.0) {
            return bad("integrator sampling parameters must be positive".into());
        }
        if self.sweep.sigmas_nm.iter().any(|s| !(*s >= 0.0)) {
            return bad("disorder sweep values must be non-negative".into());
        }
        self.species()?;
        self.scheme_config(0.0)?;
        Ok(())
    }

    pub fn species(&self) -> Result<AtomSpecies> {
        let lambda = self.species.wavelength.meters(f64::NAN);
        let gamma = self.species.linewidth.rad_per_s(f64::NAN);
        let d = match self.species.dipole {
            Dipole::SigmaPlus => sigma_plus(),
            Dipole::SigmaMinus => sigma_minus(),
            Dipole::X => nalgebra::Vector3::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)),
            Dipole::Y => nalgebra::Vector3::new(C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)),
            Dipole::Z => nalgebra::Vector3::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)),
        };
        AtomSpecies::new(lambda, gamma, d)
    }

    pub fn lattice_spacing(&self) -> Result<f64> {
        Ok(self.array.spacing.meters(self.species()?.lambda_e))
    }

    pub fn sigmas(&self) -> Result<(f64, f64)> {
        let lambda = self.species()?.lambda_e;
        Ok((self.array.sigma_xy.meters(lambda), self.array.sigma_z.meters(lambda)))
    }

    /// Probe detunings in rad/s.
    pub fn detunings(&self) -> Result<Vec<f64>> {
        let g = self.species()?.gamma_e;
        Ok(self.probe.detunings.values().into_iter().map(|x| x * g).collect())
    }

    pub fn tolerances(&self) -> Result<Tolerances> {
        let tau = self.probe.duration.seconds();
        Ok(Tolerances {
            rtol: self.integrator.rtol,
            atol: self.integrator.atol,
            h_max: self.integrator.max_step.map_or(tau / 8.0, |d| d.seconds()),
        })
    }

    /// Physical scheme at probe detuning `detuning` (rad/s).
    pub fn scheme_config(&self, detuning: f64) -> Result<SchemeConfig> {
        let sp = self.species()?;
        let g = sp.gamma_e;
        let mut probe = ProbePulse::new(self.probe.duration.seconds(), self.probe.mean_photons, detuning)?;
        probe.phase = self.probe.phase;
        let beam = BeamGeometry::new(self.probe.waist.meters(sp.lambda_e), sp.wavenumber())?;
        let s = &self.scheme;
        let variant = match s.kind {
            SchemeKind::TwoLevel => LevelScheme::TwoLevel { include_doubles: s.include_doubles },
            SchemeKind::FourLevel => {
                let dir = Vec3::from(s.drive_direction);
                let norm = dir.norm();
                if !(norm > 0.0) {
                    return Err(Error::Config("scheme.drive_direction must be non-zero".into()));
                }
                let kd = 2.0 * PI / s.drive_wavelength.meters(sp.lambda_e);
                FourLevelParams {
                    drive: DriveField {
                        rabi: C64::from(s.drive_rabi.rad_per_s(g)),
                        detuning: s.drive_detuning.rad_per_s(g),
                        wavevector: dir * (kd / norm),
                    },
                    cavity: CavityCoupling {
                        strength: s.cavity_coupling.rad_per_s(g),
                        detuning: s.cavity_detuning.rad_per_s(g),
                        photon_number: s.photon_number,
                    },
                    gamma_s: s.gamma_s.rad_per_s(g),
                    gamma_r: s.gamma_r.rad_per_s(g),
                }
                .into()
            }
        };
        let cfg = SchemeConfig { variant, probe, beam };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Short hash of everything that influences the numbers (output settings excluded).
    pub fn hash(&self) -> String {
        let mut physics = self.clone();
        physics.output = OutputConfig::default();
        physics.mc.threads = 0;
        physics.preset = None;
        let text = serde_json::to_string(&physics).unwrap_or_default();
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(digest)[..12].to_string()
    }

    pub fn scheme_label(&self) -> String {
        match (self.scheme.kind, self.scheme.include_doubles) {
            (SchemeKind::TwoLevel, false) => "two-level".into(),
            (SchemeKind::TwoLevel, true) => "two-level+doubles".into(),
            (SchemeKind::FourLevel, _) => format!("four-level (n_c = {})", self.scheme.photon_number),
        }
    }
}

impl From<FourLevelParams> for LevelScheme {
    fn from(p: FourLevelParams) -> Self {
        LevelScheme::FourLevel(p)
    }
}
