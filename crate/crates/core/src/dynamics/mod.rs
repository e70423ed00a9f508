//! Stochastic-wavefunction dynamics of the probe-driven array.
//!
//! Amplitudes are kept in a frame rotating with the probe, where
//! `|Ψ⟩ = a|G⟩ + Σ_j b_j|e_j⟩ + Σ_{i<j} B_ij|e_i e_j⟩ + Σ_j c_j|s_j⟩ + Σ_j d_j|r_j⟩`
//! and the non-Hermitian evolution reads
//!
//! ```text
//! ȧ    = i Σ_j Ω_j* b_j
//! ḃ_j  = iΔ_p b_j + Σ_j' K_jj' b_j' + iΩ_j a + iΩ_d* e^{−ik_d·r_j} c_j + i Σ_{i≠j} Ω_i* B_ij
//! ċ_j  = (i(Δ_p+Δ_d) − Γ_s/2) c_j + iΩ_d e^{ik_d·r_j} b_j + iΩ_c* d_j
//! ḋ_j  = (i(Δ_p+Δ_d+Δ_c) − Γ_r/2) d_j + iΩ_c c_j
//! Ḃ_ij = (2iΔ_p − Γ_e) B_ij + Σ_{k≠i,j} (K_ik B_kj + K_jk B_ik) + iΩ_i b_j + iΩ_j b_i
//! ```
//!
//! with `K = −Γ/2 + iV` and `Ω_j = C·g(r_j)·α_p(t)`.
//!
//! Two interchangeable backends integrate these equations: [`direct`] works
//! in the atom basis and supports every sector; [`modal`] diagonalizes `K`
//! once per array realization, which makes each right-hand side evaluation
//! linear in `N` for the single-excitation models.

pub mod direct;
pub mod integrator;
pub mod modal;
pub mod trajectory;

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::AtomArray;
use crate::kernel::CouplingKernel;
use crate::modes::{BeamGeometry, CavityCoupling, DriveField, ModeOverlaps, ProbePulse};
use crate::C64;

pub use integrator::{DenseStep, IntegrationStats, Tolerances};
pub use trajectory::{evolve_trajectory, EvolveOptions, JumpEvent, TimeGrid, TrajectoryOutcome};

use direct::DirectModel;
use modal::ModalModel;

/// Four-level ladder parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourLevelParams {
    pub drive: DriveField,
    pub cavity: CavityCoupling,
    /// Γ_s (rad/s).
    pub gamma_s: f64,
    /// Γ_r (rad/s).
    pub gamma_r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LevelScheme {
    TwoLevel { include_doubles: bool },
    FourLevel(FourLevelParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub variant: LevelScheme,
    pub probe: ProbePulse,
    pub beam: BeamGeometry,
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        self.probe.validate()?;
        if let LevelScheme::FourLevel(p) = &self.variant {
            if !(p.gamma_s >= 0.0 && p.gamma_r >= 0.0) {
                return Err(invalid("Rydberg decay rates must be non-negative"));
            }
            let finite = p.drive.rabi.re.is_finite()
                && p.drive.rabi.im.is_finite()
                && p.drive.detuning.is_finite()
                && p.cavity.strength.is_finite()
                && p.cavity.detuning.is_finite();
            if !finite {
                return Err(invalid("drive and cavity parameters must be finite"));
            }
        }
        Ok(())
    }

    pub fn has_doubles(&self) -> bool {
        matches!(self.variant, LevelScheme::TwoLevel { include_doubles: true })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpMode {
    Stochastic,
    NoJump,
}

/// Choice of integration backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagatorKind {
    /// Modal for single-excitation models with at least
    /// [`MODAL_THRESHOLD`] atoms, direct otherwise.
    #[default]
    Auto,
    Direct,
    Modal,
}

/// Smallest array for which [`PropagatorKind::Auto`] picks the modal backend.
pub const MODAL_THRESHOLD: usize = 16;

/// Atomic amplitudes in the probe-rotating frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub a: C64,
    pub b: Vec<C64>,
    /// Doubly-excited amplitudes as a symmetric N×N column-major matrix with
    /// zero diagonal; `b2[i + N·j] = B_ij`.
    pub b2: Option<Vec<C64>>,
    pub c: Option<Vec<C64>>,
    pub d: Option<Vec<C64>>,
    pub t: f64,
    pub norm_sqr: f64,
    pub jump_count: usize,
}

impl TrajectoryState {
    /// Collective ground state |G⟩ with the sectors required by `variant`.
    pub fn ground(n: usize, variant: &LevelScheme) -> Self {
        let zeros = |len| vec![C64::new(0.0, 0.0); len];
        let (b2, c, d) = match variant {
            LevelScheme::TwoLevel { include_doubles: true } => (Some(zeros(n * n)), None, None),
            LevelScheme::TwoLevel { include_doubles: false } => (None, None, None),
            LevelScheme::FourLevel(_) => (None, Some(zeros(n)), Some(zeros(n))),
        };
        Self {
            a: C64::new(1.0, 0.0),
            b: zeros(n),
            b2,
            c,
            d,
            t: 0.0,
            norm_sqr: 1.0,
            jump_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Recomputed ‖Ψ‖², counting each unordered pair of the doubles sector once.
    pub fn compute_norm_sqr(&self) -> f64 {
        let sq = |v: &[C64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>();
        let mut s = self.a.norm_sqr() + sq(&self.b);
        if let Some(b2) = &self.b2 {
            s += 0.5 * sq(b2);
        }
        if let Some(c) = &self.c {
            s += sq(c);
        }
        if let Some(d) = &self.d {
            s += sq(d);
        }
        s
    }

    /// Returns a copy scaled to unit norm.
    pub fn normalized(&self) -> Self {
        let n2 = self.compute_norm_sqr();
        let mut out = self.clone();
        if n2 > 0.0 {
            let s = 1.0 / n2.sqrt();
            out.a *= s;
            for v in out.b.iter_mut() {
                *v *= s;
            }
            for sector in [&mut out.b2, &mut out.c, &mut out.d].into_iter().flatten() {
                for v in sector.iter_mut() {
                    *v *= s;
                }
            }
            out.norm_sqr = 1.0;
        }
        out
    }

    /// Flattens into the direct-backend layout.
    pub(crate) fn to_flat(&self) -> Vec<C64> {
        let mut y = vec![self.a];
        y.extend_from_slice(&self.b);
        for sector in [&self.b2, &self.c, &self.d].into_iter().flatten() {
            y.extend_from_slice(sector);
        }
        y
    }

    pub(crate) fn check_shape(&self, n: usize, variant: &LevelScheme) -> Result<()> {
        let want = Self::ground(n, variant);
        let len = |v: &Option<Vec<C64>>| v.as_ref().map(Vec::len);
        if self.b.len() != n
            || len(&self.b2) != len(&want.b2)
            || len(&self.c) != len(&want.c)
            || len(&self.d) != len(&want.d)
        {
            return Err(invalid(format!(
                "state dimensions do not match N = {n} and the configured level scheme"
            )));
        }
        Ok(())
    }
}

/// Normalized sector populations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Populations {
    pub ground: f64,
    pub single: f64,
    pub double: f64,
    pub rydberg: f64,
}

/// Readout at one instant: `‖Ψ‖²` and the unnormalized mode projections
/// `Σ_j u_j*·(ā*b̃_j + Σ_i b̃_i*B̃_ij)` for the forward and backward modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub norm_sqr: f64,
    pub forward: C64,
    pub backward: C64,
}

/// Which decay produced a quantum jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpChannel {
    /// Projection onto |G⟩ (single-excitation truncation).
    Ground,
    /// Collective channel `l` in the doubles model.
    Collective(usize),
}

/// Four-level couplings resolved against one array realization.
#[derive(Debug, Clone)]
pub(crate) struct Ladder {
    pub drive_rabi: C64,
    pub drive_detuning: f64,
    /// e^{ik_d·r_j}.
    pub drive_phase: Vec<C64>,
    pub cavity_rabi: C64,
    pub cavity_detuning: f64,
    pub gamma_s: f64,
    pub gamma_r: f64,
}

impl Ladder {
    fn new(array: &AtomArray, p: &FourLevelParams) -> Self {
        Self {
            drive_rabi: p.drive.rabi,
            drive_detuning: p.drive.detuning,
            drive_phase: array.positions.iter().map(|r| p.drive.phase_at(r)).collect(),
            cavity_rabi: C64::from(p.cavity.rabi()),
            cavity_detuning: p.cavity.detuning,
            gamma_s: p.gamma_s,
            gamma_r: p.gamma_r,
        }
    }
}

/// Contract between the trajectory driver and a backend.
pub(crate) trait Model {
    /// Per-trajectory scratch data.
    type Work;

    fn dim(&self) -> usize;
    fn new_work(&self) -> Self::Work;
    fn rhs(&self, pulse: &ProbePulse, t: f64, y: &[C64], dy: &mut [C64]);
    fn ground(&self, y: &mut [C64]);
    fn from_state(&self, state: &TrajectoryState) -> Vec<C64>;
    fn to_state(&self, y: &[C64], t: f64) -> TrajectoryState;
    /// Exact readout of a full state.
    fn observe_state(&self, y: &[C64], work: &mut Self::Work) -> Observation;
    /// Called once a state `y` with derivative `dy` becomes the start of the
    /// next step (initialization or after a jump).
    fn restart(&self, y: &[C64], dy: &[C64], work: &mut Self::Work);
    /// Prepares interior evaluation of an accepted step ending in `(y1, dy1)`
    /// and returns the exact end-point norm.
    fn end_step(&self, step: &DenseStep, y1: &[C64], dy1: &[C64], work: &mut Self::Work) -> f64;
    /// Exact ‖Ψ‖² inside the prepared step.
    fn norm_at(&self, step: &DenseStep, theta: f64, work: &mut Self::Work) -> f64;
    /// Readout inside the prepared step.
    fn observe_at(&self, step: &DenseStep, theta: f64, work: &mut Self::Work) -> Observation;
    /// Populations at the end of the prepared step.
    fn end_populations(&self, work: &Self::Work) -> Populations;
    /// Promotes the end of the prepared step to the start of the next one.
    fn commit(&self, work: &mut Self::Work);
    /// Replaces `y` by the normalized post-jump state.
    fn jump(&self, y: &mut [C64], rng: &mut ChaCha8Rng) -> Result<JumpChannel>;
}

#[derive(Debug, Clone)]
enum Backend {
    Direct(Arc<DirectModel>),
    Modal(Arc<ModalModel>),
}

/// Detuning-independent dynamics for one array realization.
#[derive(Debug, Clone)]
pub struct Dynamics {
    n: usize,
    gamma_e: f64,
    variant: LevelScheme,
    backend: Backend,
}

impl Dynamics {
    pub fn new(
        array: &AtomArray,
        kernel: &CouplingKernel,
        scheme: &SchemeConfig,
        kind: PropagatorKind,
    ) -> Result<Self> {
        scheme.validate()?;
        if kernel.len() != array.len() {
            return Err(invalid("kernel and array sizes differ"));
        }
        let overlaps = ModeOverlaps::new(array, &scheme.beam);
        Self::with_overlaps(array, kernel, scheme, overlaps, kind)
    }

    /// Like [`Dynamics::new`] with explicit per-atom probe couplings.
    pub fn with_overlaps(
        array: &AtomArray,
        kernel: &CouplingKernel,
        scheme: &SchemeConfig,
        overlaps: ModeOverlaps,
        kind: PropagatorKind,
    ) -> Result<Self> {
        let n = array.len();
        if overlaps.len() != n {
            return Err(invalid("mode overlaps and array sizes differ"));
        }
        let ladder = match &scheme.variant {
            LevelScheme::FourLevel(p) => Some(Ladder::new(array, p)),
            LevelScheme::TwoLevel { .. } => None,
        };
        let doubles = scheme.has_doubles();
        let use_modal = match kind {
            PropagatorKind::Direct => false,
            PropagatorKind::Modal => {
                if doubles {
                    return Err(invalid("the modal backend supports single excitations only"));
                }
                true
            }
            PropagatorKind::Auto => !doubles && n >= MODAL_THRESHOLD,
        };
        let backend = if use_modal {
            match ModalModel::new(kernel, &overlaps, ladder.clone()) {
                Ok(m) => Backend::Modal(Arc::new(m)),
                Err(e) if kind == PropagatorKind::Auto => {
                    log::warn!("modal decomposition unusable ({e}); using the direct backend");
                    Backend::Direct(Arc::new(DirectModel::new(kernel, overlaps, ladder, doubles)?))
                }
                Err(e) => return Err(e),
            }
        } else {
            Backend::Direct(Arc::new(DirectModel::new(kernel, overlaps, ladder, doubles)?))
        };
        Ok(Self { n, gamma_e: kernel.gamma_e, variant: scheme.variant, backend })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn gamma_e(&self) -> f64 {
        self.gamma_e
    }

    pub fn variant(&self) -> &LevelScheme {
        &self.variant
    }

    pub fn is_modal(&self) -> bool {
        matches!(self.backend, Backend::Modal(_))
    }

    pub fn ground_state(&self) -> TrajectoryState {
        TrajectoryState::ground(self.n, &self.variant)
    }

    /// Time derivative of `state` in atom-basis layout.
    pub fn derivative(&self, state: &TrajectoryState, pulse: &ProbePulse, t: f64) -> Result<TrajectoryState> {
        state.check_shape(self.n, &self.variant)?;
        match &self.backend {
            Backend::Direct(m) => {
                let y = m.from_state(state);
                let mut dy = vec![C64::new(0.0, 0.0); y.len()];
                m.rhs(pulse, t, &y, &mut dy);
                Ok(m.to_state(&dy, t))
            }
            Backend::Modal(m) => {
                let y = m.from_state(state);
                let mut dy = vec![C64::new(0.0, 0.0); y.len()];
                m.rhs(pulse, t, &y, &mut dy);
                Ok(m.to_state(&dy, t))
            }
        }
    }

    /// Integrates one trajectory over `grid`.
    pub fn evolve(
        &self,
        initial: &TrajectoryState,
        pulse: &ProbePulse,
        grid: &TimeGrid,
        mode: JumpMode,
        rng: &mut ChaCha8Rng,
        opts: &EvolveOptions,
    ) -> Result<TrajectoryOutcome> {
        initial.check_shape(self.n, &self.variant)?;
        pulse.validate()?;
        match &self.backend {
            Backend::Direct(m) => trajectory::run(m.as_ref(), self.gamma_e, initial, pulse, grid, mode, rng, opts),
            Backend::Modal(m) => trajectory::run(m.as_ref(), self.gamma_e, initial, pulse, grid, mode, rng, opts),
        }
    }
}

/// ∂ₜΨ for the two-level scheme in the atom basis.
pub fn derivative_two_level(
    state: &TrajectoryState,
    t: f64,
    array: &AtomArray,
    kernel: &CouplingKernel,
    scheme: &SchemeConfig,
) -> Result<TrajectoryState> {
    if !matches!(scheme.variant, LevelScheme::TwoLevel { .. }) {
        return Err(invalid("derivative_two_level needs a two-level scheme"));
    }
    Dynamics::new(array, kernel, scheme, PropagatorKind::Direct)?.derivative(state, &scheme.probe, t)
}

/// ∂ₜΨ for the four-level scheme in the atom basis.
pub fn derivative_four_level(
    state: &TrajectoryState,
    t: f64,
    array: &AtomArray,
    kernel: &CouplingKernel,
    scheme: &SchemeConfig,
) -> Result<TrajectoryState> {
    if !matches!(scheme.variant, LevelScheme::FourLevel(_)) {
        return Err(invalid("derivative_four_level needs a four-level scheme"));
    }
    Dynamics::new(array, kernel, scheme, PropagatorKind::Direct)?.derivative(state, &scheme.probe, t)
}

/// Draws an index with probability proportional to `weights`.
pub(crate) fn sample_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> Result<usize> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::IntegrationFailure {
            time: f64::NAN,
            reason: "quantum jump with vanishing decay weight".into(),
        });
    }
    let target = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return Ok(i);
        }
    }
    Ok(weights.iter().rposition(|w| *w > 0.0).unwrap_or(0))
}
