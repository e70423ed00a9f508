//! Resonant dipole-dipole couplings mediated by the free electromagnetic field.
//!
//! For atoms `j ≠ i` the coherent exchange `V_ji` and the cooperative decay
//! `Γ_ji` are contractions of the free-space dyadic Green's tensor with the
//! (possibly complex) transition dipole:
//!
//! ```text
//! V_ji = (3πΓ_e/k_e) ℘̂*·Re G(r_j, r_i, k_e)·℘̂
//! Γ_ji = (6πΓ_e/k_e) ℘̂*·Im G(r_j, r_i, k_e)·℘̂
//! ```
//!
//! For a real dipole this is the familiar closed form with `(℘̂·r̂)²`; for a
//! circular dipole the contraction produces `|℘̂·r̂|²` instead.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use faer::{Mat, Side};
use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::geometry::{AtomArray, AtomSpecies, Vec3};
use crate::C64;

/// Relative tolerance (in units of Γ_e) for the positive-semidefinite check.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Free-space dyadic Green's tensor with outgoing-wave convention,
///
/// ```text
/// G = e^{ikR}/(4πR) [ (1 + i/kR − 1/(kR)²) I + (−1 − 3i/kR + 3/(kR)²) R̂R̂ ],
/// ```
///
/// with `R = r − r'`. Its imaginary part tends to `k/(6π) I` as `R → 0`, but the
/// tensor itself diverges, so coincident points are rejected.
pub fn green_tensor(r: &Vec3, r_prime: &Vec3, k: f64) -> Result<Matrix3<C64>> {
    let d = r - r_prime;
    let dist = d.norm();
    if dist == 0.0 || k * dist < 1e-12 {
        return Err(Error::SingularSeparation { first: 0, second: 0, separation: dist });
    }
    let x = k * dist;
    let unit = d / dist;
    let (sin, cos) = x.sin_cos();
    let scale = 1.0 / (4.0 * PI * dist);
    let re_iso = scale * (cos * (1.0 - 1.0 / (x * x)) - sin / x);
    let re_aniso = scale * (cos * (-1.0 + 3.0 / (x * x)) + 3.0 * sin / x);
    let (f1, f2) = radiative_terms(x);
    let im_iso = k / (4.0 * PI) * (f1 + f2);
    let im_aniso = k / (4.0 * PI) * (-f1 - 3.0 * f2);
    let iso = C64::new(re_iso, im_iso);
    let aniso = C64::new(re_aniso, im_aniso);
    Ok(Matrix3::from_fn(|a, b| {
        let delta = if a == b { 1.0 } else { 0.0 };
        iso * delta + aniso * (unit[a] * unit[b])
    }))
}

/// `sin x/x` and `cos x/x² − sin x/x³`, using their Taylor series where the
/// closed form cancels.
fn radiative_terms(x: f64) -> (f64, f64) {
    if x < 0.05 {
        let x2 = x * x;
        let f1 = 1.0 - x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0));
        let f2 = -1.0 / 3.0 + x2 / 30.0 - x2 * x2 / 840.0 + x2 * x2 * x2 / 45360.0;
        (f1, f2)
    } else {
        let (sin, cos) = x.sin_cos();
        (sin / x, cos / (x * x) - sin / (x * x * x))
    }
}

/// `V_ji` and `Γ_ji` (rad/s) for a pair at distinct positions.
pub fn pair_coupling(r_j: &Vec3, r_i: &Vec3, species: &AtomSpecies) -> Result<(f64, f64)> {
    let k = species.wavenumber();
    let g = green_tensor(r_j, r_i, k)?;
    let p = &species.dipole;
    let mut re = 0.0;
    let mut im = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            let w = p[a].conj() * p[b];
            // Re/Im are taken on the tensor before contracting with the dipole.
            re += (w * g[(a, b)].re).re;
            im += (w * g[(a, b)].im).re;
        }
    }
    let gamma = species.gamma_e;
    Ok((3.0 * PI * gamma / k * re, 6.0 * PI * gamma / k * im))
}

/// Eigen-decomposition `Γ = Pᵀ diag(Γ_l) P` of the cooperative decay matrix.
#[derive(Debug, Clone)]
pub struct CollectiveChannels {
    /// Collective decay rates Γ_l (rad/s), sorted descending.
    pub rates: Vec<f64>,
    /// Orthonormal rows: jump operator `Σ_l = Σ_j P[l, j] σ_ge^(j)`.
    pub transform: Mat<f64>,
}

/// Dipole-dipole coupling matrices of one array realization.
#[derive(Debug)]
pub struct CouplingKernel {
    /// Coherent exchange V (rad/s); zero diagonal.
    pub v_matrix: Mat<f64>,
    /// Cooperative decay Γ (rad/s); diagonal Γ_e.
    pub gamma_matrix: Mat<f64>,
    pub gamma_e: f64,
    channels: OnceLock<CollectiveChannels>,
}

impl Clone for CouplingKernel {
    fn clone(&self) -> Self {
        let channels = OnceLock::new();
        if let Some(c) = self.channels.get() {
            let _ = channels.set(c.clone());
        }
        Self {
            v_matrix: self.v_matrix.clone(),
            gamma_matrix: self.gamma_matrix.clone(),
            gamma_e: self.gamma_e,
            channels,
        }
    }
}

impl CouplingKernel {
    pub fn len(&self) -> usize {
        self.v_matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Collective decay channels, computed on first use and cached.
    pub fn channels(&self) -> Result<&CollectiveChannels> {
        if let Some(c) = self.channels.get() {
            return Ok(c);
        }
        let computed = collective_channels(&self.gamma_matrix, self.gamma_e)?;
        Ok(self.channels.get_or_init(|| computed))
    }

    /// Writes `channel,rate_over_gamma_e`, one row per collective channel.
    pub fn write_channels_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let ch = self.channels()?;
        writeln!(out, "channel,rate_over_gamma_e")?;
        for (l, rate) in ch.rates.iter().enumerate() {
            writeln!(out, "{l},{:.12e}", rate / self.gamma_e)?;
        }
        Ok(())
    }
}

/// Fills V and Γ for every pair of atoms and validates the channel decomposition.
pub fn build_coupling(array: &AtomArray) -> Result<CouplingKernel> {
    let kernel = build_coupling_matrices(array)?;
    kernel.channels()?;
    Ok(kernel)
}

/// Like [`build_coupling`] but defers the channel decomposition until it is
/// requested. The singles-only solvers never need it.
pub fn build_coupling_matrices(array: &AtomArray) -> Result<CouplingKernel> {
    let n = array.len();
    let gamma_e = array.species.gamma_e;
    let mut v = Mat::<f64>::zeros(n, n);
    let mut g = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        g[(j, j)] = gamma_e;
        for i in 0..j {
            let (vji, gji) = pair_coupling(&array.positions[j], &array.positions[i], &array.species)
                .map_err(|e| match e {
                    Error::SingularSeparation { separation, .. } => {
                        Error::SingularSeparation { first: i, second: j, separation }
                    }
                    other => other,
                })?;
            v[(j, i)] = vji;
            v[(i, j)] = vji;
            g[(j, i)] = gji;
            g[(i, j)] = gji;
        }
    }
    Ok(CouplingKernel {
        v_matrix: v,
        gamma_matrix: g,
        gamma_e,
        channels: OnceLock::new(),
    })
}

/// Diagonalizes the symmetric decay matrix into collective channels sorted by
/// descending rate. Negative rates below `−1e-10·Γ_e` indicate a broken kernel.
pub fn collective_channels(gamma_matrix: &Mat<f64>, gamma_e: f64) -> Result<CollectiveChannels> {
    let n = gamma_matrix.nrows();
    if n == 0 {
        return Ok(CollectiveChannels { rates: Vec::new(), transform: Mat::zeros(0, 0) });
    }
    let evd = gamma_matrix
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let min = (0..n).map(|l| s[l]).fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE * gamma_e {
        return Err(Error::NotPositiveSemidefinite { eigenvalue: min });
    }
    // faer sorts ascending; channels are reported descending.
    let rates: Vec<f64> = (0..n).rev().map(|l| s[l]).collect();
    let transform = Mat::from_fn(n, n, |l, j| u[(j, n - 1 - l)]);
    Ok(CollectiveChannels { rates, transform })
}
