//! Square lattices of atoms with optional static Gaussian position disorder.

use std::io::Write;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::C64;

pub type Vec3 = Vector3<f64>;

/// Optical transition shared by every atom of an array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecies {
    /// Transition wavelength (m).
    pub lambda_e: f64,
    /// Free-space spontaneous decay rate (rad/s).
    pub gamma_e: f64,
    /// Unit-norm (complex) transition dipole orientation.
    pub dipole: Vector3<C64>,
}

impl AtomSpecies {
    pub fn new(lambda_e: f64, gamma_e: f64, dipole: Vector3<C64>) -> Result<Self> {
        if !(lambda_e > 0.0 && lambda_e.is_finite()) {
            return Err(invalid(format!("wavelength must be positive, got {lambda_e}")));
        }
        if !(gamma_e > 0.0 && gamma_e.is_finite()) {
            return Err(invalid(format!("decay rate must be positive, got {gamma_e}")));
        }
        let norm = dipole.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("dipole orientation must be a unit vector, norm = {norm}")));
        }
        Ok(Self { lambda_e, gamma_e, dipole })
    }

    /// Rb-87 D2 line driven on the closed σ+ transition.
    pub fn rubidium87() -> Self {
        Self {
            lambda_e: 780e-9,
            gamma_e: 6.0 * crate::MHZ,
            dipole: sigma_plus(),
        }
    }

    /// k_e = 2π/λ_e.
    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.lambda_e
    }
}

/// (x̂ + iŷ)/√2
pub fn sigma_plus() -> Vector3<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Vector3::new(C64::new(s, 0.0), C64::new(0.0, s), C64::new(0.0, 0.0))
}

/// (x̂ − iŷ)/√2
pub fn sigma_minus() -> Vector3<C64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Vector3::new(C64::new(s, 0.0), C64::new(0.0, -s), C64::new(0.0, 0.0))
}

/// Standard deviations of the static position disorder (m).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Disorder {
    pub sigma_xy: f64,
    pub sigma_z: f64,
}

impl Disorder {
    pub fn is_zero(&self) -> bool {
        self.sigma_xy == 0.0 && self.sigma_z == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomArray {
    pub species: AtomSpecies,
    pub positions: Vec<Vec3>,
    /// Lattice sites the atoms are displaced from.
    pub equilibrium: Vec<Vec3>,
    pub lattice_spacing: f64,
    pub shape: (usize, usize),
    pub disorder: Disorder,
    /// Seed of the disorder draw, `None` for an ordered array.
    pub seed: Option<u64>,
}

/// Centered `n_x × n_y` square grid of pitch `spacing` in the z = 0 plane.
///
/// Atom `j = ix * n_y + iy` sits at `((ix − (n_x−1)/2)·s, (iy − (n_y−1)/2)·s, 0)`.
pub fn build_square_lattice(
    n_x: usize,
    n_y: usize,
    spacing: f64,
    species: AtomSpecies,
) -> Result<AtomArray> {
    if n_x == 0 || n_y == 0 {
        return Err(invalid(format!("lattice dimensions must be at least 1, got {n_x}×{n_y}")));
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return Err(invalid(format!("lattice spacing must be positive, got {spacing}")));
    }
    let cx = (n_x as f64 - 1.0) / 2.0;
    let cy = (n_y as f64 - 1.0) / 2.0;
    let positions: Vec<Vec3> = (0..n_x)
        .flat_map(|ix| {
            (0..n_y).map(move |iy| {
                Vec3::new((ix as f64 - cx) * spacing, (iy as f64 - cy) * spacing, 0.0)
            })
        })
        .collect();
    Ok(AtomArray {
        species,
        equilibrium: positions.clone(),
        positions,
        lattice_spacing: spacing,
        shape: (n_x, n_y),
        disorder: Disorder::default(),
        seed: None,
    })
}

/// Displace every atom of `array` from its lattice site by independent
/// zero-mean Gaussian draws: σ_xy for x and y, σ_z for z.
///
/// The draw always starts from the equilibrium sites, so applying disorder to
/// an already disordered array replaces the previous realization.
pub fn apply_disorder(array: &AtomArray, sigma_xy: f64, sigma_z: f64, seed: u64) -> Result<AtomArray> {
    if !(sigma_xy >= 0.0 && sigma_xy.is_finite()) || !(sigma_z >= 0.0 && sigma_z.is_finite()) {
        return Err(invalid(format!(
            "disorder widths must be non-negative, got σ_xy = {sigma_xy}, σ_z = {sigma_z}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dxy = Normal::new(0.0, sigma_xy).map_err(|e| invalid(e.to_string()))?;
    let dz = Normal::new(0.0, sigma_z).map_err(|e| invalid(e.to_string()))?;
    let positions = array
        .equilibrium
        .iter()
        .map(|site| {
            let x = dxy.sample(&mut rng);
            let y = dxy.sample(&mut rng);
            let z = dz.sample(&mut rng);
            site + Vec3::new(x, y, z)
        })
        .collect();
    Ok(AtomArray {
        positions,
        disorder: Disorder { sigma_xy, sigma_z },
        seed: Some(seed),
        ..array.clone()
    })
}

impl AtomArray {
    /// An array without atoms; every pipeline stage treats it as free space.
    pub fn empty(species: AtomSpecies, spacing: f64) -> Self {
        Self {
            species,
            positions: Vec::new(),
            equilibrium: Vec::new(),
            lattice_spacing: spacing,
            shape: (0, 0),
            disorder: Disorder::default(),
            seed: None,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Writes `x,y,z` in meters, one atom per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,y,z")?;
        for p in &self.positions {
            writeln!(out, "{:.12e},{:.12e},{:.12e}", p.x, p.y, p.z)?;
        }
        Ok(())
    }
}
