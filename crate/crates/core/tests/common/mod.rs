#![allow(dead_code)]

use atom_mirror::dynamics::{
    Dynamics, EvolveOptions, FourLevelParams, JumpMode, LevelScheme, PropagatorKind, SchemeConfig, TimeGrid,
    TrajectoryState,
};
use atom_mirror::geometry::{build_square_lattice, AtomArray, AtomSpecies, Vec3};
use atom_mirror::kernel::{build_coupling, CouplingKernel};
use atom_mirror::modes::{probe_rabi, BeamGeometry, ProbePulse};
use atom_mirror::C64;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type CMat = DMatrix<C64>;

pub fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

pub fn species() -> AtomSpecies {
    AtomSpecies::rubidium87()
}

pub fn lattice(nx: usize, ny: usize) -> AtomArray {
    build_square_lattice(nx, ny, 532e-9, species()).unwrap()
}

/// Array with explicit positions.
pub fn array_at(positions: &[Vec3]) -> AtomArray {
    let mut a = build_square_lattice(1, positions.len(), 532e-9, species()).unwrap();
    a.positions = positions.to_vec();
    a.equilibrium = positions.to_vec();
    a
}

pub fn scheme(variant: LevelScheme, tau: f64, photons: f64, detuning: f64, waist: f64) -> SchemeConfig {
    let sp = species();
    SchemeConfig {
        variant,
        probe: ProbePulse::new(tau, photons, detuning).unwrap(),
        beam: BeamGeometry::new(waist, sp.wavenumber()).unwrap(),
    }
}

/// Layout of the basis shared by the trajectory state and the density matrix:
/// `G`, then `e_j`, then either the pairs `(i<j)` or `s_j` followed by `r_j`.
#[derive(Debug, Clone)]
pub struct Basis {
    pub n: usize,
    pub pairs: Vec<(usize, usize)>,
    pub four_level: bool,
}

impl Basis {
    pub fn new(n: usize, variant: &LevelScheme) -> Self {
        let doubles = matches!(variant, LevelScheme::TwoLevel { include_doubles: true });
        let pairs = if doubles {
            (0..n).flat_map(|j| (0..j).map(move |i| (i, j))).collect()
        } else {
            Vec::new()
        };
        Self { n, pairs, four_level: matches!(variant, LevelScheme::FourLevel(_)) }
    }

    pub fn dim(&self) -> usize {
        1 + self.n + self.pairs.len() + if self.four_level { 2 * self.n } else { 0 }
    }

    pub fn e(&self, j: usize) -> usize {
        1 + j
    }

    pub fn pair(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        1 + self.n + self.pairs.iter().position(|&p| p == (i, j)).unwrap()
    }

    pub fn s(&self, j: usize) -> usize {
        1 + self.n + j
    }

    pub fn r(&self, j: usize) -> usize {
        1 + 2 * self.n + j
    }

    /// σ_ge^j on this basis.
    pub fn lowering(&self, j: usize) -> CMat {
        let mut m = CMat::zeros(self.dim(), self.dim());
        m[(0, self.e(j))] = C64::new(1.0, 0.0);
        for &(a, b) in &self.pairs {
            if a == j {
                m[(self.e(b), self.pair(a, b))] = C64::new(1.0, 0.0);
            } else if b == j {
                m[(self.e(a), self.pair(a, b))] = C64::new(1.0, 0.0);
            }
        }
        m
    }

    pub fn state_vector(&self, st: &TrajectoryState) -> Vec<C64> {
        let mut v = vec![zero(); self.dim()];
        v[0] = st.a;
        for j in 0..self.n {
            v[self.e(j)] = st.b[j];
        }
        if let Some(b2) = &st.b2 {
            for &(i, j) in &self.pairs {
                v[self.pair(i, j)] = b2[i + self.n * j];
            }
        }
        if let (Some(c), Some(d)) = (&st.c, &st.d) {
            for j in 0..self.n {
                v[self.s(j)] = c[j];
                v[self.r(j)] = d[j];
            }
        }
        v
    }
}

/// Quantities compared between the ensemble and the master equation.
#[derive(Debug, Clone)]
pub struct Observables {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
}

pub fn observables_of(basis: &Basis, rho: &CMat) -> Observables {
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let pop = |idx: &mut dyn Iterator<Item = usize>| idx.map(|k| rho[(k, k)].re).sum::<f64>();
    labels.push("P_G".into());
    values.push(rho[(0, 0)].re);
    labels.push("P_e".into());
    values.push(pop(&mut (0..basis.n).map(|j| basis.e(j))));
    if !basis.pairs.is_empty() {
        labels.push("P_ee".into());
        values.push(pop(&mut basis.pairs.iter().map(|&(i, j)| basis.pair(i, j))));
    }
    if basis.four_level {
        labels.push("P_s".into());
        values.push(pop(&mut (0..basis.n).map(|j| basis.s(j))));
        labels.push("P_r".into());
        values.push(pop(&mut (0..basis.n).map(|j| basis.r(j))));
    }
    for j in 0..basis.n {
        let pol = (rho * basis.lowering(j)).trace();
        labels.push(format!("Re σ_{j}"));
        values.push(pol.re);
        labels.push(format!("Im σ_{j}"));
        values.push(pol.im);
    }
    Observables { labels, values }
}

pub fn projector(v: &[C64]) -> CMat {
    let n = v.len();
    CMat::from_fn(n, n, |a, b| v[a] * v[b].conj())
}

/// Lindblad master equation generating the same conditional dynamics as the
/// trajectory solver, integrated with fixed-step RK4.
pub struct MasterEquation {
    pub basis: Basis,
    h_static: CMat,
    /// `−σ_eg^j` coefficient matrices for the probe term, one per atom.
    raise: Vec<CMat>,
    rabi: Vec<Box<dyn Fn(f64) -> C64>>,
    /// `(rate matrix, lowering operators)` of the collective dissipator.
    gamma: DMatrix<f64>,
    lower: Vec<CMat>,
    /// Independent jump operators, already scaled by √rate.
    jumps: Vec<CMat>,
}

impl MasterEquation {
    pub fn new(array: &AtomArray, kernel: &CouplingKernel, scheme: &SchemeConfig) -> Self {
        let n = array.len();
        let basis = Basis::new(n, &scheme.variant);
        let d = basis.dim();
        let dp = scheme.probe.detuning;
        let lower: Vec<CMat> = (0..n).map(|j| basis.lowering(j)).collect();
        let raise: Vec<CMat> = lower.iter().map(|l| l.adjoint()).collect();
        let mut h = CMat::zeros(d, d);
        for j in 0..n {
            h -= (&raise[j] * &lower[j]) * C64::from(dp);
            for i in 0..n {
                if i != j {
                    h -= (&raise[i] * &lower[j]) * C64::from(kernel.v_matrix[(i, j)]);
                }
            }
        }
        let mut jumps = Vec::new();
        if let LevelScheme::FourLevel(FourLevelParams { drive, cavity, gamma_s, gamma_r }) = scheme.variant {
            let oc = C64::from(cavity.rabi());
            for j in 0..n {
                let (e, s, r) = (basis.e(j), basis.s(j), basis.r(j));
                h[(s, s)] -= C64::from(dp + drive.detuning);
                h[(r, r)] -= C64::from(dp + drive.detuning + cavity.detuning);
                let od = drive.rabi * drive.phase_at(&array.positions[j]);
                h[(s, e)] -= od;
                h[(e, s)] -= od.conj();
                h[(r, s)] -= oc;
                h[(s, r)] -= oc.conj();
                let mut ls = CMat::zeros(d, d);
                ls[(0, s)] = C64::from(gamma_s.sqrt());
                jumps.push(ls);
                let mut lr = CMat::zeros(d, d);
                lr[(0, r)] = C64::from(gamma_r.sqrt());
                jumps.push(lr);
            }
        }
        let rabi = array
            .positions
            .iter()
            .map(|r| {
                let (r, probe, beam, sp) = (*r, scheme.probe, scheme.beam, array.species.clone());
                Box::new(move |t: f64| probe_rabi(&r, t, &probe, &beam, &sp)) as Box<dyn Fn(f64) -> C64>
            })
            .collect();
        let gamma = DMatrix::from_fn(n, n, |i, j| kernel.gamma_matrix[(i, j)]);
        Self { basis, h_static: h, raise, rabi, gamma, lower, jumps }
    }

    fn hamiltonian(&self, t: f64) -> CMat {
        let mut h = self.h_static.clone();
        for (j, rabi) in self.rabi.iter().enumerate() {
            let om = rabi(t);
            h -= &self.raise[j] * om;
            h -= &self.lower[j] * om.conj();
        }
        h
    }

    pub fn rhs(&self, t: f64, rho: &CMat) -> CMat {
        let h = self.hamiltonian(t);
        let i = C64::new(0.0, 1.0);
        let mut out = (&h * rho - rho * &h) * (-i);
        let n = self.lower.len();
        for a in 0..n {
            for b in 0..n {
                let g = self.gamma[(a, b)];
                if g == 0.0 {
                    continue;
                }
                let la = &self.lower[a];
                let lb_dag = &self.raise[b];
                let k = lb_dag * la;
                out += (la * rho * lb_dag - (&k * rho + rho * &k) * C64::from(0.5)) * C64::from(g);
            }
        }
        for l in &self.jumps {
            let ld = l.adjoint();
            let k = &ld * l;
            out += l * rho * &ld - (&k * rho + rho * &k) * C64::from(0.5);
        }
        out
    }

    /// Total jump rate Tr(Σ L†L ρ).
    pub fn jump_rate(&self, rho: &CMat) -> f64 {
        let n = self.lower.len();
        let mut rate = 0.0;
        for a in 0..n {
            for b in 0..n {
                rate += self.gamma[(a, b)] * (&self.raise[b] * &self.lower[a] * rho).trace().re;
            }
        }
        for l in &self.jumps {
            rate += (l.adjoint() * l * rho).trace().re;
        }
        rate
    }

    /// Integrates from the ground state and returns `ρ` at each of `times`
    /// (sorted) together with `∫ rate dt` up to the last one.
    pub fn solve(&self, t0: f64, times: &[f64], dt: f64) -> (Vec<CMat>, f64) {
        let d = self.basis.dim();
        let mut rho = CMat::zeros(d, d);
        rho[(0, 0)] = C64::new(1.0, 0.0);
        let mut t = t0;
        let mut out = Vec::new();
        let mut jumps = 0.0;
        for &target in times {
            while t < target - 1e-15 {
                let h = dt.min(target - t);
                let r0 = self.jump_rate(&rho);
                let k1 = self.rhs(t, &rho);
                let k2 = self.rhs(t + h / 2.0, &(&rho + &k1 * C64::from(h / 2.0)));
                let k3 = self.rhs(t + h / 2.0, &(&rho + &k2 * C64::from(h / 2.0)));
                let k4 = self.rhs(t + h, &(&rho + &k3 * C64::from(h)));
                rho += (k1 + k2 * C64::from(2.0) + k3 * C64::from(2.0) + k4) * C64::from(h / 6.0);
                jumps += 0.5 * h * (r0 + self.jump_rate(&rho));
                t += h;
            }
            out.push(rho.clone());
        }
        (out, jumps)
    }
}

/// Ensemble means and standard errors of the oracle observables at `times`.
pub struct EnsembleSnapshot {
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub mean_jumps: f64,
    pub jumps_stderr: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn ensemble_snapshots(
    array: &AtomArray,
    kernel: &CouplingKernel,
    scheme: &SchemeConfig,
    kind: PropagatorKind,
    times: &[f64],
    end: f64,
    trajectories: usize,
    seed: u64,
) -> EnsembleSnapshot {
    let dynamics = Dynamics::new(array, kernel, scheme, kind).unwrap();
    let basis = Basis::new(array.len(), &scheme.variant);
    let grid = TimeGrid::new(0.0, end, 3).unwrap();
    let opts = EvolveOptions { snapshot_times: times.to_vec(), ..EvolveOptions::default() };
    let ground = dynamics.ground_state();
    let mut samples: Vec<Vec<Vec<f64>>> = vec![Vec::new(); times.len()];
    let mut counts = Vec::with_capacity(trajectories);
    for m in 0..trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(m as u64));
        let out = dynamics.evolve(&ground, &scheme.probe, &grid, JumpMode::Stochastic, &mut rng, &opts).unwrap();
        for (k, snap) in out.snapshots.iter().enumerate() {
            let v = basis.state_vector(snap);
            samples[k].push(observables_of(&basis, &projector(&v)).values);
        }
        counts.push(out.jumps.iter().filter(|j| j.time <= end).count() as f64);
    }
    let stats = |xs: &[f64]| {
        let m = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / m;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (mean, (var / m).sqrt())
    };
    let mut mean = Vec::new();
    let mut stderr = Vec::new();
    for per_time in &samples {
        let q = per_time[0].len();
        let (mu, se): (Vec<f64>, Vec<f64>) = (0..q)
            .map(|i| stats(&per_time.iter().map(|s| s[i]).collect::<Vec<_>>()))
            .unzip();
        mean.push(mu);
        stderr.push(se);
    }
    let (mean_jumps, jumps_stderr) = stats(&counts);
    EnsembleSnapshot { mean, stderr, mean_jumps, jumps_stderr }
}

/// Largest deviation in units of the standard error (plus an absolute floor
/// at integrator accuracy), with a description of where it occurred.
pub fn worst_deviation(
    snapshot: &EnsembleSnapshot,
    oracle: &[Observables],
    floor: f64,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    for (k, obs) in oracle.iter().enumerate() {
        for (i, label) in obs.labels.iter().enumerate() {
            let dev = (snapshot.mean[k][i] - obs.values[i]).abs() / (snapshot.stderr[k][i] + floor);
            if dev > worst.0 {
                worst = (
                    dev,
                    format!(
                        "{label} at snapshot {k}: ensemble {:.5} ± {:.5}, master equation {:.5}",
                        snapshot.mean[k][i], snapshot.stderr[k][i], obs.values[i]
                    ),
                );
            }
        }
    }
    worst
}

pub fn kernel_of(array: &AtomArray) -> CouplingKernel {
    build_coupling(array).unwrap()
}
