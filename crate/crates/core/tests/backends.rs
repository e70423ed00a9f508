mod common;

use std::f64::consts::PI;

use atom_mirror::dynamics::{
    Dynamics, EvolveOptions, FourLevelParams, JumpMode, LevelScheme, PropagatorKind, SchemeConfig, TimeGrid,
    Tolerances, TrajectoryOutcome,
};
use atom_mirror::geometry::{apply_disorder, AtomArray, Vec3};
use atom_mirror::kernel::CouplingKernel;
use atom_mirror::modes::{CavityCoupling, DriveField, ModeOverlaps};
use atom_mirror::observables::{integrate_probabilities, Estimate, Probabilities};
use atom_mirror::runner::config::{Detunings, RunConfig};
use atom_mirror::runner::sweep_detuning;
use atom_mirror::{C64, MHZ};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TWO: LevelScheme = LevelScheme::TwoLevel { include_doubles: false };

fn gamma() -> f64 {
    species().gamma_e
}

fn ladder(direction: Vec3) -> LevelScheme {
    LevelScheme::FourLevel(FourLevelParams {
        drive: DriveField {
            rabi: C64::from(2.0 * MHZ),
            detuning: -0.172 * gamma(),
            wavevector: direction.normalize() * (2.0 * PI / 480e-9),
        },
        cavity: CavityCoupling { strength: 2.0 * MHZ, detuning: 0.0, photon_number: 1 },
        gamma_s: 1e-3 * gamma(),
        gamma_r: 1e-3 * gamma(),
    })
}

fn tight() -> EvolveOptions {
    EvolveOptions {
        tolerances: Tolerances { rtol: 1e-10, atol: 1e-13, h_max: f64::INFINITY },
        jump_time_tolerance: 1e-7,
        ..EvolveOptions::default()
    }
}

fn evolve(
    array: &AtomArray,
    kernel: &CouplingKernel,
    s: &SchemeConfig,
    overlaps: Option<ModeOverlaps>,
    kind: PropagatorKind,
    mode: JumpMode,
    seed: u64,
) -> TrajectoryOutcome {
    evolve_with(array, kernel, s, overlaps, kind, mode, seed, &EvolveOptions::default())
}

#[allow(clippy::too_many_arguments)]
fn evolve_with(
    array: &AtomArray,
    kernel: &CouplingKernel,
    s: &SchemeConfig,
    overlaps: Option<ModeOverlaps>,
    kind: PropagatorKind,
    mode: JumpMode,
    seed: u64,
    options: &EvolveOptions,
) -> TrajectoryOutcome {
    let d = match overlaps {
        Some(o) => Dynamics::with_overlaps(array, kernel, s, o, kind).unwrap(),
        None => Dynamics::new(array, kernel, s, kind).unwrap(),
    };
    assert_eq!(d.is_modal(), kind == PropagatorKind::Modal);
    let grid = TimeGrid::for_pulse(&s.probe, gamma(), 40.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    d.evolve(&d.ground_state(), &s.probe, &grid, mode, &mut rng, options).unwrap()
}

fn probabilities(out: &TrajectoryOutcome) -> Probabilities {
    integrate_probabilities(&out.record).unwrap()
}

fn disordered(nx: usize, sigma: f64, seed: u64) -> AtomArray {
    apply_disorder(&lattice(nx, nx), sigma, sigma, seed).unwrap()
}

#[test]
fn modal_and_direct_backends_agree_without_jumps() {
    let array = disordered(5, 20e-9, 3);
    let kernel = kernel_of(&array);
    for variant in [TWO, ladder(Vec3::new(0.0, 0.0, 1.0))] {
        for dp in [0.0, 0.17 * gamma(), -0.5 * gamma()] {
            let s = scheme(variant, 2e-6, 1.0, dp, 2.34e-6);
            let a = evolve(&array, &kernel, &s, None, PropagatorKind::Direct, JumpMode::NoJump, 1);
            let b = evolve(&array, &kernel, &s, None, PropagatorKind::Modal, JumpMode::NoJump, 1);
            let (pa, pb) = (probabilities(&a), probabilities(&b));
            assert!((pa.p_t - pb.p_t).abs() < 1e-6 && (pa.p_r - pb.p_r).abs() < 1e-6, "{pa:?} vs {pb:?}");
            let scale = a.record.alpha_p.iter().map(|x| x.norm()).fold(0.0, f64::max);
            for k in 0..a.record.len() {
                assert!((a.record.alpha_r[k] - b.record.alpha_r[k]).norm() < 1e-5 * scale);
            }
            let (fa, fb) = (&a.final_state, &b.final_state);
            for j in 0..array.len() {
                assert!((fa.b[j] - fb.b[j]).norm() < 1e-6);
            }
        }
    }
}

#[test]
fn modal_and_direct_backends_agree_with_jumps() {
    // Strong probe so that every trajectory jumps several times.
    let array = disordered(3, 30e-9, 8);
    let kernel = kernel_of(&array);
    for variant in [TWO, ladder(Vec3::new(0.0, 0.0, 1.0))] {
        let s = scheme(variant, 0.2e-6, 30.0, 0.1 * gamma(), 780e-9);
        for seed in 0..4 {
            let a = evolve_with(&array, &kernel, &s, None, PropagatorKind::Direct, JumpMode::Stochastic, seed, &tight());
            let b = evolve_with(&array, &kernel, &s, None, PropagatorKind::Modal, JumpMode::Stochastic, seed, &tight());
            assert!(!a.jumps.is_empty());
            assert_eq!(a.jumps.len(), b.jumps.len());
            for (ja, jb) in a.jumps.iter().zip(&b.jumps) {
                assert!((ja.time - jb.time).abs() < 2e-3 / gamma(), "{:?} vs {:?}", a.jumps, b.jumps);
            }
            let (pa, pb) = (probabilities(&a), probabilities(&b));
            assert!((pa.p_t - pb.p_t).abs() < 1e-3 && (pa.p_r - pb.p_r).abs() < 1e-3, "{pa:?} vs {pb:?}");
        }
    }
}

#[test]
fn drive_wavevector_is_a_gauge_in_the_single_excitation_model() {
    let array = disordered(4, 25e-9, 5);
    let kernel = kernel_of(&array);
    let run = |dir: Vec3, kind| {
        let s = scheme(ladder(dir), 2e-6, 1.0, 0.172 * gamma(), 2.34e-6);
        probabilities(&evolve_with(&array, &kernel, &s, None, kind, JumpMode::Stochastic, 4, &tight()))
    };
    let reference = run(Vec3::new(0.0, 0.0, 1.0), PropagatorKind::Direct);
    for dir in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.3, -0.5, 0.8)] {
        for kind in [PropagatorKind::Direct, PropagatorKind::Modal] {
            let p = run(dir, kind);
            assert!(
                (p.p_t - reference.p_t).abs() < 1e-6 && (p.p_r - reference.p_r).abs() < 1e-6,
                "{dir:?} {kind:?}: {p:?} vs {reference:?}"
            );
        }
    }
}

#[test]
fn reflection_is_reciprocal_in_the_focal_plane() {
    let array = apply_disorder(&lattice(4, 4), 30e-9, 0.0, 2).unwrap();
    let kernel = kernel_of(&array);
    let s = scheme(TWO, 2e-6, 1.0, 0.172 * gamma(), 2.34e-6);
    let overlaps = ModeOverlaps::new(&array, &s.beam);
    for kind in [PropagatorKind::Direct, PropagatorKind::Modal] {
        let a = probabilities(&evolve(&array, &kernel, &s, Some(overlaps.clone()), kind, JumpMode::Stochastic, 9));
        let b = probabilities(&evolve(&array, &kernel, &s, Some(overlaps.swapped()), kind, JumpMode::Stochastic, 9));
        assert!((a.p_r - b.p_r).abs() < 1e-10, "{a:?} vs {b:?}");
    }
}

#[test]
fn weaker_probe_is_linear_and_reflects_at_least_as_well() {
    let mut c = RunConfig::default();
    c.mc.trajectories = 200;
    c.probe.detunings = Detunings::List(vec![0.172]);
    let mut points = Vec::new();
    for n in [1.0, 0.25, 0.0625] {
        c.probe.mean_photons = n;
        points.push(sweep_detuning(&c, &c.detunings().unwrap()).unwrap().points[0]);
    }
    for w in points.windows(2) {
        let err = (w[0].p_r.stderr.powi(2) + w[1].p_r.stderr.powi(2)).sqrt();
        assert!(w[1].p_r.mean >= w[0].p_r.mean - 3.0 * err, "{points:?}");
    }
    let (a, b) = (&points[1], &points[2]);
    assert!((a.p_t.mean - b.p_t.mean).abs() < 0.01, "{a:?} vs {b:?}");
    assert!((a.p_r.mean - b.p_r.mean).abs() < 0.01, "{a:?} vs {b:?}");
}

#[test]
fn standard_error_scales_as_inverse_root_of_ensemble_size() {
    let mut c = RunConfig::default();
    c.array.nx = 6;
    c.array.ny = 6;
    c.array.sigma_xy = atom_mirror::runner::config::Length::Nm(40.0);
    c.probe.detunings = Detunings::List(vec![0.172]);
    c.mc.trajectories = 50;
    let small = sweep_detuning(&c, &c.detunings().unwrap()).unwrap().points[0];
    c.mc.trajectories = 200;
    let large = sweep_detuning(&c, &c.detunings().unwrap()).unwrap().points[0];
    let ratio = small.p_r.stderr / large.p_r.stderr;
    assert!((ratio / 2.0 - 1.0).abs() < 0.3, "ratio {ratio}");
}

#[test]
fn no_jump_ensemble_matches_single_trajectory_in_weak_field() {
    let mut c = RunConfig::default();
    c.array.nx = 6;
    c.array.ny = 6;
    c.probe.detunings = Detunings::List(vec![0.172]);
    c.mc.trajectories = 200;
    let ensemble = sweep_detuning(&c, &c.detunings().unwrap()).unwrap().points[0];
    c.mc.trajectories = 1;
    c.mc.jump_mode = JumpMode::NoJump;
    let single = sweep_detuning(&c, &c.detunings().unwrap()).unwrap().points[0];
    // Jumps only remove the few per cent of scattered photons.
    assert!((ensemble.p_t.mean - single.p_t.mean).abs() < 0.05);
    assert!((ensemble.p_r.mean - single.p_r.mean).abs() < 0.05);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn populations_and_fluxes_stay_physical(
        nx in 1usize..4,
        ny in 1usize..4,
        spacing in 0.25e-6f64..0.8e-6,
        sigma in 0.0f64..50e-9,
        detuning in -2.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let sp = species();
        let ordered = atom_mirror::geometry::build_square_lattice(nx, ny, spacing, sp).unwrap();
        let array = apply_disorder(&ordered, sigma, sigma, seed).unwrap();
        let kernel = kernel_of(&array);
        let ch = kernel.channels().unwrap();
        prop_assert!(ch.rates.iter().all(|&r| r >= -1e-10 * gamma()));
        let trace: f64 = ch.rates.iter().sum();
        prop_assert!((trace / (array.len() as f64 * gamma()) - 1.0).abs() < 1e-9);
        let s = scheme(LevelScheme::TwoLevel { include_doubles: true }, 0.5e-6, 5.0, detuning * gamma(), 1.5e-6);
        let out = evolve(&array, &kernel, &s, None, PropagatorKind::Direct, JumpMode::Stochastic, seed);
        let p = probabilities(&out);
        prop_assert!(p.p_t >= 0.0 && p.p_r >= 0.0);
        prop_assert!(p.p_t + p.p_r <= 1.0 + 1e-6, "{:?}", p);
        prop_assert!((out.final_state.compute_norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!(out.peak_single <= 1.0 && out.peak_double <= 1.0);
    }

    #[test]
    fn estimate_is_mean_and_bounded_error(xs in proptest::collection::vec(0.0f64..1.0, 2..50)) {
        let e = Estimate::from_samples(&xs);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assert!((e.mean - mean).abs() < 1e-12);
        prop_assert!(e.stderr >= 0.0 && e.stderr <= 0.5 / ((xs.len() - 1) as f64).sqrt() + 1e-12);
    }
}
