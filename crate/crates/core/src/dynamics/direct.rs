//! Atom-basis backend covering the doubles sector and the four-level ladder.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};
use rand_chacha::ChaCha8Rng;

use super::integrator::DenseStep;
use super::{sample_weighted, JumpChannel, Ladder, Model, Observation, Populations, TrajectoryState};
use crate::error::Result;
use crate::kernel::CouplingKernel;
use crate::modes::{ModeOverlaps, ProbePulse};
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug)]
pub struct DirectModel {
    n: usize,
    gamma_e: f64,
    /// K = −Γ/2 + iV including the diagonal −Γ_e/2.
    k: Mat<C64>,
    /// K with zero diagonal (doubles only).
    k_off: Option<Mat<C64>>,
    overlaps: ModeOverlaps,
    ladder: Option<Ladder>,
    /// Channel rates and complexified transform P (doubles only).
    channels: Option<(Vec<f64>, Mat<C64>)>,
}

pub struct DirectWork {
    buf: Vec<C64>,
    end: Populations,
    end_norm: f64,
}

impl DirectModel {
    pub(crate) fn new(
        kernel: &CouplingKernel,
        overlaps: ModeOverlaps,
        ladder: Option<Ladder>,
        doubles: bool,
    ) -> Result<Self> {
        let n = kernel.len();
        let k = Mat::from_fn(n, n, |i, j| {
            C64::new(-0.5 * kernel.gamma_matrix[(i, j)], kernel.v_matrix[(i, j)])
        });
        let (k_off, channels) = if doubles {
            let k_off = Mat::from_fn(n, n, |i, j| if i == j { C64::new(0.0, 0.0) } else { k[(i, j)] });
            let ch = kernel.channels()?;
            let p = Mat::from_fn(n, n, |l, j| C64::from(ch.transform[(l, j)]));
            (Some(k_off), Some((ch.rates.clone(), p)))
        } else {
            (None, None)
        };
        Ok(Self { n, gamma_e: kernel.gamma_e, k, k_off, overlaps, ladder, channels })
    }

    fn doubles(&self) -> bool {
        self.k_off.is_some()
    }

    fn sectors<'y>(&self, y: &'y [C64]) -> Sectors<'y> {
        let n = self.n;
        let b = &y[1..1 + n];
        let rest = &y[1 + n..];
        if self.doubles() {
            Sectors { a: y[0], b, b2: Some(rest), c: None, d: None }
        } else if self.ladder.is_some() {
            Sectors { a: y[0], b, b2: None, c: Some(&rest[..n]), d: Some(&rest[n..]) }
        } else {
            Sectors { a: y[0], b, b2: None, c: None, d: None }
        }
    }

    fn populations(&self, y: &[C64]) -> (f64, Populations) {
        let s = self.sectors(y);
        let sq = |v: &[C64]| v.iter().map(|x| x.norm_sqr()).sum::<f64>();
        let ground = s.a.norm_sqr();
        let single = sq(s.b);
        let double = s.b2.map_or(0.0, |v| 0.5 * sq(v));
        let rydberg = s.c.map_or(0.0, sq) + s.d.map_or(0.0, sq);
        let total = ground + single + double + rydberg;
        let inv = if total > 0.0 { 1.0 / total } else { 0.0 };
        (
            total,
            Populations { ground: ground * inv, single: single * inv, double: double * inv, rydberg: rydberg * inv },
        )
    }
}

struct Sectors<'y> {
    a: C64,
    b: &'y [C64],
    b2: Option<&'y [C64]>,
    c: Option<&'y [C64]>,
    d: Option<&'y [C64]>,
}

fn column(v: &[C64]) -> MatRef<'_, C64> {
    MatRef::from_column_major_slice(v, v.len(), 1)
}

impl Model for DirectModel {
    type Work = DirectWork;

    fn dim(&self) -> usize {
        let n = self.n;
        if self.doubles() {
            1 + n + n * n
        } else if self.ladder.is_some() {
            1 + 3 * n
        } else {
            1 + n
        }
    }

    fn new_work(&self) -> DirectWork {
        DirectWork { buf: vec![C64::new(0.0, 0.0); self.dim()], end: Populations::default(), end_norm: 1.0 }
    }

    fn rhs(&self, pulse: &ProbePulse, t: f64, y: &[C64], dy: &mut [C64]) {
        let n = self.n;
        let alpha = pulse.envelope(t);
        let det = pulse.detuning;
        let f = &self.overlaps.forward;
        let a = y[0];
        let b = &y[1..1 + n];

        let proj: C64 = f.iter().zip(b).map(|(fj, bj)| fj.conj() * bj).sum();
        dy[0] = I * alpha.conj() * proj;

        let (dy_b, dy_rest) = dy[1..].split_at_mut(n);
        matmul(
            MatMut::from_column_major_slice_mut(dy_b, n, 1),
            Accum::Replace,
            self.k.as_ref(),
            column(b),
            C64::new(1.0, 0.0),
            Par::Seq,
        );
        let drive = I * alpha * a;
        for j in 0..n {
            dy_b[j] += I * det * b[j] + drive * f[j];
        }

        if let Some(k_off) = &self.k_off {
            let b2 = MatRef::from_column_major_slice(&y[1 + n..], n, n);
            // Σ_i Ω_i* B_ij, using the symmetry of B.
            let fc: Vec<C64> = f.iter().map(|x| x.conj()).collect();
            matmul(
                MatMut::from_column_major_slice_mut(dy_b, n, 1),
                Accum::Add,
                b2,
                column(&fc),
                I * alpha.conj(),
                Par::Seq,
            );
            let mut db2 = MatMut::from_column_major_slice_mut(dy_rest, n, n);
            matmul(db2.as_mut(), Accum::Replace, k_off.as_ref(), b2, C64::new(1.0, 0.0), Par::Seq);
            let diag = C64::new(-self.gamma_e, 2.0 * det);
            for j in 0..n {
                db2[(j, j)] = C64::new(0.0, 0.0);
                for i in 0..j {
                    let v = db2[(i, j)] + db2[(j, i)] + diag * b2[(i, j)] + I * alpha * (f[i] * b[j] + f[j] * b[i]);
                    db2[(i, j)] = v;
                    db2[(j, i)] = v;
                }
            }
        } else if let Some(l) = &self.ladder {
            let c = &y[1 + n..1 + 2 * n];
            let d = &y[1 + 2 * n..1 + 3 * n];
            let (dc, dd) = dy_rest.split_at_mut(n);
            let cc = C64::new(-0.5 * l.gamma_s, det + l.drive_detuning);
            let cd = C64::new(-0.5 * l.gamma_r, det + l.drive_detuning + l.cavity_detuning);
            let od = l.drive_rabi;
            let oc = l.cavity_rabi;
            for j in 0..n {
                let ph = l.drive_phase[j];
                dy_b[j] += I * (od * ph).conj() * c[j];
                dc[j] = cc * c[j] + I * od * ph * b[j] + I * oc.conj() * d[j];
                dd[j] = cd * d[j] + I * oc * c[j];
            }
        }
    }

    fn ground(&self, y: &mut [C64]) {
        y.fill(C64::new(0.0, 0.0));
        y[0] = C64::new(1.0, 0.0);
    }

    fn from_state(&self, state: &TrajectoryState) -> Vec<C64> {
        state.to_flat()
    }

    fn to_state(&self, y: &[C64], t: f64) -> TrajectoryState {
        let s = self.sectors(y);
        let mut out = TrajectoryState {
            a: s.a,
            b: s.b.to_vec(),
            b2: s.b2.map(<[C64]>::to_vec),
            c: s.c.map(<[C64]>::to_vec),
            d: s.d.map(<[C64]>::to_vec),
            t,
            norm_sqr: 0.0,
            jump_count: 0,
        };
        out.norm_sqr = out.compute_norm_sqr();
        out
    }

    fn observe_state(&self, y: &[C64], _work: &mut DirectWork) -> Observation {
        let s = self.sectors(y);
        let (norm_sqr, _) = self.populations(y);
        let ov = &self.overlaps;
        let mut forward: C64 = ov.forward.iter().zip(s.b).map(|(u, b)| u.conj() * b).sum::<C64>() * s.a.conj();
        let mut backward: C64 = ov.backward.iter().zip(s.b).map(|(u, b)| u.conj() * b).sum::<C64>() * s.a.conj();
        if let Some(b2) = s.b2 {
            let n = self.n;
            for j in 0..n {
                let col = &b2[j * n..(j + 1) * n];
                let coh: C64 = s.b.iter().zip(col).map(|(bi, bij)| bi.conj() * bij).sum();
                forward += ov.forward[j].conj() * coh;
                backward += ov.backward[j].conj() * coh;
            }
        }
        Observation { norm_sqr, forward, backward }
    }

    fn restart(&self, _y: &[C64], _dy: &[C64], _work: &mut DirectWork) {}

    fn end_step(&self, _step: &DenseStep, y1: &[C64], _dy1: &[C64], work: &mut DirectWork) -> f64 {
        let (norm, pops) = self.populations(y1);
        work.end = pops;
        work.end_norm = norm;
        norm
    }

    fn norm_at(&self, step: &DenseStep, theta: f64, work: &mut DirectWork) -> f64 {
        let mut buf = std::mem::take(&mut work.buf);
        step.eval(theta, &mut buf);
        let norm = self.populations(&buf).0;
        work.buf = buf;
        norm
    }

    fn observe_at(&self, step: &DenseStep, theta: f64, work: &mut DirectWork) -> Observation {
        let mut buf = std::mem::take(&mut work.buf);
        step.eval(theta, &mut buf);
        let obs = self.observe_state(&buf, work);
        work.buf = buf;
        obs
    }

    fn end_populations(&self, work: &DirectWork) -> Populations {
        work.end
    }

    fn commit(&self, _work: &mut DirectWork) {}

    fn jump(&self, y: &mut [C64], rng: &mut ChaCha8Rng) -> Result<JumpChannel> {
        let n = self.n;
        let Some((rates, p)) = &self.channels else {
            self.ground(y);
            return Ok(JumpChannel::Ground);
        };
        // Columns of [b | B] are mapped to Σ_l Ψ: column 0 is the ground
        // amplitude Σ_j P_lj b_j, column i+1 the singles amplitude Σ_j P_lj B_ji.
        let src = MatRef::from_column_major_slice(&y[1..], n, n + 1);
        let mut s = Mat::<C64>::zeros(n, n + 1);
        matmul(s.as_mut(), Accum::Replace, p.as_ref(), src, C64::new(1.0, 0.0), Par::Seq);
        let weights: Vec<f64> = (0..n)
            .map(|l| rates[l].max(0.0) * (0..=n).map(|k| s[(l, k)].norm_sqr()).sum::<f64>())
            .collect();
        let l = sample_weighted(&weights, rng)?;
        let norm = (weights[l] / rates[l]).sqrt();
        y.fill(C64::new(0.0, 0.0));
        y[0] = s[(l, 0)] / norm;
        for i in 0..n {
            y[1 + i] = s[(l, i + 1)] / norm;
        }
        Ok(JumpChannel::Collective(l))
    }
}
