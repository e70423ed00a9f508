//! Single-excitation backend in the eigenbasis of `K = −Γ/2 + iV`.
//!
//! With `K = U·diag(λ)·W` and `W = U⁻¹`, the amplitudes `β = W b`,
//! `γ = W(e^{−ik_d·r}c)` and `δ = W(e^{−ik_d·r}d)` evolve independently for
//! each mode `m`, coupled only through the ground amplitude. The norm needs the
//! Gram matrix `U†U`; it is evaluated exactly at step ends and by cubic
//! Hermite interpolation in between.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::DenseSolveCore;
use faer::{Accum, Mat, MatMut, MatRef, Par};
use rand_chacha::ChaCha8Rng;

use super::integrator::{eval_projected, DenseStep};
use super::{JumpChannel, Ladder, Model, Observation, Populations, TrajectoryState};
use crate::error::{Error, Result};
use crate::kernel::CouplingKernel;
use crate::modes::{ModeOverlaps, ProbePulse};
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);
const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest tolerated `‖W·U − I‖_max`.
const INVERSE_TOLERANCE: f64 = 1e-8;

#[derive(Debug)]
pub struct ModalModel {
    n: usize,
    lambda: Vec<C64>,
    u: Mat<C64>,
    w: Mat<C64>,
    gram: Mat<C64>,
    /// W·F: drive of each mode.
    wf: Vec<C64>,
    /// Fᵀ*·U: forward readout of each mode.
    uf: Vec<C64>,
    /// Backward readout of each mode.
    ub: Vec<C64>,
    ladder: Option<Ladder>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Edge {
    q: f64,
    dq: f64,
}

pub struct ModalWork {
    start: Edge,
    end: Edge,
    end_pops: Populations,
    h: f64,
    proj: [[C64; 5]; 3],
    gx: Mat<C64>,
    buf: Vec<C64>,
}

impl ModalModel {
    pub(crate) fn new(kernel: &CouplingKernel, overlaps: &ModeOverlaps, ladder: Option<Ladder>) -> Result<Self> {
        let n = kernel.len();
        let k = Mat::from_fn(n, n, |i, j| {
            C64::new(-0.5 * kernel.gamma_matrix[(i, j)], kernel.v_matrix[(i, j)])
        });
        let evd = k.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
        let u = evd.U().to_owned();
        let s = evd.S();
        let lambda: Vec<C64> = (0..n).map(|m| s[m]).collect();
        let w = u.partial_piv_lu().inverse();

        let wu = &w * &u;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { ONE } else { ZERO };
                worst = worst.max((wu[(i, j)] - target).norm());
            }
        }
        if !(worst <= INVERSE_TOLERANCE) {
            return Err(Error::Eigen(format!("eigenvector matrix is ill-conditioned (‖WU − I‖ = {worst:e})")));
        }

        let gram = u.adjoint() * &u;
        let f = MatRef::from_column_major_slice(&overlaps.forward, n, 1);
        let wf_m = &w * f;
        let fc: Vec<C64> = overlaps.forward.iter().map(|x| x.conj()).collect();
        let bc: Vec<C64> = overlaps.backward.iter().map(|x| x.conj()).collect();
        let uf_m = u.transpose() * MatRef::from_column_major_slice(&fc, n, 1);
        let ub_m = u.transpose() * MatRef::from_column_major_slice(&bc, n, 1);
        let col = |m: &Mat<C64>| (0..n).map(|i| m[(i, 0)]).collect::<Vec<_>>();
        Ok(Self {
            n,
            lambda,
            wf: col(&wf_m),
            uf: col(&uf_m),
            ub: col(&ub_m),
            u,
            w,
            gram,
            ladder,
        })
    }

    /// Eigenvalues of K (rad/s).
    pub fn eigenvalues(&self) -> &[C64] {
        &self.lambda
    }

    fn sectors(&self) -> usize {
        if self.ladder.is_some() {
            3
        } else {
            1
        }
    }

    /// Returns `(x†Gx summed over sectors, β†Gβ)` with `G·X` left in `gx`.
    fn quadratic(&self, x: &[C64], gx: &mut Mat<C64>) -> (f64, f64) {
        let n = self.n;
        let s = self.sectors();
        let xm = MatRef::from_column_major_slice(x, n, s);
        matmul(gx.as_mut(), Accum::Replace, self.gram.as_ref(), xm, ONE, Par::Seq);
        let mut total = 0.0;
        let mut first = 0.0;
        for c in 0..s {
            let v: f64 = (0..n).map(|i| (xm[(i, c)].conj() * gx[(i, c)]).re).sum();
            if c == 0 {
                first = v;
            }
            total += v;
        }
        (total, first)
    }

    fn rate(&self, dx: &[C64], gx: &Mat<C64>) -> f64 {
        let n = self.n;
        let dxm = MatRef::from_column_major_slice(dx, n, self.sectors());
        let mut s = 0.0;
        for c in 0..self.sectors() {
            s += (0..n).map(|i| (gx[(i, c)].conj() * dxm[(i, c)]).re).sum::<f64>();
        }
        2.0 * s
    }

    fn dot(v: &[C64], x: &[C64]) -> C64 {
        v.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    fn map_sector(m: &Mat<C64>, x: &[C64], out: &mut [C64]) {
        let n = x.len();
        matmul(
            MatMut::from_column_major_slice_mut(out, n, 1),
            Accum::Replace,
            m.as_ref(),
            MatRef::from_column_major_slice(x, n, 1),
            ONE,
            Par::Seq,
        );
    }
}

fn hermite(start: Edge, end: Edge, h: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * start.q
        + (t3 - 2.0 * t2 + t) * h * start.dq
        + (-2.0 * t3 + 3.0 * t2) * end.q
        + (t3 - t2) * h * end.dq
}

impl Model for ModalModel {
    type Work = ModalWork;

    fn dim(&self) -> usize {
        1 + self.sectors() * self.n
    }

    fn new_work(&self) -> ModalWork {
        ModalWork {
            start: Edge::default(),
            end: Edge::default(),
            end_pops: Populations::default(),
            h: 0.0,
            proj: [[ZERO; 5]; 3],
            gx: Mat::zeros(self.n, self.sectors()),
            buf: vec![ZERO; self.dim()],
        }
    }

    fn rhs(&self, pulse: &ProbePulse, t: f64, y: &[C64], dy: &mut [C64]) {
        let n = self.n;
        let alpha = pulse.envelope(t);
        let det = pulse.detuning;
        let a = y[0];
        let beta = &y[1..1 + n];
        dy[0] = I * alpha.conj() * Self::dot(&self.uf, beta);
        let drive = I * alpha * a;
        let shift = C64::new(0.0, det);
        let (dbeta, rest) = dy[1..].split_at_mut(n);
        for m in 0..n {
            dbeta[m] = (self.lambda[m] + shift) * beta[m] + drive * self.wf[m];
        }
        if let Some(l) = &self.ladder {
            let gamma = &y[1 + n..1 + 2 * n];
            let delta = &y[1 + 2 * n..1 + 3 * n];
            let (dgamma, ddelta) = rest.split_at_mut(n);
            let cc = C64::new(-0.5 * l.gamma_s, det + l.drive_detuning);
            let cd = C64::new(-0.5 * l.gamma_r, det + l.drive_detuning + l.cavity_detuning);
            let od = l.drive_rabi;
            let oc = l.cavity_rabi;
            for m in 0..n {
                dbeta[m] += I * od.conj() * gamma[m];
                dgamma[m] = cc * gamma[m] + I * od * beta[m] + I * oc.conj() * delta[m];
                ddelta[m] = cd * delta[m] + I * oc * gamma[m];
            }
        }
    }

    fn ground(&self, y: &mut [C64]) {
        y.fill(ZERO);
        y[0] = ONE;
    }

    fn from_state(&self, state: &TrajectoryState) -> Vec<C64> {
        let n = self.n;
        let mut y = vec![ZERO; self.dim()];
        y[0] = state.a;
        Self::map_sector(&self.w, &state.b, &mut y[1..1 + n]);
        if let (Some(l), Some(c), Some(d)) = (&self.ladder, &state.c, &state.d) {
            for (k, src) in [c, d].into_iter().enumerate() {
                let hat: Vec<C64> = src.iter().zip(&l.drive_phase).map(|(x, p)| x * p.conj()).collect();
                Self::map_sector(&self.w, &hat, &mut y[1 + (k + 1) * n..1 + (k + 2) * n]);
            }
        }
        y
    }

    fn to_state(&self, y: &[C64], t: f64) -> TrajectoryState {
        let n = self.n;
        let mut b = vec![ZERO; n];
        Self::map_sector(&self.u, &y[1..1 + n], &mut b);
        let (c, d) = match &self.ladder {
            Some(l) => {
                let mut out = [vec![ZERO; n], vec![ZERO; n]];
                for (k, dst) in out.iter_mut().enumerate() {
                    Self::map_sector(&self.u, &y[1 + (k + 1) * n..1 + (k + 2) * n], dst);
                    for (x, p) in dst.iter_mut().zip(&l.drive_phase) {
                        *x *= p;
                    }
                }
                let [c, d] = out;
                (Some(c), Some(d))
            }
            None => (None, None),
        };
        let mut s = TrajectoryState { a: y[0], b, b2: None, c, d, t, norm_sqr: 0.0, jump_count: 0 };
        s.norm_sqr = s.compute_norm_sqr();
        s
    }

    fn observe_state(&self, y: &[C64], work: &mut ModalWork) -> Observation {
        let n = self.n;
        let (q, _) = self.quadratic(&y[1..], &mut work.gx);
        let beta = &y[1..1 + n];
        let ac = y[0].conj();
        Observation {
            norm_sqr: y[0].norm_sqr() + q,
            forward: ac * Self::dot(&self.uf, beta),
            backward: ac * Self::dot(&self.ub, beta),
        }
    }

    fn restart(&self, y: &[C64], dy: &[C64], work: &mut ModalWork) {
        let (q, _) = self.quadratic(&y[1..], &mut work.gx);
        let dq = self.rate(&dy[1..], &work.gx);
        work.start = Edge { q, dq };
    }

    fn end_step(&self, step: &DenseStep, y1: &[C64], dy1: &[C64], work: &mut ModalWork) -> f64 {
        let n = self.n;
        let (q, single) = self.quadratic(&y1[1..], &mut work.gx);
        let dq = self.rate(&dy1[1..], &work.gx);
        work.end = Edge { q, dq };
        work.h = step.h;
        let ground = y1[0].norm_sqr();
        let norm = ground + q;
        let inv = if norm > 0.0 { 1.0 / norm } else { 0.0 };
        work.end_pops = Populations {
            ground: ground * inv,
            single: single * inv,
            double: 0.0,
            rydberg: (q - single) * inv,
        };
        work.proj = [
            step.project(|v| v[0]),
            step.project(|v| Self::dot(&self.uf, &v[1..1 + n])),
            step.project(|v| Self::dot(&self.ub, &v[1..1 + n])),
        ];
        norm
    }

    fn norm_at(&self, step: &DenseStep, theta: f64, work: &mut ModalWork) -> f64 {
        let mut buf = std::mem::take(&mut work.buf);
        step.eval(theta, &mut buf);
        // Uses a scratch Gram product so the end-of-step cache stays valid.
        let mut gx = Mat::zeros(self.n, self.sectors());
        let (q, _) = self.quadratic(&buf[1..], &mut gx);
        let norm = buf[0].norm_sqr() + q;
        work.buf = buf;
        norm
    }

    fn observe_at(&self, _step: &DenseStep, theta: f64, work: &mut ModalWork) -> Observation {
        let a = eval_projected(&work.proj[0], theta);
        let sf = eval_projected(&work.proj[1], theta);
        let sb = eval_projected(&work.proj[2], theta);
        let q = hermite(work.start, work.end, work.h, theta);
        Observation { norm_sqr: a.norm_sqr() + q, forward: a.conj() * sf, backward: a.conj() * sb }
    }

    fn end_populations(&self, work: &ModalWork) -> Populations {
        work.end_pops
    }

    fn commit(&self, work: &mut ModalWork) {
        work.start = work.end;
    }

    fn jump(&self, y: &mut [C64], _rng: &mut ChaCha8Rng) -> Result<JumpChannel> {
        self.ground(y);
        Ok(JumpChannel::Ground)
    }
}
