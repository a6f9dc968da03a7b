//! Alternating linear scheme for TT: each micro-step replaces one core by the
//! minimizer of `f` with all other cores fixed, i.e. solves the Galerkin
//! system `X_{≠μ}ᵀ A X_{≠μ} vec(U_μ) = X_{≠μ}ᵀ vec(F)`.
//!
//! The iterate is kept μ-orthogonal at the active core, so `X_{≠μ}` has
//! orthonormal columns and the local matrix inherits `A`'s conditioning.

use alloc::vec::Vec;

use crate::error::{mismatch, Result};
use crate::format::{Format, TtFormat};
use crate::linalg::{math, qr_thin};
use crate::operators::{tridiag_core, Operator, TtOperator};
use crate::solvers::{Clock, IterRecord, SolveReport, SolverConfig, Status};
use crate::tensor::{kron, DenseTensor, Mat};
use crate::tt::{contract_left, contract_right, core_from, left_unfold, right_unfold, TtTensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AlsConfig {
    /// Local systems up to this size are assembled and factorized.
    pub direct_limit: usize,
    pub cg_tol: f64,
    pub cg_cap: usize,
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self { direct_limit: 2500, cg_tol: 1e-8, cg_cap: 500 }
    }
}

/// Interface contractions of the operator and right-hand side with the
/// current iterate. `op_left[μ][p]` couples the test and trial interfaces
/// left of core μ through operator rank index `p`.
struct Environments {
    op_left: Vec<Vec<Mat>>,
    op_right: Vec<Vec<Mat>>,
    f_left: Vec<Mat>,
    f_right: Vec<Mat>,
}

fn one() -> Mat {
    Mat::from_element(1, 1, 1.0)
}

fn op_left_step(env: &[Mat], a: &crate::operators::OpCore, x: &DenseTensor) -> Vec<Mat> {
    let rr = x.dims()[2];
    let mut out = alloc::vec![Mat::zeros(rr, rr); a.rr];
    for q in 0..a.rr {
        for p in 0..a.rl {
            if let Some(t) = a.get(p, q) {
                out[q] += contract_left(&env[p], x, &tridiag_core(t, x));
            }
        }
    }
    out
}

fn op_right_step(env: &[Mat], a: &crate::operators::OpCore, x: &DenseTensor) -> Vec<Mat> {
    let rl = x.dims()[0];
    let mut out = alloc::vec![Mat::zeros(rl, rl); a.rl];
    for q in 0..a.rr {
        for p in 0..a.rl {
            if let Some(t) = a.get(p, q) {
                out[p] += contract_right(&env[q], x, &tridiag_core(t, x));
            }
        }
    }
    out
}

/// Local problem at one core.
pub struct LocalSystem<'a> {
    a: &'a crate::operators::OpCore,
    left: &'a [Mat],
    right: &'a [Mat],
    pub rhs: DenseTensor,
}

impl LocalSystem<'_> {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn apply(&self, w: &DenseTensor) -> Result<DenseTensor> {
        let mut out = DenseTensor::zeros(w.dims());
        for q in 0..self.a.rr {
            for p in 0..self.a.rl {
                if let Some(t) = self.a.get(p, q) {
                    let y = tridiag_core(t, &w.mode_product(&self.left[p], 0)?);
                    out.axpy(1.0, &y.mode_product(&self.right[q], 2)?)?;
                }
            }
        }
        Ok(out)
    }

    /// Dense local matrix (colexicographic core ordering).
    pub fn to_dense(&self) -> Mat {
        let nn = self.dim();
        let mut out = Mat::zeros(nn, nn);
        for q in 0..self.a.rr {
            for p in 0..self.a.rl {
                if let Some(t) = self.a.get(p, q) {
                    out += kron(&self.right[q], &kron(&t.to_dense(), &self.left[p]));
                }
            }
        }
        out
    }

    /// Solves the local system from the starting core `x0`; returns the
    /// solution and the number of local operator applications (a direct
    /// solve counts as `dim`, the cost of assembling by products).
    pub fn solve(&self, x0: &DenseTensor, cfg: &AlsConfig) -> Result<(DenseTensor, usize)> {
        let nn = self.dim();
        let dims = self.rhs.dims().to_vec();
        if nn <= cfg.direct_limit {
            let m = self.to_dense();
            let m = (&m + m.transpose()) * 0.5;
            let b = nalgebra::DVector::from_column_slice(self.rhs.data());
            let x = match m.clone().cholesky() {
                Some(c) => c.solve(&b),
                None => m.lu().solve(&b).ok_or_else(|| crate::error::Error::Singular("local ALS system".into()))?,
            };
            return Ok((DenseTensor::new(dims, x.as_slice().to_vec())?, nn));
        }
        let bnorm = self.rhs.norm();
        let mut x = x0.clone();
        let mut r = self.rhs.clone();
        r.axpy(-1.0, &self.apply(&x)?)?;
        let mut applies = 1;
        let mut p = r.clone();
        let mut rr = r.inner(&r)?;
        for _ in 0..cfg.cg_cap {
            if math::sqrt(rr) <= cfg.cg_tol * bnorm {
                break;
            }
            let ap = self.apply(&p)?;
            applies += 1;
            let a = rr / p.inner(&ap)?;
            x.axpy(a, &p)?;
            r.axpy(-a, &ap)?;
            let rr_new = r.inner(&r)?;
            p = p.scaled(rr_new / rr);
            p.axpy(1.0, &r)?;
            rr = rr_new;
        }
        Ok((x, applies))
    }
}

/// ALS state: the iterate, μ-orthogonal at `active`, and its environments.
pub struct AlsState<'a> {
    op: &'a TtOperator,
    cores: Vec<DenseTensor>,
    f_cores: Vec<DenseTensor>,
    env: Environments,
    pub active: usize,
}

impl<'a> AlsState<'a> {
    /// Orthogonalizes `x` at core 0 and builds all right environments.
    pub fn new(op: &'a TtOperator, f: &TtTensor, x: &TtTensor) -> Result<Self> {
        let d = x.order();
        if op.order() != d || f.dims() != x.dims() {
            return Err(mismatch("operator, right-hand side and iterate disagree"));
        }
        let cores = x.orthogonalize(0).into_cores();
        let f_cores = f.clone().into_cores();
        let env = Environments {
            op_left: alloc::vec![alloc::vec![one()]; d],
            op_right: alloc::vec![alloc::vec![one()]; d],
            f_left: alloc::vec![one(); d],
            f_right: alloc::vec![one(); d],
        };
        let mut s = Self { op, cores, f_cores, env, active: 0 };
        for m in (0..d - 1).rev() {
            s.update_right(m);
        }
        Ok(s)
    }

    /// Environment right of core `m` from core `m + 1`.
    fn update_right(&mut self, m: usize) {
        let x = &self.cores[m + 1];
        self.env.op_right[m] = op_right_step(&self.env.op_right[m + 1], &self.op.cores[m + 1], x);
        self.env.f_right[m] = contract_right(&self.env.f_right[m + 1], x, &self.f_cores[m + 1]);
    }

    /// Environment left of core `m` from core `m - 1`.
    fn update_left(&mut self, m: usize) {
        let x = &self.cores[m - 1];
        self.env.op_left[m] = op_left_step(&self.env.op_left[m - 1], &self.op.cores[m - 1], x);
        self.env.f_left[m] = contract_left(&self.env.f_left[m - 1], x, &self.f_cores[m - 1]);
    }

    pub fn tensor(&self) -> TtTensor {
        TtTensor::new(self.cores.clone()).expect("consistent cores")
    }

    pub fn local(&self, m: usize) -> Result<LocalSystem<'_>> {
        let fc = &self.f_cores[m];
        let rhs = fc.mode_product(&self.env.f_left[m], 0)?.mode_product(&self.env.f_right[m], 2)?;
        Ok(LocalSystem { a: &self.op.cores[m], left: &self.env.op_left[m], right: &self.env.op_right[m], rhs })
    }

    /// Solves for the active core; returns the local application count.
    pub fn microstep(&mut self, cfg: &AlsConfig) -> Result<usize> {
        let m = self.active;
        let (w, applies) = self.local(m)?.solve(&self.cores[m], cfg)?;
        self.cores[m] = w;
        Ok(applies)
    }

    /// Moves orthogonality one core to the right (`forward`) or left.
    pub fn shift(&mut self, forward: bool) {
        let m = self.active;
        let c = &self.cores[m];
        let (rl, n, rr) = (c.dims()[0], c.dims()[1], c.dims()[2]);
        if forward {
            let (q, r) = qr_thin(&left_unfold(c));
            let k = q.ncols();
            self.cores[m] = core_from(&q, rl, n, k);
            let next = &self.cores[m + 1];
            let (n2, rr2) = (next.dims()[1], next.dims()[2]);
            self.cores[m + 1] = core_from(&(r * right_unfold(next)), k, n2, rr2);
            self.active = m + 1;
            self.update_left(m + 1);
        } else {
            let (q, r) = qr_thin(&right_unfold(c).transpose());
            let k = q.ncols();
            self.cores[m] = core_from(&q.transpose(), k, n, rr);
            let prev = &self.cores[m - 1];
            let (rl0, n0) = (prev.dims()[0], prev.dims()[1]);
            self.cores[m - 1] = core_from(&(left_unfold(prev) * r.transpose()), rl0, n0, k);
            self.active = m - 1;
            self.update_right(m - 1);
        }
    }
}

/// ALS with alternating half-sweeps (cores `1..d-1` forward, then `d..2`
/// backward). `cfg.max_iters` caps the number of micro-steps; one record is
/// written per micro-step. The reported operator-application count adds the
/// local applications of every micro-step and one application per residual
/// evaluation.
pub fn als_solve<C: Clock + ?Sized>(
    op: &Operator,
    rhs: &TtTensor,
    x0: TtTensor,
    cfg: &SolverConfig,
    als: &AlsConfig,
    clock: &C,
    mut on_record: impl FnMut(&IterRecord),
) -> SolveReport<TtTensor> {
    let start = clock.now();
    let d = x0.order();
    let r_max = x0.max_rank();
    let fnorm = rhs.norm();
    let mut records = Vec::new();
    let residual = |x: &TtTensor| -> Result<f64> {
        let ax = op.apply_tt(x)?;
        Ok(TtFormat::compress(&rhs.lincomb(1.0, &ax, -1.0)?)?.norm() / fnorm)
    };
    let mut applies = 1;
    let rel0 = match residual(&x0) {
        Ok(v) => v,
        Err(e) => return SolveReport { x: x0, records, status: Status::Failed(alloc::format!("{e}")) },
    };
    let row0 = IterRecord {
        iter: 0,
        wall_time_s: clock.now() - start,
        rel_residual: rel0,
        max_rank: r_max,
        step_size: 0.0,
        inner_iters: 0,
        operator_applies: applies,
        retraction_rank: 0,
    };
    on_record(&row0);
    records.push(row0);
    if rel0 <= cfg.tol {
        return SolveReport { x: x0, records, status: Status::Converged };
    }
    let mut state = match AlsState::new(op.tt_operator(), rhs, &x0) {
        Ok(s) => s,
        Err(e) => return SolveReport { x: x0, records, status: Status::Failed(alloc::format!("{e}")) },
    };
    let mut forward = true;
    let mut iter = 0;
    let status = loop {
        if iter >= cfg.max_iters {
            break Status::MaxIters;
        }
        iter += 1;
        let step = (|| -> Result<(usize, f64)> {
            let local = state.microstep(als)?;
            let rel = residual(&state.tensor())?;
            Ok((local, rel))
        })();
        let (local, rel) = match step {
            Ok(v) => v,
            Err(e) => break Status::Failed(alloc::format!("{e}")),
        };
        applies += local + 1;
        let rec = IterRecord {
            iter,
            wall_time_s: clock.now() - start,
            rel_residual: rel,
            max_rank: r_max,
            step_size: 1.0,
            inner_iters: local,
            operator_applies: applies,
            retraction_rank: 0,
        };
        on_record(&rec);
        records.push(rec);
        if rel <= cfg.tol {
            break Status::Converged;
        }
        if d == 1 {
            continue;
        }
        if forward && state.active + 1 == d {
            forward = false;
        } else if !forward && state.active == 0 {
            forward = true;
        }
        state.shift(forward);
    };
    SolveReport { x: state.tensor(), records, status }
}
