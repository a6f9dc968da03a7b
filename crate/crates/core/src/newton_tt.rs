//! Approximate Newton on the TT manifold: the equation `P_T L P_T ξ = η` is
//! solved by PCG on the tangent space, preconditioned by block Jacobi over
//! the per-core subspaces.
//!
//! Local operators use the reduced Laplacians `Λ = X_{≤μ-1}ᵀ L_{<μ} X_{≤μ-1}`
//! and `Ρ = X_{≥μ+1} L_{>μ} X_{≥μ+1}ᵀ`; on a core `W` of shape `(r_{μ-1}, n, r_μ)`
//! they act as `Λ ×₀ W + L_μ ×₁ W + W ×₂ Ρ`. The interface matrices are
//! orthonormal (left-orthogonal cores on the left, right-orthogonal on the
//! right), so no Gram matrices appear.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::format::TtFormat;
use crate::linalg::{math, sym_eig, SaddleSolver, SymTridiagonal};
use crate::operators::{reduced_laplacians, LaplaceLike, Operator, TtOperator};
use crate::solvers::{self, Clock, Direction, IterRecord, Proposal, SolveReport, SolverConfig, StepRule};
use crate::tensor::{DenseTensor, Mat};
use crate::tt::{self, core_from, left_unfold, TtPoint, TtTangent, TtTensor};

/// `P_T L ξ` for a tangent vector.
pub fn hessian_apply(l: &TtOperator, xi: &TtTangent) -> Result<TtTangent> {
    tt::project(&xi.base, &l.apply(&xi.to_tt())?)
}

/// Eigendecompositions of the reduced Laplacians at one base point.
struct CoreSpectra {
    ql: Mat,
    lam: Vec<f64>,
    qr: Mat,
    rho: Vec<f64>,
}

fn spectra(base: &TtPoint, l: &LaplaceLike) -> Result<Vec<CoreSpectra>> {
    let (left, right) = reduced_laplacians(base, l);
    left.iter()
        .zip(&right)
        .map(|(a, b)| {
            let (ql, lam) = sym_eig(a)?;
            let (qr, rho) = sym_eig(b)?;
            Ok(CoreSpectra { ql, lam, qr, rho })
        })
        .collect()
}

/// Solves `Λ ×₀ W + L_μ ×₁ W + W ×₂ Ρ = B` by diagonalizing `Λ` and `Ρ`:
/// one shifted tridiagonal solve per pair of eigenvalues.
fn local_solve(lmu: &SymTridiagonal, sp: &CoreSpectra, b: &DenseTensor) -> Result<DenseTensor> {
    let dims = b.dims().to_vec();
    let (rl, n, rr) = (dims[0], dims[1], dims[2]);
    let w = b.mode_product(&sp.ql.transpose(), 0)?.mode_product(&sp.qr.transpose(), 2)?;
    let mut out = DenseTensor::zeros(&dims);
    let mut col = Mat::zeros(n, 1);
    for q in 0..rr {
        for a in 0..rl {
            for i in 0..n {
                col[i] = w.data()[a + rl * (i + n * q)];
            }
            let x = lmu.shifted_solve(sp.lam[a] + sp.rho[q], &col)?;
            let o = out.data_mut();
            for i in 0..n {
                o[a + rl * (i + n * q)] = x[i];
            }
        }
    }
    out.mode_product(&sp.ql, 0)?.mode_product(&sp.qr, 2)
}

/// Overlapping block Jacobi: local solves on the ungauged subspaces
/// `{X_{≤μ-1} W X_{≥μ+1}}`, summed and projected back to the gauged
/// parametrization.
pub struct OverlapPrecond<'a> {
    l: &'a LaplaceLike,
    base: Arc<TtPoint>,
    spectra: Vec<CoreSpectra>,
}

impl<'a> OverlapPrecond<'a> {
    pub fn new(l: &'a LaplaceLike, base: &Arc<TtPoint>) -> Result<Self> {
        Ok(Self { l, base: base.clone(), spectra: spectra(base, l)? })
    }

    pub fn apply(&self, eta: &TtTangent) -> Result<TtTangent> {
        if !Arc::ptr_eq(&eta.base, &self.base) {
            return Err(Error::BasePointMismatch);
        }
        let coords = tt::project_ungauged(&self.base, &eta.to_tt())?;
        let d_cores = coords
            .d_cores
            .iter()
            .enumerate()
            .map(|(m, c)| local_solve(self.l.mode(m), &self.spectra[m], c))
            .collect::<Result<Vec<_>>>()?;
        let sum = TtTangent { base: self.base.clone(), d_cores };
        tt::project(&self.base, &sum.to_tt())
    }
}

type Ginv<'a> = Box<dyn Fn(&Mat) -> Result<Mat> + 'a>;

/// Non-overlapping block Jacobi: local solves on the gauged subspaces, i.e.
/// saddle-point systems with constraint `(U_μᴸ)ᵀ δU_μᴸ = 0`, decoupled over
/// the eigenvectors of `Ρ`.
pub struct JacobiPrecond<'a> {
    l: &'a LaplaceLike,
    base: Arc<TtPoint>,
    spectra: Vec<Arc<CoreSpectra>>,
    /// `saddles[μ][i]` for the `i`-th eigenvalue of `Ρ_μ`, `μ < d-1`.
    saddles: Vec<Vec<SaddleSolver<Ginv<'a>>>>,
}

/// `(L_μ ⊗ I + I ⊗ Λ + ρ I)⁻¹` on left-unfolding columns of length `rl·n`.
fn slab_solve(lmu: &SymTridiagonal, sp: &CoreSpectra, rho: f64, b: &Mat) -> Result<Mat> {
    let rl = sp.lam.len();
    let n = lmu.n();
    let k = b.ncols();
    let mut out = Mat::zeros(rl * n, k);
    // transform the rank index: rows a + rl·i
    let mut t = Mat::zeros(rl * n, k);
    for c in 0..k {
        let bm = Mat::from_column_slice(rl, n, b.column(c).as_slice());
        let tm = sp.ql.transpose() * bm;
        t.column_mut(c).copy_from_slice(tm.as_slice());
    }
    let mut rhs = Mat::zeros(n, k);
    for a in 0..rl {
        for c in 0..k {
            for i in 0..n {
                rhs[(i, c)] = t[(a + rl * i, c)];
            }
        }
        let x = lmu.shifted_solve(sp.lam[a] + rho, &rhs)?;
        for c in 0..k {
            for i in 0..n {
                t[(a + rl * i, c)] = x[(i, c)];
            }
        }
    }
    for c in 0..k {
        let tm = Mat::from_column_slice(rl, n, t.column(c).as_slice());
        let om = &sp.ql * tm;
        out.column_mut(c).copy_from_slice(om.as_slice());
    }
    Ok(out)
}

impl<'a> JacobiPrecond<'a> {
    pub fn new(l: &'a LaplaceLike, base: &Arc<TtPoint>) -> Result<Self> {
        let d = base.order();
        let spectra: Vec<Arc<CoreSpectra>> = spectra(base, l)?.into_iter().map(Arc::new).collect();
        let mut saddles = Vec::with_capacity(d);
        for m in 0..d.saturating_sub(1) {
            let u = left_unfold(base.u(m));
            let lmu = l.mode(m);
            let mut per = Vec::with_capacity(spectra[m].rho.len());
            for i in 0..spectra[m].rho.len() {
                let sp = spectra[m].clone();
                let rho = sp.rho[i];
                let ginv: Ginv<'a> = Box::new(move |b: &Mat| slab_solve(lmu, &sp, rho, b));
                per.push(SaddleSolver::new(ginv, u.clone())?);
            }
            saddles.push(per);
        }
        Ok(Self { l, base: base.clone(), spectra, saddles })
    }

    pub fn apply(&self, eta: &TtTangent) -> Result<TtTangent> {
        if !Arc::ptr_eq(&eta.base, &self.base) {
            return Err(Error::BasePointMismatch);
        }
        let d = self.base.order();
        let mut d_cores = Vec::with_capacity(d);
        for m in 0..d {
            let c = &eta.d_cores[m];
            let dims = c.dims().to_vec();
            let sp = &self.spectra[m];
            if m + 1 == d {
                d_cores.push(local_solve(self.l.mode(m), sp, c)?);
                continue;
            }
            // decouple the right rank index, then one saddle system per column
            let e = left_unfold(c) * &sp.qr;
            let mut x = Mat::zeros(e.nrows(), e.ncols());
            for i in 0..e.ncols() {
                let (xi, _) = self.saddles[m][i].solve(&e.columns(i, 1).into_owned())?;
                x.set_column(i, &xi.column(0));
            }
            let x = x * sp.qr.transpose();
            let x = self.base.perp(m, &x);
            d_cores.push(core_from(&x, dims[0], dims[1], dims[2]));
        }
        Ok(TtTangent { base: self.base.clone(), d_cores })
    }
}

/// Preconditioner used inside the tangent PCG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtPrecond {
    None,
    Jacobi,
    Overlap,
}

enum Built<'a> {
    None,
    Jacobi(JacobiPrecond<'a>),
    Overlap(OverlapPrecond<'a>),
}

impl Built<'_> {
    fn new<'a>(kind: TtPrecond, l: &'a LaplaceLike, base: &Arc<TtPoint>) -> Result<Built<'a>> {
        Ok(match kind {
            TtPrecond::None => Built::None,
            TtPrecond::Jacobi => Built::Jacobi(JacobiPrecond::new(l, base)?),
            TtPrecond::Overlap => Built::Overlap(OverlapPrecond::new(l, base)?),
        })
    }

    fn apply(&self, r: &TtTangent) -> Result<TtTangent> {
        match self {
            Built::None => Ok(r.clone()),
            Built::Jacobi(p) => p.apply(r),
            Built::Overlap(p) => p.apply(r),
        }
    }
}

/// Outcome of a tangent-space PCG solve.
#[derive(Debug, Clone)]
pub struct PcgOutcome {
    pub xi: TtTangent,
    pub iterations: usize,
    pub converged: bool,
    /// Relative residual `‖η − Hξ‖ / ‖η‖`, recomputed at exit.
    pub rel_residual: f64,
    /// Values of `½⟨ξ,Hξ⟩ − ⟨η,ξ⟩` after each iteration.
    pub energy: Vec<f64>,
    /// Largest gap between recursive and recomputed residuals (checked
    /// every 10 iterations), relative to `‖η‖`.
    pub drift: f64,
}

/// PCG iteration cap.
pub const PCG_CAP: usize = 250;

/// PCG for `P_T L P_T ξ = η` in the Euclidean metric of the gauged
/// parametrization. Stops once `‖η − Hξ‖ ≤ tol(‖η‖)·‖η‖`.
pub fn tangent_pcg(
    l: &TtOperator,
    eta: &TtTangent,
    precond: &dyn Fn(&TtTangent) -> Result<TtTangent>,
    tol: impl Fn(f64) -> f64,
    cap: usize,
) -> Result<PcgOutcome> {
    let enorm = eta.norm();
    let mut xi = TtTangent::zero(&eta.base);
    let mut energy = Vec::new();
    if enorm == 0.0 {
        return Ok(PcgOutcome { xi, iterations: 0, converged: true, rel_residual: 0.0, energy, drift: 0.0 });
    }
    let target = tol(enorm) * enorm;
    let mut r = eta.clone();
    let mut z = precond(&r)?;
    let mut p = z.clone();
    let mut rz = r.inner(&z)?;
    let mut phi = 0.0;
    let mut drift = 0.0f64;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cap {
        iterations += 1;
        let hp = hessian_apply(l, &p)?;
        let php = p.inner(&hp)?;
        if !(php > 0.0) {
            return Err(Error::PcgBreakdown(php));
        }
        let a = rz / php;
        xi.axpy(a, &p)?;
        r.axpy(-a, &hp)?;
        phi -= 0.5 * a * rz;
        energy.push(phi);
        if iterations % 10 == 0 {
            let mut true_r = hessian_apply(l, &xi)?;
            true_r.scale(-1.0);
            true_r.axpy(1.0, eta)?;
            let mut gap = true_r.clone();
            gap.axpy(-1.0, &r)?;
            drift = drift.max(gap.norm() / enorm);
        }
        if r.norm() <= target {
            converged = true;
            break;
        }
        z = precond(&r)?;
        let rz_new = r.inner(&z)?;
        let beta = rz_new / rz;
        rz = rz_new;
        p.scale(beta);
        p.axpy(1.0, &z)?;
    }
    let mut res = hessian_apply(l, &xi)?;
    res.scale(-1.0);
    res.axpy(1.0, eta)?;
    Ok(PcgOutcome { xi, iterations, converged, rel_residual: res.norm() / enorm, energy, drift })
}

/// Inexact Newton forcing term: `min(0.5, √‖η‖)`.
pub fn forcing(enorm: f64) -> f64 {
    0.5f64.min(math::sqrt(enorm))
}

/// Approximate Newton: tangent PCG on `P_T L P_T ξ = P_T(F − AX)`, then Armijo
/// backtracking from `α₀ = 1`. Each Hessian product counts as one operator
/// application.
pub fn newton_tt_solve<C: Clock + ?Sized>(
    op: &Operator,
    rhs: &TtTensor,
    x0: TtTensor,
    precond: TtPrecond,
    cfg: &SolverConfig,
    clock: &C,
    on_record: impl FnMut(&IterRecord),
) -> SolveReport<TtTensor> {
    let lop = op.laplace.to_tt_operator();
    solvers::run::<TtFormat, C>(
        op,
        rhs,
        x0,
        cfg,
        clock,
        |s| {
            let built = Built::new(precond, &s.op.laplace, s.base)?;
            let out = tangent_pcg(&lop, s.gradient, &|r| built.apply(r), forcing, PCG_CAP)?;
            // one product per iteration plus the exit residual and drift checks
            let applies = out.iterations + 1 + out.iterations / 10;
            Ok(Proposal { direction: Direction::Tangent(out.xi), rule: StepRule::Unit, inner_iters: out.iterations, operator_applies: applies })
        },
        on_record,
    )
}

/// Preconditioned steepest descent: the block-Jacobi preconditioner applied
/// directly to the gradient, with the linearized step size.
pub fn precond_sd_solve<C: Clock + ?Sized>(
    op: &Operator,
    rhs: &TtTensor,
    x0: TtTensor,
    precond: TtPrecond,
    cfg: &SolverConfig,
    clock: &C,
    on_record: impl FnMut(&IterRecord),
) -> SolveReport<TtTensor> {
    solvers::run::<TtFormat, C>(
        op,
        rhs,
        x0,
        cfg,
        clock,
        |s| {
            let built = Built::new(precond, &s.op.laplace, s.base)?;
            let dir = built.apply(s.gradient)?;
            Ok(Proposal { direction: Direction::Tangent(dir), rule: StepRule::Linearized, inner_iters: 0, operator_applies: 0 })
        },
        on_record,
    )
}
