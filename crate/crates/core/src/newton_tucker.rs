//! Direct solution of the approximate Newton equation `P_T L P_T ξ = η` on
//! the Tucker manifold.
//!
//! With `M_μ = U_μᵀ L_μ U_μ` and `Z_μ = δS_(μ) S_(μ)⁺` the tangent equations
//! read
//!
//! ```text
//! Σ_μ δS ×_μ M_μ + S ×_μ (U_μᵀ L_μ δU_μ)                 = δS^η
//! P⊥_μ (L_μ δU_μ + δU_μ Γ_μᵀ + L_μ U_μ Z_μ)               = δU^η_μ,  U_μᵀ δU_μ = 0
//! ```
//!
//! where `Γ_μ = (S_(μ)⁺)ᵀ M̃_μ S_(μ)ᵀ` and `M̃_μ` is the Kronecker sum of the
//! `M_ν`, `ν ≠ μ`. Each factor equation is a saddle-point system whose
//! solution is affine in `Z_μ`; eliminating `δU_μ` leaves a system of size
//! `∏ r_μ` for the core.

use alloc::boxed::Box;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{mismatch, Error, Result};
use crate::linalg::{math, Diagonalized, SaddleSolver};
use crate::operators::{LaplaceLike, Operator};
use crate::solvers::{self, Clock, Direction, IterRecord, Proposal, SolveReport, SolverConfig, StepRule};
use crate::format::TuckerFormat;
use crate::tensor::{kron, DenseTensor, Mat};
use crate::tucker::{TuckerPoint, TuckerSum, TuckerTangent, TuckerTensor};

/// Largest core size solved by dense LU; above it CG is used.
pub const DIRECT_CORE_LIMIT: usize = 1000;
/// Relative tolerance of the core CG.
pub const CORE_CG_TOL: f64 = 1e-12;

type Ginv<'a> = Box<dyn Fn(&Mat) -> Result<Mat> + 'a>;

struct ModeData<'a> {
    /// `L_μ U_μ`.
    lu: Mat,
    m: Mat,
    saddle: SaddleSolver<Ginv<'a>>,
    /// Columns: factor updates (vectorized) for `Z = e_i e_jᵀ`, index `i + r j`.
    phi: Mat,
    /// `vec(Z) ↦ vec(U_μᵀ L_μ F_μ(Z))`.
    psi: Mat,
}

/// Per-point factorizations for repeated Newton solves at one base point.
pub struct TuckerNewtonWorkspace<'a> {
    base: Arc<TuckerPoint>,
    modes: Vec<ModeData<'a>>,
    core_lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

/// Kronecker sum of `mats` in colexicographic order (first matrix fastest).
fn kron_sum(mats: &[&Mat]) -> Mat {
    let dims: Vec<usize> = mats.iter().map(|m| m.nrows()).collect();
    let total: usize = dims.iter().product();
    let mut out = Mat::zeros(total, total);
    for (k, m) in mats.iter().enumerate() {
        let mut acc = Mat::identity(1, 1);
        for (j, &n) in dims.iter().enumerate() {
            let f = if j == k { (*m).clone() } else { Mat::identity(n, n) };
            acc = kron(&f, &acc);
        }
        out += acc;
    }
    out
}

fn unvec(v: &[f64], r: usize, c: usize) -> Mat {
    Mat::from_column_slice(r, c, v)
}

impl<'a> TuckerNewtonWorkspace<'a> {
    pub fn new(l: &'a LaplaceLike, base: &Arc<TuckerPoint>) -> Result<Self> {
        let d = base.order();
        if l.dims() != base.dims() {
            return Err(mismatch("operator and base point dimensions differ"));
        }
        let ranks = base.ranks();
        let dims = base.dims();
        let lus: Vec<Mat> = (0..d).map(|m| l.mode(m).mul(base.factor(m))).collect();
        let ms: Vec<Mat> = (0..d)
            .map(|m| {
                let g = base.factor(m).transpose() * &lus[m];
                (&g + g.transpose()) * 0.5
            })
            .collect();
        let mut modes = Vec::with_capacity(d);
        for mu in 0..d {
            let (n, r) = (dims[mu], ranks[mu]);
            let others: Vec<&Mat> = (0..d).filter(|&v| v != mu).map(|v| &ms[v]).collect();
            let gamma = Diagonalized::projected(base.unfolding(mu), &kron_sum(&others))?;
            let lmu = l.mode(mu);
            let ginv: Ginv<'a> = Box::new(move |b: &Mat| {
                let cs: Vec<Mat> = (0..b.ncols()).map(|j| unvec(b.column(j).as_slice(), n, r)).collect();
                let xs = crate::linalg::sylvester_solve_many(lmu, 0.0, &gamma, &cs)?;
                let mut out = Mat::zeros(n * r, b.ncols());
                for (j, x) in xs.iter().enumerate() {
                    out.column_mut(j).copy_from_slice(x.as_slice());
                }
                Ok(out)
            });
            let u = base.factor(mu);
            let mut con = Mat::zeros(n * r, r * r);
            let mut rhs = Mat::zeros(n * r, r * r);
            for j in 0..r {
                for i in 0..r {
                    let col = i + r * j;
                    con.view_mut((j * n, col), (n, 1)).copy_from(&u.column(i));
                    rhs.view_mut((j * n, col), (n, 1)).copy_from(&lus[mu].column(i));
                }
            }
            let saddle = SaddleSolver::new(ginv, con)?;
            let (phi, _) = saddle.solve(&rhs)?;
            let mut psi = Mat::zeros(r * r, r * r);
            for c in 0..r * r {
                let du = unvec(phi.column(c).as_slice(), n, r);
                let k = lus[mu].transpose() * du;
                psi.column_mut(c).copy_from_slice(k.as_slice());
            }
            modes.push(ModeData { lu: lus[mu].clone(), m: ms[mu].clone(), saddle, phi, psi });
        }
        let mut ws = Self { base: base.clone(), modes, core_lu: None };
        let size: usize = ranks.iter().product();
        if size <= DIRECT_CORE_LIMIT {
            ws.core_lu = Some(ws.core_matrix()?.lu());
        }
        Ok(ws)
    }

    fn z_of(&self, mu: usize, ds: &DenseTensor) -> Result<Mat> {
        Ok(ds.matricize(mu)? * self.base.pinv(mu))
    }

    /// Core operator after eliminating the factor updates.
    fn core_apply(&self, ds: &DenseTensor) -> Result<DenseTensor> {
        let s = self.base.core();
        let mut out = DenseTensor::zeros(ds.dims());
        for (mu, md) in self.modes.iter().enumerate() {
            let r = md.m.nrows();
            out.axpy(1.0, &ds.mode_product(&md.m, mu)?)?;
            let z = self.z_of(mu, ds)?;
            let k = md.psi.clone() * nalgebra::DVector::from_column_slice(z.as_slice());
            out.axpy(-1.0, &s.mode_product(&unvec(k.as_slice(), r, r), mu)?)?;
        }
        Ok(out)
    }

    /// Dense matrix of the core operator (the system solved directly for
    /// small ranks).
    pub fn core_matrix(&self) -> Result<Mat> {
        let ranks = self.base.ranks();
        let size: usize = ranks.iter().product();
        let mut out = Mat::zeros(size, size);
        for c in 0..size {
            let mut e = alloc::vec![0.0; size];
            e[c] = 1.0;
            let col = self.core_apply(&DenseTensor::new(ranks.clone(), e)?)?;
            out.column_mut(c).copy_from_slice(col.data());
        }
        Ok(out)
    }

    fn core_solve(&self, rhs: &DenseTensor) -> Result<(DenseTensor, usize)> {
        let dims = rhs.dims().to_vec();
        if let Some(lu) = &self.core_lu {
            let b = nalgebra::DVector::from_column_slice(rhs.data());
            let x = lu.solve(&b).ok_or_else(|| Error::Singular("core system of the Newton equation".into()))?;
            return Ok((DenseTensor::new(dims, x.as_slice().to_vec())?, 0));
        }
        // plain CG; the eliminated core operator is symmetric positive definite
        let bnorm = rhs.norm();
        let mut x = DenseTensor::zeros(&dims);
        if bnorm == 0.0 {
            return Ok((x, 0));
        }
        let mut r = rhs.clone();
        let mut p = r.clone();
        let mut rr = r.inner(&r)?;
        let cap = 10 * rhs.len();
        for it in 1..=cap {
            let ap = self.core_apply(&p)?;
            let pap = p.inner(&ap)?;
            if !(pap > 0.0) {
                return Err(Error::PcgBreakdown(pap));
            }
            let a = rr / pap;
            x.axpy(a, &p)?;
            r.axpy(-a, &ap)?;
            let rr_new = r.inner(&r)?;
            if math::sqrt(rr_new) <= CORE_CG_TOL * bnorm {
                return Ok((x, it));
            }
            p = p.scaled(rr_new / rr);
            p.axpy(1.0, &r)?;
            rr = rr_new;
        }
        Ok((x, cap))
    }

    /// Solves `P_T L P_T ξ = η`; also returns the core CG iteration count
    /// (zero for the direct path).
    pub fn solve(&self, eta: &TuckerTangent) -> Result<(TuckerTangent, usize)> {
        if !Arc::ptr_eq(&eta.base, &self.base) {
            return Err(Error::BasePointMismatch);
        }
        let s = self.base.core();
        let d = self.base.order();
        let mut ws = Vec::with_capacity(d);
        let mut rhs = eta.d_core.clone();
        for (mu, md) in self.modes.iter().enumerate() {
            let de = &eta.d_factors[mu];
            let (n, r) = (de.nrows(), de.ncols());
            let b = Mat::from_column_slice(n * r, 1, de.as_slice());
            let (w, _) = md.saddle.solve(&b)?;
            let w = unvec(w.as_slice(), n, r);
            rhs.axpy(-1.0, &s.mode_product(&(md.lu.transpose() * &w), mu)?)?;
            ws.push(w);
        }
        let (ds, iters) = self.core_solve(&rhs)?;
        let mut d_factors = Vec::with_capacity(d);
        for (mu, md) in self.modes.iter().enumerate() {
            let (n, r) = (ws[mu].nrows(), ws[mu].ncols());
            let z = self.z_of(mu, &ds)?;
            let f = &md.phi * nalgebra::DVector::from_column_slice(z.as_slice());
            let du = &ws[mu] - unvec(f.as_slice(), n, r);
            d_factors.push(self.base.perp(mu, &du));
        }
        Ok((TuckerTangent { base: self.base.clone(), d_core: ds, d_factors }, iters))
    }
}

/// One-shot solve of the approximate Newton equation.
pub fn solve_approx_newton_tucker(l: &LaplaceLike, eta: &TuckerTangent) -> Result<TuckerTangent> {
    Ok(TuckerNewtonWorkspace::new(l, &eta.base)?.solve(eta)?.0)
}

/// `P_T L P_T ξ`, applied through the structured operator (independent of
/// the solver's algebra).
pub fn hessian_apply(l: &LaplaceLike, xi: &TuckerTangent) -> Result<TuckerTangent> {
    crate::tucker::project(&xi.base, &l.apply_tucker(&xi.to_sum())?)
}

/// Approximate Newton iteration: `ξ` from the Newton equation with the
/// Laplace-like part, then Armijo backtracking from `α₀ = 1`.
pub fn newton_tucker_solve<C: Clock + ?Sized>(
    op: &Operator,
    rhs: &TuckerSum,
    x0: TuckerTensor,
    cfg: &SolverConfig,
    clock: &C,
    on_record: impl FnMut(&IterRecord),
) -> SolveReport<TuckerTensor> {
    solvers::run::<TuckerFormat, C>(
        op,
        rhs,
        x0,
        cfg,
        clock,
        |s| {
            let ws = TuckerNewtonWorkspace::new(&s.op.laplace, s.base)?;
            let (xi, iters) = ws.solve(s.gradient)?;
            Ok(Proposal { direction: Direction::Tangent(xi), rule: StepRule::Unit, inner_iters: iters, operator_applies: 0 })
        },
        on_record,
    )
}
