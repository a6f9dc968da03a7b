//! Common interface over the Tucker and TT formats used by the solver loop.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::operators::{ExpSum, Operator};
use crate::tensor::{DenseTensor, Mat};
use crate::tt::{self, TtPoint, TtTangent, TtTensor};
use crate::tucker::{self, TuckerPoint, TuckerSum, TuckerTangent, TuckerTensor};

/// A low-rank format with a fixed-rank manifold, its tangent spaces and an
/// exact (possibly high-rank) representation for sums and operator images.
pub trait Format {
    /// Point on the manifold.
    type Point: Clone;
    /// Cached geometry at a point.
    type Base;
    type Tangent: Clone;
    /// Exact representation of general tensors.
    type Full: Clone;

    fn name() -> &'static str;

    fn base(x: &Self::Point) -> Result<Arc<Self::Base>>;
    fn base_point(b: &Self::Base) -> Self::Point;
    /// Interior ranks of a point (Tucker: one per mode, TT: `r_1..r_{d-1}`).
    fn ranks(x: &Self::Point) -> Vec<usize>;
    fn full_ranks(z: &Self::Full) -> Vec<usize>;

    fn point_full(x: &Self::Point) -> Self::Full;
    fn apply(op: &Operator, z: &Self::Full) -> Result<Self::Full>;
    fn lincomb(a: f64, x: &Self::Full, b: f64, y: &Self::Full) -> Result<Self::Full>;
    /// Exact re-representation with orthonormal factors; norms and inner
    /// products of the result do not suffer from cancellation between terms.
    fn compress(z: &Self::Full) -> Result<Self::Full>;
    fn round_tol(z: &Self::Full, eps: f64) -> Result<Self::Full>;
    fn inner(x: &Self::Full, y: &Self::Full) -> Result<f64>;
    fn norm(z: &Self::Full) -> Result<f64>;
    fn dense(z: &Self::Full) -> Result<DenseTensor>;

    fn project(b: &Arc<Self::Base>, z: &Self::Full) -> Result<Self::Tangent>;
    fn tangent_zero(b: &Arc<Self::Base>) -> Self::Tangent;
    fn tangent_full(t: &Self::Tangent) -> Self::Full;
    /// `a·X + b·ξ` with ranks at most `2r`.
    fn affine(t: &Self::Tangent, a: f64, b: f64) -> Self::Full;
    fn tangent_inner(s: &Self::Tangent, t: &Self::Tangent) -> Result<f64>;
    fn tangent_axpy(s: &mut Self::Tangent, alpha: f64, t: &Self::Tangent) -> Result<()>;
    fn tangent_scale(s: &mut Self::Tangent, alpha: f64);

    /// Truncation of an exact tensor to the given ranks.
    fn truncate(z: &Self::Full, ranks: &[usize]) -> Result<Self::Point>;

    fn precond_term(p: &ExpSum, j: usize, z: &Self::Full) -> Result<Self::Full>;

    /// Standard normal factors/cores, orthogonalized.
    fn random_point<R: Rng + ?Sized>(dims: &[usize], ranks: &[usize], rng: &mut R) -> Result<Self::Point>;
    fn scale_point(x: Self::Point, alpha: f64) -> Self::Point;
}

pub struct TuckerFormat;
pub struct TtFormat;

impl Format for TuckerFormat {
    type Point = TuckerTensor;
    type Base = TuckerPoint;
    type Tangent = TuckerTangent;
    type Full = TuckerSum;

    fn name() -> &'static str {
        "tucker"
    }

    fn base(x: &TuckerTensor) -> Result<Arc<TuckerPoint>> {
        Ok(Arc::new(if x.max_orthogonality_defect() <= 1e-12 { TuckerPoint::new(x.clone())? } else { TuckerPoint::from_tensor(x)? }))
    }

    fn base_point(b: &TuckerPoint) -> TuckerTensor {
        b.tensor().clone()
    }

    fn ranks(x: &TuckerTensor) -> Vec<usize> {
        x.ranks()
    }

    fn full_ranks(z: &TuckerSum) -> Vec<usize> {
        let dims = z.dims();
        z.block_ranks().iter().zip(dims).map(|(r, n)| (*r).min(n)).collect()
    }

    fn point_full(x: &TuckerTensor) -> TuckerSum {
        x.clone().into()
    }

    fn apply(op: &Operator, z: &TuckerSum) -> Result<TuckerSum> {
        op.apply_tucker(z)
    }

    fn lincomb(a: f64, x: &TuckerSum, b: f64, y: &TuckerSum) -> Result<TuckerSum> {
        let mut out = x.clone().scaled(a);
        out.add_scaled(b, y)?;
        Ok(out)
    }

    fn compress(z: &TuckerSum) -> Result<TuckerSum> {
        Ok(z.orthonormalize()?.into())
    }

    fn round_tol(z: &TuckerSum, eps: f64) -> Result<TuckerSum> {
        Ok(z.truncate_to_tol(eps, usize::MAX)?.into())
    }

    fn inner(x: &TuckerSum, y: &TuckerSum) -> Result<f64> {
        x.inner(y)
    }

    fn norm(z: &TuckerSum) -> Result<f64> {
        Ok(z.orthonormalize()?.core.norm())
    }

    fn dense(z: &TuckerSum) -> Result<DenseTensor> {
        z.to_dense()
    }

    fn project(b: &Arc<TuckerPoint>, z: &TuckerSum) -> Result<TuckerTangent> {
        tucker::project(b, z)
    }

    fn tangent_zero(b: &Arc<TuckerPoint>) -> TuckerTangent {
        TuckerTangent::zero(b)
    }

    fn tangent_full(t: &TuckerTangent) -> TuckerSum {
        t.to_sum()
    }

    fn affine(t: &TuckerTangent, a: f64, b: f64) -> TuckerSum {
        t.affine_sum(a, b)
    }

    fn tangent_inner(s: &TuckerTangent, t: &TuckerTangent) -> Result<f64> {
        s.inner(t)
    }

    fn tangent_axpy(s: &mut TuckerTangent, alpha: f64, t: &TuckerTangent) -> Result<()> {
        s.axpy(alpha, t)
    }

    fn tangent_scale(s: &mut TuckerTangent, alpha: f64) {
        s.scale(alpha)
    }

    fn truncate(z: &TuckerSum, ranks: &[usize]) -> Result<TuckerTensor> {
        z.truncate_to_ranks(ranks)
    }

    fn precond_term(p: &ExpSum, j: usize, z: &TuckerSum) -> Result<TuckerSum> {
        Ok(p.term_tucker(j, z))
    }

    fn random_point<R: Rng + ?Sized>(dims: &[usize], ranks: &[usize], rng: &mut R) -> Result<TuckerTensor> {
        let core = DenseTensor::from_fn(ranks, |_| StandardNormal.sample(rng));
        let factors = dims.iter().zip(ranks).map(|(&n, &r)| Mat::from_fn(n, r, |_, _| StandardNormal.sample(rng))).collect();
        TuckerTensor::new(core, factors)?.orthonormalize()
    }

    fn scale_point(x: TuckerTensor, alpha: f64) -> TuckerTensor {
        x.scaled(alpha)
    }
}

impl Format for TtFormat {
    type Point = TtTensor;
    type Base = TtPoint;
    type Tangent = TtTangent;
    type Full = TtTensor;

    fn name() -> &'static str {
        "tt"
    }

    fn base(x: &TtTensor) -> Result<Arc<TtPoint>> {
        Ok(Arc::new(TtPoint::new(x)?))
    }

    fn base_point(b: &TtPoint) -> TtTensor {
        b.tensor()
    }

    fn ranks(x: &TtTensor) -> Vec<usize> {
        let r = x.ranks();
        r[1..r.len() - 1].to_vec()
    }

    fn full_ranks(z: &TtTensor) -> Vec<usize> {
        let r = z.ranks();
        r[1..r.len() - 1].to_vec()
    }

    fn point_full(x: &TtTensor) -> TtTensor {
        x.clone()
    }

    fn apply(op: &Operator, z: &TtTensor) -> Result<TtTensor> {
        op.apply_tt(z)
    }

    fn lincomb(a: f64, x: &TtTensor, b: f64, y: &TtTensor) -> Result<TtTensor> {
        x.lincomb(a, y, b)
    }

    fn compress(z: &TtTensor) -> Result<TtTensor> {
        // exact up to roundoff; drops only numerically zero singular values
        Ok(z.round_to_tol(1e-15, usize::MAX))
    }

    fn round_tol(z: &TtTensor, eps: f64) -> Result<TtTensor> {
        Ok(z.round_to_tol(eps, usize::MAX))
    }

    fn inner(x: &TtTensor, y: &TtTensor) -> Result<f64> {
        x.inner(y)
    }

    fn norm(z: &TtTensor) -> Result<f64> {
        Ok(z.norm())
    }

    fn dense(z: &TtTensor) -> Result<DenseTensor> {
        z.to_dense()
    }

    fn project(b: &Arc<TtPoint>, z: &TtTensor) -> Result<TtTangent> {
        tt::project(b, z)
    }

    fn tangent_zero(b: &Arc<TtPoint>) -> TtTangent {
        TtTangent::zero(b)
    }

    fn tangent_full(t: &TtTangent) -> TtTensor {
        t.to_tt()
    }

    fn affine(t: &TtTangent, a: f64, b: f64) -> TtTensor {
        t.affine_tt(a, b)
    }

    fn tangent_inner(s: &TtTangent, t: &TtTangent) -> Result<f64> {
        s.inner(t)
    }

    fn tangent_axpy(s: &mut TtTangent, alpha: f64, t: &TtTangent) -> Result<()> {
        s.axpy(alpha, t)
    }

    fn tangent_scale(s: &mut TtTangent, alpha: f64) {
        s.scale(alpha)
    }

    fn truncate(z: &TtTensor, ranks: &[usize]) -> Result<TtTensor> {
        z.round_to_ranks(ranks)
    }

    fn precond_term(p: &ExpSum, j: usize, z: &TtTensor) -> Result<TtTensor> {
        p.term_tt(j, z)
    }

    fn random_point<R: Rng + ?Sized>(dims: &[usize], ranks: &[usize], rng: &mut R) -> Result<TtTensor> {
        Ok(TtTensor::random(dims, ranks, rng)?.orthogonalize(dims.len() - 1))
    }

    fn scale_point(x: TtTensor, alpha: f64) -> TtTensor {
        x.scaled(alpha)
    }
}
