//! Tensor trains: cores of shape `r_{μ-1} × n_μ × r_μ`, orthogonalization,
//! TT-SVD rounding, gauged tangent vectors, projection and retraction.
//!
//! Tangent vectors use the per-μ orthogonal representation: component μ is
//! `X_{≤μ-1} δU_μ X_{≥μ+1}` with left-orthogonal cores to the left of μ and
//! right-orthogonal cores to the right. All interface Gram matrices are then
//! identities and the component-wise Frobenius product is the exact metric.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{mismatch, Error, Result};
use crate::linalg::{math, qr_thin, truncated_svd};
use crate::tensor::{DenseTensor, Mat, DENSE_SAFETY_BOUND};

/// `r_{μ-1} n_μ × r_μ` view of a core.
pub fn left_unfold(c: &DenseTensor) -> Mat {
    let d = c.dims();
    Mat::from_column_slice(d[0] * d[1], d[2], c.data())
}

/// `r_{μ-1} × n_μ r_μ` view of a core.
pub fn right_unfold(c: &DenseTensor) -> Mat {
    let d = c.dims();
    Mat::from_column_slice(d[0], d[1] * d[2], c.data())
}

/// Core from its left or right unfolding (both share the colex storage).
pub fn core_from(m: &Mat, rl: usize, n: usize, rr: usize) -> DenseTensor {
    debug_assert_eq!(m.len(), rl * n * rr);
    DenseTensor::new(alloc::vec![rl, n, rr], m.as_slice().to_vec()).expect("core shape")
}

/// `Σ_i A(i)ᵀ E B(i)`: one step of a left-to-right contraction.
pub fn contract_left(e: &Mat, a: &DenseTensor, b: &DenseTensor) -> Mat {
    let (ra, n, rb) = (a.dims()[0], a.dims()[1], b.dims()[2]);
    let t = e * right_unfold(b);
    let t = Mat::from_column_slice(ra * n, rb, t.as_slice());
    left_unfold(a).transpose() * t
}

/// `Σ_i A(i) E B(i)ᵀ`: one step of a right-to-left contraction.
pub fn contract_right(e: &Mat, a: &DenseTensor, b: &DenseTensor) -> Mat {
    let (ra, n, rb2) = (a.dims()[0], a.dims()[1], e.ncols());
    let t = left_unfold(a) * e;
    let t = Mat::from_column_slice(ra, n * rb2, t.as_slice());
    t * right_unfold(b).transpose()
}

/// Tensor train `X(i₁,…,i_d) = U₁(i₁)⋯U_d(i_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TtTensor {
    cores: Vec<DenseTensor>,
}

impl TtTensor {
    pub fn new(cores: Vec<DenseTensor>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::InvalidArgument("a tensor train needs at least one core".into()));
        }
        for (m, c) in cores.iter().enumerate() {
            if c.order() != 3 {
                return Err(mismatch(alloc::format!("core {m} is not three-dimensional")));
            }
        }
        if cores[0].dims()[0] != 1 || cores[cores.len() - 1].dims()[2] != 1 {
            return Err(mismatch("boundary TT ranks must be 1"));
        }
        for m in 1..cores.len() {
            if cores[m - 1].dims()[2] != cores[m].dims()[0] {
                return Err(mismatch(alloc::format!("rank mismatch between cores {} and {m}", m - 1)));
            }
        }
        Ok(Self { cores })
    }

    /// Standard normal cores.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], ranks: &[usize], rng: &mut R) -> Result<Self> {
        if ranks.len() + 1 != dims.len() {
            return Err(mismatch("expected d-1 interior ranks"));
        }
        let full: Vec<usize> = core::iter::once(1).chain(ranks.iter().copied()).chain(core::iter::once(1)).collect();
        let cores = dims
            .iter()
            .enumerate()
            .map(|(m, &n)| DenseTensor::from_fn(&[full[m], n, full[m + 1]], |_| StandardNormal.sample(rng)))
            .collect();
        Self::new(cores)
    }

    /// `v₁ ∘ ⋯ ∘ v_d`.
    pub fn rank_one(vectors: &[&[f64]]) -> Result<Self> {
        let cores = vectors
            .iter()
            .map(|v| DenseTensor::new(alloc::vec![1, v.len(), 1], v.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(cores)
    }

    /// TT-SVD of a dense tensor with relative accuracy `eps`.
    pub fn from_dense(t: &DenseTensor, eps: f64) -> Result<Self> {
        let dims = t.dims().to_vec();
        let d = dims.len();
        let delta = if d > 1 { eps * t.norm() / math::sqrt((d - 1) as f64) } else { 0.0 };
        let mut cores = Vec::with_capacity(d);
        let mut rest = Mat::from_column_slice(dims[0], t.len() / dims[0], t.data());
        let mut rl = 1;
        for m in 0..d - 1 {
            let (u, s, v) = truncated_svd(&rest, usize::MAX);
            let k = rank_for_tol(&s, delta);
            cores.push(core_from(&u.columns(0, k).into_owned(), rl, dims[m], k));
            let sv = Mat::from_diagonal(&nalgebra::DVector::from_column_slice(&s[..k])) * v.columns(0, k).transpose();
            let cols = sv.ncols() / dims[m + 1];
            rest = Mat::from_column_slice(k * dims[m + 1], cols, sv.as_slice());
            rl = k;
        }
        cores.push(core_from(&rest, rl, dims[d - 1], 1));
        Self::new(cores)
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[1]).collect()
    }

    /// `(r_0, r_1, …, r_d)` with `r_0 = r_d = 1`.
    pub fn ranks(&self) -> Vec<usize> {
        core::iter::once(1).chain(self.cores.iter().map(|c| c.dims()[2])).collect()
    }

    pub fn max_rank(&self) -> usize {
        self.ranks().into_iter().max().unwrap_or(1)
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    pub fn core(&self, m: usize) -> &DenseTensor {
        &self.cores[m]
    }

    pub fn into_cores(self) -> Vec<DenseTensor> {
        self.cores
    }

    /// Replaces core `m` (shape must be unchanged).
    pub fn set_core(&mut self, m: usize, c: DenseTensor) -> Result<()> {
        if c.dims() != self.cores[m].dims() {
            return Err(mismatch("replacement core has a different shape"));
        }
        self.cores[m] = c;
        Ok(())
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        let dims = self.dims();
        let entries: usize = dims.iter().product();
        if entries > DENSE_SAFETY_BOUND {
            return Err(Error::DenseTooLarge { entries, bound: DENSE_SAFETY_BOUND });
        }
        let mut p = Mat::from_element(1, 1, 1.0);
        for c in &self.cores {
            let rows = p.nrows();
            let prod = p * right_unfold(c);
            p = Mat::from_column_slice(rows * c.dims()[1], c.dims()[2], prod.as_slice());
        }
        DenseTensor::new(dims, p.as_slice().to_vec())
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(mismatch("inner product of tensor trains with different dimensions"));
        }
        let mut e = Mat::from_element(1, 1, 1.0);
        for (a, b) in self.cores.iter().zip(&other.cores) {
            e = contract_left(&e, a, b);
        }
        Ok(e[(0, 0)])
    }

    pub fn norm(&self) -> f64 {
        let o = self.orthogonalize(self.order() - 1);
        o.cores[o.order() - 1].norm()
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        let last = self.cores.len() - 1;
        self.cores[last].scale(alpha);
        self
    }

    /// `alpha·self + beta·other` with block-diagonal cores (ranks add).
    pub fn lincomb(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(mismatch("sum of tensor trains with different dimensions"));
        }
        let d = self.order();
        if d == 1 {
            let mut c = self.cores[0].clone().scaled(alpha);
            c.axpy(beta, &other.cores[0])?;
            return Self::new(alloc::vec![c]);
        }
        let mut cores = Vec::with_capacity(d);
        for m in 0..d {
            let (a, b) = (&self.cores[m], &other.cores[m]);
            let n = a.dims()[1];
            let (al, ar, bl, br) = (a.dims()[0], a.dims()[2], b.dims()[0], b.dims()[2]);
            let (rl, rr) = if m == 0 { (1, ar + br) } else if m == d - 1 { (al + bl, 1) } else { (al + bl, ar + br) };
            let mut c = DenseTensor::zeros(&[rl, n, rr]);
            let (sa, sb) = if m == d - 1 { (alpha, beta) } else { (1.0, 1.0) };
            let (boff_l, boff_r) = if m == 0 { (0, ar) } else if m == d - 1 { (al, 0) } else { (al, ar) };
            let data = c.data_mut();
            for q in 0..ar {
                for i in 0..n {
                    for p in 0..al {
                        data[p + rl * (i + n * q)] = sa * a.data()[p + al * (i + n * q)];
                    }
                }
            }
            for q in 0..br {
                for i in 0..n {
                    for p in 0..bl {
                        data[(p + boff_l) + rl * (i + n * (q + boff_r))] = sb * b.data()[p + bl * (i + n * q)];
                    }
                }
            }
            cores.push(c);
        }
        Self::new(cores)
    }

    /// Left-orthogonalizes cores `0..upto` by successive QR, pushing the
    /// triangular factors right. Ranks may shrink if an unfolding is wide.
    pub fn left_orthogonalize(&mut self, upto: usize) {
        for m in 0..upto.min(self.order() - 1) {
            let c = &self.cores[m];
            let (rl, n) = (c.dims()[0], c.dims()[1]);
            let (q, r) = qr_thin(&left_unfold(c));
            let k = q.ncols();
            self.cores[m] = core_from(&q, rl, n, k);
            let next = &self.cores[m + 1];
            let (n2, rr2) = (next.dims()[1], next.dims()[2]);
            let moved = r * right_unfold(next);
            self.cores[m + 1] = core_from(&moved, k, n2, rr2);
        }
    }

    /// Right-orthogonalizes cores `downto+1..d` (rows orthonormal), pushing
    /// factors left.
    pub fn right_orthogonalize(&mut self, downto: usize) {
        for m in (downto + 1..self.order()).rev() {
            let c = &self.cores[m];
            let (n, rr) = (c.dims()[1], c.dims()[2]);
            // Mᵀ = QR  ⇒  M = Rᵀ Qᵀ
            let (q, r) = qr_thin(&right_unfold(c).transpose());
            let k = q.ncols();
            self.cores[m] = core_from(&q.transpose(), k, n, rr);
            let prev = &self.cores[m - 1];
            let (rl0, n0) = (prev.dims()[0], prev.dims()[1]);
            let moved = left_unfold(prev) * r.transpose();
            self.cores[m - 1] = core_from(&moved, rl0, n0, k);
        }
    }

    /// μ-orthogonal copy (zero-based `mu`).
    pub fn orthogonalize(&self, mu: usize) -> Self {
        let mut t = self.clone();
        t.left_orthogonalize(mu);
        t.right_orthogonalize(mu);
        t
    }

    /// Rounds to the given interior ranks `(r_1, …, r_{d-1})`.
    pub fn round_to_ranks(&self, ranks: &[usize]) -> Result<Self> {
        if ranks.len() + 1 != self.order() {
            return Err(mismatch("expected d-1 interior ranks"));
        }
        self.round(|m, s| {
            let r = ranks[m];
            if r == 0 || s.len() < r || !(s[r - 1] > 1e-15 * s[0].max(f64::MIN_POSITIVE)) {
                Err(Error::RankCollapse { mode: m })
            } else {
                Ok(r)
            }
        })
    }

    /// Rounds with relative accuracy `eps`, capping every rank at `max_rank`.
    pub fn round_to_tol(&self, eps: f64, max_rank: usize) -> Self {
        let d = self.order();
        if d == 1 {
            return self.clone();
        }
        let mut delta = None;
        self.round(|_, s| {
            // the first truncation sees the full norm in its singular values
            let dl = *delta.get_or_insert_with(|| {
                let nrm = math::sqrt(s.iter().map(|x| x * x).sum::<f64>());
                eps * nrm / math::sqrt((d - 1) as f64)
            });
            Ok(rank_for_tol(s, dl).min(max_rank.max(1)))
        })
        .expect("tolerance rounding never fails")
    }

    fn round(&self, mut choose: impl FnMut(usize, &[f64]) -> Result<usize>) -> Result<Self> {
        let d = self.order();
        let mut t = self.clone();
        t.left_orthogonalize(d - 1);
        for m in (1..d).rev() {
            let c = &t.cores[m];
            let (rl, n, rr) = (c.dims()[0], c.dims()[1], c.dims()[2]);
            let (u, s, v) = truncated_svd(&right_unfold(c), usize::MAX);
            let k = choose(m - 1, &s)?;
            t.cores[m] = core_from(&v.columns(0, k).transpose(), k, n, rr);
            let us = u.columns(0, k) * Mat::from_diagonal(&nalgebra::DVector::from_column_slice(&s[..k]));
            let prev = &t.cores[m - 1];
            let (rl0, n0) = (prev.dims()[0], prev.dims()[1]);
            t.cores[m - 1] = core_from(&(left_unfold(prev) * us), rl0, n0, k);
            let _ = rl;
        }
        Ok(t)
    }

    /// `X_{≥m+1} X_{≥m+1}ᵀ` (zero-based `m`), `r_m × r_m`.
    pub fn right_gram(&self, m: usize) -> Mat {
        let mut e = Mat::from_element(1, 1, 1.0);
        for c in self.cores[m + 1..].iter().rev() {
            e = contract_right(&e, c, c);
        }
        e
    }
}

fn rank_for_tol(s: &[f64], delta: f64) -> usize {
    let mut tail = 0.0;
    let mut k = s.len();
    while k > 1 && tail + s[k - 1] * s[k - 1] <= delta * delta {
        tail += s[k - 1] * s[k - 1];
        k -= 1;
    }
    k.max(1)
}

/// A point on the fixed-TT-rank manifold, stored twice: left-orthogonal cores
/// `U` (the last one carries the norm) and right-orthogonal cores `V` (the
/// first one carries the norm).
#[derive(Debug, Clone)]
pub struct TtPoint {
    u: Vec<DenseTensor>,
    v: Vec<DenseTensor>,
}

impl TtPoint {
    pub fn new(x: &TtTensor) -> Result<Self> {
        let ranks = x.ranks();
        let dims = x.dims();
        for m in 0..x.order() {
            if ranks[m + 1] > ranks[m] * dims[m] || ranks[m] > dims[m] * ranks[m + 1] {
                return Err(Error::InvalidArgument(alloc::format!("TT rank {} is not attainable", m + 1)));
            }
        }
        let d = x.order();
        let left = x.orthogonalize(d - 1);
        if left.ranks() != ranks {
            return Err(Error::RankCollapse { mode: 0 });
        }
        let mut right = left.clone();
        right.right_orthogonalize(0);
        Ok(Self { u: left.cores, v: right.cores })
    }

    pub fn order(&self) -> usize {
        self.u.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.u.iter().map(|c| c.dims()[1]).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        core::iter::once(1).chain(self.u.iter().map(|c| c.dims()[2])).collect()
    }

    pub fn interior_ranks(&self) -> Vec<usize> {
        let r = self.ranks();
        r[1..r.len() - 1].to_vec()
    }

    /// Left-orthogonal core `m` (the last one is unnormalized).
    pub fn u(&self, m: usize) -> &DenseTensor {
        &self.u[m]
    }

    /// Right-orthogonal core `m` (the first one is unnormalized).
    pub fn v(&self, m: usize) -> &DenseTensor {
        &self.v[m]
    }

    /// The d-orthogonal representation.
    pub fn tensor(&self) -> TtTensor {
        TtTensor { cores: self.u.clone() }
    }

    pub fn norm(&self) -> f64 {
        self.u[self.order() - 1].norm()
    }

    /// Removes the component along `U_m` from a left unfolding (twice, for
    /// stability). The last core carries no gauge.
    pub fn perp(&self, m: usize, du: &Mat) -> Mat {
        if m + 1 == self.order() {
            return du.clone();
        }
        let u = left_unfold(&self.u[m]);
        let mut w = du - &u * (u.transpose() * du);
        w -= &u * (u.transpose() * &w);
        w
    }

    /// `Σ_μ (r_{μ-1} n_μ r_μ − r_μ²)` plus the last core.
    pub fn tangent_dim(&self) -> usize {
        let r = self.ranks();
        let n = self.dims();
        let d = self.order();
        (0..d).map(|m| r[m] * n[m] * r[m + 1] - if m + 1 < d { r[m + 1] * r[m + 1] } else { 0 }).sum()
    }

    /// Left contractions `X_{≤m}ᵀ Z_{≤m}` for `m = -1..d-1` (index shifted by
    /// one: entry 0 is the 1×1 identity).
    pub fn left_contractions(&self, z: &TtTensor) -> Vec<Mat> {
        let mut out = Vec::with_capacity(self.order() + 1);
        out.push(Mat::from_element(1, 1, 1.0));
        for m in 0..self.order() {
            let e = contract_left(&out[m], &self.u[m], z.core(m));
            out.push(e);
        }
        out
    }

    /// Right contractions `Z_{≥m} X_{≥m}ᵀ` with the right-orthogonal cores;
    /// entry `m` for `m = 0..d`, entry `d` is the 1×1 identity.
    pub fn right_contractions(&self, z: &TtTensor) -> Vec<Mat> {
        let d = self.order();
        let mut out = alloc::vec![Mat::zeros(0, 0); d + 1];
        out[d] = Mat::from_element(1, 1, 1.0);
        for m in (0..d).rev() {
            out[m] = contract_right(&out[m + 1], z.core(m), &self.v[m]);
        }
        out
    }
}

/// Tangent vector `Σ_μ X_{≤μ-1} δU_μ X_{≥μ+1}` with gauge
/// `(U_μᴸ)ᵀ δU_μᴸ = 0` for all but the last core.
#[derive(Debug, Clone)]
pub struct TtTangent {
    pub base: Arc<TtPoint>,
    pub d_cores: Vec<DenseTensor>,
}

impl TtTangent {
    pub fn zero(base: &Arc<TtPoint>) -> Self {
        let d_cores = base.u.iter().map(|c| DenseTensor::zeros(c.dims())).collect();
        Self { base: base.clone(), d_cores }
    }

    fn check_base(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.base, &other.base) {
            Ok(())
        } else {
            Err(Error::BasePointMismatch)
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for c in &mut self.d_cores {
            c.scale(alpha);
        }
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        self.scale(alpha);
        self
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_base(other)?;
        for (a, b) in self.d_cores.iter_mut().zip(&other.d_cores) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_base(other)?;
        let mut acc = 0.0;
        for (a, b) in self.d_cores.iter().zip(&other.d_cores) {
            acc += a.inner(b)?;
        }
        Ok(acc)
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.inner(self).unwrap_or(0.0).max(0.0))
    }

    /// Largest `‖(U_μᴸ)ᵀ δU_μᴸ‖ / ‖δU_μ‖` over the gauged cores.
    pub fn gauge_defect(&self) -> f64 {
        let d = self.d_cores.len();
        (0..d.saturating_sub(1))
            .map(|m| {
                let du = left_unfold(&self.d_cores[m]);
                let n = du.norm();
                if n == 0.0 {
                    0.0
                } else {
                    (left_unfold(&self.base.u[m]).transpose() * du).norm() / n
                }
            })
            .fold(0.0, f64::max)
    }

    /// Re-imposes the gauge by projecting every gauged core.
    pub fn regauge(&mut self) {
        let d = self.d_cores.len();
        for m in 0..d.saturating_sub(1) {
            let dims = self.d_cores[m].dims().to_vec();
            let w = self.base.perp(m, &left_unfold(&self.d_cores[m]));
            self.d_cores[m] = core_from(&w, dims[0], dims[1], dims[2]);
        }
    }

    /// Embedding as a TT tensor of ranks at most `2r`.
    pub fn to_tt(&self) -> TtTensor {
        self.affine_tt(0.0, 1.0)
    }

    /// `a·X + b·ξ` as a TT tensor of ranks at most `2r`.
    pub fn affine_tt(&self, a: f64, b: f64) -> TtTensor {
        let p = &self.base;
        let d = p.order();
        if d == 1 {
            let mut c = self.d_cores[0].clone().scaled(b);
            c.axpy(a, &p.u[0]).expect("same shape");
            return TtTensor { cores: alloc::vec![c] };
        }
        let mut cores = Vec::with_capacity(d);
        for m in 0..d {
            let (u, v, du) = (&p.u[m], &p.v[m], &self.d_cores[m]);
            let (rl, n, rr) = (u.dims()[0], u.dims()[1], u.dims()[2]);
            let (nl, nr) = (if m == 0 { 1 } else { 2 * rl }, if m == d - 1 { 1 } else { 2 * rr });
            let mut c = DenseTensor::zeros(&[nl, n, nr]);
            let data = c.data_mut();
            let put = |data: &mut [f64], src: &DenseTensor, coef: f64, lo: usize, ro: usize| {
                let (sl, sn, sr) = (src.dims()[0], src.dims()[1], src.dims()[2]);
                for q in 0..sr {
                    for i in 0..sn {
                        for pp in 0..sl {
                            data[(pp + lo) + nl * (i + n * (q + ro))] += coef * src.data()[pp + sl * (i + sn * q)];
                        }
                    }
                }
            };
            if m == 0 {
                // [b·δU₁, U₁]
                put(data, du, b, 0, 0);
                put(data, u, 1.0, 0, rr);
            } else if m == d - 1 {
                // [[V_d], [b·δU_d + a·U_d]]
                put(data, v, 1.0, 0, 0);
                put(data, du, b, rl, 0);
                put(data, u, a, rl, 0);
            } else {
                // [[V, 0], [b·δU, U]]
                put(data, v, 1.0, 0, 0);
                put(data, du, b, rl, 0);
                put(data, u, 1.0, rl, rr);
            }
            cores.push(c);
        }
        TtTensor { cores }
    }
}

/// Orthogonal projection of a TT tensor onto `T_X`.
pub fn project(base: &Arc<TtPoint>, z: &TtTensor) -> Result<TtTangent> {
    let mut t = project_ungauged(base, z)?;
    t.regauge();
    Ok(t)
}

/// Components `X_{≤μ-1}ᵀ Z X_{≥μ+1}ᵀ` without removing the `U_μ` part.
pub fn project_ungauged(base: &Arc<TtPoint>, z: &TtTensor) -> Result<TtTangent> {
    if z.dims() != base.dims() {
        return Err(mismatch("projection target has different dimensions"));
    }
    let left = base.left_contractions(z);
    let right = base.right_contractions(z);
    let d = base.order();
    let mut d_cores = Vec::with_capacity(d);
    for m in 0..d {
        let zc = z.core(m);
        let n = zc.dims()[1];
        let (rl, rr) = (base.u[m].dims()[0], base.u[m].dims()[2]);
        let t = &left[m] * right_unfold(zc);
        let t = Mat::from_column_slice(rl * n, zc.dims()[2], t.as_slice());
        let y = t * &right[m + 1];
        d_cores.push(core_from(&y, rl, n, rr));
    }
    Ok(TtTangent { base: base.clone(), d_cores })
}

/// Projection of a dense tensor (test scale).
pub fn project_dense(base: &Arc<TtPoint>, z: &DenseTensor) -> Result<TtTangent> {
    project(base, &TtTensor::from_dense(z, 0.0)?)
}

/// TT-SVD retraction `R(X + αξ)` back to the ranks of the base point.
pub fn retract(xi: &TtTangent, alpha: f64) -> Result<TtTensor> {
    xi.affine_tt(1.0, alpha).round_to_ranks(&xi.base.interior_ranks())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_diff(a: &DenseTensor, b: &DenseTensor) -> f64 {
        let mut d = a.clone();
        d.axpy(-1.0, b).unwrap();
        d.norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    fn rand_point(dims: &[usize], ranks: &[usize], rng: &mut ChaCha8Rng) -> Arc<TtPoint> {
        Arc::new(TtPoint::new(&TtTensor::random(dims, ranks, rng).unwrap()).unwrap())
    }

    fn rand_dense(dims: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
        DenseTensor::from_fn(dims, |_| StandardNormal.sample(rng))
    }

    /// Dense X_{≤μ-1} δU X_{≥μ+1} summed over μ by explicit index loops.
    fn dense_tangent(xi: &TtTangent) -> DenseTensor {
        let p = &xi.base;
        let d = p.order();
        let dims = p.dims();
        DenseTensor::from_fn(&dims, |idx| {
            let mut total = 0.0;
            for mu in 0..d {
                let mut row = Mat::from_element(1, 1, 1.0);
                for m in 0..d {
                    let c = if m < mu { &p.u[m] } else if m == mu { &xi.d_cores[m] } else { &p.v[m] };
                    let (rl, n, rr) = (c.dims()[0], c.dims()[1], c.dims()[2]);
                    let slice = Mat::from_fn(rl, rr, |a, b| c.data()[a + rl * (idx[m] + n * b)]);
                    row *= slice;
                }
                total += row[(0, 0)];
            }
            total
        })
    }

    #[test]
    fn dense_round_trip_and_inner() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = TtTensor::random(&[3, 4, 5, 2], &[2, 3, 2], &mut rng).unwrap();
        let dense = x.to_dense().unwrap();
        let back = TtTensor::from_dense(&dense, 1e-13).unwrap();
        assert!(rel_diff(&back.to_dense().unwrap(), &dense) < 1e-12);
        assert!(back.ranks() == alloc::vec![1, 2, 3, 2, 1]);
        let y = TtTensor::random(&[3, 4, 5, 2], &[1, 2, 2], &mut rng).unwrap();
        let ip = x.inner(&y).unwrap();
        let dip = dense.inner(&y.to_dense().unwrap()).unwrap();
        assert!((ip - dip).abs() < 1e-12 * x.norm() * y.norm());
        assert!((x.norm() - dense.norm()).abs() < 1e-12 * dense.norm());
    }

    #[test]
    fn lincomb_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = TtTensor::random(&[3, 4, 5], &[2, 3], &mut rng).unwrap();
        let y = TtTensor::random(&[3, 4, 5], &[1, 2], &mut rng).unwrap();
        let s = x.lincomb(2.0, &y, -0.5).unwrap();
        assert_eq!(s.ranks(), alloc::vec![1, 3, 5, 1]);
        let mut expected = x.to_dense().unwrap().scaled(2.0);
        expected.axpy(-0.5, &y.to_dense().unwrap()).unwrap();
        assert!(rel_diff(&s.to_dense().unwrap(), &expected) < 1e-13);
    }

    #[test]
    fn orthogonalization_preserves_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = TtTensor::random(&[5, 5, 5, 5], &[3, 4, 2], &mut rng).unwrap();
        let dense = x.to_dense().unwrap();
        for mu in 0..4 {
            let o = x.orthogonalize(mu);
            assert!(rel_diff(&o.to_dense().unwrap(), &dense) <= 1e-13);
            for m in 0..mu {
                let l = left_unfold(o.core(m));
                assert!((l.transpose() * &l - Mat::identity(l.ncols(), l.ncols())).norm() < 1e-12);
            }
            for m in mu + 1..4 {
                let r = right_unfold(o.core(m));
                assert!((&r * r.transpose() - Mat::identity(r.nrows(), r.nrows())).norm() < 1e-12);
            }
        }
        // rank one: unit vectors, norm in the target core
        let a = [1.0, 2.0, 2.0];
        let b = [0.0, 3.0, 4.0];
        let r1 = TtTensor::rank_one(&[&a, &b]).unwrap().orthogonalize(1);
        assert!((r1.core(0).norm() - 1.0).abs() < 1e-14);
        assert!((r1.core(1).norm() - 15.0).abs() < 1e-13);
    }

    #[test]
    fn right_gram_matches_dense_interface() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = TtTensor::random(&[4, 4, 4], &[2, 3], &mut rng).unwrap();
        // X_{≥2} as a 2 × 16 matrix, built from core slices
        let c1 = x.core(1);
        let c2 = x.core(2);
        let xg = Mat::from_fn(2, 16, |a, col| {
            let (i, j) = (col % 4, col / 4);
            (0..3).map(|b| c1.data()[a + 2 * (i + 4 * b)] * c2.data()[b + 3 * j]).sum()
        });
        let g = x.right_gram(0);
        assert!((&g - &xg * xg.transpose()).norm() < 1e-12 * g.norm());
        assert!((x.right_gram(2)[(0, 0)] - 1.0).abs() == 0.0);
    }

    #[test]
    fn rounding() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = TtTensor::random(&[4, 5, 4], &[2, 2], &mut rng).unwrap();
        let doubled = x.lincomb(1.0, &x, 1.0).unwrap();
        assert_eq!(doubled.max_rank(), 4);
        let r = doubled.round_to_ranks(&[2, 2]).unwrap();
        let expected = x.to_dense().unwrap().scaled(2.0);
        assert!(rel_diff(&r.to_dense().unwrap(), &expected) < 1e-13);
        let t = doubled.round_to_tol(1e-10, 100);
        assert_eq!(t.ranks(), alloc::vec![1, 2, 2, 1]);
        assert!(matches!(doubled.round_to_ranks(&[3, 2]), Err(Error::RankCollapse { .. })));
    }

    #[test]
    fn projection_of_point_and_orthogonal_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = rand_point(&[4, 4, 4], &[2, 2], &mut rng);
        let xi = project(&p, &p.tensor()).unwrap();
        let dense_x = p.tensor().to_dense().unwrap();
        assert!(rel_diff(&xi.to_tt().to_dense().unwrap(), &dense_x) <= 1e-12);

        // Z − P(Z) is orthogonal to the tangent space
        let z = rand_dense(&[4, 4, 4], &mut rng);
        let pz = dense_tangent(&project_dense(&p, &z).unwrap());
        let mut comp = z.clone();
        comp.axpy(-1.0, &pz).unwrap();
        let again = project_dense(&p, &comp).unwrap();
        assert!(again.d_cores.iter().all(|c| c.norm() <= 1e-10 * z.norm()));
    }

    #[test]
    fn projection_idempotent_pythagoras_gauge() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = rand_point(&[5, 5, 5], &[2, 2], &mut rng);
        let z = TtTensor::random(&[5, 5, 5], &[2, 2], &mut rng).unwrap();
        let xi = project(&p, &z).unwrap();
        assert!(xi.gauge_defect() <= 1e-12);
        let again = project(&p, &xi.to_tt()).unwrap();
        let mut diff = again.clone();
        diff.axpy(-1.0, &xi).unwrap();
        assert!(diff.norm() <= 1e-10 * xi.norm());

        let zd = z.to_dense().unwrap();
        let pz = dense_tangent(&xi);
        let mut rest = zd.clone();
        rest.axpy(-1.0, &pz).unwrap();
        let lhs = zd.norm().powi(2);
        assert!((lhs - pz.norm().powi(2) - rest.norm().powi(2)).abs() <= 1e-10 * lhs);
    }

    #[test]
    fn embedding_and_inner_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = rand_point(&[4, 4, 4, 4], &[2, 2, 2], &mut rng);
        let a = project_dense(&p, &rand_dense(&[4, 4, 4, 4], &mut rng)).unwrap();
        let b = project_dense(&p, &rand_dense(&[4, 4, 4, 4], &mut rng)).unwrap();
        let emb = a.to_tt();
        assert!(emb.ranks().iter().all(|&r| r <= 4));
        let da = dense_tangent(&a);
        assert!(rel_diff(&emb.to_dense().unwrap(), &da) <= 1e-12);
        let db = dense_tangent(&b);
        assert!((a.inner(&b).unwrap() - da.inner(&db).unwrap()).abs() <= 1e-11 * a.norm() * b.norm());
        assert!((a.inner(&a).unwrap() - da.norm().powi(2)).abs() <= 1e-11 * da.norm().powi(2));

        assert_eq!(TtTangent::zero(&p).to_tt().to_dense().unwrap().norm(), 0.0);

        // only the last component: X with its last core replaced
        let mut last = TtTangent::zero(&p);
        last.d_cores[3] = a.d_cores[3].clone();
        let mut cores = p.tensor().into_cores();
        cores[3] = a.d_cores[3].clone();
        let expected = TtTensor::new(cores).unwrap().to_dense().unwrap();
        assert!(rel_diff(&last.to_tt().to_dense().unwrap(), &expected) <= 1e-13);
    }

    #[test]
    fn retraction_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = rand_point(&[5, 5, 5], &[2, 3], &mut rng);
        let mut xi = project_dense(&p, &rand_dense(&[5, 5, 5], &mut rng)).unwrap();
        xi.scale(p.norm() / xi.norm());
        let x = p.tensor().to_dense().unwrap();
        assert!(rel_diff(&retract(&xi, 0.0).unwrap().to_dense().unwrap(), &x) <= 1e-13);

        let ts = [1e-1, 1e-2, 1e-3];
        let errs: Vec<f64> = ts
            .iter()
            .map(|&t| {
                let y = retract(&xi, t).unwrap().to_dense().unwrap();
                let mut d = xi.affine_tt(1.0, t).to_dense().unwrap();
                d.axpy(-1.0, &y).unwrap();
                d.norm()
            })
            .collect();
        let slope = (errs[0].ln() - errs[2].ln()) / (ts[0].ln() - ts[2].ln());
        assert!((slope - 2.0).abs() <= 0.1, "slope {slope}");

        // a step along the last core stays on the manifold
        let mut last = TtTangent::zero(&p);
        last.d_cores[2] = xi.d_cores[2].clone();
        let y = retract(&last, 0.5).unwrap();
        assert!(rel_diff(&y.to_dense().unwrap(), &last.affine_tt(1.0, 0.5).to_dense().unwrap()) <= 1e-12);
    }

    #[test]
    fn tangent_dimension_matches_numerical_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = rand_point(&[3, 4, 3], &[2, 2], &mut rng);
        // span of projected unit tensors
        let dims = p.dims();
        let total: usize = dims.iter().product();
        let mut basis = Mat::zeros(total, total);
        for k in 0..total {
            let mut e = DenseTensor::zeros(&dims);
            e.data_mut()[k] = 1.0;
            let t = dense_tangent(&project_dense(&p, &e).unwrap());
            basis.set_column(k, &nalgebra::DVector::from_column_slice(t.data()));
        }
        let sv = crate::linalg::singular_values(&basis);
        let rank = sv.iter().filter(|&&s| s > 1e-8).count();
        assert_eq!(rank, p.tangent_dim());
    }

    proptest::proptest! {
        #[test]
        fn projections_are_gauged(seed in 0u64..64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = rand_point(&[3, 4, 5], &[2, 3], &mut rng);
            let z = TtTensor::random(&[3, 4, 5], &[3, 2], &mut rng).unwrap();
            let xi = project(&p, &z).unwrap();
            proptest::prop_assert!(xi.gauge_defect() <= 1e-12);
        }
    }
}
