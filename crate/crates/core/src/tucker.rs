//! Tucker tensors of fixed multilinear rank: the structured sums produced by
//! operator applications, HOSVD truncation, tangent spaces with the gauge
//! `U_μᵀ δU_μ = 0`, orthogonal projection and retraction.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{mismatch, Error, Result};
use crate::linalg::{left_singular, math, qr_thin, singular_values};
use crate::tensor::{DenseTensor, Mat, DENSE_SAFETY_BOUND};

/// `S ×₁ U₁ ⋯ ×_d U_d` with arbitrary factor matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerTensor {
    pub core: DenseTensor,
    pub factors: Vec<Mat>,
}

impl TuckerTensor {
    pub fn new(core: DenseTensor, factors: Vec<Mat>) -> Result<Self> {
        if core.order() != factors.len() {
            return Err(mismatch("one factor per core mode expected"));
        }
        for (m, (u, &r)) in factors.iter().zip(core.dims()).enumerate() {
            if u.ncols() != r {
                return Err(mismatch(alloc::format!("factor {m} has {} columns, core mode has {r}", u.ncols())));
            }
        }
        Ok(Self { core, factors })
    }

    /// Rank-one tensor `u₁ ∘ ⋯ ∘ u_d`.
    pub fn rank_one(vectors: &[Mat]) -> Result<Self> {
        let d = vectors.len();
        let core = DenseTensor::new(alloc::vec![1; d], alloc::vec![1.0])?;
        Self::new(core, vectors.to_vec())
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.factors.iter().map(|u| u.nrows()).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.core.dims().to_vec()
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        self.core.scale(alpha);
        self
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        let entries: usize = self.dims().iter().product();
        if entries > DENSE_SAFETY_BOUND {
            return Err(Error::DenseTooLarge { entries, bound: DENSE_SAFETY_BOUND });
        }
        let mats: Vec<Option<&Mat>> = self.factors.iter().map(Some).collect();
        self.core.multi_mode_product(&mats)
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        TuckerSum::from(self.clone()).inner(&TuckerSum::from(other.clone()))
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.inner(self).unwrap_or(0.0).max(0.0))
    }

    /// Same tensor with orthonormal factors (thin QR per mode).
    pub fn orthonormalize(&self) -> Result<Self> {
        TuckerSum::from(self.clone()).orthonormalize()
    }

    pub fn max_orthogonality_defect(&self) -> f64 {
        self.factors
            .iter()
            .map(|u| (u.transpose() * u - Mat::identity(u.ncols(), u.ncols())).norm())
            .fold(0.0, f64::max)
    }
}

/// One term `coef · core ×_μ blocks[μ][block[μ]]` of a [`TuckerSum`].
#[derive(Debug, Clone, PartialEq)]
pub struct SumTerm {
    pub coef: f64,
    pub core: DenseTensor,
    pub block: Vec<usize>,
}

/// Sum of Tucker tensors sharing per-mode pools of factor blocks.
///
/// This is the block-sparse core layout that operator applications and
/// tangent embeddings produce: concatenating the blocks of each mode gives a
/// Tucker tensor whose core is zero outside the listed blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerSum {
    pub blocks: Vec<Vec<Mat>>,
    pub terms: Vec<SumTerm>,
}

impl From<TuckerTensor> for TuckerSum {
    fn from(t: TuckerTensor) -> Self {
        let d = t.order();
        Self {
            blocks: t.factors.into_iter().map(|u| alloc::vec![u]).collect(),
            terms: alloc::vec![SumTerm { coef: 1.0, core: t.core, block: alloc::vec![0; d] }],
        }
    }
}

impl TuckerSum {
    /// Dense tensor as a single term with identity factors.
    pub fn from_dense(t: &DenseTensor) -> Self {
        let factors = t.dims().iter().map(|&n| Mat::identity(n, n)).collect();
        TuckerTensor { core: t.clone(), factors }.into()
    }

    pub fn order(&self) -> usize {
        self.blocks.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b[0].nrows()).collect()
    }

    /// Sizes of the concatenated factors.
    pub fn block_ranks(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.iter().map(|m| m.ncols()).sum()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        for (m, pool) in self.blocks.iter().enumerate() {
            if pool.iter().any(|b| b.nrows() != dims[m]) {
                return Err(mismatch("factor blocks of one mode must share the row count"));
            }
        }
        for t in &self.terms {
            if t.block.len() != self.order() || t.core.order() != self.order() {
                return Err(mismatch("term order differs from the sum"));
            }
            for m in 0..self.order() {
                let b = self.blocks[m].get(t.block[m]).ok_or_else(|| mismatch("block index out of range"))?;
                if b.ncols() != t.core.dims()[m] {
                    return Err(mismatch("term core does not match its factor block"));
                }
            }
        }
        Ok(())
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        for t in &mut self.terms {
            t.coef *= alpha;
        }
        self
    }

    /// Concatenates `other` (scaled by `alpha`) into this sum.
    pub fn add_scaled(&mut self, alpha: f64, other: &TuckerSum) -> Result<()> {
        if other.dims() != self.dims() {
            return Err(mismatch("summands have different dimensions"));
        }
        let offsets: Vec<usize> = self.blocks.iter().map(|p| p.len()).collect();
        for (pool, extra) in self.blocks.iter_mut().zip(&other.blocks) {
            pool.extend(extra.iter().cloned());
        }
        for t in &other.terms {
            self.terms.push(SumTerm {
                coef: alpha * t.coef,
                core: t.core.clone(),
                block: t.block.iter().zip(&offsets).map(|(b, o)| b + o).collect(),
            });
        }
        Ok(())
    }

    /// Applies `f(mode, block)` to every factor block.
    pub fn map_blocks(&self, mut f: impl FnMut(usize, &Mat) -> Mat) -> Self {
        Self {
            blocks: self.blocks.iter().enumerate().map(|(m, p)| p.iter().map(|b| f(m, b)).collect()).collect(),
            terms: self.terms.clone(),
        }
    }

    pub fn to_dense(&self) -> Result<DenseTensor> {
        let dims = self.dims();
        let entries: usize = dims.iter().product();
        if entries > DENSE_SAFETY_BOUND {
            return Err(Error::DenseTooLarge { entries, bound: DENSE_SAFETY_BOUND });
        }
        let mut out = DenseTensor::zeros(&dims);
        for t in &self.terms {
            let mats: Vec<Option<&Mat>> = (0..self.order()).map(|m| Some(&self.blocks[m][t.block[m]])).collect();
            out.axpy(t.coef, &t.core.multi_mode_product(&mats)?)?;
        }
        Ok(out)
    }

    /// Concatenated factors with a block-sparse core, as one Tucker tensor.
    pub fn to_tucker(&self) -> Result<TuckerTensor> {
        let ranks = self.block_ranks();
        let offsets = self.block_offsets();
        let mut core = DenseTensor::zeros(&ranks);
        for t in &self.terms {
            let off: Vec<usize> = (0..self.order()).map(|m| offsets[m][t.block[m]]).collect();
            add_block(&mut core, &t.core, &off, t.coef);
        }
        let factors = self
            .blocks
            .iter()
            .map(|pool| {
                let n = pool[0].nrows();
                let mut u = Mat::zeros(n, pool.iter().map(|b| b.ncols()).sum());
                let mut c = 0;
                for b in pool {
                    u.columns_mut(c, b.ncols()).copy_from(b);
                    c += b.ncols();
                }
                u
            })
            .collect();
        TuckerTensor::new(core, factors)
    }

    fn block_offsets(&self) -> Vec<Vec<usize>> {
        self.blocks
            .iter()
            .map(|pool| {
                let mut acc = 0;
                pool.iter()
                    .map(|b| {
                        let o = acc;
                        acc += b.ncols();
                        o
                    })
                    .collect()
            })
            .collect()
    }

    /// Equivalent Tucker tensor with orthonormal factors. The core is
    /// accumulated term by term from the triangular factors, so the zero
    /// blocks of the concatenated core are never touched.
    pub fn orthonormalize(&self) -> Result<TuckerTensor> {
        self.validate()?;
        let d = self.order();
        let offsets = self.block_offsets();
        let mut qs = Vec::with_capacity(d);
        let mut rs = Vec::with_capacity(d);
        for pool in &self.blocks {
            let n = pool[0].nrows();
            let mut u = Mat::zeros(n, pool.iter().map(|b| b.ncols()).sum());
            let mut c = 0;
            for b in pool {
                u.columns_mut(c, b.ncols()).copy_from(b);
                c += b.ncols();
            }
            let (q, r) = qr_thin(&u);
            qs.push(q);
            rs.push(r);
        }
        let out_ranks: Vec<usize> = qs.iter().map(|q| q.ncols()).collect();
        let mut core = DenseTensor::zeros(&out_ranks);
        for t in &self.terms {
            let cols: Vec<Mat> = (0..d)
                .map(|m| rs[m].columns(offsets[m][t.block[m]], t.core.dims()[m]).into_owned())
                .collect();
            let mats: Vec<Option<&Mat>> = cols.iter().map(Some).collect();
            core.axpy(t.coef, &t.core.multi_mode_product(&mats)?)?;
        }
        TuckerTensor::new(core, qs)
    }

    /// `⟨self, other⟩` from block Gram matrices and small cores.
    pub fn inner(&self, other: &TuckerSum) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(mismatch("inner product of tensors with different dimensions"));
        }
        let d = self.order();
        // grams[m][a][b] = blocks_a ᵀ blocks'_b
        let grams: Vec<Vec<Vec<Mat>>> = (0..d)
            .map(|m| {
                self.blocks[m]
                    .iter()
                    .map(|a| other.blocks[m].iter().map(|b| a.transpose() * b).collect())
                    .collect()
            })
            .collect();
        let mut acc = 0.0;
        for s in &self.terms {
            for t in &other.terms {
                let mats: Vec<Mat> = (0..d).map(|m| grams[m][s.block[m]][t.block[m]].transpose()).collect();
                let refs: Vec<Option<&Mat>> = mats.iter().map(Some).collect();
                // ⟨C_s ×_m G_m, C_t⟩ with G = Bᵀ B' mapped onto the t-side
                let moved = s.core.multi_mode_product(&refs)?;
                acc += s.coef * t.coef * moved.inner(&t.core)?;
            }
        }
        Ok(acc)
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.inner(self).unwrap_or(0.0).max(0.0))
    }

    /// HOSVD truncation to the given multilinear ranks.
    pub fn truncate_to_ranks(&self, ranks: &[usize]) -> Result<TuckerTensor> {
        if ranks.len() != self.order() {
            return Err(mismatch("one target rank per mode expected"));
        }
        hosvd(&self.orthonormalize()?, Truncation::Ranks(ranks))
    }

    /// HOSVD truncation with relative accuracy `eps` (in the Frobenius norm),
    /// never exceeding `max_rank` per mode.
    pub fn truncate_to_tol(&self, eps: f64, max_rank: usize) -> Result<TuckerTensor> {
        hosvd(&self.orthonormalize()?, Truncation::Tol { eps, max_rank })
    }
}

enum Truncation<'a> {
    Ranks(&'a [usize]),
    Tol { eps: f64, max_rank: usize },
}

fn hosvd(x: &TuckerTensor, how: Truncation<'_>) -> Result<TuckerTensor> {
    let d = x.order();
    let total = x.core.norm();
    let mut ws = Vec::with_capacity(d);
    for m in 0..d {
        let (w, s) = left_singular(&x.core.matricize(m)?);
        let keep = match how {
            Truncation::Ranks(r) => {
                let r = r[m];
                if r == 0 || s.len() < r || !(s[r - 1] > 1e-15 * s[0].max(f64::MIN_POSITIVE)) {
                    return Err(Error::RankCollapse { mode: m });
                }
                r
            }
            Truncation::Tol { eps, max_rank } => {
                let budget = eps * eps * total * total / d as f64;
                let mut tail = 0.0;
                let mut keep = s.len();
                while keep > 1 && tail + s[keep - 1] * s[keep - 1] <= budget {
                    tail += s[keep - 1] * s[keep - 1];
                    keep -= 1;
                }
                keep.min(max_rank.max(1))
            }
        };
        ws.push(w.columns(0, keep).into_owned());
    }
    let wt: Vec<Mat> = ws.iter().map(|w| w.transpose()).collect();
    let refs: Vec<Option<&Mat>> = wt.iter().map(Some).collect();
    let core = x.core.multi_mode_product(&refs)?;
    let factors = x.factors.iter().zip(&ws).map(|(u, w)| u * w).collect();
    TuckerTensor::new(core, factors)
}

fn add_block(dst: &mut DenseTensor, src: &DenseTensor, offset: &[usize], coef: f64) {
    let ddims = dst.dims().to_vec();
    let sdims = src.dims().to_vec();
    let n0 = sdims[0];
    let mut idx = alloc::vec![0usize; sdims.len()];
    let rows = src.len() / n0;
    let sdata = src.data();
    let out = dst.data_mut();
    for row in 0..rows {
        // linear offset of (offset + (0, idx[1..]))
        let mut lin = 0;
        let mut stride = 1;
        for m in 0..ddims.len() {
            let i = if m == 0 { 0 } else { idx[m] };
            lin += (offset[m] + i) * stride;
            stride *= ddims[m];
        }
        for i in 0..n0 {
            out[lin + i] += coef * sdata[row * n0 + i];
        }
        // advance idx over modes 1..
        for m in 1..sdims.len() {
            idx[m] += 1;
            if idx[m] < sdims[m] {
                break;
            }
            idx[m] = 0;
        }
    }
}

/// A point on the manifold of fixed multilinear rank: orthonormal factors and
/// a core whose matricizations have full row rank. Pseudo-inverses of the core
/// matricizations are cached because projection and Newton need them.
#[derive(Debug, Clone)]
pub struct TuckerPoint {
    x: TuckerTensor,
    unfold: Vec<Mat>,
    gram: Vec<Mat>,
    pinv: Vec<Mat>,
}

/// Condition-number bound beyond which a core matricization counts as rank
/// deficient.
pub const CORE_COND_LIMIT: f64 = 1e12;

impl TuckerPoint {
    /// Requires orthonormal factors (to 1e-10).
    pub fn new(x: TuckerTensor) -> Result<Self> {
        let defect = x.max_orthogonality_defect();
        if defect > 1e-10 {
            return Err(Error::InvalidArgument(alloc::format!("factors are not orthonormal (defect {defect:e})")));
        }
        let d = x.order();
        let mut unfold = Vec::with_capacity(d);
        let mut gram = Vec::with_capacity(d);
        let mut pinv = Vec::with_capacity(d);
        for m in 0..d {
            let s = x.core.matricize(m)?;
            let sv = singular_values(&s);
            let smin = sv.get(s.nrows() - 1).copied().unwrap_or(0.0);
            let cond = if smin > 0.0 { sv[0] / smin } else { f64::INFINITY };
            if s.nrows() > s.ncols() || cond > CORE_COND_LIMIT {
                return Err(Error::RankDeficientCore { mode: m, cond });
            }
            let g = &s * s.transpose();
            let chol = g.clone().cholesky().ok_or(Error::RankDeficientCore { mode: m, cond })?;
            // S⁺ = Sᵀ (S Sᵀ)⁻¹
            let p = chol.solve(&s).transpose();
            unfold.push(s);
            gram.push(g);
            pinv.push(p);
        }
        Ok(Self { x, unfold, gram, pinv })
    }

    /// Orthonormalizes the factors first.
    pub fn from_tensor(x: &TuckerTensor) -> Result<Self> {
        Self::new(x.orthonormalize()?)
    }

    pub fn tensor(&self) -> &TuckerTensor {
        &self.x
    }

    pub fn core(&self) -> &DenseTensor {
        &self.x.core
    }

    pub fn factor(&self, m: usize) -> &Mat {
        &self.x.factors[m]
    }

    pub fn order(&self) -> usize {
        self.x.order()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.x.dims()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.x.ranks()
    }

    /// `S_(μ)`.
    pub fn unfolding(&self, m: usize) -> &Mat {
        &self.unfold[m]
    }

    /// `S_(μ) S_(μ)ᵀ`.
    pub fn core_gram(&self, m: usize) -> &Mat {
        &self.gram[m]
    }

    /// `S_(μ)⁺`.
    pub fn pinv(&self, m: usize) -> &Mat {
        &self.pinv[m]
    }

    /// Applies `I − U_μ U_μᵀ` twice (one reorthogonalization pass).
    pub fn perp(&self, m: usize, v: &Mat) -> Mat {
        let u = self.factor(m);
        let mut w = v - u * (u.transpose() * v);
        w -= u * (u.transpose() * &w);
        w
    }

    /// Dimension of the tangent space, `∏ r_μ + Σ (r_μ n_μ − r_μ²)`.
    pub fn tangent_dim(&self) -> usize {
        let r = self.ranks();
        let n = self.dims();
        r.iter().product::<usize>() + r.iter().zip(&n).map(|(r, n)| r * n - r * r).sum::<usize>()
    }
}

/// Tangent vector `δS ×_μ U_μ + Σ_μ S ×_μ δU_μ ×_{ν≠μ} U_ν` at a shared base
/// point.
#[derive(Debug, Clone)]
pub struct TuckerTangent {
    pub base: Arc<TuckerPoint>,
    pub d_core: DenseTensor,
    pub d_factors: Vec<Mat>,
}

impl TuckerTangent {
    pub fn zero(base: &Arc<TuckerPoint>) -> Self {
        Self {
            base: base.clone(),
            d_core: DenseTensor::zeros(&base.ranks()),
            d_factors: (0..base.order()).map(|m| Mat::zeros(base.dims()[m], base.ranks()[m])).collect(),
        }
    }

    fn check_base(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.base, &other.base) {
            Ok(())
        } else {
            Err(Error::BasePointMismatch)
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.d_core.scale(alpha);
        for u in &mut self.d_factors {
            *u *= alpha;
        }
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        self.scale(alpha);
        self
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        self.check_base(other)?;
        self.d_core.axpy(alpha, &other.d_core)?;
        for (u, v) in self.d_factors.iter_mut().zip(&other.d_factors) {
            *u += v * alpha;
        }
        Ok(())
    }

    /// Euclidean inner product of the represented tensors. The d+1 summands
    /// are mutually orthogonal, so only diagonal pairs contribute.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.check_base(other)?;
        let mut acc = self.d_core.inner(&other.d_core)?;
        for m in 0..self.d_factors.len() {
            let cross = self.d_factors[m].transpose() * &other.d_factors[m];
            acc += cross.component_mul(self.base.core_gram(m)).sum();
        }
        Ok(acc)
    }

    pub fn norm(&self) -> f64 {
        math::sqrt(self.inner(self).unwrap_or(0.0).max(0.0))
    }

    /// Largest `‖U_μᵀ δU_μ‖ / ‖δU_μ‖` over modes.
    pub fn gauge_defect(&self) -> f64 {
        self.d_factors
            .iter()
            .enumerate()
            .map(|(m, du)| {
                let n = du.norm();
                if n == 0.0 {
                    0.0
                } else {
                    (self.base.factor(m).transpose() * du).norm() / n
                }
            })
            .fold(0.0, f64::max)
    }

    /// Embedding as a sum with factor pools `[U_μ, δU_μ]`: the core `δS` sits
    /// in block `(0,…,0)` and `S` in the block selecting `δU_μ` in mode μ.
    pub fn to_sum(&self) -> TuckerSum {
        self.affine_sum(0.0, 1.0)
    }

    /// `a · X + b · ξ` as a structured sum of multilinear rank at most `2r`.
    pub fn affine_sum(&self, a: f64, b: f64) -> TuckerSum {
        let p = &self.base;
        let d = p.order();
        let blocks = (0..d).map(|m| alloc::vec![p.factor(m).clone(), self.d_factors[m].clone()]).collect();
        let mut c0 = self.d_core.clone();
        c0.scale(b);
        c0.axpy(a, p.core()).expect("tangent core shares the base ranks");
        let mut terms = alloc::vec![SumTerm { coef: 1.0, core: c0, block: alloc::vec![0; d] }];
        for m in 0..d {
            let mut block = alloc::vec![0; d];
            block[m] = 1;
            terms.push(SumTerm { coef: b, core: p.core().clone(), block });
        }
        TuckerSum { blocks, terms }
    }

    /// Dense-form embedding as a Tucker tensor of rank at most `2r`.
    pub fn to_full(&self) -> Result<TuckerTensor> {
        self.to_sum().to_tucker()
    }
}

/// Orthogonal projection of a structured sum onto the tangent space at `base`:
/// `δS = Z ×_μ U_μᵀ`, `δU_μ = (I − U_μU_μᵀ)[Z ×_{ν≠μ} U_νᵀ]_(μ) S_(μ)⁺`.
pub fn project(base: &Arc<TuckerPoint>, z: &TuckerSum) -> Result<TuckerTangent> {
    z.validate()?;
    if z.dims() != base.dims() {
        return Err(mismatch("projection target has different dimensions"));
    }
    let d = base.order();
    // W[m][b] = U_mᵀ B_{m,b}
    let w: Vec<Vec<Mat>> = (0..d)
        .map(|m| z.blocks[m].iter().map(|b| base.factor(m).transpose() * b).collect())
        .collect();
    let mut d_core = DenseTensor::zeros(&base.ranks());
    // coefficient matrices per mode and block, multiplied by B afterwards
    let mut coeffs: Vec<Vec<Option<Mat>>> = z.blocks.iter().map(|p| alloc::vec![None; p.len()]).collect();
    for t in &z.terms {
        for m in 0..d {
            let mats: Vec<Option<&Mat>> =
                (0..d).map(|v| if v == m { None } else { Some(&w[v][t.block[v]]) }).collect();
            let partial = t.core.multi_mode_product(&mats)?;
            let c = partial.matricize(m)? * base.pinv(m) * t.coef;
            let slot = &mut coeffs[m][t.block[m]];
            match slot {
                Some(acc) => *acc += c,
                None => *slot = Some(c),
            }
            if m == 0 {
                d_core.axpy(t.coef, &partial.mode_product(&w[0][t.block[0]], 0)?)?;
            }
        }
    }
    let mut d_factors = Vec::with_capacity(d);
    for m in 0..d {
        let mut acc = Mat::zeros(base.dims()[m], base.ranks()[m]);
        for (b, c) in coeffs[m].iter().enumerate() {
            if let Some(c) = c {
                acc += &z.blocks[m][b] * c;
            }
        }
        d_factors.push(base.perp(m, &acc));
    }
    Ok(TuckerTangent { base: base.clone(), d_core, d_factors })
}

/// Projection of a dense tensor (test scale).
pub fn project_dense(base: &Arc<TuckerPoint>, z: &DenseTensor) -> Result<TuckerTangent> {
    project(base, &TuckerSum::from_dense(z))
}

/// HOSVD retraction `R(X + αξ)` back to the ranks of the base point.
pub fn retract(xi: &TuckerTangent, alpha: f64) -> Result<TuckerTensor> {
    xi.affine_sum(1.0, alpha).truncate_to_ranks(&xi.base.ranks())
}
