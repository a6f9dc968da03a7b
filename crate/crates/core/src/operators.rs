//! Problem operators `A = L + V`: Laplace-like Kronecker sums, the separable
//! Newton potential (applied as a Hadamard product), the anisotropic diffusion
//! coupling, TT operators, the exponential-sum preconditioner and reduced
//! interface Laplacians.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{mismatch, Error, Result};
use crate::linalg::{math, SymTridiagonal, Tridiagonal};
use crate::tensor::{kron, DenseTensor, Mat};
use crate::tt::{contract_left, contract_right, left_unfold, right_unfold, TtPoint, TtTensor};
use crate::tucker::{SumTerm, TuckerSum};

/// Interior points of `(-10, 10)` with spacing `h = 20/(n+1)`.
pub fn grid(n: usize) -> (Vec<f64>, f64) {
    let h = 20.0 / (n as f64 + 1.0);
    ((1..=n).map(|i| -10.0 + i as f64 * h).collect(), h)
}

/// Applies `t` along the middle index of a TT core.
pub fn tridiag_core(t: &Tridiagonal, c: &DenseTensor) -> DenseTensor {
    let (rl, n, rr) = (c.dims()[0], c.dims()[1], c.dims()[2]);
    let mut out = DenseTensor::zeros(c.dims());
    for b in 0..rr {
        for a in 0..rl {
            let off = a + rl * n * b;
            t.mul_add_strided(1.0, &c.data()[off..], rl, &mut out.data_mut()[off..], rl);
        }
    }
    out
}

/// `Σ_μ I ⊗ ⋯ ⊗ L_μ ⊗ ⋯ ⊗ I` with SPD tridiagonal `L_μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplaceLike {
    modes: Vec<SymTridiagonal>,
}

impl LaplaceLike {
    pub fn new(modes: Vec<SymTridiagonal>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidArgument("at least one mode required".into()));
        }
        Ok(Self { modes })
    }

    /// Finite-difference Laplacian on the uniform grid of [`grid`] in every mode.
    pub fn uniform(d: usize, n: usize) -> Self {
        let (_, h) = grid(n);
        Self { modes: (0..d).map(|_| SymTridiagonal::laplacian_1d(n, h)).collect() }
    }

    pub fn order(&self) -> usize {
        self.modes.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modes.iter().map(|m| m.n()).collect()
    }

    pub fn mode(&self, m: usize) -> &SymTridiagonal {
        &self.modes[m]
    }

    pub fn modes(&self) -> &[SymTridiagonal] {
        &self.modes
    }

    /// Extreme eigenvalues of the Kronecker sum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        self.modes.iter().fold((0.0, 0.0), |(lo, hi), m| {
            let (_, e) = m.eigen();
            (lo + e[0], hi + e[e.len() - 1])
        })
    }

    /// Total shifted solves over all modes since the last reset.
    pub fn solve_counts(&self) -> (usize, usize) {
        self.modes.iter().fold((0, 0), |(a, b), m| {
            let (c, d) = m.solve_counts();
            (a + c, b + d)
        })
    }

    pub fn reset_counts(&self) {
        self.modes.iter().for_each(|m| m.reset_counts());
    }

    /// Block-structured image: every mode gains the blocks `L_μ B`.
    pub fn apply_tucker(&self, z: &TuckerSum) -> Result<TuckerSum> {
        if z.dims() != self.dims() {
            return Err(mismatch("operator and tensor dimensions differ"));
        }
        let d = self.order();
        let mut blocks = z.blocks.clone();
        let offsets: Vec<usize> = blocks.iter().map(|p| p.len()).collect();
        for (m, pool) in blocks.iter_mut().enumerate() {
            let extra: Vec<Mat> = pool.iter().map(|b| self.modes[m].mul(b)).collect();
            pool.extend(extra);
        }
        let mut terms = Vec::with_capacity(z.terms.len() * d);
        for t in &z.terms {
            for m in 0..d {
                let mut block = t.block.clone();
                block[m] += offsets[m];
                terms.push(SumTerm { coef: t.coef, core: t.core.clone(), block });
            }
        }
        Ok(TuckerSum { blocks, terms })
    }

    pub fn to_tt_operator(&self) -> TtOperator {
        TtOperator::laplace(self)
    }

    pub fn apply_dense(&self, x: &DenseTensor) -> Result<DenseTensor> {
        let mut out = DenseTensor::zeros(x.dims());
        for (m, l) in self.modes.iter().enumerate() {
            out.axpy(1.0, &x.mode_product(&l.to_dense(), m)?)?;
        }
        Ok(out)
    }

    /// Dense Kronecker-sum matrix acting on colexicographic vectorizations.
    pub fn to_dense(&self) -> Mat {
        let dims = self.dims();
        let total: usize = dims.iter().product();
        let mut out = Mat::zeros(total, total);
        for m in 0..self.order() {
            out += kron_chain(&dims, m, &self.modes[m].to_dense(), None);
        }
        out
    }

    /// Upper bound on `‖L‖₁`.
    pub fn norm1_bound(&self) -> f64 {
        self.modes.iter().map(|m| tridiag_norm1(&Tridiagonal::from(m))).sum()
    }
}

fn tridiag_norm1(t: &Tridiagonal) -> f64 {
    let n = t.n();
    (0..n)
        .map(|j| {
            let mut s = t.diag[j].abs();
            if j > 0 {
                s += t.sup[j - 1].abs();
            }
            if j + 1 < n {
                s += t.sub[j].abs();
            }
            s
        })
        .fold(0.0, f64::max)
}

/// Dense `I ⊗ ⋯ ⊗ A ⊗ ⋯ ⊗ I` (plus an optional second factor in mode `m+1`)
/// for colexicographic vectorization, where the last mode is the outermost
/// Kronecker factor.
fn kron_chain(dims: &[usize], m: usize, a: &Mat, next: Option<&Mat>) -> Mat {
    let mut out = Mat::identity(1, 1);
    for (k, &n) in dims.iter().enumerate().rev() {
        let f = if k == m {
            a.clone()
        } else if k == m + 1 && next.is_some() {
            next.unwrap().clone()
        } else {
            Mat::identity(n, n)
        };
        out = kron(&out, &f);
    }
    out
}

/// Separable `V = Σ_j ω_j ⊗_μ v_{jμ}` applied as a Hadamard product.
#[derive(Debug, Clone, PartialEq)]
pub struct CpPotential {
    pub weights: Vec<f64>,
    /// `factors[j][μ]` is the vector `v_{jμ}`.
    pub factors: Vec<Vec<Vec<f64>>>,
}

/// Exponential-sum fit `1/√t ≈ Σ_j w_j e^{-a_j t}` on `[t_min, t_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvSqrtFit {
    pub weights: Vec<f64>,
    pub exponents: Vec<f64>,
    /// Largest relative error over a fine logarithmic sample of the interval.
    pub max_rel_error: f64,
}

impl InvSqrtFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.weights.iter().zip(&self.exponents).map(|(w, a)| w * math::exp(-a * t)).sum()
    }
}

/// `k`-term exponential sum for `1/√t` on `[t_min, t_max]`.
///
/// Nodes and weights start from the sinc rule for
/// `1/√t = (2/√π) ∫ exp(−t e^{2s}) e^s ds` with log-uniform nodes spanning the
/// scaled interval, and are then refined by Levenberg–Marquardt on the relative
/// error. The plain rule with ten terms is only accurate to about 2e-2 here.
pub fn inv_sqrt_expsum(k: usize, t_min: f64, t_max: f64) -> Result<InvSqrtFit> {
    if k < 2 || !(t_min > 0.0) || !(t_max > t_min) {
        return Err(Error::InvalidArgument("need k >= 2 and 0 < t_min < t_max".into()));
    }
    let range = t_max / t_min;
    let samples = 600;
    let ts: Vec<f64> = (0..samples).map(|i| math::exp(math::ln(range) * i as f64 / (samples - 1) as f64)).collect();
    let lo = math::ln(0.1 / range);
    let hi = math::ln(3.0);
    let la: Vec<f64> = (0..k).map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64).collect();
    let hs = 0.5 * (la[1] - la[0]);
    let two_over_sqrt_pi = 2.0 / math::sqrt(core::f64::consts::PI);
    let mut p: Vec<f64> = la.clone();
    p.extend(la.iter().map(|l| math::ln(two_over_sqrt_pi * hs * math::exp(0.5 * l))));

    let eval = |p: &[f64]| -> (DVector<f64>, Mat) {
        let mut r = DVector::zeros(samples);
        let mut j = Mat::zeros(samples, 2 * k);
        for (i, &t) in ts.iter().enumerate() {
            let st = math::sqrt(t);
            let mut acc = 0.0;
            for q in 0..k {
                let a = math::exp(p[q]);
                let w = math::exp(p[k + q]);
                let e = math::exp(-a * t);
                acc += w * e;
                j[(i, q)] = -st * t * e * w * a;
                j[(i, k + q)] = st * e * w;
            }
            r[i] = st * acc - 1.0;
        }
        (r, j)
    };
    let (mut r, mut jac) = eval(&p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..600 {
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let dmax = a.diagonal().max();
        let mut damped = a.clone();
        for q in 0..2 * k {
            damped[(q, q)] += lambda * (a[(q, q)] + 1e-12 * dmax);
        }
        let step = match damped.cholesky() {
            Some(c) => c.solve(&(-g)),
            None => {
                lambda *= 4.0;
                continue;
            }
        };
        let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
        let (r2, j2) = eval(&trial);
        let c2 = r2.norm_squared();
        if c2.is_finite() && c2 < cost {
            p = trial;
            r = r2;
            jac = j2;
            cost = c2;
            lambda = (lambda / 3.0).max(1e-12);
        } else {
            lambda *= 4.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    // back to [t_min, t_max]: 1/√t = t_min^{-1/2} · 1/√(t/t_min)
    let sc = 1.0 / math::sqrt(t_min);
    let mut fit = InvSqrtFit {
        weights: p[k..].iter().map(|l| sc * math::exp(*l)).collect(),
        exponents: p[..k].iter().map(|l| math::exp(*l) / t_min).collect(),
        max_rel_error: 0.0,
    };
    let fine = 20_000;
    fit.max_rel_error = (0..fine)
        .map(|i| {
            let t = t_min * math::exp(math::ln(range) * i as f64 / (fine - 1) as f64);
            (fit.eval(t) * math::sqrt(t) - 1.0).abs()
        })
        .fold(0.0, f64::max);
    Ok(fit)
}

impl CpPotential {
    /// Separable approximation of `1/‖x‖` on the tensor grid of [`grid`] with
    /// `k` terms.
    pub fn newton(d: usize, n: usize, k: usize) -> Result<(Self, InvSqrtFit)> {
        let (x, _) = grid(n);
        let xmin2 = x.iter().map(|v| v * v).fold(f64::INFINITY, f64::min);
        if xmin2 < 1e-24 {
            return Err(Error::InvalidArgument("grid contains the origin; use an even number of points".into()));
        }
        let fit = inv_sqrt_expsum(k, d as f64 * xmin2, d as f64 * 100.0)?;
        let factors = fit
            .exponents
            .iter()
            .map(|a| (0..d).map(|_| x.iter().map(|xi| math::exp(-a * xi * xi)).collect()).collect())
            .collect();
        Ok((Self { weights: fit.weights.clone(), factors }, fit))
    }

    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn order(&self) -> usize {
        self.factors.first().map(|f| f.len()).unwrap_or(0)
    }

    pub fn eval(&self, idx: &[usize]) -> f64 {
        self.weights
            .iter()
            .zip(&self.factors)
            .map(|(w, f)| w * idx.iter().enumerate().map(|(m, &i)| f[m][i]).product::<f64>())
            .sum()
    }

    /// `sup |V|` bound.
    pub fn sup_bound(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.factors)
            .map(|(w, f)| w.abs() * f.iter().map(|v| v.iter().fold(0.0f64, |a, b| a.max(b.abs()))).product::<f64>())
            .sum()
    }

    pub fn apply_tucker(&self, z: &TuckerSum) -> Result<TuckerSum> {
        let d = z.order();
        if self.order() != d {
            return Err(mismatch("potential and tensor orders differ"));
        }
        let mut blocks: Vec<Vec<Mat>> = alloc::vec![Vec::new(); d];
        let mut terms = Vec::new();
        for (j, (w, f)) in self.weights.iter().zip(&self.factors).enumerate() {
            let base: Vec<usize> = (0..d).map(|m| j * z.blocks[m].len()).collect();
            for m in 0..d {
                for b in &z.blocks[m] {
                    let mut s = b.clone();
                    for (i, mut row) in s.row_iter_mut().enumerate() {
                        row *= f[m][i];
                    }
                    blocks[m].push(s);
                }
            }
            for t in &z.terms {
                terms.push(SumTerm {
                    coef: w * t.coef,
                    core: t.core.clone(),
                    block: t.block.iter().zip(&base).map(|(b, o)| b + o).collect(),
                });
            }
        }
        Ok(TuckerSum { blocks, terms })
    }
}

/// Core of a TT operator: a `ρ_l × ρ_r` grid of optional tridiagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct OpCore {
    pub rl: usize,
    pub rr: usize,
    /// Block `(p, q)` at index `p + rl·q`.
    pub blocks: Vec<Option<Tridiagonal>>,
}

impl OpCore {
    pub fn new(rl: usize, rr: usize) -> Self {
        Self { rl, rr, blocks: alloc::vec![None; rl * rr] }
    }

    pub fn set(&mut self, p: usize, q: usize, t: Tridiagonal) {
        self.blocks[p + self.rl * q] = Some(t);
    }

    pub fn get(&self, p: usize, q: usize) -> Option<&Tridiagonal> {
        self.blocks[p + self.rl * q].as_ref()
    }

    /// `Y(a + rl·p, i, b + rr·q) = Σ_j A_{pq}(i, j) X(a, j, b)`.
    pub fn apply_core(&self, x: &DenseTensor) -> DenseTensor {
        let (xl, n, xr) = (x.dims()[0], x.dims()[1], x.dims()[2]);
        let (yl, yr) = (xl * self.rl, xr * self.rr);
        let mut y = DenseTensor::zeros(&[yl, n, yr]);
        for q in 0..self.rr {
            for p in 0..self.rl {
                let Some(t) = self.get(p, q) else { continue };
                for b in 0..xr {
                    for a in 0..xl {
                        let src = a + xl * n * b;
                        let dst = (a + xl * p) + yl * n * (b + xr * q);
                        t.mul_add_strided(1.0, &x.data()[src..], xl, &mut y.data_mut()[dst..], yl);
                    }
                }
            }
        }
        y
    }
}

/// Operator in TT format, `A(i, j) = A₁(i₁, j₁) ⋯ A_d(i_d, j_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TtOperator {
    pub cores: Vec<OpCore>,
}

impl TtOperator {
    pub fn order(&self) -> usize {
        self.cores.len()
    }

    /// Operator ranks `(1, ρ₁, …, 1)`.
    pub fn ranks(&self) -> Vec<usize> {
        core::iter::once(1).chain(self.cores.iter().map(|c| c.rr)).collect()
    }

    /// Rank-2 representation `[L I] [[I 0][L I]] ⋯ [[I][L]]`.
    pub fn laplace(l: &LaplaceLike) -> Self {
        Self::laplace_plus_cp(l, None)
    }

    /// `L + V` with an optional separable potential: states are
    /// `0` (Laplace already applied), `1` (not yet) and `2 + j` (potential term j).
    pub fn laplace_plus_cp(l: &LaplaceLike, v: Option<&CpPotential>) -> Self {
        let d = l.order();
        let k = v.map(|v| v.rank()).unwrap_or(0);
        let rho = 2 + k;
        let diag = |j: usize, m: usize, scale: f64| {
            let f = &v.unwrap().factors[j][m];
            Tridiagonal::from_diagonal(f.iter().map(|x| scale * x).collect())
        };
        if d == 1 {
            let mut c = OpCore::new(1, 1);
            let mut t = Tridiagonal::from(l.mode(0));
            if let Some(v) = v {
                for j in 0..k {
                    let dj = diag(j, 0, v.weights[j]);
                    for i in 0..t.n() {
                        t.diag[i] += dj.diag[i];
                    }
                }
            }
            c.set(0, 0, t);
            return Self { cores: alloc::vec![c] };
        }
        let mut cores = Vec::with_capacity(d);
        for m in 0..d {
            let n = l.mode(m).n();
            let lt = Tridiagonal::from(l.mode(m));
            let id = Tridiagonal::identity(n);
            let (rl, rr) = (if m == 0 { 1 } else { rho }, if m == d - 1 { 1 } else { rho });
            let mut c = OpCore::new(rl, rr);
            if m == 0 {
                c.set(0, 0, lt);
                c.set(0, 1, id);
                for j in 0..k {
                    c.set(0, 2 + j, diag(j, m, v.unwrap().weights[j]));
                }
            } else if m == d - 1 {
                c.set(0, 0, id);
                c.set(1, 0, lt);
                for j in 0..k {
                    c.set(2 + j, 0, diag(j, m, 1.0));
                }
            } else {
                c.set(0, 0, id.clone());
                c.set(1, 0, lt);
                c.set(1, 1, id);
                for j in 0..k {
                    c.set(2 + j, 2 + j, diag(j, m, 1.0));
                }
            }
            cores.push(c);
        }
        Self { cores }
    }

    /// Rank-3 anisotropic diffusion `L + Σ_μ 2α B_μ ⊗ B_{μ+1}`:
    /// `[L 2αB I] [[I 0 0][B 0 0][L 2αB I]] ⋯ [[I][B][L]]`.
    pub fn diffusion(l: &LaplaceLike, b: &[Tridiagonal], alpha: f64) -> Self {
        let d = l.order();
        if d == 1 {
            let mut c = OpCore::new(1, 1);
            c.set(0, 0, Tridiagonal::from(l.mode(0)));
            return Self { cores: alloc::vec![c] };
        }
        let mut cores = Vec::with_capacity(d);
        for m in 0..d {
            let n = l.mode(m).n();
            let lt = Tridiagonal::from(l.mode(m));
            let id = Tridiagonal::identity(n);
            let bt = b[m].clone();
            let ab = b[m].scaled(2.0 * alpha);
            let mut c;
            if m == 0 {
                c = OpCore::new(1, 3);
                c.set(0, 0, lt);
                c.set(0, 1, ab);
                c.set(0, 2, id);
            } else if m == d - 1 {
                c = OpCore::new(3, 1);
                c.set(0, 0, id);
                c.set(1, 0, bt);
                c.set(2, 0, lt);
            } else {
                c = OpCore::new(3, 3);
                c.set(0, 0, id.clone());
                c.set(1, 0, bt);
                c.set(2, 0, lt);
                c.set(2, 1, ab);
                c.set(2, 2, id);
            }
            cores.push(c);
        }
        Self { cores }
    }

    pub fn apply(&self, x: &TtTensor) -> Result<TtTensor> {
        if x.order() != self.order() {
            return Err(mismatch("operator and tensor orders differ"));
        }
        for (c, xc) in self.cores.iter().zip(x.cores()) {
            if let Some(t) = c.blocks.iter().flatten().next() {
                if t.n() != xc.dims()[1] {
                    return Err(mismatch("operator and tensor mode sizes differ"));
                }
            }
        }
        TtTensor::new(self.cores.iter().zip(x.cores()).map(|(c, xc)| c.apply_core(xc)).collect())
    }

    /// Dense matrix for colexicographic vectorization (test scale).
    pub fn to_dense(&self) -> Mat {
        // contract left to right: blocks indexed by the current right rank
        let mut acc: Vec<Mat> = alloc::vec![Mat::identity(1, 1)];
        for c in &self.cores {
            let n = c.blocks.iter().flatten().next().map(|t| t.n()).unwrap_or(1);
            let mut next = alloc::vec![Mat::zeros(acc[0].nrows() * n, acc[0].ncols() * n); c.rr];
            for q in 0..c.rr {
                for p in 0..c.rl {
                    if let Some(t) = c.get(p, q) {
                        next[q] += kron(&t.to_dense(), &acc[p]);
                    }
                }
            }
            acc = next;
        }
        acc.swap_remove(0)
    }
}

/// The full problem operator `A = L + V`.
#[derive(Debug, Clone, PartialEq)]
pub enum Potential {
    None,
    /// Separable potential applied as a Hadamard product.
    Cp(CpPotential),
    /// Nearest-neighbour coupling `Σ_μ 2α B_μ ⊗ B_{μ+1}`.
    Coupling { alpha: f64, b: Vec<Tridiagonal> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    pub laplace: LaplaceLike,
    pub potential: Potential,
    tt: TtOperator,
}

impl Operator {
    pub fn new(laplace: LaplaceLike, potential: Potential) -> Result<Self> {
        let tt = match &potential {
            Potential::None => TtOperator::laplace(&laplace),
            Potential::Cp(v) => {
                if v.order() != laplace.order() || v.factors.iter().any(|f| f.iter().zip(laplace.dims()).any(|(x, n)| x.len() != n)) {
                    return Err(mismatch("potential does not match the grid"));
                }
                TtOperator::laplace_plus_cp(&laplace, Some(v))
            }
            Potential::Coupling { alpha, b } => {
                if b.len() != laplace.order() {
                    return Err(mismatch("one coupling matrix per mode expected"));
                }
                TtOperator::diffusion(&laplace, b, *alpha)
            }
        };
        Ok(Self { laplace, potential, tt })
    }

    pub fn pure_laplace(d: usize, n: usize) -> Self {
        Self::new(LaplaceLike::uniform(d, n), Potential::None).expect("consistent")
    }

    /// Laplacian plus the ten-term separable Newton potential.
    pub fn newton_potential(d: usize, n: usize) -> Result<Self> {
        let (v, _) = CpPotential::newton(d, n, 10)?;
        Self::new(LaplaceLike::uniform(d, n), Potential::Cp(v))
    }

    /// Anisotropic diffusion with central differences `B = (1/2h)·tridiag(-1, 0, 1)`.
    pub fn anisotropic_diffusion(d: usize, n: usize, alpha: f64) -> Self {
        let (_, h) = grid(n);
        let b = (0..d).map(|_| Tridiagonal::central_difference(n, h)).collect();
        Self::new(LaplaceLike::uniform(d, n), Potential::Coupling { alpha, b }).expect("consistent")
    }

    pub fn order(&self) -> usize {
        self.laplace.order()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.laplace.dims()
    }

    pub fn tt_operator(&self) -> &TtOperator {
        &self.tt
    }

    pub fn apply_tt(&self, x: &TtTensor) -> Result<TtTensor> {
        self.tt.apply(x)
    }

    pub fn apply_tucker(&self, z: &TuckerSum) -> Result<TuckerSum> {
        let mut out = self.laplace.apply_tucker(z)?;
        match &self.potential {
            Potential::None => {}
            Potential::Cp(v) => out.add_scaled(1.0, &v.apply_tucker(z)?)?,
            Potential::Coupling { alpha, b } => {
                let d = z.order();
                let mut blocks = z.blocks.clone();
                let offsets: Vec<usize> = blocks.iter().map(|p| p.len()).collect();
                for (m, pool) in blocks.iter_mut().enumerate() {
                    let extra: Vec<Mat> = pool.iter().map(|blk| b[m].mul(blk)).collect();
                    pool.extend(extra);
                }
                let mut terms = Vec::new();
                for t in &z.terms {
                    for m in 0..d.saturating_sub(1) {
                        let mut block = t.block.clone();
                        block[m] += offsets[m];
                        block[m + 1] += offsets[m + 1];
                        terms.push(SumTerm { coef: 2.0 * alpha * t.coef, core: t.core.clone(), block });
                    }
                }
                out.add_scaled(1.0, &TuckerSum { blocks, terms })?;
            }
        }
        Ok(out)
    }

    /// Cheap upper bound on `‖A‖₁`.
    pub fn norm1_bound(&self) -> f64 {
        self.laplace.norm1_bound()
            + match &self.potential {
                Potential::None => 0.0,
                Potential::Cp(v) => v.sup_bound(),
                Potential::Coupling { alpha, b } => {
                    let d = b.len();
                    (0..d.saturating_sub(1))
                        .map(|m| 2.0 * alpha.abs() * tridiag_norm1(&b[m]) * tridiag_norm1(&b[m + 1]))
                        .sum()
                }
            }
    }

    pub fn to_dense(&self) -> Mat {
        self.tt.to_dense()
    }
}

/// `P⁻¹ = Σ_j ω_j ⊗_μ exp(−α_j L_μ)` from sinc quadrature of
/// `1/λ = ∫ exp(−λ e^s) e^s ds` on the spectrum scaled to `λ_min = 1`.
#[derive(Debug, Clone)]
pub struct ExpSum {
    pub weights: Vec<f64>,
    pub exponents: Vec<f64>,
    eig: Vec<(Mat, Vec<f64>)>,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl ExpSum {
    /// Nodes `j = −⌈(k−1)/2⌉, …, ⌊(k−1)/2⌋` with step `π/√M`,
    /// `M = ⌈(k−1)/2⌉`; for odd `k` this is the symmetric rule `j = −M..M`.
    pub fn new(l: &LaplaceLike, k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::InvalidArgument("exponential sum needs at least 3 terms".into()));
        }
        let (lo, hi) = l.spectral_bounds();
        let m = k / 2; // ⌈(k−1)/2⌉
        let h = core::f64::consts::PI / math::sqrt(m as f64);
        let first = -(m as i64);
        let mut weights = Vec::with_capacity(k);
        let mut exponents = Vec::with_capacity(k);
        for idx in 0..k as i64 {
            let j = (first + idx) as f64;
            exponents.push(math::exp(j * h) / lo);
            weights.push(h * math::exp(j * h) / lo);
        }
        let eig = l.modes().iter().map(|m| m.eigen()).collect();
        Ok(Self { weights, exponents, eig, lambda_min: lo, lambda_max: hi })
    }

    /// Arbitrary coefficients (tests).
    pub fn with_coefficients(l: &LaplaceLike, weights: Vec<f64>, exponents: Vec<f64>) -> Self {
        let (lo, hi) = l.spectral_bounds();
        let eig = l.modes().iter().map(|m| m.eigen()).collect();
        Self { weights, exponents, eig, lambda_min: lo, lambda_max: hi }
    }

    pub fn terms(&self) -> usize {
        self.weights.len()
    }

    /// Scalar approximation of `1/λ`.
    pub fn eval(&self, lambda: f64) -> f64 {
        self.weights.iter().zip(&self.exponents).map(|(w, a)| w * math::exp(-a * lambda)).sum()
    }

    /// Largest relative error `|λ·Σ − 1|` over a logarithmic sample of the spectrum.
    pub fn max_rel_error(&self) -> f64 {
        let s = 2000;
        let r = self.lambda_max / self.lambda_min;
        (0..s)
            .map(|i| {
                let lam = self.lambda_min * math::exp(math::ln(r) * i as f64 / (s - 1) as f64);
                (lam * self.eval(lam) - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// `exp(−α L_μ)` applied to the columns of `b`.
    pub fn expm_apply(&self, mode: usize, alpha: f64, b: &Mat) -> Mat {
        let (q, e) = &self.eig[mode];
        let mut c = q.transpose() * b;
        for (i, mut row) in c.row_iter_mut().enumerate() {
            row *= math::exp(-alpha * e[i]);
        }
        q * c
    }

    /// Dense `exp(−α L_μ)`.
    pub fn expm(&self, mode: usize, alpha: f64) -> Mat {
        let n = self.eig[mode].0.nrows();
        self.expm_apply(mode, alpha, &Mat::identity(n, n))
    }

    /// Term `j` applied to a structured Tucker sum.
    pub fn term_tucker(&self, j: usize, z: &TuckerSum) -> TuckerSum {
        z.map_blocks(|m, b| self.expm_apply(m, self.exponents[j], b)).scaled(self.weights[j])
    }

    /// Full application: `k` times as many terms.
    pub fn apply_tucker(&self, z: &TuckerSum) -> Result<TuckerSum> {
        let mut out = self.term_tucker(0, z);
        for j in 1..self.terms() {
            out.add_scaled(1.0, &self.term_tucker(j, z))?;
        }
        Ok(out)
    }

    /// Term `j` applied to a tensor train (ranks unchanged).
    pub fn term_tt(&self, j: usize, z: &TtTensor) -> Result<TtTensor> {
        let a = self.exponents[j];
        let cores = z
            .cores()
            .iter()
            .enumerate()
            .map(|(m, c)| {
                let e = self.expm(m, a);
                c.mode_product(&e, 1).inspect(|t| debug_assert_eq!(t.dims(), c.dims()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TtTensor::new(cores)?.scaled(self.weights[j]))
    }

    /// Full application: ranks multiply by `k`.
    pub fn apply_tt(&self, z: &TtTensor) -> Result<TtTensor> {
        let mut out = self.term_tt(0, z)?;
        for j in 1..self.terms() {
            out = out.lincomb(1.0, &self.term_tt(j, z)?, 1.0)?;
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> Mat {
        let d = self.eig.len();
        let total: usize = self.eig.iter().map(|(q, _)| q.nrows()).product();
        let mut out = Mat::zeros(total, total);
        for j in 0..self.terms() {
            let mut k = Mat::identity(1, 1);
            for m in (0..d).rev() {
                k = kron(&k, &self.expm(m, self.exponents[j]));
            }
            out += k * self.weights[j];
        }
        out
    }
}

/// Reduced Laplacians of a TT point: for each core μ, the leading term
/// `X_{≤μ-1}ᵀ (Σ_{ν<μ} L_ν) X_{≤μ-1}` (left-orthogonal cores) and trailing term
/// `X_{≥μ+1} (Σ_{ν>μ} L_ν) X_{≥μ+1}ᵀ` (right-orthogonal cores).
pub fn reduced_laplacians(x: &TtPoint, l: &LaplaceLike) -> (Vec<Mat>, Vec<Mat>) {
    let d = x.order();
    let mut left = Vec::with_capacity(d);
    let mut acc = Mat::zeros(1, 1);
    for m in 0..d {
        left.push(acc.clone());
        let u = x.u(m);
        let lu = tridiag_core(&Tridiagonal::from(l.mode(m)), u);
        acc = contract_left(&acc, u, u) + left_unfold(u).transpose() * left_unfold(&lu);
        acc = (&acc + acc.transpose()) * 0.5;
    }
    let mut right = alloc::vec![Mat::zeros(0, 0); d];
    let mut acc = Mat::zeros(1, 1);
    for m in (0..d).rev() {
        right[m] = acc.clone();
        let v = x.v(m);
        let lv = tridiag_core(&Tridiagonal::from(l.mode(m)), v);
        acc = contract_right(&acc, v, v) + right_unfold(v) * right_unfold(&lv).transpose();
        acc = (&acc + acc.transpose()) * 0.5;
    }
    (left, right)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tucker::TuckerTensor;
    use alloc::sync::Arc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Mat {
        Mat::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    fn vecd(t: &DenseTensor) -> DVector<f64> {
        DVector::from_column_slice(t.data())
    }

    fn rand_tucker(n: &[usize], r: &[usize], rng: &mut ChaCha8Rng) -> TuckerTensor {
        let core = DenseTensor::from_fn(r, |_| StandardNormal.sample(rng));
        TuckerTensor::new(core, n.iter().zip(r).map(|(&n, &r)| randn(n, r, rng)).collect()).unwrap()
    }

    fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn laplace_one_mode_and_eigen_tensor() {
        let l = LaplaceLike::uniform(1, 7);
        let x = DenseTensor::from_fn(&[7], |i| (i[0] as f64).sin());
        let y = l.apply_dense(&x).unwrap();
        let expected = l.mode(0).to_dense() * vecd(&x);
        assert!(rel(&vecd(&y), &expected) < 1e-14);

        let l = LaplaceLike::uniform(3, 6);
        let (q, e) = l.mode(0).eigen();
        let cols: Vec<Vec<f64>> = (0..3).map(|m| q.column(m).iter().copied().collect()).collect();
        let v: Vec<&[f64]> = cols.iter().map(|c| c.as_slice()).collect();
        let x = TtTensor::rank_one(&v).unwrap();
        let y = l.to_tt_operator().apply(&x).unwrap().to_dense().unwrap();
        let lam = e[0] + e[1] + e[2];
        let xd = x.to_dense().unwrap();
        assert!(rel(&vecd(&y), &(vecd(&xd) * lam)) < 1e-12);
    }

    #[test]
    fn tt_and_tucker_applies_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ops = [
            Operator::pure_laplace(3, 5),
            Operator::newton_potential(3, 6).unwrap(),
            Operator::anisotropic_diffusion(3, 5, 0.25),
        ];
        for op in &ops {
            let n = op.dims();
            let a = op.to_dense();
            assert!((&a - a.transpose()).norm() <= 1e-13 * a.norm());
            let x = TtTensor::random(&n, &[2, 2], &mut rng).unwrap();
            let y = op.apply_tt(&x).unwrap();
            let expected = &a * vecd(&x.to_dense().unwrap());
            assert!(rel(&vecd(&y.to_dense().unwrap()), &expected) <= 1e-12);

            let t = rand_tucker(&n, &[2, 2, 2], &mut rng);
            let y = op.apply_tucker(&TuckerSum::from(t.clone())).unwrap();
            let expected = &a * vecd(&t.to_dense().unwrap());
            assert!(rel(&vecd(&y.to_dense().unwrap()), &expected) <= 1e-12);

            // symmetry through structured applies
            let z = TtTensor::random(&n, &[2, 1], &mut rng).unwrap();
            let lhs = op.apply_tt(&x).unwrap().inner(&z).unwrap();
            let rhs = x.inner(&op.apply_tt(&z).unwrap()).unwrap();
            assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(rhs.abs()));
        }
        // Laplace part of the dense matrix is the Kronecker sum
        let l = LaplaceLike::uniform(3, 4);
        assert!((l.to_dense() - TtOperator::laplace(&l).to_dense()).norm() < 1e-12);
    }

    #[test]
    fn diffusion_dense_assembly_d2() {
        let n = 4;
        let op = Operator::anisotropic_diffusion(2, n, 0.25);
        let (_, h) = grid(n);
        let l = SymTridiagonal::laplacian_1d(n, h).to_dense();
        let b = Tridiagonal::central_difference(n, h).to_dense();
        let i = Mat::identity(n, n);
        let expected = kron(&i, &l) + kron(&l, &i) + kron(&b, &b) * 0.5;
        assert!((op.to_dense() - &expected).norm() <= 1e-12 * expected.norm());
        let zero = Operator::anisotropic_diffusion(2, n, 0.0);
        assert!((zero.to_dense() - Operator::pure_laplace(2, n).to_dense()).norm() <= 1e-13 * expected.norm());
    }

    #[test]
    fn rank_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let diff = Operator::anisotropic_diffusion(4, 5, 0.25);
        let x = TtTensor::random(&[5; 4], &[1, 1, 1], &mut rng).unwrap();
        assert!(diff.apply_tt(&x).unwrap().max_rank() <= 3);
        let np = Operator::newton_potential(3, 6).unwrap();
        let x = TtTensor::random(&[6; 3], &[2, 2], &mut rng).unwrap();
        assert!(np.apply_tt(&x).unwrap().max_rank() <= 24);
        let t = rand_tucker(&[6; 3], &[2, 2, 2], &mut rng);
        assert_eq!(np.apply_tucker(&TuckerSum::from(t)).unwrap().block_ranks(), alloc::vec![24; 3]);
    }

    #[test]
    fn newton_potential_accuracy() {
        let (v, fit) = CpPotential::newton(3, 100, 10).unwrap();
        assert!(fit.max_rel_error <= 1e-3, "fit error {}", fit.max_rel_error);
        let (x, _) = grid(100);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            let idx: Vec<usize> = (0..3).map(|_| rng.random_range(0..100)).collect();
            let r = idx.iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt();
            worst = worst.max((v.eval(&idx) * r - 1.0).abs());
        }
        assert!(worst <= 1e-3, "sampled error {worst}");
        // definition and symmetry
        let idx = [3, 50, 97];
        let t: f64 = idx.iter().map(|&i| x[i] * x[i]).sum();
        let direct: f64 = fit.weights.iter().zip(&fit.exponents).map(|(w, a)| w * (-a * t).exp()).sum();
        assert!((v.eval(&idx) - direct).abs() <= 1e-14 * direct);
        let mirrored: Vec<usize> = idx.iter().map(|i| 99 - i).collect();
        assert!((v.eval(&idx) - v.eval(&mirrored)).abs() <= 1e-14 * direct);
        assert!(CpPotential::newton(3, 101, 10).is_err());
    }

    #[test]
    fn expsum_quality_improves_with_k() {
        let l = LaplaceLike::uniform(2, 20);
        let a_inv = l.to_dense().try_inverse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let zs: Vec<DVector<f64>> = (0..100).map(|_| DVector::from_fn(400, |_, _| StandardNormal.sample(&mut rng))).collect();
        let mut errs = Vec::new();
        let mut scalar = Vec::new();
        for k in [5, 7, 10] {
            let p = ExpSum::new(&l, k).unwrap();
            let pd = p.to_dense();
            let e = zs.iter().map(|z| (&pd * z - &a_inv * z).norm() / (&a_inv * z).norm()).fold(0.0, f64::max);
            errs.push(e);
            scalar.push(p.max_rel_error());
            // positive definite
            let z = &zs[0];
            assert!(z.dot(&(&pd * z)) > 0.0);
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
        assert!(scalar[0] > scalar[1] && scalar[1] > scalar[2], "{scalar:?}");
        assert!(ExpSum::new(&l, 2).is_err());
    }

    #[test]
    fn expsum_on_eigen_tensor_and_identity() {
        let l = LaplaceLike::uniform(3, 8);
        let (q, e) = l.mode(0).eigen();
        let v = q.column(1).into_owned();
        let x = TtTensor::rank_one(&[v.as_slice(), v.as_slice(), v.as_slice()]).unwrap();
        let lam = 3.0 * e[1];
        let xd = vecd(&x.to_dense().unwrap());
        let mut prev = f64::INFINITY;
        for k in [5, 7, 10] {
            let p = ExpSum::new(&l, k).unwrap();
            let y = vecd(&p.apply_tt(&x).unwrap().to_dense().unwrap());
            let err = rel(&y, &(&xd / lam));
            assert!(err < prev);
            prev = err;
        }
        let id = ExpSum::with_coefficients(&l, alloc::vec![1.0], alloc::vec![0.0]);
        assert!(rel(&vecd(&id.apply_tt(&x).unwrap().to_dense().unwrap()), &xd) < 1e-13);
        let p = ExpSum::new(&l, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z = TtTensor::random(&[8; 3], &[2, 2], &mut rng).unwrap();
        assert!(p.apply_tt(&z).unwrap().max_rank() <= 10);
        let t = rand_tucker(&[8; 3], &[2, 2, 2], &mut rng);
        let pt = vecd(&p.apply_tucker(&TuckerSum::from(t.clone())).unwrap().to_dense().unwrap());
        assert!(rel(&pt, &(p.to_dense() * vecd(&t.to_dense().unwrap()))) < 1e-12);
    }

    #[test]
    fn reduced_laplacians_match_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let l = LaplaceLike::uniform(2, 5);
        let x = Arc::new(TtPoint::new(&TtTensor::random(&[5, 5], &[3], &mut rng).unwrap()).unwrap());
        let (left, right) = reduced_laplacians(&x, &l);
        assert_eq!(left[0], Mat::zeros(1, 1));
        assert_eq!(right[1], Mat::zeros(1, 1));
        // X_{≥2} is the 3 × 5 right unfolding of V₂
        let v = right_unfold(x.v(1));
        let expected = &v * l.mode(1).to_dense() * v.transpose();
        assert!((&right[0] - &expected).norm() <= 1e-12 * expected.norm());
        let u = left_unfold(x.u(0));
        let expected = u.transpose() * l.mode(0).to_dense() * &u;
        assert!((&left[1] - &expected).norm() <= 1e-12 * expected.norm());

        let l = LaplaceLike::uniform(4, 4);
        let x = TtPoint::new(&TtTensor::random(&[4; 4], &[2, 3, 2], &mut rng).unwrap()).unwrap();
        let (left, right) = reduced_laplacians(&x, &l);
        for m in left.iter().chain(&right) {
            assert!((m - m.transpose()).norm() <= 1e-12 * m.norm().max(1.0));
        }
    }
}
