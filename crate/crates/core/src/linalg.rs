//! Structured dense kernels: shifted tridiagonal solves, symmetric and
//! generalized symmetric eigendecompositions, sign-normalized QR, truncated
//! SVD, Sylvester solves by diagonalization and saddle-point solves through
//! the Schur complement.

use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DVector, SymmetricEigen};

use crate::error::{mismatch, Error, Result};
use crate::tensor::Mat;

pub(crate) mod math {
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    pub fn exp(x: f64) -> f64 {
        libm::exp(x)
    }
    pub fn ln(x: f64) -> f64 {
        libm::log(x)
    }
}

/// Symmetric tridiagonal matrix with a per-instance count of shifted solves.
#[derive(Debug)]
pub struct SymTridiagonal {
    diag: Vec<f64>,
    off: Vec<f64>,
    solve_calls: AtomicUsize,
    solved_columns: AtomicUsize,
}

impl Clone for SymTridiagonal {
    fn clone(&self) -> Self {
        Self {
            diag: self.diag.clone(),
            off: self.off.clone(),
            solve_calls: AtomicUsize::new(0),
            solved_columns: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for SymTridiagonal {
    fn eq(&self, other: &Self) -> bool {
        self.diag == other.diag && self.off == other.off
    }
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(mismatch("off-diagonal must have n-1 entries"));
        }
        Ok(Self { diag, off, solve_calls: AtomicUsize::new(0), solved_columns: AtomicUsize::new(0) })
    }

    /// `(1/h²)·tridiag(-1, 2, -1)` of size `n`.
    pub fn laplacian_1d(n: usize, h: f64) -> Self {
        let s = 1.0 / (h * h);
        Self::new(alloc::vec![2.0 * s; n], alloc::vec![-s; n.saturating_sub(1)]).expect("n >= 1")
    }

    pub fn scaled_identity(n: usize, c: f64) -> Self {
        Self::new(alloc::vec![c; n], alloc::vec![0.0; n.saturating_sub(1)]).expect("n >= 1")
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off(&self) -> &[f64] {
        &self.off
    }

    pub fn to_dense(&self) -> Mat {
        let n = self.n();
        let mut m = Mat::from_diagonal(&DVector::from_column_slice(&self.diag));
        for i in 0..n - 1 {
            m[(i, i + 1)] = self.off[i];
            m[(i + 1, i)] = self.off[i];
        }
        m
    }

    /// `self · b`.
    pub fn mul(&self, b: &Mat) -> Mat {
        let n = self.n();
        assert_eq!(b.nrows(), n, "row count mismatch in tridiagonal product");
        let mut out = Mat::zeros(n, b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j);
            let mut dst = out.column_mut(j);
            for i in 0..n {
                let mut v = self.diag[i] * col[i];
                if i > 0 {
                    v += self.off[i - 1] * col[i - 1];
                }
                if i + 1 < n {
                    v += self.off[i] * col[i + 1];
                }
                dst[i] = v;
            }
        }
        out
    }

    /// Solves `(L + shift·I) X = B` column by column with an O(n) sweep.
    pub fn shifted_solve(&self, shift: f64, b: &Mat) -> Result<Mat> {
        let n = self.n();
        if b.nrows() != n {
            return Err(mismatch("right-hand side has the wrong number of rows"));
        }
        self.solve_calls.fetch_add(1, Ordering::Relaxed);
        self.solved_columns.fetch_add(b.ncols(), Ordering::Relaxed);
        let scale = self.diag.iter().fold(0.0f64, |m, d| m.max((d + shift).abs())).max(f64::MIN_POSITIVE);
        // LDLᵀ pivots and multipliers
        let mut piv = Vec::with_capacity(n);
        let mut mult = Vec::with_capacity(n.saturating_sub(1));
        let mut p = self.diag[0] + shift;
        for i in 0..n {
            if i > 0 {
                let l = self.off[i - 1] / piv[i - 1];
                mult.push(l);
                p = self.diag[i] + shift - l * self.off[i - 1];
            }
            if !(p > 1e-14 * scale) {
                return Err(Error::NotPositiveDefinite { row: i, pivot: p });
            }
            piv.push(p);
        }
        let mut x = b.clone();
        for j in 0..x.ncols() {
            let mut col = x.column_mut(j);
            for i in 1..n {
                col[i] -= mult[i - 1] * col[i - 1];
            }
            col[n - 1] /= piv[n - 1];
            for i in (0..n - 1).rev() {
                col[i] = col[i] / piv[i] - mult[i] * col[i + 1];
            }
        }
        Ok(x)
    }

    /// Ascending eigenvalues and orthonormal eigenvectors.
    pub fn eigen(&self) -> (Mat, Vec<f64>) {
        sym_eig(&self.to_dense()).expect("tridiagonal matrix is symmetric by construction")
    }

    /// Number of `shifted_solve` calls and total columns solved so far.
    pub fn solve_counts(&self) -> (usize, usize) {
        (self.solve_calls.load(Ordering::Relaxed), self.solved_columns.load(Ordering::Relaxed))
    }

    pub fn reset_counts(&self) {
        self.solve_calls.store(0, Ordering::Relaxed);
        self.solved_columns.store(0, Ordering::Relaxed);
    }
}

/// General tridiagonal matrix (used for first-derivative stencils and
/// operator blocks).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn identity(n: usize) -> Self {
        Self::constant(n, 0.0, 1.0, 0.0)
    }

    pub fn constant(n: usize, sub: f64, diag: f64, sup: f64) -> Self {
        let m = n.saturating_sub(1);
        Self { sub: alloc::vec![sub; m], diag: alloc::vec![diag; n], sup: alloc::vec![sup; m] }
    }

    pub fn from_diagonal(d: Vec<f64>) -> Self {
        let m = d.len().saturating_sub(1);
        Self { sub: alloc::vec![0.0; m], diag: d, sup: alloc::vec![0.0; m] }
    }

    /// Central first-derivative stencil `(1/2h)·tridiag(-1, 0, 1)`.
    pub fn central_difference(n: usize, h: f64) -> Self {
        let s = 0.5 / h;
        Self::constant(n, -s, 0.0, s)
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            sub: self.sub.iter().map(|x| c * x).collect(),
            diag: self.diag.iter().map(|x| c * x).collect(),
            sup: self.sup.iter().map(|x| c * x).collect(),
        }
    }

    pub fn to_dense(&self) -> Mat {
        let n = self.n();
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.sup[i];
                m[(i + 1, i)] = self.sub[i];
            }
        }
        m
    }

    pub fn mul(&self, b: &Mat) -> Mat {
        let n = self.n();
        assert_eq!(b.nrows(), n, "row count mismatch in tridiagonal product");
        let mut out = Mat::zeros(n, b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j);
            let mut dst = out.column_mut(j);
            for i in 0..n {
                let mut v = self.diag[i] * col[i];
                if i > 0 {
                    v += self.sub[i - 1] * col[i - 1];
                }
                if i + 1 < n {
                    v += self.sup[i] * col[i + 1];
                }
                dst[i] = v;
            }
        }
        out
    }

    /// `y[i] += c · (self · x)[i]` for strided vectors of length n.
    pub(crate) fn mul_add_strided(&self, c: f64, x: &[f64], xs: usize, y: &mut [f64], ys: usize) {
        let n = self.n();
        for i in 0..n {
            let mut v = self.diag[i] * x[i * xs];
            if i > 0 {
                v += self.sub[i - 1] * x[(i - 1) * xs];
            }
            if i + 1 < n {
                v += self.sup[i] * x[(i + 1) * xs];
            }
            y[i * ys] += c * v;
        }
    }
}

impl From<&SymTridiagonal> for Tridiagonal {
    fn from(t: &SymTridiagonal) -> Self {
        Self { sub: t.off.clone(), diag: t.diag.clone(), sup: t.off.clone() }
    }
}

/// Thin QR with the diagonal of `R` made non-negative.
pub fn qr_thin(a: &Mat) -> (Mat, Mat) {
    let (m, n) = a.shape();
    if n == 0 {
        return (Mat::zeros(m, 0), Mat::zeros(0, 0));
    }
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..r.nrows() {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    (q, r)
}

fn asymmetry(m: &Mat) -> f64 {
    let n = m.norm();
    if n == 0.0 {
        return 0.0;
    }
    (m - m.transpose()).norm() / n
}

/// Symmetric eigendecomposition `M = Q Λ Qᵀ` with ascending eigenvalues.
pub fn sym_eig(m: &Mat) -> Result<(Mat, Vec<f64>)> {
    if !m.is_square() {
        return Err(mismatch("eigendecomposition needs a square matrix"));
    }
    let asym = asymmetry(m);
    if asym > 1e-12 {
        return Err(Error::NotSymmetric(asym));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok((Mat::zeros(0, 0), Vec::new()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap_or(core::cmp::Ordering::Equal));
    let mut q = Mat::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (k, &i) in order.iter().enumerate() {
        q.set_column(k, &eig.eigenvectors.column(i));
        vals.push(eig.eigenvalues[i]);
    }
    Ok((q, vals))
}

/// Generalized eigendecomposition `A Q = B Q Λ`, `Qᵀ B Q = I`, for symmetric
/// `A` and symmetric positive definite `B`.
pub fn gen_sym_eig(a: &Mat, b: &Mat) -> Result<(Mat, Vec<f64>)> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(mismatch("generalized eigenproblem needs two square matrices of equal size"));
    }
    let asym = asymmetry(a).max(asymmetry(b));
    if asym > 1e-12 {
        return Err(Error::NotSymmetric(asym));
    }
    let chol = b.clone().cholesky().ok_or(Error::CholeskyFailed)?;
    let c = chol.l();
    // M = C⁻¹ A C⁻ᵀ
    let ci_a = c.solve_lower_triangular(a).ok_or(Error::CholeskyFailed)?;
    let m = c.solve_lower_triangular(&ci_a.transpose()).ok_or(Error::CholeskyFailed)?;
    let (w, vals) = sym_eig(&((&m + m.transpose()) * 0.5))?;
    let q = c.transpose().solve_upper_triangular(&w).ok_or(Error::CholeskyFailed)?;
    Ok((q, vals))
}

/// Best rank-`r` approximation factors `(U, σ, V)` with `M ≈ U diag(σ) Vᵀ`.
///
/// Singular values are non-increasing; equal values keep the order returned
/// by the decomposition, so the factors are not unique in that case.
pub fn truncated_svd(m: &Mat, r: usize) -> (Mat, Vec<f64>, Mat) {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    let r = r.clamp(1, k.max(1)).min(k);
    if k == 0 {
        return (Mat::zeros(rows, 0), Vec::new(), Mat::zeros(cols, 0));
    }
    // strongly rectangular inputs: SVD of the triangular factor only
    if cols > 2 * rows {
        let (q, rt) = qr_thin(&m.transpose());
        let (u, s, w) = truncated_svd(&rt.transpose(), r);
        return (u, s, q * w);
    }
    if rows > 2 * cols {
        let (q, rr) = qr_thin(m);
        let (u, s, v) = truncated_svd(&rr, r);
        return (q * u, s, v);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap_or(core::cmp::Ordering::Equal));
    let mut uu = Mat::zeros(rows, r);
    let mut vv = Mat::zeros(cols, r);
    let mut s = Vec::with_capacity(r);
    for (j, &i) in order.iter().take(r).enumerate() {
        uu.set_column(j, &u.column(i));
        vv.set_column(j, &vt.row(i).transpose());
        s.push(svd.singular_values[i]);
    }
    (uu, s, vv)
}

/// All singular values in non-increasing order.
pub fn singular_values(m: &Mat) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    s
}

/// Left singular vectors and singular values of a (possibly very wide)
/// matrix, sorted non-increasingly. Wide inputs are first reduced by an LQ
/// factorization so the SVD only sees a square factor.
pub fn left_singular(m: &Mat) -> (Mat, Vec<f64>) {
    let (rows, cols) = m.shape();
    if rows == 0 {
        return (Mat::zeros(0, 0), Vec::new());
    }
    let small = if cols > 2 * rows {
        let (_, r) = qr_thin(&m.transpose());
        r.transpose()
    } else {
        m.clone()
    };
    let k = small.nrows().min(small.ncols());
    let svd = small.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].partial_cmp(&svd.singular_values[a]).unwrap_or(core::cmp::Ordering::Equal));
    let mut uu = Mat::zeros(rows, k);
    let mut s = Vec::with_capacity(k);
    for (j, &i) in order.iter().enumerate() {
        uu.set_column(j, &u.column(i));
        s.push(svd.singular_values[i]);
    }
    (uu, s)
}

/// A diagonalizable `Γ = T Λ T⁻¹` with real positive-ish spectrum, stored as
/// the two transforms the Sylvester solver needs.
#[derive(Debug, Clone)]
pub struct Diagonalized {
    /// `T⁻ᵀ`: right-multiplying the equation by it decouples the columns.
    pub to_eig: Mat,
    /// `Tᵀ`: maps decoupled columns back.
    pub from_eig: Mat,
    pub eigenvalues: Vec<f64>,
}

impl Diagonalized {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `Γ` symmetric.
    pub fn symmetric(gamma: &Mat) -> Result<Self> {
        let (q, vals) = sym_eig(gamma)?;
        Ok(Self { to_eig: q.clone(), from_eig: q.transpose(), eigenvalues: vals })
    }

    /// `Γ = B⁻¹ A` with `A` symmetric and `B` symmetric positive definite.
    pub fn generalized(a: &Mat, b: &Mat) -> Result<Self> {
        let (q, vals) = gen_sym_eig(a, b)?;
        Ok(Self { to_eig: b * &q, from_eig: q.transpose(), eigenvalues: vals })
    }

    /// `Γ = (S⁺)ᵀ M Sᵀ` for a full-row-rank `S` (`r × m`) and symmetric `M`
    /// (`m × m`), diagonalized through a QR of `Sᵀ` and the spectral
    /// decomposition of the projected symmetric matrix.
    pub fn projected(s: &Mat, m: &Mat) -> Result<Self> {
        if m.nrows() != s.ncols() || !m.is_square() {
            return Err(mismatch("projected Sylvester coefficient: shapes disagree"));
        }
        let (qs, rs) = qr_thin(&s.transpose());
        let r = s.nrows();
        if qs.ncols() < r {
            return Err(Error::Singular("core matricization has fewer columns than rows".into()));
        }
        let inner = qs.transpose() * m * &qs;
        let (w, vals) = sym_eig(&((&inner + inner.transpose()) * 0.5))?;
        // Γ = R⁻¹ W Λ Wᵀ R, so T = R⁻¹ W, T⁻ᵀ = Rᵀ W, Tᵀ = Wᵀ R⁻ᵀ.
        let to_eig = rs.transpose() * &w;
        let from_eig = rs
            .solve_upper_triangular(&w)
            .ok_or_else(|| Error::Singular("triangular factor of the core is singular".into()))?
            .transpose();
        Ok(Self { to_eig, from_eig, eigenvalues: vals })
    }

    /// Dense `Γ` (test helper).
    pub fn to_dense(&self) -> Mat {
        // Γᵀ = T⁻ᵀ Λ Tᵀ
        let lam = Mat::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        (&self.to_eig * lam * &self.from_eig).transpose()
    }
}

/// Solves `(L + shift·I) V + V Γᵀ = C` for each right-hand side in `cs`,
/// with one shifted tridiagonal solve per eigenvalue of `Γ` shared by all
/// right-hand sides.
pub fn sylvester_solve_many(l: &SymTridiagonal, shift: f64, gamma: &Diagonalized, cs: &[Mat]) -> Result<Vec<Mat>> {
    let n = l.n();
    let r = gamma.dim();
    for c in cs {
        if c.nrows() != n || c.ncols() != r {
            return Err(mismatch("Sylvester right-hand side has the wrong shape"));
        }
    }
    if cs.is_empty() {
        return Ok(Vec::new());
    }
    let transformed: Vec<Mat> = cs.iter().map(|c| c * &gamma.to_eig).collect();
    let mut solved: Vec<Mat> = alloc::vec![Mat::zeros(n, r); cs.len()];
    let mut rhs = Mat::zeros(n, cs.len());
    for i in 0..r {
        for (k, t) in transformed.iter().enumerate() {
            rhs.set_column(k, &t.column(i));
        }
        let x = l.shifted_solve(shift + gamma.eigenvalues[i], &rhs)?;
        for (k, s) in solved.iter_mut().enumerate() {
            s.set_column(i, &x.column(k));
        }
    }
    Ok(solved.into_iter().map(|s| s * &gamma.from_eig).collect())
}

/// Single right-hand side version of [`sylvester_solve_many`].
pub fn sylvester_solve(l: &SymTridiagonal, shift: f64, gamma: &Diagonalized, c: &Mat) -> Result<Mat> {
    Ok(sylvester_solve_many(l, shift, gamma, core::slice::from_ref(c))?.pop().expect("one solution"))
}

/// Saddle-point solver for `[G U; Uᵀ 0][x; y] = [b; 0]` given only the action
/// of `G⁻¹` on blocks of columns.
///
/// The Schur complement `G_S = -Uᵀ G⁻¹ U` is formed once; every solve then
/// returns `x = (I + G⁻¹ U G_S⁻¹ Uᵀ) G⁻¹ b` and `y = -G_S⁻¹ Uᵀ G⁻¹ b`.
pub struct SaddleSolver<F> {
    apply_ginv: F,
    u: Mat,
    ginv_u: Mat,
    schur: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl<F> SaddleSolver<F>
where
    F: Fn(&Mat) -> Result<Mat>,
{
    pub fn new(apply_ginv: F, u: Mat) -> Result<Self> {
        let ginv_u = apply_ginv(&u)?;
        let gs = -(u.transpose() * &ginv_u);
        let schur = gs.lu();
        if !schur.is_invertible() {
            return Err(Error::Singular("Schur complement of the saddle-point system".into()));
        }
        Ok(Self { apply_ginv, u, ginv_u, schur })
    }

    /// Solves for every column of `b`.
    pub fn solve(&self, b: &Mat) -> Result<(Mat, Mat)> {
        let z = (self.apply_ginv)(b)?;
        let y = -self
            .schur
            .solve(&(self.u.transpose() * &z))
            .ok_or_else(|| Error::Singular("Schur complement of the saddle-point system".into()))?;
        let x = z - &self.ginv_u * &y;
        Ok((x, y))
    }
}

/// One-shot saddle-point solve, see [`SaddleSolver`].
pub fn saddle_solve<F>(apply_ginv: F, u: &Mat, b: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)>
where
    F: Fn(&Mat) -> Result<Mat>,
{
    let solver = SaddleSolver::new(apply_ginv, u.clone())?;
    let bm = Mat::from_column_slice(b.len(), 1, b.as_slice());
    let (x, y) = solver.solve(&bm)?;
    Ok((DVector::from_column_slice(x.as_slice()), DVector::from_column_slice(y.as_slice())))
}
