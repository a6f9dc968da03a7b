//! Dense d-way arrays and the index-ordering kernels.
//!
//! All vectorizations are colexicographic: the first index runs fastest. With
//! this convention `vec(t ×₀ A ×₁ B ×₂ C) = (C ⊗ B ⊗ A) vec(t)`, and the mode-μ
//! matricization orders its columns colexicographically over the remaining
//! modes in increasing mode order. Modes are zero-based throughout the crate.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DMatrixView};

use crate::error::{mismatch, Error, Result};

pub type Mat = DMatrix<f64>;

/// Default upper bound on the number of entries a solver may densify.
pub const DENSE_SAFETY_BOUND: usize = 10_000_000;

/// Full tensor with colexicographic storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_dims(&dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(mismatch(alloc::format!(
                "data length {} does not match dims {:?}",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let len = dims.iter().product();
        Self { dims: dims.to_vec(), data: vec![0.0; len] }
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let len: usize = dims.iter().product();
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, dims);
        }
        Self { dims: dims.to_vec(), data }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        let mut lin = 0;
        let mut stride = 1;
        for (i, n) in idx.iter().zip(&self.dims) {
            lin += i * stride;
            stride *= n;
        }
        lin
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        if self.dims != other.dims {
            return Err(mismatch("inner product of tensors with different dims"));
        }
        Ok(dot(&self.data, &other.data))
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(mismatch("axpy of tensors with different dims"));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        self.scale(alpha);
        self
    }

    /// Reinterprets the data with new dimensions of the same total size.
    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims, self.data)
    }

    /// Mode-`mode` matricization, `n_mode × ∏_{ν≠mode} n_ν`.
    pub fn matricize(&self, mode: usize) -> Result<Mat> {
        self.check_mode(mode)?;
        let (left, n, right) = split(&self.dims, mode);
        if left == 1 {
            return Ok(Mat::from_column_slice(n, right, &self.data));
        }
        let mut m = Mat::zeros(n, left * right);
        for b in 0..right {
            for i in 0..n {
                let src = left * (i + n * b);
                for a in 0..left {
                    m[(i, a + left * b)] = self.data[src + a];
                }
            }
        }
        Ok(m)
    }

    /// Inverse of [`DenseTensor::matricize`].
    pub fn dematricize(m: &Mat, mode: usize, dims: &[usize]) -> Result<Self> {
        validate_dims(dims)?;
        if mode >= dims.len() {
            return Err(Error::ModeOutOfRange { mode, order: dims.len() });
        }
        let (left, n, right) = split(dims, mode);
        if m.nrows() != n || m.ncols() != left * right {
            return Err(mismatch("matrix shape does not match the matricization"));
        }
        let mut data = vec![0.0; left * n * right];
        for b in 0..right {
            for i in 0..n {
                let dst = left * (i + n * b);
                for a in 0..left {
                    data[dst + a] = m[(i, a + left * b)];
                }
            }
        }
        Ok(Self { dims: dims.to_vec(), data })
    }

    /// Left unfolding `X^{<k>}` merging the first `k` modes into rows, `1 ≤ k ≤ d-1`.
    pub fn unfold_left(&self, k: usize) -> Result<Mat> {
        if k == 0 || k >= self.order() {
            return Err(Error::ModeOutOfRange { mode: k, order: self.order() });
        }
        let rows: usize = self.dims[..k].iter().product();
        let cols = self.len() / rows;
        Ok(Mat::from_column_slice(rows, cols, &self.data))
    }

    /// `t ×_mode M`: replaces mode `mode` (size `n`) by `M.nrows()`.
    pub fn mode_product(&self, m: &Mat, mode: usize) -> Result<Self> {
        self.check_mode(mode)?;
        let (left, n, right) = split(&self.dims, mode);
        if m.ncols() != n {
            return Err(mismatch(alloc::format!(
                "mode product: matrix has {} columns, mode {} has size {}",
                m.ncols(),
                mode,
                n
            )));
        }
        let out_n = m.nrows();
        let mut dims = self.dims.clone();
        dims[mode] = out_n;
        if left == 1 {
            let t = DMatrixView::from_slice(&self.data, n, right);
            let prod = m * t;
            return Ok(Self { dims, data: prod.data.into() });
        }
        let mut data = vec![0.0; left * out_n * right];
        let mt = m.transpose();
        for b in 0..right {
            let block = DMatrixView::from_slice(&self.data[left * n * b..left * n * (b + 1)], left, n);
            let prod = block * &mt;
            data[left * out_n * b..left * out_n * (b + 1)].copy_from_slice(prod.as_slice());
        }
        Ok(Self { dims, data })
    }

    /// Applies `mats[μ]` in every mode where it is `Some`.
    pub fn multi_mode_product(&self, mats: &[Option<&Mat>]) -> Result<Self> {
        if mats.len() != self.order() {
            return Err(mismatch("one optional matrix per mode expected"));
        }
        // Shrinking modes first keeps intermediates small.
        let mut order: Vec<usize> = (0..mats.len()).filter(|&m| mats[m].is_some()).collect();
        order.sort_by(|&a, &b| {
            let ra = mats[a].map(|m| m.nrows() as f64 / m.ncols() as f64).unwrap_or(1.0);
            let rb = mats[b].map(|m| m.nrows() as f64 / m.ncols() as f64).unwrap_or(1.0);
            ra.partial_cmp(&rb).unwrap_or(core::cmp::Ordering::Equal)
        });
        let mut out = self.clone();
        for mode in order {
            out = out.mode_product(mats[mode].unwrap(), mode)?;
        }
        Ok(out)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            Err(Error::ModeOutOfRange { mode, order: self.order() })
        } else {
            Ok(())
        }
    }
}

/// Maps `vec(S_(i))` to `vec(S_(j))` for an array of shape `dims`.
pub fn mode_permutation(v: &[f64], dims: &[usize], i: usize, j: usize) -> Result<Vec<f64>> {
    let len: usize = dims.iter().product();
    if v.len() != len {
        return Err(mismatch("vector length does not match the core dims"));
    }
    if i >= dims.len() || j >= dims.len() {
        return Err(Error::ModeOutOfRange { mode: i.max(j), order: dims.len() });
    }
    if i == j {
        return Ok(v.to_vec());
    }
    let src = mode_major_strides(dims, i);
    let dst = mode_major_strides(dims, j);
    let mut out = vec![0.0; len];
    let mut idx = vec![0usize; dims.len()];
    for _ in 0..len {
        let s: usize = idx.iter().zip(&src).map(|(a, b)| a * b).sum();
        let t: usize = idx.iter().zip(&dst).map(|(a, b)| a * b).sum();
        out[t] = v[s];
        increment(&mut idx, dims);
    }
    Ok(out)
}

/// Strides of `vec(S_(mode))`: mode `mode` runs fastest, then the remaining
/// modes in increasing order.
fn mode_major_strides(dims: &[usize], mode: usize) -> Vec<usize> {
    let mut strides = vec![0; dims.len()];
    strides[mode] = 1;
    let mut s = dims[mode];
    for (m, n) in dims.iter().enumerate() {
        if m != mode {
            strides[m] = s;
            s *= n;
        }
    }
    strides
}

/// Dense Kronecker product `a ⊗ b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for q in 0..bc {
                for p in 0..br {
                    out[(i * br + p, j * bc + q)] = aij * b[(p, q)];
                }
            }
        }
    }
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn split(dims: &[usize], mode: usize) -> (usize, usize, usize) {
    let left = dims[..mode].iter().product();
    let right = dims[mode + 1..].iter().product();
    (left, dims[mode], right)
}

pub(crate) fn increment(idx: &mut [usize], dims: &[usize]) {
    for (i, n) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < *n {
            return;
        }
        *i = 0;
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("tensor order must be at least 1".into()));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidArgument("all mode sizes must be positive".into()));
    }
    Ok(())
}
