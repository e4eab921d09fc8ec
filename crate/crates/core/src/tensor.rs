//! Dense row-major tensors and the structural operations on their legs.
//!
//! A [`Tensor`] is a shape plus a contiguous `f64` buffer with the last leg
//! varying fastest. An empty shape is a scalar holding exactly one value.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &self.data)
            .finish()
    }
}

/// Row-major strides for `shape`.
pub fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

/// Advance a multi-index in row-major order. Returns `false` after the last index.
pub(crate) fn next_index(idx: &mut [usize], shape: &[usize]) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

impl Tensor {
    /// Build a tensor from a shape and row-major data.
    ///
    /// Rejects zero-sized legs, length mismatches and non-finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::ZeroDim(shape));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                shape,
                expected,
                got: data.len(),
            });
        }
        if let Some((offset, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite { offset, value });
        }
        Ok(Self { shape, data })
    }

    /// Internal constructor for buffers produced by our own arithmetic.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(Vec::new(), vec![value])
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![0.0; n])
    }

    pub fn ones(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![1.0; n])
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0; shape.len()];
        loop {
            data.push(f(&idx));
            if !next_index(&mut idx, shape) {
                break;
            }
        }
        Self::from_parts(shape.to_vec(), data)
    }

    /// Entries drawn uniformly from `[0, 1)`.
    pub fn random<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), (0..n).map(|_| rng.gen::<f64>()).collect())
    }

    /// Entries drawn uniformly from `[-1, 1)`.
    pub fn random_signed<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> Self {
        let n = shape.iter().product();
        Self::from_parts(
            shape.to_vec(),
            (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect(),
        )
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i[0] == i[1] { 1.0 } else { 0.0 })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    /// Value of a scalar (or any single-element) tensor.
    pub fn item(&self) -> Option<f64> {
        (self.data.len() == 1).then(|| self.data[0])
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    fn offset(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.shape.len() {
            return Err(Error::ArityMismatch {
                expected: self.shape.len(),
                got: idx.len(),
            });
        }
        let mut off = 0;
        for (k, (&i, &d)) in idx.iter().zip(&self.shape).enumerate() {
            if i >= d {
                return Err(Error::IndexOutOfBounds {
                    index: idx.to_vec(),
                    shape: self.shape.clone(),
                });
            }
            off = off * self.shape[k] + i;
        }
        Ok(off)
    }

    /// Read the element at a multi-index.
    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        self.offset(idx).map(|o| self.data[o])
    }

    /// Element of a matrix; panics on out-of-range indices.
    #[inline]
    pub(crate) fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if shape.contains(&0) {
            return Err(Error::ZeroDim(shape.to_vec()));
        }
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data.clone()))
    }

    /// Reorder legs: output leg `k` is input leg `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let n = self.order();
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidPermutation(perm.to_vec()));
        }
        if perm.iter().enumerate().all(|(k, &p)| k == p) {
            return Ok(self.clone());
        }
        let in_strides = self.strides();
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let gather: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0; n];
        let mut off = 0usize;
        loop {
            data.push(self.data[off]);
            // odometer with incremental offset
            let mut k = n;
            loop {
                if k == 0 {
                    return Ok(Tensor::from_parts(new_shape, data));
                }
                k -= 1;
                idx[k] += 1;
                off += gather[k];
                if idx[k] < new_shape[k] {
                    break;
                }
                off -= gather[k] * idx[k];
                idx[k] = 0;
            }
        }
    }

    pub fn transpose(&self) -> Result<Tensor> {
        self.expect_order(2)?;
        self.permute(&[1, 0])
    }

    /// Merge legs according to an ordered partition.
    ///
    /// Each group lists legs in nesting order (first slowest); the output has
    /// one leg per group. Legs are permuted as needed before merging.
    pub fn group_legs(&self, groups: &[Vec<usize>]) -> Result<Tensor> {
        let n = self.order();
        let mut seen = vec![false; n];
        for g in groups {
            if g.is_empty() {
                return Err(Error::InvalidPartition("empty group".into()));
            }
            for &l in g {
                if l >= n || std::mem::replace(&mut seen[l], true) {
                    return Err(Error::InvalidPartition(format!(
                        "{groups:?} is not a partition of {n} legs"
                    )));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidPartition(format!(
                "{groups:?} does not cover all {n} legs"
            )));
        }
        let perm: Vec<usize> = groups.iter().flatten().copied().collect();
        let permuted = self.permute(&perm)?;
        let shape = groups
            .iter()
            .map(|g| g.iter().map(|&l| self.shape[l]).product())
            .collect();
        Ok(Tensor::from_parts(shape, permuted.data))
    }

    /// Replace leg `leg` with legs of the given dims (row-major nesting).
    pub fn split_legs(&self, leg: usize, dims: &[usize]) -> Result<Tensor> {
        if leg >= self.order() {
            return Err(Error::InvalidArgument(format!(
                "leg {leg} out of range for order {}",
                self.order()
            )));
        }
        if dims.is_empty() || dims.contains(&0) || dims.iter().product::<usize>() != self.shape[leg]
        {
            return Err(Error::ShapeMismatch(format!(
                "cannot split leg of dimension {} into {dims:?}",
                self.shape[leg]
            )));
        }
        let mut shape = self.shape[..leg].to_vec();
        shape.extend_from_slice(dims);
        shape.extend_from_slice(&self.shape[leg + 1..]);
        Ok(Tensor::from_parts(shape, self.data.clone()))
    }

    pub(crate) fn expect_order(&self, order: usize) -> Result<()> {
        if self.order() == order {
            Ok(())
        } else {
            Err(Error::WrongOrder {
                expected: order,
                got: self.order(),
            })
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max-abs elementwise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Frobenius norm of the difference; shapes must agree.
    pub fn distance(&self, other: &Tensor) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    fn check_same_shape(&self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(
            self.shape.clone(),
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn scale(&self, alpha: f64) -> Tensor {
        self.map(|v| v * alpha)
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.check_same_shape(other)?;
        Ok(Tensor::from_parts(
            self.shape.clone(),
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// Matrix product of two order-2 tensors.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        self.expect_order(2)?;
        other.expect_order(2)?;
        let (m, k) = (self.shape[0], self.shape[1]);
        let (k2, n) = (other.shape[0], other.shape[1]);
        if k != k2 {
            return Err(Error::ShapeMismatch(format!(
                "matmul {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, &self.data, &other.data, &mut out);
        Ok(Tensor::from_parts(vec![m, n], out))
    }

    /// Matrix trace.
    pub fn trace(&self) -> Result<f64> {
        self.expect_order(2)?;
        if self.shape[0] != self.shape[1] {
            return Err(Error::ShapeMismatch(format!("trace of {:?}", self.shape)));
        }
        Ok((0..self.shape[0]).map(|i| self.at(i, i)).sum())
    }

    /// Tensor product: output legs are `self`'s legs followed by `other`'s.
    pub fn outer(&self, other: &Tensor) -> Tensor {
        let mut shape = self.shape.clone();
        shape.extend_from_slice(&other.shape);
        let mut data = Vec::with_capacity(self.len() * other.len());
        for &a in &self.data {
            data.extend(other.data.iter().map(|&b| a * b));
        }
        Tensor::from_parts(shape, data)
    }

    /// Rows `start..end` of a matrix.
    pub(crate) fn row_block(&self, start: usize, end: usize) -> Tensor {
        let c = self.shape[1];
        Tensor::from_parts(vec![end - start, c], self.data[start * c..end * c].to_vec())
    }

    /// Columns `start..end` of a matrix.
    pub(crate) fn col_block(&self, start: usize, end: usize) -> Tensor {
        let (r, c) = (self.shape[0], self.shape[1]);
        let w = end - start;
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&self.data[i * c + start..i * c + end]);
        }
        Tensor::from_parts(vec![r, w], data)
    }
}

/// `out += a (m×k) · b (k×n)`, row-major.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], out: &mut [f64]) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

/// Delta tensor: one where all indices agree, zero elsewhere.
pub fn delta(order: usize, dim: usize) -> Result<Tensor> {
    if order == 0 {
        return Err(Error::InvalidArgument(
            "delta tensor needs at least one leg".into(),
        ));
    }
    if dim == 0 {
        return Err(Error::ZeroDim(vec![0; order]));
    }
    let shape = vec![dim; order];
    let mut t = Tensor::zeros(&shape);
    let step: usize = strides_of(&shape).iter().sum();
    for i in 0..dim {
        t.data[i * step] = 1.0;
    }
    Ok(t)
}

/// Square matrix with `v` on its diagonal.
pub fn diag_embed(v: &Tensor) -> Result<Tensor> {
    v.expect_order(1)?;
    let n = v.len();
    let mut t = Tensor::zeros(&[n, n]);
    for (i, &x) in v.data.iter().enumerate() {
        t.data[i * n + i] = x;
    }
    Ok(t)
}

/// Kronecker product, legs grouped as `(i k)(j l)`.
pub fn kron(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.expect_order(2)?;
    b.expect_order(2)?;
    let (m, n) = (a.shape[0], a.shape[1]);
    let (p, q) = (b.shape[0], b.shape[1]);
    let mut data = vec![0.0; m * p * n * q];
    let cols = n * q;
    for i in 0..m {
        for k in 0..p {
            let row = (i * p + k) * cols;
            for j in 0..n {
                let aij = a.at(i, j);
                for l in 0..q {
                    data[row + j * q + l] = aij * b.at(k, l);
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![m * p, n * q], data))
}

/// Whether `V` is an isometry on its smaller dimension.
///
/// Tall matrices need `VᵀV = I`, wide ones `VVᵀ = I`.
pub fn is_isometry(v: &Tensor, tol: f64) -> Result<bool> {
    Ok(isometry_defect(v)? <= tol)
}

/// `max |VᵀV − I|` (or `VVᵀ` for wide matrices).
pub fn isometry_defect(v: &Tensor) -> Result<f64> {
    v.expect_order(2)?;
    let (m, n) = (v.shape[0], v.shape[1]);
    let mut worst: f64 = 0.0;
    if m >= n {
        for a in 0..n {
            for b in a..n {
                let dot: f64 = (0..m).map(|i| v.at(i, a) * v.at(i, b)).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
    } else {
        for a in 0..m {
            for b in a..m {
                let dot: f64 = (0..n).map(|j| v.at(a, j) * v.at(b, j)).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
    }
    Ok(worst)
}
