//! Dense tensors and the exact multilinear primitives.
//!
//! Storage is mode-0-fastest: the flat offset of `(i_0, i_1, ..., i_C)` is
//! `i_0 + I_0 * (i_1 + I_1 * (i_2 + ...))`. Mode-m matrixizing orders the
//! columns so that the remaining modes with smaller index vary more rapidly,
//! which makes mode-0 matrixizing a plain reshape and lets an order-2 tensor
//! share its buffer with a column-major [`Matrix`].

use crate::error::{Error, Result};

/// Dense column-major real matrix.
pub type Matrix = nalgebra::DMatrix<f64>;

/// Role of a tensor mode. Mode 0 holds measurements (pixels), all others
/// are causal factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeRole {
    Measurement,
    Causal,
}

pub fn mode_role(mode: usize) -> ModeRole {
    if mode == 0 {
        ModeRole::Measurement
    } else {
        ModeRole::Causal
    }
}

/// Order-M real array with explicit extents.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidTensor("order-0 tensors are not allowed".into()));
        }
        let len = checked_len(&dims)?;
        if len != data.len() {
            return Err(Error::Shape(format!(
                "dims {:?} need {} entries, got {}",
                dims,
                len,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let len = checked_len(dims)?;
        Self::new(dims.to_vec(), vec![0.0; len])
    }

    /// Builds a tensor from a function of the multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(dims)?;
        let mut idx = vec![0usize; dims.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            increment(&mut idx, dims);
        }
        Ok(t)
    }

    /// Wraps a matrix as an order-2 tensor without copying its layout.
    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            dims: vec![m.nrows(), m.ncols()],
            data: m.as_slice().to_vec(),
        }
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

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut off = 0;
        let mut stride = 1;
        for (&i, &n) in idx.iter().zip(&self.dims) {
            debug_assert!(i < n);
            off += i * stride;
            stride *= n;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }

    /// `(product of extents before mode, extent, product after mode)`.
    fn split(&self, mode: usize) -> (usize, usize, usize) {
        let left: usize = self.dims[..mode].iter().product();
        let right: usize = self.dims[mode + 1..].iter().product();
        (left, self.dims[mode], right)
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Subtensor with the mode-`mode` index fixed to `index`, as a flat
    /// vector in canonical order of the remaining modes.
    pub fn slab(&self, mode: usize, index: usize) -> Vec<f64> {
        let (left, n, right) = self.split(mode);
        let mut out = Vec::with_capacity(left * right);
        for b in 0..right {
            let base = left * (index + n * b);
            out.extend_from_slice(&self.data[base..base + left]);
        }
        out
    }

    /// Frobenius norm of every mode-`mode` slab.
    pub fn slab_norms(&self, mode: usize) -> Vec<f64> {
        let (left, n, right) = self.split(mode);
        let mut acc = vec![0.0; n];
        for b in 0..right {
            for (i, a) in acc.iter_mut().enumerate() {
                let base = left * (i + n * b);
                *a += self.data[base..base + left].iter().map(|v| v * v).sum::<f64>();
            }
        }
        acc.into_iter().map(f64::sqrt).collect()
    }

    /// Keeps the listed indices (in the given order) along `mode`.
    pub fn select(&self, mode: usize, indices: &[usize]) -> Result<Self> {
        self.check_mode(mode)?;
        let (left, n, right) = self.split(mode);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::Shape(format!("index {bad} >= extent {n}")));
        }
        let mut dims = self.dims.clone();
        dims[mode] = indices.len();
        let mut data = Vec::with_capacity(left * indices.len() * right);
        for b in 0..right {
            for &i in indices {
                let base = left * (i + n * b);
                data.extend_from_slice(&self.data[base..base + left]);
            }
        }
        Ok(Self { dims, data })
    }

    /// Leading sub-block `[0, ranks[m])` along every mode.
    pub fn leading(&self, ranks: &[usize]) -> Result<Self> {
        if ranks.len() != self.order() {
            return Err(Error::Shape("rank list length differs from order".into()));
        }
        let mut t = self.clone();
        for (m, &r) in ranks.iter().enumerate() {
            if r != t.dims[m] {
                let idx: Vec<usize> = (0..r).collect();
                t = t.select(m, &idx)?;
            }
        }
        Ok(t)
    }

    /// Flips the sign of the mode-`mode` slabs where `signs[i] < 0`.
    pub fn flip_slabs(&mut self, mode: usize, signs: &[f64]) {
        let (left, n, right) = self.split(mode);
        for b in 0..right {
            for (i, &s) in signs.iter().enumerate().take(n) {
                if s < 0.0 {
                    let base = left * (i + n * b);
                    for v in &mut self.data[base..base + left] {
                        *v = -*v;
                    }
                }
            }
        }
    }
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).ok_or_else(|| {
        Error::InvalidTensor(format!("element count of {dims:?} overflows"))
    })
}

/// Advances a multi-index in canonical order (mode 0 fastest).
pub(crate) fn increment(idx: &mut [usize], dims: &[usize]) {
    for (i, &n) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < n {
            return;
        }
        *i = 0;
    }
}

/// Mode-m matrixizing: `I_m` rows, one column per mode-m fiber.
pub fn matrixize(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    t.check_mode(mode)?;
    let (left, n, right) = t.split(mode);
    if mode == 0 {
        return Ok(Matrix::from_column_slice(n, right, &t.data));
    }
    let mut m = Matrix::zeros(n, left * right);
    for b in 0..right {
        for i in 0..n {
            let src = &t.data[left * (i + n * b)..left * (i + n * b) + left];
            for (a, &v) in src.iter().enumerate() {
                m[(i, a + left * b)] = v;
            }
        }
    }
    Ok(m)
}

/// Inverse of [`matrixize`].
pub fn unmatrixize(m: &Matrix, mode: usize, dims: &[usize]) -> Result<DenseTensor> {
    if mode >= dims.len() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: dims.len(),
        });
    }
    let total = checked_len(dims)?;
    let n = dims[mode];
    if m.nrows() != n || m.nrows() * m.ncols() != total {
        return Err(Error::Shape(format!(
            "{}x{} matrix cannot fold into {:?} along mode {}",
            m.nrows(),
            m.ncols(),
            dims,
            mode
        )));
    }
    if mode == 0 {
        return DenseTensor::new(dims.to_vec(), m.as_slice().to_vec());
    }
    let left: usize = dims[..mode].iter().product();
    let right: usize = dims[mode + 1..].iter().product();
    let mut data = vec![0.0; total];
    for b in 0..right {
        for i in 0..n {
            let dst = &mut data[left * (i + n * b)..left * (i + n * b) + left];
            for (a, v) in dst.iter_mut().enumerate() {
                *v = m[(i, a + left * b)];
            }
        }
    }
    DenseTensor::new(dims.to_vec(), data)
}

/// Mode-m product `t ×_m b`, with `b` of shape `J × I_m`.
pub fn mode_product(t: &DenseTensor, mode: usize, b: &Matrix) -> Result<DenseTensor> {
    t.check_mode(mode)?;
    let (left, n, right) = t.split(mode);
    if b.ncols() != n {
        return Err(Error::Shape(format!(
            "mode-{} product needs {} columns, matrix has {}",
            mode,
            n,
            b.ncols()
        )));
    }
    let j = b.nrows();
    let mut dims = t.dims.clone();
    dims[mode] = j;
    let mut data = vec![0.0; left * j * right];
    if mode == 0 {
        // Columns of the result are b * columns of t.
        let src = Matrix::from_column_slice(n, right, &t.data);
        let out = b * src;
        data.copy_from_slice(out.as_slice());
        return DenseTensor::new(dims, data);
    }
    for blk in 0..right {
        for i in 0..n {
            let src = &t.data[left * (i + n * blk)..left * (i + n * blk) + left];
            for r in 0..j {
                let c = b[(r, i)];
                if c == 0.0 {
                    continue;
                }
                let dst = &mut data[left * (r + j * blk)..left * (r + j * blk) + left];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
    }
    DenseTensor::new(dims, data)
}

/// Applies `t ×_m mats[m]` for every mode where `mats[m]` is present.
pub fn multi_mode_product(t: &DenseTensor, mats: &[Option<&Matrix>]) -> Result<DenseTensor> {
    if mats.len() != t.order() {
        return Err(Error::Shape("one optional matrix per mode expected".into()));
    }
    let mut out = t.clone();
    for (m, b) in mats.iter().enumerate() {
        if let Some(b) = b {
            out = mode_product(&out, m, b)?;
        }
    }
    Ok(out)
}

/// `t ×_m mats[m]ᵀ` for every present matrix.
pub fn multi_mode_product_t(t: &DenseTensor, mats: &[Option<&Matrix>]) -> Result<DenseTensor> {
    let transposed: Vec<Option<Matrix>> = mats.iter().map(|m| m.map(|m| m.transpose())).collect();
    let refs: Vec<Option<&Matrix>> = transposed.iter().map(Option::as_ref).collect();
    multi_mode_product(t, &refs)
}

/// Canonical-order column vector of all entries.
pub fn vectorize(t: &DenseTensor) -> Vec<f64> {
    t.data.clone()
}

/// `[a ⊗ b]_{(i,k),(j,l)} = a_ij b_kl` with row `i·rows(b) + k`.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = Matrix::zeros(ra * rb, ca * cb);
    for j in 0..ca {
        for i in 0..ra {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for l in 0..cb {
                for k in 0..rb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Kronecker chain `mats[0] ⊗ mats[1] ⊗ ...`.
pub fn kronecker_chain(mats: &[&Matrix]) -> Matrix {
    let mut it = mats.iter();
    let first = match it.next() {
        Some(m) => (*m).clone(),
        None => return Matrix::identity(1, 1),
    };
    it.fold(first, |acc, m| kronecker(&acc, m))
}

/// Block-matrix Khatri-Rao product `[(A_1 ⊗ B_1) ... (A_L ⊗ B_L)]`.
pub fn khatri_rao_block(blocks_a: &[Matrix], blocks_b: &[Matrix]) -> Result<Matrix> {
    if blocks_a.len() != blocks_b.len() {
        return Err(Error::Shape(format!(
            "block counts differ: {} vs {}",
            blocks_a.len(),
            blocks_b.len()
        )));
    }
    let rows = match (blocks_a.first(), blocks_b.first()) {
        (Some(a), Some(b)) => a.nrows() * b.nrows(),
        _ => return Ok(Matrix::zeros(0, 0)),
    };
    let prods: Vec<Matrix> = blocks_a
        .iter()
        .zip(blocks_b)
        .map(|(a, b)| kronecker(a, b))
        .collect();
    if prods.iter().any(|p| p.nrows() != rows) {
        return Err(Error::Shape("blocks must share row counts".into()));
    }
    let cols = prods.iter().map(Matrix::ncols).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut off = 0;
    for p in &prods {
        out.columns_mut(off, p.ncols()).copy_from(p);
        off += p.ncols();
    }
    Ok(out)
}

/// Elementwise (Hadamard) product.
pub fn hadamard(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(a.component_mul(b))
}

/// Outer product `v_0 ∘ v_1 ∘ ...`.
pub fn outer(vectors: &[&[f64]]) -> Result<DenseTensor> {
    if vectors.is_empty() {
        return Err(Error::InvalidArgument("outer product needs at least one vector".into()));
    }
    let dims: Vec<usize> = vectors.iter().map(|v| v.len()).collect();
    let mut data: Vec<f64> = vectors[0].to_vec();
    for v in &vectors[1..] {
        let mut next = Vec::with_capacity(data.len() * v.len());
        for &x in v.iter() {
            next.extend(data.iter().map(|d| d * x));
        }
        data = next;
    }
    DenseTensor::new(dims, data)
}

pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    t.data.iter().map(|v| v * v).sum::<f64>().sqrt()
}
