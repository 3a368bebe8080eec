//! Measurement-space filter banks `{H_s}` that carve wholes and parts out
//! of the data tensor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{mode_product, DenseTensor, Matrix};

/// Tolerance used to decide that a dense bank sums to the identity.
pub const DENSE_PARTITION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PyramidMode {
    Gaussian,
    Laplacian,
}

impl std::str::FromStr for PyramidMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "laplacian" => Ok(Self::Laplacian),
            other => Err(Error::InvalidArgument(format!("unknown pyramid mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankKind {
    Segmentation,
    PyramidLevel,
    General,
}

/// Serializable description of how a bank was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BankSpec {
    Segmentation {
        dim: usize,
        regions: Vec<Vec<usize>>,
    },
    Pyramid {
        width: usize,
        height: usize,
        levels: usize,
        mode: PyramidMode,
    },
    /// Arbitrary dense filters; stored alongside the manifest as tensors.
    General { dim: usize, count: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Filter {
    /// 0/1 diagonal selector given by its support (sorted, unique).
    Selector(Vec<usize>),
    Dense(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFilterBank {
    dim: usize,
    filters: Vec<Filter>,
    kind: BankKind,
    partition: bool,
    spec: BankSpec,
}

impl SegmentFilterBank {
    /// One selector covering the whole measurement range.
    pub fn identity(dim: usize) -> Self {
        make_segmentation_bank(dim, &[(0..dim).collect()]).expect("identity bank is valid")
    }

    /// Bank of arbitrary dense `dim × dim` filters.
    pub fn general(dim: usize, filters: Vec<Matrix>) -> Result<Self> {
        if filters.is_empty() {
            return Err(Error::InvalidArgument("filter bank needs at least one filter".into()));
        }
        if filters.iter().any(|h| h.shape() != (dim, dim)) {
            return Err(Error::Shape(format!("general filters must be {dim}x{dim}")));
        }
        let sum = filters.iter().fold(Matrix::zeros(dim, dim), |acc, h| acc + h);
        let partition = sum == Matrix::identity(dim, dim);
        let count = filters.len();
        Ok(Self {
            dim,
            filters: filters.into_iter().map(Filter::Dense).collect(),
            kind: BankKind::General,
            partition,
            spec: BankSpec::General { dim, count },
        })
    }

    /// Rebuilds a bank from its serialized description. General banks need
    /// their filters supplied separately.
    pub fn from_spec(spec: &BankSpec, dense: Option<Vec<Matrix>>) -> Result<Self> {
        match spec {
            BankSpec::Segmentation { dim, regions } => make_segmentation_bank(*dim, regions),
            BankSpec::Pyramid {
                width,
                height,
                levels,
                mode,
            } => make_pyramid_bank(*width, *height, *levels, *mode),
            BankSpec::General { dim, count } => {
                let filters = dense.ok_or_else(|| {
                    Error::Format("general bank needs its filter matrices".into())
                })?;
                if filters.len() != *count {
                    return Err(Error::Format(format!(
                        "expected {count} filters, got {}",
                        filters.len()
                    )));
                }
                Self::general(*dim, filters)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn kind(&self) -> BankKind {
        self.kind
    }

    /// Whether `Σ_s H_s = I`. Exact for selectors and general banks; dense
    /// pyramid banks are checked within [`DENSE_PARTITION_TOL`].
    pub fn is_partition(&self) -> bool {
        self.partition
    }

    pub fn spec(&self) -> &BankSpec {
        &self.spec
    }

    pub fn filters(&self) -> &[Filter] {
        &self.filters
    }

    /// Selector supports are pairwise disjoint.
    pub fn is_disjoint_segmentation(&self) -> bool {
        if self.kind != BankKind::Segmentation {
            return false;
        }
        let mut seen = vec![false; self.dim];
        for f in &self.filters {
            if let Filter::Selector(idx) = f {
                for &i in idx {
                    if seen[i] {
                        return false;
                    }
                    seen[i] = true;
                }
            }
        }
        true
    }

    /// No filter annihilates a measurement (every column of every `H_s` is
    /// nonzero).
    pub fn is_full_support(&self) -> bool {
        self.filters.iter().all(|f| match f {
            Filter::Selector(idx) => idx.len() == self.dim,
            Filter::Dense(h) => h.column_iter().all(|c| c.iter().any(|v| *v != 0.0)),
        })
    }

    /// Dense `H_s`.
    pub fn matrix(&self, s: usize) -> Matrix {
        match &self.filters[s] {
            Filter::Selector(idx) => {
                let mut h = Matrix::zeros(self.dim, self.dim);
                for &i in idx {
                    h[(i, i)] = 1.0;
                }
                h
            }
            Filter::Dense(h) => h.clone(),
        }
    }

    /// `H_s x`.
    pub fn apply(&self, s: usize, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!("vector length {} vs bank dim {}", x.len(), self.dim)));
        }
        Ok(match &self.filters[s] {
            Filter::Selector(idx) => {
                let mut out = vec![0.0; self.dim];
                for &i in idx {
                    out[i] = x[i];
                }
                out
            }
            Filter::Dense(h) => (h * nalgebra::DVector::from_column_slice(x)).iter().copied().collect(),
        })
    }
}

/// Builds 0/1 diagonal selectors from index regions. The partition flag is
/// set iff every index in `0..dim` belongs to exactly one region.
pub fn make_segmentation_bank(dim: usize, regions: &[Vec<usize>]) -> Result<SegmentFilterBank> {
    if regions.is_empty() {
        return Err(Error::InvalidArgument("at least one region is required".into()));
    }
    let mut count = vec![0usize; dim];
    let mut filters = Vec::with_capacity(regions.len());
    let mut normalized = Vec::with_capacity(regions.len());
    for region in regions {
        if region.is_empty() {
            return Err(Error::InvalidArgument("regions must be nonempty".into()));
        }
        let mut idx = region.clone();
        idx.sort_unstable();
        idx.dedup();
        if let Some(&bad) = idx.iter().find(|&&i| i >= dim) {
            return Err(Error::InvalidArgument(format!("region index {bad} out of range 0..{dim}")));
        }
        for &i in &idx {
            count[i] += 1;
        }
        normalized.push(idx.clone());
        filters.push(Filter::Selector(idx));
    }
    let partition = count.iter().all(|&c| c == 1);
    Ok(SegmentFilterBank {
        dim,
        filters,
        kind: BankKind::Segmentation,
        partition,
        spec: BankSpec::Segmentation {
            dim,
            regions: normalized,
        },
    })
}

const BINOMIAL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Binomial blur followed by 2× decimation, `ceil(n/2) × n`.
fn reduce_1d(n: usize) -> Matrix {
    let m = n.div_ceil(2);
    let mut r = Matrix::zeros(m, n);
    for i in 0..m {
        for (k, w) in BINOMIAL.iter().enumerate() {
            let src = reflect(2 * i as isize + k as isize - 2, n);
            r[(i, src)] += w;
        }
    }
    r
}

/// Interpolation back to `n` samples from `m = ceil(n/2)`, with each row
/// normalized to unit sum so constants are preserved.
fn expand_1d(n: usize) -> Matrix {
    let m = n.div_ceil(2);
    let mut e = Matrix::zeros(n, m);
    for j in 0..n {
        let mut total = 0.0;
        for i in 0..m {
            let t = j as isize - 2 * i as isize;
            if (-2..=2).contains(&t) {
                let w = BINOMIAL[(t + 2) as usize];
                e[(j, i)] = w;
                total += w;
            }
        }
        for i in 0..m {
            e[(j, i)] /= total;
        }
    }
    e
}

/// Full-resolution Gaussian levels `G_0 = I, G_k = E_1…E_k R_k…R_1` for an
/// image stored with `x` varying fastest.
fn gaussian_levels(width: usize, height: usize, levels: usize) -> Vec<Matrix> {
    let dim = width * height;
    let mut out = vec![Matrix::identity(dim, dim)];
    let (mut w, mut h) = (width, height);
    let mut down = Matrix::identity(dim, dim);
    let mut up = Matrix::identity(dim, dim);
    for _ in 1..levels {
        let r = crate::tensor::kronecker(&reduce_1d(h), &reduce_1d(w));
        let e = crate::tensor::kronecker(&expand_1d(h), &expand_1d(w));
        down = r * down;
        up *= e;
        out.push(&up * &down);
        w = w.div_ceil(2);
        h = h.div_ceil(2);
    }
    out
}

/// Pyramid filter bank over a `width × height` image (pixel `(x, y)` at
/// index `x + width·y`). Gaussian banks hold the low-pass levels; Laplacian
/// banks hold the band-pass differences of adjacent levels plus the final
/// low-pass level, so they sum to the identity.
pub fn make_pyramid_bank(
    width: usize,
    height: usize,
    levels: usize,
    mode: PyramidMode,
) -> Result<SegmentFilterBank> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("image extents must be positive".into()));
    }
    if levels == 0 {
        return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
    }
    let min_side = width.min(height);
    if levels > 1 && min_side < (1usize << (levels - 1)) {
        return Err(Error::InvalidArgument(format!(
            "{width}x{height} image cannot hold {levels} pyramid levels"
        )));
    }
    let dim = width * height;
    let gauss = gaussian_levels(width, height, levels);
    let filters: Vec<Matrix> = match mode {
        PyramidMode::Gaussian => gauss,
        PyramidMode::Laplacian => {
            let mut bands: Vec<Matrix> = gauss.windows(2).map(|w| &w[0] - &w[1]).collect();
            bands.push(gauss.last().expect("at least one level").clone());
            bands
        }
    };
    let sum = filters.iter().fold(Matrix::zeros(dim, dim), |acc, h| acc + h);
    let partition = (sum - Matrix::identity(dim, dim)).abs().max() <= DENSE_PARTITION_TOL;
    Ok(SegmentFilterBank {
        dim,
        filters: filters.into_iter().map(Filter::Dense).collect(),
        kind: BankKind::PyramidLevel,
        partition,
        spec: BankSpec::Pyramid {
            width,
            height,
            levels,
            mode,
        },
    })
}

/// `D_s = D ×_0 H_s`.
pub fn segment_tensor(d: &DenseTensor, bank: &SegmentFilterBank, s: usize) -> Result<DenseTensor> {
    if d.dims()[0] != bank.dim() {
        return Err(Error::Shape(format!(
            "measurement extent {} vs bank dim {}",
            d.dims()[0],
            bank.dim()
        )));
    }
    if s >= bank.len() {
        return Err(Error::InvalidArgument(format!("segment {s} out of range")));
    }
    match &bank.filters[s] {
        Filter::Selector(idx) => {
            let i0 = bank.dim();
            let mut mask = vec![false; i0];
            for &i in idx {
                mask[i] = true;
            }
            let mut out = d.clone();
            for col in out.data_mut().chunks_mut(i0) {
                for (v, &keep) in col.iter_mut().zip(&mask) {
                    if !keep {
                        *v = 0.0;
                    }
                }
            }
            Ok(out)
        }
        Filter::Dense(h) => mode_product(d, 0, h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{rand_tensor, rand_vec, rng};
    use rand::seq::SliceRandom;

    #[test]
    fn halves_partition_identity() {
        let bank = make_segmentation_bank(8, &[(0..4).collect(), (4..8).collect()]).unwrap();
        assert!(bank.is_partition() && bank.is_disjoint_segmentation());
        let sum = bank.matrix(0) + bank.matrix(1);
        assert_eq!(sum, Matrix::identity(8, 8));
    }

    #[test]
    fn overlapping_regions_not_partition() {
        let bank = make_segmentation_bank(8, &[(0..6).collect(), (4..8).collect()]).unwrap();
        assert!(!bank.is_partition());
        assert!(!bank.is_disjoint_segmentation());
    }

    #[test]
    fn segmentation_errors() {
        assert!(make_segmentation_bank(4, &[]).is_err());
        assert!(make_segmentation_bank(4, &[vec![]]).is_err());
        assert!(make_segmentation_bank(4, &[vec![0, 4]]).is_err());
    }

    #[test]
    fn random_partition_apply_and_sum_reproduces_input() {
        let mut r = rng(51);
        let mut idx: Vec<usize> = (0..12).collect();
        idx.shuffle(&mut r);
        let regions = vec![idx[..3].to_vec(), idx[3..7].to_vec(), idx[7..].to_vec()];
        let bank = make_segmentation_bank(12, &regions).unwrap();
        assert!(bank.is_partition());
        let x = rand_vec(&mut r, 12);
        let mut sum = vec![0.0; 12];
        for s in 0..3 {
            for (a, b) in sum.iter_mut().zip(bank.apply(s, &x).unwrap()) {
                *a += b;
            }
        }
        assert_eq!(sum, x);
    }

    #[test]
    fn single_level_gaussian_is_identity() {
        let bank = make_pyramid_bank(4, 4, 1, PyramidMode::Gaussian).unwrap();
        assert_eq!(bank.len(), 1);
        assert_eq!(bank.matrix(0), Matrix::identity(16, 16));
    }

    #[test]
    fn laplacian_collapse_reproduces_image() {
        let mut r = rng(52);
        let bank = make_pyramid_bank(8, 8, 3, PyramidMode::Laplacian).unwrap();
        assert!(bank.is_partition());
        let x = rand_vec(&mut r, 64);
        let mut sum = vec![0.0; 64];
        for s in 0..bank.len() {
            for (a, b) in sum.iter_mut().zip(bank.apply(s, &x).unwrap()) {
                *a += b;
            }
        }
        let err = sum.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10);
    }

    #[test]
    fn constant_image_through_pyramid() {
        let x = vec![0.7; 48];
        let lap = make_pyramid_bank(8, 6, 3, PyramidMode::Laplacian).unwrap();
        for s in 0..lap.len() - 1 {
            assert!(lap.apply(s, &x).unwrap().iter().all(|v| v.abs() <= 1e-10));
        }
        let gauss = make_pyramid_bank(8, 6, 3, PyramidMode::Gaussian).unwrap();
        for s in 0..gauss.len() {
            assert!(gauss.apply(s, &x).unwrap().iter().all(|v| (v - 0.7).abs() <= 1e-10));
        }
        assert!(!gauss.is_partition());
        assert!(gauss.is_full_support());
    }

    #[test]
    fn pyramid_geometry_errors() {
        assert!(make_pyramid_bank(4, 4, 0, PyramidMode::Gaussian).is_err());
        assert!(make_pyramid_bank(4, 4, 4, PyramidMode::Gaussian).is_err());
        let bank = make_pyramid_bank(4, 2, 1, PyramidMode::Gaussian).unwrap();
        let d = DenseTensor::zeros(&[9, 2]).unwrap();
        assert!(segment_tensor(&d, &bank, 0).is_err());
    }

    #[test]
    fn segment_tensor_cases() {
        let mut r = rng(53);
        let d = rand_tensor(&mut r, &[6, 3, 2]);
        let id = SegmentFilterBank::identity(6);
        assert_eq!(segment_tensor(&d, &id, 0).unwrap(), d);
        let bank = make_segmentation_bank(6, &[vec![0, 2, 4], vec![1, 3, 5]]).unwrap();
        let mut sum = segment_tensor(&d, &bank, 0).unwrap();
        sum.add_assign(&segment_tensor(&d, &bank, 1).unwrap()).unwrap();
        assert_eq!(sum, d);
        for s in 0..2 {
            let oracle = mode_product(&d, 0, &bank.matrix(s)).unwrap();
            assert_eq!(segment_tensor(&d, &bank, s).unwrap(), oracle);
        }
    }

    #[test]
    fn spec_round_trip() {
        let bank = make_pyramid_bank(4, 4, 2, PyramidMode::Laplacian).unwrap();
        let json = serde_json::to_string(bank.spec()).unwrap();
        let back: BankSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(SegmentFilterBank::from_spec(&back, None).unwrap(), bank);
        let general = SegmentFilterBank::general(3, vec![Matrix::identity(3, 3)]).unwrap();
        assert!(general.is_partition());
        assert!(SegmentFilterBank::from_spec(general.spec(), None).is_err());
    }
}
