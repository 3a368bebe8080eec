//! Seeded random generators for synthetic data and tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg;
use crate::tensor::{DenseTensor, Matrix};

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, gaussian_vec(rng, rows * cols))
}

pub fn gaussian_tensor(rng: &mut Rng, dims: &[usize]) -> DenseTensor {
    let n = dims.iter().product();
    DenseTensor::new(dims.to_vec(), gaussian_vec(rng, n)).expect("valid dims")
}

pub fn unit_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    let v = gaussian_vec(rng, n);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Random `rows × cols` matrix with orthonormal columns (`cols ≤ rows`).
pub fn orthonormal_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    assert!(cols <= rows, "need cols <= rows");
    let g = gaussian_matrix(rng, rows, cols);
    linalg::leading_left(&g, cols).expect("svd of gaussian matrix")
}
