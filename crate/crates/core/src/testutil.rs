use crate::random::{self, Rng};
use crate::tensor::{DenseTensor, Matrix};

pub fn rng(seed: u64) -> Rng {
    random::seeded(seed)
}

pub fn rand_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
    random::gaussian_matrix(rng, rows, cols)
}

pub fn rand_tensor(rng: &mut Rng, dims: &[usize]) -> DenseTensor {
    random::gaussian_tensor(rng, dims)
}

pub fn rand_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    random::gaussian_vec(rng, n)
}

pub fn rel_err(a: &DenseTensor, b: &DenseTensor) -> f64 {
    let d = a.sub(b).unwrap();
    crate::tensor::frobenius_norm(&d) / crate::tensor::frobenius_norm(b).max(f64::MIN_POSITIVE)
}
