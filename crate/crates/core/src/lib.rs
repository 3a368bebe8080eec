//! Multilinear tensor factorization: Tucker / M-mode SVD, compositional
//! hierarchical (wholes-and-parts) factorization by block-structured
//! alternating least squares, and a multilinear-projection recognition
//! pipeline.

pub mod bench;
pub mod decomposition;
pub mod error;
pub mod hierarchy;
pub mod io;
pub mod linalg;
pub mod random;
pub mod recognition;
pub mod synth;
pub mod tensor;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use tensor::{DenseTensor, Matrix};
