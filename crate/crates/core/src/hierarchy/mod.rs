//! Compositional hierarchical tensor factorization.
//!
//! The data tensor is modelled as a sum of segment factorizations
//!
//! ```text
//! D ≈ Σ_s Z_s ×_0 U_{0,s} ×_1 U_{1,s} … ×_C U_{C,s}
//! ```
//!
//! which is the block-diagonal-core factorization of the hierarchical data
//! tensor `D_H` written segment-wise. The block-diagonal core and the
//! composite mode matrices `U_cx = [U_{c,1} … U_{c,S}]` are never
//! materialized: all block algebra runs over the segment list.

mod als;
pub mod bank;

pub use als::{
    chtf_als, chtf_independent, chtf_init, chtf_overlapping, chtf_truncate,
    overlapping_extended_cores, ChtfOptions, OverlapReport, DENSE_CORE_SOLVE_LIMIT,
};
pub use bank::{
    make_pyramid_bank, make_segmentation_bank, segment_tensor, BankKind, BankSpec, Filter,
    PyramidMode, SegmentFilterBank,
};

use crate::decomposition::{ExtendedCore, TuckerModel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{frobenius_norm, matrixize, mode_product, multi_mode_product, DenseTensor, Matrix};

/// One segment's factorization. A segment whose rank reached zero on any
/// mode is inert: it has no core and zero-width mode matrices, but keeps
/// its slot so segment indices stay stable.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentModel {
    pub core: Option<DenseTensor>,
    pub mode_matrices: Vec<Matrix>,
}

impl SegmentModel {
    pub fn inert(dims: &[usize]) -> Self {
        Self {
            core: None,
            mode_matrices: dims.iter().map(|&n| Matrix::zeros(n, 0)).collect(),
        }
    }

    pub fn from_tucker(model: TuckerModel) -> Self {
        Self {
            core: Some(model.core),
            mode_matrices: model.mode_matrices,
        }
    }

    pub fn is_active(&self) -> bool {
        self.core.is_some()
    }

    pub fn ranks(&self) -> Vec<usize> {
        match &self.core {
            Some(c) => c.dims().to_vec(),
            None => vec![0; self.mode_matrices.len()],
        }
    }

    /// Per-mode spectrum `‖Z_{i_c = a}‖` (empty for inert segments).
    pub fn spectrum(&self, mode: usize) -> Vec<f64> {
        self.core.as_ref().map(|c| c.slab_norms(mode)).unwrap_or_default()
    }

    /// `Z_s ×_0 U_{0,s} … ×_C U_{C,s}`.
    pub fn reconstruct(&self) -> Result<Option<DenseTensor>> {
        match &self.core {
            None => Ok(None),
            Some(core) => {
                let refs: Vec<Option<&Matrix>> = self.mode_matrices.iter().map(Some).collect();
                multi_mode_product(core, &refs).map(Some)
            }
        }
    }

    /// `T_s = Z_s ×_0 U_{0,s}`.
    pub fn extended_core(&self) -> Result<Option<ExtendedCore>> {
        match &self.core {
            None => Ok(None),
            Some(core) => Ok(Some(ExtendedCore(mode_product(core, 0, &self.mode_matrices[0])?))),
        }
    }

    /// `(Z_s ×_{k≠c} U_{k,s})_[c]`: the segment's block of `W_cᵀ`, with
    /// `R_{c,s}` rows and one column per mode-c fiber of the data.
    pub fn partial_unfolding(&self, mode: usize) -> Result<Option<Matrix>> {
        match &self.core {
            None => Ok(None),
            Some(core) => {
                let refs: Vec<Option<&Matrix>> = self
                    .mode_matrices
                    .iter()
                    .enumerate()
                    .map(|(k, u)| (k != mode).then_some(u))
                    .collect();
                let y = multi_mode_product(core, &refs)?;
                matrixize(&y, mode).map(Some)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalModel {
    pub dims: Vec<usize>,
    pub segments: Vec<SegmentModel>,
    pub bank: SegmentFilterBank,
    pub mean: Option<Vec<f64>>,
}

impl HierarchicalModel {
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn active_segments(&self) -> impl Iterator<Item = (usize, &SegmentModel)> {
        self.segments.iter().enumerate().filter(|(_, s)| s.is_active())
    }

    pub fn segment_ranks(&self) -> Vec<Vec<usize>> {
        self.segments.iter().map(SegmentModel::ranks).collect()
    }

    /// Column offsets of every segment inside `U_cx`; the last entry is
    /// the composite width.
    pub fn offsets(&self, mode: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        let mut acc = 0;
        out.push(0);
        for s in &self.segments {
            acc += s.mode_matrices[mode].ncols();
            out.push(acc);
        }
        out
    }

    /// `U_cx = [U_{c,1} … U_{c,S}]`.
    pub fn composite_mode_matrix(&self, mode: usize) -> Result<Matrix> {
        let blocks: Vec<&Matrix> = self.segments.iter().map(|s| &s.mode_matrices[mode]).collect();
        linalg::hstack(&blocks)
    }

    /// Writes `U_cx` back into the segment blocks.
    pub fn set_composite_mode_matrix(&mut self, mode: usize, u: &Matrix) -> Result<()> {
        let offsets = self.offsets(mode);
        if u.ncols() != *offsets.last().expect("offsets nonempty") || u.nrows() != self.dims[mode] {
            return Err(Error::Shape("composite mode matrix has the wrong shape".into()));
        }
        for (s, seg) in self.segments.iter_mut().enumerate() {
            let w = offsets[s + 1] - offsets[s];
            seg.mode_matrices[mode] = u.columns(offsets[s], w).into_owned();
        }
        Ok(())
    }

    /// Largest `|U_{c,s}ᵀU_{c,s} − I|` entry, i.e. the violation of the
    /// orthonormality constraints carried by the loss.
    pub fn constraint_violation(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| s.mode_matrices.iter())
            .map(linalg::orthonormality_error)
            .fold(0.0, f64::max)
    }

    /// Data with the stored mean removed.
    pub fn centered(&self, d: &DenseTensor) -> Result<DenseTensor> {
        if d.dims() != self.dims.as_slice() {
            return Err(Error::Shape(format!("data {:?} vs model {:?}", d.dims(), self.dims)));
        }
        match &self.mean {
            Some(mean) => crate::decomposition::center(d, mean),
            None => Ok(d.clone()),
        }
    }
}

/// `Σ_s Z_s ×_0 U_{0,s} … ×_C U_{C,s}` plus the stored mean.
pub fn chtf_reconstruct(model: &HierarchicalModel) -> Result<DenseTensor> {
    let mut out = reconstruct_centered(model)?;
    if let Some(mean) = &model.mean {
        let i0 = mean.len();
        for col in out.data_mut().chunks_mut(i0) {
            for (v, m) in col.iter_mut().zip(mean) {
                *v += m;
            }
        }
    }
    Ok(out)
}

pub(crate) fn reconstruct_centered(model: &HierarchicalModel) -> Result<DenseTensor> {
    let mut out = DenseTensor::zeros(&model.dims)?;
    for (_, seg) in model.active_segments() {
        if let Some(r) = seg.reconstruct()? {
            out.add_assign(&r)?;
        }
    }
    Ok(out)
}

/// `½‖D − D̃‖²`.
pub fn chtf_loss(d: &DenseTensor, model: &HierarchicalModel) -> Result<f64> {
    let r = chtf_reconstruct(model)?;
    Ok(0.5 * frobenius_norm(&d.sub(&r)?).powi(2))
}

/// Stacked `W_cᵀ` over active segments, with rows grouped per segment.
pub(crate) fn stacked_w_t(model: &HierarchicalModel, mode: usize) -> Result<Matrix> {
    let blocks: Vec<Matrix> = model
        .segments
        .iter()
        .map(|s| s.partial_unfolding(mode))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    if blocks.is_empty() {
        return Ok(Matrix::zeros(0, 0));
    }
    let refs: Vec<&Matrix> = blocks.iter().collect();
    linalg::vstack(&refs)
}

/// Analytic gradient of the loss with respect to `U_cx`:
/// `−D_[c] W_c + U_cx W_cᵀ W_c`.
pub fn mode_gradient(d: &DenseTensor, model: &HierarchicalModel, mode: usize) -> Result<Matrix> {
    if mode >= model.order() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: model.order(),
        });
    }
    let dc = matrixize(&model.centered(d)?, mode)?;
    let wt = stacked_w_t(model, mode)?;
    let u = model.composite_mode_matrix(mode)?;
    if wt.nrows() == 0 {
        return Ok(Matrix::zeros(u.nrows(), 0));
    }
    let w = wt.transpose();
    Ok(-(&dc * &w) + &u * (&wt * &w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{rand_tensor, rng};

    #[test]
    fn zero_model_reconstructs_zero_and_loss_is_half_energy() {
        let mut r = rng(61);
        let d = rand_tensor(&mut r, &[4, 3, 2]);
        let model = HierarchicalModel {
            dims: d.dims().to_vec(),
            segments: vec![SegmentModel::inert(d.dims())],
            bank: SegmentFilterBank::identity(4),
            mean: None,
        };
        assert!(chtf_reconstruct(&model).unwrap().data().iter().all(|v| *v == 0.0));
        let e = chtf_loss(&d, &model).unwrap();
        assert!((e - 0.5 * frobenius_norm(&d).powi(2)).abs() < 1e-12);
    }
}
