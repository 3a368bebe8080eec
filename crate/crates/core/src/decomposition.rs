//! Global factorizations: M-mode SVD (Tucker), truncation, Tucker ALS,
//! rank-1 approximation and the PCA baseline.

use nalgebra::{DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, fix_signs};
use crate::tensor::{
    frobenius_norm, matrixize, mode_product, multi_mode_product, multi_mode_product_t, DenseTensor,
    Matrix,
};

/// Version tag of the column sign convention stored in model archives.
pub const SIGN_CONVENTION_VERSION: u32 = 1;

/// Tucker model `D ≈ Z ×_0 U_0 ×_1 U_1 … ×_C U_C (+ mean along mode 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerModel {
    pub core: DenseTensor,
    pub mode_matrices: Vec<Matrix>,
    /// Measurement-mode mean subtracted before factorization.
    pub mean: Option<Vec<f64>>,
}

/// Extended core `T = Z ×_0 U_0`, the basis observations are projected on.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedCore(pub DenseTensor);

impl ExtendedCore {
    pub fn tensor(&self) -> &DenseTensor {
        &self.0
    }

    pub fn measurement_dim(&self) -> usize {
        self.0.dims()[0]
    }
}

/// Measured deviations from the Tucker structural invariants.
#[derive(Debug, Clone, Copy)]
pub struct TuckerInvariants {
    /// Largest `|UᵀU − I|` entry over all modes.
    pub orthonormality: f64,
    /// Whether every mode's slab norms are non-increasing.
    pub slab_order: bool,
    /// Largest `|⟨Z_{i_m=a}, Z_{i_m=b}⟩| / ‖Z‖²` over modes and `a ≠ b`.
    pub all_orthogonality: f64,
}

impl TuckerModel {
    pub fn order(&self) -> usize {
        self.mode_matrices.len()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.core.dims().to_vec()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.mode_matrices.iter().map(Matrix::nrows).collect()
    }

    /// `σ_a^(m) = ‖Z_{i_m = a}‖`.
    pub fn mode_singular_values(&self, mode: usize) -> Vec<f64> {
        self.core.slab_norms(mode)
    }

    pub fn extended_core(&self) -> Result<ExtendedCore> {
        Ok(ExtendedCore(mode_product(&self.core, 0, &self.mode_matrices[0])?))
    }

    pub fn invariants(&self) -> TuckerInvariants {
        let orthonormality = self
            .mode_matrices
            .iter()
            .map(linalg::orthonormality_error)
            .fold(0.0, f64::max);
        let total = frobenius_norm(&self.core).powi(2);
        let mut slab_order = true;
        let mut all_orth: f64 = 0.0;
        for m in 0..self.order() {
            let norms = self.core.slab_norms(m);
            let slack = 1e-12 * total.sqrt();
            if norms.windows(2).any(|w| w[1] > w[0] + slack) {
                slab_order = false;
            }
            let zm = matrixize(&self.core, m).expect("mode in range");
            let g = &zm * zm.transpose();
            for j in 0..g.ncols() {
                for i in 0..j {
                    all_orth = all_orth.max(g[(i, j)].abs());
                }
            }
        }
        TuckerInvariants {
            orthonormality,
            slab_order,
            all_orthogonality: if total > 0.0 { all_orth / total } else { 0.0 },
        }
    }
}

/// Per-iteration loss `½‖D − D̃‖²`, starting with the initialization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    pub values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Mode steps that were undone because they raised the loss. Near
    /// convergence this mostly counts rises at roundoff level.
    pub rejected_steps: usize,
}

impl LossTrace {
    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// True when no step increases the loss by more than `slack`.
    pub fn is_non_increasing(&self, slack: f64) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

fn mode_svds(d: &DenseTensor) -> Result<Vec<linalg::LeftSvd>> {
    // Per-mode SVDs are independent; collect preserves mode order.
    (0..d.order())
        .into_par_iter()
        .map(|m| {
            let x = matrixize(d, m)?;
            linalg::left_singular(&x).map_err(|_| Error::SvdFailed { mode: m })
        })
        .collect()
}

/// M-mode SVD: every `U_m` holds the left singular vectors of `D_[m]`, and
/// `Z = D ×_0 U_0ᵀ … ×_C U_Cᵀ`. Ranks are `min(I_m, Π_{n≠m} I_n)`, so the
/// reconstruction is exact.
pub fn m_mode_svd(d: &DenseTensor) -> Result<TuckerModel> {
    let svds = mode_svds(d)?;
    let mats: Vec<Matrix> = svds.into_iter().map(|s| s.u).collect();
    let refs: Vec<Option<&Matrix>> = mats.iter().map(Some).collect();
    let core = multi_mode_product_t(d, &refs)?;
    Ok(TuckerModel {
        core,
        mode_matrices: mats,
        mean: None,
    })
}

/// Mean of the mode-0 fibers (columns of `D_[0]`).
pub fn measurement_mean(d: &DenseTensor) -> Vec<f64> {
    let x = matrixize(d, 0).expect("mode 0 exists");
    let n = x.ncols().max(1) as f64;
    x.column_sum().iter().map(|v| v / n).collect()
}

/// Subtracts `mean` from every mode-0 fiber.
pub fn center(d: &DenseTensor, mean: &[f64]) -> Result<DenseTensor> {
    let i0 = d.dims()[0];
    if mean.len() != i0 {
        return Err(Error::Shape(format!("mean length {} vs I_0 {}", mean.len(), i0)));
    }
    let mut out = d.clone();
    for col in out.data_mut().chunks_mut(i0) {
        for (v, m) in col.iter_mut().zip(mean) {
            *v -= m;
        }
    }
    Ok(out)
}

fn add_mean(t: &mut DenseTensor, mean: &[f64]) {
    let i0 = mean.len();
    for col in t.data_mut().chunks_mut(i0) {
        for (v, m) in col.iter_mut().zip(mean) {
            *v += m;
        }
    }
}

/// M-mode SVD of the data after subtracting the measurement-mode mean.
pub fn m_mode_svd_centered(d: &DenseTensor) -> Result<TuckerModel> {
    let mean = measurement_mean(d);
    let mut model = m_mode_svd(&center(d, &mean)?)?;
    model.mean = Some(mean);
    Ok(model)
}

/// Numerical multilinear rank of a full M-mode SVD model: per mode, the
/// number of singular values above the pseudo-inverse cutoff (at least 1).
pub fn numerical_ranks(model: &TuckerModel) -> Vec<usize> {
    let dims = model.dims();
    let total: usize = dims.iter().product();
    (0..model.order())
        .map(|m| {
            let sv = model.mode_singular_values(m);
            let smax = sv.first().copied().unwrap_or(0.0);
            let cut = linalg::pinv_cutoff(dims[m], total / dims[m].max(1), smax);
            sv.iter().filter(|&&s| s > cut && s > 0.0).count().max(1)
        })
        .collect()
}

/// Keeps the leading `ranks[m]` columns per mode and the matching core
/// block, then rotates each kept subspace so the core is again
/// all-orthogonal with ordered slabs. The reconstruction is unaffected by
/// the rotation.
pub fn truncate(model: &TuckerModel, ranks: &[usize]) -> Result<TuckerModel> {
    let full = model.ranks();
    if ranks.len() != full.len() {
        return Err(Error::Shape(format!(
            "{} ranks for an order-{} model",
            ranks.len(),
            full.len()
        )));
    }
    for (m, (&r, &max)) in ranks.iter().zip(&full).enumerate() {
        if r == 0 || r > max {
            return Err(Error::RankOutOfRange { mode: m, rank: r, max });
        }
    }
    if ranks == full.as_slice() {
        return Ok(model.clone());
    }
    let core = model.core.leading(ranks)?;
    let mode_matrices = model
        .mode_matrices
        .iter()
        .zip(ranks)
        .map(|(u, &r)| u.columns(0, r).into_owned())
        .collect();
    canonicalize(TuckerModel {
        core,
        mode_matrices,
        mean: model.mean.clone(),
    })
}

/// Rotates every mode subspace by the eigenvectors of `Z_[m] Z_[m]ᵀ` so
/// the core becomes all-orthogonal with descending slab norms, then applies
/// the sign convention. Mode rotations act on disjoint core modes and leave
/// the other modes' Gram matrices unchanged, so one pass suffices.
pub fn canonicalize(mut model: TuckerModel) -> Result<TuckerModel> {
    for m in 0..model.order() {
        let zm = matrixize(&model.core, m)?;
        let g = &zm * zm.transpose();
        let eig = SymmetricEigen::new(g);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut q = Matrix::zeros(order.len(), order.len());
        for (dst, &src) in order.iter().enumerate() {
            q.set_column(dst, &eig.eigenvectors.column(src));
        }
        let mut u = &model.mode_matrices[m] * &q;
        let signs = fix_signs(&mut u);
        let mut core = mode_product(&model.core, m, &q.transpose())?;
        core.flip_slabs(m, &signs);
        model.core = core;
        model.mode_matrices[m] = u;
    }
    Ok(model)
}

/// `Z ×_0 U_0 … ×_C U_C`, plus the stored mean.
pub fn reconstruct(model: &TuckerModel) -> Result<DenseTensor> {
    let refs: Vec<Option<&Matrix>> = model.mode_matrices.iter().map(Some).collect();
    let mut out = multi_mode_product(&model.core, &refs)?;
    if let Some(mean) = &model.mean {
        add_mean(&mut out, mean);
    }
    Ok(out)
}

/// `½‖D − reconstruct(model)‖²`.
pub fn tucker_loss(d: &DenseTensor, model: &TuckerModel) -> Result<f64> {
    let r = reconstruct(model)?;
    Ok(0.5 * frobenius_norm(&d.sub(&r)?).powi(2))
}

#[derive(Debug, Clone)]
pub struct AlsOptions {
    pub max_iters: usize,
    /// Absolute tolerance on `e_{n−1} − e_n`. `None` uses `1e-6 · ‖D‖²`.
    pub tol: Option<f64>,
}

impl Default for AlsOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: None,
        }
    }
}

impl AlsOptions {
    pub(crate) fn resolve_tol(&self, d: &DenseTensor) -> Result<f64> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        match self.tol {
            Some(t) if t > 0.0 && t.is_finite() => Ok(t),
            Some(t) => Err(Error::InvalidArgument(format!("tolerance must be positive, got {t}"))),
            None => Ok((1e-6 * frobenius_norm(d).powi(2)).max(f64::MIN_POSITIVE)),
        }
    }
}

/// Best rank-`ranks` Tucker approximation by alternating least squares,
/// initialized with the truncated M-mode SVD. Each mode update takes the
/// leading left singular vectors of `(D ×_{n≠m} U_nᵀ)_[m]`.
pub fn tucker_als(
    d: &DenseTensor,
    ranks: &[usize],
    opts: &AlsOptions,
) -> Result<(TuckerModel, LossTrace)> {
    let tol = opts.resolve_tol(d)?;
    let full = m_mode_svd(d)?;
    let mut model = truncate(&full, ranks)?;
    // A mode-m unfolding of a rank-`ranks` core has `Π_{n≠m} r_n` columns,
    // which bounds the attainable rank of mode m.
    for (m, &r) in ranks.iter().enumerate() {
        let max: usize = ranks.iter().enumerate().filter(|&(n, _)| n != m).map(|(_, &k)| k).product();
        if r > max {
            return Err(Error::RankOutOfRange { mode: m, rank: r, max });
        }
    }
    let mut trace = LossTrace {
        values: vec![tucker_loss(d, &model)?],
        ..Default::default()
    };
    let order = d.order();
    for _ in 0..opts.max_iters {
        for m in 0..order {
            let mats: Vec<Option<&Matrix>> = model
                .mode_matrices
                .iter()
                .enumerate()
                .map(|(n, u)| (n != m).then_some(u))
                .collect();
            let y = multi_mode_product_t(d, &mats)?;
            let ym = matrixize(&y, m)?;
            let u = linalg::leading_left(&ym, ranks[m]).map_err(|_| Error::SvdFailed { mode: m })?;
            if u.ncols() < ranks[m] {
                return Err(Error::Numeric(format!("mode {m} lost rank during ALS")));
            }
            model.mode_matrices[m] = u;
        }
        let refs: Vec<Option<&Matrix>> = model.mode_matrices.iter().map(Some).collect();
        model.core = multi_mode_product_t(d, &refs)?;
        let e = tucker_loss(d, &model)?;
        if !e.is_finite() {
            return Err(Error::Numeric("non-finite loss in Tucker ALS".into()));
        }
        let prev = *trace.values.last().expect("initial loss");
        trace.values.push(e);
        trace.iterations += 1;
        if prev - e <= tol {
            trace.converged = true;
            break;
        }
    }
    Ok((canonicalize(model)?, trace))
}

/// Best rank-1 factors `scale · (v_0 ∘ … ∘ v_M)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Factors {
    pub vectors: Vec<Vec<f64>>,
    pub scale: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set for an all-zero input; vectors are then the first basis vectors.
    pub degenerate: bool,
}

impl Rank1Factors {
    pub fn to_tensor(&self) -> Result<DenseTensor> {
        let refs: Vec<&[f64]> = self.vectors.iter().map(Vec::as_slice).collect();
        Ok(crate::tensor::outer(&refs)?.scale(self.scale))
    }
}

/// Contracts `t` with `vecs[k]` along every mode except `keep`.
fn contract_except(t: &DenseTensor, vecs: &[Vec<f64>], keep: usize) -> Result<Vec<f64>> {
    let rows: Vec<Option<Matrix>> = vecs
        .iter()
        .enumerate()
        .map(|(k, v)| (k != keep).then(|| Matrix::from_row_slice(1, v.len(), v)))
        .collect();
    let refs: Vec<Option<&Matrix>> = rows.iter().map(Option::as_ref).collect();
    Ok(multi_mode_product(t, &refs)?.into_data())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rank-1 approximation by alternating updates
/// `v_m ← normalize(t contracted with all other v_k)`, initialized from the
/// leading left singular vector of each matrixization. The scale is made
/// nonnegative; the first `M − 1` vectors follow the column sign
/// convention and the last vector absorbs the remaining sign.
pub fn rank_one_approx(t: &DenseTensor, max_iters: usize, tol: f64) -> Result<Rank1Factors> {
    if t.order() < 2 {
        return Err(Error::InvalidArgument("rank-1 approximation needs order >= 2".into()));
    }
    if max_iters == 0 || !(tol > 0.0) {
        return Err(Error::InvalidArgument("need max_iters >= 1 and tol > 0".into()));
    }
    let total = frobenius_norm(t).powi(2);
    let basis = |n: usize| {
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        v
    };
    if total == 0.0 {
        return Ok(Rank1Factors {
            vectors: t.dims().iter().map(|&n| basis(n)).collect(),
            scale: 0.0,
            iterations: 0,
            converged: true,
            degenerate: true,
        });
    }
    let mut vecs = Vec::with_capacity(t.order());
    for m in 0..t.order() {
        let x = matrixize(t, m)?;
        let u = linalg::leading_left(&x, 1).map_err(|_| Error::SvdFailed { mode: m })?;
        vecs.push(u.column(0).iter().copied().collect::<Vec<f64>>());
    }
    let last = t.order() - 1;
    let mut resid = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    let mut scale = 0.0;
    for _ in 0..max_iters {
        iterations += 1;
        for m in 0..t.order() {
            let w = contract_except(t, &vecs, m)?;
            let n = norm(&w);
            if n == 0.0 {
                // Current factors are orthogonal to t; fall back to the basis.
                vecs[m] = basis(w.len());
                continue;
            }
            vecs[m] = w.into_iter().map(|x| x / n).collect();
            if m == last {
                scale = n;
            }
        }
        let r = (total - scale * scale).max(0.0);
        let done = resid - r <= tol;
        resid = r;
        if done {
            converged = true;
            break;
        }
    }
    let mut flips = 1.0;
    for v in vecs.iter_mut().take(last) {
        let mut m = Matrix::from_column_slice(v.len(), 1, v);
        flips *= fix_signs(&mut m)[0];
        v.copy_from_slice(m.as_slice());
    }
    if flips < 0.0 {
        vecs[last].iter_mut().for_each(|x| *x = -*x);
    }
    let w = contract_except(t, &vecs, last)?;
    let mut s: f64 = w.iter().zip(&vecs[last]).map(|(a, b)| a * b).sum();
    if s < 0.0 {
        vecs[last].iter_mut().for_each(|x| *x = -*x);
        s = -s;
    }
    Ok(Rank1Factors {
        vectors: vecs,
        scale: s,
        iterations,
        converged,
        degenerate: false,
    })
}

/// Mean-centered truncated-SVD basis of a set of observations (columns).
#[derive(Debug, Clone)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    pub basis: Matrix,
    pub singular_values: Vec<f64>,
    pub coefficients: Matrix,
}

impl PcaModel {
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::Shape(format!(
                "observation length {} vs {}",
                x.len(),
                self.mean.len()
            )));
        }
        let c = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
        Ok((self.basis.transpose() * c).iter().copied().collect())
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut out = &self.basis * &self.coefficients;
        for mut col in out.column_iter_mut() {
            for (v, m) in col.iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        out
    }
}

pub fn pca_baseline(observations: &Matrix, rank: usize) -> Result<PcaModel> {
    let (rows, cols) = observations.shape();
    let max = rows.min(cols);
    if rank == 0 || rank > max {
        return Err(Error::RankOutOfRange { mode: 0, rank, max });
    }
    let n = cols as f64;
    let mean: Vec<f64> = observations.column_sum().iter().map(|v| v / n).collect();
    let mut centered = observations.clone();
    for mut col in centered.column_iter_mut() {
        for (v, m) in col.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let svd = linalg::left_singular(&centered)?;
    let basis = svd.u.columns(0, rank).into_owned();
    let coefficients = basis.transpose() * &centered;
    Ok(PcaModel {
        mean,
        basis,
        singular_values: svd.sigma,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use crate::testutil::{rand_matrix, rand_tensor, rel_err, rng};

    #[test]
    fn superdiagonal_is_its_own_decomposition() {
        let mut d = DenseTensor::zeros(&[3, 3]).unwrap();
        for (i, v) in [3.0, 2.0, 1.0].iter().enumerate() {
            d.set(&[i, i], *v);
        }
        let m = m_mode_svd(&d).unwrap();
        for u in &m.mode_matrices {
            assert!((u.abs() - Matrix::identity(3, 3)).abs().max() < 1e-12);
        }
        assert!((m.core.data().iter().zip(d.data()).map(|(a, b)| (a.abs() - b).abs()).fold(0.0, f64::max)) < 1e-12);
    }

    #[test]
    fn mode_matrices_match_independent_eigen_oracle() {
        let mut r = rng(31);
        let d = rand_tensor(&mut r, &[3, 4, 5]);
        let m = m_mode_svd(&d).unwrap();
        for mode in 0..3 {
            // oracle: eigenvectors of D_[m] D_[m]ᵀ, largest first
            let x = matrixize(&d, mode).unwrap();
            let eig = SymmetricEigen::new(&x * x.transpose());
            let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
            for (k, &i) in idx.iter().enumerate().take(m.mode_matrices[mode].ncols()) {
                let v = eig.eigenvectors.column(i);
                let u = m.mode_matrices[mode].column(k);
                assert!((u.dot(&v).abs() - 1.0).abs() < 1e-9, "mode {mode} col {k}");
                assert!((m.mode_singular_values(mode)[k] - eig.eigenvalues[i].sqrt()).abs() < 1e-9);
            }
        }
        let inv = m.invariants();
        assert!(inv.orthonormality < 1e-10 && inv.slab_order && inv.all_orthogonality < 1e-8);
    }

    #[test]
    fn zero_tensor_decomposes_to_zero_core() {
        let d = DenseTensor::zeros(&[2, 3, 2]).unwrap();
        let m = m_mode_svd(&d).unwrap();
        assert!(m.core.data().iter().all(|v| *v == 0.0));
        assert!(m.invariants().orthonormality < 1e-12);
        assert!(reconstruct(&m).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn full_rank_exactness_and_centered_variant() {
        let mut r = rng(32);
        let d = rand_tensor(&mut r, &[6, 5, 4, 3]);
        let m = m_mode_svd(&d).unwrap();
        assert!(rel_err(&reconstruct(&m).unwrap(), &d) <= 1e-10);
        let c = m_mode_svd_centered(&d).unwrap();
        assert!(rel_err(&reconstruct(&c).unwrap(), &d) <= 1e-10);
    }

    #[test]
    fn truncate_full_is_identity_and_checks_range() {
        let mut r = rng(33);
        let d = rand_tensor(&mut r, &[3, 3, 3]);
        let m = m_mode_svd(&d).unwrap();
        assert_eq!(truncate(&m, &m.ranks()).unwrap(), m);
        assert!(matches!(truncate(&m, &[4, 3, 3]), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(truncate(&m, &[0, 3, 3]), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn rank_one_truncation_is_exact_for_rank_one_tensor() {
        let mut r = rng(34);
        let a = random::unit_vec(&mut r, 3);
        let b = random::unit_vec(&mut r, 4);
        let c = random::unit_vec(&mut r, 2);
        let d = crate::tensor::outer(&[&a, &b, &c]).unwrap().scale(1.7);
        let m = truncate(&m_mode_svd(&d).unwrap(), &[1, 1, 1]).unwrap();
        assert!(rel_err(&reconstruct(&m).unwrap(), &d) <= 1e-12);
    }

    #[test]
    fn truncation_error_equals_discarded_core_energy() {
        let mut r = rng(35);
        let d = rand_tensor(&mut r, &[4, 4, 4]);
        let full = m_mode_svd(&d).unwrap();
        let kept = full.core.leading(&[2, 2, 2]).unwrap();
        let discarded = frobenius_norm(&full.core).powi(2) - frobenius_norm(&kept).powi(2);
        let t = truncate(&full, &[2, 2, 2]).unwrap();
        let err = frobenius_norm(&d.sub(&reconstruct(&t).unwrap()).unwrap());
        assert!((err - discarded.sqrt()).abs() <= 1e-10);
        let inv = t.invariants();
        assert!(inv.orthonormality < 1e-10 && inv.slab_order && inv.all_orthogonality < 1e-8);
    }

    #[test]
    fn truncated_reconstruction_matches_loop_oracle() {
        let mut r = rng(36);
        let d = rand_tensor(&mut r, &[3, 4, 3]);
        let t = truncate(&m_mode_svd(&d).unwrap(), &[2, 2, 2]).unwrap();
        let oracle = DenseTensor::from_fn(&[3, 4, 3], |i| {
            let mut s = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    for c in 0..2 {
                        s += t.core.get(&[a, b, c])
                            * t.mode_matrices[0][(i[0], a)]
                            * t.mode_matrices[1][(i[1], b)]
                            * t.mode_matrices[2][(i[2], c)];
                    }
                }
            }
            s
        })
        .unwrap();
        assert!(rel_err(&reconstruct(&t).unwrap(), &oracle) < 1e-12);
    }

    fn planted(r: &mut random::Rng, dims: &[usize], ranks: &[usize]) -> DenseTensor {
        let core = rand_tensor(r, ranks);
        let mats: Vec<Matrix> = dims
            .iter()
            .zip(ranks)
            .map(|(&d, &k)| random::orthonormal_matrix(r, d, k))
            .collect();
        let refs: Vec<Option<&Matrix>> = mats.iter().map(Some).collect();
        multi_mode_product(&core, &refs).unwrap()
    }

    #[test]
    fn tucker_als_recovers_exact_multilinear_rank() {
        let mut r = rng(37);
        let d = planted(&mut r, &[5, 6, 4], &[2, 2, 2]);
        let (m, trace) = tucker_als(&d, &[2, 2, 2], &AlsOptions::default()).unwrap();
        assert!(rel_err(&reconstruct(&m).unwrap(), &d) <= 1e-9);
        assert!(trace.is_non_increasing(1e-9));
    }

    #[test]
    fn tucker_als_full_rank_matches_m_mode_svd() {
        let mut r = rng(38);
        let d = rand_tensor(&mut r, &[3, 4, 2]);
        let full = m_mode_svd(&d).unwrap();
        let (m, _) = tucker_als(&d, &full.ranks(), &AlsOptions::default()).unwrap();
        let a = reconstruct(&m).unwrap();
        let b = reconstruct(&full).unwrap();
        assert!(frobenius_norm(&a.sub(&b).unwrap()) <= 1e-9 * frobenius_norm(&d));
    }

    #[test]
    fn tucker_als_improves_on_its_initialization() {
        let mut r = rng(39);
        let d = rand_tensor(&mut r, &[5, 5, 5]);
        let init = truncate(&m_mode_svd(&d).unwrap(), &[2, 2, 2]).unwrap();
        let e0 = tucker_loss(&d, &init).unwrap();
        let opts = AlsOptions { max_iters: 50, tol: Some(1e-14) };
        let (m, trace) = tucker_als(&d, &[2, 2, 2], &opts).unwrap();
        assert!(tucker_loss(&d, &m).unwrap() <= e0 + 1e-12);
        assert!(trace.is_non_increasing(1e-9));
        assert!((trace.values[0] - e0).abs() < 1e-12);
        let inv = m.invariants();
        assert!(inv.orthonormality < 1e-10 && inv.slab_order);
    }

    #[test]
    fn tucker_als_rejects_bad_options() {
        let d = DenseTensor::zeros(&[2, 2]).unwrap();
        assert!(tucker_als(&d, &[1, 1], &AlsOptions { max_iters: 0, tol: None }).is_err());
        assert!(tucker_als(&d, &[1, 1], &AlsOptions { max_iters: 5, tol: Some(-1.0) }).is_err());
        assert!(tucker_als(&d, &[3, 1], &AlsOptions::default()).is_err());
        // Rank 3 in mode 0 needs at least 3 columns in the core unfolding.
        let mut r = rng(41);
        let d = rand_tensor(&mut r, &[4, 4, 4]);
        assert!(matches!(
            tucker_als(&d, &[3, 1, 2], &AlsOptions::default()),
            Err(Error::RankOutOfRange { mode: 0, rank: 3, max: 2 })
        ));
        assert!(tucker_als(&d, &[2, 1, 2], &AlsOptions::default()).is_ok());
    }

    #[test]
    fn rank_one_exact_recovery() {
        let mut r = rng(40);
        let a = random::unit_vec(&mut r, 4);
        let b = random::unit_vec(&mut r, 3);
        let c = random::unit_vec(&mut r, 5);
        let t = crate::tensor::outer(&[&a, &b, &c]).unwrap().scale(2.5);
        let f = rank_one_approx(&t, 100, 1e-14).unwrap();
        assert!((f.scale - 2.5).abs() <= 2.5e-9);
        for (v, w) in f.vectors.iter().zip([&a, &b, &c]) {
            let cos: f64 = v.iter().zip(w.iter()).map(|(x, y)| x * y).sum();
            assert!(cos.abs() >= 1.0 - 1e-9);
            assert!((norm(v) - 1.0).abs() < 1e-12);
        }
        assert!(rel_err(&f.to_tensor().unwrap(), &t) <= 1e-9);
    }

    #[test]
    fn rank_one_of_matrix_is_dominant_singular_triplet() {
        let mut r = rng(41);
        let a = rand_matrix(&mut r, 5, 4);
        let f = rank_one_approx(&DenseTensor::from_matrix(&a), 500, 1e-15).unwrap();
        let svd = nalgebra::SVD::new(a.clone(), true, true);
        let (i, smax) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
        assert!((f.scale - smax).abs() <= 1e-8 * smax);
        let u = svd.u.unwrap().column(i).into_owned();
        let cos: f64 = u.iter().zip(&f.vectors[0]).map(|(x, y)| x * y).sum();
        assert!(cos.abs() > 1.0 - 1e-8);
    }

    #[test]
    fn rank_one_residual_bounded_by_second_component() {
        let mut r = rng(42);
        let q: Vec<Matrix> = [4, 3, 5].iter().map(|&n| random::orthonormal_matrix(&mut r, n, 2)).collect();
        let col = |m: &Matrix, k: usize| m.column(k).iter().copied().collect::<Vec<f64>>();
        let t1 = crate::tensor::outer(&[&col(&q[0], 0), &col(&q[1], 0), &col(&q[2], 0)]).unwrap().scale(5.0);
        let t2 = crate::tensor::outer(&[&col(&q[0], 1), &col(&q[1], 1), &col(&q[2], 1)]).unwrap().scale(1.0);
        let t = t1.add(&t2).unwrap();
        let f = rank_one_approx(&t, 200, 1e-14).unwrap();
        let resid = frobenius_norm(&t.sub(&f.to_tensor().unwrap()).unwrap()).powi(2);
        assert!(resid <= 1.0 + 1e-6, "residual {resid}");
    }

    #[test]
    fn rank_one_zero_and_invalid_inputs() {
        let f = rank_one_approx(&DenseTensor::zeros(&[2, 3]).unwrap(), 10, 1e-10).unwrap();
        assert!(f.degenerate && f.scale == 0.0);
        assert_eq!(f.vectors[1], vec![1.0, 0.0, 0.0]);
        assert!(rank_one_approx(&DenseTensor::zeros(&[3]).unwrap(), 10, 1e-10).is_err());
    }

    #[test]
    fn pca_cases() {
        let mut r = rng(43);
        let x = rand_matrix(&mut r, 10, 30);
        let full = pca_baseline(&x, 10).unwrap();
        assert!((full.reconstruct() - &x).abs().max() <= 1e-10);
        let p = pca_baseline(&x, 3).unwrap();
        let resid = (p.reconstruct() - &x).norm_squared();
        let discarded: f64 = p.singular_values[3..].iter().map(|s| s * s).sum();
        assert!((resid - discarded).abs() <= 1e-10 * (1.0 + discarded));
        // affine 2-D subspace
        let basis = rand_matrix(&mut r, 6, 2);
        let coef = rand_matrix(&mut r, 2, 12);
        let mut y = basis * coef;
        for mut c in y.column_iter_mut() {
            c.add_scalar_mut(3.0);
        }
        let p2 = pca_baseline(&y, 2).unwrap();
        assert!((p2.reconstruct() - &y).norm() <= 1e-10);
        assert!(pca_baseline(&y, 7).is_err());
        let proj = p2.project(y.column(0).as_slice()).unwrap();
        assert!((proj[0] - p2.coefficients[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn representation_reproduces_training_fibers() {
        let mut r = rng(44);
        let d = rand_tensor(&mut r, &[8, 3, 2, 2]);
        let m = m_mode_svd(&d).unwrap();
        let t = m.extended_core().unwrap();
        for p in 0..3 {
            for v in 0..2 {
                for l in 0..2 {
                    let rows: Vec<Option<Matrix>> = vec![
                        None,
                        Some(m.mode_matrices[1].rows(p, 1).into_owned()),
                        Some(m.mode_matrices[2].rows(v, 1).into_owned()),
                        Some(m.mode_matrices[3].rows(l, 1).into_owned()),
                    ];
                    let refs: Vec<Option<&Matrix>> = rows.iter().map(Option::as_ref).collect();
                    let img = multi_mode_product(t.tensor(), &refs).unwrap();
                    let col: Vec<f64> = (0..8).map(|i| d.get(&[i, p, v, l])).collect();
                    let err: f64 = img.data().iter().zip(&col).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    assert!(err <= 1e-9 * norm(&col));
                }
            }
        }
    }

    #[test]
    fn parallel_mode_svds_equal_sequential() {
        let mut r = rng(45);
        let d = rand_tensor(&mut r, &[4, 5, 3]);
        let par = m_mode_svd(&d).unwrap();
        for m in 0..3 {
            let seq = linalg::left_singular(&matrixize(&d, m).unwrap()).unwrap();
            assert_eq!(seq.u, par.mode_matrices[m]);
        }
    }
}
