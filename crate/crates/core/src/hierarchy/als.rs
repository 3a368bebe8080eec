use rayon::prelude::*;

use super::bank::{segment_tensor, Filter, SegmentFilterBank};
use super::{reconstruct_centered, stacked_w_t, HierarchicalModel, SegmentModel};
use crate::decomposition::{
    canonicalize, center, m_mode_svd, measurement_mean, numerical_ranks, AlsOptions, LossTrace, TuckerModel,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{
    frobenius_norm, kronecker_chain, matrixize, multi_mode_product, multi_mode_product_t,
    unmatrixize, DenseTensor, Matrix,
};

/// Largest joint core size solved through a dense pseudo-inverse of the
/// normal equations; bigger systems use conjugate gradients.
pub const DENSE_CORE_SOLVE_LIMIT: usize = 400;

/// Cross-segment Gram blocks with every entry at or below this magnitude
/// are treated as exactly zero.
const CROSS_TERM_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct ChtfOptions {
    pub max_iters: usize,
    /// Absolute tolerance on `e_{n−1} − e_n`; `None` uses `1e-6 · ‖D‖²`.
    pub tol: Option<f64>,
    /// Subtract the measurement-mode mean before factorizing.
    pub center: bool,
}

impl Default for ChtfOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: None,
            center: false,
        }
    }
}

/// Decomposes every segment `D_s = D ×_0 H_s` with the M-mode SVD, keeping
/// each mode's numerical rank. All-zero segments become inert. Selector
/// segments keep their measurement basis exactly inside the support.
pub fn chtf_init(d: &DenseTensor, bank: &SegmentFilterBank, center_data: bool) -> Result<HierarchicalModel> {
    if d.dims()[0] != bank.dim() {
        return Err(Error::Shape(format!(
            "measurement extent {} vs bank dim {}",
            d.dims()[0],
            bank.dim()
        )));
    }
    let mean = center_data.then(|| measurement_mean(d));
    let dc = match &mean {
        Some(m) => center(d, m)?,
        None => d.clone(),
    };
    let segments = (0..bank.len())
        .into_par_iter()
        .map(|s| {
            // Selector segments are decomposed on their own rows: padding
            // with zero rows lets SVD roundoff leak basis vectors outside
            // the support and inflate the numerical rank.
            let (ds, rows) = match &bank.filters()[s] {
                Filter::Selector(idx) => (dc.select(0, idx)?, Some(idx)),
                Filter::Dense(_) => (segment_tensor(&dc, bank, s)?, None),
            };
            if frobenius_norm(&ds) == 0.0 {
                return Ok(SegmentModel::inert(d.dims()));
            }
            let full = m_mode_svd(&ds)?;
            let mut model = trim(&full, &numerical_ranks(&full))?;
            if let Some(idx) = rows {
                let sub = &model.mode_matrices[0];
                let mut u0 = Matrix::zeros(d.dims()[0], sub.ncols());
                for (k, &i) in idx.iter().enumerate() {
                    u0.set_row(i, &sub.row(k));
                }
                model.mode_matrices[0] = u0;
            }
            Ok(SegmentModel::from_tucker(model))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HierarchicalModel {
        dims: d.dims().to_vec(),
        segments,
        bank: bank.clone(),
        mean,
    })
}

/// Leading-column slice without re-canonicalization.
fn trim(model: &TuckerModel, ranks: &[usize]) -> Result<TuckerModel> {
    Ok(TuckerModel {
        core: model.core.leading(ranks)?,
        mode_matrices: model
            .mode_matrices
            .iter()
            .zip(ranks)
            .map(|(u, &r)| u.columns(0, r).into_owned())
            .collect(),
        mean: model.mean.clone(),
    })
}

/// Reduces the composite width of each mode `c` with `Some(J̃_c)` by
/// sorting the mode-c spectra of all segments together and deleting the
/// columns (and core slabs) with the smallest values. Ties keep the lower
/// segment index, then the lower column index. `None` leaves a mode as is.
pub fn chtf_truncate(model: &HierarchicalModel, total_ranks: &[Option<usize>]) -> Result<HierarchicalModel> {
    let order = model.order();
    if total_ranks.len() != order {
        return Err(Error::Shape(format!(
            "{} rank entries for an order-{} model",
            total_ranks.len(),
            order
        )));
    }
    let mut keep: Vec<Vec<Vec<usize>>> = model
        .segments
        .iter()
        .map(|s| s.ranks().iter().map(|&r| (0..r).collect()).collect())
        .collect();
    for (c, target) in total_ranks.iter().enumerate() {
        let Some(j) = *target else { continue };
        let mut entries: Vec<(f64, usize, usize)> = Vec::new();
        for (s, seg) in model.segments.iter().enumerate() {
            for (col, sigma) in seg.spectrum(c).into_iter().enumerate() {
                entries.push((sigma, s, col));
            }
        }
        if j == 0 || j > entries.len() {
            return Err(Error::RankOutOfRange {
                mode: c,
                rank: j,
                max: entries.len(),
            });
        }
        entries.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        for k in keep.iter_mut() {
            k[c].clear();
        }
        for &(_, s, col) in &entries[..j] {
            keep[s][c].push(col);
        }
        for k in keep.iter_mut() {
            k[c].sort_unstable();
        }
    }
    let segments = model
        .segments
        .iter()
        .zip(&keep)
        .map(|(seg, cols)| {
            let core = match &seg.core {
                Some(c) if cols.iter().all(|k| !k.is_empty()) => c,
                _ => return Ok(SegmentModel::inert(&model.dims)),
            };
            let mut z = core.clone();
            let mut mats = Vec::with_capacity(order);
            for (m, idx) in cols.iter().enumerate() {
                z = z.select(m, idx)?;
                let u = &seg.mode_matrices[m];
                let mut sel = Matrix::zeros(u.nrows(), idx.len());
                for (dst, &src) in idx.iter().enumerate() {
                    sel.set_column(dst, &u.column(src));
                }
                mats.push(sel);
            }
            Ok(SegmentModel {
                core: Some(z),
                mode_matrices: mats,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HierarchicalModel {
        dims: model.dims.clone(),
        segments,
        bank: model.bank.clone(),
        mean: model.mean.clone(),
    })
}

/// Drops surplus columns from segments whose rank tuple is not attainable.
///
/// The merged-spectrum truncation can leave a segment with
/// `r_m > Π_{n≠m} r_n`. The extra mode-m columns then carry no energy, and
/// the exactly rank-deficient `W_cᵀ` makes the least-squares updates
/// numerically unstable. Each such segment is canonicalized, which moves the
/// empty core slabs last, and then cut to the attainable rank. The
/// reconstruction does not change.
fn feasible_ranks(model: &HierarchicalModel) -> Result<HierarchicalModel> {
    let mut out = model.clone();
    for seg in out.segments.iter_mut() {
        let Some(core) = seg.core.take() else { continue };
        let mut ranks = core.dims().to_vec();
        loop {
            let total: usize = ranks.iter().product();
            let Some(m) = (0..ranks.len()).find(|&m| ranks[m] * ranks[m] > total) else { break };
            ranks[m] = total / ranks[m];
        }
        let tucker = TuckerModel {
            core,
            mode_matrices: std::mem::take(&mut seg.mode_matrices),
            mean: None,
        };
        let tucker = if ranks == tucker.ranks() {
            tucker
        } else {
            trim(&canonicalize(tucker)?, &ranks)?
        };
        seg.core = Some(tucker.core);
        seg.mode_matrices = tucker.mode_matrices;
    }
    Ok(out)
}

fn centered_loss(dc: &DenseTensor, model: &HierarchicalModel) -> Result<f64> {
    let r = reconstruct_centered(model)?;
    Ok(0.5 * frobenius_norm(&dc.sub(&r)?).powi(2))
}

/// Compositional hierarchical tensor factorization.
///
/// Initializes with [`chtf_init`] and [`chtf_truncate`], then sweeps the
/// modes `c = 0..=C`:
/// 1. `U_cx ← D_[c] · pinv(W_cᵀ)` with `W_cᵀ` assembled segment-wise,
/// 2. every `U_{c,s}` block is replaced by its leading left singular
///    vectors,
/// 3. the non-zero core blocks are re-solved jointly by least squares.
///
/// Each step is an exact least-squares minimization over a span that
/// contains the previous iterate, so the loss cannot rise in exact
/// arithmetic. A mode step that raises it through roundoff (possible when
/// overlapping segments make the system nearly singular) is undone and
/// counted in [`LossTrace::rejected_steps`].
pub fn chtf_als(
    d: &DenseTensor,
    bank: &SegmentFilterBank,
    total_ranks: &[Option<usize>],
    opts: &ChtfOptions,
) -> Result<(HierarchicalModel, LossTrace)> {
    let init = chtf_init(d, bank, opts.center)?;
    let mut model = feasible_ranks(&chtf_truncate(&init, total_ranks)?)?;
    let dc = model.centered(d)?;
    let tol = AlsOptions {
        max_iters: opts.max_iters,
        tol: opts.tol,
    }
    .resolve_tol(&dc)?;
    let mut trace = LossTrace {
        values: vec![centered_loss(&dc, &model)?],
        ..Default::default()
    };
    if model.active_segments().next().is_none() {
        trace.converged = true;
        return Ok((model, trace));
    }
    let mut e = trace.values[0];
    for _ in 0..opts.max_iters {
        for c in 0..model.order() {
            let before = model.clone();
            update_mode(&dc, &mut model, c)?;
            solve_cores(&dc, &mut model, DENSE_CORE_SOLVE_LIMIT)?;
            let after = centered_loss(&dc, &model)?;
            if !after.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss in iteration {}, mode {c}",
                    trace.iterations + 1
                )));
            }
            // In exact arithmetic a mode step cannot raise the loss. When
            // overlapping segments make the stacked system nearly singular,
            // roundoff can; such a step is undone.
            if after > e {
                model = before;
                trace.rejected_steps += 1;
            } else {
                e = after;
            }
        }
        let prev = *trace.values.last().expect("initial loss");
        trace.values.push(e);
        trace.iterations += 1;
        if prev - e <= tol {
            trace.converged = true;
            break;
        }
    }
    Ok((model, trace))
}

/// Mode-c least-squares update followed by per-segment orthonormalization.
///
/// For a disjoint selector bank the measurement-mode blocks are kept
/// inside their segment's support: rows of segment `s` are solved against
/// `W_sᵀ` alone. Without this, segments that share causal subspaces make
/// the stacked system rank-deficient and the minimum-norm split leaks one
/// segment's basis into another segment's measurements.
fn update_mode(dc: &DenseTensor, model: &mut HierarchicalModel, c: usize) -> Result<()> {
    let dm = matrixize(dc, c)?;
    if c == 0 && model.bank.is_disjoint_segmentation() {
        return update_supported_measurement_mode(&dm, model);
    }
    let wt = stacked_w_t(model, c)?;
    if wt.nrows() == 0 {
        return Ok(());
    }
    let u_cx = dm * linalg::pinv(&wt)?;
    model.set_composite_mode_matrix(c, &u_cx)?;
    for seg in model.segments.iter_mut().filter(|s| s.is_active()) {
        let r = seg.mode_matrices[c].ncols();
        let u = linalg::leading_left(&seg.mode_matrices[c], r).map_err(|_| Error::SvdFailed { mode: c })?;
        if u.ncols() != r {
            return Err(Error::Numeric(format!("mode {c} block lost columns")));
        }
        seg.mode_matrices[c] = u;
    }
    Ok(())
}

/// Support-restricted least squares for the measurement mode of a
/// disjoint selector bank, orthonormalized on the support so that rows
/// outside it stay exactly zero.
fn update_supported_measurement_mode(dm: &Matrix, model: &mut HierarchicalModel) -> Result<()> {
    let supports: Vec<Vec<usize>> = model
        .bank
        .filters()
        .iter()
        .map(|f| match f {
            Filter::Selector(idx) => idx.clone(),
            Filter::Dense(_) => unreachable!("disjoint segmentation banks hold selectors"),
        })
        .collect();
    for (seg, rows) in model.segments.iter_mut().zip(&supports) {
        let Some(wt) = seg.partial_unfolding(0)? else { continue };
        let sub = Matrix::from_fn(rows.len(), dm.ncols(), |i, j| dm[(rows[i], j)]);
        let r = wt.nrows();
        let solved = sub * linalg::pinv(&wt)?;
        let solved = linalg::leading_left(&solved, r).map_err(|_| Error::SvdFailed { mode: 0 })?;
        if solved.ncols() != r {
            return Err(Error::Numeric("mode 0 block lost columns".into()));
        }
        let mut u = Matrix::zeros(dm.nrows(), r);
        for (i, &row) in rows.iter().enumerate() {
            u.row_mut(row).copy_from(&solved.row(i));
        }
        seg.mode_matrices[0] = u;
    }
    Ok(())
}

/// Cross Gram matrices `U_{k,s}ᵀ U_{k,t}` for every mode, or `None` when
/// one of them vanishes and the pair does not interact.
type CrossGrams = Vec<Vec<Option<Vec<Matrix>>>>;

fn cross_grams(segs: &[&SegmentModel]) -> CrossGrams {
    segs.iter()
        .map(|a| {
            segs.iter()
                .map(|b| {
                    let grams: Vec<Matrix> = a
                        .mode_matrices
                        .iter()
                        .zip(&b.mode_matrices)
                        .map(|(ua, ub)| ua.transpose() * ub)
                        .collect();
                    let vanishes = grams
                        .iter()
                        .any(|g| g.iter().all(|v| v.abs() <= CROSS_TERM_TOL));
                    (!vanishes).then_some(grams)
                })
                .collect()
        })
        .collect()
}

/// Solves the non-zero core blocks: minimizes
/// `‖vec(D) − Σ_s (U_{C,s} ⊗ … ⊗ U_{0,s}) vec(Z_s)‖` jointly over all active
/// segments. Zero blocks of the block-diagonal core are never touched.
pub(crate) fn solve_cores(dc: &DenseTensor, model: &mut HierarchicalModel, dense_limit: usize) -> Result<()> {
    let active: Vec<usize> = model.active_segments().map(|(s, _)| s).collect();
    if active.is_empty() {
        return Ok(());
    }
    let segs: Vec<&SegmentModel> = active.iter().map(|&s| &model.segments[s]).collect();
    let rhs: Vec<DenseTensor> = segs
        .iter()
        .map(|seg| {
            let refs: Vec<Option<&Matrix>> = seg.mode_matrices.iter().map(Some).collect();
            multi_mode_product_t(dc, &refs)
        })
        .collect::<Result<_>>()?;
    let grams = cross_grams(&segs);
    let coupled = (0..segs.len()).any(|s| (0..segs.len()).any(|t| s != t && grams[s][t].is_some()));
    let total: usize = rhs.iter().map(DenseTensor::len).sum();
    let solution = if !coupled {
        // U_{k,s} orthonormal and pairwise non-interacting: Z_s = D ×_k U_{k,s}ᵀ.
        rhs
    } else if total <= dense_limit {
        dense_core_solve(&segs, &grams, &rhs)?
    } else {
        let start: Vec<DenseTensor> = segs.iter().map(|s| s.core.clone().expect("active")).collect();
        cg_core_solve(&grams, &rhs, start)?
    };
    for (&s, z) in active.iter().zip(solution) {
        model.segments[s].core = Some(z);
    }
    Ok(())
}

fn dense_core_solve(segs: &[&SegmentModel], grams: &CrossGrams, rhs: &[DenseTensor]) -> Result<Vec<DenseTensor>> {
    let sizes: Vec<usize> = rhs.iter().map(DenseTensor::len).collect();
    let mut offs = vec![0];
    for n in &sizes {
        offs.push(offs.last().unwrap() + n);
    }
    let total = *offs.last().unwrap();
    let mut g = Matrix::zeros(total, total);
    for s in 0..segs.len() {
        for t in 0..segs.len() {
            if let Some(gr) = &grams[s][t] {
                // vec order is mode-0 fastest, so the chain runs C … 0.
                let chain: Vec<&Matrix> = gr.iter().rev().collect();
                let block = kronecker_chain(&chain);
                g.view_mut((offs[s], offs[t]), (sizes[s], sizes[t])).copy_from(&block);
            }
        }
    }
    let mut b = nalgebra::DVector::zeros(total);
    for (s, r) in rhs.iter().enumerate() {
        b.rows_mut(offs[s], sizes[s]).copy_from_slice(r.data());
    }
    let z = linalg::psd_pinv(&g)? * b;
    rhs.iter()
        .enumerate()
        .map(|(s, r)| DenseTensor::new(r.dims().to_vec(), z.rows(offs[s], sizes[s]).iter().copied().collect()))
        .collect()
}

fn gram_apply(grams: &CrossGrams, z: &[DenseTensor]) -> Result<Vec<DenseTensor>> {
    (0..z.len())
        .map(|s| {
            let mut acc: Option<DenseTensor> = None;
            for (t, zt) in z.iter().enumerate() {
                if let Some(gr) = &grams[s][t] {
                    let refs: Vec<Option<&Matrix>> = gr.iter().map(Some).collect();
                    let term = multi_mode_product(zt, &refs)?;
                    match acc.as_mut() {
                        Some(a) => a.add_assign(&term)?,
                        None => acc = Some(term),
                    }
                }
            }
            Ok(acc.expect("diagonal block always present"))
        })
        .collect()
}

fn dot_all(a: &[DenseTensor], b: &[DenseTensor]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y).expect("matching shapes")).sum()
}

/// Conjugate gradients on the normal equations, warm-started from the
/// current cores.
fn cg_core_solve(grams: &CrossGrams, rhs: &[DenseTensor], start: Vec<DenseTensor>) -> Result<Vec<DenseTensor>> {
    let total: usize = rhs.iter().map(DenseTensor::len).sum();
    let bnorm = dot_all(rhs, rhs).sqrt();
    let mut z = start;
    let gz = gram_apply(grams, &z)?;
    let mut r: Vec<DenseTensor> = rhs.iter().zip(&gz).map(|(b, g)| b.sub(g)).collect::<Result<_>>()?;
    let mut p = r.clone();
    let mut rs = dot_all(&r, &r);
    let stop = (1e-13 * bnorm).powi(2);
    for _ in 0..total.max(10) {
        if rs <= stop {
            break;
        }
        let gp = gram_apply(grams, &p)?;
        let pgp = dot_all(&p, &gp);
        if !(pgp > 0.0) {
            break;
        }
        let alpha = rs / pgp;
        for ((zi, pi), (ri, gi)) in z.iter_mut().zip(&p).zip(r.iter_mut().zip(&gp)) {
            zi.add_assign(&pi.scale(alpha))?;
            ri.add_assign(&gi.scale(-alpha))?;
        }
        let rs_new = dot_all(&r, &r);
        let beta = rs_new / rs;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri.add(&pi.scale(beta))?;
        }
        rs = rs_new;
    }
    if !rs.is_finite() {
        return Err(Error::Numeric("core solve diverged".into()));
    }
    Ok(z)
}

/// Independent parts: for a bank of pairwise-disjoint selectors the
/// factorization is the concatenation of per-segment M-mode SVDs.
pub fn chtf_independent(d: &DenseTensor, bank: &SegmentFilterBank) -> Result<HierarchicalModel> {
    if !bank.is_disjoint_segmentation() {
        return Err(Error::InvalidArgument(
            "independent-parts factorization needs a disjoint segmentation bank".into(),
        ));
    }
    chtf_init(d, bank, false)
}

/// Diagnostics of the stacked least-squares solve for overlapping parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapReport {
    /// The stacked Kronecker system had dependent rows; the pseudo-inverse
    /// returned the minimum-norm split.
    pub rank_deficient: bool,
}

/// Extended cores `T_s` (`I_0 × R_1 × … × R_C`) given every segment's
/// causal-mode matrices (`mode_matrices[s][k-1] = U_{k,s}`), solved jointly:
/// `[T_{1[0]} … T_{S[0]}] = D_[0] · pinv([K_1ᵀ; …; K_Sᵀ])` with
/// `K_s = U_{C,s} ⊗ … ⊗ U_{1,s}`.
pub fn overlapping_extended_cores(
    d: &DenseTensor,
    mode_matrices: &[Vec<Matrix>],
) -> Result<(Vec<DenseTensor>, OverlapReport)> {
    let order = d.order();
    if order < 2 {
        return Err(Error::InvalidArgument("need at least one causal mode".into()));
    }
    let mut blocks = Vec::with_capacity(mode_matrices.len());
    let mut core_dims = Vec::with_capacity(mode_matrices.len());
    for mats in mode_matrices {
        if mats.len() != order - 1 {
            return Err(Error::Shape("one matrix per causal mode expected".into()));
        }
        for (k, u) in mats.iter().enumerate() {
            if u.nrows() != d.dims()[k + 1] {
                return Err(Error::Shape(format!("mode {} matrix has {} rows", k + 1, u.nrows())));
            }
        }
        let chain: Vec<&Matrix> = mats.iter().rev().collect();
        blocks.push(kronecker_chain(&chain).transpose());
        let mut dims = vec![d.dims()[0]];
        dims.extend(mats.iter().map(Matrix::ncols));
        core_dims.push(dims);
    }
    let refs: Vec<&Matrix> = blocks.iter().collect();
    let stacked = linalg::vstack(&refs)?;
    let svd = linalg::left_singular(&stacked)?;
    let smax = svd.sigma.first().copied().unwrap_or(0.0);
    let cut = linalg::pinv_cutoff(stacked.nrows(), stacked.ncols(), smax);
    let rank = svd.sigma.iter().filter(|&&s| s > cut && s > 0.0).count();
    let report = OverlapReport {
        rank_deficient: rank < stacked.nrows(),
    };
    let t = matrixize(d, 0)? * linalg::pinv(&stacked)?;
    let mut off = 0;
    let cores = core_dims
        .iter()
        .zip(&blocks)
        .map(|(dims, b)| {
            let w = b.nrows();
            let ts = t.columns(off, w).into_owned();
            off += w;
            unmatrixize(&ts, 0, dims)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((cores, report))
}

/// Completely overlapping parts sharing one multilinear-rank reduction:
/// every segment's causal-mode matrices are the leading `shared_ranks`
/// left singular vectors of its `D_s`, and the extended cores are solved
/// jointly by [`overlapping_extended_cores`]. Each `T_s` is then stored as
/// `Z_s ×_0 U_{0,s}` with `U_{0,s}` spanning its mode-0 column space.
pub fn chtf_overlapping(
    d: &DenseTensor,
    bank: &SegmentFilterBank,
    shared_ranks: &[usize],
) -> Result<(HierarchicalModel, OverlapReport)> {
    if !bank.is_full_support() {
        return Err(Error::InvalidArgument("overlapping parts need full-support filters".into()));
    }
    let order = d.order();
    if shared_ranks.len() + 1 != order {
        return Err(Error::Shape(format!(
            "{} shared ranks for {} causal modes",
            shared_ranks.len(),
            order - 1
        )));
    }
    let per_segment: Vec<Vec<Matrix>> = (0..bank.len())
        .map(|s| {
            let ds = segment_tensor(d, bank, s)?;
            shared_ranks
                .iter()
                .enumerate()
                .map(|(k, &r)| {
                    let x = matrixize(&ds, k + 1)?;
                    let max = x.nrows().min(x.ncols());
                    if r == 0 || r > max {
                        return Err(Error::RankOutOfRange { mode: k + 1, rank: r, max });
                    }
                    linalg::leading_left(&x, r).map_err(|_| Error::SvdFailed { mode: k + 1 })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let (cores, report) = overlapping_extended_cores(d, &per_segment)?;
    let segments = cores
        .into_iter()
        .zip(per_segment)
        .map(|(t, mats)| {
            if frobenius_norm(&t) == 0.0 {
                return Ok(SegmentModel::inert(d.dims()));
            }
            let t0 = matrixize(&t, 0)?;
            let svd = linalg::left_singular(&t0)?;
            let cut = linalg::pinv_cutoff(t0.nrows(), t0.ncols(), svd.sigma[0]);
            let r0 = svd.sigma.iter().filter(|&&s| s > cut).count().max(1);
            let u0 = svd.u.columns(0, r0).into_owned();
            let core = crate::tensor::mode_product(&t, 0, &u0.transpose())?;
            let mut mode_matrices = vec![u0];
            mode_matrices.extend(mats);
            Ok(SegmentModel {
                core: Some(core),
                mode_matrices,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((
        HierarchicalModel {
            dims: d.dims().to_vec(),
            segments,
            bank: bank.clone(),
            mean: None,
        },
        report,
    ))
}
