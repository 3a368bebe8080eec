//! TensorFaces-style recognition: training on a labeled factorial ensemble,
//! multilinear projection of new observations, part-based signatures and
//! verification scoring.

use crate::decomposition::{m_mode_svd, numerical_ranks, rank_one_approx, truncate, ExtendedCore, LossTrace, TuckerModel};
use crate::error::{Error, Result};
use crate::hierarchy::{chtf_als, segment_tensor, ChtfOptions, HierarchicalModel, SegmentFilterBank, SegmentModel};
use crate::linalg;
use crate::tensor::{matrixize, DenseTensor, Matrix};

/// Causal mode holding person identity.
pub const PERSON_MODE: usize = 1;

/// Relative size of `T_[0] r` below which a projection response counts as
/// zero.
pub const ZERO_RESPONSE_TOL: f64 = 1e-10;

const RANK1_MAX_ITERS: usize = 200;
const RANK1_TOL: f64 = 1e-14;

/// Complete factorial ensemble of vectorized observations with one label
/// list per causal mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEnsemble {
    tensor: DenseTensor,
    factor_labels: Vec<Vec<String>>,
}

impl LabeledEnsemble {
    pub fn new(tensor: DenseTensor, factor_labels: Vec<Vec<String>>) -> Result<Self> {
        if tensor.order() < 2 {
            return Err(Error::Shape("ensemble needs at least one causal mode".into()));
        }
        if factor_labels.len() != tensor.order() - 1 {
            return Err(Error::Shape(format!(
                "{} label lists for {} causal modes",
                factor_labels.len(),
                tensor.order() - 1
            )));
        }
        for (k, labels) in factor_labels.iter().enumerate() {
            if labels.len() != tensor.dims()[k + 1] {
                return Err(Error::Shape(format!(
                    "mode {} has {} labels for extent {}",
                    k + 1,
                    labels.len(),
                    tensor.dims()[k + 1]
                )));
            }
        }
        Ok(Self { tensor, factor_labels })
    }

    /// Ensemble with labels `0, 1, …` on every causal mode.
    pub fn unlabeled(tensor: DenseTensor) -> Result<Self> {
        let labels = tensor
            .dims()
            .iter()
            .skip(1)
            .map(|&n| (0..n).map(|i| i.to_string()).collect())
            .collect();
        Self::new(tensor, labels)
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn factor_labels(&self) -> &[Vec<String>] {
        &self.factor_labels
    }

    pub fn person_labels(&self) -> &[String] {
        &self.factor_labels[PERSON_MODE - 1]
    }

    /// Observation for causal indices `cell = (i_1, …, i_C)`.
    pub fn observation(&self, cell: &[usize]) -> Vec<f64> {
        let mut idx = vec![0];
        idx.extend_from_slice(cell);
        let start = self.tensor.offset(&idx);
        self.tensor.data()[start..start + self.tensor.dims()[0]].to_vec()
    }

    /// All causal index tuples in storage order.
    pub fn cells(&self) -> Vec<Vec<usize>> {
        let dims = &self.tensor.dims()[1..];
        let n: usize = dims.iter().product();
        let mut out = Vec::with_capacity(n);
        let mut cur = vec![0; dims.len()];
        for _ in 0..n {
            out.push(cur.clone());
            crate::tensor::increment(&mut cur, dims);
        }
        out
    }
}

/// Global TensorFaces model: M-mode SVD of the ensemble trimmed to its
/// numerical ranks, with optional causal-mode truncation.
pub fn train_global(ens: &LabeledEnsemble, causal_ranks: Option<&[usize]>) -> Result<(TuckerModel, ExtendedCore)> {
    let full = m_mode_svd(ens.tensor())?;
    let numeric = numerical_ranks(&full);
    if full.mode_singular_values(0).first().copied().unwrap_or(0.0) == 0.0 {
        return Err(Error::Numeric("ensemble has no energy".into()));
    }
    let mut ranks = numeric.clone();
    if let Some(r) = causal_ranks {
        if r.len() + 1 != ranks.len() {
            return Err(Error::Shape(format!("{} causal ranks for {} causal modes", r.len(), ranks.len() - 1)));
        }
        ranks[1..].copy_from_slice(r);
    }
    let model = truncate(&full, &ranks)?;
    let t = model.extended_core()?;
    Ok((model, t))
}

/// Compositional model: [`chtf_als`] on the ensemble tensor.
pub fn train_compositional(
    ens: &LabeledEnsemble,
    bank: &SegmentFilterBank,
    total_ranks: &[Option<usize>],
    opts: &ChtfOptions,
) -> Result<(HierarchicalModel, LossTrace)> {
    chtf_als(ens.tensor(), bank, total_ranks, opts)
}

/// Per-segment weights proportional to the between-person variance of the
/// filtered training data: per person, the mean observation over all other
/// causal modes, and the spread of those means around their average.
/// Segments without person variation get zero weight; if no segment has any,
/// the weights are uniform.
pub fn segment_weights(ens: &LabeledEnsemble, bank: &SegmentFilterBank) -> Result<Vec<f64>> {
    let t = ens.tensor();
    let raw = (0..bank.len())
        .map(|s| {
            let ds = segment_tensor(t, bank, s)?;
            let x = matrixize(&ds, PERSON_MODE)?;
            // Rows are persons; columns run over measurement × other modes
            // with the measurement index fastest.
            let i0 = t.dims()[0];
            let people = x.nrows();
            let groups = x.ncols() / i0;
            let mut means = Matrix::zeros(people, i0);
            for p in 0..people {
                for g in 0..groups {
                    for i in 0..i0 {
                        means[(p, i)] += x[(p, g * i0 + i)] / groups as f64;
                    }
                }
            }
            let avg = means.row_mean();
            Ok(means.row_iter().map(|r| (r - &avg).norm_squared()).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(normalize_weights(&raw))
}

fn normalize_weights(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / raw.len() as f64; raw.len()]
    }
}

/// Causal-factor vectors recovered from one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Unit vectors, one per causal mode (person first).
    pub factors: Vec<Vec<f64>>,
    pub scale: f64,
    /// The observation has no component in the column space of `T_[0]`.
    pub zero_response: bool,
    pub converged: bool,
}

impl Projection {
    pub fn person(&self) -> &[f64] {
        &self.factors[0]
    }
}

/// Precomputed `pinv(T_[0])` for repeated projections against one
/// extended core.
#[derive(Debug, Clone)]
pub struct Projector {
    t0: Matrix,
    pinv: Matrix,
    causal_dims: Vec<usize>,
}

impl Projector {
    pub fn new(t: &ExtendedCore) -> Result<Self> {
        let t = t.tensor();
        if t.order() < 2 {
            return Err(Error::Shape("extended core needs a causal mode".into()));
        }
        let t0 = matrixize(t, 0)?;
        let pinv = linalg::pinv(&t0)?;
        Ok(Self {
            t0,
            pinv,
            causal_dims: t.dims()[1..].to_vec(),
        })
    }

    pub fn measurement_dim(&self) -> usize {
        self.t0.nrows()
    }

    pub fn causal_dims(&self) -> &[usize] {
        &self.causal_dims
    }

    /// Response `R = pinv(T_[0]) d` folded to the causal shape, then its
    /// best rank-1 factors under unit-norm constraints.
    pub fn project(&self, d: &[f64]) -> Result<Projection> {
        if d.len() != self.t0.nrows() {
            return Err(Error::Shape(format!(
                "observation length {} vs measurement extent {}",
                d.len(),
                self.t0.nrows()
            )));
        }
        let dv = nalgebra::DVector::from_column_slice(d);
        let r = &self.pinv * &dv;
        let dnorm = dv.norm();
        if dnorm == 0.0 || (&self.t0 * &r).norm() <= ZERO_RESPONSE_TOL * dnorm {
            return Ok(Projection {
                factors: self.causal_dims.iter().map(|&n| vec![0.0; n]).collect(),
                scale: 0.0,
                zero_response: true,
                converged: true,
            });
        }
        if self.causal_dims.len() == 1 {
            let n = r.norm();
            return Ok(Projection {
                factors: vec![r.iter().map(|v| v / n).collect()],
                scale: n,
                zero_response: false,
                converged: true,
            });
        }
        let resp = DenseTensor::new(self.causal_dims.clone(), r.iter().copied().collect())?;
        let f = rank_one_approx(&resp, RANK1_MAX_ITERS, RANK1_TOL)?;
        Ok(Projection {
            factors: f.vectors,
            scale: f.scale,
            zero_response: false,
            converged: f.converged,
        })
    }
}

/// One-off multilinear projection of `d` against the extended core `t`.
pub fn multilinear_project(t: &ExtendedCore, d: &[f64]) -> Result<Projection> {
    Projector::new(t)?.project(d)
}

/// Part-based signature of one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Signature {
    /// Per-segment projection; `None` where the segment failed or is inert.
    pub segments: Vec<Option<Projection>>,
    /// Segment weights renormalized over the segments that succeeded.
    pub weights: Vec<f64>,
    /// Person-mode rank of every segment.
    pub person_dims: Vec<usize>,
}

impl Signature {
    pub fn person(&self, s: usize) -> Option<&[f64]> {
        self.segments[s].as_ref().map(Projection::person)
    }

    /// Weighted concatenation of the per-segment person vectors; failed
    /// segments contribute zeros.
    pub fn composite(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.person_dims.iter().sum());
        for (s, &n) in self.person_dims.iter().enumerate() {
            match self.person(s) {
                Some(v) => out.extend(v.iter().map(|x| x * self.weights[s])),
                None => out.extend(std::iter::repeat_n(0.0, n)),
            }
        }
        out
    }

    pub fn valid_segments(&self) -> usize {
        self.segments.iter().filter(|s| s.is_some()).count()
    }
}

/// Sign-folded cosine `|⟨a, b⟩| / (‖a‖‖b‖)`, zero when either is zero.
pub fn abs_cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)).abs().min(1.0)
}

/// Trained recognizer: a factorization, its per-segment projectors and
/// weights, and the person labels of the training ensemble.
#[derive(Debug, Clone)]
pub struct Recognizer {
    pub model: HierarchicalModel,
    pub weights: Vec<f64>,
    pub person_labels: Vec<String>,
    projectors: Vec<Option<Projector>>,
}

impl Recognizer {
    pub fn new(model: HierarchicalModel, weights: Vec<f64>, person_labels: Vec<String>) -> Result<Self> {
        if model.order() < 2 {
            return Err(Error::Shape("recognition needs a person mode".into()));
        }
        if weights.len() != model.segments.len() {
            return Err(Error::Shape(format!(
                "{} weights for {} segments",
                weights.len(),
                model.segments.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("segment weights must be nonnegative".into()));
        }
        if person_labels.len() != model.dims[PERSON_MODE] {
            return Err(Error::Shape(format!(
                "{} person labels for person extent {}",
                person_labels.len(),
                model.dims[PERSON_MODE]
            )));
        }
        let projectors = model
            .segments
            .iter()
            .map(|seg| match seg.extended_core()? {
                Some(t) => Projector::new(&t).map(Some),
                None => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            model,
            weights,
            person_labels,
            projectors,
        })
    }

    /// Single-segment recognizer around a global model.
    pub fn from_global(model: &TuckerModel, person_labels: Vec<String>) -> Result<Self> {
        let dims = model.dims();
        let h = HierarchicalModel {
            bank: SegmentFilterBank::identity(dims[0]),
            dims,
            segments: vec![SegmentModel {
                core: Some(model.core.clone()),
                mode_matrices: model.mode_matrices.clone(),
            }],
            mean: model.mean.clone(),
        };
        Self::new(h, vec![1.0], person_labels)
    }

    /// Filters the (centered) observation with every segment filter and
    /// projects it against that segment's extended core. Segments that
    /// fail, or whose response is zero, are dropped from the weights.
    pub fn signature(&self, d: &[f64]) -> Result<Signature> {
        let n = self.model.dims[0];
        if d.len() != n {
            return Err(Error::Shape(format!("observation length {} vs {}", d.len(), n)));
        }
        let centered: Vec<f64> = match &self.model.mean {
            Some(m) => d.iter().zip(m).map(|(a, b)| a - b).collect(),
            None => d.to_vec(),
        };
        let mut segments = Vec::with_capacity(self.projectors.len());
        let mut raw = Vec::with_capacity(self.projectors.len());
        for (s, proj) in self.projectors.iter().enumerate() {
            let result = match proj {
                Some(p) => self
                    .model
                    .bank
                    .apply(s, &centered)
                    .and_then(|x| p.project(&x))
                    .ok()
                    .filter(|r| !r.zero_response),
                None => None,
            };
            raw.push(if result.is_some() { self.weights[s] } else { 0.0 });
            segments.push(result);
        }
        if segments.iter().all(Option::is_none) {
            return Err(Error::Numeric("every segment projection failed".into()));
        }
        let total: f64 = raw.iter().sum();
        let weights = if total > 0.0 {
            raw.iter().map(|w| w / total).collect()
        } else {
            let k = segments.iter().filter(|s| s.is_some()).count() as f64;
            segments.iter().map(|s| if s.is_some() { 1.0 / k } else { 0.0 }).collect()
        };
        let person_dims = self
            .model
            .segments
            .iter()
            .map(|s| s.mode_matrices[PERSON_MODE].ncols())
            .collect();
        Ok(Signature {
            segments,
            weights,
            person_dims,
        })
    }

    /// Per-person scores `Σ_s w_s |cos(r_{P,s}, row p of U_{P,s})|`.
    pub fn person_scores(&self, sig: &Signature) -> Vec<f64> {
        let people = self.model.dims[PERSON_MODE];
        let mut scores = vec![0.0; people];
        for (s, seg) in self.model.segments.iter().enumerate() {
            let Some(r) = sig.person(s) else { continue };
            let u = &seg.mode_matrices[PERSON_MODE];
            for (p, score) in scores.iter_mut().enumerate() {
                let row: Vec<f64> = u.row(p).iter().copied().collect();
                *score += sig.weights[s] * abs_cosine(r, &row);
            }
        }
        scores
    }

    /// Training person with the highest score (lowest index on ties).
    pub fn identify(&self, sig: &Signature) -> usize {
        let scores = self.person_scores(sig);
        let mut best = 0;
        for (p, &v) in scores.iter().enumerate() {
            if v > scores[best] {
                best = p;
            }
        }
        best
    }
}

/// Weighted sign-folded cosine of per-segment person vectors over the
/// segments valid in both signatures. The weight of a segment is the mean
/// of its two signature weights; weights are renormalized over the valid
/// segments. Returns 0 when no segment is valid in both.
pub fn similarity(a: &Signature, b: &Signature) -> Result<f64> {
    if a.segments.len() != b.segments.len() {
        return Err(Error::Shape("signatures have different segment counts".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for s in 0..a.segments.len() {
        if let (Some(x), Some(y)) = (a.person(s), b.person(s)) {
            if x.len() != y.len() {
                return Err(Error::Shape(format!("segment {s} person vectors differ in length")));
            }
            let w = 0.5 * (a.weights[s] + b.weights[s]);
            num += w * abs_cosine(x, y);
            den += w;
        }
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationResult {
    pub scores: Vec<f64>,
    pub same: Vec<bool>,
    /// Threshold chosen on the calibration half (even pair indices); a
    /// pair is declared same-person when its score is at least this value.
    pub threshold: f64,
    /// Accuracy at `threshold` on the evaluation half (odd pair indices,
    /// or all pairs when there is only one).
    pub accuracy: f64,
    pub decisions: Vec<bool>,
    pub roc: Vec<RocPoint>,
    pub auc: f64,
}

fn accuracy_at(scores: &[f64], same: &[bool], thr: f64) -> f64 {
    let hits = scores.iter().zip(same).filter(|(s, y)| (**s >= thr) == **y).count();
    hits as f64 / scores.len() as f64
}

/// Threshold with the best accuracy among `+∞`, the midpoints between
/// consecutive distinct scores, and `−∞`. Ties keep the highest threshold.
fn best_threshold(scores: &[f64], same: &[bool]) -> f64 {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    let mut candidates = vec![f64::INFINITY];
    candidates.extend(distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    candidates.push(f64::NEG_INFINITY);
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for c in candidates {
        let acc = accuracy_at(scores, same, c);
        if acc > best.0 {
            best = (acc, c);
        }
    }
    best.1
}

/// ROC over every distinct score, from `(0, 0)` at threshold `+∞` to
/// `(1, 1)`. Rates for a class with no pairs are reported as 0.
pub fn roc_curve(scores: &[f64], same: &[bool]) -> Vec<RocPoint> {
    let pos = same.iter().filter(|&&y| y).count() as f64;
    let neg = same.len() as f64 - pos;
    let rate = |k: usize, n: f64| if n > 0.0 { k as f64 / n } else { 0.0 };
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0, 0);
    let mut k = 0;
    while k < idx.len() {
        let thr = scores[idx[k]];
        while k < idx.len() && scores[idx[k]] == thr {
            if same[idx[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        out.push(RocPoint {
            threshold: thr,
            fpr: rate(fp, neg),
            tpr: rate(tp, pos),
        });
    }
    out
}

/// Trapezoidal area under an ROC curve.
pub fn auc(roc: &[RocPoint]) -> f64 {
    roc.windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * 0.5 * (w[0].tpr + w[1].tpr))
        .sum()
}

/// Verification from precomputed similarity scores.
pub fn verify_scores(scores: &[f64], same: &[bool]) -> Result<VerificationResult> {
    if scores.len() != same.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), same.len())));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("no pairs to verify".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite similarity score".into()));
    }
    let split = |parity: usize| -> (Vec<f64>, Vec<bool>) {
        (0..scores.len())
            .filter(|i| i % 2 == parity)
            .map(|i| (scores[i], same[i]))
            .unzip()
    };
    let (cal_s, cal_y) = split(0);
    let (eval_s, eval_y) = if scores.len() > 1 { split(1) } else { (cal_s.clone(), cal_y.clone()) };
    let threshold = best_threshold(&cal_s, &cal_y);
    let roc = roc_curve(scores, same);
    Ok(VerificationResult {
        scores: scores.to_vec(),
        same: same.to_vec(),
        threshold,
        accuracy: accuracy_at(&eval_s, &eval_y, threshold),
        decisions: scores.iter().map(|&s| s >= threshold).collect(),
        auc: auc(&roc),
        roc,
    })
}

/// Scores every pair `(a_i, b_i)` with [`similarity`] and verifies them.
pub fn verify_pairs(a: &[Signature], b: &[Signature], same: &[bool]) -> Result<VerificationResult> {
    if a.len() != b.len() || a.len() != same.len() {
        return Err(Error::Shape(format!(
            "pair lists of lengths {}, {}, {}",
            a.len(),
            b.len(),
            same.len()
        )));
    }
    let scores = a.iter().zip(b).map(|(x, y)| similarity(x, y)).collect::<Result<Vec<_>>>()?;
    verify_scores(&scores, same)
}

/// Tiled contrast-limited histogram equalization settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaheOptions {
    pub width: usize,
    pub height: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Per-bin count limit as a multiple of the mean bin count; excess is
    /// spread evenly over all bins. `f64::INFINITY` disables clipping.
    pub clip_limit: f64,
    pub bins: usize,
}

impl ClaheOptions {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            tiles_x: 2,
            tiles_y: 2,
            clip_limit: 2.0,
            bins: 64,
        }
    }
}

/// Pixel span `[start, end)` of tile `t` out of `n` over `len` pixels.
fn tile_span(t: usize, n: usize, len: usize) -> (usize, usize) {
    (t * len / n, (t + 1) * len / n)
}

/// Neighbouring tiles and the weight of the second one for a pixel
/// coordinate, blending linearly between tile centres.
fn blend(x: usize, n: usize, len: usize) -> (usize, usize, f64) {
    let centre = |t: usize| {
        let (a, b) = tile_span(t, n, len);
        0.5 * (a + b - 1) as f64
    };
    let xf = x as f64;
    if n == 1 || xf <= centre(0) {
        return (0, 0, 0.0);
    }
    if xf >= centre(n - 1) {
        return (n - 1, n - 1, 0.0);
    }
    let mut t = 0;
    while centre(t + 1) < xf {
        t += 1;
    }
    let w = (xf - centre(t)) / (centre(t + 1) - centre(t));
    (t, t + 1, w)
}

/// Tiled CLAHE-style normalization of an image stored with pixel `(x, y)`
/// at `x + width · y`.
///
/// Intensities are binned over the image's own range. Each tile gets a
/// clipped-histogram equalization map `(cdf(b) − cdf_min) / (N − cdf_min)`
/// (the identity map `b / (bins − 1)` when the tile holds a single bin),
/// and every pixel blends the maps of its neighbouring tiles bilinearly.
/// Output lies in `[0, 1]`; a constant image is returned unchanged.
pub fn preprocess(image: &[f64], opts: &ClaheOptions) -> Result<Vec<f64>> {
    let ClaheOptions {
        width,
        height,
        tiles_x,
        tiles_y,
        clip_limit,
        bins,
    } = *opts;
    if width == 0 || height == 0 || image.len() != width * height {
        return Err(Error::Shape(format!(
            "image of {} pixels is not {}x{}",
            image.len(),
            width,
            height
        )));
    }
    if tiles_x == 0 || tiles_y == 0 || tiles_x > width || tiles_y > height {
        return Err(Error::InvalidArgument(format!(
            "{tiles_x}x{tiles_y} tiles do not fit a {width}x{height} image"
        )));
    }
    if bins < 2 || clip_limit.is_nan() || clip_limit <= 0.0 {
        return Err(Error::InvalidArgument("need at least 2 bins and a positive clip limit".into()));
    }
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite pixel".into()));
    }
    let lo = image.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = image.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(image.to_vec());
    }
    let bin_of = |v: f64| (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1);
    let mut maps = vec![vec![0.0; bins]; tiles_x * tiles_y];
    for ty in 0..tiles_y {
        let (y0, y1) = tile_span(ty, tiles_y, height);
        for tx in 0..tiles_x {
            let (x0, x1) = tile_span(tx, tiles_x, width);
            let mut hist = vec![0.0; bins];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bin_of(image[x + width * y])] += 1.0;
                }
            }
            let n = ((x1 - x0) * (y1 - y0)) as f64;
            if clip_limit.is_finite() {
                let limit = clip_limit * n / bins as f64;
                let excess: f64 = hist.iter().map(|h| (h - limit).max(0.0)).sum();
                for h in hist.iter_mut() {
                    *h = h.min(limit) + excess / bins as f64;
                }
            }
            let mut cdf = Vec::with_capacity(bins);
            let mut acc = 0.0;
            for h in &hist {
                acc += h;
                cdf.push(acc);
            }
            let cdf_min = cdf.iter().copied().find(|&c| c > 0.0).unwrap_or(0.0);
            let map = &mut maps[tx + tiles_x * ty];
            if acc - cdf_min <= 0.0 {
                for (b, m) in map.iter_mut().enumerate() {
                    *m = b as f64 / (bins - 1) as f64;
                }
            } else {
                for (m, c) in map.iter_mut().zip(&cdf) {
                    *m = ((c - cdf_min) / (acc - cdf_min)).clamp(0.0, 1.0);
                }
            }
        }
    }
    let mut out = vec![0.0; image.len()];
    for y in 0..height {
        let (ya, yb, wy) = blend(y, tiles_y, height);
        for x in 0..width {
            let (xa, xb, wx) = blend(x, tiles_x, width);
            let b = bin_of(image[x + width * y]);
            let m = |tx: usize, ty: usize| maps[tx + tiles_x * ty][b];
            out[x + width * y] = (1.0 - wy) * ((1.0 - wx) * m(xa, ya) + wx * m(xb, ya))
                + wy * ((1.0 - wx) * m(xa, yb) + wx * m(xb, yb));
        }
    }
    Ok(out)
}
