//! Occlusion benchmark: PCA vs global vs compositional verification on a
//! seeded part-structured synthetic face ensemble.
//!
//! Each image of `width × height` pixels is split into horizontal bands.
//! Band `s` carries its own extended core `T_s` (zero outside the band)
//! and every person has an independent coefficient vector per band, while
//! view and illumination vectors are shared by all bands:
//!
//! ```text
//! d_{p,v,l} = Σ_s T_s ×_P a_{p,s} ×_V u_v ×_L u_l + noise
//! ```
//!
//! Models are trained on one set of people and verified on pairs of a
//! disjoint set. In every pair the second image (the probe) has a
//! contiguous block of `round(occlusion · I_0)` pixels, at a seeded random
//! start, set to zero.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::decomposition::{pca_baseline, PcaModel};
use crate::error::{Error, Result};
use crate::hierarchy::{make_segmentation_bank, ChtfOptions};
use crate::random::{gaussian_tensor, gaussian_vec, seeded, unit_vec, Rng};
use crate::recognition::{
    segment_weights, similarity, train_compositional, train_global, verify_scores, LabeledEnsemble, Recognizer,
    RocPoint, Signature,
};
use crate::tensor::{multi_mode_product, DenseTensor, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Pca,
    Global,
    Compositional,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Pca, Method::Global, Method::Compositional];

    pub fn name(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Global => "global",
            Method::Compositional => "compositional",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(Method::Pca),
            "global" => Ok(Method::Global),
            "compositional" => Ok(Method::Compositional),
            other => Err(Error::InvalidArgument(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub seed: u64,
    pub reps: usize,
    pub occlusion: f64,
    pub methods: Vec<Method>,
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub train_people: usize,
    pub test_people: usize,
    pub views: usize,
    pub illums: usize,
    pub person_rank: usize,
    pub view_rank: usize,
    pub illum_rank: usize,
    /// Spread of view and illumination vectors around a common direction.
    pub factor_spread: f64,
    /// Additive gaussian noise relative to the RMS of the clean images.
    pub noise: f64,
    pub pairs: usize,
    pub max_iters: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            reps: 10,
            occlusion: 0.25,
            methods: Method::ALL.to_vec(),
            width: 16,
            height: 16,
            bands: 4,
            train_people: 20,
            test_people: 20,
            views: 4,
            illums: 4,
            person_rank: 5,
            view_rank: 3,
            illum_rank: 3,
            factor_spread: 3.0,
            noise: 0.01,
            pairs: 200,
            max_iters: 5,
        }
    }
}

impl BenchConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.reps == 0 || self.pairs < 2 {
            return bad("need at least one repetition and two pairs");
        }
        if !(0.0..=1.0).contains(&self.occlusion) {
            return bad("occlusion must lie in [0, 1]");
        }
        if self.methods.is_empty() {
            return bad("no methods selected");
        }
        if self.bands == 0 || self.bands > self.height {
            return bad("bands must be between 1 and the image height");
        }
        if self.train_people < 2 || self.test_people < 2 || self.views == 0 || self.illums == 0 {
            return bad("need at least two people per split and one view and illumination");
        }
        if self.person_rank == 0 || self.view_rank > self.views || self.illum_rank > self.illums {
            return bad("factor ranks exceed their extents");
        }
        if self.view_rank == 0 || self.illum_rank == 0 {
            return bad("factor ranks must be positive");
        }
        if self.views * self.illums < 2 {
            return bad("same-person pairs need two distinct cells");
        }
        let causal = self.person_rank * self.view_rank * self.illum_rank;
        let smallest_band = self.width * (self.height / self.bands);
        if causal > smallest_band {
            return bad("band too small for the causal ranks");
        }
        if !(self.noise >= 0.0 && self.factor_spread >= 0.0) {
            return bad("noise and spread must be nonnegative");
        }
        Ok(())
    }

    fn pixels(&self) -> usize {
        self.width * self.height
    }

    /// Pixel indices of every horizontal band.
    pub fn band_regions(&self) -> Vec<Vec<usize>> {
        (0..self.bands)
            .map(|s| {
                let (y0, y1) = (s * self.height / self.bands, (s + 1) * self.height / self.bands);
                (self.width * y0..self.width * y1).collect()
            })
            .collect()
    }
}

/// One verification pair of the test split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub gallery: (usize, usize, usize),
    pub probe: (usize, usize, usize),
    pub same: bool,
    pub occlusion_start: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepResult {
    pub seed: u64,
    pub method: Method,
    pub accuracy: f64,
    pub auc: f64,
    pub threshold: f64,
    pub roc: Vec<RocPoint>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub accuracy_mean: f64,
    /// Population standard deviation over repetitions.
    pub accuracy_std: f64,
    pub auc_mean: f64,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub config: BenchConfig,
    /// SHA-256 of the pair lists of all repetitions; every method is
    /// scored on exactly these pairs.
    pub pair_hash: String,
    pub summaries: Vec<MethodSummary>,
    /// Per repetition (seed order), per method (selection order).
    pub reps: Vec<Vec<RepResult>>,
}

impl BenchmarkReport {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// Deterministic CSV: one row per method, no timing columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,accuracy_mean,accuracy_std,auc_mean,reps,occlusion,seed,pair_hash\n");
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{},{},{},{}",
                s.method.name(),
                s.accuracy_mean,
                s.accuracy_std,
                s.auc_mean,
                self.config.reps,
                self.config.occlusion,
                self.config.seed,
                self.pair_hash
            );
        }
        out
    }

    /// Wall-clock seconds per method, summed over repetitions.
    pub fn timing_csv(&self) -> String {
        let mut out = String::from("method,runtime_secs\n");
        for s in &self.summaries {
            let _ = writeln!(out, "{},{:.3}", s.method.name(), s.runtime_secs);
        }
        out
    }
}

/// Generative factors shared by the train and test splits of one
/// repetition.
struct World {
    cores: Vec<DenseTensor>,
    views: Matrix,
    illums: Matrix,
    scale: f64,
}

fn spread_rows(rng: &mut Rng, n: usize, rank: usize, spread: f64) -> Matrix {
    let centre = unit_vec(rng, rank);
    let mut m = Matrix::zeros(n, rank);
    for i in 0..n {
        let g = gaussian_vec(rng, rank);
        let v: Vec<f64> = centre.iter().zip(&g).map(|(c, e)| c + spread * e).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (k, x) in v.iter().enumerate() {
            m[(i, k)] = x / norm;
        }
    }
    m
}

impl World {
    fn new(cfg: &BenchConfig, rng: &mut Rng) -> Self {
        let dims = [cfg.pixels(), cfg.person_rank, cfg.view_rank, cfg.illum_rank];
        let cores = cfg
            .band_regions()
            .iter()
            .map(|region| {
                let inner = gaussian_tensor(rng, &[region.len(), dims[1], dims[2], dims[3]]);
                let mut t = DenseTensor::zeros(&dims).expect("valid dims");
                for (row, &px) in region.iter().enumerate() {
                    for r in 0..dims[1] * dims[2] * dims[3] {
                        t.data_mut()[px + dims[0] * r] = inner.data()[row + region.len() * r];
                    }
                }
                t
            })
            .collect();
        let views = spread_rows(rng, cfg.views, cfg.view_rank, cfg.factor_spread);
        let illums = spread_rows(rng, cfg.illums, cfg.illum_rank, cfg.factor_spread);
        Self {
            cores,
            views,
            illums,
            scale: 1.0,
        }
    }

    /// Ensemble of `people` fresh identities with additive noise.
    fn ensemble(&self, cfg: &BenchConfig, rng: &mut Rng, people: usize) -> Result<DenseTensor> {
        let mut d = DenseTensor::zeros(&[cfg.pixels(), people, cfg.views, cfg.illums])?;
        for t in &self.cores {
            let a = crate::random::gaussian_matrix(rng, people, cfg.person_rank);
            d.add_assign(&multi_mode_product(t, &[None, Some(&a), Some(&self.views), Some(&self.illums)])?)?;
        }
        if cfg.noise > 0.0 {
            let rms = crate::tensor::frobenius_norm(&d) / (d.len() as f64).sqrt();
            let e = gaussian_tensor(rng, d.dims());
            d.add_assign(&e.scale(cfg.noise * rms * self.scale))?;
        }
        Ok(d)
    }
}

fn labels(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn make_pairs(cfg: &BenchConfig, rng: &mut Rng) -> Vec<Pair> {
    let block = (cfg.occlusion * cfg.pixels() as f64).round() as usize;
    let cell = |rng: &mut Rng| (rng.random_range(0..cfg.views), rng.random_range(0..cfg.illums));
    (0..cfg.pairs)
        .map(|i| {
            // Alternating same/same/different/different keeps both classes in
            // the even (calibration) and odd (evaluation) halves.
            let same = i % 4 < 2;
            let p = rng.random_range(0..cfg.test_people);
            let q = if same {
                p
            } else {
                (p + rng.random_range(1..cfg.test_people)) % cfg.test_people
            };
            let (v1, l1) = cell(rng);
            let (mut v2, mut l2) = cell(rng);
            while same && (v2, l2) == (v1, l1) {
                (v2, l2) = cell(rng);
            }
            let occlusion_start = rng.random_range(0..=cfg.pixels() - block);
            Pair {
                gallery: (p, v1, l1),
                probe: (q, v2, l2),
                same,
                occlusion_start,
            }
        })
        .collect()
}

fn pair_lines(seed: u64, pairs: &[Pair]) -> String {
    let mut s = String::new();
    for p in pairs {
        let _ = writeln!(
            s,
            "{seed},{},{},{},{},{},{},{},{}",
            p.gallery.0, p.gallery.1, p.gallery.2, p.probe.0, p.probe.1, p.probe.2, p.same as u8, p.occlusion_start
        );
    }
    s
}

enum Trained {
    Pca(PcaModel),
    Tensor(Recognizer),
}

enum Features {
    Pca(Vec<f64>),
    Tensor(Signature),
}

impl Trained {
    fn features(&self, d: &[f64]) -> Result<Features> {
        match self {
            Trained::Pca(m) => m.project(d).map(Features::Pca),
            Trained::Tensor(r) => r.signature(d).map(Features::Tensor),
        }
    }
}

fn score(a: &Features, b: &Features) -> Result<f64> {
    match (a, b) {
        // PCA coefficients carry a meaningful sign: plain cosine.
        (Features::Pca(x), Features::Pca(y)) => {
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nx == 0.0 || ny == 0.0 {
                return Ok(0.0);
            }
            Ok(x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / (nx * ny))
        }
        (Features::Tensor(x), Features::Tensor(y)) => similarity(x, y),
        _ => unreachable!("features of one method"),
    }
}

fn train(method: Method, cfg: &BenchConfig, ens: &LabeledEnsemble) -> Result<Trained> {
    let person_total = (cfg.bands * cfg.person_rank).min(cfg.train_people);
    match method {
        Method::Pca => {
            let d = ens.tensor();
            let n = d.dims()[0];
            let m = Matrix::from_column_slice(n, d.len() / n, d.data());
            let rank = person_total.min(m.ncols()).min(n);
            pca_baseline(&m, rank).map(Trained::Pca)
        }
        Method::Global => {
            let ranks = [person_total, cfg.view_rank, cfg.illum_rank];
            let (model, _) = train_global(ens, Some(&ranks))?;
            Recognizer::from_global(&model, ens.person_labels().to_vec()).map(Trained::Tensor)
        }
        Method::Compositional => {
            let bank = make_segmentation_bank(cfg.pixels(), &cfg.band_regions())?;
            let per_band_people = cfg.person_rank.min(cfg.train_people);
            let total = [
                None,
                Some(cfg.bands * per_band_people),
                Some(cfg.bands * cfg.view_rank),
                Some(cfg.bands * cfg.illum_rank),
            ];
            let opts = ChtfOptions {
                max_iters: cfg.max_iters,
                tol: None,
                center: false,
            };
            let (model, _) = train_compositional(ens, &bank, &total, &opts)?;
            let weights = segment_weights(ens, &bank)?;
            Recognizer::new(model, weights, ens.person_labels().to_vec()).map(Trained::Tensor)
        }
    }
}

fn run_rep(cfg: &BenchConfig, seed: u64) -> Result<(Vec<Pair>, Vec<RepResult>)> {
    let mut rng = seeded(seed);
    let world = World::new(cfg, &mut rng);
    let train_t = world.ensemble(cfg, &mut rng, cfg.train_people)?;
    let test_t = world.ensemble(cfg, &mut rng, cfg.test_people)?;
    let pairs = make_pairs(cfg, &mut rng);
    let train_ens = LabeledEnsemble::new(
        train_t,
        vec![labels("p", cfg.train_people), labels("v", cfg.views), labels("l", cfg.illums)],
    )?;
    let test_ens = LabeledEnsemble::unlabeled(test_t)?;
    let block = (cfg.occlusion * cfg.pixels() as f64).round() as usize;
    let results = cfg
        .methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let model = train(method, cfg, &train_ens)?;
            let mut gallery: HashMap<(usize, usize, usize), Features> = HashMap::new();
            let mut scores = Vec::with_capacity(pairs.len());
            for p in &pairs {
                if let std::collections::hash_map::Entry::Vacant(e) = gallery.entry(p.gallery) {
                    let (a, v, l) = p.gallery;
                    let f = model.features(&test_ens.observation(&[a, v, l]))?;
                    e.insert(f);
                }
                let (a, v, l) = p.probe;
                let mut probe = test_ens.observation(&[a, v, l]);
                probe[p.occlusion_start..p.occlusion_start + block].iter_mut().for_each(|x| *x = 0.0);
                let s = match model.features(&probe) {
                    Ok(f) => score(&gallery[&p.gallery], &f)?,
                    // A probe with no usable segment matches nothing.
                    Err(Error::Numeric(_)) => 0.0,
                    Err(e) => return Err(e),
                };
                scores.push(s);
            }
            let same: Vec<bool> = pairs.iter().map(|p| p.same).collect();
            let v = verify_scores(&scores, &same)?;
            Ok(RepResult {
                seed,
                method,
                accuracy: v.accuracy,
                auc: v.auc,
                threshold: v.threshold,
                roc: v.roc,
                runtime_secs: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pairs, results))
}

/// Runs every repetition (seeds `seed, seed + 1, …`) in parallel and merges
/// the results in seed order.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let seeds: Vec<u64> = (0..cfg.reps as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    let outcomes = seeds
        .par_iter()
        .map(|&s| run_rep(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let mut hasher = Sha256::new();
    let mut reps = Vec::with_capacity(outcomes.len());
    for (seed, (pairs, results)) in seeds.iter().zip(outcomes) {
        hasher.update(pair_lines(*seed, &pairs).as_bytes());
        reps.push(results);
    }
    let summaries = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(k, &method)| {
            let acc: Vec<f64> = reps.iter().map(|r| r[k].accuracy).collect();
            let n = acc.len() as f64;
            let mean = acc.iter().sum::<f64>() / n;
            let var = acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
            MethodSummary {
                method,
                accuracy_mean: mean,
                accuracy_std: var.sqrt(),
                auc_mean: reps.iter().map(|r| r[k].auc).sum::<f64>() / n,
                runtime_secs: reps.iter().map(|r| r[k].runtime_secs).sum(),
            }
        })
        .collect();
    Ok(BenchmarkReport {
        config: cfg.clone(),
        pair_hash: hex::encode(hasher.finalize()),
        summaries,
        reps,
    })
}
