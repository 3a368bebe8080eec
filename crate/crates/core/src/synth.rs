//! Seeded factorial ensembles with planted multilinear structure.

use crate::decomposition::TuckerModel;
use crate::error::{Error, Result};
use crate::random::{gaussian_tensor, orthonormal_matrix, seeded};
use crate::recognition::LabeledEnsemble;
use crate::tensor::{frobenius_norm, multi_mode_product, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    /// Extents `I_0, I_1, …, I_C` (measurements, people, views, illuminations, …).
    pub dims: Vec<usize>,
    /// Planted multilinear ranks, one per mode.
    pub ranks: Vec<usize>,
    /// Additive gaussian noise, relative to the RMS of the clean data.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dims: vec![64, 10, 6, 6],
            ranks: vec![36, 4, 3, 3],
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub ensemble: LabeledEnsemble,
    /// Planted factors: gaussian core and orthonormal mode matrices.
    pub truth: TuckerModel,
}

fn mode_labels(mode: usize, n: usize) -> Vec<String> {
    let prefix = match mode {
        1 => "p".to_string(),
        2 => "v".to_string(),
        3 => "l".to_string(),
        m => format!("f{m}_"),
    };
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// `D = Z ×_0 U_0 ×_1 U_1 … ×_C U_C (+ noise)` with a gaussian core `Z` and
/// seeded orthonormal `U_m`.
pub fn synth_ensemble(cfg: &SynthConfig) -> Result<SynthData> {
    if cfg.dims.len() < 2 || cfg.dims.len() != cfg.ranks.len() {
        return Err(Error::Shape("need matching dims and ranks for at least two modes".into()));
    }
    for (m, (&n, &r)) in cfg.dims.iter().zip(&cfg.ranks).enumerate() {
        if r == 0 || r > n {
            return Err(Error::RankOutOfRange { mode: m, rank: r, max: n });
        }
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::InvalidArgument("noise must be a nonnegative number".into()));
    }
    let mut rng = seeded(cfg.seed);
    let core = gaussian_tensor(&mut rng, &cfg.ranks);
    let mats: Vec<Matrix> = cfg
        .dims
        .iter()
        .zip(&cfg.ranks)
        .map(|(&n, &r)| orthonormal_matrix(&mut rng, n, r))
        .collect();
    let refs: Vec<Option<&Matrix>> = mats.iter().map(Some).collect();
    let mut d = multi_mode_product(&core, &refs)?;
    if cfg.noise > 0.0 {
        let rms = frobenius_norm(&d) / (d.len() as f64).sqrt();
        let e = gaussian_tensor(&mut rng, &cfg.dims);
        d.add_assign(&e.scale(cfg.noise * rms))?;
    }
    let labels = cfg.dims.iter().enumerate().skip(1).map(|(m, &n)| mode_labels(m, n)).collect();
    Ok(SynthData {
        ensemble: LabeledEnsemble::new(d, labels)?,
        truth: TuckerModel {
            core,
            mode_matrices: mats,
            mean: None,
        },
    })
}
