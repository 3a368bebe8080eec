//! Flag values merged from the command line and an optional `key=value`
//! config file. Command-line flags win over the file, the file wins over
//! built-in defaults.

use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;

use crate::error::{io_err, CliError, CliResult};

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Flat `key=value` file supplying any of the flags below.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Input TNSR tensor, or signature CSV for `verify`.
    #[arg(long, global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Output directory, or signature CSV for `project`.
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Model archive directory for `project`.
    #[arg(long, global = true, value_name = "DIR")]
    pub model: Option<PathBuf>,
    /// Pairs CSV (`id_a,id_b,same`) for `verify`.
    #[arg(long, global = true, value_name = "FILE")]
    pub pairs: Option<PathBuf>,
    /// `identity`, `bands:N`, `segments:0-3,4-7` or `pyramid:W,H,LEVELS,gaussian|laplacian`.
    #[arg(long, global = true)]
    pub bank: Option<String>,
    /// Comma-separated ranks per mode; `*` keeps a mode unchanged.
    #[arg(long, global = true)]
    pub ranks: Option<String>,
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,
    /// Absolute ALS convergence tolerance (default `1e-6 · ‖D‖²`).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Fraction of probe pixels zeroed in `bench`.
    #[arg(long, global = true)]
    pub occlusion: Option<f64>,
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    /// `global` or `compositional` for `train`; comma list of `pca,global,compositional` for `bench`.
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Comma-separated extents for `synth`.
    #[arg(long, global = true)]
    pub dims: Option<String>,
    /// Relative additive noise for `synth` and `bench`.
    #[arg(long, global = true)]
    pub noise: Option<f64>,
    /// Subtract the measurement-mode mean before factorizing.
    #[arg(long, global = true)]
    pub center: Option<bool>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("config key `{key}` has invalid value `{value}`")))
}

fn fill<T>(slot: &mut Option<T>, value: CliResult<T>) -> CliResult<()> {
    let v = value?;
    if slot.is_none() {
        *slot = Some(v);
    }
    Ok(())
}

impl Flags {
    /// Fills every flag left unset on the command line from the config
    /// file, if one was given.
    pub fn merge_config(mut self) -> CliResult<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("{}:{}: expected key=value", path.display(), n + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "input" => fill(&mut self.input, Ok(value.into()))?,
                "output" => fill(&mut self.output, Ok(value.into()))?,
                "model" => fill(&mut self.model, Ok(value.into()))?,
                "pairs" => fill(&mut self.pairs, Ok(value.into()))?,
                "bank" => fill(&mut self.bank, Ok(value.into()))?,
                "ranks" => fill(&mut self.ranks, Ok(value.into()))?,
                "max-iters" => fill(&mut self.max_iters, parse(key, value))?,
                "tol" => fill(&mut self.tol, parse(key, value))?,
                "seed" => fill(&mut self.seed, parse(key, value))?,
                "occlusion" => fill(&mut self.occlusion, parse(key, value))?,
                "reps" => fill(&mut self.reps, parse(key, value))?,
                "method" => fill(&mut self.method, Ok(value.into()))?,
                "dims" => fill(&mut self.dims, Ok(value.into()))?,
                "noise" => fill(&mut self.noise, parse(key, value))?,
                "center" => fill(&mut self.center, parse(key, value))?,
                other => {
                    return Err(CliError::Usage(format!(
                        "{}:{}: unknown key `{other}`",
                        path.display(),
                        n + 1
                    )))
                }
            }
        }
        Ok(self)
    }

    pub fn require_input(&self) -> CliResult<&PathBuf> {
        self.input.as_ref().ok_or_else(|| CliError::Usage("--input is required".into()))
    }

    pub fn require_output(&self) -> CliResult<&PathBuf> {
        self.output.as_ref().ok_or_else(|| CliError::Usage("--output is required".into()))
    }

    pub fn tol(&self) -> CliResult<Option<f64>> {
        match self.tol {
            Some(t) if !(t > 0.0 && t.is_finite()) => Err(CliError::Usage("--tol must be positive".into())),
            t => Ok(t),
        }
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters.unwrap_or(50)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

/// `3,*,2` → `[Some(3), None, Some(2)]`.
pub fn parse_ranks(spec: &str) -> CliResult<Vec<Option<usize>>> {
    spec.split(',')
        .map(|s| match s.trim() {
            "*" => Ok(None),
            v => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("invalid rank `{v}` in `{spec}`"))),
        })
        .collect()
}

pub fn parse_list<T: FromStr>(flag: &str, spec: &str) -> CliResult<Vec<T>> {
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid {flag} entry `{s}`")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum BankArg {
    Identity,
    Bands(usize),
    Segments(Vec<Vec<usize>>),
    Pyramid {
        width: usize,
        height: usize,
        levels: usize,
        mode: chtf::hierarchy::PyramidMode,
    },
}

impl FromStr for BankArg {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        let bad = || CliError::Usage(format!("invalid bank `{s}`"));
        if s == "identity" {
            return Ok(BankArg::Identity);
        }
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "bands" => Ok(BankArg::Bands(rest.parse().map_err(|_| bad())?)),
            "segments" => {
                let regions = rest
                    .split(',')
                    .map(|item| match item.split_once('-') {
                        Some((a, b)) => {
                            let (a, b): (usize, usize) =
                                (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
                            if a > b {
                                return Err(bad());
                            }
                            Ok((a..=b).collect())
                        }
                        None => Ok(vec![item.parse().map_err(|_| bad())?]),
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                Ok(BankArg::Segments(regions))
            }
            "pyramid" => {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() != 4 {
                    return Err(bad());
                }
                Ok(BankArg::Pyramid {
                    width: parts[0].parse().map_err(|_| bad())?,
                    height: parts[1].parse().map_err(|_| bad())?,
                    levels: parts[2].parse().map_err(|_| bad())?,
                    mode: parts[3].parse().map_err(|_| bad())?,
                })
            }
            _ => Err(bad()),
        }
    }
}

impl BankArg {
    pub fn build(&self, dim: usize) -> CliResult<chtf::hierarchy::SegmentFilterBank> {
        use chtf::hierarchy::{make_pyramid_bank, make_segmentation_bank, SegmentFilterBank};
        let bank = match self {
            BankArg::Identity => SegmentFilterBank::identity(dim),
            BankArg::Bands(n) => {
                if *n == 0 || *n > dim {
                    return Err(CliError::Usage(format!("cannot split {dim} measurements into {n} bands")));
                }
                let regions: Vec<Vec<usize>> = (0..*n).map(|s| (s * dim / n..(s + 1) * dim / n).collect()).collect();
                make_segmentation_bank(dim, &regions)?
            }
            BankArg::Segments(regions) => make_segmentation_bank(dim, regions)?,
            BankArg::Pyramid {
                width,
                height,
                levels,
                mode,
            } => make_pyramid_bank(*width, *height, *levels, *mode)?,
        };
        if bank.dim() != dim {
            return Err(CliError::Usage(format!(
                "bank covers {} measurements, data has {dim}",
                bank.dim()
            )));
        }
        Ok(bank)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_and_rank_syntax() {
        assert_eq!("identity".parse::<BankArg>().unwrap(), BankArg::Identity);
        assert_eq!(
            "segments:0-2,3,4-5".parse::<BankArg>().unwrap(),
            BankArg::Segments(vec![vec![0, 1, 2], vec![3], vec![4, 5]])
        );
        assert!("segments:3-1".parse::<BankArg>().is_err());
        assert!("pyramid:4,4,2".parse::<BankArg>().is_err());
        assert!("pyramid:4,4,2,laplacian".parse::<BankArg>().is_ok());
        assert_eq!(parse_ranks("3,*, 2").unwrap(), vec![Some(3), None, Some(2)]);
        assert!(parse_ranks("3,x").is_err());
        assert_eq!(BankArg::Bands(3).build(7).unwrap().len(), 3);
    }
}
