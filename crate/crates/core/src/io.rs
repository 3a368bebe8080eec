//! On-disk formats.
//!
//! Tensors use the TNSR binary layout: magic `TNSR`, `u16` version, `u16`
//! order, `order` × `u64` extents, then the `f64` entries in storage order
//! (mode 0 fastest), all little-endian.
//!
//! Model archives are directories holding `manifest.json` plus one TNSR
//! file per factor.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decomposition::{LossTrace, TuckerModel, SIGN_CONVENTION_VERSION};
use crate::error::{Error, Result};
use crate::hierarchy::{BankSpec, HierarchicalModel, SegmentFilterBank, SegmentModel};
use crate::tensor::{matrixize, DenseTensor, Matrix};

pub const TNSR_MAGIC: &[u8; 4] = b"TNSR";
pub const TNSR_VERSION: u16 = 1;
pub const MANIFEST: &str = "manifest.json";

pub fn write_tnsr<W: Write>(mut w: W, t: &DenseTensor) -> Result<()> {
    let order = u16::try_from(t.order()).map_err(|_| Error::Format("tensor order exceeds u16".into()))?;
    let mut buf = Vec::with_capacity(8 + 8 * t.order() + 8 * t.len());
    buf.extend_from_slice(TNSR_MAGIC);
    buf.extend_from_slice(&TNSR_VERSION.to_le_bytes());
    buf.extend_from_slice(&order.to_le_bytes());
    for &n in t.dims() {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_tnsr<R: Read>(mut r: R) -> Result<DenseTensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_tnsr(&bytes)
}

pub fn parse_tnsr(bytes: &[u8]) -> Result<DenseTensor> {
    if bytes.len() < 8 || &bytes[..4] != TNSR_MAGIC {
        return Err(Error::Format("missing TNSR magic".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != TNSR_VERSION {
        return Err(Error::Format(format!("unsupported TNSR version {version}")));
    }
    let order = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    if order == 0 {
        return Err(Error::Format("TNSR order must be at least 1".into()));
    }
    let header = 8 + 8 * order;
    if bytes.len() < header {
        return Err(Error::Format("truncated TNSR header".into()));
    }
    let mut dims = Vec::with_capacity(order);
    let mut count: usize = 1;
    for k in 0..order {
        let raw: [u8; 8] = bytes[8 + 8 * k..16 + 8 * k].try_into().expect("8 bytes");
        let n = usize::try_from(u64::from_le_bytes(raw)).map_err(|_| Error::Format("extent overflows usize".into()))?;
        count = count
            .checked_mul(n)
            .ok_or_else(|| Error::Format("element count overflows".into()))?;
        dims.push(n);
    }
    let expected = count
        .checked_mul(8)
        .and_then(|b| b.checked_add(header))
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "TNSR payload is {} bytes, header implies {}",
            bytes.len() - header,
            expected - header
        )));
    }
    let data = bytes[header..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    DenseTensor::new(dims, data)
}

pub fn save_tnsr(path: &Path, t: &DenseTensor) -> Result<()> {
    let mut buf = Vec::new();
    write_tnsr(&mut buf, t)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_tnsr(path: &Path) -> Result<DenseTensor> {
    parse_tnsr(&fs::read(path)?)
}

fn save_matrix(path: &Path, m: &Matrix) -> Result<()> {
    save_tnsr(path, &DenseTensor::from_matrix(m))
}

fn load_matrix(path: &Path, rows: usize, cols: usize) -> Result<Matrix> {
    let t = load_tnsr(path)?;
    if t.dims() != [rows, cols] {
        return Err(Error::Format(format!(
            "{} holds {:?}, expected [{rows}, {cols}]",
            path.display(),
            t.dims()
        )));
    }
    matrixize(&t, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchiveKind {
    Tucker,
    Hierarchical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentEntry {
    pub ranks: Vec<usize>,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub iterations: usize,
    pub converged: bool,
    pub losses: Vec<f64>,
}

impl From<&LossTrace> for ConvergenceRecord {
    fn from(t: &LossTrace) -> Self {
        Self {
            iterations: t.iterations,
            converged: t.converged,
            losses: t.values.clone(),
        }
    }
}

/// Optional training metadata stored with a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchiveExtras {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub person_labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: ArchiveKind,
    pub order: usize,
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ranks: Vec<usize>,
    pub has_mean: bool,
    pub sign_convention_version: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<SegmentEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bank: Option<BankSpec>,
    #[serde(flatten)]
    pub extras: ArchiveExtras,
}

impl Manifest {
    fn check(&self) -> Result<()> {
        if self.sign_convention_version != SIGN_CONVENTION_VERSION {
            return Err(Error::Format(format!(
                "archive uses sign convention {}, this build reads {}",
                self.sign_convention_version, SIGN_CONVENTION_VERSION
            )));
        }
        if self.dims.len() != self.order || self.order == 0 {
            return Err(Error::Format("manifest order and dims disagree".into()));
        }
        Ok(())
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    m.check()?;
    Ok(m)
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

fn save_mean(dir: &Path, mean: &Option<Vec<f64>>) -> Result<()> {
    if let Some(m) = mean {
        save_tnsr(&dir.join("mean.tnsr"), &DenseTensor::new(vec![m.len()], m.clone())?)?;
    }
    Ok(())
}

fn load_mean(dir: &Path, manifest: &Manifest) -> Result<Option<Vec<f64>>> {
    if !manifest.has_mean {
        return Ok(None);
    }
    let t = load_tnsr(&dir.join("mean.tnsr"))?;
    if t.dims() != [manifest.dims[0]] {
        return Err(Error::Format("mean length does not match the measurement mode".into()));
    }
    Ok(Some(t.into_data()))
}

pub fn save_tucker(dir: &Path, model: &TuckerModel, extras: &ArchiveExtras) -> Result<()> {
    fs::create_dir_all(dir)?;
    save_tnsr(&dir.join("core.tnsr"), &model.core)?;
    for (m, u) in model.mode_matrices.iter().enumerate() {
        save_matrix(&dir.join(format!("U{m}.tnsr")), u)?;
    }
    save_mean(dir, &model.mean)?;
    write_manifest(
        dir,
        &Manifest {
            kind: ArchiveKind::Tucker,
            order: model.order(),
            dims: model.dims(),
            ranks: model.ranks(),
            has_mean: model.mean.is_some(),
            sign_convention_version: SIGN_CONVENTION_VERSION,
            segments: Vec::new(),
            bank: None,
            extras: extras.clone(),
        },
    )
}

pub fn load_tucker(dir: &Path) -> Result<(TuckerModel, Manifest)> {
    let manifest = read_manifest(dir)?;
    if manifest.kind != ArchiveKind::Tucker {
        return Err(Error::Format("archive does not hold a Tucker model".into()));
    }
    if manifest.ranks.len() != manifest.order {
        return Err(Error::Format("manifest ranks do not match its order".into()));
    }
    let core = load_tnsr(&dir.join("core.tnsr"))?;
    if core.dims() != manifest.ranks.as_slice() {
        return Err(Error::Format(format!("core is {:?}, manifest says {:?}", core.dims(), manifest.ranks)));
    }
    let mode_matrices = (0..manifest.order)
        .map(|m| load_matrix(&dir.join(format!("U{m}.tnsr")), manifest.dims[m], manifest.ranks[m]))
        .collect::<Result<Vec<_>>>()?;
    let mean = load_mean(dir, &manifest)?;
    Ok((
        TuckerModel {
            core,
            mode_matrices,
            mean,
        },
        manifest,
    ))
}

pub fn save_hierarchical(dir: &Path, model: &HierarchicalModel, extras: &ArchiveExtras) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut segments = Vec::with_capacity(model.segments.len());
    for (s, seg) in model.segments.iter().enumerate() {
        if let Some(core) = &seg.core {
            save_tnsr(&dir.join(format!("seg{s}_core.tnsr")), core)?;
            for (c, u) in seg.mode_matrices.iter().enumerate() {
                save_matrix(&dir.join(format!("seg{s}_U{c}.tnsr")), u)?;
            }
        }
        segments.push(SegmentEntry {
            ranks: seg.ranks(),
            active: seg.is_active(),
        });
    }
    if let BankSpec::General { .. } = model.bank.spec() {
        for s in 0..model.bank.len() {
            save_matrix(&dir.join(format!("bank_H{s}.tnsr")), &model.bank.matrix(s))?;
        }
    }
    save_mean(dir, &model.mean)?;
    write_manifest(
        dir,
        &Manifest {
            kind: ArchiveKind::Hierarchical,
            order: model.order(),
            dims: model.dims.clone(),
            ranks: Vec::new(),
            has_mean: model.mean.is_some(),
            sign_convention_version: SIGN_CONVENTION_VERSION,
            segments,
            bank: Some(model.bank.spec().clone()),
            extras: extras.clone(),
        },
    )
}

pub fn load_hierarchical(dir: &Path) -> Result<(HierarchicalModel, Manifest)> {
    let manifest = read_manifest(dir)?;
    if manifest.kind != ArchiveKind::Hierarchical {
        return Err(Error::Format("archive does not hold a hierarchical model".into()));
    }
    let spec = manifest
        .bank
        .as_ref()
        .ok_or_else(|| Error::Format("hierarchical archive lacks a bank".into()))?;
    let dense = match spec {
        BankSpec::General { dim, count } => Some(
            (0..*count)
                .map(|s| load_matrix(&dir.join(format!("bank_H{s}.tnsr")), *dim, *dim))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };
    let bank = SegmentFilterBank::from_spec(spec, dense).map_err(|e| Error::Format(format!("bank: {e}")))?;
    if bank.len() != manifest.segments.len() || bank.dim() != manifest.dims[0] {
        return Err(Error::Format("bank does not match the segment list".into()));
    }
    let segments = manifest
        .segments
        .iter()
        .enumerate()
        .map(|(s, entry)| {
            if !entry.active {
                return Ok(SegmentModel::inert(&manifest.dims));
            }
            if entry.ranks.len() != manifest.order {
                return Err(Error::Format(format!("segment {s} ranks do not match the order")));
            }
            let core = load_tnsr(&dir.join(format!("seg{s}_core.tnsr")))?;
            if core.dims() != entry.ranks.as_slice() {
                return Err(Error::Format(format!("segment {s} core has the wrong shape")));
            }
            let mode_matrices = (0..manifest.order)
                .map(|c| load_matrix(&dir.join(format!("seg{s}_U{c}.tnsr")), manifest.dims[c], entry.ranks[c]))
                .collect::<Result<Vec<_>>>()?;
            Ok(SegmentModel {
                core: Some(core),
                mode_matrices,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = load_mean(dir, &manifest)?;
    Ok((
        HierarchicalModel {
            dims: manifest.dims.clone(),
            segments,
            bank,
            mean,
        },
        manifest,
    ))
}
