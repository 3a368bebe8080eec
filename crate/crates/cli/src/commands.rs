use std::collections::HashMap;
use std::fs;
use std::path::Path;

use chtf::bench::{run_benchmark, BenchConfig, Method};
use chtf::decomposition::{center, m_mode_svd, m_mode_svd_centered, measurement_mean, reconstruct, tucker_als, AlsOptions, LossTrace};
use chtf::hierarchy::{chtf_als, chtf_reconstruct, ChtfOptions};
use chtf::io::{self, ArchiveExtras, ArchiveKind};
use chtf::recognition::{
    segment_weights, train_compositional, train_global, verify_scores, LabeledEnsemble, Projection, Recognizer,
    RocPoint, Signature,
};
use chtf::synth::{synth_ensemble, SynthConfig};
use chtf::tensor::frobenius_norm;
use chtf::DenseTensor;

use crate::config::{parse_list, parse_ranks, BankArg, Flags};
use crate::error::{at_path, csv_err, io_err, CliError, CliResult};

fn load_tensor(path: &Path) -> CliResult<DenseTensor> {
    io::load_tnsr(path).map_err(|e| at_path(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn bank_arg(flags: &Flags) -> CliResult<BankArg> {
    flags.bank.as_deref().unwrap_or("identity").parse()
}

fn ranks_for(flags: &Flags, order: usize) -> CliResult<Vec<Option<usize>>> {
    match &flags.ranks {
        None => Ok(vec![None; order]),
        Some(s) => {
            let r = parse_ranks(s)?;
            if r.len() != order {
                return Err(CliError::Usage(format!("--ranks has {} entries for an order-{order} tensor", r.len())));
            }
            Ok(r)
        }
    }
}

fn loss_csv(trace: &LossTrace) -> String {
    let mut out = String::from("iteration,loss\n");
    for (i, v) in trace.values.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

fn relative_error(d: &DenseTensor, r: &DenseTensor) -> CliResult<f64> {
    let n = frobenius_norm(d);
    let e = frobenius_norm(&d.sub(r)?);
    Ok(if n > 0.0 { e / n } else { e })
}

/// Tucker (identity bank) or compositional factorization of a TNSR tensor.
pub fn decompose(flags: &Flags) -> CliResult<()> {
    let input = flags.require_input()?;
    let out = flags.require_output()?;
    let d = load_tensor(input)?;
    let ranks = ranks_for(flags, d.order())?;
    let centered = flags.center.unwrap_or(false);
    let bank = bank_arg(flags)?;
    create_dir(out)?;
    let (rel, trace) = if bank == BankArg::Identity {
        let (model, trace) = if ranks.iter().all(Option::is_none) {
            let m = if centered { m_mode_svd_centered(&d)? } else { m_mode_svd(&d)? };
            (m, None)
        } else {
            let full = m_mode_svd(&d)?.ranks();
            let r: Vec<usize> = ranks.iter().zip(&full).map(|(r, f)| r.unwrap_or(*f)).collect();
            let opts = AlsOptions {
                max_iters: flags.max_iters(),
                tol: flags.tol()?,
            };
            if centered {
                let mean = measurement_mean(&d);
                let (mut m, t) = tucker_als(&center(&d, &mean)?, &r, &opts)?;
                m.mean = Some(mean);
                (m, Some(t))
            } else {
                let (m, t) = tucker_als(&d, &r, &opts)?;
                (m, Some(t))
            }
        };
        let extras = ArchiveExtras {
            convergence: trace.as_ref().map(Into::into),
            ..Default::default()
        };
        io::save_tucker(out, &model, &extras).map_err(|e| at_path(out, e))?;
        (relative_error(&d, &reconstruct(&model)?)?, trace)
    } else {
        let bank = bank.build(d.dims()[0])?;
        let opts = ChtfOptions {
            max_iters: flags.max_iters(),
            tol: flags.tol()?,
            center: centered,
        };
        let (model, trace) = chtf_als(&d, &bank, &ranks, &opts)?;
        let extras = ArchiveExtras {
            convergence: Some((&trace).into()),
            ..Default::default()
        };
        io::save_hierarchical(out, &model, &extras).map_err(|e| at_path(out, e))?;
        (relative_error(&d, &chtf_reconstruct(&model)?)?, Some(trace))
    };
    if let Some(t) = &trace {
        write_text(&out.join("loss.csv"), &loss_csv(t))?;
    }
    println!("relative reconstruction error {rel:.3e}");
    Ok(())
}

fn labels_csv(ens: &LabeledEnsemble) -> String {
    let mut out = String::from("mode,index,label\n");
    for (k, labels) in ens.factor_labels().iter().enumerate() {
        for (i, l) in labels.iter().enumerate() {
            out.push_str(&format!("{},{i},{l}\n", k + 1));
        }
    }
    out
}

/// Seeded factorial ensemble with planted factors.
pub fn synth(flags: &Flags) -> CliResult<()> {
    let out = flags.require_output()?;
    let defaults = SynthConfig::default();
    let dims = match &flags.dims {
        Some(s) => parse_list("--dims", s)?,
        None => defaults.dims.clone(),
    };
    let ranks = match &flags.ranks {
        Some(s) => parse_ranks(s)?
            .into_iter()
            .zip(&dims)
            .map(|(r, &n)| r.unwrap_or(n))
            .collect(),
        None if flags.dims.is_none() => defaults.ranks.clone(),
        None => dims.clone(),
    };
    let cfg = SynthConfig {
        dims,
        ranks,
        noise: flags.noise.unwrap_or(0.0),
        seed: flags.seed(),
    };
    let data = synth_ensemble(&cfg).map_err(|e| match e {
        chtf::Error::InvalidArgument(m) => CliError::Usage(m),
        other => other.into(),
    })?;
    create_dir(out)?;
    let path = out.join("ensemble.tnsr");
    io::save_tnsr(&path, data.ensemble.tensor()).map_err(|e| at_path(&path, e))?;
    write_text(&out.join("labels.csv"), &labels_csv(&data.ensemble))?;
    let truth = out.join("truth");
    io::save_tucker(&truth, &data.truth, &ArchiveExtras::default()).map_err(|e| at_path(&truth, e))?;
    Ok(())
}

/// Reads `labels.csv` next to the ensemble if present.
fn load_ensemble(path: &Path) -> CliResult<LabeledEnsemble> {
    let t = load_tensor(path)?;
    let labels_path = path.with_file_name("labels.csv");
    if !labels_path.exists() {
        return Ok(LabeledEnsemble::unlabeled(t)?);
    }
    let mut labels: Vec<Vec<String>> = t.dims()[1..].iter().map(|&n| vec![String::new(); n]).collect();
    let mut rdr = csv::Reader::from_path(&labels_path).map_err(|e| csv_err(&labels_path, e))?;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(&labels_path, e))?;
        let bad = || CliError::Format(format!("{}: bad label row {:?}", labels_path.display(), rec));
        let mode: usize = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let idx: usize = rec.get(1).and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let slot = mode
            .checked_sub(1)
            .and_then(|m| labels.get_mut(m))
            .and_then(|l| l.get_mut(idx))
            .ok_or_else(bad)?;
        *slot = rec.get(2).ok_or_else(bad)?.to_string();
    }
    Ok(LabeledEnsemble::new(t, labels)?)
}

/// Recognition model from a labeled ensemble.
pub fn train(flags: &Flags) -> CliResult<()> {
    let input = flags.require_input()?;
    let out = flags.require_output()?;
    let ens = load_ensemble(input)?;
    let order = ens.tensor().order();
    let ranks = ranks_for(flags, order)?;
    let method = flags.method.as_deref().unwrap_or("compositional");
    let labels = Some(ens.person_labels().to_vec());
    match method {
        "global" => {
            let causal: Option<Vec<usize>> = if ranks[1..].iter().all(Option::is_some) {
                Some(ranks[1..].iter().map(|r| r.unwrap()).collect())
            } else if ranks[1..].iter().all(Option::is_none) {
                None
            } else {
                return Err(CliError::Usage("global training needs all or none of the causal ranks".into()));
            };
            let (model, _) = train_global(&ens, causal.as_deref())?;
            let extras = ArchiveExtras {
                person_labels: labels,
                ..Default::default()
            };
            create_dir(out)?;
            io::save_tucker(out, &model, &extras).map_err(|e| at_path(out, e))?;
        }
        "compositional" => {
            let bank = bank_arg(flags)?.build(ens.tensor().dims()[0])?;
            let opts = ChtfOptions {
                max_iters: flags.max_iters(),
                tol: flags.tol()?,
                center: flags.center.unwrap_or(false),
            };
            let (model, trace) = train_compositional(&ens, &bank, &ranks, &opts)?;
            let extras = ArchiveExtras {
                convergence: Some((&trace).into()),
                weights: Some(segment_weights(&ens, &bank)?),
                person_labels: labels,
            };
            create_dir(out)?;
            io::save_hierarchical(out, &model, &extras).map_err(|e| at_path(out, e))?;
            write_text(&out.join("loss.csv"), &loss_csv(&trace))?;
        }
        other => return Err(CliError::Usage(format!("unknown training method `{other}`"))),
    }
    Ok(())
}

fn load_recognizer(dir: &Path) -> CliResult<Recognizer> {
    let manifest = io::read_manifest(dir).map_err(|e| at_path(dir, e))?;
    let numbered = |n: usize| (0..n).map(|i| i.to_string()).collect::<Vec<_>>();
    let recognizer = match manifest.kind {
        ArchiveKind::Tucker => {
            let (m, man) = io::load_tucker(dir).map_err(|e| at_path(dir, e))?;
            if m.order() < 2 {
                return Err(CliError::Format("model has no person mode".into()));
            }
            let labels = man.extras.person_labels.unwrap_or_else(|| numbered(m.dims()[1]));
            Recognizer::from_global(&m, labels)?
        }
        ArchiveKind::Hierarchical => {
            let (m, man) = io::load_hierarchical(dir).map_err(|e| at_path(dir, e))?;
            if m.order() < 2 {
                return Err(CliError::Format("model has no person mode".into()));
            }
            let s = m.segments.len();
            let weights = man.extras.weights.unwrap_or_else(|| vec![1.0 / s as f64; s]);
            let labels = man.extras.person_labels.unwrap_or_else(|| numbered(m.dims[1]));
            Recognizer::new(m, weights, labels)?
        }
    };
    Ok(recognizer)
}

/// Signature CSV of every observation column of a TNSR tensor.
pub fn project(flags: &Flags) -> CliResult<()> {
    let input = flags.require_input()?;
    let out = flags.require_output()?;
    let model_dir = flags
        .model
        .as_ref()
        .ok_or_else(|| CliError::Usage("--model is required".into()))?;
    let rec = load_recognizer(model_dir)?;
    let obs = load_tensor(input)?;
    let n = rec.model.dims[0];
    if obs.dims()[0] != n {
        return Err(CliError::Format(format!(
            "observations have {} measurements, model expects {n}",
            obs.dims()[0]
        )));
    }
    let segs = rec.model.segments.len();
    let person_dims: Vec<usize> = rec.model.segments.iter().map(|s| s.mode_matrices[1].ncols()).collect();
    let mut header = vec!["id".to_string(), "status".to_string()];
    header.extend((0..segs).map(|s| format!("w{s}")));
    for (s, &k) in person_dims.iter().enumerate() {
        header.extend((0..k).map(|i| format!("s{s}_{i}")));
    }
    header.push("nearest_label".into());
    let mut w = csv::Writer::from_path(out).map_err(|e| csv_err(out, e))?;
    w.write_record(&header).map_err(|e| csv_err(out, e))?;
    for (j, col) in obs.data().chunks(n).enumerate() {
        let mut row = vec![j.to_string()];
        match rec.signature(col) {
            Ok(sig) => {
                row.push("ok".into());
                row.extend(sig.weights.iter().map(|v| v.to_string()));
                for (s, &k) in person_dims.iter().enumerate() {
                    match sig.person(s) {
                        Some(p) => row.extend(p.iter().map(|v| v.to_string())),
                        None => row.extend(std::iter::repeat_n(String::new(), k)),
                    }
                }
                row.push(rec.person_labels[rec.identify(&sig)].clone());
            }
            Err(chtf::Error::Numeric(_)) => {
                row.push("failed".into());
                row.extend(std::iter::repeat_n(String::new(), header.len() - 3));
                row.push(String::new());
            }
            Err(e) => return Err(e.into()),
        }
        w.write_record(&row).map_err(|e| csv_err(out, e))?;
    }
    w.flush().map_err(io_err(out))?;
    Ok(())
}

fn read_signatures(path: &Path) -> CliResult<HashMap<String, Option<Signature>>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let bad = |m: String| CliError::Format(format!("{}: {m}", path.display()));
    if header.get(0) != Some("id") || header.get(1) != Some("status") {
        return Err(bad("signature header must start with id,status".into()));
    }
    let segs = header.iter().filter(|h| h.starts_with('w') && h[1..].parse::<usize>().is_ok()).count();
    let mut columns: Vec<Vec<usize>> = vec![Vec::new(); segs];
    for (i, h) in header.iter().enumerate() {
        if let Some(rest) = h.strip_prefix('s') {
            if let Some((s, _)) = rest.split_once('_') {
                let s: usize = s.parse().map_err(|_| bad(format!("bad column `{h}`")))?;
                columns
                    .get_mut(s)
                    .ok_or_else(|| bad(format!("column `{h}` names a missing segment")))?
                    .push(i);
            }
        }
    }
    let num = |v: &str| v.parse::<f64>().map_err(|_| bad(format!("bad number `{v}`")));
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let sig = match rec.get(1) {
            Some("ok") => {
                let weights = (0..segs).map(|s| num(rec.get(2 + s).unwrap_or_default())).collect::<CliResult<Vec<_>>>()?;
                let segments = columns
                    .iter()
                    .map(|cols| {
                        if cols.iter().any(|&c| rec.get(c).unwrap_or_default().is_empty()) {
                            return Ok(None);
                        }
                        let v = cols.iter().map(|&c| num(&rec[c])).collect::<CliResult<Vec<_>>>()?;
                        Ok(Some(Projection {
                            factors: vec![v],
                            scale: 1.0,
                            zero_response: false,
                            converged: true,
                        }))
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                Some(Signature {
                    segments,
                    weights,
                    person_dims: columns.iter().map(Vec::len).collect(),
                })
            }
            Some("failed") => None,
            other => return Err(bad(format!("unknown status {other:?}"))),
        };
        if out.insert(id.clone(), sig).is_some() {
            return Err(bad(format!("duplicate id `{id}`")));
        }
    }
    Ok(out)
}

fn roc_csv(roc: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in roc {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr, p.tpr));
    }
    out
}

/// Pair verification over a signature CSV.
pub fn verify(flags: &Flags) -> CliResult<()> {
    let input = flags.require_input()?;
    let out = flags.require_output()?;
    let pairs_path = flags
        .pairs
        .as_ref()
        .ok_or_else(|| CliError::Usage("--pairs is required".into()))?;
    let sigs = read_signatures(input)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(pairs_path)
        .map_err(|e| csv_err(pairs_path, e))?;
    let bad = |m: String| CliError::Format(format!("{}: {m}", pairs_path.display()));
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(pairs_path, e))?;
        if rec.len() != 3 {
            return Err(bad(format!("expected id_a,id_b,same, got {} fields", rec.len())));
        }
        let same = match &rec[2] {
            "1" => true,
            "0" => false,
            v => return Err(bad(format!("same must be 0 or 1, got `{v}`"))),
        };
        for id in [&rec[0], &rec[1]] {
            if !sigs.contains_key(id) {
                return Err(bad(format!("unknown id `{id}`")));
            }
        }
        pairs.push((rec[0].to_string(), rec[1].to_string(), same));
    }
    if pairs.is_empty() {
        return Err(bad("no pairs".into()));
    }
    let scores = pairs
        .iter()
        .map(|(a, b, _)| match (&sigs[a], &sigs[b]) {
            (Some(x), Some(y)) => chtf::recognition::similarity(x, y),
            _ => Ok(0.0),
        })
        .collect::<chtf::Result<Vec<f64>>>()?;
    let same: Vec<bool> = pairs.iter().map(|p| p.2).collect();
    let v = verify_scores(&scores, &same)?;
    create_dir(out)?;
    let mut sc = String::from("id_a,id_b,same,score,decision\n");
    for ((a, b, y), (s, d)) in pairs.iter().zip(v.scores.iter().zip(&v.decisions)) {
        sc.push_str(&format!("{a},{b},{},{s},{}\n", *y as u8, *d as u8));
    }
    write_text(&out.join("scores.csv"), &sc)?;
    write_text(&out.join("roc.csv"), &roc_csv(&v.roc))?;
    write_text(
        &out.join("summary.csv"),
        &format!("pairs,threshold,accuracy,auc\n{},{},{},{}\n", pairs.len(), v.threshold, v.accuracy, v.auc),
    )?;
    println!("accuracy {:.4} auc {:.4}", v.accuracy, v.auc);
    Ok(())
}

/// PCA / global / compositional occlusion benchmark.
pub fn bench(flags: &Flags) -> CliResult<()> {
    let out = flags.require_output()?;
    let defaults = BenchConfig::default();
    let methods = match &flags.method {
        Some(s) => s
            .split(',')
            .map(|m| m.trim().parse::<Method>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<CliResult<Vec<_>>>()?,
        None => defaults.methods.clone(),
    };
    let cfg = BenchConfig {
        seed: flags.seed(),
        reps: flags.reps.unwrap_or(defaults.reps),
        occlusion: flags.occlusion.unwrap_or(defaults.occlusion),
        methods,
        noise: flags.noise.unwrap_or(defaults.noise),
        max_iters: flags.max_iters.unwrap_or(defaults.max_iters),
        ..defaults
    };
    let report = run_benchmark(&cfg).map_err(|e| match e {
        chtf::Error::InvalidArgument(m) => CliError::Usage(m),
        other => other.into(),
    })?;
    create_dir(out)?;
    write_text(&out.join("report.csv"), &report.to_csv())?;
    let mut reps = String::from("seed,method,accuracy,auc,threshold\n");
    for rep in &report.reps {
        for r in rep {
            reps.push_str(&format!("{},{},{},{},{}\n", r.seed, r.method.name(), r.accuracy, r.auc, r.threshold));
        }
    }
    write_text(&out.join("reps.csv"), &reps)?;
    for (k, m) in cfg.methods.iter().enumerate() {
        write_text(&out.join(format!("roc_{}.csv", m.name())), &roc_csv(&report.reps[0][k].roc))?;
    }
    print!("{}", report.to_csv());
    // Wall-clock time varies run to run, so it stays out of the output files.
    eprint!("{}", report.timing_csv());
    Ok(())
}
