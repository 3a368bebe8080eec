//! Black-box tests of the `chtf` binary: outputs, archives and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chtf::decomposition::reconstruct;
use chtf::hierarchy::chtf_reconstruct;
use chtf::io::{load_hierarchical, load_tnsr, load_tucker, save_tnsr};
use chtf::random::{gaussian_tensor, seeded};
use chtf::tensor::frobenius_norm;
use chtf::DenseTensor;

fn chtf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chtf"))
        .args(args)
        .env_remove("CHTF_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = chtf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    chtf(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn random_tensor_file(dir: &Path, name: &str, dims: &[usize], seed: u64) -> (PathBuf, DenseTensor) {
    let t = gaussian_tensor(&mut seeded(seed), dims);
    let path = dir.join(name);
    save_tnsr(&path, &t).unwrap();
    (path, t)
}

fn rel(a: &DenseTensor, b: &DenseTensor) -> f64 {
    frobenius_norm(&a.sub(b).unwrap()) / frobenius_norm(b)
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn identity_decompose_reconstructs_input() {
    let dir = tempfile::tempdir().unwrap();
    let (input, d) = random_tensor_file(dir.path(), "d.tnsr", &[3, 4, 5], 1);
    let out = dir.path().join("model");
    ok(&["decompose", "--input", s(&input), "--output", s(&out), "--bank", "identity"]);
    let (model, _) = load_tucker(&out).unwrap();
    assert!(rel(&reconstruct(&model).unwrap(), &d) <= 1e-9);
}

#[test]
fn two_segment_archive_reads_back() {
    let dir = tempfile::tempdir().unwrap();
    let (input, d) = random_tensor_file(dir.path(), "d.tnsr", &[6, 3, 4], 2);
    let out = dir.path().join("model");
    ok(&["decompose", "--input", s(&input), "--output", s(&out), "--bank", "segments:0-2,3-5"]);
    let (model, manifest) = load_hierarchical(&out).unwrap();
    assert_eq!(model.segments.len(), 2);
    assert_eq!(manifest.segments.len(), 2);
    for (s, seg) in model.segments.iter().enumerate() {
        let u0 = &seg.mode_matrices[0];
        for i in 0..6 {
            if i / 3 != s {
                assert_eq!(u0.row(i).norm(), 0.0);
            }
        }
    }
    assert!(rel(&chtf_reconstruct(&model).unwrap(), &d) <= 1e-9);
    let loss = read(&out.join("loss.csv"));
    assert!(loss.starts_with("iteration,loss\n"));
}

#[test]
fn truncated_decompose_writes_non_increasing_loss() {
    let dir = tempfile::tempdir().unwrap();
    let (input, _) = random_tensor_file(dir.path(), "d.tnsr", &[8, 5, 4], 3);
    let out = dir.path().join("model");
    ok(&[
        "decompose", "--input", s(&input), "--output", s(&out), "--bank", "bands:2", "--ranks", "*,4,3", "--tol",
        "1e-12",
    ]);
    let losses: Vec<f64> = read(&out.join("loss.csv"))
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(losses.len() >= 2);
    assert!(losses.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tnsr");
    std::fs::write(&bad, b"NOPE\x01\x00\x00\x00").unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&["decompose", "--input", s(&bad), "--output", s(&out)]), 3);
    let missing = dir.path().join("missing.tnsr");
    assert_eq!(code(&["decompose", "--input", s(&missing), "--output", s(&out)]), 2);
    assert_eq!(code(&["decompose", "--no-such-flag"]), 1);
    assert_eq!(code(&["decompose"]), 1);
    let (input, _) = random_tensor_file(dir.path(), "d.tnsr", &[3, 4, 5], 4);
    assert_eq!(code(&["decompose", "--input", s(&input), "--output", s(&out), "--ranks", "9,*,*"]), 4);
    assert_eq!(code(&["decompose", "--input", s(&input), "--output", s(&out), "--ranks", "1,1"]), 1);
    assert_eq!(code(&["decompose", "--input", s(&input), "--output", s(&out), "--tol", "-1"]), 1);
}

#[test]
fn synth_is_deterministic_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["synth", "--output", s(&out), "--dims", "12,4,3,2", "--ranks", "8,3,2,2", "--seed", seed, "--noise", "0.1"]);
        std::fs::read(out.join("ensemble.tnsr")).unwrap()
    };
    let (a, b, c) = (run("a", "7"), run("b", "7"), run("c", "8"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let labels = read(&dir.path().join("a/labels.csv"));
    assert!(labels.starts_with("mode,index,label\n1,0,p0\n"));
    assert_eq!(labels.lines().count(), 1 + 4 + 3 + 2);
}

/// Trains on a synthetic ensemble and projects the training images back.
fn self_identification(method: &str, bank: &str, dims: &str) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--output", s(&data), "--dims", dims, "--ranks", "*,4,3,3", "--seed", "3"]);
    let ensemble = data.join("ensemble.tnsr");
    let model = dir.path().join("model");
    ok(&["train", "--input", s(&ensemble), "--output", s(&model), "--method", method, "--bank", bank]);
    let sigs = dir.path().join("sigs.csv");
    ok(&["project", "--input", s(&ensemble), "--model", s(&model), "--output", s(&sigs)]);
    let t = load_tnsr(&ensemble).unwrap();
    let people = t.dims()[1];
    let text = read(&sigs);
    let mut rows = text.lines();
    let header = rows.next().unwrap();
    assert!(header.starts_with("id,status,w0"));
    let mut n = 0;
    for (j, row) in rows.enumerate() {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[1], "ok");
        assert_eq!(*fields.last().unwrap(), format!("p{}", j % people));
        n += 1;
    }
    assert_eq!(n, t.len() / t.dims()[0]);
}

#[test]
fn global_model_identifies_its_training_images() {
    self_identification("global", "identity", "40,6,4,3");
}

#[test]
fn compositional_model_identifies_its_training_images() {
    self_identification("compositional", "bands:2", "80,6,4,3");
}

#[test]
fn verify_scores_pairs_and_rejects_empty_lists() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--output", s(&data), "--dims", "40,5,3,2", "--ranks", "*,4,3,2", "--seed", "9", "--noise", "0.05"]);
    let ensemble = data.join("ensemble.tnsr");
    let model = dir.path().join("model");
    ok(&["train", "--input", s(&ensemble), "--output", s(&model), "--method", "global"]);
    let sigs = dir.path().join("sigs.csv");
    ok(&["project", "--input", s(&ensemble), "--model", s(&model), "--output", s(&sigs)]);
    // Column j holds person j % 5.
    let mut pairs = String::from("id_a,id_b,same\n");
    for a in 0..25 {
        for b in [a + 5, a + 1] {
            pairs.push_str(&format!("{a},{b},{}\n", u8::from(a % 5 == b % 5)));
        }
    }
    let pairs_path = dir.path().join("pairs.csv");
    std::fs::write(&pairs_path, pairs).unwrap();
    let out = dir.path().join("verify");
    ok(&["verify", "--input", s(&sigs), "--pairs", s(&pairs_path), "--output", s(&out)]);
    let roc: Vec<(f64, f64)> = read(&out.join("roc.csv"))
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|v| v.parse().unwrap()).collect();
            (f[1], f[2])
        })
        .collect();
    assert_eq!(roc[0], (0.0, 0.0));
    assert_eq!(*roc.last().unwrap(), (1.0, 1.0));
    assert!(roc.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
    let summary = read(&out.join("summary.csv"));
    assert!(summary.starts_with("pairs,threshold,accuracy,auc\n50,"));
    assert_eq!(read(&out.join("scores.csv")).lines().count(), 51);

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "id_a,id_b,same\n").unwrap();
    assert_eq!(code(&["verify", "--input", s(&sigs), "--pairs", s(&empty), "--output", s(&out)]), 3);
    let unknown = dir.path().join("unknown.csv");
    std::fs::write(&unknown, "id_a,id_b,same\n0,9999,1\n").unwrap();
    assert_eq!(code(&["verify", "--input", s(&sigs), "--pairs", s(&unknown), "--output", s(&out)]), 3);
}

#[test]
fn bench_with_one_method_reports_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bench");
    let o = ok(&["bench", "--output", s(&out), "--method", "global", "--reps", "2"]);
    let report = read(&out.join("report.csv"));
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("method,accuracy_mean"));
    assert!(lines[1].starts_with("global,"));
    assert!(out.join("roc_global.csv").exists());
    assert!(!out.join("roc_pca.csv").exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("runtime_secs"));
    assert_eq!(code(&["bench", "--output", s(&out), "--method", "svm"]), 1);
    assert_eq!(code(&["bench", "--output", s(&out), "--occlusion", "1.5"]), 1);
}

#[test]
fn config_file_fills_flags_and_command_line_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let from_cfg = dir.path().join("from_cfg");
    std::fs::write(
        &cfg,
        format!("# synthetic run\noutput = {}\ndims=10,3,2,2\nseed=5\n", from_cfg.display()),
    )
    .unwrap();
    ok(&["synth", "--config", s(&cfg)]);
    let t = load_tnsr(&from_cfg.join("ensemble.tnsr")).unwrap();
    assert_eq!(t.dims(), &[10, 3, 2, 2]);

    let overridden = dir.path().join("cli");
    ok(&["synth", "--config", s(&cfg), "--output", s(&overridden), "--seed", "6"]);
    let direct = dir.path().join("direct");
    ok(&["synth", "--output", s(&direct), "--dims", "10,3,2,2", "--seed", "6"]);
    assert_eq!(
        std::fs::read(overridden.join("ensemble.tnsr")).unwrap(),
        std::fs::read(direct.join("ensemble.tnsr")).unwrap()
    );

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "colour=blue\n").unwrap();
    assert_eq!(code(&["synth", "--config", s(&bad)]), 1);
}

#[test]
fn thread_cap_must_be_positive() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_chtf"))
        .args(["synth", "--output", s(&dir.path().join("o"))])
        .env("CHTF_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
