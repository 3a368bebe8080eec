//! End-to-end library flows: synthesize, factorize, archive, recognize.

use chtf::decomposition::{m_mode_svd, numerical_ranks, reconstruct};
use chtf::hierarchy::{
    chtf_als, chtf_independent, chtf_reconstruct, make_pyramid_bank, make_segmentation_bank, ChtfOptions,
    PyramidMode, SegmentFilterBank,
};
use chtf::io::{load_hierarchical, load_tucker, save_hierarchical, save_tucker, ArchiveExtras};
use chtf::linalg::max_principal_angle;
use chtf::recognition::{segment_weights, train_compositional, train_global, Recognizer};
use chtf::synth::{synth_ensemble, SynthConfig};
use chtf::tensor::frobenius_norm;

#[test]
fn synthetic_ensemble_trains_archives_and_self_identifies() {
    let data = synth_ensemble(&SynthConfig {
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let ens = &data.ensemble;
    let (model, _) = train_global(ens, None).unwrap();
    for c in 1..4 {
        let angle = max_principal_angle(&model.mode_matrices[c], &data.truth.mode_matrices[c]).unwrap();
        assert!(angle <= 1e-8, "mode {c}: {angle}");
    }
    let dir = tempfile::tempdir().unwrap();
    let extras = ArchiveExtras {
        person_labels: Some(ens.person_labels().to_vec()),
        ..Default::default()
    };
    save_tucker(dir.path(), &model, &extras).unwrap();
    let (back, manifest) = load_tucker(dir.path()).unwrap();
    let rec = Recognizer::from_global(&back, manifest.extras.person_labels.unwrap()).unwrap();
    for cell in ens.cells() {
        let sig = rec.signature(&ens.observation(&cell)).unwrap();
        assert_eq!(rec.person_labels[rec.identify(&sig)], ens.person_labels()[cell[0]]);
    }
}

#[test]
fn compositional_model_survives_archive_and_recognizes() {
    // Two 48-pixel halves each hold the full 36-dimensional causal product,
    // so every segment response is exactly rank-1.
    let data = synth_ensemble(&SynthConfig {
        dims: vec![96, 6, 4, 3],
        ranks: vec![36, 4, 3, 3],
        noise: 0.0,
        seed: 9,
    })
    .unwrap();
    let ens = &data.ensemble;
    let bank = make_segmentation_bank(96, &[(0..48).collect(), (48..96).collect()]).unwrap();
    let (model, trace) = train_compositional(ens, &bank, &[None; 4], &ChtfOptions::default()).unwrap();
    assert!(trace.is_non_increasing(1e-9));
    let dir = tempfile::tempdir().unwrap();
    let weights = segment_weights(ens, &bank).unwrap();
    let extras = ArchiveExtras {
        weights: Some(weights.clone()),
        ..Default::default()
    };
    save_hierarchical(dir.path(), &model, &extras).unwrap();
    let (back, _) = load_hierarchical(dir.path()).unwrap();
    assert_eq!(back, model);
    let rec = Recognizer::new(back, weights, ens.person_labels().to_vec()).unwrap();
    for cell in ens.cells() {
        let sig = rec.signature(&ens.observation(&cell)).unwrap();
        assert_eq!(rec.identify(&sig), cell[0]);
    }
}

#[test]
fn disjoint_halves_match_independent_and_global_per_half() {
    let data = synth_ensemble(&SynthConfig {
        dims: vec![10, 4, 3, 2],
        ranks: vec![6, 3, 2, 2],
        noise: 0.2,
        seed: 12,
    })
    .unwrap();
    let d = data.ensemble.tensor();
    let bank = make_segmentation_bank(10, &[(0..5).collect(), (5..10).collect()]).unwrap();
    let (als, _) = chtf_als(d, &bank, &[None; 4], &ChtfOptions::default()).unwrap();
    let ind = chtf_independent(d, &bank).unwrap();
    let (a, b) = (chtf_reconstruct(&als).unwrap(), chtf_reconstruct(&ind).unwrap());
    assert!(frobenius_norm(&a.sub(&b).unwrap()) <= 1e-8 * frobenius_norm(d));
    for s in 0..2 {
        let ds = chtf::hierarchy::segment_tensor(d, &bank, s).unwrap();
        let g = m_mode_svd(&ds).unwrap();
        let ranks = numerical_ranks(&g);
        for c in 0..4 {
            let want = g.mode_matrices[c].columns(0, ranks[c]).into_owned();
            assert!(max_principal_angle(&als.segments[s].mode_matrices[c], &want).unwrap() <= 1e-6);
        }
    }
}

#[test]
fn pyramid_bank_truncation_respects_spectrum_bound() {
    let data = synth_ensemble(&SynthConfig {
        dims: vec![16, 5, 4, 3],
        ranks: vec![12, 4, 3, 3],
        noise: 0.05,
        seed: 21,
    })
    .unwrap();
    let d = data.ensemble.tensor();
    let bank = make_pyramid_bank(4, 4, 2, PyramidMode::Laplacian).unwrap();
    let init = chtf::hierarchy::chtf_init(d, &bank, false).unwrap();
    let total = [None, Some(6), Some(5), Some(4)];
    // Energy of the dropped spectrum entries of the initialization bounds
    // the truncation error from above (HOSVD-style bound per segment,
    // summed through the triangle inequality).
    let trunc = chtf::hierarchy::chtf_truncate(&init, &total).unwrap();
    let mut bound = 0.0;
    for (full, kept) in init.segments.iter().zip(&trunc.segments) {
        let mut seg = 0.0;
        for c in 0..4 {
            let all: f64 = full.spectrum(c).iter().map(|v| v * v).sum();
            let keep: f64 = kept.spectrum(c).iter().map(|v| v * v).sum();
            // Re-canonicalization is not applied on truncation, so the kept
            // slabs are a subset of the original ones.
            let dropped = if kept.is_active() { (all - keep).max(0.0) } else { all };
            seg += dropped;
        }
        bound += seg.sqrt();
    }
    let (model, trace) = chtf_als(d, &bank, &total, &ChtfOptions::default()).unwrap();
    assert!(trace.is_non_increasing(1e-9));
    let err = frobenius_norm(&d.sub(&chtf_reconstruct(&model).unwrap()).unwrap());
    assert!(err <= bound + 1e-9, "{err} > {bound}");
}

#[test]
fn identity_bank_reduces_to_tucker() {
    let data = synth_ensemble(&SynthConfig {
        seed: 30,
        noise: 0.1,
        dims: vec![8, 5, 4, 3],
        ranks: vec![8, 5, 4, 3],
    })
    .unwrap();
    let d = data.ensemble.tensor();
    let (h, _) = chtf_als(d, &SegmentFilterBank::identity(8), &[None; 4], &ChtfOptions::default()).unwrap();
    let t = m_mode_svd(d).unwrap();
    let (a, b) = (chtf_reconstruct(&h).unwrap(), reconstruct(&t).unwrap());
    assert!(frobenius_norm(&a.sub(&b).unwrap()) <= 1e-9 * frobenius_norm(d));
}
