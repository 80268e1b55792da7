mod common;

use proptest::prelude::*;
use rand::Rng;
use randprompt_ad_core::detector::{
    bce_with_logits, forward, predict_logits, read_checkpoint, score_fnn, train, write_checkpoint,
    Checkpoint, Matrix, MlpArchitecture, MlpParams, Mode, TrainConfig,
};
use randprompt_ad_core::metrics::{auroc, LabeledScores};
use randprompt_ad_core::rng;
use randprompt_ad_core::synthetic::GaussianClusters;

#[test]
fn bce_gradient_matches_finite_differences() {
    let mut r = rng::seeded(64);
    let logits: Vec<f64> = (0..64).map(|_| r.gen_range(-6.0..6.0)).collect();
    let labels: Vec<f64> = (0..64).map(|_| r.gen_range(0..=1) as f64).collect();
    let (_, grad) = bce_with_logits(&logits, &labels).unwrap();
    let h = 1e-5;
    for i in 0..64 {
        let mut z = logits.clone();
        z[i] += h;
        let up = bce_with_logits(&z, &labels).unwrap().0;
        z[i] -= 2.0 * h;
        let down = bce_with_logits(&z, &labels).unwrap().0;
        let numeric = (up - down) / (2.0 * h);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs());
        assert!(rel < 1e-6, "logit {i}: {} vs {numeric}", grad[i]);
    }
}

#[test]
fn tiny_network_gradients_match_finite_differences() {
    let arch = MlpArchitecture {
        hidden_dims: [4, 4, 4],
        dropout_rate: 0.2,
        ..MlpArchitecture::new(3)
    };
    let mut r = rng::seeded(5);
    let params = MlpParams::init(&arch, &mut r).unwrap();
    let x = Matrix::new(10, 3, (0..30).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
    let labels: Vec<f64> = (0..10).map(|i| (i % 2) as f64).collect();
    let checks = common::gradient_check(&params, &x, &labels, 77, 1e-5);
    assert_eq!(checks.len(), 3 * 4 + 4 + 2 * 4 + (4 * 4 + 4 + 2 * 4) * 2 + 4 + 1);
    for c in checks {
        assert!(c.rel_error() < 1e-4, "{c:?}");
    }
}

#[test]
fn gradients_without_dropout_or_batch_norm_shift() {
    // With γ = 1, β = 0 and no dropout the check still covers every layer.
    for seed in 0..5 {
        let (mut params, x, labels) = common::random_problem(seed, 6, 12);
        params.arch.dropout_rate = 0.0;
        for bn in &mut params.norms {
            bn.gamma.iter_mut().for_each(|g| *g = 1.0);
            bn.beta.iter_mut().for_each(|b| *b = 0.0);
        }
        for c in common::gradient_check(&params, &x, &labels, seed, 1e-5) {
            assert!(c.rel_error() < 1e-4, "network {seed}: {c:?}");
        }
    }
}

proptest! {
    #[test]
    fn bce_is_finite_over_wide_logit_range(z in -1e4f64..1e4, label in 0u8..=1) {
        let (loss, grad) = bce_with_logits(&[z], &[f64::from(label)]).unwrap();
        prop_assert!(loss.is_finite() && loss >= 0.0);
        prop_assert!(grad[0].is_finite() && grad[0].abs() <= 1.0);
    }

    #[test]
    fn eval_forward_is_pure(seed in 0u64..1000) {
        let (mut params, x, _) = common::random_problem(seed, 6, 12);
        params.step = 1;
        let a = forward(&params, &x, Mode::Eval, &mut rng::seeded(1)).unwrap().logits;
        let b = forward(&params, &x, Mode::Eval, &mut rng::seeded(2)).unwrap().logits;
        prop_assert_eq!(a, b);
    }
}

/// Two clusters 4σ apart on every axis of a 16-dim space.
fn separable_clusters() -> GaussianClusters {
    GaussianClusters::new(16, 4.0 * 16f64.sqrt()).unwrap()
}

/// A narrower network for tests that only need some trained parameters.
fn small_problem() -> (GaussianClusters, MlpArchitecture) {
    let arch = MlpArchitecture {
        hidden_dims: [64, 32, 16],
        ..MlpArchitecture::new(16)
    };
    (separable_clusters(), arch)
}

fn auroc_of(scores: &[f64], labels: &[u8]) -> f64 {
    auroc(&LabeledScores::new(scores, labels).unwrap()).unwrap()
}

#[test]
fn separable_pairs_are_learned() {
    let clusters = separable_clusters();
    let arch = MlpArchitecture::new(16);
    let pairs = clusters.paired_text(2_000, 3).unwrap();
    let cfg = TrainConfig::default();
    let out = train(&pairs, &arch, &cfg).unwrap();
    let last_epoch = *out.epoch_losses.last().unwrap();
    assert!(last_epoch < 0.05, "mean loss of the last epoch {last_epoch}");

    let mut scores = predict_logits(&out.params, pairs.normals(), true).unwrap();
    scores.extend(predict_logits(&out.params, pairs.anomalies(), true).unwrap());
    let labels: Vec<u8> = (0..4_000).map(|i| u8::from(i >= 2_000)).collect();
    let targets: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let (final_loss, _) = bce_with_logits(&scores, &targets).unwrap();
    assert!(final_loss < 0.05, "training loss of the final model {final_loss}");
    assert!(auroc_of(&scores, &labels) >= 0.99);

    let test_labels: Vec<u8> = (0..600).map(|i| (i % 2) as u8).collect();
    let images = clusters.labeled_images(&test_labels, 4).unwrap();
    let s = score_fnn(&out.params, &images, true).unwrap();
    assert!(auroc_of(s.values(), &test_labels) >= 0.99);
    assert!(s.values().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn training_is_bit_reproducible_and_checkpoints_round_trip() {
    let (clusters, arch) = small_problem();
    let pairs = clusters.paired_text(300, 8).unwrap();
    let cfg = TrainConfig {
        seed: 12,
        ..TrainConfig::default()
    };
    let a = train(&pairs, &arch, &cfg).unwrap();
    let b = train(&pairs, &arch, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.epoch_losses), bits(&b.epoch_losses));

    let other = train(&pairs, &arch, &TrainConfig { seed: 13, ..cfg.clone() }).unwrap();
    assert_ne!(a.params, other.params);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let ckpt = Checkpoint {
        params: a.params.clone(),
        train_config: cfg,
    };
    write_checkpoint(&ckpt, &path).unwrap();
    let back = read_checkpoint(&path).unwrap();
    assert_eq!(back, ckpt);
    let images = clusters.labeled_images(&[0, 1, 0, 1], 2).unwrap();
    assert_eq!(
        predict_logits(&back.params, &images, true).unwrap(),
        predict_logits(&a.params, &images, true).unwrap()
    );
}

#[test]
fn trained_running_variance_is_non_negative() {
    let (clusters, arch) = small_problem();
    let pairs = clusters.paired_text(200, 9).unwrap();
    let out = train(&pairs, &arch, &TrainConfig::default()).unwrap();
    for bn in &out.params.norms {
        assert!(bn.running_var.iter().all(|&v| v >= 0.0 && v.is_finite()));
        assert!(bn.running_mean.iter().all(|v| v.is_finite()));
    }
    assert_eq!(out.steps, 2 * 200u64.div_ceil(64));
    assert_eq!(out.params.step, out.steps);
}
