//! Reference implementations the library is checked against. These are
//! deliberately naive: quadratic pair counts, full threshold sweeps and
//! finite differences.

#![allow(dead_code)]

use rand::Rng;
use randprompt_ad_core::detector::{
    backward, bce_with_logits, forward, Matrix, MlpArchitecture, MlpParams, Mode,
};
use randprompt_ad_core::rng;

/// AUROC by counting every (positive, negative) pair; ties count 1/2.
pub fn auroc_pairs(scores: &[f64], labels: &[u8]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0u64;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1;
            if si > sj {
                credit += 1.0;
            } else if si == sj {
                credit += 0.5;
            }
        }
    }
    credit / pairs as f64
}

fn distinct_desc(scores: &[f64]) -> Vec<f64> {
    let mut t = scores.to_vec();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

/// Average precision: recount the confusion matrix at every distinct
/// threshold and add `ΔRecall × Precision`.
pub fn average_precision_sweep(scores: &[f64], labels: &[u8]) -> f64 {
    let p = labels.iter().filter(|&&l| l == 1).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in distinct_desc(scores) {
        let (tp, fp, _) = confusion(scores, labels, t);
        let recall = tp as f64 / p;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

pub fn f1_at(scores: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let (tp, fp, fn_) = confusion(scores, labels, threshold);
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Maximum F1 over every distinct score and `+∞`.
pub fn f1_max_sweep(scores: &[f64], labels: &[u8]) -> f64 {
    distinct_desc(scores)
        .into_iter()
        .map(|t| f1_at(scores, labels, t))
        .fold(0.0, f64::max)
}

/// Random scores and labels with both classes present. With `ties`, scores
/// come from a handful of levels so most thresholds cover several samples.
pub fn random_instance<R: Rng>(r: &mut R, n: usize, ties: bool) -> (Vec<f64>, Vec<u8>) {
    assert!(n >= 2);
    let levels = r.gen_range(1..=5);
    let mut labels: Vec<u8> = (0..n).map(|_| r.gen_range(0..=1)).collect();
    labels[0] = 0;
    labels[1] = 1;
    let scores = (0..n)
        .map(|i| {
            let base = if ties {
                r.gen_range(0..levels) as f64 / levels as f64
            } else {
                r.gen::<f64>()
            };
            base + 0.3 * labels[i] as f64 * r.gen::<f64>()
        })
        .map(|s| if ties { (s * 8.0).round() / 8.0 } else { s })
        .collect();
    (scores, labels)
}

/// Training loss of `params` on a fixed batch, with the dropout masks
/// fixed by `mask_seed`.
pub fn batch_loss(params: &MlpParams, x: &Matrix, labels: &[f64], mask_seed: u64) -> f64 {
    let out = forward(params, x, Mode::Train, &mut rng::seeded(mask_seed)).unwrap();
    bce_with_logits(&out.logits, labels).unwrap().0
}

/// One finite-difference comparison.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    /// Relative error, with the denominator floored so that exactly-zero
    /// gradients are compared in absolute terms.
    pub fn rel_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(1e-6);
        (self.analytic - self.numeric).abs() / scale
    }
}

/// Compares every trainable parameter's analytic gradient with a central
/// difference of the batch loss.
pub fn gradient_check(
    params: &MlpParams,
    x: &Matrix,
    labels: &[f64],
    mask_seed: u64,
    h: f64,
) -> Vec<GradCheck> {
    let out = forward(params, x, Mode::Train, &mut rng::seeded(mask_seed)).unwrap();
    let (_, d_logits) = bce_with_logits(&out.logits, labels).unwrap();
    let grads = backward(params, out.cache.as_ref().unwrap(), &d_logits).unwrap();
    let analytic: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.data.to_vec()))
        .collect();

    let mut checks = Vec::new();
    let mut probe = params.clone();
    for (t, (name, g)) in analytic.iter().enumerate() {
        for (i, &a) in g.iter().enumerate() {
            let orig = probe.trainable()[t].data[i];
            probe.trainable_mut()[t].data[i] = orig + h;
            let up = batch_loss(&probe, x, labels, mask_seed);
            probe.trainable_mut()[t].data[i] = orig - h;
            let down = batch_loss(&probe, x, labels, mask_seed);
            probe.trainable_mut()[t].data[i] = orig;
            checks.push(GradCheck {
                tensor: name.clone(),
                index: i,
                analytic: a,
                numeric: (up - down) / (2.0 * h),
            });
        }
    }
    checks
}

/// A random network with all dims in `2..=max_dim`, non-trivial batch-norm
/// affine parameters, and a random labeled batch.
pub fn random_problem(seed: u64, max_dim: usize, max_batch: usize) -> (MlpParams, Matrix, Vec<f64>) {
    let mut r = rng::seeded(seed);
    let mut dim = || r.gen_range(2..=max_dim);
    let arch = MlpArchitecture {
        input_dim: dim(),
        hidden_dims: [dim(), dim(), dim()],
        dropout_rate: 0.25,
        ..MlpArchitecture::new(1)
    };
    let mut r = rng::seeded(seed ^ 0xA5A5);
    let mut params = MlpParams::init(&arch, &mut r).unwrap();
    for bn in &mut params.norms {
        bn.gamma.iter_mut().for_each(|g| *g = r.gen_range(0.5..1.5));
        bn.beta.iter_mut().for_each(|b| *b = r.gen_range(-0.5..0.5));
    }
    let batch = r.gen_range(4..=max_batch);
    let x: Vec<f64> = (0..batch * arch.input_dim).map(|_| r.gen_range(-2.0..2.0)).collect();
    let mut labels: Vec<f64> = (0..batch).map(|_| r.gen_range(0..=1) as f64).collect();
    labels[0] = 0.0;
    labels[1] = 1.0;
    (params, Matrix::new(batch, arch.input_dim, x).unwrap(), labels)
}

/// Two-pass mean and population standard deviation.
pub fn mean_std_two_pass(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
