use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{bce_with_logits, sigmoid};
use super::matrix::Matrix;
use super::network::{backward, forward, MlpArchitecture, MlpParams, Mode};
use super::optim::{AdamHyper, AdamW};
use crate::embedding::{EmbeddingMatrix, PairedEmbeddingSet};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::scoring::{ScoreKind, ScoreVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Rows per batch; half normal, half anomalous.
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Multiplier applied to the learning rate every `lr_decay_every` epochs.
    pub lr_decay_factor: f64,
    pub lr_decay_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// L2-normalize embeddings before they enter the network.
    pub normalize_inputs: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2,
            batch_size: 128,
            lr: 1e-3,
            weight_decay: 1e-4,
            lr_decay_factor: 0.1,
            lr_decay_every: 1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            normalize_inputs: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Argument(m));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return fail(format!(
                "batch size {} must be even and at least 2 so pairs stay together",
                self.batch_size
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate {} must be positive", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight decay {} must be non-negative", self.weight_decay));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return fail(format!("lr decay factor {} must be positive", self.lr_decay_factor));
        }
        if self.lr_decay_every == 0 {
            return fail("lr_decay_every must be at least 1".into());
        }
        let betas_ok = [self.adam_beta1, self.adam_beta2]
            .iter()
            .all(|b| (0.0..1.0).contains(b));
        if !betas_ok || self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return fail("Adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }

    pub fn pairs_per_batch(&self) -> usize {
        self.batch_size / 2
    }

    /// Learning rate used throughout epoch `epoch` (0-based).
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay_factor.powi((epoch / self.lr_decay_every) as i32)
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Optimizer steps in one epoch: the final short batch is kept.
pub fn steps_per_epoch(n_pairs: usize, batch_size: usize) -> usize {
    n_pairs.div_ceil(batch_size / 2)
}

/// What the trainer reports for each optimizer step.
#[derive(Debug)]
pub struct BatchInfo<'a> {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    /// Pair index of each normal row, in row order.
    pub normal_pairs: &'a [usize],
    /// Pair index of each anomalous row, in row order.
    pub anomaly_pairs: &'a [usize],
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    /// Mean training loss of each epoch, weighted by batch size.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

pub fn train(
    pairs: &PairedEmbeddingSet,
    arch: &MlpArchitecture,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_observer(pairs, arch, cfg, |_| {})
}

/// Trains the detector on paired text embeddings, labels 0 for normal
/// rows and 1 for anomalous rows.
///
/// Every epoch reshuffles the pair order; each batch then takes the next
/// `batch_size / 2` pairs and contributes both members of each. All
/// randomness comes from streams of `cfg.seed`, and all reductions run in a
/// fixed order, so equal inputs give bit-identical parameters.
pub fn train_with_observer<F>(
    pairs: &PairedEmbeddingSet,
    arch: &MlpArchitecture,
    cfg: &TrainConfig,
    mut observer: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&BatchInfo<'_>),
{
    cfg.validate()?;
    arch.validate()?;
    if pairs.is_empty() {
        return Err(Error::Argument("no training pairs".into()));
    }
    if pairs.dim() != arch.input_dim {
        return Err(Error::Argument(format!(
            "training embeddings have dim {}, network expects {}",
            pairs.dim(),
            arch.input_dim
        )));
    }

    let mut normals = Matrix::from_embeddings(pairs.normals());
    let mut anomalies = Matrix::from_embeddings(pairs.anomalies());
    if cfg.normalize_inputs {
        normals.normalize_rows()?;
        anomalies.normalize_rows()?;
    }

    let mut params = MlpParams::init(arch, &mut rng::stream(cfg.seed, Stream::Init))?;
    let mut shuffle_rng = rng::stream(cfg.seed, Stream::Shuffle);
    let mut dropout_rng = rng::stream(cfg.seed, Stream::Dropout);
    let mut opt = AdamW::new(&params, cfg.adam());

    let n_pairs = pairs.len();
    let per_batch = cfg.pairs_per_batch();
    let mut order: Vec<usize> = (0..n_pairs).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut rows_seen = 0usize;
        for chunk in order.chunks(per_batch) {
            let k = chunk.len();
            // Rows 0..k are the normal members, rows k..2k their partners.
            let row_pairs: Vec<usize> = chunk.iter().chain(chunk).copied().collect();
            let mut data = normals.gather(row_pairs[..k].iter().copied()).into_data();
            data.extend_from_slice(anomalies.gather(row_pairs[k..].iter().copied()).data());
            let batch = Matrix::new(2 * k, arch.input_dim, data)?;
            let labels: Vec<f64> = (0..2 * k).map(|i| if i < k { 0.0 } else { 1.0 }).collect();

            let out = forward(&params, &batch, Mode::Train, &mut dropout_rng)?;
            let cache = out.cache.expect("train mode returns a cache");
            let (loss, d_logits) = bce_with_logits(&out.logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "loss became non-finite at step {}",
                    params.step + 1
                )));
            }
            let grads = backward(&params, &cache, &d_logits)?;
            params.update_running_stats(&cache)?;
            opt.step(&mut params, &grads, lr)?;

            observer(&BatchInfo {
                epoch,
                step: params.step,
                lr,
                loss,
                normal_pairs: &row_pairs[..k],
                anomaly_pairs: &row_pairs[k..],
            });
            loss_sum += loss * (2 * k) as f64;
            rows_seen += 2 * k;
        }
        epoch_losses.push(loss_sum / rows_seen as f64);
    }

    Ok(TrainOutcome {
        steps: params.step,
        params,
        epoch_losses,
    })
}

/// Raw logits of the eval-mode network, processed in fixed-size chunks.
pub fn predict_logits(params: &MlpParams, inputs: &EmbeddingMatrix, normalize: bool) -> Result<Vec<f64>> {
    if !params.is_trained() {
        return Err(Error::State("detector has not been trained".into()));
    }
    if inputs.dim() != params.arch.input_dim {
        return Err(Error::Argument(format!(
            "embeddings have dim {}, network expects {}",
            inputs.dim(),
            params.arch.input_dim
        )));
    }
    const CHUNK: usize = 1024;
    let mut x = Matrix::from_embeddings(inputs);
    if normalize {
        x.normalize_rows()?;
    }
    // Eval mode draws nothing from the generator.
    let mut unused = rng::seeded(0);
    let mut logits = Vec::with_capacity(x.rows());
    for start in (0..x.rows()).step_by(CHUNK) {
        let end = (start + CHUNK).min(x.rows());
        let part = x.gather(start..end);
        logits.extend(forward(params, &part, Mode::Eval, &mut unused)?.logits);
    }
    Ok(logits)
}

/// Detector anomaly score: sigmoid of the eval-mode logit.
pub fn score_fnn(params: &MlpParams, images: &EmbeddingMatrix, normalize: bool) -> Result<ScoreVector> {
    let values = predict_logits(params, images, normalize)?
        .into_iter()
        .map(sigmoid)
        .collect();
    ScoreVector::new(ScoreKind::Fnn, values)
}
