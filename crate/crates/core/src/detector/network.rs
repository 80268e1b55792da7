use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{affine, affine_backward, Matrix};
use crate::error::{Error, Result};

/// Number of hidden blocks (linear → batch norm → ReLU → dropout) before the
/// output layer; the network has `HIDDEN_LAYERS + 1` linear layers.
pub const HIDDEN_LAYERS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_dims: [usize; HIDDEN_LAYERS],
    pub dropout_rate: f64,
    pub bn_epsilon: f64,
    pub bn_momentum: f64,
}

impl MlpArchitecture {
    /// Hidden widths 512/256/128, dropout 0.2, batch-norm epsilon 1e-5 and
    /// momentum 0.1.
    pub fn new(input_dim: usize) -> Self {
        MlpArchitecture {
            input_dim,
            hidden_dims: [512, 256, 128],
            dropout_rate: 0.2,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Argument(format!(
                "layer widths must be positive, got {} -> {:?}",
                self.input_dim, self.hidden_dims
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Argument(format!(
                "dropout rate {} is outside [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.bn_epsilon >= 0.0 && self.bn_epsilon.is_finite()) {
            return Err(Error::Argument(format!("bad batch-norm epsilon {}", self.bn_epsilon)));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(Error::Argument(format!(
                "batch-norm momentum {} is outside (0, 1]",
                self.bn_momentum
            )));
        }
        Ok(())
    }

    /// `(in, out)` of each linear layer, input to output.
    pub fn layer_shapes(&self) -> [(usize, usize); HIDDEN_LAYERS + 1] {
        let [h1, h2, h3] = self.hidden_dims;
        [(self.input_dim, h1), (h1, h2), (h2, h3), (h3, 1)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `out_dim × in_dim`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn identity(width: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }
}

/// Weights, biases and batch-norm state of the detector.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub arch: MlpArchitecture,
    pub linears: Vec<Linear>,
    pub norms: Vec<BatchNorm>,
    /// Optimizer steps applied so far; zero means untrained.
    pub step: u64,
}

/// Borrowed view of one named tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub data: &'a [f64],
}

pub struct TensorMut<'a> {
    pub name: String,
    pub data: &'a mut [f64],
    /// Whether decoupled weight decay applies (weight matrices only).
    pub decay: bool,
}

impl MlpParams {
    /// Uniform fan-in initialization, `U(-1/√fan_in, 1/√fan_in)` for weights
    /// and biases; batch norm starts as the identity.
    pub fn init<R: Rng + ?Sized>(arch: &MlpArchitecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let linears = arch
            .layer_shapes()
            .iter()
            .map(|&(in_dim, out_dim)| {
                let bound = 1.0 / (in_dim as f64).sqrt();
                let mut draw = || rng.gen_range(-bound..bound);
                let weight = (0..in_dim * out_dim).map(|_| draw()).collect();
                let bias = (0..out_dim).map(|_| draw()).collect();
                Linear {
                    in_dim,
                    out_dim,
                    weight,
                    bias,
                }
            })
            .collect();
        let norms = arch.hidden_dims.iter().map(|&w| BatchNorm::identity(w)).collect();
        Ok(MlpParams {
            arch: arch.clone(),
            linears,
            norms,
            step: 0,
        })
    }

    pub fn is_trained(&self) -> bool {
        self.step > 0
    }

    /// Trainable tensors in declaration order.
    pub fn trainable(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        for (l, lin) in self.linears.iter().enumerate() {
            out.push(TensorRef {
                name: format!("linear{l}.weight"),
                data: &lin.weight,
            });
            out.push(TensorRef {
                name: format!("linear{l}.bias"),
                data: &lin.bias,
            });
            if let Some(bn) = self.norms.get(l) {
                out.push(TensorRef {
                    name: format!("bn{l}.gamma"),
                    data: &bn.gamma,
                });
                out.push(TensorRef {
                    name: format!("bn{l}.beta"),
                    data: &bn.beta,
                });
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        let mut norms = self.norms.iter_mut();
        for (l, lin) in self.linears.iter_mut().enumerate() {
            out.push(TensorMut {
                name: format!("linear{l}.weight"),
                data: &mut lin.weight,
                decay: true,
            });
            out.push(TensorMut {
                name: format!("linear{l}.bias"),
                data: &mut lin.bias,
                decay: false,
            });
            if let Some(bn) = norms.next() {
                out.push(TensorMut {
                    name: format!("bn{l}.gamma"),
                    data: &mut bn.gamma,
                    decay: false,
                });
                out.push(TensorMut {
                    name: format!("bn{l}.beta"),
                    data: &mut bn.beta,
                    decay: false,
                });
            }
        }
        out
    }

    /// Every stored tensor (trainable and running statistics) in
    /// checkpoint order, with shapes.
    pub fn all_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (l, lin) in self.linears.iter().enumerate() {
            out.push((format!("linear{l}.weight"), vec![lin.out_dim, lin.in_dim], &lin.weight[..]));
            out.push((format!("linear{l}.bias"), vec![lin.out_dim], &lin.bias[..]));
            if let Some(bn) = self.norms.get(l) {
                let w = bn.gamma.len();
                out.push((format!("bn{l}.gamma"), vec![w], &bn.gamma[..]));
                out.push((format!("bn{l}.beta"), vec![w], &bn.beta[..]));
                out.push((format!("bn{l}.running_mean"), vec![w], &bn.running_mean[..]));
                out.push((format!("bn{l}.running_var"), vec![w], &bn.running_var[..]));
            }
        }
        out
    }

    pub fn all_tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        let mut norms = self.norms.iter_mut();
        for lin in self.linears.iter_mut() {
            out.push(&mut lin.weight);
            out.push(&mut lin.bias);
            if let Some(bn) = norms.next() {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
                out.push(&mut bn.running_mean);
                out.push(&mut bn.running_var);
            }
        }
        out
    }

    /// Checks that tensor shapes agree with the architecture.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let shapes = self.arch.layer_shapes();
        if self.linears.len() != shapes.len() || self.norms.len() != HIDDEN_LAYERS {
            return Err(Error::State("parameter layer count mismatch".into()));
        }
        for (l, (lin, &(i, o))) in self.linears.iter().zip(&shapes).enumerate() {
            if lin.in_dim != i || lin.out_dim != o || lin.weight.len() != i * o || lin.bias.len() != o
            {
                return Err(Error::State(format!("linear{l} shape mismatch")));
            }
        }
        for (l, (bn, &w)) in self.norms.iter().zip(&self.arch.hidden_dims).enumerate() {
            let ok = [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
                .iter()
                .all(|v| v.len() == w);
            if !ok {
                return Err(Error::State(format!("bn{l} shape mismatch")));
            }
            if bn.running_var.iter().any(|&v| v < 0.0 || !v.is_finite())
                || bn.running_mean.iter().any(|v| !v.is_finite())
            {
                return Err(Error::State(format!("bn{l} running statistics are invalid")));
            }
        }
        Ok(())
    }

    /// Folds one train-mode batch's statistics into the running averages.
    /// Variance is stored unbiased.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) -> Result<()> {
        cache.check(self)?;
        let m = self.arch.bn_momentum;
        let n = cache.batch_size as f64;
        let unbias = if cache.batch_size > 1 { n / (n - 1.0) } else { 1.0 };
        for (bn, hc) in self.norms.iter_mut().zip(&cache.hidden) {
            for j in 0..bn.running_mean.len() {
                bn.running_mean[j] = (1.0 - m) * bn.running_mean[j] + m * hc.batch_mean[j];
                bn.running_var[j] = (1.0 - m) * bn.running_var[j] + m * hc.batch_var[j] * unbias;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct HiddenCache {
    input: Matrix,
    xhat: Matrix,
    /// Batch-norm output before ReLU.
    normed: Matrix,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    /// Biased batch variance.
    batch_var: Vec<f64>,
    /// Per-element dropout factor: 0 or `1 / (1 - p)`.
    dropout: Vec<f64>,
}

/// Activations saved by a train-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    step: u64,
    batch_size: usize,
    arch: MlpArchitecture,
    hidden: Vec<HiddenCache>,
    last_input: Matrix,
}

impl ForwardCache {
    fn check(&self, params: &MlpParams) -> Result<()> {
        if self.step != params.step {
            return Err(Error::State(format!(
                "forward cache from step {} used with parameters at step {}",
                self.step, params.step
            )));
        }
        if self.arch != params.arch {
            return Err(Error::State("forward cache built for another architecture".into()));
        }
        Ok(())
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Batch-norm outputs before the affine transform, per hidden layer.
    pub fn normalized(&self, layer: usize) -> &Matrix {
        &self.hidden[layer].xhat
    }
}

pub struct ForwardOutput {
    pub logits: Vec<f64>,
    /// Present in train mode only.
    pub cache: Option<ForwardCache>,
}

/// Runs the network on a batch.
///
/// Train mode normalizes with batch statistics and samples dropout masks
/// from `rng`; eval mode uses running statistics and no dropout and never
/// touches `rng`.
pub fn forward<R: Rng + ?Sized>(
    params: &MlpParams,
    batch: &Matrix,
    mode: Mode,
    rng: &mut R,
) -> Result<ForwardOutput> {
    if batch.cols() != params.arch.input_dim {
        return Err(Error::Argument(format!(
            "batch has {} features, network expects {}",
            batch.cols(),
            params.arch.input_dim
        )));
    }
    if batch.rows() == 0 {
        return Err(Error::Argument("empty batch".into()));
    }
    params.validate()?;
    if mode == Mode::Eval && !params.is_trained() {
        return Err(Error::State("eval-mode forward before any training step".into()));
    }

    let eps = params.arch.bn_epsilon;
    let p = params.arch.dropout_rate;
    let keep_scale = 1.0 / (1.0 - p);
    let n = batch.rows();
    let mut hidden = Vec::with_capacity(HIDDEN_LAYERS);
    let mut x = batch.clone();

    for (lin, bn) in params.linears.iter().zip(&params.norms) {
        let pre = affine(&x, &lin.weight, &lin.bias);
        let width = lin.out_dim;
        let (mean, var) = match mode {
            Mode::Train => batch_moments(&pre),
            Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = pre;
        for row in xhat.data_mut().chunks_exact_mut(width) {
            for ((x, m), s) in row.iter_mut().zip(&mean).zip(&inv_std) {
                *x = (*x - m) * s;
            }
        }
        let mut normed = xhat.clone();
        for row in normed.data_mut().chunks_exact_mut(width) {
            for ((x, g), b) in row.iter_mut().zip(&bn.gamma).zip(&bn.beta) {
                *x = g * *x + b;
            }
        }
        let mut out = normed.clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let dropout = match mode {
            Mode::Train if p > 0.0 => {
                let mask: Vec<f64> = (0..n * width)
                    .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep_scale })
                    .collect();
                out.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
                mask
            }
            Mode::Train => vec![1.0; n * width],
            Mode::Eval => Vec::new(),
        };
        if mode == Mode::Train {
            hidden.push(HiddenCache {
                input: x,
                xhat,
                normed,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                dropout,
            });
        }
        x = out;
    }

    let head = &params.linears[HIDDEN_LAYERS];
    let logits = affine(&x, &head.weight, &head.bias).data().to_vec();
    let cache = (mode == Mode::Train).then(|| ForwardCache {
        step: params.step,
        batch_size: n,
        arch: params.arch.clone(),
        hidden,
        last_input: x,
    });
    Ok(ForwardOutput { logits, cache })
}

/// Per-column mean and biased variance (two-pass).
fn batch_moments(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows() as f64;
    let w = m.cols();
    let mut mean = vec![0.0; w];
    for row in m.row_iter() {
        for j in 0..w {
            mean[j] += row[j];
        }
    }
    mean.iter_mut().for_each(|v| *v /= n);
    let mut var = vec![0.0; w];
    for row in m.row_iter() {
        for j in 0..w {
            let d = row[j] - mean[j];
            var[j] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormGrad {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Gradients laid out like the trainable tensors of [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub linears: Vec<LinearGrad>,
    pub norms: Vec<NormGrad>,
}

impl MlpGrads {
    /// Same order and names as [`MlpParams::trainable`].
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        for (l, g) in self.linears.iter().enumerate() {
            out.push(TensorRef {
                name: format!("linear{l}.weight"),
                data: &g.weight,
            });
            out.push(TensorRef {
                name: format!("linear{l}.bias"),
                data: &g.bias,
            });
            if let Some(n) = self.norms.get(l) {
                out.push(TensorRef {
                    name: format!("bn{l}.gamma"),
                    data: &n.gamma,
                });
                out.push(TensorRef {
                    name: format!("bn{l}.beta"),
                    data: &n.beta,
                });
            }
        }
        out
    }
}

/// Reverse pass through a train-mode forward: gradients of every weight,
/// bias, γ and β given `d_logits`.
pub fn backward(params: &MlpParams, cache: &ForwardCache, d_logits: &[f64]) -> Result<MlpGrads> {
    cache.check(params)?;
    if d_logits.len() != cache.batch_size {
        return Err(Error::State(format!(
            "{} logit gradients for a cached batch of {}",
            d_logits.len(),
            cache.batch_size
        )));
    }
    let n = cache.batch_size;
    let head = &params.linears[HIDDEN_LAYERS];
    let dz = Matrix::new(n, 1, d_logits.to_vec())?;
    let (dw, db, dx) = affine_backward(&cache.last_input, &head.weight, &dz, true);
    let mut linears = vec![LinearGrad { weight: dw, bias: db }];
    let mut norms = Vec::with_capacity(HIDDEN_LAYERS);
    let mut upstream = dx.expect("requested");

    for l in (0..HIDDEN_LAYERS).rev() {
        let hc = &cache.hidden[l];
        let bn = &params.norms[l];
        let lin = &params.linears[l];
        let width = lin.out_dim;

        // Through dropout and ReLU.
        let mut d_normed = upstream;
        for ((g, &mask), &y) in d_normed
            .data_mut()
            .iter_mut()
            .zip(&hc.dropout)
            .zip(hc.normed.data())
        {
            *g = if y > 0.0 { *g * mask } else { 0.0 };
        }

        // Batch norm with batch statistics: the mean and variance depend on
        // every row, which couples the per-row gradients.
        let mut d_gamma = vec![0.0; width];
        let mut d_beta = vec![0.0; width];
        for (g_row, xh_row) in d_normed.row_iter().zip(hc.xhat.row_iter()) {
            for j in 0..width {
                d_gamma[j] += g_row[j] * xh_row[j];
                d_beta[j] += g_row[j];
            }
        }
        let nf = n as f64;
        let mut d_pre = Matrix::zeros(n, width);
        for i in 0..n {
            let g_row = d_normed.row(i);
            let xh_row = hc.xhat.row(i);
            let out = d_pre.row_mut(i);
            for j in 0..width {
                // Σ dxhat = γ·Σ dy = γ·dβ and Σ dxhat·xhat = γ·dγ.
                let dxhat = g_row[j] * bn.gamma[j];
                out[j] = hc.inv_std[j] / nf
                    * (nf * dxhat - bn.gamma[j] * d_beta[j] - xh_row[j] * bn.gamma[j] * d_gamma[j]);
            }
        }
        norms.push(NormGrad {
            gamma: d_gamma,
            beta: d_beta,
        });

        let (dw, db, dx) = affine_backward(&hc.input, &lin.weight, &d_pre, l > 0);
        linears.push(LinearGrad { weight: dw, bias: db });
        upstream = dx.unwrap_or_else(|| Matrix::zeros(0, 0));
    }
    linears.reverse();
    norms.reverse();
    Ok(MlpGrads { linears, norms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn tiny_arch(dropout: f64) -> MlpArchitecture {
        MlpArchitecture {
            input_dim: 3,
            hidden_dims: [4, 4, 4],
            dropout_rate: dropout,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
        }
    }

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut r = rng::seeded(seed);
        Matrix::new(rows, cols, (0..rows * cols).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn architecture_validation() {
        let mut a = tiny_arch(0.0);
        assert!(a.validate().is_ok());
        a.dropout_rate = 1.0;
        assert!(a.validate().is_err());
        let mut a = tiny_arch(0.0);
        a.hidden_dims[1] = 0;
        assert!(a.validate().is_err());
        let mut a = tiny_arch(0.0);
        a.bn_momentum = 0.0;
        assert!(a.validate().is_err());
    }

    #[test]
    fn eval_before_training_is_state_error() {
        let params = MlpParams::init(&tiny_arch(0.0), &mut rng::seeded(1)).unwrap();
        let x = random_batch(4, 3, 2);
        assert!(matches!(
            forward(&params, &x, Mode::Eval, &mut rng::seeded(0)),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_argument_error() {
        let params = MlpParams::init(&tiny_arch(0.0), &mut rng::seeded(1)).unwrap();
        let x = random_batch(4, 5, 2);
        assert!(matches!(
            forward(&params, &x, Mode::Train, &mut rng::seeded(0)),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut params = MlpParams::init(&tiny_arch(0.3), &mut rng::seeded(1)).unwrap();
        params.step = 1;
        let x = random_batch(6, 3, 2);
        let a = forward(&params, &x, Mode::Eval, &mut rng::seeded(0)).unwrap();
        let b = forward(&params, &x, Mode::Eval, &mut rng::seeded(99)).unwrap();
        assert!(a.cache.is_none());
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn identity_network_reduces_to_affine_map() {
        // Square identity hidden layers with zero bias, batch norm at its
        // initial state and positive inputs: the output is the head's affine
        // map of the input, up to the 1/√(1+ε) factor of each normalization.
        let arch = MlpArchitecture {
            input_dim: 3,
            hidden_dims: [3, 3, 3],
            dropout_rate: 0.0,
            bn_epsilon: 1e-5,
            bn_momentum: 0.1,
        };
        let mut params = MlpParams::init(&arch, &mut rng::seeded(4)).unwrap();
        for lin in &mut params.linears[..HIDDEN_LAYERS] {
            lin.weight = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
            lin.bias = vec![0.0; 3];
        }
        params.linears[3].weight = vec![0.5, -2.0, 1.25];
        params.linears[3].bias = vec![0.75];
        params.step = 1;
        let x = Matrix::new(2, 3, vec![0.2, 1.0, 3.0, 4.0, 0.1, 0.5]).unwrap();
        let out = forward(&params, &x, Mode::Eval, &mut rng::seeded(0)).unwrap();
        let shrink = (1.0f64 + 1e-5).powf(-1.5);
        for (i, logit) in out.logits.iter().enumerate() {
            let r = x.row(i);
            let expected = 0.75 + shrink * (0.5 * r[0] - 2.0 * r[1] + 1.25 * r[2]);
            assert!((logit - expected).abs() < 1e-12, "{logit} vs {expected}");
        }
    }

    #[test]
    fn train_mode_batch_norm_standardizes() {
        let arch = MlpArchitecture {
            input_dim: 5,
            hidden_dims: [7, 6, 5],
            dropout_rate: 0.1,
            bn_epsilon: 1e-12,
            bn_momentum: 0.1,
        };
        let params = MlpParams::init(&arch, &mut rng::seeded(8)).unwrap();
        let x = random_batch(32, 5, 9);
        let out = forward(&params, &x, Mode::Train, &mut rng::seeded(10)).unwrap();
        let cache = out.cache.unwrap();
        for l in 0..HIDDEN_LAYERS {
            let (mean, var) = batch_moments(cache.normalized(l));
            for (m, v) in mean.iter().zip(&var) {
                assert!(m.abs() < 1e-5, "layer {l} mean {m}");
                assert!((v - 1.0).abs() < 1e-8, "layer {l} var {v}");
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let params = MlpParams::init(&tiny_arch(0.25), &mut rng::seeded(1)).unwrap();
        let x = random_batch(8, 3, 2);
        let out = forward(&params, &x, Mode::Train, &mut rng::seeded(3)).unwrap();
        let grads = backward(&params, out.cache.as_ref().unwrap(), &[0.0; 8]).unwrap();
        for t in grads.tensors() {
            assert!(t.data.iter().all(|&g| g == 0.0), "{}", t.name);
        }
    }

    #[test]
    fn backward_is_pure_given_cache() {
        let params = MlpParams::init(&tiny_arch(0.25), &mut rng::seeded(1)).unwrap();
        let x = random_batch(8, 3, 2);
        let cache = forward(&params, &x, Mode::Train, &mut rng::seeded(3)).unwrap().cache.unwrap();
        let d: Vec<f64> = (0..8).map(|i| (i as f64 - 3.5) / 8.0).collect();
        assert_eq!(backward(&params, &cache, &d).unwrap(), backward(&params, &cache, &d).unwrap());
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut params = MlpParams::init(&tiny_arch(0.0), &mut rng::seeded(1)).unwrap();
        let x = random_batch(4, 3, 2);
        let cache = forward(&params, &x, Mode::Train, &mut rng::seeded(3)).unwrap().cache.unwrap();
        params.step += 1;
        assert!(matches!(backward(&params, &cache, &[0.0; 4]), Err(Error::State(_))));
        params.step -= 1;
        assert!(matches!(backward(&params, &cache, &[0.0; 3]), Err(Error::State(_))));
    }

    #[test]
    fn running_stats_move_toward_batch_stats() {
        let mut params = MlpParams::init(&tiny_arch(0.0), &mut rng::seeded(1)).unwrap();
        let x = random_batch(16, 3, 2);
        let cache = forward(&params, &x, Mode::Train, &mut rng::seeded(3)).unwrap().cache.unwrap();
        params.update_running_stats(&cache).unwrap();
        let hc = &cache.hidden[0];
        for j in 0..4 {
            let expect_mean = 0.1 * hc.batch_mean[j];
            let expect_var = 0.9 + 0.1 * hc.batch_var[j] * 16.0 / 15.0;
            assert!((params.norms[0].running_mean[j] - expect_mean).abs() < 1e-15);
            assert!((params.norms[0].running_var[j] - expect_var).abs() < 1e-15);
        }
    }
}
