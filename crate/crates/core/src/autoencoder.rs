//! Dense ReLU autoencoder trained with Adam on stacked log-Mel frames.
//!
//! Default architecture: `d_in -> 64 -> 64 -> 8 -> 64 -> 64 -> d_in`, ReLU on
//! every hidden layer, linear output. Gradients are computed by hand
//! (reverse-mode over the layer chain), batch loss is the mean over samples of
//! `||x - D(E(x))||^2`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{stacked_windows, FrameVector};
use crate::tensor::{gemm, Matrix, Tensor3};

pub const DEFAULT_HIDDEN: [usize; 5] = [64, 64, 8, 64, 64];

/// One dense layer: `y = W x + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(fan_out, fan_in),
            bias: vec![0.0; fan_out],
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.values().iter().chain(&self.bias)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.values_mut().iter_mut().chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderParams {
    /// Widths from input to output, e.g. `[320, 64, 64, 8, 64, 64, 320]`.
    pub layer_dims: Vec<usize>,
    pub layers: Vec<Layer>,
}

/// Same shape as the parameters; one entry per weight and bias.
pub type Gradients = AutoencoderParams;

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 || layer_dims.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "need at least two positive layer widths, got {layer_dims:?}"
        )));
    }
    if layer_dims.first() != layer_dims.last() {
        return Err(Error::InvalidArgument(format!(
            "autoencoder output width must equal input width, got {layer_dims:?}"
        )));
    }
    Ok(())
}

impl AutoencoderParams {
    /// Widths of the default network for `d_in` inputs.
    pub fn standard_dims(d_in: usize) -> Vec<usize> {
        let mut dims = vec![d_in];
        dims.extend_from_slice(&DEFAULT_HIDDEN);
        dims.push(d_in);
        dims
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        check_dims(layer_dims)?;
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers: layer_dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut params = Self::zeros(layer_dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut params.layers {
            let (fan_out, fan_in) = (layer.weights.rows(), layer.weights.cols());
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in layer.weights.values_mut() {
                *w = rng.random_range(-limit..limit);
            }
        }
        Ok(params)
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    /// Index in `layer_dims` of the narrowest interior layer.
    pub fn bottleneck_index(&self) -> usize {
        let inner = &self.layer_dims[1..self.layer_dims.len() - 1];
        (0..inner.len())
            .min_by_key(|&i| inner[i])
            .map_or(self.layer_dims.len() - 1, |i| i + 1)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.values().len() + l.bias.len()).sum()
    }

    /// Every weight then bias, layer by layer.
    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(Layer::values).copied().collect()
    }

    pub fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Layer::values_mut)
    }

    /// Checks the stored matrices against `layer_dims` (used after loading).
    pub fn validate(&self) -> Result<()> {
        check_dims(&self.layer_dims)?;
        let ok = self.layers.len() == self.layer_dims.len() - 1
            && self.layers.iter().zip(self.layer_dims.windows(2)).all(|(l, w)| {
                l.weights.cols() == w[0] && l.weights.rows() == w[1] && l.bias.len() == w[1]
            });
        if !ok {
            return Err(Error::DimensionMismatch(
                "layer matrices disagree with layer_dims".into(),
            ));
        }
        Ok(())
    }

    fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input has length {dim}, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Encoder output (the bottleneck code) of one input vector.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        let input = Matrix::column_vector(x)?;
        let acts = self.activations(&input);
        Ok(acts[self.bottleneck_index()].values().to_vec())
    }

    /// Post-activation outputs of every layer, `acts[0]` being the input.
    /// Columns are samples.
    fn activations(&self, x: &Matrix) -> Vec<Matrix> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let prev = acts.last().unwrap();
            let mut z = Matrix::zeros(layer.weights.rows(), prev.cols());
            gemm(1.0, layer.weights.view(), prev.view(), 0.0, z.values_mut());
            for j in 0..z.cols() {
                for (v, b) in z.col_mut(j).iter_mut().zip(&layer.bias) {
                    *v += b;
                    if l < last && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(z);
        }
        acts
    }

    /// Reconstructions of a batch given as columns.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x.rows())?;
        Ok(self.activations(x).pop().unwrap())
    }

    /// Per-column squared reconstruction error.
    pub fn loss_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        let out = self.forward_batch(x)?;
        Ok(per_column_sq_err(x, &out))
    }

    /// Mean batch loss and its exact gradient. ReLU'(0) is taken as 0.
    pub fn loss_and_grad(&self, x: &Matrix) -> Result<(f64, Gradients)> {
        self.check_input(x.rows())?;
        let batch = x.cols();
        let acts = self.activations(x);
        let out = acts.last().unwrap();
        let mean_loss = per_column_sq_err(x, out).iter().sum::<f64>() / batch as f64;

        let mut grads = Self::zeros(&self.layer_dims)?;
        // dL/d(output) = -2 (x - x_hat) / B
        let mut delta = Matrix::from_fn(out.rows(), batch, |i, j| {
            -2.0 * (x.get(i, j) - out.get(i, j)) / batch as f64
        });
        for l in (0..self.layers.len()).rev() {
            let input = &acts[l];
            let g = &mut grads.layers[l];
            gemm(1.0, delta.view(), input.view().t(), 0.0, g.weights.values_mut());
            for j in 0..batch {
                for (gb, d) in g.bias.iter_mut().zip(delta.col(j)) {
                    *gb += d;
                }
            }
            if l > 0 {
                let w = &self.layers[l].weights;
                let mut back = Matrix::zeros(w.cols(), batch);
                gemm(1.0, w.view().t(), delta.view(), 0.0, back.values_mut());
                // input = relu(z) so relu'(z) = 1 exactly where input > 0
                for (b, a) in back.values_mut().iter_mut().zip(input.values()) {
                    if *a <= 0.0 {
                        *b = 0.0;
                    }
                }
                delta = back;
            }
        }
        Ok((mean_loss, grads))
    }
}

fn per_column_sq_err(x: &Matrix, y: &Matrix) -> Vec<f64> {
    (0..x.cols())
        .map(|j| x.col(j).iter().zip(y.col(j)).map(|(a, b)| (a - b) * (a - b)).sum())
        .collect()
}

/// Reconstruction `D(E(x))` of one input.
pub fn forward(params: &AutoencoderParams, x: &[f64]) -> Result<FrameVector> {
    params.check_input(x.len())?;
    let out = params.forward_batch(&Matrix::column_vector(x)?)?;
    Ok(FrameVector(out.into_values()))
}

/// `||x - D(E(x))||^2`.
pub fn loss(params: &AutoencoderParams, x: &[f64]) -> Result<f64> {
    let out = forward(params, x)?;
    Ok(x.iter().zip(out.iter()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Gradient of the mean loss over `batch`.
pub fn grad(params: &AutoencoderParams, batch: &[FrameVector]) -> Result<Gradients> {
    let x = batch_matrix(batch)?;
    Ok(params.loss_and_grad(&x)?.1)
}

fn batch_matrix(batch: &[FrameVector]) -> Result<Matrix> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Empty("gradient of an empty batch".into()))?;
    let dim = first.len();
    if batch.iter().any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch("batch vectors differ in length".into()));
    }
    Matrix::new(dim, batch.len(), batch.iter().flat_map(|v| v.iter().copied()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moment estimates, flattened in [`AutoencoderParams::flat`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &AutoencoderParams, config: AdamConfig) -> Self {
        let n = params.num_params();
        Self {
            config,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut AutoencoderParams, grads: &Gradients) {
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);
        let g_iter = grads.layers.iter().flat_map(Layer::values);
        for (((p, g), m), v) in params
            .flat_mut()
            .zip(g_iter)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    pub init_seed: u64,
    pub hidden_dims: Vec<usize>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 512,
            shuffle_seed: 0,
            init_seed: 0,
            hidden_dims: DEFAULT_HIDDEN.to_vec(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn layer_dims(&self, d_in: usize) -> Vec<usize> {
        let mut dims = vec![d_in];
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(d_in);
        dims
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: AutoencoderParams,
    /// Mean per-sample loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

/// All stacked-frame windows of every recording, one per column. Windows never
/// span two recordings.
pub fn stacked_dataset(x: &Tensor3, width: usize) -> Result<Matrix> {
    let (f, t, n) = x.dims();
    let per = t
        .checked_sub(width)
        .map(|d| d + 1)
        .filter(|_| width > 0)
        .ok_or_else(|| {
            Error::InvalidArgument(format!("{t} frames cannot hold a stack of width {width}"))
        })?;
    let mut data = Vec::with_capacity(width * f * per * n);
    for r in 0..n {
        data.extend(stacked_windows(x.slice(r), f, t, width)?.into_values());
    }
    Matrix::new(width * f, per * n, data)
}

/// Trains a fresh autoencoder on every stacked window of `x_train`.
pub fn train(x_train: &Tensor3, cfg: &TrainConfig, mel_width: usize) -> Result<TrainOutcome> {
    cfg.validate()?;
    let data = stacked_dataset(x_train, mel_width)?;
    let count = data.cols();
    if count == 0 {
        return Err(Error::Empty("training set has no windows".into()));
    }
    let dim = data.rows();
    let mut params = AutoencoderParams::init(&cfg.layer_dims(dim), cfg.init_seed)?;
    let mut adam = AdamState::new(&params, cfg.adam.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order: Vec<usize> = (0..count).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut buf = Vec::with_capacity(dim * chunk.len());
            for &j in chunk {
                buf.extend_from_slice(data.col(j));
            }
            let batch = Matrix::new(dim, chunk.len(), buf)?;
            let (batch_loss, grads) = params.loss_and_grad(&batch)?;
            total += batch_loss * chunk.len() as f64;
            adam.update(&mut params, &grads);
        }
        epoch_losses.push(total / count as f64);
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Independent per-sample forward pass with explicit loops.
    fn loop_forward(params: &AutoencoderParams, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let last = params.layers.len() - 1;
        for (l, layer) in params.layers.iter().enumerate() {
            let w = &layer.weights;
            let mut z = vec![0.0; w.rows()];
            for i in 0..w.rows() {
                let mut s = layer.bias[i];
                for j in 0..w.cols() {
                    s += w.get(i, j) * a[j];
                }
                z[i] = if l < last { s.max(0.0) } else { s };
            }
            a = z;
        }
        a
    }

    #[test]
    fn zero_params_output_zero() {
        let p = AutoencoderParams::zeros(&AutoencoderParams::standard_dims(10)).unwrap();
        let x: Vec<f64> = (0..10).map(|i| i as f64 - 3.0).collect();
        assert!(forward(&p, &x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pass_through_on_positive_inputs() {
        let dims = [3, 3, 3];
        let mut p = AutoencoderParams::zeros(&dims).unwrap();
        for layer in &mut p.layers {
            for i in 0..3 {
                layer.weights.set(i, i, 1.0);
            }
        }
        let x = [0.5, 2.0, 7.25];
        assert_eq!(&*forward(&p, &x).unwrap(), &x);
        assert_eq!(loss(&p, &x).unwrap(), 0.0);
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = AutoencoderParams::init(&AutoencoderParams::standard_dims(20), 17).unwrap();
        for _ in 0..5 {
            let x = random_vec(&mut rng, 20);
            let got = forward(&p, &x).unwrap();
            let want = loop_forward(&p, &x);
            let err: f64 = got.iter().zip(&want).map(|(a, b)| (a - b).powi(2)).sum();
            let norm: f64 = want.iter().map(|b| b * b).sum();
            assert!(err.sqrt() <= 1e-12 * norm.sqrt().max(1.0));
        }
    }

    #[test]
    fn loss_cases() {
        let p = AutoencoderParams::zeros(&AutoencoderParams::standard_dims(3)).unwrap();
        assert_eq!(loss(&p, &[1.0, 2.0, 2.0]).unwrap(), 9.0);

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = AutoencoderParams::init(&AutoencoderParams::standard_dims(12), 2).unwrap();
        let x = random_vec(&mut rng, 12);
        let y = loop_forward(&p, &x);
        let oracle: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((loss(&p, &x).unwrap() - oracle).abs() <= 1e-12 * oracle.max(1.0));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let p = AutoencoderParams::zeros(&AutoencoderParams::standard_dims(4)).unwrap();
        assert!(forward(&p, &[1.0, 2.0]).is_err());
        assert!(grad(&p, &[]).is_err());
    }

    #[test]
    fn bottleneck_has_eight_units() {
        let p = AutoencoderParams::init(&AutoencoderParams::standard_dims(320), 0).unwrap();
        assert_eq!(p.bottleneck_index(), 3);
        assert_eq!(p.encode(&vec![0.3; 320]).unwrap().len(), 8);
    }

    #[test]
    fn gradient_vanishes_at_perfect_reconstruction() {
        let dims = [2, 2, 2];
        let mut p = AutoencoderParams::zeros(&dims).unwrap();
        for layer in &mut p.layers {
            layer.weights.set(0, 0, 1.0);
            layer.weights.set(1, 1, 1.0);
        }
        let batch = vec![FrameVector(vec![1.0, 2.0]), FrameVector(vec![0.5, 3.0])];
        let g = grad(&p, &batch).unwrap();
        assert!(g.flat().iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn duplicated_batch_has_the_same_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = AutoencoderParams::init(&AutoencoderParams::standard_dims(6), 1).unwrap();
        let v = FrameVector(random_vec(&mut rng, 6));
        let single = grad(&p, std::slice::from_ref(&v)).unwrap().flat();
        let double = grad(&p, &[v.clone(), v]).unwrap().flat();
        for (a, b) in single.iter().zip(&double) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn batch_order_does_not_change_loss_or_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = AutoencoderParams::init(&AutoencoderParams::standard_dims(6), 3).unwrap();
        let batch: Vec<FrameVector> = (0..5).map(|_| FrameVector(random_vec(&mut rng, 6))).collect();
        let mut rev = batch.clone();
        rev.reverse();
        let (l1, g1) = p.loss_and_grad(&batch_matrix(&batch).unwrap()).unwrap();
        let (l2, g2) = p.loss_and_grad(&batch_matrix(&rev).unwrap()).unwrap();
        assert!((l1 - l2).abs() <= 1e-12 * l1);
        for (a, b) in g1.flat().iter().zip(&g2.flat()) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300).max(1.0));
        }
    }

    #[test]
    fn zero_epochs_rejected() {
        let x = Tensor3::from_fn(2, 6, 1, |_, _, _| 1.0);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train(&x, &cfg, 2).is_err());
    }

    #[test]
    fn constant_dataset_is_learned() {
        let x = Tensor3::from_fn(4, 12, 3, |f, _, _| 0.5 + 0.25 * f as f64);
        let cfg = TrainConfig {
            epochs: 300,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let out = train(&x, &cfg, 5).unwrap();
        let (first, last) = (out.epoch_losses[0], *out.epoch_losses.last().unwrap());
        assert!(last < 0.01 * first, "{first} -> {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let x = Tensor3::from_fn(4, 10, 2, |f, t, n| ((f * 7 + t * 3 + n) % 5) as f64 * 0.2);
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            shuffle_seed: 11,
            init_seed: 12,
            ..TrainConfig::default()
        };
        let a = train(&x, &cfg, 5).unwrap();
        let b = train(&x, &cfg, 5).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.epoch_losses, b.epoch_losses);
    }

    #[test]
    fn negative_valued_data_trains() {
        let x = Tensor3::from_fn(8, 20, 4, |f, t, n| {
            -40.0 - 5.0 * f as f64 + ((t * 13 + n * 7 + f) % 11) as f64 * 0.3
        });
        let cfg = TrainConfig {
            epochs: 40,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let out = train(&x, &cfg, 5).unwrap();
        assert!(out.epoch_losses.iter().all(|l| l.is_finite()));
        assert!(out.epoch_losses.last().unwrap() < &out.epoch_losses[0]);
    }

    #[test]
    fn stacked_dataset_never_crosses_recordings() {
        let x = Tensor3::from_fn(2, 4, 3, |f, t, n| (100 * n + 10 * t + f) as f64);
        let d = stacked_dataset(&x, 3).unwrap();
        assert_eq!((d.rows(), d.cols()), (6, 6));
        for j in 0..d.cols() {
            let rec: Vec<usize> = d.col(j).iter().map(|v| *v as usize / 100).collect();
            assert!(rec.iter().all(|&r| r == rec[0]));
        }
    }
}
