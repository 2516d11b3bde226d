//! The classifier under explanation: a small convolutional network with a
//! forward-only scoring interface for the metric suite and a differentiable
//! interface for scanpath generation, plus minibatch SGD training on the
//! synthetic dataset.

pub mod synthetic;
pub mod weights;

pub use synthetic::{generate_synthetic, Sample, SyntheticDataset};
pub use weights::{load_weights, save_weights, WeightFileError};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::rng::{stream_rng, STREAM_SHUFFLE, STREAM_WEIGHT_INIT};
use crate::scalar::Scalar;
use crate::tensor::{argmax, Array, Graph, TensorError, Var};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("input shape {got:?} does not match the expected {expected:?}")]
    InputShape { expected: Vec<usize>, got: Vec<usize> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("training diverged: loss became non-finite in epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One stage of the network. Parameter-free stages carry no state.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv { weight: Array<T>, stride: usize, padding: usize },
    Relu,
    MaxPool { window: usize },
    Flatten,
    Dense { weight: Array<T>, bias: Array<T> },
}

/// Feed-forward classifier over `[C,H,W]` images.
///
/// Immutable after construction; share it read-only across threads and build
/// a fresh [`Graph`] per forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor<T> {
    layers: Vec<Layer<T>>,
    input_shape: Vec<usize>,
    classes: usize,
}

impl<T: Scalar> Predictor<T> {
    /// Assembles a predictor from explicit layers; the class count is the
    /// output length of the final dense layer.
    pub fn from_layers(layers: Vec<Layer<T>>, input_shape: Vec<usize>, classes: usize) -> Self {
        Self { layers, input_shape, classes }
    }

    /// The toy architecture used throughout: two conv/relu/pool stages and a
    /// dense readout. `side` must be divisible by 4.
    pub fn toy(side: usize, classes: usize, seed: u64) -> Self {
        assert!(side % 4 == 0 && side >= 8, "toy architecture needs side divisible by 4, got {side}");
        let mut rng = stream_rng(seed, STREAM_WEIGHT_INIT);
        let conv1 = he_init(&mut rng, vec![8, 1, 3, 3], 9);
        let conv2 = he_init(&mut rng, vec![16, 8, 3, 3], 8 * 9);
        let features = 16 * (side / 4) * (side / 4);
        let dense_w = he_init(&mut rng, vec![classes, features], features);
        let dense_b = Array::zeros(vec![classes]);
        Self {
            layers: vec![
                Layer::Conv { weight: conv1, stride: 1, padding: 1 },
                Layer::Relu,
                Layer::MaxPool { window: 2 },
                Layer::Conv { weight: conv2, stride: 1, padding: 1 },
                Layer::Relu,
                Layer::MaxPool { window: 2 },
                Layer::Flatten,
                Layer::Dense { weight: dense_w, bias: dense_b },
            ],
            input_shape: vec![1, side, side],
            classes,
        }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Runs the network inside an existing graph. With `trainable` the
    /// parameters are inserted as gradient-carrying leaves and their handles
    /// returned in layer order (conv weight; dense weight, then bias).
    pub fn forward_graph(
        &self,
        g: &mut Graph<T>,
        input: Var,
        trainable: bool,
    ) -> Result<(Var, Vec<Var>), PredictorError> {
        if g.shape(input) != self.input_shape {
            return Err(PredictorError::InputShape {
                expected: self.input_shape.clone(),
                got: g.shape(input).to_vec(),
            });
        }
        let mut param_vars = Vec::new();
        let mut insert = |g: &mut Graph<T>, a: &Array<T>| {
            if trainable {
                let v = g.leaf_array(a);
                param_vars.push(v);
                v
            } else {
                g.constant_array(a)
            }
        };
        let mut cur = input;
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv { weight, stride, padding } => {
                    let w = insert(g, weight);
                    g.conv2d(cur, w, *stride, *padding)?
                }
                Layer::Relu => g.relu(cur),
                Layer::MaxPool { window } => g.maxpool2d(cur, *window)?,
                Layer::Flatten => g.flatten(cur),
                Layer::Dense { weight, bias } => {
                    let w = insert(g, weight);
                    let b = insert(g, bias);
                    g.dense(cur, w, b)?
                }
            };
        }
        Ok((cur, param_vars))
    }

    /// Logits for a plain image, through a scratch graph.
    pub fn forward_array(&self, image: &Array<T>) -> Result<Vec<T>, PredictorError> {
        let mut g = Graph::new();
        let x = g.constant_array(image);
        let (logits, _) = self.forward_graph(&mut g, x, false)?;
        Ok(g.data(logits).to_vec())
    }

    /// Softmax scores for a plain image.
    pub fn class_probabilities(&self, image: &Array<T>) -> Result<Vec<T>, PredictorError> {
        Ok(softmax(&self.forward_array(image)?))
    }

    /// Most probable class (first index on ties).
    pub fn predict(&self, image: &Array<T>) -> Result<usize, PredictorError> {
        Ok(argmax(&self.forward_array(image)?))
    }

    /// Mutable views of the parameter arrays, in the order used by
    /// [`Predictor::forward_graph`].
    fn params_mut(&mut self) -> Vec<&mut Array<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv { weight, .. } => out.push(weight),
                Layer::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub(crate) fn params(&self) -> Vec<&Array<T>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv { weight, .. } => out.push(weight),
                Layer::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }
}

/// Numerically stabilized softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.iter().map(|&e| e / total).collect()
}

/// Numerically stabilized cross-entropy of logits against a class index.
pub fn cross_entropy<T: Scalar>(logits: &[T], target: usize) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let total: T = logits.iter().map(|&v| (v - max).exp()).sum();
    total.ln() - (logits[target] - max)
}

fn he_init<T: Scalar>(rng: &mut ChaCha8Rng, shape: Vec<usize>, fan_in: usize) -> Array<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("valid std");
    Array::from_fn(shape, |_| T::of(normal.sample(rng)))
}

/// Minibatch SGD settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig<T> {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: T,
    pub seed: u64,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self { epochs: 3, batch_size: 16, learning_rate: T::of(0.05), seed: 0 }
    }
}

/// Trains the toy architecture on a synthetic dataset by minibatch SGD on
/// cross-entropy. Returns the predictor and the mean loss per epoch.
pub fn train_toy<T: Scalar>(
    cfg: &TrainConfig<T>,
    data: &SyntheticDataset<T>,
) -> Result<(Predictor<T>, Vec<T>), TrainError> {
    if data.samples().is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut predictor = Predictor::toy(data.side(), data.classes(), cfg.seed);
    let mut shuffle_rng = stream_rng(cfg.seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..data.samples().len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut shuffle_rng);
        let mut epoch_loss = T::zero();
        for (batch_no, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let mut accum: Vec<Array<T>> =
                predictor.params().iter().map(|p| Array::zeros(p.shape().to_vec())).collect();
            let mut batch_loss = T::zero();
            for &i in batch {
                let sample = &data.samples()[i];
                let mut g = Graph::new();
                let x = g.constant_array(&sample.image);
                let (logits, params) = predictor.forward_graph(&mut g, x, true)?;
                let loss = g.softmax_cross_entropy(logits, sample.label)?;
                batch_loss = batch_loss + g.scalar_value(loss);
                g.backward(loss)?;
                for (acc, var) in accum.iter_mut().zip(&params) {
                    let grad = g.grad(*var).expect("trainable parameter gradient");
                    for (a, &d) in acc.data_mut().iter_mut().zip(grad) {
                        *a = *a + d;
                    }
                }
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged { epoch, batch: batch_no });
            }
            let scale = cfg.learning_rate / T::of_usize(batch.len());
            for (param, grad) in predictor.params_mut().into_iter().zip(&accum) {
                for (p, &d) in param.data_mut().iter_mut().zip(grad.data()) {
                    *p = *p - scale * d;
                }
            }
            epoch_loss = epoch_loss + batch_loss;
        }
        epoch_losses.push(epoch_loss / T::of_usize(data.samples().len()));
    }
    Ok((predictor, epoch_losses))
}

/// Fraction of samples the predictor labels correctly.
pub fn accuracy<T: Scalar>(
    predictor: &Predictor<T>,
    data: &SyntheticDataset<T>,
) -> Result<f64, PredictorError> {
    let mut correct = 0usize;
    for sample in data.samples() {
        if predictor.predict(&sample.image)? == sample.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.samples().len().max(1) as f64)
}

/// Fisher-Yates with the supplied generator.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}
