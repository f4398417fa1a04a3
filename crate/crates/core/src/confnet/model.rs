use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::loss::{loss, loss_gradient};
use crate::embedsim::{DegradationKind, ImageRecord};
use crate::linalg::dot;
use crate::rng::stream;
use crate::{Error, Result};

/// Fully connected layer, weights row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.weights[j * self.inputs..(j + 1) * self.inputs]
    }
}

/// `Φ(·; θ)`: ReLU hidden layers and a single sigmoid output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceModel {
    layers: Vec<Layer>,
}

/// Per-layer activations of one forward pass; `acts[0]` is the input.
#[derive(Debug, Default, Clone)]
pub(crate) struct Trace {
    acts: Vec<Vec<f64>>,
    /// Unclamped sigmoid output.
    sigmoid: f64,
}

/// Same shapes as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradient {
    pub fn zeros_like(model: &ConfidenceModel) -> Self {
        Gradient {
            weights: model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            biases: model.layers.iter().map(|l| vec![0.0; l.biases.len()]).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradient) {
        let pairs = self
            .weights
            .iter_mut()
            .zip(&other.weights)
            .chain(self.biases.iter_mut().zip(&other.biases));
        for (a, b) in pairs {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.weights.iter_mut().chain(self.biases.iter_mut()) {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    /// Flattened in [`ConfidenceModel::parameters`] order.
    pub fn flatten(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b).cloned())
            .collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Keeps outputs strictly inside `(0, 1)` where the sigmoid saturates in f64.
fn clamp_open_unit(s: f64) -> f64 {
    s.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

impl ConfidenceModel {
    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) || sizes[sizes.len() - 1] != 1 {
            return Err(Error::InvalidConfig(format!(
                "layer sizes {sizes:?} must be positive and end in 1"
            )));
        }
        Ok(())
    }

    /// All weights and biases zero.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(ConfidenceModel {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn xavier(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(sizes)?;
        let mut rng = stream(seed, "init");
        for layer in &mut model.layers {
            let bound = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(model)
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let mut sizes: Vec<usize> = layers.iter().map(|l| l.inputs).collect();
        sizes.extend(layers.last().map(|l| l.outputs));
        Self::check_sizes(&sizes)?;
        for (l, w) in layers.iter().zip(sizes.windows(2)) {
            if l.inputs != w[0]
                || l.weights.len() != l.inputs * l.outputs
                || l.biases.len() != l.outputs
            {
                return Err(Error::InvalidConfig("inconsistent layer shapes".into()));
            }
        }
        Ok(ConfidenceModel { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes: Vec<usize> = self.layers.iter().map(|l| l.inputs).collect();
        sizes.push(1);
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Flattened `θ`: per layer, weights row-major then biases.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).cloned())
            .collect()
    }

    pub fn set_parameters(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_parameters() {
            return Err(Error::DimensionMismatch {
                expected: self.num_parameters(),
                got: theta.len(),
            });
        }
        let mut it = theta.iter();
        for l in &mut self.layers {
            for x in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *x = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// SHA-256 over the little-endian parameter bytes.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for x in self.parameters() {
            h.update(x.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn forward_traced(&self, x: &[f64], trace: &mut Trace) -> f64 {
        trace.acts.resize_with(self.layers.len(), Vec::new);
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            if l == last {
                let z = layer.biases[0] + dot(layer.row(0), &trace.acts[l]);
                trace.sigmoid = sigmoid(z);
            } else {
                let (done, rest) = trace.acts.split_at_mut(l + 1);
                let input = &done[l];
                let out = &mut rest[0];
                out.clear();
                out.extend((0..layer.outputs).map(|j| (layer.biases[j] + dot(layer.row(j), input)).max(0.0)));
            }
        }
        clamp_open_unit(trace.sigmoid)
    }

    /// `s = Φ(x)`, strictly inside `(0, 1)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward_traced(x, &mut Trace::default()))
    }

    /// Adds `upstream · ∂s/∂θ` for a traced forward pass into `grad`.
    pub(crate) fn backprop(&self, trace: &Trace, upstream: f64, grad: &mut Gradient, delta: &mut Vec<f64>, next: &mut Vec<f64>) {
        let s = trace.sigmoid;
        delta.clear();
        delta.push(upstream * s * (1.0 - s));
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.acts[l];
            let gw = &mut grad.weights[l];
            let gb = &mut grad.biases[l];
            for (j, &dj) in delta.iter().enumerate() {
                if dj == 0.0 {
                    continue;
                }
                gb[j] += dj;
                let row = &mut gw[j * layer.inputs..(j + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(g, a)| *g += dj * a);
            }
            if l == 0 {
                break;
            }
            next.clear();
            next.resize(layer.inputs, 0.0);
            for (j, &dj) in delta.iter().enumerate() {
                if dj == 0.0 {
                    continue;
                }
                next.iter_mut().zip(layer.row(j)).for_each(|(n, w)| *n += w * dj);
            }
            // ReLU gate: the layer input is a post-ReLU activation
            next.iter_mut().zip(input).for_each(|(n, a)| {
                if *a <= 0.0 {
                    *n = 0.0
                }
            });
            std::mem::swap(delta, next);
        }
    }

    /// Loss of one pair and its parameter gradient added into `grad`.
    pub(crate) fn accumulate_pair(&self, x1: &[f64], x2: &[f64], y: f64, grad: &mut Gradient, scratch: &mut Scratch) -> f64 {
        let s1 = self.forward_traced(x1, &mut scratch.first);
        let s2 = self.forward_traced(x2, &mut scratch.second);
        let (g1, g2) = loss_gradient(s1, s2, y);
        if g1 != 0.0 {
            self.backprop(&scratch.first, g1, grad, &mut scratch.delta, &mut scratch.next);
        }
        if g2 != 0.0 {
            self.backprop(&scratch.second, g2, grad, &mut scratch.delta, &mut scratch.next);
        }
        loss(s1, s2, y)
    }

    /// Returns `(L, ∂L/∂θ)` for one mated pair.
    pub fn backward(&self, x1: &[f64], x2: &[f64], y: f64) -> Result<(f64, Gradient)> {
        self.check_input(x1)?;
        self.check_input(x2)?;
        let mut grad = Gradient::zeros_like(self);
        let l = self.accumulate_pair(x1, x2, y, &mut grad, &mut Scratch::default());
        Ok((l, grad))
    }

    /// `θ ← θ − lr·g`
    pub fn apply_gradient(&mut self, grad: &Gradient, lr: f64) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            layer.weights.iter_mut().zip(&grad.weights[l]).for_each(|(w, g)| *w -= lr * g);
            layer.biases.iter_mut().zip(&grad.biases[l]).for_each(|(b, g)| *b -= lr * g);
        }
    }
}

#[derive(Debug, Default)]
pub(crate) struct Scratch {
    first: Trace,
    second: Trace,
    delta: Vec<f64>,
    next: Vec<f64>,
}

/// Model inputs keyed by image id.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    dim: usize,
    index: HashMap<u64, usize>,
    data: Vec<f64>,
}

impl FeatureTable {
    /// The embedding of each record, optionally followed by one 0/1 feature
    /// per degradation kind.
    pub fn input_for(record: &ImageRecord, with_degradations: bool) -> Vec<f64> {
        let mut x = record.embedding.clone();
        if with_degradations {
            x.extend(DegradationKind::ALL.iter().map(|k| {
                if record.degradations.contains(*k) {
                    1.0
                } else {
                    0.0
                }
            }));
        }
        x
    }

    pub fn from_records(records: &[ImageRecord], with_degradations: bool) -> Self {
        let dim = records.first().map_or(0, |r| {
            r.embedding.len() + if with_degradations { DegradationKind::ALL.len() } else { 0 }
        });
        let mut data = Vec::with_capacity(dim * records.len());
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            index.insert(r.image_id, i);
            data.extend(Self::input_for(r, with_degradations));
        }
        FeatureTable { dim, index, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn position(&self, image_id: u64) -> Option<usize> {
        self.index.get(&image_id).copied()
    }

    pub fn row(&self, position: usize) -> &[f64] {
        &self.data[position * self.dim..(position + 1) * self.dim]
    }

    pub fn get(&self, image_id: u64) -> Option<&[f64]> {
        self.position(image_id).map(|p| self.row(p))
    }
}
