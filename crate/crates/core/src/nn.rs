//! Minimal dense network kernel: a softmax-cross-entropy MLP with
//! hand-derived backpropagation, a central-difference gradient oracle and
//! plain SGD.

use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and its output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidArgument(format!("unknown activation '{other}'"))),
        }
    }
}

/// Layer sizes `(input, hidden..., classes)` plus the hidden activation. The
/// head is always softmax cross-entropy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "an MLP needs at least an input and an output size".into(),
            ));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must be positive: {layer_sizes:?}"
            )));
        }
        Ok(Self { layer_sizes, activation })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of affine layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// e.g. `mlp-64x16x4-tanh`
    pub fn name(&self) -> String {
        let sizes: Vec<String> = self.layer_sizes.iter().map(|s| s.to_string()).collect();
        format!("mlp-{}-{}", sizes.join("x"), self.activation)
    }

    /// Stable 64-bit fingerprint of the architecture, used in dump headers.
    pub fn fingerprint(&self) -> u64 {
        let digest = Sha256::digest(self.name().as_bytes());
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(bytes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `[out x in]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

/// Per-layer weights and biases. Gradients share the exact same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    layers: Vec<Layer>,
}

pub type GradientSet = Params;

impl Params {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Layer {
                weight: Tensor::zeros(vec![w[1], w[0]]),
                bias: Tensor::zeros(vec![w[1]]),
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        for (i, l) in layers.iter().enumerate() {
            if l.weight.shape().len() != 2 || l.bias.shape() != [l.weight.rows()] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: weight {:?} incompatible with bias {:?}",
                    l.weight.shape(),
                    l.bias.shape()
                )));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].weight.cols() != pair[0].weight.rows() {
                return Err(Error::ShapeMismatch(format!(
                    "layer {} input {} does not match layer {i} output {}",
                    i + 1,
                    pair[1].weight.cols(),
                    pair[0].weight.rows()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Whether the layout matches `spec`.
    pub fn conforms(&self, spec: &MlpSpec) -> bool {
        self.layers.len() == spec.depth()
            && self.layers.iter().zip(spec.layer_sizes.windows(2)).all(|(l, w)| {
                l.weight.shape() == [w[1], w[0]] && l.bias.shape() == [w[1]]
            })
    }

    pub fn check_congruent(&self, other: &Params) -> Result<()> {
        let same = self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weight.same_shape(&b.weight) && a.bias.same_shape(&b.bias)
            });
        if same {
            Ok(())
        } else {
            Err(Error::ShapeMismatch("parameter sets are not congruent".into()))
        }
    }

    /// Flattened view in layer order, weight then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(l.bias.data());
        }
        out
    }

    /// Rebuilds a set with this layout from a flat buffer.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Params> {
        if flat.len() != self.num_params() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut offset = 0;
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (nw, nb) = (l.weight.len(), l.bias.len());
            let weight = Tensor::new(l.weight.shape().to_vec(), flat[offset..offset + nw].to_vec())?;
            offset += nw;
            let bias = Tensor::new(l.bias.shape().to_vec(), flat[offset..offset + nb].to_vec())?;
            offset += nb;
            layers.push(Layer { weight, bias });
        }
        Ok(Params { layers })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Params {
        Params {
            layers: self
                .layers
                .iter()
                .map(|l| Layer { weight: l.weight.map(&f), bias: l.bias.map(&f) })
                .collect(),
        }
    }

    pub fn zip_map(&self, other: &Params, f: impl Fn(f64, f64) -> f64) -> Result<Params> {
        self.check_congruent(other)?;
        let layers = self
            .layers
            .iter()
            .zip(&other.layers)
            .map(|(a, b)| {
                Ok(Layer {
                    weight: a.weight.zip_map(&b.weight, &f)?,
                    bias: a.bias.zip_map(&b.bias, &f)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Params { layers })
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.data().iter().chain(l.bias.data()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// One labelled example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Pre-activations `z_l = W_l a_l + b_l` for every layer; the last entry is the logits.
    pub pre_activations: Vec<Vec<f64>>,
    /// Layer inputs: `activations[0]` is `x`, `activations[l]` feeds layer `l`.
    pub activations: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Xavier-uniform weights, zero biases, deterministic in `seed`.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Params {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::zeros(spec);
    for (layer, w) in params.layers.iter_mut().zip(spec.layer_sizes.windows(2)) {
        let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
        let dist = Uniform::new(-bound, bound).expect("finite positive bound");
        for v in layer.weight.data_mut() {
            *v = dist.sample(&mut rng);
        }
    }
    params
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln()
}

pub fn forward(spec: &MlpSpec, params: &Params, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != spec.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "input has {} values, model expects {}",
            x.len(),
            spec.input_dim()
        )));
    }
    if !params.conforms(spec) {
        return Err(Error::ShapeMismatch("parameters do not match the model spec".into()));
    }
    let depth = spec.depth();
    let mut pre_activations = Vec::with_capacity(depth);
    let mut activations = Vec::with_capacity(depth);
    let mut input = x.to_vec();
    for (l, layer) in params.layers.iter().enumerate() {
        let z: Vec<f64> = (0..layer.weight.rows())
            .map(|i| {
                layer
                    .weight
                    .row(i)
                    .iter()
                    .zip(&input)
                    .map(|(w, a)| w * a)
                    .sum::<f64>()
                    + layer.bias.data()[i]
            })
            .collect();
        let next = if l + 1 < depth {
            z.iter().map(|&v| spec.activation.apply(v)).collect()
        } else {
            Vec::new()
        };
        activations.push(std::mem::replace(&mut input, next));
        pre_activations.push(z);
    }
    let logits = pre_activations.last().unwrap().clone();
    let probabilities = softmax(&logits);
    Ok(ForwardTrace { pre_activations, activations, logits, probabilities })
}

/// Cross-entropy loss only (no backward pass).
pub fn loss(spec: &MlpSpec, params: &Params, x: &[f64], label: usize) -> Result<f64> {
    check_label(spec, label)?;
    let trace = forward(spec, params, x)?;
    Ok(log_sum_exp(&trace.logits) - trace.logits[label])
}

fn check_label(spec: &MlpSpec, label: usize) -> Result<()> {
    if label >= spec.num_classes() {
        Err(Error::InvalidLabel { label, classes: spec.num_classes() })
    } else {
        Ok(())
    }
}

/// Loss `-ln p_label` and its gradient by backpropagation.
pub fn loss_and_grad(
    spec: &MlpSpec,
    params: &Params,
    x: &[f64],
    label: usize,
) -> Result<(f64, GradientSet, ForwardTrace)> {
    check_label(spec, label)?;
    let trace = forward(spec, params, x)?;
    let loss = log_sum_exp(&trace.logits) - trace.logits[label];

    let mut grads = Params::zeros(spec);
    let mut delta = trace.probabilities.clone();
    delta[label] -= 1.0;
    for l in (0..spec.depth()).rev() {
        let input = &trace.activations[l];
        {
            let g = &mut grads.layers[l];
            let cols = input.len();
            let gw = g.weight.data_mut();
            for (i, d) in delta.iter().enumerate() {
                for (j, a) in input.iter().enumerate() {
                    gw[i * cols + j] = d * a;
                }
            }
            g.bias.data_mut().copy_from_slice(&delta);
        }
        if l > 0 {
            let w = &params.layers[l].weight;
            let z_prev = &trace.pre_activations[l - 1];
            delta = (0..w.cols())
                .map(|j| {
                    let back: f64 = delta.iter().enumerate().map(|(i, d)| w.at(i, j) * d).sum();
                    back * spec.activation.derivative(z_prev[j], input[j])
                })
                .collect();
        }
    }
    Ok((loss, grads, trace))
}

/// Mean loss and mean gradient over a batch, reduced in index order.
pub fn batch_loss_and_grad(
    spec: &MlpSpec,
    params: &Params,
    batch: &[Sample],
) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total_loss = 0.0;
    let mut sum = vec![0.0; params.num_params()];
    for s in batch {
        let (l, g, _) = loss_and_grad(spec, params, s.x.data(), s.label)?;
        total_loss += l;
        for (acc, v) in sum.iter_mut().zip(g.iter()) {
            *acc += v;
        }
    }
    let n = batch.len() as f64;
    let mean: Vec<f64> = sum.into_iter().map(|v| v / n).collect();
    Ok((total_loss / n, params.with_flat(&mean)?))
}

/// Central differences `(L(θ+h) - L(θ-h)) / 2h`, one parameter at a time.
pub fn finite_diff_gradient(
    spec: &MlpSpec,
    params: &Params,
    x: &[f64],
    label: usize,
    h: f64,
) -> Result<GradientSet> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    let base = params.flatten();
    let mut probe = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        probe[k] = base[k] + h;
        let up = loss(spec, &params.with_flat(&probe)?, x, label)?;
        probe[k] = base[k] - h;
        let down = loss(spec, &params.with_flat(&probe)?, x, label)?;
        probe[k] = base[k];
        out.push((up - down) / (2.0 * h));
    }
    params.with_flat(&out)
}

/// `θ ← θ - lr·g`
pub fn sgd_step(params: &Params, grads: &GradientSet, lr: f64) -> Result<Params> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::InvalidArgument(format!("learning rate must be non-negative, got {lr}")));
    }
    params.zip_map(grads, |p, g| p - lr * g)
}

pub fn predict(spec: &MlpSpec, params: &Params, x: &[f64]) -> Result<usize> {
    let trace = forward(spec, params, x)?;
    Ok(argmax(&trace.logits))
}

pub fn accuracy(spec: &MlpSpec, params: &Params, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for s in samples {
        if predict(spec, params, s.x.data())? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

pub fn mean_loss(spec: &MlpSpec, params: &Params, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in samples {
        total += loss(spec, params, s.x.data(), s.label)?;
    }
    Ok(total / samples.len() as f64)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tanh_spec(sizes: &[usize]) -> MlpSpec {
        MlpSpec::new(sizes.to_vec(), Activation::Tanh).unwrap()
    }

    fn random_input(dim: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Independent naive forward pass: explicit loops, no shared helpers.
    fn naive_probabilities(spec: &MlpSpec, params: &Params, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        let depth = params.layers().len();
        for (l, layer) in params.layers().iter().enumerate() {
            let out = layer.weight.rows();
            let inp = layer.weight.cols();
            let mut z = vec![0.0; out];
            for i in 0..out {
                let mut acc = layer.bias.data()[i];
                for j in 0..inp {
                    acc += layer.weight.data()[i * inp + j] * a[j];
                }
                z[i] = acc;
            }
            a = if l + 1 < depth {
                z.iter()
                    .map(|&v| match spec.activation() {
                        Activation::Tanh => v.tanh(),
                        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
                        Activation::Relu => if v > 0.0 { v } else { 0.0 },
                    })
                    .collect()
            } else {
                z
            };
        }
        let mut e: Vec<f64> = a.iter().map(|v| v.exp()).collect();
        let s: f64 = e.iter().sum();
        for v in &mut e {
            *v /= s;
        }
        e
    }

    #[test]
    fn init_biases_are_zero_and_deterministic() {
        let spec = tanh_spec(&[2, 2]);
        let p = init_params(&spec, 3);
        assert_eq!(p.layers()[0].bias.data(), &[0.0, 0.0]);
        assert_eq!(p, init_params(&spec, 3));
        assert_ne!(p, init_params(&spec, 4));
    }

    #[test]
    fn init_weights_respect_xavier_bound() {
        let spec = tanh_spec(&[64, 32, 10]);
        let p = init_params(&spec, 7);
        let bound = (6.0f64 / 96.0).sqrt();
        assert!(p.layers()[0].weight.data().iter().all(|w| w.abs() <= bound));
        let bound2 = (6.0f64 / 42.0).sqrt();
        assert!(p.layers()[1].weight.data().iter().all(|w| w.abs() <= bound2));
    }

    #[test]
    fn zero_params_give_uniform_probabilities() {
        let spec = tanh_spec(&[3, 5, 4]);
        let t = forward(&spec, &Params::zeros(&spec), &[0.3, -2.0, 7.0]).unwrap();
        for p in t.probabilities {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = tanh_spec(&[2, 2]);
        let mut p = Params::zeros(&spec);
        p.layers_mut()[0].weight = Tensor::matrix(2, 2, vec![1., 0., 0., 1.]).unwrap();
        let t = forward(&spec, &p, &[1.0, 0.0]).unwrap();
        assert_eq!(t.logits, vec![1.0, 0.0]);
    }

    #[test]
    fn forward_matches_naive_reimplementation() {
        for seed in 0..20 {
            for act in [Activation::Tanh, Activation::Sigmoid, Activation::Relu] {
                let spec = MlpSpec::new(vec![4, 3, 2], act).unwrap();
                let p = init_params(&spec, seed);
                let x = random_input(4, seed + 100);
                let t = forward(&spec, &p, &x).unwrap();
                let naive = naive_probabilities(&spec, &p, &x);
                for (a, b) in t.probabilities.iter().zip(&naive) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let spec = tanh_spec(&[3, 2]);
        assert!(matches!(
            forward(&spec, &Params::zeros(&spec), &[1.0]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn uniform_state_loss_is_ln_k() {
        let spec = tanh_spec(&[3, 4, 5]);
        let (l, g, _) = loss_and_grad(&spec, &Params::zeros(&spec), &[1.0, 2.0, 3.0], 2).unwrap();
        assert!((l - 5f64.ln()).abs() < 1e-14);
        let last = &g.layers()[1].bias;
        let expected = [0.2, 0.2, -0.8, 0.2, 0.2];
        for (a, b) in last.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_label_is_rejected() {
        let spec = tanh_spec(&[2, 3]);
        assert!(matches!(
            loss_and_grad(&spec, &Params::zeros(&spec), &[0.0, 0.0], 3),
            Err(Error::InvalidLabel { label: 3, classes: 3 })
        ));
    }

    #[test]
    fn backprop_matches_finite_differences_smooth_nets() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for trial in 0..100u64 {
            let act = if trial % 2 == 0 { Activation::Tanh } else { Activation::Sigmoid };
            let depth = rng.random_range(1..=3);
            let mut sizes = vec![rng.random_range(1..=5)];
            for _ in 0..depth {
                sizes.push(rng.random_range(2..=5));
            }
            let spec = MlpSpec::new(sizes, act).unwrap();
            let params = init_params(&spec, trial);
            let x = random_input(spec.input_dim(), trial + 1000);
            let label = rng.random_range(0..spec.num_classes());
            let (_, g, _) = loss_and_grad(&spec, &params, &x, label).unwrap();
            let fd = finite_diff_gradient(&spec, &params, &x, label, 1e-5).unwrap();
            for (a, b) in g.iter().zip(fd.iter()) {
                let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-4);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-6, "worst relative error {worst:e}");
    }

    #[test]
    fn relu_backprop_matches_away_from_kinks() {
        let spec = MlpSpec::new(vec![4, 6, 3], Activation::Relu).unwrap();
        for seed in 0..10 {
            let params = init_params(&spec, seed);
            let x = random_input(4, seed + 50);
            let (_, g, trace) = loss_and_grad(&spec, &params, &x, 1).unwrap();
            if trace.pre_activations[0].iter().any(|z| z.abs() < 1e-6) {
                continue;
            }
            let fd = finite_diff_gradient(&spec, &params, &x, 1, 1e-7).unwrap();
            for (a, b) in g.iter().zip(fd.iter()) {
                assert!((a - b).abs() < 1e-6 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn finite_differences_on_single_layer_toy() {
        // One affine layer with two classes: dL/db = p - y in closed form.
        let spec = tanh_spec(&[1, 2]);
        let mut p = Params::zeros(&spec);
        p.layers_mut()[0].weight = Tensor::matrix(2, 1, vec![0.5, -0.25]).unwrap();
        let x = [2.0];
        let z = [1.0, -0.5];
        let p0 = 1.0 / (1.0 + (z[1] - z[0] as f64).exp());
        let expected = [p0 - 1.0, 1.0 - p0];
        let fd = finite_diff_gradient(&spec, &p, &x, 0, 1e-5).unwrap();
        for (a, b) in fd.layers()[0].bias.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-8);
        }
        for (a, b) in fd.layers()[0].weight.data().iter().zip(expected) {
            assert!((a - 2.0 * b).abs() < 1e-8);
        }
    }

    #[test]
    fn finite_differences_vanish_at_symmetric_stationary_point() {
        // x = 0 into a zero-bias net whose output rows are identical: every
        // class has the same logit, and the gradient w.r.t. W1 is zero.
        let spec = tanh_spec(&[3, 2]);
        let p = Params::zeros(&spec);
        let fd = finite_diff_gradient(&spec, &p, &[0.0, 0.0, 0.0], 0, 1e-5).unwrap();
        assert!(fd.layers()[0].weight.data().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn finite_difference_error_is_second_order() {
        let spec = tanh_spec(&[3, 4, 3]);
        let params = init_params(&spec, 5).map(|w| 2.0 * w);
        let x = [0.7, -1.1, 0.4];
        let (_, g, _) = loss_and_grad(&spec, &params, &x, 2).unwrap();
        let err = |h: f64| {
            let fd = finite_diff_gradient(&spec, &params, &x, 2, h).unwrap();
            g.iter().zip(fd.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        let ratio = err(1e-3) / err(5e-4);
        assert!((3.5..4.5).contains(&ratio), "error ratio {ratio}");
    }

    #[test]
    fn sgd_step_arithmetic() {
        let spec = tanh_spec(&[1, 1]);
        let p = Params::zeros(&spec).with_flat(&[1.0, 0.0]).unwrap();
        let g = p.with_flat(&[2.0, 0.0]).unwrap();
        assert_eq!(sgd_step(&p, &g, 0.5).unwrap().flatten(), vec![0.0, 0.0]);
        assert_eq!(sgd_step(&p, &g, 0.0).unwrap(), p);
    }

    #[test]
    fn sgd_descends_convex_loss() {
        // A single softmax layer is convex in its parameters.
        let spec = tanh_spec(&[3, 3]);
        let batch: Vec<Sample> = (0..6)
            .map(|i| Sample {
                x: Tensor::vector(random_input(3, i)).unwrap(),
                label: (i % 3) as usize,
            })
            .collect();
        let mut p = init_params(&spec, 1);
        let mut prev = f64::INFINITY;
        for _ in 0..200 {
            let (l, g) = batch_loss_and_grad(&spec, &p, &batch).unwrap();
            assert!(l <= prev + 1e-15);
            prev = l;
            p = sgd_step(&p, &g, 0.05).unwrap();
        }
    }

    #[test]
    fn sgd_rejects_incongruent_shapes() {
        let a = Params::zeros(&tanh_spec(&[2, 2]));
        let b = Params::zeros(&tanh_spec(&[3, 2]));
        assert!(matches!(sgd_step(&a, &b, 0.1), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3], Activation::Tanh).is_err());
        assert!(MlpSpec::new(vec![3, 0, 2], Activation::Tanh).is_err());
        assert_eq!(tanh_spec(&[64, 16, 4]).name(), "mlp-64x16x4-tanh");
    }
}
