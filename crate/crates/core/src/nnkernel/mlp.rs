use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{ParamTensor, Parameterized};
use super::{sigmoid, softmax_backward, softmax_unchecked};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: &mut [f64]) {
        match self {
            Activation::Tanh => v.iter_mut().for_each(|x| *x = x.tanh()),
            Activation::Relu => v.iter_mut().for_each(|x| *x = x.max(0.0)),
        }
    }

    /// Derivative expressed through the activation's output.
    fn backprop(self, out: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Tanh => {
                for (g, a) in grad.iter_mut().zip(out) {
                    *g *= 1.0 - a * a;
                }
            }
            Activation::Relu => {
                for (g, a) in grad.iter_mut().zip(out) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Linear,
    Softmax { temperature: f64 },
    Sigmoid,
}

/// Architecture description: `sizes = [input, hidden.., output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize, activation: Activation, head: Head) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Self {
            sizes,
            activation,
            head,
        }
    }
}

/// Per-layer inputs of the last forward pass, plus the head output.
#[derive(Debug, Clone, Default)]
struct Cache {
    valid: bool,
    inputs: Vec<Vec<f64>>,
    output: Vec<f64>,
}

/// Dense layers; weights are stored input-major (`shape = [in, out]`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    head: Head,
    weights: Vec<ParamTensor>,
    biases: Vec<ParamTensor>,
    #[serde(skip)]
    cache: Cache,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.sizes == other.sizes
            && self.activations == other.activations
            && self.head == other.head
            && self.weights.iter().zip(&other.weights).all(|(a, b)| a.values == b.values)
            && self.biases.iter().zip(&other.biases).all(|(a, b)| a.values == b.values)
    }
}

impl Mlp {
    /// Weights and biases drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for l in 0..net.weights.len() {
            let bound = 1.0 / (net.sizes[l] as f64).sqrt();
            let (i, o) = (net.sizes[l], net.sizes[l + 1]);
            net.weights[l] = ParamTensor::uniform(&[i, o], bound, rng);
            net.biases[l] = ParamTensor::uniform(&[o], bound, rng);
        }
        Ok(net)
    }

    pub fn zeros(spec: &MlpSpec) -> Result<Self> {
        if spec.sizes.len() < 2 {
            return Err(Error::config("an mlp needs at least one layer"));
        }
        if spec.sizes.contains(&0) {
            return Err(Error::config(format!("layer sizes must be positive: {:?}", spec.sizes)));
        }
        if let Head::Softmax { temperature } = spec.head {
            if !(temperature > 0.0) {
                return Err(Error::config("softmax head temperature must be positive"));
            }
        }
        let n = spec.sizes.len() - 1;
        let weights = (0..n)
            .map(|l| ParamTensor::zeros(&[spec.sizes[l], spec.sizes[l + 1]]))
            .collect();
        let biases = (0..n).map(|l| ParamTensor::zeros(&[spec.sizes[l + 1]])).collect();
        Ok(Self {
            sizes: spec.sizes.clone(),
            activations: vec![spec.activation; n - 1],
            head: spec.head,
            weights,
            biases,
            cache: Cache::default(),
        })
    }

    /// Single linear layer computing `y = x`.
    pub fn identity(dim: usize) -> Result<Self> {
        let mut net = Self::zeros(&MlpSpec::new(dim, &[], dim, Activation::Tanh, Head::Linear))?;
        for i in 0..dim {
            net.weights[0].values[i * dim + i] = 1.0;
        }
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least one layer")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn weight(&self, layer: usize) -> &ParamTensor {
        &self.weights[layer]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut ParamTensor {
        &mut self.weights[layer]
    }

    pub fn bias(&self, layer: usize) -> &ParamTensor {
        &self.biases[layer]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut ParamTensor {
        &mut self.biases[layer]
    }

    /// Copies parameter values (not gradients) from a network of the same shape.
    pub fn copy_params_from(&mut self, other: &Mlp) {
        assert_eq!(self.sizes, other.sizes, "copy between mismatched networks");
        for (dst, src) in self.weights.iter_mut().zip(&other.weights) {
            dst.values.copy_from_slice(&src.values);
        }
        for (dst, src) in self.biases.iter_mut().zip(&other.biases) {
            dst.values.copy_from_slice(&src.values);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.biases).all(ParamTensor::is_finite)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::config(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn affine(&self, layer: usize, x: &[f64], out: &mut Vec<f64>) {
        let n_out = self.sizes[layer + 1];
        let w = &self.weights[layer].values;
        out.clear();
        out.extend_from_slice(&self.biases[layer].values);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &w[i * n_out..(i + 1) * n_out];
            for (o, &wv) in out.iter_mut().zip(row) {
                *o += wv * xi;
            }
        }
    }

    fn apply_head(&self, out: &mut Vec<f64>) {
        match self.head {
            Head::Linear => {}
            Head::Softmax { temperature } => *out = softmax_unchecked(out, temperature),
            Head::Sigmoid => out.iter_mut().for_each(|x| *x = sigmoid(*x)),
        }
    }

    /// Output without touching the backward cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for l in 0..self.weights.len() {
            self.affine(l, &cur, &mut next);
            if l + 1 < self.weights.len() {
                self.activations[l].apply(&mut next);
            }
            std::mem::swap(&mut cur, &mut next);
        }
        self.apply_head(&mut cur);
        Ok(cur)
    }

    /// Output, caching every layer input for the next [`Mlp::backward`].
    pub fn forward(&mut self, input: &[f64]) -> Result<&[f64]> {
        self.check_input(input)?;
        let n = self.weights.len();
        let mut cache = std::mem::take(&mut self.cache);
        cache.inputs.resize_with(n, Vec::new);
        cache.inputs[0].clear();
        cache.inputs[0].extend_from_slice(input);
        for l in 0..n {
            let (done, rest) = cache.inputs.split_at_mut(l + 1);
            let target = if l + 1 < n { &mut rest[0] } else { &mut cache.output };
            self.affine(l, &done[l], target);
            if l + 1 < n {
                self.activations[l].apply(target);
            }
        }
        self.apply_head(&mut cache.output);
        cache.valid = true;
        self.cache = cache;
        Ok(&self.cache.output)
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, upstream: &[f64]) -> Result<Vec<f64>> {
        self.backward_impl(upstream, true)
    }

    /// Like [`Mlp::backward`] but skips the input gradient.
    pub fn backward_params(&mut self, upstream: &[f64]) -> Result<()> {
        self.backward_impl(upstream, false).map(|_| ())
    }

    fn backward_impl(&mut self, upstream: &[f64], want_input: bool) -> Result<Vec<f64>> {
        if !self.cache.valid {
            return Err(Error::usage("backward called without a preceding forward"));
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::config(format!(
                "upstream gradient has length {}, network output is {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        self.cache.valid = false;
        let mut grad = match self.head {
            Head::Linear => upstream.to_vec(),
            Head::Softmax { temperature } => softmax_backward(&self.cache.output, upstream, temperature),
            Head::Sigmoid => self
                .cache
                .output
                .iter()
                .zip(upstream)
                .map(|(s, g)| g * s * (1.0 - s))
                .collect(),
        };
        for l in (0..self.weights.len()).rev() {
            let n_out = self.sizes[l + 1];
            let x = &self.cache.inputs[l];
            {
                let w = &mut self.weights[l];
                if w.grad.len() != w.values.len() {
                    w.zero_grad();
                }
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    let row = &mut w.grad[i * n_out..(i + 1) * n_out];
                    for (dw, &g) in row.iter_mut().zip(&grad) {
                        *dw += xi * g;
                    }
                }
                let b = &mut self.biases[l];
                if b.grad.len() != b.values.len() {
                    b.zero_grad();
                }
                for (db, &g) in b.grad.iter_mut().zip(&grad) {
                    *db += g;
                }
            }
            if l == 0 && !want_input {
                return Ok(Vec::new());
            }
            let w = &self.weights[l].values;
            let mut dx: Vec<f64> = (0..self.sizes[l])
                .map(|i| {
                    w[i * n_out..(i + 1) * n_out]
                        .iter()
                        .zip(&grad)
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
            if l > 0 {
                self.activations[l - 1].backprop(x, &mut dx);
            }
            grad = dx;
        }
        Ok(grad)
    }
}

impl Parameterized for Mlp {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.weights.iter_mut().chain(self.biases.iter_mut()).collect()
    }
}
