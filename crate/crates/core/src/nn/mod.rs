//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! Parameters live in one flat buffer. Each layer contributes its weight
//! matrix (row-major, shape `(out, in)`) followed by its bias vector, so a
//! gradient buffer of the same length lines up with the parameters and can be
//! handed straight to an [`Optimizer`].

mod optim;
mod policy;

pub use optim::{Optimizer, OptimizerKind};
pub use policy::GaussianPolicy;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    /// Start of each layer's weight block inside `params`.
    offsets: Vec<usize>,
}

/// Cached layer outputs from a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone, Default)]
pub struct Trace {
    /// `layers[0]` is the input; `layers[k]` the output of layer `k`.
    layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn input(&self) -> &[f64] {
        self.layers.first().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: Vec<f64>,
    pub input: Vec<f64>,
}

fn layout(widths: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(widths.len().saturating_sub(1));
    let mut total = 0;
    for pair in widths.windows(2) {
        offsets.push(total);
        total += pair[0] * pair[1] + pair[1];
    }
    (offsets, total)
}

impl Mlp {
    /// All-zero network. Useful as a base for hand-set parameters.
    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Config(format!(
                "layer widths must have at least two positive entries, got {widths:?}"
            )));
        }
        let (offsets, total) = layout(widths);
        Ok(Self {
            widths: widths.to_vec(),
            activation,
            params: vec![0.0; total],
            offsets,
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, activation)?;
        for layer in 0..net.num_layers() {
            let (fan_in, fan_out) = (net.widths[layer], net.widths[layer + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            let start = net.offsets[layer];
            for w in &mut net.params[start..start + fan_in * fan_out] {
                *w = dist.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn layer_widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("at least two widths")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight matrix of `layer`, row-major `(out, in)`.
    pub fn weights(&self, layer: usize) -> &[f64] {
        let start = self.offsets[layer];
        &self.params[start..start + self.widths[layer] * self.widths[layer + 1]]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let start = self.offsets[layer];
        let len = self.widths[layer] * self.widths[layer + 1];
        &mut self.params[start..start + len]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        let start = self.offsets[layer] + self.widths[layer] * self.widths[layer + 1];
        &self.params[start..start + self.widths[layer + 1]]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let start = self.offsets[layer] + self.widths[layer] * self.widths[layer + 1];
        let len = self.widths[layer + 1];
        &mut self.params[start..start + len]
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("mlp forward", self.input_dim(), x.len())?;
        let mut current = x.to_vec();
        let mut next = Vec::new();
        for layer in 0..self.num_layers() {
            self.layer_forward(layer, &current, &mut next);
            std::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    /// Scalar output of a network with a single output unit.
    pub fn forward_scalar(&self, x: &[f64]) -> Result<f64> {
        check_dim("mlp scalar output", 1, self.output_dim())?;
        Ok(self.forward(x)?[0])
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        let mut trace = Trace::default();
        self.forward_into(x, &mut trace)?;
        Ok(trace)
    }

    /// Forward pass reusing the buffers of an existing trace.
    pub fn forward_into(&self, x: &[f64], trace: &mut Trace) -> Result<()> {
        check_dim("mlp forward", self.input_dim(), x.len())?;
        trace.layers.resize_with(self.widths.len(), Vec::new);
        trace.layers[0].clear();
        trace.layers[0].extend_from_slice(x);
        for layer in 0..self.num_layers() {
            let (before, after) = trace.layers.split_at_mut(layer + 1);
            self.layer_forward(layer, &before[layer], &mut after[0]);
        }
        Ok(())
    }

    fn layer_forward(&self, layer: usize, input: &[f64], out: &mut Vec<f64>) {
        let (fan_in, fan_out) = (self.widths[layer], self.widths[layer + 1]);
        let w = self.weights(layer);
        let b = self.biases(layer);
        let hidden = layer + 1 < self.num_layers();
        out.clear();
        out.extend((0..fan_out).map(|j| {
            let row = &w[j * fan_in..(j + 1) * fan_in];
            let z = b[j] + row.iter().zip(input).map(|(wi, xi)| wi * xi).sum::<f64>();
            if hidden {
                self.activation.apply(z)
            } else {
                z
            }
        }));
    }

    /// Gradients of `upstream · output` with respect to every parameter and the input.
    pub fn backward(&self, trace: &Trace, upstream: &[f64]) -> Result<Gradients> {
        let mut params = vec![0.0; self.num_params()];
        let input = self.backward_accumulate(trace, upstream, &mut params)?;
        Ok(Gradients { params, input })
    }

    /// Adds the parameter gradient of `upstream · output` into `grad` and returns the input gradient.
    pub fn backward_accumulate(&self, trace: &Trace, upstream: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        check_dim("mlp backward upstream", self.output_dim(), upstream.len())?;
        check_dim("mlp backward gradient buffer", self.num_params(), grad.len())?;
        check_dim("mlp backward trace", self.widths.len(), trace.layers.len())?;

        let mut delta = upstream.to_vec();
        for layer in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.widths[layer], self.widths[layer + 1]);
            if layer + 1 < self.num_layers() {
                for (d, &y) in delta.iter_mut().zip(&trace.layers[layer + 1]) {
                    *d *= self.activation.derivative_from_output(y);
                }
            }
            let input = &trace.layers[layer];
            let w_start = self.offsets[layer];
            let b_start = w_start + fan_in * fan_out;
            for j in 0..fan_out {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                grad[b_start + j] += dj;
                let row = &mut grad[w_start + j * fan_in..w_start + (j + 1) * fan_in];
                for (g, &xi) in row.iter_mut().zip(input) {
                    *g += dj * xi;
                }
            }
            let w = self.weights(layer);
            let mut prev = vec![0.0; fan_in];
            for (j, &dj) in delta.iter().enumerate() {
                if dj == 0.0 {
                    continue;
                }
                for (p, &wij) in prev.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                    *p += dj * wij;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }
}

/// On-disk form shared by plain networks and Gaussian policies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkRepr {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    /// `weights[layer][out][in]`.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_std: Option<Vec<f64>>,
}

impl From<Mlp> for NetworkRepr {
    fn from(net: Mlp) -> Self {
        let weights = (0..net.num_layers())
            .map(|l| {
                net.weights(l)
                    .chunks(net.widths[l])
                    .map(<[f64]>::to_vec)
                    .collect()
            })
            .collect();
        let biases = (0..net.num_layers()).map(|l| net.biases(l).to_vec()).collect();
        NetworkRepr {
            layer_widths: net.widths,
            activation: net.activation,
            weights,
            biases,
            log_std: None,
        }
    }
}

impl NetworkRepr {
    pub(crate) fn into_mlp(self) -> Result<Mlp> {
        let mut net = Mlp::zeros(&self.layer_widths, self.activation)?;
        if self.weights.len() != net.num_layers() || self.biases.len() != net.num_layers() {
            return Err(Error::Config(format!(
                "expected {} weight and bias blocks, got {} and {}",
                net.num_layers(),
                self.weights.len(),
                self.biases.len()
            )));
        }
        for layer in 0..net.num_layers() {
            let (fan_in, fan_out) = (net.widths[layer], net.widths[layer + 1]);
            let rows = &self.weights[layer];
            if rows.len() != fan_out || rows.iter().any(|r| r.len() != fan_in) {
                return Err(Error::Config(format!(
                    "layer {layer} weights must be {fan_out}x{fan_in}"
                )));
            }
            if self.biases[layer].len() != fan_out {
                return Err(Error::Config(format!("layer {layer} bias must have {fan_out} entries")));
            }
            let dst = net.weights_mut(layer);
            for (j, row) in rows.iter().enumerate() {
                dst[j * fan_in..(j + 1) * fan_in].copy_from_slice(row);
            }
            net.biases_mut(layer).copy_from_slice(&self.biases[layer]);
        }
        if !net.is_finite() {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(net)
    }
}

impl TryFrom<NetworkRepr> for Mlp {
    type Error = Error;

    fn try_from(repr: NetworkRepr) -> Result<Self> {
        if repr.log_std.is_some() {
            return Err(Error::Config(
                "plain network must not carry log_std; load it as a policy".into(),
            ));
        }
        repr.into_mlp()
    }
}
