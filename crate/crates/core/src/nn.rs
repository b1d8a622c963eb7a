//! Small fully connected networks with hand-written reverse-mode gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{ParamSet, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Softplus,
    Tanh,
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Softplus => softplus(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation `x` and post-activation `y`.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Softplus => sigmoid(x),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// `y = act(W x + b)` with `W` stored as `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weight.shape().len() != 2 {
            return Err(Error::invalid("dense weight must be rank 2"));
        }
        if bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape("dense bias", weight.shape()[0], bias.numel()));
        }
        Ok(Dense {
            weight,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedForwardNet {
    layers: Vec<Dense>,
}

/// Intermediate values of one forward pass, consumed by [`FeedForwardNet::backward`].
#[derive(Clone, Debug)]
pub struct NetTrace {
    /// Input to each layer (the last entry is the network output).
    acts: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
}

impl NetTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace has at least one activation")
    }

    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }
}

impl FeedForwardNet {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::shape("layer chain", w[0].out_dim(), w[1].in_dim()));
            }
        }
        Ok(FeedForwardNet { layers })
    }

    /// Randomly initialized net. `dims` lists every width from input to
    /// output; hidden layers use `hidden`, the last layer uses `output`.
    pub fn init(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut RngStream,
    ) -> Self {
        Self::build(dims, hidden, output, |fan_in, n| {
            let scale = (1.0 / fan_in as f64).sqrt();
            (0..n).map(|_| rng.next_normal() * scale).collect()
        })
    }

    pub fn zeros(dims: &[usize], hidden: Activation, output: Activation) -> Self {
        Self::build(dims, hidden, output, |_, n| vec![0.0; n])
    }

    fn build(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        mut weights: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|&d| d > 0), "bad dims {dims:?}");
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (dims[i], dims[i + 1]);
                let w = Tensor::new(vec![fan_out, fan_in], weights(fan_in, fan_in * fan_out))
                    .expect("weight init");
                Dense {
                    weight: w,
                    bias: Tensor::zeros(vec![fan_out]),
                    activation: if i + 1 == n { output } else { hidden },
                }
            })
            .collect();
        FeedForwardNet { layers }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    /// Same architecture, all parameters zero. Used for gradient buffers.
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        g.zero_grad();
        g
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.in_dim() {
            return Err(Error::shape("net input", self.in_dim(), x.len()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = affine(layer, &cur);
            for v in cur.iter_mut() {
                *v = layer.activation.apply(*v);
            }
        }
        Ok(cur)
    }

    pub fn forward_traced(&self, x: &[f64]) -> Result<NetTrace> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        acts.push(x.to_vec());
        for layer in &self.layers {
            let z = affine(layer, acts.last().unwrap());
            let y = z.iter().map(|&v| layer.activation.apply(v)).collect();
            pre.push(z);
            acts.push(y);
        }
        Ok(NetTrace { acts, pre })
    }

    /// Back-propagates `upstream` (d loss / d output) through a recorded pass.
    /// Parameter gradients are added into `grads` when given; the gradient
    /// with respect to the input is returned.
    pub fn backward(
        &self,
        trace: &NetTrace,
        upstream: &[f64],
        mut grads: Option<&mut FeedForwardNet>,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.out_dim() {
            return Err(Error::shape("net upstream", self.out_dim(), upstream.len()));
        }
        let mut delta = upstream.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre[li];
            let y = &trace.acts[li + 1];
            if layer.activation != Activation::Identity {
                for j in 0..delta.len() {
                    delta[j] *= layer.activation.derivative(z[j], y[j]);
                }
            }
            let input = &trace.acts[li];
            let n_in = layer.in_dim();
            if let Some(g) = grads.as_deref_mut() {
                let gl = &mut g.layers[li];
                let gw = gl.weight.data_mut();
                for (r, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &mut gw[r * n_in..(r + 1) * n_in];
                        for (w, &xi) in row.iter_mut().zip(input) {
                            *w += d * xi;
                        }
                    }
                }
                for (b, &d) in gl.bias.data_mut().iter_mut().zip(&delta) {
                    *b += d;
                }
            }
            let w = layer.weight.data();
            let mut prev = vec![0.0; n_in];
            for (r, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &w[r * n_in..(r + 1) * n_in];
                    for (p, &wv) in prev.iter_mut().zip(row) {
                        *p += d * wv;
                    }
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Gradients of `upstream · net(input)` with respect to the parameters and the input.
    pub fn gradients(&self, input: &[f64], upstream: &[f64]) -> Result<(FeedForwardNet, Vec<f64>)> {
        let trace = self.forward_traced(input)?;
        let mut grads = self.zeros_like();
        let gx = self.backward(&trace, upstream, Some(&mut grads))?;
        Ok((grads, gx))
    }

    /// Round every parameter through `f32`.
    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}

fn affine(layer: &Dense, x: &[f64]) -> Vec<f64> {
    let n_in = layer.in_dim();
    let w = layer.weight.data();
    layer
        .bias
        .data()
        .iter()
        .enumerate()
        .map(|(r, &b)| {
            let row = &w[r * n_in..(r + 1) * n_in];
            b + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

impl ParamSet for FeedForwardNet {
    fn tensors(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    fn tensor_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|i| [format!("l{i}.weight"), format!("l{i}.bias")])
            .collect()
    }
}

/// Concatenate the tensors of several nets under name prefixes.
pub(crate) fn prefixed_names<'a>(
    parts: impl IntoIterator<Item = (String, &'a FeedForwardNet)>,
) -> Vec<String> {
    parts
        .into_iter()
        .flat_map(|(prefix, net)| {
            net.tensor_names()
                .into_iter()
                .map(move |n| format!("{prefix}.{n}"))
        })
        .collect()
}
