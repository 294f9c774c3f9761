use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{Gradient, Layout, ParamVector};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
}

/// How the final layer's outputs are meant to be read. The network itself
/// always emits raw values; a softmax head emits logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputHead {
    Linear,
    SoftmaxLogits,
}

/// Shape of a fully connected network.
///
/// Layer `k` owns two slices, `l{k}.weight` with shape `[in, out]` stored
/// row-major and `l{k}.bias` with shape `[out]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub output_head: OutputHead,
}

/// Activations recorded by a forward pass, consumed by the backward pass.
///
/// `layers[0]` is the input; `layers[k + 1]` is the output of layer `k`
/// after its activation (the last entry is the raw network output).
#[derive(Clone, Debug, Default)]
pub struct Trace {
    layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        hidden_dims: Vec<usize>,
        output_dim: usize,
        activation: Activation,
        output_head: OutputHead,
    ) -> Self {
        MlpSpec {
            input_dim,
            hidden_dims,
            output_dim,
            activation,
            output_head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(Error::Config(format!(
                "all network dimensions must be at least 1 (got {} -> {:?} -> {})",
                self.input_dim, self.hidden_dims, self.output_dim
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer in order.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut fan_in = self.input_dim;
        for &h in &self.hidden_dims {
            dims.push((fan_in, h));
            fan_in = h;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.layer_dims().into_iter().enumerate().flat_map(|(k, (i, o))| {
            [
                (format!("l{k}.weight"), vec![i, o]),
                (format!("l{k}.bias"), vec![o]),
            ]
        }))
    }

    pub fn zeros(&self) -> ParamVector {
        ParamVector::zeros(Arc::new(self.layout()))
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut params = self.zeros();
        let values = params.values_mut();
        let mut offset = 0;
        for (fan_in, fan_out) in self.layer_dims() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut values[offset..offset + fan_in * fan_out] {
                *v = rng.gen_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        params
    }

    pub(crate) fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.param_count() || !params.same_layout(&self.layout()) {
            return Err(Error::dims("network parameters", self.param_count(), params.len()));
        }
        Ok(())
    }

    fn activate(&self, v: f64) -> f64 {
        match self.activation {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative of the activation expressed through its output.
    fn activation_slope(&self, out: f64) -> f64 {
        match self.activation {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }

    /// Forward pass without dimension checks, recording activations.
    pub(crate) fn forward_trace(&self, params: &[f64], input: &[f64], trace: &mut Trace) {
        let dims = self.layer_dims();
        trace.layers.resize_with(dims.len() + 1, Vec::new);
        trace.layers[0].clear();
        trace.layers[0].extend_from_slice(input);
        let last = dims.len() - 1;
        let mut offset = 0;
        for (k, &(fan_in, fan_out)) in dims.iter().enumerate() {
            let (head, tail) = trace.layers.split_at_mut(k + 1);
            let x = &head[k];
            let y = &mut tail[0];
            let weights = &params[offset..offset + fan_in * fan_out];
            let bias = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            y.clear();
            y.extend_from_slice(bias);
            for (i, &xi) in x.iter().enumerate() {
                // One-hot observations and ReLU outputs are mostly zero.
                if xi == 0.0 {
                    continue;
                }
                let row = &weights[i * fan_out..(i + 1) * fan_out];
                for (yo, w) in y.iter_mut().zip(row) {
                    *yo += xi * w;
                }
            }
            if k != last {
                for v in y.iter_mut() {
                    *v = self.activate(*v);
                }
            }
            offset += fan_in * fan_out + fan_out;
        }
    }

    /// Reverse pass over a recorded trace. Parameter gradients are added into
    /// `grad`; the input gradient is written to `input_grad` when requested.
    pub(crate) fn backward_trace(
        &self,
        params: &[f64],
        trace: &Trace,
        upstream: &[f64],
        grad: &mut [f64],
        input_grad: Option<&mut Vec<f64>>,
    ) {
        let dims = self.layer_dims();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut offset = 0;
        for &(i, o) in &dims {
            offsets.push(offset);
            offset += i * o + o;
        }
        let mut delta = upstream.to_vec();
        let mut next = Vec::new();
        let mut input_grad = input_grad;
        for k in (0..dims.len()).rev() {
            let (fan_in, fan_out) = dims[k];
            let off = offsets[k];
            let x = &trace.layers[k];
            let weights = &params[off..off + fan_in * fan_out];
            {
                let (gw, gb) = grad[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for (b, d) in gb.iter_mut().zip(&delta) {
                    *b += d;
                }
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    let row = &mut gw[i * fan_out..(i + 1) * fan_out];
                    for (g, d) in row.iter_mut().zip(&delta) {
                        *g += xi * d;
                    }
                }
            }
            let need_dx = k > 0 || input_grad.is_some();
            if !need_dx {
                break;
            }
            next.clear();
            next.extend(weights.chunks_exact(fan_out).map(|row| {
                row.iter().zip(&delta).map(|(w, d)| w * d).sum::<f64>()
            }));
            if k > 0 {
                for (n, &y) in next.iter_mut().zip(x) {
                    *n *= self.activation_slope(y);
                }
                std::mem::swap(&mut delta, &mut next);
            } else if let Some(out) = input_grad.as_deref_mut() {
                out.clear();
                out.extend_from_slice(&next);
            }
        }
    }

    pub fn forward(&self, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(self, params, input)
    }
}

/// Evaluates the network on one input vector.
pub fn mlp_forward(spec: &MlpSpec, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
    spec.check_params(params)?;
    if input.len() != spec.input_dim {
        return Err(Error::dims("network input", spec.input_dim, input.len()));
    }
    let mut trace = Trace::default();
    spec.forward_trace(params.values(), input, &mut trace);
    Ok(trace.output().to_vec())
}

/// Exact reverse-mode derivative of `upstream · f(params, input)` with
/// respect to the parameters and to the input.
pub fn mlp_backward(
    spec: &MlpSpec,
    params: &ParamVector,
    input: &[f64],
    upstream: &[f64],
) -> Result<(Gradient, Vec<f64>)> {
    spec.check_params(params)?;
    if input.len() != spec.input_dim {
        return Err(Error::dims("network input", spec.input_dim, input.len()));
    }
    if upstream.len() != spec.output_dim {
        return Err(Error::dims("upstream gradient", spec.output_dim, upstream.len()));
    }
    let mut trace = Trace::default();
    spec.forward_trace(params.values(), input, &mut trace);
    let mut grad = Gradient::zeros_like(params);
    let mut input_grad = Vec::with_capacity(spec.input_dim);
    spec.backward_trace(
        params.values(),
        &trace,
        upstream,
        grad.values_mut(),
        Some(&mut input_grad),
    );
    Ok((grad, input_grad))
}
