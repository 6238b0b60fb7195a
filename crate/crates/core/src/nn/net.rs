use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{ParamLayout, Parameterized};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer computing `activation(W x + b)`; `W` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Shape(format!(
                "bias length {} does not match {} output units",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(Layer {
            weight,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Layer {
            weight: Matrix::from_vec(outputs, inputs, data).expect("finite init"),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

/// Activations recorded by [`DenseNet::forward`]: the input to every layer and
/// its pre-activation values.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn input(&self) -> &[f64] {
        &self.inputs[0]
    }
}

impl DenseNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Shape(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        Ok(DenseNet { layers })
    }

    /// `input → hidden[0] → … → output`, ReLU on hidden layers and `last`
    /// on the output layer.
    pub fn mlp<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        last: Activation,
        rng: &mut R,
    ) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == n { last } else { Activation::Relu };
                Layer::glorot(w[0], w[1], act, rng)
            })
            .collect();
        DenseNet { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    /// Same architecture with every parameter zero. Used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                weight: Matrix::zeros(l.outputs(), l.inputs()),
                bias: vec![0.0; l.outputs()],
                activation: l.activation,
            })
            .collect();
        DenseNet { layers }
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if input.len() != self.input_width() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_width(),
                input.len()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = input.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; layer.outputs()];
            layer.weight.matvec_into(&current, &mut z);
            for (zi, bi) in z.iter_mut().zip(&layer.bias) {
                *zi += bi;
            }
            let out = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(std::mem::replace(&mut current, out));
            pre.push(z);
        }
        Ok((current, ForwardCache { inputs, pre }))
    }

    /// Forward pass without recording a cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_width() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {}",
                self.input_width(),
                input.len()
            )));
        }
        let mut current = input.to_vec();
        for layer in &self.layers {
            let mut z = vec![0.0; layer.outputs()];
            layer.weight.matvec_into(&current, &mut z);
            for (zi, bi) in z.iter_mut().zip(&layer.bias) {
                *zi = layer.activation.apply(*zi + bi);
            }
            current = z;
        }
        Ok(current)
    }

    /// Exact gradients for the scalar loss whose gradient w.r.t. the output is
    /// `grad_output`. Returns parameter gradients (shaped like `self`) and the
    /// gradient w.r.t. the input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
    ) -> Result<(DenseNet, Vec<f64>)> {
        let mut grads = self.zeros_like();
        let gin = self.backward_accumulate(cache, grad_output, &mut grads)?;
        Ok((grads, gin))
    }

    /// Like [`backward`](Self::backward) but adds into an existing gradient buffer.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
        grads: &mut DenseNet,
    ) -> Result<Vec<f64>> {
        if cache.inputs.len() != self.layers.len()
            || grads.layers.len() != self.layers.len()
            || grad_output.len() != self.output_width()
        {
            return Err(Error::Shape("cache, gradient buffer, or output gradient does not match network".into()));
        }
        let mut delta = grad_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let pre = &cache.pre[i];
            let input = &cache.inputs[i];
            if pre.len() != layer.outputs() || input.len() != layer.inputs() {
                return Err(Error::Shape(format!("cache entry {i} does not match layer")));
            }
            for (d, &p) in delta.iter_mut().zip(pre) {
                *d *= layer.activation.derivative(p);
            }
            let g = &mut grads.layers[i];
            g.weight.add_outer(1.0, &delta, input);
            for (gb, d) in g.bias.iter_mut().zip(&delta) {
                *gb += d;
            }
            let mut next = vec![0.0; layer.inputs()];
            layer.weight.matvec_t_acc(&delta, &mut next);
            delta = next;
        }
        Ok(delta)
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.data().iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

impl Parameterized for DenseNet {
    fn param_len(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weight.data());
            out.extend_from_slice(&l.bias);
        }
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut at = 0;
        for l in &mut self.layers {
            let w = l.weight.data_mut();
            w.copy_from_slice(&src[at..at + w.len()]);
            at += w.len();
            let nb = l.bias.len();
            l.bias.copy_from_slice(&src[at..at + nb]);
            at += nb;
        }
        at
    }

    fn layout(&self, prefix: &str, out: &mut ParamLayout) {
        for (i, l) in self.layers.iter().enumerate() {
            out.push(format!("{prefix}.layers[{i}].weight"), l.weight.data().len());
            out.push(format!("{prefix}.layers[{i}].bias"), l.bias.len());
        }
    }
}
