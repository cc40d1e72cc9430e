use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::{math, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Softmax,
}

impl Activation {
    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
            Activation::Softmax => 3,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Activation::Identity,
            1 => Activation::Relu,
            2 => Activation::Tanh,
            3 => Activation::Softmax,
            _ => return None,
        })
    }

    fn apply(self, pre: &[f64]) -> Vec<f64> {
        match self {
            Activation::Identity => pre.to_vec(),
            Activation::Relu => pre.iter().map(|&x| x.max(0.0)).collect(),
            Activation::Tanh => pre.iter().map(|&x| math::tanh(x)).collect(),
            Activation::Softmax => softmax(pre),
        }
    }

    /// Maps the gradient w.r.t. the activation output back to its input.
    fn backward(self, pre: &[f64], out: &[f64], grad: &[f64]) -> Vec<f64> {
        match self {
            Activation::Identity => grad.to_vec(),
            Activation::Relu => pre
                .iter()
                .zip(grad)
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect(),
            Activation::Tanh => out.iter().zip(grad).map(|(&y, &g)| g * (1.0 - y * y)).collect(),
            Activation::Softmax => softmax_backward(out, grad),
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| math::exp(x - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Vector-Jacobian product of the softmax: `y ⊙ (g − ⟨y, g⟩)`.
pub fn softmax_backward(out: &[f64], grad: &[f64]) -> Vec<f64> {
    let dot: f64 = out.iter().zip(grad).map(|(y, g)| y * g).sum();
    out.iter().zip(grad).map(|(y, g)| y * (g - dot)).collect()
}

/// Fully connected layer `y = act(W x + b)` with `W` stored row-major as
/// `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    /// Frozen layers are skipped by the optimiser.
    pub frozen: bool,
}

impl Dense {
    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = math::sqrt(6.0 / (inputs + outputs) as f64);
        Self::uniform(inputs, outputs, activation, limit, rng)
    }

    pub fn uniform<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        limit: f64,
        rng: &mut R,
    ) -> Self {
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Dense {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
            activation,
            frozen: false,
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Intermediate values of one forward pass, sufficient for backprop.
#[derive(Debug, Clone)]
pub struct Cache {
    generation: u64,
    shape: Vec<(usize, usize)>,
    /// `inputs[i]` is the input of layer `i`; the last entry is the network output.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().expect("cache holds at least the input")
    }

    /// Output of the last layer before its activation.
    pub fn head_pre_activation(&self) -> &[f64] {
        self.pre.last().expect("non-empty network")
    }
}

/// Parameter gradients, shaped like the owning [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Gradients {
            layers: mlp
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, b)| *a += b);
            b.iter_mut().zip(ob).for_each(|(a, b)| *a += b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    /// Index of the first layer holding a non-finite entry.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|(w, b)| w.iter().chain(b).any(|v| !v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().chain(b).all(|v| *v == 0.0))
    }
}

/// Multi-layer perceptron. The generation counter changes on every
/// parameter update so that caches from older parameters are rejected.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
    generation: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

impl Mlp {
    /// Network with `sizes = [input, hidden.., output]`, `hidden` activation on
    /// every layer but the last and `head` on the last.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, head: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 2 == sizes.len() { head } else { hidden };
                Dense::glorot(w[0], w[1], act, rng)
            })
            .collect();
        Mlp {
            layers,
            generation: 0,
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Incompatible("network without layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Incompatible(format!(
                    "layer {i}: parameter lengths do not match {}x{}",
                    l.outputs, l.inputs
                )));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::Incompatible(format!(
                    "layer {i} expects {} inputs, previous layer has {} outputs",
                    l.inputs,
                    layers[i - 1].outputs
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::Incompatible(format!(
                    "layer {i} holds non-finite parameters"
                )));
            }
        }
        Ok(Mlp {
            layers,
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Mutable access to the layers; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    /// `(inputs, outputs)` of every layer.
    pub fn shape(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.inputs, l.outputs)).collect()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs && a.activation == b.activation)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::dim("network input", self.input_dim(), input.len()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Cache)> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut pre = Vec::with_capacity(self.layers.len());
        inputs.push(input.to_vec());
        for layer in &self.layers {
            let z = layer.affine(inputs.last().expect("pushed above"));
            inputs.push(layer.activation.apply(&z));
            pre.push(z);
        }
        let cache = Cache {
            generation: self.generation,
            shape: self.shape(),
            inputs,
            pre,
        };
        Ok((cache.output().to_vec(), cache))
    }

    /// Forward pass without keeping intermediates.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            x = layer.activation.apply(&layer.affine(&x));
        }
        Ok(x)
    }

    /// Output of the last layer before its activation (logits for a softmax head).
    pub fn predict_pre_head(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&x);
            x = if i == last { z } else { layer.activation.apply(&z) };
        }
        Ok(x)
    }

    /// Gradients of `⟨output_gradient, f(x)⟩` w.r.t. the parameters and the input.
    pub fn backward(&self, cache: &Cache, output_gradient: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let (grads, input_grad) = self.backward_impl(cache, output_gradient, true)?;
        Ok((grads.expect("requested"), input_grad))
    }

    /// Like [`Mlp::backward`] but only the input gradient.
    pub fn input_gradient(&self, cache: &Cache, output_gradient: &[f64]) -> Result<Vec<f64>> {
        Ok(self.backward_impl(cache, output_gradient, false)?.1)
    }

    fn backward_impl(
        &self,
        cache: &Cache,
        output_gradient: &[f64],
        with_params: bool,
    ) -> Result<(Option<Gradients>, Vec<f64>)> {
        if cache.generation != self.generation || cache.shape != self.shape() {
            return Err(Error::StaleCache);
        }
        if output_gradient.len() != self.output_dim() {
            return Err(Error::dim(
                "output gradient",
                self.output_dim(),
                output_gradient.len(),
            ));
        }
        let mut grads = with_params.then(|| Gradients::zeros_like(self));
        let mut grad = output_gradient.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let dz = layer
                .activation
                .backward(&cache.pre[i], &cache.inputs[i + 1], &grad);
            let x = &cache.inputs[i];
            if let Some(g) = grads.as_mut() {
                let (gw, gb) = &mut g.layers[i];
                for (o, &d) in dz.iter().enumerate() {
                    gb[o] += d;
                    if d != 0.0 {
                        let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                        row.iter_mut().zip(x).for_each(|(w, v)| *w += d * v);
                    }
                }
            }
            let mut dx = vec![0.0; layer.inputs];
            for (row, &d) in layer.weights.chunks_exact(layer.inputs).zip(&dz) {
                if d != 0.0 {
                    dx.iter_mut().zip(row).for_each(|(a, w)| *a += d * w);
                }
            }
            grad = dx;
        }
        Ok((grads, grad))
    }

    /// `self ← tau · online + (1 − tau) · self`; frozen layers of `online` are
    /// copied verbatim.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::Domain(format!("soft update rate {tau} outside [0, 1]")));
        }
        if !self.same_shape(online) {
            return Err(Error::Incompatible(
                "soft update between differently shaped networks".into(),
            ));
        }
        self.generation += 1;
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            if o.frozen {
                *t = o.clone();
                continue;
            }
            for (a, b) in t
                .weights
                .iter_mut()
                .zip(&o.weights)
                .chain(t.bias.iter_mut().zip(&o.bias))
            {
                *a = if tau == 1.0 {
                    *b
                } else {
                    tau * b + (1.0 - tau) * *a
                };
            }
        }
        Ok(())
    }
}
