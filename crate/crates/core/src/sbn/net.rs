//! Dense layers with hand-written backpropagation, and a momentum SGD rule.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// y = W x + b, with W stored row-major (`rows` outputs by `cols` inputs).
#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, weight: vec![0.0; rows * cols], bias: vec![0.0; rows] }
    }

    /// Weights uniform in +-scale * sqrt(6 / (rows + cols)), zero bias.
    pub fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let limit = scale * (6.0 / (rows + cols) as f64).sqrt();
        let weight = (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect();
        Self { rows, cols, weight, bias: vec![0.0; rows] }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.rows, self.cols)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.weight
            .chunks_exact(self.cols)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// W^T delta.
    pub fn backward_input(&self, delta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, d) in self.weight.chunks_exact(self.cols).zip(delta) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * d;
            }
        }
        out
    }

    /// grad.W += scale * delta x^T, grad.b += scale * delta.
    pub fn accumulate(grad: &mut Affine, delta: &[f64], x: &[f64], scale: f64) {
        for (row, d) in grad.weight.chunks_exact_mut(grad.cols).zip(delta) {
            let sd = scale * d;
            for (g, v) in row.iter_mut().zip(x) {
                *g += sd * v;
            }
        }
        for (g, d) in grad.bias.iter_mut().zip(delta) {
            *g += scale * d;
        }
    }

    pub fn tensors(&self) -> [&[f64]; 2] {
        [&self.weight, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Scalar-output feedforward network: hidden layers with `activation`, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Affine>,
    pub activation: Activation,
}

impl Mlp {
    /// With `zero_output`, the output layer starts at zero so the network is identically 0.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        activation: Activation,
        zero_output: bool,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(Affine::glorot(h, prev, 1.0, rng));
            prev = h;
        }
        layers.push(if zero_output { Affine::zeros(1, prev) } else { Affine::glorot(1, prev, 1.0, rng) });
        Self { layers, activation }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn zeros_like(&self) -> Self {
        Self { layers: self.layers.iter().map(Affine::zeros_like).collect(), activation: self.activation }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if k < last {
                h.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
        }
        h[0]
    }

    /// Accumulates `scale * d out / d params` into `grad` and returns the output.
    pub fn backward(&self, x: &[f64], scale: f64, grad: &mut Mlp) -> f64 {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let pre = layer.forward(&h);
            inputs.push(h);
            h = if k < last { pre.iter().map(|&v| self.activation.apply(v)).collect() } else { pre.clone() };
            pres.push(pre);
        }
        let out = h[0];
        let mut delta = vec![1.0];
        for k in (0..self.layers.len()).rev() {
            Affine::accumulate(&mut grad.layers[k], &delta, &inputs[k], scale);
            if k > 0 {
                let back = self.layers[k].backward_input(&delta);
                delta = back.iter().zip(&pres[k - 1]).map(|(b, &p)| b * self.activation.derivative(p)).collect();
            }
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}

/// Heavy-ball momentum: v <- m v + g; theta <- theta + sign * lr * v.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Momentum {
    velocity: Vec<Vec<f64>>,
}

impl Momentum {
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64, momentum: f64, ascend: bool) {
        assert_eq!(params.len(), grads.len());
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        let sign = if ascend { lr } else { -lr };
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = momentum * *vi + gi;
                *pi += sign * *vi;
            }
        }
    }
}
