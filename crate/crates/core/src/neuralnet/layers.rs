use rand::Rng;

use super::tensor::{matmul, matmul_at_acc, matmul_bt, Tensor};

/// A named learnable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Self { name: name.into(), value: Tensor::zeros(shape), grad: Tensor::zeros(shape) }
    }

    /// Uniform Glorot initialization.
    pub fn xavier<R: Rng>(name: impl Into<String>, shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut p = Self::zeros(name, shape);
        p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-limit..limit));
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything owning parameters. Visitation order is fixed and defines the
/// optimizer-state layout and the checkpoint manifest order.
pub trait Module {
    fn visit(&self, f: &mut dyn FnMut(&Param));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.len());
        n
    }
}

/// `y = x·W + b`, with `W` stored as `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new<R: Rng>(name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::xavier(format!("{name}.weight"), &[input, output], input, output, rng),
            bias: Param::zeros(format!("{name}.bias"), &[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        let (n, k) = x.dims2();
        let m = self.output_dim();
        debug_assert_eq!(k, self.input_dim());
        let mut y = matmul(x.data(), self.weight.value.data(), n, k, m);
        let b = self.bias.value.data();
        for row in y.chunks_mut(m) {
            row.iter_mut().zip(b).for_each(|(v, bv)| *v += bv);
        }
        Tensor::from_vec(&[n, m], y).expect("shape computed above")
    }

    /// Accumulates parameter gradients only.
    pub fn backward_params(&mut self, x: &Tensor, dy: &Tensor) {
        let (n, k) = x.dims2();
        let m = self.output_dim();
        matmul_at_acc(x.data(), dy.data(), n, k, m, self.weight.grad.data_mut());
        let db = self.bias.grad.data_mut();
        for row in dy.data().chunks(m) {
            db.iter_mut().zip(row).for_each(|(g, d)| *g += d);
        }
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &Tensor, dy: &Tensor) -> Tensor {
        self.backward_params(x, dy);
        let (n, k) = x.dims2();
        let m = self.output_dim();
        let dx = matmul_bt(dy.data(), self.weight.value.data(), n, m, k);
        Tensor::from_vec(&[n, k], dx).expect("shape computed above")
    }
}

impl Module for Linear {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(name: &str, dim: usize) -> Self {
        let mut gamma = Param::zeros(format!("{name}.gamma"), &[dim]);
        gamma.value.fill(1.0);
        Self { gamma, beta: Param::zeros(format!("{name}.beta"), &[dim]) }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, LayerNormCache) {
        let (n, d) = x.dims2();
        let mut xhat = Tensor::zeros(&[n, d]);
        let mut y = Tensor::zeros(&[n, d]);
        let mut inv_std = Vec::with_capacity(n);
        let (g, b) = (self.gamma.value.data(), self.beta.value.data());
        for i in 0..n {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            let xh = xhat.row_mut(i);
            for (o, v) in xh.iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            let xh = xhat.row(i).to_vec();
            for (j, o) in y.row_mut(i).iter_mut().enumerate() {
                *o = g[j] * xh[j] + b[j];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: &Tensor) -> Tensor {
        let (n, d) = dy.dims2();
        let mut dx = Tensor::zeros(&[n, d]);
        let g = self.gamma.value.data().to_vec();
        let mut dxhat = vec![0.0; d];
        for i in 0..n {
            let dyr = dy.row(i);
            let xh = cache.xhat.row(i);
            {
                let gg = self.gamma.grad.data_mut();
                for j in 0..d {
                    gg[j] += dyr[j] * xh[j];
                }
            }
            {
                let bg = self.beta.grad.data_mut();
                for j in 0..d {
                    bg[j] += dyr[j];
                }
            }
            for j in 0..d {
                dxhat[j] = dyr[j] * g[j];
            }
            let sum_dxhat: f64 = dxhat.iter().sum();
            let sum_dxhat_xhat: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
            let scale = cache.inv_std[i] / d as f64;
            for (j, o) in dx.row_mut(i).iter_mut().enumerate() {
                *o = scale * (d as f64 * dxhat[j] - sum_dxhat - xh[j] * sum_dxhat_xhat);
            }
        }
        dx
    }
}

impl Module for LayerNorm {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.gamma);
        f(&self.beta);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

/// Two-layer perceptron with ReLU between.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

#[derive(Debug, Clone)]
pub struct FeedForwardCache {
    x: Tensor,
    pre: Tensor,
    hidden: Tensor,
}

impl FeedForward {
    pub fn new<R: Rng>(name: &str, dim: usize, hidden: usize, out: usize, rng: &mut R) -> Self {
        Self { up: Linear::new(&format!("{name}.up"), dim, hidden, rng), down: Linear::new(&format!("{name}.down"), hidden, out, rng) }
    }

    pub fn forward(&self, x: &Tensor) -> (Tensor, FeedForwardCache) {
        let pre = self.up.forward(x);
        let mut hidden = pre.clone();
        hidden.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let y = self.down.forward(&hidden);
        (y, FeedForwardCache { x: x.clone(), pre, hidden })
    }

    pub fn backward(&mut self, cache: &FeedForwardCache, dy: &Tensor) -> Tensor {
        let mut dh = self.down.backward(&cache.hidden, dy);
        dh.data_mut().iter_mut().zip(cache.pre.data()).for_each(|(g, p)| {
            if *p <= 0.0 {
                *g = 0.0;
            }
        });
        self.up.backward(&cache.x, &dh)
    }
}

impl Module for FeedForward {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.up.visit(f);
        self.down.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.up.visit_mut(f);
        self.down.visit_mut(f);
    }
}
