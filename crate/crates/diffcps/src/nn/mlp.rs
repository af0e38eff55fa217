//! Feed-forward networks with exact reverse-mode gradients.
//!
//! An [`Mlp`] is a stack of affine layers with Mish on every hidden layer and
//! an identity output. Forward passes over a batch return a cache of
//! intermediates; `backward` consumes that cache, accumulates parameter
//! gradients in place and returns the gradient with respect to the input so
//! callers can chain through sampled actions.
//!
//! Shape mismatches are programmer errors and panic via `assert!`;
//! user-facing configuration is validated before networks are built.

use rand::rngs::StdRng;
use rand::Rng;

use super::matrix::{add_col_sums, add_row_broadcast, gemm_acc_slices, transpose_into, Matrix};

/// A parameter block: values plus an accumulated gradient of identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Vec<f64>,
}

impl ParamTensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        ParamTensor {
            shape: shape.to_vec(),
            values: vec![0.0; len],
            grad: vec![0.0; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    /// Mutable values alongside the (read-only) gradient, for optimizers.
    pub fn values_and_grad_mut(&mut self) -> (&mut [f64], &[f64]) {
        (&mut self.values, &self.grad)
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Anything exposing a flat, ordered list of parameter tensors.
///
/// The tensor order is fixed per type; flat parameter indices (used by the
/// optimizer, checkpoints and gradient checks) follow that order.
pub trait Parameterized {
    fn tensors(&self) -> Vec<&ParamTensor>;
    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn zero_grad(&mut self) {
        for t in self.tensors_mut() {
            t.zero_grad();
        }
    }

    fn param_get(&self, mut idx: usize) -> f64 {
        for t in self.tensors() {
            if idx < t.len() {
                return t.values()[idx];
            }
            idx -= t.len();
        }
        panic!("parameter index out of range");
    }

    fn param_set(&mut self, mut idx: usize, v: f64) {
        for t in self.tensors_mut() {
            if idx < t.len() {
                t.values_mut()[idx] = v;
                return;
            }
            idx -= t.len();
        }
        panic!("parameter index out of range");
    }

    fn grad_get(&self, mut idx: usize) -> f64 {
        for t in self.tensors() {
            if idx < t.len() {
                return t.grad()[idx];
            }
            idx -= t.len();
        }
        panic!("parameter index out of range");
    }
}

/// Mish: `x * tanh(softplus(x))`.
pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

/// d/dx mish(x) = tanh(sp(x)) + x * sech^2(sp(x)) * sigmoid(x).
pub fn mish_prime(x: f64) -> f64 {
    let t = softplus(x).tanh();
    t + x * (1.0 - t * t) * sigmoid(x)
}

fn softplus(x: f64) -> f64 {
    // max(x, 0) + ln(1 + e^{-|x|}) is stable over the whole line.
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One affine layer. Weight shape is `[fan_in, fan_out]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weight: ParamTensor,
    pub bias: ParamTensor,
}

impl LinearLayer {
    fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }

    /// `z (+)= x W + b` over a batch.
    fn affine(&self, x: &Matrix) -> Matrix {
        let mut z = Matrix::zeros(x.rows(), self.fan_out());
        gemm_acc_slices(
            z.as_mut_slice(),
            x.as_slice(),
            self.weight.values(),
            x.rows(),
            self.fan_in(),
            self.fan_out(),
        );
        add_row_broadcast(&mut z, self.bias.values());
        z
    }
}

/// Intermediates of one batched forward pass, needed for `backward`.
#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Matrix,
    /// Pre-activations of each hidden layer.
    pre: Vec<Matrix>,
    /// Activations of each hidden layer.
    act: Vec<Matrix>,
}

/// Dense network: hidden layers use Mish, the output layer is identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<LinearLayer>,
}

impl Mlp {
    /// Builds a network with the given `[in, hidden.., out]` dimensions.
    /// Weights and biases are drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn new(dims: &[usize], rng: &mut StdRng) -> Mlp {
        assert!(dims.len() >= 2, "an Mlp needs at least input and output dims");
        assert!(dims.iter().all(|&d| d > 0), "all Mlp dims must be positive");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut weight = ParamTensor::zeros(&[fan_in, fan_out]);
            for v in weight.values_mut() {
                *v = rng.gen_range(-bound..bound);
            }
            let mut bias = ParamTensor::zeros(&[fan_out]);
            for v in bias.values_mut() {
                *v = rng.gen_range(-bound..bound);
            }
            layers.push(LinearLayer { weight, bias });
        }
        Mlp { layers }
    }

    /// All-zero network; forward output is identically zero.
    pub fn zeros(dims: &[usize]) -> Mlp {
        assert!(dims.len() >= 2);
        let layers = dims
            .windows(2)
            .map(|w| LinearLayer {
                weight: ParamTensor::zeros(&[w[0], w[1]]),
                bias: ParamTensor::zeros(&[w[1]]),
            })
            .collect();
        Mlp { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().expect("empty Mlp").fan_in()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("empty Mlp").fan_out()
    }

    /// `[in, hidden.., out]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.layers.iter().map(|l| l.fan_in()).collect();
        d.push(self.out_dim());
        d
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LinearLayer] {
        &mut self.layers
    }

    /// Batched forward pass returning the output and the cache for `backward`.
    pub fn forward(&self, x: &Matrix) -> (Matrix, MlpCache) {
        assert_eq!(x.cols(), self.in_dim(), "Mlp input dimension mismatch");
        let n_hidden = self.layers.len() - 1;
        let mut pre = Vec::with_capacity(n_hidden);
        let mut act = Vec::with_capacity(n_hidden);
        let mut h = x.clone();
        for layer in &self.layers[..n_hidden] {
            let z = layer.affine(&h);
            let mut a = z.clone();
            a.as_mut_slice().iter_mut().for_each(|v| *v = mish(*v));
            pre.push(z);
            h = a.clone();
            act.push(a);
        }
        let out = self.layers[n_hidden].affine(&h);
        (
            out,
            MlpCache {
                input: x.clone(),
                pre,
                act,
            },
        )
    }

    /// Forward pass without a cache, for evaluation-only paths.
    pub fn forward_only(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.cols(), self.in_dim(), "Mlp input dimension mismatch");
        let n_hidden = self.layers.len() - 1;
        let mut h = x.clone();
        for layer in &self.layers[..n_hidden] {
            let mut z = layer.affine(&h);
            z.as_mut_slice().iter_mut().for_each(|v| *v = mish(*v));
            h = z;
        }
        self.layers[n_hidden].affine(&h)
    }

    /// Single-vector convenience wrapper around [`Mlp::forward_only`].
    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let m = Matrix::from_vec(1, x.len(), x.to_vec());
        self.forward_only(&m).row(0).to_vec()
    }

    /// Accumulates parameter gradients for the batch that produced `cache`
    /// and returns the gradient with respect to the network input.
    ///
    /// Gradients add onto whatever is already stored; callers zero them at
    /// the start of an optimization step.
    pub fn backward(&mut self, cache: &MlpCache, upstream: &Matrix) -> Matrix {
        assert_eq!(upstream.cols(), self.out_dim(), "upstream gradient dim mismatch");
        assert_eq!(upstream.rows(), cache.input.rows(), "upstream batch mismatch");
        let mut g = upstream.clone();
        let mut scratch = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let layer_input = if l == 0 { &cache.input } else { &cache.act[l - 1] };
            // dW += input^T * g, db += column sums of g
            transpose_into(&mut scratch, layer_input.as_slice(), layer_input.rows(), layer_input.cols());
            {
                let layer = &mut self.layers[l];
                let (fan_in, fan_out) = (layer.fan_in(), layer.fan_out());
                gemm_acc_slices(
                    layer.weight.grad_mut(),
                    &scratch,
                    g.as_slice(),
                    fan_in,
                    g.rows(),
                    fan_out,
                );
                add_col_sums(&g, layer.bias.grad_mut());
            }
            g = self.input_grad_through_layer(l, cache, &g);
        }
        g
    }

    /// Gradient with respect to the input only; parameter gradients are left
    /// untouched. Used where a frozen network sits inside someone else's loss.
    pub fn input_gradient(&self, cache: &MlpCache, upstream: &Matrix) -> Matrix {
        assert_eq!(upstream.cols(), self.out_dim(), "upstream gradient dim mismatch");
        assert_eq!(upstream.rows(), cache.input.rows(), "upstream batch mismatch");
        let mut g = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            g = self.input_grad_through_layer(l, cache, &g);
        }
        g
    }

    /// Propagates `g` back through layer `l`: `g * W^T`, then through the Mish
    /// of the layer below (if any).
    fn input_grad_through_layer(&self, l: usize, cache: &MlpCache, g: &Matrix) -> Matrix {
        let layer = &self.layers[l];
        let mut wt = Vec::new();
        transpose_into(&mut wt, layer.weight.values(), layer.fan_in(), layer.fan_out());
        let mut gx = Matrix::zeros(g.rows(), layer.fan_in());
        gemm_acc_slices(
            gx.as_mut_slice(),
            g.as_slice(),
            &wt,
            g.rows(),
            layer.fan_out(),
            layer.fan_in(),
        );
        if l > 0 {
            let pre = &cache.pre[l - 1];
            for (v, p) in gx.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                *v *= mish_prime(*p);
            }
        }
        gx
    }
}

impl Parameterized for Mlp {
    fn tensors(&self) -> Vec<&ParamTensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }
}
