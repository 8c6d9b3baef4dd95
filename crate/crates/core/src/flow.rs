//! Two-layer real-NVP flow.
//!
//! With `h = ⌈d/2⌉`, the first coupling layer rescales and shifts coordinates
//! `h..d` conditioned on `0..h`; the second updates `0..h` conditioned on the
//! (already transformed) block `h..d`:
//!
//! ```text
//! y[h..] = x[h..] ⊙ exp(s₁(x[..h])) + t₁(x[..h]),   y[..h] = x[..h]
//! z[..h] = y[..h] ⊙ exp(s₂(y[h..])) + t₂(y[h..]),   z[h..] = y[h..]
//! ```
//!
//! `log|det J| = Σ s₁ + Σ s₂`. Scale outputs are clamped to `[-S_CLAMP, S_CLAMP]`
//! before exponentiation; the clamp is part of the transform, so the inverse stays exact.
//!
//! Flattened parameter order: layer-1 `s` net, layer-1 `t` net, layer-2 `s` net,
//! layer-2 `t` net; within a net, each dense layer contributes its row-major
//! `out × in` weight matrix followed by its bias.

use std::ops::Range;

use crate::numkit::{dot, mvn_log_density, CholeskyFactor, Matrix, RngStream};
use crate::{Error, Result};

pub const S_CLAMP: f64 = 10.0;

pub const DEFAULT_HIDDEN: [usize; 2] = [8, 8];

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(input: usize, output: usize) -> Self {
        DenseLayer {
            weights: Matrix::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    fn param_count(&self) -> usize {
        self.bias.len() * (self.weights.cols() + 1)
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        (0..self.bias.len())
            .map(|o| dot(self.weights.row(o), input) + self.bias[o])
            .collect()
    }
}

/// Fully connected network: tanh after every hidden layer, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForwardNet {
    layers: Vec<DenseLayer>,
}

/// Activations kept for the backward pass: the input and every hidden output.
#[derive(Debug, Clone)]
pub(crate) struct NetTrace {
    activations: Vec<Vec<f64>>,
}

impl FeedForwardNet {
    /// Zero-initialized net with layer widths `[input, hidden.., output]`.
    pub fn zeros(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer::zeros(w[0], w[1]))
            .collect();
        FeedForwardNet { layers }
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            Error::check_dim(l.weights.rows(), l.bias.len())?;
            if i > 0 {
                Error::check_dim(layers[i - 1].bias.len(), l.weights.cols())?;
            }
        }
        Ok(FeedForwardNet { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.bias.len())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Error::check_dim(self.input_dim(), input.len())?;
        Ok(self.forward_traced(input).1)
    }

    pub(crate) fn forward_traced(&self, input: &[f64]) -> (NetTrace, Vec<f64>) {
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut current = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = layer.apply(&current);
            if i < last {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(current);
            current = next;
        }
        (NetTrace { activations }, current)
    }

    /// Accumulates `∂/∂params` into `grad_params` (this net's slice) and returns `∂/∂input`.
    pub(crate) fn backward(&self, trace: &NetTrace, grad_output: &[f64], grad_params: &mut [f64]) -> Vec<f64> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_count();
        }
        let mut upstream = grad_output.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.activations[i];
            let n_in = input.len();
            let base = offsets[i];
            for (o, &g) in upstream.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &mut grad_params[base + o * n_in..base + (o + 1) * n_in];
                for (w, a) in row.iter_mut().zip(input) {
                    *w += g * a;
                }
            }
            let bias_base = base + layer.bias.len() * n_in;
            for (b, g) in grad_params[bias_base..bias_base + layer.bias.len()]
                .iter_mut()
                .zip(&upstream)
            {
                *b += g;
            }
            let mut grad_in = layer.weights.tr_mul_vec(&upstream).expect("layer shapes");
            if i > 0 {
                // input to this layer is tanh output of the previous one
                for (g, a) in grad_in.iter_mut().zip(input) {
                    *g *= 1.0 - a * a;
                }
            }
            upstream = grad_in;
        }
        upstream
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let mut pos = 0;
        for l in &mut self.layers {
            let nw = l.weights.as_slice().len();
            l.weights.as_mut_slice().copy_from_slice(&src[pos..pos + nw]);
            pos += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&src[pos..pos + nb]);
            pos += nb;
        }
        pos
    }

    fn xavier(&mut self, rng: &mut RngStream) {
        for l in &mut self.layers {
            let fan_in = l.weights.cols();
            let fan_out = l.weights.rows();
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in l.weights.as_mut_slice() {
                *w = rng.uniform(-bound, bound);
            }
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }
}

/// Affine coupling: coordinates in `update` are scaled and shifted by functions
/// of the coordinates in `cond`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingLayer {
    pub s_net: FeedForwardNet,
    pub t_net: FeedForwardNet,
    cond: Range<usize>,
    update: Range<usize>,
}

#[derive(Debug, Clone)]
pub(crate) struct CouplingTrace {
    s_trace: NetTrace,
    t_trace: NetTrace,
    // 1 inside the clamp interval, 0 where the clamp is active
    s_mask: Vec<f64>,
    exp_s: Vec<f64>,
    updated_input: Vec<f64>,
}

impl CouplingLayer {
    fn zeros(cond: Range<usize>, update: Range<usize>, hidden: &[usize]) -> Self {
        CouplingLayer {
            s_net: FeedForwardNet::zeros(cond.len(), hidden, update.len()),
            t_net: FeedForwardNet::zeros(cond.len(), hidden, update.len()),
            cond,
            update,
        }
    }

    pub fn conditioning(&self) -> Range<usize> {
        self.cond.clone()
    }

    pub fn updated(&self) -> Range<usize> {
        self.update.clone()
    }

    fn param_count(&self) -> usize {
        self.s_net.param_count() + self.t_net.param_count()
    }

    fn scale(&self, cond: &[f64]) -> (NetTrace, Vec<f64>, Vec<f64>) {
        let (trace, raw) = self.s_net.forward_traced(cond);
        let mask = raw
            .iter()
            .map(|&r| if r.abs() < S_CLAMP { 1.0 } else { 0.0 })
            .collect();
        let s = raw.iter().map(|r| r.clamp(-S_CLAMP, S_CLAMP)).collect();
        (trace, s, mask)
    }

    /// Forward in place; returns the trace and `Σ s`.
    fn forward_in_place(&self, x: &mut [f64]) -> (CouplingTrace, f64) {
        let cond = &x[self.cond.clone()];
        let (s_trace, s, s_mask) = self.scale(cond);
        let (t_trace, t) = self.t_net.forward_traced(cond);
        let updated_input = x[self.update.clone()].to_vec();
        let exp_s: Vec<f64> = s.iter().map(|v| v.exp()).collect();
        for (i, xi) in x[self.update.clone()].iter_mut().enumerate() {
            *xi = *xi * exp_s[i] + t[i];
        }
        let log_det = s.iter().sum();
        (
            CouplingTrace {
                s_trace,
                t_trace,
                s_mask,
                exp_s,
                updated_input,
            },
            log_det,
        )
    }

    /// Inverse in place; returns `Σ s` of the matching forward pass.
    fn inverse_in_place(&self, x: &mut [f64]) -> f64 {
        let cond = &x[self.cond.clone()];
        let (_, s, _) = self.scale(cond);
        let t = self.t_net.forward_traced(cond).1;
        for (i, xi) in x[self.update.clone()].iter_mut().enumerate() {
            *xi = (*xi - t[i]) * (-s[i]).exp();
        }
        s.iter().sum()
    }

    /// `grad` holds `∂/∂output` on entry and `∂/∂input` on return.
    fn backward(&self, trace: &CouplingTrace, grad: &mut [f64], grad_log_det: f64, grad_params: &mut [f64]) {
        let (gs_params, gt_params) = grad_params.split_at_mut(self.s_net.param_count());
        let g_upd = grad[self.update.clone()].to_vec();
        let g_s: Vec<f64> = (0..g_upd.len())
            .map(|i| {
                (g_upd[i] * trace.updated_input[i] * trace.exp_s[i] + grad_log_det) * trace.s_mask[i]
            })
            .collect();
        let from_s = self.s_net.backward(&trace.s_trace, &g_s, gs_params);
        let from_t = self.t_net.backward(&trace.t_trace, &g_upd, gt_params);
        for (i, g) in grad[self.update.clone()].iter_mut().enumerate() {
            *g *= trace.exp_s[i];
        }
        for ((g, a), b) in grad[self.cond.clone()].iter_mut().zip(&from_s).zip(&from_t) {
            *g += a + b;
        }
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.s_net.write_params(out);
        self.t_net.write_params(out);
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let n = self.s_net.read_params(src);
        n + self.t_net.read_params(&src[n..])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealNvpFlow {
    dim: usize,
    hidden: Vec<usize>,
    pub layer1: CouplingLayer,
    pub layer2: CouplingLayer,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub(crate) struct FlowTrace {
    first: CouplingTrace,
    second: CouplingTrace,
    pub output: Vec<f64>,
    pub log_det: f64,
}

impl RealNvpFlow {
    /// Flow whose nets are all zero, i.e. the identity map.
    pub fn identity(dim: usize, hidden: &[usize]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("flow dimension must be positive".into()));
        }
        let h = dim.div_ceil(2);
        Ok(RealNvpFlow {
            dim,
            hidden: hidden.to_vec(),
            layer1: CouplingLayer::zeros(0..h, h..dim, hidden),
            layer2: CouplingLayer::zeros(h..dim, 0..h, hidden),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn param_count(&self) -> usize {
        self.layer1.param_count() + self.layer2.param_count()
    }

    /// Flattened parameters in the documented order.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.layer1.write_params(&mut out);
        self.layer2.write_params(&mut out);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        Error::check_dim(self.param_count(), params.len())?;
        let n = self.layer1.read_params(params);
        self.layer2.read_params(&params[n..]);
        Ok(())
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        let mut f = self.clone();
        f.set_params(params)?;
        Ok(f)
    }

    /// Glorot-uniform weights, zero biases, drawn in parameter order.
    pub fn xavier_init(&self, rng: &mut RngStream) -> RealNvpFlow {
        let mut f = self.clone();
        f.layer1.s_net.xavier(rng);
        f.layer1.t_net.xavier(rng);
        f.layer2.s_net.xavier(rng);
        f.layer2.t_net.xavier(rng);
        f
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let trace = self.forward_traced(x)?;
        Ok((trace.output, trace.log_det))
    }

    pub(crate) fn forward_traced(&self, x: &[f64]) -> Result<FlowTrace> {
        Error::check_dim(self.dim, x.len())?;
        let mut y = x.to_vec();
        let (first, ld1) = self.layer1.forward_in_place(&mut y);
        if !(y.iter().all(|v| v.is_finite()) && ld1.is_finite()) {
            return Err(Error::NonFiniteFlow { layer: 1 });
        }
        let (second, ld2) = self.layer2.forward_in_place(&mut y);
        if !(y.iter().all(|v| v.is_finite()) && ld2.is_finite()) {
            return Err(Error::NonFiniteFlow { layer: 2 });
        }
        Ok(FlowTrace {
            first,
            second,
            output: y,
            log_det: ld1 + ld2,
        })
    }

    /// Exact inverse; the scalar is `log|det J⁻¹| = −log|det J|` at the recovered point.
    pub fn inverse(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        Error::check_dim(self.dim, x.len())?;
        let mut y = x.to_vec();
        let ld2 = self.layer2.inverse_in_place(&mut y);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteFlow { layer: 2 });
        }
        let ld1 = self.layer1.inverse_in_place(&mut y);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteFlow { layer: 1 });
        }
        Ok((y, -(ld1 + ld2)))
    }

    /// Density of `T(x')` with `x' ~ N(mu, L·Lᵀ)` evaluated at `x`.
    pub fn log_density(&self, x: &[f64], mu: &[f64], chol: &CholeskyFactor) -> Result<f64> {
        let (base, log_det_inv) = self.inverse(x)?;
        Ok(mvn_log_density(&base, mu, chol)? + log_det_inv)
    }

    /// Backpropagates `∂/∂output` and `∂/∂log_det` through a traced forward pass.
    /// Parameter gradients are added into `grad_params`; returns `∂/∂input`.
    pub(crate) fn backward(
        &self,
        trace: &FlowTrace,
        grad_output: &[f64],
        grad_log_det: f64,
        grad_params: &mut [f64],
    ) -> Vec<f64> {
        let (g1, g2) = grad_params.split_at_mut(self.layer1.param_count());
        let mut grad = grad_output.to_vec();
        self.layer2.backward(&trace.second, &mut grad, grad_log_det, g2);
        self.layer1.backward(&trace.first, &mut grad, grad_log_det, g1);
        grad
    }
}
