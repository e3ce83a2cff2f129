//! Noise-conditional score network with hand-written reverse-mode gradients.
//!
//! Two layouts are supported:
//! - dense: the flattened signal plus one σ input feeds a stack of affine
//!   layers;
//! - conv: an `H×W×C` signal plus a constant σ map channel feeds a stack of
//!   zero-padded 3×3 convolutions.
//!
//! With output scaling on, the network output is divided by
//! `max(|σ|, sigma_floor)`.

use crate::error::{Error, Result};
use crate::numerics::{axpy, dot, RngStream, Tensor};
use crate::score_models::ScoreModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Silu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv3x3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    /// Output features (dense) or output channels (conv).
    pub rows: usize,
    /// Input features (dense) or `9 × input channels` (conv).
    pub cols: usize,
    /// Row-major `rows × cols`; conv columns are ordered `(in_channel, ky, kx)`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    /// Adds the layer input to its activated output.
    pub residual: bool,
    /// Conv tap spacing in pixels (1 for an ordinary 3×3 kernel).
    pub dilation: usize,
}

impl Layer {
    pub fn new(
        kind: LayerKind,
        rows: usize,
        cols: usize,
        activation: Activation,
        residual: bool,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Param("layer dimensions must be positive".into()));
        }
        if kind == LayerKind::Conv3x3 && cols % 9 != 0 {
            return Err(Error::Param(format!(
                "conv layer column count {cols} is not a multiple of 9"
            )));
        }
        let layer = Layer {
            kind,
            rows,
            cols,
            weight: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
            activation,
            residual,
            dilation: 1,
        };
        if residual && layer.in_features() != rows {
            return Err(Error::Param(
                "residual layer must map a space onto itself".into(),
            ));
        }
        Ok(layer)
    }

    pub fn with_dilation(mut self, dilation: usize) -> Result<Self> {
        if dilation == 0 || (dilation > 1 && self.kind != LayerKind::Conv3x3) {
            return Err(Error::Param(format!(
                "invalid dilation {dilation} for this layer"
            )));
        }
        self.dilation = dilation;
        Ok(self)
    }

    pub fn in_features(&self) -> usize {
        match self.kind {
            LayerKind::Dense => self.cols,
            LayerKind::Conv3x3 => self.cols / 9,
        }
    }

    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Weights as a `rows × cols` matrix tensor.
    pub fn weight_matrix(&self) -> Tensor {
        Tensor::new(vec![self.rows, self.cols], self.weight.clone()).expect("layer shape")
    }

    fn init_weights(&mut self, rng: &mut RngStream, gain: f64) {
        let fan_in = self.cols as f64;
        let sd = gain / fan_in.sqrt();
        for w in &mut self.weight {
            *w = sd * rng.normal();
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Silu => z * sigmoid(z),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Silu => {
                let s = sigmoid(z);
                s * (1.0 + z * (1.0 - s))
            }
        }
    }
}

/// Gradient of a scalar loss with respect to every network parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &ScoreNetwork) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weight: vec![0.0; l.weight.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weight.iter().chain(&g.bias).copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weight.iter().chain(&g.bias).all(|v| v.is_finite()))
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub(crate) struct ForwardTrace {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    /// Raw network output (before σ scaling), in internal layout.
    output: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreNetwork {
    pub(crate) layers: Vec<Layer>,
    signal_shape: Vec<usize>,
    sigma_floor: f64,
    output_scaling: bool,
    /// Inputs and σ are divided by this before entering the network.
    data_scale: f64,
}

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-3;

impl ScoreNetwork {
    /// Assemble a network from explicit layers; checks that the layer chain
    /// is consistent with `signal_shape`.
    pub fn from_layers(
        layers: Vec<Layer>,
        signal_shape: Vec<usize>,
        sigma_floor: f64,
        output_scaling: bool,
        data_scale: f64,
    ) -> Result<Self> {
        let net = ScoreNetwork {
            layers,
            signal_shape,
            sigma_floor,
            output_scaling,
            data_scale,
        };
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        let first = self
            .layers
            .first()
            .ok_or_else(|| Error::Param("network needs at least one layer".into()))?;
        if !(self.sigma_floor > 0.0) {
            return Err(Error::Param("sigma_floor must be > 0".into()));
        }
        if !(self.data_scale > 0.0 && self.data_scale.is_finite()) {
            return Err(Error::Param("data_scale must be > 0".into()));
        }
        if self.layers.iter().any(|l| l.kind != first.kind) {
            return Err(Error::Param(
                "mixed dense/conv layers are not supported".into(),
            ));
        }
        let (expect_in, expect_out) = match first.kind {
            LayerKind::Dense => {
                let d: usize = self.signal_shape.iter().product();
                (d + 1, d)
            }
            LayerKind::Conv3x3 => match self.signal_shape.as_slice() {
                &[_, _, c] => (c + 1, c),
                other => {
                    return Err(Error::Shape(format!(
                        "conv network needs an H×W×C signal shape, got {other:?}"
                    )))
                }
            },
        };
        if first.in_features() != expect_in {
            return Err(Error::Shape(format!(
                "first layer takes {} inputs, signal needs {expect_in}",
                first.in_features()
            )));
        }
        for pair in self.layers.windows(2) {
            if pair[1].in_features() != pair[0].rows {
                return Err(Error::Shape("consecutive layer sizes do not chain".into()));
            }
        }
        if self.layers.last().unwrap().rows != expect_out {
            return Err(Error::Shape(
                "last layer does not produce the signal size".into(),
            ));
        }
        Ok(())
    }

    /// Residual MLP: `dim+1 → width`, `hidden−1` residual `width → width`
    /// blocks, then `width → dim`; SiLU on every hidden layer.
    pub fn mlp(dim: usize, width: usize, hidden: usize, rng: &mut RngStream) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::Param("mlp needs at least one hidden layer".into()));
        }
        let mut layers = vec![Layer::new(
            LayerKind::Dense,
            width,
            dim + 1,
            Activation::Silu,
            false,
        )?];
        for _ in 1..hidden {
            layers.push(Layer::new(
                LayerKind::Dense,
                width,
                width,
                Activation::Silu,
                true,
            )?);
        }
        layers.push(Layer::new(
            LayerKind::Dense,
            dim,
            width,
            Activation::Identity,
            false,
        )?);
        init_stack(&mut layers, rng);
        ScoreNetwork::from_layers(layers, vec![dim], DEFAULT_SIGMA_FLOOR, true, 1.0)
    }

    /// Residual conv net over `H×W×C` signals: a lifting 3×3 conv, `depth`
    /// residual 3×3 convs whose dilation doubles per layer (capped at half
    /// the smaller image side), and a projecting 3×3 conv.
    pub fn conv(
        height: usize,
        width: usize,
        channels: usize,
        features: usize,
        depth: usize,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Param(
                "conv net needs at least one hidden layer".into(),
            ));
        }
        let max_dilation = (height.min(width) / 2).max(1);
        let mut layers = vec![Layer::new(
            LayerKind::Conv3x3,
            features,
            9 * (channels + 1),
            Activation::Silu,
            false,
        )?];
        for k in 0..depth {
            let dilation = (1usize << k.min(30)).min(max_dilation);
            layers.push(
                Layer::new(
                    LayerKind::Conv3x3,
                    features,
                    9 * features,
                    Activation::Silu,
                    true,
                )?
                .with_dilation(dilation)?,
            );
        }
        layers.push(Layer::new(
            LayerKind::Conv3x3,
            channels,
            9 * features,
            Activation::Identity,
            false,
        )?);
        init_stack(&mut layers, rng);
        ScoreNetwork::from_layers(
            layers,
            vec![height, width, channels],
            DEFAULT_SIGMA_FLOOR,
            true,
            1.0,
        )
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn signal_shape(&self) -> &[usize] {
        &self.signal_shape
    }

    pub fn sigma_floor(&self) -> f64 {
        self.sigma_floor
    }

    pub fn set_sigma_floor(&mut self, floor: f64) -> Result<()> {
        if !(floor > 0.0) {
            return Err(Error::Param("sigma_floor must be > 0".into()));
        }
        self.sigma_floor = floor;
        Ok(())
    }

    pub fn output_scaling(&self) -> bool {
        self.output_scaling
    }

    pub fn set_output_scaling(&mut self, on: bool) {
        self.output_scaling = on;
    }

    pub fn data_scale(&self) -> f64 {
        self.data_scale
    }

    pub fn set_data_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Param("data_scale must be > 0".into()));
        }
        self.data_scale = scale;
        Ok(())
    }

    pub fn kind(&self) -> LayerKind {
        self.layers[0].kind
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    /// Multiplier applied to the raw output, in unit-scaled coordinates.
    fn output_factor(&self, sigma_unit: f64) -> f64 {
        if self.output_scaling {
            1.0 / sigma_unit.abs().max(self.sigma_floor)
        } else {
            1.0
        }
    }

    fn spatial(&self) -> (usize, usize) {
        match self.signal_shape.as_slice() {
            &[h, w, _] => (h, w),
            _ => (1, 1),
        }
    }

    /// Network input in internal layout: dense `[x…, σ]`, conv
    /// channel-first planes followed by a constant σ plane.
    fn build_input(&self, x: &[f64], sigma: f64) -> Vec<f64> {
        match self.kind() {
            LayerKind::Dense => {
                let mut v = Vec::with_capacity(x.len() + 1);
                v.extend_from_slice(x);
                v.push(sigma);
                v
            }
            LayerKind::Conv3x3 => {
                let c = self.signal_shape[2];
                let (h, w) = self.spatial();
                let hw = h * w;
                let mut v = vec![0.0; (c + 1) * hw];
                for p in 0..hw {
                    for ch in 0..c {
                        v[ch * hw + p] = x[p * c + ch];
                    }
                }
                v[c * hw..].fill(sigma);
                v
            }
        }
    }

    /// Convert an internal-layout output back to the signal layout.
    fn output_to_signal(&self, out: &[f64]) -> Vec<f64> {
        match self.kind() {
            LayerKind::Dense => out.to_vec(),
            LayerKind::Conv3x3 => {
                let c = self.signal_shape[2];
                let (h, w) = self.spatial();
                let hw = h * w;
                let mut v = vec![0.0; c * hw];
                for p in 0..hw {
                    for ch in 0..c {
                        v[p * c + ch] = out[ch * hw + p];
                    }
                }
                v
            }
        }
    }

    fn signal_to_internal(&self, g: &[f64]) -> Vec<f64> {
        match self.kind() {
            LayerKind::Dense => g.to_vec(),
            LayerKind::Conv3x3 => {
                let c = self.signal_shape[2];
                let (h, w) = self.spatial();
                let hw = h * w;
                let mut v = vec![0.0; c * hw];
                for p in 0..hw {
                    for ch in 0..c {
                        v[ch * hw + p] = g[p * c + ch];
                    }
                }
                v
            }
        }
    }

    pub(crate) fn forward_trace(&self, x: &[f64], sigma_unit: f64) -> ForwardTrace {
        let (h, w) = self.spatial();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut act = self.build_input(x, sigma_unit);
        for layer in &self.layers {
            let z = match layer.kind {
                LayerKind::Dense => dense_forward(layer, &act),
                LayerKind::Conv3x3 => conv_forward(layer, &act, h, w),
            };
            let mut a: Vec<f64> = z.iter().map(|&v| layer.activation.apply(v)).collect();
            if layer.residual {
                for (ai, &xi) in a.iter_mut().zip(&act) {
                    *ai += xi;
                }
            }
            inputs.push(std::mem::replace(&mut act, a));
            pre.push(z);
        }
        ForwardTrace {
            inputs,
            pre,
            output: act,
        }
    }

    /// Accumulate parameter gradients given `d loss / d raw output`
    /// (internal layout).
    pub(crate) fn backward(&self, trace: &ForwardTrace, grad_out: Vec<f64>, grads: &mut Gradients) {
        let (h, w) = self.spatial();
        let mut g_act = grad_out;
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[idx];
            let z = &trace.pre[idx];
            let g_z: Vec<f64> = g_act
                .iter()
                .zip(z)
                .map(|(&g, &zi)| g * layer.activation.derivative(zi))
                .collect();
            let lg = &mut grads.layers[idx];
            let need_input_grad = idx > 0;
            let mut g_in = match layer.kind {
                LayerKind::Dense => dense_backward(layer, input, &g_z, lg, need_input_grad),
                LayerKind::Conv3x3 => conv_backward(layer, input, &g_z, h, w, lg, need_input_grad),
            };
            if layer.residual && need_input_grad {
                for (gi, &ga) in g_in.iter_mut().zip(&g_act) {
                    *gi += ga;
                }
            }
            g_act = g_in;
        }
    }

    /// Raw output mapped to the signal layout and scaled to a score in data
    /// coordinates.
    fn evaluate(&self, x: &[f64], sigma: f64) -> Vec<f64> {
        let c = self.data_scale;
        let xs: Vec<f64> = if c == 1.0 {
            x.to_vec()
        } else {
            x.iter().map(|v| v / c).collect()
        };
        let sigma_unit = sigma / c;
        let trace = self.forward_trace(&xs, sigma_unit);
        let k = self.output_factor(sigma_unit) / c;
        self.output_to_signal(&trace.output)
            .into_iter()
            .map(|v| v * k)
            .collect()
    }
}

fn init_stack(layers: &mut [Layer], rng: &mut RngStream) {
    let n = layers.len();
    for (i, layer) in layers.iter_mut().enumerate() {
        let gain = if i + 1 == n || layer.residual {
            0.5
        } else {
            std::f64::consts::SQRT_2
        };
        layer.init_weights(rng, gain);
    }
}

fn dense_forward(layer: &Layer, input: &[f64]) -> Vec<f64> {
    (0..layer.rows)
        .map(|o| layer.bias[o] + dot(&layer.weight[o * layer.cols..(o + 1) * layer.cols], input))
        .collect()
}

fn dense_backward(
    layer: &Layer,
    input: &[f64],
    g_z: &[f64],
    lg: &mut LayerGrad,
    need_input_grad: bool,
) -> Vec<f64> {
    let cols = layer.cols;
    let mut g_in = if need_input_grad {
        vec![0.0; cols]
    } else {
        Vec::new()
    };
    for (o, &g) in g_z.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        lg.bias[o] += g;
        axpy(g, input, &mut lg.weight[o * cols..(o + 1) * cols]);
        if need_input_grad {
            axpy(g, &layer.weight[o * cols..(o + 1) * cols], &mut g_in);
        }
    }
    g_in
}

/// Valid output range `[lo, hi)` along an axis of length `n` for tap offset `d`.
#[inline]
fn tap_range(n: usize, d: isize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).min(n as isize).max(0) as usize;
    (lo, hi.max(lo))
}

fn conv_forward(layer: &Layer, input: &[f64], h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let cin = layer.in_features();
    let mut out = vec![0.0; layer.rows * hw];
    for o in 0..layer.rows {
        let plane = &mut out[o * hw..(o + 1) * hw];
        plane.fill(layer.bias[o]);
        for i in 0..cin {
            let src = &input[i * hw..(i + 1) * hw];
            for ky in 0..3 {
                let dy = (ky as isize - 1) * layer.dilation as isize;
                let (y0, y1) = tap_range(h, dy);
                for kx in 0..3 {
                    let dx = (kx as isize - 1) * layer.dilation as isize;
                    let (x0, x1) = tap_range(w, dx);
                    let wv = layer.weight[o * layer.cols + i * 9 + ky * 3 + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let dst = &mut plane[y * w + x0..y * w + x1];
                        let s0 = (x0 as isize + dx) as usize;
                        let s = &src[sy * w + s0..sy * w + s0 + (x1 - x0)];
                        axpy(wv, s, dst);
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(
    layer: &Layer,
    input: &[f64],
    g_z: &[f64],
    h: usize,
    w: usize,
    lg: &mut LayerGrad,
    need_input_grad: bool,
) -> Vec<f64> {
    let hw = h * w;
    let cin = layer.in_features();
    let mut g_in = if need_input_grad {
        vec![0.0; cin * hw]
    } else {
        Vec::new()
    };
    for o in 0..layer.rows {
        let gplane = &g_z[o * hw..(o + 1) * hw];
        lg.bias[o] += gplane.iter().sum::<f64>();
        for i in 0..cin {
            let src = &input[i * hw..(i + 1) * hw];
            for ky in 0..3 {
                let dy = (ky as isize - 1) * layer.dilation as isize;
                let (y0, y1) = tap_range(h, dy);
                for kx in 0..3 {
                    let dx = (kx as isize - 1) * layer.dilation as isize;
                    let (x0, x1) = tap_range(w, dx);
                    let widx = o * layer.cols + i * 9 + ky * 3 + kx;
                    let wv = layer.weight[widx];
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let s0 = (x0 as isize + dx) as usize;
                        let g = &gplane[y * w + x0..y * w + x1];
                        acc += dot(g, &src[sy * w + s0..sy * w + s0 + (x1 - x0)]);
                        if need_input_grad && wv != 0.0 {
                            let dst =
                                &mut g_in[i * hw + sy * w + s0..i * hw + sy * w + s0 + (x1 - x0)];
                            axpy(wv, g, dst);
                        }
                    }
                    lg.weight[widx] += acc;
                }
            }
        }
    }
    g_in
}

impl ScoreModel for ScoreNetwork {
    fn score(&self, x: &Tensor, sigma: f64) -> Tensor {
        let out = self.evaluate(x.data(), sigma);
        Tensor::new(x.shape().to_vec(), out).expect("network preserves signal size")
    }

    fn dim(&self) -> usize {
        self.signal_shape.iter().product()
    }
}

impl ScoreNetwork {
    /// Loss `‖u + σ·r(x + σu, σ)‖²` for one sample (all in unit-scaled
    /// coordinates), with `weight` times its parameter gradient accumulated
    /// into `grads` when given.
    pub(crate) fn dsm_sample(
        &self,
        x: &[f64],
        u: &[f64],
        sigma: f64,
        weight: f64,
        grads: Option<&mut Gradients>,
    ) -> f64 {
        let noisy: Vec<f64> = x.iter().zip(u).map(|(&xi, &ui)| xi + sigma * ui).collect();
        let trace = self.forward_trace(&noisy, sigma);
        let k = self.output_factor(sigma);
        let out = self.output_to_signal(&trace.output);
        let residual: Vec<f64> = u
            .iter()
            .zip(&out)
            .map(|(&ui, &oi)| ui + sigma * k * oi)
            .collect();
        let loss = dot(&residual, &residual);
        if let Some(grads) = grads {
            let c = 2.0 * weight * sigma * k;
            if c != 0.0 {
                let g_sig: Vec<f64> = residual.iter().map(|r| c * r).collect();
                self.backward(&trace, self.signal_to_internal(&g_sig), grads);
            }
        }
        loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_has_input_shape_and_is_finite() {
        let mut rng = RngStream::new(1, 0);
        let net = ScoreNetwork::mlp(2, 16, 3, &mut rng).unwrap();
        let x = Tensor::from_vec(vec![0.3, -0.1]);
        for s in [0.0, 1e-6, 0.5, -2.0] {
            let y = net.score(&x, s);
            assert_eq!(y.shape(), x.shape());
            assert!(y.is_finite());
        }
        let conv = ScoreNetwork::conv(8, 4, 2, 4, 2, &mut rng).unwrap();
        let img = rng.gaussian(&[8, 4, 2]);
        let y = conv.score(&img, 0.2);
        assert_eq!(y.shape(), img.shape());
        assert!(y.is_finite());
    }

    #[test]
    fn output_scaling_divides_by_abs_sigma_with_floor() {
        let mut rng = RngStream::new(2, 0);
        let mut net = ScoreNetwork::mlp(3, 8, 2, &mut rng).unwrap();
        let x = Tensor::from_vec(vec![0.1, 0.2, 0.3]);
        net.set_output_scaling(false);
        let raw = net.score(&x, 0.5);
        let raw_tiny = net.score(&x, 1e-9);
        net.set_output_scaling(true);
        assert!((&net.score(&x, 0.5) - &raw.scale(2.0)).max_abs() < 1e-12);
        assert!((&net.score(&x, 1e-9) - &raw_tiny.scale(1e3)).max_abs() < 1e-9);
    }

    #[test]
    fn conv_matches_direct_convolution() {
        let mut rng = RngStream::new(3, 0);
        for dilation in [1usize, 2, 3] {
            let mut layer = Layer::new(LayerKind::Conv3x3, 2, 9 * 3, Activation::Identity, false)
                .unwrap()
                .with_dilation(dilation)
                .unwrap();
            layer.init_weights(&mut rng, 1.0);
            layer.bias = vec![0.25, -0.5];
            let (h, w) = (5, 4);
            let input: Vec<f64> = (0..3 * h * w).map(|_| rng.normal()).collect();
            let out = conv_forward(&layer, &input, h, w);
            let d = dilation as isize;
            for o in 0..2 {
                for y in 0..h {
                    for x in 0..w {
                        let mut s = layer.bias[o];
                        for i in 0..3 {
                            for ky in 0..3 {
                                for kx in 0..3 {
                                    let sy = y as isize + (ky as isize - 1) * d;
                                    let sx = x as isize + (kx as isize - 1) * d;
                                    if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                        continue;
                                    }
                                    s += layer.weight[o * 27 + i * 9 + ky * 3 + kx]
                                        * input[i * h * w + sy as usize * w + sx as usize];
                                }
                            }
                        }
                        assert!((out[o * h * w + y * w + x] - s).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn conv_dilation_doubles_per_hidden_layer() {
        let mut rng = RngStream::new(4, 0);
        let net = ScoreNetwork::conv(16, 32, 2, 4, 5, &mut rng).unwrap();
        let d: Vec<usize> = net.layers().iter().map(|l| l.dilation).collect();
        assert_eq!(d, vec![1, 1, 2, 4, 8, 8, 1]);
        assert!(ScoreNetwork::conv(8, 8, 2, 4, 0, &mut rng).is_err());
        let dense = Layer::new(LayerKind::Dense, 2, 2, Activation::Identity, false).unwrap();
        assert!(dense.with_dilation(2).is_err());
    }

    #[test]
    fn data_scale_rescales_coordinates() {
        let mut rng = RngStream::new(4, 0);
        let mut net = ScoreNetwork::mlp(2, 8, 2, &mut rng).unwrap();
        let x = Tensor::from_vec(vec![0.4, -0.2]);
        let unit = net.score(&x, 0.3);
        net.set_data_scale(10.0).unwrap();
        let scaled = net.score(&x.scale(10.0), 3.0);
        assert!((&scaled - &unit.scale(0.1)).max_abs() < 1e-12);
    }

    #[test]
    fn inconsistent_layers_are_rejected() {
        let l1 = Layer::new(LayerKind::Dense, 4, 3, Activation::Silu, false).unwrap();
        let l2 = Layer::new(LayerKind::Dense, 2, 5, Activation::Identity, false).unwrap();
        assert!(ScoreNetwork::from_layers(vec![l1, l2], vec![2], 1e-3, true, 1.0).is_err());
        assert!(Layer::new(LayerKind::Dense, 4, 3, Activation::Silu, true).is_err());
    }
}
