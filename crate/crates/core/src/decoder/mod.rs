//! Untrained decoder prior `G(w; z)`.
//!
//! Each hidden layer maps `Z_{j+1} = U(cn(act(W_j Z_j)))`: a 1×1 convolution
//! (a `c_{j+1} × c_j` matrix acting on channels), a pointwise activation,
//! per-channel normalization without affine parameters and bilinear ×2
//! upsampling. The output is `sigmoid(W_J Z_J)`. The latent `Z_0` is drawn once
//! from `U[0, 0.1]` and stays fixed; only the weights are fitted.

mod adam;
mod checkpoint;
mod upsample;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use upsample::{upsample2, upsample2_adjoint};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{check_shape, Error, Result};
use crate::grid::RealGrid;

pub const NORM_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.01;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self · rhs`
    fn matmul(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, rhs.rows);
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (d, b) in dst.iter_mut().zip(rhs.row(k)) {
                    *d += a * b;
                }
            }
        }
        out
    }

    /// `self · rhsᵀ`
    fn matmul_t(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.cols, rhs.cols);
        let mut out = Matrix::zeros(self.rows, rhs.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for k in 0..rhs.rows {
                out.data[i * rhs.rows + k] = a.iter().zip(rhs.row(k)).map(|(x, y)| x * y).sum();
            }
        }
        out
    }

    /// `selfᵀ · rhs`
    fn t_matmul(&self, rhs: &Matrix) -> Matrix {
        debug_assert_eq!(self.rows, rhs.rows);
        let mut out = Matrix::zeros(self.cols, rhs.cols);
        for i in 0..self.rows {
            let src = rhs.row(i);
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (d, b) in out.row_mut(k).iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Sigmoid,
    Elu,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::Elu,
    ];

    fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Relu => a.max(0.0),
            Activation::LeakyRelu => {
                if a > 0.0 {
                    a
                } else {
                    LEAKY_SLOPE * a
                }
            }
            Activation::Tanh => a.tanh(),
            Activation::Sigmoid => sigmoid(a),
            Activation::Elu => {
                if a > 0.0 {
                    a
                } else {
                    a.exp_m1()
                }
            }
        }
    }

    // derivative in terms of the pre-activation `a` and the activation value `y`
    fn derivative(self, a: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if a > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Elu => {
                if a > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
        }
    }

    pub fn code(self) -> u64 {
        match self {
            Activation::Relu => 0,
            Activation::LeakyRelu => 1,
            Activation::Tanh => 2,
            Activation::Sigmoid => 3,
            Activation::Elu => 4,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Elu => "elu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown activation {s:?}")))
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderConfig {
    /// `{c_0, c_1, …, c_J}`
    pub channels: Vec<usize>,
    pub out_channels: usize,
    pub latent_h: usize,
    pub latent_w: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl DecoderConfig {
    /// Derives the latent size from the output size: `latent = output / 2^J`.
    pub fn for_output(
        channels: Vec<usize>,
        out_channels: usize,
        out_h: usize,
        out_w: usize,
        seed: u64,
    ) -> Result<Self> {
        if channels.len() < 2 {
            return Err(Error::Config("decoder needs at least one layer".into()));
        }
        let factor = 1usize << (channels.len() - 1);
        if !out_h.is_multiple_of(factor) || !out_w.is_multiple_of(factor) {
            return Err(Error::Config(format!(
                "output {out_h}x{out_w} is not divisible by 2^{} for a {}-layer decoder",
                channels.len() - 1,
                channels.len() - 1
            )));
        }
        let cfg = Self {
            channels,
            out_channels,
            latent_h: out_h / factor,
            latent_w: out_w / factor,
            activation: Activation::Relu,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() < 2 {
            return Err(Error::Config(
                "decoder needs at least one layer (J >= 1)".into(),
            ));
        }
        if self.channels.contains(&0) || self.out_channels == 0 {
            return Err(Error::Config("channel counts must be >= 1".into()));
        }
        if self.latent_h == 0 || self.latent_w == 0 {
            return Err(Error::Config("latent dimensions must be positive".into()));
        }
        if self.depth() > 30 {
            return Err(Error::Config("decoder too deep".into()));
        }
        Ok(())
    }

    /// Number of upsampling layers `J`.
    pub fn depth(&self) -> usize {
        self.channels.len() - 1
    }

    pub fn output_dims(&self) -> (usize, usize) {
        (self.latent_h << self.depth(), self.latent_w << self.depth())
    }

    fn spatial(&self, layer: usize) -> (usize, usize) {
        (self.latent_h << layer, self.latent_w << layer)
    }

    /// Shapes `(rows, cols)` of `W_0 … W_J`.
    pub fn weight_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes: Vec<_> = self.channels.windows(2).map(|p| (p[1], p[0])).collect();
        shapes.push((self.out_channels, *self.channels.last().unwrap()));
        shapes
    }

    pub fn num_parameters(&self) -> usize {
        self.weight_shapes().iter().map(|(r, c)| r * c).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderNet {
    config: DecoderConfig,
    latent: Matrix,
    weights: Vec<Matrix>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    activated: Vec<Matrix>,
    normalized: Vec<Matrix>,
    inv_std: Vec<Vec<f64>>,
    output: Matrix,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl DecoderNet {
    /// Latent from `U[0, 0.1]`, then weights `N(0, 2/c_in)`, both from `config.seed`.
    pub fn init(config: DecoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d0 = config.latent_h * config.latent_w;
        let latent = Matrix::new(
            config.channels[0],
            d0,
            (0..config.channels[0] * d0)
                .map(|_| rng.random_range(0.0..=0.1))
                .collect(),
        );
        let weights = sample_weights(&config, &mut rng);
        Ok(Self {
            config,
            latent,
            weights,
        })
    }

    /// Replaces the weights with a fresh draw from `seed`, keeping the latent.
    pub fn resample_weights(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.weights = sample_weights(&self.config, &mut rng);
    }

    pub fn from_parts(config: DecoderConfig, latent: Matrix, weights: Vec<Matrix>) -> Result<Self> {
        config.validate()?;
        let d0 = config.latent_h * config.latent_w;
        if latent.rows != config.channels[0] || latent.cols != d0 {
            return Err(Error::Config("latent shape does not match config".into()));
        }
        let shapes = config.weight_shapes();
        if weights.len() != shapes.len()
            || weights
                .iter()
                .zip(&shapes)
                .any(|(w, &(r, c))| w.rows != r || w.cols != c)
        {
            return Err(Error::Config("weight shapes do not match config".into()));
        }
        if weights
            .iter()
            .any(|w| w.data.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Config("non-finite weight".into()));
        }
        Ok(Self {
            config,
            latent,
            weights,
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    pub fn latent(&self) -> &Matrix {
        &self.latent
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    pub fn forward_cached(&self) -> ForwardCache {
        let cfg = &self.config;
        let depth = cfg.depth();
        let mut inputs = Vec::with_capacity(depth + 1);
        let mut pre = Vec::with_capacity(depth);
        let mut activated = Vec::with_capacity(depth);
        let mut normalized = Vec::with_capacity(depth);
        let mut inv_std = Vec::with_capacity(depth);
        inputs.push(self.latent.clone());
        for j in 0..depth {
            let (h, w) = cfg.spatial(j);
            let a = self.weights[j].matmul(&inputs[j]);
            let r = Matrix::new(
                a.rows,
                a.cols,
                a.data.iter().map(|&v| cfg.activation.apply(v)).collect(),
            );
            let (n, s) = channel_norm(&r);
            let mut z = Matrix::zeros(n.rows, 4 * h * w);
            for c in 0..n.rows {
                upsample2(n.row(c), h, w, z.row_mut(c));
            }
            pre.push(a);
            activated.push(r);
            normalized.push(n);
            inv_std.push(s);
            inputs.push(z);
        }
        let mut output = self.weights[depth].matmul(&inputs[depth]);
        output.data.iter_mut().for_each(|v| *v = sigmoid(*v));
        ForwardCache {
            inputs,
            pre,
            activated,
            normalized,
            inv_std,
            output,
        }
    }

    /// Output channels at full resolution, every entry in (0, 1).
    pub fn forward(&self) -> Vec<RealGrid> {
        self.output_to_grids(&self.forward_cached().output)
    }

    fn output_to_grids(&self, output: &Matrix) -> Vec<RealGrid> {
        let (h, w) = self.config.output_dims();
        (0..output.rows)
            .map(|c| RealGrid::new(h, w, output.row(c).to_vec()).expect("finite decoder output"))
            .collect()
    }

    /// Weight gradients for a given gradient of the loss with respect to the output.
    pub fn backward(&self, cache: &ForwardCache, d_output: &[RealGrid]) -> Result<Vec<Matrix>> {
        let cfg = &self.config;
        let depth = cfg.depth();
        let dims = cfg.output_dims();
        if d_output.len() != cfg.out_channels {
            return Err(Error::Config(format!(
                "expected {} output-gradient channels, got {}",
                cfg.out_channels,
                d_output.len()
            )));
        }
        let mut d_pre_out = Matrix::zeros(cfg.out_channels, dims.0 * dims.1);
        for (c, g) in d_output.iter().enumerate() {
            check_shape("decoder backward", dims, g.shape())?;
            let y = cache.output.row(c);
            for ((d, &gv), &yv) in d_pre_out.row_mut(c).iter_mut().zip(g.as_slice()).zip(y) {
                *d = gv * yv * (1.0 - yv);
            }
        }
        let mut grads = vec![Matrix::zeros(0, 0); depth + 1];
        grads[depth] = d_pre_out.matmul_t(&cache.inputs[depth]);
        let mut d_z = self.weights[depth].t_matmul(&d_pre_out);
        for j in (0..depth).rev() {
            let (h, w) = cfg.spatial(j);
            let n = &cache.normalized[j];
            let mut d_a = Matrix::zeros(n.rows, n.cols);
            let mut d_n = vec![0.0; h * w];
            for c in 0..n.rows {
                upsample2_adjoint(d_z.row(c), h, w, &mut d_n);
                let y = n.row(c);
                let len = y.len() as f64;
                let mean_d = d_n.iter().sum::<f64>() / len;
                let mean_dy = d_n.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / len;
                let s = cache.inv_std[j][c];
                let pre = cache.pre[j].row(c);
                let act = cache.activated[j].row(c);
                for (i, d) in d_a.row_mut(c).iter_mut().enumerate() {
                    let d_r = s * (d_n[i] - mean_d - y[i] * mean_dy);
                    *d = d_r * cfg.activation.derivative(pre[i], act[i]);
                }
            }
            grads[j] = d_a.matmul_t(&cache.inputs[j]);
            if j > 0 {
                d_z = self.weights[j].t_matmul(&d_a);
            }
        }
        Ok(grads)
    }
}

fn sample_weights(config: &DecoderConfig, rng: &mut ChaCha8Rng) -> Vec<Matrix> {
    config
        .weight_shapes()
        .into_iter()
        .map(|(rows, cols)| {
            let normal = Normal::new(0.0, (2.0 / cols as f64).sqrt()).expect("valid std");
            Matrix::new(
                rows,
                cols,
                (0..rows * cols).map(|_| normal.sample(rng)).collect(),
            )
        })
        .collect()
}

// Per-row standardization; returns the normalized rows and 1/√(var + eps) per row.
fn channel_norm(x: &Matrix) -> (Matrix, Vec<f64>) {
    let mut out = Matrix::zeros(x.rows, x.cols);
    let mut inv = Vec::with_capacity(x.rows);
    let len = x.cols as f64;
    for c in 0..x.rows {
        let row = x.row(c);
        let mean = row.iter().sum::<f64>() / len;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / len;
        let s = 1.0 / (var + NORM_EPS).sqrt();
        for (o, v) in out.row_mut(c).iter_mut().zip(row) {
            *o = (v - mean) * s;
        }
        inv.push(s);
    }
    (out, inv)
}

pub fn decoder_forward(net: &DecoderNet) -> Vec<RealGrid> {
    net.forward()
}

fn check_target(net: &DecoderNet, target: &[RealGrid]) -> Result<()> {
    if target.len() != net.config.out_channels {
        return Err(Error::Config(format!(
            "target has {} channels, decoder produces {}",
            target.len(),
            net.config.out_channels
        )));
    }
    for t in target {
        check_shape("decoder target", net.config.output_dims(), t.shape())?;
    }
    Ok(())
}

/// `½‖target − G(w; z)‖²` summed over channels.
pub fn fit_loss(output: &[RealGrid], target: &[RealGrid]) -> f64 {
    output
        .iter()
        .zip(target)
        .map(|(o, t)| 0.5 * o.sub(t).map(|d| d.norm_sq()).unwrap_or(f64::INFINITY))
        .sum()
}

/// Gradients of `½‖target − G(w; z)‖²` with respect to every `W_j`.
pub fn decoder_gradient(net: &DecoderNet, target: &[RealGrid]) -> Result<Vec<Matrix>> {
    check_target(net, target)?;
    let cache = net.forward_cached();
    let residual = residual_grids(net, &cache, target)?;
    net.backward(&cache, &residual)
}

fn residual_grids(
    net: &DecoderNet,
    cache: &ForwardCache,
    target: &[RealGrid],
) -> Result<Vec<RealGrid>> {
    net.output_to_grids(&cache.output)
        .iter()
        .zip(target)
        .map(|(o, t)| o.sub(t))
        .collect()
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Fit loss before each step and after the last one (`steps + 1` entries).
    pub losses: Vec<f64>,
    /// Decoder output after the last step.
    pub output: Vec<RealGrid>,
}

/// Runs `steps` Adam iterations on `½‖target − G(w; z)‖²`, warm-starting from the current weights.
pub fn fit_to_target(
    net: &mut DecoderNet,
    target: &[RealGrid],
    steps: usize,
    adam: &mut AdamState,
) -> Result<FitOutcome> {
    check_target(net, target)?;
    let mut losses = Vec::with_capacity(steps + 1);
    let mut cache = net.forward_cached();
    for step in 0..=steps {
        let residual = residual_grids(net, &cache, target)?;
        let loss: f64 = residual.iter().map(|r| 0.5 * r.norm_sq()).sum();
        if !loss.is_finite() {
            return Err(Error::Diverged {
                iteration: step,
                what: format!("decoder fit loss {loss}"),
            });
        }
        losses.push(loss);
        if step == steps {
            break;
        }
        let grads = net.backward(&cache, &residual)?;
        adam.step(&mut net.weights, &grads)?;
        if let Some(bad) = net
            .weights
            .iter()
            .position(|w| w.data.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Diverged {
                iteration: step,
                what: format!("non-finite entry in W_{bad}"),
            });
        }
        cache = net.forward_cached();
    }
    Ok(FitOutcome {
        losses,
        output: net.output_to_grids(&cache.output),
    })
}
