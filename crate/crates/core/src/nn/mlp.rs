//! Time-conditioned MLP velocity field with a hand-written reverse pass.
//!
//! Parameters live in one flat vector. Each layer stores its weight matrix
//! row-major (`n_out × n_in`) followed by its bias (`n_out`). The network input
//! is the state concatenated with a sinusoidal embedding of `t`; hidden layers
//! apply the activation and the output layer is linear with width `in_dim`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Silu,
    Tanh,
}

impl Activation {
    pub fn id(self) -> u32 {
        match self {
            Activation::Silu => 0,
            Activation::Tanh => 1,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(Activation::Silu),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Silu => z / (1.0 + (-z).exp()),
            Activation::Tanh => z.tanh(),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 + z * (1.0 - s))
            }
            Activation::Tanh => {
                let y = z.tanh();
                1.0 - y * y
            }
        }
    }

    fn init_gain(self) -> f64 {
        match self {
            Activation::Silu => 2f64.sqrt(),
            Activation::Tanh => 5.0 / 3.0,
        }
    }
}

fn default_time_embed_dim() -> usize {
    16
}

/// Architecture of a velocity field. The output width always equals `in_dim`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub in_dim: usize,
    pub hidden: Vec<usize>,
    #[serde(default = "default_time_embed_dim")]
    pub time_embed_dim: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(in_dim: usize, hidden: Vec<usize>) -> Self {
        MlpSpec {
            in_dim,
            hidden,
            time_embed_dim: default_time_embed_dim(),
            activation: Activation::Silu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 {
            return Err(Error::contract("in_dim must be at least 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::contract("hidden widths must be at least 1"));
        }
        Ok(())
    }

    /// Layer widths from network input (state + time embedding) to output.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.in_dim + self.time_embed_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.in_dim);
        w
    }

    /// `(params, macs)` of one forward pass; biases count as parameters but not MACs.
    pub fn count_params_macs(&self) -> (usize, usize) {
        let widths = self.widths();
        widths.windows(2).fold((0, 0), |(p, m), pair| {
            let (n_in, n_out) = (pair[0], pair[1]);
            (p + n_in * n_out + n_out, m + n_in * n_out)
        })
    }

    pub fn param_count(&self) -> usize {
        self.count_params_macs().0
    }
}

/// Sinusoidal features `[sin(w_0 t), cos(w_0 t), sin(w_1 t), ...]` with
/// frequencies `w_i = (i + 1) * pi / 2`. An odd width ends with `t` itself.
pub fn time_embedding(t: f64, width: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), width);
    let pairs = width / 2;
    for i in 0..pairs {
        let w = (i as f64 + 1.0) * PI / 2.0;
        let (s, c) = (w * t).sin_cos();
        out[2 * i] = s;
        out[2 * i + 1] = c;
    }
    if width % 2 == 1 {
        out[width - 1] = t;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerShape {
    n_in: usize,
    n_out: usize,
    offset: usize,
}

impl LayerShape {
    fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.offset + self.n_in * self.n_out]
    }

    fn bias<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        let start = self.offset + self.n_in * self.n_out;
        &params[start..start + self.n_out]
    }
}

fn layer_shapes(spec: &MlpSpec) -> Vec<LayerShape> {
    let widths = spec.widths();
    let mut offset = 0;
    widths
        .windows(2)
        .map(|pair| {
            let shape = LayerShape {
                n_in: pair[0],
                n_out: pair[1],
                offset,
            };
            offset += pair[0] * pair[1] + pair[1];
            shape
        })
        .collect()
}

/// Borrowed view of one dense layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub weights: &'a [f64],
    pub bias: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    spec: MlpSpec,
    weights: Vec<f64>,
    layers: Vec<LayerShape>,
}

impl VelocityField {
    /// Kaiming-uniform weights and zero biases from a fixed seed.
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        let mut field = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = field.spec.activation.init_gain();
        for shape in field.layers.clone() {
            let bound = gain * (3.0 / shape.n_in as f64).sqrt();
            for w in &mut field.weights[shape.offset..shape.offset + shape.n_in * shape.n_out] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(field)
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let layers = layer_shapes(&spec);
        let weights = vec![0.0; spec.param_count()];
        Ok(VelocityField {
            spec,
            weights,
            layers,
        })
    }

    pub fn from_weights(spec: MlpSpec, weights: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        check_dim(spec.param_count(), weights.len())?;
        if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::contract(format!(
                "non-finite weight at index {index}"
            )));
        }
        let layers = layer_shapes(&spec);
        Ok(VelocityField {
            spec,
            weights,
            layers,
        })
    }

    /// A field that returns `c` everywhere: all weights zero, output bias `c`.
    pub fn constant(spec: MlpSpec, c: &[f64]) -> Result<Self> {
        check_dim(spec.in_dim, c.len())?;
        let mut field = Self::zeros(spec)?;
        let last = *field.layers.last().expect("at least one layer");
        let start = last.offset + last.n_in * last.n_out;
        field.weights[start..start + last.n_out].copy_from_slice(c);
        Ok(field)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.in_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    pub fn layers(&self) -> impl Iterator<Item = LayerView<'_>> {
        self.layers.iter().map(|s| LayerView {
            n_in: s.n_in,
            n_out: s.n_out,
            weights: s.weights(&self.weights),
            bias: s.bias(&self.weights),
        })
    }

    pub fn forward(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        self.check_input(x, t)?;
        let mut out = vec![0.0; self.spec.in_dim];
        self.eval_into(x, t, &mut out);
        Ok(out)
    }

    /// Forward pass without input validation; `x.len()` and `out.len()` must equal `dim()`.
    pub fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let mut input = self.embed_input(x, t);
        let n = self.layers.len();
        let act = self.spec.activation;
        for (i, shape) in self.layers.iter().enumerate() {
            let mut z = shape.bias(&self.weights).to_vec();
            affine_accumulate(shape.weights(&self.weights), &input, &mut z);
            if i + 1 < n {
                z.iter_mut().for_each(|v| *v = act.apply(*v));
                input = z;
            } else {
                out.copy_from_slice(&z);
            }
        }
    }

    /// Forward pass that records intermediates on `tape` for a later [`Tape::backward`].
    pub fn forward_recorded(&self, x: &[f64], t: f64, tape: &mut Tape) -> Result<Vec<f64>> {
        self.check_input(x, t)?;
        let n = self.layers.len();
        let act = self.spec.activation;
        tape.inputs.resize_with(n, Vec::new);
        tape.pre.resize_with(n, Vec::new);
        tape.inputs[0] = self.embed_input(x, t);
        let mut out = Vec::new();
        for (i, shape) in self.layers.iter().enumerate() {
            let mut z = shape.bias(&self.weights).to_vec();
            affine_accumulate(shape.weights(&self.weights), &tape.inputs[i], &mut z);
            if i + 1 < n {
                tape.inputs[i + 1] = z.iter().map(|&v| act.apply(v)).collect();
                tape.pre[i] = z;
            } else {
                out = z;
            }
        }
        tape.recorded = Some(self.weights.len());
        Ok(out)
    }

    fn embed_input(&self, x: &[f64], t: f64) -> Vec<f64> {
        let d = self.spec.in_dim;
        let mut input = vec![0.0; d + self.spec.time_embed_dim];
        input[..d].copy_from_slice(x);
        time_embedding(t, self.spec.time_embed_dim, &mut input[d..]);
        input
    }

    fn check_input(&self, x: &[f64], t: f64) -> Result<()> {
        check_dim(self.spec.in_dim, x.len())?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::contract(format!("time {t} outside [0, 1]")));
        }
        Ok(())
    }
}

#[inline]
fn affine_accumulate(w: &[f64], input: &[f64], z: &mut [f64]) {
    let n_in = input.len();
    for (row, zj) in w.chunks_exact(n_in).zip(z.iter_mut()) {
        *zj += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Intermediates of the most recent recorded forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    recorded: Option<usize>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accumulates `d loss / d weights` into `grads` given `d loss / d output`,
    /// consuming the recorded forward pass.
    pub fn backward(
        &mut self,
        field: &VelocityField,
        grad_out: &[f64],
        grads: &mut [f64],
    ) -> Result<()> {
        match self.recorded.take() {
            None => {
                return Err(Error::State(
                    "backward called without a recorded forward pass".into(),
                ))
            }
            Some(n) if n != field.param_count() => {
                return Err(Error::State(
                    "tape was recorded for a different field".into(),
                ))
            }
            Some(_) => {}
        }
        check_dim(field.dim(), grad_out.len())?;
        check_dim(field.param_count(), grads.len())?;
        let act = field.spec.activation;
        let mut delta = grad_out.to_vec();
        for (i, shape) in field.layers.iter().enumerate().rev() {
            let input = &self.inputs[i];
            let (gw, gb) = grads
                [shape.offset..shape.offset + shape.n_in * shape.n_out + shape.n_out]
                .split_at_mut(shape.n_in * shape.n_out);
            for ((row, gbj), &dj) in gw
                .chunks_exact_mut(shape.n_in)
                .zip(gb.iter_mut())
                .zip(&delta)
            {
                *gbj += dj;
                if dj != 0.0 {
                    row.iter_mut().zip(input).for_each(|(g, a)| *g += dj * a);
                }
            }
            if i == 0 {
                break;
            }
            let w = shape.weights(&field.weights);
            let mut prev = vec![0.0; shape.n_in];
            for (row, &dj) in w.chunks_exact(shape.n_in).zip(&delta) {
                if dj != 0.0 {
                    prev.iter_mut().zip(row).for_each(|(p, wv)| *p += dj * wv);
                }
            }
            prev.iter_mut()
                .zip(&self.pre[i - 1])
                .for_each(|(p, &z)| *p *= act.derivative(z));
            delta = prev;
        }
        Ok(())
    }
}

/// Scalar loss together with its gradient over all weights of one field.
#[derive(Debug, Clone, PartialEq)]
pub struct GradTape {
    pub loss: f64,
    pub grads: Vec<f64>,
}

impl GradTape {
    pub fn zeros(param_count: usize) -> Self {
        GradTape {
            loss: 0.0,
            grads: vec![0.0; param_count],
        }
    }

    /// Sum of two losses over the same parameters.
    pub fn combine(mut self, other: &GradTape) -> Result<Self> {
        check_dim(self.grads.len(), other.grads.len())?;
        self.loss += other.loss;
        self.grads
            .iter_mut()
            .zip(&other.grads)
            .for_each(|(a, b)| *a += b);
        Ok(self)
    }

    pub fn scale(&mut self, factor: f64) {
        self.loss *= factor;
        self.grads.iter_mut().for_each(|g| *g *= factor);
    }
}

/// One supervised row: network input `(x, t)` and the regression target.
#[derive(Debug, Clone)]
pub struct Row {
    pub x: Vec<f64>,
    pub t: f64,
    pub target: Vec<f64>,
}

/// Mean over rows of `‖v(x, t) - target‖²`.
pub fn velocity_regression<I>(field: &VelocityField, rows: I) -> Result<GradTape>
where
    I: IntoIterator<Item = Row>,
{
    regression(field, rows, false)
}

/// Mean over rows of `‖(x - v(x, t)) - target‖²`, the one-step Euler output.
pub fn one_step_regression<I>(field: &VelocityField, rows: I) -> Result<GradTape>
where
    I: IntoIterator<Item = Row>,
{
    regression(field, rows, true)
}

fn regression<I>(field: &VelocityField, rows: I, one_step: bool) -> Result<GradTape>
where
    I: IntoIterator<Item = Row>,
{
    let mut tape = Tape::new();
    let mut acc = GradTape::zeros(field.param_count());
    let mut n = 0usize;
    let mut grad_out = vec![0.0; field.dim()];
    let sign = if one_step { -1.0 } else { 1.0 };
    for row in rows {
        check_dim(field.dim(), row.target.len())?;
        let v = field.forward_recorded(&row.x, row.t, &mut tape)?;
        for j in 0..v.len() {
            let pred = if one_step { row.x[j] - v[j] } else { v[j] };
            let r = pred - row.target[j];
            acc.loss += r * r;
            grad_out[j] = 2.0 * r * sign;
        }
        tape.backward(field, &grad_out, &mut acc.grads)?;
        n += 1;
    }
    if n == 0 {
        return Err(Error::contract("empty batch"));
    }
    acc.scale(1.0 / n as f64);
    Ok(acc)
}
