//! Dense feed-forward networks: evaluation, L1 loss, reverse-mode gradients
//! and the Adam optimizer.
//!
//! Each layer computes `z = phi(b + W x)` with `W` stored row-major
//! (`output_width x input_width`).

mod adam;

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure_width, Error, Result};
use crate::textio::{join_values, parse_num, Lines};

pub use adam::{adam_step, AdamState, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    fn slope_at_output(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - z * z,
            Activation::Identity => 1.0,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_width: usize, output_width: usize, activation: Activation) -> Self {
        LayerSpec {
            input_width,
            output_width,
            activation,
        }
    }
}

/// Layer specs for a stack through `widths`: tanh on hidden layers, identity
/// on the last.
pub fn stack_specs(widths: &[usize]) -> Vec<LayerSpec> {
    let n = widths.len().saturating_sub(1);
    (0..n)
        .map(|i| {
            let act = if i + 1 == n {
                Activation::Identity
            } else {
                Activation::Tanh
            };
            LayerSpec::new(widths[i], widths[i + 1], act)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub spec: LayerSpec,
    /// Row-major `output_width x input_width`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer gradients shaped like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Activations from a forward pass: the input followed by every layer output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations
            .last()
            .expect("trace holds at least the input")
    }
}

fn check_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::invalid("a network needs at least one layer"));
    }
    for (i, s) in specs.iter().enumerate() {
        if s.input_width == 0 || s.output_width == 0 {
            return Err(Error::invalid(format!("layer {i}: widths must be > 0")));
        }
    }
    for (i, w) in specs.windows(2).enumerate() {
        if w[0].output_width != w[1].input_width {
            return Err(Error::invalid(format!(
                "layer {} outputs {} values but layer {} takes {}",
                i,
                w[0].output_width,
                i + 1,
                w[1].input_width
            )));
        }
    }
    Ok(())
}

/// Xavier-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_network(specs: &[LayerSpec], seed: u64) -> Result<NetworkParams> {
    check_specs(specs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = specs
        .iter()
        .map(|&spec| {
            let limit = xavier_limit(&spec);
            let weights = (0..spec.input_width * spec.output_width)
                .map(|_| rng.random_range(-limit..=limit))
                .collect();
            DenseLayer {
                spec,
                weights,
                biases: vec![0.0; spec.output_width],
            }
        })
        .collect();
    Ok(NetworkParams { layers })
}

pub fn xavier_limit(spec: &LayerSpec) -> f64 {
    (6.0 / (spec.input_width + spec.output_width) as f64).sqrt()
}

impl NetworkParams {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        check_specs(&specs)?;
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.spec.input_width * l.spec.output_width
                || l.biases.len() != l.spec.output_width
            {
                return Err(Error::invalid(format!(
                    "layer {i}: parameter shape mismatch"
                )));
            }
            if !l.weights.iter().chain(&l.biases).all(|v| v.is_finite()) {
                return Err(Error::invalid(format!("layer {i}: non-finite parameter")));
            }
        }
        Ok(NetworkParams { layers })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].spec.input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].spec.output_width
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// All parameters in storage order: per layer, weights then biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    /// The network `other ∘ self`.
    pub fn then(&self, other: &NetworkParams) -> Result<NetworkParams> {
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        NetworkParams::from_layers(layers)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Trace> {
        ensure_width("network input", self.input_width(), x.len())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for layer in &self.layers {
            let input = activations.last().expect("non-empty");
            let out = layer_forward(layer, input);
            activations.push(out);
        }
        Ok(Trace { activations })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.forward(x)?;
        Ok(trace.activations.pop().expect("non-empty"))
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    fn check_trace(&self, trace: &Trace) -> Result<()> {
        if trace.activations.len() != self.layers.len() + 1 {
            return Err(Error::invalid(format!(
                "trace has {} activations, network needs {}",
                trace.activations.len(),
                self.layers.len() + 1
            )));
        }
        ensure_width(
            "trace input",
            self.input_width(),
            trace.activations[0].len(),
        )?;
        for (layer, act) in self.layers.iter().zip(&trace.activations[1..]) {
            ensure_width("trace activation", layer.spec.output_width, act.len())?;
        }
        Ok(())
    }

    /// Gradients of a loss with respect to every parameter and to the input.
    pub fn backward(&self, trace: &Trace, d_output: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let mut grads = self.zero_gradients();
        let d_input = self.backward_into(trace, d_output, &mut grads)?;
        Ok((grads, d_input))
    }

    /// Like [`backward`](Self::backward) but adds into `grads`, for
    /// accumulating over a batch or over several losses.
    pub fn backward_into(
        &self,
        trace: &Trace,
        d_output: &[f64],
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        self.check_trace(trace)?;
        ensure_width("output gradient", self.output_width(), d_output.len())?;
        if grads.layers.len() != self.layers.len() {
            return Err(Error::invalid("gradient buffer does not match the network"));
        }
        let mut upstream = d_output.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (input, output) = (&trace.activations[i], &trace.activations[i + 1]);
            let n_in = layer.spec.input_width;
            let delta: Vec<f64> = upstream
                .iter()
                .zip(output)
                .map(|(d, z)| d * layer.spec.activation.slope_at_output(*z))
                .collect();
            let g = &mut grads.layers[i];
            let mut d_in = vec![0.0; n_in];
            for (r, &dr) in delta.iter().enumerate() {
                g.biases[r] += dr;
                if dr == 0.0 {
                    continue;
                }
                let row = &layer.weights[r * n_in..(r + 1) * n_in];
                let grow = &mut g.weights[r * n_in..(r + 1) * n_in];
                for c in 0..n_in {
                    grow[c] += dr * input[c];
                    d_in[c] += dr * row[c];
                }
            }
            upstream = d_in;
        }
        Ok(upstream)
    }

    /// Writes the `network` section of a model file.
    pub fn write_section<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "network {}", self.layers.len())?;
        for l in &self.layers {
            let s = l.spec;
            writeln!(
                w,
                "layer {} {} {}",
                s.input_width,
                s.output_width,
                s.activation.as_str()
            )?;
            for row in l.weights.chunks(s.input_width) {
                writeln!(w, "w {}", join_values(row))?;
            }
            writeln!(w, "b {}", join_values(&l.biases))?;
        }
        Ok(())
    }

    pub(crate) fn read_section<R: BufRead>(lines: &mut Lines<R>) -> Result<Self> {
        let (n, parts) = lines.keyed("network")?;
        let count: usize = match parts.as_slice() {
            [c] => parse_num(c, n)?,
            _ => return Err(Error::parse(n, "expected `network <layers>`")),
        };
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (n, parts) = lines.keyed("layer")?;
            let spec = match parts.as_slice() {
                [i, o, a] => LayerSpec::new(
                    parse_num(i, n)?,
                    parse_num(o, n)?,
                    a.parse()
                        .map_err(|e: Error| Error::parse(n, e.to_string()))?,
                ),
                _ => return Err(Error::parse(n, "expected `layer <in> <out> <activation>`")),
            };
            let mut weights = Vec::with_capacity(spec.input_width * spec.output_width);
            for _ in 0..spec.output_width {
                weights.extend(lines.keyed_values("w", spec.input_width)?);
            }
            let biases = lines.keyed_values("b", spec.output_width)?;
            layers.push(DenseLayer {
                spec,
                weights,
                biases,
            });
        }
        let line = lines.line();
        NetworkParams::from_layers(layers).map_err(|e| Error::parse(line, e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = Vec::new();
        self.write_section(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("utf-8")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text.as_bytes());
        let net = Self::read_section(&mut lines)?;
        if let Some((n, _)) = lines.try_next()? {
            return Err(Error::parse(n, "unexpected content after network"));
        }
        Ok(net)
    }
}

fn layer_forward(layer: &DenseLayer, input: &[f64]) -> Vec<f64> {
    let n_in = layer.spec.input_width;
    layer
        .weights
        .chunks(n_in)
        .zip(&layer.biases)
        .map(|(row, b)| {
            let s: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            layer.spec.activation.apply(b + s)
        })
        .collect()
}

impl Gradients {
    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }

    pub fn fill_zero(&mut self) {
        for v in self.values_mut() {
            *v = 0.0;
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute difference and its gradient with respect to `pred`,
/// using the subgradient `sign(0) = 0`.
pub fn l1_loss_and_grad(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    ensure_width("L1 target", pred.len(), target.len())?;
    if pred.is_empty() {
        return Err(Error::invalid("L1 loss of empty vectors"));
    }
    let n = pred.len() as f64;
    let loss = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / n;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| sign(p - t) / n)
        .collect();
    Ok((loss, grad))
}

pub fn l1_loss(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64
}
