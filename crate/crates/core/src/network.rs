//! Fully connected sigmoid network with linear logits on the output layer.
//!
//! Layer `l` (1-based, as in the usual MLP notation) maps `z^{l-1}` to
//! `a^l = W^l z^{l-1} + b^l`. Hidden layers emit `z^l = sigmoid(a^l)`, the
//! output layer emits `z^L = a^L`, which the loss feeds through softmax.
//! In code the layers live in a zero-based `Vec`, so `layers[0]` is `W^1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Matrix, Vector};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: Matrix,
    pub bias: Vector,
}

impl LayerParams {
    pub fn new(weights: Matrix, bias: Vector) -> Result<Self> {
        if weights.rows() != bias.len() {
            return Err(Error::shape(
                "LayerParams::new",
                format!("weights {}x{}", weights.rows(), weights.cols()),
                format!("bias of {}", bias.len()),
            ));
        }
        Ok(LayerParams { weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LayerParams>", into = "Vec<LayerParams>")]
pub struct MlpNetwork {
    layers: Vec<LayerParams>,
}

impl TryFrom<Vec<LayerParams>> for MlpNetwork {
    type Error = Error;

    fn try_from(layers: Vec<LayerParams>) -> Result<Self> {
        MlpNetwork::new(layers)
    }
}

impl From<MlpNetwork> for Vec<LayerParams> {
    fn from(net: MlpNetwork) -> Self {
        net.layers
    }
}

impl MlpNetwork {
    pub fn new(layers: Vec<LayerParams>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::invalid(format!(
                "a network needs at least one hidden layer, got {} weight layers",
                layers.len()
            )));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].inputs() != pair[0].outputs() {
                return Err(Error::shape(
                    "MlpNetwork::new",
                    format!("layer {} output {}", l + 1, pair[0].outputs()),
                    format!("layer {} input {}", l + 2, pair[1].inputs()),
                ));
            }
        }
        Ok(MlpNetwork { layers })
    }

    /// Uniform Glorot initialisation in `[-s, s]`, `s = sqrt(6 / (fan_in + fan_out))`,
    /// with zero biases.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 3 {
            return Err(Error::invalid(format!(
                "layer sizes need input, at least one hidden, and output entries; got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::invalid(format!(
                "layer sizes must be positive: {layer_sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-s..=s))
                    .collect();
                LayerParams {
                    weights: Matrix::new(fan_out, fan_in, data).expect("finite init"),
                    bias: Vector::zeros(fan_out),
                }
            })
            .collect();
        MlpNetwork::new(layers)
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<LayerParams> {
        self.layers
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `[N_0, N_1, ..., N_L]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(LayerParams::outputs))
            .collect()
    }

    /// Widths of the hidden layers `N_1 .. N_{L-1}`.
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(LayerParams::outputs)
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|p| p.weights.rows() * p.weights.cols() + p.bias.len())
            .sum()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::shape(
                "forward",
                format!("network input {}", self.input_dim()),
                format!("vector of {}", input.len()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len() + 1);
        outputs.push(Vector::from_vec_unchecked(input.to_vec()));
        for (l, layer) in self.layers.iter().enumerate() {
            let mut a = vec![0.0; layer.outputs()];
            math::matvec_into(&layer.weights, &outputs[l], &mut a);
            a.iter_mut()
                .zip(layer.bias.iter())
                .for_each(|(x, b)| *x += b);
            let z = if l == last {
                a.clone()
            } else {
                a.iter().copied().map(math::sigmoid_scalar).collect()
            };
            activations.push(Vector::from_vec_unchecked(a));
            outputs.push(Vector::from_vec_unchecked(z));
        }
        Ok(ForwardTrace {
            activations,
            outputs,
        })
    }

    pub fn logits(&self, input: &[f64]) -> Result<Vector> {
        let mut trace = self.forward(input)?;
        Ok(trace.activations.pop().expect("non-empty network"))
    }

    /// Argmax of the logits, lowest index on ties.
    pub fn predict(&self, input: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(input)?))
    }

    /// Cross-entropy of a single sample.
    pub fn loss(&self, input: &[f64], target: usize) -> Result<f64> {
        Ok(math::softmax_cross_entropy(&self.logits(input)?, target)?.0)
    }

    pub fn backward(&self, trace: &ForwardTrace, target: usize) -> Result<GradientSet> {
        let mut grads = GradientSet::zeros_like(self);
        self.backward_into(trace, target, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale * dE/dparams` for one sample to `grads` and returns the
    /// sample's cross-entropy.
    pub fn backward_into(
        &self,
        trace: &ForwardTrace,
        target: usize,
        scale: f64,
        grads: &mut GradientSet,
    ) -> Result<f64> {
        if trace.activations.len() != self.layers.len()
            || trace
                .activations
                .iter()
                .zip(&self.layers)
                .any(|(a, p)| a.len() != p.outputs())
        {
            return Err(Error::shape(
                "backward",
                format!("network {:?}", self.layer_sizes()),
                "trace from a different network",
            ));
        }
        let (loss, mut delta) = math::softmax_cross_entropy(trace.logits(), target)?;
        for l in (0..self.layers.len()).rev() {
            let z_prev = &trace.outputs[l];
            let dw = &mut grads.weights[l];
            for (i, &d) in delta.iter().enumerate() {
                let sd = scale * d;
                if sd != 0.0 {
                    dw.row_mut(i)
                        .iter_mut()
                        .zip(z_prev.iter())
                        .for_each(|(g, z)| *g += sd * z);
                }
            }
            grads.biases[l]
                .iter_mut()
                .zip(delta.iter())
                .for_each(|(g, d)| *g += scale * d);
            if l > 0 {
                let w = &self.layers[l].weights;
                let mut next = vec![0.0; w.cols()];
                for (i, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        next.iter_mut().zip(w.row(i)).for_each(|(n, x)| *n += d * x);
                    }
                }
                next.iter_mut()
                    .zip(z_prev.iter())
                    .for_each(|(n, z)| *n *= z * (1.0 - z));
                delta = Vector::from_vec_unchecked(next);
            }
        }
        Ok(loss)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-layer pre-activations `a^l` and outputs `z^l` of one forward pass.
/// `outputs[0]` is the input itself.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub activations: Vec<Vector>,
    pub outputs: Vec<Vector>,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Vector {
        self.activations.last().expect("non-empty trace")
    }
}

/// Gradients with the same shapes as an [`MlpNetwork`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
}

impl GradientSet {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        GradientSet {
            weights: net
                .layers
                .iter()
                .map(|p| Matrix::zeros(p.weights.rows(), p.weights.cols()))
                .collect(),
            biases: net
                .layers
                .iter()
                .map(|p| Vector::zeros(p.bias.len()))
                .collect(),
        }
    }

    pub fn shape_matches(&self, net: &MlpNetwork) -> bool {
        self.weights.len() == net.depth()
            && self.biases.len() == net.depth()
            && net.layers.iter().enumerate().all(|(l, p)| {
                self.weights[l].shape() == p.weights.shape() && self.biases[l].len() == p.bias.len()
            })
    }

    pub fn fill_zero(&mut self) {
        self.weights
            .iter_mut()
            .for_each(|m| m.as_mut_slice().fill(0.0));
        self.biases.iter_mut().for_each(|b| b.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        self.values_mut().for_each(|x| *x *= factor);
    }

    /// `self += other`. Panics when shapes differ.
    pub fn add_assign(&mut self, other: &GradientSet) {
        assert_eq!(
            self.weights.len(),
            other.weights.len(),
            "gradient depth mismatch"
        );
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            assert_eq!(a.shape(), b.shape(), "gradient shape mismatch");
            a.as_mut_slice()
                .iter_mut()
                .zip(b.as_slice())
                .for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            assert_eq!(a.len(), b.len(), "gradient shape mismatch");
            a.iter_mut().zip(b.iter()).for_each(|(x, y)| *x += y);
        }
    }

    /// Inner product over all entries.
    pub fn dot(&self, other: &GradientSet) -> f64 {
        self.values().zip(other.values()).map(|(a, b)| a * b).sum()
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .flat_map(|m| m.as_slice().iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .flat_map(|m| m.as_mut_slice().iter_mut())
            .chain(self.biases.iter_mut().flat_map(|b| b.iter_mut()))
    }
}

impl MlpNetwork {
    /// Parameters flattened in the same order as [`GradientSet::values`].
    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|p| p.weights.as_slice().iter())
            .chain(self.layers.iter().flat_map(|p| p.bias.iter()))
    }

    pub(crate) fn parameters_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        let (weights, biases): (Vec<_>, Vec<_>) = self
            .layers
            .iter_mut()
            .map(|p| (p.weights.as_mut_slice(), &mut p.bias[..]))
            .unzip();
        weights
            .into_iter()
            .flat_map(|w| w.iter_mut())
            .chain(biases.into_iter().flat_map(|b| b.iter_mut()))
    }

    /// `params += step * direction`, entry by entry.
    pub fn axpy(&mut self, step: f64, direction: &GradientSet) {
        assert!(direction.shape_matches(self), "direction shape mismatch");
        self.parameters_mut()
            .zip(direction.values())
            .for_each(|(p, d)| *p += step * d);
    }
}
