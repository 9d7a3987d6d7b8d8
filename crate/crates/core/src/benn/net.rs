use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN_LAYERS: usize = 8;
pub const DEFAULT_HIDDEN_UNITS: usize = 40;
pub const GENERATOR_FORMAT_VERSION: u32 = 1;

/// One dense layer, `out = in · weights + bias`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in × fan_out`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Bias-vector generator: ReLU hidden layers, tanh output of width `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorNet {
    pub version: u32,
    pub n_features: usize,
    pub seed: u64,
    pub layers: Vec<Layer>,
}

/// Per-layer activations from a forward pass; `acts[0]` is the input and
/// `acts.last()` the bias vectors.
pub(crate) struct Trace {
    pub acts: Vec<Array2<f64>>,
}

/// Parameter gradients, aligned with `GeneratorNet::layers`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(0.0, |a, v| a.max(v.abs()))
    }
}

impl GeneratorNet {
    /// The default 8 × 40 architecture.
    pub fn new(n_features: usize, seed: u64) -> Self {
        Self::with_architecture(n_features, DEFAULT_HIDDEN_LAYERS, DEFAULT_HIDDEN_UNITS, seed)
    }

    /// Glorot-uniform weights and biases, `r = sqrt(6 / (fan_in + fan_out))`.
    pub fn with_architecture(n_features: usize, hidden_layers: usize, units: usize, seed: u64) -> Self {
        assert!(n_features > 0 && units > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![n_features];
        dims.extend(std::iter::repeat_n(units, hidden_layers));
        dims.push(n_features);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-r, r);
                let weights = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(&mut rng));
                let bias = Array1::from_shape_fn(fan_out, |_| dist.sample(&mut rng));
                Layer { weights, bias }
            })
            .collect();
        Self {
            version: GENERATOR_FORMAT_VERSION,
            n_features,
            seed,
            layers,
        }
    }

    /// A net with every parameter zero; it outputs `B ≡ 0`.
    pub fn zeros(n_features: usize, hidden_layers: usize, units: usize) -> Self {
        let mut net = Self::with_architecture(n_features, hidden_layers, units, 0);
        for l in &mut net.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        net
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, batch: ArrayView2<'_, f64>) -> Result<()> {
        if batch.ncols() != self.n_features {
            return Err(Error::arg(format!(
                "generator expects {} columns, batch has {}",
                self.n_features,
                batch.ncols()
            )));
        }
        if batch.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("batch contains non-finite values"));
        }
        Ok(())
    }

    /// Bias vectors `B(x)` for each row of `batch`.
    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.trace(batch)?.acts.pop().expect("at least one layer"))
    }

    pub(crate) fn trace(&self, batch: ArrayView2<'_, f64>) -> Result<Trace> {
        self.check_input(batch)?;
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(batch.to_owned());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.weights);
            z += &layer.bias;
            if i == last {
                z.mapv_inplace(f64::tanh);
            } else {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        Ok(Trace { acts })
    }

    /// Backpropagates `dL/dB` (one row per sample) to parameter gradients.
    pub(crate) fn backward(&self, trace: &Trace, grad_out: &Array2<f64>) -> Gradients {
        let out = trace.acts.last().expect("trace has output");
        // tanh' = 1 - tanh²
        let mut delta = grad_out * &out.mapv(|b| 1.0 - b * b);
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &trace.acts[i];
            let weights = input.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                back.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    /// Plain gradient descent step.
    pub fn apply(&mut self, grads: &Gradients, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.scaled_add(-lr, &g.weights);
            layer.bias.scaled_add(-lr, &g.bias);
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: GeneratorNet = serde_json::from_str(s)?;
        if net.version != GENERATOR_FORMAT_VERSION {
            return Err(Error::arg(format!(
                "unsupported generator format version {}",
                net.version
            )));
        }
        let mut prev = net.n_features;
        for (i, l) in net.layers.iter().enumerate() {
            if l.weights.nrows() != prev || l.bias.len() != l.weights.ncols() {
                return Err(Error::arg(format!("generator layer {i} has inconsistent dimensions")));
            }
            prev = l.weights.ncols();
        }
        if net.layers.is_empty() || prev != net.n_features {
            return Err(Error::arg("generator output width differs from input width"));
        }
        Ok(net)
    }
}
