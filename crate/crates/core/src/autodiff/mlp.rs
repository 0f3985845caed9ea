use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{gelu, Gradients, Tape, Var};
use super::tensor::Tensor;
use super::AdError;

/// Output-layer weights are shrunk by this factor at init so fresh policies
/// start near the centre of their action range.
const OUTPUT_INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
    TanhSquash,
}

/// Fully connected network. Weights are stored `in x out` so a batch of row
/// inputs maps as `x W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    sizes: Vec<usize>,
    weights: Vec<Tensor>,
    biases: Vec<Tensor>,
    hidden: Activation,
    output: OutputActivation,
}

/// Tape handles for every parameter of one registered network.
#[derive(Debug, Clone)]
pub struct MlpVars {
    weights: Vec<Var>,
    biases: Vec<Var>,
}

impl MlpVars {
    /// Adjoints in the same order as [`MlpParams::tensors`].
    pub fn grads(&self, g: &Gradients) -> Vec<Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [g.get_or_zeros(*w), g.get_or_zeros(*b)])
            .collect()
    }
}

impl MlpParams {
    /// Xavier-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self, AdError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(AdError::ShapeMismatch(format!("layer sizes {sizes:?}")));
        }
        let n_layers = sizes.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let mut bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if l + 1 == n_layers {
                bound *= OUTPUT_INIT_SCALE;
            }
            let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            weights.push(Tensor::from_vec(fan_in, fan_out, data)?);
            biases.push(Tensor::zeros(1, fan_out));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            hidden,
            output,
        })
    }

    /// Builds a network from explicit layers, validating the shape chain.
    pub fn from_layers(
        layers: Vec<(Tensor, Tensor)>,
        hidden: Activation,
        output: OutputActivation,
    ) -> Result<Self, AdError> {
        let Some(first) = layers.first() else {
            return Err(AdError::ShapeMismatch("no layers".into()));
        };
        let mut sizes = vec![first.0.rows()];
        let (weights, biases): (Vec<_>, Vec<_>) = layers.into_iter().unzip();
        sizes.extend(weights.iter().map(|w| w.cols()));
        let p = Self {
            sizes,
            weights,
            biases,
            hidden,
            output,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks that consecutive layers chain and all entries are finite.
    pub fn validate(&self) -> Result<(), AdError> {
        let n = self.sizes.len();
        if n < 2 || self.weights.len() != n - 1 || self.biases.len() != n - 1 {
            return Err(AdError::ShapeMismatch(format!(
                "{} sizes for {} weight and {} bias tensors",
                n,
                self.weights.len(),
                self.biases.len()
            )));
        }
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if w.shape() != (self.sizes[l], self.sizes[l + 1]) || b.shape() != (1, self.sizes[l + 1]) {
                return Err(AdError::ShapeMismatch(format!(
                    "layer {l}: weight {:?}, bias {:?}, expected {}x{}",
                    w.shape(),
                    b.shape(),
                    self.sizes[l],
                    self.sizes[l + 1]
                )));
            }
            if !w.is_finite() || !b.is_finite() {
                return Err(AdError::NonFiniteParameter { layer: l });
            }
        }
        Ok(())
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated non-empty")
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    /// Parameters as `[w0, b0, w1, b1, ...]`.
    pub fn tensors(&self) -> Vec<&Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn check_input(&self, x: &Tensor) -> Result<(), AdError> {
        if x.cols() != self.input_dim() {
            return Err(AdError::ShapeMismatch(format!(
                "input width {} for a network expecting {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Plain forward pass on a batch of row inputs.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, AdError> {
        self.check_input(x)?;
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.matmul(w)?;
            let act: fn(f64) -> f64 = if l < last {
                match self.hidden {
                    Activation::Gelu => gelu,
                    Activation::Tanh => f64::tanh,
                }
            } else if self.output == OutputActivation::TanhSquash {
                f64::tanh
            } else {
                |x| x
            };
            let cols = z.cols();
            for row in z.data_mut().chunks_exact_mut(cols) {
                for (v, bias) in row.iter_mut().zip(b.data()) {
                    *v = act(*v + bias);
                }
            }
            h = z;
        }
        Ok(h)
    }

    /// Puts the parameters on `tape`, as leaves when `trainable`, otherwise as
    /// constants that never receive adjoints.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> MlpVars {
        let mut put = |t: &Tensor| {
            if trainable {
                tape.leaf(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let weights = self.weights.iter().map(&mut put).collect();
        let biases = self.biases.iter().map(&mut put).collect();
        MlpVars { weights, biases }
    }

    /// Recorded forward pass using previously registered parameters.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &MlpVars, x: Var) -> Result<Var, AdError> {
        self.check_input(tape.value(x))?;
        let last = vars.weights.len() - 1;
        let mut h = x;
        for l in 0..=last {
            let z = tape.matmul(h, vars.weights[l])?;
            let z = tape.add(z, vars.biases[l])?;
            h = if l < last {
                match self.hidden {
                    Activation::Gelu => tape.gelu(z),
                    Activation::Tanh => tape.tanh(z),
                }
            } else if self.output == OutputActivation::TanhSquash {
                tape.tanh(z)
            } else {
                z
            };
        }
        Ok(h)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("parameters serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, AdError> {
        let p: Self = serde_json::from_str(s).map_err(|e| AdError::Checkpoint(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, AdError> {
        let s = std::fs::read_to_string(path).map_err(|e| AdError::Checkpoint(e.to_string()))?;
        Self::from_json(&s)
    }
}
