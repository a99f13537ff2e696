use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layer::{BatchNormLayer, DenseLayer, Layer, LeakyReluLayer, Mode};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::seeded_rng;

/// Descriptor for one layer of an [`Mlp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
        bias: bool,
    },
    BatchNorm {
        width: usize,
    },
    LeakyRelu {
        slope: f64,
    },
}

impl LayerSpec {
    pub fn dense(input: usize, output: usize) -> Self {
        LayerSpec::Dense {
            input,
            output,
            bias: true,
        }
    }

    pub fn dense_no_bias(input: usize, output: usize) -> Self {
        LayerSpec::Dense {
            input,
            output,
            bias: false,
        }
    }

    pub fn relu() -> Self {
        LayerSpec::LeakyRelu { slope: 0.0 }
    }
}

/// Builds `Linear-BatchNorm-act` blocks through `widths`, ending with a bare
/// linear layer. `[274, 256, 128, 16]` with slope 0 gives the tabular encoder
/// `Linear(256)-BatchNorm-ReLU-Linear(128)-BatchNorm-ReLU-Linear(16)`.
pub fn dense_stack(widths: &[usize], batch_norm: bool, slope: f64) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    for (i, pair) in widths.windows(2).enumerate() {
        specs.push(LayerSpec::dense(pair[0], pair[1]));
        if i + 2 < widths.len() {
            if batch_norm {
                specs.push(LayerSpec::BatchNorm { width: pair[1] });
            }
            specs.push(LayerSpec::LeakyRelu { slope });
        }
    }
    specs
}

/// An ordered stack of layers; used for both encoder and decoder.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    input_dim: usize,
    output_dim: usize,
}

impl Mlp {
    /// Initializes a network from layer descriptors.
    ///
    /// Dense weights are drawn from `U(-1/√fan_in, 1/√fan_in)`, biases start at
    /// zero, batch norm starts at scale 1 / shift 0 with running statistics
    /// (0, 1). Identical seeds give bit-identical parameters.
    pub fn init(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut width: Option<usize> = None;
        let mut input_dim = None;
        for (idx, spec) in specs.iter().enumerate() {
            let (expects, produces) = match spec {
                LayerSpec::Dense { input, output, .. } => (Some(*input), Some(*output)),
                LayerSpec::BatchNorm { width } => (Some(*width), Some(*width)),
                LayerSpec::LeakyRelu { .. } => (None, None),
            };
            if let (Some(have), Some(want)) = (width, expects) {
                if have != want {
                    return Err(Error::Config(format!(
                        "layer {idx} expects width {want} but layer {} produces {have}",
                        idx - 1
                    )));
                }
            }
            if input_dim.is_none() {
                input_dim = expects;
            }
            if produces.is_some() {
                width = produces;
            }
            if matches!(spec, LayerSpec::Dense { input: 0, .. } | LayerSpec::Dense { output: 0, .. })
                || matches!(spec, LayerSpec::BatchNorm { width: 0 })
            {
                return Err(Error::Config(format!("layer {idx} has zero width")));
            }
            layers.push(match spec {
                LayerSpec::Dense {
                    input,
                    output,
                    bias,
                } => {
                    let bound = 1.0 / (*input as f64).sqrt();
                    let values = (0..input * output)
                        .map(|_| rng.random_range(-bound..=bound))
                        .collect();
                    let weight = Matrix::from_vec(*output, *input, values)?;
                    let bias = bias.then(|| vec![0.0; *output]);
                    Layer::Dense(DenseLayer::new(weight, bias)?)
                }
                LayerSpec::BatchNorm { width } => Layer::BatchNorm(BatchNormLayer::new(*width)),
                LayerSpec::LeakyRelu { slope } => {
                    if !(*slope >= 0.0) {
                        return Err(Error::Config(format!(
                            "layer {idx} has negative slope {slope}"
                        )));
                    }
                    Layer::LeakyRelu(LeakyReluLayer::new(*slope))
                }
            });
        }
        let (Some(input_dim), Some(output_dim)) = (input_dim, width) else {
            return Err(Error::Config(
                "network needs at least one dense or batch-norm layer".into(),
            ));
        };
        Ok(Self {
            layers,
            input_dim,
            output_dim,
        })
    }

    /// Wraps already-built layers (used by tests that need exact weights).
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => LayerSpec::Dense {
                    input: d.input_dim(),
                    output: d.output_dim(),
                    bias: d.bias.is_some(),
                },
                Layer::BatchNorm(b) => LayerSpec::BatchNorm { width: b.width() },
                Layer::LeakyRelu(r) => LayerSpec::LeakyRelu {
                    slope: r.negative_slope,
                },
            })
            .collect();
        let shape = Self::init(&specs, 0)?;
        Ok(Self {
            layers,
            input_dim: shape.input_dim,
            output_dim: shape.output_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Output width; for an encoder this is the latent dimension.
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.output_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.input_dim {
            return Err(Error::dim(format!(
                "network expects {} input features, got {}",
                self.input_dim,
                batch.cols()
            )));
        }
        Ok(())
    }

    pub fn forward(&mut self, batch: &Matrix, mode: Mode) -> Result<Matrix> {
        if mode == Mode::Inference {
            return self.infer(batch);
        }
        self.check_input(batch)?;
        let mut x = batch.clone();
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            x = layer.forward(&x, mode)?;
            if !x.is_finite() {
                return Err(Error::Numeric(format!(
                    "layer {idx} ({}) produced a non-finite activation",
                    layer.kind()
                )));
            }
        }
        Ok(x)
    }

    /// Inference-mode forward through a shared reference.
    pub fn infer(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            x = layer.infer(&x)?;
            if !x.is_finite() {
                return Err(Error::Numeric(format!(
                    "layer {idx} ({}) produced a non-finite activation",
                    layer.kind()
                )));
            }
        }
        Ok(x)
    }

    /// Backpropagates `grad_output`, filling every parameter gradient, and
    /// returns the gradient with respect to the network input.
    pub fn backward(&mut self, grad_output: &Matrix) -> Result<Matrix> {
        let mut g = grad_output.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_and_grads())
            .collect()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Smallest |pre-activation| cached by any leaky-ReLU layer, i.e. the
    /// distance of the last training batch from the nearest kink.
    pub fn min_kink_distance(&self) -> Option<f64> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::LeakyRelu(r) => r.min_abs_input(),
                _ => None,
            })
            .reduce(f64::min)
    }
}

/// Convenience wrapper matching the library's free-function surface.
pub fn init_mlp(specs: &[LayerSpec], seed: u64) -> Result<Mlp> {
    Mlp::init(specs, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_init_respects_fan_in_bound() {
        let net = Mlp::init(&[LayerSpec::dense(2, 2)], 7).unwrap();
        let bound = 1.0 / 2f64.sqrt();
        let Layer::Dense(d) = &net.layers()[0] else { unreachable!() };
        assert!(d.weight.as_slice().iter().all(|w| w.abs() <= bound));
        assert_eq!(d.bias.as_deref(), Some(&[0.0, 0.0][..]));
    }

    #[test]
    fn init_is_deterministic() {
        let specs = dense_stack(&[5, 4, 3], true, 0.2);
        let a = Mlp::init(&specs, 42).unwrap();
        let b = Mlp::init(&specs, 42).unwrap();
        let c = Mlp::init(&specs, 43).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn tabular_encoder_shape() {
        let specs = dense_stack(&[274, 256, 128, 16], true, 0.0);
        let net = Mlp::init(&specs, 0).unwrap();
        assert_eq!(net.layers().len(), 7);
        assert_eq!(net.input_dim(), 274);
        assert_eq!(net.latent_dim(), 16);
        let kinds: Vec<_> = net.layers().iter().map(Layer::kind).collect();
        assert_eq!(
            kinds,
            [
                "dense",
                "batch-norm",
                "leaky-relu",
                "dense",
                "batch-norm",
                "leaky-relu",
                "dense"
            ]
        );
    }

    #[test]
    fn incompatible_widths_name_the_layer() {
        let specs = [
            LayerSpec::dense(3, 4),
            LayerSpec::relu(),
            LayerSpec::dense(5, 2),
        ];
        let err = Mlp::init(&specs, 0).unwrap_err();
        assert!(matches!(&err, Error::Config(m) if m.contains("layer 2")), "{err}");
    }

    #[test]
    fn inference_is_pure() {
        let specs = dense_stack(&[3, 6, 2], true, 0.2);
        let mut net = Mlp::init(&specs, 1).unwrap();
        let x = Matrix::from_rows(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [0.0, 2.0, -0.3]]).unwrap();
        net.forward(&x, Mode::Training).unwrap();
        let before = net.clone();
        let a = net.forward(&x, Mode::Inference).unwrap();
        let b = net.forward(&x, Mode::Inference).unwrap();
        assert_eq!(a, b);
        assert_eq!(before.params(), net.params());
        let Layer::BatchNorm(bn0) = &before.layers()[1] else { unreachable!() };
        let Layer::BatchNorm(bn1) = &net.layers()[1] else { unreachable!() };
        assert_eq!(bn0.running_mean, bn1.running_mean);
        assert_eq!(bn0.running_var, bn1.running_var);
    }

    #[test]
    fn shape_mismatch_on_forward() {
        let mut net = Mlp::init(&[LayerSpec::dense(3, 2)], 0).unwrap();
        let err = net.forward(&Matrix::zeros(2, 4), Mode::Training).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }
}
