//! Dense, batch-normalization and leaky-ReLU layers.
//!
//! All layers take samples as rows: a batch is `batch × features`.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Forward-pass mode. Training caches activations and uses batch statistics;
/// inference touches no state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

pub const BATCH_NORM_EPSILON: f64 = 1e-5;
pub const BATCH_NORM_MOMENTUM: f64 = 0.1;

/// Fully connected layer `y = x·Wᵀ + b` with `W` stored `out × in`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
    pub weight_grad: Matrix,
    pub bias_grad: Option<Vec<f64>>,
    input_cache: Option<Matrix>,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Option<Vec<f64>>) -> Result<Self> {
        if let Some(b) = &bias {
            if b.len() != weight.rows() {
                return Err(Error::dim(format!(
                    "bias of length {} for {} outputs",
                    b.len(),
                    weight.rows()
                )));
            }
        }
        let weight_grad = Matrix::zeros(weight.rows(), weight.cols());
        let bias_grad = bias.as_ref().map(|b| vec![0.0; b.len()]);
        Ok(Self {
            weight,
            bias,
            weight_grad,
            bias_grad,
            input_cache: None,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::dim(format!(
                "dense layer expects {} inputs, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let mut y = x.matmul_t(&self.weight)?;
        if let Some(b) = &self.bias {
            for r in 0..y.rows() {
                for (v, bias) in y.row_mut(r).iter_mut().zip(b) {
                    *v += bias;
                }
            }
        }
        Ok(y)
    }

    fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        let y = self.apply(x)?;
        if mode == Mode::Training {
            self.input_cache = Some(x.clone());
        }
        Ok(y)
    }

    fn backward(&mut self, grad: &Matrix) -> Result<Matrix> {
        let x = self
            .input_cache
            .as_ref()
            .ok_or_else(|| Error::State("dense backward without a training forward".into()))?;
        if grad.rows() != x.rows() || grad.cols() != self.output_dim() {
            return Err(Error::dim(format!(
                "dense backward got {}x{} gradient for {}x{} output",
                grad.rows(),
                grad.cols(),
                x.rows(),
                self.output_dim()
            )));
        }
        self.weight_grad = grad.t_matmul(x)?;
        if let Some(bg) = &mut self.bias_grad {
            bg.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..grad.rows() {
                for (acc, g) in bg.iter_mut().zip(grad.row(r)) {
                    *acc += g;
                }
            }
        }
        grad.matmul(&self.weight)
    }
}

/// Per-feature batch normalization with learned scale and shift.
#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    pub momentum: f64,
    pub scale_grad: Vec<f64>,
    pub shift_grad: Vec<f64>,
    cache: Option<BatchNormCache>,
}

#[derive(Debug, Clone)]
struct BatchNormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

impl BatchNormLayer {
    pub fn new(width: usize) -> Self {
        Self {
            scale: vec![1.0; width],
            shift: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            epsilon: BATCH_NORM_EPSILON,
            momentum: BATCH_NORM_MOMENTUM,
            scale_grad: vec![0.0; width],
            shift_grad: vec![0.0; width],
            cache: None,
        }
    }

    pub fn width(&self) -> usize {
        self.scale.len()
    }

    /// Mean and (biased) variance of the last training batch.
    pub fn batch_statistics(&self) -> Option<(&[f64], &[f64])> {
        self.cache
            .as_ref()
            .map(|c| (c.batch_mean.as_slice(), c.batch_var.as_slice()))
    }

    fn check_width(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.width() {
            return Err(Error::dim(format!(
                "batch norm expects {} features, got {}",
                self.width(),
                x.cols()
            )));
        }
        Ok(())
    }

    fn infer(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x)?;
        let mut y = x.clone();
        for r in 0..y.rows() {
            for (j, v) in y.row_mut(r).iter_mut().enumerate() {
                let inv = 1.0 / (self.running_var[j] + self.epsilon).sqrt();
                *v = self.scale[j] * (*v - self.running_mean[j]) * inv + self.shift[j];
            }
        }
        Ok(y)
    }

    fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        if mode == Mode::Inference {
            return self.infer(x);
        }
        self.check_width(x)?;
        let n = x.rows();
        if n < 2 {
            return Err(Error::Precondition(
                "training-mode batch norm needs at least 2 samples".into(),
            ));
        }
        let mean = x.column_means();
        let mut var = vec![0.0; self.width()];
        for r in 0..n {
            for ((acc, v), m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();

        let mut normalized = x.clone();
        let mut y = x.clone();
        for r in 0..n {
            for j in 0..self.width() {
                let h = (x[(r, j)] - mean[j]) * inv_std[j];
                normalized[(r, j)] = h;
                y[(r, j)] = self.scale[j] * h + self.shift[j];
            }
        }

        // Running variance tracks the unbiased estimate.
        let unbias = n as f64 / (n as f64 - 1.0);
        for j in 0..self.width() {
            self.running_mean[j] =
                (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
            self.running_var[j] =
                (1.0 - self.momentum) * self.running_var[j] + self.momentum * var[j] * unbias;
        }
        self.cache = Some(BatchNormCache {
            normalized,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        });
        Ok(y)
    }

    fn backward(&mut self, grad: &Matrix) -> Result<Matrix> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("batch norm backward without a training forward".into()))?;
        let h = &cache.normalized;
        if grad.shape() != h.shape() {
            return Err(Error::dim("batch norm backward gradient shape".to_string()));
        }
        let n = grad.rows() as f64;
        let w = self.width();
        let mut sum_g = vec![0.0; w];
        let mut sum_gh = vec![0.0; w];
        for r in 0..grad.rows() {
            for j in 0..w {
                sum_g[j] += grad[(r, j)];
                sum_gh[j] += grad[(r, j)] * h[(r, j)];
            }
        }
        self.shift_grad.copy_from_slice(&sum_g);
        self.scale_grad.copy_from_slice(&sum_gh);

        let mut dx = Matrix::zeros(grad.rows(), w);
        for r in 0..grad.rows() {
            for j in 0..w {
                let k = self.scale[j] * cache.inv_std[j] / n;
                dx[(r, j)] = k * (n * grad[(r, j)] - sum_g[j] - h[(r, j)] * sum_gh[j]);
            }
        }
        Ok(dx)
    }
}

/// `y = x` for `x > 0`, `a·x` otherwise. `a = 0` is a plain ReLU.
#[derive(Debug, Clone)]
pub struct LeakyReluLayer {
    pub negative_slope: f64,
    input_cache: Option<Matrix>,
}

impl LeakyReluLayer {
    pub fn new(negative_slope: f64) -> Self {
        Self {
            negative_slope,
            input_cache: None,
        }
    }

    fn infer(&self, x: &Matrix) -> Matrix {
        let a = self.negative_slope;
        x.map(|v| if v > 0.0 { v } else { a * v })
    }

    fn forward(&mut self, x: &Matrix, mode: Mode) -> Matrix {
        if mode == Mode::Training {
            self.input_cache = Some(x.clone());
        }
        self.infer(x)
    }

    fn backward(&mut self, grad: &Matrix) -> Result<Matrix> {
        let x = self
            .input_cache
            .as_ref()
            .ok_or_else(|| Error::State("leaky-ReLU backward without a training forward".into()))?;
        let a = self.negative_slope;
        // Subgradient at exactly 0 is the negative slope.
        x.zip_with(grad, "leaky-ReLU backward", |v, g| if v > 0.0 { g } else { a * g })
    }

    /// Smallest |pre-activation| seen in the last training forward.
    pub fn min_abs_input(&self) -> Option<f64> {
        self.input_cache
            .as_ref()
            .map(|x| x.as_slice().iter().fold(f64::INFINITY, |m, v| m.min(v.abs())))
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    BatchNorm(BatchNormLayer),
    LeakyRelu(LeakyReluLayer),
}

impl Layer {
    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<Matrix> {
        match self {
            Layer::Dense(l) => l.forward(x, mode),
            Layer::BatchNorm(l) => l.forward(x, mode),
            Layer::LeakyRelu(l) => Ok(l.forward(x, mode)),
        }
    }

    /// Inference-mode forward that leaves the layer untouched.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Dense(l) => l.apply(x),
            Layer::BatchNorm(l) => l.infer(x),
            Layer::LeakyRelu(l) => Ok(l.infer(x)),
        }
    }

    pub fn backward(&mut self, grad: &Matrix) -> Result<Matrix> {
        match self {
            Layer::Dense(l) => l.backward(grad),
            Layer::BatchNorm(l) => l.backward(grad),
            Layer::LeakyRelu(l) => l.backward(grad),
        }
    }

    /// Parameter tensors paired with their gradient buffers, in a fixed order.
    pub fn params_and_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        match self {
            Layer::Dense(l) => {
                let mut out: Vec<(&mut [f64], &[f64])> =
                    vec![(l.weight.as_mut_slice(), l.weight_grad.as_slice())];
                if let (Some(b), Some(bg)) = (&mut l.bias, &l.bias_grad) {
                    out.push((b.as_mut_slice(), bg.as_slice()));
                }
                out
            }
            Layer::BatchNorm(l) => vec![
                (l.scale.as_mut_slice(), l.scale_grad.as_slice()),
                (l.shift.as_mut_slice(), l.shift_grad.as_slice()),
            ],
            Layer::LeakyRelu(_) => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&[f64]> {
        match self {
            Layer::Dense(l) => {
                let mut out = vec![l.weight.as_slice()];
                if let Some(b) = &l.bias {
                    out.push(b.as_slice());
                }
                out
            }
            Layer::BatchNorm(l) => vec![l.scale.as_slice(), l.shift.as_slice()],
            Layer::LeakyRelu(_) => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.params_and_grads().into_iter().map(|(p, _)| p).collect()
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::BatchNorm(_) => "batch-norm",
            Layer::LeakyRelu(_) => "leaky-relu",
        }
    }
}
