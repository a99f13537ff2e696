//! Targeted-collapse loss and anomaly score.
//!
//! For a sample `x` with latent code `z = En(x)` and reconstruction
//! `x̂ = De(z)` the training loss is
//!
//! ```text
//! additive:  ‖x̂ − x‖₂ + β·‖z − c‖
//! convex:    (1 − β)·‖x̂ − x‖₂ + β·‖z − c‖
//! ```
//!
//! averaged over the batch, where `c` is a fixed collapse target (the origin
//! by default) and the latent norm is L1, L2 or L∞. The anomaly score of a
//! query is the same expression evaluated on that single sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::Mlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L1,
    L2,
    LInf,
}

/// How the reconstruction and latent terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    /// `rec + β·norm`
    Additive,
    /// `(1 − β)·rec + β·norm`, requires `β ∈ [0, 1]`
    Convex,
}

pub const DEFAULT_EPSILON_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TollConfig {
    pub beta: f64,
    pub norm: NormKind,
    /// Collapse target; `None` is the origin.
    pub target: Option<Vec<f64>>,
    pub weighting: Weighting,
    /// Floor on ‖v‖₂ when differentiating the unsquared norm.
    pub epsilon_norm: f64,
}

impl Default for TollConfig {
    fn default() -> Self {
        Self {
            beta: 0.0,
            norm: NormKind::L2,
            target: None,
            weighting: Weighting::Additive,
            epsilon_norm: DEFAULT_EPSILON_NORM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub latent_norm: f64,
}

impl TollConfig {
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self, latent_dim: usize) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be finite and ≥ 0, got {}", self.beta)));
        }
        if self.weighting == Weighting::Convex && self.beta > 1.0 {
            return Err(Error::Config(format!(
                "convex weighting needs beta in [0, 1], got {}",
                self.beta
            )));
        }
        if let Some(t) = &self.target {
            if t.len() != latent_dim {
                return Err(Error::dim(format!(
                    "collapse target has length {}, latent dimension is {latent_dim}",
                    t.len()
                )));
            }
        }
        Ok(())
    }

    /// Weights applied to (reconstruction, latent norm).
    pub fn term_weights(&self) -> (f64, f64) {
        match self.weighting {
            Weighting::Additive => (1.0, self.beta),
            Weighting::Convex => (1.0 - self.beta, self.beta),
        }
    }

    pub fn combine(&self, reconstruction: f64, latent_norm: f64) -> LossBreakdown {
        let (wr, wn) = self.term_weights();
        LossBreakdown {
            total: wr * reconstruction + wn * latent_norm,
            reconstruction,
            latent_norm,
        }
    }

    fn target_at(&self, j: usize) -> f64 {
        self.target.as_ref().map_or(0.0, |t| t[j])
    }
}

/// `‖z − target‖` under `norm`.
pub fn latent_norm(z: &[f64], norm: NormKind, target: &[f64]) -> Result<f64> {
    if z.len() != target.len() {
        return Err(Error::dim(format!(
            "latent of length {} vs target of length {}",
            z.len(),
            target.len()
        )));
    }
    let diffs = z.iter().zip(target).map(|(a, b)| (a - b).abs());
    Ok(match norm {
        NormKind::L1 => diffs.sum(),
        NormKind::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        NormKind::LInf => diffs.fold(0.0, f64::max),
    })
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_shapes(x: &Matrix, xhat: &Matrix, z: &Matrix, cfg: &TollConfig) -> Result<()> {
    if x.shape() != xhat.shape() {
        return Err(Error::dim(format!(
            "input {}x{} vs reconstruction {}x{}",
            x.rows(),
            x.cols(),
            xhat.rows(),
            xhat.cols()
        )));
    }
    if z.rows() != x.rows() {
        return Err(Error::dim(format!(
            "{} latent rows for {} samples",
            z.rows(),
            x.rows()
        )));
    }
    if x.rows() == 0 {
        return Err(Error::dim("empty batch".to_string()));
    }
    cfg.validate(z.cols())
}

fn latent_offset(z: &Matrix, r: usize, cfg: &TollConfig) -> Vec<f64> {
    z.row(r)
        .iter()
        .enumerate()
        .map(|(j, v)| v - cfg.target_at(j))
        .collect()
}

fn norm_of(v: &[f64], norm: NormKind) -> f64 {
    match norm {
        NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
        NormKind::L2 => l2(v),
        NormKind::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// Per-sample (reconstruction error, latent norm) pairs.
pub fn per_sample_terms(
    x: &Matrix,
    xhat: &Matrix,
    z: &Matrix,
    cfg: &TollConfig,
) -> Result<Vec<(f64, f64)>> {
    check_shapes(x, xhat, z, cfg)?;
    Ok((0..x.rows())
        .map(|r| {
            let rec: Vec<f64> = xhat.row(r).iter().zip(x.row(r)).map(|(a, b)| a - b).collect();
            (l2(&rec), norm_of(&latent_offset(z, r, cfg), cfg.norm))
        })
        .collect())
}

/// Batch-mean loss.
pub fn toll_loss(x: &Matrix, xhat: &Matrix, z: &Matrix, cfg: &TollConfig) -> Result<LossBreakdown> {
    let terms = per_sample_terms(x, xhat, z, cfg)?;
    let n = terms.len() as f64;
    let rec = terms.iter().map(|t| t.0).sum::<f64>() / n;
    let norm = terms.iter().map(|t| t.1).sum::<f64>() / n;
    Ok(cfg.combine(rec, norm))
}

/// Gradients of [`toll_loss`] with respect to the reconstruction and the
/// latent batch.
pub fn toll_loss_grads(
    x: &Matrix,
    xhat: &Matrix,
    z: &Matrix,
    cfg: &TollConfig,
) -> Result<(Matrix, Matrix)> {
    check_shapes(x, xhat, z, cfg)?;
    let n = x.rows() as f64;
    let (wr, wn) = cfg.term_weights();
    let eps = cfg.epsilon_norm;

    let mut d_xhat = xhat.sub(x)?;
    for r in 0..d_xhat.rows() {
        let row = d_xhat.row_mut(r);
        let k = wr / (n * l2(row).max(eps));
        row.iter_mut().for_each(|v| *v *= k);
    }

    let mut d_z = Matrix::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        let v = latent_offset(z, r, cfg);
        let k = wn / n;
        let out = d_z.row_mut(r);
        match cfg.norm {
            NormKind::L2 => {
                let s = k / l2(&v).max(eps);
                for (o, vi) in out.iter_mut().zip(&v) {
                    *o = s * vi;
                }
            }
            NormKind::L1 => {
                for (o, vi) in out.iter_mut().zip(&v) {
                    *o = if *vi == 0.0 { 0.0 } else { k * vi.signum() };
                }
            }
            NormKind::LInf => {
                let m = v.iter().fold(0.0, |m: f64, x| m.max(x.abs()));
                if m > 0.0 {
                    let ties = v.iter().filter(|x| x.abs() == m).count() as f64;
                    for (o, vi) in out.iter_mut().zip(&v) {
                        if vi.abs() == m {
                            *o = k * vi.signum() / ties;
                        }
                    }
                }
            }
        }
    }
    Ok((d_xhat, d_z))
}

/// Anomaly score of one sample; higher means more anomalous.
pub fn anomaly_score(x: &[f64], encoder: &Mlp, decoder: &Mlp, cfg: &TollConfig) -> Result<f64> {
    Ok(anomaly_scores(&Matrix::row_vector(x), encoder, decoder, cfg)?[0])
}

/// Scores every row of `batch` in inference mode. Results do not depend on
/// how samples are grouped into batches.
pub fn anomaly_scores(
    batch: &Matrix,
    encoder: &Mlp,
    decoder: &Mlp,
    cfg: &TollConfig,
) -> Result<Vec<f64>> {
    let (x, xhat, z) = reconstruct(batch, encoder, decoder)?;
    let terms = per_sample_terms(&x, &xhat, &z, cfg)?;
    Ok(terms.into_iter().map(|(r, n)| cfg.combine(r, n).total).collect())
}

/// Inference-mode pass returning `(x, x̂, z)`.
pub fn reconstruct(batch: &Matrix, encoder: &Mlp, decoder: &Mlp) -> Result<(Matrix, Matrix, Matrix)> {
    if decoder.input_dim() != encoder.output_dim() || decoder.output_dim() != encoder.input_dim() {
        return Err(Error::dim(format!(
            "encoder {}→{} does not chain with decoder {}→{}",
            encoder.input_dim(),
            encoder.output_dim(),
            decoder.input_dim(),
            decoder.output_dim()
        )));
    }
    let z = encoder.infer(batch)?;
    let xhat = decoder.infer(&z)?;
    Ok((batch.clone(), xhat, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DenseLayer, Layer};

    #[test]
    fn latent_norm_definitions() {
        let zero = [0.0, 0.0];
        assert_eq!(latent_norm(&[3.0, 4.0], NormKind::L2, &zero).unwrap(), 5.0);
        assert_eq!(latent_norm(&[3.0, -4.0], NormKind::L1, &zero).unwrap(), 7.0);
        assert_eq!(latent_norm(&[3.0, -4.0], NormKind::LInf, &zero).unwrap(), 4.0);
        for k in [NormKind::L1, NormKind::L2, NormKind::LInf] {
            assert_eq!(latent_norm(&[1.5, -2.0], k, &[1.5, -2.0]).unwrap(), 0.0);
        }
        assert!(latent_norm(&[1.0], NormKind::L2, &zero).is_err());
    }

    #[test]
    fn loss_hand_arithmetic() {
        let x = Matrix::row_vector(&[0.0, 0.0]);
        let xhat = Matrix::row_vector(&[3.0, 4.0]);
        let z = Matrix::row_vector(&[0.0, 2.0]);
        let cfg = TollConfig::with_beta(1000.0);
        let l = toll_loss(&x, &xhat, &z, &cfg).unwrap();
        assert_eq!(l.total, 2005.0);
        assert_eq!(l.reconstruction, 5.0);
        assert_eq!(l.latent_norm, 2.0);

        let plain = toll_loss(&x, &xhat, &z, &TollConfig::with_beta(0.0)).unwrap();
        assert_eq!(plain.total, plain.reconstruction);

        let convex = TollConfig {
            beta: 0.25,
            weighting: Weighting::Convex,
            ..TollConfig::default()
        };
        let c = toll_loss(&x, &xhat, &z, &convex).unwrap();
        assert!((c.total - (0.75 * 5.0 + 0.25 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn loss_vanishes_at_perfect_collapse() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        let z = Matrix::from_rows(&[[0.5], [0.5]]).unwrap();
        let cfg = TollConfig {
            beta: 7.0,
            target: Some(vec![0.5]),
            ..TollConfig::default()
        };
        assert_eq!(toll_loss(&x, &x, &z, &cfg).unwrap().total, 0.0);
        let (dx, dz) = toll_loss_grads(&x, &x, &z, &cfg).unwrap();
        assert_eq!(dx.max_abs(), 0.0);
        assert_eq!(dz.max_abs(), 0.0);
    }

    #[test]
    fn reconstruction_gradient_is_unit_vector() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        let xhat = Matrix::from_rows(&[[3.0, 4.0], [1.0, 1.0]]).unwrap();
        let z = Matrix::zeros(2, 1);
        let (dx, _) = toll_loss_grads(&x, &xhat, &z, &TollConfig::default()).unwrap();
        assert!((dx[(0, 0)] - 0.3).abs() < 1e-15);
        assert!((dx[(0, 1)] - 0.4).abs() < 1e-15);
        assert_eq!(dx.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn linf_splits_gradient_over_ties() {
        let x = Matrix::zeros(1, 1);
        let z = Matrix::row_vector(&[2.0, -2.0, 1.0]);
        let cfg = TollConfig {
            beta: 1.0,
            norm: NormKind::LInf,
            ..TollConfig::default()
        };
        let (_, dz) = toll_loss_grads(&x, &x, &z, &cfg).unwrap();
        assert_eq!(dz.row(0), &[0.5, -0.5, 0.0]);
    }

    #[test]
    fn convex_weighting_rejects_large_beta() {
        let cfg = TollConfig {
            beta: 1.5,
            weighting: Weighting::Convex,
            ..TollConfig::default()
        };
        assert!(cfg.validate(2).is_err());
        let x = Matrix::zeros(1, 2);
        assert!(toll_loss(&x, &x, &Matrix::zeros(1, 2), &cfg).is_err());
    }

    #[test]
    fn score_with_known_weights() {
        // Encoder z = [1, 1]·x, decoder x̂ = [0.5, 0.25]ᵀ·z.
        let enc = Mlp::from_layers(vec![Layer::Dense(
            DenseLayer::new(Matrix::row_vector(&[1.0, 1.0]), None).unwrap(),
        )])
        .unwrap();
        let dec = Mlp::from_layers(vec![Layer::Dense(
            DenseLayer::new(Matrix::column_vector(&[0.5, 0.25]), None).unwrap(),
        )])
        .unwrap();
        let x = [2.0, 2.0];
        // z = 4, x̂ = (2, 1), ‖x̂ − x‖ = 1, score = 1 + 0.5·4
        let s = anomaly_score(&x, &enc, &dec, &TollConfig::with_beta(0.5)).unwrap();
        assert!((s - 3.0).abs() < 1e-12);
        let s0 = anomaly_score(&x, &enc, &dec, &TollConfig::with_beta(0.0)).unwrap();
        assert!((s0 - 1.0).abs() < 1e-12);
    }
}
