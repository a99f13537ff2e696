//! Targeted-collapse regularized autoencoders for one-class anomaly
//! detection, with a small dense network engine, dataset tooling, metrics,
//! and a linear gradient-flow laboratory.

pub mod data;
pub mod error;
pub mod eval;
pub mod lindyn;
pub mod matrix;
pub mod nn;
pub mod rng;
pub mod toll;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use nn::{AdamState, Layer, LayerSpec, Mlp, Mode};
pub use toll::{
    anomaly_score, anomaly_scores, latent_norm, toll_loss, toll_loss_grads, LossBreakdown,
    NormKind, TollConfig, Weighting,
};
