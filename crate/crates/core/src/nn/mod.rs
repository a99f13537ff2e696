//! Minimal dense network engine: layers, backpropagation, Adam, and
//! finite-difference gradient checks. Samples are rows throughout.

mod adam;
mod gradcheck;
mod layer;
mod mlp;

pub use adam::AdamState;
pub use gradcheck::{
    grad_check, random_case, random_suite, weighted_quadratic_loss, GradCheckCase, GradCheckReport,
    GradLocation,
};
pub use layer::{
    BatchNormLayer, DenseLayer, Layer, LeakyReluLayer, Mode, BATCH_NORM_EPSILON,
    BATCH_NORM_MOMENTUM,
};
pub use mlp::{dense_stack, init_mlp, LayerSpec, Mlp};
