//! Linear-network gradient-flow laboratory.
//!
//! Data here follows the columns-as-samples convention: `X` is m×n and
//! `S = (1/n)·X·Xᵀ`. Row-major batches from the rest of the crate are
//! transposed before entering [`empirical_covariance`].

mod eig;
mod figure;
mod flow;

pub use eig::{sym_eig, sym_eig_with, EigenDecomp, JACOBI_MAX_SWEEPS, JACOBI_TOLERANCE};
pub use figure::{
    contour_grid, contour_score, convex_gradients, gaussian_sample, mahalanobis_ring,
    reflected_gaussian_sample, train_linear_ae, write_contour_csv, ContourBounds, ContourPoint,
    FIGURE_LEARNING_RATE, FIGURE_SAMPLES, FIGURE_STDS, FIGURE_STEPS,
};
pub use flow::{
    closed_form_flow, closed_form_latent, empirical_covariance, integrate_ae_flow,
    integrate_ae_flow_sampled, integrate_norm_flow, CovMatrix, FlowTrajectory, LinearAeState,
    DEFAULT_DT,
};
