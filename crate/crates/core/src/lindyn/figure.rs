//! The 2-D contour experiment: a linear autoencoder trained by full-batch
//! gradient descent on the convex-weighted quadratic loss, and the score
//! surface it induces.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::seeded_rng;

use super::flow::{CovMatrix, LinearAeState};

pub const FIGURE_LEARNING_RATE: f64 = 1e-2;
pub const FIGURE_STEPS: usize = 50_000;
pub const FIGURE_SAMPLES: usize = 2000;
pub const FIGURE_STDS: [f64; 2] = [2.0, 1.0];

/// Gradients of `(1−β)·½tr[(W₂W₁−I)S(W₂W₁−I)ᵀ] + β·½tr[W₁SW₁ᵀ]`.
pub fn convex_gradients(w1: &Matrix, w2: &Matrix, beta: f64, s: &Matrix) -> Result<(Matrix, Matrix)> {
    let mut e = w2.matmul(w1)?;
    e.axpy(-1.0, &Matrix::identity(w1.cols()))?;
    let es = e.matmul(s)?;
    let mut g1 = w2.t_matmul(&es)?.scale(1.0 - beta);
    g1.axpy(beta, &w1.matmul(s)?)?;
    let g2 = es.matmul_t(w1)?.scale(1.0 - beta);
    Ok((g1, g2))
}

/// Full-batch gradient descent from a seeded `U(±1/√fan_in)` start.
pub fn train_linear_ae(
    s: &CovMatrix,
    bottleneck: usize,
    beta: f64,
    learning_rate: f64,
    steps: usize,
    seed: u64,
) -> Result<LinearAeState> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("convex weighting needs beta in [0, 1], got {beta}")));
    }
    let m = s.dim();
    let mut rng = seeded_rng(seed);
    let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
        let b = 1.0 / (fan_in as f64).sqrt();
        let v = (0..rows * cols).map(|_| rng.random_range(-b..=b)).collect();
        Matrix::from_vec(rows, cols, v)
    };
    let mut w1 = uniform(bottleneck, m, m)?;
    let mut w2 = uniform(m, bottleneck, bottleneck)?;
    for step in 0..steps {
        let (g1, g2) = convex_gradients(&w1, &w2, beta, s.matrix())?;
        w1.axpy(-learning_rate, &g1)?;
        w2.axpy(-learning_rate, &g2)?;
        if !w1.is_finite() || !w2.is_finite() {
            return Err(Error::Numeric(format!("gradient descent diverged at step {step}")));
        }
    }
    let mut state = LinearAeState::new(w1, w2, beta)?;
    state.time = steps as f64 * learning_rate;
    Ok(state)
}

/// `(1−β)·‖W₂W₁x − x‖₂ + β·‖W₁x‖₂`.
pub fn contour_score(w1: &Matrix, w2: &Matrix, beta: f64, x: &[f64]) -> Result<f64> {
    let xv = Matrix::column_vector(x);
    let z = w1.matmul(&xv)?;
    let r = w2.matmul(&z)?.sub(&xv)?;
    Ok((1.0 - beta) * r.frobenius_norm() + beta * z.frobenius_norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourBounds {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourPoint {
    pub x1: f64,
    pub x2: f64,
    pub score: f64,
}

/// Scores a `resolution × resolution` grid. Points are emitted row by row:
/// `x2` is fixed along a row and `x1` increases within it.
pub fn contour_grid(
    w1: &Matrix,
    w2: &Matrix,
    beta: f64,
    bounds: ContourBounds,
    resolution: usize,
) -> Result<Vec<ContourPoint>> {
    if resolution < 2 {
        return Err(Error::Config(format!("contour resolution must be ≥ 2, got {resolution}")));
    }
    if w1.cols() != 2 {
        return Err(Error::dim(format!("contour needs a 2-D input space, encoder takes {}", w1.cols())));
    }
    let axis = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
    let mut out = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let x2 = axis(bounds.x2_min, bounds.x2_max, i);
        for j in 0..resolution {
            let x1 = axis(bounds.x1_min, bounds.x1_max, j);
            out.push(ContourPoint {
                x1,
                x2,
                score: contour_score(w1, w2, beta, &[x1, x2])?,
            });
        }
    }
    Ok(out)
}

pub fn write_contour_csv<W: std::io::Write>(points: &[ContourPoint], mut out: W) -> Result<()> {
    writeln!(out, "x1,x2,score")?;
    for p in points {
        writeln!(out, "{},{},{}", p.x1, p.x2, p.score)?;
    }
    Ok(())
}

/// `n` rows drawn from `N(0, diag(stds²))`.
pub fn gaussian_sample(stds: &[f64], n: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut m = Matrix::zeros(n, stds.len());
    for r in 0..n {
        for (c, s) in stds.iter().enumerate() {
            m[(r, c)] = s * normal.sample(&mut rng);
        }
    }
    m
}

/// Gaussian sample closed under sign flips of every axis: each of the `draws`
/// base points is emitted with all `2^dim` sign patterns, so the sample mean
/// is zero and the sample covariance diagonal up to roundoff.
pub fn reflected_gaussian_sample(stds: &[f64], draws: usize, seed: u64) -> Matrix {
    let base = gaussian_sample(stds, draws, seed);
    let dim = stds.len();
    let patterns = 1usize << dim;
    let mut m = Matrix::zeros(draws * patterns, dim);
    for r in 0..draws {
        for p in 0..patterns {
            let row = m.row_mut(r * patterns + p);
            for c in 0..dim {
                let sign = if p >> c & 1 == 1 { -1.0 } else { 1.0 };
                row[c] = sign * base[(r, c)];
            }
        }
    }
    m
}

/// `n` points on the 2-D ellipse at Mahalanobis radius `radius` under
/// `diag(stds²)`, with uniformly random angles.
pub fn mahalanobis_ring(stds: [f64; 2], radius: f64, n: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed);
    let mut m = Matrix::zeros(n, 2);
    for r in 0..n {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        m[(r, 0)] = radius * stds[0] * theta.cos();
        m[(r, 1)] = radius * stds[1] * theta.sin();
    }
    m
}
