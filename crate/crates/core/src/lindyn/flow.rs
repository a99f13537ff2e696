use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::toll::LossBreakdown;

use super::eig::EigenDecomp;

pub const DEFAULT_DT: f64 = 1e-3;

/// Empirical covariance of centered data.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    s: Matrix,
}

impl CovMatrix {
    /// Wraps a symmetric matrix without recomputing it from data.
    pub fn from_matrix(s: Matrix) -> Result<Self> {
        if s.rows() != s.cols() {
            return Err(Error::dim(format!("covariance must be square, got {}x{}", s.rows(), s.cols())));
        }
        let sym = s.add(&s.transpose())?.scale(0.5);
        Ok(Self { s: sym })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.s
    }

    pub fn dim(&self) -> usize {
        self.s.rows()
    }
}

/// `S = (1/n)·X·Xᵀ` for `X` with one sample per column.
///
/// Callers holding samples as rows pass the transpose.
pub fn empirical_covariance(x: &Matrix) -> Result<CovMatrix> {
    let n = x.cols();
    if n == 0 {
        return Err(Error::dim("covariance of zero samples".to_string()));
    }
    let means = x.row_means();
    let (worst, mean) = means
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, &m)| if m.abs() > acc.1.abs() { (i, m) } else { acc });
    if mean.abs() >= 1e-8 {
        return Err(Error::Precondition(format!(
            "data is not centered: feature {worst} has mean {mean:e}"
        )));
    }
    let s = x.matmul_t(x)?.scale(1.0 / n as f64);
    CovMatrix::from_matrix(s)
}

/// `W(t) = W(0)·U·exp(−Λt)·Uᵀ`.
pub fn closed_form_flow(w0: &Matrix, eig: &EigenDecomp, t: f64) -> Result<Matrix> {
    if !(t >= 0.0) {
        return Err(Error::Precondition(format!("time must be ≥ 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(w0.clone());
    }
    w0.matmul(&eig.spectral_map(|l| (-l * t).exp()))
}

/// `Z(t) = W(t)·X` with `X` holding samples as columns.
pub fn closed_form_latent(w0: &Matrix, eig: &EigenDecomp, t: f64, x: &Matrix) -> Result<Matrix> {
    closed_form_flow(w0, eig, t)?.matmul(x)
}

fn step_count(t_end: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Precondition(format!("step size must be > 0, got {dt}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Precondition(format!("end time must be ≥ 0, got {t_end}")));
    }
    Ok((t_end / dt).round().max(if t_end > 0.0 { 1.0 } else { 0.0 }) as usize)
}

fn lincomb(base: &Matrix, terms: &[(f64, &Matrix)]) -> Matrix {
    let mut out = base.clone();
    for (a, m) in terms {
        out.axpy(*a, m).expect("RK4 stages share one shape");
    }
    out
}

/// RK4 integration of `Ẇ = −W·S` to `t_end`.
///
/// The step is adjusted to `t_end / round(t_end / dt)` so the final time is
/// hit exactly.
pub fn integrate_norm_flow(w0: &Matrix, s: &CovMatrix, t_end: f64, dt: f64) -> Result<Matrix> {
    let steps = step_count(t_end, dt)?;
    if w0.cols() != s.dim() {
        return Err(Error::dim(format!(
            "weight has {} columns, covariance is {}x{}",
            w0.cols(),
            s.dim(),
            s.dim()
        )));
    }
    let s = s.matrix();
    let f = |w: &Matrix| -> Result<Matrix> { Ok(w.matmul(s)?.scale(-1.0)) };
    let mut w = w0.clone();
    if steps == 0 {
        return Ok(w);
    }
    let h = t_end / steps as f64;
    for i in 0..steps {
        let k1 = f(&w)?;
        let k2 = f(&lincomb(&w, &[(h / 2.0, &k1)]))?;
        let k3 = f(&lincomb(&w, &[(h / 2.0, &k2)]))?;
        let k4 = f(&lincomb(&w, &[(h, &k3)]))?;
        w = lincomb(&w, &[(h / 6.0, &k1), (h / 3.0, &k2), (h / 3.0, &k3), (h / 6.0, &k4)]);
        if !w.is_finite() {
            return Err(Error::Numeric(format!(
                "norm flow diverged at t = {}",
                (i + 1) as f64 * h
            )));
        }
    }
    Ok(w)
}

/// Linear autoencoder `x ↦ W₂·W₁·x` with a `d`-dimensional bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearAeState {
    /// Encoder, d×m.
    pub w1: Matrix,
    /// Decoder, m×d.
    pub w2: Matrix,
    pub beta: f64,
    pub time: f64,
}

impl LinearAeState {
    pub fn new(w1: Matrix, w2: Matrix, beta: f64) -> Result<Self> {
        if w2.rows() != w1.cols() || w2.cols() != w1.rows() {
            return Err(Error::dim(format!(
                "encoder {}x{} and decoder {}x{} do not form an autoencoder",
                w1.rows(),
                w1.cols(),
                w2.rows(),
                w2.cols()
            )));
        }
        if !(beta >= 0.0) {
            return Err(Error::Config(format!("beta must be ≥ 0, got {beta}")));
        }
        Ok(Self {
            w1,
            w2,
            beta,
            time: 0.0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn bottleneck(&self) -> usize {
        self.w1.rows()
    }

    /// `W₂·W₁`.
    pub fn reconstruction_map(&self) -> Matrix {
        self.w2.matmul(&self.w1).expect("shapes checked on construction")
    }

    /// `½tr[(W₂W₁−I)S(W₂W₁−I)ᵀ] + β·½tr[W₁SW₁ᵀ]`.
    pub fn loss(&self, s: &CovMatrix) -> Result<LossBreakdown> {
        let s = s.matrix();
        let e = self.reconstruction_map().sub(&Matrix::identity(self.input_dim()))?;
        let rec = 0.5 * e.matmul(s)?.matmul_t(&e)?.trace();
        let norm = 0.5 * self.w1.matmul(s)?.matmul_t(&self.w1)?.trace();
        Ok(LossBreakdown {
            total: rec + self.beta * norm,
            reconstruction: rec,
            latent_norm: norm,
        })
    }

    /// Right-hand sides `(Ẇ₁, Ẇ₂)` of the gradient flow on [`Self::loss`].
    pub fn flow_field(&self, s: &CovMatrix) -> Result<(Matrix, Matrix)> {
        field(&self.w1, &self.w2, self.beta, s.matrix())
    }
}

fn field(w1: &Matrix, w2: &Matrix, beta: f64, s: &Matrix) -> Result<(Matrix, Matrix)> {
    let m = w1.cols();
    // W₂ᵀ − W₂ᵀW₂W₁ − βW₁
    let mut a = w2.transpose();
    a.axpy(-1.0, &w2.t_matmul(w2)?.matmul(w1)?)?;
    a.axpy(-beta, w1)?;
    let d1 = a.matmul(s)?;
    let mut b = Matrix::identity(m);
    b.axpy(-1.0, &w2.matmul(w1)?)?;
    let d2 = b.matmul(s)?.matmul_t(w1)?;
    Ok((d1, d2))
}

/// Sampled states along a gradient-flow trajectory.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub sample_times: Vec<f64>,
    pub states: Vec<LinearAeState>,
    pub losses: Vec<LossBreakdown>,
}

impl FlowTrajectory {
    pub fn last(&self) -> &LinearAeState {
        self.states.last().expect("a trajectory holds at least its initial state")
    }

    /// `(t, loss_total, loss_rec, loss_norm)` rows with a header line.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,loss_total,loss_rec,loss_norm")?;
        for (t, l) in self.sample_times.iter().zip(&self.losses) {
            writeln!(out, "{t},{},{},{}", l.total, l.reconstruction, l.latent_norm)?;
        }
        Ok(())
    }
}

/// RK4 integration of the coupled encoder/decoder flow, recording every step.
pub fn integrate_ae_flow(
    state0: &LinearAeState,
    s: &CovMatrix,
    t_end: f64,
    dt: f64,
) -> Result<FlowTrajectory> {
    integrate_ae_flow_sampled(state0, s, t_end, dt, 1)
}

/// As [`integrate_ae_flow`] but records only every `sample_every` steps
/// (plus the initial and final states).
pub fn integrate_ae_flow_sampled(
    state0: &LinearAeState,
    s: &CovMatrix,
    t_end: f64,
    dt: f64,
    sample_every: usize,
) -> Result<FlowTrajectory> {
    let steps = step_count(t_end, dt)?;
    if state0.input_dim() != s.dim() {
        return Err(Error::dim(format!(
            "autoencoder input {} vs covariance {}",
            state0.input_dim(),
            s.dim()
        )));
    }
    let sample_every = sample_every.max(1);
    let beta = state0.beta;
    let sm = s.matrix();
    let mut traj = FlowTrajectory {
        sample_times: vec![state0.time],
        states: vec![state0.clone()],
        losses: vec![state0.loss(s)?],
    };
    if steps == 0 {
        return Ok(traj);
    }
    let h = t_end / steps as f64;
    let (mut w1, mut w2) = (state0.w1.clone(), state0.w2.clone());
    for i in 1..=steps {
        let (a1, a2) = field(&w1, &w2, beta, sm)?;
        let (b1, b2) = field(&lincomb(&w1, &[(h / 2.0, &a1)]), &lincomb(&w2, &[(h / 2.0, &a2)]), beta, sm)?;
        let (c1, c2) = field(&lincomb(&w1, &[(h / 2.0, &b1)]), &lincomb(&w2, &[(h / 2.0, &b2)]), beta, sm)?;
        let (d1, d2) = field(&lincomb(&w1, &[(h, &c1)]), &lincomb(&w2, &[(h, &c2)]), beta, sm)?;
        w1 = lincomb(&w1, &[(h / 6.0, &a1), (h / 3.0, &b1), (h / 3.0, &c1), (h / 6.0, &d1)]);
        w2 = lincomb(&w2, &[(h / 6.0, &a2), (h / 3.0, &b2), (h / 3.0, &c2), (h / 6.0, &d2)]);
        let t = state0.time + i as f64 * h;
        if !w1.is_finite() || !w2.is_finite() {
            return Err(Error::Numeric(format!("autoencoder flow diverged at t = {t}")));
        }
        if i % sample_every == 0 || i == steps {
            let state = LinearAeState {
                w1: w1.clone(),
                w2: w2.clone(),
                beta,
                time: t,
            };
            traj.losses.push(state.loss(s)?);
            traj.sample_times.push(t);
            traj.states.push(state);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindyn::sym_eig;

    #[test]
    fn covariance_hand_cases() {
        let s = empirical_covariance(&Matrix::row_vector(&[1.0, -1.0])).unwrap();
        assert_eq!(s.matrix(), &Matrix::filled(1, 1, 1.0));
        let z = empirical_covariance(&Matrix::zeros(3, 4)).unwrap();
        assert_eq!(z.matrix(), &Matrix::zeros(3, 3));
        let err = empirical_covariance(&Matrix::from_rows(&[[1.0, -1.0], [1.0, 0.5]]).unwrap()).unwrap_err();
        assert!(matches!(&err, Error::Precondition(m) if m.contains("feature 1")), "{err}");
    }

    #[test]
    fn closed_form_scalar_decay() {
        let eig = sym_eig(&Matrix::from_diag(&[4.0, 1.0])).unwrap();
        let w = closed_form_flow(&Matrix::identity(2), &eig, 0.5).unwrap();
        assert!((w[(0, 0)] - (-2.0f64).exp()).abs() < 1e-15);
        assert!((w[(1, 1)] - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(w[(0, 1)], 0.0);
        let w0 = Matrix::from_rows(&[[0.3, -1.2]]).unwrap();
        assert_eq!(closed_form_flow(&w0, &eig, 0.0).unwrap(), w0);
        assert!(closed_form_flow(&w0, &eig, 50.0).unwrap().max_abs() < 1e-20);
        let z = closed_form_latent(&Matrix::identity(2), &eig, 0.5, &Matrix::column_vector(&[1.0, 1.0])).unwrap();
        assert!((z[(0, 0)] - 0.1353352832366127).abs() < 1e-15);
        assert!((z[(1, 0)] - 0.6065306597126334).abs() < 1e-15);
    }

    #[test]
    fn zero_field_and_zero_time() {
        let s = CovMatrix::from_matrix(Matrix::zeros(2, 2)).unwrap();
        let w0 = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        assert_eq!(integrate_norm_flow(&w0, &s, 3.0, 1e-2).unwrap(), w0);
        let st = LinearAeState::new(w0.clone(), w0.transpose(), 0.1).unwrap();
        let tr = integrate_ae_flow(&st, &s, 0.0, 1e-3).unwrap();
        assert_eq!(tr.states.len(), 1);
        assert_eq!(tr.states[0], st);
    }

    #[test]
    fn rejects_bad_steps() {
        let s = CovMatrix::from_matrix(Matrix::identity(1)).unwrap();
        assert!(integrate_norm_flow(&Matrix::identity(1), &s, 1.0, 0.0).is_err());
        assert!(integrate_norm_flow(&Matrix::identity(1), &s, -1.0, 0.1).is_err());
    }

    #[test]
    fn trajectory_csv_has_header() {
        let s = CovMatrix::from_matrix(Matrix::identity(2)).unwrap();
        let st = LinearAeState::new(Matrix::row_vector(&[0.5, 0.1]), Matrix::column_vector(&[0.2, 0.3]), 0.0).unwrap();
        let tr = integrate_ae_flow_sampled(&st, &s, 0.01, 1e-3, 5).unwrap();
        assert_eq!(tr.sample_times.len(), 3);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,loss_total,loss_rec,loss_norm\n0,"));
        assert_eq!(text.lines().count(), 4);
    }
}
