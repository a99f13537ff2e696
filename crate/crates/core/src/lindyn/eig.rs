use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// `S = U·diag(Λ)·Uᵀ` with eigenvalues in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomp {
    pub eigenvalues: Vec<f64>,
    /// Columns are unit eigenvectors; the largest-magnitude entry of each
    /// column is positive.
    pub eigenvectors: Matrix,
}

impl EigenDecomp {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `U·diag(f(λ))·Uᵀ`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let n = self.dim();
        let u = &self.eigenvectors;
        let mut out = Matrix::zeros(n, n);
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let w = f(lambda);
            if w == 0.0 {
                continue;
            }
            for i in 0..n {
                let a = w * u[(i, k)];
                for j in 0..n {
                    out[(i, j)] += a * u[(j, k)];
                }
            }
        }
        out
    }

    pub fn reconstruct(&self) -> Matrix {
        self.spectral_map(|l| l)
    }

    /// Orthogonal projector onto the span of the leading `d` eigenvectors.
    pub fn top_projector(&self, d: usize) -> Matrix {
        let n = self.dim();
        let mut out = Matrix::zeros(n, n);
        for k in 0..d.min(n) {
            for i in 0..n {
                for j in 0..n {
                    out[(i, j)] += self.eigenvectors[(i, k)] * self.eigenvectors[(j, k)];
                }
            }
        }
        out
    }
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eig(s: &Matrix) -> Result<EigenDecomp> {
    sym_eig_with(s, JACOBI_MAX_SWEEPS)
}

/// [`sym_eig`] with an explicit sweep budget.
///
/// Sweeps stop once the off-diagonal Frobenius norm drops below
/// `1e-12·max(1, ‖S‖_F)`.
pub fn sym_eig_with(s: &Matrix, max_sweeps: usize) -> Result<EigenDecomp> {
    let n = s.rows();
    if s.cols() != n {
        return Err(Error::dim(format!("eigendecomposition of a {}x{} matrix", n, s.cols())));
    }
    if !s.is_finite() {
        return Err(Error::Numeric("eigendecomposition input is not finite".into()));
    }
    let asym = s.max_abs_diff(&s.transpose());
    if asym > 1e-12 * s.max_abs().max(1.0) {
        return Err(Error::Precondition(format!(
            "matrix is not symmetric (max |S - Sᵀ| = {asym:e})"
        )));
    }

    let mut a = s.clone();
    let mut v = Matrix::identity(n);
    let tol = JACOBI_TOLERANCE * s.frobenius_norm().max(1.0);
    let mut converged = off_diagonal_norm(&a) < tol;
    let mut sweeps = 0;
    while !converged && sweeps < max_sweeps {
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                rotate(&mut a, &mut v, p, q, c, sn);
            }
        }
        sweeps += 1;
        converged = off_diagonal_norm(&a) < tol;
    }
    if !converged {
        return Err(Error::Numeric(format!(
            "Jacobi did not converge in {max_sweeps} sweeps (off-diagonal norm {:e})",
            off_diagonal_norm(&a)
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let eigenvalues = order.iter().map(|&k| a[(k, k)]).collect();
    let mut u = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut pivot = 0;
        for i in 0..n {
            if v[(i, src)].abs() > v[(pivot, src)].abs() {
                pivot = i;
            }
        }
        let sign = if v[(pivot, src)] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            u[(i, dst)] = sign * v[(i, src)];
        }
    }
    Ok(EigenDecomp {
        eigenvalues,
        eigenvectors: u,
    })
}

/// Applies the rotation zeroing `a[p][q]` to both sides of `a` and
/// accumulates it into `v`.
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = a.rows();
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = c * akp - s * akq;
        a[(k, q)] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = c * apk - s * aqk;
        a[(q, k)] = s * apk + c * aqk;
    }
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_input() {
        let e = sym_eig(&Matrix::from_diag(&[1.0, 4.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![4.0, 1.0]);
        assert_eq!(e.eigenvectors, Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap());
    }

    #[test]
    fn two_by_two() {
        let s = Matrix::from_rows(&[[2.0, 1.0], [1.0, 2.0]]).unwrap();
        let e = sym_eig(&s).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
        let r = 0.5f64.sqrt();
        assert!((e.eigenvectors[(0, 0)] - r).abs() < 1e-14);
        assert!((e.eigenvectors[(1, 0)] - r).abs() < 1e-14);
        assert!((e.eigenvectors[(0, 1)].abs() - r).abs() < 1e-14);
        assert!((e.eigenvectors[(0, 1)] + e.eigenvectors[(1, 1)]).abs() < 1e-14);
        assert!(e.reconstruct().max_abs_diff(&s) < 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_exhausted_budget() {
        let s = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eig(&s), Err(Error::Precondition(_))));
        let s = Matrix::from_rows(&[[1.0, 2.0, 3.0], [2.0, 5.0, 1.0], [3.0, 1.0, 0.0]]).unwrap();
        assert!(matches!(sym_eig_with(&s, 0), Err(Error::Numeric(_))));
    }
}
