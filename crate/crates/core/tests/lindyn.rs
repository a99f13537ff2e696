use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use toll::lindyn::{
    closed_form_flow, closed_form_latent, empirical_covariance, integrate_ae_flow, integrate_norm_flow, sym_eig,
    CovMatrix, LinearAeState,
};
use toll::rng::seeded_rng;
use toll::Matrix;

/// `m × n` samples-as-columns with each row centered exactly.
fn centered(m: usize, n: usize, seed: u64) -> Matrix {
    let mut rng = seeded_rng(seed);
    let mut x = Matrix::zeros(m, n);
    for r in 0..m {
        for c in 0..n {
            let v: f64 = StandardNormal.sample(&mut rng);
            x[(r, c)] = v * (1.0 + r as f64);
        }
    }
    let means = x.row_means();
    for r in 0..m {
        x.row_mut(r).iter_mut().for_each(|v| *v -= means[r]);
    }
    x
}

fn random_cov(m: usize, seed: u64) -> CovMatrix {
    empirical_covariance(&centered(m, 10 * m, seed)).unwrap()
}

#[test]
fn covariance_matches_pairwise_sums() {
    let x = centered(5, 200, 1);
    let s = empirical_covariance(&x).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            let mut acc = 0.0;
            for k in 0..200 {
                acc += x[(i, k)] * x[(j, k)];
            }
            assert!((s.matrix()[(i, j)] - acc / 200.0).abs() < 1e-12);
        }
    }
}

#[test]
fn uncentered_data_is_rejected() {
    let mut x = centered(3, 50, 2);
    x.row_mut(1).iter_mut().for_each(|v| *v += 0.5);
    assert!(empirical_covariance(&x).is_err());
}

#[test]
fn eigendecomposition_reconstructs_and_is_orthonormal() {
    for seed in 0..5 {
        let s = random_cov(8, seed);
        let eig = sym_eig(s.matrix()).unwrap();
        assert!(eig.reconstruct().max_abs_diff(s.matrix()) < 1e-10);
        let u = &eig.eigenvectors;
        assert!(u.t_matmul(u).unwrap().max_abs_diff(&Matrix::identity(8)) < 1e-10);
        assert!(eig.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        for c in 0..8 {
            let col = u.column(c);
            let big = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            assert!(big > 0.0);
        }
    }
}

#[test]
fn runge_kutta_error_shrinks_fourth_order() {
    let raw = random_cov(4, 9);
    let top = sym_eig(raw.matrix()).unwrap().eigenvalues[0];
    let s = CovMatrix::from_matrix(raw.matrix().scale(1.0 / top)).unwrap();
    let eig = sym_eig(s.matrix()).unwrap();
    let mut rng = seeded_rng(3);
    let w0 = Matrix::from_vec(4, 4, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let exact = closed_form_flow(&w0, &eig, 2.0).unwrap();
    let coarse = integrate_norm_flow(&w0, &s, 2.0, 0.2).unwrap().max_abs_diff(&exact);
    let fine = integrate_norm_flow(&w0, &s, 2.0, 0.1).unwrap().max_abs_diff(&exact);
    let ratio = coarse / fine;
    assert!((12.0..20.0).contains(&ratio), "error ratio {ratio}");
}

#[test]
fn latent_components_decay_at_their_eigenvalue_rates() {
    let s = random_cov(3, 4);
    let eig = sym_eig(s.matrix()).unwrap();
    let t = 0.7;
    for i in 0..3 {
        let u = Matrix::column_vector(&eig.eigenvectors.column(i));
        let z = closed_form_latent(&Matrix::identity(3), &eig, t, &u).unwrap();
        let expected = u.scale((-eig.eigenvalues[i] * t).exp());
        assert!(z.max_abs_diff(&expected) < 1e-12);
    }
}

#[test]
fn principal_subspace_is_stationary_without_regularization() {
    let s = random_cov(5, 6);
    let eig = sym_eig(s.matrix()).unwrap();
    for d in 1..=3 {
        let cols: Vec<Vec<f64>> = (0..d).map(|i| eig.eigenvectors.column(i)).collect();
        let w1 = Matrix::from_rows(&cols).unwrap();
        let state = LinearAeState::new(w1.clone(), w1.transpose(), 0.0).unwrap();
        let (g1, g2) = state.flow_field(&s).unwrap();
        assert!(g1.max_abs() < 1e-10 && g2.max_abs() < 1e-10);
        // with β > 0 the same point is no longer stationary
        let reg = LinearAeState::new(w1.clone(), w1.transpose(), 0.5).unwrap();
        assert!(reg.flow_field(&s).unwrap().0.max_abs() > 1e-3);
    }
}

#[test]
fn coupled_flow_loss_is_nonincreasing_in_higher_dimensions() {
    let s = random_cov(4, 7);
    let mut rng = seeded_rng(8);
    let mut u = |r: usize, c: usize| {
        Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap()
    };
    for beta in [0.0, 0.5, 2.0] {
        let st = LinearAeState::new(u(2, 4), u(4, 2), beta).unwrap();
        let traj = integrate_ae_flow(&st, &s, 10.0, 1e-3).unwrap();
        assert!(traj.losses.windows(2).all(|w| w[1].total <= w[0].total + 1e-12));
        assert!(traj.last().time > 9.999);
    }
}

#[test]
fn regularization_shrinks_the_encoder() {
    let s = random_cov(3, 10);
    let mut rng = seeded_rng(11);
    let w1 = Matrix::from_vec(1, 3, (0..3).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap();
    let w2 = Matrix::from_vec(3, 1, (0..3).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap();
    let final_norm = |beta: f64| {
        let st = LinearAeState::new(w1.clone(), w2.clone(), beta).unwrap();
        integrate_ae_flow(&st, &s, 20.0, 1e-2).unwrap().last().w1.frobenius_norm()
    };
    let norms: Vec<f64> = [0.0, 0.5, 2.0].iter().map(|&b| final_norm(b)).collect();
    assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
}
