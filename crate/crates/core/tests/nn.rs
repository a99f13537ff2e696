use rand::Rng;

use toll::nn::{grad_check, weighted_quadratic_loss, BatchNormLayer, BATCH_NORM_EPSILON, BATCH_NORM_MOMENTUM};
use toll::rng::seeded_rng;
use toll::{AdamState, Layer, LayerSpec, Matrix, Mlp, Mode};

fn random(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn batch_norm_output_is_standardized_per_feature() {
    let mut rng = seeded_rng(1);
    let mut bn = Layer::BatchNorm(BatchNormLayer::new(4));
    let mut x = random(&mut rng, 32, 4, 3.0);
    for r in 0..32 {
        x[(r, 2)] += 10.0;
    }
    let y = bn.forward(&x, Mode::Training).unwrap();
    for c in 0..4 {
        let col = y.column(c);
        let mean = col.iter().sum::<f64>() / 32.0;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 32.0;
        let raw = x.column(c);
        let rm = raw.iter().sum::<f64>() / 32.0;
        let rv = raw.iter().map(|v| (v - rm).powi(2)).sum::<f64>() / 32.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - rv / (rv + BATCH_NORM_EPSILON)).abs() < 1e-12);
    }
}

#[test]
fn inference_uses_running_statistics() {
    let mut rng = seeded_rng(2);
    let mut bn = Layer::BatchNorm(BatchNormLayer::new(3));
    let x = random(&mut rng, 16, 3, 2.0);
    bn.forward(&x, Mode::Training).unwrap();
    let Layer::BatchNorm(trained) = &bn else { unreachable!() };
    let (mean, var) = trained.batch_statistics().unwrap();
    for c in 0..3 {
        let expected_mean = BATCH_NORM_MOMENTUM * mean[c];
        assert!((trained.running_mean[c] - expected_mean).abs() < 1e-12);
        let unbiased = var[c] * 16.0 / 15.0;
        let expected_var = (1.0 - BATCH_NORM_MOMENTUM) + BATCH_NORM_MOMENTUM * unbiased;
        assert!((trained.running_var[c] - expected_var).abs() < 1e-12);
    }
    let layer = trained.clone();
    let probe = random(&mut rng, 1, 3, 1.0);
    let out = Layer::BatchNorm(layer.clone()).infer(&probe).unwrap();
    for c in 0..3 {
        let expected = (probe[(0, c)] - layer.running_mean[c]) / (layer.running_var[c] + BATCH_NORM_EPSILON).sqrt();
        assert!((out[(0, c)] - expected).abs() < 1e-12);
    }
}

#[test]
fn three_layer_network_gradients() {
    let mut rng = seeded_rng(3);
    let specs = vec![
        LayerSpec::Dense { input: 6, output: 9, bias: true },
        LayerSpec::LeakyRelu { slope: 0.2 },
        LayerSpec::Dense { input: 9, output: 4, bias: true },
    ];
    let mut checked = 0;
    for seed in 0..5 {
        let net = Mlp::init(&specs, seed).unwrap();
        let x = random(&mut rng, 7, 6, 1.0);
        let w = random(&mut rng, 7, 4, 1.0);
        let mut probe = net.clone();
        probe.forward(&x, Mode::Training).unwrap();
        if probe.min_kink_distance().unwrap() < 1e-3 {
            continue;
        }
        let report = grad_check(&net, weighted_quadratic_loss(&w), &x, 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-5, "{report:?}");
        checked += 1;
    }
    assert!(checked >= 3);
}

#[test]
fn incompatible_widths_name_the_layer() {
    let specs = vec![
        LayerSpec::dense(4, 8),
        LayerSpec::relu(),
        LayerSpec::dense(7, 2),
    ];
    let err = Mlp::init(&specs, 0).unwrap_err();
    assert!(err.to_string().contains('2'), "{err}");
}

/// Bias-corrected Adam on one scalar, written out step by step.
fn adam_oracle(grads: &[f64], lr: f64) -> f64 {
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let (mut m, mut v, mut p) = (0.0, 0.0, 0.0);
    for (t, g) in grads.iter().enumerate() {
        let t = t as i32 + 1;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t));
        let vh = v / (1.0 - b2.powi(t));
        p -= lr * mh / (vh.sqrt() + eps);
    }
    p
}

#[test]
fn adam_matches_hand_recursion() {
    let grads = [0.5, -1.5, 2.0, 0.01, -0.3];
    let mut param = [0.0];
    let mut adam = AdamState::new(1e-2);
    for g in grads {
        adam.step(vec![(&mut param[..], &[g][..])]).unwrap();
    }
    assert!((param[0] - adam_oracle(&grads, 1e-2)).abs() < 1e-15);
    assert_eq!(adam.step_count(), 5);
    // first step moves by lr·sign(g) regardless of the gradient scale
    let mut p = [1.0];
    AdamState::new(1e-3).step(vec![(&mut p[..], &[1e6][..])]).unwrap();
    assert!((p[0] - (1.0 - 1e-3)).abs() < 1e-12);
}

#[test]
fn adam_rejects_shape_changes() {
    let mut adam = AdamState::new(1e-3);
    let mut a = [0.0; 3];
    adam.step(vec![(&mut a[..], &[1.0, 1.0, 1.0][..])]).unwrap();
    let mut b = [0.0; 2];
    assert!(adam.step(vec![(&mut b[..], &[1.0, 1.0][..])]).is_err());
}
