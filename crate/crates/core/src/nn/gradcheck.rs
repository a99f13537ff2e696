//! Central-difference verification of [`Mlp::backward`].

use rand::Rng;

use super::layer::Mode;
use super::mlp::{LayerSpec, Mlp};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::seeded_rng;

/// Where the worst disagreement was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradLocation {
    /// Parameter tensor `tensor` (in [`Mlp::params`] order), entry `index`.
    Parameter { tensor: usize, index: usize },
    /// Entry of the gradient with respect to the network input.
    Input { index: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst: Option<GradLocation>,
    pub checked: usize,
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Compares analytic gradients of `loss(net(batch))` against central
/// differences with step `h`, over every parameter and every input entry.
///
/// `loss` returns the scalar loss and its gradient with respect to the
/// network output. The network is cloned; `net` itself is left untouched.
/// Forwards run in training mode, so batch norm uses batch statistics.
pub fn grad_check<F>(net: &Mlp, loss: F, batch: &Matrix, h: f64) -> Result<GradCheckReport>
where
    F: Fn(&Matrix) -> (f64, Matrix),
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::Precondition(format!("step {h} outside [1e-7, 1e-3]")));
    }

    let mut analytic_net = net.clone();
    let out = analytic_net.forward(batch, Mode::Training)?;
    let (_, grad_out) = loss(&out);
    let grad_in = analytic_net.backward(&grad_out)?;
    let analytic: Vec<Vec<f64>> = analytic_net
        .params_and_grads()
        .into_iter()
        .map(|(_, g)| g.to_vec())
        .collect();

    let eval = |probe: &mut Mlp, x: &Matrix| -> Result<f64> {
        let out = probe.forward(x, Mode::Training)?;
        Ok(loss(&out).0)
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
    };
    let record = |err: f64, loc: GradLocation, report: &mut GradCheckReport| {
        report.checked += 1;
        if err > report.max_relative_error || report.worst.is_none() {
            report.max_relative_error = report.max_relative_error.max(err);
            report.worst = Some(loc);
        }
    };

    let mut probe = net.clone();
    for (t, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let original = probe.params_and_grads()[t].0[i];
            probe.params_and_grads()[t].0[i] = original + h;
            let plus = eval(&mut probe, batch)?;
            probe.params_and_grads()[t].0[i] = original - h;
            let minus = eval(&mut probe, batch)?;
            probe.params_and_grads()[t].0[i] = original;
            let numeric = (plus - minus) / (2.0 * h);
            record(
                relative_error(a, numeric),
                GradLocation::Parameter { tensor: t, index: i },
                &mut report,
            );
        }
    }

    let mut x = batch.clone();
    for i in 0..x.as_slice().len() {
        let original = x.as_slice()[i];
        x.as_mut_slice()[i] = original + h;
        let plus = eval(&mut probe, &x)?;
        x.as_mut_slice()[i] = original - h;
        let minus = eval(&mut probe, &x)?;
        x.as_mut_slice()[i] = original;
        let numeric = (plus - minus) / (2.0 * h);
        record(
            relative_error(grad_in.as_slice()[i], numeric),
            GradLocation::Input { index: i },
            &mut report,
        );
    }
    Ok(report)
}

/// `½‖out‖² + Σ wᵢⱼ·outᵢⱼ` with fixed weights: a smooth test loss whose
/// gradient does not vanish under batch normalization.
pub fn weighted_quadratic_loss(weights: &Matrix) -> impl Fn(&Matrix) -> (f64, Matrix) + '_ {
    move |out: &Matrix| {
        let value = out
            .as_slice()
            .iter()
            .zip(weights.as_slice())
            .map(|(o, w)| 0.5 * o * o + w * o)
            .sum();
        let grad = out
            .add(weights)
            .expect("loss weights must match the network output shape");
        (value, grad)
    }
}

/// One randomly drawn network with its probe batch and loss weights.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub specs: Vec<LayerSpec>,
    pub net: Mlp,
    pub batch: Matrix,
    pub weights: Matrix,
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let v = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, v).expect("length matches shape")
}

/// Draws 1 to 4 layers mixing dense, batch-norm and leaky-ReLU (at least one
/// dense), widths 1..=32 and a batch of at most 16 rows (at least 8 when
/// batch norm is present).
///
/// Shifts whose next non-dense layer is batch norm are structurally zero
/// gradients, so such dense layers are drawn without bias and such
/// batch-norm pairs are broken with an activation. Inputs are redrawn until
/// every leaky-ReLU pre-activation is at least `1e-3` from the kink.
pub fn random_case(rng: &mut impl Rng) -> Result<GradCheckCase> {
    let depth = rng.random_range(1..=4);
    let mut kinds: Vec<u8> = (0..depth).map(|_| rng.random_range(0..3)).collect();
    if !kinds.contains(&0) {
        kinds[0] = 0;
    }
    let next_non_dense = |kinds: &[u8], i: usize| kinds[i + 1..].iter().position(|&k| k != 0).map(|p| i + 1 + p);
    for i in 0..kinds.len() {
        if kinds[i] == 1 {
            if let Some(j) = next_non_dense(&kinds, i).filter(|&j| kinds[j] == 1) {
                kinds[j] = 2;
            }
        }
    }
    let input = rng.random_range(1..=32);
    let mut width = input;
    let mut specs = Vec::with_capacity(depth);
    for (i, &k) in kinds.iter().enumerate() {
        match k {
            0 => {
                let output = rng.random_range(1..=32);
                let bias = next_non_dense(&kinds, i).is_none_or(|j| kinds[j] != 1);
                specs.push(LayerSpec::Dense { input: width, output, bias });
                width = output;
            }
            1 => specs.push(LayerSpec::BatchNorm { width }),
            _ => {
                let slope = [0.0, 0.01, 0.2, rng.random_range(0.0..0.5)][rng.random_range(0..4)];
                specs.push(LayerSpec::LeakyRelu { slope });
            }
        }
    }
    let net = Mlp::init(&specs, rng.random())?;
    let rows = if kinds.contains(&1) {
        rng.random_range(8..=16)
    } else {
        rng.random_range(2..=16)
    };
    let weights = uniform(rng, rows, net.output_dim());
    let mut batch = uniform(rng, rows, input);
    for _ in 0..10_000 {
        let mut probe = net.clone();
        probe.forward(&batch, Mode::Training)?;
        if probe.min_kink_distance().is_none_or(|d| d >= 1e-3) {
            break;
        }
        batch = uniform(rng, rows, input);
    }
    Ok(GradCheckCase { specs, net, batch, weights })
}

/// Runs [`grad_check`] with [`weighted_quadratic_loss`] on `count` cases from
/// [`random_case`].
pub fn random_suite(count: usize, seed: u64, h: f64) -> Result<Vec<(GradCheckCase, GradCheckReport)>> {
    let mut rng = seeded_rng(seed);
    (0..count)
        .map(|_| {
            let case = random_case(&mut rng)?;
            let report = grad_check(&case.net, weighted_quadratic_loss(&case.weights), &case.batch, h)?;
            Ok((case, report))
        })
        .collect()
}
