//! Minibatch training with periodic checkpoints, validation-based model
//! selection, and multi-seed experiments.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    one_class_split, standardize, BatchStream, Dataset, Protocol, SplitResult, SplitSpec,
    Standardization, StandardizeMode,
};
use crate::error::{Error, Result};
use crate::eval::{aggregate, f1_at_rate, roc_auc, MetricSummary, ScoredSet};
use crate::lindyn::{gaussian_sample, mahalanobis_ring};
use crate::matrix::Matrix;
use crate::nn::{AdamState, LayerSpec, Mlp, Mode};
use crate::rng::derive_seed;
use crate::toll::{anomaly_scores, toll_loss, toll_loss_grads, LossBreakdown, TollConfig};

pub const DEFAULT_BATCH_COUNT: usize = 2000;
pub const DEFAULT_CHECKPOINT_INTERVAL: usize = 20;
const SCORE_CHUNK: usize = 512;

const STREAM_SPLIT: u64 = 0;
const STREAM_ENCODER: u64 = 1;
const STREAM_DECODER: u64 = 2;
const STREAM_BATCHES: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    Auc,
    F1AtRate(f64),
}

impl Metric {
    pub fn evaluate(&self, s: &ScoredSet) -> Result<f64> {
        match self {
            Metric::Auc => roc_auc(s),
            Metric::F1AtRate(r) => f1_at_rate(s, *r),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Metric::Auc => "auc".into(),
            Metric::F1AtRate(r) => format!("f1@{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
    pub toll: TollConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub batch_count: usize,
    pub checkpoint_interval: usize,
    /// Checkpoint selection metric; `None` keeps the last checkpoint.
    pub validation_metric: Option<Metric>,
    /// Metric reported on the test split.
    pub test_metric: Metric,
    /// Preprocessing fitted on the training split.
    pub standardize: Option<StandardizeMode>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(encoder: Vec<LayerSpec>, decoder: Vec<LayerSpec>, toll: TollConfig) -> Self {
        Self {
            encoder,
            decoder,
            toll,
            learning_rate: 1e-3,
            batch_size: 100,
            batch_count: DEFAULT_BATCH_COUNT,
            checkpoint_interval: DEFAULT_CHECKPOINT_INTERVAL,
            validation_metric: Some(Metric::Auc),
            test_metric: Metric::Auc,
            standardize: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_count == 0 {
            return Err(Error::Config("batch_count must be ≥ 1".into()));
        }
        if self.checkpoint_interval == 0 || self.checkpoint_interval > self.batch_count {
            return Err(Error::Config(format!(
                "checkpoint_interval {} must lie in [1, batch_count = {}]",
                self.checkpoint_interval, self.batch_count
            )));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Number of batches processed when the checkpoint was taken.
    pub batch_index: usize,
    /// Training loss averaged over the batches since the previous checkpoint.
    pub train_loss: LossBreakdown,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub toll: TollConfig,
    pub standardization: Option<Standardization>,
    /// Index into `history` of the selected checkpoint.
    pub best_checkpoint_index: usize,
    pub history: Vec<Checkpoint>,
}

impl TrainedModel {
    pub fn best(&self) -> &Checkpoint {
        &self.history[self.best_checkpoint_index]
    }

    /// Anomaly scores of every row, in inference mode.
    pub fn score_matrix(&self, features: &Matrix) -> Result<Vec<f64>> {
        anomaly_scores_chunked(features, &self.encoder, &self.decoder, &self.toll)
    }
}

fn check_architecture(cfg: &TrainConfig, enc: &Mlp, dec: &Mlp, features: usize) -> Result<()> {
    if enc.input_dim() != features {
        return Err(Error::dim(format!(
            "encoder takes {} features, data has {features}",
            enc.input_dim()
        )));
    }
    if dec.input_dim() != enc.output_dim() || dec.output_dim() != features {
        return Err(Error::dim(format!(
            "decoder {}→{} does not invert encoder {}→{}",
            dec.input_dim(),
            dec.output_dim(),
            enc.input_dim(),
            enc.output_dim()
        )));
    }
    cfg.toll.validate(enc.output_dim())
}

fn as_training_error(batch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(message) => Error::Training { batch, message },
        other => other,
    }
}

/// Trains an encoder/decoder pair on `split.train` and returns the best
/// checkpoint.
pub fn train(cfg: &TrainConfig, split: &SplitResult) -> Result<TrainedModel> {
    cfg.validate()?;
    let train = &split.train;
    if train.sample_count() == 0 {
        return Err(Error::Config("training split is empty".into()));
    }
    if cfg.validation_metric.is_some() && split.validation.sample_count() == 0 {
        return Err(Error::Config("a validation metric is configured but the validation split is empty".into()));
    }
    let mut enc = Mlp::init(&cfg.encoder, derive_seed(cfg.seed, STREAM_ENCODER))?;
    let mut dec = Mlp::init(&cfg.decoder, derive_seed(cfg.seed, STREAM_DECODER))?;
    check_architecture(cfg, &enc, &dec, train.feature_count())?;

    let mut adam_enc = AdamState::new(cfg.learning_rate);
    let mut adam_dec = AdamState::new(cfg.learning_rate);
    let mut stream = BatchStream::new(
        &train.features,
        cfg.batch_size,
        cfg.batch_count,
        derive_seed(cfg.seed, STREAM_BATCHES),
    )?;
    let val_labels = cfg
        .validation_metric
        .map(|_| split.validation.labels.clone());

    let mut history = Vec::new();
    let mut best: Option<(usize, f64, Mlp, Mlp)> = None;
    let mut acc = (0.0, 0.0, 0.0);
    let mut since = 0usize;
    let mut batch_index = 0;
    while let Some(batch) = stream.next() {
        batch_index += 1;
        let wrap = as_training_error(batch_index);
        let z = enc.forward(&batch, Mode::Training).map_err(&wrap)?;
        let xhat = dec.forward(&z, Mode::Training).map_err(&wrap)?;
        let loss = toll_loss(&batch, &xhat, &z, &cfg.toll)?;
        if !loss.total.is_finite() {
            return Err(Error::Training {
                batch: batch_index,
                message: format!("loss is {}", loss.total),
            });
        }
        let (g_xhat, mut g_z) = toll_loss_grads(&batch, &xhat, &z, &cfg.toll)?;
        let through_decoder = dec.backward(&g_xhat)?;
        g_z.axpy(1.0, &through_decoder)?;
        enc.backward(&g_z)?;
        adam_dec.step_mlp(&mut dec).map_err(&wrap)?;
        adam_enc.step_mlp(&mut enc).map_err(&wrap)?;

        acc.0 += loss.total;
        acc.1 += loss.reconstruction;
        acc.2 += loss.latent_norm;
        since += 1;

        if batch_index % cfg.checkpoint_interval == 0 {
            let k = since as f64;
            let train_loss = LossBreakdown {
                total: acc.0 / k,
                reconstruction: acc.1 / k,
                latent_norm: acc.2 / k,
            };
            acc = (0.0, 0.0, 0.0);
            since = 0;
            let val_metric = match (&cfg.validation_metric, &val_labels) {
                (Some(metric), Some(labels)) => {
                    let scores = anomaly_scores_chunked(&split.validation.features, &enc, &dec, &cfg.toll)?;
                    Some(metric.evaluate(&ScoredSet::from_labels(scores, labels)?)?)
                }
                _ => None,
            };
            let idx = history.len();
            history.push(Checkpoint {
                batch_index,
                train_loss,
                val_metric,
            });
            let better = match (&best, val_metric) {
                (None, _) => true,
                (Some(_), None) => true,
                (Some((_, b, _, _)), Some(v)) => v > *b,
            };
            if better {
                best = Some((idx, val_metric.unwrap_or(f64::NEG_INFINITY), enc.clone(), dec.clone()));
            }
        }
    }
    let (best_checkpoint_index, _, encoder, decoder) =
        best.ok_or_else(|| Error::State("training recorded no checkpoint".into()))?;
    Ok(TrainedModel {
        encoder,
        decoder,
        toll: cfg.toll.clone(),
        standardization: split.standardization.clone(),
        best_checkpoint_index,
        history,
    })
}

fn anomaly_scores_chunked(features: &Matrix, enc: &Mlp, dec: &Mlp, toll: &TollConfig) -> Result<Vec<f64>> {
    let idx: Vec<usize> = (0..features.rows()).collect();
    let mut out = Vec::with_capacity(features.rows());
    for chunk in idx.chunks(SCORE_CHUNK) {
        out.extend(anomaly_scores(&features.select_rows(chunk), enc, dec, toll)?);
    }
    Ok(out)
}

/// Scores a dataset whose labels are binary anomaly flags.
pub fn score_split(model: &TrainedModel, ds: &Dataset) -> Result<ScoredSet> {
    ScoredSet::from_labels(model.score_matrix(&ds.features)?, &ds.labels)
}

/// Split, standardize (if configured) and train for one seed.
pub fn prepare_and_train(cfg: &TrainConfig, ds: &Dataset, spec: &SplitSpec) -> Result<(SplitResult, TrainedModel)> {
    let split = one_class_split(ds, &spec.with_seed(derive_seed(cfg.seed, STREAM_SPLIT)))?;
    let split = match cfg.standardize {
        Some(mode) => standardize(split, mode)?,
        None => split,
    };
    let model = train(cfg, &split)?;
    Ok((split, model))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub value: f64,
    pub best_batch: usize,
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub dataset: String,
    pub normal_class: String,
    pub metric_name: String,
    pub per_seed: Vec<SeedResult>,
    pub summary: MetricSummary,
    pub config: TrainConfig,
}

pub fn protocol_label(p: &Protocol) -> String {
    match p {
        Protocol::OneVsRest { normal } => normal.to_string(),
        Protocol::Designated { anomalous } => format!(
            "not {}",
            anomalous.iter().map(|l| l.to_string()).collect::<Vec<_>>().join("/")
        ),
    }
}

/// Runs one full train/test cycle per seed (seeds run in parallel) and
/// aggregates the test metric. The seed drives the split shuffle,
/// initialization and batch stream; `cfg.seed` is ignored.
pub fn run_experiment(cfg: &TrainConfig, ds: &Dataset, spec: &SplitSpec, seeds: &[u64]) -> Result<ExperimentResult> {
    if seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    let per_seed: Vec<SeedResult> = seeds
        .par_iter()
        .map(|&seed| {
            let run = || -> Result<SeedResult> {
                let cfg = TrainConfig { seed, ..cfg.clone() };
                let (split, model) = prepare_and_train(&cfg, ds, spec)?;
                let value = cfg.test_metric.evaluate(&score_split(&model, &split.test)?)?;
                Ok(SeedResult {
                    seed,
                    value,
                    best_batch: model.best().batch_index,
                    val_metric: model.best().val_metric,
                })
            };
            run().map_err(|e| Error::Seeded {
                seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = per_seed.iter().map(|r| r.value).collect();
    Ok(ExperimentResult {
        dataset: ds.source_name.clone(),
        normal_class: protocol_label(&spec.protocol),
        metric_name: cfg.test_metric.name(),
        summary: aggregate(&values)?,
        per_seed,
        config: cfg.clone(),
    })
}

/// Trains once per candidate β on one seed and returns the β whose best
/// checkpoint scored highest on validation (earliest candidate on ties).
pub fn tune_beta(cfg: &TrainConfig, ds: &Dataset, spec: &SplitSpec, betas: &[f64]) -> Result<(f64, Vec<(f64, f64)>)> {
    if cfg.validation_metric.is_none() {
        return Err(Error::Config("tuning beta needs a validation metric".into()));
    }
    let trials: Vec<(f64, f64)> = betas
        .par_iter()
        .map(|&beta| {
            let mut c = cfg.clone();
            c.toll.beta = beta;
            let (_, model) = prepare_and_train(&c, ds, spec)?;
            Ok((beta, model.best().val_metric.unwrap_or(f64::NEG_INFINITY)))
        })
        .collect::<Result<_>>()?;
    let best = trials
        .iter()
        .fold(None::<(f64, f64)>, |acc, &(b, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((b, v)),
        })
        .ok_or_else(|| Error::Config("no beta candidates".into()))?;
    Ok((best.0, trials))
}

/// Normal samples from `N(0, diag(stds²))` labeled 0 and anomalies on the
/// Mahalanobis ring of radius `radius` labeled 1.
pub fn gaussian_toy_dataset(stds: [f64; 2], radius: f64, normals: usize, anomalies: usize, seed: u64) -> Result<Dataset> {
    let a = gaussian_sample(&stds, normals, derive_seed(seed, 10));
    let b = mahalanobis_ring(stds, radius, anomalies, derive_seed(seed, 11));
    let mut values = a.into_vec();
    values.extend(b.into_vec());
    let features = Matrix::from_vec(normals + anomalies, 2, values)?;
    let labels = (0..normals + anomalies).map(|i| (i >= normals) as i64).collect();
    Dataset::new(features, labels, "gaussian-2d".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitSize;

    fn linear_cfg(beta: f64) -> TrainConfig {
        let mut c = TrainConfig::new(
            vec![LayerSpec::dense_no_bias(2, 1)],
            vec![LayerSpec::dense_no_bias(1, 2)],
            TollConfig::with_beta(beta),
        );
        c.batch_size = 32;
        c.batch_count = 200;
        c.checkpoint_interval = 20;
        c.learning_rate = 1e-2;
        c
    }

    fn toy_split() -> (Dataset, SplitSpec) {
        let ds = gaussian_toy_dataset([2.0, 1.0], 3.0, 400, 60, 1).unwrap();
        let spec = SplitSpec {
            protocol: Protocol::Designated { anomalous: vec![1] },
            validation: SplitSize::Fraction(0.2),
            test: SplitSize::Fraction(0.3),
            max_train: None,
            seed: 0,
        };
        (ds, spec)
    }

    #[test]
    fn deterministic_history() {
        let (ds, spec) = toy_split();
        let cfg = linear_cfg(0.5);
        let (_, a) = prepare_and_train(&cfg, &ds, &spec).unwrap();
        let (_, b) = prepare_and_train(&cfg, &ds, &spec).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.encoder.params(), b.encoder.params());
        assert_eq!(a.history.len(), 10);
    }

    #[test]
    fn selects_best_validation_checkpoint() {
        let (ds, spec) = toy_split();
        let (_, m) = prepare_and_train(&linear_cfg(0.5), &ds, &spec).unwrap();
        let vals: Vec<f64> = m.history.iter().map(|c| c.val_metric.unwrap()).collect();
        let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(vals[m.best_checkpoint_index], max);
        assert!(vals[..m.best_checkpoint_index].iter().all(|&v| v < max));
    }

    #[test]
    fn config_errors() {
        let (ds, spec) = toy_split();
        let mut cfg = linear_cfg(0.0);
        cfg.checkpoint_interval = 500;
        assert!(matches!(prepare_and_train(&cfg, &ds, &spec), Err(Error::Config(_))));
        let mut cfg = linear_cfg(0.0);
        cfg.encoder = vec![LayerSpec::dense_no_bias(3, 1)];
        assert!(matches!(prepare_and_train(&cfg, &ds, &spec), Err(Error::Dimension(_))));
        let mut sp = spec.clone();
        sp.validation = SplitSize::Count(0);
        assert!(matches!(prepare_and_train(&linear_cfg(0.0), &ds, &sp), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_names_the_batch() {
        let (ds, spec) = toy_split();
        let mut cfg = linear_cfg(0.0);
        cfg.learning_rate = 1e300;
        cfg.validation_metric = None;
        let err = prepare_and_train(&cfg, &ds, &spec).unwrap_err();
        assert!(matches!(err, Error::Training { .. }), "{err}");
    }

    #[test]
    fn seed_errors_are_annotated() {
        let (ds, spec) = toy_split();
        let mut cfg = linear_cfg(0.0);
        cfg.batch_size = 10_000;
        let err = run_experiment(&cfg, &ds, &spec, &[7]).unwrap_err();
        assert!(matches!(err, Error::Seeded { seed: 7, .. }));
        assert_eq!(err.kind(), "config");
    }
}
