use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::seeded_rng;

use super::Dataset;

/// Which labels count as normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Protocol {
    /// One class is normal, every other label is anomalous.
    OneVsRest { normal: i64 },
    /// The listed labels are anomalous, every other label is normal.
    Designated { anomalous: Vec<i64> },
}

/// Size of a held-out split, as a fraction of the whole dataset (floored)
/// or an absolute count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SplitSize {
    Fraction(f64),
    Count(usize),
}

impl SplitSize {
    fn resolve(self, n: usize) -> Result<usize> {
        match self {
            SplitSize::Fraction(f) if (0.0..1.0).contains(&f) => Ok((f * n as f64).floor() as usize),
            SplitSize::Fraction(f) => Err(Error::Config(format!("split fraction {f} outside [0, 1)"))),
            SplitSize::Count(c) => Ok(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub protocol: Protocol,
    pub validation: SplitSize,
    pub test: SplitSize,
    /// Keeps at most this many training normals (the first ones in shuffled
    /// order).
    pub max_train: Option<usize>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn is_anomalous(&self, label: i64) -> bool {
        match &self.protocol {
            Protocol::OneVsRest { normal } => label != *normal,
            Protocol::Designated { anomalous } => anomalous.contains(&label),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StandardizeMode {
    /// One mean and std over every training value (image pixels).
    Global,
    /// Per-column mean and std (tabular features).
    PerFeature,
}

/// Affine transform `(x − mean) / std` fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mode: StandardizeMode,
    /// One entry in global mode, one per feature otherwise.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardization {
    pub fn fit(train: &Matrix, mode: StandardizeMode) -> Result<Self> {
        if train.rows() == 0 || train.cols() == 0 {
            return Err(Error::State("cannot standardize with an empty training split".into()));
        }
        let clamp = |s: f64| if s > 0.0 { s } else { 1.0 };
        Ok(match mode {
            StandardizeMode::Global => {
                let v = train.as_slice();
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                Self {
                    mode,
                    mean: vec![mean],
                    std: vec![clamp(var.sqrt())],
                }
            }
            StandardizeMode::PerFeature => {
                let mean = train.column_means();
                let n = train.rows() as f64;
                let mut var = vec![0.0; train.cols()];
                for r in 0..train.rows() {
                    for (j, x) in train.row(r).iter().enumerate() {
                        var[j] += (x - mean[j]) * (x - mean[j]);
                    }
                }
                Self {
                    mode,
                    mean,
                    std: var.into_iter().map(|v| clamp((v / n).sqrt())).collect(),
                }
            }
        })
    }

    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        let mut out = m.clone();
        match self.mode {
            StandardizeMode::Global => {
                let (mu, sd) = (self.mean[0], self.std[0]);
                out.as_mut_slice().iter_mut().for_each(|x| *x = (*x - mu) / sd);
            }
            StandardizeMode::PerFeature => {
                if m.cols() != self.mean.len() {
                    return Err(Error::dim(format!(
                        "standardization fitted on {} features, data has {}",
                        self.mean.len(),
                        m.cols()
                    )));
                }
                for r in 0..out.rows() {
                    for (j, x) in out.row_mut(r).iter_mut().enumerate() {
                        *x = (*x - self.mean[j]) / self.std[j];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Train / validation / test partition of one dataset.
///
/// Validation and test labels are binary (1 = anomalous); train keeps the
/// original labels, all of which are normal.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub standardization: Option<Standardization>,
}

/// Seeded shuffle, then test and validation from the full pool, then the
/// remaining normal samples as train.
pub fn one_class_split(ds: &Dataset, spec: &SplitSpec) -> Result<SplitResult> {
    let present = |l: i64| ds.labels.contains(&l);
    match &spec.protocol {
        Protocol::OneVsRest { normal } if !present(*normal) => {
            return Err(Error::Config(format!("normal class {normal} does not occur in {}", ds.source_name)));
        }
        Protocol::Designated { anomalous } => {
            if let Some(l) = anomalous.iter().find(|l| !present(**l)) {
                return Err(Error::Config(format!("anomalous class {l} does not occur in {}", ds.source_name)));
            }
        }
        _ => {}
    }
    let n = ds.sample_count();
    let n_test = spec.test.resolve(n)?;
    let n_val = spec.validation.resolve(n)?;
    if n_test + n_val >= n {
        return Err(Error::Config(format!(
            "test ({n_test}) and validation ({n_val}) leave nothing of {n} samples to train on"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded_rng(spec.seed));
    let test_indices = perm[..n_test].to_vec();
    let validation_indices = perm[n_test..n_test + n_val].to_vec();
    let mut train_indices: Vec<usize> = perm[n_test + n_val..]
        .iter()
        .copied()
        .filter(|&i| !spec.is_anomalous(ds.labels[i]))
        .collect();
    if let Some(cap) = spec.max_train {
        train_indices.truncate(cap);
    }
    if train_indices.is_empty() {
        return Err(Error::Config("no normal samples left for training".into()));
    }
    let binary = |idx: &[usize]| -> Result<Dataset> {
        let mut d = ds.subset(idx)?;
        d.labels = d.labels.iter().map(|&l| spec.is_anomalous(l) as i64).collect();
        Ok(d)
    };
    Ok(SplitResult {
        train: ds.subset(&train_indices)?,
        validation: binary(&validation_indices)?,
        test: binary(&test_indices)?,
        train_indices,
        validation_indices,
        test_indices,
        standardization: None,
    })
}

/// Fits the transform on train and applies it to all three splits.
pub fn standardize(split: SplitResult, mode: StandardizeMode) -> Result<SplitResult> {
    if split.standardization.is_some() {
        return Err(Error::State("split is already standardized".into()));
    }
    let stats = Standardization::fit(&split.train.features, mode)?;
    let fix = |mut d: Dataset| -> Result<Dataset> {
        d.features = stats.apply(&d.features)?;
        Ok(d)
    };
    Ok(SplitResult {
        train: fix(split.train)?,
        validation: fix(split.validation)?,
        test: fix(split.test)?,
        standardization: Some(stats.clone()),
        ..split
    })
}

/// Seeded stream of training batches. Each batch is a uniform subset drawn
/// without replacement; batches are drawn independently of one another.
#[derive(Debug)]
pub struct BatchStream<'a> {
    train: &'a Matrix,
    batch_size: usize,
    remaining: usize,
    rng: crate::rng::SeededRng,
}

impl<'a> BatchStream<'a> {
    pub fn new(train: &'a Matrix, batch_size: usize, batch_count: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || batch_size > train.rows() {
            return Err(Error::Config(format!(
                "batch size {batch_size} invalid for {} training samples",
                train.rows()
            )));
        }
        Ok(Self {
            train,
            batch_size,
            remaining: batch_count,
            rng: seeded_rng(seed),
        })
    }

    /// Next batch's row indices into the training matrix.
    pub fn next_indices(&mut self) -> Option<Vec<usize>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(index::sample(&mut self.rng, self.train.rows(), self.batch_size).into_vec())
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Matrix;

    fn next(&mut self) -> Option<Matrix> {
        self.next_indices().map(|idx| self.train.select_rows(&idx))
    }
}

pub fn batch_stream(train: &Dataset, batch_size: usize, batch_count: usize, seed: u64) -> Result<BatchStream<'_>> {
    BatchStream::new(&train.features, batch_size, batch_count, seed)
}
