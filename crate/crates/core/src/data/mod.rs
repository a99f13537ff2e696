//! Dataset loading, one-class splits, standardization and batch sampling.

mod delimited;
mod idx;
mod split;

pub use delimited::{load_delimited, load_delimited_with, parse_delimited, DelimitedOptions, MISSING_MARKER};
pub use idx::{load_idx, load_idx_head, parse_idx_images, parse_idx_labels, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use split::{
    batch_stream, one_class_split, standardize, BatchStream, Protocol, SplitResult, SplitSize,
    SplitSpec, StandardizeMode, Standardization,
};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Labeled samples, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<i64>,
    pub source_name: String,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<i64>, source_name: String) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::dim(format!(
                "{} labels for {} samples",
                labels.len(),
                features.rows()
            )));
        }
        if !features.is_finite() {
            return Err(Error::Numeric(format!("{source_name} contains non-finite features")));
        }
        Ok(Self {
            features,
            labels,
            source_name,
        })
    }

    pub fn sample_count(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_count(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.sample_count()) {
            return Err(Error::dim(format!("index {bad} out of {} samples", self.sample_count())));
        }
        Ok(Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            source_name: self.source_name.clone(),
        })
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<i64> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}
