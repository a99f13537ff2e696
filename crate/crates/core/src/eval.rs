//! ROC AUC, F1 at a fixed anomaly rate, and per-seed aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scores with binary labels (1 = anomalous).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::dim(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Metric(format!("label {l} is not binary")));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Metric("scores contain NaN".into()));
        }
        Ok(Self { scores, labels })
    }

    /// Builds from integer labels where any nonzero value is anomalous.
    pub fn from_labels(scores: Vec<f64>, labels: &[i64]) -> Result<Self> {
        Self::new(scores, labels.iter().map(|&l| (l != 0) as u8).collect())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn anomaly_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Area under the ROC curve as the Mann-Whitney statistic, with ties
/// counted one half.
pub fn roc_auc(s: &ScoredSet) -> Result<f64> {
    let pos = s.anomaly_count();
    let neg = s.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(format!(
            "AUC needs both classes ({pos} anomalous, {neg} normal)"
        )));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]));
    // Counts pairs (normal below anomaly) group by group: each tie group
    // contributes its anomalies × normals seen so far, plus half of the
    // within-group pairs.
    let mut normals_below = 0u64;
    let mut twice_wins = 0u64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut gp, mut gn) = (0u64, 0u64);
        while j < order.len() && s.scores[order[j]] == s.scores[order[i]] {
            if s.labels[order[j]] == 1 {
                gp += 1;
            } else {
                gn += 1;
            }
            j += 1;
        }
        twice_wins += 2 * gp * normals_below + gp * gn;
        normals_below += gn;
        i = j;
    }
    Ok(twice_wins as f64 / (2.0 * pos as f64 * neg as f64))
}

/// F1 after labeling the top `⌈rate·n⌉` scores anomalous. Ties in score are
/// broken by lower index first.
pub fn f1_at_rate(s: &ScoredSet, anomaly_rate: f64) -> Result<f64> {
    if !(anomaly_rate > 0.0 && anomaly_rate < 1.0) {
        return Err(Error::Metric(format!("anomaly rate {anomaly_rate} outside (0, 1)")));
    }
    if s.is_empty() {
        return Err(Error::Metric("F1 of an empty set".into()));
    }
    let k = ((anomaly_rate * s.len() as f64).ceil() as usize).min(s.len());
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.scores[b].total_cmp(&s.scores[a]).then(a.cmp(&b)));
    let tp = order[..k].iter().filter(|&&i| s.labels[i] == 1).count() as f64;
    let predicted = k as f64;
    let actual = s.anomaly_count() as f64;
    if tp == 0.0 {
        return Ok(0.0);
    }
    let precision = tp / predicted;
    let recall = tp / actual;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Mean and sample standard deviation over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub fn aggregate(per_seed: &[f64]) -> Result<MetricSummary> {
    if per_seed.is_empty() {
        return Err(Error::Metric("cannot aggregate zero values".into()));
    }
    let n = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / n;
    let std = if per_seed.len() < 2 {
        0.0
    } else {
        (per_seed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(MetricSummary {
        per_seed: per_seed.to_vec(),
        mean,
        std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(scores: &[f64], labels: &[u8]) -> ScoredSet {
        ScoredSet::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn auc_extremes() {
        assert_eq!(roc_auc(&set(&[0.1, 0.2, 0.9], &[0, 0, 1])).unwrap(), 1.0);
        assert_eq!(roc_auc(&set(&[0.5; 4], &[0, 1, 0, 1])).unwrap(), 0.5);
        assert_eq!(roc_auc(&set(&[0.9, 0.1], &[0, 1])).unwrap(), 0.0);
        assert!(matches!(roc_auc(&set(&[0.1, 0.2], &[1, 1])), Err(Error::Metric(_))));
    }

    #[test]
    fn f1_cases() {
        let mut scores: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mut labels = vec![0u8; 20];
        labels[17..].fill(1);
        assert_eq!(f1_at_rate(&set(&scores, &labels), 0.15).unwrap(), 1.0);
        scores.reverse();
        assert_eq!(f1_at_rate(&set(&scores, &labels), 0.15).unwrap(), 0.0);
        assert!(f1_at_rate(&set(&scores, &labels), 1.0).is_err());
    }

    #[test]
    fn f1_tie_break_prefers_lower_index() {
        // k = 1; both score 1.0, index 0 wins the tie.
        let s = set(&[1.0, 1.0, 0.0], &[1, 0, 0]);
        assert_eq!(f1_at_rate(&s, 0.2).unwrap(), 1.0);
        let s = set(&[1.0, 1.0, 0.0], &[0, 1, 0]);
        assert_eq!(f1_at_rate(&s, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn aggregate_cases() {
        let a = aggregate(&[0.9, 0.9, 0.9]).unwrap();
        assert!((a.mean - 0.9).abs() < 1e-15);
        assert!(a.std < 1e-15);
        let b = aggregate(&[0.0, 1.0]).unwrap();
        assert_eq!(b.mean, 0.5);
        assert!((b.std - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(aggregate(&[]).is_err());
    }
}
