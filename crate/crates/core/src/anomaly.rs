//! Anomaly-based detection: σ-scaled Euclidean distance from the benign
//! profile, thresholded at a benign-score quantile.

use thiserror::Error;

use crate::dataset::{Dataset, FlowRecord};

pub const DEFAULT_QUANTILE: f64 = 0.995;

#[derive(Debug, Error, PartialEq)]
pub enum AnomalyError {
    #[error("profile fit needs at least 2 benign records, got {0}")]
    TooFewRecords(usize),
    #[error("record {row}: non-finite feature at position {position}")]
    NonFinite { row: usize, position: usize },
    #[error("feature arity {got} does not match profile arity {expected}")]
    Arity { expected: usize, got: usize },
    #[error("quantile must lie in (0, 1), got {0}")]
    Quantile(f64),
    #[error("threshold has not been fitted")]
    NoThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold {
    pub value: f64,
    pub quantile: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyProfile {
    pub mean: Vec<f64>,
    /// Per-feature standard deviation; zeros are stored as 1.0.
    pub scale: Vec<f64>,
    pub threshold: Option<Threshold>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbdVerdict {
    pub detected: bool,
    pub score: f64,
}

impl AnomalyProfile {
    /// Fit μ and σ (population form) over the numeric features of
    /// preprocessed benign records.
    pub fn fit(benign_train: &Dataset) -> Result<Self, AnomalyError> {
        let rows: Vec<Vec<f64>> = benign_train.records.iter().map(FlowRecord::numeric_features).collect();
        Self::fit_rows(&rows)
    }

    pub fn fit_rows(rows: &[Vec<f64>]) -> Result<Self, AnomalyError> {
        if rows.len() < 2 {
            return Err(AnomalyError::TooFewRecords(rows.len()));
        }
        let d = rows[0].len();
        for (row, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(AnomalyError::Arity { expected: d, got: r.len() });
            }
            if let Some(position) = r.iter().position(|v| !v.is_finite()) {
                return Err(AnomalyError::NonFinite { row, position });
            }
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale, threshold: None })
    }

    pub fn arity(&self) -> usize {
        self.mean.len()
    }

    pub fn score(&self, features: &[f64]) -> Result<f64, AnomalyError> {
        if features.len() != self.mean.len() {
            return Err(AnomalyError::Arity { expected: self.mean.len(), got: features.len() });
        }
        let sum: f64 = features
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((x, m), s)| {
                let z = (x - m) / s;
                z * z
            })
            .sum();
        Ok(sum.sqrt())
    }

    pub fn score_record(&self, record: &FlowRecord) -> Result<f64, AnomalyError> {
        self.score(&record.numeric_features())
    }

    /// Set θ to the nearest-rank `quantile` of the benign training scores.
    pub fn fit_threshold(&mut self, benign_train: &Dataset, quantile: f64) -> Result<(), AnomalyError> {
        let scores = benign_train
            .records
            .iter()
            .map(|r| self.score_record(r))
            .collect::<Result<Vec<f64>, _>>()?;
        self.fit_threshold_scores(scores, quantile)
    }

    pub fn fit_threshold_scores(&mut self, scores: Vec<f64>, quantile: f64) -> Result<(), AnomalyError> {
        let value = nearest_rank(scores, quantile)?;
        self.threshold = Some(Threshold { value, quantile });
        Ok(())
    }

    pub fn threshold_value(&self) -> Result<f64, AnomalyError> {
        self.threshold.map(|t| t.value).ok_or(AnomalyError::NoThreshold)
    }

    /// Flags the flow when its score is strictly above θ.
    pub fn detect_abd(&self, features: &[f64]) -> Result<AbdVerdict, AnomalyError> {
        let theta = self.threshold_value()?;
        let score = self.score(features)?;
        Ok(AbdVerdict { detected: score > theta, score })
    }

    pub fn detect_record(&self, record: &FlowRecord) -> Result<AbdVerdict, AnomalyError> {
        self.detect_abd(&record.numeric_features())
    }
}

/// Nearest-rank quantile: the `ceil(q·N)`-th smallest value (rank ≥ 1).
pub fn nearest_rank(mut values: Vec<f64>, q: f64) -> Result<f64, AnomalyError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(AnomalyError::Quantile(q));
    }
    if values.is_empty() {
        return Err(AnomalyError::TooFewRecords(0));
    }
    values.sort_by(f64::total_cmp);
    // q·N is computed in floating point; 0.95·100 must give rank 95, not 96.
    let rank = ((q * values.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    Ok(values[rank.min(values.len()) - 1])
}
