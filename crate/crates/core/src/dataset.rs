//! Labeled feature matrices shared by ranking, balancing, the SVM and
//! evaluation. Rows are samples; `EpisodeLabel::Vf` is the positive class.

use crate::error::{Error, Result};
use crate::wfdb::EpisodeLabel;

/// Checks that `x` is non-empty and rectangular and returns the row width.
pub fn feature_dim(x: &[Vec<f64>]) -> Result<usize> {
    let first = x.first().ok_or(Error::EmptyInput("feature matrix"))?;
    for row in x {
        if row.len() != first.len() {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                actual: row.len(),
            });
        }
    }
    Ok(first.len())
}

/// `(positives, negatives)`.
pub fn class_counts(y: &[EpisodeLabel]) -> (usize, usize) {
    let pos = y.iter().filter(|l| **l == EpisodeLabel::Vf).count();
    (pos, y.len() - pos)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<EpisodeLabel>,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<EpisodeLabel>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                actual: labels.len(),
            });
        }
        if !features.is_empty() {
            feature_dim(&features)?;
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Keeps only the given columns, in the given order.
    pub fn project(&self, columns: &[usize]) -> Self {
        Self {
            features: self
                .features
                .iter()
                .map(|row| columns.iter().map(|&c| row[c]).collect())
                .collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn indices_of(&self, label: EpisodeLabel) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == label).collect()
    }
}
