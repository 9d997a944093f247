//! Categorical naive Bayes over binned content features.
//!
//! Continuous features are cut into equal-width bins fitted on the training
//! range; the source rating is its own categorical feature. Counts are smoothed
//! with add-one (Laplace) smoothing. A bin nobody in training fell into is
//! skipped at prediction time, so that feature leaves the posterior unchanged.

use serde::{Deserialize, Serialize};

use super::{DistributionVector, RowRef, Schema, TrainingSample};
use crate::dataset::Rating;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    /// `bins + 1` edges per continuous feature: source features, then target
    /// features.
    pub bin_edges: Vec<Vec<f64>>,
    /// Training samples per class.
    pub class_counts: Vec<u64>,
    /// `counts[class][feature][bin]`. Features are the source features, the
    /// source rating, then the target features.
    pub counts: Vec<Vec<Vec<u64>>>,
}

fn equal_width_edges(values: impl Iterator<Item = f64>, bins: usize) -> Vec<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    (0..=bins)
        .map(|j| if j == bins { hi } else { lo + (hi - lo) * j as f64 / bins as f64 })
        .collect()
}

/// Bin of `x` given `bins + 1` edges; values outside the range fall into the
/// first or last bin.
pub(crate) fn bin_of(edges: &[f64], x: f64) -> usize {
    let bins = edges.len() - 1;
    edges[1..bins].partition_point(|&e| e <= x)
}

impl NaiveBayesModel {
    pub(super) fn fit(schema: &Schema, samples: &[TrainingSample], bins: usize) -> Self {
        let n = schema.source_dim;
        let mut bin_edges = Vec::with_capacity(n + schema.target_dim);
        for f in 0..n {
            bin_edges.push(equal_width_edges(samples.iter().map(|s| s.source_features[f]), bins));
        }
        for f in 0..schema.target_dim {
            bin_edges.push(equal_width_edges(samples.iter().map(|s| s.target_features[f]), bins));
        }
        let widths = feature_widths(schema, bins);
        let classes = usize::from(schema.classes);
        let mut model = NaiveBayesModel {
            bin_edges,
            class_counts: vec![0; classes],
            counts: vec![widths.iter().map(|&w| vec![0; w]).collect(); classes],
        };
        for s in samples {
            let c = usize::from(s.label) - 1;
            model.class_counts[c] += 1;
            for (f, b) in model.encode(schema, s.row()).into_iter().enumerate() {
                model.counts[c][f][b] += 1;
            }
        }
        model
    }

    fn encode_source(&self, source_features: &[f64], source_rating: Rating) -> Vec<usize> {
        let mut out: Vec<usize> = source_features
            .iter()
            .enumerate()
            .map(|(f, &x)| bin_of(&self.bin_edges[f], x))
            .collect();
        out.push(usize::from(source_rating) - 1);
        out
    }

    fn encode_target(&self, schema: &Schema, target_features: &[f64]) -> Vec<usize> {
        let n = schema.source_dim;
        target_features
            .iter()
            .enumerate()
            .map(|(f, &x)| bin_of(&self.bin_edges[n + f], x))
            .collect()
    }

    fn encode(&self, schema: &Schema, row: RowRef<'_>) -> Vec<usize> {
        let mut out = self.encode_source(row.source_features, row.source_rating);
        out.extend(self.encode_target(schema, row.target_features));
        out
    }

    fn log_prior(&self) -> Vec<f64> {
        let total: u64 = self.class_counts.iter().sum();
        let classes = self.class_counts.len() as f64;
        self.class_counts
            .iter()
            .map(|&nc| ((nc as f64 + 1.0) / (total as f64 + classes)).ln())
            .collect()
    }

    /// Per-class log-likelihood of the encoded features starting at feature
    /// index `first`.
    fn log_likelihood(&self, first: usize, bins: &[usize]) -> Vec<f64> {
        let classes = self.class_counts.len();
        let mut out = vec![0.0; classes];
        for (offset, &b) in bins.iter().enumerate() {
            let f = first + offset;
            let mass: u64 = (0..classes).map(|k| self.counts[k][f][b]).sum();
            if mass == 0 {
                continue;
            }
            for (c, score) in out.iter_mut().enumerate() {
                let nc = self.class_counts[c] as f64;
                let width = self.counts[c][f].len() as f64;
                *score += ((self.counts[c][f][b] as f64 + 1.0) / (nc + width)).ln();
            }
        }
        out
    }

    pub(super) fn predict(&self, schema: &Schema, row: RowRef<'_>) -> DistributionVector {
        let bins = self.encode(schema, row);
        let scores: Vec<f64> = self
            .log_prior()
            .iter()
            .zip(self.log_likelihood(0, &bins))
            .map(|(p, l)| p + l)
            .collect();
        DistributionVector::from_log_scores(&scores)
    }

    /// Per-class log-scores split into a source part (prior included) and a
    /// target part that add up to the full posterior scores.
    pub(super) fn source_scores(&self, source_features: &[f64], source_rating: Rating) -> Vec<f64> {
        let bins = self.encode_source(source_features, source_rating);
        self.log_prior()
            .iter()
            .zip(self.log_likelihood(0, &bins))
            .map(|(p, l)| p + l)
            .collect()
    }

    pub(super) fn target_scores(&self, schema: &Schema, target_features: &[f64]) -> Vec<f64> {
        let bins = self.encode_target(schema, target_features);
        self.log_likelihood(schema.source_dim + 1, &bins)
    }
}

fn feature_widths(schema: &Schema, bins: usize) -> Vec<usize> {
    let mut widths = vec![bins; schema.source_dim];
    widths.push(usize::from(schema.source_classes));
    widths.extend(std::iter::repeat(bins).take(schema.target_dim));
    widths
}
