//! Multinomial logistic regression with source x target cross terms.
//!
//! Naive Bayes scores the source and the target half of a row independently,
//! so it cannot express "this target item suits users of that source item".
//! This model adds, per source rating value, the outer product of the
//! standardized source and target features, which lets the target score
//! depend on the source side.

use serde::{Deserialize, Serialize};

use super::{DistributionVector, RowRef, Schema, TrainingSample};
use crate::dataset::Rating;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            iterations: 400,
            learning_rate: 0.5,
            l2: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub source_mean: Vec<f64>,
    pub source_scale: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_scale: Vec<f64>,
    /// One weight vector per class over the expanded feature layout.
    pub weights: Vec<Vec<f64>>,
}

struct Layout {
    n: usize,
    m: usize,
    ks: usize,
}

impl Layout {
    fn new(schema: &Schema) -> Self {
        Layout {
            n: schema.source_dim,
            m: schema.target_dim,
            ks: usize::from(schema.source_classes),
        }
    }

    fn dim(&self) -> usize {
        1 + self.n + self.ks + self.m + self.ks * self.n * self.m
    }

    /// Bias, source features, source rating one-hot, target features, then the
    /// cross block of the active source rating.
    fn expand(&self, s: &[f64], rating: usize, t: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.dim(), 0.0);
        out[0] = 1.0;
        out[1..1 + self.n].copy_from_slice(s);
        out[1 + self.n + rating] = 1.0;
        let t_at = 1 + self.n + self.ks;
        out[t_at..t_at + self.m].copy_from_slice(t);
        let cross_at = t_at + self.m + rating * self.n * self.m;
        for (i, si) in s.iter().enumerate() {
            for (j, tj) in t.iter().enumerate() {
                out[cross_at + i * self.m + j] = si * tj;
            }
        }
    }
}

fn standardizer<'a>(rows: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let count = rows.clone().count().max(1) as f64;
    let mut mean = vec![0.0; dim];
    for r in rows.clone() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; dim];
    for r in rows {
        for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|v| {
            let sd = (v / count).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

fn standardize(x: &[f64], mean: &[f64], scale: &[f64]) -> Vec<f64> {
    x.iter().zip(mean).zip(scale).map(|((v, m), s)| (v - m) / s).collect()
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    z.iter_mut().for_each(|v| *v /= total);
}

impl LogisticModel {
    pub(super) fn fit(schema: &Schema, samples: &[TrainingSample], config: &LogisticConfig) -> Self {
        let layout = Layout::new(schema);
        let (source_mean, source_scale) =
            standardizer(samples.iter().map(|s| s.source_features.as_slice()), layout.n);
        let (target_mean, target_scale) =
            standardizer(samples.iter().map(|s| s.target_features.as_slice()), layout.m);

        let dim = layout.dim();
        let mut design = Vec::with_capacity(samples.len());
        let mut buf = Vec::new();
        for s in samples {
            let src = standardize(&s.source_features, &source_mean, &source_scale);
            let tgt = standardize(&s.target_features, &target_mean, &target_scale);
            layout.expand(&src, usize::from(s.source_rating) - 1, &tgt, &mut buf);
            design.push(buf.clone());
        }

        let classes = usize::from(schema.classes);
        let mut weights = vec![vec![0.0; dim]; classes];
        let mut grad = vec![vec![0.0; dim]; classes];
        let mut probs = vec![0.0; classes];
        let count = samples.len() as f64;
        for _ in 0..config.iterations {
            grad.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            for (x, s) in design.iter().zip(samples) {
                for (p, w) in probs.iter_mut().zip(&weights) {
                    *p = dot(w, x);
                }
                softmax_in_place(&mut probs);
                let label = usize::from(s.label) - 1;
                for c in 0..classes {
                    let err = probs[c] - if c == label { 1.0 } else { 0.0 };
                    if err != 0.0 {
                        for (g, xi) in grad[c].iter_mut().zip(x) {
                            *g += err * xi;
                        }
                    }
                }
            }
            for (w, g) in weights.iter_mut().zip(&grad) {
                for (i, (wi, gi)) in w.iter_mut().zip(g).enumerate() {
                    let penalty = if i == 0 { 0.0 } else { config.l2 * *wi };
                    *wi -= config.learning_rate * (gi / count + penalty);
                }
            }
        }
        LogisticModel {
            source_mean,
            source_scale,
            target_mean,
            target_scale,
            weights,
        }
    }

    pub(super) fn predict(&self, schema: &Schema, row: RowRef<'_>) -> DistributionVector {
        let layout = Layout::new(schema);
        let src = standardize(row.source_features, &self.source_mean, &self.source_scale);
        let tgt = standardize(row.target_features, &self.target_mean, &self.target_scale);
        let mut x = Vec::with_capacity(layout.dim());
        layout.expand(&src, usize::from(row.source_rating) - 1, &tgt, &mut x);
        let scores: Vec<f64> = self.weights.iter().map(|w| dot(w, &x)).collect();
        DistributionVector::from_log_scores(&scores)
    }
}

/// Per-class logits of one source row as `offset + slope . target`, with the
/// target standardized by [`LogisticModel::standardize_target`].
pub(super) struct SourcePart {
    pub offset: Vec<f64>,
    pub slope: Vec<Vec<f64>>,
}

impl SourcePart {
    pub fn logits(&self, target: &[f64], out: &mut [f64]) {
        for ((o, a), v) in out.iter_mut().zip(&self.offset).zip(&self.slope) {
            *o = a + dot(v, target);
        }
    }
}

impl LogisticModel {
    pub(super) fn standardize_target(&self, t: &[f64]) -> Vec<f64> {
        standardize(t, &self.target_mean, &self.target_scale)
    }

    pub(super) fn source_part(&self, schema: &Schema, s: &[f64], rating: Rating) -> SourcePart {
        let layout = Layout::new(schema);
        let (n, m) = (layout.n, layout.m);
        let src = standardize(s, &self.source_mean, &self.source_scale);
        let r = usize::from(rating) - 1;
        let t_at = 1 + n + layout.ks;
        let cross_at = t_at + m + r * n * m;
        let mut offset = Vec::with_capacity(self.weights.len());
        let mut slope = Vec::with_capacity(self.weights.len());
        for w in &self.weights {
            offset.push(w[0] + dot(&w[1..1 + n], &src) + w[1 + n + r]);
            let mut v = w[t_at..t_at + m].to_vec();
            for (i, si) in src.iter().enumerate() {
                let block = &w[cross_at + i * m..cross_at + (i + 1) * m];
                for (vj, wj) in v.iter_mut().zip(block) {
                    *vj += si * wj;
                }
            }
            slope.push(v);
        }
        SourcePart { offset, slope }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
