//! Training samples built from bridges, and the rating classifiers fitted on
//! them.
//!
//! A sample concatenates the source item's content features, the source
//! rating, the target item's content features and, last, the target rating as
//! the class label.

mod logistic;
mod naive_bayes;

use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::dataset::{ContentCatalog, Rating};
use crate::error::{Error, Result};
use crate::matching::Bridge;

pub use logistic::{LogisticConfig, LogisticModel};
pub use naive_bayes::NaiveBayesModel;

/// Borrowed classifier input: one feature row with the class slot left empty.
#[derive(Debug, Clone, Copy)]
pub struct RowRef<'a> {
    pub source_features: &'a [f64],
    pub source_rating: Rating,
    pub target_features: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub source_features: Vec<f64>,
    pub source_rating: Rating,
    pub target_features: Vec<f64>,
    pub label: Rating,
}

impl TrainingSample {
    pub fn row(&self) -> RowRef<'_> {
        RowRef {
            source_features: &self.source_features,
            source_rating: self.source_rating,
            target_features: &self.target_features,
        }
    }

    /// Encoded width including the source rating and the label.
    pub fn width(&self) -> usize {
        self.source_features.len() + self.target_features.len() + 2
    }
}

/// One sample per bridge, in bridge order.
pub fn build_training_set(
    bridges: &[Bridge],
    source_content: &ContentCatalog,
    target_content: &ContentCatalog,
) -> Result<Vec<TrainingSample>> {
    bridges
        .iter()
        .map(|b| {
            Ok(TrainingSample {
                source_features: source_content.require(&b.source.item)?.to_vec(),
                source_rating: b.source.rating,
                target_features: target_content.require(&b.target.item)?.to_vec(),
                label: b.target.rating,
            })
        })
        .collect()
}

/// Per-class probabilities over target ratings `1..=k`; entry `j` is the
/// probability of rating `j + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionVector(Vec<f64>);

impl DistributionVector {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        let sum: f64 = probabilities.iter().sum();
        if probabilities.is_empty()
            || probabilities.iter().any(|p| !p.is_finite() || *p < 0.0)
            || (sum - 1.0).abs() > 1e-9
        {
            return Err(Error::Validation(format!("not a probability distribution: {probabilities:?}")));
        }
        Ok(DistributionVector(probabilities))
    }

    /// Normalizes log-scores with the usual max shift.
    pub(crate) fn from_log_scores(scores: &[f64]) -> Self {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exp.iter().sum();
        DistributionVector(exp.into_iter().map(|e| e / total).collect())
    }

    /// Σ j·P[j] straight from log-scores, without building the vector.
    pub(crate) fn expected_from_log_scores(scores: &[f64]) -> f64 {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut total, mut weighted) = (0.0, 0.0);
        for (j, s) in scores.iter().enumerate() {
            let e = (s - max).exp();
            total += e;
            weighted += (j + 1) as f64 * e;
        }
        weighted / total
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable rating; the smallest rating wins ties.
    pub fn argmax(&self) -> Rating {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = i;
            }
        }
        best as Rating + 1
    }
}

pub trait Classifier {
    fn classes(&self) -> usize;

    fn predict_distribution(&self, row: RowRef<'_>) -> Result<DistributionVector>;

    /// For each target vector, the expected rating averaged over the source
    /// rows. `sources` must not be empty.
    fn mean_expected_ratings(&self, sources: &[(&[f64], Rating)], targets: &[&[f64]]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(targets.len());
        for t in targets {
            let mut total = 0.0;
            for &(s, rating) in sources {
                let dist = self.predict_distribution(RowRef {
                    source_features: s,
                    source_rating: rating,
                    target_features: t,
                })?;
                total += dist
                    .probabilities()
                    .iter()
                    .enumerate()
                    .map(|(j, p)| (j + 1) as f64 * p)
                    .sum::<f64>();
            }
            out.push(total / sources.len() as f64);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    #[default]
    NaiveBayes,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub classifier: ClassifierKind,
    /// Equal-width bins per continuous feature (naive Bayes).
    pub bins: usize,
    pub min_samples: usize,
    pub logistic: LogisticConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            classifier: ClassifierKind::NaiveBayes,
            bins: 5,
            min_samples: 10,
            logistic: LogisticConfig::default(),
        }
    }
}

/// Shape of the inputs a model accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub source_dim: usize,
    pub target_dim: usize,
    /// Number of source rating values.
    pub source_classes: Rating,
    /// Number of target rating values, which are the classes.
    pub classes: Rating,
}

impl Schema {
    fn check(&self, row: RowRef<'_>) -> Result<()> {
        if row.source_features.len() != self.source_dim || row.target_features.len() != self.target_dim {
            return Err(Error::Validation(format!(
                "row has {}+{} features, model expects {}+{}",
                row.source_features.len(),
                row.target_features.len(),
                self.source_dim,
                self.target_dim
            )));
        }
        if row.source_rating < 1 || row.source_rating > self.source_classes {
            return Err(Error::Validation(format!(
                "source rating {} outside 1..={}",
                row.source_rating, self.source_classes
            )));
        }
        if row.source_features.iter().chain(row.target_features).any(|v| !v.is_finite()) {
            return Err(Error::Validation("row has non-finite features".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    NaiveBayes(NaiveBayesModel),
    Logistic(LogisticModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub schema: Schema,
    pub params: ModelParams,
}

impl Model {
    pub fn kind(&self) -> ClassifierKind {
        match self.params {
            ModelParams::NaiveBayes(_) => ClassifierKind::NaiveBayes,
            ModelParams::Logistic(_) => ClassifierKind::Logistic,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json()?;
        csvio::write_file(path, |w| writeln!(w, "{text}"))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }
}

impl Classifier for Model {
    fn classes(&self) -> usize {
        usize::from(self.schema.classes)
    }

    fn predict_distribution(&self, row: RowRef<'_>) -> Result<DistributionVector> {
        self.schema.check(row)?;
        Ok(match &self.params {
            ModelParams::NaiveBayes(nb) => nb.predict(&self.schema, row),
            ModelParams::Logistic(lr) => lr.predict(&self.schema, row),
        })
    }

    // Factors each logit into a source part and a target part so the cost per
    // (row, target) pair is a few additions instead of a full prediction.
    fn mean_expected_ratings(&self, sources: &[(&[f64], Rating)], targets: &[&[f64]]) -> Result<Vec<f64>> {
        if sources.is_empty() {
            return Err(Error::ColdStart("no source rows".into()));
        }
        let Some(first_target) = targets.first() else {
            return Ok(Vec::new());
        };
        for &(s, rating) in sources {
            self.schema.check(RowRef { source_features: s, source_rating: rating, target_features: first_target })?;
        }
        for t in targets {
            self.schema.check(RowRef { source_features: sources[0].0, source_rating: sources[0].1, target_features: t })?;
        }
        let classes = self.classes();
        let mut scores = vec![0.0; classes];
        let mut out = Vec::with_capacity(targets.len());
        match &self.params {
            ModelParams::NaiveBayes(nb) => {
                let parts: Vec<Vec<f64>> = sources.iter().map(|&(s, r)| nb.source_scores(s, r)).collect();
                for t in targets {
                    let tgt = nb.target_scores(&self.schema, t);
                    let mut total = 0.0;
                    for part in &parts {
                        for ((o, a), b) in scores.iter_mut().zip(part).zip(&tgt) {
                            *o = a + b;
                        }
                        total += DistributionVector::expected_from_log_scores(&scores);
                    }
                    out.push(total / parts.len() as f64);
                }
            }
            ModelParams::Logistic(lr) => {
                let parts: Vec<_> = sources.iter().map(|&(s, r)| lr.source_part(&self.schema, s, r)).collect();
                for t in targets {
                    let tgt = lr.standardize_target(t);
                    let mut total = 0.0;
                    for part in &parts {
                        part.logits(&tgt, &mut scores);
                        total += DistributionVector::expected_from_log_scores(&scores);
                    }
                    out.push(total / parts.len() as f64);
                }
            }
        }
        Ok(out)
    }
}

/// Fits a classifier whose classes are the target ratings `1..=target_k`.
pub fn train(samples: &[TrainingSample], source_k: Rating, target_k: Rating, config: &TrainConfig) -> Result<Model> {
    if samples.is_empty() || samples.len() < config.min_samples {
        return Err(Error::Training(format!(
            "{} training samples, at least {} required",
            samples.len(),
            config.min_samples.max(1)
        )));
    }
    if config.bins == 0 {
        return Err(Error::Config("bins must be positive".into()));
    }
    let schema = Schema {
        source_dim: samples[0].source_features.len(),
        target_dim: samples[0].target_features.len(),
        source_classes: source_k,
        classes: target_k,
    };
    for (i, s) in samples.iter().enumerate() {
        schema
            .check(s.row())
            .map_err(|e| Error::Validation(format!("sample {i}: {e}")))?;
        if s.label < 1 || s.label > target_k {
            return Err(Error::Validation(format!(
                "sample {i}: label {} outside 1..={target_k}",
                s.label
            )));
        }
    }
    let params = match config.classifier {
        ClassifierKind::NaiveBayes => ModelParams::NaiveBayes(NaiveBayesModel::fit(&schema, samples, config.bins)),
        ClassifierKind::Logistic => ModelParams::Logistic(LogisticModel::fit(&schema, samples, &config.logistic)),
    };
    Ok(Model { schema, params })
}

/// Number of samples per label, index 0 holding label 1.
pub fn class_counts(samples: &[TrainingSample], k: Rating) -> Vec<usize> {
    let mut counts = vec![0; usize::from(k)];
    for s in samples {
        if let Some(c) = counts.get_mut(usize::from(s.label).wrapping_sub(1)) {
            *c += 1;
        }
    }
    counts
}

pub fn write_training_csv<W: Write + ?Sized>(samples: &[TrainingSample], out: &mut W) -> io::Result<()> {
    let (n, m) = samples
        .first()
        .map_or((0, 0), |s| (s.source_features.len(), s.target_features.len()));
    let mut header: Vec<String> = (1..=n).map(|i| format!("src_f{i}")).collect();
    header.push("src_rating".into());
    header.extend((1..=m).map(|i| format!("tgt_f{i}")));
    header.push("label".into());
    writeln!(out, "{}", header.join(","))?;
    for s in samples {
        let mut fields: Vec<String> = s.source_features.iter().map(f64::to_string).collect();
        fields.push(s.source_rating.to_string());
        fields.extend(s.target_features.iter().map(f64::to_string));
        fields.push(s.label.to_string());
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

pub fn read_training_csv<R: Read>(input: R, name: &Path) -> Result<Vec<TrainingSample>> {
    let mut csv = csvio::from_reader(input, name);
    let header = csv.headers()?;
    let n = header.iter().take_while(|h| h.starts_with("src_f")).count();
    let m = header.len().saturating_sub(n + 2);
    let expected_ok = header.get(n).map(String::as_str) == Some("src_rating")
        && header.last().map(String::as_str) == Some("label")
        && header[n + 1..header.len() - 1].iter().all(|h| h.starts_with("tgt_f"));
    if header.len() < 2 || !expected_ok {
        return Err(csv.parse_error(1, "expected header `src_f*,src_rating,tgt_f*,label`"));
    }
    let mut samples = Vec::new();
    for (line, f) in csv.records()? {
        if f.len() != header.len() {
            return Err(csv.parse_error(line, format!("expected {} fields", header.len())));
        }
        let float = |raw: &str| -> Result<f64> {
            raw.parse().map_err(|_| csv.parse_error(line, format!("`{raw}` is not a number")))
        };
        let int = |raw: &str| -> Result<Rating> {
            raw.parse().map_err(|_| csv.parse_error(line, format!("`{raw}` is not a rating")))
        };
        samples.push(TrainingSample {
            source_features: f[..n].iter().map(|v| float(v)).collect::<Result<_>>()?,
            source_rating: int(&f[n])?,
            target_features: f[n + 1..n + 1 + m].iter().map(|v| float(v)).collect::<Result<_>>()?,
            label: int(&f[n + 1 + m])?,
        });
    }
    Ok(samples)
}

pub fn save_training(samples: &[TrainingSample], path: &Path) -> Result<()> {
    csvio::write_file(path, |w| write_training_csv(samples, w))
}

pub fn load_training(path: &Path) -> Result<Vec<TrainingSample>> {
    read_training_csv(csvio::open(path)?, path)
}
