//! The JSON pipeline configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use bgm_core::eval::{BenchmarkConfig, BgmConfig, Method, SynthConfig, DEFAULT_N_VALUES};
use bgm_core::recommend::DEFAULT_NEIGHBORS;
use bgm_core::training::{ClassifierKind, LogisticConfig, TrainConfig};
use bgm_core::{Error, Rating, Result, UserId};
use serde::Deserialize;

/// Input files and rating scale of one domain. Exactly one of `ratings` and
/// `events` must be set.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub ratings: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub content: Option<PathBuf>,
    pub k: Rating,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: Option<DomainConfig>,
    pub target: Option<DomainConfig>,
    #[serde(default)]
    pub event_weights: BTreeMap<String, Rating>,
    pub threshold: f64,
    #[serde(default = "default_tau_sim")]
    pub tau_sim: f64,
    #[serde(default = "default_coverage")]
    pub coverage: f64,
    /// Neighborhood size of the KNN baseline.
    #[serde(default = "default_neighbors", rename = "K")]
    pub neighbors: usize,
    #[serde(default)]
    pub classifier: ClassifierKind,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_min_samples")]
    pub min_samples: usize,
    #[serde(default)]
    pub logistic: LogisticConfig,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub unique_tree_pairing: bool,
    #[serde(default)]
    pub drop_singletons: bool,
    /// List length of the `recommend` stage.
    #[serde(default = "default_top_n")]
    pub top_n: usize,
    /// Users to recommend for; by default every source user without target
    /// ratings.
    pub users: Option<Vec<UserId>>,
    #[serde(default)]
    pub note: Option<String>,
    /// Generator settings for `synth`; its seed is taken from `seed`.
    #[serde(default)]
    pub synth: Option<SynthConfig>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_tau_sim() -> f64 {
    bgm_core::eval::DEFAULT_TAU_SIM
}
fn default_coverage() -> f64 {
    bgm_core::eval::DEFAULT_COVERAGE
}
fn default_neighbors() -> usize {
    DEFAULT_NEIGHBORS
}
fn default_bins() -> usize {
    TrainConfig::default().bins
}
fn default_min_samples() -> usize {
    TrainConfig::default().min_samples
}
fn default_n_values() -> Vec<usize> {
    DEFAULT_N_VALUES.to_vec()
}
fn default_folds() -> usize {
    10
}
fn default_methods() -> Vec<Method> {
    BenchmarkConfig::default().methods
}
fn default_top_n() -> usize {
    10
}
fn default_output() -> PathBuf {
    PathBuf::from("bgm-out")
}

impl PipelineConfig {
    /// Reads and validates `path`. Relative paths inside the document are
    /// resolved against the directory holding it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let mut config: PipelineConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in [self.source.as_mut(), self.target.as_mut()].into_iter().flatten() {
            for p in [d.ratings.as_mut(), d.events.as_mut(), d.content.as_mut()].into_iter().flatten() {
                fix(p);
            }
        }
        fix(&mut self.output);
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold = {} outside [0, 1]", self.threshold)));
        }
        if self.bins == 0 {
            return Err(Error::Config("bins must be at least 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config(format!("folds = {} must be at least 2", self.folds)));
        }
        if self.top_n == 0 {
            return Err(Error::Config("top_n must be at least 1".into()));
        }
        for (name, d) in [("source", &self.source), ("target", &self.target)] {
            if let Some(d) = d {
                if d.k == 0 {
                    return Err(Error::Config(format!("{name}.k must be at least 1")));
                }
                if d.ratings.is_some() == d.events.is_some() {
                    return Err(Error::Config(format!("{name}: set exactly one of `ratings` and `events`")));
                }
            }
        }
        if let Some(synth) = &self.synth {
            synth.validate()?;
        }
        self.benchmark().validate()
    }

    pub fn domain(&self, name: &str) -> Result<&DomainConfig> {
        let d = if name == "source" { &self.source } else { &self.target };
        d.as_ref().ok_or_else(|| Error::Config(format!("missing field `{name}`")))
    }

    pub fn domains(&self) -> Vec<(&'static str, &DomainConfig)> {
        [("source", &self.source), ("target", &self.target)]
            .into_iter()
            .filter_map(|(n, d)| d.as_ref().map(|d| (n, d)))
            .collect()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            classifier: self.classifier,
            bins: self.bins,
            min_samples: self.min_samples,
            logistic: self.logistic.clone(),
        }
    }

    pub fn bgm(&self) -> BgmConfig {
        BgmConfig {
            threshold: self.threshold,
            unique_tree_pairing: self.unique_tree_pairing,
            drop_singletons: self.drop_singletons,
            train: self.train_config(),
        }
    }

    pub fn benchmark(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            methods: self.methods.clone(),
            n_values: self.n_values.clone(),
            folds: self.folds,
            seed: self.seed,
            tau_sim: self.tau_sim,
            coverage: self.coverage,
            neighbors: self.neighbors,
            bgm: self.bgm(),
            note: self.note.clone(),
        }
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        let synth = self.synth.clone().ok_or_else(|| Error::Config("missing field `synth`".into()))?;
        Ok(SynthConfig { seed: self.seed, ..synth })
    }
}
