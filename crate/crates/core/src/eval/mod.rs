//! Cross-validated top-N precision for BGM and the two baselines.

pub mod stats;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::dataset::{ContentCatalog, CrossDomainData, ItemId, Rating, RatingMatrix, UserId};
use crate::error::{Error, Result};
use crate::graph::{build_forest, expand_items, ForestOptions, DEFAULT_THRESHOLD};
use crate::matching::{match_forests, MatchOptions};
use crate::recommend::{knn_cross_domain_recommend, popularity_recommend, recommend_top_n, Recommendation, DEFAULT_NEIGHBORS};
use crate::training::{build_training_set, train, Model, TrainConfig};
use crate::tree::build_trees;

pub use stats::{paired_t_test, student_t_two_tailed_p, TTest};
pub use synth::{generate_synthetic, SynthConfig, SyntheticData};

pub const DEFAULT_N_VALUES: [usize; 6] = [5, 10, 15, 20, 50, 100];
/// N values at which methods are compared with paired t-tests.
pub const T_TEST_N_VALUES: [usize; 4] = [5, 10, 15, 20];
pub const DEFAULT_TAU_SIM: f64 = 0.5;
pub const DEFAULT_COVERAGE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<BTreeSet<UserId>>,
}

impl FoldPlan {
    pub fn fold_of(&self, user: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(user))
    }
}

/// Seeded shuffle of the sorted users, cut into `k` contiguous folds whose
/// sizes differ by at most one.
pub fn kfold_split(users: &BTreeSet<UserId>, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > users.len() {
        return Err(Error::Config(format!("folds = {k} needs 2 <= folds <= {} users", users.len())));
    }
    let mut order: Vec<UserId> = users.iter().cloned().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (order.len() / k, order.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut rest = order.as_slice();
    for f in 0..k {
        let (head, tail) = rest.split_at(base + usize::from(f < extra));
        folds.push(head.iter().cloned().collect());
        rest = tail;
    }
    Ok(FoldPlan { k, seed, folds })
}

/// Cosine similarity; 0 when either vector is all zeros.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    ab / (aa.sqrt() * bb.sqrt())
}

/// A recommended item counts when it is itself a held-out positive, or when
/// its content is at least `tau_sim`-similar to ⌈coverage·|positives|⌉ of them.
pub fn is_true_positive(
    rec_item: &str,
    positive_items: &BTreeSet<ItemId>,
    target_content: &ContentCatalog,
    tau_sim: f64,
    coverage: f64,
) -> Result<bool> {
    if positive_items.contains(rec_item) {
        return Ok(true);
    }
    if positive_items.is_empty() {
        return Ok(false);
    }
    let rec = target_content.require(rec_item)?;
    // The epsilon keeps 0.8 * 5 at 4 rather than 5 after rounding error.
    let needed = (coverage * positive_items.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut similar = 0;
    for p in positive_items {
        if cosine(rec, target_content.require(p)?) >= tau_sim {
            similar += 1;
            if similar >= needed {
                return Ok(true);
            }
        }
    }
    Ok(similar >= needed)
}

/// True positives among the first `min(n, len)` recommendations, over `n`.
pub fn precision_at_n(
    recommendations: &[Recommendation],
    positive_items: &BTreeSet<ItemId>,
    target_content: &ContentCatalog,
    n: usize,
    tau_sim: f64,
    coverage: f64,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    if recommendations.is_empty() {
        return Err(Error::Validation("no recommendations to score".into()));
    }
    let mut hits = 0;
    for r in recommendations.iter().take(n) {
        hits += usize::from(is_true_positive(&r.item, positive_items, target_content, tau_sim, coverage)?);
    }
    Ok(hits as f64 / n as f64)
}

/// Items `user` rated with the top rating in `matrix`.
pub fn positive_items(matrix: &RatingMatrix, user: &str) -> BTreeSet<ItemId> {
    matrix
        .user_ratings(user)
        .into_iter()
        .flatten()
        .filter(|(_, &r)| r == matrix.k())
        .map(|(i, _)| i.clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bgm,
    Popularity,
    Knn,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Bgm => "bgm",
            Method::Popularity => "popularity",
            Method::Knn => "knn",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BgmConfig {
    pub threshold: f64,
    pub unique_tree_pairing: bool,
    pub drop_singletons: bool,
    pub train: TrainConfig,
}

impl Default for BgmConfig {
    fn default() -> Self {
        BgmConfig {
            threshold: DEFAULT_THRESHOLD,
            unique_tree_pairing: false,
            drop_singletons: false,
            train: TrainConfig::default(),
        }
    }
}

/// A fitted BGM model with the sizes of the intermediate structures.
#[derive(Debug, Clone)]
pub struct FittedBgm {
    pub model: Model,
    pub source_trees: usize,
    pub target_trees: usize,
    pub bridges: usize,
}

/// Graphs, trees, matching and training in one go.
pub fn fit_bgm(
    source: &RatingMatrix,
    target: &RatingMatrix,
    source_content: &ContentCatalog,
    target_content: &ContentCatalog,
    config: &BgmConfig,
) -> Result<FittedBgm> {
    let options = ForestOptions { drop_singletons: config.drop_singletons };
    let (src_forest, tgt_forest) = rayon::join(
        || build_forest(source.domain(), &expand_items(source), config.threshold, options),
        || build_forest(target.domain(), &expand_items(target), config.threshold, options),
    );
    let src_trees = build_trees(&src_forest?)?;
    let tgt_trees = build_trees(&tgt_forest?)?;
    let bridges = match_forests(
        &src_trees,
        &tgt_trees,
        MatchOptions { unique_tree_pairing: config.unique_tree_pairing },
    );
    let samples = build_training_set(&bridges, source_content, target_content)?;
    let model = train(&samples, source.k(), target.k(), &config.train)?;
    Ok(FittedBgm {
        model,
        source_trees: src_trees.len(),
        target_trees: tgt_trees.len(),
        bridges: bridges.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub n_values: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
    pub tau_sim: f64,
    pub coverage: f64,
    /// Neighborhood size of the KNN baseline.
    pub neighbors: usize,
    pub bgm: BgmConfig,
    /// Free-text remark copied into the report.
    pub note: Option<String>,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            methods: vec![Method::Bgm, Method::Popularity, Method::Knn],
            n_values: DEFAULT_N_VALUES.to_vec(),
            folds: 10,
            seed: 0,
            tau_sim: DEFAULT_TAU_SIM,
            coverage: DEFAULT_COVERAGE,
            neighbors: DEFAULT_NEIGHBORS,
            bgm: BgmConfig::default(),
            note: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("methods must not be empty".into()));
        }
        let distinct: BTreeSet<_> = self.methods.iter().collect();
        if distinct.len() != self.methods.len() {
            return Err(Error::Config("methods contains duplicates".into()));
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return Err(Error::Config("N values must be non-empty and at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.coverage) {
            return Err(Error::Config(format!("coverage = {} outside [0, 1]", self.coverage)));
        }
        if !(-1.0..=1.0).contains(&self.tau_sim) {
            return Err(Error::Config(format!("tau_sim = {} outside [-1, 1]", self.tau_sim)));
        }
        if self.neighbors == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.bgm.threshold) {
            return Err(Error::Config(format!("threshold = {} outside [0, 1]", self.bgm.threshold)));
        }
        Ok(())
    }
}

/// Hooks for watching what each fold reads. Folds may run concurrently.
pub trait BenchmarkObserver: Sync {
    /// The target ratings models of `fold` are fitted on.
    fn training_view(&self, _fold: usize, _target_train: &RatingMatrix) {}
    fn model_fitted(&self, _fold: usize) {}
    /// A held-out target rating list of `user` is read.
    fn heldout_accessed(&self, _fold: usize, _user: &str) {}
}

pub struct NoObserver;

impl BenchmarkObserver for NoObserver {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPrecision {
    pub user: UserId,
    pub fold: usize,
    /// Per method, one value per entry of `n_values`.
    pub precision: BTreeMap<Method, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPrecision {
    pub method: Method,
    pub n: usize,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestRow {
    pub a: Method,
    pub b: Method,
    pub n: usize,
    pub t: Option<f64>,
    pub df: Option<usize>,
    pub p: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub note: Option<String>,
    pub folds: usize,
    pub seed: u64,
    pub tau_sim: f64,
    pub coverage: f64,
    pub methods: Vec<Method>,
    pub n_values: Vec<usize>,
    pub fold_sizes: Vec<usize>,
    pub users: Vec<UserPrecision>,
    pub means: Vec<MeanPrecision>,
    pub t_tests: Vec<TTestRow>,
}

impl PrecisionReport {
    pub fn mean(&self, method: Method, n: usize) -> Option<f64> {
        self.means.iter().find(|m| m.method == method && m.n == n).map(|m| m.mean)
    }

    pub fn t_test(&self, a: Method, b: Method, n: usize) -> Option<&TTestRow> {
        self.t_tests.iter().find(|t| t.a == a && t.b == b && t.n == n)
    }

    /// Per-user precision of `method` at `n`, in report order.
    pub fn column(&self, method: Method, n: usize) -> Option<Vec<f64>> {
        let j = self.n_values.iter().position(|&x| x == n)?;
        self.users.iter().map(|u| u.precision.get(&method).map(|v| v[j])).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_summary_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "method,N,mean_precision")?;
        for m in &self.means {
            writeln!(out, "{},{},{:.6}", m.method, m.n, m.mean)?;
        }
        Ok(())
    }

    /// Writes `report.json` and `summary.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let text = self.to_json()?;
        csvio::write_file(&dir.join("report.json"), |w| writeln!(w, "{text}"))?;
        csvio::write_file(&dir.join("summary.csv"), |w| self.write_summary_csv(w))
    }
}

struct FoldModels {
    bgm: Option<Model>,
    popularity: Option<Vec<Recommendation>>,
}

pub fn run_benchmark(data: &CrossDomainData, config: &BenchmarkConfig) -> Result<PrecisionReport> {
    run_benchmark_observed(data, config, &NoObserver)
}

/// k-fold protocol: per fold the test users' target ratings are removed, all
/// models are fitted on what remains, and each test user with held-out
/// positives is scored at every N.
pub fn run_benchmark_observed(
    data: &CrossDomainData,
    config: &BenchmarkConfig,
    observer: &dyn BenchmarkObserver,
) -> Result<PrecisionReport> {
    config.validate()?;
    data.validate()?;
    let shared = data.shared_users();
    let plan = kfold_split(&shared, config.folds, config.seed)?;
    let max_n = *config.n_values.iter().max().expect("validated non-empty");
    let candidates: Vec<ItemId> = data.target_content.items().cloned().collect();

    let per_fold: Vec<Vec<UserPrecision>> = (0..plan.k)
        .into_par_iter()
        .map(|fold| run_fold(data, config, observer, &plan.folds[fold], fold, max_n, &candidates))
        .collect::<Result<_>>()?;
    let users: Vec<UserPrecision> = per_fold.into_iter().flatten().collect();
    if users.is_empty() {
        return Err(Error::Validation("no test user has held-out positive ratings".into()));
    }

    let mut means = Vec::new();
    for &method in &config.methods {
        for (j, &n) in config.n_values.iter().enumerate() {
            let total: f64 = users.iter().map(|u| u.precision[&method][j]).sum();
            means.push(MeanPrecision { method, n, mean: total / users.len() as f64 });
        }
    }

    let mut t_tests = Vec::new();
    for (i, &a) in config.methods.iter().enumerate() {
        for &b in &config.methods[i + 1..] {
            for (j, &n) in config.n_values.iter().enumerate() {
                if !T_TEST_N_VALUES.contains(&n) {
                    continue;
                }
                let xa: Vec<f64> = users.iter().map(|u| u.precision[&a][j]).collect();
                let xb: Vec<f64> = users.iter().map(|u| u.precision[&b][j]).collect();
                t_tests.push(match paired_t_test(&xa, &xb) {
                    Ok(r) => TTestRow { a, b, n, t: Some(r.t), df: Some(r.df), p: Some(r.p), error: None },
                    Err(e) => TTestRow { a, b, n, t: None, df: None, p: None, error: Some(e.to_string()) },
                });
            }
        }
    }

    Ok(PrecisionReport {
        note: config.note.clone(),
        folds: plan.k,
        seed: config.seed,
        tau_sim: config.tau_sim,
        coverage: config.coverage,
        methods: config.methods.clone(),
        n_values: config.n_values.clone(),
        fold_sizes: plan.folds.iter().map(BTreeSet::len).collect(),
        users,
        means,
        t_tests,
    })
}

fn run_fold(
    data: &CrossDomainData,
    config: &BenchmarkConfig,
    observer: &dyn BenchmarkObserver,
    test: &BTreeSet<UserId>,
    fold: usize,
    max_n: usize,
    candidates: &[ItemId],
) -> Result<Vec<UserPrecision>> {
    let target_train = data.target.filter_users(|u| !test.contains(u));
    observer.training_view(fold, &target_train);
    let models = FoldModels {
        bgm: if config.methods.contains(&Method::Bgm) {
            let fitted = fit_bgm(&data.source, &target_train, &data.source_content, &data.target_content, &config.bgm)?;
            Some(fitted.model)
        } else {
            None
        },
        popularity: config
            .methods
            .contains(&Method::Popularity)
            .then(|| popularity_recommend(&target_train, max_n)),
    };
    observer.model_fitted(fold);

    let mut evaluated: Vec<(UserId, BTreeSet<ItemId>)> = Vec::new();
    for user in test {
        if data.source.user_ratings(user).map_or(true, |r| r.is_empty()) {
            continue;
        }
        observer.heldout_accessed(fold, user);
        let positives = positive_items(&data.target, user);
        if !positives.is_empty() {
            evaluated.push((user.clone(), positives));
        }
    }

    evaluated
        .par_iter()
        .map(|(user, positives)| {
            let mut precision = BTreeMap::new();
            for &method in &config.methods {
                let recs = recommend_for(data, config, &models, &target_train, method, user, max_n, candidates)?;
                precision.insert(method, precision_curve(&recs, positives, data, config)?);
            }
            Ok(UserPrecision { user: user.clone(), fold, precision })
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn recommend_for(
    data: &CrossDomainData,
    config: &BenchmarkConfig,
    models: &FoldModels,
    target_train: &RatingMatrix,
    method: Method,
    user: &str,
    max_n: usize,
    candidates: &[ItemId],
) -> Result<Vec<Recommendation>> {
    match method {
        Method::Bgm => {
            let ratings: Vec<(ItemId, Rating)> = data
                .source
                .user_ratings(user)
                .into_iter()
                .flatten()
                .map(|(i, &r)| (i.clone(), r))
                .collect();
            let model = models.bgm.as_ref().expect("fitted when requested");
            recommend_top_n(model, &ratings, candidates, &data.source_content, &data.target_content, max_n)
        }
        Method::Popularity => Ok(models.popularity.clone().expect("fitted when requested")),
        Method::Knn => knn_cross_domain_recommend(user, config.neighbors, &data.source, target_train, max_n),
    }
}

/// Precision at each configured N from one list of `max_n` recommendations.
fn precision_curve(
    recs: &[Recommendation],
    positives: &BTreeSet<ItemId>,
    data: &CrossDomainData,
    config: &BenchmarkConfig,
) -> Result<Vec<f64>> {
    let mut prefix = Vec::with_capacity(recs.len() + 1);
    prefix.push(0usize);
    for r in recs {
        let hit = is_true_positive(&r.item, positives, &data.target_content, config.tau_sim, config.coverage)?;
        prefix.push(prefix.last().unwrap() + usize::from(hit));
    }
    Ok(config
        .n_values
        .iter()
        .map(|&n| prefix[n.min(recs.len())] as f64 / n as f64)
        .collect())
}
