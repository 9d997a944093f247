//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use bgm_core::dataset::{jaccard, RatingMatrix, UserId};
use bgm_core::eval::{
    generate_synthetic, kfold_split, paired_t_test, run_benchmark, run_benchmark_observed, BenchmarkConfig,
    BenchmarkObserver, Method, SynthConfig,
};
use bgm_core::graph::{build_forest, expand_items, ForestOptions, NodeKey};
use bgm_core::matching::tree_similarity;
use bgm_core::recommend::{expected_rating, rank_matrix, top_n_by_score, FeatureMatrix, FeatureMatrixRow};
use bgm_core::training::{train, Classifier, ClassifierKind, DistributionVector, RowRef, TrainConfig, TrainingSample};
use bgm_core::tree::{build_trees, BehaviorTree, Parent};
use common::{brute_force_edges, forest_edges, key, naive_bayes_oracle, set_jaccard, table1, textbook_t_test};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure!(elapsed < limit, "took {elapsed:.2?}, limit {limit:?}");
    Ok(())
}

fn table1_oracle() -> Outcome {
    let start = Instant::now();
    let m = table1();
    let nodes = expand_items(&m);
    ensure!(nodes.len() == 13, "{} nodes, expected 13", nodes.len());
    let n12 = nodes.iter().find(|n| n.key() == key("item1", 2)).ok_or("no node (item1,2)")?;
    let expected: BTreeSet<UserId> = ["user1", "user3", "user8"].iter().map(|s| s.to_string()).collect();
    ensure!(n12.popularity() == 3 && n12.users == expected, "(item1,2) = {:?}", n12.users);

    let forest = build_forest("source", &nodes, 0.5, ForestOptions::default()).map_err(|e| e.to_string())?;
    let got = forest_edges(&forest);
    let oracle = brute_force_edges(&nodes, 0.5);
    ensure!(got == oracle, "edge sets differ:\n got {got:?}\n oracle {oracle:?}");
    ensure!(
        got.contains(&(key("item3", 1), key("item5", 3), 1.0f64.to_bits())),
        "edge ((item3,1),(item5,3)) 1.0 missing"
    );
    ensure!(
        !got.iter().any(|(a, b, _)| (a, b) == (&key("item1", 1), &key("item4", 1))),
        "edge ((item1,1),(item4,1)) present"
    );
    let u = |item, r| nodes.iter().find(|n| n.key() == key(item, r)).unwrap().users.clone();
    ensure!(jaccard(&u("item1", 1), &u("item4", 1)) == 3.0 / 7.0, "J((item1,1),(item4,1)) != 3/7");
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("13 nodes, {} edges equal the pair scan, {:.1?}", got.len(), start.elapsed()))
}

/// `child -> (parent or None for the root, edge weight)`.
fn parent_map(tree: &BehaviorTree) -> BTreeMap<NodeKey, (Option<NodeKey>, f64)> {
    tree.nodes
        .iter()
        .zip(&tree.parents)
        .map(|(n, p)| {
            let v = match p {
                Parent::Root => (None, 0.0),
                Parent::Node { index, weight } => (Some(tree.nodes[*index].key()), *weight),
            };
            (n.key(), v)
        })
        .collect()
}

fn tree_oracle() -> Outcome {
    let forest = build_forest("source", &expand_items(&table1()), 0.5, ForestOptions::default()).map_err(|e| e.to_string())?;
    let trees = build_trees(&forest).map_err(|e| e.to_string())?;
    let find = |k: NodeKey| {
        trees
            .iter()
            .find(|t| t.nodes.iter().any(|n| n.key() == k))
            .map(parent_map)
            .ok_or(format!("no tree holds {k}"))
    };
    let first: BTreeMap<_, _> = [
        (key("item1", 1), (None, 0.0)),
        (key("item3", 1), (Some(key("item1", 1)), 0.6)),
        (key("item5", 3), (Some(key("item3", 1)), 1.0)),
    ]
    .into_iter()
    .collect();
    let second: BTreeMap<_, _> = [
        (key("item4", 1), (None, 0.0)),
        (key("item2", 3), (None, 0.0)),
        (key("item5", 1), (None, 0.0)),
        (key("item3", 3), (Some(key("item2", 3)), 0.5)),
    ]
    .into_iter()
    .collect();
    let (got1, got2) = (find(key("item1", 1))?, find(key("item2", 3))?);
    ensure!(got1 == first, "first tree {got1:?}");
    ensure!(got2 == second, "second tree {got2:?}");
    Ok("both hand-derived trees reproduced, (item3,3) under (item2,3)".into())
}

fn similarity_properties() -> Outcome {
    let start = Instant::now();
    let empty: BTreeSet<u32> = BTreeSet::new();
    ensure!(jaccard(&empty, &empty) == 0.0, "J(empty, empty) != 0");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..1000 {
        let gen = |rng: &mut ChaCha8Rng| -> BTreeSet<u32> {
            let len = rng.gen_range(0..12);
            (0..len).map(|_| rng.gen_range(0..20)).collect()
        };
        let (a, b) = (gen(&mut rng), gen(&mut rng));
        let ab = jaccard(&a, &b);
        ensure!(ab == jaccard(&b, &a), "pair {i}: asymmetric");
        ensure!((0.0..=1.0).contains(&ab), "pair {i}: {ab} out of range");
        ensure!(ab == set_jaccard(&a, &b), "pair {i}: {ab} vs oracle");
        if !a.is_empty() {
            ensure!(jaccard(&a, &a) == 1.0, "pair {i}: J(a, a) != 1");
        }
    }

    let synth = generate_synthetic(&SynthConfig {
        users: 80,
        source_items: 60,
        target_items: 60,
        clusters: 4,
        seed: 3,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    for (name, m) in [("table 1", table1()), ("synthetic", synth.data.source.clone())] {
        let nodes = expand_items(&m);
        let mut last = 0;
        for step in 1..=10 {
            let threshold = step as f64 / 10.0;
            let forest = build_forest("d", &nodes, threshold, ForestOptions::default()).map_err(|e| e.to_string())?;
            ensure!(forest.graphs.len() >= last, "{name}: component count fell at {threshold}");
            last = forest.graphs.len();
        }
    }

    let trees = |m: &RatingMatrix| -> Result<Vec<BehaviorTree>, String> {
        let forest = build_forest("d", &expand_items(m), 0.5, ForestOptions::default()).map_err(|e| e.to_string())?;
        build_trees(&forest).map_err(|e| e.to_string())
    };
    let (src, tgt) = (trees(&synth.data.source)?, trees(&synth.data.target)?);
    for a in &src {
        ensure!(tree_similarity(a, a) == 1.0, "tree similarity with itself != 1");
        for b in &tgt {
            ensure!(tree_similarity(a, b) == tree_similarity(b, a), "tree similarity asymmetric");
        }
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("1000 random pairs, monotone components, {:.1?}", start.elapsed()))
}

fn classifier_oracle() -> Outcome {
    let cfg = TrainConfig { min_samples: 1, ..TrainConfig::default() };
    let hand: Vec<TrainingSample> = [(0.0, 1), (0.0, 1), (1.0, 2), (1.0, 2)]
        .iter()
        .map(|&(f, label)| TrainingSample { source_features: vec![f], source_rating: 1, target_features: vec![], label })
        .collect();
    let model = train(&hand, 1, 2, &cfg).map_err(|e| e.to_string())?;
    let p = model
        .predict_distribution(RowRef { source_features: &[0.0], source_rating: 1, target_features: &[] })
        .map_err(|e| e.to_string())?;
    ensure!(
        (p.probabilities()[0] - 0.75).abs() < 1e-9 && (p.probabilities()[1] - 0.25).abs() < 1e-9,
        "hand dataset gives {:?}",
        p.probabilities()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut checked = 0;
    for _ in 0..50 {
        let n = rng.gen_range(1..=2);
        let m = rng.gen_range(0..=1);
        let (ks, kt) = (rng.gen_range(1..=3u8), rng.gen_range(2..=3u8));
        let samples: Vec<TrainingSample> = (0..20)
            .map(|_| TrainingSample {
                source_features: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                source_rating: rng.gen_range(1..=ks),
                target_features: (0..m).map(|_| rng.gen_range(0.0..5.0)).collect(),
                label: rng.gen_range(1..=kt),
            })
            .collect();
        let model = train(&samples, ks, kt, &cfg).map_err(|e| e.to_string())?;
        let queries: Vec<TrainingSample> = samples
            .iter()
            .cloned()
            .chain((0..10).map(|_| TrainingSample {
                source_features: (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect(),
                source_rating: rng.gen_range(1..=ks),
                target_features: (0..m).map(|_| rng.gen_range(-1.0..6.0)).collect(),
                label: 1,
            }))
            .collect();
        for q in &queries {
            let got = model.predict_distribution(q.row()).map_err(|e| e.to_string())?;
            let want = naive_bayes_oracle(&samples, 5, ks, kt, (&q.source_features, q.source_rating, &q.target_features));
            for (g, w) in got.probabilities().iter().zip(&want) {
                ensure!((g - w).abs() < 1e-9, "model {:?} vs oracle {want:?}", got.probabilities());
            }
            checked += 1;
        }
    }
    Ok(format!("[0.75, 0.25] reproduced, {checked} randomized queries match the count oracle"))
}

struct Fixed(Vec<f64>);

impl Classifier for Fixed {
    fn classes(&self) -> usize {
        self.0.len()
    }
    fn predict_distribution(&self, _row: RowRef<'_>) -> bgm_core::Result<DistributionVector> {
        DistributionVector::new(self.0.clone())
    }
}

fn ranking_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..500 {
        let k = rng.gen_range(1..=6);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let dist = DistributionVector::new(raw.iter().map(|x| x / total).collect()).map_err(|e| e.to_string())?;
        let e = expected_rating(&dist);
        ensure!((1.0 - 1e-12..=k as f64 + 1e-12).contains(&e), "expected rating {e} outside [1, {k}]");
    }
    for k in 1..=5 {
        for j in 0..k {
            let mut p = vec![0.0; k];
            p[j] = 1.0;
            let e = expected_rating(&DistributionVector::new(p).unwrap());
            ensure!(e == (j + 1) as f64, "indicator {j} of {k} gives {e}");
        }
    }
    let e = expected_rating(&DistributionVector::new(vec![0.2, 0.3, 0.5]).unwrap());
    ensure!((e - 2.3).abs() < 1e-12, "spot value {e}");

    // Shifting one row's mass upward raises the item's rank.
    let matrix = FeatureMatrix {
        target_item: "x".into(),
        rows: vec![FeatureMatrixRow { source_features: vec![], source_rating: 1, target_features: vec![] }; 3],
    };
    let low = rank_matrix(&matrix, &Fixed(vec![0.5, 0.3, 0.2])).map_err(|e| e.to_string())?;
    let high = rank_matrix(&matrix, &Fixed(vec![0.4, 0.3, 0.3])).map_err(|e| e.to_string())?;
    ensure!(high > low, "rank did not increase: {low} -> {high}");

    // Raising one score never moves its item down; ties resolve by item id
    // whatever the input order.
    for _ in 0..200 {
        let items: Vec<(String, f64)> = (0..8).map(|i| (format!("i{i}"), f64::from(rng.gen_range(0..4u8)))).collect();
        let before = top_n_by_score(items.clone(), 8);
        let pick = rng.gen_range(0..8);
        let mut raised = items.clone();
        raised[pick].1 += rng.gen_range(0.0..2.0);
        let after = top_n_by_score(raised, 8);
        let pos = |list: &[bgm_core::Recommendation], id: &str| list.iter().position(|r| r.item == id).unwrap();
        let id = format!("i{pick}");
        ensure!(pos(&after, &id) <= pos(&before, &id), "raising {id} moved it down");
        let mut shuffled = items.clone();
        shuffled.reverse();
        ensure!(top_n_by_score(shuffled, 8) == before, "order depends on input order");
        for w in before.windows(2) {
            ensure!(
                w[0].score > w[1].score || (w[0].score == w[1].score && w[0].item < w[1].item),
                "tie-break violated"
            );
        }
    }
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("bounds, indicators, 2.3 spot value, monotone ranks, {:.1?}", start.elapsed()))
}

fn statistics_oracle() -> Outcome {
    let r = paired_t_test(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]).map_err(|e| e.to_string())?;
    ensure!((r.t - 3.872983).abs() < 1e-6, "t = {}", r.t);
    ensure!(r.df == 3, "df = {}", r.df);
    ensure!((r.p - 0.0305).abs() < 1e-3, "p = {}", r.p);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for case in 0..100 {
        let n = rng.gen_range(2..40);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let got = paired_t_test(&a, &b).map_err(|e| e.to_string())?;
        let (t, p) = textbook_t_test(&a, &b);
        ensure!((got.t - t).abs() <= 1e-6 * t.abs().max(1.0), "case {case}: t {} vs {t}", got.t);
        ensure!((got.p - p).abs() <= 1e-6, "case {case}: p {} vs {p}", got.p);
    }
    Ok(format!("t = {:.6}, p = {:.6}, 100 random cases match", r.t, r.p))
}

/// Records fold events so leakage can be checked afterwards.
#[derive(Default)]
struct Recorder {
    train_users: Mutex<BTreeMap<usize, BTreeSet<UserId>>>,
    fitted: Mutex<BTreeSet<usize>>,
    early_reads: Mutex<Vec<(usize, String)>>,
    reads: Mutex<usize>,
}

impl BenchmarkObserver for Recorder {
    fn training_view(&self, fold: usize, target_train: &RatingMatrix) {
        self.train_users.lock().unwrap().insert(fold, target_train.user_set());
    }
    fn model_fitted(&self, fold: usize) {
        self.fitted.lock().unwrap().insert(fold);
    }
    fn heldout_accessed(&self, fold: usize, user: &str) {
        *self.reads.lock().unwrap() += 1;
        if !self.fitted.lock().unwrap().contains(&fold) {
            self.early_reads.lock().unwrap().push((fold, user.to_string()));
        }
    }
}

struct Experiment {
    config: BenchmarkConfig,
    data: bgm_core::CrossDomainData,
    report_json: String,
    elapsed: Duration,
    recorder: Recorder,
}

fn run_experiment() -> Result<Experiment, String> {
    let synth = generate_synthetic(&SynthConfig {
        users: 600,
        source_items: 800,
        target_items: 1200,
        correlation: 0.9,
        noise: 0.1,
        seed: 7,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let mut config = BenchmarkConfig {
        folds: 10,
        seed: 7,
        note: Some("synthetic data; results are directional only".into()),
        ..BenchmarkConfig::default()
    };
    config.bgm.train.classifier = ClassifierKind::Logistic;
    let recorder = Recorder::default();
    let start = Instant::now();
    let report = run_benchmark_observed(&synth.data, &config, &recorder).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    Ok(Experiment {
        report_json: report.to_json().map_err(|e| e.to_string())?,
        config,
        data: synth.data,
        elapsed,
        recorder,
    })
}

fn directional(exp: &Experiment) -> Outcome {
    let report: bgm_core::eval::PrecisionReport = serde_json::from_str(&exp.report_json).map_err(|e| e.to_string())?;
    let mut knn_wins = 0;
    let mut lines = Vec::new();
    for n in [5, 10, 15, 20] {
        let get = |m| report.mean(m, n).ok_or(format!("no mean for {m} at {n}"));
        let (bgm, pop, knn) = (get(Method::Bgm)?, get(Method::Popularity)?, get(Method::Knn)?);
        ensure!(bgm > pop, "N={n}: BGM {bgm:.4} <= popularity {pop:.4}");
        knn_wins += usize::from(bgm > knn);
        let t = report.t_test(Method::Bgm, Method::Popularity, n).ok_or("missing t-test")?;
        let p = t.p.ok_or(format!("N={n}: t-test failed: {:?}", t.error))?;
        ensure!(p < 0.05 && t.t.unwrap() > 0.0, "N={n}: BGM vs popularity p = {p}");
        lines.push(format!("@{n} {bgm:.3}/{pop:.3}/{knn:.3}"));
    }
    ensure!(knn_wins >= 2, "BGM beats KNN at only {knn_wins} of 4 N values");
    within(exp.elapsed, Duration::from_secs(300))?;
    Ok(format!(
        "bgm/popularity/knn {}, {} users, {:.1?}",
        lines.join(" "),
        report.users.len(),
        exp.elapsed
    ))
}

fn leakage_and_determinism(exp: &Experiment) -> Outcome {
    let plan = kfold_split(&exp.data.shared_users(), exp.config.folds, exp.config.seed).map_err(|e| e.to_string())?;
    let train_users = exp.recorder.train_users.lock().unwrap();
    ensure!(train_users.len() == plan.k, "{} training views for {} folds", train_users.len(), plan.k);
    for (fold, test) in plan.folds.iter().enumerate() {
        let seen = &train_users[&fold];
        ensure!(seen.is_disjoint(test), "fold {fold}: training view holds test users");
        let expected: BTreeSet<UserId> = exp.data.target.users().filter(|u| !test.contains(*u)).cloned().collect();
        ensure!(*seen == expected, "fold {fold}: training view is not the complement of the test fold");
    }
    let early = exp.recorder.early_reads.lock().unwrap();
    ensure!(early.is_empty(), "held-out ratings read before fitting: {:?}", &early[..early.len().min(3)]);

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let again = run_benchmark(&exp.data, &exp.config).map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first: bgm_core::eval::PrecisionReport = serde_json::from_str(&exp.report_json).map_err(|e| e.to_string())?;
    first.save(&a).map_err(|e| e.to_string())?;
    again.save(&b).map_err(|e| e.to_string())?;
    let read = |p: &std::path::Path| std::fs::read(p.join("report.json")).map_err(|e| e.to_string());
    ensure!(read(&a)? == read(&b)?, "report.json differs between runs");
    ensure!(again.to_json().map_err(|e| e.to_string())? == exp.report_json, "report JSON differs between runs");
    Ok(format!(
        "{} held-out reads all after fitting, report.json byte-identical",
        *exp.recorder.reads.lock().unwrap()
    ))
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match result {
        Ok(detail) => {
            println!("criterion {id} [{name}]: PASS ({detail})");
            true
        }
        Err(why) => {
            println!("criterion {id} [{name}]: FAIL ({why})");
            false
        }
    }
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let mut ok = true;
    ok &= run(1, "table 1 graph oracle", table1_oracle);
    ok &= run(2, "tree construction oracle", tree_oracle);
    ok &= run(3, "jaccard and tree similarity properties", similarity_properties);
    ok &= run(4, "classifier oracle", classifier_oracle);
    ok &= run(5, "expected rating and ranking", ranking_suite);
    ok &= run(6, "statistics oracle", statistics_oracle);
    let experiment = run_experiment();
    ok &= run(7, "synthetic directional experiment", || directional(experiment.as_ref().map_err(Clone::clone)?));
    ok &= run(8, "leakage and determinism", || {
        leakage_and_determinism(experiment.as_ref().map_err(Clone::clone)?)
    });
    if !ok {
        std::process::exit(1);
    }
}
