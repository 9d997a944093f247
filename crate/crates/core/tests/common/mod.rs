//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use bgm_core::dataset::{Rating, RatingMatrix};
use bgm_core::graph::{BehaviorForest, NodeKey, RatedItemNode};
use bgm_core::training::TrainingSample;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn table1() -> RatingMatrix {
    bgm_core::dataset::ingest_ratings(&fixture("table1_ratings.csv"), "source", 3).unwrap()
}

pub fn key(item: &str, rating: Rating) -> NodeKey {
    NodeKey { item: item.into(), rating }
}

/// Edge as `(smaller key, larger key, weight bits)`.
pub type EdgeKey = (NodeKey, NodeKey, u64);

pub fn set_jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Every pair of nodes, scored directly.
pub fn brute_force_edges(nodes: &[RatedItemNode], threshold: f64) -> BTreeSet<EdgeKey> {
    let mut out = BTreeSet::new();
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i + 1..] {
            if a.users.intersection(&b.users).next().is_none() {
                continue;
            }
            let w = set_jaccard(&a.users, &b.users);
            if w >= threshold {
                let (x, y) = if a.key() < b.key() { (a.key(), b.key()) } else { (b.key(), a.key()) };
                out.insert((x, y, w.to_bits()));
            }
        }
    }
    out
}

pub fn forest_edges(forest: &BehaviorForest) -> BTreeSet<EdgeKey> {
    let mut out = BTreeSet::new();
    for g in &forest.graphs {
        for e in &g.edges {
            let (a, b) = (g.nodes[e.a].key(), g.nodes[e.b].key());
            let (x, y) = if a < b { (a, b) } else { (b, a) };
            out.insert((x, y, e.weight.to_bits()));
        }
    }
    out
}

/// Random ratings for `users` x `items` with density `p`.
pub fn random_matrix(rng: &mut impl Rng, users: usize, items: usize, k: Rating, p: f64) -> RatingMatrix {
    let mut m = RatingMatrix::new("r", k).unwrap();
    for u in 0..users {
        for i in 0..items {
            if rng.gen_bool(p) {
                m.insert(&format!("u{u:02}"), &format!("i{i:02}"), rng.gen_range(1..=i64::from(k))).unwrap();
            }
        }
    }
    m
}

/// Naive Bayes posterior computed by counting, with plain products:
/// equal-width bins from the training min/max, add-one smoothing on prior and
/// likelihoods, and features whose bin holds no training sample ignored.
pub fn naive_bayes_oracle(
    samples: &[TrainingSample],
    bins: usize,
    source_k: Rating,
    target_k: Rating,
    query: (&[f64], Rating, &[f64]),
) -> Vec<f64> {
    let encode = |s: &[f64], r: Rating, t: &[f64], ranges: &[(f64, f64)]| -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let continuous = s.iter().chain(t.iter()).copied().collect::<Vec<_>>();
        let n = s.len();
        for (f, &x) in continuous.iter().enumerate() {
            let (lo, hi) = ranges[f];
            let bin = if hi == lo {
                if x < lo {
                    0
                } else {
                    bins - 1
                }
            } else {
                (((x - lo) / (hi - lo)) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize
            };
            // Feature slots: source features, source rating, target features.
            let slot = if f < n { f } else { f + 1 };
            out.push((slot, bin));
        }
        out.push((n, usize::from(r) - 1));
        out.sort();
        out
    };
    let dims = samples[0].source_features.len() + samples[0].target_features.len();
    let ranges: Vec<(f64, f64)> = (0..dims)
        .map(|f| {
            let vals = samples.iter().map(|s| {
                let all: Vec<f64> = s.source_features.iter().chain(&s.target_features).copied().collect();
                all[f]
            });
            vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
        })
        .collect();
    let n = samples[0].source_features.len();
    let width = |slot: usize| if slot == n { usize::from(source_k) } else { bins };

    let classes = usize::from(target_k);
    let mut class_n = vec![0usize; classes];
    let mut counts: BTreeMap<(usize, usize, usize), usize> = BTreeMap::new();
    for s in samples {
        let c = usize::from(s.label) - 1;
        class_n[c] += 1;
        for (slot, bin) in encode(&s.source_features, s.source_rating, &s.target_features, &ranges) {
            *counts.entry((c, slot, bin)).or_default() += 1;
        }
    }
    let q = encode(query.0, query.1, query.2, &ranges);
    let total = samples.len() as f64;
    let mut post: Vec<f64> = (0..classes)
        .map(|c| {
            let mut p = (class_n[c] as f64 + 1.0) / (total + classes as f64);
            for &(slot, bin) in &q {
                let mass: usize = (0..classes).map(|k| counts.get(&(k, slot, bin)).copied().unwrap_or(0)).sum();
                if mass == 0 {
                    continue;
                }
                let cnt = counts.get(&(c, slot, bin)).copied().unwrap_or(0) as f64;
                p *= (cnt + 1.0) / (class_n[c] as f64 + width(slot) as f64);
            }
            p
        })
        .collect();
    let z: f64 = post.iter().sum();
    post.iter_mut().for_each(|p| *p /= z);
    post
}

/// Textbook paired t-test: t = mean(d) / (sd(d)/sqrt(n)), two-tailed p from
/// the Student t CDF.
pub fn textbook_t_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).unwrap();
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (t, p)
}
