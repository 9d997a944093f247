//! Synthetic two-domain data with planted user clusters.
//!
//! Every user belongs to one cluster per domain; the target cluster equals the
//! source cluster with probability `correlation`. Items are split into one
//! block per cluster. A user rates each item of their own block with the top
//! rating (probability `intra_p`) and each item of the next block with rating
//! 1 (probability `contrast_p`). Each of those ratings is, with probability
//! `noise`, replaced by a uniformly random item and rating. Content vectors
//! scatter around a unit-length centroid per block.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{ContentCatalog, CrossDomainData, ItemId, Rating, RatingMatrix, UserId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub users: usize,
    pub source_items: usize,
    pub target_items: usize,
    pub clusters: usize,
    pub intra_p: f64,
    pub contrast_p: f64,
    pub correlation: f64,
    pub noise: f64,
    pub source_dim: usize,
    pub target_dim: usize,
    /// Standard deviation of item vectors around their block centroid.
    pub spread: f64,
    pub source_k: Rating,
    pub target_k: Rating,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 600,
            source_items: 800,
            target_items: 1200,
            clusters: 10,
            intra_p: 0.8,
            contrast_p: 0.5,
            correlation: 0.9,
            noise: 0.1,
            source_dim: 8,
            target_dim: 8,
            spread: 0.15,
            source_k: 2,
            target_k: 2,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("intra_p", self.intra_p),
            ("contrast_p", self.contrast_p),
            ("correlation", self.correlation),
            ("noise", self.noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        for (name, n) in [
            ("users", self.users),
            ("source_items", self.source_items),
            ("target_items", self.target_items),
            ("clusters", self.clusters),
            ("source_dim", self.source_dim),
            ("target_dim", self.target_dim),
        ] {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.clusters > self.source_items || self.clusters > self.target_items {
            return Err(Error::Config(format!(
                "{} clusters but only {}/{} items",
                self.clusters, self.source_items, self.target_items
            )));
        }
        if self.source_k < 2 || self.target_k < 2 {
            return Err(Error::Config("synthetic rating scales need k >= 2".into()));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return Err(Error::Config(format!("spread = {} must be finite and non-negative", self.spread)));
        }
        Ok(())
    }
}

/// Generated data plus the planted assignments.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub data: CrossDomainData,
    pub source_cluster: BTreeMap<UserId, usize>,
    pub target_cluster: BTreeMap<UserId, usize>,
    pub source_block: BTreeMap<ItemId, usize>,
    pub target_block: BTreeMap<ItemId, usize>,
}

impl SyntheticData {
    /// Writes `source_ratings.csv`, `target_ratings.csv`, `source_content.csv`
    /// and `target_content.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.data.source.save(&dir.join("source_ratings.csv"))?;
        self.data.target.save(&dir.join("target_ratings.csv"))?;
        self.data.source_content.save(&dir.join("source_content.csv"))?;
        self.data.target_content.save(&dir.join("target_content.csv"))
    }
}

struct Domain {
    ids: Vec<ItemId>,
    block_of: Vec<usize>,
    by_block: Vec<Vec<usize>>,
}

fn make_domain(rng: &mut ChaCha8Rng, prefix: &str, items: usize, clusters: usize) -> Domain {
    let width = items.to_string().len();
    let ids = (0..items).map(|i| format!("{prefix}{i:0width$}")).collect();
    // Round-robin blocks, then shuffled so ids carry no block information.
    let mut block_of: Vec<usize> = (0..items).map(|i| i % clusters).collect();
    block_of.shuffle(rng);
    let mut by_block = vec![Vec::new(); clusters];
    for (i, &b) in block_of.iter().enumerate() {
        by_block[b].push(i);
    }
    Domain { ids, block_of, by_block }
}

fn content(rng: &mut ChaCha8Rng, domain: &Domain, name: &str, dim: usize, clusters: usize, spread: f64) -> Result<ContentCatalog> {
    let centroids: Vec<Vec<f64>> = (0..clusters)
        .map(|_| {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let mut catalog = ContentCatalog::new(name, (1..=dim).map(|j| format!("f{j}")).collect());
    for (i, id) in domain.ids.iter().enumerate() {
        let c = &centroids[domain.block_of[i]];
        let v = c
            .iter()
            .map(|x| x + spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        catalog.insert(id, v)?;
    }
    Ok(catalog)
}

#[allow(clippy::too_many_arguments)]
fn rate(
    rng: &mut ChaCha8Rng,
    matrix: &mut RatingMatrix,
    user: &str,
    domain: &Domain,
    cluster: usize,
    config: &SynthConfig,
    k: Rating,
) -> Result<()> {
    let clusters = domain.by_block.len();
    let mut planned: Vec<(usize, Rating)> = Vec::new();
    for &i in &domain.by_block[cluster] {
        if rng.gen_bool(config.intra_p) {
            planned.push((i, k));
        }
    }
    if clusters > 1 {
        for &i in &domain.by_block[(cluster + 1) % clusters] {
            if rng.gen_bool(config.contrast_p) {
                planned.push((i, 1));
            }
        }
    }
    let mut ratings: BTreeMap<usize, Rating> = BTreeMap::new();
    for (item, rating) in planned {
        let (item, rating) = if rng.gen_bool(config.noise) {
            (rng.gen_range(0..domain.ids.len()), rng.gen_range(1..=k))
        } else {
            (item, rating)
        };
        ratings.entry(item).or_insert(rating);
    }
    for (item, rating) in ratings {
        matrix.insert(user, &domain.ids[item], i64::from(rating))?;
    }
    Ok(())
}

/// Deterministic in `config.seed`.
pub fn generate_synthetic(config: &SynthConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let c = config.clusters;
    let src = make_domain(&mut rng, "s", config.source_items, c);
    let tgt = make_domain(&mut rng, "t", config.target_items, c);
    let source_content = content(&mut rng, &src, "source", config.source_dim, c, config.spread)?;
    let target_content = content(&mut rng, &tgt, "target", config.target_dim, c, config.spread)?;

    let mut source = RatingMatrix::new("source", config.source_k)?;
    let mut target = RatingMatrix::new("target", config.target_k)?;
    let mut source_cluster = BTreeMap::new();
    let mut target_cluster = BTreeMap::new();
    let width = config.users.to_string().len();
    for u in 0..config.users {
        let user = format!("u{u:0width$}");
        let sc = rng.gen_range(0..c);
        let tc = if c == 1 || rng.gen_bool(config.correlation) {
            sc
        } else {
            // Uniform over the other clusters.
            let other = rng.gen_range(0..c - 1);
            if other >= sc {
                other + 1
            } else {
                other
            }
        };
        rate(&mut rng, &mut source, &user, &src, sc, config, config.source_k)?;
        rate(&mut rng, &mut target, &user, &tgt, tc, config, config.target_k)?;
        source_cluster.insert(user.clone(), sc);
        target_cluster.insert(user, tc);
    }

    let blocks = |d: &Domain| d.ids.iter().cloned().zip(d.block_of.iter().copied()).collect();
    Ok(SyntheticData {
        source_block: blocks(&src),
        target_block: blocks(&tgt),
        data: CrossDomainData {
            source,
            target,
            source_content,
            target_content,
        },
        source_cluster,
        target_cluster,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            users: 40,
            source_items: 30,
            target_items: 40,
            clusters: 3,
            seed: 11,
            ..SynthConfig::default()
        }
    }

    fn csv_bytes(d: &SyntheticData) -> Vec<u8> {
        let mut out = Vec::new();
        d.data.source.write_csv(&mut out).unwrap();
        d.data.target.write_csv(&mut out).unwrap();
        d.data.source_content.write_csv(&mut out).unwrap();
        d.data.target_content.write_csv(&mut out).unwrap();
        out
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(csv_bytes(&a), csv_bytes(&b));
        let c = generate_synthetic(&SynthConfig { seed: 12, ..small() }).unwrap();
        assert_ne!(csv_bytes(&a), csv_bytes(&c));
    }

    #[test]
    fn full_correlation_without_noise_follows_clusters() {
        let d = generate_synthetic(&SynthConfig { correlation: 1.0, noise: 0.0, ..small() }).unwrap();
        assert_eq!(d.source_cluster, d.target_cluster);
        for (user, item, rating) in d.data.target.iter() {
            let own = d.target_cluster[user];
            let block = d.target_block[item];
            if rating == 2 {
                assert_eq!(block, own);
            } else {
                assert_eq!(block, (own + 1) % 3);
            }
        }
        d.data.validate().unwrap();
    }

    #[test]
    fn full_noise_ignores_clusters() {
        let cfg = SynthConfig { users: 300, noise: 1.0, ..small() };
        let d = generate_synthetic(&cfg).unwrap();
        // Share of top ratings that land in the user's own block stays near 1/3.
        let (mut own, mut top) = (0usize, 0usize);
        for (user, item, rating) in d.data.source.iter() {
            if rating == 2 {
                top += 1;
                own += usize::from(d.source_block[item] == d.source_cluster[user]);
            }
        }
        let share = own as f64 / top as f64;
        assert!((share - 1.0 / 3.0).abs() < 0.05, "{share}");
    }

    #[test]
    fn infeasible_configs_are_rejected() {
        for cfg in [
            SynthConfig { clusters: 50, ..small() },
            SynthConfig { noise: 1.5, ..small() },
            SynthConfig { users: 0, ..small() },
            SynthConfig { target_k: 1, ..small() },
        ] {
            assert!(matches!(generate_synthetic(&cfg), Err(Error::Config(_))), "{cfg:?}");
        }
    }
}
