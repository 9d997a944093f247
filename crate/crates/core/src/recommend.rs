//! Ranking target items for users known only from the source domain, plus the
//! popularity and cross-domain KNN baselines.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::dataset::{ContentCatalog, ItemId, Rating, RatingMatrix, UserId};
use crate::error::{Error, Result};
use crate::training::{Classifier, DistributionVector, RowRef};

/// Default neighborhood size of the KNN baseline.
pub const DEFAULT_NEIGHBORS: usize = 20;

/// Classifier input for one (user, target item): one row per source rating of
/// the user.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub target_item: ItemId,
    pub rows: Vec<FeatureMatrixRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrixRow {
    pub source_features: Vec<f64>,
    pub source_rating: Rating,
    pub target_features: Vec<f64>,
}

impl FeatureMatrixRow {
    pub fn as_row(&self) -> RowRef<'_> {
        RowRef {
            source_features: &self.source_features,
            source_rating: self.source_rating,
            target_features: &self.target_features,
        }
    }
}

impl FeatureMatrix {
    /// Columns: source features, source rating, target features, class slot.
    pub fn columns(&self) -> usize {
        self.rows
            .first()
            .map_or(0, |r| r.source_features.len() + r.target_features.len() + 2)
    }

    /// Dense view with the class slot as NaN.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| {
                let mut v = r.source_features.clone();
                v.push(f64::from(r.source_rating));
                v.extend(&r.target_features);
                v.push(f64::NAN);
                v
            })
            .collect()
    }
}

pub fn build_feature_matrix(
    user_source_ratings: &[(ItemId, Rating)],
    target_item: &str,
    source_content: &ContentCatalog,
    target_content: &ContentCatalog,
) -> Result<FeatureMatrix> {
    if user_source_ratings.is_empty() {
        return Err(Error::ColdStart("user has no source-domain ratings".into()));
    }
    let target = target_content.require(target_item)?;
    let rows = user_source_ratings
        .iter()
        .map(|(item, rating)| {
            Ok(FeatureMatrixRow {
                source_features: source_content.require(item)?.to_vec(),
                source_rating: *rating,
                target_features: target.to_vec(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(FeatureMatrix {
        target_item: target_item.to_string(),
        rows,
    })
}

/// Σ j·P[j] over ratings j = 1..k.
pub fn expected_rating(dist: &DistributionVector) -> f64 {
    dist.probabilities()
        .iter()
        .enumerate()
        .map(|(j, p)| (j + 1) as f64 * p)
        .sum()
}

/// Mean expected rating over the rows of `matrix`.
pub fn rank_matrix(matrix: &FeatureMatrix, model: &dyn Classifier) -> Result<f64> {
    if matrix.rows.is_empty() {
        return Err(Error::ColdStart(format!("empty feature matrix for `{}`", matrix.target_item)));
    }
    let mut total = 0.0;
    for row in &matrix.rows {
        total += expected_rating(&model.predict_distribution(row.as_row())?);
    }
    Ok(total / matrix.rows.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub item: ItemId,
    pub score: f64,
    /// 1-based.
    pub position: usize,
}

/// Keeps the `n` best `(item, score)` pairs: score descending, then item id.
pub fn top_n_by_score(mut scored: Vec<(ItemId, f64)>, n: usize) -> Vec<Recommendation> {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.dedup_by(|a, b| a.0 == b.0);
    scored
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, (item, score))| Recommendation { item, score, position: i + 1 })
        .collect()
}

/// Scores every target item by [`rank_matrix`] over the user's source ratings
/// and returns the best `n`.
pub fn recommend_top_n(
    model: &dyn Classifier,
    user_source_ratings: &[(ItemId, Rating)],
    target_items: &[ItemId],
    source_content: &ContentCatalog,
    target_content: &ContentCatalog,
    n: usize,
) -> Result<Vec<Recommendation>> {
    if n == 0 {
        return Err(Error::Config("N must be at least 1".into()));
    }
    if user_source_ratings.is_empty() {
        return Err(Error::ColdStart("user has no source-domain ratings".into()));
    }
    let sources: Vec<(&[f64], Rating)> = user_source_ratings
        .iter()
        .map(|(item, r)| Ok((source_content.require(item)?, *r)))
        .collect::<Result<_>>()?;
    let targets: Vec<&[f64]> = target_items
        .iter()
        .map(|item| target_content.require(item))
        .collect::<Result<_>>()?;
    let scores = model.mean_expected_ratings(&sources, &targets)?;
    let scored = target_items.iter().cloned().zip(scores).collect();
    Ok(top_n_by_score(scored, n))
}

/// Items with the most top-rated (rating = k) entries, ties by item id.
pub fn popularity_recommend(target_train: &RatingMatrix, n: usize) -> Vec<Recommendation> {
    let counts = positive_counts(target_train);
    top_n_by_score(counts.into_iter().map(|(i, c)| (i, c as f64)).collect(), n)
}

fn positive_counts(matrix: &RatingMatrix) -> BTreeMap<ItemId, usize> {
    let mut counts: BTreeMap<ItemId, usize> = BTreeMap::new();
    for (_, item, rating) in matrix.iter() {
        if rating == matrix.k() {
            *counts.entry(item.to_string()).or_default() += 1;
        }
    }
    counts
}

/// Pearson correlation; 0 for fewer than two points or zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() || a.len() < 2 {
        return 0.0;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    (cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0)
}

fn corated_pearson(a: &BTreeMap<ItemId, Rating>, b: &BTreeMap<ItemId, Rating>) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (item, &r) in small {
        if let Some(&s) = large.get(item) {
            xs.push(f64::from(r));
            ys.push(f64::from(s));
        }
    }
    if std::ptr::eq(small, a) {
        pearson(&xs, &ys)
    } else {
        pearson(&ys, &xs)
    }
}

/// Up to `k` users with the highest positive source-domain correlation to
/// `active_user`, among users with at least one target rating. Ties by user id.
pub fn knn_neighbors(
    active_user: &str,
    k: usize,
    source: &RatingMatrix,
    target: &RatingMatrix,
) -> Result<Vec<(UserId, f64)>> {
    let active = source
        .user_ratings(active_user)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::ColdStart(format!("user `{active_user}` has no source-domain ratings")))?;
    let mut neighbors: Vec<(UserId, f64)> = target
        .users()
        .filter(|u| u.as_str() != active_user)
        .filter_map(|u| {
            let sim = corated_pearson(active, source.user_ratings(u)?);
            (sim > 0.0).then(|| (u.clone(), sim))
        })
        .collect();
    neighbors.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    neighbors.truncate(k);
    Ok(neighbors)
}

/// Similarity-weighted mean of the neighbors' target ratings per item.
pub fn knn_predict(neighbors: &[(UserId, f64)], target: &RatingMatrix) -> BTreeMap<ItemId, f64> {
    let mut acc: BTreeMap<ItemId, (f64, f64)> = BTreeMap::new();
    for (user, sim) in neighbors {
        for (item, &r) in target.user_ratings(user).into_iter().flatten() {
            let slot = acc.entry(item.clone()).or_default();
            slot.0 += sim * f64::from(r);
            slot.1 += sim;
        }
    }
    acc.into_iter()
        .map(|(item, (num, den))| (item, num / den))
        .collect()
}

/// Cross-domain KNN: neighbors found in the source domain vote with their
/// target ratings. Items no neighbor rated follow in popularity order with
/// score 0.
pub fn knn_cross_domain_recommend(
    active_user: &str,
    k: usize,
    source: &RatingMatrix,
    target: &RatingMatrix,
    n: usize,
) -> Result<Vec<Recommendation>> {
    if k == 0 || n == 0 {
        return Err(Error::Config("K and N must be at least 1".into()));
    }
    let neighbors = knn_neighbors(active_user, k, source, target)?;
    let predicted = knn_predict(&neighbors, target);
    let mut out = top_n_by_score(predicted.into_iter().collect(), n);
    if out.len() < n {
        let taken: HashMap<ItemId, ()> = out.iter().map(|r| (r.item.clone(), ())).collect();
        let fallback = popularity_order_of_all(target)
            .into_iter()
            .filter(|i| !taken.contains_key(i));
        for item in fallback {
            if out.len() == n {
                break;
            }
            let position = out.len() + 1;
            out.push(Recommendation { item, score: 0.0, position });
        }
    }
    Ok(out)
}

/// Every rated target item, most positive ratings first, ties by item id.
fn popularity_order_of_all(target: &RatingMatrix) -> Vec<ItemId> {
    let counts = positive_counts(target);
    let mut items: Vec<(ItemId, usize)> = target
        .items()
        .into_iter()
        .map(|i| {
            let c = counts.get(&i).copied().unwrap_or(0);
            (i, c)
        })
        .collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items.into_iter().map(|(i, _)| i).collect()
}

pub fn write_recommendations_csv<W: Write + ?Sized>(
    rows: &[(UserId, Vec<Recommendation>)],
    out: &mut W,
) -> io::Result<()> {
    writeln!(out, "user_id,position,item_id,score")?;
    for (user, recs) in rows {
        for r in recs {
            writeln!(out, "{},{},{},{:.6}", user, r.position, r.item, r.score)?;
        }
    }
    Ok(())
}

pub fn save_recommendations(rows: &[(UserId, Vec<Recommendation>)], path: &Path) -> Result<()> {
    csvio::write_file(path, |w| write_recommendations_csv(rows, w))
}

/// Total order used for recommendation lists.
pub fn recommendation_order(a: &Recommendation, b: &Recommendation) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.item.cmp(&b.item))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dist(p: &[f64]) -> DistributionVector {
        DistributionVector::new(p.to_vec()).unwrap()
    }

    #[test]
    fn expected_rating_examples() {
        assert_eq!(expected_rating(&dist(&[1.0, 0.0, 0.0])), 1.0);
        assert_abs_diff_eq!(expected_rating(&dist(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(expected_rating(&dist(&[0.2, 0.3, 0.5])), 2.3, epsilon = 1e-12);
    }

    fn catalogs() -> (ContentCatalog, ContentCatalog) {
        let mut s = ContentCatalog::new("s", vec!["a".into(), "b".into()]);
        for i in 0..3 {
            s.insert(&format!("s{i}"), vec![i as f64, 1.0]).unwrap();
        }
        let mut t = ContentCatalog::new("t", vec!["c".into()]);
        t.insert("A", vec![1.0]).unwrap();
        t.insert("B", vec![2.0]).unwrap();
        (s, t)
    }

    #[test]
    fn feature_matrix_shape() {
        let (s, t) = catalogs();
        let ratings: Vec<(ItemId, Rating)> = (0..3).map(|i| (format!("s{i}"), 1)).collect();
        let m = build_feature_matrix(&ratings, "A", &s, &t).unwrap();
        assert_eq!(m.rows.len(), 3);
        assert_eq!(m.columns(), 5);
        let dense = m.to_dense();
        assert_eq!(&dense[2][..4], &[2.0, 1.0, 1.0, 1.0]);
        assert!(dense[2][4].is_nan());
        assert_eq!(build_feature_matrix(&ratings[..1], "A", &s, &t).unwrap().rows.len(), 1);
        assert!(matches!(build_feature_matrix(&[], "A", &s, &t), Err(Error::ColdStart(_))));
    }

    /// Returns a fixed distribution per source rating.
    struct ByRating(Vec<Vec<f64>>);

    impl Classifier for ByRating {
        fn classes(&self) -> usize {
            self.0[0].len()
        }
        fn predict_distribution(&self, row: RowRef<'_>) -> Result<DistributionVector> {
            DistributionVector::new(self.0[usize::from(row.source_rating) - 1].clone())
        }
    }

    fn matrix_with_ratings(ratings: &[Rating]) -> FeatureMatrix {
        FeatureMatrix {
            target_item: "x".into(),
            rows: ratings
                .iter()
                .map(|&r| FeatureMatrixRow { source_features: vec![], source_rating: r, target_features: vec![] })
                .collect(),
        }
    }

    #[test]
    fn rank_is_mean_of_row_expectations() {
        let model = ByRating(vec![vec![0.2, 0.3, 0.5], vec![0.5, 0.3, 0.2]]);
        // Rows with expected ratings 2.3 and 1.7.
        assert_abs_diff_eq!(rank_matrix(&matrix_with_ratings(&[1, 2]), &model).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rank_matrix(&matrix_with_ratings(&[1]), &model).unwrap(), 2.3, epsilon = 1e-12);
        let indicator = ByRating(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(rank_matrix(&matrix_with_ratings(&[1, 2, 3]), &indicator).unwrap(), 2.0);
        assert!(matches!(rank_matrix(&matrix_with_ratings(&[]), &model), Err(Error::ColdStart(_))));
    }

    #[test]
    fn top_n_examples() {
        let r = top_n_by_score(vec![("A".into(), 2.5), ("B".into(), 1.5)], 1);
        assert_eq!(r, vec![Recommendation { item: "A".into(), score: 2.5, position: 1 }]);
        let all = top_n_by_score(vec![("B".into(), 1.5), ("A".into(), 2.5)], 10);
        assert_eq!(all.iter().map(|r| r.item.as_str()).collect::<Vec<_>>(), vec!["A", "B"]);
        let tie = top_n_by_score(vec![("B".into(), 2.0), ("A".into(), 2.0)], 1);
        assert_eq!(tie[0].item, "A");
    }

    #[test]
    fn recommend_top_n_uses_rank() {
        let (s, t) = catalogs();
        /// Prefers target items with a larger feature.
        struct ByTarget;
        impl Classifier for ByTarget {
            fn classes(&self) -> usize {
                2
            }
            fn predict_distribution(&self, row: RowRef<'_>) -> Result<DistributionVector> {
                let p = row.target_features[0] / 4.0;
                DistributionVector::new(vec![1.0 - p, p])
            }
        }
        let items = vec!["A".to_string(), "B".to_string()];
        let ratings = vec![("s0".to_string(), 1)];
        let recs = recommend_top_n(&ByTarget, &ratings, &items, &s, &t, 5).unwrap();
        assert_eq!(recs.iter().map(|r| r.item.as_str()).collect::<Vec<_>>(), vec!["B", "A"]);
        assert_abs_diff_eq!(recs[0].score, 1.5);
        assert!(matches!(recommend_top_n(&ByTarget, &[], &items, &s, &t, 5), Err(Error::ColdStart(_))));
    }

    fn target_matrix(counts: &[(&str, usize)]) -> RatingMatrix {
        let mut m = RatingMatrix::new("t", 2).unwrap();
        for (item, c) in counts {
            for u in 0..*c {
                m.insert(&format!("u{u}"), item, 2).unwrap();
            }
        }
        m
    }

    #[test]
    fn popularity_examples() {
        let m = target_matrix(&[("A", 5), ("B", 3), ("C", 1)]);
        let items: Vec<_> = popularity_recommend(&m, 2).into_iter().map(|r| r.item).collect();
        assert_eq!(items, vec!["A", "B"]);
        let m = target_matrix(&[("C", 2), ("B", 2), ("A", 2)]);
        let items: Vec<_> = popularity_recommend(&m, 2).into_iter().map(|r| r.item).collect();
        assert_eq!(items, vec!["A", "B"]);
        assert!(popularity_recommend(&RatingMatrix::new("t", 2).unwrap(), 2).is_empty());
    }

    #[test]
    fn popularity_ignores_non_top_ratings() {
        let mut m = target_matrix(&[("A", 1)]);
        for u in 0..4 {
            m.insert(&format!("v{u}"), "B", 1).unwrap();
        }
        let items: Vec<_> = popularity_recommend(&m, 2).into_iter().map(|r| r.item).collect();
        assert_eq!(items, vec!["A"]);
    }

    #[test]
    fn pearson_examples() {
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 2.0, 4.0]), 0.866025, epsilon = 1e-6);
        assert_eq!(pearson(&[1.0], &[1.0]), 0.0);
        assert_eq!(pearson(&[1.0, 1.0], &[1.0, 2.0]), 0.0);
    }

    /// Source domain where `peers` correlate perfectly with `me` and `anti`
    /// is anti-correlated.
    fn knn_world(neighbor_ratings: &[(&str, &str, i64)]) -> (RatingMatrix, RatingMatrix) {
        let mut source = RatingMatrix::new("s", 3).unwrap();
        for (i, r) in [("s1", 1), ("s2", 2), ("s3", 3)] {
            source.insert("me", i, r).unwrap();
        }
        let mut target = RatingMatrix::new("t", 3).unwrap();
        for (user, item, r) in neighbor_ratings {
            if source.user_ratings(user).is_none() {
                for (i, sr) in [("s1", 1), ("s2", 2), ("s3", 3)] {
                    source.insert(user, i, sr).unwrap();
                }
            }
            target.insert(user, item, *r).unwrap();
        }
        (source, target)
    }

    #[test]
    fn knn_single_and_symmetric_neighbors() {
        let (s, t) = knn_world(&[("p1", "A", 3)]);
        assert_abs_diff_eq!(knn_predict(&knn_neighbors("me", 20, &s, &t).unwrap(), &t)["A"], 3.0, epsilon = 1e-12);
        let (s, t) = knn_world(&[("p1", "A", 1), ("p2", "A", 3)]);
        assert_abs_diff_eq!(knn_predict(&knn_neighbors("me", 20, &s, &t).unwrap(), &t)["A"], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn knn_weighted_mean() {
        let mut t = RatingMatrix::new("t", 3).unwrap();
        t.insert("a", "A", 2).unwrap();
        t.insert("b", "A", 3).unwrap();
        let neighbors = vec![("a".to_string(), 0.8), ("b".to_string(), 0.2)];
        assert_abs_diff_eq!(knn_predict(&neighbors, &t)["A"], 2.2, epsilon = 1e-12);
    }

    #[test]
    fn knn_excludes_negative_and_cold_users() {
        let (mut s, mut t) = knn_world(&[("p1", "A", 3)]);
        for (i, r) in [("s1", 3), ("s2", 2), ("s3", 1)] {
            s.insert("anti", i, r).unwrap();
        }
        t.insert("anti", "B", 3).unwrap();
        let n = knn_neighbors("me", 20, &s, &t).unwrap();
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].0, "p1");
        assert_abs_diff_eq!(n[0].1, 1.0, epsilon = 1e-12);
        assert!(matches!(knn_neighbors("ghost", 20, &s, &t), Err(Error::ColdStart(_))));
    }

    #[test]
    fn knn_fills_with_popular_items() {
        let (s, mut t) = knn_world(&[("p1", "A", 3)]);
        for u in 0..3 {
            t.insert(&format!("x{u}"), "C", 3).unwrap();
        }
        t.insert("x0", "B", 3).unwrap();
        let recs = knn_cross_domain_recommend("me", 20, &s, &t, 3).unwrap();
        let items: Vec<_> = recs.iter().map(|r| (r.item.as_str(), r.position)).collect();
        assert_eq!(items, vec![("A", 1), ("C", 2), ("B", 3)]);
        assert_eq!(recs[1].score, 0.0);
    }

    #[test]
    fn recommendations_csv_format() {
        let rows = vec![("u1".to_string(), top_n_by_score(vec![("A".into(), 2.5)], 1))];
        let mut buf = Vec::new();
        write_recommendations_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "user_id,position,item_id,score\nu1,1,A,2.500000\n");
    }
}
