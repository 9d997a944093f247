//! Cross-domain tree matching.
//!
//! Each source tree is paired with the target tree whose user population is
//! most similar (Jaccard over the union of node user sets). Within a pair,
//! nodes are matched one-to-one level by level: at every depth all unmatched
//! candidates (that level plus anything carried down from above) are scored by
//! user-set Jaccard and accepted greedily, best score first.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::io::{self, Read, Write};
use std::path::Path;

use crate::csvio;
use crate::dataset::{jaccard, UserId};
use crate::graph::{NodeKey, RatedItemNode};
use crate::error::{Error, Result};
use crate::tree::BehaviorTree;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreePair {
    /// Index into the source tree list.
    pub source: usize,
    /// Index into the target tree list.
    pub target: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bridge {
    pub source: RatedItemNode,
    pub target: RatedItemNode,
    pub similarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MatchOptions {
    /// Allow each target tree to be chosen by at most one source tree.
    pub unique_tree_pairing: bool,
}

pub fn tree_similarity(a: &BehaviorTree, b: &BehaviorTree) -> f64 {
    jaccard(&a.users(), &b.users())
}

/// Picks, for each source tree, the most similar target tree. Ties go to the
/// larger target tree, then the lower target index. Zero-similarity pairs are
/// dropped. Output is in source order.
pub fn pair_trees(source: &[BehaviorTree], target: &[BehaviorTree], options: MatchOptions) -> Vec<TreePair> {
    let source_users: Vec<BTreeSet<UserId>> = source.iter().map(BehaviorTree::users).collect();
    let target_users: Vec<BTreeSet<UserId>> = target.iter().map(BehaviorTree::users).collect();
    let mut trees_of_user: HashMap<&str, Vec<usize>> = HashMap::new();
    for (t, users) in target_users.iter().enumerate() {
        for u in users {
            trees_of_user.entry(u.as_str()).or_default().push(t);
        }
    }

    // Candidate pairs share at least one user; everything else scores zero.
    let mut candidates: Vec<TreePair> = Vec::new();
    let mut counts = vec![0usize; target.len()];
    let mut touched = Vec::new();
    for (s, users) in source_users.iter().enumerate() {
        for u in users {
            for &t in trees_of_user.get(u.as_str()).into_iter().flatten() {
                if counts[t] == 0 {
                    touched.push(t);
                }
                counts[t] += 1;
            }
        }
        touched.sort_unstable();
        for &t in &touched {
            let inter = counts[t];
            counts[t] = 0;
            let similarity = inter as f64 / (users.len() + target_users[t].len() - inter) as f64;
            candidates.push(TreePair { source: s, target: t, similarity });
        }
        touched.clear();
    }
    let better = |a: &TreePair, b: &TreePair| -> Ordering {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| target[b.target].size().cmp(&target[a.target].size()))
            .then_with(|| a.target.cmp(&b.target))
    };

    let mut pairs = Vec::new();
    if options.unique_tree_pairing {
        candidates.sort_by(|a, b| better(a, b).then_with(|| a.source.cmp(&b.source)));
        let mut used_source = vec![false; source.len()];
        let mut used_target = vec![false; target.len()];
        for c in candidates {
            if !used_source[c.source] && !used_target[c.target] {
                used_source[c.source] = true;
                used_target[c.target] = true;
                pairs.push(c);
            }
        }
        pairs.sort_by_key(|p| p.source);
    } else {
        let mut best: Vec<Option<TreePair>> = vec![None; source.len()];
        for c in candidates {
            let slot = &mut best[c.source];
            if slot.map_or(true, |cur| better(&c, &cur) == Ordering::Less) {
                *slot = Some(c);
            }
        }
        pairs.extend(best.into_iter().flatten());
    }
    pairs
}

/// Greedy one-to-one node matching between two paired trees.
pub fn match_nodes(source: &BehaviorTree, target: &BehaviorTree) -> Vec<Bridge> {
    let source_levels = source.levels();
    let target_levels = target.levels();
    let depth = source_levels.len().max(target_levels.len());

    // Users as sorted integer ids, and a cache of pair scores: carried-down
    // nodes meet the same partners again at deeper levels.
    let mut ids: HashMap<&str, u32> = HashMap::new();
    for n in source.nodes.iter().chain(&target.nodes) {
        for u in &n.users {
            let next = ids.len() as u32;
            ids.entry(u.as_str()).or_insert(next);
        }
    }
    let intern = |n: &RatedItemNode| -> Vec<u32> {
        let mut v: Vec<u32> = n.users.iter().map(|u| ids[u.as_str()]).collect();
        v.sort_unstable();
        v
    };
    let source_users: Vec<Vec<u32>> = source.nodes.iter().map(intern).collect();
    let target_users: Vec<Vec<u32>> = target.nodes.iter().map(intern).collect();
    let mut cache: Vec<Option<f64>> = vec![None; source.nodes.len() * target.nodes.len()];
    let mut score_of = |s: usize, t: usize| -> f64 {
        *cache[s * target.nodes.len() + t].get_or_insert_with(|| sorted_jaccard(&source_users[s], &target_users[t]))
    };

    let mut open_source: Vec<usize> = Vec::new();
    let mut open_target: Vec<usize> = Vec::new();
    let mut bridges = Vec::new();
    for d in 0..depth {
        open_source.extend(source_levels.get(d).into_iter().flatten());
        open_target.extend(target_levels.get(d).into_iter().flatten());

        let mut scored: Vec<(usize, usize, f64)> = Vec::new();
        for &s in &open_source {
            for &t in &open_target {
                let score = score_of(s, t);
                if score > 0.0 {
                    scored.push((s, t, score));
                }
            }
        }
        scored.sort_by(|&(sa, ta, a), &(sb, tb, b)| {
            let pop = |s: usize, t: usize| source.nodes[s].popularity() + target.nodes[t].popularity();
            b.total_cmp(&a)
                .then_with(|| pop(sb, tb).cmp(&pop(sa, ta)))
                .then_with(|| source.nodes[sa].key().cmp(&source.nodes[sb].key()))
                .then_with(|| target.nodes[ta].key().cmp(&target.nodes[tb].key()))
        });
        let mut taken_source = BTreeSet::new();
        let mut taken_target = BTreeSet::new();
        for (s, t, score) in scored {
            if taken_source.contains(&s) || taken_target.contains(&t) {
                continue;
            }
            taken_source.insert(s);
            taken_target.insert(t);
            bridges.push(Bridge {
                source: source.nodes[s].clone(),
                target: target.nodes[t].clone(),
                similarity: score,
            });
        }
        open_source.retain(|s| !taken_source.contains(s));
        open_target.retain(|t| !taken_target.contains(t));
    }
    bridges
}

/// Jaccard of two sorted, duplicate-free id lists. Same arithmetic as
/// [`jaccard`].
fn sorted_jaccard(a: &[u32], b: &[u32]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Pairs the trees and matches nodes within every pair. Bridges are ordered by
/// source tree, then by descending similarity.
pub fn match_forests(source: &[BehaviorTree], target: &[BehaviorTree], options: MatchOptions) -> Vec<Bridge> {
    let mut out = Vec::new();
    for pair in pair_trees(source, target, options) {
        let mut bridges = match_nodes(&source[pair.source], &target[pair.target]);
        bridges.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| a.source.key().cmp(&b.source.key()))
                .then_with(|| a.target.key().cmp(&b.target.key()))
        });
        out.extend(bridges);
    }
    out
}

pub fn write_bridges_csv<W: Write + ?Sized>(bridges: &[Bridge], out: &mut W) -> io::Result<()> {
    writeln!(out, "src_item,src_rating,tgt_item,tgt_rating,similarity")?;
    for b in bridges {
        writeln!(
            out,
            "{},{},{},{},{:.6}",
            b.source.item, b.source.rating, b.target.item, b.target.rating, b.similarity
        )?;
    }
    Ok(())
}

pub fn save_bridges(bridges: &[Bridge], path: &Path) -> Result<()> {
    csvio::write_file(path, |w| write_bridges_csv(bridges, w))
}

/// Reads a bridge export. Node user sets are looked up in `source_nodes` and
/// `target_nodes` and the similarity is recomputed from them.
pub fn read_bridges_csv<R: Read>(
    input: R,
    name: &Path,
    source_nodes: &[RatedItemNode],
    target_nodes: &[RatedItemNode],
) -> Result<Vec<Bridge>> {
    let lookup = |nodes: &[RatedItemNode]| -> HashMap<NodeKey, RatedItemNode> {
        nodes.iter().map(|n| (n.key(), n.clone())).collect()
    };
    let (src, tgt) = (lookup(source_nodes), lookup(target_nodes));
    let mut csv = csvio::from_reader(input, name);
    csv.expect_header(&["src_item", "src_rating", "tgt_item", "tgt_rating", "similarity"], false)?;
    let mut bridges = Vec::new();
    for (line, f) in csv.records()? {
        if f.len() != 5 {
            return Err(csv.parse_error(line, "expected 5 fields"));
        }
        let rating = |raw: &str| -> Result<u8> {
            raw.parse().map_err(|_| csv.parse_error(line, format!("`{raw}` is not a rating")))
        };
        let sk = NodeKey { item: f[0].clone(), rating: rating(&f[1])? };
        let tk = NodeKey { item: f[2].clone(), rating: rating(&f[3])? };
        let (Some(s), Some(t)) = (src.get(&sk), tgt.get(&tk)) else {
            return Err(csv.parse_error(line, format!("unknown bridge endpoint {sk} / {tk}")));
        };
        bridges.push(Bridge {
            similarity: jaccard(&s.users, &t.users),
            source: s.clone(),
            target: t.clone(),
        });
    }
    Ok(bridges)
}

pub fn load_bridges(path: &Path, source_nodes: &[RatedItemNode], target_nodes: &[RatedItemNode]) -> Result<Vec<Bridge>> {
    read_bridges_csv(csvio::open(path)?, path, source_nodes, target_nodes).map_err(|e| match e {
        Error::Parse { .. } | Error::Io { .. } => e,
        other => Error::Validation(format!("{}: {other}", path.display())),
    })
}
