//! Behavior graphs: (item, rating) nodes linked by the Jaccard similarity of
//! their supporting user sets.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Read, Write};
use std::path::Path;

use petgraph::unionfind::UnionFind;
use rayon::prelude::*;

use crate::csvio;
use crate::dataset::{jaccard, ItemId, Rating, RatingMatrix, UserId};
use crate::error::{Error, Result};

/// Default edge threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeKey {
    pub item: ItemId,
    pub rating: Rating,
}

impl std::fmt::Display for NodeKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.item, self.rating)
    }
}

/// An item paired with one rating value, together with the users who gave it
/// that rating.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatedItemNode {
    pub item: ItemId,
    pub rating: Rating,
    pub users: BTreeSet<UserId>,
}

impl RatedItemNode {
    pub fn key(&self) -> NodeKey {
        NodeKey {
            item: self.item.clone(),
            rating: self.rating,
        }
    }

    pub fn popularity(&self) -> usize {
        self.users.len()
    }
}

/// Popularity descending, then item id, then rating.
pub fn popularity_order(a: &RatedItemNode, b: &RatedItemNode) -> Ordering {
    b.popularity()
        .cmp(&a.popularity())
        .then_with(|| a.item.cmp(&b.item))
        .then_with(|| a.rating.cmp(&b.rating))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    /// Local node indices with `a < b`.
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// One connected component of a behavior forest.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorGraph {
    pub id: usize,
    /// Sorted by [`popularity_order`].
    pub nodes: Vec<RatedItemNode>,
    /// Sorted by `(a, b)`.
    pub edges: Vec<Edge>,
}

impl BehaviorGraph {
    /// Neighbor lists `(node, weight)` per node, in node order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.a].push((e.b, e.weight));
            adj[e.b].push((e.a, e.weight));
        }
        for list in &mut adj {
            list.sort_by_key(|&(n, _)| n);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &(m, _) in &adj[n] {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn users(&self) -> BTreeSet<UserId> {
        self.nodes.iter().flat_map(|n| n.users.iter().cloned()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForestOptions {
    /// Leave isolated nodes out of the forest.
    pub drop_singletons: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorForest {
    pub domain: String,
    pub threshold: f64,
    pub graphs: Vec<BehaviorGraph>,
}

impl BehaviorForest {
    pub fn node_count(&self) -> usize {
        self.graphs.iter().map(|g| g.nodes.len()).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.graphs.iter().map(|g| g.edges.len()).sum()
    }
}

/// Splits every item into one node per rating value it received, sorted by
/// [`popularity_order`]. Rating values nobody gave are skipped.
pub fn expand_items(matrix: &RatingMatrix) -> Vec<RatedItemNode> {
    let mut groups: BTreeMap<(&str, Rating), BTreeSet<UserId>> = BTreeMap::new();
    for (user, item, rating) in matrix.iter() {
        groups.entry((item, rating)).or_default().insert(user.to_string());
    }
    let mut nodes: Vec<RatedItemNode> = groups
        .into_iter()
        .map(|((item, rating), users)| RatedItemNode {
            item: item.to_string(),
            rating,
            users,
        })
        .collect();
    nodes.sort_by(popularity_order);
    nodes
}

/// Builds the thresholded Jaccard graph over `nodes` and returns its connected
/// components. Two nodes are linked when they share at least one user and
/// their Jaccard similarity is at least `threshold`.
pub fn build_forest(
    domain: &str,
    nodes: &[RatedItemNode],
    threshold: f64,
    options: ForestOptions,
) -> Result<BehaviorForest> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("threshold {threshold} outside [0, 1]")));
    }
    let mut nodes = nodes.to_vec();
    nodes.sort_by(popularity_order);
    for pair in nodes.windows(2) {
        if pair[0].item == pair[1].item && pair[0].rating == pair[1].rating {
            return Err(Error::Validation(format!("duplicate node {}", pair[0].key())));
        }
    }

    let edges = thresholded_edges(&nodes, threshold);

    let mut uf = UnionFind::<usize>::new(nodes.len());
    for e in &edges {
        uf.union(e.a, e.b);
    }
    // Nodes are globally sorted, so grouping by first appearance orders the
    // components by their most popular node.
    let mut component_of_root: HashMap<usize, usize> = HashMap::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for idx in 0..nodes.len() {
        let root = uf.find(idx);
        let c = *component_of_root.entry(root).or_insert_with(|| {
            members.push(Vec::new());
            members.len() - 1
        });
        members[c].push(idx);
    }
    let mut local = vec![(0usize, 0usize); nodes.len()];
    for (c, list) in members.iter().enumerate() {
        for (pos, &idx) in list.iter().enumerate() {
            local[idx] = (c, pos);
        }
    }
    let mut component_edges: Vec<Vec<Edge>> = vec![Vec::new(); members.len()];
    for e in edges {
        let (c, a) = local[e.a];
        let (_, b) = local[e.b];
        component_edges[c].push(Edge { a, b, weight: e.weight });
    }

    let mut graphs = Vec::new();
    for (list, edges) in members.into_iter().zip(component_edges) {
        if options.drop_singletons && list.len() == 1 {
            continue;
        }
        graphs.push(BehaviorGraph {
            id: graphs.len(),
            nodes: list.into_iter().map(|i| nodes[i].clone()).collect(),
            edges,
        });
    }
    Ok(BehaviorForest {
        domain: domain.to_string(),
        threshold,
        graphs,
    })
}

/// All edges over globally sorted `nodes`, in `(a, b)` order.
fn thresholded_edges(nodes: &[RatedItemNode], threshold: f64) -> Vec<Edge> {
    // Only pairs sharing a user can have a nonzero weight, so intersections
    // are counted through a user -> nodes index instead of over all pairs.
    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut by_user: Vec<Vec<usize>> = Vec::new();
    for (idx, node) in nodes.iter().enumerate() {
        for u in &node.users {
            let slot = *user_index.entry(u.as_str()).or_insert_with(|| {
                by_user.push(Vec::new());
                by_user.len() - 1
            });
            by_user[slot].push(idx);
        }
    }
    let user_slots: Vec<Vec<usize>> = nodes
        .iter()
        .map(|n| n.users.iter().map(|u| user_index[u.as_str()]).collect())
        .collect();
    (0..nodes.len())
        .into_par_iter()
        .map_init(
            || (vec![0usize; nodes.len()], Vec::new()),
            |(counts, touched), a| {
                for &u in &user_slots[a] {
                    // Lists are ascending, so the part after `a` is a suffix.
                    let list = &by_user[u];
                    let from = list.partition_point(|&b| b <= a);
                    for &b in &list[from..] {
                        if counts[b] == 0 {
                            touched.push(b);
                        }
                        counts[b] += 1;
                    }
                }
                touched.sort_unstable();
                let mut out = Vec::new();
                for &b in touched.iter() {
                    let inter = counts[b];
                    counts[b] = 0;
                    let union = nodes[a].users.len() + nodes[b].users.len() - inter;
                    let weight = inter as f64 / union as f64;
                    if weight >= threshold {
                        out.push(Edge { a, b, weight });
                    }
                }
                touched.clear();
                out
            },
        )
        .flatten_iter()
        .collect()
}

impl BehaviorForest {
    pub fn write_nodes_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "component_id,item_id,rating,popularity")?;
        for g in &self.graphs {
            for n in &g.nodes {
                writeln!(out, "{},{},{},{}", g.id, n.item, n.rating, n.popularity())?;
            }
        }
        Ok(())
    }

    pub fn write_edges_csv<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "component_id,item_a,rating_a,item_b,rating_b,weight")?;
        for g in &self.graphs {
            for e in &g.edges {
                let (a, b) = (&g.nodes[e.a], &g.nodes[e.b]);
                writeln!(
                    out,
                    "{},{},{},{},{},{:.6}",
                    g.id, a.item, a.rating, b.item, b.rating, e.weight
                )?;
            }
        }
        Ok(())
    }

    pub fn save(&self, nodes_path: &Path, edges_path: &Path) -> Result<()> {
        csvio::write_file(nodes_path, |w| self.write_nodes_csv(w))?;
        csvio::write_file(edges_path, |w| self.write_edges_csv(w))
    }

    /// Rebuilds a forest from its node and edge exports. User sets come from
    /// `matrix`; edge weights are recomputed from them and must agree with the
    /// printed weights.
    pub fn read_csv<R1: Read, R2: Read>(
        nodes_in: R1,
        edges_in: R2,
        names: (&Path, &Path),
        matrix: &RatingMatrix,
        threshold: f64,
    ) -> Result<Self> {
        let mut users: HashMap<NodeKey, BTreeSet<UserId>> = HashMap::new();
        for n in expand_items(matrix) {
            users.insert(n.key(), n.users);
        }

        let mut ncsv = csvio::from_reader(nodes_in, names.0);
        ncsv.expect_header(&["component_id", "item_id", "rating", "popularity"], false)?;
        let mut graphs: BTreeMap<usize, BehaviorGraph> = BTreeMap::new();
        let mut index: HashMap<NodeKey, (usize, usize)> = HashMap::new();
        for (line, f) in ncsv.records()? {
            if f.len() != 4 {
                return Err(ncsv.parse_error(line, "expected 4 fields"));
            }
            let comp = parse_num::<usize, _>(&ncsv, line, &f[0])?;
            let key = NodeKey {
                item: f[1].clone(),
                rating: parse_num(&ncsv, line, &f[2])?,
            };
            let popularity: usize = parse_num(&ncsv, line, &f[3])?;
            let node_users = users
                .get(&key)
                .cloned()
                .ok_or_else(|| ncsv.parse_error(line, format!("node {key} has no ratings in the matrix")))?;
            if node_users.len() != popularity {
                return Err(ncsv.parse_error(
                    line,
                    format!("node {key} popularity {popularity} disagrees with ratings ({})", node_users.len()),
                ));
            }
            let g = graphs.entry(comp).or_insert_with(|| BehaviorGraph {
                id: comp,
                nodes: Vec::new(),
                edges: Vec::new(),
            });
            if index.insert(key.clone(), (comp, g.nodes.len())).is_some() {
                return Err(ncsv.parse_error(line, format!("node {key} listed twice")));
            }
            g.nodes.push(RatedItemNode {
                item: key.item,
                rating: key.rating,
                users: node_users,
            });
        }

        let mut ecsv = csvio::from_reader(edges_in, names.1);
        ecsv.expect_header(&["component_id", "item_a", "rating_a", "item_b", "rating_b", "weight"], false)?;
        for (line, f) in ecsv.records()? {
            if f.len() != 6 {
                return Err(ecsv.parse_error(line, "expected 6 fields"));
            }
            let comp: usize = parse_num(&ecsv, line, &f[0])?;
            let ka = NodeKey { item: f[1].clone(), rating: parse_num(&ecsv, line, &f[2])? };
            let kb = NodeKey { item: f[3].clone(), rating: parse_num(&ecsv, line, &f[4])? };
            let printed: f64 = parse_num(&ecsv, line, &f[5])?;
            let (&(ca, a), &(cb, b)) = match (index.get(&ka), index.get(&kb)) {
                (Some(x), Some(y)) => (x, y),
                _ => return Err(ecsv.parse_error(line, "edge endpoint not in node list")),
            };
            if ca != comp || cb != comp {
                return Err(ecsv.parse_error(line, "edge crosses components"));
            }
            let g = graphs.get_mut(&comp).expect("component exists");
            let weight = jaccard(&g.nodes[a].users, &g.nodes[b].users);
            if (weight - printed).abs() > 5e-7 {
                return Err(ecsv.parse_error(
                    line,
                    format!("weight {printed} disagrees with recomputed {weight:.6}"),
                ));
            }
            g.edges.push(Edge { a: a.min(b), b: a.max(b), weight });
        }
        let mut graphs: Vec<BehaviorGraph> = graphs.into_values().collect();
        for g in &mut graphs {
            g.edges.sort_by_key(|e| (e.a, e.b));
        }
        Ok(BehaviorForest {
            domain: matrix.domain().to_string(),
            threshold,
            graphs,
        })
    }

    pub fn load(nodes_path: &Path, edges_path: &Path, matrix: &RatingMatrix, threshold: f64) -> Result<Self> {
        Self::read_csv(
            csvio::open(nodes_path)?,
            csvio::open(edges_path)?,
            (nodes_path, edges_path),
            matrix,
            threshold,
        )
    }
}

fn parse_num<T: std::str::FromStr, R: Read>(csv: &csvio::CsvInput<R>, line: u64, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| csv.parse_error(line, format!("`{raw}` is not a valid number")))
}
