//! Behavior trees: each behavior graph reduced to a rooted tree under an
//! artificial root.
//!
//! The root's children are the graph's popular nodes (popularity strictly above
//! the graph mean). Every other node, taken in popularity order, hangs off the
//! already-placed neighbor it shares the heaviest edge with. Nodes with no
//! placed neighbor yet are retried on the next pass.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::io::{self, Read, Write};
use std::path::Path;

use crate::csvio;
use crate::dataset::UserId;
use crate::graph::{BehaviorForest, BehaviorGraph, NodeKey, RatedItemNode};
use crate::error::{Error, Result};

pub const ROOT_ITEM: &str = "__ROOT__";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Parent {
    Root,
    Node { index: usize, weight: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorTree {
    /// Id of the source graph.
    pub id: usize,
    /// The source graph's nodes, in graph order.
    pub nodes: Vec<RatedItemNode>,
    pub parents: Vec<Parent>,
    /// Children per node, in node order.
    pub children: Vec<Vec<usize>>,
    pub root_children: Vec<usize>,
}

impl BehaviorTree {
    /// Number of nodes including the artificial root.
    pub fn size(&self) -> usize {
        self.nodes.len() + 1
    }

    /// Depth of a node; the root's children have depth 1.
    pub fn depth(&self, mut idx: usize) -> usize {
        let mut depth = 1;
        while let Parent::Node { index, .. } = self.parents[idx] {
            idx = index;
            depth += 1;
        }
        depth
    }

    /// Node indices grouped by depth, starting at depth 1.
    pub fn levels(&self) -> Vec<Vec<usize>> {
        let mut levels: Vec<Vec<usize>> = Vec::new();
        let mut frontier = self.root_children.clone();
        while !frontier.is_empty() {
            let next: Vec<usize> = frontier
                .iter()
                .flat_map(|&n| self.children[n].iter().copied())
                .collect();
            levels.push(frontier);
            frontier = next;
        }
        levels
    }

    /// Union of the user sets of every node.
    pub fn users(&self) -> BTreeSet<UserId> {
        self.nodes.iter().flat_map(|n| n.users.iter().cloned()).collect()
    }

    fn from_parents(id: usize, nodes: Vec<RatedItemNode>, parents: Vec<Parent>) -> Self {
        let mut children = vec![Vec::new(); nodes.len()];
        let mut root_children = Vec::new();
        for (idx, p) in parents.iter().enumerate() {
            match p {
                Parent::Root => root_children.push(idx),
                Parent::Node { index, .. } => children[*index].push(idx),
            }
        }
        BehaviorTree {
            id,
            nodes,
            parents,
            children,
            root_children,
        }
    }
}

fn popular_nodes(graph: &BehaviorGraph) -> Vec<usize> {
    let total: usize = graph.nodes.iter().map(RatedItemNode::popularity).sum();
    let mean = total as f64 / graph.nodes.len() as f64;
    let popular: Vec<usize> = (0..graph.nodes.len())
        .filter(|&i| graph.nodes[i].popularity() as f64 > mean)
        .collect();
    if popular.is_empty() {
        // Uniform popularity: nodes are in popularity order, so the first is
        // the most popular with the smallest key.
        vec![0]
    } else {
        popular
    }
}

/// Orders candidate parents: heavier edge, then more popular parent, then
/// smaller (item, rating).
fn better_parent(graph: &BehaviorGraph, a: (usize, f64), b: (usize, f64)) -> Ordering {
    let (na, nb) = (&graph.nodes[a.0], &graph.nodes[b.0]);
    a.1.total_cmp(&b.1)
        .then_with(|| na.popularity().cmp(&nb.popularity()))
        .then_with(|| nb.key().cmp(&na.key()))
}

pub fn build_tree(graph: &BehaviorGraph) -> Result<BehaviorTree> {
    if graph.nodes.is_empty() {
        return Err(Error::Structure(format!("graph {} is empty", graph.id)));
    }
    if !graph.is_connected() {
        return Err(Error::Structure(format!("graph {} is not connected", graph.id)));
    }
    let adj = graph.adjacency();
    let mut parents: Vec<Option<Parent>> = vec![None; graph.nodes.len()];
    for idx in popular_nodes(graph) {
        parents[idx] = Some(Parent::Root);
    }
    let mut pending: Vec<usize> = (0..graph.nodes.len()).filter(|&i| parents[i].is_none()).collect();
    while !pending.is_empty() {
        let before = pending.len();
        let mut deferred = Vec::new();
        for idx in pending {
            let best = adj[idx]
                .iter()
                .copied()
                .filter(|&(n, _)| parents[n].is_some())
                .max_by(|&a, &b| better_parent(graph, a, b));
            match best {
                Some((index, weight)) => parents[idx] = Some(Parent::Node { index, weight }),
                None => deferred.push(idx),
            }
        }
        if deferred.len() == before {
            return Err(Error::Structure(format!("graph {} has unreachable nodes", graph.id)));
        }
        pending = deferred;
    }
    let parents = parents.into_iter().map(|p| p.expect("every node attached")).collect();
    Ok(BehaviorTree::from_parents(graph.id, graph.nodes.clone(), parents))
}

pub fn build_trees(forest: &BehaviorForest) -> Result<Vec<BehaviorTree>> {
    forest.graphs.iter().map(build_tree).collect()
}

pub fn write_trees_csv<W: Write + ?Sized>(trees: &[BehaviorTree], out: &mut W) -> io::Result<()> {
    writeln!(out, "tree_id,child_item,child_rating,parent_item,parent_rating,edge_weight")?;
    for t in trees {
        for (node, parent) in t.nodes.iter().zip(&t.parents) {
            match parent {
                Parent::Root => writeln!(out, "{},{},{},{ROOT_ITEM},0,{:.6}", t.id, node.item, node.rating, 0.0)?,
                Parent::Node { index, weight } => {
                    let p = &t.nodes[*index];
                    writeln!(
                        out,
                        "{},{},{},{},{},{:.6}",
                        t.id, node.item, node.rating, p.item, p.rating, weight
                    )?
                }
            }
        }
    }
    Ok(())
}

pub fn save_trees(trees: &[BehaviorTree], path: &Path) -> Result<()> {
    csvio::write_file(path, |w| write_trees_csv(trees, w))
}

/// Reads a tree export back against the forest it was built from. Parent
/// edges must exist in the graph; weights are taken from the graph.
pub fn read_trees_csv<R: Read>(input: R, name: &Path, forest: &BehaviorForest) -> Result<Vec<BehaviorTree>> {
    let mut csv = csvio::from_reader(input, name);
    csv.expect_header(
        &["tree_id", "child_item", "child_rating", "parent_item", "parent_rating", "edge_weight"],
        false,
    )?;
    let graphs: HashMap<usize, &BehaviorGraph> = forest.graphs.iter().map(|g| (g.id, g)).collect();
    let mut parents: HashMap<usize, Vec<Option<Parent>>> = HashMap::new();
    for (line, f) in csv.records()? {
        if f.len() != 6 {
            return Err(csv.parse_error(line, "expected 6 fields"));
        }
        let num = |raw: &str| -> Result<usize> {
            raw.parse().map_err(|_| csv.parse_error(line, format!("`{raw}` is not a number")))
        };
        let tree_id = num(&f[0])?;
        let graph = graphs
            .get(&tree_id)
            .ok_or_else(|| csv.parse_error(line, format!("tree {tree_id} has no graph")))?;
        let position = |item: &str, rating: &str| -> Result<usize> {
            let key = NodeKey { item: item.to_string(), rating: num(rating)? as u8 };
            graph
                .nodes
                .iter()
                .position(|n| n.item == key.item && n.rating == key.rating)
                .ok_or_else(|| csv.parse_error(line, format!("node {key} not in graph {tree_id}")))
        };
        let child = position(&f[1], &f[2])?;
        let parent = if f[3] == ROOT_ITEM {
            Parent::Root
        } else {
            let index = position(&f[3], &f[4])?;
            let edge = graph
                .edges
                .iter()
                .find(|e| (e.a, e.b) == (child.min(index), child.max(index)))
                .ok_or_else(|| csv.parse_error(line, "parent link is not a graph edge"))?;
            Parent::Node { index, weight: edge.weight }
        };
        let slots = parents.entry(tree_id).or_insert_with(|| vec![None; graph.nodes.len()]);
        if slots[child].replace(parent).is_some() {
            return Err(csv.parse_error(line, "node listed twice"));
        }
    }
    let mut trees = Vec::new();
    for g in &forest.graphs {
        let slots = parents
            .remove(&g.id)
            .ok_or_else(|| Error::Validation(format!("{}: tree {} missing", name.display(), g.id)))?;
        let parents: Option<Vec<Parent>> = slots.into_iter().collect();
        let parents = parents
            .ok_or_else(|| Error::Validation(format!("{}: tree {} is incomplete", name.display(), g.id)))?;
        let tree = BehaviorTree::from_parents(g.id, g.nodes.clone(), parents);
        // Reject cycles: every node must reach the root.
        if tree.levels().iter().map(Vec::len).sum::<usize>() != tree.nodes.len() {
            return Err(Error::Validation(format!("{}: tree {} has a cycle", name.display(), g.id)));
        }
        trees.push(tree);
    }
    Ok(trees)
}

pub fn load_trees(path: &Path, forest: &BehaviorForest) -> Result<Vec<BehaviorTree>> {
    read_trees_csv(csvio::open(path)?, path, forest)
}
