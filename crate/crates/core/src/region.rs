//! Within-class connectivity: which pairs of same-class points are joined by a
//! straight segment that never leaves the class, and how the resulting graph
//! splits into components.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::features::Dataset;
use crate::path::{count_crossings, LineSegment, PathOptions};
use crate::util::fmt_f64;
use crate::{Error, Network, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    /// Node ids (dataset indices), in insertion order.
    pub nodes: Vec<usize>,
    /// `(u, v)` node ids with `u < v`, sorted, no duplicates.
    pub edges: Vec<(usize, usize)>,
    pub class_id: usize,
    /// Logit tolerance the segment sampler used for the edge test.
    pub score_tol: f64,
}

impl AdjacencyGraph {
    /// Normalizes edge order and rejects self-loops and unknown ids.
    pub fn new(nodes: Vec<usize>, edges: Vec<(usize, usize)>, class_id: usize, score_tol: f64) -> Result<Self> {
        let known: HashMap<usize, usize> = nodes.iter().enumerate().map(|(p, &id)| (id, p)).collect();
        if known.len() != nodes.len() {
            return Err(Error::InvalidInput("duplicate node id".into()));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop on node {u}")));
            }
            for id in [u, v] {
                if !known.contains_key(&id) {
                    return Err(Error::InvalidInput(format!("edge names unknown node {id}")));
                }
            }
            norm.push((u.min(v), u.max(v)));
        }
        norm.sort_unstable();
        norm.dedup();
        Ok(Self {
            nodes,
            edges: norm,
            class_id,
            score_tol,
        })
    }

    pub fn pair_count(&self) -> usize {
        let n = self.nodes.len();
        n * n.saturating_sub(1) / 2
    }

    /// `u v` per line.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (u, v) in &self.edges {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionReport {
    pub node_count: usize,
    pub edge_count: usize,
    /// Edges divided by unordered pairs.
    pub fraction_direct: f64,
    pub component_count: usize,
    /// Largest first.
    pub component_sizes: Vec<usize>,
    /// Least-connected node and its degree (lowest id on ties).
    pub min_degree_node: Option<(usize, usize)>,
    pub all_pairs_connected: bool,
}

impl RegionReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "node_count",
            "edge_count",
            "fraction_direct",
            "component_count",
            "component_sizes",
            "min_degree_node",
            "min_degree",
            "all_pairs_connected",
        ])?;
        let sizes: Vec<String> = self.component_sizes.iter().map(|s| s.to_string()).collect();
        let (node, degree) = match self.min_degree_node {
            Some((n, d)) => (n.to_string(), d.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            self.node_count.to_string(),
            self.edge_count.to_string(),
            fmt_f64(self.fraction_direct),
            self.component_count.to_string(),
            sizes.join(" "),
            node,
            degree,
            self.all_pairs_connected.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
    }
}

/// Component label for every node (labels are `0..count`, numbered by first
/// appearance in `graph.nodes`).
pub fn component_labels(graph: &AdjacencyGraph) -> Vec<usize> {
    let pos: HashMap<usize, usize> = graph.nodes.iter().enumerate().map(|(p, &id)| (id, p)).collect();
    let mut ds = DisjointSet::new(graph.nodes.len());
    for (u, v) in &graph.edges {
        ds.union(pos[u], pos[v]);
    }
    let mut label_of_root = HashMap::new();
    (0..graph.nodes.len())
        .map(|p| {
            let root = ds.find(p);
            let next = label_of_root.len();
            *label_of_root.entry(root).or_insert(next)
        })
        .collect()
}

/// Connectivity statistics of a graph.
pub fn connected_components(graph: &AdjacencyGraph) -> RegionReport {
    let labels = component_labels(graph);
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0; count];
    for &l in &labels {
        sizes[l] += 1;
    }
    sizes.sort_unstable_by(|a, b| b.cmp(a));

    let mut degree: HashMap<usize, usize> = graph.nodes.iter().map(|&id| (id, 0)).collect();
    for (u, v) in &graph.edges {
        *degree.get_mut(u).expect("validated") += 1;
        *degree.get_mut(v).expect("validated") += 1;
    }
    let min_degree_node = graph
        .nodes
        .iter()
        .map(|&id| (id, degree[&id]))
        .min_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));

    let pairs = graph.pair_count();
    RegionReport {
        node_count: graph.nodes.len(),
        edge_count: graph.edges.len(),
        fraction_direct: if pairs == 0 { 0.0 } else { graph.edges.len() as f64 / pairs as f64 },
        component_count: count,
        component_sizes: sizes,
        min_degree_node,
        all_pairs_connected: count == 1,
    }
}

/// Joins every pair of points whose connecting segment has no class change.
/// `ids[n]` names `points[n]`; every point must be predicted as `class_id`.
pub fn build_adjacency(net: &Network, points: &[DVector<f64>], ids: &[usize], class_id: usize, opts: &PathOptions) -> Result<AdjacencyGraph> {
    if points.len() != ids.len() {
        return Err(Error::shape(points.len(), ids.len()));
    }
    for (p, &id) in points.iter().zip(ids) {
        let predicted = net.predict(p)?;
        if predicted != class_id {
            return Err(Error::InvalidInput(format!(
                "point {id} is predicted as class {predicted}, not {class_id}"
            )));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|a| (a + 1..points.len()).map(move |b| (a, b)))
        .collect();
    let verdicts: Vec<Result<Option<(usize, usize)>>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            if points[a] == points[b] {
                return Ok(Some((ids[a], ids[b])));
            }
            let seg = LineSegment::between(points[a].clone(), points[b].clone())?;
            let crossings = count_crossings(net, &seg, opts)?;
            Ok(crossings.is_empty().then_some((ids[a], ids[b])))
        })
        .collect();
    let mut edges = Vec::new();
    for v in verdicts {
        if let Some(e) = v? {
            edges.push(e);
        }
    }
    AdjacencyGraph::new(ids.to_vec(), edges, class_id, opts.score_tol)
}

/// Picks the correctly classified samples of `class_id` (at most `max_points`
/// of them, chosen with `seed`), builds their adjacency graph and reports it.
pub fn region_report(
    net: &Network,
    data: &Dataset,
    class_id: usize,
    max_points: Option<usize>,
    seed: u64,
    opts: &PathOptions,
) -> Result<(AdjacencyGraph, RegionReport)> {
    let mut ids = Vec::new();
    for i in 0..data.len() {
        if data.labels[i] == class_id && net.predict(&data.sample(i))? == class_id {
            ids.push(i);
        }
    }
    if let Some(cap) = max_points {
        if ids.len() > cap {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut chosen: Vec<usize> = sample(&mut rng, ids.len(), cap).into_iter().map(|p| ids[p]).collect();
            chosen.sort_unstable();
            ids = chosen;
        }
    }
    if ids.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 correctly classified points of class {class_id}, found {}",
            ids.len()
        )));
    }
    let points: Vec<DVector<f64>> = ids.iter().map(|&i| data.sample(i)).collect();
    let graph = build_adjacency(net, &points, &ids, class_id, opts)?;
    let report = connected_components(&graph);
    Ok((graph, report))
}
