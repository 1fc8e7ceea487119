//! Undirected simple graphs, graph collections, and the normalized Laplacian.
//!
//! Adjacency is kept sparse (sorted neighbor lists); Laplacians are dense
//! because every consumer eigendecomposes them anyway.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Simple undirected graph with optional node features.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    /// Normalized so that `u < v`, sorted, unique.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    features: Option<DMatrix<f64>>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicate edges (in either
    /// orientation) and out-of-range endpoints.
    pub fn new(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidGraph(
                "graph must have at least one node".into(),
            ));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {node_count} nodes"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            if !set.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u}, {v})")));
            }
        }
        if let Some(x) = &features {
            if x.nrows() != node_count {
                return Err(Error::InvalidGraph(format!(
                    "feature matrix has {} rows for {node_count} nodes",
                    x.nrows()
                )));
            }
            if x.ncols() == 0 {
                return Err(Error::InvalidGraph("feature matrix has no columns".into()));
            }
        }
        let edges: Vec<_> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); node_count];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Graph {
            node_count,
            edges,
            neighbors,
            features,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn features(&self) -> Option<&DMatrix<f64>> {
        self.features.as_ref()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(|x| x.ncols())
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.node_count && self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Replaces (or attaches) the node-feature matrix.
    pub fn with_features(self, features: Option<DMatrix<f64>>) -> Result<Self> {
        Graph::new(self.node_count, self.edges, features)
    }

    /// Relabels nodes so that old node `i` becomes node `order[i]`.
    /// Feature rows move with their nodes.
    pub fn relabel(&self, order: &[usize]) -> Result<Self> {
        check_bijection(order, self.node_count)?;
        let edges = self.edges.iter().map(|&(u, v)| (order[u], order[v]));
        let features = self.features.as_ref().map(|x| {
            let mut out = DMatrix::zeros(x.nrows(), x.ncols());
            for (i, &target) in order.iter().enumerate() {
                out.set_row(target, &x.row(i));
            }
            out
        });
        Graph::new(self.node_count, edges, features)
    }

    /// Subgraph induced by `nodes`; node `nodes[i]` becomes node `i`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Self> {
        let mut index = vec![usize::MAX; self.node_count];
        for (new, &old) in nodes.iter().enumerate() {
            if old >= self.node_count || index[old] != usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "invalid or repeated node {old} in subgraph selection"
                )));
            }
            index[old] = new;
        }
        let edges = self.edges.iter().filter_map(|&(u, v)| {
            (index[u] != usize::MAX && index[v] != usize::MAX).then_some((index[u], index[v]))
        });
        let features = self
            .features
            .as_ref()
            .map(|x| DMatrix::from_fn(nodes.len(), x.ncols(), |i, j| x[(nodes[i], j)]));
        Graph::new(nodes.len(), edges, features)
    }

    /// Number of connected components.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.node_count];
        let mut count = 0;
        let mut stack = Vec::new();
        for start in 0..self.node_count {
            if seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            stack.push(start);
            while let Some(u) = stack.pop() {
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }
}

pub(crate) fn check_bijection(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::InvalidArgument(format!(
            "relabeling has length {} for {n} nodes",
            order.len()
        )));
    }
    let mut seen = vec![false; n];
    for &t in order {
        if t >= n || std::mem::replace(&mut seen[t], true) {
            return Err(Error::InvalidArgument(
                "relabeling is not a bijection".into(),
            ));
        }
    }
    Ok(())
}

/// Ordered, non-empty collection of graphs with a shared feature layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSet {
    graphs: Vec<Graph>,
    feature_dim: Option<usize>,
}

impl GraphSet {
    pub fn new(graphs: Vec<Graph>) -> Result<Self> {
        let first = graphs
            .first()
            .ok_or_else(|| Error::InvalidGraphSet("graph set is empty".into()))?;
        let feature_dim = first.feature_dim();
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::InvalidGraphSet(format!(
                    "graph {i} has feature dimension {:?}, expected {:?}",
                    g.feature_dim(),
                    feature_dim
                )));
            }
        }
        Ok(GraphSet {
            graphs,
            feature_dim,
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    pub fn max_node_count(&self) -> usize {
        self.graphs.iter().map(Graph::node_count).max().unwrap_or(0)
    }

    pub fn total_node_count(&self) -> usize {
        self.graphs.iter().map(Graph::node_count).sum()
    }
}

impl TryFrom<Vec<Graph>> for GraphSet {
    type Error = Error;

    fn try_from(graphs: Vec<Graph>) -> Result<Self> {
        GraphSet::new(graphs)
    }
}

pub fn degree_vector(g: &Graph) -> Vec<usize> {
    (0..g.node_count()).map(|i| g.neighbors(i).len()).collect()
}

/// `I - B^{-1/2} A B^{-1/2}` with `B^{-1/2}` taken as 0 on isolated nodes,
/// so an isolated node has an all-zero row and column.
pub fn normalized_laplacian(g: &Graph) -> DMatrix<f64> {
    let n = g.node_count();
    let inv_sqrt: Vec<f64> = degree_vector(g)
        .into_iter()
        .map(|d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
        .collect();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        if inv_sqrt[i] > 0.0 {
            l[(i, i)] = 1.0;
        }
    }
    for &(u, v) in g.edges() {
        let w = -inv_sqrt[u] * inv_sqrt[v];
        l[(u, v)] = w;
        l[(v, u)] = w;
    }
    l
}

/// Seeded Erdős–Rényi `G(n, p)` sample used as the broker's proxy graph.
/// A sample without edges is redrawn with `seed + 1`, and so on.
pub fn generate_proxy(node_count: usize, edge_probability: f64, seed: u64) -> Result<Graph> {
    if node_count < 2 {
        return Err(Error::InvalidArgument(format!(
            "proxy graph needs at least 2 nodes, got {node_count}"
        )));
    }
    if !(edge_probability > 0.0 && edge_probability < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "edge probability must lie in (0, 1), got {edge_probability}"
        )));
    }
    let mut seed = seed;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut edges = Vec::new();
        for u in 0..node_count {
            for v in (u + 1)..node_count {
                if rng.random::<f64>() < edge_probability {
                    edges.push((u, v));
                }
            }
        }
        if !edges.is_empty() {
            return Graph::new(node_count, edges, None);
        }
        seed = seed.wrapping_add(1);
    }
}
