//! Graph data model.
//!
//! Nodes are dense ids `0..n`. Undirected edges are stored once with
//! `u < v`; [`AdjacencyIndex`] exposes them symmetrically.

mod generate;
mod io;

use std::collections::{HashSet, VecDeque};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use generate::{generate_connected_caveman, generate_grid};
pub use io::{load_graph, read_node_map, save_graph, write_node_map, GraphFiles, NodeMap};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: NodeId,
    pub v: NodeId,
    pub w: f64,
}

impl Edge {
    pub fn unit(u: NodeId, v: NodeId) -> Self {
        Edge { u, v, w: 1.0 }
    }
}

/// Row-major `n × dim` attribute matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Attributes {
    dim: usize,
    values: Vec<f64>,
}

impl Attributes {
    pub fn new(n: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * dim {
            return Err(Error::invalid(format!(
                "attribute matrix has {} values, expected {n}×{dim}",
                values.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("attribute values must be finite"));
        }
        Ok(Attributes { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, v: NodeId) -> &[f64] {
        &self.values[v * self.dim..(v + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    directed: bool,
    attributes: Option<Attributes>,
    labels: Option<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from an edge list.
    ///
    /// Undirected edges are canonicalized to `u < v` and sorted. A repeated
    /// pair is merged when its weight agrees and rejected otherwise.
    pub fn new(n: usize, edges: impl IntoIterator<Item = Edge>, directed: bool) -> Result<Self> {
        let mut canon: Vec<Edge> = Vec::new();
        for e in edges {
            if e.u >= n || e.v >= n {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) has an endpoint outside [0, {n})",
                    e.u, e.v
                )));
            }
            if e.u == e.v {
                return Err(Error::invalid(format!("self-loop on node {}", e.u)));
            }
            if !(e.w.is_finite() && e.w > 0.0) {
                return Err(Error::invalid(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.u, e.v, e.w
                )));
            }
            let e = if !directed && e.u > e.v {
                Edge { u: e.v, v: e.u, w: e.w }
            } else {
                e
            };
            canon.push(e);
        }
        canon.sort_by_key(|e| (e.u, e.v));
        let mut edges: Vec<Edge> = Vec::with_capacity(canon.len());
        for e in canon {
            match edges.last() {
                Some(prev) if prev.u == e.u && prev.v == e.v => {
                    if prev.w != e.w {
                        return Err(Error::invalid(format!(
                            "edge ({}, {}) listed twice with weights {} and {}",
                            e.u, e.v, prev.w, e.w
                        )));
                    }
                }
                _ => edges.push(e),
            }
        }
        Ok(Graph {
            n,
            edges,
            directed,
            attributes: None,
            labels: None,
        })
    }

    pub fn with_attributes(mut self, attributes: Attributes) -> Result<Self> {
        if attributes.values.len() != self.n * attributes.dim {
            return Err(Error::invalid("attribute rows do not match node count"));
        }
        self.attributes = Some(attributes);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::invalid(format!("{} labels for {} nodes", labels.len(), self.n)));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn attributes(&self) -> Option<&Attributes> {
        self.attributes.as_ref()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn class_count(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max().map(|m| m + 1))
            .unwrap_or(0)
    }

    fn key(&self, u: NodeId, v: NodeId) -> (NodeId, NodeId) {
        if !self.directed && u > v {
            (v, u)
        } else {
            (u, v)
        }
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        let key = self.key(u, v);
        self.edges.binary_search_by_key(&key, |e| (e.u, e.v)).is_ok()
    }

    pub fn edge_set(&self) -> HashSet<(NodeId, NodeId)> {
        self.edges.iter().map(|e| (e.u, e.v)).collect()
    }

    /// Copy with the given node pairs removed (missing pairs are ignored).
    pub fn without_edges(&self, pairs: &[(NodeId, NodeId)]) -> Graph {
        let drop: HashSet<(NodeId, NodeId)> = pairs.iter().map(|&(u, v)| self.key(u, v)).collect();
        let mut g = self.clone();
        g.edges.retain(|e| !drop.contains(&(e.u, e.v)));
        g
    }

    /// Copy with unit-weight edges added for every pair not already present.
    /// Returns the new graph and the number of edges actually added.
    pub fn with_added_edges(&self, pairs: &[(NodeId, NodeId)]) -> Result<(Graph, usize)> {
        let mut present = self.edge_set();
        let mut edges = self.edges.clone();
        let mut added = 0;
        for &(u, v) in pairs {
            if u == v {
                continue;
            }
            let key = self.key(u, v);
            if present.insert(key) {
                edges.push(Edge::unit(key.0, key.1));
                added += 1;
            }
        }
        let mut g = Graph::new(self.n, edges, self.directed)?;
        g.attributes = self.attributes.clone();
        g.labels = self.labels.clone();
        Ok((g, added))
    }

    pub fn adjacency(&self) -> AdjacencyIndex {
        AdjacencyIndex::build(self)
    }

    /// Number of incident edges per node (undirected view).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for e in &self.edges {
            deg[e.u] += 1;
            deg[e.v] += 1;
        }
        deg
    }

    /// Connected component id per node, ignoring edge direction. Ids are
    /// assigned in order of the smallest node in each component.
    pub fn components(&self) -> Vec<usize> {
        let mut nbrs = vec![Vec::new(); self.n];
        for e in &self.edges {
            nbrs[e.u].push(e.v);
            nbrs[e.v].push(e.u);
        }
        let mut comp = vec![usize::MAX; self.n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for s in 0..self.n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = next;
            queue.push_back(s);
            while let Some(u) = queue.pop_front() {
                for &v in &nbrs[u] {
                    if comp[v] == usize::MAX {
                        comp[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        comp
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.components().iter().all(|&c| c == 0)
    }

    /// SHA-256 over the canonical structure, attributes and labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"graphreach-graph-v1");
        h.update((self.n as u64).to_le_bytes());
        h.update([self.directed as u8]);
        for e in &self.edges {
            h.update((e.u as u64).to_le_bytes());
            h.update((e.v as u64).to_le_bytes());
            h.update(e.w.to_le_bytes());
        }
        if let Some(a) = &self.attributes {
            h.update((a.dim as u64).to_le_bytes());
            for x in &a.values {
                h.update(x.to_le_bytes());
            }
        }
        if let Some(l) = &self.labels {
            for &x in l {
                h.update((x as u64).to_le_bytes());
            }
        }
        hex_string(&h.finalize())
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// CSR adjacency with per-node cumulative weights for walk sampling.
#[derive(Debug, Clone)]
pub struct AdjacencyIndex {
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    totals: Vec<f64>,
}

impl AdjacencyIndex {
    pub fn build(g: &Graph) -> Self {
        let mut lists: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); g.n];
        for e in &g.edges {
            lists[e.u].push((e.v, e.w));
            if !g.directed {
                lists[e.v].push((e.u, e.w));
            }
        }
        let mut offsets = Vec::with_capacity(g.n + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        let mut cumulative = Vec::new();
        let mut totals = Vec::with_capacity(g.n);
        offsets.push(0);
        for mut list in lists {
            list.sort_by_key(|&(v, _)| v);
            let mut acc = 0.0;
            for (v, w) in list {
                acc += w;
                neighbors.push(v);
                weights.push(w);
                cumulative.push(acc);
            }
            totals.push(acc);
            offsets.push(neighbors.len());
        }
        AdjacencyIndex {
            offsets,
            neighbors,
            weights,
            cumulative,
            totals,
        }
    }

    pub fn n(&self) -> usize {
        self.totals.len()
    }

    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn weights(&self, v: NodeId) -> &[f64] {
        &self.weights[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn total_weight(&self, v: NodeId) -> f64 {
        self.totals[v]
    }

    /// Neighbor selected by a uniform draw `r ∈ [0, 1)`, with probability
    /// proportional to edge weight. `None` for a node without out-edges.
    pub fn pick(&self, v: NodeId, r: f64) -> Option<NodeId> {
        let lo = self.offsets[v];
        let hi = self.offsets[v + 1];
        if lo == hi {
            return None;
        }
        let target = r * self.totals[v];
        let cum = &self.cumulative[lo..hi];
        let idx = cum.partition_point(|&c| c <= target).min(hi - lo - 1);
        Some(self.neighbors[lo + idx])
    }
}
