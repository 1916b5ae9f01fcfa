//! Fixed-length random walks and the reachability estimators built on them.
//!
//! Each walk takes up to `walk_length` weighted jumps from its source; the
//! source itself is not recorded at step 0. Walks stop early only at nodes
//! with no out-edges.

use std::collections::VecDeque;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::seed;

const PAD: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub seed: u64,
}

impl WalkConfig {
    pub const DEFAULT_WALKS: usize = 50;

    pub fn new(walks_per_node: usize, walk_length: usize, seed: u64) -> Result<Self> {
        let c = WalkConfig {
            walks_per_node,
            walk_length,
            seed,
        };
        c.validate()?;
        Ok(c)
    }

    /// 50 walks per node, walk length equal to the graph diameter (at least 1).
    pub fn for_graph(graph: &Graph, seed: u64) -> Self {
        WalkConfig {
            walks_per_node: Self::DEFAULT_WALKS,
            walk_length: estimate_diameter(graph).max(1),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node == 0 || self.walk_length == 0 {
            return Err(Error::invalid("walk count and walk length must be at least 1"));
        }
        Ok(())
    }
}

/// Walk count `⌈∛(n² ln n)⌉` at which a walker of diameter length finds an
/// existing path with probability `1 − 1/n`. Far above the default of 50 for
/// most graphs; exposed as a preset.
pub fn walk_count_for_path_discovery(n: usize) -> usize {
    if n < 2 {
        return 1;
    }
    let n = n as f64;
    (n * n * n.ln()).cbrt().ceil() as usize
}

/// Per-(source, target) aggregate over a source's walks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisitStat {
    pub node: u32,
    /// Σ_k count_k(source, node), repeat visits included.
    pub count: u32,
    /// Σ_k 1/o(source, node, k) over the walks that reach `node`.
    pub inverse_first_step_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkSet {
    n: usize,
    walks_per_node: usize,
    walk_length: usize,
    steps: Vec<u32>,
    lens: Vec<u32>,
    stats: Vec<Vec<VisitStat>>,
}

fn stats_for_source(walks: impl Iterator<Item = impl AsRef<[u32]>>) -> Vec<VisitStat> {
    let mut acc: Vec<VisitStat> = Vec::new();
    let mut seen: Vec<u32> = Vec::new();
    for walk in walks {
        seen.clear();
        for (i, &u) in walk.as_ref().iter().enumerate() {
            let step = i + 1;
            let first = !seen.contains(&u);
            if first {
                seen.push(u);
            }
            match acc.binary_search_by_key(&u, |s| s.node) {
                Ok(j) => {
                    acc[j].count += 1;
                    if first {
                        acc[j].inverse_first_step_sum += 1.0 / step as f64;
                    }
                }
                Err(j) => acc.insert(
                    j,
                    VisitStat {
                        node: u,
                        count: 1,
                        inverse_first_step_sum: 1.0 / step as f64,
                    },
                ),
            }
        }
    }
    acc
}

impl WalkSet {
    /// Assembles a walk set from explicit traces, `traces[v][k]` being walk `k`
    /// of source `v`. Every source must have exactly `walks_per_node` traces.
    pub fn from_traces(n: usize, walk_length: usize, traces: &[Vec<Vec<NodeId>>]) -> Result<Self> {
        if traces.len() != n {
            return Err(Error::invalid("need one trace list per node"));
        }
        let walks_per_node = traces.first().map_or(0, Vec::len);
        let mut steps = vec![PAD; n * walks_per_node * walk_length];
        let mut lens = vec![0u32; n * walks_per_node];
        for (v, walks) in traces.iter().enumerate() {
            if walks.len() != walks_per_node {
                return Err(Error::invalid("ragged walk counts"));
            }
            for (k, w) in walks.iter().enumerate() {
                if w.len() > walk_length {
                    return Err(Error::invalid("trace longer than walk length"));
                }
                if w.iter().any(|&u| u >= n) {
                    return Err(Error::invalid("trace visits an unknown node"));
                }
                let base = (v * walks_per_node + k) * walk_length;
                for (i, &u) in w.iter().enumerate() {
                    steps[base + i] = u as u32;
                }
                lens[v * walks_per_node + k] = w.len() as u32;
            }
        }
        Ok(Self::assemble(n, walks_per_node, walk_length, steps, lens))
    }

    fn assemble(n: usize, walks_per_node: usize, walk_length: usize, steps: Vec<u32>, lens: Vec<u32>) -> Self {
        let mut ws = WalkSet {
            n,
            walks_per_node,
            walk_length,
            steps,
            lens,
            stats: Vec::new(),
        };
        ws.stats = (0..n)
            .into_par_iter()
            .map(|v| stats_for_source((0..walks_per_node).map(|k| ws.trace(v, k))))
            .collect();
        ws
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn walks_per_node(&self) -> usize {
        self.walks_per_node
    }

    pub fn walk_length(&self) -> usize {
        self.walk_length
    }

    /// Nodes visited by walk `k` from `v`, excluding the start.
    pub fn trace(&self, v: NodeId, k: usize) -> &[u32] {
        let idx = v * self.walks_per_node + k;
        let base = idx * self.walk_length;
        &self.steps[base..base + self.lens[idx] as usize]
    }

    /// Cached visit statistics of `v`, sorted by target node.
    pub fn visits(&self, v: NodeId) -> &[VisitStat] {
        &self.stats[v]
    }

    fn stat(&self, v: NodeId, u: NodeId) -> Option<&VisitStat> {
        let s = &self.stats[v];
        s.binary_search_by_key(&(u as u32), |x| x.node).ok().map(|i| &s[i])
    }

    pub fn visit_count(&self, v: NodeId, u: NodeId) -> u32 {
        self.stat(v, u).map_or(0, |s| s.count)
    }

    /// 1-based step at which walk `k` from `v` first reaches `u`.
    pub fn first_visit(&self, v: NodeId, u: NodeId, k: usize) -> Option<usize> {
        self.trace(v, k).iter().position(|&x| x as usize == u).map(|p| p + 1)
    }

    /// Visit frequency of `u` over all walks from `v`, normalized by
    /// `walk_length · walks_per_node`.
    pub fn similarity_count(&self, v: NodeId, u: NodeId) -> f64 {
        self.visit_count(v, u) as f64 / (self.walk_length * self.walks_per_node) as f64
    }

    /// Harmonic first-visit weighting: Σ_k 1/o(v, u, k), range `[0, walks_per_node]`.
    pub fn similarity_ordered(&self, v: NodeId, u: NodeId) -> f64 {
        self.stat(v, u).map_or(0.0, |s| s.inverse_first_step_sum)
    }

    /// Recomputes the visit statistics from the stored traces.
    pub fn recomputed_stats(&self) -> Vec<Vec<VisitStat>> {
        (0..self.n)
            .map(|v| stats_for_source((0..self.walks_per_node).map(|k| self.trace(v, k))))
            .collect()
    }

    pub fn config_matches(&self, cfg: &WalkConfig) -> bool {
        self.walks_per_node == cfg.walks_per_node && self.walk_length == cfg.walk_length
    }
}

/// Samples `walks_per_node` walks from every node. Each source draws from its
/// own stream derived from the seed and its id, so the result does not depend
/// on thread scheduling.
pub fn sample_walks(graph: &Graph, config: &WalkConfig) -> Result<WalkSet> {
    config.validate()?;
    if graph.n() == 0 {
        return Err(Error::invalid("cannot walk an empty graph"));
    }
    let adj = graph.adjacency();
    let n = graph.n();
    let (nw, lw) = (config.walks_per_node, config.walk_length);
    let per_source: Vec<(Vec<u32>, Vec<u32>)> = (0..n)
        .into_par_iter()
        .map(|v| {
            let mut rng = seed::stream_rng(config.seed, v as u64);
            let mut steps = vec![PAD; nw * lw];
            let mut lens = vec![0u32; nw];
            for k in 0..nw {
                let mut cur = v;
                let mut len = 0;
                for i in 0..lw {
                    match adj.pick(cur, rng.gen::<f64>()) {
                        Some(next) => {
                            steps[k * lw + i] = next as u32;
                            cur = next;
                            len += 1;
                        }
                        None => break,
                    }
                }
                lens[k] = len;
            }
            (steps, lens)
        })
        .collect();
    let mut steps = Vec::with_capacity(n * nw * lw);
    let mut lens = Vec::with_capacity(n * nw);
    for (s, l) in per_source {
        steps.extend(s);
        lens.extend(l);
    }
    Ok(WalkSet::assemble(n, nw, lw, steps, lens))
}

fn undirected_neighbors(graph: &Graph) -> Vec<Vec<usize>> {
    let mut nbrs = vec![Vec::new(); graph.n()];
    for e in graph.edges() {
        nbrs[e.u].push(e.v);
        nbrs[e.v].push(e.u);
    }
    nbrs
}

fn bfs_ecc(nbrs: &[Vec<usize>], s: usize, dist: &mut [usize], queue: &mut VecDeque<usize>) -> (usize, usize) {
    dist.fill(usize::MAX);
    dist[s] = 0;
    queue.clear();
    queue.push_back(s);
    let mut far = (0, s);
    while let Some(u) = queue.pop_front() {
        if dist[u] > far.0 {
            far = (dist[u], u);
        }
        for &v in &nbrs[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    far
}

/// Diameter of the largest connected component (edge direction ignored).
/// Exact for up to 10 000 nodes; beyond that, the best double-sweep lower
/// bound over 16 seeded starts.
pub fn estimate_diameter(graph: &Graph) -> usize {
    let n = graph.n();
    if n <= 1 {
        return 0;
    }
    let comp = graph.components();
    let mut sizes = vec![0usize; n];
    for &c in &comp {
        sizes[c] += 1;
    }
    let largest = (0..n).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).unwrap_or(0);
    let members: Vec<usize> = (0..n).filter(|&v| comp[v] == largest).collect();
    let nbrs = undirected_neighbors(graph);
    if n <= 10_000 {
        members
            .par_iter()
            .map_init(
                || (vec![usize::MAX; n], VecDeque::new()),
                |(dist, queue), &s| bfs_ecc(&nbrs, s, dist, queue).0,
            )
            .max()
            .unwrap_or(0)
    } else {
        let mut rng = seed::rng(0x5eed_d1a3);
        let mut dist = vec![usize::MAX; n];
        let mut queue = VecDeque::new();
        let mut best = 0;
        for _ in 0..16 {
            let &s = members.choose(&mut rng).expect("nonempty component");
            let (_, far) = bfs_ecc(&nbrs, s, &mut dist, &mut queue);
            let (ecc, _) = bfs_ecc(&nbrs, far, &mut dist, &mut queue);
            best = best.max(ecc);
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    /// Visit-count frequency.
    Count,
    /// Harmonic first-visit weighting.
    Ordered,
}

/// Node-to-anchor reachability in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    k: usize,
    /// Row-major n × k, entry (v, i) = s(v, a_i).
    outgoing: Vec<f64>,
    /// Row-major n × k, entry (v, i) = s(a_i, v).
    incoming: Vec<f64>,
    kind: SimilarityKind,
}

impl SimilarityMatrix {
    pub fn from_parts(
        n: usize,
        k: usize,
        outgoing: Vec<f64>,
        incoming: Vec<f64>,
        kind: SimilarityKind,
    ) -> Result<Self> {
        if outgoing.len() != n * k || incoming.len() != n * k {
            return Err(Error::invalid("similarity matrices must be n × k"));
        }
        if outgoing.iter().chain(&incoming).any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::invalid("similarities must be finite and non-negative"));
        }
        Ok(SimilarityMatrix {
            n,
            k,
            outgoing,
            incoming,
            kind,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> SimilarityKind {
        self.kind
    }

    pub fn outgoing(&self) -> &[f64] {
        &self.outgoing
    }

    pub fn incoming(&self) -> &[f64] {
        &self.incoming
    }

    /// s(v, a_i)
    pub fn node_to_anchor(&self, v: NodeId, i: usize) -> f64 {
        self.outgoing[v * self.k + i]
    }

    /// s(a_i, v)
    pub fn anchor_to_node(&self, v: NodeId, i: usize) -> f64 {
        self.incoming[v * self.k + i]
    }

    /// Same matrices with anchor columns reordered: column `j` of the result
    /// is column `perm[j]` of `self`.
    pub fn permute_anchors(&self, perm: &[usize]) -> Self {
        let k = self.k;
        let mut out = self.clone();
        for v in 0..self.n {
            for (j, &p) in perm.iter().enumerate() {
                out.outgoing[v * k + j] = self.outgoing[v * k + p];
                out.incoming[v * k + j] = self.incoming[v * k + p];
            }
        }
        out
    }
}

/// Fills s(v, a) from walks sourced at `v` and s(a, v) from walks sourced at
/// `a`, for every node and anchor. With `normalize`, order-weighted entries
/// are divided by the walk count to land in `[0, 1]`.
pub fn similarity_matrix(
    walks: &WalkSet,
    anchors: &[NodeId],
    kind: SimilarityKind,
    normalize: bool,
) -> Result<SimilarityMatrix> {
    let n = walks.n();
    let k = anchors.len();
    if let Some(&a) = anchors.iter().find(|&&a| a >= n) {
        return Err(Error::invalid(format!("anchor {a} out of range for {n} nodes")));
    }
    let total = (walks.walk_length() * walks.walks_per_node()) as f64;
    let nw = walks.walks_per_node() as f64;
    let value = |s: &VisitStat| match kind {
        SimilarityKind::Count => s.count as f64 / total,
        SimilarityKind::Ordered if normalize => s.inverse_first_step_sum / nw,
        SimilarityKind::Ordered => s.inverse_first_step_sum,
    };
    let mut outgoing = vec![0.0; n * k];
    let mut incoming = vec![0.0; n * k];
    for v in 0..n {
        let stats = walks.visits(v);
        for (i, &a) in anchors.iter().enumerate() {
            if let Ok(j) = stats.binary_search_by_key(&(a as u32), |s| s.node) {
                outgoing[v * k + i] = value(&stats[j]);
            }
        }
    }
    for (i, &a) in anchors.iter().enumerate() {
        for s in walks.visits(a) {
            incoming[s.node as usize * k + i] = value(s);
        }
    }
    SimilarityMatrix::from_parts(n, k, outgoing, incoming, kind)
}

const CACHE_MAGIC: &[u8; 8] = b"GRWALKS\0";
const CACHE_VERSION: u32 = 1;

/// Writes a walk set keyed by the graph hash and walk config.
pub fn save_walk_cache(path: &Path, walks: &WalkSet, graph_hash: &str, config: &WalkConfig) -> Result<()> {
    let mut buf: Vec<u8> = Vec::with_capacity(64 + walks.steps.len() * 4);
    buf.extend_from_slice(CACHE_MAGIC);
    buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    let hash = graph_hash.as_bytes();
    buf.extend_from_slice(&(hash.len() as u32).to_le_bytes());
    buf.extend_from_slice(hash);
    for x in [
        walks.n as u64,
        config.walks_per_node as u64,
        config.walk_length as u64,
        config.seed,
    ] {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for &l in &walks.lens {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    for &s in &walks.steps {
        buf.extend_from_slice(&s.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::StaleCache("truncated walk cache".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Loads a cached walk set. Any mismatch in version, graph hash or config is
/// reported as [`Error::StaleCache`].
pub fn load_walk_cache(path: &Path, graph_hash: &str, config: &WalkConfig) -> Result<WalkSet> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != CACHE_MAGIC {
        return Err(Error::StaleCache("not a walk cache".into()));
    }
    let version = c.u32()?;
    if version != CACHE_VERSION {
        return Err(Error::StaleCache(format!("cache version {version}")));
    }
    let hlen = c.u32()? as usize;
    if c.take(hlen)? != graph_hash.as_bytes() {
        return Err(Error::StaleCache("graph hash differs".into()));
    }
    let n = c.u64()? as usize;
    let (nw, lw, seed) = (c.u64()? as usize, c.u64()? as usize, c.u64()?);
    if (nw, lw, seed) != (config.walks_per_node, config.walk_length, config.seed) {
        return Err(Error::StaleCache("walk config differs".into()));
    }
    let lens = (0..n * nw).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
    let steps = (0..n * nw * lw).map(|_| c.u32()).collect::<Result<Vec<_>>>()?;
    if lens.iter().any(|&l| l as usize > lw) || steps.iter().any(|&s| s != PAD && s as usize >= n) {
        return Err(Error::StaleCache("corrupt walk cache".into()));
    }
    Ok(WalkSet::assemble(n, nw, lw, steps, lens))
}

/// Loads the cache when it matches, otherwise samples and rewrites it.
pub fn load_or_sample(path: &Path, graph: &Graph, config: &WalkConfig) -> Result<WalkSet> {
    let hash = graph.content_hash();
    match load_walk_cache(path, &hash, config) {
        Ok(w) => Ok(w),
        Err(Error::StaleCache(_)) | Err(Error::Io { .. }) => {
            let w = sample_walks(graph, config)?;
            save_walk_cache(path, &w, &hash, config)?;
            Ok(w)
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_grid, Edge};

    fn path(n: usize) -> Graph {
        Graph::new(n, (1..n).map(|i| Edge::unit(i - 1, i)), false).unwrap()
    }

    fn first_step_freq(g: &Graph, src: usize, walks: usize) -> Vec<f64> {
        let cfg = WalkConfig::new(walks, 1, 11).unwrap();
        let ws = sample_walks(g, &cfg).unwrap();
        (0..g.n())
            .map(|u| ws.visit_count(src, u) as f64 / walks as f64)
            .collect()
    }

    #[test]
    fn forced_single_step() {
        let ws = sample_walks(&path(2), &WalkConfig::new(1, 1, 0).unwrap()).unwrap();
        assert_eq!(ws.trace(0, 0), &[1]);
    }

    #[test]
    fn star_first_step_uniform() {
        let g = Graph::new(4, (1..4).map(|i| Edge::unit(0, i)), false).unwrap();
        let f = first_step_freq(&g, 0, 30_000);
        for p in &f[1..] {
            assert!((p - 1.0 / 3.0).abs() < 0.02, "{f:?}");
        }
    }

    #[test]
    fn weighted_first_step() {
        let g = Graph::new(3, [Edge { u: 0, v: 1, w: 1.0 }, Edge { u: 0, v: 2, w: 3.0 }], false).unwrap();
        let f = first_step_freq(&g, 0, 30_000);
        assert!((f[2] - 0.75).abs() < 0.02, "{f:?}");
    }

    #[test]
    fn isolated_node_yields_empty_traces() {
        let g = Graph::new(3, [Edge::unit(0, 1)], false).unwrap();
        let ws = sample_walks(&g, &WalkConfig::new(3, 4, 0).unwrap()).unwrap();
        for k in 0..3 {
            assert!(ws.trace(2, k).is_empty());
            assert_eq!(ws.trace(0, k).len(), 4);
        }
    }

    #[test]
    fn diameters() {
        assert_eq!(estimate_diameter(&generate_grid(20, 20).unwrap()), 38);
        assert_eq!(estimate_diameter(&Graph::new(1, [], false).unwrap()), 0);
        assert_eq!(estimate_diameter(&path(5)), 4);
        // Largest component wins over a longer-diameter-free small one.
        let g = Graph::new(
            6,
            [Edge::unit(0, 1), Edge::unit(1, 2), Edge::unit(2, 3), Edge::unit(4, 5)],
            false,
        )
        .unwrap();
        assert_eq!(estimate_diameter(&g), 3);
    }

    #[test]
    fn count_similarity_substitution() {
        // n_w = 2, l_w = 4, node 1 visited 3 times in total.
        let traces = vec![
            vec![vec![1, 0, 1, 0], vec![1, 0, 2, 0]],
            vec![vec![0; 4], vec![0; 4]],
            vec![vec![0; 4], vec![0; 4]],
        ];
        let ws = WalkSet::from_traces(3, 4, &traces).unwrap();
        assert_eq!(ws.similarity_count(0, 1), 3.0 / 8.0);
        assert_eq!(ws.similarity_count(1, 2), 0.0);
        // s(0, 0) counts returns to the source.
        assert_eq!(ws.similarity_count(0, 0), 4.0 / 8.0);
    }

    #[test]
    fn forced_two_step_walk() {
        let ws = sample_walks(&path(2), &WalkConfig::new(1, 2, 3).unwrap()).unwrap();
        assert_eq!(ws.similarity_count(0, 1), 0.5);
        assert_eq!(ws.similarity_count(0, 0), 0.5);
    }

    #[test]
    fn ordered_similarity_substitution() {
        let traces = vec![
            vec![vec![1, 2, 1], vec![1, 1, 1]],
            vec![vec![0, 0, 0], vec![0, 0, 0]],
            vec![vec![0, 0, 0], vec![0, 0, 0]],
        ];
        let ws = WalkSet::from_traces(3, 3, &traces).unwrap();
        assert_eq!(ws.similarity_ordered(0, 2), 0.5);
        assert_eq!(ws.similarity_ordered(1, 2), 0.0);
        assert_eq!(ws.first_visit(0, 2, 0), Some(2));
        assert_eq!(ws.first_visit(0, 2, 1), None);
        // First visit only: later repeats of node 1 do not add.
        assert_eq!(ws.similarity_ordered(0, 1), 2.0);

        let three = vec![vec![vec![1]; 3], vec![vec![0]; 3]];
        let ws = WalkSet::from_traces(2, 1, &three).unwrap();
        assert_eq!(ws.similarity_ordered(0, 1), 3.0);
    }

    #[test]
    fn matrix_both_directions() {
        let g = Graph::new(4, [Edge::unit(0, 1), Edge::unit(1, 2)], false).unwrap();
        let ws = sample_walks(&g, &WalkConfig::new(20, 3, 5).unwrap()).unwrap();
        let sm = similarity_matrix(&ws, &[1, 3], SimilarityKind::Count, false).unwrap();
        for v in 0..4 {
            assert_eq!(sm.node_to_anchor(v, 0), ws.similarity_count(v, 1));
            assert_eq!(sm.anchor_to_node(v, 0), ws.similarity_count(1, v));
            // Node 3 is isolated: its column is zero both ways.
            assert_eq!(sm.node_to_anchor(v, 1), 0.0);
            assert_eq!(sm.anchor_to_node(v, 1), 0.0);
        }
        assert!(similarity_matrix(&ws, &[4], SimilarityKind::Count, false).is_err());
        let own = similarity_matrix(&ws, &[1], SimilarityKind::Count, false).unwrap();
        assert_eq!(own.node_to_anchor(1, 0), ws.similarity_count(1, 1));
    }

    #[test]
    fn path_two_steps_converges() {
        let ws = sample_walks(&path(3), &WalkConfig::new(20_000, 2, 9).unwrap()).unwrap();
        let sm = similarity_matrix(&ws, &[2], SimilarityKind::Count, false).unwrap();
        assert!((sm.node_to_anchor(0, 0) - 0.25).abs() < 0.02);
    }

    #[test]
    fn ordered_ranges() {
        let g = generate_grid(4, 4).unwrap();
        let ws = sample_walks(&g, &WalkConfig::new(10, 6, 1).unwrap()).unwrap();
        let raw = similarity_matrix(&ws, &[0, 5], SimilarityKind::Ordered, false).unwrap();
        let norm = similarity_matrix(&ws, &[0, 5], SimilarityKind::Ordered, true).unwrap();
        for (r, m) in raw.outgoing().iter().zip(norm.outgoing()) {
            assert!((0.0..=10.0).contains(r));
            assert!((m - r / 10.0).abs() < 1e-15);
        }
        let count = similarity_matrix(&ws, &[0, 5], SimilarityKind::Count, false).unwrap();
        assert!(count.outgoing().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let g = generate_grid(6, 6).unwrap();
        let cfg = WalkConfig::new(7, 9, 42).unwrap();
        let a = sample_walks(&g, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| sample_walks(&g, &cfg).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.recomputed_stats(), a.stats);
    }

    #[test]
    fn cache_round_trip_and_invalidation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        let g = generate_grid(3, 3).unwrap();
        let cfg = WalkConfig::new(4, 5, 8).unwrap();
        let a = load_or_sample(&p, &g, &cfg).unwrap();
        let b = load_walk_cache(&p, &g.content_hash(), &cfg).unwrap();
        assert_eq!(a, b);
        let other = WalkConfig { seed: 9, ..cfg };
        assert!(matches!(
            load_walk_cache(&p, &g.content_hash(), &other),
            Err(Error::StaleCache(_))
        ));
        assert!(matches!(load_walk_cache(&p, "nope", &cfg), Err(Error::StaleCache(_))));
        let c = load_or_sample(&p, &g, &other).unwrap();
        assert_eq!(c, sample_walks(&g, &other).unwrap());
    }

    #[test]
    fn path_discovery_preset() {
        assert_eq!(walk_count_for_path_discovery(1), 1);
        // ∛(400² · ln 400) ≈ 98.6
        assert_eq!(walk_count_for_path_discovery(400), 99);
    }
}
