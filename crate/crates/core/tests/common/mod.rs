//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use graphreach::graph::{Edge, Graph, NodeId};
use rand::Rng;

/// Expected visit-count similarity `E[count(v,u)] / l` obtained by
/// enumerating every `l`-step walk from `v` together with its probability.
pub fn enumerated_similarity(g: &Graph, v: NodeId, u: NodeId, l: usize) -> f64 {
    let adj = g.adjacency();
    fn go(
        adj: &graphreach::graph::AdjacencyIndex,
        at: NodeId,
        u: NodeId,
        left: usize,
        p: f64,
        visits: usize,
        acc: &mut f64,
    ) {
        let total = adj.total_weight(at);
        if left == 0 || adj.degree(at) == 0 || total == 0.0 {
            *acc += p * visits as f64;
            return;
        }
        for (&next, &w) in adj.neighbors(at).iter().zip(adj.weights(at)) {
            let hit = usize::from(next == u);
            go(adj, next, u, left - 1, p * w / total, visits + hit, acc);
        }
    }
    let mut acc = 0.0;
    go(&adj, v, u, l, 1.0, 0, &mut acc);
    acc / l as f64
}

/// Largest union size over all `k`-subsets of `sets`.
pub fn best_coverage(sets: &[Vec<NodeId>], k: usize) -> usize {
    fn rec(sets: &[Vec<NodeId>], start: usize, left: usize, chosen: &mut Vec<usize>, best: &mut usize) {
        if left == 0 || start == sets.len() {
            *best = (*best).max(union_size(sets, chosen));
            return;
        }
        for i in start..sets.len() {
            chosen.push(i);
            rec(sets, i + 1, left - 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = 0;
    rec(sets, 0, k.min(sets.len()), &mut Vec::new(), &mut best);
    best
}

pub fn union_size(sets: &[Vec<NodeId>], chosen: &[usize]) -> usize {
    let mut all: Vec<NodeId> = chosen.iter().flat_map(|&i| sets[i].iter().copied()).collect();
    all.sort_unstable();
    all.dedup();
    all.len()
}

/// Reach sets of `left` nodes over `right` targets, each member kept with
/// probability `density`.
pub fn random_sets(rng: &mut impl Rng, left: usize, right: usize, density: f64) -> Vec<Vec<NodeId>> {
    (0..left)
        .map(|_| (0..right).filter(|_| rng.gen_bool(density)).collect())
        .collect()
}

/// Connected random graph on `n` nodes: a random spanning tree plus extra
/// edges, with weights in [0.5, 3).
pub fn random_connected_graph(rng: &mut impl Rng, n: usize, extra: f64) -> Graph {
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.gen_range(0..v);
        edges.push(Edge {
            u,
            v,
            w: rng.gen_range(0.5..3.0),
        });
    }
    for u in 0..n {
        for v in u + 1..n {
            if !edges.iter().any(|e| e.u == u && e.v == v) && rng.gen_bool(extra) {
                edges.push(Edge {
                    u,
                    v,
                    w: rng.gen_range(0.5..3.0),
                });
            }
        }
    }
    Graph::new(n, edges, false).expect("valid random graph")
}
