//! Collusion attacks: a group of nodes adds edges among itself, and a frozen
//! model is scored on pairs touching the group before and after.

use rand::seq::SliceRandom;
use serde::Serialize;

use super::splits::Pair;
use super::trainer::pair_auc;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::{embed, Embeddings, ModelConfig, ModelInputs, ModelParams};
use crate::seed;
use crate::tensor::Tensor;
use crate::walks::{sample_walks, similarity_matrix, SimilarityKind, WalkConfig};

#[derive(Debug, Clone)]
pub struct Perturbation {
    pub graph: Graph,
    /// Sorted colluding nodes.
    pub colluders: Vec<NodeId>,
    /// Edges that were not present before.
    pub added: Vec<(NodeId, NodeId)>,
    pub hubs: Vec<NodeId>,
}

fn missing_edges(g: &Graph, pairs: impl IntoIterator<Item = (NodeId, NodeId)>) -> Vec<(NodeId, NodeId)> {
    let mut out: Vec<(NodeId, NodeId)> = pairs
        .into_iter()
        .filter(|&(u, v)| u != v && !g.has_edge(u, v) && !g.has_edge(v, u))
        .map(|(u, v)| (u.min(v), u.max(v)))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Samples `round(fraction · |pool|)` nodes from `pool` and joins them into
/// a clique.
pub fn adversarial_pnc(graph: &Graph, pool: &[NodeId], fraction: f64, seed: u64) -> Result<Perturbation> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("collusion fraction {fraction} outside [0, 1]")));
    }
    let m = (fraction * pool.len() as f64).round() as usize;
    let mut rng = seed::rng(seed);
    let mut colluders: Vec<NodeId> = pool.choose_multiple(&mut rng, m).copied().collect();
    colluders.sort_unstable();
    let clique = colluders
        .iter()
        .enumerate()
        .flat_map(|(i, &u)| colluders[i + 1..].iter().map(move |&v| (u, v)));
    let added = missing_edges(graph, clique);
    let (graph, _) = graph.with_added_edges(&added)?;
    Ok(Perturbation {
        graph,
        colluders,
        added,
        hubs: Vec::new(),
    })
}

/// `max(1, ⌈hub_fraction · colluders⌉)`.
pub fn hub_count(colluders: usize, hub_fraction: f64) -> usize {
    ((hub_fraction * colluders as f64).ceil() as usize).max(1)
}

/// Samples `round(pair_fraction · |candidates|)` (at least one) of the
/// non-adjacent `candidates`; their endpoints collude. The highest-degree
/// colluders become hubs, and every other colluder links to every hub.
pub fn adversarial_lp(
    graph: &Graph,
    candidates: &[(NodeId, NodeId)],
    pair_fraction: f64,
    hub_fraction: f64,
    seed: u64,
) -> Result<Perturbation> {
    if !(0.0..=1.0).contains(&pair_fraction) || !(0.0..=1.0).contains(&hub_fraction) {
        return Err(Error::invalid("attack fractions must lie in [0, 1]"));
    }
    let open: Vec<(NodeId, NodeId)> = candidates
        .iter()
        .copied()
        .filter(|&(u, v)| u != v && !graph.has_edge(u, v) && !graph.has_edge(v, u))
        .collect();
    if open.is_empty() {
        return Err(Error::invalid("no non-adjacent node pairs to collude on"));
    }
    let count = ((pair_fraction * open.len() as f64).round() as usize).max(1);
    let mut rng = seed::rng(seed);
    let picked: Vec<(NodeId, NodeId)> = open.choose_multiple(&mut rng, count).copied().collect();
    let mut colluders: Vec<NodeId> = picked.iter().flat_map(|&(u, v)| [u, v]).collect();
    colluders.sort_unstable();
    colluders.dedup();

    let degree = graph.degrees();
    let mut by_degree = colluders.clone();
    by_degree.sort_by(|&a, &b| degree[b].cmp(&degree[a]).then(a.cmp(&b)));
    let mut hubs: Vec<NodeId> = by_degree[..hub_count(colluders.len(), hub_fraction)].to_vec();
    hubs.sort_unstable();
    let links = colluders
        .iter()
        .filter(|c| hubs.binary_search(c).is_err())
        .flat_map(|&c| hubs.iter().map(move |&h| (c, h)));
    let added = missing_edges(graph, links);
    let (graph, _) = graph.with_added_edges(&added)?;
    Ok(Perturbation {
        graph,
        colluders,
        added,
        hubs,
    })
}

/// A trained model with everything needed to re-embed a modified graph.
#[derive(Debug, Clone, Copy)]
pub struct FrozenModel<'a> {
    pub params: &'a ModelParams,
    pub model: &'a ModelConfig,
    pub features: &'a Tensor,
    pub anchors: &'a [NodeId],
    pub walks: WalkConfig,
    pub similarity: SimilarityKind,
    pub normalize: bool,
}

impl FrozenModel<'_> {
    /// Samples fresh walks on `graph` with the stored walk seed and embeds
    /// every node with the frozen parameters.
    pub fn embed_graph(&self, graph: &Graph) -> Result<Embeddings> {
        let walks = sample_walks(graph, &self.walks)?;
        let sim = similarity_matrix(&walks, self.anchors, self.similarity, self.normalize)?;
        let inputs = ModelInputs::new(self.features.clone(), self.anchors.to_vec(), &sim)?;
        embed(&inputs, self.params, self.model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttackScore {
    pub before: f64,
    pub after: f64,
    pub delta: f64,
    pub pairs: usize,
}

/// Pairs with at least one colluding endpoint; all of `pairs` when that
/// subset lacks either label.
pub fn colluder_pairs(pairs: &[Pair], colluders: &[NodeId]) -> Vec<Pair> {
    let touches = |p: &&Pair| colluders.binary_search(&p.u).is_ok() || colluders.binary_search(&p.v).is_ok();
    let sel: Vec<Pair> = pairs.iter().filter(touches).copied().collect();
    if sel.iter().any(|p| p.label) && sel.iter().any(|p| !p.label) {
        sel
    } else {
        pairs.to_vec()
    }
}

/// AUC on colluder pairs with the clean graph and with the perturbed graph.
pub fn evaluate_attack(
    frozen: &FrozenModel<'_>,
    clean: &Graph,
    attack: &Perturbation,
    pairs: &[Pair],
) -> Result<AttackScore> {
    let target = colluder_pairs(pairs, &attack.colluders);
    let before = pair_auc(&frozen.embed_graph(clean)?, &target)?;
    let after = if attack.added.is_empty() {
        before
    } else {
        pair_auc(&frozen.embed_graph(&attack.graph)?, &target)?
    };
    Ok(AttackScore {
        before,
        after,
        delta: before - after,
        pairs: target.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_connected_caveman, generate_grid, Edge};
    use std::collections::VecDeque;

    fn induced_diameter(g: &Graph, nodes: &[NodeId]) -> usize {
        let adj = g.adjacency();
        let inside = |v: NodeId| nodes.binary_search(&v).is_ok();
        let mut worst = 0;
        for &s in nodes {
            let mut dist = vec![usize::MAX; g.n()];
            dist[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &w in adj.neighbors(u) {
                    if inside(w) && dist[w] == usize::MAX {
                        dist[w] = dist[u] + 1;
                        q.push_back(w);
                    }
                }
            }
            worst = worst.max(nodes.iter().map(|&v| dist[v]).max().unwrap());
        }
        worst
    }

    #[test]
    fn pnc_clique() {
        let g = generate_connected_caveman(10, 5).unwrap();
        let pool: Vec<NodeId> = (0..50).collect();
        let p = adversarial_pnc(&g, &pool, 0.1, 3).unwrap();
        assert_eq!(p.colluders.len(), 5);
        for (i, &u) in p.colluders.iter().enumerate() {
            for &v in &p.colluders[i + 1..] {
                assert!(p.graph.has_edge(u, v));
            }
        }
        // Everything else is untouched.
        let before = g.edge_set();
        let after = p.graph.edge_set();
        assert!(before.is_subset(&after));
        assert_eq!(after.len() - before.len(), p.added.len());
        for &(u, v) in &p.added {
            assert!(p.colluders.contains(&u) && p.colluders.contains(&v));
        }
        let again = adversarial_pnc(&g, &pool, 0.1, 3).unwrap();
        assert_eq!(again.colluders, p.colluders);
    }

    #[test]
    fn pnc_two_nodes_add_at_most_one_edge() {
        let g = generate_grid(4, 5).unwrap();
        let pool: Vec<NodeId> = (0..20).collect();
        let p = adversarial_pnc(&g, &pool, 0.1, 9).unwrap();
        assert_eq!(p.colluders.len(), 2);
        assert!(p.added.len() <= 1);
    }

    #[test]
    fn lp_hubs_and_diameter() {
        let g = generate_grid(8, 8).unwrap();
        let mut candidates = Vec::new();
        for u in 0..64 {
            for v in u + 1..64 {
                if !g.has_edge(u, v) {
                    candidates.push((u, v));
                }
            }
        }
        for seed in 0..5 {
            let p = adversarial_lp(&g, &candidates, 0.1, 0.02, seed).unwrap();
            assert_eq!(p.hubs.len(), hub_count(p.colluders.len(), 0.02));
            assert!(induced_diameter(&p.graph, &p.colluders) <= 2);
            let again = adversarial_lp(&g, &candidates, 0.1, 0.02, seed).unwrap();
            assert_eq!(again.added, p.added);
        }
        assert_eq!(hub_count(10, 0.02), 1);
        assert_eq!(hub_count(51, 0.02), 2);
        assert!(adversarial_lp(&g, &[(0, 1)], 0.1, 0.02, 0).is_err());
    }

    #[test]
    fn hubs_are_highest_degree() {
        // Star center 0 has the highest degree among the candidates' nodes.
        let g = Graph::new(6, (1..5).map(|v| Edge::unit(0, v)), false).unwrap();
        let p = adversarial_lp(&g, &[(0, 5), (1, 2), (3, 4)], 1.0, 0.02, 0).unwrap();
        assert_eq!(p.hubs, vec![0]);
        for v in [1, 2, 3, 4, 5] {
            assert!(p.graph.has_edge(0, v));
        }
    }

    #[test]
    fn colluder_pair_selection() {
        let pairs = [
            Pair {
                u: 0,
                v: 1,
                label: true,
            },
            Pair {
                u: 2,
                v: 3,
                label: false,
            },
            Pair {
                u: 0,
                v: 3,
                label: false,
            },
        ];
        assert_eq!(colluder_pairs(&pairs, &[0]).len(), 2);
        // Only one label present among touching pairs: fall back to all.
        assert_eq!(colluder_pairs(&pairs, &[1]).len(), 3);
    }
}
