//! Anchor selection over the bipartite reachability graph.
//!
//! Left side: candidate anchors. Right side: walk sources. Left node `u` is
//! joined to right node `v` when a retained walk from `v` visits `u`; the
//! reach set of an anchor set is the union of its right-side neighbors.
//! Coverage `|ρ(A)|` is monotone submodular, so greedy selection is within
//! `1 − 1/e` of the optimum.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use itertools::Itertools;
use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::seed;
use crate::walks::WalkSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteReach {
    /// `reach[u]` = sorted sources whose retained walks visit `u`.
    reach: Vec<Vec<u32>>,
}

impl BipartiteReach {
    /// From explicit reach sets; each list is sorted and deduplicated.
    pub fn from_sets(sets: Vec<Vec<NodeId>>) -> Self {
        let reach = sets
            .into_iter()
            .map(|s| {
                let mut s: Vec<u32> = s.into_iter().map(|x| x as u32).collect();
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        BipartiteReach { reach }
    }

    pub fn left_len(&self) -> usize {
        self.reach.len()
    }

    /// Size of the right side (one past the largest source id).
    pub fn right_len(&self) -> usize {
        self.reach
            .iter()
            .filter_map(|s| s.last())
            .map(|&x| x as usize + 1)
            .max()
            .unwrap_or(0)
            .max(self.reach.len())
    }

    pub fn reach_of(&self, u: NodeId) -> &[u32] {
        &self.reach[u]
    }

    pub fn edge_count(&self) -> usize {
        self.reach.iter().map(Vec::len).sum()
    }

    /// `|ρ(A)|`
    pub fn coverage(&self, set: &[NodeId]) -> usize {
        let mut covered = vec![false; self.right_len()];
        let mut count = 0;
        for &u in set {
            for &v in &self.reach[u] {
                if !std::mem::replace(&mut covered[v as usize], true) {
                    count += 1;
                }
            }
        }
        count
    }

    /// `|ρ(A ∪ {u})| − |ρ(A)|`
    pub fn marginal(&self, set: &[NodeId], u: NodeId) -> usize {
        let mut with = set.to_vec();
        with.push(u);
        self.coverage(&with) - self.coverage(set)
    }
}

/// Builds reach sets from a walk set. With `subset`, only walk indices
/// `subset[v]` of each source `v` are retained.
pub fn build_bipartite(walks: &WalkSet, subset: Option<&[Vec<usize>]>) -> BipartiteReach {
    let n = walks.n();
    let mut sets: Vec<Vec<u32>> = vec![Vec::new(); n];
    for v in 0..n {
        let mut visited: Vec<u32> = match subset {
            None => walks.visits(v).iter().map(|s| s.node).collect(),
            Some(sub) => {
                let mut all: Vec<u32> = sub[v].iter().flat_map(|&k| walks.trace(v, k).iter().copied()).collect();
                all.sort_unstable();
                all.dedup();
                all
            }
        };
        for u in visited.drain(..) {
            sets[u as usize].push(v as u32);
        }
    }
    // Sources are pushed in increasing order, so each list is already sorted.
    BipartiteReach { reach: sets }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorStrategy {
    Greedy,
    Frequency,
    Random,
}

impl AnchorStrategy {
    pub fn name(self) -> &'static str {
        match self {
            AnchorStrategy::Greedy => "greedy",
            AnchorStrategy::Frequency => "frequency",
            AnchorStrategy::Random => "random",
        }
    }
}

impl std::str::FromStr for AnchorStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(AnchorStrategy::Greedy),
            "frequency" => Ok(AnchorStrategy::Frequency),
            "random" => Ok(AnchorStrategy::Random),
            _ => Err(Error::Config(format!("unknown anchor strategy '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorSet {
    nodes: Vec<NodeId>,
    strategy: AnchorStrategy,
}

impl AnchorSet {
    pub fn new(nodes: Vec<NodeId>, strategy: AnchorStrategy) -> Result<Self> {
        let mut seen = nodes.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("anchor set contains duplicates"));
        }
        Ok(AnchorSet { nodes, strategy })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn k(&self) -> usize {
        self.nodes.len()
    }

    pub fn strategy(&self) -> AnchorStrategy {
        self.strategy
    }

    pub fn sorted(&self) -> Vec<NodeId> {
        let mut s = self.nodes.clone();
        s.sort_unstable();
        s
    }
}

/// Heap entry ordered by gain, then by lower node id.
#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    gain: usize,
    node: Reverse<NodeId>,
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.gain, self.node).cmp(&(other.gain, other.node))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy maximum coverage with lazy marginal re-evaluation. Produces the
/// same sequence as the naive greedy: largest marginal gain first, lowest id
/// on ties. Returns every left node when `k` exceeds the left side.
pub fn greedy_select(b: &BipartiteReach, k: usize) -> AnchorSet {
    greedy(b, k, false)
}

/// Like [`greedy_select`], except that once every reachable right node is
/// covered the coverage state is cleared and selection continues over the
/// remaining nodes. Without this, every pick after saturation has zero gain
/// and falls to the lowest ids. The two agree up to the first saturation.
pub fn greedy_select_restarting(b: &BipartiteReach, k: usize) -> AnchorSet {
    greedy(b, k, true)
}

fn greedy(b: &BipartiteReach, k: usize, restart: bool) -> AnchorSet {
    let n = b.left_len();
    let mut covered = vec![false; b.right_len()];
    let fresh_heap = |taken: &[bool]| -> BinaryHeap<Candidate> {
        (0..n)
            .filter(|&u| !taken[u])
            .map(|u| Candidate {
                gain: b.reach[u].len(),
                node: Reverse(u),
            })
            .collect()
    };
    let mut taken = vec![false; n];
    let mut heap = fresh_heap(&taken);
    let mut chosen = Vec::with_capacity(k.min(n));
    let mut gained_since_reset = false;
    while chosen.len() < k {
        let Some(top) = heap.pop() else { break };
        let u = top.node.0;
        let fresh = b.reach[u].iter().filter(|&&v| !covered[v as usize]).count();
        let cand = Candidate {
            gain: fresh,
            node: Reverse(u),
        };
        // Stale gains only overestimate, so beating the next stale entry
        // means beating every remaining candidate's true gain.
        if heap.peek().is_none_or(|next| cand >= *next) {
            if restart && fresh == 0 && gained_since_reset {
                covered.iter_mut().for_each(|c| *c = false);
                heap = fresh_heap(&taken);
                gained_since_reset = false;
                continue;
            }
            for &v in &b.reach[u] {
                covered[v as usize] = true;
            }
            gained_since_reset |= fresh > 0;
            taken[u] = true;
            chosen.push(u);
        } else {
            heap.push(cand);
        }
    }
    AnchorSet {
        nodes: chosen,
        strategy: AnchorStrategy::Greedy,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyConfig {
    pub sample_fraction: f64,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for FrequencyConfig {
    fn default() -> Self {
        FrequencyConfig {
            sample_fraction: 0.30,
            rounds: 5,
            seed: 0,
        }
    }
}

/// Per-source walk subsample of `⌈fraction · walks_per_node⌉` indices, drawn
/// without replacement.
pub fn sample_walk_subset(walks: &WalkSet, fraction: f64, seed: u64) -> Vec<Vec<usize>> {
    let nw = walks.walks_per_node();
    let take = ((fraction * nw as f64).ceil() as usize).clamp(1, nw);
    (0..walks.n())
        .map(|v| {
            let mut rng = seed::stream_rng(seed, v as u64);
            let mut idx = index::sample(&mut rng, nw, take).into_vec();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// Repeats greedy selection on random walk subsamples and keeps the `k`
/// nodes chosen most often. Ties go to the larger single-node coverage on
/// the full bipartite graph, then the lower id. Output is sorted by id.
pub fn frequency_select(walks: &WalkSet, k: usize, cfg: &FrequencyConfig) -> Result<AnchorSet> {
    if !(cfg.sample_fraction > 0.0 && cfg.sample_fraction <= 1.0) {
        return Err(Error::invalid("sample fraction must lie in (0, 1]"));
    }
    if cfg.rounds == 0 {
        return Err(Error::invalid("frequency selection needs at least one round"));
    }
    let picks: Vec<AnchorSet> = (0..cfg.rounds)
        .into_par_iter()
        .map(|r| {
            let round_seed = seed::derive_indexed(cfg.seed, "frequency-round", r as u64);
            let subset = sample_walk_subset(walks, cfg.sample_fraction, round_seed);
            greedy_select(&build_bipartite(walks, Some(&subset)), k)
        })
        .collect();
    let full = build_bipartite(walks, None);
    AnchorSet::new(rank_by_frequency(&picks, &full, k), AnchorStrategy::Frequency)
}

/// The `k` nodes picked most often across `rounds`, sorted by id.
fn rank_by_frequency(rounds: &[AnchorSet], full: &BipartiteReach, k: usize) -> Vec<NodeId> {
    let n = full.left_len();
    let mut freq = vec![0usize; n];
    for r in rounds {
        for &u in r.nodes() {
            freq[u] += 1;
        }
    }
    let mut order: Vec<NodeId> = (0..n).collect();
    order.sort_by_key(|&u| (Reverse(freq[u]), Reverse(full.reach_of(u).len()), u));
    order.truncate(k.min(n));
    order.sort_unstable();
    order
}

/// Uniform sample of `k` distinct nodes, sorted by id.
pub fn random_select(n: usize, k: usize, seed: u64) -> Result<AnchorSet> {
    if k > n {
        return Err(Error::invalid(format!("cannot pick {k} anchors from {n} nodes")));
    }
    let mut rng = seed::rng(seed);
    let mut nodes = index::sample(&mut rng, n, k).into_vec();
    nodes.sort_unstable();
    AnchorSet::new(nodes, AnchorStrategy::Random)
}

pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact maximum coverage by enumeration, lexicographically first optimum on
/// ties. Guarded to at most one million subsets.
pub fn brute_force_select(b: &BipartiteReach, k: usize) -> Result<(AnchorSet, usize)> {
    let n = b.left_len();
    let k = k.min(n);
    let count = binomial(n, k);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(format!("C({n}, {k}) = {count} subsets")));
    }
    let mut best: Option<(Vec<NodeId>, usize)> = None;
    for combo in (0..n).combinations(k) {
        let c = b.coverage(&combo);
        if best.as_ref().is_none_or(|(_, bc)| c > *bc) {
            best = Some((combo, c));
        }
    }
    let (nodes, cov) = best.unwrap_or((Vec::new(), 0));
    Ok((AnchorSet::new(nodes, AnchorStrategy::Greedy)?, cov))
}

/// `⌈(ln n)²⌉`, at least 1.
pub fn default_anchor_count(n: usize) -> usize {
    if n <= 1 {
        return 1;
    }
    let l = (n as f64).ln();
    ((l * l).ceil() as usize).max(1)
}

/// Header fields recorded alongside an anchor file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorFileMeta {
    pub seed: u64,
    pub config_hash: String,
}

pub fn write_anchor_file(path: &Path, anchors: &AnchorSet, meta: &AnchorFileMeta) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# provenance={} k={} seed={} config_hash={}",
        anchors.strategy().name(),
        anchors.k(),
        meta.seed,
        meta.config_hash
    );
    for &a in anchors.nodes() {
        let _ = writeln!(out, "{a}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_anchor_file(path: &Path) -> Result<(AnchorSet, AnchorFileMeta)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut strategy = AnchorStrategy::Greedy;
    let mut meta = AnchorFileMeta {
        seed: 0,
        config_hash: String::new(),
    };
    let mut nodes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(header) = line.strip_prefix('#') {
            for kv in header.split_whitespace() {
                match kv.split_once('=') {
                    Some(("provenance", v)) => strategy = v.parse()?,
                    Some(("seed", v)) => meta.seed = v.parse().unwrap_or(0),
                    Some(("config_hash", v)) => meta.config_hash = v.to_string(),
                    _ => {}
                }
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        nodes.push(line.parse::<NodeId>().map_err(|_| Error::Parse {
            file: name.clone(),
            line: i + 1,
            msg: format!("bad anchor id '{line}'"),
        })?);
    }
    Ok((AnchorSet::new(nodes, strategy)?, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_grid, Edge, Graph};
    use crate::walks::{sample_walks, WalkConfig};

    // Left nodes a=0, b=1, c=2 over right items 1..=4.
    fn abc() -> BipartiteReach {
        BipartiteReach::from_sets(vec![vec![1, 2, 3], vec![3, 4], vec![4], vec![], vec![]])
    }

    #[test]
    fn greedy_small_instance() {
        let b = abc();
        let a = greedy_select(&b, 2);
        assert_eq!(a.nodes(), &[0, 1]);
        assert_eq!(b.coverage(a.nodes()), 4);
        let (opt, cov) = brute_force_select(&b, 2).unwrap();
        assert_eq!(cov, 4);
        assert_eq!(opt.nodes(), &[0, 1]);
    }

    #[test]
    fn greedy_tie_breaks_low_id() {
        let b = BipartiteReach::from_sets(vec![vec![1], vec![2], vec![]]);
        assert_eq!(greedy_select(&b, 1).nodes(), &[0]);
    }

    #[test]
    fn greedy_exhausts() {
        let b = abc();
        let all = greedy_select(&b, 5);
        assert_eq!(all.sorted(), vec![0, 1, 2, 3, 4]);
        assert_eq!(greedy_select(&b, 50).k(), 5);
    }

    #[test]
    fn restarting_greedy_spreads_after_saturation() {
        let b = BipartiteReach::from_sets(vec![vec![0, 1, 2], vec![0], vec![3, 4, 5], vec![1, 2], vec![4, 5]]);
        // Nodes 0 and 2 cover everything; plain greedy then falls back to id order.
        assert_eq!(greedy_select(&b, 4).nodes(), &[0, 2, 1, 3]);
        assert_eq!(greedy_select_restarting(&b, 4).nodes(), &[0, 2, 3, 4]);
        assert_eq!(greedy_select_restarting(&b, 2).nodes(), greedy_select(&b, 2).nodes());
        assert_eq!(greedy_select_restarting(&b, 9).sorted(), vec![0, 1, 2, 3, 4]);
        // Empty reach sets never trigger an endless reset.
        let empty = BipartiteReach::from_sets(vec![vec![]; 3]);
        assert_eq!(greedy_select_restarting(&empty, 2).nodes(), &[0, 1]);
    }

    #[test]
    fn brute_force_cases() {
        let b = abc();
        let (one, cov) = brute_force_select(&b, 1).unwrap();
        assert_eq!((one.nodes(), cov), (&[0][..], 3));
        let empty = BipartiteReach::from_sets(vec![vec![]; 4]);
        assert_eq!(brute_force_select(&empty, 2).unwrap().1, 0);
        let big = BipartiteReach::from_sets(vec![vec![]; 100]);
        assert!(matches!(brute_force_select(&big, 10), Err(Error::TooLarge(_))));
    }

    #[test]
    fn bipartite_from_walks() {
        let g = Graph::new(3, [Edge::unit(0, 1)], false).unwrap();
        let ws = sample_walks(&g, &WalkConfig::new(2, 1, 0).unwrap()).unwrap();
        let b = build_bipartite(&ws, None);
        assert_eq!(b.reach_of(0), &[1]);
        assert_eq!(b.reach_of(1), &[0]);
        assert!(b.reach_of(2).is_empty());
        let none = build_bipartite(&ws, Some(&vec![vec![]; 3]));
        assert_eq!(none.edge_count(), 0);
    }

    #[test]
    fn anchor_count_formula() {
        assert_eq!(default_anchor_count(400), 36);
        assert_eq!(default_anchor_count(1), 1);
        assert_eq!(default_anchor_count(8), 5);
    }

    #[test]
    fn random_selection() {
        assert_eq!(random_select(5, 5, 3).unwrap().nodes(), &[0, 1, 2, 3, 4]);
        assert_eq!(random_select(50, 7, 3).unwrap(), random_select(50, 7, 3).unwrap());
        assert!(random_select(3, 4, 0).is_err());
    }

    #[test]
    fn random_selection_uniform() {
        let mut hits = [0usize; 10];
        for s in 0..10_000u64 {
            hits[random_select(10, 1, s).unwrap().nodes()[0]] += 1;
        }
        for h in hits {
            assert!((900..=1100).contains(&h), "{hits:?}");
        }
    }

    fn grid_walks() -> WalkSet {
        sample_walks(&generate_grid(6, 6).unwrap(), &WalkConfig::new(10, 4, 2).unwrap()).unwrap()
    }

    #[test]
    fn frequency_single_round_matches_greedy_on_sample() {
        let ws = grid_walks();
        let cfg = FrequencyConfig {
            sample_fraction: 0.3,
            rounds: 1,
            seed: 77,
        };
        let f = frequency_select(&ws, 5, &cfg).unwrap();
        let round_seed = seed::derive_indexed(77, "frequency-round", 0);
        let sub = sample_walk_subset(&ws, 0.3, round_seed);
        let g = greedy_select(&build_bipartite(&ws, Some(&sub)), 5);
        assert_eq!(f.nodes(), g.sorted().as_slice());
    }

    #[test]
    fn frequency_full_sample_matches_greedy() {
        let ws = grid_walks();
        let cfg = FrequencyConfig {
            sample_fraction: 1.0,
            rounds: 5,
            seed: 1,
        };
        let f = frequency_select(&ws, 6, &cfg).unwrap();
        let g = greedy_select(&build_bipartite(&ws, None), 6);
        assert_eq!(f.nodes(), g.sorted().as_slice());
        assert_eq!(f.strategy(), AnchorStrategy::Frequency);
    }

    #[test]
    fn frequency_majority_wins() {
        // Node 3 picked in 5/5 rounds, node 0 in 3/5, although node 0 covers more.
        let full = BipartiteReach::from_sets(vec![vec![0, 1, 2, 3], vec![], vec![], vec![0]]);
        let round = |u| AnchorSet::new(vec![u], AnchorStrategy::Greedy).unwrap();
        let mut rounds = vec![round(3); 5];
        rounds.extend(vec![round(0); 3]);
        assert_eq!(rank_by_frequency(&rounds, &full, 1), vec![3]);
        // Equal frequency: larger full-graph reach, then lower id.
        let rounds = vec![round(3), round(0)];
        assert_eq!(rank_by_frequency(&rounds, &full, 1), vec![0]);
        let rounds = vec![round(1), round(2)];
        assert_eq!(rank_by_frequency(&rounds, &full, 1), vec![1]);
    }

    #[test]
    fn frequency_rejects_bad_config() {
        let ws = grid_walks();
        let bad = FrequencyConfig {
            sample_fraction: 0.0,
            ..Default::default()
        };
        assert!(frequency_select(&ws, 2, &bad).is_err());
        let bad = FrequencyConfig {
            rounds: 0,
            ..Default::default()
        };
        assert!(frequency_select(&ws, 2, &bad).is_err());
    }

    #[test]
    fn anchor_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("anchors.txt");
        let a = AnchorSet::new(vec![4, 1, 9], AnchorStrategy::Greedy).unwrap();
        let meta = AnchorFileMeta {
            seed: 12,
            config_hash: "abc".into(),
        };
        write_anchor_file(&p, &a, &meta).unwrap();
        let (b, m) = read_anchor_file(&p).unwrap();
        assert_eq!((a, meta), (b, m));
        assert!(AnchorSet::new(vec![1, 1], AnchorStrategy::Random).is_err());
    }
}
