use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Link prediction.
    Lp,
    /// Pairwise node classification: do two nodes share a label?
    Pnc,
    /// Node classification.
    Nc,
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Lp => "lp",
            TaskKind::Pnc => "pnc",
            TaskKind::Nc => "nc",
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lp" => Ok(TaskKind::Lp),
            "pnc" => Ok(TaskKind::Pnc),
            "nc" => Ok(TaskKind::Nc),
            _ => Err(Error::Config(format!("unknown task '{s}' (expected lp, pnc or nc)"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Attributes only.
    Inductive,
    /// Attributes plus a one-hot node identity.
    Transductive,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Inductive => "inductive",
            Setting::Transductive => "transductive",
        }
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inductive" => Ok(Setting::Inductive),
            "transductive" => Ok(Setting::Transductive),
            _ => Err(Error::Config(format!(
                "unknown setting '{s}' (expected inductive or transductive)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub u: NodeId,
    pub v: NodeId,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Partition<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Partition<T> {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }

    pub fn get(&self, split: Split) -> &[T] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::Config(format!(
                "unknown split '{s}' (expected train, val or test)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Units {
    Pairs(Partition<Pair>),
    /// `(node, class)`.
    Nodes(Partition<(NodeId, usize)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Cap on same-label positive pairs for pairwise classification.
    pub max_pairs: usize,
    /// Assign whole connected components to splits instead of individual
    /// edges, pairs or nodes.
    pub by_component: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            max_pairs: 20_000,
            by_component: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub task: TaskKind,
    pub setting: Setting,
    /// Graph used for walks and message passing. For link prediction the
    /// held-out positive edges are removed.
    pub walk_graph: Graph,
    pub units: Units,
    pub classes: usize,
    /// Connected component of every node in the input graph.
    pub component: Vec<usize>,
}

impl TaskDataset {
    pub fn pairs(&self) -> Option<&Partition<Pair>> {
        match &self.units {
            Units::Pairs(p) => Some(p),
            Units::Nodes(_) => None,
        }
    }

    pub fn nodes(&self) -> Option<&Partition<(NodeId, usize)>> {
        match &self.units {
            Units::Nodes(p) => Some(p),
            Units::Pairs(_) => None,
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        match &self.units {
            Units::Pairs(p) => p.sizes(),
            Units::Nodes(p) => p.sizes(),
        }
    }
}

/// `(train, val, test)` sizes for `m` units: validation and test each get
/// `round(0.1·m)`, training gets the rest.
pub fn split_counts(m: usize) -> (usize, usize, usize) {
    let tenth = (m as f64 * 0.1).round() as usize;
    (m - 2 * tenth, tenth, tenth)
}

fn partition<T>(items: Vec<T>) -> Partition<T> {
    let (tr, va, _) = split_counts(items.len());
    let mut it = items.into_iter();
    let train = it.by_ref().take(tr).collect();
    let val = it.by_ref().take(va).collect();
    let test = it.collect();
    Partition { train, val, test }
}

fn check_nonempty<T>(p: &Partition<T>, what: &str) -> Result<()> {
    if p.train.is_empty() || p.val.is_empty() || p.test.is_empty() {
        return Err(Error::invalid(format!(
            "too few {what} to split 80:10:10 (got {:?})",
            p.sizes()
        )));
    }
    Ok(())
}

/// Pairs in a set of at most this many candidates are enumerated; larger
/// sets are sampled by rejection.
const ENUMERATE_LIMIT: usize = 4_000_000;

/// `count` distinct unordered pairs `u < v` from `nodes` satisfying `keep`.
fn sample_pairs(
    nodes: &[NodeId],
    count: usize,
    keep: impl Fn(NodeId, NodeId) -> bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(NodeId, NodeId)>> {
    let m = nodes.len();
    let total = m * m.saturating_sub(1) / 2;
    if total <= ENUMERATE_LIMIT {
        let mut all = Vec::new();
        for (i, &u) in nodes.iter().enumerate() {
            for &v in &nodes[i + 1..] {
                let (a, b) = (u.min(v), u.max(v));
                if keep(a, b) {
                    all.push((a, b));
                }
            }
        }
        if all.len() < count {
            return Err(Error::invalid(format!(
                "only {} candidate pairs available, {count} needed",
                all.len()
            )));
        }
        all.shuffle(rng);
        all.truncate(count);
        return Ok(all);
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let budget = 200 * count + 1_000_000;
    for _ in 0..budget {
        if out.len() == count {
            break;
        }
        let u = nodes[rng.gen_range(0..m)];
        let v = nodes[rng.gen_range(0..m)];
        if u == v {
            continue;
        }
        let (a, b) = (u.min(v), u.max(v));
        if keep(a, b) && seen.insert((a, b)) {
            out.push((a, b));
        }
    }
    if out.len() < count {
        return Err(Error::invalid(format!(
            "could not sample {count} candidate pairs (found {})",
            out.len()
        )));
    }
    Ok(out)
}

fn non_edge(g: &Graph) -> impl Fn(NodeId, NodeId) -> bool + '_ {
    move |u, v| !g.has_edge(u, v) && !g.has_edge(v, u)
}

/// Positive and negative pairs for link prediction within `nodes`.
fn lp_pools(g: &Graph, nodes: &[NodeId], rng: &mut ChaCha8Rng) -> Result<(Vec<Pair>, Vec<Pair>)> {
    let inside: HashSet<NodeId> = nodes.iter().copied().collect();
    let mut pos: Vec<Pair> = g
        .edges()
        .iter()
        .filter(|e| inside.contains(&e.u) && inside.contains(&e.v))
        .map(|e| Pair {
            u: e.u,
            v: e.v,
            label: true,
        })
        .collect();
    pos.shuffle(rng);
    let neg = sample_pairs(nodes, pos.len(), non_edge(g), rng)?
        .into_iter()
        .map(|(u, v)| Pair { u, v, label: false })
        .collect();
    Ok((pos, neg))
}

/// Positive (same label) and negative (different label) pairs within `nodes`.
fn pnc_pools(
    labels: &[usize],
    nodes: &[NodeId],
    max_pairs: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Pair>, Vec<Pair>)> {
    let mut groups: Vec<Vec<NodeId>> = Vec::new();
    for &v in nodes {
        let c = labels[v];
        if groups.len() <= c {
            groups.resize(c + 1, Vec::new());
        }
        groups[c].push(v);
    }
    let same_total: usize = groups.iter().map(|g| g.len() * g.len().saturating_sub(1) / 2).sum();
    let want = same_total.min(max_pairs);
    let pos_pairs = if same_total <= ENUMERATE_LIMIT {
        let mut all = Vec::with_capacity(same_total);
        for g in &groups {
            for (i, &u) in g.iter().enumerate() {
                for &v in &g[i + 1..] {
                    all.push((u.min(v), u.max(v)));
                }
            }
        }
        all.shuffle(rng);
        all.truncate(want);
        all
    } else {
        // Pick a class in proportion to its pair count, then two members.
        let weights: Vec<usize> = groups.iter().map(|g| g.len() * g.len().saturating_sub(1) / 2).collect();
        let mut seen = HashSet::with_capacity(want);
        let mut out = Vec::with_capacity(want);
        while out.len() < want {
            let mut r = rng.gen_range(0..same_total);
            let c = weights
                .iter()
                .position(|&w| {
                    if r < w {
                        true
                    } else {
                        r -= w;
                        false
                    }
                })
                .expect("r < total");
            let g = &groups[c];
            let (i, j) = (rng.gen_range(0..g.len()), rng.gen_range(0..g.len()));
            if i != j {
                let (u, v) = (g[i].min(g[j]), g[i].max(g[j]));
                if seen.insert((u, v)) {
                    out.push((u, v));
                }
            }
        }
        out
    };
    let neg = sample_pairs(nodes, pos_pairs.len(), |u, v| labels[u] != labels[v], rng)?;
    let mk = |ps: Vec<(NodeId, NodeId)>, label| ps.into_iter().map(|(u, v)| Pair { u, v, label }).collect::<Vec<_>>();
    Ok((mk(pos_pairs, true), mk(neg, false)))
}

fn merge(pos: Partition<Pair>, neg: Partition<Pair>) -> Partition<Pair> {
    let join = |mut a: Vec<Pair>, b: Vec<Pair>| {
        a.extend(b);
        a
    };
    Partition {
        train: join(pos.train, neg.train),
        val: join(pos.val, neg.val),
        test: join(pos.test, neg.test),
    }
}

/// Splits `graph` into training, validation and test units for `task`.
pub fn make_splits(
    graph: &Graph,
    task: TaskKind,
    setting: Setting,
    cfg: &SplitConfig,
    seed: u64,
) -> Result<TaskDataset> {
    let mut rng = seed::rng(seed::derive(seed, seed::SPLITS));
    let component = graph.components();
    let labels = match task {
        TaskKind::Lp => None,
        TaskKind::Pnc | TaskKind::Nc => Some(
            graph
                .labels()
                .ok_or_else(|| Error::invalid(format!("task {task} needs node labels")))?,
        ),
    };
    let classes = graph.class_count();

    // Node groups: one group holding everything, or components dealt into
    // train / val / test.
    let groups: Option<Partition<NodeId>> = if cfg.by_component {
        let count = component.iter().max().map_or(0, |c| c + 1);
        let mut ids: Vec<usize> = (0..count).collect();
        ids.shuffle(&mut rng);
        let comp_split = partition(ids);
        check_nonempty(&comp_split, "components")?;
        let nodes_of = |cs: &[usize]| {
            let set: HashSet<usize> = cs.iter().copied().collect();
            (0..graph.n())
                .filter(|v| set.contains(&component[*v]))
                .collect::<Vec<_>>()
        };
        Some(Partition {
            train: nodes_of(&comp_split.train),
            val: nodes_of(&comp_split.val),
            test: nodes_of(&comp_split.test),
        })
    } else {
        None
    };
    let all: Vec<NodeId> = (0..graph.n()).collect();

    let units = match task {
        TaskKind::Lp | TaskKind::Pnc => {
            let pools = |nodes: &[NodeId], rng: &mut ChaCha8Rng| match labels {
                None => lp_pools(graph, nodes, rng),
                Some(l) => pnc_pools(l, nodes, cfg.max_pairs, rng),
            };
            let pairs = match &groups {
                None => {
                    let (pos, neg) = pools(&all, &mut rng)?;
                    let pos = partition(pos);
                    check_nonempty(&pos, "positive pairs")?;
                    merge(pos, partition(neg))
                }
                Some(g) => {
                    let mut side = |nodes: &[NodeId]| -> Result<Vec<Pair>> {
                        let (mut pos, neg) = pools(nodes, &mut rng)?;
                        pos.extend(neg);
                        Ok(pos)
                    };
                    let p = Partition {
                        train: side(&g.train)?,
                        val: side(&g.val)?,
                        test: side(&g.test)?,
                    };
                    check_nonempty(&p, "pairs")?;
                    p
                }
            };
            Units::Pairs(pairs)
        }
        TaskKind::Nc => {
            let labels = labels.expect("checked above");
            let tag = |vs: Vec<NodeId>| vs.into_iter().map(|v| (v, labels[v])).collect::<Vec<_>>();
            let nodes = match groups {
                None => {
                    let mut vs = all.clone();
                    vs.shuffle(&mut rng);
                    partition(tag(vs))
                }
                Some(g) => Partition {
                    train: tag(g.train),
                    val: tag(g.val),
                    test: tag(g.test),
                },
            };
            check_nonempty(&nodes, "labeled nodes")?;
            Units::Nodes(nodes)
        }
    };

    let walk_graph = match (&units, task) {
        (Units::Pairs(p), TaskKind::Lp) => {
            let held: Vec<(NodeId, NodeId)> = p
                .val
                .iter()
                .chain(&p.test)
                .filter(|q| q.label)
                .map(|q| (q.u, q.v))
                .collect();
            graph.without_edges(&held)
        }
        _ => graph.clone(),
    };

    Ok(TaskDataset {
        task,
        setting,
        walk_graph,
        units,
        classes,
        component,
    })
}

/// Node input matrix: the attribute matrix, or a single constant column when
/// the graph has none; the transductive setting appends a one-hot identity.
pub fn node_features(graph: &Graph, setting: Setting) -> Tensor {
    let n = graph.n();
    let (d, base): (usize, Vec<f64>) = match graph.attributes() {
        Some(a) => (a.dim(), a.values().to_vec()),
        None => (1, vec![1.0; n]),
    };
    match setting {
        Setting::Inductive => Tensor::from_vec(n, d, base).expect("attribute shape"),
        Setting::Transductive => {
            let mut out = Tensor::zeros(n, d + n);
            for v in 0..n {
                for c in 0..d {
                    out.set(v, c, base[v * d + c]);
                }
                out.set(v, d + v, 1.0);
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_connected_caveman, generate_grid, Edge};

    #[test]
    fn counts() {
        assert_eq!(split_counts(3800), (3040, 380, 380));
        assert_eq!(split_counts(10), (8, 1, 1));
        assert_eq!(split_counts(5), (3, 1, 1));
        assert_eq!(split_counts(4), (4, 0, 0));
    }

    #[test]
    fn communities_lp() {
        let g = generate_connected_caveman(20, 20).unwrap();
        let d = make_splits(&g, TaskKind::Lp, Setting::Inductive, &SplitConfig::default(), 1).unwrap();
        let p = d.pairs().unwrap();
        for (part, want) in [(&p.train, 3040), (&p.val, 380), (&p.test, 380)] {
            assert_eq!(part.iter().filter(|q| q.label).count(), want);
            assert_eq!(part.iter().filter(|q| !q.label).count(), want);
        }
        for q in p.train.iter().chain(&p.val).chain(&p.test) {
            assert_eq!(g.has_edge(q.u, q.v), q.label);
        }
        // Held-out positives never reach the walk graph.
        for q in p.val.iter().chain(&p.test).filter(|q| q.label) {
            assert!(!d.walk_graph.has_edge(q.u, q.v));
        }
        assert_eq!(d.walk_graph.edge_count(), 3040);
        let all: Vec<(NodeId, NodeId)> = p
            .train
            .iter()
            .chain(&p.val)
            .chain(&p.test)
            .map(|q| (q.u.min(q.v), q.u.max(q.v)))
            .collect();
        let distinct: HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), all.len());
    }

    #[test]
    fn pnc_labels_and_determinism() {
        let g = generate_connected_caveman(6, 5).unwrap();
        let cfg = SplitConfig::default();
        let d = make_splits(&g, TaskKind::Pnc, Setting::Inductive, &cfg, 4).unwrap();
        let p = d.pairs().unwrap();
        let labels = g.labels().unwrap();
        for q in p.train.iter().chain(&p.val).chain(&p.test) {
            assert_eq!(labels[q.u] == labels[q.v], q.label);
            assert!(q.u < q.v);
        }
        // 6 classes of 5 nodes: 60 same-label pairs.
        assert_eq!(p.train.len() + p.val.len() + p.test.len(), 120);
        assert_eq!(d.walk_graph, g);
        let again = make_splits(&g, TaskKind::Pnc, Setting::Inductive, &cfg, 4).unwrap();
        assert_eq!(again.units, d.units);
        let other = make_splits(&g, TaskKind::Pnc, Setting::Inductive, &cfg, 5).unwrap();
        assert_ne!(other.units, d.units);
    }

    #[test]
    fn pnc_cap() {
        let g = generate_connected_caveman(20, 20).unwrap();
        let cfg = SplitConfig {
            max_pairs: 1000,
            ..SplitConfig::default()
        };
        let d = make_splits(&g, TaskKind::Pnc, Setting::Inductive, &cfg, 0).unwrap();
        let p = d.pairs().unwrap();
        assert_eq!(p.sizes(), (1600, 200, 200));
    }

    #[test]
    fn nc_partitions_nodes() {
        let g = generate_connected_caveman(4, 5).unwrap();
        let d = make_splits(&g, TaskKind::Nc, Setting::Transductive, &SplitConfig::default(), 2).unwrap();
        let p = d.nodes().unwrap();
        assert_eq!(p.sizes(), (16, 2, 2));
        let mut all: Vec<NodeId> = p.train.iter().chain(&p.val).chain(&p.test).map(|x| x.0).collect();
        all.sort();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert_eq!(d.classes, 4);
    }

    #[test]
    fn labels_required() {
        let g = generate_grid(3, 3).unwrap();
        assert!(make_splits(&g, TaskKind::Pnc, Setting::Inductive, &SplitConfig::default(), 0).is_err());
        assert!(make_splits(&g, TaskKind::Lp, Setting::Inductive, &SplitConfig::default(), 0).is_ok());
        let tiny = Graph::new(3, [Edge::unit(0, 1)], false).unwrap();
        assert!(make_splits(&tiny, TaskKind::Lp, Setting::Inductive, &SplitConfig::default(), 0).is_err());
    }

    #[test]
    fn component_splits_are_disjoint() {
        // Ten separate 5-cycles with labels.
        let mut edges = Vec::new();
        for c in 0..10 {
            for i in 0..5 {
                edges.push(Edge::unit(c * 5 + i, c * 5 + (i + 1) % 5));
            }
        }
        let labels = (0..50).map(|v| v % 2).collect();
        let g = Graph::new(50, edges, false).unwrap().with_labels(labels).unwrap();
        let cfg = SplitConfig {
            by_component: true,
            ..SplitConfig::default()
        };
        for task in [TaskKind::Lp, TaskKind::Pnc, TaskKind::Nc] {
            let d = make_splits(&g, task, Setting::Inductive, &cfg, 3).unwrap();
            let comps = |vs: Vec<NodeId>| vs.into_iter().map(|v| d.component[v]).collect::<HashSet<_>>();
            let (tr, va, te) = match &d.units {
                Units::Pairs(p) => (
                    comps(p.train.iter().flat_map(|q| [q.u, q.v]).collect()),
                    comps(p.val.iter().flat_map(|q| [q.u, q.v]).collect()),
                    comps(p.test.iter().flat_map(|q| [q.u, q.v]).collect()),
                ),
                Units::Nodes(p) => (
                    comps(p.train.iter().map(|x| x.0).collect()),
                    comps(p.val.iter().map(|x| x.0).collect()),
                    comps(p.test.iter().map(|x| x.0).collect()),
                ),
            };
            assert!(
                tr.is_disjoint(&va) && tr.is_disjoint(&te) && va.is_disjoint(&te),
                "{task}"
            );
        }
    }

    #[test]
    fn features() {
        let g = generate_grid(2, 2).unwrap();
        let x = node_features(&g, Setting::Inductive);
        assert_eq!(x.shape(), (4, 1));
        let x = node_features(&g, Setting::Transductive);
        assert_eq!(x.shape(), (4, 5));
        assert_eq!(x.row_slice(2), &[1.0, 0.0, 0.0, 1.0, 0.0]);
    }
}
