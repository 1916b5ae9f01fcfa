//! End-to-end runs: dataset, splits, walks, anchors, training, scoring and
//! the collusion protocol, all driven by one [`ExperimentConfig`] and a root
//! seed.

use serde::Serialize;

use crate::anchors::{
    build_bipartite, frequency_select, greedy_select, greedy_select_restarting, random_select, AnchorSet,
    AnchorStrategy, FrequencyConfig,
};
use crate::config::{DatasetSpec, ExperimentConfig, WalkLength};
use crate::error::{Error, Result};
use crate::graph::{generate_connected_caveman, generate_grid, load_graph, Graph, GraphFiles, NodeId};
use crate::model::{ModelInputs, ModelParams};
use crate::seed;
use crate::train::attack::colluder_pairs;
use crate::train::{
    adversarial_lp, adversarial_pnc, evaluate, evaluate_attack, init_params, make_splits, mean_std, node_features,
    train, AttackScore, EpochRecord, FrozenModel, Split, TaskDataset, TaskKind,
};
use crate::walks::{estimate_diameter, sample_walks, similarity_matrix, WalkConfig, WalkSet};

/// Builds or loads the configured graph.
pub fn build_graph(spec: &DatasetSpec) -> Result<Graph> {
    match spec {
        DatasetSpec::Communities { cliques, clique_size } => generate_connected_caveman(*cliques, *clique_size),
        DatasetSpec::Grid { rows, cols } => generate_grid(*rows, *cols),
        DatasetSpec::Files {
            edges,
            attributes,
            labels,
            directed,
        } => {
            let files = GraphFiles {
                edges: edges.clone(),
                attributes: attributes.clone(),
                labels: labels.clone(),
            };
            Ok(load_graph(&files, *directed)?.0)
        }
    }
}

/// Walk settings for `graph` under `cfg`, seeded from the run seed.
pub fn walk_config(cfg: &ExperimentConfig, graph: &Graph, run_seed: u64) -> Result<WalkConfig> {
    let length = match cfg.walk_length {
        WalkLength::Diameter => estimate_diameter(graph).max(1),
        WalkLength::Fixed(l) => l,
    };
    WalkConfig::new(cfg.walks_per_node, length, seed::derive(run_seed, seed::WALKS))
}

/// Anchors chosen from `walks` by the configured strategy.
pub fn select_anchors(cfg: &ExperimentConfig, walks: &WalkSet, run_seed: u64) -> Result<AnchorSet> {
    let n = walks.n();
    let k = cfg.anchor_count.resolve(n).min(n);
    let anchor_seed = seed::derive(run_seed, seed::ANCHORS);
    match cfg.anchor_strategy {
        AnchorStrategy::Greedy => {
            let b = build_bipartite(walks, None);
            Ok(if cfg.restart_on_saturation {
                greedy_select_restarting(&b, k)
            } else {
                greedy_select(&b, k)
            })
        }
        AnchorStrategy::Frequency => frequency_select(
            walks,
            k,
            &FrequencyConfig {
                sample_fraction: cfg.sample_fraction,
                rounds: cfg.rounds,
                seed: anchor_seed,
            },
        ),
        AnchorStrategy::Random => random_select(n, k, anchor_seed),
    }
}

/// Everything a run needs before training starts.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub graph: Graph,
    pub data: TaskDataset,
    pub walk_config: WalkConfig,
    pub walks: WalkSet,
    pub anchors: AnchorSet,
    pub inputs: ModelInputs,
}

pub fn prepare(cfg: &ExperimentConfig, graph: &Graph, run_seed: u64) -> Result<Prepared> {
    cfg.validate()?;
    let data = make_splits(graph, cfg.task, cfg.setting, &cfg.split, run_seed)?;
    let walk_config = walk_config(cfg, &data.walk_graph, run_seed)?;
    let walks = sample_walks(&data.walk_graph, &walk_config)?;
    let anchors = select_anchors(cfg, &walks, run_seed)?;
    let sim = similarity_matrix(&walks, anchors.nodes(), cfg.similarity, cfg.normalize_ordered)?;
    let features = node_features(&data.walk_graph, cfg.setting);
    let inputs = ModelInputs::new(features, anchors.nodes().to_vec(), &sim)?;
    Ok(Prepared {
        graph: graph.clone(),
        data,
        walk_config,
        walks,
        anchors,
        inputs,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub split_sizes: (usize, usize, usize),
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub anchors: usize,
    pub best_epoch: usize,
    pub val_auc: f64,
    pub test_auc: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub prepared: Prepared,
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    pub summary: RunSummary,
}

/// Trains and scores one run.
pub fn run(cfg: &ExperimentConfig, graph: &Graph, run_seed: u64) -> Result<RunOutcome> {
    let prepared = prepare(cfg, graph, run_seed)?;
    let init = init_params(&cfg.model, &prepared.inputs, &prepared.data, run_seed)?;
    let train_cfg = crate::train::TrainConfig {
        seed: run_seed,
        ..cfg.train
    };
    let out = train(&prepared.inputs, &cfg.model, &train_cfg, &prepared.data, init)?;
    let test_auc = evaluate(&prepared.inputs, &out.params, &cfg.model, &prepared.data, Split::Test)?;
    let summary = RunSummary {
        seed: run_seed,
        split_sizes: prepared.data.sizes(),
        walk_length: prepared.walk_config.walk_length,
        walks_per_node: prepared.walk_config.walks_per_node,
        anchors: prepared.anchors.k(),
        best_epoch: out.best_epoch,
        val_auc: out.best_val_auc,
        test_auc,
    };
    Ok(RunOutcome {
        prepared,
        params: out.params,
        history: out.history,
        summary,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackSummary {
    pub samples: Vec<AttackSample>,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackSample {
    pub colluders: usize,
    pub added_edges: usize,
    #[serde(flatten)]
    pub score: AttackScore,
}

/// Runs the collusion protocol against frozen parameters: each sample
/// perturbs the walk graph, walks are re-sampled with the training walk seed,
/// and test pairs touching colluders are scored before and after.
pub fn attack(
    cfg: &ExperimentConfig,
    prepared: &Prepared,
    params: &ModelParams,
    run_seed: u64,
) -> Result<AttackSummary> {
    let test = prepared
        .data
        .pairs()
        .ok_or_else(|| Error::invalid("collusion attacks need a pair task (lp or pnc)"))?
        .test
        .clone();
    let clean = &prepared.data.walk_graph;
    let frozen = FrozenModel {
        params,
        model: &cfg.model,
        features: prepared.inputs.features(),
        anchors: prepared.anchors.nodes(),
        walks: prepared.walk_config,
        similarity: cfg.similarity,
        normalize: cfg.normalize_ordered,
    };
    let mut samples = Vec::with_capacity(cfg.attack.samples);
    for i in 0..cfg.attack.samples {
        let s = seed::derive_indexed(run_seed, seed::ATTACK, i as u64);
        let perturbation = match prepared.data.task {
            TaskKind::Pnc => {
                let pool: Vec<NodeId> = (0..clean.n()).collect();
                adversarial_pnc(clean, &pool, cfg.attack.node_fraction, s)?
            }
            TaskKind::Lp => {
                let candidates: Vec<(NodeId, NodeId)> = test.iter().filter(|p| !p.label).map(|p| (p.u, p.v)).collect();
                adversarial_lp(clean, &candidates, cfg.attack.pair_fraction, cfg.attack.hub_fraction, s)?
            }
            TaskKind::Nc => unreachable!("node tasks have no pairs"),
        };
        let score = evaluate_attack(&frozen, clean, &perturbation, &test)?;
        debug_assert_eq!(score.pairs, colluder_pairs(&test, &perturbation.colluders).len());
        samples.push(AttackSample {
            colluders: perturbation.colluders.len(),
            added_edges: perturbation.added.len(),
            score,
        });
    }
    let mean = |f: fn(&AttackSample) -> f64| mean_std(&samples.iter().map(f).collect::<Vec<_>>()).0;
    Ok(AttackSummary {
        before: mean(|s| s.score.before),
        after: mean(|s| s.score.after),
        delta: mean(|s| s.score.delta),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        for kv in [
            "dataset.cliques=4",
            "dataset.clique_size=6",
            "train.epochs=20",
            "model.hidden=8",
            "walks.per_node=20",
            "attack.samples=2",
        ] {
            c.set_pair(kv).unwrap();
        }
        c
    }

    #[test]
    fn run_is_deterministic() {
        let cfg = small();
        let g = build_graph(&cfg.dataset).unwrap();
        let a = run(&cfg, &g, 5).unwrap();
        let b = run(&cfg, &g, 5).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.summary.test_auc, b.summary.test_auc);
        assert_eq!(a.summary.anchors, 11);
        let c = run(&cfg, &g, 6).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn attack_on_clean_graph_matches_test_auc() {
        let mut cfg = small();
        cfg.attack.node_fraction = 0.0;
        let g = build_graph(&cfg.dataset).unwrap();
        let out = run(&cfg, &g, 1).unwrap();
        let s = attack(&cfg, &out.prepared, &out.params, 1).unwrap();
        assert_eq!(s.delta, 0.0);
        // With no colluders every test pair is scored.
        assert_eq!(s.before, out.summary.test_auc);
    }

    #[test]
    fn lp_attack_runs() {
        let mut cfg = small();
        cfg.set_pair("task=lp").unwrap();
        let g = build_graph(&cfg.dataset).unwrap();
        let out = run(&cfg, &g, 2).unwrap();
        let s = attack(&cfg, &out.prepared, &out.params, 2).unwrap();
        assert_eq!(s.samples.len(), 2);
        assert!(s.samples.iter().all(|x| x.added_edges > 0));
    }

    #[test]
    fn nc_rejects_attack() {
        let mut cfg = small();
        cfg.set_pair("task=nc").unwrap();
        cfg.set_pair("dataset.cliques=3").unwrap();
        cfg.set_pair("dataset.clique_size=20").unwrap();
        let g = build_graph(&cfg.dataset).unwrap();
        let out = run(&cfg, &g, 0).unwrap();
        assert!(attack(&cfg, &out.prepared, &out.params, 0).is_err());
    }
}
