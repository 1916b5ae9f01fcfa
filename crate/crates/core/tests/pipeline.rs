mod common;

use graphreach::anchors::{brute_force_select, greedy_select, BipartiteReach};
use graphreach::pipeline;
use graphreach::tensor::{load_checkpoint, save_checkpoint};
use graphreach::train::{evaluate, init_params};
use graphreach::walks::{sample_walks, similarity_matrix};
use graphreach::{ExperimentConfig, ModelParams, SimilarityKind, Split, WalkConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn similarity_rows_match_enumeration(seed in any::<u64>(), n in 2usize..5, l in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_connected_graph(&mut rng, n, 0.5);
        let walks = sample_walks(&g, &WalkConfig::new(8000, l, seed).unwrap()).unwrap();
        let anchors: Vec<usize> = (0..n).collect();
        let sim = similarity_matrix(&walks, &anchors, SimilarityKind::Count, false).unwrap();
        for v in 0..n {
            for a in 0..n {
                prop_assert!((sim.node_to_anchor(v, a) - common::enumerated_similarity(&g, v, a, l)).abs() < 0.03);
                prop_assert!((sim.anchor_to_node(v, a) - common::enumerated_similarity(&g, a, v, l)).abs() < 0.03);
            }
        }
    }

    #[test]
    fn brute_force_matches_exhaustive_oracle(seed in any::<u64>(), left in 1usize..9, k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sets = common::random_sets(&mut rng, left, 10, 0.3);
        let b = BipartiteReach::from_sets(sets.clone());
        let (_, cov) = brute_force_select(&b, k).unwrap();
        prop_assert_eq!(cov, common::best_coverage(&sets, k));
        prop_assert!(b.coverage(greedy_select(&b, k).nodes()) <= cov);
    }
}

fn small() -> ExperimentConfig {
    ExperimentConfig::parse(
        "dataset.kind = communities\n\
         dataset.cliques = 5\n\
         dataset.clique_size = 6\n\
         task = lp\n\
         walks.per_node = 20\n\
         model.hidden = 8\n\
         train.epochs = 40\n",
    )
    .unwrap()
}

#[test]
fn checkpoint_round_trip_reproduces_test_auc() {
    let cfg = small();
    let graph = pipeline::build_graph(&cfg.dataset).unwrap();
    let out = pipeline::run(&cfg, &graph, 3).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("params.ckpt");
    save_checkpoint(&path, &out.params.to_named()).unwrap();

    let again = pipeline::prepare(&cfg, &graph, 3).unwrap();
    let template = init_params(&cfg.model, &again.inputs, &again.data, 3).unwrap();
    let params = ModelParams::from_named(&template, load_checkpoint(&path).unwrap()).unwrap();
    let auc = evaluate(&again.inputs, &params, &cfg.model, &again.data, Split::Test).unwrap();
    assert_eq!(auc, out.summary.test_auc);
}

#[test]
fn rendered_config_parses_back() {
    let cfg = small();
    let text = cfg.to_string();
    let back = ExperimentConfig::parse(&text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
}
