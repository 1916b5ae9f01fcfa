//! Task construction, optimization, scoring and collusion attacks.

pub mod adam;
pub mod attack;
pub mod metrics;
pub mod splits;
pub mod trainer;

pub use adam::{Adam, AdamConfig};
pub use attack::{adversarial_lp, adversarial_pnc, evaluate_attack, hub_count, AttackScore, FrozenModel, Perturbation};
pub use metrics::{macro_auc, mean_std, roc_auc};
pub use splits::{
    make_splits, node_features, split_counts, Pair, Partition, Setting, Split, SplitConfig, TaskDataset, TaskKind,
    Units,
};
pub use trainer::{
    evaluate, evaluate_embeddings, init_params, pair_auc, score_pairs, train, EpochRecord, LrSchedule, TrainConfig,
    TrainOutcome,
};
