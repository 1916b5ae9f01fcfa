//! Fixtures shared by the graphreach benchmarks.

use graphreach::pipeline::{self, Prepared};
use graphreach::ExperimentConfig;

/// Default configuration with `overrides` applied.
pub fn config(overrides: &[&str]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for kv in overrides {
        cfg.set_pair(kv).expect("benchmark override");
    }
    cfg
}

/// Splits, walks, anchors and model inputs for the communities dataset.
pub fn prepared(overrides: &[&str]) -> (ExperimentConfig, Prepared) {
    let cfg = config(overrides);
    let graph = pipeline::build_graph(&cfg.dataset).expect("benchmark graph");
    let prepared = pipeline::prepare(&cfg, &graph, 0).expect("benchmark inputs");
    (cfg, prepared)
}
