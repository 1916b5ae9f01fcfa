//! Experiment configuration as plain `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys and
//! malformed values are rejected. Every key has a default, so an empty file
//! is a valid configuration.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::anchors::{default_anchor_count, AnchorStrategy};
use crate::error::{Error, Result};
use crate::model::{FinalActivation, ModelConfig};
use crate::train::{Setting, SplitConfig, TaskKind, TrainConfig};
use crate::walks::SimilarityKind;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Communities {
        cliques: usize,
        clique_size: usize,
    },
    Grid {
        rows: usize,
        cols: usize,
    },
    Files {
        edges: PathBuf,
        attributes: Option<PathBuf>,
        labels: Option<PathBuf>,
        directed: bool,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Communities { .. } => "communities",
            DatasetSpec::Grid { .. } => "grid",
            DatasetSpec::Files { .. } => "files",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkLength {
    Diameter,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnchorCount {
    /// `⌈(ln n)²⌉`.
    LogSquared,
    Fixed(usize),
    /// Percentage of the node count, rounded, at least 1.
    Percent(f64),
}

impl AnchorCount {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            AnchorCount::LogSquared => default_anchor_count(n),
            AnchorCount::Fixed(k) => k,
            AnchorCount::Percent(p) => ((p / 100.0 * n as f64).round() as usize).max(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub samples: usize,
    /// PNC: fraction of test nodes that collude.
    pub node_fraction: f64,
    /// LP: fraction of candidate non-adjacent test pairs that collude.
    pub pair_fraction: f64,
    pub hub_fraction: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            samples: 5,
            node_fraction: 0.10,
            pair_fraction: 0.10,
            hub_fraction: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub task: TaskKind,
    pub setting: Setting,
    pub walks_per_node: usize,
    pub walk_length: WalkLength,
    pub similarity: SimilarityKind,
    pub normalize_ordered: bool,
    pub anchor_strategy: AnchorStrategy,
    pub anchor_count: AnchorCount,
    pub sample_fraction: f64,
    pub rounds: usize,
    /// Greedy selection clears its coverage state once saturated instead of
    /// filling the remaining slots by lowest id.
    pub restart_on_saturation: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub attack: AttackConfig,
    /// Root seed of the first run.
    pub seed: u64,
    /// Number of runs; run `i` uses root seed `seed + i`.
    pub seeds: usize,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: DatasetSpec::Communities {
                cliques: 20,
                clique_size: 20,
            },
            task: TaskKind::Pnc,
            setting: Setting::Inductive,
            walks_per_node: 50,
            walk_length: WalkLength::Diameter,
            similarity: SimilarityKind::Count,
            normalize_ordered: false,
            anchor_strategy: AnchorStrategy::Greedy,
            anchor_count: AnchorCount::LogSquared,
            sample_fraction: 0.30,
            rounds: 5,
            restart_on_saturation: true,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            attack: AttackConfig::default(),
            seed: 0,
            seeds: 3,
            output: PathBuf::from("out"),
        }
    }
}

/// Every accepted key, in rendering order.
pub const KEYS: &[&str] = &[
    "dataset.kind",
    "dataset.cliques",
    "dataset.clique_size",
    "dataset.rows",
    "dataset.cols",
    "dataset.edges",
    "dataset.attributes",
    "dataset.labels",
    "dataset.directed",
    "task",
    "setting",
    "walks.per_node",
    "walks.length",
    "walks.similarity",
    "walks.normalize",
    "anchors.strategy",
    "anchors.k",
    "anchors.sample_fraction",
    "anchors.rounds",
    "anchors.restart",
    "model.layers",
    "model.hidden",
    "model.aggregator",
    "model.dropout",
    "model.final",
    "model.leaky_slope",
    "train.epochs",
    "train.lr",
    "train.lr_after",
    "train.lr_switch_epoch",
    "train.batch_size",
    "train.eval_interval",
    "split.max_pairs",
    "split.by_component",
    "attack.samples",
    "attack.node_fraction",
    "attack.pair_fraction",
    "attack.hub_fraction",
    "seed",
    "seeds",
    "output",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid value {value:?} for {key}: expected true or false"
        ))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

impl ExperimentConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip_config(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {pair:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset.kind" => {
                self.dataset = match value {
                    "communities" => DatasetSpec::Communities {
                        cliques: 20,
                        clique_size: 20,
                    },
                    "grid" => DatasetSpec::Grid { rows: 20, cols: 20 },
                    "files" => DatasetSpec::Files {
                        edges: PathBuf::new(),
                        attributes: None,
                        labels: None,
                        directed: false,
                    },
                    _ => return Err(Error::Config(format!("unknown dataset kind {value:?}"))),
                }
            }
            "dataset.cliques" | "dataset.clique_size" => match &mut self.dataset {
                DatasetSpec::Communities { cliques, clique_size } => {
                    let slot = if key == "dataset.cliques" { cliques } else { clique_size };
                    *slot = parse(key, value)?;
                }
                _ => return Err(wrong_kind(key, "communities")),
            },
            "dataset.rows" | "dataset.cols" => match &mut self.dataset {
                DatasetSpec::Grid { rows, cols } => {
                    let slot = if key == "dataset.rows" { rows } else { cols };
                    *slot = parse(key, value)?;
                }
                _ => return Err(wrong_kind(key, "grid")),
            },
            "dataset.edges" | "dataset.attributes" | "dataset.labels" | "dataset.directed" => match &mut self.dataset {
                DatasetSpec::Files {
                    edges,
                    attributes,
                    labels,
                    directed,
                } => match key {
                    "dataset.edges" => *edges = PathBuf::from(value),
                    "dataset.attributes" => *attributes = optional_path(value),
                    "dataset.labels" => *labels = optional_path(value),
                    _ => *directed = parse_bool(key, value)?,
                },
                _ => return Err(wrong_kind(key, "files")),
            },
            "task" => self.task = parse(key, value)?,
            "setting" => self.setting = parse(key, value)?,
            "walks.per_node" => self.walks_per_node = parse(key, value)?,
            "walks.length" => {
                self.walk_length = if value == "diameter" {
                    WalkLength::Diameter
                } else {
                    WalkLength::Fixed(parse(key, value)?)
                }
            }
            "walks.similarity" => {
                self.similarity = match value {
                    "count" => SimilarityKind::Count,
                    "ordered" => SimilarityKind::Ordered,
                    _ => return Err(Error::Config(format!("unknown similarity {value:?}"))),
                };
                self.model.similarity = self.similarity;
            }
            "walks.normalize" => self.normalize_ordered = parse_bool(key, value)?,
            "anchors.strategy" => self.anchor_strategy = parse(key, value)?,
            "anchors.k" => {
                self.anchor_count = if value == "log2n" {
                    AnchorCount::LogSquared
                } else if let Some(p) = value.strip_suffix('%') {
                    AnchorCount::Percent(parse(key, p.trim())?)
                } else {
                    AnchorCount::Fixed(parse(key, value)?)
                }
            }
            "anchors.sample_fraction" => self.sample_fraction = parse(key, value)?,
            "anchors.rounds" => self.rounds = parse(key, value)?,
            "anchors.restart" => self.restart_on_saturation = parse_bool(key, value)?,
            "model.layers" => self.model.layers = parse(key, value)?,
            "model.hidden" => self.model.hidden = parse(key, value)?,
            "model.aggregator" => self.model.aggregator = parse(key, value)?,
            "model.dropout" => self.model.dropout = parse(key, value)?,
            "model.final" => self.model.final_activation = parse(key, value)?,
            "model.leaky_slope" => self.model.leaky_slope = parse(key, value)?,
            "train.epochs" => self.train.epochs = parse(key, value)?,
            "train.lr" => self.train.schedule.initial = parse(key, value)?,
            "train.lr_after" => self.train.schedule.after = parse(key, value)?,
            "train.lr_switch_epoch" => self.train.schedule.switch_epoch = parse(key, value)?,
            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.eval_interval" => self.train.eval_interval = parse(key, value)?,
            "split.max_pairs" => self.split.max_pairs = parse(key, value)?,
            "split.by_component" => self.split.by_component = parse_bool(key, value)?,
            "attack.samples" => self.attack.samples = parse(key, value)?,
            "attack.node_fraction" => self.attack.node_fraction = parse(key, value)?,
            "attack.pair_fraction" => self.attack.pair_fraction = parse(key, value)?,
            "attack.hub_fraction" => self.attack.hub_fraction = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "seeds" => self.seeds = parse(key, value)?,
            "output" => self.output = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        match &self.dataset {
            DatasetSpec::Communities { cliques, clique_size } if *cliques < 2 || *clique_size < 2 => {
                return bad("communities need at least 2 cliques of at least 2 nodes")
            }
            DatasetSpec::Grid { rows, cols } if *rows == 0 || *cols == 0 => {
                return bad("grid dimensions must be positive")
            }
            DatasetSpec::Files { edges, .. } if edges.as_os_str().is_empty() => {
                return bad("dataset.edges is required for file datasets")
            }
            _ => {}
        }
        if self.walks_per_node == 0 || self.walk_length == WalkLength::Fixed(0) {
            return bad("walk count and length must be at least 1");
        }
        match self.anchor_count {
            AnchorCount::Fixed(0) => return bad("anchors.k must be at least 1"),
            AnchorCount::Percent(p) if !(p > 0.0 && p <= 100.0) => {
                return bad("anchors.k percentage must lie in (0, 100]")
            }
            _ => {}
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) || self.rounds == 0 {
            return bad("anchors.sample_fraction must lie in (0, 1] and rounds be at least 1");
        }
        if self.seeds == 0 || self.attack.samples == 0 {
            return bad("seeds and attack.samples must be at least 1");
        }
        for f in [
            self.attack.node_fraction,
            self.attack.pair_fraction,
            self.attack.hub_fraction,
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad("attack fractions must lie in [0, 1]");
            }
        }
        if self.model.similarity != self.similarity {
            return bad("model similarity differs from walks.similarity");
        }
        self.model.validate().map_err(|e| Error::Config(strip_config(e)))?;
        self.train.validate()?;
        Ok(())
    }

    /// The value of every key, in [`KEYS`] order. Keys that do not apply to
    /// the dataset kind are omitted.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out: Vec<(&'static str, String)> = vec![("dataset.kind", self.dataset.name().into())];
        match &self.dataset {
            DatasetSpec::Communities { cliques, clique_size } => {
                out.push(("dataset.cliques", cliques.to_string()));
                out.push(("dataset.clique_size", clique_size.to_string()));
            }
            DatasetSpec::Grid { rows, cols } => {
                out.push(("dataset.rows", rows.to_string()));
                out.push(("dataset.cols", cols.to_string()));
            }
            DatasetSpec::Files {
                edges,
                attributes,
                labels,
                directed,
            } => {
                let show = |p: &Option<PathBuf>| p.as_ref().map_or("none".into(), |p| p.display().to_string());
                out.push(("dataset.edges", edges.display().to_string()));
                out.push(("dataset.attributes", show(attributes)));
                out.push(("dataset.labels", show(labels)));
                out.push(("dataset.directed", directed.to_string()));
            }
        }
        let m = &self.model;
        let t = &self.train;
        let sim = match self.similarity {
            SimilarityKind::Count => "count",
            SimilarityKind::Ordered => "ordered",
        };
        let final_name = match m.final_activation {
            FinalActivation::Identity => "identity",
            FinalActivation::Sigmoid => "sigmoid",
        };
        let length = match self.walk_length {
            WalkLength::Diameter => "diameter".to_string(),
            WalkLength::Fixed(l) => l.to_string(),
        };
        let k = match self.anchor_count {
            AnchorCount::LogSquared => "log2n".to_string(),
            AnchorCount::Fixed(k) => k.to_string(),
            AnchorCount::Percent(p) => format!("{p}%"),
        };
        out.extend([
            ("task", self.task.name().to_string()),
            ("setting", self.setting.name().to_string()),
            ("walks.per_node", self.walks_per_node.to_string()),
            ("walks.length", length),
            ("walks.similarity", sim.to_string()),
            ("walks.normalize", self.normalize_ordered.to_string()),
            ("anchors.strategy", self.anchor_strategy.name().to_string()),
            ("anchors.k", k),
            ("anchors.sample_fraction", self.sample_fraction.to_string()),
            ("anchors.rounds", self.rounds.to_string()),
            ("anchors.restart", self.restart_on_saturation.to_string()),
            ("model.layers", m.layers.to_string()),
            ("model.hidden", m.hidden.to_string()),
            ("model.aggregator", m.aggregator.name().to_string()),
            ("model.dropout", m.dropout.to_string()),
            ("model.final", final_name.to_string()),
            ("model.leaky_slope", m.leaky_slope.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.lr", t.schedule.initial.to_string()),
            ("train.lr_after", t.schedule.after.to_string()),
            ("train.lr_switch_epoch", t.schedule.switch_epoch.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.eval_interval", t.eval_interval.to_string()),
            ("split.max_pairs", self.split.max_pairs.to_string()),
            ("split.by_component", self.split.by_component.to_string()),
            ("attack.samples", self.attack.samples.to_string()),
            ("attack.node_fraction", self.attack.node_fraction.to_string()),
            ("attack.pair_fraction", self.attack.pair_fraction.to_string()),
            ("attack.hub_fraction", self.attack.hub_fraction.to_string()),
            ("seed", self.seed.to_string()),
            ("seeds", self.seeds.to_string()),
            ("output", self.output.display().to_string()),
        ]);
        out
    }

    /// First 16 hex digits of SHA-256 over the rendered config, excluding
    /// `output`.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if k != "output" {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        h.finalize().iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Root seeds of all runs.
    pub fn run_seeds(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

fn wrong_kind(key: &str, kind: &str) -> Error {
    Error::Config(format!("{key} requires dataset.kind = {kind} to be set first"))
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Aggregator;

    #[test]
    fn empty_text_gives_defaults() {
        let c = ExperimentConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.anchor_count.resolve(400), 36);
    }

    #[test]
    fn parses_and_round_trips() {
        let text = "dataset.kind = grid\ndataset.rows = 5\ntask = lp\nwalks.length = 7\n\
                    anchors.k = 2.5%\nmodel.aggregator = M\nwalks.similarity = ordered\nseeds = 10\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.dataset, DatasetSpec::Grid { rows: 5, cols: 20 });
        assert_eq!(c.task, TaskKind::Lp);
        assert_eq!(c.walk_length, WalkLength::Fixed(7));
        assert_eq!(c.anchor_count.resolve(400), 10);
        assert_eq!(c.model.aggregator, Aggregator::Mean);
        assert_eq!(c.model.similarity, SimilarityKind::Ordered);
        let again = ExperimentConfig::parse(&c.to_string()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.hash(), c.hash());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
        assert!(ExperimentConfig::parse("walks.per_node = -3").is_err());
        assert!(ExperimentConfig::parse("dataset.rows = 3").is_err());
        assert!(ExperimentConfig::parse("model.dropout = 1.0").is_err());
        assert!(ExperimentConfig::parse("anchors.k = 0").is_err());
        assert!(ExperimentConfig::parse("dataset.kind = files").is_err());
        let e = ExperimentConfig::parse("seed = 1\nfoo = 2").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn hash_tracks_content_not_output() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.output = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.set_pair("train.epochs=10").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn every_key_is_rendered_for_some_kind() {
        let mut seen: Vec<&str> = ExperimentConfig::default().entries().iter().map(|e| e.0).collect();
        for kind in ["grid", "files"] {
            let mut c = ExperimentConfig::default();
            c.set("dataset.kind", kind).unwrap();
            seen.extend(c.entries().iter().map(|e| e.0));
        }
        for k in KEYS {
            assert!(seen.contains(k), "{k}");
        }
    }
}
