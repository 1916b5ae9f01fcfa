use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::metrics::{macro_auc, roc_auc};
use super::splits::{Pair, Split, TaskDataset, Units};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::model::{
    class_log_probs, decode_node, embed, forward, pair_probs, Embeddings, ModelConfig, ModelInputs, ModelParams,
};
use crate::seed;
use crate::tensor::{Tape, Tensor};

/// Step schedule: `initial` for the first `switch_epoch` epochs, then `after`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub after: f64,
    pub switch_epoch: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 0.01,
            after: 0.001,
            switch_epoch: 200,
        }
    }
}

impl LrSchedule {
    pub fn rate(&self, epoch: usize) -> f64 {
        if epoch < self.switch_epoch {
            self.initial
        } else {
            self.after
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub schedule: LrSchedule,
    /// Connected components per optimizer step.
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Root seed; dropout and batch order derive from it.
    pub seed: u64,
    /// Validation AUC is computed every this many epochs.
    pub eval_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            schedule: LrSchedule::default(),
            batch_size: 1,
            adam: AdamConfig::default(),
            seed: 0,
            eval_interval: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        if !(s.initial > 0.0 && s.after > 0.0 && s.initial.is_finite() && s.after.is_finite()) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 || self.eval_interval == 0 {
            return Err(Error::Config("batch size and eval interval must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation AUC.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    /// Number of epochs completed when the best parameters were recorded
    /// (0 for the initialization).
    pub best_epoch: usize,
    pub best_val_auc: f64,
}

/// Fresh parameters for `data`'s task, seeded from the run seed.
pub fn init_params(model: &ModelConfig, inputs: &ModelInputs, data: &TaskDataset, seed: u64) -> Result<ModelParams> {
    let classes = data.nodes().map(|_| data.classes);
    ModelParams::init(
        model,
        inputs.feature_dim(),
        inputs.k(),
        classes,
        seed::derive(seed, seed::INIT),
    )
}

/// Pair scores σ(z_u · z_v).
pub fn score_pairs(emb: &Embeddings, pairs: &[Pair]) -> Vec<f64> {
    pairs.iter().map(|p| emb.pair_probability(p.u, p.v)).collect()
}

/// AUC of fixed embeddings on pairs.
pub fn pair_auc(emb: &Embeddings, pairs: &[Pair]) -> Result<f64> {
    let labels: Vec<bool> = pairs.iter().map(|p| p.label).collect();
    roc_auc(&score_pairs(emb, pairs), &labels)
}

/// Class probabilities for the given nodes.
pub fn class_probs(emb: &Embeddings, params: &ModelParams, nodes: &[NodeId]) -> Result<Vec<Vec<f64>>> {
    let head = params
        .head
        .as_ref()
        .ok_or_else(|| Error::invalid("model has no classification head"))?;
    nodes
        .iter()
        .map(|&v| {
            Ok(decode_node(emb.row(v), &head.w, &head.b)?
                .into_iter()
                .map(f64::exp)
                .collect())
        })
        .collect()
}

/// ROC AUC on one split: pair AUC, or macro one-vs-rest AUC for node
/// classification.
pub fn evaluate(
    inputs: &ModelInputs,
    params: &ModelParams,
    model: &ModelConfig,
    data: &TaskDataset,
    split: Split,
) -> Result<f64> {
    let emb = embed(inputs, params, model)?;
    evaluate_embeddings(&emb, params, data, split)
}

pub fn evaluate_embeddings(emb: &Embeddings, params: &ModelParams, data: &TaskDataset, split: Split) -> Result<f64> {
    match &data.units {
        Units::Pairs(p) => pair_auc(emb, p.get(split)),
        Units::Nodes(p) => {
            let units = p.get(split);
            let nodes: Vec<NodeId> = units.iter().map(|x| x.0).collect();
            let labels: Vec<usize> = units.iter().map(|x| x.1).collect();
            macro_auc(&class_probs(emb, params, &nodes)?, &labels)
        }
    }
}

/// Training units grouped by the component of their first node, in
/// component order.
fn component_batches(data: &TaskDataset) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    match &data.units {
        Units::Pairs(p) => {
            for (i, q) in p.train.iter().enumerate() {
                groups.entry(data.component[q.u]).or_default().push(i);
            }
        }
        Units::Nodes(p) => {
            for (i, x) in p.train.iter().enumerate() {
                groups.entry(data.component[x.0]).or_default().push(i);
            }
        }
    }
    groups.into_values().collect()
}

/// Full-graph forward passes with the loss restricted to each batch's
/// training units; keeps the parameters with the best validation AUC.
pub fn train(
    inputs: &ModelInputs,
    model: &ModelConfig,
    cfg: &TrainConfig,
    data: &TaskDataset,
    init: ModelParams,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    let mut params = init;
    let shapes: Vec<(usize, usize)> = params.named().iter().map(|(_, t)| t.shape()).collect();
    let mut adam = Adam::new(cfg.adam, shapes.iter().copied());
    let components = component_batches(data);
    let dropout_root = seed::derive(cfg.seed, seed::DROPOUT);
    let order_root = seed::derive(cfg.seed, "batch-order");

    let mut best_val = evaluate(inputs, &params, model, data, Split::Val)?;
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut tape = Tape::new();
    let mut step = 0u64;

    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.rate(epoch);
        let mut order: Vec<usize> = (0..components.len()).collect();
        if order.len() > 1 {
            order.shuffle(&mut seed::rng(seed::derive_indexed(order_root, "epoch", epoch as u64)));
        }
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let units: Vec<usize> = chunk.iter().flat_map(|&c| components[c].iter().copied()).collect();
            tape.clear();
            let vars = params.register(&mut tape, true);
            let dropout_seed = seed::derive_indexed(dropout_root, seed::DROPOUT, step);
            step += 1;
            let diverged = |_| Error::Divergence { epoch, loss: f64::NAN };
            let z = forward(&mut tape, inputs, &vars, model, true, dropout_seed).map_err(diverged)?;
            let loss = match &data.units {
                Units::Pairs(p) => {
                    let pairs: Vec<(NodeId, NodeId)> = units.iter().map(|&i| (p.train[i].u, p.train[i].v)).collect();
                    let labels: Vec<f64> = units.iter().map(|&i| f64::from(u8::from(p.train[i].label))).collect();
                    let probs = pair_probs(&mut tape, z, &pairs).map_err(diverged)?;
                    tape.bce(probs, &labels)
                }
                Units::Nodes(p) => {
                    let head = vars
                        .head
                        .ok_or_else(|| Error::invalid("model has no classification head"))?;
                    let lp = class_log_probs(&mut tape, z, head).map_err(diverged)?;
                    let rows: Vec<NodeId> = units.iter().map(|&i| p.train[i].0).collect();
                    let labels: Vec<usize> = units.iter().map(|&i| p.train[i].1).collect();
                    let picked = tape.gather_rows(lp, &rows)?;
                    tape.nll(picked, &labels)
                }
            }
            .map_err(diverged)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, loss: value });
            }
            tape.backward(loss)?;
            let grads: Vec<Tensor> = vars
                .all()
                .iter()
                .zip(&shapes)
                .map(|(v, &(r, c))| tape.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(r, c)))
                .collect();
            adam.step(&mut params.tensors_mut(), &grads, lr)?;
            total += value;
            batches += 1;
        }
        let loss = total / batches.max(1) as f64;
        let done = epoch + 1;
        let val_auc = if done % cfg.eval_interval == 0 || done == cfg.epochs {
            let v = evaluate(inputs, &params, model, data, Split::Val)?;
            if v > best_val {
                best_val = v;
                best_params = params.clone();
                best_epoch = done;
            }
            Some(v)
        } else {
            None
        };
        history.push(EpochRecord {
            epoch: done,
            loss,
            val_auc,
        });
    }
    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
        best_val_auc: best_val,
    })
}
