//! The anchor-message network.
//!
//! Training uses a batched formulation on the tape: with `W_M` split into
//! the halves acting on the node and on the anchor, every per-node message
//! matrix collapses into a few `n × k` and `n × d` products. The literal
//! per-node operations in [`reference`] compute the same quantities one node
//! at a time and serve as the oracle for the batched route.

pub mod reference;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::seed;
use crate::tensor::{Tape, Tensor, Var};
use crate::walks::{SimilarityKind, SimilarityMatrix};

pub use reference::{
    attention_aggregate, decode_node, decode_pair, forward_reference, mean_pool, message, message_matrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Mean,
    Attention,
    /// Mean pooling over unweighted messages (all similarities set to 1).
    Equal,
}

impl Aggregator {
    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Attention => "attention",
            Aggregator::Equal => "equal",
        }
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" | "M" => Ok(Aggregator::Mean),
            "attention" | "A" => Ok(Aggregator::Attention),
            "equal" | "M-" => Ok(Aggregator::Equal),
            _ => Err(Error::Config(format!(
                "unknown aggregator '{s}' (expected mean, attention or equal)"
            ))),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinalActivation {
    Identity,
    Sigmoid,
}

impl FromStr for FinalActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(FinalActivation::Identity),
            "sigmoid" => Ok(FinalActivation::Sigmoid),
            _ => Err(Error::Config(format!(
                "unknown final activation '{s}' (expected identity or sigmoid)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub aggregator: Aggregator,
    pub similarity: SimilarityKind,
    pub dropout: f64,
    pub final_activation: FinalActivation,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            hidden: 32,
            aggregator: Aggregator::Attention,
            similarity: SimilarityKind::Count,
            dropout: 0.5,
            final_activation: FinalActivation::Identity,
            leaky_slope: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !self.leaky_slope.is_finite() {
            return Err(Error::Config("leaky slope must be finite".into()));
        }
        Ok(())
    }
}

/// Everything the forward pass reads besides the parameters.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    features: Tensor,
    anchors: Vec<NodeId>,
    outgoing: Tensor,
    incoming: Tensor,
}

impl ModelInputs {
    pub fn new(features: Tensor, anchors: Vec<NodeId>, sim: &SimilarityMatrix) -> Result<Self> {
        let n = features.rows();
        if sim.n() != n || sim.k() != anchors.len() {
            return Err(Error::invalid(format!(
                "similarities are {}×{} but there are {n} nodes and {} anchors",
                sim.n(),
                sim.k(),
                anchors.len()
            )));
        }
        if anchors.is_empty() {
            return Err(Error::invalid("at least one anchor is required"));
        }
        if let Some(&a) = anchors.iter().find(|&&a| a >= n) {
            return Err(Error::invalid(format!("anchor {a} out of range for {n} nodes")));
        }
        if features.cols() == 0 || !features.is_finite() {
            return Err(Error::invalid("features must be non-empty and finite"));
        }
        let k = anchors.len();
        Ok(ModelInputs {
            features,
            anchors,
            outgoing: Tensor::from_vec(n, k, sim.outgoing().to_vec())?,
            incoming: Tensor::from_vec(n, k, sim.incoming().to_vec())?,
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn k(&self) -> usize {
        self.anchors.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn anchors(&self) -> &[NodeId] {
        &self.anchors
    }

    /// `n × k`, entry `(v, i)` = s(v, a_i).
    pub fn outgoing(&self) -> &Tensor {
        &self.outgoing
    }

    /// `n × k`, entry `(v, i)` = s(a_i, v).
    pub fn incoming(&self) -> &Tensor {
        &self.incoming
    }

    /// Similarities as seen by the message function: all ones under `Equal`.
    pub(crate) fn effective(&self, aggregator: Aggregator) -> (Tensor, Tensor) {
        match aggregator {
            Aggregator::Equal => {
                let ones = Tensor::filled(self.n(), self.k(), 1.0);
                (ones.clone(), ones)
            }
            _ => (self.outgoing.clone(), self.incoming.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// `2·w × d_hid`, where `w` is the input width of the layer.
    pub w_m: Tensor,
    /// `d_hid × d_hid`; attention layers below the last only.
    pub w_att: Option<Tensor>,
    /// `2·d_hid × 1`; attention layers below the last only.
    pub a_att: Option<Tensor>,
}

/// Node classification head: `k × C` weights and a `1 × C` bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassHead {
    pub w: Tensor,
    pub b: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
    /// `d_hid × 1`.
    pub w_z: Tensor,
    pub head: Option<ClassHead>,
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::from_vec(rows, cols, data).expect("shape matches data length")
}

impl ModelParams {
    /// Glorot-uniform initialization. `classes` adds a classification head
    /// over `k` embedding columns.
    pub fn init(cfg: &ModelConfig, input_dim: usize, k: usize, classes: Option<usize>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if input_dim == 0 || k == 0 {
            return Err(Error::invalid("input width and anchor count must be positive"));
        }
        let mut rng = seed::rng(seed);
        let d = cfg.hidden;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let width = if l == 0 { input_dim } else { d };
            let w_m = glorot(2 * width, d, &mut rng);
            let attends = cfg.aggregator == Aggregator::Attention && l + 1 < cfg.layers;
            let (w_att, a_att) = if attends {
                (Some(glorot(d, d, &mut rng)), Some(glorot(2 * d, 1, &mut rng)))
            } else {
                (None, None)
            };
            layers.push(LayerParams { w_m, w_att, a_att });
        }
        let w_z = glorot(d, 1, &mut rng);
        let head = match classes {
            Some(c) if c >= 1 => Some(ClassHead {
                w: glorot(k, c, &mut rng),
                b: Tensor::zeros(1, c),
            }),
            Some(_) => return Err(Error::invalid("classification head needs at least one class")),
            None => None,
        };
        Ok(ModelParams { layers, w_z, head })
    }

    /// Stable `(name, tensor)` listing used for checkpoints and the optimizer.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{}.w_m", l + 1), &layer.w_m));
            if let Some(w) = &layer.w_att {
                out.push((format!("layer{}.w_att", l + 1), w));
            }
            if let Some(a) = &layer.a_att {
                out.push((format!("layer{}.a_att", l + 1), a));
            }
        }
        out.push(("w_z".into(), &self.w_z));
        if let Some(h) = &self.head {
            out.push(("head.w".into(), &h.w));
            out.push(("head.b".into(), &h.b));
        }
        out
    }

    /// Mutable tensors in the same order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.w_m);
            if let Some(w) = &mut layer.w_att {
                out.push(w);
            }
            if let Some(a) = &mut layer.a_att {
                out.push(a);
            }
        }
        out.push(&mut self.w_z);
        if let Some(h) = &mut self.head {
            out.push(&mut h.w);
            out.push(&mut h.b);
        }
        out
    }

    pub fn to_named(&self) -> Vec<(String, Tensor)> {
        self.named().into_iter().map(|(n, t)| (n, t.clone())).collect()
    }

    /// Rebuilds parameters from a checkpoint listing, checking names and
    /// shapes against a freshly shaped template.
    pub fn from_named(template: &ModelParams, named: Vec<(String, Tensor)>) -> Result<Self> {
        let expected = template.named();
        if expected.len() != named.len() {
            return Err(Error::invalid(format!(
                "checkpoint has {} tensors, model expects {}",
                named.len(),
                expected.len()
            )));
        }
        let mut out = template.clone();
        for (slot, ((ename, et), (name, t))) in out.tensors_mut().into_iter().zip(expected.iter().zip(named)) {
            if *ename != name || et.shape() != t.shape() {
                return Err(Error::invalid(format!(
                    "checkpoint tensor {name} {:?} does not match {ename} {:?}",
                    t.shape(),
                    et.shape()
                )));
            }
            *slot = t;
        }
        Ok(out)
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    /// Places every tensor on `tape` as a trainable leaf (or as a constant
    /// when `trainable` is false).
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> ParamVars {
        let mut put = |t: &Tensor| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        let layers = self
            .layers
            .iter()
            .map(|l| LayerVars {
                w_m: put(&l.w_m),
                w_att: l.w_att.as_ref().map(&mut put),
                a_att: l.a_att.as_ref().map(&mut put),
            })
            .collect();
        let w_z = put(&self.w_z);
        let head = self.head.as_ref().map(|h| (put(&h.w), put(&h.b)));
        ParamVars { layers, w_z, head }
    }
}

#[derive(Debug, Clone)]
pub struct LayerVars {
    pub w_m: Var,
    pub w_att: Option<Var>,
    pub a_att: Option<Var>,
}

/// Tape handles for a registered [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub layers: Vec<LayerVars>,
    pub w_z: Var,
    pub head: Option<(Var, Var)>,
}

impl ParamVars {
    /// Lays out `vars`, given in [`ModelParams::named`] order, with the
    /// structure of `template`.
    pub fn from_flat(template: &ModelParams, vars: &[Var]) -> Result<Self> {
        let expected = template.named().len();
        if vars.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} handles, got {}",
                vars.len()
            )));
        }
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("length checked");
        let layers = template
            .layers
            .iter()
            .map(|l| LayerVars {
                w_m: next(),
                w_att: l.w_att.as_ref().map(|_| next()),
                a_att: l.a_att.as_ref().map(|_| next()),
            })
            .collect();
        let w_z = next();
        let head = template.head.as_ref().map(|_| (next(), next()));
        Ok(ParamVars { layers, w_z, head })
    }

    /// Handles in the same order as [`ModelParams::named`].
    pub fn all(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.w_m);
            out.extend(l.w_att);
            out.extend(l.a_att);
        }
        out.push(self.w_z);
        if let Some((w, b)) = self.head {
            out.push(w);
            out.push(b);
        }
        out
    }
}

/// Output embeddings, one row of width `k` per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub z: Tensor,
}

impl Embeddings {
    pub fn n(&self) -> usize {
        self.z.rows()
    }

    pub fn k(&self) -> usize {
        self.z.cols()
    }

    pub fn row(&self, v: NodeId) -> &[f64] {
        self.z.row_slice(v)
    }

    /// σ(z_u · z_v).
    pub fn pair_probability(&self, u: NodeId, v: NodeId) -> f64 {
        decode_pair(self.row(u), self.row(v))
    }
}

/// Batched forward pass on `tape`, returning the `n × k` embedding matrix.
///
/// Dropout is applied to every hidden representation below the last layer
/// when `train` is set; each layer draws its mask from `dropout_seed`.
pub fn forward(
    tape: &mut Tape,
    inputs: &ModelInputs,
    params: &ParamVars,
    cfg: &ModelConfig,
    train: bool,
    dropout_seed: u64,
) -> Result<Var> {
    cfg.validate()?;
    if params.layers.len() != cfg.layers {
        return Err(Error::invalid(format!(
            "parameters have {} layers, config has {}",
            params.layers.len(),
            cfg.layers
        )));
    }
    let k = inputs.k();
    let (s_out, s_in) = inputs.effective(cfg.aggregator);
    let s_out = tape.constant(s_out);
    let s_in = tape.constant(s_in);
    let mut h = tape.constant(inputs.features.clone());

    for (l, layer) in params.layers.iter().enumerate() {
        let width = tape.shape(h).1;
        let (rows, _) = tape.shape(layer.w_m);
        if rows != 2 * width {
            return Err(Error::shape(
                "forward",
                format!("layer {} expects input width {}, got {width}", l + 1, rows / 2),
            ));
        }
        let top = tape.slice_rows(layer.w_m, 0, width)?;
        let bot = tape.slice_rows(layer.w_m, width, width)?;
        // P[v] = h_v · W_top, Q_A[i] = h_{a_i} · W_bot
        let p = tape.matmul(h, top)?;
        let q = tape.matmul(h, bot)?;
        let qa = tape.gather_rows(q, &inputs.anchors)?;

        if l + 1 == cfg.layers {
            let pz = tape.matmul(p, params.w_z)?;
            let qz = tape.matmul(qa, params.w_z)?;
            let left = tape.scale_rows(s_out, pz)?;
            let right = tape.scale_cols(s_in, qz)?;
            let z = tape.add(left, right)?;
            return match cfg.final_activation {
                FinalActivation::Identity => Ok(z),
                FinalActivation::Sigmoid => tape.sigmoid(z),
            };
        }

        let next = match cfg.aggregator {
            Aggregator::Mean | Aggregator::Equal => {
                let mean_out = tape.row_mean(s_out)?;
                let own = tape.scale_rows(p, mean_out)?;
                let pooled = tape.matmul(s_in, qa)?;
                let pooled = tape.scale(pooled, 1.0 / k as f64)?;
                tape.add(own, pooled)?
            }
            Aggregator::Attention => {
                let (Some(w_att), Some(a_att)) = (layer.w_att, layer.a_att) else {
                    return Err(Error::invalid(format!("layer {} lacks attention parameters", l + 1)));
                };
                attention_batched(tape, p, qa, s_out, s_in, w_att, a_att, cfg)?
            }
        };
        let layer_seed = seed::derive_indexed(dropout_seed, seed::DROPOUT, l as u64);
        h = tape.dropout(next, cfg.dropout, train, layer_seed)?;
    }
    unreachable!("the final layer returns")
}

/// Attention over anchors for all nodes at once.
///
/// With `PA = P·W_att`, `QA = Q_A·W_att` and `a = (a1 ∥ a2)`, the score of
/// node `v` for anchor `i` is `PA[v]·a1 + s_out[v,i]·PA[v]·a2 +
/// s_in[v,i]·QA[i]·a2`, and the output is
/// `Σ_i α[v,i]·(s_out[v,i]·PA[v] + s_in[v,i]·QA[i]) + PA[v]`.
#[allow(clippy::too_many_arguments)]
fn attention_batched(
    tape: &mut Tape,
    p: Var,
    qa: Var,
    s_out: Var,
    s_in: Var,
    w_att: Var,
    a_att: Var,
    cfg: &ModelConfig,
) -> Result<Var> {
    let d = cfg.hidden;
    let (n, k) = tape.shape(s_out);
    let pa = tape.matmul(p, w_att)?;
    let qaa = tape.matmul(qa, w_att)?;
    let a1 = tape.slice_rows(a_att, 0, d)?;
    let a2 = tape.slice_rows(a_att, d, d)?;
    let pa1 = tape.matmul(pa, a1)?;
    let pa2 = tape.matmul(pa, a2)?;
    let qa2 = tape.matmul(qaa, a2)?;
    let ones = tape.constant(Tensor::filled(n, k, 1.0));
    let e_self = tape.scale_rows(ones, pa1)?;
    let e_out = tape.scale_rows(s_out, pa2)?;
    let e_in = tape.scale_cols(s_in, qa2)?;
    let e = tape.add(e_self, e_out)?;
    let e = tape.add(e, e_in)?;
    let e = tape.leaky_relu(e, cfg.leaky_slope)?;
    let alpha = tape.softmax(e)?;
    let w_out = tape.mul(alpha, s_out)?;
    let w_out = tape.row_sum(w_out)?;
    let own = tape.scale_rows(pa, w_out)?;
    let w_in = tape.mul(alpha, s_in)?;
    let pooled = tape.matmul(w_in, qaa)?;
    let out = tape.add(own, pooled)?;
    tape.add(out, pa)
}

/// Inference-mode embeddings (no dropout, no gradients).
pub fn embed(inputs: &ModelInputs, params: &ModelParams, cfg: &ModelConfig) -> Result<Embeddings> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, false);
    let z = forward(&mut tape, inputs, &vars, cfg, false, 0)?;
    Ok(Embeddings {
        z: tape.value(z).clone(),
    })
}

/// Class log-probabilities `log_softmax(Z·W + 1·b)` on the tape.
pub fn class_log_probs(tape: &mut Tape, z: Var, head: (Var, Var)) -> Result<Var> {
    let (w, b) = head;
    let n = tape.shape(z).0;
    let logits = tape.matmul(z, w)?;
    let ones = tape.constant(Tensor::filled(n, 1, 1.0));
    let bias = tape.matmul(ones, b)?;
    let logits = tape.add(logits, bias)?;
    tape.log_softmax(logits)
}

/// Pair probabilities `σ(z_u · z_v)` for each `(u, v)` as a column.
pub fn pair_probs(tape: &mut Tape, z: Var, pairs: &[(NodeId, NodeId)]) -> Result<Var> {
    let us: Vec<NodeId> = pairs.iter().map(|p| p.0).collect();
    let vs: Vec<NodeId> = pairs.iter().map(|p| p.1).collect();
    let zu = tape.gather_rows(z, &us)?;
    let zv = tape.gather_rows(z, &vs)?;
    let prod = tape.mul(zu, zv)?;
    let dot = tape.row_sum(prod)?;
    tape.sigmoid(dot)
}
