//! Per-node forms of the network, written directly from the message and
//! aggregation definitions. Slow, untracked, and used to cross-check the
//! batched tape route.

use super::{Aggregator, FinalActivation, ModelConfig, ModelInputs, ModelParams};
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::tensor::{sigmoid, Tensor, PROB_CLAMP};

/// `(s_va · h_v) ∥ (s_av · h_a)`.
pub fn message(h_v: &[f64], h_a: &[f64], s_va: f64, s_av: f64) -> Result<Vec<f64>> {
    if h_v.len() != h_a.len() {
        return Err(Error::shape(
            "message",
            format!("widths {} and {}", h_v.len(), h_a.len()),
        ));
    }
    Ok(h_v
        .iter()
        .map(|x| s_va * x)
        .chain(h_a.iter().map(|x| s_av * x))
        .collect())
}

/// Messages from `v` to every anchor stacked as rows, times `w_m`.
/// `s_out` and `s_in` are the `n × k` similarity tensors.
pub fn message_matrix(
    v: NodeId,
    anchors: &[NodeId],
    h: &Tensor,
    s_out: &Tensor,
    s_in: &Tensor,
    w_m: &Tensor,
) -> Result<Tensor> {
    let mut rows = Vec::with_capacity(anchors.len() * 2 * h.cols());
    for (i, &a) in anchors.iter().enumerate() {
        rows.extend(message(
            h.row_slice(v),
            h.row_slice(a),
            s_out.get(v, i),
            s_in.get(v, i),
        )?);
    }
    Tensor::from_vec(anchors.len(), 2 * h.cols(), rows)?.matmul(w_m)
}

/// Column mean of the message matrix.
pub fn mean_pool(m: &Tensor) -> Vec<f64> {
    let k = m.rows() as f64;
    (0..m.cols())
        .map(|c| (0..m.rows()).map(|r| m.get(r, c)).sum::<f64>() / k)
        .collect()
}

fn vec_mat(x: &[f64], w: &Tensor) -> Result<Vec<f64>> {
    Ok(Tensor::row(x).matmul(w)?.into_data())
}

/// Attention over the rows of `m` with query vector `query` (width
/// `d_hid`). Returns the aggregated vector and the coefficients α.
pub fn attention_aggregate(
    query: &[f64],
    m: &Tensor,
    w_att: &Tensor,
    a_att: &Tensor,
    slope: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = w_att.cols();
    if a_att.shape() != (2 * d, 1) {
        return Err(Error::shape(
            "attention_aggregate",
            format!("attention vector {:?} for width {d}", a_att.shape()),
        ));
    }
    let qw = vec_mat(query, w_att)?;
    let mut projected = Vec::with_capacity(m.rows());
    let mut scores = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let mw = vec_mat(m.row_slice(r), w_att)?;
        let e: f64 = qw.iter().chain(&mw).zip(a_att.data()).map(|(x, a)| x * a).sum();
        scores.push(if e > 0.0 { e } else { slope * e });
        projected.push(mw);
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    let alpha: Vec<f64> = exp.iter().map(|e| e / total).collect();
    let mut out = qw;
    for (a, row) in alpha.iter().zip(&projected) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += a * x;
        }
    }
    Ok((out, alpha))
}

/// σ(z_u · z_v).
pub fn decode_pair(z_u: &[f64], z_v: &[f64]) -> f64 {
    sigmoid(z_u.iter().zip(z_v).map(|(a, b)| a * b).sum())
}

/// `log_softmax(z · w + b)` over the classes.
pub fn decode_node(z: &[f64], w: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    let logits = vec_mat(z, w)?;
    if b.len() != logits.len() {
        return Err(Error::shape("decode_node", format!("bias {:?}", b.shape())));
    }
    let logits: Vec<f64> = logits.iter().zip(b.data()).map(|(x, y)| x + y).collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|x| x - lse).collect())
}

/// Mean binary cross-entropy with probabilities clamped away from 0 and 1.
pub fn bce_loss(probs: &[f64], labels: &[f64]) -> f64 {
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / probs.len() as f64
}

/// Mean negative log-likelihood of the labelled class.
pub fn nll_loss(logprobs: &[Vec<f64>], labels: &[usize]) -> f64 {
    -logprobs.iter().zip(labels).map(|(lp, &y)| lp[y]).sum::<f64>() / labels.len() as f64
}

/// Inference-mode forward pass computed one node at a time.
pub fn forward_reference(inputs: &ModelInputs, params: &ModelParams, cfg: &ModelConfig) -> Result<Tensor> {
    cfg.validate()?;
    let (s_out, s_in) = inputs.effective(cfg.aggregator);
    let anchors = inputs.anchors();
    let (n, k) = (inputs.n(), inputs.k());
    let mut h = inputs.features().clone();
    for (l, layer) in params.layers.iter().enumerate() {
        let width = h.cols();
        let last = l + 1 == cfg.layers;
        let w_top = Tensor::from_vec(width, cfg.hidden, layer.w_m.data()[..width * cfg.hidden].to_vec())?;
        let out_cols = if last { k } else { cfg.hidden };
        let mut next = Tensor::zeros(n, out_cols);
        for v in 0..n {
            let m = message_matrix(v, anchors, &h, &s_out, &s_in, &layer.w_m)?;
            let row = if last {
                let z = m.matmul(&params.w_z)?.into_data();
                match cfg.final_activation {
                    FinalActivation::Identity => z,
                    FinalActivation::Sigmoid => z.into_iter().map(sigmoid).collect(),
                }
            } else {
                match cfg.aggregator {
                    Aggregator::Mean | Aggregator::Equal => mean_pool(&m),
                    Aggregator::Attention => {
                        let (Some(w_att), Some(a_att)) = (&layer.w_att, &layer.a_att) else {
                            return Err(Error::invalid("missing attention parameters"));
                        };
                        let query = vec_mat(h.row_slice(v), &w_top)?;
                        attention_aggregate(&query, &m, w_att, a_att, cfg.leaky_slope)?.0
                    }
                }
            };
            for (c, x) in row.into_iter().enumerate() {
                next.set(v, c, x);
            }
        }
        h = next;
    }
    Ok(h)
}
