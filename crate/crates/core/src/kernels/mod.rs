//! Naive f64 reference kernels with multiply counting.
//!
//! Every kernel increments an [`OpCounter`] once per scalar multiply it
//! actually executes. These counts are the oracle for the analytical MAC
//! model in [`crate::cost`].

mod attention;
mod conv;
mod forward;
mod pool;

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, Array4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;

pub use attention::{attention_weights, feedforward, mhsa_linear, mhsa_linear_ordered, mhsa_softmax, AssociationOrder};
pub use conv::{batchnorm_eval, conv2d, fold_batchnorm};
pub use forward::{feature_map_to_tokens, forward_activations, network_forward, tokens_to_feature_map};
pub use pool::pool;

/// Feature map laid out as `(channels, height, width)`.
pub type FeatureMap = ndarray::Array3<f64>;
/// Token matrix laid out as `(tokens, dim)`.
pub type Tokens = Array2<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("window does not fit: {0}")]
    Window(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("no parameters for node {0}")]
    MissingParams(NodeId),
}

/// Multiply counts attributed to graph nodes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpCounter {
    current: Option<NodeId>,
    per_node: BTreeMap<NodeId, u64>,
    unattributed: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Attributes subsequent counts to `node`.
    pub fn enter(&mut self, node: NodeId) {
        self.current = Some(node);
        self.per_node.entry(node).or_insert(0);
    }

    pub fn add(&mut self, macs: u64) {
        match self.current {
            Some(node) => *self.per_node.entry(node).or_insert(0) += macs,
            None => self.unattributed += macs,
        }
    }

    pub fn total(&self) -> u64 {
        self.unattributed + self.per_node.values().sum::<u64>()
    }

    pub fn node(&self, node: NodeId) -> u64 {
        self.per_node.get(&node).copied().unwrap_or(0)
    }

    pub fn per_node(&self) -> &BTreeMap<NodeId, u64> {
        &self.per_node
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    /// `(out_ch, in_ch / groups, k, k)`
    pub weight: Array4<f64>,
    pub bias: Option<Array1<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub eps: f64,
}

impl BatchNormParams {
    pub fn identity(ch: usize) -> Self {
        Self {
            gamma: Array1::ones(ch),
            beta: Array1::zeros(ch),
            running_mean: Array1::zeros(ch),
            running_var: Array1::ones(ch),
            eps: 1e-5,
        }
    }
}

/// Projection weights, applied as `x · W` on `(tokens, dim)` inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MhsaParams {
    /// `(d_model, qkv_dim)`
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    /// `(qkv_dim, d_model)`
    pub w_a: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardParams {
    /// `(d_model, ff_dim)`
    pub w1: Array2<f64>,
    /// `(ff_dim, d_model)`
    pub w2: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    /// `(out_dim, in_dim)`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerParams {
    Conv(ConvParams),
    BatchNorm(BatchNormParams),
    Mhsa(MhsaParams),
    FeedForward(FeedForwardParams),
    Linear(LinearParams),
}

impl LayerParams {
    /// Number of trainable scalars. BatchNorm running statistics are buffers
    /// and do not count.
    pub fn trainable_len(&self) -> usize {
        match self {
            LayerParams::Conv(c) => c.weight.len() + c.bias.as_ref().map_or(0, |b| b.len()),
            LayerParams::BatchNorm(b) => b.gamma.len() + b.beta.len(),
            LayerParams::Mhsa(m) => m.w_q.len() + m.w_k.len() + m.w_v.len() + m.w_a.len(),
            LayerParams::FeedForward(f) => f.w1.len() + f.w2.len(),
            LayerParams::Linear(l) => l.weight.len() + l.bias.len(),
        }
    }
}

/// Materialized weights for every parameterized node of a graph.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layers: BTreeMap<NodeId, LayerParams>,
}

impl NetworkParams {
    pub fn trainable_len(&self) -> usize {
        self.layers.values().map(LayerParams::trainable_len).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("params serialize")
    }
}

fn ensure_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<(), KernelError> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(KernelError::Numeric(format!("{what} contains non-finite values")))
    }
}

/// `a · b` with one count per scalar multiply.
fn matmul(
    a: &ndarray::ArrayView2<f64>,
    b: &ndarray::ArrayView2<f64>,
    counter: &mut OpCounter,
) -> Result<Array2<f64>, KernelError> {
    let (n, k) = a.dim();
    let (k2, m) = b.dim();
    if k != k2 {
        return Err(KernelError::Shape(format!("matmul {n}x{k} by {k2}x{m}")));
    }
    let mut out = Array2::zeros((n, m));
    let mut macs = 0u64;
    for i in 0..n {
        for j in 0..m {
            let mut acc = 0.0;
            for t in 0..k {
                acc += a[[i, t]] * b[[t, j]];
                macs += 1;
            }
            out[[i, j]] = acc;
        }
    }
    counter.add(macs);
    Ok(out)
}
