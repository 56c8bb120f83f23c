//! Analytical cost model: parameters, MACs, ROM, peak activation RAM and a
//! latency proxy.
//!
//! MAC formulas are the same contracts the reference kernels count, so the two
//! agree exactly on every graph.

mod ram;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NetworkGraph, NodeId, OpKind};
use crate::searchspace::AttnKind;

pub use ram::{estimate_ram, live_bytes_per_step};

#[derive(Debug, Error)]
pub enum CostError {
    #[error("graph shapes are not inferred")]
    ShapesMissing,
    #[error("invalid deployment assumptions: {0}")]
    Assumptions(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-op-kind multipliers for [`latency_proxy`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyCoefficients {
    pub conv: f64,
    pub linear: f64,
    pub feed_forward: f64,
    pub mhsa_softmax: f64,
    pub mhsa_linear: f64,
    /// Per byte of input plus output activations.
    pub memory: f64,
}

impl Default for LatencyCoefficients {
    fn default() -> Self {
        Self { conv: 1.0, linear: 1.0, feed_forward: 1.0, mhsa_softmax: 1.3, mhsa_linear: 1.0, memory: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentAssumptions {
    pub bytes_per_weight: u64,
    pub bytes_per_activation: u64,
    pub code_overhead_bytes: u64,
    /// BatchNorm and ReLU overwrite their input when they are its last consumer.
    pub inplace_elementwise: bool,
    pub latency: LatencyCoefficients,
}

impl Default for DeploymentAssumptions {
    fn default() -> Self {
        Self {
            bytes_per_weight: 1,
            bytes_per_activation: 1,
            code_overhead_bytes: 120_000,
            inplace_elementwise: true,
            latency: LatencyCoefficients::default(),
        }
    }
}

impl DeploymentAssumptions {
    pub fn check(&self) -> Result<(), CostError> {
        if self.bytes_per_weight == 0 || self.bytes_per_activation == 0 || self.code_overhead_bytes == 0 {
            return Err(CostError::Assumptions("byte sizes must be positive".into()));
        }
        let l = &self.latency;
        let coeffs = [l.conv, l.linear, l.feed_forward, l.mhsa_softmax, l.mhsa_linear, l.memory];
        if coeffs.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(CostError::Assumptions("latency coefficients must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, CostError> {
        let a: Self = serde_json::from_str(text)?;
        a.check()?;
        Ok(a)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, CostError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeCost {
    pub id: NodeId,
    pub op_kind: String,
    pub params: u64,
    pub macs: u64,
    pub latency: f64,
    /// Live activation bytes while this node executes.
    pub live_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub params: u64,
    pub macs: u64,
    pub rom_bytes: u64,
    pub ram_bytes: u64,
    pub latency_proxy: f64,
    pub per_node: Vec<NodeCost>,
}

impl CostReport {
    pub const CSV_HEADER: [&'static str; 5] = ["params", "macs", "rom", "ram", "latency_proxy"];

    pub fn csv_record(&self) -> [String; 5] {
        [
            self.params.to_string(),
            self.macs.to_string(),
            self.rom_bytes.to_string(),
            self.ram_bytes.to_string(),
            format!("{}", self.latency_proxy),
        ]
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Weight count of a single node.
pub fn node_params(op: &OpKind) -> u64 {
    let p = match *op {
        OpKind::Conv2d { kernel, groups, in_ch, out_ch, .. } => out_ch * (in_ch / groups) * kernel * kernel,
        OpKind::BatchNorm { ch } => 2 * ch,
        OpKind::Mhsa { d_model, qkv_dim, .. } => 4 * d_model * qkv_dim,
        OpKind::FeedForward { d_model, ff_dim } => 2 * d_model * ff_dim,
        OpKind::Linear { in_dim, out_dim } => in_dim * out_dim + out_dim,
        _ => 0,
    };
    p as u64
}

/// Multiply count of a single node; needs inferred shapes.
pub fn node_macs(graph: &NetworkGraph, id: NodeId) -> u64 {
    let node = graph.node(id);
    let out = graph.shape(id);
    let m = match node.op {
        OpKind::Conv2d { kernel, groups, in_ch, .. } => out.numel() * (in_ch / groups) * kernel * kernel,
        OpKind::Mhsa { heads, d_model, qkv_dim, attn_kind } => {
            let n = out.tokens();
            let projections = 3 * n * d_model * qkv_dim + n * qkv_dim * d_model;
            let mixing = match attn_kind {
                AttnKind::Softmax => 2 * n * n * qkv_dim,
                AttnKind::Linear => 2 * n * (qkv_dim / heads) * qkv_dim,
            };
            projections + mixing
        }
        OpKind::FeedForward { d_model, ff_dim } => 2 * out.tokens() * d_model * ff_dim,
        OpKind::Linear { in_dim, out_dim } => in_dim * out_dim,
        _ => 0,
    };
    m as u64
}

pub fn count_params(graph: &NetworkGraph) -> (u64, Vec<u64>) {
    let per: Vec<u64> = graph.nodes().iter().map(|n| node_params(&n.op)).collect();
    (per.iter().sum(), per)
}

pub fn count_macs(graph: &NetworkGraph) -> (u64, Vec<u64>) {
    let per: Vec<u64> = (0..graph.len()).map(|id| node_macs(graph, id)).collect();
    (per.iter().sum(), per)
}

pub fn estimate_rom(params: u64, assumptions: &DeploymentAssumptions) -> u64 {
    params * assumptions.bytes_per_weight + assumptions.code_overhead_bytes
}

fn node_latency(graph: &NetworkGraph, id: NodeId, macs: u64, a: &DeploymentAssumptions) -> f64 {
    let node = graph.node(id);
    if node.op == OpKind::Input {
        return 0.0;
    }
    let c = &a.latency;
    let coeff = match node.op {
        OpKind::Conv2d { .. } => c.conv,
        OpKind::Linear { .. } => c.linear,
        OpKind::FeedForward { .. } => c.feed_forward,
        OpKind::Mhsa { attn_kind: AttnKind::Softmax, .. } => c.mhsa_softmax,
        OpKind::Mhsa { attn_kind: AttnKind::Linear, .. } => c.mhsa_linear,
        _ => 0.0,
    };
    let elems: usize = node.inputs.iter().map(|&u| graph.shape(u).numel()).sum::<usize>() + graph.shape(id).numel();
    coeff * macs as f64 + c.memory * (elems as u64 * a.bytes_per_activation) as f64
}

/// `Σ coeff(op)·macs + memory·(input + output bytes)` over executed nodes.
/// The graph input is data, not an operation, and contributes nothing.
pub fn latency_proxy(graph: &NetworkGraph, assumptions: &DeploymentAssumptions) -> f64 {
    let (_, macs) = count_macs(graph);
    (0..graph.len()).map(|id| node_latency(graph, id, macs[id], assumptions)).sum()
}

/// Full report for a shape-inferred graph.
pub fn estimate(graph: &NetworkGraph, assumptions: &DeploymentAssumptions) -> Result<CostReport, CostError> {
    if !graph.shapes_inferred() {
        return Err(CostError::ShapesMissing);
    }
    assumptions.check()?;
    let (params, node_params) = count_params(graph);
    let (macs, node_macs) = count_macs(graph);
    let live = live_bytes_per_step(graph, assumptions);
    let per_node: Vec<NodeCost> = graph
        .nodes()
        .iter()
        .map(|n| NodeCost {
            id: n.id,
            op_kind: n.op.name().to_string(),
            params: node_params[n.id],
            macs: node_macs[n.id],
            latency: node_latency(graph, n.id, node_macs[n.id], assumptions),
            live_bytes: live[n.id],
        })
        .collect();
    Ok(CostReport {
        params,
        macs,
        rom_bytes: estimate_rom(params, assumptions),
        ram_bytes: live.iter().copied().max().unwrap_or(0),
        latency_proxy: per_node.iter().map(|n| n.latency).sum(),
        per_node,
    })
}
