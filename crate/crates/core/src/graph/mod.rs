//! Layer-level DAG lowered from an [`ArchitectureDescriptor`](crate::searchspace::ArchitectureDescriptor).
//!
//! Nodes are stored in id order. Shapes are `None` until [`infer_shapes`]
//! runs. The JSON form (`nodes` with `op_kind`, `params`, `inputs`, `shape`)
//! is the exchange format with external evaluators.

mod lower;
mod shape;

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::searchspace::AttnKind;

pub use lower::{build_graph, lower, BOTTLENECK_REDUCTION, INVERTED_EXPANSION};
pub use shape::{conv_out_dim, infer_shapes, pool_out_dim};

pub type NodeId = usize;

/// `(channels, height, width)`; batch is implicitly 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[usize; 3]", from = "[usize; 3]")]
pub struct TensorShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl TensorShape {
    pub const fn new(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width }
    }

    pub fn numel(&self) -> usize {
        self.channels * self.height * self.width
    }

    /// Token count when the feature map is viewed as a sequence.
    pub fn tokens(&self) -> usize {
        self.height * self.width
    }
}

impl From<TensorShape> for [usize; 3] {
    fn from(s: TensorShape) -> Self {
        [s.channels, s.height, s.width]
    }
}

impl From<[usize; 3]> for TensorShape {
    fn from([c, h, w]: [usize; 3]) -> Self {
        Self::new(c, h, w)
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op_kind", content = "params")]
pub enum OpKind {
    Input,
    Conv2d {
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        in_ch: usize,
        out_ch: usize,
    },
    BatchNorm {
        ch: usize,
    },
    #[serde(rename = "ReLU")]
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
    },
    AvgPool {
        kernel: usize,
        stride: usize,
    },
    CombinedPool {
        kernel: usize,
        stride: usize,
    },
    Add,
    #[serde(rename = "MHSA")]
    Mhsa {
        heads: usize,
        d_model: usize,
        qkv_dim: usize,
        attn_kind: AttnKind,
    },
    FeedForward {
        d_model: usize,
        ff_dim: usize,
    },
    GlobalAvgPool,
    Linear {
        in_dim: usize,
        out_dim: usize,
    },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Input => "Input",
            OpKind::Conv2d { .. } => "Conv2d",
            OpKind::BatchNorm { .. } => "BatchNorm",
            OpKind::Relu => "ReLU",
            OpKind::MaxPool { .. } => "MaxPool",
            OpKind::AvgPool { .. } => "AvgPool",
            OpKind::CombinedPool { .. } => "CombinedPool",
            OpKind::Add => "Add",
            OpKind::Mhsa { .. } => "MHSA",
            OpKind::FeedForward { .. } => "FeedForward",
            OpKind::GlobalAvgPool => "GlobalAvgPool",
            OpKind::Linear { .. } => "Linear",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            OpKind::Input => 0,
            OpKind::Add => 2,
            _ => 1,
        }
    }

    /// Elementwise ops that a deployed runtime can execute in place.
    pub fn is_elementwise_inplace(&self) -> bool {
        matches!(self, OpKind::BatchNorm { .. } | OpKind::Relu)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerNode {
    pub id: NodeId,
    #[serde(flatten)]
    pub op: OpKind,
    pub inputs: Vec<NodeId>,
    #[serde(default)]
    pub shape: Option<TensorShape>,
    /// Index of the descriptor block this node was lowered from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node {node} ({op}): spatial dims underflow: {detail}")]
    ShapeUnderflow { node: NodeId, op: &'static str, detail: String, block: Option<usize> },
    #[error("node {node} ({op}): {detail}")]
    ShapeMismatch { node: NodeId, op: &'static str, detail: String, block: Option<usize> },
    #[error("graph structure: {0}")]
    Structure(String),
    #[error("graph contains a cycle")]
    Cycle,
}

impl GraphError {
    pub fn block(&self) -> Option<usize> {
        match self {
            GraphError::ShapeUnderflow { block, .. } | GraphError::ShapeMismatch { block, .. } => *block,
            _ => None,
        }
    }
}

#[derive(Deserialize)]
struct RawGraph {
    nodes: Vec<LayerNode>,
    input: NodeId,
    output: NodeId,
}

/// Acyclic single-source single-sink network graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct NetworkGraph {
    nodes: Vec<LayerNode>,
    input: NodeId,
    output: NodeId,
    #[serde(skip)]
    schedule: Vec<NodeId>,
}

impl TryFrom<RawGraph> for NetworkGraph {
    type Error = GraphError;

    fn try_from(raw: RawGraph) -> Result<Self, GraphError> {
        NetworkGraph::from_nodes(raw.nodes, raw.input, raw.output)
    }
}

impl NetworkGraph {
    /// Builds a graph and checks its structural invariants.
    pub fn from_nodes(nodes: Vec<LayerNode>, input: NodeId, output: NodeId) -> Result<Self, GraphError> {
        let n = nodes.len();
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(GraphError::Structure(format!("node at position {i} has id {}", node.id)));
            }
            if node.inputs.len() != node.op.arity() {
                return Err(GraphError::Structure(format!(
                    "node {i} ({}) has {} inputs, expected {}",
                    node.op.name(),
                    node.inputs.len(),
                    node.op.arity()
                )));
            }
            if let Some(bad) = node.inputs.iter().find(|&&u| u >= n) {
                return Err(GraphError::Structure(format!("node {i} references missing node {bad}")));
            }
        }
        if input >= n || output >= n {
            return Err(GraphError::Structure("input/output id out of range".into()));
        }
        let sources: Vec<_> = nodes.iter().filter(|x| x.inputs.is_empty()).map(|x| x.id).collect();
        if sources != [input] || nodes[input].op != OpKind::Input {
            return Err(GraphError::Structure(format!("expected exactly one Input source, found {sources:?}")));
        }
        let mut consumed = vec![false; n];
        for node in &nodes {
            for &u in &node.inputs {
                consumed[u] = true;
            }
        }
        let sinks: Vec<_> = (0..n).filter(|&i| !consumed[i]).collect();
        if sinks != [output] {
            return Err(GraphError::Structure(format!("expected exactly one sink {output}, found {sinks:?}")));
        }
        let schedule = schedule_of(&nodes)?;
        Ok(Self { nodes, input, output, schedule })
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &LayerNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&self) -> NodeId {
        self.input
    }

    pub fn output(&self) -> NodeId {
        self.output
    }

    /// Cached deterministic topological order.
    pub fn schedule(&self) -> &[NodeId] {
        &self.schedule
    }

    /// Output shape of a node; panics if shapes were not inferred.
    pub fn shape(&self, id: NodeId) -> TensorShape {
        self.nodes[id].shape.unwrap_or_else(|| panic!("shape of node {id} not inferred"))
    }

    pub fn shapes_inferred(&self) -> bool {
        self.nodes.iter().all(|n| n.shape.is_some())
    }

    pub fn input_shape(&self) -> Option<TensorShape> {
        self.nodes[self.input].shape
    }

    /// Consumers of each node, in ascending id order.
    pub fn consumers(&self) -> Vec<Vec<NodeId>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for node in &self.nodes {
            for &u in &node.inputs {
                out[u].push(node.id);
            }
        }
        out
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut [LayerNode] {
        &mut self.nodes
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn from_path(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Kahn's algorithm; ready nodes are taken in ascending id order.
fn schedule_of(nodes: &[LayerNode]) -> Result<Vec<NodeId>, GraphError> {
    let n = nodes.len();
    let mut indegree: Vec<usize> = nodes.iter().map(|x| x.inputs.len()).collect();
    let mut consumers = vec![Vec::new(); n];
    for node in nodes {
        for &u in &node.inputs {
            consumers[u].push(node.id);
        }
    }
    let mut ready: BinaryHeap<Reverse<NodeId>> = (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &c in &consumers[v] {
            // Add may list the same producer twice
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() != n {
        return Err(GraphError::Cycle);
    }
    Ok(order)
}

/// Deterministic topological order of a graph, recomputed from scratch.
pub fn topological_schedule(graph: &NetworkGraph) -> Result<Vec<NodeId>, GraphError> {
    schedule_of(graph.nodes())
}

/// Incremental graph construction.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<LayerNode>,
    block: Option<usize>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tags subsequently pushed nodes with a descriptor block index.
    pub fn set_block(&mut self, block: Option<usize>) {
        self.block = block;
    }

    pub fn push(&mut self, op: OpKind, inputs: &[NodeId]) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(LayerNode { id, op, inputs: inputs.to_vec(), shape: None, block: self.block });
        id
    }

    pub fn finish(self, output: NodeId) -> Result<NetworkGraph, GraphError> {
        let input = self
            .nodes
            .iter()
            .find(|n| n.op == OpKind::Input)
            .map(|n| n.id)
            .ok_or_else(|| GraphError::Structure("no Input node".into()))?;
        NetworkGraph::from_nodes(self.nodes, input, output)
    }
}
