use crate::graph::NetworkGraph;

use super::DeploymentAssumptions;

/// Live activation bytes at each step of the schedule, indexed by the node
/// executing at that step.
///
/// A tensor is live from its producer's step through its last consumer's step.
/// With in-place elementwise ops enabled, BatchNorm/ReLU outputs reuse their
/// input's buffer when they are its last consumer.
pub fn live_bytes_per_step(graph: &NetworkGraph, assumptions: &DeploymentAssumptions) -> Vec<u64> {
    let order = graph.schedule();
    let n = graph.len();
    let mut pos = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    let mut last_use: Vec<usize> = (0..n).map(|v| pos[v]).collect();
    for node in graph.nodes() {
        for &u in &node.inputs {
            last_use[u] = last_use[u].max(pos[node.id]);
        }
    }

    // buffers as (first step, last step, elements)
    let mut buffers: Vec<(usize, usize, usize)> = Vec::new();
    let mut buffer_of = vec![usize::MAX; n];
    for &v in order {
        let node = graph.node(v);
        let aliased =
            assumptions.inplace_elementwise && node.op.is_elementwise_inplace() && last_use[node.inputs[0]] == pos[v];
        if aliased {
            let b = buffer_of[node.inputs[0]];
            buffers[b].1 = buffers[b].1.max(last_use[v]);
            buffer_of[v] = b;
        } else {
            buffer_of[v] = buffers.len();
            buffers.push((pos[v], last_use[v], graph.shape(v).numel()));
        }
    }

    let mut per_step = vec![0u64; n];
    for &(start, end, elems) in &buffers {
        for slot in &mut per_step[start..=end] {
            *slot += elems as u64;
        }
    }
    let mut out = vec![0u64; n];
    for (i, &v) in order.iter().enumerate() {
        out[v] = per_step[i] * assumptions.bytes_per_activation;
    }
    out
}

/// Peak live activation bytes over the schedule. Weights are not counted.
pub fn estimate_ram(graph: &NetworkGraph, assumptions: &DeploymentAssumptions) -> u64 {
    live_bytes_per_step(graph, assumptions).into_iter().max().unwrap_or(0)
}
