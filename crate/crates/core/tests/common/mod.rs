#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use hybridnas_core::cost::count_params;
use hybridnas_core::graph::{build_graph, infer_shapes, GraphBuilder, NetworkGraph, OpKind, TensorShape};
use hybridnas_core::searchspace::{
    decode, gene_cardinalities, sample, validate, ArchitectureDescriptor, Genome, SearchSpaceConfig,
};
use rand::{Rng, SeedableRng};

pub fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn toy_space() -> SearchSpaceConfig {
    SearchSpaceConfig::from_path(configs_dir().join("toy_space.json")).expect("toy space loads")
}

/// Every distinct valid architecture of a small space, keyed by its JSON form,
/// with its parameter count. Walks the full Cartesian product of gene values.
pub fn enumerate_valid(config: &SearchSpaceConfig) -> BTreeMap<String, (ArchitectureDescriptor, u64)> {
    let cards = gene_cardinalities(config);
    let total: usize = cards.iter().product();
    assert!(total <= 2_000_000, "space too large to enumerate: {total}");
    let mut out = BTreeMap::new();
    let mut genes = vec![0usize; cards.len()];
    for _ in 0..total {
        let g = Genome(genes.clone());
        if let Ok(arch) = decode(&g, config) {
            if validate(&arch, config).valid {
                let key = serde_json::to_string(&arch).unwrap();
                out.entry(key).or_insert_with(|| {
                    let graph = build_graph(&arch, config).unwrap();
                    (arch, count_params(&graph).0)
                });
            }
        }
        for (i, &c) in cards.iter().enumerate() {
            genes[i] += 1;
            if genes[i] < c {
                break;
            }
            genes[i] = 0;
        }
    }
    out
}

pub fn synthetic_fitness(params: u64) -> f64 {
    1.0 - (params as f64 - 50_000.0).abs() / 50_000.0
}

/// Rejection-samples a valid architecture with at most `max_params` params.
pub fn sample_valid<R: Rng>(
    space: &SearchSpaceConfig,
    rng: &mut R,
    max_params: u64,
) -> (ArchitectureDescriptor, NetworkGraph) {
    loop {
        let g = sample(space, rng).unwrap();
        let arch = decode(&g, space).unwrap();
        if !validate(&arch, space).valid {
            continue;
        }
        let graph = build_graph(&arch, space).unwrap();
        if count_params(&graph).0 <= max_params {
            return (arch, graph);
        }
    }
}

pub fn max_rel_err<'a>(a: impl IntoIterator<Item = &'a f64>, reference: impl IntoIterator<Item = &'a f64>) -> f64 {
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for (x, r) in a.into_iter().zip(reference) {
        diff = diff.max((x - r).abs());
        scale = scale.max(r.abs());
    }
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Peak live bytes with every tensor in its own buffer: at each step, sum the
/// tensors produced at or before it that some node at or after it still reads,
/// plus the output being produced.
pub fn ram_by_definition(graph: &NetworkGraph, bytes_per_activation: u64) -> u64 {
    let order = graph.schedule();
    let pos: HashMap<usize, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut peak = 0;
    for step in 0..order.len() {
        let mut live = 0u64;
        for t in graph.nodes() {
            let produced = pos[&t.id] <= step;
            let needed =
                pos[&t.id] == step || graph.nodes().iter().any(|c| c.inputs.contains(&t.id) && pos[&c.id] >= step);
            if produced && needed {
                live += graph.shape(t.id).numel() as u64;
            }
        }
        peak = peak.max(live);
    }
    peak * bytes_per_activation
}

/// Allocator replay: outputs are allocated before inputs are released, and an
/// elementwise op whose input has exactly one outstanding reader (itself)
/// writes into that buffer. Buffers are freed once nothing aliasing them has
/// outstanding readers.
pub fn ram_by_allocator(graph: &NetworkGraph, inplace: bool, bytes_per_activation: u64) -> u64 {
    let mut readers: Vec<usize> = vec![0; graph.len()];
    for n in graph.nodes() {
        for &u in &n.inputs {
            readers[u] += 1;
        }
    }
    let mut buffer_of: Vec<usize> = vec![usize::MAX; graph.len()];
    // buffer -> (bytes, tensors still awaiting readers)
    let mut buffers: Vec<(u64, usize)> = Vec::new();
    let mut allocated = 0u64;
    let mut peak = 0u64;
    for &v in graph.schedule() {
        let node = graph.node(v);
        let size = graph.shape(v).numel() as u64;
        let elementwise = matches!(node.op, OpKind::BatchNorm { .. } | OpKind::Relu);
        if inplace && elementwise && readers[node.inputs[0]] == 1 {
            let b = buffer_of[node.inputs[0]];
            buffer_of[v] = b;
            buffers[b].1 += 1;
        } else {
            buffer_of[v] = buffers.len();
            buffers.push((size, 1));
            allocated += size;
        }
        peak = peak.max(allocated);
        for &u in &node.inputs {
            readers[u] -= 1;
            if readers[u] == 0 {
                let b = buffer_of[u];
                buffers[b].1 -= 1;
                if buffers[b].1 == 0 {
                    allocated -= buffers[b].0;
                }
            }
        }
        if readers[v] == 0 {
            let b = buffer_of[v];
            buffers[b].1 -= 1;
            if buffers[b].1 == 0 {
                allocated -= buffers[b].0;
            }
        }
    }
    peak * bytes_per_activation
}

fn conv(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> OpKind {
    OpKind::Conv2d { kernel, stride, padding: kernel / 2, groups: 1, in_ch, out_ch }
}

/// Hand-built graphs plus every lowered architecture of a one-block space
/// that stays within 25 nodes.
pub fn small_graph_corpus() -> Vec<NetworkGraph> {
    let mut out = Vec::new();

    let mut b = GraphBuilder::new();
    let x = b.push(OpKind::Input, &[]);
    let c = b.push(conv(3, 16, 3, 1), &[x]);
    out.push(infer_shapes(b.finish(c).unwrap(), TensorShape::new(3, 32, 32)).unwrap());

    // residual diamond with an elementwise tail
    let mut b = GraphBuilder::new();
    let x = b.push(OpKind::Input, &[]);
    let c1 = b.push(conv(4, 8, 3, 2), &[x]);
    let bn = b.push(OpKind::BatchNorm { ch: 8 }, &[c1]);
    let r = b.push(OpKind::Relu, &[bn]);
    let c2 = b.push(conv(8, 8, 3, 1), &[r]);
    let skip = b.push(conv(4, 8, 1, 2), &[x]);
    let add = b.push(OpKind::Add, &[c2, skip]);
    let r2 = b.push(OpKind::Relu, &[add]);
    out.push(infer_shapes(b.finish(r2).unwrap(), TensorShape::new(4, 16, 16)).unwrap());

    // ReLU whose input is still needed elsewhere
    let mut b = GraphBuilder::new();
    let x = b.push(OpKind::Input, &[]);
    let r = b.push(OpKind::Relu, &[x]);
    let bn = b.push(OpKind::BatchNorm { ch: 2 }, &[x]);
    let a = b.push(OpKind::Add, &[r, bn]);
    out.push(infer_shapes(b.finish(a).unwrap(), TensorShape::new(2, 5, 5)).unwrap());

    // two stacked residual blocks sharing nothing but the trunk
    let mut b = GraphBuilder::new();
    let mut cur = b.push(OpKind::Input, &[]);
    for _ in 0..2 {
        let m = b.push(conv(6, 6, 3, 1), &[cur]);
        let m = b.push(OpKind::Relu, &[m]);
        let a = b.push(OpKind::Add, &[m, cur]);
        cur = b.push(OpKind::Relu, &[a]);
    }
    out.push(infer_shapes(b.finish(cur).unwrap(), TensorShape::new(6, 8, 8)).unwrap());

    let mut space = SearchSpaceConfig::default();
    space.cnn_stage.depth = vec![1];
    space.vit_stage.depth = vec![1];
    space.input_shape = [3, 16, 16];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..4000 {
        let g = sample(&space, &mut rng).unwrap();
        let Ok(arch) = decode(&g, &space) else { continue };
        if !validate(&arch, &space).valid {
            continue;
        }
        let graph = build_graph(&arch, &space).unwrap();
        if graph.len() <= 25 && seen.insert(graph.to_json()) {
            out.push(graph);
        }
    }
    out
}
