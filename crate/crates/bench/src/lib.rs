//! Seeded fixtures shared by the benchmarks.

use hybridnas_core::graph::{build_graph, NetworkGraph};
use hybridnas_core::kernels::{ConvParams, FeatureMap, MhsaParams, Tokens};
use hybridnas_core::searchspace::{decode, sample, validate, SearchSpaceConfig};
use ndarray::{Array, Array2, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn feature_map(rng: &mut ChaCha8Rng, channels: usize, height: usize, width: usize) -> FeatureMap {
    Array::from_shape_fn((channels, height, width), |_| rng.gen_range(-1.0..1.0))
}

pub fn tokens(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tokens {
    matrix(rng, n, d)
}

fn matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

pub fn conv_params(rng: &mut ChaCha8Rng, in_ch: usize, out_ch: usize, kernel: usize, groups: usize) -> ConvParams {
    ConvParams {
        weight: Array4::from_shape_fn((out_ch, in_ch / groups, kernel, kernel), |_| rng.gen_range(-0.1..0.1)),
        bias: None,
    }
}

pub fn mhsa_params(rng: &mut ChaCha8Rng, d: usize, q: usize) -> MhsaParams {
    MhsaParams { w_q: matrix(rng, d, q), w_k: matrix(rng, d, q), w_v: matrix(rng, d, q), w_a: matrix(rng, q, d) }
}

/// `count` valid, shape-inferred graphs from `space` within its param budget.
pub fn sampled_graphs(space: &SearchSpaceConfig, count: usize, seed: u64) -> Vec<NetworkGraph> {
    let mut rng = rng(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let genome = sample(space, &mut rng).expect("space samples");
        let Ok(arch) = decode(&genome, space) else { continue };
        if !validate(&arch, space).valid {
            continue;
        }
        let graph = build_graph(&arch, space).expect("valid architectures lower");
        if hybridnas_core::cost::count_params(&graph).0 <= space.max_params {
            out.push(graph);
        }
    }
    out
}
