use ndarray::{Array, Array1, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    batchnorm_eval, conv2d, feedforward, mhsa_linear, mhsa_softmax, pool, BatchNormParams, ConvParams, FeatureMap,
    FeedForwardParams, KernelError, LayerParams, LinearParams, MhsaParams, NetworkParams, OpCounter, Tokens,
};
use crate::graph::{NetworkGraph, OpKind};
use crate::searchspace::{AttnKind, PoolKind};

const INIT_RANGE: f64 = 0.1;

/// `(C, H, W)` to `(H*W, C)`; token `n` is pixel `(n / W, n % W)`.
pub fn feature_map_to_tokens(fm: &FeatureMap) -> Tokens {
    let (c, h, w) = fm.dim();
    Array2::from_shape_fn((h * w, c), |(n, ch)| fm[[ch, n / w, n % w]])
}

pub fn tokens_to_feature_map(tokens: &Tokens, height: usize, width: usize) -> Result<FeatureMap, KernelError> {
    let (n, c) = tokens.dim();
    if n != height * width {
        return Err(KernelError::Shape(format!("{n} tokens for a {height}x{width} map")));
    }
    Ok(Array3::from_shape_fn((c, height, width), |(ch, y, x)| tokens[[y * width + x, ch]]))
}

impl NetworkParams {
    /// Uniform `[-0.1, 0.1]` weights from a seeded ChaCha8 stream, visited in
    /// node-id order. BatchNorm starts at the identity transform.
    pub fn init(graph: &NetworkGraph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |shape: &[usize]| -> ndarray::ArrayD<f64> {
            Array::from_shape_fn(shape, |_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
        };
        let mut params = NetworkParams::default();
        for node in graph.nodes() {
            let layer = match node.op {
                OpKind::Conv2d { kernel, groups, in_ch, out_ch, .. } => LayerParams::Conv(ConvParams {
                    weight: into4(draw(&[out_ch, in_ch / groups, kernel, kernel])),
                    bias: None,
                }),
                OpKind::BatchNorm { ch } => LayerParams::BatchNorm(BatchNormParams::identity(ch)),
                OpKind::Mhsa { d_model, qkv_dim, .. } => LayerParams::Mhsa(MhsaParams {
                    w_q: into2(draw(&[d_model, qkv_dim])),
                    w_k: into2(draw(&[d_model, qkv_dim])),
                    w_v: into2(draw(&[d_model, qkv_dim])),
                    w_a: into2(draw(&[qkv_dim, d_model])),
                }),
                OpKind::FeedForward { d_model, ff_dim } => LayerParams::FeedForward(FeedForwardParams {
                    w1: into2(draw(&[d_model, ff_dim])),
                    w2: into2(draw(&[ff_dim, d_model])),
                }),
                OpKind::Linear { in_dim, out_dim } => LayerParams::Linear(LinearParams {
                    weight: into2(draw(&[out_dim, in_dim])),
                    bias: draw(&[out_dim]).into_dimensionality().expect("1-d"),
                }),
                _ => continue,
            };
            params.layers.insert(node.id, layer);
        }
        params
    }
}

fn into2(a: ndarray::ArrayD<f64>) -> Array2<f64> {
    a.into_dimensionality().expect("2-d")
}

fn into4(a: ndarray::ArrayD<f64>) -> ndarray::Array4<f64> {
    a.into_dimensionality().expect("4-d")
}

/// Runs every node in schedule order and returns all activations, indexed by
/// node id. Vector outputs (`Linear`) are stored as `(dim, 1, 1)`.
pub fn forward_activations(
    graph: &NetworkGraph,
    params: &NetworkParams,
    input: &FeatureMap,
    counter: &mut OpCounter,
) -> Result<Vec<FeatureMap>, KernelError> {
    if let Some(shape) = graph.input_shape() {
        if input.dim() != (shape.channels, shape.height, shape.width) {
            return Err(KernelError::Shape(format!("input is {:?}, graph expects {shape}", input.dim())));
        }
    }
    let mut values: Vec<Option<FeatureMap>> = vec![None; graph.len()];
    for &id in graph.schedule() {
        let node = graph.node(id);
        counter.enter(id);
        let arg = |i: usize| values[node.inputs[i]].as_ref().expect("scheduled after producers");
        let layer = || params.layers.get(&id).ok_or(KernelError::MissingParams(id));
        let out = match node.op {
            OpKind::Input => input.clone(),
            OpKind::Conv2d { stride, padding, groups, .. } => match layer()? {
                LayerParams::Conv(p) => conv2d(arg(0), p, stride, padding, groups, counter)?,
                _ => return Err(KernelError::MissingParams(id)),
            },
            OpKind::BatchNorm { .. } => match layer()? {
                LayerParams::BatchNorm(p) => batchnorm_eval(arg(0), p)?,
                _ => return Err(KernelError::MissingParams(id)),
            },
            OpKind::Relu => arg(0).mapv(|v| v.max(0.0)),
            OpKind::MaxPool { kernel, stride } => pool(arg(0), PoolKind::Max, kernel, stride)?,
            OpKind::AvgPool { kernel, stride } => pool(arg(0), PoolKind::Avg, kernel, stride)?,
            OpKind::CombinedPool { kernel, stride } => pool(arg(0), PoolKind::Combined, kernel, stride)?,
            OpKind::Add => {
                let (a, b) = (arg(0), arg(1));
                if a.dim() != b.dim() {
                    return Err(KernelError::Shape(format!("add {:?} + {:?}", a.dim(), b.dim())));
                }
                a + b
            }
            OpKind::Mhsa { heads, attn_kind, .. } => {
                let p = match layer()? {
                    LayerParams::Mhsa(p) => p,
                    _ => return Err(KernelError::MissingParams(id)),
                };
                let x = arg(0);
                let tokens = feature_map_to_tokens(x);
                let y = match attn_kind {
                    AttnKind::Softmax => mhsa_softmax(&tokens, p, heads, counter)?,
                    AttnKind::Linear => mhsa_linear(&tokens, p, heads, counter)?,
                };
                tokens_to_feature_map(&y, x.dim().1, x.dim().2)?
            }
            OpKind::FeedForward { .. } => {
                let p = match layer()? {
                    LayerParams::FeedForward(p) => p,
                    _ => return Err(KernelError::MissingParams(id)),
                };
                let x = arg(0);
                let y = feedforward(&feature_map_to_tokens(x), p, counter)?;
                tokens_to_feature_map(&y, x.dim().1, x.dim().2)?
            }
            OpKind::GlobalAvgPool => {
                let x = arg(0);
                let (c, h, w) = x.dim();
                Array3::from_shape_fn((c, 1, 1), |(ch, _, _)| x.index_axis(ndarray::Axis(0), ch).sum() / (h * w) as f64)
            }
            OpKind::Linear { in_dim, out_dim } => {
                let p = match layer()? {
                    LayerParams::Linear(p) => p,
                    _ => return Err(KernelError::MissingParams(id)),
                };
                let x = arg(0);
                if x.len() != in_dim || p.weight.dim() != (out_dim, in_dim) {
                    return Err(KernelError::Shape(format!("linear {in_dim}->{out_dim} on {} values", x.len())));
                }
                let flat: Vec<f64> = x.iter().copied().collect();
                let mut y = Array3::zeros((out_dim, 1, 1));
                let mut macs = 0u64;
                for o in 0..out_dim {
                    let mut acc = 0.0;
                    for (i, v) in flat.iter().enumerate() {
                        acc += p.weight[[o, i]] * v;
                        macs += 1;
                    }
                    y[[o, 0, 0]] = acc + p.bias[o];
                }
                counter.add(macs);
                y
            }
        };
        values[id] = Some(out);
    }
    Ok(values.into_iter().map(|v| v.expect("every node runs")).collect())
}

/// Forward pass returning the flattened output of the sink node.
pub fn network_forward(
    graph: &NetworkGraph,
    params: &NetworkParams,
    input: &FeatureMap,
    counter: &mut OpCounter,
) -> Result<Array1<f64>, KernelError> {
    let mut acts = forward_activations(graph, params, input, counter)?;
    let out = acts.swap_remove(graph.output());
    Ok(out.iter().copied().collect())
}
