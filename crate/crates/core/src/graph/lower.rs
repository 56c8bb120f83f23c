use crate::searchspace::{
    ArchitectureDescriptor, BlockSpec, CnnBlockKind, CnnBlockSpec, PoolKind, PoolingBlockSpec, SearchSpaceConfig,
    VitPrefix,
};

use super::{infer_shapes, GraphBuilder, GraphError, NetworkGraph, NodeId, OpKind, TensorShape};

/// Bottleneck blocks reduce to `out_channels / BOTTLENECK_REDUCTION` inside.
pub const BOTTLENECK_REDUCTION: usize = 4;
/// Inverted bottlenecks expand to `in_channels * INVERTED_EXPANSION` inside.
pub const INVERTED_EXPANSION: usize = 4;

struct Lowering {
    b: GraphBuilder,
    cur: NodeId,
    channels: usize,
}

impl Lowering {
    fn conv(
        &mut self,
        from: NodeId,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        groups: usize,
    ) -> NodeId {
        let op = OpKind::Conv2d { kernel, stride, padding: kernel / 2, groups, in_ch, out_ch };
        self.b.push(op, &[from])
    }

    /// Conv followed by BatchNorm, optionally ReLU.
    #[allow(clippy::too_many_arguments)]
    fn conv_bn(
        &mut self,
        from: NodeId,
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        groups: usize,
        relu: bool,
    ) -> NodeId {
        let c = self.conv(from, in_ch, out_ch, kernel, stride, groups);
        let bn = self.b.push(OpKind::BatchNorm { ch: out_ch }, &[c]);
        if relu {
            self.b.push(OpKind::Relu, &[bn])
        } else {
            bn
        }
    }

    fn cnn_block(&mut self, spec: &CnnBlockSpec) {
        let x = self.cur;
        let cin = self.channels;
        let CnnBlockSpec { kind, kernel: k, stride: s, out_channels: out, groups: g } = *spec;
        let main = match kind {
            CnnBlockKind::Residual => {
                let h = self.conv_bn(x, cin, out, k, s, g, true);
                self.conv_bn(h, out, out, k, 1, g, false)
            }
            CnnBlockKind::Bottleneck => {
                let mid = out / BOTTLENECK_REDUCTION;
                let h = self.conv_bn(x, cin, mid, 1, 1, 1, true);
                let h = self.conv_bn(h, mid, mid, k, s, g, true);
                self.conv_bn(h, mid, out, 1, 1, 1, false)
            }
            CnnBlockKind::InvertedBottleneck => {
                let hid = cin * INVERTED_EXPANSION;
                let h = self.conv_bn(x, cin, hid, 1, 1, g, true);
                let h = self.conv_bn(h, hid, hid, k, s, hid, true);
                self.conv_bn(h, hid, out, 1, 1, g, false)
            }
        };
        let skip = self.conv_bn(x, cin, out, 1, s, 1, false);
        let add = self.b.push(OpKind::Add, &[main, skip]);
        self.cur = match kind {
            CnnBlockKind::InvertedBottleneck => add,
            _ => self.b.push(OpKind::Relu, &[add]),
        };
        self.channels = out;
    }

    fn pool(&mut self, spec: &PoolingBlockSpec) {
        let PoolingBlockSpec { kind, kernel, stride } = *spec;
        let op = match kind {
            PoolKind::Max => OpKind::MaxPool { kernel, stride },
            PoolKind::Avg => OpKind::AvgPool { kernel, stride },
            PoolKind::Combined => OpKind::CombinedPool { kernel, stride },
        };
        self.cur = self.b.push(op, &[self.cur]);
    }

    /// `y = x + BN(op(x))`
    fn residual_sub_block(&mut self, op: OpKind) {
        let x = self.cur;
        let y = self.b.push(op, &[x]);
        let bn = self.b.push(OpKind::BatchNorm { ch: self.channels }, &[y]);
        self.cur = self.b.push(OpKind::Add, &[x, bn]);
    }
}

/// Expands every block of the descriptor into layer nodes. Shapes are left
/// unset; see [`build_graph`] for lowering plus shape inference.
pub fn lower(arch: &ArchitectureDescriptor, config: &SearchSpaceConfig) -> NetworkGraph {
    let mut l = Lowering { b: GraphBuilder::new(), cur: 0, channels: config.input_shape[0] };
    l.cur = l.b.push(OpKind::Input, &[]);
    for (index, block) in arch.blocks.iter().enumerate() {
        l.b.set_block(Some(index));
        match block {
            BlockSpec::Cnn(spec) => l.cnn_block(spec),
            BlockSpec::Pooling(spec) => l.pool(spec),
            BlockSpec::HybridVit(spec) => {
                match &spec.prefix {
                    Some(VitPrefix::Cnn(c)) => l.cnn_block(c),
                    Some(VitPrefix::Pooling(p)) => l.pool(p),
                    None => {}
                }
                let d_model = l.channels;
                l.residual_sub_block(OpKind::Mhsa {
                    heads: spec.heads,
                    d_model,
                    qkv_dim: spec.qkv_dim,
                    attn_kind: spec.attn_kind,
                });
                if let Some(ff_dim) = spec.ff_dim {
                    l.residual_sub_block(OpKind::FeedForward { d_model, ff_dim });
                }
            }
            BlockSpec::Classifier(c) => {
                let gap = l.b.push(OpKind::GlobalAvgPool, &[l.cur]);
                l.cur = l.b.push(OpKind::Linear { in_dim: l.channels, out_dim: c.num_classes }, &[gap]);
                l.channels = c.num_classes;
            }
        }
    }
    let out = l.cur;
    l.b.finish(out).expect("lowering produces a well-formed graph")
}

/// Lowers and infers shapes for the configured input.
pub fn build_graph(arch: &ArchitectureDescriptor, config: &SearchSpaceConfig) -> Result<NetworkGraph, GraphError> {
    infer_shapes(lower(arch, config), TensorShape::from(config.input_shape))
}
