use std::fmt;

use serde::{Deserialize, Serialize};

use super::arch::{ArchitectureDescriptor, BlockSpec, CnnBlockSpec, PoolingBlockSpec, VitPrefix};
use super::config::{CnnBlockDomains, PoolingDomains, SearchSpaceConfig};
use crate::graph::{infer_shapes, lower, GraphError, OpKind, TensorShape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleId {
    Skeleton,
    Domain,
    GroupDivisibility,
    HeadDivisibility,
    ChannelWidth,
    SpatialUnderflow,
    ShapeMismatch,
    FfExpansion,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RuleId::Skeleton => "skeleton",
            RuleId::Domain => "domain",
            RuleId::GroupDivisibility => "group-divisibility",
            RuleId::HeadDivisibility => "head-divisibility",
            RuleId::ChannelWidth => "channel-width",
            RuleId::SpatialUnderflow => "spatial-underflow",
            RuleId::ShapeMismatch => "shape-mismatch",
            RuleId::FfExpansion => "ff-expansion",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Descriptor block the violation belongs to, if any.
    pub block_index: Option<usize>,
    pub rule_id: RuleId,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn push(&mut self, block_index: Option<usize>, rule_id: RuleId, message: impl Into<String>) {
        self.violations.push(Violation { block_index, rule_id, message: message.into() });
    }

    pub fn has(&self, rule: RuleId) -> bool {
        self.violations.iter().any(|v| v.rule_id == rule)
    }
}

fn check_cnn_domain(report: &mut ValidationReport, i: usize, spec: &CnnBlockSpec, d: &CnnBlockDomains) {
    let checks = [
        ("block_kind", d.block_kind.contains(&spec.kind)),
        ("kernel_size", d.kernel_size.contains(&spec.kernel)),
        ("stride", d.stride.contains(&spec.stride)),
        ("out_channels", d.out_channels.contains(&spec.out_channels)),
        ("groups", d.groups.contains(&spec.groups)),
    ];
    for (name, ok) in checks {
        if !ok {
            report.push(Some(i), RuleId::Domain, format!("{name} of {spec:?} not in domain"));
        }
    }
}

fn check_pool_domain(report: &mut ValidationReport, i: usize, spec: &PoolingBlockSpec, d: &PoolingDomains) {
    if !d.pool_kind.contains(&spec.kind) {
        report.push(Some(i), RuleId::Domain, format!("pool_kind {:?} not in domain", spec.kind));
    }
    if !d.kernel_size.contains(&spec.kernel) {
        report.push(Some(i), RuleId::Domain, format!("pool kernel {} not in domain", spec.kernel));
    }
    let stride_ok = match &d.stride {
        Some(s) => s.contains(&spec.stride),
        None => spec.stride == spec.kernel,
    };
    if !stride_ok {
        report.push(Some(i), RuleId::Domain, format!("pool stride {} not allowed", spec.stride));
    }
}

fn check_domains(report: &mut ValidationReport, arch: &ArchitectureDescriptor, config: &SearchSpaceConfig) {
    let cnn_depth = arch.cnn_blocks().count();
    let vit_depth = arch.vit_blocks().count();
    if !config.cnn_stage.depth.contains(&cnn_depth) {
        report.push(None, RuleId::Domain, format!("CNN stage depth {cnn_depth} not in domain"));
    }
    if !config.vit_stage.depth.contains(&vit_depth) {
        report.push(None, RuleId::Domain, format!("ViT stage depth {vit_depth} not in domain"));
    }
    let v = &config.vit_stage;
    for (i, block) in arch.blocks.iter().enumerate() {
        match block {
            BlockSpec::Cnn(c) => check_cnn_domain(report, i, c, &config.cnn_stage.block),
            BlockSpec::Pooling(p) => check_pool_domain(report, i, p, &config.pooling),
            BlockSpec::HybridVit(h) => {
                if !v.hybrid_kind.contains(&h.kind()) {
                    report.push(Some(i), RuleId::Domain, format!("hybrid kind {:?} not in domain", h.kind()));
                }
                if !v.heads.contains(&h.heads) {
                    report.push(Some(i), RuleId::Domain, format!("heads {} not in domain", h.heads));
                }
                if !v.qkv_dim.contains(&h.qkv_dim) {
                    report.push(Some(i), RuleId::Domain, format!("qkv_dim {} not in domain", h.qkv_dim));
                }
                if !v.use_ff.contains(&h.use_ff()) {
                    report.push(Some(i), RuleId::Domain, format!("use_ff {} not in domain", h.use_ff()));
                }
                if let Some(ff) = h.ff_dim {
                    if !v.ff_dim.contains(&ff) {
                        report.push(Some(i), RuleId::Domain, format!("ff_dim {ff} not in domain"));
                    }
                }
                if !v.attn_kind.contains(&h.attn_kind) {
                    report.push(Some(i), RuleId::Domain, format!("attn_kind {:?} not in domain", h.attn_kind));
                }
                match &h.prefix {
                    Some(VitPrefix::Cnn(c)) => check_cnn_domain(report, i, c, config.prefix_cnn()),
                    Some(VitPrefix::Pooling(p)) => check_pool_domain(report, i, p, config.prefix_pooling()),
                    None => {}
                }
            }
            BlockSpec::Classifier(c) => {
                if c.num_classes != config.num_classes {
                    report.push(Some(i), RuleId::Domain, format!("classifier has {} classes", c.num_classes));
                }
            }
        }
    }
}

/// Collects every rule violation of an architecture.
pub fn validate(arch: &ArchitectureDescriptor, config: &SearchSpaceConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    if !arch.follows_skeleton() {
        report.push(None, RuleId::Skeleton, "blocks must follow CNN+ Pooling HybridViT+ Classifier");
    }
    check_domains(&mut report, arch, config);

    for (i, block) in arch.blocks.iter().enumerate() {
        if let BlockSpec::HybridVit(h) = block {
            if h.heads == 0 || h.qkv_dim % h.heads != 0 {
                report.push(
                    Some(i),
                    RuleId::HeadDivisibility,
                    format!("qkv_dim {} is not divisible by {} heads", h.qkv_dim, h.heads),
                );
            }
        }
    }

    let graph = lower(arch, config);
    for node in graph.nodes() {
        match node.op {
            OpKind::Conv2d { groups, in_ch, out_ch, .. } => {
                if in_ch == 0 || out_ch == 0 {
                    report.push(
                        node.block,
                        RuleId::ChannelWidth,
                        format!("node {} has a zero-width convolution", node.id),
                    );
                } else if groups == 0 || in_ch % groups != 0 || out_ch % groups != 0 {
                    report.push(
                        node.block,
                        RuleId::GroupDivisibility,
                        format!("node {}: channels {in_ch}->{out_ch} not divisible by groups {groups}", node.id),
                    );
                }
            }
            OpKind::FeedForward { d_model, ff_dim } if ff_dim < d_model => {
                report.push(
                    node.block,
                    RuleId::FfExpansion,
                    format!("ff_dim {ff_dim} is smaller than the channel dim {d_model}"),
                );
            }
            _ => {}
        }
    }

    if let Err(err) = infer_shapes(graph, TensorShape::from(config.input_shape)) {
        let rule = match err {
            GraphError::ShapeUnderflow { .. } => RuleId::SpatialUnderflow,
            _ => RuleId::ShapeMismatch,
        };
        report.push(err.block(), rule, err.to_string());
    }

    report.valid = report.violations.is_empty();
    report
}
