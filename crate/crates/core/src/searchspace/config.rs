//! Declarative choice domains for every searchable parameter.
//!
//! A [`SearchSpaceConfig`] is loaded from JSON with the top-level keys
//! `input_shape`, `num_classes`, `max_params`, `cnn_stage`, `pooling` and
//! `vit_stage`. Each stage maps parameter names to arrays of allowed values.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SearchSpaceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CnnBlockKind {
    Residual,
    Bottleneck,
    InvertedBottleneck,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PoolKind {
    Max,
    Avg,
    Combined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum HybridKind {
    #[serde(rename = "ViT")]
    Vit,
    #[serde(rename = "CNN-ViT")]
    CnnVit,
    #[serde(rename = "Pool-ViT")]
    PoolVit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttnKind {
    Softmax,
    Linear,
}

impl fmt::Display for AttnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttnKind::Softmax => f.write_str("softmax"),
            AttnKind::Linear => f.write_str("linear"),
        }
    }
}

/// Choice sets for one CNN block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnBlockDomains {
    pub block_kind: Vec<CnnBlockKind>,
    pub kernel_size: Vec<usize>,
    pub stride: Vec<usize>,
    pub out_channels: Vec<usize>,
    pub groups: Vec<usize>,
}

/// Choice sets for one pooling layer.
///
/// When `stride` is absent the stride is tied to the kernel size and no
/// stride gene is allocated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolingDomains {
    pub pool_kind: Vec<PoolKind>,
    pub kernel_size: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnStageDomains {
    pub depth: Vec<usize>,
    #[serde(flatten)]
    pub block: CnnBlockDomains,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VitStageDomains {
    pub depth: Vec<usize>,
    pub hybrid_kind: Vec<HybridKind>,
    pub heads: Vec<usize>,
    pub qkv_dim: Vec<usize>,
    pub use_ff: Vec<bool>,
    pub ff_dim: Vec<usize>,
    pub attn_kind: Vec<AttnKind>,
    /// Domains of the CNN-ViT prefix block. Defaults to the CNN stage domains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_cnn: Option<CnnBlockDomains>,
    /// Domains of the Pool-ViT prefix layer. Defaults to the stage-separator pooling domains.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix_pooling: Option<PoolingDomains>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpaceConfig {
    /// `(channels, height, width)`.
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub max_params: u64,
    pub cnn_stage: CnnStageDomains,
    pub pooling: PoolingDomains,
    pub vit_stage: VitStageDomains,
}

impl Default for SearchSpaceConfig {
    fn default() -> Self {
        Self {
            input_shape: [3, 32, 32],
            num_classes: 10,
            max_params: 100_000,
            cnn_stage: CnnStageDomains {
                depth: vec![1, 2, 3, 4],
                block: CnnBlockDomains {
                    block_kind: vec![
                        CnnBlockKind::Residual,
                        CnnBlockKind::Bottleneck,
                        CnnBlockKind::InvertedBottleneck,
                    ],
                    kernel_size: vec![3, 5],
                    stride: vec![1, 2],
                    out_channels: vec![8, 16, 24, 32, 48, 64, 96, 128],
                    groups: vec![1, 2, 4],
                },
            },
            pooling: PoolingDomains {
                pool_kind: vec![PoolKind::Max, PoolKind::Avg, PoolKind::Combined],
                kernel_size: vec![2, 4],
                stride: None,
            },
            vit_stage: VitStageDomains {
                depth: vec![1, 2, 3, 4],
                hybrid_kind: vec![HybridKind::Vit, HybridKind::CnnVit, HybridKind::PoolVit],
                heads: vec![1, 2, 4],
                qkv_dim: vec![16, 32, 64],
                use_ff: vec![true, false],
                ff_dim: vec![32, 64, 128, 256],
                attn_kind: vec![AttnKind::Softmax, AttnKind::Linear],
                prefix_cnn: None,
                prefix_pooling: None,
            },
        }
    }
}

impl SearchSpaceConfig {
    pub fn from_json_str(text: &str) -> Result<Self, SearchSpaceError> {
        let config: Self = serde_json::from_str(text)?;
        config.check()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, SearchSpaceError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json_str(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn prefix_cnn(&self) -> &CnnBlockDomains {
        self.vit_stage.prefix_cnn.as_ref().unwrap_or(&self.cnn_stage.block)
    }

    pub fn prefix_pooling(&self) -> &PoolingDomains {
        self.vit_stage.prefix_pooling.as_ref().unwrap_or(&self.pooling)
    }

    pub fn max_cnn_depth(&self) -> usize {
        self.cnn_stage.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn max_vit_depth(&self) -> usize {
        self.vit_stage.depth.iter().copied().max().unwrap_or(0)
    }

    /// Checks that the config is well formed: non-empty domains without
    /// duplicates, positive sizes, depths of at least one.
    pub fn check(&self) -> Result<(), SearchSpaceError> {
        let [c, h, w] = self.input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(SearchSpaceError::Config("input_shape dims must be >= 1".into()));
        }
        if self.num_classes == 0 {
            return Err(SearchSpaceError::Config("num_classes must be >= 1".into()));
        }
        if self.max_params == 0 {
            return Err(SearchSpaceError::Config("max_params must be >= 1".into()));
        }
        positive("cnn_stage.depth", &self.cnn_stage.depth)?;
        positive("vit_stage.depth", &self.vit_stage.depth)?;
        check_cnn_block("cnn_stage", &self.cnn_stage.block)?;
        check_pooling("pooling", &self.pooling)?;
        let vit = &self.vit_stage;
        distinct("vit_stage.hybrid_kind", &vit.hybrid_kind)?;
        positive("vit_stage.heads", &vit.heads)?;
        positive("vit_stage.qkv_dim", &vit.qkv_dim)?;
        distinct("vit_stage.use_ff", &vit.use_ff)?;
        positive("vit_stage.ff_dim", &vit.ff_dim)?;
        distinct("vit_stage.attn_kind", &vit.attn_kind)?;
        if let Some(d) = &vit.prefix_cnn {
            check_cnn_block("vit_stage.prefix_cnn", d)?;
        }
        if let Some(d) = &vit.prefix_pooling {
            check_pooling("vit_stage.prefix_pooling", d)?;
        }
        Ok(())
    }
}

fn check_cnn_block(prefix: &str, d: &CnnBlockDomains) -> Result<(), SearchSpaceError> {
    distinct(&format!("{prefix}.block_kind"), &d.block_kind)?;
    positive(&format!("{prefix}.kernel_size"), &d.kernel_size)?;
    positive(&format!("{prefix}.stride"), &d.stride)?;
    positive(&format!("{prefix}.out_channels"), &d.out_channels)?;
    positive(&format!("{prefix}.groups"), &d.groups)
}

fn check_pooling(prefix: &str, d: &PoolingDomains) -> Result<(), SearchSpaceError> {
    distinct(&format!("{prefix}.pool_kind"), &d.pool_kind)?;
    positive(&format!("{prefix}.kernel_size"), &d.kernel_size)?;
    if let Some(s) = &d.stride {
        positive(&format!("{prefix}.stride"), s)?;
    }
    Ok(())
}

fn distinct<T: PartialEq + fmt::Debug>(name: &str, values: &[T]) -> Result<(), SearchSpaceError> {
    if values.is_empty() {
        return Err(SearchSpaceError::Config(format!("domain `{name}` is empty")));
    }
    for (i, v) in values.iter().enumerate() {
        if values[..i].contains(v) {
            return Err(SearchSpaceError::Config(format!("domain `{name}` lists {v:?} more than once")));
        }
    }
    Ok(())
}

fn positive(name: &str, values: &[usize]) -> Result<(), SearchSpaceError> {
    distinct(name, values)?;
    if values.contains(&0) {
        return Err(SearchSpaceError::Config(format!("domain `{name}` must only contain values >= 1")));
    }
    Ok(())
}
