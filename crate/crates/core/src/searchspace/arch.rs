use serde::{Deserialize, Serialize};

use super::config::{AttnKind, CnnBlockKind, HybridKind, PoolKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CnnBlockSpec {
    pub kind: CnnBlockKind,
    pub kernel: usize,
    pub stride: usize,
    pub out_channels: usize,
    pub groups: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolingBlockSpec {
    pub kind: PoolKind,
    pub kernel: usize,
    pub stride: usize,
}

/// Optional sub-block in front of the ViT encoder of a hybrid block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VitPrefix {
    Cnn(CnnBlockSpec),
    Pooling(PoolingBlockSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HybridVitBlockSpec {
    pub prefix: Option<VitPrefix>,
    pub heads: usize,
    pub qkv_dim: usize,
    /// Hidden width of the feed-forward sub-block; `None` when the block has none.
    pub ff_dim: Option<usize>,
    pub attn_kind: AttnKind,
}

impl HybridVitBlockSpec {
    pub fn kind(&self) -> HybridKind {
        match self.prefix {
            None => HybridKind::Vit,
            Some(VitPrefix::Cnn(_)) => HybridKind::CnnVit,
            Some(VitPrefix::Pooling(_)) => HybridKind::PoolVit,
        }
    }

    pub fn use_ff(&self) -> bool {
        self.ff_dim.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub num_classes: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BlockSpec {
    Cnn(CnnBlockSpec),
    Pooling(PoolingBlockSpec),
    HybridVit(HybridVitBlockSpec),
    Classifier(ClassifierSpec),
}

/// A decoded network: CNN blocks, one stage-separator pooling block,
/// hybrid ViT blocks and a terminating classifier, in that order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchitectureDescriptor {
    pub blocks: Vec<BlockSpec>,
}

impl ArchitectureDescriptor {
    pub fn new(
        cnn: impl IntoIterator<Item = CnnBlockSpec>,
        pooling: PoolingBlockSpec,
        vit: impl IntoIterator<Item = HybridVitBlockSpec>,
        num_classes: usize,
    ) -> Self {
        let mut blocks: Vec<BlockSpec> = cnn.into_iter().map(BlockSpec::Cnn).collect();
        blocks.push(BlockSpec::Pooling(pooling));
        blocks.extend(vit.into_iter().map(BlockSpec::HybridVit));
        blocks.push(BlockSpec::Classifier(ClassifierSpec { num_classes }));
        Self { blocks }
    }

    pub fn cnn_blocks(&self) -> impl Iterator<Item = &CnnBlockSpec> {
        self.blocks.iter().filter_map(|b| match b {
            BlockSpec::Cnn(c) => Some(c),
            _ => None,
        })
    }

    pub fn vit_blocks(&self) -> impl Iterator<Item = &HybridVitBlockSpec> {
        self.blocks.iter().filter_map(|b| match b {
            BlockSpec::HybridVit(v) => Some(v),
            _ => None,
        })
    }

    pub fn pooling_blocks(&self) -> impl Iterator<Item = &PoolingBlockSpec> {
        self.blocks.iter().filter_map(|b| match b {
            BlockSpec::Pooling(p) => Some(p),
            _ => None,
        })
    }

    /// True when the block list matches `Cnn+ Pooling HybridVit+ Classifier`.
    pub fn follows_skeleton(&self) -> bool {
        let mut i = 0;
        let blocks = &self.blocks;
        let start = i;
        while matches!(blocks.get(i), Some(BlockSpec::Cnn(_))) {
            i += 1;
        }
        if i == start {
            return false;
        }
        if !matches!(blocks.get(i), Some(BlockSpec::Pooling(_))) {
            return false;
        }
        i += 1;
        let start = i;
        while matches!(blocks.get(i), Some(BlockSpec::HybridVit(_))) {
            i += 1;
        }
        if i == start {
            return false;
        }
        matches!(blocks.get(i), Some(BlockSpec::Classifier(_))) && i + 1 == blocks.len()
    }

    /// Number of blocks, counting the classifier.
    pub fn depth(&self) -> usize {
        self.blocks.len()
    }
}
