//! Fixed-length genome encoding of the search space.
//!
//! Layout: `[cnn_depth, vit_depth]`, then five genes per CNN slot
//! (`block_kind, kernel_size, stride, out_channels, groups`) for the maximum
//! CNN depth, then the stage-separator pooling genes (`pool_kind,
//! kernel_size[, stride]`), then one gene group per ViT slot for the maximum
//! ViT depth: `hybrid_kind, heads, qkv_dim, use_ff, ff_dim, attn_kind`
//! followed by the CNN prefix genes and the pooling prefix genes. Slots beyond
//! the active depth keep their genes but are ignored by [`decode`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::{ArchitectureDescriptor, BlockSpec, CnnBlockSpec, HybridVitBlockSpec, PoolingBlockSpec, VitPrefix};
use super::config::{CnnBlockDomains, HybridKind, PoolingDomains, SearchSpaceConfig};
use super::SearchSpaceError;

/// Vector of choice indices, serialized as a plain JSON integer array.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Genome(pub Vec<usize>);

impl Genome {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn genes(&self) -> &[usize] {
        &self.0
    }

    pub fn hamming(&self, other: &Genome) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count() + self.0.len().abs_diff(other.0.len())
    }
}

const CNN_GENES: usize = 5;
const VIT_HEAD_GENES: usize = 6;

fn pool_genes(d: &PoolingDomains) -> usize {
    2 + usize::from(d.stride.is_some())
}

/// Gene offsets derived from a config.
#[derive(Clone, Copy, Debug)]
struct Layout {
    cnn_slots: usize,
    vit_slots: usize,
    pool_len: usize,
    prefix_pool_len: usize,
}

impl Layout {
    fn of(config: &SearchSpaceConfig) -> Self {
        Self {
            cnn_slots: config.max_cnn_depth(),
            vit_slots: config.max_vit_depth(),
            pool_len: pool_genes(&config.pooling),
            prefix_pool_len: pool_genes(config.prefix_pooling()),
        }
    }

    fn cnn_slot(&self, i: usize) -> usize {
        2 + i * CNN_GENES
    }

    fn pool(&self) -> usize {
        2 + self.cnn_slots * CNN_GENES
    }

    fn vit_len(&self) -> usize {
        VIT_HEAD_GENES + CNN_GENES + self.prefix_pool_len
    }

    fn vit_slot(&self, i: usize) -> usize {
        self.pool() + self.pool_len + i * self.vit_len()
    }

    fn len(&self) -> usize {
        self.vit_slot(self.vit_slots)
    }
}

fn cnn_cards(d: &CnnBlockDomains) -> [usize; CNN_GENES] {
    [d.block_kind.len(), d.kernel_size.len(), d.stride.len(), d.out_channels.len(), d.groups.len()]
}

fn pool_cards(d: &PoolingDomains) -> Vec<usize> {
    let mut cards = vec![d.pool_kind.len(), d.kernel_size.len()];
    if let Some(s) = &d.stride {
        cards.push(s.len());
    }
    cards
}

/// Cardinality of every gene's domain, in genome order.
pub fn gene_cardinalities(config: &SearchSpaceConfig) -> Vec<usize> {
    let layout = Layout::of(config);
    let mut cards = Vec::with_capacity(layout.len());
    cards.push(config.cnn_stage.depth.len());
    cards.push(config.vit_stage.depth.len());
    for _ in 0..layout.cnn_slots {
        cards.extend(cnn_cards(&config.cnn_stage.block));
    }
    cards.extend(pool_cards(&config.pooling));
    let v = &config.vit_stage;
    for _ in 0..layout.vit_slots {
        cards.extend([
            v.hybrid_kind.len(),
            v.heads.len(),
            v.qkv_dim.len(),
            v.use_ff.len(),
            v.ff_dim.len(),
            v.attn_kind.len(),
        ]);
        cards.extend(cnn_cards(config.prefix_cnn()));
        cards.extend(pool_cards(config.prefix_pooling()));
    }
    debug_assert_eq!(cards.len(), layout.len());
    cards
}

pub fn genome_len(config: &SearchSpaceConfig) -> usize {
    Layout::of(config).len()
}

/// Draws every gene uniformly from its domain.
pub fn sample<R: Rng + ?Sized>(config: &SearchSpaceConfig, rng: &mut R) -> Result<Genome, SearchSpaceError> {
    config.check()?;
    Ok(Genome(gene_cardinalities(config).into_iter().map(|c| rng.gen_range(0..c)).collect()))
}

/// Seeded convenience wrapper around [`sample`].
pub fn sample_seeded(config: &SearchSpaceConfig, seed: u64) -> Result<Genome, SearchSpaceError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    sample(config, &mut rng)
}

fn check_ranges(genome: &Genome, cards: &[usize]) -> Result<(), SearchSpaceError> {
    if genome.len() != cards.len() {
        return Err(SearchSpaceError::Decode(format!(
            "genome has {} genes, space expects {}",
            genome.len(),
            cards.len()
        )));
    }
    for (pos, (&g, &c)) in genome.0.iter().zip(cards).enumerate() {
        if g >= c {
            return Err(SearchSpaceError::Decode(format!("gene {pos} has index {g}, domain has {c} values")));
        }
    }
    Ok(())
}

fn decode_cnn(genes: &[usize], d: &CnnBlockDomains) -> CnnBlockSpec {
    CnnBlockSpec {
        kind: d.block_kind[genes[0]],
        kernel: d.kernel_size[genes[1]],
        stride: d.stride[genes[2]],
        out_channels: d.out_channels[genes[3]],
        groups: d.groups[genes[4]],
    }
}

fn decode_pool(genes: &[usize], d: &PoolingDomains) -> PoolingBlockSpec {
    let kernel = d.kernel_size[genes[1]];
    let stride = match &d.stride {
        Some(s) => s[genes[2]],
        None => kernel,
    };
    PoolingBlockSpec { kind: d.pool_kind[genes[0]], kernel, stride }
}

/// Resolves the active slots of a genome into a concrete architecture.
pub fn decode(genome: &Genome, config: &SearchSpaceConfig) -> Result<ArchitectureDescriptor, SearchSpaceError> {
    check_ranges(genome, &gene_cardinalities(config))?;
    let layout = Layout::of(config);
    let g = genome.genes();
    let cnn_depth = config.cnn_stage.depth[g[0]];
    let vit_depth = config.vit_stage.depth[g[1]];

    let cnn = (0..cnn_depth).map(|i| {
        let at = layout.cnn_slot(i);
        decode_cnn(&g[at..at + CNN_GENES], &config.cnn_stage.block)
    });
    let pool_at = layout.pool();
    let pooling = decode_pool(&g[pool_at..pool_at + layout.pool_len], &config.pooling);

    let v = &config.vit_stage;
    let vit = (0..vit_depth).map(|i| {
        let at = layout.vit_slot(i);
        let s = &g[at..at + layout.vit_len()];
        let prefix = match v.hybrid_kind[s[0]] {
            HybridKind::Vit => None,
            HybridKind::CnnVit => {
                Some(VitPrefix::Cnn(decode_cnn(&s[VIT_HEAD_GENES..VIT_HEAD_GENES + CNN_GENES], config.prefix_cnn())))
            }
            HybridKind::PoolVit => {
                Some(VitPrefix::Pooling(decode_pool(&s[VIT_HEAD_GENES + CNN_GENES..], config.prefix_pooling())))
            }
        };
        HybridVitBlockSpec {
            prefix,
            heads: v.heads[s[1]],
            qkv_dim: v.qkv_dim[s[2]],
            ff_dim: v.use_ff[s[3]].then(|| v.ff_dim[s[4]]),
            attn_kind: v.attn_kind[s[5]],
        }
    });

    Ok(ArchitectureDescriptor::new(cnn, pooling, vit, config.num_classes))
}

fn index_of<T: PartialEq + std::fmt::Debug>(domain: &[T], value: &T, what: &str) -> Result<usize, SearchSpaceError> {
    domain
        .iter()
        .position(|d| d == value)
        .ok_or_else(|| SearchSpaceError::Encode(format!("{what} {value:?} is not in domain {domain:?}")))
}

fn encode_cnn(spec: &CnnBlockSpec, d: &CnnBlockDomains) -> Result<[usize; CNN_GENES], SearchSpaceError> {
    Ok([
        index_of(&d.block_kind, &spec.kind, "block_kind")?,
        index_of(&d.kernel_size, &spec.kernel, "kernel_size")?,
        index_of(&d.stride, &spec.stride, "stride")?,
        index_of(&d.out_channels, &spec.out_channels, "out_channels")?,
        index_of(&d.groups, &spec.groups, "groups")?,
    ])
}

fn encode_pool(spec: &PoolingBlockSpec, d: &PoolingDomains) -> Result<Vec<usize>, SearchSpaceError> {
    let mut genes = vec![
        index_of(&d.pool_kind, &spec.kind, "pool_kind")?,
        index_of(&d.kernel_size, &spec.kernel, "pool kernel_size")?,
    ];
    match &d.stride {
        Some(s) => genes.push(index_of(s, &spec.stride, "pool stride")?),
        None if spec.stride != spec.kernel => {
            return Err(SearchSpaceError::Encode(format!(
                "pool stride {} must equal its kernel {} in this space",
                spec.stride, spec.kernel
            )))
        }
        None => {}
    }
    Ok(genes)
}

/// Inverse of [`decode`]; inactive genes are set to index 0.
pub fn encode(arch: &ArchitectureDescriptor, config: &SearchSpaceConfig) -> Result<Genome, SearchSpaceError> {
    if !arch.follows_skeleton() {
        return Err(SearchSpaceError::Encode("block order does not match the macro skeleton".into()));
    }
    let layout = Layout::of(config);
    let mut g = vec![0usize; layout.len()];
    let cnn: Vec<_> = arch.cnn_blocks().collect();
    let vit: Vec<_> = arch.vit_blocks().collect();
    g[0] = index_of(&config.cnn_stage.depth, &cnn.len(), "cnn stage depth")?;
    g[1] = index_of(&config.vit_stage.depth, &vit.len(), "vit stage depth")?;

    for (i, block) in cnn.iter().enumerate() {
        let at = layout.cnn_slot(i);
        g[at..at + CNN_GENES].copy_from_slice(&encode_cnn(block, &config.cnn_stage.block)?);
    }
    let pooling = arch.pooling_blocks().next().expect("skeleton has a pooling block");
    let pool = encode_pool(pooling, &config.pooling)?;
    let at = layout.pool();
    g[at..at + pool.len()].copy_from_slice(&pool);

    let v = &config.vit_stage;
    for (i, block) in vit.iter().enumerate() {
        let at = layout.vit_slot(i);
        g[at] = index_of(&v.hybrid_kind, &block.kind(), "hybrid_kind")?;
        g[at + 1] = index_of(&v.heads, &block.heads, "heads")?;
        g[at + 2] = index_of(&v.qkv_dim, &block.qkv_dim, "qkv_dim")?;
        g[at + 3] = index_of(&v.use_ff, &block.use_ff(), "use_ff")?;
        if let Some(ff) = block.ff_dim {
            g[at + 4] = index_of(&v.ff_dim, &ff, "ff_dim")?;
        }
        g[at + 5] = index_of(&v.attn_kind, &block.attn_kind, "attn_kind")?;
        match &block.prefix {
            None => {}
            Some(VitPrefix::Cnn(c)) => {
                let p = at + VIT_HEAD_GENES;
                g[p..p + CNN_GENES].copy_from_slice(&encode_cnn(c, config.prefix_cnn())?);
            }
            Some(VitPrefix::Pooling(pl)) => {
                let p = at + VIT_HEAD_GENES + CNN_GENES;
                let genes = encode_pool(pl, config.prefix_pooling())?;
                g[p..p + genes.len()].copy_from_slice(&genes);
            }
        }
    }
    if arch.blocks.last()
        != Some(&BlockSpec::Classifier(super::arch::ClassifierSpec { num_classes: config.num_classes }))
    {
        return Err(SearchSpaceError::Encode(format!("classifier must have {} classes", config.num_classes)));
    }
    Ok(Genome(g))
}

/// Marks the genes that influence [`decode`] for this genome.
pub fn active_mask(genome: &Genome, config: &SearchSpaceConfig) -> Result<Vec<bool>, SearchSpaceError> {
    check_ranges(genome, &gene_cardinalities(config))?;
    let layout = Layout::of(config);
    let g = genome.genes();
    let mut mask = vec![false; layout.len()];
    mask[0] = true;
    mask[1] = true;
    for i in 0..config.cnn_stage.depth[g[0]] {
        let at = layout.cnn_slot(i);
        mask[at..at + CNN_GENES].fill(true);
    }
    let at = layout.pool();
    mask[at..at + layout.pool_len].fill(true);
    let v = &config.vit_stage;
    for i in 0..v.depth[g[1]] {
        let at = layout.vit_slot(i);
        mask[at..at + 4].fill(true);
        mask[at + 4] = v.use_ff[g[at + 3]];
        mask[at + 5] = true;
        match v.hybrid_kind[g[at]] {
            HybridKind::Vit => {}
            HybridKind::CnnVit => {
                let p = at + VIT_HEAD_GENES;
                mask[p..p + CNN_GENES].fill(true);
            }
            HybridKind::PoolVit => {
                let p = at + VIT_HEAD_GENES + CNN_GENES;
                mask[p..p + layout.prefix_pool_len].fill(true);
            }
        }
    }
    Ok(mask)
}

/// Copy of the genome with inactive genes zeroed.
pub fn canonicalize(genome: &Genome, config: &SearchSpaceConfig) -> Result<Genome, SearchSpaceError> {
    let mask = active_mask(genome, config)?;
    Ok(Genome(genome.0.iter().zip(mask).map(|(&g, on)| if on { g } else { 0 }).collect()))
}
