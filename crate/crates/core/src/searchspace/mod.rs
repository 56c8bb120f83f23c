//! The hybrid CNN-ViT search space: choice domains, genome encoding,
//! validation and mutation.

mod arch;
mod config;
pub(crate) mod genome;
mod mutate;
mod validate;

use thiserror::Error;

pub use arch::{
    ArchitectureDescriptor, BlockSpec, ClassifierSpec, CnnBlockSpec, HybridVitBlockSpec, PoolingBlockSpec, VitPrefix,
};
pub use config::{
    AttnKind, CnnBlockDomains, CnnBlockKind, CnnStageDomains, HybridKind, PoolKind, PoolingDomains, SearchSpaceConfig,
    VitStageDomains,
};
pub use genome::{
    active_mask, canonicalize, decode, encode, gene_cardinalities, genome_len, sample, sample_seeded, Genome,
};
pub use mutate::{mutate, MutationOutcome, MAX_MUTATION_ATTEMPTS};
pub use validate::{validate, RuleId, ValidationReport, Violation};

#[derive(Debug, Error)]
pub enum SearchSpaceError {
    #[error("invalid search space config: {0}")]
    Config(String),
    #[error("cannot decode genome: {0}")]
    Decode(String),
    #[error("cannot encode architecture: {0}")]
    Encode(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
