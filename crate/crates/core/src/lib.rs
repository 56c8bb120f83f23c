//! Search engine for hybrid CNN-ViT architectures on microcontroller-class
//! budgets.
//!
//! The pipeline is: [`searchspace`] samples and mutates genomes, [`graph`]
//! lowers decoded architectures to layer DAGs, [`cost`] computes params,
//! MACs, ROM, peak RAM and a latency proxy, [`kernels`] executes graphs
//! numerically as a reference oracle, and [`search`] runs aging evolution
//! under a parameter budget. [`report`] writes the CSV/JSON/SVG outputs.

pub mod cost;
pub mod graph;
pub mod kernels;
pub mod report;
pub mod search;
pub mod searchspace;

pub use cost::{CostReport, DeploymentAssumptions};
pub use graph::{NetworkGraph, TensorShape};
pub use search::{Candidate, Evaluator, SearchConfig, SearchHistory};
pub use searchspace::{ArchitectureDescriptor, Genome, SearchSpaceConfig};
