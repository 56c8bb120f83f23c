//! Aging-evolution search with randomized scalarization, pluggable
//! evaluators and Pareto extraction.

mod evaluator;
mod external;
mod objective;
mod pareto;
mod run;

use thiserror::Error;

use crate::searchspace::SearchSpaceError;

pub use evaluator::{BuiltinEvaluator, EvalRequest, EvalResult, Evaluator, ParallelEvaluator};
pub use external::{evaluate_external, ExternalError, ExternalEvaluator};
pub use objective::{sample_simplex_weights, scalarize, Direction, Normalizer, Objective};
pub use pareto::{dominates, pareto_front};
pub use run::{
    candidate_id, run_search, Candidate, CandidateStatus, ObjectiveSpec, SearchConfig, SearchHistory,
    MAX_CHILD_ATTEMPTS, MAX_SAMPLE_ATTEMPTS,
};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("no architecture within {max_params} params found in {attempts} samples")]
    Infeasible { attempts: usize, max_params: u64 },
    #[error(transparent)]
    SearchSpace(#[from] SearchSpaceError),
}
