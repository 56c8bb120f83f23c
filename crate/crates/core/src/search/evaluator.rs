use std::str::FromStr;

use crate::cost::CostReport;
use crate::graph::NetworkGraph;

/// One candidate handed to an evaluator.
#[derive(Clone, Copy, Debug)]
pub struct EvalRequest<'a> {
    pub id: &'a str,
    pub graph: &'a NetworkGraph,
    pub cost: &'a CostReport,
    pub epochs: u32,
}

/// Validation accuracy, or an error message.
pub type EvalResult = Result<f64, String>;

pub trait Evaluator {
    /// Scores a batch; the result vector is aligned with `batch`.
    fn evaluate_batch(&mut self, batch: &[EvalRequest<'_>]) -> Vec<EvalResult>;

    fn describe(&self) -> String;
}

/// Deterministic fitness functions for tests and benchmarking.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BuiltinEvaluator {
    Constant(f64),
    /// `1 - |params - target| / target`
    SyntheticParamTarget {
        target: u64,
    },
    /// Fitness is the negated MAC count.
    NegativeMacs,
}

impl BuiltinEvaluator {
    pub const DEFAULT_CONSTANT: f64 = 0.5;
    pub const DEFAULT_PARAM_TARGET: u64 = 50_000;

    pub fn score(&self, cost: &CostReport) -> f64 {
        match *self {
            BuiltinEvaluator::Constant(v) => v,
            BuiltinEvaluator::SyntheticParamTarget { target } => {
                1.0 - (cost.params as f64 - target as f64).abs() / target as f64
            }
            BuiltinEvaluator::NegativeMacs => -(cost.macs as f64),
        }
    }
}

impl FromStr for BuiltinEvaluator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "constant" => Ok(BuiltinEvaluator::Constant(Self::DEFAULT_CONSTANT)),
            "synthetic-param-target" => {
                Ok(BuiltinEvaluator::SyntheticParamTarget { target: Self::DEFAULT_PARAM_TARGET })
            }
            "negative-macs" => Ok(BuiltinEvaluator::NegativeMacs),
            _ => Err(format!("unknown built-in evaluator {s:?}")),
        }
    }
}

impl Evaluator for BuiltinEvaluator {
    fn evaluate_batch(&mut self, batch: &[EvalRequest<'_>]) -> Vec<EvalResult> {
        batch.iter().map(|r| Ok(self.score(r.cost))).collect()
    }

    fn describe(&self) -> String {
        match self {
            BuiltinEvaluator::Constant(v) => format!("constant({v})"),
            BuiltinEvaluator::SyntheticParamTarget { target } => format!("synthetic-param-target({target})"),
            BuiltinEvaluator::NegativeMacs => "negative-macs".into(),
        }
    }
}

/// Runs a per-candidate scoring function on up to `threads` workers.
pub struct ParallelEvaluator<F> {
    score: F,
    threads: usize,
    name: String,
}

impl<F> ParallelEvaluator<F>
where
    F: Fn(&EvalRequest<'_>) -> EvalResult + Sync,
{
    pub fn new(name: impl Into<String>, threads: usize, score: F) -> Self {
        Self { score, threads: threads.max(1), name: name.into() }
    }
}

impl<F> Evaluator for ParallelEvaluator<F>
where
    F: Fn(&EvalRequest<'_>) -> EvalResult + Sync,
{
    fn evaluate_batch(&mut self, batch: &[EvalRequest<'_>]) -> Vec<EvalResult> {
        if self.threads == 1 || batch.len() <= 1 {
            return batch.iter().map(&self.score).collect();
        }
        let chunk = batch.len().div_ceil(self.threads);
        let score = &self.score;
        std::thread::scope(|s| {
            let handles: Vec<_> =
                batch.chunks(chunk).map(|part| s.spawn(move || part.iter().map(score).collect::<Vec<_>>())).collect();
            handles.into_iter().flat_map(|h| h.join().expect("evaluator worker panicked")).collect()
        })
    }

    fn describe(&self) -> String {
        format!("{} x{}", self.name, self.threads)
    }
}
