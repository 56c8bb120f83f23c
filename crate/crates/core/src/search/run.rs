use std::collections::{HashSet, VecDeque};
use std::time::Instant;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    pareto_front, sample_simplex_weights, scalarize, Direction, EvalRequest, Evaluator, Normalizer, Objective,
    SearchError,
};
use crate::cost::{estimate, CostReport, DeploymentAssumptions};
use crate::graph::{build_graph, NetworkGraph};
use crate::searchspace::{decode, mutate, sample, validate, ArchitectureDescriptor, Genome, SearchSpaceConfig};

/// Rejection-sampling attempts per freshly sampled candidate.
pub const MAX_SAMPLE_ATTEMPTS: usize = 1000;
/// Mutations tried per child before falling back to a fresh sample.
pub const MAX_CHILD_ATTEMPTS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub objective: Objective,
    pub direction: Direction,
}

impl From<Objective> for ObjectiveSpec {
    fn from(objective: Objective) -> Self {
        Self { objective, direction: objective.default_direction() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub population_size: usize,
    pub tournament_size: usize,
    pub evaluation_budget: usize,
    pub seed: u64,
    /// Overrides the space's `max_params` when set.
    pub max_params: Option<u64>,
    pub objectives: Vec<ObjectiveSpec>,
    /// Children generated and evaluated per step.
    pub parallelism: usize,
    /// Forwarded to evaluators as the proxy-training epoch count.
    pub proxy_epochs: u32,
    /// Treat an already evaluated architecture like an invalid one and retry.
    pub reject_duplicates: bool,
    pub assumptions: DeploymentAssumptions,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            tournament_size: 25,
            evaluation_budget: 2000,
            seed: 0,
            max_params: None,
            objectives: Objective::ALL.into_iter().map(ObjectiveSpec::from).collect(),
            parallelism: 1,
            proxy_epochs: 10,
            reject_duplicates: true,
            assumptions: DeploymentAssumptions::default(),
        }
    }
}

impl SearchConfig {
    pub fn check(&self) -> Result<(), SearchError> {
        let fail = |m: &str| Err(SearchError::Config(m.to_string()));
        if self.population_size == 0 || self.tournament_size == 0 {
            return fail("population and tournament sizes must be positive");
        }
        if self.tournament_size > self.population_size {
            return fail("tournament_size exceeds population_size");
        }
        if self.evaluation_budget < self.population_size {
            return fail("evaluation_budget is smaller than population_size");
        }
        if self.objectives.is_empty() {
            return fail("no objectives");
        }
        if self.parallelism == 0 {
            return fail("parallelism must be positive");
        }
        self.assumptions.check().map_err(|e| SearchError::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum CandidateStatus {
    Ok,
    Error(String),
}

impl CandidateStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, CandidateStatus::Ok)
    }

    pub fn label(&self) -> &'static str {
        match self {
            CandidateStatus::Ok => "ok",
            CandidateStatus::Error(_) => "error",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub birth_index: usize,
    pub id: String,
    /// Birth index of the parent; `None` for sampled candidates.
    pub parent: Option<usize>,
    pub genome: Genome,
    pub architecture: ArchitectureDescriptor,
    pub graph: NetworkGraph,
    pub cost: CostReport,
    pub val_accuracy: Option<f64>,
    pub status: CandidateStatus,
    /// Milliseconds since the search started.
    pub elapsed_ms: u64,
}

pub fn candidate_id(birth_index: usize) -> String {
    format!("c{birth_index:06}")
}

impl Candidate {
    pub fn objective(&self, objective: Objective) -> Option<f64> {
        Some(match objective {
            Objective::ValAccuracy => self.val_accuracy?,
            Objective::Params => self.cost.params as f64,
            Objective::Macs => self.cost.macs as f64,
            Objective::RamBytes => self.cost.ram_bytes as f64,
            Objective::LatencyProxy => self.cost.latency_proxy,
        })
    }

    pub fn objectives(&self, specs: &[ObjectiveSpec]) -> Option<Vec<f64>> {
        specs.iter().map(|s| self.objective(s.objective)).collect()
    }
}

/// Append-only log of evaluated candidates, indexed by birth order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchHistory {
    pub candidates: Vec<Candidate>,
    pub objectives: Vec<ObjectiveSpec>,
}

impl SearchHistory {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn ok(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| c.status.is_ok())
    }

    /// Non-dominated successful candidates under `specs`, in birth order.
    pub fn pareto(&self, specs: &[ObjectiveSpec]) -> Vec<&Candidate> {
        let ok: Vec<&Candidate> = self.ok().collect();
        let points: Vec<Vec<f64>> = ok.iter().map(|c| c.objectives(specs).expect("ok candidates are scored")).collect();
        let dirs: Vec<Direction> = specs.iter().map(|s| s.direction).collect();
        pareto_front(&points, &dirs).into_iter().map(|i| ok[i]).collect()
    }

    /// Best successful candidate on a single objective; ties go to the earliest.
    pub fn best(&self, spec: ObjectiveSpec) -> Option<&Candidate> {
        let mut best: Option<(&Candidate, f64)> = None;
        for c in self.ok() {
            let v = c.objective(spec.objective)?;
            let better = match best {
                None => true,
                Some((_, b)) => match spec.direction {
                    Direction::Maximize => v > b,
                    Direction::Minimize => v < b,
                },
            };
            if better {
                best = Some((c, v));
            }
        }
        best.map(|(c, _)| c)
    }
}

struct Prepared {
    genome: Genome,
    architecture: ArchitectureDescriptor,
    graph: NetworkGraph,
    cost: CostReport,
    parent: Option<usize>,
}

struct Engine<'a> {
    space: &'a SearchSpaceConfig,
    config: &'a SearchConfig,
    max_params: u64,
    rng: ChaCha8Rng,
    seen: HashSet<ArchitectureDescriptor>,
}

impl Engine<'_> {
    /// Decodes, validates, lowers and costs a genome; `None` if it is invalid,
    /// over budget or (optionally) a repeat.
    fn prepare(&self, genome: Genome, parent: Option<usize>, allow_repeat: bool) -> Option<Prepared> {
        let architecture = decode(&genome, self.space).ok()?;
        if !allow_repeat && self.config.reject_duplicates && self.seen.contains(&architecture) {
            return None;
        }
        if !validate(&architecture, self.space).valid {
            return None;
        }
        let graph = build_graph(&architecture, self.space).ok()?;
        let cost = estimate(&graph, &self.config.assumptions).ok()?;
        if cost.params > self.max_params {
            return None;
        }
        Some(Prepared { genome, architecture, graph, cost, parent })
    }

    /// Rejection sampling. Repeats are only accepted once no fresh feasible
    /// architecture turned up, so a small space can still be exhausted.
    fn sample_feasible(&mut self) -> Result<Prepared, SearchError> {
        let mut repeat = None;
        for _ in 0..MAX_SAMPLE_ATTEMPTS {
            let genome = sample(self.space, &mut self.rng)?;
            if let Some(p) = self.prepare(genome.clone(), None, false) {
                return Ok(self.remember(p));
            }
            if repeat.is_none() {
                repeat = self.prepare(genome, None, true);
            }
        }
        match repeat {
            Some(p) => Ok(self.remember(p)),
            None => Err(SearchError::Infeasible { attempts: MAX_SAMPLE_ATTEMPTS, max_params: self.max_params }),
        }
    }

    fn remember(&mut self, p: Prepared) -> Prepared {
        self.seen.insert(p.architecture.clone());
        p
    }

    fn child_of(&mut self, parent: &Candidate) -> Result<Prepared, SearchError> {
        for _ in 0..MAX_CHILD_ATTEMPTS {
            let out = mutate(&parent.genome, self.space, &mut self.rng);
            if out.stagnated {
                continue;
            }
            if let Some(p) = self.prepare(out.child, Some(parent.birth_index), false) {
                return Ok(self.remember(p));
            }
        }
        log::debug!("no feasible mutation of {}; resampling", parent.id);
        self.sample_feasible()
    }

    /// Tournament under freshly drawn scalarization weights.
    fn select<'h>(&mut self, history: &'h SearchHistory, population: &VecDeque<usize>) -> &'h Candidate {
        let specs = &self.config.objectives;
        let size = self.config.tournament_size.min(population.len());
        let picks = index::sample(&mut self.rng, population.len(), size);
        let weights = sample_simplex_weights(specs.len(), &mut self.rng);
        let dirs: Vec<Direction> = specs.iter().map(|s| s.direction).collect();
        let norms: Vec<Normalizer> = specs
            .iter()
            .map(|s| {
                Normalizer::fit(history.ok().filter_map(|c| c.objective(s.objective))).expect("population is non-empty")
            })
            .collect();
        let mut members: Vec<usize> = picks.into_iter().map(|i| population[i]).collect();
        members.sort_unstable();
        let mut best: Option<(usize, f64)> = None;
        for b in members {
            let c = &history.candidates[b];
            let values = c.objectives(specs).expect("population members are scored");
            let normalized: Vec<f64> = values.iter().zip(&norms).map(|(&v, n)| n.apply(v)).collect();
            let s = scalarize(&normalized, &weights, &dirs);
            if best.is_none_or(|(_, bs)| s > bs) {
                best = Some((b, s));
            }
        }
        &history.candidates[best.expect("tournament is non-empty").0]
    }
}

/// Aging evolution under a hard parameter budget.
///
/// The population is seeded with feasible random samples, then each step
/// draws a tournament, mutates its scalarized winner and evicts the oldest
/// member. Up to `parallelism` children are generated from the same
/// population state and evaluated as one batch; all RNG use happens before
/// the batch is evaluated, so results do not depend on evaluation order.
/// Failed evaluations consume budget but never join the population.
pub fn run_search(
    space: &SearchSpaceConfig,
    config: &SearchConfig,
    evaluator: &mut dyn Evaluator,
) -> Result<SearchHistory, SearchError> {
    space.check()?;
    config.check()?;
    let mut engine = Engine {
        space,
        config,
        max_params: config.max_params.unwrap_or(space.max_params),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        seen: HashSet::new(),
    };
    let started = Instant::now();
    let mut history = SearchHistory { candidates: Vec::new(), objectives: config.objectives.clone() };
    let mut population: VecDeque<usize> = VecDeque::with_capacity(config.population_size);
    let budget = config.evaluation_budget;

    while history.len() < budget {
        let room = budget - history.len();
        let seeding = population.len() < config.population_size;
        let n = if seeding {
            (config.population_size - population.len()).min(config.parallelism).min(room)
        } else {
            config.parallelism.min(room)
        };
        let mut batch = Vec::with_capacity(n);
        for _ in 0..n {
            let prepared = if seeding {
                engine.sample_feasible()?
            } else {
                let parent = engine.select(&history, &population).clone();
                engine.child_of(&parent)?
            };
            batch.push(prepared);
        }

        let first = history.len();
        let ids: Vec<String> = (first..first + n).map(candidate_id).collect();
        let requests: Vec<EvalRequest<'_>> = batch
            .iter()
            .zip(&ids)
            .map(|(p, id)| EvalRequest { id, graph: &p.graph, cost: &p.cost, epochs: config.proxy_epochs })
            .collect();
        let results = evaluator.evaluate_batch(&requests);
        assert_eq!(results.len(), n, "evaluator returned a misaligned batch");
        drop(requests);

        let elapsed_ms = started.elapsed().as_millis() as u64;
        for ((p, id), result) in batch.into_iter().zip(ids).zip(results) {
            let birth_index = history.len();
            let (val_accuracy, status) = match result {
                Ok(v) => (Some(v), CandidateStatus::Ok),
                Err(msg) => {
                    log::warn!("{id}: evaluation failed: {msg}");
                    (None, CandidateStatus::Error(msg))
                }
            };
            if status.is_ok() {
                population.push_back(birth_index);
                if !seeding {
                    population.pop_front();
                }
            }
            history.candidates.push(Candidate {
                birth_index,
                id,
                parent: p.parent,
                genome: p.genome,
                architecture: p.architecture,
                graph: p.graph,
                cost: p.cost,
                val_accuracy,
                status,
                elapsed_ms,
            });
        }
        if !seeding {
            log::debug!("{} / {budget} evaluated", history.len());
        }
    }
    log::info!("search finished: {} candidates, {} ok", history.len(), history.ok().count());
    Ok(history)
}
