use rand::Rng;

use super::config::SearchSpaceConfig;
use super::genome::{decode, gene_cardinalities, Genome};
use super::validate::validate;

/// Attempts before [`mutate`] gives up and returns the parent.
pub const MAX_MUTATION_ATTEMPTS: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MutationOutcome {
    pub child: Genome,
    /// Set when no valid child was found; `child` is then the parent.
    pub stagnated: bool,
    pub attempts: usize,
}

/// Resamples exactly one gene, excluding its current value, until the child
/// decodes to a valid architecture.
///
/// Only genes whose domain has at least two values are eligible, so every
/// non-stagnant child is at Hamming distance one from its parent.
pub fn mutate<R: Rng + ?Sized>(genome: &Genome, config: &SearchSpaceConfig, rng: &mut R) -> MutationOutcome {
    let cards = gene_cardinalities(config);
    let eligible: Vec<usize> = (0..genome.len().min(cards.len())).filter(|&i| cards[i] >= 2).collect();
    let stagnant = |attempts| MutationOutcome { child: genome.clone(), stagnated: true, attempts };
    if eligible.is_empty() {
        return stagnant(0);
    }
    for attempt in 1..=MAX_MUTATION_ATTEMPTS {
        let gene = eligible[rng.gen_range(0..eligible.len())];
        let current = genome.0[gene];
        // uniform over the domain minus the current index
        let mut value = rng.gen_range(0..cards[gene] - 1);
        if value >= current {
            value += 1;
        }
        let mut child = genome.clone();
        child.0[gene] = value;
        let ok = decode(&child, config).map(|arch| validate(&arch, config).valid).unwrap_or(false);
        if ok {
            return MutationOutcome { child, stagnated: false, attempts: attempt };
        }
    }
    stagnant(MAX_MUTATION_ATTEMPTS)
}
