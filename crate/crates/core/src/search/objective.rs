use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    ValAccuracy,
    Params,
    Macs,
    RamBytes,
    LatencyProxy,
}

impl Objective {
    pub const ALL: [Objective; 5] =
        [Objective::ValAccuracy, Objective::Params, Objective::Macs, Objective::RamBytes, Objective::LatencyProxy];

    pub fn default_direction(self) -> Direction {
        match self {
            Objective::ValAccuracy => Direction::Maximize,
            _ => Direction::Minimize,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::ValAccuracy => "val_accuracy",
            Objective::Params => "params",
            Objective::Macs => "macs",
            Objective::RamBytes => "ram",
            Objective::LatencyProxy => "latency_proxy",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "val_accuracy" | "accuracy" => Ok(Objective::ValAccuracy),
            "params" => Ok(Objective::Params),
            "macs" => Ok(Objective::Macs),
            "ram" | "ram_bytes" => Ok(Objective::RamBytes),
            "latency_proxy" | "latency" => Ok(Objective::LatencyProxy),
            _ => Err(format!("unknown objective {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

/// Min-max scaling over observed values of one objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizer {
    pub min: f64,
    pub max: f64,
}

impl Normalizer {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        values.into_iter().fold(None, |acc, v| match acc {
            None => Some(Self { min: v, max: v }),
            Some(n) => Some(Self { min: n.min.min(v), max: n.max.max(v) }),
        })
    }

    /// Maps into `[0, 1]`; a degenerate range maps everything to 0.5.
    pub fn apply(&self, v: f64) -> f64 {
        if self.max > self.min {
            ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }
}

/// Weighted sum of direction-adjusted normalized objectives.
///
/// Minimized objectives enter as `1 - x`, so every term rewards the better
/// end of its range and scores lie in `[0, 1]`.
pub fn scalarize(normalized: &[f64], weights: &[f64], directions: &[Direction]) -> f64 {
    debug_assert_eq!(normalized.len(), weights.len());
    debug_assert_eq!(normalized.len(), directions.len());
    normalized
        .iter()
        .zip(weights)
        .zip(directions)
        .map(|((&x, &w), d)| match d {
            Direction::Maximize => w * x,
            Direction::Minimize => w * (1.0 - x),
        })
        .sum()
}

/// Uniform draw from the probability simplex (normalized exponentials).
pub fn sample_simplex_weights<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = e.iter().sum();
    if sum > 0.0 {
        e.iter().map(|v| v / sum).collect()
    } else {
        vec![1.0 / k as f64; k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn accuracy_versus_params_example() {
        let dirs = [Direction::Maximize, Direction::Minimize];
        let w = [0.5, 0.5];
        assert_eq!(scalarize(&[0.0, 1.0], &w, &dirs), 0.0);
        assert_eq!(scalarize(&[1.0, 0.0], &w, &dirs), 1.0);
    }

    #[test]
    fn degenerate_range_is_half() {
        let n = Normalizer::fit([3.0, 3.0]).unwrap();
        assert_eq!(n.apply(3.0), 0.5);
        assert!(Normalizer::fit(std::iter::empty()).is_none());
    }

    #[test]
    fn simplex_weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in 1..6 {
            let w = sample_simplex_weights(k, &mut rng);
            assert_eq!(w.len(), k);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn objective_names_parse() {
        for o in Objective::ALL {
            assert_eq!(o.name().parse::<Objective>().unwrap(), o);
        }
    }
}
