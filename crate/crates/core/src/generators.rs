//! Seeded random congestion games.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{CongestionGame, LatencyFunction, Mode};
use crate::rational::int;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    Invalid(String),
}

/// Parameters of a random instance family. Ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSpec {
    pub seed: u64,
    pub players: usize,
    pub resources: usize,
    pub strategies: (usize, usize),
    pub strategy_size: (usize, usize),
    pub degree: usize,
    pub coeffs: (u64, u64),
    #[serde(default)]
    pub symmetric: bool,
}

impl GenSpec {
    /// Linear latencies `a x + b` with `a, b` in `0..=9`, 1 to 3 strategies
    /// of 1 to 3 resources each.
    pub fn linear(seed: u64, players: usize, resources: usize) -> Self {
        Self {
            seed,
            players,
            resources,
            strategies: (1, 3),
            strategy_size: (1, 3.min(resources)),
            degree: 1,
            coeffs: (0, 9),
            symmetric: false,
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Invalid(m.to_string()));
        if self.players == 0 || self.resources == 0 {
            return bad("players and resources must be at least 1");
        }
        let (s_lo, s_hi) = self.strategies;
        if s_lo == 0 || s_lo > s_hi {
            return bad("strategies range must satisfy 1 <= min <= max");
        }
        let (z_lo, z_hi) = self.strategy_size;
        if z_lo == 0 || z_lo > z_hi {
            return bad("strategy size range must satisfy 1 <= min <= max");
        }
        if z_hi > self.resources {
            return Err(GenError::Invalid(format!("strategy size {z_hi} exceeds resource count {}", self.resources)));
        }
        if self.coeffs.0 > self.coeffs.1 {
            return bad("coefficient range must satisfy min <= max");
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, GenError> {
        serde_json::from_str(text).map_err(|e| GenError::Invalid(e.to_string()))
    }
}

/// Draws a strategy list of distinct subsets. Duplicates are redrawn up to a
/// retry cap, so small resource pools may yield fewer strategies than asked.
fn strategy_set(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let want = rng.gen_range(spec.strategies.0..=spec.strategies.1);
    let mut out: Vec<Vec<usize>> = Vec::with_capacity(want);
    let mut attempts = 0;
    while out.len() < want && attempts < 64 * want {
        attempts += 1;
        let size = rng.gen_range(spec.strategy_size.0..=spec.strategy_size.1);
        let mut s = sample(rng, spec.resources, size).into_vec();
        s.sort_unstable();
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

pub fn generate(spec: &GenSpec) -> Result<CongestionGame, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let latencies = (0..spec.resources)
        .map(|_| {
            let coeffs = (0..=spec.degree).map(|_| int(rng.gen_range(spec.coeffs.0..=spec.coeffs.1) as i64)).collect();
            LatencyFunction::new(coeffs)
        })
        .collect();
    let players = if spec.symmetric {
        let shared = strategy_set(spec, &mut rng);
        vec![shared; spec.players]
    } else {
        (0..spec.players).map(|_| strategy_set(spec, &mut rng)).collect()
    };
    CongestionGame::new(Mode::Standard, latencies, players).map_err(|e| GenError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::State;
    use crate::verify::{approximation_factor, Factor};

    #[test]
    fn deterministic_in_seed() {
        let spec = GenSpec::linear(7, 4, 6);
        assert_eq!(generate(&spec).unwrap().to_json(), generate(&spec).unwrap().to_json());
        let other = GenSpec { seed: 8, ..spec };
        assert_ne!(generate(&other).unwrap().to_json(), generate(&GenSpec::linear(7, 4, 6)).unwrap().to_json());
    }

    #[test]
    fn symmetric_players_share_strategies() {
        let spec = GenSpec { symmetric: true, ..GenSpec::linear(3, 5, 6) };
        let g = generate(&spec).unwrap();
        assert!((1..5).all(|u| g.strategies(u) == g.strategies(0)));
    }

    #[test]
    fn zero_coefficients_make_everything_an_equilibrium() {
        let spec = GenSpec { coeffs: (0, 0), ..GenSpec::linear(1, 3, 4) };
        let g = generate(&spec).unwrap();
        for i in 0..g.state_count() {
            let mut idx = i;
            let choice = (0..3)
                .rev()
                .map(|u| {
                    let r = g.strategies(u).len() as u128;
                    let c = (idx % r) as usize;
                    idx /= r;
                    c
                })
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect();
            assert_eq!(approximation_factor(&g, &State::new(choice)).rho, Factor::one());
        }
    }

    #[test]
    fn rejects_oversized_strategies() {
        let spec = GenSpec { strategy_size: (1, 5), ..GenSpec::linear(1, 2, 4) };
        assert!(generate(&spec).is_err());
        assert!(generate(&GenSpec { players: 0, ..GenSpec::linear(1, 2, 4) }).is_err());
    }

    #[test]
    fn strategies_are_distinct_and_degree_respected() {
        for seed in 0..50 {
            let spec = GenSpec { degree: 2, ..GenSpec::linear(seed, 4, 5) };
            let g = generate(&spec).unwrap();
            assert!(g.degree() <= 2);
            for u in 0..4 {
                let s = g.strategies(u);
                assert!(!s.is_empty());
                for i in 0..s.len() {
                    for j in i + 1..s.len() {
                        assert_ne!(s[i], s[j]);
                    }
                }
            }
        }
    }
}
