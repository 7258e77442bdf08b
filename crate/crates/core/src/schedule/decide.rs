use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Result, ScheduleError};
use crate::trace::Decision;

/// Source of sampling decisions.
#[derive(Clone, Debug)]
pub enum Decider {
    /// Draws from the sampling distribution.
    Random(ChaCha8Rng),
    /// Uses the given decision for the next sampling call; it must lie in the
    /// freshly computed domain.
    Forced(Option<Decision>),
    /// Reuses `prefix` decisions while they stay in-domain; after the first
    /// one that does not, every later decision is drawn at random.
    Guided { prefix: Vec<Decision>, pos: usize, diverged: bool, rng: ChaCha8Rng },
    /// Picks `choices[pos]` (0 past the end) and records each domain size;
    /// drives depth-first enumeration.
    Enumerate { choices: Vec<usize>, pos: usize, domains: Vec<usize> },
}

impl Decider {
    pub fn random(seed: u64) -> Self {
        Decider::Random(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn guided(prefix: Vec<Decision>, seed: u64) -> Self {
        Decider::Guided { prefix, pos: 0, diverged: false, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn enumerate(choices: Vec<usize>) -> Self {
        Decider::Enumerate { choices, pos: 0, domains: Vec::new() }
    }

    fn draw(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut x = rng.gen::<f64>() * total;
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return i;
            }
            x -= w;
        }
        weights.len() - 1
    }

    /// Chooses an index into `domain` (non-empty, with positive weights).
    pub(crate) fn choose(&mut self, domain: &[Decision], weights: &[f64]) -> Result<usize> {
        debug_assert!(!domain.is_empty() && domain.len() == weights.len());
        match self {
            Decider::Random(rng) => Ok(Self::draw(rng, weights)),
            Decider::Forced(slot) => {
                let d = slot
                    .take()
                    .ok_or_else(|| ScheduleError::OutOfDomain("no recorded decision supplied".into()))?;
                domain
                    .iter()
                    .position(|x| same_choice(x, &d))
                    .ok_or_else(|| ScheduleError::OutOfDomain(format!("{d:?} not among {} candidates", domain.len())))
            }
            Decider::Guided { prefix, pos, diverged, rng } => {
                let hint = if *diverged { None } else { prefix.get(*pos) };
                *pos += 1;
                match hint.and_then(|d| domain.iter().position(|x| same_choice(x, d))) {
                    Some(i) => Ok(i),
                    None => {
                        *diverged = true;
                        Ok(Self::draw(rng, weights))
                    }
                }
            }
            Decider::Enumerate { choices, pos, domains } => {
                let i = choices.get(*pos).copied().unwrap_or(0).min(domain.len() - 1);
                *pos += 1;
                domains.push(domain.len());
                Ok(i)
            }
        }
    }
}

/// Location decisions compare by the chosen location only: the recorded
/// domain is metadata, recomputed on replay.
fn same_choice(a: &Decision, b: &Decision) -> bool {
    match (a, b) {
        (Decision::Location { chosen: x, .. }, Decision::Location { chosen: y, .. }) => x == y,
        _ => a == b,
    }
}
