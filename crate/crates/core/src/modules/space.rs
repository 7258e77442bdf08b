use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{apply_everywhere, TransformationModule};
use crate::ir::{structural_hash, TensorProgram};
use crate::schedule::{Decider, Result, Schedule};
use crate::trace::{validate_trace, Trace, Validation};

/// Runs a generator once on a fresh schedule of `e0`.
pub fn generate(
    e0: &TensorProgram,
    generator: &dyn TransformationModule,
    decider: Decider,
) -> Result<(TensorProgram, Trace, Decider)> {
    let mut s = Schedule::new(e0.clone(), decider);
    apply_everywhere(generator, &mut s)?;
    Ok(s.into_parts())
}

/// One point of a design space.
#[derive(Clone, Debug)]
pub struct Sample {
    pub trace: Trace,
    pub program: TensorProgram,
    pub hash: u64,
}

impl Sample {
    pub fn new(trace: Trace, program: TensorProgram) -> Self {
        let hash = structural_hash(&program);
        Sample { trace, program, hash }
    }
}

/// Distinct programs drawn from a generator, with validated traces.
#[derive(Clone, Debug)]
pub struct DesignSpace {
    pub workload: TensorProgram,
    pub samples: Vec<Sample>,
}

/// Runs the generator `k` times with independent random decisions and keeps
/// one validated trace per distinct final program.
pub fn generate_space(e0: &TensorProgram, generator: &dyn TransformationModule, k: usize, seed: u64) -> DesignSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut samples = Vec::new();
    for _ in 0..k {
        let Ok((_, trace, _)) = generate(e0, generator, Decider::random(rng.gen())) else { continue };
        if let Validation::Accepted { program, trace } = validate_trace(e0, &trace) {
            let sample = Sample::new(trace, program);
            if seen.insert(sample.hash) {
                samples.push(sample);
            }
        }
    }
    DesignSpace { workload: e0.clone(), samples }
}

/// Result of [`enumerate_space`].
#[derive(Clone, Debug)]
pub struct Enumeration {
    pub samples: Vec<Sample>,
    /// True when enumeration stopped at the cap.
    pub capped: bool,
    /// Decision combinations visited.
    pub visited: usize,
}

/// Depth-first enumeration over every combination of decisions (domains
/// recomputed along each path), keeping one trace per distinct program.
pub fn enumerate_space(e0: &TensorProgram, generator: &dyn TransformationModule, cap: usize) -> Enumeration {
    let mut seen = BTreeSet::new();
    let mut samples = Vec::new();
    let mut choices: Vec<usize> = Vec::new();
    let mut visited = 0;
    loop {
        visited += 1;
        let mut s = Schedule::new(e0.clone(), Decider::enumerate(choices.clone()));
        let ok = apply_everywhere(generator, &mut s).is_ok();
        let (program, trace, decider) = s.into_parts();
        let Decider::Enumerate { domains, .. } = decider else { unreachable!("decider kind is preserved") };
        if ok {
            let sample = Sample::new(trace, program);
            if seen.insert(sample.hash) {
                samples.push(sample);
            }
        }
        if samples.len() >= cap {
            return Enumeration { samples, capped: true, visited };
        }
        choices.resize(domains.len(), 0);
        let Some(p) = (0..domains.len()).rev().find(|&p| choices[p] + 1 < domains[p]) else {
            return Enumeration { samples, capped: false, visited };
        };
        choices.truncate(p + 1);
        choices[p] += 1;
    }
}
