use alloc::vec::Vec;

use rand::Rng;

use super::{perfect_tiles, Decision, Instruction, Trace};

/// Result of [`mutate`].
#[derive(Clone, Debug)]
pub struct Mutation {
    pub trace: Trace,
    /// False when no sampling instruction had a non-singleton domain.
    pub mutated: bool,
    /// Index of the mutated instruction.
    pub index: Option<usize>,
}

/// Every decision the instruction could have recorded, as far as the trace
/// alone can tell.
pub fn decision_domain(inst: &Instruction) -> Vec<Decision> {
    match &inst.decision {
        Some(Decision::Tile { factors }) => perfect_tiles(factors.iter().product(), factors.len())
            .into_iter()
            .map(|factors| Decision::Tile { factors })
            .collect(),
        Some(Decision::Categorical { .. }) => inst
            .categorical()
            .map(|(_, w)| {
                (0..w.len()).filter(|&i| w[i] > 0.0).map(|index| Decision::Categorical { index }).collect()
            })
            .unwrap_or_default(),
        Some(Decision::Location { domain, .. }) => domain
            .iter()
            .map(|&chosen| Decision::Location { chosen, domain: domain.clone() })
            .collect(),
        None => Vec::new(),
    }
}

/// Replaces one uniformly chosen decision (among instructions with more than
/// one option) by a different value drawn uniformly from its domain. The
/// result must be validated before use.
pub fn mutate<R: Rng + ?Sized>(t: &Trace, rng: &mut R) -> Mutation {
    let candidates: Vec<(usize, Vec<Decision>)> = t
        .instructions
        .iter()
        .enumerate()
        .filter_map(|(i, inst)| {
            let dom = decision_domain(inst);
            (dom.len() > 1).then_some((i, dom))
        })
        .collect();
    if candidates.is_empty() {
        return Mutation { trace: t.clone(), mutated: false, index: None };
    }
    let (index, domain) = &candidates[rng.gen_range(0..candidates.len())];
    let current = t.instructions[*index].decision.as_ref().expect("sampling instruction");
    let others: Vec<&Decision> = domain.iter().filter(|d| *d != current).collect();
    let choice = others[rng.gen_range(0..others.len())].clone();
    let mut trace = Trace { instructions: t.instructions.clone(), prior: None };
    trace.instructions[*index].decision = Some(choice);
    Mutation { trace, mutated: true, index: Some(*index) }
}
