//! Linearized execution traces: the recorded instructions of one run of a
//! probabilistic schedule, with their sampling decisions.

mod mutate;
mod replay;

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use mutate::{mutate, Mutation};
pub use mutate::decision_domain;
pub use replay::{decision_log_prior, replay, trace_prior, validate_trace, ReplayError, ReplayMode, Unvalidated, Validation};

/// Identifier of a value produced by an instruction.
pub type RefId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Op {
    GetBlocks,
    GetLoops,
    Split,
    Fuse,
    Reorder,
    ComputeAt,
    Inline,
    Parallel,
    Vectorize,
    Unroll,
    Tensorize,
    SamplePerfectTile,
    SampleCategorical,
    SampleComputeLocation,
}

impl Op {
    pub fn is_sampling(self) -> bool {
        matches!(self, Op::SamplePerfectTile | Op::SampleCategorical | Op::SampleComputeLocation)
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::GetBlocks => "get_blocks",
            Op::GetLoops => "get_loops",
            Op::Split => "split",
            Op::Fuse => "fuse",
            Op::Reorder => "reorder",
            Op::ComputeAt => "compute_at",
            Op::Inline => "inline",
            Op::Parallel => "parallel",
            Op::Vectorize => "vectorize",
            Op::Unroll => "unroll",
            Op::Tensorize => "tensorize",
            Op::SamplePerfectTile => "sample_perfect_tile",
            Op::SampleCategorical => "sample_categorical",
            Op::SampleComputeLocation => "sample_compute_location",
        }
    }
}

/// Instruction operand: an earlier output, a literal, or an inferred split
/// factor.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Input {
    Ref(RefId),
    Int(i64),
    Infer,
}

/// Static instruction argument.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attr {
    Int(i64),
    Ints(Vec<i64>),
    Floats(Vec<f64>),
    Str(String),
}

/// Where a block's computation goes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    Root,
    Inline,
    /// Index into the counterpart block's loops, outermost first.
    Loop(usize),
}

/// Recorded outcome of a sampling instruction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// Ordered factors; their product is the sampled loop's extent, so the
    /// domain can be recovered from the decision alone.
    Tile { factors: Vec<i64> },
    /// Index into the instruction's candidate list.
    Categorical { index: usize },
    Location { chosen: Location, domain: Vec<Location> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub op: Op,
    #[serde(default)]
    pub inputs: Vec<Input>,
    #[serde(default)]
    pub attrs: Vec<Attr>,
    #[serde(default)]
    pub outputs: Vec<RefId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
}

impl Instruction {
    /// Candidates and weights of a `sample_categorical`.
    pub fn categorical(&self) -> Option<(&[i64], &[f64])> {
        match (self.op, self.attrs.first(), self.attrs.get(1)) {
            (Op::SampleCategorical, Some(Attr::Ints(c)), Some(Attr::Floats(w))) => Some((c, w)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub instructions: Vec<Instruction>,
    /// Log prior probability, present once the trace has been validated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Decisions of the sampling instructions, in order.
    pub fn decisions(&self) -> Vec<&Decision> {
        self.instructions.iter().filter_map(|i| i.decision.as_ref()).collect()
    }

    /// Instruction-wise equality, ignoring the cached prior.
    pub fn same_instructions(&self, other: &Trace) -> bool {
        self.instructions == other.instructions
    }
}

/// Ordered `n`-tuples of positive integers whose product is `extent`, in
/// lexicographic order.
pub fn perfect_tiles(extent: i64, n: usize) -> Vec<Vec<i64>> {
    fn go(rest: i64, n: usize, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if n == 1 {
            cur.push(rest);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for d in 1..=rest {
            if rest % d == 0 {
                cur.push(d);
                go(rest / d, n - 1, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    if extent >= 1 && n >= 1 {
        go(extent, n, &mut Vec::with_capacity(n), &mut out);
    }
    out
}
