use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{perfect_tiles, Attr, Decision, Input, Instruction, Op, RefId, Trace};
use crate::ir::TensorProgram;
use crate::schedule::{BlockRef, Decider, Factor, LoopRef, RvRef, Schedule, ScheduleError};

/// How sampling instructions are re-decided during replay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReplayMode {
    /// Reuse each recorded decision; it must lie in the recomputed domain.
    Follow,
    /// Draw fresh decisions from the recomputed domains.
    Resample(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("instruction {index} ({op}): {error}")]
pub struct ReplayError {
    pub index: usize,
    pub op: &'static str,
    pub error: ScheduleError,
}

/// Outcome of [`validate_trace`].
#[derive(Clone, Debug)]
pub enum Validation {
    Accepted { program: TensorProgram, trace: Trace },
    Rejected { index: usize, reason: String },
}

impl Validation {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Validation::Accepted { .. })
    }
}

fn bad(msg: String) -> ScheduleError {
    ScheduleError::InvalidArgument(msg)
}

struct Replayer {
    s: Schedule,
    map: BTreeMap<RefId, RefId>,
    follow: bool,
}

impl Replayer {
    fn get(&self, id: RefId) -> Result<RefId, ScheduleError> {
        self.map.get(&id).copied().ok_or(ScheduleError::UnknownRef(id))
    }

    fn input_ref(&self, inst: &Instruction, i: usize) -> Result<RefId, ScheduleError> {
        match inst.inputs.get(i) {
            Some(Input::Ref(id)) => self.get(*id),
            other => Err(bad(format!("expected a reference as input {i}, found {other:?}"))),
        }
    }

    fn loops(&self, inst: &Instruction) -> Result<Vec<LoopRef>, ScheduleError> {
        (0..inst.inputs.len()).map(|i| self.input_ref(inst, i).map(LoopRef)).collect()
    }

    fn bind(&mut self, inst: &Instruction, outs: &[RefId]) -> Result<(), ScheduleError> {
        if outs.len() != inst.outputs.len() {
            return Err(bad(format!("produced {} results, trace records {}", outs.len(), inst.outputs.len())));
        }
        for (old, new) in inst.outputs.iter().zip(outs) {
            self.map.insert(*old, *new);
        }
        Ok(())
    }

    fn force(&mut self, inst: &Instruction) -> Result<(), ScheduleError> {
        if self.follow {
            let d = inst.decision.clone().ok_or_else(|| bad("sampling instruction without a decision".into()))?;
            *self.s.decider_mut() = Decider::Forced(Some(d));
        }
        Ok(())
    }

    fn step(&mut self, inst: &Instruction) -> Result<(), ScheduleError> {
        if !inst.op.is_sampling() && inst.decision.is_some() {
            return Err(bad("decision on a non-sampling instruction".into()));
        }
        let outs: Vec<RefId> = match inst.op {
            Op::GetBlocks => self.s.get_blocks().into_iter().map(|b| b.0).collect(),
            Op::GetLoops => {
                let b = BlockRef(self.input_ref(inst, 0)?);
                self.s.get_loops(b)?.into_iter().map(|l| l.0).collect()
            }
            Op::Split => {
                let l = LoopRef(self.input_ref(inst, 0)?);
                let factors = inst.inputs[1..]
                    .iter()
                    .map(|i| match i {
                        Input::Ref(id) => self.get(*id).map(|r| Factor::Rv(RvRef(r))),
                        Input::Int(v) => Ok(Factor::Int(*v)),
                        Input::Infer => Ok(Factor::Infer),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                self.s.split(l, &factors)?.into_iter().map(|l| l.0).collect()
            }
            Op::Fuse => {
                let loops = self.loops(inst)?;
                alloc::vec![self.s.fuse(&loops)?.0]
            }
            Op::Reorder => {
                let loops = self.loops(inst)?;
                self.s.reorder(&loops)?;
                Vec::new()
            }
            Op::ComputeAt => {
                let b = BlockRef(self.input_ref(inst, 0)?);
                let target = self.s.target_of(self.input_ref(inst, 1)?)?;
                self.s.compute_at(b, target)?;
                Vec::new()
            }
            Op::Inline => {
                self.s.inline(BlockRef(self.input_ref(inst, 0)?))?;
                Vec::new()
            }
            Op::Parallel => {
                self.s.parallel(LoopRef(self.input_ref(inst, 0)?))?;
                Vec::new()
            }
            Op::Vectorize => {
                self.s.vectorize(LoopRef(self.input_ref(inst, 0)?))?;
                Vec::new()
            }
            Op::Unroll => {
                let l = LoopRef(self.input_ref(inst, 0)?);
                let bound = if inst.inputs.len() > 1 { Some(RvRef(self.input_ref(inst, 1)?)) } else { None };
                self.s.unroll(l, bound)?;
                Vec::new()
            }
            Op::Tensorize => {
                let l = LoopRef(self.input_ref(inst, 0)?);
                let Some(Attr::Str(name)) = inst.attrs.first() else {
                    return Err(bad("tensorize needs an intrinsic name".into()));
                };
                self.s.tensorize(l, name)?;
                Vec::new()
            }
            Op::SamplePerfectTile => {
                let l = LoopRef(self.input_ref(inst, 0)?);
                let Some(Attr::Int(n)) = inst.attrs.first() else {
                    return Err(bad("sample_perfect_tile needs a tile count".into()));
                };
                if *n < 1 || *n > 16 {
                    return Err(bad(format!("tile count {n} out of range")));
                }
                self.force(inst)?;
                self.s.sample_perfect_tile(l, *n as usize)?.into_iter().map(|r| r.0).collect()
            }
            Op::SampleCategorical => {
                let (c, w) = inst.categorical().ok_or_else(|| bad("sample_categorical needs candidates and weights".into()))?;
                self.force(inst)?;
                alloc::vec![self.s.sample_categorical(c, w)?.0]
            }
            Op::SampleComputeLocation => {
                let b = BlockRef(self.input_ref(inst, 0)?);
                self.force(inst)?;
                alloc::vec![self.s.sample_compute_location(b)?.0]
            }
        };
        self.bind(inst, &outs)
    }
}

/// Re-executes a trace on `e0`. Returns the final program and the trace as
/// re-recorded (with re-decided values in resample mode and the recomputed
/// prior).
pub fn replay(e0: &TensorProgram, t: &Trace, mode: ReplayMode) -> Result<(TensorProgram, Trace), ReplayError> {
    let decider = match mode {
        ReplayMode::Follow => Decider::Forced(None),
        ReplayMode::Resample(seed) => Decider::random(seed),
    };
    let mut r = Replayer { s: Schedule::new(e0.clone(), decider), map: BTreeMap::new(), follow: mode == ReplayMode::Follow };
    for (index, inst) in t.instructions.iter().enumerate() {
        r.step(inst).map_err(|error| ReplayError { index, op: inst.op.name(), error })?;
    }
    let (program, trace, _) = r.s.into_parts();
    Ok((program, trace))
}

/// Replays with recorded decisions; accepted iff every primitive
/// precondition holds and every decision lies in its recomputed domain.
pub fn validate_trace(e0: &TensorProgram, t: &Trace) -> Validation {
    match replay(e0, t, ReplayMode::Follow) {
        Ok((program, trace)) => Validation::Accepted { program, trace },
        Err(e) => Validation::Rejected { index: e.index, reason: e.to_string() },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("trace has not been validated")]
pub struct Unvalidated;

/// Log prior of a validated trace.
pub fn trace_prior(t: &Trace) -> Result<f64, Unvalidated> {
    t.prior.ok_or(Unvalidated)
}

/// Log prior recomputed from the recorded decisions alone.
pub fn decision_log_prior(t: &Trace) -> f64 {
    let mut lp = 0.0;
    for inst in &t.instructions {
        match (&inst.decision, inst.categorical()) {
            (Some(Decision::Tile { factors }), _) => {
                let extent = factors.iter().product();
                lp -= libm::log(perfect_tiles(extent, factors.len()).len() as f64);
            }
            (Some(Decision::Categorical { index }), Some((_, w))) => {
                let total: f64 = w.iter().sum();
                lp += libm::log(w.get(*index).copied().unwrap_or(0.0) / total);
            }
            (Some(Decision::Location { domain, .. }), _) => lp -= libm::log(domain.len() as f64),
            _ => {}
        }
    }
    lp
}
