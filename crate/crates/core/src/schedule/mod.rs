//! Schedule state and the traced transformation and sampling primitives.
//!
//! Every primitive is atomic: it either commits a new, validated program and
//! appends one instruction to the trace, or fails and leaves the state
//! untouched.

mod compute_at;
mod decide;
mod loops;
mod sampling;
mod tensorize;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::ir::{validate_ir, Loop, NodePath, Stmt, TensorProgram};
use crate::trace::{Attr, Decision, Input, Instruction, Location, Op, RefId, Trace};

pub use compute_at::{counterpart, is_eligible, Counterpart};
pub use loops::MAX_UNROLL;
pub(crate) use tensorize::match_mma4;
pub use decide::Decider;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("dead handle: {0}")]
    DeadHandle(String),
    #[error("reference {0} has the wrong kind (expected {1})")]
    WrongKind(RefId, &'static str),
    #[error("unknown reference {0}")]
    UnknownRef(RefId),
    #[error("product mismatch: factors multiply to {product}, loop extent is {extent}")]
    ProductMismatch { product: i64, extent: i64 },
    #[error("not a perfect nest: {0}")]
    NotPerfectNest(String),
    #[error("{0}")]
    Illegal(String),
    #[error("pattern mismatch: {0}")]
    PatternMismatch(String),
    #[error("decision out of domain: {0}")]
    OutOfDomain(String),
    #[error("block not eligible: {0}")]
    NotEligible(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("transformation produced invalid IR: {0}")]
    InvalidResult(String),
}

pub type Result<T> = core::result::Result<T, ScheduleError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockRef(pub RefId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LoopRef(pub RefId);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RvRef(pub RefId);

/// A split factor: a literal, a sampled value, or inferred from the extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Factor {
    Int(i64),
    Rv(RvRef),
    Infer,
}

impl From<i64> for Factor {
    fn from(v: i64) -> Self {
        Factor::Int(v)
    }
}

impl From<RvRef> for Factor {
    fn from(v: RvRef) -> Self {
        Factor::Rv(v)
    }
}

/// Sampled value bound to a random-variable reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Location(Location),
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum RefValue {
    Block(String),
    Loop(String),
    Value(Value),
}

/// Target of [`Schedule::compute_at`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Loop(LoopRef),
    Location(RvRef),
}

#[derive(Clone, Debug)]
pub struct Schedule {
    program: TensorProgram,
    instructions: Vec<Instruction>,
    refs: Vec<RefValue>,
    decider: Decider,
    next_var: u64,
    log_prior: f64,
}

impl Schedule {
    pub fn new(program: TensorProgram, decider: Decider) -> Self {
        Schedule { program, instructions: Vec::new(), refs: Vec::new(), decider, next_var: 0, log_prior: 0.0 }
    }

    /// A schedule whose sampling draws from a seeded generator.
    pub fn seeded(program: TensorProgram, seed: u64) -> Self {
        Self::new(program, Decider::random(seed))
    }

    pub fn program(&self) -> &TensorProgram {
        &self.program
    }

    pub fn trace(&self) -> Trace {
        Trace { instructions: self.instructions.clone(), prior: Some(self.log_prior) }
    }

    pub fn instructions(&self) -> &[Instruction] {
        &self.instructions
    }

    pub fn log_prior(&self) -> f64 {
        self.log_prior
    }

    pub fn decider(&self) -> &Decider {
        &self.decider
    }

    pub fn decider_mut(&mut self) -> &mut Decider {
        &mut self.decider
    }

    pub fn into_parts(self) -> (TensorProgram, Trace, Decider) {
        let trace = Trace { instructions: self.instructions, prior: Some(self.log_prior) };
        (self.program, trace, self.decider)
    }

    // ---- references -------------------------------------------------------

    fn new_ref(&mut self, v: RefValue) -> RefId {
        self.refs.push(v);
        (self.refs.len() - 1) as RefId
    }

    fn ref_value(&self, id: RefId) -> Result<&RefValue> {
        self.refs.get(id as usize).ok_or(ScheduleError::UnknownRef(id))
    }

    /// Name of a live block.
    pub fn block_name(&self, b: BlockRef) -> Result<&str> {
        match self.ref_value(b.0)? {
            RefValue::Block(name) => {
                if self.program.block_path(name).is_some() {
                    Ok(name)
                } else {
                    Err(ScheduleError::DeadHandle(format!("block `{name}` no longer exists")))
                }
            }
            _ => Err(ScheduleError::WrongKind(b.0, "block")),
        }
    }

    /// Variable of a live loop.
    pub fn loop_var(&self, l: LoopRef) -> Result<&str> {
        match self.ref_value(l.0)? {
            RefValue::Loop(var) => {
                if self.program.loop_path(var).is_some() {
                    Ok(var)
                } else {
                    Err(ScheduleError::DeadHandle(format!("loop `{var}` was consumed by an earlier transformation")))
                }
            }
            _ => Err(ScheduleError::WrongKind(l.0, "loop")),
        }
    }

    pub fn loop_of(&self, l: LoopRef) -> Result<&Loop> {
        let var = self.loop_var(l)?;
        Ok(self.program.find_loop(var).expect("live loop"))
    }

    pub fn block_path(&self, b: BlockRef) -> Result<NodePath> {
        let name = self.block_name(b)?;
        Ok(self.program.block_path(name).expect("live block"))
    }

    /// Value of a random variable (an untraced read for host control flow).
    pub fn value(&self, rv: RvRef) -> Result<Value> {
        match self.ref_value(rv.0)? {
            RefValue::Value(v) => Ok(*v),
            _ => Err(ScheduleError::WrongKind(rv.0, "random variable")),
        }
    }

    pub fn int_value(&self, rv: RvRef) -> Result<i64> {
        match self.value(rv)? {
            Value::Int(v) => Ok(v),
            Value::Location(_) => Err(ScheduleError::WrongKind(rv.0, "integer random variable")),
        }
    }

    /// Looks a block up by name without tracing (for module analysis).
    pub fn block_stmt(&self, b: BlockRef) -> Result<&Stmt> {
        let path = self.block_path(b)?;
        Ok(self.program.stmt(&path).expect("live block"))
    }

    /// Loops enclosing a block, outermost first (untraced).
    pub fn enclosing_loops(&self, b: BlockRef) -> Result<Vec<&Loop>> {
        let path = self.block_path(b)?;
        Ok(self.program.enclosing_loops(&path))
    }

    // ---- commit helpers ----------------------------------------------------

    fn check(p: &TensorProgram) -> Result<()> {
        validate_ir(p).map_err(|d| {
            ScheduleError::InvalidResult(d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; "))
        })
    }

    /// Validates and installs a transformed program.
    fn commit(&mut self, p: TensorProgram) -> Result<()> {
        Self::check(&p)?;
        self.program = p;
        Ok(())
    }

    fn record(&mut self, op: Op, inputs: Vec<Input>, attrs: Vec<Attr>, outputs: Vec<RefId>, decision: Option<Decision>) {
        self.instructions.push(Instruction { op, inputs, attrs, outputs, decision });
    }

    // ---- analysis instructions ----------------------------------------------

    /// Every block, in program order.
    pub fn get_blocks(&mut self) -> Vec<BlockRef> {
        let names: Vec<String> = self.program.blocks().into_iter().map(|(n, _)| n).collect();
        let out: Vec<RefId> = names.into_iter().map(|n| self.new_ref(RefValue::Block(n))).collect();
        self.record(Op::GetBlocks, Vec::new(), Vec::new(), out.clone(), None);
        out.into_iter().map(BlockRef).collect()
    }

    /// Loops enclosing a block, outermost first.
    pub fn get_loops(&mut self, b: BlockRef) -> Result<Vec<LoopRef>> {
        let vars: Vec<String> = self.enclosing_loops(b)?.iter().map(|l| l.var.clone()).collect();
        let out: Vec<RefId> = vars.into_iter().map(|v| self.new_ref(RefValue::Loop(v))).collect();
        self.record(Op::GetLoops, alloc::vec![Input::Ref(b.0)], Vec::new(), out.clone(), None);
        Ok(out.into_iter().map(LoopRef).collect())
    }

    /// Dispatches a compute location: a loop handle or a sampled location.
    pub fn compute_at(&mut self, b: BlockRef, target: Target) -> Result<()> {
        let name = self.block_name(b)?.to_string();
        let (input, location) = match target {
            Target::Loop(l) => {
                let var = self.loop_var(l)?.to_string();
                (l.0, compute_at::Place::Loop(var))
            }
            Target::Location(rv) => match self.value(rv)? {
                Value::Location(Location::Root) => (rv.0, compute_at::Place::Root),
                Value::Location(Location::Inline) => (rv.0, compute_at::Place::Inline),
                Value::Location(Location::Loop(idx)) => {
                    let cp = compute_at::counterpart(&self.program, &name)
                        .ok_or_else(|| ScheduleError::NotEligible(format!("block `{name}` has no counterpart")))?;
                    let var = cp
                        .loops(&self.program)
                        .get(idx)
                        .cloned()
                        .ok_or_else(|| ScheduleError::OutOfDomain(format!("counterpart has no loop #{idx}")))?;
                    (rv.0, compute_at::Place::Loop(var))
                }
                Value::Int(_) => return Err(ScheduleError::WrongKind(rv.0, "location")),
            },
        };
        let mut namer = loops::Namer::new(self.next_var, &self.program);
        let p = compute_at::apply(&self.program, &name, &location, &mut namer)?;
        self.commit(p)?;
        self.next_var = namer.next;
        self.record(Op::ComputeAt, alloc::vec![Input::Ref(b.0), Input::Ref(input)], Vec::new(), Vec::new(), None);
        Ok(())
    }

    /// Inlines an elementwise block into its consumer or producer.
    pub fn inline(&mut self, b: BlockRef) -> Result<()> {
        let name = self.block_name(b)?.to_string();
        let p = compute_at::inline(&self.program, &name)?;
        self.commit(p)?;
        self.record(Op::Inline, alloc::vec![Input::Ref(b.0)], Vec::new(), Vec::new(), None);
        Ok(())
    }
}

impl Schedule {
    /// Interprets a reference as a compute-at target (loop or location).
    pub(crate) fn target_of(&self, id: RefId) -> Result<Target> {
        match self.ref_value(id)? {
            RefValue::Loop(_) => Ok(Target::Loop(LoopRef(id))),
            RefValue::Value(Value::Location(_)) => Ok(Target::Location(RvRef(id))),
            _ => Err(ScheduleError::WrongKind(id, "loop or location")),
        }
    }
}
