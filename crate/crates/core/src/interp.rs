//! Reference executor over integer tensors.
//!
//! Loops run sequentially whatever their kind; annotations only matter to the
//! machine model. Programs are lowered once to a slot-indexed form so that
//! repeated execution in equivalence tests stays cheap.

use alloc::boxed::Box;
use core::cell::RefCell;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis;
use crate::ir::{BufferRole, Expr, Stmt, TensorProgram, MMA4_TILE};

/// Dense row-major integer tensor.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct TensorValue {
    pub shape: Vec<i64>,
    pub data: Vec<i64>,
}

impl TensorValue {
    pub fn zeros(shape: &[i64]) -> Self {
        let n = shape.iter().product::<i64>().max(0) as usize;
        TensorValue { shape: shape.to_vec(), data: alloc::vec![0; n] }
    }

    pub fn from_fn(shape: &[i64], mut f: impl FnMut(&[i64]) -> i64) -> Self {
        let mut t = Self::zeros(shape);
        let mut idx = alloc::vec![0i64; shape.len()];
        for slot in t.data.iter_mut() {
            *slot = f(&idx);
            for d in (0..shape.len()).rev() {
                idx[d] += 1;
                if idx[d] < shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        t
    }

    pub fn get(&self, idx: &[i64]) -> i64 {
        let mut flat = 0;
        for (i, d) in idx.iter().zip(&self.shape) {
            flat = flat * d + i;
        }
        self.data[flat as usize]
    }
}

pub type Tensors = BTreeMap<String, TensorValue>;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum InterpError {
    #[error("missing input buffer `{0}`")]
    MissingInput(String),
    #[error("input `{buffer}` has shape {got:?}, expected {expected:?}")]
    ShapeMismatch { buffer: String, expected: Vec<i64>, got: Vec<i64> },
    #[error("out-of-bounds access to `{buffer}` at {index:?} in block `{block}`")]
    OutOfBounds { block: String, buffer: String, index: Vec<i64> },
    #[error("cannot execute program: {0}")]
    Malformed(String),
}

#[derive(Clone, Copy)]
enum Op {
    Add,
    Sub,
    Mul,
    Max,
    Min,
    Div,
    Mod,
    Lt,
    And,
}

enum CExpr {
    Int(i64),
    Slot(usize),
    /// `c + sum(coef * slot)`: index arithmetic folded at lowering time.
    Affine(i64, Vec<(usize, i64)>),
    Load(usize, Vec<CExpr>),
    /// Load proven in bounds at lowering, at the flat offset kept in a
    /// register that the enclosing loops advance.
    Linear(usize, usize),
    Bin(Op, Box<CExpr>, Box<CExpr>),
    Select(Box<CExpr>, Box<CExpr>, Box<CExpr>),
}

struct CAccess {
    buf: usize,
    idx: Vec<CExpr>,
    /// Offset register, when the access is provably in bounds.
    linear: Option<usize>,
}

enum CStmt {
    Loop {
        slot: usize,
        extent: i64,
        body: Vec<CStmt>,
        // (register, step) advanced after each iteration
        steps: Vec<(usize, i64)>,
    },
    Compute {
        block: usize,
        store: CAccess,
        value: CExpr,
        init: Option<CExpr>,
        epilogue: Option<CExpr>,
        // (slot, last value) of each reduction loop
        red: Vec<(usize, i64)>,
    },
    Mma {
        block: usize,
        ops: [CAccess; 3],
        init: Option<CExpr>,
        red: Vec<(usize, i64)>,
    },
}

struct Lowering<'a> {
    p: &'a TensorProgram,
    slots: BTreeMap<String, usize>,
    /// Extent of the loop bound to each slot.
    extents: Vec<i64>,
    /// Initial value of each offset register.
    regs: RefCell<Vec<i64>>,
    /// Register steps for each open loop, by slot.
    steps: RefCell<Vec<Vec<(usize, i64)>>>,
    blocks: Vec<String>,
}

impl Lowering<'_> {
    fn buf(&self, name: &str) -> Result<usize, InterpError> {
        self.p
            .buffers
            .iter()
            .position(|b| b.name == name)
            .ok_or_else(|| InterpError::Malformed(alloc::format!("unknown buffer `{name}`")))
    }

    /// Folds load-free `+`, `-` and constant `*` into linear form.
    fn affine(&self, e: &Expr) -> Option<(i64, BTreeMap<usize, i64>)> {
        let scale = |(c, mut t): (i64, BTreeMap<usize, i64>), k: i64| {
            t.values_mut().for_each(|v| *v = v.wrapping_mul(k));
            (c.wrapping_mul(k), t)
        };
        let merge = |(c, mut t): (i64, BTreeMap<usize, i64>), (d, u): (i64, BTreeMap<usize, i64>)| {
            for (s, k) in u {
                *t.entry(s).or_insert(0) += k;
            }
            (c.wrapping_add(d), t)
        };
        match e {
            Expr::Int(v) => Some((*v, BTreeMap::new())),
            Expr::Var(v) => Some((0, [(*self.slots.get(v)?, 1)].into())),
            Expr::Add(a, b) => Some(merge(self.affine(a)?, self.affine(b)?)),
            Expr::Sub(a, b) => Some(merge(self.affine(a)?, scale(self.affine(b)?, -1))),
            Expr::Mul(a, b) => match (a.as_ref(), b.as_ref()) {
                (Expr::Int(k), x) | (x, Expr::Int(k)) => Some(scale(self.affine(x)?, *k)),
                _ => None,
            },
            _ => None,
        }
    }

    fn expr(&self, e: &Expr) -> Result<CExpr, InterpError> {
        if !matches!(e, Expr::Int(_) | Expr::Var(_)) {
            if let Some((c, terms)) = self.affine(e) {
                return Ok(CExpr::Affine(c, terms.into_iter().filter(|&(_, k)| k != 0).collect()));
            }
        }
        let bin = |op, a: &Expr, b: &Expr| -> Result<CExpr, InterpError> {
            Ok(CExpr::Bin(op, Box::new(self.expr(a)?), Box::new(self.expr(b)?)))
        };
        Ok(match e {
            Expr::Int(v) => CExpr::Int(*v),
            Expr::Var(v) => CExpr::Slot(
                *self.slots.get(v).ok_or_else(|| InterpError::Malformed(alloc::format!("unbound variable `{v}`")))?,
            ),
            Expr::Load { buffer, indices } => match self.linear(buffer, indices) {
                Some(r) => CExpr::Linear(self.buf(buffer)?, r),
                None => CExpr::Load(self.buf(buffer)?, indices.iter().map(|i| self.expr(i)).collect::<Result<_, _>>()?),
            },
            Expr::Add(a, b) => bin(Op::Add, a, b)?,
            Expr::Sub(a, b) => bin(Op::Sub, a, b)?,
            Expr::Mul(a, b) => bin(Op::Mul, a, b)?,
            Expr::Max(a, b) => bin(Op::Max, a, b)?,
            Expr::Min(a, b) => bin(Op::Min, a, b)?,
            Expr::Div(a, b) => bin(Op::Div, a, b)?,
            Expr::Mod(a, b) => bin(Op::Mod, a, b)?,
            Expr::Lt(a, b) => bin(Op::Lt, a, b)?,
            Expr::And(a, b) => bin(Op::And, a, b)?,
            Expr::Select { cond, then, otherwise } => CExpr::Select(
                Box::new(self.expr(cond)?),
                Box::new(self.expr(then)?),
                Box::new(self.expr(otherwise)?),
            ),
        })
    }

    /// Offset register for an access whose every index is affine and, by
    /// interval arithmetic over the enclosing loop ranges, always in bounds.
    fn linear(&self, buffer: &str, idx: &[Expr]) -> Option<usize> {
        let shape = &self.p.buffer(buffer)?.shape;
        if shape.len() != idx.len() {
            return None;
        }
        let (mut c, mut flat) = (0i64, BTreeMap::new());
        for (d, e) in idx.iter().enumerate() {
            let (k, terms) = self.affine(e)?;
            let (mut lo, mut hi) = (k, k);
            for (&s, &coef) in &terms {
                let span = coef.checked_mul(self.extents[s] - 1)?;
                lo += span.min(0);
                hi += span.max(0);
            }
            if lo < 0 || hi >= shape[d] {
                return None;
            }
            let stride: i64 = shape[d + 1..].iter().product();
            c += k * stride;
            for (s, coef) in terms {
                *flat.entry(s).or_insert(0) += coef * stride;
            }
        }
        let mut regs = self.regs.borrow_mut();
        let r = regs.len();
        regs.push(c);
        let mut steps = self.steps.borrow_mut();
        for (s, k) in flat {
            if k != 0 {
                steps[s].push((r, k));
            }
        }
        Some(r)
    }

    fn access(&self, buffer: &str, idx: &[Expr], linear: bool) -> Result<CAccess, InterpError> {
        Ok(CAccess {
            buf: self.buf(buffer)?,
            idx: idx.iter().map(|e| self.expr(e)).collect::<Result<_, _>>()?,
            linear: if linear { self.linear(buffer, idx) } else { None },
        })
    }

    fn stmts<'b>(&mut self, body: &'b [Stmt], enclosing: &mut Vec<&'b crate::ir::Loop>) -> Result<Vec<CStmt>, InterpError> {
        let mut out = Vec::with_capacity(body.len());
        for s in body {
            out.push(self.stmt(s, enclosing)?);
        }
        Ok(out)
    }

    fn stmt<'b>(&mut self, s: &'b Stmt, enclosing: &mut Vec<&'b crate::ir::Loop>) -> Result<CStmt, InterpError> {
        let red = |this: &Self, enclosing: &[&crate::ir::Loop]| -> Vec<(usize, i64)> {
            analysis::reduction_loops(s, enclosing).iter().map(|l| (this.slots[&l.var], l.extent - 1)).collect()
        };
        Ok(match s {
            Stmt::Loop(l) => {
                // Slots are allocated by depth, so sibling loops share one.
                let slot = self.slots.len();
                self.slots.insert(l.var.clone(), slot);
                self.extents.push(l.extent);
                self.steps.borrow_mut().push(Vec::new());
                enclosing.push(l);
                let body = self.stmts(&l.body, enclosing)?;
                enclosing.pop();
                self.extents.pop();
                let steps = self.steps.borrow_mut().pop().unwrap_or_default();
                self.slots.remove(&l.var);
                CStmt::Loop { slot, extent: l.extent, body, steps }
            }
            Stmt::Compute(c) => {
                self.blocks.push(c.block.clone());
                CStmt::Compute {
                    block: self.blocks.len() - 1,
                    store: self.access(&c.buffer, &c.indices, true)?,
                    value: self.expr(&c.value)?,
                    init: c.init.as_ref().map(|e| self.expr(e)).transpose()?,
                    epilogue: c.epilogue.as_ref().map(|e| self.expr(e)).transpose()?,
                    red: red(self, enclosing),
                }
            }
            Stmt::Intrinsic(i) => {
                if !analysis::is_mma4(i) {
                    return Err(InterpError::Malformed(alloc::format!("unsupported intrinsic `{}`", i.name)));
                }
                self.blocks.push(i.block.clone());
                let op = |k: usize| self.access(&i.operands[k].buffer, &i.operands[k].offsets, false);
                CStmt::Mma {
                    block: self.blocks.len() - 1,
                    ops: [op(0)?, op(1)?, op(2)?],
                    init: i.init.as_ref().map(|e| self.expr(e)).transpose()?,
                    red: red(self, enclosing),
                }
            }
        })
    }
}

/// Executes `L` input sets at once. Index arithmetic and control flow are
/// evaluated once and shared, so `L > 1` requires a lane-uniform program
/// (no load feeds an index or a select condition); values are per lane.
struct Machine<'a, const L: usize> {
    shapes: Vec<&'a [i64]>,
    names: Vec<&'a str>,
    blocks: &'a [String],
    data: Vec<Vec<[i64; L]>>,
    env: Vec<i64>,
    regs: Vec<i64>,
}

fn lanes<const L: usize>(x: [i64; L], y: [i64; L], f: impl Fn(i64, i64) -> i64) -> [i64; L] {
    core::array::from_fn(|l| f(x[l], y[l]))
}

impl<const L: usize> Machine<'_, L> {
    fn oob(&self, block: usize, buf: usize, idx: &[CExpr], extra: &[i64]) -> InterpError {
        let mut index: Vec<i64> = idx.iter().map(|e| self.scalar(e).unwrap_or(i64::MIN)).collect();
        for (i, x) in index.iter_mut().zip(extra) {
            *i = i.wrapping_add(*x);
        }
        InterpError::OutOfBounds {
            block: self.blocks.get(block).cloned().unwrap_or_default(),
            buffer: String::from(self.names[buf]),
            index,
        }
    }

    /// Lane 0 of `e`, for index and condition expressions.
    fn scalar(&self, e: &CExpr) -> Option<i64> {
        match e {
            CExpr::Int(v) => Some(*v),
            CExpr::Slot(s) => Some(self.env[*s]),
            _ => self.eval(e).map(|v| v[0]),
        }
    }

    fn flat(&self, buf: usize, idx: &[CExpr], extra: &[i64]) -> Option<usize> {
        let shape = self.shapes[buf];
        let mut flat: i64 = 0;
        for (d, e) in idx.iter().enumerate() {
            let i = self.scalar(e)?.wrapping_add(extra.get(d).copied().unwrap_or(0));
            if i < 0 || i >= shape[d] {
                return None;
            }
            flat = flat * shape[d] + i;
        }
        Some(flat as usize)
    }

    fn store_at(&self, block: usize, a: &CAccess) -> Result<usize, InterpError> {
        match &a.linear {
            Some(r) => Ok(self.regs[*r] as usize),
            None => self.flat(a.buf, &a.idx, &[]).ok_or_else(|| self.oob(block, a.buf, &a.idx, &[])),
        }
    }

    /// `None` signals an out-of-bounds load somewhere inside `e`.
    fn eval(&self, e: &CExpr) -> Option<[i64; L]> {
        Some(match e {
            CExpr::Int(v) => [*v; L],
            CExpr::Slot(s) => [self.env[*s]; L],
            CExpr::Affine(c, terms) => {
                [terms.iter().fold(*c, |acc, &(s, k)| acc.wrapping_add(k.wrapping_mul(self.env[s]))); L]
            }
            CExpr::Load(b, idx) => self.data[*b][self.flat(*b, idx, &[])?],
            CExpr::Linear(b, r) => self.data[*b][self.regs[*r] as usize],
            CExpr::Bin(op, a, b) => {
                let (x, y) = (self.eval(a)?, self.eval(b)?);
                match op {
                    Op::Add => lanes(x, y, i64::wrapping_add),
                    Op::Sub => lanes(x, y, i64::wrapping_sub),
                    Op::Mul => lanes(x, y, i64::wrapping_mul),
                    Op::Max => lanes(x, y, i64::max),
                    Op::Min => lanes(x, y, i64::min),
                    Op::Div => lanes(x, y, i64::div_euclid),
                    Op::Mod => lanes(x, y, i64::rem_euclid),
                    Op::Lt => lanes(x, y, |x, y| (x < y) as i64),
                    Op::And => lanes(x, y, |x, y| (x != 0 && y != 0) as i64),
                }
            }
            CExpr::Select(c, t, o) => {
                if self.scalar(c)? != 0 {
                    self.eval(t)?
                } else {
                    self.eval(o)?
                }
            }
        })
    }

    fn first_load_oob(&self, block: usize, e: &CExpr) -> InterpError {
        // Walk loads in evaluation order to report the first failing one.
        fn find<'e, const L: usize>(m: &Machine<'_, L>, e: &'e CExpr) -> Option<(usize, &'e [CExpr])> {
            match e {
                CExpr::Int(_) | CExpr::Slot(_) | CExpr::Affine(..) | CExpr::Linear(..) => None,
                CExpr::Load(b, idx) => {
                    for i in idx {
                        if let Some(x) = find(m, i) {
                            return Some(x);
                        }
                    }
                    if m.flat(*b, idx, &[]).is_none() {
                        Some((*b, idx))
                    } else {
                        None
                    }
                }
                CExpr::Bin(_, a, b) => find(m, a).or_else(|| find(m, b)),
                CExpr::Select(c, t, o) => find(m, c).or_else(|| match m.scalar(c) {
                    Some(0) => find(m, o),
                    Some(_) => find(m, t),
                    None => None,
                }),
            }
        }
        match find(self, e) {
            Some((b, idx)) => self.oob(block, b, idx, &[]),
            None => InterpError::Malformed(String::from("evaluation failed")),
        }
    }

    fn value(&self, block: usize, e: &CExpr) -> Result<[i64; L], InterpError> {
        self.eval(e).ok_or_else(|| self.first_load_oob(block, e))
    }

    fn at(&self, red: &[(usize, i64)], last: bool) -> bool {
        red.iter().all(|&(s, l)| self.env[s] == if last { l } else { 0 })
    }

    fn exec(&mut self, stmts: &[CStmt]) -> Result<(), InterpError> {
        for s in stmts {
            match s {
                CStmt::Loop { slot, extent, body, steps } => {
                    for i in 0..*extent {
                        self.env[*slot] = i;
                        self.exec(body)?;
                        for &(r, k) in steps {
                            self.regs[r] += k;
                        }
                    }
                    for &(r, k) in steps {
                        self.regs[r] -= k * extent;
                    }
                }
                CStmt::Compute { block, store, value, init, epilogue, red } => {
                    let at = self.store_at(*block, store)?;
                    if let Some(init) = init {
                        if self.at(red, false) {
                            let v = self.value(*block, init)?;
                            self.data[store.buf][at] = v;
                        }
                    }
                    let v = self.value(*block, value)?;
                    self.data[store.buf][at] = v;
                    if let Some(ep) = epilogue {
                        if self.at(red, true) {
                            let v = self.value(*block, ep)?;
                            self.data[store.buf][at] = v;
                        }
                    }
                }
                CStmt::Mma { block, ops, init, red } => {
                    let t = MMA4_TILE;
                    let first = self.at(red, false);
                    for i in 0..t {
                        for j in 0..t {
                            let c = self
                                .flat(ops[0].buf, &ops[0].idx, &[i, j])
                                .ok_or_else(|| self.oob(*block, ops[0].buf, &ops[0].idx, &[i, j]))?;
                            let mut acc = if first {
                                match init {
                                    Some(e) => self.value(*block, e)?,
                                    None => self.data[ops[0].buf][c],
                                }
                            } else {
                                self.data[ops[0].buf][c]
                            };
                            for k in 0..t {
                                let a = self
                                    .flat(ops[1].buf, &ops[1].idx, &[i, k])
                                    .ok_or_else(|| self.oob(*block, ops[1].buf, &ops[1].idx, &[i, k]))?;
                                let b = self
                                    .flat(ops[2].buf, &ops[2].idx, &[k, j])
                                    .ok_or_else(|| self.oob(*block, ops[2].buf, &ops[2].idx, &[k, j]))?;
                                let prod = lanes(self.data[ops[1].buf][a], self.data[ops[2].buf][b], i64::wrapping_mul);
                                acc = lanes(acc, prod, i64::wrapping_add);
                            }
                            self.data[ops[0].buf][c] = acc;
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn has_load(e: &CExpr) -> bool {
    match e {
        CExpr::Int(_) | CExpr::Slot(_) | CExpr::Affine(..) => false,
        CExpr::Load(..) | CExpr::Linear(..) => true,
        CExpr::Bin(_, a, b) => has_load(a) || has_load(b),
        CExpr::Select(c, t, o) => has_load(c) || has_load(t) || has_load(o),
    }
}

/// True when no load feeds an index or a select condition anywhere in `e`.
fn uniform_expr(e: &CExpr) -> bool {
    match e {
        CExpr::Int(_) | CExpr::Slot(_) | CExpr::Affine(..) | CExpr::Linear(..) => true,
        CExpr::Load(_, idx) => idx.iter().all(|i| !has_load(i)),
        CExpr::Bin(_, a, b) => uniform_expr(a) && uniform_expr(b),
        CExpr::Select(c, t, o) => !has_load(c) && uniform_expr(t) && uniform_expr(o),
    }
}

fn uniform(stmts: &[CStmt]) -> bool {
    let access = |a: &CAccess| a.idx.iter().all(|i| !has_load(i));
    let opt = |e: &Option<CExpr>| e.as_ref().is_none_or(uniform_expr);
    stmts.iter().all(|s| match s {
        CStmt::Loop { body, .. } => uniform(body),
        CStmt::Compute { store, value, init, epilogue, .. } => {
            access(store) && uniform_expr(value) && opt(init) && opt(epilogue)
        }
        CStmt::Mma { ops, init, .. } => ops.iter().all(access) && opt(init),
    })
}

/// A program lowered for repeated execution.
pub struct Executable<'a> {
    p: &'a TensorProgram,
    body: Vec<CStmt>,
    blocks: Vec<String>,
    depth: usize,
    regs: Vec<i64>,
    uniform: bool,
}

impl<'a> Executable<'a> {
    pub fn new(p: &'a TensorProgram) -> Result<Self, InterpError> {
        let mut low = Lowering {
            p,
            slots: BTreeMap::new(),
            extents: Vec::new(),
            regs: RefCell::new(Vec::new()),
            steps: RefCell::new(Vec::new()),
            blocks: Vec::new(),
        };
        let body = low.stmts(&p.root, &mut Vec::new())?;
        let depth = max_depth(&body);
        let uniform = uniform(&body);
        Ok(Executable { p, body, blocks: low.blocks, depth, regs: low.regs.into_inner(), uniform })
    }

    /// Executes `L` input sets together and returns every buffer of each.
    fn execute<const L: usize>(&self, inputs: &[&Tensors]) -> Result<Vec<Tensors>, InterpError> {
        debug_assert!(inputs.len() == L && (L == 1 || self.uniform));
        let mut data = Vec::with_capacity(self.p.buffers.len());
        for b in &self.p.buffers {
            if b.role != BufferRole::Input {
                data.push(alloc::vec![[0; L]; b.len()]);
                continue;
            }
            let mut lanes = alloc::vec![[0; L]; b.len()];
            for (l, inputs) in inputs.iter().enumerate() {
                let t = inputs.get(&b.name).ok_or_else(|| InterpError::MissingInput(b.name.clone()))?;
                if t.shape != b.shape || t.data.len() != b.len() {
                    return Err(InterpError::ShapeMismatch {
                        buffer: b.name.clone(),
                        expected: b.shape.clone(),
                        got: t.shape.clone(),
                    });
                }
                for (x, v) in lanes.iter_mut().zip(&t.data) {
                    x[l] = *v;
                }
            }
            data.push(lanes);
        }
        let mut m = Machine::<L> {
            shapes: self.p.buffers.iter().map(|b| b.shape.as_slice()).collect(),
            names: self.p.buffers.iter().map(|b| b.name.as_str()).collect(),
            blocks: &self.blocks,
            data,
            env: alloc::vec![0; self.depth],
            regs: self.regs.clone(),
        };
        m.exec(&self.body)?;
        Ok((0..L)
            .map(|l| {
                self.p
                    .buffers
                    .iter()
                    .zip(&m.data)
                    .map(|(b, data)| {
                        (b.name.clone(), TensorValue { shape: b.shape.clone(), data: data.iter().map(|x| x[l]).collect() })
                    })
                    .collect()
            })
            .collect())
    }

    fn outputs(&self, mut all: Tensors) -> Tensors {
        all.retain(|name, _| self.p.buffer(name).is_some_and(|b| b.role == BufferRole::Output));
        all
    }

    /// Executes and returns every buffer (inputs, intermediates, outputs).
    pub fn run_all(&self, inputs: &Tensors) -> Result<Tensors, InterpError> {
        Ok(self.execute::<1>(&[inputs])?.remove(0))
    }

    /// Executes and returns the output-role buffers.
    pub fn run(&self, inputs: &Tensors) -> Result<Tensors, InterpError> {
        Ok(self.outputs(self.run_all(inputs)?))
    }

    /// Same as calling [`Executable::run`] on each input set, but shares
    /// loop and index work across up to four sets at a time when the
    /// program allows it.
    pub fn run_batch(&self, inputs: &[Tensors]) -> Result<Vec<Tensors>, InterpError> {
        if !self.uniform {
            return inputs.iter().map(|i| self.run(i)).collect();
        }
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(4) {
            let refs: Vec<&Tensors> = chunk.iter().collect();
            let all = match refs.len() {
                1 => self.execute::<1>(&refs)?,
                2 => self.execute::<2>(&refs)?,
                3 => self.execute::<3>(&refs)?,
                _ => self.execute::<4>(&refs)?,
            };
            out.extend(all.into_iter().map(|t| self.outputs(t)));
        }
        Ok(out)
    }
}

fn max_depth(stmts: &[CStmt]) -> usize {
    stmts
        .iter()
        .map(|s| match s {
            CStmt::Loop { slot, body, .. } => (slot + 1).max(max_depth(body)),
            _ => 0,
        })
        .max()
        .unwrap_or(0)
}

/// Runs `p` on `inputs` and returns its output buffers.
pub fn run(p: &TensorProgram, inputs: &Tensors) -> Result<Tensors, InterpError> {
    Executable::new(p)?.run(inputs)
}

/// Deterministic inputs drawn uniformly from `[-8, 8]`.
pub fn random_inputs(p: &TensorProgram, seed: u64) -> Tensors {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    p.buffers
        .iter()
        .filter(|b| b.role == BufferRole::Input)
        .map(|b| {
            let data = (0..b.len()).map(|_| rng.gen_range(-8..=8)).collect();
            (b.name.clone(), TensorValue { shape: b.shape.clone(), data })
        })
        .collect()
}
