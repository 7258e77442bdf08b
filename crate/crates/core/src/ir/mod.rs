//! Loop-nest intermediate representation.
//!
//! A [`TensorProgram`] is a list of buffers plus a tree of [`Stmt`]s. Leaves
//! are named blocks: a [`Compute`] statement (a single-assignment store,
//! optionally a reduction) or an [`Intrinsic`] produced by tensorization.
//! Loop variables are globally unique within a program; structural
//! comparison treats them up to renaming.

mod expr;
mod printer;
mod structural;
mod validate;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub use expr::Expr;
pub use printer::{normalize_vars, pretty_print};
pub use structural::{structural_equal, structural_hash};
pub use validate::{validate_ir, Diagnostic};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferRole {
    Input,
    Output,
    Intermediate,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Buffer {
    pub name: String,
    pub shape: Vec<i64>,
    pub role: BufferRole,
}

impl Buffer {
    pub fn new(name: impl Into<String>, shape: Vec<i64>, role: BufferRole) -> Self {
        Buffer { name: name.into(), shape, role }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().map(|&d| d.max(0) as usize).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopKind {
    #[default]
    Serial,
    Parallel,
    Vectorized,
    Unrolled,
}

impl LoopKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LoopKind::Serial => "serial",
            LoopKind::Parallel => "parallel",
            LoopKind::Vectorized => "vectorized",
            LoopKind::Unrolled => "unrolled",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Loop {
    pub var: String,
    pub extent: i64,
    #[serde(default)]
    pub kind: LoopKind,
    pub body: Vec<Stmt>,
}

/// Store of `value` into `buffer[indices]`.
///
/// With `init` present the statement is a reduction: `value` must have the
/// form `buffer[indices] + update`. The reduction variables are the enclosing
/// loop variables referenced by `value` but not by `indices`; `init` is stored
/// when they are all zero and `epilogue` (an expression over
/// `buffer[indices]`) is applied once they all reach their last iteration.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Compute {
    pub block: String,
    pub buffer: String,
    pub indices: Vec<Expr>,
    pub value: Expr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Expr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epilogue: Option<Expr>,
}

impl Compute {
    pub fn is_reduction(&self) -> bool {
        self.init.is_some()
    }

    /// The `update` term of a reduction `buffer[indices] + update`.
    pub fn reduction_update(&self) -> Option<&Expr> {
        self.init.as_ref()?;
        match &self.value {
            Expr::Add(a, b) => match a.as_ref() {
                Expr::Load { buffer, indices } if *buffer == self.buffer && *indices == self.indices => Some(b),
                _ => None,
            },
            _ => None,
        }
    }
}

/// Buffer operand of an intrinsic: base offsets per dimension.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Operand {
    pub buffer: String,
    pub offsets: Vec<Expr>,
}

/// Hardware intrinsic call. The only built-in is `tu.mma4`, a 4x4x4
/// multiply-accumulate `C[ci+i, cj+j] += A[ai+i, ak+k] * B[bk+k, bj+j]` with
/// operands ordered `[C, A, B]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Intrinsic {
    pub name: String,
    pub block: String,
    pub operands: Vec<Operand>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Expr>,
}

pub const MMA4: &str = "tu.mma4";
pub const MMA4_TILE: i64 = 4;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stmt {
    Loop(Loop),
    Compute(Compute),
    Intrinsic(Intrinsic),
}

impl Stmt {
    pub fn block_name(&self) -> Option<&str> {
        match self {
            Stmt::Loop(_) => None,
            Stmt::Compute(c) => Some(&c.block),
            Stmt::Intrinsic(i) => Some(&i.block),
        }
    }

    pub fn as_loop(&self) -> Option<&Loop> {
        match self {
            Stmt::Loop(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_loop_mut(&mut self) -> Option<&mut Loop> {
        match self {
            Stmt::Loop(l) => Some(l),
            _ => None,
        }
    }

    pub fn as_compute(&self) -> Option<&Compute> {
        match self {
            Stmt::Compute(c) => Some(c),
            _ => None,
        }
    }

    /// Name of the buffer this leaf writes.
    pub fn written_buffer(&self) -> Option<&str> {
        match self {
            Stmt::Loop(_) => None,
            Stmt::Compute(c) => Some(&c.buffer),
            Stmt::Intrinsic(i) => i.operands.first().map(|o| o.buffer.as_str()),
        }
    }

    /// Names of buffers this leaf reads (self-loads of reductions included).
    pub fn read_buffers(&self) -> Vec<&str> {
        fn push<'a>(b: &'a str, out: &mut Vec<&'a str>) {
            if !out.contains(&b) {
                out.push(b);
            }
        }
        let mut out: Vec<&str> = Vec::new();
        match self {
            Stmt::Loop(_) => {}
            Stmt::Compute(c) => {
                let exprs = [Some(&c.value), c.init.as_ref(), c.epilogue.as_ref()];
                for e in exprs.into_iter().flatten() {
                    for (b, _) in e.loads() {
                        push(b, &mut out);
                    }
                }
            }
            Stmt::Intrinsic(i) => {
                for o in &i.operands {
                    push(&o.buffer, &mut out);
                }
            }
        }
        out
    }

    /// Rewrites every expression in this subtree through `f`.
    pub fn map_exprs(&mut self, f: &mut impl FnMut(&Expr) -> Expr) {
        match self {
            Stmt::Loop(l) => {
                for s in &mut l.body {
                    s.map_exprs(f);
                }
            }
            Stmt::Compute(c) => {
                c.indices = c.indices.iter().map(&mut *f).collect();
                c.value = f(&c.value);
                if let Some(e) = &c.init {
                    c.init = Some(f(e));
                }
                if let Some(e) = &c.epilogue {
                    c.epilogue = Some(f(e));
                }
            }
            Stmt::Intrinsic(i) => {
                for o in &mut i.operands {
                    o.offsets = o.offsets.iter().map(&mut *f).collect();
                }
                if let Some(e) = &i.init {
                    i.init = Some(f(e));
                }
            }
        }
    }

    /// Every expression directly held by this leaf (not recursive into loops).
    pub fn leaf_exprs(&self) -> Vec<&Expr> {
        match self {
            Stmt::Loop(_) => Vec::new(),
            Stmt::Compute(c) => {
                let mut v: Vec<&Expr> = c.indices.iter().collect();
                v.push(&c.value);
                v.extend(c.init.iter());
                v.extend(c.epilogue.iter());
                v
            }
            Stmt::Intrinsic(i) => {
                let mut v: Vec<&Expr> = i.operands.iter().flat_map(|o| o.offsets.iter()).collect();
                v.extend(i.init.iter());
                v
            }
        }
    }
}

/// Position of a statement: child indices starting from the root list.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn child(&self, i: usize) -> NodePath {
        let mut v = self.0.clone();
        v.push(i);
        NodePath(v)
    }

    pub fn parent(&self) -> Option<(NodePath, usize)> {
        let (last, rest) = self.0.split_last()?;
        Some((NodePath(rest.to_vec()), *last))
    }

    pub fn is_prefix_of(&self, other: &NodePath) -> bool {
        other.0.len() >= self.0.len() && other.0[..self.0.len()] == self.0[..]
    }
}

impl fmt::Display for NodePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "root")?;
        for (depth, i) in self.0.iter().enumerate() {
            if depth == 0 {
                write!(f, "[{i}]")?;
            } else {
                write!(f, ".body[{i}]")?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorProgram {
    pub buffers: Vec<Buffer>,
    pub root: Vec<Stmt>,
}

impl TensorProgram {
    pub fn new(buffers: Vec<Buffer>, root: Vec<Stmt>) -> Self {
        TensorProgram { buffers, root }
    }

    pub fn buffer(&self, name: &str) -> Option<&Buffer> {
        self.buffers.iter().find(|b| b.name == name)
    }

    pub fn stmt(&self, path: &NodePath) -> Option<&Stmt> {
        let (first, rest) = path.0.split_first()?;
        let mut cur = self.root.get(*first)?;
        for &i in rest {
            cur = cur.as_loop()?.body.get(i)?;
        }
        Some(cur)
    }

    pub fn stmt_mut(&mut self, path: &NodePath) -> Option<&mut Stmt> {
        let (first, rest) = path.0.split_first()?;
        let mut cur = self.root.get_mut(*first)?;
        for &i in rest {
            cur = cur.as_loop_mut()?.body.get_mut(i)?;
        }
        Some(cur)
    }

    /// The statement list at `path` (root list for the empty path).
    pub fn body(&self, path: &NodePath) -> Option<&Vec<Stmt>> {
        if path.0.is_empty() {
            return Some(&self.root);
        }
        self.stmt(path)?.as_loop().map(|l| &l.body)
    }

    pub fn body_mut(&mut self, path: &NodePath) -> Option<&mut Vec<Stmt>> {
        if path.0.is_empty() {
            return Some(&mut self.root);
        }
        self.stmt_mut(path)?.as_loop_mut().map(|l| &mut l.body)
    }

    /// Pre-order walk; the callback receives the path, statement, and the
    /// chain of enclosing loops (outermost first).
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&NodePath, &'a Stmt, &[&'a Loop])) {
        fn go<'a>(
            stmts: &'a [Stmt],
            path: &NodePath,
            loops: &mut Vec<&'a Loop>,
            f: &mut impl FnMut(&NodePath, &'a Stmt, &[&'a Loop]),
        ) {
            for (i, s) in stmts.iter().enumerate() {
                let p = path.child(i);
                f(&p, s, loops);
                if let Stmt::Loop(l) = s {
                    loops.push(l);
                    go(&l.body, &p, loops, f);
                    loops.pop();
                }
            }
        }
        go(&self.root, &NodePath::default(), &mut Vec::new(), f);
    }

    /// Blocks in program (pre-)order with their paths.
    pub fn blocks(&self) -> Vec<(String, NodePath)> {
        let mut out = Vec::new();
        self.walk(&mut |p, s, _| {
            if let Some(name) = s.block_name() {
                out.push((String::from(name), p.clone()));
            }
        });
        out
    }

    pub fn block_path(&self, name: &str) -> Option<NodePath> {
        let mut found = None;
        self.walk(&mut |p, s, _| {
            if found.is_none() && s.block_name() == Some(name) {
                found = Some(p.clone());
            }
        });
        found
    }

    pub fn loop_path(&self, var: &str) -> Option<NodePath> {
        let mut found = None;
        self.walk(&mut |p, s, _| {
            if found.is_none() {
                if let Stmt::Loop(l) = s {
                    if l.var == var {
                        found = Some(p.clone());
                    }
                }
            }
        });
        found
    }

    pub fn find_loop(&self, var: &str) -> Option<&Loop> {
        self.loop_path(var).and_then(|p| self.stmt(&p)).and_then(Stmt::as_loop)
    }

    /// Loops enclosing `path` (excluding the node itself), outermost first.
    pub fn enclosing_loops(&self, path: &NodePath) -> Vec<&Loop> {
        let mut out = Vec::new();
        for depth in 1..path.0.len() {
            if let Some(Stmt::Loop(l)) = self.stmt(&NodePath(path.0[..depth].to_vec())) {
                out.push(l);
            }
        }
        out
    }

    pub fn loop_vars(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |_, s, _| {
            if let Stmt::Loop(l) = s {
                out.push(l.var.clone());
            }
        });
        out
    }

    /// Blocks reading `buffer`, excluding the block that writes it.
    pub fn readers_of(&self, buffer: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        self.walk(&mut |_, s, _| {
            if let Some(name) = s.block_name() {
                if s.written_buffer() != Some(buffer) && s.read_buffers().contains(&buffer) {
                    out.push(String::from(name));
                }
            }
        });
        out
    }

    /// Block that writes `buffer`, if any.
    pub fn writer_of(&self, buffer: &str) -> Option<String> {
        let mut out = None;
        self.walk(&mut |_, s, _| {
            if out.is_none() && s.written_buffer() == Some(buffer) {
                out = s.block_name().map(String::from);
            }
        });
        out
    }

    /// Removes the statement at `path`, then prunes loops left empty.
    pub fn remove_stmt(&mut self, path: &NodePath) -> Option<Stmt> {
        let (parent, idx) = path.parent()?;
        let body = self.body_mut(&parent)?;
        if idx >= body.len() {
            return None;
        }
        let removed = body.remove(idx);
        if body.is_empty() && !parent.0.is_empty() {
            self.remove_stmt(&parent);
        }
        Some(removed)
    }
}
