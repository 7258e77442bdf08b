use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use super::{BufferRole, Expr, Loop, Stmt, TensorProgram};
use crate::analysis::{is_mma4, is_quasi_affine};

/// A validation finding, located at a node path (or `buffers[i]`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub location: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

struct Checker<'a> {
    p: &'a TensorProgram,
    diags: Vec<Diagnostic>,
    seen_vars: BTreeSet<String>,
    seen_blocks: BTreeSet<String>,
    // buffer -> (writer block, pre-order position of the writer)
    writers: BTreeMap<String, (String, usize)>,
    // (reader block, buffer, position, location)
    reads: Vec<(String, String, usize, String)>,
    position: usize,
}

impl<'a> Checker<'a> {
    fn diag(&mut self, location: &str, message: String) {
        self.diags.push(Diagnostic { location: location.to_string(), message });
    }

    fn check_expr(&mut self, loc: &str, e: &Expr, bound: &[&Loop], index_position: bool) {
        if index_position && !is_quasi_affine(e) {
            self.diag(loc, format!("non-affine index `{e}`"));
        }
        let mut issues = Vec::new();
        e.visit(&mut |x| match x {
            Expr::Var(v) => {
                if !bound.iter().any(|l| l.var == *v) {
                    issues.push(format!("unbound variable `{v}`"));
                }
            }
            Expr::Div(_, d) | Expr::Mod(_, d)
                if !matches!(d.as_ref(), Expr::Int(c) if *c > 0) => {
                    issues.push(format!("divisor must be a positive constant in `{x}`"));
                }
            _ => {}
        });
        for m in issues {
            self.diag(loc, m);
        }
        for (b, idx) in e.loads() {
            self.check_buffer_ref(loc, b, idx.len());
            for i in idx {
                if i.has_loads() || !is_quasi_affine(i) {
                    self.diag(loc, format!("non-affine index `{i}` in load of `{b}`"));
                }
            }
        }
    }

    fn check_buffer_ref(&mut self, loc: &str, name: &str, rank: usize) {
        match self.p.buffer(name) {
            None => self.diag(loc, format!("unknown buffer `{name}`")),
            Some(b) if b.shape.len() != rank => self.diag(
                loc,
                format!("rank mismatch on `{name}`: {} indices for rank {}", rank, b.shape.len()),
            ),
            Some(_) => {}
        }
    }

    fn check_block_name(&mut self, loc: &str, name: &str) {
        if !self.seen_blocks.insert(name.to_string()) {
            self.diag(loc, format!("duplicate block name `{name}`"));
        }
    }

    fn record_write(&mut self, loc: &str, block: &str, buffer: &str) {
        if let Some(b) = self.p.buffer(buffer) {
            if b.role == BufferRole::Input {
                self.diag(loc, format!("block `{block}` writes input buffer `{buffer}`"));
            }
        }
        if let Some((other, _)) = self.writers.get(buffer) {
            let msg = format!("multiple writers for `{buffer}` (`{other}` and `{block}`)");
            self.diag(loc, msg);
        } else {
            self.writers.insert(buffer.to_string(), (block.to_string(), self.position));
        }
    }

    fn check_stmt(&mut self, s: &'a Stmt, path: &super::NodePath, bound: &mut Vec<&'a Loop>) {
        let loc = path.to_string();
        match s {
            Stmt::Loop(l) => {
                if l.extent < 1 {
                    self.diag(&loc, format!("loop `{}` has non-positive extent {}", l.var, l.extent));
                }
                if !self.seen_vars.insert(l.var.clone()) {
                    self.diag(&loc, format!("duplicate loop variable `{}`", l.var));
                }
                bound.push(l);
                for (i, c) in l.body.iter().enumerate() {
                    self.check_stmt(c, &path.child(i), bound);
                }
                bound.pop();
            }
            Stmt::Compute(c) => {
                self.position += 1;
                self.check_block_name(&loc, &c.block);
                self.check_buffer_ref(&loc, &c.buffer, c.indices.len());
                for i in &c.indices {
                    if i.has_loads() {
                        self.diag(&loc, format!("non-affine index `{i}`"));
                    }
                    self.check_expr(&loc, i, bound, true);
                }
                self.check_expr(&loc, &c.value, bound, false);
                self.record_write(&loc, &c.block, &c.buffer);
                let self_loads: Vec<Vec<Expr>> = c
                    .value
                    .loads()
                    .into_iter()
                    .filter(|(b, _)| *b == c.buffer)
                    .map(|(_, i)| i.to_vec())
                    .collect();
                match (&c.init, c.reduction_update()) {
                    (Some(init), Some(update)) => {
                        self.check_expr(&loc, init, bound, false);
                        if init.loads().iter().any(|(b, _)| *b == c.buffer) {
                            self.diag(&loc, "malformed reduction: init reads its own buffer".to_string());
                        }
                        if update.loads().iter().any(|(b, _)| *b == c.buffer) {
                            self.diag(&loc, "malformed reduction: update reads its own buffer".to_string());
                        }
                    }
                    (Some(_), None) => self.diag(
                        &loc,
                        format!("malformed reduction in `{}`: value must be `{}[..] + update`", c.block, c.buffer),
                    ),
                    (None, _) => {
                        if !self_loads.is_empty() {
                            self.diag(&loc, format!("block `{}` reads its own output without init", c.block));
                        }
                        if c.epilogue.is_some() {
                            self.diag(&loc, format!("epilogue on non-reduction block `{}`", c.block));
                        }
                    }
                }
                if let Some(ep) = &c.epilogue {
                    self.check_expr(&loc, ep, bound, false);
                    for (b, idx) in ep.loads() {
                        if b == c.buffer && idx != c.indices.as_slice() {
                            self.diag(&loc, "epilogue reads its own buffer at a different index".to_string());
                        }
                    }
                }
                let mut reads: BTreeSet<String> = BTreeSet::new();
                for e in [Some(&c.value), c.init.as_ref(), c.epilogue.as_ref()].into_iter().flatten() {
                    for (b, _) in e.loads() {
                        if b != c.buffer {
                            reads.insert(b.to_string());
                        }
                    }
                }
                for b in reads {
                    self.reads.push((c.block.clone(), b, self.position, loc.clone()));
                }
            }
            Stmt::Intrinsic(intr) => {
                self.position += 1;
                self.check_block_name(&loc, &intr.block);
                if !is_mma4(intr) {
                    self.diag(&loc, format!("unknown or malformed intrinsic `{}`", intr.name));
                    return;
                }
                for o in &intr.operands {
                    self.check_buffer_ref(&loc, &o.buffer, o.offsets.len());
                    for e in &o.offsets {
                        if e.has_loads() {
                            self.diag(&loc, format!("non-affine index `{e}`"));
                        }
                        self.check_expr(&loc, e, bound, true);
                    }
                }
                if let Some(init) = &intr.init {
                    if init.has_loads() || {
                        let mut v = BTreeSet::new();
                        init.collect_vars(&mut v);
                        !v.is_empty()
                    } {
                        self.diag(&loc, "intrinsic init must be a constant expression".to_string());
                    }
                }
                let out = intr.operands[0].buffer.clone();
                self.record_write(&loc, &intr.block, &out);
                for o in &intr.operands[1..] {
                    if o.buffer != out {
                        self.reads.push((intr.block.clone(), o.buffer.clone(), self.position, loc.clone()));
                    }
                }
            }
        }
    }
}

/// Checks every structural invariant of a program. An empty list means valid.
pub fn validate_ir(p: &TensorProgram) -> Result<(), Vec<Diagnostic>> {
    let mut ck = Checker {
        p,
        diags: Vec::new(),
        seen_vars: BTreeSet::new(),
        seen_blocks: BTreeSet::new(),
        writers: BTreeMap::new(),
        reads: Vec::new(),
        position: 0,
    };
    let mut names = BTreeSet::new();
    for (i, b) in p.buffers.iter().enumerate() {
        let loc = format!("buffers[{i}]");
        if !names.insert(b.name.clone()) {
            ck.diag(&loc, format!("duplicate buffer name `{}`", b.name));
        }
        if b.shape.is_empty() {
            ck.diag(&loc, format!("buffer `{}` has empty shape", b.name));
        }
        if b.shape.iter().any(|&d| d < 1) {
            ck.diag(&loc, format!("buffer `{}` has non-positive extent", b.name));
        }
    }
    let mut bound = Vec::new();
    for (i, s) in p.root.iter().enumerate() {
        ck.check_stmt(s, &super::NodePath(alloc::vec![i]), &mut bound);
    }
    let reads = core::mem::take(&mut ck.reads);
    for (block, buffer, pos, loc) in reads {
        let Some(b) = p.buffer(&buffer) else { continue };
        if b.role == BufferRole::Input {
            continue;
        }
        match ck.writers.get(&buffer) {
            None => ck.diag(&loc, format!("block `{block}` reads `{buffer}` which is never written")),
            Some((w, wpos)) if *wpos >= pos => ck.diag(
                &loc,
                format!("block `{block}` reads `{buffer}` before its producer `{w}` (cycle or misordering)"),
            ),
            _ => {}
        }
    }
    for b in &p.buffers {
        if b.role == BufferRole::Output && !ck.writers.contains_key(&b.name) {
            ck.diag("buffers", format!("output buffer `{}` is never written", b.name));
        }
    }
    if ck.diags.is_empty() {
        Ok(())
    } else {
        Err(ck.diags)
    }
}
