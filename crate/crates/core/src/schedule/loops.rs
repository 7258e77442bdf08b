//! Loop-structure primitives: split, fuse, reorder and kind annotations.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{Factor, LoopRef, Result, RvRef, Schedule, ScheduleError};
use crate::analysis::{leaves, store_vars, value_vars};
use crate::ir::{Expr, Loop, LoopKind, NodePath, Stmt, TensorProgram};
use crate::trace::{Input, Op};

/// Generator of globally unique loop-variable names.
pub(crate) struct Namer {
    pub next: u64,
    taken: BTreeSet<String>,
}

impl Namer {
    pub fn new(next: u64, p: &TensorProgram) -> Self {
        Namer { next, taken: p.loop_vars().into_iter().collect() }
    }

    pub fn fresh(&mut self, base: &str) -> String {
        let stem = base.split('_').next().filter(|s| !s.is_empty()).unwrap_or("v");
        loop {
            let name = format!("{stem}_{}", self.next);
            self.next += 1;
            if self.taken.insert(name.clone()) {
                return name;
            }
        }
    }
}

fn substitute_body(body: &mut [Stmt], subst: &BTreeMap<String, Expr>) {
    for s in body {
        s.map_exprs(&mut |e: &Expr| e.substitute(subst));
    }
}

fn nest(loops: Vec<(String, i64)>, body: Vec<Stmt>) -> Stmt {
    let mut cur = body;
    for (var, extent) in loops.into_iter().rev() {
        cur = alloc::vec![Stmt::Loop(Loop { var, extent, kind: LoopKind::Serial, body: cur })];
    }
    cur.pop().expect("at least one loop")
}

/// Loops `vars` as a contiguous chain, each but the last having a single child.
fn chain(p: &TensorProgram, vars: &[String]) -> Result<(NodePath, Vec<Loop>)> {
    let top = p
        .loop_path(&vars[0])
        .ok_or_else(|| ScheduleError::DeadHandle(format!("loop `{}`", vars[0])))?;
    let mut out = Vec::new();
    let mut cur = p.stmt(&top).and_then(Stmt::as_loop).expect("loop");
    out.push(cur.clone());
    for v in &vars[1..] {
        match cur.body.as_slice() {
            [Stmt::Loop(next)] if next.var == *v => {
                cur = next;
                out.push(cur.clone());
            }
            _ => {
                return Err(ScheduleError::NotPerfectNest(format!(
                    "`{v}` is not the only child of `{}`",
                    cur.var
                )))
            }
        }
    }
    Ok((top, out))
}

/// Largest extent `unroll` accepts.
pub const MAX_UNROLL: i64 = 64;

impl Schedule {
    fn resolve_factors(&self, extent: i64, factors: &[Factor]) -> Result<Vec<i64>> {
        if factors.is_empty() {
            return Err(ScheduleError::InvalidArgument("split needs at least one factor".into()));
        }
        let mut vals = Vec::with_capacity(factors.len());
        let mut infer = None;
        for (i, f) in factors.iter().enumerate() {
            match f {
                Factor::Int(v) => vals.push(*v),
                Factor::Rv(rv) => vals.push(self.int_value(*rv)?),
                Factor::Infer => {
                    if infer.replace(i).is_some() {
                        return Err(ScheduleError::InvalidArgument("at most one inferred factor".into()));
                    }
                    vals.push(1);
                }
            }
        }
        if let Some(&bad) = vals.iter().find(|v| **v < 1) {
            return Err(ScheduleError::InvalidArgument(format!("non-positive split factor {bad}")));
        }
        let known: i64 = vals.iter().product();
        if let Some(i) = infer {
            if extent % known != 0 {
                return Err(ScheduleError::ProductMismatch { product: known, extent });
            }
            vals[i] = extent / known;
        } else if known != extent {
            return Err(ScheduleError::ProductMismatch { product: known, extent });
        }
        Ok(vals)
    }

    /// Perfect split of a loop into nested loops of the given extents.
    pub fn split(&mut self, l: LoopRef, factors: &[Factor]) -> Result<Vec<LoopRef>> {
        let lp = self.loop_of(l)?.clone();
        let vals = self.resolve_factors(lp.extent, factors)?;
        let mut namer = Namer::new(self.next_var, &self.program);
        let vars: Vec<String> = vals.iter().map(|_| namer.fresh(&lp.var)).collect();
        let mut recombined = Expr::Int(0);
        let mut stride = 1;
        for (v, f) in vars.iter().zip(&vals).rev() {
            recombined = Expr::add(Expr::mul(Expr::var(v.clone()), Expr::Int(stride)), recombined);
            stride *= f;
        }
        let mut body = lp.body.clone();
        substitute_body(&mut body, &BTreeMap::from([(lp.var.clone(), recombined)]));
        let new = nest(vars.iter().cloned().zip(vals.iter().copied()).collect(), body);
        let mut p = self.program.clone();
        let path = p.loop_path(&lp.var).expect("live loop");
        *p.stmt_mut(&path).expect("path") = new;
        self.commit(p)?;
        self.next_var = namer.next;
        let outs: Vec<u32> = vars.into_iter().map(|v| self.new_ref(super::RefValue::Loop(v))).collect();
        let mut inputs = alloc::vec![Input::Ref(l.0)];
        inputs.extend(factors.iter().map(|f| match f {
            Factor::Int(v) => Input::Int(*v),
            Factor::Rv(rv) => Input::Ref(rv.0),
            Factor::Infer => Input::Infer,
        }));
        self.record(Op::Split, inputs, Vec::new(), outs.clone(), None);
        Ok(outs.into_iter().map(LoopRef).collect())
    }

    /// Fuses a perfectly nested chain of loops into one.
    pub fn fuse(&mut self, loops: &[LoopRef]) -> Result<LoopRef> {
        if loops.is_empty() {
            return Err(ScheduleError::InvalidArgument("fuse needs at least one loop".into()));
        }
        let vars: Vec<String> = loops.iter().map(|l| self.loop_var(*l).map(str::to_string)).collect::<Result<_>>()?;
        let (top, chain) = chain(&self.program, &vars)?;
        let innermost = chain.last().expect("non-empty");
        for leaf in innermost.body.iter().flat_map(leaves) {
            let reduction = matches!(leaf, Stmt::Intrinsic(_)) || leaf.as_compute().is_some_and(|c| c.is_reduction());
            if !reduction {
                continue;
            }
            let store = store_vars(leaf);
            let spatial = vars.iter().filter(|v| store.contains(*v)).count();
            if spatial != 0 && spatial != vars.len() {
                return Err(ScheduleError::Illegal(format!(
                    "cannot fuse spatial and reduction loops of block `{}`",
                    leaf.block_name().unwrap_or("?")
                )));
            }
            if spatial == 0 {
                let value = value_vars(leaf);
                if let Some(v) = vars.iter().find(|v| !value.contains(*v)) {
                    return Err(ScheduleError::Illegal(format!(
                        "loop `{v}` is unused by reduction block `{}`",
                        leaf.block_name().unwrap_or("?")
                    )));
                }
            }
        }
        let mut namer = Namer::new(self.next_var, &self.program);
        let fused = if vars.len() == 1 { vars[0].clone() } else { namer.fresh(&vars[0]) };
        let mut p = self.program.clone();
        if vars.len() > 1 {
            let extent: i64 = chain.iter().map(|l| l.extent).product();
            let mut subst = BTreeMap::new();
            let mut stride = 1;
            for (t, l) in chain.iter().enumerate().rev() {
                let q = Expr::floor_div(Expr::var(fused.clone()), stride);
                subst.insert(l.var.clone(), if t == 0 { q } else { Expr::floor_mod(q, l.extent) });
                stride *= l.extent;
            }
            let mut body = innermost.body.clone();
            substitute_body(&mut body, &subst);
            *p.stmt_mut(&top).expect("path") =
                Stmt::Loop(Loop { var: fused.clone(), extent, kind: LoopKind::Serial, body });
        }
        self.commit(p)?;
        self.next_var = namer.next;
        let out = self.new_ref(super::RefValue::Loop(fused));
        let inputs = loops.iter().map(|l| Input::Ref(l.0)).collect();
        self.record(Op::Fuse, inputs, Vec::new(), alloc::vec![out], None);
        Ok(LoopRef(out))
    }

    /// Permutes a contiguous perfect chain of loops into the listed order.
    pub fn reorder(&mut self, loops: &[LoopRef]) -> Result<()> {
        let vars: Vec<String> = loops.iter().map(|l| self.loop_var(*l).map(str::to_string)).collect::<Result<_>>()?;
        let set: BTreeSet<&String> = vars.iter().collect();
        if set.len() != vars.len() {
            return Err(ScheduleError::InvalidArgument("reorder lists a loop twice".into()));
        }
        // Locate the chain: the outermost listed loop, then follow single
        // children until every listed loop has been seen.
        let paths: Vec<NodePath> = vars.iter().map(|v| self.program.loop_path(v).expect("live")).collect();
        let top = paths.iter().min_by_key(|p| p.0.len()).expect("non-empty").clone();
        if paths.iter().any(|p| !top.is_prefix_of(p)) {
            return Err(ScheduleError::NotPerfectNest("loops are not nested in one another".into()));
        }
        let mut chain_loops = Vec::new();
        let mut cur = self.program.stmt(&top).and_then(Stmt::as_loop).expect("loop");
        loop {
            if !set.contains(&cur.var) {
                return Err(ScheduleError::NotPerfectNest(format!("unlisted loop `{}` sits inside the chain", cur.var)));
            }
            chain_loops.push(cur.clone());
            if chain_loops.len() == vars.len() {
                break;
            }
            match cur.body.as_slice() {
                [Stmt::Loop(next)] => cur = next,
                _ => {
                    return Err(ScheduleError::NotPerfectNest(format!(
                        "loop `{}` has other statements beside the next listed loop",
                        cur.var
                    )))
                }
            }
        }
        let body = chain_loops.last().expect("non-empty").body.clone();
        let by_var: BTreeMap<&String, &Loop> = chain_loops.iter().map(|l| (&l.var, l)).collect();
        let mut cur_body = body;
        for v in vars.iter().rev() {
            let l = by_var[v];
            cur_body = alloc::vec![Stmt::Loop(Loop { var: l.var.clone(), extent: l.extent, kind: l.kind, body: cur_body })];
        }
        let mut p = self.program.clone();
        *p.stmt_mut(&top).expect("path") = cur_body.pop().expect("loop");
        self.commit(p)?;
        let inputs = loops.iter().map(|l| Input::Ref(l.0)).collect();
        self.record(Op::Reorder, inputs, Vec::new(), Vec::new(), None);
        Ok(())
    }

    fn check_data_parallel(&self, lp: &Loop) -> Result<()> {
        for leaf in lp.body.iter().flat_map(leaves) {
            if store_vars(leaf).contains(&lp.var) {
                continue;
            }
            let name = leaf.block_name().unwrap_or("?");
            let reduction = matches!(leaf, Stmt::Intrinsic(_)) || leaf.as_compute().is_some_and(|c| c.is_reduction());
            return Err(ScheduleError::Illegal(if reduction && value_vars(leaf).contains(&lp.var) {
                format!("reduction-carried dependence on loop `{}` in block `{name}`", lp.var)
            } else {
                format!("loop `{}` does not index the store of block `{name}`", lp.var)
            }));
        }
        Ok(())
    }

    fn set_kind(&mut self, var: &str, kind: LoopKind) -> Result<()> {
        let mut p = self.program.clone();
        let path = p.loop_path(var).expect("live loop");
        p.stmt_mut(&path).and_then(Stmt::as_loop_mut).expect("loop").kind = kind;
        self.commit(p)
    }

    pub fn parallel(&mut self, l: LoopRef) -> Result<()> {
        let lp = self.loop_of(l)?.clone();
        self.check_data_parallel(&lp)?;
        self.set_kind(&lp.var, LoopKind::Parallel)?;
        self.record(Op::Parallel, alloc::vec![Input::Ref(l.0)], Vec::new(), Vec::new(), None);
        Ok(())
    }

    pub fn vectorize(&mut self, l: LoopRef) -> Result<()> {
        let lp = self.loop_of(l)?.clone();
        self.check_data_parallel(&lp)?;
        if lp.body.iter().any(|s| matches!(s, Stmt::Loop(_))) {
            return Err(ScheduleError::Illegal(format!("loop `{}` is not innermost", lp.var)));
        }
        self.set_kind(&lp.var, LoopKind::Vectorized)?;
        self.record(Op::Vectorize, alloc::vec![Input::Ref(l.0)], Vec::new(), Vec::new(), None);
        Ok(())
    }

    /// Unrolls a loop of extent at most 64. With `max_extent`, the loop is
    /// only marked when its extent does not exceed that sampled bound (0
    /// leaves it serial) nor 64.
    pub fn unroll(&mut self, l: LoopRef, max_extent: Option<RvRef>) -> Result<()> {
        let lp = self.loop_of(l)?.clone();
        let apply = match max_extent {
            Some(rv) => lp.extent <= self.int_value(rv)?.min(MAX_UNROLL),
            None if lp.extent > MAX_UNROLL => {
                return Err(ScheduleError::Illegal(format!(
                    "cannot unroll loop `{}` of extent {} (> {MAX_UNROLL})",
                    lp.var, lp.extent
                )))
            }
            None => true,
        };
        if apply {
            self.set_kind(&lp.var, LoopKind::Unrolled)?;
        }
        let mut inputs = alloc::vec![Input::Ref(l.0)];
        inputs.extend(max_extent.map(|rv| Input::Ref(rv.0)));
        self.record(Op::Unroll, inputs, Vec::new(), Vec::new(), None);
        Ok(())
    }
}
