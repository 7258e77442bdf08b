//! Block relocation: compute-at in both directions and inlining.
//!
//! A block `X` is *eligible* when it is elementwise (a data-parallel store
//! whose indices are exactly its own loop variables, covering the whole
//! output buffer), its nest holds nothing else and sits at the root, and it
//! has a counterpart:
//!
//! * the single consumer of its intermediate output (forward: `X` is computed
//!   at the start of a consumer loop, over the region that iteration reads), or
//! * otherwise the single producer among the buffers it reads (reverse: `X` is
//!   computed at the end of a producer loop, over the region that iteration
//!   finishes).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::loops::Namer;
use super::{Result, ScheduleError};
use crate::analysis::{self, interval, linearize, Access, Affine, Atom};
use crate::ir::{validate_ir, BufferRole, Compute, Expr, Loop, LoopKind, NodePath, Stmt, TensorProgram};
use crate::trace::Location;

/// The block a relocation is expressed against.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Counterpart {
    Consumer(String),
    Producer(String),
}

impl Counterpart {
    pub fn block(&self) -> &str {
        match self {
            Counterpart::Consumer(b) | Counterpart::Producer(b) => b,
        }
    }

    /// Variables of the loops enclosing the counterpart, outermost first.
    pub fn loops(&self, p: &TensorProgram) -> Vec<String> {
        p.block_path(self.block())
            .map(|path| p.enclosing_loops(&path).iter().map(|l| l.var.clone()).collect())
            .unwrap_or_default()
    }
}

pub(crate) enum Place {
    Root,
    Inline,
    Loop(String),
}

struct Leaf<'a> {
    path: NodePath,
    stmt: &'a Stmt,
    loops: Vec<&'a Loop>,
}

fn leaf<'a>(p: &'a TensorProgram, name: &str) -> Result<Leaf<'a>> {
    let path = p
        .block_path(name)
        .ok_or_else(|| ScheduleError::DeadHandle(format!("block `{name}` no longer exists")))?;
    let stmt = p.stmt(&path).expect("block path");
    let loops = p.enclosing_loops(&path);
    Ok(Leaf { path, stmt, loops })
}

fn illegal(msg: String) -> ScheduleError {
    ScheduleError::Illegal(msg)
}

/// For an elementwise block: its loop variables (outermost first) paired
/// with the store dimension each one indexes.
fn elementwise_dims(p: &TensorProgram, x: &Leaf<'_>) -> Option<Vec<(String, usize)>> {
    let c = x.stmt.as_compute()?;
    if c.init.is_some() || c.epilogue.is_some() || c.indices.len() != x.loops.len() {
        return None;
    }
    let shape = &p.buffer(&c.buffer)?.shape;
    let mut out = Vec::new();
    for l in &x.loops {
        let d = c.indices.iter().position(|e| matches!(e, Expr::Var(v) if *v == l.var))?;
        if shape[d] != l.extent {
            return None;
        }
        out.push((l.var.clone(), d));
    }
    Some(out)
}

fn exclusive_at_root(x: &Leaf<'_>) -> bool {
    x.path.0.len() == x.loops.len() + 1 && x.loops.iter().all(|l| l.body.len() == 1)
}

/// The counterpart of a block, if it has one (see module docs).
pub fn counterpart(p: &TensorProgram, name: &str) -> Option<Counterpart> {
    let x = p.block_path(name).and_then(|path| p.stmt(&path))?;
    let out = x.written_buffer()?;
    if p.buffer(out).is_some_and(|b| b.role == BufferRole::Intermediate) {
        let readers = p.readers_of(out);
        if readers.len() == 1 {
            return Some(Counterpart::Consumer(readers[0].clone()));
        }
    }
    let produced: BTreeSet<&str> = x
        .read_buffers()
        .into_iter()
        .filter(|b| *b != out && p.buffer(b).is_some_and(|buf| buf.role != BufferRole::Input))
        .collect();
    if produced.len() == 1 {
        return p.writer_of(produced.first().expect("one")).map(Counterpart::Producer);
    }
    None
}

fn eligible<'a>(p: &'a TensorProgram, name: &str) -> Result<(Leaf<'a>, Vec<(String, usize)>, Counterpart)> {
    let x = leaf(p, name)?;
    let dims = elementwise_dims(p, &x)
        .ok_or_else(|| ScheduleError::NotEligible(format!("block `{name}` is not elementwise")))?;
    if !exclusive_at_root(&x) {
        return Err(ScheduleError::NotEligible(format!("block `{name}` does not own a root-level nest")));
    }
    let cp = counterpart(p, name)
        .ok_or_else(|| ScheduleError::NotEligible(format!("block `{name}` has no single consumer or producer")))?;
    Ok((x, dims, cp))
}

/// True if the block can be relocated (the precondition of
/// `sample_compute_location`).
pub fn is_eligible(p: &TensorProgram, name: &str) -> bool {
    eligible(p, name).is_ok()
}

/// Splits an index into the part fixed during one iteration of the target
/// loop and the part varying with the `inner` loops.
fn partition(e: &Expr, inner: &BTreeSet<String>) -> Result<(Affine, Affine)> {
    let aff = linearize(e).ok_or_else(|| illegal(format!("index `{e}` is not affine")))?;
    let mut outer = Affine { terms: BTreeMap::new(), constant: aff.constant };
    let mut var = Affine::default();
    for (atom, c) in aff.terms {
        let hit = match &atom {
            Atom::Var(v) => inner.contains(v),
            Atom::Opaque(x) => {
                let mut vs = BTreeSet::new();
                x.collect_vars(&mut vs);
                let n = vs.iter().filter(|v| inner.contains(*v)).count();
                if n != 0 && n != vs.len() {
                    return Err(illegal(format!("index `{e}` mixes loops inside and outside the target")));
                }
                n != 0
            }
        };
        if hit {
            var.terms.insert(atom, c);
        } else {
            outer.terms.insert(atom, c);
        }
    }
    Ok((outer, var))
}

fn ranges(loops: &[&Loop]) -> BTreeMap<String, (i64, i64)> {
    analysis::full_ranges(loops)
}

/// Wraps `leaf` in fresh loops for `dims` (`(x var, base, extent)`), mapping
/// each old variable to `base + new` (or `base` when the extent is 1).
fn rebuild(x: &Compute, dims: &[(String, Expr, i64)], namer: &mut Namer) -> Stmt {
    let mut subst = BTreeMap::new();
    let mut new_loops = Vec::new();
    for (v, base, extent) in dims {
        if *extent > 1 {
            let nv = namer.fresh(v);
            subst.insert(v.clone(), Expr::add(base.clone(), Expr::var(nv.clone())));
            new_loops.push((nv, *extent));
        } else {
            subst.insert(v.clone(), base.clone());
        }
    }
    let mut s = Stmt::Compute(x.clone());
    s.map_exprs(&mut |e: &Expr| e.substitute(&subst));
    let mut body = alloc::vec![s];
    for (var, extent) in new_loops.into_iter().rev() {
        body = alloc::vec![Stmt::Loop(Loop { var, extent, kind: LoopKind::Serial, body })];
    }
    body.pop().expect("stmt")
}

/// Loops of `target`'s nest strictly inside `var`, or an error if `var` does
/// not enclose it.
fn split_at<'a>(target: &Leaf<'a>, var: &str) -> Result<(Vec<&'a Loop>, Vec<&'a Loop>)> {
    let pos = target
        .loops
        .iter()
        .position(|l| l.var == var)
        .ok_or_else(|| illegal(format!("loop `{var}` does not enclose the counterpart")))?;
    Ok((target.loops[..=pos].to_vec(), target.loops[pos + 1..].to_vec()))
}

fn forward(
    p: &TensorProgram,
    x: &Leaf<'_>,
    dims: &[(String, usize)],
    consumer: &str,
    var: &str,
    namer: &mut Namer,
) -> Result<TensorProgram> {
    let xc = x.stmt.as_compute().expect("elementwise");
    let c = leaf(p, consumer)?;
    let (outer, inner) = split_at(&c, var)?;
    let inner_vars: BTreeSet<String> = inner.iter().map(|l| l.var.clone()).collect();
    let inner_ranges = ranges(&inner);
    let mut accesses: Vec<Access> =
        analysis::leaf_accesses(c.stmt).into_iter().filter(|a| !a.is_write && a.buffer == xc.buffer).collect();
    if let Some(cc) = c.stmt.as_compute() {
        accesses.extend(analysis::epilogue_accesses(cc).into_iter().filter(|a| a.buffer == xc.buffer));
    }
    if accesses.is_empty() {
        return Err(illegal(format!("`{consumer}` does not read `{}`", xc.buffer)));
    }
    let shape = &p.buffer(&xc.buffer).expect("buffer").shape;
    let outer_ranges = ranges(&outer);
    let mut region: Vec<(Affine, i64, i64)> = Vec::new();
    for d in 0..shape.len() {
        let mut base: Option<Affine> = None;
        let (mut lo, mut hi) = (i64::MAX, i64::MIN);
        for a in &accesses {
            let (o, v) = partition(&a.indices[d], &inner_vars)?;
            match &base {
                None => base = Some(o),
                Some(b) if *b == o => {}
                Some(_) => return Err(illegal(format!("reads of `{}` disagree on their outer offset", xc.buffer))),
            }
            let (l, h) = interval(&v.to_expr(), &inner_ranges)
                .ok_or_else(|| illegal(format!("cannot bound reads of `{}`", xc.buffer)))?;
            lo = lo.min(l);
            hi = hi.max(h + a.tile[d] - 1);
        }
        let base = base.expect("non-empty");
        let (bl, bh) = interval(&base.to_expr(), &outer_ranges)
            .ok_or_else(|| illegal(format!("cannot bound reads of `{}`", xc.buffer)))?;
        if bl + lo < 0 || bh + hi > shape[d] - 1 {
            return Err(illegal(format!("region of `{}` may leave its bounds", xc.buffer)));
        }
        region.push((base, lo, hi));
    }
    let new_dims: Vec<(String, Expr, i64)> = dims
        .iter()
        .map(|(v, d)| {
            let (base, lo, hi) = &region[*d];
            (v.clone(), Expr::add(base.to_expr(), Expr::Int(*lo)), hi - lo + 1)
        })
        .collect();
    let nest = rebuild(xc, &new_dims, namer);
    let mut q = p.clone();
    q.remove_stmt(&NodePath(alloc::vec![x.path.0[0]]));
    let lpath = q.loop_path(var).expect("target loop");
    q.body_mut(&lpath).expect("loop body").insert(0, nest);
    Ok(q)
}

/// `x`'s loads of the producer's buffer, as the `x` variable read along each
/// buffer dimension.
fn load_pattern(xc: &Compute, y: &str, nloops: usize) -> Result<Vec<String>> {
    let mut pattern: Option<&[Expr]> = None;
    for (b, idx) in xc.value.loads() {
        if b != y {
            continue;
        }
        match pattern {
            None => pattern = Some(idx),
            Some(p) if p == idx => {}
            Some(_) => return Err(illegal(format!("block `{}` reads `{y}` at several indices", xc.block))),
        }
    }
    let idx = pattern.ok_or_else(|| illegal(format!("block `{}` does not read `{y}`", xc.block)))?;
    let vars: Vec<String> = idx
        .iter()
        .map(|e| match e {
            Expr::Var(v) => Ok(v.clone()),
            _ => Err(illegal(format!("block `{}` reads `{y}` at a non-trivial index", xc.block))),
        })
        .collect::<Result<_>>()?;
    let distinct: BTreeSet<&String> = vars.iter().collect();
    if distinct.len() != vars.len() || vars.len() != nloops {
        return Err(illegal(format!("block `{}` does not read `{y}` elementwise", xc.block)));
    }
    Ok(vars)
}

/// Checks that everything `x` reads besides `y` is produced before `producer`.
fn other_reads_ready(p: &TensorProgram, xc: &Compute, y: &str, producer: &str) -> Result<()> {
    let order: Vec<String> = p.blocks().into_iter().map(|(n, _)| n).collect();
    let pos = |b: &str| order.iter().position(|n| n == b);
    let ppos = pos(producer).expect("producer");
    for (b, _) in xc.value.loads() {
        if b == y || p.buffer(b).is_some_and(|buf| buf.role == BufferRole::Input) {
            continue;
        }
        match p.writer_of(b).and_then(|w| pos(&w)) {
            Some(w) if w < ppos => {}
            _ => return Err(illegal(format!("`{b}` is not ready before `{producer}`"))),
        }
    }
    Ok(())
}

fn reverse(
    p: &TensorProgram,
    x: &Leaf<'_>,
    dims: &[(String, usize)],
    producer: &str,
    var: &str,
    namer: &mut Namer,
) -> Result<TensorProgram> {
    let xc = x.stmt.as_compute().expect("elementwise");
    let pr = leaf(p, producer)?;
    let y = pr.stmt.written_buffer().expect("producer writes").to_string();
    let pattern = load_pattern(xc, &y, dims.len())?;
    other_reads_ready(p, xc, &y, producer)?;
    let (_, inner) = split_at(&pr, var)?;
    for r in analysis::reduction_loops(pr.stmt, &pr.loops) {
        if !inner.iter().any(|l| l.var == r.var) {
            return Err(illegal(format!("reduction loop `{}` of `{producer}` is not inside `{var}`", r.var)));
        }
    }
    let inner_vars: BTreeSet<String> = inner.iter().map(|l| l.var.clone()).collect();
    let extent_of: BTreeMap<&str, i64> = inner.iter().map(|l| (l.var.as_str(), l.extent)).collect();
    let store = analysis::leaf_accesses(pr.stmt).into_iter().next().expect("store access");
    let mut used = BTreeSet::new();
    let mut region = Vec::new();
    for (d, e) in store.indices.iter().enumerate() {
        let (base, v) = partition(e, &inner_vars)?;
        let mut terms: Vec<(i64, i64)> = Vec::new();
        for (atom, c) in &v.terms {
            let Atom::Var(name) = atom else {
                return Err(illegal(format!("store of `{producer}` is not a box inside `{var}`")));
            };
            if !used.insert(name.clone()) {
                return Err(illegal(format!("loop `{name}` indexes several dimensions of `{y}`")));
            }
            if extent_of[name.as_str()] > 1 {
                terms.push((*c, extent_of[name.as_str()]));
            }
        }
        if store.tile[d] > 1 {
            terms.push((1, store.tile[d]));
        }
        terms.sort();
        let mut len = 1;
        for (c, ext) in terms {
            if c != len {
                return Err(illegal(format!("store of `{producer}` is not a box inside `{var}`")));
            }
            len *= ext;
        }
        region.push((base.to_expr(), len));
    }
    let new_dims: Vec<(String, Expr, i64)> = dims
        .iter()
        .map(|(v, _)| {
            let d = pattern.iter().position(|pv| pv == v).expect("elementwise pattern");
            (v.clone(), region[d].0.clone(), region[d].1)
        })
        .collect();
    let nest = rebuild(xc, &new_dims, namer);
    let mut q = p.clone();
    q.remove_stmt(&NodePath(alloc::vec![x.path.0[0]]));
    let lpath = q.loop_path(var).expect("target loop");
    q.body_mut(&lpath).expect("loop body").push(nest);
    Ok(q)
}

pub(crate) fn apply(p: &TensorProgram, name: &str, place: &Place, namer: &mut Namer) -> Result<TensorProgram> {
    match place {
        Place::Root => {
            leaf(p, name)?;
            Ok(p.clone())
        }
        Place::Inline => inline(p, name),
        Place::Loop(var) => {
            let (x, dims, cp) = eligible(p, name)?;
            match cp {
                Counterpart::Consumer(c) => forward(p, &x, &dims, &c, var, namer),
                Counterpart::Producer(pr) => reverse(p, &x, &dims, &pr, var, namer),
            }
        }
    }
}

/// Substitutes an elementwise block into its consumer, or composes it onto
/// its producer's result.
pub(crate) fn inline(p: &TensorProgram, name: &str) -> Result<TensorProgram> {
    let (x, dims, cp) = eligible(p, name)?;
    let xc = x.stmt.as_compute().expect("elementwise");
    let mut q = p.clone();
    match cp {
        Counterpart::Consumer(consumer) => {
            let c = leaf(p, &consumer)?;
            let Stmt::Compute(cc) = c.stmt else {
                return Err(illegal(format!("cannot inline into intrinsic `{consumer}`")));
            };
            let mut body = |idx: &[Expr]| {
                let subst: BTreeMap<String, Expr> = dims.iter().map(|(v, d)| (v.clone(), idx[*d].clone())).collect();
                xc.value.substitute(&subst)
            };
            let mut new = cc.clone();
            new.value = cc.value.replace_loads(&xc.buffer, &mut body);
            new.init = cc.init.as_ref().map(|e| e.replace_loads(&xc.buffer, &mut body));
            new.epilogue = cc.epilogue.as_ref().map(|e| e.replace_loads(&xc.buffer, &mut body));
            *q.stmt_mut(&c.path).expect("consumer") = Stmt::Compute(new);
            q.remove_stmt(&x.path);
            q.buffers.retain(|b| b.name != xc.buffer);
        }
        Counterpart::Producer(producer) => {
            let pr = leaf(p, &producer)?;
            let Stmt::Compute(pc) = pr.stmt else {
                return Err(illegal(format!("cannot inline into intrinsic `{producer}`")));
            };
            let y = pc.buffer.clone();
            let ybuf = p.buffer(&y).expect("buffer");
            if ybuf.role != BufferRole::Intermediate || p.readers_of(&y) != [name.to_string()] {
                return Err(illegal(format!("`{y}` is needed beyond block `{name}`")));
            }
            let pattern = load_pattern(xc, &y, dims.len())?;
            other_reads_ready(p, xc, &y, &producer)?;
            for (d, v) in pattern.iter().enumerate() {
                let ext = x.loops.iter().find(|l| l.var == *v).expect("x loop").extent;
                if ybuf.shape[d] != ext {
                    return Err(illegal(format!("block `{name}` does not cover `{y}`")));
                }
            }
            // x variable -> producer index expression along the matching dimension
            let subst: BTreeMap<String, Expr> =
                pattern.iter().enumerate().map(|(d, v)| (v.clone(), pc.indices[d].clone())).collect();
            let out_indices: Vec<Expr> = xc.indices.iter().map(|e| e.substitute(&subst)).collect();
            let out_load = Expr::load(xc.buffer.clone(), out_indices.clone());
            let retarget = |e: &Expr| e.replace_loads(&y, &mut |_| out_load.clone());
            let compose = |inner: Expr| xc.value.substitute(&subst).replace_loads(&y, &mut |_| inner.clone());
            let mut new = pc.clone();
            new.buffer = xc.buffer.clone();
            new.indices = out_indices;
            if pc.is_reduction() {
                new.value = retarget(&pc.value);
                let inner = match &pc.epilogue {
                    Some(g) => retarget(g),
                    None => out_load.clone(),
                };
                new.epilogue = Some(compose(inner));
            } else {
                new.value = compose(pc.value.clone());
            }
            *q.stmt_mut(&pr.path).expect("producer") = Stmt::Compute(new);
            q.remove_stmt(&x.path);
            q.buffers.retain(|b| b.name != y);
        }
    }
    Ok(q)
}

/// Legal locations of a block against the current program.
pub(crate) fn location_domain(p: &TensorProgram, name: &str) -> Result<Vec<Location>> {
    let (_, _, cp) = eligible(p, name)?;
    let ok = |r: Result<TensorProgram>| r.is_ok_and(|q| validate_ir(&q).is_ok());
    let mut out = alloc::vec![Location::Root];
    if ok(inline(p, name)) {
        out.push(Location::Inline);
    }
    let cpath = p.block_path(cp.block()).expect("counterpart");
    for (idx, l) in p.enclosing_loops(&cpath).iter().enumerate() {
        if l.extent <= 1 {
            continue;
        }
        let mut namer = Namer::new(0, p);
        if ok(apply(p, name, &Place::Loop(l.var.clone()), &mut namer)) {
            out.push(Location::Loop(idx));
        }
    }
    Ok(out)
}
