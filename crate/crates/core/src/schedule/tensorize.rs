//! Tensorization onto the `tu.mma4` intrinsic.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{LoopRef, Result, Schedule, ScheduleError};
use crate::analysis::{linearize, Atom};
use crate::ir::{Expr, Intrinsic, Loop, Operand, Stmt, MMA4, MMA4_TILE};
use crate::trace::{Attr, Input, Op};

fn mismatch(msg: String) -> ScheduleError {
    ScheduleError::PatternMismatch(msg)
}

/// Base of index `e` once the term `var` (coefficient 1) is removed; no other
/// tile variable may remain.
fn base_of(e: &Expr, var: &str, tile: &[&str], what: &str) -> Result<Expr> {
    let mut aff = linearize(e).ok_or_else(|| mismatch(format!("{what} index `{e}` is not affine")))?;
    if aff.coeff(var) != 1 {
        return Err(mismatch(format!("{what} index `{e}` must step by 1 along `{var}`")));
    }
    aff.terms.remove(&Atom::Var(var.to_string()));
    if let Some(t) = tile.iter().find(|t| aff.depends_on(t)) {
        return Err(mismatch(format!("{what} index `{e}` also depends on tile loop `{t}`")));
    }
    Ok(aff.to_expr())
}

/// The single tile variable `e` depends on.
fn tile_var<'a>(e: &Expr, tile: &[&'a str], what: &str) -> Result<&'a str> {
    let aff = linearize(e).ok_or_else(|| mismatch(format!("{what} index `{e}` is not affine")))?;
    let used: Vec<&str> = tile.iter().copied().filter(|t| aff.depends_on(t)).collect();
    match used.as_slice() {
        [v] => Ok(v),
        _ => Err(mismatch(format!("{what} index `{e}` must use exactly one tile loop"))),
    }
}

/// Matches the 4x4x4 nest rooted at `top` and builds the intrinsic call.
pub(crate) fn match_mma4(top: &Loop) -> Result<Intrinsic> {
    let mut loops = alloc::vec![top];
    let mut cur = top;
    while loops.len() < 3 {
        match cur.body.as_slice() {
            [Stmt::Loop(next)] => {
                cur = next;
                loops.push(cur);
            }
            _ => return Err(mismatch(format!("loop `{}` must contain exactly one loop", cur.var))),
        }
    }
    for l in &loops {
        if l.extent != MMA4_TILE {
            return Err(mismatch(format!("loop `{}` has extent {}, expected {MMA4_TILE}", l.var, l.extent)));
        }
    }
    let c = match cur.body.as_slice() {
        [Stmt::Compute(c)] => c,
        _ => return Err(mismatch(format!("loop `{}` must contain a single compute block", cur.var))),
    };
    if c.init.is_none() || c.epilogue.is_some() {
        return Err(mismatch(format!("block `{}` is not a plain accumulation", c.block)));
    }
    let update = c
        .reduction_update()
        .ok_or_else(|| mismatch(format!("block `{}` is not of the form C += update", c.block)))?;
    if c.indices.len() != 2 {
        return Err(mismatch(format!("output `{}` is not two-dimensional", c.buffer)));
    }
    let Expr::Mul(x, y) = update else {
        return Err(mismatch(format!("update of `{}` is not a product", c.block)));
    };
    let (Expr::Load { buffer: bx, indices: ix }, Expr::Load { buffer: by, indices: iy }) = (x.as_ref(), y.as_ref())
    else {
        return Err(mismatch(format!("update of `{}` is not a product of two loads", c.block)));
    };
    if ix.len() != 2 || iy.len() != 2 {
        return Err(mismatch("operands are not two-dimensional".into()));
    }
    let tile: Vec<&str> = loops.iter().map(|l| l.var.as_str()).collect();
    let i = tile_var(&c.indices[0], &tile, "output")?;
    let j = tile_var(&c.indices[1], &tile, "output")?;
    let Some(k) = tile.iter().copied().find(|t| *t != i && *t != j) else {
        return Err(mismatch("output uses the same tile loop twice".into()));
    };
    if i == j {
        return Err(mismatch("output uses the same tile loop twice".into()));
    }
    let x_is_a = tile_var(&ix[0], &tile, "operand")? == i;
    let ((ba, ia), (bb, ib)) = if x_is_a { ((bx, ix), (by, iy)) } else { ((by, iy), (bx, ix)) };
    let operands = alloc::vec![
        Operand {
            buffer: c.buffer.clone(),
            offsets: alloc::vec![base_of(&c.indices[0], i, &tile, "output")?, base_of(&c.indices[1], j, &tile, "output")?],
        },
        Operand {
            buffer: ba.clone(),
            offsets: alloc::vec![base_of(&ia[0], i, &tile, "lhs")?, base_of(&ia[1], k, &tile, "lhs")?],
        },
        Operand {
            buffer: bb.clone(),
            offsets: alloc::vec![base_of(&ib[0], k, &tile, "rhs")?, base_of(&ib[1], j, &tile, "rhs")?],
        },
    ];
    Ok(Intrinsic { name: MMA4.to_string(), block: c.block.clone(), operands, init: c.init.clone() })
}

impl Schedule {
    /// Replaces the nest rooted at `l` by an intrinsic call.
    pub fn tensorize(&mut self, l: LoopRef, intrinsic: &str) -> Result<()> {
        if intrinsic != MMA4 {
            return Err(mismatch(format!("unknown intrinsic `{intrinsic}`")));
        }
        let lp = self.loop_of(l)?.clone();
        let intr = match_mma4(&lp)?;
        let mut p = self.program.clone();
        let path = p.loop_path(&lp.var).expect("live loop");
        *p.stmt_mut(&path).expect("path") = Stmt::Intrinsic(intr);
        self.commit(p)?;
        self.record(
            Op::Tensorize,
            alloc::vec![Input::Ref(l.0)],
            alloc::vec![Attr::Str(intrinsic.to_string())],
            Vec::new(),
            None,
        );
        Ok(())
    }
}
