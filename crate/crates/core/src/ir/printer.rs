use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use core::fmt::Write;

use super::{Expr, LoopKind, Stmt, TensorProgram};

/// Renames loop variables in binding (pre-)order through `name`.
pub(crate) fn rename_loop_vars(p: &TensorProgram, name: impl Fn(usize) -> String) -> TensorProgram {
    let mut map = BTreeMap::new();
    for (i, v) in p.loop_vars().into_iter().enumerate() {
        map.insert(v, name(i));
    }
    let mut out = p.clone();
    fn go(s: &mut Stmt, map: &BTreeMap<String, String>) {
        if let Stmt::Loop(l) = s {
            if let Some(n) = map.get(&l.var) {
                l.var = n.clone();
            }
            for c in &mut l.body {
                go(c, map);
            }
        } else {
            s.map_exprs(&mut |e: &Expr| e.rename_vars(map));
        }
    }
    for s in &mut out.root {
        go(s, &map);
    }
    out
}

/// Renames loop variables to `v0, v1, ...` in binding order.
pub fn normalize_vars(p: &TensorProgram) -> TensorProgram {
    rename_loop_vars(p, |i| format!("v{i}"))
}

fn indices(idx: &[Expr]) -> String {
    let mut s = String::new();
    for (i, e) in idx.iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        let _ = write!(s, "{e}");
    }
    s
}

/// Indentation-based listing of the loop tree, one line per loop header and
/// per store (reductions print their init on a separate line).
pub fn pretty_print(p: &TensorProgram) -> String {
    fn go(out: &mut String, s: &Stmt, depth: usize) {
        let pad = "  ".repeat(depth);
        match s {
            Stmt::Loop(l) => {
                let kind = match l.kind {
                    LoopKind::Serial => String::new(),
                    k => format!(" {}", k.as_str()),
                };
                let _ = writeln!(out, "{pad}for {} in 0..{}{}:", l.var, l.extent, kind);
                for c in &l.body {
                    go(out, c, depth + 1);
                }
            }
            Stmt::Compute(c) => {
                let target = format!("{}[{}]", c.buffer, indices(&c.indices));
                if let Some(init) = &c.init {
                    let _ = writeln!(out, "{pad}{target} = {init}  # init {}", c.block);
                }
                let _ = writeln!(out, "{pad}{target} = {}  # block {}", c.value, c.block);
                if let Some(ep) = &c.epilogue {
                    let _ = writeln!(out, "{pad}{target} = {ep}  # epilogue {}", c.block);
                }
            }
            Stmt::Intrinsic(i) => {
                let ops: alloc::vec::Vec<String> = i
                    .operands
                    .iter()
                    .map(|o| format!("{}[{}]", o.buffer, indices(&o.offsets)))
                    .collect();
                let init = i.init.as_ref().map(|e| format!(", init={e}")).unwrap_or_default();
                let _ = writeln!(out, "{pad}{}({}{})  # block {}", i.name, ops.join(", "), init, i.block);
            }
        }
    }
    let mut out = String::new();
    for s in &p.root {
        go(&mut out, s, 0);
    }
    out
}
