//! Affine index analysis shared by validation, scheduling and the machine model.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::ir::{Compute, Expr, Intrinsic, Loop, Stmt, TensorProgram, MMA4_TILE};

/// Term of an affine form: a loop variable or an opaque floor-div/mod atom.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Atom {
    Var(String),
    Opaque(Expr),
}

/// `constant + sum(coeff * atom)`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Affine {
    pub terms: BTreeMap<Atom, i64>,
    pub constant: i64,
}

impl Affine {
    fn scale(mut self, k: i64) -> Affine {
        self.constant = self.constant.wrapping_mul(k);
        for c in self.terms.values_mut() {
            *c = c.wrapping_mul(k);
        }
        self.terms.retain(|_, c| *c != 0);
        self
    }

    fn plus(mut self, other: Affine) -> Affine {
        self.constant = self.constant.wrapping_add(other.constant);
        for (a, c) in other.terms {
            *self.terms.entry(a).or_insert(0) += c;
        }
        self.terms.retain(|_, c| *c != 0);
        self
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of a plain variable term.
    pub fn coeff(&self, var: &str) -> i64 {
        self.terms.get(&Atom::Var(String::from(var))).copied().unwrap_or(0)
    }

    /// True if `var` appears anywhere, including inside opaque atoms.
    pub fn depends_on(&self, var: &str) -> bool {
        self.terms.iter().any(|(a, c)| match a {
            Atom::Var(v) => v == var && *c != 0,
            Atom::Opaque(e) => e.mentions(var),
        })
    }

    /// True if `var` appears only inside opaque atoms (never as a plain term).
    pub fn opaque_mentions(&self, var: &str) -> bool {
        self.terms.keys().any(|a| matches!(a, Atom::Opaque(e) if e.mentions(var)))
    }

    pub fn to_expr(&self) -> Expr {
        let mut e = Expr::Int(self.constant);
        for (a, c) in &self.terms {
            let atom = match a {
                Atom::Var(v) => Expr::Var(v.clone()),
                Atom::Opaque(x) => x.clone(),
            };
            e = Expr::add(e, Expr::mul(Expr::Int(*c), atom));
        }
        e
    }
}

/// Linearizes a quasi-affine expression; `None` if it contains loads,
/// non-constant products, guards, or division by a non-positive-constant.
pub fn linearize(e: &Expr) -> Option<Affine> {
    match e {
        Expr::Int(v) => Some(Affine { terms: BTreeMap::new(), constant: *v }),
        Expr::Var(v) => {
            let mut terms = BTreeMap::new();
            terms.insert(Atom::Var(v.clone()), 1);
            Some(Affine { terms, constant: 0 })
        }
        Expr::Add(a, b) => Some(linearize(a)?.plus(linearize(b)?)),
        Expr::Sub(a, b) => Some(linearize(a)?.plus(linearize(b)?.scale(-1))),
        Expr::Mul(a, b) => {
            let (la, lb) = (linearize(a)?, linearize(b)?);
            if la.is_constant() {
                Some(lb.scale(la.constant))
            } else if lb.is_constant() {
                Some(la.scale(lb.constant))
            } else {
                None
            }
        }
        Expr::Div(a, b) | Expr::Mod(a, b) => match b.as_ref() {
            Expr::Int(c) if *c > 0 => {
                linearize(a)?;
                let mut terms = BTreeMap::new();
                terms.insert(Atom::Opaque(e.clone()), 1);
                Some(Affine { terms, constant: 0 })
            }
            _ => None,
        },
        _ => None,
    }
}

pub fn is_quasi_affine(e: &Expr) -> bool {
    linearize(e).is_some()
}

/// Integer interval `[lo, hi]`.
pub type Interval = (i64, i64);

/// Interval bound of `e` given per-variable ranges (unlisted variables are
/// pinned to 0). Returns `None` for expressions containing loads.
pub fn interval(e: &Expr, ranges: &BTreeMap<String, Interval>) -> Option<Interval> {
    Some(match e {
        Expr::Int(v) => (*v, *v),
        Expr::Var(v) => ranges.get(v).copied().unwrap_or((0, 0)),
        Expr::Load { .. } => return None,
        Expr::Add(a, b) => {
            let (x, y) = (interval(a, ranges)?, interval(b, ranges)?);
            (x.0 + y.0, x.1 + y.1)
        }
        Expr::Sub(a, b) => {
            let (x, y) = (interval(a, ranges)?, interval(b, ranges)?);
            (x.0 - y.1, x.1 - y.0)
        }
        Expr::Mul(a, b) => {
            let (x, y) = (interval(a, ranges)?, interval(b, ranges)?);
            let c = [x.0 * y.0, x.0 * y.1, x.1 * y.0, x.1 * y.1];
            (*c.iter().min().unwrap(), *c.iter().max().unwrap())
        }
        Expr::Max(a, b) => {
            let (x, y) = (interval(a, ranges)?, interval(b, ranges)?);
            (x.0.max(y.0), x.1.max(y.1))
        }
        Expr::Min(a, b) => {
            let (x, y) = (interval(a, ranges)?, interval(b, ranges)?);
            (x.0.min(y.0), x.1.min(y.1))
        }
        Expr::Div(a, b) => {
            let x = interval(a, ranges)?;
            match b.as_ref() {
                Expr::Int(c) if *c > 0 => (x.0.div_euclid(*c), x.1.div_euclid(*c)),
                _ => return None,
            }
        }
        Expr::Mod(a, b) => {
            let x = interval(a, ranges)?;
            match b.as_ref() {
                Expr::Int(c) if *c > 0 => {
                    if x.0.div_euclid(*c) == x.1.div_euclid(*c) {
                        (x.0.rem_euclid(*c), x.1.rem_euclid(*c))
                    } else {
                        (0, c - 1)
                    }
                }
                _ => return None,
            }
        }
        Expr::Lt(..) | Expr::And(..) => (0, 1),
        Expr::Select { then, otherwise, .. } => {
            let (x, y) = (interval(then, ranges)?, interval(otherwise, ranges)?);
            (x.0.min(y.0), x.1.max(y.1))
        }
    })
}

/// A memory access performed by a leaf statement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Access {
    pub buffer: String,
    pub indices: Vec<Expr>,
    /// Per-dimension extent added on top of `indices` (1 for scalar accesses,
    /// the tile size for intrinsic operands).
    pub tile: Vec<i64>,
    pub is_write: bool,
}

fn scalar_access(buffer: &str, indices: &[Expr], is_write: bool) -> Access {
    Access {
        buffer: String::from(buffer),
        indices: indices.to_vec(),
        tile: alloc::vec![1; indices.len()],
        is_write,
    }
}

/// Accesses of one leaf. The store comes first, then loads in pre-order.
/// Loads of the epilogue are omitted; see [`epilogue_accesses`].
pub fn leaf_accesses(stmt: &Stmt) -> Vec<Access> {
    match stmt {
        Stmt::Loop(_) => Vec::new(),
        Stmt::Compute(c) => {
            let mut out = alloc::vec![scalar_access(&c.buffer, &c.indices, true)];
            for (b, idx) in c.value.loads() {
                out.push(scalar_access(b, idx, false));
            }
            out
        }
        Stmt::Intrinsic(i) => i
            .operands
            .iter()
            .enumerate()
            .map(|(n, o)| Access {
                buffer: o.buffer.clone(),
                indices: o.offsets.clone(),
                tile: alloc::vec![MMA4_TILE; o.offsets.len()],
                is_write: n == 0,
            })
            .collect(),
    }
}

pub fn epilogue_accesses(c: &Compute) -> Vec<Access> {
    c.epilogue
        .iter()
        .flat_map(|e| e.loads())
        .map(|(b, idx)| scalar_access(b, idx, false))
        .collect()
}

/// Variables referenced by the store indices of a leaf.
pub fn store_vars(stmt: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    match stmt {
        Stmt::Compute(c) => c.indices.iter().for_each(|e| e.collect_vars(&mut out)),
        Stmt::Intrinsic(i) => {
            if let Some(o) = i.operands.first() {
                o.offsets.iter().for_each(|e| e.collect_vars(&mut out));
            }
        }
        Stmt::Loop(_) => {}
    }
    out
}

/// Variables referenced by what a leaf reads (value or intrinsic inputs).
pub fn value_vars(stmt: &Stmt) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    match stmt {
        Stmt::Compute(c) => c.value.collect_vars(&mut out),
        Stmt::Intrinsic(i) => {
            for o in i.operands.iter().skip(1) {
                o.offsets.iter().for_each(|e| e.collect_vars(&mut out));
            }
        }
        Stmt::Loop(_) => {}
    }
    out
}

/// Enclosing loops that iterate a reduction of this leaf: referenced by the
/// read side but not by the store indices. Empty for data-parallel leaves.
pub fn reduction_loops<'a>(stmt: &Stmt, enclosing: &[&'a Loop]) -> Vec<&'a Loop> {
    let is_reduction = match stmt {
        Stmt::Compute(c) => c.is_reduction(),
        Stmt::Intrinsic(_) => true,
        Stmt::Loop(_) => false,
    };
    if !is_reduction {
        return Vec::new();
    }
    let store = store_vars(stmt);
    let value = value_vars(stmt);
    enclosing
        .iter()
        .filter(|l| value.contains(&l.var) && !store.contains(&l.var))
        .copied()
        .collect()
}

/// Spatial / reduction classification of a block's loops: a loop is spatial
/// if its variable appears in the store indices.
pub fn is_spatial(stmt: &Stmt, var: &str) -> bool {
    store_vars(stmt).contains(var)
}

/// Leaf statements inside a statement (the statement itself if a leaf).
pub fn leaves(stmt: &Stmt) -> Vec<&Stmt> {
    let mut out = Vec::new();
    fn go<'a>(s: &'a Stmt, out: &mut Vec<&'a Stmt>) {
        match s {
            Stmt::Loop(l) => l.body.iter().for_each(|c| go(c, out)),
            _ => out.push(s),
        }
    }
    go(stmt, &mut out);
    out
}

/// True if every expression in `stmt` is linearizable in its index positions.
pub fn all_indices_affine(stmt: &Stmt) -> bool {
    leaves(stmt).iter().all(|leaf| {
        leaf_accesses(leaf)
            .iter()
            .all(|a| a.indices.iter().all(|e| linearize(e).is_some_and(|l| l.terms.keys().all(|t| matches!(t, Atom::Var(_))))))
    })
}

/// Bounding box, per dimension, of the elements an access touches when the
/// listed loops range over their full extents and everything else is fixed
/// (pinned at 0). Returned as `(lo, hi)` pairs, before clamping.
pub fn access_box(access: &Access, ranges: &BTreeMap<String, Interval>) -> Option<Vec<Interval>> {
    access
        .indices
        .iter()
        .zip(&access.tile)
        .map(|(e, t)| interval(e, ranges).map(|(lo, hi)| (lo, hi + t - 1)))
        .collect()
}

/// Convenience: loop ranges `[0, extent-1]` for the given loops.
pub fn full_ranges(loops: &[&Loop]) -> BTreeMap<String, Interval> {
    loops.iter().map(|l| (l.var.clone(), (0, l.extent - 1))).collect()
}

/// Number of elements of the hull of `boxes`, clamped to `shape`.
pub fn hull_size(boxes: &[Vec<Interval>], shape: &[i64]) -> u64 {
    if boxes.is_empty() {
        return 0;
    }
    let mut size: u64 = 1;
    for (d, &ext) in shape.iter().enumerate() {
        let lo = boxes.iter().map(|b| b[d].0).min().unwrap().max(0);
        let hi = boxes.iter().map(|b| b[d].1).max().unwrap().min(ext - 1);
        size = size.saturating_mul(if hi >= lo { (hi - lo + 1) as u64 } else { 1 });
    }
    size
}

/// Total footprint (sum over buffers of hull sizes) of the accesses of
/// `leaf` when `inner` loops range fully.
pub fn leaf_footprint(p: &TensorProgram, accesses: &[Access], inner: &[&Loop]) -> BTreeMap<String, u64> {
    let ranges = full_ranges(inner);
    let mut per_buffer: BTreeMap<String, Vec<Vec<Interval>>> = BTreeMap::new();
    for a in accesses {
        if let Some(b) = access_box(a, &ranges) {
            per_buffer.entry(a.buffer.clone()).or_default().push(b);
        }
    }
    per_buffer
        .into_iter()
        .filter_map(|(name, boxes)| {
            let shape = &p.buffer(&name)?.shape;
            Some((name, hull_size(&boxes, shape)))
        })
        .collect()
}

/// True if `intr` is a well-formed `tu.mma4` call.
pub fn is_mma4(intr: &Intrinsic) -> bool {
    intr.name == crate::ir::MMA4 && intr.operands.len() == 3 && intr.operands.iter().all(|o| o.offsets.len() == 2)
}
