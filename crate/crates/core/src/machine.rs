//! Deterministic analytic machine model: the latency `f(e)` that search
//! minimizes.
//!
//! Cost is a recursion over the loop nest:
//!
//! * a compute statement costs `flop_cost` per arithmetic operation plus
//!   one access cost per memory access (store and loads); its epilogue is
//!   charged once per output element, i.e. divided by the trip count of the
//!   enclosing reduction loops;
//! * a `tu.mma4` call costs `tensor_unit_cost` plus its 48 operand elements
//!   at `hit_cost`;
//! * loops multiply their body cost by the extent, except that unrolled
//!   loops of extent at most `unroll_max_extent` get `unroll_discount`,
//!   vectorized loops with stride-1 accesses run `ceil(extent / lanes)`
//!   iterations and the outermost parallel loop on a path runs
//!   `ceil(extent / cores)`.
//!
//! An access hits when its indices are invariant to every loop outside the
//! largest innermost loop suffix whose footprint fits in the cache.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::analysis::{self, linearize, Access};
use crate::ir::{Expr, Loop, LoopKind, NodePath, Stmt, TensorProgram};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineSpec {
    pub cores: i64,
    pub vector_lanes: i64,
    /// Cache capacity in elements.
    pub cache_capacity: u64,
    pub hit_cost: f64,
    pub miss_cost: f64,
    pub flop_cost: f64,
    pub unroll_discount: f64,
    /// Largest unrolled extent that earns the discount.
    pub unroll_max_extent: i64,
    pub tensor_unit_cost: f64,
}

impl Default for MachineSpec {
    fn default() -> Self {
        MachineSpec {
            cores: 4,
            vector_lanes: 8,
            cache_capacity: 4096,
            hit_cost: 1.0,
            miss_cost: 8.0,
            flop_cost: 1.0,
            unroll_discount: 0.9,
            unroll_max_extent: 16,
            tensor_unit_cost: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid machine spec: {0}")]
pub struct MachineError(pub String);

impl MachineSpec {
    pub fn validate(&self) -> Result<(), MachineError> {
        let positive = [
            ("cores", self.cores as f64),
            ("vector_lanes", self.vector_lanes as f64),
            ("cache_capacity", self.cache_capacity as f64),
            ("hit_cost", self.hit_cost),
            ("miss_cost", self.miss_cost),
            ("flop_cost", self.flop_cost),
            ("unroll_max_extent", self.unroll_max_extent as f64),
            ("tensor_unit_cost", self.tensor_unit_cost),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(MachineError(format!("`{name}` must be positive, got {v}")));
            }
        }
        if !(self.unroll_discount > 0.0 && self.unroll_discount <= 1.0) {
            return Err(MachineError(format!("`unroll_discount` must lie in (0, 1], got {}", self.unroll_discount)));
        }
        Ok(())
    }
}

fn div_ceil(a: i64, b: i64) -> i64 {
    (a + b - 1) / b
}

fn depends(e: &Expr, var: &str) -> bool {
    match linearize(e) {
        Some(a) => a.depends_on(var),
        None => e.mentions(var),
    }
}

fn touches(a: &Access, var: &str) -> bool {
    a.indices.iter().any(|e| depends(e, var))
}

/// Stride-1 in the last dimension and invariant in the others.
fn unit_stride(a: &Access, var: &str) -> bool {
    let Some((last, rest)) = a.indices.split_last() else { return true };
    if rest.iter().any(|e| depends(e, var)) {
        return false;
    }
    match linearize(last) {
        Some(aff) => aff.coeff(var) == 1 && !aff.opaque_mentions(var),
        None => false,
    }
}

fn accesses_with_epilogue(stmt: &Stmt) -> Vec<Access> {
    let mut acc = analysis::leaf_accesses(stmt);
    if let Stmt::Compute(c) = stmt {
        acc.extend(analysis::epilogue_accesses(c));
    }
    acc
}

/// Footprint per buffer of one statement's accesses for every loop suffix:
/// entry `k` lets the loops from depth `k` inward range fully (entry 0 is
/// the whole nest, the last entry no loop at all).
pub fn footprint(p: &TensorProgram, path: &NodePath) -> Vec<BTreeMap<String, u64>> {
    let Some(stmt) = p.stmt(path) else { return Vec::new() };
    let loops = p.enclosing_loops(path);
    let acc = accesses_with_epilogue(stmt);
    (0..=loops.len()).map(|k| analysis::leaf_footprint(p, &acc, &loops[k..])).collect()
}

/// Depth of the largest loop suffix whose footprint fits in the cache.
fn cache_depth(p: &TensorProgram, acc: &[Access], loops: &[&Loop], capacity: u64) -> usize {
    (0..=loops.len())
        .find(|&k| analysis::leaf_footprint(p, acc, &loops[k..]).values().sum::<u64>() <= capacity)
        .unwrap_or(loops.len())
}

/// Hit and miss counts of one execution of a leaf statement.
pub fn classify_accesses(p: &TensorProgram, stmt: &Stmt, loops: &[&Loop], spec: &MachineSpec) -> (u64, u64) {
    if let Stmt::Intrinsic(i) = stmt {
        let elems: i64 = i.operands.iter().map(|o| crate::ir::MMA4_TILE.pow(o.offsets.len() as u32)).sum();
        return (elems as u64, 0);
    }
    let acc = accesses_with_epilogue(stmt);
    let k = cache_depth(p, &acc, loops, spec.cache_capacity);
    let outer = &loops[..k];
    let hits = acc.iter().filter(|a| !outer.iter().any(|l| touches(a, &l.var))).count() as u64;
    (hits, acc.len() as u64 - hits)
}

fn reduction_trip(stmt: &Stmt, loops: &[&Loop]) -> f64 {
    analysis::reduction_loops(stmt, loops).iter().map(|l| l.extent as f64).product()
}

fn leaf_cost(p: &TensorProgram, stmt: &Stmt, loops: &[&Loop], spec: &MachineSpec) -> f64 {
    match stmt {
        Stmt::Intrinsic(_) => {
            let (hits, _) = classify_accesses(p, stmt, loops, spec);
            spec.tensor_unit_cost + hits as f64 * spec.hit_cost
        }
        Stmt::Compute(c) => {
            let acc = accesses_with_epilogue(stmt);
            let k = cache_depth(p, &acc, loops, spec.cache_capacity);
            let outer = &loops[..k];
            let cost_of = |a: &Access| {
                if outer.iter().any(|l| touches(a, &l.var)) {
                    spec.miss_cost
                } else {
                    spec.hit_cost
                }
            };
            let main = analysis::leaf_accesses(stmt);
            let mut cost = spec.flop_cost * c.value.op_count() as f64 + main.iter().map(cost_of).sum::<f64>();
            if let Some(ep) = &c.epilogue {
                let ep_cost = spec.flop_cost * ep.op_count() as f64
                    + analysis::epilogue_accesses(c).iter().map(cost_of).sum::<f64>();
                cost += ep_cost / reduction_trip(stmt, loops);
            }
            cost
        }
        Stmt::Loop(_) => unreachable!("not a leaf"),
    }
}

fn all_unit_stride(l: &Loop) -> bool {
    l.body.iter().flat_map(analysis::leaves).all(|leaf| {
        accesses_with_epilogue(leaf).iter().filter(|a| touches(a, &l.var)).all(|a| unit_stride(a, &l.var))
    })
}

fn cost_of<'a>(
    p: &'a TensorProgram,
    s: &'a Stmt,
    loops: &mut Vec<&'a Loop>,
    in_parallel: bool,
    spec: &MachineSpec,
) -> f64 {
    match s {
        Stmt::Loop(l) => {
            let outermost_parallel = l.kind == LoopKind::Parallel && !in_parallel;
            loops.push(l);
            let body: f64 = l
                .body
                .iter()
                .map(|c| cost_of(p, c, loops, in_parallel || l.kind == LoopKind::Parallel, spec))
                .sum();
            loops.pop();
            let trips = match l.kind {
                LoopKind::Parallel if outermost_parallel => div_ceil(l.extent, spec.cores) as f64,
                LoopKind::Vectorized if all_unit_stride(l) => div_ceil(l.extent, spec.vector_lanes) as f64,
                LoopKind::Unrolled if l.extent <= spec.unroll_max_extent => l.extent as f64 * spec.unroll_discount,
                _ => l.extent as f64,
            };
            trips * body
        }
        leaf => leaf_cost(p, leaf, loops, spec),
    }
}

/// Simulated latency in abstract cycles.
pub fn simulate_latency(p: &TensorProgram, spec: &MachineSpec) -> f64 {
    let mut loops = Vec::new();
    p.root.iter().map(|s| cost_of(p, s, &mut loops, false, spec)).sum()
}
