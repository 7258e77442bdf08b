use alloc::format;
use alloc::vec::Vec;

use super::{ConfigError, TransformationModule};
use crate::analysis;
use crate::ir::{LoopKind, Stmt};
use crate::schedule::{BlockRef, Factor, LoopRef, Result, Schedule};

/// Parallelize-vectorize-unroll. On one block:
///
/// 1. samples a vector width among those dividing the extent of the
///    innermost spatial loop, splits off an inner loop of that width, moves
///    it innermost and vectorizes it (width 1 skips the split);
/// 2. fuses the leading spatial loops while their extent product stays
///    within `max_parallel_extent` (at least one loop) and parallelizes;
/// 3. samples an unroll depth and unrolls the innermost serial loop when its
///    extent is within that depth.
///
/// A step whose primitive rejects the program is skipped.
#[derive(Clone, Debug)]
pub struct ParallelizeVectorizeUnroll {
    max_parallel_extent: i64,
    widths: Vec<i64>,
    unroll_depths: Vec<i64>,
}

impl ParallelizeVectorizeUnroll {
    pub fn new(
        max_parallel_extent: i64,
        widths: Vec<i64>,
        unroll_depths: Vec<i64>,
    ) -> core::result::Result<Self, ConfigError> {
        if max_parallel_extent < 1 {
            return Err(ConfigError(format!("max_parallel_extent must be positive, got {max_parallel_extent}")));
        }
        if widths.is_empty() || widths.iter().any(|&w| w < 1) {
            return Err(ConfigError("vector widths must be a non-empty list of positive integers".into()));
        }
        if unroll_depths.is_empty() || unroll_depths.iter().any(|&d| d < 0) {
            return Err(ConfigError("unroll depths must be a non-empty list of non-negative integers".into()));
        }
        Ok(ParallelizeVectorizeUnroll { max_parallel_extent, widths, unroll_depths })
    }

    fn vectorize_step(&self, s: &mut Schedule, b: BlockRef) -> Result<()> {
        let loops = s.get_loops(b)?;
        let stmt = s.block_stmt(b)?.clone();
        // The innermost spatial loop, provided everything inside it is a
        // perfect chain of serial loops.
        let mut target = None;
        for (pos, &l) in loops.iter().enumerate().rev() {
            let lp = s.loop_of(l)?;
            let inner_loops = lp.body.iter().filter(|x| matches!(x, Stmt::Loop(_))).count();
            if lp.kind != LoopKind::Serial || (pos + 1 < loops.len() && (lp.body.len() != 1 || inner_loops != 1)) {
                return Ok(());
            }
            if analysis::is_spatial(&stmt, &lp.var) {
                target = Some((pos, l, lp.extent));
                break;
            }
        }
        let Some((pos, l, extent)) = target else { return Ok(()) };
        let widths: Vec<i64> = self.widths.iter().copied().filter(|w| extent % w == 0).collect();
        if widths.is_empty() {
            return Ok(());
        }
        let rv = s.sample_categorical(&widths, &alloc::vec![1.0; widths.len()])?;
        if s.int_value(rv)? == 1 {
            return Ok(());
        }
        let parts = s.split(l, &[Factor::Infer, Factor::Rv(rv)])?;
        if pos + 1 < loops.len() {
            let mut order: Vec<LoopRef> = loops[pos + 1..].to_vec();
            order.push(parts[1]);
            if s.reorder(&order).is_err() {
                return Ok(());
            }
        }
        let _ = s.vectorize(parts[1]);
        Ok(())
    }

    fn parallel_step(&self, s: &mut Schedule, b: BlockRef) -> Result<()> {
        let loops = s.get_loops(b)?;
        let stmt = s.block_stmt(b)?.clone();
        let mut lead: Vec<LoopRef> = Vec::new();
        let mut product = 1;
        for &l in &loops {
            let lp = s.loop_of(l)?;
            if lp.kind != LoopKind::Serial || !analysis::is_spatial(&stmt, &lp.var) {
                break;
            }
            if !lead.is_empty() && product * lp.extent > self.max_parallel_extent {
                break;
            }
            product *= lp.extent;
            lead.push(l);
        }
        if lead.is_empty() {
            return Ok(());
        }
        let fused = if lead.len() > 1 {
            match s.fuse(&lead) {
                Ok(f) => f,
                Err(_) => lead[0],
            }
        } else {
            lead[0]
        };
        let _ = s.parallel(fused);
        Ok(())
    }

    fn unroll_step(&self, s: &mut Schedule, b: BlockRef) -> Result<()> {
        let loops = s.get_loops(b)?;
        let mut target = None;
        for &l in loops.iter().rev() {
            if s.loop_of(l)?.kind == LoopKind::Serial {
                target = Some(l);
                break;
            }
        }
        let Some(l) = target else { return Ok(()) };
        let rv = s.sample_categorical(&self.unroll_depths, &alloc::vec![1.0; self.unroll_depths.len()])?;
        s.unroll(l, Some(rv))
    }
}

impl TransformationModule for ParallelizeVectorizeUnroll {
    fn name(&self) -> &str {
        "parallelize_vectorize_unroll"
    }

    fn applicable(&self, s: &Schedule, b: BlockRef) -> bool {
        matches!(s.block_stmt(b), Ok(Stmt::Compute(_)))
    }

    fn apply(&self, s: &mut Schedule, b: BlockRef) -> Result<()> {
        self.vectorize_step(s, b)?;
        self.parallel_step(s, b)?;
        self.unroll_step(s, b)
    }
}
