use alloc::vec::Vec;

use super::TransformationModule;
use crate::ir::{Stmt, MMA4, MMA4_TILE};
use crate::schedule::{match_mma4, BlockRef, Factor, Result, Schedule};

/// Tiles a matrix-multiply block so that an inner 4x4x4 tile exists,
/// parallelizes the outermost spatial tiles and maps the inner tile onto
/// `tu.mma4`.
///
/// Loop structure: `i0 j0 i1 j1 ko | ii ji ki` with `ii, ji, ki` of extent
/// 4 and sampled two-way tilings of the outer i and j parts.
#[derive(Clone, Copy, Debug, Default)]
pub struct UseTensorUnit;

impl TransformationModule for UseTensorUnit {
    fn name(&self) -> &str {
        "use_tensor_unit"
    }

    fn applicable(&self, s: &Schedule, b: BlockRef) -> bool {
        let Ok(loops) = s.enclosing_loops(b) else { return false };
        if loops.len() != 3 || loops.iter().any(|l| l.extent % MMA4_TILE != 0) {
            return false;
        }
        if loops[0].body.len() != 1 || loops[1].body.len() != 1 {
            return false;
        }
        // Same nest with every extent shrunk to one tile.
        let mut probe = loops[0].clone();
        let mut cur = &mut probe;
        loop {
            cur.extent = MMA4_TILE;
            match cur.body.first_mut() {
                Some(Stmt::Loop(next)) => cur = next,
                _ => break,
            }
        }
        match_mma4(&probe).is_ok()
    }

    fn apply(&self, s: &mut Schedule, b: BlockRef) -> Result<()> {
        let loops = s.get_loops(b)?;
        let tile = Factor::Int(MMA4_TILE);
        let mut spatial = Vec::new();
        for &l in &loops[..2] {
            let parts = s.split(l, &[Factor::Infer, tile])?;
            let rv = s.sample_perfect_tile(parts[0], 2)?;
            let outer = s.split(parts[0], &[Factor::Rv(rv[0]), Factor::Rv(rv[1])])?;
            spatial.push((outer[0], outer[1], parts[1]));
        }
        let k = s.split(loops[2], &[Factor::Infer, tile])?;
        let (i, j) = (spatial[0], spatial[1]);
        s.reorder(&[i.0, j.0, i.1, j.1, k[0], i.2, j.2, k[1]])?;
        match s.fuse(&[i.0, j.0]) {
            Ok(f) => {
                let _ = s.parallel(f);
            }
            Err(_) => {
                let _ = s.parallel(i.0);
            }
        }
        s.tensorize(i.2, MMA4)
    }
}
