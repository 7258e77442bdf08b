use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::{ConfigError, TransformationModule};
use crate::analysis;
use crate::ir::Stmt;
use crate::schedule::{BlockRef, Factor, LoopRef, Result, Schedule};

/// Multi-level tiling. Each character of the structure is a band of tiles;
/// a spatial loop is split into one tile per `S` band plus a remainder, a
/// reduction loop into one tile per `R` band plus a remainder. Bands are
/// laid out in structure order, followed by an innermost band of
/// remainders in original loop order.
#[derive(Clone, Debug)]
pub struct MultiLevelTiling {
    structure: Vec<bool>,
    text: String,
}

impl MultiLevelTiling {
    pub fn new(levels: usize, structure: &str) -> core::result::Result<Self, ConfigError> {
        let bands: Vec<bool> = structure
            .chars()
            .map(|c| match c {
                'S' | 's' => Ok(true),
                'R' | 'r' => Ok(false),
                _ => Err(ConfigError(format!("tile structure `{structure}` may only contain S and R"))),
            })
            .collect::<core::result::Result<_, _>>()?;
        if !bands.contains(&true) || !bands.contains(&false) {
            return Err(ConfigError(format!("tile structure `{structure}` needs at least one S and one R band")));
        }
        if levels < 2 || levels != bands.len() {
            return Err(ConfigError(format!("{levels} levels do not match tile structure `{structure}`")));
        }
        Ok(MultiLevelTiling { structure: bands, text: structure.into() })
    }

    pub fn structure(&self) -> &str {
        &self.text
    }

    fn count(&self, spatial: bool) -> usize {
        self.structure.iter().filter(|&&b| b == spatial).count()
    }
}

/// Spatial flags of the loops around a compute block whose nest is a
/// perfect chain, or `None`.
fn classify(s: &Schedule, b: BlockRef) -> Option<Vec<bool>> {
    let stmt = s.block_stmt(b).ok()?;
    let Stmt::Compute(c) = stmt else { return None };
    if !c.is_reduction() {
        return None;
    }
    let loops = s.enclosing_loops(b).ok()?;
    if loops.iter().any(|l| l.body.len() != 1) {
        return None;
    }
    let store = analysis::store_vars(stmt);
    Some(loops.iter().map(|l| store.contains(&l.var)).collect())
}

impl TransformationModule for MultiLevelTiling {
    fn name(&self) -> &str {
        "multi_level_tiling"
    }

    fn applicable(&self, s: &Schedule, b: BlockRef) -> bool {
        classify(s, b).is_some_and(|k| k.contains(&true) && k.contains(&false))
    }

    fn apply(&self, s: &mut Schedule, b: BlockRef) -> Result<()> {
        let kinds = classify(s, b).expect("applicable");
        let loops = s.get_loops(b)?;
        let mut tiles: Vec<Vec<LoopRef>> = Vec::new();
        for (&l, &spatial) in loops.iter().zip(&kinds) {
            let n = self.count(spatial) + 1;
            let rv = s.sample_perfect_tile(l, n)?;
            let factors: Vec<Factor> = rv.into_iter().map(Factor::Rv).collect();
            tiles.push(s.split(l, &factors)?);
        }
        let mut order = Vec::new();
        let mut used = [0usize, 0usize];
        for &band in &self.structure {
            let level = used[band as usize];
            used[band as usize] += 1;
            order.extend(kinds.iter().zip(&tiles).filter(|(k, _)| **k == band).map(|(_, t)| t[level]));
        }
        order.extend(tiles.iter().map(|t| *t.last().expect("tile")));
        s.reorder(&order)
    }
}
