use super::TransformationModule;
use crate::schedule::{is_eligible, BlockRef, Result, Schedule, Target};

/// Places elementwise blocks: at the root, inlined, or computed at a loop
/// of their counterpart.
#[derive(Clone, Copy, Debug, Default)]
pub struct AutoInline;

impl TransformationModule for AutoInline {
    fn name(&self) -> &str {
        "auto_inline"
    }

    fn applicable(&self, s: &Schedule, b: BlockRef) -> bool {
        s.block_name(b).is_ok_and(|name| is_eligible(s.program(), name))
    }

    fn apply(&self, s: &mut Schedule, b: BlockRef) -> Result<()> {
        let loc = s.sample_compute_location(b)?;
        s.compute_at(b, Target::Location(loc))
    }
}
