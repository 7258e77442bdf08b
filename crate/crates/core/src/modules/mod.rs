//! Transformation modules and their stochastic composition into design-space
//! generators.

mod inline;
mod mlt;
mod pvu;
mod space;
mod tensor_unit;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::schedule::{BlockRef, Result, Schedule};

pub use inline::AutoInline;
pub use mlt::MultiLevelTiling;
pub use pvu::ParallelizeVectorizeUnroll;
pub use space::{enumerate_space, generate, generate_space, DesignSpace, Enumeration, Sample};
pub use tensor_unit::UseTensorUnit;

/// A reusable schedule fragment: analysis, sampling and transformations on
/// one block, all through traced primitives.
pub trait TransformationModule: Send + Sync {
    fn name(&self) -> &str;
    /// Untraced applicability test against the current program.
    fn applicable(&self, s: &Schedule, block: BlockRef) -> bool;
    fn apply(&self, s: &mut Schedule, block: BlockRef) -> Result<()>;
}

/// Applies a module at every block where it is applicable, in program
/// order. Blocks removed along the way are skipped.
pub fn apply_everywhere(m: &dyn TransformationModule, s: &mut Schedule) -> Result<()> {
    for b in s.get_blocks() {
        if s.block_name(b).is_ok() && m.applicable(s, b) {
            m.apply(s, b)?;
        }
    }
    Ok(())
}

/// At each block, draws one of the applicable modules (uniform traced
/// categorical over module positions) and applies it.
pub struct Composed {
    modules: Vec<Box<dyn TransformationModule>>,
}

impl Composed {
    pub fn new(modules: Vec<Box<dyn TransformationModule>>) -> Self {
        assert!(!modules.is_empty(), "compose needs at least one module");
        Composed { modules }
    }

    pub fn modules(&self) -> &[Box<dyn TransformationModule>] {
        &self.modules
    }
}

impl TransformationModule for Composed {
    fn name(&self) -> &str {
        "compose"
    }

    fn applicable(&self, s: &Schedule, block: BlockRef) -> bool {
        self.modules.iter().any(|m| m.applicable(s, block))
    }

    fn apply(&self, s: &mut Schedule, block: BlockRef) -> Result<()> {
        let candidates: Vec<i64> =
            (0..self.modules.len()).filter(|&i| self.modules[i].applicable(s, block)).map(|i| i as i64).collect();
        if candidates.is_empty() {
            return Ok(());
        }
        let weights = alloc::vec![1.0; candidates.len()];
        let rv = s.sample_categorical(&candidates, &weights)?;
        let chosen = s.int_value(rv)? as usize;
        self.modules[chosen].apply(s, block)
    }
}

/// Serializable module constructor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleSpec {
    Mlt {
        structure: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        levels: Option<usize>,
    },
    AutoInline {},
    Pvu {
        #[serde(default = "default_max_parallel")]
        max_parallel_extent: i64,
        #[serde(default = "default_widths")]
        widths: Vec<i64>,
        #[serde(default = "default_unroll")]
        unroll_depths: Vec<i64>,
    },
    TensorUnit {},
}

fn default_max_parallel() -> i64 {
    512
}

fn default_widths() -> Vec<i64> {
    alloc::vec![4, 8]
}

fn default_unroll() -> Vec<i64> {
    alloc::vec![0, 16, 64]
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid module configuration: {0}")]
pub struct ConfigError(pub String);

impl ModuleSpec {
    pub fn mlt(structure: &str) -> Self {
        ModuleSpec::Mlt { structure: structure.into(), levels: None }
    }

    pub fn pvu() -> Self {
        ModuleSpec::Pvu {
            max_parallel_extent: default_max_parallel(),
            widths: default_widths(),
            unroll_depths: default_unroll(),
        }
    }

    pub fn build(&self) -> core::result::Result<Box<dyn TransformationModule>, ConfigError> {
        Ok(match self {
            ModuleSpec::Mlt { structure, levels } => {
                Box::new(MultiLevelTiling::new(levels.unwrap_or(structure.len()), structure)?)
            }
            ModuleSpec::AutoInline {} => Box::new(AutoInline),
            ModuleSpec::Pvu { max_parallel_extent, widths, unroll_depths } => {
                Box::new(ParallelizeVectorizeUnroll::new(*max_parallel_extent, widths.clone(), unroll_depths.clone())?)
            }
            ModuleSpec::TensorUnit {} => Box::new(UseTensorUnit),
        })
    }
}

/// A composed generator, as read from a space configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub modules: Vec<ModuleSpec>,
}

impl SpaceConfig {
    /// MLT "SSRSR" + auto-inline + parallelize-vectorize-unroll.
    pub fn default_space() -> Self {
        SpaceConfig { modules: alloc::vec![ModuleSpec::mlt("SSRSR"), ModuleSpec::AutoInline {}, ModuleSpec::pvu()] }
    }

    pub fn build(&self) -> core::result::Result<Composed, ConfigError> {
        if self.modules.is_empty() {
            return Err(ConfigError("a space needs at least one module".into()));
        }
        Ok(Composed::new(self.modules.iter().map(ModuleSpec::build).collect::<core::result::Result<_, _>>()?))
    }
}
