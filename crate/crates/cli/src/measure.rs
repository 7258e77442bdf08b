//! Machine-model measurement spread over a rayon pool.

use rayon::prelude::*;
use rayon::ThreadPool;

use schedspace_core::cost_model::{featurize, FeatureVector};
use schedspace_core::ir::TensorProgram;
use schedspace_core::machine::{simulate_latency, MachineSpec};
use schedspace_core::search::Measurer;

pub struct ParallelMachine {
    pub spec: MachineSpec,
    pool: ThreadPool,
}

impl ParallelMachine {
    /// `jobs = None` uses rayon's default thread count.
    pub fn new(spec: MachineSpec, jobs: Option<usize>) -> anyhow::Result<Self> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = jobs {
            b = b.num_threads(j.max(1));
        }
        Ok(ParallelMachine { spec, pool: b.build()? })
    }

    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl Measurer for ParallelMachine {
    fn featurize(&self, p: &TensorProgram) -> FeatureVector {
        featurize(p, &self.spec)
    }

    // Results come back in input order, so runs stay deterministic.
    fn measure(&self, programs: &[&TensorProgram]) -> Vec<f64> {
        self.pool.install(|| programs.par_iter().map(|p| simulate_latency(p, &self.spec)).collect())
    }
}
