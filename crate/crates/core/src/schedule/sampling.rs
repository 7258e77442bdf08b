//! Sampling primitives. Each draws through the schedule's [`super::Decider`],
//! records its decision and accumulates the log prior.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{compute_at, BlockRef, LoopRef, RefValue, Result, RvRef, Schedule, ScheduleError, Value};
use crate::trace::{perfect_tiles, Attr, Decision, Input, Location, Op};

impl Schedule {
    /// Draws uniformly one ordered `n`-factorization of the loop's extent.
    pub fn sample_perfect_tile(&mut self, l: LoopRef, n: usize) -> Result<Vec<RvRef>> {
        if n == 0 {
            return Err(ScheduleError::InvalidArgument("sample_perfect_tile needs n >= 1".into()));
        }
        let extent = self.loop_of(l)?.extent;
        let domain: Vec<Decision> =
            perfect_tiles(extent, n).into_iter().map(|factors| Decision::Tile { factors }).collect();
        let weights = alloc::vec![1.0; domain.len()];
        let i = self.decider.choose(&domain, &weights)?;
        self.log_prior -= libm::log(domain.len() as f64);
        let decision = domain[i].clone();
        let Decision::Tile { factors } = &decision else { unreachable!() };
        let outs: Vec<u32> = factors.iter().map(|f| self.new_ref(RefValue::Value(Value::Int(*f)))).collect();
        self.record(
            Op::SamplePerfectTile,
            alloc::vec![Input::Ref(l.0)],
            alloc::vec![Attr::Int(n as i64)],
            outs.clone(),
            Some(decision),
        );
        Ok(outs.into_iter().map(RvRef).collect())
    }

    /// Draws one candidate with probability proportional to its weight.
    pub fn sample_categorical(&mut self, candidates: &[i64], weights: &[f64]) -> Result<RvRef> {
        if candidates.len() != weights.len() || candidates.is_empty() {
            return Err(ScheduleError::InvalidArgument(format!(
                "{} candidates but {} weights",
                candidates.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ScheduleError::InvalidArgument("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(ScheduleError::InvalidArgument("weights sum to zero".into()));
        }
        let support: Vec<usize> = (0..candidates.len()).filter(|&i| weights[i] > 0.0).collect();
        let domain: Vec<Decision> = support.iter().map(|&index| Decision::Categorical { index }).collect();
        let w: Vec<f64> = support.iter().map(|&i| weights[i]).collect();
        let k = self.decider.choose(&domain, &w)?;
        let index = support[k];
        self.log_prior += libm::log(weights[index] / total);
        let out = self.new_ref(RefValue::Value(Value::Int(candidates[index])));
        self.record(
            Op::SampleCategorical,
            Vec::new(),
            alloc::vec![Attr::Ints(candidates.to_vec()), Attr::Floats(weights.to_vec())],
            alloc::vec![out],
            Some(Decision::Categorical { index }),
        );
        Ok(RvRef(out))
    }

    /// Draws uniformly a legal location for the block against the current
    /// program: root, inline (when legal), or a loop of its counterpart.
    pub fn sample_compute_location(&mut self, b: BlockRef) -> Result<RvRef> {
        let name = self.block_name(b)?.to_string();
        let locations = compute_at::location_domain(&self.program, &name)?;
        let domain: Vec<Decision> = locations
            .iter()
            .map(|&chosen| Decision::Location { chosen, domain: locations.clone() })
            .collect();
        let weights = alloc::vec![1.0; domain.len()];
        let i = self.decider.choose(&domain, &weights)?;
        self.log_prior -= libm::log(domain.len() as f64);
        let chosen: Location = locations[i];
        let out = self.new_ref(RefValue::Value(Value::Location(chosen)));
        self.record(
            Op::SampleComputeLocation,
            alloc::vec![Input::Ref(b.0)],
            Vec::new(),
            alloc::vec![out],
            Some(domain[i].clone()),
        );
        Ok(RvRef(out))
    }
}
