//! Learning-driven search: evolutionary proposals over traces, annealed
//! Metropolis-Hastings acceptance on the proxy model, and measurement on the
//! machine model.
//!
//! Each round evolves a population of validated traces, ranks everything it
//! saw by predicted latency and measures the best unmeasured programs (with
//! an epsilon-greedy random substitution per slot). The model is refit from
//! scratch on all measurements after every round.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost_model::{featurize, spearman, CostModel, FeatureVector, ProxyModel};
use crate::ir::{structural_hash, TensorProgram};
use crate::machine::{simulate_latency, MachineSpec};
use crate::modules::{enumerate_space, generate, Sample, TransformationModule};
use crate::schedule::Decider;
use crate::trace::{mutate, trace_prior, validate_trace, Op, Trace, Unvalidated, Validation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Total measurement budget.
    pub trials: usize,
    /// Measurements per round.
    pub batch: usize,
    pub population: usize,
    /// Generations per round.
    pub generations: usize,
    pub init_temperature: f64,
    /// Geometric temperature decay per generation.
    pub anneal: f64,
    /// Per-slot probability of measuring a random unmeasured candidate.
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            trials: 512,
            batch: 16,
            population: 64,
            generations: 4,
            init_temperature: 1.0,
            anneal: 0.85,
            epsilon: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid search config: {0}")]
pub struct SearchConfigError(pub String);

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchConfigError> {
        for (name, v) in [
            ("trials", self.trials),
            ("batch", self.batch),
            ("population", self.population),
            ("generations", self.generations),
        ] {
            if v == 0 {
                return Err(SearchConfigError(format!("`{name}` must be positive")));
            }
        }
        if !(self.init_temperature.is_finite() && self.init_temperature > 0.0) {
            return Err(SearchConfigError(format!("`init_temperature` must be positive, got {}", self.init_temperature)));
        }
        if !(self.anneal > 0.0 && self.anneal < 1.0) {
            return Err(SearchConfigError(format!("`anneal` must lie in (0, 1), got {}", self.anneal)));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(SearchConfigError(format!("`epsilon` must lie in [0, 1), got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Log of the unnormalized posterior: latency relative to the incumbent,
/// plus the trace's log prior. Needs a validated trace.
pub fn posterior_score(t: &Trace, latency: f64, f_min: f64) -> Result<f64, Unvalidated> {
    Ok(-(latency / f_min) + trace_prior(t)?)
}

/// Annealed Metropolis-Hastings test on predicted latencies. Improvements
/// are always accepted.
pub fn mh_accept<R: Rng + ?Sized>(old: f64, new: f64, temperature: f64, rng: &mut R) -> bool {
    if new <= old {
        return true;
    }
    let p = libm::exp(((old - new) / old) / temperature);
    rng.gen::<f64>() < p
}

/// One measured program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub trace: Trace,
    pub latency: f64,
    pub features: FeatureVector,
    #[serde(skip)]
    pub program: Option<TensorProgram>,
    #[serde(skip)]
    pub hash: u64,
    /// Round in which it was measured.
    #[serde(skip)]
    pub round: usize,
    /// Model prediction just before measurement, when the model was fitted.
    #[serde(skip)]
    pub predicted: Option<f64>,
}

/// Where latencies and features come from.
pub trait Measurer {
    fn featurize(&self, p: &TensorProgram) -> FeatureVector;
    /// Latency of every program, in order.
    fn measure(&self, programs: &[&TensorProgram]) -> Vec<f64>;
}

/// The analytic machine model as a measurer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimulatedMachine {
    pub spec: MachineSpec,
}

impl SimulatedMachine {
    pub fn new(spec: MachineSpec) -> Self {
        SimulatedMachine { spec }
    }
}

impl Measurer for SimulatedMachine {
    fn featurize(&self, p: &TensorProgram) -> FeatureVector {
        featurize(p, &self.spec)
    }

    fn measure(&self, programs: &[&TensorProgram]) -> Vec<f64> {
        programs.iter().map(|p| simulate_latency(p, &self.spec)).collect()
    }
}

/// Candidates proposed for one round of measurement.
#[derive(Clone, Debug)]
pub struct Batch {
    pub candidates: Vec<Sample>,
    /// True when the space ran out of unmeasured programs.
    pub exhausted: bool,
}

/// Final result of a tuning run.
#[derive(Clone, Debug, PartialEq)]
pub struct TuningReport {
    pub workload_hash: u64,
    pub seed: u64,
    pub best: Option<TuningRecord>,
    /// Posterior score of the best trace (its latency is the incumbent).
    pub best_posterior: Option<f64>,
    /// Every measurement, in order.
    pub log: Vec<TuningRecord>,
    /// Best latency after each round.
    pub best_per_round: Vec<f64>,
    /// Rank correlation of pre-measurement predictions with measured
    /// latencies, over every round after the first.
    pub spearman: f64,
    pub rounds: usize,
    pub exhausted: bool,
    pub model: ProxyModel,
}

#[derive(Clone, Debug)]
struct Member {
    sample: Sample,
    pred: f64,
}

/// Search state plus everything needed to advance it one round at a time,
/// so a caller can stop between rounds and still get a report.
pub struct Tuner<'a, M: Measurer + ?Sized> {
    e0: &'a TensorProgram,
    generator: &'a dyn TransformationModule,
    config: SearchConfig,
    machine: &'a M,
    rng: ChaCha8Rng,
    log: Vec<TuningRecord>,
    measured: BTreeMap<u64, usize>,
    best: Option<usize>,
    best_per_round: Vec<f64>,
    model: ProxyModel,
    warm: Vec<TuningRecord>,
    round: usize,
    exhausted: bool,
}

impl<'a, M: Measurer + ?Sized> Tuner<'a, M> {
    pub fn new(
        e0: &'a TensorProgram,
        generator: &'a dyn TransformationModule,
        config: SearchConfig,
        machine: &'a M,
    ) -> Self {
        Tuner {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            e0,
            generator,
            config,
            machine,
            log: Vec::new(),
            measured: BTreeMap::new(),
            best: None,
            best_per_round: Vec::new(),
            model: ProxyModel::default(),
            warm: Vec::new(),
            round: 0,
            exhausted: false,
        }
    }

    /// Seeds the model and the initial population with earlier records.
    /// They are neither re-measured nor logged, and do not use the budget.
    pub fn warm_start(&mut self, records: Vec<TuningRecord>) {
        self.warm = records;
        self.refit();
    }

    pub fn is_done(&self) -> bool {
        self.exhausted || self.log.len() >= self.config.trials
    }

    fn refit(&mut self) {
        let data: Vec<(FeatureVector, f64)> =
            self.warm.iter().chain(&self.log).map(|r| (r.features, r.latency)).collect();
        if !data.is_empty() {
            self.model.fit(&data);
        }
    }

    fn predict(&self, cache: &mut BTreeMap<u64, f64>, s: &Sample) -> f64 {
        *cache.entry(s.hash).or_insert_with(|| self.model.predict(&self.machine.featurize(&s.program)))
    }

    fn validated(&self, trace: &Trace) -> Option<Sample> {
        match validate_trace(self.e0, trace) {
            Validation::Accepted { program, trace } => Some(Sample::new(trace, program)),
            Validation::Rejected { .. } => None,
        }
    }

    fn fresh(&mut self) -> Option<Sample> {
        let (_, trace, _) = generate(self.e0, self.generator, Decider::random(self.rng.gen())).ok()?;
        self.validated(&trace)
    }

    /// One proposal from `member`: a single-decision mutation, validated.
    /// A changed module choice invalidates everything recorded after it, so
    /// in that case the generator is rerun with the decisions up to and
    /// including the mutated one, drawing the rest afresh.
    fn propose(&mut self, member: &Sample) -> Option<Sample> {
        let m = mutate(&member.trace, &mut self.rng);
        if !m.mutated {
            return None;
        }
        if let Some(s) = self.validated(&m.trace) {
            return Some(s);
        }
        let index = m.index?;
        if m.trace.instructions[index].op != Op::SampleCategorical {
            return None;
        }
        let prefix = m.trace.instructions[..=index].iter().filter_map(|i| i.decision.clone()).collect();
        let (_, trace, _) = generate(self.e0, self.generator, Decider::guided(prefix, self.rng.gen())).ok()?;
        self.validated(&trace)
    }

    /// Proposes up to `b` unmeasured, validated candidates.
    pub fn evolve(&mut self, b: usize) -> Batch {
        let mu = self.config.population;
        let mut cache = BTreeMap::new();
        let mut pool: BTreeMap<u64, Member> = BTreeMap::new();
        let mut population: Vec<Member> = Vec::new();

        let mut seeds: Vec<&TuningRecord> = self.log.iter().chain(&self.warm).collect();
        seeds.sort_by(|a, b| a.latency.total_cmp(&b.latency));
        let seeds: Vec<Sample> = seeds
            .into_iter()
            .filter_map(|r| Some(Sample::new(r.trace.clone(), r.program.clone()?)))
            .take(mu / 2)
            .collect();
        for s in seeds {
            let pred = self.predict(&mut cache, &s);
            population.push(Member { sample: s, pred });
        }
        let mut attempts = 0;
        while population.len() < mu && attempts < 4 * mu {
            attempts += 1;
            if let Some(s) = self.fresh() {
                let pred = self.predict(&mut cache, &s);
                let m = Member { sample: s, pred };
                pool.entry(m.sample.hash).or_insert_with(|| m.clone());
                population.push(m);
            }
        }

        for g in 0..self.config.generations {
            let temperature = self.config.init_temperature * libm::pow(self.config.anneal, g as f64);
            for i in 0..population.len() {
                let Some(s) = self.propose(&population[i].sample.clone()) else { continue };
                let pred = self.predict(&mut cache, &s);
                let m = Member { sample: s, pred };
                pool.entry(m.sample.hash).or_insert_with(|| m.clone());
                if mh_accept(population[i].pred, pred, temperature, &mut self.rng) {
                    population[i] = m;
                }
            }
        }

        let mut ranked: Vec<Member> = pool.into_values().filter(|m| !self.measured.contains_key(&m.sample.hash)).collect();
        // Shuffle first so equal predictions are taken in random order.
        ranked.shuffle(&mut self.rng);
        ranked.sort_by(|a, b| a.pred.total_cmp(&b.pred));
        let mut chosen: Vec<Sample> = Vec::new();
        while chosen.len() < b && !ranked.is_empty() {
            let i = if self.rng.gen::<f64>() < self.config.epsilon { self.rng.gen_range(0..ranked.len()) } else { 0 };
            chosen.push(ranked.remove(i).sample);
        }
        let exhausted = self.fill(&mut chosen, b);
        Batch { candidates: chosen, exhausted }
    }

    fn is_new(&self, chosen: &[Sample], hash: u64) -> bool {
        !self.measured.contains_key(&hash) && chosen.iter().all(|c| c.hash != hash)
    }

    /// Tops up `chosen` with fresh draws, then with the first unmeasured
    /// programs of a depth-first enumeration. Returns true when the whole
    /// space has been seen and `chosen` is still short.
    fn fill(&mut self, chosen: &mut Vec<Sample>, b: usize) -> bool {
        let mut attempts = 0;
        while chosen.len() < b && attempts < 8 * b {
            attempts += 1;
            if let Some(s) = self.fresh() {
                if self.is_new(chosen, s.hash) {
                    chosen.push(s);
                }
            }
        }
        if chosen.len() >= b {
            return false;
        }
        let cap = self.measured.len() + b + 1;
        let en = enumerate_space(self.e0, self.generator, cap);
        for s in en.samples {
            if chosen.len() >= b {
                break;
            }
            if self.is_new(chosen, s.hash) {
                if let Some(v) = self.validated(&s.trace) {
                    chosen.push(v);
                }
            }
        }
        chosen.len() < b && !en.capped
    }

    /// Runs one round: evolve, measure, record, refit. Returns false when
    /// nothing was left to do.
    pub fn step(&mut self) -> bool {
        if self.is_done() {
            return false;
        }
        let b = self.config.batch.min(self.config.trials - self.log.len());
        let batch = self.evolve(b);
        if batch.exhausted {
            self.exhausted = true;
        }
        if batch.candidates.is_empty() {
            return false;
        }
        let programs: Vec<&TensorProgram> = batch.candidates.iter().map(|s| &s.program).collect();
        let latencies = self.machine.measure(&programs);
        for (s, latency) in batch.candidates.into_iter().zip(latencies) {
            let features = self.machine.featurize(&s.program);
            let predicted = self.model.fitted.then(|| self.model.predict(&features));
            let idx = self.log.len();
            self.measured.insert(s.hash, idx);
            if self.best.is_none_or(|b| latency < self.log[b].latency) {
                self.best = Some(idx);
            }
            self.log.push(TuningRecord {
                trace: s.trace,
                latency,
                features,
                program: Some(s.program),
                hash: s.hash,
                round: self.round,
                predicted,
            });
        }
        self.refit();
        self.best_per_round.push(self.best.map_or(f64::INFINITY, |b| self.log[b].latency));
        self.round += 1;
        true
    }

    pub fn report(&self) -> TuningReport {
        let best = self.best.map(|b| self.log[b].clone());
        let best_posterior = best.as_ref().and_then(|r| posterior_score(&r.trace, r.latency, r.latency).ok());
        let (pred, actual): (Vec<f64>, Vec<f64>) =
            self.log.iter().filter_map(|r| Some((r.predicted?, r.latency))).unzip();
        TuningReport {
            workload_hash: structural_hash(self.e0),
            seed: self.config.seed,
            best,
            best_posterior,
            log: self.log.clone(),
            best_per_round: self.best_per_round.clone(),
            spearman: spearman(&pred, &actual),
            rounds: self.round,
            exhausted: self.exhausted,
            model: self.model.clone(),
        }
    }

    /// Distinct program hashes measured so far.
    pub fn measured_hashes(&self) -> BTreeSet<u64> {
        self.measured.keys().copied().collect()
    }
}

/// Runs rounds until the budget is spent or the space is exhausted.
pub fn tune<M: Measurer + ?Sized>(
    e0: &TensorProgram,
    generator: &dyn TransformationModule,
    config: &SearchConfig,
    machine: &M,
) -> TuningReport {
    let mut t = Tuner::new(e0, generator, config.clone(), machine);
    while t.step() {}
    t.report()
}
