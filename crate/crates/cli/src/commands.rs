//! Command arguments and implementations. Each command returns the text it
//! would print, so tests can drive it without spawning the binary.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use schedspace_core::interp::{random_inputs, Executable, Tensors};
use schedspace_core::ir::{pretty_print, structural_hash, TensorProgram};
use schedspace_core::machine::simulate_latency;
use schedspace_core::modules::{enumerate_space, generate};
use schedspace_core::schedule::Decider;
use schedspace_core::search::{SearchConfig, Tuner};
use schedspace_core::trace::{validate_trace, Trace, Validation};

use crate::formats::{self, hash_hex, ReportFile};
use crate::measure::ParallelMachine;
use crate::registry::{parse_shape, WorkloadSpec, WORKLOADS};

#[derive(Parser, Debug)]
#[command(name = "schedspace", version, about = "Schedule-space exploration and tuning for loop-nest tensor programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Search the space for the fastest program under the machine model.
    Tune(TuneArgs),
    /// Replay a trace file against a workload.
    Replay(ReplayArgs),
    /// Enumerate every program of a space, with latencies.
    Enumerate(EnumerateArgs),
    /// List the built-in workloads.
    ListWorkloads,
    /// Print one randomly generated program of a space.
    ShowSpace(ShowSpaceArgs),
}

#[derive(Args, Debug, Clone)]
pub struct WorkloadArgs {
    /// Built-in workload name.
    #[arg(long)]
    pub workload: String,
    /// Comma-separated shape parameters (defaults to the registry shape).
    #[arg(long)]
    pub shape: Option<String>,
}

impl WorkloadArgs {
    pub fn spec(&self) -> anyhow::Result<WorkloadSpec> {
        let shape = self.shape.as_deref().map(parse_shape).transpose()?;
        Ok(WorkloadSpec::new(&self.workload, shape)?)
    }
}

#[derive(Args, Debug, Clone)]
pub struct TuneArgs {
    #[command(flatten)]
    pub workload: WorkloadArgs,
    /// Space configuration JSON (default: tiling + auto-inline + parallelize/vectorize/unroll).
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Machine spec JSON (default: built-in spec).
    #[arg(long)]
    pub machine: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    pub trials: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 64)]
    pub population: usize,
    #[arg(long, default_value_t = 4)]
    pub generations: usize,
    #[arg(long, default_value_t = 0.05)]
    pub epsilon: f64,
    #[arg(long, env = "METASCHED_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Report JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tuning-record JSON-lines output.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Tuning records from an earlier run, used to warm-start the model.
    #[arg(long)]
    pub warm_start: Option<PathBuf>,
    /// Trace file output for the best program.
    #[arg(long)]
    pub best_trace: Option<PathBuf>,
    /// Worker threads for measurement.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub workload: WorkloadArgs,
    /// Trace JSON-lines file.
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub machine: Option<PathBuf>,
    /// Compare interpreter outputs of the replayed program and the workload.
    #[arg(long)]
    pub check_semantics: bool,
    /// Number of random input seeds for --check-semantics.
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
}

#[derive(Args, Debug, Clone)]
pub struct EnumerateArgs {
    #[command(flatten)]
    pub workload: WorkloadArgs,
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long)]
    pub machine: Option<PathBuf>,
    /// Stop after this many distinct programs.
    #[arg(long, default_value_t = 100_000)]
    pub cap: usize,
    /// Enumeration JSON output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct ShowSpaceArgs {
    #[command(flatten)]
    pub workload: WorkloadArgs,
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[arg(long)]
    pub machine: Option<PathBuf>,
    #[arg(long, env = "METASCHED_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Trace file output for the shown program.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
}

pub fn run_command(cmd: &Command) -> anyhow::Result<String> {
    match cmd {
        Command::Tune(a) => tune(a),
        Command::Replay(a) => replay(a),
        Command::Enumerate(a) => enumerate(a),
        Command::ListWorkloads => Ok(list_workloads()),
        Command::ShowSpace(a) => show_space(a),
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn tune(a: &TuneArgs) -> anyhow::Result<String> {
    let spec = a.workload.spec()?;
    let e0 = spec.build()?;
    let machine = ParallelMachine::new(formats::load_machine(a.machine.as_deref())?, a.jobs)?;
    let generator = formats::load_space(a.space.as_deref())?.build()?;
    let config = SearchConfig {
        trials: a.trials,
        batch: a.batch,
        population: a.population,
        generations: a.generations,
        epsilon: a.epsilon,
        seed: a.seed,
        ..SearchConfig::default()
    };
    config.validate()?;
    let mut tuner = Tuner::new(&e0, &generator, config, &machine);
    if let Some(path) = &a.warm_start {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let records = formats::read_records(&text, &e0).with_context(|| format!("loading {}", path.display()))?;
        tuner.warm_start(records);
    }
    while tuner.step() {}
    let report = tuner.report();
    let baseline = simulate_latency(&e0, &machine.spec);
    let file = ReportFile::new(&spec, baseline, &report, unix_now());
    if let Some(path) = &a.out {
        formats::write_json(path, &file)?;
    }
    if let Some(path) = &a.records {
        fs::write(path, formats::write_records(&report.log)).with_context(|| format!("writing {}", path.display()))?;
    }
    let mut out = String::new();
    writeln!(out, "workload {spec}: {} measurements in {} rounds", report.log.len(), report.rounds)?;
    match &file.best {
        Some(best) => {
            writeln!(out, "best latency {} (unscheduled {baseline}, speedup {:.3}x)", best.latency, best.speedup)?;
            if let Some(path) = &a.best_trace {
                fs::write(path, formats::write_trace(report.workload_hash, &best.trace))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
        None => writeln!(out, "no program measured")?,
    }
    writeln!(out, "model spearman {:.3}", report.spearman)?;
    if report.exhausted {
        writeln!(out, "space exhausted")?;
    }
    Ok(out)
}

/// Replays a trace (strictly, following its decisions) into a program.
pub fn replay_file(e0: &TensorProgram, text: &str) -> anyhow::Result<(TensorProgram, Trace)> {
    let trace = formats::read_trace(text, Some(structural_hash(e0)))?;
    match validate_trace(e0, &trace) {
        Validation::Accepted { program, trace } => Ok((program, trace)),
        Validation::Rejected { index, reason } => bail!("trace rejected at instruction {index}: {reason}"),
    }
}

/// Compares interpreter outputs on `seeds` random input sets.
pub fn check_semantics(e0: &TensorProgram, p: &TensorProgram, seeds: u64) -> anyhow::Result<()> {
    let inputs: Vec<Tensors> = (0..seeds).map(|seed| random_inputs(e0, seed)).collect();
    let batch = |q: &TensorProgram| Executable::new(q).and_then(|ex| ex.run_batch(&inputs));
    let want = batch(e0).map_err(|e| anyhow::anyhow!("workload: {e:?}"))?;
    let got = batch(p).map_err(|e| anyhow::anyhow!("replayed program: {e:?}"))?;
    if let Some(seed) = want.iter().zip(&got).position(|(w, g)| w != g) {
        bail!("outputs differ from the workload on input seed {seed}");
    }
    Ok(())
}

pub fn replay(a: &ReplayArgs) -> anyhow::Result<String> {
    let spec = a.workload.spec()?;
    let e0 = spec.build()?;
    let machine = formats::load_machine(a.machine.as_deref())?;
    let text = fs::read_to_string(&a.trace).with_context(|| format!("reading {}", a.trace.display()))?;
    let (program, trace) = replay_file(&e0, &text).with_context(|| format!("replaying {}", a.trace.display()))?;
    let mut out = pretty_print(&program);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    writeln!(out, "instructions: {}", trace.instructions.len())?;
    writeln!(out, "latency: {}", simulate_latency(&program, &machine))?;
    if a.check_semantics {
        check_semantics(&e0, &program, a.seeds)?;
        writeln!(out, "semantics: outputs equal on {} input seeds", a.seeds)?;
    }
    Ok(out)
}

/// One enumerated program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumeratedProgram {
    pub hash: String,
    pub latency: f64,
    pub trace: Trace,
}

/// File written by `enumerate`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationFile {
    pub workload: WorkloadSpec,
    pub capped: bool,
    pub visited: usize,
    pub optimum: Option<f64>,
    pub programs: Vec<EnumeratedProgram>,
}

pub fn enumerate(a: &EnumerateArgs) -> anyhow::Result<String> {
    if a.cap == 0 {
        bail!("--cap must be positive");
    }
    let spec = a.workload.spec()?;
    let e0 = spec.build()?;
    let machine = ParallelMachine::new(formats::load_machine(a.machine.as_deref())?, a.jobs)?;
    let generator = formats::load_space(a.space.as_deref())?.build()?;
    let en = enumerate_space(&e0, &generator, a.cap);
    let latencies: Vec<f64> =
        machine.install(|| en.samples.par_iter().map(|s| simulate_latency(&s.program, &machine.spec)).collect());
    let optimum = latencies.iter().copied().min_by(f64::total_cmp);
    let file = EnumerationFile {
        workload: spec.clone(),
        capped: en.capped,
        visited: en.visited,
        optimum,
        programs: en
            .samples
            .iter()
            .zip(&latencies)
            .map(|(s, &latency)| EnumeratedProgram {
                hash: hash_hex(s.hash),
                latency,
                trace: Trace { instructions: s.trace.instructions.clone(), prior: None },
            })
            .collect(),
    };
    if let Some(path) = &a.out {
        formats::write_json(path, &file)?;
    }
    let mut out = String::new();
    writeln!(
        out,
        "workload {spec}: {} distinct programs from {} decision paths{}",
        file.programs.len(),
        file.visited,
        if file.capped { " (capped)" } else { "" }
    )?;
    if let Some(o) = optimum {
        writeln!(out, "optimum latency {o} (unscheduled {})", simulate_latency(&e0, &machine.spec))?;
    }
    Ok(out)
}

pub fn list_workloads() -> String {
    let mut out = String::new();
    for w in WORKLOADS {
        let dims: Vec<String> = w.default_shape.iter().map(i64::to_string).collect();
        let _ = writeln!(out, "{:<16} --shape {:<40} default {}", w.name, w.params, dims.join(","));
    }
    out
}

pub fn show_space(a: &ShowSpaceArgs) -> anyhow::Result<String> {
    let spec = a.workload.spec()?;
    let e0 = spec.build()?;
    let machine = formats::load_machine(a.machine.as_deref())?;
    let generator = formats::load_space(a.space.as_deref())?.build()?;
    let (program, trace, _) =
        generate(&e0, &generator, Decider::random(a.seed)).map_err(|e| anyhow::anyhow!("generator failed: {e}"))?;
    if let Some(path) = &a.trace_out {
        fs::write(path, formats::write_trace(structural_hash(&e0), &trace))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    let mut out = pretty_print(&program);
    if !out.ends_with('\n') {
        out.push('\n');
    }
    writeln!(out, "instructions: {}", trace.instructions.len())?;
    writeln!(out, "latency: {} (unscheduled {})", simulate_latency(&program, &machine), simulate_latency(&e0, &machine))?;
    Ok(out)
}
