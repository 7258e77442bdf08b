//! JSON file formats: programs, trace files (JSON lines with a workload-hash
//! header), machine specs, space configs, tuning records and reports.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use schedspace_core::cost_model::{FeatureVector, ProxyModel};
use schedspace_core::ir::{structural_hash, TensorProgram};
use schedspace_core::machine::MachineSpec;
use schedspace_core::modules::SpaceConfig;
use schedspace_core::search::{TuningRecord, TuningReport};
use schedspace_core::trace::{validate_trace, Instruction, Trace, Validation};

use crate::registry::WorkloadSpec;

#[derive(Debug, thiserror::Error)]
pub enum TraceFileError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("trace file is empty (expected a workload_hash header line)")]
    Empty,
    #[error("trace was recorded for workload hash {found}, but this workload hashes to {expected}")]
    HashMismatch { expected: String, found: String },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    workload_hash: String,
}

pub fn hash_hex(h: u64) -> String {
    format!("{h:016x}")
}

/// Header line, then one instruction per line.
pub fn write_trace(workload_hash: u64, t: &Trace) -> String {
    let mut out = serde_json::to_string(&Header { workload_hash: hash_hex(workload_hash) }).expect("header serializes");
    out.push('\n');
    for inst in &t.instructions {
        out.push_str(&serde_json::to_string(inst).expect("instruction serializes"));
        out.push('\n');
    }
    out
}

/// Parses a trace file, refusing it when `expected_hash` is given and differs
/// from the header. Blank lines are skipped; line numbers are 1-based.
pub fn read_trace(text: &str, expected_hash: Option<u64>) -> Result<Trace, TraceFileError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (n, first) = lines.next().ok_or(TraceFileError::Empty)?;
    let header: Header =
        serde_json::from_str(first).map_err(|e| TraceFileError::Line { line: n + 1, message: format!("bad header: {e}") })?;
    if let Some(h) = expected_hash {
        if !header.workload_hash.eq_ignore_ascii_case(&hash_hex(h)) {
            return Err(TraceFileError::HashMismatch { expected: hash_hex(h), found: header.workload_hash });
        }
    }
    let mut instructions = Vec::new();
    for (n, line) in lines {
        let inst: Instruction =
            serde_json::from_str(line).map_err(|e| TraceFileError::Line { line: n + 1, message: e.to_string() })?;
        instructions.push(inst);
    }
    Ok(Trace { instructions, prior: None })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn load_machine(path: Option<&Path>) -> anyhow::Result<MachineSpec> {
    let spec: MachineSpec = match path {
        Some(p) => read_json(p)?,
        None => MachineSpec::default(),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_space(path: Option<&Path>) -> anyhow::Result<SpaceConfig> {
    let cfg: SpaceConfig = match path {
        Some(p) => read_json(p)?,
        None => SpaceConfig::default_space(),
    };
    cfg.build()?;
    Ok(cfg)
}

/// One line of a tuning-record file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordLine {
    pub trace: Trace,
    pub latency: f64,
    pub features: FeatureVector,
}

impl From<&TuningRecord> for RecordLine {
    fn from(r: &TuningRecord) -> Self {
        RecordLine { trace: without_prior(&r.trace), latency: r.latency, features: r.features }
    }
}

/// The prior is derived data; files carry decisions only.
fn without_prior(t: &Trace) -> Trace {
    Trace { instructions: t.instructions.clone(), prior: None }
}

pub fn write_records(records: &[TuningRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&RecordLine::from(r)).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Parses a record file and revalidates every trace against `e0`; a trace
/// that does not replay is an error naming its line.
pub fn read_records(text: &str, e0: &TensorProgram) -> anyhow::Result<Vec<TuningRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: RecordLine = serde_json::from_str(line).with_context(|| format!("line {}", n + 1))?;
        if !(r.latency.is_finite() && r.latency > 0.0) {
            bail!("line {}: latency must be positive", n + 1);
        }
        match validate_trace(e0, &r.trace) {
            Validation::Accepted { program, trace } => out.push(TuningRecord {
                hash: structural_hash(&program),
                program: Some(program),
                trace,
                latency: r.latency,
                features: r.features,
                round: 0,
                predicted: None,
            }),
            Validation::Rejected { index, reason } => {
                bail!("line {}: trace rejected at instruction {index}: {reason}", n + 1)
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportWorkload {
    #[serde(flatten)]
    pub spec: WorkloadSpec,
    pub hash: String,
    /// Latency of the unscheduled program.
    pub baseline_latency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportBest {
    pub latency: f64,
    pub speedup: f64,
    pub posterior_score: Option<f64>,
    pub trace: Trace,
    pub program: TensorProgram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportModel {
    pub spearman: f64,
    pub degenerate: bool,
    pub weights: Vec<f64>,
}

/// Report file written by `tune`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub workload: ReportWorkload,
    pub seed: u64,
    /// Unix seconds; the only field that varies between identical runs.
    pub timestamp: u64,
    pub trials: usize,
    pub rounds: usize,
    pub exhausted: bool,
    pub best: Option<ReportBest>,
    pub best_per_round: Vec<f64>,
    pub log: Vec<RecordLine>,
    pub model: ReportModel,
}

impl ReportFile {
    pub fn new(spec: &WorkloadSpec, e0_latency: f64, r: &TuningReport, timestamp: u64) -> Self {
        let best = r.best.as_ref().and_then(|b| {
            Some(ReportBest {
                latency: b.latency,
                speedup: e0_latency / b.latency,
                posterior_score: r.best_posterior,
                trace: without_prior(&b.trace),
                program: b.program.clone()?,
            })
        });
        let model: &ProxyModel = &r.model;
        ReportFile {
            workload: ReportWorkload { spec: spec.clone(), hash: hash_hex(r.workload_hash), baseline_latency: e0_latency },
            seed: r.seed,
            timestamp,
            trials: r.log.len(),
            rounds: r.rounds,
            exhausted: r.exhausted,
            best,
            best_per_round: r.best_per_round.clone(),
            log: r.log.iter().map(RecordLine::from).collect(),
            model: ReportModel { spearman: r.spearman, degenerate: model.degenerate, weights: model.weights.clone() },
        }
    }
}
