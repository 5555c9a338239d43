//! Versioned on-disk documents: instances, episode traces, checkpoints, and
//! graph dumps. All are JSON with a `format`/`version` header; numbers are
//! written with serde_json, whose float encoding round-trips `f64` exactly,
//! so checkpoints restore bit-identical parameters.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use kitshop_core::env::{EpisodeTrace, SimConfig};
use kitshop_core::graph::HeteroGraph;
use kitshop_core::instance::{Instance, Job, Operation, Violation};
use kitshop_core::ppo::PolicyModel;

pub const INSTANCE_FORMAT: &str = "fjsp-lb-mk-instance";
pub const TRACE_FORMAT: &str = "fjsp-lb-mk-trace";
pub const CHECKPOINT_FORMAT: &str = "fjsp-lb-mk-checkpoint";
pub const GRAPH_FORMAT: &str = "fjsp-lb-mk-graph";
pub const VERSION: u32 = 1;

#[derive(Debug)]
pub enum FormatError {
    /// Malformed document; the underlying error carries line and column.
    Parse(serde_json::Error),
    WrongFormat { expected: &'static str, found: String },
    UnsupportedVersion { format: String, version: u32 },
    /// Structurally valid document describing an invalid instance.
    InvalidInstance(Vec<Violation>),
    /// Checkpoint parameter shapes do not match its declared architecture.
    InconsistentCheckpoint,
    Io(std::io::Error),
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FormatError::Parse(e) => write!(f, "parse error: {e}"),
            FormatError::WrongFormat { expected, found } => {
                write!(f, "expected a {expected} document, found {found:?}")
            }
            FormatError::UnsupportedVersion { format, version } => {
                write!(f, "unsupported {format} version {version}")
            }
            FormatError::InvalidInstance(violations) => {
                writeln!(f, "instance fails validation:")?;
                for v in violations {
                    writeln!(f, "  - {v}")?;
                }
                Ok(())
            }
            FormatError::InconsistentCheckpoint => {
                write!(f, "checkpoint parameters do not match the declared architecture")
            }
            FormatError::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for FormatError {}

impl From<serde_json::Error> for FormatError {
    fn from(e: serde_json::Error) -> Self {
        FormatError::Parse(e)
    }
}

impl From<std::io::Error> for FormatError {
    fn from(e: std::io::Error) -> Self {
        FormatError::Io(e)
    }
}

fn check_header(
    format: &str,
    version: u32,
    expected: &'static str,
) -> Result<(), FormatError> {
    if format != expected {
        return Err(FormatError::WrongFormat { expected, found: format.to_string() });
    }
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { format: format.to_string(), version });
    }
    Ok(())
}

// --- instance document -----------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PartDoc {
    category: usize,
    count: u32,
}

#[derive(Serialize, Deserialize)]
struct CompatibleDoc {
    machine: usize,
    time: u64,
}

#[derive(Serialize, Deserialize)]
struct OperationDoc {
    part_sorting: bool,
    compatible: Vec<CompatibleDoc>,
}

#[derive(Serialize, Deserialize)]
struct JobDoc {
    parts: Vec<PartDoc>,
    operations: Vec<OperationDoc>,
}

#[derive(Serialize, Deserialize)]
struct InstanceDoc {
    format: String,
    version: u32,
    machine_count: usize,
    part_sorting_machines: Vec<usize>,
    category_count: usize,
    pallet_count: usize,
    place_time: u64,
    switch_time: u64,
    jobs: Vec<JobDoc>,
}

impl From<&Instance> for InstanceDoc {
    fn from(inst: &Instance) -> Self {
        InstanceDoc {
            format: INSTANCE_FORMAT.into(),
            version: VERSION,
            machine_count: inst.machine_count,
            part_sorting_machines: inst.part_sorting_machines.clone(),
            category_count: inst.category_count,
            pallet_count: inst.pallet_count,
            place_time: inst.place_time,
            switch_time: inst.switch_time,
            jobs: inst
                .jobs
                .iter()
                .map(|job| JobDoc {
                    parts: job
                        .parts
                        .iter()
                        .map(|&(category, count)| PartDoc { category, count })
                        .collect(),
                    operations: job
                        .operations
                        .iter()
                        .map(|op| OperationDoc {
                            part_sorting: op.part_sorting,
                            compatible: op
                                .compatible
                                .iter()
                                .map(|&(machine, time)| CompatibleDoc { machine, time })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Serializes an instance to its canonical document. Deterministic: equal
/// instances produce byte-identical documents.
pub fn save_instance(inst: &Instance) -> String {
    let mut out = serde_json::to_string_pretty(&InstanceDoc::from(inst)).expect("serializable");
    out.push('\n');
    out
}

/// Parses and validates an instance document.
pub fn load_instance(text: &str) -> Result<Instance, FormatError> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, INSTANCE_FORMAT)?;
    let inst = Instance {
        machine_count: doc.machine_count,
        part_sorting_machines: doc.part_sorting_machines,
        category_count: doc.category_count,
        pallet_count: doc.pallet_count,
        place_time: doc.place_time,
        switch_time: doc.switch_time,
        jobs: doc
            .jobs
            .into_iter()
            .enumerate()
            .map(|(j, job)| Job {
                parts: job.parts.into_iter().map(|p| (p.category, p.count)).collect(),
                operations: job
                    .operations
                    .into_iter()
                    .enumerate()
                    .map(|(i, op)| Operation {
                        job: j,
                        index: i,
                        compatible: op.compatible.into_iter().map(|c| (c.machine, c.time)).collect(),
                        part_sorting: op.part_sorting,
                    })
                    .collect(),
            })
            .collect(),
    };
    let violations = inst.validate();
    if !violations.is_empty() {
        return Err(FormatError::InvalidInstance(violations));
    }
    Ok(inst)
}

pub fn write_instance(path: &Path, inst: &Instance) -> Result<(), FormatError> {
    Ok(fs::write(path, save_instance(inst))?)
}

pub fn read_instance(path: &Path) -> Result<Instance, FormatError> {
    load_instance(&fs::read_to_string(path)?)
}

// --- episode trace document ------------------------------------------------

/// A self-contained episode record: the instance it ran on, the simulator
/// configuration, and the schedule itself.
#[derive(Serialize, Deserialize)]
pub struct TraceDoc {
    format: String,
    version: u32,
    /// Label of the policy or rule that produced the trace.
    pub method: String,
    pub sim: SimConfig,
    pub instance: InstanceDocWrapper,
    pub trace: EpisodeTrace,
}

/// Inline instance body reusing the instance schema minus the header.
#[derive(Serialize, Deserialize)]
pub struct InstanceDocWrapper(serde_json::Value);

pub fn save_trace(inst: &Instance, sim: &SimConfig, method: &str, trace: &EpisodeTrace) -> String {
    let instance = serde_json::to_value(InstanceDoc::from(inst)).expect("serializable");
    let doc = TraceDoc {
        format: TRACE_FORMAT.into(),
        version: VERSION,
        method: method.to_string(),
        sim: *sim,
        instance: InstanceDocWrapper(instance),
        trace: trace.clone(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("serializable");
    out.push('\n');
    out
}

pub fn load_trace(text: &str) -> Result<(Instance, SimConfig, String, EpisodeTrace), FormatError> {
    let doc: TraceDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, TRACE_FORMAT)?;
    let inst = load_instance(&serde_json::to_string(&doc.instance.0)?)?;
    Ok((inst, doc.sim, doc.method, doc.trace))
}

pub fn write_trace(
    path: &Path,
    inst: &Instance,
    sim: &SimConfig,
    method: &str,
    trace: &EpisodeTrace,
) -> Result<(), FormatError> {
    Ok(fs::write(path, save_trace(inst, sim, method, trace))?)
}

pub fn read_trace(path: &Path) -> Result<(Instance, SimConfig, String, EpisodeTrace), FormatError> {
    load_trace(&fs::read_to_string(path)?)
}

// --- checkpoint document ---------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    version: u32,
    model: PolicyModel,
}

/// Serializes a model checkpoint. Parameters round-trip exactly.
pub fn save_checkpoint(model: &PolicyModel) -> String {
    let doc = CheckpointDoc { format: CHECKPOINT_FORMAT.into(), version: VERSION, model: model.clone() };
    let mut out = serde_json::to_string(&doc).expect("serializable");
    out.push('\n');
    out
}

pub fn load_checkpoint(text: &str) -> Result<PolicyModel, FormatError> {
    let doc: CheckpointDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, CHECKPOINT_FORMAT)?;
    if !doc.model.is_consistent() {
        return Err(FormatError::InconsistentCheckpoint);
    }
    Ok(doc.model)
}

pub fn write_checkpoint(path: &Path, model: &PolicyModel) -> Result<(), FormatError> {
    Ok(fs::write(path, save_checkpoint(model))?)
}

pub fn read_checkpoint(path: &Path) -> Result<PolicyModel, FormatError> {
    load_checkpoint(&fs::read_to_string(path)?)
}

// --- graph dump ------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    format: String,
    version: u32,
    graph: HeteroGraph,
}

/// Dumps a graph snapshot (nodes, features, weighted edges) for golden-file
/// comparisons and debugging.
pub fn save_graph(graph: &HeteroGraph) -> String {
    let doc = GraphDoc { format: GRAPH_FORMAT.into(), version: VERSION, graph: graph.clone() };
    let mut out = serde_json::to_string_pretty(&doc).expect("serializable");
    out.push('\n');
    out
}

pub fn load_graph(text: &str) -> Result<HeteroGraph, FormatError> {
    let doc: GraphDoc = serde_json::from_str(text)?;
    check_header(&doc.format, doc.version, GRAPH_FORMAT)?;
    Ok(doc.graph)
}
