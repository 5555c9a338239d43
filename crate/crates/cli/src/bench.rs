//! Evaluation harness: runs rules, the random policy, and checkpoints over
//! instance sets, measures makespan/gap/time/switches, and writes CSV
//! reports. The ablation runner evaluates the standard variant checkpoints
//! side by side.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use kitshop_core::baselines::{branch_and_bound, pdr_schedule, random_policy, Rule};
use kitshop_core::env::{audit_trace, EpisodeTrace, SimConfig, Simulator};
use kitshop_core::instance::Instance;
use kitshop_core::ppo::{evaluate_policy, DecodeStrategy, PolicyModel};
use kitshop_core::rng;

use crate::formats;

/// What produces schedules during an evaluation.
#[derive(Debug, Clone)]
pub enum Method {
    Rule(Rule),
    Random,
    Checkpoint { name: String, model: Box<PolicyModel> },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Rule(rule) => rule.name().to_string(),
            Method::Random => "random".into(),
            Method::Checkpoint { name, .. } => name.clone(),
        }
    }

    /// Parses `fifo|mor|spt|mwr|lwr|random|ckpt:PATH`.
    pub fn parse(spec: &str) -> Result<Method, BenchError> {
        for rule in Rule::ALL {
            if spec == rule.name() {
                return Ok(Method::Rule(rule));
            }
        }
        if spec == "random" {
            return Ok(Method::Random);
        }
        if let Some(path) = spec.strip_prefix("ckpt:") {
            let model = formats::read_checkpoint(Path::new(path))
                .map_err(|e| BenchError::Checkpoint { path: path.into(), source: e })?;
            let name = Path::new(path)
                .file_stem()
                .map(|s| format!("ckpt:{}", s.to_string_lossy()))
                .unwrap_or_else(|| "ckpt".into());
            return Ok(Method::Checkpoint { name, model: Box::new(model) });
        }
        Err(BenchError::UnknownMethod(spec.to_string()))
    }
}

/// Greedy decoding (one deterministic run) or best-of-N sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Greedy,
    Sampling { samples: usize },
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Greedy => "greedy".into(),
            Strategy::Sampling { samples } => format!("sampling{samples}"),
        }
    }

    pub fn parse(spec: &str) -> Result<Strategy, BenchError> {
        match spec {
            "greedy" => Ok(Strategy::Greedy),
            "sampling" => Ok(Strategy::Sampling { samples: 100 }),
            other => match other.strip_prefix("sampling") {
                Some(n) => Ok(Strategy::Sampling {
                    samples: n.parse().map_err(|_| BenchError::UnknownStrategy(spec.into()))?,
                }),
                None => Err(BenchError::UnknownStrategy(spec.into())),
            },
        }
    }
}

#[derive(Debug)]
pub enum BenchError {
    UnknownMethod(String),
    UnknownStrategy(String),
    Checkpoint { path: PathBuf, source: formats::FormatError },
    Policy(kitshop_core::ppo::PolicyError),
    Env(kitshop_core::env::EnvError),
    /// A produced trace failed the independent validity audit.
    Audit { method: String, instance: usize, reason: String },
    Io(std::io::Error),
}

impl fmt::Display for BenchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BenchError::UnknownMethod(m) => write!(
                f,
                "unknown method {m:?} (expected fifo|mor|spt|mwr|lwr|random|ckpt:PATH)"
            ),
            BenchError::UnknownStrategy(s) => {
                write!(f, "unknown strategy {s:?} (expected greedy|sampling)")
            }
            BenchError::Checkpoint { path, source } => {
                write!(f, "cannot load checkpoint {}: {source}", path.display())
            }
            BenchError::Policy(e) => write!(f, "{e}"),
            BenchError::Env(e) => write!(f, "{e}"),
            BenchError::Audit { method, instance, reason } => {
                write!(f, "{method} produced an invalid trace on instance {instance}: {reason}")
            }
            BenchError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for BenchError {}

impl From<kitshop_core::ppo::PolicyError> for BenchError {
    fn from(e: kitshop_core::ppo::PolicyError) -> Self {
        BenchError::Policy(e)
    }
}

impl From<kitshop_core::env::EnvError> for BenchError {
    fn from(e: kitshop_core::env::EnvError) -> Self {
        BenchError::Env(e)
    }
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e)
    }
}

/// One instance's outcome under one method.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRow {
    pub instance: usize,
    pub makespan: u64,
    pub switches: u64,
    pub time_s: f64,
}

/// One method's evaluation over the whole set.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodReport {
    pub method: String,
    pub strategy: String,
    pub mean_makespan: f64,
    pub mean_switches: f64,
    pub mean_time_s: f64,
    pub rows: Vec<InstanceRow>,
}

/// Full evaluation: per-method means plus the gap reference column.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Name of the reference column gaps are computed against.
    pub reference: String,
    /// Per-instance reference makespans.
    pub reference_makespans: Vec<u64>,
    pub methods: Vec<MethodReport>,
}

/// Evaluation options.
#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub sim: SimConfig,
    /// Seed for sampling strategies and the random policy.
    pub seed: u64,
    /// When false, reported times are zero so reports are byte-reproducible.
    pub measure_time: bool,
}

fn run_one(
    method: &Method,
    strategy: Strategy,
    inst: &Instance,
    index: usize,
    cfg: &EvalConfig,
) -> Result<EpisodeTrace, BenchError> {
    let sim = Simulator::new(inst, cfg.sim)?;
    let samples = match strategy {
        Strategy::Greedy => 1,
        Strategy::Sampling { samples } => samples.max(1),
    };
    let mut best: Option<EpisodeTrace> = None;
    for k in 0..samples {
        let run_seed = rng::derive_seed(cfg.seed, rng::DOMAIN_ROLLOUT, index as u64, k as u64);
        let trace = match method {
            Method::Rule(rule) => {
                // Rules are deterministic; sampling degenerates to one run.
                if k > 0 {
                    break;
                }
                pdr_schedule(&sim, *rule)?
            }
            Method::Random => random_policy(&sim, run_seed)?,
            Method::Checkpoint { model, .. } => {
                let strategy = match strategy {
                    Strategy::Greedy => DecodeStrategy::Greedy,
                    Strategy::Sampling { .. } => DecodeStrategy::Sample { seed: run_seed },
                };
                evaluate_policy(model, inst, &cfg.sim, strategy)?
            }
        };
        let better = match &best {
            None => true,
            Some(b) => {
                trace.makespan < b.makespan
                    || (trace.makespan == b.makespan && trace.total_switches < b.total_switches)
            }
        };
        if better {
            best = Some(trace);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Evaluates one method over the instance set. Per-instance work runs in
/// parallel; metrics are deterministic in (method, set, seed).
pub fn evaluate(
    method: &Method,
    strategy: Strategy,
    instances: &[Arc<Instance>],
    cfg: &EvalConfig,
) -> Result<MethodReport, BenchError> {
    let rows: Result<Vec<InstanceRow>, BenchError> = instances
        .par_iter()
        .enumerate()
        .map(|(index, inst)| {
            let started = Instant::now();
            let trace = run_one(method, strategy, inst, index, cfg)?;
            let time_s = if cfg.measure_time {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            };
            audit_trace(inst, &cfg.sim, &trace).map_err(|reason| BenchError::Audit {
                method: method.name(),
                instance: index,
                reason,
            })?;
            Ok(InstanceRow {
                instance: index,
                makespan: trace.makespan,
                switches: trace.total_switches,
                time_s,
            })
        })
        .collect();
    let rows = rows?;
    let n = rows.len().max(1) as f64;
    Ok(MethodReport {
        method: method.name(),
        strategy: strategy.name(),
        mean_makespan: rows.iter().map(|r| r.makespan as f64).sum::<f64>() / n,
        mean_switches: rows.iter().map(|r| r.switches as f64).sum::<f64>() / n,
        mean_time_s: rows.iter().map(|r| r.time_s).sum::<f64>() / n,
        rows,
    })
}

/// Per-instance reference makespans for the gap column: the exact optimum
/// when requested (tiny sets only), otherwise the best dispatching rule per
/// the mean makespan.
pub fn reference_column(
    instances: &[Arc<Instance>],
    cfg: &EvalConfig,
    use_oracle: bool,
    oracle_node_limit: u64,
) -> Result<(String, Vec<u64>), BenchError> {
    if use_oracle {
        let makespans: Result<Vec<u64>, BenchError> = instances
            .par_iter()
            .map(|inst| {
                let sim = Simulator::new(inst, cfg.sim)?;
                let result = branch_and_bound(&sim, oracle_node_limit, || false)?;
                Ok(result.makespan)
            })
            .collect();
        return Ok(("oracle".into(), makespans?));
    }
    let mut best: Option<MethodReport> = None;
    for rule in Rule::ALL {
        let report = evaluate(&Method::Rule(rule), Strategy::Greedy, instances, cfg)?;
        if best.as_ref().is_none_or(|b| report.mean_makespan < b.mean_makespan) {
            best = Some(report);
        }
    }
    let best = best.expect("five rules");
    let name = format!("best-pdr:{}", best.method);
    Ok((name, best.rows.iter().map(|r| r.makespan).collect()))
}

/// Mean relative gap of a method against the per-instance reference.
pub fn mean_gap(report: &MethodReport, reference: &[u64]) -> f64 {
    let n = report.rows.len().max(1) as f64;
    report
        .rows
        .iter()
        .zip(reference.iter())
        .map(|(row, &r)| (row.makespan as f64 - r as f64) / (r as f64).max(1.0))
        .sum::<f64>()
        / n
}

/// Renders the summary CSV (one row per method).
pub fn summary_csv(report: &EvalReport) -> String {
    let mut out = String::from(
        "method,strategy,instances,mean_makespan,mean_gap,mean_switches,mean_time_s,reference\n",
    );
    for m in &report.methods {
        let gap = mean_gap(m, &report.reference_makespans);
        out.push_str(&format!(
            "{},{},{},{:.4},{:.6},{:.4},{:.6},{}\n",
            m.method,
            m.strategy,
            m.rows.len(),
            m.mean_makespan,
            gap,
            m.mean_switches,
            m.mean_time_s,
            report.reference,
        ));
    }
    out
}

/// Renders the per-instance detail CSV.
pub fn detail_csv(report: &EvalReport) -> String {
    let mut out = String::from("method,strategy,instance,makespan,switches,time_s,reference_makespan\n");
    for m in &report.methods {
        for row in &m.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{}\n",
                m.method,
                m.strategy,
                row.instance,
                row.makespan,
                row.switches,
                row.time_s,
                report.reference_makespans[row.instance],
            ));
        }
    }
    out
}

/// The standard ablation variants and their checkpoint file stems. `full`
/// is the reference configuration (weighted sort-only connectivity, all
/// features); the `feat_*` variants drop operation features, the rest vary
/// connectivity.
pub const ABLATION_VARIANTS: [&str; 8] = [
    "full",
    "base",
    "all_ops",
    "sort_only",
    "sort_only_inverse",
    "feat_ps_swest",
    "feat_ps_type",
    "feat_type_swest",
];

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: String,
    /// None when the variant's checkpoint file is absent.
    pub report: Option<MethodReport>,
}

/// Evaluates every variant checkpoint found in `dir` (files named
/// `<variant>.json`) under both decoding strategies' greedy mode. Missing
/// variants are listed as absent rather than failing the run.
pub fn ablation_matrix(
    dir: &Path,
    instances: &[Arc<Instance>],
    cfg: &EvalConfig,
) -> Result<Vec<AblationRow>, BenchError> {
    let mut rows = Vec::new();
    for variant in ABLATION_VARIANTS {
        let path = dir.join(format!("{variant}.json"));
        if !path.is_file() {
            rows.push(AblationRow { variant: variant.into(), report: None });
            continue;
        }
        let model = formats::read_checkpoint(&path)
            .map_err(|e| BenchError::Checkpoint { path: path.clone(), source: e })?;
        let method = Method::Checkpoint { name: variant.into(), model: Box::new(model) };
        let report = evaluate(&method, Strategy::Greedy, instances, cfg)?;
        rows.push(AblationRow { variant: variant.into(), report: Some(report) });
    }
    Ok(rows)
}

/// Renders the ablation CSV with gaps against the `full` variant.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let full = rows
        .iter()
        .find(|r| r.variant == "full")
        .and_then(|r| r.report.as_ref())
        .map(|r| (r.mean_makespan, r.mean_switches));
    let mut out =
        String::from("variant,status,mean_makespan,mean_switches,makespan_gap_to_full,switches_gap_to_full\n");
    for row in rows {
        match &row.report {
            None => out.push_str(&format!("{},absent,,,,\n", row.variant)),
            Some(r) => {
                let (gm, gs) = match full {
                    Some((fm, fs)) => (
                        format!("{:.6}", (r.mean_makespan - fm) / fm.max(1.0)),
                        format!("{:.6}", (r.mean_switches - fs) / fs.max(1.0)),
                    ),
                    None => (String::new(), String::new()),
                };
                out.push_str(&format!(
                    "{},present,{:.4},{:.4},{},{}\n",
                    row.variant, r.mean_makespan, r.mean_switches, gm, gs
                ));
            }
        }
    }
    out
}
