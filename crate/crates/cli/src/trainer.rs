//! Training run orchestration: resolves a setup, streams the metric log to
//! CSV, and writes checkpoints (best-by-validation and final) into the run
//! directory.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use kitshop_core::ppo::{
    train, PolicyModel, TrainLogRow, TrainResult, TrainSetup, TrainSink,
};

use crate::formats;

pub const LOG_HEADER: &str = "iteration,mean_makespan,mean_switches,policy_loss,value_loss,entropy,kl,val_makespan,val_switches,best_val_makespan";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One log row as a CSV line (without newline). Float formatting uses the
/// shortest round-trip representation, so identical runs produce identical
/// logs byte for byte.
pub fn log_row_csv(row: &TrainLogRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        row.iteration,
        row.mean_makespan,
        row.mean_switches,
        opt(row.loss.map(|l| l.policy)),
        opt(row.loss.map(|l| l.value)),
        opt(row.loss.map(|l| l.entropy)),
        opt(row.loss.map(|l| l.kl)),
        opt(row.validation_makespan),
        opt(row.validation_switches),
        opt(row.best_validation_makespan),
    )
}

/// Streams log rows to `log.csv` and snapshots improving models to
/// `best.json`; echoes progress to stderr.
struct RunSink {
    out_dir: PathBuf,
    log: fs::File,
    quiet: bool,
}

impl TrainSink for RunSink {
    fn record(&mut self, row: &TrainLogRow) {
        let _ = writeln!(self.log, "{}", log_row_csv(row));
        if !self.quiet {
            if let (Some(mk), Some(sw)) = (row.validation_makespan, row.validation_switches) {
                eprintln!(
                    "iter {:>5}: rollout makespan {:.2} switches {:.2} | validation {:.2} / {:.2}",
                    row.iteration, row.mean_makespan, row.mean_switches, mk, sw
                );
            }
        }
    }

    fn on_best(&mut self, iteration: usize, model: &PolicyModel) {
        if let Err(e) = formats::write_checkpoint(&self.out_dir.join("best.json"), model) {
            eprintln!("warning: failed to write best checkpoint at iter {iteration}: {e}");
        }
    }
}

/// Runs training end to end, writing `setup.json`, `log.csv`, `best.json`,
/// and `final.json` into `out_dir`.
pub fn run_training(
    setup: &TrainSetup,
    initial: Option<PolicyModel>,
    anchor_initial: bool,
    out_dir: &Path,
    quiet: bool,
) -> Result<TrainResult> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating run directory {}", out_dir.display()))?;
    fs::write(
        out_dir.join("setup.json"),
        serde_json::to_string_pretty(setup).context("serializing setup")? + "\n",
    )?;
    let mut log = fs::File::create(out_dir.join("log.csv"))?;
    writeln!(log, "{LOG_HEADER}")?;
    let mut sink = RunSink { out_dir: out_dir.to_path_buf(), log, quiet };

    let result = train(setup, initial, anchor_initial, &mut sink)
        .map_err(|e| anyhow::anyhow!("training failed: {e}"))?;

    formats::write_checkpoint(&out_dir.join("final.json"), &result.model)
        .context("writing final checkpoint")?;
    formats::write_checkpoint(&out_dir.join("best.json"), &result.best)
        .context("writing best checkpoint")?;
    Ok(result)
}

/// Loads every instance document in a directory (sorted by file name).
pub fn load_instance_dir(dir: &Path) -> Result<Vec<std::sync::Arc<kitshop_core::instance::Instance>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    anyhow::ensure!(!paths.is_empty(), "no .json instances in {}", dir.display());
    paths
        .iter()
        .map(|p| {
            formats::read_instance(p)
                .map(std::sync::Arc::new)
                .map_err(|e| anyhow::anyhow!("loading {}: {e}", p.display()))
        })
        .collect()
}
