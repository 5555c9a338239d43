//! Command-line tool for the kitting job-shop scheduler: instance
//! generation, rule/oracle/policy scheduling, PPO training and fine-tuning,
//! benchmark reports, ablations, and Gantt export.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use kitshop::bench::{self, EvalConfig, Method, Strategy};
use kitshop::{formats, gantt, make_test_set, parse_size, trainer};
use kitshop_core::baselines::{branch_and_bound, pdr_schedule, random_policy, Rule};
use kitshop_core::env::{SimConfig, Simulator};
use kitshop_core::graph::{build_graph, ConnectivityMode, FeatureConfig, GraphConfig};
use kitshop_core::instance::{generate_instance, GeneratorConfig, Instance};
use kitshop_core::net::NetConfig;
use kitshop_core::ppo::{InstanceSource, PpoConfig, TrainSetup};

#[derive(Parser)]
#[command(
    name = "kitshop",
    about = "Flexible job-shop scheduling under limited buffers and material kitting",
    version
)]
struct Cli {
    /// Global seed; the KITSHOP_SEED environment variable overrides the
    /// default, an explicit flag overrides both.
    #[arg(long, global = true, env = "KITSHOP_SEED", default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SimArgs {
    /// Reward weight linking pallet switches to the makespan objective.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Add the machine processing time of part-sorting operations on top of
    /// the kitting duration instead of replacing it.
    #[arg(long, default_value_t = false)]
    kitting_additive: bool,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        SimConfig {
            lambda: self.lambda,
            kitting_additive: self.kitting_additive,
            ..Default::default()
        }
    }
}

#[derive(Args, Clone)]
struct SetArgs {
    /// Instance size preset, JOBSxMACHINES (e.g. 10x5).
    #[arg(long)]
    size: Option<String>,
    /// Number of instances in the generated set.
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Directory of instance documents to use instead of generating.
    #[arg(long)]
    in_dir: Option<PathBuf>,
}

impl SetArgs {
    fn load(&self, seed: u64) -> Result<Vec<Arc<Instance>>> {
        match (&self.in_dir, &self.size) {
            (Some(dir), _) => trainer::load_instance_dir(dir),
            (None, Some(size)) => {
                let (n, m) = parse_size(size).map_err(|e| anyhow::anyhow!(e))?;
                Ok(make_test_set(&GeneratorConfig::for_size(n, m, 0), seed, self.count)?)
            }
            (None, None) => bail!("expected either --size or --in-dir"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic instances.
    Generate {
        /// Instance size, JOBSxMACHINES (e.g. 10x5).
        #[arg(long)]
        size: String,
        /// Write a single instance here.
        #[arg(long, conflicts_with = "out_dir")]
        out: Option<PathBuf>,
        /// Write `--count` instances (instance-0000.json, ...) here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Full generator config as JSON (overrides --size).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Schedule one instance with a dispatching rule or the random policy.
    Solve {
        /// fifo | mor | spt | mwr | lwr | random
        #[arg(long)]
        rule: String,
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the episode trace here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Solve one instance exactly with branch and bound (small instances).
    Oracle {
        #[arg(long = "in")]
        input: PathBuf,
        /// Node budget, plain or scientific (1e7).
        #[arg(long, default_value = "1e7")]
        nodes: String,
        /// Wall-clock limit in seconds.
        #[arg(long)]
        time_limit: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Dump the heterogeneous graph of an instance's initial state.
    Graph {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// base | all_ops | sort_only | sort_only_weighted | sort_only_inverse
        #[arg(long, default_value = "sort_only_weighted")]
        mode: String,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Train a policy with PPO.
    Train {
        /// Size preset for on-the-fly synthetic training instances.
        #[arg(long)]
        size: Option<String>,
        /// Full training setup as JSON (overrides the other options).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        /// Buffer connectivity mode of the state graph.
        #[arg(long, default_value = "sort_only_weighted")]
        mode: String,
        /// Operation feature set: full | ps_swest | ps_type | type_swest
        #[arg(long, default_value = "full")]
        features: String,
        #[arg(long, default_value_t = 8)]
        embed: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 100)]
        val_count: usize,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Fine-tune a checkpoint with a KL anchor toward its starting policy.
    Finetune {
        #[arg(long)]
        from: PathBuf,
        /// Directory of instance documents to fine-tune on.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Alternatively, a synthetic size preset.
        #[arg(long)]
        size: Option<String>,
        /// Weight of the KL regularization toward the starting policy.
        #[arg(long, default_value_t = 0.05)]
        kl: f64,
        #[arg(long, default_value_t = 200)]
        iterations: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        val_count: usize,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Evaluate methods over a test set and write CSV reports.
    Eval {
        /// fifo | mor | spt | mwr | lwr | random | ckpt:PATH (repeatable).
        #[arg(long, required = true)]
        method: Vec<String>,
        /// greedy | sampling (best of 100 seeded runs).
        #[arg(long, default_value = "greedy")]
        strategy: String,
        #[command(flatten)]
        set: SetArgs,
        /// Summary CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Optional per-instance detail CSV path.
        #[arg(long)]
        detail: Option<PathBuf>,
        /// Use the exact oracle as the gap reference (tiny instances only).
        #[arg(long, default_value_t = false)]
        oracle_ref: bool,
        #[arg(long, default_value = "1e7")]
        oracle_nodes: String,
        /// Report zero wall times so reports are byte-reproducible.
        #[arg(long, default_value_t = false)]
        no_timing: bool,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Evaluate the standard ablation checkpoints from a directory.
    Ablate {
        /// Directory holding `<variant>.json` checkpoints (full, base,
        /// all_ops, sort_only, sort_only_inverse, feat_*).
        #[arg(long)]
        ckpt_dir: PathBuf,
        #[command(flatten)]
        set: SetArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = false)]
        no_timing: bool,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Convert an episode trace into a Gantt document (and optional SVG).
    Gantt {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also render a static SVG image.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn parse_mode(spec: &str) -> Result<ConnectivityMode> {
    ConnectivityMode::ALL
        .into_iter()
        .find(|m| m.name() == spec)
        .with_context(|| format!("unknown connectivity mode {spec:?}"))
}

fn parse_features(spec: &str) -> Result<FeatureConfig> {
    Ok(match spec {
        "full" => FeatureConfig::default(),
        "ps_swest" => FeatureConfig { include_type: false, ..Default::default() },
        "ps_type" => FeatureConfig { include_swest: false, ..Default::default() },
        "type_swest" => FeatureConfig { include_ps: false, ..Default::default() },
        other => bail!("unknown feature set {other:?} (full|ps_swest|ps_type|type_swest)"),
    })
}

fn parse_nodes(spec: &str) -> Result<u64> {
    if let Ok(n) = spec.parse::<u64>() {
        return Ok(n);
    }
    let f: f64 = spec.parse().with_context(|| format!("invalid node budget {spec:?}"))?;
    anyhow::ensure!(f.is_finite() && f >= 0.0, "invalid node budget {spec:?}");
    Ok(f as u64)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let seed = cli.seed;
    match cli.command {
        Command::Generate { size, out, out_dir, count, config } => {
            let base = match config {
                Some(path) => serde_json::from_str::<GeneratorConfig>(
                    &std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?,
                )?,
                None => {
                    let (n, m) = parse_size(&size).map_err(|e| anyhow::anyhow!(e))?;
                    GeneratorConfig::for_size(n, m, seed)
                }
            };
            match (out, out_dir) {
                (Some(path), None) => {
                    let inst = generate_instance(&GeneratorConfig { seed, ..base })
                        .map_err(|e| anyhow::anyhow!("{e}"))?;
                    formats::write_instance(&path, &inst)?;
                    println!("wrote {}", path.display());
                }
                (None, Some(dir)) => {
                    std::fs::create_dir_all(&dir)?;
                    for i in 0..count {
                        let inst_seed = kitshop_core::rng::derive_seed(
                            seed,
                            kitshop_core::rng::DOMAIN_GENERATE,
                            0,
                            i as u64,
                        );
                        let inst =
                            generate_instance(&GeneratorConfig { seed: inst_seed, ..base.clone() })
                                .map_err(|e| anyhow::anyhow!("{e}"))?;
                        formats::write_instance(
                            &dir.join(format!("instance-{i:04}.json")),
                            &inst,
                        )?;
                    }
                    println!("wrote {count} instances to {}", dir.display());
                }
                _ => bail!("expected exactly one of --out or --out-dir"),
            }
        }

        Command::Solve { rule, input, out, sim } => {
            let inst = formats::read_instance(&input)?;
            let sim_cfg = sim.config();
            let simulator = Simulator::new(&inst, sim_cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
            let trace = match rule.as_str() {
                "random" => random_policy(&simulator, seed),
                name => {
                    let rule = Rule::ALL
                        .into_iter()
                        .find(|r| r.name() == name)
                        .with_context(|| format!("unknown rule {name:?}"))?;
                    pdr_schedule(&simulator, rule)
                }
            }
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            println!("makespan {} switches {}", trace.makespan, trace.total_switches);
            if let Some(path) = out {
                formats::write_trace(&path, &inst, &sim_cfg, &rule, &trace)?;
                println!("wrote {}", path.display());
            }
        }

        Command::Oracle { input, nodes, time_limit, out, sim } => {
            let inst = formats::read_instance(&input)?;
            let sim_cfg = sim.config();
            let simulator = Simulator::new(&inst, sim_cfg).map_err(|e| anyhow::anyhow!("{e}"))?;
            let node_limit = parse_nodes(&nodes)?;
            let deadline = time_limit.map(|s| Instant::now() + Duration::from_secs_f64(s));
            let result = branch_and_bound(&simulator, node_limit, || {
                deadline.is_some_and(|d| Instant::now() >= d)
            })
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            println!(
                "makespan {} optimal {} nodes {} switches {}",
                result.makespan,
                result.optimal,
                result.nodes_explored,
                result.best_schedule.total_switches
            );
            if let Some(path) = out {
                formats::write_trace(&path, &inst, &sim_cfg, "oracle", &result.best_schedule)?;
                println!("wrote {}", path.display());
            }
        }

        Command::Graph { input, out, mode, sim } => {
            let inst = formats::read_instance(&input)?;
            let simulator =
                Simulator::new(&inst, sim.config()).map_err(|e| anyhow::anyhow!("{e}"))?;
            let cfg = GraphConfig { mode: parse_mode(&mode)?, ..Default::default() };
            let graph = build_graph(&simulator, &simulator.reset(), &cfg);
            std::fs::write(&out, formats::save_graph(&graph))?;
            println!("wrote {}", out.display());
        }

        Command::Train {
            size,
            config,
            out,
            iterations,
            mode,
            features,
            embed,
            hidden,
            layers,
            val_count,
            sim,
        } => {
            let setup = match config {
                Some(path) => serde_json::from_str::<TrainSetup>(
                    &std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?,
                )?,
                None => {
                    let size = size.context("expected --size or --config")?;
                    let (n, m) = parse_size(&size).map_err(|e| anyhow::anyhow!(e))?;
                    TrainSetup {
                        source: InstanceSource::Generator(GeneratorConfig::for_size(n, m, 0)),
                        sim: sim.config(),
                        graph: GraphConfig {
                            mode: parse_mode(&mode)?,
                            features: parse_features(&features)?,
                            ..Default::default()
                        },
                        net: NetConfig {
                            embed_dim: embed,
                            hidden_dim: hidden,
                            gnn_layers: layers,
                            seed,
                            ..Default::default()
                        },
                        ppo: PpoConfig {
                            max_iterations: iterations,
                            validation_count: val_count,
                            seed,
                            ..Default::default()
                        },
                    }
                }
            };
            let result = trainer::run_training(&setup, None, false, &out, false)?;
            if let Some((mk, sw)) = result.best_validation {
                println!("best validation: makespan {mk:.2} switches {sw:.2}");
            }
            println!("wrote run to {}", out.display());
        }

        Command::Finetune { from, data, size, kl, iterations, out, val_count, sim } => {
            let model = formats::read_checkpoint(&from)?;
            let source = match (data, size) {
                (Some(dir), None) => InstanceSource::Pool(trainer::load_instance_dir(&dir)?),
                (None, Some(size)) => {
                    let (n, m) = parse_size(&size).map_err(|e| anyhow::anyhow!(e))?;
                    InstanceSource::Generator(GeneratorConfig::for_size(n, m, 0))
                }
                _ => bail!("expected exactly one of --data or --size"),
            };
            anyhow::ensure!(
                source.category_count() == model.category_count,
                "checkpoint expects {} part categories, data has {}",
                model.category_count,
                source.category_count()
            );
            let setup = TrainSetup {
                source,
                sim: sim.config(),
                graph: model.graph,
                net: model.net,
                ppo: PpoConfig {
                    max_iterations: iterations,
                    validation_count: val_count,
                    kl_coeff: kl,
                    seed,
                    ..Default::default()
                },
            };
            let result = trainer::run_training(&setup, Some(model), true, &out, false)?;
            if let Some((mk, sw)) = result.best_validation {
                println!("best validation: makespan {mk:.2} switches {sw:.2}");
            }
            println!("wrote run to {}", out.display());
        }

        Command::Eval {
            method,
            strategy,
            set,
            out,
            detail,
            oracle_ref,
            oracle_nodes,
            no_timing,
            sim,
        } => {
            let instances = set.load(seed)?;
            let strategy = Strategy::parse(&strategy)?;
            let cfg = EvalConfig { sim: sim.config(), seed, measure_time: !no_timing };
            let (reference, reference_makespans) =
                bench::reference_column(&instances, &cfg, oracle_ref, parse_nodes(&oracle_nodes)?)?;
            let mut methods = Vec::new();
            for spec in &method {
                let method = Method::parse(spec)?;
                methods.push(bench::evaluate(&method, strategy, &instances, &cfg)?);
            }
            let report = bench::EvalReport { reference, reference_makespans, methods };
            std::fs::write(&out, bench::summary_csv(&report))?;
            if let Some(path) = detail {
                std::fs::write(&path, bench::detail_csv(&report))?;
                println!("wrote {}", path.display());
            }
            print!("{}", bench::summary_csv(&report));
            println!("wrote {}", out.display());
        }

        Command::Ablate { ckpt_dir, set, out, no_timing, sim } => {
            let instances = set.load(seed)?;
            let cfg = EvalConfig { sim: sim.config(), seed, measure_time: !no_timing };
            let rows = bench::ablation_matrix(&ckpt_dir, &instances, &cfg)?;
            let csv = bench::ablation_csv(&rows);
            std::fs::write(&out, &csv)?;
            print!("{csv}");
            println!("wrote {}", out.display());
        }

        Command::Gantt { input, out, svg } => {
            let (inst, _, method, trace) = formats::read_trace(&input)?;
            let doc = gantt::export_gantt(&inst, &trace, &method)?;
            gantt::write_gantt(&out, &doc)?;
            println!("wrote {}", out.display());
            if let Some(path) = svg {
                std::fs::write(&path, gantt::render_svg(&doc))?;
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}
