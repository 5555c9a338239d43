// calibration scratch: margins for the desk-scale learning gate and the
// ablation ordering, across seeds
use std::sync::Arc;
use std::time::Instant;

use kitshop_core::baselines::{pdr_schedule, random_policy, Rule};
use kitshop_core::env::{SimConfig, Simulator};
use kitshop_core::graph::{ConnectivityMode, GraphConfig};
use kitshop_core::instance::GeneratorConfig;
use kitshop_core::net::NetConfig;
use kitshop_core::ppo::*;
use kitshop_core::rng;

fn test_set(count: u64) -> Vec<Arc<kitshop_core::instance::Instance>> {
    let generator = GeneratorConfig::for_size(10, 5, 0);
    (0..count)
        .map(|i| {
            let cfg = GeneratorConfig {
                seed: rng::derive_seed(777, rng::DOMAIN_EVAL_SET, 0xBE, i),
                ..generator.clone()
            };
            Arc::new(kitshop_core::instance::generate_instance(&cfg).unwrap())
        })
        .collect()
}

fn greedy_mean(model: &PolicyModel, set: &[Arc<kitshop_core::instance::Instance>], sim: &SimConfig) -> (f64, f64) {
    validate_greedy(model, set, sim).unwrap()
}

fn sampling_mean(model: &PolicyModel, set: &[Arc<kitshop_core::instance::Instance>], sim: &SimConfig, n: usize) -> (f64, f64) {
    let mut mk = 0.0;
    let mut sw = 0.0;
    for (i, inst) in set.iter().enumerate() {
        let mut best: Option<(u64, u64)> = None;
        for k in 0..n {
            let seed = rng::derive_seed(555, rng::DOMAIN_ROLLOUT, i as u64, k as u64);
            let t = evaluate_policy(model, inst, sim, DecodeStrategy::Sample { seed }).unwrap();
            let cand = (t.makespan, t.total_switches);
            if best.is_none() || cand < best.unwrap() {
                best = Some(cand);
            }
        }
        let (m, s) = best.unwrap();
        mk += m as f64;
        sw += s as f64;
    }
    (mk / set.len() as f64, sw / set.len() as f64)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let phase = args.get(1).map(String::as_str).unwrap_or("gate");
    let set = test_set(100);
    let sim = SimConfig { lambda: 2.0, ..Default::default() };

    // Baselines.
    let mut best_pdr = f64::INFINITY;
    let mut min_sw = f64::INFINITY;
    for rule in Rule::ALL {
        let (mut mk, mut sw) = (0.0, 0.0);
        for inst in set.iter() {
            let s = Simulator::new(inst, sim).unwrap();
            let t = pdr_schedule(&s, rule).unwrap();
            mk += t.makespan as f64;
            sw += t.total_switches as f64;
        }
        mk /= set.len() as f64;
        sw /= set.len() as f64;
        best_pdr = best_pdr.min(mk);
        min_sw = min_sw.min(sw);
    }
    let mut rnd = 0.0;
    for (i, inst) in set.iter().enumerate() {
        let s = Simulator::new(inst, sim).unwrap();
        rnd += random_policy(&s, i as u64).unwrap().makespan as f64;
    }
    rnd /= set.len() as f64;
    println!("baselines: random {rnd:.2}, best_pdr {best_pdr:.2}, min_pdr_sw {min_sw:.2}");
    println!("targets: (a) {:.2} (b) {:.2} sampling<= {:.2} (c) {:.2}", 0.97 * rnd, 1.05 * best_pdr, best_pdr, 0.9 * min_sw);

    match phase {
        "gate" => {
            for seed in [1u64, 2, 3] {
                let t0 = Instant::now();
                let setup = TrainSetup {
                    source: InstanceSource::Generator(GeneratorConfig::for_size(10, 5, 0)),
                    sim,
                    graph: GraphConfig::default(),
                    net: NetConfig { embed_dim: 8, hidden_dim: 64, gnn_layers: 2, seed, ..Default::default() },
                    ppo: PpoConfig { max_iterations: 200, validation_count: 50, seed, ..Default::default() },
                };
                let result = train(&setup, None, false, &mut MemorySink::default()).unwrap();
                let (gmk, gsw) = greedy_mean(&result.best, &set, &sim);
                let (smk, ssw) = sampling_mean(&result.best, &set, &sim, 100);
                println!(
                    "seed {seed}: greedy {gmk:.2}/{gsw:.2} sampling100 {smk:.2}/{ssw:.2} [{:.0?}] a={} b={} b2={} c={}",
                    t0.elapsed(),
                    gmk <= 0.97 * rnd,
                    gmk <= 1.05 * best_pdr,
                    smk <= best_pdr,
                    gsw <= 0.9 * min_sw,
                );
            }
        }
        "ablate" => {
            let budget: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(80);
            let modes = [
                ConnectivityMode::SortOnlyWeighted,
                ConnectivityMode::Base,
                ConnectivityMode::AllOps,
            ];
            let mut means = vec![0.0; 3];
            for (mi, mode) in modes.iter().enumerate() {
                for seed in [21u64, 22, 23] {
                    let t0 = Instant::now();
                    let setup = TrainSetup {
                        source: InstanceSource::Generator(GeneratorConfig::for_size(10, 5, 0)),
                        sim,
                        graph: GraphConfig { mode: *mode, ..Default::default() },
                        net: NetConfig { embed_dim: 8, hidden_dim: 64, gnn_layers: 2, seed, ..Default::default() },
                        ppo: PpoConfig { max_iterations: budget, validation_count: 30, seed, ..Default::default() },
                    };
                    let result = train(&setup, None, false, &mut MemorySink::default()).unwrap();
                    let (gmk, gsw) = greedy_mean(&result.best, &set, &sim);
                    means[mi] += gmk / 3.0;
                    println!("mode {} seed {seed}: greedy {gmk:.2}/{gsw:.2} [{:.0?}]", mode.name(), t0.elapsed());
                }
            }
            println!(
                "means: weighted {:.2} base {:.2} all_ops {:.2} | ordering holds: {}",
                means[0], means[1], means[2],
                means[0] <= means[1] && means[0] <= means[2]
            );
        }
        other => eprintln!("unknown phase {other}"),
    }
}
