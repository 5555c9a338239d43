//! File formats, benchmark harness, Gantt export, and training orchestration
//! around the `kitshop-core` scheduling engine.

pub mod bench;
pub mod formats;
pub mod gantt;
pub mod trainer;

use std::sync::Arc;

use kitshop_core::instance::{generate_instance, GeneratorConfig, Instance};
use kitshop_core::rng;

/// Stream tag for benchmark test sets, distinct from the training and
/// validation streams so evaluating a model on its training seed never
/// reuses instances it validated on.
pub const TEST_SET_ROUND: u64 = 0xBE;

/// A seeded held-out test set for one generator configuration.
pub fn make_test_set(
    gen: &GeneratorConfig,
    seed: u64,
    count: usize,
) -> Result<Vec<Arc<Instance>>, kitshop_core::instance::GeneratorError> {
    (0..count)
        .map(|i| {
            let cfg = GeneratorConfig {
                seed: rng::derive_seed(seed, rng::DOMAIN_EVAL_SET, TEST_SET_ROUND, i as u64),
                ..gen.clone()
            };
            generate_instance(&cfg).map(Arc::new)
        })
        .collect()
}

/// Parses a `JOBSxMACHINES` size such as `10x5`.
pub fn parse_size(spec: &str) -> Result<(usize, usize), String> {
    let (jobs, machines) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("invalid size {spec:?}, expected JOBSxMACHINES like 10x5"))?;
    let jobs = jobs.trim().parse().map_err(|_| format!("invalid job count in {spec:?}"))?;
    let machines =
        machines.trim().parse().map_err(|_| format!("invalid machine count in {spec:?}"))?;
    Ok((jobs, machines))
}
