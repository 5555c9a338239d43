//! Heterogeneous graph snapshot of a simulator state.
//!
//! Three node types: one node per operation, one per machine, and a single
//! buffer node. Operation nodes chain along their job; unscheduled operations
//! connect to their compatible machines (scheduled ones drop those edges);
//! and, depending on the connectivity mode, the buffer node sends weighted
//! edges to operation nodes so pallet pressure can propagate into the
//! embeddings. The graph is rebuilt from scratch each step and is a pure
//! function of the state.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::env::{ScheduleState, Simulator};

/// How the buffer node connects to operation nodes.
///
/// The `SortOnly*` variants touch part-sorting operations exclusively;
/// `Weighted` scales each edge by the estimated switch cost of the target
/// (cost-avoiding), `Inverse` by its negation (benefit-seeking), and the
/// plain variants broadcast uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConnectivityMode {
    Base,
    AllOps,
    SortOnly,
    SortOnlyWeighted,
    SortOnlyInverse,
}

impl ConnectivityMode {
    pub const ALL: [ConnectivityMode; 5] = [
        ConnectivityMode::Base,
        ConnectivityMode::AllOps,
        ConnectivityMode::SortOnly,
        ConnectivityMode::SortOnlyWeighted,
        ConnectivityMode::SortOnlyInverse,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ConnectivityMode::Base => "base",
            ConnectivityMode::AllOps => "all_ops",
            ConnectivityMode::SortOnly => "sort_only",
            ConnectivityMode::SortOnlyWeighted => "sort_only_weighted",
            ConnectivityMode::SortOnlyInverse => "sort_only_inverse",
        }
    }
}

/// Which of the kitting-related operation features are included. The six
/// scheduling features are always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Part-category multi-hot of the operation's job.
    pub include_type: bool,
    /// Part-sorting indicator.
    pub include_ps: bool,
    /// Estimated pallet switches of the job's kitting under the current
    /// buffer.
    pub include_swest: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { include_type: true, include_ps: true, include_swest: true }
    }
}

impl FeatureConfig {
    pub fn op_feature_dim(&self, category_count: usize) -> usize {
        6 + if self.include_type { category_count } else { 0 }
            + usize::from(self.include_ps)
            + usize::from(self.include_swest)
    }
}

/// Graph construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    pub mode: ConnectivityMode,
    /// Scaling factor of the switch-estimate edge weight.
    pub alpha: f64,
    pub features: FeatureConfig,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            mode: ConnectivityMode::SortOnlyWeighted,
            alpha: 0.3,
            features: FeatureConfig::default(),
        }
    }
}

pub const MACHINE_FEATURE_DIM: usize = 4;

/// Typed nodes with feature vectors and typed edges; one snapshot per epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroGraph {
    /// Per operation: `[scheduled, |M|, mean duration, remaining ops in job,
    /// completion estimate, remaining job work]` then the configured extras
    /// (type multi-hot, part-sorting flag, switch estimate). Time-valued
    /// entries are divided by the instance time scale.
    pub op_features: Vec<Vec<f64>>,
    /// Per machine: `[free_at, candidate ops, utilization, part-sorting]`.
    pub machine_features: Vec<Vec<f64>>,
    /// Category multi-hot of loaded pallets plus occupancy rate.
    pub buffer_features: Vec<f64>,
    /// Previous operation in the same job, if any.
    pub op_pred: Vec<Option<usize>>,
    /// Next operation in the same job, if any.
    pub op_succ: Vec<Option<usize>>,
    /// Compatible machines per unscheduled operation; empty once scheduled.
    pub op_machines: Vec<Vec<usize>>,
    /// Unscheduled compatible operations per machine.
    pub machine_ops: Vec<Vec<usize>>,
    /// Weighted buffer-to-operation edges, sorted by operation id.
    pub buffer_edges: Vec<(usize, f64)>,
    pub op_scheduled: Vec<bool>,
    /// Switch estimate per operation (0 for non-part-sorting and scheduled
    /// operations); mirrored into the features when enabled.
    pub switch_estimates: Vec<f64>,
}

impl HeteroGraph {
    pub fn op_count(&self) -> usize {
        self.op_features.len()
    }

    pub fn machine_count(&self) -> usize {
        self.machine_features.len()
    }

    pub fn op_feature_dim(&self) -> usize {
        self.op_features.first().map_or(0, Vec::len)
    }

    pub fn buffer_feature_dim(&self) -> usize {
        self.buffer_features.len()
    }

    pub fn buffer_weight(&self, op: usize) -> Option<f64> {
        self.buffer_edges
            .binary_search_by_key(&op, |&(o, _)| o)
            .ok()
            .map(|i| self.buffer_edges[i].1)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Weight of a buffer edge toward an operation whose kitting is estimated to
/// cost `sw_est` switches: `sigmoid(alpha * sw_est)`, strictly increasing in
/// the estimate and 0.5 at zero cost.
pub fn buffer_edge_weight(sw_est: f64, alpha: f64) -> f64 {
    sigmoid(alpha * sw_est)
}

/// Builds the graph for `state`. Pure: equal states yield equal graphs.
pub fn build_graph(sim: &Simulator<'_>, state: &ScheduleState, cfg: &GraphConfig) -> HeteroGraph {
    let inst = sim.instance();
    let total_ops = sim.total_operations();
    let categories = inst.category_count;
    let scale = sim.time_scale();
    let estimates = sim.completion_estimates(state);

    let mut op_features = Vec::with_capacity(total_ops);
    let mut op_pred = Vec::with_capacity(total_ops);
    let mut op_succ = Vec::with_capacity(total_ops);
    let mut op_machines = vec![Vec::new(); total_ops];
    let mut machine_ops = vec![Vec::new(); inst.machine_count];
    let mut op_scheduled = Vec::with_capacity(total_ops);
    let mut switch_estimates = vec![0.0; total_ops];

    for flat in 0..total_ops {
        let job = sim.op_job(flat);
        let index = sim.op_index_in_job(flat);
        let op = sim.op(flat);
        let scheduled = state.op_status[flat].is_scheduled();

        op_pred.push((index > 0).then(|| flat - 1));
        op_succ.push((index + 1 < inst.jobs[job].operations.len()).then(|| flat + 1));
        op_scheduled.push(scheduled);
        if !scheduled {
            for &(m, _) in &op.compatible {
                op_machines[flat].push(m);
                machine_ops[m].push(flat);
            }
        }

        if op.part_sorting && !scheduled {
            let sw = state
                .buffer
                .estimate_switches(&inst.jobs[job].parts)
                .expect("validated instance parts fit the buffer");
            switch_estimates[flat] = sw as f64;
        }

        let mut feats = Vec::with_capacity(cfg.features.op_feature_dim(categories));
        feats.push(if scheduled { 1.0 } else { 0.0 });
        feats.push(op.compatible.len() as f64);
        feats.push(sim.mean_time(flat) / scale);
        feats.push(sim.remaining_ops(state, job) as f64);
        feats.push(estimates[flat] / scale);
        feats.push(sim.remaining_work(state, job) / scale);
        if cfg.features.include_type {
            let mut one_hot = vec![0.0; categories];
            for c in inst.jobs[job].categories() {
                one_hot[c] = 1.0;
            }
            feats.extend(one_hot);
        }
        if cfg.features.include_ps {
            feats.push(if op.part_sorting { 1.0 } else { 0.0 });
        }
        if cfg.features.include_swest {
            feats.push(switch_estimates[flat]);
        }
        op_features.push(feats);
    }

    let mut machine_features = Vec::with_capacity(inst.machine_count);
    #[allow(clippy::needless_range_loop)]
    for m in 0..inst.machine_count {
        let busy: u64 = state
            .op_status
            .iter()
            .filter_map(|s| match *s {
                crate::env::OpStatus::Scheduled { machine, start, end } if machine == m => {
                    Some(end.min(state.now).saturating_sub(start))
                }
                _ => None,
            })
            .sum();
        machine_features.push(vec![
            state.machine_free_at[m] as f64 / scale,
            machine_ops[m].len() as f64,
            busy as f64 / (state.now.max(1) as f64),
            if inst.is_part_sorting_machine(m) { 1.0 } else { 0.0 },
        ]);
    }

    let mut buffer_features = vec![0.0; categories + 1];
    for pallet in &state.buffer.pallets {
        if let Some(c) = pallet.category {
            buffer_features[c] = 1.0;
        }
    }
    buffer_features[categories] =
        state.buffer.occupied() as f64 / state.buffer.pallet_count() as f64;

    let mut buffer_edges = Vec::new();
    for flat in 0..total_ops {
        if op_scheduled[flat] {
            continue;
        }
        let part_sorting = sim.op(flat).part_sorting;
        let weight = match cfg.mode {
            ConnectivityMode::Base => continue,
            ConnectivityMode::AllOps => 1.0,
            ConnectivityMode::SortOnly if part_sorting => 1.0,
            ConnectivityMode::SortOnlyWeighted if part_sorting => {
                buffer_edge_weight(switch_estimates[flat], cfg.alpha)
            }
            ConnectivityMode::SortOnlyInverse if part_sorting => {
                buffer_edge_weight(switch_estimates[flat], -cfg.alpha)
            }
            _ => continue,
        };
        buffer_edges.push((flat, weight));
    }

    HeteroGraph {
        op_features,
        machine_features,
        buffer_features,
        op_pred,
        op_succ,
        op_machines,
        machine_ops,
        buffer_edges,
        op_scheduled,
        switch_estimates,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Action, SimConfig};
    use crate::instance::{generate_instance, GeneratorConfig};
    use rand::Rng;

    fn setup(seed: u64) -> crate::instance::Instance {
        generate_instance(&GeneratorConfig::for_size(4, 3, seed)).unwrap()
    }

    #[test]
    fn weight_law_matches_the_closed_form() {
        assert_eq!(buffer_edge_weight(0.0, 0.3), 0.5);
        // sigmoid(1.5) evaluated independently.
        let expect = 1.0 / (1.0 + (-1.5_f64).exp());
        assert!((buffer_edge_weight(5.0, 0.3) - expect).abs() < 1e-12);
        assert!((expect - 0.81757).abs() < 1e-5);
        for s in 0..10 {
            assert!(buffer_edge_weight(s as f64, 0.3) < buffer_edge_weight((s + 1) as f64, 0.3));
        }
        assert!(buffer_edge_weight(1.0, 0.3) < buffer_edge_weight(4.0, 0.3));
    }

    #[test]
    fn inverse_mode_mirrors_the_weight_around_half() {
        for s in 0..=10 {
            let w = buffer_edge_weight(s as f64, 0.3);
            let inv = buffer_edge_weight(s as f64, -0.3);
            assert!((w + inv - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn reset_graph_has_cold_buffer_and_one_edge_per_sorting_op() {
        let inst = setup(5);
        let sim = Simulator::new(&inst, SimConfig::default()).unwrap();
        let state = sim.reset();
        let graph = build_graph(&sim, &state, &GraphConfig::default());

        assert_eq!(graph.op_count(), inst.total_operations());
        assert_eq!(graph.machine_count(), inst.machine_count);
        let occupancy = graph.buffer_features[inst.category_count];
        assert_eq!(occupancy, 0.0);
        let sorting_ops = (0..sim.total_operations())
            .filter(|&o| sim.op(o).part_sorting)
            .count();
        assert_eq!(graph.buffer_edges.len(), sorting_ops);
        // Every job fits the empty pallet pool, so all estimates are zero and
        // all weights sit at sigmoid(0).
        for &(op, w) in &graph.buffer_edges {
            assert_eq!(graph.switch_estimates[op], 0.0);
            assert_eq!(w, 0.5);
        }
    }

    #[test]
    fn modes_differ_only_in_buffer_edges() {
        let inst = setup(6);
        let sim = Simulator::new(&inst, SimConfig::default()).unwrap();
        let state = sim.reset();
        let base = build_graph(&sim, &state, &GraphConfig { mode: ConnectivityMode::Base, ..Default::default() });
        let sort = build_graph(&sim, &state, &GraphConfig { mode: ConnectivityMode::SortOnly, ..Default::default() });
        let all = build_graph(&sim, &state, &GraphConfig { mode: ConnectivityMode::AllOps, ..Default::default() });

        assert!(base.buffer_edges.is_empty());
        assert_eq!(base.op_features, sort.op_features);
        assert_eq!(base.machine_features, sort.machine_features);
        assert_eq!(base.buffer_features, sort.buffer_features);
        assert!(sort.buffer_edges.iter().all(|&(_, w)| w == 1.0));
        assert!(sort.buffer_edges.iter().all(|&(o, _)| sim.op(o).part_sorting));
        let unscheduled = sim.total_operations();
        assert_eq!(all.buffer_edges.len(), unscheduled);
    }

    #[test]
    fn rebuild_is_pure_and_tracks_the_estimator() {
        let inst = setup(7);
        let sim = Simulator::new(&inst, SimConfig::default()).unwrap();
        let cfg = GraphConfig::default();
        let mut rng = crate::rng::stream(1, crate::rng::DOMAIN_ROLLOUT, 2, 0);
        let mut state = sim.reset();
        while !sim.done(&state) {
            let g1 = build_graph(&sim, &state, &cfg);
            let g2 = build_graph(&sim, &state, &cfg);
            assert_eq!(g1, g2);

            for flat in 0..sim.total_operations() {
                let op = sim.op(flat);
                let dim = g1.op_features[flat].len();
                assert_eq!(dim, cfg.features.op_feature_dim(inst.category_count));
                let ps_flag = g1.op_features[flat][dim - 2];
                let sw = g1.op_features[flat][dim - 1];
                if ps_flag == 0.0 {
                    assert_eq!(sw, 0.0, "sw_est must be zero on non-sorting ops");
                }
                if !state.op_status[flat].is_scheduled() && op.part_sorting {
                    let expect = state
                        .buffer
                        .estimate_switches(&inst.jobs[sim.op_job(flat)].parts)
                        .unwrap() as f64;
                    assert_eq!(sw, expect);
                    assert_eq!(
                        g1.buffer_weight(flat).unwrap(),
                        buffer_edge_weight(expect, cfg.alpha)
                    );
                } else {
                    assert!(g1.buffer_weight(flat).is_none());
                }
            }
            let actions = sim.eligible_actions(&state);
            let a: Action = actions[rng.gen_range(0..actions.len())];
            state = sim.step(&state, a).unwrap().state;
        }
        // Terminal graph: no machine edges, no buffer edges anywhere.
        let g = build_graph(&sim, &state, &cfg);
        assert!(g.op_machines.iter().all(Vec::is_empty));
        assert!(g.buffer_edges.is_empty());
        assert!(g.op_scheduled.iter().all(|&s| s));
    }

    #[test]
    fn feature_subsets_shrink_the_vector() {
        let inst = setup(8);
        let sim = Simulator::new(&inst, SimConfig::default()).unwrap();
        let features = FeatureConfig { include_type: false, include_ps: true, include_swest: false };
        let cfg = GraphConfig { features, ..Default::default() };
        let graph = build_graph(&sim, &sim.reset(), &cfg);
        assert_eq!(graph.op_feature_dim(), 7);

        // After a kitting step the buffer multi-hot flags exactly the loaded
        // pallets.
        let mut state = sim.reset();
        loop {
            let actions = sim.eligible_actions(&state);
            if let Some(&a) = actions.iter().find(|a| sim.op(a.op).part_sorting) {
                state = sim.step(&state, a).unwrap().state;
                break;
            }
            state = sim.step(&state, actions[0]).unwrap().state;
        }
        let graph = build_graph(&sim, &state, &cfg);
        let ones = graph.buffer_features[..inst.category_count]
            .iter()
            .filter(|&&x| x == 1.0)
            .count();
        assert_eq!(ones, state.buffer.occupied());
        let occ = graph.buffer_features[inst.category_count];
        assert!(occ > 0.0 && occ <= 1.0);
    }
}
