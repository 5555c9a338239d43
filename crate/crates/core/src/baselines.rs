//! Dispatching-rule baselines, a random policy, and an exact solver for
//! small instances.
//!
//! All baselines run through the same simulator as the learned policy, so
//! their traces satisfy the same invariants and their switch counts come
//! from the same kitting model. The exact solver is a depth-first branch
//! and bound over decision epochs; its optimum is relative to the
//! environment's epoch and eviction semantics.

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EnvError, EpisodeTrace, ScheduleState, Simulator};

/// Operation sequencing rules. Machine assignment is always earliest end
/// time (EET). "Work" is the sum of mean durations of a job's unscheduled
/// operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    /// Earliest ready time first.
    Fifo,
    /// Most operations remaining.
    Mor,
    /// Shortest mean processing time.
    Spt,
    /// Most work remaining.
    Mwr,
    /// Least work remaining.
    Lwr,
}

impl Rule {
    pub const ALL: [Rule; 5] = [Rule::Fifo, Rule::Mor, Rule::Spt, Rule::Mwr, Rule::Lwr];

    pub fn name(&self) -> &'static str {
        match self {
            Rule::Fifo => "fifo",
            Rule::Mor => "mor",
            Rule::Spt => "spt",
            Rule::Mwr => "mwr",
            Rule::Lwr => "lwr",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// End time of `action` if executed at the current epoch. Kitting duration
/// is machine-independent, so for part-sorting operations EET reduces to the
/// lowest machine id tie-break (plus the machine time in additive mode).
fn end_time(sim: &Simulator<'_>, state: &ScheduleState, action: Action) -> u64 {
    let op = sim.op(action.op);
    let duration = if op.part_sorting {
        let parts = &sim.instance().jobs[sim.op_job(action.op)].parts;
        let kitting = state
            .buffer
            .estimate_switches(parts)
            .expect("validated parts")
            * sim.instance().switch_time
            + sim.instance().jobs[sim.op_job(action.op)].total_parts()
                * sim.instance().place_time;
        if sim.config().kitting_additive {
            kitting + op.time_on(action.machine).expect("compatible")
        } else {
            kitting
        }
    } else {
        op.time_on(action.machine).expect("compatible")
    };
    state.now + duration
}

/// Picks the rule's operation among the candidates, then the EET machine.
/// Ties break toward the lowest job id, then the lowest machine id, which
/// the eligible-action ordering provides.
fn choose_by_rule(sim: &Simulator<'_>, state: &ScheduleState, actions: &[Action], rule: Rule) -> usize {
    debug_assert!(!actions.is_empty());
    // One candidate operation per job; actions are grouped by op.
    let mut best_op: Option<(usize, f64)> = None;
    for action in actions {
        let op = action.op;
        if best_op.is_some_and(|(o, _)| o == op) {
            continue;
        }
        let job = sim.op_job(op);
        let key = match rule {
            Rule::Fifo => sim.job_ready_at(state, job) as f64,
            Rule::Mor => -(sim.remaining_ops(state, job) as f64),
            Rule::Spt => sim.mean_time(op),
            Rule::Mwr => -sim.remaining_work(state, job),
            Rule::Lwr => sim.remaining_work(state, job),
        };
        match best_op {
            Some((_, best_key)) if key >= best_key => {}
            _ => best_op = Some((op, key)),
        }
    }
    let chosen_op = best_op.expect("non-empty actions").0;
    let mut best_idx = usize::MAX;
    let mut best_end = u64::MAX;
    for (i, action) in actions.iter().enumerate() {
        if action.op != chosen_op {
            continue;
        }
        let end = end_time(sim, state, *action);
        if end < best_end {
            best_end = end;
            best_idx = i;
        }
    }
    best_idx
}

/// Runs a full episode under one dispatching rule. Deterministic.
pub fn pdr_schedule(sim: &Simulator<'_>, rule: Rule) -> Result<EpisodeTrace, EnvError> {
    sim.run_policy(|state, actions| choose_by_rule(sim, state, actions, rule))
}

/// Uniform random choice over the eligible pairs, deterministic in the seed.
pub fn random_policy(sim: &Simulator<'_>, seed: u64) -> Result<EpisodeTrace, EnvError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sim.run_policy(|_, actions| rng.gen_range(0..actions.len()))
}

/// Outcome of the exact search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub makespan: u64,
    /// True iff the search space was exhausted within the limits, making
    /// `makespan` optimal under the environment's semantics.
    pub optimal: bool,
    pub nodes_explored: u64,
    pub best_schedule: EpisodeTrace,
}

struct SearchCtx<'s, 'a, F: FnMut() -> bool> {
    sim: &'s Simulator<'a>,
    node_limit: u64,
    nodes: u64,
    exhausted: bool,
    incumbent: u64,
    best_actions: Vec<Action>,
    should_stop: F,
}

impl<F: FnMut() -> bool> SearchCtx<'_, '_, F> {
    fn dfs(&mut self, state: &ScheduleState, path: &mut Vec<Action>) {
        if self.sim.done(state) {
            if state.max_end < self.incumbent {
                self.incumbent = state.max_end;
                self.best_actions = path.clone();
            }
            return;
        }
        for action in self.sim.eligible_actions(state) {
            if self.nodes >= self.node_limit
                || (self.nodes.is_multiple_of(1024) && (self.should_stop)())
            {
                self.exhausted = false;
                return;
            }
            self.nodes += 1;
            let next = self
                .sim
                .step(state, action)
                .expect("eligible actions step cleanly")
                .state;
            if self.sim.admissible_completion_bound(&next) >= self.incumbent {
                continue;
            }
            path.push(action);
            self.dfs(&next, path);
            path.pop();
            if !self.exhausted {
                return;
            }
        }
    }
}

/// Depth-first branch and bound over decision epochs. Each node schedules
/// one eligible pair; subtrees whose admissible completion bound cannot beat
/// the incumbent are pruned. Seeded with the best dispatching-rule schedule
/// so pruning starts tight. `should_stop` is polled during the search (wall
/// clocks live outside this crate).
pub fn branch_and_bound(
    sim: &Simulator<'_>,
    node_limit: u64,
    mut should_stop: impl FnMut() -> bool,
) -> Result<OracleResult, EnvError> {
    let mut incumbent_trace: Option<EpisodeTrace> = None;
    for rule in Rule::ALL {
        let trace = pdr_schedule(sim, rule)?;
        if incumbent_trace.as_ref().is_none_or(|t| trace.makespan < t.makespan) {
            incumbent_trace = Some(trace);
        }
    }
    let incumbent_trace = incumbent_trace.expect("at least one rule");

    let mut ctx = SearchCtx {
        sim,
        node_limit,
        nodes: 0,
        exhausted: true,
        incumbent: incumbent_trace.makespan,
        best_actions: Vec::new(),
        should_stop: &mut should_stop,
    };
    let root = sim.reset();
    let mut path = Vec::new();
    ctx.dfs(&root, &mut path);

    let best_schedule = if ctx.best_actions.is_empty() {
        incumbent_trace
    } else {
        let mut it = ctx.best_actions.iter();
        sim.run_policy(|_, actions| {
            let action = it.next().expect("replay length matches");
            actions.iter().position(|a| a == action).expect("replay stays eligible")
        })?
    };
    debug_assert_eq!(best_schedule.makespan, ctx.incumbent);
    Ok(OracleResult {
        makespan: ctx.incumbent,
        optimal: ctx.exhausted,
        nodes_explored: ctx.nodes,
        best_schedule,
    })
}

/// Minimum makespan by plain exhaustive enumeration of every action
/// sequence, with no bounding at all. Exponential; the independent reference
/// the branch-and-bound is checked against on tiny instances.
pub fn exhaustive_minimum(sim: &Simulator<'_>) -> Result<u64, EnvError> {
    fn walk(sim: &Simulator<'_>, state: &ScheduleState, best: &mut u64) -> Result<(), EnvError> {
        if sim.done(state) {
            *best = (*best).min(state.max_end);
            return Ok(());
        }
        for action in sim.eligible_actions(state) {
            let next = sim.step(state, action)?.state;
            walk(sim, &next, best)?;
        }
        Ok(())
    }
    let mut best = u64::MAX;
    walk(sim, &sim.reset(), &mut best)?;
    Ok(best)
}
