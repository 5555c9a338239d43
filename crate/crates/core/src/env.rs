//! The scheduling MDP: decision epochs, eligible operation-machine actions,
//! transitions through the pallet-change module, and the dual-objective
//! reward.
//!
//! A [`Simulator`] wraps one immutable [`Instance`]; states are values, so a
//! state can be cloned and stepped along different branches (the exact solver
//! relies on that) and independent episodes can run in parallel without any
//! shared mutation.
//!
//! Each step schedules exactly one operation. Part-sorting operations run the
//! kitting state machine, which determines their duration and pallet switch
//! count; all other operations take their machine-dependent processing time.
//! After a step, the clock jumps to the next instant with at least one
//! eligible action. The reward is the drop in the makespan estimate plus
//! `lambda` times the drop in cumulative pallet switches, so rewards
//! telescope over an episode to
//! `initial estimate - final makespan - lambda * total switches`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::buffer::{BufferError, BufferState, EvictionContext, EvictionPolicy, KitEvent};
use crate::instance::{Instance, Operation, Violation};

/// Environment knobs that are not part of the instance data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Weight linking pallet switches to the makespan objective in the reward.
    pub lambda: f64,
    pub eviction: EvictionPolicy,
    /// When false (default), the kitting duration replaces the machine
    /// processing time of a part-sorting operation. When true, it is added
    /// on top of it.
    pub kitting_additive: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            lambda: 1.0,
            eviction: EvictionPolicy::default(),
            kitting_additive: false,
        }
    }
}

/// Status of one operation in a partial schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OpStatus {
    Unscheduled,
    Scheduled { machine: usize, start: u64, end: u64 },
}

impl OpStatus {
    pub fn is_scheduled(&self) -> bool {
        matches!(self, OpStatus::Scheduled { .. })
    }

    pub fn end(&self) -> Option<u64> {
        match *self {
            OpStatus::Scheduled { end, .. } => Some(end),
            OpStatus::Unscheduled => None,
        }
    }
}

/// A compound decision: run operation `op` (flat id) on `machine`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub op: usize,
    pub machine: usize,
}

/// A partial schedule. Pure value; cloning is cheap enough to branch on.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleState {
    pub op_status: Vec<OpStatus>,
    pub machine_free_at: Vec<u64>,
    /// Current decision time. Never decreases.
    pub now: u64,
    pub buffer: BufferState,
    /// Makespan estimate of this state; equals the true makespan when done.
    pub est_cmax: f64,
    /// Mirrors `buffer.total_switches`.
    pub switches_so_far: u64,
    pub scheduled_count: usize,
    /// Latest end among scheduled operations.
    pub max_end: u64,
    /// Per job: index of the next unscheduled operation (== chain length when
    /// the job is finished).
    job_next: Vec<usize>,
    /// Per job: completion time of the last scheduled operation.
    job_ready: Vec<u64>,
}

/// Outcome of one [`Simulator::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: ScheduleState,
    pub reward: f64,
    pub done: bool,
    /// Pallet switches caused by this step.
    pub switches: u64,
    pub start: u64,
    pub end: u64,
    pub kit_events: Vec<KitEvent>,
    /// The realized makespan, present exactly when `done`.
    pub makespan: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnvError {
    InvalidInstance(Vec<Violation>),
    /// The action does not satisfy the eligibility contract at this state.
    IneligibleAction { action: Action },
    Buffer(BufferError),
}

impl fmt::Display for EnvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvError::InvalidInstance(v) => {
                write!(f, "invalid instance ({} violations", v.len())?;
                if let Some(first) = v.first() {
                    write!(f, "; first: {first}")?;
                }
                write!(f, ")")
            }
            EnvError::IneligibleAction { action } => write!(
                f,
                "action (op {}, machine {}) is not eligible",
                action.op, action.machine
            ),
            EnvError::Buffer(e) => write!(f, "kitting failed: {e}"),
        }
    }
}

impl core::error::Error for EnvError {}

impl From<BufferError> for EnvError {
    fn from(e: BufferError) -> Self {
        EnvError::Buffer(e)
    }
}

/// One scheduled operation in an episode record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub job: usize,
    pub op_index: usize,
    pub machine: usize,
    pub start: u64,
    pub end: u64,
    pub part_sorting: bool,
    pub switches: u64,
    pub reward: f64,
    pub kit_events: Vec<KitEvent>,
}

/// A complete episode: the action sequence with its realized schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub makespan: u64,
    pub total_switches: u64,
    /// Makespan estimate of the initial state.
    pub initial_estimate: f64,
    pub total_reward: f64,
}

/// The immutable half of the environment: instance plus derived tables.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    inst: &'a Instance,
    cfg: SimConfig,
    op_job: Vec<usize>,
    op_index: Vec<usize>,
    job_first_op: Vec<usize>,
    /// Expected duration per op: mean processing time over compatible
    /// machines; part-sorting ops use their placement workload instead (plus
    /// the mean in additive mode).
    mean_time: Vec<f64>,
    /// Smallest possible duration per op; admissible for search bounds.
    min_time: Vec<u64>,
    max_mean_time: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(inst: &'a Instance, cfg: SimConfig) -> Result<Self, EnvError> {
        let violations = inst.validate();
        if !violations.is_empty() {
            return Err(EnvError::InvalidInstance(violations));
        }
        let total = inst.total_operations();
        let mut op_job = Vec::with_capacity(total);
        let mut op_index = Vec::with_capacity(total);
        let mut job_first_op = Vec::with_capacity(inst.jobs.len());
        let mut mean_time = Vec::with_capacity(total);
        let mut min_time = Vec::with_capacity(total);
        for (j, job) in inst.jobs.iter().enumerate() {
            job_first_op.push(op_job.len());
            let placement = job.total_parts() * inst.place_time;
            for (i, op) in job.operations.iter().enumerate() {
                op_job.push(j);
                op_index.push(i);
                let (mean, min) = if op.part_sorting {
                    if cfg.kitting_additive {
                        (placement as f64 + op.mean_processing_time(), placement + op.min_processing_time())
                    } else {
                        (placement as f64, placement)
                    }
                } else {
                    (op.mean_processing_time(), op.min_processing_time())
                };
                mean_time.push(mean);
                min_time.push(min);
            }
        }
        let max_mean_time = mean_time.iter().cloned().fold(1.0_f64, f64::max);
        Ok(Simulator {
            inst,
            cfg,
            op_job,
            op_index,
            job_first_op,
            mean_time,
            min_time,
            max_mean_time,
        })
    }

    pub fn instance(&self) -> &'a Instance {
        self.inst
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn total_operations(&self) -> usize {
        self.op_job.len()
    }

    pub fn op(&self, flat: usize) -> &'a Operation {
        &self.inst.jobs[self.op_job[flat]].operations[self.op_index[flat]]
    }

    pub fn op_job(&self, flat: usize) -> usize {
        self.op_job[flat]
    }

    pub fn op_index_in_job(&self, flat: usize) -> usize {
        self.op_index[flat]
    }

    pub fn flat_op(&self, job: usize, index: usize) -> usize {
        self.job_first_op[job] + index
    }

    /// Expected duration of an operation (see field docs).
    pub fn mean_time(&self, flat: usize) -> f64 {
        self.mean_time[flat]
    }

    /// Largest per-op mean duration; time-valued graph features are divided
    /// by this for scale stability.
    pub fn time_scale(&self) -> f64 {
        self.max_mean_time
    }

    pub fn reset(&self) -> ScheduleState {
        let mut state = ScheduleState {
            op_status: vec![OpStatus::Unscheduled; self.total_operations()],
            machine_free_at: vec![0; self.inst.machine_count],
            now: 0,
            buffer: BufferState::new(self.inst.pallet_count, self.inst.category_count),
            est_cmax: 0.0,
            switches_so_far: 0,
            scheduled_count: 0,
            max_end: 0,
            job_next: vec![0; self.inst.jobs.len()],
            job_ready: vec![0; self.inst.jobs.len()],
        };
        state.est_cmax = self.makespan_lower_bound(&state);
        state
    }

    pub fn done(&self, state: &ScheduleState) -> bool {
        state.scheduled_count == self.total_operations()
    }

    pub fn makespan(&self, state: &ScheduleState) -> Option<u64> {
        self.done(state).then_some(state.max_end)
    }

    /// All actions eligible at the current epoch, ordered by job id and then
    /// machine id. Empty only when the state is terminal.
    pub fn eligible_actions(&self, state: &ScheduleState) -> Vec<Action> {
        let mut out = Vec::new();
        for (job, &next) in state.job_next.iter().enumerate() {
            if next >= self.inst.jobs[job].operations.len() {
                continue;
            }
            if state.job_ready[job] > state.now {
                continue;
            }
            let flat = self.job_first_op[job] + next;
            for &(machine, _) in &self.op(flat).compatible {
                if state.machine_free_at[machine] <= state.now {
                    out.push(Action { op: flat, machine });
                }
            }
        }
        out
    }

    fn is_eligible(&self, state: &ScheduleState, action: Action) -> bool {
        if action.op >= self.total_operations() {
            return false;
        }
        let job = self.op_job[action.op];
        let index = self.op_index[action.op];
        state.job_next[job] == index
            && state.job_ready[job] <= state.now
            && state.machine_free_at[action.machine] <= state.now
            && self.op(action.op).time_on(action.machine).is_some()
    }

    /// Parts per category still waiting to be kitted: the part multisets of
    /// every unscheduled part-sorting operation's job, excluding the
    /// operation being executed right now.
    pub fn remaining_demand(&self, state: &ScheduleState, exclude_op: Option<usize>) -> Vec<u64> {
        let mut demand = vec![0u64; self.inst.category_count];
        for (flat, status) in state.op_status.iter().enumerate() {
            if status.is_scheduled() || Some(flat) == exclude_op || !self.op(flat).part_sorting {
                continue;
            }
            for &(c, n) in &self.inst.jobs[self.op_job[flat]].parts {
                demand[c] += n as u64;
            }
        }
        demand
    }

    /// Schedules `action`'s operation on its machine at the current epoch and
    /// advances the clock to the next epoch with an eligible action.
    pub fn step(&self, state: &ScheduleState, action: Action) -> Result<StepResult, EnvError> {
        if !self.is_eligible(state, action) {
            return Err(EnvError::IneligibleAction { action });
        }
        let job = self.op_job[action.op];
        let op = self.op(action.op);

        let mut next = state.clone();
        let (duration, switches, kit_events) = if op.part_sorting {
            let demand = self.remaining_demand(state, Some(action.op));
            let ctx = EvictionContext {
                policy: self.cfg.eviction,
                remaining_demand: &demand,
                protected: &[],
            };
            let out = state.buffer.apply_kitting(
                &self.inst.jobs[job].parts,
                self.inst.place_time,
                self.inst.switch_time,
                &ctx,
            )?;
            let mut duration = out.duration;
            if self.cfg.kitting_additive {
                duration += op.time_on(action.machine).expect("compatibility checked");
            }
            next.buffer = out.state;
            (duration, out.switches, out.events)
        } else {
            let p = op.time_on(action.machine).expect("compatibility checked");
            (p, 0, Vec::new())
        };

        let start = state
            .now
            .max(state.job_ready[job])
            .max(state.machine_free_at[action.machine]);
        let end = start + duration;

        next.op_status[action.op] = OpStatus::Scheduled { machine: action.machine, start, end };
        next.machine_free_at[action.machine] = end;
        next.job_next[job] += 1;
        next.job_ready[job] = end;
        next.scheduled_count += 1;
        next.max_end = next.max_end.max(end);
        next.switches_so_far = next.buffer.total_switches;

        let done = self.done(&next);
        if done {
            next.now = next.max_end;
        } else {
            next.now = self.next_epoch(&next);
        }
        next.est_cmax = self.makespan_lower_bound(&next);

        let reward = (state.est_cmax - next.est_cmax)
            + self.cfg.lambda * (state.switches_so_far as f64 - next.switches_so_far as f64);
        let makespan = done.then_some(next.max_end);
        Ok(StepResult { state: next, reward, done, switches, start, end, kit_events, makespan })
    }

    /// Earliest time at which some operation-machine pair becomes eligible.
    /// Never before the current clock.
    fn next_epoch(&self, state: &ScheduleState) -> u64 {
        let mut earliest = u64::MAX;
        for (job, &next) in state.job_next.iter().enumerate() {
            if next >= self.inst.jobs[job].operations.len() {
                continue;
            }
            let flat = self.job_first_op[job] + next;
            for &(machine, _) in &self.op(flat).compatible {
                let t = state.job_ready[job].max(state.machine_free_at[machine]);
                earliest = earliest.min(t);
            }
        }
        debug_assert_ne!(earliest, u64::MAX, "non-terminal state must have a next epoch");
        earliest.max(state.now)
    }

    /// Per-operation completion-time estimates: scheduled operations report
    /// their actual end; an unscheduled operation adds its mean duration to
    /// its predecessor's estimate.
    pub fn completion_estimates(&self, state: &ScheduleState) -> Vec<f64> {
        let mut est = vec![0.0; self.total_operations()];
        for (job, meta) in self.inst.jobs.iter().enumerate() {
            let mut prev = 0.0_f64;
            for i in 0..meta.operations.len() {
                let flat = self.job_first_op[job] + i;
                prev = match state.op_status[flat] {
                    OpStatus::Scheduled { end, .. } => end as f64,
                    OpStatus::Unscheduled => prev.max(0.0) + self.mean_time[flat],
                };
                est[flat] = prev;
            }
        }
        est
    }

    /// Makespan estimate: the largest completion-time estimate. Never below
    /// the latest scheduled end, and exact once the schedule is complete.
    pub fn makespan_lower_bound(&self, state: &ScheduleState) -> f64 {
        self.completion_estimates(state)
            .into_iter()
            .fold(state.max_end as f64, f64::max)
    }

    /// A true lower bound on the makespan of any completion of `state`:
    /// chain bounds using minimum durations, current machine availability,
    /// and the clock. Used for search pruning; unlike
    /// [`makespan_lower_bound`], never overestimates.
    pub fn admissible_completion_bound(&self, state: &ScheduleState) -> u64 {
        let mut bound = state.max_end;
        for (job, meta) in self.inst.jobs.iter().enumerate() {
            let mut cur = state.job_ready[job].max(state.now);
            for i in state.job_next[job]..meta.operations.len() {
                let flat = self.job_first_op[job] + i;
                let min_free = self
                    .op(flat)
                    .compatible
                    .iter()
                    .map(|&(m, _)| state.machine_free_at[m])
                    .min()
                    .unwrap_or(0);
                cur = cur.max(min_free) + self.min_time[flat];
            }
            bound = bound.max(cur);
        }
        bound
    }

    /// Sum of mean durations of the job's unscheduled operations.
    pub fn remaining_work(&self, state: &ScheduleState, job: usize) -> f64 {
        let first = self.job_first_op[job];
        (state.job_next[job]..self.inst.jobs[job].operations.len())
            .map(|i| self.mean_time[first + i])
            .sum()
    }

    /// Unscheduled operations left in the job.
    pub fn remaining_ops(&self, state: &ScheduleState, job: usize) -> usize {
        self.inst.jobs[job].operations.len() - state.job_next[job]
    }

    /// Ready time of a job's next operation (its predecessor's end).
    pub fn job_ready_at(&self, state: &ScheduleState, job: usize) -> u64 {
        state.job_ready[job]
    }

    /// Runs a full episode, letting `choose` pick an index into the eligible
    /// action list at each epoch. The fallible variant surfaces whatever
    /// error the chooser produces (a policy network, say).
    pub fn try_run_policy<F, E>(&self, mut choose: F) -> Result<EpisodeTrace, E>
    where
        F: FnMut(&ScheduleState, &[Action]) -> Result<usize, E>,
        E: From<EnvError>,
    {
        let mut state = self.reset();
        let initial_estimate = state.est_cmax;
        let mut steps = Vec::with_capacity(self.total_operations());
        let mut total_reward = 0.0;
        while !self.done(&state) {
            let actions = self.eligible_actions(&state);
            debug_assert!(!actions.is_empty());
            let action = actions[choose(&state, &actions)?];
            let result = self.step(&state, action).map_err(E::from)?;
            total_reward += result.reward;
            steps.push(TraceStep {
                job: self.op_job[action.op],
                op_index: self.op_index[action.op],
                machine: action.machine,
                start: result.start,
                end: result.end,
                part_sorting: self.op(action.op).part_sorting,
                switches: result.switches,
                reward: result.reward,
                kit_events: result.kit_events.clone(),
            });
            state = result.state;
        }
        Ok(EpisodeTrace {
            steps,
            makespan: state.max_end,
            total_switches: state.switches_so_far,
            initial_estimate,
            total_reward,
        })
    }

    /// Infallible-chooser convenience over [`Self::try_run_policy`].
    pub fn run_policy<F>(&self, mut choose: F) -> Result<EpisodeTrace, EnvError>
    where
        F: FnMut(&ScheduleState, &[Action]) -> usize,
    {
        self.try_run_policy(|state, actions| Ok(choose(state, actions)))
    }
}

/// Re-checks a finished episode against the model's invariants without
/// trusting the simulator's own bookkeeping: precedence within jobs, machine
/// exclusivity, part-sorting machine restrictions, duration accounting
/// (including serialized switch delays), and a replay of all kitting events
/// against a shadow pallet pool (single category per pallet, fixed pool
/// size, conserved switch counts).
pub fn audit_trace(inst: &Instance, cfg: &SimConfig, trace: &EpisodeTrace) -> Result<(), String> {
    use alloc::format;

    let total_ops = inst.total_operations();
    if trace.steps.len() != total_ops {
        return Err(format!("{} steps for {} operations", trace.steps.len(), total_ops));
    }

    let mut seen = vec![false; total_ops];
    let mut per_job: Vec<Vec<&TraceStep>> = vec![Vec::new(); inst.jobs.len()];
    let mut per_machine: Vec<Vec<(u64, u64)>> = vec![Vec::new(); inst.machine_count];
    let mut flat = vec![0usize; inst.jobs.len()];
    for (j, job) in inst.jobs.iter().enumerate() {
        flat[j] = if j == 0 { 0 } else { flat[j - 1] + inst.jobs[j - 1].operations.len() };
        let _ = job;
    }

    for step in &trace.steps {
        let job = inst.jobs.get(step.job).ok_or("job id out of range")?;
        let op = job.operations.get(step.op_index).ok_or("op index out of range")?;
        let id = flat[step.job] + step.op_index;
        if seen[id] {
            return Err(format!("operation ({}, {}) scheduled twice", step.job, step.op_index));
        }
        seen[id] = true;
        if op.part_sorting != step.part_sorting {
            return Err("part-sorting flag mismatch".into());
        }
        if op.part_sorting && !inst.is_part_sorting_machine(step.machine) {
            return Err(format!(
                "part-sorting op ({}, {}) ran on plain machine {}",
                step.job, step.op_index, step.machine
            ));
        }
        let p = op
            .time_on(step.machine)
            .ok_or_else(|| format!("op ({}, {}) incompatible with machine {}", step.job, step.op_index, step.machine))?;
        let expect = if op.part_sorting {
            let kitting = job.total_parts() * inst.place_time + step.switches * inst.switch_time;
            if cfg.kitting_additive {
                kitting + p
            } else {
                kitting
            }
        } else {
            p
        };
        if step.end - step.start != expect {
            return Err(format!(
                "op ({}, {}) duration {} != expected {expect} (switch serialization)",
                step.job,
                step.op_index,
                step.end - step.start
            ));
        }
        per_job[step.job].push(step);
        per_machine[step.machine].push((step.start, step.end));
    }
    if !seen.iter().all(|&s| s) {
        return Err("some operations never scheduled".into());
    }

    for (j, steps) in per_job.iter_mut().enumerate() {
        steps.sort_by_key(|s| s.op_index);
        for w in steps.windows(2) {
            if w[0].op_index + 1 != w[1].op_index {
                return Err(format!("job {j} has a gap in scheduled op indices"));
            }
            if w[1].start < w[0].end {
                return Err(format!(
                    "job {j}: op {} starts at {} before op {} ends at {}",
                    w[1].op_index, w[1].start, w[0].op_index, w[0].end
                ));
            }
        }
    }
    for (m, intervals) in per_machine.iter_mut().enumerate() {
        intervals.sort_unstable();
        for w in intervals.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(format!("machine {m}: overlapping intervals {w:?}"));
            }
        }
    }

    // Replay kitting events on a shadow pallet pool.
    let mut pallets: Vec<Option<usize>> = vec![None; inst.pallet_count];
    let mut switch_total = 0u64;
    for step in &trace.steps {
        let mut step_switches = 0u64;
        for event in &step.kit_events {
            match *event {
                KitEvent::Switch { pallet, old_category, new_category } => {
                    if pallets.get(pallet).copied().flatten() != Some(old_category) {
                        return Err(format!("switch on pallet {pallet} expects {old_category}"));
                    }
                    pallets[pallet] = Some(new_category);
                    step_switches += 1;
                }
                KitEvent::Claim { pallet, category } => {
                    if pallets.get(pallet).copied().flatten().is_some() {
                        return Err(format!("claim of non-empty pallet {pallet}"));
                    }
                    pallets[pallet] = Some(category);
                }
                KitEvent::Place { pallet, category, .. } => {
                    if pallets.get(pallet).copied().flatten() != Some(category) {
                        return Err(format!("placing category {category} on wrong pallet {pallet}"));
                    }
                }
            }
            let mut cats: Vec<usize> = pallets.iter().flatten().copied().collect();
            cats.sort_unstable();
            let n = cats.len();
            cats.dedup();
            if cats.len() != n {
                return Err("two pallets hold the same category".into());
            }
        }
        if step_switches != step.switches {
            return Err(format!(
                "step records {} switches but events show {step_switches}",
                step.switches
            ));
        }
        switch_total += step_switches;
        if pallets.len() != inst.pallet_count {
            return Err("pallet pool size changed".into());
        }
    }
    if switch_total != trace.total_switches {
        return Err(format!(
            "trace total_switches {} != replayed {switch_total}",
            trace.total_switches
        ));
    }
    let max_end = trace.steps.iter().map(|s| s.end).max().unwrap_or(0);
    if max_end != trace.makespan {
        return Err(format!("makespan {} != max end {max_end}", trace.makespan));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate_instance, GeneratorConfig, Job, Operation};
    use alloc::vec;
    use rand::Rng;

    fn plain_op(job: usize, index: usize, compatible: Vec<(usize, u64)>) -> Operation {
        Operation { job, index, compatible, part_sorting: false }
    }

    /// 2 jobs, 2 machines, machine 1 reserved for part-sorting.
    fn kitting_instance() -> Instance {
        Instance {
            jobs: vec![
                Job {
                    operations: vec![
                        plain_op(0, 0, vec![(0, 4)]),
                        Operation { job: 0, index: 1, compatible: vec![(1, 9)], part_sorting: true },
                    ],
                    parts: vec![(0, 2), (1, 1)],
                },
                Job {
                    operations: vec![
                        Operation { job: 1, index: 0, compatible: vec![(1, 3)], part_sorting: true },
                        plain_op(1, 1, vec![(0, 5)]),
                    ],
                    parts: vec![(2, 1), (3, 1)],
                },
            ],
            machine_count: 2,
            part_sorting_machines: vec![1],
            category_count: 4,
            pallet_count: 2,
            place_time: 2,
            switch_time: 5,
        }
    }

    #[test]
    fn reset_state_is_empty_and_estimates_mean_times() {
        let inst = Instance {
            jobs: vec![Job {
                operations: vec![plain_op(0, 0, vec![(0, 4), (1, 8)])],
                parts: vec![],
            }],
            machine_count: 2,
            part_sorting_machines: vec![],
            category_count: 1,
            pallet_count: 1,
            place_time: 0,
            switch_time: 0,
        };
        let sim = Simulator::new(&inst, SimConfig::default()).unwrap();
        let state = sim.reset();
        assert_eq!(state.scheduled_count, 0);
        assert_eq!(state.switches_so_far, 0);
        assert_eq!(state.est_cmax, 6.0);
        assert!(!sim.eligible_actions(&state).is_empty());
    }

    #[test]
    fn chain_estimate_sums_mean_times() {
        let inst = Instance {
            jobs: vec![Job {
                operations: vec![
                    plain_op(0, 0, vec![(0, 4)]),
                    plain_op(0, 1, vec![(0, 5)]),
                    plain_op(0, 2, vec![(0, 6)]),
                ],
                parts: vec![],
            }],
            machine_count: 1,
            part_sorting_machines: vec![],
            category_count: 1,
            pallet_count: 1,
            place_time: 0,
            switch_time: 0,
        };
        let sim = Simulator::new(&inst, SimConfig::default()).unwrap();
        assert_eq!(sim.makespan_lower_bound(&sim.reset()), 15.0);
    }

    #[test]
    fn eligible_actions_match_the_predicate_everywhere() {
        let cfg = GeneratorConfig::for_size(4, 3, 21);
        let inst = generate_instance(&cfg).unwrap();
        let sim = Simulator::new(&inst, SimConfig::default()).unwrap();
        let mut rng = crate::rng::stream(3, crate::rng::DOMAIN_ROLLOUT, 0, 0);
        let mut state = sim.reset();
        while !sim.done(&state) {
            let listed = sim.eligible_actions(&state);
            // Brute-force evaluation of the eligibility predicate over every
            // operation-machine pair.
            let mut expected = Vec::new();
            for flat in 0..sim.total_operations() {
                for machine in 0..inst.machine_count {
                    let action = Action { op: flat, machine };
                    if sim.is_eligible(&state, action) {
                        expected.push(action);
                    }
                }
            }
            expected.sort_by_key(|a| (sim.op_job(a.op), a.machine));
            assert_eq!(listed, expected);
            let pick = rng.gen_range(0..listed.len());
            state = sim.step(&state, listed[pick]).unwrap().state;
        }
    }

    #[test]
    fn part_sorting_duration_comes_from_kitting() {
        let inst = kitting_instance();
        let sim = Simulator::new(&inst, SimConfig::default()).unwrap();
        let state = sim.reset();
        // Job 1's part-sorting op is first in its chain and eligible at t=0.
        let action = Action { op: sim.flat_op(1, 0), machine: 1 };
        let result = sim.step(&state, action).unwrap();
        // 2 parts, empty buffer: no switches, duration 2 * place_time.
        assert_eq!(result.switches, 0);
        assert_eq!(result.end - result.start, 2 * inst.place_time);
        assert_eq!(result.state.buffer.occupied(), 2);
    }

    #[test]
    fn switch_costs_flow_into_reward_with_lambda_weight() {
        let inst = kitting_instance();
        let sim = Simulator::new(&inst, SimConfig::default()).unwrap();
        // Fill both pallets via job 1's kitting, then job 0's two new
        // categories must evict twice.
        let s0 = sim.reset();
        let s1 = sim.step(&s0, Action { op: sim.flat_op(1, 0), machine: 1 }).unwrap().state;
        let s2 = sim.step(&s1, Action { op: sim.flat_op(0, 0), machine: 0 }).unwrap().state;
        let result = sim.step(&s2, Action { op: sim.flat_op(0, 1), machine: 1 }).unwrap();
        assert_eq!(result.switches, 2);
        // duration = 3 parts * 2 + 2 switches * 5
        assert_eq!(result.end - result.start, 16);
        let est_term = s2.est_cmax - result.state.est_cmax;
        assert!((result.reward - (est_term - 2.0)).abs() < 1e-12);
    }

    #[test]
    fn rewards_telescope_and_estimates_close_exactly() {
        for seed in 0..20 {
            let cfg = GeneratorConfig::for_size(6, 4, seed);
            let inst = generate_instance(&cfg).unwrap();
            let sim = Simulator::new(&inst, SimConfig::default()).unwrap();
            let mut rng = crate::rng::stream(seed, crate::rng::DOMAIN_ROLLOUT, 1, 0);
            let trace = sim
                .run_policy(|_, actions| rng.gen_range(0..actions.len()))
                .unwrap();
            assert_eq!(trace.steps.len(), inst.total_operations());
            let expected = trace.initial_estimate
                - trace.makespan as f64
                - sim.config().lambda * trace.total_switches as f64;
            assert!(
                (trace.total_reward - expected).abs() <= 1e-6,
                "telescoping off: {} vs {expected}",
                trace.total_reward
            );
            audit_trace(&inst, sim.config(), &trace).unwrap();
        }
    }

    #[test]
    fn estimate_is_exact_at_termination() {
        let cfg = GeneratorConfig::for_size(5, 3, 77);
        let inst = generate_instance(&cfg).unwrap();
        let sim = Simulator::new(&inst, SimConfig::default()).unwrap();
        let mut state = sim.reset();
        while !sim.done(&state) {
            let actions = sim.eligible_actions(&state);
            state = sim.step(&state, actions[0]).unwrap().state;
            assert!(state.est_cmax >= state.max_end as f64 - 1e-9);
        }
        assert_eq!(state.est_cmax, state.max_end as f64);
        assert_eq!(sim.makespan(&state), Some(state.max_end));
    }

    #[test]
    fn ineligible_actions_are_rejected() {
        let inst = kitting_instance();
        let sim = Simulator::new(&inst, SimConfig::default()).unwrap();
        let state = sim.reset();
        // Job 0 op 1 has an unfinished predecessor.
        let err = sim.step(&state, Action { op: sim.flat_op(0, 1), machine: 1 });
        assert!(matches!(err, Err(EnvError::IneligibleAction { .. })));
        // Wrong machine.
        let err = sim.step(&state, Action { op: sim.flat_op(0, 0), machine: 1 });
        assert!(matches!(err, Err(EnvError::IneligibleAction { .. })));
    }

    #[test]
    fn invalid_instances_are_rejected_at_construction() {
        let mut inst = kitting_instance();
        inst.jobs[0].operations[0].compatible.clear();
        assert!(matches!(
            Simulator::new(&inst, SimConfig::default()),
            Err(EnvError::InvalidInstance(_))
        ));
    }
}
