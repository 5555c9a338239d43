//! Clipped-surrogate policy-gradient training.
//!
//! Each iteration rolls out one episode per instance in the training batch
//! (in parallel when the `parallel` feature is on; results are identical
//! either way because every episode owns a seed-derived stream). Every
//! `update_interval` iterations the buffered trajectories are flattened,
//! advantages are estimated with GAE and normalized, and the parameters take
//! `k_epochs` passes of clipped updates over shuffled minibatches. The
//! policy is validated greedily on a fixed instance set every
//! `validate_interval` iterations, keeping the best snapshot, and the
//! training instances are resampled every `resample_interval` iterations.
//!
//! Fine-tuning runs the same loop with an anchor: a frozen copy of the
//! starting parameters whose action distribution enters the loss through a
//! KL penalty, which keeps the policy from drifting too quickly.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::env::{EnvError, EpisodeTrace, ScheduleState, SimConfig, Simulator};
use crate::graph::{build_graph, GraphConfig};
use crate::instance::{GeneratorConfig, GeneratorError, Instance};
use crate::net::{
    actor_critic, embed_graph, ActorCritic, NetArch, NetConfig, NetError, PolicyParams, Tape,
    Tensor,
};
use crate::rng::{derive_seed, DOMAIN_EVAL_SET, DOMAIN_ROLLOUT, DOMAIN_SHUFFLE, DOMAIN_TRAIN_SET};

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub learning_rate: f64,
    /// Discount factor.
    pub gamma: f64,
    /// Optimization epochs per update phase.
    pub k_epochs: usize,
    /// Weight of the clipped policy surrogate.
    pub a_coeff: f64,
    /// Weight of the value regression loss.
    pub vf_coeff: f64,
    /// Weight of the entropy bonus.
    pub entropy_coeff: f64,
    /// Weight of the KL penalty toward the anchor policy (fine-tuning only).
    pub kl_coeff: f64,
    /// Episodes collected per iteration (one per training instance).
    pub batch: usize,
    /// Minibatch size inside an update phase.
    pub minibatch: usize,
    /// Iterations between update phases.
    pub update_interval: usize,
    /// Iterations between greedy validations.
    pub validate_interval: usize,
    /// Iterations between training-instance resamples.
    pub resample_interval: usize,
    pub max_iterations: usize,
    pub clip_epsilon: f64,
    /// GAE smoothing parameter; 1.0 recovers plain Monte-Carlo advantages.
    pub gae_smoothing: f64,
    /// Held-out instances used for validation.
    pub validation_count: usize,
    /// Samples per gradient chunk; chunks are folded in a fixed order so the
    /// result does not depend on how many workers computed them.
    pub grad_chunk: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            learning_rate: 2e-4,
            gamma: 1.0,
            k_epochs: 3,
            a_coeff: 1.0,
            vf_coeff: 0.5,
            entropy_coeff: 0.05,
            kl_coeff: 0.05,
            batch: 20,
            minibatch: 512,
            update_interval: 5,
            validate_interval: 10,
            resample_interval: 20,
            max_iterations: 1000,
            clip_epsilon: 0.2,
            gae_smoothing: 0.98,
            validation_count: 100,
            grad_chunk: 64,
            seed: 0,
        }
    }
}

/// A trained (or training) policy: architecture configuration plus weights.
/// Everything needed to act on instances with the same category count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    pub category_count: usize,
    pub net: NetConfig,
    pub graph: GraphConfig,
    pub params: PolicyParams,
}

impl PolicyModel {
    pub fn new(category_count: usize, net: NetConfig, graph: GraphConfig) -> Self {
        let arch = NetArch::new(
            &net,
            graph.features.op_feature_dim(category_count),
            category_count + 1,
        );
        let params = PolicyParams::init(&arch, net.seed);
        PolicyModel { category_count, net, graph, params }
    }

    pub fn arch(&self) -> NetArch {
        NetArch::new(
            &self.net,
            self.graph.features.op_feature_dim(self.category_count),
            self.category_count + 1,
        )
    }

    /// Whether the stored parameter shapes agree with the declared
    /// architecture (guards checkpoint loads).
    pub fn is_consistent(&self) -> bool {
        self.params.matches(&self.arch())
    }

    pub fn compatible_with(&self, inst: &Instance) -> bool {
        inst.category_count == self.category_count
    }
}

/// One decision the policy took while collecting a trajectory. The eligible
/// action list is not stored; it is rebuilt deterministically from `state`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep {
    /// State before the action.
    pub state: ScheduleState,
    /// Index into the eligible action list at `state`.
    pub chosen: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    /// Anchor policy log-probabilities over the same eligible list, present
    /// when fine-tuning.
    pub anchor_log_probs: Option<Vec<f64>>,
}

/// A complete sampled episode with everything the update phase needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub instance: Arc<Instance>,
    pub steps: Vec<RolloutStep>,
    pub makespan: u64,
    pub switches: u64,
    pub initial_estimate: f64,
    pub total_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyError {
    Net(NetError),
    Env(EnvError),
    /// Model category count does not match the instance.
    IncompatibleInstance { model: usize, instance: usize },
}

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyError::Net(e) => write!(f, "{e}"),
            PolicyError::Env(e) => write!(f, "{e}"),
            PolicyError::IncompatibleInstance { model, instance } => write!(
                f,
                "model expects {model} part categories, instance has {instance}"
            ),
        }
    }
}

impl core::error::Error for PolicyError {}

impl From<NetError> for PolicyError {
    fn from(e: NetError) -> Self {
        PolicyError::Net(e)
    }
}

impl From<EnvError> for PolicyError {
    fn from(e: EnvError) -> Self {
        PolicyError::Env(e)
    }
}

/// Rollout failure, tagged with the offending instance's batch position.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutError {
    pub instance: usize,
    pub error: PolicyError,
}

impl fmt::Display for RolloutError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "rollout on batch instance {} failed: {}", self.instance, self.error)
    }
}

impl core::error::Error for RolloutError {}

/// Forward pass of the policy at one state: probabilities and log
/// probabilities over the eligible actions plus the value estimate.
fn policy_forward(
    model: &PolicyModel,
    sim: &Simulator<'_>,
    state: &ScheduleState,
    pairs: &[(usize, usize)],
) -> Result<(Vec<f64>, Vec<f64>, f64), PolicyError> {
    let arch = model.arch();
    let graph = build_graph(sim, state, &model.graph);
    let mut tape = Tape::new(&model.params);
    let emb = embed_graph(&mut tape, &graph, &arch, model.net.activation);
    let ac = actor_critic(&mut tape, &emb, pairs, &arch, model.net.activation)?;
    tape.check().map_err(PolicyError::Net)?;
    let probs = crate::net::action_probabilities(&tape, &ac);
    let log_probs = crate::net::action_log_probabilities(&tape, &ac);
    let value = tape.scalar(ac.value);
    Ok((probs, log_probs, value))
}

fn pairs_of(actions: &[crate::env::Action]) -> Vec<(usize, usize)> {
    actions.iter().map(|a| (a.op, a.machine)).collect()
}

/// Greedy action selection: the highest-probability pair, lowest index on
/// ties.
fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// How the policy decodes actions at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecodeStrategy {
    /// Deterministic argmax decoding.
    Greedy,
    /// Stochastic decoding from the action distribution, seeded.
    Sample { seed: u64 },
}

/// Runs one full episode under the model, producing the schedule trace.
pub fn evaluate_policy(
    model: &PolicyModel,
    inst: &Instance,
    sim_cfg: &SimConfig,
    strategy: DecodeStrategy,
) -> Result<EpisodeTrace, PolicyError> {
    if !model.compatible_with(inst) {
        return Err(PolicyError::IncompatibleInstance {
            model: model.category_count,
            instance: inst.category_count,
        });
    }
    let sim = Simulator::new(inst, *sim_cfg)?;
    let mut rng = match strategy {
        DecodeStrategy::Greedy => None,
        DecodeStrategy::Sample { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    sim.try_run_policy(|state, actions| {
        let pairs = pairs_of(actions);
        let (probs, _, _) = policy_forward(model, &sim, state, &pairs)?;
        Ok(match rng.as_mut() {
            None => argmax(&probs),
            Some(rng) => sample_index(&probs, rng),
        })
    })
}

/// Samples one training episode from the policy.
pub fn rollout_episode(
    model: &PolicyModel,
    instance: &Arc<Instance>,
    sim_cfg: &SimConfig,
    seed: u64,
    anchor: Option<&PolicyModel>,
) -> Result<Trajectory, PolicyError> {
    if !model.compatible_with(instance) {
        return Err(PolicyError::IncompatibleInstance {
            model: model.category_count,
            instance: instance.category_count,
        });
    }
    let sim = Simulator::new(instance, *sim_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = sim.reset();
    let initial_estimate = state.est_cmax;
    let mut steps = Vec::with_capacity(sim.total_operations());
    let mut total_reward = 0.0;
    while !sim.done(&state) {
        let actions = sim.eligible_actions(&state);
        let pairs = pairs_of(&actions);
        let (probs, log_probs, value) = policy_forward(model, &sim, &state, &pairs)?;
        let anchor_log_probs = match anchor {
            Some(anchor_model) => {
                let (_, anchor_lp, _) = policy_forward(anchor_model, &sim, &state, &pairs)?;
                Some(anchor_lp)
            }
            None => None,
        };
        let chosen = sample_index(&probs, &mut rng);
        let result = sim.step(&state, actions[chosen])?;
        total_reward += result.reward;
        steps.push(RolloutStep {
            state,
            chosen,
            log_prob: log_probs[chosen],
            value,
            reward: result.reward,
            anchor_log_probs,
        });
        state = result.state;
    }
    Ok(Trajectory {
        instance: Arc::clone(instance),
        steps,
        makespan: state.max_end,
        switches: state.switches_so_far,
        initial_estimate,
        total_reward,
    })
}

/// Collects one episode per instance. Episode seeds derive from
/// (seed, iteration, batch position), so the result is independent of
/// worker scheduling.
pub fn collect_rollouts(
    model: &PolicyModel,
    instances: &[Arc<Instance>],
    sim_cfg: &SimConfig,
    seed: u64,
    iteration: u64,
    anchor: Option<&PolicyModel>,
) -> Result<Vec<Trajectory>, RolloutError> {
    let run = |(b, instance): (usize, &Arc<Instance>)| {
        let episode_seed = derive_seed(seed, DOMAIN_ROLLOUT, iteration, b as u64);
        rollout_episode(model, instance, sim_cfg, episode_seed, anchor)
            .map_err(|error| RolloutError { instance: b, error })
    };
    #[cfg(feature = "parallel")]
    {
        instances.par_iter().enumerate().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        instances.iter().enumerate().map(run).collect()
    }
}

/// Generalized advantage estimation over one reward/value sequence; the
/// terminal value is zero. Returns `(advantage, return)` per step, where
/// `return = advantage + value`.
pub fn gae(rewards: &[f64], values: &[f64], gamma: f64, smoothing: f64) -> Vec<(f64, f64)> {
    let n = rewards.len();
    let mut out = vec![(0.0, 0.0); n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { 0.0 };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * smoothing * running;
        out[t] = (running, running + values[t]);
    }
    out
}

/// Per-step advantages and returns for a collected trajectory.
pub fn compute_advantages(traj: &Trajectory, cfg: &PpoConfig) -> Vec<(f64, f64)> {
    let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
    let values: Vec<f64> = traj.steps.iter().map(|s| s.value).collect();
    gae(&rewards, &values, cfg.gamma, cfg.gae_smoothing)
}

/// Averaged loss terms of one update phase.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossStats {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub kl: f64,
    pub total: f64,
}

/// Adam optimizer state over the policy parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(params: &PolicyParams) -> Self {
        Adam {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut PolicyParams, grads: &[Tensor], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (slot, grad) in grads.iter().enumerate() {
            let m = &mut self.m[slot].data;
            let v = &mut self.v[slot].data;
            let p = &mut params.tensors[slot].data;
            for i in 0..grad.data.len() {
                let g = grad.data[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (libm::sqrt(v_hat) + self.epsilon);
            }
        }
    }
}

/// One flattened training sample.
#[derive(Clone, Copy)]
struct FlatSample {
    traj: usize,
    step: usize,
    advantage: f64,
    ret: f64,
}

/// Raw per-sample loss term values, for statistics.
struct SampleStats {
    policy: f64,
    value: f64,
    entropy: f64,
    kl: f64,
}

/// Builds the loss nodes for one sample on `tape` and returns
/// (loss node, stats). The per-sample weight `w` spreads the minibatch mean
/// into each sample so chunk gradients can be summed exactly.
fn sample_loss(
    tape: &mut Tape<'_>,
    model: &PolicyModel,
    sim: &Simulator<'_>,
    sample: &FlatSample,
    step: &RolloutStep,
    cfg: &PpoConfig,
    w: f64,
) -> Result<(crate::net::NodeId, SampleStats), PolicyError> {
    let arch = model.arch();
    let actions = sim.eligible_actions(&step.state);
    let pairs = pairs_of(&actions);
    let graph = build_graph(sim, &step.state, &model.graph);
    let emb = embed_graph(tape, &graph, &arch, model.net.activation);
    let ac: ActorCritic = actor_critic(tape, &emb, &pairs, &arch, model.net.activation)?;

    let logp = tape.log_softmax_pick(&ac.logits, step.chosen, "ppo_logp");
    let ratio = tape.exp_shift(logp, step.log_prob, "ppo_ratio");
    let clipped = tape.clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon, "ppo_clip");
    let surr1 = tape.scale(ratio, sample.advantage, "ppo_surr1");
    let surr2 = tape.scale(clipped, sample.advantage, "ppo_surr2");
    let surrogate = tape.min_pair(surr1, surr2, "ppo_surrogate");
    let vloss = tape.squared_error(ac.value, sample.ret, "ppo_vloss");
    let ent = tape.entropy(&ac.logits, "ppo_entropy");

    let mut nodes = vec![surrogate, vloss, ent];
    let mut coeffs = vec![-cfg.a_coeff * w, cfg.vf_coeff * w, -cfg.entropy_coeff * w];
    let mut kl_value = 0.0;
    if let Some(anchor_lp) = &step.anchor_log_probs {
        let kl = tape.kl_to_anchor(&ac.logits, anchor_lp, "ppo_kl");
        kl_value = tape.scalar(kl);
        nodes.push(kl);
        coeffs.push(cfg.kl_coeff * w);
    }
    let loss = tape.weighted_sum(&nodes, &coeffs, "ppo_sample_loss");
    let stats = SampleStats {
        policy: -tape.scalar(surrogate),
        value: tape.scalar(vloss),
        entropy: tape.scalar(ent),
        kl: kl_value,
    };
    Ok((loss, stats))
}

/// Gradient of the weighted sample losses over `chunk`; summing chunk
/// gradients over a minibatch yields the minibatch-mean gradient exactly.
fn chunk_gradients(
    model: &PolicyModel,
    sim_cfg: &SimConfig,
    trajectories: &[Trajectory],
    chunk: &[FlatSample],
    cfg: &PpoConfig,
    minibatch_len: usize,
) -> Result<(Vec<Tensor>, SampleStats), PolicyError> {
    let mut tape = Tape::new(&model.params);
    let mut losses = Vec::with_capacity(chunk.len());
    let mut stats = SampleStats { policy: 0.0, value: 0.0, entropy: 0.0, kl: 0.0 };
    let w = 1.0 / minibatch_len as f64;
    for sample in chunk {
        let traj = &trajectories[sample.traj];
        let sim = Simulator::new(&traj.instance, *sim_cfg)?;
        let step = &traj.steps[sample.step];
        let (loss, s) = sample_loss(&mut tape, model, &sim, sample, step, cfg, w)?;
        losses.push(loss);
        stats.policy += s.policy;
        stats.value += s.value;
        stats.entropy += s.entropy;
        stats.kl += s.kl;
    }
    let coeffs = vec![1.0; losses.len()];
    let total = tape.weighted_sum(&losses, &coeffs, "ppo_chunk_loss");
    let grads = tape.backward(total).map_err(PolicyError::Net)?;
    Ok((grads, stats))
}

/// One full update phase over the buffered trajectories: GAE, advantage
/// normalization, then `k_epochs` passes of clipped minibatch updates.
/// `update_round` seeds the shuffle streams.
pub fn ppo_update(
    model: &mut PolicyModel,
    optimizer: &mut Adam,
    trajectories: &[Trajectory],
    sim_cfg: &SimConfig,
    cfg: &PpoConfig,
    update_round: u64,
) -> Result<LossStats, PolicyError> {
    let mut samples = Vec::new();
    for (t, traj) in trajectories.iter().enumerate() {
        for (s, (advantage, ret)) in compute_advantages(traj, cfg).into_iter().enumerate() {
            samples.push(FlatSample { traj: t, step: s, advantage, ret });
        }
    }
    if samples.is_empty() {
        return Ok(LossStats::default());
    }

    // Normalize advantages across the whole update batch.
    if samples.len() > 1 {
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n;
        let var =
            samples.iter().map(|s| (s.advantage - mean) * (s.advantage - mean)).sum::<f64>() / n;
        let std = libm::sqrt(var).max(1e-8);
        for s in &mut samples {
            s.advantage = (s.advantage - mean) / std;
        }
    }

    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut totals = LossStats::default();
    let mut minibatches = 0usize;
    for epoch in 0..cfg.k_epochs {
        let mut rng = crate::rng::stream(cfg.seed, DOMAIN_SHUFFLE, update_round, epoch as u64);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.minibatch.max(1)) {
            let chunk_size = cfg.grad_chunk.max(1);
            let chunks: Vec<Vec<FlatSample>> = batch
                .chunks(chunk_size)
                .map(|ids| ids.iter().map(|&i| samples[i]).collect())
                .collect();
            let compute = |sub: &Vec<FlatSample>| {
                chunk_gradients(model, sim_cfg, trajectories, sub, cfg, batch.len())
            };
            #[cfg(feature = "parallel")]
            let results: Result<Vec<_>, _> = chunks.par_iter().map(compute).collect();
            #[cfg(not(feature = "parallel"))]
            let results: Result<Vec<_>, _> = chunks.iter().map(compute).collect();

            let mut grads = model.params.zeros_like();
            let mut stats = SampleStats { policy: 0.0, value: 0.0, entropy: 0.0, kl: 0.0 };
            for (chunk_grads, s) in results? {
                for (acc, g) in grads.iter_mut().zip(chunk_grads.iter()) {
                    for (a, b) in acc.data.iter_mut().zip(g.data.iter()) {
                        *a += b;
                    }
                }
                stats.policy += s.policy;
                stats.value += s.value;
                stats.entropy += s.entropy;
                stats.kl += s.kl;
            }
            optimizer.step(&mut model.params, &grads, cfg.learning_rate);

            let n = batch.len() as f64;
            totals.policy += stats.policy / n;
            totals.value += stats.value / n;
            totals.entropy += stats.entropy / n;
            totals.kl += stats.kl / n;
            minibatches += 1;
        }
    }
    let n = minibatches.max(1) as f64;
    let stats = LossStats {
        policy: totals.policy / n,
        value: totals.value / n,
        entropy: totals.entropy / n,
        kl: totals.kl / n,
        total: (cfg.a_coeff * totals.policy + cfg.vf_coeff * totals.value
            - cfg.entropy_coeff * totals.entropy
            + cfg.kl_coeff * totals.kl)
            / n,
    };
    Ok(stats)
}

/// Where training and validation instances come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InstanceSource {
    /// Fresh synthetic instances; the config's own seed field is ignored
    /// (instance seeds derive from the PPO seed).
    Generator(GeneratorConfig),
    /// A fixed dataset. Training batches are seeded draws with replacement;
    /// validation uses a seeded sample without replacement.
    Pool(Vec<Arc<Instance>>),
}

impl InstanceSource {
    pub fn category_count(&self) -> usize {
        match self {
            InstanceSource::Generator(cfg) => cfg.category_count,
            InstanceSource::Pool(instances) => {
                instances.first().map_or(0, |i| i.category_count)
            }
        }
    }

    /// A seeded instance set for one round of one domain.
    fn sample_set(
        &self,
        seed: u64,
        domain: u64,
        round: u64,
        count: usize,
    ) -> Result<Vec<Arc<Instance>>, GeneratorError> {
        match self {
            InstanceSource::Generator(gen) => generate_set(gen, seed, domain, round, count),
            InstanceSource::Pool(instances) => {
                if domain == DOMAIN_EVAL_SET {
                    // Sample without replacement; the whole pool if small.
                    let mut rng = crate::rng::stream(seed, domain, round, 0);
                    let mut order: Vec<usize> = (0..instances.len()).collect();
                    order.shuffle(&mut rng);
                    order.truncate(count.min(instances.len()));
                    Ok(order.into_iter().map(|i| Arc::clone(&instances[i])).collect())
                } else {
                    let mut rng = crate::rng::stream(seed, domain, round, 0);
                    Ok((0..count)
                        .map(|_| Arc::clone(&instances[rng.gen_range(0..instances.len())]))
                        .collect())
                }
            }
        }
    }
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSetup {
    pub source: InstanceSource,
    pub sim: SimConfig,
    pub graph: GraphConfig,
    pub net: NetConfig,
    pub ppo: PpoConfig,
}

/// One training log row. Validation fields are present on validation
/// iterations only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub iteration: usize,
    /// Mean makespan of this iteration's sampled rollouts.
    pub mean_makespan: f64,
    pub mean_switches: f64,
    pub loss: Option<LossStats>,
    pub validation_makespan: Option<f64>,
    pub validation_switches: Option<f64>,
    pub best_validation_makespan: Option<f64>,
}

/// Receives training progress; file writers live in the companion crate.
pub trait TrainSink {
    fn record(&mut self, row: &TrainLogRow);
    /// Called when a validation improves on the best snapshot so far.
    fn on_best(&mut self, _iteration: usize, _model: &PolicyModel) {}
}

/// Collects rows in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub rows: Vec<TrainLogRow>,
}

impl TrainSink for MemorySink {
    fn record(&mut self, row: &TrainLogRow) {
        self.rows.push(row.clone());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    Generator(GeneratorError),
    Rollout(RolloutError),
    Policy(PolicyError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Generator(e) => write!(f, "{e}"),
            TrainError::Rollout(e) => write!(f, "{e}"),
            TrainError::Policy(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for TrainError {}

/// Result of a training run: final and best-by-validation parameters plus
/// the full metric log.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: PolicyModel,
    pub best: PolicyModel,
    pub rows: Vec<TrainLogRow>,
    pub best_validation: Option<(f64, f64)>,
}

/// Seed-derived instance set for training or validation rounds.
pub fn generate_set(
    gen: &GeneratorConfig,
    seed: u64,
    domain: u64,
    round: u64,
    count: usize,
) -> Result<Vec<Arc<Instance>>, GeneratorError> {
    (0..count)
        .map(|i| {
            let cfg = GeneratorConfig {
                seed: derive_seed(seed, domain, round, i as u64),
                ..gen.clone()
            };
            crate::instance::generate_instance(&cfg).map(Arc::new)
        })
        .collect()
}

/// Greedy evaluation over an instance set; returns (mean makespan,
/// mean switches).
pub fn validate_greedy(
    model: &PolicyModel,
    instances: &[Arc<Instance>],
    sim_cfg: &SimConfig,
) -> Result<(f64, f64), PolicyError> {
    let run = |inst: &Arc<Instance>| {
        evaluate_policy(model, inst, sim_cfg, DecodeStrategy::Greedy)
            .map(|t| (t.makespan as f64, t.total_switches as f64))
    };
    #[cfg(feature = "parallel")]
    let results: Result<Vec<_>, _> = instances.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Result<Vec<_>, _> = instances.iter().map(run).collect();
    let results = results?;
    let n = results.len().max(1) as f64;
    let mk = results.iter().map(|r| r.0).sum::<f64>() / n;
    let sw = results.iter().map(|r| r.1).sum::<f64>() / n;
    Ok((mk, sw))
}

/// Full training procedure. Deterministic in `setup` (and the optional
/// starting model): two runs produce identical logs and identical weights.
///
/// `initial` seeds the starting parameters (fresh init otherwise);
/// `anchor_initial` additionally freezes a copy of the starting parameters
/// and enables the KL penalty toward them (fine-tuning mode).
pub fn train(
    setup: &TrainSetup,
    initial: Option<PolicyModel>,
    anchor_initial: bool,
    sink: &mut dyn TrainSink,
) -> Result<TrainResult, TrainError> {
    let cfg = &setup.ppo;
    let mut model = initial.unwrap_or_else(|| {
        PolicyModel::new(setup.source.category_count(), setup.net, setup.graph)
    });
    debug_assert!(model.is_consistent());
    let anchor = anchor_initial.then(|| model.clone());
    let mut optimizer = Adam::new(&model.params);

    let validation = setup
        .source
        .sample_set(cfg.seed, DOMAIN_EVAL_SET, 0, cfg.validation_count)
        .map_err(TrainError::Generator)?;
    let mut round = 0u64;
    let mut training = setup
        .source
        .sample_set(cfg.seed, DOMAIN_TRAIN_SET, round, cfg.batch)
        .map_err(TrainError::Generator)?;

    let mut best = model.clone();
    let mut best_validation: Option<(f64, f64)> = None;
    let mut buffer: Vec<Trajectory> = Vec::new();
    let mut update_round = 0u64;
    let mut rows = Vec::with_capacity(cfg.max_iterations);

    for iteration in 1..=cfg.max_iterations {
        let batch = collect_rollouts(
            &model,
            &training,
            &setup.sim,
            cfg.seed,
            iteration as u64,
            anchor.as_ref(),
        )
        .map_err(TrainError::Rollout)?;
        let n = batch.len().max(1) as f64;
        let mean_makespan = batch.iter().map(|t| t.makespan as f64).sum::<f64>() / n;
        let mean_switches = batch.iter().map(|t| t.switches as f64).sum::<f64>() / n;
        buffer.extend(batch);

        let mut loss = None;
        if iteration % cfg.update_interval == 0 {
            let stats =
                ppo_update(&mut model, &mut optimizer, &buffer, &setup.sim, cfg, update_round)
                    .map_err(TrainError::Policy)?;
            buffer.clear();
            update_round += 1;
            loss = Some(stats);
        }

        let mut validation_makespan = None;
        let mut validation_switches = None;
        if iteration % cfg.validate_interval == 0 {
            let (mk, sw) =
                validate_greedy(&model, &validation, &setup.sim).map_err(TrainError::Policy)?;
            validation_makespan = Some(mk);
            validation_switches = Some(sw);
            // Snapshot selection follows the optimization objective: makespan
            // plus lambda-weighted switches.
            let score = mk + setup.sim.lambda * sw;
            let improves = match best_validation {
                None => true,
                Some((bmk, bsw)) => score < bmk + setup.sim.lambda * bsw,
            };
            if improves {
                best_validation = Some((mk, sw));
                best = model.clone();
                sink.on_best(iteration, &best);
            }
        }

        if iteration % cfg.resample_interval == 0 {
            round += 1;
            training = setup
                .source
                .sample_set(cfg.seed, DOMAIN_TRAIN_SET, round, cfg.batch)
                .map_err(TrainError::Generator)?;
        }

        let row = TrainLogRow {
            iteration,
            mean_makespan,
            mean_switches,
            loss,
            validation_makespan,
            validation_switches,
            best_validation_makespan: best_validation.map(|(mk, _)| mk),
        };
        sink.record(&row);
        rows.push(row);
    }

    if best_validation.is_none() {
        best = model.clone();
    }
    Ok(TrainResult { model, best, rows, best_validation })
}
