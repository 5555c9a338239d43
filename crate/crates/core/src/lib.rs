//! Scheduling engine for the flexible job shop with limited buffers and
//! material kitting.
//!
//! Jobs are ordered chains of operations, each executable on a subset of
//! machines. Every job carries a multiset of parts; at its part-sorting
//! operation those parts are placed onto a limited pool of pallets, where a
//! pallet holds parts of a single category at a time. Admitting a category
//! that is not on any pallet costs a serialized pallet change when no empty
//! pallet is left. The engine optimizes makespan together with the number of
//! pallet changes.
//!
//! The crate is split along the problem structure:
//!
//! - [`instance`]: the data model, validation, and the synthetic generator.
//! - [`buffer`]: the pallet/kitting state machine and its cost model.
//! - [`env`]: the decision-epoch simulator (the MDP the policies act in).
//! - [`graph`]: the heterogeneous graph snapshot of a simulator state.
//! - [`net`]: the policy/value network with its own reverse-mode gradients.
//! - [`ppo`]: clipped-surrogate policy training over parallel rollouts.
//! - [`baselines`]: dispatching rules, a random policy, and an exact
//!   branch-and-bound solver for small instances.
//!
//! Everything in here is pure computation over value types; file formats,
//! timing, and the command-line tool live in the companion `kitshop` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod baselines;
pub mod buffer;
pub mod env;
pub mod graph;
pub mod instance;
pub mod net;
pub mod ppo;
pub mod rng;

pub use buffer::{BufferState, EvictionPolicy};
pub use env::{Action, EpisodeTrace, ScheduleState, SimConfig, Simulator, StepResult};
pub use graph::{ConnectivityMode, FeatureConfig, GraphConfig, HeteroGraph};
pub use instance::{GeneratorConfig, Instance, Job, Operation};
pub use net::{NetConfig, PolicyParams};
pub use ppo::{PolicyModel, PpoConfig};

