//! Problem data model, validation, and the synthetic instance generator.
//!
//! An [`Instance`] is a set of jobs, each an ordered chain of operations with
//! machine-dependent processing times, plus the kitting side of the problem:
//! a part multiset per job, a category count, and the pallet pool parameters
//! (pallet count, part placement time, pallet switch time).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// One operation of a job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operation {
    /// Id of the owning job.
    pub job: usize,
    /// Position within the job (0-based; the predecessor is `index - 1`).
    pub index: usize,
    /// Machines that can run this operation, with processing time in seconds.
    /// Sorted by machine id, no duplicates.
    pub compatible: Vec<(usize, u64)>,
    /// Whether this is the part-sorting operation that kits the job's parts.
    pub part_sorting: bool,
}

impl Operation {
    pub fn machines(&self) -> impl Iterator<Item = usize> + '_ {
        self.compatible.iter().map(|&(m, _)| m)
    }

    /// Processing time on `machine`, if compatible.
    pub fn time_on(&self, machine: usize) -> Option<u64> {
        self.compatible
            .iter()
            .find(|&&(m, _)| m == machine)
            .map(|&(_, t)| t)
    }

    pub fn mean_processing_time(&self) -> f64 {
        if self.compatible.is_empty() {
            return 0.0;
        }
        let sum: u64 = self.compatible.iter().map(|&(_, t)| t).sum();
        sum as f64 / self.compatible.len() as f64
    }

    pub fn min_processing_time(&self) -> u64 {
        self.compatible.iter().map(|&(_, t)| t).min().unwrap_or(0)
    }
}

/// A job: an operation chain plus the multiset of parts it carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub operations: Vec<Operation>,
    /// Parts by category: `(category, count)`, sorted by category, counts >= 1.
    pub parts: Vec<(usize, u32)>,
}

impl Job {
    pub fn categories(&self) -> impl Iterator<Item = usize> + '_ {
        self.parts.iter().map(|&(c, _)| c)
    }

    pub fn distinct_categories(&self) -> usize {
        self.parts.len()
    }

    pub fn total_parts(&self) -> u64 {
        self.parts.iter().map(|&(_, n)| n as u64).sum()
    }

    pub fn has_part_sorting(&self) -> bool {
        self.operations.iter().any(|o| o.part_sorting)
    }
}

/// A full scheduling problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub jobs: Vec<Job>,
    pub machine_count: usize,
    /// Machines on which part-sorting operations run. Sorted, deduplicated.
    pub part_sorting_machines: Vec<usize>,
    /// Total number of part categories; all category ids are below this.
    pub category_count: usize,
    /// Number of pallets in the buffer.
    pub pallet_count: usize,
    /// Seconds to place one part onto a pallet.
    pub place_time: u64,
    /// Seconds to replace one pallet with an empty one.
    pub switch_time: u64,
}

impl Instance {
    pub fn total_operations(&self) -> usize {
        self.jobs.iter().map(|j| j.operations.len()).sum()
    }

    pub fn is_part_sorting_machine(&self, machine: usize) -> bool {
        self.part_sorting_machines.binary_search(&machine).is_ok()
    }

    pub fn has_part_sorting_ops(&self) -> bool {
        self.jobs.iter().any(|j| j.has_part_sorting())
    }

    /// Checks every structural invariant and returns the violations found.
    /// An empty list means the instance is well-formed and feasible (every
    /// operation has a machine, every job's categories fit the pallet pool).
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.pallet_count == 0 {
            out.push(Violation::NoPallets);
        }
        if self.category_count == 0 {
            out.push(Violation::NoCategories);
        }
        if self.jobs.is_empty() {
            out.push(Violation::NoJobs);
        }
        for &m in &self.part_sorting_machines {
            if m >= self.machine_count {
                out.push(Violation::MachineIdOutOfRange { job: usize::MAX, op: usize::MAX, machine: m });
            }
        }
        let has_ps = self.has_part_sorting_ops();
        for (j, job) in self.jobs.iter().enumerate() {
            if job.operations.is_empty() {
                out.push(Violation::EmptyJob { job: j });
            }
            let mut prev_cat = None;
            for &(c, n) in &job.parts {
                if c >= self.category_count {
                    out.push(Violation::CategoryOutOfRange { job: j, category: c });
                }
                if n == 0 {
                    out.push(Violation::ZeroPartCount { job: j, category: c });
                }
                if prev_cat.is_some_and(|p| p >= c) {
                    out.push(Violation::UnsortedOrDuplicateParts { job: j });
                }
                prev_cat = Some(c);
            }
            if job.distinct_categories() > self.pallet_count {
                out.push(Violation::ExceedsPalletCount {
                    job: j,
                    categories: job.distinct_categories(),
                    pallets: self.pallet_count,
                });
            }
            if has_ps && !job.parts.is_empty() && !job.has_part_sorting() {
                out.push(Violation::MissingPartSorting { job: j });
            }
            for (i, op) in job.operations.iter().enumerate() {
                if op.job != j || op.index != i {
                    out.push(Violation::MisplacedOperation { job: j, op: i });
                }
                if op.compatible.is_empty() {
                    out.push(Violation::NoCompatibleMachine { job: j, op: i });
                }
                let mut prev_machine = None;
                for &(m, t) in &op.compatible {
                    if m >= self.machine_count {
                        out.push(Violation::MachineIdOutOfRange { job: j, op: i, machine: m });
                    }
                    if t == 0 {
                        out.push(Violation::ZeroProcessingTime { job: j, op: i, machine: m });
                    }
                    if prev_machine.is_some_and(|p| p >= m) {
                        out.push(Violation::UnsortedOrDuplicateMachines { job: j, op: i });
                    }
                    if op.part_sorting && !self.is_part_sorting_machine(m) {
                        out.push(Violation::PartSortingOnPlainMachine { job: j, op: i, machine: m });
                    }
                    prev_machine = Some(m);
                }
            }
        }
        out
    }
}

/// One broken invariant, pointing at the offending entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NoPallets,
    NoCategories,
    NoJobs,
    EmptyJob { job: usize },
    CategoryOutOfRange { job: usize, category: usize },
    ZeroPartCount { job: usize, category: usize },
    UnsortedOrDuplicateParts { job: usize },
    ExceedsPalletCount { job: usize, categories: usize, pallets: usize },
    MissingPartSorting { job: usize },
    MisplacedOperation { job: usize, op: usize },
    NoCompatibleMachine { job: usize, op: usize },
    MachineIdOutOfRange { job: usize, op: usize, machine: usize },
    ZeroProcessingTime { job: usize, op: usize, machine: usize },
    UnsortedOrDuplicateMachines { job: usize, op: usize },
    PartSortingOnPlainMachine { job: usize, op: usize, machine: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::NoPallets => write!(f, "pallet count is zero"),
            Violation::NoCategories => write!(f, "category count is zero"),
            Violation::NoJobs => write!(f, "instance has no jobs"),
            Violation::EmptyJob { job } => write!(f, "job {job} has no operations"),
            Violation::CategoryOutOfRange { job, category } => {
                write!(f, "job {job} carries parts of unknown category {category}")
            }
            Violation::ZeroPartCount { job, category } => {
                write!(f, "job {job} lists category {category} with zero parts")
            }
            Violation::UnsortedOrDuplicateParts { job } => {
                write!(f, "job {job} part list is unsorted or repeats a category")
            }
            Violation::ExceedsPalletCount { job, categories, pallets } => write!(
                f,
                "job {job} has {categories} distinct categories, exceeds pallet count {pallets}"
            ),
            Violation::MissingPartSorting { job } => {
                write!(f, "job {job} carries parts but has no part-sorting operation")
            }
            Violation::MisplacedOperation { job, op } => {
                write!(f, "operation {op} of job {job} has inconsistent ids")
            }
            Violation::NoCompatibleMachine { job, op } => {
                write!(f, "operation {op} of job {job} has no compatible machine")
            }
            Violation::MachineIdOutOfRange { job, op, machine } => {
                write!(f, "machine id {machine} out of range (job {job}, op {op})")
            }
            Violation::ZeroProcessingTime { job, op, machine } => write!(
                f,
                "operation {op} of job {job} has zero processing time on machine {machine}"
            ),
            Violation::UnsortedOrDuplicateMachines { job, op } => {
                write!(f, "operation {op} of job {job} compatible set is unsorted or repeats a machine")
            }
            Violation::PartSortingOnPlainMachine { job, op, machine } => write!(
                f,
                "part-sorting operation {op} of job {job} is compatible with non-part-sorting machine {machine}"
            ),
        }
    }
}

/// Inclusive integer range, as used by the synthetic dataset tables.
pub type Range = (u64, u64);

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_jobs: usize,
    pub n_machines: usize,
    /// Operations per job, inclusive.
    pub ops_per_job: Range,
    /// Compatible machines per operation, inclusive. Clamped to the size of
    /// the machine pool the operation draws from.
    pub machines_per_op: Range,
    /// Processing time per (operation, machine), inclusive, seconds.
    pub proc_time: Range,
    /// Part-sorting operations per job.
    pub part_sorting_ops_per_job: usize,
    /// Distinct part categories per job, inclusive.
    pub categories_per_job: Range,
    /// Parts per carried category, inclusive.
    pub parts_per_category: Range,
    /// Total number of part categories.
    pub category_count: usize,
    /// Number of pallets.
    pub pallet_count: usize,
    /// Part placement time, seconds.
    pub place_time: u64,
    /// Pallet switch time, seconds.
    pub switch_time: u64,
    /// Machines reserved exclusively for part-sorting. Defaults to
    /// ceil(n_machines / 5) when `None`; they take the highest machine ids.
    pub part_sorting_machine_count: Option<usize>,
    pub seed: u64,
}

impl GeneratorConfig {
    /// The synthetic dataset preset for a given `jobs x machines` size.
    ///
    /// Five-machine scales draw 4..=6 operations per job, ten-machine scales
    /// 8..=12; machine flexibility is 1..=m, processing times 1..=20 seconds,
    /// one part-sorting operation per job, 3..=5 of 10 categories per job,
    /// 1..=3 parts per category, 6 pallets, 2 s placement, 5 s switch.
    pub fn for_size(n_jobs: usize, n_machines: usize, seed: u64) -> Self {
        let ops_per_job = if n_machines <= 5 { (4, 6) } else { (8, 12) };
        GeneratorConfig {
            n_jobs,
            n_machines,
            ops_per_job,
            machines_per_op: (1, n_machines as u64),
            proc_time: (1, 20),
            part_sorting_ops_per_job: 1,
            categories_per_job: (3, 5),
            parts_per_category: (1, 3),
            category_count: 10,
            pallet_count: 6,
            place_time: 2,
            switch_time: 5,
            part_sorting_machine_count: None,
            seed,
        }
    }

    pub fn part_sorting_machines(&self) -> usize {
        self.part_sorting_machine_count
            .unwrap_or_else(|| self.n_machines.div_ceil(5))
    }

    fn check(&self) -> Result<(), GeneratorError> {
        let mut problems: Vec<String> = Vec::new();
        let ranges = [
            ("ops_per_job", self.ops_per_job),
            ("machines_per_op", self.machines_per_op),
            ("proc_time", self.proc_time),
            ("categories_per_job", self.categories_per_job),
            ("parts_per_category", self.parts_per_category),
        ];
        for (name, (lo, hi)) in ranges {
            if lo > hi || lo == 0 {
                problems.push(format!("{name} range [{lo}, {hi}] is empty or starts at zero"));
            }
        }
        if self.n_jobs == 0 {
            problems.push("n_jobs is zero".into());
        }
        if self.n_machines == 0 {
            problems.push("n_machines is zero".into());
        }
        if self.category_count == 0 || self.pallet_count == 0 {
            problems.push("category_count and pallet_count must be positive".into());
        }
        let cap = self.category_count.min(self.pallet_count) as u64;
        if self.categories_per_job.1 > cap {
            problems.push(format!(
                "categories_per_job max {} exceeds min(C, P) = {cap}",
                self.categories_per_job.1
            ));
        }
        if self.part_sorting_ops_per_job as u64 > self.ops_per_job.0 {
            problems.push(format!(
                "{} part-sorting ops per job do not fit into the minimum of {} operations",
                self.part_sorting_ops_per_job, self.ops_per_job.0
            ));
        }
        let ps = self.part_sorting_machines();
        if self.part_sorting_ops_per_job > 0 && ps == 0 {
            problems.push("part-sorting operations requested but no part-sorting machines".into());
        }
        if ps >= self.n_machines && self.ops_per_job.1 > self.part_sorting_ops_per_job as u64 {
            problems.push("no machines left for regular operations".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(GeneratorError::InvalidConfig(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GeneratorError {
    InvalidConfig(String),
    /// The generated instance failed validation. Cannot happen for a config
    /// that passes the range checks; kept as a guard.
    Internal(String),
}

impl fmt::Display for GeneratorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorError::InvalidConfig(msg) => write!(f, "invalid generator config: {msg}"),
            GeneratorError::Internal(msg) => write!(f, "generator produced an invalid instance: {msg}"),
        }
    }
}

impl core::error::Error for GeneratorError {}

fn draw(rng: &mut impl Rng, (lo, hi): Range) -> u64 {
    rng.gen_range(lo..=hi)
}

/// Generates a synthetic instance. Pure in `config`: equal configs (including
/// the seed) produce structurally identical instances.
///
/// The last `part_sorting_machine_count` machine ids are reserved for
/// part-sorting; part-sorting operations draw their compatible set from that
/// pool only, all other operations from the remaining machines.
pub fn generate_instance(config: &GeneratorConfig) -> Result<Instance, GeneratorError> {
    config.check()?;
    let mut rng = crate::rng::stream(config.seed, crate::rng::DOMAIN_GENERATE, 0, 0);

    let m = config.n_machines;
    let ps_count = if config.part_sorting_ops_per_job > 0 {
        config.part_sorting_machines().min(m)
    } else {
        0
    };
    let ps_machines: Vec<usize> = (m - ps_count..m).collect();
    let plain_machines: Vec<usize> = (0..m - ps_count).collect();

    let mut jobs = Vec::with_capacity(config.n_jobs);
    for j in 0..config.n_jobs {
        let n_ops = draw(&mut rng, config.ops_per_job) as usize;
        let mut ps_positions = sample(&mut rng, n_ops, config.part_sorting_ops_per_job)
            .into_vec();
        ps_positions.sort_unstable();

        let n_cats = draw(&mut rng, config.categories_per_job) as usize;
        let mut cats = sample(&mut rng, config.category_count, n_cats).into_vec();
        cats.sort_unstable();
        let parts: Vec<(usize, u32)> = cats
            .into_iter()
            .map(|c| (c, draw(&mut rng, config.parts_per_category) as u32))
            .collect();

        let mut operations = Vec::with_capacity(n_ops);
        for i in 0..n_ops {
            let part_sorting = ps_positions.binary_search(&i).is_ok();
            let pool = if part_sorting { &ps_machines } else { &plain_machines };
            let want = (draw(&mut rng, config.machines_per_op) as usize).clamp(1, pool.len());
            let mut chosen = sample(&mut rng, pool.len(), want).into_vec();
            chosen.sort_unstable();
            let compatible = chosen
                .into_iter()
                .map(|k| (pool[k], draw(&mut rng, config.proc_time)))
                .collect();
            operations.push(Operation { job: j, index: i, compatible, part_sorting });
        }
        jobs.push(Job { operations, parts });
    }

    let inst = Instance {
        jobs,
        machine_count: m,
        part_sorting_machines: ps_machines,
        category_count: config.category_count,
        pallet_count: config.pallet_count,
        place_time: config.place_time,
        switch_time: config.switch_time,
    };
    let violations = inst.validate();
    if let Some(v) = violations.first() {
        return Err(GeneratorError::Internal(format!("{v}")));
    }
    Ok(inst)
}
