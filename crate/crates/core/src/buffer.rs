//! Pallet buffer and material kitting.
//!
//! The buffer is a fixed pool of pallets; a pallet holds parts of one
//! category at a time. When a job's parts arrive, parts of categories already
//! on a pallet join that pallet, new categories claim empty pallets, and any
//! categories beyond the empty pallets force a pallet switch: a loaded pallet
//! is moved to the warehouse and replaced by an empty one. Switches are
//! serialized, so a kitting step with `k` switches and `n` parts takes
//! `n * place_time + k * switch_time` seconds.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// One pallet slot. `category` is `None` exactly when the pallet is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pallet {
    pub category: Option<usize>,
    pub fill: u32,
    /// Kitting-event stamp of the last time this pallet received parts.
    pub last_use: u64,
}

impl Pallet {
    fn empty() -> Self {
        Pallet { category: None, fill: 0, last_use: 0 }
    }
}

/// Which loaded pallet gets replaced when a new category needs room.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EvictionPolicy {
    /// Evict the pallet whose category has the fewest parts still waiting to
    /// be kitted; ties go to the least recently used pallet, then the lowest
    /// index.
    #[default]
    FewestRemainingDemand,
    /// Least recently used pallet first; ties to the lowest index.
    LeastRecentlyUsed,
    /// Lowest pallet index first.
    LowestIndex,
}

/// Context the eviction policy decides under.
#[derive(Debug, Clone, Copy)]
pub struct EvictionContext<'a> {
    pub policy: EvictionPolicy,
    /// Pending part demand per category across jobs whose part-sorting is
    /// still unscheduled. May be empty, meaning no pending demand anywhere.
    pub remaining_demand: &'a [u64],
    /// Categories of the parts being kitted right now (sorted). Their
    /// pallets are receiving parts and are never eviction candidates.
    pub protected: &'a [usize],
}

impl<'a> EvictionContext<'a> {
    pub fn new(policy: EvictionPolicy) -> Self {
        EvictionContext { policy, remaining_demand: &[], protected: &[] }
    }
}

/// What happened to the buffer during one kitting step, in execution order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum KitEvent {
    /// A loaded pallet was moved to the warehouse and replaced; costs one
    /// `switch_time`.
    Switch { pallet: usize, old_category: usize, new_category: usize },
    /// An empty pallet was claimed for a new category.
    Claim { pallet: usize, category: usize },
    /// Parts were placed onto a pallet; costs `count * place_time`.
    Place { pallet: usize, category: usize, count: u32 },
}

/// Result of [`BufferState::apply_kitting`].
#[derive(Debug, Clone, PartialEq)]
pub struct KittingOutcome {
    pub state: BufferState,
    /// Pallet switches this step; equals the estimate taken beforehand.
    pub switches: u64,
    /// Seconds the kitting takes: part count * place_time + switches * switch_time.
    pub duration: u64,
    pub events: Vec<KitEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BufferError {
    CategoryOutOfRange { category: usize, category_count: usize },
    TooManyCategories { distinct: usize, pallets: usize },
}

impl fmt::Display for BufferError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            BufferError::CategoryOutOfRange { category, category_count } => {
                write!(f, "part category {category} out of range (instance has {category_count})")
            }
            BufferError::TooManyCategories { distinct, pallets } => {
                write!(f, "{distinct} distinct part categories cannot fit {pallets} pallets")
            }
        }
    }
}

impl core::error::Error for BufferError {}

/// The pallet pool plus cumulative switch accounting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferState {
    pub category_count: usize,
    pub pallets: Vec<Pallet>,
    /// Total switches over the whole history of this buffer.
    pub total_switches: u64,
    /// Number of kitting steps applied so far; feeds the `last_use` stamps.
    pub events: u64,
}

impl BufferState {
    pub fn new(pallet_count: usize, category_count: usize) -> Self {
        BufferState {
            category_count,
            pallets: vec![Pallet::empty(); pallet_count],
            total_switches: 0,
            events: 0,
        }
    }

    pub fn pallet_count(&self) -> usize {
        self.pallets.len()
    }

    pub fn occupied(&self) -> usize {
        self.pallets.iter().filter(|p| p.category.is_some()).count()
    }

    /// Index of the pallet holding `category`, if any. Categories are unique
    /// across pallets.
    pub fn pallet_of(&self, category: usize) -> Option<usize> {
        self.pallets.iter().position(|p| p.category == Some(category))
    }

    fn check_parts(&self, parts: &[(usize, u32)]) -> Result<(), BufferError> {
        debug_assert!(
            parts.windows(2).all(|w| w[0].0 < w[1].0),
            "parts must be sorted by category without duplicates"
        );
        for &(c, _) in parts {
            if c >= self.category_count {
                return Err(BufferError::CategoryOutOfRange {
                    category: c,
                    category_count: self.category_count,
                });
            }
        }
        if parts.len() > self.pallet_count() {
            return Err(BufferError::TooManyCategories {
                distinct: parts.len(),
                pallets: self.pallet_count(),
            });
        }
        Ok(())
    }

    /// How many pallet switches kitting `parts` would cost right now: the
    /// number of categories not present on any pallet, beyond the empty
    /// pallets available to absorb them. Does not mutate the buffer, and is
    /// exact: `apply_kitting` on the same state performs this many switches.
    pub fn estimate_switches(&self, parts: &[(usize, u32)]) -> Result<u64, BufferError> {
        self.check_parts(parts)?;
        let new = parts
            .iter()
            .filter(|&&(c, _)| self.pallet_of(c).is_none())
            .count();
        let empty = self.pallet_count() - self.occupied();
        Ok(new.saturating_sub(empty) as u64)
    }

    /// Picks `n_needed` loaded pallets to replace, under the context's
    /// policy, skipping pallets of protected categories. Panics if fewer
    /// candidates exist than needed; callers uphold that by construction.
    pub fn choose_evictions(&self, n_needed: usize, ctx: &EvictionContext<'_>) -> Vec<usize> {
        if n_needed == 0 {
            return Vec::new();
        }
        let demand = |c: usize| ctx.remaining_demand.get(c).copied().unwrap_or(0);
        let mut candidates: Vec<usize> = self
            .pallets
            .iter()
            .enumerate()
            .filter_map(|(i, p)| match p.category {
                Some(c) if ctx.protected.binary_search(&c).is_err() => Some(i),
                _ => None,
            })
            .collect();
        assert!(
            candidates.len() >= n_needed,
            "eviction needs {n_needed} candidates, only {} available",
            candidates.len()
        );
        match ctx.policy {
            EvictionPolicy::FewestRemainingDemand => candidates.sort_by_key(|&i| {
                let p = &self.pallets[i];
                (demand(p.category.unwrap()), p.last_use, i)
            }),
            EvictionPolicy::LeastRecentlyUsed => {
                candidates.sort_by_key(|&i| (self.pallets[i].last_use, i))
            }
            EvictionPolicy::LowestIndex => {}
        }
        candidates.truncate(n_needed);
        candidates
    }

    /// Kits one job's parts: places existing categories onto their pallets,
    /// claims empty pallets for new categories, and evicts loaded pallets for
    /// whatever remains. Switches are serialized, so
    /// `duration = total parts * place_time + switches * switch_time`.
    pub fn apply_kitting(
        &self,
        parts: &[(usize, u32)],
        place_time: u64,
        switch_time: u64,
        ctx: &EvictionContext<'_>,
    ) -> Result<KittingOutcome, BufferError> {
        self.check_parts(parts)?;

        let mut state = self.clone();
        state.events += 1;
        let stamp = state.events;
        let mut events = Vec::new();

        let new_categories: Vec<usize> = parts
            .iter()
            .map(|&(c, _)| c)
            .filter(|&c| self.pallet_of(c).is_none())
            .collect();
        let arriving: Vec<usize> = parts.iter().map(|&(c, _)| c).collect();

        let empties: Vec<usize> = self
            .pallets
            .iter()
            .enumerate()
            .filter(|(_, p)| p.category.is_none())
            .map(|(i, _)| i)
            .take(new_categories.len())
            .collect();
        let excess = new_categories.len().saturating_sub(empties.len());

        let ctx = EvictionContext { protected: &arriving, ..*ctx };
        let evicted = state.choose_evictions(excess, &ctx);

        // New categories claim empty pallets first, then the evicted ones in
        // the order the policy picked them. Only one pallet changes at a time.
        let mut targets = empties.iter().chain(evicted.iter());
        for &category in &new_categories {
            let &pallet = targets.next().expect("a pallet per new category");
            let slot = &mut state.pallets[pallet];
            match slot.category {
                None => events.push(KitEvent::Claim { pallet, category }),
                Some(old_category) => {
                    events.push(KitEvent::Switch { pallet, old_category, new_category: category });
                }
            }
            slot.category = Some(category);
            slot.fill = 0;
        }

        let mut part_total: u64 = 0;
        for &(category, count) in parts {
            let pallet = state.pallet_of(category).expect("category has a pallet now");
            let slot = &mut state.pallets[pallet];
            slot.fill += count;
            slot.last_use = stamp;
            part_total += count as u64;
            events.push(KitEvent::Place { pallet, category, count });
        }

        let switches = excess as u64;
        state.total_switches += switches;
        Ok(KittingOutcome {
            state,
            switches,
            duration: part_total * place_time + switches * switch_time,
            events,
        })
    }
}
