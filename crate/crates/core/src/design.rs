//! Randomized best-worst tuple designs.
//!
//! A design places every item in `k` tuples of size `n` such that tuples are
//! pairwise distinct as sets and no two tuples share more than `max_overlap`
//! items. Generation deals `k` shuffled copies of the item list into tuples,
//! then repairs constraint violations with local slot swaps. Swaps exchange
//! items between tuples, so appearance counts never change after dealing.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::item::{ItemId, ItemSet};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub tuple_size: usize,
    pub appearances_per_item: usize,
    pub rng_seed: u64,
    pub max_overlap: usize,
    pub repair_attempts: usize,
    /// Permit up to `tuple_size - 1` items to appear one extra time when
    /// `appearances_per_item * N` is not a multiple of `tuple_size`.
    pub allow_relaxed_balance: bool,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            tuple_size: 4,
            appearances_per_item: 8,
            rng_seed: 0,
            max_overlap: 2,
            repair_attempts: 10_000,
            allow_relaxed_balance: true,
        }
    }
}

impl DesignConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            rng_seed: seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        if self.tuple_size < 2 {
            return Err(DesignError::InvalidConfig("tuple size must be at least 2".into()));
        }
        if self.appearances_per_item < 1 {
            return Err(DesignError::InvalidConfig(
                "appearances per item must be at least 1".into(),
            ));
        }
        if self.max_overlap >= self.tuple_size {
            return Err(DesignError::InvalidConfig(format!(
                "max overlap {} must be smaller than tuple size {}",
                self.max_overlap, self.tuple_size
            )));
        }
        if self.repair_attempts < 1 {
            return Err(DesignError::InvalidConfig("repair attempts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DesignError {
    #[error("invalid design configuration: {0}")]
    InvalidConfig(String),
    #[error("infeasible design: {0}")]
    InfeasibleDesign(String),
}

/// Per-item appearance counts of a design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub counts: BTreeMap<ItemId, usize>,
    /// Set when some items appear `k + 1` times.
    pub relaxed: bool,
}

impl BalanceReport {
    pub fn min_count(&self) -> usize {
        self.counts.values().copied().min().unwrap_or(0)
    }

    pub fn max_count(&self) -> usize {
        self.counts.values().copied().max().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleDesign {
    tuples: Vec<Vec<ItemId>>,
    config: DesignConfig,
    balance: BalanceReport,
}

impl TupleDesign {
    /// Assembles a design from explicit tuples, e.g. when read back from disk.
    /// Appearance counts are recomputed from the tuples; `universe` adds items
    /// that may not appear in any tuple.
    pub fn from_parts(
        tuples: Vec<Vec<ItemId>>,
        config: DesignConfig,
        relaxed: bool,
        universe: impl IntoIterator<Item = ItemId>,
    ) -> Self {
        let mut counts: BTreeMap<ItemId, usize> = universe.into_iter().map(|id| (id, 0)).collect();
        for tuple in &tuples {
            for &id in tuple {
                *counts.entry(id).or_insert(0) += 1;
            }
        }
        Self {
            tuples,
            config,
            balance: BalanceReport { counts, relaxed },
        }
    }

    pub fn tuples(&self) -> &[Vec<ItemId>] {
        &self.tuples
    }

    pub fn tuple(&self, index: usize) -> Option<&[ItemId]> {
        self.tuples.get(index).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn config(&self) -> &DesignConfig {
        &self.config
    }

    pub fn balance(&self) -> &BalanceReport {
        &self.balance
    }

    /// Every item known to the design, in id order.
    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.balance.counts.keys().copied()
    }

    /// Mutable access for tests and tools that hand-edit designs. Appearance
    /// counts are not updated.
    pub fn tuples_mut(&mut self) -> &mut Vec<Vec<ItemId>> {
        &mut self.tuples
    }
}

/// Binomial coefficient, saturating at `u128::MAX`.
fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Generates a randomized design for `items` under `config`.
pub fn generate_design(items: &ItemSet, config: &DesignConfig) -> Result<TupleDesign, DesignError> {
    config.validate()?;
    let n = config.tuple_size;
    let k = config.appearances_per_item;
    let item_count = items.len();
    if item_count < n {
        return Err(DesignError::InfeasibleDesign(format!(
            "{item_count} items cannot fill a tuple of size {n}"
        )));
    }

    let slots = k * item_count;
    let tuple_count = slots.div_ceil(n);
    let pad = tuple_count * n - slots;
    if pad > 0 && !config.allow_relaxed_balance {
        return Err(DesignError::InvalidConfig(format!(
            "{k} x {item_count} appearances are not divisible by tuple size {n}"
        )));
    }

    if (tuple_count as u128) > binomial(item_count, n) {
        return Err(DesignError::InfeasibleDesign(format!(
            "{tuple_count} distinct tuples requested but only {} exist",
            binomial(item_count, n)
        )));
    }
    // Each (max_overlap + 1)-subset may belong to at most one tuple.
    let sub = config.max_overlap + 1;
    let needed = (tuple_count as u128).saturating_mul(binomial(n, sub));
    if needed > binomial(item_count, sub) {
        return Err(DesignError::InfeasibleDesign(format!(
            "{tuple_count} tuples need {needed} distinct {sub}-subsets but only {} exist",
            binomial(item_count, sub)
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let ids = items.ids();

    let mut stream: Vec<u32> = Vec::with_capacity(tuple_count * n);
    let mut order: Vec<u32> = (0..item_count as u32).collect();
    for _ in 0..k {
        order.shuffle(&mut rng);
        stream.extend_from_slice(&order);
    }
    if pad > 0 {
        let tail_start = stream.len() - (stream.len() % n);
        let tail: BTreeSet<u32> = stream[tail_start..].iter().copied().collect();
        let mut extra: Vec<u32> = (0..item_count as u32).filter(|i| !tail.contains(i)).collect();
        extra.shuffle(&mut rng);
        stream.extend_from_slice(&extra[..pad]);
    }

    let tuples: Vec<Vec<u32>> = stream.chunks(n).map(<[u32]>::to_vec).collect();
    let mut repairer = Repairer::new(tuples, item_count, config.max_overlap);
    let remaining = repairer.repair(&mut rng, config.repair_attempts);
    if remaining > 0 {
        return Err(DesignError::InfeasibleDesign(format!(
            "{remaining} tuples still violate constraints after {} repair attempts",
            config.repair_attempts
        )));
    }

    let mut tuples = repairer.tuples;
    for tuple in &mut tuples {
        tuple.shuffle(&mut rng);
    }
    let tuples = tuples
        .into_iter()
        .map(|t| t.into_iter().map(|i| ids[i as usize]).collect())
        .collect();
    Ok(TupleDesign::from_parts(tuples, config.clone(), pad > 0, ids.iter().copied()))
}

/// Local-search state over dense item indices.
struct Repairer {
    tuples: Vec<Vec<u32>>,
    /// item -> tuples holding it, one entry per slot
    membership: Vec<Vec<usize>>,
    max_overlap: usize,
    bad: BTreeSet<usize>,
}

impl Repairer {
    fn new(tuples: Vec<Vec<u32>>, item_count: usize, max_overlap: usize) -> Self {
        let mut membership = vec![Vec::new(); item_count];
        for (t, tuple) in tuples.iter().enumerate() {
            for &x in tuple {
                membership[x as usize].push(t);
            }
        }
        let mut repairer = Self {
            tuples,
            membership,
            max_overlap,
            bad: BTreeSet::new(),
        };
        for t in 0..repairer.tuples.len() {
            if repairer.local_cost(t) > 0 {
                repairer.bad.insert(t);
            }
        }
        repairer
    }

    fn repeats(&self, t: usize) -> usize {
        let tuple = &self.tuples[t];
        let distinct: BTreeSet<u32> = tuple.iter().copied().collect();
        tuple.len() - distinct.len()
    }

    fn overlap(&self, a: usize, b: usize) -> usize {
        let left: BTreeSet<u32> = self.tuples[a].iter().copied().collect();
        let right: BTreeSet<u32> = self.tuples[b].iter().copied().collect();
        left.intersection(&right).count()
    }

    fn neighbours(&self, t: usize) -> BTreeSet<usize> {
        self.tuples[t]
            .iter()
            .flat_map(|&x| self.membership[x as usize].iter().copied())
            .filter(|&u| u != t)
            .collect()
    }

    fn conflicts(&self, t: usize) -> Vec<usize> {
        self.neighbours(t)
            .into_iter()
            .filter(|&u| self.overlap(t, u) > self.max_overlap)
            .collect()
    }

    fn local_cost(&self, t: usize) -> usize {
        self.repeats(t) + self.conflicts(t).len()
    }

    /// Cost of everything touching `a` or `b`.
    fn pair_cost(&self, a: usize, b: usize) -> usize {
        let shared = usize::from(self.overlap(a, b) > self.max_overlap);
        self.local_cost(a) + self.local_cost(b) - shared
    }

    /// Slots of `t` involved in a repeat or an over-full overlap.
    fn offending_slots(&self, t: usize) -> Vec<usize> {
        let tuple = &self.tuples[t];
        let mut hot: BTreeSet<u32> = BTreeSet::new();
        for (i, x) in tuple.iter().enumerate() {
            if tuple[..i].contains(x) {
                hot.insert(*x);
            }
        }
        for u in self.conflicts(t) {
            hot.extend(self.tuples[u].iter().filter(|x| tuple.contains(x)));
        }
        (0..tuple.len()).filter(|&p| hot.contains(&tuple[p])).collect()
    }

    fn swap(&mut self, t1: usize, p1: usize, t2: usize, p2: usize) {
        let x1 = self.tuples[t1][p1];
        let x2 = self.tuples[t2][p2];
        self.tuples[t1][p1] = x2;
        self.tuples[t2][p2] = x1;
        replace_one(&mut self.membership[x1 as usize], t1, t2);
        replace_one(&mut self.membership[x2 as usize], t2, t1);
    }

    fn refresh(&mut self, touched: &BTreeSet<usize>) {
        for &t in touched {
            if self.local_cost(t) > 0 {
                self.bad.insert(t);
            } else {
                self.bad.remove(&t);
            }
        }
    }

    /// Runs up to `attempts` swap attempts. Returns the number of tuples still
    /// in violation.
    fn repair(&mut self, rng: &mut ChaCha8Rng, attempts: usize) -> usize {
        let tuple_count = self.tuples.len();
        if tuple_count < 2 {
            return self.bad.len();
        }
        for _ in 0..attempts {
            if self.bad.is_empty() {
                break;
            }
            let pick = rng.random_range(0..self.bad.len());
            let t1 = *self.bad.iter().nth(pick).expect("index within set");
            let slots = self.offending_slots(t1);
            let p1 = slots[rng.random_range(0..slots.len())];
            let t2 = loop {
                let u = rng.random_range(0..tuple_count);
                if u != t1 {
                    break u;
                }
            };
            let p2 = rng.random_range(0..self.tuples[t2].len());
            let x1 = self.tuples[t1][p1];
            let x2 = self.tuples[t2][p2];
            if x1 == x2 || self.tuples[t1].contains(&x2) || self.tuples[t2].contains(&x1) {
                continue;
            }

            let before = self.pair_cost(t1, t2);
            let mut touched = self.neighbours(t1);
            touched.extend(self.neighbours(t2));
            self.swap(t1, p1, t2, p2);
            let after = self.pair_cost(t1, t2);
            if after > before {
                self.swap(t1, p1, t2, p2);
                continue;
            }
            touched.extend(self.neighbours(t1));
            touched.extend(self.neighbours(t2));
            touched.insert(t1);
            touched.insert(t2);
            self.refresh(&touched);
        }
        self.bad.len()
    }
}

fn replace_one(list: &mut [usize], from: usize, to: usize) {
    if let Some(slot) = list.iter_mut().find(|t| **t == from) {
        *slot = to;
    }
}

/// One broken design invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    TupleSize { tuple: usize, size: usize, expected: usize },
    RepeatedItem { tuple: usize, item: ItemId },
    Distinctness { first: usize, second: usize },
    Overlap { first: usize, second: usize, shared: usize },
    Balance { item: ItemId, count: usize, expected: usize },
    /// More items carry an extra appearance than relaxed balance allows.
    RelaxedBalance { extra_items: usize, allowed: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::TupleSize { tuple, size, expected } => {
                write!(f, "size: tuple {tuple} has {size} items, expected {expected}")
            }
            Violation::RepeatedItem { tuple, item } => {
                write!(f, "repeat: tuple {tuple} holds item {item} more than once")
            }
            Violation::Distinctness { first, second } => {
                write!(f, "distinctness: tuples {first} and {second} hold the same items")
            }
            Violation::Overlap { first, second, shared } => {
                write!(f, "overlap: tuples {first} and {second} share {shared} items")
            }
            Violation::Balance { item, count, expected } => {
                write!(f, "balance: item {item} appears {count} times, expected {expected}")
            }
            Violation::RelaxedBalance { extra_items, allowed } => write!(
                f,
                "balance: {extra_items} items appear an extra time, at most {allowed} allowed"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every design invariant by brute force over all tuple pairs.
pub fn validate_design(design: &TupleDesign) -> ValidationReport {
    let config = design.config();
    let n = config.tuple_size;
    let k = config.appearances_per_item;
    let mut violations = Vec::new();

    let sets: Vec<Vec<ItemId>> = design
        .tuples()
        .iter()
        .map(|t| {
            let mut set = t.clone();
            set.sort_unstable();
            set.dedup();
            set
        })
        .collect();

    for (i, tuple) in design.tuples().iter().enumerate() {
        if tuple.len() != n {
            violations.push(Violation::TupleSize { tuple: i, size: tuple.len(), expected: n });
        }
        let mut seen = BTreeSet::new();
        for &item in tuple {
            if !seen.insert(item) {
                violations.push(Violation::RepeatedItem { tuple: i, item });
            }
        }
    }

    for i in 0..sets.len() {
        for j in (i + 1)..sets.len() {
            if sets[i] == sets[j] {
                violations.push(Violation::Distinctness { first: i, second: j });
                continue;
            }
            let shared = sorted_intersection(&sets[i], &sets[j]);
            if shared > config.max_overlap {
                violations.push(Violation::Overlap { first: i, second: j, shared });
            }
        }
    }

    let mut counts: BTreeMap<ItemId, usize> = design.items().map(|id| (id, 0)).collect();
    for tuple in design.tuples() {
        for &item in tuple {
            *counts.entry(item).or_insert(0) += 1;
        }
    }
    let relaxed = design.balance().relaxed;
    let mut extra_items = 0;
    for (&item, &count) in &counts {
        if count == k {
            continue;
        }
        if relaxed && count == k + 1 {
            extra_items += 1;
            continue;
        }
        violations.push(Violation::Balance { item, count, expected: k });
    }
    if extra_items > n - 1 {
        violations.push(Violation::RelaxedBalance { extra_items, allowed: n - 1 });
    }

    ValidationReport { violations }
}

fn sorted_intersection(a: &[ItemId], b: &[ItemId]) -> usize {
    let (mut i, mut j, mut shared) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared
}
