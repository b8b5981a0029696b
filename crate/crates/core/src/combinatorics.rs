//! Active-set and demand enumeration, leader groups, non-redundant groups and
//! the binomial counting identities used by the rate formulas.
//!
//! Subsets of an active set are handled as bitmasks over *positions* in the
//! active set (bit `i` stands for user `active[i]`), which keeps the inner
//! loops of the rate code allocation-free.

use crate::model::{DemandScenario, UserPopulation};
use std::collections::BTreeMap;
use thiserror::Error;

/// Largest population for which all `2^K` active sets are enumerated.
pub const MAX_ENUMERATED_USERS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CombinatoricsError {
    #[error("{0} users exceeds the enumeration limit of {MAX_ENUMERATED_USERS}")]
    TooManyUsers(usize),
    #[error("leader group of an empty active set")]
    EmptyActiveSet,
    #[error("count_nonredundant({a}, {n_distinct}, {s}) out of range")]
    OutOfRange { a: usize, n_distinct: usize, s: usize },
}

/// Binomial coefficient, zero when `k > n`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 1..=k as u64 {
        acc = acc * (n as u64 - k as u64 + i) / i;
    }
    acc
}

/// One active set with its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSet {
    /// Bitmask over user indices.
    pub mask: u32,
    pub users: Vec<usize>,
    pub probability: f64,
}

/// All `2^K` active sets in bitmask order, with
/// `Pr(A) = prod_{k in A} p_k * prod_{k not in A} (1 - p_k)`.
pub fn enumerate_active_sets(users: &UserPopulation) -> Result<Vec<ActiveSet>, CombinatoricsError> {
    let k = users.n_users();
    if k > MAX_ENUMERATED_USERS {
        return Err(CombinatoricsError::TooManyUsers(k));
    }
    let p = users.activity();
    Ok((0..1u32 << k)
        .map(|mask| {
            let mut probability = 1.0;
            let mut members = Vec::with_capacity(mask.count_ones() as usize);
            for (user, &pk) in p.iter().enumerate() {
                if mask >> user & 1 == 1 {
                    probability *= pk;
                    members.push(user);
                } else {
                    probability *= 1.0 - pk;
                }
            }
            ActiveSet { mask, users: members, probability }
        })
        .collect())
}

/// Calls `f` with every demand vector in `{0..n_files}^len` (odometer order,
/// last position fastest) and its probability `prod_k p_{d_k}`.
pub fn for_each_demand(popularity: &[f64], len: usize, mut f: impl FnMut(&[usize], f64)) {
    let n = popularity.len();
    let mut d = vec![0usize; len];
    loop {
        let prob: f64 = d.iter().map(|&i| popularity[i]).product();
        f(&d, prob);
        let mut pos = len;
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            d[pos] += 1;
            if d[pos] < n {
                break;
            }
            d[pos] = 0;
        }
    }
}

/// Distinct requested files of a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistinctDemand {
    /// Sorted distinct file indices.
    pub files: Vec<usize>,
    /// Number of requests per distinct file.
    pub multiplicity: BTreeMap<usize, usize>,
}

impl DistinctDemand {
    pub fn n_distinct(&self) -> usize {
        self.files.len()
    }
}

pub fn distinct_demand(d: &DemandScenario) -> DistinctDemand {
    let mut multiplicity = BTreeMap::new();
    for &file in d.demands() {
        *multiplicity.entry(file).or_insert(0) += 1;
    }
    DistinctDemand { files: multiplicity.keys().copied().collect(), multiplicity }
}

/// Number of distinct entries of `demands`.
pub(crate) fn count_distinct(demands: &[usize]) -> usize {
    let mut seen: Vec<usize> = demands.to_vec();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

/// A set of active users whose requests are pairwise distinct and cover every
/// requested file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeaderGroup {
    /// Sorted user indices.
    pub leaders: Vec<usize>,
}

impl LeaderGroup {
    /// Bitmask over positions of `d.active()`.
    pub fn position_mask(&self, d: &DemandScenario) -> u32 {
        d.active()
            .iter()
            .enumerate()
            .filter(|(_, u)| self.leaders.binary_search(u).is_ok())
            .fold(0, |m, (i, _)| m | 1 << i)
    }

    /// Checks the leader-group conditions against a scenario.
    pub fn is_valid_for(&self, d: &DemandScenario) -> bool {
        let mut files = Vec::with_capacity(self.leaders.len());
        for &u in &self.leaders {
            match d.demand_of(u) {
                Some(f) => files.push(f),
                None => return false,
            }
        }
        files.sort_unstable();
        let n = files.len();
        files.dedup();
        files.len() == n && files == distinct_demand(d).files
    }
}

/// Lowest-index requesting user for each distinct file.
pub fn canonical_leader_group(d: &DemandScenario) -> Result<LeaderGroup, CombinatoricsError> {
    if d.n_active() == 0 {
        return Err(CombinatoricsError::EmptyActiveSet);
    }
    Ok(LeaderGroup { leaders: leader_positions(d.demands()).iter().map(|&i| d.active()[i]).collect() })
}

/// Positions (into `demands`) of the first requester of each distinct file,
/// in increasing position order.
pub(crate) fn leader_positions(demands: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for (i, &f) in demands.iter().enumerate() {
        if !out.iter().any(|&j| demands[j] == f) {
            out.push(i);
        }
    }
    out
}

pub(crate) fn leader_mask(demands: &[usize]) -> u32 {
    leader_positions(demands).into_iter().fold(0, |m, i| m | 1 << i)
}

/// Every leader group of a scenario (one requester chosen per distinct file),
/// as position masks.
pub fn all_leader_masks(demands: &[usize]) -> Vec<u32> {
    let mut masks = vec![0u32];
    let mut files: Vec<usize> = demands.to_vec();
    files.sort_unstable();
    files.dedup();
    for f in files {
        let requesters: Vec<usize> = (0..demands.len()).filter(|&i| demands[i] == f).collect();
        masks = masks
            .iter()
            .flat_map(|&m| requesters.iter().map(move |&i| m | 1 << i))
            .collect();
    }
    masks
}

/// Users of `active` selected by a position mask.
pub fn users_of_mask(active: &[usize], mask: u32) -> Vec<usize> {
    active.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &u)| u).collect()
}

/// All subsets `S` of the active set with `S ∩ leaders ≠ ∅`, grouped by
/// cardinality (index `s` of the result holds groups of size `s + 1`).
pub fn nonredundant_groups(active: &[usize], leaders: &LeaderGroup) -> Vec<Vec<Vec<usize>>> {
    let a = active.len();
    let lead = active
        .iter()
        .enumerate()
        .filter(|(_, u)| leaders.leaders.contains(u))
        .fold(0u32, |m, (i, _)| m | 1 << i);
    let mut by_size = vec![Vec::new(); a];
    for mask in 1..(1u32 << a) {
        if mask & lead != 0 {
            by_size[mask.count_ones() as usize - 1].push(users_of_mask(active, mask));
        }
    }
    by_size
}

/// Number of non-redundant groups of cardinality `s + 1` among `a` active
/// users with `n_distinct` distinct requests.
///
/// Computes `C(a, s+1) - C(a - n_distinct, s+1)` and the sum
/// `sum_{i=1}^{n_distinct} C(a - i, s)`; the two are asserted equal.
pub fn count_nonredundant(a: usize, n_distinct: usize, s: usize) -> Result<u64, CombinatoricsError> {
    if n_distinct == 0 || n_distinct > a || s >= a {
        return Err(CombinatoricsError::OutOfRange { a, n_distinct, s });
    }
    let difference = binomial(a, s + 1) - binomial(a - n_distinct, s + 1);
    let summed = nonredundant_count_sum(a, n_distinct, s);
    assert_eq!(difference, summed, "counting identity broken at ({a}, {n_distinct}, {s})");
    Ok(difference)
}

/// `sum_{i=1}^{n_distinct} C(a - i, s)`; zero when `n_distinct == 0`.
pub fn nonredundant_count_sum(a: usize, n_distinct: usize, s: usize) -> u64 {
    (1..=n_distinct).map(|i| binomial(a - i, s)).sum()
}
