//! Exact delivery rates of the modified decentralized coded caching scheme
//! (non-redundant groups only), the original scheme (all user subsets), and
//! the per-demand lower bound, plus their expectations over active sets and
//! demands.

use crate::combinatorics::{
    self, binomial, count_distinct, enumerate_active_sets, for_each_demand, leader_mask,
    CombinatoricsError, DistinctDemand, LeaderGroup,
};
use crate::model::{DemandScenario, FileCatalog, UserPopulation};
use rayon::prelude::*;
use std::collections::HashMap;
use thiserror::Error;

/// Upper limit on `N^K * 2^K` for exact expectations.
pub const MAX_EXPECTATION_TERMS: f64 = 1e7;

/// Largest distinct-request count for the permutation search (8! = 40320).
pub const MAX_LB_DISTINCT: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("coded message for an empty user subset")]
    EmptySubset,
    #[error("{distinct} distinct requests exceed the permutation limit ({MAX_LB_DISTINCT})")]
    TooManyPermutations { distinct: usize },
    #[error("exact expectation needs about {terms:e} terms (limit {MAX_EXPECTATION_TERMS:e})")]
    EnumerationTooLarge { terms: f64 },
    #[error("placement has {got} entries for {expected} files")]
    PlacementLength { expected: usize, got: usize },
    #[error(transparent)]
    Combinatorics(#[from] CombinatoricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Coded messages for non-redundant groups only.
    Dmccs,
    /// Coded messages for every nonempty subset of the active users.
    Dccs,
    /// Per-demand lower bound.
    LowerBound,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Dmccs => "DMCCS",
            Scheme::Dccs => "DCCS",
            Scheme::LowerBound => "LOWER_BOUND",
        }
    }
}

/// `q^s (1-q)^(a-s) F`, the expected size of the part of a file cached by
/// exactly `s` given users out of `a` active users. `0^0 = 1`.
pub fn subfile_size(q: f64, size: f64, s: usize, a: usize) -> Result<f64, RateError> {
    if !(0.0..=1.0).contains(&q) || s > a {
        return Err(RateError::OutOfRange(format!("q = {q}, s = {s}, A = {a}")));
    }
    Ok(subfile(q, size, s, a))
}

#[inline]
fn subfile(q: f64, size: f64, s: usize, a: usize) -> f64 {
    q.powi(s as i32) * (1.0 - q).powi((a - s) as i32) * size
}

/// Size of the coded message for the users at `mask` (positions into
/// `demands`): the largest constituent subfile, the others being zero-padded.
#[inline]
pub(crate) fn message_size(demands: &[usize], mask: u32, q: &[f64], sizes: &[f64]) -> f64 {
    let a = demands.len();
    let s = mask.count_ones() as usize - 1;
    let mut best = 0.0f64;
    let mut m = mask;
    while m != 0 {
        let i = m.trailing_zeros() as usize;
        m &= m - 1;
        let f = demands[i];
        best = best.max(subfile(q[f], sizes[f], s, a));
    }
    best
}

/// Message size for a subset of users given by index.
pub fn coded_message_size(
    subset: &[usize],
    d: &DemandScenario,
    q: &[f64],
    catalog: &FileCatalog,
) -> Result<f64, RateError> {
    if subset.is_empty() {
        return Err(RateError::EmptySubset);
    }
    check_len(q, catalog)?;
    let mut mask = 0u32;
    for u in subset {
        let pos = d
            .active()
            .binary_search(u)
            .map_err(|_| RateError::OutOfRange(format!("user {u} is not active")))?;
        mask |= 1 << pos;
    }
    Ok(message_size(d.demands(), mask, q, catalog.sizes()))
}

fn check_len(q: &[f64], catalog: &FileCatalog) -> Result<(), RateError> {
    if q.len() != catalog.n_files() {
        return Err(RateError::PlacementLength { expected: catalog.n_files(), got: q.len() });
    }
    Ok(())
}

pub(crate) fn mccs_rate_with_mask(demands: &[usize], leaders: u32, q: &[f64], sizes: &[f64]) -> f64 {
    let a = demands.len();
    (1..(1u32 << a))
        .filter(|m| m & leaders != 0)
        .map(|m| message_size(demands, m, q, sizes))
        .sum()
}

pub(crate) fn mccs_rate(demands: &[usize], q: &[f64], sizes: &[f64]) -> f64 {
    mccs_rate_with_mask(demands, leader_mask(demands), q, sizes)
}

pub(crate) fn ccs_rate(demands: &[usize], q: &[f64], sizes: &[f64]) -> f64 {
    mccs_rate_with_mask(demands, u32::MAX, q, sizes)
}

/// Total bits sent for one scenario: messages for every non-redundant group
/// of the canonical leader group. Zero for an empty active set.
pub fn rate_mccs_demand(d: &DemandScenario, q: &[f64], catalog: &FileCatalog) -> f64 {
    mccs_rate(d.demands(), q, catalog.sizes())
}

/// As [`rate_mccs_demand`] with an explicit leader group.
pub fn rate_mccs_demand_with_leaders(
    d: &DemandScenario,
    leaders: &LeaderGroup,
    q: &[f64],
    catalog: &FileCatalog,
) -> f64 {
    mccs_rate_with_mask(d.demands(), leaders.position_mask(d), q, catalog.sizes())
}

/// Total bits sent by the original scheme: one message per nonempty subset.
pub fn rate_ccs_demand(d: &DemandScenario, q: &[f64], catalog: &FileCatalog) -> f64 {
    ccs_rate(d.demands(), q, catalog.sizes())
}

/// Lower bound for a set of distinct requests among `a` active users: the
/// maximum over orderings `pi` of the distinct files of
/// `sum_{s<a} sum_i C(a-i, s) q^s (1-q)^(a-s) F` evaluated at file `pi(i)`.
///
/// Every ordering is enumerated.
pub fn rate_lb_demand(
    distinct: &DistinctDemand,
    q: &[f64],
    catalog: &FileCatalog,
    a: usize,
) -> Result<f64, RateError> {
    let n = distinct.n_distinct();
    if n == 0 || n > a {
        return Err(RateError::OutOfRange(format!("{n} distinct requests among {a} users")));
    }
    if n > MAX_LB_DISTINCT {
        return Err(RateError::TooManyPermutations { distinct: n });
    }
    check_len(q, catalog)?;
    Ok(lb_rate(&distinct.files, q, catalog.sizes(), a))
}

/// Weight of placing `file` at (one-based) position `i` of the ordering.
fn lb_weight(file: usize, i: usize, q: &[f64], sizes: &[f64], a: usize) -> f64 {
    (0..a).map(|s| binomial(a - i, s) as f64 * subfile(q[file], sizes[file], s, a)).sum()
}

pub(crate) fn lb_rate(files: &[usize], q: &[f64], sizes: &[f64], a: usize) -> f64 {
    let n = files.len();
    let weight: Vec<Vec<f64>> =
        (1..=n).map(|i| files.iter().map(|&f| lb_weight(f, i, q, sizes, a)).collect()).collect();
    let mut best = f64::NEG_INFINITY;
    for_each_permutation(n, |perm| {
        let v: f64 = perm.iter().enumerate().map(|(i, &j)| weight[i][j]).sum();
        best = best.max(v);
    });
    best
}

/// Calls `f` with every permutation of `0..n` in lexicographic order.
pub fn for_each_permutation(n: usize, mut f: impl FnMut(&[usize])) {
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        f(&perm);
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| perm[i - 1] < perm[i]) else {
            return;
        };
        let j = (i..n).rev().find(|&j| perm[j] > perm[i - 1]).unwrap();
        perm.swap(i - 1, j);
        perm[i..].reverse();
    }
}

/// Rate of one demand scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRate {
    pub active: Vec<usize>,
    pub demands: Vec<usize>,
    /// `Pr(A) * prod_k p_{d_k}`.
    pub weight: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub scheme: Scheme,
    pub average_rate: f64,
    pub per_scenario: Option<Vec<ScenarioRate>>,
}

/// Number of terms of the exact expectation, `N^K 2^K`.
pub fn expectation_terms(n_files: usize, n_users: usize) -> f64 {
    (2.0 * n_files as f64).powi(n_users as i32)
}

/// Exact average rate over all active sets and demand vectors.
pub fn average_rate(
    scheme: Scheme,
    q: &[f64],
    catalog: &FileCatalog,
    users: &UserPopulation,
) -> Result<RateReport, RateError> {
    average_rate_detailed(scheme, q, catalog, users, false)
}

/// As [`average_rate`], optionally retaining every scenario's rate.
pub fn average_rate_detailed(
    scheme: Scheme,
    q: &[f64],
    catalog: &FileCatalog,
    users: &UserPopulation,
    retain_per_scenario: bool,
) -> Result<RateReport, RateError> {
    check_len(q, catalog)?;
    let terms = expectation_terms(catalog.n_files(), users.n_users());
    if terms > MAX_EXPECTATION_TERMS {
        return Err(RateError::EnumerationTooLarge { terms });
    }
    if scheme == Scheme::LowerBound && users.n_users().min(catalog.n_files()) > MAX_LB_DISTINCT {
        return Err(RateError::TooManyPermutations { distinct: users.n_users().min(catalog.n_files()) });
    }
    let sets = enumerate_active_sets(users)?;
    let p = catalog.popularity();
    let sizes = catalog.sizes();

    // One partial sum per active set; summed in bitmask order afterwards so
    // the result does not depend on the thread count.
    let partials: Vec<(f64, Vec<ScenarioRate>)> = sets
        .par_iter()
        .filter(|set| !set.users.is_empty() && set.probability > 0.0)
        .map(|set| {
            let a = set.users.len();
            let mut sum = 0.0;
            let mut kept = Vec::new();
            let mut lb_cache: HashMap<Vec<usize>, f64> = HashMap::new();
            for_each_demand(p, a, |d, w| {
                let r = match scheme {
                    Scheme::Dmccs => mccs_rate(d, q, sizes),
                    Scheme::Dccs => ccs_rate(d, q, sizes),
                    Scheme::LowerBound => {
                        let mut files = d.to_vec();
                        files.sort_unstable();
                        files.dedup();
                        *lb_cache.entry(files).or_insert_with_key(|f| lb_rate(f, q, sizes, a))
                    }
                };
                sum += w * r;
                if retain_per_scenario {
                    kept.push(ScenarioRate {
                        active: set.users.clone(),
                        demands: d.to_vec(),
                        weight: set.probability * w,
                        rate: r,
                    });
                }
            });
            (set.probability * sum, kept)
        })
        .collect();

    let average_rate = partials.iter().map(|(v, _)| v).sum();
    let per_scenario =
        retain_per_scenario.then(|| partials.into_iter().flat_map(|(_, kept)| kept).collect());
    Ok(RateReport { scheme, average_rate, per_scenario })
}

/// Lower-bound rate for a demand vector (grouped by its distinct files).
pub fn rate_lb_scenario(d: &DemandScenario, q: &[f64], catalog: &FileCatalog) -> Result<f64, RateError> {
    if d.n_active() == 0 {
        return Ok(0.0);
    }
    let distinct = combinatorics::distinct_demand(d);
    rate_lb_demand(&distinct, q, catalog, d.n_active())
}

/// Number of distinct entries of a demand vector.
pub fn n_distinct(demands: &[usize]) -> usize {
    count_distinct(demands)
}
