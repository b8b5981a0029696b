//! Two-group placements: the popularity-first, size-aware (PF-SA) placement
//! with its closed-form average rate, and the popularity-first (PF) and
//! size-first (SF) baselines.
//!
//! All three split the catalog into a cached group of `n1` files and an
//! uncached remainder; they differ in how the cache is shared inside the
//! first group.

use crate::combinatorics::{binomial, count_distinct, enumerate_active_sets, for_each_demand, leader_mask};
use crate::model::{FileCatalog, UserPopulation};
use crate::rate::{average_rate, expectation_terms, RateError, Scheme, MAX_EXPECTATION_TERMS};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("n1 = {n1} is outside 1..={n_files}")]
    N1OutOfRange { n1: usize, n_files: usize },
    #[error("first {n1} files hold {group_size} bits, less than the cache size {budget}")]
    CacheUnderuse { n1: usize, group_size: f64, budget: f64 },
    #[error("file sizes differ")]
    NonuniformSizes,
    #[error("cache size {0} is negative or not finite")]
    BadBudget(f64),
    #[error(transparent)]
    Rate(#[from] RateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    PfSa,
    Pf,
    Sf,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::PfSa => "pfsa",
            Strategy::Pf => "pf",
            Strategy::Sf => "sf",
        }
    }
}

/// A two-group placement. `q` is in canonical catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoGroupPlacement {
    pub n1: usize,
    pub q: Vec<f64>,
    pub strategy: Strategy,
    /// Set when the first group is smaller than the cache (PF-SA only,
    /// produced by [`pfsa_placement_unchecked`]).
    pub underuse: bool,
}

/// Result of a search over `n1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoGroupSearch {
    pub placement: TwoGroupPlacement,
    pub rate: f64,
    /// Average rate for each `n1 = 1..=N`; `None` where the candidate was
    /// skipped.
    pub rates: Vec<Option<f64>>,
}

fn check_inputs(n1: usize, catalog: &FileCatalog, budget: f64) -> Result<(), StrategyError> {
    if n1 == 0 || n1 > catalog.n_files() {
        return Err(StrategyError::N1OutOfRange { n1, n_files: catalog.n_files() });
    }
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(StrategyError::BadBudget(budget));
    }
    Ok(())
}

/// Common caching fraction of the first group, `min(1, M / sum_{n<=n1} F_n)`.
fn pfsa_fraction(n1: usize, catalog: &FileCatalog, budget: f64) -> f64 {
    let group: f64 = catalog.sizes()[..n1].iter().sum();
    (budget / group).min(1.0)
}

/// PF-SA placement: the `n1` most popular files share the cache in
/// proportion to their sizes; the rest are not cached.
///
/// Rejects `n1 < N` whose first group cannot absorb the whole cache.
pub fn pfsa_placement(n1: usize, catalog: &FileCatalog, budget: f64) -> Result<TwoGroupPlacement, StrategyError> {
    let p = pfsa_placement_unchecked(n1, catalog, budget)?;
    if p.underuse {
        let group_size = catalog.sizes()[..n1].iter().sum();
        return Err(StrategyError::CacheUnderuse { n1, group_size, budget });
    }
    Ok(p)
}

/// As [`pfsa_placement`] but flags cache underuse instead of failing.
pub fn pfsa_placement_unchecked(
    n1: usize,
    catalog: &FileCatalog,
    budget: f64,
) -> Result<TwoGroupPlacement, StrategyError> {
    check_inputs(n1, catalog, budget)?;
    let n = catalog.n_files();
    let group: f64 = catalog.sizes()[..n1].iter().sum();
    let fraction = pfsa_fraction(n1, catalog, budget);
    let q = (0..n).map(|i| if i < n1 { fraction } else { 0.0 }).collect();
    Ok(TwoGroupPlacement { n1, q, strategy: Strategy::PfSa, underuse: group < budget && n1 < n })
}

/// Exact expectation of a per-demand function over active sets and demands.
fn expectation(
    catalog: &FileCatalog,
    users: &UserPopulation,
    per_demand: impl Fn(&[usize]) -> f64 + Sync,
) -> Result<f64, StrategyError> {
    let terms = expectation_terms(catalog.n_files(), users.n_users());
    if terms > MAX_EXPECTATION_TERMS {
        return Err(RateError::EnumerationTooLarge { terms }.into());
    }
    let sets = enumerate_active_sets(users).map_err(RateError::from)?;
    let partials: Vec<f64> = sets
        .par_iter()
        .filter(|set| !set.users.is_empty() && set.probability > 0.0)
        .map(|set| {
            let mut sum = 0.0;
            for_each_demand(catalog.popularity(), set.users.len(), |d, w| sum += w * per_demand(d));
            set.probability * sum
        })
        .collect();
    Ok(partials.iter().sum())
}

/// Per-demand PF-SA rate: coded messages for non-redundant groups that
/// contain a first-group request, padded to the largest first-group file
/// among them, plus one unicast per distinct uncached file.
fn pfsa_demand_rate(d: &[usize], n1: usize, fraction: f64, sizes: &[f64]) -> f64 {
    let a = d.len();
    let leaders = leader_mask(d);
    let first: u32 = (0..a).filter(|&i| d[i] < n1).fold(0, |m, i| m | 1 << i);
    let mut coded = 0.0;
    if first != 0 {
        for group in (1..(1u32 << a)).filter(|g| g & leaders != 0 && g & first != 0) {
            let s = group.count_ones() as usize - 1;
            let largest = (0..a)
                .filter(|&i| (group & first) >> i & 1 == 1)
                .map(|i| sizes[d[i]])
                .fold(0.0, f64::max);
            coded += fraction.powi(s as i32) * (1.0 - fraction).powi((a - s) as i32) * largest;
        }
    }
    let mut uncached: Vec<usize> = d.iter().copied().filter(|&f| f >= n1).collect();
    uncached.sort_unstable();
    uncached.dedup();
    coded + uncached.iter().map(|&f| sizes[f]).sum::<f64>()
}

/// Average D-MCCS rate under PF-SA placement with `n1` cached files.
pub fn pfsa_rate_general(
    n1: usize,
    catalog: &FileCatalog,
    users: &UserPopulation,
    budget: f64,
) -> Result<f64, StrategyError> {
    check_inputs(n1, catalog, budget)?;
    let fraction = pfsa_fraction(n1, catalog, budget);
    let sizes = catalog.sizes();
    expectation(catalog, users, |d| pfsa_demand_rate(d, n1, fraction, sizes))
}

/// Counting form of the per-demand rate for equal file sizes.
fn pfsa_demand_rate_uniform(d: &[usize], n1: usize, fraction: f64, size: f64) -> f64 {
    let a = d.len();
    let second: Vec<usize> = d.iter().copied().filter(|&f| f >= n1).collect();
    let a2 = second.len();
    let nd = count_distinct(d);
    let nd2 = count_distinct(&second);
    let mut rate = nd2 as f64 * size;
    for s in 0..a {
        let all: u64 = (1..=nd).map(|i| binomial(a - i, s)).sum();
        let within_second: u64 = (1..=nd2).map(|i| binomial(a2 - i, s)).sum();
        let groups = (all - within_second) as f64;
        if groups > 0.0 {
            rate += groups * fraction.powi(s as i32) * (1.0 - fraction).powi((a - s) as i32) * size;
        }
    }
    rate
}

/// Average PF-SA rate through the counting form; equal sizes only.
pub fn pfsa_rate_uniform_size(
    n1: usize,
    catalog: &FileCatalog,
    users: &UserPopulation,
    budget: f64,
) -> Result<f64, StrategyError> {
    check_inputs(n1, catalog, budget)?;
    if !catalog.has_uniform_sizes() {
        return Err(StrategyError::NonuniformSizes);
    }
    let fraction = pfsa_fraction(n1, catalog, budget);
    let size = catalog.sizes()[0];
    expectation(catalog, users, |d| pfsa_demand_rate_uniform(d, n1, fraction, size))
}

/// Evaluates every admissible `n1` and returns the best PF-SA placement.
/// Ties go to the smaller `n1`.
pub fn pfsa_search(catalog: &FileCatalog, users: &UserPopulation, budget: f64) -> Result<TwoGroupSearch, StrategyError> {
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(StrategyError::BadBudget(budget));
    }
    let n = catalog.n_files();
    let uniform = catalog.has_uniform_sizes();
    let mut rates = Vec::with_capacity(n);
    for n1 in 1..=n {
        let group: f64 = catalog.sizes()[..n1].iter().sum();
        if group < budget && n1 < n {
            rates.push(None);
            continue;
        }
        let r = if uniform {
            pfsa_rate_uniform_size(n1, catalog, users, budget)?
        } else {
            pfsa_rate_general(n1, catalog, users, budget)?
        };
        rates.push(Some(r));
    }
    let (best, rate) = argmin(&rates).expect("n1 = N is always admissible");
    Ok(TwoGroupSearch { placement: pfsa_placement(best, catalog, budget)?, rate, rates })
}

/// First index attaining the minimum, as `(n1, rate)`.
fn argmin(rates: &[Option<f64>]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rates.iter().enumerate() {
        if let Some(r) = *r {
            if best.map_or(true, |(_, b)| r < b) {
                best = Some((i + 1, r));
            }
        }
    }
    best
}

/// PF baseline for a given `n1`: file `n <= n1` gets
/// `min(M / n1, min_{m <= n} F_m)` bits.
pub fn pf_placement(n1: usize, catalog: &FileCatalog, budget: f64) -> Result<TwoGroupPlacement, StrategyError> {
    check_inputs(n1, catalog, budget)?;
    let sizes = catalog.sizes();
    let share = budget / n1 as f64;
    let mut smallest = f64::INFINITY;
    let q = (0..catalog.n_files())
        .map(|i| {
            smallest = smallest.min(sizes[i]);
            if i < n1 {
                (share.min(smallest) / sizes[i]).min(1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(TwoGroupPlacement { n1, q, strategy: Strategy::Pf, underuse: false })
}

/// Catalog indices ordered by size (largest first), popularity order among
/// equal sizes.
pub fn size_order(catalog: &FileCatalog) -> Vec<usize> {
    let sizes = catalog.sizes();
    let mut order: Vec<usize> = (0..catalog.n_files()).collect();
    order.sort_by(|&a, &b| sizes[b].total_cmp(&sizes[a]).then(a.cmp(&b)));
    order
}

/// SF baseline for a given `n1`: the `n1` largest files each get
/// `min(M / n1, F_n)` bits.
pub fn sf_placement(n1: usize, catalog: &FileCatalog, budget: f64) -> Result<TwoGroupPlacement, StrategyError> {
    check_inputs(n1, catalog, budget)?;
    let sizes = catalog.sizes();
    let share = budget / n1 as f64;
    let mut q = vec![0.0; catalog.n_files()];
    for &i in &size_order(catalog)[..n1] {
        q[i] = (share.min(sizes[i]) / sizes[i]).min(1.0);
    }
    Ok(TwoGroupPlacement { n1, q, strategy: Strategy::Sf, underuse: false })
}

fn baseline_search(
    catalog: &FileCatalog,
    users: &UserPopulation,
    budget: f64,
    place: fn(usize, &FileCatalog, f64) -> Result<TwoGroupPlacement, StrategyError>,
) -> Result<TwoGroupSearch, StrategyError> {
    let n = catalog.n_files();
    let mut rates = Vec::with_capacity(n);
    let mut placements = Vec::with_capacity(n);
    for n1 in 1..=n {
        let p = place(n1, catalog, budget)?;
        rates.push(Some(average_rate(Scheme::Dmccs, &p.q, catalog, users)?.average_rate));
        placements.push(p);
    }
    let (best, rate) = argmin(&rates).expect("at least one file");
    Ok(TwoGroupSearch { placement: placements.swap_remove(best - 1), rate, rates })
}

/// Best PF placement over `n1`, judged by the exact D-MCCS average rate.
pub fn pf_baseline(catalog: &FileCatalog, users: &UserPopulation, budget: f64) -> Result<TwoGroupSearch, StrategyError> {
    baseline_search(catalog, users, budget, pf_placement)
}

/// Best SF placement over `n1`, judged by the exact D-MCCS average rate.
pub fn sf_baseline(catalog: &FileCatalog, users: &UserPopulation, budget: f64) -> Result<TwoGroupSearch, StrategyError> {
    baseline_search(catalog, users, budget, sf_placement)
}
