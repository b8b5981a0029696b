//! Problem-instance types: the file catalog, the user population, placements
//! and demand scenarios.
//!
//! File and user indices are zero-based throughout the crate. Sizes are bits,
//! stored as reals; unit conversion (kbit and friends) belongs to callers.

use thiserror::Error;

/// Absolute tolerance on the popularity sum before renormalization is refused.
pub const POPULARITY_SUM_TOL: f64 = 1e-9;

/// Relative slack on the cache budget granted to solver output.
pub const BUDGET_REL_SLACK: f64 = 1e-9;

/// Absolute slack on `0 <= q_n <= 1`.
pub const FRACTION_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("length mismatch: {popularity} popularities vs {sizes} sizes")]
    LengthMismatch { popularity: usize, sizes: usize },
    #[error("catalog must contain at least one file")]
    EmptyCatalog,
    #[error("{what}[{index}] = {value} must be positive and finite")]
    NonPositiveValue { what: &'static str, index: usize, value: f64 },
    #[error("popularities sum to {sum}, more than {POPULARITY_SUM_TOL} away from 1")]
    PopularityNotNormalized { sum: f64 },
    #[error("population must contain at least one user")]
    NoUsers,
    #[error("activity probability of user {user} is {value}, outside [0, 1]")]
    ActivityOutOfRange { user: usize, value: f64 },
    #[error("Zipf exponent {0} must be finite and nonnegative")]
    BadZipfExponent(f64),
    #[error("invalid demand scenario: {0}")]
    InvalidScenario(String),
}

/// N files in canonical order: popularity non-increasing, ties broken by
/// size non-increasing, remaining ties by input position.
#[derive(Debug, Clone, PartialEq)]
pub struct FileCatalog {
    popularity: Vec<f64>,
    sizes: Vec<f64>,
}

impl FileCatalog {
    pub fn n_files(&self) -> usize {
        self.popularity.len()
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    pub fn sizes(&self) -> &[f64] {
        &self.sizes
    }

    pub fn total_size(&self) -> f64 {
        self.sizes.iter().sum()
    }

    /// True when every file has the same size (exact comparison).
    pub fn has_uniform_sizes(&self) -> bool {
        self.sizes.windows(2).all(|w| w[0] == w[1])
    }
}

/// Builds a catalog in canonical order.
///
/// Returns the catalog together with the permutation that was applied:
/// `perm[i]` is the input position of canonical file `i`.
pub fn build_catalog(
    popularity: &[f64],
    sizes: &[f64],
) -> Result<(FileCatalog, Vec<usize>), ModelError> {
    if popularity.len() != sizes.len() {
        return Err(ModelError::LengthMismatch { popularity: popularity.len(), sizes: sizes.len() });
    }
    if popularity.is_empty() {
        return Err(ModelError::EmptyCatalog);
    }
    for (what, values) in [("popularity", popularity), ("size", sizes)] {
        if let Some((index, &value)) =
            values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(ModelError::NonPositiveValue { what, index, value });
        }
    }
    let sum: f64 = popularity.iter().sum();
    if (sum - 1.0).abs() > POPULARITY_SUM_TOL {
        return Err(ModelError::PopularityNotNormalized { sum });
    }

    let mut perm: Vec<usize> = (0..popularity.len()).collect();
    perm.sort_by(|&a, &b| {
        popularity[b]
            .total_cmp(&popularity[a])
            .then(sizes[b].total_cmp(&sizes[a]))
            .then(a.cmp(&b))
    });
    let mut p: Vec<f64> = perm.iter().map(|&i| popularity[i]).collect();
    let f: Vec<f64> = perm.iter().map(|&i| sizes[i]).collect();
    // Rescaling can break exact popularity ties only if they were not ties.
    if sum != 1.0 {
        p.iter_mut().for_each(|v| *v /= sum);
    }
    Ok((FileCatalog { popularity: p, sizes: f }, perm))
}

/// Zipf popularity `p_n = n^-theta / sum_i i^-theta` for `n = 1..=n_files`.
pub fn zipf_popularity(n_files: usize, theta: f64) -> Result<Vec<f64>, ModelError> {
    if n_files == 0 {
        return Err(ModelError::EmptyCatalog);
    }
    if !(theta.is_finite() && theta >= 0.0) {
        return Err(ModelError::BadZipfExponent(theta));
    }
    let raw: Vec<f64> = (1..=n_files).map(|n| (n as f64).powf(-theta)).collect();
    let norm: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / norm).collect())
}

/// K users with independent activity probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct UserPopulation {
    activity: Vec<f64>,
}

impl UserPopulation {
    pub fn new(activity: Vec<f64>) -> Result<Self, ModelError> {
        if activity.is_empty() {
            return Err(ModelError::NoUsers);
        }
        if let Some((user, &value)) =
            activity.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ModelError::ActivityOutOfRange { user, value });
        }
        Ok(Self { activity })
    }

    /// `n_users` users sharing one activity probability.
    pub fn uniform(n_users: usize, activity: f64) -> Result<Self, ModelError> {
        Self::new(vec![activity; n_users])
    }

    pub fn n_users(&self) -> usize {
        self.activity.len()
    }

    pub fn activity(&self) -> &[f64] {
        &self.activity
    }
}

/// Per-file caching fractions together with the per-user cache budget (bits).
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub q: Vec<f64>,
    pub budget: f64,
}

impl Placement {
    /// Validates `q` against `catalog` and `budget` and wraps it.
    pub fn new(q: Vec<f64>, catalog: &FileCatalog, budget: f64) -> Result<Self, PlacementReport> {
        let report = validate_placement(&q, catalog, budget);
        if report.is_valid() {
            Ok(Self { q, budget })
        } else {
            Err(report)
        }
    }

    /// Bits each user stores.
    pub fn used_bits(&self, catalog: &FileCatalog) -> f64 {
        used_bits(&self.q, catalog)
    }
}

fn used_bits(q: &[f64], catalog: &FileCatalog) -> f64 {
    q.iter().zip(catalog.sizes()).map(|(q, f)| q * f).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlacementViolation {
    WrongLength { expected: usize, got: usize },
    /// `q_n` outside `[0, 1]`; `slack` is the signed distance to the interval (negative).
    FractionOutOfRange { file: usize, value: f64, slack: f64 },
    /// `sum q_n F_n > M`; `slack = M - used` (negative).
    BudgetExceeded { used: f64, budget: f64, slack: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementReport {
    pub violations: Vec<PlacementViolation>,
    /// `M - sum q_n F_n`, reported even when valid.
    pub budget_slack: f64,
}

impl PlacementReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for PlacementReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_valid() {
            return write!(f, "valid placement (budget slack {})", self.budget_slack);
        }
        write!(f, "invalid placement:")?;
        for v in &self.violations {
            match v {
                PlacementViolation::WrongLength { expected, got } => {
                    write!(f, " expected {expected} fractions, got {got};")?
                }
                PlacementViolation::FractionOutOfRange { file, value, .. } => {
                    write!(f, " q[{file}] = {value} outside [0, 1];")?
                }
                PlacementViolation::BudgetExceeded { used, budget, slack } => {
                    write!(f, " uses {used} bits of {budget} (exceeded by {});", -slack)?
                }
            }
        }
        Ok(())
    }
}

impl std::error::Error for PlacementReport {}

/// Checks `0 <= q_n <= 1` and `sum_n q_n F_n <= M` (with relative slack).
pub fn validate_placement(q: &[f64], catalog: &FileCatalog, budget: f64) -> PlacementReport {
    let mut violations = Vec::new();
    if q.len() != catalog.n_files() {
        violations.push(PlacementViolation::WrongLength { expected: catalog.n_files(), got: q.len() });
        return PlacementReport { violations, budget_slack: f64::NAN };
    }
    for (file, &value) in q.iter().enumerate() {
        let slack = if value.is_nan() {
            f64::NEG_INFINITY
        } else {
            value.min(1.0 - value)
        };
        if slack < -FRACTION_TOL {
            violations.push(PlacementViolation::FractionOutOfRange { file, value, slack });
        }
    }
    let used = used_bits(q, catalog);
    let budget_slack = budget - used;
    if budget_slack < -BUDGET_REL_SLACK * budget.abs() || budget_slack.is_nan() {
        violations.push(PlacementViolation::BudgetExceeded { used, budget, slack: budget_slack });
    }
    PlacementReport { violations, budget_slack }
}

/// An active user set with the file requested by each active user.
///
/// `active` is strictly increasing; `demands[i]` is the file requested by
/// user `active[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DemandScenario {
    active: Vec<usize>,
    demands: Vec<usize>,
}

impl DemandScenario {
    /// Builds a scenario; `n_files` bounds the requested file indices.
    pub fn new(active: Vec<usize>, demands: Vec<usize>, n_files: usize) -> Result<Self, ModelError> {
        if active.len() != demands.len() {
            return Err(ModelError::InvalidScenario(format!(
                "{} active users but {} demands",
                active.len(),
                demands.len()
            )));
        }
        if active.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::InvalidScenario("active set must be strictly increasing".into()));
        }
        if let Some(&d) = demands.iter().find(|&&d| d >= n_files) {
            return Err(ModelError::InvalidScenario(format!(
                "file index {d} out of range for {n_files} files"
            )));
        }
        Ok(Self { active, demands })
    }

    /// Scenario over users `0..demands.len()`.
    pub fn with_users_in_order(demands: Vec<usize>, n_files: usize) -> Result<Self, ModelError> {
        Self::new((0..demands.len()).collect(), demands, n_files)
    }

    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn demands(&self) -> &[usize] {
        &self.demands
    }

    /// Number of active users `A`.
    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// File requested by `user`, if active.
    pub fn demand_of(&self, user: usize) -> Option<usize> {
        self.active.binary_search(&user).ok().map(|i| self.demands[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIXED_N6_POP: [f64; 6] = [0.4643, 0.2021, 0.1242, 0.088, 0.0673, 0.0541];
    const MIXED_N6_KBIT: [f64; 6] = [0.1667, 0.3333, 0.5, 0.8333, 1.0, 0.6667];

    #[test]
    fn sorts_by_popularity() {
        let (cat, perm) = build_catalog(&[0.2, 0.8], &[1.0, 2.0]).unwrap();
        assert_eq!(cat.popularity(), &[0.8, 0.2]);
        assert_eq!(cat.sizes(), &[2.0, 1.0]);
        assert_eq!(perm, vec![1, 0]);
    }

    #[test]
    fn popularity_tie_prefers_larger_file() {
        let (cat, perm) = build_catalog(&[0.5, 0.5], &[1.0, 2.0]).unwrap();
        assert_eq!(cat.sizes(), &[2.0, 1.0]);
        assert_eq!(perm, vec![1, 0]);
    }

    #[test]
    fn full_tie_keeps_input_order() {
        let (_, perm) = build_catalog(&[0.25; 4], &[3.0; 4]).unwrap();
        assert_eq!(perm, vec![0, 1, 2, 3]);
    }

    #[test]
    fn mixed_six_files_already_canonical() {
        let sizes: Vec<f64> = MIXED_N6_KBIT.iter().map(|k| k * 1000.0).collect();
        let (cat, perm) = build_catalog(&MIXED_N6_POP, &sizes).unwrap();
        assert_eq!(perm, (0..6).collect::<Vec<_>>());
        assert_eq!(cat.sizes(), sizes.as_slice());
        // these popularities sum to exactly 1 to four decimals
        assert!((cat.popularity().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn catalog_errors() {
        assert_eq!(
            build_catalog(&[1.0], &[1.0, 2.0]),
            Err(ModelError::LengthMismatch { popularity: 1, sizes: 2 })
        );
        assert_eq!(build_catalog(&[], &[]), Err(ModelError::EmptyCatalog));
        assert!(matches!(
            build_catalog(&[0.5, 0.5], &[1.0, 0.0]),
            Err(ModelError::NonPositiveValue { what: "size", index: 1, .. })
        ));
        assert!(matches!(
            build_catalog(&[1.5, -0.5], &[1.0, 1.0]),
            Err(ModelError::NonPositiveValue { what: "popularity", index: 1, .. })
        ));
        assert!(matches!(
            build_catalog(&[0.5, 0.6], &[1.0, 1.0]),
            Err(ModelError::PopularityNotNormalized { .. })
        ));
    }

    #[test]
    fn small_normalization_error_is_absorbed() {
        let (cat, _) = build_catalog(&[0.5 + 4e-10, 0.5], &[1.0, 1.0]).unwrap();
        assert!((cat.popularity().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zipf_examples() {
        assert_eq!(zipf_popularity(1, 1.2).unwrap(), vec![1.0]);
        assert_eq!(zipf_popularity(2, 0.0).unwrap(), vec![0.5, 0.5]);
        let p = zipf_popularity(6, 1.2).unwrap();
        for (got, want) in p.iter().zip(MIXED_N6_POP) {
            assert!((got - want).abs() < 5e-5, "{got} vs {want}");
        }
        assert!(zipf_popularity(0, 1.0).is_err());
        assert!(zipf_popularity(3, -1.0).is_err());
    }

    #[test]
    fn placement_examples() {
        let (cat, _) = build_catalog(&[0.7, 0.3], &[2.0, 2.0]).unwrap();
        assert!(validate_placement(&[0.0, 0.0], &cat, 0.0).is_valid());

        let full = validate_placement(&[1.0, 1.0], &cat, 4.0);
        assert!(full.is_valid());
        assert_eq!(full.budget_slack, 0.0);

        let over = validate_placement(&[0.5, 0.9], &cat, 2.0);
        assert!(!over.is_valid());
        match &over.violations[..] {
            [PlacementViolation::BudgetExceeded { used, slack, .. }] => {
                assert!((used - 2.8).abs() < 1e-12);
                assert!((slack + 0.8).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }

        let range = validate_placement(&[1.2, -0.1], &cat, 10.0);
        assert_eq!(range.violations.len(), 2);
        assert!(validate_placement(&[0.1], &cat, 10.0).violations.len() == 1);
    }

    #[test]
    fn scenario_validation() {
        assert!(DemandScenario::new(vec![0, 2], vec![1, 1], 2).is_ok());
        assert!(DemandScenario::new(vec![2, 0], vec![1, 1], 2).is_err());
        assert!(DemandScenario::new(vec![0, 1], vec![1], 2).is_err());
        assert!(DemandScenario::new(vec![0], vec![5], 2).is_err());
        let d = DemandScenario::new(vec![1, 4], vec![0, 1], 2).unwrap();
        assert_eq!(d.demand_of(4), Some(1));
        assert_eq!(d.demand_of(2), None);
    }

    #[test]
    fn population_validation() {
        assert!(UserPopulation::new(vec![]).is_err());
        assert!(UserPopulation::new(vec![0.5, 1.1]).is_err());
        assert_eq!(UserPopulation::uniform(3, 0.5).unwrap().n_users(), 3);
    }
}
