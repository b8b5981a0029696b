//! Successive GP driver.
//!
//! Starting from a feasible `(q, x)`, each iteration condenses the
//! complement constraints at the current point and solves the resulting GP.
//! The previous solution stays feasible for the next subproblem, so the
//! objective never increases; iterations stop once it changes by less than
//! `outer_tol`.

use super::condense::condense;
use super::problem::{build_p1, build_p4, build_scheme_program, GpProblem, MessageSet, VarRole};
use super::solver::{solve_gp, SolverConfig};
use super::GpError;
use crate::model::{build_catalog, validate_placement, FileCatalog, UserPopulation};
use crate::rate::{average_rate, Scheme};

/// Allowed shortfall of `q + x` below one after a condensed solve; covers the
/// solver's primal tolerance.
const SOUNDNESS_TOL: f64 = 1e-6;

/// Which average rate is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GpTarget {
    /// Modified scheme (non-redundant messages only).
    P0Dmccs,
    /// Decentralized lower bound.
    P3LowerBound,
    /// Original scheme (all subsets).
    P0Dccs,
}

impl GpTarget {
    pub fn scheme(self) -> Scheme {
        match self {
            GpTarget::P0Dmccs => Scheme::Dmccs,
            GpTarget::P3LowerBound => Scheme::LowerBound,
            GpTarget::P0Dccs => Scheme::Dccs,
        }
    }

    fn build(self, catalog: &FileCatalog, users: &UserPopulation, budget: f64) -> Result<GpProblem, GpError> {
        match self {
            GpTarget::P0Dmccs => build_p1(catalog, users, budget),
            GpTarget::P3LowerBound => build_p4(catalog, users, budget),
            GpTarget::P0Dccs => build_scheme_program(catalog, users, budget, MessageSet::AllSubsets),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessiveResult {
    pub q: Vec<f64>,
    /// Average rate of the target scheme at `q`, evaluated by the rate module.
    pub rate: f64,
    /// Objective of the (unconvexified) program at `q` with `x = 1 - q` and
    /// every epigraph variable tight, in the catalog's size unit.
    pub gp_objective: f64,
    /// Condensed-GP optimum after each outer iteration. Each value bounds
    /// the true rate at that iterate from above.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Symmetric interior starting point.
pub fn default_initial_q(catalog: &FileCatalog, budget: f64) -> Vec<f64> {
    let share = (budget / catalog.total_size()).clamp(0.0, 1.0) * 0.99;
    vec![share; catalog.n_files()]
}

/// Minimizes the target's average rate over placements with `sum q F <= M`.
pub fn successive_gp(
    target: GpTarget,
    catalog: &FileCatalog,
    users: &UserPopulation,
    budget: f64,
    config: &SolverConfig,
) -> Result<SuccessiveResult, GpError> {
    config.validate()?;
    let n = catalog.n_files();
    let scheme = target.scheme();
    if !(budget > 0.0) || budget >= catalog.total_size() {
        let q = vec![if budget > 0.0 { 1.0 } else { 0.0 }; n];
        let rate = average_rate(scheme, &q, catalog, users)?.average_rate;
        return Ok(SuccessiveResult { q, rate, gp_objective: rate, trace: vec![rate], iterations: 0, converged: true });
    }

    let q0 = match &config.initial_q {
        Some(q) => {
            let report = validate_placement(q, catalog, budget);
            if !report.is_valid() {
                return Err(GpError::Config(format!("initial_q: {report}")));
            }
            q.clone()
        }
        None => default_initial_q(catalog, budget),
    };

    // Work in units of the largest file so the tolerances are scale free.
    let unit = catalog.sizes().iter().copied().fold(0.0, f64::max);
    let scaled_sizes: Vec<f64> = catalog.sizes().iter().map(|f| f / unit).collect();
    let (scaled, perm) = build_catalog(catalog.popularity(), &scaled_sizes)?;
    debug_assert!(perm.iter().enumerate().all(|(i, p)| i == *p));
    let gp = target.build(&scaled, users, budget / unit)?;

    let floor = config.var_bounds.0 * 10.0;
    let mut anchor_q: Vec<f64> = q0.iter().map(|v| v.clamp(floor, 1.0 - 1e-9)).collect();
    let mut anchor_x: Vec<f64> = anchor_q.iter().map(|v| 1.0 - v + 1e-6).collect();
    let mut start = initial_assignment(&gp, &anchor_q, &anchor_x);

    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut values = start.clone();
    for iteration in 1..=config.max_outer {
        iterations = iteration;
        let sub = condense(&gp, &anchor_q, &anchor_x)?;
        let sol = match solve_gp(&sub, config, Some(&start)) {
            Ok(sol) => sol,
            // every completed iterate is feasible; keep the last one
            Err(e @ (GpError::MaxIterations { .. } | GpError::NumericalBreakdown(_))) if !trace.is_empty() => {
                log::warn!("{target:?} M={budget}: inner solve failed at iteration {iteration} ({e}); keeping the previous iterate");
                break;
            }
            Err(e) => return Err(e),
        };
        values = sol.values;
        for file in 0..n {
            let q = values[gp.fraction_var(file).expect("q registered").0];
            let x = values[gp.complement_var(file).expect("x registered").0];
            let violation = 1.0 - (q + x);
            if violation > SOUNDNESS_TOL {
                return Err(GpError::UnsoundCondensation { file, violation });
            }
            anchor_q[file] = q;
            anchor_x[file] = x;
        }
        let objective = sol.objective;
        let gap = sol.duality_gap;
        if let Some(&previous) = trace.last() {
            if objective > previous + 10.0 * config.inner_tol * previous.abs().max(1e-12) {
                return Err(GpError::NonMonotoneTrace { iteration, previous: previous * unit, current: objective * unit });
            }
        }
        log::info!(
            "{target:?} M={budget}: iteration {iteration}, objective {:.10}, duality gap {gap:.3e}",
            objective * unit
        );
        let done = trace.last().is_some_and(|&p| (p - objective).abs() < config.outer_tol);
        trace.push(objective);
        start = values.clone();
        if done {
            converged = true;
            break;
        }
    }
    if !converged {
        iterations = trace.len();
        log::warn!("{target:?} M={budget}: stopped after {iterations} outer iterations without converging");
    }

    let mut q: Vec<f64> = (0..n).map(|f| values[gp.fraction_var(f).unwrap().0].clamp(0.0, 1.0)).collect();
    // The interior-point solution may exceed the budget by its primal
    // tolerance; scale back onto it.
    let used: f64 = q.iter().zip(catalog.sizes()).map(|(a, b)| a * b).sum();
    if used > budget {
        q.iter_mut().for_each(|v| *v *= budget / used);
    }
    let report = validate_placement(&q, catalog, budget);
    if !report.is_valid() {
        return Err(GpError::NumericalBreakdown(format!("optimized placement invalid: {report}")));
    }
    let rate = average_rate(scheme, &q, catalog, users)?.average_rate;
    let x: Vec<f64> = q.iter().map(|v| 1.0 - v).collect();
    Ok(SuccessiveResult {
        gp_objective: tight_objective(&gp, &q, &x) * unit,
        q,
        rate,
        trace: trace.into_iter().map(|v| v * unit).collect(),
        iterations,
        converged,
    })
}

/// Feasible values for every variable: the given `q` and `x`, and each
/// epigraph variable at twice the largest term bound it must dominate.
fn initial_assignment(gp: &GpProblem, q: &[f64], x: &[f64]) -> Vec<f64> {
    let mut values = vec![1.0; gp.n_vars()];
    for (i, role) in gp.variables.iter().enumerate() {
        match role {
            VarRole::Fraction(n) => values[i] = q[*n],
            VarRole::Complement(n) => values[i] = x[*n],
            _ => {}
        }
    }
    let base = values.clone();
    for c in &gp.constraints {
        let lhs = c.eval(&base);
        for v in c.variables() {
            if !matches!(gp.variables[v.0], VarRole::Fraction(_) | VarRole::Complement(_)) {
                values[v.0] = values[v.0].max(2.0 * lhs);
            }
        }
    }
    values
}

/// Objective at the given `(q, x)` with each epigraph variable set to the
/// smallest value its constraints allow.
pub fn tight_objective(gp: &GpProblem, q: &[f64], x: &[f64]) -> f64 {
    let mut values = vec![1.0; gp.n_vars()];
    let mut is_epigraph = vec![false; gp.n_vars()];
    for (i, role) in gp.variables.iter().enumerate() {
        match role {
            VarRole::Fraction(n) => values[i] = q[*n],
            VarRole::Complement(n) => values[i] = x[*n],
            _ => is_epigraph[i] = true,
        }
    }
    let base = values.clone();
    let mut tight = vec![0.0f64; gp.n_vars()];
    for c in &gp.constraints {
        // epigraph variables enter their constraints with exponent -1
        let lhs = c.eval(&base);
        for v in c.variables() {
            if is_epigraph[v.0] {
                tight[v.0] = tight[v.0].max(lhs);
            }
        }
    }
    for (i, e) in is_epigraph.iter().enumerate() {
        if *e {
            values[i] = tight[i];
        }
    }
    gp.objective.eval(&values)
}
