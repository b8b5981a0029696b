//! Log-barrier interior-point solver for standard geometric programs.
//!
//! With `v = exp(y)` the objective becomes a sum of exponentials of affine
//! functions and every constraint `P(v) <= 1` becomes `lse(y) <= 0`, both
//! convex. Each centering step is a damped Newton step on
//! `t f0(y) - sum_j ln(-g_j(y)) - sum_i [ln(y_i - lo) + ln(hi - y_i)]`.
//!
//! Epigraph variables (a variable that only appears alone in objective terms
//! and never shares a constraint with another such variable) contribute a
//! diagonal block to the Newton matrix and are eliminated by a Schur
//! complement, so the dense factorization only involves the remaining
//! "core" variables. For the placement programs that is `2N` variables no
//! matter how many coded messages are modelled.

use super::problem::{ConstraintBody, GpProblem};
use super::GpError;
use nalgebra::{DMatrix, DVector};

/// Tuning for [`solve_gp`] and the successive driver.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Outer stopping rule of the successive driver: change in the average
    /// rate (in units of the largest file) between iterations.
    pub outer_tol: f64,
    /// Relative duality-gap target of each GP solve.
    pub inner_tol: f64,
    pub max_outer: usize,
    /// Newton-step budget of one GP solve (per phase).
    pub max_inner: usize,
    /// Starting placement of the successive driver; `None` picks the
    /// symmetric interior point.
    pub initial_q: Option<Vec<f64>>,
    /// Box every variable is confined to.
    pub var_bounds: (f64, f64),
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            outer_tol: 1e-4,
            inner_tol: 1e-8,
            max_outer: 200,
            max_inner: 500,
            initial_q: None,
            var_bounds: (1e-9, 1e9),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), GpError> {
        let (lo, hi) = self.var_bounds;
        if !(self.outer_tol > 0.0 && self.inner_tol > 0.0 && lo > 0.0 && hi > lo) {
            return Err(GpError::Config(format!("{self:?}")));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(GpError::Config("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpSolution {
    /// Variable values (not logs).
    pub values: Vec<f64>,
    pub objective: f64,
    /// Duality-gap bound `m / t` at termination.
    pub duality_gap: f64,
    pub newton_steps: usize,
}

/// Log-scale slack every constraint gets before the main iterations.
const PHASE1_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
enum VarClass {
    Core(usize),
    Aux(usize),
}

/// `ln(sum_t exp(b_t + a_t . y))` over a few variables.
#[derive(Debug, Clone)]
struct LogConstraint {
    vars: Vec<usize>,
    /// (log coefficient, exponents indexed into `vars`)
    terms: Vec<(f64, Vec<(usize, f64)>)>,
}

impl LogConstraint {
    fn new(terms: Vec<(f64, Vec<(usize, f64)>)>) -> Self {
        let mut vars: Vec<usize> = terms.iter().flat_map(|(_, e)| e.iter().map(|(v, _)| *v)).collect();
        vars.sort_unstable();
        vars.dedup();
        let terms = terms
            .into_iter()
            .map(|(b, e)| (b, e.into_iter().map(|(v, a)| (vars.binary_search(&v).unwrap(), a)).collect()))
            .collect();
        Self { vars, terms }
    }

    fn value(&self, y: &[f64]) -> f64 {
        if self.terms.len() == 1 {
            let (b, e) = &self.terms[0];
            return b + e.iter().map(|(i, a)| a * y[self.vars[*i]]).sum::<f64>();
        }
        let z: Vec<f64> = self
            .terms
            .iter()
            .map(|(b, e)| b + e.iter().map(|(i, a)| a * y[self.vars[*i]]).sum::<f64>())
            .collect();
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    }

    /// Value and local gradient.
    fn gradient(&self, y: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.vars.len();
        grad[..k].iter_mut().for_each(|g| *g = 0.0);
        if self.terms.len() == 1 {
            let (b, e) = &self.terms[0];
            for (i, a) in e {
                grad[*i] += a;
            }
            return b + e.iter().map(|(i, a)| a * y[self.vars[*i]]).sum::<f64>();
        }
        let z: Vec<f64> = self
            .terms
            .iter()
            .map(|(b, e)| b + e.iter().map(|(i, a)| a * y[self.vars[*i]]).sum::<f64>())
            .collect();
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let total: f64 = w.iter().sum();
        for ((_, e), wt) in self.terms.iter().zip(&w) {
            for &(i, a) in e {
                grad[i] += wt / total * a;
            }
        }
        m + total.ln()
    }

    /// Value, local gradient and local Hessian of the log-sum-exp.
    fn derivs(&self, y: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let k = self.vars.len();
        grad[..k].iter_mut().for_each(|g| *g = 0.0);
        hess[..k * k].iter_mut().for_each(|h| *h = 0.0);
        if self.terms.len() == 1 {
            let (b, e) = &self.terms[0];
            for (i, a) in e {
                grad[*i] += a;
            }
            return b + e.iter().map(|(i, a)| a * y[self.vars[*i]]).sum::<f64>();
        }
        let z: Vec<f64> = self
            .terms
            .iter()
            .map(|(b, e)| b + e.iter().map(|(i, a)| a * y[self.vars[*i]]).sum::<f64>())
            .collect();
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let total: f64 = w.iter().sum();
        for ((_, e), wt) in self.terms.iter().zip(&w) {
            let p = wt / total;
            for &(i, a) in e {
                grad[i] += p * a;
                for &(j, b) in e {
                    hess[i * k + j] += p * a * b;
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                hess[i * k + j] -= grad[i] * grad[j];
            }
        }
        m + total.ln()
    }
}

/// A standard GP in log space with per-variable boxes.
#[derive(Debug, Clone)]
struct Compiled {
    n: usize,
    objective: Vec<(f64, Vec<(usize, f64)>)>,
    constraints: Vec<LogConstraint>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    class: Vec<VarClass>,
    n_core: usize,
    n_aux: usize,
}

impl Compiled {
    fn from_problem(problem: &GpProblem, bounds: (f64, f64)) -> Result<Self, GpError> {
        let n = problem.n_vars();
        let objective = problem
            .objective
            .terms()
            .iter()
            .map(|t| (t.coefficient().ln(), t.exponents().iter().map(|(v, a)| (v.0, *a)).collect()))
            .collect();
        let mut constraints = Vec::with_capacity(problem.constraints.len());
        for (idx, c) in problem.constraints.iter().enumerate() {
            let lhs = match &c.body {
                ConstraintBody::Posynomial(p) => p.clone(),
                ConstraintBody::Ratio { numerator, denominator } if denominator.is_monomial() => {
                    (numerator * &denominator.terms()[0].pow(-1.0)).into()
                }
                ConstraintBody::Ratio { .. } => return Err(GpError::NotStandard { constraint: idx }),
            };
            if let Some(v) = lhs.variables().iter().find(|v| v.0 >= n) {
                return Err(GpError::UnknownVariable(*v));
            }
            let terms: Vec<(f64, Vec<(usize, f64)>)> = lhs
                .terms()
                .iter()
                .map(|t| (t.coefficient().ln(), t.exponents().iter().map(|(v, a)| (v.0, *a)).collect()))
                .collect();
            let lc = LogConstraint::new(terms);
            if lc.vars.is_empty() {
                if lc.value(&[]) > 0.0 {
                    return Err(GpError::Infeasible { phase1_objective: lc.value(&[]) });
                }
                continue; // constant constraint that always holds
            }
            constraints.push(lc);
        }
        let (lo, hi) = (bounds.0.ln(), bounds.1.ln());
        let mut compiled = Self {
            n,
            objective,
            constraints,
            lo: vec![lo; n],
            hi: vec![hi; n],
            class: Vec::new(),
            n_core: 0,
            n_aux: 0,
        };
        compiled.classify();
        Ok(compiled)
    }

    /// Splits variables into core and eliminable epigraph variables.
    fn classify(&mut self) {
        let mut candidate = vec![false; self.n];
        for (_, e) in &self.objective {
            if let [(v, _)] = e.as_slice() {
                candidate[*v] = true;
            }
        }
        for (_, e) in &self.objective {
            if e.len() > 1 {
                for (v, _) in e {
                    candidate[*v] = false;
                }
            }
        }
        for c in &self.constraints {
            let mut seen = false;
            for &v in &c.vars {
                if candidate[v] {
                    if seen {
                        candidate[v] = false;
                    }
                    seen = true;
                }
            }
        }
        let (mut nc, mut na) = (0, 0);
        self.class = candidate
            .iter()
            .map(|&aux| {
                if aux {
                    na += 1;
                    VarClass::Aux(na - 1)
                } else {
                    nc += 1;
                    VarClass::Core(nc - 1)
                }
            })
            .collect();
        self.n_core = nc;
        self.n_aux = na;
    }

    fn n_rows(&self) -> usize {
        self.constraints.len() + 2 * self.n
    }

    fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective
            .iter()
            .map(|(b, e)| (b + e.iter().map(|(v, a)| a * y[*v]).sum::<f64>()).exp())
            .sum()
    }

    fn max_constraint(&self, y: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.value(y)).fold(f64::NEG_INFINITY, f64::max)
    }

    fn strictly_feasible(&self, y: &[f64]) -> bool {
        (0..self.n).all(|i| y[i] > self.lo[i] && y[i] < self.hi[i])
            && self.constraints.iter().all(|c| c.value(y) < 0.0)
    }

    /// Values of every inequality row `g(y) <= 0`: the constraints, then the
    /// lower box rows `lo - y`, then the upper box rows `y - hi`.
    fn row_values(&self, y: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = self.constraints.iter().map(|c| c.value(y)).collect();
        g.extend((0..self.n).map(|i| self.lo[i] - y[i]));
        g.extend((0..self.n).map(|i| y[i] - self.hi[i]));
        g
    }

    /// Lagrangian gradient `grad f0 + sum_j lam_j grad g_j`.
    fn dual_residual(&self, y: &[f64], lam: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n];
        for (b, e) in &self.objective {
            let val = (b + e.iter().map(|(v, a)| a * y[*v]).sum::<f64>()).exp();
            for (v, a) in e {
                r[*v] += val * a;
            }
        }
        let mut lg = vec![0.0; self.max_row_len()];
        for (j, c) in self.constraints.iter().enumerate() {
            c.gradient(y, &mut lg);
            for (a, v) in c.vars.iter().enumerate() {
                r[*v] += lam[j] * lg[a];
            }
        }
        let k = self.constraints.len();
        for i in 0..self.n {
            r[i] += lam[k + self.n + i] - lam[k + i];
        }
        r
    }

    fn max_row_len(&self) -> usize {
        self.constraints.iter().map(|c| c.vars.len()).max().unwrap_or(0)
    }

    /// Squared norm of the perturbed KKT residual.
    fn residual_sq(&self, y: &[f64], pd: &PdState, target: f64) -> f64 {
        let r_d = self.dual_residual(y, &pd.lam);
        let g = self.row_values(y);
        let mut sq: f64 = r_d.iter().map(|v| v * v).sum();
        for j in 0..g.len() {
            sq += (g[j] + pd.s[j]).powi(2) + (pd.lam[j] * pd.s[j] - target).powi(2);
        }
        sq
    }

    /// Newton step `(dy, ds, dlam)` on the perturbed KKT system
    /// `grad f0 + sum lam_j grad g_j = 0`, `g + s = 0`, `lam_j s_j = target`.
    ///
    /// Eliminating `ds` and `dlam` leaves
    /// `[H0 + sum lam_j H_j + sum (lam_j / s_j) a_j a_j^T] dy = rhs`, whose
    /// epigraph block is diagonal and is eliminated in turn.
    fn newton_step(&self, y: &[f64], pd: &PdState, target: f64) -> Result<PdState3, GpError> {
        let (nc, na) = (self.n_core, self.n_aux);
        let k = self.constraints.len();
        let g = self.row_values(y);
        let r_d = self.dual_residual(y, &pd.lam);
        // per-row weight of a_j in the right-hand side
        let row_rhs: Vec<f64> = (0..g.len())
            .map(|j| {
                let r_p = g[j] + pd.s[j];
                let r_c = pd.lam[j] * pd.s[j] - target;
                (-r_c + pd.lam[j] * r_p) / pd.s[j]
            })
            .collect();

        let mut rhs: Vec<f64> = r_d.iter().map(|v| -v).collect();
        let mut h = vec![0.0; nc * nc];
        let mut cross = vec![0.0; na * nc];
        let mut diag = vec![0.0; na];
        let class = &self.class;
        let mut add_hess = |vi: usize, vj: usize, val: f64| match (class[vi], class[vj]) {
            (VarClass::Core(i), VarClass::Core(j)) => h[i * nc + j] += val,
            (VarClass::Core(i), VarClass::Aux(u)) => cross[u * nc + i] += val,
            (VarClass::Aux(_), VarClass::Core(_)) => {}
            (VarClass::Aux(u), VarClass::Aux(w)) => {
                debug_assert_eq!(u, w, "two epigraph variables coupled");
                diag[u] += val;
            }
        };

        for (b, e) in &self.objective {
            let val = (b + e.iter().map(|(v, a)| a * y[*v]).sum::<f64>()).exp();
            for &(vi, ai) in e {
                for &(vj, aj) in e {
                    add_hess(vi, vj, val * ai * aj);
                }
            }
        }
        let kmax = self.max_row_len();
        let mut lg = vec![0.0; kmax];
        let mut lh = vec![0.0; kmax * kmax];
        for (j, c) in self.constraints.iter().enumerate() {
            let len = c.vars.len();
            c.derivs(y, &mut lg, &mut lh);
            let outer = pd.lam[j] / pd.s[j];
            for a in 0..len {
                rhs[c.vars[a]] -= lg[a] * row_rhs[j];
                for bb in 0..len {
                    add_hess(c.vars[a], c.vars[bb], pd.lam[j] * lh[a * len + bb] + outer * lg[a] * lg[bb]);
                }
            }
        }
        for i in 0..self.n {
            let (lo_row, hi_row) = (k + i, k + self.n + i);
            rhs[i] -= -row_rhs[lo_row] + row_rhs[hi_row];
            add_hess(i, i, pd.lam[lo_row] / pd.s[lo_row] + pd.lam[hi_row] / pd.s[hi_row]);
        }

        let dy = self.reduce_and_solve(&rhs, &h, &cross, &diag)?;

        // recover slack and multiplier steps
        let mut ds = Vec::with_capacity(g.len());
        for (j, c) in self.constraints.iter().enumerate() {
            c.gradient(y, &mut lg);
            let slope: f64 = c.vars.iter().enumerate().map(|(a, v)| lg[a] * dy[*v]).sum();
            ds.push(-(g[j] + pd.s[j]) - slope);
        }
        for i in 0..self.n {
            ds.push(-(g[k + i] + pd.s[k + i]) + dy[i]);
        }
        for i in 0..self.n {
            ds.push(-(g[k + self.n + i] + pd.s[k + self.n + i]) - dy[i]);
        }
        let dlam = (0..g.len())
            .map(|j| (-(pd.lam[j] * pd.s[j] - target) - pd.lam[j] * ds[j]) / pd.s[j])
            .collect();
        Ok(PdState3 { dy, ds, dlam })
    }

    fn reduce_and_solve(&self, rhs: &[f64], h: &[f64], cross: &[f64], diag: &[f64]) -> Result<Vec<f64>, GpError> {
        let (nc, na) = (self.n_core, self.n_aux);
        let mut r_core = vec![0.0; nc];
        let mut r_aux = vec![0.0; na];
        for (v, cl) in self.class.iter().enumerate() {
            match cl {
                VarClass::Core(i) => r_core[*i] = rhs[v],
                VarClass::Aux(u) => r_aux[*u] = rhs[v],
            }
        }
        let mut schur = DMatrix::from_row_slice(nc, nc, h);
        let mut rc = DVector::from_vec(r_core);
        let mut nz = Vec::with_capacity(nc);
        for u in 0..na {
            let col = &cross[u * nc..(u + 1) * nc];
            let du = diag[u];
            if !(du > 0.0) {
                return Err(GpError::NumericalBreakdown("nonpositive epigraph curvature".into()));
            }
            nz.clear();
            nz.extend((0..nc).filter(|&i| col[i] != 0.0));
            for &i in &nz {
                rc[i] -= col[i] * r_aux[u] / du;
                for &j in &nz {
                    schur[(i, j)] -= col[i] * col[j] / du;
                }
            }
        }
        let dz = solve_spd(schur, rc)?;
        let mut dir = vec![0.0; self.n];
        for (v, cl) in self.class.iter().enumerate() {
            match cl {
                VarClass::Core(i) => dir[v] = dz[*i],
                VarClass::Aux(u) => {
                    let col = &cross[u * nc..(u + 1) * nc];
                    let coupling: f64 = (0..nc).map(|i| col[i] * dz[i]).sum();
                    dir[v] = (r_aux[*u] - coupling) / diag[*u];
                }
            }
        }
        if dir.iter().any(|d| !d.is_finite()) {
            return Err(GpError::NumericalBreakdown("non-finite Newton step".into()));
        }
        Ok(dir)
    }

    /// Infeasible-start primal-dual interior-point iterations. Constraint
    /// values are matched by explicit slacks, so iterates may cross a curved
    /// constraint boundary on the way. Returns the final duality measure
    /// `s . lam` and the number of Newton steps.
    fn primal_dual(
        &self,
        y: &mut [f64],
        tol: f64,
        budget: usize,
        stop: &dyn Fn(&[f64]) -> bool,
    ) -> Result<(f64, usize), GpError> {
        const SIGMA: f64 = 0.1;
        const MIN_SLACK: f64 = 1e-2;
        let m = self.n_rows() as f64;
        let mut f0 = self.objective_value(y);
        let g = self.row_values(y);
        let share = f0.abs().max(1e-12) / m;
        let s: Vec<f64> = g.iter().map(|v| (-v).max(MIN_SLACK)).collect();
        let lam = s.iter().map(|v| share / v).collect();
        let mut pd = PdState { s, lam };

        for step in 0..budget {
            let g = self.row_values(y);
            let r_d = self.dual_residual(y, &pd.lam);
            let gap: f64 = pd.s.iter().zip(&pd.lam).map(|(a, b)| a * b).sum();
            let dual_norm = r_d.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let primal_norm = g.iter().zip(&pd.s).fold(0.0f64, |acc, (a, b)| acc.max((a + b).abs()));
            let scale = f0.abs().max(1e-12);
            log::trace!("pd step {step}: f0 {f0:.12e} gap {gap:.2e} dual {dual_norm:.2e} primal {primal_norm:.2e}");
            if stop(y) || (gap <= tol * scale && dual_norm <= tol * scale && primal_norm <= PRIMAL_TOL) {
                return Ok((gap, step));
            }
            let target = SIGMA * gap / m;
            let d = self.newton_step(y, &pd, target)?;

            let mut alpha = 1.0f64;
            for (v, dv) in pd.s.iter().chain(&pd.lam).zip(d.ds.iter().chain(&d.dlam)) {
                if *dv < 0.0 {
                    alpha = alpha.min(-0.99 * v / dv);
                }
            }
            let r0 = self.residual_sq(y, &pd, target).sqrt();
            let mut trial_y = vec![0.0; self.n];
            loop {
                for i in 0..self.n {
                    trial_y[i] = y[i] + alpha * d.dy[i];
                }
                let trial = pd.step(&d, alpha);
                let r1 = self.residual_sq(&trial_y, &trial, target).sqrt();
                if r1 <= (1.0 - 0.01 * alpha) * r0 {
                    pd = trial;
                    break;
                }
                alpha *= 0.5;
                if alpha < 1e-12 {
                    // no further progress at this precision
                    return if gap <= tol.sqrt() * scale && primal_norm <= tol.sqrt() {
                        Ok((gap, step))
                    } else {
                        Err(GpError::NumericalBreakdown(format!("line search stalled (gap {gap:.2e})")))
                    };
                }
            }
            y.copy_from_slice(&trial_y);
            f0 = self.objective_value(y);
            if !f0.is_finite() {
                return Err(GpError::NumericalBreakdown("objective overflow".into()));
            }
        }
        Err(GpError::MaxIterations { steps: budget })
    }
}

/// Constraint rows must hold to this log-scale accuracy at termination.
const PRIMAL_TOL: f64 = 1e-10;

/// Slacks and multipliers of every inequality row.
#[derive(Debug, Clone)]
struct PdState {
    s: Vec<f64>,
    lam: Vec<f64>,
}

/// A Newton step in all three blocks.
#[derive(Debug, Clone)]
struct PdState3 {
    dy: Vec<f64>,
    ds: Vec<f64>,
    dlam: Vec<f64>,
}

impl PdState {
    fn step(&self, d: &PdState3, alpha: f64) -> PdState {
        PdState {
            s: self.s.iter().zip(&d.ds).map(|(a, b)| a + alpha * b).collect(),
            lam: self.lam.iter().zip(&d.dlam).map(|(a, b)| a + alpha * b).collect(),
        }
    }
}

fn solve_spd(mut a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>, GpError> {
    let n = a.nrows();
    if n == 0 {
        return Ok(b);
    }
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..30 {
        if let Some(ch) = a.clone().cholesky() {
            return Ok(ch.solve(&b));
        }
        let next = if shift == 0.0 { 1e-14 * scale } else { shift * 10.0 };
        for i in 0..n {
            a[(i, i)] += next - shift;
        }
        shift = next;
    }
    Err(GpError::NumericalBreakdown("Newton matrix is not positive definite".into()))
}

/// Solves a standard GP.
///
/// `start` is an optional positive initial assignment; it need not be
/// feasible. If the solve from an infeasible start fails, a phase-1 problem
/// (minimize `s` subject to `P_j(v) <= s`) either finds a strictly feasible
/// restart point or certifies infeasibility.
pub fn solve_gp(
    problem: &GpProblem,
    config: &SolverConfig,
    start: Option<&[f64]>,
) -> Result<GpSolution, GpError> {
    config.validate()?;
    let compiled = Compiled::from_problem(problem, config.var_bounds)?;
    let n = compiled.n;
    let margin = 1e-6 * (compiled.hi[0] - compiled.lo[0]).max(1.0);
    let mut y: Vec<f64> = match start {
        Some(v) => {
            if v.len() != n {
                return Err(GpError::Config(format!("start has {} entries for {n} variables", v.len())));
            }
            v.iter()
                .enumerate()
                .map(|(i, x)| {
                    let l = if *x > 0.0 { x.ln() } else { compiled.lo[i] };
                    l.clamp(compiled.lo[i] + margin, compiled.hi[i] - margin)
                })
                .collect()
        }
        None => vec![0.0; n],
    };

    // The primal-dual iteration accepts infeasible starts. Phase 1 is only
    // consulted when that fails from an infeasible start, to certify
    // infeasibility or to restart from an interior point.
    let y0 = y.clone();
    let mut steps = 0;
    let gap = match compiled.primal_dual(&mut y, config.inner_tol, config.max_inner, &|_| false) {
        Ok((gap, s)) => {
            steps += s;
            gap
        }
        Err(e @ (GpError::MaxIterations { .. } | GpError::NumericalBreakdown(_))) => {
            if compiled.strictly_feasible(&y0) {
                return Err(e);
            }
            log::debug!("direct solve failed ({e}); running phase 1");
            y = y0;
            steps += phase_one(&compiled, &mut y, config)?;
            let (gap, s) = compiled.primal_dual(&mut y, config.inner_tol, config.max_inner, &|_| false)?;
            steps += s;
            gap
        }
        Err(e) => return Err(e),
    };
    let values: Vec<f64> = y.iter().map(|v| v.exp()).collect();
    let objective = compiled.objective_value(&y);
    if !objective.is_finite() || values.iter().any(|v| !v.is_finite()) {
        return Err(GpError::NumericalBreakdown("non-finite solution".into()));
    }
    log::trace!("gp solved: objective {objective:.10e}, gap {gap:.2e}, {steps} Newton steps");
    Ok(GpSolution { values, objective, duality_gap: gap, newton_steps: steps })
}

/// Moves `y` to a strictly feasible point or proves infeasibility.
fn phase_one(compiled: &Compiled, y: &mut Vec<f64>, config: &SolverConfig) -> Result<usize, GpError> {
    let n = compiled.n;
    let s_index = n;
    let s0 = compiled.max_constraint(y).max(0.0) + 1.0;
    let mut aux = compiled.clone();
    aux.n = n + 1;
    aux.objective = vec![(0.0, vec![(s_index, 1.0)])];
    for c in &mut aux.constraints {
        c.vars.push(s_index);
        let local = c.vars.len() - 1;
        for (_, e) in &mut c.terms {
            e.push((local, -1.0));
        }
    }
    aux.lo.push(-50.0);
    aux.hi.push(s0 + 50.0);
    // The original split stays valid: the slack is one more core variable
    // and no epigraph variable gains a coupling.
    aux.class.push(VarClass::Core(aux.n_core));
    aux.n_core += 1;

    let mut ys = y.clone();
    ys.push(s0);
    // stop as soon as every original constraint holds with some margin
    let stop = |v: &[f64]| compiled.strictly_feasible(&v[..n]) && compiled.max_constraint(&v[..n]) < -PHASE1_MARGIN;
    let (_, steps) = aux.primal_dual(&mut ys, config.inner_tol, config.max_inner, &stop)?;
    if !compiled.strictly_feasible(&ys[..n]) {
        return Err(GpError::Infeasible { phase1_objective: compiled.max_constraint(&ys[..n]) });
    }
    y.copy_from_slice(&ys[..n]);
    Ok(steps)
}
