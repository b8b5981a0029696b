//! Geometric programs for placement optimization.
//!
//! Two complementary GPs are built here, both over the caching fractions
//! `q_n` and complement variables `x_n` (with `1 / (q_n + x_n) <= 1`, the one
//! non-posynomial constraint family):
//!
//! * the scheme-rate program, with one epigraph variable `w` per
//!   (active set, demand vector, coded message) bounding the zero-padded
//!   message size from above;
//! * the lower-bound program, with one epigraph variable `r` per
//!   (active set, distinct request set) bounding every ordering's bound.

use super::posynomial::{Monomial, Posynomial, VarId};
use super::GpError;
use crate::combinatorics::{
    binomial, enumerate_active_sets, for_each_demand, leader_mask, users_of_mask,
};
use crate::model::{FileCatalog, UserPopulation};
use crate::rate::for_each_permutation;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Largest number of epigraph variables a program may contain.
pub const MAX_AUX_VARIABLES: usize = 2_000_000;

/// Largest distinct-request count in the lower-bound program (7! = 5040).
pub const MAX_P4_DISTINCT: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub enum VarRole {
    /// Caching fraction of a file.
    Fraction(usize),
    /// Complement variable with `q_n + x_n >= 1`.
    Complement(usize),
    /// Bound on one coded message. `group` is a position mask into `active`.
    MessageSize { active: Vec<usize>, demands: Vec<usize>, group: u32 },
    /// Bound on the lower-bound rate of a distinct request set.
    BoundRate { active: Vec<usize>, files: Vec<usize> },
    Free(String),
}

impl VarRole {
    pub fn label(&self) -> String {
        match self {
            VarRole::Fraction(n) => format!("q_{n}"),
            VarRole::Complement(n) => format!("x_{n}"),
            VarRole::MessageSize { active, demands, group } => {
                format!("w_A{active:?}_d{demands:?}_S{:?}", users_of_mask(active, *group))
            }
            VarRole::BoundRate { active, files } => format!("r_A{active:?}_D{files:?}"),
            VarRole::Free(name) => name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintTag {
    /// `q_n <= 1`.
    FractionUpper(usize),
    /// `sum q_n F_n / M <= 1`.
    CacheBudget,
    /// `1 / (q_n + x_n) <= 1`.
    Complement(usize),
    /// Monomial tightening of [`ConstraintTag::Complement`].
    Condensed(usize),
    /// `w^-1 q^s x^(A-s) F <= 1`.
    MessageSize,
    /// `r^-1 * (ordering bound) <= 1`.
    BoundOrdering,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintBody {
    /// `lhs <= 1`.
    Posynomial(Posynomial),
    /// `numerator / denominator <= 1`; not a GP constraint unless the
    /// denominator is a monomial.
    Ratio { numerator: Monomial, denominator: Posynomial },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub tag: ConstraintTag,
    pub body: ConstraintBody,
}

impl Constraint {
    pub fn posynomial(tag: ConstraintTag, lhs: Posynomial) -> Self {
        Self { tag, body: ConstraintBody::Posynomial(lhs) }
    }

    /// Left-hand side value at `values`.
    pub fn eval(&self, values: &[f64]) -> f64 {
        match &self.body {
            ConstraintBody::Posynomial(p) => p.eval(values),
            ConstraintBody::Ratio { numerator, denominator } => {
                numerator.eval(values) / denominator.eval(values)
            }
        }
    }

    pub fn variables(&self) -> Vec<VarId> {
        match &self.body {
            ConstraintBody::Posynomial(p) => p.variables(),
            ConstraintBody::Ratio { numerator, denominator } => {
                let mut v = denominator.variables();
                v.extend(numerator.variables());
                v.sort();
                v.dedup();
                v
            }
        }
    }
}

/// Minimize a posynomial subject to constraints `<= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpProblem {
    pub objective: Posynomial,
    pub constraints: Vec<Constraint>,
    pub variables: Vec<VarRole>,
}

impl GpProblem {
    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    /// True when every constraint is a posynomial constraint.
    pub fn is_standard(&self) -> bool {
        self.constraints.iter().all(|c| match &c.body {
            ConstraintBody::Posynomial(_) => true,
            ConstraintBody::Ratio { denominator, .. } => denominator.is_monomial(),
        })
    }

    pub fn fraction_var(&self, file: usize) -> Option<VarId> {
        self.find(|r| *r == VarRole::Fraction(file))
    }

    pub fn complement_var(&self, file: usize) -> Option<VarId> {
        self.find(|r| *r == VarRole::Complement(file))
    }

    fn find(&self, pred: impl Fn(&VarRole) -> bool) -> Option<VarId> {
        self.variables.iter().position(pred).map(VarId)
    }

    /// Number of files, i.e. of `q_n` variables.
    pub fn n_files(&self) -> usize {
        self.variables.iter().filter(|r| matches!(r, VarRole::Fraction(_))).count()
    }

    /// Checks that every referenced variable is registered and that each
    /// `q_n`/`x_n` pair appears in exactly one linking constraint.
    pub fn check(&self) -> Result<(), GpError> {
        let n = self.n_vars();
        let mut referenced = self.objective.variables();
        for c in &self.constraints {
            referenced.extend(c.variables());
        }
        if let Some(v) = referenced.iter().find(|v| v.0 >= n) {
            return Err(GpError::UnknownVariable(*v));
        }
        for file in 0..self.n_files() {
            let (Some(q), Some(x)) = (self.fraction_var(file), self.complement_var(file)) else {
                return Err(GpError::Malformed(format!("file {file} lacks its q/x pair")));
            };
            let linking = self
                .constraints
                .iter()
                .filter(|c| matches!(c.tag, ConstraintTag::Complement(f) | ConstraintTag::Condensed(f) if f == file))
                .filter(|c| {
                    let vars = c.variables();
                    vars.contains(&q) && vars.contains(&x)
                })
                .count();
            if linking != 1 {
                return Err(GpError::Malformed(format!(
                    "file {file} has {linking} linking constraints"
                )));
            }
        }
        Ok(())
    }

    /// Max over constraints of `lhs - 1` (feasible when `<= 0`).
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        self.constraints.iter().map(|c| c.eval(values) - 1.0).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Which per-demand rate the scheme program encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageSet {
    /// Non-redundant groups of the canonical leader group.
    NonRedundant,
    /// Every nonempty subset of active users.
    AllSubsets,
}

/// Registers `q_n`, `x_n` and the constraints shared by both programs:
/// `q_n <= 1`, the cache budget, and `1 / (q_n + x_n) <= 1`.
fn base_problem(catalog: &FileCatalog, budget: f64) -> Result<(Vec<VarRole>, Vec<Constraint>), GpError> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(GpError::Malformed(format!("cache budget {budget} must be positive")));
    }
    let n = catalog.n_files();
    let mut vars: Vec<VarRole> = (0..n).map(VarRole::Fraction).collect();
    vars.extend((0..n).map(VarRole::Complement));
    let q = |i: usize| VarId(i);
    let x = |i: usize| VarId(n + i);

    let mut constraints: Vec<Constraint> = (0..n)
        .map(|i| Constraint::posynomial(ConstraintTag::FractionUpper(i), Monomial::var(q(i)).into()))
        .collect();
    constraints.push(Constraint::posynomial(
        ConstraintTag::CacheBudget,
        Posynomial::new(
            catalog.sizes().iter().enumerate().map(|(i, f)| Monomial::new(f / budget, [(q(i), 1.0)])).collect(),
        ),
    ));
    constraints.extend((0..n).map(|i| Constraint {
        tag: ConstraintTag::Complement(i),
        body: ConstraintBody::Ratio {
            numerator: Monomial::constant(1.0),
            denominator: Posynomial::new(vec![Monomial::var(q(i)), Monomial::var(x(i))]),
        },
    }));
    Ok((vars, constraints))
}

/// `q^s x^(a-s) F` for file `f`.
fn subfile_monomial(n_files: usize, f: usize, size: f64, s: usize, a: usize) -> Monomial {
    Monomial::new(size, [(VarId(f), s as f64), (VarId(n_files + f), (a - s) as f64)])
}

/// Number of epigraph variables of the scheme program before building it.
pub fn count_message_variables(n_files: usize, n_users: usize) -> f64 {
    (1..=n_users)
        .map(|a| binomial(n_users, a) as f64 * (n_files as f64).powi(a as i32) * 2f64.powi(a as i32))
        .sum()
}

/// Scheme-rate program: minimize the expected total coded-message size.
pub fn build_p1(catalog: &FileCatalog, users: &UserPopulation, budget: f64) -> Result<GpProblem, GpError> {
    build_scheme_program(catalog, users, budget, MessageSet::NonRedundant)
}

/// As [`build_p1`] for the original scheme (no leader filtering).
pub fn build_dccs(catalog: &FileCatalog, users: &UserPopulation, budget: f64) -> Result<GpProblem, GpError> {
    build_scheme_program(catalog, users, budget, MessageSet::AllSubsets)
}

pub fn build_scheme_program(
    catalog: &FileCatalog,
    users: &UserPopulation,
    budget: f64,
    messages: MessageSet,
) -> Result<GpProblem, GpError> {
    let n = catalog.n_files();
    let estimate = count_message_variables(n, users.n_users());
    if estimate > MAX_AUX_VARIABLES as f64 {
        return Err(GpError::ProblemTooLarge { variables: estimate });
    }
    let (mut vars, mut constraints) = base_problem(catalog, budget)?;
    let mut objective = Vec::new();
    let sizes = catalog.sizes();

    for set in enumerate_active_sets(users)? {
        let a = set.users.len();
        if a == 0 || set.probability == 0.0 {
            continue;
        }
        for_each_demand(catalog.popularity(), a, |d, w| {
            let weight = set.probability * w;
            if weight == 0.0 {
                return;
            }
            let leaders = match messages {
                MessageSet::NonRedundant => leader_mask(d),
                MessageSet::AllSubsets => u32::MAX,
            };
            for group in (1..(1u32 << a)).filter(|g| g & leaders != 0) {
                let wv = VarId(vars.len());
                vars.push(VarRole::MessageSize { active: set.users.clone(), demands: d.to_vec(), group });
                objective.push(Monomial::new(weight, [(wv, 1.0)]));
                let s = group.count_ones() as usize - 1;
                let mut files: Vec<usize> =
                    (0..a).filter(|i| group >> i & 1 == 1).map(|i| d[i]).collect();
                files.sort_unstable();
                files.dedup();
                for f in files {
                    let m = subfile_monomial(n, f, sizes[f], s, a);
                    constraints.push(Constraint::posynomial(
                        ConstraintTag::MessageSize,
                        (&m * &Monomial::new(1.0, [(wv, -1.0)])).into(),
                    ));
                }
            }
        });
    }
    if objective.is_empty() {
        return Err(GpError::Malformed("no active user has positive probability".into()));
    }
    Ok(GpProblem { objective: Posynomial::new(objective), constraints, variables: vars })
}

/// Lower-bound program: minimize the expected per-demand lower bound.
pub fn build_p4(catalog: &FileCatalog, users: &UserPopulation, budget: f64) -> Result<GpProblem, GpError> {
    let n = catalog.n_files();
    if users.n_users().min(n) > MAX_P4_DISTINCT {
        return Err(GpError::TooManyPermutations { distinct: users.n_users().min(n) });
    }
    let estimate = count_message_variables(n, users.n_users());
    if estimate > MAX_AUX_VARIABLES as f64 {
        return Err(GpError::ProblemTooLarge { variables: estimate });
    }
    let (mut vars, mut constraints) = base_problem(catalog, budget)?;
    let mut objective = Vec::new();
    let sizes = catalog.sizes();

    for set in enumerate_active_sets(users)? {
        let a = set.users.len();
        if a == 0 || set.probability == 0.0 {
            continue;
        }
        // Weight of each distinct request set: sum over demand vectors mapping to it.
        let mut by_distinct: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
        for_each_demand(catalog.popularity(), a, |d, w| {
            let mut files = d.to_vec();
            files.sort_unstable();
            files.dedup();
            *by_distinct.entry(files).or_insert(0.0) += w;
        });
        for (files, w) in by_distinct {
            let weight = set.probability * w;
            if weight == 0.0 {
                continue;
            }
            let rv = VarId(vars.len());
            vars.push(VarRole::BoundRate { active: set.users.clone(), files: files.clone() });
            objective.push(Monomial::new(weight, [(rv, 1.0)]));
            let inv_r = Monomial::new(1.0, [(rv, -1.0)]);
            for_each_permutation(files.len(), |perm| {
                let mut terms = Vec::new();
                for (pos, &j) in perm.iter().enumerate() {
                    let f = files[j];
                    for s in 0..a {
                        let c = binomial(a - pos - 1, s);
                        if c > 0 {
                            terms.push(&subfile_monomial(n, f, sizes[f], s, a).scale(c as f64) * &inv_r);
                        }
                    }
                }
                constraints.push(Constraint::posynomial(ConstraintTag::BoundOrdering, Posynomial::new(terms)));
            });
        }
    }
    if objective.is_empty() {
        return Err(GpError::Malformed("no active user has positive probability".into()));
    }
    Ok(GpProblem { objective: Posynomial::new(objective), constraints, variables: vars })
}

/// Writes a problem in a line-oriented interchange format:
///
/// ```text
/// variables <count>
/// var <index> <label>
/// objective
/// <coefficient> <var>:<exponent> ...
/// constraint
/// <coefficient> <var>:<exponent> ...
/// ```
///
/// One monomial per line. Ratio constraints are written as
/// `ratio` followed by the numerator line, `over`, and the denominator lines.
pub fn dump(problem: &GpProblem) -> String {
    let mut out = String::new();
    writeln!(out, "variables {}", problem.n_vars()).unwrap();
    for (i, role) in problem.variables.iter().enumerate() {
        writeln!(out, "var {i} {}", role.label()).unwrap();
    }
    writeln!(out, "objective").unwrap();
    for t in problem.objective.terms() {
        writeln!(out, "{t}").unwrap();
    }
    for c in &problem.constraints {
        match &c.body {
            ConstraintBody::Posynomial(p) => {
                writeln!(out, "constraint").unwrap();
                for t in p.terms() {
                    writeln!(out, "{t}").unwrap();
                }
            }
            ConstraintBody::Ratio { numerator, denominator } => {
                writeln!(out, "ratio").unwrap();
                writeln!(out, "{numerator}").unwrap();
                writeln!(out, "over").unwrap();
                for t in denominator.terms() {
                    writeln!(out, "{t}").unwrap();
                }
            }
        }
    }
    out
}

/// Reads the format written by [`dump`]. Variable roles become
/// [`VarRole::Free`] with the dumped label; constraint tags become
/// [`ConstraintTag::Other`].
pub fn parse_dump(text: &str) -> Result<GpProblem, GpError> {
    let bad = |line: usize, msg: &str| GpError::Malformed(format!("line {}: {msg}", line + 1));
    let parse_monomial = |line: usize, s: &str| -> Result<Monomial, GpError> {
        let mut parts = s.split_whitespace();
        let c: f64 = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(line, "missing coefficient"))?;
        if !(c > 0.0) {
            return Err(bad(line, "nonpositive coefficient"));
        }
        let mut exps = Vec::new();
        for p in parts {
            let (v, e) = p.split_once(':').ok_or_else(|| bad(line, "expected var:exponent"))?;
            let v: usize = v.parse().map_err(|_| bad(line, "bad variable index"))?;
            let e: f64 = e.parse().map_err(|_| bad(line, "bad exponent"))?;
            exps.push((VarId(v), e));
        }
        Ok(Monomial::new(c, exps))
    };

    enum Section {
        Header,
        Objective,
        Constraint,
        RatioNumerator,
        RatioDenominator,
    }
    let mut variables = Vec::new();
    let mut objective = Vec::new();
    let mut constraints: Vec<Constraint> = Vec::new();
    let mut current: Vec<Monomial> = Vec::new();
    let mut numerator: Option<Monomial> = None;
    let mut section = Section::Header;

    let flush = |section: &Section,
                     current: &mut Vec<Monomial>,
                     numerator: &mut Option<Monomial>,
                     objective: &mut Vec<Monomial>,
                     constraints: &mut Vec<Constraint>|
     -> Result<(), GpError> {
        match section {
            Section::Objective => objective.append(current),
            Section::Constraint => {
                if current.is_empty() {
                    return Err(GpError::Malformed("empty constraint".into()));
                }
                constraints.push(Constraint::posynomial(
                    ConstraintTag::Other,
                    Posynomial::new(std::mem::take(current)),
                ));
            }
            Section::RatioDenominator => {
                let num = numerator.take().ok_or_else(|| GpError::Malformed("ratio without numerator".into()))?;
                if current.is_empty() {
                    return Err(GpError::Malformed("empty denominator".into()));
                }
                constraints.push(Constraint {
                    tag: ConstraintTag::Other,
                    body: ConstraintBody::Ratio { numerator: num, denominator: Posynomial::new(std::mem::take(current)) },
                });
            }
            Section::RatioNumerator => return Err(GpError::Malformed("ratio without denominator".into())),
            Section::Header => {}
        }
        Ok(())
    };

    for (line, raw) in text.lines().enumerate() {
        let s = raw.trim();
        if s.is_empty() {
            continue;
        }
        match s {
            "objective" | "constraint" | "ratio" => {
                flush(&section, &mut current, &mut numerator, &mut objective, &mut constraints)?;
                section = match s {
                    "objective" => Section::Objective,
                    "constraint" => Section::Constraint,
                    _ => Section::RatioNumerator,
                };
            }
            "over" => {
                if !matches!(section, Section::RatioNumerator) || numerator.is_none() {
                    return Err(bad(line, "unexpected 'over'"));
                }
                section = Section::RatioDenominator;
            }
            _ if s.starts_with("variables ") => {}
            _ if s.starts_with("var ") => {
                let label = s.splitn(3, ' ').nth(2).unwrap_or("").to_string();
                variables.push(VarRole::Free(label));
            }
            _ => match section {
                Section::Header => return Err(bad(line, "monomial outside a section")),
                Section::RatioNumerator => {
                    if numerator.is_some() {
                        return Err(bad(line, "ratio numerator must be a single monomial"));
                    }
                    numerator = Some(parse_monomial(line, s)?);
                }
                _ => current.push(parse_monomial(line, s)?),
            },
        }
    }
    flush(&section, &mut current, &mut numerator, &mut objective, &mut constraints)?;
    if objective.is_empty() {
        return Err(GpError::Malformed("missing objective".into()));
    }
    Ok(GpProblem { objective: Posynomial::new(objective), constraints, variables })
}
