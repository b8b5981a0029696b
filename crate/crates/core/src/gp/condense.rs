//! Monomial condensation of ratio constraints.
//!
//! A posynomial `P(v) = sum_t u_t(v)` is bounded below by the weighted
//! geometric mean `prod_t (u_t(v) / a_t)^{a_t}` for any weights summing to one.
//! Choosing `a_t = u_t(v0) / P(v0)` makes the bound exact at `v0`. Replacing
//! the denominator of `m / P <= 1` with that monomial yields a monomial
//! constraint that is tighter than the original everywhere and equal to it at
//! the anchor.

use super::posynomial::{Monomial, Posynomial};
use super::problem::{Constraint, ConstraintBody, ConstraintTag, GpProblem, VarRole};
use super::GpError;

/// Monomial `prod_t (u_t / a_t)^{a_t}` matching `p` at `anchor`.
pub fn condense_posynomial(p: &Posynomial, anchor: &[f64]) -> Result<Monomial, GpError> {
    for v in p.variables() {
        let value = anchor.get(v.0).copied().unwrap_or(f64::NAN);
        if !(value > 0.0 && value.is_finite()) {
            return Err(GpError::NonPositiveAnchor { var: v, value });
        }
    }
    let values: Vec<f64> = p.terms().iter().map(|t| t.eval(anchor)).collect();
    let total: f64 = values.iter().sum();
    let mut acc = Monomial::constant(1.0);
    for (t, u) in p.terms().iter().zip(values) {
        let weight = u / total;
        if weight > 0.0 {
            acc = &acc * &t.scale(1.0 / weight).pow(weight);
        }
    }
    Ok(acc)
}

/// Replaces every ratio constraint with its condensed monomial form at
/// `anchor` (a full variable assignment; only denominator variables are read).
pub fn condense_at(problem: &GpProblem, anchor: &[f64]) -> Result<GpProblem, GpError> {
    let mut out = problem.clone();
    for c in &mut out.constraints {
        if let ConstraintBody::Ratio { numerator, denominator } = &c.body {
            let approx = condense_posynomial(denominator, anchor)?;
            let tag = match c.tag {
                ConstraintTag::Complement(n) => ConstraintTag::Condensed(n),
                other => other,
            };
            *c = Constraint::posynomial(tag, (numerator * &approx.pow(-1.0)).into());
        }
    }
    Ok(out)
}

/// Condenses the `1 / (q_n + x_n) <= 1` constraints at `(anchor_q, anchor_x)`.
///
/// For each file the result is
/// `1 / [(q0 + x0) (q / q0)^alpha (x / x0)^beta] <= 1` with
/// `alpha = q0 / (q0 + x0)` and `beta = x0 / (q0 + x0)`.
pub fn condense(problem: &GpProblem, anchor_q: &[f64], anchor_x: &[f64]) -> Result<GpProblem, GpError> {
    let mut anchor = vec![f64::NAN; problem.n_vars()];
    for (i, role) in problem.variables.iter().enumerate() {
        match role {
            VarRole::Fraction(n) => anchor[i] = *anchor_q.get(*n).ok_or(GpError::AnchorLength)?,
            VarRole::Complement(n) => anchor[i] = *anchor_x.get(*n).ok_or(GpError::AnchorLength)?,
            _ => {}
        }
    }
    condense_at(problem, &anchor)
}
