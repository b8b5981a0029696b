//! Monomials and posynomials over positive variables, and their log-space
//! forms.
//!
//! Under `v = exp(y)` a monomial `c * prod v_i^a_i` becomes `exp(ln c + a.y)`
//! and a posynomial becomes a sum of exponentials of affine functions; its
//! logarithm is a log-sum-exp, which is convex in `y`.

use std::fmt;

/// Index of a GP variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// `coefficient * prod_i v_i^{exponent_i}` with a positive coefficient.
///
/// Exponents are kept sorted by variable with no duplicates and no zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    coefficient: f64,
    exponents: Vec<(VarId, f64)>,
}

impl Monomial {
    /// Panics unless `coefficient` is positive and finite.
    pub fn new(coefficient: f64, exponents: impl IntoIterator<Item = (VarId, f64)>) -> Self {
        assert!(
            coefficient > 0.0 && coefficient.is_finite(),
            "monomial coefficient must be positive, got {coefficient}"
        );
        let mut exps: Vec<(VarId, f64)> = exponents.into_iter().collect();
        exps.sort_by_key(|(v, _)| *v);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(exps.len());
        for (v, a) in exps {
            match merged.last_mut() {
                Some((last, acc)) if *last == v => *acc += a,
                _ => merged.push((v, a)),
            }
        }
        merged.retain(|(_, a)| *a != 0.0);
        Self { coefficient, exponents: merged }
    }

    pub fn constant(coefficient: f64) -> Self {
        Self::new(coefficient, [])
    }

    /// A single variable with unit coefficient.
    pub fn var(v: VarId) -> Self {
        Self::new(1.0, [(v, 1.0)])
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn exponents(&self) -> &[(VarId, f64)] {
        &self.exponents
    }

    pub fn exponent_of(&self, v: VarId) -> f64 {
        self.exponents
            .binary_search_by_key(&v, |(w, _)| *w)
            .map(|i| self.exponents[i].1)
            .unwrap_or(0.0)
    }

    pub fn variables(&self) -> impl Iterator<Item = VarId> + '_ {
        self.exponents.iter().map(|(v, _)| *v)
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.exponents
            .iter()
            .fold(self.coefficient, |acc, (v, a)| acc * values[v.0].powf(*a))
    }

    /// `ln c + sum_i a_i y_i`.
    pub fn log_affine(&self, y: &[f64]) -> f64 {
        self.exponents.iter().fold(self.coefficient.ln(), |acc, (v, a)| acc + a * y[v.0])
    }

    pub fn pow(&self, e: f64) -> Self {
        Self::new(self.coefficient.powf(e), self.exponents.iter().map(|(v, a)| (*v, a * e)))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.coefficient * c, self.exponents.iter().copied())
    }
}

impl std::ops::Mul for &Monomial {
    type Output = Monomial;

    fn mul(self, rhs: &Monomial) -> Monomial {
        Monomial::new(
            self.coefficient * rhs.coefficient,
            self.exponents.iter().chain(rhs.exponents.iter()).copied(),
        )
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.coefficient)?;
        for (v, a) in &self.exponents {
            write!(f, " {}:{}", v.0, a)?;
        }
        Ok(())
    }
}

/// A nonempty sum of monomials.
#[derive(Debug, Clone, PartialEq)]
pub struct Posynomial {
    terms: Vec<Monomial>,
}

impl Posynomial {
    /// Panics on an empty term list.
    pub fn new(terms: Vec<Monomial>) -> Self {
        assert!(!terms.is_empty(), "posynomial needs at least one term");
        Self { terms }
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(values)).sum()
    }

    pub fn is_monomial(&self) -> bool {
        self.terms.len() == 1
    }

    pub fn variables(&self) -> Vec<VarId> {
        let mut vars: Vec<VarId> = self.terms.iter().flat_map(|t| t.variables()).collect();
        vars.sort();
        vars.dedup();
        vars
    }

    /// Multiplies every term by a monomial.
    pub fn times(&self, m: &Monomial) -> Self {
        Self::new(self.terms.iter().map(|t| t * m).collect())
    }

    /// `ln sum_t exp(ln c_t + a_t.y)` and its gradient with respect to `y`
    /// (sparse, sorted by variable).
    pub fn log_sum_exp(&self, y: &[f64]) -> (f64, Vec<(VarId, f64)>) {
        let z: Vec<f64> = self.terms.iter().map(|t| t.log_affine(y)).collect();
        let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = z.iter().map(|zi| (zi - zmax).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut grad: Vec<(VarId, f64)> = Vec::new();
        for (t, wi) in self.terms.iter().zip(&w) {
            let p = wi / total;
            for &(v, a) in t.exponents() {
                match grad.binary_search_by_key(&v, |(u, _)| *u) {
                    Ok(i) => grad[i].1 += p * a,
                    Err(i) => grad.insert(i, (v, p * a)),
                }
            }
        }
        (zmax + total.ln(), grad)
    }
}

impl std::ops::Add for Posynomial {
    type Output = Posynomial;

    fn add(mut self, rhs: Posynomial) -> Posynomial {
        self.terms.extend(rhs.terms);
        self
    }
}

impl From<Monomial> for Posynomial {
    fn from(m: Monomial) -> Self {
        Self::new(vec![m])
    }
}
