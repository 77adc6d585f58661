//! Sparse multivariate polynomial algebra over named indeterminates.
//!
//! Polynomials are stored as maps from monomials to `f64` coefficients,
//! ordered graded-lexicographically so that downstream SDP compilation is
//! deterministic. Coefficients with magnitude below [`DEDUP_TOL`] are dropped
//! on insertion.

mod cheb;
mod serialize;

pub use cheb::{cheb_approximate, ChebApprox, ChebTarget};
pub use serialize::{parse_poly_lines, poly_lines};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Coefficients smaller than this in magnitude are not stored.
pub const DEDUP_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum PolyError {
    #[error("variable-space mismatch: `{0}` vs `{1}`")]
    SpaceMismatch(String, String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("indeterminate `{0}` is not in the variable space")]
    UnknownIndeterminate(String),
    #[error("unbound indeterminate `{0}` has no identity image in the target space")]
    UnboundIndeterminate(String),
}

/// An ordered set of named indeterminates. Indices are contiguous from 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VarSpace {
    vars: Vec<String>,
}

impl VarSpace {
    pub fn new<S: Into<String>>(vars: Vec<S>) -> Arc<Self> {
        let vars: Vec<String> = vars.into_iter().map(Into::into).collect();
        let mut seen = std::collections::HashSet::new();
        for v in &vars {
            assert!(seen.insert(v.clone()), "duplicate indeterminate `{v}`");
        }
        Arc::new(VarSpace { vars })
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn names(&self) -> &[String] {
        &self.vars
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.vars[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    fn label(&self) -> String {
        self.vars.join(",")
    }
}

fn same_space(a: &Arc<VarSpace>, b: &Arc<VarSpace>) -> Result<(), PolyError> {
    if Arc::ptr_eq(a, b) || a == b {
        Ok(())
    } else {
        Err(PolyError::SpaceMismatch(a.label(), b.label()))
    }
}

/// A power product of indeterminates. Zero exponents are not stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial {
    /// Sorted `(variable index, exponent)` pairs with positive exponents.
    exps: Vec<(u16, u16)>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial::default()
    }

    pub fn var(idx: usize) -> Self {
        Monomial { exps: vec![(idx as u16, 1)] }
    }

    pub fn from_pairs(mut pairs: Vec<(u16, u16)>) -> Self {
        pairs.retain(|&(_, e)| e > 0);
        pairs.sort_unstable_by_key(|&(i, _)| i);
        Monomial { exps: pairs }
    }

    pub fn from_exponents(exps: &[u16]) -> Self {
        Monomial::from_pairs(
            exps.iter().enumerate().map(|(i, &e)| (i as u16, e)).collect(),
        )
    }

    pub fn exponents(&self, dim: usize) -> Vec<u16> {
        let mut out = vec![0u16; dim];
        for &(i, e) in &self.exps {
            out[i as usize] = e;
        }
        out
    }

    pub fn pairs(&self) -> &[(u16, u16)] {
        &self.exps
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().map(|&(_, e)| e as u32).sum()
    }

    pub fn degree_of(&self, idx: usize) -> u16 {
        self.exps
            .iter()
            .find(|&&(i, _)| i as usize == idx)
            .map(|&(_, e)| e)
            .unwrap_or(0)
    }

    pub fn is_one(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut out: BTreeMap<u16, u16> = self.exps.iter().copied().collect();
        for &(i, e) in &other.exps {
            *out.entry(i).or_insert(0) += e;
        }
        Monomial { exps: out.into_iter().collect() }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exps
            .iter()
            .map(|&(i, e)| x[i as usize].powi(e as i32))
            .product()
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Graded lexicographic order: lower total degree first; within a degree,
/// larger exponent on an earlier variable comes first (so `x^2 < xy < y^2`).
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.degree().cmp(&other.degree()).then_with(|| {
            let mut a = self.exps.iter().peekable();
            let mut b = other.exps.iter().peekable();
            loop {
                match (a.peek(), b.peek()) {
                    (None, None) => return std::cmp::Ordering::Equal,
                    (Some(_), None) => return std::cmp::Ordering::Less,
                    (None, Some(_)) => return std::cmp::Ordering::Greater,
                    (Some(&&(ia, ea)), Some(&&(ib, eb))) => {
                        if ia != ib {
                            // earlier variable with positive exponent wins
                            return ia.cmp(&ib);
                        }
                        if ea != eb {
                            return eb.cmp(&ea);
                        }
                        a.next();
                        b.next();
                    }
                }
            }
        })
    }
}

/// Sparse multivariate polynomial with `f64` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    space: Arc<VarSpace>,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(space: &Arc<VarSpace>) -> Self {
        Polynomial { space: Arc::clone(space), terms: BTreeMap::new() }
    }

    pub fn constant(space: &Arc<VarSpace>, c: f64) -> Self {
        let mut p = Polynomial::zero(space);
        p.add_term(Monomial::one(), c);
        p
    }

    pub fn var(space: &Arc<VarSpace>, idx: usize) -> Self {
        assert!(idx < space.dim());
        let mut p = Polynomial::zero(space);
        p.add_term(Monomial::var(idx), 1.0);
        p
    }

    pub fn var_named(space: &Arc<VarSpace>, name: &str) -> Self {
        let idx = space
            .index_of(name)
            .unwrap_or_else(|| panic!("no indeterminate `{name}`"));
        Polynomial::var(space, idx)
    }

    pub fn from_terms(
        space: &Arc<VarSpace>,
        terms: impl IntoIterator<Item = (Monomial, f64)>,
    ) -> Self {
        let mut p = Polynomial::zero(space);
        for (m, c) in terms {
            p.add_term(m, c);
        }
        p
    }

    pub fn space(&self) -> &Arc<VarSpace> {
        &self.space
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        let v = self.terms.get(&m).copied().unwrap_or(0.0) + c;
        if v.abs() < DEDUP_TOL {
            self.terms.remove(&m);
        } else {
            self.terms.insert(m, v);
        }
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        same_space(&self.space, &other.space)?;
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> Polynomial {
        let mut out = Polynomial::zero(&self.space);
        for (m, c) in self.terms() {
            out.add_term(m.clone(), c * k);
        }
        out
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial, PolyError> {
        same_space(&self.space, &other.space)?;
        let mut out = Polynomial::zero(&self.space);
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn pow(&self, n: u32) -> Polynomial {
        let mut out = Polynomial::constant(&self.space, 1.0);
        for _ in 0..n {
            out = out.mul(self).expect("same space");
        }
        out
    }

    pub fn differentiate(&self, var_idx: usize) -> Polynomial {
        let mut out = Polynomial::zero(&self.space);
        for (m, c) in self.terms() {
            let e = m.degree_of(var_idx);
            if e == 0 {
                continue;
            }
            let mut pairs: Vec<(u16, u16)> = m.pairs().to_vec();
            for p in pairs.iter_mut() {
                if p.0 as usize == var_idx {
                    p.1 -= 1;
                }
            }
            out.add_term(Monomial::from_pairs(pairs), c * e as f64);
        }
        out
    }

    /// Substitute indeterminates by polynomials in a target space. Bindings
    /// are keyed by variable index in `self`'s space. Unbound indeterminates
    /// must exist by name in the target space.
    pub fn substitute(
        &self,
        target: &Arc<VarSpace>,
        bindings: &BTreeMap<usize, Polynomial>,
    ) -> Result<Polynomial, PolyError> {
        for b in bindings.values() {
            same_space(target, &b.space)?;
        }
        // image of every variable of self's space in the target space
        let mut images: Vec<Polynomial> = Vec::with_capacity(self.space.dim());
        for i in 0..self.space.dim() {
            if let Some(p) = bindings.get(&i) {
                images.push(p.clone());
            } else {
                let name = self.space.name(i);
                match target.index_of(name) {
                    Some(j) => images.push(Polynomial::var(target, j)),
                    None => {
                        return Err(PolyError::UnboundIndeterminate(name.to_string()))
                    }
                }
            }
        }
        let mut out = Polynomial::zero(target);
        for (m, c) in self.terms() {
            let mut term = Polynomial::constant(target, c);
            for &(i, e) in m.pairs() {
                term = term.mul(&images[i as usize].pow(e as u32))?;
            }
            out = out.add(&term)?;
        }
        Ok(out)
    }

    /// Re-express the polynomial in a superspace containing all of its
    /// variables by name.
    pub fn lift(&self, target: &Arc<VarSpace>) -> Result<Polynomial, PolyError> {
        self.substitute(target, &BTreeMap::new())
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64, PolyError> {
        if x.len() != self.space.dim() {
            return Err(PolyError::DimensionMismatch {
                expected: self.space.dim(),
                got: x.len(),
            });
        }
        Ok(self.terms().map(|(m, c)| c * m.eval(x)).sum())
    }

    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.terms().map(|(m, c)| c * m.eval(x)).sum()
    }

    /// Maximum degree in an individual variable.
    pub fn degree_in(&self, var_idx: usize) -> u16 {
        self.terms
            .keys()
            .map(|m| m.degree_of(var_idx))
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms() {
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
                first = false;
            } else if c < 0.0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let ac = c.abs();
            if m.is_one() || (ac - 1.0).abs() > 1e-12 {
                write!(f, "{ac}")?;
                if !m.is_one() {
                    write!(f, "*")?;
                }
            }
            let mut firstv = true;
            for &(i, e) in m.pairs() {
                if !firstv {
                    write!(f, "*")?;
                }
                firstv = false;
                write!(f, "{}", self.space.name(i as usize))?;
                if e > 1 {
                    write!(f, "^{e}")?;
                }
            }
            let _ = firstv;
        }
        Ok(())
    }
}

/// Dense vector of polynomials sharing one variable space.
#[derive(Debug, Clone)]
pub struct PolyVector {
    pub entries: Vec<Polynomial>,
}

impl PolyVector {
    pub fn new(entries: Vec<Polynomial>) -> Self {
        if let Some(first) = entries.first() {
            for e in &entries[1..] {
                same_space(first.space(), e.space()).expect("mixed spaces in PolyVector");
            }
        }
        PolyVector { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|p| p.eval_unchecked(x)).collect()
    }
}

/// Dense matrix of polynomials sharing one variable space.
#[derive(Debug, Clone)]
pub struct PolyMatrix {
    pub rows: Vec<Vec<Polynomial>>,
}

impl PolyMatrix {
    pub fn new(rows: Vec<Vec<Polynomial>>) -> Self {
        PolyMatrix { rows }
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.rows.first().map(|r| r.len()).unwrap_or(0)
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|p| p.eval_unchecked(x)).collect())
            .collect()
    }
}

/// Optional parity filter for [`monomial_basis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// All monomials of total degree `<= max_degree` in graded-lex order.
pub fn monomial_basis(
    space: &Arc<VarSpace>,
    max_degree: u32,
    parity: Option<Parity>,
) -> Vec<Monomial> {
    let n = space.dim();
    let mut out = Vec::new();
    let mut exps = vec![0u16; n];
    fn rec(exps: &mut Vec<u16>, pos: usize, remaining: u32, out: &mut Vec<Monomial>) {
        if pos == exps.len() {
            out.push(Monomial::from_exponents(exps));
            return;
        }
        for e in 0..=remaining {
            exps[pos] = e as u16;
            rec(exps, pos + 1, remaining - e, out);
        }
        exps[pos] = 0;
    }
    rec(&mut exps, 0, max_degree, &mut out);
    out.sort();
    out.dedup();
    if let Some(p) = parity {
        out.retain(|m| match p {
            Parity::Even => m.degree() % 2 == 0,
            Parity::Odd => m.degree() % 2 == 1,
        });
    }
    out
}

#[cfg(test)]
mod tests;
