//! Affine expressions in scalar and symmetric-matrix decision variables, and
//! polynomials whose coefficients are such expressions.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::poly::{Monomial, Polynomial, VarSpace};

use super::SosError;

/// Scalar decision variable (free or nonnegative).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ScalarVarId(pub(crate) usize);

/// Symmetric PSD-constrained matrix decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MatVarId(pub(crate) usize);

const DROP_TOL: f64 = 1e-14;

/// Affine expression `constant + sum c_k s_k + sum c_{v,r,c} X_v[r,c]`.
///
/// Matrix entries are keyed with `r <= c`; the coefficient applies to the
/// single distinct entry `X[r,c] = X[c,r]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub scalars: BTreeMap<ScalarVarId, f64>,
    pub mat_entries: BTreeMap<(MatVarId, usize, usize), f64>,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        LinExpr { constant: c, ..Default::default() }
    }

    pub fn scalar(id: ScalarVarId) -> Self {
        let mut e = LinExpr::default();
        e.scalars.insert(id, 1.0);
        e
    }

    pub fn mat_entry(id: MatVarId, r: usize, c: usize) -> Self {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        let mut e = LinExpr::default();
        e.mat_entries.insert((id, r, c), 1.0);
        e
    }

    pub fn is_constant(&self) -> bool {
        self.scalars.is_empty() && self.mat_entries.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.is_constant() && self.constant == 0.0
    }

    pub fn add_scaled(&mut self, other: &LinExpr, k: f64) {
        self.constant += k * other.constant;
        for (&id, &c) in &other.scalars {
            let v = self.scalars.entry(id).or_insert(0.0);
            *v += k * c;
            if v.abs() < DROP_TOL {
                self.scalars.remove(&id);
            }
        }
        for (&key, &c) in &other.mat_entries {
            let v = self.mat_entries.entry(key).or_insert(0.0);
            *v += k * c;
            if v.abs() < DROP_TOL {
                self.mat_entries.remove(&key);
            }
        }
    }

    pub fn scaled(&self, k: f64) -> LinExpr {
        let mut out = LinExpr::default();
        out.add_scaled(self, k);
        out
    }
}

/// Polynomial with `LinExpr` coefficients: the currency of SOS constraints.
#[derive(Debug, Clone)]
pub struct PolyExpr {
    space: Arc<VarSpace>,
    terms: BTreeMap<Monomial, LinExpr>,
}

impl PolyExpr {
    pub fn zero(space: &Arc<VarSpace>) -> Self {
        PolyExpr { space: space.clone(), terms: BTreeMap::new() }
    }

    pub fn from_poly(p: &Polynomial) -> Self {
        let mut out = PolyExpr::zero(p.space());
        for (m, c) in p.terms() {
            out.terms.insert(m.clone(), LinExpr::constant(c));
        }
        out
    }

    /// A single monomial with a decision-expression coefficient.
    pub fn term(space: &Arc<VarSpace>, m: Monomial, coeff: LinExpr) -> Self {
        let mut out = PolyExpr::zero(space);
        if !coeff.is_zero() {
            out.terms.insert(m, coeff);
        }
        out
    }

    pub fn space(&self) -> &Arc<VarSpace> {
        &self.space
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &LinExpr)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> LinExpr {
        self.terms.get(m).cloned().unwrap_or_default()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn is_constant_poly(&self) -> bool {
        self.terms.values().all(|e| e.is_constant())
    }

    fn check_space(&self, other: &PolyExpr) -> Result<(), SosError> {
        if !Arc::ptr_eq(&self.space, &other.space) && self.space.names() != other.space.names()
        {
            return Err(SosError::SpaceMismatch);
        }
        Ok(())
    }

    pub fn add_scaled(&mut self, other: &PolyExpr, k: f64) -> Result<(), SosError> {
        self.check_space(other)?;
        for (m, e) in &other.terms {
            let slot = self.terms.entry(m.clone()).or_default();
            slot.add_scaled(e, k);
            if slot.is_zero() {
                self.terms.remove(m);
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &PolyExpr) -> Result<PolyExpr, SosError> {
        let mut out = self.clone();
        out.add_scaled(other, 1.0)?;
        Ok(out)
    }

    pub fn sub(&self, other: &PolyExpr) -> Result<PolyExpr, SosError> {
        let mut out = self.clone();
        out.add_scaled(other, -1.0)?;
        Ok(out)
    }

    pub fn scale(&self, k: f64) -> PolyExpr {
        let mut out = PolyExpr::zero(&self.space);
        for (m, e) in &self.terms {
            let s = e.scaled(k);
            if !s.is_zero() {
                out.terms.insert(m.clone(), s);
            }
        }
        out
    }

    pub fn neg(&self) -> PolyExpr {
        self.scale(-1.0)
    }

    /// Multiply by a fixed polynomial. Multiplying two decision-bearing
    /// expressions is bilinear and rejected by `mul`.
    pub fn mul_poly(&self, p: &Polynomial) -> Result<PolyExpr, SosError> {
        if self.space.names() != p.space().names() {
            return Err(SosError::SpaceMismatch);
        }
        let mut out = PolyExpr::zero(&self.space);
        for (m1, e) in &self.terms {
            for (m2, c) in p.terms() {
                let m = m1.mul(m2);
                let slot = out.terms.entry(m).or_default();
                slot.add_scaled(e, c);
            }
        }
        out.terms.retain(|_, e| !e.is_zero());
        Ok(out)
    }

    pub fn mul(&self, other: &PolyExpr) -> Result<PolyExpr, SosError> {
        self.check_space(other)?;
        if self.is_constant_poly() {
            return other.mul_poly(&self.to_fixed().expect("constant poly"));
        }
        if other.is_constant_poly() {
            return self.mul_poly(&other.to_fixed().expect("constant poly"));
        }
        Err(SosError::Bilinear)
    }

    /// The fixed polynomial this expression denotes, if it has no decision
    /// variables.
    pub fn to_fixed(&self) -> Option<Polynomial> {
        if !self.is_constant_poly() {
            return None;
        }
        let mut p = Polynomial::zero(&self.space);
        for (m, e) in &self.terms {
            p.add_term(m.clone(), e.constant);
        }
        Some(p)
    }

    /// All monomials with a (possibly symbolic) nonzero coefficient.
    pub fn support(&self) -> impl Iterator<Item = &Monomial> {
        self.terms.keys()
    }
}
