//! Sum-of-squares program builder: decision polynomials, SOS / equality /
//! PSD constraints, and linear or linearized-logdet objectives, compiled to a
//! standard-form SDP.
//!
//! A logdet objective is realized per solve as its linearization
//! `Tr(W X)` with `W = (X_ref)^-1` at a caller-supplied reference point
//! (identity by default); callers re-linearize and re-solve until the logdet
//! value settles. This composes with the trust-region constraints that the
//! synthesis loop places around the same reference point.

mod expr;

#[cfg(test)]
mod tests;

pub use expr::{LinExpr, MatVarId, PolyExpr, ScalarVarId};

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;
use thiserror::Error;

use crate::poly::{monomial_basis, Monomial, Parity, Polynomial, VarSpace};
use crate::sdp::{Block, RowData, SdpSolution, SdpStandardForm, SymEntries};

#[derive(Debug, Error)]
pub enum SosError {
    #[error("expression has odd maximum degree {0}; it cannot be a sum of squares")]
    OddDegreeSos(u32),
    #[error("Gram basis of {size} monomials exceeds the cap of {cap}")]
    BasisTooLarge { size: usize, cap: usize },
    #[error("product of two decision-bearing expressions is bilinear")]
    Bilinear,
    #[error("operands live in different variable spaces")]
    SpaceMismatch,
    #[error("decision variable {0} is referenced by no constraint or objective")]
    UnusedVariable(String),
    #[error(transparent)]
    Poly(#[from] crate::poly::PolyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarKind {
    Free,
    Nonneg,
}

#[derive(Debug, Clone)]
struct MatInfo {
    dim: usize,
    /// The matrix decision variable is `floor * I + F` with `F >= 0`;
    /// a positive floor realizes constraints such as `E >= delta_E I`.
    floor: f64,
    label: String,
}

/// A polynomial decision variable: free coefficients over a monomial basis,
/// or a Gram-parameterized SOS polynomial.
#[derive(Debug, Clone)]
pub struct DecisionPolynomial {
    pub space: Arc<VarSpace>,
    pub basis: Vec<Monomial>,
    pub coeff_vars: Vec<ScalarVarId>,
    /// Present when the polynomial is Gram-parameterized (SOS by construction).
    pub gram: Option<MatVarId>,
    pub expr: PolyExpr,
}

/// Default cap on Gram basis size.
pub const DEFAULT_GRAM_CAP: usize = 5000;

#[derive(Debug, Clone, Default)]
pub struct SosProgram {
    scalars: Vec<ScalarKind>,
    mats: Vec<MatInfo>,
    /// Equality rows: each `LinExpr` is constrained to equal zero.
    rows: Vec<LinExpr>,
    /// Linear objective, maximized.
    objective: LinExpr,
    /// Linearized-logdet terms: `(matrix, weight)` adds
    /// `weight * logdet(X)` to the maximized objective.
    logdet: Vec<(MatVarId, f64)>,
    gram_cap: Option<usize>,
}

impl SosProgram {
    pub fn new() -> Self {
        SosProgram::default()
    }

    pub fn set_gram_cap(&mut self, cap: usize) {
        self.gram_cap = Some(cap);
    }

    pub fn declare_scalar(&mut self, kind: ScalarKind) -> ScalarVarId {
        self.scalars.push(kind);
        ScalarVarId(self.scalars.len() - 1)
    }

    /// Symmetric matrix decision variable constrained to `X >= floor * I`.
    pub fn declare_psd_matrix(&mut self, dim: usize, floor: f64, label: &str) -> MatVarId {
        self.mats.push(MatInfo { dim, floor, label: label.into() });
        MatVarId(self.mats.len() - 1)
    }

    /// Polynomial with one free coefficient per basis monomial.
    pub fn declare_poly(
        &mut self,
        space: &Arc<VarSpace>,
        degree: u32,
        parity: Option<Parity>,
    ) -> DecisionPolynomial {
        let basis = monomial_basis(space, degree, parity);
        let mut expr = PolyExpr::zero(space);
        let mut coeff_vars = Vec::with_capacity(basis.len());
        for m in &basis {
            let id = self.declare_scalar(ScalarKind::Free);
            coeff_vars.push(id);
            expr = expr
                .add(&PolyExpr::term(space, m.clone(), LinExpr::scalar(id)))
                .expect("same space");
        }
        DecisionPolynomial { space: space.clone(), basis, coeff_vars, gram: None, expr }
    }

    /// Gram-parameterized polynomial, SOS by construction.
    pub fn declare_sos_poly(
        &mut self,
        space: &Arc<VarSpace>,
        degree: u32,
        label: &str,
    ) -> Result<DecisionPolynomial, SosError> {
        if degree % 2 != 0 {
            return Err(SosError::OddDegreeSos(degree));
        }
        let z = monomial_basis(space, degree / 2, None);
        let gram = self.declare_psd_matrix(z.len(), 0.0, label);
        let expr = gram_expansion(space, &z, gram);
        let basis = expr.support().cloned().collect();
        Ok(DecisionPolynomial {
            space: space.clone(),
            basis,
            coeff_vars: Vec::new(),
            gram: Some(gram),
            expr,
        })
    }

    /// Quadratic form `x_S' X x_S` over the listed variable indices.
    pub fn quad_form(
        &self,
        mat: MatVarId,
        space: &Arc<VarSpace>,
        vars: &[usize],
    ) -> PolyExpr {
        let mut out = PolyExpr::zero(space);
        for (i, &vi) in vars.iter().enumerate() {
            for (j, &vj) in vars.iter().enumerate().skip(i) {
                let m = Monomial::var(vi).mul(&Monomial::var(vj));
                let factor = if i == j { 1.0 } else { 2.0 };
                out = out
                    .add(&PolyExpr::term(
                        space,
                        m,
                        LinExpr::mat_entry(mat, i, j).scaled(factor),
                    ))
                    .expect("same space");
            }
        }
        out
    }

    /// Constrain a polynomial expression to be identically zero
    /// (coefficient matching).
    pub fn add_poly_eq_zero(&mut self, expr: &PolyExpr) {
        for (_, coeff) in expr.terms() {
            self.rows.push(coeff.clone());
        }
    }

    pub fn add_scalar_eq(&mut self, lhs: &LinExpr, rhs: f64) {
        let mut row = lhs.clone();
        row.constant -= rhs;
        self.rows.push(row);
    }

    /// `expr >= 0` via a nonnegative slack.
    pub fn add_scalar_geq(&mut self, expr: &LinExpr) {
        let slack = self.declare_scalar(ScalarKind::Nonneg);
        let mut row = expr.clone();
        row.add_scaled(&LinExpr::scalar(slack), -1.0);
        self.rows.push(row);
    }

    /// Constrain `expr` to be SOS: one Gram block over the half-Newton
    /// rectangular basis plus coefficient-matching equalities.
    pub fn add_sos_constraint(&mut self, expr: &PolyExpr) -> Result<MatVarId, SosError> {
        let z = self.gram_basis(expr)?;
        let gram = self.declare_psd_matrix(z.len(), 0.0, "gram");
        let gexpr = gram_expansion(expr.space(), &z, gram);
        let diff = expr.sub(&gexpr)?;
        self.add_poly_eq_zero(&diff);
        Ok(gram)
    }

    /// Certify `{V <= 1} subset {g <= 0}` via `-g + L_g (V - 1)` SOS.
    /// Exactly one of `v`, `l_g` may carry decision variables.
    pub fn add_validity_constraint(
        &mut self,
        g: &Polynomial,
        v: &PolyExpr,
        l_g: &PolyExpr,
    ) -> Result<MatVarId, SosError> {
        let one = PolyExpr::from_poly(&Polynomial::constant(v.space(), 1.0));
        let expr = l_g
            .mul(&v.sub(&one)?)?
            .sub(&PolyExpr::from_poly(g))?;
        self.add_sos_constraint(&expr)
    }

    /// Constrain a symmetric matrix of affine expressions to be PSD via an
    /// entrywise-matched slack block.
    pub fn add_psd_constraint(&mut self, entries: &[Vec<LinExpr>], label: &str) {
        let n = entries.len();
        let slack = self.declare_psd_matrix(n, 0.0, label);
        for (r, row) in entries.iter().enumerate() {
            for (c, e) in row.iter().enumerate().skip(r) {
                let mut eq = e.clone();
                eq.add_scaled(&LinExpr::mat_entry(slack, r, c), -1.0);
                self.rows.push(eq);
            }
        }
    }

    pub fn add_linear_objective(&mut self, functional: &LinExpr) {
        self.objective.add_scaled(functional, 1.0);
    }

    /// Add `weight * logdet(X)` to the maximized objective (linearized at
    /// compile/relinearize time).
    pub fn set_logdet_objective(&mut self, mat: MatVarId, weight: f64) {
        self.logdet.push((mat, weight));
    }

    /// Half-degree Gram basis covering the expression's support: a cheap
    /// rectangular over-approximation of half the Newton polytope, with
    /// per-variable exponent and total-degree windows.
    fn gram_basis(&self, expr: &PolyExpr) -> Result<Vec<Monomial>, SosError> {
        let deg = expr.degree();
        if deg % 2 != 0 {
            return Err(SosError::OddDegreeSos(deg));
        }
        let dim = expr.space().dim();
        if expr.num_terms() == 0 {
            return Ok(vec![Monomial::one()]);
        }
        let mut lo = vec![u16::MAX; dim];
        let mut hi = vec![0u16; dim];
        let mut lot = u32::MAX;
        let mut hit = 0u32;
        for m in expr.support() {
            for v in 0..dim {
                let e = m.degree_of(v);
                lo[v] = lo[v].min(e);
                hi[v] = hi[v].max(e);
            }
            lot = lot.min(m.degree());
            hit = hit.max(m.degree());
        }
        let blo: Vec<u16> = lo.iter().map(|&e| e / 2).collect();
        let bhi: Vec<u16> = hi.iter().map(|&e| e.div_ceil(2)).collect();
        let tlo = lot / 2;
        let thi = hit.div_ceil(2);
        let cap = self.gram_cap.unwrap_or(DEFAULT_GRAM_CAP);
        let mut basis = Vec::new();
        let mut exps = vec![0u16; dim];
        enumerate_boxed(&blo, &bhi, tlo, thi, 0, 0, &mut exps, &mut basis, cap)
            .map_err(|size| SosError::BasisTooLarge { size, cap })?;
        basis.sort();
        Ok(basis)
    }

    pub fn num_scalars(&self) -> usize {
        self.scalars.len()
    }

    pub fn num_matrices(&self) -> usize {
        self.mats.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn compile(&self) -> Result<CompiledSdp, SosError> {
        // usage check
        let mut scalar_used = vec![false; self.scalars.len()];
        let mut mat_used = vec![false; self.mats.len()];
        let mark = |e: &LinExpr, su: &mut Vec<bool>, mu: &mut Vec<bool>| {
            for id in e.scalars.keys() {
                su[id.0] = true;
            }
            for (id, _, _) in e.mat_entries.keys() {
                mu[id.0] = true;
            }
        };
        for row in &self.rows {
            mark(row, &mut scalar_used, &mut mat_used);
        }
        mark(&self.objective, &mut scalar_used, &mut mat_used);
        for (id, _) in &self.logdet {
            mat_used[id.0] = true;
        }
        if let Some(i) = scalar_used.iter().position(|u| !u) {
            return Err(SosError::UnusedVariable(format!("scalar #{i}")));
        }
        if let Some(i) = mat_used.iter().position(|u| !u) {
            return Err(SosError::UnusedVariable(format!(
                "matrix #{i} ({})",
                self.mats[i].label
            )));
        }

        // variable layout: one PSD/1x1 block per matrix, a diagonal block for
        // nonnegative scalars, free variables for the rest
        let mut blocks: Vec<Block> = self.mats.iter().map(|m| Block::Psd(m.dim)).collect();
        let nonneg: Vec<usize> = self
            .scalars
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == ScalarKind::Nonneg)
            .map(|(i, _)| i)
            .collect();
        let diag_block = if nonneg.is_empty() {
            None
        } else {
            blocks.push(Block::Diag(nonneg.len()));
            Some(blocks.len() - 1)
        };
        let mut scalar_loc = vec![ScalarLoc::Free(usize::MAX); self.scalars.len()];
        let mut free_count = 0usize;
        for (i, kind) in self.scalars.iter().enumerate() {
            match kind {
                ScalarKind::Free => {
                    scalar_loc[i] = ScalarLoc::Free(free_count);
                    free_count += 1;
                }
                ScalarKind::Nonneg => {
                    let pos = nonneg.iter().position(|&n| n == i).unwrap();
                    scalar_loc[i] = ScalarLoc::Diag(pos);
                }
            }
        }

        let mut sdp = SdpStandardForm::new(blocks, free_count);

        let lower = |e: &LinExpr| -> (RowData, f64) {
            let mut by_block: BTreeMap<usize, SymEntries> = BTreeMap::new();
            let mut free: Vec<(usize, f64)> = Vec::new();
            let mut shift = 0.0;
            for (&(mid, r, c), &coeff) in &e.mat_entries {
                let a = if r == c { coeff } else { coeff / 2.0 };
                by_block.entry(mid.0).or_default().push((r, c, a));
                if r == c {
                    shift += coeff * self.mats[mid.0].floor;
                }
            }
            for (&sid, &coeff) in &e.scalars {
                match scalar_loc[sid.0] {
                    ScalarLoc::Free(fi) => free.push((fi, coeff)),
                    ScalarLoc::Diag(di) => by_block
                        .entry(diag_block.unwrap())
                        .or_default()
                        .push((di, di, coeff)),
                }
            }
            let blocks = by_block.into_iter().collect();
            (RowData { blocks, free }, shift)
        };

        for row in &self.rows {
            let (data, shift) = lower(row);
            sdp.add_row(data, -row.constant - shift);
        }

        // objective: the SDP minimizes, the program maximizes
        let neg_obj = self.objective.scaled(-1.0);
        let (cdata, cshift) = lower(&neg_obj);
        let mut base_c_blocks = vec![Vec::new(); sdp.blocks.len()];
        for (bi, entries) in cdata.blocks {
            base_c_blocks[bi] = entries;
        }
        let mut c_free = vec![0.0; free_count];
        for (fi, v) in cdata.free {
            c_free[fi] = v;
        }
        sdp.c_free = c_free;
        sdp.obj_const = neg_obj.constant + cshift;

        let mut compiled = CompiledSdp {
            sdp,
            scalar_loc,
            diag_block,
            mat_floor: self.mats.iter().map(|m| m.floor).collect(),
            mat_dim: self.mats.iter().map(|m| m.dim).collect(),
            logdet: self.logdet.clone(),
            base_c_blocks,
            base_obj_const: neg_obj.constant + cshift,
        };
        let idents: Vec<(MatVarId, Array2<f64>)> = self
            .logdet
            .iter()
            .map(|&(id, _)| (id, Array2::eye(self.mats[id.0].dim)))
            .collect();
        compiled.relinearize_logdet(&idents);
        Ok(compiled)
    }
}

fn gram_expansion(space: &Arc<VarSpace>, z: &[Monomial], gram: MatVarId) -> PolyExpr {
    let mut out = PolyExpr::zero(space);
    for (i, zi) in z.iter().enumerate() {
        for (j, zj) in z.iter().enumerate().skip(i) {
            let m = zi.mul(zj);
            let factor = if i == j { 1.0 } else { 2.0 };
            out = out
                .add(&PolyExpr::term(
                    space,
                    m,
                    LinExpr::mat_entry(gram, i, j).scaled(factor),
                ))
                .expect("same space");
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn enumerate_boxed(
    lo: &[u16],
    hi: &[u16],
    tlo: u32,
    thi: u32,
    var: usize,
    total: u32,
    exps: &mut Vec<u16>,
    out: &mut Vec<Monomial>,
    cap: usize,
) -> Result<(), usize> {
    if var == lo.len() {
        if total >= tlo {
            if out.len() >= cap {
                return Err(out.len() + 1);
            }
            out.push(Monomial::from_exponents(exps));
        }
        return Ok(());
    }
    for e in lo[var]..=hi[var] {
        let t = total + e as u32;
        if t > thi {
            break;
        }
        exps[var] = e;
        enumerate_boxed(lo, hi, tlo, thi, var + 1, t, exps, out, cap)?;
        exps[var] = 0;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalarLoc {
    /// Index into the SDP free-variable vector.
    Free(usize),
    /// Position in the shared diagonal block.
    Diag(usize),
}

/// A compiled standard-form SDP plus the mapping back to program variables.
#[derive(Debug, Clone)]
pub struct CompiledSdp {
    pub sdp: SdpStandardForm,
    pub scalar_loc: Vec<ScalarLoc>,
    pub diag_block: Option<usize>,
    pub mat_floor: Vec<f64>,
    pub mat_dim: Vec<usize>,
    pub logdet: Vec<(MatVarId, f64)>,
    /// Objective data without the logdet linearization, for re-linearizing.
    base_c_blocks: Vec<SymEntries>,
    base_obj_const: f64,
}

impl CompiledSdp {
    /// Install the logdet linearization `weight * Tr(W X)` for the given
    /// reference inverses `W`. Matrices not listed keep `W = I`.
    pub fn relinearize_logdet(&mut self, inverses: &[(MatVarId, Array2<f64>)]) {
        let mut c_blocks = self.base_c_blocks.clone();
        let mut obj_const = self.base_obj_const;
        for &(id, weight) in &self.logdet {
            let dim = self.mat_dim[id.0];
            let w: Array2<f64> = inverses
                .iter()
                .find(|(mid, _)| *mid == id)
                .map(|(_, w)| w.clone())
                .unwrap_or_else(|| Array2::eye(dim));
            // maximize weight * Tr(W (floor I + F)): C -= weight * W
            for r in 0..dim {
                for c in r..dim {
                    if w[(r, c)] != 0.0 {
                        c_blocks[id.0].push((r, c, -weight * w[(r, c)]));
                    }
                }
                obj_const -= weight * self.mat_floor[id.0] * w[(r, r)];
            }
        }
        // merge duplicate entries so serialization stays canonical
        for entries in c_blocks.iter_mut() {
            let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            for &(r, c, v) in entries.iter() {
                *merged.entry((r, c)).or_insert(0.0) += v;
            }
            *entries = merged
                .into_iter()
                .filter(|&(_, v)| v != 0.0)
                .map(|((r, c), v)| (r, c, v))
                .collect();
        }
        self.sdp.c_blocks = c_blocks;
        self.sdp.obj_const = obj_const;
    }

    /// Program-variable assignment from an SDP solution.
    pub fn extract(&self, sol: &SdpSolution) -> Assignment {
        let scalars = self
            .scalar_loc
            .iter()
            .map(|loc| match *loc {
                ScalarLoc::Free(fi) => sol.x_free[fi],
                ScalarLoc::Diag(di) => sol.x_blocks[self.diag_block.unwrap()][(di, di)],
            })
            .collect();
        let mats = self
            .mat_dim
            .iter()
            .enumerate()
            .map(|(i, &dim)| {
                let mut x = sol.x_blocks[i].clone();
                for d in 0..dim {
                    x[(d, d)] += self.mat_floor[i];
                }
                x
            })
            .collect();
        Assignment { scalars, mats }
    }

    /// Maximized objective value of a solution (negates the minimizing SDP).
    pub fn objective_value(&self, sol: &SdpSolution) -> f64 {
        -sol.primal_obj
    }

    /// Canonical byte serialization (SDPA sparse text).
    pub fn serialize(&self) -> String {
        crate::sdp::format_sdpa(&self.sdp)
    }
}

/// Decision-variable values extracted from a solved SDP.
#[derive(Debug, Clone)]
pub struct Assignment {
    pub scalars: Vec<f64>,
    pub mats: Vec<Array2<f64>>,
}

impl Assignment {
    pub fn scalar(&self, id: ScalarVarId) -> f64 {
        self.scalars[id.0]
    }

    pub fn mat(&self, id: MatVarId) -> &Array2<f64> {
        &self.mats[id.0]
    }

    pub fn value(&self, e: &LinExpr) -> f64 {
        let mut v = e.constant;
        for (&id, &c) in &e.scalars {
            v += c * self.scalars[id.0];
        }
        for (&(id, r, c_), &coeff) in &e.mat_entries {
            v += coeff * self.mats[id.0][(r, c_)];
        }
        v
    }

    /// Fixed polynomial obtained by substituting the assignment into a
    /// decision-bearing polynomial expression.
    pub fn realize(&self, expr: &PolyExpr) -> Polynomial {
        let mut p = Polynomial::zero(expr.space());
        for (m, coeff) in expr.terms() {
            p.add_term(m.clone(), self.value(coeff));
        }
        p
    }
}
