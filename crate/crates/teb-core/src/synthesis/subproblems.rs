//! The three convex sub-problems of the alternation.
//!
//! With the level function fixed, the controller sub-problem minimizes the
//! invariance slack over polynomial controllers and multipliers. With the
//! controller and multipliers fixed, the level sub-problem reshapes the level
//! function and grows the bounding ellipsoid. The ellipsoid step alone fits
//! the tightest ellipsoid around a fixed sublevel set.

use ndarray::Array2;
use ndarray_linalg::{Cholesky, Inverse, UPLO};

use crate::poly::{monomial_basis, Monomial, Polynomial, VarSpace};
use crate::sosprog::{
    DecisionPolynomial, LinExpr, PolyExpr, ScalarKind, ScalarVarId, SosProgram,
};

use super::{logdet, solve_compiled, zero_at_origin, ProblemData, SynthesisError};

#[derive(Debug, Clone)]
pub struct KSolution {
    /// Tracking controller, one entry per tracking input, in the
    /// relative+planner-control indeterminates (relative-state monomials
    /// only).
    pub k: Vec<Polynomial>,
    pub l_lya: Polynomial,
    pub l_pc: Vec<Polynomial>,
    pub l_s: Vec<Polynomial>,
    /// Minimized invariance slack.
    pub gamma_c: f64,
}

#[derive(Debug, Clone)]
pub struct EllipsoidSolution {
    pub e: Array2<f64>,
    pub l_e: Polynomial,
    pub l_g: Vec<Polynomial>,
    pub logdet: f64,
}

/// Objective mode for the level sub-problem.
#[derive(Debug, Clone)]
pub enum VMode {
    /// Minimize the slacks, with the invariance slack capped by the
    /// controller sub-problem's value (initialization loop).
    Init { gamma_cap: f64 },
    /// Maximize `logdet(E) - lambda * (gamma + |eps|_1)` inside the trust
    /// region `alpha_lower * E_star <= E <= (1 + alpha) * E_star`.
    Trust { e_star: Array2<f64>, alpha: f64 },
}

#[derive(Debug, Clone)]
pub struct VSolution {
    pub v_tilde: Polynomial,
    pub e: Array2<f64>,
    pub l_pc: Vec<Polynomial>,
    pub gamma: f64,
    pub eps: Vec<f64>,
    pub logdet: f64,
}

impl VSolution {
    pub fn eps_inf(&self) -> f64 {
        self.eps.iter().cloned().fold(0.0, f64::max)
    }

    /// The slack gate accepting an iterate: `max(gamma, |eps|_inf) <= delta`.
    pub fn slacks_ok(&self, delta: f64) -> bool {
        self.gamma.max(self.eps_inf()) <= delta
    }
}

/// Weight of the volume tie-breaker in the slack-minimizing mode.
const INIT_VOLUME_TIEBREAK: f64 = 1e-6;

/// If the expression's total degree is odd, append a zero-pinned filler term
/// one degree up so the Gram parameterization (which needs an even degree)
/// applies. The filler coefficient is constrained to zero, so the expression
/// is unchanged.
fn pad_even(prog: &mut SosProgram, expr: PolyExpr) -> PolyExpr {
    if expr.degree() % 2 == 0 {
        return expr;
    }
    let s = prog.declare_scalar(ScalarKind::Free);
    prog.add_scalar_eq(&LinExpr::scalar(s), 0.0);
    let filler = Monomial::from_pairs(vec![(0, (expr.degree() + 1) as u16)]);
    expr.add(&PolyExpr::term(expr.space(), filler, LinExpr::scalar(s)))
        .expect("same space")
}

/// Rescale an SOS-constraint expression to unit magnitude. `p` is SOS iff
/// `p / s` is, and unit scale keeps the matched Gram block well-conditioned
/// when multipliers fixed from an earlier step carry large coefficients.
fn unit_scale(expr: PolyExpr) -> PolyExpr {
    let mut s: f64 = 0.0;
    for (_, e) in expr.terms() {
        s = s.max(e.constant.abs());
        for v in e.scalars.values() {
            s = s.max(v.abs());
        }
        for v in e.mat_entries.values() {
            s = s.max(v.abs());
        }
    }
    if s > 1.0 {
        expr.scale(1.0 / s)
    } else {
        expr
    }
}

/// Coordinate change making an incumbent ellipsoid the unit ball.
///
/// For `E* = U' U` (upper Cholesky factor), the map `y = U r` sends
/// `{r : r' E* r <= 1}` to the unit ball. Solving the ellipsoid and level
/// steps in `y` keeps their Gram blocks near unit scale even when the
/// incumbent has grown large or anisotropic; results are mapped back
/// afterwards. `None` when the incumbent is not positive definite.
struct Precond {
    u: Array2<f64>,
    u_inv: Array2<f64>,
}

impl Precond {
    fn new(e_star: &Array2<f64>) -> Option<Precond> {
        let u = e_star.cholesky(UPLO::Upper).ok()?;
        let u_inv = u.inv().ok()?;
        Some(Precond { u, u_inv })
    }

    /// Rewrite a polynomial in `r` as one in `y` via `r = U^-1 y`.
    fn to_y(&self, p: &Polynomial) -> Result<Polynomial, SynthesisError> {
        Ok(linear_change(p, &self.u_inv)?)
    }

    /// Rewrite a polynomial in `y` back to `r` via `y = U r`.
    fn to_r(&self, p: &Polynomial) -> Result<Polynomial, SynthesisError> {
        Ok(linear_change(p, &self.u)?)
    }

    /// Map an ellipsoid matrix solved in `y` back: `E = U' E_y U`.
    fn e_back(&self, e_y: &Array2<f64>) -> Array2<f64> {
        self.u.t().dot(e_y).dot(&self.u)
    }
}

/// Substitute `x_j <- sum_k m[j][k] x_k` (the variables are reused as the new
/// coordinates).
fn linear_change(
    p: &Polynomial,
    m: &Array2<f64>,
) -> Result<Polynomial, crate::poly::PolyError> {
    let space = p.space();
    let mut bindings = std::collections::BTreeMap::new();
    for j in 0..m.nrows() {
        let mut row = Polynomial::zero(space);
        for k in 0..m.ncols() {
            if m[[j, k]] != 0.0 {
                row.add_term(Monomial::from_pairs(vec![(k as u16, 1)]), m[[j, k]]);
            }
        }
        bindings.insert(j, row);
    }
    p.substitute(space, &bindings)
}

/// Declare a free polynomial over only the first `n_vars` variables of
/// `space` (they must be the leading variables).
fn declare_poly_on_prefix(
    prog: &mut SosProgram,
    space: &std::sync::Arc<VarSpace>,
    n_vars: usize,
    degree: u32,
) -> DecisionPolynomial {
    let sub = VarSpace::new(space.names()[..n_vars].to_vec());
    let basis = monomial_basis(&sub, degree, None);
    let mut expr = PolyExpr::zero(space);
    let mut coeff_vars = Vec::with_capacity(basis.len());
    for m in &basis {
        let id = prog.declare_scalar(ScalarKind::Free);
        coeff_vars.push(id);
        // Identical indices: the prefix variables keep their positions.
        expr = expr
            .add(&PolyExpr::term(space, m.clone(), LinExpr::scalar(id)))
            .expect("same space");
    }
    DecisionPolynomial {
        space: space.clone(),
        basis,
        coeff_vars,
        gram: None,
        expr,
    }
}

/// Multiply a fixed polynomial by a single decision scalar.
fn poly_times_scalar(p: &Polynomial, id: ScalarVarId) -> PolyExpr {
    let mut out = PolyExpr::zero(p.space());
    for (m, c) in p.terms() {
        out = out
            .add(&PolyExpr::term(
                p.space(),
                m.clone(),
                LinExpr::scalar(id).scaled(c),
            ))
            .expect("same space");
    }
    out
}

fn const_term(space: &std::sync::Arc<VarSpace>, coeff: LinExpr) -> PolyExpr {
    PolyExpr::term(space, Monomial::from_pairs(Vec::new()), coeff)
}

/// Substitute `x_i <- sum_k m[i][k] x_k` for the leading `rows` variables,
/// leaving the remaining variables untouched.
fn subst_prefix(
    p: &Polynomial,
    m: &Array2<f64>,
    rows: usize,
) -> Result<Polynomial, SynthesisError> {
    let mut bindings = std::collections::BTreeMap::new();
    for i in 0..rows {
        let mut row = Polynomial::zero(p.space());
        for k in 0..rows {
            if m[[i, k]] != 0.0 {
                row.add_term(Monomial::from_pairs(vec![(k as u16, 1)]), m[[i, k]]);
            }
        }
        bindings.insert(i, row);
    }
    Ok(p.substitute(p.space(), &bindings)?)
}

/// `subst_prefix` lifted to polynomials with decision-variable coefficients.
fn subst_prefix_expr(
    e: &PolyExpr,
    m: &Array2<f64>,
    rows: usize,
) -> Result<PolyExpr, SynthesisError> {
    let sp = e.space().clone();
    let mut out = PolyExpr::zero(&sp);
    for (mono, l) in e.terms() {
        let mut p = Polynomial::zero(&sp);
        p.add_term(mono.clone(), 1.0);
        let ps = subst_prefix(&p, m, rows)?;
        for (m2, c) in ps.terms() {
            out = out.add(&PolyExpr::term(&sp, m2.clone(), l.scaled(c)))?;
        }
    }
    Ok(out)
}

/// Upper-Cholesky factor `S` (and its inverse) of half the Hessian at the
/// origin of a level function on the full state space, so that `y = S r`
/// maps the function's unit sublevel set near the unit ball. `None` when the
/// Hessian is not positive definite.
fn hessian_scale(
    pd: &ProblemData,
    v: &Polynomial,
) -> Option<(Array2<f64>, Array2<f64>)> {
    let n_r = pd.mp.n_r;
    let mut h = Array2::<f64>::zeros((n_r, n_r));
    let origin = vec![0.0; pd.xsp.dim()];
    for i in 0..n_r {
        let di = v.differentiate(i);
        for j in 0..n_r {
            h[[i, j]] = 0.5 * di.differentiate(j).eval_unchecked(&origin);
        }
    }
    let s = h.cholesky(UPLO::Upper).ok()?;
    let s_inv = s.inv().ok()?;
    Some((s, s_inv))
}

/// Controller sub-problem: for a fixed level function, minimize `gamma` such
/// that the closed loop satisfies `dV/dt <= gamma` on the unit level set under
/// all admissible planner controls, and the controller respects the tracking
/// control polytope on the sublevel set (both certified by SOS multipliers).
///
/// `gamma_cap`, when set, additionally constrains `gamma <= cap`.
pub fn k_subproblem(
    pd: &ProblemData,
    v_tilde: &Polynomial,
    gamma_cap: Option<f64>,
) -> Result<KSolution, SynthesisError> {
    match k_subproblem_inner(pd, v_tilde, gamma_cap, false) {
        // As the level set shrinks across iterations its coefficients grow
        // and the solver's achievable primal residual floors out. Retry once
        // in coordinates where the level set is near the unit ball; kept as
        // a fallback because the re-mapped multipliers are less natural for
        // the subsequent level-function step.
        Err(SynthesisError::Numerical { .. }) => {
            k_subproblem_inner(pd, v_tilde, gamma_cap, true)
        }
        other => other,
    }
}

fn k_subproblem_inner(
    pd: &ProblemData,
    v_tilde: &Polynomial,
    gamma_cap: Option<f64>,
    precondition: bool,
) -> Result<KSolution, SynthesisError> {
    let v = pd.compose_fixed(v_tilde)?;
    let one = Polynomial::constant(&pd.xsp, 1.0);
    let v_minus_1 = v.sub(&one)?;
    let n_r = pd.mp.n_r;
    let m_s = pd.mp.m_s;

    // `y = S r` maps the unit level set near the unit ball; solve there and
    // map the controller and multipliers back with `y = S r`.
    let precond = if precondition { hessian_scale(pd, &v) } else { None };
    let subs_to_y = |p: &Polynomial| -> Result<Polynomial, SynthesisError> {
        match &precond {
            Some((_, s_inv)) => subst_prefix(p, s_inv, n_r),
            None => Ok(p.clone()),
        }
    };
    let subs_to_r = |p: &Polynomial| -> Result<Polynomial, SynthesisError> {
        match &precond {
            Some((s, _)) => subst_prefix(p, s, n_r),
            None => Ok(p.clone()),
        }
    };
    let v_minus_1 = subs_to_y(&v_minus_1)?;

    let mut prog = SosProgram::new();
    let gamma = prog.declare_scalar(ScalarKind::Free);
    let k: Vec<DecisionPolynomial> = (0..m_s)
        .map(|_| declare_poly_on_prefix(&mut prog, &pd.xsp, n_r, pd.cfg.deg_k))
        .collect();

    // dV/dt = grad V . (h + B u_s) with u_s = K(r)
    let dv: Vec<Polynomial> = (0..n_r).map(|i| v.differentiate(i)).collect();
    let mut vdot_fixed = Polynomial::zero(&pd.xsp);
    for i in 0..n_r {
        vdot_fixed = vdot_fixed.add(&dv[i].mul(&pd.h_x[i])?)?;
    }
    let mut vdot = PolyExpr::from_poly(&subs_to_y(&vdot_fixed)?);
    for (j, kj) in k.iter().enumerate() {
        let mut gb = Polynomial::zero(&pd.xsp);
        for i in 0..n_r {
            gb = gb.add(&dv[i].mul(&pd.b_x[i][j])?)?;
        }
        vdot = vdot.add(&kj.expr.mul_poly(&subs_to_y(&gb)?)?)?;
    }

    let l_lya = prog.declare_poly(&pd.xsp, pd.deg_lya, None);
    let l_pc: Vec<DecisionPolynomial> = pd
        .gp_x
        .iter()
        .map(|_| prog.declare_sos_poly(&pd.xsp, pd.deg_lpc, "l_pc"))
        .collect::<Result<_, _>>()?;

    let mut inv = vdot.neg();
    inv = inv.add(&const_term(&pd.xsp, LinExpr::scalar(gamma)))?;
    inv = inv.add(&l_lya.expr.mul_poly(&v_minus_1)?)?;
    for (lp, gp) in l_pc.iter().zip(&pd.gp_x) {
        inv = inv.add(&lp.expr.mul_poly(gp)?)?;
    }
    let inv = unit_scale(pad_even(&mut prog, inv));
    prog.add_sos_constraint(&inv)?;

    // controller stays inside the tracking control polytope on {V <= 1}
    let a = &pd.mp.u_s_set.a;
    let b = &pd.mp.u_s_set.b;
    let mut l_s = Vec::with_capacity(a.nrows());
    for i in 0..a.nrows() {
        let mut row = const_term(&pd.xsp, LinExpr::constant(b[i]));
        for (j, kj) in k.iter().enumerate() {
            row = row.add(&kj.expr.scale(-a[[i, j]]))?;
        }
        let ls = prog.declare_sos_poly(&pd.xsp, pd.deg_ls, "l_s")?;
        row = row.add(&ls.expr.mul_poly(&v_minus_1)?)?;
        let row = unit_scale(pad_even(&mut prog, row));
        prog.add_sos_constraint(&row)?;
        l_s.push(ls);
    }

    if let Some(cap) = gamma_cap {
        let mut e = LinExpr::constant(cap);
        e.add_scaled(&LinExpr::scalar(gamma), -1.0);
        prog.add_scalar_geq(&e);
    }
    prog.add_linear_objective(&LinExpr::scalar(gamma).scaled(-1.0));

    let mut compiled = prog.compile()?;
    let (asg, _) = solve_compiled(&mut compiled, &[], "controller sub-problem")?;
    Ok(KSolution {
        k: k
            .iter()
            .map(|d| subs_to_r(&asg.realize(&d.expr)))
            .collect::<Result<_, _>>()?,
        l_lya: subs_to_r(&asg.realize(&l_lya.expr))?,
        l_pc: l_pc
            .iter()
            .map(|d| subs_to_r(&asg.realize(&d.expr)))
            .collect::<Result<_, _>>()?,
        l_s: l_s
            .iter()
            .map(|d| subs_to_r(&asg.realize(&d.expr)))
            .collect::<Result<_, _>>()?,
        gamma_c: asg.scalar(gamma),
    })
}

/// Tightest ellipsoid containing the unit sublevel set of a fixed level
/// function, together with validity-region containment certificates.
///
/// `incumbent`, when available, preconditions the solve: the step is taken in
/// coordinates where the incumbent ellipsoid is the unit ball, which keeps
/// the problem well scaled as the ellipsoid grows across iterations.
pub fn tightest_ellipsoid(
    pd: &ProblemData,
    v_tilde: &Polynomial,
    incumbent: Option<&Array2<f64>>,
) -> Result<EllipsoidSolution, SynthesisError> {
    let csp = &pd.mp.c_space;
    let n = pd.mp.n_rtilde;
    let precond = incumbent.and_then(Precond::new);
    let vt_y = match &precond {
        Some(p) => p.to_y(v_tilde)?,
        None => v_tilde.clone(),
    };
    let one = Polynomial::constant(csp, 1.0);
    let vt_minus_1 = vt_y.sub(&one)?;

    let mut prog = SosProgram::new();
    let emat = prog.declare_psd_matrix(n, pd.cfg.delta_e, "ellipsoid");
    let vars: Vec<usize> = (0..n).collect();
    let quad = prog.quad_form(emat, csp, &vars);
    let l_e = prog.declare_sos_poly(csp, pd.deg_le, "l_e")?;

    let mut contain = PolyExpr::from_poly(&one).sub(&quad)?;
    contain = contain.add(&l_e.expr.mul_poly(&vt_minus_1)?)?;
    let contain = unit_scale(pad_even(&mut prog, contain));
    prog.add_sos_constraint(&contain)?;

    let vt_expr = PolyExpr::from_poly(&vt_y);
    let mut l_g = Vec::new();
    for g in &pd.mp.validity.ineqs {
        let g_y = match &precond {
            Some(p) => p.to_y(g)?,
            None => g.clone(),
        };
        let lg = prog.declare_sos_poly(csp, pd.deg_le, "l_g")?;
        prog.add_validity_constraint(&g_y, &vt_expr, &lg.expr)?;
        l_g.push(lg);
    }
    prog.set_logdet_objective(emat, 1.0);

    let mut compiled = prog.compile()?;
    let (asg, _) = solve_compiled(&mut compiled, &[emat], "ellipsoid step")?;
    let e_y = asg.mat(emat).clone();
    let (e, l_e, l_g) = match &precond {
        Some(p) => (
            p.e_back(&e_y),
            p.to_r(&asg.realize(&l_e.expr))?,
            l_g.iter()
                .map(|d| p.to_r(&asg.realize(&d.expr)))
                .collect::<Result<_, _>>()?,
        ),
        None => (
            e_y,
            asg.realize(&l_e.expr),
            l_g.iter().map(|d| asg.realize(&d.expr)).collect(),
        ),
    };
    let ld = logdet(&e)?;
    Ok(EllipsoidSolution { e, l_e, l_g, logdet: ld })
}

/// Level sub-problem: with the controller and the multipliers
/// `l_lya, l_s, l_e, l_g` fixed, re-optimize the level function, slacks, and
/// bounding ellipsoid.
#[allow(clippy::too_many_arguments)]
pub fn v_subproblem(
    pd: &ProblemData,
    k: &[Polynomial],
    l_lya: &Polynomial,
    l_s: &[Polynomial],
    l_e: &Polynomial,
    l_g: &[Polynomial],
    v_incumbent: Option<&Polynomial>,
    mode: &VMode,
) -> Result<VSolution, SynthesisError> {
    let csp = &pd.mp.c_space;
    let xsp = &pd.xsp;
    let n_r = pd.mp.n_r;
    let n = pd.mp.n_rtilde;
    // State-space constraints are solved in `y = S r` coordinates where the
    // incumbent level set is near the unit ball. This matches the scaling the
    // controller sub-problem uses when its multipliers were produced by its
    // preconditioned fallback path, and keeps the invariance constraint well
    // conditioned as the level set shrinks.
    let r_scale = v_incumbent
        .and_then(|vt| pd.compose_fixed(vt).ok())
        .and_then(|v| hessian_scale(pd, &v));
    let to_y = |p: &Polynomial| -> Result<Polynomial, SynthesisError> {
        match &r_scale {
            Some((_, s_inv)) => subst_prefix(p, s_inv, n_r),
            None => Ok(p.clone()),
        }
    };
    let to_y_expr = |e: &PolyExpr| -> Result<PolyExpr, SynthesisError> {
        match &r_scale {
            Some((_, s_inv)) => subst_prefix_expr(e, s_inv, n_r),
            None => Ok(e.clone()),
        }
    };
    let cfg = &pd.cfg;

    // In trust mode the solve runs in coordinates where the incumbent
    // ellipsoid is the unit ball (see `Precond`); decisions are mapped back
    // to the original coordinates on exit.
    let precond = match mode {
        VMode::Trust { e_star, .. } => Precond::new(e_star),
        VMode::Init { .. } => None,
    };
    let c_used: Vec<Polynomial> = match &precond {
        Some(p) => {
            let mut rows = Vec::with_capacity(n);
            for i in 0..n {
                let mut row = Polynomial::zero(xsp);
                for (j, cj) in pd.c_x.iter().enumerate() {
                    if p.u[[i, j]] != 0.0 {
                        row = row.add(&cj.scale(p.u[[i, j]]))?;
                    }
                }
                rows.push(row);
            }
            rows
        }
        None => pd.c_x.clone(),
    };
    let l_e_used = match &precond {
        Some(p) => p.to_y(l_e)?,
        None => l_e.clone(),
    };
    let l_g_used: Vec<Polynomial> = match &precond {
        Some(p) => l_g
            .iter()
            .map(|g| p.to_y(g))
            .collect::<Result<_, _>>()?,
        None => l_g.to_vec(),
    };

    let mut prog = SosProgram::new();
    let vt = prog.declare_poly(csp, cfg.deg_v, None);
    // the level function vanishes at the origin
    for (m, &cv) in vt.basis.iter().zip(&vt.coeff_vars) {
        if m.degree() == 0 {
            prog.add_scalar_eq(&LinExpr::scalar(cv), 0.0);
        }
    }
    let emat = prog.declare_psd_matrix(n, cfg.delta_e, "ellipsoid");
    let gamma = prog.declare_scalar(ScalarKind::Free);
    let n_rows = pd.mp.u_s_set.num_rows();
    let eps: Vec<ScalarVarId> = (0..n_rows)
        .map(|_| prog.declare_scalar(ScalarKind::Nonneg))
        .collect();

    // V(r) = v~(c(r)) and its time derivative, both linear in the v~
    // coefficients through the monomial images under the bounded-state map
    let f_cl = pd.closed_loop(k)?;
    let mut v_expr = PolyExpr::zero(xsp);
    let mut vdot = PolyExpr::zero(xsp);
    for (m, &cv) in vt.basis.iter().zip(&vt.coeff_vars) {
        let mut image = Polynomial::constant(xsp, 1.0);
        for &(var, exp) in m.pairs() {
            image = image.mul(&c_used[var as usize].pow(exp as u32))?;
        }
        v_expr = v_expr.add(&poly_times_scalar(&image, cv))?;
        let mut w = Polynomial::zero(xsp);
        for (i, f) in f_cl.iter().enumerate().take(n_r) {
            w = w.add(&image.differentiate(i).mul(f)?)?;
        }
        vdot = vdot.add(&poly_times_scalar(&w, cv))?;
    }
    let one_x = PolyExpr::from_poly(&Polynomial::constant(xsp, 1.0));
    let v_minus_1 = to_y_expr(&v_expr)?.sub(&one_x)?;
    let vdot = to_y_expr(&vdot)?;

    let l_pc: Vec<DecisionPolynomial> = pd
        .gp_x
        .iter()
        .map(|_| prog.declare_sos_poly(xsp, pd.deg_lpc, "l_pc"))
        .collect::<Result<_, _>>()?;
    let mut inv = vdot.neg();
    inv = inv.add(&const_term(xsp, LinExpr::scalar(gamma)))?;
    inv = inv.add(&v_minus_1.mul_poly(&to_y(l_lya)?)?)?;
    for (lp, gp) in l_pc.iter().zip(&pd.gp_x) {
        inv = inv.add(&lp.expr.mul_poly(gp)?)?;
    }
    let inv = unit_scale(pad_even(&mut prog, inv));
    prog.add_sos_constraint(&inv)?;

    // controller rows with slack: a_i' K - b_i <= eps_i on {V <= 1}
    let a = &pd.mp.u_s_set.a;
    let b = &pd.mp.u_s_set.b;
    for i in 0..n_rows {
        let mut gs = Polynomial::zero(xsp);
        for (j, kj) in k.iter().enumerate() {
            gs = gs.add(&kj.scale(a[[i, j]]))?;
        }
        gs = gs.sub(&Polynomial::constant(xsp, b[i]))?;
        let mut row = PolyExpr::from_poly(&to_y(&gs)?.scale(-1.0));
        row = row.add(&const_term(xsp, LinExpr::scalar(eps[i])))?;
        row = row.add(&v_minus_1.mul_poly(&to_y(&l_s[i])?)?)?;
        let row = unit_scale(pad_even(&mut prog, row));
        prog.add_sos_constraint(&row)?;
    }

    // ellipsoid containment and validity, in the bounded state
    let one_c = PolyExpr::from_poly(&Polynomial::constant(csp, 1.0));
    let vt_minus_1 = vt.expr.sub(&one_c)?;
    let vars: Vec<usize> = (0..n).collect();
    let quad = prog.quad_form(emat, csp, &vars);
    let mut contain = one_c.sub(&quad)?;
    contain = contain.add(&vt_minus_1.mul_poly(&l_e_used)?)?;
    let contain = unit_scale(pad_even(&mut prog, contain));
    prog.add_sos_constraint(&contain)?;
    for (g, lg) in pd.mp.validity.ineqs.iter().zip(&l_g_used) {
        let g_y = match &precond {
            Some(p) => p.to_y(g)?,
            None => g.clone(),
        };
        prog.add_validity_constraint(&g_y, &vt.expr, &PolyExpr::from_poly(lg))?;
    }

    let mut slack_term = LinExpr::scalar(gamma);
    for &e in &eps {
        slack_term.add_scaled(&LinExpr::scalar(e), 1.0);
    }
    let logdet_mats: Vec<_> = match mode {
        VMode::Init { gamma_cap } => {
            let mut cap = LinExpr::constant(*gamma_cap);
            cap.add_scaled(&LinExpr::scalar(gamma), -1.0);
            prog.add_scalar_geq(&cap);
            prog.add_linear_objective(&slack_term.scaled(-1.0));
            // Slack-only objectives leave the ellipsoid (and the level
            // function directions it pins down) on a degenerate optimal
            // face, which the interior-point solver handles poorly; a tiny
            // volume tie-breaker selects a well-centered solution without
            // meaningfully trading against the slacks.
            prog.set_logdet_objective(emat, INIT_VOLUME_TIEBREAK);
            vec![emat]
        }
        VMode::Trust { e_star, alpha } => {
            prog.set_logdet_objective(emat, 1.0);
            prog.add_linear_objective(&slack_term.scaled(-cfg.lambda));
            // Trust center in solve coordinates: the incumbent itself, or the
            // identity when the solve is preconditioned on the incumbent.
            let center = match &precond {
                Some(_) => Array2::<f64>::eye(n),
                None => e_star.clone(),
            };
            let lower: Vec<Vec<LinExpr>> = (0..n)
                .map(|r| {
                    (0..n)
                        .map(|c| {
                            let mut e = LinExpr::mat_entry(emat, r.min(c), r.max(c));
                            e.add_scaled(
                                &LinExpr::constant(center[[r, c]]),
                                -cfg.alpha_lower,
                            );
                            e
                        })
                        .collect()
                })
                .collect();
            prog.add_psd_constraint(&lower, "trust_lower");
            let upper: Vec<Vec<LinExpr>> = (0..n)
                .map(|r| {
                    (0..n)
                        .map(|c| {
                            let mut e =
                                LinExpr::constant((1.0 + alpha) * center[[r, c]]);
                            e.add_scaled(
                                &LinExpr::mat_entry(emat, r.min(c), r.max(c)),
                                -1.0,
                            );
                            e
                        })
                        .collect()
                })
                .collect();
            prog.add_psd_constraint(&upper, "trust_upper");
            vec![emat]
        }
    };

    let mut compiled = prog.compile()?;
    let (asg, _) = solve_compiled(&mut compiled, &logdet_mats, "level sub-problem")?;
    let e_y = asg.mat(emat).clone();
    let vt_y = asg.realize(&vt.expr);
    let (e, vt_r) = match &precond {
        Some(p) => (p.e_back(&e_y), p.to_r(&vt_y)?),
        None => (e_y, vt_y),
    };
    let ld = logdet(&e)?;
    let l_pc = l_pc
        .iter()
        .map(|d| {
            let p = asg.realize(&d.expr);
            match &r_scale {
                Some((s, _)) => subst_prefix(&p, s, n_r),
                None => Ok(p),
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(VSolution {
        v_tilde: zero_at_origin(&vt_r),
        e,
        l_pc,
        gamma: asg.scalar(gamma),
        eps: eps.iter().map(|&s| asg.scalar(s)).collect(),
        logdet: ld,
    })
}
