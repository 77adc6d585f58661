//! Catalog of planner/tracker model pairs.
//!
//! Each [`ModelPair`] bundles the relative dynamics between a high-fidelity
//! tracking model and a lower-dimensional planning model, together with the
//! bounded-state map, control sets, validity region, and the raw (exact-trig)
//! dynamics used to cross-check the polynomial forms by numerical
//! integration.

mod catalog;
mod plan;
#[cfg(test)]
mod tests;

pub use catalog::{catalog, default_params};
pub use plan::{NominalPlan, PlanSample};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::poly::{ChebApprox, PolyMatrix, PolyVector, Polynomial, VarSpace};
use crate::sdp::{self, Block, RowData, SdpStandardForm, SdpStatus};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("invalid model `{name}`: {reason}")]
    Invalid { name: String, reason: String },
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Dynamics of a single system: `(state, control) -> state derivative`.
pub type StateFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// Relative dynamics: `(r, u_s, u_p) -> dr/dt` with exact trigonometry.
pub type RelFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// Bounded-state map with exact trigonometry: `r -> c(r)`.
pub type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// State-dependent frame `phi(s, p)` as an `n_r x n_s` matrix.
pub type FrameFn = Arc<dyn Fn(&[f64], &[f64]) -> Array2<f64> + Send + Sync>;
/// Maps the raw planner control into the relative frame: `(s, p, u_p) -> u_p_eff`.
pub type ControlMapFn = Arc<dyn Fn(&[f64], &[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// A bounded polyhedral control set `{u : A u <= b}` with an explicit vertex
/// list (the extreme points).
#[derive(Debug, Clone)]
pub struct PolytopicControlSet {
    /// Row constraint matrix, one inequality per row.
    pub a: Array2<f64>,
    /// Right-hand sides.
    pub b: Array1<f64>,
    /// Extreme points of the polytope.
    pub vertices: Vec<Vec<f64>>,
}

impl PolytopicControlSet {
    /// Axis-aligned box `prod_i [lo_i, hi_i]` with `2m` inequality rows and
    /// `2^m` corner vertices.
    pub fn from_box(bounds: &[(f64, f64)]) -> Self {
        let m = bounds.len();
        let mut a = Array2::zeros((2 * m, m));
        let mut b = Array1::zeros(2 * m);
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            a[[2 * i, i]] = 1.0;
            b[2 * i] = hi;
            a[[2 * i + 1, i]] = -1.0;
            b[2 * i + 1] = -lo;
        }
        let mut vertices = Vec::with_capacity(1 << m);
        for mask in 0..(1usize << m) {
            let v: Vec<f64> = bounds
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| if mask >> i & 1 == 1 { hi } else { lo })
                .collect();
            vertices.push(v);
        }
        PolytopicControlSet { a, b, vertices }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.a.nrows()
    }

    /// Membership test `A u <= b + tol`.
    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        let u = Array1::from(u.to_vec());
        let r = self.a.dot(&u) - &self.b;
        r.iter().all(|&v| v <= tol)
    }

    /// Uniformly weighted random convex combination of the vertices; always a
    /// member of the polytope.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let k = self.vertices.len();
        let mut w: Vec<f64> = (0..k).map(|_| -rng.gen::<f64>().max(1e-12).ln()).collect();
        let tot: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= tot;
        }
        let m = self.dim();
        let mut u = vec![0.0; m];
        for (wi, v) in w.iter().zip(&self.vertices) {
            for j in 0..m {
                u[j] += wi * v[j];
            }
        }
        u
    }

    /// Chebyshev center: the point maximizing the radius of an inscribed ball,
    /// `max_t { t : a_i' x + ||a_i|| t <= b_i, t >= 0 }`, solved as a linear
    /// program. Returns `(center, radius)`; `None` if the LP does not solve.
    pub fn chebyshev_center(&self) -> Option<(Vec<f64>, f64)> {
        let nr = self.num_rows();
        let m = self.dim();
        // Diag block: positions 0..nr are row slacks, position nr is the radius.
        let mut lp = SdpStandardForm::new(vec![Block::Diag(nr + 1)], m);
        lp.c_blocks[0] = vec![(nr, nr, -1.0)]; // minimize -t
        for i in 0..nr {
            let norm: f64 = self.a.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            let free: Vec<(usize, f64)> = (0..m)
                .filter(|&j| self.a[[i, j]] != 0.0)
                .map(|j| (j, self.a[[i, j]]))
                .collect();
            let row = RowData {
                blocks: vec![(0, vec![(i, i, 1.0), (nr, nr, norm)])],
                free,
            };
            lp.add_row(row, self.b[i]);
        }
        let sol = sdp::solve(&lp, &sdp::SolveOptions::default());
        if sol.status != SdpStatus::Optimal {
            return None;
        }
        let center = sol.x_free.to_vec();
        let radius = sol.x_blocks[0][[nr, nr]];
        Some((center, radius))
    }

    /// Constraint rows as polynomials `a_i' u - b_i` (each required `<= 0`) in
    /// `space`, where the control variables occupy indices
    /// `offset..offset + dim`.
    pub fn rows_as_polynomials(&self, space: &Arc<VarSpace>, offset: usize) -> Vec<Polynomial> {
        (0..self.num_rows())
            .map(|i| {
                let mut p = Polynomial::constant(space, -self.b[i]);
                for j in 0..self.dim() {
                    let c = self.a[[i, j]];
                    if c != 0.0 {
                        p = p
                            .add(&Polynomial::var(space, offset + j).scale(c))
                            .expect("same space");
                    }
                }
                p
            })
            .collect()
    }
}

/// A basic semialgebraic set `{x : phi_i(x) <= 0, psi_j(x) = 0}`.
#[derive(Debug, Clone)]
pub struct SemialgebraicSet {
    pub space: Arc<VarSpace>,
    /// Inequality constraints, each `<= 0`.
    pub ineqs: Vec<Polynomial>,
    /// Equality constraints, each `= 0`.
    pub eqs: Vec<Polynomial>,
}

impl SemialgebraicSet {
    /// The whole space: no constraints, membership always true.
    pub fn everything(space: Arc<VarSpace>) -> Self {
        SemialgebraicSet {
            space,
            ineqs: Vec::new(),
            eqs: Vec::new(),
        }
    }

    pub fn new(space: Arc<VarSpace>, ineqs: Vec<Polynomial>, eqs: Vec<Polynomial>) -> Self {
        SemialgebraicSet { space, ineqs, eqs }
    }

    /// Membership within `tol`: every inequality `<= tol`, every equality
    /// within `|.| <= tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.ineqs.iter().all(|p| p.eval_unchecked(x) <= tol)
            && self.eqs.iter().all(|p| p.eval_unchecked(x).abs() <= tol)
    }
}

/// A planner/tracker model pair with polynomial relative dynamics.
///
/// The polynomial data (`f_r`, `c_map`) is what synthesis consumes; the raw
/// closures reproduce the original trigonometric dynamics and the frame
/// transformation so the polynomial forms can be validated by numerical
/// integration and used for exact simulation.
#[derive(Clone)]
pub struct ModelPair {
    pub name: String,
    /// Tracking state dimension.
    pub n_s: usize,
    /// Planning state dimension.
    pub n_p: usize,
    /// Relative state dimension.
    pub n_r: usize,
    /// Bounded state dimension (`>= n_r`).
    pub n_rtilde: usize,
    /// Tracking control dimension.
    pub m_s: usize,
    /// Planning control dimension.
    pub m_p: usize,
    /// Indeterminates ordered `(r_0.., u_s_0.., u_p_0..)`.
    pub space: Arc<VarSpace>,
    /// Relative dynamics `dr/dt = h(r, u_p) + B(r) u_s`, entries in `space`.
    pub f_r: PolyVector,
    /// Bounded-state map `c(r)`, `n_rtilde` entries in `space` (r-variables
    /// only), trig-substituted where needed.
    pub c_map: PolyVector,
    /// Indeterminates of the bounded state, used by `validity`.
    pub c_space: Arc<VarSpace>,
    /// Human-readable description of the frame transformation `phi(s, p)`.
    pub phi_description: String,
    /// Indices of the error coordinates within `r`.
    pub error_indices: Vec<usize>,
    /// Indices of the auxiliary coordinates within `r`.
    pub aux_indices: Vec<usize>,
    /// Tracking control set (polytopic).
    pub u_s_set: PolytopicControlSet,
    /// Planning control set as a semialgebraic set in its own space; variable
    /// names match the `u_p` names in `space`.
    pub u_p_set: SemialgebraicSet,
    /// Axis-aligned bounding box of `u_p_set`, used for sampling.
    pub u_p_box: Vec<(f64, f64)>,
    /// Region of the bounded state where the polynomial dynamics are valid
    /// (trig surrogates within tolerance); constraints in `c_space`.
    pub validity: SemialgebraicSet,
    /// Named numeric constants baked into the dynamics.
    pub params: BTreeMap<String, f64>,
    /// Trig surrogates used in `f_r`/`c_map`: `(term description, surrogate)`.
    pub trig_substitutions: Vec<(String, ChebApprox)>,
    /// Envelope for the agreement between polynomial and exact dynamics over
    /// `r_box`: accounts for the cofactors multiplying each surrogate.
    pub trig_agreement_tol: f64,
    /// The pair intentionally has `n_p == n_s` (pedagogical example).
    pub planner_dim_exempt: bool,

    /// Raw tracking dynamics `(s, u_s) -> ds/dt`.
    pub f_s_raw: StateFn,
    /// Raw planning dynamics `(p, u_p) -> dp/dt`.
    pub f_p_raw: StateFn,
    /// Frame `phi(s, p)`; the relative state is `r = phi(s, p) (s - pi p)`.
    pub phi_raw: FrameFn,
    /// State embedding `pi` (`n_s x n_p`).
    pub pi: Array2<f64>,
    /// Exact-trig relative dynamics `(r, u_s, u_p_eff) -> dr/dt`.
    pub f_r_exact: RelFn,
    /// Exact-trig bounded-state map.
    pub c_exact: MapFn,
    /// Planner control as seen by the relative frame (e.g. rotated into the
    /// tracker's heading); identity for non-rotating pairs.
    pub effective_planner_control: ControlMapFn,
    /// Sampling box for tracking states in the consistency oracle.
    pub s_box: Vec<(f64, f64)>,
    /// Sampling box for planning states in the consistency oracle.
    pub p_box: Vec<(f64, f64)>,
    /// Sampling box for relative states (inside the validity region and the
    /// trig surrogate intervals).
    pub r_box: Vec<(f64, f64)>,
}

impl fmt::Debug for ModelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelPair")
            .field("name", &self.name)
            .field("n_s", &self.n_s)
            .field("n_p", &self.n_p)
            .field("n_r", &self.n_r)
            .field("n_rtilde", &self.n_rtilde)
            .field("m_s", &self.m_s)
            .field("m_p", &self.m_p)
            .finish_non_exhaustive()
    }
}

impl ModelPair {
    /// Index of tracking control `j` within `space`.
    pub fn us_index(&self, j: usize) -> usize {
        self.n_r + j
    }

    /// Index of planner control `j` within `space`.
    pub fn up_index(&self, j: usize) -> usize {
        self.n_r + self.m_s + j
    }

    /// Drift part `h(r, u_p)`: the relative dynamics with `u_s = 0`.
    pub fn h(&self) -> PolyVector {
        let mut bindings = BTreeMap::new();
        for j in 0..self.m_s {
            bindings.insert(self.us_index(j), Polynomial::zero(&self.space));
        }
        PolyVector::new(
            self.f_r
                .entries
                .iter()
                .map(|p| p.substitute(&self.space, &bindings).expect("same space"))
                .collect(),
        )
    }

    /// Input matrix `B(r)` with `dr/dt = h + B u_s`; entry `(i, j)` is
    /// `d f_r_i / d u_s_j` (constant in all controls once `validate` passes).
    pub fn input_matrix(&self) -> PolyMatrix {
        let mut bindings = BTreeMap::new();
        for j in 0..self.m_s {
            bindings.insert(self.us_index(j), Polynomial::zero(&self.space));
        }
        for j in 0..self.m_p {
            bindings.insert(self.up_index(j), Polynomial::zero(&self.space));
        }
        let rows = self
            .f_r
            .entries
            .iter()
            .map(|p| {
                (0..self.m_s)
                    .map(|j| {
                        p.differentiate(self.us_index(j))
                            .substitute(&self.space, &bindings)
                            .expect("same space")
                    })
                    .collect()
            })
            .collect();
        PolyMatrix::new(rows)
    }

    /// Tracking control constraints `a_i' u_s - b_i <= 0` as polynomials in
    /// `space`.
    pub fn tracking_rows(&self) -> Vec<Polynomial> {
        self.u_s_set.rows_as_polynomials(&self.space, self.n_r)
    }

    /// Planner control constraints lifted into `space` (matched by variable
    /// name).
    pub fn planner_ineqs_lifted(&self) -> Vec<Polynomial> {
        self.u_p_set
            .ineqs
            .iter()
            .map(|p| p.lift(&self.space).expect("u_p names present in space"))
            .collect()
    }

    /// Relative state from absolute states: `r = phi(s, p)(s - pi p)`.
    pub fn relative_state(&self, s: &[f64], p: &[f64]) -> Vec<f64> {
        let s_arr = Array1::from(s.to_vec());
        let p_arr = Array1::from(p.to_vec());
        let d = &s_arr - &self.pi.dot(&p_arr);
        (self.phi_raw)(s, p).dot(&d).to_vec()
    }

    /// Structural checks: index partition, dimension relations, affine
    /// dependence of `f_r` on `u_s` (via exact double differentiation), and
    /// vertex consistency of the tracking polytope.
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: String| {
            Err(ModelError::Invalid {
                name: self.name.clone(),
                reason,
            })
        };
        if self.space.dim() != self.n_r + self.m_s + self.m_p {
            return fail("space dimension != n_r + m_s + m_p".into());
        }
        if self.f_r.len() != self.n_r || self.c_map.len() != self.n_rtilde {
            return fail("dynamics/bounded-state length mismatch".into());
        }
        if self.n_rtilde < self.n_r {
            return fail("n_rtilde < n_r".into());
        }
        if !self.planner_dim_exempt && self.n_p >= self.n_s {
            return fail("planning model must have fewer states than tracker".into());
        }
        let mut seen = vec![false; self.n_r];
        for &i in self.error_indices.iter().chain(&self.aux_indices) {
            if i >= self.n_r || seen[i] {
                return fail("error/aux indices do not partition the state".into());
            }
            seen[i] = true;
        }
        if seen.iter().any(|&s| !s) {
            return fail("error/aux indices do not partition the state".into());
        }
        // Affine in u_s: second derivatives in the tracking controls vanish,
        // and B(r) must not depend on the planner controls either.
        for p in &self.f_r.entries {
            for j in 0..self.m_s {
                let dj = p.differentiate(self.us_index(j));
                for k in 0..self.m_s {
                    if !dj.differentiate(self.us_index(k)).is_zero() {
                        return fail("f_r not affine in tracking controls".into());
                    }
                }
                for l in 0..self.m_p {
                    if !dj.differentiate(self.up_index(l)).is_zero() {
                        return fail("input matrix depends on planner controls".into());
                    }
                }
            }
        }
        for v in &self.u_s_set.vertices {
            if !self.u_s_set.contains(v, 1e-9) {
                return fail("tracking-set vertex violates its inequalities".into());
            }
        }
        if self.u_p_box.len() != self.m_p {
            return fail("u_p_box dimension mismatch".into());
        }
        Ok(())
    }
}

/// Look up the planner control set of a pair as a semialgebraic set.
pub fn planner_set_as_semialgebraic(mp: &ModelPair) -> SemialgebraicSet {
    mp.u_p_set.clone()
}

fn rk4_step(f: &StateFn, x: &[f64], u: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let k1 = f(x, u);
    let ad = |x: &[f64], k: &[f64], s: f64| -> Vec<f64> {
        (0..n).map(|i| x[i] + s * k[i]).collect()
    };
    let k2 = f(&ad(x, &k1, h / 2.0), u);
    let k3 = f(&ad(x, &k2, h / 2.0), u);
    let k4 = f(&ad(x, &k3, h), u);
    (0..n)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// Cross-check the exact relative dynamics against the definition
/// `r = phi(s, p)(s - pi p)`.
///
/// For each of `n_samples` random admissible states and controls, `s` and `p`
/// are integrated jointly over `+-2h` (step `h = 1e-4`) and the derivative of
/// the reconstructed `r(t)` is estimated with a fourth-order central
/// difference; the maximum componentwise deviation from
/// `f_r_exact(r, u_s, u_p_eff)` is returned.
pub fn relative_dynamics_consistency(mp: &ModelPair, n_samples: usize) -> f64 {
    let h = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut worst: f64 = 0.0;
    let sample_box = |rng: &mut ChaCha8Rng, b: &[(f64, f64)]| -> Vec<f64> {
        b.iter()
            .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..hi) })
            .collect()
    };
    for _ in 0..n_samples {
        let s0 = sample_box(&mut rng, &mp.s_box);
        let p0 = sample_box(&mut rng, &mp.p_box);
        let us = mp.u_s_set.sample(&mut rng);
        // Rejection-sample the planner control within its bounding box.
        let mut up = sample_box(&mut rng, &mp.u_p_box);
        for _ in 0..200 {
            if mp.u_p_set.contains(&up, 1e-12) {
                break;
            }
            up = sample_box(&mut rng, &mp.u_p_box);
        }
        // States at -2h, -h, +h, +2h under constant controls.
        let mut states: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for &steps in &[-2i32, -1, 1, 2] {
            let hh = if steps < 0 { -h } else { h };
            let mut s = s0.clone();
            let mut p = p0.clone();
            for _ in 0..steps.unsigned_abs() {
                s = rk4_step(&mp.f_s_raw, &s, &us, hh);
                p = rk4_step(&mp.f_p_raw, &p, &up, hh);
            }
            states.push((s, p));
        }
        let rs: Vec<Vec<f64>> = states
            .iter()
            .map(|(s, p)| mp.relative_state(s, p))
            .collect();
        let r0 = mp.relative_state(&s0, &p0);
        let up_eff = (mp.effective_planner_control)(&s0, &p0, &up);
        let dr = (mp.f_r_exact)(&r0, &us, &up_eff);
        for i in 0..mp.n_r {
            // Fourth-order central difference from r(-2h), r(-h), r(h), r(2h).
            let fd = (8.0 * (rs[2][i] - rs[1][i]) - (rs[3][i] - rs[0][i])) / (12.0 * h);
            worst = worst.max((fd - dr[i]).abs());
        }
    }
    worst
}
