//! Controller/invariant-set synthesis by bilinear alternation.
//!
//! Alternates between a controller sub-problem (find the most stabilizing
//! polynomial controller for a fixed level function, with an invariance slack
//! as the objective), a tightest-bounding-ellipsoid step, and a level-function
//! sub-problem (reshape the function and grow the ellipsoid inside a trust
//! region), with slack checks gating every accepted iterate.

mod alg;
mod presearch;
mod subproblems;
#[cfg(test)]
mod tests;

pub use presearch::presearch_v0;
pub use alg::{backtrack, generate_feasible_guess, shrink_schedule, synthesize, GuessOutcome};
pub use subproblems::{
    k_subproblem, tightest_ellipsoid, v_subproblem, EllipsoidSolution, KSolution, VMode,
    VSolution,
};

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::Array2;
use ndarray_linalg::{Cholesky, Inverse, UPLO};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ModelPair;
use crate::poly::{parse_poly_lines, poly_lines, PolyError, Polynomial, VarSpace};
use crate::sdp::{self, SdpStatus};
use crate::sosprog::{CompiledSdp, MatVarId, SosError};

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("invalid input: {0}")]
    BadInput(String),
    #[error("{stage}: SDP infeasible")]
    Infeasible { stage: String },
    #[error("{stage}: solver failed ({status:?})")]
    Numerical { stage: String, status: SdpStatus },
    #[error("initialization failed after {iterations} iterations (gamma_c={gamma_c:.3e}, gamma={gamma:.3e}, eps={eps:.3e})")]
    InitFailed {
        iterations: usize,
        gamma_c: f64,
        gamma: f64,
        eps: f64,
    },
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Tuning knobs of the alternation. All defaults are implementation choices,
/// recorded into every [`Certificate`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisConfig {
    /// Degree of the level function in the bounded state (even).
    pub deg_v: u32,
    /// Degree of the polynomial controller in the relative state.
    pub deg_k: u32,
    /// Base degree for multiplier polynomials.
    pub deg_multiplier: u32,
    /// Slack tolerance `[0, 1)` gating accepted iterates.
    pub delta: f64,
    /// Maximum iterations for both the initialization and the main loop.
    pub max_iters: usize,
    /// Relative-improvement termination tolerance `(0, 1)`.
    pub theta1: f64,
    /// Initial trust-region upper parameter `(0, 1)`.
    pub alpha_bar: f64,
    /// Fixed trust-region lower parameter `(0, 1)`.
    pub alpha_lower: f64,
    /// Trust-region shrink factor `(0, 1)`.
    pub beta: f64,
    /// Backtrack floor `(0, 1)`: shrink stops once `alpha <= theta2 *
    /// alpha_bar`.
    pub theta2: f64,
    /// Pareto weight on the slack terms in the trust-mode objective.
    pub lambda: f64,
    /// Ellipsoid floor `E >= delta_e * I`.
    pub delta_e: f64,
    /// Seed for the random diagonal initial level function.
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            deg_v: 2,
            deg_k: 2,
            deg_multiplier: 2,
            delta: 1e-4,
            max_iters: 30,
            theta1: 0.01,
            alpha_bar: 0.5,
            alpha_lower: 0.5,
            beta: 0.5,
            theta2: 0.1,
            lambda: 1.0,
            delta_e: 1e-4,
            seed: 0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        let in01 = |v: f64| v > 0.0 && v < 1.0;
        if self.deg_v == 0 || self.deg_v % 2 != 0 {
            return Err(SynthesisError::BadInput("deg_v must be even and positive".into()));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(SynthesisError::BadInput("delta must be in [0, 1)".into()));
        }
        if self.max_iters == 0 {
            return Err(SynthesisError::BadInput("max_iters must be positive".into()));
        }
        for (name, v) in [
            ("theta1", self.theta1),
            ("alpha_bar", self.alpha_bar),
            ("alpha_lower", self.alpha_lower),
            ("beta", self.beta),
            ("theta2", self.theta2),
        ] {
            if !in01(v) {
                return Err(SynthesisError::BadInput(format!("{name} must be in (0, 1)")));
            }
        }
        if self.lambda <= 0.0 {
            return Err(SynthesisError::BadInput("lambda must be positive".into()));
        }
        if self.delta_e <= 0.0 {
            return Err(SynthesisError::BadInput("delta_e must be positive".into()));
        }
        Ok(())
    }
}

/// Multiplier polynomials carried between sub-problems.
#[derive(Debug, Clone)]
pub struct Multipliers {
    /// Free multiplier on `(V - 1)` in the invariance certificate (in the
    /// relative/planner-control indeterminates).
    pub l_lya: Polynomial,
    /// SOS multipliers on the planner-control constraints.
    pub l_pc: Vec<Polynomial>,
    /// SOS multipliers on the tracking-control rows.
    pub l_s: Vec<Polynomial>,
    /// SOS multiplier on `(V~ - 1)` in the ellipsoid certificate (bounded
    /// state).
    pub l_e: Polynomial,
    /// SOS multipliers certifying the validity region contains the sublevel
    /// set.
    pub l_g: Vec<Polynomial>,
}

/// The rolling best solution of the alternation.
#[derive(Debug, Clone)]
pub struct SynthesisState {
    /// Level function in the bounded state, `v_star(0) = 0`.
    pub v_star: Polynomial,
    /// Bounding ellipsoid in the bounded state.
    pub e_star: Array2<f64>,
    /// Tracking controller, one polynomial in the relative state per input.
    pub k_star: Vec<Polynomial>,
    pub multipliers: Multipliers,
    /// Most recent controller-sub-problem slack.
    pub gamma_c_star: f64,
    /// Most recent accepted invariance slack.
    pub gamma_star: f64,
    /// Most recent accepted control slacks.
    pub eps_star: Vec<f64>,
    /// `log det(E)` of each accepted iterate.
    pub objective_history: Vec<f64>,
}

impl SynthesisState {
    pub fn eps_inf(&self) -> f64 {
        self.eps_star.iter().cloned().fold(0.0, f64::max)
    }
}

/// JSON-friendly polynomial: variable names plus `coeff e0 e1 ... ek` term
/// lines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolySer {
    pub vars: Vec<String>,
    pub terms: Vec<String>,
}

impl PolySer {
    pub fn from_poly(p: &Polynomial) -> Self {
        PolySer {
            vars: p.space().names().to_vec(),
            terms: poly_lines(p),
        }
    }

    pub fn to_poly(&self) -> Result<Polynomial, SynthesisError> {
        let space = VarSpace::new(self.vars.clone());
        parse_poly_lines(&space, &self.terms).map_err(SynthesisError::BadInput)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateSlacks {
    pub gamma_c: f64,
    pub gamma: f64,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateMultipliers {
    pub l_lya: PolySer,
    pub l_pc: Vec<PolySer>,
    pub l_s: Vec<PolySer>,
    pub l_e: PolySer,
    pub l_g: Vec<PolySer>,
}

/// The synthesized invariance certificate: level function, ellipsoid,
/// controller, and everything needed to audit them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub config: SynthesisConfig,
    pub v_tilde: PolySer,
    pub k: Vec<PolySer>,
    pub e: Vec<Vec<f64>>,
    pub multipliers: CertificateMultipliers,
    pub slacks: CertificateSlacks,
    pub objective_history: Vec<f64>,
    /// Unix timestamps (seconds) of synthesis start and end.
    pub started_at: f64,
    pub finished_at: f64,
}

impl Certificate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn e_matrix(&self) -> Array2<f64> {
        let n = self.e.len();
        Array2::from_shape_fn((n, n), |(i, j)| self.e[i][j])
    }

    /// Structural invariants: level function vanishes at the origin and the
    /// ellipsoid respects its floor.
    pub fn check(&self) -> Result<(), SynthesisError> {
        let v = self.v_tilde.to_poly()?;
        let origin = vec![0.0; v.space().dim()];
        if v.eval_unchecked(&origin) != 0.0 {
            return Err(SynthesisError::BadInput("certificate level function has v(0) != 0".into()));
        }
        let e = self.e_matrix();
        let n = e.nrows();
        let shifted = &e - &(Array2::<f64>::eye(n) * (self.config.delta_e - 1e-9));
        if shifted.cholesky(UPLO::Lower).is_err() {
            return Err(SynthesisError::BadInput("certificate ellipsoid below its floor".into()));
        }
        Ok(())
    }
}

fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub(crate) fn certificate_from_state(
    mp: &ModelPair,
    cfg: &SynthesisConfig,
    st: &SynthesisState,
    started_at: f64,
) -> Certificate {
    Certificate {
        model: mp.name.clone(),
        params: mp.params.clone(),
        config: cfg.clone(),
        v_tilde: PolySer::from_poly(&st.v_star),
        k: st.k_star.iter().map(PolySer::from_poly).collect(),
        e: st
            .e_star
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect(),
        multipliers: CertificateMultipliers {
            l_lya: PolySer::from_poly(&st.multipliers.l_lya),
            l_pc: st.multipliers.l_pc.iter().map(PolySer::from_poly).collect(),
            l_s: st.multipliers.l_s.iter().map(PolySer::from_poly).collect(),
            l_e: PolySer::from_poly(&st.multipliers.l_e),
            l_g: st.multipliers.l_g.iter().map(PolySer::from_poly).collect(),
        },
        slacks: CertificateSlacks {
            gamma_c: st.gamma_c_star,
            gamma: st.gamma_star,
            eps: st.eps_star.clone(),
        },
        objective_history: st.objective_history.clone(),
        started_at,
        finished_at: unix_now(),
    }
}

/// Model data pre-lowered into the sub-problem indeterminates.
///
/// Constraint polynomials live in `xsp = (r, u_p)`: the tracking control is
/// eliminated by substituting the controller into the affine split
/// `f_r = h + B u_s`, and ellipsoid constraints live in the bounded-state
/// space with the bounded state treated as an independent indeterminate.
pub struct ProblemData {
    pub mp: ModelPair,
    pub cfg: SynthesisConfig,
    /// Indeterminates `(r_0.., u_p_0..)`; the relative-state variables keep
    /// indices `0..n_r`.
    pub xsp: Arc<VarSpace>,
    /// Bounded-state map entries in `xsp`.
    pub c_x: Vec<Polynomial>,
    /// Drift `h(r, u_p)` in `xsp`.
    pub h_x: Vec<Polynomial>,
    /// Input matrix `B(r)` in `xsp`.
    pub b_x: Vec<Vec<Polynomial>>,
    /// Planner control constraints `g^p <= 0` in `xsp`.
    pub gp_x: Vec<Polynomial>,
    /// Degree of the free invariance multiplier, adjusted so the invariance
    /// certificate has even total degree.
    pub deg_lya: u32,
    /// Degree of the SOS planner-constraint multipliers (even).
    pub deg_lpc: u32,
    /// Degree of the SOS tracking-row multipliers (even).
    pub deg_ls: u32,
    /// Degree of the SOS ellipsoid multiplier (even).
    pub deg_le: u32,
    /// Degree of `V = v_tilde(c(r))` in `xsp` for level degree `deg_v`.
    pub deg_v_in_x: u32,
}

impl ProblemData {
    pub fn new(mp: &ModelPair, cfg: &SynthesisConfig) -> Result<Self, SynthesisError> {
        cfg.validate()?;
        mp.validate()
            .map_err(|e| SynthesisError::BadInput(e.to_string()))?;
        let names: Vec<String> = mp
            .space
            .names()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i < mp.n_r || *i >= mp.n_r + mp.m_s)
            .map(|(_, n)| n.clone())
            .collect();
        let xsp = VarSpace::new(names);
        // Substituting u_s -> 0 both eliminates the (absent after the affine
        // split) control variables and allows moving into the smaller space.
        let mut zero_us = BTreeMap::new();
        for j in 0..mp.m_s {
            zero_us.insert(mp.us_index(j), Polynomial::zero(&xsp));
        }
        let down = |p: &Polynomial| -> Result<Polynomial, PolyError> {
            p.substitute(&xsp, &zero_us)
        };
        let h_full = mp.h();
        let b_full = mp.input_matrix();
        let h_x = h_full
            .entries
            .iter()
            .map(down)
            .collect::<Result<Vec<_>, _>>()?;
        let b_x = b_full
            .rows
            .iter()
            .map(|row| row.iter().map(down).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let c_x = mp
            .c_map
            .entries
            .iter()
            .map(down)
            .collect::<Result<Vec<_>, _>>()?;
        let gp_x = mp
            .u_p_set
            .ineqs
            .iter()
            .map(|p| p.lift(&xsp))
            .collect::<Result<Vec<_>, _>>()?;

        let c_deg = c_x.iter().map(|p| p.degree()).max().unwrap_or(1).max(1);
        let deg_v_in_x = cfg.deg_v * c_deg;
        if deg_v_in_x % 2 != 0 {
            return Err(SynthesisError::BadInput(
                "level-function degree composed with the bounded-state map is odd".into(),
            ));
        }
        let h_deg = h_x.iter().map(|p| p.degree()).max().unwrap_or(0);
        let b_deg = b_x
            .iter()
            .flat_map(|r| r.iter().map(|p| p.degree()))
            .max()
            .unwrap_or(0);
        let fcl_deg = h_deg.max(b_deg + cfg.deg_k);
        let vdot_deg = deg_v_in_x.saturating_sub(1) + fcl_deg;
        let deg_lpc = cfg.deg_multiplier & !1;
        let gp_deg = gp_x.iter().map(|p| p.degree()).max().unwrap_or(0);
        // The free multiplier's degree is chosen so its product with V
        // dominates every other term and lands on an even total degree.
        let mut target = vdot_deg
            .max(cfg.deg_multiplier + deg_v_in_x)
            .max(deg_lpc + gp_deg);
        if target % 2 != 0 {
            target += 1;
        }
        let deg_lya = target - deg_v_in_x;
        Ok(ProblemData {
            mp: mp.clone(),
            cfg: cfg.clone(),
            xsp,
            c_x,
            h_x,
            b_x,
            gp_x,
            deg_lya,
            deg_lpc,
            deg_ls: 0,
            deg_le: cfg.deg_multiplier & !1,
            deg_v_in_x,
        })
    }

    /// Closed-loop drift for a fixed controller: `h + B k`.
    pub fn closed_loop(&self, k: &[Polynomial]) -> Result<Vec<Polynomial>, PolyError> {
        let mut out = Vec::with_capacity(self.h_x.len());
        for i in 0..self.h_x.len() {
            let mut f = self.h_x[i].clone();
            for (j, kj) in k.iter().enumerate() {
                f = f.add(&self.b_x[i][j].mul(kj)?)?;
            }
            out.push(f);
        }
        Ok(out)
    }

    /// Fixed level function composed with the bounded-state map:
    /// `V(r) = v_tilde(c(r))` in `xsp`.
    pub fn compose_fixed(&self, v_tilde: &Polynomial) -> Result<Polynomial, PolyError> {
        let mut bindings = BTreeMap::new();
        for (j, cj) in self.c_x.iter().enumerate() {
            bindings.insert(j, cj.clone());
        }
        v_tilde.substitute(&self.xsp, &bindings)
    }
}

pub(crate) fn logdet(e: &Array2<f64>) -> Result<f64, SynthesisError> {
    let l = e.cholesky(UPLO::Lower).map_err(|_| SynthesisError::BadInput(
        "log det of a non-positive-definite matrix".into(),
    ))?;
    Ok(2.0 * (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<f64>())
}

/// Solve a compiled program, iterating the logdet linearization to a fixed
/// point when present.
///
/// Returns the final solution; the caller extracts variables from it. The
/// linearization starts at `W = I` and re-linearizes at each iterate's
/// ellipsoid inverse until the logdet terms move by less than `1e-6`.
pub(crate) fn solve_compiled(
    compiled: &mut CompiledSdp,
    logdet_mats: &[MatVarId],
    stage: &str,
) -> Result<(crate::sosprog::Assignment, sdp::SdpSolution), SynthesisError> {
    let mut opts = sdp::SolveOptions::default();
    opts.verbose = std::env::var("TEB_SOLVER_VERBOSE").is_ok();
    if logdet_mats.is_empty() {
        let sol = sdp::solve(&compiled.sdp, &opts);
        return finish_solve(compiled, sol, stage);
    }
    let mut prev: Option<f64> = None;
    let mut last = None;
    for _ in 0..10 {
        let sol = sdp::solve(&compiled.sdp, &opts);
        if !matches!(sol.status, SdpStatus::Optimal | SdpStatus::NearOptimal) {
            return finish_solve(compiled, sol, stage);
        }
        let asg = compiled.extract(&sol);
        let mut total = 0.0;
        let mut inverses = Vec::new();
        for &m in logdet_mats {
            let e = asg.mat(m).clone();
            total += logdet(&e)?;
            let w = e
                .inv()
                .map_err(|_| SynthesisError::Numerical {
                    stage: stage.into(),
                    status: SdpStatus::NumericalTrouble,
                })?;
            inverses.push((m, w));
        }
        last = Some(sol);
        if let Some(p) = prev {
            if (total - p).abs() <= 1e-6 {
                break;
            }
        }
        prev = Some(total);
        compiled.relinearize_logdet(&inverses);
    }
    let sol = last.expect("at least one solve");
    finish_solve(compiled, sol, stage)
}

fn finish_solve(
    compiled: &CompiledSdp,
    sol: sdp::SdpSolution,
    stage: &str,
) -> Result<(crate::sosprog::Assignment, sdp::SdpSolution), SynthesisError> {
    match sol.status {
        SdpStatus::Optimal | SdpStatus::NearOptimal => {
            let asg = compiled.extract(&sol);
            Ok((asg, sol))
        }
        SdpStatus::Infeasible => Err(SynthesisError::Infeasible { stage: stage.into() }),
        s => Err(SynthesisError::Numerical {
            stage: stage.into(),
            status: s,
        }),
    }
}

/// Strip the (numerically tiny) constant term so the level function vanishes
/// at the origin exactly.
pub(crate) fn zero_at_origin(p: &Polynomial) -> Polynomial {
    let c = p.eval_unchecked(&vec![0.0; p.space().dim()]);
    if c == 0.0 {
        return p.clone();
    }
    p.sub(&Polynomial::constant(p.space(), c)).expect("same space")
}

#[allow(unused)]
pub(crate) fn is_psd_pair(
    e: &Array2<f64>,
    e_star: &Array2<f64>,
    lo: f64,
    hi: f64,
    tol: f64,
) -> bool {
    let n = e.nrows();
    let lower = e - &(e_star * lo) + Array2::<f64>::eye(n) * tol;
    let upper = (e_star * hi) - e + Array2::<f64>::eye(n) * tol;
    lower.cholesky(UPLO::Lower).is_ok() && upper.cholesky(UPLO::Lower).is_ok()
}
