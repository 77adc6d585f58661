//! Alternation drivers: feasibility initialization, the main maximize loop,
//! and the trust-region backtrack.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::models::ModelPair;
use crate::poly::{Monomial, Polynomial};

use super::presearch::presearch_v0;
use super::subproblems::{k_subproblem, tightest_ellipsoid, v_subproblem, VMode};
use super::{
    certificate_from_state, unix_now, Certificate, Multipliers, ProblemData,
    SynthesisConfig, SynthesisError, SynthesisState,
};

/// Result of the initialization loop. Failure to find a feasible invariant
/// set within the iteration budget is an outcome, not an error.
#[derive(Debug)]
pub enum GuessOutcome {
    Feasible {
        state: SynthesisState,
        iterations: usize,
    },
    Failure {
        iterations: usize,
        gamma_c: f64,
        gamma: f64,
        eps_inf: f64,
    },
}

/// Random diagonal quadratic start `sum q_i x_i^2`, `q_i ~ U(0.5, 2)`.
fn default_v0(pd: &ProblemData) -> Polynomial {
    let mut rng = ChaCha8Rng::seed_from_u64(pd.cfg.seed);
    let mut v = Polynomial::zero(&pd.mp.c_space);
    for i in 0..pd.mp.n_rtilde {
        v.add_term(Monomial::from_pairs(vec![(i as u16, 2)]), rng.gen_range(0.5..2.0));
    }
    v
}

/// Alternate the controller sub-problem and a slack-minimizing level
/// sub-problem until the slacks drop below the tolerance, proving the
/// sublevel set invariant.
///
/// `v0` overrides the random quadratic start; it must vanish at the origin.
pub fn generate_feasible_guess(
    mp: &ModelPair,
    cfg: &SynthesisConfig,
    v0: Option<Polynomial>,
) -> Result<GuessOutcome, SynthesisError> {
    let pd = ProblemData::new(mp, cfg)?;
    let mut vt = match v0 {
        Some(v) => {
            if v.space().dim() != mp.n_rtilde {
                return Err(SynthesisError::BadInput(format!(
                    "initial level function has {} variables, expected {}",
                    v.space().dim(),
                    mp.n_rtilde
                )));
            }
            if v.eval_unchecked(&vec![0.0; mp.n_rtilde]) != 0.0 {
                return Err(SynthesisError::BadInput(
                    "initial level function must vanish at the origin".into(),
                ));
            }
            v.lift(&mp.c_space)?
        }
        None => default_v0(&pd),
    };
    let n_rows = mp.u_s_set.num_rows();
    let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    // One sampled min-max restart is allowed when the alternation stalls in a
    // poor basin or a sub-problem fails; see the `presearch` module.
    let mut restart_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut restarts = 0usize;
    const MAX_RESTARTS: usize = 5;
    let mut prev_gamma_c = f64::INFINITY;
    let recoverable = |e: &SynthesisError| {
        matches!(
            e,
            SynthesisError::Infeasible { .. } | SynthesisError::Numerical { .. }
        )
    };
    for i in 0..cfg.max_iters {
        let ks = match k_subproblem(&pd, &vt, None) {
            Ok(ks) => ks,
            Err(e) if restarts < MAX_RESTARTS && recoverable(&e) => {
                restarts += 1;
                prev_gamma_c = f64::INFINITY;
                vt = presearch_v0(mp, &mut restart_rng);
                continue;
            }
            Err(e) => return Err(e),
        };
        let stalled = ks.gamma_c > cfg.delta
            && prev_gamma_c - ks.gamma_c <= 0.05 * prev_gamma_c.abs().max(cfg.delta);
        if stalled && restarts < MAX_RESTARTS {
            restarts += 1;
            prev_gamma_c = f64::INFINITY;
            vt = presearch_v0(mp, &mut restart_rng);
            continue;
        }
        prev_gamma_c = ks.gamma_c;
        let es = match tightest_ellipsoid(&pd, &vt, None) {
            Ok(es) => es,
            Err(e) if restarts < MAX_RESTARTS && recoverable(&e) => {
                restarts += 1;
                prev_gamma_c = f64::INFINITY;
                vt = presearch_v0(mp, &mut restart_rng);
                continue;
            }
            Err(e) => return Err(e),
        };
        if ks.gamma_c <= cfg.delta {
            let state = SynthesisState {
                v_star: vt,
                e_star: es.e,
                k_star: ks.k,
                multipliers: Multipliers {
                    l_lya: ks.l_lya,
                    l_pc: ks.l_pc,
                    l_s: ks.l_s,
                    l_e: es.l_e,
                    l_g: es.l_g,
                },
                gamma_c_star: ks.gamma_c,
                gamma_star: ks.gamma_c,
                eps_star: vec![0.0; n_rows],
                objective_history: vec![es.logdet],
            };
            return Ok(GuessOutcome::Feasible { state, iterations: i + 1 });
        }
        let vs = match v_subproblem(
            &pd,
            &ks.k,
            &ks.l_lya,
            &ks.l_s,
            &es.l_e,
            &es.l_g,
            None,
            &VMode::Init { gamma_cap: ks.gamma_c },
        ) {
            Ok(vs) => vs,
            Err(e) if restarts < MAX_RESTARTS && recoverable(&e) => {
                restarts += 1;
                prev_gamma_c = f64::INFINITY;
                vt = presearch_v0(mp, &mut restart_rng);
                continue;
            }
            Err(e) => return Err(e),
        };
        last = (ks.gamma_c, vs.gamma, vs.eps_inf());
        if vs.slacks_ok(cfg.delta) {
            let state = SynthesisState {
                v_star: vs.v_tilde,
                e_star: vs.e.clone(),
                k_star: ks.k,
                multipliers: Multipliers {
                    l_lya: ks.l_lya,
                    l_pc: vs.l_pc,
                    l_s: ks.l_s,
                    l_e: es.l_e,
                    l_g: es.l_g,
                },
                gamma_c_star: ks.gamma_c,
                gamma_star: vs.gamma,
                eps_star: vs.eps,
                objective_history: vec![vs.logdet],
            };
            return Ok(GuessOutcome::Feasible { state, iterations: i + 1 });
        }
        vt = vs.v_tilde;
    }
    Ok(GuessOutcome::Failure {
        iterations: cfg.max_iters,
        gamma_c: last.0,
        gamma: last.1,
        eps_inf: last.2,
    })
}

/// Trust-region parameters visited during the shrink phase: repeated `beta`
/// contractions of `alpha_bar`, stopping once `alpha <= theta2 * alpha_bar`.
pub fn shrink_schedule(cfg: &SynthesisConfig) -> Vec<f64> {
    let mut out = Vec::new();
    let mut a = cfg.alpha_bar;
    while a > cfg.theta2 * cfg.alpha_bar {
        a *= cfg.beta;
        out.push(a);
    }
    out
}

/// One trust-region pass for a fixed controller and multipliers.
///
/// Grow phase: repeatedly re-solve the level sub-problem inside a trust
/// region re-centered on each accepted iterate, accepting while the slacks
/// stay under the tolerance and the objective does not regress. On the first
/// rejection, shrink the trust region geometrically and accept the first
/// iterate that passes. Returns the best objective; `state` holds the last
/// accepted iterate (unchanged if nothing was accepted).
///
/// Deviations from the plain scheme, for robustness: the grow phase is capped
/// at 20 passes and stops once the objective improvement falls under
/// `1e-6 * max(1, |c|)`, and acceptance additionally requires the objective
/// not to regress (keeping the recorded objective history non-decreasing).
pub fn backtrack(
    pd: &ProblemData,
    state: &mut SynthesisState,
) -> Result<f64, SynthesisError> {
    let cfg = &pd.cfg;
    let mut c_star = *state
        .objective_history
        .last()
        .expect("backtrack needs an accepted iterate");
    let solve = |st: &SynthesisState, alpha: f64| {
        v_subproblem(
            pd,
            &st.k_star,
            &st.multipliers.l_lya,
            &st.multipliers.l_s,
            &st.multipliers.l_e,
            &st.multipliers.l_g,
            Some(&st.v_star),
            &VMode::Trust { e_star: st.e_star.clone(), alpha },
        )
    };
    let mut rejected = false;
    for _ in 0..20 {
        match solve(state, cfg.alpha_bar) {
            Ok(vs) if vs.slacks_ok(cfg.delta) && vs.logdet >= c_star - 1e-9 => {
                let gain = vs.logdet - c_star;
                c_star = vs.logdet;
                state.v_star = vs.v_tilde;
                state.e_star = vs.e;
                state.multipliers.l_pc = vs.l_pc;
                state.gamma_star = vs.gamma;
                state.eps_star = vs.eps;
                state.objective_history.push(c_star);
                if gain <= 1e-6 * c_star.abs().max(1.0) {
                    return Ok(c_star);
                }
            }
            Ok(_) => {
                rejected = true;
                break;
            }
            Err(SynthesisError::Infeasible { .. })
            | Err(SynthesisError::Numerical { .. }) => {
                rejected = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if rejected {
        for alpha in shrink_schedule(cfg) {
            match solve(state, alpha) {
                Ok(vs) if vs.slacks_ok(cfg.delta) && vs.logdet >= c_star - 1e-9 => {
                    c_star = vs.logdet;
                    state.v_star = vs.v_tilde;
                    state.e_star = vs.e;
                    state.multipliers.l_pc = vs.l_pc;
                    state.gamma_star = vs.gamma;
                    state.eps_star = vs.eps;
                    state.objective_history.push(c_star);
                    break;
                }
                Ok(_) => {}
                Err(SynthesisError::Infeasible { .. })
                | Err(SynthesisError::Numerical { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(c_star)
}

/// Full synthesis: initialize a feasible invariant set, then alternate the
/// controller sub-problem (with the invariance slack pinned nonpositive) and
/// trust-region level updates until the bounding-ellipsoid objective
/// stagnates or the controller sub-problem stops being solvable.
pub fn synthesize(mp: &ModelPair, cfg: &SynthesisConfig) -> Result<Certificate, SynthesisError> {
    let started = unix_now();
    let pd = ProblemData::new(mp, cfg)?;
    let mut state = match generate_feasible_guess(mp, cfg, None)? {
        GuessOutcome::Feasible { state, .. } => state,
        GuessOutcome::Failure {
            iterations,
            gamma_c,
            gamma,
            eps_inf,
        } => {
            return Err(SynthesisError::InitFailed {
                iterations,
                gamma_c,
                gamma,
                eps: eps_inf,
            })
        }
    };
    let mut c_prev = *state.objective_history.last().unwrap();
    for _ in 0..cfg.max_iters {
        let ks = match k_subproblem(&pd, &state.v_star, Some(0.0)) {
            Ok(ks) => ks,
            Err(SynthesisError::Infeasible { .. })
            | Err(SynthesisError::Numerical { .. }) => break,
            Err(e) => return Err(e),
        };
        let es = match tightest_ellipsoid(&pd, &state.v_star, Some(&state.e_star)) {
            Ok(es) => es,
            Err(SynthesisError::Infeasible { .. })
            | Err(SynthesisError::Numerical { .. }) => break,
            Err(e) => return Err(e),
        };
        state.k_star = ks.k;
        state.gamma_c_star = ks.gamma_c;
        state.multipliers.l_lya = ks.l_lya;
        state.multipliers.l_pc = ks.l_pc;
        state.multipliers.l_s = ks.l_s;
        state.multipliers.l_e = es.l_e;
        state.multipliers.l_g = es.l_g;
        state.e_star = es.e;
        let c_new = backtrack(&pd, &mut state)?;
        if (c_new - c_prev).abs() <= cfg.theta1 * c_prev.abs() {
            break;
        }
        c_prev = c_new;
    }
    let cert = certificate_from_state(mp, cfg, &state, started);
    cert.check()?;
    Ok(cert)
}
