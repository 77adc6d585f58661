
use ndarray::Array2;

use crate::models::{catalog, PolytopicControlSet, SemialgebraicSet};
use crate::poly::{Monomial, Polynomial};

use super::*;

fn model(name: &str) -> crate::models::ModelPair {
    catalog()
        .into_iter()
        .find(|m| m.name == name)
        .expect("model in catalog")
}

fn quadratic(space: &std::sync::Arc<crate::poly::VarSpace>, diag: &[f64]) -> Polynomial {
    let mut v = Polynomial::zero(space);
    for (i, &q) in diag.iter().enumerate() {
        v.add_term(Monomial::from_pairs(vec![(i as u16, 2)]), q);
    }
    v
}

#[test]
fn config_defaults_validate_and_bad_values_are_rejected() {
    let cfg = SynthesisConfig::default();
    cfg.validate().unwrap();
    let mut bad = cfg.clone();
    bad.deg_v = 3;
    assert!(bad.validate().is_err());
    let mut bad = cfg.clone();
    bad.beta = 1.0;
    assert!(bad.validate().is_err());
    let mut bad = cfg.clone();
    bad.delta = 1.0;
    assert!(bad.validate().is_err());
    let mut bad = cfg;
    bad.delta_e = 0.0;
    assert!(bad.validate().is_err());
}

#[test]
fn shrink_schedule_is_the_geometric_backtrack_sequence() {
    let cfg = SynthesisConfig::default();
    let sched = shrink_schedule(&cfg);
    let expected = [0.25, 0.125, 0.0625, 0.03125];
    assert_eq!(sched.len(), expected.len());
    for (a, e) in sched.iter().zip(expected) {
        assert!((a - e).abs() < 1e-12, "schedule {sched:?}");
    }
}

#[test]
fn controller_subproblem_stabilizes_the_scalar_toy() {
    let mp = model("toy1d_drift");
    let cfg = SynthesisConfig::default();
    let pd = ProblemData::new(&mp, &cfg).unwrap();
    let vt = quadratic(&mp.c_space, &[1.0]);
    let ks = k_subproblem(&pd, &vt, None).unwrap();
    // the tracking authority (|u| <= 1) dominates the planner drift
    // (|u_p| <= 0.5), so the level set boundary can be made strictly
    // decreasing: best case dV/dt = 2 r (u - u_p) = -2 + 1 at |r| = 1
    assert!(ks.gamma_c < -0.5, "gamma_c = {}", ks.gamma_c);
    let f_cl = pd.closed_loop(&ks.k).unwrap();
    for &r in &[-1.0, 1.0] {
        for k in 0..21 {
            let up = -0.5 + k as f64 * 0.05;
            let x = [r, up];
            let vdot = 2.0 * r * f_cl[0].eval_unchecked(&x);
            assert!(vdot <= ks.gamma_c + 1e-6, "vdot {vdot} at r={r}, up={up}");
        }
    }
    // controller admissible on the sublevel set
    for k in 0..21 {
        let r = -1.0 + k as f64 * 0.1;
        let u = ks.k[0].eval_unchecked(&[r, 0.0]);
        assert!(u.abs() <= 1.0 + 1e-6, "K({r}) = {u}");
    }
}

#[test]
fn controller_subproblem_reports_positive_slack_without_authority() {
    let mut mp = model("toy1d_drift");
    // weaker tracker than planner: invariance is impossible and the minimized
    // slack certifies it, 2 r (u - u_p) >= 2 (0.5 - 0.3) at the boundary
    mp.u_s_set = PolytopicControlSet::from_box(&[(-0.3, 0.3)]);
    let cfg = SynthesisConfig::default();
    let pd = ProblemData::new(&mp, &cfg).unwrap();
    let vt = quadratic(&mp.c_space, &[1.0]);
    let ks = k_subproblem(&pd, &vt, None).unwrap();
    assert!(ks.gamma_c > 0.3, "gamma_c = {}", ks.gamma_c);
    assert!(ks.gamma_c < 0.5, "gamma_c = {}", ks.gamma_c);
}

#[test]
fn tightest_ellipsoid_matches_quadratic_sublevel_sets() {
    let mp = model("car4d_si2d");
    let cfg = SynthesisConfig::default();
    let pd = ProblemData::new(&mp, &cfg).unwrap();
    // {4x^2 + y^2 + z^2 <= 1} is itself an ellipsoid
    let vt = quadratic(&mp.c_space, &[4.0, 1.0, 1.0]);
    let es = tightest_ellipsoid(&pd, &vt, None).unwrap();
    let expect = [4.0, 1.0, 1.0];
    for i in 0..3 {
        for j in 0..3 {
            let want = if i == j { expect[i] } else { 0.0 };
            assert!(
                (es.e[[i, j]] - want).abs() < 2e-2,
                "E = {:?}",
                es.e
            );
        }
    }
    assert!((es.logdet - 4.0f64.ln()).abs() < 2e-2);
}

#[test]
fn ellipsoid_step_enforces_validity_containment() {
    let mut mp = model("toy1d_drift");
    let mut g = Polynomial::zero(&mp.c_space);
    g.add_term(Monomial::from_pairs(vec![(0, 2)]), 1.0);
    g.add_term(Monomial::from_pairs(Vec::new()), -0.25);
    mp.validity = SemialgebraicSet::new(mp.c_space.clone(), vec![g], vec![]);
    let cfg = SynthesisConfig::default();
    let pd = ProblemData::new(&mp, &cfg).unwrap();

    // {r^2 <= 1} = [-1, 1] is not inside the validity region [-0.5, 0.5]
    let vt = quadratic(&mp.c_space, &[1.0]);
    assert!(matches!(
        tightest_ellipsoid(&pd, &vt, None),
        Err(SynthesisError::Infeasible { .. })
    ));

    // {5 r^2 <= 1} is, and its tightest ellipsoid is exact
    let vt = quadratic(&mp.c_space, &[5.0]);
    let es = tightest_ellipsoid(&pd, &vt, None).unwrap();
    assert!((es.e[[0, 0]] - 5.0).abs() < 5e-2, "E = {:?}", es.e);
}

#[test]
fn initialization_accepts_the_compliant_toy_quickly() {
    let mp = model("toy1d_drift");
    let cfg = SynthesisConfig::default();
    match generate_feasible_guess(&mp, &cfg, None).unwrap() {
        GuessOutcome::Feasible { state, iterations } => {
            assert!(iterations <= 3, "took {iterations} iterations");
            assert!(state.gamma_star <= cfg.delta);
            assert!(state.eps_inf() <= cfg.delta);
            assert_eq!(state.objective_history.len(), 1);
            assert!(state.objective_history[0].is_finite());
        }
        f => panic!("expected feasible outcome, got {f:?}"),
    }
}

#[test]
fn initialization_rejects_level_functions_offset_from_origin() {
    let mp = model("toy1d_drift");
    let cfg = SynthesisConfig::default();
    let mut v0 = quadratic(&mp.c_space, &[1.0]);
    v0.add_term(Monomial::from_pairs(Vec::new()), 1.0);
    assert!(matches!(
        generate_feasible_guess(&mp, &cfg, Some(v0)),
        Err(SynthesisError::BadInput(_))
    ));
}

#[test]
fn initialization_failure_is_an_outcome_not_a_panic() {
    let mut mp = model("toy1d_drift");
    mp.u_s_set = PolytopicControlSet::from_box(&[(-0.3, 0.3)]);
    let mut cfg = SynthesisConfig::default();
    cfg.max_iters = 3;
    match generate_feasible_guess(&mp, &cfg, None).unwrap() {
        GuessOutcome::Failure { iterations, gamma_c, .. } => {
            assert_eq!(iterations, 3);
            assert!(gamma_c > cfg.delta);
        }
        f => panic!("expected failure outcome, got {f:?}"),
    }
}

#[test]
fn level_subproblem_respects_the_trust_region() {
    let mp = model("toy1d_drift");
    let cfg = SynthesisConfig::default();
    let pd = ProblemData::new(&mp, &cfg).unwrap();
    let state = match generate_feasible_guess(&mp, &cfg, None).unwrap() {
        GuessOutcome::Feasible { state, .. } => state,
        f => panic!("expected feasible outcome, got {f:?}"),
    };
    let ks = k_subproblem(&pd, &state.v_star, Some(0.0)).unwrap();
    let es = tightest_ellipsoid(&pd, &state.v_star, None).unwrap();
    let alpha = cfg.alpha_bar;
    let vs = v_subproblem(
        &pd,
        &ks.k,
        &ks.l_lya,
        &ks.l_s,
        &es.l_e,
        &es.l_g,
        Some(&state.v_star),
        &VMode::Trust { e_star: es.e.clone(), alpha },
    )
    .unwrap();
    assert!(vs.slacks_ok(cfg.delta), "gamma {} eps {:?}", vs.gamma, vs.eps);
    assert!(
        is_psd_pair(&vs.e, &es.e, cfg.alpha_lower, 1.0 + alpha, 1e-6),
        "E = {:?} outside [{} E*, {} E*], E* = {:?}",
        vs.e,
        cfg.alpha_lower,
        1.0 + alpha,
        es.e
    );
}

#[test]
fn synthesis_on_the_scalar_toy_yields_a_checked_certificate() {
    let mp = model("toy1d_drift");
    let cfg = SynthesisConfig::default();
    let cert = synthesize(&mp, &cfg).unwrap();
    cert.check().unwrap();
    assert_eq!(cert.model, "toy1d_drift");
    assert!(cert.slacks.gamma <= cfg.delta);
    for &e in &cert.slacks.eps {
        assert!(e <= cfg.delta);
    }
    for w in cert.objective_history.windows(2) {
        assert!(w[1] >= w[0] - 1e-9, "history {:?}", cert.objective_history);
    }
    assert!(cert.finished_at >= cert.started_at);

    // sampled invariance on the level-set boundary: V(r) = r~(r)-shaped here,
    // so solve V(r) = 1 by bisection on each side of the origin
    let v = cert.v_tilde.to_poly().unwrap();
    let k = cert.k[0].to_poly().unwrap();
    let pd = ProblemData::new(&mp, &cfg).unwrap();
    let vx = pd.compose_fixed(&v).unwrap();
    let eps_inf = cert
        .slacks
        .eps
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    for side in [-1.0, 1.0] {
        let mut lo = 0.0;
        let mut hi = side * 100.0;
        assert!(vx.eval_unchecked(&[hi, 0.0]) > 1.0, "level set unbounded");
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if vx.eval_unchecked(&[mid, 0.0]) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r = 0.5 * (lo + hi);
        let dv = vx.differentiate(0);
        for i in 0..21 {
            let up = -0.5 + i as f64 * 0.05;
            let u = k.eval_unchecked(&[r, up]);
            let vdot = dv.eval_unchecked(&[r, up]) * (u - up);
            assert!(
                vdot <= cert.slacks.gamma + 1e-6,
                "vdot {vdot} at boundary r={r}, up={up}"
            );
            assert!(u.abs() <= 1.0 + eps_inf + 1e-6, "K({r}) = {u}");
        }
    }

    // serialization round trip
    let back = Certificate::from_json(&cert.to_json()).unwrap();
    assert_eq!(back.v_tilde.terms, cert.v_tilde.terms);
    assert_eq!(back.e, cert.e);
    assert_eq!(back.objective_history, cert.objective_history);
    back.check().unwrap();
}

#[test]
fn certificate_check_flags_violated_invariants() {
    let mp = model("toy1d_drift");
    let cfg = SynthesisConfig::default();
    let cert = synthesize(&mp, &cfg).unwrap();

    let mut offset = cert.clone();
    let mut v = offset.v_tilde.to_poly().unwrap();
    v.add_term(Monomial::from_pairs(Vec::new()), 0.5);
    offset.v_tilde = PolySer::from_poly(&v);
    assert!(offset.check().is_err());

    let mut shallow = cert;
    shallow.e = vec![vec![-1.0]];
    assert!(shallow.check().is_err());
}

#[test]
fn backtrack_never_regresses_the_objective() {
    let mp = model("toy1d_drift");
    let cfg = SynthesisConfig::default();
    let pd = ProblemData::new(&mp, &cfg).unwrap();
    let mut state = match generate_feasible_guess(&mp, &cfg, None).unwrap() {
        GuessOutcome::Feasible { state, .. } => state,
        f => panic!("expected feasible outcome, got {f:?}"),
    };
    let before = *state.objective_history.last().unwrap();
    let ks = k_subproblem(&pd, &state.v_star, Some(0.0)).unwrap();
    let es = tightest_ellipsoid(&pd, &state.v_star, None).unwrap();
    state.k_star = ks.k;
    state.multipliers.l_lya = ks.l_lya;
    state.multipliers.l_pc = ks.l_pc;
    state.multipliers.l_s = ks.l_s;
    state.multipliers.l_e = es.l_e;
    state.multipliers.l_g = es.l_g;
    state.e_star = es.e;
    let after = backtrack(&pd, &mut state).unwrap();
    assert!(after >= before - 1e-9, "{after} < {before}");
    assert!(state.gamma_star <= cfg.delta);
    for w in state.objective_history.windows(2) {
        assert!(w[1] >= w[0] - 1e-9);
    }
}

#[test]
fn poly_serialization_round_trips_through_json() {
    let mp = model("car4d_si2d");
    let mut p = Polynomial::zero(&mp.c_space);
    p.add_term(Monomial::from_pairs(vec![(0, 2)]), 1.5);
    p.add_term(Monomial::from_pairs(vec![(1, 1), (2, 1)]), -0.25);
    let ser = PolySer::from_poly(&p);
    let back = ser.to_poly().unwrap();
    assert_eq!(back.space().names(), p.space().names());
    for x in [[0.3, -0.2, 0.7], [1.0, 2.0, -1.0]] {
        assert!((back.eval_unchecked(&x) - p.eval_unchecked(&x)).abs() < 1e-15);
    }
}

#[test]
fn is_psd_pair_detects_sandwich_violations() {
    let e_star = Array2::eye(2);
    let inside = Array2::eye(2) * 1.2;
    let outside = Array2::eye(2) * 2.0;
    assert!(is_psd_pair(&inside, &e_star, 0.5, 1.5, 1e-9));
    assert!(!is_psd_pair(&outside, &e_star, 0.5, 1.5, 1e-9));
    assert!(!is_psd_pair(&(Array2::eye(2) * 0.1), &e_star, 0.5, 1.5, 1e-9));
}
