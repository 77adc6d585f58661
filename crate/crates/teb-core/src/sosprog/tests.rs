use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::poly::{Parity, Polynomial, VarSpace};
use crate::sdp::{solve, SdpStatus, SolveOptions};

use super::*;

fn solve_prog(prog: &SosProgram) -> (CompiledSdp, crate::sdp::SdpSolution) {
    let compiled = prog.compile().unwrap();
    let mut o = SolveOptions::default();
    o.verbose = std::env::var("TEB_VERBOSE").is_ok();
    let sol = solve(&compiled.sdp, &o);
    (compiled, sol)
}

#[test]
fn declare_poly_basis_counts() {
    let mut prog = SosProgram::new();
    let s1 = VarSpace::new(vec!["x"]);
    let p = prog.declare_poly(&s1, 2, None);
    assert_eq!(p.coeff_vars.len(), 3);

    let s2 = VarSpace::new(vec!["x", "y"]);
    let q = prog.declare_poly(&s2, 2, Some(Parity::Even));
    assert_eq!(q.coeff_vars.len(), 4); // {1, x^2, xy, y^2}
}

#[test]
fn declare_sos_poly_shapes() {
    let mut prog = SosProgram::new();
    let s1 = VarSpace::new(vec!["x"]);
    let p = prog.declare_sos_poly(&s1, 2, "p").unwrap();
    assert_eq!(prog.mats[p.gram.unwrap().0].dim, 2); // z = [1, x]
    let c = prog.declare_sos_poly(&s1, 0, "c").unwrap();
    assert_eq!(prog.mats[c.gram.unwrap().0].dim, 1); // scalar >= 0
    assert!(prog.declare_sos_poly(&s1, 3, "odd").is_err());
}

#[test]
fn sos_feasibility_x2_plus_1() {
    let mut prog = SosProgram::new();
    let s = VarSpace::new(vec!["x"]);
    let x = Polynomial::var(&s, 0);
    let one = Polynomial::constant(&s, 1.0);
    let expr = PolyExpr::from_poly(&x.mul(&x).unwrap().add(&one).unwrap());
    let gram = prog.add_sos_constraint(&expr).unwrap();
    let compiled = prog.compile().unwrap();
    // 2x2 Gram block, 3 coefficient rows (1, x, x^2)
    assert_eq!(compiled.sdp.blocks, vec![crate::sdp::Block::Psd(2)]);
    assert_eq!(compiled.sdp.m(), 3);
    let sol = solve(&compiled.sdp, &SolveOptions::default());
    assert_eq!(sol.status, SdpStatus::Optimal);
    let q = compiled.extract(&sol);
    assert_abs_diff_eq!(q.mat(gram)[(0, 0)], 1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(q.mat(gram)[(1, 1)], 1.0, epsilon = 1e-6);
}

#[test]
fn sos_rejects_odd_degree() {
    let mut prog = SosProgram::new();
    let s = VarSpace::new(vec!["x"]);
    let expr = PolyExpr::from_poly(&Polynomial::var(&s, 0));
    assert!(matches!(
        prog.add_sos_constraint(&expr),
        Err(SosError::OddDegreeSos(1))
    ));
}

/// 2x^4 + 2x^3 y - x^2 y^2 + 5y^4 is SOS (classic example); the Gram round
/// trip must reproduce the coefficients.
#[test]
fn sos_quartic_example_round_trip() {
    let mut prog = SosProgram::new();
    let s = VarSpace::new(vec!["x", "y"]);
    let x = Polynomial::var(&s, 0);
    let y = Polynomial::var(&s, 1);
    let p = x
        .pow(4)
        .scale(2.0)
        .add(&x.pow(3).mul(&y).unwrap().scale(2.0))
        .unwrap()
        .add(&x.pow(2).mul(&y.pow(2)).unwrap().scale(-1.0))
        .unwrap()
        .add(&y.pow(4).scale(5.0))
        .unwrap();
    let expr = PolyExpr::from_poly(&p);
    let gram = prog.add_sos_constraint(&expr).unwrap();
    let compiled = prog.compile().unwrap();
    let sol = solve(&compiled.sdp, &SolveOptions::default());
    assert_eq!(sol.status, SdpStatus::Optimal);
    let asn = compiled.extract(&sol);
    let q = asn.mat(gram);

    // reconstruct z' Q z over the basis used for the Gram block and compare
    let z = monomial_basis(&s, 2, None);
    let z: Vec<_> = z
        .into_iter()
        .filter(|m| m.degree() == 2) // quartic with even support: pure degree-2 basis suffices
        .collect();
    // the compiled basis may be larger; recompute from the block dimension
    let dim = q.nrows();
    let full = monomial_basis(&s, 2, None);
    let basis: Vec<_> = if dim == full.len() { full } else { z };
    assert_eq!(basis.len(), dim);
    let mut recon = Polynomial::zero(&s);
    for i in 0..dim {
        for j in 0..dim {
            recon.add_term(basis[i].mul(&basis[j]), q[(i, j)]);
        }
    }
    for (m, c) in p.terms() {
        assert_abs_diff_eq!(recon.coeff(m), c, epsilon = 1e-8);
    }
    for (m, c) in recon.terms() {
        assert_abs_diff_eq!(p.coeff(m), c, epsilon = 1e-8);
    }

    // soundness: SOS-certified polynomial is nonnegative at random samples
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let pt = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
        assert!(p.eval_unchecked(&pt) >= -1e-6);
    }
}

#[test]
fn validity_constraint_exact_identity() {
    // g = th^2 - (pi/6)^2, V = (6/pi)^2 th^2: {V <= 1} = {g <= 0}, L_g = 1 works
    let s = VarSpace::new(vec!["th"]);
    let th = Polynomial::var(&s, 0);
    let bound = std::f64::consts::PI / 6.0;
    let g = th.pow(2).add(&Polynomial::constant(&s, -bound * bound)).unwrap();
    let v = th.pow(2).scale(1.0 / (bound * bound));

    let mut prog = SosProgram::new();
    let l = prog.declare_sos_poly(&s, 0, "l_g").unwrap();
    let gram = prog
        .add_validity_constraint(&g, &PolyExpr::from_poly(&v), &l.expr)
        .unwrap();
    let _ = gram;
    let (compiled, sol) = solve_prog(&prog);
    assert_eq!(sol.status, SdpStatus::Optimal);
    let asn = compiled.extract(&sol);
    let l_val = asn.realize(&l.expr);
    // -g + L_g (V - 1) = (L_g (6/pi)^2 - 1) th^2 + ((pi/6)^2 - L_g) must be SOS;
    // matching is exact when L_g = (pi/6)^2
    assert!(l_val.coeff(&crate::poly::Monomial::one()) >= -1e-9);
}

#[test]
fn validity_constraint_strict_containment() {
    // V = 100 th^2: sublevel set strictly inside the region
    let s = VarSpace::new(vec!["th"]);
    let th = Polynomial::var(&s, 0);
    let bound = std::f64::consts::PI / 6.0;
    let g = th.pow(2).add(&Polynomial::constant(&s, -bound * bound)).unwrap();
    let v = th.pow(2).scale(100.0);
    let mut prog = SosProgram::new();
    let l = prog.declare_sos_poly(&s, 0, "l_g").unwrap();
    prog.add_validity_constraint(&g, &PolyExpr::from_poly(&v), &l.expr)
        .unwrap();
    let (_, sol) = solve_prog(&prog);
    assert_eq!(sol.status, SdpStatus::Optimal);
}

#[test]
fn validity_constraint_infeasible_when_set_too_big() {
    // V = 0.1 th^2: {V <= 1} reaches |th| = sqrt(10) >> pi/6
    let s = VarSpace::new(vec!["th"]);
    let th = Polynomial::var(&s, 0);
    let bound = std::f64::consts::PI / 6.0;
    let g = th.pow(2).add(&Polynomial::constant(&s, -bound * bound)).unwrap();
    let v = th.pow(2).scale(0.1);
    let mut prog = SosProgram::new();
    let l = prog.declare_sos_poly(&s, 2, "l_g").unwrap();
    prog.add_validity_constraint(&g, &PolyExpr::from_poly(&v), &l.expr)
        .unwrap();
    let compiled = prog.compile().unwrap();
    let sol = solve(&compiled.sdp, &SolveOptions::default());
    assert_ne!(sol.status, SdpStatus::Optimal);
}

#[test]
fn logdet_box_maximization() {
    // maximize logdet(E) over {delta I <= E <= I} (2x2)  ->  E* = I.
    // Iterated linearization from E_ref = I converges immediately.
    let mut prog = SosProgram::new();
    let e = prog.declare_psd_matrix(2, 1e-4, "E");
    // I - E >= 0 as an entrywise-matched PSD slack constraint
    let mut m = vec![vec![LinExpr::default(); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            let mut v = LinExpr::mat_entry(e, r, c).scaled(-1.0);
            if r == c {
                v.constant += 1.0;
            }
            m[r][c] = v;
        }
    }
    prog.add_psd_constraint(&m, "upper");
    prog.set_logdet_objective(e, 1.0);
    let (compiled, sol) = solve_prog(&prog);
    assert_eq!(sol.status, SdpStatus::Optimal);
    let asn = compiled.extract(&sol);
    let ev = asn.mat(e);
    assert_abs_diff_eq!(ev[(0, 0)], 1.0, epsilon = 1e-5);
    assert_abs_diff_eq!(ev[(1, 1)], 1.0, epsilon = 1e-5);
    assert_abs_diff_eq!(ev[(0, 1)], 0.0, epsilon = 1e-5);
}

#[test]
fn logdet_tightest_ellipsoid_of_unit_ball() {
    // maximize logdet(E) s.t. 1 - r'Er + L (V - 1) SOS with V = r'r: E* = I.
    let s = VarSpace::new(vec!["r1", "r2"]);
    let r1 = Polynomial::var(&s, 0);
    let r2 = Polynomial::var(&s, 1);
    let v = r1.pow(2).add(&r2.pow(2)).unwrap();
    let mut prog = SosProgram::new();
    let e = prog.declare_psd_matrix(2, 1e-4, "E");
    let l = prog.declare_sos_poly(&s, 0, "l_e").unwrap();
    let one = PolyExpr::from_poly(&Polynomial::constant(&s, 1.0));
    let quad = prog.quad_form(e, &s, &[0, 1]);
    let v_minus_1 = PolyExpr::from_poly(&v).sub(&one).unwrap();
    let expr = one
        .sub(&quad)
        .unwrap()
        .add(&l.expr.mul(&v_minus_1).unwrap())
        .unwrap();
    prog.add_sos_constraint(&expr).unwrap();
    prog.set_logdet_objective(e, 1.0);

    // iterate the linearization to convergence
    let mut compiled = prog.compile().unwrap();
    let mut e_val = ndarray::Array2::<f64>::eye(2);
    for _ in 0..10 {
        use ndarray_linalg::Inverse;
        compiled.relinearize_logdet(&[(e, e_val.inv().unwrap())]);
        let sol = solve(&compiled.sdp, &SolveOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        e_val = compiled.extract(&sol).mat(e).clone();
    }
    assert_abs_diff_eq!(e_val[(0, 0)], 1.0, epsilon = 1e-4);
    assert_abs_diff_eq!(e_val[(1, 1)], 1.0, epsilon = 1e-4);
    assert_abs_diff_eq!(e_val[(0, 1)], 0.0, epsilon = 1e-4);
}

/// S-procedure soundness: for solved `-p + L phi` SOS with `L` SOS, sampling
/// points with `phi <= 0` yields `p >= -1e-6`.
#[test]
fn s_procedure_soundness_sampling() {
    // certify p = 1 - x^2 >= 0 on {phi = x^2 - 1 <= 0} with L decision SOS
    let s = VarSpace::new(vec!["x"]);
    let x = Polynomial::var(&s, 0);
    let p = Polynomial::constant(&s, 1.0).sub(&x.pow(2)).unwrap();
    let phi = x.pow(2).sub(&Polynomial::constant(&s, 1.0)).unwrap();
    let mut prog = SosProgram::new();
    let l = prog.declare_sos_poly(&s, 2, "l").unwrap();
    // p + L*phi SOS with L SOS certifies p >= 0 on {phi <= 0}
    let expr = PolyExpr::from_poly(&p)
        .add(&l.expr.mul(&PolyExpr::from_poly(&phi)).unwrap())
        .unwrap();
    prog.add_sos_constraint(&expr).unwrap();
    let (compiled, sol) = solve_prog(&prog);
    assert_eq!(sol.status, SdpStatus::Optimal);
    let asn = compiled.extract(&sol);
    let l_val = asn.realize(&l.expr);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let pt = [rng.gen_range(-1.0..1.0)];
        // recovered guarantee: p >= L*phi >= anything nonneg * nonpos
        let cert = p.eval_unchecked(&pt) + l_val.eval_unchecked(&pt) * phi.eval_unchecked(&pt);
        assert!(cert >= -1e-6);
        assert!(l_val.eval_unchecked(&pt) >= -1e-6);
        assert!(p.eval_unchecked(&pt) >= -1e-6);
    }
}

#[test]
fn empty_program_compiles_and_solves() {
    let prog = SosProgram::new();
    let compiled = prog.compile().unwrap();
    assert_eq!(compiled.sdp.m(), 0);
    assert!(compiled.sdp.blocks.is_empty());
}

#[test]
fn unused_variable_rejected() {
    let mut prog = SosProgram::new();
    let _ = prog.declare_scalar(ScalarKind::Free);
    assert!(matches!(prog.compile(), Err(SosError::UnusedVariable(_))));
}

#[test]
fn compilation_is_deterministic() {
    let build = || {
        let s = VarSpace::new(vec!["x", "y"]);
        let x = Polynomial::var(&s, 0);
        let y = Polynomial::var(&s, 1);
        let mut prog = SosProgram::new();
        let gamma = prog.declare_scalar(ScalarKind::Free);
        let p = x.pow(4).add(&y.pow(4)).unwrap();
        let mut expr = PolyExpr::from_poly(&p);
        expr.add_scaled(
            &PolyExpr::term(
                &s,
                crate::poly::Monomial::one(),
                LinExpr::scalar(gamma),
            ),
            1.0,
        )
        .unwrap();
        prog.add_sos_constraint(&expr).unwrap();
        prog.add_linear_objective(&LinExpr::scalar(gamma).scaled(-1.0));
        prog.compile().unwrap().serialize()
    };
    assert_eq!(build(), build());
}

#[test]
fn gram_cap_enforced() {
    let s = VarSpace::new(vec!["a", "b", "c", "d", "e", "f"]);
    let mut prog = SosProgram::new();
    prog.set_gram_cap(10);
    let p = (0..6).fold(Polynomial::constant(&s, 1.0), |acc, i| {
        acc.add(&Polynomial::var(&s, i).pow(4)).unwrap()
    });
    assert!(matches!(
        prog.add_sos_constraint(&PolyExpr::from_poly(&p)),
        Err(SosError::BasisTooLarge { .. })
    ));
}

#[test]
fn scalar_constraints_and_slacks() {
    // maximize t s.t. t <= 3 (via 3 - t >= 0)
    let mut prog = SosProgram::new();
    let t = prog.declare_scalar(ScalarKind::Free);
    let mut e = LinExpr::constant(3.0);
    e.add_scaled(&LinExpr::scalar(t), -1.0);
    prog.add_scalar_geq(&e);
    prog.add_linear_objective(&LinExpr::scalar(t));
    let (compiled, sol) = solve_prog(&prog);
    assert_eq!(sol.status, SdpStatus::Optimal);
    let asn = compiled.extract(&sol);
    assert_abs_diff_eq!(asn.scalar(t), 3.0, epsilon = 1e-6);
    assert_abs_diff_eq!(compiled.objective_value(&sol), 3.0, epsilon = 1e-6);
}

/// Gram round trip on a randomly generated certified SOS polynomial.
#[test]
fn gram_round_trip_random() {
    let s = VarSpace::new(vec!["x", "y"]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // p = sum of squares of two random quadratics: SOS by construction
    let basis = monomial_basis(&s, 2, None);
    let mut q1 = Polynomial::zero(&s);
    let mut q2 = Polynomial::zero(&s);
    for m in &basis {
        q1.add_term(m.clone(), rng.gen_range(-1.0..1.0));
        q2.add_term(m.clone(), rng.gen_range(-1.0..1.0));
    }
    let p = q1.mul(&q1).unwrap().add(&q2.mul(&q2).unwrap()).unwrap();
    let mut prog = SosProgram::new();
    let gram = prog.add_sos_constraint(&PolyExpr::from_poly(&p)).unwrap();
    let compiled = prog.compile().unwrap();
    let sol = solve(&compiled.sdp, &SolveOptions::default());
    assert_eq!(sol.status, SdpStatus::Optimal);
    let q = compiled.extract(&sol);
    let qm = q.mat(gram);
    let z = monomial_basis(&s, 2, None);
    assert_eq!(z.len(), qm.nrows());
    let mut recon = Polynomial::zero(&s);
    for i in 0..z.len() {
        for j in 0..z.len() {
            recon.add_term(z[i].mul(&z[j]), qm[(i, j)]);
        }
    }
    for (m, c) in p.terms() {
        assert_abs_diff_eq!(recon.coeff(m), c, epsilon = 1e-8);
    }
}
