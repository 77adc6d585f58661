use std::collections::BTreeMap;
use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn xy() -> Arc<VarSpace> {
    VarSpace::new(vec!["x", "y"])
}

#[test]
fn add_and_eval() {
    let s = xy();
    let x = Polynomial::var(&s, 0);
    let y = Polynomial::var(&s, 1);
    let p = x.mul(&x).unwrap().add(&y.scale(2.0)).unwrap();
    assert_eq!(p.evaluate(&[1.0, 2.0]).unwrap(), 5.0);
    assert_eq!(p.evaluate(&[0.0, 0.0]).unwrap(), 0.0);
}

#[test]
fn difference_of_squares() {
    let s = xy();
    let x = Polynomial::var(&s, 0);
    let one = Polynomial::constant(&s, 1.0);
    let p = x.add(&one).unwrap().mul(&x.sub(&one).unwrap()).unwrap();
    let expected = x.mul(&x).unwrap().sub(&one).unwrap();
    assert_eq!(p, expected);
}

#[test]
fn mul_by_zero_annihilates() {
    let s = xy();
    let x = Polynomial::var(&s, 0);
    let z = Polynomial::zero(&s);
    assert!(x.mul(&z).unwrap().is_zero());
}

#[test]
fn space_mismatch_rejected() {
    let a = Polynomial::var(&xy(), 0);
    let b = Polynomial::var(&VarSpace::new(vec!["u"]), 0);
    assert!(matches!(a.add(&b), Err(PolyError::SpaceMismatch(_, _))));
}

#[test]
fn power_rule() {
    let s = xy();
    let x = Polynomial::var(&s, 0);
    let p = x.pow(3).differentiate(0);
    assert_eq!(p, x.mul(&x).unwrap().scale(3.0));
    // d/dx y^2 = 0
    let y2 = Polynomial::var(&s, 1).pow(2);
    assert!(y2.differentiate(0).is_zero());
}

#[test]
fn derivative_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let s = VarSpace::new(vec!["x", "y", "z"]);
    for _ in 0..20 {
        let mut p = Polynomial::zero(&s);
        for m in monomial_basis(&s, 4, None) {
            p.add_term(m, rng.gen_range(-2.0..2.0));
        }
        let dp = p.differentiate(1);
        for _ in 0..10 {
            let pt: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let mut hi = pt.clone();
            let mut lo = pt.clone();
            hi[1] += h;
            lo[1] -= h;
            let fd = (p.eval_unchecked(&hi) - p.eval_unchecked(&lo)) / (2.0 * h);
            let exact = dp.eval_unchecked(&pt);
            let denom = exact.abs().max(1.0);
            assert!((fd - exact).abs() / denom < 1e-6, "fd {fd} vs {exact}");
        }
    }
}

#[test]
fn substitute_binomial() {
    let s = xy();
    let x2 = Polynomial::var(&s, 0).pow(2);
    let ys = VarSpace::new(vec!["y"]);
    let y = Polynomial::var(&ys, 0);
    let mut b = BTreeMap::new();
    b.insert(0usize, y.add(&Polynomial::constant(&ys, 1.0)).unwrap());
    let out = x2.substitute(&ys, &b).unwrap();
    // y^2 + 2y + 1
    assert_abs_diff_eq!(out.eval_unchecked(&[3.0]), 16.0, epsilon = 1e-12);
    assert_eq!(out.num_terms(), 3);
}

#[test]
fn substitute_composition() {
    // V~ = rt1^2 + rt2^2 with c(r) = (r1, r1 r2) gives r1^2 + r1^2 r2^2
    let rt = VarSpace::new(vec!["rt1", "rt2"]);
    let vt = Polynomial::var(&rt, 0)
        .pow(2)
        .add(&Polynomial::var(&rt, 1).pow(2))
        .unwrap();
    let r = VarSpace::new(vec!["r1", "r2"]);
    let r1 = Polynomial::var(&r, 0);
    let r2 = Polynomial::var(&r, 1);
    let mut b = BTreeMap::new();
    b.insert(0usize, r1.clone());
    b.insert(1usize, r1.mul(&r2).unwrap());
    let v = vt.substitute(&r, &b).unwrap();
    let expect = r1.pow(2).add(&r1.pow(2).mul(&r2.pow(2)).unwrap()).unwrap();
    assert_eq!(v, expect);
}

#[test]
fn substitute_unbound_errors() {
    let s = xy();
    let p = Polynomial::var(&s, 0).add(&Polynomial::var(&s, 1)).unwrap();
    let t = VarSpace::new(vec!["x"]);
    let err = p.substitute(&t, &BTreeMap::new());
    assert!(matches!(err, Err(PolyError::UnboundIndeterminate(_))));
}

#[test]
fn evaluate_dimension_check() {
    let p = Polynomial::var(&xy(), 0);
    assert!(matches!(
        p.evaluate(&[1.0]),
        Err(PolyError::DimensionMismatch { .. })
    ));
}

#[test]
fn basis_small_cases() {
    let s = xy();
    let b = monomial_basis(&s, 1, None);
    assert_eq!(b.len(), 3);
    assert_eq!(b[0], Monomial::one());
    assert_eq!(b[1], Monomial::var(0));
    assert_eq!(b[2], Monomial::var(1));

    let u = VarSpace::new(vec!["x"]);
    assert_eq!(monomial_basis(&u, 2, None).len(), 3);

    // C(n+d, d) count
    let s5 = VarSpace::new(vec!["a", "b", "c", "d", "e"]);
    assert_eq!(monomial_basis(&s5, 3, None).len(), 56); // C(8,3)
}

#[test]
fn basis_parity_filter() {
    let s = xy();
    let b = monomial_basis(&s, 2, Some(Parity::Even));
    assert_eq!(b.len(), 4); // 1, x^2, xy, y^2
    assert!(b.iter().all(|m| m.degree() % 2 == 0));
}

#[test]
fn basis_strictly_ordered() {
    let s = VarSpace::new(vec!["x", "y", "z"]);
    let b = monomial_basis(&s, 4, None);
    for w in b.windows(2) {
        assert!(w[0] < w[1]);
    }
}

#[test]
fn cheb_cos_degree2() {
    let a = cheb_approximate(ChebTarget::Cos, (-PI / 6.0, PI / 6.0), 2).unwrap();
    assert!(a.max_error < 1e-3, "max_error {}", a.max_error);
    assert!((a.eval(0.0) - 1.0).abs() <= a.max_error + 1e-12);
}

#[test]
fn cheb_sin_odd_symmetry() {
    let a = cheb_approximate(ChebTarget::Sin, (-0.5, 0.5), 5).unwrap();
    // even-degree coefficients vanish
    for (m, c) in a.coeffs.terms() {
        if m.degree() % 2 == 0 {
            assert!(c.abs() < 1e-12, "even coeff {c}");
        }
    }
}

#[test]
fn cheb_error_nonincreasing_in_degree() {
    let mut prev = f64::INFINITY;
    for d in 0..8 {
        let a = cheb_approximate(ChebTarget::Cos, (-1.0, 1.0), d).unwrap();
        assert!(a.max_error <= prev + 1e-12);
        prev = a.max_error;
    }
}

#[test]
fn cheb_reciprocal_guard() {
    assert!(cheb_approximate(ChebTarget::Reciprocal, (-1.0, 1.0), 2).is_err());
    let a = cheb_approximate(ChebTarget::Reciprocal, (3.0, 10.0), 2).unwrap();
    assert!(a.max_error < 0.05);
}

#[test]
fn cheb_derivative_near_zero() {
    // d/dtheta of the degree-2 cos approximation at 0 is within 1e-2 of 0
    let a = cheb_approximate(ChebTarget::Cos, (-PI / 6.0, PI / 6.0), 2).unwrap();
    let d = a.coeffs.differentiate(0);
    assert!(d.eval_unchecked(&[0.0]).abs() < 1e-2);
}

#[test]
fn ring_distributivity_sampled() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let s = VarSpace::new(vec!["x", "y", "z"]);
    let basis = monomial_basis(&s, 3, None);
    let random_poly = |rng: &mut ChaCha8Rng| {
        let mut p = Polynomial::zero(&s);
        for m in &basis {
            if rng.gen_bool(0.4) {
                p.add_term(m.clone(), rng.gen_range(-3.0..3.0));
            }
        }
        p
    };
    for _ in 0..100 {
        let a = random_poly(&mut rng);
        let b = random_poly(&mut rng);
        let c = random_poly(&mut rng);
        let lhs = a.mul(&b.add(&c).unwrap()).unwrap();
        let rhs = a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap();
        for _ in 0..10 {
            let pt: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let l = lhs.eval_unchecked(&pt);
            let r = rhs.eval_unchecked(&pt);
            assert!((l - r).abs() <= 1e-9 * l.abs().max(r.abs()).max(1.0));
        }
    }
}

#[test]
fn differentiate_linearity_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = xy();
    let basis = monomial_basis(&s, 4, None);
    let mut p = Polynomial::zero(&s);
    let mut q = Polynomial::zero(&s);
    for m in &basis {
        p.add_term(m.clone(), rng.gen_range(-1.0..1.0));
        q.add_term(m.clone(), rng.gen_range(-1.0..1.0));
    }
    let (al, be) = (1.5, -2.25);
    let lhs = p.scale(al).add(&q.scale(be)).unwrap().differentiate(0);
    let rhs = p.differentiate(0).scale(al).add(&q.differentiate(0).scale(be)).unwrap();
    assert_eq!(lhs, rhs);
}

#[test]
fn substitute_composes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = xy();
    let t = VarSpace::new(vec!["u"]);
    let u = Polynomial::var(&t, 0);
    let p = Polynomial::var(&s, 0)
        .pow(2)
        .add(&Polynomial::var(&s, 1).scale(3.0))
        .unwrap();
    // x -> u+1, y -> u^2 then u -> 2u
    let mut b1 = BTreeMap::new();
    b1.insert(0usize, u.add(&Polynomial::constant(&t, 1.0)).unwrap());
    b1.insert(1usize, u.pow(2));
    let mid = p.substitute(&t, &b1).unwrap();
    let mut b2 = BTreeMap::new();
    b2.insert(0usize, u.scale(2.0));
    let lhs = mid.substitute(&t, &b2).unwrap();
    // composed directly
    let mut b3 = BTreeMap::new();
    b3.insert(0usize, u.scale(2.0).add(&Polynomial::constant(&t, 1.0)).unwrap());
    b3.insert(1usize, u.scale(2.0).pow(2));
    let rhs = p.substitute(&t, &b3).unwrap();
    for _ in 0..20 {
        let pt = [rng.gen_range(-2.0..2.0)];
        let l = lhs.eval_unchecked(&pt);
        let r = rhs.eval_unchecked(&pt);
        assert!((l - r).abs() <= 1e-9 * l.abs().max(1.0));
    }
}

#[test]
fn serialization_round_trip() {
    let s = xy();
    let p = Polynomial::var(&s, 0)
        .pow(2)
        .add(&Polynomial::var(&s, 1).scale(-2.5))
        .unwrap()
        .add(&Polynomial::constant(&s, 0.125))
        .unwrap();
    let lines = poly_lines(&p);
    let q = parse_poly_lines(&s, &lines).unwrap();
    assert_eq!(p, q);
}
