use std::f64::consts::{FRAC_PI_6, PI};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::poly::Monomial;

fn sample_box(rng: &mut ChaCha8Rng, b: &[(f64, f64)]) -> Vec<f64> {
    b.iter()
        .map(|&(lo, hi)| if lo == hi { lo } else { rng.gen_range(lo..hi) })
        .collect()
}

#[test]
fn catalog_has_expected_entries_and_dimensions() {
    let cat = catalog();
    let dims: Vec<(&str, usize, usize, usize, usize, usize, usize)> = cat
        .iter()
        .map(|m| {
            (
                m.name.as_str(),
                m.n_s,
                m.n_p,
                m.n_r,
                m.n_rtilde,
                m.m_s,
                m.m_p,
            )
        })
        .collect();
    assert_eq!(
        dims,
        vec![
            ("car4d_si2d", 4, 2, 3, 3, 2, 2),
            ("car5d_dubins3d", 5, 3, 5, 6, 2, 1),
            ("quad6d_di4d", 6, 4, 6, 6, 2, 2),
            ("plane8d_dubins4d", 8, 4, 8, 8, 3, 2),
            ("bicycle6d_dubins3d", 6, 3, 6, 6, 2, 1),
            ("quad10d_si3d", 10, 3, 10, 10, 3, 3),
            ("toy1d_drift", 1, 1, 1, 1, 1, 1),
        ]
    );
}

#[test]
fn all_entries_validate() {
    for mp in catalog() {
        mp.validate().unwrap_or_else(|e| panic!("{e}"));
    }
}

#[test]
fn dynamics_are_affine_in_tracking_controls() {
    // Double differentiation in the controls must vanish coefficient-exactly,
    // i.e. f_r = h(r, u_p) + B(r) u_s with B control-independent.
    for mp in catalog() {
        for p in &mp.f_r.entries {
            for j in 0..mp.m_s {
                let dj = p.differentiate(mp.us_index(j));
                for k in 0..mp.m_s {
                    assert!(
                        dj.differentiate(mp.us_index(k)).is_zero(),
                        "{}: entry not affine in u_s",
                        mp.name
                    );
                }
                for l in 0..mp.m_p {
                    assert!(
                        dj.differentiate(mp.up_index(l)).is_zero(),
                        "{}: B(r) depends on planner control",
                        mp.name
                    );
                }
            }
        }
    }
}

#[test]
fn drift_plus_input_matrix_reassembles_dynamics() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for mp in catalog() {
        let h = mp.h();
        let b = mp.input_matrix();
        for _ in 0..50 {
            let mut x: Vec<f64> = (0..mp.space.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let f = mp.f_r.evaluate(&x);
            let hv = h.evaluate(&x);
            let bv = b.evaluate(&x);
            let us = &x[mp.n_r..mp.n_r + mp.m_s];
            for i in 0..mp.n_r {
                let mut v = hv[i];
                for j in 0..mp.m_s {
                    v += bv[i][j] * us[j];
                }
                assert!(
                    (v - f[i]).abs() <= 1e-9 * (1.0 + f[i].abs()),
                    "{}: h + B u_s mismatch in row {}",
                    mp.name,
                    i
                );
            }
            // keep the borrow checker happy for reuse
            x.clear();
        }
    }
}

#[test]
fn car5d_matches_printed_relative_dynamics() {
    let mp = default_params("car5d_dubins3d").unwrap();
    let sp = &mp.space;
    // theta_r-dot = omega - planner turn rate, exactly.
    let w = sp.index_of("w").unwrap();
    let uph = sp.index_of("uph").unwrap();
    let thdot = &mp.f_r.entries[2];
    assert_eq!(thdot.num_terms(), 2);
    assert_eq!(thdot.coeff(&Monomial::var(w)), 1.0);
    assert_eq!(thdot.coeff(&Monomial::var(uph)), -1.0);
    // Acceleration rows are the raw controls.
    assert_eq!(
        mp.f_r.entries[3],
        crate::poly::Polynomial::var_named(sp, "ua")
    );
    assert_eq!(
        mp.f_r.entries[4],
        crate::poly::Polynomial::var_named(sp, "ual")
    );
    // x_r-dot carries the planner rotation coupling +uph*yr and -v_hat drift.
    let yr = sp.index_of("yr").unwrap();
    let cross = Monomial::from_pairs(vec![(yr as u16, 1), (uph as u16, 1)]);
    assert_eq!(mp.f_r.entries[0].coeff(&cross), 1.0);
    assert!((mp.f_r.entries[0].eval_unchecked(&vec![0.0; sp.dim()]) + 1.0).abs() < 1e-12);
    // Bounded state appends the body-frame velocity mismatch and turn rate.
    assert_eq!(mp.n_rtilde, 6);
    assert_eq!(
        mp.c_map.entries[5],
        crate::poly::Polynomial::var_named(sp, "w")
    );
}

#[test]
fn quad10d_dynamics_decouple_into_chains() {
    let mp = default_params("quad10d_si3d").unwrap();
    // x-chain rows (0..4) must not involve y/z-chain states or controls.
    let forbidden: Vec<usize> = ["yr", "vy", "thy", "wy", "zr", "vz", "uy", "uz", "upy", "upz"]
        .iter()
        .map(|n| mp.space.index_of(n).unwrap())
        .collect();
    for row in 0..4 {
        for &v in &forbidden {
            assert_eq!(
                mp.f_r.entries[row].degree_in(v),
                0,
                "x-chain row {} couples to {}",
                row,
                mp.space.name(v)
            );
        }
    }
    // Tilt damping follows the tracking model: d(theta_x)/dt = -d1 theta_x + w_x.
    let thx = mp.space.index_of("thx").unwrap();
    assert_eq!(mp.f_r.entries[2].coeff(&Monomial::var(thx)), -8.0);
}

#[test]
fn consistency_oracle_fully_polynomial_pairs() {
    for name in ["car4d_si2d", "toy1d_drift"] {
        let mp = default_params(name).unwrap();
        let res = relative_dynamics_consistency(&mp, 1000);
        assert!(res <= 1e-3, "{name}: residual {res}");
    }
}

#[test]
fn consistency_oracle_car4d_zero_heading() {
    // With the heading pinned at zero the frame starts as the identity
    // rotation; the finite-difference derivative must match almost exactly.
    let mut mp = default_params("car4d_si2d").unwrap();
    mp.s_box[2] = (0.0, 0.0);
    let res = relative_dynamics_consistency(&mp, 200);
    assert!(res < 1e-6, "residual {res}");
}

#[test]
fn consistency_oracle_car5d() {
    let mp = default_params("car5d_dubins3d").unwrap();
    let res = relative_dynamics_consistency(&mp, 1000);
    assert!(res <= 1e-3, "residual {res}");
}

#[test]
fn consistency_oracle_quad6d_identity_transform() {
    // phi = I: the relative state is an algebraic subtraction, so the only
    // error left is the finite-difference truncation, far below 1e-9.
    let mp = default_params("quad6d_di4d").unwrap();
    let res = relative_dynamics_consistency(&mp, 1000);
    assert!(res < 1e-9, "residual {res}");
}

#[test]
fn consistency_oracle_remaining_pairs() {
    // The bicycle entry is excluded: its catalog dynamics follow the printed
    // simplified form, which drops the rotation of the lateral velocity into
    // the planner frame.
    for name in ["plane8d_dubins4d", "quad10d_si3d"] {
        let mp = default_params(name).unwrap();
        let res = relative_dynamics_consistency(&mp, 500);
        assert!(res <= 1e-3, "{name}: residual {res}");
    }
}

#[test]
fn trig_surrogates_agree_with_exact_dynamics() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for mp in catalog() {
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let r = sample_box(&mut rng, &mp.r_box);
            let us = mp.u_s_set.sample(&mut rng);
            let mut up = sample_box(&mut rng, &mp.u_p_box);
            for _ in 0..200 {
                if mp.u_p_set.contains(&up, 1e-12) {
                    break;
                }
                up = sample_box(&mut rng, &mp.u_p_box);
            }
            let mut x = r.clone();
            x.extend_from_slice(&us);
            x.extend_from_slice(&up);
            let poly = mp.f_r.evaluate(&x);
            let exact = (mp.f_r_exact)(&r, &us, &up);
            for i in 0..mp.n_r {
                worst = worst.max((poly[i] - exact[i]).abs());
            }
            let cp = mp.c_map.evaluate(&x);
            let ce = (mp.c_exact)(&r);
            for i in 0..mp.n_rtilde {
                worst = worst.max((cp[i] - ce[i]).abs());
            }
        }
        assert!(
            worst <= mp.trig_agreement_tol,
            "{}: deviation {} exceeds envelope {}",
            mp.name,
            worst,
            mp.trig_agreement_tol
        );
    }
}

#[test]
fn vertices_reproduce_polytopes_and_centers_are_interior() {
    for mp in catalog() {
        let set = &mp.u_s_set;
        for v in &set.vertices {
            let worst = (0..set.num_rows())
                .map(|i| {
                    (0..set.dim()).map(|j| set.a[[i, j]] * v[j]).sum::<f64>() - set.b[i]
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(worst <= 1e-9, "{}: vertex violation {}", mp.name, worst);
        }
        let (center, radius) = set
            .chebyshev_center()
            .unwrap_or_else(|| panic!("{}: center LP failed", mp.name));
        assert!(radius > 1e-6, "{}: radius {}", mp.name, radius);
        assert!(
            set.contains(&center, -1e-8),
            "{}: Chebyshev center not strictly interior",
            mp.name
        );
    }
}

#[test]
fn quad6d_thrust_polytope_from_thruster_box() {
    let mp = default_params("quad6d_di4d").unwrap();
    let g = 9.81;
    let (m, l, iz) = (0.486, 0.25, 0.00383);
    let tau_max = l * 0.9 * m * g / iz;
    let vs = &mp.u_s_set.vertices;
    assert_eq!(vs.len(), 4);
    let ut: Vec<f64> = vs.iter().map(|v| v[0]).collect();
    let tau: Vec<f64> = vs.iter().map(|v| v[1]).collect();
    assert!((ut.iter().cloned().fold(f64::INFINITY, f64::min) - 0.2 * g).abs() < 1e-9);
    assert!((ut.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - 2.0 * g).abs() < 1e-9);
    assert!((tau.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tau_max).abs() < 1e-6);
    // The extreme torque requires mid thrust: corners of the box map to a
    // parallelogram, not a box.
    assert!(!mp.u_s_set.contains(&[2.0 * g, tau_max], 1e-6));
}

#[test]
fn planner_sets_match_expected_form() {
    // Interval bound: two affine inequalities.
    let car5 = default_params("car5d_dubins3d").unwrap();
    let s = planner_set_as_semialgebraic(&car5);
    assert_eq!(s.ineqs.len(), 2);
    assert!(s.contains(&[0.1], 1e-9));
    assert!(s.contains(&[-0.1], 1e-9));
    assert!(!s.contains(&[0.1 + 1e-6], 1e-9));
    // 2-norm bound: a single quadratic.
    let car4 = default_params("car4d_si2d").unwrap();
    let s = planner_set_as_semialgebraic(&car4);
    assert_eq!(s.ineqs.len(), 1);
    assert_eq!(s.ineqs[0].degree(), 2);
    let c = 0.1 / 2f64.sqrt();
    assert!(s.contains(&[c, c], 1e-9));
    assert!(!s.contains(&[0.08, 0.08], 1e-9));
    // Unconstrained set: membership is always true.
    let all = SemialgebraicSet::everything(car5.c_space.clone());
    assert!(all.contains(&[10.0, -3.0, PI, 0.0, 0.0, 9.0], 0.0));
}

#[test]
fn validity_regions_encode_the_stated_intervals() {
    let car5 = default_params("car5d_dubins3d").unwrap();
    assert_eq!(car5.validity.ineqs.len(), 1);
    let at = |th: f64| {
        let mut x = vec![0.0; 6];
        x[2] = th;
        car5.validity.contains(&x, 1e-12)
    };
    assert!(at(FRAC_PI_6 - 1e-9));
    assert!(!at(FRAC_PI_6 + 1e-6));

    let plane = default_params("plane8d_dubins4d").unwrap();
    assert_eq!(plane.validity.ineqs.len(), 4);
    // v within [3, 10] maps to |v - v_hat| <= 3.5 in the bounded state.
    let mut x = vec![0.0; 8];
    x[4] = 3.51;
    assert!(!plane.validity.contains(&x, 1e-9));
    x[4] = 3.49;
    assert!(plane.validity.contains(&x, 1e-9));
}

#[test]
fn toy_pair_is_dimension_exempt() {
    let toy = default_params("toy1d_drift").unwrap();
    assert!(toy.planner_dim_exempt);
    assert_eq!(toy.n_s, toy.n_p);
    toy.validate().unwrap();
    // The same shape without the exemption must be rejected.
    let mut strict = toy.clone();
    strict.planner_dim_exempt = false;
    assert!(strict.validate().is_err());
}

#[test]
fn default_params_unknown_name_errors() {
    match default_params("car11d") {
        Err(ModelError::UnknownModel(n)) => assert_eq!(n, "car11d"),
        other => panic!("expected UnknownModel, got {other:?}"),
    }
}

#[test]
fn default_params_bind_cited_constants() {
    let car5 = default_params("car5d_dubins3d").unwrap();
    assert_eq!(car5.params["v_hat"], 1.0);
    assert_eq!(car5.params["planner_omega_max"], 0.1);
    assert_eq!(car5.params["u_a_max"], 1.0);
    assert_eq!(car5.params["u_alpha_max"], 3.0);
    let plane = default_params("plane8d_dubins4d").unwrap();
    assert_eq!(plane.params["v_hat"], 6.5);
    assert_eq!(plane.params["planner_omega_max"], 0.21);
    assert!((plane.params["planner_vz_max"] - 0.65).abs() < 1e-12);
    let quad = default_params("quad6d_di4d").unwrap();
    assert_eq!(quad.params["mass"], 0.486);
    assert_eq!(quad.params["arm"], 0.25);
    assert_eq!(quad.params["inertia"], 0.00383);
    assert_eq!(quad.params["planner_acc_max"], 0.5);
}

#[test]
fn tracking_rows_and_lifted_planner_ineqs_evaluate_correctly() {
    let mp = default_params("car5d_dubins3d").unwrap();
    let rows = mp.tracking_rows();
    assert_eq!(rows.len(), 4);
    // x = (r; u_s; u_p) with u_a at the limit: exactly one active row.
    let mut x = vec![0.0; mp.space.dim()];
    x[mp.us_index(0)] = 1.0;
    let vals: Vec<f64> = rows.iter().map(|p| p.eval_unchecked(&x)).collect();
    assert_eq!(vals.iter().filter(|&&v| v.abs() < 1e-12).count(), 1);
    assert!(vals.iter().all(|&v| v <= 1e-12));
    let lifted = mp.planner_ineqs_lifted();
    assert_eq!(lifted.len(), 2);
    x[mp.up_index(0)] = 0.2;
    assert!(lifted.iter().any(|p| p.eval_unchecked(&x) > 1e-6));
}

#[test]
fn plan_csv_round_trip_with_and_without_states() {
    let csv = "t,u1,p1,p2,p3\n0.0,0.05,0.0,0.0,0.0\n0.5,-0.1,0.3,0.1,0.02\n1.0,0.0,0.6,0.2,0.01\n";
    let plan = NominalPlan::from_csv_reader(csv.as_bytes(), 1).unwrap();
    assert_eq!(plan.samples.len(), 3);
    assert_eq!(plan.dt, Some(0.5));
    assert_eq!(plan.duration(), 1.0);
    assert_eq!(plan.control_at(-1.0), &[0.05]);
    assert_eq!(plan.control_at(0.49), &[0.05]);
    assert_eq!(plan.control_at(0.5), &[-0.1]);
    assert_eq!(plan.control_at(7.0), &[0.0]);
    assert_eq!(plan.state_at(0.6).unwrap(), &[0.3, 0.1, 0.02]);

    let no_state = "t,u1,u2\n0.0,0.1,0.0\n0.25,0.0,0.1\n";
    let plan = NominalPlan::from_csv_reader(no_state.as_bytes(), 2).unwrap();
    assert!(plan.state_at(0.0).is_none());
    assert_eq!(plan.control_at(0.3), &[0.0, 0.1]);
}

#[test]
fn plan_csv_rejects_malformed_input() {
    // Non-increasing times.
    let bad = "t,u1\n0.0,0.0\n0.0,0.1\n";
    assert!(matches!(
        NominalPlan::from_csv_reader(bad.as_bytes(), 1),
        Err(ModelError::Plan(_))
    ));
    // Wrong header.
    let bad = "time,u1\n0.0,0.0\n";
    assert!(NominalPlan::from_csv_reader(bad.as_bytes(), 1).is_err());
    // Too few control columns.
    let bad = "t,u1\n0.0,0.0\n";
    assert!(NominalPlan::from_csv_reader(bad.as_bytes(), 2).is_err());
    // Non-numeric field.
    let bad = "t,u1\n0.0,fast\n";
    assert!(NominalPlan::from_csv_reader(bad.as_bytes(), 1).is_err());
    // Empty body.
    let bad = "t,u1\n";
    assert!(NominalPlan::from_csv_reader(bad.as_bytes(), 1).is_err());
}

#[test]
fn plan_controls_validated_against_planner_set() {
    let mp = default_params("car5d_dubins3d").unwrap();
    let ok = NominalPlan::from_csv_reader("t,u1\n0.0,0.1\n1.0,-0.1\n".as_bytes(), 1).unwrap();
    ok.validate_against(&mp.u_p_set).unwrap();
    let bad = NominalPlan::from_csv_reader("t,u1\n0.0,0.3\n".as_bytes(), 1).unwrap();
    assert!(bad.validate_against(&mp.u_p_set).is_err());
}
