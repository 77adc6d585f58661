//! Built-in planner/tracker pairs.
//!
//! Every entry carries its experiment parameters already bound, polynomial
//! relative dynamics (trig terms replaced by Chebyshev surrogates over the
//! validity region), and raw exact-trig closures for cross-checking and
//! simulation.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6, PI};
use std::sync::Arc;

use ndarray::{Array1, Array2};

use crate::poly::{
    cheb_approximate, ChebTarget, PolyVector, Polynomial, VarSpace,
};

use super::{ModelError, ModelPair, PolytopicControlSet, SemialgebraicSet};

const G: f64 = 9.81;

/// All built-in pairs.
pub fn catalog() -> Vec<ModelPair> {
    vec![
        car4d_si2d(),
        car5d_dubins3d(),
        quad6d_di4d(),
        plane8d_dubins4d(),
        bicycle6d_dubins3d(),
        quad10d_si3d(),
        toy1d_drift(),
    ]
}

/// Look up a catalog entry by name, with all default parameters bound.
pub fn default_params(name: &str) -> Result<ModelPair, ModelError> {
    catalog()
        .into_iter()
        .find(|mp| mp.name == name)
        .ok_or_else(|| ModelError::UnknownModel(name.to_string()))
}

fn add(a: &Polynomial, b: &Polynomial) -> Polynomial {
    a.add(b).expect("same space")
}

fn sub(a: &Polynomial, b: &Polynomial) -> Polynomial {
    a.sub(b).expect("same space")
}

fn mul(a: &Polynomial, b: &Polynomial) -> Polynomial {
    a.mul(b).expect("same space")
}

fn sum(ps: &[&Polynomial]) -> Polynomial {
    let mut out = ps[0].clone();
    for p in &ps[1..] {
        out = add(&out, p);
    }
    out
}

fn vp(sp: &Arc<VarSpace>, name: &str) -> Polynomial {
    Polynomial::var_named(sp, name)
}

fn cn(sp: &Arc<VarSpace>, c: f64) -> Polynomial {
    Polynomial::constant(sp, c)
}

/// 2x2 rotation by `t` applied to `(x, y)`: rotates world coordinates into a
/// frame at heading `t`.
fn rot(t: f64, x: f64, y: f64) -> (f64, f64) {
    (t.cos() * x + t.sin() * y, -t.sin() * x + t.cos() * y)
}

/// Interval `|x| <= bound` as the quadratic inequality `x^2 - bound^2 <= 0`.
fn sym_interval_quad(sp: &Arc<VarSpace>, name: &str, bound: f64) -> Polynomial {
    sub(&mul(&vp(sp, name), &vp(sp, name)), &cn(sp, bound * bound))
}

/// Interval `|x| <= bound` as a pair of affine inequalities.
fn interval_pair(sp: &Arc<VarSpace>, name: &str, bound: f64) -> Vec<Polynomial> {
    vec![
        sub(&vp(sp, name), &cn(sp, bound)),
        sub(&vp(sp, name).scale(-1.0), &cn(sp, bound)),
    ]
}

fn identity_c_map(sp: &Arc<VarSpace>, n: usize) -> PolyVector {
    PolyVector::new((0..n).map(|i| Polynomial::var(sp, i)).collect())
}

fn embedding(n_s: usize, rows: &[(usize, usize)]) -> Array2<f64> {
    let n_p = rows.iter().map(|&(_, j)| j + 1).max().unwrap_or(0);
    let mut pi = Array2::zeros((n_s, n_p));
    for &(i, j) in rows {
        pi[[i, j]] = 1.0;
    }
    pi
}

/// 4D car (dynamically extended Dubins car) tracking a 2D single integrator.
///
/// Relative state `r = (x_r, y_r, v)` in the car's body frame; the planner
/// velocity command enters rotated by the car heading, which preserves its
/// 2-norm bound. Fully polynomial (no trig surrogates).
fn car4d_si2d() -> ModelPair {
    let sp = VarSpace::new(vec!["xr", "yr", "v", "ua", "uw", "upx", "upy"]);
    let (xr, yr, v) = (vp(&sp, "xr"), vp(&sp, "yr"), vp(&sp, "v"));
    let (ua, uw) = (vp(&sp, "ua"), vp(&sp, "uw"));
    let (upx, upy) = (vp(&sp, "upx"), vp(&sp, "upy"));

    let f_r = PolyVector::new(vec![
        sub(&add(&v, &mul(&uw, &yr)), &upx),
        sub(&mul(&uw, &xr).scale(-1.0), &upy),
        ua.clone(),
    ]);
    let c_space = VarSpace::new(vec!["xr", "yr", "v"]);
    let c_map = identity_c_map(&sp, 3);

    let up_space = VarSpace::new(vec!["upx", "upy"]);
    let speed_bound = 0.1;
    let u_p_set = SemialgebraicSet::new(
        up_space.clone(),
        vec![sub(
            &add(
                &mul(&vp(&up_space, "upx"), &vp(&up_space, "upx")),
                &mul(&vp(&up_space, "upy"), &vp(&up_space, "upy")),
            ),
            &cn(&up_space, speed_bound * speed_bound),
        )],
        vec![],
    );

    let mut params = BTreeMap::new();
    params.insert("u_a_max".into(), 1.0);
    params.insert("u_omega_max".into(), 1.0);
    params.insert("planner_speed_max".into(), speed_bound);

    let f_s: super::StateFn =
        Arc::new(|s, u| vec![s[3] * s[2].cos(), s[3] * s[2].sin(), u[1], u[0]]);
    let f_p: super::StateFn = Arc::new(|_p, u| vec![u[0], u[1]]);
    let phi: super::FrameFn = Arc::new(|s, _p| {
        let t = s[2];
        let mut m = Array2::zeros((3, 4));
        m[[0, 0]] = t.cos();
        m[[0, 1]] = t.sin();
        m[[1, 0]] = -t.sin();
        m[[1, 1]] = t.cos();
        m[[2, 3]] = 1.0;
        m
    });
    let f_r_exact: super::RelFn = Arc::new(|r, us, up| {
        vec![r[2] + us[1] * r[1] - up[0], -us[1] * r[0] - up[1], us[0]]
    });
    let eff: super::ControlMapFn = Arc::new(|s, _p, up| {
        let (ex, ey) = rot(s[2], up[0], up[1]);
        vec![ex, ey]
    });

    ModelPair {
        name: "car4d_si2d".into(),
        n_s: 4,
        n_p: 2,
        n_r: 3,
        n_rtilde: 3,
        m_s: 2,
        m_p: 2,
        space: sp,
        f_r,
        c_map,
        c_space: c_space.clone(),
        phi_description: "block-diag(R(theta), [0 1]); rotates the position error into the \
                          car body frame and keeps the speed, collapsing the heading"
            .into(),
        error_indices: vec![0, 1],
        aux_indices: vec![2],
        u_s_set: PolytopicControlSet::from_box(&[(-1.0, 1.0), (-1.0, 1.0)]),
        u_p_set,
        u_p_box: vec![(-speed_bound, speed_bound); 2],
        validity: SemialgebraicSet::everything(c_space),
        params,
        trig_substitutions: vec![],
        trig_agreement_tol: 1e-12,
        planner_dim_exempt: false,
        f_s_raw: f_s,
        f_p_raw: f_p,
        phi_raw: phi,
        pi: embedding(4, &[(0, 0), (1, 1)]),
        f_r_exact,
        c_exact: Arc::new(|r| r.to_vec()),
        effective_planner_control: eff,
        s_box: vec![(-1.0, 1.0), (-1.0, 1.0), (-PI, PI), (-1.0, 1.0)],
        p_box: vec![(-1.0, 1.0), (-1.0, 1.0)],
        r_box: vec![(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)],
    }
}

/// 5D car tracking a 3D Dubins car.
///
/// Relative state `r = (x_r, y_r, theta_r, v, omega)` in the planner's frame;
/// `cos`/`sin` of the relative heading are replaced by degree-2 surrogates on
/// `[-pi/6, pi/6]`. The bounded state appends the body-frame velocity
/// mismatch.
fn car5d_dubins3d() -> ModelPair {
    let sp = VarSpace::new(vec!["xr", "yr", "thr", "v", "w", "ua", "ual", "uph"]);
    let vhat = 1.0;
    let cc = cheb_approximate(ChebTarget::Cos, (-FRAC_PI_6, FRAC_PI_6), 2).unwrap();
    let ss = cheb_approximate(ChebTarget::Sin, (-FRAC_PI_6, FRAC_PI_6), 2).unwrap();
    let thr = vp(&sp, "thr");
    let cos_thr = cc.compose(&sp, &thr);
    let sin_thr = ss.compose(&sp, &thr);
    let (xr, yr, v, w) = (vp(&sp, "xr"), vp(&sp, "yr"), vp(&sp, "v"), vp(&sp, "w"));
    let (ua, ual, uph) = (vp(&sp, "ua"), vp(&sp, "ual"), vp(&sp, "uph"));

    let f_r = PolyVector::new(vec![
        sum(&[&cn(&sp, -vhat), &mul(&v, &cos_thr), &mul(&uph, &yr)]),
        sub(&mul(&v, &sin_thr), &mul(&uph, &xr)),
        sub(&w, &uph),
        ua.clone(),
        ual.clone(),
    ]);
    let c_map = PolyVector::new(vec![
        xr.clone(),
        yr.clone(),
        thr.clone(),
        sub(&mul(&v, &cos_thr), &cn(&sp, vhat)),
        mul(&v, &sin_thr),
        w.clone(),
    ]);
    let c_space = VarSpace::new(vec!["xr", "yr", "thr", "dvx", "dvy", "w"]);
    let validity = SemialgebraicSet::new(
        c_space.clone(),
        vec![sym_interval_quad(&c_space, "thr", FRAC_PI_6)],
        vec![],
    );

    let up_space = VarSpace::new(vec!["uph"]);
    let omega_bound = 0.1;
    let u_p_set =
        SemialgebraicSet::new(up_space.clone(), interval_pair(&up_space, "uph", omega_bound), vec![]);

    let mut params = BTreeMap::new();
    params.insert("v_hat".into(), vhat);
    params.insert("planner_omega_max".into(), omega_bound);
    params.insert("u_a_max".into(), 1.0);
    params.insert("u_alpha_max".into(), 3.0);
    params.insert("theta_r_max".into(), FRAC_PI_6);

    let f_s: super::StateFn = Arc::new(|s, u| {
        vec![s[3] * s[2].cos(), s[3] * s[2].sin(), s[4], u[0], u[1]]
    });
    let f_p: super::StateFn =
        Arc::new(move |p, u| vec![vhat * p[2].cos(), vhat * p[2].sin(), u[0]]);
    let phi: super::FrameFn = Arc::new(|_s, p| {
        let t = p[2];
        let mut m = Array2::eye(5);
        m[[0, 0]] = t.cos();
        m[[0, 1]] = t.sin();
        m[[1, 0]] = -t.sin();
        m[[1, 1]] = t.cos();
        m
    });
    let f_r_exact: super::RelFn = Arc::new(move |r, us, up| {
        vec![
            -vhat + r[3] * r[2].cos() + up[0] * r[1],
            r[3] * r[2].sin() - up[0] * r[0],
            r[4] - up[0],
            us[0],
            us[1],
        ]
    });
    let c_exact: super::MapFn = Arc::new(move |r| {
        vec![
            r[0],
            r[1],
            r[2],
            r[3] * r[2].cos() - vhat,
            r[3] * r[2].sin(),
            r[4],
        ]
    });

    let max_err = cc.max_error + ss.max_error;
    ModelPair {
        name: "car5d_dubins3d".into(),
        n_s: 5,
        n_p: 3,
        n_r: 5,
        n_rtilde: 6,
        m_s: 2,
        m_p: 1,
        space: sp,
        f_r,
        c_map,
        c_space,
        phi_description: "block-diag(R(theta_hat), I_3); position error in the Dubins car's \
                          frame, heading/speed/turn-rate kept absolute (theta_r = theta - \
                          theta_hat)"
            .into(),
        error_indices: vec![0, 1, 2],
        aux_indices: vec![3, 4],
        u_s_set: PolytopicControlSet::from_box(&[(-1.0, 1.0), (-3.0, 3.0)]),
        u_p_set,
        u_p_box: vec![(-omega_bound, omega_bound)],
        validity,
        params,
        trig_substitutions: vec![
            ("cos(theta_r)".into(), cc),
            ("sin(theta_r)".into(), ss),
        ],
        // cos/sin surrogates multiplied by |v| <= 2 in both f_r and c_map.
        trig_agreement_tol: 2.5 * max_err,
        planner_dim_exempt: false,
        f_s_raw: f_s,
        f_p_raw: f_p,
        phi_raw: phi,
        pi: embedding(5, &[(0, 0), (1, 1), (2, 2)]),
        f_r_exact,
        c_exact,
        effective_planner_control: Arc::new(|_s, _p, up| up.to_vec()),
        s_box: vec![
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-PI, PI),
            (0.0, 2.0),
            (-1.0, 1.0),
        ],
        p_box: vec![(-1.0, 1.0), (-1.0, 1.0), (-PI, PI)],
        r_box: vec![
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-FRAC_PI_6, FRAC_PI_6),
            (0.0, 2.0),
            (-1.0, 1.0),
        ],
    }
}

/// 6D planar quadrotor tracking a 4D double integrator.
///
/// Identity frame; `sin`/`cos` of the pitch are replaced by degree-3
/// surrogates on `[-pi/3, pi/3]`. The thrust/torque control polytope is the
/// image of the per-thruster box `[0.1, 1.0] m g` under the mixing map
/// `u_T = (F_1 + F_2)/m`, `u_tau = l (F_1 - F_2)/I`.
fn quad6d_di4d() -> ModelPair {
    let sp = VarSpace::new(vec![
        "xr", "zr", "vxr", "vzr", "th", "w", "ut", "utau", "upx", "upz",
    ]);
    let mass = 0.486;
    let arm = 0.25;
    let inertia = 0.00383;
    let f_lo = 0.1 * mass * G;
    let f_hi = 1.0 * mass * G;

    let cc = cheb_approximate(ChebTarget::Cos, (-FRAC_PI_3, FRAC_PI_3), 3).unwrap();
    let ss = cheb_approximate(ChebTarget::Sin, (-FRAC_PI_3, FRAC_PI_3), 3).unwrap();
    let th = vp(&sp, "th");
    let cos_th = cc.compose(&sp, &th);
    let sin_th = ss.compose(&sp, &th);
    let (vxr, vzr, w) = (vp(&sp, "vxr"), vp(&sp, "vzr"), vp(&sp, "w"));
    let (ut, utau) = (vp(&sp, "ut"), vp(&sp, "utau"));
    let (upx, upz) = (vp(&sp, "upx"), vp(&sp, "upz"));

    let f_r = PolyVector::new(vec![
        vxr.clone(),
        vzr.clone(),
        sub(&mul(&ut, &sin_th).scale(-1.0), &upx),
        sum(&[&mul(&ut, &cos_th), &cn(&sp, -G), &upz.scale(-1.0)]),
        w.clone(),
        utau.clone(),
    ]);
    let c_space = VarSpace::new(vec!["xr", "zr", "vxr", "vzr", "th", "w"]);
    let c_map = identity_c_map(&sp, 6);
    let validity = SemialgebraicSet::new(
        c_space.clone(),
        vec![sym_interval_quad(&c_space, "th", FRAC_PI_3)],
        vec![],
    );

    // Thrust mixing: F_1 = (m u_T + (I/l) u_tau)/2, F_2 = (m u_T - (I/l) u_tau)/2,
    // each in [f_lo, f_hi].
    let (hm, hi_l) = (mass / 2.0, inertia / (2.0 * arm));
    let a = Array2::from_shape_vec(
        (4, 2),
        vec![hm, hi_l, -hm, -hi_l, hm, -hi_l, -hm, hi_l],
    )
    .unwrap();
    let b = Array1::from(vec![f_hi, -f_lo, f_hi, -f_lo]);
    let mix = |f1: f64, f2: f64| vec![(f1 + f2) / mass, arm * (f1 - f2) / inertia];
    let vertices = vec![
        mix(f_lo, f_lo),
        mix(f_hi, f_lo),
        mix(f_hi, f_hi),
        mix(f_lo, f_hi),
    ];
    let u_s_set = PolytopicControlSet { a, b, vertices };

    let up_space = VarSpace::new(vec!["upx", "upz"]);
    let acc_bound = 0.5;
    let u_p_set = SemialgebraicSet::new(
        up_space.clone(),
        vec![sub(
            &add(
                &mul(&vp(&up_space, "upx"), &vp(&up_space, "upx")),
                &mul(&vp(&up_space, "upz"), &vp(&up_space, "upz")),
            ),
            &cn(&up_space, acc_bound * acc_bound),
        )],
        vec![],
    );

    let mut params = BTreeMap::new();
    params.insert("mass".into(), mass);
    params.insert("arm".into(), arm);
    params.insert("inertia".into(), inertia);
    params.insert("gravity".into(), G);
    params.insert("thruster_min".into(), f_lo);
    params.insert("thruster_max".into(), f_hi);
    params.insert("planner_acc_max".into(), acc_bound);
    params.insert("theta_max".into(), FRAC_PI_3);

    let f_s: super::StateFn = Arc::new(|s, u| {
        vec![
            s[2],
            s[3],
            -u[0] * s[4].sin(),
            u[0] * s[4].cos() - G,
            s[5],
            u[1],
        ]
    });
    let f_p: super::StateFn = Arc::new(|p, u| vec![p[2], p[3], u[0], u[1]]);
    let f_r_exact: super::RelFn = Arc::new(|r, us, up| {
        vec![
            r[2],
            r[3],
            -us[0] * r[4].sin() - up[0],
            us[0] * r[4].cos() - G - up[1],
            r[5],
            us[1],
        ]
    });

    let max_err = cc.max_error + ss.max_error;
    ModelPair {
        name: "quad6d_di4d".into(),
        n_s: 6,
        n_p: 4,
        n_r: 6,
        n_rtilde: 6,
        m_s: 2,
        m_p: 2,
        space: sp,
        f_r,
        c_map,
        c_space,
        phi_description: "identity; relative state is the componentwise difference in \
                          position/velocity with pitch and pitch rate kept absolute"
            .into(),
        error_indices: vec![0, 1, 2, 3],
        aux_indices: vec![4, 5],
        u_s_set,
        u_p_set,
        u_p_box: vec![(-acc_bound, acc_bound); 2],
        validity,
        params,
        trig_substitutions: vec![("cos(theta)".into(), cc), ("sin(theta)".into(), ss)],
        // surrogates are multiplied by the thrust, |u_T| <= 2g.
        trig_agreement_tol: 2.0 * G * max_err + 1e-9,
        planner_dim_exempt: false,
        f_s_raw: f_s,
        f_p_raw: f_p,
        phi_raw: Arc::new(|_s, _p| Array2::eye(6)),
        pi: embedding(6, &[(0, 0), (1, 1), (2, 2), (3, 3)]),
        f_r_exact,
        c_exact: Arc::new(|r| r.to_vec()),
        effective_planner_control: Arc::new(|_s, _p, up| up.to_vec()),
        s_box: vec![
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-FRAC_PI_3, FRAC_PI_3),
            (-1.0, 1.0),
        ],
        p_box: vec![(-1.0, 1.0); 4],
        r_box: vec![
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-FRAC_PI_3, FRAC_PI_3),
            (-1.0, 1.0),
        ],
    }
}

/// 8D fixed-wing plane tracking a 4D decoupled Dubins plane.
///
/// Relative position in the planner's heading frame. Lift and drag follow the
/// level-trim condition at nominal speed 6.5 m/s and angle of attack 5 deg:
/// `F_lift/m = g (v/v_hat)^2 (alpha/alpha_0)`, `F_drag/m = 0.8 (v/v_hat)^2`.
/// Non-polynomial terms (`trig`, `sec(gamma)`, `1/v`) use Chebyshev
/// surrogates over the validity region.
fn plane8d_dubins4d() -> ModelPair {
    let sp = VarSpace::new(vec![
        "xr", "yr", "zr", "psr", "v", "gam", "phi", "alp", "ua", "uphid", "ualpd", "uom",
        "uvz",
    ]);
    let vhat = 6.5;
    let alpha0 = 5.0 * PI / 180.0;
    let klift = G / (vhat * vhat * alpha0);
    let kdrag = 0.8 / (vhat * vhat);

    let cpsr = cheb_approximate(ChebTarget::Cos, (-FRAC_PI_6, FRAC_PI_6), 3).unwrap();
    let spsr = cheb_approximate(ChebTarget::Sin, (-FRAC_PI_6, FRAC_PI_6), 3).unwrap();
    let cgam = cheb_approximate(ChebTarget::Cos, (-FRAC_PI_6, FRAC_PI_6), 3).unwrap();
    let sgam = cheb_approximate(ChebTarget::Sin, (-FRAC_PI_6, FRAC_PI_6), 3).unwrap();
    let cphi = cheb_approximate(ChebTarget::Cos, (-FRAC_PI_4, FRAC_PI_4), 3).unwrap();
    let sphi = cheb_approximate(ChebTarget::Sin, (-FRAC_PI_4, FRAC_PI_4), 3).unwrap();
    let secg = cheb_approximate(ChebTarget::Secant, (-FRAC_PI_6, FRAC_PI_6), 2).unwrap();
    let rv = cheb_approximate(ChebTarget::Reciprocal, (3.0, 10.0), 3).unwrap();

    let (psr, v, gam, phi, alp) = (
        vp(&sp, "psr"),
        vp(&sp, "v"),
        vp(&sp, "gam"),
        vp(&sp, "phi"),
        vp(&sp, "alp"),
    );
    let (xr, yr) = (vp(&sp, "xr"), vp(&sp, "yr"));
    let (ua, uphid, ualpd) = (vp(&sp, "ua"), vp(&sp, "uphid"), vp(&sp, "ualpd"));
    let (uom, uvz) = (vp(&sp, "uom"), vp(&sp, "uvz"));
    let cos_psr = cpsr.compose(&sp, &psr);
    let sin_psr = spsr.compose(&sp, &psr);
    let cos_gam = cgam.compose(&sp, &gam);
    let sin_gam = sgam.compose(&sp, &gam);
    let cos_phi = cphi.compose(&sp, &phi);
    let sin_phi = sphi.compose(&sp, &phi);
    let sec_gam = secg.compose(&sp, &gam);
    let inv_v = rv.compose(&sp, &v);

    let f_r = PolyVector::new(vec![
        sum(&[
            &mul(&mul(&v, &cos_psr), &cos_gam),
            &cn(&sp, -vhat),
            &mul(&uom, &yr),
        ]),
        sub(&mul(&mul(&v, &sin_psr), &cos_gam), &mul(&uom, &xr)),
        sub(&mul(&v, &sin_gam), &uvz),
        sub(
            &mul(&mul(&mul(&v, &alp), &sin_phi), &sec_gam).scale(-klift),
            &uom,
        ),
        sum(&[
            &ua,
            &mul(&v, &v).scale(-kdrag),
            &sin_gam.scale(-G),
        ]),
        sub(
            &mul(&mul(&v, &alp), &cos_phi).scale(klift),
            &mul(&cos_gam, &inv_v).scale(G),
        ),
        uphid.clone(),
        ualpd.clone(),
    ]);

    let c_map = PolyVector::new(vec![
        xr.clone(),
        yr.clone(),
        vp(&sp, "zr"),
        psr.clone(),
        sub(&v, &cn(&sp, vhat)),
        gam.clone(),
        phi.clone(),
        alp.clone(),
    ]);
    let c_space = VarSpace::new(vec!["xr", "yr", "zr", "psr", "dv", "gam", "phi", "alp"]);
    let validity = SemialgebraicSet::new(
        c_space.clone(),
        vec![
            sym_interval_quad(&c_space, "psr", FRAC_PI_6),
            sym_interval_quad(&c_space, "dv", 3.5),
            sym_interval_quad(&c_space, "gam", FRAC_PI_6),
            sym_interval_quad(&c_space, "phi", FRAC_PI_4),
        ],
        vec![],
    );

    let up_space = VarSpace::new(vec!["uom", "uvz"]);
    let omega_bound = 0.21;
    let vz_bound = 0.1 * vhat;
    let mut up_ineqs = interval_pair(&up_space, "uom", omega_bound);
    up_ineqs.extend(interval_pair(&up_space, "uvz", vz_bound));
    let u_p_set = SemialgebraicSet::new(up_space, up_ineqs, vec![]);

    let mut params = BTreeMap::new();
    params.insert("v_hat".into(), vhat);
    params.insert("alpha_0".into(), alpha0);
    params.insert("gravity".into(), G);
    params.insert("planner_omega_max".into(), omega_bound);
    params.insert("planner_vz_max".into(), vz_bound);
    params.insert("u_a_max".into(), 8.0);
    params.insert("u_phidot_max".into(), 2.0);
    params.insert("u_alphadot_max".into(), 0.5);

    let f_s: super::StateFn = Arc::new(move |s, u| {
        let (psi, v, gam, phi, alp) = (s[3], s[4], s[5], s[6], s[7]);
        vec![
            v * psi.cos() * gam.cos(),
            v * psi.sin() * gam.cos(),
            v * gam.sin(),
            -klift * v * alp * phi.sin() / gam.cos(),
            u[0] - kdrag * v * v - G * gam.sin(),
            klift * v * alp * phi.cos() - G * gam.cos() / v,
            u[1],
            u[2],
        ]
    });
    let f_p: super::StateFn =
        Arc::new(move |p, u| vec![vhat * p[3].cos(), vhat * p[3].sin(), u[1], u[0]]);
    let phi_raw: super::FrameFn = Arc::new(|_s, p| {
        let t = p[3];
        let mut m = Array2::eye(8);
        m[[0, 0]] = t.cos();
        m[[0, 1]] = t.sin();
        m[[1, 0]] = -t.sin();
        m[[1, 1]] = t.cos();
        m
    });
    let f_r_exact: super::RelFn = Arc::new(move |r, us, up| {
        let (psr, v, gam, phi, alp) = (r[3], r[4], r[5], r[6], r[7]);
        vec![
            v * psr.cos() * gam.cos() - vhat + up[0] * r[1],
            v * psr.sin() * gam.cos() - up[0] * r[0],
            v * gam.sin() - up[1],
            -klift * v * alp * phi.sin() / gam.cos() - up[0],
            us[0] - kdrag * v * v - G * gam.sin(),
            klift * v * alp * phi.cos() - G * gam.cos() / v,
            us[1],
            us[2],
        ]
    });
    let c_exact: super::MapFn = Arc::new(move |r| {
        vec![r[0], r[1], r[2], r[3], r[4] - vhat, r[5], r[6], r[7]]
    });

    let trig_errs = [
        cpsr.max_error,
        spsr.max_error,
        cgam.max_error,
        sgam.max_error,
        cphi.max_error,
        sphi.max_error,
        secg.max_error,
        rv.max_error,
    ];
    let sum_err: f64 = trig_errs.iter().sum();
    ModelPair {
        name: "plane8d_dubins4d".into(),
        n_s: 8,
        n_p: 4,
        n_r: 8,
        n_rtilde: 8,
        m_s: 3,
        m_p: 2,
        space: sp,
        f_r,
        c_map,
        c_space,
        phi_description: "block-diag(R(psi_hat), I_6); planar position error in the Dubins \
                          plane's heading frame (psi_r = psi - psi_hat), remaining states \
                          absolute"
            .into(),
        error_indices: vec![0, 1, 2, 3],
        aux_indices: vec![4, 5, 6, 7],
        u_s_set: PolytopicControlSet::from_box(&[(-8.0, 8.0), (-2.0, 2.0), (-0.5, 0.5)]),
        u_p_set,
        u_p_box: vec![(-omega_bound, omega_bound), (-vz_bound, vz_bound)],
        validity,
        params,
        trig_substitutions: vec![
            ("cos(psi_r)".into(), cpsr),
            ("sin(psi_r)".into(), spsr),
            ("cos(gamma)".into(), cgam),
            ("sin(gamma)".into(), sgam),
            ("cos(phi)".into(), cphi),
            ("sin(phi)".into(), sphi),
            ("sec(gamma)".into(), secg),
            ("1/v".into(), rv),
        ],
        // Worst cofactor: klift * v * alpha * sin(phi) * sec(gamma) products
        // with v <= 10, |alpha| <= 0.3, klift ~ 2.66.
        trig_agreement_tol: 60.0 * sum_err,
        planner_dim_exempt: false,
        f_s_raw: f_s,
        f_p_raw: f_p,
        phi_raw,
        pi: embedding(8, &[(0, 0), (1, 1), (2, 2), (3, 3)]),
        f_r_exact,
        c_exact,
        effective_planner_control: Arc::new(|_s, _p, up| up.to_vec()),
        s_box: vec![
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-PI, PI),
            (4.0, 9.0),
            (-0.4, 0.4),
            (-0.6, 0.6),
            (-0.3, 0.3),
        ],
        p_box: vec![(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0), (-PI, PI)],
        r_box: vec![
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-FRAC_PI_6, FRAC_PI_6),
            (3.0, 10.0),
            (-FRAC_PI_6, FRAC_PI_6),
            (-FRAC_PI_4, FRAC_PI_4),
            (-0.3, 0.3),
        ],
    }
}

/// 6D dynamic bicycle tracking a 3D Dubins car.
///
/// Linear tire forces evaluated at a fixed reference longitudinal speed and
/// small steering angles (`cos(delta_f) ~ 1`), so the lateral dynamics are
/// affine in the steering control. Parameters are representative passenger-car
/// defaults; this entry is catalog-complete but not exercised by the
/// acceptance experiments.
fn bicycle6d_dubins3d() -> ModelPair {
    let sp = VarSpace::new(vec!["Xr", "Yr", "psr", "vx", "vy", "w", "ax", "df", "uom"]);
    let mass = 1573.0;
    let iz = 2873.0;
    let lf = 1.1;
    let lr = 1.58;
    let cf = 80000.0;
    let cr = 80000.0;
    let vx0 = 10.0;
    let vhat = 10.0;

    let cc = cheb_approximate(ChebTarget::Cos, (-FRAC_PI_6, FRAC_PI_6), 2).unwrap();
    let ss = cheb_approximate(ChebTarget::Sin, (-FRAC_PI_6, FRAC_PI_6), 2).unwrap();
    let psr = vp(&sp, "psr");
    let cos_psr = cc.compose(&sp, &psr);
    let sin_psr = ss.compose(&sp, &psr);
    let (xr, yr) = (vp(&sp, "Xr"), vp(&sp, "Yr"));
    let (vx, vy, w) = (vp(&sp, "vx"), vp(&sp, "vy"), vp(&sp, "w"));
    let (ax, df, uom) = (vp(&sp, "ax"), vp(&sp, "df"), vp(&sp, "uom"));

    // Linear tire model about vx0: F_cf = cf (df - (vy + lf w)/vx0),
    // F_cr = -cr (vy - lr w)/vx0.
    let fcf = sum(&[
        &df.scale(cf),
        &vy.scale(-cf / vx0),
        &w.scale(-cf * lf / vx0),
    ]);
    let fcr = sum(&[&vy.scale(-cr / vx0), &w.scale(cr * lr / vx0)]);

    let f_r = PolyVector::new(vec![
        sum(&[&mul(&vx, &cos_psr), &cn(&sp, -vhat), &mul(&uom, &yr)]),
        sum(&[&mul(&vx, &sin_psr), &mul(&uom, &xr).scale(-1.0), &vy]),
        sub(&w, &uom),
        add(&mul(&w, &vy), &ax),
        add(
            &mul(&w, &vx).scale(-1.0),
            &add(&fcf, &fcr).scale(2.0 / mass),
        ),
        sub(&fcf.scale(2.0 * lf / iz), &fcr.scale(2.0 * lr / iz)),
    ]);
    let c_space = VarSpace::new(vec!["Xr", "Yr", "psr", "vx", "vy", "w"]);
    let c_map = identity_c_map(&sp, 6);
    let validity = SemialgebraicSet::new(
        c_space.clone(),
        vec![sym_interval_quad(&c_space, "psr", FRAC_PI_6)],
        vec![],
    );

    let up_space = VarSpace::new(vec!["uom"]);
    let omega_bound = 0.2;
    let u_p_set = SemialgebraicSet::new(
        up_space.clone(),
        interval_pair(&up_space, "uom", omega_bound),
        vec![],
    );

    let mut params = BTreeMap::new();
    params.insert("mass".into(), mass);
    params.insert("inertia_z".into(), iz);
    params.insert("l_front".into(), lf);
    params.insert("l_rear".into(), lr);
    params.insert("cornering_front".into(), cf);
    params.insert("cornering_rear".into(), cr);
    params.insert("vx_ref".into(), vx0);
    params.insert("v_hat".into(), vhat);
    params.insert("a_x_max".into(), 3.0);
    params.insert("delta_f_max".into(), 0.3);
    params.insert("planner_omega_max".into(), omega_bound);

    let tire = move |vy: f64, w: f64, df: f64| -> (f64, f64) {
        (
            cf * (df - (vy + lf * w) / vx0),
            -cr * (vy - lr * w) / vx0,
        )
    };
    let f_s: super::StateFn = Arc::new(move |s, u| {
        let (psi, vx, vy, w) = (s[2], s[3], s[4], s[5]);
        let (fcf, fcr) = tire(vy, w, u[1]);
        vec![
            vx * psi.cos() - vy * psi.sin(),
            vx * psi.sin() + vy * psi.cos(),
            w,
            w * vy + u[0],
            -w * vx + 2.0 / mass * (fcf + fcr),
            2.0 / iz * (lf * fcf - lr * fcr),
        ]
    });
    let f_p: super::StateFn =
        Arc::new(move |p, u| vec![vhat * p[2].cos(), vhat * p[2].sin(), u[0]]);
    let phi_raw: super::FrameFn = Arc::new(|_s, p| {
        let t = p[2];
        let mut m = Array2::eye(6);
        m[[0, 0]] = t.cos();
        m[[0, 1]] = t.sin();
        m[[1, 0]] = -t.sin();
        m[[1, 1]] = t.cos();
        m
    });
    // Exact-trig evaluation of the same structural form as `f_r` (the lateral
    // velocity's rotation into the planner frame is neglected, matching the
    // polynomial dynamics).
    let f_r_exact: super::RelFn = Arc::new(move |r, us, up| {
        let (psr, vx, vy, w) = (r[2], r[3], r[4], r[5]);
        let (fcf, fcr) = tire(vy, w, us[1]);
        vec![
            vx * psr.cos() - vhat + up[0] * r[1],
            vx * psr.sin() - up[0] * r[0] + vy,
            w - up[0],
            w * vy + us[0],
            -w * vx + 2.0 / mass * (fcf + fcr),
            2.0 / iz * (lf * fcf - lr * fcr),
        ]
    });

    let max_err = cc.max_error + ss.max_error;
    ModelPair {
        name: "bicycle6d_dubins3d".into(),
        n_s: 6,
        n_p: 3,
        n_r: 6,
        n_rtilde: 6,
        m_s: 2,
        m_p: 1,
        space: sp,
        f_r,
        c_map,
        c_space,
        phi_description: "block-diag(R(psi_hat), I_4); position error in the Dubins car's \
                          frame, body-frame velocities and turn rate kept absolute"
            .into(),
        error_indices: vec![0, 1, 2],
        aux_indices: vec![3, 4, 5],
        u_s_set: PolytopicControlSet::from_box(&[(-3.0, 3.0), (-0.3, 0.3)]),
        u_p_set,
        u_p_box: vec![(-omega_bound, omega_bound)],
        validity,
        params,
        trig_substitutions: vec![("cos(psi_r)".into(), cc), ("sin(psi_r)".into(), ss)],
        // surrogates multiplied by |v_x| <= 12.
        trig_agreement_tol: 12.0 * max_err,
        planner_dim_exempt: false,
        f_s_raw: f_s,
        f_p_raw: f_p,
        phi_raw,
        pi: embedding(6, &[(0, 0), (1, 1), (2, 2)]),
        f_r_exact,
        c_exact: Arc::new(|r| r.to_vec()),
        effective_planner_control: Arc::new(|_s, _p, up| up.to_vec()),
        s_box: vec![
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-PI, PI),
            (8.0, 12.0),
            (-1.0, 1.0),
            (-0.5, 0.5),
        ],
        p_box: vec![(-1.0, 1.0), (-1.0, 1.0), (-PI, PI)],
        r_box: vec![
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-FRAC_PI_6, FRAC_PI_6),
            (8.0, 12.0),
            (-1.0, 1.0),
            (-0.5, 0.5),
        ],
    }
}

/// 10D near-hover quadrotor tracking a 3D single integrator.
///
/// The relative state groups the coordinates by chain
/// `(x_r, v_x, theta_x, omega_x | y_r, v_y, theta_y, omega_y | z_r, v_z)`, so
/// the dynamics decouple into two 4D attitude chains and a 2D vertical chain.
/// `tan` of the small tilt angles uses a degree-3 surrogate.
fn quad10d_si3d() -> ModelPair {
    let sp = VarSpace::new(vec![
        "xr", "vx", "thx", "wx", "yr", "vy", "thy", "wy", "zr", "vz", "ux", "uy", "uz",
        "upx", "upy", "upz",
    ]);
    let d0 = 10.0;
    let d1 = 8.0;
    let n0 = 10.0;
    let kt = 0.91;
    let tilt = PI / 9.0;

    let tt = cheb_approximate(ChebTarget::Tan, (-tilt, tilt), 3).unwrap();
    let tan_thx = tt.compose(&sp, &vp(&sp, "thx"));
    let tan_thy = tt.compose(&sp, &vp(&sp, "thy"));

    let chain = |v: &str, th: &str, w: &str, u: &str, up: &str, tan: &Polynomial| {
        vec![
            sub(&vp(&sp, v), &vp(&sp, up)),
            tan.scale(G),
            add(&vp(&sp, th).scale(-d1), &vp(&sp, w)),
            add(&vp(&sp, th).scale(-d0), &vp(&sp, u).scale(n0)),
        ]
    };
    let mut entries = chain("vx", "thx", "wx", "ux", "upx", &tan_thx);
    entries.extend(chain("vy", "thy", "wy", "uy", "upy", &tan_thy));
    entries.push(sub(&vp(&sp, "vz"), &vp(&sp, "upz")));
    entries.push(add(&vp(&sp, "uz").scale(kt), &cn(&sp, -G)));
    let f_r = PolyVector::new(entries);

    let c_space = VarSpace::new(vec![
        "xr", "vx", "thx", "wx", "yr", "vy", "thy", "wy", "zr", "vz",
    ]);
    let c_map = identity_c_map(&sp, 10);
    let validity = SemialgebraicSet::new(
        c_space.clone(),
        vec![
            sym_interval_quad(&c_space, "thx", tilt),
            sym_interval_quad(&c_space, "thy", tilt),
        ],
        vec![],
    );

    let up_space = VarSpace::new(vec!["upx", "upy", "upz"]);
    let speed_bound = 0.5;
    let mut up_ineqs = interval_pair(&up_space, "upx", speed_bound);
    up_ineqs.extend(interval_pair(&up_space, "upy", speed_bound));
    up_ineqs.extend(interval_pair(&up_space, "upz", speed_bound));
    let u_p_set = SemialgebraicSet::new(up_space, up_ineqs, vec![]);

    let uz_hi = 2.0 * G / kt;
    let mut params = BTreeMap::new();
    params.insert("d0".into(), d0);
    params.insert("d1".into(), d1);
    params.insert("n0".into(), n0);
    params.insert("k_T".into(), kt);
    params.insert("gravity".into(), G);
    params.insert("tilt_max".into(), tilt);
    params.insert("planner_speed_max".into(), speed_bound);
    params.insert("u_z_max".into(), uz_hi);

    // Raw tracking state order: (x, y, z, v_x, v_y, v_z, th_x, th_y, w_x, w_y).
    let f_s: super::StateFn = Arc::new(move |s, u| {
        vec![
            s[3],
            s[4],
            s[5],
            G * s[6].tan(),
            G * s[7].tan(),
            kt * u[2] - G,
            -d1 * s[6] + s[8],
            -d1 * s[7] + s[9],
            -d0 * s[6] + n0 * u[0],
            -d0 * s[7] + n0 * u[1],
        ]
    });
    let f_p: super::StateFn = Arc::new(|_p, u| u.to_vec());
    // Chain-grouping permutation of the raw state order.
    let perm: [usize; 10] = [0, 3, 6, 8, 1, 4, 7, 9, 2, 5];
    let phi_raw: super::FrameFn = Arc::new(move |_s, _p| {
        let mut m = Array2::zeros((10, 10));
        for (row, &col) in perm.iter().enumerate() {
            m[[row, col]] = 1.0;
        }
        m
    });
    let f_r_exact: super::RelFn = Arc::new(move |r, us, up| {
        vec![
            r[1] - up[0],
            G * r[2].tan(),
            -d1 * r[2] + r[3],
            -d0 * r[2] + n0 * us[0],
            r[5] - up[1],
            G * r[6].tan(),
            -d1 * r[6] + r[7],
            -d0 * r[6] + n0 * us[1],
            r[9] - up[2],
            kt * us[2] - G,
        ]
    });

    let max_err = tt.max_error;
    ModelPair {
        name: "quad10d_si3d".into(),
        n_s: 10,
        n_p: 3,
        n_r: 10,
        n_rtilde: 10,
        m_s: 3,
        m_p: 3,
        space: sp,
        f_r,
        c_map,
        c_space,
        phi_description: "permutation grouping the state by decoupled chain: (x_r, v_x, \
                          theta_x, omega_x | y_r, v_y, theta_y, omega_y | z_r, v_z); \
                          position errors are componentwise differences"
            .into(),
        error_indices: vec![0, 4, 8],
        aux_indices: vec![1, 2, 3, 5, 6, 7, 9],
        u_s_set: PolytopicControlSet::from_box(&[
            (-tilt, tilt),
            (-tilt, tilt),
            (0.0, uz_hi),
        ]),
        u_p_set,
        u_p_box: vec![(-speed_bound, speed_bound); 3],
        validity,
        params,
        trig_substitutions: vec![("tan(theta)".into(), tt)],
        // tan surrogate scaled by g, two chains.
        trig_agreement_tol: 2.0 * G * max_err + 1e-9,
        planner_dim_exempt: false,
        f_s_raw: f_s,
        f_p_raw: f_p,
        phi_raw,
        pi: embedding(10, &[(0, 0), (1, 1), (2, 2)]),
        f_r_exact,
        c_exact: Arc::new(|r| r.to_vec()),
        effective_planner_control: Arc::new(|_s, _p, up| up.to_vec()),
        s_box: vec![
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-0.3, 0.3),
            (-0.3, 0.3),
            (-1.0, 1.0),
            (-1.0, 1.0),
        ],
        p_box: vec![(-1.0, 1.0); 3],
        r_box: vec![
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-tilt, tilt),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-tilt, tilt),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
        ],
    }
}

/// 1D drifting-particle toy pair: tracker `ds/dt = u^s`, planner
/// `dp/dt = u^p`, relative state `r = s - p`.
///
/// Deliberately has equal tracker and planner dimension (exempt from the
/// dimension-reduction check); useful for exercising synthesis end-to-end at
/// trivial cost.
fn toy1d_drift() -> ModelPair {
    let sp = VarSpace::new(vec!["r", "us", "up"]);
    let f_r = PolyVector::new(vec![sub(&vp(&sp, "us"), &vp(&sp, "up"))]);
    let c_space = VarSpace::new(vec!["r"]);
    let c_map = identity_c_map(&sp, 1);

    let up_space = VarSpace::new(vec!["up"]);
    let up_bound = 0.5;
    let u_p_set = SemialgebraicSet::new(
        up_space.clone(),
        interval_pair(&up_space, "up", up_bound),
        vec![],
    );

    let mut params = BTreeMap::new();
    params.insert("u_s_max".into(), 1.0);
    params.insert("u_p_max".into(), up_bound);

    ModelPair {
        name: "toy1d_drift".into(),
        n_s: 1,
        n_p: 1,
        n_r: 1,
        n_rtilde: 1,
        m_s: 1,
        m_p: 1,
        space: sp,
        f_r,
        c_map,
        c_space: c_space.clone(),
        phi_description: "identity; r = s - p".into(),
        error_indices: vec![0],
        aux_indices: vec![],
        u_s_set: PolytopicControlSet::from_box(&[(-1.0, 1.0)]),
        u_p_set,
        u_p_box: vec![(-up_bound, up_bound)],
        validity: SemialgebraicSet::everything(c_space),
        params,
        trig_substitutions: vec![],
        trig_agreement_tol: 1e-12,
        planner_dim_exempt: true,
        f_s_raw: Arc::new(|_s, u| vec![u[0]]),
        f_p_raw: Arc::new(|_p, u| vec![u[0]]),
        phi_raw: Arc::new(|_s, _p| Array2::eye(1)),
        pi: Array2::eye(1),
        f_r_exact: Arc::new(|_r, us, up| vec![us[0] - up[0]]),
        c_exact: Arc::new(|r| r.to_vec()),
        effective_planner_control: Arc::new(|_s, _p, up| up.to_vec()),
        s_box: vec![(-1.0, 1.0)],
        p_box: vec![(-1.0, 1.0)],
        r_box: vec![(-1.0, 1.0)],
    }
}
