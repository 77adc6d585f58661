//! Sampled min-max search for a promising quadratic level-function seed.
//!
//! The alternation that certifies a feasible tracking controller is bilinear
//! and can stall in a poor basin when started from an axis-aligned quadratic.
//! This module builds a better starting level function by direct search over
//! well-conditioned quadratic forms, scoring each candidate with a cheap
//! pointwise surrogate of the certified decay rate: on sampled points of the
//! unit level set, take the best tracking input (over the saturation-set
//! vertices) against the worst planner input (over the planner box corners)
//! and record the worst resulting derivative of the level function. No
//! semidefinite programs are solved here, so the score is only a surrogate,
//! but minimizing it lands the alternation in a basin where the certified
//! problem is typically feasible within one or two iterations.

use rand::Rng;

use crate::models::ModelPair;
use crate::poly::{Monomial, Polynomial};

/// Number of sampled directions on the unit level set.
const N_DIRECTIONS: usize = 4000;
/// Random candidates in the coarse phase.
const N_COARSE: usize = 600;
/// Local perturbation steps in the refinement phase.
const N_REFINE: usize = 600;
/// Relative identity floor keeping candidate quadratics well conditioned.
const COND_FLOOR: f64 = 0.05;
/// Largest level-set radius considered before a candidate is rejected.
const T_CAP: f64 = 50.0;

/// Worst-case level-function derivative over sampled level-set points, with
/// the tracking input chosen best-case over the saturation-set vertices and
/// the planner input worst-case over the planner box corners. Scanning stops
/// early once the running worst value exceeds `abort_above`.
struct Surrogate<'a> {
    mp: &'a ModelPair,
    dirs: Vec<Vec<f64>>,
    /// Jacobian of the error-coordinate map: entry `[i][j]` is d c_i / d r_j.
    c_jac: Vec<Vec<Polynomial>>,
    us_vertices: Vec<Vec<f64>>,
    up_corners: Vec<Vec<f64>>,
}

fn box_corners(bounds: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for &(lo, hi) in bounds {
        let mut next = Vec::with_capacity(out.len() * 2);
        for c in &out {
            let mut a = c.clone();
            a.push(lo);
            next.push(a);
            let mut b = c.clone();
            b.push(hi);
            next.push(b);
        }
        out = next;
    }
    out
}

impl<'a> Surrogate<'a> {
    fn new(mp: &'a ModelPair, rng: &mut impl Rng) -> Self {
        let mut dirs = Vec::with_capacity(N_DIRECTIONS);
        while dirs.len() < N_DIRECTIONS {
            let d: Vec<f64> = (0..mp.n_r).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-3 {
                dirs.push(d.into_iter().map(|x| x / n).collect());
            }
        }
        let c_jac = mp
            .c_map
            .entries
            .iter()
            .map(|ci| (0..mp.n_r).map(|j| ci.differentiate(j)).collect())
            .collect();
        let us_vertices = mp.u_s_set.vertices.clone();
        let up_corners = box_corners(&mp.u_p_box);
        Surrogate { mp, dirs, c_jac, us_vertices, up_corners }
    }

    /// Evaluate the quadratic `c(r)' Q c(r)` at `r = t * d`.
    fn level(&self, q: &[Vec<f64>], point: &[f64]) -> f64 {
        let c = self.mp.c_map.evaluate(point);
        let n = c.len();
        let mut v = 0.0;
        for i in 0..n {
            for j in 0..n {
                v += c[i] * q[i][j] * c[j];
            }
        }
        v
    }

    fn score(&self, q: &[Vec<f64>], abort_above: f64) -> f64 {
        let nr = self.mp.n_r;
        let nt = self.mp.n_rtilde;
        let dim = self.mp.space.dim();
        let mut point = vec![0.0; dim];
        let mut worst = f64::NEG_INFINITY;
        for d in &self.dirs {
            // Bracket and bisect for the level-set radius along `d`.
            for (k, &dk) in d.iter().enumerate() {
                point[k] = dk;
            }
            let mut hi = 1.0;
            let mut lo = 0.0;
            while self.level(q, &point) < 1.0 {
                lo = hi;
                hi *= 2.0;
                if hi > T_CAP {
                    return f64::INFINITY;
                }
                for (k, &dk) in d.iter().enumerate() {
                    point[k] = hi * dk;
                }
            }
            for _ in 0..28 {
                let mid = 0.5 * (lo + hi);
                for (k, &dk) in d.iter().enumerate() {
                    point[k] = mid * dk;
                }
                if self.level(q, &point) < 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            for (k, &dk) in d.iter().enumerate() {
                point[k] = t * dk;
            }
            // Gradient of the level function in error coordinates:
            // grad = J_c(r)' (2 Q c(r)).
            let c = self.mp.c_map.evaluate(&point);
            let mut qc = vec![0.0; nt];
            for i in 0..nt {
                for j in 0..nt {
                    qc[i] += 2.0 * q[i][j] * c[j];
                }
            }
            let mut grad = vec![0.0; nr];
            for i in 0..nt {
                for j in 0..nr {
                    grad[j] += qc[i] * self.c_jac[i][j].eval_unchecked(&point);
                }
            }
            // Best tracking input against the worst planner input.
            let mut best_us = f64::INFINITY;
            for us in &self.us_vertices {
                for (k, &u) in us.iter().enumerate() {
                    point[self.mp.us_index(k)] = u;
                }
                let mut worst_up = f64::NEG_INFINITY;
                for up in &self.up_corners {
                    for (k, &u) in up.iter().enumerate() {
                        point[self.mp.up_index(k)] = u;
                    }
                    let f = self.mp.f_r.evaluate(&point);
                    let vdot: f64 = grad.iter().zip(&f).map(|(g, fi)| g * fi).sum();
                    worst_up = worst_up.max(vdot);
                }
                best_us = best_us.min(worst_up);
            }
            worst = worst.max(best_us);
            if worst >= abort_above {
                return f64::INFINITY;
            }
            for x in point.iter_mut() {
                *x = 0.0;
            }
        }
        worst
    }
}

/// Candidate parameterization that stays symmetric positive definite with a
/// bounded condition number: `Q = s (L L' + floor * I)` with `L` lower
/// triangular and the floor a fixed fraction of the largest row sum of `LL'`.
fn assemble(l: &[Vec<f64>], log_s: f64, n: usize) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut v = 0.0;
            for k in 0..=j.min(i) {
                v += l[i][k] * l[j][k];
            }
            q[i][j] = v;
        }
    }
    let floor = COND_FLOOR
        * q.iter()
            .map(|row| row.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
            .max(1e-6);
    let s = 10.0_f64.powf(log_s);
    for i in 0..n {
        q[i][i] += floor;
        for j in 0..n {
            q[i][j] *= s;
        }
    }
    q
}

fn to_polynomial(mp: &ModelPair, q: &[Vec<f64>]) -> Polynomial {
    let mut vt = Polynomial::zero(&mp.c_space);
    let n = mp.n_rtilde;
    for i in 0..n {
        vt.add_term(Monomial::from_pairs(vec![(i as u16, 2)]), q[i][i]);
        for j in (i + 1)..n {
            vt.add_term(
                Monomial::from_pairs(vec![(i as u16, 1), (j as u16, 1)]),
                2.0 * q[i][j],
            );
        }
    }
    vt
}

/// Search for a quadratic level-function seed whose sampled worst-case
/// derivative on the unit level set is as negative as possible. Deterministic
/// given the caller's random-number generator state.
pub fn presearch_v0(mp: &ModelPair, rng: &mut impl Rng) -> Polynomial {
    let surrogate = Surrogate::new(mp, rng);
    let n = mp.n_rtilde;
    let mut best_score = f64::INFINITY;
    let mut best_l = vec![vec![0.0; n]; n];
    let mut best_log_s = 0.0;
    for i in 0..n {
        best_l[i][i] = 1.0;
    }
    for _ in 0..N_COARSE {
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                l[i][j] = rng.gen_range(-2.0..2.0);
            }
        }
        let log_s = rng.gen_range(-1.0..1.0);
        let q = assemble(&l, log_s, n);
        let score = surrogate.score(&q, best_score);
        if score < best_score {
            best_score = score;
            best_l = l;
            best_log_s = log_s;
        }
    }
    let mut sigma = 0.3;
    for step in 0..N_REFINE {
        let mut l = best_l.clone();
        for i in 0..n {
            for j in 0..=i {
                l[i][j] += rng.gen_range(-sigma..sigma);
            }
        }
        let log_s = best_log_s + rng.gen_range(-0.1..0.1);
        let q = assemble(&l, log_s, n);
        let score = surrogate.score(&q, best_score);
        if score < best_score {
            best_score = score;
            best_l = l;
            best_log_s = log_s;
        }
        if step % 200 == 199 {
            sigma *= 0.5;
        }
    }
    to_polynomial(mp, &assemble(&best_l, best_log_s, n))
}
