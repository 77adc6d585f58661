//! Numerical validation and tube geometry for synthesized certificates:
//! boundary invariance sampling, closed-loop simulation, ellipsoid
//! projections, and rotational sweeps.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use ndarray_linalg::{Eigh, Inverse, UPLO};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::models::{ModelPair, NominalPlan, PlanSample, PolytopicControlSet};
use crate::poly::{PolyError, Polynomial};
use crate::synthesis::{Certificate, SynthesisError};

#[cfg(test)]
mod tests;

#[derive(Debug)]
pub enum VerifyError {
    BadInput(String),
    /// Ray bisection failed to bracket the level set on too many directions.
    UnboundedSublevelSet {
        unbracketed_fraction: f64,
    },
    SingularMatrix(String),
    Poly(PolyError),
    Certificate(SynthesisError),
}

impl fmt::Display for VerifyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerifyError::BadInput(s) => write!(f, "bad input: {s}"),
            VerifyError::UnboundedSublevelSet { unbracketed_fraction } => write!(
                f,
                "sublevel set appears unbounded: {:.1}% of rays found no crossing",
                unbracketed_fraction * 100.0
            ),
            VerifyError::SingularMatrix(s) => write!(f, "singular matrix: {s}"),
            VerifyError::Poly(e) => write!(f, "polynomial error: {e}"),
            VerifyError::Certificate(e) => write!(f, "certificate error: {e}"),
        }
    }
}

impl std::error::Error for VerifyError {}

impl From<PolyError> for VerifyError {
    fn from(e: PolyError) -> Self {
        VerifyError::Poly(e)
    }
}

impl From<SynthesisError> for VerifyError {
    fn from(e: SynthesisError) -> Self {
        VerifyError::Certificate(e)
    }
}

/// Fraction of rays allowed to miss the level set before the sublevel set is
/// declared unbounded.
const UNBRACKETED_LIMIT: f64 = 0.01;
/// Cap on the ray parameter when searching for the level-set crossing.
const RAY_CAP: f64 = 1e4;

/// The certificate's level function and controller, bound to a model and
/// ready for pointwise evaluation on the relative state.
pub struct CompiledCertificate<'m> {
    pub mp: &'m ModelPair,
    /// Level function on the bounded state.
    pub v_tilde: Polynomial,
    /// Level function composed with the bounded-state map, on the full
    /// `(r, u_s, u_p)` space.
    pub v: Polynomial,
    /// Gradient of the composed level function in the relative state.
    pub grad_v: Vec<Polynomial>,
    /// Controller components on the full space (relative-state variables
    /// only).
    pub k: Vec<Polynomial>,
    /// Bounding ellipsoid on the bounded state.
    pub e: Array2<f64>,
}

impl<'m> CompiledCertificate<'m> {
    pub fn new(cert: &Certificate, mp: &'m ModelPair) -> Result<Self, VerifyError> {
        if cert.model != mp.name {
            return Err(VerifyError::BadInput(format!(
                "certificate is for model '{}', got '{}'",
                cert.model, mp.name
            )));
        }
        let v_tilde = cert.v_tilde.to_poly()?;
        let v = compose_with_c(mp, &v_tilde)?;
        let grad_v = (0..mp.n_r).map(|i| v.differentiate(i)).collect();
        let k = cert
            .k
            .iter()
            .map(|p| p.to_poly())
            .collect::<Result<Vec<_>, _>>()?;
        if k.len() != mp.m_s {
            return Err(VerifyError::BadInput(format!(
                "certificate has {} controller components, model needs {}",
                k.len(),
                mp.m_s
            )));
        }
        Ok(CompiledCertificate { mp, v_tilde, v, grad_v, k, e: cert.e_matrix() })
    }

    /// `V(r)` at a relative state.
    pub fn v_at(&self, r: &[f64]) -> f64 {
        self.v.eval_unchecked(&full_point(self.mp, r, &[], &[]))
    }

    /// Controller output at a relative state (unclamped).
    pub fn k_at(&self, r: &[f64]) -> Vec<f64> {
        let x = full_point(self.mp, r, &[], &[]);
        self.k.iter().map(|p| p.eval_unchecked(&x)).collect()
    }

    /// `dV/dt` under the polynomial relative dynamics at `(r, u_s, u_p)`.
    pub fn vdot_at(&self, r: &[f64], u_s: &[f64], u_p: &[f64]) -> f64 {
        let x = full_point(self.mp, r, u_s, u_p);
        self.grad_v
            .iter()
            .zip(self.mp.f_r.entries.iter())
            .map(|(g, f)| g.eval_unchecked(&x) * f.eval_unchecked(&x))
            .sum()
    }
}

/// `v_tilde(c(r))` as a polynomial on the model's full variable space.
fn compose_with_c(mp: &ModelPair, v_tilde: &Polynomial) -> Result<Polynomial, VerifyError> {
    let mut out = Polynomial::zero(&mp.space);
    for (m, coef) in v_tilde.terms() {
        let mut image = Polynomial::constant(&mp.space, coef);
        for &(var, exp) in m.pairs() {
            let c = mp.c_map.entries.get(var as usize).ok_or_else(|| {
                VerifyError::BadInput("level function variable outside bounded-state map".into())
            })?;
            image = image.mul(&c.pow(exp as u32))?;
        }
        out = out.add(&image)?;
    }
    Ok(out)
}

fn full_point(mp: &ModelPair, r: &[f64], u_s: &[f64], u_p: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; mp.space.dim()];
    x[..r.len()].copy_from_slice(r);
    for (j, &u) in u_s.iter().enumerate() {
        x[mp.us_index(j)] = u;
    }
    for (j, &u) in u_p.iter().enumerate() {
        x[mp.up_index(j)] = u;
    }
    x
}

fn unit_direction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let d: Vec<f64> = (0..n)
            .map(|_| {
                // Box-Muller standard normal
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                (-2.0 * u1.ln()).sqrt() * u2.cos()
            })
            .collect();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return d.iter().map(|x| x / norm).collect();
        }
    }
}

/// Rejection-sample a planner control from the semialgebraic set via its
/// bounding box.
pub fn sample_planner_control<R: Rng + ?Sized>(mp: &ModelPair, rng: &mut R) -> Vec<f64> {
    loop {
        let u: Vec<f64> = mp
            .u_p_box
            .iter()
            .map(|&(lo, hi)| if lo < hi { rng.gen_range(lo..hi) } else { lo })
            .collect();
        if mp.u_p_set.contains(&u, 1e-12) {
            return u;
        }
    }
}

/// Find `t` with `V(t d) = 1` by doubling then bisection. `None` when the
/// level set is not crossed before `RAY_CAP`.
fn boundary_on_ray(cc: &CompiledCertificate, d: &[f64]) -> Option<Vec<f64>> {
    let v_of = |t: f64| {
        let r: Vec<f64> = d.iter().map(|x| x * t).collect();
        cc.v_at(&r)
    };
    let mut hi = 1.0;
    while v_of(hi) < 1.0 {
        hi *= 2.0;
        if hi > RAY_CAP {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if v_of(mid) < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = 0.5 * (lo + hi);
    Some(d.iter().map(|x| x * t).collect())
}

/// Statistics from sampling `dV/dt` on the level-set boundary.
#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub n_samples: usize,
    /// Margin above which a sample counts as a violation.
    pub margin: f64,
    /// Worst `dV/dt` with the certified controller over sampled boundary
    /// points and planner controls.
    pub max_vdot: f64,
    pub violations: usize,
    /// Worst `dV/dt` when the tracking control is chosen as the most
    /// stabilizing vertex of the control polytope pointwise (idealized
    /// reference; independent of the planner control ordering).
    pub max_vdot_ideal: f64,
    /// All sampled `dV/dt` values under the certified controller.
    pub vdots: Vec<f64>,
}

/// Sample the level-set boundary (ray bisection from the origin) and planner
/// controls, and report the worst observed `dV/dt` under the certified
/// controller, at margin 1e-6.
pub fn check_invariance(
    cert: &Certificate,
    mp: &ModelPair,
    n_samples: usize,
) -> Result<InvarianceReport, VerifyError> {
    let cc = CompiledCertificate::new(cert, mp)?;
    let margin = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(cert.config.seed.wrapping_add(0x5eed));
    let mut unbracketed = 0usize;
    let mut vdots = Vec::with_capacity(n_samples);
    let mut max_vdot = f64::NEG_INFINITY;
    let mut max_vdot_ideal = f64::NEG_INFINITY;
    let mut violations = 0usize;
    let vertices = &mp.u_s_set.vertices;
    let mut produced = 0usize;
    while produced < n_samples {
        let d = unit_direction(&mut rng, mp.n_r);
        let Some(r) = boundary_on_ray(&cc, &d) else {
            unbracketed += 1;
            if unbracketed as f64 > UNBRACKETED_LIMIT * n_samples as f64 {
                return Err(VerifyError::UnboundedSublevelSet {
                    unbracketed_fraction: unbracketed as f64 / (produced + unbracketed) as f64,
                });
            }
            continue;
        };
        let u_p = sample_planner_control(mp, &mut rng);
        let u_s = cc.k_at(&r);
        let vd = cc.vdot_at(&r, &u_s, &u_p);
        vdots.push(vd);
        max_vdot = max_vdot.max(vd);
        if vd > margin {
            violations += 1;
        }
        // dV/dt is affine in the tracking control, so the pointwise optimum
        // over the polytope is attained at a vertex.
        let best = vertices
            .iter()
            .map(|v| cc.vdot_at(&r, v, &u_p))
            .fold(f64::INFINITY, f64::min);
        max_vdot_ideal = max_vdot_ideal.max(best);
        produced += 1;
    }
    Ok(InvarianceReport {
        n_samples,
        margin,
        max_vdot,
        violations,
        max_vdot_ideal,
        vdots,
    })
}

/// One simulated closed-loop trajectory of the relative dynamics.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub v_values: Vec<f64>,
    pub u_s: Vec<Vec<f64>>,
    pub u_p: Vec<Vec<f64>>,
    /// Indices where `V > 1 + 1e-3`.
    pub tube_violations: Vec<usize>,
    /// Indices where the controller output had to be clamped into the
    /// tracking control set.
    pub clamped: Vec<usize>,
    /// Set when the trace was cut short (state left the validity region).
    pub truncated: Option<String>,
}

impl SimTrace {
    pub fn max_v(&self) -> f64 {
        self.v_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Which dynamics the integrator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimDynamics {
    /// Exact trigonometric relative dynamics: exposes surrogate-model error.
    Exact,
    /// The polynomial dynamics the certificate was synthesized against.
    Surrogate,
}

/// Componentwise projection onto the box implied by the polytope's
/// single-variable rows; returns whether anything moved.
fn clamp_to_set(set: &PolytopicControlSet, u: &mut [f64]) -> bool {
    let mut moved = false;
    for i in 0..set.num_rows() {
        let row = set.a.row(i);
        let nz: Vec<usize> = (0..u.len()).filter(|&j| row[j] != 0.0).collect();
        if nz.len() != 1 {
            continue;
        }
        let j = nz[0];
        let bound = set.b[i] / row[j];
        if row[j] > 0.0 && u[j] > bound {
            u[j] = bound;
            moved = true;
        } else if row[j] < 0.0 && u[j] < bound {
            u[j] = bound;
            moved = true;
        }
    }
    moved
}

/// Integrate the closed-loop relative dynamics with RK4, applying the
/// certified controller clamped into the tracking control set.
///
/// `dynamics` selects the exact trigonometric relative dynamics (default for
/// validation against the true system) or the polynomial surrogate the
/// certificate was synthesized on.
pub fn simulate(
    cert: &Certificate,
    mp: &ModelPair,
    plan: &NominalPlan,
    r0: &[f64],
    horizon: f64,
    dt: f64,
    dynamics: SimDynamics,
) -> Result<SimTrace, VerifyError> {
    if dt <= 0.0 {
        return Err(VerifyError::BadInput("dt must be positive".into()));
    }
    if r0.len() != mp.n_r {
        return Err(VerifyError::BadInput(format!(
            "r0 has dimension {}, model needs {}",
            r0.len(),
            mp.n_r
        )));
    }
    let cc = CompiledCertificate::new(cert, mp)?;
    if cc.v_at(r0) > 1.0 + 1e-9 {
        return Err(VerifyError::BadInput(format!(
            "initial state outside the invariant set: V(r0) = {}",
            cc.v_at(r0)
        )));
    }
    let steps = (horizon / dt).ceil() as usize;
    let mut trace = SimTrace {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        v_values: Vec::with_capacity(steps + 1),
        u_s: Vec::with_capacity(steps + 1),
        u_p: Vec::with_capacity(steps + 1),
        tube_violations: Vec::new(),
        clamped: Vec::new(),
        truncated: None,
    };
    let t_start = plan.t_start();
    let deriv = |r: &[f64], t: f64, clamp_flag: &mut bool| -> Vec<f64> {
        let mut u_s = cc.k_at(r);
        if clamp_to_set(&mp.u_s_set, &mut u_s) {
            *clamp_flag = true;
        }
        let u_p = plan.control_at(t).to_vec();
        match SimDynamics::Exact {
            _ if dynamics == SimDynamics::Surrogate => {
                let x = full_point(mp, r, &u_s, &u_p);
                mp.f_r.entries.iter().map(|p| p.eval_unchecked(&x)).collect()
            }
            _ => {
                let u_p_eff = (mp.effective_planner_control)(r, &[], &u_p);
                (mp.f_r_exact)(r, &u_s, &u_p_eff)
            }
        }
    };
    let mut r = r0.to_vec();
    for step in 0..=steps {
        let t = t_start + step as f64 * dt;
        let c_exact = (mp.c_exact)(&r);
        if !mp.validity.contains(&c_exact, 1e-9) {
            trace.truncated = Some(format!(
                "state left the validity region at t = {t:.4} (step {step})"
            ));
            break;
        }
        let v = cc.v_at(&r);
        let mut clamp_flag = false;
        let mut u_s = cc.k_at(&r);
        if clamp_to_set(&mp.u_s_set, &mut u_s) {
            clamp_flag = false; // recorded below via the derivative calls
            trace.clamped.push(step);
        }
        let u_p = plan.control_at(t).to_vec();
        trace.times.push(t);
        trace.states.push(r.clone());
        trace.v_values.push(v);
        trace.u_s.push(u_s);
        trace.u_p.push(u_p);
        if v > 1.0 + 1e-3 {
            trace.tube_violations.push(step);
        }
        if step == steps {
            break;
        }
        let mut any_clamp = clamp_flag;
        let k1 = deriv(&r, t, &mut any_clamp);
        let r2: Vec<f64> = r.iter().zip(&k1).map(|(x, d)| x + 0.5 * dt * d).collect();
        let k2 = deriv(&r2, t + 0.5 * dt, &mut any_clamp);
        let r3: Vec<f64> = r.iter().zip(&k2).map(|(x, d)| x + 0.5 * dt * d).collect();
        let k3 = deriv(&r3, t + 0.5 * dt, &mut any_clamp);
        let r4: Vec<f64> = r.iter().zip(&k3).map(|(x, d)| x + dt * d).collect();
        let k4 = deriv(&r4, t + dt, &mut any_clamp);
        for i in 0..r.len() {
            r[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(trace)
}

/// Shadow of the ellipsoid `{x : x' E x <= 1}` on a coordinate subset:
/// `(P E^-1 P')^-1` where `P` selects the subset.
pub fn project_ellipsoid(e: &Array2<f64>, subset: &[usize]) -> Result<Array2<f64>, VerifyError> {
    let n = e.nrows();
    for &i in subset {
        if i >= n {
            return Err(VerifyError::BadInput(format!(
                "subset index {i} out of range for {n}-dimensional ellipsoid"
            )));
        }
    }
    let e_inv = e
        .inv()
        .map_err(|_| VerifyError::SingularMatrix("ellipsoid matrix".into()))?;
    let k = subset.len();
    let shadow = Array2::from_shape_fn((k, k), |(a, b)| e_inv[[subset[a], subset[b]]]);
    shadow
        .inv()
        .map_err(|_| VerifyError::SingularMatrix("projected ellipsoid".into()))
}

/// Semi-axis extent of the projected ellipsoid along each subset coordinate:
/// the interval `[-span_i, span_i]` is the shadow on that axis.
pub fn projection_spans(e_projected: &Array2<f64>) -> Result<Vec<f64>, VerifyError> {
    let inv = e_projected
        .inv()
        .map_err(|_| VerifyError::SingularMatrix("projected ellipsoid".into()))?;
    Ok((0..inv.nrows()).map(|i| inv[[i, i]].max(0.0).sqrt()).collect())
}

/// Rotational sweep of a planar projection of the ellipsoid.
#[derive(Debug, Clone)]
pub struct SweepCloud {
    /// `(angle, x, y)` boundary samples over all rotations.
    pub points: Vec<(f64, f64, f64)>,
    pub max_radius: f64,
}

/// Union over `n_angles` uniformly spaced rotations in `[-pi, pi]` of the
/// rotated boundary of the ellipsoid's shadow on a coordinate pair.
pub fn rotational_sweep(
    e: &Array2<f64>,
    pair: (usize, usize),
    n_angles: usize,
) -> Result<SweepCloud, VerifyError> {
    let proj = project_ellipsoid(e, &[pair.0, pair.1])?;
    let shape = proj
        .inv()
        .map_err(|_| VerifyError::SingularMatrix("projected ellipsoid".into()))?;
    // Boundary of {x' proj x <= 1}: x(phi) = L [cos phi, sin phi]' with
    // L L' = proj^-1.
    let (vals, vecs) = shape
        .eigh(UPLO::Upper)
        .map_err(|_| VerifyError::SingularMatrix("projected ellipsoid".into()))?;
    let a = vals[0].max(0.0).sqrt();
    let b = vals[1].max(0.0).sqrt();
    let n_boundary = 256usize;
    let mut points = Vec::with_capacity(n_angles * n_boundary);
    let mut max_radius = 0.0f64;
    for ia in 0..n_angles.max(1) {
        let theta = -std::f64::consts::PI
            + std::f64::consts::TAU * ia as f64 / n_angles.max(1) as f64;
        let (st, ct) = theta.sin_cos();
        for ib in 0..n_boundary {
            let phi = std::f64::consts::TAU * ib as f64 / n_boundary as f64;
            let e1 = a * phi.cos();
            let e2 = b * phi.sin();
            let x0 = vecs[[0, 0]] * e1 + vecs[[0, 1]] * e2;
            let y0 = vecs[[1, 0]] * e1 + vecs[[1, 1]] * e2;
            // rotate world coordinates by the planner heading
            let x = ct * x0 - st * y0;
            let y = st * x0 + ct * y0;
            points.push((theta, x, y));
            max_radius = max_radius.max((x * x + y * y).sqrt());
        }
    }
    Ok(SweepCloud { points, max_radius })
}

/// JSON-serializable summary of a certificate's geometry and sampling
/// statistics; CSV series come alongside in [`TebReport::csv`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct ReportSummary {
    pub model: String,
    /// Projection of the bounding ellipsoid onto the error coordinates.
    pub error_projection: Vec<Vec<f64>>,
    /// Half-width of the error projection along each error coordinate.
    pub error_spans: Vec<f64>,
    /// Present when the model has a planar error pair: worst distance from
    /// the origin over all rotations of the error projection.
    pub sweep_max_radius: Option<f64>,
    pub slacks: crate::synthesis::CertificateSlacks,
    pub invariance_samples: usize,
    pub invariance_max_vdot: f64,
    pub invariance_violations: usize,
    pub sim_max_v: f64,
    pub sim_tube_violations: usize,
    pub sim_clamped_steps: usize,
}

/// Report bundle: JSON summary plus plot-ready CSV series.
#[derive(Debug, Clone)]
pub struct TebReport {
    pub summary: ReportSummary,
    /// CSV text keyed by series name, first line is the header.
    pub csv: BTreeMap<String, String>,
}

impl TebReport {
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("report serialization")
    }
}

/// Build the standard report: error projection and spans, rotational sweep
/// for planar error pairs, invariance sampling, and a boundary-start
/// simulation under a constant admissible planner control.
pub fn teb_report(cert: &Certificate, mp: &ModelPair) -> Result<TebReport, VerifyError> {
    let cc = CompiledCertificate::new(cert, mp)?;
    let e = cc.e.clone();
    let subset = if mp.error_indices.is_empty() {
        (0..mp.n_rtilde).collect::<Vec<_>>()
    } else {
        mp.error_indices.clone()
    };
    let proj = project_ellipsoid(&e, &subset)?;
    let spans = projection_spans(&proj)?;
    let sweep = if subset.len() == 2 {
        Some(rotational_sweep(&e, (subset[0], subset[1]), 360)?)
    } else {
        None
    };

    let inv = check_invariance(cert, mp, 10_000)?;

    // boundary push-in simulation under an interior planner control
    let mut rng = ChaCha8Rng::seed_from_u64(cert.config.seed.wrapping_add(0x7e90));
    let plan = constant_plan(mp, 10.0);
    let d = unit_direction(&mut rng, mp.n_r);
    let r0 = boundary_on_ray(&cc, &d)
        .map(|r| r.iter().map(|x| 0.95 * x).collect::<Vec<_>>())
        .unwrap_or_else(|| vec![0.0; mp.n_r]);
    let trace = simulate(cert, mp, &plan, &r0, 10.0, 0.01, SimDynamics::Exact)?;

    let mut csv = BTreeMap::new();
    csv.insert("v_of_t".into(), {
        let mut s = String::from("t,V\n");
        for (t, v) in trace.times.iter().zip(&trace.v_values) {
            s.push_str(&format!("{t},{v}\n"));
        }
        s
    });
    csv.insert("states".into(), {
        let mut s = String::from("t");
        for i in 0..mp.n_r {
            s.push_str(&format!(",r{i}"));
        }
        s.push('\n');
        for (t, r) in trace.times.iter().zip(&trace.states) {
            s.push_str(&t.to_string());
            for x in r {
                s.push_str(&format!(",{x}"));
            }
            s.push('\n');
        }
        s
    });
    csv.insert("vdot_histogram".into(), {
        let lo = inv.vdots.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = inv.vdots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bins = 50usize;
        let width = ((hi - lo) / bins as f64).max(1e-300);
        let mut counts = vec![0usize; bins];
        for &v in &inv.vdots {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let mut s = String::from("bin_center,count\n");
        for (b, c) in counts.iter().enumerate() {
            s.push_str(&format!("{},{c}\n", lo + (b as f64 + 0.5) * width));
        }
        s
    });
    if let Some(sw) = &sweep {
        csv.insert("sweep".into(), {
            let mut s = String::from("angle,x,y\n");
            for (t, x, y) in &sw.points {
                s.push_str(&format!("{t},{x},{y}\n"));
            }
            s
        });
    }

    Ok(TebReport {
        summary: ReportSummary {
            model: mp.name.clone(),
            error_projection: proj.rows().into_iter().map(|r| r.to_vec()).collect(),
            error_spans: spans,
            sweep_max_radius: sweep.map(|s| s.max_radius),
            slacks: cert.slacks.clone(),
            invariance_samples: inv.n_samples,
            invariance_max_vdot: inv.max_vdot,
            invariance_violations: inv.violations,
            sim_max_v: trace.max_v(),
            sim_tube_violations: trace.tube_violations.len(),
            sim_clamped_steps: trace.clamped.len(),
        },
        csv,
    })
}

/// Constant-control plan at an admissible interior planner control.
pub fn constant_plan(mp: &ModelPair, duration: f64) -> NominalPlan {
    let center: Vec<f64> = mp
        .u_p_box
        .iter()
        .map(|&(lo, hi)| 0.5 * (lo + hi))
        .collect();
    let u = if mp.u_p_set.contains(&center, 1e-9) {
        center
    } else {
        vec![0.0; mp.m_p]
    };
    NominalPlan {
        samples: vec![
            PlanSample { t: 0.0, u_p: u.clone(), p: None },
            PlanSample { t: duration, u_p: u, p: None },
        ],
        dt: Some(duration),
    }
}
