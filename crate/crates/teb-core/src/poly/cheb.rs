//! Chebyshev approximation of the non-polynomial terms that appear in the
//! model catalog (trigonometric functions, reciprocals).
//!
//! Fitting scheme: interpolation at Chebyshev nodes of the second kind on
//! `[-1, 1]`, expansion in the Chebyshev basis via the discrete cosine
//! transform identities, then conversion to the monomial basis and an affine
//! change of variables onto the requested interval.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use thiserror::Error;

use super::{PolyError, Polynomial, VarSpace};

#[derive(Debug, Error)]
pub enum ChebError {
    #[error("invalid interval [{0}, {1}]")]
    BadInterval(f64, f64),
    #[error("reciprocal target over an interval containing 0: [{0}, {1}]")]
    ReciprocalThroughZero(f64, f64),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Scalar functions the catalog needs polynomial surrogates for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ChebTarget {
    Cos,
    Sin,
    Tan,
    /// 1/x
    Reciprocal,
    /// 1/cos(x)
    Secant,
}

impl ChebTarget {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            ChebTarget::Cos => x.cos(),
            ChebTarget::Sin => x.sin(),
            ChebTarget::Tan => x.tan(),
            ChebTarget::Reciprocal => 1.0 / x,
            ChebTarget::Secant => 1.0 / x.cos(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ChebTarget::Cos => "cos",
            ChebTarget::Sin => "sin",
            ChebTarget::Tan => "tan",
            ChebTarget::Reciprocal => "reciprocal",
            ChebTarget::Secant => "secant",
        }
    }
}

/// A degree-`d` polynomial surrogate for a scalar function on an interval,
/// with the sup-norm error estimated on a dense grid.
#[derive(Debug, Clone)]
pub struct ChebApprox {
    pub target: ChebTarget,
    pub interval: (f64, f64),
    pub degree: u32,
    /// Univariate polynomial in the single indeterminate of its space.
    pub coeffs: Polynomial,
    pub max_error: f64,
}

impl ChebApprox {
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.eval_unchecked(&[x])
    }

    /// Substitute the surrogate's indeterminate by `arg` (a polynomial in
    /// `target_space`), yielding the composed polynomial.
    pub fn compose(&self, target_space: &Arc<VarSpace>, arg: &Polynomial) -> Polynomial {
        let mut bindings = BTreeMap::new();
        bindings.insert(0usize, arg.clone());
        self.coeffs
            .substitute(target_space, &bindings)
            .expect("compose: argument space mismatch")
    }
}

const ERROR_GRID: usize = 10_000;

/// Degree-`degree` Chebyshev interpolant of `target` on `[lo, hi]`, mapped to
/// the monomial basis.
/// Best Chebyshev interpolant of degree at most `degree`.
///
/// Interpolants of each degree `0..=degree` are built at Chebyshev points of
/// the second kind and the one with the smallest grid error is kept, so
/// `max_error` is non-increasing in the requested degree (a raw fixed-degree
/// interpolant can lose slightly to the next-lower degree when the target has
/// parity the new term cannot use).
pub fn cheb_approximate(
    target: ChebTarget,
    interval: (f64, f64),
    degree: u32,
) -> Result<ChebApprox, ChebError> {
    let (lo, hi) = interval;
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(ChebError::BadInterval(lo, hi));
    }
    if matches!(target, ChebTarget::Reciprocal) && lo <= 0.0 && hi >= 0.0 {
        return Err(ChebError::ReciprocalThroughZero(lo, hi));
    }
    let mut best: Option<ChebApprox> = None;
    for d in 0..=degree {
        let cand = interpolant(target, interval, d)?;
        if best.as_ref().map(|b| cand.max_error < b.max_error).unwrap_or(true) {
            best = Some(cand);
        }
    }
    let mut out = best.unwrap();
    out.degree = degree;
    Ok(out)
}

fn interpolant(
    target: ChebTarget,
    interval: (f64, f64),
    degree: u32,
) -> Result<ChebApprox, ChebError> {
    let (lo, hi) = interval;
    let n = degree as usize;
    // Chebyshev points of the second kind on [-1, 1].
    let nodes: Vec<f64> = if n == 0 {
        vec![0.0]
    } else {
        (0..=n).map(|k| (k as f64 * PI / n as f64).cos()).collect()
    };
    let to_x = |t: f64| 0.5 * (lo + hi) + 0.5 * (hi - lo) * t;
    let fvals: Vec<f64> = nodes.iter().map(|&t| target.eval(to_x(t))).collect();

    // Chebyshev-basis coefficients via the discrete cosine quadrature for
    // second-kind nodes (Clenshaw-Curtis weights on the interpolant).
    let mut cheb_coeffs = vec![0.0f64; n + 1];
    if n == 0 {
        cheb_coeffs[0] = fvals[0];
    } else {
        for (j, cj) in cheb_coeffs.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, &f) in fvals.iter().enumerate() {
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                s += w * f * (j as f64 * k as f64 * PI / n as f64).cos();
            }
            let scale = if j == 0 || j == n { 1.0 } else { 2.0 };
            *cj = scale * s / n as f64;
        }
    }

    // Convert sum c_j T_j(t) to monomial basis in t, then substitute
    // t = (2x - (lo+hi)) / (hi - lo).
    let tspace = VarSpace::new(vec!["t"]);
    let t = Polynomial::var(&tspace, 0);
    let mut t_prev = Polynomial::constant(&tspace, 1.0);
    let mut t_cur = t.clone();
    let mut acc = t_prev.scale(cheb_coeffs[0]);
    for (j, &c) in cheb_coeffs.iter().enumerate().skip(1) {
        acc = acc.add(&t_cur.scale(c))?;
        if j < n {
            // T_{j+1} = 2 t T_j - T_{j-1}
            let next = t.mul(&t_cur)?.scale(2.0).sub(&t_prev)?;
            t_prev = t_cur;
            t_cur = next;
        }
    }
    let xspace = VarSpace::new(vec!["x"]);
    let x = Polynomial::var(&xspace, 0);
    let tx = x
        .scale(2.0 / (hi - lo))
        .add(&Polynomial::constant(&xspace, -(lo + hi) / (hi - lo)))?;
    let mut bindings = BTreeMap::new();
    bindings.insert(0usize, tx);
    let coeffs = acc.substitute(&xspace, &bindings)?;

    let mut max_error: f64 = 0.0;
    for i in 0..ERROR_GRID {
        let x = lo + (hi - lo) * i as f64 / (ERROR_GRID - 1) as f64;
        let e = (target.eval(x) - coeffs.eval_unchecked(&[x])).abs();
        max_error = max_error.max(e);
    }

    Ok(ChebApprox { target, interval, degree, coeffs, max_error })
}
