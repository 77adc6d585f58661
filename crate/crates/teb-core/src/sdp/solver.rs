//! Primal-dual path-following interior-point solver with Nesterov-Todd
//! scaling and a Mehrotra predictor-corrector step.
//!
//! Free variables are carried through the KKT system directly instead of
//! being split into nonnegative pairs, which would destroy the interior of
//! the dual feasible set.

use ndarray::{Array1, Array2, Axis};
use ndarray_linalg::{Cholesky, EigValsh, SolveTriangular, SVD, UPLO};
use rayon::prelude::*;

use super::{Block, SdpSolution, SdpStandardForm, SdpStatus, SymEntries};

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub tol_feas: f64,
    pub tol_gap: f64,
    /// Fraction of the maximum step to the cone boundary.
    pub step_frac: f64,
    /// Run redundant-row elimination when `m` is at most this.
    pub rank_reduce_threshold: usize,
    pub verbose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iter: 200,
            tol_feas: 1e-8,
            tol_gap: 1e-8,
            step_frac: 0.99,
            rank_reduce_threshold: 800,
            verbose: false,
        }
    }
}

/// Per-block scaling state for one iteration.
enum Scaling {
    Psd {
        /// NT scaling factor `R` with `R' S R = R^-1 X R^-T = diag(lambda)`.
        r: Array2<f64>,
        rinv: Array2<f64>,
        /// `W = R R'`.
        w: Array2<f64>,
        lambda: Array1<f64>,
    },
    Diag {
        /// `w_i = sqrt(x_i / s_i)`.
        w: Array1<f64>,
        lambda: Array1<f64>,
    },
}

struct State {
    x: Vec<Array2<f64>>,
    s: Vec<Array2<f64>>,
    y: Array1<f64>,
    u: Array1<f64>,
}

fn sym_inner(entries: &SymEntries, m: &Array2<f64>) -> f64 {
    entries
        .iter()
        .map(|&(r, c, v)| if r == c { v * m[(r, c)] } else { 2.0 * v * m[(r, c)] })
        .sum()
}

fn add_sym(entries: &SymEntries, k: f64, out: &mut Array2<f64>) {
    for &(r, c, v) in entries {
        out[(r, c)] += k * v;
        if r != c {
            out[(c, r)] += k * v;
        }
    }
}

fn dense_sym(entries: &SymEntries, dim: usize) -> Array2<f64> {
    let mut out = Array2::zeros((dim, dim));
    add_sym(entries, 1.0, &mut out);
    out
}

/// `W A W` for sparse symmetric `A` and dense symmetric `W`.
fn waw(entries: &SymEntries, w: &Array2<f64>) -> Array2<f64> {
    let n = w.nrows();
    // rows of A W for the rows touched by A
    let mut touched: Vec<usize> = Vec::new();
    for &(r, c, _) in entries {
        touched.push(r);
        if r != c {
            touched.push(c);
        }
    }
    touched.sort_unstable();
    touched.dedup();
    let mut aw = vec![Array1::<f64>::zeros(n); touched.len()];
    let pos = |i: usize| touched.binary_search(&i).unwrap();
    for &(r, c, v) in entries {
        aw[pos(r)].scaled_add(v, &w.row(c));
        if r != c {
            aw[pos(c)].scaled_add(v, &w.row(r));
        }
    }
    let mut out = Array2::<f64>::zeros((n, n));
    for (ti, &t) in touched.iter().enumerate() {
        let wt = w.column(t);
        let awr = &aw[ti];
        for i in 0..n {
            let wi = wt[i];
            if wi != 0.0 {
                out.row_mut(i).scaled_add(wi, awr);
            }
        }
    }
    out
}

fn frob(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Max `alpha <= cap` with `X + alpha D` PSD, given the Cholesky factor of X.
fn max_step_psd(lx: &Array2<f64>, d: &Array2<f64>, cap: f64) -> f64 {
    // G = Lx^-1 D Lx^-T; alpha limited by smallest eigenvalue of G
    let t = lx
        .solve_triangular(UPLO::Lower, ndarray_linalg::Diag::NonUnit, d)
        .expect("triangular solve");
    let tt = t.t().to_owned();
    let g = lx
        .solve_triangular(UPLO::Lower, ndarray_linalg::Diag::NonUnit, &tt)
        .expect("triangular solve");
    let gs = (&g + &g.t()) * 0.5;
    match gs.eigvalsh(UPLO::Lower) {
        Ok(ev) => {
            let lmin = ev.iter().cloned().fold(f64::INFINITY, f64::min);
            if lmin >= 0.0 {
                cap
            } else {
                (-1.0 / lmin).min(cap)
            }
        }
        Err(_) => 0.0,
    }
}

fn max_step_diag(x: &Array1<f64>, d: &Array1<f64>, cap: f64) -> f64 {
    let mut a = cap;
    for (xi, di) in x.iter().zip(d.iter()) {
        if *di < 0.0 {
            a = a.min(-xi / di);
        }
    }
    a
}

struct Preprocessed {
    sdp: SdpStandardForm,
    /// Map from kept row index to original row index.
    kept: Vec<usize>,
    row_scale: Vec<f64>,
    /// Detected as structurally infeasible during preprocessing.
    infeasible: bool,
}

/// Row equilibration plus (for small problems) redundant-row elimination via
/// pivoted Cholesky on the constraint Gram matrix.
fn preprocess(sdp: &SdpStandardForm, opts: &SolveOptions) -> Preprocessed {
    let mut out = sdp.clone();
    let mut kept: Vec<usize> = Vec::new();
    let mut row_scale = Vec::new();
    let mut infeasible = false;

    let mut rows = Vec::new();
    let mut b = Vec::new();
    for (i, row) in sdp.rows.iter().enumerate() {
        let mut maxabs: f64 = 0.0;
        for (_, entries) in &row.blocks {
            for &(_, _, v) in entries {
                maxabs = maxabs.max(v.abs());
            }
        }
        for &(_, v) in &row.free {
            maxabs = maxabs.max(v.abs());
        }
        if maxabs == 0.0 {
            if sdp.b[i].abs() > 1e-9 {
                infeasible = true;
            }
            continue;
        }
        let sc = 1.0 / maxabs;
        let mut r = row.clone();
        for (_, entries) in r.blocks.iter_mut() {
            for e in entries.iter_mut() {
                e.2 *= sc;
            }
        }
        for e in r.free.iter_mut() {
            e.1 *= sc;
        }
        rows.push(r);
        b.push(sdp.b[i] * sc);
        kept.push(i);
        row_scale.push(sc);
    }
    out.rows = rows;
    out.b = b;

    if out.rows.len() <= opts.rank_reduce_threshold && !out.rows.is_empty() {
        let (keep_mask, dep_inconsistent) = redundant_rows(&out);
        if dep_inconsistent {
            infeasible = true;
        }
        let mut rows = Vec::new();
        let mut b = Vec::new();
        let mut kept2 = Vec::new();
        let mut scale2 = Vec::new();
        for (i, keep) in keep_mask.iter().enumerate() {
            if *keep {
                rows.push(out.rows[i].clone());
                b.push(out.b[i]);
                kept2.push(kept[i]);
                scale2.push(row_scale[i]);
            }
        }
        out.rows = rows;
        out.b = b;
        kept = kept2;
        row_scale = scale2;
    }

    Preprocessed { sdp: out, kept, row_scale, infeasible }
}

/// Pivoted-Cholesky rank filter on the row Gram matrix (tolerance 1e-10).
/// Returns the keep mask and whether a dependent row had an inconsistent rhs.
fn redundant_rows(sdp: &SdpStandardForm) -> (Vec<bool>, bool) {
    let m = sdp.rows.len();
    // flatten rows so that the plain dot product equals <A_i, A_j>
    let flat: Vec<Vec<(usize, f64)>> = sdp
        .rows
        .iter()
        .map(|row| {
            let mut v = Vec::new();
            let mut offset = 0usize;
            for (bi, block) in sdp.blocks.iter().enumerate() {
                let dim = block.dim();
                if let Some((_, entries)) = row.blocks.iter().find(|&&(b, _)| b == bi) {
                    for &(r, c, val) in entries {
                        let idx = offset + r * dim + c;
                        let wv = if r == c { val } else { std::f64::consts::SQRT_2 * val };
                        v.push((idx, wv));
                    }
                }
                offset += dim * dim;
            }
            for &(fi, val) in &row.free {
                v.push((offset + fi, val));
            }
            v.sort_unstable_by_key(|&(i, _)| i);
            v
        })
        .collect();
    let dot = |a: &[(usize, f64)], b: &[(usize, f64)]| -> f64 {
        let mut s = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    s += a[i].1 * b[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        s
    };
    let mut g = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        for j in 0..=i {
            let v = dot(&flat[i], &flat[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    // pivoted Cholesky
    let tol = 1e-10 * g.diag().iter().cloned().fold(1.0f64, f64::max);
    let mut l = Array2::<f64>::zeros((m, m));
    let mut perm: Vec<usize> = (0..m).collect();
    let mut d: Vec<f64> = g.diag().to_vec();
    let mut rank = 0usize;
    for k in 0..m {
        // choose pivot
        let (pi, &pv) = d
            .iter()
            .enumerate()
            .skip(k)
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        if pv <= tol {
            break;
        }
        perm.swap(k, pi);
        d.swap(k, pi);
        for r in 0..m {
            l.swap((k, r), (pi, r));
        }
        let piv = pv.sqrt();
        l[(k, k)] = piv;
        for r in (k + 1)..m {
            let mut v = g[(perm[r], perm[k])];
            for t in 0..k {
                v -= l[(r, t)] * l[(k, t)];
            }
            l[(r, k)] = v / piv;
            d[r] -= l[(r, k)] * l[(r, k)];
        }
        rank += 1;
    }
    let mut keep = vec![false; m];
    for &p in perm.iter().take(rank) {
        keep[p] = true;
    }
    // dependent rows must have consistent rhs: check ||A_dep - sum coeffs A_kept||
    // indirectly by verifying b_dep against the least-squares combination.
    let mut inconsistent = false;
    if rank < m {
        // solve for each dependent row the coefficients in terms of kept rows
        let kept_idx: Vec<usize> = perm[..rank].to_vec();
        let mut gk = Array2::<f64>::zeros((rank, rank));
        for a in 0..rank {
            for bb in 0..rank {
                gk[(a, bb)] = g[(kept_idx[a], kept_idx[bb])];
            }
        }
        use ndarray_linalg::Solve;
        for &dep in perm.iter().skip(rank) {
            let rhs = Array1::from_iter(kept_idx.iter().map(|&ki| g[(dep, ki)]));
            // regularized solve is fine here: Gram of independent rows is PD
            let mut gkr = gk.clone();
            for a in 0..rank {
                gkr[(a, a)] += 1e-12;
            }
            if let Ok(coef) = gkr.solve(&rhs) {
                let bpred: f64 =
                    coef.iter().zip(kept_idx.iter()).map(|(c, &ki)| c * sdp.b[ki]).sum();
                if (bpred - sdp.b[dep]).abs() > 1e-7 * (1.0 + sdp.b[dep].abs()) {
                    inconsistent = true;
                }
            }
        }
    }
    (keep, inconsistent)
}

pub fn solve(sdp: &SdpStandardForm, opts: &SolveOptions) -> SdpSolution {
    sdp.validate().expect("malformed SDP");
    let pre = preprocess(sdp, opts);
    if pre.infeasible {
        return empty_solution(sdp, SdpStatus::Infeasible);
    }
    let mut sol = solve_inner(&pre.sdp, opts);
    // lift dual vector back to the original row indexing
    let mut y = Array1::zeros(sdp.m());
    for (k, &orig) in pre.kept.iter().enumerate() {
        y[orig] = sol.y[k] * pre.row_scale[k];
    }
    sol.y = y;
    sol
}

fn empty_solution(sdp: &SdpStandardForm, status: SdpStatus) -> SdpSolution {
    SdpSolution {
        status,
        x_blocks: sdp.blocks.iter().map(|b| Array2::zeros((b.dim(), b.dim()))).collect(),
        x_free: Array1::zeros(sdp.free_dim),
        y: Array1::zeros(sdp.m()),
        s_blocks: sdp.blocks.iter().map(|b| Array2::zeros((b.dim(), b.dim()))).collect(),
        primal_obj: f64::NAN,
        dual_obj: f64::NAN,
        gap: f64::NAN,
        primal_res: f64::NAN,
        dual_res: f64::NAN,
        iterations: 0,
    }
}

fn solve_inner(sdp: &SdpStandardForm, opts: &SolveOptions) -> SdpSolution {
    let m = sdp.m();
    let f = sdp.free_dim;
    let nu: f64 = sdp.blocks.iter().map(|b| b.dim() as f64).sum::<f64>().max(1.0);

    // starting point
    let bnorm = sdp.b.iter().cloned().fold(0.0f64, |a, v| a.max(v.abs()));
    let cnorm = sdp
        .c_blocks
        .iter()
        .flat_map(|e| e.iter().map(|&(_, _, v)| v.abs()))
        .chain(sdp.c_free.iter().map(|v| v.abs()))
        .fold(0.0f64, f64::max);
    let eta_p = 10.0 * (1.0 + bnorm);
    let eta_d = 10.0 * (1.0 + cnorm);
    let mut st = State {
        x: sdp
            .blocks
            .iter()
            .map(|b| Array2::eye(b.dim()) * eta_p)
            .collect(),
        s: sdp
            .blocks
            .iter()
            .map(|b| Array2::eye(b.dim()) * eta_d)
            .collect(),
        y: Array1::zeros(m),
        u: Array1::zeros(f),
    };

    // per-block row lists for Schur assembly
    let block_rows: Vec<Vec<(usize, &SymEntries)>> = (0..sdp.blocks.len())
        .map(|bi| {
            sdp.rows
                .iter()
                .enumerate()
                .filter_map(|(i, row)| {
                    row.blocks
                        .iter()
                        .find(|&&(b, _)| b == bi)
                        .map(|(_, e)| (i, e))
                })
                .collect()
        })
        .collect();

    let mut tiny_steps = 0usize;
    let mut stalled_iters = 0usize;
    let mut best: Option<SdpSolution> = None;
    let mut iter = 0usize;

    while iter < opts.max_iter {
        iter += 1;
        // residuals
        let (rp, rd, rf, mu, pobj, dobj) = residuals(sdp, &st, nu);
        let pres = norm2(&rp) / (1.0 + bnorm);
        let dres_mat: f64 = rd.iter().map(frob).fold(0.0, f64::max);
        let dres = dres_mat.max(rf.iter().cloned().fold(0.0f64, |a, v| a.max(v.abs())))
            / (1.0 + cnorm);
        let gap = mu * nu / (1.0 + pobj.abs().max(dobj.abs()));

        if opts.verbose {
            eprintln!(
                "iter {iter:3}  mu {mu:9.2e}  pres {pres:9.2e}  dres {dres:9.2e}  gap {gap:9.2e}"
            );
        }

        let current = make_solution(&st, pobj, dobj, gap, pres, dres, iter);
        if pres < opts.tol_feas && dres < opts.tol_feas && gap < opts.tol_gap {
            let mut s = current;
            s.status = SdpStatus::Optimal;
            return s;
        }
        if best
            .as_ref()
            .map(|b| {
                pres + dres + gap < b.primal_res + b.dual_res + b.gap
            })
            .unwrap_or(true)
        {
            best = Some(current);
            stalled_iters = 0;
        } else {
            stalled_iters += 1;
            // The combined residual has stopped improving; once the iterates
            // degrade for this long they do not recover, so settle for the
            // best one seen.
            if stalled_iters >= 8 {
                return finish(best.take().unwrap(), SdpStatus::NumericalTrouble, opts);
            }
        }

        if iter > 5 {
            if let Some(status) = infeasibility_certificates(sdp, &st) {
                let mut s = best.take().unwrap();
                s.status = status;
                return s;
            }
        }

        // NT scalings; failure here means loss of positive definiteness
        let scalings = match compute_scalings(sdp, &st) {
            Some(sc) => sc,
            None => {
                return finish(best.take().unwrap(), SdpStatus::NumericalTrouble, opts);
            }
        };

        // Schur complement KKT matrix
        let kkt = assemble_kkt(sdp, &block_rows, &scalings, m, f);
        let lu = match ndarray_linalg::Factorize::factorize(&kkt) {
            Ok(lu) => lu,
            Err(_) => {
                return finish(best.take().unwrap(), SdpStatus::NumericalTrouble, opts);
            }
        };

        // predictor (affine) step: Rc = -X
        let rc_aff: Vec<Array2<f64>> = st.x.iter().map(|x| -x).collect();
        let (dx_a, ds_a, dy_a, du_a) =
            match kkt_solve(sdp, &block_rows, &scalings, &kkt, &lu, &rp, &rd, &rf, &rc_aff, m, f) {
                Some(v) => v,
                None => {
                    return finish(best.take().unwrap(), SdpStatus::NumericalTrouble, opts);
                }
            };
        let _ = (&dy_a, &du_a);

        let (chol_x, chol_s) = match state_chol(sdp, &st) {
            Some(v) => v,
            None => {
                return finish(best.take().unwrap(), SdpStatus::NumericalTrouble, opts);
            }
        };
        let ap_a = step_length(sdp, &st.x, &chol_x, &dx_a, 1.0);
        let ad_a = step_length(sdp, &st.s, &chol_s, &ds_a, 1.0);
        let mut dot_aff = 0.0;
        let mut denom = 0.0;
        for (bi, _) in sdp.blocks.iter().enumerate() {
            let xa = &st.x[bi] + &(&dx_a[bi] * ap_a);
            let sa = &st.s[bi] + &(&ds_a[bi] * ad_a);
            dot_aff += (&xa * &sa).sum();
            denom += sdp.blocks[bi].dim() as f64;
        }
        let mu_aff = (dot_aff / denom).max(0.0);
        let sigma = ((mu_aff / mu).powi(3)).clamp(1e-8, 1.0);

        // corrector: Rc = -X + sigma*mu*S^-1 - R corr R'
        let rc = corrector_rc(sdp, &st, &scalings, &dx_a, &ds_a, sigma, mu);
        let (dx, ds, dy, du) =
            match kkt_solve(sdp, &block_rows, &scalings, &kkt, &lu, &rp, &rd, &rf, &rc, m, f) {
                Some(v) => v,
                None => {
                    return finish(best.take().unwrap(), SdpStatus::NumericalTrouble, opts);
                }
            };

        let cap = 1.0 / opts.step_frac;
        let ap = opts.step_frac * step_length(sdp, &st.x, &chol_x, &dx, cap);
        let ad = opts.step_frac * step_length(sdp, &st.s, &chol_s, &ds, cap);
        let ap = ap.min(1.0);
        let ad = ad.min(1.0);

        if ap < 1e-8 && ad < 1e-8 {
            tiny_steps += 1;
            if tiny_steps >= 3 {
                if let Some(status) = infeasibility_certificates(sdp, &st) {
                    let mut s = best.take().unwrap();
                    s.status = status;
                    return s;
                }
                return finish(best.take().unwrap(), SdpStatus::NumericalTrouble, opts);
            }
        } else {
            tiny_steps = 0;
        }

        for bi in 0..sdp.blocks.len() {
            st.x[bi] = &st.x[bi] + &(&dx[bi] * ap);
            st.s[bi] = &st.s[bi] + &(&ds[bi] * ad);
            if let Block::Diag(_) = sdp.blocks[bi] {
                // keep strictly diagonal
                let d = st.x[bi].diag().to_owned();
                st.x[bi] = Array2::from_diag(&d);
                let d = st.s[bi].diag().to_owned();
                st.s[bi] = Array2::from_diag(&d);
            }
        }
        st.u = &st.u + &(du * ap);
        st.y = &st.y + &(dy * ad);
    }

    let s = best.unwrap_or_else(|| empty_solution(sdp, SdpStatus::MaxIter));
    finish(s, SdpStatus::MaxIter, opts)
}

fn norm2(v: &Array1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Degenerate problems (no strictly feasible point) stall just short of the
/// target tolerances; accept the best iterate at 100x relaxed tolerances
/// instead of reporting failure.
fn finish(mut s: SdpSolution, fallback: SdpStatus, opts: &SolveOptions) -> SdpSolution {
    if s.primal_res <= 1e2 * opts.tol_feas
        && s.dual_res <= 1e2 * opts.tol_feas
        && s.gap <= 1e2 * opts.tol_gap
    {
        s.status = SdpStatus::Optimal;
    } else if s.primal_res <= 1e3 * opts.tol_feas
        && s.dual_res <= 1e3 * opts.tol_feas
        && s.gap <= 1e3 * opts.tol_gap
    {
        s.status = SdpStatus::NearOptimal;
    } else {
        s.status = fallback;
    }
    s
}

#[allow(clippy::type_complexity)]
fn residuals(
    sdp: &SdpStandardForm,
    st: &State,
    nu: f64,
) -> (Array1<f64>, Vec<Array2<f64>>, Array1<f64>, f64, f64, f64) {
    let m = sdp.m();
    let mut rp = Array1::zeros(m);
    for (i, row) in sdp.rows.iter().enumerate() {
        let mut ax = 0.0;
        for (bi, entries) in &row.blocks {
            ax += sym_inner(entries, &st.x[*bi]);
        }
        for &(fi, v) in &row.free {
            ax += v * st.u[fi];
        }
        rp[i] = sdp.b[i] - ax;
    }
    let mut rd = Vec::with_capacity(sdp.blocks.len());
    for (bi, block) in sdp.blocks.iter().enumerate() {
        let dim = block.dim();
        let mut r = dense_sym(&sdp.c_blocks[bi], dim);
        r -= &st.s[bi];
        for (i, row) in sdp.rows.iter().enumerate() {
            if let Some((_, entries)) = row.blocks.iter().find(|&&(b, _)| b == bi) {
                add_sym(entries, -st.y[i], &mut r);
            }
        }
        rd.push(r);
    }
    let mut rf = Array1::from_vec(sdp.c_free.clone());
    for (i, row) in sdp.rows.iter().enumerate() {
        for &(fi, v) in &row.free {
            rf[fi] -= v * st.y[i];
        }
    }
    let mut dot = 0.0;
    for bi in 0..sdp.blocks.len() {
        dot += (&st.x[bi] * &st.s[bi]).sum();
    }
    let mu = dot / nu;
    let mut pobj = sdp.obj_const;
    for bi in 0..sdp.blocks.len() {
        pobj += sym_inner(&sdp.c_blocks[bi], &st.x[bi]);
    }
    pobj += sdp.c_free.iter().zip(st.u.iter()).map(|(c, u)| c * u).sum::<f64>();
    let dobj = sdp.obj_const
        + sdp.b.iter().zip(st.y.iter()).map(|(b, y)| b * y).sum::<f64>();
    (rp, rd, rf, mu, pobj, dobj)
}

fn state_chol(
    sdp: &SdpStandardForm,
    st: &State,
) -> Option<(Vec<Array2<f64>>, Vec<Array2<f64>>)> {
    let mut cx = Vec::new();
    let mut cs = Vec::new();
    for bi in 0..sdp.blocks.len() {
        match sdp.blocks[bi] {
            Block::Psd(_) => {
                cx.push(st.x[bi].cholesky(UPLO::Lower).ok()?);
                cs.push(st.s[bi].cholesky(UPLO::Lower).ok()?);
            }
            Block::Diag(n) => {
                // unused for diagonal blocks
                cx.push(Array2::zeros((n, n)));
                cs.push(Array2::zeros((n, n)));
            }
        }
    }
    Some((cx, cs))
}

fn compute_scalings(sdp: &SdpStandardForm, st: &State) -> Option<Vec<Scaling>> {
    let mut out = Vec::with_capacity(sdp.blocks.len());
    for (bi, block) in sdp.blocks.iter().enumerate() {
        match block {
            Block::Psd(_) => {
                let lx = st.x[bi].cholesky(UPLO::Lower).ok()?;
                let ls = st.s[bi].cholesky(UPLO::Lower).ok()?;
                let prod = ls.t().dot(&lx);
                let (u_opt, sig, vt_opt) = prod.svd(true, true).ok()?;
                let u = u_opt?;
                let vt = vt_opt?;
                if sig.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
                    return None;
                }
                let sqrt_inv: Array1<f64> = sig.iter().map(|v| 1.0 / v.sqrt()).collect();
                // R = Lx V Sigma^-1/2 ; R^-1 = Sigma^-1/2 U' Ls'
                let v = vt.t().to_owned();
                let mut r = lx.dot(&v);
                for (j, col) in r.axis_iter_mut(Axis(1)).enumerate() {
                    let mut col = col;
                    col *= sqrt_inv[j];
                }
                let mut rinv = u.t().dot(&ls.t());
                for (j, row) in rinv.axis_iter_mut(Axis(0)).enumerate() {
                    let mut row = row;
                    row *= sqrt_inv[j];
                }
                let w = r.dot(&r.t());
                out.push(Scaling::Psd { r, rinv, w, lambda: sig });
            }
            Block::Diag(n) => {
                let mut w = Array1::zeros(*n);
                let mut lambda = Array1::zeros(*n);
                for i in 0..*n {
                    let (x, s) = (st.x[bi][(i, i)], st.s[bi][(i, i)]);
                    if x <= 0.0 || s <= 0.0 {
                        return None;
                    }
                    w[i] = (x / s).sqrt();
                    lambda[i] = (x * s).sqrt();
                }
                out.push(Scaling::Diag { w, lambda });
            }
        }
    }
    Some(out)
}

fn assemble_kkt(
    sdp: &SdpStandardForm,
    block_rows: &[Vec<(usize, &SymEntries)>],
    scalings: &[Scaling],
    m: usize,
    f: usize,
) -> Array2<f64> {
    let dim = m + f;
    let mut kkt = Array2::<f64>::zeros((dim, dim));
    for (bi, rows) in block_rows.iter().enumerate() {
        match &scalings[bi] {
            Scaling::Psd { w, .. } => {
                // parallel over rows: compute T_i = W A_i W and dot against A_j, j <= i
                let contribs: Vec<(usize, Vec<(usize, f64)>)> = rows
                    .par_iter()
                    .enumerate()
                    .map(|(k, &(i, entries))| {
                        let t = waw(entries, w);
                        let vals: Vec<(usize, f64)> = rows[..=k]
                            .iter()
                            .map(|&(j, ej)| (j, sym_inner(ej, &t)))
                            .collect();
                        (i, vals)
                    })
                    .collect();
                for (i, vals) in contribs {
                    for (j, v) in vals {
                        kkt[(i, j)] += v;
                        if i != j {
                            kkt[(j, i)] += v;
                        }
                    }
                }
            }
            Scaling::Diag { w, .. } => {
                for (k, &(i, ei)) in rows.iter().enumerate() {
                    for &(j, ej) in &rows[..=k] {
                        let mut v = 0.0;
                        // diagonal entries only
                        for &(r1, _, v1) in ei {
                            for &(r2, _, v2) in ej {
                                if r1 == r2 {
                                    v += w[r1] * w[r1] * v1 * v2;
                                }
                            }
                        }
                        kkt[(i, j)] += v;
                        if i != j {
                            kkt[(j, i)] += v;
                        }
                    }
                }
            }
        }
    }
    // free-variable coupling
    for (i, row) in sdp.rows.iter().enumerate() {
        for &(fi, v) in &row.free {
            kkt[(i, m + fi)] = v;
            kkt[(m + fi, i)] = v;
        }
    }
    // static regularization
    for i in 0..m {
        kkt[(i, i)] += 1e-12;
    }
    for i in m..dim {
        kkt[(i, i)] -= 1e-12;
    }
    kkt
}

type Direction = (Vec<Array2<f64>>, Vec<Array2<f64>>, Array1<f64>, Array1<f64>);

#[allow(clippy::too_many_arguments)]
fn kkt_solve(
    sdp: &SdpStandardForm,
    block_rows: &[Vec<(usize, &SymEntries)>],
    scalings: &[Scaling],
    kkt: &Array2<f64>,
    lu: &ndarray_linalg::LUFactorized<ndarray::OwnedRepr<f64>>,
    rp: &Array1<f64>,
    rd: &[Array2<f64>],
    rf: &Array1<f64>,
    rc: &[Array2<f64>],
    m: usize,
    f: usize,
) -> Option<Direction> {
    use ndarray_linalg::Solve;
    // rhs_i = rp_i - <A_i, Rc - W Rd W>
    let z: Vec<Array2<f64>> = (0..sdp.blocks.len())
        .map(|bi| match &scalings[bi] {
            Scaling::Psd { w, .. } => {
                let wrdw = w.dot(&rd[bi]).dot(w);
                &rc[bi] - &wrdw
            }
            Scaling::Diag { w, .. } => {
                let n = w.len();
                let mut out = Array2::zeros((n, n));
                for i in 0..n {
                    out[(i, i)] = rc[bi][(i, i)] - w[i] * w[i] * rd[bi][(i, i)];
                }
                out
            }
        })
        .collect();
    let mut rhs = Array1::<f64>::zeros(m + f);
    for (i, row) in sdp.rows.iter().enumerate() {
        let mut v = rp[i];
        for (bi, entries) in &row.blocks {
            v -= sym_inner(entries, &z[*bi]);
        }
        rhs[i] = v;
    }
    for fi in 0..f {
        rhs[m + fi] = rf[fi];
    }
    let mut sol = lu.solve(&rhs).ok()?;
    // Iterative refinement: the Schur system inherits squared conditioning
    // from the scaling, and a couple of residual corrections keep the primal
    // residual from stalling near convergence.
    for _ in 0..2 {
        let resid = &rhs - &kkt.dot(&sol);
        match lu.solve(&resid) {
            Ok(corr) => sol += &corr,
            Err(_) => break,
        }
    }
    let dy = sol.slice(ndarray::s![..m]).to_owned();
    let du = sol.slice(ndarray::s![m..]).to_owned();

    // dS = Rd - A* dy ; dX = Rc - W dS W
    let mut ds = Vec::with_capacity(sdp.blocks.len());
    let mut dx = Vec::with_capacity(sdp.blocks.len());
    for (bi, block) in sdp.blocks.iter().enumerate() {
        let dim = block.dim();
        let mut dsb = rd[bi].clone();
        for &(i, entries) in &block_rows[bi] {
            add_sym(entries, -dy[i], &mut dsb);
        }
        let dxb = match &scalings[bi] {
            Scaling::Psd { w, .. } => {
                let wdsw = w.dot(&dsb).dot(w);
                let raw = &rc[bi] - &wdsw;
                (&raw + &raw.t()) * 0.5
            }
            Scaling::Diag { w, .. } => {
                let mut out = Array2::zeros((dim, dim));
                for i in 0..dim {
                    out[(i, i)] = rc[bi][(i, i)] - w[i] * w[i] * dsb[(i, i)];
                }
                out
            }
        };
        ds.push(dsb);
        dx.push(dxb);
    }
    Some((dx, ds, dy, du))
}

fn corrector_rc(
    sdp: &SdpStandardForm,
    st: &State,
    scalings: &[Scaling],
    dx_a: &[Array2<f64>],
    ds_a: &[Array2<f64>],
    sigma: f64,
    mu: f64,
) -> Vec<Array2<f64>> {
    (0..sdp.blocks.len())
        .map(|bi| match &scalings[bi] {
            Scaling::Psd { r, rinv, lambda, .. } => {
                // scaled affine directions
                let dxh = rinv.dot(&dx_a[bi]).dot(&rinv.t());
                let dsh = r.t().dot(&ds_a[bi]).dot(r);
                let prod = dxh.dot(&dsh);
                let n = lambda.len();
                let mut target = Array2::<f64>::zeros((n, n));
                for i in 0..n {
                    for j in 0..n {
                        let symm = 0.5 * (prod[(i, j)] + prod[(j, i)]);
                        let mut v = -symm;
                        if i == j {
                            v += sigma * mu - lambda[i] * lambda[i];
                        }
                        target[(i, j)] = 2.0 * v / (lambda[i] + lambda[j]);
                    }
                }
                // Rc = R target R' + X ... note: -lambda^2 diag unscales to -X
                r.dot(&target).dot(&r.t())
            }
            Scaling::Diag { w, lambda } => {
                let n = w.len();
                let mut out = Array2::zeros((n, n));
                for i in 0..n {
                    let dxh = dx_a[bi][(i, i)] / w[i];
                    let dsh = w[i] * ds_a[bi][(i, i)];
                    let v = (sigma * mu - lambda[i] * lambda[i] - dxh * dsh) / lambda[i];
                    out[(i, i)] = w[i] * v;
                }
                let _ = st;
                out
            }
        })
        .collect()
}

fn step_length(
    sdp: &SdpStandardForm,
    vals: &[Array2<f64>],
    chols: &[Array2<f64>],
    dirs: &[Array2<f64>],
    cap: f64,
) -> f64 {
    let mut a = cap;
    for (bi, block) in sdp.blocks.iter().enumerate() {
        match block {
            Block::Psd(_) => {
                a = a.min(max_step_psd(&chols[bi], &dirs[bi], cap));
            }
            Block::Diag(_) => {
                let x = vals[bi].diag().to_owned();
                let d = dirs[bi].diag().to_owned();
                a = a.min(max_step_diag(&x, &d, cap));
            }
        }
    }
    a
}

/// Ray-based certificate checks for primal / dual infeasibility.
fn infeasibility_certificates(sdp: &SdpStandardForm, st: &State) -> Option<SdpStatus> {
    let tol = 1e-7;
    // primal infeasibility: y with b'y = 1, A* y <= 0 (as -A*y PSD), B'y = 0
    let by: f64 = sdp.b.iter().zip(st.y.iter()).map(|(b, y)| b * y).sum();
    let ynorm = st.y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if by > 1e3 && ynorm > 1e4 {
        let yh: Array1<f64> = st.y.iter().map(|v| v / by).collect();
        let mut ok = true;
        for (bi, block) in sdp.blocks.iter().enumerate() {
            let dim = block.dim();
            let mut asty = Array2::<f64>::zeros((dim, dim));
            for (i, row) in sdp.rows.iter().enumerate() {
                if let Some((_, entries)) = row.blocks.iter().find(|&&(b, _)| b == bi) {
                    add_sym(entries, yh[i], &mut asty);
                }
            }
            let neg = -asty;
            if let Ok(ev) = neg.eigvalsh(UPLO::Lower) {
                if ev.iter().cloned().fold(f64::INFINITY, f64::min) < -tol {
                    ok = false;
                }
            } else {
                ok = false;
            }
        }
        let mut bty = 0.0f64;
        for (i, row) in sdp.rows.iter().enumerate() {
            for &(_, v) in &row.free {
                bty = bty.max((v * yh[i]).abs());
            }
        }
        if ok && bty < tol {
            return Some(SdpStatus::Infeasible);
        }
    }
    // dual infeasibility: X >= 0 with A(X) + Bu = 0 and <C,X> + c'u = -1
    let xnorm: f64 = st.x.iter().map(frob).sum::<f64>()
        + st.u.iter().map(|v| v.abs()).sum::<f64>();
    if xnorm > 1e5 {
        let mut cobj = 0.0;
        for bi in 0..sdp.blocks.len() {
            cobj += sym_inner(&sdp.c_blocks[bi], &st.x[bi]);
        }
        cobj += sdp.c_free.iter().zip(st.u.iter()).map(|(c, u)| c * u).sum::<f64>();
        if cobj < -1e3 {
            let sc = -1.0 / cobj;
            let mut maxres = 0.0f64;
            for row in &sdp.rows {
                let mut ax = 0.0;
                for (bi, entries) in &row.blocks {
                    ax += sym_inner(entries, &st.x[*bi]);
                }
                for &(fi, v) in &row.free {
                    ax += v * st.u[fi];
                }
                maxres = maxres.max((ax * sc).abs());
            }
            if maxres < tol {
                return Some(SdpStatus::DualInfeasible);
            }
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn make_solution(
    st: &State,
    pobj: f64,
    dobj: f64,
    gap: f64,
    pres: f64,
    dres: f64,
    iterations: usize,
) -> SdpSolution {
    SdpSolution {
        status: SdpStatus::MaxIter,
        x_blocks: st.x.clone(),
        x_free: st.u.clone(),
        y: st.y.clone(),
        s_blocks: st.s.clone(),
        primal_obj: pobj,
        dual_obj: dobj,
        gap,
        primal_res: pres,
        dual_res: dres,
        iterations,
    }
}
