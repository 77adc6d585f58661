use approx::assert_abs_diff_eq;
use ndarray_linalg::{EigValsh, UPLO};

use super::*;

fn opts() -> SolveOptions {
    SolveOptions::default()
}

/// min Tr(X), X 1x1, X11 = 1  ->  X = [1], objective 1.
fn unit_trace_problem() -> SdpStandardForm {
    let mut sdp = SdpStandardForm::new(vec![Block::Psd(1)], 0);
    sdp.c_blocks[0] = vec![(0, 0, 1.0)];
    sdp.add_row(
        RowData { blocks: vec![(0, vec![(0, 0, 1.0)])], free: vec![] },
        1.0,
    );
    sdp
}

#[test]
fn solve_unit_trace() {
    let sdp = unit_trace_problem();
    let sol = solve(&sdp, &opts());
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert_abs_diff_eq!(sol.primal_obj, 1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.x_blocks[0][(0, 0)], 1.0, epsilon = 1e-6);
    assert!(sol.primal_res < 1e-7 && sol.dual_res < 1e-7 && sol.gap < 1e-7);
}

/// Feasibility of x^2 + 1 as a Gram form over basis [1, x]:
/// Q11 = 1, 2 Q12 = 0, Q22 = 1, Q PSD.
#[test]
fn solve_sos_gram_feasibility() {
    let mut sdp = SdpStandardForm::new(vec![Block::Psd(2)], 0);
    sdp.add_row(RowData { blocks: vec![(0, vec![(0, 0, 1.0)])], free: vec![] }, 1.0);
    sdp.add_row(RowData { blocks: vec![(0, vec![(0, 1, 1.0)])], free: vec![] }, 0.0);
    sdp.add_row(RowData { blocks: vec![(0, vec![(1, 1, 1.0)])], free: vec![] }, 1.0);
    let sol = solve(&sdp, &opts());
    assert_eq!(sol.status, SdpStatus::Optimal);
    let q = &sol.x_blocks[0];
    assert_abs_diff_eq!(q[(0, 0)], 1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(q[(0, 1)], 0.0, epsilon = 1e-6);
    assert_abs_diff_eq!(q[(1, 1)], 1.0, epsilon = 1e-6);
    let ev = q.eigvalsh(UPLO::Lower).unwrap();
    assert!(ev.iter().all(|&v| v >= -1e-8));
}

/// X11 = -1 with X PSD is infeasible (diagonal of a PSD matrix is nonnegative).
#[test]
fn detect_infeasible() {
    let mut sdp = SdpStandardForm::new(vec![Block::Psd(2)], 0);
    sdp.add_row(RowData { blocks: vec![(0, vec![(0, 0, 1.0)])], free: vec![] }, -1.0);
    let sol = solve(&sdp, &opts());
    assert_eq!(sol.status, SdpStatus::Infeasible);
}

/// min -x1 s.t. x2 = 1 over the nonnegative orthant is unbounded below.
#[test]
fn detect_dual_infeasible() {
    let mut sdp = SdpStandardForm::new(vec![Block::Diag(2)], 0);
    sdp.c_blocks[0] = vec![(0, 0, -1.0)];
    sdp.add_row(RowData { blocks: vec![(0, vec![(1, 1, 1.0)])], free: vec![] }, 1.0);
    let sol = solve(&sdp, &opts());
    assert_eq!(sol.status, SdpStatus::DualInfeasible);
}

/// LP in a diagonal block: min x1 + 2 x2 s.t. x1 + x2 = 1, x >= 0.
#[test]
fn solve_diag_lp() {
    let mut sdp = SdpStandardForm::new(vec![Block::Diag(2)], 0);
    sdp.c_blocks[0] = vec![(0, 0, 1.0), (1, 1, 2.0)];
    sdp.add_row(
        RowData { blocks: vec![(0, vec![(0, 0, 1.0), (1, 1, 1.0)])], free: vec![] },
        1.0,
    );
    let sol = solve(&sdp, &opts());
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert_abs_diff_eq!(sol.primal_obj, 1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.x_blocks[0][(0, 0)], 1.0, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.x_blocks[0][(1, 1)], 0.0, epsilon = 1e-6);
}

/// Free variables: min u s.t. u + X11 = 3 and X11 = 1  ->  u = 2.
#[test]
fn solve_with_free_variables() {
    let mut sdp = SdpStandardForm::new(vec![Block::Psd(1)], 1);
    sdp.c_free = vec![1.0];
    sdp.add_row(
        RowData { blocks: vec![(0, vec![(0, 0, 1.0)])], free: vec![(0, 1.0)] },
        3.0,
    );
    sdp.add_row(RowData { blocks: vec![(0, vec![(0, 0, 1.0)])], free: vec![] }, 1.0);
    let sol = solve(&sdp, &opts());
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert_abs_diff_eq!(sol.x_free[0], 2.0, epsilon = 1e-6);
    assert_abs_diff_eq!(sol.primal_obj, 2.0, epsilon = 1e-6);
}

/// Largest eigenvalue as an SDP: min t s.t. t I - S = A (S PSD slack, t free).
/// Exercises free variables coupled into every row of a PSD block.
#[test]
fn solve_lambda_max() {
    let a = ndarray::arr2(&[[1.0, 0.3, 0.0], [0.3, 2.0, 0.1], [0.0, 0.1, 3.0]]);
    let lam_max = a
        .eigvalsh(UPLO::Lower)
        .unwrap()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let n = 3;
    let mut sdp = SdpStandardForm::new(vec![Block::Psd(n)], 1);
    sdp.c_free = vec![1.0];
    for i in 0..n {
        for j in i..n {
            // t delta_ij - S_ij = A_ij; off-diagonal symmetric entries carry a
            // factor 1/2 so that <A,S> picks the single S_ij once.
            let coeff = if i == j { -1.0 } else { -0.5 };
            let free = if i == j { vec![(0, 1.0)] } else { vec![] };
            sdp.add_row(RowData { blocks: vec![(0, vec![(i, j, coeff)])], free }, a[(i, j)]);
        }
    }
    let sol = solve(&sdp, &opts());
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert_abs_diff_eq!(sol.x_free[0], lam_max, epsilon = 1e-6);
}

/// Weak duality and eigenvalue bound on a mixed PSD + diagonal problem.
#[test]
fn optimal_point_invariants() {
    // min <C,X> + y1 s.t. Tr(X) = 1, X11 + y2 = 0.5, y >= 0 (diag block)
    let mut sdp = SdpStandardForm::new(vec![Block::Psd(2), Block::Diag(2)], 0);
    sdp.c_blocks[0] = vec![(0, 0, 1.0), (0, 1, -0.4), (1, 1, 2.0)];
    sdp.c_blocks[1] = vec![(0, 0, 1.0)];
    sdp.add_row(
        RowData { blocks: vec![(0, vec![(0, 0, 1.0), (1, 1, 1.0)])], free: vec![] },
        1.0,
    );
    sdp.add_row(
        RowData { blocks: vec![(0, vec![(0, 0, 1.0)]), (1, vec![(1, 1, 1.0)])], free: vec![] },
        0.5,
    );
    let sol = solve(&sdp, &opts());
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert!(sol.primal_obj >= sol.dual_obj - 1e-9 * (1.0 + sol.primal_obj.abs()));
    for x in &sol.x_blocks {
        let ev = x.eigvalsh(UPLO::Lower).unwrap();
        assert!(ev.iter().all(|&v| v >= -1e-8), "min eig {ev:?}");
    }
}

/// Scaling the objective by 2 must not move the argmin.
#[test]
fn objective_scale_equivariance() {
    let mut sdp = SdpStandardForm::new(vec![Block::Psd(2)], 0);
    sdp.c_blocks[0] = vec![(0, 0, 1.0), (0, 1, -0.4), (1, 1, 2.0)];
    sdp.add_row(
        RowData { blocks: vec![(0, vec![(0, 0, 1.0), (1, 1, 1.0)])], free: vec![] },
        1.0,
    );
    let sol1 = solve(&sdp, &opts());
    let mut sdp2 = sdp.clone();
    for e in sdp2.c_blocks[0].iter_mut() {
        e.2 *= 2.0;
    }
    let sol2 = solve(&sdp2, &opts());
    assert_eq!(sol1.status, SdpStatus::Optimal);
    assert_eq!(sol2.status, SdpStatus::Optimal);
    for (a, b) in sol1.x_blocks[0].iter().zip(sol2.x_blocks[0].iter()) {
        assert_abs_diff_eq!(a, b, epsilon = 1e-6);
    }
    assert_abs_diff_eq!(2.0 * sol1.primal_obj, sol2.primal_obj, epsilon = 1e-6);
}

/// Redundant duplicated rows are eliminated; an inconsistent duplicate is
/// reported infeasible without a solve.
#[test]
fn redundant_and_inconsistent_rows() {
    let mut sdp = unit_trace_problem();
    sdp.add_row(
        RowData { blocks: vec![(0, vec![(0, 0, 2.0)])], free: vec![] },
        2.0,
    );
    let sol = solve(&sdp, &opts());
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert_abs_diff_eq!(sol.primal_obj, 1.0, epsilon = 1e-6);

    let mut bad = unit_trace_problem();
    bad.add_row(
        RowData { blocks: vec![(0, vec![(0, 0, 2.0)])], free: vec![] },
        3.0,
    );
    let sol = solve(&bad, &opts());
    assert_eq!(sol.status, SdpStatus::Infeasible);
}

#[test]
fn sdpa_export_unit_example() {
    let sdp = unit_trace_problem();
    let text = sdpa::format_sdpa(&sdp);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "1"); // m
    assert_eq!(lines[1], "1"); // nblocks
    assert_eq!(lines[2], "1"); // block sizes
    assert_eq!(lines[3], "1"); // b
    assert_eq!(lines[4], "0 1 1 1 1"); // C entry
    assert_eq!(lines[5], "1 1 1 1 1"); // A_1 entry
    assert_eq!(lines.len(), 6);
}

#[test]
fn sdpa_round_trip_identity() {
    // mixed problem: PSD block, diagonal block, free variable, obj constant
    let mut sdp = SdpStandardForm::new(vec![Block::Psd(2), Block::Diag(3)], 2);
    sdp.c_blocks[0] = vec![(0, 0, 1.5), (0, 1, -0.25)];
    sdp.c_blocks[1] = vec![(2, 2, 3.0)];
    sdp.c_free = vec![0.0, -1.0];
    sdp.obj_const = 0.5;
    sdp.add_row(
        RowData {
            blocks: vec![(0, vec![(0, 1, 2.0)]), (1, vec![(0, 0, 1.0)])],
            free: vec![(1, 4.0)],
        },
        1.25,
    );
    sdp.add_row(RowData { blocks: vec![(1, vec![(1, 1, -7.0)])], free: vec![(0, 1.0)] }, -3.0);
    let text = sdpa::format_sdpa(&sdp);
    let back = parse_sdpa(&text).unwrap();
    // structural equality via byte-identical re-export
    assert_eq!(text, sdpa::format_sdpa(&back));
    assert_eq!(back.blocks, sdp.blocks);
    assert_eq!(back.free_dim, sdp.free_dim);
    assert_eq!(back.b, sdp.b);
    assert_eq!(back.obj_const, sdp.obj_const);
}

#[test]
fn sdpa_shortest_round_trip_decimals() {
    let mut sdp = SdpStandardForm::new(vec![Block::Psd(1)], 0);
    sdp.c_blocks[0] = vec![(0, 0, 0.1)];
    sdp.add_row(RowData { blocks: vec![(0, vec![(0, 0, 1.0 / 3.0)])], free: vec![] }, 1.0);
    let back = parse_sdpa(&sdpa::format_sdpa(&sdp)).unwrap();
    assert_eq!(back.c_blocks[0][0].2, 0.1);
    assert_eq!(back.rows[0].blocks[0].1[0].2, 1.0 / 3.0);
}

#[test]
fn sdpa_parse_error_has_line_number() {
    let text = "1\n1\n1\n1\n0 1 1 oops 1\n";
    let err = parse_sdpa(text).unwrap_err();
    assert!(format!("{err}").starts_with("line 5:"), "{err}");
}

#[test]
fn import_known_solution() {
    let dir = std::env::temp_dir().join(format!("teb-sdpa-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let sdp = unit_trace_problem();
    let prob = dir.join("unit.dat-s");
    export_sdpa(&sdp, &prob).unwrap();
    // known optimum: y = 1, Z = 0, X = 1
    let solpath = dir.join("unit.out");
    std::fs::write(&solpath, "1\n1 1 1 1 0\n2 1 1 1 1\n").unwrap();
    let sol = import_solution(&sdp, &solpath).unwrap();
    assert_eq!(sol.status, SdpStatus::Optimal);
    assert_abs_diff_eq!(sol.primal_obj, 1.0, epsilon = 1e-12);
    assert_abs_diff_eq!(sol.dual_obj, 1.0, epsilon = 1e-12);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn import_tolerates_braces_and_labels() {
    let sdp = unit_trace_problem();
    let dir = std::env::temp_dir().join(format!("teb-sdpa-b-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let solpath = dir.join("braced.out");
    std::fs::write(&solpath, "yVec = {1}\n1 1 1 1 0\n2 1 1 1 1\n").unwrap();
    let sol = import_solution(&sdp, &solpath).unwrap();
    assert_abs_diff_eq!(sol.primal_obj, 1.0, epsilon = 1e-12);
    std::fs::remove_dir_all(&dir).ok();
}

/// Exported problem re-imported and solved by the embedded solver agrees with
/// solving the original directly (free variables take the split path).
#[test]
fn export_reimport_solve_agrees() {
    let mut sdp = SdpStandardForm::new(vec![Block::Psd(1)], 1);
    sdp.c_free = vec![1.0];
    sdp.add_row(
        RowData { blocks: vec![(0, vec![(0, 0, 1.0)])], free: vec![(0, 1.0)] },
        3.0,
    );
    sdp.add_row(RowData { blocks: vec![(0, vec![(0, 0, 1.0)])], free: vec![] }, 1.0);
    let direct = solve(&sdp, &opts());
    let back = parse_sdpa(&sdpa::format_sdpa(&sdp)).unwrap();
    let via_file = solve(&back, &opts());
    assert_eq!(direct.status, SdpStatus::Optimal);
    assert_eq!(via_file.status, SdpStatus::Optimal);
    assert_abs_diff_eq!(direct.primal_obj, via_file.primal_obj, epsilon = 1e-6);
}

/// Determinism: identical input produces byte-identical solver trajectories.
#[test]
fn solve_is_deterministic() {
    let mut sdp = SdpStandardForm::new(vec![Block::Psd(2)], 0);
    sdp.c_blocks[0] = vec![(0, 0, 1.0), (0, 1, -0.4), (1, 1, 2.0)];
    sdp.add_row(
        RowData { blocks: vec![(0, vec![(0, 0, 1.0), (1, 1, 1.0)])], free: vec![] },
        1.0,
    );
    let a = solve(&sdp, &opts());
    let b = solve(&sdp, &opts());
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.x_blocks[0], b.x_blocks[0]);
    assert_eq!(a.y, b.y);
}
