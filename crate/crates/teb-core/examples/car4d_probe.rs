use ndarray_linalg::{Eigh, Inverse, UPLO};
use teb_core::models::catalog;
use teb_core::synthesis::*;

fn xy_radius(e: &ndarray::Array2<f64>) -> f64 {
    let einv = e.inv().unwrap();
    let xy = einv.slice(ndarray::s![0..2, 0..2]).to_owned();
    let (vals, _) = xy.eigh(UPLO::Upper).unwrap();
    vals.iter().cloned().fold(f64::MIN, f64::max).sqrt()
}

fn main() {
    let mp = catalog().into_iter().find(|m| m.name == "car4d_si2d").unwrap();
    for seed in 0..3u64 {
        let t0 = std::time::Instant::now();
        let mut cfg = SynthesisConfig::default();
        cfg.seed = seed;
        let pd = ProblemData::new(&mp, &cfg).unwrap();
        let mut state = match generate_feasible_guess(&mp, &cfg, None).unwrap() {
            GuessOutcome::Feasible { state, .. } => state,
            GuessOutcome::Failure { .. } => panic!("init failed"),
        };
        let mut c_prev = *state.objective_history.last().unwrap();
        println!("seed {seed}: init logdet {c_prev:.4} ({:.1}s)", t0.elapsed().as_secs_f64());
        for it in 0..cfg.max_iters {
            let ks = match k_subproblem(&pd, &state.v_star, Some(0.0)) {
                Ok(ks) => ks,
                Err(e) => {
                    println!("  outer {it}: K-step ended loop: {e}");
                    break;
                }
            };
            let es = match tightest_ellipsoid(&pd, &state.v_star, Some(&state.e_star)) {
                Ok(es) => es,
                Err(e) => {
                    println!("  outer {it}: ellipsoid ended loop: {e}");
                    break;
                }
            };
            state.k_star = ks.k;
            state.gamma_c_star = ks.gamma_c;
            state.multipliers.l_lya = ks.l_lya;
            state.multipliers.l_pc = ks.l_pc;
            state.multipliers.l_s = ks.l_s;
            state.multipliers.l_e = es.l_e;
            state.multipliers.l_g = es.l_g;
            state.e_star = es.e;
            let c_new = backtrack(&pd, &mut state).unwrap();
            println!(
                "  outer {it}: gamma_c {:.4}, backtrack {:.4} r_xy {:.3} ({:.0}s)",
                ks.gamma_c, c_new, xy_radius(&state.e_star), t0.elapsed().as_secs_f64()
            );
            if (c_new - c_prev).abs() <= cfg.theta1 * c_prev.abs() {
                println!("  outer {it}: converged");
                break;
            }
            c_prev = c_new;
        }
        println!(
            "seed {seed}: final r_xy {:.3} m, total {:.0}s",
            xy_radius(&state.e_star),
            t0.elapsed().as_secs_f64()
        );
    }
}
