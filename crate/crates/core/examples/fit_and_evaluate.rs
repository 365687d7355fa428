//! Fits DGLASSO and the unpenalized EM baseline on dataset A and compares
//! their recovery metrics on held-out data.

use dglasso::datagen::{make_preset, Preset};
use dglasso::metrics::{evaluate, EdgeOptions};
use dglasso::solver::{fit, Mode, SolverConfig};

fn main() -> dglasso::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let ds = make_preset(Preset::A, seed)?;
    for (mode, la, lp) in [(Mode::Dglasso, 5.0, 8.0), (Mode::Mlem, 0.0, 0.0)] {
        let res = fit(&ds.train, &ds.fixed, &SolverConfig::new(9, mode, la, lp))?;
        let m = evaluate(&ds.truth, &res.a_hat, &res.p_hat, &ds.fixed, &ds.test, EdgeOptions::default())?;
        println!(
            "{mode:>7}: {} iterations in {:.2}s, RMSE(A) {:.4}, RMSE(P) {:.4}, F1(A) {:.3}, F1(P) {:.3}, cNMSE(pred) {:.3e}",
            res.outer_iterations,
            res.wall_time_seconds,
            m.rmse_a,
            m.rmse_p,
            m.edges_a.f1,
            m.edges_p.f1,
            m.cnmse_pred
        );
    }
    Ok(())
}
