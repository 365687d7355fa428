//! One transition and one precision update from the default starting
//! point, checked against the proximal-gradient reference solver.

use dglasso::datagen::{make_preset, Preset};
use dglasso::inner::{
    reference_prox_gradient, solve_a_update, solve_p_update, InnerConfig, InnerProblem,
    PrecisionProblem, TransitionProblem,
};
use dglasso::lgssm::{smoothing_stats, ModelParams};
use dglasso::solver::default_init;

fn main() -> dglasso::error::Result<()> {
    let ds = make_preset(Preset::A, 1)?;
    let k = ds.train.len();
    let (a0, p0) = default_init(9);
    let stats = smoothing_stats(&ModelParams::new(a0.clone(), p0.clone(), ds.fixed.clone()), &ds.train)?;
    let cfg = InnerConfig::default();

    let a = solve_a_update(&a0, &p0, &stats, 5.0, 1.0, k, &cfg)?;
    let problem = InnerProblem::Transition(TransitionProblem::new(&a0, &p0, &stats, 5.0, 1.0, k));
    let reference = reference_prox_gradient(&problem, &a0, 1e-9, 100_000)?;
    println!(
        "A update: {} iterations, converged {}, objective {:.4} -> {:.4}, gap to reference {:.2e}",
        a.iterations,
        a.converged,
        a.objective_trace[0],
        a.final_objective(),
        (&a.solution - reference).norm()
    );

    let p = solve_p_update(&a.solution, &p0, &stats, 8.0, 1.0, k, &cfg)?;
    let problem = InnerProblem::Precision(PrecisionProblem::new(&a.solution, &p0, &stats, 8.0, 1.0, k)?);
    let reference = reference_prox_gradient(&problem, &p0, 1e-9, 100_000)?;
    println!(
        "P update: {} iterations, converged {}, gap to reference {:.2e}, min eigenvalue {:.3e}",
        p.iterations,
        p.converged,
        (&p.solution - reference).norm(),
        p.solution.symmetric_eigenvalues().min()
    );
    Ok(())
}
