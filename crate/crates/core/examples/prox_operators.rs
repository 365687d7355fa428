//! The three proximity operators on small inputs, with their optimality
//! residuals.

use dglasso::proxops::{
    logdet_trace_residual, prox_l1, prox_logdet_trace, prox_quad_trace, quad_trace_residual,
    PiMatrix, QuadStats,
};
use nalgebra::DMatrix;

fn main() -> dglasso::error::Result<()> {
    let v = DMatrix::from_row_slice(2, 2, &[3.0, -2.0, 0.1, -4.0]);
    println!("soft threshold at 0.5:{}", prox_l1(&v, 0.5));

    let stats = QuadStats::new(
        DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        DMatrix::from_row_slice(2, 2, &[0.8, 0.1, -0.2, 0.5]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]),
    );
    let z = prox_quad_trace(&v, &stats, 0.7)?;
    let (res, scale) = quad_trace_residual(&z, &v, &stats, 0.7);
    println!("quadratic-trace prox:{z}residual {res:.2e} (scale {scale:.2})");

    let pi = PiMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]))?;
    let sym = (&v + v.transpose()) * 0.5;
    let p = prox_logdet_trace(&sym, &pi, 1.5)?;
    println!(
        "log-det prox:{p}eigenvalues {:?}, residual {:.2e}",
        p.symmetric_eigenvalues().as_slice(),
        logdet_trace_residual(&p, &sym, &pi, 1.5)
    );
    Ok(())
}
