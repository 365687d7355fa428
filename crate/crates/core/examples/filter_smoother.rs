//! Filters and smooths a simulated series under the true parameters and
//! reports how close the state estimates come to the hidden states.

use dglasso::datagen::{make_preset, Preset};
use dglasso::lgssm::{kalman_filter, rts_smoother, smoothing_stats, ModelParams};
use dglasso::metrics::cnmse;

fn main() -> dglasso::error::Result<()> {
    let ds = make_preset(Preset::A, 0)?;
    let params = ModelParams::new(ds.truth.a_star.clone(), ds.truth.p_star.clone(), ds.fixed.clone());
    let filt = kalman_filter(&params, &ds.train)?;
    let smooth = rts_smoother(&params, &filt)?;

    let states = ds.train.states.as_ref().expect("simulated series keep their states");
    let filtered: Vec<_> = filt.filtered.iter().map(|b| b.mean.clone()).collect();
    let smoothed: Vec<_> = smooth.smoothed.iter().map(|b| b.mean.clone()).collect();
    println!("K = {}, -log p(y) = {:.3}", ds.train.len(), filt.neg_loglik);
    println!("state cNMSE, filtered: {:.3e}", cnmse(&states[1..], &filtered[1..])?);
    println!("state cNMSE, smoothed: {:.3e}", cnmse(&states[1..], &smoothed[1..])?);

    let stats = smoothing_stats(&params, &ds.train)?;
    println!("trace of Psi, Phi: {:.4}, {:.4}", stats.psi.trace(), stats.phi.trace());
    Ok(())
}
