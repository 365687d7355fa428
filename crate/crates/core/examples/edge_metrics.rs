//! Support-recovery scores of a dense and a thresholded estimate.

use dglasso::metrics::{edge_scores, rmse, EDGE_THRESHOLD};
use nalgebra::DMatrix;

fn main() -> dglasso::error::Result<()> {
    let truth = DMatrix::from_row_slice(3, 3, &[0.9, 0.3, 0.0, 0.0, 0.8, 0.0, 0.0, 0.0, 0.7]);
    let dense = truth.map(|v| v + 0.05);
    let sparse = dense.map(|v: f64| if v.abs() > 0.1 { v } else { 0.0 });
    for (name, est) in [("dense", &dense), ("thresholded", &sparse)] {
        let s = edge_scores(&truth, est, EDGE_THRESHOLD, true)?;
        println!(
            "{name:>11}: RMSE {:.4}, F1 {:.3}, precision {:.3}, recall {:.3}, AUC {:?}",
            rmse(&truth, est)?,
            s.f1,
            s.precision,
            s.recall,
            s.auc
        );
    }
    Ok(())
}
