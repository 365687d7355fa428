//! Ground truths of the four presets and of a sparsified variant.

use dglasso::datagen::{gen_ground_truth, DatasetSpec, Preset};
use dglasso::linalg::spectral_norm;

fn main() -> dglasso::error::Result<()> {
    for preset in Preset::all() {
        let gt = gen_ground_truth(&DatasetSpec::preset(preset, 0))?;
        let eig = gt.p_star.clone().symmetric_eigenvalues();
        println!(
            "{preset}: |A*|_2 = {:.4}, cond(P*) = {:.3}, nonzeros A* {}, P* {}",
            spectral_norm(&gt.a_star),
            eig.max() / eig.min(),
            gt.a_star.iter().filter(|v| **v != 0.0).count(),
            gt.p_star.iter().filter(|v| **v != 0.0).count()
        );
    }
    let spec = DatasetSpec {
        sparsity_keep: Some(5),
        ..DatasetSpec::preset(Preset::A, 0)
    };
    println!("A* keeping 5 entries:{:.3}", gen_ground_truth(&spec)?.a_star);
    Ok(())
}
