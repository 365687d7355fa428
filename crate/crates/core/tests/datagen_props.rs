use dglasso::datagen::{
    gen_ground_truth, make_dataset, simulate, DatasetSpec, Preset, STREAM_TRAIN,
};
use dglasso::linalg::spectral_norm;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn off_block_is_zero(m: &DMatrix<f64>, spec: &DatasetSpec) -> bool {
    let mut block_of = vec![0; spec.nx];
    for (b, (start, size)) in spec.blocks().into_iter().enumerate() {
        block_of[start..start + size].iter_mut().for_each(|x| *x = b);
    }
    (0..spec.nx).all(|i| (0..spec.nx).all(|j| block_of[i] == block_of[j] || m[(i, j)] == 0.0))
}

#[test]
fn precision_blocks_have_prescribed_spectrum() {
    for preset in Preset::all() {
        let spec = DatasetSpec::preset(preset, 5);
        let gt = gen_ground_truth(&spec).unwrap();
        let c = 10f64.powf(preset.cond_log10());
        for (start, size) in spec.blocks() {
            let block = gt.p_star.view((start, start), (size, size)).into_owned();
            let mut eig: Vec<f64> = block.symmetric_eigenvalues().iter().cloned().collect();
            eig.sort_by(f64::total_cmp);
            for (i, e) in eig.iter().enumerate() {
                let want = c.powf(i as f64 / 2.0);
                assert!((e - want).abs() < 1e-10 * want, "{preset}: {eig:?}");
            }
            assert!((eig[2] / eig[0] - c).abs() < 1e-10 * c);
        }
    }
}

#[test]
fn states_reach_stationary_covariance() {
    let spec = DatasetSpec {
        k: 100_000,
        ..DatasetSpec::preset(Preset::A, 2)
    };
    let gt = gen_ground_truth(&spec).unwrap();
    let series = simulate(&gt, &spec.fixed_params(), spec.k, &mut spec.rng(STREAM_TRAIN)).unwrap();
    let states = series.states.unwrap();

    // Fixed point of Σ = A Σ Aᵀ + Q by doubling.
    let mut sigma = gt.q_star.clone();
    let mut a_pow = gt.a_star.clone();
    for _ in 0..40 {
        sigma = &sigma + &a_pow * &sigma * a_pow.transpose();
        a_pow = &a_pow * &a_pow;
    }
    let burn = 1000;
    let n = (states.len() - burn) as f64;
    let mut emp = DMatrix::zeros(9, 9);
    for x in &states[burn..] {
        emp += x * x.transpose();
    }
    emp /= n;
    // Singular values near 0.99 give correlation times of about 100 steps,
    // so only about 1000 effective samples back the estimate.
    let err = (&emp - &sigma).norm() / sigma.norm();
    assert!(err < 0.1, "relative error {err}");
}

#[test]
fn noiseless_states_decay() {
    let gt = gen_ground_truth(&DatasetSpec::preset(Preset::C, 9)).unwrap();
    let x0 = nalgebra::DVector::from_element(9, 1.0);
    let x = gt.a_star.pow(2000) * &x0;
    assert!(x.norm() < 1e-6 * x0.norm());
}

#[test]
fn sparse_truth_keeps_requested_entries() {
    for keep in [27, 15, 10, 5] {
        let spec = DatasetSpec {
            sparsity_keep: Some(keep),
            ..DatasetSpec::preset(Preset::A, 4)
        };
        let gt = gen_ground_truth(&spec).unwrap();
        let nnz = gt.a_star.iter().filter(|v| **v != 0.0).count();
        assert_eq!(nnz, keep);
        assert!((spectral_norm(&gt.a_star) - 0.99).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generated_truth_is_valid(
        seed in any::<u64>(),
        sizes in prop::collection::vec(1usize..5, 1..4),
        cond in 0.0f64..2.0,
    ) {
        let spec = DatasetSpec {
            nx: sizes.iter().sum(),
            block_sizes: sizes,
            cond_log10: cond,
            k: 5,
            ..DatasetSpec::preset(Preset::A, seed)
        };
        let gt = gen_ground_truth(&spec).unwrap();
        prop_assert!(spectral_norm(&gt.a_star) <= 0.99 + 1e-12);
        prop_assert!(gt.p_star.clone().cholesky().is_some());
        prop_assert!(off_block_is_zero(&gt.a_star, &spec));
        prop_assert!(off_block_is_zero(&gt.p_star, &spec));
    }

    #[test]
    fn seed_determines_everything(seed in any::<u64>()) {
        let spec = DatasetSpec { k: 20, ..DatasetSpec::preset(Preset::B, seed) };
        let a = make_dataset(&spec).unwrap();
        let b = make_dataset(&spec).unwrap();
        prop_assert_eq!(&a.truth, &b.truth);
        prop_assert_eq!(&a.train, &b.train);
        prop_assert_eq!(&a.test, &b.test);
        prop_assert_ne!(&a.train, &a.test);
    }
}
