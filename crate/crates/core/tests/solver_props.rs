mod common;

use common::*;
use dglasso::datagen::{make_dataset, make_preset, DatasetSpec, Preset};
use dglasso::metrics::{evaluate, EdgeOptions, EDGE_THRESHOLD};
use dglasso::solver::{fit, Mode, SolverConfig};
use nalgebra::DMatrix;

/// Dataset A with a shorter horizon to keep the suite fast.
fn small_a(seed: u64) -> dglasso::datagen::Dataset {
    let spec = DatasetSpec {
        k: 300,
        ..DatasetSpec::preset(Preset::A, seed)
    };
    make_dataset(&spec).unwrap()
}

fn nnz(m: &DMatrix<f64>) -> usize {
    m.iter().filter(|v| v.abs() > EDGE_THRESHOLD).count()
}

#[test]
fn every_mode_descends() {
    for seed in 0..3 {
        let ds = small_a(seed);
        for mode in [Mode::Dglasso, Mode::Mlem, Mode::AOnly, Mode::POnly] {
            let res = fit(&ds.train, &ds.fixed, &SolverConfig::new(9, mode, 5.0, 8.0)).unwrap();
            assert_descent(&res.loss_trace);
            assert_eq!(res.loss_trace.len(), res.outer_iterations + 1);
            assert!(res.p_hat.clone().cholesky().is_some(), "{mode} seed {seed}");
        }
    }
}

#[test]
fn unpenalized_large_theta_tracks_mlem() {
    for seed in 0..3 {
        let ds = small_a(seed);
        let mut cfg = SolverConfig::new(9, Mode::Dglasso, 0.0, 0.0);
        cfg.theta_a = 1e6;
        cfg.theta_p = 1e6;
        cfg.max_outer = 5;
        cfg.epsilon = f64::MIN_POSITIVE;
        let mut mlem = cfg.clone();
        mlem.mode = Mode::Mlem;
        let d = fit(&ds.train, &ds.fixed, &cfg).unwrap();
        let m = fit(&ds.train, &ds.fixed, &mlem).unwrap();
        assert_eq!(d.outer_iterations, 5);
        assert!(rel_err(&d.a_hat, &m.a_hat) < 1e-3, "{:e}", rel_err(&d.a_hat, &m.a_hat));
        assert!(rel_err(&d.p_hat, &m.p_hat) < 1e-3, "{:e}", rel_err(&d.p_hat, &m.p_hat));
    }
}

#[test]
fn refits_are_bit_identical() {
    let ds = small_a(11);
    let cfg = SolverConfig::new(9, Mode::Dglasso, 5.0, 8.0);
    let a = fit(&ds.train, &ds.fixed, &cfg).unwrap();
    let b = fit(&ds.train, &ds.fixed, &cfg).unwrap();
    let bits = |t: &[f64]| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a.loss_trace), bits(&b.loss_trace));
    assert_eq!(a.a_hat, b.a_hat);
}

#[test]
fn precision_support_shrinks_with_penalty() {
    for seed in 0..3 {
        let ds = small_a(seed + 20);
        let counts: Vec<usize> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&lp| {
                let res = fit(&ds.train, &ds.fixed, &SolverConfig::new(9, Mode::Dglasso, 5.0, lp)).unwrap();
                assert_descent(&res.loss_trace);
                nnz(&res.p_hat)
            })
            .collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {counts:?}");
    }
}

#[test]
fn mlem_is_dense_and_p_only_predicts_zero() {
    let ds = make_preset(Preset::A, 3).unwrap();
    let mlem = fit(&ds.train, &ds.fixed, &SolverConfig::new(9, Mode::Mlem, 0.0, 0.0)).unwrap();
    let report = evaluate(&ds.truth, &mlem.a_hat, &mlem.p_hat, &ds.fixed, &ds.test, EdgeOptions::default()).unwrap();
    assert_eq!(report.edges_a.f1, 0.5);
    assert_eq!(report.edges_p.f1, 0.5);

    let glasso = fit(&ds.train, &ds.fixed, &SolverConfig::new(9, Mode::POnly, 0.0, 8.0)).unwrap();
    assert_eq!(glasso.a_hat, DMatrix::zeros(9, 9));
    let report = evaluate(&ds.truth, &glasso.a_hat, &glasso.p_hat, &ds.fixed, &ds.test, EdgeOptions::default()).unwrap();
    assert_eq!(report.cnmse_pred, 1.0);
}

#[test]
fn dglasso_beats_mlem_on_transition_error() {
    let mut wins = 0;
    for seed in 0..5 {
        let ds = make_preset(Preset::A, seed).unwrap();
        let d = fit(&ds.train, &ds.fixed, &SolverConfig::new(9, Mode::Dglasso, 5.0, 8.0)).unwrap();
        let m = fit(&ds.train, &ds.fixed, &SolverConfig::new(9, Mode::Mlem, 0.0, 0.0)).unwrap();
        assert_descent(&d.loss_trace);
        assert_descent(&m.loss_trace);
        let rmse = |a: &DMatrix<f64>| dglasso::metrics::rmse(&ds.truth.a_star, a).unwrap();
        wins += (rmse(&d.a_hat) < rmse(&m.a_hat)) as usize;
    }
    assert!(wins >= 4, "DGLASSO won on {wins}/5 seeds");
}
