//! Helpers shared by the integration tests, including a brute-force
//! joint-Gaussian conditioning oracle for the filter and smoother.
#![allow(dead_code)]

use dglasso::lgssm::{FixedParams, ModelParams, TimeSeries};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

pub fn randn_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// `B Bᵀ / n + floor I` for a Gaussian `B`.
pub fn rand_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let b = randn(rng, n, n);
    &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * floor
}

pub fn rel_err(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    (a - reference).norm() / reference.norm().max(1e-300)
}

pub fn rel_err_vec(a: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    (a - reference).norm() / reference.norm().max(1e-300)
}

/// Random model with `Nx, Ny ≤ 4`, a series of length `K ≤ 20` simulated
/// from it, and the model itself.
pub fn random_instance(seed: u64) -> (ModelParams, TimeSeries) {
    let mut r = rng(seed);
    let nx = 1 + (seed % 4) as usize;
    let ny = 1 + ((seed / 4) % 4) as usize;
    let k = 1 + ((seed * 7) % 20) as usize;
    let a = {
        let m = randn(&mut r, nx, nx);
        let s = m.clone().singular_values().max();
        m * (0.95 / s)
    };
    let p = rand_spd(&mut r, nx, 0.5);
    let fixed = FixedParams::constant(
        randn(&mut r, ny, nx),
        rand_spd(&mut r, ny, 0.2),
        randn_vec(&mut r, nx),
        rand_spd(&mut r, nx, 0.1),
    );
    let params = ModelParams::new(a, p, fixed);
    let series = simulate(&params, k, &mut r);
    (params, series)
}

pub fn simulate(params: &ModelParams, k: usize, rng: &mut ChaCha8Rng) -> TimeSeries {
    let nx = params.nx();
    let ny = params.fixed.ny();
    let q = params.p.clone().try_inverse().unwrap();
    let lq = q.cholesky().unwrap().l();
    let l0 = params.fixed.sigma0.clone().cholesky().unwrap().l();
    let mut x = &params.fixed.mu0 + &l0 * randn_vec(rng, nx);
    let mut obs = Vec::with_capacity(k);
    for step in 1..=k {
        x = &params.a * &x + &lq * randn_vec(rng, nx);
        let lr = params.fixed.r_at(step).clone().cholesky().unwrap().l();
        obs.push(params.fixed.h_at(step) * &x + lr * randn_vec(rng, ny));
    }
    TimeSeries::new(obs).unwrap()
}

/// Exact posterior of `x_0..x_K` given `y_1..y_upto`, from the full joint
/// covariance of the stacked states.
pub struct BatchPosterior {
    pub nx: usize,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl BatchPosterior {
    pub fn mean_at(&self, k: usize) -> DVector<f64> {
        self.mean.rows(k * self.nx, self.nx).into_owned()
    }

    pub fn cov_at(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.cov
            .view((i * self.nx, j * self.nx), (self.nx, self.nx))
            .into_owned()
    }
}

fn prior_moments(params: &ModelParams, k_len: usize) -> (DVector<f64>, DMatrix<f64>) {
    let nx = params.nx();
    let n = (k_len + 1) * nx;
    let q = params.p.clone().try_inverse().unwrap();
    let mut means = vec![params.fixed.mu0.clone()];
    let mut marg = vec![params.fixed.sigma0.clone()];
    for k in 1..=k_len {
        means.push(&params.a * &means[k - 1]);
        marg.push(&params.a * &marg[k - 1] * params.a.transpose() + &q);
    }
    let mut mean = DVector::zeros(n);
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..=k_len {
        mean.rows_mut(i * nx, nx).copy_from(&means[i]);
        // Cov(x_i, x_j) = A^{i-j} Σ_j for i ≥ j.
        for j in 0..=i {
            let block = params.a.pow((i - j) as u32) * &marg[j];
            cov.view_mut((i * nx, j * nx), (nx, nx)).copy_from(&block);
            cov.view_mut((j * nx, i * nx), (nx, nx))
                .copy_from(&block.transpose());
        }
    }
    (mean, cov)
}

pub fn batch_posterior(params: &ModelParams, series: &TimeSeries, upto: usize) -> BatchPosterior {
    let nx = params.nx();
    let ny = params.fixed.ny();
    let k_len = series.len();
    let (mean, cov) = prior_moments(params, k_len);
    if upto == 0 {
        return BatchPosterior { nx, mean, cov };
    }
    let n = (k_len + 1) * nx;
    let m = upto * ny;
    let mut g = DMatrix::zeros(m, n);
    let mut r = DMatrix::zeros(m, m);
    let mut y = DVector::zeros(m);
    for k in 1..=upto {
        g.view_mut(((k - 1) * ny, k * nx), (ny, nx))
            .copy_from(params.fixed.h_at(k));
        r.view_mut(((k - 1) * ny, (k - 1) * ny), (ny, ny))
            .copy_from(params.fixed.r_at(k));
        y.rows_mut((k - 1) * ny, ny).copy_from(&series.observations[k - 1]);
    }
    let s = &g * &cov * g.transpose() + r;
    let chol = s.cholesky().expect("observation covariance is SPD");
    let cg = &cov * g.transpose();
    let post_mean = &mean + &cg * chol.solve(&(y - &g * &mean));
    let post_cov = &cov - &cg * chol.solve(&cg.transpose());
    BatchPosterior {
        nx,
        mean: post_mean,
        cov: post_cov,
    }
}

/// `-log N(y_{1:K}; G m, G C Gᵀ + R)` from the joint prior.
pub fn batch_negloglik(params: &ModelParams, series: &TimeSeries) -> f64 {
    let nx = params.nx();
    let ny = params.fixed.ny();
    let k_len = series.len();
    let (mean, cov) = prior_moments(params, k_len);
    let m = k_len * ny;
    let mut g = DMatrix::zeros(m, (k_len + 1) * nx);
    let mut r = DMatrix::zeros(m, m);
    let mut y = DVector::zeros(m);
    for k in 1..=k_len {
        g.view_mut(((k - 1) * ny, k * nx), (ny, nx))
            .copy_from(params.fixed.h_at(k));
        r.view_mut(((k - 1) * ny, (k - 1) * ny), (ny, ny))
            .copy_from(params.fixed.r_at(k));
        y.rows_mut((k - 1) * ny, ny).copy_from(&series.observations[k - 1]);
    }
    let s = &g * &cov * g.transpose() + r;
    let chol = s.clone().cholesky().unwrap();
    let resid = y - &g * &mean;
    let logdet: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + logdet) + 0.5 * resid.dot(&chol.solve(&resid))
}

/// Worst relative Frobenius error of the filter and smoother against the
/// batch oracle over all means and covariances.
pub fn oracle_discrepancy(params: &ModelParams, series: &TimeSeries) -> f64 {
    let filt = dglasso::lgssm::kalman_filter(params, series).unwrap();
    let smooth = dglasso::lgssm::rts_smoother(params, &filt).unwrap();
    let k_len = series.len();
    let mut worst: f64 = 0.0;
    for k in 1..=k_len {
        let post = batch_posterior(params, series, k);
        worst = worst
            .max(rel_err_vec(&filt.filtered[k].mean, &post.mean_at(k)))
            .max(rel_err(&filt.filtered[k].cov, &post.cov_at(k, k)));
        let prior = batch_posterior(params, series, k - 1);
        worst = worst
            .max(rel_err_vec(&filt.predicted[k - 1].mean, &prior.mean_at(k)))
            .max(rel_err(&filt.predicted[k - 1].cov, &prior.cov_at(k, k)));
    }
    let full = batch_posterior(params, series, k_len);
    for k in 0..=k_len {
        worst = worst
            .max(rel_err_vec(&smooth.smoothed[k].mean, &full.mean_at(k)))
            .max(rel_err(&smooth.smoothed[k].cov, &full.cov_at(k, k)));
    }
    worst
}

/// Fails if any step of `trace` rises by more than `1e-9` relative.
pub fn assert_descent(trace: &[f64]) {
    for w in trace.windows(2) {
        assert!(
            w[1] - w[0] <= 1e-9 * w[0].abs(),
            "loss rose from {} to {}",
            w[0],
            w[1]
        );
    }
}
