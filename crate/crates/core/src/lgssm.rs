//! Linear-Gaussian state-space model: Kalman filtering, RTS smoothing,
//! marginal likelihood and the second-moment statistics that define the
//! quadratic majorizer used by the solver.
//!
//! The model is
//!
//! ```text
//! x_k = A x_{k-1} + q_k,   q_k ~ N(0, P⁻¹)
//! y_k = H_k x_k + r_k,     r_k ~ N(0, R_k)
//! x_0 ~ N(mu0, Sigma0)
//! ```
//!
//! Every covariance produced here is symmetrized after its update. The
//! plain (non-Joseph) update is used.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{check_square, cholesky, relative_asymmetry, spd_inverse, symmetrize};

/// Asymmetry tolerated on input precision matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Known quantities of the model: observation operators, observation noise
/// covariances and the Gaussian prior on `x_0`.
///
/// `h` and `r` hold either one matrix per time step or a single matrix used
/// for every step.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedParams {
    pub h: Vec<DMatrix<f64>>,
    pub r: Vec<DMatrix<f64>>,
    pub mu0: DVector<f64>,
    pub sigma0: DMatrix<f64>,
}

impl FixedParams {
    /// Time-invariant observation model.
    pub fn constant(
        h: DMatrix<f64>,
        r: DMatrix<f64>,
        mu0: DVector<f64>,
        sigma0: DMatrix<f64>,
    ) -> Self {
        Self {
            h: vec![h],
            r: vec![r],
            mu0,
            sigma0,
        }
    }

    /// `H = I`, `R = sigma_r² I`, `mu0 = 1`, `Sigma0 = sigma_0² I`.
    pub fn identity_observations(nx: usize, sigma_r: f64, sigma_0: f64) -> Self {
        Self::constant(
            DMatrix::identity(nx, nx),
            DMatrix::identity(nx, nx) * (sigma_r * sigma_r),
            DVector::from_element(nx, 1.0),
            DMatrix::identity(nx, nx) * (sigma_0 * sigma_0),
        )
    }

    pub fn nx(&self) -> usize {
        self.mu0.len()
    }

    pub fn ny(&self) -> usize {
        self.h[0].nrows()
    }

    /// Observation operator at time `k` (1-based).
    pub fn h_at(&self, k: usize) -> &DMatrix<f64> {
        if self.h.len() == 1 {
            &self.h[0]
        } else {
            &self.h[k - 1]
        }
    }

    /// Observation noise covariance at time `k` (1-based).
    pub fn r_at(&self, k: usize) -> &DMatrix<f64> {
        if self.r.len() == 1 {
            &self.r[0]
        } else {
            &self.r[k - 1]
        }
    }

    /// Checks shapes against a horizon `k_len` and SPD-ness of `R_k`, `Sigma0`.
    pub fn validate(&self, k_len: usize) -> Result<()> {
        let nx = self.nx();
        if nx == 0 {
            return Err(Error::DimensionMismatch("state dimension is zero".into()));
        }
        check_square(&self.sigma0, nx, "Sigma0")?;
        if self.h.is_empty() || self.r.is_empty() {
            return Err(Error::DimensionMismatch("H and R must be nonempty".into()));
        }
        for (name, len) in [("H", self.h.len()), ("R", self.r.len())] {
            if len != 1 && len != k_len {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has {len} entries, expected 1 or {k_len}"
                )));
            }
        }
        let ny = self.ny();
        for (i, h) in self.h.iter().enumerate() {
            if h.nrows() != ny || h.ncols() != nx {
                return Err(Error::DimensionMismatch(format!(
                    "H[{i}] is {}x{}, expected {ny}x{nx}",
                    h.nrows(),
                    h.ncols()
                )));
            }
        }
        for (i, r) in self.r.iter().enumerate() {
            check_square(r, ny, &format!("R[{i}]"))?;
            cholesky(r, &format!("R[{i}]"))?;
        }
        cholesky(&self.sigma0, "Sigma0")?;
        Ok(())
    }
}

/// Full parameter bundle of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Transition matrix.
    pub a: DMatrix<f64>,
    /// State-noise precision `P = Q⁻¹`.
    pub p: DMatrix<f64>,
    pub fixed: FixedParams,
}

impl ModelParams {
    pub fn new(a: DMatrix<f64>, p: DMatrix<f64>, fixed: FixedParams) -> Self {
        Self { a, p, fixed }
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    /// Validates dimensions, symmetry and positive definiteness.
    pub fn validate(&self, k_len: usize) -> Result<()> {
        let nx = self.fixed.nx();
        check_square(&self.a, nx, "A")?;
        check_square(&self.p, nx, "P")?;
        let asym = relative_asymmetry(&self.p);
        if asym > SYMMETRY_TOL {
            return Err(Error::SymmetryViolation(asym));
        }
        cholesky(&self.p, "P")?;
        self.fixed.validate(k_len)
    }
}

/// Observations `y_1..y_K` and, when simulated, the hidden states `x_0..x_K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub observations: Vec<DVector<f64>>,
    pub states: Option<Vec<DVector<f64>>>,
}

impl TimeSeries {
    pub fn new(observations: Vec<DVector<f64>>) -> Result<Self> {
        Self::with_states(observations, None)
    }

    pub fn with_states(
        observations: Vec<DVector<f64>>,
        states: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::DimensionMismatch("time series is empty".into()));
        }
        let ny = observations[0].len();
        if observations.iter().any(|y| y.len() != ny) {
            return Err(Error::DimensionMismatch(
                "observations have inconsistent lengths".into(),
            ));
        }
        if let Some(xs) = &states {
            if xs.len() != observations.len() + 1 {
                return Err(Error::DimensionMismatch(format!(
                    "{} states for {} observations, expected K+1",
                    xs.len(),
                    observations.len()
                )));
            }
        }
        Ok(Self {
            observations,
            states,
        })
    }

    /// Number of observations `K`.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn ny(&self) -> usize {
        self.observations[0].len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct FilterOutput {
    /// `K + 1` beliefs; index 0 is the prior on `x_0`.
    pub filtered: Vec<GaussianBelief>,
    /// `K` one-step predictions; index `k - 1` holds `x_k | y_{1:k-1}`.
    pub predicted: Vec<GaussianBelief>,
    pub innovations: Vec<DVector<f64>>,
    /// Predicted observation means `H_k mu_{k|k-1}`.
    pub innovation_means: Vec<DVector<f64>>,
    pub innovation_covs: Vec<DMatrix<f64>>,
    pub gains: Vec<DMatrix<f64>>,
    /// `-log p(y_{1:K} | A, P)`.
    pub neg_loglik: f64,
}

impl FilterOutput {
    /// Recomputes the negative log-likelihood from the stored innovations.
    pub fn recompute_neg_loglik(&self) -> Result<f64> {
        self.innovations
            .iter()
            .zip(&self.innovation_covs)
            .try_fold(0.0, |acc, (v, s)| Ok(acc + gaussian_nll_term(v, s)?))
    }
}

#[derive(Debug, Clone)]
pub struct SmootherOutput {
    /// `K + 1` smoothed beliefs, index 0 is `x_0 | y_{1:K}`.
    pub smoothed: Vec<GaussianBelief>,
    /// Smoother gains `G_0..G_K`.
    pub gains: Vec<DMatrix<f64>>,
}

/// Averaged smoothed second moments at a tangent point:
/// `psi = E[x_k x_kᵀ]`, `delta = E[x_k x_{k-1}ᵀ]`, `phi = E[x_{k-1} x_{k-1}ᵀ]`,
/// each averaged over `k = 1..K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingStats {
    pub psi: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    /// Horizon `K` the averages were taken over.
    pub horizon: usize,
}

impl SmoothingStats {
    /// `psi - delta Aᵀ - A deltaᵀ + A phi Aᵀ`, symmetrized.
    pub fn residual_second_moment(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let da = &self.delta * a.transpose();
        let mut pi = &self.psi - &da - da.transpose() + a * &self.phi * a.transpose();
        symmetrize(&mut pi);
        pi
    }
}

fn gaussian_nll_term(v: &DVector<f64>, s: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(s, "S_k")?;
    let l = chol.l_dirty();
    let logdet: f64 = 2.0 * (0..s.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
    let quad = v.dot(&chol.solve(v));
    Ok(0.5 * (s.nrows() as f64 * (2.0 * PI).ln() + logdet) + 0.5 * quad)
}

/// Forward Kalman recursion.
pub fn kalman_filter(params: &ModelParams, series: &TimeSeries) -> Result<FilterOutput> {
    let k_len = series.len();
    params.validate(k_len)?;
    if series.ny() != params.fixed.ny() {
        return Err(Error::DimensionMismatch(format!(
            "observations have dimension {}, H maps to {}",
            series.ny(),
            params.fixed.ny()
        )));
    }
    let a = &params.a;
    let a_t = a.transpose();
    let q = spd_inverse(&params.p, "P")?;

    let mut filtered = Vec::with_capacity(k_len + 1);
    let mut predicted = Vec::with_capacity(k_len);
    let mut innovations = Vec::with_capacity(k_len);
    let mut innovation_means = Vec::with_capacity(k_len);
    let mut innovation_covs = Vec::with_capacity(k_len);
    let mut gains = Vec::with_capacity(k_len);
    let mut neg_loglik = 0.0;

    filtered.push(GaussianBelief {
        mean: params.fixed.mu0.clone(),
        cov: params.fixed.sigma0.clone(),
    });

    for k in 1..=k_len {
        let prev = &filtered[k - 1];
        let pred_mean = a * &prev.mean;
        let mut pred_cov = a * &prev.cov * &a_t + &q;
        symmetrize(&mut pred_cov);

        let h = params.fixed.h_at(k);
        let r = params.fixed.r_at(k);
        let nu = h * &pred_mean;
        let v = &series.observations[k - 1] - &nu;
        let h_sigma = h * &pred_cov;
        let mut s = &h_sigma * h.transpose() + r;
        symmetrize(&mut s);
        let chol = cholesky(&s, &format!("S_{k}"))?;
        // K = Σ Hᵀ S⁻¹ = (S⁻¹ H Σ)ᵀ since Σ and S are symmetric.
        let gain = chol.solve(&h_sigma).transpose();

        let l = chol.l_dirty();
        let logdet: f64 = 2.0 * (0..s.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>();
        let quad = v.dot(&chol.solve(&v));
        neg_loglik += 0.5 * (s.nrows() as f64 * (2.0 * PI).ln() + logdet) + 0.5 * quad;

        let mean = &pred_mean + &gain * &v;
        let mut cov = &pred_cov - &gain * &s * gain.transpose();
        symmetrize(&mut cov);

        filtered.push(GaussianBelief { mean, cov });
        predicted.push(GaussianBelief {
            mean: pred_mean,
            cov: pred_cov,
        });
        innovations.push(v);
        innovation_means.push(nu);
        innovation_covs.push(s);
        gains.push(gain);
    }

    Ok(FilterOutput {
        filtered,
        predicted,
        innovations,
        innovation_means,
        innovation_covs,
        gains,
        neg_loglik,
    })
}

/// Backward Rauch-Tung-Striebel recursion over the filtered beliefs.
pub fn rts_smoother(params: &ModelParams, filt: &FilterOutput) -> Result<SmootherOutput> {
    let k_len = filt.predicted.len();
    if filt.filtered.len() != k_len + 1 {
        return Err(Error::DimensionMismatch(
            "filter output has inconsistent lengths".into(),
        ));
    }
    let a = &params.a;
    let a_t = a.transpose();
    let q = spd_inverse(&params.p, "P")?;

    let mut smoothed: Vec<GaussianBelief> = filt.filtered.clone();
    let mut gains = vec![DMatrix::zeros(a.nrows(), a.nrows()); k_len + 1];

    for k in (0..=k_len).rev() {
        let f = &filt.filtered[k];
        // One-step prediction of x_{k+1}; reuse the filter's for k < K.
        let owned;
        let pred = if k < k_len {
            &filt.predicted[k]
        } else {
            let mut cov = a * &f.cov * &a_t + &q;
            symmetrize(&mut cov);
            owned = GaussianBelief {
                mean: a * &f.mean,
                cov,
            };
            &owned
        };
        let chol = cholesky(&pred.cov, &format!("Sigma_{}^-", k + 1))?;
        // G = Σ_k Aᵀ (Σ⁻)⁻¹ = ((Σ⁻)⁻¹ A Σ_k)ᵀ.
        let g = chol.solve(&(a * &f.cov)).transpose();
        if k < k_len {
            let next = &smoothed[k + 1];
            let mean = &f.mean + &g * (&next.mean - &pred.mean);
            let mut cov = &f.cov + &g * (&next.cov - &pred.cov) * g.transpose();
            symmetrize(&mut cov);
            smoothed[k] = GaussianBelief { mean, cov };
        }
        gains[k] = g;
    }

    Ok(SmootherOutput { smoothed, gains })
}

/// `-log p(y_{1:K} | A, P)`.
pub fn marginal_negloglik(params: &ModelParams, series: &TimeSeries) -> Result<f64> {
    Ok(kalman_filter(params, series)?.neg_loglik)
}

/// Smoothing statistics together with the negative log-likelihood of the
/// same filter pass.
pub fn stats_and_negloglik(
    params: &ModelParams,
    series: &TimeSeries,
) -> Result<(SmoothingStats, f64)> {
    let filt = kalman_filter(params, series)?;
    let smooth = rts_smoother(params, &filt)?;
    Ok((stats_from_smoother(&smooth), filt.neg_loglik))
}

/// Runs the filter and smoother at `params` and averages the smoothed
/// second moments.
pub fn smoothing_stats(params: &ModelParams, series: &TimeSeries) -> Result<SmoothingStats> {
    Ok(stats_and_negloglik(params, series)?.0)
}

pub fn stats_from_smoother(smooth: &SmootherOutput) -> SmoothingStats {
    let k_len = smooth.smoothed.len() - 1;
    let nx = smooth.smoothed[0].mean.len();
    let mut psi = DMatrix::zeros(nx, nx);
    let mut delta = DMatrix::zeros(nx, nx);
    let mut phi = DMatrix::zeros(nx, nx);
    for k in 1..=k_len {
        let cur = &smooth.smoothed[k];
        let prev = &smooth.smoothed[k - 1];
        psi += &cur.cov + &cur.mean * cur.mean.transpose();
        delta += &cur.cov * smooth.gains[k - 1].transpose() + &cur.mean * prev.mean.transpose();
        phi += &prev.cov + &prev.mean * prev.mean.transpose();
    }
    let scale = 1.0 / k_len as f64;
    psi *= scale;
    delta *= scale;
    phi *= scale;
    symmetrize(&mut psi);
    symmetrize(&mut phi);
    SmoothingStats {
        psi,
        delta,
        phi,
        horizon: k_len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, p: f64, h: f64, r: f64, mu0: f64, s0: f64) -> ModelParams {
        ModelParams::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, p),
            FixedParams::constant(
                DMatrix::from_element(1, 1, h),
                DMatrix::from_element(1, 1, r),
                DVector::from_element(1, mu0),
                DMatrix::from_element(1, 1, s0),
            ),
        )
    }

    fn series(ys: &[f64]) -> TimeSeries {
        TimeSeries::new(ys.iter().map(|&y| DVector::from_element(1, y)).collect()).unwrap()
    }

    #[test]
    fn scalar_single_step() {
        let params = scalar(1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        let out = kalman_filter(&params, &series(&[0.0])).unwrap();
        assert!((out.predicted[0].cov[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((out.innovation_covs[0][(0, 0)] - 3.0).abs() < 1e-15);
        assert!((out.gains[0][(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(out.filtered[1].mean[0], 0.0);
        assert!((out.filtered[1].cov[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((out.neg_loglik - 0.5 * (6.0 * PI).ln()).abs() < 1e-14);
        assert!((out.neg_loglik - 1.468245).abs() < 1e-6);
    }

    #[test]
    fn zero_transition_predicts_noise_covariance() {
        let fixed = FixedParams::identity_observations(2, 0.3, 1.0);
        let p = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let q = p.clone().try_inverse().unwrap();
        let params = ModelParams::new(DMatrix::zeros(2, 2), p, fixed);
        let ys = (0..4)
            .map(|k| DVector::from_vec(vec![k as f64, -(k as f64) * 0.5]))
            .collect();
        let out = kalman_filter(&params, &TimeSeries::new(ys).unwrap()).unwrap();
        for pred in &out.predicted {
            assert!(pred.mean.iter().all(|&m| m == 0.0));
            assert!((&pred.cov - &q).norm() < 1e-12);
        }
    }

    #[test]
    fn smoother_matches_filter_at_last_step() {
        let params = scalar(1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
        let filt = kalman_filter(&params, &series(&[0.0])).unwrap();
        let sm = rts_smoother(&params, &filt).unwrap();
        assert_eq!(sm.smoothed[1], filt.filtered[1]);
    }

    #[test]
    fn rigid_state_smooths_to_final_filtered_mean() {
        let params = scalar(1.0, 1e8, 1.0, 1.0, 0.0, 1.0);
        let ys = vec![2.0; 30];
        let filt = kalman_filter(&params, &series(&ys)).unwrap();
        let sm = rts_smoother(&params, &filt).unwrap();
        let last = filt.filtered[30].mean[0];
        for b in &sm.smoothed {
            assert!((b.mean[0] - last).abs() < 1e-5, "{} vs {last}", b.mean[0]);
        }
    }

    #[test]
    fn deterministic_states_give_outer_products() {
        // Tiny covariances everywhere pin x0 = 2 and x1 ≈ 3.
        let params = scalar(1.5, 1e12, 1.0, 1e-12, 2.0, 1e-14);
        let stats = smoothing_stats(&params, &series(&[3.0])).unwrap();
        assert!((stats.psi[(0, 0)] - 9.0).abs() < 1e-6);
        assert!((stats.delta[(0, 0)] - 6.0).abs() < 1e-6);
        assert!((stats.phi[(0, 0)] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn negloglik_is_pure() {
        let params = scalar(0.8, 2.0, 1.0, 0.5, 0.3, 1.0);
        let s = series(&[0.1, -0.4, 1.2, 0.7]);
        let a = marginal_negloglik(&params, &s).unwrap();
        let b = marginal_negloglik(&params, &s.clone()).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut params = scalar(1.0, -1.0, 1.0, 1.0, 0.0, 1.0);
        assert!(matches!(
            kalman_filter(&params, &series(&[0.0])),
            Err(Error::NonSpd(_))
        ));
        params.p = DMatrix::from_element(2, 2, 1.0);
        assert!(matches!(
            kalman_filter(&params, &series(&[0.0])),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(TimeSeries::new(vec![]).is_err());
    }
}
