//! Seeded synthetic ground truth and simulated series.
//!
//! Every dataset is fully determined by its `DatasetSpec`, seed included.
//! The seed initializes ChaCha8 and three streams are carved out of it:
//! stream 0 draws the ground-truth matrices, stream 1 the training series
//! and stream 2 the test series.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lgssm::{FixedParams, TimeSeries};
use crate::linalg::{cap_singular_values, cholesky, spd_inverse, spectral_norm};

pub const STREAM_TRUTH: u64 = 0;
pub const STREAM_TRAIN: u64 = 1;
pub const STREAM_TEST: u64 = 2;

/// Reflector draws below this norm are rejected and redrawn.
const MIN_REFLECTOR_NORM: f64 = 1e-12;
const MAX_REFLECTOR_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    A,
    B,
    C,
    D,
}

impl Preset {
    pub fn cond_log10(self) -> f64 {
        match self {
            Preset::A => 0.1,
            Preset::B => 0.2,
            Preset::C => 0.5,
            Preset::D => 1.0,
        }
    }

    pub fn all() -> [Preset; 4] {
        [Preset::A, Preset::B, Preset::C, Preset::D]
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Preset::A),
            "B" => Ok(Preset::B),
            "C" => Ok(Preset::C),
            "D" => Ok(Preset::D),
            other => Err(Error::InvalidConfig(format!("unknown preset `{other}`"))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Preset::A => "A",
            Preset::B => "B",
            Preset::C => "C",
            Preset::D => "D",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub nx: usize,
    pub block_sizes: Vec<usize>,
    /// `log10` of the per-block condition number of `P*`.
    pub cond_log10: f64,
    #[serde(default = "default_cap")]
    pub spectral_cap: f64,
    /// Length of the training and of the test series.
    pub k: usize,
    pub sigma_r: f64,
    pub sigma_0: f64,
    /// Keep only this many of the largest entries of `A*`.
    #[serde(default)]
    pub sparsity_keep: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn default_cap() -> f64 {
    0.99
}

impl DatasetSpec {
    /// Nine states in three blocks of three, `K = 1000`,
    /// `sigma_R = 0.1`, `sigma_0 = 1e-4`.
    pub fn preset(preset: Preset, seed: u64) -> Self {
        Self {
            nx: 9,
            block_sizes: vec![3, 3, 3],
            cond_log10: preset.cond_log10(),
            spectral_cap: 0.99,
            k: 1000,
            sigma_r: 0.1,
            sigma_0: 1e-4,
            sparsity_keep: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.block_sizes.contains(&0) {
            return bad("block sizes must be positive");
        }
        if self.block_sizes.iter().sum::<usize>() != self.nx {
            return bad("block sizes must sum to nx");
        }
        if !(self.spectral_cap > 0.0 && self.spectral_cap <= 1.0) {
            return bad("spectral_cap must lie in (0, 1]");
        }
        if !(self.cond_log10 >= 0.0 && self.cond_log10.is_finite()) {
            return bad("cond_log10 must be a nonnegative number");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if !(self.sigma_r > 0.0 && self.sigma_0 > 0.0) {
            return bad("noise levels must be positive");
        }
        Ok(())
    }

    pub fn fixed_params(&self) -> FixedParams {
        FixedParams::identity_observations(self.nx, self.sigma_r, self.sigma_0)
    }

    /// `(start, size)` of every diagonal block.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let mut start = 0;
        self.block_sizes
            .iter()
            .map(|&b| {
                let r = (start, b);
                start += b;
                r
            })
            .collect()
    }

    /// Generator for one of the documented streams of this spec's seed.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub a_star: DMatrix<f64>,
    pub p_star: DMatrix<f64>,
    pub q_star: DMatrix<f64>,
    pub spec: DatasetSpec,
}

/// Block-diagonal AR(1)-style transition matrix.
///
/// Block `j` has entries `rho_j^|sigma_j(n) - l|` for `rho_j ~ U[0, 1]` and a
/// random permutation `sigma_j`, drawn in block order (rho first). Without
/// sparsification the singular values of every block are clipped to
/// `spectral_cap`. With `sparsity_keep = s`, only the `s` largest-magnitude
/// entries survive and the matrix is rescaled to spectral norm
/// `spectral_cap`, which keeps the support intact.
pub fn gen_transition<R: Rng + ?Sized>(spec: &DatasetSpec, rng: &mut R) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(spec.nx, spec.nx);
    for (start, size) in spec.blocks() {
        let rho: f64 = rng.gen();
        let mut perm: Vec<usize> = (0..size).collect();
        perm.shuffle(rng);
        let block = DMatrix::from_fn(size, size, |n, l| {
            rho.powi((perm[n] as i32 - l as i32).abs())
        });
        a.view_mut((start, start), (size, size)).copy_from(&block);
    }
    match spec.sparsity_keep {
        None => {
            for (start, size) in spec.blocks() {
                let block = a.view((start, start), (size, size)).into_owned();
                let capped = cap_singular_values(&block, spec.spectral_cap);
                a.view_mut((start, start), (size, size)).copy_from(&capped);
            }
        }
        Some(keep) => {
            sparsify(&mut a, keep);
            let norm = spectral_norm(&a);
            if norm > 0.0 {
                a *= spec.spectral_cap / norm;
            }
        }
    }
    a
}

/// Zeroes all but the `keep` largest-magnitude entries; ties go to the
/// earlier entry in column-major order.
fn sparsify(a: &mut DMatrix<f64>, keep: usize) {
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[j].abs().total_cmp(&a[i].abs()).then(i.cmp(&j)));
    for &idx in order.iter().skip(keep) {
        a[idx] = 0.0;
    }
}

/// Block-diagonal precision matrix with blocks `H diag(c^(i/2)) H`,
/// `i = 0..n-1`, for a Householder reflector `H` built from
/// `p ~ U[-1, 1]^n`.
pub fn gen_precision<R: Rng + ?Sized>(spec: &DatasetSpec, rng: &mut R) -> Result<DMatrix<f64>> {
    let c = 10f64.powf(spec.cond_log10);
    let mut p_star = DMatrix::zeros(spec.nx, spec.nx);
    for (start, size) in spec.blocks() {
        let h = reflector(size, rng)?;
        let d = DMatrix::from_diagonal(&DVector::from_fn(size, |i, _| c.powf(i as f64 / 2.0)));
        let mut block = &h * d * &h;
        crate::linalg::symmetrize(&mut block);
        p_star.view_mut((start, start), (size, size)).copy_from(&block);
    }
    Ok(p_star)
}

fn reflector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    for _ in 0..MAX_REFLECTOR_DRAWS {
        let p: DVector<f64> = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
        let norm2 = p.norm_squared();
        if norm2.sqrt() >= MIN_REFLECTOR_NORM {
            return Ok(DMatrix::identity(n, n) - &p * p.transpose() * (2.0 / norm2));
        }
    }
    Err(Error::DegeneratePVector)
}

/// Draws `A*`, then `P*`, from the truth stream of `spec`.
pub fn gen_ground_truth(spec: &DatasetSpec) -> Result<GroundTruth> {
    spec.validate()?;
    let mut rng = spec.rng(STREAM_TRUTH);
    let a_star = gen_transition(spec, &mut rng);
    let p_star = gen_precision(spec, &mut rng)?;
    let q_star = spd_inverse(&p_star, "P*")?;
    Ok(GroundTruth {
        a_star,
        p_star,
        q_star,
        spec: spec.clone(),
    })
}

fn gaussian<R: Rng + ?Sized>(
    mean: &DVector<f64>,
    chol_l: &DMatrix<f64>,
    rng: &mut R,
) -> DVector<f64> {
    let z = DVector::from_fn(mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    mean + chol_l * z
}

/// Simulates `x_0 ~ N(mu0, Sigma0)`, `x_k = A* x_{k-1} + q_k` and
/// `y_k = H_k x_k + r_k`.
pub fn simulate<R: Rng + ?Sized>(
    gt: &GroundTruth,
    fixed: &FixedParams,
    k_len: usize,
    rng: &mut R,
) -> Result<TimeSeries> {
    fixed.validate(k_len)?;
    let nx = gt.a_star.nrows();
    let ny = fixed.ny();
    let l0 = cholesky(&fixed.sigma0, "Sigma0")?.l();
    let lq = cholesky(&gt.q_star, "Q*")?.l();
    let lr: Vec<DMatrix<f64>> = fixed
        .r
        .iter()
        .map(|r| cholesky(r, "R").map(|c| c.l()))
        .collect::<Result<_>>()?;
    let zero_x = DVector::zeros(nx);
    let zero_y = DVector::zeros(ny);

    let mut states = Vec::with_capacity(k_len + 1);
    let mut obs = Vec::with_capacity(k_len);
    states.push(gaussian(&fixed.mu0, &l0, rng));
    for k in 1..=k_len {
        let x = &gt.a_star * &states[k - 1] + gaussian(&zero_x, &lq, rng);
        let lr_k = if lr.len() == 1 { &lr[0] } else { &lr[k - 1] };
        let y = fixed.h_at(k) * &x + gaussian(&zero_y, lr_k, rng);
        states.push(x);
        obs.push(y);
    }
    TimeSeries::with_states(obs, Some(states))
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub truth: GroundTruth,
    pub fixed: FixedParams,
    pub train: TimeSeries,
    pub test: TimeSeries,
}

/// Ground truth plus independent training and test series, each of length
/// `spec.k`.
pub fn make_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    let truth = gen_ground_truth(spec)?;
    let fixed = spec.fixed_params();
    let train = simulate(&truth, &fixed, spec.k, &mut spec.rng(STREAM_TRAIN))?;
    let test = simulate(&truth, &fixed, spec.k, &mut spec.rng(STREAM_TEST))?;
    Ok(Dataset {
        truth,
        fixed,
        train,
        test,
    })
}

pub fn make_preset(preset: Preset, seed: u64) -> Result<Dataset> {
    make_dataset(&DatasetSpec::preset(preset, seed))
}
