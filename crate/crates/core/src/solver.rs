//! Outer block-alternating majorize-minimize loop and its degenerate modes.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inner::{solve_a_update, solve_p_update, InnerConfig};
use crate::lgssm::{stats_and_negloglik, FixedParams, ModelParams, SmoothingStats, TimeSeries};
use crate::linalg::{cap_singular_values, check_square, is_spd, l1_norm, logdet_spd, spd_inverse, trace_of_product};

/// Relative loss increase between outer iterations that aborts a fit.
pub const DIVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    /// Both blocks with their ℓ₁ penalties.
    Dglasso,
    /// Unpenalized closed-form updates.
    Mlem,
    /// Transition updates only, precision held at its initial value.
    AOnly,
    /// Precision updates only, transition pinned to zero.
    POnly,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "dglasso" => Ok(Mode::Dglasso),
            "mlem" => Ok(Mode::Mlem),
            "a_only" | "graphem" => Ok(Mode::AOnly),
            "p_only" | "glasso" => Ok(Mode::POnly),
            other => Err(Error::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Dglasso => "DGLASSO",
            Mode::Mlem => "MLEM",
            Mode::AOnly => "A_ONLY",
            Mode::POnly => "P_ONLY",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda_a: f64,
    pub lambda_p: f64,
    pub theta_a: f64,
    pub theta_p: f64,
    /// Relative iterate change below which the loop stops.
    pub epsilon: f64,
    pub max_outer: usize,
    pub inner: InnerConfig,
    pub mode: Mode,
    pub init_a: DMatrix<f64>,
    pub init_p: DMatrix<f64>,
}

impl SolverConfig {
    /// Default settings for `nx` states: unit stepsizes, `epsilon = 1e-3`,
    /// 50 outer iterations and the default starting point.
    pub fn new(nx: usize, mode: Mode, lambda_a: f64, lambda_p: f64) -> Self {
        let (init_a, init_p) = default_init(nx);
        Self {
            lambda_a,
            lambda_p,
            theta_a: 1.0,
            theta_p: 1.0,
            epsilon: 1e-3,
            max_outer: 50,
            inner: InnerConfig::default(),
            mode,
            init_a,
            init_p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.lambda_a >= 0.0 && self.lambda_p >= 0.0) {
            return bad("penalties must be nonnegative");
        }
        if !(self.theta_a > 0.0 && self.theta_p > 0.0) {
            return bad("stepsizes theta must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.max_outer == 0 {
            return bad("max_outer must be at least 1");
        }
        self.inner.validate()?;
        let nx = self.init_a.nrows();
        check_square(&self.init_a, nx, "init_A")?;
        check_square(&self.init_p, nx, "init_P")?;
        if !is_spd(&self.init_p) {
            return Err(Error::NonSpd("init_P".into()));
        }
        Ok(())
    }
}

/// `P = 0.1 I` and `A` with entries `0.1^|n-m|`, singular values capped
/// at 0.99.
pub fn default_init(nx: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let a = DMatrix::from_fn(nx, nx, |i, j| 0.1f64.powi((i as i32 - j as i32).abs()));
    (cap_singular_values(&a, 0.99), DMatrix::identity(nx, nx) * 0.1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub a_hat: DMatrix<f64>,
    pub p_hat: DMatrix<f64>,
    pub q_hat: DMatrix<f64>,
    /// Penalized loss at the start and after every outer iteration.
    pub loss_trace: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Inner solves that needed the proximal-gradient fallback.
    pub inner_fallbacks: usize,
    pub wall_time_seconds: f64,
}

/// `-log p(y | A, P) + λ_A ‖A‖₁ + λ_P ‖P‖₁`.
pub fn evaluate_loss(
    a: &DMatrix<f64>,
    p: &DMatrix<f64>,
    series: &TimeSeries,
    fixed: &FixedParams,
    lambda_a: f64,
    lambda_p: f64,
) -> Result<f64> {
    let params = ModelParams::new(a.clone(), p.clone(), fixed.clone());
    let nll = crate::lgssm::marginal_negloglik(&params, series)?;
    Ok(nll + penalty(a, p, lambda_a, lambda_p))
}

fn penalty(a: &DMatrix<f64>, p: &DMatrix<f64>, lambda_a: f64, lambda_p: f64) -> f64 {
    // Skip zero weights so that infinite entries cannot produce NaN.
    let mut acc = 0.0;
    if lambda_a != 0.0 {
        acc += lambda_a * l1_norm(a);
    }
    if lambda_p != 0.0 {
        acc += lambda_p * l1_norm(p);
    }
    acc
}

/// `(K/2) tr(P (Ψ − ΔAᵀ − AΔᵀ + AΦAᵀ)) − (K/2) log det(2πP)`, or `+∞` when
/// `P` is not positive definite.
pub fn evaluate_majorizer(
    a: &DMatrix<f64>,
    p: &DMatrix<f64>,
    stats: &SmoothingStats,
    horizon: usize,
) -> f64 {
    let Some(logdet) = logdet_spd(p) else {
        return f64::INFINITY;
    };
    let n = p.nrows() as f64;
    let half_k = 0.5 * horizon as f64;
    let pi = stats.residual_second_moment(a);
    half_k * trace_of_product(p, &pi) - half_k * (n * (2.0 * std::f64::consts::PI).ln() + logdet)
}

/// Relative loss increase above which an outer step counts against the
/// process-wide descent audit.
pub const DESCENT_AUDIT_SLACK: f64 = 1e-9;

static AUDITED_FITS: AtomicUsize = AtomicUsize::new(0);
static DESCENT_VIOLATIONS: AtomicUsize = AtomicUsize::new(0);
static WORST_INCREASE_BITS: AtomicU64 = AtomicU64::new(0);

/// Descent statistics over every outer step taken by `fit` in this process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentAudit {
    pub fits: usize,
    pub violations: usize,
    /// Largest relative loss increase seen, 0 if the loss never rose.
    pub worst_relative_increase: f64,
}

pub fn descent_audit() -> DescentAudit {
    DescentAudit {
        fits: AUDITED_FITS.load(Ordering::SeqCst),
        violations: DESCENT_VIOLATIONS.load(Ordering::SeqCst),
        worst_relative_increase: f64::from_bits(WORST_INCREASE_BITS.load(Ordering::SeqCst)),
    }
}

fn audit_step(before: f64, after: f64) {
    let rel = (after - before) / before.abs().max(f64::MIN_POSITIVE);
    if rel > 0.0 {
        // Nonnegative floats order like their bit patterns.
        WORST_INCREASE_BITS.fetch_max(rel.to_bits(), Ordering::SeqCst);
    }
    if rel > DESCENT_AUDIT_SLACK {
        DESCENT_VIOLATIONS.fetch_add(1, Ordering::SeqCst);
    }
}

/// Runs the outer loop from `cfg.init_a`, `cfg.init_p`.
///
/// Each iteration computes the smoothing statistics at the current point,
/// updates `A`, recomputes the statistics at the new `A` and updates `P`.
/// The loss after each iteration must not rise by more than
/// `DIVERGENCE_TOL` relative, otherwise the fit aborts.
pub fn fit(series: &TimeSeries, fixed: &FixedParams, cfg: &SolverConfig) -> Result<FitResult> {
    let start = Instant::now();
    cfg.validate()?;
    let nx = cfg.init_a.nrows();
    if fixed.nx() != nx {
        return Err(Error::DimensionMismatch(format!(
            "model has {} states, initial A is {nx}x{nx}",
            fixed.nx()
        )));
    }
    fixed.validate(series.len())?;
    let horizon = series.len();
    let (lambda_a, lambda_p) = match cfg.mode {
        Mode::Mlem => (0.0, 0.0),
        _ => (cfg.lambda_a, cfg.lambda_p),
    };

    let mut a = match cfg.mode {
        Mode::POnly => DMatrix::zeros(nx, nx),
        _ => cfg.init_a.clone(),
    };
    let mut p = cfg.init_p.clone();
    let stats_at = |a: &DMatrix<f64>, p: &DMatrix<f64>| {
        stats_and_negloglik(&ModelParams::new(a.clone(), p.clone(), fixed.clone()), series)
    };

    let (mut stats, nll) = stats_at(&a, &p)?;
    AUDITED_FITS.fetch_add(1, Ordering::SeqCst);
    let mut loss_trace = vec![nll + penalty(&a, &p, lambda_a, lambda_p)];
    let mut converged = false;
    let mut inner_fallbacks = 0;
    let mut iterations = 0;

    while iterations < cfg.max_outer {
        iterations += 1;
        let a_prev = a.clone();
        let p_prev = p.clone();

        if cfg.mode != Mode::POnly {
            a = match cfg.mode {
                Mode::Mlem => mlem_transition(&stats)?,
                _ => {
                    let res = solve_a_update(&a, &p, &stats, lambda_a, cfg.theta_a, horizon, &cfg.inner)?;
                    inner_fallbacks += res.fallback_used as usize;
                    res.solution
                }
            };
        }
        if cfg.mode != Mode::AOnly {
            if cfg.mode != Mode::POnly {
                stats = stats_at(&a, &p)?.0;
            }
            p = match cfg.mode {
                Mode::Mlem => spd_inverse(&stats.residual_second_moment(&a), "MLEM precision update")?,
                _ => {
                    let res = solve_p_update(&a, &p, &stats, lambda_p, cfg.theta_p, horizon, &cfg.inner)?;
                    inner_fallbacks += res.fallback_used as usize;
                    res.solution
                }
            };
        }

        let (next_stats, nll) = stats_at(&a, &p)?;
        stats = next_stats;
        let loss = nll + penalty(&a, &p, lambda_a, lambda_p);
        let before = *loss_trace.last().expect("trace starts nonempty");
        audit_step(before, loss);
        if loss - before > DIVERGENCE_TOL * before.abs() {
            return Err(Error::DivergenceDetected {
                iteration: iterations,
                before,
                after: loss,
            });
        }
        loss_trace.push(loss);

        let small = |new: &DMatrix<f64>, old: &DMatrix<f64>| (new - old).norm() <= cfg.epsilon * old.norm();
        if small(&a, &a_prev) && small(&p, &p_prev) {
            converged = true;
            break;
        }
    }

    let q_hat = spd_inverse(&p, "P_hat")?;
    Ok(FitResult {
        a_hat: a,
        p_hat: p,
        q_hat,
        loss_trace,
        outer_iterations: iterations,
        converged,
        inner_fallbacks,
        wall_time_seconds: start.elapsed().as_secs_f64(),
    })
}

/// `A = Δ Φ⁻¹`, through a Cholesky solve of `Φ Aᵀ = Δᵀ`.
fn mlem_transition(stats: &SmoothingStats) -> Result<DMatrix<f64>> {
    let chol = crate::linalg::cholesky(&stats.phi, "Phi")?;
    Ok(chol.solve(&stats.delta.transpose()).transpose())
}
