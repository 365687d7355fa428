//! Closed-form proximity operators used by the inner splitting solvers, and
//! the Schur-based Sylvester solver the quadratic one relies on.

use nalgebra::{DMatrix, Schur, LU, Dyn};

use crate::error::{Error, Result};
use crate::lgssm::SmoothingStats;
use crate::linalg::{relative_asymmetry, spd_inverse, symmetrize, symmetrized};

/// Input asymmetry above which `prox_logdet_trace` refuses to run.
pub const LOGDET_SYMMETRY_TOL: f64 = 1e-8;

/// Entrywise soft thresholding, the proximity operator of `gamma ‖·‖₁`.
pub fn prox_l1(v: &DMatrix<f64>, gamma: f64) -> DMatrix<f64> {
    v.map(|x| soft_threshold(x, gamma))
}

#[inline]
pub fn soft_threshold(x: f64, gamma: f64) -> f64 {
    x.signum() * (x.abs() - gamma).max(0.0)
}

enum DiagBlock {
    One { col: usize, lu: LU<f64, Dyn, Dyn> },
    Two { col: usize, lu: LU<f64, Dyn, Dyn> },
}

/// Solver for `X A + A Y = Z` with fixed `X`, `Y` and many right-hand sides.
///
/// Symmetric coefficients are diagonalized, which makes every solve an
/// entrywise division. Otherwise both are reduced to real Schur form and
/// each solve is a column sweep over the quasi-triangular form of `Y`.
pub enum SylvesterSolver {
    Symmetric {
        u: DMatrix<f64>,
        v: DMatrix<f64>,
        /// `1 / (a_i + b_j)` for eigenvalues `a` of `X` and `b` of `Y`.
        inv_denom: DMatrix<f64>,
    },
    Schur(SchurSylvester),
}

/// Sweep over Schur forms, with the shifted systems `T + s I` (or the
/// coupled 2x2-block systems) factored up front.
pub struct SchurSylvester {
    u: DMatrix<f64>,
    t: DMatrix<f64>,
    v: DMatrix<f64>,
    s: DMatrix<f64>,
    blocks: Vec<DiagBlock>,
}

/// Pivot magnitude, relative to the largest, below which a shifted system
/// is treated as singular.
const PIVOT_TOL: f64 = 1e-13;

fn lu_checked(m: DMatrix<f64>) -> Result<LU<f64, Dyn, Dyn>> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let lu = m.lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |acc, d| acc.min(d.abs()));
    if !(min_pivot > PIVOT_TOL * scale) {
        return Err(Error::SingularSylvester);
    }
    Ok(lu)
}

/// Schur iterations before giving up and using the dense solve.
const SCHUR_MAX_ITER: usize = 10_000;

impl SylvesterSolver {
    pub fn new(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        let m = y.nrows();
        if x.ncols() != n || y.ncols() != m {
            return Err(Error::DimensionMismatch(
                "Sylvester coefficients must be square".into(),
            ));
        }
        if x == &x.transpose() && y == &y.transpose() {
            let ex = x.clone().symmetric_eigen();
            let ey = y.clone().symmetric_eigen();
            let scale = ex.eigenvalues.amax().max(ey.eigenvalues.amax());
            let mut inv_denom = DMatrix::zeros(n, m);
            for i in 0..n {
                for j in 0..m {
                    let d = ex.eigenvalues[i] + ey.eigenvalues[j];
                    if !(d.abs() > PIVOT_TOL * scale) {
                        return Err(Error::SingularSylvester);
                    }
                    inv_denom[(i, j)] = 1.0 / d;
                }
            }
            return Ok(SylvesterSolver::Symmetric {
                u: ex.eigenvectors,
                v: ey.eigenvectors,
                inv_denom,
            });
        }
        SchurSylvester::new(x, y).map(SylvesterSolver::Schur)
    }

    pub fn solve(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            SylvesterSolver::Symmetric { u, v, inv_denom } => {
                if z.shape() != inv_denom.shape() {
                    return Err(Error::DimensionMismatch(format!(
                        "right-hand side is {}x{}, expected {}x{}",
                        z.nrows(),
                        z.ncols(),
                        inv_denom.nrows(),
                        inv_denom.ncols()
                    )));
                }
                let c = (u.transpose() * z * v).component_mul(inv_denom);
                Ok(u * c * v.transpose())
            }
            SylvesterSolver::Schur(s) => s.solve(z),
        }
    }
}

impl SchurSylvester {
    fn new(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Self> {
        let n = x.nrows();
        let m = y.nrows();
        let schur = |a: &DMatrix<f64>| {
            Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER)
                .map(Schur::unpack)
                .ok_or(Error::SingularSylvester)
        };
        let (u, t) = schur(x)?;
        let (v, s) = schur(y)?;

        let mut blocks = Vec::new();
        let eye = DMatrix::<f64>::identity(n, n);
        let mut j = 0;
        while j < m {
            let coupled = j + 1 < m && s[(j + 1, j)] != 0.0;
            if coupled {
                if j + 2 < m && s[(j + 2, j + 1)] != 0.0 {
                    // Not a proper quasi-triangular form; callers fall back
                    // to the dense solve.
                    return Err(Error::SingularSylvester);
                }
                let mut big = DMatrix::zeros(2 * n, 2 * n);
                big.view_mut((0, 0), (n, n))
                    .copy_from(&(&t + &eye * s[(j, j)]));
                big.view_mut((0, n), (n, n))
                    .copy_from(&(&eye * s[(j + 1, j)]));
                big.view_mut((n, 0), (n, n))
                    .copy_from(&(&eye * s[(j, j + 1)]));
                big.view_mut((n, n), (n, n))
                    .copy_from(&(&t + &eye * s[(j + 1, j + 1)]));
                blocks.push(DiagBlock::Two {
                    col: j,
                    lu: lu_checked(big)?,
                });
                j += 2;
            } else {
                blocks.push(DiagBlock::One {
                    col: j,
                    lu: lu_checked(&t + &eye * s[(j, j)])?,
                });
                j += 1;
            }
        }
        Ok(Self { u, t, v, s, blocks })
    }

    fn solve(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.t.nrows();
        let m = self.s.nrows();
        if z.nrows() != n || z.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side is {}x{}, expected {n}x{m}",
                z.nrows(),
                z.ncols()
            )));
        }
        let c = self.u.transpose() * z * &self.v;
        let mut b = DMatrix::<f64>::zeros(n, m);
        for block in &self.blocks {
            match block {
                DiagBlock::One { col, lu } => {
                    let j = *col;
                    let mut rhs = c.column(j).into_owned();
                    for i in 0..j {
                        rhs -= b.column(i) * self.s[(i, j)];
                    }
                    let sol = lu.solve(&rhs).ok_or(Error::SingularSylvester)?;
                    b.set_column(j, &sol);
                }
                DiagBlock::Two { col, lu } => {
                    let j = *col;
                    let mut rhs = nalgebra::DVector::zeros(2 * n);
                    for (off, jj) in [(0, j), (n, j + 1)] {
                        let mut r = c.column(jj).into_owned();
                        for i in 0..j {
                            r -= b.column(i) * self.s[(i, jj)];
                        }
                        rhs.rows_mut(off, n).copy_from(&r);
                    }
                    let sol = lu.solve(&rhs).ok_or(Error::SingularSylvester)?;
                    b.set_column(j, &sol.rows(0, n));
                    b.set_column(j + 1, &sol.rows(n, n));
                }
            }
        }
        Ok(&self.u * b * self.v.transpose())
    }
}

/// Dense Kronecker-vectorized solve of `X A + A Y = Z`.
fn solve_sylvester_dense(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let m = y.nrows();
    let mut big = DMatrix::zeros(n * m, n * m);
    // Column-major vec: vec(XA) = (I ⊗ X) vec(A), vec(AY) = (Yᵀ ⊗ I) vec(A).
    for j in 0..m {
        for l in 0..m {
            for i in 0..n {
                for k in 0..n {
                    let mut v = 0.0;
                    if j == l {
                        v += x[(i, k)];
                    }
                    if i == k {
                        v += y[(l, j)];
                    }
                    big[(j * n + i, l * n + k)] = v;
                }
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(z.as_slice());
    let sol = lu_checked(big)?
        .solve(&rhs)
        .ok_or(Error::SingularSylvester)?;
    Ok(DMatrix::from_column_slice(n, m, sol.as_slice()))
}

/// Solves `X A + A Y = Z` by a Bartels-Stewart sweep.
pub fn solve_lyapunov(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    match SylvesterSolver::new(x, y) {
        Ok(solver) => solver.solve(z),
        Err(Error::SingularSylvester) => solve_sylvester_dense(x, y, z),
        Err(e) => Err(e),
    }
}

/// Fixed data of the quadratic trace term
/// `tr(-P Δ Wᵀ - P W Δᵀ + P W Φ Wᵀ)`.
#[derive(Debug, Clone)]
pub struct QuadStats {
    pub pt: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub phi: DMatrix<f64>,
}

impl QuadStats {
    pub fn new(pt: DMatrix<f64>, delta: DMatrix<f64>, phi: DMatrix<f64>) -> Self {
        Self { pt, delta, phi }
    }

    pub fn from_stats(pt: &DMatrix<f64>, stats: &SmoothingStats) -> Self {
        Self::new(pt.clone(), stats.delta.clone(), stats.phi.clone())
    }

    /// `tr(-P Δ Wᵀ - P W Δᵀ + P W Φ Wᵀ)`.
    pub fn value(&self, w: &DMatrix<f64>) -> f64 {
        // tr(P Δ Wᵀ) = <PΔ, W> = tr(P W Δᵀ); tr(P W Φ Wᵀ) = <PW, WΦ>.
        let quad = (&self.pt * w).component_mul(&(w * &self.phi)).sum();
        -2.0 * (&self.pt * &self.delta).component_mul(w).sum() + quad
    }
}

/// The quadratic-trace prox at a fixed scale, with the Sylvester operator
/// factored once so repeated evaluations cost one back-substitution each.
pub struct QuadProx {
    pt_inv: DMatrix<f64>,
    shift: DMatrix<f64>,
    solver: SylvesterSolver,
}

impl QuadProx {
    pub fn new(stats: &QuadStats, gamma: f64) -> Result<Self> {
        let pt_inv = spd_inverse(&stats.pt, "P~")?;
        let y = &stats.phi * (2.0 * gamma);
        let solver = SylvesterSolver::new(&pt_inv, &y)?;
        Ok(Self {
            pt_inv,
            shift: &stats.delta * (2.0 * gamma),
            solver,
        })
    }

    /// Minimizer of `gamma q(W) + ½‖W − W̃‖²` for the trace term `q`.
    ///
    /// Stationarity reads `P⁻¹ Z + Z (2γΦ) = 2γΔ + P⁻¹ W̃`.
    pub fn apply(&self, wt: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let rhs = &self.shift + &self.pt_inv * wt;
        self.solver.solve(&rhs)
    }
}

pub fn prox_quad_trace(wt: &DMatrix<f64>, stats: &QuadStats, gamma: f64) -> Result<DMatrix<f64>> {
    let out = QuadProx::new(stats, gamma)?.apply(wt)?;
    debug_assert!({
        let (res, scale) = quad_trace_residual(&out, wt, stats, gamma);
        res <= 1e-8 * scale
    });
    Ok(out)
}

/// First-order optimality residual of the quadratic prox, premultiplied by
/// `P⁻¹`: `−2γΔ + 2γ Z Φ + P⁻¹ Z − P⁻¹ W̃`. Returns the residual norm and
/// the magnitude of the largest term, for relative checks.
pub fn quad_trace_residual(
    z: &DMatrix<f64>,
    wt: &DMatrix<f64>,
    stats: &QuadStats,
    gamma: f64,
) -> (f64, f64) {
    let pinv = stats.pt.clone().try_inverse().unwrap_or_else(|| {
        DMatrix::from_element(stats.pt.nrows(), stats.pt.ncols(), f64::NAN)
    });
    let t1 = &stats.delta * (2.0 * gamma);
    let t2 = z * &stats.phi * (2.0 * gamma);
    let t3 = &pinv * z;
    let t4 = &pinv * wt;
    let res = (-&t1 + &t2 + &t3 - &t4).norm();
    let scale = [t1.norm(), t2.norm(), t3.norm(), t4.norm(), 1.0]
        .into_iter()
        .fold(0.0, f64::max);
    (res, scale)
}

/// Symmetric matrix playing the role of an empirical covariance in the
/// precision update: `Ψ − Δ Aᵀ − A Δᵀ + A Φ Aᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PiMatrix(DMatrix<f64>);

impl PiMatrix {
    pub fn new(pi: DMatrix<f64>) -> Result<Self> {
        let asym = relative_asymmetry(&pi);
        if asym > 1e-12 {
            return Err(Error::SymmetryViolation(asym));
        }
        let pi = symmetrized(pi);
        let n = pi.nrows() as f64;
        let min_eig = pi
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -1e-8 * pi.trace().abs() / n {
            log::warn!("Pi has a negative eigenvalue {min_eig:.3e}");
        }
        Ok(Self(pi))
    }

    pub fn from_stats(stats: &SmoothingStats, a: &DMatrix<f64>) -> Result<Self> {
        Self::new(stats.residual_second_moment(a))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Proximity operator of `W ↦ γ(−log det W + tr(W Π))` on symmetric matrices.
///
/// Eigendecomposing `W̃ − γΠ = U diag(ω) Uᵀ`, the result is
/// `U diag(½(ω + √(ω² + 4γ))) Uᵀ`, which is positive definite for any input.
pub fn prox_logdet_trace(wt: &DMatrix<f64>, pi: &PiMatrix, gamma: f64) -> Result<DMatrix<f64>> {
    let asym = relative_asymmetry(wt);
    if asym > LOGDET_SYMMETRY_TOL {
        return Err(Error::SymmetryViolation(asym));
    }
    let mut m = wt - pi.matrix() * gamma;
    symmetrize(&mut m);
    let eig = m.symmetric_eigen();
    let mapped = eig.eigenvalues.map(|w| logdet_eigen_map(w, gamma));
    let u = eig.eigenvectors;
    let mut out = &u * DMatrix::from_diagonal(&mapped) * u.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// `½(ω + √(ω² + 4γ))`, evaluated without cancellation for negative ω.
#[inline]
pub fn logdet_eigen_map(omega: f64, gamma: f64) -> f64 {
    let root = (omega * omega + 4.0 * gamma).sqrt();
    if omega >= 0.0 {
        0.5 * (omega + root)
    } else {
        2.0 * gamma / (root - omega)
    }
}

/// `−γ Z⁻¹ + γ Π + Z − W̃`.
pub fn logdet_trace_residual(z: &DMatrix<f64>, wt: &DMatrix<f64>, pi: &PiMatrix, gamma: f64) -> f64 {
    match z.clone().try_inverse() {
        Some(zi) => (-(zi * gamma) + pi.matrix() * gamma + z - wt).norm(),
        None => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn rand_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let b = rand_mat(rng, n);
        &b * b.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(prox_l1(&DMatrix::from_element(1, 1, 2.5), 1.0)[(0, 0)], 1.5);
        assert_eq!(prox_l1(&DMatrix::from_element(1, 1, -0.5), 1.0)[(0, 0)], 0.0);
        let v = DMatrix::from_row_slice(2, 2, &[3.0, -2.0, 0.1, -4.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[2.5, -1.5, 0.0, -3.5]);
        assert_eq!(prox_l1(&v, 0.5), expected);
    }

    #[test]
    fn sylvester_scalar_and_identity() {
        let a = solve_lyapunov(
            &DMatrix::from_element(1, 1, 2.0),
            &DMatrix::from_element(1, 1, 3.0),
            &DMatrix::from_element(1, 1, 10.0),
        )
        .unwrap();
        assert!((a[(0, 0)] - 2.0).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = rand_mat(&mut rng, 3);
        let a = solve_lyapunov(&DMatrix::identity(3, 3), &DMatrix::zeros(3, 3), &z).unwrap();
        assert!((a - z).norm() < 1e-14);
    }

    #[test]
    fn sylvester_nonsymmetric_matches_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            // Rotation-like blocks give complex eigenvalue pairs.
            let x = rand_mat(&mut rng, 4) * 2.0 + DMatrix::identity(4, 4) * 5.0;
            let y = rand_mat(&mut rng, 4) * 2.0 + DMatrix::identity(4, 4) * 4.0;
            let z = rand_mat(&mut rng, 4);
            let a = solve_lyapunov(&x, &y, &z).unwrap();
            let res = (&x * &a + &a * &y - &z).norm() / z.norm();
            assert!(res < 1e-10, "residual {res}");
            let dense = solve_sylvester_dense(&x, &y, &z).unwrap();
            assert!((a - dense).norm() < 1e-10);
        }
    }

    #[test]
    fn sylvester_detects_singular_operator() {
        let x = DMatrix::from_element(1, 1, 1.0);
        let y = DMatrix::from_element(1, 1, -1.0);
        let z = DMatrix::from_element(1, 1, 1.0);
        assert!(matches!(
            solve_lyapunov(&x, &y, &z),
            Err(Error::SingularSylvester)
        ));
    }

    #[test]
    fn quad_prox_scalar_closed_form() {
        let stats = QuadStats::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        );
        let z = prox_quad_trace(&DMatrix::zeros(1, 1), &stats, 1.0).unwrap();
        assert!((z[(0, 0)] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn quad_prox_without_data_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stats = QuadStats::new(rand_spd(&mut rng, 3), DMatrix::zeros(3, 3), DMatrix::zeros(3, 3));
        let wt = rand_mat(&mut rng, 3);
        let z = prox_quad_trace(&wt, &stats, 0.7).unwrap();
        assert!((z - wt).norm() < 1e-12);
    }

    /// The prox computed with Ψ in place of Φ, kept to show that reading is
    /// not the minimizer of the stated objective.
    fn prox_quad_trace_psi_reading(
        wt: &DMatrix<f64>,
        pt: &DMatrix<f64>,
        delta: &DMatrix<f64>,
        psi: &DMatrix<f64>,
        gamma: f64,
    ) -> DMatrix<f64> {
        QuadProx::new(&QuadStats::new(pt.clone(), delta.clone(), psi.clone()), gamma)
            .unwrap()
            .apply(wt)
            .unwrap()
    }

    #[test]
    fn psi_reading_differs_from_phi_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pt = rand_spd(&mut rng, 3);
        let delta = rand_mat(&mut rng, 3);
        let phi = rand_spd(&mut rng, 3);
        let psi = rand_spd(&mut rng, 3);
        let wt = rand_mat(&mut rng, 3);
        let stats = QuadStats::new(pt.clone(), delta.clone(), phi);
        let good = prox_quad_trace(&wt, &stats, 0.8).unwrap();
        let alt = prox_quad_trace_psi_reading(&wt, &pt, &delta, &psi, 0.8);
        let obj = |w: &DMatrix<f64>| 0.8 * stats.value(w) + 0.5 * (w - &wt).norm_squared();
        assert!(obj(&good) < obj(&alt));
    }

    #[test]
    fn logdet_prox_scalar_examples() {
        let pi0 = PiMatrix::new(DMatrix::zeros(1, 1)).unwrap();
        let z = prox_logdet_trace(&DMatrix::zeros(1, 1), &pi0, 1.0).unwrap();
        assert!((z[(0, 0)] - 1.0).abs() < 1e-15);

        let pi1 = PiMatrix::new(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let z = prox_logdet_trace(&DMatrix::from_element(1, 1, 3.0), &pi1, 1.0).unwrap();
        let zz = z[(0, 0)];
        assert!((zz - (1.0 + 2f64.sqrt())).abs() < 1e-12);
        assert!((-1.0 / zz + 1.0 + zz - 3.0).abs() < 1e-12);
    }

    #[test]
    fn logdet_prox_rejects_asymmetric_input() {
        let pi = PiMatrix::new(DMatrix::identity(2, 2)).unwrap();
        let wt = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(matches!(
            prox_logdet_trace(&wt, &pi, 1.0),
            Err(Error::SymmetryViolation(_))
        ));
    }

    #[test]
    fn eigen_map_is_stable_for_large_negative_omega() {
        let v = logdet_eigen_map(-1e9, 1.0);
        assert!(v > 0.0);
        assert!((v - 1e-9).abs() < 1e-20);
    }
}
