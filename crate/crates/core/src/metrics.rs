//! Recovery errors, edge-detection scores and state-inference errors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::GroundTruth;
use crate::error::{Error, Result};
use crate::lgssm::{kalman_filter, rts_smoother, FixedParams, ModelParams, TimeSeries};

/// Magnitude above which an entry counts as an edge.
pub const EDGE_THRESHOLD: f64 = 1e-10;

/// `‖M* − M̂‖²_F / ‖M*‖²_F`, without a square root.
pub fn rmse(m_star: &DMatrix<f64>, m_hat: &DMatrix<f64>) -> Result<f64> {
    if m_star.shape() != m_hat.shape() {
        return Err(Error::DimensionMismatch("rmse arguments differ in shape".into()));
    }
    let denom = m_star.norm_squared();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((m_star - m_hat).norm_squared() / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeScores {
    /// `None` when the ground truth has a single class.
    pub auc: Option<f64>,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub specificity: f64,
    pub accuracy: f64,
    pub threshold: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Support-recovery scores of `m_hat` against `m_star`.
///
/// The AUC sweeps a detection threshold over `|m_hat|`; it is computed as
/// the Mann-Whitney statistic with average ranks for ties.
pub fn edge_scores(
    m_star: &DMatrix<f64>,
    m_hat: &DMatrix<f64>,
    threshold: f64,
    include_diagonal: bool,
) -> Result<EdgeScores> {
    if m_star.shape() != m_hat.shape() {
        return Err(Error::DimensionMismatch(
            "edge_scores arguments differ in shape".into(),
        ));
    }
    let mut truth = Vec::new();
    let mut scores = Vec::new();
    for j in 0..m_star.ncols() {
        for i in 0..m_star.nrows() {
            if i == j && !include_diagonal {
                continue;
            }
            truth.push(m_star[(i, j)].abs() > threshold);
            scores.push(m_hat[(i, j)].abs());
        }
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&t, &s) in truth.iter().zip(&scores) {
        match (t, s > threshold) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
            (true, false) => fn_ += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EdgeScores {
        auc: auc(&truth, &scores).ok(),
        f1,
        precision,
        recall,
        specificity: ratio(tn, tn + fp),
        accuracy: ratio(tp + tn, truth.len()),
        threshold,
    })
}

/// Area under the ROC curve of `scores` for the binary labels `truth`.
pub fn auc(truth: &[bool], scores: &[f64]) -> Result<f64> {
    let n_pos = truth.iter().filter(|t| **t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their average.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if truth[idx] {
                rank_sum_pos += avg;
            }
        }
        i = j + 1;
    }
    let np = n_pos as f64;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * n_neg as f64))
}

/// `Σ‖ref_k − est_k‖² / Σ‖ref_k‖²`.
pub fn cnmse(reference: &[DVector<f64>], estimate: &[DVector<f64>]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::DimensionMismatch(format!(
            "cnmse sequences have lengths {} and {}",
            reference.len(),
            estimate.len()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (r, e) in reference.iter().zip(estimate) {
        if r.len() != e.len() {
            return Err(Error::DimensionMismatch("cnmse vectors differ in length".into()));
        }
        num += (r - e).norm_squared();
        den += r.norm_squared();
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(num / den)
}

/// Whether the diagonal counts toward the edge scores of each matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeOptions {
    pub include_diagonal_a: bool,
    pub include_diagonal_p: bool,
}

impl Default for EdgeOptions {
    fn default() -> Self {
        Self {
            include_diagonal_a: true,
            include_diagonal_p: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse_a: f64,
    pub rmse_p: f64,
    pub rmse_q: f64,
    pub edges_a: EdgeScores,
    pub edges_p: EdgeScores,
    /// Filtered means under the estimate against those under the truth.
    pub cnmse_filter: f64,
    pub cnmse_smooth: f64,
    /// Predicted observation means.
    pub cnmse_pred: f64,
    pub test_negloglik: f64,
}

impl MetricsReport {
    /// Column names of `to_row`, in order.
    pub const COLUMNS: [&'static str; 11] = [
        "rmse_a",
        "rmse_p",
        "auc_a",
        "auc_p",
        "f1_a",
        "f1_p",
        "rmse_q",
        "cnmse_filter",
        "cnmse_smooth",
        "cnmse_pred",
        "test_negloglik",
    ];

    /// Flat values matching `COLUMNS`; an undefined AUC is NaN.
    pub fn to_row(&self) -> [f64; 11] {
        [
            self.rmse_a,
            self.rmse_p,
            self.edges_a.auc.unwrap_or(f64::NAN),
            self.edges_p.auc.unwrap_or(f64::NAN),
            self.edges_a.f1,
            self.edges_p.f1,
            self.rmse_q,
            self.cnmse_filter,
            self.cnmse_smooth,
            self.cnmse_pred,
            self.test_negloglik,
        ]
    }
}

/// Runs the filter and smoother on `test` under the true and the estimated
/// parameters and compares everything.
pub fn evaluate(
    gt: &GroundTruth,
    a_hat: &DMatrix<f64>,
    p_hat: &DMatrix<f64>,
    fixed: &FixedParams,
    test: &TimeSeries,
    opts: EdgeOptions,
) -> Result<MetricsReport> {
    let q_hat = crate::linalg::spd_inverse(p_hat, "P_hat")?;
    let truth = ModelParams::new(gt.a_star.clone(), gt.p_star.clone(), fixed.clone());
    let est = ModelParams::new(a_hat.clone(), p_hat.clone(), fixed.clone());

    let filt_star = kalman_filter(&truth, test)?;
    let smooth_star = rts_smoother(&truth, &filt_star)?;
    let filt_hat = kalman_filter(&est, test)?;
    let smooth_hat = rts_smoother(&est, &filt_hat)?;

    // Time 0 is the shared prior, so only k = 1..K are compared.
    let means = |beliefs: &[crate::lgssm::GaussianBelief]| -> Vec<DVector<f64>> {
        beliefs[1..].iter().map(|b| b.mean.clone()).collect()
    };

    Ok(MetricsReport {
        rmse_a: rmse(&gt.a_star, a_hat)?,
        rmse_p: rmse(&gt.p_star, p_hat)?,
        rmse_q: rmse(&gt.q_star, &q_hat)?,
        edges_a: edge_scores(&gt.a_star, a_hat, EDGE_THRESHOLD, opts.include_diagonal_a)?,
        edges_p: edge_scores(&gt.p_star, p_hat, EDGE_THRESHOLD, opts.include_diagonal_p)?,
        cnmse_filter: cnmse(&means(&filt_star.filtered), &means(&filt_hat.filtered))?,
        cnmse_smooth: cnmse(&means(&smooth_star.smoothed), &means(&smooth_hat.smoothed))?,
        cnmse_pred: cnmse(&filt_star.innovation_means, &filt_hat.innovation_means)?,
        test_negloglik: filt_hat.neg_loglik,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_examples() {
        let eye = DMatrix::<f64>::identity(2, 2);
        assert_eq!(rmse(&eye, &eye).unwrap(), 0.0);
        assert_eq!(rmse(&eye, &DMatrix::zeros(2, 2)).unwrap(), 1.0);
        let half = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(rmse(&eye, &half).unwrap(), 0.5);
        assert!(matches!(
            rmse(&DMatrix::zeros(2, 2), &eye),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn cnmse_examples() {
        let r = vec![DVector::from_vec(vec![1.0, -2.0]), DVector::from_vec(vec![0.5, 3.0])];
        let zero: Vec<_> = r.iter().map(|v| v * 0.0).collect();
        let twice: Vec<_> = r.iter().map(|v| v * 2.0).collect();
        assert_eq!(cnmse(&r, &r).unwrap(), 0.0);
        assert_eq!(cnmse(&r, &zero).unwrap(), 1.0);
        assert_eq!(cnmse(&r, &twice).unwrap(), 1.0);
    }

    #[test]
    fn perfect_support_scores_one() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.2, 0.0, 1.0, 0.0, 0.0, 0.3, 1.0]);
        let s = edge_scores(&m, &(&m * 2.0), EDGE_THRESHOLD, true).unwrap();
        assert_eq!((s.precision, s.recall, s.f1, s.auc), (1.0, 1.0, 1.0, Some(1.0)));
    }

    #[test]
    fn dense_estimate_against_third_density() {
        let mut truth = DMatrix::zeros(9, 9);
        for b in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    truth[(3 * b + i, 3 * b + j)] = 0.5;
                }
            }
        }
        let dense = DMatrix::from_element(9, 9, 0.1);
        let s = edge_scores(&truth, &dense, EDGE_THRESHOLD, true).unwrap();
        assert_eq!(s.f1, 0.5);
        assert_eq!(s.recall, 1.0);
        // Every score ties, so the ROC is the diagonal.
        assert_eq!(s.auc, Some(0.5));
    }

    #[test]
    fn single_class_has_no_auc() {
        let truth = DMatrix::from_element(2, 2, 1.0);
        let s = edge_scores(&truth, &truth, EDGE_THRESHOLD, true).unwrap();
        assert_eq!(s.auc, None);
        assert!(matches!(auc(&[true, true], &[0.1, 0.2]), Err(Error::DegenerateClass)));
    }
}
