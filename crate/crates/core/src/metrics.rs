//! Evaluation metrics: AUROC, consensus error, and the stationarity proxy.

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::l2;
use crate::objective::{MinMaxProblem, ObjectiveError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("AUROC needs both classes present")]
    SingleClass,
    #[error("scores and labels must have equal length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// AUROC via the rank-sum statistic: the fraction of (positive, negative)
/// pairs ranked correctly, ties counted one half. O(n log n).
pub fn auroc(scores: &Array1<f64>, labels: &Array1<f64>) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    let n = scores.len();
    let n_pos = labels.iter().filter(|&&l| l > 0.0).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));

    // Average ranks across tied score groups, then sum positive ranks.
    let mut rank_sum_pos = 0.0;
    let mut start = 0usize;
    while start < n {
        let mut end = start + 1;
        while end < n && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start..end share the average rank.
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            if labels[idx] > 0.0 {
                rank_sum_pos += avg_rank;
            }
        }
        start = end;
    }

    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Consensus errors of the whole network:
/// `(||X - X_bar||_F^2, ||Y - Y_bar||_F^2)`.
pub fn consensus_error(network: &crate::optimizer::Network) -> (f64, f64) {
    let xs: Vec<Array1<f64>> = network.agents.iter().map(|a| a.x.clone()).collect();
    let ys: Vec<Array1<f64>> = network.agents.iter().map(|a| a.y.clone()).collect();
    (consensus_sq(&xs), consensus_sq(&ys))
}

/// Squared Frobenius deviation of per-agent vectors from their mean.
pub fn consensus_sq(columns: &[Array1<f64>]) -> f64 {
    assert!(!columns.is_empty());
    let m = columns.len() as f64;
    let mut mean = Array1::<f64>::zeros(columns[0].len());
    for col in columns {
        mean += col;
    }
    mean /= m;
    columns
        .iter()
        .map(|col| {
            let dev = col - &mean;
            dev.dot(&dev)
        })
        .sum()
}

/// How the inner maximization for the stationarity proxy is run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityConfig {
    pub inner_steps: usize,
    pub inner_eta: f64,
    pub tol: f64,
}

impl StationarityConfig {
    pub fn new(inner_steps: usize, inner_eta: f64, tol: f64) -> Self {
        assert!(inner_steps >= 1, "at least one ascent step is required");
        assert!(inner_eta > 0.0, "ascent step size must be positive");
        assert!(tol >= 0.0);
        Self { inner_steps, inner_eta, tol }
    }

    /// Defaults: 200 ascent steps of size 1/L, early stop at 1e-8.
    pub fn for_smoothness(smoothness: f64) -> Self {
        Self::new(200, 1.0 / smoothness, 1e-8)
    }
}

/// Stationarity proxy `||grad Phi(x_bar)|| = ||grad_x f(x_bar, y_hat)||`
/// where `y_hat` approximates `argmax_y f(x_bar, y)` starting from the
/// current `y_bar`. Problems with a closed-form best response use it
/// instead of ascent.
pub fn stationarity_norm<P: MinMaxProblem + ?Sized>(
    problem: &P,
    x_bar: &Array1<f64>,
    y_bar: &Array1<f64>,
    cfg: &StationarityConfig,
) -> Result<f64, MetricsError> {
    let y_hat = problem.argmax_y(x_bar, y_bar, cfg.inner_steps, cfg.inner_eta, cfg.tol)?;
    let grad = problem.mean_grad_x(x_bar, &y_hat)?;
    Ok(l2(&grad))
}
