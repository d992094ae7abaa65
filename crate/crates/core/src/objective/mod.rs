//! Min-max problem interface and feasible-set projections.
//!
//! A problem exposes per-agent stochastic gradients in `x` and `y`,
//! full-shard gradients, smoothness metadata, and (when it exists) an
//! exact best response / saddle point. Gradient evaluations are pure and
//! deterministic in `(x, y, batch)`, which is what lets runs be replayed
//! bit for bit.

mod logreg;
mod quadratic;

pub use logreg::{RobustLogReg, RobustLogRegParams};
pub use quadratic::{quad_problem, QuadraticAgent, QuadraticSaddle};

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("batch must be non-empty")]
    EmptyBatch,
    #[error("batch index {index} out of range for shard of {len} samples")]
    BatchIndexOutOfRange { index: usize, len: usize },
    #[error("agent index {agent} out of range for {m} agents")]
    BadAgent { agent: usize, m: usize },
    #[error("input outside the feasible domain: {0}")]
    OutsideDomain(String),
    #[error("expected x of length {expected}, got {got}")]
    BadDimX { expected: usize, got: usize },
    #[error("expected y of length {expected}, got {got}")]
    BadDimY { expected: usize, got: usize },
}

/// Curvature and gradient-norm metadata a problem reports about itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    /// Gradient Lipschitz constant L of the local objectives.
    pub smoothness: f64,
    /// Strong-concavity modulus mu in y.
    pub strong_concavity: f64,
    /// Bound on per-sample stochastic gradient norms (drives noise
    /// calibration).
    pub grad_bound: f64,
    /// Per-sample gradient variance, when estimated (diagnostic only).
    pub sigma_var: Option<f64>,
}

impl ProblemMeta {
    /// Condition number kappa = L / mu.
    pub fn kappa(&self) -> f64 {
        self.smoothness / self.strong_concavity
    }
}

pub type ObjResult<T> = Result<T, ObjectiveError>;

/// A decentralized min-max problem over `m` agents.
pub trait MinMaxProblem: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn num_agents(&self) -> usize;
    /// Samples available on the agent's local shard.
    fn shard_len(&self, agent: usize) -> usize;
    fn meta(&self) -> &ProblemMeta;

    /// Local objective value over the agent's full shard.
    fn local_value(&self, agent: usize, x: &Array1<f64>, y: &Array1<f64>) -> ObjResult<f64>;

    /// Stochastic x-gradient over `batch` (indices into the shard).
    fn grad_x(
        &self,
        agent: usize,
        x: &Array1<f64>,
        y: &Array1<f64>,
        batch: &[usize],
    ) -> ObjResult<Array1<f64>>;

    /// Stochastic y-gradient over `batch`.
    fn grad_y(
        &self,
        agent: usize,
        x: &Array1<f64>,
        y: &Array1<f64>,
        batch: &[usize],
    ) -> ObjResult<Array1<f64>>;

    fn full_grad_x(&self, agent: usize, x: &Array1<f64>, y: &Array1<f64>) -> ObjResult<Array1<f64>> {
        let batch: Vec<usize> = (0..self.shard_len(agent)).collect();
        self.grad_x(agent, x, y, &batch)
    }

    fn full_grad_y(&self, agent: usize, x: &Array1<f64>, y: &Array1<f64>) -> ObjResult<Array1<f64>> {
        let batch: Vec<usize> = (0..self.shard_len(agent)).collect();
        self.grad_y(agent, x, y, &batch)
    }

    /// Network-mean full gradients, reduced in fixed agent order.
    fn mean_grad_x(&self, x: &Array1<f64>, y: &Array1<f64>) -> ObjResult<Array1<f64>> {
        let mut acc = Array1::<f64>::zeros(self.dim_x());
        for agent in 0..self.num_agents() {
            acc += &self.full_grad_x(agent, x, y)?;
        }
        Ok(acc / self.num_agents() as f64)
    }

    fn mean_grad_y(&self, x: &Array1<f64>, y: &Array1<f64>) -> ObjResult<Array1<f64>> {
        let mut acc = Array1::<f64>::zeros(self.dim_y());
        for agent in 0..self.num_agents() {
            acc += &self.full_grad_y(agent, x, y)?;
        }
        Ok(acc / self.num_agents() as f64)
    }

    /// Project `y` onto its feasible set (identity when unconstrained).
    fn project_y(&self, _y: &mut Array1<f64>) {}

    /// Whether `project_y` is a non-trivial constraint.
    fn y_constrained(&self) -> bool {
        false
    }

    /// Shared deterministic starting point for every agent.
    fn initial_point(&self) -> (Array1<f64>, Array1<f64>);

    /// Approximate `argmax_y f(x_bar, y)` starting from `y_start`.
    ///
    /// Default: projected full-gradient ascent for `steps` rounds of size
    /// `eta`, stopping early when the (projected) gradient residual drops
    /// below `tol`. Problems with a closed-form best response override it.
    fn argmax_y(
        &self,
        x_bar: &Array1<f64>,
        y_start: &Array1<f64>,
        steps: usize,
        eta: f64,
        tol: f64,
    ) -> ObjResult<Array1<f64>> {
        let mut y = y_start.clone();
        for _ in 0..steps {
            let grad = self.mean_grad_y(x_bar, &y)?;
            let mut next = &y + &(eta * &grad);
            self.project_y(&mut next);
            let residual = crate::linalg::l2(&(&next - &y)) / eta;
            y = next;
            if residual <= tol {
                break;
            }
        }
        Ok(y)
    }

    /// Exact global saddle point, when the problem knows one.
    fn saddle_point(&self) -> Option<(Array1<f64>, Array1<f64>)> {
        None
    }
}

/// Euclidean projection onto the probability simplex
/// `{ y : y_i >= 0, sum y_i = 1 }` by sort and threshold.
pub fn project_simplex(v: &Array1<f64>) -> Array1<f64> {
    let n = v.len();
    assert!(n >= 1, "cannot project an empty vector");
    // Pass non-finite inputs through so the caller's divergence check can
    // report them instead of a meaningless projection.
    if v.iter().any(|u| !u.is_finite()) {
        return v.clone();
    }
    // The projection is invariant to adding a constant; shifting by the
    // max keeps the threshold arithmetic exact even for huge inputs.
    let shift = v.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sorted: Vec<f64> = v.iter().map(|&u| u - shift).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    let mut support = 0usize;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
            support = k + 1;
        }
    }
    debug_assert!(support >= 1);
    v.mapv(|u| (u - shift - tau).max(0.0))
}

/// Numerically stable `log(1 + exp(-z))`.
pub(crate) fn logistic_loss(z: f64) -> f64 {
    if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// Numerically stable logistic sigmoid.
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}
