//! Robust logistic regression as a decentralized min-max problem.
//!
//! The network objective is
//! `f(x, y) = sum_i y_i * l_i(x) - V(y) + g(x)` with `y` on the simplex,
//! `l_i` the mean logistic loss on agent i's shard,
//! `V(y) = (lambda1 / 2) ||m y - 1||^2`, and the nonconvex regularizer
//! `g(x) = lambda2 * sum_j alpha x_j^2 / (1 + alpha x_j^2)`.
//!
//! Each agent holds the local split
//! `f_i(x, y) = m y_i l_i(x) - V(y) + g(x)`, whose network average equals
//! `f` exactly; `V` and `g` are replicated because they need no data.

use ndarray::Array1;

use super::{logistic_loss, project_simplex, sigmoid, MinMaxProblem, ObjResult, ObjectiveError, ProblemMeta};
use crate::data::{Dataset, Sharding};
use crate::linalg::l2;

/// Weights of the objective; the benchmark defaults are
/// `lambda1 = 1/m^2`, `lambda2 = 0.001`, `alpha = 10`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustLogRegParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub alpha: f64,
}

impl RobustLogRegParams {
    pub fn benchmark_defaults(m: usize) -> Self {
        Self { lambda1: 1.0 / (m * m) as f64, lambda2: 0.001, alpha: 10.0 }
    }

    fn validate(&self) {
        assert!(self.lambda1 > 0.0 && self.lambda2 >= 0.0 && self.alpha > 0.0);
    }
}

#[derive(Debug, Clone)]
pub struct RobustLogReg {
    data: Dataset,
    shards: Vec<Vec<usize>>,
    params: RobustLogRegParams,
    meta: ProblemMeta,
}

impl RobustLogReg {
    pub fn new(data: Dataset, sharding: &Sharding, params: RobustLogRegParams) -> Self {
        params.validate();
        let m = sharding.num_agents();
        let shards: Vec<Vec<usize>> = sharding.shards().to_vec();
        assert!(shards.iter().all(|s| !s.is_empty()), "every agent needs data");

        let mf = m as f64;
        let a_max = data.max_row_norm();
        let d = data.dim() as f64;
        // Hessian-block bounds: the xx block is at most
        // m * a_max^2 / 4 + 2 lambda2 alpha, the yy block lambda1 m^2, and
        // the xy block m * a_max; the block norms add.
        let smoothness = (mf * a_max * a_max / 4.0 + 2.0 * params.lambda2 * params.alpha)
            .max(params.lambda1 * mf * mf)
            + mf * a_max;
        let strong_concavity = params.lambda1 * mf * mf;
        // Working-region gradient-norm estimate from the loaded data: the
        // loss term is at most m * a_max, the penalty gradient at most
        // lambda1 m (m + sqrt(m)) on the simplex, and the regularizer
        // gradient at most lambda2 sqrt(27 alpha d) / 8 anywhere.
        let grad_bound = mf * a_max
            + params.lambda1 * mf * (mf + mf.sqrt())
            + params.lambda2 * (27.0 * params.alpha * d).sqrt() / 8.0;

        let meta = ProblemMeta {
            smoothness,
            strong_concavity,
            grad_bound,
            sigma_var: None,
        };
        Self { data, shards, params, meta }
    }

    pub fn params(&self) -> &RobustLogRegParams {
        &self.params
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    fn check_dims(&self, x: &Array1<f64>, y: &Array1<f64>) -> ObjResult<()> {
        if x.len() != self.dim_x() {
            return Err(ObjectiveError::BadDimX { expected: self.dim_x(), got: x.len() });
        }
        if y.len() != self.dim_y() {
            return Err(ObjectiveError::BadDimY { expected: self.dim_y(), got: y.len() });
        }
        Ok(())
    }

    fn check_agent(&self, agent: usize) -> ObjResult<()> {
        if agent >= self.shards.len() {
            return Err(ObjectiveError::BadAgent { agent, m: self.shards.len() });
        }
        Ok(())
    }

    fn check_simplex(&self, y: &Array1<f64>) -> ObjResult<()> {
        let sum: f64 = y.sum();
        if (sum - 1.0).abs() > 1e-9 || y.iter().any(|&yi| yi < -1e-9) {
            return Err(ObjectiveError::OutsideDomain(format!(
                "y must lie on the probability simplex (sum = {sum})"
            )));
        }
        Ok(())
    }

    /// Mean logistic loss over the listed shard-local samples.
    fn batch_loss(&self, agent: usize, x: &Array1<f64>, batch: &[usize]) -> ObjResult<f64> {
        let shard = &self.shards[agent];
        let mut acc = 0.0;
        for &k in batch {
            let &sample = shard.get(k).ok_or(ObjectiveError::BatchIndexOutOfRange {
                index: k,
                len: shard.len(),
            })?;
            let margin = self.data.label(sample) * self.data.feature_row(sample).dot(x);
            acc += logistic_loss(margin);
        }
        Ok(acc / batch.len() as f64)
    }

    /// Mean logistic loss over the full shard of every agent.
    pub fn shard_losses(&self, x: &Array1<f64>) -> Array1<f64> {
        Array1::from_iter((0..self.num_agents()).map(|agent| {
            let batch: Vec<usize> = (0..self.shards[agent].len()).collect();
            self.batch_loss(agent, x, &batch).expect("full shard is non-empty")
        }))
    }

    fn penalty_grad(&self, y: &Array1<f64>) -> Array1<f64> {
        let m = self.num_agents() as f64;
        y.mapv(|yi| self.params.lambda1 * m * (m * yi - 1.0))
    }

    fn regularizer(&self, x: &Array1<f64>) -> f64 {
        let alpha = self.params.alpha;
        self.params.lambda2 * x.iter().map(|&xj| alpha * xj * xj / (1.0 + alpha * xj * xj)).sum::<f64>()
    }

    fn regularizer_grad(&self, x: &Array1<f64>) -> Array1<f64> {
        let alpha = self.params.alpha;
        x.mapv(|xj| {
            let denom = 1.0 + alpha * xj * xj;
            2.0 * self.params.lambda2 * alpha * xj / (denom * denom)
        })
    }

    /// Empirical bound on per-sample gradient variance
    /// `E ||grad F(x, y; z) - grad f(x, y)||^2`: the max over random probe
    /// points and agents of the shard-mean squared deviation, jointly
    /// over the x and y blocks. Diagnostic only.
    pub fn estimate_sigma_var(&self, probes: usize, seed: u64) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(crate::rng::splitmix64(seed ^ 0x0056_4152));
        let mut worst = 0.0f64;
        for _ in 0..probes.max(1) {
            let x = Array1::from_shape_fn(self.dim_x(), |_| rng.random::<f64>() - 0.5);
            let y = project_simplex(&Array1::from_shape_fn(self.dim_y(), |_| rng.random::<f64>()));
            for agent in 0..self.num_agents() {
                let full_x = self.full_grad_x(agent, &x, &y).expect("valid probe");
                let full_y = self.full_grad_y(agent, &x, &y).expect("valid probe");
                let n = self.shards[agent].len();
                let mut acc = 0.0;
                for k in 0..n {
                    let gx = self.grad_x(agent, &x, &y, &[k]).expect("valid probe");
                    let gy = self.grad_y(agent, &x, &y, &[k]).expect("valid probe");
                    let dx = &gx - &full_x;
                    let dy = &gy - &full_y;
                    acc += dx.dot(&dx) + dy.dot(&dy);
                }
                worst = worst.max(acc / n as f64);
            }
        }
        worst
    }

    /// Store an empirical variance estimate in the metadata.
    pub fn with_estimated_sigma_var(mut self, probes: usize, seed: u64) -> Self {
        self.meta.sigma_var = Some(self.estimate_sigma_var(probes, seed));
        self
    }

    /// `f_i` without the simplex-domain check; the formula is defined for
    /// any `y`, which the finite-difference tests rely on.
    pub fn local_value_unchecked(&self, agent: usize, x: &Array1<f64>, y: &Array1<f64>) -> ObjResult<f64> {
        self.check_agent(agent)?;
        self.check_dims(x, y)?;
        let m = self.num_agents() as f64;
        let batch: Vec<usize> = (0..self.shards[agent].len()).collect();
        let loss = self.batch_loss(agent, x, &batch)?;
        let penalty_vec = y.mapv(|yi| m * yi - 1.0);
        let penalty = 0.5 * self.params.lambda1 * penalty_vec.dot(&penalty_vec);
        Ok(m * y[agent] * loss - penalty + self.regularizer(x))
    }
}

impl MinMaxProblem for RobustLogReg {
    fn dim_x(&self) -> usize {
        self.data.dim()
    }

    fn dim_y(&self) -> usize {
        self.shards.len()
    }

    fn num_agents(&self) -> usize {
        self.shards.len()
    }

    fn shard_len(&self, agent: usize) -> usize {
        self.shards[agent].len()
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn local_value(&self, agent: usize, x: &Array1<f64>, y: &Array1<f64>) -> ObjResult<f64> {
        self.check_simplex(y)?;
        self.local_value_unchecked(agent, x, y)
    }

    fn grad_x(
        &self,
        agent: usize,
        x: &Array1<f64>,
        y: &Array1<f64>,
        batch: &[usize],
    ) -> ObjResult<Array1<f64>> {
        self.check_agent(agent)?;
        self.check_dims(x, y)?;
        if batch.is_empty() {
            return Err(ObjectiveError::EmptyBatch);
        }
        let shard = &self.shards[agent];
        let mut loss_grad = Array1::<f64>::zeros(self.dim_x());
        for &k in batch {
            let &sample = shard.get(k).ok_or(ObjectiveError::BatchIndexOutOfRange {
                index: k,
                len: shard.len(),
            })?;
            let row = self.data.feature_row(sample);
            let b = self.data.label(sample);
            let weight = -b * sigmoid(-b * row.dot(x));
            loss_grad.scaled_add(weight, &row);
        }
        loss_grad /= batch.len() as f64;
        let m = self.num_agents() as f64;
        loss_grad *= m * y[agent];
        loss_grad += &self.regularizer_grad(x);
        Ok(loss_grad)
    }

    fn grad_y(
        &self,
        agent: usize,
        x: &Array1<f64>,
        y: &Array1<f64>,
        batch: &[usize],
    ) -> ObjResult<Array1<f64>> {
        self.check_agent(agent)?;
        self.check_dims(x, y)?;
        if batch.is_empty() {
            return Err(ObjectiveError::EmptyBatch);
        }
        let m = self.num_agents() as f64;
        let loss = self.batch_loss(agent, x, batch)?;
        let mut grad = -self.penalty_grad(y);
        grad[agent] += m * loss;
        Ok(grad)
    }

    fn project_y(&self, y: &mut Array1<f64>) {
        *y = project_simplex(y);
    }

    fn y_constrained(&self) -> bool {
        true
    }

    fn initial_point(&self) -> (Array1<f64>, Array1<f64>) {
        let m = self.num_agents();
        (
            Array1::zeros(self.dim_x()),
            Array1::from_elem(m, 1.0 / m as f64),
        )
    }

    // The shard losses do not depend on y, so one data pass funds the
    // whole inner maximization.
    fn argmax_y(
        &self,
        x_bar: &Array1<f64>,
        y_start: &Array1<f64>,
        steps: usize,
        eta: f64,
        tol: f64,
    ) -> ObjResult<Array1<f64>> {
        let losses = self.shard_losses(x_bar);
        let mut y = y_start.clone();
        for _ in 0..steps {
            let grad = &losses - &self.penalty_grad(&y);
            let next = project_simplex(&(&y + &(eta * &grad)));
            let residual = l2(&(&next - &y)) / eta;
            y = next;
            if residual <= tol {
                break;
            }
        }
        Ok(y)
    }
}
