//! Strongly-convex–strongly-concave quadratic saddle problem.
//!
//! Each agent holds
//! `F_i(x, y) = x^T A_i x / 2 + x^T B_i y - y^T C_i y / 2 + p_i^T x + q_i^T y`
//! with `A_i`, `C_i` symmetric positive definite. The network average has
//! a unique saddle point obtained from the averaged first-order
//! conditions, which is solved once at construction and kept as the
//! ground truth for convergence tests.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MinMaxProblem, ObjResult, ObjectiveError, ProblemMeta};
use crate::linalg::{l2, solve, spectral_norm};
use crate::rng::splitmix64;

#[derive(Debug, Clone)]
pub struct QuadraticAgent {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub c: Array2<f64>,
    pub p: Array1<f64>,
    pub q: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct QuadraticSaddle {
    agents: Vec<QuadraticAgent>,
    a_bar: Array2<f64>,
    b_bar: Array2<f64>,
    c_bar: Array2<f64>,
    p_bar: Array1<f64>,
    q_bar: Array1<f64>,
    saddle_x: Array1<f64>,
    saddle_y: Array1<f64>,
    meta: ProblemMeta,
}

const SPECTRAL_TOL: f64 = 1e-12;
const SPECTRAL_ITERS: usize = 50_000;

impl QuadraticSaddle {
    /// Assemble from explicit per-agent blocks; the averaged saddle point
    /// and curvature metadata are computed here.
    pub fn from_parts(agents: Vec<QuadraticAgent>) -> Self {
        assert!(!agents.is_empty());
        let d1 = agents[0].a.nrows();
        let d2 = agents[0].c.nrows();
        for ag in &agents {
            assert_eq!(ag.a.dim(), (d1, d1));
            assert_eq!(ag.b.dim(), (d1, d2));
            assert_eq!(ag.c.dim(), (d2, d2));
            assert_eq!(ag.p.len(), d1);
            assert_eq!(ag.q.len(), d2);
        }
        let m = agents.len() as f64;
        let mut a_bar = Array2::<f64>::zeros((d1, d1));
        let mut b_bar = Array2::<f64>::zeros((d1, d2));
        let mut c_bar = Array2::<f64>::zeros((d2, d2));
        let mut p_bar = Array1::<f64>::zeros(d1);
        let mut q_bar = Array1::<f64>::zeros(d2);
        for ag in &agents {
            a_bar += &ag.a;
            b_bar += &ag.b;
            c_bar += &ag.c;
            p_bar += &ag.p;
            q_bar += &ag.q;
        }
        a_bar /= m;
        b_bar /= m;
        c_bar /= m;
        p_bar /= m;
        q_bar /= m;

        // First-order conditions: A x + B y + p = 0, B^T x - C y + q = 0.
        // Eliminating y gives (A + B C^-1 B^T) x = -(p + B C^-1 q).
        let c_inv_bt = {
            let mut cols = Array2::<f64>::zeros((d2, d1));
            for j in 0..d1 {
                let rhs = b_bar.row(j).to_owned();
                let col = solve(&c_bar, &rhs).expect("C is positive definite");
                cols.column_mut(j).assign(&col);
            }
            cols
        };
        let schur = &a_bar + &b_bar.dot(&c_inv_bt);
        let c_inv_q = solve(&c_bar, &q_bar).expect("C is positive definite");
        let rhs = -(&p_bar + &b_bar.dot(&c_inv_q));
        let saddle_x = solve(&schur, &rhs).expect("Schur complement is positive definite");
        let saddle_y = solve(&c_bar, &(b_bar.t().dot(&saddle_x) + &q_bar))
            .expect("C is positive definite");

        // Curvature: L is the largest joint-Hessian norm across agents,
        // mu the smallest eigenvalue of any C_i (via lambda_min(C) =
        // ||C|| - ||(||C|| I) - C|| for symmetric PD C).
        let mut smoothness: f64 = 0.0;
        let mut strong_concavity = f64::INFINITY;
        for ag in &agents {
            let mut hessian = Array2::<f64>::zeros((d1 + d2, d1 + d2));
            for i in 0..d1 {
                for j in 0..d1 {
                    hessian[[i, j]] = ag.a[[i, j]];
                }
                for j in 0..d2 {
                    hessian[[i, d1 + j]] = ag.b[[i, j]];
                    hessian[[d1 + j, i]] = ag.b[[i, j]];
                }
            }
            for i in 0..d2 {
                for j in 0..d2 {
                    hessian[[d1 + i, d1 + j]] = -ag.c[[i, j]];
                }
            }
            let hnorm = spectral_norm(&hessian, SPECTRAL_TOL, SPECTRAL_ITERS)
                .expect("square by construction");
            smoothness = smoothness.max(hnorm);
            let cmax = spectral_norm(&ag.c, SPECTRAL_TOL, SPECTRAL_ITERS).expect("square");
            let shifted = Array2::from_diag_elem(d2, cmax) - &ag.c;
            let spread = spectral_norm(&shifted, SPECTRAL_TOL, SPECTRAL_ITERS).expect("square");
            strong_concavity = strong_concavity.min(cmax - spread);
        }

        // Gradient norms are unbounded for a quadratic; record a
        // working-ball estimate (radius 10) for diagnostics.
        let pq_norm = agents
            .iter()
            .map(|ag| (l2(&ag.p).powi(2) + l2(&ag.q).powi(2)).sqrt())
            .fold(0.0, f64::max);
        let grad_bound = smoothness * 10.0 * std::f64::consts::SQRT_2 + pq_norm;

        let meta = ProblemMeta {
            smoothness,
            strong_concavity,
            grad_bound,
            sigma_var: Some(0.0),
        };
        let problem = Self {
            agents,
            a_bar,
            b_bar,
            c_bar,
            p_bar,
            q_bar,
            saddle_x,
            saddle_y,
            meta,
        };
        let (gx, gy) = problem.saddle_residual();
        assert!(
            gx + gy <= 1e-8,
            "saddle solve left residual {gx} + {gy}"
        );
        problem
    }

    /// Random instance: `A_i`, `C_i` have eigenvalues drawn uniformly in
    /// `[mu, l]`, `B_i` is scaled to spectral norm `l / 2`.
    pub fn random(d1: usize, d2: usize, m: usize, mu: f64, l: f64, seed: u64) -> Self {
        assert!(d1 >= 1 && d2 >= 1 && m >= 1);
        assert!(0.0 < mu && mu <= l);
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5155_4144));
        let agents = (0..m)
            .map(|_| QuadraticAgent {
                a: random_spd(d1, mu, l, &mut rng),
                b: random_scaled(d1, d2, l / 2.0, &mut rng),
                c: random_spd(d2, mu, l, &mut rng),
                p: Array1::from_shape_fn(d1, |_| sample_normal(&mut rng)),
                q: Array1::from_shape_fn(d2, |_| sample_normal(&mut rng)),
            })
            .collect();
        Self::from_parts(agents)
    }

    pub fn agent(&self, i: usize) -> &QuadraticAgent {
        &self.agents[i]
    }

    pub fn averaged_blocks(&self) -> (&Array2<f64>, &Array2<f64>, &Array2<f64>) {
        (&self.a_bar, &self.b_bar, &self.c_bar)
    }

    pub fn saddle(&self) -> (&Array1<f64>, &Array1<f64>) {
        (&self.saddle_x, &self.saddle_y)
    }

    /// Exact best response `y*(x) = C^-1 (B^T x + q)` for the averaged
    /// objective.
    pub fn exact_argmax_y(&self, x: &Array1<f64>) -> Array1<f64> {
        solve(&self.c_bar, &(self.b_bar.t().dot(x) + &self.q_bar))
            .expect("C is positive definite")
    }

    fn saddle_residual(&self) -> (f64, f64) {
        let gx = self.a_bar.dot(&self.saddle_x) + self.b_bar.dot(&self.saddle_y) + &self.p_bar;
        let gy = self.b_bar.t().dot(&self.saddle_x) - self.c_bar.dot(&self.saddle_y) + &self.q_bar;
        (l2(&gx), l2(&gy))
    }

    fn check(&self, agent: usize, x: &Array1<f64>, y: &Array1<f64>) -> ObjResult<()> {
        if agent >= self.agents.len() {
            return Err(ObjectiveError::BadAgent { agent, m: self.agents.len() });
        }
        if x.len() != self.dim_x() {
            return Err(ObjectiveError::BadDimX { expected: self.dim_x(), got: x.len() });
        }
        if y.len() != self.dim_y() {
            return Err(ObjectiveError::BadDimY { expected: self.dim_y(), got: y.len() });
        }
        Ok(())
    }
}

fn sample_normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(rand_distr::StandardNormal)
}

/// Random symmetric matrix with eigenvalues uniform in `[lo, hi]`, built
/// as `Q diag(e) Q^T` from a Gram-Schmidt-orthonormalized Gaussian frame.
fn random_spd(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let q = random_orthogonal(n, rng);
    let eigs = Array1::from_shape_fn(n, |_| lo + (hi - lo) * rng.random::<f64>());
    let mut scaled = q.clone();
    for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
        col *= eigs[j];
    }
    let raw = scaled.dot(&q.t());
    // Symmetrize away the last-bit asymmetry of the triple product.
    (&raw + &raw.t()) / 2.0
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    loop {
        let mut q = Array2::from_shape_fn((n, n), |_| sample_normal(rng));
        let mut ok = true;
        for j in 0..n {
            for k in 0..j {
                let proj = q.column(j).dot(&q.column(k));
                let prev = q.column(k).to_owned();
                q.column_mut(j).scaled_add(-proj, &prev);
            }
            let norm = l2(&q.column(j).to_owned());
            if norm < 1e-8 {
                ok = false;
                break;
            }
            q.column_mut(j).mapv_inplace(|v| v / norm);
        }
        if ok {
            return q;
        }
    }
}

fn random_scaled(rows: usize, cols: usize, target_norm: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let raw = Array2::from_shape_fn((rows, cols), |_| sample_normal(rng));
    // Pad to square to reuse the square-matrix norm routine.
    let n = rows.max(cols);
    let mut padded = Array2::<f64>::zeros((n, n));
    padded.slice_mut(ndarray::s![..rows, ..cols]).assign(&raw);
    let norm = spectral_norm(&padded, 1e-10, 10_000).expect("square by construction");
    if norm == 0.0 {
        return raw;
    }
    raw * (target_norm / norm)
}

/// Random SC-SC quadratic test problem with mu = 1, L-scale 4.
pub fn quad_problem(d1: usize, d2: usize, m: usize, seed: u64) -> QuadraticSaddle {
    QuadraticSaddle::random(d1, d2, m, 1.0, 4.0, seed)
}

impl MinMaxProblem for QuadraticSaddle {
    fn dim_x(&self) -> usize {
        self.p_bar.len()
    }

    fn dim_y(&self) -> usize {
        self.q_bar.len()
    }

    fn num_agents(&self) -> usize {
        self.agents.len()
    }

    // The local objective is deterministic; the whole shard is one
    // synthetic sample.
    fn shard_len(&self, _agent: usize) -> usize {
        1
    }

    fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    fn local_value(&self, agent: usize, x: &Array1<f64>, y: &Array1<f64>) -> ObjResult<f64> {
        self.check(agent, x, y)?;
        let ag = &self.agents[agent];
        Ok(0.5 * x.dot(&ag.a.dot(x)) + x.dot(&ag.b.dot(y)) - 0.5 * y.dot(&ag.c.dot(y))
            + ag.p.dot(x)
            + ag.q.dot(y))
    }

    fn grad_x(
        &self,
        agent: usize,
        x: &Array1<f64>,
        y: &Array1<f64>,
        batch: &[usize],
    ) -> ObjResult<Array1<f64>> {
        self.check(agent, x, y)?;
        if batch.is_empty() {
            return Err(ObjectiveError::EmptyBatch);
        }
        let ag = &self.agents[agent];
        Ok(ag.a.dot(x) + ag.b.dot(y) + &ag.p)
    }

    fn grad_y(
        &self,
        agent: usize,
        x: &Array1<f64>,
        y: &Array1<f64>,
        batch: &[usize],
    ) -> ObjResult<Array1<f64>> {
        self.check(agent, x, y)?;
        if batch.is_empty() {
            return Err(ObjectiveError::EmptyBatch);
        }
        let ag = &self.agents[agent];
        Ok(ag.b.t().dot(x) - ag.c.dot(y) + &ag.q)
    }

    fn initial_point(&self) -> (Array1<f64>, Array1<f64>) {
        (Array1::zeros(self.dim_x()), Array1::zeros(self.dim_y()))
    }

    fn argmax_y(
        &self,
        x_bar: &Array1<f64>,
        _y_start: &Array1<f64>,
        _steps: usize,
        _eta: f64,
        _tol: f64,
    ) -> ObjResult<Array1<f64>> {
        Ok(self.exact_argmax_y(x_bar))
    }

    fn saddle_point(&self) -> Option<(Array1<f64>, Array1<f64>)> {
        Some((self.saddle_x.clone(), self.saddle_y.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_oracles::central_difference;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn decoupled_zero_linear_terms_saddle_at_origin() {
        let agents = vec![QuadraticAgent {
            a: Array2::eye(2),
            b: Array2::zeros((2, 2)),
            c: Array2::eye(2),
            p: Array1::zeros(2),
            q: Array1::zeros(2),
        }];
        let p = QuadraticSaddle::from_parts(agents);
        let (x, y) = p.saddle();
        assert!(l2(x) <= 1e-12 && l2(y) <= 1e-12);
    }

    #[test]
    fn scalar_saddle_from_first_order_conditions() {
        // A = C = 1, B = 0, p = -1, q = 1: x* = 1, y* = 1.
        let agents = vec![QuadraticAgent {
            a: array![[1.0]],
            b: array![[0.0]],
            c: array![[1.0]],
            p: array![-1.0],
            q: array![1.0],
        }];
        let p = QuadraticSaddle::from_parts(agents);
        let (x, y) = p.saddle();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn saddle_residual_is_tiny_for_random_instances() {
        for seed in 0..10 {
            let p = quad_problem(4, 3, 5, seed);
            let (x, y) = p.saddle();
            let gx = p.mean_grad_x(x, y).unwrap();
            let gy = p.mean_grad_y(x, y).unwrap();
            assert!(l2(&gx) + l2(&gy) <= 1e-12, "seed {seed}: {}", l2(&gx) + l2(&gy));
        }
    }

    #[test]
    fn metadata_brackets_generated_spectra() {
        let p = QuadraticSaddle::random(4, 4, 3, 1.0, 4.0, 2);
        let meta = p.meta();
        assert!(meta.strong_concavity >= 1.0 - 1e-9);
        assert!(meta.strong_concavity <= 4.0 + 1e-9);
        assert!(meta.smoothness >= meta.strong_concavity);
        assert!(meta.kappa() >= 1.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        use rand::Rng;
        use rand::SeedableRng;
        let p = quad_problem(3, 2, 4, 77);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let agent = rng.random_range(0..4);
            let x = Array1::from_shape_fn(3, |_| rng.random::<f64>() * 2.0 - 1.0);
            let y = Array1::from_shape_fn(2, |_| rng.random::<f64>() * 2.0 - 1.0);
            let gx = p.full_grad_x(agent, &x, &y).unwrap();
            let gy = p.full_grad_y(agent, &x, &y).unwrap();
            let fdx = central_difference(
                |xx: &Array1<f64>| p.local_value(agent, xx, &y).unwrap(),
                &x,
                1e-5,
            );
            let fdy = central_difference(
                |yy: &Array1<f64>| p.local_value(agent, &x, yy).unwrap(),
                &y,
                1e-5,
            );
            assert!(l2(&(&gx - &fdx)) / l2(&gx).max(1.0) <= 1e-5);
            assert!(l2(&(&gy - &fdy)) / l2(&gy).max(1.0) <= 1e-5);
        }
    }

    // Assumption restated testably: for fixed x,
    // f(x, y') - f(x, y) - <grad_y f(x, y), y' - y> <= -(mu/2) ||y' - y||^2.
    #[test]
    fn strong_concavity_witness() {
        use rand::Rng;
        use rand::SeedableRng;
        let p = quad_problem(3, 3, 4, 9);
        let mu = p.meta().strong_concavity;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for _ in 0..40 {
            let agent = rng.random_range(0..4);
            let x = Array1::from_shape_fn(3, |_| rng.random::<f64>() - 0.5);
            let y = Array1::from_shape_fn(3, |_| rng.random::<f64>() - 0.5);
            let y2 = Array1::from_shape_fn(3, |_| rng.random::<f64>() - 0.5);
            let f1 = p.local_value(agent, &x, &y).unwrap();
            let f2 = p.local_value(agent, &x, &y2).unwrap();
            let g = p.full_grad_y(agent, &x, &y).unwrap();
            let diff = &y2 - &y;
            let gap = f2 - f1 - g.dot(&diff);
            assert!(
                gap <= -(mu / 2.0) * diff.dot(&diff) + 1e-10,
                "concavity violated: gap {gap}"
            );
        }
    }

    #[test]
    fn exact_argmax_zeroes_the_y_gradient() {
        use rand::Rng;
        use rand::SeedableRng;
        let p = quad_problem(4, 3, 3, 21);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(22);
        for _ in 0..10 {
            let x = Array1::from_shape_fn(4, |_| rng.random::<f64>() - 0.5);
            let y_hat = p.exact_argmax_y(&x);
            let gy = p.mean_grad_y(&x, &y_hat).unwrap();
            assert!(l2(&gy) <= 1e-10);
        }
    }
}
