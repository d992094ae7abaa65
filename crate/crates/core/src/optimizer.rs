//! The decentralized min-max optimizer family over a simulated network.
//!
//! One synchronous round per iteration: every agent refreshes its local
//! momentum gradient estimators on a fresh minibatch, perturbs them with
//! Gaussian noise before they leave the agent, aggregates neighbor
//! estimators through the gradient-tracking recursion, and finally mixes
//! iterates with the gossip weights. Agents only ever read frozen
//! previous-round neighbor state (double buffering), so per-agent work can
//! run in parallel without changing a single bit of the trajectory.
//!
//! Four methods share the loop:
//!
//! * `DpMixSgd` — momentum estimators + tracking + Gaussian noise;
//! * `DmHsgd` — the same with the noise forced to zero;
//! * `Sgda` — plain simultaneous descent-ascent, iterate mixing only;
//! * `DpSgda` — `Sgda` with Gaussian noise on both gradients.

use std::mem;
use std::time::Instant;

use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{clip_l2, l2};
use crate::metrics::{self, StationarityConfig};
use crate::objective::{MinMaxProblem, ObjectiveError};
use crate::rng::{agent_stream, run_stream, StreamKind};
use crate::topology::MixingMatrix;

#[derive(Debug, Error)]
pub enum OptError {
    #[error("invalid hyperparameters: {0}")]
    BadHyperParams(String),
    #[error("problem has {problem} agents but topology has {topology}")]
    AgentCountMismatch { problem: usize, topology: usize },
    #[error("non-finite iterate at iteration {iter} on agent {agent}")]
    NonFinite { iter: usize, agent: usize },
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Which update rule the run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dpmixsgd")]
    DpMixSgd,
    #[serde(rename = "dm_hsgd")]
    DmHsgd,
    #[serde(rename = "sgda")]
    Sgda,
    #[serde(rename = "dp_sgda")]
    DpSgda,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::DpMixSgd => "dpmixsgd",
            Method::DmHsgd => "dm_hsgd",
            Method::Sgda => "sgda",
            Method::DpSgda => "dp_sgda",
        }
    }

    /// Momentum estimators and gradient tracking, or plain gradients.
    pub fn uses_tracking(self) -> bool {
        matches!(self, Method::DpMixSgd | Method::DmHsgd)
    }

    /// Whether the configured noise scales apply.
    pub fn is_private(self) -> bool {
        matches!(self, Method::DpMixSgd | Method::DpSgda)
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dpmixsgd" => Ok(Method::DpMixSgd),
            "dm_hsgd" => Ok(Method::DmHsgd),
            "sgda" => Ok(Method::Sgda),
            "dp_sgda" => Ok(Method::DpSgda),
            other => Err(format!(
                "unknown method {other:?}; expected dpmixsgd, dm_hsgd, sgda, or dp_sgda"
            )),
        }
    }
}

/// Step sizes, momentum weights, batch sizes, horizon, and noise scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub eta_x: f64,
    pub eta_y: f64,
    pub beta_x: f64,
    pub beta_y: f64,
    /// Initial large-batch size for the momentum estimators.
    pub b0: usize,
    /// Per-iteration minibatch size.
    pub batch: usize,
    /// Number of parameter updates T.
    pub iterations: usize,
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Optional norm threshold applied to fresh stochastic gradients.
    #[serde(default)]
    pub clip: Option<f64>,
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), OptError> {
        let fail = |msg: String| Err(OptError::BadHyperParams(msg));
        if !(self.eta_x > 0.0 && self.eta_y > 0.0) {
            return fail(format!("step sizes must be positive ({}, {})", self.eta_x, self.eta_y));
        }
        if !(self.beta_x > 0.0 && self.beta_x <= 1.0 && self.beta_y > 0.0 && self.beta_y <= 1.0) {
            return fail(format!(
                "momentum weights must lie in (0, 1] ({}, {})",
                self.beta_x, self.beta_y
            ));
        }
        if self.b0 < 1 || self.batch < 1 {
            return fail("batch sizes must be at least 1".to_string());
        }
        if self.iterations < 1 {
            return fail("iteration count must be at least 1".to_string());
        }
        if self.sigma_x < 0.0 || self.sigma_y < 0.0 {
            return fail("noise scales must be nonnegative".to_string());
        }
        if let Some(clip) = self.clip {
            if clip.is_nan() || clip <= 0.0 {
                return fail(format!("clip threshold must be positive, got {clip}"));
            }
        }
        Ok(())
    }
}

/// Per-agent optimizer state; current and previous-round copies of
/// everything a round reads.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: Array1<f64>,
    pub y: Array1<f64>,
    pub x_prev: Array1<f64>,
    pub y_prev: Array1<f64>,
    /// Local momentum estimators (x and y sides).
    pub g: Array1<f64>,
    pub g_prev: Array1<f64>,
    pub h: Array1<f64>,
    pub h_prev: Array1<f64>,
    /// Noisy estimators actually shared with neighbors.
    pub g_star: Array1<f64>,
    pub g_star_prev: Array1<f64>,
    pub h_star: Array1<f64>,
    pub h_star_prev: Array1<f64>,
    /// Direction consumed by the mixing step: the tracked estimator for
    /// momentum methods, the own noisy gradient for the plain baselines.
    pub v: Array1<f64>,
    pub u: Array1<f64>,
}

/// The whole simulated network.
#[derive(Debug, Clone)]
pub struct Network {
    pub agents: Vec<AgentState>,
    pub mixing: MixingMatrix,
}

impl Network {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn mean_x(&self) -> Array1<f64> {
        mean_of(self.agents.iter().map(|a| &a.x))
    }

    pub fn mean_y(&self) -> Array1<f64> {
        mean_of(self.agents.iter().map(|a| &a.y))
    }
}

fn mean_of<'a>(mut vectors: impl Iterator<Item = &'a Array1<f64>>) -> Array1<f64> {
    let first = vectors.next().expect("non-empty network");
    let mut acc = first.clone();
    let mut count = 1usize;
    for v in vectors {
        acc += v;
        count += 1;
    }
    acc / count as f64
}

/// One logged row of a run.
#[derive(Debug, Clone)]
pub struct IterStats {
    /// Parameter updates completed (0 is the shared initial point).
    pub iter: usize,
    pub x_bar: Array1<f64>,
    pub y_bar: Array1<f64>,
    pub consensus_x: f64,
    pub consensus_y: f64,
    /// Stationarity proxy, when the run was asked to compute it.
    pub grad_norm: Option<f64>,
    pub wall_ms: f64,
}

/// Receives rows as they are logged.
pub trait RunLogger {
    fn log(&mut self, stats: &IterStats);
}

/// Discards rows; the record still collects them.
pub struct NullLogger;

impl RunLogger for NullLogger {
    fn log(&mut self, _stats: &IterStats) {}
}

/// Controls what a run records beyond the iterates themselves.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Log a row every this many parameter updates (the initial point and
    /// the final update are always logged).
    pub log_interval: usize,
    /// Compute the stationarity proxy on logged rows.
    pub stationarity: Option<StationarityConfig>,
    /// Capture full per-agent snapshots every this many updates.
    pub capture_every: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { log_interval: 1, stationarity: None, capture_every: None }
    }
}

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub method: Method,
    pub rows: Vec<IterStats>,
    /// Mean iterate after each update; index 0 is the initial point.
    pub x_mean_traj: Vec<Array1<f64>>,
    pub y_mean_traj: Vec<Array1<f64>>,
    /// Uniformly drawn output index in {1, ..., T}.
    pub zeta: usize,
    /// The returned iterate `x̄_zeta`.
    pub x_out: Array1<f64>,
    /// Largest observed `||mean(v) - mean(g*)||` (resp. u/h*) across all
    /// rounds; exercises the mean-preservation identity of tracking.
    pub max_tracking_gap_x: f64,
    pub max_tracking_gap_y: f64,
    /// Full network snapshots (iteration, agents), when captured.
    pub snapshots: Vec<(usize, Vec<AgentState>)>,
}

impl RunRecord {
    pub fn final_x_bar(&self) -> &Array1<f64> {
        self.x_mean_traj.last().expect("trajectory is never empty")
    }

    pub fn final_y_bar(&self) -> &Array1<f64> {
        self.y_mean_traj.last().expect("trajectory is never empty")
    }
}

/// Momentum recursion on one estimator:
/// `(1 - beta)(prev_est - fresh_prev) + fresh_cur`.
pub fn storm_combine(
    prev_est: &Array1<f64>,
    fresh_prev: &Array1<f64>,
    fresh_cur: &Array1<f64>,
    beta: f64,
) -> Array1<f64> {
    let mut out = prev_est - fresh_prev;
    out *= 1.0 - beta;
    out += fresh_cur;
    out
}

/// Add isotropic Gaussian noise of scale `sigma`; `sigma = 0` is an exact
/// pass-through that draws nothing.
pub fn inject_noise(est: &Array1<f64>, sigma: f64, rng: &mut ChaCha8Rng) -> Array1<f64> {
    if sigma == 0.0 {
        return est.clone();
    }
    let noise = Array1::from_shape_fn(est.len(), |_| {
        sigma * rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    est + &noise
}

/// Gradient-tracking round: `v_i = sum_j w_ij (v_j + g*_j - g*_prev_j)`,
/// computed from frozen previous-round values.
pub fn gradient_track(
    mixing: &MixingMatrix,
    v_prev: &[Array1<f64>],
    g_star: &[Array1<f64>],
    g_star_prev: &[Array1<f64>],
) -> Vec<Array1<f64>> {
    let args: Vec<Array1<f64>> = v_prev
        .iter()
        .zip(g_star)
        .zip(g_star_prev)
        .map(|((v, g), gp)| v + &(g - gp))
        .collect();
    mixing.mix(&args)
}

/// Mixing step on iterates: `next_i = sum_j w_ij (iter_j + step * dir_j)`.
pub fn mix_step(
    mixing: &MixingMatrix,
    iterates: &[Array1<f64>],
    directions: &[Array1<f64>],
    step: f64,
) -> Vec<Array1<f64>> {
    let args: Vec<Array1<f64>> = iterates
        .iter()
        .zip(directions)
        .map(|(x, d)| x + &(step * d))
        .collect();
    mixing.mix(&args)
}

/// Batch of shard-local sample indices for `(seed, agent, iter)`. Asking
/// for at least the whole shard returns it in order (so a full batch is
/// the exact local gradient); smaller requests sample uniformly with
/// replacement.
pub fn sample_batch(seed: u64, agent: usize, iter: usize, count: usize, shard_len: usize) -> Vec<usize> {
    assert!(shard_len >= 1);
    if count >= shard_len {
        return (0..shard_len).collect();
    }
    let mut rng = agent_stream(seed, agent, iter, StreamKind::Batch);
    (0..count).map(|_| rng.random_range(0..shard_len)).collect()
}

/// Initialize the network: identical iterates everywhere, momentum
/// estimators from a size-`b0` batch, tracked estimators and previous
/// noisy estimators at zero.
pub fn init_agents<P: MinMaxProblem>(
    problem: &P,
    hp: &HyperParams,
    mixing: &MixingMatrix,
    seed: u64,
) -> Result<Network, OptError> {
    hp.validate()?;
    if problem.num_agents() != mixing.num_agents() {
        return Err(OptError::AgentCountMismatch {
            problem: problem.num_agents(),
            topology: mixing.num_agents(),
        });
    }
    let (x0, y0) = problem.initial_point();
    let m = problem.num_agents();
    let agents: Vec<AgentState> = (0..m)
        .into_par_iter()
        .map(|agent| -> Result<AgentState, OptError> {
            let batch = sample_batch(seed, agent, 0, hp.b0, problem.shard_len(agent));
            let mut g = problem.grad_x(agent, &x0, &y0, &batch)?;
            let mut h = problem.grad_y(agent, &x0, &y0, &batch)?;
            if let Some(clip) = hp.clip {
                clip_l2(&mut g, clip);
                clip_l2(&mut h, clip);
            }
            let d1 = x0.len();
            let d2 = y0.len();
            Ok(AgentState {
                x: x0.clone(),
                y: y0.clone(),
                x_prev: x0.clone(),
                y_prev: y0.clone(),
                g,
                g_prev: Array1::zeros(d1),
                h,
                h_prev: Array1::zeros(d2),
                g_star: Array1::zeros(d1),
                g_star_prev: Array1::zeros(d1),
                h_star: Array1::zeros(d2),
                h_star_prev: Array1::zeros(d2),
                v: Array1::zeros(d1),
                u: Array1::zeros(d2),
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Network { agents, mixing: mixing.clone() })
}

struct FreshEstimates {
    g: Array1<f64>,
    h: Array1<f64>,
    g_star: Array1<f64>,
    h_star: Array1<f64>,
}

/// Advance the network by one synchronous round (update index `t`,
/// 0-based; round 0 consumes the estimators prepared by `init_agents`).
fn advance_round<P: MinMaxProblem>(
    net: &mut Network,
    problem: &P,
    hp: &HyperParams,
    method: Method,
    seed: u64,
    t: usize,
) -> Result<(), OptError> {
    let (sigma_x, sigma_y) = if method.is_private() { (hp.sigma_x, hp.sigma_y) } else { (0.0, 0.0) };

    // Local estimator refresh + noise, independently per agent.
    let fresh: Vec<FreshEstimates> = net
        .agents
        .par_iter()
        .enumerate()
        .map(|(agent, state)| -> Result<FreshEstimates, OptError> {
            let (g, h) = if method.uses_tracking() {
                if t == 0 {
                    (state.g.clone(), state.h.clone())
                } else {
                    let batch = sample_batch(seed, agent, t, hp.batch, problem.shard_len(agent));
                    let mut cur_x = problem.grad_x(agent, &state.x, &state.y, &batch)?;
                    let mut cur_y = problem.grad_y(agent, &state.x, &state.y, &batch)?;
                    let mut prev_x = problem.grad_x(agent, &state.x_prev, &state.y_prev, &batch)?;
                    let mut prev_y = problem.grad_y(agent, &state.x_prev, &state.y_prev, &batch)?;
                    if let Some(clip) = hp.clip {
                        clip_l2(&mut cur_x, clip);
                        clip_l2(&mut cur_y, clip);
                        clip_l2(&mut prev_x, clip);
                        clip_l2(&mut prev_y, clip);
                    }
                    (
                        storm_combine(&state.g, &prev_x, &cur_x, hp.beta_x),
                        storm_combine(&state.h, &prev_y, &cur_y, hp.beta_y),
                    )
                }
            } else {
                let batch = sample_batch(seed, agent, t, hp.batch, problem.shard_len(agent));
                let mut g = problem.grad_x(agent, &state.x, &state.y, &batch)?;
                let mut h = problem.grad_y(agent, &state.x, &state.y, &batch)?;
                if let Some(clip) = hp.clip {
                    clip_l2(&mut g, clip);
                    clip_l2(&mut h, clip);
                }
                (g, h)
            };
            let g_star = inject_noise(&g, sigma_x, &mut agent_stream(seed, agent, t, StreamKind::NoiseX));
            let h_star = inject_noise(&h, sigma_y, &mut agent_stream(seed, agent, t, StreamKind::NoiseY));
            Ok(FreshEstimates { g, h, g_star, h_star })
        })
        .collect::<Result<_, _>>()?;

    // Aggregate neighbor estimators (or adopt the own noisy gradient).
    let (v_new, u_new) = if method.uses_tracking() {
        let v_prev: Vec<_> = net.agents.iter().map(|a| a.v.clone()).collect();
        let u_prev: Vec<_> = net.agents.iter().map(|a| a.u.clone()).collect();
        let g_star_new: Vec<_> = fresh.iter().map(|f| f.g_star.clone()).collect();
        let h_star_new: Vec<_> = fresh.iter().map(|f| f.h_star.clone()).collect();
        let g_star_old: Vec<_> = net.agents.iter().map(|a| a.g_star.clone()).collect();
        let h_star_old: Vec<_> = net.agents.iter().map(|a| a.h_star.clone()).collect();
        (
            gradient_track(&net.mixing, &v_prev, &g_star_new, &g_star_old),
            gradient_track(&net.mixing, &u_prev, &h_star_new, &h_star_old),
        )
    } else {
        (
            fresh.iter().map(|f| f.g_star.clone()).collect(),
            fresh.iter().map(|f| f.h_star.clone()).collect(),
        )
    };

    // Mix iterates; descend in x, ascend in y, then project y.
    let xs: Vec<_> = net.agents.iter().map(|a| a.x.clone()).collect();
    let ys: Vec<_> = net.agents.iter().map(|a| a.y.clone()).collect();
    let x_next = mix_step(&net.mixing, &xs, &v_new, -hp.eta_x);
    let mut y_next = mix_step(&net.mixing, &ys, &u_new, hp.eta_y);
    if problem.y_constrained() {
        for y in &mut y_next {
            problem.project_y(y);
        }
    }

    for (agent, ((((state, fresh), v), x), y)) in net
        .agents
        .iter_mut()
        .zip(fresh)
        .zip(v_new)
        .zip(x_next)
        .zip(y_next)
        .enumerate()
    {
        state.g_prev = mem::replace(&mut state.g, fresh.g);
        state.h_prev = mem::replace(&mut state.h, fresh.h);
        state.g_star_prev = mem::replace(&mut state.g_star, fresh.g_star);
        state.h_star_prev = mem::replace(&mut state.h_star, fresh.h_star);
        state.v = v;
        state.x_prev = mem::replace(&mut state.x, x);
        state.y_prev = mem::replace(&mut state.y, y);
        if state.x.iter().any(|a| !a.is_finite()) || state.y.iter().any(|a| !a.is_finite()) {
            return Err(OptError::NonFinite { iter: t + 1, agent });
        }
    }
    // u committed separately; the zip above is already deep enough.
    for (state, u) in net.agents.iter_mut().zip(u_new) {
        state.u = u;
    }
    Ok(())
}

/// Execute `hp.iterations` parameter updates of `method` and collect the
/// record. The trajectory is a pure function of
/// `(problem, hp, mixing, seed)` regardless of thread count.
pub fn run<P: MinMaxProblem>(
    method: Method,
    problem: &P,
    hp: &HyperParams,
    mixing: &MixingMatrix,
    seed: u64,
    opts: &RunOptions,
    logger: &mut dyn RunLogger,
) -> Result<RunRecord, OptError> {
    assert!(opts.log_interval >= 1, "log interval must be positive");
    let start = Instant::now();
    let mut net = init_agents(problem, hp, mixing, seed)?;
    let iterations = hp.iterations;

    let mut record = RunRecord {
        method,
        rows: Vec::new(),
        x_mean_traj: Vec::with_capacity(iterations + 1),
        y_mean_traj: Vec::with_capacity(iterations + 1),
        zeta: 0,
        x_out: Array1::zeros(problem.dim_x()),
        max_tracking_gap_x: 0.0,
        max_tracking_gap_y: 0.0,
        snapshots: Vec::new(),
    };
    record.x_mean_traj.push(net.mean_x());
    record.y_mean_traj.push(net.mean_y());

    let mut log_row = |net: &Network, iter: usize, record: &mut RunRecord| -> Result<(), OptError> {
        let x_bar = net.mean_x();
        let y_bar = net.mean_y();
        let grad_norm = match &opts.stationarity {
            Some(cfg) => Some(
                metrics::stationarity_norm(problem, &x_bar, &y_bar, cfg)
                    .map_err(|e| OptError::BadHyperParams(e.to_string()))?,
            ),
            None => None,
        };
        let (consensus_x, consensus_y) = metrics::consensus_error(net);
        let stats = IterStats {
            iter,
            consensus_x,
            consensus_y,
            x_bar,
            y_bar,
            grad_norm,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        logger.log(&stats);
        record.rows.push(stats);
        Ok(())
    };

    log_row(&net, 0, &mut record)?;
    if opts.capture_every.is_some() {
        record.snapshots.push((0, net.agents.clone()));
    }

    for t in 0..iterations {
        advance_round(&mut net, problem, hp, method, seed, t)?;
        record.x_mean_traj.push(net.mean_x());
        record.y_mean_traj.push(net.mean_y());

        // Mean-preservation diagnostic: the tracked mean must equal the
        // noisy-estimator mean at every round.
        let v_bar = mean_of(net.agents.iter().map(|a| &a.v));
        let g_star_bar = mean_of(net.agents.iter().map(|a| &a.g_star));
        let u_bar = mean_of(net.agents.iter().map(|a| &a.u));
        let h_star_bar = mean_of(net.agents.iter().map(|a| &a.h_star));
        record.max_tracking_gap_x = record.max_tracking_gap_x.max(l2(&(&v_bar - &g_star_bar)));
        record.max_tracking_gap_y = record.max_tracking_gap_y.max(l2(&(&u_bar - &h_star_bar)));

        let done = t + 1 == iterations;
        if (t + 1) % opts.log_interval == 0 || done {
            log_row(&net, t + 1, &mut record)?;
        }
        if let Some(every) = opts.capture_every {
            if (t + 1) % every == 0 || done {
                record.snapshots.push((t + 1, net.agents.clone()));
            }
        }
    }

    let mut out_rng = run_stream(seed, StreamKind::Output);
    record.zeta = out_rng.random_range(1..=iterations);
    record.x_out = record.x_mean_traj[record.zeta].clone();
    Ok(record)
}

pub fn run_dpmixsgd<P: MinMaxProblem>(
    problem: &P,
    hp: &HyperParams,
    mixing: &MixingMatrix,
    seed: u64,
    opts: &RunOptions,
    logger: &mut dyn RunLogger,
) -> Result<RunRecord, OptError> {
    run(Method::DpMixSgd, problem, hp, mixing, seed, opts, logger)
}

pub fn run_dm_hsgd<P: MinMaxProblem>(
    problem: &P,
    hp: &HyperParams,
    mixing: &MixingMatrix,
    seed: u64,
    opts: &RunOptions,
    logger: &mut dyn RunLogger,
) -> Result<RunRecord, OptError> {
    run(Method::DmHsgd, problem, hp, mixing, seed, opts, logger)
}

pub fn run_sgda<P: MinMaxProblem>(
    problem: &P,
    hp: &HyperParams,
    mixing: &MixingMatrix,
    seed: u64,
    opts: &RunOptions,
    logger: &mut dyn RunLogger,
) -> Result<RunRecord, OptError> {
    run(Method::Sgda, problem, hp, mixing, seed, opts, logger)
}

pub fn run_dp_sgda<P: MinMaxProblem>(
    problem: &P,
    hp: &HyperParams,
    mixing: &MixingMatrix,
    seed: u64,
    opts: &RunOptions,
    logger: &mut dyn RunLogger,
) -> Result<RunRecord, OptError> {
    run(Method::DpSgda, problem, hp, mixing, seed, opts, logger)
}
