//! Sweep resolution and execution.
//!
//! A config expands into the cross product of its sweep axes; each point
//! resolves to a topology, a sharded problem, hyperparameters, and a
//! calibrated noise scale, all recorded in the manifest before anything
//! runs. Jobs execute as an independent pool and their rows pass through
//! one serialized sink, sorted on a fixed key, so the emitted CSV is a
//! pure function of the config.

use std::path::PathBuf;
use std::sync::Arc;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use dpmix::data::{parse_libsvm_file, shard, split, synth_binary_with_flips, DataError, Dataset};
use dpmix::metrics::{auroc, MetricsError, StationarityConfig};
use dpmix::objective::{MinMaxProblem, RobustLogReg, RobustLogRegParams};
use dpmix::optimizer::{run, HyperParams, Method, NullLogger, OptError, RunOptions};
use dpmix::privacy::{calibrate_sigma, theorem1_schedule, PrivacyBudget, PrivacyError};
use dpmix::topology::{gen_erdos_renyi, metropolis_weights, MixingMatrix, TopologyError};

use crate::config::{DatasetSpec, ExperimentConfig, PointReport, Preset, ReportInfo};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("dataset: {0}")]
    Data(#[from] DataError),
    #[error("dataset: expected {expected} samples, file has {got}")]
    SampleCountMismatch { expected: usize, got: usize },
    #[error("dataset: test split needs both classes; adjust test_fraction or split_seed")]
    DegenerateTestSplit,
    #[error("topology: {0}")]
    Topology(#[from] TopologyError),
    #[error("privacy: {0}")]
    Privacy(#[from] PrivacyError),
    #[error("run {method} seed {seed} (m={m}, p={p}, theta={theta}, gamma={gamma}): {source}")]
    Run {
        method: &'static str,
        seed: u64,
        m: usize,
        p: f64,
        theta: f64,
        gamma: f64,
        #[source]
        source: OptError,
    },
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One row of the results CSV. Column set and order are part of the
/// output contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvRow {
    pub method: String,
    pub seed: u64,
    pub m: usize,
    pub p: f64,
    pub theta: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub iter: usize,
    pub epoch: f64,
    pub auroc_test: f64,
    pub grad_norm: f64,
    pub consensus_x: f64,
    pub consensus_y: f64,
    pub wall_ms: f64,
}

/// Fixed sink order: (method, seed, sweep key, iter).
fn cmp_rows(a: &CsvRow, b: &CsvRow) -> std::cmp::Ordering {
    a.method
        .cmp(&b.method)
        .then(a.seed.cmp(&b.seed))
        .then(a.m.cmp(&b.m))
        .then(a.p.total_cmp(&b.p))
        .then(a.theta.total_cmp(&b.theta))
        .then(a.gamma.total_cmp(&b.gamma))
        .then(a.iter.cmp(&b.iter))
}

/// Train/test data ready for sharding.
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
}

/// Load, optionally normalize, and split the dataset of a config.
pub fn load_dataset(spec: &DatasetSpec) -> Result<PreparedData, RunnerError> {
    let mut full = match spec {
        DatasetSpec::Libsvm { path, dim, expect_samples, .. } => {
            let ds = parse_libsvm_file(path, *dim)?;
            if let Some(expected) = expect_samples {
                if ds.len() != *expected {
                    return Err(RunnerError::SampleCountMismatch { expected: *expected, got: ds.len() });
                }
            }
            ds
        }
        DatasetSpec::Synthetic { n, d, margin, flip_fraction, data_seed, .. } => {
            synth_binary_with_flips(*n, *d, *margin, *flip_fraction, *data_seed)
        }
    };
    if spec.normalize() {
        full.scale_to_unit_norm();
    }
    let (train, test) = split(&full, spec.test_fraction(), spec.split_seed());
    let has_both = |ds: &Dataset| {
        ds.labels().iter().any(|&l| l > 0.0) && ds.labels().iter().any(|&l| l < 0.0)
    };
    if spec.test_fraction() > 0.0 && (!has_both(&test) || !has_both(&train)) {
        return Err(RunnerError::DegenerateTestSplit);
    }
    Ok(PreparedData { train, test })
}

struct SweepPoint {
    m: usize,
    p: f64,
    theta: f64,
    gamma: f64,
    problem: Arc<RobustLogReg>,
    mixing: MixingMatrix,
    hyper: HyperParams,
    sigma: f64,
    iters_per_epoch: usize,
    log_interval: usize,
}

/// Resolve every sweep point: topology, problem, hyperparameters, and
/// noise calibration. Pure given the config and dataset bytes.
fn resolve_points(
    cfg: &ExperimentConfig,
    data: &PreparedData,
) -> Result<(Vec<SweepPoint>, ReportInfo), RunnerError> {
    let mut points = Vec::new();
    let mut report = ReportInfo::default();

    for &m in &cfg.sweep.agents {
        let sharding = shard(&data.train, m, cfg.dataset.shard_mode(), cfg.dataset.data_seed())?;
        let problem = Arc::new(RobustLogReg::new(
            data.train.clone(),
            &sharding,
            RobustLogRegParams::benchmark_defaults(m),
        ));
        let max_shard = sharding.max_shard_len();
        let iters_per_epoch = max_shard.div_ceil(cfg.hyper.batch);

        for &p in &cfg.sweep.sparsity {
            let graph = gen_erdos_renyi(m, p, cfg.sweep.topology_seed);
            let mixing = metropolis_weights(&graph)?;

            for &theta in &cfg.sweep.theta {
                for &gamma in &cfg.sweep.gamma {
                    let meta = problem.meta();
                    let mut hyper = match cfg.hyper.preset {
                        Preset::Manual => HyperParams {
                            eta_x: cfg.hyper.eta_x.expect("validated"),
                            eta_y: cfg.hyper.eta_y.expect("validated"),
                            beta_x: cfg.hyper.beta_x.expect("validated"),
                            beta_y: cfg.hyper.beta_y.expect("validated"),
                            b0: cfg.hyper.b0.expect("validated"),
                            batch: cfg.hyper.batch,
                            iterations: 1, // horizon applied below
                            sigma_x: 0.0,
                            sigma_y: 0.0,
                            clip: cfg.hyper.clip,
                        },
                        Preset::Theorem1 => {
                            let mut preset = theorem1_schedule(
                                cfg.hyper.epsilon.expect("validated"),
                                meta.kappa().max(1.0),
                                mixing.lambda(),
                                m,
                                meta.smoothness,
                            )?;
                            preset.batch = cfg.hyper.batch;
                            if let Some(b0) = cfg.hyper.b0 {
                                preset.b0 = b0;
                            }
                            if let Some(eta_x) = cfg.hyper.eta_x {
                                preset.eta_x = eta_x;
                            }
                            if let Some(eta_y) = cfg.hyper.eta_y {
                                preset.eta_y = eta_y;
                            }
                            preset.clip = cfg.hyper.clip;
                            preset
                        }
                    };
                    hyper.iterations = match (cfg.hyper.iterations, cfg.hyper.epochs) {
                        (Some(t), _) => t,
                        (None, Some(e)) => e * iters_per_epoch,
                        (None, None) => hyper.iterations, // theorem1 horizon
                    };
                    // Initialization batch never exceeds the shard.
                    hyper.b0 = hyper.b0.min(max_shard).max(1);

                    let grad_bound = cfg.privacy.grad_bound.unwrap_or(meta.grad_bound);
                    let sigma = match cfg.privacy.sigma_override {
                        Some(s) => s,
                        None => {
                            let budget =
                                PrivacyBudget::with_constant(theta, gamma, cfg.privacy.c, grad_bound)?;
                            calibrate_sigma(&budget, hyper.iterations, m).0
                        }
                    };
                    hyper.sigma_x = sigma;
                    hyper.sigma_y = sigma;

                    let log_interval = cfg.logging.interval_iters.unwrap_or(iters_per_epoch).max(1);

                    report.points.push(PointReport {
                        m,
                        p,
                        theta,
                        gamma,
                        lambda: mixing.lambda(),
                        edges: graph.num_edges(),
                        effective_p: graph.sparsity(),
                        repaired: graph.was_repaired(),
                        edge_list: graph.to_edge_list(),
                        grad_bound,
                        sigma,
                        iters_per_epoch,
                        hyper,
                    });
                    points.push(SweepPoint {
                        m,
                        p,
                        theta,
                        gamma,
                        problem: Arc::clone(&problem),
                        mixing: mixing.clone(),
                        hyper,
                        sigma,
                        iters_per_epoch,
                        log_interval,
                    });
                }
            }
        }
    }
    Ok((points, report))
}

fn execute_job(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    point: &SweepPoint,
    method: Method,
    seed: u64,
) -> Result<Vec<CsvRow>, RunnerError> {
    let wrap = |source: OptError| RunnerError::Run {
        method: method.name(),
        seed,
        m: point.m,
        p: point.p,
        theta: point.theta,
        gamma: point.gamma,
        source,
    };
    let stationarity = cfg.logging.stationarity.then(|| {
        StationarityConfig::new(
            cfg.logging.inner_steps,
            1.0 / point.problem.meta().smoothness,
            cfg.logging.inner_tol,
        )
    });
    let opts = RunOptions {
        log_interval: point.log_interval,
        stationarity,
        capture_every: None,
    };
    let record = run(
        method,
        point.problem.as_ref(),
        &point.hyper,
        &point.mixing,
        seed,
        &opts,
        &mut NullLogger,
    )
    .map_err(wrap)?;

    let effective_sigma = if method.is_private() { point.sigma } else { 0.0 };
    let mut rows = Vec::with_capacity(record.rows.len());
    for stats in &record.rows {
        let scores: Array1<f64> = data.test.features().dot(&stats.x_bar);
        let auroc_test = auroc(&scores, data.test.labels())?;
        rows.push(CsvRow {
            method: method.name().to_string(),
            seed,
            m: point.m,
            p: point.p,
            theta: point.theta,
            gamma: point.gamma,
            sigma: effective_sigma,
            iter: stats.iter,
            epoch: stats.iter as f64 / point.iters_per_epoch as f64,
            auroc_test,
            grad_norm: stats.grad_norm.unwrap_or(f64::NAN),
            consensus_x: stats.consensus_x,
            consensus_y: stats.consensus_y,
            wall_ms: if cfg.logging.record_wall_time { stats.wall_ms } else { 0.0 },
        });
    }
    log::info!(
        "finished {} seed {} (m={}, p={}, theta={}, gamma={}): final auroc {:.4}",
        method.name(),
        seed,
        point.m,
        point.p,
        point.theta,
        point.gamma,
        rows.last().map(|r| r.auroc_test).unwrap_or(f64::NAN)
    );
    Ok(rows)
}

/// Paths produced by a finished (or partially finished) experiment.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub results_csv: PathBuf,
    pub manifest: PathBuf,
    pub rows_written: usize,
}

pub fn write_rows(path: &PathBuf, rows: &[CsvRow]) -> Result<(), RunnerError> {
    let mut writer = csv::Writer::from_path(path).map_err(RunnerError::Csv)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|source| RunnerError::Io { path: path.clone(), source })?;
    Ok(())
}

/// Run the whole sweep. The manifest (resolved config + per-point
/// topology, hyperparameters, and noise) is written before any job runs;
/// rows from completed jobs are flushed even when a later job aborts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, RunnerError> {
    let data = load_dataset(&cfg.dataset)?;
    let (points, report) = resolve_points(cfg, &data)?;

    std::fs::create_dir_all(&cfg.output_dir).map_err(|source| RunnerError::Io {
        path: cfg.output_dir.clone(),
        source,
    })?;
    let manifest_path = cfg.output_dir.join("manifest.toml");
    let mut manifest_cfg = cfg.clone();
    manifest_cfg.report = Some(report);
    std::fs::write(&manifest_path, manifest_cfg.to_toml()).map_err(|source| RunnerError::Io {
        path: manifest_path.clone(),
        source,
    })?;

    let jobs: Vec<(usize, Method, u64)> = points
        .iter()
        .enumerate()
        .flat_map(|(idx, _)| {
            cfg.sweep
                .methods
                .iter()
                .flat_map(move |&method| cfg.sweep.seeds.iter().map(move |&seed| (idx, method, seed)))
        })
        .collect();

    let results: Vec<Result<Vec<CsvRow>, RunnerError>> = jobs
        .par_iter()
        .map(|&(idx, method, seed)| execute_job(cfg, &data, &points[idx], method, seed))
        .collect();

    let mut rows = Vec::new();
    let mut first_error = None;
    for result in results {
        match result {
            Ok(mut r) => rows.append(&mut r),
            Err(e) if first_error.is_none() => first_error = Some(e),
            Err(_) => {}
        }
    }
    rows.sort_by(cmp_rows);

    let results_path = cfg.output_dir.join("results.csv");
    write_rows(&results_path, &rows)?;

    match first_error {
        Some(e) => Err(e),
        None => Ok(ExperimentOutput {
            results_csv: results_path,
            manifest: manifest_path,
            rows_written: rows.len(),
        }),
    }
}

/// Read rows back from a results CSV.
pub fn read_rows(path: &PathBuf) -> Result<Vec<CsvRow>, RunnerError> {
    let mut reader = csv::Reader::from_path(path).map_err(RunnerError::Csv)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}
