//! Decentralized min-max optimization with differential privacy.
//!
//! This crate simulates a network of agents that jointly solve a
//! nonconvex–strongly-concave min-max problem by exchanging noisy
//! variance-reduced gradient estimators over a gossip topology:
//!
//! * [`topology`] — Erdős–Rényi graphs, Metropolis mixing weights, and
//!   measured spectral gaps.
//! * [`data`] — LIBSVM ingestion, sharding across agents, and synthetic
//!   binary datasets.
//! * [`objective`] — the min-max problem interface with a robust logistic
//!   regression benchmark and a quadratic saddle problem with a
//!   closed-form solution.
//! * [`optimizer`] — the noisy tracked-momentum method and its baselines
//!   (plain descent-ascent, its noisy variant, and the noise-free
//!   tracked-momentum method) over a simulated synchronous network.
//! * [`privacy`] — Gaussian noise calibration and moments-accountant
//!   primitives.
//! * [`metrics`] — AUROC, consensus error, and the stationarity proxy.

pub mod data;
pub mod linalg;
pub mod metrics;
pub mod objective;
pub mod optimizer;
pub mod privacy;
pub mod rng;
pub mod topology;

#[cfg(test)]
mod test_oracles;

pub use objective::{MinMaxProblem, ProblemMeta};
pub use optimizer::{HyperParams, Method, RunRecord};
pub use privacy::PrivacyBudget;
pub use topology::{Graph, MixingMatrix};
