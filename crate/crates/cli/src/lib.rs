//! Experiment CLI for decentralized private min-max optimization:
//! config-driven sweeps, deterministic CSV results, and small utilities
//! for noise calibration and topology inspection.

pub mod config;
pub mod runner;
pub mod summary;
