//! Final-epoch aggregation across seeds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::runner::{read_rows, CsvRow, RunnerError};

/// One aggregated line: final AUROC statistics over seeds for a
/// (method, sweep point) group.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub m: usize,
    pub p: f64,
    pub theta: f64,
    pub gamma: f64,
    pub seeds: usize,
    pub auroc_mean: f64,
    pub auroc_min: f64,
    pub auroc_max: f64,
}

#[derive(PartialEq, Eq, PartialOrd, Ord, Clone)]
struct GroupKey {
    method: String,
    m: usize,
    p_bits: u64,
    theta_bits: u64,
    gamma_bits: u64,
}

/// Aggregate the final-iteration AUROC per (method, m, p, theta, gamma)
/// over seeds, across any number of result files.
pub fn summarize(paths: &[PathBuf]) -> Result<Vec<SummaryRow>, RunnerError> {
    let mut rows: Vec<CsvRow> = Vec::new();
    for path in paths {
        rows.extend(read_rows(path)?);
    }

    // Final row per (group, seed) = the one with the largest iter.
    let mut finals: BTreeMap<(GroupKey, u64), CsvRow> = BTreeMap::new();
    for row in rows {
        let key = (
            GroupKey {
                method: row.method.clone(),
                m: row.m,
                p_bits: row.p.to_bits(),
                theta_bits: row.theta.to_bits(),
                gamma_bits: row.gamma.to_bits(),
            },
            row.seed,
        );
        match finals.get(&key) {
            Some(existing) if existing.iter >= row.iter => {}
            _ => {
                finals.insert(key, row);
            }
        }
    }

    let mut groups: BTreeMap<GroupKey, Vec<f64>> = BTreeMap::new();
    for ((group, _seed), row) in finals {
        groups.entry(group).or_default().push(row.auroc_test);
    }

    Ok(groups
        .into_iter()
        .map(|(key, aurocs)| {
            let n = aurocs.len();
            let mean = aurocs.iter().sum::<f64>() / n as f64;
            let min = aurocs.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = aurocs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            SummaryRow {
                method: key.method,
                m: key.m,
                p: f64::from_bits(key.p_bits),
                theta: f64::from_bits(key.theta_bits),
                gamma: f64::from_bits(key.gamma_bits),
                seeds: n,
                auroc_mean: mean,
                auroc_min: min,
                auroc_max: max,
            }
        })
        .collect())
}

/// Aligned text table of the summary.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:<10} {:>4} {:>6} {:>8} {:>12} {:>6} {:>10} {:>10} {:>10}",
        "method", "m", "p", "theta", "gamma", "seeds", "mean", "min", "max"
    )
    .expect("write to string");
    for r in rows {
        writeln!(
            out,
            "{:<10} {:>4} {:>6} {:>8} {:>12} {:>6} {:>10.4} {:>10.4} {:>10.4}",
            r.method, r.m, r.p, r.theta, r.gamma, r.seeds, r.auroc_mean, r.auroc_min, r.auroc_max
        )
        .expect("write to string");
    }
    out
}

/// Write the summary as CSV.
pub fn write_summary(path: &PathBuf, rows: &[SummaryRow]) -> Result<(), RunnerError> {
    let mut writer = csv::Writer::from_path(path).map_err(RunnerError::Csv)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|source| RunnerError::Io { path: path.clone(), source })?;
    Ok(())
}
