//! Delimited-text metric tables.
//!
//! Every table starts with a `# gfsim <kind> v<version>` line followed by a
//! comma-separated column header. Rows are ordered by operating point (in
//! the order given) then by the table's own x axis. Floats use Rust's
//! shortest round-trip formatting; an empty `b2_fraction` means sharing.
//!
//! | table          | columns after the point key                                   |
//! |----------------|---------------------------------------------------------------|
//! | `latency_cdf`  | `latency_ms, cdf`                                             |
//! | `reward_curve` | `frame, mean_reward, packets`                                 |
//! | `summary`      | `replications, mean_reward, std_reward, delivery_ratio, throughput_bps, energy_efficiency_bpj` |
//! | `replications` | `replication, seed, mean_reward, packets, delivered, dropped, throughput_bps, energy_efficiency_bpj` |
//! | `tradeoff`     | `mean_reward, throughput_bps, energy_efficiency_bpj`          |
//!
//! The point key is `scheme, mode, num_iot, b2_fraction, deadline`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{mean_std, RunArtifacts};

pub const TABLE_VERSION: u32 = 1;

const KEY_COLUMNS: &str = "scheme,mode,num_iot,b2_fraction,deadline";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    LatencyCdf,
    RewardCurve,
    Summary,
    Replications,
    Tradeoff,
}

impl TableKind {
    pub const ALL: [TableKind; 5] = [
        TableKind::LatencyCdf,
        TableKind::RewardCurve,
        TableKind::Summary,
        TableKind::Replications,
        TableKind::Tradeoff,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TableKind::LatencyCdf => "latency_cdf",
            TableKind::RewardCurve => "reward_curve",
            TableKind::Summary => "summary",
            TableKind::Replications => "replications",
            TableKind::Tradeoff => "tradeoff",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.name())
    }

    fn value_columns(self) -> &'static str {
        match self {
            TableKind::LatencyCdf => "latency_ms,cdf",
            TableKind::RewardCurve => "frame,mean_reward,packets",
            TableKind::Summary => {
                "replications,mean_reward,std_reward,delivery_ratio,throughput_bps,energy_efficiency_bpj"
            }
            TableKind::Replications => {
                "replication,seed,mean_reward,packets,delivered,dropped,throughput_bps,energy_efficiency_bpj"
            }
            TableKind::Tradeoff => "mean_reward,throughput_bps,energy_efficiency_bpj",
        }
    }

    pub fn columns(self) -> String {
        format!("{KEY_COLUMNS},{}", self.value_columns())
    }

    pub fn header(self) -> String {
        format!("# gfsim {} v{TABLE_VERSION}\n{}\n", self.name(), self.columns())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("{table}: missing or wrong version line")]
    Version { table: &'static str },
    #[error("{table}: column header mismatch")]
    Columns { table: &'static str },
    #[error("{table} line {line}: expected {expected} fields, found {found}")]
    Width {
        table: &'static str,
        line: usize,
        expected: usize,
        found: usize,
    },
}

/// Checks the version line, the column header and the row widths.
pub fn validate(kind: TableKind, text: &str) -> Result<usize, TableError> {
    let table = kind.name();
    let mut lines = text.lines();
    if lines.next() != Some(&format!("# gfsim {table} v{TABLE_VERSION}")) {
        return Err(TableError::Version { table });
    }
    let cols = kind.columns();
    if lines.next() != Some(cols.as_str()) {
        return Err(TableError::Columns { table });
    }
    let expected = cols.split(',').count();
    let mut rows = 0;
    for (i, l) in lines.enumerate() {
        let found = l.split(',').count();
        if found != expected {
            return Err(TableError::Width {
                table,
                line: i + 3,
                expected,
                found,
            });
        }
        rows += 1;
    }
    Ok(rows)
}

/// Identifies one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointKey {
    pub scheme: String,
    pub mode: String,
    pub num_iot: usize,
    /// `None` under sharing.
    pub b2_fraction: Option<f64>,
    pub deadline: u32,
}

impl PointKey {
    fn prefix(&self) -> String {
        let b2 = self.b2_fraction.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            self.scheme, self.mode, self.num_iot, b2, self.deadline
        )
    }
}

/// All replications of one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRuns {
    pub key: PointKey,
    pub runs: Vec<RunArtifacts>,
}

/// Figures aggregated over the replications of a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSummary {
    pub replications: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub delivery_ratio: f64,
    pub throughput: f64,
    pub energy_efficiency: f64,
}

impl PointRuns {
    pub fn rewards(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.inference.mean_reward()).collect()
    }

    pub fn summary(&self) -> PointSummary {
        let (mean_reward, std_reward) = mean_std(&self.rewards());
        let delivered: u64 = self.runs.iter().map(|r| r.inference.delivered).sum();
        let packets: u64 = self.runs.iter().map(|r| r.inference.packets()).sum();
        let n = self.runs.len() as f64;
        PointSummary {
            replications: self.runs.len(),
            mean_reward,
            std_reward,
            delivery_ratio: delivered as f64 / packets as f64,
            throughput: self.runs.iter().map(|r| r.throughput).sum::<f64>() / n,
            energy_efficiency: self.runs.iter().map(|r| r.energy_efficiency).sum::<f64>() / n,
        }
    }
}

pub fn render(kind: TableKind, points: &[PointRuns]) -> String {
    let mut out = kind.header();
    for p in points {
        let key = p.key.prefix();
        match kind {
            TableKind::LatencyCdf => latency_rows(&mut out, &key, p),
            TableKind::RewardCurve => reward_rows(&mut out, &key, p),
            TableKind::Summary => {
                let s = p.summary();
                let _ = writeln!(
                    out,
                    "{key},{},{},{},{},{},{}",
                    s.replications,
                    s.mean_reward,
                    s.std_reward,
                    s.delivery_ratio,
                    s.throughput,
                    s.energy_efficiency
                );
            }
            TableKind::Replications => {
                for r in &p.runs {
                    let _ = writeln!(
                        out,
                        "{key},{},{},{},{},{},{},{},{}",
                        r.replication,
                        r.seed,
                        r.inference.mean_reward(),
                        r.inference.packets(),
                        r.inference.delivered,
                        r.inference.dropped,
                        r.throughput,
                        r.energy_efficiency
                    );
                }
            }
            TableKind::Tradeoff => {
                let s = p.summary();
                let _ = writeln!(
                    out,
                    "{key},{},{},{}",
                    s.mean_reward, s.throughput, s.energy_efficiency
                );
            }
        }
    }
    out
}

fn latency_rows(out: &mut String, key: &str, p: &PointRuns) {
    let Some(first) = p.runs.first() else { return };
    let len = p
        .runs
        .iter()
        .map(|r| r.inference.latency_counts.len())
        .max()
        .unwrap_or(0);
    let mut counts = vec![0u64; len];
    for r in &p.runs {
        for (l, c) in r.inference.latency_counts.iter().enumerate() {
            counts[l] += c;
        }
    }
    let packets: u64 = p.runs.iter().map(|r| r.inference.packets()).sum();
    let slot_ms = first.slot_duration * 1e3;
    let mut acc = counts.first().copied().unwrap_or(0);
    for (l, c) in counts.iter().enumerate().skip(1) {
        acc += c;
        let _ = writeln!(out, "{key},{},{}", l as f64 * slot_ms, acc as f64 / packets as f64);
    }
}

fn reward_rows(out: &mut String, key: &str, p: &PointRuns) {
    let mut merged: std::collections::BTreeMap<u64, (f64, u64)> = Default::default();
    for r in &p.runs {
        for w in &r.training.windows {
            let e = merged.entry(w.start_frame).or_insert((0.0, 0));
            e.0 += w.reward_sum;
            e.1 += w.packets;
        }
    }
    for (frame, (sum, n)) in merged {
        let _ = writeln!(out, "{key},{frame},{},{n}", sum / n as f64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{PhaseMetrics, WindowPoint};

    fn run(rep: u32, delivered_at: &[usize], dropped: u64) -> RunArtifacts {
        let mut inference = PhaseMetrics::new(5, 100);
        for &l in delivered_at {
            inference.latency_counts[l] += 1;
            inference.delivered += 1;
        }
        inference.dropped = dropped;
        inference.reward_sum = 10.0 * delivered_at.len() as f64;
        let mut training = PhaseMetrics::new(5, 100);
        training.windows = vec![WindowPoint {
            start_frame: 0,
            packets: 2,
            reward_sum: 3.0 + rep as f64,
        }];
        RunArtifacts {
            scheme: "VI".into(),
            replication: rep,
            seed: 7 + rep as u64,
            deployment_seed: 1,
            training,
            inference,
            broadband_rate: 5e6,
            broadband_power: 1e-6,
            block_len: 32,
            frame_length: 10,
            slot_duration: 1e-3,
            throughput: 4e6,
            energy_efficiency: 4e12,
        }
    }

    fn point(b2: Option<f64>) -> PointRuns {
        PointRuns {
            key: PointKey {
                scheme: "VI".into(),
                mode: "slicing".into(),
                num_iot: 4,
                b2_fraction: b2,
                deadline: 5,
            },
            runs: vec![run(0, &[2, 3], 0), run(1, &[3], 1)],
        }
    }

    #[test]
    fn every_table_validates() {
        let pts = vec![point(Some(0.5)), point(None)];
        for k in TableKind::ALL {
            let text = render(k, &pts);
            let rows = validate(k, &text).unwrap();
            assert!(rows > 0, "{}", k.name());
        }
    }

    #[test]
    fn latency_rows_pool_replications() {
        let text = render(TableKind::LatencyCdf, &[point(Some(0.5))]);
        let cdf: Vec<&str> = text.lines().skip(2).map(|l| l.rsplit(',').next().unwrap()).collect();
        assert_eq!(cdf, vec!["0", "0.25", "0.75", "0.75", "0.75"]);
        assert!(text.lines().nth(2).unwrap().starts_with("VI,slicing,4,0.5,5,1,"));
    }

    #[test]
    fn reward_curve_pools_windows() {
        let text = render(TableKind::RewardCurve, &[point(None)]);
        assert_eq!(text.lines().nth(2).unwrap(), "VI,slicing,4,,5,0,1.75,4");
    }

    #[test]
    fn rejects_bad_tables() {
        let text = render(TableKind::Summary, &[point(None)]);
        assert!(validate(TableKind::Tradeoff, &text).is_err());
        let broken = text.replace("slicing,4,", "slicing,");
        assert!(matches!(validate(TableKind::Summary, &broken), Err(TableError::Width { .. })));
        assert!(validate(TableKind::Summary, "").is_err());
    }
}
