//! Latency, reward, broadband throughput and energy efficiency.

pub mod tables;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::reward;
use crate::env::log::{FrameRecord, Termination};
use crate::env::{FrameFate, FrameResult};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no latency samples")]
    EmptySamples,
    #[error("no broadband block completed")]
    NoBlocks,
    #[error("broadband power must be positive, got {0}")]
    ZeroPower(f64),
    #[error("window length must be positive")]
    ZeroWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Delivered,
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencySample {
    pub user: u32,
    /// ms
    pub latency: f64,
    pub outcome: Outcome,
}

/// Empirical CDF on `grid` (ms). Dropped packets exceed every grid point so
/// the curve levels off at the delivery ratio.
pub fn latency_cdf(samples: &[LatencySample], grid: &[f64]) -> Result<Vec<(f64, f64)>, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptySamples);
    }
    let mut delivered: Vec<f64> = samples
        .iter()
        .filter(|s| s.outcome == Outcome::Delivered)
        .map(|s| s.latency)
        .collect();
    delivered.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    Ok(grid
        .iter()
        .map(|&x| {
            let k = delivered.partition_point(|&l| l <= x);
            (x, k as f64 / n)
        })
        .collect())
}

/// `S_b = r_b K / (mean(F) T_F)` with `T_F` in slots.
pub fn throughput(
    rate: f64,
    block_len: u32,
    frame_samples: &[u32],
    frame_length: usize,
) -> Result<f64, MetricsError> {
    if frame_samples.is_empty() {
        return Err(MetricsError::NoBlocks);
    }
    let mean_f = frame_samples.iter().map(|&f| f as f64).sum::<f64>() / frame_samples.len() as f64;
    Ok(rate * block_len as f64 / (mean_f * frame_length as f64))
}

/// bits per joule
pub fn energy_efficiency(throughput: f64, power: f64) -> Result<f64, MetricsError> {
    if power <= 0.0 || !power.is_finite() {
        return Err(MetricsError::ZeroPower(power));
    }
    Ok(throughput / power)
}

/// Mean terminal reward of the packets ending in one window of frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPoint {
    pub start_frame: u64,
    pub packets: u64,
    pub reward_sum: f64,
}

impl WindowPoint {
    pub fn mean(&self) -> f64 {
        self.reward_sum / self.packets as f64
    }
}

/// Terminal reward of one packet, from its final observation.
pub fn termination_reward(t: &Termination) -> f64 {
    reward(t.latency, t.repetitions, t.delivered)
}

/// Groups `(frame, reward)` terminations into windows of `window` frames.
/// Windows without packets are left out.
pub fn avg_reward_per_packet(
    terminations: impl IntoIterator<Item = (u64, f64)>,
    window: u64,
) -> Result<Vec<WindowPoint>, MetricsError> {
    if window == 0 {
        return Err(MetricsError::ZeroWindow);
    }
    let mut out: Vec<WindowPoint> = Vec::new();
    for (frame, r) in terminations {
        let start = frame / window * window;
        match out.last_mut() {
            Some(w) if w.start_frame == start => {
                w.packets += 1;
                w.reward_sum += r;
            }
            _ => out.push(WindowPoint {
                start_frame: start,
                packets: 1,
                reward_sum: r,
            }),
        }
    }
    Ok(out)
}

/// Per-phase tallies, fed frame by frame from live results or from a
/// parsed frame log in the same order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMetrics {
    pub window: u64,
    pub frames: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub reward_sum: f64,
    pub repetitions: u64,
    /// Delivered packets per latency in slots; index 0 unused.
    pub latency_counts: Vec<u64>,
    pub windows: Vec<WindowPoint>,
    pub block_frames: Vec<u32>,
    pub broadband_successes: u64,
}

impl PhaseMetrics {
    pub fn new(deadline: u32, window: u64) -> Self {
        Self {
            window: window.max(1),
            frames: 0,
            delivered: 0,
            dropped: 0,
            reward_sum: 0.0,
            repetitions: 0,
            latency_counts: vec![0; deadline as usize + 1],
            windows: Vec::new(),
            block_frames: Vec::new(),
            broadband_successes: 0,
        }
    }

    /// Frame index relative to the start of the phase.
    fn terminate(&mut self, frame: u64, t: &Termination) {
        let r = termination_reward(t);
        self.reward_sum += r;
        self.repetitions += t.repetitions as u64;
        if t.delivered {
            self.delivered += 1;
            let l = t.latency as usize;
            if l >= self.latency_counts.len() {
                self.latency_counts.resize(l + 1, 0);
            }
            self.latency_counts[l] += 1;
        } else {
            self.dropped += 1;
        }
        let start = frame / self.window * self.window;
        match self.windows.last_mut() {
            Some(w) if w.start_frame == start => {
                w.packets += 1;
                w.reward_sum += r;
            }
            _ => self.windows.push(WindowPoint {
                start_frame: start,
                packets: 1,
                reward_sum: r,
            }),
        }
    }

    fn close_frame(&mut self, bb_successes: u32, block_frames: Option<u32>) {
        self.frames += 1;
        self.broadband_successes += bb_successes as u64;
        if let Some(f) = block_frames {
            self.block_frames.push(f);
        }
    }

    pub fn observe_result(&mut self, frame: u64, r: &FrameResult) {
        for (u, uf) in r.users.iter().enumerate() {
            let t = match uf.fate {
                Some(FrameFate::Delivered {
                    latency,
                    repetitions,
                }) => Termination {
                    user: u as u32,
                    delivered: true,
                    latency,
                    repetitions,
                },
                Some(FrameFate::Dropped {
                    latency,
                    repetitions,
                }) => Termination {
                    user: u as u32,
                    delivered: false,
                    latency,
                    repetitions,
                },
                _ => continue,
            };
            self.terminate(frame, &t);
        }
        self.close_frame(r.broadband_successes, r.block_frames);
    }

    pub fn observe_record(&mut self, frame: u64, rec: &FrameRecord) {
        for t in &rec.terminations {
            self.terminate(frame, t);
        }
        self.close_frame(rec.broadband_successes, rec.block_frames);
    }

    pub fn packets(&self) -> u64 {
        self.delivered + self.dropped
    }

    /// Mean terminal reward per packet; NaN when no packet finished.
    pub fn mean_reward(&self) -> f64 {
        self.reward_sum / self.packets() as f64
    }

    pub fn delivery_ratio(&self) -> f64 {
        self.delivered as f64 / self.packets() as f64
    }

    /// CDF over the latency grid `1..=deadline` slots.
    pub fn latency_cdf_slots(&self) -> Vec<(u32, f64)> {
        let n = self.packets() as f64;
        let mut acc = 0u64;
        self.latency_counts
            .iter()
            .enumerate()
            .skip(1)
            .map(|(l, c)| {
                acc += c;
                (l as u32, acc as f64 / n)
            })
            .collect()
    }
}

/// Everything measured in one replication of one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub scheme: String,
    pub replication: u32,
    pub seed: u64,
    pub deployment_seed: u64,
    pub training: PhaseMetrics,
    pub inference: PhaseMetrics,
    /// bit/s
    pub broadband_rate: f64,
    /// W
    pub broadband_power: f64,
    pub block_len: u32,
    pub frame_length: usize,
    pub slot_duration: f64,
    /// bit/s; zero when no block completed during inference.
    pub throughput: f64,
    /// bit/J
    pub energy_efficiency: f64,
}

impl RunArtifacts {
    /// Fills the broadband figures from the inference tallies.
    pub fn finish_broadband(&mut self) {
        self.throughput = throughput(
            self.broadband_rate,
            self.block_len,
            &self.inference.block_frames,
            self.frame_length,
        )
        .unwrap_or(0.0);
        self.energy_efficiency =
            energy_efficiency(self.throughput, self.broadband_power).unwrap_or(0.0);
    }

    /// Recomputed throughput matches the stored one.
    pub fn throughput_consistent(&self, rel_tol: f64) -> bool {
        match throughput(
            self.broadband_rate,
            self.block_len,
            &self.inference.block_frames,
            self.frame_length,
        ) {
            Ok(s) => (s - self.throughput).abs() <= rel_tol * s.abs(),
            Err(_) => self.throughput == 0.0,
        }
    }
}

/// Sample mean and standard deviation (n - 1); NaN entries are skipped.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let v: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn delivered(l: f64) -> LatencySample {
        LatencySample {
            user: 0,
            latency: l,
            outcome: Outcome::Delivered,
        }
    }

    fn dropped() -> LatencySample {
        LatencySample {
            user: 1,
            latency: 60.0,
            outcome: Outcome::Dropped,
        }
    }

    #[test]
    fn point_mass_cdf() {
        let s = vec![delivered(5.0); 7];
        let c = latency_cdf(&s, &[4.0, 4.999, 5.0, 6.0]).unwrap();
        assert_eq!(c.iter().map(|p| p.1).collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 1.0]);
        assert_eq!(latency_cdf(&[], &[1.0]), Err(MetricsError::EmptySamples));
    }

    #[test]
    fn dropped_packets_cap_the_cdf() {
        let mut s: Vec<_> = (0..6).map(|i| delivered(i as f64 * 5.0)).collect();
        s.extend((0..4).map(|_| dropped()));
        let c = latency_cdf(&s, &[1000.0, 1e9]).unwrap();
        assert!(c.iter().all(|p| (p.1 - 0.6).abs() < 1e-12));
    }

    #[test]
    fn throughput_examples() {
        let s = throughput(5e6, 32, &[4, 4, 5, 4, 4], 10).unwrap();
        assert!((s - 5e6 * 32.0 / 42.0).abs() < 1e-6);
        assert!((s - 3.81e6).abs() / 3.81e6 < 1e-3);
        assert_eq!(throughput(5e6, 32, &[4; 10], 10).unwrap(), 4e6);
        assert_eq!(throughput(5e6, 32, &[8; 10], 10).unwrap(), 2e6);
        assert_eq!(throughput(5e6, 32, &[], 10), Err(MetricsError::NoBlocks));
    }

    #[test]
    fn energy_efficiency_examples() {
        let ee = energy_efficiency(3.81e6, 1.77e-6).unwrap();
        assert!((ee - 2.1525e12).abs() / 2.15e12 < 1e-3);
        assert_eq!(energy_efficiency(3.81e6, 0.2).unwrap(), 3.81e6 / 0.2);
        assert_eq!(energy_efficiency(2.0 * 3.81e6, 0.2).unwrap(), 2.0 * 3.81e6 / 0.2);
        assert_eq!(energy_efficiency(1.0, 0.0), Err(MetricsError::ZeroPower(0.0)));
    }

    #[test]
    fn window_means() {
        let w = avg_reward_per_packet((0..10).map(|f| (f, 25.0)), 100).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].mean(), 25.0);
        let w = avg_reward_per_packet((0..10).map(|f| (f, -1.0)), 100).unwrap();
        assert_eq!(w[0].mean(), -1.0);
        let w = avg_reward_per_packet((0..10).map(|f| (f, if f % 2 == 0 { 25.0 } else { -1.0 })), 100).unwrap();
        assert_eq!(w[0].mean(), 12.0);
        let w = avg_reward_per_packet([(5, 1.0), (250, 2.0)], 100).unwrap();
        assert_eq!(w.iter().map(|p| p.start_frame).collect::<Vec<_>>(), vec![0, 200]);
        assert!(avg_reward_per_packet([(0, 1.0)], 0).is_err());
    }

    #[test]
    fn phase_tallies() {
        let mut m = PhaseMetrics::new(50, 100);
        let rec = FrameRecord {
            frame: 3,
            actions: vec![1, 2],
            decodes: vec![(0, 0)],
            broadband_successes: 9,
            block_frames: Some(4),
            terminations: vec![
                Termination {
                    user: 0,
                    delivered: true,
                    latency: 0,
                    repetitions: 0,
                },
                Termination {
                    user: 1,
                    delivered: false,
                    latency: 60,
                    repetitions: 30,
                },
            ],
        };
        m.observe_record(3, &rec);
        assert_eq!(m.packets(), 2);
        assert_eq!(m.mean_reward(), 12.0);
        assert_eq!(m.block_frames, vec![4]);
        assert_eq!(m.delivery_ratio(), 0.5);
        let cdf = m.latency_cdf_slots();
        assert_eq!(cdf.len(), 50);
        assert!(cdf.iter().all(|p| p.1 == 0.0));
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(
            lat in proptest::collection::vec(0f64..100.0, 1..50),
            drops in 0usize..10,
            mut grid in proptest::collection::vec(0f64..120.0, 1..30),
        ) {
            let mut s: Vec<_> = lat.iter().map(|&l| delivered(l)).collect();
            s.extend((0..drops).map(|_| dropped()));
            grid.sort_by(f64::total_cmp);
            let c = latency_cdf(&s, &grid).unwrap();
            for w in c.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
            prop_assert!(c.iter().all(|p| p.1 <= 1.0 && p.1 >= 0.0));
        }

        #[test]
        fn throughput_is_homogeneous(fs in proptest::collection::vec(1u32..50, 1..40)) {
            let s1 = throughput(5e6, 32, &fs, 10).unwrap();
            let doubled: Vec<u32> = fs.iter().map(|f| f * 2).collect();
            let s2 = throughput(5e6, 32, &doubled, 10).unwrap();
            prop_assert!((s1 / s2 - 2.0).abs() < 1e-12);
        }
    }
}
