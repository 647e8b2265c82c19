//! Independent oracles and statistics shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use gfsim::sic::{FrameSignalLog, PacketId, SlotTransmission, UserId};
use statrs::distribution::{Binomial, ContinuousCDF, Discrete, StudentsT};

/// Decoded packets reachable by trying every decode order. Returns `None`
/// when two maximal orders end in different sets.
pub fn sic_closure(log: &FrameSignalLog) -> Option<BTreeSet<PacketId>> {
    let packets: Vec<PacketId> = log.packets().into_iter().collect();
    let bit = |p: PacketId| 1u32 << packets.iter().position(|&q| q == p).unwrap();
    let mut memo: HashMap<u32, Option<u32>> = HashMap::new();
    let end = explore(log, 0, &bit, &mut memo)?;
    Some(
        packets
            .iter()
            .enumerate()
            .filter(|(i, _)| end >> i & 1 == 1)
            .map(|(_, p)| *p)
            .collect(),
    )
}

fn explore(
    log: &FrameSignalLog,
    decoded: u32,
    bit: &dyn Fn(PacketId) -> u32,
    memo: &mut HashMap<u32, Option<u32>>,
) -> Option<u32> {
    if let Some(r) = memo.get(&decoded) {
        return *r;
    }
    let mut ends = BTreeSet::new();
    for slot in &log.slots {
        let live: Vec<&SlotTransmission> =
            slot.iter().filter(|t| decoded & bit(t.packet) == 0).collect();
        let total: f64 = live.iter().map(|t| t.gain_power).sum();
        for t in &live {
            let sinr = t.gain_power / (total - t.gain_power + log.noise_power);
            if sinr >= t.sinr_threshold {
                match explore(log, decoded | bit(t.packet), bit, memo) {
                    Some(e) => {
                        ends.insert(e);
                    }
                    None => {
                        memo.insert(decoded, None);
                        return None;
                    }
                }
            }
        }
    }
    let r = match ends.len() {
        0 => Some(decoded),
        1 => ends.into_iter().next(),
        _ => None,
    };
    memo.insert(decoded, r);
    r
}

/// Every frame with up to `max_packets` packets over `slots` slots, each
/// packet sending one or two replicas, all replicas of a packet at the same
/// received power drawn from `levels`.
pub fn enumerate_frames(max_packets: usize, slots: usize, levels: &[f64], threshold: f64) -> Vec<FrameSignalLog> {
    let mut placements: Vec<Vec<usize>> = (0..slots).map(|s| vec![s]).collect();
    for a in 0..slots {
        for b in a + 1..slots {
            placements.push(vec![a, b]);
        }
    }
    let choices: Vec<(usize, f64)> = placements
        .iter()
        .enumerate()
        .flat_map(|(i, _)| levels.iter().map(move |&g| (i, g)))
        .collect();
    let mut out = Vec::new();
    for n in 1..=max_packets {
        let mut idx = vec![0usize; n];
        loop {
            let mut log = FrameSignalLog::new(slots, 1.0);
            for (p, &c) in idx.iter().enumerate() {
                let (pl, g) = choices[c];
                for &s in &placements[pl] {
                    log.push(
                        s,
                        SlotTransmission {
                            user: UserId(p as u32),
                            packet: PacketId(p as u64),
                            gain_power: g,
                            sinr_threshold: threshold,
                        },
                    );
                }
            }
            out.push(log);
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] < choices.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
    }
    out
}

/// Expected number of frames to collect `k` encoded packets when each frame
/// adds `Binomial(slots, p)`; packets past `k` are not carried over.
pub fn expected_block_frames(p: f64, slots: u64, k: u32) -> f64 {
    let b = Binomial::new(p, slots).unwrap();
    let pk: Vec<f64> = (0..=slots).map(|i| b.pmf(i)).collect();
    let mut f = vec![0.0; k as usize + slots as usize + 1];
    for r in (0..k as usize).rev() {
        let ahead: f64 = (1..=slots as usize).map(|i| pk[i] * f[r + i]).sum();
        f[r] = (1.0 + ahead) / (1.0 - pk[0]);
    }
    f[0]
}

/// p-value of the one-sided paired t-test for `mean(a - b) > 0`.
pub fn paired_greater_p(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd == 0.0 {
        return if m > 0.0 { 0.0 } else { 1.0 };
    }
    let t = m / (sd / n.sqrt());
    1.0 - StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t)
}

/// OLS slope of `y` on `x` and its two-sided p-value.
pub fn slope_test(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    let se = (resid / (n - 2.0) / sxx).sqrt();
    if se == 0.0 {
        return (slope, if slope == 0.0 { 1.0 } else { 0.0 });
    }
    let t = slope / se;
    let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, n - 2.0).unwrap().cdf(t.abs()));
    (slope, p)
}

/// Largest gap between an empirical CDF and a reference CDF on shared
/// support points.
pub fn kolmogorov(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
