use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

use crate::env::SlotMask;

#[derive(Debug, Error, PartialEq)]
pub enum DegreeError {
    #[error("degree probabilities sum to {0}, expected 1")]
    Sum(f64),
    #[error("degree {degree} has invalid probability {prob}")]
    Prob { degree: usize, prob: f64 },
    #[error("degree {degree} exceeds the {uplink} uplink slots")]
    Support { degree: usize, uplink: usize },
}

/// Repetition degree law `Lambda(z) = sum_d Lambda_d z^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeDistribution {
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DegreeDistribution {
    pub fn new(pairs: &[(usize, f64)], uplink_slots: usize) -> Result<Self, DegreeError> {
        let mut probs = vec![0.0; uplink_slots + 1];
        for &(degree, prob) in pairs {
            if !(0.0..=1.0).contains(&prob) {
                return Err(DegreeError::Prob { degree, prob });
            }
            if degree > uplink_slots {
                return Err(DegreeError::Support {
                    degree,
                    uplink: uplink_slots,
                });
            }
            probs[degree] += prob;
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DegreeError::Sum(sum));
        }
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p / sum;
                acc
            })
            .collect();
        Ok(Self { probs, cumulative })
    }

    /// `0.25 z^2 + 0.60 z^3 + 0.15 z^8`.
    pub fn irsa_default(uplink_slots: usize) -> Result<Self, DegreeError> {
        Self::new(&[(2, 0.25), (3, 0.60), (8, 0.15)], uplink_slots)
    }

    pub fn prob(&self, degree: usize) -> f64 {
        self.probs.get(degree).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(d, p)| d as f64 * p).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        self.cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or_else(|| self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Distinct slots drawn uniformly.
    #[default]
    Random,
    /// The first `degree` slots.
    Consecutive,
}

/// Draws a degree and places the replicas.
pub fn irsa_policy<R: Rng + ?Sized>(
    dist: &DegreeDistribution,
    placement: Placement,
    uplink_slots: usize,
    rng: &mut R,
) -> SlotMask {
    let d = dist.sample(rng);
    match placement {
        Placement::Consecutive => SlotMask::consecutive(d),
        Placement::Random => SlotMask::from_slots(sample(rng, uplink_slots, d as usize)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_frequencies() {
        let d = DegreeDistribution::irsa_default(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut c = [0u32; 10];
        let n = 100_000;
        for _ in 0..n {
            c[d.sample(&mut rng) as usize] += 1;
        }
        for (deg, p) in [(2, 0.25), (3, 0.60), (8, 0.15)] {
            assert!((c[deg] as f64 / n as f64 - p).abs() < 0.01);
        }
        assert_eq!(c.iter().sum::<u32>(), n);
        assert!((d.mean() - 3.5).abs() < 1e-12);
    }

    #[test]
    fn placement() {
        let d = DegreeDistribution::irsa_default(9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10_000 {
            let m = irsa_policy(&d, Placement::Random, 9, &mut rng);
            assert!([2, 3, 8].contains(&m.degree()));
            assert_eq!(m.0 >> 9, 0);
        }
        let m = irsa_policy(&d, Placement::Consecutive, 9, &mut rng);
        assert_eq!(m, SlotMask::consecutive(m.degree()));
    }

    #[test]
    fn rejects_bad_laws() {
        assert!(matches!(DegreeDistribution::irsa_default(7), Err(DegreeError::Support { .. })));
        assert!(matches!(
            DegreeDistribution::new(&[(1, 0.5)], 9),
            Err(DegreeError::Sum(_))
        ));
        assert!(DegreeDistribution::new(&[(1, -0.5), (2, 1.5)], 9).is_err());
    }
}
