use rand::Rng;

/// Boltzmann weights `exp((q_a - max q) / tau)` normalized to one.
pub fn softmax_probs(values: &[f64], temperature: f64) -> Vec<f64> {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = values
        .iter()
        .map(|&q| ((q - m) / temperature).exp())
        .collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Samples an action index from [`softmax_probs`].
pub fn softmax_select<R: Rng + ?Sized>(values: &[f64], temperature: f64, rng: &mut R) -> usize {
    let p = softmax_probs(values, temperature);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the running sum; pick the last positive entry
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Geometric annealing from `start` to `end` over `frames` frames, then held
/// at `end`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TemperatureSchedule {
    pub start: f64,
    pub end: f64,
    pub frames: u64,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self {
            start: 5.0,
            end: 0.05,
            frames: 5000,
        }
    }
}

impl TemperatureSchedule {
    pub fn at(&self, frame: u64) -> f64 {
        if self.frames <= 1 {
            return self.end;
        }
        let x = frame.min(self.frames - 1) as f64 / (self.frames - 1) as f64;
        self.start * (self.end / self.start).powf(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn equal_values_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let k = 10;
        let n = 100_000;
        let mut counts = vec![0f64; k];
        for _ in 0..n {
            counts[softmax_select(&vec![1.5; k], 0.7, &mut rng)] += 1.0;
        }
        let e = n as f64 / k as f64;
        let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
        let p = 1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 0.001, "chi2 {chi2} p {p}");
    }

    #[test]
    fn two_action_closed_form() {
        let tau = 0.8;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v = [0.0, 2f64.ln() * tau];
        let n = 100_000;
        let hits = (0..n).filter(|_| softmax_select(&v, tau, &mut rng) == 1).count();
        assert!((hits as f64 / n as f64 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn cold_limit_is_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v = [0.1, 0.3, 0.2];
        assert!((0..10_000).all(|_| softmax_select(&v, 1e-4, &mut rng) == 1));
        let p = softmax_probs(&[1e6, -1e6], 1e-9);
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn schedule_endpoints() {
        let s = TemperatureSchedule::default();
        assert!((s.at(0) - 5.0).abs() < 1e-12);
        assert!((s.at(4999) - 0.05).abs() < 1e-12);
        assert_eq!(s.at(100_000), s.at(4999));
        assert!(s.at(10) > s.at(11));
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one(v in proptest::collection::vec(-1e6f64..1e6, 1..12), tau in 1e-6f64..1e3) {
            let p = softmax_probs(&v, tau);
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }
}
