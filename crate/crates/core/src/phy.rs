//! Link-level physics: path loss, Rayleigh block fading, noise, SINR,
//! decoding thresholds and the broadband rate/power rule.
//!
//! All quantities are SI (W, Hz, m, bit/s); gains are linear.

use rand::Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::scenario::SystemParams;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhyError {
    #[error("{what} must be strictly positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
}

fn require_positive(what: &'static str, value: f64) -> Result<(), PhyError> {
    if value > 0.0 {
        Ok(())
    } else {
        Err(PhyError::NonPositive { what, value })
    }
}

/// Mean channel power gain `E|h|^2` at `distance` metres: free-space gain at
/// one metre times `distance^-eta`.
pub fn pathloss_gain(distance: f64, params: &SystemParams) -> Result<f64, PhyError> {
    require_positive("distance", distance)?;
    let wavelength_term = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * params.carrier_freq);
    Ok(params.antenna_gain_tx
        * params.antenna_gain_rx
        * wavelength_term.powi(2)
        * distance.powf(-params.pathloss_exponent))
}

/// One draw of `|h|^2` for a link with mean gain `beta`: exponential with
/// mean `beta`.
pub fn sample_channel_power<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> Result<f64, PhyError> {
    require_positive("beta", beta)?;
    let e: f64 = rng.sample(Exp1);
    Ok(beta * e)
}

/// Thermal noise power over `width` Hz.
pub fn noise_power(width: f64, params: &SystemParams) -> Result<f64, PhyError> {
    require_positive("sub-band width", width)?;
    Ok(BOLTZMANN * params.noise_temperature * 10f64.powf(params.noise_figure_db / 10.0) * width)
}

/// Signal-to-interference-plus-noise ratio of a received power `target`.
pub fn sinr(target: f64, interferers: &[f64], noise: f64) -> f64 {
    let interference: f64 = interferers.iter().sum();
    target / (interference + noise)
}

/// Minimum SINR for decoding at `rate` bit/s over `width` Hz.
pub fn decode_threshold(rate: f64, width: f64) -> f64 {
    (rate / width).exp2() - 1.0
}

/// Rate of an IoT user: one packet per slot.
pub fn iot_rate(params: &SystemParams) -> f64 {
    8.0 * params.iot_packet_bytes as f64 / params.slot_duration
}

/// `-ln(1 - eps)`: the normalised SNR margin at which a Rayleigh link is
/// erased with probability `eps`.
pub fn rayleigh_margin(eps: f64) -> f64 {
    -(-eps).ln_1p()
}

/// Per-link constants held fixed for a deployment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub beta: f64,
    pub noise_power: f64,
    pub tx_power: f64,
    pub rate: f64,
    pub sinr_threshold: f64,
}

impl LinkBudget {
    pub fn new(beta: f64, noise_power: f64, tx_power: f64, rate: f64, width: f64) -> Self {
        Self {
            beta,
            noise_power,
            tx_power,
            rate,
            sinr_threshold: decode_threshold(rate, width),
        }
    }

    /// Mean received power `beta * P`.
    pub fn mean_rx_power(&self) -> f64 {
        self.beta * self.tx_power
    }
}

/// `Pr(SINR >= threshold)` for a Rayleigh link with no interferers.
pub fn interference_free_success_prob(budget: &LinkBudget) -> f64 {
    (-budget.sinr_threshold * budget.noise_power / (budget.beta * budget.tx_power)).exp()
}

/// Highest broadband rate meeting the erasure target at full power, capped
/// at the configured maximum rate.
pub fn select_broadband_rate(params: &SystemParams, beta_b: f64, width: f64) -> Result<f64, PhyError> {
    require_positive("beta_b", beta_b)?;
    let noise = noise_power(width, params)?;
    let margin = rayleigh_margin(params.broadband_target_erasure);
    let unclamped = width * (1.0 + margin * beta_b * params.max_power / noise).log2();
    Ok(unclamped.min(params.broadband_max_rate))
}

/// Broadband transmit power that makes the interference-free erasure
/// probability equal the target at rate `r_b`, capped at the maximum power.
pub fn broadband_power(
    r_b: f64,
    beta_b: f64,
    width: f64,
    params: &SystemParams,
) -> Result<f64, PhyError> {
    require_positive("r_b", r_b)?;
    let noise = noise_power(width, params)?;
    let margin = rayleigh_margin(params.broadband_target_erasure);
    let needed = decode_threshold(r_b, width) * noise / (beta_b * margin);
    Ok(if needed.is_nan() {
        params.max_power
    } else {
        needed.min(params.max_power)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p() -> SystemParams {
        SystemParams::default()
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn pathloss_reference_points() {
        // direct evaluation with c = 2.998e8 m/s, f_c = 2 GHz, eta = 2.6, Gt*Gr = 100
        assert!(rel(pathloss_gain(100.0, &p()).unwrap(), 8.99e-8) < 2e-3);
        assert!(rel(pathloss_gain(35.0, &p()).unwrap(), 1.378e-6) < 2e-3);
        assert!(pathloss_gain(0.0, &p()).is_err());
        assert!(pathloss_gain(-5.0, &p()).is_err());
    }

    #[test]
    fn exponential_fading_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut above_median = 0usize;
        for _ in 0..n {
            let g = sample_channel_power(1.0, &mut rng).unwrap();
            sum += g;
            if g > std::f64::consts::LN_2 {
                above_median += 1;
            }
        }
        let mean = sum / n as f64;
        assert!((0.995..=1.005).contains(&mean), "mean {mean}");
        let frac = above_median as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 0.002, "median split {frac}");
        assert!(sample_channel_power(0.0, &mut rng).is_err());
    }

    #[test]
    fn noise_reference_points() {
        assert!(rel(noise_power(1e6, &p()).unwrap(), 8.295e-15) < 1e-3);
        assert!(rel(noise_power(0.5e6, &p()).unwrap(), 4.148e-15) < 1e-3);
        let sum = noise_power(0.3e6, &p()).unwrap() + noise_power(0.7e6, &p()).unwrap();
        assert!(rel(sum, noise_power(1e6, &p()).unwrap()) < 1e-12);
    }

    #[test]
    fn sinr_arithmetic() {
        assert_eq!(sinr(4.0, &[], 2.0), 2.0);
        assert!((sinr(4.0, &[2.0, 2.0], 2.0) - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(sinr(4.0, &[], 2.0), sinr(4.0, &[0.0], 2.0));
    }

    #[test]
    fn thresholds() {
        assert!((decode_threshold(5e6, 1e6) - 31.0).abs() < 1e-12);
        let iot = decode_threshold(iot_rate(&p()), 1e6);
        assert!((iot - 1.034).abs() < 1e-3, "{iot}");
        assert!(decode_threshold(1e-9, 1e6) < 1e-12);
        assert_eq!(iot_rate(&p()), 1.024e6);
    }

    #[test]
    fn success_prob_closed_form() {
        let budget = LinkBudget {
            beta: 1.0,
            noise_power: 1.0,
            tx_power: 1.0,
            rate: 0.0,
            sinr_threshold: 0.0,
        };
        assert_eq!(interference_free_success_prob(&budget), 1.0);

        let params = p();
        let budget = LinkBudget::new(
            pathloss_gain(100.0, &params).unwrap(),
            noise_power(1e6, &params).unwrap(),
            params.max_power,
            iot_rate(&params),
            1e6,
        );
        let q = interference_free_success_prob(&budget);
        assert!(rel(1.0 - q, 4.8e-7) < 0.01, "1-q = {}", 1.0 - q);
    }

    /// Sampling oracle: `Pr(beta*P*E >= thr*noise)` estimated by drawing
    /// fading directly.
    fn mc_success(budget: &LinkBudget, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let need = budget.sinr_threshold * budget.noise_power;
        let hits = (0..n)
            .filter(|_| sample_channel_power(budget.beta, &mut rng).unwrap() * budget.tx_power >= need)
            .count();
        hits as f64 / n as f64
    }

    #[test]
    fn success_prob_matches_sampling_at_three_points() {
        for (i, thr) in [0.2, 1.0, 3.0].into_iter().enumerate() {
            let budget = LinkBudget {
                beta: 2.0,
                noise_power: 1.0,
                tx_power: 1.0,
                rate: 0.0,
                sinr_threshold: thr,
            };
            let q = interference_free_success_prob(&budget);
            let est = mc_success(&budget, 1_000_000, 10 + i as u64);
            assert!((q - est).abs() <= 1e-3, "thr {thr}: {q} vs {est}");
        }
    }

    #[test]
    fn broadband_rate_clamps_at_close_range() {
        let params = p();
        let beta = pathloss_gain(35.0, &params).unwrap();
        let r = select_broadband_rate(&params, beta, 1e6).unwrap();
        assert_eq!(r, 5e6);
        let pb = broadband_power(r, beta, 1e6, &params).unwrap();
        assert!(rel(pb, 1.77e-6) < 5e-3, "{pb}");
        assert!(pb <= params.max_power);
    }

    #[test]
    fn broadband_rate_unclamped_when_link_is_weak() {
        let params = p();
        let beta = 1e-13;
        let r = select_broadband_rate(&params, beta, 1e6).unwrap();
        assert!(r < params.broadband_max_rate);
        let noise = noise_power(1e6, &params).unwrap();
        let expect = 1e6 * (1.0 + rayleigh_margin(0.1) * beta * 0.2 / noise).log2();
        assert!(rel(r, expect) < 1e-12);
        let pb = broadband_power(r, beta, 1e6, &params).unwrap();
        assert!(pb <= params.max_power);
        assert!(rel(pb, params.max_power) < 1e-9);
        assert!(select_broadband_rate(&params, 0.0, 1e6).is_err());
    }

    #[test]
    fn broadband_power_clamps_for_vanishing_gain() {
        let params = p();
        assert_eq!(broadband_power(5e6, 1e-30, 1e6, &params).unwrap(), params.max_power);
        assert_eq!(broadband_power(5e6, 0.0, 1e6, &params).unwrap(), params.max_power);
    }

    #[test]
    fn broadband_power_meets_erasure_target() {
        let params = p();
        let beta = pathloss_gain(35.0, &params).unwrap();
        let pb = broadband_power(5e6, beta, 1e6, &params).unwrap();
        let budget = LinkBudget::new(beta, noise_power(1e6, &params).unwrap(), pb, 5e6, 1e6);
        let erasure = 1.0 - mc_success(&budget, 1_000_000, 99);
        assert!((erasure - 0.1).abs() <= 0.005, "{erasure}");
    }

    proptest! {
        #[test]
        fn power_monotone_and_clamped(r1 in 1e5f64..8e6, r2 in 1e5f64..8e6, b1 in 1e-12f64..1e-5, b2 in 1e-12f64..1e-5) {
            let params = p();
            let (rlo, rhi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            let lo = broadband_power(rlo, b1, 1e6, &params).unwrap();
            let hi = broadband_power(rhi, b1, 1e6, &params).unwrap();
            prop_assert!(lo <= hi);
            prop_assert!(hi <= params.max_power);
            let (blo, bhi) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
            prop_assert!(broadband_power(r1, bhi, 1e6, &params).unwrap() <= broadband_power(r1, blo, 1e6, &params).unwrap());
        }

        #[test]
        fn success_prob_in_unit_interval_and_decreasing(t1 in 0.0f64..50.0, t2 in 0.0f64..50.0, beta in 0.1f64..10.0) {
            let mk = |t| LinkBudget { beta, noise_power: 1.0, tx_power: 1.0, rate: 0.0, sinr_threshold: t };
            let q1 = interference_free_success_prob(&mk(t1));
            prop_assert!(q1 > 0.0 && q1 <= 1.0);
            if t2 - t1 > 1e-6 {
                prop_assert!(q1 > interference_free_success_prob(&mk(t2)) || q1 == 0.0);
            }
        }

        #[test]
        fn threshold_increasing_and_convex(r in 1e3f64..5e6, d in 1e3f64..1e6) {
            let w = 1e6;
            let f = |x: f64| decode_threshold(x, w);
            prop_assert!(f(r + d) > f(r));
            prop_assert!(f(r) + f(r + 2.0 * d) >= 2.0 * f(r + d) - 1e-9 * f(r + 2.0 * d));
        }

        #[test]
        fn sinr_scale_invariant(t in 0.0f64..1e3, i in proptest::collection::vec(0.0f64..1e3, 0..6), n in 1e-3f64..1e3, c in 1e-6f64..1e6) {
            let scaled: Vec<f64> = i.iter().map(|x| x * c).collect();
            let a = sinr(t, &i, n);
            let b = sinr(t * c, &scaled, n * c);
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-300));
        }
    }
}
