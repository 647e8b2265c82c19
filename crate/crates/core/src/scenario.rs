//! Experiment configuration: system constants, the sub-band plan and user
//! placement.
//!
//! A [`Scenario`] can only be obtained through [`validate`], so every other
//! module may assume the invariants checked here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Range (m) in which the broadband user is placed.
pub const BROADBAND_DISTANCE_RANGE: (f64, f64) = (35.0, 75.0);
/// Range (m) in which each IoT user is placed.
pub const IOT_DISTANCE_RANGE: (f64, f64) = (100.0, 400.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("`{field}` must be strictly positive, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("`{field}` must be a probability in [0, 1], got {value}")]
    NotAProbability { field: &'static str, value: f64 },
    #[error("frame_length must be at least 2 (one uplink slot plus feedback), got {0}")]
    FrameTooShort(usize),
    #[error("frame_length {0} exceeds the supported maximum of 64 slots")]
    FrameTooLong(usize),
    #[error("latency_deadline ({deadline} slots) must be at least frame_length ({frame} slots)")]
    DeadlineShorterThanFrame { deadline: u32, frame: usize },
    #[error("band sum violated: b1 + b2 + b3 = {sum} Hz but bandwidth_total = {total} Hz")]
    BandSum { sum: f64, total: f64 },
    #[error("`{field}` = {value} Hz is not allowed in {mode:?} mode")]
    ModeBand {
        field: &'static str,
        value: f64,
        mode: SharingMode,
    },
    #[error("allocation of {user} to sub-band {band} is not allowed in {mode:?} mode")]
    ModeAllocation {
        user: String,
        band: u8,
        mode: SharingMode,
    },
    #[error("allocation has {got} rows, expected {expected} (broadband user + num_iot)")]
    AllocationLength { got: usize, expected: usize },
    #[error("`{field}` = {value} m outside the placement range [{lo}, {hi}]")]
    DistanceOutOfRange {
        field: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("deployment has {got} IoT distances, scenario has {expected} IoT users")]
    DeploymentSize { got: usize, expected: usize },
}

/// Physical and traffic constants of the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Hz
    pub bandwidth_total: f64,
    /// s
    pub slot_duration: f64,
    /// Slots per frame, the last of which carries feedback.
    pub frame_length: usize,
    /// Hz
    pub carrier_freq: f64,
    pub pathloss_exponent: f64,
    pub antenna_gain_tx: f64,
    pub antenna_gain_rx: f64,
    /// K
    pub noise_temperature: f64,
    pub noise_figure_db: f64,
    /// W
    pub max_power: f64,
    pub iot_packet_bytes: u32,
    /// Per-slot packet generation probability of each IoT user.
    pub iot_arrival_prob: f64,
    /// Source packets per broadband coding block.
    pub broadband_block_len: u32,
    /// bit/s
    pub broadband_max_rate: f64,
    pub broadband_target_erasure: f64,
    /// Slots after generation beyond which an IoT packet is discarded.
    pub latency_deadline: u32,
    pub num_iot: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            bandwidth_total: 1e6,
            slot_duration: 1e-3,
            frame_length: 10,
            carrier_freq: 2e9,
            pathloss_exponent: 2.6,
            antenna_gain_tx: 10.0,
            antenna_gain_rx: 10.0,
            noise_temperature: 190.0,
            noise_figure_db: 5.0,
            max_power: 0.2,
            iot_packet_bytes: 128,
            iot_arrival_prob: 0.1,
            broadband_block_len: 32,
            broadband_max_rate: 5e6,
            broadband_target_erasure: 0.1,
            latency_deadline: 50,
            num_iot: 10,
        }
    }
}

impl SystemParams {
    /// Number of uplink slots in a frame.
    pub fn uplink_slots(&self) -> usize {
        self.frame_length - 1
    }

    /// Largest cumulative repetition count a packet can reach before it is
    /// delivered or dropped.
    pub fn max_repetitions(&self) -> u32 {
        let frames = self.latency_deadline.div_ceil(self.frame_length as u32);
        self.uplink_slots() as u32 * frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SharingMode {
    Slicing,
    Sharing,
}

impl SharingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SharingMode::Slicing => "slicing",
            SharingMode::Sharing => "sharing",
        }
    }
}

/// One of the three frequency sub-bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubBand {
    /// Reserved for the broadband user.
    Broadband = 1,
    /// Reserved for the IoT users.
    Iot = 2,
    /// Shared by everyone.
    Shared = 3,
}

impl SubBand {
    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            1 => Some(SubBand::Broadband),
            2 => Some(SubBand::Iot),
            3 => Some(SubBand::Shared),
            _ => None,
        }
    }
}

/// Sub-band widths and the per-user allocation. Row 0 of `allocation` is the
/// broadband user, rows `1..=J` the IoT users.
#[derive(Debug, Clone, PartialEq)]
pub struct BandPlan {
    pub mode: SharingMode,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub allocation: Vec<SubBand>,
}

impl BandPlan {
    /// Orthogonal split with `b2_fraction` of the band given to the IoT slice.
    pub fn slicing(total: f64, b2_fraction: f64, num_iot: usize) -> Self {
        let b2 = total * b2_fraction;
        let mut allocation = vec![SubBand::Iot; num_iot + 1];
        allocation[0] = SubBand::Broadband;
        Self {
            mode: SharingMode::Slicing,
            b1: total - b2,
            b2,
            b3: 0.0,
            allocation,
        }
    }

    /// Everyone on the full band.
    pub fn sharing(total: f64, num_iot: usize) -> Self {
        Self {
            mode: SharingMode::Sharing,
            b1: 0.0,
            b2: 0.0,
            b3: total,
            allocation: vec![SubBand::Shared; num_iot + 1],
        }
    }

    pub fn width(&self, band: SubBand) -> f64 {
        match band {
            SubBand::Broadband => self.b1,
            SubBand::Iot => self.b2,
            SubBand::Shared => self.b3,
        }
    }
}

/// A validated, immutable experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    params: SystemParams,
    plan: BandPlan,
}

impl Scenario {
    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn plan(&self) -> &BandPlan {
        &self.plan
    }

    pub fn mode(&self) -> SharingMode {
        self.plan.mode
    }

    pub fn num_iot(&self) -> usize {
        self.params.num_iot
    }

    pub fn broadband_band(&self) -> SubBand {
        self.plan.allocation[0]
    }

    /// Sub-band of IoT user `j` (0-based).
    pub fn iot_band(&self, j: usize) -> SubBand {
        self.plan.allocation[j + 1]
    }

    /// Sub-bands that carry at least one user, ascending.
    pub fn active_bands(&self) -> Vec<SubBand> {
        let mut bands = self.plan.allocation.clone();
        bands.sort();
        bands.dedup();
        bands
    }

    pub fn band_width(&self, band: SubBand) -> f64 {
        self.plan.width(band)
    }

    /// Validated copy with the IoT population changed; the allocation is
    /// rebuilt from the mode.
    pub fn with_num_iot(&self, num_iot: usize) -> Result<Scenario, ScenarioError> {
        let mut params = self.params.clone();
        params.num_iot = num_iot;
        let mut plan = self.plan.clone();
        plan.allocation = default_allocation(plan.mode, num_iot);
        validate(params, plan)
    }

    pub fn with_deadline(&self, deadline: u32) -> Result<Scenario, ScenarioError> {
        let mut params = self.params.clone();
        params.latency_deadline = deadline;
        validate(params, self.plan.clone())
    }

    /// Validated slicing copy with the IoT slice set to `fraction` of the band.
    pub fn with_b2_fraction(&self, fraction: f64) -> Result<Scenario, ScenarioError> {
        let plan = BandPlan::slicing(self.params.bandwidth_total, fraction, self.params.num_iot);
        validate(self.params.clone(), plan)
    }
}

fn default_allocation(mode: SharingMode, num_iot: usize) -> Vec<SubBand> {
    match mode {
        SharingMode::Slicing => {
            let mut a = vec![SubBand::Iot; num_iot + 1];
            a[0] = SubBand::Broadband;
            a
        }
        SharingMode::Sharing => vec![SubBand::Shared; num_iot + 1],
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ScenarioError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::NonPositive { field, value })
    }
}

fn probability(field: &'static str, value: f64) -> Result<(), ScenarioError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ScenarioError::NotAProbability { field, value })
    }
}

/// Checks every invariant of `params` and `plan` and freezes them into a
/// [`Scenario`].
pub fn validate(params: SystemParams, plan: BandPlan) -> Result<Scenario, ScenarioError> {
    let p = &params;
    positive("bandwidth_total", p.bandwidth_total)?;
    positive("slot_duration", p.slot_duration)?;
    positive("carrier_freq", p.carrier_freq)?;
    positive("pathloss_exponent", p.pathloss_exponent)?;
    positive("antenna_gain_tx", p.antenna_gain_tx)?;
    positive("antenna_gain_rx", p.antenna_gain_rx)?;
    positive("noise_temperature", p.noise_temperature)?;
    positive("max_power", p.max_power)?;
    positive("iot_packet_bytes", p.iot_packet_bytes as f64)?;
    positive("broadband_block_len", p.broadband_block_len as f64)?;
    positive("broadband_max_rate", p.broadband_max_rate)?;
    if !p.noise_figure_db.is_finite() {
        return Err(ScenarioError::NonPositive {
            field: "noise_figure_db",
            value: p.noise_figure_db,
        });
    }
    probability("iot_arrival_prob", p.iot_arrival_prob)?;
    probability("broadband_target_erasure", p.broadband_target_erasure)?;
    // an erasure target of 0 or 1 makes the power control degenerate
    positive("broadband_target_erasure", p.broadband_target_erasure)?;
    if p.broadband_target_erasure >= 1.0 {
        return Err(ScenarioError::NotAProbability {
            field: "broadband_target_erasure",
            value: p.broadband_target_erasure,
        });
    }
    if p.frame_length < 2 {
        return Err(ScenarioError::FrameTooShort(p.frame_length));
    }
    if p.frame_length > 65 {
        return Err(ScenarioError::FrameTooLong(p.frame_length));
    }
    if (p.latency_deadline as usize) < p.frame_length {
        return Err(ScenarioError::DeadlineShorterThanFrame {
            deadline: p.latency_deadline,
            frame: p.frame_length,
        });
    }

    let widths = [("b1", plan.b1), ("b2", plan.b2), ("b3", plan.b3)];
    for (field, w) in widths {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(ScenarioError::NonPositive { field, value: w });
        }
    }
    let sum = plan.b1 + plan.b2 + plan.b3;
    if (sum - p.bandwidth_total).abs() > 1e-9 * p.bandwidth_total {
        return Err(ScenarioError::BandSum {
            sum,
            total: p.bandwidth_total,
        });
    }
    let mode = plan.mode;
    match mode {
        SharingMode::Slicing => {
            if plan.b3 != 0.0 {
                return Err(ScenarioError::ModeBand {
                    field: "b3",
                    value: plan.b3,
                    mode,
                });
            }
            positive("b1", plan.b1)?;
            positive("b2", plan.b2)?;
        }
        SharingMode::Sharing => {
            for (field, w) in [("b1", plan.b1), ("b2", plan.b2)] {
                if w != 0.0 {
                    return Err(ScenarioError::ModeBand {
                        field,
                        value: w,
                        mode,
                    });
                }
            }
        }
    }

    let expected = p.num_iot + 1;
    if plan.allocation.len() != expected {
        return Err(ScenarioError::AllocationLength {
            got: plan.allocation.len(),
            expected,
        });
    }
    for (row, &band) in plan.allocation.iter().enumerate() {
        let allowed = match (mode, row) {
            (SharingMode::Slicing, 0) => SubBand::Broadband,
            (SharingMode::Slicing, _) => SubBand::Iot,
            (SharingMode::Sharing, _) => SubBand::Shared,
        };
        if band != allowed {
            let user = if row == 0 {
                "broadband user".to_string()
            } else {
                format!("IoT user {}", row - 1)
            };
            return Err(ScenarioError::ModeAllocation {
                user,
                band: band.index(),
                mode,
            });
        }
    }

    Ok(Scenario { params, plan })
}

/// Scalar user placement for one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub broadband_distance: f64,
    pub iot_distances: Vec<f64>,
    pub rng_seed: u64,
}

impl Deployment {
    /// Explicit placement, checked against the placement ranges.
    pub fn new(
        broadband_distance: f64,
        iot_distances: Vec<f64>,
        rng_seed: u64,
    ) -> Result<Self, ScenarioError> {
        let check = |field: String, v: f64, (lo, hi): (f64, f64)| {
            if (lo..=hi).contains(&v) {
                Ok(())
            } else {
                Err(ScenarioError::DistanceOutOfRange {
                    field,
                    value: v,
                    lo,
                    hi,
                })
            }
        };
        check(
            "broadband_distance".into(),
            broadband_distance,
            BROADBAND_DISTANCE_RANGE,
        )?;
        for (j, &d) in iot_distances.iter().enumerate() {
            check(format!("iot_distances[{j}]"), d, IOT_DISTANCE_RANGE)?;
        }
        Ok(Self {
            broadband_distance,
            iot_distances,
            rng_seed,
        })
    }

    pub fn check_against(&self, scenario: &Scenario) -> Result<(), ScenarioError> {
        if self.iot_distances.len() != scenario.num_iot() {
            return Err(ScenarioError::DeploymentSize {
                got: self.iot_distances.len(),
                expected: scenario.num_iot(),
            });
        }
        Ok(())
    }
}

/// Places the users uniformly at random within their ranges.
pub fn sample_deployment(scenario: &Scenario, seed: u64) -> Deployment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (blo, bhi) = BROADBAND_DISTANCE_RANGE;
    let (ilo, ihi) = IOT_DISTANCE_RANGE;
    let broadband_distance = rng.random_range(blo..=bhi);
    let iot_distances = (0..scenario.num_iot())
        .map(|_| rng.random_range(ilo..=ihi))
        .collect();
    Deployment {
        broadband_distance,
        iot_distances,
        rng_seed: seed,
    }
}
