//! Scenario files.
//!
//! A scenario file is TOML with a `[system]` section holding every
//! [`SystemParams`] field and a `[band]` section holding the band plan:
//!
//! ```toml
//! [system]
//! bandwidth_total = 1000000.0
//! # ... every other SystemParams field
//!
//! [band]
//! mode = "slicing"      # or "sharing"
//! b1 = 500000.0
//! b2 = 500000.0
//! b3 = 0.0
//! # optional; sub-band index per user, broadband user first
//! allocation = [1, 2, 2, 2]
//! ```
//!
//! Missing `[system]` keys fall back to the reference parameter set; command
//! line overrides are applied on top of the file before validation.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{self, BandPlan, Scenario, ScenarioError, SharingMode, SubBand, SystemParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown sub-band index {0} in allocation (expected 1, 2 or 3)")]
    SubBand(u8),
    #[error("b2_fraction override {0} outside (0, 1)")]
    Fraction(f64),
    #[error(transparent)]
    Invalid(#[from] ScenarioError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSection {
    pub mode: SharingMode,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub system: SystemParamsPatch,
    pub band: BandSection,
}

/// `[system]` section; every key optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParamsPatch {
    pub bandwidth_total: Option<f64>,
    pub slot_duration: Option<f64>,
    pub frame_length: Option<usize>,
    pub carrier_freq: Option<f64>,
    pub pathloss_exponent: Option<f64>,
    pub antenna_gain_tx: Option<f64>,
    pub antenna_gain_rx: Option<f64>,
    pub noise_temperature: Option<f64>,
    pub noise_figure_db: Option<f64>,
    pub max_power: Option<f64>,
    pub iot_packet_bytes: Option<u32>,
    pub iot_arrival_prob: Option<f64>,
    pub broadband_block_len: Option<u32>,
    pub broadband_max_rate: Option<f64>,
    pub broadband_target_erasure: Option<f64>,
    pub latency_deadline: Option<u32>,
    pub num_iot: Option<usize>,
}

macro_rules! patch_fields {
    ($patch:expr, $base:expr, $($f:ident),*) => {{
        let mut out = $base;
        $( if let Some(v) = $patch.$f { out.$f = v; } )*
        out
    }};
}

impl SystemParamsPatch {
    fn apply(&self, base: SystemParams) -> SystemParams {
        patch_fields!(
            self,
            base,
            bandwidth_total,
            slot_duration,
            frame_length,
            carrier_freq,
            pathloss_exponent,
            antenna_gain_tx,
            antenna_gain_rx,
            noise_temperature,
            noise_figure_db,
            max_power,
            iot_packet_bytes,
            iot_arrival_prob,
            broadband_block_len,
            broadband_max_rate,
            broadband_target_erasure,
            latency_deadline,
            num_iot
        )
    }

    fn full(p: &SystemParams) -> Self {
        Self {
            bandwidth_total: Some(p.bandwidth_total),
            slot_duration: Some(p.slot_duration),
            frame_length: Some(p.frame_length),
            carrier_freq: Some(p.carrier_freq),
            pathloss_exponent: Some(p.pathloss_exponent),
            antenna_gain_tx: Some(p.antenna_gain_tx),
            antenna_gain_rx: Some(p.antenna_gain_rx),
            noise_temperature: Some(p.noise_temperature),
            noise_figure_db: Some(p.noise_figure_db),
            max_power: Some(p.max_power),
            iot_packet_bytes: Some(p.iot_packet_bytes),
            iot_arrival_prob: Some(p.iot_arrival_prob),
            broadband_block_len: Some(p.broadband_block_len),
            broadband_max_rate: Some(p.broadband_max_rate),
            broadband_target_erasure: Some(p.broadband_target_erasure),
            latency_deadline: Some(p.latency_deadline),
            num_iot: Some(p.num_iot),
        }
    }
}

/// Command line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<SharingMode>,
    pub num_iot: Option<usize>,
    pub latency_deadline: Option<u32>,
    pub b2_fraction: Option<f64>,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let plan = s.plan();
        Self {
            system: SystemParamsPatch::full(s.params()),
            band: BandSection {
                mode: plan.mode,
                b1: plan.b1,
                b2: plan.b2,
                b3: plan.b3,
                allocation: Some(plan.allocation.iter().map(|b| b.index()).collect()),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario file serializes")
    }

    /// Applies `overrides` and validates.
    pub fn resolve(&self, overrides: &Overrides) -> Result<Scenario, ConfigError> {
        let mut params = self.system.apply(SystemParams::default());
        if let Some(j) = overrides.num_iot {
            params.num_iot = j;
        }
        if let Some(d) = overrides.latency_deadline {
            params.latency_deadline = d;
        }
        let mode = overrides.mode.unwrap_or(self.band.mode);
        // any override touching the band layout rebuilds the plan from the mode
        let rebuild = overrides.mode.is_some_and(|m| m != self.band.mode)
            || overrides.b2_fraction.is_some()
            || overrides.num_iot.is_some();
        let plan = if rebuild {
            match mode {
                SharingMode::Slicing => {
                    let fraction = match overrides.b2_fraction {
                        Some(f) if f > 0.0 && f < 1.0 => f,
                        Some(f) => return Err(ConfigError::Fraction(f)),
                        None if self.band.mode == SharingMode::Slicing => {
                            self.band.b2 / params.bandwidth_total
                        }
                        None => 0.5,
                    };
                    BandPlan::slicing(params.bandwidth_total, fraction, params.num_iot)
                }
                SharingMode::Sharing => BandPlan::sharing(params.bandwidth_total, params.num_iot),
            }
        } else {
            let allocation = match &self.band.allocation {
                Some(rows) => rows
                    .iter()
                    .map(|&i| SubBand::from_index(i).ok_or(ConfigError::SubBand(i)))
                    .collect::<Result<Vec<_>, _>>()?,
                None => match mode {
                    SharingMode::Slicing => {
                        BandPlan::slicing(params.bandwidth_total, 0.5, params.num_iot).allocation
                    }
                    SharingMode::Sharing => {
                        BandPlan::sharing(params.bandwidth_total, params.num_iot).allocation
                    }
                },
            };
            BandPlan {
                mode,
                b1: self.band.b1,
                b2: self.band.b2,
                b3: self.band.b3,
                allocation,
            }
        };
        Ok(scenario::validate(params, plan)?)
    }
}

/// The reference configuration: default parameters, half/half slicing.
pub fn reference_scenario(mode: SharingMode, num_iot: usize) -> Scenario {
    let mut params = SystemParams::default();
    params.num_iot = num_iot;
    let plan = match mode {
        SharingMode::Slicing => BandPlan::slicing(params.bandwidth_total, 0.5, num_iot),
        SharingMode::Sharing => BandPlan::sharing(params.bandwidth_total, num_iot),
    };
    scenario::validate(params, plan).expect("reference scenario is valid")
}
