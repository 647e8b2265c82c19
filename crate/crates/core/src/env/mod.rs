//! The slotted, frame-synchronous uplink.
//!
//! Each frame has `T_F - 1` uplink slots followed by one feedback slot. At
//! the start of a frame every IoT user with a queued packet picks a set of
//! uplink slots for its replicas; the broadband user sends one fresh encoded
//! packet in every uplink slot. The receiver decodes each sub-band with
//! [`crate::sic::decode_frame`], outcomes are fed back in the last slot, and
//! new IoT packets arrive slot by slot.
//!
//! Latency is counted in slots from the generation slot. The observation a
//! user gets at the end of a frame is "as of the start of the next frame",
//! except for a delivered packet whose latency freezes at the slot of its
//! first successful reception.

pub mod log;

pub use log::{FrameLogReader, FrameLogWriter, FrameRecord, LogParseError, Termination, FRAME_LOG_HEADER};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use thiserror::Error;

use crate::phy::{self, LinkBudget};
use crate::scenario::{Deployment, Scenario, SubBand, SystemParams};
use crate::sic::{self, DecodeOutcome, FrameSignalLog, PacketId, SlotTransmission, UserId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvError {
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
    #[error("user {user}: repetition degree {degree} outside 0..={max}")]
    ActionRange { user: usize, degree: u32, max: u32 },
    #[error("user {user}: slot mask {mask:#x} uses slots beyond the {uplink} uplink slots")]
    SlotRange { user: usize, mask: u64, uplink: usize },
    #[error("user {user} has an empty queue but was asked to transmit {degree} replicas")]
    EmptyQueue { user: usize, degree: u32 },
    #[error("deployment does not match the scenario: {0}")]
    Deployment(String),
    #[error(transparent)]
    Phy(#[from] phy::PhyError),
}

/// `(latency, repetitions, decoded)` as seen by one IoT user. The empty
/// queue is `(0, 0, false)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct AgentState {
    pub latency: u32,
    pub repetitions: u32,
    pub decoded: bool,
}

impl AgentState {
    pub const EMPTY: AgentState = AgentState {
        latency: 0,
        repetitions: 0,
        decoded: false,
    };

    pub fn new(latency: u32, repetitions: u32, decoded: bool) -> Self {
        Self {
            latency,
            repetitions,
            decoded,
        }
    }
}

/// Set of uplink slots (bit `s` = slot `s`, 0-based) used by one user in one
/// frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlotMask(pub u64);

impl SlotMask {
    /// The first `degree` uplink slots.
    pub fn consecutive(degree: u32) -> Self {
        if degree >= 64 {
            SlotMask(u64::MAX)
        } else {
            SlotMask((1u64 << degree) - 1)
        }
    }

    pub fn from_slots(slots: impl IntoIterator<Item = usize>) -> Self {
        SlotMask(slots.into_iter().fold(0, |m, s| m | (1u64 << s)))
    }

    pub fn degree(self) -> u32 {
        self.0.count_ones()
    }

    pub fn contains(self, slot: usize) -> bool {
        slot < 64 && self.0 >> slot & 1 == 1
    }
}

/// How a queued packet leaves a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFate {
    /// Decoded within the deadline; `latency` is at the first-success slot.
    Delivered { latency: u32, repetitions: u32 },
    /// Deadline passed; `latency` is the value at the end of the frame.
    Dropped { latency: u32, repetitions: u32 },
    /// Still queued; `latency` is the value at the start of the next frame.
    Pending { latency: u32, repetitions: u32 },
}

impl FrameFate {
    pub fn observation(self) -> AgentState {
        match self {
            FrameFate::Delivered {
                latency,
                repetitions,
            } => AgentState::new(latency, repetitions, true),
            FrameFate::Dropped {
                latency,
                repetitions,
            }
            | FrameFate::Pending {
                latency,
                repetitions,
            } => AgentState::new(latency, repetitions, false),
        }
    }

    pub fn is_terminal(self) -> bool {
        !matches!(self, FrameFate::Pending { .. })
    }
}

/// Packet lifecycle rule shared by the simulator and the single-user model.
///
/// `start` is the packet's state at the frame start, `degree` the number of
/// replicas sent, `first_success` the 1-based uplink slot of the first
/// successful reception, if any. A packet decoded after its deadline counts
/// as dropped.
pub fn frame_fate(
    start: AgentState,
    degree: u32,
    first_success: Option<u32>,
    params: &SystemParams,
) -> FrameFate {
    let repetitions = start.repetitions + degree;
    let deadline = params.latency_deadline;
    if let Some(k) = first_success {
        let latency = start.latency + k;
        if latency <= deadline {
            return FrameFate::Delivered {
                latency,
                repetitions,
            };
        }
    }
    let latency = start.latency + params.frame_length as u32;
    if latency > deadline {
        FrameFate::Dropped {
            latency,
            repetitions,
        }
    } else {
        FrameFate::Pending {
            latency,
            repetitions,
        }
    }
}

/// Broadband rateless block bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BroadbandBlockState {
    /// Encoded packets received toward the current block.
    pub received: u32,
    pub blocks_completed: u64,
    /// Frames spent so far on the current block.
    pub frames_for_current_block: u32,
}

impl BroadbandBlockState {
    /// Accounts one frame with `successes` received encoded packets. Returns
    /// the number of frames the block took when it completes. Feedback only
    /// arrives at the end of the frame, so encoded packets beyond the `K`-th
    /// belong to the finished block and are not carried over.
    pub fn advance(&mut self, successes: u32, block_len: u32) -> Option<u32> {
        self.frames_for_current_block += 1;
        self.received += successes;
        if self.received >= block_len {
            let frames = self.frames_for_current_block;
            self.blocks_completed += 1;
            self.received = 0;
            self.frames_for_current_block = 0;
            Some(frames)
        } else {
            None
        }
    }
}

/// Functional form of [`BroadbandBlockState::advance`].
pub fn broadband_progress(
    block: BroadbandBlockState,
    successes: u32,
    block_len: u32,
) -> (BroadbandBlockState, Option<u32>) {
    let mut next = block;
    let f = next.advance(successes, block_len);
    (next, f)
}

/// Single-packet transmit queue of an IoT user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IoTQueue {
    pub packet: Option<PacketId>,
    /// Absolute slot index of generation.
    pub generated_at: u64,
    pub repetitions: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PacketCounters {
    pub generated: u64,
    pub accepted: u64,
    pub discarded: u64,
    pub delivered: u64,
    pub dropped: u64,
}

impl PacketCounters {
    pub fn in_flight(&self) -> u64 {
        self.accepted - self.delivered - self.dropped
    }
}

/// Per-user summary of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserFrame {
    /// Replicas sent.
    pub degree: u32,
    /// Decision state at the start of the frame.
    pub start: AgentState,
    /// Whether a packet was queued at the start of the frame.
    pub had_packet: bool,
    /// Post-feedback observation; terminal packets show their final state.
    pub observed: AgentState,
    pub fate: Option<FrameFate>,
    /// 0-based uplink slot where the packet was recovered.
    pub decoded_slot: Option<usize>,
    /// Decision state for the next frame.
    pub next: AgentState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub frame: u64,
    pub users: Vec<UserFrame>,
    /// One flag per uplink slot; empty when the broadband user is disabled.
    pub broadband_slots: Vec<bool>,
    pub broadband_successes: u32,
    /// `F(K)` sample when a broadband block completed in this frame.
    pub block_frames: Option<u32>,
}

impl FrameResult {
    pub fn record(&self) -> FrameRecord {
        FrameRecord::from_result(self)
    }
}

/// Fixed broadband operating point for a deployment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadbandLink {
    pub band: SubBand,
    pub budget: LinkBudget,
}

/// Link constants of an IoT user at `distance` on its sub-band; IoT users
/// always send at full power.
pub fn iot_link(scenario: &Scenario, user: usize, distance: f64) -> Result<LinkBudget, phy::PhyError> {
    let params = scenario.params();
    let width = scenario.band_width(scenario.iot_band(user));
    Ok(LinkBudget::new(
        phy::pathloss_gain(distance, params)?,
        phy::noise_power(width, params)?,
        params.max_power,
        phy::iot_rate(params),
        width,
    ))
}

/// Rate and power of the broadband user at `distance`.
pub fn broadband_link(scenario: &Scenario, distance: f64) -> Result<BroadbandLink, phy::PhyError> {
    let params = scenario.params();
    let band = scenario.broadband_band();
    let width = scenario.band_width(band);
    let beta = phy::pathloss_gain(distance, params)?;
    let rate = phy::select_broadband_rate(params, beta, width)?;
    let power = phy::broadband_power(rate, beta, width, params)?;
    Ok(BroadbandLink {
        band,
        budget: LinkBudget::new(beta, phy::noise_power(width, params)?, power, rate, width),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvOptions {
    /// Disable to study the IoT users in isolation.
    pub broadband: bool,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self { broadband: true }
    }
}

const BROADBAND_USER: UserId = UserId(0);
const BROADBAND_PACKET_BASE: u64 = 1 << 63;

#[derive(Debug, Clone)]
pub struct Environment {
    scenario: Scenario,
    deployment: Deployment,
    options: EnvOptions,
    iot_links: Vec<LinkBudget>,
    broadband: BroadbandLink,
    bands: Vec<SubBand>,
    logs: Vec<FrameSignalLog>,
    rng: ChaCha8Rng,
    frame: u64,
    /// Absolute index of the first slot of the current frame.
    frame_start: u64,
    queues: Vec<IoTQueue>,
    observed: Vec<AgentState>,
    block: BroadbandBlockState,
    counters: PacketCounters,
    next_packet: u64,
}

impl Environment {
    /// Fresh environment: empty queues, a new broadband block, link budgets
    /// fixed from the deployment.
    pub fn reset(
        scenario: &Scenario,
        deployment: &Deployment,
        seed: u64,
    ) -> Result<Self, EnvError> {
        Self::with_options(scenario, deployment, seed, EnvOptions::default())
    }

    pub fn with_options(
        scenario: &Scenario,
        deployment: &Deployment,
        seed: u64,
        options: EnvOptions,
    ) -> Result<Self, EnvError> {
        deployment
            .check_against(scenario)
            .map_err(|e| EnvError::Deployment(e.to_string()))?;
        let iot_links = deployment
            .iot_distances
            .iter()
            .enumerate()
            .map(|(j, &d)| iot_link(scenario, j, d))
            .collect::<Result<Vec<_>, _>>()?;
        let broadband = broadband_link(scenario, deployment.broadband_distance)?;
        let bands = scenario.active_bands();
        let uplink = scenario.params().uplink_slots();
        let logs = bands
            .iter()
            .map(|&b| {
                phy::noise_power(scenario.band_width(b), scenario.params())
                    .map(|n| FrameSignalLog::new(uplink, n))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let j = scenario.num_iot();
        Ok(Self {
            scenario: scenario.clone(),
            deployment: deployment.clone(),
            options,
            iot_links,
            broadband,
            bands,
            logs,
            rng: ChaCha8Rng::seed_from_u64(seed),
            frame: 0,
            frame_start: 0,
            queues: vec![IoTQueue::default(); j],
            observed: vec![AgentState::EMPTY; j],
            block: BroadbandBlockState::default(),
            counters: PacketCounters::default(),
            next_packet: 0,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn deployment(&self) -> &Deployment {
        &self.deployment
    }

    pub fn num_iot(&self) -> usize {
        self.queues.len()
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn iot_links(&self) -> &[LinkBudget] {
        &self.iot_links
    }

    pub fn broadband(&self) -> &BroadbandLink {
        &self.broadband
    }

    pub fn block(&self) -> &BroadbandBlockState {
        &self.block
    }

    pub fn counters(&self) -> &PacketCounters {
        &self.counters
    }

    pub fn has_packet(&self, user: usize) -> bool {
        self.queues[user].packet.is_some()
    }

    /// The user's own post-feedback observation of the last frame.
    pub fn observe(&self, user: usize) -> AgentState {
        self.observed[user]
    }

    /// State the user acts on at the start of the next frame.
    pub fn decision_state(&self, user: usize) -> AgentState {
        let q = &self.queues[user];
        match q.packet {
            Some(_) => AgentState::new(
                (self.frame_start - q.generated_at) as u32,
                q.repetitions,
                false,
            ),
            None => AgentState::EMPTY,
        }
    }

    /// Runs one frame with replicas in the first `degree` uplink slots.
    pub fn step_frame(&mut self, degrees: &[u32]) -> Result<FrameResult, EnvError> {
        let uplink = self.scenario.params().uplink_slots() as u32;
        for (user, &degree) in degrees.iter().enumerate() {
            if degree > uplink {
                return Err(EnvError::ActionRange {
                    user,
                    degree,
                    max: uplink,
                });
            }
        }
        let masks: Vec<SlotMask> = degrees.iter().map(|&d| SlotMask::consecutive(d)).collect();
        self.step_frame_placed(&masks)
    }

    /// Runs one frame with an explicit slot set per user.
    pub fn step_frame_placed(&mut self, masks: &[SlotMask]) -> Result<FrameResult, EnvError> {
        let params = self.scenario.params().clone();
        let uplink = params.uplink_slots();
        let j = self.queues.len();
        if masks.len() != j {
            return Err(EnvError::ActionCount {
                expected: j,
                got: masks.len(),
            });
        }
        let valid_bits = if uplink >= 64 { u64::MAX } else { (1u64 << uplink) - 1 };
        for (user, m) in masks.iter().enumerate() {
            if m.0 & !valid_bits != 0 {
                return Err(EnvError::SlotRange {
                    user,
                    mask: m.0,
                    uplink,
                });
            }
            if m.degree() > 0 && self.queues[user].packet.is_none() {
                return Err(EnvError::EmptyQueue {
                    user,
                    degree: m.degree(),
                });
            }
        }

        let starts: Vec<AgentState> = (0..j).map(|u| self.decision_state(u)).collect();

        // transmissions and fading, slot by slot: broadband first, then IoT
        // users in index order
        for log in &mut self.logs {
            log.clear();
        }
        let bb_band = self.band_slot(self.broadband.band);
        for s in 0..uplink {
            if self.options.broadband {
                let b = &self.broadband.budget;
                let gain = b.beta * self.rng.sample::<f64, _>(Exp1) * b.tx_power;
                let packet = PacketId(BROADBAND_PACKET_BASE | (self.frame << 6) | s as u64);
                self.logs[bb_band].push(
                    s,
                    SlotTransmission {
                        user: BROADBAND_USER,
                        packet,
                        gain_power: gain,
                        sinr_threshold: b.sinr_threshold,
                    },
                );
            }
            for (u, m) in masks.iter().enumerate() {
                if !m.contains(s) {
                    continue;
                }
                let link = &self.iot_links[u];
                let gain = link.beta * self.rng.sample::<f64, _>(Exp1) * link.tx_power;
                let band = self.band_slot(self.scenario.iot_band(u));
                self.logs[band].push(
                    s,
                    SlotTransmission {
                        user: UserId(u as u32 + 1),
                        packet: self.queues[u].packet.expect("checked above"),
                        gain_power: gain,
                        sinr_threshold: link.sinr_threshold,
                    },
                );
            }
        }

        let outcomes: Vec<DecodeOutcome> = self
            .logs
            .iter()
            .map(|log| {
                if log.slots.iter().all(Vec::is_empty) {
                    DecodeOutcome::default()
                } else {
                    sic::decode_frame(log)
                }
            })
            .collect();

        let mut broadband_slots = Vec::new();
        if self.options.broadband {
            let out = &outcomes[bb_band];
            broadband_slots = (0..uplink)
                .map(|s| {
                    let id = PacketId(BROADBAND_PACKET_BASE | (self.frame << 6) | s as u64);
                    out.decoded.contains_key(&id)
                })
                .collect();
        }
        let broadband_successes = broadband_slots.iter().filter(|&&b| b).count() as u32;
        let block_frames = if self.options.broadband {
            self.block
                .advance(broadband_successes, params.broadband_block_len)
        } else {
            None
        };

        let mut users = Vec::with_capacity(j);
        let mut freed = vec![false; j];
        for u in 0..j {
            let degree = masks[u].degree();
            let start = starts[u];
            let queue = self.queues[u];
            let Some(packet) = queue.packet else {
                self.observed[u] = AgentState::EMPTY;
                users.push(UserFrame {
                    degree,
                    start,
                    had_packet: false,
                    observed: AgentState::EMPTY,
                    fate: None,
                    decoded_slot: None,
                    next: AgentState::EMPTY,
                });
                continue;
            };
            let band = self.band_slot(self.scenario.iot_band(u));
            let decoded_slot = if degree > 0 {
                outcomes[band].slot_of(packet)
            } else {
                None
            };
            let fate = frame_fate(start, degree, decoded_slot.map(|s| s as u32 + 1), &params);
            match fate {
                FrameFate::Delivered { .. } => {
                    self.counters.delivered += 1;
                    freed[u] = true;
                }
                FrameFate::Dropped { .. } => {
                    self.counters.dropped += 1;
                    freed[u] = true;
                }
                FrameFate::Pending { repetitions, .. } => {
                    self.queues[u].repetitions = repetitions;
                }
            }
            if freed[u] {
                self.queues[u] = IoTQueue::default();
            }
            self.observed[u] = fate.observation();
            users.push(UserFrame {
                degree,
                start,
                had_packet: true,
                observed: fate.observation(),
                fate: Some(fate),
                decoded_slot,
                next: AgentState::EMPTY,
            });
        }

        // arrivals: a user that held a packet at the frame start only frees
        // its queue at the feedback slot
        let tf = params.frame_length;
        for k in 0..tf {
            for u in 0..j {
                if !self.rng.random_bool(params.iot_arrival_prob) {
                    continue;
                }
                self.counters.generated += 1;
                let free = self.queues[u].packet.is_none()
                    && (!users[u].had_packet || k == tf - 1);
                if free {
                    self.counters.accepted += 1;
                    self.queues[u] = IoTQueue {
                        packet: Some(PacketId(self.next_packet)),
                        generated_at: self.frame_start + k as u64,
                        repetitions: 0,
                    };
                    self.next_packet += 1;
                } else {
                    self.counters.discarded += 1;
                }
            }
        }

        self.frame_start += tf as u64;
        let frame = self.frame;
        self.frame += 1;
        for (u, uf) in users.iter_mut().enumerate() {
            uf.next = self.decision_state(u);
        }

        Ok(FrameResult {
            frame,
            users,
            broadband_slots,
            broadband_successes,
            block_frames,
        })
    }

    fn band_slot(&self, band: SubBand) -> usize {
        self.bands
            .iter()
            .position(|&b| b == band)
            .expect("band is active")
    }
}
