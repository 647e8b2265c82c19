//! Frame receiver with capture and successive interference cancellation.
//!
//! Within a slot the receiver repeatedly decodes the strongest remaining
//! signal that clears its threshold and cancels it (intra-slot SIC). A
//! decoded packet is then cancelled from every other slot that carries one of
//! its replicas (inter-slot SIC), and slots are revisited until a whole
//! sweep decodes nothing new. Cancellation is perfect and confined to the
//! frame.

use std::collections::{BTreeMap, BTreeSet};

/// User index inside a frame log; the broadband user and IoT users share
/// the id space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserId(pub u32);

/// Identifies one packet. Every replica of a packet carries the same id;
/// broadband slots each carry a distinct id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PacketId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotTransmission {
    pub user: UserId,
    pub packet: PacketId,
    /// Received power `|h|^2 * P` in this slot.
    pub gain_power: f64,
    pub sinr_threshold: f64,
}

/// Everything the receiver sees in one sub-band over the uplink slots of a
/// frame.
#[derive(Debug, Clone, Default)]
pub struct FrameSignalLog {
    pub slots: Vec<Vec<SlotTransmission>>,
    pub noise_power: f64,
}

impl FrameSignalLog {
    pub fn new(uplink_slots: usize, noise_power: f64) -> Self {
        Self {
            slots: vec![Vec::new(); uplink_slots],
            noise_power,
        }
    }

    pub fn push(&mut self, slot: usize, tx: SlotTransmission) {
        self.slots[slot].push(tx);
    }

    pub fn clear(&mut self) {
        for s in &mut self.slots {
            s.clear();
        }
    }

    /// All distinct packets present in the log.
    pub fn packets(&self) -> BTreeSet<PacketId> {
        self.slots.iter().flatten().map(|t| t.packet).collect()
    }

    /// True when no user appears twice in a slot and gains are non-negative.
    pub fn is_well_formed(&self) -> bool {
        self.slots.iter().all(|slot| {
            slot.iter().enumerate().all(|(i, a)| {
                a.gain_power >= 0.0 && slot[i + 1..].iter().all(|b| b.user != a.user)
            })
        })
    }
}

/// A successful decode inside one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeEvent {
    pub user: UserId,
    pub packet: PacketId,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecodeOutcome {
    /// Decoded packets and the uplink slot (0-based) in which each was
    /// recovered.
    pub decoded: BTreeMap<PacketId, usize>,
    pub undecoded: BTreeSet<PacketId>,
    /// Sweeps over the frame that decoded at least one packet.
    pub iterations: usize,
}

impl DecodeOutcome {
    pub fn slot_of(&self, packet: PacketId) -> Option<usize> {
        self.decoded.get(&packet).copied()
    }
}

fn interference_excluding(slot: &[SlotTransmission], skip: usize) -> f64 {
    slot.iter()
        .enumerate()
        .filter(|&(i, _)| i != skip)
        .map(|(_, t)| t.gain_power)
        .sum()
}

/// Capture with intra-slot SIC on a single slot.
///
/// Candidates are tried from strongest to weakest; the first that clears its
/// threshold is decoded and cancelled and the scan restarts. A failing
/// candidate does not end the scan, since a weaker signal with a lower
/// threshold can still be captured. Returns events in decode order.
pub fn slot_capture_pass(slot: &[SlotTransmission], noise: f64) -> Vec<DecodeEvent> {
    let mut remaining: Vec<SlotTransmission> = slot.to_vec();
    // descending power; ties keep insertion order
    remaining.sort_by(|a, b| b.gain_power.total_cmp(&a.gain_power));
    let mut events = Vec::new();
    loop {
        let hit = (0..remaining.len()).find(|&i| {
            let tx = &remaining[i];
            tx.gain_power / (interference_excluding(&remaining, i) + noise) >= tx.sinr_threshold
        });
        match hit {
            Some(i) => {
                let tx = remaining.remove(i);
                events.push(DecodeEvent {
                    user: tx.user,
                    packet: tx.packet,
                });
            }
            None => break,
        }
    }
    events
}

/// Iterative capture + intra/inter-slot SIC over a whole frame.
pub fn decode_frame(log: &FrameSignalLog) -> DecodeOutcome {
    debug_assert!(log.is_well_formed());
    let mut remaining = log.slots.clone();
    let mut outcome = DecodeOutcome::default();
    let total: usize = remaining.iter().map(Vec::len).sum();

    for _ in 0..=total {
        let mut progress = false;
        for s in 0..remaining.len() {
            if remaining[s].is_empty() {
                continue;
            }
            let events = slot_capture_pass(&remaining[s], log.noise_power);
            for ev in events {
                progress = true;
                outcome.decoded.entry(ev.packet).or_insert(s);
                for slot in remaining.iter_mut() {
                    slot.retain(|t| t.packet != ev.packet);
                }
            }
        }
        if !progress {
            break;
        }
        outcome.iterations += 1;
    }

    outcome.undecoded = log
        .packets()
        .into_iter()
        .filter(|p| !outcome.decoded.contains_key(p))
        .collect();
    outcome
}
