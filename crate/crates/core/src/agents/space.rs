use crate::env::AgentState;
use crate::scenario::SystemParams;

/// Dense indexing of the bounded `(latency, repetitions, decoded)` box a
/// user can observe while its packet is alive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateSpace {
    pub max_latency: u32,
    pub max_repetitions: u32,
    pub num_actions: usize,
    pub frame_length: u32,
}

impl StateSpace {
    pub fn new(params: &SystemParams) -> Self {
        Self {
            max_latency: params.latency_deadline,
            max_repetitions: params.max_repetitions(),
            num_actions: params.uplink_slots() + 1,
            frame_length: params.frame_length as u32,
        }
    }

    pub fn num_states(&self) -> usize {
        (self.max_latency as usize + 1) * (self.max_repetitions as usize + 1) * 2
    }

    pub fn index(&self, s: AgentState) -> Option<usize> {
        if s.latency > self.max_latency || s.repetitions > self.max_repetitions {
            return None;
        }
        let v = self.max_repetitions as usize + 1;
        Some(((s.latency as usize * v) + s.repetitions as usize) * 2 + usize::from(s.decoded))
    }

    pub fn state(&self, index: usize) -> AgentState {
        let decoded = index % 2 == 1;
        let rest = index / 2;
        let v = self.max_repetitions as usize + 1;
        AgentState::new((rest / v) as u32, (rest % v) as u32, decoded)
    }

    /// Delivered or past the deadline: no further decisions.
    pub fn is_terminal(&self, s: AgentState) -> bool {
        s.decoded || s.latency > self.max_latency
    }

    /// States in which a queued packet can be waiting for a decision: at most
    /// `T_F - 1` repetitions per elapsed frame.
    pub fn is_decision_state(&self, s: AgentState) -> bool {
        if s.decoded || s.latency == 0 || s.latency > self.max_latency {
            return false;
        }
        let frames_elapsed = (s.latency - 1) / self.frame_length;
        s.repetitions <= (self.frame_length - 1) * frames_elapsed
    }

    pub fn decision_states(&self) -> impl Iterator<Item = AgentState> + '_ {
        (1..=self.max_latency).flat_map(move |l| {
            (0..=self.max_repetitions)
                .map(move |v| AgentState::new(l, v, false))
                .filter(move |s| self.is_decision_state(*s))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let sp = StateSpace::new(&SystemParams::default());
        for i in 0..sp.num_states() {
            assert_eq!(sp.index(sp.state(i)), Some(i));
        }
        assert_eq!(sp.index(AgentState::new(51, 0, false)), None);
        assert_eq!(sp.num_actions, 10);
    }

    #[test]
    fn decision_states() {
        let sp = StateSpace::new(&SystemParams::default());
        assert!(sp.is_decision_state(AgentState::new(10, 0, false)));
        assert!(!sp.is_decision_state(AgentState::new(10, 1, false)));
        assert!(sp.is_decision_state(AgentState::new(11, 9, false)));
        assert!(!sp.is_decision_state(AgentState::new(11, 9, true)));
        assert!(!sp.is_decision_state(AgentState::EMPTY));
        assert!(sp.decision_states().all(|s| sp.index(s).is_some()));
    }
}
