use crate::env::AgentState;

/// Per-observation reward: a latency- and repetition-discounted bonus once
/// the packet is decoded, otherwise a penalty growing with both and floored
/// at -1.
pub fn reward(latency: u32, repetitions: u32, decoded: bool) -> f64 {
    let l = latency as f64;
    let v = repetitions as f64;
    if decoded {
        50.0 / ((l + 1.0).powi(2) + (v + 1.0))
    } else {
        (-0.03 * l - 0.01 * v).max(-1.0)
    }
}

pub fn reward_of(state: AgentState) -> f64 {
    reward(state.latency, state.repetitions, state.decoded)
}
