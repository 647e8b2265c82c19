//! Single-user packet model without contention and value iteration on it.

use std::collections::BTreeMap;

use thiserror::Error;

use super::qtable::{GreedyPolicy, QTable, QTablePair};
use super::reward::reward_of;
use super::space::StateSpace;
use crate::env::{frame_fate, iot_link, AgentState, EnvError};
use crate::phy;
use crate::scenario::{Deployment, Scenario, SystemParams};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model row for ({latency},{repetitions}) action {action} sums to {sum}")]
    NotNormalized {
        latency: u32,
        repetitions: u32,
        action: usize,
        sum: f64,
    },
    #[error("success probability {0} outside [0, 1]")]
    SuccessProb(f64),
    #[error("value iteration did not reach tolerance {tol} within {sweeps} sweeps")]
    NoConvergence { tol: f64, sweeps: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub next: AgentState,
    pub prob: f64,
    /// Reward paid on `next`.
    pub reward: f64,
    /// Model row of `next`; `None` when `next` is terminal.
    pub next_row: Option<usize>,
}

/// Transition kernel of one user that never meets interference. Rows cover
/// the empty queue and every reachable decision state, ordered by
/// decreasing latency with the empty queue last.
#[derive(Debug, Clone)]
pub struct SingleUserModel {
    space: StateSpace,
    success_prob: f64,
    arrival_prob: f64,
    states: Vec<AgentState>,
    row_of: Vec<Option<usize>>,
    /// `kernel[row][action]`
    kernel: Vec<Vec<Vec<Branch>>>,
}

impl SingleUserModel {
    pub fn new(params: &SystemParams, success_prob: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&success_prob) {
            return Err(ModelError::SuccessProb(success_prob));
        }
        let space = StateSpace::new(params);
        let mut states: Vec<AgentState> = space.decision_states().collect();
        states.sort_by(|a, b| b.latency.cmp(&a.latency).then(a.repetitions.cmp(&b.repetitions)));
        states.push(AgentState::EMPTY);
        let mut row_of = vec![None; space.num_states()];
        for (r, s) in states.iter().enumerate() {
            row_of[space.index(*s).expect("decision states lie in the box")] = Some(r);
        }
        let mut model = Self {
            space,
            success_prob,
            arrival_prob: params.iot_arrival_prob,
            states,
            row_of,
            kernel: Vec::new(),
        };
        let kernel = model
            .states
            .iter()
            .map(|&s| {
                (0..space.num_actions)
                    .map(|a| model.branches(s, a as u32, params))
                    .collect()
            })
            .collect();
        model.kernel = kernel;
        Ok(model)
    }

    fn branch(&self, next: AgentState, prob: f64) -> Branch {
        let next_row = if self.space.is_terminal(next) {
            None
        } else {
            let r = self.row(next);
            debug_assert!(r.is_some(), "unreachable successor {next:?}");
            r
        };
        Branch {
            next,
            prob,
            reward: reward_of(next),
            next_row,
        }
    }

    fn branches(&self, s: AgentState, a: u32, params: &SystemParams) -> Vec<Branch> {
        let tf = params.frame_length as u32;
        if s == AgentState::EMPTY {
            // an idle frame: the first arrival fixes the latency seen at the
            // next frame start
            let p = self.arrival_prob;
            let mut out: Vec<Branch> = (0..tf)
                .map(|k| {
                    let prob = (1.0 - p).powi(k as i32) * p;
                    self.branch(AgentState::new(tf - k, 0, false), prob)
                })
                .collect();
            out.push(self.branch(AgentState::EMPTY, (1.0 - p).powi(tf as i32)));
            return out;
        }
        let q = self.success_prob;
        let mut out: Vec<Branch> = (1..=a)
            .map(|k| {
                let prob = (1.0 - q).powi(k as i32 - 1) * q;
                self.branch(frame_fate(s, a, Some(k), params).observation(), prob)
            })
            .collect();
        out.push(self.branch(
            frame_fate(s, a, None, params).observation(),
            (1.0 - q).powi(a as i32),
        ));
        out
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn success_prob(&self) -> f64 {
        self.success_prob
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn row(&self, s: AgentState) -> Option<usize> {
        self.space.index(s).and_then(|i| self.row_of[i])
    }

    pub fn kernel(&self, s: AgentState, action: u32) -> Option<&[Branch]> {
        self.row(s)
            .and_then(|r| self.kernel[r].get(action as usize))
            .map(|v| v.as_slice())
    }

    pub fn check_normalized(&self, tol: f64) -> Result<(), ModelError> {
        for (r, s) in self.states.iter().enumerate() {
            for (a, row) in self.kernel[r].iter().enumerate() {
                let sum: f64 = row.iter().map(|b| b.prob).sum();
                if (sum - 1.0).abs() > tol || row.iter().any(|b| b.prob < 0.0) {
                    return Err(ModelError::NotNormalized {
                        latency: s.latency,
                        repetitions: s.repetitions,
                        action: a,
                        sum,
                    });
                }
            }
        }
        Ok(())
    }

    fn backup(&self, row: &[Branch], values: &[f64], discount: f64) -> f64 {
        row.iter()
            .map(|b| b.prob * (b.reward + b.next_row.map_or(0.0, |n| discount * values[n])))
            .sum()
    }

    /// Scales every probability in one row; only for negative tests.
    #[doc(hidden)]
    pub fn perturb_row(&mut self, s: AgentState, action: u32, factor: f64) {
        if let Some(r) = self.row(s) {
            for b in &mut self.kernel[r][action as usize] {
                b.prob *= factor;
            }
        }
    }
}

/// Success probability of user `user` alone on its band.
pub fn build_single_user_model(
    scenario: &Scenario,
    deployment: &Deployment,
    user: usize,
) -> Result<SingleUserModel, ModelError> {
    let link = iot_link(scenario, user, deployment.iot_distances[user]).map_err(EnvError::from)?;
    SingleUserModel::new(scenario.params(), phy::interference_free_success_prob(&link))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueSolution {
    /// Indexed by model row.
    pub values: Vec<f64>,
    /// Indexed by model row.
    pub actions: Vec<u32>,
    pub sweeps: usize,
    pub discount: f64,
}

impl ValueSolution {
    pub fn value(&self, model: &SingleUserModel, s: AgentState) -> f64 {
        model.row(s).map_or(0.0, |r| self.values[r])
    }

    pub fn policy(&self, model: &SingleUserModel) -> GreedyPolicy {
        GreedyPolicy::from_fn(*model.space(), |s| model.row(s).map_or(0, |r| self.actions[r]))
    }

    /// `Q(s, a) = sum_s' P(s'|s,a) (R(s') + discount V(s'))` for one row.
    pub fn action_values(&self, model: &SingleUserModel, s: AgentState) -> Option<Vec<f64>> {
        model.row(s).map(|r| {
            model.kernel[r]
                .iter()
                .map(|row| model.backup(row, &self.values, self.discount))
                .collect()
        })
    }
}

const MAX_SWEEPS: usize = 100_000;

fn best(values: &[f64]) -> (usize, f64) {
    let mut a = 0;
    for i in 1..values.len() {
        if values[i] > values[a] {
            a = i;
        }
    }
    (a, values[a])
}

/// In-place value iteration. Stops once a sweep changes no value by `tol`
/// or more.
pub fn value_iteration(
    model: &SingleUserModel,
    discount: f64,
    tol: f64,
) -> Result<ValueSolution, ModelError> {
    model.check_normalized(1e-12)?;
    let n = model.states.len();
    let mut values = vec![0.0; n];
    let mut actions = vec![0u32; n];
    let mut q = Vec::with_capacity(model.space.num_actions);
    for sweep in 1..=MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for r in 0..n {
            q.clear();
            q.extend(model.kernel[r].iter().map(|row| model.backup(row, &values, discount)));
            let (a, v) = best(&q);
            delta = delta.max((v - values[r]).abs());
            values[r] = v;
            actions[r] = a as u32;
        }
        if delta < tol {
            return Ok(ValueSolution {
                values,
                actions,
                sweeps: sweep,
                discount,
            });
        }
    }
    Err(ModelError::NoConvergence {
        tol,
        sweeps: MAX_SWEEPS,
    })
}

/// Both tables set to the model's action values.
pub fn vi_initialize(model: &SingleUserModel, solution: &ValueSolution) -> QTablePair {
    let mut q = QTable::zeros(*model.space());
    for &s in model.states() {
        let qs = solution.action_values(model, s).expect("model state");
        q.row_mut(s).expect("model state").copy_from_slice(&qs);
    }
    QTablePair { q1: q.clone(), q2: q }
}

/// Distribution of a packet's state at its first decision: an arrival in the
/// feedback slot of a terminating frame waits one slot, otherwise the queue
/// idles and the first arrival in a frame fixes the latency.
pub fn start_distribution(params: &SystemParams) -> Vec<(AgentState, f64)> {
    let p = params.iot_arrival_prob;
    let tf = params.frame_length as u32;
    let idle = 1.0 - (1.0 - p).powi(tf as i32);
    let mut m: BTreeMap<u32, f64> = BTreeMap::new();
    *m.entry(1).or_default() += p;
    for k in 0..tf {
        *m.entry(tf - k).or_default() += (1.0 - p) * (1.0 - p).powi(k as i32) * p / idle;
    }
    m.into_iter()
        .map(|(l, pr)| (AgentState::new(l, 0, false), pr))
        .collect()
}

/// Terminal-state distribution of a packet that starts from `start` and
/// follows `policy`.
pub fn packet_outcomes(
    model: &SingleUserModel,
    policy: &GreedyPolicy,
    start: &[(AgentState, f64)],
) -> BTreeMap<AgentState, f64> {
    let mut mass = vec![0.0; model.states.len()];
    for &(s, p) in start {
        if let Some(r) = model.row(s) {
            mass[r] += p;
        }
    }
    let mut out = BTreeMap::new();
    // rows are in decreasing latency; walk them backwards, skipping the idle row
    for r in (0..model.states.len()).rev() {
        let s = model.states[r];
        if s == AgentState::EMPTY || mass[r] == 0.0 {
            continue;
        }
        let m = mass[r];
        let row = &model.kernel[r][policy.action(s) as usize];
        for b in row {
            match b.next_row {
                Some(n) => mass[n] += m * b.prob,
                None => *out.entry(b.next).or_insert(0.0) += m * b.prob,
            }
        }
    }
    out
}

/// Expected terminal reward per packet under `policy`.
pub fn expected_packet_reward(
    model: &SingleUserModel,
    policy: &GreedyPolicy,
    start: &[(AgentState, f64)],
) -> f64 {
    packet_outcomes(model, policy, start)
        .into_iter()
        .map(|(s, p)| p * reward_of(s))
        .sum()
}
