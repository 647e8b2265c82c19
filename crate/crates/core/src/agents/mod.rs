//! Per-user transmission policies: tabular learners, the model-based
//! baseline and the static IRSA law.

pub mod irsa;
pub mod model;
pub mod qtable;
pub mod reward;
pub mod softmax;
pub mod space;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use irsa::{irsa_policy, DegreeDistribution, Placement};
pub use model::{
    build_single_user_model, expected_packet_reward, packet_outcomes, start_distribution,
    value_iteration, vi_initialize, SingleUserModel, ValueSolution,
};
pub use qtable::{
    doql_update, extract_policy, ql_update, DoubleRule, GreedyPolicy, LearningRates, QTable,
    QTablePair, Transition,
};
pub use reward::{reward, reward_of};
pub use softmax::{softmax_probs, softmax_select, TemperatureSchedule};
pub use space::StateSpace;

use crate::env::{AgentState, SlotMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "VI")]
    Vi,
    #[serde(rename = "QL")]
    Ql,
    #[serde(rename = "QLPlusVI")]
    QlPlusVi,
    #[serde(rename = "DoQL")]
    DoQl,
    #[serde(rename = "DoQLPlusVI")]
    DoQlPlusVi,
    #[serde(rename = "IRSA")]
    Irsa,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Vi,
        Scheme::Ql,
        Scheme::QlPlusVi,
        Scheme::DoQl,
        Scheme::DoQlPlusVi,
        Scheme::Irsa,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Vi => "VI",
            Scheme::Ql => "QL",
            Scheme::QlPlusVi => "QLPlusVI",
            Scheme::DoQl => "DoQL",
            Scheme::DoQlPlusVi => "DoQLPlusVI",
            Scheme::Irsa => "IRSA",
        }
    }

    /// Stable tag mixed into simulation seeds.
    pub fn tag(self) -> u64 {
        match self {
            Scheme::Vi => 1,
            Scheme::Ql => 2,
            Scheme::QlPlusVi => 3,
            Scheme::DoQl => 4,
            Scheme::DoQlPlusVi => 5,
            Scheme::Irsa => 6,
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(
            self,
            Scheme::Ql | Scheme::QlPlusVi | Scheme::DoQl | Scheme::DoQlPlusVi
        )
    }

    pub fn needs_model(self) -> bool {
        matches!(self, Scheme::Vi | Scheme::QlPlusVi | Scheme::DoQlPlusVi)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown scheme '{s}'"))
    }
}

/// Learning and baseline knobs shared by all users of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub temperature: TemperatureSchedule,
    pub double_rule: DoubleRule,
    pub irsa_placement: Placement,
    pub vi_tolerance: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            discount: 0.95,
            temperature: TemperatureSchedule::default(),
            double_rule: DoubleRule::AsPrinted,
            irsa_placement: Placement::Random,
            vi_tolerance: 1e-9,
        }
    }
}

impl AgentConfig {
    pub fn rates(&self) -> LearningRates {
        LearningRates {
            learning_rate: self.learning_rate,
            discount: self.discount,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Brain {
    Fixed(GreedyPolicy),
    Single(QTable),
    Double(QTablePair),
    Irsa(DegreeDistribution),
}

/// One IoT user's decision maker.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    scheme: Scheme,
    brain: Brain,
    uplink_slots: usize,
}

fn mean_argmax(a: &[f64], b: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = (a[0] + b[0]) / 2.0;
    for i in 1..a.len() {
        let v = (a[i] + b[i]) / 2.0;
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

impl Agent {
    /// `model` is required by the model-based schemes and ignored otherwise.
    pub fn new(
        scheme: Scheme,
        space: StateSpace,
        model: Option<&SingleUserModel>,
        config: &AgentConfig,
    ) -> Result<Self, model::ModelError> {
        let uplink_slots = space.num_actions - 1;
        let solve = || -> Result<(SingleUserModel, ValueSolution), model::ModelError> {
            let m = model.expect("model-based scheme without a model").clone();
            let sol = value_iteration(&m, config.discount, config.vi_tolerance)?;
            Ok((m, sol))
        };
        let brain = match scheme {
            Scheme::Vi => {
                let (m, sol) = solve()?;
                Brain::Fixed(sol.policy(&m))
            }
            Scheme::Ql => Brain::Single(QTable::zeros(space)),
            Scheme::DoQl => Brain::Double(QTablePair::zeros(space)),
            Scheme::QlPlusVi => {
                let (m, sol) = solve()?;
                Brain::Single(vi_initialize(&m, &sol).q1)
            }
            Scheme::DoQlPlusVi => {
                let (m, sol) = solve()?;
                Brain::Double(vi_initialize(&m, &sol))
            }
            Scheme::Irsa => Brain::Irsa(
                DegreeDistribution::irsa_default(uplink_slots)
                    .expect("default law fits the frame"),
            ),
        };
        Ok(Self {
            scheme,
            brain,
            uplink_slots,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Slots to transmit in. `temperature` turns on softmax exploration for
    /// the learners; without it they act greedily on the averaged tables.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: AgentState,
        temperature: Option<f64>,
        placement: Placement,
        rng: &mut R,
    ) -> SlotMask {
        if state == AgentState::EMPTY {
            return SlotMask::default();
        }
        let degree = match &self.brain {
            Brain::Fixed(p) => p.action(state),
            Brain::Irsa(d) => {
                return irsa_policy(d, placement, self.uplink_slots, rng);
            }
            Brain::Single(q) => match q.row(state) {
                None => 0,
                Some(row) => match temperature {
                    Some(t) => softmax_select(row, t, rng) as u32,
                    None => qtable::argmax(row) as u32,
                },
            },
            Brain::Double(pair) => match (pair.q1.row(state), pair.q2.row(state)) {
                (Some(a), Some(b)) => match temperature {
                    Some(t) => softmax_select(&pair.mean_row(state), t, rng) as u32,
                    None => mean_argmax(a, b) as u32,
                },
                _ => 0,
            },
        };
        SlotMask::consecutive(degree)
    }

    /// Applies one experience tuple; a no-op for the static schemes.
    pub fn learn<R: Rng + ?Sized>(&mut self, t: &Transition, config: &AgentConfig, rng: &mut R) {
        match &mut self.brain {
            Brain::Single(q) => {
                ql_update(q, t, config.rates());
            }
            Brain::Double(pair) => {
                doql_update(pair, t, config.rates(), config.double_rule, rng);
            }
            Brain::Fixed(_) | Brain::Irsa(_) => {}
        }
    }

    /// Greedy policy the agent follows at inference; `None` for IRSA.
    pub fn greedy_policy(&self) -> Option<GreedyPolicy> {
        match &self.brain {
            Brain::Fixed(p) => Some(p.clone()),
            Brain::Single(q) => Some(qtable::greedy_single(q)),
            Brain::Double(pair) => Some(extract_policy(pair)),
            Brain::Irsa(_) => None,
        }
    }

    /// Hash of everything that determines the agent's choices.
    pub fn fingerprint(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        match &self.brain {
            Brain::Single(q) => qtable::fingerprint(&[q]),
            Brain::Double(p) => qtable::fingerprint(&[&p.q1, &p.q2]),
            Brain::Fixed(p) => {
                let mut h = std::collections::hash_map::DefaultHasher::new();
                let sp = p.space();
                for i in 0..sp.num_states() {
                    p.action(sp.state(i)).hash(&mut h);
                }
                h.finish()
            }
            Brain::Irsa(d) => {
                let mut h = std::collections::hash_map::DefaultHasher::new();
                for k in 0..=self.uplink_slots {
                    d.prob(k).to_bits().hash(&mut h);
                }
                h.finish()
            }
        }
    }

    /// Flat-file checkpoint of the learned tables.
    pub fn checkpoint(&self) -> Option<String> {
        match &self.brain {
            Brain::Single(q) => Some(qtable::write_qtables(q, q)),
            Brain::Double(p) => Some(qtable::write_qtables(&p.q1, &p.q2)),
            Brain::Fixed(_) | Brain::Irsa(_) => None,
        }
    }

    pub fn tables(&self) -> Option<QTablePair> {
        match &self.brain {
            Brain::Single(q) => Some(QTablePair {
                q1: q.clone(),
                q2: q.clone(),
            }),
            Brain::Double(p) => Some(p.clone()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::SystemParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scheme_names_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("dqn".parse::<Scheme>().is_err());
    }

    #[test]
    fn fresh_learners_start_at_zero() {
        let p = SystemParams::default();
        let sp = StateSpace::new(&p);
        let cfg = AgentConfig::default();
        for s in [Scheme::Ql, Scheme::DoQl] {
            let a = Agent::new(s, sp, None, &cfg).unwrap();
            let t = a.tables().unwrap();
            assert!(t.q1.values().iter().chain(t.q2.values()).all(|v| *v == 0.0));
        }
    }

    #[test]
    fn vi_initialized_learners_act_like_vi() {
        let p = SystemParams::default();
        let sp = StateSpace::new(&p);
        let cfg = AgentConfig::default();
        let m = SingleUserModel::new(&p, 0.3).unwrap();
        let vi = Agent::new(Scheme::Vi, sp, Some(&m), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for s in [Scheme::QlPlusVi, Scheme::DoQlPlusVi] {
            let a = Agent::new(s, sp, Some(&m), &cfg).unwrap();
            for &st in m.states() {
                assert_eq!(
                    a.act(st, None, Placement::Random, &mut rng),
                    vi.act(st, None, Placement::Random, &mut rng)
                );
            }
        }
    }

    #[test]
    fn overestimation_probe() {
        // one state, ten actions, zero-mean noisy terminal rewards, then a
        // bootstrapping state that reads the noisy estimates
        let p = SystemParams::default();
        let sp = StateSpace::new(&p);
        let rates = LearningRates {
            learning_rate: 0.1,
            discount: 1.0,
        };
        let s1 = AgentState::new(11, 0, false);
        let s0 = AgentState::new(1, 0, false);
        let done = AgentState::new(12, 1, true);
        let mut wins = 0;
        let trials = 40;
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut q = QTable::zeros(sp);
            let mut pair = QTablePair::zeros(sp);
            for _ in 0..200 {
                for a in 0..sp.num_actions {
                    let r: f64 = rng.random_range(-1.0..1.0);
                    let t = Transition {
                        state: s1,
                        action: a as u32,
                        next_state: done,
                        reward: r,
                    };
                    ql_update(&mut q, &t, rates);
                    doql_update(&mut pair, &t, rates, DoubleRule::AsPrinted, &mut rng);
                }
                let t = Transition {
                    state: s0,
                    action: 0,
                    next_state: s1,
                    reward: 0.0,
                };
                ql_update(&mut q, &t, rates);
                doql_update(&mut pair, &t, rates, DoubleRule::AsPrinted, &mut rng);
            }
            let single = q.get(s0, 0);
            let double = (pair.q1.get(s0, 0) + pair.q2.get(s0, 0)) / 2.0;
            assert!(single > 0.0, "seed {seed}: {single}");
            if double < single {
                wins += 1;
            }
        }
        // sign test: under no difference wins ~ Bin(40, 1/2); 30+ has p < 0.001
        assert!(wins >= 30, "double estimator lower in only {wins}/{trials}");
    }

    #[test]
    fn irsa_agent_ignores_empty_queue() {
        let p = SystemParams::default();
        let a = Agent::new(Scheme::Irsa, StateSpace::new(&p), None, &AgentConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(a.act(AgentState::EMPTY, None, Placement::Random, &mut rng).degree(), 0);
        assert!(a.act(AgentState::new(4, 0, false), None, Placement::Random, &mut rng).degree() >= 2);
        assert!(a.checkpoint().is_none());
    }
}
