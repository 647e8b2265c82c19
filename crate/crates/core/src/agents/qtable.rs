use std::fmt::Write as _;
use std::hash::{Hash, Hasher};

use rand::Rng;
use thiserror::Error;

use super::space::StateSpace;
use crate::env::AgentState;

#[derive(Debug, Error)]
pub enum QTableError {
    #[error("qtable line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("qtable state ({latency},{repetitions},{decoded}) or action {action} outside the table")]
    OutOfRange {
        latency: u32,
        repetitions: u32,
        decoded: bool,
        action: usize,
    },
}

/// One experience tuple. The reward is the one paid on `next_state`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: AgentState,
    pub action: u32,
    pub next_state: AgentState,
    pub reward: f64,
}

/// Which table an estimator picks its bootstrap action from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoubleRule {
    /// Argmax over the other table, evaluated on the table being updated.
    #[default]
    AsPrinted,
    /// Argmax over the table being updated, evaluated on the other table.
    Classic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    pub learning_rate: f64,
    pub discount: f64,
}

/// Dense action-value table over a [`StateSpace`].
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    space: StateSpace,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(space: StateSpace) -> Self {
        Self {
            space,
            values: vec![0.0; space.num_states() * space.num_actions],
        }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Action values of `s`; `None` outside the state box.
    pub fn row(&self, s: AgentState) -> Option<&[f64]> {
        let n = self.space.num_actions;
        self.space.index(s).map(|i| &self.values[i * n..(i + 1) * n])
    }

    pub fn row_mut(&mut self, s: AgentState) -> Option<&mut [f64]> {
        let n = self.space.num_actions;
        self.space
            .index(s)
            .map(move |i| &mut self.values[i * n..(i + 1) * n])
    }

    pub fn get(&self, s: AgentState, a: usize) -> f64 {
        self.row(s).map_or(0.0, |r| r[a])
    }

    pub fn set(&mut self, s: AgentState, a: usize, value: f64) {
        if let Some(r) = self.row_mut(s) {
            r[a] = value;
        }
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    fn continuation_row(&self, s: AgentState) -> Option<&[f64]> {
        if self.space.is_terminal(s) {
            None
        } else {
            self.row(s)
        }
    }
}

/// First index of the maximum; NaN-free input assumed.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Single-estimator update. Returns the new value.
pub fn ql_update(table: &mut QTable, t: &Transition, rates: LearningRates) -> f64 {
    let cont = table
        .continuation_row(t.next_state)
        .map_or(0.0, |r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let a = t.action as usize;
    let old = table.get(t.state, a);
    let new = (1.0 - rates.learning_rate) * old
        + rates.learning_rate * (t.reward + rates.discount * cont);
    table.set(t.state, a, new);
    new
}

/// Pair of estimators updated one at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct QTablePair {
    pub q1: QTable,
    pub q2: QTable,
}

impl QTablePair {
    pub fn zeros(space: StateSpace) -> Self {
        Self {
            q1: QTable::zeros(space),
            q2: QTable::zeros(space),
        }
    }

    pub fn space(&self) -> &StateSpace {
        self.q1.space()
    }

    /// `(q1 + q2) / 2` for one state.
    pub fn mean_row(&self, s: AgentState) -> Vec<f64> {
        match (self.q1.row(s), self.q2.row(s)) {
            (Some(a), Some(b)) => a.iter().zip(b).map(|(x, y)| (x + y) / 2.0).collect(),
            _ => vec![0.0; self.space().num_actions],
        }
    }
}

/// Updates `own` bootstrapping through `other` according to `rule`.
fn cross_update(
    own: &mut QTable,
    other: &QTable,
    t: &Transition,
    rates: LearningRates,
    rule: DoubleRule,
) -> f64 {
    let cont = match (own.continuation_row(t.next_state), other.continuation_row(t.next_state)) {
        (Some(o), Some(x)) => match rule {
            DoubleRule::AsPrinted => o[argmax(x)],
            DoubleRule::Classic => x[argmax(o)],
        },
        _ => 0.0,
    };
    let a = t.action as usize;
    let old = own.get(t.state, a);
    let new = (1.0 - rates.learning_rate) * old
        + rates.learning_rate * (t.reward + rates.discount * cont);
    own.set(t.state, a, new);
    new
}

/// Double-estimator update: a fair coin picks the table to update. Returns
/// `true` when `q1` was updated.
pub fn doql_update<R: Rng + ?Sized>(
    pair: &mut QTablePair,
    t: &Transition,
    rates: LearningRates,
    rule: DoubleRule,
    rng: &mut R,
) -> bool {
    let first = rng.random_bool(0.5);
    if first {
        cross_update(&mut pair.q1, &pair.q2, t, rates, rule);
    } else {
        cross_update(&mut pair.q2, &pair.q1, t, rates, rule);
    }
    first
}

/// Greedy action per state, indexed like the state space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyPolicy {
    space: StateSpace,
    actions: Vec<u32>,
}

impl GreedyPolicy {
    pub fn from_fn(space: StateSpace, f: impl Fn(AgentState) -> u32) -> Self {
        let actions = (0..space.num_states()).map(|i| f(space.state(i))).collect();
        Self { space, actions }
    }

    /// Degree for `s`; no replicas for the empty queue or states outside the
    /// box.
    pub fn action(&self, s: AgentState) -> u32 {
        if s == AgentState::EMPTY {
            return 0;
        }
        self.space.index(s).map_or(0, |i| self.actions[i])
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }
}

pub fn greedy_single(table: &QTable) -> GreedyPolicy {
    GreedyPolicy::from_fn(*table.space(), |s| {
        table.row(s).map_or(0, |r| argmax(r) as u32)
    })
}

/// Greedy policy on the averaged estimator; ties go to the smaller degree.
pub fn extract_policy(pair: &QTablePair) -> GreedyPolicy {
    GreedyPolicy::from_fn(*pair.space(), |s| argmax(&pair.mean_row(s)) as u32)
}

pub const QTABLE_HEADER: &str = "# gfsim qtable v1\nlatency\trepetitions\tdecoded\taction\tq1\tq2";

/// Flat text form, one line per (state, action). Single tables write the
/// same value in both columns.
pub fn write_qtables(q1: &QTable, q2: &QTable) -> String {
    let space = q1.space();
    let mut out = String::with_capacity(q1.values.len() * 24);
    out.push_str(QTABLE_HEADER);
    out.push('\n');
    for i in 0..space.num_states() {
        let s = space.state(i);
        for a in 0..space.num_actions {
            let k = i * space.num_actions + a;
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                s.latency,
                s.repetitions,
                u8::from(s.decoded),
                a,
                q1.values[k],
                q2.values[k]
            );
        }
    }
    out
}

/// Parses [`write_qtables`] output into a pair over `space`. Missing entries
/// stay zero.
pub fn read_qtables(text: &str, space: StateSpace) -> Result<QTablePair, QTableError> {
    let mut pair = QTablePair::zeros(space);
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.starts_with('#') || line.starts_with("latency") || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |reason: &str| QTableError::Parse {
            line: line_no,
            reason: reason.to_string(),
        };
        if fields.len() != 6 {
            return Err(parse_err("expected 6 fields"));
        }
        let l: u32 = fields[0].parse().map_err(|_| parse_err("latency"))?;
        let v: u32 = fields[1].parse().map_err(|_| parse_err("repetitions"))?;
        let d = match fields[2] {
            "0" => false,
            "1" => true,
            _ => return Err(parse_err("decoded")),
        };
        let a: usize = fields[3].parse().map_err(|_| parse_err("action"))?;
        let q1: f64 = fields[4].parse().map_err(|_| parse_err("q1"))?;
        let q2: f64 = fields[5].parse().map_err(|_| parse_err("q2"))?;
        if !q1.is_finite() || !q2.is_finite() {
            return Err(parse_err("non-finite value"));
        }
        let s = AgentState::new(l, v, d);
        if space.index(s).is_none() || a >= space.num_actions {
            return Err(QTableError::OutOfRange {
                latency: l,
                repetitions: v,
                decoded: d,
                action: a,
            });
        }
        pair.q1.set(s, a, q1);
        pair.q2.set(s, a, q2);
    }
    Ok(pair)
}

/// Order-sensitive hash of the table contents.
pub fn fingerprint(tables: &[&QTable]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for t in tables {
        for v in &t.values {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}
