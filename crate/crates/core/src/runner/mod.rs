//! Experiment orchestration: replications, training and inference phases,
//! sweeps and artifact persistence.

pub mod persist;
pub mod seed;

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    build_single_user_model, model::ModelError, reward_of, Agent, AgentConfig, Scheme, StateSpace,
    Transition,
};
use crate::env::{EnvError, Environment, FrameLogWriter, FrameResult, SlotMask};
use crate::metrics::tables::{PointKey, PointRuns};
use crate::metrics::{PhaseMetrics, RunArtifacts};
use crate::scenario::{sample_deployment, Scenario, ScenarioError, SharingMode};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid experiment: {0}")]
    Spec(String),
    #[error("policy of {scheme} user {user} changed during inference")]
    PolicyChanged { scheme: Scheme, user: usize },
}

impl RunError {
    /// Short stable identifier for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Env(_) => "env",
            RunError::Model(_) => "model",
            RunError::Scenario(_) => "scenario",
            RunError::Io { .. } => "io",
            RunError::Spec(_) => "spec",
            RunError::PolicyChanged { .. } => "policy_changed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhasePlan {
    pub training_frames: u64,
    pub inference_frames: u64,
    pub replications: u32,
    pub base_seed: u64,
    /// Frames per training reward window.
    pub reward_window: u64,
}

impl Default for PhasePlan {
    fn default() -> Self {
        Self {
            training_frames: 5000,
            inference_frames: 100_000,
            replications: 100,
            base_seed: 1,
            reward_window: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "axis", content = "values")]
pub enum SweepAxis {
    B2Fraction(Vec<f64>),
    NumIot(Vec<usize>),
    Deadline(Vec<u32>),
}

impl SweepAxis {
    pub fn b2_default() -> Self {
        SweepAxis::B2Fraction((1..=9).map(|i| i as f64 / 10.0).collect())
    }

    fn len(&self) -> usize {
        match self {
            SweepAxis::B2Fraction(v) => v.len(),
            SweepAxis::NumIot(v) => v.len(),
            SweepAxis::Deadline(v) => v.len(),
        }
    }

    /// Scenarios along the axis. A bandwidth split axis has a single point
    /// under sharing.
    pub fn scenarios(&self, base: &Scenario) -> Result<Vec<Scenario>, RunError> {
        if self.len() == 0 {
            return Err(RunError::Spec("sweep axis is empty".into()));
        }
        Ok(match self {
            SweepAxis::B2Fraction(v) => {
                if let Some(f) = v.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
                    return Err(RunError::Spec(format!("b2 fraction {f} outside (0, 1)")));
                }
                if base.mode() == SharingMode::Sharing {
                    vec![base.clone()]
                } else {
                    v.iter()
                        .map(|&f| base.with_b2_fraction(f))
                        .collect::<Result<_, _>>()?
                }
            }
            SweepAxis::NumIot(v) => v
                .iter()
                .map(|&j| base.with_num_iot(j))
                .collect::<Result<_, _>>()?,
            SweepAxis::Deadline(v) => v
                .iter()
                .map(|&d| base.with_deadline(d))
                .collect::<Result<_, _>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub schemes: Vec<Scheme>,
    pub plan: PhasePlan,
    pub agent: AgentConfig,
    pub sweep: Option<SweepAxis>,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario, schemes: Vec<Scheme>) -> Self {
        Self {
            scenario,
            schemes,
            plan: PhasePlan::default(),
            agent: AgentConfig::default(),
            sweep: None,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.plan.replications == 0 {
            return Err(RunError::Spec("replications must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(RunError::Spec("no scheme selected".into()));
        }
        if self.plan.inference_frames == 0 {
            return Err(RunError::Spec("inference frames must be positive".into()));
        }
        let a = &self.agent;
        if !(a.learning_rate >= 0.0 && a.learning_rate <= 1.0)
            || !(a.discount >= 0.0 && a.discount < 1.0)
            || !(a.temperature.start > 0.0 && a.temperature.end > 0.0)
        {
            return Err(RunError::Spec("learning parameters out of range".into()));
        }
        Ok(())
    }

    /// Non-fatal remarks about the spec.
    pub fn warnings(&self) -> Vec<String> {
        self.schemes
            .iter()
            .filter(|s| !s.is_learning() && self.plan.training_frames > 0)
            .map(|s| format!("{s} does not learn; training frames are ignored"))
            .collect()
    }
}

/// Optional side outputs of a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory for inference frame logs, one file per (scheme, replication).
    pub frame_log_dir: Option<PathBuf>,
}

/// One finished replication: metrics plus the frozen agents.
#[derive(Debug, Clone)]
pub struct ReplicationOutput {
    pub artifacts: RunArtifacts,
    pub agents: Vec<Agent>,
}

fn point_key(scenario: &Scenario, scheme: Scheme) -> PointKey {
    let p = scenario.params();
    let b2_fraction = match scenario.mode() {
        SharingMode::Slicing => Some((scenario.plan().b2 / p.bandwidth_total * 1e9).round() / 1e9),
        SharingMode::Sharing => None,
    };
    PointKey {
        scheme: scheme.as_str().to_string(),
        mode: scenario.mode().as_str().to_string(),
        num_iot: scenario.num_iot(),
        b2_fraction,
        deadline: p.latency_deadline,
    }
}

pub fn frame_log_name(key: &PointKey, replication: u32) -> String {
    let b2 = key
        .b2_fraction
        .map(|f| format!("_b{f}"))
        .unwrap_or_default();
    format!(
        "{}_{}_j{}{}_d{}_r{}.log",
        key.scheme, key.mode, key.num_iot, b2, key.deadline, replication
    )
}

fn transitions(result: &FrameResult) -> impl Iterator<Item = (usize, Transition)> + '_ {
    result
        .users
        .iter()
        .enumerate()
        .filter(|(_, u)| u.had_packet)
        .map(|(j, u)| {
            (
                j,
                Transition {
                    state: u.start,
                    action: u.degree,
                    next_state: u.observed,
                    reward: reward_of(u.observed),
                },
            )
        })
}

/// Trains (if the scheme learns) and evaluates one scheme on one
/// replication.
pub fn simulate_replication(
    scenario: &Scenario,
    scheme: Scheme,
    replication: u32,
    plan: &PhasePlan,
    config: &AgentConfig,
    options: &RunOptions,
) -> Result<ReplicationOutput, RunError> {
    let params = scenario.params();
    let deployment_seed = seed::deployment_seed(plan.base_seed, replication);
    let deployment = sample_deployment(scenario, deployment_seed);
    let sim_seed = seed::simulation_seed(plan.base_seed, replication, scheme.tag());
    let space = StateSpace::new(params);
    let j = scenario.num_iot();

    let mut agents = Vec::with_capacity(j);
    for u in 0..j {
        let model = if scheme.needs_model() {
            Some(build_single_user_model(scenario, &deployment, u)?)
        } else {
            None
        };
        agents.push(Agent::new(scheme, space, model.as_ref(), config)?);
    }
    let mut agent_rng = ChaCha8Rng::seed_from_u64(seed::mix(&[sim_seed, 2]));
    let mut masks = vec![SlotMask::default(); j];

    let mut training = PhaseMetrics::new(params.latency_deadline, plan.reward_window);
    if scheme.is_learning() {
        let mut env = Environment::reset(scenario, &deployment, seed::mix(&[sim_seed, 1]))?;
        for frame in 0..plan.training_frames {
            let tau = config.temperature.at(frame);
            for (u, m) in masks.iter_mut().enumerate() {
                *m = agents[u].act(env.decision_state(u), Some(tau), config.irsa_placement, &mut agent_rng);
            }
            let result = env.step_frame_placed(&masks)?;
            for (u, t) in transitions(&result) {
                agents[u].learn(&t, config, &mut agent_rng);
            }
            training.observe_result(frame, &result);
        }
    }

    let frozen: Vec<u64> = agents.iter().map(Agent::fingerprint).collect();
    let mut env = Environment::reset(scenario, &deployment, seed::mix(&[sim_seed, 3]))?;
    let key = point_key(scenario, scheme);
    let mut log = match &options.frame_log_dir {
        Some(dir) => {
            let path = dir.join(frame_log_name(&key, replication));
            let f = File::create(&path).map_err(|source| RunError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let w = FrameLogWriter::new(BufWriter::new(f)).map_err(|source| RunError::Io {
                path: path.display().to_string(),
                source,
            })?;
            Some((path, w))
        }
        None => None,
    };
    let mut inference = PhaseMetrics::new(params.latency_deadline, plan.reward_window);
    for frame in 0..plan.inference_frames {
        for (u, m) in masks.iter_mut().enumerate() {
            *m = agents[u].act(env.decision_state(u), None, config.irsa_placement, &mut agent_rng);
        }
        let result = env.step_frame_placed(&masks)?;
        inference.observe_result(frame, &result);
        if let Some((path, w)) = &mut log {
            w.append(&result.record()).map_err(|source| RunError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
    }
    if let Some((path, w)) = log {
        use std::io::Write;
        w.into_inner().flush().map_err(|source| RunError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    for (u, a) in agents.iter().enumerate() {
        if a.fingerprint() != frozen[u] {
            return Err(RunError::PolicyChanged { scheme, user: u });
        }
    }

    let bb = env.broadband().budget;
    let mut artifacts = RunArtifacts {
        scheme: scheme.as_str().to_string(),
        replication,
        seed: sim_seed,
        deployment_seed,
        training,
        inference,
        broadband_rate: bb.rate,
        broadband_power: bb.tx_power,
        block_len: params.broadband_block_len,
        frame_length: params.frame_length,
        slot_duration: params.slot_duration,
        throughput: 0.0,
        energy_efficiency: 0.0,
    };
    artifacts.finish_broadband();
    Ok(ReplicationOutput { artifacts, agents })
}

/// Runs every (point, scheme, replication) job in parallel and groups the
/// results by point and scheme, in input order.
pub fn run_points(
    scenarios: &[Scenario],
    spec: &ExperimentSpec,
    options: &RunOptions,
) -> Result<Vec<(PointRuns, Vec<ReplicationOutput>)>, RunError> {
    spec.validate()?;
    let reps = spec.plan.replications;
    let jobs: Vec<(usize, Scheme, u32)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, _)| {
            spec.schemes
                .iter()
                .flat_map(move |&s| (0..reps).map(move |r| (i, s, r)))
        })
        .collect();
    let outputs: Vec<ReplicationOutput> = jobs
        .par_iter()
        .map(|&(i, s, r)| {
            simulate_replication(&scenarios[i], s, r, &spec.plan, &spec.agent, options)
        })
        .collect::<Result<_, _>>()?;
    let mut grouped = Vec::new();
    let mut it = outputs.into_iter();
    for sc in scenarios {
        for &s in &spec.schemes {
            let outs: Vec<ReplicationOutput> = it.by_ref().take(reps as usize).collect();
            let runs = outs.iter().map(|o| o.artifacts.clone()).collect();
            grouped.push((
                PointRuns {
                    key: point_key(sc, s),
                    runs,
                },
                outs,
            ));
        }
    }
    Ok(grouped)
}

/// All replications of every scheme at the spec's scenario.
pub fn run(spec: &ExperimentSpec, options: &RunOptions) -> Result<Vec<PointRuns>, RunError> {
    Ok(run_points(std::slice::from_ref(&spec.scenario), spec, options)?
        .into_iter()
        .map(|(p, _)| p)
        .collect())
}

/// One full run per point of the spec's sweep axis.
pub fn sweep(spec: &ExperimentSpec, options: &RunOptions) -> Result<Vec<PointRuns>, RunError> {
    let axis = spec
        .sweep
        .as_ref()
        .ok_or_else(|| RunError::Spec("sweep requires an axis".into()))?;
    let scenarios = axis.scenarios(&spec.scenario)?;
    Ok(run_points(&scenarios, spec, options)?
        .into_iter()
        .map(|(p, _)| p)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::reference_scenario;

    fn small(scheme: Scheme, j: usize) -> ExperimentSpec {
        let mut s = ExperimentSpec::new(reference_scenario(SharingMode::Slicing, j), vec![scheme]);
        s.plan.training_frames = 200;
        s.plan.inference_frames = 300;
        s.plan.replications = 2;
        s
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = small(Scheme::DoQl, 2);
        s.plan.replications = 0;
        assert!(matches!(run(&s, &RunOptions::default()), Err(RunError::Spec(_))));
        let mut s = small(Scheme::DoQl, 2);
        s.sweep = Some(SweepAxis::B2Fraction(vec![0.5, 1.0]));
        assert!(matches!(sweep(&s, &RunOptions::default()), Err(RunError::Spec(_))));
        s.sweep = Some(SweepAxis::B2Fraction(vec![]));
        assert!(sweep(&s, &RunOptions::default()).is_err());
        s.sweep = None;
        assert!(sweep(&s, &RunOptions::default()).is_err());
    }

    #[test]
    fn sharing_split_axis_collapses() {
        let base = reference_scenario(SharingMode::Sharing, 3);
        assert_eq!(SweepAxis::b2_default().scenarios(&base).unwrap().len(), 1);
        let base = reference_scenario(SharingMode::Slicing, 3);
        assert_eq!(SweepAxis::b2_default().scenarios(&base).unwrap().len(), 9);
    }

    #[test]
    fn irsa_ignores_training() {
        let mut a = small(Scheme::Irsa, 3);
        let mut b = a.clone();
        a.plan.training_frames = 0;
        b.plan.training_frames = 500;
        assert_eq!(run(&a, &RunOptions::default()).unwrap(), run(&b, &RunOptions::default()).unwrap());
        assert!(!b.warnings().is_empty());
    }

    #[test]
    fn replications_differ() {
        let s = small(Scheme::DoQl, 3);
        let out = run(&s, &RunOptions::default()).unwrap();
        let runs = &out[0].runs;
        assert_ne!(runs[0].deployment_seed, runs[1].deployment_seed);
        assert_ne!(runs[0].seed, runs[1].seed);
        assert_ne!(runs[0].inference, runs[1].inference);
        assert!(runs.iter().all(|r| r.training.frames == 200 && r.inference.frames == 300));
    }

    #[test]
    fn schemes_share_deployments() {
        let mut s = small(Scheme::Vi, 2);
        s.schemes = vec![Scheme::Vi, Scheme::DoQl];
        let out = run(&s, &RunOptions::default()).unwrap();
        assert_eq!(out[0].runs[1].deployment_seed, out[1].runs[1].deployment_seed);
        assert_ne!(out[0].runs[1].seed, out[1].runs[1].seed);
    }
}
