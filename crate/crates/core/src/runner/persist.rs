//! Output directory layout:
//!
//! ```text
//! <out>/scenario.toml      scenario echo, loadable with --scenario
//! <out>/experiment.toml    schemes, phase plan, learning knobs, sweep axis
//! <out>/<table>.csv        metric tables
//! <out>/logs/*.log         inference frame logs (optional)
//! <out>/qtables/*.tsv      learned tables per scheme/replication/user (optional)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ExperimentSpec, PhasePlan, ReplicationOutput, RunError, SweepAxis};
use crate::agents::{AgentConfig, Scheme};
use crate::config::ScenarioFile;
use crate::metrics::tables::{render, PointRuns, TableKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentEcho {
    pub schemes: Vec<Scheme>,
    pub plan: PhasePlan,
    pub agent: AgentConfig,
    pub sweep: Option<SweepAxis>,
}

impl ExperimentEcho {
    pub fn of(spec: &ExperimentSpec) -> Self {
        Self {
            schemes: spec.schemes.clone(),
            plan: spec.plan.clone(),
            agent: spec.agent,
            sweep: spec.sweep.clone(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Spec(e.to_string()))
    }
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn create_dir(path: &Path) -> Result<(), RunError> {
    fs::create_dir_all(path).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the config echo and all metric tables. Returns the table paths.
pub fn write_outputs(
    dir: &Path,
    spec: &ExperimentSpec,
    points: &[PointRuns],
) -> Result<Vec<PathBuf>, RunError> {
    create_dir(dir)?;
    write(
        &dir.join("scenario.toml"),
        &ScenarioFile::from_scenario(&spec.scenario).to_toml(),
    )?;
    let echo = toml::to_string(&ExperimentEcho::of(spec))
        .map_err(|e| RunError::Spec(e.to_string()))?;
    write(&dir.join("experiment.toml"), &echo)?;
    let mut paths = Vec::new();
    for kind in TableKind::ALL {
        let p = dir.join(kind.file_name());
        write(&p, &render(kind, points))?;
        paths.push(p);
    }
    Ok(paths)
}

/// Writes one flat table file per learning agent.
pub fn write_checkpoints(
    dir: &Path,
    outputs: &[(PointRuns, Vec<ReplicationOutput>)],
) -> Result<usize, RunError> {
    let qdir = dir.join("qtables");
    let mut n = 0;
    for (point, reps) in outputs {
        for rep in reps {
            for (u, agent) in rep.agents.iter().enumerate() {
                let Some(text) = agent.checkpoint() else {
                    continue;
                };
                create_dir(&qdir)?;
                let stem = super::frame_log_name(&point.key, rep.artifacts.replication);
                let stem = stem.trim_end_matches(".log");
                write(&qdir.join(format!("{stem}_u{u}.tsv")), &text)?;
                n += 1;
            }
        }
    }
    Ok(n)
}
