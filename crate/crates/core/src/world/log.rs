//! JSON-lines trajectory logs: one record per primitive step.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{StateVec, TaskSpec, WorldModel};
use crate::error::{Error, Result};
use crate::macrolib::{PrimitiveAction, Trajectory};
use crate::scalar::Scalar;

/// `state` is the state the action was taken in; `reward` is earned by the successor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<T> {
    pub episode: u64,
    pub task_id: String,
    pub state: StateVec<T>,
    pub action: Vec<T>,
    pub reward: T,
}

/// Flattens a trajectory into step records, recomputing rewards with `model`.
pub fn trajectory_records<T: Scalar, M: WorldModel<T> + ?Sized>(
    model: &M,
    task: &TaskSpec,
    episode: u64,
    traj: &Trajectory<T>,
) -> Vec<StepRecord<T>> {
    traj.steps
        .iter()
        .map(|(s, a)| {
            let next = model.step(s, a);
            StepRecord {
                episode,
                task_id: traj.task_id.clone(),
                state: s.clone(),
                action: a.values.clone(),
                reward: model.reward(&next, task),
            }
        })
        .collect()
}

pub fn write_records<T: Scalar>(path: impl AsRef<Path>, records: &[StepRecord<T>]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<StepRecord<T>>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Regroups consecutive records sharing `(episode, task_id)` into trajectories.
/// A trajectory is successful when its final step earned reward one.
pub fn group_trajectories<T: Scalar>(records: Vec<StepRecord<T>>) -> Vec<Trajectory<T>> {
    let mut out: Vec<(u64, Trajectory<T>, T)> = Vec::new();
    for r in records {
        match out.last_mut() {
            Some((ep, traj, last)) if *ep == r.episode && traj.task_id == r.task_id => {
                traj.steps.push((r.state, PrimitiveAction::new(r.action)));
                *last = r.reward;
            }
            _ => out.push((
                r.episode,
                Trajectory {
                    task_id: r.task_id,
                    steps: vec![(r.state, PrimitiveAction::new(r.action))],
                    success: false,
                },
                r.reward,
            )),
        }
    }
    out.into_iter()
        .map(|(_, mut t, last)| {
            t.success = last == T::one();
            t
        })
        .collect()
}

pub fn read_trajectories<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<Trajectory<T>>> {
    Ok(group_trajectories(read_records(path)?))
}
