//! Deterministic world models, sparse-reward tasks, and the desk-scale environments.

mod blocknav;
mod expert;
pub mod log;

pub use blocknav::{make_blocknav_env, BlockNav, BlockNavConfig};
pub use expert::ScriptedExpertPrior;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::macrolib::{MacroAction, PrimitiveAction};
use crate::scalar::Scalar;

/// Simulator state plus the number of primitive steps taken to reach it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVec<T> {
    pub values: Vec<T>,
    pub step_count: u64,
}

impl<T> StateVec<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self {
            values,
            step_count: 0,
        }
    }
}

/// What a prior policy gets to see of a state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation<T> {
    pub features: Vec<T>,
}

/// Decidable goal condition over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalSpec {
    /// Object resting upright, released, inside the named region.
    ObjectInRegion { object: usize, region: usize },
    /// `values[index]` within `tolerance` of `target`.
    StateNear {
        index: usize,
        target: f64,
        tolerance: f64,
    },
}

impl GoalSpec {
    /// Evaluates the goals that need no environment geometry.
    pub fn eval_generic<T: Scalar>(&self, s: &StateVec<T>) -> Option<bool> {
        match *self {
            GoalSpec::StateNear {
                index,
                target,
                tolerance,
            } => Some(
                s.values
                    .get(index)
                    .is_some_and(|v| (v.as_f64() - target).abs() <= tolerance),
            ),
            GoalSpec::ObjectInRegion { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub instruction: String,
    pub goal: GoalSpec,
}

/// Deterministic simulator used both as the true environment and as the
/// planning model.
///
/// States are plain values, so "cloning" a state is a copy and stepping never
/// mutates its input.
pub trait WorldModel<T: Scalar>: Send + Sync {
    fn state_dim(&self) -> usize;

    fn action_dim(&self) -> usize;

    fn tasks(&self) -> &[TaskSpec];

    fn task(&self, task_id: &str) -> Result<&TaskSpec> {
        self.tasks()
            .iter()
            .find(|t| t.task_id == task_id)
            .ok_or_else(|| Error::Config(format!("unknown task id `{task_id}`")))
    }

    fn reset(&self, seed: u64, task_id: &str) -> Result<StateVec<T>>;

    fn step(&self, s: &StateVec<T>, a: &PrimitiveAction<T>) -> StateVec<T>;

    fn observe(&self, s: &StateVec<T>) -> Observation<T>;

    fn clone_state(&self, s: &StateVec<T>) -> StateVec<T> {
        s.clone()
    }

    fn is_goal(&self, s: &StateVec<T>, task: &TaskSpec) -> bool;

    /// Sparse reward: one exactly on goal states.
    fn reward(&self, s: &StateVec<T>, task: &TaskSpec) -> T {
        if self.is_goal(s, task) {
            T::one()
        } else {
            T::zero()
        }
    }

    /// States from which the goal is provably unreachable. Only used to cut
    /// rollouts and episodes short; never changes which plans succeed.
    fn is_dead_end(&self, _s: &StateVec<T>, _task: &TaskSpec) -> bool {
        false
    }
}

/// Result of executing one macro-action.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroStep<T> {
    pub state: StateVec<T>,
    pub success: bool,
    pub steps_used: usize,
}

/// Applies the rows of `u` in order, stopping right after the first primitive
/// that reaches a goal state.
pub fn step_macro<T: Scalar, M: WorldModel<T> + ?Sized>(
    model: &M,
    s: &StateVec<T>,
    u: &MacroAction<T>,
    task: &TaskSpec,
) -> Result<MacroStep<T>> {
    step_macro_limited(model, s, u, task, usize::MAX)
}

/// Like [`step_macro`] but executes at most `max_steps` primitives.
pub fn step_macro_limited<T: Scalar, M: WorldModel<T> + ?Sized>(
    model: &M,
    s: &StateVec<T>,
    u: &MacroAction<T>,
    task: &TaskSpec,
    max_steps: usize,
) -> Result<MacroStep<T>> {
    if u.dim() != model.action_dim() {
        return Err(Error::Contract(format!(
            "macro-action dimension {} does not match environment action dimension {}",
            u.dim(),
            model.action_dim()
        )));
    }
    let mut state = model.clone_state(s);
    let mut steps_used = 0;
    for t in 0..u.horizon().min(max_steps) {
        state = model.step(&state, &u.primitive(t));
        steps_used += 1;
        if model.is_goal(&state, task) {
            return Ok(MacroStep {
                state,
                success: true,
                steps_used,
            });
        }
    }
    Ok(MacroStep {
        state,
        success: false,
        steps_used,
    })
}

/// Executes `plan` from `s` and reports whether a goal state was reached.
pub fn replay_plan<T: Scalar, M: WorldModel<T> + ?Sized>(
    model: &M,
    s: &StateVec<T>,
    plan: &[MacroAction<T>],
    task: &TaskSpec,
) -> Result<(StateVec<T>, bool)> {
    let mut state = model.clone_state(s);
    if model.is_goal(&state, task) {
        return Ok((state, true));
    }
    for u in plan {
        let r = step_macro(model, &state, u, task)?;
        state = r.state;
        if r.success {
            return Ok((state, true));
        }
    }
    Ok((state, false))
}
