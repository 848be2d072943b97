#![allow(dead_code)]

use vlaps_core::macrolib::{MacroAction, MacroLibrary, Normalization, PrimitiveAction};
use vlaps_core::world::{GoalSpec, Observation, StateVec, TaskSpec, WorldModel};
use vlaps_core::Result;

/// Integer line: the state is a position, a primitive adds its value.
pub struct LineWorld {
    pub start: f64,
    pub tasks: Vec<TaskSpec>,
}

impl LineWorld {
    pub fn new(start: f64, target: f64) -> Self {
        Self {
            start,
            tasks: vec![TaskSpec {
                task_id: "reach".into(),
                instruction: format!("reach {target}"),
                goal: GoalSpec::StateNear {
                    index: 0,
                    target,
                    tolerance: 0.25,
                },
            }],
        }
    }

    pub fn task(&self) -> &TaskSpec {
        &self.tasks[0]
    }
}

impl WorldModel<f64> for LineWorld {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    fn reset(&self, _seed: u64, _task_id: &str) -> Result<StateVec<f64>> {
        Ok(StateVec::new(vec![self.start]))
    }

    fn step(&self, s: &StateVec<f64>, a: &PrimitiveAction<f64>) -> StateVec<f64> {
        StateVec {
            values: vec![s.values[0] + a.values[0]],
            step_count: s.step_count + 1,
        }
    }

    fn observe(&self, s: &StateVec<f64>) -> Observation<f64> {
        Observation {
            features: s.values.clone(),
        }
    }

    fn is_goal(&self, s: &StateVec<f64>, task: &TaskSpec) -> bool {
        task.goal.eval_generic(s).unwrap()
    }
}

pub fn line_library(steps: &[f64], horizon: usize) -> MacroLibrary<f64> {
    let protos = steps
        .iter()
        .map(|&v| MacroAction::from_flat(horizon, 1, vec![v; horizon]).unwrap())
        .collect();
    MacroLibrary::new(protos, Normalization::identity(1)).unwrap()
}
