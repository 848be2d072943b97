use rand::{Rng, RngCore};

use super::blocknav::{dist, BlockNav};
use super::{GoalSpec, Observation, StateVec, TaskSpec, WorldModel};
use crate::error::{Error, Result};
use crate::macrolib::{MacroAction, PrimitiveAction};
use crate::prior::PriorPolicy;
use crate::scalar::Scalar;

/// Greedy pick-and-place controller whose primitives are independently
/// replaced by uniformly random actions with probability `noise_level`.
///
/// Each macro is produced open-loop: the controller simulates its own
/// primitives forward from the observed state for `horizon` steps.
#[derive(Debug, Clone)]
pub struct ScriptedExpertPrior<T> {
    env: BlockNav<T>,
    horizon: usize,
    noise_level: f64,
}

impl<T: Scalar> ScriptedExpertPrior<T> {
    pub fn new(env: BlockNav<T>, horizon: usize, noise_level: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Config("expert horizon must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&noise_level) {
            return Err(Error::Config(format!(
                "noise level must lie in [0, 1], got {noise_level}"
            )));
        }
        Ok(Self {
            env,
            horizon,
            noise_level,
        })
    }

    pub fn noise_level(&self) -> f64 {
        self.noise_level
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// The noise-free action at `s`.
    pub fn greedy_action(&self, s: &StateVec<T>, task: &TaskSpec) -> PrimitiveAction<T> {
        let GoalSpec::ObjectInRegion { object, region } = task.goal else {
            return PrimitiveAction::zeros(3);
        };
        let env = &self.env;
        if object >= env.object_count() || region >= env.regions().len() {
            return PrimitiveAction::zeros(3);
        }
        let robot = env.robot_pos(s);
        let open = -T::one();
        let close = T::one();
        match env.held_object(s) {
            Some(o) if o == object => {
                let target = env.regions()[region];
                let mv = self.toward(robot, target);
                let arrived = [robot[0] + mv[0], robot[1] + mv[1]];
                let g = if dist(arrived, target) <= T::lit(0.5) * env.region_radius() {
                    open
                } else {
                    close
                };
                PrimitiveAction::new(vec![mv[0], mv[1], g])
            }
            Some(_) => PrimitiveAction::new(vec![T::zero(), T::zero(), open]),
            None => {
                if env.object_toppled(s, object) {
                    return PrimitiveAction::zeros(3);
                }
                let target = env.object_pos(s, object);
                let mv = self.toward(robot, target);
                let arrived = [robot[0] + mv[0], robot[1] + mv[1]];
                let g = if !env.gripper_closed(s)
                    && dist(arrived, target) <= T::lit(0.5) * env.grasp_radius()
                {
                    close
                } else {
                    open
                };
                PrimitiveAction::new(vec![mv[0], mv[1], g])
            }
        }
    }

    fn toward(&self, from: [T; 2], to: [T; 2]) -> [T; 2] {
        let step = self.env.max_step();
        let c = |d: T| d.max(-step).min(step);
        [c(to[0] - from[0]), c(to[1] - from[1])]
    }

    fn random_action(&self, rng: &mut dyn RngCore) -> PrimitiveAction<T> {
        let step = self.env.max_step().as_f64();
        let dx = rng.gen_range(-step..=step);
        let dy = rng.gen_range(-step..=step);
        let g = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        PrimitiveAction::new(vec![T::lit(dx), T::lit(dy), T::lit(g)])
    }
}

impl<T: Scalar> PriorPolicy<T> for ScriptedExpertPrior<T> {
    fn sample_macro(
        &self,
        obs: &Observation<T>,
        task: &TaskSpec,
        rng: &mut dyn RngCore,
    ) -> Result<MacroAction<T>> {
        if obs.features.len() != self.env.state_dim() {
            return Err(Error::Prior(format!(
                "observation has {} features, expected {}",
                obs.features.len(),
                self.env.state_dim()
            )));
        }
        let mut s = self.env.state_from_features(&obs.features);
        let mut rows = Vec::with_capacity(self.horizon);
        for _ in 0..self.horizon {
            let a = if self.noise_level > 0.0 && rng.gen_bool(self.noise_level) {
                self.random_action(rng)
            } else {
                self.greedy_action(&s, task)
            };
            s = self.env.step(&s, &a);
            rows.push(a);
        }
        MacroAction::from_rows(rows)
    }
}
