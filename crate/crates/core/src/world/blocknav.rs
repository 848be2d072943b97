//! Continuous 2D pick-and-place with a point robot and a binary gripper.
//!
//! State layout: `[x, y, gripper_closed, held_object, (obj_x, obj_y, toppled) * objects]`
//! where `held_object` is `-1` when empty. Actions are `[dx, dy, gripper]`; motion is
//! clamped per axis to `max_step`, a positive gripper command closes, a negative one
//! opens and zero leaves it unchanged. Releasing an object outside every region
//! topples it, and toppled objects can no longer be grasped.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GoalSpec, Observation, StateVec, TaskSpec, WorldModel};
use crate::error::{Error, Result};
use crate::macrolib::PrimitiveAction;
use crate::scalar::Scalar;

pub(super) const ROBOT_X: usize = 0;
pub(super) const ROBOT_Y: usize = 1;
pub(super) const GRIPPER: usize = 2;
pub(super) const HELD: usize = 3;
pub(super) const OBJECTS: usize = 4;
pub(super) const OBJECT_STRIDE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlockNavConfig {
    pub extent: f64,
    pub object_count: usize,
    pub region_count: usize,
    pub max_step: f64,
    pub grasp_radius: f64,
    pub region_radius: f64,
    /// Uniform per-coordinate perturbation of the start layout, drawn from the reset seed.
    pub start_jitter: f64,
}

impl Default for BlockNavConfig {
    fn default() -> Self {
        Self {
            extent: 10.0,
            object_count: 2,
            region_count: 3,
            max_step: 0.7,
            grasp_radius: 0.5,
            region_radius: 0.8,
            start_jitter: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockNav<T> {
    config: BlockNavConfig,
    objects: Vec<[T; 2]>,
    regions: Vec<[T; 2]>,
    robot_start: [T; 2],
    tasks: Vec<TaskSpec>,
}

/// Builds a BlockNav environment with default geometry and one task per
/// (object, region) pair.
pub fn make_blocknav_env<T: Scalar>(
    extent: f64,
    object_count: usize,
) -> Result<(BlockNav<T>, Vec<TaskSpec>)> {
    let env = BlockNav::new(BlockNavConfig {
        extent,
        object_count,
        ..BlockNavConfig::default()
    })?;
    let tasks = env.tasks.clone();
    Ok((env, tasks))
}

impl<T: Scalar> BlockNav<T> {
    pub fn new(config: BlockNavConfig) -> Result<Self> {
        let e = config.extent;
        if !(e.is_finite() && e > 0.0) {
            return Err(Error::Config(format!("grid extent must be positive, got {e}")));
        }
        if config.object_count == 0 {
            return Err(Error::Config("object count must be at least 1".into()));
        }
        if config.region_count == 0 {
            return Err(Error::Config("region count must be at least 1".into()));
        }
        for (name, v) in [
            ("max_step", config.max_step),
            ("grasp_radius", config.grasp_radius),
            ("region_radius", config.region_radius),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(config.start_jitter.is_finite() && config.start_jitter >= 0.0) {
            return Err(Error::Config("start_jitter must be non-negative".into()));
        }

        let obj_gap = 0.6 * e / config.object_count as f64;
        if obj_gap < 2.0 * config.grasp_radius + 2.0 * config.start_jitter + 1e-9 {
            return Err(Error::Config(format!(
                "{} objects do not fit in extent {e}: spacing {obj_gap:.3} too small for grasp radius",
                config.object_count
            )));
        }
        let region_gap = 0.7 * e / config.region_count as f64;
        if region_gap < 2.0 * config.region_radius {
            return Err(Error::Config(format!(
                "{} regions of radius {} overlap in extent {e}",
                config.region_count, config.region_radius
            )));
        }

        let objects = (0..config.object_count)
            .map(|i| {
                let y = 0.3 * e + obj_gap * (i as f64 + 0.5);
                [T::lit(0.15 * e), T::lit(y)]
            })
            .collect();
        let regions = (0..config.region_count)
            .map(|j| {
                let y = 0.2 * e + region_gap * (j as f64 + 0.5);
                [T::lit(0.85 * e), T::lit(y)]
            })
            .collect();
        let mut tasks = Vec::new();
        for object in 0..config.object_count {
            for region in 0..config.region_count {
                tasks.push(TaskSpec {
                    task_id: format!("obj{object}-reg{region}"),
                    instruction: format!("move object {object} to region {region}"),
                    goal: GoalSpec::ObjectInRegion { object, region },
                });
            }
        }
        Ok(Self {
            robot_start: [T::lit(0.5 * e), T::lit(0.1 * e)],
            config,
            objects,
            regions,
            tasks,
        })
    }

    pub fn config(&self) -> &BlockNavConfig {
        &self.config
    }

    pub fn regions(&self) -> &[[T; 2]] {
        &self.regions
    }

    pub fn max_step(&self) -> T {
        T::lit(self.config.max_step)
    }

    pub fn grasp_radius(&self) -> T {
        T::lit(self.config.grasp_radius)
    }

    pub fn region_radius(&self) -> T {
        T::lit(self.config.region_radius)
    }

    pub fn object_count(&self) -> usize {
        self.config.object_count
    }

    pub(super) fn state_from_features(&self, features: &[T]) -> StateVec<T> {
        StateVec::new(features.to_vec())
    }

    /// Position of object `i` in `s`.
    pub fn object_pos(&self, s: &StateVec<T>, i: usize) -> [T; 2] {
        let b = OBJECTS + OBJECT_STRIDE * i;
        [s.values[b], s.values[b + 1]]
    }

    pub fn object_toppled(&self, s: &StateVec<T>, i: usize) -> bool {
        s.values[OBJECTS + OBJECT_STRIDE * i + 2] > T::lit(0.5)
    }

    pub fn robot_pos(&self, s: &StateVec<T>) -> [T; 2] {
        [s.values[ROBOT_X], s.values[ROBOT_Y]]
    }

    pub fn gripper_closed(&self, s: &StateVec<T>) -> bool {
        s.values[GRIPPER] > T::lit(0.5)
    }

    pub fn held_object(&self, s: &StateVec<T>) -> Option<usize> {
        let h = s.values[HELD];
        if h < T::zero() {
            None
        } else {
            h.to_usize()
        }
    }

    pub fn in_region(&self, p: [T; 2], region: usize) -> bool {
        dist(p, self.regions[region]) <= self.region_radius()
    }

    fn in_any_region(&self, p: [T; 2]) -> bool {
        (0..self.regions.len()).any(|j| self.in_region(p, j))
    }

    fn parse_goal(task: &TaskSpec) -> Option<(usize, usize)> {
        match task.goal {
            GoalSpec::ObjectInRegion { object, region } => Some((object, region)),
            _ => None,
        }
    }
}

pub(super) fn dist<T: Scalar>(a: [T; 2], b: [T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

fn clamp<T: Scalar>(x: T, lo: T, hi: T) -> T {
    x.max(lo).min(hi)
}

impl<T: Scalar> WorldModel<T> for BlockNav<T> {
    fn state_dim(&self) -> usize {
        OBJECTS + OBJECT_STRIDE * self.config.object_count
    }

    fn action_dim(&self) -> usize {
        3
    }

    fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    fn reset(&self, seed: u64, task_id: &str) -> Result<StateVec<T>> {
        self.task(task_id)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = self.config.start_jitter;
        let mut jitter = |v: T| -> T {
            if j > 0.0 {
                v + T::lit(rng.gen_range(-j..=j))
            } else {
                v
            }
        };
        let mut values = vec![
            jitter(self.robot_start[0]),
            jitter(self.robot_start[1]),
            T::zero(),
            -T::one(),
        ];
        for o in &self.objects {
            values.push(jitter(o[0]));
            values.push(jitter(o[1]));
            values.push(T::zero());
        }
        Ok(StateVec::new(values))
    }

    fn step(&self, s: &StateVec<T>, a: &PrimitiveAction<T>) -> StateVec<T> {
        debug_assert_eq!(a.dim(), 3);
        let mut v = s.values.clone();
        let step = self.max_step();
        let hi = T::lit(self.config.extent);
        let dx = clamp(a.values[0], -step, step);
        let dy = clamp(a.values[1], -step, step);
        v[ROBOT_X] = clamp(v[ROBOT_X] + dx, T::zero(), hi);
        v[ROBOT_Y] = clamp(v[ROBOT_Y] + dy, T::zero(), hi);
        let robot = [v[ROBOT_X], v[ROBOT_Y]];

        let held = if v[HELD] < T::zero() {
            None
        } else {
            v[HELD].to_usize()
        };
        if let Some(i) = held {
            let b = OBJECTS + OBJECT_STRIDE * i;
            v[b] = robot[0];
            v[b + 1] = robot[1];
        }

        let g = a.values[2];
        let closed = v[GRIPPER] > T::lit(0.5);
        if g > T::zero() && !closed {
            v[GRIPPER] = T::one();
            let mut best: Option<(T, usize)> = None;
            for i in 0..self.config.object_count {
                let b = OBJECTS + OBJECT_STRIDE * i;
                if v[b + 2] > T::lit(0.5) {
                    continue;
                }
                let d = dist(robot, [v[b], v[b + 1]]);
                if d <= self.grasp_radius() && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, i));
                }
            }
            if let Some((_, i)) = best {
                v[HELD] = T::from_usize(i).unwrap();
                let b = OBJECTS + OBJECT_STRIDE * i;
                v[b] = robot[0];
                v[b + 1] = robot[1];
            }
        } else if g < T::zero() && closed {
            v[GRIPPER] = T::zero();
            if let Some(i) = held {
                v[HELD] = -T::one();
                if !self.in_any_region(robot) {
                    v[OBJECTS + OBJECT_STRIDE * i + 2] = T::one();
                }
            }
        }

        StateVec {
            values: v,
            step_count: s.step_count + 1,
        }
    }

    fn observe(&self, s: &StateVec<T>) -> Observation<T> {
        Observation {
            features: s.values.clone(),
        }
    }

    fn is_goal(&self, s: &StateVec<T>, task: &TaskSpec) -> bool {
        let Some((object, region)) = Self::parse_goal(task) else {
            return task.goal.eval_generic(s).unwrap_or(false);
        };
        if object >= self.config.object_count || region >= self.regions.len() {
            return false;
        }
        self.held_object(s) != Some(object)
            && !self.object_toppled(s, object)
            && self.in_region(self.object_pos(s, object), region)
    }

    fn is_dead_end(&self, s: &StateVec<T>, task: &TaskSpec) -> bool {
        match Self::parse_goal(task) {
            Some((object, _)) if object < self.config.object_count => {
                self.object_toppled(s, object)
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::step_macro;
    use crate::macrolib::MacroAction;

    fn env() -> (BlockNav<f64>, Vec<TaskSpec>) {
        make_blocknav_env(10.0, 2).unwrap()
    }

    fn act(dx: f64, dy: f64, g: f64) -> PrimitiveAction<f64> {
        PrimitiveAction::new(vec![dx, dy, g])
    }

    #[test]
    fn task_list_covers_object_region_pairs() {
        let (env, tasks) = env();
        assert_eq!(tasks.len(), 2 * env.regions().len());
        assert_eq!(tasks[4].task_id, "obj1-reg1");
        assert_eq!(tasks[4].instruction, "move object 1 to region 1");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(matches!(make_blocknav_env::<f64>(0.0, 2), Err(Error::Config(_))));
        assert!(matches!(make_blocknav_env::<f64>(f64::NAN, 2), Err(Error::Config(_))));
        assert!(matches!(make_blocknav_env::<f64>(10.0, 0), Err(Error::Config(_))));
        assert!(matches!(make_blocknav_env::<f64>(10.0, 40), Err(Error::Config(_))));
    }

    #[test]
    fn zero_action_only_advances_the_clock() {
        let (env, tasks) = env();
        let s = env.reset(3, &tasks[0].task_id).unwrap();
        let next = env.step(&s, &act(0.0, 0.0, 0.0));
        assert_eq!(next.values, s.values);
        assert_eq!(next.step_count, s.step_count + 1);
    }

    #[test]
    fn zero_macro_keeps_positions() {
        let (env, tasks) = env();
        let s = env.reset(3, &tasks[0].task_id).unwrap();
        let r = step_macro(&env, &s, &MacroAction::zeros(4, 3), &tasks[0]).unwrap();
        assert_eq!(r.state.values, s.values);
        assert!(!r.success);
        assert_eq!(r.steps_used, 4);
    }

    #[test]
    fn dimension_mismatch_is_a_contract_violation() {
        let (env, tasks) = env();
        let s = env.reset(0, &tasks[0].task_id).unwrap();
        let bad = MacroAction::zeros(4, 2);
        assert!(matches!(step_macro(&env, &s, &bad, &tasks[0]), Err(Error::Contract(_))));
    }

    #[test]
    fn motion_is_clamped() {
        let (env, tasks) = env();
        let s = env.reset(0, &tasks[0].task_id).unwrap();
        let next = env.step(&s, &act(100.0, -100.0, 0.0));
        assert!((next.values[ROBOT_X] - s.values[ROBOT_X] - 0.7).abs() < 1e-12);
        assert!(next.values[ROBOT_Y] >= 0.0);
    }

    #[test]
    fn dropping_outside_a_region_topples_the_object() {
        let (env, tasks) = env();
        let mut s = env.reset(0, &tasks[0].task_id).unwrap();
        let obj = env.object_pos(&s, 0);
        s.values[ROBOT_X] = obj[0];
        s.values[ROBOT_Y] = obj[1];
        let s = env.step(&s, &act(0.0, 0.0, 1.0));
        assert_eq!(env.held_object(&s), Some(0));
        let moved = env.step(&s, &act(0.5, 0.0, 0.0));
        assert_eq!(env.object_pos(&moved, 0), env.robot_pos(&moved));
        let dropped = env.step(&moved, &act(0.0, 0.0, -1.0));
        assert!(env.object_toppled(&dropped, 0));
        assert!(env.is_dead_end(&dropped, &tasks[0]));
        let regrab = env.step(&dropped, &act(0.0, 0.0, 1.0));
        assert_eq!(env.held_object(&regrab), None);
    }

    #[test]
    fn placing_inside_the_region_is_a_goal() {
        let (env, tasks) = env();
        let task = &tasks[0];
        let mut s = env.reset(0, &task.task_id).unwrap();
        let region = env.regions()[0];
        s.values[ROBOT_X] = region[0];
        s.values[ROBOT_Y] = region[1];
        s.values[GRIPPER] = 1.0;
        s.values[HELD] = 0.0;
        s.values[OBJECTS] = region[0];
        s.values[OBJECTS + 1] = region[1];
        assert!(!env.is_goal(&s, task));
        let placed = env.step(&s, &act(0.0, 0.0, -1.0));
        assert!(env.is_goal(&placed, task));
        assert_eq!(env.reward(&placed, task), 1.0);
        assert!(!env.is_goal(&placed, &tasks[1]));
    }

    #[test]
    fn reset_is_seeded() {
        let (env, tasks) = env();
        let a = env.reset(5, &tasks[0].task_id).unwrap();
        let b = env.reset(5, &tasks[0].task_id).unwrap();
        let c = env.reset(6, &tasks[0].task_id).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(env.reset(0, "nope").is_err());
    }

    #[test]
    fn definition_serializes() {
        let (env, _) = env();
        let json = serde_json::to_string(&env).unwrap();
        let back: BlockNav<f64> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, env);
        assert!(json.contains("\"task_id\":\"obj0-reg0\""));
    }
}
