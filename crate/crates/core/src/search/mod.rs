//! Prior-guided tree search over macro-actions at a single decision point, and
//! the receding-horizon loop that drives it through an episode.
//!
//! Each iteration selects a leaf by the count-only score, expands it with `k`
//! library candidates drawn around the prior's proposal, rolls the prior out
//! from every newly created node, and adds one visit along the traversed path.
//! The first simulated goal ends the search with the plan that reached it.

mod config;
pub mod tree;

pub use config::SearchConfig;
pub use tree::{score_of, NodeId, ScoreRule, Tree, TreeNode, ROOT};

use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::macrolib::{MacroAction, MacroLibrary};
use crate::prior::{beta_distribution_with, psi_prior_with, sample_candidates, PriorPolicy};
use crate::scalar::Scalar;
use crate::world::{replay_plan, step_macro, step_macro_limited, StateVec, TaskSpec, WorldModel};

const STREAM_EXPAND: u64 = 0;
const STREAM_ROLLOUT: u64 = 1;

/// Independent, reproducible random stream for one purpose at one node.
pub fn node_rng(seed: u64, node: NodeId, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((node as u64) << 1) | purpose);
    rng
}

/// Rollout stream for `node`; shared with the prior-only baseline at the root.
pub fn rollout_rng(seed: u64, node: NodeId) -> ChaCha8Rng {
    node_rng(seed, node, STREAM_ROLLOUT)
}

/// Seed of decision point `t` within an episode seeded with `seed`.
pub fn decision_seed(seed: u64, t: usize) -> u64 {
    let mut z = seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Outcome of one simulated prior rollout.
#[derive(Debug, Clone)]
pub struct Rollout<T> {
    pub success: bool,
    pub steps: usize,
    pub macros: Vec<MacroAction<T>>,
    pub prior_queries: u64,
}

/// Runs the prior from `start` until a goal or `cfg.d_sim_max` primitive steps.
/// Stops early in states the model reports as dead ends.
pub fn rollout<T, M, P>(
    model: &M,
    prior: &P,
    start: &StateVec<T>,
    task: &TaskSpec,
    cfg: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Rollout<T>>
where
    T: Scalar,
    M: WorldModel<T> + ?Sized,
    P: PriorPolicy<T> + ?Sized,
{
    let mut out = Rollout {
        success: model.is_goal(start, task),
        steps: 0,
        macros: Vec::new(),
        prior_queries: 0,
    };
    let mut state = model.clone_state(start);
    while !out.success && out.steps < cfg.d_sim_max && !model.is_dead_end(&state, task) {
        let u = query_prior(model, prior, &state, task, cfg, rng)?;
        out.prior_queries += 1;
        let r = step_macro_limited(model, &state, &u, task, cfg.d_sim_max - out.steps)?;
        out.steps += r.steps_used;
        out.success = r.success;
        state = r.state;
        out.macros.push(u);
    }
    Ok(out)
}

fn query_prior<T, M, P>(
    model: &M,
    prior: &P,
    state: &StateVec<T>,
    task: &TaskSpec,
    cfg: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<MacroAction<T>>
where
    T: Scalar,
    M: WorldModel<T> + ?Sized,
    P: PriorPolicy<T> + ?Sized,
{
    let u = prior.sample_macro(&model.observe(state), task, rng)?;
    if u.horizon() != cfg.horizon || u.dim() != model.action_dim() {
        return Err(Error::Prior(format!(
            "prior proposed a {}x{} macro, search expects {}x{}",
            u.horizon(),
            u.dim(),
            cfg.horizon,
            model.action_dim()
        )));
    }
    Ok(u)
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutcomeKind<T> {
    /// Macros from the root state to a simulated goal (empty if the root is a goal).
    GoalPlan(Vec<MacroAction<T>>),
    /// Most-visited root candidate.
    BestRootMacro {
        macro_action: MacroAction<T>,
        library_index: usize,
        visits: u64,
        /// Another root candidate had the same visit count.
        tie: bool,
    },
}

#[derive(Debug, Clone)]
pub struct SearchOutcome<T> {
    pub kind: OutcomeKind<T>,
    pub iterations_used: usize,
    pub wall_time: Duration,
    pub nodes_created: usize,
    pub prior_queries: u64,
    pub rollouts: u64,
    /// Probability vectors that failed their normalization or floor check.
    pub prob_violations: u64,
    pub timed_out: bool,
    /// Visit counts of the root candidates at termination.
    pub root_visits: Vec<u64>,
}

impl<T> SearchOutcome<T> {
    pub fn is_goal_plan(&self) -> bool {
        matches!(self.kind, OutcomeKind::GoalPlan(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RolloutSummary {
    pub rollouts: usize,
    pub success: bool,
}

/// One line of the optional per-iteration search trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Node ids from the root to the selected leaf.
    pub path: Vec<NodeId>,
    pub expanded_node_id: Option<NodeId>,
    pub rollout_result: RolloutSummary,
    /// Seconds since the search started.
    pub elapsed: f64,
}

pub fn write_trace(path: impl AsRef<Path>, trace: &[IterationTrace]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for rec in trace {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Everything one search needs besides the tree.
struct Search<'a, T: Scalar, M: ?Sized, P: ?Sized> {
    model: &'a M,
    prior: &'a P,
    lib: &'a MacroLibrary<T>,
    task: &'a TaskSpec,
    cfg: &'a SearchConfig,
    tree: Tree<T>,
    prior_queries: u64,
    rollouts: u64,
    prob_violations: u64,
}

enum Found<T> {
    Goal(Vec<MacroAction<T>>),
    Nothing,
}

impl<'a, T, M, P> Search<'a, T, M, P>
where
    T: Scalar,
    M: WorldModel<T> + ?Sized,
    P: PriorPolicy<T> + ?Sized,
{
    fn rule(&self) -> ScoreRule {
        ScoreRule {
            c_exp: self.cfg.c_exp,
            literal: self.cfg.literal_eq2,
        }
    }

    fn audit(&mut self, p: &crate::prior::ProbabilityVector<T>, eps: f64) {
        if let Err(msg) = p.validate(Some(T::lit(eps))) {
            self.prob_violations += 1;
            debug_assert!(false, "probability invariant violated: {msg}");
        }
    }

    /// Creates the children of `leaf`. Returns their ids in slot order.
    fn expand(&mut self, leaf: NodeId) -> Result<Vec<NodeId>> {
        let node = self.tree.node(leaf);
        if node.is_expanded() {
            return Err(Error::Contract(format!("node {leaf} is already expanded")));
        }
        if node.is_goal || node.depth >= self.cfg.d_max {
            return Err(Error::Contract(format!("node {leaf} cannot be expanded")));
        }
        let state = node.state.clone();
        let mut rng = node_rng(self.cfg.seed, leaf, STREAM_EXPAND);
        let anchor = query_prior(self.model, self.prior, &state, self.task, self.cfg, &mut rng)?;
        self.prior_queries += 1;

        let beta = beta_distribution_with(
            self.lib,
            &anchor,
            T::lit(self.cfg.alpha_beta),
            T::lit(self.cfg.epsilon_beta),
            self.cfg.metric,
        )?;
        self.audit(&beta, self.cfg.epsilon_beta);
        let k = self.cfg.k.min(self.lib.len());
        let candidates = sample_candidates(&beta, k, anchor.clone(), &mut rng)?;
        let psi = psi_prior_with(
            &candidates,
            self.lib,
            &anchor,
            T::lit(self.cfg.alpha_psi),
            T::lit(self.cfg.psi_epsilon),
            self.cfg.metric,
        )?;
        self.audit(&psi, self.cfg.psi_epsilon);

        let children = candidates
            .indices()
            .iter()
            .map(|&i| {
                let r = step_macro(self.model, &state, self.lib.prototype(i), self.task)?;
                Ok((r.state, r.success))
            })
            .collect::<Result<Vec<_>>>()?;
        self.tree.attach_expansion(leaf, candidates, psi, children)
    }

    fn rollout_from(&mut self, id: NodeId) -> Result<Found<T>> {
        let mut rng = rollout_rng(self.cfg.seed, id);
        let state = self.tree.node(id).state.clone();
        let r = rollout(self.model, self.prior, &state, self.task, self.cfg, &mut rng)?;
        self.rollouts += 1;
        self.prior_queries += r.prior_queries;
        if r.success {
            let mut plan = self.tree.plan_to(id, self.lib);
            plan.extend(r.macros);
            Ok(Found::Goal(plan))
        } else {
            Ok(Found::Nothing)
        }
    }
}

/// Runs one decision-point search with a budget of `cfg.T_max` seconds.
pub fn search_once<T, M, P>(
    root_state: &StateVec<T>,
    task: &TaskSpec,
    prior: &P,
    lib: &MacroLibrary<T>,
    model: &M,
    cfg: &SearchConfig,
) -> Result<SearchOutcome<T>>
where
    T: Scalar,
    M: WorldModel<T> + ?Sized,
    P: PriorPolicy<T> + ?Sized,
{
    let deadline = Instant::now() + cfg.t_max_duration();
    search_until(root_state, task, prior, lib, model, cfg, deadline, None)
}

/// [`search_once`] against an absolute deadline, optionally recording a trace.
///
/// The deadline is checked between iterations and never before the first one.
#[allow(clippy::too_many_arguments)]
pub fn search_until<T, M, P>(
    root_state: &StateVec<T>,
    task: &TaskSpec,
    prior: &P,
    lib: &MacroLibrary<T>,
    model: &M,
    cfg: &SearchConfig,
    deadline: Instant,
    mut trace: Option<&mut Vec<IterationTrace>>,
) -> Result<SearchOutcome<T>>
where
    T: Scalar,
    M: WorldModel<T> + ?Sized,
    P: PriorPolicy<T> + ?Sized,
{
    cfg.validate()?;
    if cfg.n_mc == 0 {
        return Err(Error::Config("search needs N_mc >= 1".into()));
    }
    if lib.horizon() != cfg.horizon {
        return Err(Error::Config(format!(
            "library horizon {} differs from configured H = {}",
            lib.horizon(),
            cfg.horizon
        )));
    }
    if lib.action_dim() != model.action_dim() {
        return Err(Error::Config(format!(
            "library action dimension {} differs from the environment's {}",
            lib.action_dim(),
            model.action_dim()
        )));
    }

    let start = Instant::now();
    let root_goal = model.is_goal(root_state, task);
    let mut s = Search {
        model,
        prior,
        lib,
        task,
        cfg,
        tree: Tree::new(model.clone_state(root_state), root_goal),
        prior_queries: 0,
        rollouts: 0,
        prob_violations: 0,
    };
    let finish = |s: Search<'_, T, M, P>, kind, iterations_used, timed_out| {
        let root_visits = s
            .tree
            .root()
            .expansion()
            .map(|e| e.visits().to_vec())
            .unwrap_or_default();
        SearchOutcome {
            kind,
            iterations_used,
            wall_time: start.elapsed(),
            nodes_created: s.tree.len(),
            prior_queries: s.prior_queries,
            rollouts: s.rollouts,
            prob_violations: s.prob_violations,
            timed_out,
            root_visits,
        }
    };
    if root_goal {
        return Ok(finish(s, OutcomeKind::GoalPlan(Vec::new()), 0, false));
    }

    let rule = s.rule();
    let mut completed = 0;
    let mut timed_out = false;
    for iteration in 1..=cfg.n_mc {
        if iteration > 1 && Instant::now() >= deadline {
            timed_out = true;
            break;
        }
        let (leaf, mut path) = s.tree.select_path(cfg.d_max, rule);
        let mut new_nodes = Vec::new();
        if iteration == 1 {
            new_nodes.push(ROOT);
        }
        let leaf_node = s.tree.node(leaf);
        let expandable = !leaf_node.is_expanded() && !leaf_node.is_goal && leaf_node.depth < cfg.d_max;
        let mut expanded = None;
        let mut rollout_result = RolloutSummary {
            rollouts: 0,
            success: false,
        };
        let mut goal_plan = None;
        if expandable {
            let children = s.expand(leaf)?;
            expanded = Some(leaf);
            if let Some(&goal) = children.iter().find(|&&c| s.tree.node(c).is_goal) {
                goal_plan = Some(s.tree.plan_to(goal, lib));
            }
            new_nodes.extend(children);
        }
        if goal_plan.is_none() {
            for id in new_nodes {
                rollout_result.rollouts += 1;
                if let Found::Goal(plan) = s.rollout_from(id)? {
                    rollout_result.success = true;
                    goal_plan = Some(plan);
                    break;
                }
            }
        }
        if let Some(plan) = goal_plan {
            if let Some(t) = trace.as_deref_mut() {
                t.push(IterationTrace {
                    iteration,
                    path: s.tree.lineage(leaf),
                    expanded_node_id: expanded,
                    rollout_result,
                    elapsed: start.elapsed().as_secs_f64(),
                });
            }
            return Ok(finish(s, OutcomeKind::GoalPlan(plan), iteration, false));
        }

        if expanded.is_some() {
            // Count the visit into the new frontier so every iteration reaches the root.
            let slot = s.tree.select_slot(leaf, rule);
            path.push((leaf, slot));
        }
        s.tree.backpropagate(&path);
        completed = iteration;

        if let Some(t) = trace.as_deref_mut() {
            t.push(IterationTrace {
                iteration,
                path: s.tree.lineage(leaf),
                expanded_node_id: expanded,
                rollout_result,
                elapsed: start.elapsed().as_secs_f64(),
            });
        }
    }

    let root_total: u64 = s.tree.root().expansion().map_or(0, |e| e.total_visits());
    assert_eq!(root_total, completed as u64, "root visits must equal completed iterations");
    assert!(
        s.tree.len() <= 1 + completed * cfg.k,
        "tree exceeded its branching bound"
    );
    let (slot, tie) = s
        .tree
        .best_root_slot()
        .ok_or_else(|| Error::Contract("search ended without expanding the root".into()))?;
    let e = s.tree.root().expansion().unwrap();
    let library_index = e.candidates().indices()[slot];
    let kind = OutcomeKind::BestRootMacro {
        macro_action: lib.prototype(library_index).clone(),
        library_index,
        visits: e.visits()[slot],
        tie,
    };
    Ok(finish(s, kind, completed, timed_out))
}

/// Per-episode totals of the receding-horizon runner.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeResult {
    pub success: bool,
    /// Primitive steps executed in the true environment.
    pub primitive_steps: usize,
    pub decision_points: usize,
    pub total_wall_time: Duration,
    pub total_prior_queries: u64,
    pub iterations: usize,
    pub goal_plans: usize,
    /// Goal plans that failed to reach the goal when replayed in a fresh model clone.
    pub goal_plan_violations: usize,
    pub prob_violations: u64,
    pub timed_out: bool,
    /// Decision points whose best root macro shared its visit count.
    pub root_ties: usize,
}

/// Receding-horizon control: search from the current true state, execute the
/// returned plan or root macro in `env`, and repeat.
///
/// With `cfg.n_mc == 0` search is disabled and the prior is rolled out directly
/// in `env` with the same random stream the first search would give its root.
pub fn run_episode<T, E, M, P>(
    env: &E,
    model: &M,
    task: &TaskSpec,
    prior: &P,
    lib: &MacroLibrary<T>,
    cfg: &SearchConfig,
) -> Result<EpisodeResult>
where
    T: Scalar,
    E: WorldModel<T> + ?Sized,
    M: WorldModel<T> + ?Sized,
    P: PriorPolicy<T> + ?Sized,
{
    cfg.validate()?;
    let start = Instant::now();
    let deadline = start + cfg.t_max_duration();
    let mut state = env.reset(cfg.seed, &task.task_id)?;
    let mut res = EpisodeResult::default();

    if cfg.n_mc == 0 {
        let mut rng = rollout_rng(decision_seed(cfg.seed, 0), ROOT);
        let r = rollout(env, prior, &state, task, cfg, &mut rng)?;
        res.success = r.success;
        res.primitive_steps = r.steps;
        res.total_prior_queries = r.prior_queries;
        res.total_wall_time = start.elapsed();
        return Ok(res);
    }

    for t in 0..cfg.d_max {
        if env.is_goal(&state, task) || env.is_dead_end(&state, task) {
            break;
        }
        if t > 0 && Instant::now() >= deadline {
            res.timed_out = true;
            break;
        }
        let dcfg = SearchConfig {
            seed: decision_seed(cfg.seed, t),
            ..cfg.clone()
        };
        let out = search_until(&state, task, prior, lib, model, &dcfg, deadline, None)?;
        res.decision_points += 1;
        res.iterations += out.iterations_used;
        res.total_prior_queries += out.prior_queries;
        res.prob_violations += out.prob_violations;
        res.timed_out |= out.timed_out;

        match out.kind {
            OutcomeKind::GoalPlan(plan) => {
                res.goal_plans += 1;
                let (_, sound) = replay_plan(model, &model.clone_state(&state), &plan, task)?;
                if !sound {
                    res.goal_plan_violations += 1;
                }
                for u in &plan {
                    let r = step_macro(env, &state, u, task)?;
                    res.primitive_steps += r.steps_used;
                    state = r.state;
                    if r.success {
                        break;
                    }
                }
                break;
            }
            OutcomeKind::BestRootMacro {
                macro_action, tie, ..
            } => {
                if tie {
                    res.root_ties += 1;
                }
                let r = step_macro(env, &state, &macro_action, task)?;
                res.primitive_steps += r.steps_used;
                state = r.state;
            }
        }
    }

    res.success = env.is_goal(&state, task);
    res.total_wall_time = start.elapsed();
    Ok(res)
}
