mod common;

use common::{line_library, LineWorld};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vlaps_core::macrolib::MacroAction;
use vlaps_core::prior::UniformLibraryPrior;
use vlaps_core::search::{
    rollout, rollout_rng, run_episode, search_once, search_until, OutcomeKind, SearchConfig,
};
use vlaps_core::world::{
    make_blocknav_env, replay_plan, step_macro, ScriptedExpertPrior, WorldModel,
};

const STEPS: [f64; 4] = [1.0, 3.0, -2.0, 7.0];

fn tiny_cfg(n_mc: usize) -> SearchConfig {
    SearchConfig {
        n_mc,
        k: 4,
        d_max: 3,
        d_sim_max: 0,
        horizon: 1,
        epsilon_beta: 1.0,
        alpha_psi: 0.0,
        t_max: 60.0,
        ..SearchConfig::default()
    }
}

/// Every position reachable with at most `depth` library steps.
fn reachable(start: f64, depth: usize) -> Vec<f64> {
    let mut frontier = vec![start];
    let mut all = vec![start];
    for _ in 0..depth {
        frontier = frontier
            .iter()
            .flat_map(|p| STEPS.iter().map(move |s| p + s))
            .collect();
        all.extend(&frontier);
    }
    all
}

#[test]
fn saturated_search_agrees_with_exhaustive_enumeration() {
    let lib = line_library(&STEPS, 1);
    let prior = UniformLibraryPrior::new(lib.clone());
    let reach = reachable(0.0, 3);
    let mut found = 0;
    for target in -12..=24 {
        let target = target as f64;
        let world = LineWorld::new(0.0, target);
        let oracle = reach.iter().any(|&p| (p - target).abs() <= 0.25);
        let root = world.reset(0, "reach").unwrap();
        let out = search_once(&root, world.task(), &prior, &lib, &world, &tiny_cfg(2000)).unwrap();
        assert_eq!(out.is_goal_plan(), oracle, "target {target}");
        if let OutcomeKind::GoalPlan(plan) = &out.kind {
            assert!(plan.len() <= 3);
            assert!(replay_plan(&world, &root, plan, world.task()).unwrap().1);
            found += 1;
        } else {
            assert_eq!(out.iterations_used, 2000);
            assert_eq!(out.nodes_created, 1 + 4 + 16 + 64);
        }
    }
    assert!(found > 10 && found < 37);
}

#[test]
fn goal_at_root_gives_empty_plan() {
    let lib = line_library(&STEPS, 1);
    let world = LineWorld::new(5.0, 5.0);
    let root = world.reset(0, "reach").unwrap();
    let out = search_once(&root, world.task(), &UniformLibraryPrior::new(lib.clone()), &lib, &world, &tiny_cfg(10)).unwrap();
    assert_eq!(out.kind, OutcomeKind::GoalPlan(Vec::new()));
    assert_eq!(out.iterations_used, 0);
}

#[test]
fn unsolvable_task_exhausts_the_budget() {
    let lib = line_library(&STEPS, 1);
    let prior = UniformLibraryPrior::new(lib.clone());
    let world = LineWorld::new(0.0, 0.5);
    let root = world.reset(0, "reach").unwrap();
    let cfg = SearchConfig {
        d_max: 100,
        d_sim_max: 20,
        ..tiny_cfg(150)
    };
    let out = search_once(&root, world.task(), &prior, &lib, &world, &cfg).unwrap();
    assert_eq!(out.iterations_used, 150);
    assert!(!out.timed_out);
    assert_eq!(out.root_visits.iter().sum::<u64>(), 150);
    match out.kind {
        OutcomeKind::BestRootMacro { visits, library_index, macro_action, .. } => {
            assert_eq!(visits, *out.root_visits.iter().max().unwrap());
            assert_eq!(&macro_action, lib.prototype(library_index));
        }
        other => panic!("expected a root macro, got {other:?}"),
    }
}

#[test]
fn expansion_creates_k_children_and_depth_cap_stops_growth() {
    let lib = line_library(&STEPS, 1);
    let prior = UniformLibraryPrior::new(lib.clone());
    let world = LineWorld::new(0.0, 0.5);
    let root = world.reset(0, "reach").unwrap();
    let one = search_once(&root, world.task(), &prior, &lib, &world, &SearchConfig { k: 3, ..tiny_cfg(1) }).unwrap();
    assert_eq!(one.nodes_created, 1 + 3);
    let capped = search_once(&root, world.task(), &prior, &lib, &world, &SearchConfig { d_max: 1, ..tiny_cfg(40) }).unwrap();
    assert_eq!(capped.nodes_created, 1 + 4);
    assert_eq!(capped.root_visits.iter().sum::<u64>(), 40);
}

#[test]
fn trace_records_each_iteration() {
    let lib = line_library(&STEPS, 1);
    let prior = UniformLibraryPrior::new(lib.clone());
    let world = LineWorld::new(0.0, 0.5);
    let root = world.reset(0, "reach").unwrap();
    let cfg = tiny_cfg(12);
    let mut trace = Vec::new();
    let deadline = std::time::Instant::now() + cfg.t_max_duration();
    search_until(&root, world.task(), &prior, &lib, &world, &cfg, deadline, Some(&mut trace)).unwrap();
    assert_eq!(trace.len(), 12);
    assert_eq!(trace[0].expanded_node_id, Some(0));
    assert_eq!(trace[0].rollout_result.rollouts, 5);
    for (i, t) in trace.iter().enumerate() {
        assert_eq!(t.iteration, i + 1);
        assert_eq!(t.path.first(), Some(&0));
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.jsonl");
    vlaps_core::search::write_trace(&path, &trace).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 12);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["iteration", "path", "expanded_node_id", "rollout_result", "elapsed"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn timeout_is_checked_only_after_the_first_iteration() {
    let lib = line_library(&STEPS, 1);
    let prior = UniformLibraryPrior::new(lib.clone());
    let world = LineWorld::new(0.0, 0.5);
    let root = world.reset(0, "reach").unwrap();
    let cfg = tiny_cfg(100);
    let past = std::time::Instant::now();
    let out = search_until(&root, world.task(), &prior, &lib, &world, &cfg, past, None).unwrap();
    assert_eq!(out.iterations_used, 1);
    assert!(out.timed_out);
    assert!(matches!(out.kind, OutcomeKind::BestRootMacro { .. }));
}

#[test]
fn macro_stops_on_the_primitive_that_reaches_the_goal() {
    let world = LineWorld::new(0.0, 2.0);
    let u = MacroAction::from_flat(4, 1, vec![1.0; 4]).unwrap();
    let r = step_macro(&world, &world.reset(0, "reach").unwrap(), &u, world.task()).unwrap();
    assert!(r.success);
    assert_eq!(r.steps_used, 2);
    assert_eq!(r.state.values, vec![2.0]);
}

#[test]
fn rollout_from_goal_is_immediate_success() {
    let lib = line_library(&STEPS, 1);
    let world = LineWorld::new(3.0, 3.0);
    let r = rollout(
        &world,
        &UniformLibraryPrior::new(lib),
        &world.reset(0, "reach").unwrap(),
        world.task(),
        &tiny_cfg(1),
        &mut rollout_rng(0, 0),
    )
    .unwrap();
    assert!(r.success);
    assert_eq!(r.steps, 0);
}

fn blocknav_library() -> vlaps_core::MacroLibrary {
    let (env, _) = make_blocknav_env::<f64>(10.0, 2).unwrap();
    vlaps_core::harness::library_from_demos(&env, 4, &vlaps_core::harness::DemoLibrarySpec::default()).unwrap()
}

#[test]
fn zero_noise_expert_is_solved_on_the_first_iteration() {
    let (env, tasks) = make_blocknav_env::<f64>(10.0, 2).unwrap();
    let lib = blocknav_library();
    let prior = ScriptedExpertPrior::new(env.clone(), 4, 0.0).unwrap();
    for task in &tasks {
        for seed in 0..5 {
            let root = env.reset(seed, &task.task_id).unwrap();
            let cfg = SearchConfig { seed, ..SearchConfig::default() };
            let out = search_once(&root, task, &prior, &lib, &env, &cfg).unwrap();
            assert!(out.is_goal_plan());
            assert_eq!(out.iterations_used, 1);
        }
    }
}

#[test]
fn episodes_are_deterministic_sound_and_never_worse_than_the_prior() {
    let (env, tasks) = make_blocknav_env::<f64>(10.0, 2).unwrap();
    let lib = blocknav_library();
    for noise in [0.3, 0.5] {
        let prior = ScriptedExpertPrior::new(env.clone(), 4, noise).unwrap();
        for (i, task) in tasks.iter().enumerate() {
            for seed in 0..6u64 {
                let cfg = SearchConfig { seed: seed + 100 * i as u64, t_max: 30.0, ..SearchConfig::default() };
                let base = run_episode(&env, &env, task, &prior, &lib, &SearchConfig { n_mc: 0, ..cfg.clone() }).unwrap();
                let a = run_episode(&env, &env, task, &prior, &lib, &cfg).unwrap();
                let b = run_episode(&env, &env, task, &prior, &lib, &cfg).unwrap();
                assert_eq!(
                    (a.success, a.primitive_steps, a.decision_points, a.iterations, a.total_prior_queries),
                    (b.success, b.primitive_steps, b.decision_points, b.iterations, b.total_prior_queries)
                );
                assert_eq!(a.goal_plan_violations, 0);
                assert_eq!(a.prob_violations, 0);
                if base.success {
                    assert!(a.success, "baseline solved {} seed {seed} but search did not", task.task_id);
                }
            }
        }
    }
}

fn random_lib(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut v: Vec<f64> = Vec::new();
    while v.len() < m {
        let x = rng.gen_range(-5i32..=5) as f64;
        if x != 0.0 && !v.contains(&x) {
            v.push(x);
        }
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]
    #[test]
    fn tree_bounds_hold_for_random_searches(seed in 0u64..1000, n_mc in 1usize..120, k in 1usize..5, d_max in 1usize..6, target in -15i32..15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = random_lib(&mut rng, 5);
        let lib = line_library(&steps, 2);
        let world = LineWorld::new(0.0, target as f64 + 0.5);
        let root = world.reset(0, "reach").unwrap();
        let cfg = SearchConfig { n_mc, k, d_max, d_sim_max: 6, horizon: 2, seed, t_max: 60.0, ..SearchConfig::default() };
        let out = search_once(&root, world.task(), &UniformLibraryPrior::new(lib.clone()), &lib, &world, &cfg).unwrap();
        prop_assert_eq!(out.iterations_used, n_mc);
        prop_assert!(out.nodes_created <= 1 + n_mc * k);
        prop_assert_eq!(out.root_visits.iter().sum::<u64>(), n_mc as u64);
        prop_assert_eq!(out.root_visits.len(), k);
    }

    #[test]
    fn goal_plans_replay_to_the_goal(seed in 0u64..1000, target in -12i32..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = random_lib(&mut rng, 4);
        let lib = line_library(&steps, 2);
        let world = LineWorld::new(0.0, target as f64);
        let root = world.reset(0, "reach").unwrap();
        let cfg = SearchConfig { n_mc: 80, k: 4, d_max: 5, d_sim_max: 8, horizon: 2, seed, t_max: 60.0, ..SearchConfig::default() };
        let out = search_once(&root, world.task(), &UniformLibraryPrior::new(lib.clone()), &lib, &world, &cfg).unwrap();
        if let OutcomeKind::GoalPlan(plan) = out.kind {
            prop_assert!(replay_plan(&world, &root, &plan, world.task()).unwrap().1);
        }
    }
}
