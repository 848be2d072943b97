use std::path::PathBuf;
use std::process::{Command, ExitCode};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use vlaps_core::harness::{self, SuiteConfig};
use vlaps_core::macrolib::{build_library, segment_trajectories, MacroLibrary};
use vlaps_core::prior::{PriorPolicy, ProcessPrior};
use vlaps_core::search::{run_episode, search_until, write_trace, OutcomeKind, SearchConfig};
use vlaps_core::world::log::read_trajectories;
use vlaps_core::world::{BlockNav, BlockNavConfig, ScriptedExpertPrior, WorldModel};
use vlaps_core::{Error, Result};

/// Prints a line to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "vlaps", version, about = "Prior-guided macro-action tree search")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Record scripted-expert trajectories as JSON lines.
    CollectDemos {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes_per_task: usize,
        #[arg(long, default_value_t = 0.2)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
        #[command(flatten)]
        env: EnvArgs,
    },
    /// Cluster successful trajectories into a macro-action library.
    BuildLibrary {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
    },
    /// Run the paired search vs prior-only sweep described by a suite file.
    RunSuite {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the suite's output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Aggregate a suite's records into summary.csv, summary.json and SVG charts.
    Report {
        #[arg(long)]
        records: PathBuf,
        /// Defaults to the records directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search once (or run a whole episode) on one task.
    Search {
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        task: String,
        /// Search configuration file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0.3)]
        noise: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Write one JSON line per search iteration.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Query an external prior process instead of the built-in expert.
        #[arg(long)]
        prior_command: Option<String>,
        /// Run a full receding-horizon episode instead of a single search.
        #[arg(long)]
        episode: bool,
        #[command(flatten)]
        env: EnvArgs,
    },
    /// Answer prior requests on stdin with the scripted expert.
    ServePrior {
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        horizon: usize,
        #[command(flatten)]
        env: EnvArgs,
    },
}

#[derive(Args)]
struct EnvArgs {
    #[arg(long, default_value_t = 10.0)]
    extent: f64,
    #[arg(long, default_value_t = 2)]
    objects: usize,
}

impl EnvArgs {
    fn build(&self) -> Result<BlockNav<f64>> {
        BlockNav::new(BlockNavConfig {
            extent: self.extent,
            object_count: self.objects,
            ..BlockNavConfig::default()
        })
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Cmd::CollectDemos { out, episodes_per_task, noise, seed, horizon, env } => {
            let env = env.build()?;
            let demos = harness::collect_demos(
                &env,
                WorldModel::<f64>::tasks(&env),
                horizon,
                noise,
                episodes_per_task,
                seed,
                300,
            )?;
            harness::write_demos(&env, &demos, &out)?;
            let ok = demos.iter().filter(|d| d.success).count();
            say!("wrote {} trajectories ({ok} successful) to {}", demos.len(), out.display());
        }
        Cmd::BuildLibrary { input, size, seed, out, horizon } => {
            let trajs = read_trajectories::<f64>(&input)?;
            let macros = segment_trajectories(&trajs, horizon)?;
            let lib = build_library(&macros, size, seed)?;
            lib.save(&out)?;
            say!(
                "built {} prototypes of shape {}x{} from {} macro-actions into {}",
                lib.len(),
                lib.horizon(),
                lib.action_dim(),
                macros.len(),
                out.display()
            );
        }
        Cmd::RunSuite { config, output_dir } => {
            let mut cfg = SuiteConfig::load(&config)?;
            if output_dir.is_some() {
                cfg.output_dir = output_dir;
            }
            let dir = harness::resolve_output_dir(
                cfg.output_dir.get_or_insert_with(|| PathBuf::from("vlaps-output")),
            );
            let run = harness::run_suite(&cfg)?;
            let summary = harness::aggregate(&run.records);
            harness::render_report(&summary, &dir)?;
            for r in &summary.rows {
                say!(
                    "noise {:<4} {:<10} success {:>6.1}%  runtime {}  n {}",
                    r.noise,
                    r.method.as_str(),
                    r.success_rate * 100.0,
                    r.mean_runtime_s.map_or("N/A".to_string(), |t| format!("{t:.4}s")),
                    r.n
                );
            }
            say!("{} records written to {}", run.records.len(), dir.display());
        }
        Cmd::Report { records, out } => {
            let recs = harness::read_run_records(&records)?;
            let summary = harness::aggregate(&recs);
            let dir = out.unwrap_or(records);
            for p in harness::render_report(&summary, &dir)? {
                say!("{}", p.display());
            }
        }
        Cmd::Search { library, task, config, noise, seed, trace, prior_command, episode, env } => {
            let env = env.build()?;
            let task = env.task(&task)?.clone();
            let lib = MacroLibrary::<f64>::load(&library)?;
            let mut cfg = match config {
                Some(p) => SearchConfig::load(p)?,
                None => SearchConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let prior: Box<dyn PriorPolicy<f64>> = match prior_command {
                Some(cmdline) => {
                    let mut parts = cmdline.split_whitespace();
                    let program = parts
                        .next()
                        .ok_or_else(|| Error::Config("empty --prior-command".into()))?;
                    let mut command = Command::new(program);
                    command.args(parts);
                    Box::new(ProcessPrior::spawn(command, cfg.horizon, env.action_dim())?)
                }
                None => Box::new(ScriptedExpertPrior::new(env.clone(), cfg.horizon, noise)?),
            };
            if episode {
                let r = run_episode(&env, &env, &task, prior.as_ref(), &lib, &cfg)?;
                say!(
                    "{}",
                    json!({
                        "success": r.success,
                        "primitive_steps": r.primitive_steps,
                        "decision_points": r.decision_points,
                        "iterations": r.iterations,
                        "prior_queries": r.total_prior_queries,
                        "goal_plan_violations": r.goal_plan_violations,
                        "wall_time_s": r.total_wall_time.as_secs_f64(),
                    })
                );
                return Ok(());
            }
            let root = env.reset(cfg.seed, &task.task_id)?;
            let deadline = std::time::Instant::now() + cfg.t_max_duration();
            let mut records = Vec::new();
            let out = search_until(
                &root,
                &task,
                prior.as_ref(),
                &lib,
                &env,
                &cfg,
                deadline,
                trace.as_ref().map(|_| &mut records),
            )?;
            if let Some(path) = &trace {
                write_trace(path, &records)?;
            }
            let kind = match &out.kind {
                OutcomeKind::GoalPlan(plan) => json!({
                    "kind": "goal_plan",
                    "plan": plan.iter().map(|u| u.to_nested()).collect::<Vec<_>>(),
                }),
                OutcomeKind::BestRootMacro { macro_action, library_index, visits, tie } => json!({
                    "kind": "best_root_macro",
                    "macro": macro_action.to_nested(),
                    "library_index": library_index,
                    "visits": visits,
                    "tie": tie,
                }),
            };
            let report = json!({
                "outcome": kind,
                "iterations_used": out.iterations_used,
                "nodes_created": out.nodes_created,
                "prior_queries": out.prior_queries,
                "timed_out": out.timed_out,
                "wall_time_s": out.wall_time.as_secs_f64(),
            });
            say!("{report}");
        }
        Cmd::ServePrior { noise, seed, horizon, env } => {
            let env = env.build()?;
            let stdin = std::io::stdin();
            harness::serve_expert_prior(stdin.lock(), std::io::stdout(), &env, horizon, noise, seed)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() {
                2
            } else if e.is_io() {
                3
            } else {
                1
            })
        }
    }
}
