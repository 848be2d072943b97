//! Experiment driver: builds a library from expert demonstrations, sweeps prior
//! quality, runs paired search-vs-prior-only episodes, and reports the results.

mod report;

pub use report::{aggregate, read_summary_csv, render_report, Summary, SummaryRow};

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::macrolib::{build_library, segment_trajectories, MacroLibrary, Trajectory};
use crate::prior::PriorPolicy;
use crate::search::{run_episode, EpisodeResult, SearchConfig};
use crate::world::log::{trajectory_records, write_records as write_step_records, StepRecord};
use crate::world::{step_macro, BlockNav, BlockNavConfig, ScriptedExpertPrior, TaskSpec, WorldModel};

/// Environment variable that relative output directories are resolved against.
pub const OUTPUT_ROOT_ENV: &str = "VLAPS_OUTPUT_ROOT";

pub fn resolve_output_dir(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(dir),
        None => dir.to_path_buf(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum EnvSpec {
    Blocknav(BlockNavConfig),
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::Blocknav(BlockNavConfig::default())
    }
}

impl EnvSpec {
    pub fn build(&self) -> Result<BlockNav<f64>> {
        match self {
            EnvSpec::Blocknav(cfg) => BlockNav::new(cfg.clone()),
        }
    }
}

/// How to produce the prototype library from scripted-expert demonstrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoLibrarySpec {
    pub episodes_per_task: usize,
    pub noise_level: f64,
    pub size: usize,
    pub seed: u64,
}

impl Default for DemoLibrarySpec {
    fn default() -> Self {
        Self {
            episodes_per_task: 20,
            noise_level: 0.2,
            size: 64,
            seed: 7,
        }
    }
}

/// Library source: a file, built from demonstrations when `build` is set and
/// the file is missing (or always when no path is given).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibrarySpec {
    pub path: Option<PathBuf>,
    pub build: Option<DemoLibrarySpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub environment: EnvSpec,
    /// Task ids to evaluate; empty selects every task of the environment.
    pub tasks: Vec<String>,
    /// Paired episodes per (task, noise level) cell.
    pub episodes: usize,
    pub noise_levels: Vec<f64>,
    pub search: SearchConfig,
    /// Episode seeds are `base_seed + e`.
    pub base_seed: u64,
    pub library: LibrarySpec,
    pub output_dir: Option<PathBuf>,
    pub parallel: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            environment: EnvSpec::default(),
            tasks: Vec::new(),
            episodes: 10,
            noise_levels: vec![0.0, 0.2, 0.4, 0.6],
            search: SearchConfig {
                t_max: 10.0,
                ..SearchConfig::default()
            },
            base_seed: 0,
            library: LibrarySpec {
                path: None,
                build: Some(DemoLibrarySpec::default()),
            },
            output_dir: None,
            parallel: true,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.noise_levels.is_empty() {
            return Err(Error::Config("at least one noise level is required".into()));
        }
        if let Some(v) = self.noise_levels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("noise level {v} outside [0, 1]")));
        }
        if self.search.n_mc == 0 {
            return Err(Error::Config("search N_mc must be positive for the search method".into()));
        }
        self.search.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PriorOnly,
    Vlaps,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::PriorOnly => "prior_only",
            Method::Vlaps => "vlaps",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "prior_only" => Ok(Method::PriorOnly),
            "vlaps" => Ok(Method::Vlaps),
            other => Err(Error::Format(format!("unknown method `{other}`"))),
        }
    }
}

/// One evaluated (task, seed, method, noise) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task_id: String,
    pub noise_level: f64,
    pub method: Method,
    pub seed: u64,
    pub success: bool,
    /// Seconds. Kept out of the deterministic records file.
    #[serde(skip)]
    pub wall_time: f64,
    pub iterations: usize,
    pub prior_queries: u64,
    pub primitive_steps: usize,
    pub decision_points: usize,
    pub goal_plans: usize,
    pub goal_plan_violations: usize,
    pub prob_violations: u64,
    pub timed_out: bool,
    pub root_ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TimingLine {
    task_id: String,
    noise_level: f64,
    method: Method,
    seed: u64,
    wall_time_s: f64,
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";

/// Writes `records.jsonl` (fully deterministic) and `timings.jsonl` (wall clock).
pub fn write_run_records(dir: &Path, records: &[RunRecord]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, lines: Vec<String>| -> Result<()> {
        let path = dir.join(name);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for l in lines {
            writeln!(w, "{l}").map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    };
    write(
        RECORDS_FILE,
        records
            .iter()
            .map(serde_json::to_string)
            .collect::<std::result::Result<_, _>>()?,
    )?;
    write(
        TIMINGS_FILE,
        records
            .iter()
            .map(|r| {
                serde_json::to_string(&TimingLine {
                    task_id: r.task_id.clone(),
                    noise_level: r.noise_level,
                    method: r.method,
                    seed: r.seed,
                    wall_time_s: r.wall_time,
                })
            })
            .collect::<std::result::Result<_, _>>()?,
    )
}

fn read_lines<V: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<V>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Reads records back from a suite output directory, joining wall times when
/// `timings.jsonl` is present.
pub fn read_run_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut records: Vec<RunRecord> = read_lines(&dir.join(RECORDS_FILE))?;
    let timings_path = dir.join(TIMINGS_FILE);
    if timings_path.exists() {
        let timings: Vec<TimingLine> = read_lines(&timings_path)?;
        if timings.len() != records.len() {
            return Err(Error::Format("records and timings have different lengths".into()));
        }
        for (r, t) in records.iter_mut().zip(timings) {
            if r.task_id != t.task_id || r.seed != t.seed || r.method != t.method || r.noise_level != t.noise_level {
                return Err(Error::Format("records and timings are out of step".into()));
            }
            r.wall_time = t.wall_time_s;
        }
    }
    Ok(records)
}

/// Every search record has exactly one prior-only partner with the same
/// (task, seed, noise), and vice versa.
pub fn check_pairing(records: &[RunRecord]) -> std::result::Result<(), String> {
    use std::collections::BTreeMap;
    let mut cells: BTreeMap<(String, u64, u64), (usize, usize)> = BTreeMap::new();
    for r in records {
        let e = cells
            .entry((r.task_id.clone(), r.seed, r.noise_level.to_bits()))
            .or_default();
        match r.method {
            Method::PriorOnly => e.0 += 1,
            Method::Vlaps => e.1 += 1,
        }
    }
    match cells.iter().find(|(_, &(p, v))| p != 1 || v != 1) {
        Some((key, counts)) => Err(format!("unpaired cell {key:?}: {counts:?}")),
        None => Ok(()),
    }
}

/// Closed-loop expert rollouts recorded primitive by primitive.
pub fn collect_demos<T: crate::Scalar>(
    env: &BlockNav<T>,
    tasks: &[TaskSpec],
    horizon: usize,
    noise_level: f64,
    episodes_per_task: usize,
    seed: u64,
    max_steps: usize,
) -> Result<Vec<Trajectory<T>>> {
    let prior = ScriptedExpertPrior::new(env.clone(), horizon, noise_level)?;
    let mut out = Vec::new();
    for (ti, task) in tasks.iter().enumerate() {
        for e in 0..episodes_per_task {
            let ep_seed = seed
                .wrapping_mul(1_000_003)
                .wrapping_add((ti * episodes_per_task + e) as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(ep_seed);
            let mut s = env.reset(ep_seed, &task.task_id)?;
            let mut steps = Vec::new();
            let mut success = false;
            while steps.len() < max_steps && !success && !env.is_dead_end(&s, task) {
                let u = prior.sample_macro(&env.observe(&s), task, &mut rng)?;
                let r = step_macro(env, &s, &u, task)?;
                let mut cur = s.clone();
                for t in 0..r.steps_used {
                    let a = u.primitive(t);
                    let next = env.step(&cur, &a);
                    steps.push((cur, a));
                    cur = next;
                }
                s = r.state;
                success = r.success;
            }
            out.push(Trajectory {
                task_id: task.task_id.clone(),
                steps,
                success,
            });
        }
    }
    Ok(out)
}

/// Step records for a demo set, ready for [`crate::world::log::write_records`].
pub fn demo_records<T: crate::Scalar>(
    env: &BlockNav<T>,
    demos: &[Trajectory<T>],
) -> Result<Vec<StepRecord<T>>> {
    let mut out = Vec::new();
    for (i, traj) in demos.iter().enumerate() {
        let task = env.task(&traj.task_id)?;
        out.extend(trajectory_records(env, task, i as u64, traj));
    }
    Ok(out)
}

pub fn write_demos(env: &BlockNav<f64>, demos: &[Trajectory<f64>], path: &Path) -> Result<()> {
    write_step_records(path, &demo_records(env, demos)?)
}

/// Collects demonstrations on every task and clusters them into a library.
pub fn library_from_demos(
    env: &BlockNav<f64>,
    horizon: usize,
    spec: &DemoLibrarySpec,
) -> Result<MacroLibrary<f64>> {
    let demos = collect_demos(
        env,
        crate::world::WorldModel::<f64>::tasks(env),
        horizon,
        spec.noise_level,
        spec.episodes_per_task,
        spec.seed,
        300,
    )?;
    let macros = segment_trajectories(&demos, horizon)?;
    build_library(&macros, spec.size, spec.seed)
}

fn resolve_library(cfg: &SuiteConfig, env: &BlockNav<f64>) -> Result<MacroLibrary<f64>> {
    match (&cfg.library.path, &cfg.library.build) {
        (Some(path), _) if path.exists() => MacroLibrary::load(path),
        (Some(path), Some(spec)) => {
            let lib = library_from_demos(env, cfg.search.horizon, spec)?;
            lib.save(path)?;
            Ok(lib)
        }
        (Some(path), None) => Err(Error::Config(format!(
            "library file {} not found; create it with `vlaps build-library --input <trajs.jsonl> --size <m> --seed <s> --out {}` (trajectories via `vlaps collect-demos`)",
            path.display(),
            path.display()
        ))),
        (None, Some(spec)) => library_from_demos(env, cfg.search.horizon, spec),
        (None, None) => Err(Error::Config(
            "no library configured; set `library.path` (see `vlaps build-library`) or `library.build`".into(),
        )),
    }
}

pub struct SuiteRun {
    pub records: Vec<RunRecord>,
    pub library: MacroLibrary<f64>,
}

/// Runs every (noise, task, seed) cell with both methods on identical seeds.
///
/// Records come back sorted by (noise, task, method, seed) whatever the
/// execution order. When `output_dir` is set the records are also written there.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteRun> {
    cfg.validate()?;
    let env = cfg.environment.build()?;
    let library = resolve_library(cfg, &env)?;
    run_suite_with_library(cfg, &env, library)
}

pub fn run_suite_with_library(
    cfg: &SuiteConfig,
    env: &BlockNav<f64>,
    library: MacroLibrary<f64>,
) -> Result<SuiteRun> {
    cfg.validate()?;
    let all_tasks = WorldModel::<f64>::tasks(env);
    let tasks: Vec<TaskSpec> = if cfg.tasks.is_empty() {
        all_tasks.to_vec()
    } else {
        cfg.tasks
            .iter()
            .map(|id| env.task(id).cloned())
            .collect::<Result<_>>()?
    };

    let mut cells = Vec::new();
    for (ni, &noise) in cfg.noise_levels.iter().enumerate() {
        for (ti, task) in tasks.iter().enumerate() {
            for method in [Method::PriorOnly, Method::Vlaps] {
                for e in 0..cfg.episodes {
                    cells.push((ni, noise, ti, task, method, cfg.base_seed + e as u64));
                }
            }
        }
    }

    let run_cell = |&(ni, noise, ti, task, method, seed): &(usize, f64, usize, &TaskSpec, Method, u64)|
     -> Result<((usize, usize, Method, u64), RunRecord)> {
        let prior = ScriptedExpertPrior::new(env.clone(), cfg.search.horizon, noise)?;
        let search = SearchConfig {
            seed,
            n_mc: match method {
                Method::PriorOnly => 0,
                Method::Vlaps => cfg.search.n_mc,
            },
            ..cfg.search.clone()
        };
        let model = env.clone();
        let r = run_episode(env, &model, task, &prior, &library, &search)?;
        Ok(((ni, ti, method, seed), record(task, noise, method, seed, &r)))
    };

    let mut results: Vec<_> = if cfg.parallel {
        cells.par_iter().map(run_cell).collect::<Result<Vec<_>>>()?
    } else {
        cells.iter().map(run_cell).collect::<Result<Vec<_>>>()?
    };
    results.sort_by_key(|a| a.0);
    let records: Vec<RunRecord> = results.into_iter().map(|(_, r)| r).collect();

    if let Some(dir) = &cfg.output_dir {
        let dir = resolve_output_dir(dir);
        write_run_records(&dir, &records)?;
        let cfg_path = dir.join("suite.json");
        std::fs::write(&cfg_path, serde_json::to_string_pretty(cfg)?)
            .map_err(|e| Error::io(&cfg_path, e))?;
        library.save(dir.join("library.json"))?;
    }
    Ok(SuiteRun { records, library })
}

fn record(task: &TaskSpec, noise: f64, method: Method, seed: u64, r: &EpisodeResult) -> RunRecord {
    RunRecord {
        task_id: task.task_id.clone(),
        noise_level: noise,
        method,
        seed,
        success: r.success,
        wall_time: duration_secs(r.total_wall_time),
        iterations: r.iterations,
        prior_queries: r.total_prior_queries,
        primitive_steps: r.primitive_steps,
        decision_points: r.decision_points,
        goal_plans: r.goal_plans,
        goal_plan_violations: r.goal_plan_violations,
        prob_violations: r.prob_violations,
        timed_out: r.timed_out,
        root_ties: r.root_ties,
    }
}

fn duration_secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Serves the scripted expert over the line-delimited JSON prior protocol.
pub fn serve_expert_prior(
    reader: impl BufRead,
    writer: impl Write,
    env: &BlockNav<f64>,
    horizon: usize,
    noise_level: f64,
    seed: u64,
) -> Result<usize> {
    let prior = ScriptedExpertPrior::new(env.clone(), horizon, noise_level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    crate::prior::serve_prior(reader, writer, &prior, WorldModel::<f64>::tasks(env), &mut rng)
}
