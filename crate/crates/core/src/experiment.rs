//! Experiment plans and the end-to-end commands behind the CLI.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::assess::{self, make_time_grid, sanitize_name, AssessError, GridScale, RunOutcome};
use crate::generate::{self, GenerateError, GeneratorKind};
use crate::hpo::{
    self, Configuration, CostMode, Evaluator, HpoError, HpoTargetStore, ParamSpace, TuneOptions,
};
use crate::runlog::{self, CellInfo, RunLogError, RunLogRecord, RunLogWriter};
use crate::solver::{self, Budget, Clock, SolverConfig};
use crate::wcnf::{self, instance_id, WcnfInstance};

/// Environment variable overriding the number of worker threads.
pub const THREADS_ENV: &str = "ANYTIME_MAXSAT_THREADS";

#[derive(Error, Debug)]
pub enum ExperimentError {
    /// Bad plan, flags or parameters.
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    RunLog(#[from] RunLogError),
    #[error(transparent)]
    Assess(#[from] AssessError),
    #[error(transparent)]
    Hpo(#[from] HpoError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Load(#[from] wcnf::LoadError),
}

impl ExperimentError {
    /// Whether the failure is an I/O problem rather than bad input.
    pub fn is_io(&self) -> bool {
        match self {
            ExperimentError::Io { .. } | ExperimentError::RunLog(_) => true,
            ExperimentError::Assess(e) => {
                matches!(e, AssessError::Io { .. } | AssessError::Csv { .. })
            }
            ExperimentError::Hpo(e) => matches!(e, HpoError::Io { .. }),
            ExperimentError::Load(e) => matches!(e.error, wcnf::ParseError::Io(_)),
            _ => false,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn budget_from_str<'de, D: Deserializer<'de>>(d: D) -> Result<Budget, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Tagged(Budget),
    }
    match Raw::deserialize(d)? {
        Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        Raw::Tagged(b) => Ok(b),
    }
}

/// Time grid settings of the assessment; unset fields are derived from the
/// logs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub clock: Option<Clock>,
    pub t_min: Option<f64>,
    pub t_max: Option<f64>,
    pub points: Option<usize>,
    pub scale: Option<GridScale>,
}

/// A run matrix: configurations x instances x seeds.
///
/// ```toml
/// instances = ["bench/"]
/// seeds = [1, 2, 3]
/// budget = "10s"
/// output = "out"
///
/// [configs.default]
///
/// [configs.greedy]
/// random_walk_prob = 0.01
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub configs: BTreeMap<String, SolverConfig>,
    /// Instance files or directories searched recursively for `*.wcnf`.
    pub instances: Vec<PathBuf>,
    pub seeds: Vec<u64>,
    #[serde(deserialize_with = "budget_from_str")]
    pub budget: Budget,
    pub output: PathBuf,
    #[serde(default)]
    pub grid: GridSettings,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Keep existing logs and append to them.
    #[serde(default)]
    pub append: bool,
}

impl ExperimentPlan {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let plan: ExperimentPlan = toml::from_str(&text)
            .map_err(|e| ExperimentError::Invalid(format!("{}: {e}", path.display())))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |m: &str| Err(ExperimentError::Invalid(m.to_string()));
        if self.configs.is_empty() {
            return invalid("plan needs at least one configuration");
        }
        if self.instances.is_empty() {
            return invalid("plan needs at least one instance");
        }
        if self.seeds.is_empty() {
            return invalid("plan needs at least one seed");
        }
        if self.threads == Some(0) {
            return invalid("threads must be positive");
        }
        self.budget.validate().map_err(ExperimentError::Invalid)?;
        for (name, c) in &self.configs {
            if name.trim().is_empty() {
                return invalid("configuration names must not be empty");
            }
            c.validate()
                .map_err(|e| ExperimentError::Invalid(format!("config '{name}': {e}")))?;
        }
        Ok(())
    }
}

/// Parses `1,2,3`, `1-5` or a mix such as `1-3,10`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("invalid seed list '{s}'");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                );
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    if seeds.is_empty() {
        return Err(format!("empty seed list '{s}'"));
    }
    Ok(seeds)
}

/// Threads to use: the environment override, else `requested`, else all
/// cores but one.
pub fn worker_threads(requested: Option<usize>) -> usize {
    if let Some(n) = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        return n;
    }
    requested.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get().saturating_sub(1))
            .unwrap_or(1)
            .max(1)
    })
}

/// An instance file and the track it belongs to.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct InstanceEntry {
    pub id: String,
    pub path: PathBuf,
    pub track: String,
}

/// The track is the name of the directory holding the instance.
pub fn track_of(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_else(|| "default".to_string())
}

fn collect_wcnf(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), ExperimentError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            collect_wcnf(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "wcnf") {
            out.push(path);
        }
    }
    Ok(())
}

/// Expands directories; paths that do not exist are kept so that their runs
/// are recorded as failures.
pub fn expand_instances(paths: &[PathBuf]) -> Result<Vec<InstanceEntry>, ExperimentError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found = Vec::new();
            collect_wcnf(p, &mut found)?;
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    let mut seen: BTreeMap<String, PathBuf> = BTreeMap::new();
    let mut entries = Vec::new();
    for path in files {
        let id = instance_id(&path);
        if let Some(prev) = seen.get(&id) {
            if *prev == path {
                continue;
            }
            return Err(ExperimentError::Invalid(format!(
                "instance id '{id}' used by both {} and {}",
                prev.display(),
                path.display()
            )));
        }
        seen.insert(id.clone(), path.clone());
        entries.push(InstanceEntry {
            id,
            track: track_of(&path),
            path,
        });
    }
    Ok(entries)
}

/// `(config, instance, seed, error)` of a failed cell.
pub type CellFailure = (String, String, u64, String);

/// What `cmd_run` did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub records: usize,
    pub failures: Vec<CellFailure>,
    pub log_files: Vec<PathBuf>,
}

/// Log file of one configuration.
pub fn log_path(output: &Path, config: &str) -> PathBuf {
    output.join(format!("runs_{}.jsonl", sanitize_name(config)))
}

/// Executes every (configuration, instance, seed) cell.
///
/// Unreadable instances produce failure records; the run continues.
pub fn cmd_run(plan: &ExperimentPlan) -> Result<RunSummary, ExperimentError> {
    plan.validate()?;
    fs::create_dir_all(&plan.output).map_err(io_err(&plan.output))?;
    let entries = expand_instances(&plan.instances)?;
    if entries.is_empty() {
        return Err(ExperimentError::Invalid("no instances found".into()));
    }
    let loaded: Vec<Result<WcnfInstance, String>> = entries
        .iter()
        .map(|e| {
            wcnf::load(&e.path)
                .map(|i| i.with_name(e.id.clone()))
                .map_err(|err| err.to_string())
        })
        .collect();

    let mut writers = BTreeMap::new();
    for name in plan.configs.keys() {
        let path = log_path(&plan.output, name);
        if !plan.append && path.exists() {
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
        writers.insert(name.clone(), Mutex::new(RunLogWriter::open(&path)?));
    }

    let cells: Vec<(&String, &SolverConfig, usize, u64)> = plan
        .configs
        .iter()
        .flat_map(|(name, cfg)| {
            (0..entries.len()).flat_map(move |i| plan.seeds.iter().map(move |&s| (name, cfg, i, s)))
        })
        .collect();

    let threads = worker_threads(plan.threads);
    log::info!("{} runs on {threads} worker thread(s)", cells.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ExperimentError::Invalid(e.to_string()))?;

    let results: Vec<Result<Option<CellFailure>, ExperimentError>> = pool.install(|| {
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|&(name, cfg, i, seed)| {
                let entry = &entries[i];
                let cell = CellInfo {
                    solver: name.clone(),
                    config: cfg.clone().with_seed(seed),
                    instance: entry.id.clone(),
                    instance_path: entry.path.display().to_string(),
                    track: entry.track.clone(),
                    seed,
                    budget: plan.budget,
                };
                let (record, failure) = match &loaded[i] {
                    Err(e) => (RunLogRecord::failed(cell, e.clone()), Some(e.clone())),
                    Ok(inst) => match solver::solve(inst, &cell.config, plan.budget) {
                        Ok(run) => (RunLogRecord::completed(cell, &run), None),
                        Err(e) => (
                            RunLogRecord::failed(cell, e.to_string()),
                            Some(e.to_string()),
                        ),
                    },
                };
                writers[name].lock().expect("log lock").append(&record)?;
                Ok(failure.map(|e| (name.clone(), entry.id.clone(), seed, e)))
            })
            .collect()
    });

    let mut summary = RunSummary {
        log_files: writers
            .values()
            .map(|w| w.lock().expect("log lock").path().to_path_buf())
            .collect(),
        ..Default::default()
    };
    for r in results {
        summary.records += 1;
        if let Some(f) = r? {
            log::warn!("{} on {} (seed {}) failed: {}", f.0, f.1, f.2, f.3);
            summary.failures.push(f);
        }
    }
    Ok(summary)
}

/// What `cmd_assess` did.
#[derive(Clone, Debug, PartialEq)]
pub struct AssessSummary {
    pub runs: usize,
    pub failed_records: usize,
    pub skipped_lines: usize,
    pub reports: Vec<PathBuf>,
    pub assessment: assess::Assessment,
}

/// Reads all logs in `log_dir`, assesses them and writes the reports.
///
/// Records are sorted by (solver, instance, seed) first, so the reports
/// depend only on the log contents, not on their order.
pub fn cmd_assess(
    log_dir: &Path,
    grid: &GridSettings,
    out_dir: &Path,
) -> Result<AssessSummary, ExperimentError> {
    let contents = runlog::read_log_dir(log_dir)?;
    let mut records = contents.records;
    records.sort_by(|a, b| {
        (&a.solver, &a.instance, a.seed)
            .cmp(&(&b.solver, &b.instance, b.seed))
            .then(a.total_flips.cmp(&b.total_flips))
    });
    let mut outcomes: Vec<RunOutcome> = Vec::new();
    let mut failed = 0;
    for r in &records {
        match r.to_outcome() {
            Some(o) => outcomes.push(o),
            None => failed += 1,
        }
    }
    if outcomes.is_empty() {
        return Err(ExperimentError::Invalid(format!(
            "no complete run records in {}",
            log_dir.display()
        )));
    }

    let budgets: Vec<Budget> = records
        .iter()
        .filter(|r| r.status == runlog::RunStatus::Ok)
        .map(|r| r.budget)
        .collect();
    let clock = match grid.clock {
        Some(c) => c,
        None => {
            let first = budgets[0].clock();
            if budgets.iter().any(|b| b.clock() != first) {
                return Err(ExperimentError::Invalid(
                    "logs mix seconds and flip budgets; choose a clock".into(),
                ));
            }
            first
        }
    };
    let t_max = grid.t_max.unwrap_or_else(|| {
        budgets
            .iter()
            .filter(|b| b.clock() == clock)
            .map(|b| b.limit())
            .fold(0.0, f64::max)
    });
    let t_min = grid.t_min.unwrap_or(match clock {
        Clock::Seconds => 0.1,
        Clock::Flips => 1.0,
    });
    let time_grid = make_time_grid(
        t_min,
        t_max,
        grid.points.unwrap_or(100),
        grid.scale.unwrap_or(GridScale::Log),
    )?;
    let assessment = assess::assess(&outcomes, &time_grid, clock)?;
    let reports = assess::emit_reports(&assessment, out_dir)?;
    Ok(AssessSummary {
        runs: outcomes.len(),
        failed_records: failed,
        skipped_lines: contents.skipped_lines,
        reports,
        assessment,
    })
}

/// Writes `count` instances with seeds `seed, seed+1, ...`.
///
/// With `count == 1` and an `out` ending in `.wcnf` the file is written
/// there; otherwise `out` is a directory.
pub fn cmd_gen(
    kind: GeneratorKind,
    size: usize,
    clauses: Option<usize>,
    seed: u64,
    count: usize,
    out: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    if count == 0 {
        return Err(ExperimentError::Invalid("count must be positive".into()));
    }
    let single_file = count == 1 && out.extension().is_some_and(|e| e == "wcnf");
    let mut written = Vec::new();
    for k in 0..count as u64 {
        let s = seed + k;
        let path = if single_file {
            out.to_path_buf()
        } else {
            out.join(format!("{kind}-n{size}-s{s}.wcnf"))
        };
        let inst = generate::generate(kind, size, clauses, s, &instance_id(&path))?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(&path, inst.dump_to_string()).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Clone, Debug)]
pub struct TuneCommand {
    pub space: ParamSpace,
    pub instances: Vec<PathBuf>,
    pub mode: CostMode,
    pub budget: Budget,
    pub eval_budget: usize,
    pub seed: u64,
    pub repetitions: usize,
    pub replications: usize,
    pub output: PathBuf,
    pub threads: Option<usize>,
}

/// The winning configuration of one tuner repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinnerFile {
    pub repetition: usize,
    pub tuner_seed: u64,
    pub mode: CostMode,
    pub candidate: usize,
    pub mean_cost: f64,
    pub config: Configuration,
    pub solver_config: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Runs the tuner `repetitions` times with seeds `seed, seed+1, ...`, each
/// with its own target store, and writes per repetition a trace, a target
/// store and a winner file.
pub fn cmd_tune(cmd: &TuneCommand) -> Result<Vec<WinnerFile>, ExperimentError> {
    if cmd.repetitions == 0 {
        return Err(ExperimentError::Invalid(
            "repetitions must be positive".into(),
        ));
    }
    let entries = expand_instances(&cmd.instances)?;
    if entries.is_empty() {
        return Err(ExperimentError::Invalid("no training instances".into()));
    }
    let instances: Vec<WcnfInstance> = entries
        .iter()
        .map(|e| wcnf::load(&e.path).map(|i| i.with_name(e.id.clone())))
        .collect::<Result<_, _>>()?;
    fs::create_dir_all(&cmd.output).map_err(io_err(&cmd.output))?;
    let mut winners = Vec::new();
    for rep in 0..cmd.repetitions {
        let tuner_seed = cmd.seed + rep as u64;
        let trace = cmd.output.join(format!("trace_rep{rep}.jsonl"));
        if trace.exists() {
            fs::remove_file(&trace).map_err(io_err(&trace))?;
        }
        let store_path = cmd.output.join(format!("targets_rep{rep}.json"));
        if store_path.exists() {
            fs::remove_file(&store_path).map_err(io_err(&store_path))?;
        }
        let evaluator = Evaluator::new(cmd.space.clone(), HpoTargetStore::open(&store_path)?)
            .with_trace(&trace)?;
        let outcome = hpo::tune(
            &evaluator,
            &instances,
            &TuneOptions {
                mode: cmd.mode,
                eval_budget: cmd.eval_budget,
                seed: tuner_seed,
                budget: cmd.budget,
                replications: cmd.replications,
                threads: worker_threads(cmd.threads),
            },
        )?;
        let winner = WinnerFile {
            repetition: rep,
            tuner_seed,
            mode: cmd.mode,
            candidate: outcome.best_index,
            mean_cost: outcome.mean_costs[outcome.best_index],
            solver_config: hpo::to_solver_config(&outcome.best, &SolverConfig::default())?,
            config: outcome.best,
            warning: outcome.warning,
        };
        let path = cmd.output.join(format!("winner_rep{rep}.json"));
        let text = serde_json::to_string_pretty(&winner).expect("winner serializes");
        fs::write(&path, text + "\n").map_err(io_err(&path))?;
        winners.push(winner);
    }
    Ok(winners)
}
