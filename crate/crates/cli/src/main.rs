use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use anytime_maxsat::assess::GridScale;
use anytime_maxsat::experiment::{
    self, ExperimentError, ExperimentPlan, GridSettings, TuneCommand,
};
use anytime_maxsat::generate::GeneratorKind;
use anytime_maxsat::hpo::{CostMode, EvalRequest, Evaluator, HpoError, HpoTargetStore, ParamSpace};
use anytime_maxsat::solver::{Budget, Clock, SolverConfig};
use anytime_maxsat::wcnf::{self, instance_id};
use clap::{Args, Parser, Subcommand};

const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;

/// Anytime benchmarking and tuning for MaxSAT local search.
#[derive(Parser, Debug)]
#[command(name = "anytime-maxsat", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a matrix of configurations x instances x seeds into JSONL logs.
    Run(RunArgs),
    /// Compute scores, wins, ECDF curves and AUCs from run logs.
    Assess(AssessArgs),
    /// Evaluate one configuration on one instance and print `COST <value>`.
    Cost(CostArgs),
    /// Random-search tuning of the solver parameters.
    Tune(TuneArgs),
    /// Generate instances.
    Gen(GenArgs),
    /// Parse an instance and write it back in the new WCNF format.
    Dump(DumpArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML plan; flags below override its fields.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Instance files or directories.
    #[arg(long, num_args = 1..)]
    instances: Vec<PathBuf>,
    /// Seeds, e.g. `1-10` or `1,5,9`.
    #[arg(long)]
    seeds: Option<String>,
    /// Per-run budget: `10s` or `100000f`.
    #[arg(long)]
    budget: Option<Budget>,
    /// Output directory for the logs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Named configuration `NAME[:param=value,...]`; repeatable.
    #[arg(long = "config")]
    configs: Vec<String>,
    #[arg(long)]
    threads: Option<usize>,
    /// Append to existing logs instead of replacing them.
    #[arg(long)]
    append: bool,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Time axis: seconds or flips (default: from the budgets).
    #[arg(long)]
    clock: Option<Clock>,
    #[arg(long)]
    t_min: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// log or linear.
    #[arg(long)]
    scale: Option<GridScale>,
}

#[derive(Args, Debug)]
struct AssessArgs {
    /// Directory holding `*.jsonl` run logs.
    #[arg(long)]
    logs: PathBuf,
    /// Report directory (default: the log directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug)]
struct CostArgs {
    #[arg(long)]
    instance: PathBuf,
    /// best-f or ecdf-prime.
    #[arg(long)]
    mode: CostMode,
    #[arg(long)]
    budget: Budget,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `name=value`; repeatable.
    #[arg(long = "param")]
    params: Vec<String>,
    /// Parameter space (JSON or TOML); default: the solver's own.
    #[arg(long)]
    space: Option<PathBuf>,
    /// Persistent target store (JSON).
    #[arg(long, default_value = "hpo_targets.json")]
    targets: PathBuf,
    /// Append the evaluation to this JSONL trace.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    /// Parameter space (JSON or TOML); default: the solver's own.
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long, num_args = 1.., required = true)]
    instances: Vec<PathBuf>,
    #[arg(long)]
    mode: CostMode,
    /// Budget per evaluation run.
    #[arg(long)]
    budget: Budget,
    /// Configurations evaluated per repetition, the default included.
    #[arg(long, default_value_t = 30)]
    evals: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent tuner repetitions (seeds `seed..seed+n`).
    #[arg(long, default_value_t = 1)]
    repetitions: usize,
    /// Solver seeds per (configuration, instance).
    #[arg(long, default_value_t = 1)]
    replications: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct GenArgs {
    /// random-wpms or staircase.
    #[arg(long)]
    kind: GeneratorKind,
    /// Number of variables.
    #[arg(long)]
    size: usize,
    /// Clause count (random-wpms only; default 4 x size).
    #[arg(long)]
    clauses: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Target `.wcnf` file (count 1) or directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors tagged with the exit code they map to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: EXIT_INVALID,
        error: error.into(),
    }
}

fn from_experiment(e: ExperimentError) -> Failure {
    Failure {
        code: if e.is_io() { EXIT_IO } else { EXIT_INVALID },
        error: e.into(),
    }
}

fn from_hpo(e: HpoError) -> Failure {
    Failure {
        code: if matches!(e, HpoError::Io { .. }) {
            EXIT_IO
        } else {
            EXIT_INVALID
        },
        error: e.into(),
    }
}

fn io_failure(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        error,
    }
}

fn parse_config_flag(flag: &str) -> anyhow::Result<(String, SolverConfig)> {
    let (name, params) = flag.split_once(':').unwrap_or((flag, ""));
    if name.is_empty() {
        return Err(anyhow!("configuration name missing in '{flag}'"));
    }
    let mut cfg = SolverConfig::default();
    for pair in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("expected param=value in '{pair}'"))?;
        cfg.set_param(k.trim(), v.trim())
            .with_context(|| format!("configuration '{name}'"))?;
    }
    Ok((name.to_string(), cfg))
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut plan = match &args.plan {
        Some(p) => ExperimentPlan::load(p).map_err(from_experiment)?,
        None => ExperimentPlan {
            configs: BTreeMap::new(),
            instances: Vec::new(),
            seeds: Vec::new(),
            budget: args
                .budget
                .ok_or_else(|| invalid(anyhow!("--budget is required without --plan")))?,
            output: args
                .out
                .clone()
                .ok_or_else(|| invalid(anyhow!("--out is required without --plan")))?,
            grid: GridSettings::default(),
            threads: None,
            append: false,
        },
    };
    if !args.instances.is_empty() {
        plan.instances = args.instances;
    }
    if let Some(s) = &args.seeds {
        plan.seeds = experiment::parse_seeds(s).map_err(|e| invalid(anyhow!(e)))?;
    }
    if let Some(b) = args.budget {
        plan.budget = b;
    }
    if let Some(o) = args.out {
        plan.output = o;
    }
    if !args.configs.is_empty() {
        plan.configs = args
            .configs
            .iter()
            .map(|c| parse_config_flag(c))
            .collect::<anyhow::Result<_>>()
            .map_err(invalid)?;
    } else if plan.configs.is_empty() {
        plan.configs
            .insert("default".into(), SolverConfig::default());
    }
    if args.threads.is_some() {
        plan.threads = args.threads;
    }
    plan.append |= args.append;

    let summary = experiment::cmd_run(&plan).map_err(from_experiment)?;
    println!(
        "{} runs recorded in {}, {} failed",
        summary.records,
        plan.output.display(),
        summary.failures.len()
    );
    for (config, instance, seed, error) in &summary.failures {
        println!("FAILED {config} {instance} seed={seed}: {error}");
    }
    Ok(())
}

fn assess(args: AssessArgs) -> Result<(), Failure> {
    let grid = GridSettings {
        clock: args.grid.clock,
        t_min: args.grid.t_min,
        t_max: args.grid.t_max,
        points: args.grid.points,
        scale: args.grid.scale,
    };
    let out = args.out.unwrap_or_else(|| args.logs.clone());
    let summary = experiment::cmd_assess(&args.logs, &grid, &out).map_err(from_experiment)?;
    println!(
        "assessed {} runs ({} failed records, {} skipped lines); reports in {}",
        summary.runs,
        summary.failed_records,
        summary.skipped_lines,
        out.display()
    );
    Ok(())
}

fn load_space(path: Option<&Path>) -> Result<ParamSpace, Failure> {
    match path {
        Some(p) => ParamSpace::load(p).map_err(from_hpo),
        None => Ok(ParamSpace::solver_default()),
    }
}

fn cost(args: CostArgs) -> Result<(), Failure> {
    let space = load_space(args.space.as_deref())?;
    let config = space.parse_assignments(&args.params).map_err(from_hpo)?;
    let instance = wcnf::load(&args.instance)
        .map_err(|e| from_experiment(e.into()))?
        .with_name(instance_id(&args.instance));
    let store = HpoTargetStore::open(&args.targets).map_err(from_hpo)?;
    let mut evaluator = Evaluator::new(space, store);
    if let Some(t) = &args.trace {
        evaluator = evaluator.with_trace(t).map_err(from_hpo)?;
    }
    let eval = evaluator
        .evaluate(EvalRequest {
            config: &config,
            instance: &instance,
            seed: args.seed,
            budget: args.budget,
            mode: args.mode,
            candidate: None,
        })
        .map_err(from_hpo)?;
    println!("COST {}", eval.cost.value);
    Ok(())
}

fn tune(args: TuneArgs) -> Result<(), Failure> {
    let space = load_space(args.space.as_deref())?;
    let winners = experiment::cmd_tune(&TuneCommand {
        space,
        instances: args.instances,
        mode: args.mode,
        budget: args.budget,
        eval_budget: args.evals,
        seed: args.seed,
        repetitions: args.repetitions,
        replications: args.replications,
        output: args.out.clone(),
        threads: args.threads,
    })
    .map_err(from_experiment)?;
    for w in &winners {
        let params: Vec<String> = w.config.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!(
            "rep {} seed {}: candidate {} mean cost {} [{}]",
            w.repetition,
            w.tuner_seed,
            w.candidate,
            w.mean_cost,
            params.join(" ")
        );
    }
    println!("winners written to {}", args.out.display());
    Ok(())
}

fn gen(args: GenArgs) -> Result<(), Failure> {
    let written = experiment::cmd_gen(
        args.kind,
        args.size,
        args.clauses,
        args.seed,
        args.count,
        &args.out,
    )
    .map_err(from_experiment)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn dump(args: DumpArgs) -> Result<(), Failure> {
    let instance = wcnf::load(&args.instance).map_err(|e| from_experiment(e.into()))?;
    let text = instance.dump_to_string();
    match &args.out {
        Some(p) => fs::write(p, text)
            .with_context(|| p.display().to_string())
            .map_err(io_failure),
        None => io::stdout()
            .write_all(text.as_bytes())
            .context("stdout")
            .map_err(io_failure),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Assess(a) => assess(a),
        Command::Cost(a) => cost(a),
        Command::Tune(a) => tune(a),
        Command::Gen(a) => gen(a),
        Command::Dump(a) => dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
