//! Tuning cost functions and a built-in random-search configurator.
//!
//! Two costs are offered, both minimized:
//!
//! - **Best-f**: the best feasible cost found within the tuning budget `t_B`;
//!   infeasible runs get the total soft weight plus one.
//! - **ECDF'**: minus the number of per-instance targets reached, summed over
//!   50 evaluation times `t_B - tau` with `tau` log-spaced in `[0.1, t_B]`,
//!   without normalizing by the number of targets.
//!
//! Targets per instance start as five linearly spaced values between the best
//! and worst feasible cost of one run of the default configuration. Whenever
//! an evaluation beats the smallest target, its best cost joins the set.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assess::{hits_at, make_time_grid, GridScale, TargetSet, TimeGrid};
use crate::solver::{self, Budget, Clock, ConfigError, RunResult, SolveError, SolverConfig};
use crate::wcnf::WcnfInstance;

/// Number of evaluation times of the ECDF' cost.
pub const HPO_GRID_POINTS: usize = 50;
/// Smallest offset `tau` subtracted from the budget.
pub const HPO_GRID_MIN: f64 = 0.1;
/// Size of the bootstrapped target set.
pub const BOOTSTRAP_TARGETS: usize = 5;

#[derive(Error, Debug)]
pub enum HpoError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("parameter '{name}': {reason}")]
    Domain { name: String, reason: String },
    #[error("invalid parameter space: {0}")]
    Space(String),
    #[error("solver failed on '{instance}': {source}")]
    Solve {
        instance: String,
        #[source]
        source: SolveError,
    },
    #[error("{0}")]
    Grid(#[from] crate::assess::AssessError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamKind {
    Real {
        lower: f64,
        upper: f64,
        default: f64,
    },
    Integer {
        lower: i64,
        upper: i64,
        default: i64,
    },
    Categorical {
        choices: Vec<String>,
        default: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParamKind,
}

/// A parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Real(x) => write!(f, "{x}"),
            ParamValue::Cat(s) => f.write_str(s),
        }
    }
}

/// A complete parameter assignment, keyed by name.
pub type Configuration = BTreeMap<String, ParamValue>;

/// The searchable set of configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    #[serde(rename = "param")]
    pub params: Vec<ParamSpec>,
}

impl ParamSpace {
    pub fn new(params: Vec<ParamSpec>) -> Result<Self, HpoError> {
        let space = ParamSpace { params };
        space.validate()?;
        Ok(space)
    }

    /// The solver's tunable parameters around its defaults.
    pub fn solver_default() -> Self {
        let d = SolverConfig::default();
        let real = |name: &str, lower, upper, default| ParamSpec {
            name: name.to_string(),
            kind: ParamKind::Real {
                lower,
                upper,
                default,
            },
        };
        let int = |name: &str, lower, upper, default: u64| ParamSpec {
            name: name.to_string(),
            kind: ParamKind::Integer {
                lower,
                upper,
                default: default as i64,
            },
        };
        let restart_choices: Vec<String> = ["none", "1000", "10000", "100000"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        ParamSpace {
            params: vec![
                real("smooth_prob", 0.0, 0.1, d.smooth_prob),
                int("hard_weight_inc", 1, 10, d.hard_weight_inc),
                int("soft_weight_cap", 1, 1000, d.soft_weight_cap),
                int("bms_size", 1, 100, d.bms_size as u64),
                real("random_walk_prob", 0.0, 0.5, d.random_walk_prob),
                ParamSpec {
                    name: "restart_flips".to_string(),
                    kind: ParamKind::Categorical {
                        choices: restart_choices,
                        default: d
                            .restart_flips
                            .map_or_else(|| "none".to_string(), |r| r.to_string()),
                    },
                },
            ],
        }
    }

    /// Loads a space from a `.json` or `.toml` file.
    pub fn load(path: &Path) -> Result<Self, HpoError> {
        let text = fs::read_to_string(path).map_err(|source| HpoError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let space: ParamSpace = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|source| HpoError::Json {
                path: path.to_path_buf(),
                source,
            })?
        } else {
            toml::from_str(&text).map_err(|source| HpoError::Toml {
                path: path.to_path_buf(),
                source,
            })?
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), HpoError> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.params {
            if !seen.insert(p.name.as_str()) {
                return Err(HpoError::Space(format!("duplicate parameter '{}'", p.name)));
            }
            let bad = |reason: &str| Err(HpoError::Space(format!("'{}': {reason}", p.name)));
            match &p.kind {
                ParamKind::Real {
                    lower,
                    upper,
                    default,
                } => {
                    if !(lower.is_finite() && upper.is_finite() && lower <= upper) {
                        return bad("bounds are not ordered");
                    }
                    if !(lower <= default && default <= upper) {
                        return bad("default outside bounds");
                    }
                }
                ParamKind::Integer {
                    lower,
                    upper,
                    default,
                } => {
                    if lower > upper {
                        return bad("bounds are not ordered");
                    }
                    if !(lower <= default && default <= upper) {
                        return bad("default outside bounds");
                    }
                }
                ParamKind::Categorical { choices, default } => {
                    if choices.is_empty() {
                        return bad("no choices");
                    }
                    if !choices.contains(default) {
                        return bad("default is not a choice");
                    }
                }
            }
        }
        Ok(())
    }

    pub fn default_config(&self) -> Configuration {
        self.params
            .iter()
            .map(|p| {
                let v = match &p.kind {
                    ParamKind::Real { default, .. } => ParamValue::Real(*default),
                    ParamKind::Integer { default, .. } => ParamValue::Int(*default),
                    ParamKind::Categorical { default, .. } => ParamValue::Cat(default.clone()),
                };
                (p.name.clone(), v)
            })
            .collect()
    }

    /// Uniform sample from the space.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Configuration {
        self.params
            .iter()
            .map(|p| {
                let v = match &p.kind {
                    ParamKind::Real { lower, upper, .. } => {
                        if lower == upper {
                            ParamValue::Real(*lower)
                        } else {
                            ParamValue::Real(rng.random_range(*lower..=*upper))
                        }
                    }
                    ParamKind::Integer { lower, upper, .. } => {
                        ParamValue::Int(rng.random_range(*lower..=*upper))
                    }
                    ParamKind::Categorical { choices, .. } => {
                        ParamValue::Cat(choices[rng.random_range(0..choices.len())].clone())
                    }
                };
                (p.name.clone(), v)
            })
            .collect()
    }

    /// Every value inside its domain, no parameter missing or unknown.
    pub fn check(&self, config: &Configuration) -> Result<(), HpoError> {
        for name in config.keys() {
            if !self.params.iter().any(|p| &p.name == name) {
                return Err(HpoError::Config(ConfigError::UnknownParameter(
                    name.clone(),
                )));
            }
        }
        for p in &self.params {
            let domain = |reason: String| HpoError::Domain {
                name: p.name.clone(),
                reason,
            };
            let v = config
                .get(&p.name)
                .ok_or_else(|| domain("missing".to_string()))?;
            match (&p.kind, v) {
                (ParamKind::Real { lower, upper, .. }, ParamValue::Real(x)) => {
                    if !(lower <= x && x <= upper) {
                        return Err(domain(format!("{x} outside [{lower}, {upper}]")));
                    }
                }
                (ParamKind::Real { lower, upper, .. }, ParamValue::Int(i)) => {
                    let x = *i as f64;
                    if !(*lower <= x && x <= *upper) {
                        return Err(domain(format!("{x} outside [{lower}, {upper}]")));
                    }
                }
                (ParamKind::Integer { lower, upper, .. }, ParamValue::Int(i)) => {
                    if !(lower <= i && i <= upper) {
                        return Err(domain(format!("{i} outside [{lower}, {upper}]")));
                    }
                }
                (ParamKind::Categorical { choices, .. }, ParamValue::Cat(s)) => {
                    if !choices.contains(s) {
                        return Err(domain(format!("'{s}' is not one of {choices:?}")));
                    }
                }
                (_, v) => return Err(domain(format!("value '{v}' has the wrong kind"))),
            }
        }
        Ok(())
    }

    /// Builds a configuration from `name=value` pairs; unspecified parameters
    /// take their defaults.
    pub fn parse_assignments<S: AsRef<str>>(&self, pairs: &[S]) -> Result<Configuration, HpoError> {
        let mut config = self.default_config();
        for pair in pairs {
            let pair = pair.as_ref();
            let (name, value) = pair
                .split_once('=')
                .ok_or_else(|| HpoError::Invalid(format!("expected name=value, got '{pair}'")))?;
            let (name, value) = (name.trim(), value.trim());
            let spec =
                self.params.iter().find(|p| p.name == name).ok_or_else(|| {
                    HpoError::Config(ConfigError::UnknownParameter(name.to_string()))
                })?;
            let domain = |reason: String| HpoError::Domain {
                name: name.to_string(),
                reason,
            };
            let v = match &spec.kind {
                ParamKind::Real { .. } => ParamValue::Real(
                    value
                        .parse()
                        .map_err(|_| domain(format!("'{value}' is not a number")))?,
                ),
                ParamKind::Integer { .. } => ParamValue::Int(
                    value
                        .parse()
                        .map_err(|_| domain(format!("'{value}' is not an integer")))?,
                ),
                ParamKind::Categorical { .. } => ParamValue::Cat(value.to_string()),
            };
            config.insert(name.to_string(), v);
        }
        self.check(&config)?;
        Ok(config)
    }
}

/// Applies a configuration on top of `base`.
pub fn to_solver_config(
    config: &Configuration,
    base: &SolverConfig,
) -> Result<SolverConfig, HpoError> {
    let mut out = base.clone();
    for (name, value) in config {
        out.set_param(name, &value.to_string())?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CostMode {
    #[serde(rename = "best-f")]
    BestF,
    #[serde(rename = "ecdf-prime")]
    EcdfPrime,
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostMode::BestF => "best-f",
            CostMode::EcdfPrime => "ecdf-prime",
        })
    }
}

impl std::str::FromStr for CostMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "best-f" | "bestf" => Ok(CostMode::BestF),
            "ecdf-prime" | "ecdf" => Ok(CostMode::EcdfPrime),
            _ => Err(format!(
                "unknown cost mode '{s}' (expected best-f|ecdf-prime)"
            )),
        }
    }
}

/// A tuning cost; lower is better in both modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostValue {
    pub mode: CostMode,
    pub value: f64,
}

/// Evaluation times `t_B - tau`, `tau` log-spaced over `[0.1, t_B]`.
pub fn hpo_time_grid(t_budget: f64) -> Result<TimeGrid, HpoError> {
    if t_budget.is_nan() || t_budget <= HPO_GRID_MIN {
        return Err(HpoError::Invalid(format!(
            "tuning budget must exceed {HPO_GRID_MIN}, got {t_budget}"
        )));
    }
    Ok(make_time_grid(
        HPO_GRID_MIN,
        t_budget,
        HPO_GRID_POINTS,
        GridScale::ReflectedLog,
    )?)
}

/// Best feasible cost, or the total soft weight plus one.
pub fn cost_bestf(run: &RunResult, soft_weight_sum: u64) -> CostValue {
    let value = match run.best_cost {
        Some(c) => c as f64,
        None => soft_weight_sum as f64 + 1.0,
    };
    CostValue {
        mode: CostMode::BestF,
        value,
    }
}

/// Minus the total number of targets reached over the grid.
pub fn cost_ecdf_prime(
    run: &RunResult,
    targets: &TargetSet<f64>,
    grid: &TimeGrid,
    clock: Clock,
) -> CostValue {
    let hits: usize = grid
        .points()
        .iter()
        .map(|&t| hits_at(&run.trajectory, targets, t, clock))
        .sum();
    CostValue {
        mode: CostMode::EcdfPrime,
        value: -(hits as f64),
    }
}

/// Targets of one instance plus how they were bootstrapped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceTargets {
    pub targets: TargetSet<f64>,
    pub f_init_min: Option<u64>,
    pub f_init_max: Option<u64>,
    /// The bootstrap run found no feasible solution.
    pub flagged: bool,
}

/// Five linearly spaced values between the best and worst feasible cost of
/// a bootstrap run (the last and first trajectory events).
pub fn bootstrap_from_run(instance_id: &str, run: &RunResult) -> InstanceTargets {
    let events = run.trajectory.events();
    let (Some(first), Some(last)) = (events.first(), events.last()) else {
        return InstanceTargets {
            targets: TargetSet::new(instance_id, []),
            f_init_min: None,
            f_init_max: None,
            flagged: true,
        };
    };
    let (f_min, f_max) = (last.cost, first.cost);
    let step = (f_max - f_min) as f64 / (BOOTSTRAP_TARGETS - 1) as f64;
    let values = (0..BOOTSTRAP_TARGETS).map(|j| match j {
        0 => f_min as f64,
        j if j == BOOTSTRAP_TARGETS - 1 => f_max as f64,
        j => f_min as f64 + j as f64 * step,
    });
    InstanceTargets {
        targets: TargetSet::new(instance_id, values),
        f_init_min: Some(f_min),
        f_init_max: Some(f_max),
        flagged: false,
    }
}

/// Runs `config` once and bootstraps targets from it.
pub fn bootstrap_targets(
    instance: &WcnfInstance,
    config: &SolverConfig,
    budget: Budget,
) -> Result<InstanceTargets, HpoError> {
    let run = solver::solve(instance, config, budget).map_err(|source| HpoError::Solve {
        instance: instance.name().to_string(),
        source,
    })?;
    Ok(bootstrap_from_run(instance.name(), &run))
}

/// Per-instance target sets, optionally persisted as JSON keyed by instance.
#[derive(Debug, Default)]
pub struct HpoTargetStore {
    entries: BTreeMap<String, InstanceTargets>,
    path: Option<PathBuf>,
}

impl HpoTargetStore {
    pub fn in_memory() -> Self {
        HpoTargetStore::default()
    }

    /// Opens (or starts) a store persisted at `path`.
    pub fn open(path: &Path) -> Result<Self, HpoError> {
        let entries = if path.exists() {
            let text = fs::read_to_string(path).map_err(|source| HpoError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|source| HpoError::Json {
                path: path.to_path_buf(),
                source,
            })?
        } else {
            BTreeMap::new()
        };
        Ok(HpoTargetStore {
            entries,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn get(&self, instance: &str) -> Option<&InstanceTargets> {
        self.entries.get(instance)
    }

    pub fn contains(&self, instance: &str) -> bool {
        self.entries.contains_key(instance)
    }

    /// Installs bootstrapped targets; an existing entry is merged by union.
    pub fn insert_bootstrap(
        &mut self,
        instance: &str,
        boot: InstanceTargets,
    ) -> Result<(), HpoError> {
        match self.entries.get_mut(instance) {
            Some(existing) => {
                for &v in boot.targets.values() {
                    existing.targets.insert(v);
                }
            }
            None => {
                self.entries.insert(instance.to_string(), boot);
            }
        }
        self.persist()
    }

    /// Adds `new_best` when it beats the smallest target (or the set is
    /// empty). Returns whether the set changed.
    pub fn update_targets(&mut self, instance: &str, new_best: u64) -> Result<bool, HpoError> {
        let entry = self
            .entries
            .entry(instance.to_string())
            .or_insert_with(|| InstanceTargets {
                targets: TargetSet::new(instance, []),
                f_init_min: None,
                f_init_max: None,
                flagged: true,
            });
        let improves = match entry.targets.values().first() {
            None => true,
            Some(&min) => strictly_below(new_best, min),
        };
        if !improves {
            return Ok(false);
        }
        entry.targets.insert(new_best as f64);
        self.persist()?;
        Ok(true)
    }

    pub fn save(&self) -> Result<(), HpoError> {
        self.persist()
    }

    fn persist(&self) -> Result<(), HpoError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let io_err = |source| HpoError::Io {
            path: path.clone(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io_err)?;
        }
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(&self.entries).expect("targets serialize");
        fs::write(&tmp, text).map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }
}

/// `cost < target`, exact for every `u64`.
fn strictly_below(cost: u64, target: f64) -> bool {
    if target.is_nan() || target <= 0.0 {
        return false;
    }
    if target >= 18_446_744_073_709_551_616.0 {
        return true;
    }
    cost < target.ceil() as u64
}

/// One line of the evaluation trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub candidate: Option<usize>,
    pub config: Configuration,
    pub instance: String,
    pub seed: u64,
    pub mode: CostMode,
    pub cost: f64,
    pub best_cost: Option<u64>,
    pub wall_time: f64,
}

/// Inputs of one evaluation.
#[derive(Clone, Copy, Debug)]
pub struct EvalRequest<'a> {
    pub config: &'a Configuration,
    pub instance: &'a WcnfInstance,
    pub seed: u64,
    pub budget: Budget,
    pub mode: CostMode,
    pub candidate: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub cost: CostValue,
    pub run: RunResult,
}

/// Evaluates configurations against a shared target store.
///
/// Store updates go through one mutex; they are set unions, so concurrent
/// evaluations on different instances commute.
pub struct Evaluator {
    space: ParamSpace,
    store: Mutex<HpoTargetStore>,
    trace: Option<Mutex<BufWriter<File>>>,
    trace_path: Option<PathBuf>,
}

impl Evaluator {
    pub fn new(space: ParamSpace, store: HpoTargetStore) -> Self {
        Evaluator {
            space,
            store: Mutex::new(store),
            trace: None,
            trace_path: None,
        }
    }

    /// Appends every evaluation as one JSON line to `path`.
    pub fn with_trace(mut self, path: &Path) -> Result<Self, HpoError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| HpoError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| HpoError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        self.trace = Some(Mutex::new(BufWriter::new(file)));
        self.trace_path = Some(path.to_path_buf());
        Ok(self)
    }

    pub fn space(&self) -> &ParamSpace {
        &self.space
    }

    pub fn targets(&self, instance: &str) -> Option<InstanceTargets> {
        self.store
            .lock()
            .expect("store lock")
            .get(instance)
            .cloned()
    }

    /// Bootstraps targets with the default configuration unless present.
    pub fn ensure_bootstrapped(
        &self,
        instance: &WcnfInstance,
        seed: u64,
        budget: Budget,
    ) -> Result<(), HpoError> {
        if self
            .store
            .lock()
            .expect("store lock")
            .contains(instance.name())
        {
            return Ok(());
        }
        let base = to_solver_config(&self.space.default_config(), &SolverConfig::default())?;
        let boot = bootstrap_targets(instance, &base.with_seed(seed), budget)?;
        if boot.flagged {
            log::warn!(
                "{}: bootstrap run found no feasible solution",
                instance.name()
            );
        }
        self.store
            .lock()
            .expect("store lock")
            .insert_bootstrap(instance.name(), boot)
    }

    /// Runs the solver with `config` and returns the requested cost.
    ///
    /// The target store is updated with the run's best cost before the ECDF'
    /// cost is computed, so a run that improves on every known target is
    /// credited for the new target it creates.
    pub fn evaluate(&self, req: EvalRequest<'_>) -> Result<Evaluation, HpoError> {
        self.space.check(req.config)?;
        let solver_config =
            to_solver_config(req.config, &SolverConfig::default())?.with_seed(req.seed);
        req.budget.validate().map_err(HpoError::Invalid)?;
        if req.mode == CostMode::EcdfPrime {
            self.ensure_bootstrapped(req.instance, req.seed, req.budget)?;
        }
        let started = Instant::now();
        let run = solver::solve(req.instance, &solver_config, req.budget).map_err(|source| {
            HpoError::Solve {
                instance: req.instance.name().to_string(),
                source,
            }
        })?;
        let cost = {
            let mut store = self.store.lock().expect("store lock");
            if let Some(best) = run.best_cost {
                if store.contains(req.instance.name()) {
                    store.update_targets(req.instance.name(), best)?;
                }
            }
            match req.mode {
                CostMode::BestF => cost_bestf(&run, req.instance.soft_weight_sum()),
                CostMode::EcdfPrime => {
                    let targets = &store
                        .get(req.instance.name())
                        .expect("bootstrapped above")
                        .targets;
                    let grid = hpo_time_grid(req.budget.limit())?;
                    cost_ecdf_prime(&run, targets, &grid, req.budget.clock())
                }
            }
        };
        let record = TraceRecord {
            candidate: req.candidate,
            config: req.config.clone(),
            instance: req.instance.name().to_string(),
            seed: req.seed,
            mode: req.mode,
            cost: cost.value,
            best_cost: run.best_cost,
            wall_time: started.elapsed().as_secs_f64(),
        };
        self.append_trace(&record)?;
        Ok(Evaluation { cost, run })
    }

    fn append_trace(&self, record: &TraceRecord) -> Result<(), HpoError> {
        let (Some(trace), Some(path)) = (&self.trace, &self.trace_path) else {
            return Ok(());
        };
        let line = serde_json::to_string(record).expect("trace records serialize");
        let mut w = trace.lock().expect("trace lock");
        writeln!(w, "{line}")
            .and_then(|_| w.flush())
            .map_err(|source| HpoError::Io {
                path: path.clone(),
                source,
            })
    }
}

#[derive(Clone, Debug)]
pub struct TuneOptions {
    pub mode: CostMode,
    /// Number of configurations evaluated, the default included.
    pub eval_budget: usize,
    pub seed: u64,
    /// Per-run budget `t_B`.
    pub budget: Budget,
    /// Seeds per (configuration, instance).
    pub replications: usize,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneOutcome {
    pub best: Configuration,
    pub best_index: usize,
    pub candidates: Vec<Configuration>,
    /// Mean cost per candidate over instances and replications.
    pub mean_costs: Vec<f64>,
    pub warning: Option<String>,
}

/// Seed used for the `index`-th training instance (and replication).
pub fn instance_seed(tuner_seed: u64, index: usize) -> u64 {
    // splitmix64 step
    let mut z = tuner_seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random search: the default configuration followed by uniform samples,
/// each evaluated on every training instance; returns the lowest mean cost
/// (first candidate on ties).
pub fn tune(
    evaluator: &Evaluator,
    instances: &[WcnfInstance],
    options: &TuneOptions,
) -> Result<TuneOutcome, HpoError> {
    if options.eval_budget == 0 {
        return Err(HpoError::Invalid(
            "evaluation budget must be at least 1".into(),
        ));
    }
    if instances.is_empty() {
        return Err(HpoError::Invalid("no training instances".into()));
    }
    let replications = options.replications.max(1);
    let space = evaluator.space();
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut candidates = vec![space.default_config()];
    while candidates.len() < options.eval_budget {
        candidates.push(space.sample(&mut rng));
    }

    let cells: Vec<(usize, u64)> = (0..instances.len())
        .flat_map(|i| (0..replications).map(move |r| (i, r)))
        .map(|(i, r)| (i, instance_seed(options.seed, i * replications + r)))
        .collect();

    if options.mode == CostMode::EcdfPrime {
        for &(i, seed) in cells.iter() {
            evaluator.ensure_bootstrapped(&instances[i], seed, options.budget)?;
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.max(1))
        .build()
        .map_err(|e| HpoError::Invalid(e.to_string()))?;

    let mut mean_costs = Vec::with_capacity(candidates.len());
    let mut any_feasible = false;
    for (idx, config) in candidates.iter().enumerate() {
        let results: Vec<Result<Evaluation, HpoError>> = pool.install(|| {
            use rayon::prelude::*;
            cells
                .par_iter()
                .map(|&(i, seed)| {
                    evaluator.evaluate(EvalRequest {
                        config,
                        instance: &instances[i],
                        seed,
                        budget: options.budget,
                        mode: options.mode,
                        candidate: Some(idx),
                    })
                })
                .collect()
        });
        let mut total = 0.0;
        for r in results {
            let eval = r?;
            any_feasible |= eval.run.best_cost.is_some();
            total += eval.cost.value;
        }
        mean_costs.push(total / cells.len() as f64);
    }

    if !any_feasible {
        let warning =
            "no evaluation found a feasible solution; returning the default configuration";
        log::warn!("{warning}");
        return Ok(TuneOutcome {
            best: candidates[0].clone(),
            best_index: 0,
            candidates,
            mean_costs,
            warning: Some(warning.to_string()),
        });
    }
    let best_index =
        mean_costs.iter().enumerate().fold(
            0,
            |best, (i, &c)| if c < mean_costs[best] { i } else { best },
        );
    Ok(TuneOutcome {
        best: candidates[best_index].clone(),
        best_index,
        candidates,
        mean_costs,
        warning: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{Trajectory, TrajectoryEvent};
    use crate::wcnf::parse_wcnf_str;

    fn run_with(events: &[(u64, u64)]) -> RunResult {
        let trajectory = Trajectory::from_events(
            events
                .iter()
                .map(|&(flips, cost)| TrajectoryEvent {
                    elapsed: 0.0,
                    flips,
                    cost,
                })
                .collect(),
        )
        .unwrap();
        RunResult {
            best_cost: trajectory.final_cost(),
            trajectory,
            best_assignment: None,
            total_flips: 0,
            total_elapsed: 0.0,
            event_assignments: Vec::new(),
        }
    }

    #[test]
    fn bootstrap_spacing() {
        let b = bootstrap_from_run("i", &run_with(&[(0, 8), (5, 3), (9, 0)]));
        assert_eq!(b.targets.values(), &[0.0, 2.0, 4.0, 6.0, 8.0]);
        assert_eq!((b.f_init_min, b.f_init_max), (Some(0), Some(8)));
        let b = bootstrap_from_run("i", &run_with(&[(0, 3)]));
        assert_eq!(b.targets.values(), &[3.0]);
        let b = bootstrap_from_run("i", &run_with(&[]));
        assert!(b.flagged && b.targets.is_empty());
    }

    #[test]
    fn time_grid_for_budget_100() {
        let g = hpo_time_grid(100.0).unwrap();
        assert_eq!(g.len(), HPO_GRID_POINTS);
        assert_eq!(g.points()[0], 0.0);
        assert_eq!(*g.points().last().unwrap(), 100.0 - 0.1);
        assert!(g.points().windows(2).all(|w| w[0] < w[1]));
        assert!(hpo_time_grid(0.1).is_err());
        assert!(hpo_time_grid(0.05).is_err());
    }

    #[test]
    fn bestf_examples() {
        assert_eq!(cost_bestf(&run_with(&[(0, 20), (3, 17)]), 40).value, 17.0);
        assert_eq!(cost_bestf(&run_with(&[]), 40).value, 41.0);
        assert_eq!(cost_bestf(&run_with(&[(0, 0)]), 40).value, 0.0);
    }

    #[test]
    fn ecdf_prime_examples() {
        let grid = hpo_time_grid(1000.0).unwrap();
        let targets = TargetSet::new("i", [0.0, 2.0, 4.0, 6.0, 8.0]);
        let c = cost_ecdf_prime(&run_with(&[]), &targets, &grid, Clock::Flips);
        assert_eq!(c.value, 0.0);
        let c = cost_ecdf_prime(&run_with(&[(0, 0)]), &targets, &grid, Clock::Flips);
        assert_eq!(c.value, -250.0);
        let c = cost_ecdf_prime(&run_with(&[(0, 5)]), &targets, &grid, Clock::Flips);
        assert_eq!(c.value, -100.0);
        let empty: TargetSet<f64> = TargetSet::new("i", []);
        let c = cost_ecdf_prime(&run_with(&[(0, 0)]), &empty, &grid, Clock::Flips);
        assert_eq!(c.value, 0.0);
    }

    #[test]
    fn target_updates() {
        let mut store = HpoTargetStore::in_memory();
        store
            .insert_bootstrap(
                "i",
                InstanceTargets {
                    targets: TargetSet::new("i", [2.0, 4.0]),
                    f_init_min: Some(2),
                    f_init_max: Some(4),
                    flagged: false,
                },
            )
            .unwrap();
        assert!(!store.update_targets("i", 3).unwrap());
        assert!(!store.update_targets("i", 2).unwrap());
        assert!(store.update_targets("i", 1).unwrap());
        assert_eq!(store.get("i").unwrap().targets.values(), &[1.0, 2.0, 4.0]);
    }

    #[test]
    fn fractional_minimum_target() {
        let mut store = HpoTargetStore::in_memory();
        store
            .insert_bootstrap(
                "i",
                InstanceTargets {
                    targets: TargetSet::new("i", [0.5, 4.0]),
                    f_init_min: Some(0),
                    f_init_max: Some(4),
                    flagged: false,
                },
            )
            .unwrap();
        // cost 0 is below 0.5 and adds a target
        assert!(store.update_targets("i", 0).unwrap());
        assert!(strictly_below(2, 2.5) && !strictly_below(3, 2.5) && !strictly_below(2, 2.0));
    }

    #[test]
    fn store_persists_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("targets.json");
        {
            let mut store = HpoTargetStore::open(&path).unwrap();
            store.update_targets("a", 7).unwrap();
            store.update_targets("a", 3).unwrap();
        }
        let store = HpoTargetStore::open(&path).unwrap();
        assert_eq!(store.get("a").unwrap().targets.values(), &[3.0, 7.0]);
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert!(json.get("a").is_some());
    }

    #[test]
    fn space_defaults_and_parsing() {
        let space = ParamSpace::solver_default();
        space.validate().unwrap();
        let d = space.default_config();
        space.check(&d).unwrap();
        assert_eq!(
            to_solver_config(&d, &SolverConfig::default()).unwrap(),
            SolverConfig::default()
        );
        let c = space
            .parse_assignments(&["bms_size=3", "restart_flips=1000"])
            .unwrap();
        let sc = to_solver_config(&c, &SolverConfig::default()).unwrap();
        assert_eq!(sc.bms_size, 3);
        assert_eq!(sc.restart_flips, Some(1000));
        assert!(matches!(
            space.parse_assignments(&["colour=3"]),
            Err(HpoError::Config(ConfigError::UnknownParameter(_)))
        ));
        assert!(matches!(
            space.parse_assignments(&["bms_size=1000"]),
            Err(HpoError::Domain { .. })
        ));
        assert!(matches!(
            space.parse_assignments(&["restart_flips=7"]),
            Err(HpoError::Domain { .. })
        ));
    }

    #[test]
    fn space_file_round_trip() {
        let space = ParamSpace::solver_default();
        let dir = tempfile::tempdir().unwrap();
        let json = dir.path().join("space.json");
        fs::write(&json, serde_json::to_string(&space).unwrap()).unwrap();
        assert_eq!(ParamSpace::load(&json).unwrap(), space);
        let toml_path = dir.path().join("space.toml");
        fs::write(
            &toml_path,
            "[[param]]\nname = \"bms_size\"\nkind = \"integer\"\nlower = 1\nupper = 50\ndefault = 15\n\n\
             [[param]]\nname = \"random_walk_prob\"\nkind = \"real\"\nlower = 0.0\nupper = 0.5\ndefault = 0.15\n",
        )
        .unwrap();
        let s = ParamSpace::load(&toml_path).unwrap();
        assert_eq!(s.params.len(), 2);
        let bad = ParamSpace::new(vec![ParamSpec {
            name: "x".into(),
            kind: ParamKind::Integer {
                lower: 5,
                upper: 1,
                default: 3,
            },
        }]);
        assert!(bad.is_err());
    }

    #[test]
    fn evaluate_unit_soft_instance() {
        let inst = parse_wcnf_str("5 1 0\n", "unit").unwrap();
        let ev = Evaluator::new(ParamSpace::solver_default(), HpoTargetStore::in_memory());
        let config = ev.space().default_config();
        let req = EvalRequest {
            config: &config,
            instance: &inst,
            seed: 1,
            budget: Budget::Flips(100),
            mode: CostMode::BestF,
            candidate: None,
        };
        assert_eq!(ev.evaluate(req).unwrap().cost.value, 0.0);
        let r = ev
            .evaluate(EvalRequest {
                mode: CostMode::EcdfPrime,
                ..req
            })
            .unwrap();
        assert!(r.cost.value < 0.0);
        let mut bad = config.clone();
        bad.insert("colour".into(), ParamValue::Int(1));
        assert!(ev
            .evaluate(EvalRequest {
                config: &bad,
                ..req
            })
            .is_err());
    }

    #[test]
    fn tune_single_candidate_returns_default() {
        let inst = parse_wcnf_str("h 1 2 0\n3 -1 0\n2 -2 0\n", "x").unwrap();
        let ev = Evaluator::new(ParamSpace::solver_default(), HpoTargetStore::in_memory());
        let out = tune(
            &ev,
            &[inst],
            &TuneOptions {
                mode: CostMode::BestF,
                eval_budget: 1,
                seed: 3,
                budget: Budget::Flips(100),
                replications: 1,
                threads: 1,
            },
        )
        .unwrap();
        assert_eq!(out.best, ev.space().default_config());
        assert_eq!(out.mean_costs.len(), 1);
    }

    #[test]
    fn tune_all_infeasible_warns() {
        let inst = parse_wcnf_str("h 1 0\nh -1 0\n3 2 0\n", "x").unwrap();
        let ev = Evaluator::new(ParamSpace::solver_default(), HpoTargetStore::in_memory());
        let out = tune(
            &ev,
            &[inst],
            &TuneOptions {
                mode: CostMode::BestF,
                eval_budget: 4,
                seed: 3,
                budget: Budget::Flips(50),
                replications: 1,
                threads: 1,
            },
        )
        .unwrap();
        assert!(out.warning.is_some());
        assert_eq!(out.best_index, 0);
    }
}
