//! Fixed-budget and anytime assessment of solver runs.
//!
//! Fixed-budget metrics look only at the best cost at the end of a run: the
//! relative score against the best cost any run reached, and win counts.
//! Anytime metrics read the whole trajectory: at each time of a grid, the
//! ECDF value is the fraction of an instance's targets that are not better
//! than the run's best-so-far cost. The mean over the grid is the AUC.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{Clock, Trajectory};

#[derive(Error, Debug)]
pub enum AssessError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("curves do not share one time grid")]
    GridMismatch,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// A quality threshold that a cost either reaches or not.
///
/// Thresholds are ordered so that a larger threshold is reached by at least
/// the costs that reach a smaller one.
pub trait Threshold: Copy + std::fmt::Debug {
    /// True iff `self >= cost`.
    fn reached_by(self, cost: u64) -> bool;
    fn order(&self, other: &Self) -> Ordering;
}

impl Threshold for u64 {
    fn reached_by(self, cost: u64) -> bool {
        self >= cost
    }

    fn order(&self, other: &Self) -> Ordering {
        self.cmp(other)
    }
}

impl Threshold for f64 {
    /// Exact comparison against an integer cost, also beyond 2^53.
    fn reached_by(self, cost: u64) -> bool {
        if self.is_nan() || self < 0.0 {
            return false;
        }
        if self >= 18_446_744_073_709_551_616.0 {
            return true;
        }
        // floor of a finite f64 below 2^64 converts to u64 exactly
        (self.floor() as u64) >= cost
    }

    fn order(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
}

/// Distinct target values of one instance, sorted ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSet<T = u64> {
    pub instance_id: String,
    targets: Vec<T>,
}

impl<T: Threshold> TargetSet<T> {
    pub fn new(instance_id: impl Into<String>, values: impl IntoIterator<Item = T>) -> Self {
        let mut targets: Vec<T> = values.into_iter().collect();
        targets.sort_by(|a, b| a.order(b));
        targets.dedup_by(|a, b| a.order(b) == Ordering::Equal);
        TargetSet {
            instance_id: instance_id.into(),
            targets,
        }
    }

    pub fn values(&self) -> &[T] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Number of targets `phi` with `phi >= best`; zero without a solution.
    pub fn hits(&self, best: Option<u64>) -> usize {
        match best {
            None => 0,
            Some(cost) => {
                self.targets.len() - self.targets.partition_point(|t| !t.reached_by(cost))
            }
        }
    }

    /// Adds a value; returns whether it was new.
    pub fn insert(&mut self, value: T) -> bool {
        match self.targets.binary_search_by(|t| t.order(&value)) {
            Ok(_) => false,
            Err(pos) => {
                self.targets.insert(pos, value);
                true
            }
        }
    }
}

/// Union of all costs visited by the given runs on one instance.
pub fn build_targets<'a>(
    instance_id: &str,
    runs: impl IntoIterator<Item = &'a Trajectory>,
) -> TargetSet<u64> {
    TargetSet::new(
        instance_id,
        runs.into_iter()
            .flat_map(|t| t.events().iter().map(|e| e.cost)),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridScale {
    Log,
    Linear,
    /// Times `t_max - tau` for log-spaced `tau`; dense near `t_max`.
    ReflectedLog,
}

impl std::str::FromStr for GridScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log" => Ok(GridScale::Log),
            "linear" => Ok(GridScale::Linear),
            _ => Err(format!("unknown grid scale '{s}' (expected log|linear)")),
        }
    }
}

/// Strictly increasing evaluation times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
    scale: GridScale,
}

impl TimeGrid {
    /// Validates an explicit list of points.
    pub fn from_points(points: Vec<f64>, scale: GridScale) -> Result<Self, AssessError> {
        if points.is_empty() {
            return Err(AssessError::InvalidGrid("no points".into()));
        }
        if points.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(AssessError::InvalidGrid(
                "points must be finite and >= 0".into(),
            ));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(AssessError::InvalidGrid(
                "points must be strictly increasing".into(),
            ));
        }
        Ok(TimeGrid { points, scale })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn scale(&self) -> GridScale {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn t_min(&self) -> f64 {
        self.points[0]
    }

    pub fn t_max(&self) -> f64 {
        *self.points.last().expect("grids are non-empty")
    }
}

/// `k` points from `t_min` to `t_max` inclusive, spaced on the given scale.
pub fn make_time_grid(
    t_min: f64,
    t_max: f64,
    k: usize,
    scale: GridScale,
) -> Result<TimeGrid, AssessError> {
    if k < 2 {
        return Err(AssessError::InvalidGrid(format!(
            "need at least 2 points, got {k}"
        )));
    }
    if !(t_min.is_finite() && t_max.is_finite() && t_min < t_max) {
        return Err(AssessError::InvalidGrid(format!(
            "need t_min < t_max, got [{t_min}, {t_max}]"
        )));
    }
    let last = (k - 1) as f64;
    let points: Vec<f64> = match scale {
        GridScale::Log => {
            if t_min <= 0.0 {
                return Err(AssessError::InvalidGrid(format!(
                    "log scale needs t_min > 0, got {t_min}"
                )));
            }
            let ratio = t_max / t_min;
            (0..k)
                .map(|j| match j {
                    0 => t_min,
                    j if j == k - 1 => t_max,
                    j => t_min * ratio.powf(j as f64 / last),
                })
                .collect()
        }
        GridScale::Linear => {
            if t_min < 0.0 {
                return Err(AssessError::InvalidGrid("negative times".into()));
            }
            (0..k)
                .map(|j| match j {
                    0 => t_min,
                    j if j == k - 1 => t_max,
                    j => t_min + (t_max - t_min) * j as f64 / last,
                })
                .collect()
        }
        GridScale::ReflectedLog => {
            let taus = make_time_grid(t_min, t_max, k, GridScale::Log)?;
            let mut pts: Vec<f64> = taus
                .points
                .iter()
                .map(|tau| (t_max - tau).max(0.0))
                .collect();
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            pts
        }
    };
    TimeGrid::from_points(points, scale)
}

/// Best-so-far cost of a run at time `t` on the given clock.
pub fn best_cost_at(trajectory: &Trajectory, t: f64, clock: Clock) -> Option<u64> {
    trajectory.best_cost_at(t, clock)
}

/// Number of targets reached by time `t`.
pub fn hits_at<T: Threshold>(
    trajectory: &Trajectory,
    targets: &TargetSet<T>,
    t: f64,
    clock: Clock,
) -> usize {
    targets.hits(trajectory.best_cost_at(t, clock))
}

/// Fraction of targets reached by time `t`; 0 without targets or solutions.
pub fn ecdf_at<T: Threshold>(
    trajectory: &Trajectory,
    targets: &TargetSet<T>,
    t: f64,
    clock: Clock,
) -> f64 {
    if targets.is_empty() {
        return 0.0;
    }
    hits_at(trajectory, targets, t, clock) as f64 / targets.len() as f64
}

/// ECDF values of one run over a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EcdfCurve {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    /// Raw hit counts per grid point.
    pub hits: Vec<usize>,
    pub target_count: usize,
}

impl EcdfCurve {
    pub fn auc(&self) -> f64 {
        auc(self)
    }
}

pub fn ecdf_curve<T: Threshold>(
    trajectory: &Trajectory,
    targets: &TargetSet<T>,
    grid: &TimeGrid,
    clock: Clock,
) -> EcdfCurve {
    let n = targets.len();
    let hits: Vec<usize> = grid
        .points()
        .iter()
        .map(|&t| hits_at(trajectory, targets, t, clock))
        .collect();
    let values = hits
        .iter()
        .map(|&h| if n == 0 { 0.0 } else { h as f64 / n as f64 })
        .collect();
    EcdfCurve {
        grid: grid.clone(),
        values,
        hits,
        target_count: n,
    }
}

/// Mean ECDF value over the grid points.
pub fn auc(curve: &EcdfCurve) -> f64 {
    if curve.values.is_empty() {
        return 0.0;
    }
    curve.values.iter().sum::<f64>() / curve.values.len() as f64
}

/// Pointwise statistics over many run curves sharing one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateCurve {
    pub grid: TimeGrid,
    /// Flat mean over all curves.
    pub mean: Vec<f64>,
    /// 1.96 * sample sd / sqrt(N); zero for a single curve.
    pub ci_half_width: Vec<f64>,
    /// Total hits over total targets, pooling every (run, target) pair.
    pub pooled: Vec<f64>,
    pub count: usize,
}

impl AggregateCurve {
    pub fn auc(&self) -> f64 {
        if self.mean.is_empty() {
            0.0
        } else {
            self.mean.iter().sum::<f64>() / self.mean.len() as f64
        }
    }
}

pub fn aggregate_curves(curves: &[EcdfCurve]) -> Result<AggregateCurve, AssessError> {
    let first = curves
        .first()
        .ok_or_else(|| AssessError::Precondition("no curves to aggregate".into()))?;
    if curves.iter().any(|c| c.grid != first.grid) {
        return Err(AssessError::GridMismatch);
    }
    let k = first.grid.len();
    let n = curves.len() as f64;
    let mut mean = vec![0.0; k];
    let mut ci = vec![0.0; k];
    let mut pooled = vec![0.0; k];
    let total_targets: usize = curves.iter().map(|c| c.target_count).sum();
    for j in 0..k {
        let m = curves.iter().map(|c| c.values[j]).sum::<f64>() / n;
        mean[j] = m;
        if curves.len() > 1 {
            let var = curves
                .iter()
                .map(|c| (c.values[j] - m).powi(2))
                .sum::<f64>()
                / (n - 1.0);
            ci[j] = 1.96 * var.sqrt() / n.sqrt();
        }
        if total_targets > 0 {
            let hits: usize = curves.iter().map(|c| c.hits[j]).sum();
            pooled[j] = hits as f64 / total_targets as f64;
        }
    }
    Ok(AggregateCurve {
        grid: first.grid.clone(),
        mean,
        ci_half_width: ci,
        pooled,
        count: curves.len(),
    })
}

/// AUC aggregated by first averaging each instance's runs, then instances.
/// Instances without runs are skipped; `None` if nothing remains.
pub fn aggregate_auc(per_instance_runs: &[Vec<f64>]) -> Option<f64> {
    let means: Vec<f64> = per_instance_runs
        .iter()
        .filter(|runs| !runs.is_empty())
        .map(|runs| runs.iter().sum::<f64>() / runs.len() as f64)
        .collect();
    mean(&means)
}

fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// `(best + 1) / (found + 1)`, or 0 when nothing feasible was found.
pub fn score(best_overall: u64, found: Option<u64>) -> Result<f64, AssessError> {
    match found {
        None => Ok(0.0),
        Some(found) if found < best_overall => Err(AssessError::Precondition(format!(
            "found cost {found} is below the best overall cost {best_overall}"
        ))),
        Some(found) => Ok((best_overall as f64 + 1.0) / (found as f64 + 1.0)),
    }
}

/// Mean of per-instance scores; `None` entries (instances where no solver
/// found a feasible solution) are excluded.
pub fn score_aggregate(scores: &[Option<f64>]) -> Option<f64> {
    let kept: Vec<f64> = scores.iter().flatten().copied().collect();
    mean(&kept)
}

/// Wins of one solver on one track.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wins {
    /// Instances where one of the solver's runs matched the best of all runs.
    pub best_of_runs: usize,
    /// Instances where the solver's mean cost was the best mean.
    pub avg_of_runs: usize,
}

/// Best cost of each run (`None` = infeasible), indexed `[solver][instance][run]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CostMatrix {
    pub solvers: Vec<String>,
    pub instances: Vec<String>,
    pub runs: Vec<Vec<Vec<Option<u64>>>>,
}

/// Mean over feasible runs as an exact fraction `(sum, count)`.
fn feasible_mean(runs: &[Option<u64>]) -> Option<(u128, u128)> {
    let feasible: Vec<u64> = runs.iter().flatten().copied().collect();
    if feasible.is_empty() {
        None
    } else {
        Some((
            feasible.iter().map(|&c| u128::from(c)).sum(),
            feasible.len() as u128,
        ))
    }
}

fn fraction_cmp(a: (u128, u128), b: (u128, u128)) -> Ordering {
    // sums of u64 values times run counts stay far below u128::MAX in practice
    (a.0 * b.1).cmp(&(b.0 * a.1))
}

/// Win counts per solver over the given instance indices.
///
/// Ties award a win to every tied solver; infeasible runs count as +inf and
/// a solver with no feasible run never wins.
pub fn win_tables(matrix: &CostMatrix, instances: &[usize]) -> Vec<Wins> {
    let mut wins = vec![Wins::default(); matrix.solvers.len()];
    for &i in instances {
        let best_each: Vec<Option<u64>> = matrix
            .runs
            .iter()
            .map(|per_inst| per_inst[i].iter().flatten().copied().min())
            .collect();
        if let Some(best) = best_each.iter().flatten().min() {
            for (s, b) in best_each.iter().enumerate() {
                if *b == Some(*best) {
                    wins[s].best_of_runs += 1;
                }
            }
        }
        let means: Vec<Option<(u128, u128)>> = matrix
            .runs
            .iter()
            .map(|per_inst| feasible_mean(&per_inst[i]))
            .collect();
        let best_mean = means
            .iter()
            .flatten()
            .copied()
            .min_by(|a, b| fraction_cmp(*a, *b));
        if let Some(best_mean) = best_mean {
            for (s, m) in means.iter().enumerate() {
                if let Some(m) = m {
                    if fraction_cmp(*m, best_mean) == Ordering::Equal {
                        wins[s].avg_of_runs += 1;
                    }
                }
            }
        }
    }
    wins
}

/// One run as seen by the assessment.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub solver: String,
    pub instance: String,
    pub track: String,
    pub trajectory: Trajectory,
}

impl RunOutcome {
    pub fn best_cost(&self) -> Option<u64> {
        self.trajectory.final_cost()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackSummary {
    pub track: String,
    pub instance_count: usize,
    /// Per solver, in `Assessment::solvers` order.
    pub wins: Vec<Wins>,
    pub score: Vec<Option<f64>>,
    pub scored_instances: Vec<usize>,
    /// Run mean, then instance mean.
    pub auc: Vec<Option<f64>>,
    /// Flat mean over all (run, instance) pairs.
    pub auc_flat: Vec<Option<f64>>,
}

/// Everything computed from a set of runs.
#[derive(Clone, Debug, PartialEq)]
pub struct Assessment {
    pub clock: Clock,
    pub grid: TimeGrid,
    pub solvers: Vec<String>,
    pub instances: Vec<String>,
    pub targets: Vec<TargetSet<u64>>,
    /// `[solver][instance]` run-averaged score; `None` when the solver has no
    /// runs on the instance or no solver found a feasible solution there.
    pub scores: Vec<Vec<Option<f64>>>,
    /// `[solver][instance]` run-averaged AUC.
    pub aucs: Vec<Vec<Option<f64>>>,
    pub tracks: Vec<TrackSummary>,
    /// Per solver, over all of its runs on all instances.
    pub curves: Vec<Option<AggregateCurve>>,
}

/// Assesses a collection of runs on one grid.
pub fn assess(
    runs: &[RunOutcome],
    grid: &TimeGrid,
    clock: Clock,
) -> Result<Assessment, AssessError> {
    let solvers: Vec<String> = runs
        .iter()
        .map(|r| r.solver.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut track_of: BTreeMap<String, String> = BTreeMap::new();
    for r in runs {
        match track_of.get(&r.instance) {
            Some(t) if *t != r.track => {
                return Err(AssessError::Precondition(format!(
                    "instance '{}' appears in tracks '{}' and '{}'",
                    r.instance, t, r.track
                )))
            }
            _ => {
                track_of.insert(r.instance.clone(), r.track.clone());
            }
        }
    }
    let instances: Vec<String> = track_of.keys().cloned().collect();
    let s_idx: BTreeMap<&str, usize> = solvers
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let i_idx: BTreeMap<&str, usize> = instances
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();

    // runs grouped by [solver][instance], in input order
    let mut grouped: Vec<Vec<Vec<&RunOutcome>>> =
        vec![vec![Vec::new(); instances.len()]; solvers.len()];
    for r in runs {
        grouped[s_idx[r.solver.as_str()]][i_idx[r.instance.as_str()]].push(r);
    }

    let targets: Vec<TargetSet<u64>> = instances
        .iter()
        .enumerate()
        .map(|(i, id)| {
            build_targets(
                id,
                grouped
                    .iter()
                    .flat_map(|per| per[i].iter().map(|r| &r.trajectory)),
            )
        })
        .collect();

    let matrix = CostMatrix {
        solvers: solvers.clone(),
        instances: instances.clone(),
        runs: grouped
            .iter()
            .map(|per| {
                per.iter()
                    .map(|rs| rs.iter().map(|r| r.best_cost()).collect())
                    .collect()
            })
            .collect(),
    };
    let best_overall: Vec<Option<u64>> = (0..instances.len())
        .map(|i| {
            matrix
                .runs
                .iter()
                .flat_map(|per| per[i].iter().flatten().copied())
                .min()
        })
        .collect();

    let mut scores = vec![vec![None; instances.len()]; solvers.len()];
    let mut aucs = vec![vec![None; instances.len()]; solvers.len()];
    let mut run_aucs: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); instances.len()]; solvers.len()];
    let mut curves: Vec<Vec<EcdfCurve>> = vec![Vec::new(); solvers.len()];
    for s in 0..solvers.len() {
        for i in 0..instances.len() {
            let rs = &grouped[s][i];
            if rs.is_empty() {
                continue;
            }
            if let Some(best) = best_overall[i] {
                let mut total = 0.0;
                for r in rs {
                    total += score(best, r.best_cost())?;
                }
                scores[s][i] = Some(total / rs.len() as f64);
            }
            for r in rs {
                let curve = ecdf_curve(&r.trajectory, &targets[i], grid, clock);
                run_aucs[s][i].push(curve.auc());
                curves[s].push(curve);
            }
            aucs[s][i] = mean(&run_aucs[s][i]);
        }
    }

    let track_names: Vec<String> = track_of
        .values()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut tracks = Vec::new();
    for track in track_names {
        let members: Vec<usize> = (0..instances.len())
            .filter(|&i| track_of[&instances[i]] == track)
            .collect();
        let wins = win_tables(&matrix, &members);
        let mut score_agg = Vec::new();
        let mut scored = Vec::new();
        let mut auc_agg = Vec::new();
        let mut auc_flat = Vec::new();
        for s in 0..solvers.len() {
            let sc: Vec<Option<f64>> = members.iter().map(|&i| scores[s][i]).collect();
            scored.push(sc.iter().flatten().count());
            score_agg.push(score_aggregate(&sc));
            let per_inst: Vec<Vec<f64>> = members.iter().map(|&i| run_aucs[s][i].clone()).collect();
            auc_agg.push(aggregate_auc(&per_inst));
            let flat: Vec<f64> = per_inst.into_iter().flatten().collect();
            auc_flat.push(mean(&flat));
        }
        tracks.push(TrackSummary {
            track,
            instance_count: members.len(),
            wins,
            score: score_agg,
            scored_instances: scored,
            auc: auc_agg,
            auc_flat,
        });
    }

    let curves = curves
        .iter()
        .map(|cs| {
            if cs.is_empty() {
                Ok(None)
            } else {
                aggregate_curves(cs).map(Some)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(Assessment {
        clock,
        grid: grid.clone(),
        solvers,
        instances,
        targets,
        scores,
        aucs,
        tracks,
        curves,
    })
}

/// File-name-safe form of a solver name.
pub fn sanitize_name(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), AssessError> {
    let csv_err = |source| AssessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| AssessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn matrix_rows(a: &Assessment, m: &[Vec<Option<f64>>]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["solver".to_string()];
    header.extend(a.instances.iter().cloned());
    let rows = a
        .solvers
        .iter()
        .zip(m)
        .map(|(s, vals)| {
            let mut row = vec![s.clone()];
            row.extend(vals.iter().map(|v| cell(*v)));
            row
        })
        .collect();
    (header, rows)
}

/// Writes all report CSVs into `dir` and returns their paths.
///
/// - `heat_scores.csv`, `heat_auc.csv`: solver x instance matrices
/// - `scores.csv`, `auc.csv`, `wins.csv`: per-track summaries
/// - `curve_<solver>.csv`: aggregated ECDF curve per solver
pub fn emit_reports(a: &Assessment, dir: &Path) -> Result<Vec<PathBuf>, AssessError> {
    fs::create_dir_all(dir).map_err(|source| AssessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    let mut emit = |name: &str, header: Vec<String>, rows: Vec<Vec<String>>| {
        let path = dir.join(name);
        write_csv(&path, &header, &rows)?;
        written.push(path);
        Ok::<(), AssessError>(())
    };

    let (h, rows) = matrix_rows(a, &a.scores);
    emit("heat_scores.csv", h, rows)?;
    let (h, rows) = matrix_rows(a, &a.aucs);
    emit("heat_auc.csv", h, rows)?;

    let strs = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut score_rows = Vec::new();
    let mut auc_rows = Vec::new();
    let mut win_rows = Vec::new();
    for t in &a.tracks {
        for (s, solver) in a.solvers.iter().enumerate() {
            score_rows.push(vec![
                t.track.clone(),
                solver.clone(),
                cell(t.score[s]),
                t.scored_instances[s].to_string(),
            ]);
            auc_rows.push(vec![
                t.track.clone(),
                solver.clone(),
                cell(t.auc[s]),
                cell(t.auc_flat[s]),
            ]);
            win_rows.push(vec![
                t.track.clone(),
                solver.clone(),
                t.wins[s].best_of_runs.to_string(),
                t.wins[s].avg_of_runs.to_string(),
                t.instance_count.to_string(),
            ]);
        }
    }
    emit(
        "scores.csv",
        strs(&["track", "solver", "score", "instances"]),
        score_rows,
    )?;
    emit(
        "auc.csv",
        strs(&["track", "solver", "auc", "auc_flat"]),
        auc_rows,
    )?;
    emit(
        "wins.csv",
        strs(&["track", "solver", "wins_best", "wins_avg", "instances"]),
        win_rows,
    )?;

    for (solver, curve) in a.solvers.iter().zip(&a.curves) {
        let Some(curve) = curve else { continue };
        let rows = (0..curve.grid.len())
            .map(|j| {
                vec![
                    curve.grid.points()[j].to_string(),
                    curve.mean[j].to_string(),
                    curve.ci_half_width[j].to_string(),
                    curve.pooled[j].to_string(),
                ]
            })
            .collect();
        emit(
            &format!("curve_{}.csv", sanitize_name(solver)),
            strs(&["time", "mean", "ci_half_width", "pooled"]),
            rows,
        )?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::TrajectoryEvent;

    fn traj(events: &[(f64, u64)]) -> Trajectory {
        Trajectory::from_events(
            events
                .iter()
                .enumerate()
                .map(|(i, &(t, c))| TrajectoryEvent {
                    elapsed: t,
                    flips: i as u64,
                    cost: c,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn targets_are_union_of_costs() {
        let a = traj(&[(1.0, 9), (2.0, 5), (3.0, 3)]);
        let b = traj(&[(1.0, 7), (2.0, 5)]);
        assert_eq!(build_targets("i", [&a, &b]).values(), &[3, 5, 7, 9]);
        assert_eq!(build_targets("i", [&traj(&[(1.0, 4)])]).values(), &[4]);
        let empty = Trajectory::new();
        assert!(build_targets("i", [&empty]).is_empty());
    }

    #[test]
    fn grids() {
        let g = make_time_grid(1.0, 100.0, 3, GridScale::Log).unwrap();
        assert_eq!(g.points(), &[1.0, 10.0, 100.0]);
        let g = make_time_grid(0.1, 300.0, 100, GridScale::Log).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g.t_min(), 0.1);
        assert_eq!(g.t_max(), 300.0);
        let g = make_time_grid(1.0, 3.0, 3, GridScale::Linear).unwrap();
        assert_eq!(g.points(), &[1.0, 2.0, 3.0]);
        assert!(make_time_grid(0.0, 3.0, 3, GridScale::Log).is_err());
        assert!(make_time_grid(1.0, 3.0, 1, GridScale::Log).is_err());
        assert!(make_time_grid(3.0, 1.0, 3, GridScale::Linear).is_err());
    }

    #[test]
    fn ecdf_examples() {
        let targets = TargetSet::new("i", [3u64, 5, 8, 10]);
        let t8 = traj(&[(0.0, 8)]);
        assert_eq!(ecdf_at(&t8, &targets, 1.0, Clock::Seconds), 0.5);
        let t3 = traj(&[(0.0, 3)]);
        assert_eq!(ecdf_at(&t3, &targets, 1.0, Clock::Seconds), 1.0);
        assert_eq!(
            ecdf_at(&Trajectory::new(), &targets, 1.0, Clock::Seconds),
            0.0
        );
        let none: TargetSet<u64> = TargetSet::new("i", []);
        assert_eq!(ecdf_at(&t3, &none, 1.0, Clock::Seconds), 0.0);
    }

    #[test]
    fn auc_examples() {
        let grid = TimeGrid::from_points(vec![1.0, 2.0, 3.0, 4.0], GridScale::Linear).unwrap();
        let curve = EcdfCurve {
            grid: grid.clone(),
            values: vec![0.0, 0.0, 0.5, 1.0],
            hits: vec![0, 0, 1, 2],
            target_count: 2,
        };
        assert_eq!(auc(&curve), 0.375);
        let targets = TargetSet::new("i", [1u64, 2]);
        let c = ecdf_curve(&traj(&[(0.0, 1)]), &targets, &grid, Clock::Seconds);
        assert_eq!(c.auc(), 1.0);
        let c = ecdf_curve(&Trajectory::new(), &targets, &grid, Clock::Seconds);
        assert_eq!(c.auc(), 0.0);
    }

    #[test]
    fn aggregation() {
        let grid = TimeGrid::from_points(vec![1.0, 2.0], GridScale::Linear).unwrap();
        let mk = |v: Vec<f64>| EcdfCurve {
            grid: grid.clone(),
            hits: v.iter().map(|x| *x as usize).collect(),
            values: v,
            target_count: 1,
        };
        let a = mk(vec![0.0, 1.0]);
        let b = mk(vec![1.0, 1.0]);
        let agg = aggregate_curves(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(agg.mean, a.values);
        assert_eq!(agg.ci_half_width, vec![0.0, 0.0]);
        let agg = aggregate_curves(&[a.clone(), b]).unwrap();
        assert_eq!(agg.mean, vec![0.5, 1.0]);
        assert_eq!(agg.pooled, vec![0.5, 1.0]);

        let other = TimeGrid::from_points(vec![1.0, 3.0], GridScale::Linear).unwrap();
        let c = EcdfCurve {
            grid: other,
            ..a.clone()
        };
        assert!(matches!(
            aggregate_curves(&[a, c]),
            Err(AssessError::GridMismatch)
        ));
    }

    #[test]
    fn score_examples() {
        assert_eq!(score(9, Some(19)).unwrap(), 0.5);
        assert_eq!(score(7, Some(7)).unwrap(), 1.0);
        assert_eq!(score(7, None).unwrap(), 0.0);
        assert!(score(7, Some(6)).is_err());
    }

    #[test]
    fn score_aggregate_examples() {
        assert_eq!(score_aggregate(&[Some(1.0), Some(0.5)]), Some(0.75));
        assert_eq!(score_aggregate(&[Some(1.0), None, Some(0.5)]), Some(0.75));
        assert_eq!(score_aggregate(&[None]), None);
    }

    fn matrix(runs: Vec<Vec<Vec<Option<u64>>>>) -> CostMatrix {
        CostMatrix {
            solvers: (0..runs.len()).map(|s| format!("s{s}")).collect(),
            instances: (0..runs[0].len()).map(|i| format!("i{i}")).collect(),
            runs,
        }
    }

    #[test]
    fn wins_dominance() {
        let m = matrix(vec![
            vec![vec![Some(1), Some(1)]; 5],
            vec![vec![Some(2), Some(3)]; 5],
        ]);
        let w = win_tables(&m, &(0..5).collect::<Vec<_>>());
        assert_eq!(
            w[0],
            Wins {
                best_of_runs: 5,
                avg_of_runs: 5
            }
        );
        assert_eq!(
            w[1],
            Wins {
                best_of_runs: 0,
                avg_of_runs: 0
            }
        );
    }

    #[test]
    fn wins_ties_and_infeasible() {
        // both reach 3 once; s0 mean 4, s1 mean 4.5 -> only s0 wins on average
        let m = matrix(vec![
            vec![vec![Some(3), Some(5)]],
            vec![vec![Some(3), Some(6)]],
            vec![vec![None, None]],
        ]);
        let w = win_tables(&m, &[0]);
        assert_eq!(
            w[0],
            Wins {
                best_of_runs: 1,
                avg_of_runs: 1
            }
        );
        assert_eq!(
            w[1],
            Wins {
                best_of_runs: 1,
                avg_of_runs: 0
            }
        );
        assert_eq!(
            w[2],
            Wins {
                best_of_runs: 0,
                avg_of_runs: 0
            }
        );
        // infeasible runs are left out of a mean when some run is feasible
        let m = matrix(vec![
            vec![vec![Some(4), None]],
            vec![vec![Some(4), Some(5)]],
        ]);
        let w = win_tables(&m, &[0]);
        assert_eq!(w[0].avg_of_runs, 1);
        assert_eq!(w[1].avg_of_runs, 0);
        // nobody feasible: nobody wins
        let m = matrix(vec![vec![vec![None]], vec![vec![None]]]);
        assert_eq!(win_tables(&m, &[0]), vec![Wins::default(); 2]);
    }

    #[test]
    fn f64_thresholds_compare_exactly() {
        assert!(2.0f64.reached_by(2));
        assert!(2.75f64.reached_by(2));
        assert!(!1.99f64.reached_by(2));
        assert!(!(-0.5f64).reached_by(0));
        // 2^53 + 1 is not representable; the threshold 2^53 must not reach it
        let big = 9_007_199_254_740_992.0f64;
        assert!(!big.reached_by(9_007_199_254_740_993));
        assert!(big.reached_by(9_007_199_254_740_992));
        assert!(1e30f64.reached_by(u64::MAX));
    }

    #[test]
    fn target_set_insert_keeps_order() {
        let mut t = TargetSet::new("i", [4u64, 2]);
        assert!(t.insert(1));
        assert!(!t.insert(2));
        assert!(t.insert(3));
        assert_eq!(t.values(), &[1, 2, 3, 4]);
    }

    #[test]
    fn assess_hand_computed() {
        // two solvers, one instance; targets {2, 5, 9}
        let grid = TimeGrid::from_points(vec![1.0, 10.0], GridScale::Log).unwrap();
        let runs = vec![
            RunOutcome {
                solver: "a".into(),
                instance: "x".into(),
                track: "t".into(),
                trajectory: traj(&[(0.5, 9), (5.0, 2)]),
            },
            RunOutcome {
                solver: "b".into(),
                instance: "x".into(),
                track: "t".into(),
                trajectory: traj(&[(2.0, 5)]),
            },
        ];
        let a = assess(&runs, &grid, Clock::Seconds).unwrap();
        assert_eq!(a.targets[0].values(), &[2, 5, 9]);
        // a: t=1 -> cost 9 -> 1/3; t=10 -> cost 2 -> 3/3
        assert_eq!(a.aucs[0][0], Some((1.0 / 3.0 + 1.0) / 2.0));
        // b: t=1 -> none -> 0; t=10 -> cost 5 -> 2/3
        assert_eq!(a.aucs[1][0], Some((0.0 + 2.0 / 3.0) / 2.0));
        assert_eq!(a.scores[0][0], Some(1.0));
        assert_eq!(a.scores[1][0], Some(0.5));
        assert_eq!(
            a.tracks[0].wins[0],
            Wins {
                best_of_runs: 1,
                avg_of_runs: 1
            }
        );
        assert_eq!(a.tracks[0].wins[1], Wins::default());
    }
}
