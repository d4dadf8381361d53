//! Clause-weighting stochastic local search for (weighted) partial MaxSAT.
//!
//! Every clause carries a dynamic weight starting at 1. A variable's score is
//! the pair (hard, soft) of dynamic weight that flipping it would satisfy
//! minus the weight it would falsify, compared lexicographically. While some
//! variable has a positive score the search descends greedily, choosing among
//! a bounded sample of candidates. At local optima the weights of falsified
//! clauses grow (or, with a small probability, satisfied soft weights are
//! smoothed down) and a variable of a random falsified clause is flipped.
//!
//! The anytime trajectory records every improvement of the best feasible
//! cost together with the elapsed time and flip count.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wcnf::{Assignment, WcnfInstance};

/// One parameter setting of the solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub seed: u64,
    /// Probability of smoothing instead of increasing weights at a local optimum.
    pub smooth_prob: f64,
    pub hard_weight_inc: u64,
    pub soft_weight_cap: u64,
    /// Number of candidates sampled (with replacement) for best-from-multiple-selections.
    pub bms_size: usize,
    pub random_walk_prob: f64,
    /// Flips without a new best before the assignment is re-randomized.
    pub restart_flips: Option<u64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            seed: 0,
            smooth_prob: 0.0003,
            hard_weight_inc: 1,
            soft_weight_cap: 100,
            bms_size: 15,
            random_walk_prob: 0.15,
            restart_flips: None,
        }
    }
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown parameter '{0}'")]
    UnknownParameter(String),
    #[error("parameter '{name}': invalid value '{value}'")]
    InvalidValue { name: String, value: String },
    #[error("parameter '{name}' = {value} is outside {range}")]
    OutOfRange {
        name: String,
        value: String,
        range: &'static str,
    },
}

/// Names of the tunable parameters, in a fixed order.
pub const PARAMETER_NAMES: [&str; 6] = [
    "smooth_prob",
    "hard_weight_inc",
    "soft_weight_cap",
    "bms_size",
    "random_walk_prob",
    "restart_flips",
];

impl SolverConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange {
                    name: name.to_string(),
                    value: p.to_string(),
                    range: "[0, 1]",
                })
            }
        };
        let positive = |name: &str, v: u64| {
            if v >= 1 {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange {
                    name: name.to_string(),
                    value: v.to_string(),
                    range: "[1, inf)",
                })
            }
        };
        prob("smooth_prob", self.smooth_prob)?;
        prob("random_walk_prob", self.random_walk_prob)?;
        positive("hard_weight_inc", self.hard_weight_inc)?;
        positive("soft_weight_cap", self.soft_weight_cap)?;
        positive("bms_size", self.bms_size as u64)?;
        if let Some(r) = self.restart_flips {
            positive("restart_flips", r)?;
        }
        Ok(())
    }

    /// Sets a parameter from its textual value. `restart_flips` accepts
    /// `none` (or `0`) to disable restarts.
    pub fn set_param(&mut self, name: &str, value: &str) -> Result<(), ConfigError> {
        let invalid = || ConfigError::InvalidValue {
            name: name.to_string(),
            value: value.to_string(),
        };
        let int = |v: &str| -> Result<u64, ConfigError> {
            if let Ok(i) = v.parse::<u64>() {
                return Ok(i);
            }
            // integers coming from real-valued samplers, e.g. "15.0"
            match v.parse::<f64>() {
                Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 => Ok(f as u64),
                _ => Err(invalid()),
            }
        };
        let real = |v: &str| v.parse::<f64>().map_err(|_| invalid());
        match name {
            "smooth_prob" => self.smooth_prob = real(value)?,
            "random_walk_prob" => self.random_walk_prob = real(value)?,
            "hard_weight_inc" => self.hard_weight_inc = int(value)?,
            "soft_weight_cap" => self.soft_weight_cap = int(value)?,
            "bms_size" => self.bms_size = int(value)? as usize,
            "restart_flips" => {
                self.restart_flips = match value.trim() {
                    "none" | "None" | "" => None,
                    v => match int(v)? {
                        0 => None,
                        r => Some(r),
                    },
                }
            }
            "seed" => self.seed = int(value)?,
            _ => return Err(ConfigError::UnknownParameter(name.to_string())),
        }
        self.validate()
    }

    /// The tunable parameters as `(name, value)` text pairs.
    pub fn params(&self) -> Vec<(&'static str, String)> {
        vec![
            ("smooth_prob", self.smooth_prob.to_string()),
            ("hard_weight_inc", self.hard_weight_inc.to_string()),
            ("soft_weight_cap", self.soft_weight_cap.to_string()),
            ("bms_size", self.bms_size.to_string()),
            ("random_walk_prob", self.random_walk_prob.to_string()),
            (
                "restart_flips",
                self.restart_flips
                    .map_or_else(|| "none".to_string(), |r| r.to_string()),
            ),
        ]
    }
}

/// How long a run may go on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "limit")]
pub enum Budget {
    /// Wall-clock seconds.
    Seconds(f64),
    /// Number of flips.
    Flips(u64),
}

impl Budget {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Budget::Seconds(s) if !(s > 0.0 && s.is_finite()) => {
                Err(format!("time budget must be positive, got {s}"))
            }
            Budget::Flips(0) => Err("flip budget must be positive".to_string()),
            _ => Ok(()),
        }
    }

    /// The time axis this budget is measured on.
    pub fn clock(&self) -> Clock {
        match self {
            Budget::Seconds(_) => Clock::Seconds,
            Budget::Flips(_) => Clock::Flips,
        }
    }

    /// Limit on the budget's own clock.
    pub fn limit(&self) -> f64 {
        match *self {
            Budget::Seconds(s) => s,
            Budget::Flips(f) => f as f64,
        }
    }
}

impl std::str::FromStr for Budget {
    type Err = String;

    /// `10s`, `2.5s`, `100000f` / `100000flips`, or a bare number of seconds.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let budget = if let Some(f) = s.strip_suffix("flips").or_else(|| s.strip_suffix('f')) {
            Budget::Flips(
                f.trim()
                    .parse()
                    .map_err(|_| format!("invalid flip budget '{s}'"))?,
            )
        } else {
            let secs = s.strip_suffix('s').unwrap_or(s);
            Budget::Seconds(
                secs.trim()
                    .parse()
                    .map_err(|_| format!("invalid budget '{s}'"))?,
            )
        };
        budget.validate()?;
        Ok(budget)
    }
}

/// Time axis used to read a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    Seconds,
    Flips,
}

impl std::str::FromStr for Clock {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "seconds" | "wall" | "time" => Ok(Clock::Seconds),
            "flips" => Ok(Clock::Flips),
            _ => Err(format!("unknown clock '{s}' (expected seconds|flips)")),
        }
    }
}

/// A new best feasible solution found during a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEvent {
    pub elapsed: f64,
    pub flips: u64,
    pub cost: u64,
}

impl TrajectoryEvent {
    pub fn time(&self, clock: Clock) -> f64 {
        match clock {
            Clock::Seconds => self.elapsed,
            Clock::Flips => self.flips as f64,
        }
    }
}

/// Improvement events of one run, in order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Trajectory(Vec<TrajectoryEvent>);

impl Trajectory {
    pub fn new() -> Self {
        Trajectory(Vec::new())
    }

    /// Wraps events after checking the ordering invariants.
    pub fn from_events(events: Vec<TrajectoryEvent>) -> Result<Self, String> {
        let t = Trajectory(events);
        t.check()?;
        Ok(t)
    }

    /// Times and flips non-decreasing, costs strictly decreasing.
    pub fn check(&self) -> Result<(), String> {
        for (i, w) in self.0.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            if !(b.elapsed >= a.elapsed && b.flips >= a.flips) {
                return Err(format!("event {} goes back in time", i + 1));
            }
            if b.cost >= a.cost {
                return Err(format!("event {} does not improve the cost", i + 1));
            }
        }
        if self.0.iter().any(|e| e.elapsed.is_nan() || e.elapsed < 0.0) {
            return Err("negative elapsed time".to_string());
        }
        Ok(())
    }

    pub fn push(&mut self, event: TrajectoryEvent) {
        self.0.push(event);
    }

    pub fn events(&self) -> &[TrajectoryEvent] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn final_cost(&self) -> Option<u64> {
        self.0.last().map(|e| e.cost)
    }

    /// Cost of the last event at or before `t`.
    pub fn best_cost_at(&self, t: f64, clock: Clock) -> Option<u64> {
        let idx = self.0.partition_point(|e| e.time(clock) <= t);
        idx.checked_sub(1).map(|i| self.0[i].cost)
    }
}

/// Outcome of one solver run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub best_cost: Option<u64>,
    pub best_assignment: Option<Assignment>,
    pub total_flips: u64,
    pub total_elapsed: f64,
    /// Assignments behind each trajectory event, kept only on request.
    pub event_assignments: Vec<Assignment>,
}

impl RunResult {
    fn empty(elapsed: f64) -> Self {
        RunResult {
            trajectory: Trajectory::new(),
            best_cost: None,
            best_assignment: None,
            total_flips: 0,
            total_elapsed: elapsed,
            event_assignments: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SolveOptions {
    pub keep_event_assignments: bool,
}

#[derive(Error, Debug, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("invalid budget: {0}")]
    Budget(String),
}

/// Positions of members in a dense list, for O(1) insert/remove/sample.
#[derive(Clone, Debug)]
struct IndexedSet {
    items: Vec<u32>,
    pos: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl IndexedSet {
    fn new(universe: usize) -> Self {
        IndexedSet {
            items: Vec::new(),
            pos: vec![ABSENT; universe],
        }
    }

    fn contains(&self, x: u32) -> bool {
        self.pos[x as usize] != ABSENT
    }

    fn insert(&mut self, x: u32) {
        if !self.contains(x) {
            self.pos[x as usize] = self.items.len() as u32;
            self.items.push(x);
        }
    }

    fn remove(&mut self, x: u32) {
        let p = self.pos[x as usize];
        if p == ABSENT {
            return;
        }
        let last = self.items.pop().expect("non-empty");
        if last != x {
            self.items[p as usize] = last;
            self.pos[last as usize] = p;
        }
        self.pos[x as usize] = ABSENT;
    }

    fn clear(&mut self) {
        for &x in &self.items {
            self.pos[x as usize] = ABSENT;
        }
        self.items.clear();
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn sorted(&self) -> Vec<u32> {
        let mut v = self.items.clone();
        v.sort_unstable();
        v
    }
}

/// Mismatch between incrementally maintained and recomputed search state.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
#[error("bookkeeping mismatch in {what}")]
pub struct Discrepancy {
    pub what: String,
}

/// Mutable search state over a borrowed instance.
///
/// Clause literals are stored flat, encoded `var << 1 | negated` with
/// zero-based variables. Occurrence entries are `clause << 1 | negated`.
pub struct Searcher<'a> {
    instance: &'a WcnfInstance,
    config: SolverConfig,
    rng: ChaCha8Rng,

    num_vars: usize,
    num_hard: usize,
    clause_start: Vec<usize>,
    clause_lits: Vec<u32>,
    orig_weight: Vec<u64>,
    occ_start: Vec<usize>,
    occ: Vec<u32>,

    values: Vec<bool>,
    sat_count: Vec<u32>,
    /// XOR of the variables with a true literal; the critical variable when `sat_count == 1`.
    sat_xor: Vec<u32>,
    weight: Vec<u64>,
    hard_score: Vec<i64>,
    soft_score: Vec<i64>,
    falsified_hard: IndexedSet,
    falsified_soft: IndexedSet,
    decreasing: IndexedSet,
    last_flip: Vec<u64>,
    soft_cost: u64,
    flips: u64,
}

impl<'a> Searcher<'a> {
    /// Builds the search state with a uniformly random assignment.
    pub fn new(instance: &'a WcnfInstance, config: SolverConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let num_vars = instance.num_vars();
        let clauses = instance
            .hard_clauses()
            .iter()
            .chain(instance.soft_clauses());
        let num_clauses = instance.num_clauses();
        let mut clause_start = Vec::with_capacity(num_clauses + 1);
        let mut clause_lits = Vec::new();
        let mut orig_weight = Vec::with_capacity(num_clauses);
        let mut occ_count = vec![0usize; num_vars + 1];
        clause_start.push(0);
        for clause in clauses {
            for lit in clause.literals() {
                clause_lits.push(((lit.index() as u32) << 1) | lit.is_negated() as u32);
                occ_count[lit.index()] += 1;
            }
            clause_start.push(clause_lits.len());
            orig_weight.push(clause.weight().unwrap_or(0));
        }
        let mut occ_start = vec![0usize; num_vars + 1];
        for v in 0..num_vars {
            occ_start[v + 1] = occ_start[v] + occ_count[v];
        }
        let mut fill = occ_start.clone();
        let mut occ = vec![0u32; clause_lits.len()];
        for c in 0..num_clauses {
            for &code in &clause_lits[clause_start[c]..clause_start[c + 1]] {
                let v = (code >> 1) as usize;
                occ[fill[v]] = ((c as u32) << 1) | (code & 1);
                fill[v] += 1;
            }
        }

        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut searcher = Searcher {
            instance,
            config,
            rng,
            num_vars,
            num_hard: instance.hard_clauses().len(),
            clause_start,
            clause_lits,
            orig_weight,
            occ_start,
            occ,
            values: vec![false; num_vars],
            sat_count: vec![0; num_clauses],
            sat_xor: vec![0; num_clauses],
            weight: vec![1; num_clauses],
            hard_score: vec![0; num_vars],
            soft_score: vec![0; num_vars],
            falsified_hard: IndexedSet::new(num_clauses),
            falsified_soft: IndexedSet::new(num_clauses),
            decreasing: IndexedSet::new(num_vars),
            last_flip: vec![0; num_vars],
            soft_cost: 0,
            flips: 0,
        };
        searcher.randomize();
        Ok(searcher)
    }

    fn num_clauses(&self) -> usize {
        self.orig_weight.len()
    }

    fn is_hard(&self, c: usize) -> bool {
        c < self.num_hard
    }

    fn lits(&self, c: usize) -> &[u32] {
        &self.clause_lits[self.clause_start[c]..self.clause_start[c + 1]]
    }

    /// Draws a fresh uniform assignment and rebuilds all derived state.
    /// Dynamic clause weights are kept.
    pub fn randomize(&mut self) {
        for v in 0..self.num_vars {
            self.values[v] = self.rng.random_bool(0.5);
        }
        self.rebuild();
    }

    fn rebuild(&mut self) {
        let derived = self.derive_from_scratch();
        self.sat_count = derived.sat_count;
        self.sat_xor = derived.sat_xor;
        self.hard_score = derived.hard_score;
        self.soft_score = derived.soft_score;
        self.soft_cost = derived.soft_cost;
        self.falsified_hard.clear();
        self.falsified_soft.clear();
        for c in derived.falsified {
            if self.is_hard(c as usize) {
                self.falsified_hard.insert(c);
            } else {
                self.falsified_soft.insert(c);
            }
        }
        self.decreasing.clear();
        for v in 0..self.num_vars {
            self.refresh(v);
        }
    }

    fn derive_from_scratch(&self) -> Derived {
        let m = self.num_clauses();
        let mut d = Derived {
            sat_count: vec![0; m],
            sat_xor: vec![0; m],
            hard_score: vec![0; self.num_vars],
            soft_score: vec![0; self.num_vars],
            falsified: Vec::new(),
            soft_cost: self.instance.cost_offset(),
        };
        for c in 0..m {
            for &code in self.lits(c) {
                let v = code >> 1;
                if self.values[v as usize] != (code & 1 == 1) {
                    d.sat_count[c] += 1;
                    d.sat_xor[c] ^= v;
                }
            }
            let w = self.weight[c] as i64;
            let scores = if self.is_hard(c) {
                &mut d.hard_score
            } else {
                &mut d.soft_score
            };
            match d.sat_count[c] {
                0 => {
                    for &code in &self.clause_lits[self.clause_start[c]..self.clause_start[c + 1]] {
                        scores[(code >> 1) as usize] += w;
                    }
                    d.falsified.push(c as u32);
                    if !self.is_hard(c) {
                        d.soft_cost += self.orig_weight[c];
                    }
                }
                1 => scores[d.sat_xor[c] as usize] -= w,
                _ => {}
            }
        }
        d
    }

    fn is_decreasing(&self, v: usize) -> bool {
        let h = self.hard_score[v];
        h > 0 || (h == 0 && self.soft_score[v] > 0)
    }

    fn refresh(&mut self, v: usize) {
        if self.is_decreasing(v) {
            self.decreasing.insert(v as u32);
        } else {
            self.decreasing.remove(v as u32);
        }
    }

    fn add_score(&mut self, v: usize, hard: bool, delta: i64) {
        if hard {
            self.hard_score[v] += delta;
        } else {
            self.soft_score[v] += delta;
        }
        self.refresh(v);
    }

    /// Flips variable `v` (zero-based) and updates all incremental state.
    pub fn flip(&mut self, v: usize) {
        self.values[v] = !self.values[v];
        let now_true_polarity = self.values[v];
        for k in self.occ_start[v]..self.occ_start[v + 1] {
            let entry = self.occ[k];
            let c = (entry >> 1) as usize;
            let negated = entry & 1 == 1;
            let hard = self.is_hard(c);
            let w = self.weight[c] as i64;
            let (start, end) = (self.clause_start[c], self.clause_start[c + 1]);
            if now_true_polarity != negated {
                self.sat_count[c] += 1;
                self.sat_xor[c] ^= v as u32;
                match self.sat_count[c] {
                    1 => {
                        if hard {
                            self.falsified_hard.remove(c as u32);
                        } else {
                            self.falsified_soft.remove(c as u32);
                            self.soft_cost -= self.orig_weight[c];
                        }
                        for i in start..end {
                            let u = (self.clause_lits[i] >> 1) as usize;
                            self.add_score(u, hard, -w);
                        }
                        self.add_score(v, hard, -w);
                    }
                    2 => {
                        let prev = (self.sat_xor[c] ^ v as u32) as usize;
                        self.add_score(prev, hard, w);
                    }
                    _ => {}
                }
            } else {
                self.sat_count[c] -= 1;
                self.sat_xor[c] ^= v as u32;
                match self.sat_count[c] {
                    0 => {
                        if hard {
                            self.falsified_hard.insert(c as u32);
                        } else {
                            self.falsified_soft.insert(c as u32);
                            self.soft_cost += self.orig_weight[c];
                        }
                        for i in start..end {
                            let u = (self.clause_lits[i] >> 1) as usize;
                            self.add_score(u, hard, w);
                        }
                        self.add_score(v, hard, w);
                    }
                    1 => {
                        let critical = self.sat_xor[c] as usize;
                        self.add_score(critical, hard, -w);
                    }
                    _ => {}
                }
            }
        }
        self.flips += 1;
        self.last_flip[v] = self.flips;
    }

    /// Lexicographic (hard, soft) score comparison; ties go to the variable
    /// flipped least recently.
    fn better(&self, a: usize, b: usize) -> bool {
        let ka = (self.hard_score[a], self.soft_score[a]);
        let kb = (self.hard_score[b], self.soft_score[b]);
        ka > kb || (ka == kb && self.last_flip[a] < self.last_flip[b])
    }

    fn pick_bms(&mut self) -> usize {
        let n = self.decreasing.len();
        let mut best = self.decreasing.items[self.rng.random_range(0..n)] as usize;
        for _ in 1..self.config.bms_size {
            let cand = self.decreasing.items[self.rng.random_range(0..n)] as usize;
            if self.better(cand, best) {
                best = cand;
            }
        }
        best
    }

    fn update_weights(&mut self) {
        if self.rng.random_bool(self.config.smooth_prob) {
            self.smooth_weights();
        } else {
            self.increase_weights();
        }
    }

    fn increase_weights(&mut self) {
        let inc = self.config.hard_weight_inc;
        for i in 0..self.falsified_hard.len() {
            let c = self.falsified_hard.items[i] as usize;
            self.weight[c] += inc;
            for k in self.clause_start[c]..self.clause_start[c + 1] {
                let u = (self.clause_lits[k] >> 1) as usize;
                self.add_score(u, true, inc as i64);
            }
        }
        let cap = self.config.soft_weight_cap;
        for i in 0..self.falsified_soft.len() {
            let c = self.falsified_soft.items[i] as usize;
            if self.weight[c] < cap {
                self.weight[c] += 1;
                for k in self.clause_start[c]..self.clause_start[c + 1] {
                    let u = (self.clause_lits[k] >> 1) as usize;
                    self.add_score(u, false, 1);
                }
            }
        }
    }

    fn smooth_weights(&mut self) {
        for c in self.num_hard..self.num_clauses() {
            if self.sat_count[c] > 0 && self.weight[c] > 1 {
                self.weight[c] -= 1;
                if self.sat_count[c] == 1 {
                    let critical = self.sat_xor[c] as usize;
                    self.add_score(critical, false, 1);
                }
            }
        }
    }

    fn pick_in_falsified_clause(&mut self) -> usize {
        let set = if self.falsified_hard.is_empty() {
            &self.falsified_soft
        } else {
            &self.falsified_hard
        };
        let c = set.items[self.rng.random_range(0..set.len())] as usize;
        let (start, end) = (self.clause_start[c], self.clause_start[c + 1]);
        if self.rng.random_bool(self.config.random_walk_prob) {
            let k = self.rng.random_range(start..end);
            return (self.clause_lits[k] >> 1) as usize;
        }
        let mut best = (self.clause_lits[start] >> 1) as usize;
        for k in start + 1..end {
            let u = (self.clause_lits[k] >> 1) as usize;
            if self.better(u, best) {
                best = u;
            }
        }
        best
    }

    /// Performs one search step. Returns the flipped variable, or `None` when
    /// no clause is falsified (nothing left to improve).
    pub fn step(&mut self) -> Option<usize> {
        if self.falsified_hard.is_empty() && self.falsified_soft.is_empty() {
            return None;
        }
        let v = if !self.decreasing.is_empty() {
            self.pick_bms()
        } else {
            self.update_weights();
            self.pick_in_falsified_clause()
        };
        self.flip(v);
        Some(v)
    }

    pub fn is_feasible(&self) -> bool {
        self.falsified_hard.is_empty() && !self.instance.is_trivially_infeasible()
    }

    /// Soft cost of the current assignment under the original weights.
    pub fn soft_cost(&self) -> u64 {
        self.soft_cost
    }

    pub fn flips(&self) -> u64 {
        self.flips
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn assignment(&self) -> Assignment {
        Assignment::new(self.values.clone())
    }

    pub fn hard_score(&self, v: usize) -> i64 {
        self.hard_score[v]
    }

    pub fn soft_score(&self, v: usize) -> i64 {
        self.soft_score[v]
    }

    /// Recomputes every derived quantity from the assignment and dynamic
    /// weights and compares it with the incremental state.
    pub fn verify_bookkeeping(&self) -> Result<(), Discrepancy> {
        let d = self.derive_from_scratch();
        let fail = |what: &str| {
            Err(Discrepancy {
                what: what.to_string(),
            })
        };
        if d.sat_count != self.sat_count {
            return fail("satisfied-literal counts");
        }
        if d.sat_xor != self.sat_xor {
            return fail("critical-variable tracking");
        }
        if d.hard_score != self.hard_score {
            return fail("hard scores");
        }
        if d.soft_score != self.soft_score {
            return fail("soft scores");
        }
        if d.soft_cost != self.soft_cost {
            return fail("soft cost");
        }
        let mut falsified = self.falsified_hard.sorted();
        falsified.extend(self.falsified_soft.sorted());
        if d.falsified != falsified {
            return fail("falsified clause sets");
        }
        let expected: Vec<u32> = (0..self.num_vars)
            .filter(|&v| {
                let h = d.hard_score[v];
                h > 0 || (h == 0 && d.soft_score[v] > 0)
            })
            .map(|v| v as u32)
            .collect();
        if expected != self.decreasing.sorted() {
            return fail("decreasing-variable set");
        }
        let report = self
            .instance
            .cost(&self.assignment())
            .expect("assignment sized to the instance");
        if report.soft_cost != self.soft_cost || report.hard_violations != self.falsified_hard.len()
        {
            return fail("cost against full evaluation");
        }
        Ok(())
    }
}

struct Derived {
    sat_count: Vec<u32>,
    sat_xor: Vec<u32>,
    hard_score: Vec<i64>,
    soft_score: Vec<i64>,
    falsified: Vec<u32>,
    soft_cost: u64,
}

/// Clock samples in wall-clock mode happen every this many flips.
const CLOCK_INTERVAL: u64 = 1024;

pub fn solve(
    instance: &WcnfInstance,
    config: &SolverConfig,
    budget: Budget,
) -> Result<RunResult, SolveError> {
    solve_with(instance, config, budget, SolveOptions::default())
}

pub fn solve_with(
    instance: &WcnfInstance,
    config: &SolverConfig,
    budget: Budget,
    options: SolveOptions,
) -> Result<RunResult, SolveError> {
    budget.validate().map_err(SolveError::Budget)?;
    let start = Instant::now();
    let mut search = Searcher::new(instance, config.clone())?;
    if instance.is_trivially_infeasible() {
        return Ok(RunResult::empty(start.elapsed().as_secs_f64()));
    }
    let (flip_limit, time_limit) = match budget {
        Budget::Flips(f) => (f, f64::INFINITY),
        Budget::Seconds(s) => (u64::MAX, s),
    };

    let mut result = RunResult::empty(0.0);
    let mut since_improvement = 0u64;
    loop {
        if search.is_feasible() && result.best_cost.is_none_or(|b| search.soft_cost() < b) {
            let elapsed = start.elapsed().as_secs_f64();
            result.trajectory.push(TrajectoryEvent {
                elapsed,
                flips: search.flips(),
                cost: search.soft_cost(),
            });
            result.best_cost = Some(search.soft_cost());
            result.best_assignment = Some(search.assignment());
            if options.keep_event_assignments {
                result.event_assignments.push(search.assignment());
            }
            since_improvement = 0;
            if elapsed >= time_limit {
                break;
            }
        }
        if search.flips() >= flip_limit {
            break;
        }
        if search.flips() % CLOCK_INTERVAL == 0
            && search.flips() > 0
            && start.elapsed().as_secs_f64() >= time_limit
        {
            break;
        }
        if search.step().is_none() {
            break;
        }
        since_improvement += 1;
        if let Some(r) = config.restart_flips {
            if since_improvement >= r {
                search.randomize();
                since_improvement = 0;
            }
        }
    }
    result.total_flips = search.flips();
    result.total_elapsed = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Independent check that the reported best assignment is feasible and has
/// the reported cost.
pub fn check_solution(instance: &WcnfInstance, result: &RunResult) -> bool {
    let (Some(assignment), Some(cost)) = (&result.best_assignment, result.best_cost) else {
        return false;
    };
    match instance.cost(assignment) {
        Ok(report) => report.feasible && report.soft_cost == cost,
        Err(_) => false,
    }
}
